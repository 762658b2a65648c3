use rand::Rng;

use crate::error::{Error, Result};
use crate::neural::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    pub done: bool,
}

/// A sampled minibatch in matrix form.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub obs: Matrix,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub next_obs: Matrix,
    pub dones: Vec<bool>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn from_transitions(ts: &[Transition]) -> Result<Batch> {
        let first = ts
            .first()
            .ok_or_else(|| Error::Precondition("empty batch".into()))?;
        let d = first.obs.len();
        let mut obs = Vec::with_capacity(ts.len() * d);
        let mut next = Vec::with_capacity(ts.len() * d);
        for t in ts {
            if t.obs.len() != d || t.next_obs.len() != d {
                return Err(Error::Shape("ragged observations in batch".into()));
            }
            obs.extend_from_slice(&t.obs);
            next.extend_from_slice(&t.next_obs);
        }
        let shape = (ts.len(), d);
        Ok(Batch {
            obs: Matrix::from_shape_vec(shape, obs).expect("sized above"),
            next_obs: Matrix::from_shape_vec(shape, next).expect("sized above"),
            actions: ts.iter().map(|t| t.action).collect(),
            rewards: ts.iter().map(|t| t.reward).collect(),
            dones: ts.iter().map(|t| t.done).collect(),
        })
    }
}

/// Fixed-capacity FIFO replay memory with uniform sampling (with replacement).
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    obs_dim: usize,
    obs: Vec<f64>,
    next_obs: Vec<f64>,
    actions: Vec<usize>,
    rewards: Vec<f64>,
    dones: Vec<bool>,
    /// Slot the next push writes to.
    head: usize,
    len: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, obs_dim: usize) -> Result<Self> {
        if capacity == 0 || obs_dim == 0 {
            return Err(Error::Config(
                "replay buffer needs positive capacity and width".into(),
            ));
        }
        Ok(ReplayBuffer {
            capacity,
            obs_dim,
            obs: Vec::new(),
            next_obs: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
            dones: Vec::new(),
            head: 0,
            len: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, t: Transition) -> Result<()> {
        self.push_parts(&t.obs, t.action, t.reward, &t.next_obs, t.done)
    }

    pub fn push_parts(
        &mut self,
        obs: &[f64],
        action: usize,
        reward: f64,
        next_obs: &[f64],
        done: bool,
    ) -> Result<()> {
        if obs.len() != self.obs_dim || next_obs.len() != self.obs_dim {
            return Err(Error::Shape(format!(
                "observation width {} / {} vs buffer width {}",
                obs.len(),
                next_obs.len(),
                self.obs_dim
            )));
        }
        let d = self.obs_dim;
        if self.len < self.capacity && self.head == self.actions.len() {
            self.obs.extend_from_slice(obs);
            self.next_obs.extend_from_slice(next_obs);
            self.actions.push(action);
            self.rewards.push(reward);
            self.dones.push(done);
        } else {
            let i = self.head;
            self.obs[i * d..(i + 1) * d].copy_from_slice(obs);
            self.next_obs[i * d..(i + 1) * d].copy_from_slice(next_obs);
            self.actions[i] = action;
            self.rewards[i] = reward;
            self.dones[i] = done;
        }
        self.head = (self.head + 1) % self.capacity;
        self.len = (self.len + 1).min(self.capacity);
        Ok(())
    }

    /// Transition `i` in insertion order (0 = oldest retained).
    pub fn get(&self, i: usize) -> Option<Transition> {
        if i >= self.len {
            return None;
        }
        let start = if self.len < self.capacity {
            0
        } else {
            self.head
        };
        let slot = (start + i) % self.capacity;
        Some(self.slot(slot))
    }

    fn slot(&self, s: usize) -> Transition {
        let d = self.obs_dim;
        Transition {
            obs: self.obs[s * d..(s + 1) * d].to_vec(),
            action: self.actions[s],
            reward: self.rewards[s],
            next_obs: self.next_obs[s * d..(s + 1) * d].to_vec(),
            done: self.dones[s],
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Result<Batch> {
        if self.is_empty() {
            return Err(Error::Precondition(
                "cannot sample from an empty buffer".into(),
            ));
        }
        if batch_size == 0 {
            return Err(Error::Precondition("batch size must be positive".into()));
        }
        let d = self.obs_dim;
        let mut obs = Matrix::zeros((batch_size, d));
        let mut next = Matrix::zeros((batch_size, d));
        let mut batch = Batch {
            obs: Matrix::zeros((0, d)),
            actions: Vec::with_capacity(batch_size),
            rewards: Vec::with_capacity(batch_size),
            next_obs: Matrix::zeros((0, d)),
            dones: Vec::with_capacity(batch_size),
        };
        for row in 0..batch_size {
            let s = rng.gen_range(0..self.len);
            for c in 0..d {
                obs[[row, c]] = self.obs[s * d + c];
                next[[row, c]] = self.next_obs[s * d + c];
            }
            batch.actions.push(self.actions[s]);
            batch.rewards.push(self.rewards[s]);
            batch.dones.push(self.dones[s]);
        }
        batch.obs = obs;
        batch.next_obs = next;
        Ok(batch)
    }
}
