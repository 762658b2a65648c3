//! Off-policy mirror-descent actor-critic with pluggable MDP and drift regularizers.
//!
//! One iteration: collect, sample a batch, snapshot the policy, take actor
//! steps, optionally step the learned temperature, take critic steps, track
//! the targets, then advance the schedules.

pub mod losses;
mod replay;
mod schedule;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use losses::{
    actor_loss, alpha_loss, critic_loss, critic_loss_with_targets, critic_targets, drift_tape,
    h_rows, h_tape, ActorTerms,
};
pub use replay::{Batch, ReplayBuffer, Transition};
pub use schedule::{
    linear_anneal, ScheduleMode, TargetWeight, TemperatureSchedule, LEARNED_ALPHA_INIT,
};

use crate::env::{EnvConfig, EnvState};
use crate::error::{Error, Result};
use crate::neural::{
    layer_sizes, Adam, AdamConfig, Matrix, Mlp, PolicyHead, TwinCritic, CRITIC_OUTPUT_GAIN,
    HIDDEN_GAIN, POLICY_OUTPUT_GAIN,
};
use crate::regularizers::{h_bound, DriftSpec, RegularizerSpec};

fn default_true() -> bool {
    true
}

/// Training hyperparameters. Defaults reproduce the fixed settings of the baseline study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentConfig {
    pub regularizer: RegularizerSpec,
    pub drift: DriftSpec,
    pub alpha_schedule: TemperatureSchedule,
    pub lambda_schedule: TemperatureSchedule,
    /// `false` drops `-alpha h` from the critic target.
    #[serde(default = "default_true")]
    pub use_regularized_q: bool,
    pub gamma: f64,
    pub env_count: usize,
    pub steps_per_update: usize,
    pub batch_size: usize,
    pub critic_epochs: usize,
    pub actor_epochs: usize,
    pub tau: f64,
    pub total_env_steps: u64,
    pub learning_rate: f64,
    pub max_grad_norm: f64,
    pub buffer_capacity: usize,
    pub hidden: Vec<usize>,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            regularizer: RegularizerSpec::NegShannon,
            drift: DriftSpec::ReverseKL,
            alpha_schedule: TemperatureSchedule::constant(0.0),
            lambda_schedule: TemperatureSchedule::constant(0.0),
            use_regularized_q: true,
            gamma: 0.99,
            env_count: 16,
            steps_per_update: 256,
            batch_size: 512,
            critic_epochs: 1,
            actor_epochs: 2,
            tau: 0.95,
            total_env_steps: 1_000_000,
            learning_rate: 0.0025,
            max_grad_norm: 1.0,
            buffer_capacity: 100_000,
            hidden: vec![64, 64],
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        self.regularizer.validate()?;
        if let DriftSpec::Bregman(h) = self.drift {
            h.validate()?;
        }
        self.alpha_schedule.validate("alpha")?;
        self.lambda_schedule.validate("lambda")?;
        if self.lambda_schedule.is_learned() {
            return Err(Error::Config("lambda cannot be learned".into()));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::Config(format!(
                "gamma must lie in [0, 1), got {}",
                self.gamma
            )));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::Config(format!(
                "tau must lie in [0, 1], got {}",
                self.tau
            )));
        }
        let counts = [
            ("env_count", self.env_count),
            ("steps_per_update", self.steps_per_update),
            ("batch_size", self.batch_size),
            ("critic_epochs", self.critic_epochs),
            ("actor_epochs", self.actor_epochs),
            ("buffer_capacity", self.buffer_capacity),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.steps_per_update % self.env_count != 0 {
            return Err(Error::Config(format!(
                "steps_per_update {} is not a multiple of env_count {}",
                self.steps_per_update, self.env_count
            )));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if !(self.max_grad_norm > 0.0) {
            return Err(Error::Config("max_grad_norm must be positive".into()));
        }
        if self.hidden.iter().any(|&h| h == 0) {
            return Err(Error::Config("hidden layer sizes must be positive".into()));
        }
        Ok(())
    }

    /// Number of training iterations the budget allows (floor).
    pub fn iterations(&self) -> u64 {
        self.total_env_steps / self.steps_per_update as u64
    }
}

/// One row of the per-iteration training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub iteration: u64,
    pub env_steps: u64,
    /// Mean return of episodes that ended during this iteration's collection.
    pub mean_return: Option<f64>,
    pub episodes: usize,
    pub alpha: f64,
    pub lambda: f64,
    pub actor_loss: f64,
    pub critic_loss: f64,
    pub alpha_loss: Option<f64>,
}

/// Learned temperature state.
#[derive(Debug, Clone)]
struct LearnedAlpha {
    log_alpha: Matrix,
    opt: Adam,
    target: TargetWeight,
    /// `-h_bound(h, n)`.
    reference: f64,
}

struct Slot {
    state: EnvState,
    obs: Vec<f64>,
    ret: f64,
}

/// A complete training run: networks, optimizers, replay and live environments.
pub struct Agent {
    config: AgentConfig,
    env: EnvConfig,
    policy: PolicyHead,
    critics: TwinCritic,
    actor_opt: Adam,
    critic_opt: Adam,
    learned: Option<LearnedAlpha>,
    buffer: ReplayBuffer,
    slots: Vec<Slot>,
    rng: ChaCha8Rng,
    env_steps: u64,
    iteration: u64,
}

/// Samples an index from `probs` by inverse CDF.
pub fn sample_action<R: Rng + ?Sized>(probs: ndarray::ArrayView1<f64>, rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

fn row_matrix(rows: &[&[f64]]) -> Matrix {
    let d = rows.first().map_or(0, |r| r.len());
    Matrix::from_shape_fn((rows.len(), d), |(i, j)| rows[i][j])
}

impl Agent {
    pub fn new(config: AgentConfig, env: EnvConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        env.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (obs_dim, n) = (env.obs_dim(), env.action_count());
        let sizes = layer_sizes(obs_dim, &config.hidden, n);
        let policy = PolicyHead::new(Mlp::orthogonal(
            &sizes,
            HIDDEN_GAIN,
            POLICY_OUTPUT_GAIN,
            &mut rng,
        )?);
        let q1 = Mlp::orthogonal(&sizes, HIDDEN_GAIN, CRITIC_OUTPUT_GAIN, &mut rng)?;
        let q2 = Mlp::orthogonal(&sizes, HIDDEN_GAIN, CRITIC_OUTPUT_GAIN, &mut rng)?;
        let critics = TwinCritic::new(q1, q2)?;
        let adam = AdamConfig::new(config.learning_rate).with_clip(config.max_grad_norm);
        let actor_opt = Adam::new(adam, policy.net.params());
        let critic_opt = Adam::new(
            adam,
            critics.online[0].params().chain(critics.online[1].params()),
        );
        let learned = match config.alpha_schedule {
            TemperatureSchedule::Learned {
                target,
                initial_alpha,
            } => {
                let log_alpha = Matrix::from_elem((1, 1), initial_alpha.ln());
                Some(LearnedAlpha {
                    opt: Adam::new(adam, [&log_alpha]),
                    log_alpha,
                    target,
                    reference: -h_bound(config.regularizer, n)?,
                })
            }
            _ => None,
        };
        let mut slots = Vec::with_capacity(config.env_count);
        for _ in 0..config.env_count {
            let (state, obs) = env.reset(rng.gen())?;
            slots.push(Slot {
                state,
                obs,
                ret: 0.0,
            });
        }
        Ok(Agent {
            buffer: ReplayBuffer::new(config.buffer_capacity, obs_dim)?,
            config,
            env,
            policy,
            critics,
            actor_opt,
            critic_opt,
            learned,
            slots,
            rng,
            env_steps: 0,
            iteration: 0,
        })
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn env(&self) -> &EnvConfig {
        &self.env
    }

    pub fn policy(&self) -> &PolicyHead {
        &self.policy
    }

    pub fn critics(&self) -> &TwinCritic {
        &self.critics
    }

    pub fn critics_mut(&mut self) -> &mut TwinCritic {
        &mut self.critics
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn env_steps(&self) -> u64 {
        self.env_steps
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    /// Current `alpha` (learned or scheduled).
    pub fn alpha(&self) -> f64 {
        match &self.learned {
            Some(l) => l.log_alpha[[0, 0]].exp(),
            None => self
                .config
                .alpha_schedule
                .scheduled_value(self.env_steps, self.config.total_env_steps)
                .expect("non-learned schedule"),
        }
    }

    pub fn lambda(&self) -> f64 {
        self.config
            .lambda_schedule
            .scheduled_value(self.env_steps, self.config.total_env_steps)
            .expect("lambda is never learned")
    }

    /// Target `h_bar = w * h_bar_0` of the learned temperature at the current step.
    pub fn h_target(&self) -> Option<f64> {
        self.learned
            .as_ref()
            .map(|l| l.target.at(self.env_steps, self.config.total_env_steps) * l.reference)
    }

    /// Runs `n_steps` environment steps split evenly across the parallel instances,
    /// appending every transition. Returns the returns of episodes that finished.
    pub fn collect(&mut self, n_steps: usize) -> Result<Vec<f64>> {
        let k = self.slots.len();
        if n_steps % k != 0 {
            return Err(Error::Precondition(format!(
                "n_steps {n_steps} is not a multiple of env_count {k}"
            )));
        }
        let mut finished = Vec::new();
        for _ in 0..n_steps / k {
            let obs = row_matrix(
                &self
                    .slots
                    .iter()
                    .map(|s| s.obs.as_slice())
                    .collect::<Vec<_>>(),
            );
            let probs = self.policy.probs(&obs)?;
            for (i, slot) in self.slots.iter_mut().enumerate() {
                let a = sample_action(probs.row(i), &mut self.rng);
                let (next, step) = self.env.step(&slot.state, a)?;
                self.buffer
                    .push_parts(&slot.obs, a, step.reward, &step.observation, step.done)?;
                slot.ret += step.reward;
                if step.done {
                    finished.push(slot.ret);
                    let (state, obs) = self.env.reset(self.rng.gen())?;
                    *slot = Slot {
                        state,
                        obs,
                        ret: 0.0,
                    };
                } else {
                    slot.state = next;
                    slot.obs = step.observation;
                }
            }
        }
        Ok(finished)
    }

    /// One collect/update cycle.
    pub fn train_iteration(&mut self) -> Result<IterationLog> {
        let alpha = self.alpha();
        let lambda = self.lambda();
        let h_bar = self.h_target();

        let finished = self.collect(self.config.steps_per_update)?;
        let batch = self.buffer.sample(self.config.batch_size, &mut self.rng)?;

        // frozen quantities for this iteration
        let old_probs = self.policy.probs(&batch.obs)?;
        let q_hat = self.critics.min_online(&batch.obs)?;

        let mut actor = ActorTerms::default();
        for _ in 0..self.config.actor_epochs {
            let (terms, grads) = actor_loss(
                &self.config,
                &self.policy,
                &batch.obs,
                &q_hat,
                &old_probs,
                alpha,
                lambda,
            )?;
            self.actor_opt.step(self.policy.net.params_mut(), grads)?;
            actor = terms;
        }

        let mut alpha_loss_value = None;
        if let (Some(learned), Some(h_bar)) = (self.learned.as_mut(), h_bar) {
            let h_snap = h_rows(self.config.regularizer, &old_probs)?;
            let (j, g) = alpha_loss(&h_snap, learned.log_alpha[[0, 0]], h_bar)?;
            learned
                .opt
                .step([&mut learned.log_alpha], vec![Matrix::from_elem((1, 1), g)])?;
            alpha_loss_value = Some(j);
        }

        let targets = critic_targets(&self.config, &self.critics, &self.policy, &batch, alpha)?;
        let mut critic = 0.0;
        for _ in 0..self.config.critic_epochs {
            let (value, [g0, g1]) = critic_loss_with_targets(&self.critics, &batch, &targets)?;
            let [c0, c1] = &mut self.critics.online;
            self.critic_opt.step(
                c0.params_mut().chain(c1.params_mut()),
                g0.into_iter().chain(g1).collect(),
            )?;
            critic = value;
        }
        self.critics.polyak_update(self.config.tau)?;

        self.env_steps += self.config.steps_per_update as u64;
        self.iteration += 1;
        let episodes = finished.len();
        Ok(IterationLog {
            iteration: self.iteration,
            env_steps: self.env_steps,
            mean_return: (episodes > 0).then(|| finished.iter().sum::<f64>() / episodes as f64),
            episodes,
            alpha,
            lambda,
            actor_loss: actor.total,
            critic_loss: critic,
            alpha_loss: alpha_loss_value,
        })
    }

    /// Runs every iteration of the budget.
    pub fn train(&mut self) -> Result<Vec<IterationLog>> {
        let mut logs = Vec::with_capacity(self.config.iterations() as usize);
        while self.iteration < self.config.iterations() {
            logs.push(self.train_iteration()?);
        }
        Ok(logs)
    }

    pub fn into_policy(self) -> PolicyHead {
        self.policy
    }
}

/// Runs `episodes` full episodes with actions sampled from `policy`; returns raw returns.
pub fn evaluate(
    policy: &PolicyHead,
    env: &EnvConfig,
    episodes: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if policy.net.input_dim() != env.obs_dim() || policy.action_count() != env.action_count() {
        return Err(Error::Shape(format!(
            "policy {:?} does not fit {} (obs {}, actions {})",
            policy.net.sizes(),
            env.id(),
            env.obs_dim(),
            env.action_count()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut returns = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let (mut state, mut obs) = env.reset(rng.gen())?;
        let mut total = 0.0;
        while !state.is_done() {
            let x = row_matrix(&[&obs]);
            let probs = policy.probs(&x)?;
            let a = sample_action(probs.row(0), &mut rng);
            let (next, step) = env.step(&state, a)?;
            total += step.reward;
            obs = step.observation;
            state = next;
        }
        returns.push(total);
    }
    Ok(returns)
}

/// Outcome of [`train_and_evaluate`].
#[derive(Debug, Clone)]
pub struct TrainedRun {
    pub policy: PolicyHead,
    pub logs: Vec<IterationLog>,
    pub eval_returns: Vec<f64>,
}

/// Trains from `seed`, then evaluates `episodes` episodes with an evaluation seed derived from it.
pub fn train_and_evaluate(
    config: &AgentConfig,
    env: &EnvConfig,
    seed: u64,
    episodes: usize,
) -> Result<TrainedRun> {
    let mut agent = Agent::new(config.clone(), env.clone(), seed)?;
    let logs = agent.train()?;
    let policy = agent.into_policy();
    let eval_returns = evaluate(&policy, env, episodes, seed ^ EVAL_SEED_SALT)?;
    Ok(TrainedRun {
        policy,
        logs,
        eval_returns,
    })
}

/// Mixed into the training seed to decorrelate evaluation episodes from training resets.
pub const EVAL_SEED_SALT: u64 = 0x9E37_79B9_7F4A_7C15;
