use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc;
use std::time::Instant;

use rayon::prelude::*;

use super::spec::{RunKey, SweepSpec};
use super::store::{
    LogRow, ResultStore, RunId, RunManifest, RunStatus, StoredRun, TimingRow, MANIFEST_FILE,
    RECORDS_FILE,
};
use crate::agent::train_and_evaluate;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SweepOptions {
    /// Worker threads; 0 means one per available core.
    pub parallelism: usize,
    /// Continue an existing store instead of refusing to touch it.
    pub resume: bool,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            parallelism: 1,
            resume: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SweepSummary {
    pub scheduled: usize,
    pub skipped: usize,
    pub executed: usize,
    pub failed: usize,
}

struct Finished {
    key: RunKey,
    outcome: Result<(StoredRun, Vec<LogRow>, TimingRow)>,
}

fn execute(spec: &SweepSpec, key: &RunKey) -> Result<(StoredRun, Vec<LogRow>, TimingRow)> {
    let config = spec.agent_config(key.alpha, key.lambda);
    let start = Instant::now();
    let run = train_and_evaluate(&config, &key.env, key.seed, spec.evals_per_seed)?;
    let wall_seconds = start.elapsed().as_secs_f64();
    let logs = run
        .logs
        .iter()
        .filter(|l| l.iteration % spec.log_every == 0 || l.iteration == config.iterations())
        .map(|l| LogRow {
            config_id: key.config_id.clone(),
            env: key.env_id.clone(),
            seed_index: key.seed_index,
            log: l.clone(),
        })
        .collect();
    let timing = TimingRow {
        config_id: key.config_id.clone(),
        env: key.env_id.clone(),
        seed_index: key.seed_index,
        wall_seconds,
        iterations: run.logs.len() as u64,
    };
    let record = StoredRun {
        config_id: key.config_id.clone(),
        alpha: key.alpha,
        lambda: key.lambda,
        env: key.env_id.clone(),
        seed_index: key.seed_index,
        seed: key.seed,
        eval_returns: run.eval_returns,
    };
    Ok((record, logs, timing))
}

fn run_id(k: &RunKey) -> RunId {
    RunId {
        config_id: k.config_id.clone(),
        env: k.env_id.clone(),
        seed_index: k.seed_index,
    }
}

/// Executes every run of `spec` that `dir` does not already hold.
///
/// Workers train independently; the calling thread is the only writer.
/// Numerical failures mark the run failed and the sweep continues; storage
/// errors abort. Finished stores are rewritten in canonical order, so the
/// record and log files depend only on the spec.
pub fn run_sweep(spec: &SweepSpec, dir: &Path, options: SweepOptions) -> Result<SweepSummary> {
    spec.validate()?;
    let has_manifest = dir.join(MANIFEST_FILE).exists();
    let has_records = dir.join(RECORDS_FILE).exists();
    let mut manifest = if has_manifest {
        let m = RunManifest::load(dir)?;
        if m.spec_hash != spec.content_hash() {
            return Err(Error::Usage(format!(
                "{} holds a different sweep ({}); use a fresh directory",
                dir.display(),
                m.sweep_id
            )));
        }
        if !options.resume {
            return Err(Error::Usage(format!(
                "{} already holds sweep '{}'; pass --resume to continue it",
                dir.display(),
                m.sweep_id
            )));
        }
        m
    } else {
        if has_records {
            return Err(Error::Usage(format!(
                "{} has records but no manifest",
                dir.display()
            )));
        }
        RunManifest::new(spec)
    };
    manifest.code_version = super::store::code_version();

    let mut store = ResultStore::open(dir)?;
    let keys = spec.runs();
    let order: BTreeMap<RunId, usize> = keys
        .iter()
        .enumerate()
        .map(|(i, k)| (run_id(k), i))
        .collect();
    let index: HashMap<RunId, usize> = order.iter().map(|(k, &i)| (k.clone(), i)).collect();
    for r in store.records() {
        if !index.contains_key(&r.key()) {
            return Err(Error::Usage(format!(
                "store holds a run outside the spec: {} / {} / seed {}",
                r.config_id, r.env, r.seed_index
            )));
        }
    }
    for (entry, key) in manifest.runs.iter_mut().zip(&keys) {
        if store.contains(&run_id(key)) {
            entry.status = RunStatus::Done;
            entry.error = None;
        }
    }
    let pending: Vec<RunKey> = keys
        .iter()
        .filter(|k| !store.contains(&run_id(k)))
        .cloned()
        .collect();
    let mut summary = SweepSummary {
        scheduled: keys.len(),
        skipped: keys.len() - pending.len(),
        ..SweepSummary::default()
    };
    manifest.save(dir)?;

    if !pending.is_empty() {
        let threads = if options.parallelism == 0 {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        } else {
            options.parallelism
        };
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
        let abort = AtomicBool::new(false);
        let (tx, rx) = mpsc::channel::<Finished>();
        let write_result = std::thread::scope(|scope| {
            let abort = &abort;
            let pending = &pending;
            scope.spawn(move || {
                pool.install(|| {
                    pending.par_iter().for_each_with(tx, |tx, key| {
                        if abort.load(Ordering::Relaxed) {
                            return;
                        }
                        let outcome = execute(spec, key);
                        let _ = tx.send(Finished {
                            key: key.clone(),
                            outcome,
                        });
                    })
                })
            });
            let mut result = Ok(());
            for done in rx {
                if result.is_err() {
                    continue;
                }
                let entry = &mut manifest.runs[index[&run_id(&done.key)]];
                match done.outcome {
                    Ok((record, logs, timing)) => {
                        if let Err(e) = store.insert(record, &logs, &timing) {
                            abort.store(true, Ordering::Relaxed);
                            result = Err(e);
                            continue;
                        }
                        entry.status = RunStatus::Done;
                        entry.error = None;
                        summary.executed += 1;
                    }
                    Err(e @ (Error::Io { .. } | Error::Json { .. })) => {
                        abort.store(true, Ordering::Relaxed);
                        result = Err(e);
                        continue;
                    }
                    Err(e) => {
                        entry.status = RunStatus::Failed;
                        entry.error = Some(e.to_string());
                        summary.failed += 1;
                    }
                }
            }
            result
        });
        // persist whatever finished, even when aborting
        manifest.save(dir)?;
        write_result?;
    }
    store.canonicalize(&order)?;
    manifest.save(dir)?;
    Ok(summary)
}
