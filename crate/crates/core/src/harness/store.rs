use std::collections::{BTreeMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::spec::SweepSpec;
use crate::agent::IterationLog;
use crate::error::{Error, Result};
use crate::metrics::RunRecord;
use crate::neural::{CHECKPOINT_FORMAT, CHECKPOINT_VERSION};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const RECORDS_FILE: &str = "records.ndjson";
pub const LOGS_FILE: &str = "train_logs.ndjson";
pub const TIMINGS_FILE: &str = "timings.ndjson";
pub const MANIFEST_FORMAT: &str = "pmdlab-manifest";
pub const MANIFEST_VERSION: u32 = 1;

/// Version string recorded with every sweep.
pub fn code_version() -> String {
    format!("pmdlab {}", env!("CARGO_PKG_VERSION"))
}

/// Evaluation outcome of one `(config, env, seed)` run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredRun {
    pub config_id: String,
    pub alpha: f64,
    pub lambda: f64,
    pub env: String,
    pub seed_index: usize,
    pub seed: u64,
    pub eval_returns: Vec<f64>,
}

impl StoredRun {
    pub fn key(&self) -> RunId {
        RunId {
            config_id: self.config_id.clone(),
            env: self.env.clone(),
            seed_index: self.seed_index,
        }
    }

    pub fn to_record(&self) -> RunRecord {
        RunRecord {
            config_id: self.config_id.clone(),
            env: self.env.clone(),
            seed: self.seed,
            eval_returns: self.eval_returns.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RunId {
    pub config_id: String,
    pub env: String,
    pub seed_index: usize,
}

/// One training-log row tagged with its run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub config_id: String,
    pub env: String,
    pub seed_index: usize,
    #[serde(flatten)]
    pub log: IterationLog,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub config_id: String,
    pub env: String,
    pub seed_index: usize,
    pub wall_seconds: f64,
    pub iterations: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Pending,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEntry {
    pub config_id: String,
    pub env: String,
    pub seed_index: usize,
    pub seed: u64,
    pub status: RunStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// File names inside a sweep directory and the checkpoint encoding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifacts {
    pub records: String,
    pub train_logs: String,
    pub timings: String,
    pub checkpoint_format: String,
}

impl Default for Artifacts {
    fn default() -> Self {
        Artifacts {
            records: RECORDS_FILE.into(),
            train_logs: LOGS_FILE.into(),
            timings: TIMINGS_FILE.into(),
            checkpoint_format: format!(
                "{CHECKPOINT_FORMAT} v{CHECKPOINT_VERSION}: JSON object with `sizes` and per-layer \
                 `rows`, `cols`, row-major `weight` (fan_in x fan_out) and `bias`"
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format: String,
    pub version: u32,
    pub sweep_id: String,
    pub spec_hash: String,
    pub code_version: String,
    pub spec: SweepSpec,
    pub artifacts: Artifacts,
    pub runs: Vec<RunEntry>,
}

impl RunManifest {
    pub fn new(spec: &SweepSpec) -> Self {
        RunManifest {
            format: MANIFEST_FORMAT.into(),
            version: MANIFEST_VERSION,
            sweep_id: spec.sweep_id.clone(),
            spec_hash: spec.content_hash(),
            code_version: code_version(),
            spec: spec.clone(),
            artifacts: Artifacts::default(),
            runs: spec
                .runs()
                .into_iter()
                .map(|k| RunEntry {
                    config_id: k.config_id,
                    env: k.env_id,
                    seed_index: k.seed_index,
                    seed: k.seed,
                    status: RunStatus::Pending,
                    error: None,
                })
                .collect(),
        }
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let m: RunManifest =
            serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))?;
        if m.format != MANIFEST_FORMAT || m.version != MANIFEST_VERSION {
            return Err(Error::Config(format!(
                "{} is not a v{MANIFEST_VERSION} manifest",
                path.display()
            )));
        }
        Ok(m)
    }

    /// Atomic replace via a temporary file.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        let tmp = dir.join(format!("{MANIFEST_FILE}.tmp"));
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(&tmp, text + "\n").map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))
    }

    pub fn count(&self, status: RunStatus) -> usize {
        self.runs.iter().filter(|r| r.status == status).count()
    }

    pub fn failed(&self) -> Vec<&RunEntry> {
        self.runs
            .iter()
            .filter(|r| r.status == RunStatus::Failed)
            .collect()
    }
}

pub(crate) fn read_ndjson<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(Error::io(path, e)),
    };
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::json(format!("{} line {}", path.display(), i + 1), e))?,
        );
    }
    Ok(out)
}

pub(crate) fn write_ndjson<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let tmp = path.with_extension("ndjson.tmp");
    {
        let file = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        let mut w = BufWriter::new(file);
        for r in rows {
            serde_json::to_writer(&mut w, r).expect("row serializes");
            w.write_all(b"\n").map_err(|e| Error::io(&tmp, e))?;
        }
        w.flush().map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn append_ndjson<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in rows {
        serde_json::to_writer(&mut w, r).expect("row serializes");
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Append-only table of run records with per-iteration logs, backed by NDJSON files.
#[derive(Debug)]
pub struct ResultStore {
    dir: PathBuf,
    records: Vec<StoredRun>,
    keys: HashSet<RunId>,
}

impl ResultStore {
    /// Opens (or creates) the store in `dir`, loading existing records.
    pub fn open(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let records: Vec<StoredRun> = read_ndjson(&dir.join(RECORDS_FILE))?;
        let mut keys = HashSet::new();
        for r in &records {
            if !keys.insert(r.key()) {
                return Err(Error::Duplicate(format!(
                    "{} holds two records for {} / {} / seed {}",
                    dir.display(),
                    r.config_id,
                    r.env,
                    r.seed_index
                )));
            }
        }
        Ok(ResultStore {
            dir: dir.to_path_buf(),
            records,
            keys,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn records(&self) -> &[StoredRun] {
        &self.records
    }

    pub fn contains(&self, id: &RunId) -> bool {
        self.keys.contains(id)
    }

    /// Appends one record with its logs and timing. Duplicates are rejected.
    pub fn insert(&mut self, record: StoredRun, logs: &[LogRow], timing: &TimingRow) -> Result<()> {
        let key = record.key();
        if self.keys.contains(&key) {
            return Err(Error::Duplicate(format!(
                "record for {} / {} / seed {} already stored",
                key.config_id, key.env, key.seed_index
            )));
        }
        append_ndjson(&self.dir.join(LOGS_FILE), logs)?;
        append_ndjson(&self.dir.join(TIMINGS_FILE), std::slice::from_ref(timing))?;
        append_ndjson(&self.dir.join(RECORDS_FILE), std::slice::from_ref(&record))?;
        self.keys.insert(key);
        self.records.push(record);
        Ok(())
    }

    pub fn logs(&self) -> Result<Vec<LogRow>> {
        read_ndjson(&self.dir.join(LOGS_FILE))
    }

    pub fn timings(&self) -> Result<Vec<TimingRow>> {
        read_ndjson(&self.dir.join(TIMINGS_FILE))
    }

    /// Rewrites the files in canonical run order, dropping log rows of runs without a record
    /// and repeated log rows left by interrupted writes.
    pub fn canonicalize(&mut self, order: &BTreeMap<RunId, usize>) -> Result<()> {
        let rank = |id: &RunId| order.get(id).copied().unwrap_or(usize::MAX);
        self.records.sort_by_key(|r| (rank(&r.key()), r.key()));
        write_ndjson(&self.dir.join(RECORDS_FILE), &self.records)?;

        let mut logs = self.logs()?;
        logs.retain(|l| {
            self.keys.contains(&RunId {
                config_id: l.config_id.clone(),
                env: l.env.clone(),
                seed_index: l.seed_index,
            })
        });
        let key = |l: &LogRow| {
            let id = RunId {
                config_id: l.config_id.clone(),
                env: l.env.clone(),
                seed_index: l.seed_index,
            };
            (rank(&id), id, l.log.iteration)
        };
        logs.sort_by_key(key);
        logs.dedup_by(|a, b| key(a) == key(b));
        write_ndjson(&self.dir.join(LOGS_FILE), &logs)?;

        let mut timings = self.timings()?;
        let tkey = |t: &TimingRow| {
            let id = RunId {
                config_id: t.config_id.clone(),
                env: t.env.clone(),
                seed_index: t.seed_index,
            };
            (rank(&id), id)
        };
        timings.sort_by(|a, b| tkey(a).cmp(&tkey(b)));
        timings.dedup_by(|a, b| tkey(a) == tkey(b));
        write_ndjson(&self.dir.join(TIMINGS_FILE), &timings)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(cid: &str, seed_index: usize) -> StoredRun {
        StoredRun {
            config_id: cid.into(),
            alpha: 0.1,
            lambda: 0.2,
            env: "cartpole".into(),
            seed_index,
            seed: 7,
            eval_returns: vec![1.0, 2.5],
        }
    }

    fn timing(cid: &str, seed_index: usize) -> TimingRow {
        TimingRow {
            config_id: cid.into(),
            env: "cartpole".into(),
            seed_index,
            wall_seconds: 0.5,
            iterations: 3,
        }
    }

    #[test]
    fn insert_reload_and_reject_duplicates() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = ResultStore::open(dir.path()).unwrap();
        store.insert(run("a", 0), &[], &timing("a", 0)).unwrap();
        store.insert(run("a", 1), &[], &timing("a", 1)).unwrap();
        assert!(matches!(
            store.insert(run("a", 0), &[], &timing("a", 0)),
            Err(Error::Duplicate(_))
        ));
        let again = ResultStore::open(dir.path()).unwrap();
        assert_eq!(again.records(), store.records());
        assert_eq!(again.timings().unwrap().len(), 2);
    }

    #[test]
    fn duplicate_lines_on_disk_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        let line = serde_json::to_string(&run("a", 0)).unwrap();
        fs::write(dir.path().join(RECORDS_FILE), format!("{line}\n{line}\n")).unwrap();
        assert!(matches!(
            ResultStore::open(dir.path()),
            Err(Error::Duplicate(_))
        ));
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SweepSpec::desk(
            "m",
            crate::regularizers::RegularizerSpec::NegShannon,
            crate::regularizers::DriftSpec::ReverseKL,
        );
        let m = RunManifest::new(&spec);
        assert_eq!(m.count(RunStatus::Pending), spec.run_count());
        m.save(dir.path()).unwrap();
        assert_eq!(RunManifest::load(dir.path()).unwrap(), m);
    }
}
