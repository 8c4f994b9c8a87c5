//! On-disk episodes: `manifest.json`, one JSON record per tick in
//! `steps.jsonl`, and PPM frames under `frames/` deduplicated by content.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::gateway::ScriptKind;
use crate::image::RasterImage;
use crate::orchestrator::{run_experiment_observed, ExperimentConfig, ExperimentLog, OrchestratorError, TickEvent, TickObserver};
use crate::gateway::MockLab;
use crate::visualprompt::{View, PROPRIO_DIM};

pub const EPISODE_SCHEMA_VERSION: u32 = 1;
/// Nominal control period (20 Hz).
pub const TICK_MS: u64 = 50;

#[derive(Debug, Error)]
pub enum EpisodeError {
    #[error("{0} is not empty")]
    DirNotEmpty(PathBuf),
    #[error("schema: {0}")]
    SchemaError(String),
    #[error("tick gap: expected {expected}, got {got}")]
    TickGap { expected: u64, got: u64 },
    #[error("episode has no records")]
    EmptyEpisode,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Orchestrator(#[from] OrchestratorError),
}

fn schema(msg: impl Into<String>) -> EpisodeError {
    EpisodeError::SchemaError(msg.into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub schema_version: u32,
    pub t: u64,
    pub time_ms: u64,
    /// View name to frame path relative to the episode dir.
    pub view_refs: BTreeMap<String, String>,
    pub proprio: Vec<f64>,
    /// First row of the chunk being executed.
    pub action: Vec<f64>,
    pub instruction: String,
    pub prompt_flag: bool,
    pub prompted_ref: Option<String>,
    pub subtask_index: usize,
}

impl EpisodeRecord {
    fn check(&self) -> Result<(), EpisodeError> {
        if self.schema_version != EPISODE_SCHEMA_VERSION {
            return Err(schema(format!("schema_version {}", self.schema_version)));
        }
        if self.time_ms != self.t * TICK_MS {
            return Err(schema(format!("time_ms {} at tick {}", self.time_ms, self.t)));
        }
        if self.proprio.len() != PROPRIO_DIM {
            return Err(schema(format!("proprio has {} values", self.proprio.len())));
        }
        if self.action.len() != PROPRIO_DIM {
            return Err(schema(format!("action has {} values", self.action.len())));
        }
        if self.prompt_flag != self.prompted_ref.is_some() {
            return Err(schema("prompted_ref must be present exactly when prompt_flag is set"));
        }
        for v in View::ALL {
            if !self.view_refs.contains_key(v.name()) {
                return Err(schema(format!("missing view {}", v.name())));
            }
        }
        Ok(())
    }
}

/// Required manifest fields known when the episode is opened.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestStub {
    pub task_id: String,
    pub seed: u64,
    #[serde(default)]
    pub config: Value,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpisodeKind {
    Success,
    Retry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSummary {
    pub index: usize,
    pub primitive: String,
    /// Rubric category of every graded try, in order.
    pub categories: Vec<String>,
    pub successes: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeSummary {
    pub succeeded: bool,
    pub status: String,
    pub steps: Vec<StepSummary>,
}

impl OutcomeSummary {
    pub fn from_log(log: &ExperimentLog) -> Self {
        let status = serde_json::to_value(&log.status)
            .ok()
            .and_then(|v| v.get("kind").and_then(Value::as_str).map(str::to_string))
            .unwrap_or_default();
        let steps = log
            .traces
            .iter()
            .map(|t| {
                let tries: Vec<_> = t.attempts.iter().flat_map(|a| &a.outcomes).collect();
                StepSummary {
                    index: t.index,
                    primitive: t.primitive.raw_text.clone(),
                    categories: tries.iter().map(|o| o.category.clone()).collect(),
                    successes: tries.iter().map(|o| o.success).collect(),
                }
            })
            .collect();
        OutcomeSummary {
            succeeded: log.succeeded(),
            status,
            steps,
        }
    }

    /// A failed try followed by a successful one within some step.
    pub fn kind(&self) -> EpisodeKind {
        let recovered = self
            .steps
            .iter()
            .any(|s| s.successes.iter().skip_while(|ok| **ok).any(|ok| *ok));
        if recovered {
            EpisodeKind::Retry
        } else {
            EpisodeKind::Success
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeManifest {
    pub schema_version: u32,
    pub task_id: String,
    pub seed: u64,
    pub config: Value,
    pub outcome: OutcomeSummary,
    pub record_count: u64,
    pub kind: EpisodeKind,
}

fn write_sorted_json(path: &Path, v: &impl Serialize) -> Result<(), EpisodeError> {
    let v = serde_json::to_value(v).map_err(|e| schema(e.to_string()))?;
    let mut s = serde_json::to_string_pretty(&v).map_err(|e| schema(e.to_string()))?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

pub struct EpisodeWriter {
    dir: PathBuf,
    stub: ManifestStub,
    steps: BufWriter<File>,
    next_t: u64,
    by_hash: HashMap<[u8; 32], String>,
    /// Last image written per slot, to skip hashing an unchanged frame.
    last: HashMap<String, (Arc<RasterImage>, String)>,
}

pub fn open_episode(dir: &Path, stub: &Value) -> Result<EpisodeWriter, EpisodeError> {
    let stub: ManifestStub = serde_json::from_value(stub.clone()).map_err(|e| schema(e.to_string()))?;
    if stub.task_id.is_empty() {
        return Err(schema("task_id is empty"));
    }
    if dir.exists() && fs::read_dir(dir)?.next().is_some() {
        return Err(EpisodeError::DirNotEmpty(dir.to_path_buf()));
    }
    fs::create_dir_all(dir.join("frames"))?;
    write_sorted_json(&dir.join("manifest.json"), &stub)?;
    let steps = BufWriter::new(File::create(dir.join("steps.jsonl"))?);
    Ok(EpisodeWriter {
        dir: dir.to_path_buf(),
        stub,
        steps,
        next_t: 0,
        by_hash: HashMap::new(),
        last: HashMap::new(),
    })
}

impl EpisodeWriter {
    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn record_count(&self) -> u64 {
        self.next_t
    }

    /// Stores a frame unless identical bytes are already in the episode;
    /// returns the path to reference.
    pub fn write_frame(&mut self, t: u64, slot: &str, img: &Arc<RasterImage>) -> Result<String, EpisodeError> {
        if let Some((prev, path)) = self.last.get(slot) {
            if Arc::ptr_eq(prev, img) {
                return Ok(path.clone());
            }
        }
        let bytes = img.to_ppm();
        let hash: [u8; 32] = Sha256::digest(&bytes).into();
        let path = match self.by_hash.get(&hash) {
            Some(p) => p.clone(),
            None => {
                let p = format!("frames/{t:06}_{slot}.ppm");
                fs::write(self.dir.join(&p), &bytes)?;
                self.by_hash.insert(hash, p.clone());
                p
            }
        };
        self.last.insert(slot.to_string(), (img.clone(), path.clone()));
        Ok(path)
    }

    pub fn append_record(&mut self, rec: &EpisodeRecord) -> Result<(), EpisodeError> {
        if rec.t != self.next_t {
            return Err(EpisodeError::TickGap {
                expected: self.next_t,
                got: rec.t,
            });
        }
        rec.check()?;
        for r in rec.view_refs.values().chain(&rec.prompted_ref) {
            if !self.dir.join(r).is_file() {
                return Err(schema(format!("frame {r} was not written")));
            }
        }
        let v = serde_json::to_value(rec).map_err(|e| schema(e.to_string()))?;
        let line = v.to_string();
        writeln!(self.steps, "{line}")?;
        self.next_t += 1;
        Ok(())
    }

    pub fn record_tick(&mut self, ev: &TickEvent<'_>) -> Result<(), EpisodeError> {
        let obs = ev.observation;
        let mut view_refs = BTreeMap::new();
        for (view, img) in &obs.views {
            view_refs.insert(view.name().to_string(), self.write_frame(ev.t, view.name(), img)?);
        }
        let prompted_ref = match &obs.prompted {
            Some(p) => Some(self.write_frame(ev.t, "prompted", &p.rendered)?),
            None => None,
        };
        let rec = EpisodeRecord {
            schema_version: EPISODE_SCHEMA_VERSION,
            t: ev.t,
            time_ms: ev.t * TICK_MS,
            view_refs,
            proprio: obs.proprio.clone(),
            action: ev.chunk.first().cloned().unwrap_or_default(),
            instruction: obs.instruction.clone(),
            prompt_flag: obs.prompt_flag,
            prompted_ref,
            subtask_index: ev.step_no,
        };
        self.append_record(&rec)
    }

    pub fn finalize(mut self, outcome: OutcomeSummary) -> Result<EpisodeManifest, EpisodeError> {
        if self.next_t == 0 {
            return Err(EpisodeError::EmptyEpisode);
        }
        self.steps.flush()?;
        let manifest = EpisodeManifest {
            schema_version: EPISODE_SCHEMA_VERSION,
            task_id: self.stub.task_id.clone(),
            seed: self.stub.seed,
            config: self.stub.config.clone(),
            kind: outcome.kind(),
            outcome,
            record_count: self.next_t,
        };
        write_sorted_json(&self.dir.join("manifest.json"), &manifest)?;
        Ok(manifest)
    }
}

impl TickObserver for EpisodeWriter {
    fn on_tick(&mut self, ev: &TickEvent<'_>) -> Result<(), String> {
        self.record_tick(ev).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub manifest: EpisodeManifest,
    pub records: Vec<EpisodeRecord>,
}

pub fn read_manifest(dir: &Path) -> Result<EpisodeManifest, EpisodeError> {
    let text = fs::read_to_string(dir.join("manifest.json"))?;
    serde_json::from_str(&text).map_err(|e| schema(format!("manifest: {e}")))
}

pub fn read_episode(dir: &Path) -> Result<Episode, EpisodeError> {
    let manifest = read_manifest(dir)?;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(File::open(dir.join("steps.jsonl"))?).lines().enumerate() {
        let rec: EpisodeRecord = serde_json::from_str(&line?).map_err(|e| schema(format!("line {}: {e}", i + 1)))?;
        if rec.t != i as u64 {
            return Err(EpisodeError::TickGap {
                expected: i as u64,
                got: rec.t,
            });
        }
        rec.check()?;
        records.push(rec);
    }
    if records.len() as u64 != manifest.record_count {
        return Err(schema(format!(
            "manifest counts {} records, steps.jsonl has {}",
            manifest.record_count,
            records.len()
        )));
    }
    Ok(Episode { manifest, records })
}

pub fn load_frame(dir: &Path, frame_ref: &str) -> Result<RasterImage, EpisodeError> {
    RasterImage::from_ppm(&fs::read(dir.join(frame_ref))?).map_err(|e| schema(e.to_string()))
}

/// Runs one mock experiment with a recorder attached.
pub fn record_episode(cfg: &ExperimentConfig, dir: &Path) -> Result<(ExperimentLog, EpisodeManifest), EpisodeError> {
    let stub = serde_json::json!({
        "task_id": cfg.task_id,
        "seed": cfg.seed,
        "config": serde_json::to_value(cfg).map_err(|e| schema(e.to_string()))?,
    });
    let mut writer = open_episode(dir, &stub)?;
    let lab = MockLab::new(cfg.mock_config());
    let log = run_experiment_observed(cfg, &lab, &lab, &mut writer)?;
    let manifest = writer.finalize(OutcomeSummary::from_log(&log))?;
    Ok((log, manifest))
}

/// Training-mix presets: (successful episodes, fail-then-succeed episodes).
pub const MIX_PRESETS: [(&str, usize, usize); 4] = [
    ("config1", 400, 0),
    ("config2", 300, 100),
    ("config3", 200, 200),
    ("config4", 0, 400),
];

pub fn mix_preset(name: &str) -> Option<(usize, usize)> {
    MIX_PRESETS
        .iter()
        .find(|(n, _, _)| n.eq_ignore_ascii_case(name))
        .map(|(_, s, r)| (*s, *r))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub dir: String,
    pub kind: EpisodeKind,
    pub trial: u64,
    pub record_count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub task_id: String,
    pub base_seed: u64,
    pub n_success: usize,
    pub n_retry: usize,
    pub episodes: Vec<DatasetEntry>,
}

/// Episodes `episode_NNNNN` under `out`: successes scripted to succeed on the
/// first try, retries scripted to fail once and recover in the inner loop.
pub fn generate_training_mix(
    n_success: usize,
    n_retry: usize,
    task_id: &str,
    base_seed: u64,
    out: &Path,
    frame_scale: u32,
) -> Result<DatasetManifest, EpisodeError> {
    if n_success + n_retry == 0 {
        return Err(schema("dataset needs at least one episode"));
    }
    let plan = std::iter::repeat(EpisodeKind::Success)
        .take(n_success)
        .chain(std::iter::repeat(EpisodeKind::Retry).take(n_retry));
    let mut episodes = Vec::with_capacity(n_success + n_retry);
    for (i, want) in plan.enumerate() {
        let mut cfg = ExperimentConfig::for_task(task_id, base_seed);
        cfg.trial = i as u64;
        cfg.frame_scale = frame_scale;
        match want {
            EpisodeKind::Success => cfg.script = Some(ScriptKind::Success),
            EpisodeKind::Retry => {
                cfg.script = Some(ScriptKind::Retry);
                cfg.inner_second_attempt_prob = 1.0;
            }
        }
        let name = format!("episode_{i:05}");
        let (_, manifest) = record_episode(&cfg, &out.join(&name))?;
        if manifest.kind != want {
            return Err(schema(format!("{name}: wanted {want:?}, recorded {:?}", manifest.kind)));
        }
        episodes.push(DatasetEntry {
            dir: name,
            kind: manifest.kind,
            trial: cfg.trial,
            record_count: manifest.record_count,
        });
    }
    let ds = DatasetManifest {
        schema_version: EPISODE_SCHEMA_VERSION,
        task_id: task_id.to_string(),
        base_seed,
        n_success,
        n_retry,
        episodes,
    };
    write_sorted_json(&out.join("dataset.json"), &ds)?;
    Ok(ds)
}
