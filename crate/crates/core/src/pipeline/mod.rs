//! Staged, resumable runs: setup, per-sub-network search, ranking, planning.
//!
//! Every stage writes its artifacts atomically into the run directory and
//! records a content hash of its inputs and outputs in `manifest.json`. A
//! stage whose inputs hash the same and whose outputs are intact is skipped.

mod config;
mod report;
pub mod schema;

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use schemars::JsonSchema;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use config::{EvaluatorConfig, ExternalConfig, NetworkConfig, RunConfig, WorkerObjective};
pub use report::render_report;

use crate::arch::{ArchitectureSpec, SubnetPartition, FORMAT_VERSION};
use crate::eval::{CachedEvaluator, Evaluator, ExternalEvaluator, SurrogateEvaluator, WorkerClient};
use crate::exec::Exec;
use crate::fsio::{to_json_bytes, write_atomic};
use crate::gpir::{build_ranking, build_scheme, ArchCost, Baseline, FrontSolution, JointScheme, NetworkCost, Ranking};
use crate::moo::{evolve, EvolutionConfig, GenerationStats, OptimizationResult, SubnetContext};
use crate::rng::derive_seed;

pub const CONFIG_FILE: &str = "config.json";
pub const ARCH_FILE: &str = "arch.json";
pub const PARTITION_FILE: &str = "partition.json";
pub const RANKING_FILE: &str = "ranking.json";
pub const CACHE_FILE: &str = "eval-cache.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const REPORT_FILE: &str = "report.md";

pub fn front_file(subnet: usize) -> String {
    format!("front_{subnet}.json")
}

pub fn scheme_file(target: f64) -> String {
    format!("scheme_{target}.json")
}

type BoxError = Box<dyn std::error::Error + Send + Sync>;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: BoxError,
    },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("missing artifact {}; run the earlier stages first", .0.display())]
    MissingArtifact(PathBuf),
    #[error("{}: invalid artifact: {reason}", path.display())]
    BadArtifact { path: PathBuf, reason: String },
}

impl PipelineError {
    fn stage(stage: impl Into<String>, source: impl Into<BoxError>) -> Self {
        PipelineError::Stage {
            stage: stage.into(),
            source: source.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct FrontPoint {
    pub genes: Vec<u32>,
    pub params: u64,
    pub error: f64,
}

/// Per-sub-network search result as stored on disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct FrontFile {
    pub format_version: u32,
    pub subnet: usize,
    pub seed: u64,
    pub evaluations: usize,
    pub baseline: FrontPoint,
    /// Non-dominated codings by ascending params.
    pub solutions: Vec<FrontPoint>,
    pub history: Vec<GenerationStats>,
}

impl FrontFile {
    pub fn from_result(result: &OptimizationResult, seed: u64) -> Self {
        let point = |ind: &crate::moo::Individual| FrontPoint {
            genes: ind.genes.clone(),
            params: ind.objectives.params,
            error: ind.objectives.error,
        };
        Self {
            format_version: FORMAT_VERSION,
            subnet: result.subnet_index,
            seed,
            evaluations: result.evaluations,
            baseline: point(&result.baseline),
            solutions: result.first_front.iter().map(point).collect(),
            history: result.history.clone(),
        }
    }

    pub fn to_front(&self) -> (Baseline, Vec<FrontSolution>) {
        let baseline = Baseline {
            params: self.baseline.params,
            error: self.baseline.error,
        };
        let solutions = self
            .solutions
            .iter()
            .map(|p| FrontSolution {
                subnet_index: self.subnet,
                genes: p.genes.clone(),
                params: p.params,
                error: p.error,
            })
            .collect();
        (baseline, solutions)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize, JsonSchema)]
struct StageRecord {
    inputs: String,
    outputs: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
struct Manifest {
    format_version: u32,
    stages: BTreeMap<String, StageRecord>,
}

impl Default for Manifest {
    fn default() -> Self {
        Self {
            format_version: FORMAT_VERSION,
            stages: BTreeMap::new(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum StageStatus {
    Ran,
    Skipped,
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub stages: Vec<(String, StageStatus)>,
    /// Codings sent to the evaluator in this invocation (cache misses).
    pub evaluations: usize,
    pub schemes: Vec<JointScheme>,
}

fn digest(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    hex::encode(h.finalize())
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, PipelineError> {
    fs::read(path).map_err(|source| {
        if source.kind() == io::ErrorKind::NotFound {
            PipelineError::MissingArtifact(path.to_path_buf())
        } else {
            PipelineError::Io {
                path: path.to_path_buf(),
                source,
            }
        }
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, PipelineError> {
    let bytes = read_bytes(path)?;
    serde_json::from_slice(&bytes).map_err(|e| PipelineError::BadArtifact {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    write_atomic(path, bytes).map_err(|source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// A run bound to its directory.
pub struct Pipeline {
    config: RunConfig,
    dir: PathBuf,
    arch: Arc<ArchitectureSpec>,
    part: Arc<SubnetPartition>,
    manifest: Mutex<Manifest>,
    exec: Exec,
}

impl Pipeline {
    /// Validates `config`; `dir` overrides `config.out_dir`.
    pub fn new(config: RunConfig, dir: Option<PathBuf>) -> Result<Self, PipelineError> {
        let (arch, part) = config.validate()?;
        let dir = dir
            .or_else(|| config.out_dir.clone())
            .ok_or_else(|| PipelineError::Config("no output directory given".into()))?;
        let manifest_path = dir.join(MANIFEST_FILE);
        let manifest = match read_json::<Manifest>(&manifest_path) {
            Ok(m) if m.format_version == FORMAT_VERSION => m,
            Ok(_) | Err(PipelineError::MissingArtifact(_)) => Manifest::default(),
            Err(e) => {
                log::warn!("ignoring unreadable manifest: {e}");
                Manifest::default()
            }
        };
        let exec = if config.serial {
            Exec::Sequential
        } else {
            Exec::Parallel
        };
        Ok(Self {
            config,
            dir,
            arch: Arc::new(arch),
            part: Arc::new(part),
            manifest: Mutex::new(manifest),
            exec,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn architecture(&self) -> &ArchitectureSpec {
        &self.arch
    }

    pub fn partition(&self) -> &SubnetPartition {
        &self.part
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn up_to_date(&self, stage: &str, inputs: &str) -> bool {
        let manifest = self.manifest.lock().expect("manifest lock");
        let Some(rec) = manifest.stages.get(stage) else {
            return false;
        };
        rec.inputs == inputs
            && rec
                .outputs
                .iter()
                .all(|(name, hash)| fs::read(self.path(name)).is_ok_and(|bytes| digest(&[&bytes]) == *hash))
    }

    fn record(&self, stage: &str, inputs: String, outputs: &[&str]) -> Result<(), PipelineError> {
        let mut hashes = BTreeMap::new();
        for name in outputs {
            let bytes = read_bytes(&self.path(name))?;
            hashes.insert(name.to_string(), digest(&[&bytes]));
        }
        let mut manifest = self.manifest.lock().expect("manifest lock");
        manifest.stages.insert(
            stage.to_string(),
            StageRecord {
                inputs,
                outputs: hashes,
            },
        );
        write_file(&self.path(MANIFEST_FILE), &to_json_bytes(&*manifest))
    }

    /// Writes the resolved config, architecture and partition.
    pub fn prepare(&self) -> Result<StageStatus, PipelineError> {
        let config_bytes = to_json_bytes(&self.config.normalized());
        let inputs = digest(&[&config_bytes]);
        if self.up_to_date("setup", &inputs) {
            return Ok(StageStatus::Skipped);
        }
        fs::create_dir_all(&self.dir).map_err(|source| PipelineError::Io {
            path: self.dir.clone(),
            source,
        })?;
        write_file(&self.path(CONFIG_FILE), &config_bytes)?;
        write_file(&self.path(ARCH_FILE), &to_json_bytes(&*self.arch))?;
        write_file(&self.path(PARTITION_FILE), &to_json_bytes(&*self.part))?;
        self.record("setup", inputs, &[CONFIG_FILE, ARCH_FILE, PARTITION_FILE])?;
        Ok(StageStatus::Ran)
    }

    fn surrogate(&self) -> Result<Option<SurrogateEvaluator>, PipelineError> {
        match &self.config.evaluator {
            EvaluatorConfig::Surrogate(params) => {
                SurrogateEvaluator::new(self.arch.clone(), self.part.clone(), params.clone())
                    .map(|e| Some(e.with_exec(self.exec)))
                    .map_err(|e| PipelineError::Config(e.to_string()))
            }
            EvaluatorConfig::External(_) => Ok(None),
        }
    }

    /// Stable identity of the configured evaluator, known without starting it.
    fn evaluator_identity(&self) -> Result<String, PipelineError> {
        Ok(match &self.config.evaluator {
            EvaluatorConfig::Surrogate(_) => self.surrogate()?.expect("surrogate config").fingerprint(),
            EvaluatorConfig::External(x) => format!("external:{}|{:?}", x.argv().join(" "), x.transport),
        })
    }

    fn connect_evaluator(&self) -> Result<Box<dyn Evaluator>, PipelineError> {
        if let Some(s) = self.surrogate()? {
            return Ok(Box::new(s));
        }
        let EvaluatorConfig::External(x) = &self.config.evaluator else {
            unreachable!("surrogate handled above")
        };
        let client = WorkerClient::connect(&x.transport, &x.argv(), x.timeout())
            .map_err(|e| PipelineError::stage("optimize", e))?;
        let identity = format!("{}|{:?}", x.argv().join(" "), x.transport);
        let eval = ExternalEvaluator::new(client, &identity, self.part.len())
            .map_err(|e| PipelineError::stage("optimize", e))?;
        Ok(Box::new(eval))
    }

    /// Search settings of sub-network `i`.
    pub fn evolution_for_subnet(&self, i: usize) -> EvolutionConfig {
        let mut evo = self.config.evolution_for(self.part.len());
        evo.seed = derive_seed(self.config.seed, i);
        evo
    }

    /// Runs the search for every sub-network whose front is stale. Returns
    /// per-sub-network status and the number of evaluator calls made.
    pub fn optimize(&self) -> Result<(Vec<StageStatus>, usize), PipelineError> {
        let arch_bytes = read_bytes(&self.path(ARCH_FILE))?;
        let part_bytes = read_bytes(&self.path(PARTITION_FILE))?;
        let identity = self.evaluator_identity()?;
        let m = self.part.len();
        let inputs: Vec<String> = (0..m)
            .map(|i| {
                let evo = serde_json::to_vec(&self.evolution_for_subnet(i)).expect("config serializes");
                digest(&[
                    &arch_bytes,
                    &part_bytes,
                    &(i as u64).to_le_bytes(),
                    &evo,
                    identity.as_bytes(),
                ])
            })
            .collect();
        let stage = |i: usize| format!("optimize[{i}]");
        let pending: Vec<usize> = (0..m).filter(|&i| !self.up_to_date(&stage(i), &inputs[i])).collect();
        let mut status = vec![StageStatus::Skipped; m];
        if pending.is_empty() {
            return Ok((status, 0));
        }

        let inner = self.connect_evaluator()?;
        let evaluator = if self.config.cache {
            CachedEvaluator::with_file(inner, self.path(CACHE_FILE))
        } else {
            CachedEvaluator::new(inner)
        };
        let results = self.exec.map(&pending, |&i| {
            let ctx = SubnetContext::new(self.arch.clone(), self.part.clone(), i)
                .map_err(|e| PipelineError::stage(stage(i), e))?;
            let evo = self.evolution_for_subnet(i);
            log::info!(
                "searching sub-network {i} ({} genes)",
                ctx.arch().subnet_bounds(&self.part, i).map_or(0, |b| b.len())
            );
            let result = evolve(&ctx, &evo, &evaluator).map_err(|e| PipelineError::stage(stage(i), e))?;
            let name = front_file(i);
            write_file(
                &self.path(&name),
                &to_json_bytes(&FrontFile::from_result(&result, evo.seed)),
            )?;
            self.record(&stage(i), inputs[i].clone(), &[&name])?;
            log::info!(
                "sub-network {i}: {} front solutions from {} evaluations",
                result.first_front.len(),
                result.evaluations
            );
            Ok(i)
        });
        if let Err(e) = evaluator.save() {
            log::warn!("could not save evaluation cache: {e}");
        }
        for r in results {
            status[r?] = StageStatus::Ran;
        }
        Ok((status, evaluator.inner_calls()))
    }

    /// Builds the ranking from the stored fronts.
    pub fn rank(&self) -> Result<StageStatus, PipelineError> {
        let names: Vec<String> = (0..self.part.len()).map(front_file).collect();
        let mut parts: Vec<Vec<u8>> = Vec::with_capacity(names.len() + 1);
        for name in &names {
            parts.push(read_bytes(&self.path(name))?);
        }
        parts.push(serde_json::to_vec(&self.config.ranking).expect("order serializes"));
        let refs: Vec<&[u8]> = parts.iter().map(Vec::as_slice).collect();
        let inputs = digest(&refs);
        if self.up_to_date("rank", &inputs) {
            return Ok(StageStatus::Skipped);
        }
        let mut fronts = Vec::with_capacity(names.len());
        for (name, bytes) in names.iter().zip(&parts) {
            let file: FrontFile = serde_json::from_slice(bytes).map_err(|e| PipelineError::BadArtifact {
                path: self.path(name),
                reason: e.to_string(),
            })?;
            fronts.push(file.to_front());
        }
        let ranking = build_ranking(&fronts, self.config.ranking).map_err(|e| PipelineError::stage("rank", e))?;
        write_file(&self.path(RANKING_FILE), &to_json_bytes(&ranking))?;
        self.record("rank", inputs, &[RANKING_FILE])?;
        Ok(StageStatus::Ran)
    }

    /// All stages followed by planning at the configured targets.
    pub fn run(&self) -> Result<RunSummary, PipelineError> {
        let mut stages = vec![("setup".to_string(), self.prepare()?)];
        let (fronts, evaluations) = self.optimize()?;
        stages.extend(
            fronts
                .into_iter()
                .enumerate()
                .map(|(i, s)| (format!("optimize[{i}]"), s)),
        );
        stages.push(("rank".to_string(), self.rank()?));
        let schemes = plan_and_report(&self.dir, &self.config.targets)?;
        Ok(RunSummary {
            dir: self.dir.clone(),
            stages,
            evaluations,
            schemes,
        })
    }
}

/// Validates `config` and runs every stage into its output directory.
pub fn run_pipeline(config: RunConfig) -> Result<RunSummary, PipelineError> {
    Pipeline::new(config, None)?.run()
}

fn load_network(dir: &Path) -> Result<(ArchitectureSpec, SubnetPartition), PipelineError> {
    Ok((read_json(&dir.join(ARCH_FILE))?, read_json(&dir.join(PARTITION_FILE))?))
}

/// Plans one scheme per target from the stored ranking, writes them, and
/// refreshes the report. Never touches the evaluator.
pub fn plan_and_report(dir: &Path, targets: &[f64]) -> Result<Vec<JointScheme>, PipelineError> {
    let (arch, part) = load_network(dir)?;
    let ranking: Ranking = read_json(&dir.join(RANKING_FILE))?;
    let cost = ArchCost {
        arch: &arch,
        partition: &part,
    };
    let mut schemes = Vec::with_capacity(targets.len());
    for &t in targets {
        let scheme = build_scheme(&ranking, &cost, t).map_err(|e| PipelineError::stage("plan", e))?;
        write_file(&dir.join(scheme_file(t)), &to_json_bytes(&scheme))?;
        schemes.push(scheme);
    }
    write_report(dir)?;
    Ok(schemes)
}

/// Every scheme stored in `dir`, by ascending target.
pub fn stored_schemes(dir: &Path) -> Result<Vec<JointScheme>, PipelineError> {
    let entries = fs::read_dir(dir).map_err(|source| PipelineError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut schemes = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|source| PipelineError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name.starts_with("scheme_") && name.ends_with(".json") {
            schemes.push(read_json::<JointScheme>(&entry.path())?);
        }
    }
    schemes.sort_by(|a, b| a.target_pr.total_cmp(&b.target_pr));
    Ok(schemes)
}

/// Rewrites `report.md` from the stored schemes and returns its text.
pub fn write_report(dir: &Path) -> Result<String, PipelineError> {
    let (arch, part) = load_network(dir)?;
    let baseline = ArchCost {
        arch: &arch,
        partition: &part,
    }
    .baseline_cost()
    .map_err(|e| PipelineError::stage("report", e))?;
    let text = render_report(arch.name(), baseline, &stored_schemes(dir)?);
    write_file(&dir.join(REPORT_FILE), text.as_bytes())?;
    Ok(text)
}
