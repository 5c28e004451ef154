use std::path::{Path, PathBuf};
use std::time::Duration;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::arch::{build_preset, partition_by_resolution, ArchitectureSpec, SubnetPartition};
use crate::eval::{SurrogateParams, Transport, DEFAULT_TIMEOUT};
use crate::gpir::RankOrder;
use crate::moo::EvolutionConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub preset: String,
    #[serde(default = "default_classes")]
    pub num_classes: u32,
    #[serde(default = "default_input")]
    pub input_size: u32,
    /// Blocks per sub-network; derived from feature-map resolution when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partition: Option<Vec<usize>>,
    /// Search the network as one undivided space.
    #[serde(default)]
    pub whole_network: bool,
}

fn default_classes() -> u32 {
    10
}

fn default_input() -> u32 {
    32
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "lowercase")]
pub enum WorkerObjective {
    #[default]
    Error,
    L2,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ExternalConfig {
    /// Worker argv.
    pub command: Vec<String>,
    #[serde(default)]
    pub transport: Transport,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    /// Training profile name passed through to the worker.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<String>,
    #[serde(default)]
    pub no_feature_constraint: bool,
    #[serde(default)]
    pub objective: WorkerObjective,
}

fn default_timeout_secs() -> u64 {
    DEFAULT_TIMEOUT.as_secs()
}

impl ExternalConfig {
    /// Command line including the forwarded worker options.
    pub fn argv(&self) -> Vec<String> {
        let mut argv = self.command.clone();
        if let Some(p) = &self.profile {
            argv.extend(["--profile".into(), p.clone()]);
        }
        if self.no_feature_constraint {
            argv.push("--no-feature-constraint".into());
        }
        if self.objective == WorkerObjective::L2 {
            argv.extend(["--objective".into(), "l2".into()]);
        }
        argv
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs(self.timeout_secs)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EvaluatorConfig {
    Surrogate(SurrogateParams),
    External(ExternalConfig),
}

impl Default for EvaluatorConfig {
    fn default() -> Self {
        EvaluatorConfig::Surrogate(SurrogateParams::default())
    }
}

/// Everything a run depends on. With the surrogate evaluator, a run is a
/// pure function of this value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub network: NetworkConfig,
    /// Search settings shared by all sub-networks; when absent, the 3-way
    /// profile is used for up to three sub-networks and the 4-way profile
    /// otherwise. The seed inside is ignored in favour of `seed`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evolution: Option<EvolutionConfig>,
    #[serde(default)]
    pub evaluator: EvaluatorConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    /// Search sub-networks one after another instead of concurrently.
    #[serde(default)]
    pub serial: bool,
    #[serde(default)]
    pub ranking: RankOrder,
    #[serde(default = "default_targets")]
    pub targets: Vec<f64>,
    /// Persist evaluations to `eval-cache.json`.
    #[serde(default = "default_true")]
    pub cache: bool,
}

fn default_targets() -> Vec<f64> {
    vec![0.5]
}

fn default_true() -> bool {
    true
}

impl RunConfig {
    pub fn for_preset(preset: &str) -> Self {
        Self {
            network: NetworkConfig {
                preset: preset.to_string(),
                num_classes: default_classes(),
                input_size: default_input(),
                partition: None,
                whole_network: false,
            },
            evolution: None,
            evaluator: EvaluatorConfig::default(),
            out_dir: None,
            seed: 0,
            serial: false,
            ranking: RankOrder::default(),
            targets: default_targets(),
            cache: true,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("run config serializes")
    }

    pub fn architecture(&self) -> Result<ArchitectureSpec, PipelineError> {
        let n = &self.network;
        build_preset(&n.preset, n.num_classes, n.input_size).map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn partition(&self, arch: &ArchitectureSpec) -> Result<SubnetPartition, PipelineError> {
        let n = &self.network;
        let config = |e: crate::arch::ArchError| PipelineError::Config(e.to_string());
        match (&n.partition, n.whole_network) {
            (Some(_), true) => Err(PipelineError::Config(
                "partition and whole_network are mutually exclusive".into(),
            )),
            (_, true) => SubnetPartition::whole(arch.blocks().len()).map_err(config),
            (Some(sizes), false) => {
                let part = SubnetPartition::from_sizes(sizes).map_err(config)?;
                if part.num_blocks() != arch.blocks().len() {
                    return Err(PipelineError::Config(format!(
                        "partition covers {} blocks, {} has {}",
                        part.num_blocks(),
                        arch.name(),
                        arch.blocks().len()
                    )));
                }
                Ok(part)
            }
            (None, false) => Ok(partition_by_resolution(arch)),
        }
    }

    /// Search settings for a network split into `subnets` parts.
    pub fn evolution_for(&self, subnets: usize) -> EvolutionConfig {
        let mut evo = self.evolution.clone().unwrap_or_else(|| {
            if subnets <= 3 {
                EvolutionConfig::three_subnet_profile()
            } else {
                EvolutionConfig::four_subnet_profile()
            }
        });
        evo.seed = self.seed;
        evo
    }

    /// The config as stored in a run directory: no output path, and the
    /// search seed mirrored from `seed`.
    pub fn normalized(&self) -> Self {
        let mut c = self.clone();
        c.out_dir = None;
        if let Some(evo) = &mut c.evolution {
            evo.seed = c.seed;
        }
        c
    }

    /// Checks everything that can be checked without doing any work.
    pub fn validate(&self) -> Result<(ArchitectureSpec, SubnetPartition), PipelineError> {
        let arch = self.architecture()?;
        let part = self.partition(&arch)?;
        self.evolution_for(part.len())
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        match &self.evaluator {
            EvaluatorConfig::Surrogate(p) => p.validate(part.len()).map_err(PipelineError::Config)?,
            EvaluatorConfig::External(x) => {
                if x.command.is_empty() && x.transport == Transport::Stdio {
                    return Err(PipelineError::Config(
                        "external evaluator needs a worker command".into(),
                    ));
                }
                if x.timeout_secs == 0 {
                    return Err(PipelineError::Config("worker timeout must be positive".into()));
                }
            }
        }
        if let Some(t) = self.targets.iter().find(|t| !(0.0..1.0).contains(*t)) {
            return Err(PipelineError::Config(format!("target pruning rate {t} outside [0, 1)")));
        }
        Ok((arch, part))
    }
}
