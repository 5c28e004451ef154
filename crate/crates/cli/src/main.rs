use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use dcprune_core::arch::SubnetPartition;
use dcprune_core::eval::{SurrogateParams, Transport};
use dcprune_core::gpir::RankOrder;
use dcprune_core::moo::EvolutionConfig;
use dcprune_core::pipeline::{
    plan_and_report, read_json, schema, write_report, EvaluatorConfig, ExternalConfig, Pipeline, PipelineError,
    RunConfig, StageStatus, WorkerObjective, CONFIG_FILE,
};
use dcprune_core::space::SpaceReport;

const EXIT_CONFIG: u8 = 2;
const EXIT_STAGE: u8 = 3;
const EXIT_UNREACHED: u8 = 4;

#[derive(Parser)]
#[command(name = "dcprune", version, about = "Divide-and-conquer channel-pruning planner")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the exact search-space sizes of a network and partition.
    Space {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        json: bool,
    },
    /// Show how the network is divided into sub-networks.
    Partition {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        json: bool,
    },
    /// Search every sub-network and write its front.
    Optimize {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Build the impairment ranking from the stored fronts.
    Rank {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Plan schemes for one or more target parameter pruning rates.
    Plan {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Regenerate the report from the stored schemes.
    Report {
        #[command(flatten)]
        run: RunArgs,
    },
    /// All stages, then planning at the configured targets.
    Run {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Print the JSON Schema of an artifact kind, or list the kinds.
    Schema {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(schema::ARTIFACTS))]
        kind: Option<String>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum EvaluatorKind {
    Surrogate,
    External,
}

#[derive(Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    Error,
    L2,
}

#[derive(Clone, Copy, ValueEnum)]
enum OrderArg {
    Ascending,
    Descending,
}

#[derive(Args, Clone, Default)]
struct RunArgs {
    /// TOML run configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run directory (defaults to the config's out_dir).
    #[arg(long, visible_alias = "run-dir")]
    out: Option<PathBuf>,
    /// resnet56, resnet110, resnet50 or vgg16.
    #[arg(long)]
    preset: Option<String>,
    /// Classifier width.
    #[arg(long)]
    classes: Option<u32>,
    /// Square input resolution in pixels.
    #[arg(long)]
    input_size: Option<u32>,
    /// Blocks per sub-network, e.g. 9,9,9.
    #[arg(long, value_delimiter = ',')]
    partition: Option<Vec<usize>>,
    /// Search the undivided network.
    #[arg(long)]
    whole_network: bool,
    /// Population size per sub-network.
    #[arg(long)]
    pop: Option<usize>,
    /// Offspring per iteration.
    #[arg(long)]
    offspring: Option<usize>,
    /// Iterations per sub-network.
    #[arg(long)]
    iters: Option<usize>,
    /// Run seed; sub-network seeds are derived from it.
    #[arg(long)]
    seed: Option<u64>,
    /// Target parameter pruning rate in [0, 1); repeatable.
    #[arg(long = "target-pr")]
    target_pr: Vec<f64>,
    #[arg(long, value_enum)]
    evaluator: Option<EvaluatorKind>,
    /// Worker command line, split on whitespace.
    #[arg(long)]
    worker_cmd: Option<String>,
    /// Connect to a worker listening on this unix socket instead of spawning one.
    #[arg(long)]
    worker_socket: Option<PathBuf>,
    /// Seconds to wait for a batch before resending it once.
    #[arg(long)]
    worker_timeout: Option<u64>,
    /// Training profile name passed to the worker.
    #[arg(long)]
    profile: Option<String>,
    /// Ask the worker to train without the feature constraint.
    #[arg(long)]
    no_feature_constraint: bool,
    #[arg(long, value_enum)]
    objective: Option<ObjectiveArg>,
    /// Surrogate noise amplitude.
    #[arg(long)]
    jitter: Option<f64>,
    #[arg(long, value_enum)]
    ranking: Option<OrderArg>,
    /// Search sub-networks one at a time.
    #[arg(long)]
    serial: bool,
    /// Do not persist evaluations between invocations.
    #[arg(long)]
    no_cache: bool,
}

#[derive(Debug)]
struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn config_error(error: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: EXIT_CONFIG,
        error: error.into(),
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        let code = match e {
            PipelineError::Config(_) => EXIT_CONFIG,
            _ => EXIT_STAGE,
        };
        Failure { code, error: e.into() }
    }
}

impl RunArgs {
    /// Config file, else the run directory's stored config, else the preset flag.
    fn base_config(&self) -> Result<RunConfig, Failure> {
        if let Some(path) = &self.config {
            return Ok(RunConfig::load(path)?);
        }
        if let Some(dir) = &self.out {
            let stored = dir.join(CONFIG_FILE);
            if stored.exists() {
                return read_json(&stored).map_err(Failure::from);
            }
        }
        match &self.preset {
            Some(p) => Ok(RunConfig::for_preset(p)),
            None => Err(config_error(anyhow::anyhow!(
                "give --preset, --config, or a run directory holding {CONFIG_FILE}"
            ))),
        }
    }

    fn resolve(&self) -> Result<RunConfig, Failure> {
        let mut c = self.base_config()?;
        if let Some(p) = &self.preset {
            c.network.preset.clone_from(p);
        }
        if let Some(v) = self.classes {
            c.network.num_classes = v;
        }
        if let Some(v) = self.input_size {
            c.network.input_size = v;
        }
        if let Some(p) = &self.partition {
            c.network.partition = Some(p.clone());
        }
        if self.whole_network {
            c.network.whole_network = true;
        }
        if self.pop.is_some() || self.offspring.is_some() || self.iters.is_some() {
            let subnets = c.partition(&c.architecture()?)?.len();
            let mut evo: EvolutionConfig = c.evolution_for(subnets);
            if let Some(v) = self.pop {
                evo.population_size = v;
            }
            if let Some(v) = self.offspring {
                evo.offspring_per_iteration = v;
            }
            if let Some(v) = self.iters {
                evo.iterations = v;
            }
            c.evolution = Some(evo);
        }
        if let Some(s) = self.seed {
            c.seed = s;
        }
        if !self.target_pr.is_empty() {
            c.targets.clone_from(&self.target_pr);
        }
        self.apply_evaluator(&mut c)?;
        if let Some(o) = self.ranking {
            c.ranking = match o {
                OrderArg::Ascending => RankOrder::Ascending,
                OrderArg::Descending => RankOrder::Descending,
            };
        }
        if self.serial {
            c.serial = true;
        }
        if self.no_cache {
            c.cache = false;
        }
        if let Some(o) = &self.out {
            c.out_dir = Some(o.clone());
        }
        Ok(c)
    }

    fn apply_evaluator(&self, c: &mut RunConfig) -> Result<(), Failure> {
        let wants_external = matches!(self.evaluator, Some(EvaluatorKind::External))
            || (self.evaluator.is_none() && (self.worker_cmd.is_some() || self.worker_socket.is_some()));
        if matches!(self.evaluator, Some(EvaluatorKind::Surrogate))
            && !matches!(c.evaluator, EvaluatorConfig::Surrogate(_))
        {
            c.evaluator = EvaluatorConfig::Surrogate(SurrogateParams::default());
        }
        if wants_external {
            let mut x = match &c.evaluator {
                EvaluatorConfig::External(x) => x.clone(),
                EvaluatorConfig::Surrogate(_) => ExternalConfig {
                    command: Vec::new(),
                    transport: Transport::Stdio,
                    timeout_secs: dcprune_core::eval::DEFAULT_TIMEOUT.as_secs(),
                    profile: None,
                    no_feature_constraint: false,
                    objective: WorkerObjective::Error,
                },
            };
            if let Some(cmd) = &self.worker_cmd {
                x.command = cmd.split_whitespace().map(str::to_string).collect();
            }
            if let Some(sock) = &self.worker_socket {
                x.transport = Transport::Unix(sock.clone());
            }
            if let Some(t) = self.worker_timeout {
                x.timeout_secs = t;
            }
            if self.profile.is_some() {
                x.profile.clone_from(&self.profile);
            }
            if self.no_feature_constraint {
                x.no_feature_constraint = true;
            }
            if let Some(o) = self.objective {
                x.objective = match o {
                    ObjectiveArg::Error => WorkerObjective::Error,
                    ObjectiveArg::L2 => WorkerObjective::L2,
                };
            }
            c.evaluator = EvaluatorConfig::External(x);
        }
        if let Some(j) = self.jitter {
            match &mut c.evaluator {
                EvaluatorConfig::Surrogate(p) => p.jitter = j,
                EvaluatorConfig::External(_) => {
                    return Err(config_error(anyhow::anyhow!(
                        "--jitter applies to the surrogate evaluator only"
                    )))
                }
            }
        }
        Ok(())
    }

    fn pipeline(&self) -> Result<Pipeline, Failure> {
        Ok(Pipeline::new(self.resolve()?, None)?)
    }

    fn run_dir(&self) -> Result<PathBuf, Failure> {
        if let Some(o) = &self.out {
            return Ok(o.clone());
        }
        self.resolve()?
            .out_dir
            .ok_or_else(|| config_error(anyhow::anyhow!("no run directory; pass --out")))
    }
}

fn print_stage(name: &str, status: StageStatus) {
    let word = match status {
        StageStatus::Ran => "done",
        StageStatus::Skipped => "up to date",
    };
    println!("{name:<14}{word}");
}

fn partition_summary(p: &Pipeline, json: bool) -> anyhow::Result<()> {
    let arch = p.architecture();
    let part: &SubnetPartition = p.partition();
    if json {
        println!("{}", serde_json::to_string_pretty(part)?);
        return Ok(());
    }
    println!("{arch}");
    for (i, r) in part.ranges().iter().enumerate() {
        let cost = arch.subnet_cost(part, i, None)?;
        let widths = arch.subnet_bounds(part, i)?;
        println!(
            "sub-network {i}: blocks {}..{} ({} prunable layers), {} params, {} FLOPs",
            r.start,
            r.end,
            widths.len(),
            cost.params,
            cost.flops
        );
    }
    Ok(())
}

fn plan(dir: &Path, targets: &[f64]) -> Result<ExitCode, Failure> {
    if targets.is_empty() {
        return Err(config_error(anyhow::anyhow!("no --target-pr given")));
    }
    if let Some(t) = targets.iter().find(|t| !(0.0..1.0).contains(*t)) {
        return Err(config_error(anyhow::anyhow!("target pruning rate {t} outside [0, 1)")));
    }
    let schemes = plan_and_report(dir, targets)?;
    print!("{}", write_report(dir)?);
    if schemes.iter().all(|s| s.reached) {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("warning: at least one target was not reached");
        Ok(ExitCode::from(EXIT_UNREACHED))
    }
}

fn execute(command: Command) -> Result<ExitCode, Failure> {
    match command {
        Command::Space { run, json } => {
            let c = run.resolve()?;
            let (arch, part) = c.validate()?;
            let evo = c.evolution_for(part.len());
            let report = SpaceReport::new(
                &arch,
                &part,
                evo.population_size as u64,
                evo.offspring_per_iteration as u64,
                evo.iterations as u64,
            )
            .map_err(config_error)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&report).map_err(config_error)?);
            } else {
                print!("{report}");
            }
        }
        Command::Partition { run, json } => {
            let c = run.resolve()?;
            let p = Pipeline::new(c, Some(PathBuf::new()))?;
            partition_summary(&p, json).map_err(config_error)?;
        }
        Command::Optimize { run } => {
            let p = run.pipeline()?;
            print_stage("setup", p.prepare()?);
            let (statuses, evaluations) = p.optimize()?;
            for (i, s) in statuses.into_iter().enumerate() {
                print_stage(&format!("optimize[{i}]"), s);
            }
            println!("{evaluations} evaluations");
        }
        Command::Rank { run } => {
            let p = run.pipeline()?;
            print_stage("setup", p.prepare()?);
            print_stage("rank", p.rank()?);
        }
        Command::Plan { run } => {
            let dir = run.run_dir()?;
            let targets = if run.target_pr.is_empty() {
                run.resolve()?.targets
            } else {
                run.target_pr.clone()
            };
            return plan(&dir, &targets);
        }
        Command::Report { run } => {
            let dir = run.run_dir()?;
            print!("{}", write_report(&dir)?);
        }
        Command::Run { run } => {
            let p = run.pipeline()?;
            let summary = p.run()?;
            for (name, s) in &summary.stages {
                print_stage(name, *s);
            }
            println!("{} evaluations", summary.evaluations);
            print!("{}", write_report(&summary.dir)?);
            if summary.schemes.iter().any(|s| !s.reached) {
                eprintln!("warning: at least one target was not reached");
            }
        }
        Command::Schema { kind: None } => {
            for kind in schema::ARTIFACTS {
                println!("{kind}");
            }
        }
        Command::Schema { kind: Some(kind) } => {
            let s = schema::artifact_schema(&kind).expect("kind checked by the parser");
            println!("{}", serde_json::to_string_pretty(&s).map_err(config_error)?);
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(cli.command) {
        Ok(code) => code,
        Err(Failure { code, error }) => {
            let error = error.context(match code {
                EXIT_CONFIG => "invalid configuration",
                _ => "stage failed",
            });
            eprintln!("error: {error:#}");
            ExitCode::from(code)
        }
    }
}
