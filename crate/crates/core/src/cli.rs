//! Command-line front end: TOML run configuration, one subcommand per
//! experiment, and atomic output files inside a per-run directory.

use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::archspace::{new_full_space, CellTopology, OpKind, OperationCatalog, SearchSpace};
use crate::dataset::{make_blobs, split, Dataset};
use crate::driver::{
    run_progressive, run_random_reduction, RunResult, ScheduleConfig, StageSearch, SupernetEstimator, SupernetModel,
};
use crate::evolution::{BoxError, EvoConfig};
use crate::oracle::{
    build_truth_synthetic, build_truth_trained, export_space_plot, supernet_truth_correlation, CorrelationReport,
    GroundTruthTable, Provenance, SyntheticLandscape,
};
use crate::supernet::{SelectionMode, TrainConfig};

/// Experiment selected by a subcommand.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Search,
    NoInherit,
    RandomBaseline,
    Correlate,
    Truth,
    ExportPlot,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    /// Optional; when present it must match the subcommand.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    /// Parent directory for run directories.
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub task: TaskConfig,
    #[serde(default)]
    pub space: SpaceConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub evo: EvoConfig,
    #[serde(default)]
    pub truth: TruthConfig,
}

fn default_out() -> PathBuf {
    PathBuf::from("runs")
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            mode: None,
            out: default_out(),
            task: TaskConfig::default(),
            space: SpaceConfig::default(),
            train: TrainConfig::default(),
            evo: EvoConfig::default(),
            truth: TruthConfig::default(),
        }
    }
}

/// Gaussian-blob classification task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TaskConfig {
    pub classes: usize,
    pub per_class: usize,
    pub feature_dim: usize,
    pub spread: f64,
    pub train_fraction: f64,
    /// Fixes the data independently of the run seed.
    pub data_seed: u64,
}

impl Default for TaskConfig {
    fn default() -> Self {
        TaskConfig { classes: 4, per_class: 64, feature_dim: 8, spread: 1.0, train_fraction: 0.5, data_seed: 0 }
    }
}

impl TaskConfig {
    pub fn splits(&self) -> Result<(Dataset, Dataset), BoxError> {
        let data = make_blobs(self.classes, self.per_class, self.feature_dim, self.spread, self.data_seed)?;
        Ok(split(&data, self.train_fraction, self.data_seed)?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TopologyKind {
    /// Single input node; every node feeds every later node.
    Dense,
    /// Two input nodes, four intermediate nodes, output sums the four.
    TwoInputCell,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpaceConfig {
    pub topology: TopologyKind,
    /// Node count for the dense topology.
    pub nodes: usize,
    pub catalog: Vec<OpKind>,
    pub schedule: Vec<usize>,
    pub inherit: bool,
    pub selection: SelectionMode,
}

impl Default for SpaceConfig {
    fn default() -> Self {
        SpaceConfig {
            topology: TopologyKind::Dense,
            nodes: 4,
            catalog: vec![OpKind::Zero, OpKind::Skip, OpKind::Linear, OpKind::LinearRelu, OpKind::Scale],
            schedule: vec![5, 3, 2],
            inherit: true,
            selection: SelectionMode::Hard,
        }
    }
}

impl SpaceConfig {
    pub fn full_space(&self) -> Result<SearchSpace, BoxError> {
        let topology = match self.topology {
            TopologyKind::Dense => CellTopology::dense(self.nodes)?,
            TopologyKind::TwoInputCell => CellTopology::two_input_cell(),
        };
        Ok(new_full_space(topology, OperationCatalog::from_kinds(&self.catalog)?))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TruthConfig {
    pub kind: Provenance,
    /// Standard deviation of the summed per-edge utilities.
    pub utility_std: f64,
    /// Standard deviation of the summed pairwise interactions.
    pub interaction_std: f64,
    pub landscape_seed: u64,
    /// Epochs per architecture for trained truth; defaults to `train.epochs`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
}

impl Default for TruthConfig {
    fn default() -> Self {
        TruthConfig { kind: Provenance::Synthetic, utility_std: 1.0, interaction_std: 0.5, landscape_seed: 0, epochs: None }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, BoxError> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("run configs serialize")
    }

    pub fn schedule(&self) -> ScheduleConfig {
        ScheduleConfig {
            op_schedule: self.space.schedule.clone(),
            train: self.train.clone(),
            evo: self.evo.clone(),
            inherit: self.space.inherit,
            seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<(), BoxError> {
        let t = &self.task;
        if !(0.0..1.0).contains(&t.train_fraction) || t.train_fraction == 0.0 {
            return Err("task.train_fraction must lie in (0, 1)".into());
        }
        if t.classes < 2 || t.per_class < 2 || t.feature_dim == 0 || t.spread.is_nan() || t.spread < 0.0 {
            return Err("task needs classes >= 2, per_class >= 2, feature_dim >= 1 and spread >= 0".into());
        }
        self.train.validate().map_err(|e| format!("train: {e}"))?;
        self.evo.validate().map_err(|e| format!("evo: {e}"))?;
        let space = self.space.full_space().map_err(|e| format!("space: {e}"))?;
        self.schedule().validate(space.catalog().len()).map_err(|e| format!("space.schedule: {e}"))?;
        if self.truth.epochs.is_some_and(|_| self.truth.kind != Provenance::Trained) {
            return Err("truth.epochs only applies to truth.kind = \"trained\"".into());
        }
        Ok(())
    }

    fn truth_train_config(&self) -> TrainConfig {
        TrainConfig { epochs: self.truth.epochs.unwrap_or(self.train.epochs), seed: self.seed, ..self.train.clone() }
    }

    pub fn landscape(&self, num_edges: usize, num_ops: usize) -> SyntheticLandscape {
        SyntheticLandscape::random(
            num_edges,
            num_ops,
            self.truth.utility_std,
            self.truth.interaction_std,
            0.0,
            self.truth.landscape_seed,
        )
    }
}

/// Reads and validates a config file; a missing path means all defaults.
pub fn load_config(path: Option<&Path>) -> Result<RunConfig, BoxError> {
    match path {
        None => Ok(RunConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| format!("reading {}: {e}", p.display()))?;
            RunConfig::from_toml(&text).map_err(|e| format!("{}: {e}", p.display()).into())
        }
    }
}

/// Writes `path` through a temporary file in the same directory, so the
/// file is either complete or absent.
pub fn write_atomic<F>(path: &Path, fill: F) -> Result<(), BoxError>
where
    F: FnOnce(&mut dyn Write) -> Result<(), BoxError>,
{
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let tmp = tempfile::NamedTempFile::new_in(dir)?;
    {
        let mut w = BufWriter::new(tmp.as_file());
        fill(&mut w)?;
        w.flush()?;
    }
    tmp.as_file().sync_all()?;
    tmp.persist(path)?;
    Ok(())
}

#[derive(Debug, Parser)]
#[command(name = "progressive-nas", version, about = "Progressive evolutionary architecture search on toy tasks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Progressive search with weight inheritance.
    Search(CommonArgs),
    /// Progressive search where every reduced supernet starts fresh.
    NoInherit(CommonArgs),
    /// Random reduction to the final size, then best of 100 random archs.
    RandomBaseline(CommonArgs),
    /// Progressive search plus supernet-vs-truth rank correlation per stage.
    Correlate {
        #[command(flatten)]
        common: CommonArgs,
        /// Truth table to compare against; built from the config if absent.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Exhaustive ground-truth table of the full space.
    Truth {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_enum)]
        kind: Option<TruthKind>,
    },
    /// Per-architecture table of truth and region membership.
    ExportPlot {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        truth: PathBuf,
        /// Result files whose stage spaces become membership columns.
        #[arg(long = "result", required = true)]
        results: Vec<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TruthKind {
    Trained,
    Synthetic,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the config output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Threads for architecture evaluation; results do not depend on it.
    #[arg(long)]
    pub workers: Option<usize>,
}

impl Command {
    fn mode(&self) -> Mode {
        match self {
            Command::Search(_) => Mode::Search,
            Command::NoInherit(_) => Mode::NoInherit,
            Command::RandomBaseline(_) => Mode::RandomBaseline,
            Command::Correlate { .. } => Mode::Correlate,
            Command::Truth { .. } => Mode::Truth,
            Command::ExportPlot { .. } => Mode::ExportPlot,
        }
    }

    fn common(&self) -> &CommonArgs {
        match self {
            Command::Search(c) | Command::NoInherit(c) | Command::RandomBaseline(c) => c,
            Command::Correlate { common, .. } | Command::Truth { common, .. } | Command::ExportPlot { common, .. } => common,
        }
    }
}

/// Entry point for the binary: parses `args`, runs, and returns the exit
/// status.
pub fn main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(&cli.command) {
        Ok(dir) => {
            println!("{}", dir.display());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

/// Runs a parsed command and returns the run directory it wrote.
pub fn run(command: &Command) -> Result<PathBuf, BoxError> {
    let common = command.common();
    let mut config = load_config(common.config.as_deref())?;
    let mode = command.mode();
    if let Some(m) = config.mode {
        if m != mode {
            return Err(format!("config mode {m:?} does not match subcommand {mode:?}").into());
        }
    }
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(out) = &common.out {
        config.out = out.clone();
    }
    if let Command::Truth { kind: Some(kind), .. } = command {
        config.truth.kind = match kind {
            TruthKind::Trained => Provenance::Trained,
            TruthKind::Synthetic => Provenance::Synthetic,
        };
    }
    let pool = match common.workers {
        Some(0) => return Err("--workers must be at least 1".into()),
        Some(n) => Some(rayon::ThreadPoolBuilder::new().num_threads(n).build()?),
        None => None,
    };
    let dir = create_run_dir(&config.out, config.seed)?;
    let mut run = Run { config, dir: dir.clone(), files: Vec::new() };
    let mut body = || run.execute(command);
    match pool {
        Some(p) => p.install(body)?,
        None => body()?,
    }
    Ok(dir)
}

fn create_run_dir(out: &Path, seed: u64) -> Result<PathBuf, BoxError> {
    fs::create_dir_all(out)?;
    let stamp = SystemTime::now().duration_since(UNIX_EPOCH)?.as_millis();
    for attempt in 0.. {
        let name = if attempt == 0 { format!("seed{seed}-{stamp}") } else { format!("seed{seed}-{stamp}-{attempt}") };
        let dir = out.join(name);
        match fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(e.into()),
        }
    }
    unreachable!()
}

#[derive(Serialize)]
struct IndexFile<'a> {
    seed: u64,
    mode: Mode,
    files: &'a [String],
}

struct Run {
    config: RunConfig,
    dir: PathBuf,
    files: Vec<String>,
}

impl Run {
    fn write(&mut self, name: &str, fill: impl FnOnce(&mut dyn Write) -> Result<(), BoxError>) -> Result<(), BoxError> {
        write_atomic(&self.dir.join(name), fill)?;
        self.files.push(name.to_string());
        Ok(())
    }

    /// Delimited output preceded by a `# seed=` line.
    fn write_table(&mut self, name: &str, fill: impl FnOnce(&mut dyn Write) -> Result<(), BoxError>) -> Result<(), BoxError> {
        let seed = self.config.seed;
        self.write(name, |w| {
            writeln!(w, "# seed={seed}")?;
            fill(w)
        })
    }

    fn execute(&mut self, command: &Command) -> Result<(), BoxError> {
        let mode = command.mode();
        let echo = RunConfig { mode: Some(mode), ..self.config.clone() };
        self.write("config.toml", |w| Ok(w.write_all(echo.to_toml().as_bytes())?))?;
        let outcome = match command {
            Command::Search(_) | Command::NoInherit(_) => {
                let inherit = mode == Mode::Search;
                self.search(inherit, None).map(|_| ())
            }
            Command::RandomBaseline(_) => self.random_baseline(),
            Command::Correlate { truth, .. } => self.correlate(truth.as_deref()),
            Command::Truth { .. } => self.truth(),
            Command::ExportPlot { truth, results, .. } => self.export_plot(truth, results),
        };
        let seed = self.config.seed;
        let files = self.files.clone();
        let index = serde_json::to_string_pretty(&IndexFile { seed, mode, files: &files })?;
        write_atomic(&self.dir.join("index.json"), |w| Ok(w.write_all(index.as_bytes())?))?;
        outcome
    }

    fn checkpoint_observer(
        &mut self,
        truth: Option<&GroundTruthTable>,
        report: &mut CorrelationReport,
        stage: usize,
        est: &SupernetEstimator<'_>,
    ) -> Result<Option<String>, BoxError> {
        let name = format!("stage{stage}.supernet.json");
        let seed = self.config.seed;
        self.write(&name, |w| Ok(est.net.save_checkpoint(est.train_seed, Some(seed), w)?))?;
        if let Some(t) = truth {
            report.stages.push(supernet_truth_correlation(&est.net, est.val, t)?);
        }
        Ok(Some(name))
    }

    fn search(&mut self, inherit: bool, truth: Option<&GroundTruthTable>) -> Result<CorrelationReport, BoxError> {
        let (train, val) = self.config.task.splits()?;
        let full = self.config.space.full_space()?;
        let schedule = ScheduleConfig { inherit, ..self.config.schedule() };
        let mut model = SupernetModel::new(&train, &val, schedule.train.clone());
        model.selection = self.config.space.selection;
        let mut report = CorrelationReport::default();
        let mut observe = |stage: usize, _: &SearchSpace, est: &SupernetEstimator<'_>| {
            self.checkpoint_observer(truth, &mut report, stage, est)
        };
        let result = run_progressive(&model, &full, &schedule, &mut observe)?;
        self.write_result(&result)?;
        Ok(report)
    }

    fn random_baseline(&mut self) -> Result<(), BoxError> {
        let (train, val) = self.config.task.splits()?;
        let full = self.config.space.full_space()?;
        let schedule = self.config.schedule();
        let mut model = SupernetModel::new(&train, &val, schedule.train.clone());
        model.selection = self.config.space.selection;
        let mut report = CorrelationReport::default();
        let mut observe = |stage: usize, _: &SearchSpace, est: &SupernetEstimator<'_>| {
            self.checkpoint_observer(None, &mut report, stage, est)
        };
        let result = run_random_reduction(&model, &full, &schedule, &mut observe)?;
        self.write_result(&result)
    }

    fn write_result(&mut self, result: &RunResult) -> Result<(), BoxError> {
        for stage in &result.stages {
            if let StageSearch::Evolution { log } = &stage.search {
                self.write_table(&format!("stage{}.evolution.csv", stage.stage), |w| Ok(log.write_csv(w)?))?;
            }
        }
        let json = result.to_json();
        self.write("result.json", |w| Ok(w.write_all(json.as_bytes())?))
    }

    fn build_truth(&self, space: &SearchSpace) -> Result<GroundTruthTable, BoxError> {
        Ok(match self.config.truth.kind {
            Provenance::Trained => {
                let (train, val) = self.config.task.splits()?;
                build_truth_trained(space, &train, &val, &self.config.truth_train_config())?
            }
            Provenance::Synthetic => {
                let landscape = self.config.landscape(space.num_edges(), space.catalog().len());
                build_truth_synthetic(space, &landscape)?
            }
        })
    }

    fn truth(&mut self) -> Result<(), BoxError> {
        let table = self.build_truth(&self.config.space.full_space()?)?;
        self.write_table("truth.csv", |w| Ok(table.write_csv(w)?))
    }

    fn correlate(&mut self, truth_path: Option<&Path>) -> Result<(), BoxError> {
        let table = match truth_path {
            Some(p) => GroundTruthTable::read_csv(BufReader::new(fs::File::open(p)?))?,
            None => {
                let t = self.build_truth(&self.config.space.full_space()?)?;
                self.write_table("truth.csv", |w| Ok(t.write_csv(w)?))?;
                t
            }
        };
        let report = self.search(self.config.space.inherit, Some(&table))?;
        self.write_table("correlation.csv", |w| Ok(report.write_csv(w)?))
    }

    fn export_plot(&mut self, truth_path: &Path, results: &[PathBuf]) -> Result<(), BoxError> {
        let table = GroundTruthTable::read_csv(BufReader::new(fs::File::open(truth_path)?))?;
        let mut spaces = Vec::new();
        for (k, path) in results.iter().enumerate() {
            let result: RunResult = serde_json::from_reader(BufReader::new(fs::File::open(path)?))
                .map_err(|e| format!("{}: {e}", path.display()))?;
            let variant = serde_json::to_value(result.variant)?;
            let prefix = if results.len() > 1 {
                format!("r{k}_{}", variant.as_str().unwrap_or("run"))
            } else {
                variant.as_str().unwrap_or("run").to_string()
            };
            for stage in result.stages {
                spaces.push((format!("{prefix}_ops{}", stage.op_count), stage.space));
            }
        }
        let plot = export_space_plot(&table, &spaces)?;
        self.write_table("plot.csv", |w| Ok(plot.write_csv(w)?))
    }
}
