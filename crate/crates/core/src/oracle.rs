//! Ground truth for small spaces and the statistics built on it: exhaustive
//! truth tables (trained from scratch or synthetic), Kendall rank
//! correlation, region quality and plot exports.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::archspace::{arch_index, enumerate_space, ArchError, DiscreteArch, SearchSpace};
use crate::dataset::Dataset;
use crate::driver::{run_progressive, DriverError, FitnessModel, RunResult, ScheduleConfig, StageSeeds, SupernetEstimator, SupernetModel};
use crate::evolution::{BoxError, Evaluator};
use crate::rng::{derive_seed, seeded, tag};
use crate::supernet::{evaluate_fitness, train_supernet, InheritMode, Supernet, SupernetError, TrainConfig};

/// Largest space a trained truth table will enumerate.
pub const TRAINED_TRUTH_CAP: u64 = 1_000;
/// Largest space a synthetic truth table will enumerate.
pub const SYNTHETIC_TRUTH_CAP: u64 = 100_000;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error(transparent)]
    Arch(#[from] ArchError),
    #[error(transparent)]
    Supernet(#[from] SupernetError),
    #[error("rank correlation needs equal-length inputs, got {0} and {1}")]
    LengthMismatch(usize, usize),
    #[error("rank correlation needs at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("rank correlation is undefined: the {0} input is constant")]
    ConstantInput(&'static str),
    #[error("space is not contained in the truth table's space")]
    NotSubspace,
    #[error("malformed truth table: {0}")]
    Format(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Trained,
    Synthetic,
}

impl Provenance {
    fn as_str(self) -> &'static str {
        match self {
            Provenance::Trained => "trained",
            Provenance::Synthetic => "synthetic",
        }
    }
}

/// True fitness of every architecture in a space, stored by canonical index.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruthTable {
    space: SearchSpace,
    fitness: Vec<f64>,
    provenance: Provenance,
}

impl GroundTruthTable {
    pub fn space(&self) -> &SearchSpace {
        &self.space
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn len(&self) -> usize {
        self.fitness.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fitness.is_empty()
    }

    /// Fitness values in canonical enumeration order.
    pub fn values(&self) -> &[f64] {
        &self.fitness
    }

    pub fn get(&self, arch: &DiscreteArch) -> Option<f64> {
        arch_index(&self.space, arch).map(|i| self.fitness[i as usize])
    }

    pub fn architectures(&self) -> Vec<DiscreteArch> {
        enumerate_space(&self.space, u64::MAX).expect("table space was enumerable")
    }

    /// Highest-fitness architecture; ties go to the lowest index.
    pub fn best(&self) -> (DiscreteArch, f64) {
        let mut best = 0;
        for (i, &f) in self.fitness.iter().enumerate() {
            if f > self.fitness[best] {
                best = i;
            }
        }
        (crate::archspace::arch_at(&self.space, best as u64).expect("in range"), self.fitness[best])
    }

    /// Writes `# provenance=` and `# space=` comment lines, then
    /// `index,arch,fitness` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<(), OracleError> {
        writeln!(out, "# provenance={}", self.provenance.as_str())?;
        writeln!(out, "# space={}", serde_json::to_string(&self.space)?)?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["index", "arch", "fitness"])?;
        for (i, (arch, f)) in self.architectures().iter().zip(&self.fitness).enumerate() {
            w.write_record([i.to_string(), arch.to_string(), f.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads what [`write_csv`](Self::write_csv) wrote. Unrecognized comment
    /// lines (such as a seed record) are skipped.
    pub fn read_csv<R: BufRead>(input: R) -> Result<Self, OracleError> {
        let mut provenance = None;
        let mut space = None;
        let mut body = String::new();
        for line in input.lines() {
            let line = line?;
            if let Some(comment) = line.strip_prefix('#') {
                let comment = comment.trim();
                if let Some(p) = comment.strip_prefix("provenance=") {
                    provenance = Some(match p {
                        "trained" => Provenance::Trained,
                        "synthetic" => Provenance::Synthetic,
                        other => return Err(OracleError::Format(format!("unknown provenance {other:?}"))),
                    });
                } else if let Some(s) = comment.strip_prefix("space=") {
                    space = Some(serde_json::from_str::<SearchSpace>(s)?);
                }
            } else {
                body.push_str(&line);
                body.push('\n');
            }
        }
        let space = space.ok_or_else(|| OracleError::Format("missing '# space=' line".into()))?;
        let provenance = provenance.ok_or_else(|| OracleError::Format("missing '# provenance=' line".into()))?;
        let archs = enumerate_space(&space, u64::MAX)?;
        let mut fitness = vec![f64::NAN; archs.len()];
        let mut reader = csv::Reader::from_reader(body.as_bytes());
        for row in reader.records() {
            let row = row?;
            let parse_err = |what: &str| OracleError::Format(format!("bad {what} in row {:?}", row));
            let index: usize = row.get(0).and_then(|s| s.parse().ok()).ok_or_else(|| parse_err("index"))?;
            let arch: DiscreteArch = row.get(1).and_then(|s| s.parse().ok()).ok_or_else(|| parse_err("arch"))?;
            let f: f64 = row.get(2).and_then(|s| s.parse().ok()).ok_or_else(|| parse_err("fitness"))?;
            if archs.get(index) != Some(&arch) {
                return Err(OracleError::Format(format!("row {index} does not match architecture {arch}")));
            }
            fitness[index] = f;
        }
        if let Some(i) = fitness.iter().position(|f| !(0.0..=1.0).contains(f)) {
            return Err(OracleError::Format(format!("architecture {i} is missing or out of [0, 1]")));
        }
        Ok(GroundTruthTable { space, fitness, provenance })
    }
}

/// Seed used to initialize and train the standalone network for the
/// architecture at `index`.
pub fn truth_seed(seed: u64, index: u64) -> u64 {
    derive_seed(seed, &[tag::TRUTH, index])
}

/// Trains every architecture of `space` from scratch as a standalone
/// single-path network and records its validation accuracy. The per-arch
/// seed comes from `config.seed` and the canonical index.
pub fn build_truth_trained(
    space: &SearchSpace,
    train: &Dataset,
    val: &Dataset,
    config: &TrainConfig,
) -> Result<GroundTruthTable, OracleError> {
    let archs = enumerate_space(space, TRAINED_TRUTH_CAP)?;
    let fitness = archs
        .par_iter()
        .enumerate()
        .map(|(i, arch)| train_standalone(space, arch, train, val, config, truth_seed(config.seed, i as u64)))
        .collect::<Result<Vec<f64>, OracleError>>()?;
    Ok(GroundTruthTable { space: space.clone(), fitness, provenance: Provenance::Trained })
}

/// Validation accuracy of `arch` trained on its own, outside any supernet.
pub fn train_standalone(
    space: &SearchSpace,
    arch: &DiscreteArch,
    train: &Dataset,
    val: &Dataset,
    config: &TrainConfig,
    seed: u64,
) -> Result<f64, OracleError> {
    let single = SearchSpace::with_allowed(
        space.topology().clone(),
        space.catalog().clone(),
        arch.selection().iter().map(|&op| vec![op]).collect(),
    )?;
    let mut net = Supernet::new(single, train.feature_dim(), train.class_count(), derive_seed(seed, &[tag::SUPERNET_INIT]))?;
    train_supernet(&mut net, train, &TrainConfig { seed: derive_seed(seed, &[tag::TRAIN]), ..config.clone() })?;
    Ok(evaluate_fitness(&net, arch, val)?)
}

/// Additive fitness landscape with pairwise edge interactions, squashed
/// through a logistic function into (0, 1).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticLandscape {
    /// `utilities[edge][op]`.
    pub utilities: Vec<Vec<f64>>,
    /// `interactions[k][op_a][op_b]` for the k-th edge pair `(a, b)`,
    /// `a < b`, in lexicographic order.
    pub interactions: Vec<Vec<Vec<f64>>>,
    /// Standard deviation of the noise added by [`noisy_fitness`](Self::noisy_fitness).
    pub noise: f64,
    pub seed: u64,
}

impl SyntheticLandscape {
    /// Landscape with no signal: every architecture scores 0.5.
    pub fn flat(num_edges: usize, num_ops: usize) -> Self {
        let pairs = num_edges * num_edges.saturating_sub(1) / 2;
        SyntheticLandscape {
            utilities: vec![vec![0.0; num_ops]; num_edges],
            interactions: vec![vec![vec![0.0; num_ops]; num_ops]; pairs],
            noise: 0.0,
            seed: 0,
        }
    }

    /// Gaussian utilities and interactions. `utility_std` and
    /// `interaction_std` are the standard deviations of the summed
    /// contributions, so the score stays in the logistic's responsive range
    /// whatever the edge count.
    pub fn random(num_edges: usize, num_ops: usize, utility_std: f64, interaction_std: f64, noise: f64, seed: u64) -> Self {
        let mut rng = seeded(derive_seed(seed, &[tag::TRUTH]));
        let mut draw = |scale: f64| -> f64 { scale * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng) };
        let pairs = num_edges * num_edges.saturating_sub(1) / 2;
        let utility_scale = utility_std / (num_edges.max(1) as f64).sqrt();
        let interaction_scale = interaction_std / (pairs.max(1) as f64).sqrt();
        let utilities = (0..num_edges).map(|_| (0..num_ops).map(|_| draw(utility_scale)).collect()).collect();
        let interactions = (0..pairs)
            .map(|_| (0..num_ops).map(|_| (0..num_ops).map(|_| draw(interaction_scale)).collect()).collect())
            .collect();
        SyntheticLandscape { utilities, interactions, noise, seed }
    }

    pub fn num_edges(&self) -> usize {
        self.utilities.len()
    }

    /// Noise-free fitness.
    pub fn fitness(&self, arch: &DiscreteArch) -> f64 {
        let sel = arch.selection();
        let mut score: f64 = sel.iter().enumerate().map(|(e, &op)| self.utilities[e][op]).sum();
        let mut k = 0;
        for a in 0..sel.len() {
            for b in a + 1..sel.len() {
                score += self.interactions[k][sel[a]][sel[b]];
                k += 1;
            }
        }
        1.0 / (1.0 + (-score).exp())
    }

    /// Fitness plus Gaussian noise fixed by `(noise_seed, arch)`, clamped to
    /// [0, 1]. Repeated calls agree.
    pub fn noisy_fitness(&self, arch: &DiscreteArch, noise_seed: u64) -> f64 {
        if self.noise == 0.0 {
            return self.fitness(arch);
        }
        let key: Vec<u64> = std::iter::once(tag::NOISE).chain(arch.selection().iter().map(|&op| op as u64)).collect();
        let z: f64 = StandardNormal.sample(&mut seeded(derive_seed(noise_seed, &key)));
        (self.fitness(arch) + self.noise * z).clamp(0.0, 1.0)
    }
}

pub fn build_truth_synthetic(space: &SearchSpace, landscape: &SyntheticLandscape) -> Result<GroundTruthTable, OracleError> {
    if landscape.num_edges() != space.num_edges() {
        return Err(OracleError::Format(format!(
            "landscape has {} edges, space has {}",
            landscape.num_edges(),
            space.num_edges()
        )));
    }
    let archs = enumerate_space(space, SYNTHETIC_TRUTH_CAP)?;
    let fitness = archs.par_iter().map(|a| landscape.fitness(a)).collect();
    Ok(GroundTruthTable { space: space.clone(), fitness, provenance: Provenance::Synthetic })
}

/// Fitness model backed by a synthetic landscape: estimates are the true
/// fitness plus per-architecture noise. An inherited estimator keeps its
/// noise draw, a fresh one redraws it.
pub struct LandscapeModel<'a> {
    pub landscape: &'a SyntheticLandscape,
}

pub struct LandscapeEstimator<'a> {
    pub landscape: &'a SyntheticLandscape,
    pub noise_seed: u64,
}

impl Evaluator for LandscapeEstimator<'_> {
    fn evaluate(&self, arch: &DiscreteArch) -> Result<f64, BoxError> {
        Ok(self.landscape.noisy_fitness(arch, self.noise_seed))
    }
}

impl<'a> FitnessModel for LandscapeModel<'a> {
    type Estimator = LandscapeEstimator<'a>;

    fn initial(&self, _: &SearchSpace, seeds: StageSeeds) -> Result<Self::Estimator, BoxError> {
        Ok(LandscapeEstimator { landscape: self.landscape, noise_seed: seeds.init })
    }

    fn reduced(
        &self,
        previous: &Self::Estimator,
        _: &SearchSpace,
        mode: InheritMode,
        seeds: StageSeeds,
    ) -> Result<Self::Estimator, BoxError> {
        let noise_seed = match mode {
            InheritMode::Inherit => previous.noise_seed,
            InheritMode::Fresh => seeds.init,
        };
        Ok(LandscapeEstimator { landscape: self.landscape, noise_seed })
    }
}

/// Tie-corrected Kendall rank correlation (tau-b).
pub fn kendall_tau(xs: &[f64], ys: &[f64]) -> Result<f64, OracleError> {
    if xs.len() != ys.len() {
        return Err(OracleError::LengthMismatch(xs.len(), ys.len()));
    }
    let n = xs.len();
    if n < 2 {
        return Err(OracleError::TooFewPoints(n));
    }
    let (mut concordant, mut discordant, mut tied_x, mut tied_y) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let dx = xs[i].partial_cmp(&xs[j]).expect("finite inputs");
            let dy = ys[i].partial_cmp(&ys[j]).expect("finite inputs");
            use std::cmp::Ordering::Equal;
            match (dx, dy) {
                (Equal, Equal) => {
                    tied_x += 1;
                    tied_y += 1;
                }
                (Equal, _) => tied_x += 1,
                (_, Equal) => tied_y += 1,
                _ if dx == dy => concordant += 1,
                _ => discordant += 1,
            }
        }
    }
    let pairs = (n * (n - 1) / 2) as i64;
    if tied_x == pairs {
        return Err(OracleError::ConstantInput("first"));
    }
    if tied_y == pairs {
        return Err(OracleError::ConstantInput("second"));
    }
    let denom = (((pairs - tied_x) as f64) * ((pairs - tied_y) as f64)).sqrt();
    Ok(((concordant - discordant) as f64 / denom).clamp(-1.0, 1.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationEntry {
    pub op_count: usize,
    pub arch_count: usize,
    /// `None` when one side was constant and the correlation is undefined.
    pub tau: Option<f64>,
}

/// Kendall tau per search stage.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub stages: Vec<CorrelationEntry>,
}

impl CorrelationReport {
    /// Header `stage,op_count,arch_count,kendall_tau`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), OracleError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["stage", "op_count", "arch_count", "kendall_tau"])?;
        for (i, s) in self.stages.iter().enumerate() {
            w.write_record([i.to_string(), s.op_count.to_string(), s.arch_count.to_string(), s.tau.map(|t| t.to_string()).unwrap_or_default()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Kendall tau between the supernet's fitness estimates and the truth over
/// every architecture of the supernet's space. The truth table may cover a
/// larger space that contains it. A constant side yields `tau: None`.
pub fn supernet_truth_correlation(
    net: &Supernet,
    val: &Dataset,
    truth: &GroundTruthTable,
) -> Result<CorrelationEntry, OracleError> {
    let space = net.space();
    if !space.is_subspace_of(truth.space()) {
        return Err(OracleError::NotSubspace);
    }
    let archs = enumerate_space(space, TRAINED_TRUTH_CAP.max(truth.len() as u64))?;
    let estimates = archs
        .par_iter()
        .map(|a| evaluate_fitness(net, a, val))
        .collect::<Result<Vec<f64>, SupernetError>>()?;
    let truths: Vec<f64> = archs.iter().map(|a| truth.get(a).expect("subspace")).collect();
    let tau = match kendall_tau(&estimates, &truths) {
        Ok(t) => Some(t),
        Err(OracleError::ConstantInput(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(CorrelationEntry { op_count: space.max_ops_per_edge(), arch_count: archs.len(), tau })
}

/// Runs the progressive search and measures, after training each stage's
/// supernet, how well it ranks that stage's architectures.
pub fn correlation_study(
    train: &Dataset,
    val: &Dataset,
    full: &SearchSpace,
    config: &ScheduleConfig,
    truth: &GroundTruthTable,
) -> Result<(RunResult, CorrelationReport), DriverError> {
    let model = SupernetModel::new(train, val, config.train.clone());
    let mut report = CorrelationReport::default();
    let mut observe = |_: usize, _: &SearchSpace, est: &SupernetEstimator<'_>| -> Result<Option<String>, BoxError> {
        report.stages.push(supernet_truth_correlation(&est.net, val, truth)?);
        Ok(None)
    };
    let result = run_progressive(&model, full, config, &mut observe)?;
    Ok((result, report))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionQuality {
    pub arch_count: usize,
    pub mean_fitness: f64,
    pub max_fitness: f64,
    /// Mean over the region of each architecture's quantile in the full
    /// space: the fraction of other architectures with strictly lower truth,
    /// ties counting half.
    pub mean_quantile: f64,
}

/// Quantile of every entry of `values` among all of them.
pub fn quantiles(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    values
        .iter()
        .map(|&v| {
            let lower = sorted.partition_point(|&x| x < v);
            let equal = sorted.partition_point(|&x| x <= v) - lower;
            (lower as f64 + 0.5 * (equal - 1) as f64) / n as f64
        })
        .collect()
}

pub fn region_quality(space: &SearchSpace, truth: &GroundTruthTable) -> Result<RegionQuality, OracleError> {
    if !space.is_subspace_of(truth.space()) {
        return Err(OracleError::NotSubspace);
    }
    let q = quantiles(truth.values());
    let archs = enumerate_space(space, u64::MAX)?;
    let idx: Vec<usize> = archs.iter().map(|a| arch_index(truth.space(), a).expect("subspace") as usize).collect();
    let n = idx.len() as f64;
    Ok(RegionQuality {
        arch_count: idx.len(),
        mean_fitness: idx.iter().map(|&i| truth.values()[i]).sum::<f64>() / n,
        max_fitness: idx.iter().map(|&i| truth.values()[i]).fold(f64::NEG_INFINITY, f64::max),
        mean_quantile: idx.iter().map(|&i| q[i]).sum::<f64>() / n,
    })
}

/// One row per architecture of the truth table's space, with membership
/// flags for each labeled region.
#[derive(Clone, Debug, PartialEq)]
pub struct SpacePlot {
    pub labels: Vec<String>,
    pub rows: Vec<PlotRow>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlotRow {
    pub index: usize,
    pub arch: DiscreteArch,
    pub fitness: f64,
    pub member: Vec<bool>,
}

pub fn export_space_plot(truth: &GroundTruthTable, spaces: &[(String, SearchSpace)]) -> Result<SpacePlot, OracleError> {
    if spaces.iter().any(|(_, s)| !s.is_subspace_of(truth.space())) {
        return Err(OracleError::NotSubspace);
    }
    let rows = truth
        .architectures()
        .into_iter()
        .zip(truth.values())
        .enumerate()
        .map(|(index, (arch, &fitness))| {
            let member = spaces.iter().map(|(_, s)| s.contains(&arch)).collect();
            PlotRow { index, arch, fitness, member }
        })
        .collect();
    Ok(SpacePlot { labels: spaces.iter().map(|(l, _)| l.clone()).collect(), rows })
}

impl SpacePlot {
    /// Header `index,arch,fitness,<label>...`; flags are 0 or 1.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), OracleError> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["index".to_string(), "arch".into(), "fitness".into()];
        header.extend(self.labels.iter().cloned());
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![r.index.to_string(), r.arch.to_string(), r.fitness.to_string()];
            rec.extend(r.member.iter().map(|&m| if m { "1" } else { "0" }.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Count of member architectures per label.
    pub fn membership_counts(&self) -> BTreeMap<String, usize> {
        self.labels
            .iter()
            .enumerate()
            .map(|(k, l)| (l.clone(), self.rows.iter().filter(|r| r.member[k]).count()))
            .collect()
    }
}
