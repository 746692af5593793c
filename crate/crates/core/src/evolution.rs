//! Genetic algorithm over [`ArchParams`] genotypes: tournament selection,
//! per-edge crossover, row-resampling mutation and elitism, stopping once
//! the best discrete architecture has held for a number of generations.

use std::io::Write;

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::archspace::{discretize, sample_arch, sample_row, ArchParams, DiscreteArch, SearchSpace};
use crate::rng::seeded;

pub type BoxError = Box<dyn std::error::Error + Send + Sync>;

#[derive(Debug, Error)]
pub enum EvoError {
    #[error("invalid evolution configuration: {0}")]
    InvalidConfig(String),
    #[error("individual {0} has not been evaluated")]
    Unevaluated(usize),
    #[error("parents have different shapes")]
    ShapeMismatch,
    #[error("evaluating {arch} failed: {source}")]
    Evaluator { arch: DiscreteArch, source: BoxError },
    #[error("evaluator returned {value} for {arch}; fitness must lie in [0, 1]")]
    FitnessOutOfRange { arch: DiscreteArch, value: f64 },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Fitness oracle for discrete architectures. Implementations must be pure:
/// the same architecture always gets the same fitness.
pub trait Evaluator: Sync {
    fn evaluate(&self, arch: &DiscreteArch) -> Result<f64, BoxError>;
}

impl<F> Evaluator for F
where
    F: Fn(&DiscreteArch) -> Result<f64, BoxError> + Sync,
{
    fn evaluate(&self, arch: &DiscreteArch) -> Result<f64, BoxError> {
        self(arch)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub arch: ArchParams,
    pub discrete: DiscreteArch,
    pub fitness: Option<f64>,
}

impl Individual {
    pub fn new(arch: ArchParams, space: &SearchSpace) -> Self {
        let discrete = discretize(&arch, space);
        Individual { arch, discrete, fitness: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvoConfig {
    pub population_size: usize,
    pub tournament_size: usize,
    pub mutation_rate: f64,
    pub convergence_count: usize,
    pub max_generations: usize,
    pub seed: u64,
}

impl Default for EvoConfig {
    fn default() -> Self {
        EvoConfig {
            population_size: 20,
            tournament_size: 5,
            mutation_rate: 0.1,
            convergence_count: 10,
            max_generations: 200,
            seed: 0,
        }
    }
}

impl EvoConfig {
    pub fn validate(&self) -> Result<(), EvoError> {
        let bad = |m: String| Err(EvoError::InvalidConfig(m));
        if self.population_size < 2 {
            return bad(format!("population_size must be at least 2, got {}", self.population_size));
        }
        if self.tournament_size < 2 || self.tournament_size > self.population_size {
            return bad(format!(
                "tournament_size must lie in 2..={}, got {}",
                self.population_size, self.tournament_size
            ));
        }
        if !(0.0..=1.0).contains(&self.mutation_rate) {
            return bad(format!("mutation_rate must lie in [0, 1], got {}", self.mutation_rate));
        }
        if self.convergence_count < 1 {
            return bad("convergence_count must be at least 1".into());
        }
        if self.max_generations < 1 {
            return bad("max_generations must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub generation: usize,
    pub best_fitness: f64,
    pub best_arch: DiscreteArch,
    pub mean_fitness: f64,
    /// Cumulative evaluator calls up to and including this generation.
    pub evaluations: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvolutionLog {
    pub records: Vec<GenerationRecord>,
}

impl EvolutionLog {
    pub fn evaluations(&self) -> usize {
        self.records.last().map_or(0, |r| r.evaluations)
    }

    /// Writes `generation,best_fitness,mean_fitness,evaluations,best_arch`
    /// rows with a header.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), EvoError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["generation", "best_fitness", "mean_fitness", "evaluations", "best_arch"])?;
        for r in &self.records {
            w.write_record([
                r.generation.to_string(),
                r.best_fitness.to_string(),
                r.mean_fitness.to_string(),
                r.evaluations.to_string(),
                r.best_arch.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn init_population<R: Rng + ?Sized>(space: &SearchSpace, size: usize, rng: &mut R) -> Vec<Individual> {
    (0..size).map(|_| Individual::new(sample_arch(space, rng), space)).collect()
}

fn fitness_of(pop: &[Individual], i: usize) -> Result<f64, EvoError> {
    pop[i].fitness.ok_or(EvoError::Unevaluated(i))
}

/// Index of the fittest individual; ties go to the earliest.
fn best_index(pop: &[Individual]) -> Result<usize, EvoError> {
    let mut best = 0;
    let mut best_fit = fitness_of(pop, 0)?;
    for i in 1..pop.len() {
        let f = fitness_of(pop, i)?;
        if f > best_fit {
            best = i;
            best_fit = f;
        }
    }
    Ok(best)
}

/// Samples `size` distinct individuals and returns the fittest (earliest
/// population index on ties).
pub fn tournament_select<'a, R: Rng + ?Sized>(
    pop: &'a [Individual],
    size: usize,
    rng: &mut R,
) -> Result<&'a Individual, EvoError> {
    if size == 0 || size > pop.len() {
        return Err(EvoError::InvalidConfig(format!("tournament of {size} from {} individuals", pop.len())));
    }
    let mut contenders = index::sample(rng, pop.len(), size).into_vec();
    contenders.sort_unstable();
    let mut winner = contenders[0];
    let mut winner_fit = fitness_of(pop, winner)?;
    for &i in &contenders[1..] {
        let f = fitness_of(pop, i)?;
        if f > winner_fit {
            winner = i;
            winner_fit = f;
        }
    }
    Ok(&pop[winner])
}

/// Child whose every row is copied whole from one parent, chosen per edge
/// with probability one half.
pub fn crossover<R: Rng + ?Sized>(p1: &ArchParams, p2: &ArchParams, rng: &mut R) -> Result<ArchParams, EvoError> {
    if p1.num_rows() != p2.num_rows() || p1.rows().iter().zip(p2.rows()).any(|(a, b)| a.len() != b.len()) {
        return Err(EvoError::ShapeMismatch);
    }
    Ok(ArchParams::from_rows(
        p1.rows()
            .iter()
            .zip(p2.rows())
            .map(|(a, b)| if rng.random_bool(0.5) { a.clone() } else { b.clone() })
            .collect(),
    ))
}

/// Each row is independently replaced by a fresh uniform sample with
/// probability `rate`.
pub fn mutate<R: Rng + ?Sized>(mut child: ArchParams, rate: f64, space: &SearchSpace, rng: &mut R) -> ArchParams {
    for e in 0..child.num_rows() {
        if rng.random::<f64>() < rate {
            child.set_row(e, sample_row(space, e, rng));
        }
    }
    child
}

/// Next population: the current best copied unchanged into the first slot,
/// then offspring from two tournaments, crossover and mutation.
pub fn evolve_generation<R: Rng + ?Sized>(
    pop: &[Individual],
    space: &SearchSpace,
    config: &EvoConfig,
    rng: &mut R,
) -> Result<Vec<Individual>, EvoError> {
    let elite = best_index(pop)?;
    let mut next = Vec::with_capacity(config.population_size);
    next.push(pop[elite].clone());
    while next.len() < config.population_size {
        let p1 = tournament_select(pop, config.tournament_size, rng)?;
        let p2 = tournament_select(pop, config.tournament_size, rng)?;
        let child = crossover(&p1.arch, &p2.arch, rng)?;
        next.push(Individual::new(mutate(child, config.mutation_rate, space, rng), space));
    }
    Ok(next)
}

/// Evaluates every individual, possibly in parallel. Results are written
/// back in population order so parallelism never changes the outcome.
fn evaluate_population<E: Evaluator + ?Sized>(pop: &mut [Individual], evaluator: &E) -> Result<(), EvoError> {
    let results: Vec<Result<f64, BoxError>> = pop.par_iter().map(|ind| evaluator.evaluate(&ind.discrete)).collect();
    for (ind, res) in pop.iter_mut().zip(results) {
        let value = res.map_err(|source| EvoError::Evaluator { arch: ind.discrete.clone(), source })?;
        if !(0.0..=1.0).contains(&value) {
            return Err(EvoError::FitnessOutOfRange { arch: ind.discrete.clone(), value });
        }
        ind.fitness = Some(value);
    }
    Ok(())
}

/// Runs the genetic algorithm until the best discrete architecture has been
/// the same for `convergence_count` consecutive generations, or
/// `max_generations` is reached.
pub fn run_ea<E: Evaluator + ?Sized>(
    space: &SearchSpace,
    evaluator: &E,
    config: &EvoConfig,
) -> Result<(Individual, EvolutionLog), EvoError> {
    config.validate()?;
    let mut rng = seeded(config.seed);
    let mut pop = init_population(space, config.population_size, &mut rng);
    let mut log = EvolutionLog::default();
    let mut streak = 0;
    let mut evaluations = 0;
    loop {
        evaluate_population(&mut pop, evaluator)?;
        evaluations += pop.len();
        let best = &pop[best_index(&pop)?];
        match log.records.last() {
            Some(prev) if prev.best_arch == best.discrete => streak += 1,
            _ => streak = 1,
        }
        let mean = pop.iter().filter_map(|i| i.fitness).sum::<f64>() / pop.len() as f64;
        log.records.push(GenerationRecord {
            generation: log.records.len(),
            best_fitness: best.fitness.expect("evaluated"),
            best_arch: best.discrete.clone(),
            mean_fitness: mean,
            evaluations,
        });
        if streak >= config.convergence_count || log.records.len() >= config.max_generations {
            return Ok((best.clone(), log));
        }
        pop = evolve_generation(&pop, space, config, &mut rng)?;
    }
}
