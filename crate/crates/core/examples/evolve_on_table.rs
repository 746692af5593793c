//! Run the genetic algorithm against an exact fitness table and compare
//! its answer with the true optimum.
//!
//! cargo run --example evolve_on_table

use progressive_nas::archspace::{new_full_space, CellTopology, DiscreteArch, OperationCatalog};
use progressive_nas::evolution::{run_ea, BoxError, EvoConfig};
use progressive_nas::oracle::{build_truth_synthetic, SyntheticLandscape};

fn main() {
    let space = new_full_space(CellTopology::dense(4).unwrap(), OperationCatalog::standard());
    let landscape = SyntheticLandscape::random(6, 5, 1.0, 0.5, 0.0, 3);
    let table = build_truth_synthetic(&space, &landscape).unwrap();
    let (optimum, best_fitness) = table.best();

    let evaluator = |arch: &DiscreteArch| -> Result<f64, BoxError> { Ok(table.get(arch).unwrap()) };
    let (best, log) = run_ea(&space, &evaluator, &EvoConfig { seed: 3, ..EvoConfig::default() }).unwrap();

    println!("generation  best     mean     evaluations  best arch");
    for r in &log.records {
        println!("{:>10}  {:.4}  {:.4}  {:>11}  {}", r.generation, r.best_fitness, r.mean_fitness, r.evaluations, r.best_arch);
    }
    let rank = table.values().iter().filter(|&&f| f > best.fitness.unwrap()).count() + 1;
    println!("\nfound {} ({:.4}), rank {rank} of {}", best.discrete, best.fitness.unwrap(), table.len());
    println!("optimum {optimum} ({best_fitness:.4})");

    let mut csv = Vec::new();
    log.write_csv(&mut csv).unwrap();
    println!("\nlog as CSV starts with: {}", String::from_utf8(csv).unwrap().lines().next().unwrap());
}
