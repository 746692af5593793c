//! The full progressive search on the toy task: evolve on five operations
//! per edge, keep the top three, then the top two, inheriting supernet
//! weights at each reduction.
//!
//! cargo run --release --example progressive_search

use progressive_nas::archspace::{new_full_space, CellTopology, OperationCatalog};
use progressive_nas::dataset::{make_blobs, split};
use progressive_nas::driver::{run_pevonas, ScheduleConfig, StageSearch};

fn main() {
    let data = make_blobs(4, 64, 8, 1.0, 0).unwrap();
    let (train, val) = split(&data, 0.5, 0).unwrap();
    let space = new_full_space(CellTopology::dense(4).unwrap(), OperationCatalog::standard());
    let config = ScheduleConfig::new(vec![5, 3, 2], 11);

    let result = run_pevonas(&train, &val, &space, &config).unwrap();
    for stage in &result.stages {
        let generations = match &stage.search {
            StageSearch::Evolution { log } => log.records.len(),
            StageSearch::RandomSampling { .. } => 0,
        };
        println!(
            "stage {}: {} ops/edge, {:>6} archs, {:>3} generations, best {} ({:.3}) in {:.2?}",
            stage.stage,
            stage.op_count,
            stage.cardinality,
            generations,
            stage.best.discrete,
            stage.best.fitness.unwrap(),
            stage.duration
        );
    }
    let names: Vec<&str> = result.final_arch.selection().iter().map(|&op| space.catalog().name(op)).collect();
    println!("\nfinal architecture {} = {names:?}", result.final_arch);
    println!("final space {:?}", result.final_space().allowed_sets());
}
