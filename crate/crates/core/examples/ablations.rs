//! Compare the progressive search with its two ablations on the same seeds:
//! fresh weights at every reduction, and a random reduction followed by the
//! best of 100 random architectures.
//!
//! cargo run --release --example ablations

use progressive_nas::archspace::{new_full_space, CellTopology, OperationCatalog};
use progressive_nas::dataset::{make_blobs, split};
use progressive_nas::driver::{run_no_inherit, run_pevonas, run_random_baseline, ScheduleConfig};

fn main() {
    let data = make_blobs(4, 64, 8, 1.0, 0).unwrap();
    let (train, val) = split(&data, 0.5, 0).unwrap();
    let space = new_full_space(CellTopology::dense(4).unwrap(), OperationCatalog::standard());

    println!("seed  progressive         no-inherit          random-baseline");
    for seed in 0..3 {
        let mut config = ScheduleConfig::new(vec![5, 3, 2], seed);
        config.train.epochs = 10;
        let runs = [
            run_pevonas(&train, &val, &space, &config).unwrap(),
            run_no_inherit(&train, &val, &space, &config).unwrap(),
            run_random_baseline(&train, &val, &space, &config).unwrap(),
        ];
        let cells: Vec<String> = runs.iter().map(|r| format!("{} {:.3}", r.final_arch, r.final_fitness)).collect();
        println!("{seed:>4}  {}", cells.join("   "));
    }
    println!("\nfitness is the supernet's estimate on the validation split");
}
