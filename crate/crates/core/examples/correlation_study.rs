//! How well does the supernet rank architectures at each stage? Train every
//! architecture of a 27-arch space from scratch, then compare the
//! supernet's estimates against that truth with Kendall's tau.
//!
//! cargo run --release --example correlation_study

use progressive_nas::archspace::{new_full_space, CellTopology, OpKind, OperationCatalog};
use progressive_nas::dataset::{make_blobs, split};
use progressive_nas::driver::ScheduleConfig;
use progressive_nas::oracle::{build_truth_trained, correlation_study};
use progressive_nas::supernet::TrainConfig;

fn main() {
    let catalog = OperationCatalog::from_kinds(&[OpKind::Zero, OpKind::Skip, OpKind::LinearRelu]).unwrap();
    let space = new_full_space(CellTopology::dense(3).unwrap(), catalog);
    let data = make_blobs(4, 64, 8, 1.0, 0).unwrap();
    let (train, val) = split(&data, 0.5, 0).unwrap();

    let truth = build_truth_trained(&space, &train, &val, &TrainConfig::default()).unwrap();
    let (best, acc) = truth.best();
    println!("trained {} architectures from scratch; best {best} at {acc:.3}\n", truth.len());

    println!("seed  tau(3 ops, 27 archs)  tau(2 ops, 8 archs)");
    for seed in 0..5 {
        let config = ScheduleConfig::new(vec![3, 2], seed);
        let (_, report) = correlation_study(&train, &val, &space, &config, &truth).unwrap();
        let taus: Vec<String> =
            report.stages.iter().map(|s| s.tau.map_or("undefined".into(), |t| format!("{t:+.3}"))).collect();
        println!("{seed:>4}  {:>20}  {:>19}", taus[0], taus[1]);
    }
}
