//! Where in the space do the reductions land? Score all 15,625
//! architectures on a synthetic landscape, run the progressive search and a
//! random reduction with a noisy estimator, and write a per-architecture
//! table with region membership columns for plotting.
//!
//! cargo run --release --example visualize_reduction [output.csv]

use std::fs::File;
use std::io::BufWriter;

use progressive_nas::archspace::{new_full_space, CellTopology, OperationCatalog};
use progressive_nas::driver::{run_progressive, run_random_reduction, NoObserver, ScheduleConfig};
use progressive_nas::oracle::{build_truth_synthetic, export_space_plot, region_quality, LandscapeModel, SyntheticLandscape};

fn main() {
    let path = std::env::args().nth(1).unwrap_or_else(|| "space_plot.csv".into());
    let space = new_full_space(CellTopology::dense(4).unwrap(), OperationCatalog::standard());
    let landscape = SyntheticLandscape::random(6, 5, 1.0, 0.5, 0.05, 4);
    let truth = build_truth_synthetic(&space, &landscape).unwrap();
    let model = LandscapeModel { landscape: &landscape };
    let config = ScheduleConfig::new(vec![5, 3, 2], 4);

    let progressive = run_progressive(&model, &space, &config, &mut NoObserver).unwrap();
    let random = run_random_reduction(&model, &space, &config, &mut NoObserver).unwrap();

    let mut regions = Vec::new();
    for stage in &progressive.stages {
        regions.push((format!("progressive_ops{}", stage.op_count), stage.space.clone()));
    }
    regions.push(("random_ops2".to_string(), random.final_space().clone()));

    println!("region                 archs  mean truth  max truth  mean quantile");
    for (label, region) in &regions {
        let q = region_quality(region, &truth).unwrap();
        println!("{label:<20} {:>7}  {:>10.3}  {:>9.3}  {:>13.3}", q.arch_count, q.mean_fitness, q.max_fitness, q.mean_quantile);
    }

    let plot = export_space_plot(&truth, &regions).unwrap();
    plot.write_csv(BufWriter::new(File::create(&path).unwrap())).unwrap();
    println!("\nwrote {} rows to {path}", plot.rows.len());
}
