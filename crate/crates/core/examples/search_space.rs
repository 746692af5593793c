//! Build the six-edge, five-operation cell space, sample and discretize
//! architecture parameters, and shrink the space the way the progressive
//! search does.
//!
//! cargo run --example search_space

use progressive_nas::archspace::{
    arch_at, arch_index, cardinality, discretize, new_full_space, reduce_topk, sample_arch, CellTopology,
    OperationCatalog,
};
use progressive_nas::rng::seeded;

fn main() {
    let space = new_full_space(CellTopology::dense(4).unwrap(), OperationCatalog::standard());
    let names: Vec<&str> = space.catalog().ops().iter().map(|o| o.name.as_str()).collect();
    println!("edges: {}", space.topology().edges().iter().map(|e| e.to_string()).collect::<Vec<_>>().join(" "));
    println!("operations: {names:?}");
    println!("architectures: {}", cardinality(&space).unwrap());

    let mut rng = seeded(42);
    let alpha = sample_arch(&space, &mut rng);
    let arch = discretize(&alpha, &space);
    println!("\nsampled alpha (row per edge):");
    for row in alpha.rows() {
        println!("  {}", row.iter().map(|v| format!("{:.3}", v.unwrap())).collect::<Vec<_>>().join("  "));
    }
    println!("discretized: {arch}");

    let three = reduce_topk(&alpha, &space, 3).unwrap();
    println!("\ntop-3 per edge: {:?} -> {} archs", three.allowed_sets(), cardinality(&three).unwrap());
    let next = sample_arch(&three, &mut rng);
    let two = reduce_topk(&next, &three, 2).unwrap();
    println!("top-2 per edge: {:?} -> {} archs", two.allowed_sets(), cardinality(&two).unwrap());

    let index = arch_index(&space, &arch).unwrap();
    println!("\ncanonical index of {arch}: {index}; arch_at({index}) = {}", arch_at(&space, index).unwrap());
}
