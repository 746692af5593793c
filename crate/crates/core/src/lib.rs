//! Progressive evolutionary architecture search over small cell spaces.
//!
//! A weight-sharing supernet is trained on the current search space, a
//! genetic algorithm searches that space using the supernet as its fitness
//! estimate, and the space is then cut to the top-k operations per edge of
//! the best architecture's parameters. The reduced supernet inherits the
//! surviving weights and the loop repeats down the schedule.
//!
//! The examples directory is the main guide:
//!
//! ```text
//! examples/
//! ├── search_space.rs         spaces, sampling, discretization, top-k reduction
//! ├── train_supernet.rs       supernet training, scoring, checkpoints
//! ├── evolve_on_table.rs      the genetic algorithm against an exact table
//! ├── progressive_search.rs   the full staged search with weight inheritance
//! ├── ablations.rs            fresh-weight and random-reduction baselines
//! ├── correlation_study.rs    supernet vs trained-from-scratch rank agreement
//! ├── visualize_reduction.rs  region quality and a per-architecture plot table
//! ├── custom_model.rs         plugging a custom fitness model into the driver
//! └── configs/toy.toml        a complete CLI run configuration
//! ```
//!
//! ```bash
//! cargo run --release --example progressive_search
//! ```

pub mod archspace;
pub mod cli;
pub mod dataset;
pub mod driver;
pub mod evolution;
pub mod oracle;
pub mod rng;
pub mod supernet;
