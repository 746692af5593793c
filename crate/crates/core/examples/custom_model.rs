//! Plug a custom fitness model into the progressive driver and watch each
//! stage through an observer. The model here scores architectures by
//! parameter count, preferring cheap cells.
//!
//! cargo run --example custom_model

use progressive_nas::archspace::{new_full_space, CellTopology, DiscreteArch, OperationCatalog, SearchSpace};
use progressive_nas::driver::{run_progressive, FitnessModel, ScheduleConfig, StageSeeds};
use progressive_nas::evolution::{BoxError, Evaluator};
use progressive_nas::supernet::InheritMode;

struct Cheapness {
    catalog: OperationCatalog,
}

impl Evaluator for Cheapness {
    fn evaluate(&self, arch: &DiscreteArch) -> Result<f64, BoxError> {
        let parametric = arch.selection().iter().filter(|&&op| self.catalog.kind(op).is_parametric()).count();
        Ok(1.0 - parametric as f64 / arch.num_edges() as f64)
    }
}

struct CheapnessModel;

impl FitnessModel for CheapnessModel {
    type Estimator = Cheapness;

    fn initial(&self, space: &SearchSpace, _: StageSeeds) -> Result<Cheapness, BoxError> {
        Ok(Cheapness { catalog: space.catalog().clone() })
    }

    fn reduced(&self, _: &Cheapness, space: &SearchSpace, _: InheritMode, seeds: StageSeeds) -> Result<Cheapness, BoxError> {
        self.initial(space, seeds)
    }
}

fn main() {
    let space = new_full_space(CellTopology::dense(4).unwrap(), OperationCatalog::standard());
    let mut observer = |stage: usize, space: &SearchSpace, _: &Cheapness| -> Result<Option<String>, BoxError> {
        println!("stage {stage}: searching {:?}", space.allowed_sets());
        Ok(None)
    };
    let result = run_progressive(&CheapnessModel, &space, &ScheduleConfig::new(vec![5, 3, 2], 0), &mut observer).unwrap();
    println!("final {} with fitness {}", result.final_arch, result.final_fitness);
}
