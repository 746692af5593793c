#![allow(dead_code)]

use progressive_nas::archspace::{new_full_space, sample_arch, CellTopology, OpKind, OperationCatalog, SearchSpace};
use progressive_nas::dataset::{make_blobs, split, Dataset};
use progressive_nas::oracle::{build_truth_trained, GroundTruthTable};
use progressive_nas::rng::seeded;
use progressive_nas::supernet::{Supernet, TrainConfig};

/// Five-operation catalog over the dense 4-node cell: 6 edges, 15,625 archs.
pub fn s2_space() -> SearchSpace {
    new_full_space(CellTopology::dense(4).unwrap(), OperationCatalog::standard())
}

/// 3 edges x {zero, skip, linear_relu}: 27 archs.
pub fn tiny_space() -> SearchSpace {
    let cat = OperationCatalog::from_kinds(&[OpKind::Zero, OpKind::Skip, OpKind::LinearRelu]).unwrap();
    new_full_space(CellTopology::dense(3).unwrap(), cat)
}

/// The default toy task: 4 classes, 8 features, 128 train / 128 val.
pub fn toy_task() -> (Dataset, Dataset) {
    let data = make_blobs(4, 64, 8, 1.0, 0).unwrap();
    split(&data, 0.5, 0).unwrap()
}

pub struct ToyPipeline {
    pub space: SearchSpace,
    pub train: Dataset,
    pub val: Dataset,
    pub train_config: TrainConfig,
    pub truth: GroundTruthTable,
}

/// Tiny space on the toy task with a trained truth table.
pub fn toy_pipeline() -> ToyPipeline {
    let space = tiny_space();
    let (train, val) = toy_task();
    let train_config = TrainConfig::default();
    let truth = build_truth_trained(&space, &train, &val, &train_config).unwrap();
    ToyPipeline { space, train, val, train_config, truth }
}

/// Largest relative error between analytic and central-difference
/// gradients over every parameter, for the mixed pass under a random
/// architecture. Relative error is `|a - n| / max(|a|, |n|, floor)`; each
/// parameter keeps its best match over the step sizes in `steps`, since a
/// large step can straddle a ReLU kink and a small one drowns in roundoff.
pub fn max_gradient_error(net: &mut Supernet, x: &[f64], y: &[usize], alpha_seed: u64, steps: &[f64], floor: f64) -> f64 {
    let arch = sample_arch(net.space(), &mut seeded(alpha_seed));
    let pass = net.forward_mixed(&arch, x).unwrap();
    let (_, grads) = net.loss_and_backward(&pass, y).unwrap();
    let loss_at = |net: &Supernet| -> f64 {
        let p = net.forward_mixed(&arch, x).unwrap();
        net.loss_and_backward(&p, y).unwrap().0
    };
    let lens: Vec<usize> = grads.tensors().iter().map(|t| t.len()).collect();
    let mut worst: f64 = 0.0;
    for (t, &len) in lens.iter().enumerate() {
        for i in 0..len {
            let orig = net.params().tensors()[t][i];
            let analytic = grads.tensors()[t][i];
            let mut best = f64::INFINITY;
            for &eps in steps {
                net.params_mut().tensors_mut()[t][i] = orig + eps;
                let up = loss_at(net);
                net.params_mut().tensors_mut()[t][i] = orig - eps;
                let down = loss_at(net);
                net.params_mut().tensors_mut()[t][i] = orig;
                let numeric = (up - down) / (2.0 * eps);
                best = best.min((analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor));
            }
            worst = worst.max(best);
        }
    }
    worst
}

pub const FD_STEPS: [f64; 3] = [1e-4, 1e-5, 1e-6];
pub const FD_FLOOR: f64 = 1e-6;

/// Random features and labels for gradient checks.
pub fn random_batch(n: usize, d: usize, classes: usize, seed: u64) -> (Vec<f64>, Vec<usize>) {
    use rand::Rng;
    let mut rng = seeded(seed);
    let x = (0..n * d).map(|_| rng.random_range(-1.5..1.5)).collect();
    let y = (0..n).map(|_| rng.random_range(0..classes)).collect();
    (x, y)
}
