//! Forward and backward passes.
//!
//! Activations are `batch x d` row-major matrices, one per node. Edges are
//! visited in canonical lexicographic order, which guarantees a node is
//! complete before any of its outgoing edges reads it; the backward pass
//! walks the same order in reverse.

use super::{OpParams, ParamSet, SelectionMode, Supernet, SupernetError};
use crate::archspace::{ArchParams, DiscreteArch, OpKind};

/// Softmax with max subtraction.
pub fn softmax_weights(row: &[f64]) -> Vec<f64> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = row.iter().map(|&v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|v| v / total).collect()
}

/// Per edge, the operations that run and their weights.
type EdgeMix = Vec<(usize, f64)>;

/// Cached state of one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardPass {
    batch: usize,
    mixes: Vec<EdgeMix>,
    nodes: Vec<Vec<f64>>,
    /// Pre-activation of every linear+ReLU instance, keyed like `mixes`.
    relu_pre: Vec<Vec<Option<Vec<f64>>>>,
    logits: Vec<f64>,
}

impl ForwardPass {
    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn batch_size(&self) -> usize {
        self.batch
    }

    /// Activation matrix of `node`.
    pub fn activation(&self, node: usize) -> &[f64] {
        &self.nodes[node]
    }

    /// Predicted class per example; ties go to the lowest class index.
    pub fn predictions(&self) -> Vec<usize> {
        let c = self.logits.len() / self.batch.max(1);
        self.logits
            .chunks(c)
            .map(|row| {
                let mut best = 0;
                for k in 1..c {
                    if row[k] > row[best] {
                        best = k;
                    }
                }
                best
            })
            .collect()
    }
}

fn affine_into(weight: &[f64], bias: &[f64], x: &[f64], d: usize, out: &mut [f64]) {
    for (xr, yr) in x.chunks(d).zip(out.chunks_mut(d)) {
        for r in 0..d {
            let w = &weight[r * d..(r + 1) * d];
            yr[r] = bias[r] + w.iter().zip(xr).map(|(a, b)| a * b).sum::<f64>();
        }
    }
}

impl Supernet {
    fn mixed_weights(&self, arch: &ArchParams) -> Result<Vec<EdgeMix>, SupernetError> {
        arch.check_shape(self.space())?;
        Ok((0..self.space().num_edges())
            .map(|e| {
                let allowed = self.space().allowed(e);
                let row: Vec<f64> = allowed.iter().map(|&op| arch.get(e, op).unwrap()).collect();
                allowed.iter().copied().zip(softmax_weights(&row)).collect()
            })
            .collect())
    }

    fn discrete_weights(&self, arch: &DiscreteArch) -> Result<Vec<EdgeMix>, SupernetError> {
        if !self.space().contains(arch) {
            return Err(SupernetError::DimensionMismatch(format!("architecture {arch} is not in the supernet's space")));
        }
        Ok((0..self.space().num_edges())
            .map(|e| match self.selection() {
                SelectionMode::Hard => vec![(arch.op(e), 1.0)],
                SelectionMode::SoftmaxOneHot => {
                    let allowed = self.space().allowed(e);
                    let row: Vec<f64> = allowed.iter().map(|&op| if op == arch.op(e) { 1.0 } else { 0.0 }).collect();
                    allowed.iter().copied().zip(softmax_weights(&row)).collect()
                }
            })
            .collect())
    }

    /// Softmax-mixed forward pass: every allowed operation on an edge runs
    /// and contributes in proportion to the softmax of its weight in `arch`.
    pub fn forward_mixed(&self, arch: &ArchParams, features: &[f64]) -> Result<ForwardPass, SupernetError> {
        let mixes = self.mixed_weights(arch)?;
        self.forward_with(mixes, features)
    }

    /// Forward pass of a single architecture selected inside the supernet.
    pub fn forward_discrete(&self, arch: &DiscreteArch, features: &[f64]) -> Result<ForwardPass, SupernetError> {
        let mixes = self.discrete_weights(arch)?;
        self.forward_with(mixes, features)
    }

    fn forward_with(&self, mixes: Vec<EdgeMix>, features: &[f64]) -> Result<ForwardPass, SupernetError> {
        let d = self.feature_dim();
        if features.is_empty() || !features.len().is_multiple_of(d) {
            return Err(SupernetError::DimensionMismatch(format!(
                "{} feature values do not form rows of width {d}",
                features.len()
            )));
        }
        let batch = features.len() / d;
        let topo = self.space().topology();
        let catalog = self.space().catalog();
        let mut nodes: Vec<Vec<f64>> = (0..topo.num_nodes())
            .map(|n| if topo.is_input(n) { features.to_vec() } else { vec![0.0; batch * d] })
            .collect();
        let mut relu_pre: Vec<Vec<Option<Vec<f64>>>> = mixes.iter().map(|m| vec![None; m.len()]).collect();
        let mut y = vec![0.0; batch * d];

        for (e, edge) in topo.edges().iter().enumerate() {
            let (head, tail) = nodes.split_at_mut(edge.to);
            let x = &head[edge.from];
            let target = &mut tail[0];
            for (slot, &(op, w)) in mixes[e].iter().enumerate() {
                let params = self.params().op(e, op).expect("allowed op has parameters");
                match (catalog.kind(op), params) {
                    (OpKind::Zero, _) => {}
                    (OpKind::Skip, _) => {
                        for (t, xv) in target.iter_mut().zip(x) {
                            *t += w * xv;
                        }
                    }
                    (OpKind::Scale, OpParams::Scale { scale }) => {
                        for (t, xv) in target.iter_mut().zip(x) {
                            *t += w * scale * xv;
                        }
                    }
                    (OpKind::Linear, OpParams::Affine { weight, bias }) => {
                        affine_into(weight, bias, x, d, &mut y);
                        for (t, yv) in target.iter_mut().zip(&y) {
                            *t += w * yv;
                        }
                    }
                    (OpKind::LinearRelu, OpParams::Affine { weight, bias }) => {
                        affine_into(weight, bias, x, d, &mut y);
                        for (t, yv) in target.iter_mut().zip(&y) {
                            *t += w * yv.max(0.0);
                        }
                        relu_pre[e][slot] = Some(y.clone());
                    }
                    (kind, _) => unreachable!("parameters do not match {kind:?}"),
                }
            }
        }

        let out = topo.output_node();
        for &s in topo.output_sums() {
            let (head, tail) = nodes.split_at_mut(out);
            for (t, v) in tail[0].iter_mut().zip(&head[s]) {
                *t += v;
            }
        }
        if let Some(n) = nodes.iter().position(|a| a.iter().any(|v| !v.is_finite())) {
            return Err(SupernetError::NonFinite(format!("activation of node {n}")));
        }

        let c = self.class_count();
        let p = self.params();
        let mut logits = vec![0.0; batch * c];
        for (xr, lr) in nodes[out].chunks(d).zip(logits.chunks_mut(c)) {
            for k in 0..c {
                let w = &p.head_weight[k * d..(k + 1) * d];
                lr[k] = p.head_bias[k] + w.iter().zip(xr).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(SupernetError::NonFinite("logits".into()));
        }
        Ok(ForwardPass { batch, mixes, nodes, relu_pre, logits })
    }

    /// Mean softmax cross-entropy of a cached pass and its gradient with
    /// respect to every operation and head parameter. Architecture weights
    /// are constants.
    pub fn loss_and_backward(&self, pass: &ForwardPass, labels: &[usize]) -> Result<(f64, ParamSet), SupernetError> {
        let d = self.feature_dim();
        let c = self.class_count();
        let b = pass.batch;
        if labels.len() != b {
            return Err(SupernetError::DimensionMismatch(format!("{} labels for a batch of {b}", labels.len())));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= c) {
            return Err(SupernetError::DimensionMismatch(format!("label {l} outside 0..{c}")));
        }
        let topo = self.space().topology();
        let catalog = self.space().catalog();
        let p = self.params();
        let mut grads = p.zeros_like();

        // dL/dlogits = (softmax - onehot) / batch
        let mut loss = 0.0;
        let mut dlogits = vec![0.0; b * c];
        for (i, (row, drow)) in pass.logits.chunks(c).zip(dlogits.chunks_mut(c)).enumerate() {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let log_z = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            loss += log_z - row[labels[i]];
            for k in 0..c {
                drow[k] = (row[k] - log_z).exp() / b as f64;
            }
            drow[labels[i]] -= 1.0 / b as f64;
        }
        loss /= b as f64;
        if !loss.is_finite() {
            return Err(SupernetError::NonFinite("loss".into()));
        }

        let out = topo.output_node();
        let mut node_grads: Vec<Vec<f64>> = vec![vec![0.0; b * d]; topo.num_nodes()];
        for ((xr, dr), gr) in pass.nodes[out].chunks(d).zip(dlogits.chunks(c)).zip(node_grads[out].chunks_mut(d)) {
            for k in 0..c {
                let g = dr[k];
                grads.head_bias[k] += g;
                let gw = &mut grads.head_weight[k * d..(k + 1) * d];
                let w = &p.head_weight[k * d..(k + 1) * d];
                for j in 0..d {
                    gw[j] += g * xr[j];
                    gr[j] += g * w[j];
                }
            }
        }
        for &s in topo.output_sums() {
            let (head, tail) = node_grads.split_at_mut(out);
            for (g, v) in head[s].iter_mut().zip(&tail[0]) {
                *g += v;
            }
        }

        let mut gy = vec![0.0; b * d];
        for (e, edge) in topo.edges().iter().enumerate().rev() {
            let (head, tail) = node_grads.split_at_mut(edge.to);
            let g_in = &mut head[edge.from];
            let g_out = &tail[0];
            let x = &pass.nodes[edge.from];
            for (slot, &(op, w)) in pass.mixes[e].iter().enumerate() {
                match catalog.kind(op) {
                    OpKind::Zero => {}
                    OpKind::Skip => {
                        for (gi, go) in g_in.iter_mut().zip(g_out) {
                            *gi += w * go;
                        }
                    }
                    OpKind::Scale => {
                        let Some(OpParams::Scale { scale }) = p.op(e, op) else { unreachable!() };
                        let mut gs = 0.0;
                        for ((gi, go), xv) in g_in.iter_mut().zip(g_out).zip(x) {
                            gs += w * go * xv;
                            *gi += w * scale * go;
                        }
                        if let Some(Some(OpParams::Scale { scale })) = grads.ops[e].get_mut(op) {
                            *scale += gs;
                        }
                    }
                    OpKind::Linear | OpKind::LinearRelu => {
                        let Some(OpParams::Affine { weight, .. }) = p.op(e, op) else { unreachable!() };
                        let pre = pass.relu_pre[e][slot].as_deref();
                        for (i, (g, go)) in gy.iter_mut().zip(g_out).enumerate() {
                            *g = match pre {
                                Some(z) if z[i] <= 0.0 => 0.0,
                                _ => w * go,
                            };
                        }
                        let Some(Some(OpParams::Affine { weight: gw, bias: gb })) = grads.ops[e].get_mut(op) else {
                            unreachable!()
                        };
                        for ((xr, gr), gir) in x.chunks(d).zip(gy.chunks(d)).zip(g_in.chunks_mut(d)) {
                            for r in 0..d {
                                let g = gr[r];
                                if g == 0.0 {
                                    continue;
                                }
                                gb[r] += g;
                                let wrow = &weight[r * d..(r + 1) * d];
                                let gwrow = &mut gw[r * d..(r + 1) * d];
                                for col in 0..d {
                                    gwrow[col] += g * xr[col];
                                    gir[col] += g * wrow[col];
                                }
                            }
                        }
                    }
                }
            }
        }
        if !grads.all_finite() {
            return Err(SupernetError::NonFinite("gradients".into()));
        }
        Ok((loss, grads))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::archspace::{new_full_space, sample_arch, CellTopology, OperationCatalog, SearchSpace};
    use crate::rng::seeded;
    use proptest::prelude::*;
    use rand::Rng;

    fn s2() -> SearchSpace {
        new_full_space(CellTopology::dense(4).unwrap(), OperationCatalog::standard())
    }

    fn random_features(seed: u64, n: usize) -> Vec<f64> {
        let mut rng = seeded(seed);
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn softmax_examples() {
        let w = softmax_weights(&[0.0, 0.0, 0.0]);
        assert!(w.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));
        let w = softmax_weights(&[2f64.ln(), 0.0]);
        assert!((w[0] - 2.0 / 3.0).abs() < 1e-15 && (w[1] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(softmax_weights(&[123.4]), vec![1.0]);
        let w = softmax_weights(&[1000.0, 0.0]);
        assert!(w.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn equal_weights_average_the_ops() {
        // two nodes, one edge: the output is the mean of the op outputs
        let space = new_full_space(
            CellTopology::dense(2).unwrap(),
            OperationCatalog::from_kinds(&[OpKind::Zero, OpKind::Skip, OpKind::Linear]).unwrap(),
        );
        let net = Supernet::new(space.clone(), 3, 2, 4).unwrap();
        let x = random_features(1, 6);
        let arch = ArchParams::from_dense(&space, &[vec![0.3, 0.3, 0.3]]).unwrap();
        let mixed = net.forward_mixed(&arch, &x).unwrap();
        let outputs: Vec<Vec<f64>> = (0..3)
            .map(|op| net.forward_discrete(&DiscreteArch::new(vec![op]), &x).unwrap().activation(1).to_vec())
            .collect();
        for i in 0..6 {
            let mean = (outputs[0][i] + outputs[1][i] + outputs[2][i]) / 3.0;
            assert!((mixed.activation(1)[i] - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn all_skip_routes_dag_path_sums() {
        // With only skip on a dense 4-node cell: x1 = x0, x2 = x0 + x1 = 2 x0,
        // x3 = x0 + x1 + x2 = 4 x0.
        let space = new_full_space(CellTopology::dense(4).unwrap(), OperationCatalog::from_kinds(&[OpKind::Skip]).unwrap());
        let mut net = Supernet::new(space.clone(), 2, 2, 0).unwrap();
        net.params_mut().head_weight = vec![1.0, 0.0, 0.0, 1.0];
        let arch = sample_arch(&space, &mut seeded(0));
        let pass = net.forward_mixed(&arch, &[0.5, -1.5, 2.0, 0.25]).unwrap();
        assert_eq!(pass.logits(), &[2.0, -6.0, 8.0, 1.0]);
    }

    #[test]
    fn all_zero_arch_outputs_head_bias() {
        let mut net = Supernet::new(s2(), 4, 3, 2).unwrap();
        net.params_mut().head_bias = vec![0.1, -0.2, 0.3];
        let pass = net.forward_discrete(&DiscreteArch::new(vec![0; 6]), &random_features(3, 8)).unwrap();
        assert!(pass.activation(3).iter().all(|&v| v == 0.0));
        assert_eq!(pass.logits(), &[0.1, -0.2, 0.3, 0.1, -0.2, 0.3]);
    }

    #[test]
    fn single_op_spaces_make_both_passes_identical() {
        let base = s2();
        let space =
            SearchSpace::with_allowed(base.topology().clone(), base.catalog().clone(), vec![vec![3], vec![2], vec![4], vec![1], vec![3], vec![2]])
                .unwrap();
        let net = Supernet::new(space.clone(), 5, 3, 8).unwrap();
        let x = random_features(4, 20);
        let mixed = net.forward_mixed(&sample_arch(&space, &mut seeded(9)), &x).unwrap();
        let disc = net.forward_discrete(&DiscreteArch::new(vec![3, 2, 4, 1, 3, 2]), &x).unwrap();
        assert_eq!(mixed.logits(), disc.logits());
    }

    #[test]
    fn sharp_mixture_approaches_discrete() {
        let space = s2();
        let net = Supernet::new(space.clone(), 6, 4, 3).unwrap();
        let x = random_features(5, 30);
        let arch = DiscreteArch::new(vec![2, 3, 1, 4, 3, 2]);
        let rows: Vec<Vec<f64>> =
            (0..6).map(|e| (0..5).map(|op| if op == arch.op(e) { 50.0 } else { 0.0 }).collect()).collect();
        let mixed = net.forward_mixed(&ArchParams::from_dense(&space, &rows).unwrap(), &x).unwrap();
        let disc = net.forward_discrete(&arch, &x).unwrap();
        for (a, b) in mixed.logits().iter().zip(disc.logits()) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn softmax_one_hot_mode_keeps_other_ops() {
        let space = s2();
        let hard = Supernet::new(space.clone(), 4, 3, 3).unwrap();
        let soft = hard.clone().with_selection(SelectionMode::SoftmaxOneHot);
        let x = random_features(2, 8);
        let arch = DiscreteArch::new(vec![2; 6]);
        assert_ne!(hard.forward_discrete(&arch, &x).unwrap().logits(), soft.forward_discrete(&arch, &x).unwrap().logits());
    }

    #[test]
    fn uniform_logits_give_log_c_loss() {
        let mut net = Supernet::new(s2(), 4, 5, 0).unwrap();
        net.params_mut().head_weight.iter_mut().for_each(|w| *w = 0.0);
        let pass = net.forward_mixed(&sample_arch(&s2(), &mut seeded(1)), &random_features(0, 12)).unwrap();
        let (loss, _) = net.loss_and_backward(&pass, &[0, 1, 4]).unwrap();
        assert!((loss - 5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn dead_paths_get_zero_gradient() {
        // Edge (0,1) feeds node 1 whose only consumers select zero, so the
        // linear op on (0,1) receives no gradient.
        let net = Supernet::new(s2(), 4, 3, 7).unwrap();
        let arch = DiscreteArch::new(vec![2, 2, 3, 0, 0, 1]);
        let pass = net.forward_discrete(&arch, &random_features(1, 16)).unwrap();
        let (_, g) = net.loss_and_backward(&pass, &[0, 1, 2, 0]).unwrap();
        let Some(OpParams::Affine { weight, bias }) = g.op(0, 2) else { panic!() };
        assert!(weight.iter().chain(bias).all(|&v| v == 0.0));
        let Some(OpParams::Affine { weight, .. }) = g.op(1, 2) else { panic!() };
        assert!(weight.iter().any(|&v| v != 0.0));
    }

    #[test]
    fn rejects_bad_inputs() {
        let net = Supernet::new(s2(), 4, 3, 7).unwrap();
        assert!(net.forward_discrete(&DiscreteArch::new(vec![0; 5]), &[0.0; 4]).is_err());
        assert!(net.forward_discrete(&DiscreteArch::new(vec![0; 6]), &[0.0; 5]).is_err());
        let pass = net.forward_discrete(&DiscreteArch::new(vec![1; 6]), &[0.0; 4]).unwrap();
        assert!(net.loss_and_backward(&pass, &[3]).is_err());
        let nan = net.forward_discrete(&DiscreteArch::new(vec![1; 6]), &[f64::NAN, 0.0, 0.0, 0.0]);
        assert!(matches!(nan, Err(SupernetError::NonFinite(_))));
    }

    proptest! {
        #[test]
        fn row_shift_leaves_logits_unchanged(seed in any::<u64>(), shift in -20.0f64..20.0, edge in 0usize..6) {
            let space = s2();
            let net = Supernet::new(space.clone(), 4, 3, seed).unwrap();
            let arch = sample_arch(&space, &mut seeded(seed ^ 1));
            let mut moved = arch.clone();
            moved.set_row(edge, arch.row(edge).iter().map(|v| v.map(|x| x + shift)).collect());
            let x = random_features(seed, 12);
            let a = net.forward_mixed(&arch, &x).unwrap();
            let b = net.forward_mixed(&moved, &x).unwrap();
            for (u, v) in a.logits().iter().zip(b.logits()) {
                prop_assert!((u - v).abs() < 1e-9);
            }
        }

        #[test]
        fn softmax_is_a_distribution(row in proptest::collection::vec(-300.0f64..300.0, 1..8)) {
            let w = softmax_weights(&row);
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(w.iter().all(|&v| v > 0.0));
        }
    }
}
