//! Cell topologies, operation catalogs, architecture encodings and search
//! space reduction.
//!
//! A [`SearchSpace`] is a cell DAG plus, for every edge, the subset of catalog
//! operations still allowed on that edge. Architectures come in two forms:
//! [`ArchParams`] (a real-valued weight per edge and operation, the genotype
//! evolved by the genetic algorithm) and [`DiscreteArch`] (one operation per
//! edge, obtained by a per-row argmax).
//!
//! Rows and columns of [`ArchParams`] are indexed by edge and *catalog*
//! operation index. Entries for disallowed operations are kept as `None`
//! so that indices stay stable while the space shrinks.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest space [`enumerate_space`] will materialize unless told otherwise.
pub const DEFAULT_ENUMERATION_CAP: u64 = 100_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ArchError {
    #[error("invalid cell topology: {0}")]
    InvalidTopology(String),
    #[error("invalid operation catalog: {0}")]
    InvalidCatalog(String),
    #[error("invalid search space: {0}")]
    InvalidSpace(String),
    #[error("architecture does not fit the search space: {0}")]
    ShapeMismatch(String),
    #[error("search space cardinality overflows a 64-bit count")]
    CardinalityOverflow,
    #[error("search space has {cardinality} architectures, above the enumeration cap of {cap}")]
    EnumerationCap { cardinality: u64, cap: u64 },
    #[error("cannot keep top-{k} operations on edge {edge}: only {allowed} allowed")]
    TopKTooLarge { edge: usize, k: usize, allowed: usize },
    #[error("k must be at least 1")]
    ZeroK,
    #[error("malformed architecture string {0:?}")]
    Parse(String),
}

/// A directed edge `(from, to)` of the cell DAG with `from < to`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
}

impl Edge {
    pub fn new(from: usize, to: usize) -> Self {
        Edge { from, to }
    }
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.from, self.to)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTopology {
    num_nodes: usize,
    edges: Vec<Edge>,
    input_nodes: Vec<usize>,
    output_node: usize,
    #[serde(default)]
    output_sums: Vec<usize>,
}

/// The DAG of a cell. Edges are stored in canonical lexicographic order,
/// which is also the row order of every architecture encoding.
///
/// The output node normally aggregates its incoming searchable edges. A
/// topology may instead wire the output node as a fixed sum of other nodes
/// (`output_sums`), the vector analogue of concatenating intermediate nodes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawTopology")]
pub struct CellTopology {
    num_nodes: usize,
    edges: Vec<Edge>,
    input_nodes: Vec<usize>,
    output_node: usize,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    output_sums: Vec<usize>,
}

impl TryFrom<RawTopology> for CellTopology {
    type Error = ArchError;

    fn try_from(raw: RawTopology) -> Result<Self, Self::Error> {
        CellTopology::with_output_sums(raw.num_nodes, raw.edges, raw.input_nodes, raw.output_node, raw.output_sums)
    }
}

impl CellTopology {
    pub fn new(
        num_nodes: usize,
        edges: Vec<Edge>,
        input_nodes: Vec<usize>,
        output_node: usize,
    ) -> Result<Self, ArchError> {
        Self::with_output_sums(num_nodes, edges, input_nodes, output_node, Vec::new())
    }

    pub fn with_output_sums(
        num_nodes: usize,
        mut edges: Vec<Edge>,
        mut input_nodes: Vec<usize>,
        output_node: usize,
        mut output_sums: Vec<usize>,
    ) -> Result<Self, ArchError> {
        let bad = |msg: String| Err(ArchError::InvalidTopology(msg));
        if num_nodes < 2 {
            return bad(format!("need at least 2 nodes, got {num_nodes}"));
        }
        edges.sort();
        if edges.windows(2).any(|w| w[0] == w[1]) {
            return bad("duplicate edge".into());
        }
        for e in &edges {
            if e.from >= e.to {
                return bad(format!("edge {e} is not forward (requires from < to)"));
            }
            if e.to >= num_nodes {
                return bad(format!("edge {e} references a node outside 0..{num_nodes}"));
            }
        }
        input_nodes.sort_unstable();
        input_nodes.dedup();
        if input_nodes.is_empty() {
            return bad("no input nodes".into());
        }
        if let Some(&n) = input_nodes.iter().find(|&&n| n >= num_nodes) {
            return bad(format!("input node {n} outside 0..{num_nodes}"));
        }
        if output_node >= num_nodes || input_nodes.contains(&output_node) {
            return bad(format!("output node {output_node} must be a non-input node"));
        }
        if let Some(e) = edges.iter().find(|e| input_nodes.contains(&e.to)) {
            return bad(format!("edge {e} feeds an input node"));
        }
        output_sums.sort_unstable();
        output_sums.dedup();
        if let Some(&n) = output_sums.iter().find(|&&n| n >= output_node) {
            return bad(format!("output sum node {n} must precede the output node"));
        }
        for node in 0..num_nodes {
            if input_nodes.contains(&node) {
                continue;
            }
            let has_incoming = edges.iter().any(|e| e.to == node);
            let wired = node == output_node && !output_sums.is_empty();
            if !has_incoming && !wired {
                return bad(format!("node {node} has no incoming edge"));
            }
        }
        Ok(CellTopology { num_nodes, edges, input_nodes, output_node, output_sums })
    }

    /// Every forward edge `(i, j)` with `i < j` over `num_nodes` nodes; node 0
    /// is the input and the last node the output. Four nodes give the
    /// six-edge benchmark cell.
    pub fn dense(num_nodes: usize) -> Result<Self, ArchError> {
        let edges = (0..num_nodes)
            .flat_map(|j| (0..j).map(move |i| Edge::new(i, j)))
            .collect();
        Self::new(num_nodes, edges, vec![0], num_nodes.saturating_sub(1))
    }

    /// Seven nodes: two inputs, four intermediates each fed by all earlier
    /// nodes (14 searchable edges), and an output summing the intermediates.
    pub fn two_input_cell() -> Self {
        let edges = (2..6)
            .flat_map(|j| (0..j).map(move |i| Edge::new(i, j)))
            .collect();
        Self::with_output_sums(7, edges, vec![0, 1], 6, vec![2, 3, 4, 5])
            .expect("two-input cell is well formed")
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn input_nodes(&self) -> &[usize] {
        &self.input_nodes
    }

    pub fn output_node(&self) -> usize {
        self.output_node
    }

    pub fn output_sums(&self) -> &[usize] {
        &self.output_sums
    }

    pub fn is_input(&self, node: usize) -> bool {
        self.input_nodes.contains(&node)
    }
}

/// Kind tag of a catalog operation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpKind {
    /// Output is all zeros.
    Zero,
    /// Identity.
    Skip,
    /// `W x + b` with a `d x d` matrix.
    Linear,
    /// `max(0, W x + b)`.
    LinearRelu,
    /// `s * x` with one learned scalar.
    Scale,
}

/// Shape of the learnable parameters of one operation instance.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamShape {
    None,
    Affine { dim: usize },
    Scalar,
}

impl OpKind {
    pub fn param_shape(self, feature_dim: usize) -> ParamShape {
        match self {
            OpKind::Zero | OpKind::Skip => ParamShape::None,
            OpKind::Linear | OpKind::LinearRelu => ParamShape::Affine { dim: feature_dim },
            OpKind::Scale => ParamShape::Scalar,
        }
    }

    pub fn is_parametric(self) -> bool {
        !matches!(self, OpKind::Zero | OpKind::Skip)
    }

    fn default_name(self) -> &'static str {
        match self {
            OpKind::Zero => "zero",
            OpKind::Skip => "skip",
            OpKind::Linear => "linear",
            OpKind::LinearRelu => "linear_relu",
            OpKind::Scale => "scale",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Operation {
    pub name: String,
    pub kind: OpKind,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCatalog {
    ops: Vec<Operation>,
}

/// Ordered, immutable list of candidate operations. Indices into this list
/// are the column indices of [`ArchParams`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawCatalog")]
pub struct OperationCatalog {
    ops: Vec<Operation>,
}

impl TryFrom<RawCatalog> for OperationCatalog {
    type Error = ArchError;

    fn try_from(raw: RawCatalog) -> Result<Self, Self::Error> {
        OperationCatalog::new(raw.ops)
    }
}

impl OperationCatalog {
    pub fn new(ops: Vec<Operation>) -> Result<Self, ArchError> {
        if ops.is_empty() {
            return Err(ArchError::InvalidCatalog("catalog is empty".into()));
        }
        for (i, op) in ops.iter().enumerate() {
            if ops[..i].iter().any(|o| o.name == op.name) {
                return Err(ArchError::InvalidCatalog(format!("duplicate operation name {:?}", op.name)));
            }
        }
        Ok(OperationCatalog { ops })
    }

    /// Builds a catalog from kinds, naming each operation after its kind.
    pub fn from_kinds(kinds: &[OpKind]) -> Result<Self, ArchError> {
        Self::new(
            kinds
                .iter()
                .map(|&kind| Operation { name: kind.default_name().to_string(), kind })
                .collect(),
        )
    }

    /// `zero, skip, linear, linear_relu, scale`.
    pub fn standard() -> Self {
        Self::from_kinds(&[OpKind::Zero, OpKind::Skip, OpKind::Linear, OpKind::LinearRelu, OpKind::Scale])
            .expect("standard catalog is well formed")
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn ops(&self) -> &[Operation] {
        &self.ops
    }

    pub fn kind(&self, op: usize) -> OpKind {
        self.ops[op].kind
    }

    pub fn name(&self, op: usize) -> &str {
        &self.ops[op].name
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpace {
    topology: CellTopology,
    catalog: OperationCatalog,
    allowed: Vec<Vec<usize>>,
}

/// A cell topology together with the operations still allowed per edge.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawSpace")]
pub struct SearchSpace {
    topology: CellTopology,
    catalog: OperationCatalog,
    allowed: Vec<Vec<usize>>,
}

impl TryFrom<RawSpace> for SearchSpace {
    type Error = ArchError;

    fn try_from(raw: RawSpace) -> Result<Self, Self::Error> {
        SearchSpace::with_allowed(raw.topology, raw.catalog, raw.allowed)
    }
}

/// Search space in which every edge allows the whole catalog.
pub fn new_full_space(topology: CellTopology, catalog: OperationCatalog) -> SearchSpace {
    let allowed = vec![(0..catalog.len()).collect(); topology.num_edges()];
    SearchSpace { topology, catalog, allowed }
}

impl SearchSpace {
    /// Builds a space with explicit per-edge allowed sets. Sets are sorted
    /// and must be non-empty subsets of the catalog.
    pub fn with_allowed(
        topology: CellTopology,
        catalog: OperationCatalog,
        mut allowed: Vec<Vec<usize>>,
    ) -> Result<Self, ArchError> {
        if allowed.len() != topology.num_edges() {
            return Err(ArchError::InvalidSpace(format!(
                "{} allowed sets for {} edges",
                allowed.len(),
                topology.num_edges()
            )));
        }
        for (e, set) in allowed.iter_mut().enumerate() {
            set.sort_unstable();
            set.dedup();
            if set.is_empty() {
                return Err(ArchError::InvalidSpace(format!("edge {e} allows no operation")));
            }
            if let Some(&op) = set.iter().find(|&&op| op >= catalog.len()) {
                return Err(ArchError::InvalidSpace(format!("edge {e} allows unknown operation {op}")));
            }
        }
        Ok(SearchSpace { topology, catalog, allowed })
    }

    pub fn topology(&self) -> &CellTopology {
        &self.topology
    }

    pub fn catalog(&self) -> &OperationCatalog {
        &self.catalog
    }

    pub fn num_edges(&self) -> usize {
        self.allowed.len()
    }

    pub fn allowed(&self, edge: usize) -> &[usize] {
        &self.allowed[edge]
    }

    pub fn allowed_sets(&self) -> &[Vec<usize>] {
        &self.allowed
    }

    pub fn is_allowed(&self, edge: usize, op: usize) -> bool {
        self.allowed[edge].binary_search(&op).is_ok()
    }

    pub fn is_full(&self) -> bool {
        self.allowed.iter().all(|s| s.len() == self.catalog.len())
    }

    /// Largest per-edge allowed-set size, i.e. the stage's operation count.
    pub fn max_ops_per_edge(&self) -> usize {
        self.allowed.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn min_ops_per_edge(&self) -> usize {
        self.allowed.iter().map(Vec::len).min().unwrap_or(0)
    }

    pub fn contains(&self, arch: &DiscreteArch) -> bool {
        arch.selection.len() == self.num_edges()
            && arch.selection.iter().enumerate().all(|(e, &op)| self.is_allowed(e, op))
    }

    /// True when both spaces share topology and catalog and every allowed set
    /// of `self` is contained in the corresponding set of `other`.
    pub fn is_subspace_of(&self, other: &SearchSpace) -> bool {
        self.topology == other.topology
            && self.catalog == other.catalog
            && self
                .allowed
                .iter()
                .enumerate()
                .all(|(e, set)| set.iter().all(|&op| other.is_allowed(e, op)))
    }
}

/// Continuous architecture encoding: one row per edge, one column per catalog
/// operation. `None` marks an operation masked out of the space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ArchParams {
    rows: Vec<Vec<Option<f64>>>,
}

impl ArchParams {
    pub fn from_rows(rows: Vec<Vec<Option<f64>>>) -> Self {
        ArchParams { rows }
    }

    /// Dense rows for a space; entries of disallowed operations are masked.
    pub fn from_dense(space: &SearchSpace, rows: &[Vec<f64>]) -> Result<Self, ArchError> {
        let arch = ArchParams {
            rows: rows
                .iter()
                .enumerate()
                .map(|(e, row)| {
                    row.iter()
                        .enumerate()
                        .map(|(op, &v)| (e < space.num_edges() && space.is_allowed(e, op)).then_some(v))
                        .collect()
                })
                .collect(),
        };
        arch.check_shape(space)?;
        Ok(arch)
    }

    pub fn rows(&self) -> &[Vec<Option<f64>>] {
        &self.rows
    }

    pub fn row(&self, edge: usize) -> &[Option<f64>] {
        &self.rows[edge]
    }

    pub fn set_row(&mut self, edge: usize, row: Vec<Option<f64>>) {
        self.rows[edge] = row;
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    /// Weight of `op` on `edge`, or `None` when masked.
    pub fn get(&self, edge: usize, op: usize) -> Option<f64> {
        self.rows.get(edge).and_then(|r| r.get(op)).copied().flatten()
    }

    /// Checks row and column counts against `space` and that every allowed
    /// entry is present and finite.
    pub fn check_shape(&self, space: &SearchSpace) -> Result<(), ArchError> {
        if self.rows.len() != space.num_edges() {
            return Err(ArchError::ShapeMismatch(format!(
                "{} rows for {} edges",
                self.rows.len(),
                space.num_edges()
            )));
        }
        for (e, row) in self.rows.iter().enumerate() {
            if row.len() != space.catalog().len() {
                return Err(ArchError::ShapeMismatch(format!(
                    "row {e} has {} columns, catalog has {}",
                    row.len(),
                    space.catalog().len()
                )));
            }
            for &op in space.allowed(e) {
                match row[op] {
                    Some(v) if v.is_finite() => {}
                    Some(v) => return Err(ArchError::ShapeMismatch(format!("entry ({e},{op}) is {v}"))),
                    None => return Err(ArchError::ShapeMismatch(format!("allowed entry ({e},{op}) is masked"))),
                }
            }
        }
        Ok(())
    }
}

/// One selected catalog operation per edge.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DiscreteArch {
    selection: Vec<usize>,
}

impl DiscreteArch {
    pub fn new(selection: Vec<usize>) -> Self {
        DiscreteArch { selection }
    }

    pub fn selection(&self) -> &[usize] {
        &self.selection
    }

    pub fn op(&self, edge: usize) -> usize {
        self.selection[edge]
    }

    pub fn num_edges(&self) -> usize {
        self.selection.len()
    }
}

/// Renders as operation indices joined by `-`, e.g. `2-0-4-1-1-3`.
impl fmt::Display for DiscreteArch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, op) in self.selection.iter().enumerate() {
            if i > 0 {
                f.write_str("-")?;
            }
            write!(f, "{op}")?;
        }
        Ok(())
    }
}

impl FromStr for DiscreteArch {
    type Err = ArchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.split('-')
            .map(|t| t.trim().parse::<usize>())
            .collect::<Result<Vec<_>, _>>()
            .map(DiscreteArch::new)
            .map_err(|_| ArchError::Parse(s.to_string()))
    }
}

/// Uniform `[0, 1)` sample for every allowed entry of one row.
pub(crate) fn sample_row<R: Rng + ?Sized>(space: &SearchSpace, edge: usize, rng: &mut R) -> Vec<Option<f64>> {
    (0..space.catalog().len())
        .map(|op| space.is_allowed(edge, op).then(|| rng.random::<f64>()))
        .collect()
}

/// Draws every allowed entry i.i.d. uniform on `[0, 1)`, row by row in
/// catalog order. Masked entries are `None` and consume no randomness.
pub fn sample_arch<R: Rng + ?Sized>(space: &SearchSpace, rng: &mut R) -> ArchParams {
    ArchParams {
        rows: (0..space.num_edges()).map(|e| sample_row(space, e, rng)).collect(),
    }
}

/// Allowed operations of `edge` ranked by descending weight, ties to the
/// lowest catalog index. Masked allowed entries rank last.
fn ranked_ops(arch: &ArchParams, space: &SearchSpace, edge: usize) -> Vec<usize> {
    let mut ops = space.allowed(edge).to_vec();
    let key = |op: usize| arch.get(edge, op).unwrap_or(f64::NEG_INFINITY);
    // allowed sets are ascending, and the sort is stable
    ops.sort_by(|&a, &b| key(b).total_cmp(&key(a)));
    ops
}

/// Per edge, the allowed operation with the largest weight (lowest catalog
/// index on ties).
pub fn discretize(arch: &ArchParams, space: &SearchSpace) -> DiscreteArch {
    DiscreteArch::new(
        (0..space.num_edges())
            .map(|e| {
                let mut best = space.allowed(e)[0];
                let mut best_val = arch.get(e, best).unwrap_or(f64::NEG_INFINITY);
                for &op in &space.allowed(e)[1..] {
                    let v = arch.get(e, op).unwrap_or(f64::NEG_INFINITY);
                    if v > best_val {
                        best = op;
                        best_val = v;
                    }
                }
                best
            })
            .collect(),
    )
}

/// Number of architectures in the space.
pub fn cardinality(space: &SearchSpace) -> Result<u64, ArchError> {
    space
        .allowed_sets()
        .iter()
        .try_fold(1u64, |acc, s| acc.checked_mul(s.len() as u64))
        .ok_or(ArchError::CardinalityOverflow)
}

/// Keeps, per edge, the `k` allowed operations with the largest weight in
/// `best`.
pub fn reduce_topk(best: &ArchParams, space: &SearchSpace, k: usize) -> Result<SearchSpace, ArchError> {
    if k == 0 {
        return Err(ArchError::ZeroK);
    }
    if best.num_rows() != space.num_edges() {
        return Err(ArchError::ShapeMismatch(format!(
            "{} rows for {} edges",
            best.num_rows(),
            space.num_edges()
        )));
    }
    let mut allowed = Vec::with_capacity(space.num_edges());
    for e in 0..space.num_edges() {
        let n = space.allowed(e).len();
        if k > n {
            return Err(ArchError::TopKTooLarge { edge: e, k, allowed: n });
        }
        let mut kept: Vec<usize> = ranked_ops(best, space, e).into_iter().take(k).collect();
        kept.sort_unstable();
        allowed.push(kept);
    }
    Ok(SearchSpace { topology: space.topology.clone(), catalog: space.catalog.clone(), allowed })
}

/// Keeps `k` uniformly chosen allowed operations per edge.
pub fn reduce_random<R: Rng + ?Sized>(space: &SearchSpace, k: usize, rng: &mut R) -> Result<SearchSpace, ArchError> {
    if k == 0 {
        return Err(ArchError::ZeroK);
    }
    let mut allowed = Vec::with_capacity(space.num_edges());
    for e in 0..space.num_edges() {
        let set = space.allowed(e);
        if k > set.len() {
            return Err(ArchError::TopKTooLarge { edge: e, k, allowed: set.len() });
        }
        let mut kept: Vec<usize> = index::sample(rng, set.len(), k).into_iter().map(|i| set[i]).collect();
        kept.sort_unstable();
        allowed.push(kept);
    }
    Ok(SearchSpace { topology: space.topology.clone(), catalog: space.catalog.clone(), allowed })
}

/// Position of `arch` in the canonical mixed-radix order of the space (the
/// last edge varies fastest), or `None` if the arch is not in the space.
pub fn arch_index(space: &SearchSpace, arch: &DiscreteArch) -> Option<u64> {
    if arch.num_edges() != space.num_edges() {
        return None;
    }
    let mut idx = 0u64;
    for (e, &op) in arch.selection().iter().enumerate() {
        let set = space.allowed(e);
        let digit = set.binary_search(&op).ok()?;
        idx = idx.checked_mul(set.len() as u64)?.checked_add(digit as u64)?;
    }
    Some(idx)
}

/// Inverse of [`arch_index`].
pub fn arch_at(space: &SearchSpace, mut index: u64) -> Option<DiscreteArch> {
    if index >= cardinality(space).ok()? {
        return None;
    }
    let mut selection = vec![0; space.num_edges()];
    for e in (0..space.num_edges()).rev() {
        let set = space.allowed(e);
        let radix = set.len() as u64;
        selection[e] = set[(index % radix) as usize];
        index /= radix;
    }
    Some(DiscreteArch::new(selection))
}

/// Every architecture of the space exactly once, in canonical order.
pub fn enumerate_space(space: &SearchSpace, cap: u64) -> Result<Vec<DiscreteArch>, ArchError> {
    let n = cardinality(space)?;
    if n > cap {
        return Err(ArchError::EnumerationCap { cardinality: n, cap });
    }
    let mut out = Vec::with_capacity(n as usize);
    let mut digits = vec![0usize; space.num_edges()];
    for _ in 0..n {
        out.push(DiscreteArch::new(
            digits.iter().enumerate().map(|(e, &d)| space.allowed(e)[d]).collect(),
        ));
        // odometer increment, last edge fastest
        for e in (0..digits.len()).rev() {
            digits[e] += 1;
            if digits[e] < space.allowed(e).len() {
                break;
            }
            digits[e] = 0;
        }
    }
    Ok(out)
}
