//! Synthetic drifting streams from superparent k-DB Bayesian networks.
//!
//! The default network has 100 structured binary attributes and 100 noise
//! attributes:
//!
//! - `X1` has parent `{Y}`, `X2` has parents `{Y, X1}`;
//! - `X3..X50` each take `Y` plus one of `X1`/`X2` chosen uniformly;
//! - `X51..X100` take `{Y, X1, X2}`;
//! - `X101..X200` have no parents.
//!
//! Every `T` steps a random `X%` of the drift pool is selected and `Δ` is
//! added to or subtracted from each CPT row of the selected nodes, clamped to
//! `[0, 1]`. `Y`, `X1` and `X2` never drift.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::schema::{Instance, Schema, Step};

/// Parents of an attribute node, always listed in the order `Y, X1, X2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParentSet {
    None,
    Class,
    ClassX1,
    ClassX2,
    ClassX1X2,
}

impl ParentSet {
    pub fn len(self) -> usize {
        match self {
            ParentSet::None => 0,
            ParentSet::Class => 1,
            ParentSet::ClassX1 | ParentSet::ClassX2 => 2,
            ParentSet::ClassX1X2 => 3,
        }
    }

    pub fn is_empty(self) -> bool {
        self == ParentSet::None
    }

    pub fn num_rows(self) -> usize {
        1 << self.len()
    }

    /// CPT row for the given class and already-sampled attribute values.
    #[inline]
    pub fn row(self, class: usize, values: &[usize]) -> usize {
        match self {
            ParentSet::None => 0,
            ParentSet::Class => class,
            ParentSet::ClassX1 => class * 2 + values[0],
            ParentSet::ClassX2 => class * 2 + values[1],
            ParentSet::ClassX1X2 => (class * 2 + values[0]) * 2 + values[1],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub parents: ParentSet,
    /// `P(X = 0 | parents)` per CPT row; `P(X = 1 | ·)` is the complement.
    pub p_zero: Vec<f64>,
}

/// Attribute counts of a generated network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetworkShape {
    /// Attributes with parents, including `X1` and `X2`.
    pub structured: usize,
    pub noise: usize,
}

impl Default for NetworkShape {
    fn default() -> Self {
        Self {
            structured: 100,
            noise: 100,
        }
    }
}

impl NetworkShape {
    /// Same proportions as the default shape scaled to `attributes` in total:
    /// half structured, half noise.
    pub fn with_attributes(attributes: usize) -> Result<Self> {
        let structured = attributes.div_ceil(2);
        let shape = Self {
            structured,
            noise: attributes - structured,
        };
        shape.validate()?;
        Ok(shape)
    }

    pub fn total(&self) -> usize {
        self.structured + self.noise
    }

    fn validate(&self) -> Result<()> {
        if self.structured < 3 {
            return Err(Error::Config(format!(
                "network needs at least 3 structured attributes, got {}",
                self.structured
            )));
        }
        Ok(())
    }

    /// Attributes `X3..=X_k` get two parents; the rest of the structured
    /// block gets three.
    fn two_parent_end(&self) -> usize {
        (self.structured / 2).max(2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DriftPreset {
    Fast,
    Medium,
    Slow,
}

impl DriftPreset {
    pub const ALL: [DriftPreset; 3] = [DriftPreset::Fast, DriftPreset::Medium, DriftPreset::Slow];

    pub fn delta(self) -> f64 {
        match self {
            DriftPreset::Fast => 0.05,
            DriftPreset::Medium => 0.01,
            DriftPreset::Slow => 0.0005,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DriftPreset::Fast => "fast",
            DriftPreset::Medium => "medium",
            DriftPreset::Slow => "slow",
        }
    }
}

impl fmt::Display for DriftPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DriftPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fast" => Ok(DriftPreset::Fast),
            "medium" => Ok(DriftPreset::Medium),
            "slow" => Ok(DriftPreset::Slow),
            _ => Err(Error::Config(format!("unknown drift preset {s:?}"))),
        }
    }
}

/// Which nodes may be selected for drift.
#[derive(Debug, Clone, PartialEq)]
pub enum DriftPool {
    /// Every attribute except `X1` and `X2`, noise included.
    NonParents,
    /// Structured attributes except `X1` and `X2`.
    StructuredOnly,
    Nodes(Vec<usize>),
}

/// Granularity at which the direction of a drift shift is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SignScope {
    /// One sign per drifted node, shared by all of its rows.
    #[default]
    PerNode,
    /// An independent sign for every row.
    PerRow,
}

impl FromStr for SignScope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "node" => Ok(SignScope::PerNode),
            "row" => Ok(SignScope::PerRow),
            _ => Err(Error::Config(format!(
                "unknown sign scope {s:?} (node or row)"
            ))),
        }
    }
}

/// Parses `non-parents`, `structured` or a comma-separated list of 0-based
/// node indices.
impl FromStr for DriftPool {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "non-parents" => Ok(DriftPool::NonParents),
            "structured" => Ok(DriftPool::StructuredOnly),
            list => list
                .split(',')
                .map(|t| {
                    t.trim()
                        .parse()
                        .map_err(|_| Error::Config(format!("unknown drift pool {s:?}")))
                })
                .collect::<Result<_>>()
                .map(DriftPool::Nodes),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriftConfig {
    /// Per-row shift `Δ`, in `[0, 1)`.
    pub delta: f64,
    /// Drift every `period` steps.
    pub period: usize,
    /// Percentage of the pool drifted at each event, in `(0, 100]`.
    pub fraction: f64,
    pub pool: DriftPool,
    pub sign: SignScope,
}

impl Default for DriftConfig {
    fn default() -> Self {
        Self {
            delta: DriftPreset::Fast.delta(),
            period: 10,
            fraction: 50.0,
            pool: DriftPool::NonParents,
            sign: SignScope::default(),
        }
    }
}

impl DriftConfig {
    pub fn with_delta(delta: f64) -> Self {
        Self {
            delta,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.delta) {
            return Err(Error::Config(format!(
                "drift delta must be in [0, 1), got {}",
                self.delta
            )));
        }
        if self.period == 0 {
            return Err(Error::Config("drift period must be at least 1".into()));
        }
        if !(self.fraction > 0.0 && self.fraction <= 100.0) {
            return Err(Error::Config(format!(
                "drift fraction must be in (0, 100], got {}",
                self.fraction
            )));
        }
        if let DriftPool::Nodes(nodes) = &self.pool {
            if nodes.iter().any(|&n| n < 2) {
                return Err(Error::Config("X1 and X2 may not drift".into()));
            }
        }
        Ok(())
    }
}

/// One drifted CPT row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RowShift {
    pub node: usize,
    pub row: usize,
    pub tvd: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriftEvent {
    /// First step sampled from the drifted distribution.
    pub step: Step,
    pub nodes: Vec<usize>,
    pub rows: Vec<RowShift>,
}

/// Shifts `P(X = 0)` by `±delta`, saturating at the boundaries.
pub fn drift_row(p_zero: f64, delta: f64, add: bool) -> f64 {
    let shifted = if add { p_zero + delta } else { p_zero - delta };
    shifted.clamp(0.0, 1.0)
}

/// Total variation distance between two categorical distributions.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

#[derive(Debug, Clone, PartialEq)]
pub struct KdbNetwork {
    class_prior: [f64; 2],
    nodes: Vec<Node>,
    shape: NetworkShape,
    seed: Option<u64>,
}

impl KdbNetwork {
    /// Builds the structure and draws every CPT row's `P(X = 0)` uniformly.
    pub fn build<R: Rng + ?Sized>(shape: NetworkShape, rng: &mut R) -> Result<Self> {
        shape.validate()?;
        let two_parent_end = shape.two_parent_end();
        let mut nodes = Vec::with_capacity(shape.total());
        for i in 0..shape.total() {
            let parents = match i {
                0 => ParentSet::Class,
                1 => ParentSet::ClassX1,
                i if i < two_parent_end => {
                    if rng.random_bool(0.5) {
                        ParentSet::ClassX1
                    } else {
                        ParentSet::ClassX2
                    }
                }
                i if i < shape.structured => ParentSet::ClassX1X2,
                _ => ParentSet::None,
            };
            let p_zero = (0..parents.num_rows())
                .map(|_| rng.random::<f64>())
                .collect();
            nodes.push(Node { parents, p_zero });
        }
        Ok(Self {
            class_prior: [0.5, 0.5],
            nodes,
            shape,
            seed: None,
        })
    }

    pub fn from_seed(shape: NetworkShape, seed: u64) -> Result<Self> {
        let mut net = Self::build(shape, &mut ChaCha8Rng::seed_from_u64(seed))?;
        net.seed = Some(seed);
        Ok(net)
    }

    pub fn num_attributes(&self) -> usize {
        self.nodes.len()
    }

    pub fn shape(&self) -> NetworkShape {
        self.shape
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn class_prior(&self) -> [f64; 2] {
        self.class_prior
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    /// Overwrites one CPT row. Intended for tests and hand-built scenarios.
    pub fn set_row(&mut self, node: usize, row: usize, p_zero: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&p_zero) {
            return Err(Error::Config(format!(
                "probability {p_zero} outside [0, 1]"
            )));
        }
        let slot = self
            .nodes
            .get_mut(node)
            .and_then(|n| n.p_zero.get_mut(row))
            .ok_or_else(|| Error::Config(format!("no CPT row {row} at node {node}")))?;
        *slot = p_zero;
        Ok(())
    }

    pub fn schema(&self) -> Schema {
        Schema::binary(self.nodes.len()).expect("network has attributes")
    }

    /// Ancestral sampling: the class first, then attributes in index order.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, step: Step) -> Instance {
        let class = usize::from(rng.random::<f64>() >= self.class_prior[0]);
        let mut values = vec![0usize; self.nodes.len()];
        for i in 0..self.nodes.len() {
            let node = &self.nodes[i];
            let p0 = node.p_zero[node.parents.row(class, &values)];
            values[i] = usize::from(rng.random::<f64>() >= p0);
        }
        Instance::new(values, class, step)
    }

    pub fn drift_pool(&self, pool: &DriftPool) -> Result<Vec<usize>> {
        match pool {
            DriftPool::NonParents => Ok((2..self.nodes.len()).collect()),
            DriftPool::StructuredOnly => Ok((2..self.shape.structured).collect()),
            DriftPool::Nodes(nodes) => {
                if let Some(&bad) = nodes.iter().find(|&&n| n < 2 || n >= self.nodes.len()) {
                    return Err(Error::Config(format!(
                        "node {bad} cannot be in the drift pool"
                    )));
                }
                Ok(nodes.clone())
            }
        }
    }

    /// Drifts `⌈fraction% · |pool|⌉` randomly chosen nodes, drawing the shift
    /// direction once per node or once per row according to `cfg.sign`.
    pub fn drift_step<R: Rng + ?Sized>(
        &mut self,
        cfg: &DriftConfig,
        rng: &mut R,
        step: Step,
    ) -> Result<DriftEvent> {
        cfg.validate()?;
        let pool = self.drift_pool(&cfg.pool)?;
        let count = ((cfg.fraction / 100.0 * pool.len() as f64).ceil() as usize).min(pool.len());
        let mut nodes: Vec<usize> = index::sample(rng, pool.len(), count)
            .into_iter()
            .map(|k| pool[k])
            .collect();
        nodes.sort_unstable();

        let mut rows = Vec::new();
        for &n in &nodes {
            let node_sign = match cfg.sign {
                SignScope::PerNode => Some(rng.random_bool(0.5)),
                SignScope::PerRow => None,
            };
            for (row, p) in self.nodes[n].p_zero.iter_mut().enumerate() {
                let before = *p;
                let add = node_sign.unwrap_or_else(|| rng.random_bool(0.5));
                *p = drift_row(before, cfg.delta, add);
                rows.push(RowShift {
                    node: n,
                    row,
                    tvd: (*p - before).abs(),
                });
            }
        }
        Ok(DriftEvent { step, nodes, rows })
    }
}

/// Per-node and aggregate drift between two networks of identical structure.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftMagnitude {
    /// Mean row TVD per attribute node.
    pub per_node: Vec<f64>,
    /// Mean of `per_node` over the drift-eligible nodes (all but `X1`, `X2`).
    pub mean: f64,
    /// TVD of the class prior (zero for generated streams).
    pub class_prior: f64,
}

impl DriftMagnitude {
    /// Aggregate drift divided by elapsed steps.
    pub fn rate(&self, elapsed: Step) -> f64 {
        if elapsed == 0 {
            0.0
        } else {
            self.mean / elapsed as f64
        }
    }
}

pub fn drift_magnitude(before: &KdbNetwork, after: &KdbNetwork) -> Result<DriftMagnitude> {
    if before.nodes.len() != after.nodes.len() {
        return Err(Error::StructuralMismatch(format!(
            "{} vs {} attribute nodes",
            before.nodes.len(),
            after.nodes.len()
        )));
    }
    let mut per_node = Vec::with_capacity(before.nodes.len());
    for (i, (a, b)) in before.nodes.iter().zip(&after.nodes).enumerate() {
        if a.parents != b.parents || a.p_zero.len() != b.p_zero.len() {
            return Err(Error::StructuralMismatch(format!(
                "node {i} differs in parents"
            )));
        }
        let sum: f64 = a
            .p_zero
            .iter()
            .zip(&b.p_zero)
            .map(|(&p, &q)| total_variation(&[p, 1.0 - p], &[q, 1.0 - q]))
            .sum();
        per_node.push(sum / a.p_zero.len() as f64);
    }
    let eligible = &per_node[2.min(per_node.len())..];
    let mean = if eligible.is_empty() {
        0.0
    } else {
        eligible.iter().sum::<f64>() / eligible.len() as f64
    };
    Ok(DriftMagnitude {
        per_node,
        mean,
        class_prior: total_variation(&before.class_prior, &after.class_prior),
    })
}

/// Monte-Carlo stand-in for joint drift: mean TVD between the smoothed
/// empirical `P(Y, X_i)` tables of the two networks.
pub fn monte_carlo_marginal_tvd<R: Rng + ?Sized>(
    before: &KdbNetwork,
    after: &KdbNetwork,
    samples: usize,
    rng: &mut R,
) -> Result<f64> {
    if before.nodes.len() != after.nodes.len() {
        return Err(Error::StructuralMismatch("attribute counts differ".into()));
    }
    let a = before.nodes.len();
    let table = |net: &KdbNetwork, rng: &mut R| {
        let mut counts = vec![[1.0f64; 4]; a];
        for _ in 0..samples {
            let x = net.sample(rng, 0);
            for (i, &v) in x.values.iter().enumerate() {
                counts[i][x.class * 2 + v] += 1.0;
            }
        }
        let z = samples as f64 + 4.0;
        counts
            .into_iter()
            .map(|c| c.map(|n| n / z))
            .collect::<Vec<_>>()
    };
    let p = table(before, rng);
    let q = table(after, rng);
    Ok(p.iter()
        .zip(&q)
        .map(|(p, q)| total_variation(p, q))
        .sum::<f64>()
        / a as f64)
}

#[derive(Debug, Clone)]
pub struct GeneratedStream {
    pub instances: Vec<Instance>,
    pub events: Vec<DriftEvent>,
    /// Network state after the final drift event.
    pub network: KdbNetwork,
}

/// Samples `length` instances, one per step, drifting after every `period`
/// steps. Network, stream and drift log are fully determined by `seed`.
pub fn generate_stream(
    seed: u64,
    shape: NetworkShape,
    cfg: &DriftConfig,
    length: usize,
) -> Result<GeneratedStream> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut network = KdbNetwork::build(shape, &mut rng)?;
    network.seed = Some(seed);
    let mut instances = Vec::with_capacity(length);
    let mut events = Vec::with_capacity(length / cfg.period);
    for t in 0..length as Step {
        instances.push(network.sample(&mut rng, t));
        if (t + 1) % cfg.period as Step == 0 {
            events.push(network.drift_step(cfg, &mut rng, t + 1)?);
        }
    }
    Ok(GeneratedStream {
        instances,
        events,
        network,
    })
}

/// `step,x1,…,xa,y`, one row per instance.
pub fn write_stream_csv<W: Write>(
    instances: &[Instance],
    num_attributes: usize,
    out: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["step".to_string()];
    header.extend((1..=num_attributes).map(|i| format!("x{i}")));
    header.push("y".into());
    w.write_record(&header)?;
    let mut record = Vec::with_capacity(num_attributes + 2);
    for x in instances {
        record.clear();
        record.push(x.step.to_string());
        record.extend(x.values.iter().map(|v| v.to_string()));
        record.push(x.class.to_string());
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

/// `step,node,row,tvd`, one row per drifted CPT row. Nodes are 1-based to
/// match the `x1..xa` stream columns.
pub fn write_drift_log_csv<W: Write>(events: &[DriftEvent], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["step", "node", "row", "tvd"])?;
    for e in events {
        for r in &e.rows {
            w.write_record([
                e.step.to_string(),
                (r.node + 1).to_string(),
                r.row.to_string(),
                r.tvd.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
