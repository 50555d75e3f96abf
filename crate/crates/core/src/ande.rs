//! Averaged n-dependence estimators.
//!
//! For order `n`, the joint estimate is
//!
//! ```text
//! P(y, x) = Σ_s δ(x_s) P(y, x_s) Π_{i∉s} P(x_i | y, x_s) / Σ_s δ(x_s)
//! ```
//!
//! over all size-`n` attribute subsets `s`, where `δ(x_s)` says whether the
//! value combination `x_s` has been observed. When no subset qualifies the
//! estimate falls back to order `n - 1`; order 0 is naive Bayes.
//!
//! Probabilities are m-estimates with a uniform prior:
//!
//! ```text
//! P(y, x_s)       = (c(y, x_s) + m / (|Y| Π_{j∈s} |X_j|)) / (N + m)
//! P(x_i | y, x_s) = (c(y, x_s, x_i) + m / |X_i|) / (c(y, x_s) + m)
//! ```
//!
//! Everything is evaluated in log space so that products over hundreds of
//! attributes do not underflow.

use crate::counts::{CellVisitor, Cells, CountStore, Sign, StoreConfig};
use crate::error::{Error, Result};
use crate::forgetting::{ForgetPolicy, WindowQueue};
use crate::schema::{Instance, Schema, Step};

/// Rescale the running product before it leaves the normal f64 range.
const RESCALE_BELOW: f64 = 1e-250;

#[derive(Debug, Clone, PartialEq)]
pub struct AndeConfig {
    /// 0 = naive Bayes, 1 = A1DE, 2 = A2DE.
    pub order: usize,
    /// m-estimate weight.
    pub smoothing: f64,
    pub delta_threshold: f64,
    pub policy: ForgetPolicy,
    pub dense_limit: usize,
}

impl Default for AndeConfig {
    fn default() -> Self {
        Self {
            order: 1,
            smoothing: 1.0,
            delta_threshold: 0.0,
            policy: ForgetPolicy::None,
            dense_limit: StoreConfig::default().dense_limit,
        }
    }
}

impl AndeConfig {
    pub fn new(order: usize, policy: ForgetPolicy) -> Self {
        Self {
            order,
            policy,
            ..Self::default()
        }
    }
}

/// Class posterior. `degenerate` is set when every joint score was zero and
/// the uniform distribution was returned instead.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassDistribution {
    pub probabilities: Vec<f64>,
    pub degenerate: bool,
}

impl ClassDistribution {
    /// Normalises natural-log joint scores.
    pub fn from_log_scores(scores: &[f64]) -> Self {
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY || max.is_nan() {
            let p = 1.0 / scores.len() as f64;
            return Self {
                probabilities: vec![p; scores.len()],
                degenerate: true,
            };
        }
        let mut probabilities: Vec<f64> = scores.iter().map(|&s| (s - max).exp()).collect();
        let sum: f64 = probabilities.iter().sum();
        for p in &mut probabilities {
            *p /= sum;
        }
        Self {
            probabilities,
            degenerate: false,
        }
    }

    /// Index of the most probable class; ties go to the smallest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probabilities.iter().enumerate().skip(1) {
            if p > self.probabilities[best] {
                best = i;
            }
        }
        best
    }
}

#[derive(Debug, Clone)]
pub struct AndeModel {
    schema: Schema,
    config: AndeConfig,
    /// One store per order `0..=n`, used for the fallback recursion.
    stores: Vec<CountStore>,
    window: Option<WindowQueue>,
    /// `m / |X_i|` per attribute.
    child_prior: Vec<f64>,
    clock: Option<Step>,
}

impl AndeModel {
    pub fn new(schema: &Schema, config: AndeConfig) -> Result<Self> {
        if config.order > 2 {
            return Err(Error::Config(format!(
                "AnDE order {} not supported (0, 1 or 2)",
                config.order
            )));
        }
        if !(config.smoothing >= 0.0 && config.smoothing.is_finite()) {
            return Err(Error::Config(
                "smoothing must be finite and non-negative".into(),
            ));
        }
        config.policy.validate()?;
        let store_config = StoreConfig {
            decay_rate: config.policy.decay_rate(),
            delta_threshold: config.delta_threshold,
            dense_limit: config.dense_limit,
        };
        let stores = (0..=config.order)
            .map(|k| CountStore::new(schema, k, store_config.clone()))
            .collect::<Result<Vec<_>>>()?;
        let window = match config.policy {
            ForgetPolicy::Window(w) => Some(WindowQueue::new(w)?),
            _ => None,
        };
        let child_prior = schema
            .arities()
            .iter()
            .map(|&a| config.smoothing / a as f64)
            .collect();
        Ok(Self {
            schema: schema.clone(),
            config,
            stores,
            window,
            child_prior,
            clock: None,
        })
    }

    pub fn order(&self) -> usize {
        self.config.order
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn config(&self) -> &AndeConfig {
        &self.config
    }

    pub fn stores(&self) -> &[CountStore] {
        &self.stores
    }

    pub fn window(&self) -> Option<&WindowQueue> {
        self.window.as_ref()
    }

    /// Step of the last learned instance.
    pub fn clock(&self) -> Option<Step> {
        self.clock
    }

    /// The step at which the model's current state is read.
    pub fn now(&self) -> Step {
        self.clock.unwrap_or(0)
    }

    /// Adds `x` to every store, then evicts from the window if it overflowed.
    pub fn learn(&mut self, x: &Instance) -> Result<()> {
        self.schema.check(x)?;
        if let Some(last) = self.clock {
            if x.step < last {
                return Err(Error::TimeTravel {
                    requested: x.step,
                    last,
                });
            }
        }
        for store in &mut self.stores {
            store.update(x, Sign::Add, x.step)?;
        }
        if let Some(queue) = &mut self.window {
            if let Some(old) = queue.admit(x.clone()) {
                for store in &mut self.stores {
                    store.update(&old, Sign::Remove, x.step)?;
                }
            }
        }
        self.clock = Some(x.step);
        Ok(())
    }

    fn check_query(&self, values: &[usize], now: Step) -> Result<()> {
        self.schema.check_values(values)?;
        if let Some(last) = self.clock {
            if now < last {
                return Err(Error::TimeTravel {
                    requested: now,
                    last,
                });
            }
        }
        Ok(())
    }

    /// Natural-log joint scores `ln P(y, x)` for every class at `order`.
    pub fn log_joint_scores(&self, values: &[usize], order: usize, now: Step) -> Result<Vec<f64>> {
        if order > self.config.order {
            return Err(Error::Config(format!(
                "order {order} exceeds model order {}",
                self.config.order
            )));
        }
        self.check_query(values, now)?;
        let mut out = vec![0.0; self.schema.num_classes()];
        self.scores_into(values, order, now, &mut out);
        Ok(out)
    }

    /// `P(y, x)` at `order`. May underflow to zero for wide schemas; use
    /// [`Self::log_joint_scores`] when that matters.
    pub fn joint_score(
        &self,
        values: &[usize],
        class: usize,
        order: usize,
        now: Step,
    ) -> Result<f64> {
        if class >= self.schema.num_classes() {
            return Err(Error::SchemaViolation(format!(
                "class {class} out of range"
            )));
        }
        Ok(self.log_joint_scores(values, order, now)?[class].exp())
    }

    pub fn posterior(&self, values: &[usize], now: Step) -> Result<ClassDistribution> {
        let scores = self.log_joint_scores(values, self.config.order, now)?;
        Ok(ClassDistribution::from_log_scores(&scores))
    }

    pub fn predict(&self, values: &[usize], now: Step) -> Result<usize> {
        Ok(self.posterior(values, now)?.argmax())
    }

    fn scores_into(&self, values: &[usize], order: usize, now: Step, out: &mut [f64]) {
        let offsets = self.stores[order].value_offsets(values);
        for k in (0..=order).rev() {
            let scorer = Scorer {
                model: self,
                store: &self.stores[k],
                values,
                offsets: &offsets,
                now,
                out: &mut *out,
            };
            if self.stores[k].read_with(now, scorer) {
                return;
            }
        }
        unreachable!("order 0 always qualifies");
    }
}

/// Scores one order against a specialised cell reader.
struct Scorer<'a> {
    model: &'a AndeModel,
    store: &'a CountStore,
    values: &'a [usize],
    offsets: &'a [usize],
    now: Step,
    out: &'a mut [f64],
}

impl CellVisitor for Scorer<'_> {
    /// Whether any subset qualified; if not, `out` is untouched.
    type Output = bool;

    fn visit<C: Cells>(self, cells: &C) -> bool {
        let Scorer {
            model,
            store,
            values,
            offsets,
            now,
            out,
        } = self;
        let classes = model.schema.num_classes();
        let m = model.config.smoothing;
        let log_norm = (store.total_at(now) + m).ln();
        let order = store.order();

        let mut weights = vec![0.0f64; classes];
        let mut parents = vec![0usize; classes];
        // Online log-sum-exp per class: (running max, scaled sum).
        let mut acc = vec![(f64::NEG_INFINITY, 0.0f64); classes];
        let mut qualifying = 0usize;

        for rank in 0..store.num_subsets() {
            let mut mass = 0.0;
            for y in 0..classes {
                parents[y] = store.parent_cell(rank, values, y);
                weights[y] = cells.weight(parents[y]);
                mass += weights[y];
            }
            if order > 0 && (mass.is_nan() || mass <= model.config.delta_threshold) {
                continue;
            }
            qualifying += 1;

            let combos: usize = store
                .subset_attributes(rank)
                .iter()
                .map(|&i| model.schema.arity(i))
                .product();
            let joint_prior = m / (classes * combos) as f64;
            let ranges = store.child_ranges(rank);
            for y in 0..classes {
                let joint = weights[y] + joint_prior;
                let denom = weights[y] + m;
                if !(joint > 0.0 && denom > 0.0) {
                    continue;
                }
                let term = joint.ln() - log_norm
                    + log_child_product(
                        cells,
                        store.child_base(parents[y]),
                        &ranges,
                        offsets,
                        &model.child_prior,
                        1.0 / denom,
                    );
                if term == f64::NEG_INFINITY {
                    continue;
                }
                let (max, sum) = &mut acc[y];
                if term > *max {
                    *sum = *sum * (*max - term).exp() + 1.0;
                    *max = term;
                } else {
                    *sum += (term - *max).exp();
                }
            }
        }

        if qualifying == 0 {
            return false;
        }
        let log_count = (qualifying as f64).ln();
        for (slot, &(max, sum)) in out.iter_mut().zip(&acc) {
            *slot = if max == f64::NEG_INFINITY {
                f64::NEG_INFINITY
            } else {
                max + sum.ln() - log_count
            };
        }
        true
    }
}

/// `ln Π_{i∉s} P(x_i | y, x_s)` for the child block starting at `base`.
#[inline]
fn log_child_product<C: Cells>(
    cells: &C,
    base: usize,
    ranges: &[std::ops::Range<usize>; 3],
    offsets: &[usize],
    child_prior: &[f64],
    inv_denom: f64,
) -> f64 {
    let mut log_acc = 0.0;
    let mut prod = 1.0;
    for range in ranges.iter().cloned() {
        for (&off, &prior) in offsets[range.clone()].iter().zip(&child_prior[range]) {
            let p = (cells.weight(base + off) + prior) * inv_denom;
            if p <= 0.0 {
                return f64::NEG_INFINITY;
            }
            prod *= p;
            if prod < RESCALE_BELOW {
                log_acc += prod.ln();
                prod = 1.0;
            }
        }
    }
    log_acc + prod.ln()
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::counts::SubsetKey;

    fn model(schema: &Schema, order: usize, policy: ForgetPolicy, m: f64) -> AndeModel {
        let config = AndeConfig {
            order,
            smoothing: m,
            policy,
            ..AndeConfig::default()
        };
        AndeModel::new(schema, config).unwrap()
    }

    fn random_data(seed: u64, schema: &Schema, len: usize) -> Vec<Instance> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..len)
            .map(|t| {
                let values = schema
                    .arities()
                    .iter()
                    .map(|&a| rng.random_range(0..a))
                    .collect();
                Instance::new(values, rng.random_range(0..schema.num_classes()), t as Step)
            })
            .collect()
    }

    /// Plain-probability naive Bayes with the same m-estimates, counted
    /// directly from the data.
    fn naive_bayes_oracle(data: &[Instance], schema: &Schema, m: f64, x: &[usize]) -> Vec<f64> {
        let classes = schema.num_classes();
        let n = data.len() as f64;
        let joint: Vec<f64> = (0..classes)
            .map(|y| {
                let cy = data.iter().filter(|d| d.class == y).count() as f64;
                let mut p = (cy + m / classes as f64) / (n + m);
                for (i, &v) in x.iter().enumerate() {
                    let cxy = data
                        .iter()
                        .filter(|d| d.class == y && d.values[i] == v)
                        .count() as f64;
                    p *= (cxy + m / schema.arity(i) as f64) / (cy + m);
                }
                p
            })
            .collect();
        let z: f64 = joint.iter().sum();
        joint.iter().map(|p| p / z).collect()
    }

    /// Direct evaluation of the order-1 formula over all subsets.
    fn a1de_oracle(data: &[Instance], schema: &Schema, m: f64, x: &[usize], y: usize) -> f64 {
        let a = schema.num_attributes();
        let c = schema.num_classes() as f64;
        let n = data.len() as f64;
        let count =
            |pred: &dyn Fn(&Instance) -> bool| data.iter().filter(|d| pred(d)).count() as f64;
        let mut num = 0.0;
        let mut seen = 0.0;
        for s in 0..a {
            if count(&|d| d.values[s] == x[s]) == 0.0 {
                continue;
            }
            seen += 1.0;
            let cys = count(&|d| d.class == y && d.values[s] == x[s]);
            if cys + m == 0.0 {
                continue;
            }
            let mut p = (cys + m / (c * schema.arity(s) as f64)) / (n + m);
            for i in (0..a).filter(|&i| i != s) {
                let cysi = count(&|d| d.class == y && d.values[s] == x[s] && d.values[i] == x[i]);
                p *= (cysi + m / schema.arity(i) as f64) / (cys + m);
            }
            num += p;
        }
        num / seen
    }

    #[test]
    fn learn_updates_whole_chain() {
        let schema = Schema::binary(3).unwrap();
        let mut ande = model(&schema, 1, ForgetPolicy::None, 1.0);
        ande.learn(&Instance::new(vec![1, 0, 1], 1, 0)).unwrap();
        assert_eq!(ande.stores().len(), 2);
        for (k, store) in ande.stores().iter().enumerate() {
            assert_eq!(store.order(), k);
            assert_eq!(store.total_weight(0).unwrap(), 1.0);
        }
        let key = SubsetKey::child(vec![0], vec![1], 1, 2, 1);
        assert_eq!(ande.stores()[1].effective_count(&key, 0).unwrap(), 1.0);
    }

    #[test]
    fn naive_bayes_class_counts_sum_to_k() {
        let schema = Schema::binary(4).unwrap();
        let data = random_data(1, &schema, 37);
        let mut ande = model(&schema, 0, ForgetPolicy::None, 1.0);
        for x in &data {
            ande.learn(x).unwrap();
        }
        let sum: f64 = (0..2)
            .map(|y| {
                ande.stores()[0]
                    .effective_count(&SubsetKey::parent(vec![], vec![], y), 36)
                    .unwrap()
            })
            .sum();
        assert_eq!(sum, 37.0);
    }

    #[test]
    fn windowed_a2de_equals_batch_on_last_w() {
        let schema = Schema::new(vec![2, 3, 2, 2, 3], 2).unwrap();
        let data = random_data(2, &schema, 100);
        let mut incremental = model(&schema, 2, ForgetPolicy::Window(20), 1.0);
        for x in &data {
            incremental.learn(x).unwrap();
        }
        let mut batch = model(&schema, 2, ForgetPolicy::None, 1.0);
        for x in &data[80..] {
            batch.learn(x).unwrap();
        }
        for k in 0..=2 {
            assert_eq!(
                incremental.stores()[k].effective_entries(99).unwrap(),
                batch.stores()[k].effective_entries(99).unwrap()
            );
        }
        for q in random_data(3, &schema, 20) {
            assert_eq!(
                incremental.posterior(&q.values, 99).unwrap(),
                batch.posterior(&q.values, 99).unwrap()
            );
        }
    }

    #[test]
    fn order_zero_prior_only_case() {
        // A constant attribute carries no class information, so the
        // posterior is the class prior.
        let schema = Schema::binary(1).unwrap();
        let mut ande = model(&schema, 0, ForgetPolicy::None, 0.0);
        for (t, y) in [0, 0, 0, 1].into_iter().enumerate() {
            ande.learn(&Instance::new(vec![0], y, t as Step)).unwrap();
        }
        let s0 = ande.joint_score(&[0], 0, 0, 3).unwrap();
        let s1 = ande.joint_score(&[0], 1, 0, 3).unwrap();
        assert!((s0 - 0.75).abs() < 1e-15 && (s1 - 0.25).abs() < 1e-15);
        let post = ande.posterior(&[0], 3).unwrap();
        assert!((post.probabilities[0] - 0.75).abs() < 1e-15);

        let mut smoothed = model(&schema, 0, ForgetPolicy::None, 1.0);
        for (t, y) in [0, 0, 0, 1].into_iter().enumerate() {
            smoothed
                .learn(&Instance::new(vec![0], y, t as Step))
                .unwrap();
        }
        let s0 = smoothed.joint_score(&[0], 0, 0, 3).unwrap();
        let s1 = smoothed.joint_score(&[0], 1, 0, 3).unwrap();
        // (3.5/5)(3.5/4) vs (1.5/5)(1.5/2)
        assert!((s0 - 0.6125).abs() < 1e-15);
        assert!((s1 - 0.225).abs() < 1e-15);
    }

    #[test]
    fn unseen_subsets_fall_back_one_order() {
        let schema = Schema::binary(3).unwrap();
        let mut ande = model(&schema, 1, ForgetPolicy::None, 1.0);
        for t in 0..5 {
            ande.learn(&Instance::new(vec![0, 0, 0], t % 2, t as Step))
                .unwrap();
        }
        let q = [1, 1, 1];
        assert_eq!(
            ande.log_joint_scores(&q, 1, 4).unwrap(),
            ande.log_joint_scores(&q, 0, 4).unwrap()
        );
    }

    #[test]
    fn a1de_matches_formula_by_enumeration() {
        let schema = Schema::binary(3).unwrap();
        let data: Vec<Instance> = [
            ([0, 0, 1], 0),
            ([0, 1, 1], 0),
            ([1, 1, 0], 1),
            ([1, 0, 0], 1),
            ([0, 1, 0], 1),
            ([1, 1, 1], 0),
        ]
        .into_iter()
        .enumerate()
        .map(|(t, (v, y))| Instance::new(v.to_vec(), y, t as Step))
        .collect();
        for m in [0.0, 1.0, 2.5] {
            let mut ande = model(&schema, 1, ForgetPolicy::None, m);
            for x in &data {
                ande.learn(x).unwrap();
            }
            for bits in 0..8usize {
                let q = [bits & 1, (bits >> 1) & 1, (bits >> 2) & 1];
                for y in 0..2 {
                    let expected = a1de_oracle(&data, &schema, m, &q, y);
                    let got = ande.joint_score(&q, y, 1, 5).unwrap();
                    assert!(
                        (got - expected).abs() < 1e-12,
                        "m={m} q={q:?} y={y}: {got} vs {expected}"
                    );
                }
            }
        }
    }

    #[test]
    fn symmetric_counts_give_even_posterior() {
        let schema = Schema::binary(2).unwrap();
        let mut ande = model(&schema, 1, ForgetPolicy::None, 1.0);
        ande.learn(&Instance::new(vec![1, 0], 0, 0)).unwrap();
        ande.learn(&Instance::new(vec![1, 0], 1, 1)).unwrap();
        let post = ande.posterior(&[1, 0], 1).unwrap();
        assert!((post.probabilities[0] - 0.5).abs() < 1e-15);
        assert_eq!(post.argmax(), 0);
    }

    #[test]
    fn order_zero_is_naive_bayes() {
        let schema = Schema::new(vec![2, 3, 2], 3).unwrap();
        let data = random_data(4, &schema, 10);
        let mut ande = model(&schema, 0, ForgetPolicy::None, 1.0);
        for x in &data {
            ande.learn(x).unwrap();
        }
        for q in random_data(5, &schema, 30) {
            let got = ande.posterior(&q.values, 9).unwrap().probabilities;
            let expected = naive_bayes_oracle(&data, &schema, 1.0, &q.values);
            for (g, e) in got.iter().zip(&expected) {
                assert!((g - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn empty_unsmoothed_model_is_flagged_uniform() {
        let schema = Schema::binary(2).unwrap();
        let ande = model(&schema, 2, ForgetPolicy::None, 0.0);
        let post = ande.posterior(&[0, 1], 0).unwrap();
        assert!(post.degenerate);
        assert_eq!(post.probabilities, vec![0.5, 0.5]);
        let smoothed = model(&schema, 2, ForgetPolicy::None, 1.0);
        let post = smoothed.posterior(&[0, 1], 0).unwrap();
        assert!(!post.degenerate);
        assert!((post.probabilities[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn argmax_rules() {
        let d = |p: Vec<f64>| ClassDistribution {
            probabilities: p,
            degenerate: false,
        };
        assert_eq!(d(vec![0.9, 0.1]).argmax(), 0);
        assert_eq!(d(vec![0.5, 0.5]).argmax(), 0);
        assert_eq!(d(vec![0.2, 0.4, 0.4]).argmax(), 1);
        let scores = [-3.0, -1.0, -2.0];
        let shifted: Vec<f64> = scores.iter().map(|s| s + 17.5).collect();
        assert_eq!(
            ClassDistribution::from_log_scores(&scores).argmax(),
            ClassDistribution::from_log_scores(&shifted).argmax()
        );
    }

    #[test]
    fn wide_schemas_do_not_underflow() {
        let schema = Schema::binary(400).unwrap();
        let data = random_data(6, &schema, 50);
        let mut ande = model(&schema, 1, ForgetPolicy::Decay(0.05), 1.0);
        for x in &data {
            ande.learn(x).unwrap();
        }
        let post = ande.posterior(&data[0].values, 49).unwrap();
        assert!(!post.degenerate);
        assert!(post.probabilities.iter().all(|p| p.is_finite()));
        assert!((post.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_input() {
        let schema = Schema::binary(2).unwrap();
        assert!(AndeModel::new(&schema, AndeConfig::new(3, ForgetPolicy::None)).is_err());
        let mut ande = model(&schema, 1, ForgetPolicy::None, 1.0);
        assert!(ande.learn(&Instance::new(vec![0, 2], 0, 0)).is_err());
        ande.learn(&Instance::new(vec![0, 1], 0, 4)).unwrap();
        assert!(matches!(
            ande.posterior(&[0, 1], 3),
            Err(Error::TimeTravel { .. })
        ));
        assert!(ande.log_joint_scores(&[0, 1], 2, 4).is_err());
    }

    mod props {
        use proptest::prelude::*;

        use super::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(10_000))]

            #[test]
            fn posterior_is_a_distribution(
                seed in any::<u64>(),
                len in 0usize..25,
                order in 0usize..3,
                m in 0.0f64..3.0,
                decay in prop::option::of(0.001f64..1.0),
                q in prop::collection::vec(0usize..2, 3),
            ) {
                let schema = Schema::new(vec![2, 2, 2], 2).unwrap();
                let policy = decay.map_or(ForgetPolicy::None, ForgetPolicy::Decay);
                let mut ande = model(&schema, order, policy, m);
                for x in random_data(seed, &schema, len) {
                    ande.learn(&x).unwrap();
                }
                let post = ande.posterior(&q, ande.now() + 1).unwrap();
                let sum: f64 = post.probabilities.iter().sum();
                prop_assert!((sum - 1.0).abs() < 1e-9);
                prop_assert!(post.probabilities.iter().all(|&p| (0.0..=1.0).contains(&p)));
            }
        }
    }
}
