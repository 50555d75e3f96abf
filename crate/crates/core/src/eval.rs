//! Prequential (test-then-train) evaluation and experiment grids.

use std::borrow::Borrow;
use std::io::Write;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::ande::{AndeConfig, AndeModel};
use crate::driftgen::{generate_stream, DriftConfig, NetworkShape};
use crate::error::{Error, Result};
use crate::forgetting::ForgetPolicy;
use crate::schema::Instance;

/// Steps averaged into each point of a loss curve.
pub const DEFAULT_BUCKET: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct PrequentialResult {
    /// 0-1 loss per step.
    pub losses: Vec<u8>,
    /// Mean loss over consecutive buckets; the last bucket may be short.
    pub bucketed: Vec<f64>,
    pub mean_error: f64,
    pub run_seed: u64,
}

impl PrequentialResult {
    pub fn from_losses(losses: Vec<u8>, bucket: usize, run_seed: u64) -> Result<Self> {
        if bucket == 0 {
            return Err(Error::Config("bucket size must be at least 1".into()));
        }
        let bucketed = losses
            .chunks(bucket)
            .map(|c| c.iter().map(|&l| f64::from(l)).sum::<f64>() / c.len() as f64)
            .collect();
        let errors: usize = losses.iter().map(|&l| usize::from(l)).sum();
        let mean_error = if losses.is_empty() {
            0.0
        } else {
            errors as f64 / losses.len() as f64
        };
        Ok(Self {
            losses,
            bucketed,
            mean_error,
            run_seed,
        })
    }

    pub fn steps(&self) -> usize {
        self.losses.len()
    }
}

/// Classifies each instance with the current model, records the loss, then
/// learns it.
pub fn prequential<I, B>(
    model: &mut AndeModel,
    stream: I,
    bucket: usize,
    run_seed: u64,
) -> Result<PrequentialResult>
where
    I: IntoIterator<Item = B>,
    B: Borrow<Instance>,
{
    prequential_try(model, stream.into_iter().map(Ok), bucket, run_seed)
}

/// [`prequential`] over a fallible source such as a file reader.
pub fn prequential_try<I, B>(
    model: &mut AndeModel,
    stream: I,
    bucket: usize,
    run_seed: u64,
) -> Result<PrequentialResult>
where
    I: IntoIterator<Item = Result<B>>,
    B: Borrow<Instance>,
{
    let mut losses = Vec::new();
    for x in stream {
        let x = x?;
        let x = x.borrow();
        model.schema().check(x)?;
        let predicted = model.predict(&x.values, x.step)?;
        losses.push(u8::from(predicted != x.class));
        model.learn(x)?;
    }
    PrequentialResult::from_losses(losses, bucket, run_seed)
}

/// Mean curve and error over several runs.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub curve: Vec<f64>,
    pub mean_error: f64,
    /// Standard error of the mean of per-run errors (zero for one run).
    pub stderr: f64,
    pub runs: usize,
}

pub fn aggregate(results: &[PrequentialResult]) -> Result<Aggregate> {
    let first = results
        .first()
        .ok_or_else(|| Error::Empty("no prequential results to aggregate".into()))?;
    if results
        .iter()
        .any(|r| r.bucketed.len() != first.bucketed.len())
    {
        return Err(Error::Config("runs have different lengths".into()));
    }
    let runs = results.len() as f64;
    let curve = (0..first.bucketed.len())
        .map(|b| results.iter().map(|r| r.bucketed[b]).sum::<f64>() / runs)
        .collect();
    let mean_error = results.iter().map(|r| r.mean_error).sum::<f64>() / runs;
    let stderr = if results.len() > 1 {
        let var = results
            .iter()
            .map(|r| (r.mean_error - mean_error).powi(2))
            .sum::<f64>()
            / (runs - 1.0);
        (var / runs).sqrt()
    } else {
        0.0
    };
    Ok(Aggregate {
        curve,
        mean_error,
        stderr,
        runs: results.len(),
    })
}

/// Stream seed for run `run` of drift setting `setting`.
///
/// The master seed, setting index and run index fill the ChaCha key, so every
/// (setting, run) pair gets an independent stream while all models and
/// policies evaluated on that pair see the same data.
pub fn derive_seed(master: u64, setting: usize, run: usize) -> u64 {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&master.to_le_bytes());
    key[8..16].copy_from_slice(&(setting as u64).to_le_bytes());
    key[16..24].copy_from_slice(&(run as u64).to_le_bytes());
    ChaCha8Rng::from_seed(key).next_u64()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub deltas: Vec<f64>,
    pub models: Vec<usize>,
    pub policies: Vec<ForgetPolicy>,
    pub runs: usize,
    pub stream_length: usize,
    pub bucket: usize,
    /// Generator size for NB and A1DE cells.
    pub attributes: usize,
    /// Smaller generator for A2DE cells, if set.
    pub a2de_attributes: Option<usize>,
    /// Period, fraction and pool; the delta is taken from `deltas`.
    pub drift: DriftConfig,
    pub smoothing: f64,
    pub master_seed: u64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            deltas: vec![0.05, 0.01, 0.0005],
            models: vec![0, 1, 2],
            policies: ForgetPolicy::default_sweep(),
            runs: 30,
            stream_length: 5000,
            bucket: DEFAULT_BUCKET,
            attributes: 200,
            a2de_attributes: Some(50),
            drift: DriftConfig::default(),
            smoothing: 1.0,
            master_seed: 0,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.deltas.is_empty() || self.models.is_empty() || self.policies.is_empty() {
            return Err(Error::Config("grid axes must be non-empty".into()));
        }
        if self.runs == 0 {
            return Err(Error::Config(
                "at least one run per cell is required".into(),
            ));
        }
        if self.bucket == 0 {
            return Err(Error::Config("bucket size must be at least 1".into()));
        }
        for p in &self.policies {
            p.validate()?;
        }
        for &d in &self.deltas {
            DriftConfig {
                delta: d,
                ..self.drift.clone()
            }
            .validate()?;
        }
        if let Some(&n) = self.models.iter().find(|&&n| n > 2) {
            return Err(Error::Config(format!("AnDE order {n} not supported")));
        }
        Ok(())
    }

    pub fn shape_for(&self, order: usize) -> Result<NetworkShape> {
        let attributes = match (order, self.a2de_attributes) {
            (2, Some(a)) => a,
            _ => self.attributes,
        };
        NetworkShape::with_attributes(attributes)
    }

    /// Cells in table order: delta, then model, then policy.
    fn cells(&self) -> Vec<(usize, usize, ForgetPolicy)> {
        let mut cells = Vec::new();
        for di in 0..self.deltas.len() {
            for &n in &self.models {
                for &p in &self.policies {
                    cells.push((di, n, p));
                }
            }
        }
        cells
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    pub delta: f64,
    pub order: usize,
    pub policy: ForgetPolicy,
    pub aggregate: Aggregate,
    /// Mean error of each run, in run order.
    pub run_errors: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridResults {
    pub cells: Vec<GridCell>,
    pub bucket: usize,
}

impl GridResults {
    pub fn cell(&self, delta: f64, order: usize, policy: ForgetPolicy) -> Option<&GridCell> {
        self.cells
            .iter()
            .find(|c| c.delta == delta && c.order == order && c.policy == policy)
    }

    /// Lowest mean error for `order` at `delta`, optionally restricted to
    /// policies accepted by `filter`.
    pub fn best(
        &self,
        delta: f64,
        order: Option<usize>,
        filter: impl Fn(&ForgetPolicy) -> bool,
    ) -> Option<&GridCell> {
        self.cells
            .iter()
            .filter(|c| c.delta == delta && order.is_none_or(|n| c.order == n) && filter(&c.policy))
            .min_by(|a, b| a.aggregate.mean_error.total_cmp(&b.aggregate.mean_error))
    }

    /// Fraction of runs, paired by run index, in which `a` has strictly lower
    /// error than `b`.
    pub fn paired_fraction(a: &GridCell, b: &GridCell) -> f64 {
        let n = a.run_errors.len().min(b.run_errors.len());
        if n == 0 {
            return 0.0;
        }
        let wins = a
            .run_errors
            .iter()
            .zip(&b.run_errors)
            .filter(|(x, y)| x < y)
            .count();
        wins as f64 / n as f64
    }

    /// `delta,n,policy,param,mean_error,stderr,runs`
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "delta",
            "n",
            "policy",
            "param",
            "mean_error",
            "stderr",
            "runs",
        ])?;
        for c in &self.cells {
            w.write_record([
                c.delta.to_string(),
                c.order.to_string(),
                c.policy.variant_name().to_string(),
                c.policy.param_string(),
                c.aggregate.mean_error.to_string(),
                c.aggregate.stderr.to_string(),
                c.aggregate.runs.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `bucket_start_step,mean_loss`
pub fn write_curve_csv<W: Write>(curve: &[f64], bucket: usize, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["bucket_start_step", "mean_loss"])?;
    for (b, v) in curve.iter().enumerate() {
        w.write_record([(b * bucket).to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// One prequential run on a freshly generated stream.
pub fn run_synthetic(
    seed: u64,
    shape: NetworkShape,
    drift: &DriftConfig,
    model: AndeConfig,
    stream_length: usize,
    bucket: usize,
) -> Result<PrequentialResult> {
    let stream = generate_stream(seed, shape, drift, stream_length)?;
    let mut ande = AndeModel::new(&stream.network.schema(), model)?;
    prequential(&mut ande, &stream.instances, bucket, seed)
}

/// Evaluates every (delta, model, policy) cell on `runs` seeded streams.
///
/// `jobs` bounds the worker threads; `None` uses all available processors.
/// Results do not depend on `jobs` or on scheduling order.
pub fn run_grid(spec: &GridSpec, jobs: Option<usize>) -> Result<GridResults> {
    spec.validate()?;
    let cells = spec.cells();
    let tasks: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..spec.runs).map(move |r| (c, r)))
        .collect();

    let run_task = |&(c, run): &(usize, usize)| -> Result<PrequentialResult> {
        let (di, order, policy) = cells[c];
        let drift = DriftConfig {
            delta: spec.deltas[di],
            ..spec.drift.clone()
        };
        let model = AndeConfig {
            order,
            smoothing: spec.smoothing,
            policy,
            ..AndeConfig::default()
        };
        run_synthetic(
            derive_seed(spec.master_seed, di, run),
            spec.shape_for(order)?,
            &drift,
            model,
            spec.stream_length,
            spec.bucket,
        )
    };

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        builder = builder.num_threads(j.max(1));
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let results: Vec<PrequentialResult> =
        pool.install(|| tasks.par_iter().map(run_task).collect::<Result<_>>())?;

    let cells = cells
        .iter()
        .zip(results.chunks(spec.runs))
        .map(|(&(di, order, policy), runs)| {
            Ok(GridCell {
                delta: spec.deltas[di],
                order,
                policy,
                aggregate: aggregate(runs)?,
                run_errors: runs.iter().map(|r| r.mean_error).collect(),
            })
        })
        .collect::<Result<_>>()?;
    Ok(GridResults {
        cells,
        bucket: spec.bucket,
    })
}

#[cfg(test)]
mod tests {
    use rand::Rng;

    use super::*;
    use crate::schema::Schema;

    fn nb() -> AndeModel {
        AndeModel::new(
            &Schema::binary(3).unwrap(),
            AndeConfig::new(0, ForgetPolicy::None),
        )
        .unwrap()
    }

    #[test]
    fn constant_class_stream_errs_at_most_once() {
        let stream: Vec<_> = (0..40)
            .map(|t| Instance::new(vec![t % 2, 1, 0], 1, t as u64))
            .collect();
        let r = prequential(&mut nb(), &stream, 10, 0).unwrap();
        // An empty model ties and predicts class 0.
        assert_eq!(r.losses[0], 1);
        assert_eq!(r.losses[1..].iter().map(|&l| l as usize).sum::<usize>(), 0);
        assert_eq!(r.bucketed, vec![0.1, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn random_labels_give_half_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let stream: Vec<_> = (0..5000)
            .map(|t| {
                Instance::new(
                    (0..3).map(|_| rng.random_range(0..2)).collect(),
                    rng.random_range(0..2),
                    t,
                )
            })
            .collect();
        let r = prequential(&mut nb(), &stream, 50, 0).unwrap();
        assert!((r.mean_error - 0.5).abs() < 0.02, "{}", r.mean_error);
        assert_eq!(r.bucketed.len(), 100);
    }

    #[test]
    fn tests_before_training() {
        // Each instance is the first of its kind, so it can only be
        // classified correctly if it was learned before being tested.
        let schema = Schema::new(vec![10], 2).unwrap();
        let stream: Vec<_> = (0..10)
            .map(|t| Instance::new(vec![t], 1 - (t % 2), t as u64))
            .collect();
        let config = AndeConfig {
            order: 0,
            smoothing: 0.01,
            ..AndeConfig::default()
        };
        let mut model = AndeModel::new(&schema, config.clone()).unwrap();
        let test_first = prequential(&mut model, &stream, 5, 0).unwrap();

        let mut model = AndeModel::new(&schema, config).unwrap();
        let mut train_first = Vec::new();
        for x in &stream {
            model.learn(x).unwrap();
            train_first.push(u8::from(
                model.predict(&x.values, x.step).unwrap() != x.class,
            ));
        }
        assert_eq!(train_first, vec![0; 10]);
        assert_ne!(test_first.losses, train_first);
    }

    #[test]
    fn bucketing_conserves_the_mean() {
        let losses: Vec<u8> = (0..137).map(|i| u8::from(i % 3 == 0)).collect();
        let r = PrequentialResult::from_losses(losses, 50, 0).unwrap();
        assert_eq!(r.bucketed.len(), 3);
        let weighted = r.bucketed[0] * 50.0 + r.bucketed[1] * 50.0 + r.bucketed[2] * 37.0;
        assert!((weighted / 137.0 - r.mean_error).abs() < 1e-12);
    }

    #[test]
    fn aggregate_identities() {
        let a = PrequentialResult::from_losses(vec![1, 0, 1, 1], 2, 1).unwrap();
        let agg = aggregate(std::slice::from_ref(&a)).unwrap();
        assert_eq!(agg.curve, a.bucketed);
        assert_eq!(agg.mean_error, a.mean_error);
        assert_eq!(agg.stderr, 0.0);

        let b = PrequentialResult::from_losses(vec![0, 1, 0, 0], 2, 2).unwrap();
        let agg = aggregate(&[a, b]).unwrap();
        assert_eq!(agg.curve, vec![0.5, 0.5]);
        assert_eq!(agg.mean_error, 0.5);
        assert!((agg.stderr - 0.25).abs() < 1e-15);
        assert!(matches!(aggregate(&[]), Err(Error::Empty(_))));
    }

    #[test]
    fn seeds_split_by_setting_and_run() {
        assert_eq!(derive_seed(1, 2, 3), derive_seed(1, 2, 3));
        assert_ne!(derive_seed(1, 2, 3), derive_seed(1, 2, 4));
        assert_ne!(derive_seed(1, 2, 3), derive_seed(1, 3, 3));
        assert_ne!(derive_seed(1, 2, 3), derive_seed(2, 2, 3));
    }

    fn tiny_grid() -> GridSpec {
        GridSpec {
            deltas: vec![0.05],
            models: vec![0, 1],
            policies: vec![ForgetPolicy::Window(20), ForgetPolicy::Decay(0.05)],
            runs: 3,
            stream_length: 120,
            attributes: 12,
            a2de_attributes: None,
            master_seed: 42,
            ..GridSpec::default()
        }
    }

    #[test]
    fn degenerate_grid_is_a_single_run() {
        let spec = GridSpec {
            models: vec![0],
            policies: vec![ForgetPolicy::Window(20)],
            runs: 1,
            ..tiny_grid()
        };
        let results = run_grid(&spec, Some(1)).unwrap();
        assert_eq!(results.cells.len(), 1);
        let direct = run_synthetic(
            derive_seed(42, 0, 0),
            NetworkShape::with_attributes(12).unwrap(),
            &DriftConfig::with_delta(0.05),
            AndeConfig::new(0, ForgetPolicy::Window(20)),
            120,
            DEFAULT_BUCKET,
        )
        .unwrap();
        let cell = &results.cells[0];
        assert_eq!(cell.aggregate.mean_error, direct.mean_error);
        assert_eq!(cell.aggregate.curve, direct.bucketed);
        assert_eq!(cell.aggregate.curve.len(), 3);
    }

    #[test]
    fn grid_is_reproducible_and_schedule_independent() {
        let spec = tiny_grid();
        let a = run_grid(&spec, Some(1)).unwrap();
        let b = run_grid(&spec, Some(3)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.cells.len(), 4);
        let mut csv = Vec::new();
        a.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("delta,n,policy,param,mean_error,stderr,runs\n0.05,0,window,20,"));
        let best = a.best(0.05, Some(0), |_| true).unwrap();
        assert!(a
            .cells
            .iter()
            .filter(|c| c.order == 0)
            .all(|c| best.aggregate.mean_error <= c.aggregate.mean_error));
    }

    #[test]
    fn grid_rejects_empty_axes() {
        let spec = GridSpec {
            models: vec![],
            ..tiny_grid()
        };
        assert!(run_grid(&spec, Some(1)).is_err());
    }

    #[test]
    fn curve_csv_layout() {
        let mut out = Vec::new();
        write_curve_csv(&[0.5, 0.25], 50, &mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "bucket_start_step,mean_loss\n0,0.5\n50,0.25\n"
        );
    }
}
