use std::collections::hash_map::RandomState;
use std::fmt::Write as _;
use std::hash::BuildHasher;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;
use serde_json::{json, Map, Value};

use driftlab::ande::{AndeConfig, AndeModel};
use driftlab::driftgen::{
    generate_stream, write_drift_log_csv, write_stream_csv, DriftConfig, DriftPreset, NetworkShape,
};
use driftlab::eval::{
    derive_seed, prequential_try, run_grid, write_curve_csv, GridCell, GridResults, GridSpec,
    PrequentialResult,
};
use driftlab::forgetting::ForgetPolicy;
use driftlab::ingest::{
    write_discretized_csv, ClassColumn, DatasetMeta, DatasetStream, Format, ParseOptions,
};

use crate::baselines;
use crate::output::{summary, write_atomic};
use crate::settings::Settings;

const DESK_RUNS: usize = 30;
const FULL_SCALE_RUNS: usize = 150;

pub fn set_policy(s: &mut Settings, policy: ForgetPolicy) -> Result<()> {
    s.set("forget.variant", policy.variant_name().into())?;
    match policy {
        ForgetPolicy::Window(w) => s.set("forget.window", (w as u64).into()),
        ForgetPolicy::Decay(d) => s.set("forget.decay", d.into()),
        ForgetPolicy::None => Ok(()),
    }
}

fn policy(s: &Settings) -> Result<ForgetPolicy> {
    let p = match s.string("forget.variant")?.as_str() {
        "none" => ForgetPolicy::None,
        "window" => ForgetPolicy::Window(s.usize("forget.window")?),
        "decay" => ForgetPolicy::Decay(s.f64("forget.decay")?),
        other => bail!("forget.variant must be none, window or decay, got {other:?}"),
    };
    p.validate()?;
    Ok(p)
}

fn policies(s: &Settings) -> Result<Vec<ForgetPolicy>> {
    s.list("grid.policies")?
        .iter()
        .map(|p| p.parse().map_err(anyhow::Error::from))
        .collect()
}

fn models(s: &Settings) -> Result<Vec<usize>> {
    s.list("grid.models")?
        .iter()
        .map(|m| {
            m.parse()
                .with_context(|| format!("grid.models: bad order {m:?}"))
        })
        .collect()
}

/// A preset name or a literal drift magnitude.
fn parse_delta(token: &str) -> Result<f64> {
    match token.parse::<DriftPreset>() {
        Ok(p) => Ok(p.delta()),
        Err(_) => token
            .parse()
            .map_err(|_| anyhow!("expected fast, medium, slow or a number, got {token:?}")),
    }
}

fn preset_name(delta: f64) -> Option<&'static str> {
    DriftPreset::ALL
        .iter()
        .find(|p| p.delta() == delta)
        .map(|p| p.name())
}

fn drift(s: &Settings) -> Result<DriftConfig> {
    let delta = match s.is_null("stream.delta") {
        true => parse_delta(&s.string("stream.preset")?)?,
        false => s.f64("stream.delta")?,
    };
    let cfg = DriftConfig {
        delta,
        period: s.usize("stream.period")?,
        fraction: s.f64("stream.fraction")?,
        pool: s.string("stream.pool")?.parse()?,
        sign: s.string("stream.sign")?.parse()?,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn runs(s: &Settings, desk: usize) -> Result<usize> {
    match s.opt_usize("eval.runs")? {
        Some(0) => bail!("eval.runs must be at least 1"),
        Some(r) => Ok(r),
        None if s.bool("full_scale")? => Ok(FULL_SCALE_RUNS),
        None => Ok(desk),
    }
}

/// Fixes the master seed, drawing one from the OS-seeded hasher if unset.
fn seed(s: &mut Settings) -> Result<u64> {
    if s.is_null("seed") {
        let drawn = RandomState::new().hash_one(Instant::now());
        s.set("seed", drawn.into())?;
    }
    s.u64("seed")
}

fn out_dir(s: &Settings) -> Result<PathBuf> {
    s.path("out")
}

fn record(s: &Settings, seed: u64, started: Instant) -> Map<String, Value> {
    let mut m = Map::new();
    m.insert("config_hash".into(), s.hash().into());
    m.insert("seed".into(), seed.into());
    m.insert("wall_time".into(), started.elapsed().as_secs_f64().into());
    m
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        Ok(writeln!(w)?)
    })
}

pub fn generate(s: &mut Settings) -> Result<()> {
    let started = Instant::now();
    let seed = seed(s)?;
    let cfg = drift(s)?;
    let length = s.usize("stream.length")?;
    let shape = NetworkShape::with_attributes(s.usize("stream.attributes")?)?;
    // Same stream as run 0 of `run` with this seed.
    let stream = generate_stream(derive_seed(seed, 0, 0), shape, &cfg, length)?;
    let out = out_dir(s)?;
    let attributes = stream.network.num_attributes();
    write_atomic(&out.join("stream.csv"), |w| {
        Ok(write_stream_csv(&stream.instances, attributes, w)?)
    })?;
    write_atomic(&out.join("drift_log.csv"), |w| {
        Ok(write_drift_log_csv(&stream.events, w)?)
    })?;
    let manifest = json!({
        "config_hash": s.hash(),
        "seed": seed,
        "preset": preset_name(cfg.delta),
        "delta": cfg.delta,
        "period": cfg.period,
        "fraction": cfg.fraction,
        "sign": s.string("stream.sign")?,
        "pool": s.string("stream.pool")?,
        "length": length,
        "attributes": attributes,
        "drift_events": stream.events.len(),
        "settings": s.result_json(),
    });
    write_json(&out.join("manifest.json"), &manifest)?;
    let mut m = record(s, seed, started);
    m.insert("rows".into(), length.into());
    summary(m);
    Ok(())
}

pub fn run(s: &mut Settings) -> Result<()> {
    let started = Instant::now();
    let seed = seed(s)?;
    let cfg = drift(s)?;
    let spec = GridSpec {
        deltas: vec![cfg.delta],
        models: vec![s.usize("model.order")?],
        policies: vec![policy(s)?],
        runs: runs(s, 1)?,
        stream_length: s.usize("stream.length")?,
        bucket: s.usize("eval.bucket")?,
        attributes: s.usize("stream.attributes")?,
        a2de_attributes: None,
        drift: cfg,
        smoothing: s.f64("model.smoothing")?,
        master_seed: seed,
    };
    let results = run_grid(&spec, s.opt_usize("jobs")?)?;
    let cell = &results.cells[0];
    write_atomic(&out_dir(s)?.join("curve.csv"), |w| {
        Ok(write_curve_csv(&cell.aggregate.curve, spec.bucket, w)?)
    })?;
    let mut m = record(s, seed, started);
    m.insert("mean_error".into(), cell.aggregate.mean_error.into());
    m.insert("stderr".into(), cell.aggregate.stderr.into());
    m.insert("runs".into(), cell.aggregate.runs.into());
    summary(m);
    Ok(())
}

pub fn sweetpath(s: &mut Settings) -> Result<()> {
    let started = Instant::now();
    let seed = seed(s)?;
    let full = s.bool("full_scale")?;
    let deltas = s
        .list("grid.presets")?
        .iter()
        .map(|t| parse_delta(t))
        .collect::<Result<Vec<_>>>()?;
    let spec = GridSpec {
        deltas,
        models: models(s)?,
        policies: policies(s)?,
        runs: runs(s, DESK_RUNS)?,
        stream_length: s.usize("stream.length")?,
        bucket: s.usize("eval.bucket")?,
        attributes: s.usize("stream.attributes")?,
        a2de_attributes: if full {
            None
        } else {
            s.opt_usize("grid.a2de_attributes")?
        },
        drift: drift(s)?,
        smoothing: s.f64("model.smoothing")?,
        master_seed: seed,
    };
    let results = run_grid(&spec, s.opt_usize("jobs")?)?;
    let out = out_dir(s)?;
    write_atomic(&out.join("results.csv"), |w| Ok(results.write_csv(w)?))?;
    for c in &results.cells {
        let name = format!("delta{}_n{}_{}.csv", c.delta, c.order, c.policy);
        write_atomic(&out.join("curves").join(name), |w| {
            Ok(write_curve_csv(&c.aggregate.curve, spec.bucket, w)?)
        })?;
    }
    let report = sweetpath_report(&spec, &results);
    write_atomic(&out.join("report.txt"), |w| {
        Ok(w.write_all(report.as_bytes())?)
    })?;
    eprint!("{report}");
    for c in &results.cells {
        let mut m = record(s, seed, started);
        m.insert("delta".into(), c.delta.into());
        m.insert("n".into(), c.order.into());
        m.insert("policy".into(), c.policy.to_string().into());
        m.insert("mean_error".into(), c.aggregate.mean_error.into());
        m.insert("stderr".into(), c.aggregate.stderr.into());
        m.insert("runs".into(), c.aggregate.runs.into());
        summary(m);
    }
    Ok(())
}

/// Effective memory in steps: `W` for a window, `1 / (1 - e^-D)` (the total
/// weight of an infinite decayed history) under decay.
fn memory(p: ForgetPolicy) -> f64 {
    match p {
        ForgetPolicy::None => f64::INFINITY,
        ForgetPolicy::Window(w) => w as f64,
        ForgetPolicy::Decay(d) => 1.0 / (1.0 - (-d).exp()),
    }
}

/// Per drift rate: the winning cell, the best policy of each model, and
/// whether the winner matches the bias-variance expectation that faster
/// drift favours lower-order models with shorter memory.
fn sweetpath_report(spec: &GridSpec, results: &GridResults) -> String {
    let mut deltas = spec.deltas.clone();
    deltas.sort_by(|a, b| b.total_cmp(a));
    let mut models = spec.models.clone();
    models.sort_unstable();
    models.dedup();
    let mut r = String::new();
    let describe = |c: &GridCell| {
        format!(
            "n={} {} (memory {:.1} steps) mean_error={:.4} stderr={:.4}",
            c.order,
            c.policy,
            memory(c.policy),
            c.aggregate.mean_error,
            c.aggregate.stderr
        )
    };
    for (rank, &delta) in deltas.iter().enumerate() {
        let label = preset_name(delta)
            .map(|p| format!(" ({p})"))
            .unwrap_or_default();
        let _ = writeln!(r, "delta {delta}{label}");
        let Some(best) = results.best(delta, None, |_| true) else {
            continue;
        };
        let _ = writeln!(r, "  best: {}", describe(best));
        for &n in &models {
            if let Some(c) = results.best(delta, Some(n), |_| true) {
                let _ = writeln!(r, "  best for n={n}: {}", describe(c));
            }
        }
        // Named presets fix the expected order (fast → 0, medium → 1, slow → 2);
        // custom rates are placed by their rank within the sweep.
        let expected = match DriftPreset::ALL.iter().position(|p| p.delta() == delta) {
            Some(i) => models.iter().copied().min_by_key(|m| m.abs_diff(i)),
            None if deltas.len() > 1 => {
                let pos = rank as f64 * (models.len() - 1) as f64 / (deltas.len() - 1) as f64;
                Some(models[pos.round() as usize])
            }
            None => None,
        };
        let Some(expected) = expected else {
            let _ = writeln!(r, "  sweet path: no expectation for a single custom rate");
            continue;
        };
        let verdict = if best.order == expected {
            "CONSISTENT"
        } else {
            "INCONSISTENT"
        };
        let _ = writeln!(r, "  sweet path expects n={expected}: {verdict}");
        if let Some(alt) = results.best(delta, Some(expected), |_| true) {
            if alt.order != best.order {
                let wins = GridResults::paired_fraction(best, alt);
                let _ = writeln!(
                    r,
                    "  n={} beats n={} in {:.0}% of paired runs",
                    best.order,
                    alt.order,
                    100.0 * wins
                );
            }
        }
    }
    if spec.a2de_attributes.is_some_and(|a| a != spec.attributes) && spec.models.contains(&2) {
        let _ = writeln!(
            r,
            "note: n=2 cells use a {}-attribute generator, the others {} attributes",
            spec.a2de_attributes.unwrap_or(spec.attributes),
            spec.attributes
        );
    }
    r
}

fn parse_options(s: &Settings) -> Result<ParseOptions> {
    let class = match s.raw("data.class") {
        Value::Null => ClassColumn::Last,
        Value::Number(n) => ClassColumn::Index(
            n.as_u64()
                .ok_or_else(|| anyhow!("data.class must be a column index or name"))?
                as usize,
        ),
        Value::String(name) => match name.parse::<usize>() {
            Ok(i) => ClassColumn::Index(i),
            Err(_) if name == "last" => ClassColumn::Last,
            Err(_) => ClassColumn::Name(name.clone()),
        },
        other => bail!("data.class must be a column index or name, got {other}"),
    };
    Ok(ParseOptions {
        class,
        nominal: s.list("data.nominal")?,
        ..ParseOptions::default()
    })
}

fn format_for(s: &Settings, path: &Path) -> Result<Format> {
    Ok(match s.opt_string("data.format")? {
        Some(f) => f.parse()?,
        None => Format::from_path(path)?,
    })
}

/// The data file and, when recognisable, its published dimensions.
fn locate(s: &Settings) -> Result<(PathBuf, Option<&'static DatasetMeta>)> {
    let named = s.opt_string("data.dataset")?;
    let meta = match &named {
        Some(n) => Some(DatasetMeta::lookup(n).ok_or_else(|| anyhow!("unknown dataset {n:?}"))?),
        None => None,
    };
    if let Some(file) = s.opt_string("data.file")? {
        let file = PathBuf::from(file);
        let meta = meta.or_else(|| {
            file.file_stem()
                .and_then(|stem| stem.to_str())
                .and_then(DatasetMeta::lookup)
        });
        return Ok((file, meta));
    }
    let meta = meta.ok_or_else(|| anyhow!("realdata needs --file or --dataset"))?;
    let dir = std::env::var_os("DRIFTLAB_DATA_DIR")
        .ok_or_else(|| anyhow!("DRIFTLAB_DATA_DIR is not set; pass --file instead"))?;
    let file = meta.find_in(Path::new(&dir)).ok_or_else(|| {
        anyhow!(
            "no {} file found in {}",
            meta.name,
            Path::new(&dir).display()
        )
    })?;
    Ok((file, Some(meta)))
}

pub fn realdata(s: &mut Settings) -> Result<()> {
    let started = Instant::now();
    let seed = seed(s)?;
    let (file, meta) = locate(s)?;
    let format = format_for(s, &file)?;
    let options = parse_options(s)?;
    let capacity = s.usize("discretizer.capacity")?;
    let bucket = s.usize("eval.bucket")?;
    let smoothing = s.f64("model.smoothing")?;

    let probe = DatasetStream::open(&file, format, &options, capacity)?;
    let schema = probe.schema().clone();
    drop(probe);
    let validate = s.bool("data.validate")? && meta.is_some();
    if let (true, Some(m)) = (validate, meta) {
        // Instance count is only known after a pass; check the header now.
        if (schema.num_attributes(), schema.num_classes()) != (m.num_attributes, m.num_classes) {
            m.validate(
                m.num_instances,
                schema.num_attributes(),
                schema.num_classes(),
            )
            .context("set data.validate=false to run on a differently shaped file")?;
        }
    }

    let sweep = policies(s)?;
    let cells: Vec<(usize, ForgetPolicy)> = models(s)?
        .into_iter()
        .flat_map(|n| sweep.iter().map(move |&p| (n, p)))
        .collect();
    if cells.is_empty() {
        bail!("grid.models and grid.policies must be non-empty");
    }
    let evaluate = |&(order, policy): &(usize, ForgetPolicy)| -> Result<PrequentialResult> {
        let stream = DatasetStream::open(&file, format, &options, capacity)?;
        let config = AndeConfig {
            order,
            policy,
            smoothing,
            ..AndeConfig::default()
        };
        let mut model = AndeModel::new(&schema, config)?;
        Ok(prequential_try(&mut model, stream, bucket, seed)?)
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = s.opt_usize("jobs")? {
        builder = builder.num_threads(j.max(1));
    }
    let results: Vec<PrequentialResult> = builder
        .build()?
        .install(|| cells.par_iter().map(evaluate).collect::<Result<_>>())?;

    if let (true, Some(m)) = (validate, meta) {
        m.validate(
            results[0].steps() as u64,
            schema.num_attributes(),
            schema.num_classes(),
        )
        .context("set data.validate=false to run on a differently shaped file")?;
    }

    let dataset = meta.map_or_else(
        || {
            file.file_stem()
                .map_or("data".into(), |s| s.to_string_lossy().into_owned())
        },
        |m| m.name.to_string(),
    );
    let out = out_dir(s)?;
    write_atomic(&out.join("realdata.csv"), |w| {
        let mut csv = String::from("dataset,n,policy,param,mean_error\n");
        for (&(n, p), r) in cells.iter().zip(&results) {
            let _ = writeln!(
                csv,
                "{dataset},{n},{},{},{}",
                p.variant_name(),
                p.param_string(),
                r.mean_error
            );
        }
        Ok(w.write_all(csv.as_bytes())?)
    })?;

    let (best_cell, best) = cells
        .iter()
        .zip(&results)
        .min_by(|a, b| a.1.mean_error.total_cmp(&b.1.mean_error))
        .expect("non-empty");
    let mut report = format!(
        "{dataset}: {} instances, best n={} {} mean_error={:.4}\n",
        best.steps(),
        best_cell.0,
        best_cell.1,
        best.mean_error
    );
    let baseline = baselines::best(&dataset);
    if let Some((technique, loss)) = baseline {
        let margin = loss - best.mean_error;
        let _ = writeln!(
            report,
            "best baseline {technique} {loss:.4}; margin {margin:+.4} ({})",
            if margin > 0.0 {
                "beats baseline"
            } else {
                "does not beat baseline"
            }
        );
    }
    write_atomic(&out.join("realdata_report.txt"), |w| {
        Ok(w.write_all(report.as_bytes())?)
    })?;
    eprint!("{report}");

    let mut m = record(s, seed, started);
    m.insert("dataset".into(), dataset.into());
    m.insert("n".into(), best_cell.0.into());
    m.insert("policy".into(), best_cell.1.to_string().into());
    m.insert("mean_error".into(), best.mean_error.into());
    m.insert("stderr".into(), 0.0.into());
    m.insert("runs".into(), 1.into());
    if let Some((technique, loss)) = baseline {
        m.insert("baseline".into(), technique.into());
        m.insert("baseline_error".into(), loss.into());
    }
    summary(m);
    Ok(())
}

pub fn discretize(s: &mut Settings) -> Result<()> {
    let started = Instant::now();
    let file = s.path("data.file")?;
    let format = format_for(s, &file)?;
    let stream = DatasetStream::open(
        &file,
        format,
        &parse_options(s)?,
        s.usize("discretizer.capacity")?,
    )?;
    let stem = file
        .file_stem()
        .map_or("data".into(), |s| s.to_string_lossy().into_owned());
    let target = out_dir(s)?.join(format!("{stem}.discretized.csv"));
    let mut rows = 0;
    write_atomic(&target, |w| {
        rows = write_discretized_csv(stream, w)?;
        Ok(())
    })?;
    let mut m = Map::new();
    m.insert("config_hash".into(), s.hash().into());
    m.insert("rows".into(), rows.into());
    m.insert(
        "output".into(),
        target.to_string_lossy().into_owned().into(),
    );
    m.insert("wall_time".into(), started.elapsed().as_secs_f64().into());
    summary(m);
    Ok(())
}
