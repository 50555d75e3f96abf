mod baselines;
mod commands;
mod output;
mod settings;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use settings::Settings;

/// Adaptive AnDE experiments on drifting synthetic and real-world streams.
#[derive(Debug, Parser)]
#[command(name = "driftlab", version, about)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// Master seed; a fresh one is drawn and reported when omitted.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: available processors).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// JSON file of dotted configuration keys.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Paper-scale runs (150 per cell) and the full generator for A2DE.
    #[arg(long, global = true)]
    full_scale: bool,
    /// Override a configuration key, e.g. `--set stream.period=5`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a drifting synthetic stream, its drift log and a manifest.
    Generate(StreamArgs),
    /// Prequential evaluation of one model and forgetting policy.
    Run(RunArgs),
    /// Sweep drift presets × models × policies and report the best cells.
    Sweetpath(GridArgs),
    /// Evaluate on a real dataset and compare against published baselines.
    Realdata(DataArgs),
    /// Discretize a dataset file into the stream CSV format.
    Discretize(DiscretizeArgs),
}

#[derive(Debug, Args)]
struct StreamArgs {
    /// Drift preset: fast, medium or slow.
    #[arg(long)]
    preset: Option<String>,
    /// Per-row drift magnitude; overrides the preset.
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    length: Option<u64>,
    #[arg(long)]
    attributes: Option<u64>,
}

impl StreamArgs {
    fn apply(&self, s: &mut Settings) -> Result<()> {
        s.set_if("stream.preset", self.preset.clone())?;
        s.set_if("stream.delta", self.delta)?;
        s.set_if("stream.length", self.length)?;
        s.set_if("stream.attributes", self.attributes)
    }
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    stream: StreamArgs,
    /// AnDE order: 0 (naive Bayes), 1 or 2.
    #[arg(long)]
    order: Option<u64>,
    /// Forgetting policy: none, w<W> or d<D>.
    #[arg(long)]
    policy: Option<String>,
    #[arg(long)]
    runs: Option<u64>,
    #[arg(long)]
    bucket: Option<u64>,
}

#[derive(Debug, Args)]
struct GridArgs {
    /// Comma-separated presets or drift magnitudes.
    #[arg(long)]
    presets: Option<String>,
    /// Comma-separated AnDE orders.
    #[arg(long)]
    models: Option<String>,
    /// Comma-separated policies.
    #[arg(long)]
    policies: Option<String>,
    #[arg(long)]
    runs: Option<u64>,
    #[arg(long)]
    length: Option<u64>,
    #[arg(long)]
    attributes: Option<u64>,
    #[arg(long)]
    a2de_attributes: Option<u64>,
    #[arg(long)]
    bucket: Option<u64>,
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Dataset name, located under DRIFTLAB_DATA_DIR unless --file is given.
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    file: Option<PathBuf>,
    /// arff or csv (default: from the file extension).
    #[arg(long)]
    format: Option<String>,
    /// Comma-separated AnDE orders.
    #[arg(long)]
    models: Option<String>,
    /// Comma-separated policies.
    #[arg(long)]
    policies: Option<String>,
    /// Skip the check against the published dataset dimensions.
    #[arg(long)]
    no_validate: bool,
    #[arg(long)]
    bucket: Option<u64>,
}

#[derive(Debug, Args)]
struct DiscretizeArgs {
    input: PathBuf,
    #[arg(long)]
    format: Option<String>,
    /// Class column: index or name (default: last).
    #[arg(long)]
    class: Option<String>,
    /// Sample size behind the cut points.
    #[arg(long)]
    capacity: Option<u64>,
}

fn settings(cli: &Cli) -> Result<Settings> {
    let mut s = Settings::default();
    let g = &cli.global;
    if let Some(path) = &g.config {
        s.merge_file(path)?;
    }
    for pair in &g.set {
        s.set_pair(pair)?;
    }
    s.set_if("seed", g.seed)?;
    s.set_if("jobs", g.jobs.map(|j| j as u64))?;
    s.set_if(
        "out",
        g.out.as_ref().map(|p| p.to_string_lossy().into_owned()),
    )?;
    if g.full_scale {
        s.set("full_scale", true.into())?;
    }
    match &cli.command {
        Command::Generate(a) => a.apply(&mut s)?,
        Command::Run(a) => {
            a.stream.apply(&mut s)?;
            s.set_if("model.order", a.order)?;
            if let Some(p) = &a.policy {
                commands::set_policy(&mut s, p.parse()?)?;
            }
            s.set_if("eval.runs", a.runs)?;
            s.set_if("eval.bucket", a.bucket)?;
        }
        Command::Sweetpath(a) => {
            s.set_if("grid.presets", a.presets.clone())?;
            s.set_if("grid.models", a.models.clone())?;
            s.set_if("grid.policies", a.policies.clone())?;
            s.set_if("eval.runs", a.runs)?;
            s.set_if("stream.length", a.length)?;
            s.set_if("stream.attributes", a.attributes)?;
            s.set_if("grid.a2de_attributes", a.a2de_attributes)?;
            s.set_if("eval.bucket", a.bucket)?;
        }
        Command::Realdata(a) => {
            s.set_if("data.dataset", a.dataset.clone())?;
            s.set_if(
                "data.file",
                a.file.as_ref().map(|p| p.to_string_lossy().into_owned()),
            )?;
            s.set_if("data.format", a.format.clone())?;
            s.set_if("grid.models", a.models.clone())?;
            s.set_if("grid.policies", a.policies.clone())?;
            s.set_if("eval.bucket", a.bucket)?;
            if a.no_validate {
                s.set("data.validate", false.into())?;
            }
        }
        Command::Discretize(a) => {
            s.set("data.file", a.input.to_string_lossy().into_owned().into())?;
            s.set_if("data.format", a.format.clone())?;
            s.set_if("data.class", a.class.clone())?;
            s.set_if("discretizer.capacity", a.capacity)?;
        }
    }
    Ok(s)
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let mut s = settings(&cli)?;
    match cli.command {
        Command::Generate(_) => commands::generate(&mut s),
        Command::Run(_) => commands::run(&mut s),
        Command::Sweetpath(_) => commands::sweetpath(&mut s),
        Command::Realdata(_) => commands::realdata(&mut s),
        Command::Discretize(_) => commands::discretize(&mut s),
    }
}
