//! `fame`: train toy models, compute attribution maps and run evaluation sweeps.
//!
//! Exit codes: 0 success, 1 configuration error, 2 runtime error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use fame_core::io::{
    read_archive, run_experiment, run_sweep, write_identity_archive, write_shapes_archive, Archive, ExperimentConfig,
    IoError, RunReport, SweepPreset,
};
use fame_core::netcore::{identity_embedder, save_model, shapes_classifier};
use fame_core::seeds::stage_seed;
use fame_core::training::{
    cosine_separation, gen_identities, gen_shapes, train_classifier, train_embedder, TrainConfig, TrainError,
};

#[derive(Parser)]
#[command(name = "fame", version, about = "Feature-map adversarial attribution experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the shapes classifier or the identity embedder and save it.
    Train(TrainArgs),
    /// Compute and write attribution maps without evaluation.
    Attribute(RunArgs),
    /// Compute maps and the metrics enabled in the config.
    Evaluate(RunArgs),
    /// Run a parameter sweep preset.
    Sweep {
        #[arg(long, value_enum)]
        preset: PresetArg,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Print the aggregate metrics of finished runs.
    Report {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Classifier,
    Embedder,
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    Iterations,
    Eta,
    Blur,
}

impl From<PresetArg> for SweepPreset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::Iterations => SweepPreset::Iterations,
            PresetArg::Eta => SweepPreset::Eta,
            PresetArg::Blur => SweepPreset::Blur,
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, value_enum)]
    kind: Kind,
    /// Output model file.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Training images (classifier) or identities (embedder).
    #[arg(long)]
    n: Option<usize>,
    /// Renders per identity (embedder).
    #[arg(long, default_value_t = 8)]
    per_id: usize,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Embedding dimension (embedder).
    #[arg(long, default_value_t = 32)]
    dim: usize,
    /// Train on an existing dataset archive instead of generating one.
    #[arg(long, conflicts_with = "write_archive")]
    archive: Option<PathBuf>,
    /// Also write the generated training set as an archive.
    #[arg(long)]
    write_archive: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// key=value config file.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override one config key (repeatable); applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    task: Option<String>,
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    model: Option<String>,
    /// Dataset archive directory, or `generated`.
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    output_dir: Option<String>,
}

enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        if e.is_config_error() {
            Failure::Config(e.into())
        } else {
            Failure::Runtime(e.into())
        }
    }
}

impl From<TrainError> for Failure {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(_) => Failure::Config(e.into()),
            _ => Failure::Runtime(e.into()),
        }
    }
}

impl RunArgs {
    /// Defaults, then the file, then `--set`, then the dedicated flags.
    fn load(&self) -> Result<ExperimentConfig, Failure> {
        let mut cfg = match &self.config {
            Some(path) if !path.is_file() => {
                return Err(Failure::Config(anyhow!("config file {} not found", path.display())))
            }
            Some(path) => ExperimentConfig::from_file(path)?,
            None => ExperimentConfig::default(),
        };
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Failure::Config(anyhow!("--set expects KEY=VALUE, got `{kv}`")))?;
            cfg.set(k.trim(), v.trim())?;
        }
        let flags = [
            ("task", &self.task),
            ("method", &self.method),
            ("model", &self.model),
            ("dataset", &self.dataset),
            ("seed", &self.seed),
            ("output_dir", &self.output_dir),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                cfg.set(k, v)?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn summarize(report: &RunReport) {
    println!("run written to {}", report.out_dir.display());
    for r in report.aggregate.iter().filter(|r| r.p.is_empty() || r.protocol.starts_with("road")) {
        let p = if r.p.is_empty() { String::new() } else { format!("@{}", r.p) };
        println!("  {}{p}: {:.4}", r.protocol, r.value);
    }
}

fn train(args: &TrainArgs) -> Result<(), Failure> {
    let mut cfg = match args.kind {
        Kind::Classifier => TrainConfig::classifier_default(),
        Kind::Embedder => TrainConfig::embedder_default(),
    };
    cfg.seed = stage_seed(args.seed, "train");
    if let Some(e) = args.epochs {
        cfg.epochs = e;
    }
    if let Some(lr) = args.lr {
        cfg.learning_rate = lr;
    }
    cfg.validate()?;
    let archive = match &args.archive {
        Some(dir) if !dir.is_dir() => {
            return Err(Failure::Config(anyhow!("archive {} is not a directory", dir.display())))
        }
        Some(dir) => Some(read_archive(dir)?),
        None => None,
    };
    let data_seed = stage_seed(args.seed, "dataset/train");
    let init_seed = stage_seed(args.seed, "init");
    let model = match args.kind {
        Kind::Classifier => {
            let ds = match archive {
                Some(Archive::Shapes(ds)) => ds,
                Some(Archive::Identities(_)) => {
                    return Err(Failure::Config(anyhow!("classifier training needs a shapes archive")))
                }
                None => gen_shapes(args.n.unwrap_or(4000), data_seed),
            };
            if let Some(dir) = &args.write_archive {
                write_shapes_archive(dir, &ds)?;
            }
            let (model, hist) = train_classifier(&shapes_classifier(init_seed), &ds, &cfg)?;
            println!("trained classifier: {} images, accuracy {:.4}", ds.len(), hist.final_accuracy);
            model
        }
        Kind::Embedder => {
            let ds = match archive {
                Some(Archive::Identities(ds)) => ds,
                Some(Archive::Shapes(_)) => {
                    return Err(Failure::Config(anyhow!("embedder training needs an identities archive")))
                }
                None => gen_identities(args.n.unwrap_or(40), args.per_id, data_seed),
            };
            if let Some(dir) = &args.write_archive {
                write_identity_archive(dir, &ds)?;
            }
            let (model, hist) = train_embedder(&identity_embedder(init_seed, args.dim), &ds, &cfg)?;
            let sep = cosine_separation(&model, &ds)?;
            println!(
                "trained embedder: {} identities, accuracy {:.4}, separation {sep:.4}",
                ds.n_ids(),
                hist.final_accuracy
            );
            model
        }
    };
    save_model(&model, &args.out)
        .with_context(|| format!("saving {}", args.out.display()))
        .map_err(Failure::Runtime)?;
    println!("saved {}", args.out.display());
    Ok(())
}

fn report(dirs: &[PathBuf]) -> Result<(), Failure> {
    for dir in dirs {
        let tables: Vec<PathBuf> = ["metrics.csv", "sweep.csv"]
            .iter()
            .map(|f| dir.join(f))
            .filter(|p| p.is_file())
            .collect();
        if tables.is_empty() {
            return Err(Failure::Runtime(anyhow!(
                "{} holds neither metrics.csv nor sweep.csv",
                dir.display()
            )));
        }
        for path in tables {
            let text = std::fs::read_to_string(&path)
                .with_context(|| format!("reading {}", path.display()))
                .map_err(Failure::Runtime)?;
            println!("== {}", path.display());
            print_table(&text, &path)?;
        }
    }
    Ok(())
}

fn print_table(text: &str, path: &Path) -> Result<(), Failure> {
    let rows: Vec<Vec<&str>> = text.lines().map(|l| l.split(',').collect()).collect();
    let cols = rows.first().map_or(0, Vec::len);
    if cols == 0 || rows.iter().any(|r| r.len() != cols) {
        return Err(Failure::Runtime(anyhow!("{} is not a well-formed metric table", path.display())));
    }
    let widths: Vec<usize> = (0..cols).map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0)).collect();
    for r in &rows {
        let line: Vec<String> = r.iter().zip(&widths).map(|(v, w)| format!("{v:<w$}")).collect();
        println!("{}", line.join("  ").trim_end());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Train(args) => train(&args),
        Command::Attribute(args) => {
            let mut cfg = args.load()?;
            cfg.eval_iou = false;
            cfg.eval_road = false;
            cfg.eval_curves = false;
            cfg.write_maps = true;
            summarize(&run_experiment(&cfg)?);
            Ok(())
        }
        Command::Evaluate(args) => {
            summarize(&run_experiment(&args.load()?)?);
            Ok(())
        }
        Command::Sweep { preset, run } => {
            let cfg = run.load()?;
            for r in run_sweep(&cfg, preset.into())? {
                summarize(&r);
            }
            Ok(())
        }
        Command::Report { dirs } => report(&dirs),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
