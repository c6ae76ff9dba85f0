//! `eegtl` command-line driver.
//!
//! Exit codes: 0 success, 1 configuration error, 2 data error, 3 runtime
//! failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{error, info};

use eegtl::config::{Config, Mode};
use eegtl::data::holdout_split;
use eegtl::io;
use eegtl::pipeline::{self, derive_seed};
use eegtl::report;
use eegtl::synth::{generate_features, generate_recordings, SynthMode};
use eegtl::transfer::{learn_projection, train_and_test, TransferProblem};
use eegtl::Error;

#[derive(Parser)]
#[command(
    name = "eegtl",
    version,
    about = "Single-source EEG transfer learning via many-objective projection search"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML configuration; keys not given fall back to the built-in defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the root seed (experiment splits, optimizer, synthetic data).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    repeats: Option<usize>,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    #[arg(long, global = true, value_enum)]
    mode: Option<ModeArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Transfer,
    Baseline,
    SameSubject,
}

#[derive(Clone, Copy, ValueEnum)]
enum SynthKind {
    Features,
    Signal,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic source/target pair.
    Synth {
        /// Overrides `synthetic.mode`.
        #[arg(long, value_enum)]
        kind: Option<SynthKind>,
    },
    /// Preprocess a dataset manifest and write its feature matrix.
    Featurize {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Split a source/target feature pair and learn a projection.
    Train {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
    },
    /// Score a learned projection: train on one feature set, test on another.
    Evaluate {
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        test: PathBuf,
    },
    /// Run the full protocol over all configured pairs and repeats.
    Run,
    /// Learn projections for every d in `experiment.d_sweep`.
    SweepD,
    /// Paired t / Wilcoxon / Holm comparison of per-pair scores.
    Stats {
        /// CSV `pair,<proposed>,<other>...`; defaults to the bundle's
        /// with/without-projection accuracies.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Results bundle to read when no input CSV is given.
        #[arg(long)]
        bundle: Option<PathBuf>,
    },
    /// Summary tables and plot-ready CSVs for a results bundle.
    Report {
        #[arg(long)]
        bundle: Option<PathBuf>,
    },
}

enum Failure {
    Config(String),
    Data(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Data(_) => 2,
            Failure::Runtime(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Data(m) | Failure::Runtime(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match &e {
            Error::Config(_) => Failure::Config(e.to_string()),
            Error::Data(d) => Failure::Data(format!("[{}] {e}", d.code())),
            Error::Io(_) | Error::MissingChannel(_) => Failure::Data(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn load_config(common: &Common) -> CliResult<Config> {
    let mut cfg = match &common.config {
        Some(p) => Config::load(p).map_err(|e| Failure::Config(e.to_string()))?,
        None => Config::default(),
    };
    if let Some(seed) = common.seed {
        cfg.experiment.seed = seed;
        cfg.maoo.seed = seed;
        cfg.synthetic.seed = seed;
    }
    if let Some(r) = common.repeats {
        cfg.experiment.repeats = r;
    }
    if let Some(m) = common.mode {
        cfg.experiment.mode = match m {
            ModeArg::Transfer => Mode::Transfer,
            ModeArg::Baseline => Mode::Baseline,
            ModeArg::SameSubject => Mode::SameSubject,
        };
    }
    cfg.validate().map_err(|e| Failure::Config(e.to_string()))?;
    Ok(cfg)
}

fn synth(cfg: &Config, kind: Option<SynthKind>, out: &Path) -> CliResult<()> {
    let mode = match kind {
        Some(SynthKind::Features) => SynthMode::Features,
        Some(SynthKind::Signal) => SynthMode::Signal,
        None => cfg.synthetic.mode,
    };
    match mode {
        SynthMode::Features => {
            let (s, t) = generate_features(&cfg.synthetic)?;
            io::write_features(&out.join("source_features.csv"), &s)?;
            io::write_features(&out.join("target_features.csv"), &t)?;
        }
        SynthMode::Signal => {
            let (s, t) = generate_recordings(&cfg.synthetic, &pipeline::montage(cfg)?)?;
            let note = format!("synthetic, seed {}", cfg.synthetic.seed);
            for rec in [s, t] {
                let m = io::save_recording(&rec, &out.join(&rec.subject), &note)?;
                println!("{}", m.display());
            }
        }
    }
    info!("synthetic pair written to {}", out.display());
    Ok(())
}

fn train(cfg: &Config, source: &Path, target: &Path, out: &Path) -> CliResult<()> {
    let s = io::read_features(source)?;
    let t = io::read_features(target)?;
    // Same derivation as repeat 0 of the first pair in a full run.
    let root = cfg.experiment.seed;
    let spec = cfg.split_spec(
        derive_seed(root, &[0, 1, 0, 0]),
        derive_seed(root, &[0, 1, 0, 1]),
    );
    let sets = holdout_split(&s, &t, &spec)?;
    let mut maoo = cfg.maoo.clone();
    maoo.seed = derive_seed(cfg.maoo.seed ^ root, &[0, 1, 0, cfg.experiment.d as u64]);
    let problem = TransferProblem::new(
        sets.validation_source.clone(),
        sets.validation_target.clone(),
        cfg.experiment.d,
        cfg.svm,
        maoo,
    )?;
    let learned = learn_projection(&problem)?;
    io::write_weights(&out.join("weights.csv"), &learned.weights)?;
    io::write_trace(&out.join("trace.csv"), &learned.trace)?;
    io::write_front(&out.join("front.csv"), &learned.front)?;
    io::write_features(&out.join("validation_source.csv"), &sets.validation_source)?;
    io::write_features(&out.join("validation_target.csv"), &sets.validation_target)?;
    io::write_features(&out.join("train.csv"), &sets.train)?;
    io::write_features(&out.join("test.csv"), &sets.test)?;
    println!(
        "idist {:.4} after {} generations ({:?}); validation metrics {:?}",
        learned.idist,
        learned.trace.last().map_or(0, |r| r.generation),
        learned.stop_reason,
        learned.metrics.0
    );
    Ok(())
}

fn evaluate(
    cfg: &Config,
    weights: &Path,
    train_p: &Path,
    test_p: &Path,
    out: &Path,
) -> CliResult<()> {
    let w = io::read_weights(weights)?;
    let tr = io::read_features(train_p)?;
    let te = io::read_features(test_p)?;
    let eval = train_and_test(&w, &tr, &te, &cfg.svm)?;
    io::write_scatter(
        &out.join("scatter.csv"),
        &eval.test_space,
        te.labels(),
        &eval.predictions,
    )?;
    let names = eegtl::MetricsVector::NAMES;
    let mut text = names.join(",") + ",test_latency_seconds\n";
    let vals: Vec<String> = eval
        .metrics
        .as_slice()
        .iter()
        .map(|v| v.to_string())
        .collect();
    text += &format!(
        "{},{}\n",
        vals.join(","),
        eval.latency_per_instance.as_secs_f64()
    );
    std::fs::create_dir_all(out).map_err(Error::from)?;
    std::fs::write(out.join("evaluation.csv"), &text).map_err(Error::from)?;
    for (n, v) in names.iter().zip(eval.metrics.as_slice()) {
        println!("{n:>12}: {v:.4}");
    }
    Ok(())
}

fn run(cfg: &Config, out: &Path) -> CliResult<()> {
    let bundle = pipeline::run_experiment(cfg, out)?;
    let info = &bundle.info;
    println!(
        "{} of {} runs completed; bundle at {}",
        info.completed_runs,
        info.planned_runs,
        out.display()
    );
    if !info.failures.is_empty() {
        for f in &info.failures {
            error!("{} -> {} r{}: {}", f.source, f.target, f.repeat, f.cause);
        }
        return Err(Failure::Runtime(format!(
            "{} runs failed",
            info.failures.len()
        )));
    }
    let r = report::emit_report(out)?;
    print!("{}", r.text);
    Ok(())
}

fn sweep(cfg: &Config, out: &Path) -> CliResult<()> {
    let subjects = pipeline::load_subjects(cfg)?;
    let rows = pipeline::run_d_sweep(cfg, &subjects, out)?;
    println!(
        "{:>5} {:>5} {:>10} {:>10} {:>12}",
        "d", "runs", "accuracy", "std", "train (s)"
    );
    for r in &rows {
        println!(
            "{:>5} {:>5} {:>10.4} {:>10.4} {:>12.3}",
            r.d, r.runs, r.mean_accuracy, r.std_accuracy, r.mean_train_seconds
        );
    }
    if rows.iter().any(|r| r.runs == 0) {
        return Err(Failure::Runtime("some d values produced no runs".into()));
    }
    Ok(())
}

fn stats(input: Option<&Path>, bundle: Option<&Path>, out: &Path) -> CliResult<()> {
    let scores = match (input, bundle) {
        (Some(p), _) => report::read_paired_csv(p)?,
        (None, Some(b)) => {
            report::paired_from_rows(&report::read_metrics_csv(&b.join("metrics.csv"))?)?
        }
        (None, None) => {
            report::paired_from_rows(&report::read_metrics_csv(&out.join("metrics.csv"))?)?
        }
    };
    let comps = report::compare(&scores)?;
    std::fs::create_dir_all(out).map_err(Error::from)?;
    report::write_comparisons_csv(&out.join("stats.csv"), &comps)?;
    print!("{}", report::render_comparisons(&scores.methods[0], &comps));
    Ok(())
}

fn dispatch(cli: Cli) -> CliResult<()> {
    let out = cli.common.out_dir.clone();
    match cli.command {
        Command::Stats { input, bundle } => {
            return stats(input.as_deref(), bundle.as_deref(), &out)
        }
        Command::Report { bundle } => {
            let r = report::emit_report(bundle.as_deref().unwrap_or(&out))?;
            print!("{}", r.text);
            for f in &r.files {
                info!("wrote {}", f.display());
            }
            return Ok(());
        }
        _ => {}
    }
    let cfg = load_config(&cli.common)?;
    match cli.command {
        Command::Synth { kind } => synth(&cfg, kind, &out),
        Command::Featurize { manifest } => {
            let rec = io::load_recording(&manifest)?;
            let fm = pipeline::featurize_recording(&rec, &cfg)?;
            let path = out.join(format!("{}_features.csv", rec.subject));
            io::write_features(&path, &fm)?;
            println!(
                "{} x {} features -> {}",
                fm.rows(),
                fm.dim(),
                path.display()
            );
            Ok(())
        }
        Command::Train { source, target } => train(&cfg, &source, &target, &out),
        Command::Evaluate {
            weights,
            train,
            test,
        } => evaluate(&cfg, &weights, &train, &test, &out),
        Command::Run => run(&cfg, &out),
        Command::SweepD => sweep(&cfg, &out),
        Command::Stats { .. } | Command::Report { .. } => unreachable!(),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
