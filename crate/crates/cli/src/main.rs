mod config;

use std::fs;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{CommandFactory, Parser, Subcommand};

use domtext::data::{load_corpus, save_corpus, synth_corpus};
use domtext::gradcheck::{run_suite, SuiteConfig, SuiteSizes, SUITE_TOLERANCE};
use domtext::harness::{evaluate, render_table, train, InferMode, MetricsReport};
use domtext::persist::{adam_to_bytes, TrainedModel};
use domtext::{Error, Result};

use config::{load_synth_config, RunConfig};

#[derive(Parser)]
#[command(name = "domtext", version, about = "Multi-domain text classification with shared/private CNNs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model from a run config and a labelled corpus.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Training corpus (overrides [paths] data).
        #[arg(long)]
        data: Option<PathBuf>,
        /// Where to write the model file (overrides [paths] model).
        #[arg(long)]
        model: Option<PathBuf>,
        /// Where to write the metrics report (overrides [paths] out).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Also save the optimizer moments to this file.
        #[arg(long)]
        optimizer_state: Option<PathBuf>,
    },
    /// Per-domain accuracy of a trained model on a labelled corpus.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Report file (default: <model>.eval.json).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Cond routing for unseen domains: min-entropy, min-entropy:instance,
        /// oracle or fixed:<domain>.
        #[arg(long, default_value = "min-entropy")]
        infer: String,
    },
    /// Label one text per input line.
    Predict {
        #[arg(long)]
        model: PathBuf,
        /// Input file (default: standard input).
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Finite-difference check of every layer and architecture.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Size overrides such as `L=8,e=2,f=2,C=2,K=3`.
        #[arg(long)]
        sizes: Option<String>,
        #[arg(long, hide = true)]
        corrupt_linear: bool,
    },
    /// Generate a synthetic train/heldout corpus pair.
    Synth {
        #[arg(long)]
        config: PathBuf,
        /// Output directory for train.jsonl and heldout.jsonl.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
}

/// Failure with its process exit status.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) => 2,
            _ => 1,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Error::from(e).into()
    }
}

fn usage_error(message: &str) -> ! {
    Cli::command().error(ErrorKind::MissingRequiredArgument, message).exit()
}

fn write_report(report: &MetricsReport, path: &Path) -> Result<()> {
    fs::write(path, report.to_text()?)?;
    Ok(())
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn cmd_train(
    config: &Path,
    data: Option<PathBuf>,
    model: Option<PathBuf>,
    out: Option<PathBuf>,
    seed: Option<u64>,
    optimizer_state: Option<PathBuf>,
) -> std::result::Result<(), Failure> {
    let mut cfg = RunConfig::load(config)?;
    let data = data
        .or(cfg.paths.data.take())
        .unwrap_or_else(|| usage_error("--data is required (or set [paths] data in the config)"));
    let model_path = model
        .or(cfg.paths.model.take())
        .unwrap_or_else(|| usage_error("--model is required (or set [paths] model in the config)"));
    let report_path = out
        .or(cfg.paths.out.take())
        .unwrap_or_else(|| with_suffix(&model_path, ".metrics.json"));
    if let Some(s) = seed {
        cfg.train.seed = s;
    }

    let corpus = load_corpus(&data)?;
    log::info!(
        "training {} on {} examples ({} labels, {} domains)",
        cfg.train.model_name(),
        corpus.len(),
        corpus.labels.len(),
        corpus.domains.len()
    );
    let outcome = train(&corpus, &cfg.train)?;
    outcome.model.save(&model_path)?;
    if let Some(p) = optimizer_state {
        let names: Vec<String> = outcome.model.network.params().into_iter().map(|(n, _, _)| n).collect();
        fs::write(p, adam_to_bytes(&outcome.optimizer, &names)?)?;
    }

    // Score the dev slice, or the training data when there is none.
    let scored = if outcome.dev_indices.is_empty() {
        corpus
    } else {
        corpus.subset(&outcome.dev_indices)
    };
    let mut report = evaluate(&outcome.model, &scored, &InferMode::default())?;
    report.history = outcome.history.epochs;
    write_report(&report, &report_path)?;
    print!("{}", render_table(&[&report]));
    log::info!("model written to {}", model_path.display());
    log::info!("report written to {}", report_path.display());
    Ok(())
}

fn cmd_evaluate(model: &Path, data: &Path, out: Option<PathBuf>, infer: &str) -> std::result::Result<(), Failure> {
    let mode: InferMode = infer.parse()?;
    let trained = TrainedModel::load(model)?;
    let corpus = load_corpus(data)?;
    let report = evaluate(&trained, &corpus, &mode)?;
    let path = out.unwrap_or_else(|| with_suffix(model, ".eval.json"));
    write_report(&report, &path)?;
    print!("{}", render_table(&[&report]));
    for d in &report.domains {
        if let Some(r) = &d.routing {
            println!("{}: routed via {} ({})", d.domain, r.chosen, r.mode);
        }
    }
    println!("macro-average: {:.2}%", 100.0 * report.macro_accuracy);
    for w in &report.warnings {
        log::warn!("{w}");
    }
    Ok(())
}

fn cmd_predict(model: &Path, input: Option<PathBuf>) -> std::result::Result<(), Failure> {
    let trained = TrainedModel::load(model)?;
    let reader: Box<dyn BufRead> = match input {
        Some(p) => Box::new(io::BufReader::new(fs::File::open(p)?)),
        None => Box::new(io::stdin().lock()),
    };
    let stdout = io::stdout();
    let mut out = stdout.lock();
    for line in reader.lines() {
        let p = trained.predict_text(&line?)?;
        let dist: Vec<String> = trained
            .labels
            .iter()
            .zip(&p.probs)
            .map(|(l, v)| format!("{l}={v:.12}"))
            .collect();
        write!(out, "{}\t{}", p.label, dist.join(" "))?;
        if let Some((domain, h)) = &p.routed {
            write!(out, "\tdomain={domain}\tentropy={h:.6}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

fn cmd_gradcheck(seed: u64, sizes: Option<String>, corrupt_linear: bool) -> std::result::Result<(), Failure> {
    let sizes: SuiteSizes = match sizes {
        Some(s) => s.parse()?,
        None => SuiteSizes::default(),
    };
    let results = run_suite(&SuiteConfig {
        sizes,
        seed,
        corrupt_linear,
    })?;
    println!("{:<24} {:>6} {:>12}  status", "component", "params", "max rel err");
    for r in &results {
        println!("{r}");
    }
    let failed: Vec<&str> = results.iter().filter(|r| !r.passed()).map(|r| r.name.as_str()).collect();
    if failed.is_empty() {
        println!("all components within {SUITE_TOLERANCE:e}");
        Ok(())
    } else {
        Err(Failure {
            code: 1,
            message: format!("gradient check failed for: {}", failed.join(", ")),
        })
    }
}

fn cmd_synth(config: &Path, out: &Path, seed: Option<u64>) -> std::result::Result<(), Failure> {
    let cfg = load_synth_config(config)?;
    let seed = seed.unwrap_or(cfg.seed);
    let (train, heldout) = synth_corpus(&cfg, seed)?;
    fs::create_dir_all(out)?;
    save_corpus(&train, &out.join("train.jsonl"))?;
    save_corpus(&heldout, &out.join("heldout.jsonl"))?;
    log::info!(
        "wrote {} training and {} heldout examples to {}",
        train.len(),
        heldout.len(),
        out.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .format_target(false)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train {
            config,
            data,
            model,
            out,
            seed,
            optimizer_state,
        } => cmd_train(&config, data, model, out, seed, optimizer_state),
        Command::Evaluate { model, data, out, infer } => cmd_evaluate(&model, &data, out, &infer),
        Command::Predict { model, input } => cmd_predict(&model, input),
        Command::Gradcheck {
            seed,
            sizes,
            corrupt_linear,
        } => cmd_gradcheck(seed, sizes, corrupt_linear),
        Command::Synth { config, out, seed } => cmd_synth(&config, out.as_path(), seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
