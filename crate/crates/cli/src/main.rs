//! `bayesmi`: reproducible runs of the theorem checks, the illustrative
//! example, probing learning curves and random embedding generation.
//!
//! Exit codes: 0 success, 1 failed check or runtime error, 2 usage error.

mod manifest;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use bayesmi::agents::illustrative_example;
use bayesmi::data::{
    align, random_type_embeddings, read_conllu, read_embeddings, read_sidecar, synthesize, write_embeddings,
    write_sidecar, AlignmentRow, SyntheticSpec, Task, TokenDataset,
};
use bayesmi::probe::{compare_representations, ArchitectureSpace, CurveConfig, LearningCurve, TrainConfig};
use bayesmi::theorems::{run_checks, CheckOptions, TheoremId};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use manifest::RunManifest;

#[derive(Debug, Parser)]
#[command(name = "bayesmi", version, about = "Bayesian mutual information: checks, examples and probing curves")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CurveTask {
    Pos,
    Deprel,
    Synthetic,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Information quantities of the illustrative agent over c classes.
    Example {
        #[arg(long, value_parser = clap::value_parser!(u64).range(2..))]
        classes: u64,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Run theorem checks; exits 1 if any fails.
    Theorems {
        /// Comma-separated subset of t1,t1x,t2,t3,t4,t5,t6,t7,mdl.
        #[arg(long, value_delimiter = ',', value_parser = parse_theorem_id)]
        only: Vec<TheoremId>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// JSON report path.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Multiplies every tolerance; for exercising the failure path.
        #[arg(long, default_value_t = 1.0, hide = true)]
        tolerance_scale: f64,
    },
    /// Probe learning curves, written as CSV.
    Curve(CurveArgs),
    /// Type-level random embeddings for a treebank (BMIE + JSONL sidecar).
    GenRandom {
        #[arg(long)]
        conllu: PathBuf,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        dim: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output prefix; writes `<prefix>.bmie` and `<prefix>.jsonl`.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, clap::Args)]
struct CurveArgs {
    #[arg(long, value_enum)]
    task: Option<CurveTask>,
    /// Treebank supplying tokens and labels.
    #[arg(long, requires = "embeddings", conflicts_with = "spec")]
    conllu: Option<PathBuf>,
    /// BMIE files, each with a `.jsonl` sidecar beside it.
    #[arg(long, num_args = 1.., requires = "conllu")]
    embeddings: Vec<PathBuf>,
    /// Synthetic dataset spec: a JSON file or inline JSON.
    #[arg(long)]
    spec: Option<String>,
    /// Training examples drawn for a synthetic spec.
    #[arg(long, default_value_t = 1000)]
    size: usize,
    /// Also probe type-level random vectors of this width for the same
    /// synthetic tokens (needs a vocabulary in the spec).
    #[arg(long)]
    random_dim: Option<usize>,
    #[arg(long, default_value_t = 50)]
    points: usize,
    #[arg(long, default_value_t = 5)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fraction of treebank sentences held out for testing.
    #[arg(long, default_value_t = 0.1)]
    test_fraction: f64,
    #[arg(long, default_value_t = 1024)]
    max_hidden: usize,
    #[arg(long, default_value_t = 500)]
    max_epochs: usize,
    #[arg(long, default_value_t = bayesmi::probe::DEFAULT_SIGMA)]
    sigma: f64,
    #[arg(long, env = "BAYESMI_WORKERS")]
    workers: Option<usize>,
    /// CSV path; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_theorem_id(s: &str) -> Result<TheoremId, String> {
    s.parse().map_err(|e: bayesmi::Error| e.to_string())
}

enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        match e.downcast_ref::<bayesmi::Error>() {
            Some(bayesmi::Error::Config(_) | bayesmi::Error::InvalidArgument(_)) => Failure::Usage(e),
            _ => Failure::Runtime(e),
        }
    }
}

impl From<bayesmi::Error> for Failure {
    fn from(e: bayesmi::Error) -> Self {
        Failure::from(anyhow::Error::new(e))
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure::Usage(anyhow!(message.into()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Usage(e)) => {
            eprintln!("usage error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

/// `Ok(false)` means the command ran but a check failed.
fn run(command: Command) -> Result<bool, Failure> {
    match command {
        Command::Example { classes, format } => example(classes as usize, format),
        Command::Theorems {
            only,
            seed,
            out,
            tolerance_scale,
        } => theorems(only, seed, out, tolerance_scale),
        Command::Curve(args) => curve(args),
        Command::GenRandom { conllu, dim, seed, out } => gen_random(&conllu, dim as usize, seed, &out),
    }
}

fn example(classes: usize, format: Format) -> Result<bool, Failure> {
    let record = illustrative_example(classes)?;
    match format {
        Format::Json => println!("{}", serde_json::to_string_pretty(&record).map_err(anyhow::Error::from)?),
        Format::Text => {
            println!("classes           {}", record.classes);
            println!("mi                {:+.5} bits", record.mi);
            println!("belief_mi         {:+.5} bits", record.belief_mi);
            println!("bayesian_mi_at_d0 {:+.5} bits", record.bayesian_mi_at_d0);
        }
    }
    Ok(true)
}

fn theorems(only: Vec<TheoremId>, seed: u64, out: Option<PathBuf>, tolerance_scale: f64) -> Result<bool, Failure> {
    if !(tolerance_scale.is_finite() && tolerance_scale >= 0.0) {
        return Err(usage("tolerance scale must be finite and nonnegative"));
    }
    let ids = if only.is_empty() { TheoremId::ALL.to_vec() } else { only };
    let options = CheckOptions { seed, tolerance_scale };
    let reports = run_checks(&ids, &options)?;
    let all_passed = reports.iter().all(|r| r.passed);
    for r in &reports {
        println!("{}", r.summary_line());
        if let Some(v) = &r.violation {
            eprintln!("{} violation: {}", r.id, serde_json::to_string(v).map_err(anyhow::Error::from)?);
        }
    }
    if let Some(path) = out {
        let body = json!({ "seed": seed, "all_passed": all_passed, "reports": reports });
        let text = serde_json::to_string_pretty(&body).map_err(anyhow::Error::from)?;
        std::fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
        let config = json!({ "ids": ids, "options": options });
        let mut manifest = RunManifest::new("theorems", config, seed);
        manifest.outputs.push(path.display().to_string());
        manifest.write_beside(&path)?;
    }
    Ok(all_passed)
}

fn sidecar_path(bmie: &Path) -> PathBuf {
    bmie.with_extension("jsonl")
}

/// Reads `--spec` as a file when one exists at that path, else as JSON.
fn load_spec(spec: &str) -> Result<(SyntheticSpec, Option<PathBuf>), Failure> {
    let path = Path::new(spec);
    let (text, source) = if path.is_file() {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        (text, Some(path.to_path_buf()))
    } else {
        (spec.to_string(), None)
    };
    let parsed: SyntheticSpec = serde_json::from_str(&text).map_err(|e| usage(format!("invalid synthetic spec: {e}")))?;
    parsed.validate()?;
    Ok((parsed, source))
}

fn curve(args: CurveArgs) -> Result<bool, Failure> {
    let task = match (&args.spec, &args.conllu, args.task) {
        (Some(_), None, None | Some(CurveTask::Synthetic)) => CurveTask::Synthetic,
        (Some(_), None, Some(_)) => return Err(usage("--task pos and --task deprel need --conllu and --embeddings")),
        (None, Some(_), Some(t @ (CurveTask::Pos | CurveTask::Deprel))) => t,
        (None, Some(_), _) => return Err(usage("treebank curves need --task pos or --task deprel")),
        _ => return Err(usage("give exactly one of --spec or --conllu with --embeddings")),
    };
    if args.random_dim.is_some() && task != CurveTask::Synthetic {
        return Err(usage("--random-dim applies to synthetic specs only"));
    }

    let config = CurveConfig {
        n_points: args.points,
        trials: args.trials,
        seed: args.seed,
        space: ArchitectureSpace::default().with_max_hidden(args.max_hidden),
        train: TrainConfig {
            max_epochs: args.max_epochs,
            ..TrainConfig::default()
        },
        sigma: args.sigma,
        workers: args.workers,
        ..CurveConfig::default()
    };
    let mut manifest = RunManifest::new("curve", serde_json::Value::Null, args.seed);

    let datasets: Vec<TokenDataset> = match task {
        CurveTask::Synthetic => {
            let (spec, source) = load_spec(args.spec.as_deref().expect("checked above"))?;
            if let Some(path) = source {
                manifest.add_input(&path)?;
            }
            let data = synthesize(&spec, args.size)?;
            log::info!("synthetic {} data, analytic MI {:.5} bits", spec.kind, data.analytic_mi);
            let mut out = vec![data.dataset.clone()];
            if let Some(dim) = args.random_dim {
                out.push(data.random_counterpart(dim, spec.seed)?);
            }
            out
        }
        CurveTask::Pos | CurveTask::Deprel => {
            let conllu = args.conllu.as_ref().expect("checked above");
            let records = read_conllu(conllu)?;
            manifest.add_input(conllu)?;
            let core_task = if task == CurveTask::Pos { Task::Pos } else { Task::Deprel };
            let mut out = Vec::new();
            for bmie in &args.embeddings {
                let side = sidecar_path(bmie);
                let store = read_embeddings(bmie).with_context(|| format!("reading {}", bmie.display()))?;
                let rows = read_sidecar(&side).with_context(|| format!("reading {}", side.display()))?;
                let alignment = align(&records, &rows, &store).map_err(|e| {
                    Failure::Runtime(anyhow!(
                        "{} and {} do not align with {}: {e}",
                        bmie.display(),
                        side.display(),
                        conllu.display()
                    ))
                })?;
                manifest.add_input(bmie)?;
                manifest.add_input(&side)?;
                let repr = bmie.file_stem().map_or_else(|| bmie.display().to_string(), |s| s.to_string_lossy().into_owned());
                out.push(TokenDataset::from_treebank(
                    repr,
                    core_task,
                    &records,
                    &store,
                    &alignment,
                    args.test_fraction,
                )?);
            }
            out
        }
    };

    let refs: Vec<&TokenDataset> = datasets.iter().collect();
    let curves = compare_representations(&refs, &config)?;
    for ds in &datasets {
        manifest.datasets.insert(ds.repr().to_string(), ds.content_hash());
    }
    manifest.config = json!({
        "task": format!("{task:?}").to_lowercase(),
        "size": args.size,
        "test_fraction": args.test_fraction,
        "random_dim": args.random_dim,
        "spec": args.spec,
        "curve": config,
    });

    match &args.out {
        Some(path) => {
            let file = std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
            write_csv(&curves, file)?;
            manifest.outputs.push(path.display().to_string());
            manifest.write_beside(path)?;
        }
        None => write_csv(&curves, std::io::stdout().lock())?,
    }
    for c in &curves {
        if let Some(last) = c.envelope().last() {
            eprintln!("{}: envelope {:+.4} bits at n={}", c.repr, last.bayesian_mi_bits, last.n);
        }
    }
    Ok(true)
}

fn write_csv<W: Write>(curves: &[LearningCurve], out: W) -> anyhow::Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    for c in curves {
        for row in c.rows() {
            writer.serialize(row)?;
        }
    }
    writer.flush()?;
    Ok(())
}

fn gen_random(conllu: &Path, dim: usize, seed: u64, prefix: &Path) -> Result<bool, Failure> {
    let records = read_conllu(conllu)?;
    let embeddings = random_type_embeddings(records.iter().map(|r| r.form.as_str()), dim, seed)?;
    let rows: Vec<AlignmentRow> = records
        .iter()
        .map(|r| AlignmentRow::from_record(r, embeddings.index[&r.form]))
        .collect();
    let bmie = prefix.with_extension("bmie");
    let side = prefix.with_extension("jsonl");
    write_embeddings(&embeddings.store, &bmie)?;
    write_sidecar(&rows, &side)?;
    eprintln!(
        "wrote {} vectors of width {dim} for {} tokens to {} and {}",
        embeddings.store.count(),
        records.len(),
        bmie.display(),
        side.display()
    );
    let config = json!({ "dim": dim, "conllu": conllu.display().to_string() });
    let mut manifest = RunManifest::new("gen-random", config, seed);
    manifest.add_input(conllu)?;
    manifest.outputs = vec![bmie.display().to_string(), side.display().to_string()];
    manifest.write_beside(&bmie)?;
    Ok(true)
}
