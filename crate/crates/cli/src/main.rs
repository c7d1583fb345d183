use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use etl::harness::{self, ExperimentConfig, Report, SpecName};
use etl::planner::write_steps_csv;
use etl::semantics::{sat, score, ScoreContext};
use etl::{speclang, Embedding, MetricRegistry, Trace};

#[derive(Parser)]
#[command(name = "etl", version, about = "Embedding temporal logic checker and planner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Boolean satisfaction of a spec on a trace; exits 1 when unsatisfied.
    Check(SpecArgs),
    /// Satisfaction score of a spec on a trace.
    Score(SpecArgs),
    /// Run the receding-horizon planner on an experiment config.
    Plan {
        /// Experiment config (JSON).
        config: PathBuf,
        #[command(flatten)]
        out: PlanOutput,
    },
    /// Run one of the built-in tasks.
    Demo {
        /// phi1, phi2, phi3, psi_reach, psi_avoid or psi_reach_avoid.
        spec: SpecName,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        max_steps: Option<usize>,
        /// Evaluate candidates on one thread.
        #[arg(long)]
        sequential: bool,
        /// Print the config instead of running it.
        #[arg(long)]
        print_config: bool,
        #[command(flatten)]
        out: PlanOutput,
    },
    /// Pairwise distance matrix as CSV.
    Heatmap {
        /// JSON array of embeddings.
        #[arg(long, conflicts_with = "synthetic", required_unless_present = "synthetic")]
        input: Option<PathBuf>,
        /// Use this many generated patch-set embeddings instead.
        #[arg(long)]
        synthetic: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "l2")]
        metric: String,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List registered metrics and world models.
    List,
}

#[derive(Args)]
struct SpecArgs {
    /// Spec text, or @path to read it from a file.
    #[arg(long)]
    spec: String,
    #[arg(long)]
    manifest: PathBuf,
    /// Trace file: JSON array or JSON Lines of embeddings.
    #[arg(long)]
    trace: PathBuf,
    #[arg(long, default_value_t = 0)]
    start: usize,
    /// Last index of the window; defaults to the end of the trace.
    #[arg(long)]
    bound: Option<usize>,
}

#[derive(Args)]
struct PlanOutput {
    /// Write the report JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-step CSV of score, cost and action.
    #[arg(long)]
    csv: Option<PathBuf>,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Check(args) => {
            let (sat, _) = evaluate(&args)?;
            Ok(if sat { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::Score(args) => {
            evaluate(&args)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Plan { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            finish_plan(harness::run_experiment(&cfg)?, &out)
        }
        Command::Demo {
            spec,
            samples,
            seed,
            max_steps,
            sequential,
            print_config,
            out,
        } => {
            let mut cfg = harness::demo_config(spec);
            if let Some(n) = samples {
                cfg.plan.samples = n;
            }
            if let Some(s) = seed {
                cfg.plan.seed = s;
            }
            if let Some(m) = max_steps {
                cfg.plan.max_steps = m;
            }
            cfg.plan.parallel = !sequential;
            if print_config {
                println!("{}", serde_json::to_string_pretty(&cfg)?);
                return Ok(ExitCode::SUCCESS);
            }
            finish_plan(harness::run_experiment(&cfg)?, &out)
        }
        Command::Heatmap {
            input,
            synthetic,
            seed,
            metric,
            out,
        } => {
            let embeddings: Vec<Embedding> = match (input, synthetic) {
                (Some(path), _) => Trace::load(&path)?.into_items(),
                (None, Some(n)) => harness::synthetic_embeddings(n, seed),
                (None, None) => bail!("one of --input or --synthetic is required"),
            };
            let metric = MetricRegistry::builtin().get(&metric)?;
            let m = harness::heatmap(&embeddings, &metric)?;
            match &out {
                Some(path) => harness::write_heatmap_csv(&m, create(path)?)?,
                None => harness::write_heatmap_csv(&m, io::stdout().lock())?,
            }
            eprintln!("{}x{} {} heatmap", m.len(), m.len(), metric.name());
            Ok(ExitCode::SUCCESS)
        }
        Command::List => {
            let metrics: Vec<&str> = MetricRegistry::builtin().names().collect();
            let models: Vec<&str> = etl::ModelRegistry::builtin().names().collect();
            println!("{}", json!({ "metrics": metrics, "models": models }));
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn evaluate(args: &SpecArgs) -> anyhow::Result<(bool, f64)> {
    let text = match args.spec.strip_prefix('@') {
        Some(path) => std::fs::read_to_string(path).with_context(|| format!("reading {path}"))?,
        None => args.spec.clone(),
    };
    let manifest = speclang::load_manifest(&args.manifest)?;
    let formula = speclang::parse_formula(&text, &manifest)?;
    let trace = Trace::load(&args.trace)?;
    let bound = match args.bound {
        Some(b) => b,
        None => trace.len().checked_sub(1).context("trace is empty")?,
    };
    let ctx = ScoreContext::new(&trace, args.start, bound)?;
    let s = score(&formula, &ctx)?;
    let ok = sat(&formula, &ctx)?;
    println!(
        "{}",
        json!({ "sat": ok, "score": s, "window": [args.start, bound] })
    );
    eprintln!(
        "{} on [{}, {}], score {s}",
        if ok { "satisfied" } else { "not satisfied" },
        args.start,
        bound
    );
    Ok((ok, s))
}

fn finish_plan(report: Report, out: &PlanOutput) -> anyhow::Result<ExitCode> {
    let text = serde_json::to_string_pretty(&report)?;
    match &out.out {
        Some(path) => writeln!(create(path)?, "{text}")?,
        None => println!("{text}"),
    }
    if let Some(path) = &out.csv {
        write_steps_csv(&report.episode, create(path)?)?;
    }
    eprintln!("{}", report.summary());
    Ok(if report.satisfied() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}
