//! `actbn`: analyze model files for activation bottlenecks, reproduce the
//! straight-line experiment, rewrite models and generate inputs.
//!
//! Exit codes: 0 clean, 1 usage or input error, 2 bottleneck certified against
//! an unbounded surjective target.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use actbn::analysis::{analyze, DomainDescriptor, EpsilonStar};
use actbn::dataset::{generate_line, generate_unbounded, SequenceKind};
use actbn::experiment::{reproduce, ReproduceOptions};
use actbn::mitigation::{mitigate, Strategy};
use actbn::modelfile;
use actbn::optim::TrainConfig;
use actbn::report::{render, render_machine, verdict_diff, ReportFormat};
use actbn::{build_reference_model, NetworkGraph, Variant};
use clap::{Args, Parser, Subcommand, ValueEnum};

const SEED_ENV: &str = "ACTBN_SEED";

#[derive(Parser)]
#[command(name = "actbn", version, about = "Activation-bottleneck analysis and mitigation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Analyze a model and print the per-layer report
    Analyze(AnalyzeArgs),
    /// Train the reference models on the line and write all artifacts
    Reproduce(ReproduceArgs),
    /// Rewrite a model to remove its bottleneck
    Mitigate(MitigateArgs),
    /// Write a dataset or a freshly initialised reference model
    #[command(subcommand)]
    Generate(GenerateCommand),
}

#[derive(Clone, Copy, ValueEnum)]
enum Target {
    Bounded,
    UnboundedSurjective,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Machine,
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Text => ReportFormat::Text,
            Format::Machine => ReportFormat::Machine,
        }
    }
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Model file (TOML)
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_enum, default_value = "unbounded-surjective")]
    target: Target,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
    /// Also write the machine-readable report to this file
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct ReproduceArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = TrainConfig::default().epochs)]
    epochs: usize,
    #[arg(long, default_value_t = TrainConfig::default().learning_rate)]
    lr: f64,
    /// Comma-separated subset of the six variants
    #[arg(long, value_delimiter = ',', value_parser = parse_variant)]
    variants: Vec<Variant>,
    /// Train one variant at a time
    #[arg(long)]
    sequential: bool,
}

#[derive(Args)]
struct MitigateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_parser = parse_strategy)]
    strategy: Strategy,
    /// Where to write the rewritten model
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
}

#[derive(Subcommand)]
enum GenerateCommand {
    /// Write a sequence as `t,x` CSV
    Dataset(DatasetArgs),
    /// Write a reference model with seeded initial weights
    Model(ModelArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum DatasetKind {
    Line,
    Trend,
    RandomWalk,
}

#[derive(Args)]
struct DatasetArgs {
    #[arg(long, value_enum, default_value = "line")]
    kind: DatasetKind,
    /// Sequence length (ignored for the line)
    #[arg(long, default_value_t = 41)]
    n: usize,
    #[arg(long, default_value_t = 1.0)]
    slope: f64,
    #[arg(long, default_value_t = 0.0)]
    noise_sd: f64,
    #[arg(long, default_value_t = 1.0)]
    step: f64,
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long, value_parser = parse_variant)]
    variant: Variant,
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse().map_err(|e: actbn::error::GraphError| e.to_string())
}

fn parse_strategy(s: &str) -> Result<Strategy, String> {
    s.parse()
}

fn write_file(path: &Path, contents: &str) -> Result<(), String> {
    fs::write(path, contents).map_err(|e| format!("{}: {e}", path.display()))
}

fn load(path: &Path) -> Result<NetworkGraph, String> {
    modelfile::load(path).map_err(|e| e.to_string())
}

fn cmd_analyze(a: AnalyzeArgs) -> Result<ExitCode, String> {
    let graph = load(&a.model)?;
    let (bounded, surjective) = match a.target {
        Target::Bounded => (true, false),
        Target::UnboundedSurjective => (false, true),
    };
    let target = DomainDescriptor {
        dim: graph.output_dim,
        bounded,
        sample_box: None,
    };
    let report = analyze(&graph, &target, surjective);
    print!("{}", render(&graph, &report, a.format.into()));
    if let Some(p) = &a.report {
        write_file(p, &render_machine(&graph, &report))?;
    }
    Ok(if report.epsilon_star == EpsilonStar::Infinite {
        ExitCode::from(2)
    } else {
        ExitCode::SUCCESS
    })
}

fn cmd_reproduce(a: ReproduceArgs) -> Result<ExitCode, String> {
    let options = ReproduceOptions {
        config: TrainConfig {
            epochs: a.epochs,
            learning_rate: a.lr,
            seed: a.seed,
            ..TrainConfig::default()
        },
        variants: if a.variants.is_empty() {
            Variant::ALL.to_vec()
        } else {
            a.variants
        },
        parallel: !a.sequential,
    };
    options.config.validate().map_err(|e| e.to_string())?;
    let summary = reproduce(&a.out, &options).map_err(|e| e.to_string())?;
    for r in &summary.runs {
        println!(
            "{:<15} max |error| {:>9.4}  |error| at 20 {:>9.4}  image_bounded {}",
            r.name,
            r.max_abs_error(),
            r.error_at_target(20.0).unwrap_or(f64::NAN),
            r.report.network_image_bounded
        );
    }
    println!("wrote {} files to {}", summary.files.len(), a.out.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_mitigate(a: MitigateArgs) -> Result<ExitCode, String> {
    let graph = load(&a.model)?;
    let rw = mitigate(&graph, a.strategy).map_err(|e| e.to_string())?;
    modelfile::save(&rw.graph, &a.out).map_err(|e| format!("{}: {e}", a.out.display()))?;
    print!("{}", verdict_diff(&rw.before, &rw.after));
    if matches!(a.format, Format::Machine) {
        print!("{}", render_machine(&rw.graph, &rw.after));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_generate(g: GenerateCommand) -> Result<ExitCode, String> {
    match g {
        GenerateCommand::Dataset(a) => {
            let d = match a.kind {
                DatasetKind::Line => generate_line(),
                DatasetKind::Trend => generate_unbounded(
                    SequenceKind::Trend {
                        slope: a.slope,
                        noise_sd: a.noise_sd,
                    },
                    a.n,
                    a.seed,
                )
                .map_err(|e| e.to_string())?,
                DatasetKind::RandomWalk => generate_unbounded(SequenceKind::RandomWalk { step: a.step }, a.n, a.seed)
                    .map_err(|e| e.to_string())?,
            };
            write_file(&a.out, &d.to_csv())?;
        }
        GenerateCommand::Model(a) => {
            let g = build_reference_model(a.variant, a.seed);
            modelfile::save(&g, &a.out).map_err(|e| format!("{}: {e}", a.out.display()))?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Analyze(a) => cmd_analyze(a),
        Command::Reproduce(a) => cmd_reproduce(a),
        Command::Mitigate(a) => cmd_mitigate(a),
        Command::Generate(g) => cmd_generate(g),
    };
    match result {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
