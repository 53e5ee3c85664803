use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use curriculum_core::corpus::{generate_synthetic, to_conll, SyntheticProfile};
use curriculum_core::runner::{
    build_report, describe_plan, render_report, run_matrix, ExperimentMatrix, ReportFormat, RunOptions, PARALLELISM_ENV,
};
use curriculum_core::verify;

#[derive(Parser)]
#[command(name = "curriculum", version, about = "Progressive data scheduling experiments for sequence labeling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus as CoNLL train/test files plus meta.json.
    GenData {
        #[arg(long, value_parser = parse_profile)]
        profile: SyntheticProfile,
        #[arg(long, default_value_t = 400)]
        num_sequences: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an experiment matrix from a JSON config or a preset.
    Run {
        #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
        config: Option<PathBuf>,
        #[arg(long, value_parser = ["primary", "ablation"])]
        preset: Option<String>,
        #[command(flatten)]
        common: RunArgs,
    },
    /// Run the pacing-ablation preset.
    Ablate {
        #[command(flatten)]
        common: RunArgs,
    },
    /// Build the result tables from a results file.
    Report {
        #[arg(long)]
        results: PathBuf,
        #[arg(long, default_value = "text")]
        format: ReportFormat,
        /// Write to this file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check schedule arithmetic, statistics identities and gradients.
    Verify,
}

#[derive(Args)]
struct RunArgs {
    /// Results file (overrides the config's `output`).
    #[arg(long)]
    output: Option<PathBuf>,
    /// Print the cell plan without training.
    #[arg(long)]
    dry_run: bool,
    /// Comma-separated seeds overriding the config.
    #[arg(long, value_delimiter = ',')]
    seed_list: Option<Vec<u64>>,
    /// Maximum concurrently running cells.
    #[arg(long, env = PARALLELISM_ENV)]
    parallelism: Option<usize>,
    /// Stop after this many new cells.
    #[arg(long)]
    max_cells: Option<usize>,
}

fn parse_profile(s: &str) -> Result<SyntheticProfile, String> {
    s.parse().map_err(|e: curriculum_core::corpus::CorpusError| e.to_string())
}

const DEFAULT_PRIMARY_OUTPUT: &str = "results/primary.jsonl";
const DEFAULT_ABLATION_OUTPUT: &str = "results/ablation.jsonl";

fn gen_data(profile: SyntheticProfile, n: usize, seed: u64, out: PathBuf) -> Result<()> {
    let corpus = generate_synthetic(profile, n, seed)?;
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let write = |name: &str, text: String| -> Result<()> {
        let path = out.join(name);
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    };
    write("train.conll", to_conll(&corpus.schema, &corpus.train))?;
    write("test.conll", to_conll(&corpus.schema, &corpus.test))?;
    let meta = serde_json::json!({
        "profile": profile.as_str(),
        "num_sequences": n,
        "seed": seed,
        "has_boxes": true,
        "labels": corpus.schema.labels,
        "metadata": corpus.metadata(),
    });
    write("meta.json", serde_json::to_string_pretty(&meta)? + "\n")?;
    println!(
        "wrote {} train / {} test sequences ({} labels) to {}",
        corpus.train.len(),
        corpus.test.len(),
        corpus.schema.num_labels(),
        out.display()
    );
    Ok(())
}

fn run(mut matrix: ExperimentMatrix, args: RunArgs) -> Result<bool> {
    if let Some(out) = args.output {
        matrix.output = out;
    }
    if let Some(seeds) = args.seed_list {
        matrix.seeds = seeds;
    }
    matrix.validate()?;
    if args.dry_run {
        print!("{}", describe_plan(&matrix)?);
        return Ok(true);
    }
    let outcome = run_matrix(
        &matrix,
        &RunOptions {
            parallelism: args.parallelism,
            max_cells: args.max_cells,
        },
    )?;
    println!(
        "{} completed, {} already present, {} failed -> {}",
        outcome.completed.len(),
        outcome.skipped.len(),
        outcome.failed.len(),
        matrix.output.display()
    );
    for (key, err) in &outcome.failed {
        eprintln!("failed {key}: {err}");
    }
    Ok(outcome.failed.is_empty())
}

fn report(results: PathBuf, format: ReportFormat, out: Option<PathBuf>) -> Result<()> {
    let bundle = build_report(&results).with_context(|| format!("building report from {}", results.display()))?;
    let text = render_report(&bundle, format);
    match out {
        Some(path) => std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn verify_all() -> Result<bool> {
    let checks = verify::run_all();
    for c in &checks {
        println!("{} {:<18} {}", if c.passed { "ok  " } else { "FAIL" }, c.name, c.detail);
    }
    Ok(checks.iter().all(|c| c.passed))
}

fn dispatch(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::GenData {
            profile,
            num_sequences,
            seed,
            out,
        } => gen_data(profile, num_sequences, seed, out).map(|_| true),
        Command::Run { config, preset, common } => {
            let matrix = match (config, preset.as_deref()) {
                (Some(path), _) => {
                    ExperimentMatrix::load(&path).with_context(|| format!("loading config {}", path.display()))?
                }
                (None, Some("ablation")) => ExperimentMatrix::ablation(DEFAULT_ABLATION_OUTPUT),
                (None, Some("primary")) => ExperimentMatrix::primary(DEFAULT_PRIMARY_OUTPUT),
                (None, other) => bail!("unknown preset {other:?}"),
            };
            run(matrix, common)
        }
        Command::Ablate { common } => run(ExperimentMatrix::ablation(DEFAULT_ABLATION_OUTPUT), common),
        Command::Report { results, format, out } => report(results, format, out).map(|_| true),
        Command::Verify => verify_all(),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
