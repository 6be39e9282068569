use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};

use tofu::campaign::{
    self, CampaignConfig, ExecTarget, Mode, MutatorKind, PhasePlan, DEFAULT_BATCH_SIZE,
};
use tofu::distance;
use tofu::fixtures::Fixture;
use tofu::grammar::MutatorConfig;
use tofu::icfg;
use tofu::report;

#[derive(Parser)]
#[command(name = "tofu", version, about = "Target-oriented fuzzer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute per-target distance files from a graph.
    Dist(DistArgs),
    /// Run a fuzzing campaign against a fixture or an external program.
    Fuzz(Box<FuzzArgs>),
    /// Re-run a recorded witness and check that it still covers its target.
    Replay(ReplayArgs),
}

#[derive(Args)]
struct DistArgs {
    /// Interprocedural control-flow graph file.
    #[arg(long)]
    graph: PathBuf,
    /// Target blocks, one id per line.
    #[arg(long)]
    targets: PathBuf,
    /// Output directory for the .dist files.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Guided,
    Unguided,
}

#[derive(Clone, Copy, ValueEnum)]
enum MutatorArg {
    Structured,
    Havoc,
}

#[derive(Clone, Copy, ValueEnum)]
enum PhasesArg {
    Staged,
    CmdlineOnly,
    FileOnly,
}

#[derive(Args)]
struct FuzzArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    targets: PathBuf,
    /// Grammar spec for the file input.
    #[arg(long)]
    grammar: Option<PathBuf>,
    /// Command-line option spec.
    #[arg(long)]
    cmdspec: Option<PathBuf>,
    /// Directory of initial file inputs.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Built-in example program to fuzz in-process.
    #[arg(long, conflicts_with = "program")]
    fixture: Option<String>,
    /// External instrumented program to fuzz.
    #[arg(long, required_unless_present = "fixture")]
    program: Option<PathBuf>,
    /// Extra argument appended after the mutated argv; @@ becomes the
    /// input file path. Repeatable.
    #[arg(long = "program-arg", requires = "program")]
    program_args: Vec<String>,
    /// Wall-clock budget per phase, in seconds.
    #[arg(long)]
    timeout: u64,
    /// Kill one execution after this many milliseconds.
    #[arg(long, default_value_t = 1000)]
    per_exec_timeout: u64,
    /// Mutants per batch.
    #[arg(long, default_value_t = DEFAULT_BATCH_SIZE)]
    batch: usize,
    /// Worker threads for external executions.
    #[arg(long, default_value_t = 1)]
    parallelism: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = ModeArg::Guided)]
    mode: ModeArg,
    #[arg(long, value_enum, default_value_t = MutatorArg::Structured)]
    mutator: MutatorArg,
    #[arg(long, value_enum, default_value_t = PhasesArg::Staged)]
    phases: PhasesArg,
    /// Stop a phase after this many executions.
    #[arg(long)]
    max_execs: Option<u64>,
    /// Output directory for distances, report, and witnesses.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReplayArgs {
    /// Witness file written by a fuzzing campaign.
    #[arg(long)]
    witness: PathBuf,
    /// Graph the campaign ran against, for validating the target.
    #[arg(long)]
    graph: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Dist(args) => run_dist(args),
        Command::Fuzz(args) => run_fuzz(*args),
        Command::Replay(args) => run_replay(args),
    };
    match outcome {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

fn run_dist(args: DistArgs) -> anyhow::Result<ExitCode> {
    let mut icfg = icfg::load_icfg(&args.graph)
        .with_context(|| format!("cannot load graph {}", args.graph.display()))?;
    icfg.resolve_indirect_calls();
    let targets = icfg::load_targets(&args.targets, &icfg)
        .with_context(|| format!("cannot load targets {}", args.targets.display()))?;
    let weighted = icfg::build_weighted_graph(&icfg, &targets)?;
    let maps = distance::compute_distances(&weighted, &targets)?;
    distance::write_distance_files(&maps, &args.out)?;
    println!(
        "wrote {} distance files to {}",
        maps.len(),
        args.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn run_fuzz(args: FuzzArgs) -> anyhow::Result<ExitCode> {
    let exec_target = match (&args.fixture, &args.program) {
        (Some(name), None) => ExecTarget::Fixture(name.parse::<Fixture>().map_err(
            |e: String| anyhow::anyhow!(e),
        )?),
        (None, Some(program)) => ExecTarget::External {
            program: program.clone(),
            args: args.program_args.clone(),
        },
        _ => unreachable!("clap enforces exactly one of --fixture and --program"),
    };
    let config = CampaignConfig {
        graph: args.graph,
        targets: args.targets,
        grammar: args.grammar,
        cmdline_spec: args.cmdspec,
        corpus: args.corpus,
        exec_target,
        phase_timeout: Duration::from_secs(args.timeout),
        per_exec_timeout: Duration::from_millis(args.per_exec_timeout),
        batch_size: args.batch,
        parallelism: args.parallelism,
        seed: args.seed,
        mode: match args.mode {
            ModeArg::Guided => Mode::Guided,
            ModeArg::Unguided => Mode::Unguided,
        },
        mutator: match args.mutator {
            MutatorArg::Structured => MutatorKind::Structured,
            MutatorArg::Havoc => MutatorKind::Havoc,
        },
        phases: match args.phases {
            PhasesArg::Staged => PhasePlan::Staged,
            PhasesArg::CmdlineOnly => PhasePlan::CmdlineOnly,
            PhasesArg::FileOnly => PhasePlan::FileOnly,
        },
        max_execs_per_phase: args.max_execs,
        mutator_config: MutatorConfig::default(),
        out_dir: args.out.clone(),
    };
    let outcome = campaign::run_campaign(&config)?;
    println!(
        "campaign finished: {} executions, report at {}",
        outcome.report.total_executions,
        args.out.join(report::REPORT_FILE).display()
    );
    for (target, result) in &outcome.report.targets {
        let status = match result {
            report::TargetOutcome::Covered { exec_index, .. } => {
                format!("covered at execution {exec_index}")
            }
            report::TargetOutcome::Unreachable { .. } => "statically unreachable".to_string(),
            report::TargetOutcome::Uncovered { .. } => "not covered".to_string(),
        };
        println!("  {target}: {status}");
    }
    if outcome.all_reachable_covered {
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::FAILURE)
    }
}

fn run_replay(args: ReplayArgs) -> anyhow::Result<ExitCode> {
    let icfg = icfg::load_icfg(&args.graph)
        .with_context(|| format!("cannot load graph {}", args.graph.display()))?;
    let outcome = report::replay_witness(&args.witness)
        .with_context(|| format!("cannot replay witness {}", args.witness.display()))?;
    let known = icfg
        .all_blocks()
        .iter()
        .any(|b| b.as_str() == outcome.target);
    if !known {
        anyhow::bail!("witness target {} is not a block in the graph", outcome.target);
    }
    if outcome.covered {
        println!("target {} covered on replay", outcome.target);
        Ok(ExitCode::SUCCESS)
    } else {
        println!("target {} NOT covered on replay", outcome.target);
        Ok(ExitCode::FAILURE)
    }
}
