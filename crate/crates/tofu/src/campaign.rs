//! Fuzzing campaigns: static analysis, then one or two dynamic phases.
//!
//! A campaign starts by loading and validating the graph and targets,
//! resolving indirect calls, building the weighted graph, and computing
//! per-target distances (written next to the report). Targets whose
//! distance from the entry of the main function is infinite are excluded
//! up front as statically unreachable.
//!
//! The dynamic search is staged. Phase one mutates only the command line
//! while the file input stays pinned to a small derivation generated with
//! a fixed seed, so differences in coverage are attributable to the argv.
//! The best-scoring argv ever seen is then frozen, and phase two mutates
//! only the file input. Single-phase plans run just one of the two.
//!
//! Campaigns with the same configuration and seed produce byte-identical
//! reports: all random choices flow from one seeded generator in a fixed
//! order, batches are folded in request order, and the report contains
//! execution ordinals rather than wall-clock times.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cmdline::{self, CmdlineSpec, CmdlineState};
use crate::distance::{self, Distance, DistanceMap};
use crate::fixtures::{run_fixture, Fixture};
use crate::grammar::{self, GrammarSpec, TreeNode};
use crate::harness::{self, ExecutionRequest, ExecutionResult};
use crate::icfg::{self, BlockId, Icfg, TargetSpec};
use crate::report::{
    BestArgv, PhaseReport, Report, ReportConfig, TargetOutcome, Witness, WitnessProgram,
};
use crate::scheduler::{random_score, score_trace, SeedQueue, TargetLedger};

/// Seed and depth for the pinned phase-one file, chosen independently of
/// the campaign seed so every campaign scores argvs against the same file.
const DEFAULT_FILE_SEED: u64 = 0;
const DEFAULT_FILE_DEPTH: usize = 4;

/// Renders the file every command-line-phase execution is pinned to. The
/// derivation seed is fixed so scores of different argvs stay comparable
/// across campaigns with any seed.
pub fn pinned_file(spec: &crate::grammar::GrammarSpec, base: &grammar::GenerateConfig) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(DEFAULT_FILE_SEED);
    let config = grammar::GenerateConfig {
        max_depth: DEFAULT_FILE_DEPTH,
        ..base.clone()
    };
    grammar::render(&grammar::generate(spec, &config, &mut rng)).into_bytes()
}

pub const DEFAULT_BATCH_SIZE: usize = 120;
pub const DEFAULT_PER_EXEC_TIMEOUT: Duration = Duration::from_secs(1);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Distance-guided scores.
    Guided,
    /// Random scores; target bookkeeping still uses real coverage.
    Unguided,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MutatorKind {
    /// Grammar-aware derivation-tree mutation.
    Structured,
    /// One round of blind byte edits per mutant.
    Havoc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhasePlan {
    /// Command-line phase, then file phase.
    Staged,
    CmdlineOnly,
    FileOnly,
}

/// What actually gets executed.
#[derive(Debug, Clone)]
pub enum ExecTarget {
    /// Built-in interpreted program, run in-process.
    Fixture(Fixture),
    /// External instrumented binary. `args` are appended after the
    /// mutated argv; an `@@` token is replaced by the input file path.
    External { program: PathBuf, args: Vec<String> },
}

#[derive(Debug, Clone)]
pub struct CampaignConfig {
    pub graph: PathBuf,
    pub targets: PathBuf,
    pub grammar: Option<PathBuf>,
    pub cmdline_spec: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub exec_target: ExecTarget,
    /// Wall-clock budget per dynamic phase, checked between batches.
    pub phase_timeout: Duration,
    pub per_exec_timeout: Duration,
    pub batch_size: usize,
    pub parallelism: usize,
    pub seed: u64,
    pub mode: Mode,
    pub mutator: MutatorKind,
    pub phases: PhasePlan,
    /// Optional hard cap on executions per phase; batches stop being
    /// scheduled once it is reached. Useful for reproducible experiments.
    pub max_execs_per_phase: Option<u64>,
    pub mutator_config: grammar::MutatorConfig,
    pub out_dir: PathBuf,
}

#[derive(Debug, thiserror::Error)]
pub enum CampaignError {
    #[error(transparent)]
    Icfg(#[from] icfg::IcfgError),
    #[error(transparent)]
    Distance(#[from] distance::DistanceError),
    #[error(transparent)]
    Grammar(#[from] grammar::GrammarError),
    #[error(transparent)]
    Cmdline(#[from] cmdline::CmdlineError),
    #[error(transparent)]
    Harness(#[from] harness::HarnessError),
    #[error("corpus file {path}: {source}")]
    Corpus {
        path: String,
        source: grammar::ParseError,
    },
    #[error("configuration: {0}")]
    Config(String),
    #[error("seed queue ran dry and the phase cannot generate fresh inputs")]
    QueueExhausted,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Everything the dynamic phases need from the static analysis.
pub struct StaticArtifacts {
    pub icfg: Icfg,
    pub targets: TargetSpec,
    pub maps: BTreeMap<BlockId, DistanceMap>,
    /// Targets with no finite-distance path from the entry of main.
    pub unreachable: Vec<BlockId>,
    pub reachable: Vec<BlockId>,
}

/// Loads the graph and targets, builds the weighted graph, computes
/// distances, and writes the distance files under `out_dir/distances`.
pub fn run_static_phase(
    graph: &Path,
    targets: &Path,
    out_dir: Option<&Path>,
) -> Result<StaticArtifacts, CampaignError> {
    let mut icfg = icfg::load_icfg(graph)?;
    icfg.resolve_indirect_calls();
    let targets = icfg::load_targets(targets, &icfg)?;
    let weighted = icfg::build_weighted_graph(&icfg, &targets)?;
    let maps = distance::compute_distances(&weighted, &targets)?;
    if let Some(out_dir) = out_dir {
        distance::write_distance_files(&maps, &out_dir.join("distances"))?;
    }
    let main_entry = icfg.functions[&icfg.main].entry.clone();
    let mut unreachable = Vec::new();
    let mut reachable = Vec::new();
    for t in &targets.targets {
        match maps[t].dist[&main_entry] {
            Distance::Infinite => unreachable.push(t.clone()),
            Distance::Finite(_) => reachable.push(t.clone()),
        }
    }
    Ok(StaticArtifacts {
        icfg,
        targets,
        maps,
        unreachable,
        reachable,
    })
}

/// File half of a candidate input.
#[derive(Debug, Clone)]
enum FileInput {
    Tree(TreeNode),
    Bytes(Vec<u8>),
}

impl FileInput {
    fn render(&self) -> Vec<u8> {
        match self {
            FileInput::Tree(t) => grammar::render(t).into_bytes(),
            FileInput::Bytes(b) => b.clone(),
        }
    }
}

/// One candidate input: the mutable halves of the command line and file.
#[derive(Debug, Clone)]
struct Bundle {
    /// Present only in the command-line phase.
    cmdline: Option<CmdlineState>,
    file: FileInput,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PhaseKind {
    Cmdline,
    File,
}

impl PhaseKind {
    fn name(self) -> &'static str {
        match self {
            PhaseKind::Cmdline => "cmdline",
            PhaseKind::File => "file",
        }
    }
}

struct WitnessDraft {
    target: BlockId,
    argv: Vec<String>,
    input: Vec<u8>,
    phase: PhaseKind,
    exec_index: u64,
}

/// Shared mutable state of the dynamic search.
struct Dynamic<'a> {
    config: &'a CampaignConfig,
    statics: &'a StaticArtifacts,
    grammar: Option<GrammarSpec>,
    cmdspec: Option<CmdlineSpec>,
    rng: ChaCha8Rng,
    ledger: TargetLedger,
    executions: u64,
    witnesses: Vec<WitnessDraft>,
    phase_reports: Vec<PhaseReport>,
}

/// Runs a full campaign and writes its artifacts into `config.out_dir`.
pub fn run_campaign(config: &CampaignConfig) -> Result<CampaignOutcome, CampaignError> {
    validate_config(config)?;
    std::fs::create_dir_all(&config.out_dir)?;
    let statics = run_static_phase(&config.graph, &config.targets, Some(&config.out_dir))?;

    let grammar_spec = match &config.grammar {
        Some(path) => Some(grammar::load_grammar(path)?),
        None => None,
    };
    let cmdspec = match &config.cmdline_spec {
        Some(path) => Some(cmdline::load_cmdline_spec(path)?),
        None => None,
    };

    let phases = effective_phases(config, cmdspec.is_some());
    for phase in &phases {
        if *phase == PhaseKind::File
            && config.mutator == MutatorKind::Structured
            && grammar_spec.is_none()
        {
            return Err(CampaignError::Config(
                "structured file mutation needs a grammar spec".into(),
            ));
        }
    }
    if phases.is_empty() {
        return Err(CampaignError::Config(
            "the phase plan needs a command-line spec to mutate".into(),
        ));
    }

    let mut dynamic = Dynamic {
        config,
        statics: &statics,
        grammar: grammar_spec,
        cmdspec,
        rng: ChaCha8Rng::seed_from_u64(config.seed),
        ledger: TargetLedger::new(statics.reachable.iter().cloned()),
        executions: 0,
        witnesses: Vec::new(),
        phase_reports: Vec::new(),
    };

    let mut frozen_argv: Vec<String> = Vec::new();
    if let Some(spec) = &dynamic.cmdspec {
        // single-phase file plans still honor required options
        frozen_argv = cmdline::render_argv(&cmdline::initial_state(spec)?, spec);
    }
    for phase in phases {
        if dynamic.ledger.done() {
            break;
        }
        let best = dynamic.run_phase(phase, &frozen_argv)?;
        if phase == PhaseKind::Cmdline {
            if let Some(best) = best {
                frozen_argv = best;
            }
        }
    }

    let outcome = dynamic.finish()?;
    Ok(outcome)
}

/// Result of a finished campaign, with everything the report recorded.
#[derive(Debug)]
pub struct CampaignOutcome {
    pub all_reachable_covered: bool,
    pub report: Report,
}

fn validate_config(config: &CampaignConfig) -> Result<(), CampaignError> {
    if config.batch_size == 0 {
        return Err(CampaignError::Config("batch size must be at least 1".into()));
    }
    if config.phase_timeout.is_zero() {
        return Err(CampaignError::Config("phase timeout must be positive".into()));
    }
    if config.per_exec_timeout.is_zero() {
        return Err(CampaignError::Config(
            "per-execution timeout must be positive".into(),
        ));
    }
    match config.phases {
        PhasePlan::CmdlineOnly | PhasePlan::Staged => {
            if config.cmdline_spec.is_none() && config.phases == PhasePlan::CmdlineOnly {
                return Err(CampaignError::Config(
                    "cmdline-only fuzzing needs a command-line spec".into(),
                ));
            }
        }
        PhasePlan::FileOnly => {}
    }
    Ok(())
}

/// The phases the plan actually yields given what specs are present.
fn effective_phases(config: &CampaignConfig, have_cmdspec: bool) -> Vec<PhaseKind> {
    match config.phases {
        PhasePlan::CmdlineOnly => vec![PhaseKind::Cmdline],
        PhasePlan::FileOnly => vec![PhaseKind::File],
        PhasePlan::Staged => {
            if have_cmdspec {
                vec![PhaseKind::Cmdline, PhaseKind::File]
            } else {
                log::warn!("staged plan without a command-line spec, running the file phase only");
                vec![PhaseKind::File]
            }
        }
    }
}

impl Dynamic<'_> {
    /// Runs one dynamic phase. Returns the frozen argv for a command-line
    /// phase that found a best argv.
    fn run_phase(
        &mut self,
        kind: PhaseKind,
        frozen_argv: &[String],
    ) -> Result<Option<Vec<String>>, CampaignError> {
        let started = Instant::now();
        let phase_start_execs = self.executions;
        let mut queue: SeedQueue<Bundle> = SeedQueue::new();
        let mut best: Option<BestArgv> = None;
        let mut rounds = 0u64;

        let initial = self.initial_bundles(kind, frozen_argv)?;
        self.run_batch(kind, frozen_argv, initial, &mut queue, &mut best)?;

        loop {
            if self.ledger.done() {
                break;
            }
            if started.elapsed() >= self.config.phase_timeout {
                break;
            }
            let phase_execs = self.executions - phase_start_execs;
            if let Some(cap) = self.config.max_execs_per_phase {
                if phase_execs >= cap {
                    break;
                }
            }
            let batch = match queue.select_next() {
                Some(seed) => {
                    let mut batch = Vec::with_capacity(self.config.batch_size);
                    for _ in 0..self.config.batch_size {
                        batch.push(self.mutate_bundle(kind, &seed.input));
                    }
                    batch
                }
                None => {
                    // the queue rejected everything so far; start over from
                    // fresh inputs when the phase can make them
                    match self.fresh_bundle(kind, frozen_argv)? {
                        Some(b) => vec![b],
                        None => return Err(CampaignError::QueueExhausted),
                    }
                }
            };
            rounds += 1;
            self.run_batch(kind, frozen_argv, batch, &mut queue, &mut best)?;
        }

        self.phase_reports.push(PhaseReport {
            phase: kind.name().to_string(),
            executions: self.executions - phase_start_execs,
            rounds,
            queue: queue.stats(),
            best_argv: best.clone(),
        });
        Ok(best.map(|b| b.argv))
    }

    /// Argv actually passed to the program for a bundle.
    fn bundle_argv(&self, bundle: &Bundle, frozen_argv: &[String]) -> Vec<String> {
        match (&bundle.cmdline, &self.cmdspec) {
            (Some(state), Some(spec)) => cmdline::render_argv(state, spec),
            _ => frozen_argv.to_vec(),
        }
    }

    /// Executes a batch and folds the results into the ledger, the queue,
    /// and the running best argv, in request order.
    fn run_batch(
        &mut self,
        kind: PhaseKind,
        frozen_argv: &[String],
        bundles: Vec<Bundle>,
        queue: &mut SeedQueue<Bundle>,
        best: &mut Option<BestArgv>,
    ) -> Result<(), CampaignError> {
        let rendered: Vec<(Vec<String>, Vec<u8>)> = bundles
            .iter()
            .map(|b| (self.bundle_argv(b, frozen_argv), b.file.render()))
            .collect();
        let results = self.execute_all(&rendered)?;

        for ((bundle, (argv, input)), result) in
            bundles.into_iter().zip(rendered).zip(results)
        {
            self.executions += 1;
            let newly = self.ledger.update(&result.coverage);
            for target in newly {
                self.witnesses.push(WitnessDraft {
                    target,
                    argv: argv.clone(),
                    input: input.clone(),
                    phase: kind,
                    exec_index: self.executions,
                });
            }
            let score = match self.config.mode {
                Mode::Guided => score_trace(&result.coverage, &self.statics.maps, &self.ledger),
                Mode::Unguided => random_score(&mut self.rng),
            };
            if kind == PhaseKind::Cmdline && score.is_finite() {
                let better = match best {
                    None => true,
                    Some(b) => score < b.score,
                };
                if better {
                    *best = Some(BestArgv {
                        argv: argv.clone(),
                        score,
                        exec_index: self.executions,
                    });
                }
            }
            queue.try_insert(bundle, result.coverage, score, &mut self.rng);
            if self.ledger.done() {
                break;
            }
        }
        Ok(())
    }

    /// Runs the rendered inputs, in-process for fixtures and through the
    /// harness for external programs.
    fn execute_all(
        &self,
        rendered: &[(Vec<String>, Vec<u8>)],
    ) -> Result<Vec<ExecutionResult>, CampaignError> {
        match &self.config.exec_target {
            ExecTarget::Fixture(f) => Ok(rendered
                .iter()
                .map(|(argv, input)| run_fixture(*f, argv, input))
                .collect()),
            ExecTarget::External { program, args } => {
                let requests: Vec<ExecutionRequest> = rendered
                    .iter()
                    .map(|(argv, input)| {
                        let mut full = argv.clone();
                        full.extend(args.iter().cloned());
                        ExecutionRequest {
                            program: program.clone(),
                            argv: full,
                            input: input.clone(),
                            timeout: self.config.per_exec_timeout,
                        }
                    })
                    .collect();
                harness::execute_batch(&requests, self.config.parallelism)
                    .into_iter()
                    .map(|r| r.map_err(CampaignError::from))
                    .collect()
            }
        }
    }

    /// Initial inputs of a phase: the spec-derived command line with the
    /// pinned file, or the corpus (falling back to one fresh input).
    fn initial_bundles(
        &mut self,
        kind: PhaseKind,
        frozen_argv: &[String],
    ) -> Result<Vec<Bundle>, CampaignError> {
        match kind {
            PhaseKind::Cmdline => {
                let spec = self
                    .cmdspec
                    .as_ref()
                    .expect("cmdline phase requires a spec");
                let state = cmdline::initial_state(spec)?;
                Ok(vec![Bundle {
                    cmdline: Some(state),
                    file: FileInput::Bytes(self.default_file()),
                }])
            }
            PhaseKind::File => {
                let _ = frozen_argv;
                if let Some(corpus) = &self.config.corpus {
                    let bundles = self.load_corpus(corpus)?;
                    if !bundles.is_empty() {
                        return Ok(bundles);
                    }
                }
                Ok(vec![self
                    .fresh_bundle(kind, frozen_argv)?
                    .expect("file phase can always make a fresh input")])
            }
        }
    }

    /// The pinned file input of the command-line phase: a shallow
    /// derivation generated with a fixed seed, or empty without a grammar.
    fn default_file(&self) -> Vec<u8> {
        match &self.grammar {
            Some(spec) => pinned_file(spec, &self.config.mutator_config.generate),
            None => Vec::new(),
        }
    }

    /// Brand-new input drawn from the campaign generator, or `None` when
    /// the phase has no way to make one.
    fn fresh_bundle(
        &mut self,
        kind: PhaseKind,
        _frozen_argv: &[String],
    ) -> Result<Option<Bundle>, CampaignError> {
        match kind {
            PhaseKind::Cmdline => {
                let Some(spec) = self.cmdspec.as_ref() else {
                    return Ok(None);
                };
                let state = cmdline::initial_state(spec)?;
                let state = cmdline::mutate_cmdline(&state, spec, &mut self.rng);
                Ok(Some(Bundle {
                    cmdline: Some(state),
                    file: FileInput::Bytes(self.default_file()),
                }))
            }
            PhaseKind::File => match self.config.mutator {
                MutatorKind::Structured => {
                    let spec = self
                        .grammar
                        .as_ref()
                        .expect("structured phase requires a grammar");
                    let tree = grammar::generate(
                        spec,
                        &self.config.mutator_config.generate,
                        &mut self.rng,
                    );
                    Ok(Some(Bundle {
                        cmdline: None,
                        file: FileInput::Tree(tree),
                    }))
                }
                MutatorKind::Havoc => Ok(Some(Bundle {
                    cmdline: None,
                    file: FileInput::Bytes(grammar::havoc_mutate(&[], &mut self.rng)),
                })),
            },
        }
    }

    /// Corpus files as initial seeds, sorted by file name. Structured
    /// campaigns parse them under the grammar and reject files that do not
    /// parse; havoc campaigns take the bytes as they are.
    fn load_corpus(&mut self, corpus: &Path) -> Result<Vec<Bundle>, CampaignError> {
        let mut paths: Vec<PathBuf> = std::fs::read_dir(corpus)?
            .collect::<Result<Vec<_>, _>>()?
            .into_iter()
            .map(|e| e.path())
            .filter(|p| p.is_file())
            .collect();
        paths.sort();
        let mut bundles = Vec::new();
        for path in paths {
            let bytes = std::fs::read(&path)?;
            let file = match self.config.mutator {
                MutatorKind::Havoc => FileInput::Bytes(bytes),
                MutatorKind::Structured => {
                    let spec = self
                        .grammar
                        .as_ref()
                        .expect("structured phase requires a grammar");
                    let text = String::from_utf8_lossy(&bytes);
                    let tree = grammar::parse(&text, spec, grammar::DEFAULT_PARSE_STEPS)
                        .map_err(|source| CampaignError::Corpus {
                            path: path.display().to_string(),
                            source,
                        })?;
                    FileInput::Tree(tree)
                }
            };
            bundles.push(Bundle {
                cmdline: None,
                file,
            });
        }
        Ok(bundles)
    }

    /// One mutant of a seed, according to the phase and mutator kind.
    fn mutate_bundle(&mut self, kind: PhaseKind, seed: &Bundle) -> Bundle {
        match kind {
            PhaseKind::Cmdline => {
                let spec = self
                    .cmdspec
                    .as_ref()
                    .expect("cmdline phase requires a spec");
                let state = seed
                    .cmdline
                    .as_ref()
                    .expect("cmdline phase bundles carry a command line");
                Bundle {
                    cmdline: Some(cmdline::mutate_cmdline(state, spec, &mut self.rng)),
                    file: seed.file.clone(),
                }
            }
            PhaseKind::File => {
                let file = match (&seed.file, self.config.mutator) {
                    (FileInput::Tree(t), MutatorKind::Structured) => {
                        let spec = self
                            .grammar
                            .as_ref()
                            .expect("structured phase requires a grammar");
                        FileInput::Tree(grammar::mutate(
                            t,
                            spec,
                            &self.config.mutator_config,
                            &mut self.rng,
                        ))
                    }
                    (FileInput::Bytes(b), _) => {
                        FileInput::Bytes(grammar::havoc_mutate(b, &mut self.rng))
                    }
                    (FileInput::Tree(t), MutatorKind::Havoc) => {
                        // havoc on a parsed corpus seed works on its bytes
                        FileInput::Bytes(grammar::havoc_mutate(
                            grammar::render(t).as_bytes(),
                            &mut self.rng,
                        ))
                    }
                };
                Bundle {
                    cmdline: None,
                    file,
                }
            }
        }
    }

    /// Writes witnesses and the report; consumes the collected state.
    fn finish(self) -> Result<CampaignOutcome, CampaignError> {
        let witness_dir = self.config.out_dir.join("witnesses");
        std::fs::create_dir_all(&witness_dir)?;
        let program = match &self.config.exec_target {
            ExecTarget::Fixture(f) => WitnessProgram::Fixture {
                name: f.name().to_string(),
            },
            ExecTarget::External { program, args } => WitnessProgram::External {
                program: program.display().to_string(),
                args: args.clone(),
            },
        };

        let mut targets: BTreeMap<String, TargetOutcome> = BTreeMap::new();
        for t in &self.statics.unreachable {
            targets.insert(
                t.to_string(),
                TargetOutcome::Unreachable {
                    reason: "no path from the entry of main in the weighted graph".into(),
                },
            );
        }
        for t in self.ledger.uncovered() {
            targets.insert(
                t.to_string(),
                TargetOutcome::Uncovered {
                    reason: "search budget exhausted".into(),
                },
            );
        }
        for draft in &self.witnesses {
            let file_name = format!("{}.json", draft.target.as_str().replace(':', "__"));
            let witness = Witness {
                target: draft.target.to_string(),
                program: program.clone(),
                argv: draft.argv.clone(),
                input_base64: crate::report::encode_input(&draft.input),
                phase: draft.phase.name().to_string(),
                exec_index: draft.exec_index,
            };
            let path = witness_dir.join(&file_name);
            std::fs::write(&path, witness.to_json()?)?;
            targets.insert(
                draft.target.to_string(),
                TargetOutcome::Covered {
                    phase: draft.phase.name().to_string(),
                    exec_index: draft.exec_index,
                    witness: format!("witnesses/{file_name}"),
                },
            );
        }

        let all_reachable_covered = self.ledger.done();
        let report = Report {
            config: ReportConfig::from_campaign(self.config),
            phases: self.phase_reports,
            targets,
            total_executions: self.executions,
            all_reachable_covered,
        };
        report.write(&self.config.out_dir)?;
        Ok(CampaignOutcome {
            all_reachable_covered,
            report,
        })
    }
}
