//! Campaign reports and replayable witnesses.
//!
//! `report.json` is the machine-readable record of a campaign. It contains
//! only deterministic facts (execution ordinals, queue statistics, target
//! outcomes), never wall-clock readings or absolute paths, so two runs of
//! the same campaign produce byte-identical files. The human-oriented
//! `summary.txt` sits next to it and is free to mention elapsed time.
//!
//! A witness is a small JSON file per covered target holding exactly what
//! was executed: the program, the argv, and the file input (base64).
//! Replaying a witness re-runs it and checks that the recorded target is
//! in the coverage.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Duration;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use serde::{Deserialize, Serialize};

use crate::campaign::{CampaignConfig, ExecTarget, Mode, MutatorKind, PhasePlan};
use crate::fixtures::{run_fixture, Fixture};
use crate::harness::{self, ExecutionRequest, ExecutionResult};
use crate::scheduler::QueueStats;

pub const REPORT_FILE: &str = "report.json";
pub const SUMMARY_FILE: &str = "summary.txt";

/// Replays run external programs under a fixed generous timeout.
const REPLAY_TIMEOUT: Duration = Duration::from_secs(10);

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Report {
    pub config: ReportConfig,
    pub phases: Vec<PhaseReport>,
    pub targets: BTreeMap<String, TargetOutcome>,
    pub total_executions: u64,
    pub all_reachable_covered: bool,
}

/// Echo of the campaign configuration, reduced to stable values.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportConfig {
    pub seed: u64,
    pub mode: String,
    pub mutator: String,
    pub phases: String,
    pub batch_size: usize,
    pub parallelism: usize,
    pub per_exec_timeout_ms: u64,
    pub phase_timeout_ms: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_execs_per_phase: Option<u64>,
    pub program: String,
}

impl ReportConfig {
    pub fn from_campaign(config: &CampaignConfig) -> Self {
        let mode = match config.mode {
            Mode::Guided => "guided",
            Mode::Unguided => "unguided",
        };
        let mutator = match config.mutator {
            MutatorKind::Structured => "structured",
            MutatorKind::Havoc => "havoc",
        };
        let phases = match config.phases {
            PhasePlan::Staged => "staged",
            PhasePlan::CmdlineOnly => "cmdline-only",
            PhasePlan::FileOnly => "file-only",
        };
        let program = match &config.exec_target {
            ExecTarget::Fixture(f) => format!("fixture:{}", f.name()),
            ExecTarget::External { program, .. } => program.display().to_string(),
        };
        ReportConfig {
            seed: config.seed,
            mode: mode.to_string(),
            mutator: mutator.to_string(),
            phases: phases.to_string(),
            batch_size: config.batch_size,
            parallelism: config.parallelism,
            per_exec_timeout_ms: config.per_exec_timeout.as_millis() as u64,
            phase_timeout_ms: config.phase_timeout.as_millis() as u64,
            max_execs_per_phase: config.max_execs_per_phase,
            program,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhaseReport {
    pub phase: String,
    pub executions: u64,
    /// Mutation batches run after the initial inputs.
    pub rounds: u64,
    pub queue: QueueStats,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub best_argv: Option<BestArgv>,
}

/// Lowest-scoring argv of a command-line phase, earliest on ties.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BestArgv {
    pub argv: Vec<String>,
    pub score: f64,
    pub exec_index: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum TargetOutcome {
    Covered {
        phase: String,
        /// Ordinal of the execution that first covered the target,
        /// counted from 1 across the whole campaign.
        exec_index: u64,
        /// Witness file path relative to the output directory.
        witness: String,
    },
    Unreachable {
        reason: String,
    },
    Uncovered {
        reason: String,
    },
}

impl Report {
    /// Writes `report.json` and `summary.txt` into `out_dir`.
    pub fn write(&self, out_dir: &Path) -> std::io::Result<()> {
        let json = serde_json::to_string_pretty(self).expect("report serializes");
        std::fs::write(out_dir.join(REPORT_FILE), json + "\n")?;

        let mut summary = Vec::new();
        self.write_summary(&mut summary)?;
        std::fs::write(out_dir.join(SUMMARY_FILE), summary)
    }

    fn write_summary(&self, out: &mut impl std::io::Write) -> std::io::Result<()> {
        writeln!(
            out,
            "campaign: seed {} mode {} mutator {} phases {}",
            self.config.seed, self.config.mode, self.config.mutator, self.config.phases
        )?;
        writeln!(out, "program: {}", self.config.program)?;
        writeln!(out, "total executions: {}", self.total_executions)?;
        for phase in &self.phases {
            writeln!(
                out,
                "phase {}: {} executions, {} mutation rounds, queue {} accepted / {} rejected",
                phase.phase,
                phase.executions,
                phase.rounds,
                phase.queue.accepted,
                phase.queue.rejected_infinite + phase.queue.rejected_dict
            )?;
            if let Some(best) = &phase.best_argv {
                writeln!(
                    out,
                    "  best argv (score {}, execution {}): {:?}",
                    best.score, best.exec_index, best.argv
                )?;
            }
        }
        for (target, outcome) in &self.targets {
            match outcome {
                TargetOutcome::Covered {
                    phase, exec_index, ..
                } => writeln!(
                    out,
                    "target {target}: covered in phase {phase} at execution {exec_index}"
                )?,
                TargetOutcome::Unreachable { reason } => {
                    writeln!(out, "target {target}: statically unreachable ({reason})")?
                }
                TargetOutcome::Uncovered { reason } => {
                    writeln!(out, "target {target}: not covered ({reason})")?
                }
            }
        }
        writeln!(
            out,
            "all reachable targets covered: {}",
            self.all_reachable_covered
        )
    }

    pub fn load(path: &Path) -> std::io::Result<Report> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }
}

/// What executed the witness input.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WitnessProgram {
    Fixture { name: String },
    External { program: String, args: Vec<String> },
}

/// A replayable record of one target-covering execution.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Witness {
    pub target: String,
    pub program: WitnessProgram,
    /// Mutated argv as passed to the program, before any `@@` substitution.
    pub argv: Vec<String>,
    pub input_base64: String,
    pub phase: String,
    pub exec_index: u64,
}

pub fn encode_input(input: &[u8]) -> String {
    BASE64.encode(input)
}

#[derive(Debug, thiserror::Error)]
pub enum ReplayError {
    #[error("witness {path}: {message}")]
    Malformed { path: String, message: String },
    #[error(transparent)]
    Harness(#[from] harness::HarnessError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug)]
pub struct ReplayOutcome {
    pub target: String,
    pub covered: bool,
    pub result: ExecutionResult,
}

impl Witness {
    pub fn to_json(&self) -> std::io::Result<String> {
        let json = serde_json::to_string_pretty(self).expect("witness serializes");
        Ok(json + "\n")
    }

    pub fn load(path: &Path) -> Result<Witness, ReplayError> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| ReplayError::Malformed {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn input(&self) -> Result<Vec<u8>, ReplayError> {
        BASE64
            .decode(&self.input_base64)
            .map_err(|e| ReplayError::Malformed {
                path: self.target.clone(),
                message: format!("input is not valid base64: {e}"),
            })
    }
}

/// Re-runs a witness and checks its coverage for the recorded target.
pub fn replay_witness(path: &Path) -> Result<ReplayOutcome, ReplayError> {
    let witness = Witness::load(path)?;
    let input = witness.input()?;
    let result = match &witness.program {
        WitnessProgram::Fixture { name } => {
            let fixture: Fixture = name.parse().map_err(|e: String| ReplayError::Malformed {
                path: path.display().to_string(),
                message: e,
            })?;
            run_fixture(fixture, &witness.argv, &input)
        }
        WitnessProgram::External { program, args } => {
            let mut argv = witness.argv.clone();
            argv.extend(args.iter().cloned());
            harness::execute(&ExecutionRequest {
                program: program.into(),
                argv,
                input,
                timeout: REPLAY_TIMEOUT,
            })?
        }
    };
    let covered = result
        .coverage
        .iter()
        .any(|b| b.as_str() == witness.target);
    Ok(ReplayOutcome {
        target: witness.target,
        covered,
        result,
    })
}
