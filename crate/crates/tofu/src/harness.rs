//! Execution of candidate inputs and coverage collection.
//!
//! An instrumented program under test reports the basic blocks it executed
//! by appending one block id per line to the file named by the
//! `TOFU_COVERAGE_FILE` environment variable. The harness allocates that
//! file per execution, runs the program, and reads the coverage back.
//! Executions that run over their time limit are killed but keep whatever
//! coverage they managed to write.
//!
//! The input bytes reach the program either through a temporary file whose
//! path replaces the `@@` argv placeholder, or on stdin when no placeholder
//! is present.

use std::collections::BTreeSet;
use std::io::Write as _;
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use crate::icfg::BlockId;

/// Environment variable naming the coverage file the program appends to.
pub const COVERAGE_ENV: &str = "TOFU_COVERAGE_FILE";

/// Argv placeholder replaced by the path of the input file.
pub const INPUT_PLACEHOLDER: &str = "@@";

/// One pending execution of the program under test.
#[derive(Debug, Clone)]
pub struct ExecutionRequest {
    pub program: PathBuf,
    /// Arguments, with at most one [`INPUT_PLACEHOLDER`] token.
    pub argv: Vec<String>,
    pub input: Vec<u8>,
    pub timeout: Duration,
}

/// How the execution ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    /// Exited on its own with this status code.
    Normal(i32),
    /// Terminated by a signal.
    Signaled,
    /// Killed by the harness after `timeout`.
    TimedOut,
}

#[derive(Debug, Clone)]
pub struct ExecutionResult {
    pub coverage: BTreeSet<BlockId>,
    pub exit: ExitKind,
    pub duration: Duration,
}

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("failed to run {program}: {source}")]
    Spawn {
        program: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Parses a coverage file's content: one block id per line.
pub fn parse_coverage(text: &str) -> BTreeSet<BlockId> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(BlockId::new)
        .collect()
}

/// Runs one request to completion (or until its timeout).
pub fn execute(req: &ExecutionRequest) -> Result<ExecutionResult, HarnessError> {
    if req.timeout.is_zero() {
        return Err(HarnessError::InvalidRequest("timeout must be positive".into()));
    }
    let placeholders = req.argv.iter().filter(|a| *a == INPUT_PLACEHOLDER).count();
    if placeholders > 1 {
        return Err(HarnessError::InvalidRequest(format!(
            "argv holds {placeholders} input placeholders, at most one allowed"
        )));
    }

    let dir = tempfile::tempdir()?;
    let coverage_path = dir.path().join("coverage.txt");
    let input_path = dir.path().join("input.bin");
    let via_file = placeholders == 1;
    if via_file {
        std::fs::write(&input_path, &req.input)?;
    }
    let argv: Vec<String> = req
        .argv
        .iter()
        .map(|a| {
            if a == INPUT_PLACEHOLDER {
                input_path.display().to_string()
            } else {
                a.clone()
            }
        })
        .collect();

    let start = Instant::now();
    let mut child = Command::new(&req.program)
        .args(&argv)
        .env(COVERAGE_ENV, &coverage_path)
        .stdin(Stdio::piped())
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .map_err(|source| HarnessError::Spawn {
            program: req.program.display().to_string(),
            source,
        })?;

    if let Some(mut stdin) = child.stdin.take() {
        let payload = if via_file { &[] as &[u8] } else { &req.input };
        // the program may exit without reading; a broken pipe is fine
        let _ = stdin.write_all(payload);
    }

    let deadline = start + req.timeout;
    let exit = loop {
        match child.try_wait()? {
            Some(status) => {
                break match status.code() {
                    Some(code) => ExitKind::Normal(code),
                    None => ExitKind::Signaled,
                }
            }
            None if Instant::now() >= deadline => {
                let _ = child.kill();
                let _ = child.wait();
                break ExitKind::TimedOut;
            }
            None => std::thread::sleep(Duration::from_millis(2)),
        }
    };
    let duration = start.elapsed();

    let coverage = match std::fs::read_to_string(&coverage_path) {
        Ok(text) => parse_coverage(&text),
        Err(_) => BTreeSet::new(), // the program never reported coverage
    };
    Ok(ExecutionResult {
        coverage,
        exit,
        duration,
    })
}

/// Runs a batch on up to `parallelism` worker threads. Results come back
/// in request order regardless of completion order.
pub fn execute_batch(
    requests: &[ExecutionRequest],
    parallelism: usize,
) -> Vec<Result<ExecutionResult, HarnessError>> {
    let workers = parallelism.max(1).min(requests.len());
    if workers <= 1 {
        return requests.iter().map(execute).collect();
    }
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<ExecutionResult, HarnessError>>>> =
        Mutex::new((0..requests.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= requests.len() {
                    break;
                }
                let result = execute(&requests[i]);
                results.lock().expect("result lock")[i] = Some(result);
            });
        }
    });
    results
        .into_inner()
        .expect("result lock")
        .into_iter()
        .map(|r| r.expect("every slot filled"))
        .collect()
}
