//! Built-in programs for hermetic end-to-end runs.
//!
//! Each fixture is a tiny interpreted program whose control flow mirrors a
//! graph file shipped with the crate, and whose execution reports exactly
//! the blocks of that graph it passed through. Campaigns can run them
//! in-process, which keeps end-to-end tests free of compilers and external
//! binaries while exercising the same interfaces as a real target.
//!
//! The graph, grammar, target, and option-spec files live under
//! `fixtures/` in the crate source and are embedded here; `materialize`
//! writes them out for use through the command-line interface.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use crate::harness::{ExecutionResult, ExitKind};
use crate::icfg::BlockId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Fixture {
    /// Accepts even-length palindromes over `{a, b}`; the target fires on
    /// valid inputs with exactly ten a's.
    Validate,
    /// Diff-like flag scanner; the target needs `-B` on the command line
    /// and a blank line in the input.
    Flagdemo,
    /// Five chained character checks against a magic word; gives the
    /// distance metric a clean gradient.
    Ladder,
}

impl FromStr for Fixture {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "validate" => Ok(Fixture::Validate),
            "flagdemo" => Ok(Fixture::Flagdemo),
            "ladder" => Ok(Fixture::Ladder),
            other => Err(format!(
                "unknown fixture {other} (expected validate, flagdemo, or ladder)"
            )),
        }
    }
}

impl Fixture {
    pub fn name(self) -> &'static str {
        match self {
            Fixture::Validate => "validate",
            Fixture::Flagdemo => "flagdemo",
            Fixture::Ladder => "ladder",
        }
    }

    pub fn graph_text(self) -> &'static str {
        match self {
            Fixture::Validate => include_str!("../fixtures/validate/graph.txt"),
            Fixture::Flagdemo => include_str!("../fixtures/flagdemo/graph.txt"),
            Fixture::Ladder => include_str!("../fixtures/ladder/graph.txt"),
        }
    }

    pub fn grammar_text(self) -> &'static str {
        match self {
            Fixture::Validate => include_str!("../fixtures/validate/grammar.txt"),
            Fixture::Flagdemo => include_str!("../fixtures/flagdemo/grammar.txt"),
            Fixture::Ladder => include_str!("../fixtures/ladder/grammar.txt"),
        }
    }

    pub fn targets_text(self) -> &'static str {
        match self {
            Fixture::Validate => include_str!("../fixtures/validate/targets.txt"),
            Fixture::Flagdemo => include_str!("../fixtures/flagdemo/targets.txt"),
            Fixture::Ladder => include_str!("../fixtures/ladder/targets.txt"),
        }
    }

    pub fn cmdspec_text(self) -> Option<&'static str> {
        match self {
            Fixture::Flagdemo => Some(include_str!("../fixtures/flagdemo/cmdspec.txt")),
            _ => None,
        }
    }

    /// Writes the fixture's files into `dir` and returns their paths as
    /// (graph, targets, grammar, cmdspec).
    pub fn materialize(
        self,
        dir: &Path,
    ) -> std::io::Result<(PathBuf, PathBuf, PathBuf, Option<PathBuf>)> {
        std::fs::create_dir_all(dir)?;
        let graph = dir.join("graph.txt");
        std::fs::write(&graph, self.graph_text())?;
        let targets = dir.join("targets.txt");
        std::fs::write(&targets, self.targets_text())?;
        let grammar = dir.join("grammar.txt");
        std::fs::write(&grammar, self.grammar_text())?;
        let cmdspec = match self.cmdspec_text() {
            Some(text) => {
                let p = dir.join("cmdspec.txt");
                std::fs::write(&p, text)?;
                Some(p)
            }
            None => None,
        };
        Ok((graph, targets, grammar, cmdspec))
    }
}

/// Runs a fixture in-process and returns its coverage, exactly as if the
/// harness had executed an instrumented binary.
pub fn run_fixture(fixture: Fixture, argv: &[String], input: &[u8]) -> ExecutionResult {
    let mut trace = Trace::default();
    let code = match fixture {
        Fixture::Validate => run_validate(&mut trace, input),
        Fixture::Flagdemo => run_flagdemo(&mut trace, argv, input),
        Fixture::Ladder => run_ladder(&mut trace, input),
    };
    ExecutionResult {
        coverage: trace.blocks,
        exit: ExitKind::Normal(code),
        duration: Duration::ZERO,
    }
}

#[derive(Default)]
struct Trace {
    blocks: BTreeSet<BlockId>,
}

impl Trace {
    fn hit(&mut self, block: &str) {
        self.blocks.insert(BlockId::new(block));
    }
}

fn run_validate(t: &mut Trace, input: &[u8]) -> i32 {
    t.hit("main:0");
    let valid = is_valid(t, input);
    t.hit("main:1");
    if !valid {
        t.hit("main:2");
        t.hit("main:8");
        return 1;
    }
    t.hit("main:3");
    let mut count = 0usize;
    for &c in input {
        t.hit("main:4");
        t.hit("main:5");
        if c == b'a' {
            count += 1;
        }
    }
    t.hit("main:4");
    t.hit("main:6");
    if count == 10 {
        t.hit("main:7");
    }
    t.hit("main:8");
    0
}

/// Even-length palindrome over `{a, b}`.
fn is_valid(t: &mut Trace, input: &[u8]) -> bool {
    t.hit("is_valid:0");
    if input.len() % 2 != 0 {
        t.hit("is_valid:4");
        return false;
    }
    let mut i = 0;
    let mut j = input.len();
    loop {
        t.hit("is_valid:1");
        if i + 1 >= j {
            t.hit("is_valid:3");
            return true;
        }
        t.hit("is_valid:2");
        let (a, b) = (input[i], input[j - 1]);
        if a != b || !(a == b'a' || a == b'b') {
            t.hit("is_valid:4");
            return false;
        }
        i += 1;
        j -= 1;
    }
}

fn run_flagdemo(t: &mut Trace, argv: &[String], input: &[u8]) -> i32 {
    t.hit("main:0");
    let mut ignore_blank = false;
    for token in argv {
        t.hit("main:1");
        t.hit("main:2");
        if token == "-B" {
            t.hit("main:5");
            ignore_blank = true;
        } else {
            t.hit("main:6");
        }
    }
    t.hit("main:1");
    t.hit("main:3");
    diff_2_files(t, input, ignore_blank);
    t.hit("main:4");
    0
}

fn diff_2_files(t: &mut Trace, input: &[u8], ignore_blank: bool) {
    t.hit("diff_2_files:0");
    if ignore_blank {
        t.hit("diff_2_files:1");
        if has_blank_line(input) {
            t.hit("diff_2_files:2");
        }
    }
    t.hit("diff_2_files:3");
    t.hit("diff_2_files:4");
}

/// A blank line is two newlines in a row (or one opening the input).
fn has_blank_line(input: &[u8]) -> bool {
    input.first() == Some(&b'\n') || input.windows(2).any(|w| w == b"\n\n")
}

const LADDER_WORD: &[u8] = b"abcad";

fn run_ladder(t: &mut Trace, input: &[u8]) -> i32 {
    t.hit("main:0");
    for (i, &want) in LADDER_WORD.iter().enumerate() {
        t.hit(&format!("main:{}", i + 1));
        if input.get(i) != Some(&want) {
            t.hit("main:7");
            return 1;
        }
    }
    t.hit("main:6");
    t.hit("main:7");
    0
}
