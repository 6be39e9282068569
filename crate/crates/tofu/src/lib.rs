//! tofu is a target-oriented fuzzer. Given an interprocedural control-flow
//! graph, a set of target basic blocks, and format descriptions for the
//! program's file input and command line, it searches for inputs that reach
//! the targets. The search is guided by a static distance metric that counts
//! branch choices rather than raw edges, so inputs are ranked by how many
//! "decisions" separate their execution traces from a target.
//!
//! The crate is organized along the pipeline:
//!
//! * [`icfg`] parses and validates graph files, resolves indirect calls, and
//!   derives the weighted search graph (post-dominator shortcuts, pruned
//!   irrelevant calls).
//! * [`distance`] runs shortest-path over the weighted graph, once per
//!   target, and serializes the resulting distance tables.
//! * [`scheduler`] maintains the seed priority queue, the coverage-frequency
//!   dictionary that throttles duplicate seeds, and the target ledger.
//! * [`grammar`] implements derivation-tree based generation, parsing, and
//!   mutation for grammar-described file inputs, plus a byte-level havoc
//!   mutator for the structure-blind mode.
//! * [`cmdline`] does the same for command lines described by an option spec.
//! * [`harness`] executes candidate inputs and collects block coverage via
//!   the `TOFU_COVERAGE_FILE` protocol; [`fixtures`] provides built-in
//!   interpreted programs for hermetic end-to-end runs.
//! * [`campaign`] ties everything together into staged fuzzing campaigns and
//!   [`report`] renders their deterministic results and replayable witnesses.

pub mod campaign;
pub mod cmdline;
pub mod distance;
pub mod fixtures;
pub mod grammar;
pub mod harness;
pub mod icfg;
pub mod report;
pub mod scheduler;
