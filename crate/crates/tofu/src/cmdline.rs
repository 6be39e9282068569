//! Command lines as a mutable input, described by an option spec.
//!
//! The spec is line oriented, fields separated by `|`:
//!
//! ```text
//! --silent|optional|no option
//! --level|optional|int|0,9
//! --mode|required|oneof|fast,small
//! file1|required|directory|testdata/corpus
//! ```
//!
//! A name starting with `-` is a flag and renders as the name (plus a
//! separate value token for valued kinds); any other name is a positional
//! whose value alone is rendered, bare `no option` positionals rendering as
//! their name (a subcommand word). Flags always come before positionals in
//! the rendered command line, each group in spec order.
//!
//! `directory` kinds take their candidate values from the files of a
//! directory; the listing is snapshotted (sorted) at load time so later
//! filesystem changes cannot change what a seed renders to.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Requirement {
    Required,
    Optional,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OptionKind {
    /// Bare flag or subcommand word without a value.
    None,
    /// Value is one of the files of a directory, by full path.
    Directory { values: Vec<String> },
    /// Value out of a fixed list.
    OneOf(Vec<String>),
    /// Decimal integer in `lo..=hi`.
    IntRange(i64, i64),
}

impl OptionKind {
    fn first_value(&self) -> Option<String> {
        match self {
            OptionKind::None => None,
            OptionKind::Directory { values } => values.first().cloned(),
            OptionKind::OneOf(values) => values.first().cloned(),
            OptionKind::IntRange(lo, _) => Some(lo.to_string()),
        }
    }

    fn draw_value(&self, rng: &mut impl Rng) -> Option<String> {
        match self {
            OptionKind::None => None,
            OptionKind::Directory { values } | OptionKind::OneOf(values) => {
                if values.is_empty() {
                    None
                } else {
                    Some(values[rng.random_range(0..values.len())].clone())
                }
            }
            OptionKind::IntRange(lo, hi) => Some(rng.random_range(*lo..=*hi).to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CmdlineEntry {
    pub name: String,
    pub requirement: Requirement,
    pub kind: OptionKind,
}

impl CmdlineEntry {
    pub fn is_flag(&self) -> bool {
        self.name.starts_with('-')
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CmdlineSpec {
    pub entries: Vec<CmdlineEntry>,
}

/// Presence and value of one entry in a concrete command line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Choice {
    Absent,
    /// Present without a value (`no option` kinds).
    Present,
    /// Present with this value token.
    WithValue(String),
}

/// A concrete command line: one choice per spec entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CmdlineState {
    pub choices: BTreeMap<String, Choice>,
}

#[derive(Debug, thiserror::Error)]
pub enum CmdlineError {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("{path}:{line}: directory {dir} cannot be read: {source}")]
    Directory {
        path: String,
        line: usize,
        dir: String,
        source: std::io::Error,
    },
    #[error("required entry {0} draws values from an empty directory")]
    NoValues(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Loads a command-line spec. `#` starts a comment, blank lines are
/// skipped. Directory listings are resolved immediately.
pub fn load_cmdline_spec(path: &Path) -> Result<CmdlineSpec, CmdlineError> {
    let text = std::fs::read_to_string(path)?;
    parse_cmdline_spec_text(&text, &path.display().to_string())
}

/// Parses spec text; `origin` is used in error messages and as the base
/// for relative directory paths' display only (paths resolve as given).
pub fn parse_cmdline_spec_text(text: &str, origin: &str) -> Result<CmdlineSpec, CmdlineError> {
    let err = |line: usize, message: String| CmdlineError::Parse {
        path: origin.to_string(),
        line,
        message,
    };
    let mut entries: Vec<CmdlineEntry> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('|').collect();
        if fields.len() < 3 {
            return Err(err(
                lineno,
                format!("expected name|requirement|kind[|argument], got `{line}`"),
            ));
        }
        let name = fields[0].trim().to_string();
        if name.is_empty() {
            return Err(err(lineno, "empty entry name".into()));
        }
        if entries.iter().any(|e| e.name == name) {
            return Err(err(lineno, format!("entry {name} defined twice")));
        }
        let requirement = match fields[1].trim() {
            "required" => Requirement::Required,
            "optional" => Requirement::Optional,
            other => return Err(err(lineno, format!("unknown requirement `{other}`"))),
        };
        let kind = match (fields[2].trim(), fields.get(3).map(|f| f.trim())) {
            ("no option", None) => OptionKind::None,
            ("directory", Some(dir)) => {
                let mut names: Vec<String> = std::fs::read_dir(dir)
                    .map_err(|source| CmdlineError::Directory {
                        path: origin.to_string(),
                        line: lineno,
                        dir: dir.to_string(),
                        source,
                    })?
                    .filter_map(|e| e.ok())
                    .filter(|e| e.file_type().map(|t| t.is_file()).unwrap_or(false))
                    .filter_map(|e| e.file_name().into_string().ok())
                    .collect();
                names.sort();
                let values = names
                    .into_iter()
                    .map(|n| Path::new(dir).join(n).display().to_string())
                    .collect();
                OptionKind::Directory { values }
            }
            ("oneof", Some(list)) => {
                let values: Vec<String> = list
                    .split(',')
                    .map(|v| v.trim().to_string())
                    .filter(|v| !v.is_empty())
                    .collect();
                if values.is_empty() {
                    return Err(err(lineno, "oneof needs at least one value".into()));
                }
                OptionKind::OneOf(values)
            }
            ("int", Some(range)) => {
                let Some((lo, hi)) = range.split_once(',') else {
                    return Err(err(lineno, format!("expected int|lo,hi, got int|{range}")));
                };
                let lo: i64 = lo
                    .trim()
                    .parse()
                    .map_err(|_| err(lineno, format!("bad integer `{lo}`")))?;
                let hi: i64 = hi
                    .trim()
                    .parse()
                    .map_err(|_| err(lineno, format!("bad integer `{hi}`")))?;
                if lo > hi {
                    return Err(err(lineno, format!("empty range int|{lo},{hi}")));
                }
                OptionKind::IntRange(lo, hi)
            }
            (kind, Some(_)) if matches!(kind, "no option") => {
                return Err(err(lineno, "no option takes no argument".into()))
            }
            (kind, arg) => {
                return Err(err(
                    lineno,
                    format!(
                        "unknown kind `{kind}`{}",
                        if arg.is_none() { " (missing argument?)" } else { "" }
                    ),
                ))
            }
        };
        entries.push(CmdlineEntry {
            name,
            requirement,
            kind,
        });
    }
    Ok(CmdlineSpec { entries })
}

/// Deterministic starting state: required entries present with their first
/// value, optional entries absent.
pub fn initial_state(spec: &CmdlineSpec) -> Result<CmdlineState, CmdlineError> {
    let mut choices = BTreeMap::new();
    for e in &spec.entries {
        let choice = match e.requirement {
            Requirement::Optional => Choice::Absent,
            Requirement::Required => match &e.kind {
                OptionKind::None => Choice::Present,
                kind => match kind.first_value() {
                    Some(v) => Choice::WithValue(v),
                    None => return Err(CmdlineError::NoValues(e.name.clone())),
                },
            },
        };
        choices.insert(e.name.clone(), choice);
    }
    Ok(CmdlineState { choices })
}

/// Returns a mutated copy of `state`: one or two entries get toggled or
/// their value redrawn. Entries with no degrees of freedom stay put, so the
/// mutant can equal the input.
pub fn mutate_cmdline(
    state: &CmdlineState,
    spec: &CmdlineSpec,
    rng: &mut impl Rng,
) -> CmdlineState {
    let mut out = state.clone();
    if spec.entries.is_empty() {
        return out;
    }
    let edits = rng.random_range(1..=2);
    for _ in 0..edits {
        let e = &spec.entries[rng.random_range(0..spec.entries.len())];
        let current = out.choices.get(&e.name).cloned().unwrap_or(Choice::Absent);
        let next = match (e.requirement, &current) {
            (Requirement::Optional, Choice::Absent) => match &e.kind {
                OptionKind::None => Choice::Present,
                kind => match kind.draw_value(rng) {
                    Some(v) => Choice::WithValue(v),
                    None => current, // empty directory: nothing to turn on
                },
            },
            (Requirement::Optional, _) => {
                // drop it, or redraw the value where there is one
                if matches!(e.kind, OptionKind::None) || rng.random_bool(0.5) {
                    Choice::Absent
                } else {
                    match e.kind.draw_value(rng) {
                        Some(v) => Choice::WithValue(v),
                        None => Choice::Absent,
                    }
                }
            }
            (Requirement::Required, _) => match e.kind.draw_value(rng) {
                Some(v) => Choice::WithValue(v),
                None => current, // `no option` or no values: nothing to vary
            },
        };
        out.choices.insert(e.name.clone(), next);
    }
    out
}

/// Renders the state as argv tokens: flags before positionals, spec order
/// within each group, values as separate tokens.
pub fn render_argv(state: &CmdlineState, spec: &CmdlineSpec) -> Vec<String> {
    let mut argv = Vec::new();
    for flags in [true, false] {
        for e in &spec.entries {
            if e.is_flag() != flags {
                continue;
            }
            match state.choices.get(&e.name).unwrap_or(&Choice::Absent) {
                Choice::Absent => {}
                Choice::Present => argv.push(e.name.clone()),
                Choice::WithValue(v) => {
                    if e.is_flag() {
                        argv.push(e.name.clone());
                    }
                    argv.push(v.clone());
                }
            }
        }
    }
    argv
}
