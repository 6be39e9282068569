//! Grammar-described file inputs: spec loading, derivation trees,
//! generation, parsing, and structure-aware mutation.
//!
//! A grammar file names a start symbol and gives one rule per line:
//!
//! ```text
//! start Expr
//! Expr -> Term ("+" Term)*          # not this; groups are not supported
//! Expr -> "(" Expr ")" | Num
//! Num  -> int(0,255)
//! Word -> class([a-z])+
//! Op   -> oneof("+","-")
//! ```
//!
//! Alternatives are separated by `|`, symbols by whitespace. A symbol is a
//! quoted literal, `int(lo,hi)`, `class([...])`, `oneof("a","b",...)`, or a
//! nonterminal name, optionally suffixed with `?`, `*`, or `+`. There is no
//! grouping; factor shared structure into extra nonterminals instead.
//!
//! Loading validates that every referenced nonterminal is defined and that
//! every nonterminal is productive (derives some finite tree), and
//! precomputes the minimum derivation depth per nonterminal. Generation
//! leans on those depths to stay within its depth budget.

mod havoc;
mod mutate;
mod parse;
mod tree;

pub use havoc::havoc_mutate;
pub use mutate::{mutate, MutatorConfig, OperatorWeights};
pub use parse::{parse, ParseError, DEFAULT_PARSE_STEPS};
pub use tree::{
    conforms, depth, generate, render, ChildSlot, ConformError, GenerateConfig, NontermNode,
    TreeNode,
};

use std::collections::BTreeMap;
use std::path::Path;

/// How often a symbol occurrence may repeat.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Repeat {
    Once,
    /// `?`: zero or one.
    Optional,
    /// `*`: any number including zero.
    Star,
    /// `+`: at least one.
    Plus,
}

impl Repeat {
    /// Minimum number of elements a conforming slot must hold.
    pub fn min_count(self) -> usize {
        match self {
            Repeat::Plus => 1,
            _ => 0,
        }
    }
}

/// Set of characters, stored expanded for uniform sampling.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CharClass {
    chars: Vec<char>,
}

impl CharClass {
    pub fn new(chars: Vec<char>) -> Self {
        CharClass { chars }
    }

    pub fn contains(&self, c: char) -> bool {
        self.chars.contains(&c)
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SymbolKind {
    Nonterminal(String),
    /// Fixed text; the empty string is allowed and matches everywhere.
    Literal(String),
    /// Decimal integer in `lo..=hi`.
    IntRange(i64, i64),
    /// One character out of a class.
    CharClass(CharClass),
    /// One string out of a fixed list.
    OneOf(Vec<String>),
}

impl SymbolKind {
    /// Whether a terminal of this kind can take at least two values, which
    /// is what makes it worth mutating.
    pub fn is_mutable_terminal(&self) -> bool {
        match self {
            SymbolKind::Nonterminal(_) | SymbolKind::Literal(_) => false,
            SymbolKind::IntRange(lo, hi) => lo < hi,
            SymbolKind::CharClass(c) => c.chars().len() >= 2,
            SymbolKind::OneOf(alts) => alts.len() >= 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Symbol {
    pub kind: SymbolKind,
    pub repeat: Repeat,
}

/// One alternative of a rule: a sequence of symbols.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Production {
    pub symbols: Vec<Symbol>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrammarSpec {
    pub start: String,
    /// Productions per nonterminal, in source order.
    pub rules: BTreeMap<String, Vec<Production>>,
    /// Minimum depth of any tree derivable from each nonterminal. Finite
    /// for every nonterminal; unproductive ones are rejected at load.
    min_depth: BTreeMap<String, usize>,
}

#[derive(Debug, thiserror::Error)]
pub enum GrammarError {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("undefined nonterminal {0}")]
    Undefined(String),
    #[error("nonterminal {0} cannot derive any finite tree")]
    Unproductive(String),
    #[error("missing start declaration")]
    MissingStart,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl GrammarSpec {
    /// Assembles and validates a spec from parts; `load_grammar` goes
    /// through here too.
    pub fn new(
        start: String,
        rules: BTreeMap<String, Vec<Production>>,
    ) -> Result<GrammarSpec, GrammarError> {
        if !rules.contains_key(&start) {
            return Err(GrammarError::Undefined(start));
        }
        for prods in rules.values() {
            for p in prods {
                for s in &p.symbols {
                    if let SymbolKind::Nonterminal(name) = &s.kind {
                        if !rules.contains_key(name) {
                            return Err(GrammarError::Undefined(name.clone()));
                        }
                    }
                }
            }
        }
        let min_depth = compute_min_depths(&rules)?;
        Ok(GrammarSpec {
            start,
            rules,
            min_depth,
        })
    }

    pub fn min_depth(&self, nonterminal: &str) -> usize {
        self.min_depth[nonterminal]
    }

    /// Smallest depth a tree for `production` can have: 1 plus the minimum
    /// depths of the nonterminals the production cannot avoid expanding.
    pub fn production_min_depth(&self, production: &Production) -> usize {
        production_min_depth_in(&self.min_depth, production)
            .expect("validated spec has finite production depths")
    }
}

fn production_min_depth_in(
    depths: &BTreeMap<String, usize>,
    production: &Production,
) -> Option<usize> {
    let mut worst = 0usize;
    for s in &production.symbols {
        let cost = match (&s.kind, s.repeat) {
            // optional occurrences can always be left out
            (_, Repeat::Optional) | (_, Repeat::Star) => 0,
            (SymbolKind::Nonterminal(m), _) => *depths.get(m)?,
            _ => 0,
        };
        worst = worst.max(cost);
    }
    Some(1 + worst)
}

/// Fixpoint over the rules: a nonterminal's minimum depth is the best its
/// productions can do. Nonterminals stuck at infinity are unproductive.
fn compute_min_depths(
    rules: &BTreeMap<String, Vec<Production>>,
) -> Result<BTreeMap<String, usize>, GrammarError> {
    let mut depths: BTreeMap<String, usize> = BTreeMap::new();
    loop {
        let mut changed = false;
        for (name, prods) in rules {
            let best = prods
                .iter()
                .filter_map(|p| production_min_depth_in(&depths, p))
                .min();
            if let Some(best) = best {
                let slot = depths.get(name).copied();
                if slot != Some(best) && slot.map_or(true, |cur| best < cur) {
                    depths.insert(name.clone(), best);
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    for name in rules.keys() {
        if !depths.contains_key(name) {
            return Err(GrammarError::Unproductive(name.clone()));
        }
    }
    Ok(depths)
}

/// Loads a grammar file. `#` starts a comment, blank lines are skipped.
pub fn load_grammar(path: &Path) -> Result<GrammarSpec, GrammarError> {
    let text = std::fs::read_to_string(path)?;
    parse_grammar_text(&text, &path.display().to_string())
}

/// Parses grammar text; `origin` is used in error messages.
pub fn parse_grammar_text(text: &str, origin: &str) -> Result<GrammarSpec, GrammarError> {
    let err = |line: usize, message: String| GrammarError::Parse {
        path: origin.to_string(),
        line,
        message,
    };
    let mut start: Option<String> = None;
    let mut rules: BTreeMap<String, Vec<Production>> = BTreeMap::new();

    for (lineno, raw) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = strip_comment(raw).trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("start ") {
            if start.is_some() {
                return Err(err(lineno, "start declared twice".into()));
            }
            start = Some(rest.trim().to_string());
            continue;
        }
        let Some((lhs, rhs)) = line.split_once("->") else {
            return Err(err(lineno, format!("expected `Name -> ...`, got `{line}`")));
        };
        let name = lhs.trim().to_string();
        if name.is_empty() || !is_ident(&name) {
            return Err(err(lineno, format!("bad nonterminal name `{}`", lhs.trim())));
        }
        if rules.contains_key(&name) {
            return Err(err(lineno, format!("rule for {name} defined twice")));
        }
        let mut productions = Vec::new();
        for alt in split_alternatives(rhs) {
            let symbols = parse_symbols(&alt).map_err(|m| err(lineno, m))?;
            productions.push(Production { symbols });
        }
        rules.insert(name, productions);
    }

    let start = start.ok_or(GrammarError::MissingStart)?;
    GrammarSpec::new(start, rules)
}

/// Strips a trailing `#` comment, leaving `#` inside quotes alone.
fn strip_comment(line: &str) -> &str {
    let mut in_quotes = false;
    let mut escaped = false;
    for (i, c) in line.char_indices() {
        if escaped {
            escaped = false;
            continue;
        }
        match c {
            '\\' if in_quotes => escaped = true,
            '"' => in_quotes = !in_quotes,
            '#' if !in_quotes => return &line[..i],
            _ => {}
        }
    }
    line
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Splits an RHS on `|`, ignoring pipes inside quotes.
fn split_alternatives(rhs: &str) -> Vec<String> {
    let mut alts = Vec::new();
    let mut cur = String::new();
    let mut in_quotes = false;
    let mut escaped = false;
    for c in rhs.chars() {
        if escaped {
            cur.push(c);
            escaped = false;
            continue;
        }
        match c {
            '\\' if in_quotes => {
                cur.push(c);
                escaped = true;
            }
            '"' => {
                cur.push(c);
                in_quotes = !in_quotes;
            }
            '|' if !in_quotes => {
                alts.push(std::mem::take(&mut cur));
            }
            _ => cur.push(c),
        }
    }
    alts.push(cur);
    alts
}

/// Parses one alternative into its symbol sequence.
fn parse_symbols(alt: &str) -> Result<Vec<Symbol>, String> {
    let mut symbols = Vec::new();
    let mut rest = alt.trim_start();
    while !rest.is_empty() {
        let (kind, after) = parse_symbol_kind(rest)?;
        let (repeat, after) = match after.chars().next() {
            Some('?') => (Repeat::Optional, &after[1..]),
            Some('*') => (Repeat::Star, &after[1..]),
            Some('+') => (Repeat::Plus, &after[1..]),
            _ => (Repeat::Once, after),
        };
        symbols.push(Symbol { kind, repeat });
        let trimmed = after.trim_start();
        if trimmed.len() == after.len() && !after.is_empty() {
            return Err(format!("expected whitespace after symbol, got `{after}`"));
        }
        rest = trimmed;
    }
    Ok(symbols)
}

/// Parses one symbol at the head of `rest`; returns it and the remainder.
fn parse_symbol_kind(rest: &str) -> Result<(SymbolKind, &str), String> {
    if let Some(after) = rest.strip_prefix('"') {
        let (text, after) = take_quoted(after)?;
        return Ok((SymbolKind::Literal(text), after));
    }
    if let Some(after) = rest.strip_prefix("int(") {
        let Some(end) = after.find(')') else {
            return Err("unterminated int(...)".into());
        };
        let body = &after[..end];
        let Some((lo, hi)) = body.split_once(',') else {
            return Err(format!("expected int(lo,hi), got int({body})"));
        };
        let lo: i64 = lo.trim().parse().map_err(|_| format!("bad integer `{lo}`"))?;
        let hi: i64 = hi.trim().parse().map_err(|_| format!("bad integer `{hi}`"))?;
        if lo > hi {
            return Err(format!("empty range int({lo},{hi})"));
        }
        return Ok((SymbolKind::IntRange(lo, hi), &after[end + 1..]));
    }
    if let Some(after) = rest.strip_prefix("class([") {
        let Some(end) = after.find("])") else {
            return Err("unterminated class([...])".into());
        };
        let chars = parse_char_class(&after[..end])?;
        if chars.is_empty() {
            return Err("empty character class".into());
        }
        return Ok((
            SymbolKind::CharClass(CharClass::new(chars)),
            &after[end + 2..],
        ));
    }
    if let Some(after) = rest.strip_prefix("oneof(") {
        let mut alts = Vec::new();
        let mut cur = after;
        loop {
            let Some(open) = cur.strip_prefix('"') else {
                return Err(format!("expected quoted string in oneof, got `{cur}`"));
            };
            let (text, next) = take_quoted(open)?;
            alts.push(text);
            if let Some(next) = next.strip_prefix(',') {
                cur = next;
            } else if let Some(next) = next.strip_prefix(')') {
                return Ok((SymbolKind::OneOf(alts), next));
            } else {
                return Err(format!("expected , or ) in oneof, got `{next}`"));
            }
        }
    }
    let end = rest
        .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
        .unwrap_or(rest.len());
    let name = &rest[..end];
    if name.is_empty() || !is_ident(name) {
        return Err(format!("cannot parse symbol at `{rest}`"));
    }
    Ok((SymbolKind::Nonterminal(name.to_string()), &rest[end..]))
}

/// Reads up to the closing quote, handling `\"`, `\\`, `\n`, and `\t`.
fn take_quoted(s: &str) -> Result<(String, &str), String> {
    let mut out = String::new();
    let mut chars = s.char_indices();
    while let Some((i, c)) = chars.next() {
        match c {
            '"' => return Ok((out, &s[i + 1..])),
            '\\' => match chars.next() {
                Some((_, 'n')) => out.push('\n'),
                Some((_, 't')) => out.push('\t'),
                Some((_, c @ ('"' | '\\'))) => out.push(c),
                Some((_, c)) => return Err(format!("unknown escape \\{c}")),
                None => return Err("unterminated string".into()),
            },
            c => out.push(c),
        }
    }
    Err("unterminated string".into())
}

/// Parses the body of `class([...])`: plain characters and `a-z` ranges,
/// with `\\`, `\]`, `\-`, `\n`, `\t` escapes. Duplicates are dropped so
/// sampling stays uniform over distinct characters.
fn parse_char_class(body: &str) -> Result<Vec<char>, String> {
    let mut entries: Vec<char> = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    let mut push = |entries: &mut Vec<char>, c: char| {
        if seen.insert(c) {
            entries.push(c);
        }
    };
    let mut chars = body.chars().peekable();
    while let Some(c) = chars.next() {
        let c = if c == '\\' {
            match chars.next() {
                Some('n') => '\n',
                Some('t') => '\t',
                Some(e @ ('\\' | ']' | '-')) => e,
                Some(e) => return Err(format!("unknown escape \\{e}")),
                None => return Err("dangling escape in class".into()),
            }
        } else {
            c
        };
        if chars.peek() == Some(&'-') {
            let mut ahead = chars.clone();
            ahead.next();
            if let Some(hi) = ahead.next() {
                if hi != '\\' {
                    chars = ahead;
                    if c > hi {
                        return Err(format!("backwards range {c}-{hi}"));
                    }
                    for v in c as u32..=hi as u32 {
                        if let Some(ch) = char::from_u32(v) {
                            push(&mut entries, ch);
                        }
                    }
                    continue;
                }
            }
        }
        push(&mut entries, c);
    }
    Ok(entries)
}
