//! Recursive-descent parsing of text back into a derivation tree.
//!
//! The parser backtracks across production alternatives, repetition counts
//! (greedy first), and ambiguous terminals, and accepts only when the whole
//! input is consumed. Every attempted expansion costs one step from a
//! budget, which turns pathological grammars into a clean error instead of
//! runaway time. Repetition elements that consume nothing are rejected to
//! keep nullable elements from repeating forever.
//!
//! On success, rendering the returned tree reproduces the input exactly.

use super::tree::{ChildSlot, NontermNode, TreeNode};
use super::{GrammarSpec, Symbol, SymbolKind};

/// Step budget that comfortably covers the inputs this crate deals in.
pub const DEFAULT_PARSE_STEPS: usize = 200_000;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ParseError {
    /// No derivation of the start symbol covers the whole input. `furthest`
    /// is the deepest byte offset any attempt reached.
    #[error("input does not match the grammar (parse stuck at byte {furthest})")]
    Syntax { furthest: usize },
    /// The step budget ran out before the search space was exhausted.
    #[error("parse gave up after {steps} steps")]
    Budget { steps: usize },
}

struct Parser<'g> {
    spec: &'g GrammarSpec,
    text: &'g str,
    steps_left: usize,
    exhausted: bool,
    furthest: usize,
}

/// Continuation result: `true` aborts the search because a full parse was
/// found; `false` keeps backtracking.
type NodeCont<'r, 'g> = &'r mut dyn FnMut(&mut Parser<'g>, TreeNode, usize) -> bool;

impl<'g> Parser<'g> {
    fn step(&mut self) -> bool {
        if self.steps_left == 0 {
            self.exhausted = true;
            return false;
        }
        self.steps_left -= 1;
        true
    }

    fn note(&mut self, pos: usize) {
        self.furthest = self.furthest.max(pos);
    }

    /// Matches one occurrence of `kind` at `pos`, feeding each candidate
    /// match to `k` until one leads to a full parse.
    fn parse_element(&mut self, kind: &SymbolKind, pos: usize, k: NodeCont<'_, 'g>) -> bool {
        if !self.step() {
            return false;
        }
        match kind {
            SymbolKind::Literal(lit) => {
                if self.text[pos..].starts_with(lit.as_str()) {
                    k(self, TreeNode::Leaf(lit.clone()), pos + lit.len())
                } else {
                    self.note(pos);
                    false
                }
            }
            SymbolKind::CharClass(class) => match self.text[pos..].chars().next() {
                Some(c) if class.contains(c) => {
                    k(self, TreeNode::Leaf(c.to_string()), pos + c.len_utf8())
                }
                _ => {
                    self.note(pos);
                    false
                }
            },
            SymbolKind::OneOf(alts) => {
                for alt in alts {
                    if self.text[pos..].starts_with(alt.as_str())
                        && k(self, TreeNode::Leaf(alt.clone()), pos + alt.len())
                    {
                        return true;
                    }
                }
                self.note(pos);
                false
            }
            SymbolKind::IntRange(lo, hi) => {
                let rest = self.text[pos..].as_bytes();
                let mut len = 0;
                if rest.first() == Some(&b'-') {
                    len = 1;
                }
                while len < rest.len() && rest[len].is_ascii_digit() {
                    len += 1;
                }
                // longest match first; shorter prefixes are real
                // alternatives when the continuation wants more digits
                for l in (1..=len).rev() {
                    let prefix = &self.text[pos..pos + l];
                    let Ok(v) = prefix.parse::<i64>() else {
                        continue;
                    };
                    if (*lo..=*hi).contains(&v)
                        && k(self, TreeNode::Leaf(prefix.to_string()), pos + l)
                    {
                        return true;
                    }
                }
                self.note(pos);
                false
            }
            SymbolKind::Nonterminal(name) => {
                let prods = &self.spec.rules[name.as_str()];
                for production in 0..prods.len() {
                    let mut slots = Vec::new();
                    let matched = self.parse_seq(
                        &prods[production].symbols,
                        0,
                        pos,
                        &mut slots,
                        &mut |p, slots, end| {
                            let node = TreeNode::Nonterm(NontermNode {
                                name: name.clone(),
                                production,
                                children: slots.clone(),
                            });
                            k(p, node, end)
                        },
                    );
                    if matched {
                        return true;
                    }
                }
                false
            }
        }
    }

    /// Matches `symbols[from..]` starting at `pos`. `slots` accumulates the
    /// child slots already matched; it is restored on backtrack.
    fn parse_seq(
        &mut self,
        symbols: &[Symbol],
        from: usize,
        pos: usize,
        slots: &mut Vec<ChildSlot>,
        k: &mut dyn FnMut(&mut Self, &mut Vec<ChildSlot>, usize) -> bool,
    ) -> bool {
        if !self.step() {
            return false;
        }
        let Some(sym) = symbols.get(from) else {
            return k(self, slots, pos);
        };
        match sym.repeat {
            super::Repeat::Once => self.parse_element(&sym.kind, pos, &mut |p, node, end| {
                slots.push(ChildSlot::One(node));
                let done = p.parse_seq(symbols, from + 1, end, slots, k);
                if !done {
                    slots.pop();
                }
                done
            }),
            super::Repeat::Optional => {
                // present first, so the longer interpretation wins
                let present = self.parse_element(&sym.kind, pos, &mut |p, node, end| {
                    if end == pos {
                        return false;
                    }
                    slots.push(ChildSlot::Many(vec![node]));
                    let done = p.parse_seq(symbols, from + 1, end, slots, k);
                    if !done {
                        slots.pop();
                    }
                    done
                });
                if present {
                    return true;
                }
                slots.push(ChildSlot::Many(Vec::new()));
                let done = self.parse_seq(symbols, from + 1, pos, slots, k);
                if !done {
                    slots.pop();
                }
                done
            }
            super::Repeat::Star | super::Repeat::Plus => {
                let mut elems = Vec::new();
                self.parse_rep(
                    &sym.kind,
                    sym.repeat.min_count(),
                    pos,
                    &mut elems,
                    &mut |p, elems, end| {
                        slots.push(ChildSlot::Many(elems.clone()));
                        let done = p.parse_seq(symbols, from + 1, end, slots, k);
                        if !done {
                            slots.pop();
                        }
                        done
                    },
                )
            }
        }
    }

    /// Matches as many repetition elements as possible, then yields shorter
    /// counts down to `min_needed` while the continuation keeps failing.
    fn parse_rep(
        &mut self,
        kind: &SymbolKind,
        min_needed: usize,
        pos: usize,
        elems: &mut Vec<TreeNode>,
        k: &mut dyn FnMut(&mut Self, &mut Vec<TreeNode>, usize) -> bool,
    ) -> bool {
        if !self.step() {
            return false;
        }
        let extended = self.parse_element(kind, pos, &mut |p, node, end| {
            // elements that consume nothing are only admitted while the
            // minimum count still demands them; otherwise they would
            // repeat forever
            if end == pos && min_needed == 0 {
                return false;
            }
            elems.push(node);
            let done = p.parse_rep(kind, min_needed.saturating_sub(1), end, elems, k);
            if !done {
                elems.pop();
            }
            done
        });
        if extended {
            return true;
        }
        if min_needed == 0 {
            k(self, elems, pos)
        } else {
            false
        }
    }
}

/// Parses `text` as a derivation of the start symbol, using at most
/// `max_steps` expansion attempts.
pub fn parse(text: &str, spec: &GrammarSpec, max_steps: usize) -> Result<TreeNode, ParseError> {
    let mut parser = Parser {
        spec,
        text,
        steps_left: max_steps,
        exhausted: false,
        furthest: 0,
    };
    let mut result: Option<TreeNode> = None;
    let start = SymbolKind::Nonterminal(spec.start.clone());
    parser.parse_element(&start, 0, &mut |p, node, end| {
        if end == text.len() {
            result = Some(node);
            true
        } else {
            p.note(end);
            false
        }
    });
    match result {
        Some(tree) => Ok(tree),
        None if parser.exhausted => Err(ParseError::Budget { steps: max_steps }),
        None => Err(ParseError::Syntax {
            furthest: parser.furthest,
        }),
    }
}
