//! Derivation trees and their basic operations.
//!
//! A tree records which production expanded each nonterminal and, for every
//! symbol of that production, the child (or repeated children) it produced.
//! Rendering concatenates the leaf texts left to right; the structure
//! exists so mutation can work on whole grammatical units.

use rand::Rng;

use super::{GrammarSpec, Repeat, Symbol, SymbolKind};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TreeNode {
    Nonterm(NontermNode),
    Leaf(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NontermNode {
    pub name: String,
    /// Index into the nonterminal's production list.
    pub production: usize,
    /// One slot per symbol of the production.
    pub children: Vec<ChildSlot>,
}

/// Children produced by one symbol occurrence. `Once` symbols fill a
/// [`ChildSlot::One`]; `?`, `*`, and `+` symbols fill a [`ChildSlot::Many`]
/// whose length reflects how often the symbol repeated.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ChildSlot {
    One(TreeNode),
    Many(Vec<TreeNode>),
}

/// Concatenated leaf text of the tree.
pub fn render(node: &TreeNode) -> String {
    let mut out = String::new();
    render_into(node, &mut out);
    out
}

fn render_into(node: &TreeNode, out: &mut String) {
    match node {
        TreeNode::Leaf(text) => out.push_str(text),
        TreeNode::Nonterm(n) => {
            for slot in &n.children {
                match slot {
                    ChildSlot::One(c) => render_into(c, out),
                    ChildSlot::Many(cs) => {
                        for c in cs {
                            render_into(c, out);
                        }
                    }
                }
            }
        }
    }
}

/// Nesting depth: leaves are 0, a nonterminal node is 1 plus its deepest
/// child (1 when it has no children at all).
pub fn depth(node: &TreeNode) -> usize {
    match node {
        TreeNode::Leaf(_) => 0,
        TreeNode::Nonterm(n) => {
            let mut deepest = 0;
            for slot in &n.children {
                let ds = match slot {
                    ChildSlot::One(c) => depth(c),
                    ChildSlot::Many(cs) => cs.iter().map(depth).max().unwrap_or(0),
                };
                deepest = deepest.max(ds);
            }
            1 + deepest
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ConformError {
    #[error("node expands unknown nonterminal {0}")]
    UnknownNonterminal(String),
    #[error("{nonterminal} has no production {production}")]
    BadProduction {
        nonterminal: String,
        production: usize,
    },
    #[error("{nonterminal} production {production}: expected {expected} child slots, found {found}")]
    SlotCount {
        nonterminal: String,
        production: usize,
        expected: usize,
        found: usize,
    },
    #[error("{nonterminal} child {slot}: slot shape does not match the symbol's repetition")]
    SlotShape { nonterminal: String, slot: usize },
    #[error("{nonterminal} child {slot}: {count} elements violates the repetition bounds")]
    SlotLength {
        nonterminal: String,
        slot: usize,
        count: usize,
    },
    #[error("{nonterminal} child {slot}: child does not match symbol")]
    ChildMismatch { nonterminal: String, slot: usize },
    #[error("leaf `{text}` is not a valid {expected}")]
    BadLeaf { text: String, expected: String },
    #[error("tree root must be a nonterminal node")]
    LeafRoot,
}

/// Checks that the tree is a well-formed derivation under `spec`.
///
/// The root may expand any nonterminal, not just the start symbol; mutation
/// verifies regrown subtrees with the same routine.
pub fn conforms(node: &TreeNode, spec: &GrammarSpec) -> Result<(), ConformError> {
    match node {
        TreeNode::Leaf(_) => Err(ConformError::LeafRoot),
        TreeNode::Nonterm(n) => conform_nonterm(n, spec),
    }
}

fn conform_nonterm(n: &NontermNode, spec: &GrammarSpec) -> Result<(), ConformError> {
    let prods = spec
        .rules
        .get(&n.name)
        .ok_or_else(|| ConformError::UnknownNonterminal(n.name.clone()))?;
    let prod = prods.get(n.production).ok_or(ConformError::BadProduction {
        nonterminal: n.name.clone(),
        production: n.production,
    })?;
    if n.children.len() != prod.symbols.len() {
        return Err(ConformError::SlotCount {
            nonterminal: n.name.clone(),
            production: n.production,
            expected: prod.symbols.len(),
            found: n.children.len(),
        });
    }
    for (i, (slot, sym)) in n.children.iter().zip(&prod.symbols).enumerate() {
        let elems: Vec<&TreeNode> = match (slot, sym.repeat) {
            (ChildSlot::One(c), Repeat::Once) => vec![c],
            (ChildSlot::Many(cs), Repeat::Optional) if cs.len() <= 1 => cs.iter().collect(),
            (ChildSlot::Many(cs), Repeat::Star) => cs.iter().collect(),
            (ChildSlot::Many(cs), Repeat::Plus) if !cs.is_empty() => cs.iter().collect(),
            (ChildSlot::Many(cs), Repeat::Optional | Repeat::Plus) => {
                return Err(ConformError::SlotLength {
                    nonterminal: n.name.clone(),
                    slot: i,
                    count: cs.len(),
                })
            }
            _ => {
                return Err(ConformError::SlotShape {
                    nonterminal: n.name.clone(),
                    slot: i,
                })
            }
        };
        for elem in elems {
            conform_element(elem, &sym.kind, spec).map_err(|e| match e {
                ConformError::ChildMismatch { .. } => ConformError::ChildMismatch {
                    nonterminal: n.name.clone(),
                    slot: i,
                },
                other => other,
            })?;
        }
    }
    Ok(())
}

fn conform_element(
    elem: &TreeNode,
    kind: &SymbolKind,
    spec: &GrammarSpec,
) -> Result<(), ConformError> {
    let mismatch = || ConformError::ChildMismatch {
        nonterminal: String::new(),
        slot: 0,
    };
    let bad_leaf = |text: &str, expected: String| ConformError::BadLeaf {
        text: text.to_string(),
        expected,
    };
    match (elem, kind) {
        (TreeNode::Nonterm(c), SymbolKind::Nonterminal(name)) => {
            if &c.name != name {
                return Err(mismatch());
            }
            conform_nonterm(c, spec)
        }
        (TreeNode::Leaf(text), SymbolKind::Literal(lit)) => {
            if text == lit {
                Ok(())
            } else {
                Err(bad_leaf(text, format!("literal \"{lit}\"")))
            }
        }
        (TreeNode::Leaf(text), SymbolKind::IntRange(lo, hi)) => match text.parse::<i64>() {
            Ok(v) if (*lo..=*hi).contains(&v) => Ok(()),
            _ => Err(bad_leaf(text, format!("int({lo},{hi})"))),
        },
        (TreeNode::Leaf(text), SymbolKind::CharClass(class)) => {
            let mut chars = text.chars();
            match (chars.next(), chars.next()) {
                (Some(c), None) if class.contains(c) => Ok(()),
                _ => Err(bad_leaf(text, "class character".into())),
            }
        }
        (TreeNode::Leaf(text), SymbolKind::OneOf(alts)) => {
            if alts.iter().any(|a| a == text) {
                Ok(())
            } else {
                Err(bad_leaf(text, "oneof alternative".into()))
            }
        }
        _ => Err(mismatch()),
    }
}

/// Knobs for generation and mutation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenerateConfig {
    /// Depth budget. Generation picks only productions that can finish
    /// within the remaining budget, falling back to the shallowest
    /// production when none fits.
    pub max_depth: usize,
    /// Upper bound on how many elements a `*` or `+` symbol draws.
    pub max_repeat: usize,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        GenerateConfig {
            max_depth: 12,
            max_repeat: 3,
        }
    }
}

/// Generates a random derivation tree for the start symbol.
///
/// The result always conforms to `spec`. Its depth stays within
/// `config.max_depth` whenever the grammar can derive anything that
/// shallow; otherwise it stays at the grammar's own minimum.
pub fn generate(spec: &GrammarSpec, config: &GenerateConfig, rng: &mut impl Rng) -> TreeNode {
    let budget = config.max_depth.max(spec.min_depth(&spec.start));
    TreeNode::Nonterm(generate_nonterm(spec, &spec.start, budget, config, rng))
}

/// Generates a subtree for one nonterminal under a depth budget. Used by
/// mutation to regrow subtrees in place.
pub fn generate_nonterm(
    spec: &GrammarSpec,
    name: &str,
    budget: usize,
    config: &GenerateConfig,
    rng: &mut impl Rng,
) -> NontermNode {
    let budget = budget.max(spec.min_depth(name));
    let prods = &spec.rules[name];
    let eligible: Vec<usize> = (0..prods.len())
        .filter(|&i| spec.production_min_depth(&prods[i]) <= budget)
        .collect();
    let production = if eligible.is_empty() {
        // unreachable once budget is clamped to min_depth, kept as a guard
        (0..prods.len())
            .min_by_key(|&i| spec.production_min_depth(&prods[i]))
            .expect("nonterminal has productions")
    } else {
        eligible[rng.random_range(0..eligible.len())]
    };
    let prod = &prods[production];
    let child_budget = budget.saturating_sub(1);
    let children = prod
        .symbols
        .iter()
        .map(|sym| generate_slot(spec, sym, child_budget, config, rng))
        .collect();
    NontermNode {
        name: name.to_string(),
        production,
        children,
    }
}

fn generate_slot(
    spec: &GrammarSpec,
    sym: &Symbol,
    budget: usize,
    config: &GenerateConfig,
    rng: &mut impl Rng,
) -> ChildSlot {
    // an element only fits if it can stay inside the remaining budget
    let fits = match &sym.kind {
        SymbolKind::Nonterminal(m) => spec.min_depth(m) <= budget,
        _ => true,
    };
    match sym.repeat {
        Repeat::Once => ChildSlot::One(generate_element(spec, &sym.kind, budget, config, rng)),
        Repeat::Optional => {
            let include = fits && rng.random_bool(0.5);
            let elems = if include {
                vec![generate_element(spec, &sym.kind, budget, config, rng)]
            } else {
                Vec::new()
            };
            ChildSlot::Many(elems)
        }
        Repeat::Star => {
            let count = if fits {
                rng.random_range(0..=config.max_repeat)
            } else {
                0
            };
            ChildSlot::Many(
                (0..count)
                    .map(|_| generate_element(spec, &sym.kind, budget, config, rng))
                    .collect(),
            )
        }
        Repeat::Plus => {
            let count = rng.random_range(1..=config.max_repeat.max(1));
            ChildSlot::Many(
                (0..count)
                    .map(|_| generate_element(spec, &sym.kind, budget, config, rng))
                    .collect(),
            )
        }
    }
}

fn generate_element(
    spec: &GrammarSpec,
    kind: &SymbolKind,
    budget: usize,
    config: &GenerateConfig,
    rng: &mut impl Rng,
) -> TreeNode {
    match kind {
        SymbolKind::Nonterminal(m) => {
            TreeNode::Nonterm(generate_nonterm(spec, m, budget, config, rng))
        }
        SymbolKind::Literal(lit) => TreeNode::Leaf(lit.clone()),
        SymbolKind::IntRange(lo, hi) => {
            TreeNode::Leaf(rng.random_range(*lo..=*hi).to_string())
        }
        SymbolKind::CharClass(class) => {
            let chars = class.chars();
            TreeNode::Leaf(chars[rng.random_range(0..chars.len())].to_string())
        }
        SymbolKind::OneOf(alts) => {
            TreeNode::Leaf(alts[rng.random_range(0..alts.len())].clone())
        }
    }
}

/// Redraws a terminal value for `kind`, avoiding `current` when the kind
/// has another value to offer.
pub fn redraw_terminal(kind: &SymbolKind, current: &str, rng: &mut impl Rng) -> String {
    for _ in 0..8 {
        let candidate = match kind {
            SymbolKind::IntRange(lo, hi) => rng.random_range(*lo..=*hi).to_string(),
            SymbolKind::CharClass(class) => {
                let chars = class.chars();
                chars[rng.random_range(0..chars.len())].to_string()
            }
            SymbolKind::OneOf(alts) => alts[rng.random_range(0..alts.len())].clone(),
            SymbolKind::Literal(lit) => lit.clone(),
            SymbolKind::Nonterminal(_) => current.to_string(),
        };
        if candidate != current {
            return candidate;
        }
    }
    current.to_string()
}
