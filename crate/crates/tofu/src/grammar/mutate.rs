//! Structure-aware mutation of derivation trees.
//!
//! Every operator edits the tree at the granularity of grammar units, so
//! the result still conforms to the grammar and re-parses after rendering:
//!
//! * `replace_subtree` regrows a random nonterminal node from scratch,
//!   within the depth budget left at its position;
//! * `delete_optional` drops an element from a `?`, `*`, or `+` slot that
//!   has more than its minimum;
//! * `duplicate_repeated` clones an element of a `*` or `+` slot;
//! * `mutate_terminal` redraws one terminal leaf within its value class;
//! * `swap_siblings` exchanges two elements of the same repeated slot.
//!
//! A mutation call applies a small random number of operator applications.
//! When a drawn operator has no applicable site, another is drawn, up to a
//! bounded number of tries; a call where nothing applies returns the input
//! tree unchanged.

use rand::Rng;

use super::tree::{generate_nonterm, redraw_terminal, ChildSlot, GenerateConfig, TreeNode};
use super::{GrammarSpec, Repeat, SymbolKind};

/// Relative weights of the five operators. An operator with weight 0 is
/// never drawn.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OperatorWeights {
    pub replace_subtree: u32,
    pub delete_optional: u32,
    pub duplicate_repeated: u32,
    pub mutate_terminal: u32,
    pub swap_siblings: u32,
}

impl Default for OperatorWeights {
    fn default() -> Self {
        OperatorWeights {
            replace_subtree: 3,
            delete_optional: 2,
            duplicate_repeated: 2,
            mutate_terminal: 3,
            swap_siblings: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MutatorConfig {
    pub generate: GenerateConfig,
    /// Bounds for how many operator applications one `mutate` call stacks.
    pub min_mutations: usize,
    pub max_mutations: usize,
    pub weights: OperatorWeights,
}

impl Default for MutatorConfig {
    fn default() -> Self {
        MutatorConfig {
            generate: GenerateConfig::default(),
            min_mutations: 1,
            max_mutations: 3,
            weights: OperatorWeights::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Operator {
    ReplaceSubtree,
    DeleteOptional,
    DuplicateRepeated,
    MutateTerminal,
    SwapSiblings,
}

const OPERATOR_RETRIES: usize = 8;

/// Returns a mutant of `tree`. The input must conform to `spec`; the
/// output conforms as well.
pub fn mutate(
    tree: &TreeNode,
    spec: &GrammarSpec,
    config: &MutatorConfig,
    rng: &mut impl Rng,
) -> TreeNode {
    let mut work = tree.clone();
    let rounds = rng.random_range(config.min_mutations..=config.max_mutations.max(config.min_mutations));
    for _ in 0..rounds {
        for _ in 0..OPERATOR_RETRIES {
            let op = draw_operator(&config.weights, rng);
            if apply(&mut work, op, spec, config, rng) {
                break;
            }
        }
    }
    work
}

fn draw_operator(weights: &OperatorWeights, rng: &mut impl Rng) -> Operator {
    let table = [
        (Operator::ReplaceSubtree, weights.replace_subtree),
        (Operator::DeleteOptional, weights.delete_optional),
        (Operator::DuplicateRepeated, weights.duplicate_repeated),
        (Operator::MutateTerminal, weights.mutate_terminal),
        (Operator::SwapSiblings, weights.swap_siblings),
    ];
    let total: u64 = table.iter().map(|(_, w)| u64::from(*w)).sum();
    if total == 0 {
        return Operator::ReplaceSubtree;
    }
    let mut draw = rng.random_range(0..total);
    for (op, w) in table {
        let w = u64::from(w);
        if draw < w {
            return op;
        }
        draw -= w;
    }
    unreachable!("draw is below the weight total")
}

/// Path to a node: child slot index and, for repeated slots, the element
/// index within it.
type Path = Vec<(usize, Option<usize>)>;

fn node_at_path_mut<'a>(root: &'a mut TreeNode, path: &[(usize, Option<usize>)]) -> &'a mut TreeNode {
    let mut cur = root;
    for &(slot, elem) in path {
        let TreeNode::Nonterm(n) = cur else {
            unreachable!("paths only traverse nonterminal nodes");
        };
        cur = match (&mut n.children[slot], elem) {
            (ChildSlot::One(c), None) => c,
            (ChildSlot::Many(cs), Some(i)) => &mut cs[i],
            _ => unreachable!("path shape matches slot shape"),
        };
    }
    cur
}

fn apply(
    work: &mut TreeNode,
    op: Operator,
    spec: &GrammarSpec,
    config: &MutatorConfig,
    rng: &mut impl Rng,
) -> bool {
    match op {
        Operator::ReplaceSubtree => replace_subtree(work, spec, config, rng),
        Operator::DeleteOptional => delete_optional(work, spec, rng),
        Operator::DuplicateRepeated => duplicate_repeated(work, spec, rng),
        Operator::MutateTerminal => mutate_terminal(work, spec, rng),
        Operator::SwapSiblings => swap_siblings(work, spec, rng),
    }
}

/// Collects the paths of all nonterminal nodes, the root included.
fn nonterm_paths(node: &TreeNode, path: &mut Path, out: &mut Vec<Path>) {
    let TreeNode::Nonterm(n) = node else {
        return;
    };
    out.push(path.clone());
    for (i, slot) in n.children.iter().enumerate() {
        match slot {
            ChildSlot::One(c) => {
                path.push((i, None));
                nonterm_paths(c, path, out);
                path.pop();
            }
            ChildSlot::Many(cs) => {
                for (j, c) in cs.iter().enumerate() {
                    path.push((i, Some(j)));
                    nonterm_paths(c, path, out);
                    path.pop();
                }
            }
        }
    }
}

fn replace_subtree(
    work: &mut TreeNode,
    spec: &GrammarSpec,
    config: &MutatorConfig,
    rng: &mut impl Rng,
) -> bool {
    let mut paths = Vec::new();
    nonterm_paths(work, &mut Vec::new(), &mut paths);
    if paths.is_empty() {
        return false;
    }
    let path = &paths[rng.random_range(0..paths.len())];
    // the path length counts the nonterminal ancestors, which is how much
    // depth budget the position has already spent
    let budget = config.generate.max_depth.saturating_sub(path.len()).max(1);
    let slot = node_at_path_mut(work, path);
    let TreeNode::Nonterm(n) = slot else {
        unreachable!("collected paths point at nonterminal nodes");
    };
    let name = n.name.clone();
    *slot = TreeNode::Nonterm(generate_nonterm(spec, &name, budget, &config.generate, rng));
    true
}

/// Repeated-slot site: path to the owning node, slot index, element count,
/// and the slot's repetition kind.
struct SlotSite {
    path: Path,
    slot: usize,
    len: usize,
    repeat: Repeat,
}

fn slot_sites(node: &TreeNode, spec: &GrammarSpec, path: &mut Path, out: &mut Vec<SlotSite>) {
    let TreeNode::Nonterm(n) = node else {
        return;
    };
    let prod = &spec.rules[n.name.as_str()][n.production];
    for (i, slot) in n.children.iter().enumerate() {
        match slot {
            ChildSlot::One(c) => {
                path.push((i, None));
                slot_sites(c, spec, path, out);
                path.pop();
            }
            ChildSlot::Many(cs) => {
                out.push(SlotSite {
                    path: path.clone(),
                    slot: i,
                    len: cs.len(),
                    repeat: prod.symbols[i].repeat,
                });
                for (j, c) in cs.iter().enumerate() {
                    path.push((i, Some(j)));
                    slot_sites(c, spec, path, out);
                    path.pop();
                }
            }
        }
    }
}

fn many_slot<'a>(work: &'a mut TreeNode, site: &SlotSite) -> &'a mut Vec<TreeNode> {
    let node = node_at_path_mut(work, &site.path);
    let TreeNode::Nonterm(n) = node else {
        unreachable!("slot sites live under nonterminal nodes");
    };
    let ChildSlot::Many(cs) = &mut n.children[site.slot] else {
        unreachable!("slot sites point at repeated slots");
    };
    cs
}

fn delete_optional(work: &mut TreeNode, spec: &GrammarSpec, rng: &mut impl Rng) -> bool {
    let mut sites = Vec::new();
    slot_sites(work, spec, &mut Vec::new(), &mut sites);
    sites.retain(|s| s.len > s.repeat.min_count());
    if sites.is_empty() {
        return false;
    }
    let site = &sites[rng.random_range(0..sites.len())];
    let idx = rng.random_range(0..site.len);
    many_slot(work, site).remove(idx);
    true
}

fn duplicate_repeated(work: &mut TreeNode, spec: &GrammarSpec, rng: &mut impl Rng) -> bool {
    let mut sites = Vec::new();
    slot_sites(work, spec, &mut Vec::new(), &mut sites);
    // `?` slots cap at one element, so only `*` and `+` can grow
    sites.retain(|s| s.len >= 1 && matches!(s.repeat, Repeat::Star | Repeat::Plus));
    if sites.is_empty() {
        return false;
    }
    let site = &sites[rng.random_range(0..sites.len())];
    let idx = rng.random_range(0..site.len);
    let slot = many_slot(work, site);
    let copy = slot[idx].clone();
    slot.insert(idx + 1, copy);
    true
}

fn swap_siblings(work: &mut TreeNode, spec: &GrammarSpec, rng: &mut impl Rng) -> bool {
    let mut sites = Vec::new();
    slot_sites(work, spec, &mut Vec::new(), &mut sites);
    sites.retain(|s| s.len >= 2);
    if sites.is_empty() {
        return false;
    }
    let site = &sites[rng.random_range(0..sites.len())];
    let a = rng.random_range(0..site.len);
    let b = {
        let b = rng.random_range(0..site.len - 1);
        if b >= a {
            b + 1
        } else {
            b
        }
    };
    many_slot(work, site).swap(a, b);
    true
}

/// Terminal-leaf site: path to the leaf and the symbol kind governing it.
fn terminal_sites(
    node: &TreeNode,
    spec: &GrammarSpec,
    path: &mut Path,
    out: &mut Vec<(Path, SymbolKind)>,
) {
    let TreeNode::Nonterm(n) = node else {
        return;
    };
    let prod = &spec.rules[n.name.as_str()][n.production];
    for (i, slot) in n.children.iter().enumerate() {
        let kind = &prod.symbols[i].kind;
        let visit = |c: &TreeNode, step: (usize, Option<usize>), path: &mut Path, out: &mut Vec<_>| {
            path.push(step);
            match c {
                TreeNode::Leaf(_) => {
                    if kind.is_mutable_terminal() {
                        out.push((path.clone(), kind.clone()));
                    }
                }
                TreeNode::Nonterm(_) => terminal_sites(c, spec, path, out),
            }
            path.pop();
        };
        match slot {
            ChildSlot::One(c) => visit(c, (i, None), path, out),
            ChildSlot::Many(cs) => {
                for (j, c) in cs.iter().enumerate() {
                    visit(c, (i, Some(j)), path, out);
                }
            }
        }
    }
}

fn mutate_terminal(work: &mut TreeNode, spec: &GrammarSpec, rng: &mut impl Rng) -> bool {
    let mut sites = Vec::new();
    terminal_sites(work, spec, &mut Vec::new(), &mut sites);
    if sites.is_empty() {
        return false;
    }
    let (path, kind) = &sites[rng.random_range(0..sites.len())];
    let leaf = node_at_path_mut(work, path);
    let TreeNode::Leaf(text) = leaf else {
        unreachable!("terminal sites point at leaves");
    };
    *text = redraw_terminal(kind, text, rng);
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::{
        conforms, depth, generate, parse, parse_grammar_text, render, DEFAULT_PARSE_STEPS,
    };
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn spec(text: &str) -> GrammarSpec {
        parse_grammar_text(text, "test").unwrap()
    }

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn only(op: fn(&mut OperatorWeights)) -> MutatorConfig {
        let mut weights = OperatorWeights {
            replace_subtree: 0,
            delete_optional: 0,
            duplicate_repeated: 0,
            mutate_terminal: 0,
            swap_siblings: 0,
        };
        op(&mut weights);
        MutatorConfig {
            min_mutations: 1,
            max_mutations: 1,
            weights,
            ..MutatorConfig::default()
        }
    }

    fn repeat_grammar() -> GrammarSpec {
        spec("start File\nFile -> Line+\nLine -> Word \"\\n\"\nWord -> class([a-z])+\n")
    }

    fn line_count(t: &TreeNode) -> usize {
        match t {
            TreeNode::Nonterm(n) => match &n.children[0] {
                ChildSlot::Many(items) => items.len(),
                ChildSlot::One(_) => panic!("File slot should be Many"),
            },
            TreeNode::Leaf(_) => panic!("leaf root"),
        }
    }

    #[test]
    fn duplicate_grows_a_repeated_slot() {
        let g = repeat_grammar();
        let config = only(|w| w.duplicate_repeated = 1);
        let mut r = rng(3);
        let tree = generate(&g, &config.generate, &mut r);
        let before = line_count(&tree);
        let mut grew = false;
        for _ in 0..20 {
            let m = mutate(&tree, &g, &config, &mut r);
            assert_eq!(conforms(&m, &g), Ok(()));
            let after = line_count(&m);
            assert!(after == before || after == before + 1);
            if after == before + 1 {
                grew = true;
            }
        }
        assert!(grew, "duplicate never fired in 20 attempts");
    }

    #[test]
    fn delete_shrinks_a_slot_but_never_below_its_minimum() {
        let g = repeat_grammar();
        let config = only(|w| w.delete_optional = 1);
        let mut r = rng(4);
        // grow a tree with several lines first
        let seed_tree = loop {
            let t = generate(&g, &config.generate, &mut r);
            if line_count(&t) >= 2 {
                break t;
            }
        };
        let before = line_count(&seed_tree);
        let mut shrank = false;
        for _ in 0..20 {
            let m = mutate(&seed_tree, &g, &config, &mut r);
            assert_eq!(conforms(&m, &g), Ok(()));
            assert!(line_count(&m) >= 1, "deleted below the Plus minimum");
            if line_count(&m) < before {
                shrank = true;
            }
        }
        assert!(shrank, "delete never fired in 20 attempts");
    }

    #[test]
    fn delete_leaves_a_minimal_tree_alone() {
        // nothing is optional or repeated here, so delete can never apply
        let g = spec("start S\nS -> \"a\"\n");
        let config = only(|w| w.delete_optional = 1);
        let mut r = rng(5);
        let tree = generate(&g, &config.generate, &mut r);
        let m = mutate(&tree, &g, &config, &mut r);
        assert_eq!(m, tree);
    }

    #[test]
    fn terminal_redraw_changes_only_leaf_text() {
        let g = spec("start S\nS -> class([ab]) class([ab]) class([ab])\n");
        let config = only(|w| w.mutate_terminal = 1);
        let mut r = rng(6);
        let tree = generate(&g, &config.generate, &mut r);
        let mut changed = false;
        for _ in 0..20 {
            let m = mutate(&tree, &g, &config, &mut r);
            assert_eq!(conforms(&m, &g), Ok(()));
            assert_eq!(depth(&m), depth(&tree));
            if render(&m) != render(&tree) {
                changed = true;
            }
        }
        assert!(changed, "terminal redraw never changed anything");
    }

    #[test]
    fn swap_reorders_siblings_within_a_slot() {
        let g = spec("start S\nS -> class([az])+\n");
        let config = only(|w| w.swap_siblings = 1);
        let mut r = rng(2);
        let tree = loop {
            let t = generate(&g, &config.generate, &mut r);
            if render(&t).contains('a') && render(&t).contains('z') {
                break t;
            }
        };
        let before = render(&tree);
        let mut reordered = false;
        for _ in 0..40 {
            let m = mutate(&tree, &g, &config, &mut r);
            assert_eq!(conforms(&m, &g), Ok(()));
            let after = render(&m);
            let mut sorted_before: Vec<char> = before.chars().collect();
            let mut sorted_after: Vec<char> = after.chars().collect();
            sorted_before.sort_unstable();
            sorted_after.sort_unstable();
            // swapping permutes, never adds or drops
            assert_eq!(sorted_before, sorted_after);
            if after != before {
                reordered = true;
            }
        }
        assert!(reordered, "swap never produced a new order");
    }

    #[test]
    fn replace_regrows_a_conforming_subtree() {
        let g = repeat_grammar();
        let config = only(|w| w.replace_subtree = 1);
        let mut r = rng(7);
        let tree = generate(&g, &config.generate, &mut r);
        for _ in 0..20 {
            let m = mutate(&tree, &g, &config, &mut r);
            assert_eq!(conforms(&m, &g), Ok(()));
        }
    }

    #[test]
    fn zero_weights_fall_back_to_replace() {
        let g = repeat_grammar();
        let config = only(|_| {});
        let mut r = rng(8);
        let tree = generate(&g, &config.generate, &mut r);
        let mut differed = false;
        for _ in 0..20 {
            let m = mutate(&tree, &g, &config, &mut r);
            assert_eq!(conforms(&m, &g), Ok(()));
            if m != tree {
                differed = true;
            }
        }
        assert!(differed, "fallback operator never changed the tree");
    }

    proptest! {
        #[test]
        fn mutants_conform_and_reparse(seed in 0u64..500) {
            let g = repeat_grammar();
            let config = MutatorConfig::default();
            let mut r = rng(seed);
            let tree = generate(&g, &config.generate, &mut r);
            let m = mutate(&tree, &g, &config, &mut r);
            prop_assert_eq!(conforms(&m, &g), Ok(()));
            let rendered = render(&m);
            prop_assert!(parse(&rendered, &g, DEFAULT_PARSE_STEPS).is_ok(),
                "mutant failed to reparse: {:?}", rendered);
        }

        #[test]
        fn mutants_of_palindromes_stay_in_the_language(seed in 0u64..500) {
            let g = spec("start S\nS -> \"a\" S \"a\" | \"b\" S \"b\" | \"\"\n");
            let config = MutatorConfig::default();
            let mut r = rng(seed);
            let tree = generate(&g, &config.generate, &mut r);
            let m = mutate(&tree, &g, &config, &mut r);
            let rendered = render(&m);
            let back = rendered.chars().rev().collect::<String>();
            prop_assert_eq!(&rendered, &back, "mutant is not a palindrome");
        }
    }
}
