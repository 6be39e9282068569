//! Lowering of the interprocedural graph into the weighted search graph.
//!
//! Weights count branch choices:
//!
//! * an intra edge costs 1 exactly when its source has two or more intra
//!   successors, 0 otherwise;
//! * every block gets a free arc to its immediate post-dominator, because
//!   execution ends up there no matter which branch was picked;
//! * a call edge costs 1 only when the site has several possible callees
//!   (so picking one is a choice), 0 when the callee is unique;
//! * return edges cost 0;
//! * call edges into functions that cannot lead to any target, and call
//!   edges from functions unreachable from the entry function, cost
//!   infinity regardless of callee count.
//!
//! Arcs between the same pair of blocks collapse to their minimum weight:
//! a branch edge whose destination is also the source's post-dominator is
//! effectively free.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use super::postdom::{compute_immediate_post_dominators, PostDom};
use super::{BlockId, CallTarget, EdgeKind, Icfg, IcfgError, TargetSpec, Weight, WeightedGraph};

/// Set of functions reachable from `seeds` over `adjacency`, seeds included.
fn closure(
    adjacency: &BTreeMap<&str, BTreeSet<&str>>,
    seeds: impl IntoIterator<Item = String>,
) -> BTreeSet<String> {
    let mut reach: BTreeSet<String> = BTreeSet::new();
    let mut queue: VecDeque<String> = seeds.into_iter().collect();
    while let Some(f) = queue.pop_front() {
        if !reach.insert(f.clone()) {
            continue;
        }
        if let Some(next) = adjacency.get(f.as_str()) {
            for n in next {
                if !reach.contains(*n) {
                    queue.push_back((*n).to_string());
                }
            }
        }
    }
    reach
}

fn add_arc(arcs: &mut BTreeMap<(BlockId, BlockId), Weight>, src: BlockId, dst: BlockId, w: Weight) {
    // Weight derives Ord with Zero < One < Infinite, so min keeps the
    // cheapest interpretation of a parallel arc.
    arcs.entry((src, dst))
        .and_modify(|cur| *cur = (*cur).min(w))
        .or_insert(w);
}

/// Builds the weighted search graph for the given targets.
///
/// All indirect call sites must have been resolved first.
pub fn build_weighted_graph(
    icfg: &Icfg,
    targets: &TargetSpec,
) -> Result<WeightedGraph, IcfgError> {
    for site in &icfg.call_sites {
        if matches!(site.target, CallTarget::Indirect { .. }) {
            return Err(IcfgError::Invalid(format!(
                "unresolved indirect call at {}",
                site.block
            )));
        }
    }
    targets.validate(icfg)?;

    let mut owner: BTreeMap<&BlockId, &str> = BTreeMap::new();
    for f in icfg.functions.values() {
        for b in &f.blocks {
            owner.insert(b, &f.name);
        }
    }

    let mut arcs: BTreeMap<(BlockId, BlockId), Weight> = BTreeMap::new();

    // Intra edges: 1 per real branch choice, 0 on straight-line flow.
    let mut intra_out: BTreeMap<&BlockId, usize> = BTreeMap::new();
    for e in &icfg.edges {
        if e.kind == EdgeKind::Intra {
            *intra_out.entry(&e.src).or_insert(0) += 1;
        }
    }
    for e in &icfg.edges {
        if e.kind != EdgeKind::Intra {
            continue;
        }
        let w = if intra_out[&e.src] >= 2 {
            Weight::One
        } else {
            Weight::Zero
        };
        add_arc(&mut arcs, e.src.clone(), e.dst.clone(), w);
    }

    // Post-dominator shortcuts. Arcs to the virtual sink are dropped: the
    // sink is not part of the search space.
    for name in icfg.functions.keys() {
        for (block, pd) in compute_immediate_post_dominators(icfg, name)? {
            if let PostDom::Block(p) = pd {
                add_arc(&mut arcs, block, p, Weight::Zero);
            }
        }
    }

    // Call-graph reachability for the pruning rule. A call into a function
    // is only useful if that function can (transitively) call into one
    // holding a target, and if the caller is reachable from main at all.
    let mut forward_calls: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    let mut reverse_calls: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for site in &icfg.call_sites {
        let caller = owner[&site.block];
        if let CallTarget::Direct(callees) = &site.target {
            for callee in callees {
                forward_calls.entry(caller).or_default().insert(callee);
                reverse_calls.entry(callee).or_default().insert(caller);
            }
        }
    }

    let target_functions: BTreeSet<String> = targets
        .targets
        .iter()
        .map(|t| owner[t].to_string())
        .collect();
    let relevant = closure(&reverse_calls, target_functions);
    let from_main = closure(&forward_calls, [icfg.main.clone()]);

    for site in &icfg.call_sites {
        let CallTarget::Direct(callees) = &site.target else {
            unreachable!("checked above");
        };
        if callees.is_empty() {
            continue;
        }
        let caller = owner[&site.block];
        let base = if callees.len() == 1 {
            Weight::Zero
        } else {
            Weight::One
        };
        for callee in callees {
            let entry = icfg.functions[callee].entry.clone();
            let w = if !relevant.contains(callee) || !from_main.contains(caller) {
                Weight::Infinite
            } else {
                base
            };
            add_arc(&mut arcs, site.block.clone(), entry, w);
            for exit in &icfg.functions[callee].exits {
                add_arc(&mut arcs, exit.clone(), site.return_site.clone(), Weight::Zero);
            }
        }
    }

    Ok(WeightedGraph {
        nodes: icfg.all_blocks(),
        arcs: arcs.into_iter().map(|((s, d), w)| (s, d, w)).collect(),
    })
}
