//! Independent oracles and random graph generators for the integration
//! tests. The oracles deliberately use different algorithms than the crate
//! (Bellman-Ford instead of Dijkstra, exhaustive path enumeration instead
//! of the iterative dominance fixpoint) so agreement is meaningful.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use tofu::distance::Distance;
use tofu::icfg::{
    BlockId, CallSite, CallTarget, EdgeKind, FunctionDef, Icfg, IcfgEdge, PostDom, Weight,
    WeightedGraph,
};

/// Single-source shortest distance to `target` over the reversed arcs,
/// by exhaustive relaxation.
pub fn bellman_ford(graph: &WeightedGraph, target: &BlockId) -> BTreeMap<BlockId, Distance> {
    let mut dist: BTreeMap<BlockId, Distance> = graph
        .nodes
        .iter()
        .map(|n| (n.clone(), Distance::Infinite))
        .collect();
    dist.insert(target.clone(), Distance::Finite(0));
    for _ in 0..graph.nodes.len() {
        let mut changed = false;
        for (src, dst, w) in &graph.arcs {
            let step = match w {
                Weight::Zero => 0,
                Weight::One => 1,
                Weight::Infinite => continue,
            };
            let through = dist[dst].saturating_add(step);
            if through < dist[src] {
                dist.insert(src.clone(), through);
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    dist
}

/// Immediate post-dominators of one function by simple-path enumeration:
/// v post-dominates u iff every exit-reaching simple path from u passes
/// through v. Any walk that reaches an exit shrinks to such a simple path,
/// so enumerating them decides the property for all executions.
pub fn oracle_ipdom(icfg: &Icfg, function: &str) -> BTreeMap<BlockId, PostDom> {
    let f = &icfg.functions[function];
    let succs: BTreeMap<&BlockId, Vec<&BlockId>> = f
        .blocks
        .iter()
        .map(|b| {
            let s = icfg
                .edges
                .iter()
                .filter(|e| e.kind == EdgeKind::Intra && &e.src == b)
                .map(|e| &e.dst)
                .collect();
            (b, s)
        })
        .collect();

    // per block: the set of blocks on every exit-reaching simple path
    let mut pdoms: BTreeMap<BlockId, BTreeSet<BlockId>> = BTreeMap::new();
    for start in &f.blocks {
        let mut on_path: Vec<&BlockId> = vec![start];
        let mut on_path_set: BTreeSet<&BlockId> = [start].into_iter().collect();
        let mut meet: Option<BTreeSet<BlockId>> = None;
        enumerate(
            start,
            &succs,
            &f.exits,
            &mut on_path,
            &mut on_path_set,
            &mut meet,
        );
        if let Some(mut common) = meet {
            common.remove(start);
            pdoms.insert(start.clone(), common);
        }
    }

    // the immediate post-dominator is the nearest: the one every other
    // post-dominator of u also post-dominates, i.e. the one with the
    // largest post-dominator set of its own
    let mut result = BTreeMap::new();
    for (u, strict) in &pdoms {
        if strict.is_empty() {
            result.insert(u.clone(), PostDom::VirtualSink);
            continue;
        }
        let mut best: Option<(&BlockId, usize)> = None;
        for v in strict {
            let size = pdoms[v].len();
            match best {
                None => best = Some((v, size)),
                Some((_, s)) => {
                    assert_ne!(s, size, "post-dominators of {u} do not form a chain");
                    if size > s {
                        best = Some((v, size));
                    }
                }
            }
        }
        result.insert(u.clone(), PostDom::Block(best.unwrap().0.clone()));
    }
    result
}

fn enumerate<'a>(
    node: &'a BlockId,
    succs: &BTreeMap<&'a BlockId, Vec<&'a BlockId>>,
    exits: &BTreeSet<BlockId>,
    on_path: &mut Vec<&'a BlockId>,
    on_path_set: &mut BTreeSet<&'a BlockId>,
    meet: &mut Option<BTreeSet<BlockId>>,
) {
    if exits.contains(node) {
        // the virtual sink ends every path here; fold this path into the
        // running intersection
        let nodes: BTreeSet<BlockId> = on_path.iter().map(|b| (*b).clone()).collect();
        *meet = Some(match meet.take() {
            None => nodes,
            Some(prev) => prev.intersection(&nodes).cloned().collect(),
        });
        // an exit may also fall through to more blocks, so keep walking
    }
    for next in &succs[node] {
        if on_path_set.contains(next) {
            continue;
        }
        on_path.push(next);
        on_path_set.insert(next);
        enumerate(next, succs, exits, on_path, on_path_set, meet);
        on_path.pop();
        on_path_set.remove(next);
    }
}

/// A random function body: a connected forward skeleton plus a few extra
/// edges in any direction. Exits are the blocks without successors (or the
/// last block when every block has one).
fn random_function(
    rng: &mut ChaCha8Rng,
    name: &str,
    max_blocks: usize,
) -> (FunctionDef, Vec<IcfgEdge>) {
    let n = rng.random_range(2..=max_blocks.max(2));
    let block = |j: usize| BlockId::from(format!("{name}:{j}").as_str());
    let mut edges: BTreeSet<(usize, usize)> = BTreeSet::new();
    for j in 1..n {
        edges.insert((rng.random_range(0..j), j));
    }
    for _ in 0..n / 2 {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        if a != b {
            edges.insert((a, b));
        }
    }
    let with_succ: BTreeSet<usize> = edges.iter().map(|(a, _)| *a).collect();
    let mut exits: BTreeSet<BlockId> = (0..n)
        .filter(|j| !with_succ.contains(j))
        .map(block)
        .collect();
    if exits.is_empty() {
        exits.insert(block(n - 1));
    }
    let def = FunctionDef {
        name: name.to_string(),
        blocks: (0..n).map(block).collect(),
        entry: block(0),
        exits,
        signature: "void(void)".to_string(),
        address_taken: false,
    };
    let edges = edges
        .into_iter()
        .map(|(a, b)| IcfgEdge {
            src: block(a),
            dst: block(b),
            kind: EdgeKind::Intra,
        })
        .collect();
    (def, edges)
}

/// A random single-function graph for post-dominator comparisons.
pub fn random_cfg(rng: &mut ChaCha8Rng, max_blocks: usize) -> Icfg {
    let (def, edges) = random_function(rng, "f", max_blocks);
    let icfg = Icfg {
        functions: [("f".to_string(), def)].into_iter().collect(),
        edges: edges.into_iter().collect(),
        call_sites: Vec::new(),
        main: "f".to_string(),
    };
    icfg.validate().expect("generated graph is well formed");
    icfg
}

/// A random multi-function graph with direct calls, f0 as main.
pub fn random_icfg(rng: &mut ChaCha8Rng, max_funcs: usize, max_blocks: usize) -> Icfg {
    let n_funcs = rng.random_range(1..=max_funcs.max(1));
    let mut functions = BTreeMap::new();
    let mut edges = BTreeSet::new();
    for fi in 0..n_funcs {
        let (def, fe) = random_function(rng, &format!("f{fi}"), max_blocks);
        functions.insert(def.name.clone(), def);
        edges.extend(fe);
    }
    let mut call_sites = Vec::new();
    for fi in 0..n_funcs {
        let caller = format!("f{fi}");
        let n_blocks = functions[&caller].blocks.len();
        let sites = rng.random_range(0..=2usize);
        for _ in 0..sites.min(n_funcs - 1) {
            let mut callees = Vec::new();
            let first = loop {
                let c = rng.random_range(0..n_funcs);
                if c != fi {
                    break format!("f{c}");
                }
            };
            callees.push(first.clone());
            if n_funcs > 2 && rng.random_bool(0.3) {
                let second = loop {
                    let c = format!("f{}", rng.random_range(0..n_funcs));
                    if c != caller && c != first {
                        break c;
                    }
                };
                callees.push(second);
            }
            let site = CallSite {
                block: functions[&caller].blocks[rng.random_range(0..n_blocks)].clone(),
                target: CallTarget::Direct(callees.clone()),
                return_site: functions[&caller].blocks[rng.random_range(0..n_blocks)].clone(),
            };
            for callee in &callees {
                edges.insert(IcfgEdge {
                    src: site.block.clone(),
                    dst: functions[callee].entry.clone(),
                    kind: EdgeKind::Call,
                });
                for exit in &functions[callee].exits {
                    edges.insert(IcfgEdge {
                        src: exit.clone(),
                        dst: site.return_site.clone(),
                        kind: EdgeKind::Return,
                    });
                }
            }
            call_sites.push(site);
        }
    }
    let icfg = Icfg {
        functions,
        edges,
        call_sites,
        main: "f0".to_string(),
    };
    icfg.validate().expect("generated graph is well formed");
    icfg
}

/// Draws `count` distinct random targets out of the graph's blocks.
pub fn random_targets(rng: &mut ChaCha8Rng, icfg: &Icfg, count: usize) -> BTreeSet<BlockId> {
    let blocks: Vec<BlockId> = icfg.all_blocks().into_iter().collect();
    let mut targets = BTreeSet::new();
    while targets.len() < count.min(blocks.len()) {
        targets.insert(blocks[rng.random_range(0..blocks.len())].clone());
    }
    targets
}
