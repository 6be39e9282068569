//! Immediate post-dominators of one function's intra-procedural CFG.
//!
//! Post-dominance is dominance on the reversed graph: a virtual sink node is
//! added with an edge from every declared exit, all intra edges are flipped,
//! and the iterative two-finger dominance algorithm (Cooper, Harvey, and
//! Kennedy) runs with the sink as root. A block's immediate post-dominator
//! is then its immediate dominator in that reversed graph.
//!
//! Blocks that cannot reach any exit are unreachable from the sink and get
//! no entry in the result. Blocks whose paths to different exits share no
//! later block map to [`PostDom::VirtualSink`]; so do the exits themselves.

use std::collections::BTreeMap;

use super::{BlockId, EdgeKind, Icfg, IcfgError};

/// Immediate post-dominator of a block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PostDom {
    Block(BlockId),
    /// The block's execution can end (reach an exit) without any fixed
    /// later block being guaranteed.
    VirtualSink,
}

/// Computes the immediate post-dominator of every block of `function` that
/// can reach one of its exits.
pub fn compute_immediate_post_dominators(
    icfg: &Icfg,
    function: &str,
) -> Result<BTreeMap<BlockId, PostDom>, IcfgError> {
    let f = icfg
        .functions
        .get(function)
        .ok_or_else(|| IcfgError::Invalid(format!("unknown function {function}")))?;

    let n = f.blocks.len();
    let sink = n;
    let index: BTreeMap<&BlockId, usize> = f
        .blocks
        .iter()
        .enumerate()
        .map(|(i, b)| (b, i))
        .collect();

    // Reversed graph: sink -> exit for every exit, dst -> src for every
    // intra edge. Successors drive the DFS order, predecessors the
    // dominance iteration.
    let mut succ: Vec<Vec<usize>> = vec![Vec::new(); n + 1];
    let mut pred: Vec<Vec<usize>> = vec![Vec::new(); n + 1];
    for e in &f.exits {
        succ[sink].push(index[e]);
        pred[index[e]].push(sink);
    }
    for e in &icfg.edges {
        if e.kind != EdgeKind::Intra {
            continue;
        }
        let (Some(&src), Some(&dst)) = (index.get(&e.src), index.get(&e.dst)) else {
            continue;
        };
        succ[dst].push(src);
        pred[src].push(dst);
    }

    // Postorder over the reversed graph from the sink. Iterative DFS; the
    // node is emitted once all successors have been visited.
    let mut postorder: Vec<usize> = Vec::with_capacity(n + 1);
    let mut po_num: Vec<Option<usize>> = vec![None; n + 1];
    let mut visited = vec![false; n + 1];
    let mut stack: Vec<(usize, usize)> = vec![(sink, 0)];
    visited[sink] = true;
    while let Some(&mut (node, ref mut next)) = stack.last_mut() {
        if *next < succ[node].len() {
            let s = succ[node][*next];
            *next += 1;
            if !visited[s] {
                visited[s] = true;
                stack.push((s, 0));
            }
        } else {
            po_num[node] = Some(postorder.len());
            postorder.push(node);
            stack.pop();
        }
    }

    let mut idom: Vec<Option<usize>> = vec![None; n + 1];
    idom[sink] = Some(sink);

    let intersect = |idom: &[Option<usize>], mut a: usize, mut b: usize| -> usize {
        while a != b {
            while po_num[a].unwrap() < po_num[b].unwrap() {
                a = idom[a].unwrap();
            }
            while po_num[b].unwrap() < po_num[a].unwrap() {
                b = idom[b].unwrap();
            }
        }
        a
    };

    let mut changed = true;
    while changed {
        changed = false;
        // reverse postorder, sink (the root) excluded
        for &node in postorder.iter().rev() {
            if node == sink {
                continue;
            }
            let mut new_idom: Option<usize> = None;
            for &p in &pred[node] {
                if idom[p].is_none() {
                    continue;
                }
                new_idom = Some(match new_idom {
                    None => p,
                    Some(cur) => intersect(&idom, cur, p),
                });
            }
            if new_idom.is_some() && idom[node] != new_idom {
                idom[node] = new_idom;
                changed = true;
            }
        }
    }

    let mut out = BTreeMap::new();
    for (i, block) in f.blocks.iter().enumerate() {
        let Some(d) = idom[i] else {
            continue; // cannot reach any exit
        };
        let pd = if d == sink {
            PostDom::VirtualSink
        } else {
            PostDom::Block(f.blocks[d].clone())
        };
        out.insert(block.clone(), pd);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::icfg::{EdgeKind, FunctionDef, Icfg, IcfgEdge};
    use std::collections::BTreeSet;

    fn single_function(blocks: &[&str], entry: &str, exits: &[&str], edges: &[(&str, &str)]) -> Icfg {
        let def = FunctionDef {
            name: "f".to_string(),
            blocks: blocks.iter().map(|b| BlockId::from(*b)).collect(),
            entry: BlockId::from(entry),
            exits: exits.iter().map(|b| BlockId::from(*b)).collect(),
            signature: "void(void)".to_string(),
            address_taken: false,
        };
        let icfg = Icfg {
            functions: [("f".to_string(), def)].into_iter().collect(),
            edges: edges
                .iter()
                .map(|(s, d)| IcfgEdge {
                    src: BlockId::from(*s),
                    dst: BlockId::from(*d),
                    kind: EdgeKind::Intra,
                })
                .collect::<BTreeSet<_>>(),
            call_sites: Vec::new(),
            main: "f".to_string(),
        };
        icfg.validate().unwrap();
        icfg
    }

    fn ipdom(icfg: &Icfg) -> BTreeMap<BlockId, PostDom> {
        compute_immediate_post_dominators(icfg, "f").unwrap()
    }

    #[test]
    fn chain_pdoms_onto_the_next_block() {
        let g = single_function(&["a", "b", "c"], "a", &["c"], &[("a", "b"), ("b", "c")]);
        let pd = ipdom(&g);
        assert_eq!(pd[&BlockId::from("a")], PostDom::Block(BlockId::from("b")));
        assert_eq!(pd[&BlockId::from("b")], PostDom::Block(BlockId::from("c")));
        assert_eq!(pd[&BlockId::from("c")], PostDom::VirtualSink);
    }

    #[test]
    fn diamond_pdoms_onto_the_join() {
        let g = single_function(
            &["a", "b", "c", "d"],
            "a",
            &["d"],
            &[("a", "b"), ("a", "c"), ("b", "d"), ("c", "d")],
        );
        let pd = ipdom(&g);
        assert_eq!(pd[&BlockId::from("a")], PostDom::Block(BlockId::from("d")));
        assert_eq!(pd[&BlockId::from("b")], PostDom::Block(BlockId::from("d")));
        assert_eq!(pd[&BlockId::from("c")], PostDom::Block(BlockId::from("d")));
    }

    #[test]
    fn loop_back_edge_does_not_disturb_the_exit_path() {
        let g = single_function(
            &["a", "b", "c"],
            "a",
            &["c"],
            &[("a", "b"), ("b", "a"), ("b", "c")],
        );
        let pd = ipdom(&g);
        assert_eq!(pd[&BlockId::from("a")], PostDom::Block(BlockId::from("b")));
        assert_eq!(pd[&BlockId::from("b")], PostDom::Block(BlockId::from("c")));
    }

    #[test]
    fn branch_to_two_exits_pdoms_onto_the_sink() {
        let g = single_function(&["a", "b", "c"], "a", &["b", "c"], &[("a", "b"), ("a", "c")]);
        let pd = ipdom(&g);
        assert_eq!(pd[&BlockId::from("a")], PostDom::VirtualSink);
        assert_eq!(pd[&BlockId::from("b")], PostDom::VirtualSink);
        assert_eq!(pd[&BlockId::from("c")], PostDom::VirtualSink);
    }

    #[test]
    fn block_that_cannot_reach_an_exit_has_no_entry() {
        // d spins on itself and never reaches the exit
        let g = single_function(
            &["a", "b", "d"],
            "a",
            &["b"],
            &[("a", "b"), ("a", "d"), ("d", "d")],
        );
        let pd = ipdom(&g);
        assert!(!pd.contains_key(&BlockId::from("d")));
        // the spin through d never reaches the exit, so it is not a path to
        // the exit and b still post-dominates a
        assert_eq!(pd[&BlockId::from("a")], PostDom::Block(BlockId::from("b")));
    }

    #[test]
    fn immediate_means_nearest_common_pdom() {
        // a forks to b/c which rejoin at d, then e follows; ipdom(a) is d, not e
        let g = single_function(
            &["a", "b", "c", "d", "e"],
            "a",
            &["e"],
            &[("a", "b"), ("a", "c"), ("b", "d"), ("c", "d"), ("d", "e")],
        );
        let pd = ipdom(&g);
        assert_eq!(pd[&BlockId::from("a")], PostDom::Block(BlockId::from("d")));
        assert_eq!(pd[&BlockId::from("d")], PostDom::Block(BlockId::from("e")));
    }
}
