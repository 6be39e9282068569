//! Branch-choice distance from every block to each target.
//!
//! Distances are shortest paths in the [`WeightedGraph`](crate::icfg::WeightedGraph):
//! the number of branch decisions separating a block from the target, with
//! post-dominator shortcuts and call pruning already folded into the arc
//! weights. One Dijkstra run per target, over reversed arcs, yields the
//! distance of all blocks to that target at once. Infinite arcs are never
//! relaxed, so blocks behind them keep distance infinity unless another
//! path exists.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};
use std::fmt;
use std::path::Path;

use crate::icfg::{BlockId, TargetSpec, Weight, WeightedGraph};

/// Distance value: a finite count of branch choices, or unreachable.
///
/// The derived order puts every finite value below `Infinite`, which is
/// exactly the order the scheduler needs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Distance {
    Finite(u64),
    Infinite,
}

impl Distance {
    pub fn saturating_add(self, w: u64) -> Distance {
        match self {
            Distance::Finite(d) => Distance::Finite(d.saturating_add(w)),
            Distance::Infinite => Distance::Infinite,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, Distance::Finite(_))
    }
}

impl fmt::Display for Distance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Distance::Finite(d) => write!(f, "{d}"),
            Distance::Infinite => f.write_str("INF"),
        }
    }
}

/// All block distances to one target.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistanceMap {
    pub target: BlockId,
    /// Every node of the weighted graph has an entry; unreachable blocks
    /// carry `Infinite`.
    pub dist: BTreeMap<BlockId, Distance>,
}

#[derive(Debug, thiserror::Error)]
pub enum DistanceError {
    #[error("target {0} is not a node of the graph")]
    UnknownTarget(BlockId),
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("{0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Computes the distance map of every target.
pub fn compute_distances(
    graph: &WeightedGraph,
    targets: &TargetSpec,
) -> Result<BTreeMap<BlockId, DistanceMap>, DistanceError> {
    let mut maps = BTreeMap::new();
    for t in &targets.targets {
        maps.insert(t.clone(), compute_distance_map(graph, t)?);
    }
    Ok(maps)
}

/// Dijkstra from `target` over reversed arcs. Arc weights are 0 or 1;
/// infinite arcs are skipped entirely.
pub fn compute_distance_map(
    graph: &WeightedGraph,
    target: &BlockId,
) -> Result<DistanceMap, DistanceError> {
    if !graph.nodes.contains(target) {
        return Err(DistanceError::UnknownTarget(target.clone()));
    }

    let index: BTreeMap<&BlockId, usize> = graph
        .nodes
        .iter()
        .enumerate()
        .map(|(i, b)| (b, i))
        .collect();
    let n = graph.nodes.len();

    let mut rev: Vec<Vec<(usize, u64)>> = vec![Vec::new(); n];
    for (src, dst, w) in &graph.arcs {
        let w = match w {
            Weight::Zero => 0,
            Weight::One => 1,
            Weight::Infinite => continue,
        };
        rev[index[dst]].push((index[src], w));
    }

    let mut dist: Vec<Option<u64>> = vec![None; n];
    let mut heap: BinaryHeap<Reverse<(u64, usize)>> = BinaryHeap::new();
    dist[index[target]] = Some(0);
    heap.push(Reverse((0, index[target])));
    while let Some(Reverse((d, node))) = heap.pop() {
        if dist[node] != Some(d) {
            continue; // stale queue entry
        }
        for &(prev, w) in &rev[node] {
            let cand = d.saturating_add(w);
            if dist[prev].is_none_or(|cur| cand < cur) {
                dist[prev] = Some(cand);
                heap.push(Reverse((cand, prev)));
            }
        }
    }

    let dist = graph
        .nodes
        .iter()
        .map(|b| {
            let d = match dist[index[b]] {
                Some(d) => Distance::Finite(d),
                None => Distance::Infinite,
            };
            (b.clone(), d)
        })
        .collect();
    Ok(DistanceMap {
        target: target.clone(),
        dist,
    })
}

/// Turns a target id into a filename stem: `:` becomes `__`.
fn sanitize(target: &BlockId) -> String {
    target.as_str().replace(':', "__")
}

fn unsanitize(stem: &str) -> BlockId {
    BlockId::new(stem.replace("__", ":"))
}

/// Writes one `<target>.dist` file per map into `dir`, creating it if
/// needed. Lines are `<block> <distance>` sorted by block id, with `INF`
/// for unreachable blocks.
pub fn write_distance_files(
    maps: &BTreeMap<BlockId, DistanceMap>,
    dir: &Path,
) -> Result<(), DistanceError> {
    std::fs::create_dir_all(dir)?;
    for map in maps.values() {
        let mut out = String::new();
        for (block, d) in &map.dist {
            out.push_str(&format!("{block} {d}\n"));
        }
        std::fs::write(dir.join(format!("{}.dist", sanitize(&map.target))), out)?;
    }
    Ok(())
}

/// Reads every `.dist` file in `dir` back into distance maps.
///
/// The target id is recovered from the filename, so ids containing a
/// literal `__` do not survive the round trip; the recovered target must
/// be present with distance 0, which catches such mismatches.
pub fn read_distance_files(dir: &Path) -> Result<BTreeMap<BlockId, DistanceMap>, DistanceError> {
    let mut maps = BTreeMap::new();
    let mut entries: Vec<_> = std::fs::read_dir(dir)?
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|e| e == "dist"))
        .collect();
    entries.sort();
    for path in entries {
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| DistanceError::Malformed(format!("bad filename {}", path.display())))?;
        let target = unsanitize(stem);
        let text = std::fs::read_to_string(&path)?;
        let mut dist = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split_whitespace();
            let (Some(block), Some(value), None) =
                (fields.next(), fields.next(), fields.next())
            else {
                return Err(DistanceError::Parse {
                    path: path.display().to_string(),
                    line: lineno + 1,
                    message: "expected `<block> <distance>`".into(),
                });
            };
            let d = if value == "INF" {
                Distance::Infinite
            } else {
                match value.parse::<u64>() {
                    Ok(v) => Distance::Finite(v),
                    Err(_) => {
                        return Err(DistanceError::Parse {
                            path: path.display().to_string(),
                            line: lineno + 1,
                            message: format!("bad distance {value}"),
                        })
                    }
                }
            };
            dist.insert(BlockId::new(block), d);
        }
        if dist.get(&target) != Some(&Distance::Finite(0)) {
            return Err(DistanceError::Malformed(format!(
                "{}: recovered target {target} does not have distance 0",
                path.display()
            )));
        }
        maps.insert(target.clone(), DistanceMap { target, dist });
    }
    Ok(maps)
}
