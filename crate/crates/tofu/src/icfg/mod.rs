//! Interprocedural control-flow graph model.
//!
//! The graph is loaded from a plain-text description (see [`load_icfg`]),
//! validated, and then lowered into a [`WeightedGraph`] whose arc weights
//! count branch choices instead of edges: an arc costs 1 only where execution
//! actually has a say in where it goes next. Post-dominator shortcuts and
//! pruning of calls that cannot lead to a target are part of the lowering,
//! so the weighted graph depends on the chosen target set.

mod parse;
mod postdom;
mod weight;

pub use parse::{load_icfg, load_targets};
pub use postdom::{compute_immediate_post_dominators, PostDom};
pub use weight::build_weighted_graph;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

/// Identifier of a basic block, unique across the whole graph.
///
/// By convention ids look like `function:index`, but the model only requires
/// them to be non-empty and free of whitespace.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BlockId(String);

impl BlockId {
    pub fn new(id: impl Into<String>) -> Self {
        BlockId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for BlockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for BlockId {
    fn from(s: &str) -> Self {
        BlockId::new(s)
    }
}

/// One function of the program under test.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunctionDef {
    pub name: String,
    /// Blocks in declaration order. Every block belongs to exactly one
    /// function.
    pub blocks: Vec<BlockId>,
    pub entry: BlockId,
    pub exits: BTreeSet<BlockId>,
    /// Opaque type signature, compared by exact string equality when
    /// resolving indirect calls.
    pub signature: String,
    /// Whether the program ever takes this function's address. Only
    /// address-taken functions are candidates for indirect calls.
    pub address_taken: bool,
}

/// Kind of a control-flow edge.
///
/// `PostDom` edges never appear in graph files; they are derived during
/// weighted-graph construction from the post-dominator analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EdgeKind {
    Intra,
    Call,
    Return,
    PostDom,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct IcfgEdge {
    pub src: BlockId,
    pub dst: BlockId,
    pub kind: EdgeKind,
}

/// Callee set of a call site.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CallTarget {
    /// Known callees by name. Direct calls written in the graph file have
    /// exactly one entry; indirect calls get their list substituted by
    /// [`resolve_indirect_calls`] and may end up with zero or several.
    Direct(Vec<String>),
    /// Unresolved indirect call through a function pointer of the given
    /// signature.
    Indirect { signature: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CallSite {
    /// Block the call is issued from.
    pub block: BlockId,
    pub target: CallTarget,
    /// Block control returns to after the callee exits. Must be in the same
    /// function as `block`.
    pub return_site: BlockId,
}

/// The whole interprocedural graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Icfg {
    pub functions: BTreeMap<String, FunctionDef>,
    /// Intra, call, and return edges. Call and return edges for direct call
    /// sites are materialized at load time; edges for indirect sites appear
    /// once the sites are resolved.
    pub edges: BTreeSet<IcfgEdge>,
    pub call_sites: Vec<CallSite>,
    /// Name of the entry function of the program.
    pub main: String,
}

/// Target blocks the fuzzer should reach.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TargetSpec {
    pub targets: BTreeSet<BlockId>,
}

/// Arc weight in the branch-choice metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Weight {
    Zero,
    One,
    /// Arc exists structurally but can never be part of a path to a target.
    Infinite,
}

/// Search graph derived from an [`Icfg`] and a target set.
///
/// Nodes are all blocks of all functions. Arcs carry branch-choice weights;
/// parallel arcs of different weight are collapsed to the minimum when the
/// graph is built.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeightedGraph {
    pub nodes: BTreeSet<BlockId>,
    pub arcs: BTreeSet<(BlockId, BlockId, Weight)>,
}

#[derive(Debug, thiserror::Error)]
pub enum IcfgError {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("invalid graph: {0}")]
    Invalid(String),
    #[error("unknown block {0}")]
    UnknownBlock(BlockId),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Icfg {
    /// Looks up the function a block belongs to.
    pub fn function_of(&self, block: &BlockId) -> Option<&FunctionDef> {
        self.functions.values().find(|f| f.blocks.contains(block))
    }

    /// Intra-procedural successors of a block.
    pub fn intra_successors(&self, block: &BlockId) -> Vec<&BlockId> {
        self.edges
            .iter()
            .filter(|e| e.kind == EdgeKind::Intra && &e.src == block)
            .map(|e| &e.dst)
            .collect()
    }

    /// All blocks of all functions.
    pub fn all_blocks(&self) -> BTreeSet<BlockId> {
        self.functions
            .values()
            .flat_map(|f| f.blocks.iter().cloned())
            .collect()
    }

    /// Checks every structural invariant and names the first violated one.
    ///
    /// Called by the loader after parsing; exposed separately so graphs
    /// assembled in code can be checked too.
    pub fn validate(&self) -> Result<(), IcfgError> {
        let mut owner: BTreeMap<&BlockId, &str> = BTreeMap::new();
        for f in self.functions.values() {
            if f.blocks.is_empty() {
                return Err(IcfgError::Invalid(format!(
                    "function {} has no blocks",
                    f.name
                )));
            }
            for b in &f.blocks {
                if let Some(prev) = owner.insert(b, &f.name) {
                    return Err(IcfgError::Invalid(format!(
                        "block {b} belongs to both {prev} and {}",
                        f.name
                    )));
                }
            }
            if !f.blocks.contains(&f.entry) {
                return Err(IcfgError::Invalid(format!(
                    "entry {} of function {} is not one of its blocks",
                    f.entry, f.name
                )));
            }
            for e in &f.exits {
                if !f.blocks.contains(e) {
                    return Err(IcfgError::Invalid(format!(
                        "exit {e} of function {} is not one of its blocks",
                        f.name
                    )));
                }
            }
        }
        if !self.functions.contains_key(&self.main) {
            return Err(IcfgError::Invalid(format!(
                "main function {} is not defined",
                self.main
            )));
        }
        for e in &self.edges {
            for b in [&e.src, &e.dst] {
                if !owner.contains_key(b) {
                    return Err(IcfgError::UnknownBlock(b.clone()));
                }
            }
            if e.kind == EdgeKind::Intra && owner[&e.src] != owner[&e.dst] {
                return Err(IcfgError::Invalid(format!(
                    "intra edge {} -> {} crosses from {} into {}",
                    e.src, e.dst, owner[&e.src], owner[&e.dst]
                )));
            }
            if e.kind == EdgeKind::PostDom {
                return Err(IcfgError::Invalid(format!(
                    "derived edge {} -> {} stored in the base graph",
                    e.src, e.dst
                )));
            }
        }
        for site in &self.call_sites {
            let caller = match owner.get(&site.block) {
                Some(f) => *f,
                None => return Err(IcfgError::UnknownBlock(site.block.clone())),
            };
            match owner.get(&site.return_site) {
                Some(f) if *f == caller => {}
                Some(f) => {
                    return Err(IcfgError::Invalid(format!(
                        "call at {} returns to {} in a different function {f}",
                        site.block, site.return_site
                    )))
                }
                None => return Err(IcfgError::UnknownBlock(site.return_site.clone())),
            }
            if let CallTarget::Direct(callees) = &site.target {
                for callee in callees {
                    if !self.functions.contains_key(callee) {
                        return Err(IcfgError::Invalid(format!(
                            "call at {} names unknown function {callee}",
                            site.block
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Substitutes every unresolved indirect call site with the set of
    /// address-taken functions whose signature matches exactly, and adds the
    /// corresponding call and return edges.
    ///
    /// Sites whose signature matches nothing end up with an empty callee
    /// list. Running the resolution again is a no-op.
    pub fn resolve_indirect_calls(&mut self) {
        let mut resolved_sites = Vec::new();
        for (idx, site) in self.call_sites.iter().enumerate() {
            if let CallTarget::Indirect { signature } = &site.target {
                let callees: Vec<String> = self
                    .functions
                    .values()
                    .filter(|f| f.address_taken && &f.signature == signature)
                    .map(|f| f.name.clone())
                    .collect();
                resolved_sites.push((idx, callees));
            }
        }
        for (idx, callees) in resolved_sites {
            let (block, return_site) = {
                let site = &self.call_sites[idx];
                (site.block.clone(), site.return_site.clone())
            };
            for callee in &callees {
                let f = &self.functions[callee];
                self.edges.insert(IcfgEdge {
                    src: block.clone(),
                    dst: f.entry.clone(),
                    kind: EdgeKind::Call,
                });
                for exit in &f.exits {
                    self.edges.insert(IcfgEdge {
                        src: exit.clone(),
                        dst: return_site.clone(),
                        kind: EdgeKind::Return,
                    });
                }
            }
            self.call_sites[idx].target = CallTarget::Direct(callees);
        }
    }

    /// Renders the graph back into the file format accepted by
    /// [`load_icfg`]. Loading the output yields an equal graph.
    pub fn write(&self) -> String {
        let mut out = String::new();
        for f in self.functions.values() {
            let exits: Vec<&str> = f.exits.iter().map(|b| b.as_str()).collect();
            out.push_str(&format!(
                "function {} signature={} address_taken={} entry={} exits={}\n",
                f.name,
                f.signature,
                u8::from(f.address_taken),
                f.entry,
                exits.join(",")
            ));
            for b in &f.blocks {
                out.push_str(&format!("block {b}\n"));
            }
        }
        for e in &self.edges {
            if e.kind == EdgeKind::Intra {
                out.push_str(&format!("edge {} {}\n", e.src, e.dst));
            }
        }
        for site in &self.call_sites {
            let target = match &site.target {
                CallTarget::Direct(callees) => format!("direct={}", callees.join(",")),
                CallTarget::Indirect { signature } => format!("indirect={signature}"),
            };
            out.push_str(&format!(
                "call {} {target} return={}\n",
                site.block, site.return_site
            ));
        }
        out.push_str(&format!("main {}\n", self.main));
        out
    }
}

impl TargetSpec {
    /// Checks that every target names a block of the graph.
    pub fn validate(&self, icfg: &Icfg) -> Result<(), IcfgError> {
        let blocks = icfg.all_blocks();
        for t in &self.targets {
            if !blocks.contains(t) {
                return Err(IcfgError::UnknownBlock(t.clone()));
            }
        }
        Ok(())
    }
}
