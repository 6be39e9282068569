//! Parser for the plain-text graph and target formats.
//!
//! Graph files are line oriented. `#` starts a comment, blank lines are
//! skipped. Within a line, fields are separated by whitespace; values such
//! as signatures must therefore not contain whitespace themselves.
//!
//! ```text
//! function <name> signature=<sig> address_taken=<0|1> entry=<block> exits=<b1,b2,...>
//! block <id>
//! edge <src> <dst>
//! call <block> direct=<f1,f2,...> return=<block>
//! call <block> indirect=<signature> return=<block>
//! main <name>
//! ```
//!
//! `block` and `edge` lines attach to the most recent `function` line.
//! Call and return edges for direct call sites are added while loading, so
//! the in-memory graph is immediately interprocedural; indirect sites
//! contribute edges only once resolved.

use std::collections::BTreeSet;
use std::path::Path;

use super::{
    BlockId, CallSite, CallTarget, EdgeKind, FunctionDef, Icfg, IcfgEdge, IcfgError, TargetSpec,
};

fn err(path: &Path, line: usize, message: impl Into<String>) -> IcfgError {
    IcfgError::Parse {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

/// Takes `key=value` and returns the value, or an error naming the line.
fn keyed<'a>(
    field: &'a str,
    key: &str,
    path: &Path,
    line: usize,
) -> Result<&'a str, IcfgError> {
    match field.strip_prefix(key).and_then(|r| r.strip_prefix('=')) {
        Some(v) => Ok(v),
        None => Err(err(path, line, format!("expected {key}=..., got {field}"))),
    }
}

/// Loads and validates a graph file.
pub fn load_icfg(path: &Path) -> Result<Icfg, IcfgError> {
    let text = std::fs::read_to_string(path)?;
    let mut functions: Vec<FunctionDef> = Vec::new();
    let mut edges: BTreeSet<IcfgEdge> = BTreeSet::new();
    let mut pending_calls: Vec<(usize, CallSite)> = Vec::new();
    let mut main: Option<String> = None;

    for (lineno, raw) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = match raw.split('#').next() {
            Some(l) => l.trim(),
            None => "",
        };
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields[0] {
            "function" => {
                if fields.len() != 6 {
                    return Err(err(
                        path,
                        lineno,
                        "expected: function <name> signature=<sig> address_taken=<0|1> \
                         entry=<block> exits=<b1,...>",
                    ));
                }
                let name = fields[1].to_string();
                if functions.iter().any(|f| f.name == name) {
                    return Err(err(path, lineno, format!("function {name} defined twice")));
                }
                let signature = keyed(fields[2], "signature", path, lineno)?.to_string();
                let address_taken = match keyed(fields[3], "address_taken", path, lineno)? {
                    "0" => false,
                    "1" => true,
                    v => {
                        return Err(err(path, lineno, format!("address_taken must be 0 or 1, got {v}")))
                    }
                };
                let entry = BlockId::new(keyed(fields[4], "entry", path, lineno)?);
                let exits: BTreeSet<BlockId> = keyed(fields[5], "exits", path, lineno)?
                    .split(',')
                    .filter(|s| !s.is_empty())
                    .map(BlockId::new)
                    .collect();
                functions.push(FunctionDef {
                    name,
                    blocks: Vec::new(),
                    entry,
                    exits,
                    signature,
                    address_taken,
                });
            }
            "block" => {
                if fields.len() != 2 {
                    return Err(err(path, lineno, "expected: block <id>"));
                }
                let f = functions
                    .last_mut()
                    .ok_or_else(|| err(path, lineno, "block line before any function"))?;
                f.blocks.push(BlockId::new(fields[1]));
            }
            "edge" => {
                if fields.len() != 3 {
                    return Err(err(path, lineno, "expected: edge <src> <dst>"));
                }
                edges.insert(IcfgEdge {
                    src: BlockId::new(fields[1]),
                    dst: BlockId::new(fields[2]),
                    kind: EdgeKind::Intra,
                });
            }
            "call" => {
                if fields.len() != 4 {
                    return Err(err(
                        path,
                        lineno,
                        "expected: call <block> direct=<f1,...>|indirect=<sig> return=<block>",
                    ));
                }
                let block = BlockId::new(fields[1]);
                let target = if let Some(callees) = fields[2].strip_prefix("direct=") {
                    CallTarget::Direct(
                        callees
                            .split(',')
                            .filter(|s| !s.is_empty())
                            .map(str::to_string)
                            .collect(),
                    )
                } else if let Some(sig) = fields[2].strip_prefix("indirect=") {
                    CallTarget::Indirect {
                        signature: sig.to_string(),
                    }
                } else {
                    return Err(err(
                        path,
                        lineno,
                        format!("expected direct=... or indirect=..., got {}", fields[2]),
                    ));
                };
                let return_site = BlockId::new(keyed(fields[3], "return", path, lineno)?);
                pending_calls.push((
                    lineno,
                    CallSite {
                        block,
                        target,
                        return_site,
                    },
                ));
            }
            "main" => {
                if fields.len() != 2 {
                    return Err(err(path, lineno, "expected: main <name>"));
                }
                if main.is_some() {
                    return Err(err(path, lineno, "main declared twice"));
                }
                main = Some(fields[1].to_string());
            }
            other => return Err(err(path, lineno, format!("unknown directive {other}"))),
        }
    }

    let main = main.ok_or_else(|| err(path, text.lines().count(), "missing main declaration"))?;
    let mut icfg = Icfg {
        functions: functions.into_iter().map(|f| (f.name.clone(), f)).collect(),
        edges,
        call_sites: Vec::new(),
        main,
    };

    // Materialize interprocedural edges for sites with known callees.
    for (lineno, site) in pending_calls {
        if let CallTarget::Direct(callees) = &site.target {
            for callee in callees {
                let f = icfg.functions.get(callee).ok_or_else(|| {
                    err(path, lineno, format!("call names unknown function {callee}"))
                })?;
                icfg.edges.insert(IcfgEdge {
                    src: site.block.clone(),
                    dst: f.entry.clone(),
                    kind: EdgeKind::Call,
                });
                for exit in &f.exits {
                    icfg.edges.insert(IcfgEdge {
                        src: exit.clone(),
                        dst: site.return_site.clone(),
                        kind: EdgeKind::Return,
                    });
                }
            }
        }
        icfg.call_sites.push(site);
    }

    icfg.validate()?;
    Ok(icfg)
}

/// Loads a target file: one block id per line, `#` comments allowed.
pub fn load_targets(path: &Path, icfg: &Icfg) -> Result<TargetSpec, IcfgError> {
    let text = std::fs::read_to_string(path)?;
    let mut targets = BTreeSet::new();
    for raw in text.lines() {
        let line = match raw.split('#').next() {
            Some(l) => l.trim(),
            None => "",
        };
        if line.is_empty() {
            continue;
        }
        targets.insert(BlockId::new(line));
    }
    let spec = TargetSpec { targets };
    spec.validate(icfg)?;
    Ok(spec)
}
