use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::ConvexifyError;
use crate::conic::VarId;
use crate::multilinear::MultilinearExpr;

/// Graph with one node per variable and one edge per distinct bilinear pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionGraph {
    pub nodes: BTreeSet<VarId>,
    pub edges: BTreeSet<(VarId, VarId)>,
    /// True when the graph has no cycle (every component is a tree).
    pub is_tree: bool,
}

pub fn interaction_graph(exprs: &[MultilinearExpr]) -> Result<InteractionGraph, ConvexifyError> {
    let mut nodes = BTreeSet::new();
    let mut edges = BTreeSet::new();
    for e in exprs {
        if !e.is_multilinear() {
            return Err(ConvexifyError::NotMultilinear);
        }
        for (vars, _) in e.terms() {
            match *vars {
                [v] => {
                    nodes.insert(v);
                }
                [a, b] => {
                    nodes.extend([a, b]);
                    edges.insert((a, b));
                }
                _ => return Err(ConvexifyError::DegreeTooHigh { degree: vars.len() }),
            }
        }
    }
    let mut parent: BTreeMap<VarId, VarId> = nodes.iter().map(|&v| (v, v)).collect();
    fn find(p: &mut BTreeMap<VarId, VarId>, mut v: VarId) -> VarId {
        while p[&v] != v {
            let up = p[&p[&v]];
            p.insert(v, up);
            v = up;
        }
        v
    }
    let mut is_tree = true;
    for &(a, b) in &edges {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra == rb {
            is_tree = false;
            break;
        }
        parent.insert(ra, rb);
    }
    Ok(InteractionGraph { nodes, edges, is_tree })
}
