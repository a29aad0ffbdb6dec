//! Undirected bus graph, BFS spanning trees, fundamental cycle bases and the
//! split of long cycles into 3- and 4-cycles through auxiliary arcs.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{ordered, BusId, Network};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("graph is disconnected ({components} components)")]
    DisconnectedGraph { components: usize },
    #[error("root bus {0} is not in the graph")]
    UnknownRoot(BusId),
    #[error("anchor bus {0} is not on the cycle")]
    AnchorNotOnCycle(BusId),
    #[error("cycle has {0} vertices, at least 3 are required")]
    TooShort(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArcKind {
    Real,
    Auxiliary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Arc {
    pub from: BusId,
    pub to: BusId,
    pub kind: ArcKind,
}

/// Closed walk `v1, ..., vn, v1`; `arcs[i]` joins `vertices[i]` to the next vertex.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cycle {
    pub vertices: Vec<BusId>,
    pub arcs: Vec<Arc>,
}

impl Cycle {
    /// Cycle over `vertices` with every arc tagged real.
    pub fn from_vertices(vertices: Vec<BusId>) -> Result<Self, GraphError> {
        let kinds = vec![ArcKind::Real; vertices.len()];
        Self::with_kinds(vertices, &kinds)
    }

    pub fn with_kinds(vertices: Vec<BusId>, kinds: &[ArcKind]) -> Result<Self, GraphError> {
        let n = vertices.len();
        if n < 3 {
            return Err(GraphError::TooShort(n));
        }
        assert_eq!(kinds.len(), n, "one arc kind per vertex");
        let arcs = (0..n)
            .map(|i| Arc {
                from: vertices[i],
                to: vertices[(i + 1) % n],
                kind: kinds[i],
            })
            .collect();
        Ok(Cycle { vertices, arcs })
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Same cycle started at `anchor`, keeping the orientation.
    pub fn rotate_to(&self, anchor: BusId) -> Result<Cycle, GraphError> {
        let pos = self
            .vertices
            .iter()
            .position(|&v| v == anchor)
            .ok_or(GraphError::AnchorNotOnCycle(anchor))?;
        let mut vertices = self.vertices.clone();
        let mut arcs = self.arcs.clone();
        vertices.rotate_left(pos);
        arcs.rotate_left(pos);
        Ok(Cycle { vertices, arcs })
    }

    /// Lowest bus id on the cycle.
    pub fn min_vertex(&self) -> BusId {
        *self.vertices.iter().min().expect("cycle is non-empty")
    }

    /// Undirected edges of the cycle as `(min, max)` pairs.
    pub fn edge_set(&self) -> BTreeSet<(BusId, BusId)> {
        self.arcs.iter().map(|a| ordered(a.from, a.to)).collect()
    }

    pub fn real_arcs(&self) -> impl Iterator<Item = &Arc> {
        self.arcs.iter().filter(|a| a.kind == ArcKind::Real)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpanningTree {
    pub root: BusId,
    /// Tree arcs as `(parent, child)` in discovery order.
    pub arcs: Vec<(BusId, BusId)>,
    /// Parent of every non-root vertex.
    pub parent: BTreeMap<BusId, BusId>,
    /// Vertices in BFS order, starting with the root.
    pub order: Vec<BusId>,
}

impl SpanningTree {
    pub fn arc_set(&self) -> BTreeSet<(BusId, BusId)> {
        self.arcs.iter().copied().collect()
    }

    pub fn contains_edge(&self, a: BusId, b: BusId) -> bool {
        self.parent.get(&b) == Some(&a) || self.parent.get(&a) == Some(&b)
    }

    /// Vertices from `v` up to the root, inclusive.
    fn path_to_root(&self, mut v: BusId) -> Vec<BusId> {
        let mut path = vec![v];
        while let Some(&p) = self.parent.get(&v) {
            path.push(p);
            v = p;
        }
        path
    }

    /// Tree path `a, ..., b`.
    pub fn path(&self, a: BusId, b: BusId) -> Vec<BusId> {
        let up_a = self.path_to_root(a);
        let up_b = self.path_to_root(b);
        let on_b: BTreeSet<BusId> = up_b.iter().copied().collect();
        let lca_pos = up_a.iter().position(|v| on_b.contains(v)).expect("common root");
        let lca = up_a[lca_pos];
        let mut path: Vec<BusId> = up_a[..=lca_pos].to_vec();
        let b_pos = up_b.iter().position(|&v| v == lca).expect("lca on b path");
        path.extend(up_b[..b_pos].iter().rev());
        path
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycleBasis {
    pub cycles: Vec<Cycle>,
    pub tree: SpanningTree,
    pub root: BusId,
}

/// Simple undirected graph with sorted adjacency lists.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Graph {
    adj: BTreeMap<BusId, BTreeSet<BusId>>,
}

impl Graph {
    /// Builds a graph; parallel edges collapse and self-loops are ignored.
    pub fn from_edges(vertices: impl IntoIterator<Item = BusId>, edges: impl IntoIterator<Item = (BusId, BusId)>) -> Self {
        let mut adj: BTreeMap<BusId, BTreeSet<BusId>> = vertices.into_iter().map(|v| (v, BTreeSet::new())).collect();
        for (a, b) in edges {
            if a == b {
                continue;
            }
            adj.entry(a).or_default().insert(b);
            adj.entry(b).or_default().insert(a);
        }
        Graph { adj }
    }

    pub fn from_network(network: &Network) -> Self {
        Self::from_edges(
            network.buses().iter().map(|b| b.id),
            network.lines().iter().map(|l| (l.from, l.to)),
        )
    }

    pub fn vertex_count(&self) -> usize {
        self.adj.len()
    }

    pub fn edges(&self) -> BTreeSet<(BusId, BusId)> {
        self.adj
            .iter()
            .flat_map(|(&a, ns)| ns.iter().filter(move |&&b| a < b).map(move |&b| (a, b)))
            .collect()
    }

    pub fn neighbors(&self, v: BusId) -> impl Iterator<Item = BusId> + '_ {
        self.adj.get(&v).into_iter().flat_map(|s| s.iter().copied())
    }

    pub fn has_edge(&self, a: BusId, b: BusId) -> bool {
        self.adj.get(&a).is_some_and(|s| s.contains(&b))
    }

    /// Breadth-first tree visiting neighbours in ascending id order.
    pub fn spanning_tree(&self, root: BusId) -> Result<SpanningTree, GraphError> {
        if !self.adj.contains_key(&root) {
            return Err(GraphError::UnknownRoot(root));
        }
        let mut parent = BTreeMap::new();
        let mut order = vec![root];
        let mut arcs = Vec::new();
        let mut seen = BTreeSet::from([root]);
        let mut queue = VecDeque::from([root]);
        while let Some(k) = queue.pop_front() {
            for m in self.neighbors(k) {
                if seen.insert(m) {
                    parent.insert(m, k);
                    arcs.push((k, m));
                    order.push(m);
                    queue.push_back(m);
                }
            }
        }
        if seen.len() != self.adj.len() {
            return Err(GraphError::DisconnectedGraph {
                components: self.component_count(),
            });
        }
        Ok(SpanningTree { root, arcs, parent, order })
    }

    fn component_count(&self) -> usize {
        let mut seen = BTreeSet::new();
        let mut count = 0;
        for &start in self.adj.keys() {
            if !seen.insert(start) {
                continue;
            }
            count += 1;
            let mut stack = vec![start];
            while let Some(k) = stack.pop() {
                for m in self.neighbors(k) {
                    if seen.insert(m) {
                        stack.push(m);
                    }
                }
            }
        }
        count
    }

    /// One cycle per non-tree edge `(u, v)`, `u < v`: `u, v`, then the tree path back to `u`.
    pub fn fundamental_cycle_basis(&self, root: BusId) -> Result<CycleBasis, GraphError> {
        let tree = self.spanning_tree(root)?;
        let mut cycles = Vec::new();
        for (u, v) in self.edges() {
            if tree.contains_edge(u, v) {
                continue;
            }
            // tree path u .. v, walked back from v
            let path = tree.path(u, v);
            let mut vertices = vec![u];
            vertices.extend(path[1..].iter().rev());
            cycles.push(Cycle::from_vertices(vertices)?);
        }
        Ok(CycleBasis { cycles, root, tree })
    }
}

pub fn spanning_tree(network: &Network, root: BusId) -> Result<SpanningTree, GraphError> {
    Graph::from_network(network).spanning_tree(root)
}

pub fn fundamental_cycle_basis(network: &Network, root: BusId) -> Result<CycleBasis, GraphError> {
    Graph::from_network(network).fundamental_cycle_basis(root)
}

/// Splits a cycle into 3- and 4-cycles anchored at `anchor`.
///
/// Arcs are paired greedily from the anchor into 2-paths; each 2-path with
/// endpoints `i`, `e` becomes the cycle `anchor -> i`, path, `e -> anchor`, with
/// the connecting arcs tagged auxiliary unless they are zero-length. For odd
/// lengths the final arc is absorbed into the last 2-path, which then closes on
/// the anchor through a real arc. Cycles of length 3 or 4 are returned as is.
pub fn decompose_cycle(cycle: &Cycle, anchor: BusId) -> Result<Vec<Cycle>, GraphError> {
    let n = cycle.len();
    if n < 3 {
        return Err(GraphError::TooShort(n));
    }
    let c = cycle.rotate_to(anchor)?;
    if n <= 4 {
        return Ok(vec![c]);
    }
    let v = &c.vertices;
    let aux = |from: BusId, to: BusId| Arc { from, to, kind: ArcKind::Auxiliary };
    let mut out = Vec::new();
    let pairs = n / 2;
    for j in 0..pairs {
        let start = 2 * j;
        let last = j + 1 == pairs;
        let mut vertices = Vec::with_capacity(4);
        let mut arcs = Vec::with_capacity(4);
        if start != 0 {
            vertices.push(v[0]);
            arcs.push(aux(v[0], v[start]));
        }
        let take = if last && n % 2 == 1 { 3 } else { 2 };
        for k in 0..take {
            vertices.push(v[start + k]);
            arcs.push(c.arcs[start + k]);
        }
        let end = (start + take) % n;
        if end != 0 {
            vertices.push(v[end]);
            arcs.push(aux(v[end], v[0]));
        }
        out.push(Cycle { vertices, arcs });
    }
    Ok(out)
}
