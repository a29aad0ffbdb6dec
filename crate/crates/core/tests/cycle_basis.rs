mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;

use rand::Rng;

use common::{canonical, random_graph, rng};
use opf_relax::cycle_constraints::check_cycle_condition;
use opf_relax::graph::Graph;
use opf_relax::network::BusId;

type Edge = (BusId, BusId);

/// Every simple cycle, as vertex sequences starting at their smallest vertex.
fn all_cycles(graph: &Graph) -> Vec<Vec<BusId>> {
    fn extend(graph: &Graph, path: &mut Vec<BusId>, out: &mut Vec<Vec<BusId>>) {
        let (start, last) = (path[0], *path.last().unwrap());
        for next in graph.neighbors(last).collect::<Vec<_>>() {
            if next == start && path.len() >= 3 && path[1] < last {
                out.push(path.clone());
            } else if next > start && !path.contains(&next) {
                path.push(next);
                extend(graph, path, out);
                path.pop();
            }
        }
    }
    let mut out = Vec::new();
    let vertices: BTreeSet<BusId> = graph.edges().into_iter().flat_map(|(a, b)| [a, b]).collect();
    for v in vertices {
        extend(graph, &mut vec![v], &mut out);
    }
    out
}

fn edges_of(vertices: &[BusId]) -> BTreeSet<Edge> {
    (0..vertices.len())
        .map(|i| canonical(vertices[i], vertices[(i + 1) % vertices.len()]))
        .collect()
}

/// Gaussian elimination over GF(2); returns whether `target` is in the span.
fn in_span(basis: &[BTreeSet<Edge>], target: &BTreeSet<Edge>) -> bool {
    let mut rows: Vec<BTreeSet<Edge>> = Vec::new();
    for b in basis {
        let mut r = b.clone();
        for row in &rows {
            let pivot = row.iter().next().unwrap();
            if r.contains(pivot) {
                r = r.symmetric_difference(row).copied().collect();
            }
        }
        if !r.is_empty() {
            rows.push(r);
        }
    }
    let mut t = target.clone();
    for row in &rows {
        let pivot = row.iter().next().unwrap();
        if t.contains(pivot) {
            t = t.symmetric_difference(row).copied().collect();
        }
    }
    t.is_empty()
}

#[test]
fn basis_generates_every_cycle() {
    let mut r = rng(30);
    for _ in 0..60 {
        let n = r.gen_range(3..=8);
        let extra = r.gen_range(0..=8);
        let graph = Graph::from_edges((1..=n).map(BusId), random_graph(&mut r, n, extra));
        let basis = graph.fundamental_cycle_basis(BusId(1)).unwrap();
        assert_eq!(basis.cycles.len() + n, graph.edges().len() + 1);
        let sets: Vec<BTreeSet<Edge>> = basis.cycles.iter().map(|c| edges_of(&c.vertices)).collect();
        // independent: each basis cycle owns exactly one non-tree edge
        for (c, set) in basis.cycles.iter().zip(&sets) {
            let chords: Vec<&Edge> = set.iter().filter(|&&(a, b)| !basis.tree.contains_edge(a, b)).collect();
            assert_eq!(chords.len(), 1, "{c:?}");
        }
        for cycle in all_cycles(&graph) {
            assert!(in_span(&sets, &edges_of(&cycle)), "{cycle:?}");
        }
    }
}

#[test]
fn basis_condition_implies_every_cycle() {
    let mut r = rng(31);
    for _ in 0..60 {
        let n = r.gen_range(3..=8);
        let extra = r.gen_range(1..=8);
        let graph = Graph::from_edges((1..=n).map(BusId), random_graph(&mut r, n, extra));
        let basis = graph.fundamental_cycle_basis(BusId(1)).unwrap();

        // tree arcs get arbitrary angles; each chord is solved from its basis cycle, up to 2 pi k
        let mut angle: BTreeMap<Edge, f64> = BTreeMap::new();
        for &(p, c) in &basis.tree.arcs {
            let t = r.gen_range(-PI..PI);
            angle.insert(canonical(p, c), if p < c { t } else { -t });
        }
        let directed = |angle: &BTreeMap<Edge, f64>, a: BusId, b: BusId| {
            angle.get(&canonical(a, b)).map(|&t| if a < b { t } else { -t })
        };
        for c in &basis.cycles {
            let (u, v) = (c.vertices[0], c.vertices[1]);
            let rest: f64 = c.arcs[1..].iter().map(|a| directed(&angle, a.from, a.to).unwrap()).sum();
            let t = -rest + 2.0 * PI * r.gen_range(-1..=1) as f64;
            angle.insert(canonical(u, v), if u < v { t } else { -t });
        }
        for c in &basis.cycles {
            let theta: Vec<f64> = c.arcs.iter().map(|a| directed(&angle, a.from, a.to).unwrap()).collect();
            assert!(check_cycle_condition(&theta, 1e-9));
        }
        for cycle in all_cycles(&graph) {
            let theta: Vec<f64> = (0..cycle.len())
                .map(|i| directed(&angle, cycle[i], cycle[(i + 1) % cycle.len()]).unwrap())
                .collect();
            assert!(check_cycle_condition(&theta, 1e-9), "{cycle:?}");
        }
    }
}

#[test]
fn complete_graph_cycle_count() {
    // K4 has 7 simple cycles: 4 triangles and 3 squares
    let edges = [(1, 2), (1, 3), (1, 4), (2, 3), (2, 4), (3, 4)].map(|(a, b)| (BusId(a), BusId(b)));
    let graph = Graph::from_edges((1..=4).map(BusId), edges);
    assert_eq!(all_cycles(&graph).len(), 7);
}
