#![allow(dead_code)]

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::path::PathBuf;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use opf_relax::jabr::PolarPoint;
use opf_relax::matpower::{load_reference_objectives, parse_case, ReferenceObjectives};
use opf_relax::network::{Bus, BusId, CostCurve, Generator, Line, Network};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn data_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

pub fn load_case(name: &str) -> Network {
    let text = std::fs::read_to_string(data_path(&format!("{name}.m"))).expect("case file");
    parse_case(&text).expect("valid case")
}

pub fn references() -> ReferenceObjectives {
    let text = std::fs::read_to_string(data_path("references.txt")).expect("references");
    load_reference_objectives(&text).expect("valid references")
}

pub fn canonical(a: BusId, b: BusId) -> (BusId, BusId) {
    (a.min(b), a.max(b))
}

/// Connected simple graph on buses `1..=n`: a random tree plus up to `extra` chords.
pub fn random_graph(rng: &mut impl Rng, n: usize, extra: usize) -> BTreeSet<(BusId, BusId)> {
    let mut edges = BTreeSet::new();
    for v in 2..=n {
        let parent = rng.gen_range(1..v);
        edges.insert(canonical(BusId(parent), BusId(v)));
    }
    for _ in 0..extra {
        let a = rng.gen_range(1..=n);
        let b = rng.gen_range(1..=n);
        if a != b {
            edges.insert(canonical(BusId(a), BusId(b)));
        }
    }
    edges
}

/// Random network on a random connected graph, with taps on some lines.
pub fn random_network(rng: &mut impl Rng, n: usize, extra: usize) -> Network {
    let buses = (1..=n)
        .map(|i| Bus {
            id: BusId(i),
            g_shunt: if rng.gen_bool(0.2) { rng.gen_range(0.0..0.05) } else { 0.0 },
            b_shunt: if rng.gen_bool(0.2) { rng.gen_range(-0.1..0.1) } else { 0.0 },
            v_min: 0.9,
            v_max: 1.1,
            p_load: rng.gen_range(0.0..0.5),
            q_load: rng.gen_range(0.0..0.2),
        })
        .collect();
    let lines = random_graph(rng, n, extra)
        .into_iter()
        .map(|(a, b)| {
            let (ratio, shift) = if rng.gen_bool(0.2) {
                (rng.gen_range(0.95..1.05), rng.gen_range(-0.05..0.05))
            } else {
                (0.0, 0.0)
            };
            let (from, to) = if rng.gen_bool(0.5) { (a, b) } else { (b, a) };
            Line::from_branch(
                from,
                to,
                rng.gen_range(0.001..0.05),
                rng.gen_range(0.01..0.2),
                rng.gen_range(0.0..0.1),
                ratio,
                shift,
            )
            .unwrap()
        })
        .collect();
    let generators = vec![Generator {
        bus: BusId(1),
        p_min: 0.0,
        p_max: 10.0,
        q_min: -10.0,
        q_max: 10.0,
        cost: CostCurve { c2: 1.0, c1: 10.0, c0: 0.0 },
    }];
    Network::new(100.0, buses, generators, lines).unwrap()
}

pub fn random_point(rng: &mut impl Rng, network: &Network) -> PolarPoint {
    let n = network.buses().len();
    let g = network.generators().len();
    PolarPoint {
        v_mag: (0..n).map(|_| rng.gen_range(0.9..1.1)).collect(),
        delta: (0..n).map(|_| rng.gen_range(-PI..PI)).collect(),
        p_gen: (0..g).map(|_| rng.gen_range(0.0..2.0)).collect(),
        q_gen: (0..g).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    }
}

/// Distance between two angles modulo `2 pi`.
pub fn angle_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(2.0 * PI);
    d.min(2.0 * PI - d)
}
