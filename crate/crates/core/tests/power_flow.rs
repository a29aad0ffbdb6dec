mod common;

use std::collections::BTreeSet;

use num_complex::Complex64;
use rand::Rng;

use common::{load_case, random_point, rng};
use opf_relax::bench::{run, Strengthening, VariantSpec};
use opf_relax::graph::fundamental_cycle_basis;
use opf_relax::jabr::{build_jabr_socp, jabr_tightness, lift, polar_residuals, ObjectiveMode, PolarPoint};
use opf_relax::matpower::ReferenceObjectives;
use opf_relax::network::{Bus, BusId, Line, Network};
use opf_relax::recovery::{certify, Tolerances};

struct RawBranch {
    from: usize,
    to: usize,
    r: f64,
    x: f64,
    b: f64,
    ratio: f64,
    shift: f64,
}

/// Terminal powers of a branch from its circuit: an ideal transformer
/// `t = ratio e^{i shift}` at the from end, then the series impedance with
/// half the charging at each side.
fn branch_powers(br: &RawBranch, vf: Complex64, vt: Complex64) -> (Complex64, Complex64) {
    let ratio = if br.ratio == 0.0 { 1.0 } else { br.ratio };
    let t = Complex64::from_polar(ratio, br.shift);
    let ys = Complex64::new(br.r, br.x).inv();
    let half = Complex64::new(0.0, br.b / 2.0);
    let vf_inner = vf / t;
    let i_inner = ys * (vf_inner - vt) + half * vf_inner;
    let i_from = i_inner / t.conj();
    let i_to = ys * (vt - vf_inner) + half * vt;
    (vf * i_from.conj(), vt * i_to.conj())
}

fn random_branches(r: &mut impl Rng, n: usize) -> Vec<RawBranch> {
    let mut out = Vec::new();
    for v in 2..=n {
        out.push(RawBranch {
            from: r.gen_range(1..v),
            to: v,
            r: r.gen_range(0.0..0.05),
            x: r.gen_range(0.01..0.3),
            b: r.gen_range(0.0..0.3),
            ratio: if r.gen_bool(0.3) { r.gen_range(0.9..1.1) } else { 0.0 },
            shift: if r.gen_bool(0.3) { r.gen_range(-0.2..0.2) } else { 0.0 },
        });
    }
    for _ in 0..n / 2 {
        let (a, b) = (r.gen_range(1..=n), r.gen_range(1..=n));
        if a != b {
            out.push(RawBranch {
                from: a,
                to: b,
                r: r.gen_range(0.0..0.05),
                x: r.gen_range(0.01..0.3),
                b: r.gen_range(0.0..0.3),
                ratio: 0.0,
                shift: 0.0,
            });
        }
    }
    out
}

#[test]
fn injections_match_circuit_model() {
    let mut r = rng(20);
    for _ in 0..50 {
        let n = r.gen_range(2..=12);
        let branches = random_branches(&mut r, n);
        let buses: Vec<Bus> = (1..=n)
            .map(|i| Bus {
                id: BusId(i),
                g_shunt: r.gen_range(0.0..0.1),
                b_shunt: r.gen_range(-0.2..0.2),
                v_min: 0.9,
                v_max: 1.1,
                p_load: 0.0,
                q_load: 0.0,
            })
            .collect();
        let lines: Vec<Line> = branches
            .iter()
            .map(|b| Line::from_branch(BusId(b.from), BusId(b.to), b.r, b.x, b.b, b.ratio, b.shift).unwrap())
            .collect();
        let net = Network::new(100.0, buses.clone(), vec![], lines).unwrap();
        let point = random_point(&mut r, &net);
        let v: Vec<Complex64> = (0..n).map(|k| Complex64::from_polar(point.v_mag[k], point.delta[k])).collect();

        let mut expected: Vec<Complex64> = (0..n)
            .map(|k| v[k] * (Complex64::new(buses[k].g_shunt, buses[k].b_shunt) * v[k]).conj())
            .collect();
        for b in &branches {
            let (sf, st) = branch_powers(b, v[b.from - 1], v[b.to - 1]);
            expected[b.from - 1] += sf;
            expected[b.to - 1] += st;
        }
        let res = polar_residuals(&net, &point);
        for k in 0..n {
            assert!((res.p_balance[k] - expected[k].re).abs() < 1e-10, "P at bus {}", k + 1);
            assert!((res.q_balance[k] - expected[k].im).abs() < 1e-10, "Q at bus {}", k + 1);
        }
    }
}

#[test]
fn lifted_flows_match_circuit_model() {
    let mut r = rng(21);
    let br = RawBranch {
        from: 1,
        to: 2,
        r: 0.02,
        x: 0.08,
        b: 0.1,
        ratio: 0.97,
        shift: 0.05,
    };
    let line = Line::from_branch(BusId(1), BusId(2), br.r, br.x, br.b, br.ratio, br.shift).unwrap();
    let bus = |i| Bus {
        id: BusId(i),
        g_shunt: 0.0,
        b_shunt: 0.0,
        v_min: 0.9,
        v_max: 1.1,
        p_load: 0.0,
        q_load: 0.0,
    };
    let net = Network::new(100.0, vec![bus(1), bus(2)], vec![], vec![line]).unwrap();
    let model = build_jabr_socp(&net, &BTreeSet::new(), ObjectiveMode::Linear).unwrap();
    for _ in 0..100 {
        let point = random_point(&mut r, &net);
        let x = lift(&net, &model, &point);
        let vf = Complex64::from_polar(point.v_mag[0], point.delta[0]);
        let vt = Complex64::from_polar(point.v_mag[1], point.delta[1]);
        let (sf, st) = branch_powers(&br, vf, vt);
        let [pf, pt] = model.vars.p_flow[0];
        let [qf, qt] = model.vars.q_flow[0];
        assert!((x[pf.0] - sf.re).abs() < 1e-12 && (x[qf.0] - sf.im).abs() < 1e-12);
        assert!((x[pt.0] - st.re).abs() < 1e-12 && (x[qt.0] - st.im).abs() < 1e-12);
    }
}

#[test]
fn lifted_points_are_tight() {
    let mut r = rng(22);
    for case in ["case9", "case30", "case118"] {
        let net = load_case(case);
        let model = build_jabr_socp(&net, &BTreeSet::new(), ObjectiveMode::Quadratic).unwrap();
        let x = lift(&net, &model, &random_point(&mut r, &net));
        for p in jabr_tightness(&model.vars, &x) {
            assert!(p.residual.abs() < 1e-12, "{case} {}-{}", p.from, p.to);
        }
    }
}

#[test]
fn shipped_cases_solve_below_reference() {
    let refs = common::references();
    for case in ["case9", "case14", "case30", "case57", "case118"] {
        let net = load_case(case);
        let rep = run(case, &net, &VariantSpec::new(Strengthening::None), &refs, None).unwrap();
        let reference = refs.get(case).unwrap();
        assert!(rep.lower_bound <= reference * (1.0 + 1e-6), "{case}");
        assert!(rep.gap_percent.unwrap() >= -1e-4, "{case}");
    }
}

#[test]
fn meshed_solution_is_not_certified() {
    let net = load_case("case30");
    let rep = run(
        "case30",
        &net,
        &VariantSpec::new(Strengthening::None),
        &ReferenceObjectives::default(),
        None,
    )
    .unwrap();
    let ex = &rep.exactness;
    assert!(!ex.exact);
    assert!(ex.polar_residual_inf > 1e-3);
    let worst = ex.worst_pair.expect("pairs exist");
    let max = ex.soc_residuals.iter().map(|p| p.residual.abs()).fold(0.0, f64::max);
    assert_eq!(worst.residual.abs(), max);
    assert_eq!(ex.cycle_residuals.len(), net.adjacent_pairs().len() - net.buses().len() + 1);
}

#[test]
fn linear_objective_bounds_quadratic() {
    let net = load_case("case9");
    let refs = ReferenceObjectives::default();
    let quad = run("case9", &net, &VariantSpec::new(Strengthening::None), &refs, None).unwrap();
    let mut spec = VariantSpec::new(Strengthening::None);
    spec.objective_mode = ObjectiveMode::Linear;
    let lin = run("case9", &net, &spec, &refs, None).unwrap();
    assert!(lin.lower_bound <= quad.lower_bound + 1e-6 * quad.lower_bound);
}

#[test]
fn certify_accepts_feasible_polar_point() {
    // a point that balances exactly once loads are read back from it
    let mut r = rng(23);
    let net = load_case("case14");
    let mut point = PolarPoint::flat(&net);
    for (k, v) in point.v_mag.iter_mut().enumerate() {
        *v = 1.0 + 0.01 * (k % 3) as f64;
    }
    for d in point.delta.iter_mut().skip(1) {
        *d = r.gen_range(-0.05..0.05);
    }
    let res = polar_residuals(&net, &point);
    let mut buses = net.buses().to_vec();
    for (k, bus) in buses.iter_mut().enumerate() {
        // loads absorb the imbalance; generators stay at zero output
        bus.p_load -= res.p_balance[k];
        bus.q_load -= res.q_balance[k];
    }
    let mut generators = net.generators().to_vec();
    for g in &mut generators {
        g.p_min = 0.0;
        g.q_min = g.q_min.min(0.0);
        g.q_max = g.q_max.max(0.0);
    }
    let balanced = Network::new(net.base_mva, buses, generators, net.lines().to_vec()).unwrap();
    assert!(polar_residuals(&balanced, &point).inf_norm() < 1e-12);

    let model = build_jabr_socp(&balanced, &BTreeSet::new(), ObjectiveMode::Quadratic).unwrap();
    let x = lift(&balanced, &model, &point);
    let root = balanced.reference_bus().unwrap();
    let basis = fundamental_cycle_basis(&balanced, root).unwrap();
    let rep = certify(&balanced, &model, &x, &basis, Tolerances::default());
    assert!(rep.exact, "{rep:?}");
    assert!(rep.cycle_residuals.iter().all(|&c| c < 1e-12));
}
