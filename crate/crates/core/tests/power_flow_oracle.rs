//! Branch flows checked against a complex-phasor ladder sweep.

use nalgebra::Complex;
use proptest::prelude::*;
use voltcraft::network::FeederBuilder;
use voltcraft::powerflow::branch_flow_residuals;
use voltcraft::{bundled, injection_vectors, solve_power_flow, BusId, NetworkModel, PowerFlowSolution};

type C = Complex<f64>;

/// Current-summation sweep on bus phasors. Returns sending-end (P, Q), |I|^2
/// per line and |V|^2 per bus.
fn phasor_oracle(net: &NetworkModel, p: &[f64], q: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
    let nb = net.n_buses();
    let order = net.topological_order();
    let mut volt = vec![C::new(net.v0().sqrt(), 0.0); nb];
    let mut current = vec![C::new(0.0, 0.0); nb];
    for _ in 0..500 {
        for b in 1..nb {
            let s = C::new(p[b - 1], q[b - 1]);
            current[b] = -(s / volt[b]).conj();
        }
        for &b in order.iter().rev() {
            if b == BusId::ROOT {
                continue;
            }
            let parent = net.parent(b).unwrap();
            if parent != BusId::ROOT {
                let i = current[b.index()];
                current[parent.index()] += i;
            }
        }
        let prev = volt.clone();
        for &b in &order[1..] {
            let line = net.line(b).unwrap();
            let z = C::new(line.r, line.x);
            volt[b.index()] = volt[line.parent.index()] - z * current[b.index()];
        }
        let change = volt.iter().zip(&prev).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        if change < 1e-15 {
            break;
        }
    }
    let n = nb - 1;
    let (mut pl, mut ql, mut ell) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for b in 1..nb {
        let parent = net.parent(BusId(b)).unwrap().index();
        let s = volt[parent] * current[b].conj();
        pl[b - 1] = s.re;
        ql[b - 1] = s.im;
        ell[b - 1] = current[b].norm_sqr();
    }
    (pl, ql, ell, volt.iter().map(|v| v.norm_sqr()).collect())
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn compare(net: &NetworkModel, p: &[f64], q: &[f64]) -> (PowerFlowSolution, f64) {
    let sol = solve_power_flow(net, p, q).unwrap();
    let (pl, ql, ell, v) = phasor_oracle(net, p, q);
    let err = [
        max_diff(&sol.p_line, &pl),
        max_diff(&sol.q_line, &ql),
        max_diff(&sol.ell, &ell),
        max_diff(&sol.v, &v),
    ]
    .into_iter()
    .fold(0.0, f64::max);
    (sol, err)
}

#[test]
fn six_bus_matches_phasor_sweep() {
    let net = bundled::six_bus();
    for (load, pv) in [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (2.5, 0.3), (0.2, 1.0)] {
        let s = net.nominal_state(load, pv, 0.8);
        for action in [[0.0, 0.0], [0.1, -0.05], [-0.2, 0.15]] {
            let (p, q) = injection_vectors(&net, &s, &action).unwrap();
            let (_, err) = compare(&net, &p, &q);
            assert!(err <= 1e-10, "load {load} pv {pv} action {action:?}: {err:e}");
        }
    }
}

#[test]
fn surrogate_matches_phasor_sweep() {
    let net = bundled::surrogate_47();
    let s = net.nominal_state(1.0, 0.7, 0.8);
    let (_, hi) = net.action_box();
    let (p, q) = injection_vectors(&net, &s, &hi).unwrap();
    let (sol, err) = compare(&net, &p, &q);
    assert!(err <= 1e-10, "{err:e}");
    let res = branch_flow_residuals(&net, &p, &q, &sol.p_line, &sol.q_line, &sol.ell, &sol.v);
    assert!(res.iter().all(|r| *r <= 1e-10), "{res:?}");
}

fn random_tree() -> impl Strategy<Value = (NetworkModel, Vec<f64>, Vec<f64>)> {
    (2usize..20)
        .prop_flat_map(|n| {
            (
                proptest::collection::vec(0.0f64..1.0, n),
                proptest::collection::vec((0.001f64..0.02, 0.001f64..0.03), n),
                proptest::collection::vec((-0.3f64..0.2, -0.2f64..0.2), n),
            )
        })
        .prop_map(|(attach, z, pq)| {
            let mut b = FeederBuilder::new();
            for (i, (a, (r, x))) in attach.iter().zip(&z).enumerate() {
                let bus = i + 1;
                let parent = (a * bus as f64) as usize;
                b = b.line(parent, bus, *r, *x);
            }
            let net = b.build().unwrap();
            let (p, q) = pq.into_iter().unzip();
            (net, p, q)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_radial_feeders_match_phasor_sweep((net, p, q) in random_tree()) {
        let (sol, err) = compare(&net, &p, &q);
        prop_assert!(err <= 1e-10, "{:e}", err);
        let res = branch_flow_residuals(&net, &p, &q, &sol.p_line, &sol.q_line, &sol.ell, &sol.v);
        prop_assert!(res.iter().all(|r| *r <= 1e-10), "{:?}", res);
    }
}
