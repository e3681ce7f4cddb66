//! Exact branch flows on the bundled 47-bus surrogate at nominal loading,
//! with and without reactive support from the inverters.

use voltcraft::powerflow::branch_flow_residuals;
use voltcraft::{bundled, injection_vectors, solve_power_flow, BusId};

fn main() -> voltcraft::Result<()> {
    let net = bundled::surrogate_47();
    let state = net.nominal_state(1.0, 0.6, 0.8);
    let (_, q_max) = net.action_box();

    for (name, action) in [("no support", vec![0.0; net.n_inverters()]), ("full injection", q_max)] {
        let (p, q) = injection_vectors(&net, &state, &action)?;
        let t0 = std::time::Instant::now();
        let sol = solve_power_flow(&net, &p, &q)?;
        let dt = t0.elapsed();
        let res = branch_flow_residuals(&net, &p, &q, &sol.p_line, &sol.q_line, &sol.ell, &sol.v)
            .into_iter()
            .fold(0.0, f64::max);
        let (vmin, at) = sol
            .v
            .iter()
            .enumerate()
            .map(|(b, v)| (v.sqrt(), b))
            .fold((f64::INFINITY, 0), |a, b| if b.0 < a.0 { b } else { a });
        println!("{name}:");
        println!("  loss            {:.4} kW", net.pu_to_kw(sol.loss));
        println!("  lowest voltage  {vmin:.4} pu at bus {}", net.label(BusId(at)));
        println!("  substation draw {:.1} kW", net.pu_to_kw(sol.substation_p(&net)));
        println!("  iterations {}  max residual {res:.2e}  time {dt:?}", sol.iterations);
    }
    Ok(())
}
