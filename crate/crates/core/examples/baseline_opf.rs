//! Optimal reactive dispatch from the SOC relaxation on the 6-bus feeder,
//! checked against a brute-force grid search and certified exact.

use voltcraft::{bundled, exactness_check, grid_search_oracle, solve_baseline, SolverOptions};

fn main() -> voltcraft::Result<()> {
    let net = bundled::six_bus();
    let state = net.nominal_state(1.0, 0.8, 0.8);

    let t0 = std::time::Instant::now();
    let sol = solve_baseline(&net, &state, &SolverOptions::default())?;
    let t_ipm = t0.elapsed();
    let t0 = std::time::Instant::now();
    let grid = grid_search_oracle(&net, &state, 41)?;
    let t_grid = t0.elapsed();

    let report = exactness_check(&sol);
    println!("relaxation  loss {:.6e}  q_g {:?}  ({t_ipm:?})", sol.objective, sol.q_g_star);
    println!("grid 41x41  loss {:.6e}  q_g {:?}  ({t_grid:?})", grid.objective, grid.q_g_star);
    println!("relative difference {:.2e}", (grid.objective - sol.objective) / sol.objective);
    println!("max cone slack {:.2e}  exact: {}", report.max_abs_slack, report.exact);

    let big = bundled::surrogate_47();
    let s47 = big.nominal_state(1.0, 0.6, 0.8);
    let t0 = std::time::Instant::now();
    let sol = solve_baseline(&big, &s47, &SolverOptions::default())?;
    println!(
        "47-bus surrogate: loss {:.3} kW, cone slack {:.1e}, {:?}",
        big.pu_to_kw(sol.objective),
        sol.max_cone_slack(),
        t0.elapsed()
    );
    Ok(())
}
