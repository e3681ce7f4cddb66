//! Optimal reactive dispatch under the second-order cone relaxation of the
//! branch-flow model, plus a brute-force grid oracle and an exactness check.
//!
//! The relaxation replaces `l_n = (P_n^2 + Q_n^2) / v_pi(n)` with the rotated
//! cone `|| (2 P_n, 2 Q_n, l_n - v_pi(n)) || <= l_n + v_pi(n)`. On a tree the
//! flow balances and voltage drops are linear, so `P`, `Q` and `v` are affine
//! in `(l, q_g)` and the program is solved directly over those variables.

pub mod conic;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{BusId, GridState, NetworkModel};
use crate::powerflow::{
    band_violation, branch_flow_residuals, evaluate_loss_with, ActionMode, EvalConfig, PowerFlowSolution,
};
use conic::{ConeDims, ConeProgram, IpmSettings};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub kkt_tol: f64,
    pub feas_tol: f64,
    pub exact_tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            kkt_tol: 1e-8,
            feas_tol: 1e-8,
            exact_tol: 1e-6,
            max_iter: 100,
        }
    }
}

/// Optimal (or oracle) dispatch for one interval.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OpfSolution {
    pub q_g_star: Vec<f64>,
    pub flows: PowerFlowSolution,
    pub objective: f64,
    /// `(P^2 + Q^2) / v_pi - l` per line; non-positive up to solver tolerance.
    pub cone_residuals: Vec<f64>,
    pub exact: bool,
    /// `None` for the grid oracle, which has no optimality certificate.
    pub kkt_residual: Option<f64>,
}

impl OpfSolution {
    pub fn max_cone_slack(&self) -> f64 {
        self.cone_residuals.iter().fold(0.0f64, |m, r| m.max(r.abs()))
    }
}

/// Which way the relaxation's loss objective points.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RelaxationObjective {
    MinimizeLoss,
    /// Only useful for probing exactness: the optimum drives currents away
    /// from the cone boundary.
    MaximizeLoss,
}

/// `c + a'x` over the decision vector.
#[derive(Clone, Debug)]
struct Affine {
    c: f64,
    a: Vec<f64>,
}

impl Affine {
    fn constant(c: f64, n: usize) -> Self {
        Affine { c, a: vec![0.0; n] }
    }

    fn eval(&self, x: &[f64]) -> f64 {
        self.c + self.a.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
    }

    fn axpy(&mut self, k: f64, other: &Affine) {
        self.c += k * other.c;
        self.a.iter_mut().zip(&other.a).for_each(|(s, o)| *s += k * o);
    }
}

/// Flows as affine functions of `x = (l_1..l_N, q_g_1..q_g_M, extra..)`.
struct AffineFlows {
    p: Vec<Affine>,
    q: Vec<Affine>,
    /// Indexed by bus; `v[0]` is the constant substation voltage.
    v: Vec<Affine>,
}

impl AffineFlows {
    fn build(model: &NetworkModel, state: &GridState, n_vars: usize) -> Self {
        let n = model.n_lines();
        let lines = model.lines();
        let mut p: Vec<Affine> = Vec::with_capacity(n);
        let mut q: Vec<Affine> = Vec::with_capacity(n);
        for (i, line) in lines.iter().enumerate() {
            let mut pa = Affine::constant(-state.p[i], n_vars);
            pa.a[i] = line.r;
            let mut qa = Affine::constant(state.q_c[i], n_vars);
            qa.a[i] = line.x;
            if let Some(k) = model.inverter_at(line.bus) {
                qa.a[n + k] = -1.0;
            }
            p.push(pa);
            q.push(qa);
        }
        let order = model.topological_order();
        for &b in order[1..].iter().rev() {
            let i = b.index() - 1;
            let parent = lines[i].parent;
            if parent != BusId::ROOT {
                let (pi, qi) = (p[i].clone(), q[i].clone());
                p[parent.index() - 1].axpy(1.0, &pi);
                q[parent.index() - 1].axpy(1.0, &qi);
            }
        }
        let mut v = vec![Affine::constant(model.v0(), n_vars); n + 1];
        for &b in &order[1..] {
            let i = b.index() - 1;
            let line = &lines[i];
            let mut vb = v[line.parent.index()].clone();
            vb.axpy(-2.0 * line.r, &p[i]);
            vb.axpy(-2.0 * line.x, &q[i]);
            vb.a[i] += line.r * line.r + line.x * line.x;
            v[b.index()] = vb;
        }
        AffineFlows { p, q, v }
    }
}

/// Row-by-row builder for `expr >= 0` / `expr in SOC` constraints.
struct ConeRows {
    n_vars: usize,
    nonneg: Vec<Affine>,
    soc: Vec<Vec<Affine>>,
}

impl ConeRows {
    fn into_program(self, c: Vec<f64>) -> Result<ConeProgram> {
        let m = self.nonneg.len() + self.soc.iter().map(Vec::len).sum::<usize>();
        let mut g = DMatrix::zeros(m, self.n_vars);
        let mut h = DVector::zeros(m);
        let dims = ConeDims {
            nonneg: self.nonneg.len(),
            soc: self.soc.iter().map(Vec::len).collect(),
        };
        // s = h - G x = c + a'x
        for (row, expr) in self.nonneg.iter().chain(self.soc.iter().flatten()).enumerate() {
            h[row] = expr.c;
            for (j, a) in expr.a.iter().enumerate() {
                g[(row, j)] = -a;
            }
        }
        ConeProgram::new(DVector::from_vec(c), g, h, dims)
    }
}

/// Assembles the relaxation; `elastic` appends one variable `e` that widens
/// every band constraint and becomes the objective (least-violation mode).
fn build_program(model: &NetworkModel, state: &GridState, objective: RelaxationObjective, elastic: bool) -> Result<ConeProgram> {
    let n = model.n_lines();
    let m_inv = model.n_inverters();
    let n_vars = n + m_inv + usize::from(elastic);
    let flows = AffineFlows::build(model, state, n_vars);
    let mut rows = ConeRows {
        n_vars,
        nonneg: Vec::new(),
        soc: Vec::new(),
    };
    for (k, inv) in model.inverters().iter().enumerate() {
        let mut lo = Affine::constant(-inv.q_min, n_vars);
        lo.a[n + k] = 1.0;
        let mut hi = Affine::constant(inv.q_max, n_vars);
        hi.a[n + k] = -1.0;
        rows.nonneg.push(lo);
        rows.nonneg.push(hi);
    }
    for b in 1..=n {
        let (v_min, v_max) = model.voltage_band(BusId(b));
        let mut lo = flows.v[b].clone();
        lo.c -= v_min;
        let mut hi = Affine::constant(v_max, n_vars);
        hi.axpy(-1.0, &flows.v[b]);
        if elastic {
            lo.a[n_vars - 1] = 1.0;
            hi.a[n_vars - 1] = 1.0;
        }
        rows.nonneg.push(lo);
        rows.nonneg.push(hi);
    }
    if elastic {
        let mut e = Affine::constant(0.0, n_vars);
        e.a[n_vars - 1] = 1.0;
        rows.nonneg.push(e);
    }
    for (i, line) in model.lines().iter().enumerate() {
        let vp = &flows.v[line.parent.index()];
        let mut ell = Affine::constant(0.0, n_vars);
        ell.a[i] = 1.0;
        let mut t = ell.clone();
        t.axpy(1.0, vp);
        let mut p2 = Affine::constant(0.0, n_vars);
        p2.axpy(2.0, &flows.p[i]);
        let mut q2 = Affine::constant(0.0, n_vars);
        q2.axpy(2.0, &flows.q[i]);
        let mut diff = ell;
        diff.axpy(-1.0, vp);
        rows.soc.push(vec![t, p2, q2, diff]);
    }
    let mut c = vec![0.0; n_vars];
    if elastic {
        c[n_vars - 1] = 1.0;
    } else {
        let sign = match objective {
            RelaxationObjective::MinimizeLoss => 1.0,
            RelaxationObjective::MaximizeLoss => -1.0,
        };
        for (i, line) in model.lines().iter().enumerate() {
            c[i] = sign * line.r;
        }
    }
    rows.into_program(c)
}

fn recover(model: &NetworkModel, state: &GridState, x: &[f64], iterations: usize, opts: &SolverOptions) -> OpfSolution {
    let n = model.n_lines();
    let m_inv = model.n_inverters();
    let flows = AffineFlows::build(model, state, x.len());
    let ell: Vec<f64> = x[..n].to_vec();
    let q_g_star: Vec<f64> = model
        .inverters()
        .iter()
        .zip(&x[n..n + m_inv])
        .map(|(inv, &q)| q.clamp(inv.q_min, inv.q_max))
        .collect();
    let p_line: Vec<f64> = flows.p.iter().map(|a| a.eval(x)).collect();
    let q_line: Vec<f64> = flows.q.iter().map(|a| a.eval(x)).collect();
    let v: Vec<f64> = flows.v.iter().map(|a| a.eval(x)).collect();
    let cone_residuals: Vec<f64> = model
        .lines()
        .iter()
        .enumerate()
        .map(|(i, line)| (p_line[i] * p_line[i] + q_line[i] * q_line[i]) / v[line.parent.index()] - ell[i])
        .collect();
    let objective = model.lines().iter().zip(&ell).map(|(l, e)| l.r * e).sum();
    let (p_inj, q_inj) = crate::powerflow::injection_vectors(model, state, &x[n..n + m_inv]).expect("validated");
    let res = branch_flow_residuals(model, &p_inj, &q_inj, &p_line, &q_line, &ell, &v);
    let exact = cone_residuals.iter().all(|r| r.abs() <= opts.exact_tol);
    OpfSolution {
        q_g_star,
        flows: PowerFlowSolution {
            p_line,
            q_line,
            ell,
            v,
            loss: objective,
            iterations,
            converged: true,
            max_residual: res.iter().cloned().fold(0.0, f64::max),
        },
        objective,
        cone_residuals,
        exact,
        kkt_residual: None,
    }
}

/// Jointly optimal inverter setpoints under the cone relaxation.
pub fn solve_baseline(model: &NetworkModel, state: &GridState, opts: &SolverOptions) -> Result<OpfSolution> {
    solve_relaxation(model, state, RelaxationObjective::MinimizeLoss, opts)
}

pub fn solve_relaxation(
    model: &NetworkModel,
    state: &GridState,
    objective: RelaxationObjective,
    opts: &SolverOptions,
) -> Result<OpfSolution> {
    state.validate(model)?;
    let prog = build_program(model, state, objective, false)?;
    let settings = IpmSettings {
        tol: opts.kkt_tol * 0.5,
        max_iter: opts.max_iter,
        ..IpmSettings::default()
    };
    match conic::solve(&prog, &settings) {
        Ok(sol) => {
            let mut out = recover(model, state, sol.x.as_slice(), sol.iterations, opts);
            out.kkt_residual = Some(sol.kkt_residual());
            Ok(out)
        }
        Err(err @ (Error::MaxIterations(_) | Error::Numerical(_))) => {
            // Distinguish an infeasible band from a solver failure.
            match least_violation(model, state, opts) {
                Ok((viol, q_g)) if viol > opts.feas_tol => Err(Error::Infeasible {
                    max_violation: viol,
                    q_g,
                }),
                _ => Err(err),
            }
        }
        Err(e) => Err(e),
    }
}

/// Smallest uniform widening of the voltage band that makes the relaxation
/// feasible, with the corresponding setpoints.
pub fn least_violation(model: &NetworkModel, state: &GridState, opts: &SolverOptions) -> Result<(f64, Vec<f64>)> {
    let prog = build_program(model, state, RelaxationObjective::MinimizeLoss, true)?;
    let settings = IpmSettings {
        tol: opts.kkt_tol * 0.5,
        max_iter: opts.max_iter,
        ..IpmSettings::default()
    };
    let sol = conic::solve(&prog, &settings)?;
    let n = model.n_lines();
    let m_inv = model.n_inverters();
    let q_g = sol.x.as_slice()[n..n + m_inv].to_vec();
    Ok((sol.x[n + m_inv].max(0.0), q_g))
}

/// Exhaustive search over a uniform grid on the action box, evaluated with
/// the exact power flow. Voltage-infeasible points are rejected outright.
pub fn grid_search_oracle(model: &NetworkModel, state: &GridState, points_per_axis: usize) -> Result<OpfSolution> {
    let m_inv = model.n_inverters();
    if m_inv > 3 {
        return Err(Error::TooManyInverters(m_inv));
    }
    if points_per_axis < 3 {
        return Err(Error::InvalidParameter(format!(
            "grid search needs at least 3 points per axis, got {points_per_axis}"
        )));
    }
    state.validate(model)?;
    let axes: Vec<Vec<f64>> = model
        .inverters()
        .iter()
        .map(|inv| {
            let last = points_per_axis - 1;
            (0..points_per_axis)
                .map(|k| match k {
                    0 => inv.q_min,
                    k if k == last => inv.q_max,
                    k => (inv.q_min + inv.width() * k as f64 / last as f64).min(inv.q_max),
                })
                .collect()
        })
        .collect();
    let cfg = EvalConfig {
        penalty_coeff: 0.0,
        action_mode: ActionMode::Strict,
        ..EvalConfig::default()
    };
    let total = points_per_axis.pow(m_inv as u32);
    let mut best: Option<(f64, Vec<f64>, PowerFlowSolution)> = None;
    let mut action = vec![0.0; m_inv];
    for idx in 0..total {
        // Row-major: the first inverter varies slowest, so iteration order is
        // lexicographic and the first minimum found is the smallest action.
        let mut rem = idx;
        for k in (0..m_inv).rev() {
            action[k] = axes[k][rem % points_per_axis];
            rem /= points_per_axis;
        }
        let ev = match evaluate_loss_with(model, state, &action, &cfg) {
            Ok(ev) if ev.feasible => ev,
            Ok(_) | Err(Error::Diverged { .. }) => continue,
            Err(e) => return Err(e),
        };
        if best.as_ref().is_none_or(|(obj, _, _)| ev.objective < *obj) {
            best = Some((ev.objective, action.clone(), ev.flows));
        }
    }
    let (objective, q_g_star, flows) = best.ok_or(Error::NoFeasiblePoint)?;
    let cone_residuals = model
        .lines()
        .iter()
        .enumerate()
        .map(|(i, line)| {
            (flows.p_line[i].powi(2) + flows.q_line[i].powi(2)) / flows.v[line.parent.index()] - flows.ell[i]
        })
        .collect();
    debug_assert!(band_violation(model, &flows.v) <= cfg.feas_tol);
    Ok(OpfSolution {
        q_g_star,
        flows,
        objective,
        cone_residuals,
        exact: true,
        kkt_residual: None,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExactnessReport {
    pub slacks: Vec<f64>,
    pub max_abs_slack: f64,
    pub exact: bool,
}

/// Checks whether every relaxed cone is tight at the solution, in which case
/// the relaxed point also solves the original nonconvex problem.
pub fn exactness_check(sol: &OpfSolution) -> ExactnessReport {
    exactness_check_with(sol, SolverOptions::default().exact_tol)
}

pub fn exactness_check_with(sol: &OpfSolution, exact_tol: f64) -> ExactnessReport {
    let max_abs_slack = sol.max_cone_slack();
    ExactnessReport {
        slacks: sol.cone_residuals.clone(),
        max_abs_slack,
        exact: max_abs_slack <= exact_tol,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::FeederBuilder;
    use crate::powerflow::{evaluate_loss, injection_vectors, solve_power_flow};

    #[test]
    fn zero_load_zero_action() {
        let m = crate::bundled::six_bus();
        let sol = solve_baseline(&m, &GridState::zeros(m.n_lines()), &SolverOptions::default()).unwrap();
        assert!(sol.objective.abs() < 1e-8, "{}", sol.objective);
        // Loss is quadratic in q here, so q is only pinned to ~sqrt(tol).
        assert!(sol.q_g_star.iter().all(|q| q.abs() < 1e-4), "{:?}", sol.q_g_star);
        let rep = exactness_check(&sol);
        assert!(rep.exact && rep.max_abs_slack < 1e-8);
    }

    #[test]
    fn affine_flows_match_power_flow_at_fixed_currents() {
        let m = crate::bundled::surrogate_47();
        let s = m.nominal_state(0.9, 0.4, 0.8);
        let q_g = [0.02, -0.01, 0.05, 0.0, 0.03];
        let (p, q) = injection_vectors(&m, &s, &q_g).unwrap();
        let pf = solve_power_flow(&m, &p, &q).unwrap();
        let mut x = pf.ell.clone();
        x.extend_from_slice(&q_g);
        let flows = AffineFlows::build(&m, &s, x.len());
        for i in 0..m.n_lines() {
            assert!((flows.p[i].eval(&x) - pf.p_line[i]).abs() < 1e-13);
            assert!((flows.q[i].eval(&x) - pf.q_line[i]).abs() < 1e-13);
            assert!((flows.v[i + 1].eval(&x) - pf.v[i + 1]).abs() < 1e-13);
        }
    }

    #[test]
    fn one_inverter_baseline_within_a_grid_cell() {
        let m = FeederBuilder::new()
            .line(0, 1, 0.01, 0.02)
            .line(1, 2, 0.02, 0.02)
            .inverter(2, 0.3, None)
            .build()
            .unwrap();
        let s = GridState {
            p: vec![-0.2, -0.05],
            q_c: vec![0.15, 0.0375],
            timestamp: 0,
        };
        let base = solve_baseline(&m, &s, &SolverOptions::default()).unwrap();
        let grid = grid_search_oracle(&m, &s, 101).unwrap();
        let cell = m.inverters()[0].width() / 100.0;
        assert!((base.q_g_star[0] - grid.q_g_star[0]).abs() <= cell);
        assert!(base.objective <= grid.objective + 1e-10);
        assert!(base.kkt_residual.unwrap() <= 1e-8);
    }

    #[test]
    fn symmetric_grid_prefers_center() {
        // No load anywhere: any reactive injection only adds loss.
        let m = FeederBuilder::new().line(0, 1, 0.01, 0.01).inverter(1, 0.3, None).build().unwrap();
        let sol = grid_search_oracle(&m, &GridState::zeros(1), 3).unwrap();
        assert_eq!(sol.q_g_star, vec![0.0]);
    }

    #[test]
    fn grid_includes_the_box_corners() {
        let m = crate::bundled::six_bus();
        let s = m.nominal_state(1.6, 0.4, 0.8);
        let base = solve_baseline(&m, &s, &SolverOptions::default()).unwrap();
        let grid = grid_search_oracle(&m, &s, 41).unwrap();
        let (_, hi) = m.action_box();
        // Heavy load pushes the optimum onto the upper corner.
        assert!((base.q_g_star[0] - hi[0]).abs() < 1e-6);
        assert_eq!(grid.q_g_star, hi);
    }

    #[test]
    fn grid_rejects_too_many_inverters_and_infeasible_bands() {
        let m = crate::bundled::surrogate_47();
        assert!(matches!(
            grid_search_oracle(&m, &m.nominal_state(1.0, 0.0, 0.8), 3),
            Err(Error::TooManyInverters(5))
        ));
        // Band ceiling below anything reachable under load.
        let tight = crate::bundled::six_bus().with_voltage_band(0.5, 1.0).unwrap();
        let mut s = tight.nominal_state(0.0, 0.0, 0.8);
        s.p.iter_mut().for_each(|p| *p = 0.3);
        assert!(matches!(grid_search_oracle(&tight, &s, 5), Err(Error::NoFeasiblePoint)));
    }

    #[test]
    fn infeasible_band_reports_least_violation() {
        // Undervoltage under heavy load; extra current only lowers v further.
        let m = crate::bundled::six_bus().with_voltage_band(0.99, 1.1).unwrap();
        let mut s = m.nominal_state(0.0, 0.0, 0.8);
        s.p.iter_mut().for_each(|p| *p = -0.5);
        match solve_baseline(&m, &s, &SolverOptions::default()) {
            Err(Error::Infeasible { max_violation, q_g }) => {
                assert!(max_violation > 1e-3);
                for (q, inv) in q_g.iter().zip(m.inverters()) {
                    assert!((q - inv.q_max).abs() < 1e-5, "{q_g:?}");
                }
            }
            other => panic!("expected Infeasible, got {other:?}"),
        }
    }

    #[test]
    fn overvoltage_relaxation_is_feasible_but_inexact() {
        // The relaxation can pull voltages down by inflating currents, so a
        // band the true physics cannot meet shows up as a loose cone.
        let m = crate::bundled::six_bus().with_voltage_band(0.5, 1.0).unwrap();
        let mut s = m.nominal_state(0.0, 0.0, 0.8);
        s.p.iter_mut().for_each(|p| *p = 0.3);
        let sol = solve_baseline(&m, &s, &SolverOptions::default()).unwrap();
        assert!(!sol.exact);
        assert!(grid_search_oracle(&m, &s, 5).is_err());
    }

    #[test]
    fn maximizing_loss_breaks_exactness() {
        let m = crate::bundled::six_bus();
        let s = m.nominal_state(0.6, 0.9, 0.8);
        let sol = solve_relaxation(&m, &s, RelaxationObjective::MaximizeLoss, &SolverOptions::default()).unwrap();
        assert!(!exactness_check(&sol).exact);
        assert!(sol.max_cone_slack() > 1e-3);
    }

    #[test]
    fn exact_solution_reproduced_by_power_flow() {
        for (name, m) in crate::bundled::all() {
            let s = m.nominal_state(1.0, 0.5, 0.8);
            let sol = solve_baseline(&m, &s, &SolverOptions::default()).unwrap();
            assert!(exactness_check(&sol).exact, "{name}: slack {}", sol.max_cone_slack());
            let ev = evaluate_loss(&m, &s, &sol.q_g_star, 0.0).unwrap();
            assert!((ev.objective - sol.objective).abs() < 1e-8, "{name}");
            for (a, b) in ev.flows.v.iter().zip(&sol.flows.v) {
                assert!((a - b).abs() < 1e-6);
            }
            for (a, b) in ev.flows.ell.iter().zip(&sol.flows.ell) {
                assert!((a - b).abs() < 1e-6);
            }
        }
    }
}
