//! Exact branch-flow (DistFlow) solver and the loss functional used for
//! model-free evaluation of reactive setpoints.
//!
//! For every non-root bus `n` with parent `pi(n)`:
//!
//! ```text
//! P_n  = sum_{j in children(n)} P_j - p_n + r_n l_n
//! Q_n  = sum_{j in children(n)} Q_j - q_n + x_n l_n
//! v_n  = v_pi(n) - 2 (r_n P_n + x_n Q_n) + (r_n^2 + x_n^2) l_n
//! l_n  = (P_n^2 + Q_n^2) / v_pi(n)
//! ```
//!
//! The solver is a forward-backward sweep on `l` from a flat start.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{BusId, GridState, NetworkModel};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PfOptions {
    /// Stop once the largest change in `l` falls below this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PfOptions {
    fn default() -> Self {
        PfOptions {
            tol: 1e-10,
            max_iter: 200,
        }
    }
}

/// Converged branch flows. Line vectors are indexed by `bus - 1`; `v` by bus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerFlowSolution {
    #[serde(rename = "P")]
    pub p_line: Vec<f64>,
    #[serde(rename = "Q")]
    pub q_line: Vec<f64>,
    pub ell: Vec<f64>,
    pub v: Vec<f64>,
    pub loss: f64,
    pub iterations: usize,
    pub converged: bool,
    pub max_residual: f64,
}

impl PowerFlowSolution {
    /// Active power drawn from the substation.
    pub fn substation_p(&self, model: &NetworkModel) -> f64 {
        model.children(BusId::ROOT).unwrap().iter().map(|b| self.p_line[b.index() - 1]).sum()
    }

    pub fn substation_q(&self, model: &NetworkModel) -> f64 {
        model.children(BusId::ROOT).unwrap().iter().map(|b| self.q_line[b.index() - 1]).sum()
    }
}

/// Largest absolute residual of each branch-flow equation, in order
/// (active balance, reactive balance, voltage drop, current definition).
pub fn branch_flow_residuals(
    model: &NetworkModel,
    p: &[f64],
    q: &[f64],
    p_line: &[f64],
    q_line: &[f64],
    ell: &[f64],
    v: &[f64],
) -> [f64; 4] {
    let mut res = [0.0f64; 4];
    for line in model.lines() {
        let i = line.bus.index() - 1;
        let kids = model.children(line.bus).unwrap();
        let sp: f64 = kids.iter().map(|c| p_line[c.index() - 1]).sum();
        let sq: f64 = kids.iter().map(|c| q_line[c.index() - 1]).sum();
        let vp = v[line.parent.index()];
        let ra = (p_line[i] - (sp - p[i] + line.r * ell[i])).abs();
        let rb = (q_line[i] - (sq - q[i] + line.x * ell[i])).abs();
        let rc = (v[line.bus.index()]
            - (vp - 2.0 * (line.r * p_line[i] + line.x * q_line[i]) + (line.r * line.r + line.x * line.x) * ell[i]))
            .abs();
        let rd = (ell[i] * vp - (p_line[i] * p_line[i] + q_line[i] * q_line[i])).abs();
        for (acc, r) in res.iter_mut().zip([ra, rb, rc, rd]) {
            *acc = acc.max(r);
        }
    }
    res
}

/// Solves the branch-flow equations with default tolerances.
pub fn solve_power_flow(model: &NetworkModel, p: &[f64], q: &[f64]) -> Result<PowerFlowSolution> {
    solve_power_flow_with(model, p, q, &PfOptions::default())
}

pub fn solve_power_flow_with(
    model: &NetworkModel,
    p: &[f64],
    q: &[f64],
    opts: &PfOptions,
) -> Result<PowerFlowSolution> {
    let n = model.n_lines();
    check_len("p", n, p.len())?;
    check_len("q", n, q.len())?;
    let lines = model.lines();
    let order = model.topological_order();

    let mut ell = vec![0.0; n];
    let mut p_line = vec![0.0; n];
    let mut q_line = vec![0.0; n];
    let mut v = vec![model.v0(); n + 1];

    let sweep = |ell: &[f64], p_line: &mut [f64], q_line: &mut [f64], v: &mut [f64]| {
        for (i, line) in lines.iter().enumerate() {
            p_line[i] = -p[i] + line.r * ell[i];
            q_line[i] = -q[i] + line.x * ell[i];
        }
        // Reverse BFS order visits children before parents.
        for &b in order[1..].iter().rev() {
            let i = b.index() - 1;
            let parent = lines[i].parent;
            if parent != BusId::ROOT {
                p_line[parent.index() - 1] += p_line[i];
                q_line[parent.index() - 1] += q_line[i];
            }
        }
        for &b in &order[1..] {
            let i = b.index() - 1;
            let line = &lines[i];
            v[b.index()] = v[line.parent.index()] - 2.0 * (line.r * p_line[i] + line.x * q_line[i])
                + (line.r * line.r + line.x * line.x) * ell[i];
        }
    };

    let mut last_update = f64::INFINITY;
    let mut growing = 0usize;
    for iter in 1..=opts.max_iter {
        sweep(&ell, &mut p_line, &mut q_line, &mut v);
        let mut update = 0.0f64;
        for (i, line) in lines.iter().enumerate() {
            let vp = v[line.parent.index()];
            if !(vp > 0.0) {
                return Err(Error::Numerical(format!(
                    "non-positive squared voltage {vp} at bus {} during sweep {iter}",
                    line.parent
                )));
            }
            let next = (p_line[i] * p_line[i] + q_line[i] * q_line[i]) / vp;
            update = update.max((next - ell[i]).abs());
            ell[i] = next;
        }
        if !update.is_finite() {
            return Err(Error::Diverged {
                iterations: iter,
                residual: update,
            });
        }
        if update < opts.tol {
            // Refresh flows and voltages so the first three equations hold
            // exactly for the returned currents.
            sweep(&ell, &mut p_line, &mut q_line, &mut v);
            if let Some((b, vb)) = v.iter().enumerate().skip(1).find(|(_, vb)| !(**vb > 0.0)) {
                return Err(Error::Numerical(format!("non-positive squared voltage {vb} at bus {b}")));
            }
            let res = branch_flow_residuals(model, p, q, &p_line, &q_line, &ell, &v);
            let max_residual = res.iter().cloned().fold(0.0, f64::max);
            let loss = lines.iter().zip(&ell).map(|(l, e)| l.r * e).sum();
            return Ok(PowerFlowSolution {
                p_line,
                q_line,
                ell,
                v,
                loss,
                iterations: iter,
                converged: true,
                max_residual,
            });
        }
        if update > last_update {
            growing += 1;
            if growing >= 25 {
                return Err(Error::Diverged {
                    iterations: iter,
                    residual: update,
                });
            }
        } else {
            growing = 0;
        }
        last_update = update;
    }
    Err(Error::Diverged {
        iterations: opts.max_iter,
        residual: last_update,
    })
}

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::LengthMismatch { what, expected, got });
    }
    Ok(())
}

/// Full nodal injections: `p` from the state and
/// `q_n = q_g (inverter buses) - q_c_n`.
pub fn injection_vectors(model: &NetworkModel, state: &GridState, q_g: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    state.validate(model)?;
    check_len("q_g", model.n_inverters(), q_g.len())?;
    let p = state.p.clone();
    let mut q: Vec<f64> = state.q_c.iter().map(|c| -c).collect();
    for (inv, &qg) in model.inverters().iter().zip(q_g) {
        q[inv.bus.index() - 1] += qg;
    }
    Ok((p, q))
}

/// How actions outside the capability box are treated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ActionMode {
    Clip,
    Strict,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub penalty_coeff: f64,
    pub feas_tol: f64,
    pub action_mode: ActionMode,
    pub pf: PfOptions,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            penalty_coeff: 100.0,
            feas_tol: 1e-8,
            action_mode: ActionMode::Clip,
            pf: PfOptions::default(),
        }
    }
}

/// Line loss of one (state, action) pair plus voltage-band diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossEvaluation {
    /// Total line loss `sum r_n l_n`.
    pub objective: f64,
    /// `sum_n max(0, v_min - v_n) + max(0, v_n - v_max)`.
    pub violation: f64,
    pub penalized: f64,
    pub feasible: bool,
    pub flows: PowerFlowSolution,
}

/// Evaluates the penalized loss, clipping the action into its box.
pub fn evaluate_loss(
    model: &NetworkModel,
    state: &GridState,
    q_g: &[f64],
    penalty_coeff: f64,
) -> Result<LossEvaluation> {
    let cfg = EvalConfig {
        penalty_coeff,
        ..EvalConfig::default()
    };
    evaluate_loss_with(model, state, q_g, &cfg)
}

pub fn evaluate_loss_with(
    model: &NetworkModel,
    state: &GridState,
    q_g: &[f64],
    cfg: &EvalConfig,
) -> Result<LossEvaluation> {
    check_len("q_g", model.n_inverters(), q_g.len())?;
    let mut action = q_g.to_vec();
    for (k, (inv, a)) in model.inverters().iter().zip(action.iter_mut()).enumerate() {
        if *a < inv.q_min || *a > inv.q_max || !a.is_finite() {
            match cfg.action_mode {
                ActionMode::Strict => {
                    return Err(Error::ActionOutOfBounds {
                        index: k,
                        value: *a,
                        lo: inv.q_min,
                        hi: inv.q_max,
                    })
                }
                ActionMode::Clip if a.is_finite() => *a = a.clamp(inv.q_min, inv.q_max),
                ActionMode::Clip => {
                    return Err(Error::InvalidParameter(format!("non-finite action for inverter {k}")))
                }
            }
        }
    }
    let (p, q) = injection_vectors(model, state, &action)?;
    let flows = solve_power_flow_with(model, &p, &q, &cfg.pf)?;
    let violation = band_violation(model, &flows.v);
    let objective = flows.loss;
    Ok(LossEvaluation {
        objective,
        violation,
        penalized: objective + cfg.penalty_coeff * violation,
        feasible: violation <= cfg.feas_tol,
        flows,
    })
}

/// Aggregate band violation over non-root buses.
pub fn band_violation(model: &NetworkModel, v: &[f64]) -> f64 {
    (1..model.n_buses())
        .map(|b| {
            let (lo, hi) = model.voltage_band(BusId(b));
            (lo - v[b]).max(0.0) + (v[b] - hi).max(0.0)
        })
        .sum()
}
