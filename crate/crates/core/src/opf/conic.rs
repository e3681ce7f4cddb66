//! Dense primal-dual interior-point solver for small cone programs
//!
//! ```text
//! minimize    c'x
//! subject to  G x + s = h,   A x = b,   s in K
//! ```
//!
//! with `K` a product of one nonnegative orthant and second-order cones
//! `{ (t, u) : ||u|| <= t }`. The dual is
//!
//! ```text
//! maximize   -h'z - b'y
//! subject to  G'z + A'y + c = 0,   z in K.
//! ```
//!
//! Infeasible-start path following with Nesterov-Todd scaling and a
//! Mehrotra predictor-corrector step. Slack rows are ordered orthant first,
//! then one contiguous block per cone.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConeDims {
    pub nonneg: usize,
    pub soc: Vec<usize>,
}

impl ConeDims {
    pub fn total(&self) -> usize {
        self.nonneg + self.soc.iter().sum::<usize>()
    }

    /// Barrier degree: one per orthant coordinate and one per cone.
    pub fn degree(&self) -> usize {
        self.nonneg + self.soc.len()
    }

    fn blocks(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.soc.iter().scan(self.nonneg, |off, &d| {
            let start = *off;
            *off += d;
            Some((start, d))
        })
    }
}

#[derive(Clone, Debug)]
pub struct ConeProgram {
    pub c: DVector<f64>,
    pub g: DMatrix<f64>,
    pub h: DVector<f64>,
    /// Equality constraints; zero rows allowed.
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub cones: ConeDims,
}

impl ConeProgram {
    pub fn new(c: DVector<f64>, g: DMatrix<f64>, h: DVector<f64>, cones: ConeDims) -> Result<Self> {
        let n = c.len();
        let prog = ConeProgram {
            c,
            g,
            h,
            a: DMatrix::zeros(0, n),
            b: DVector::zeros(0),
            cones,
        };
        prog.check()?;
        Ok(prog)
    }

    pub fn with_equalities(mut self, a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        self.a = a;
        self.b = b;
        self.check()?;
        Ok(self)
    }

    fn check(&self) -> Result<()> {
        let n = self.c.len();
        let m = self.cones.total();
        if self.g.nrows() != m || self.g.ncols() != n || self.h.len() != m {
            return Err(Error::DimensionMismatch(format!(
                "G is {}x{}, h has {}, expected {m}x{n}",
                self.g.nrows(),
                self.g.ncols(),
                self.h.len()
            )));
        }
        if self.a.ncols() != n || self.a.nrows() != self.b.len() {
            return Err(Error::DimensionMismatch("A/b shape".into()));
        }
        if self.cones.soc.iter().any(|&d| d < 2) {
            return Err(Error::DimensionMismatch("second-order cones need dimension >= 2".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IpmSettings {
    /// Absolute bound on primal residual, dual residual and `s'z`.
    pub tol: f64,
    pub max_iter: usize,
    /// Fraction of the distance to the cone boundary taken per step.
    pub step_fraction: f64,
}

impl Default for IpmSettings {
    fn default() -> Self {
        IpmSettings {
            tol: 1e-9,
            max_iter: 100,
            step_fraction: 0.99,
        }
    }
}

#[derive(Clone, Debug)]
pub struct IpmSolution {
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub z: DVector<f64>,
    pub s: DVector<f64>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub gap: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub iterations: usize,
}

impl IpmSolution {
    /// Largest of primal residual, dual residual and complementarity gap.
    pub fn kkt_residual(&self) -> f64 {
        self.primal_residual.max(self.dual_residual).max(self.gap.abs())
    }
}

// ---------------------------------------------------------------------------
// Cone arithmetic
// ---------------------------------------------------------------------------

fn jdot(u: &[f64], v: &[f64]) -> f64 {
    u[0] * v[0] - u[1..].iter().zip(&v[1..]).map(|(a, b)| a * b).sum::<f64>()
}

/// `u0^2 - ||u1||^2`, factored for accuracy near the boundary.
fn jdet(u: &[f64]) -> f64 {
    let n1 = norm(&u[1..]);
    (u[0] - n1) * (u[0] + n1)
}

fn norm(u: &[f64]) -> f64 {
    u.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Jordan product `u o w`.
fn cprod(cones: &ConeDims, u: &[f64], w: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; u.len()];
    for i in 0..cones.nonneg {
        out[i] = u[i] * w[i];
    }
    for (off, d) in cones.blocks() {
        let (ub, wb) = (&u[off..off + d], &w[off..off + d]);
        out[off] = ub.iter().zip(wb).map(|(a, b)| a * b).sum();
        for k in 1..d {
            out[off + k] = ub[0] * wb[k] + wb[0] * ub[k];
        }
    }
    out
}

/// Solves `u o x = w` for `x` (`u` interior).
fn cdiv(cones: &ConeDims, u: &[f64], w: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; u.len()];
    for i in 0..cones.nonneg {
        out[i] = w[i] / u[i];
    }
    for (off, d) in cones.blocks() {
        let (ub, wb) = (&u[off..off + d], &w[off..off + d]);
        let dot1: f64 = ub[1..].iter().zip(&wb[1..]).map(|(a, b)| a * b).sum();
        let x0 = (ub[0] * wb[0] - dot1) / jdet(ub);
        out[off] = x0;
        for k in 1..d {
            out[off + k] = (wb[k] - x0 * ub[k]) / ub[0];
        }
    }
    out
}

fn identity(cones: &ConeDims) -> Vec<f64> {
    let mut e = vec![0.0; cones.total()];
    e[..cones.nonneg].iter_mut().for_each(|v| *v = 1.0);
    for (off, _) in cones.blocks() {
        e[off] = 1.0;
    }
    e
}

/// Smallest `t` such that `u + t e` lies in the closed cone.
fn interior_margin(cones: &ConeDims, u: &[f64]) -> f64 {
    let mut t = f64::NEG_INFINITY;
    for &v in &u[..cones.nonneg] {
        t = t.max(-v);
    }
    for (off, d) in cones.blocks() {
        t = t.max(norm(&u[off + 1..off + d]) - u[off]);
    }
    t
}

/// Largest `alpha >= 0` with `x + alpha d` in the cone (`x` interior).
fn max_step(cones: &ConeDims, x: &[f64], d: &[f64]) -> f64 {
    let mut alpha = f64::INFINITY;
    for i in 0..cones.nonneg {
        if d[i] < 0.0 {
            alpha = alpha.min(-x[i] / d[i]);
        }
    }
    for (off, k) in cones.blocks() {
        alpha = alpha.min(soc_max_step(&x[off..off + k], &d[off..off + k]));
    }
    alpha
}

fn soc_max_step(x: &[f64], d: &[f64]) -> f64 {
    // q(alpha) = a alpha^2 + 2 b alpha + c is the J-determinant along the ray;
    // the first positive root is where the ray leaves the cone.
    let a = jdot(d, d);
    let b = jdot(x, d);
    let c = jdet(x).max(0.0);
    let disc = b * b - a * c;
    if a < 0.0 {
        let sq = disc.max(0.0).sqrt();
        return if b >= 0.0 { (b + sq) / -a } else { c / (sq - b) };
    }
    if b >= 0.0 || disc < 0.0 {
        // d points into (or along) the cone.
        return if d[0] >= 0.0 || a == 0.0 && b >= 0.0 {
            f64::INFINITY
        } else {
            // Pure -K direction with no root can only happen from rounding.
            x[0] / -d[0]
        };
    }
    c / (disc.sqrt() - b)
}

// ---------------------------------------------------------------------------
// Nesterov-Todd scaling
// ---------------------------------------------------------------------------

struct Scaling {
    /// Orthant part: `W = diag(d)`.
    d: Vec<f64>,
    /// Cone part: `W = beta (2 v v' - J)` with `v' J v = 1`.
    soc: Vec<(f64, Vec<f64>)>,
    lambda: Vec<f64>,
}

impl Scaling {
    fn new(cones: &ConeDims, s: &[f64], z: &[f64]) -> Result<Self> {
        let mut d = Vec::with_capacity(cones.nonneg);
        for i in 0..cones.nonneg {
            if !(s[i] > 0.0 && z[i] > 0.0) {
                return Err(Error::Numerical("iterate left the orthant interior".into()));
            }
            d.push((s[i] / z[i]).sqrt());
        }
        let mut soc = Vec::with_capacity(cones.soc.len());
        for (off, k) in cones.blocks() {
            let (sb, zb) = (&s[off..off + k], &z[off..off + k]);
            let ds = jdet(sb);
            let dz = jdet(zb);
            if !(ds > 0.0 && dz > 0.0 && sb[0] > 0.0 && zb[0] > 0.0) {
                return Err(Error::Numerical("iterate left the cone interior".into()));
            }
            let (na, nb) = (ds.sqrt(), dz.sqrt());
            let beta = (na / nb).sqrt();
            let sbar: Vec<f64> = sb.iter().map(|v| v / na).collect();
            let zbar: Vec<f64> = zb.iter().map(|v| v / nb).collect();
            let gamma = (2.0 * (sbar.iter().zip(&zbar).map(|(a, b)| a * b).sum::<f64>() + 1.0)).sqrt();
            // wbar = (sbar + J zbar) / (2 gamma'), then v = (wbar + e) / sqrt(2 (wbar0 + 1))
            let mut v = vec![0.0; k];
            v[0] = (sbar[0] + zbar[0]) / gamma;
            for j in 1..k {
                v[j] = (sbar[j] - zbar[j]) / gamma;
            }
            v[0] += 1.0;
            let nv = (2.0 * v[0]).sqrt();
            v.iter_mut().for_each(|a| *a /= nv);
            soc.push((beta, v));
        }
        let mut w = Scaling {
            d,
            soc,
            lambda: Vec::new(),
        };
        w.lambda = w.apply(cones, z, false);
        Ok(w)
    }

    /// `W u`, or `W^{-1} u` when `inverse`.
    fn apply(&self, cones: &ConeDims, u: &[f64], inverse: bool) -> Vec<f64> {
        let mut out = vec![0.0; u.len()];
        for i in 0..cones.nonneg {
            out[i] = if inverse { u[i] / self.d[i] } else { u[i] * self.d[i] };
        }
        for ((off, k), (beta, v)) in cones.blocks().zip(&self.soc) {
            let ub = &u[off..off + k];
            if inverse {
                // W^{-1} = (2 J v v' J - J) / beta
                let jv_dot = jdot(v, ub);
                for j in 0..k {
                    let jvj = if j == 0 { v[0] } else { -v[j] };
                    let jub = if j == 0 { ub[0] } else { -ub[j] };
                    out[off + j] = (2.0 * jvj * jv_dot - jub) / beta;
                }
            } else {
                let vdot: f64 = v.iter().zip(ub).map(|(a, b)| a * b).sum();
                for j in 0..k {
                    let jub = if j == 0 { ub[0] } else { -ub[j] };
                    out[off + j] = beta * (2.0 * v[j] * vdot - jub);
                }
            }
        }
        out
    }

    fn apply_inv_columns(&self, cones: &ConeDims, g: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(g.nrows(), g.ncols());
        for j in 0..g.ncols() {
            let col: Vec<f64> = g.column(j).iter().copied().collect();
            let scaled = self.apply(cones, &col, true);
            out.column_mut(j).copy_from_slice(&scaled);
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Reduced KKT system  [ G'W^{-2}G  A' ; A  0 ]
// ---------------------------------------------------------------------------

enum Factor {
    Chol(nalgebra::linalg::Cholesky<f64, nalgebra::Dyn>),
    Lu(nalgebra::linalg::LU<f64, nalgebra::Dyn, nalgebra::Dyn>),
}

struct Kkt {
    mat: DMatrix<f64>,
    factor: Factor,
    n: usize,
}

impl Kkt {
    fn new(h: DMatrix<f64>, a: &DMatrix<f64>) -> Result<Self> {
        let n = h.nrows();
        let p = a.nrows();
        if p == 0 {
            let mut reg = 0.0;
            let scale = h.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
            for _ in 0..8 {
                let mut hr = h.clone();
                for i in 0..n {
                    hr[(i, i)] += reg;
                }
                if let Some(ch) = hr.clone().cholesky() {
                    return Ok(Kkt {
                        mat: hr,
                        factor: Factor::Chol(ch),
                        n,
                    });
                }
                reg = if reg == 0.0 { 1e-14 * scale } else { reg * 100.0 };
            }
            return Err(Error::Numerical("reduced KKT matrix is not positive definite".into()));
        }
        let mut k = DMatrix::zeros(n + p, n + p);
        k.view_mut((0, 0), (n, n)).copy_from(&h);
        k.view_mut((n, 0), (p, n)).copy_from(a);
        k.view_mut((0, n), (n, p)).copy_from(&a.transpose());
        let lu = k.clone().lu();
        if !lu.is_invertible() {
            return Err(Error::Numerical("singular KKT system".into()));
        }
        Ok(Kkt {
            mat: k,
            factor: Factor::Lu(lu),
            n,
        })
    }

    fn solve(&self, rhs: &DVector<f64>) -> Result<DVector<f64>> {
        let raw = |r: &DVector<f64>| -> Option<DVector<f64>> {
            match &self.factor {
                Factor::Chol(c) => Some(c.solve(r)),
                Factor::Lu(l) => l.solve(r),
            }
        };
        let mut x = raw(rhs).ok_or_else(|| Error::Numerical("KKT solve failed".into()))?;
        // Two rounds of iterative refinement.
        for _ in 0..2 {
            let res = rhs - &self.mat * &x;
            if let Some(dx) = raw(&res) {
                x += dx;
            }
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite Newton direction".into()));
        }
        Ok(x)
    }
}

struct Direction {
    x: DVector<f64>,
    y: DVector<f64>,
    z: Vec<f64>,
    s: Vec<f64>,
}

/// Solves the Newton system for residuals `(rx, ry, rz)` and the scaled
/// complementarity target `lambda \ d_s`.
#[allow(clippy::too_many_arguments)]
fn newton(
    prog: &ConeProgram,
    w: &Scaling,
    ghat: &DMatrix<f64>,
    kkt: &Kkt,
    rx: &DVector<f64>,
    ry: &DVector<f64>,
    rz: &[f64],
    ds_over_lambda: &[f64],
) -> Result<Direction> {
    let cones = &prog.cones;
    let winv_rz = w.apply(cones, rz, true);
    let t: Vec<f64> = winv_rz.iter().zip(ds_over_lambda).map(|(a, b)| a + b).collect();
    let tv = DVector::from_vec(t.clone());
    let n = kkt.n;
    let p = prog.a.nrows();
    let mut rhs = DVector::zeros(n + p);
    rhs.rows_mut(0, n).copy_from(&(-rx - ghat.tr_mul(&tv)));
    if p > 0 {
        rhs.rows_mut(n, p).copy_from(&(-ry));
    }
    let sol = kkt.solve(&rhs)?;
    let dx = sol.rows(0, n).into_owned();
    let dy = if p > 0 { sol.rows(n, p).into_owned() } else { DVector::zeros(0) };
    let gdx = ghat * &dx;
    let inner: Vec<f64> = gdx.iter().zip(&t).map(|(a, b)| a + b).collect();
    let dz = w.apply(cones, &inner, true);
    let wdz = w.apply(cones, &dz, false);
    let diff: Vec<f64> = ds_over_lambda.iter().zip(&wdz).map(|(a, b)| a - b).collect();
    let ds = w.apply(cones, &diff, false);
    Ok(Direction {
        x: dx,
        y: dy,
        z: dz,
        s: ds,
    })
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Runs the interior-point method to `settings.tol`.
pub fn solve(prog: &ConeProgram, settings: &IpmSettings) -> Result<IpmSolution> {
    prog.check()?;
    let cones = &prog.cones;
    let m = cones.total();
    let e = identity(cones);

    // Starting point: least-norm primal slack and dual multiplier, shifted
    // into the cone interior.
    let kkt0 = Kkt::new(prog.g.tr_mul(&prog.g), &prog.a)?;
    let n = prog.c.len();
    let p = prog.a.nrows();
    let mut rhs = DVector::zeros(n + p);
    rhs.rows_mut(0, n).copy_from(&prog.g.tr_mul(&prog.h));
    rhs.rows_mut(n, p).copy_from(&prog.b);
    let sol = kkt0.solve(&rhs)?;
    let mut x = sol.rows(0, n).into_owned();
    let mut s: Vec<f64> = (&prog.h - &prog.g * &x).iter().copied().collect();
    rhs.fill(0.0);
    rhs.rows_mut(0, n).copy_from(&(-&prog.c));
    let sol = kkt0.solve(&rhs)?;
    let mut y = sol.rows(n, p).into_owned();
    let mut z: Vec<f64> = (&prog.g * sol.rows(0, n)).iter().copied().collect();
    for v in [&mut s, &mut z] {
        let t = interior_margin(cones, v);
        let scale = inf_norm(v).max(1.0);
        if t >= -1e-8 * scale {
            v.iter_mut().zip(&e).for_each(|(a, b)| *a += (1.0 + t) * b);
        }
    }

    for iter in 0..=settings.max_iter {
        let zv = DVector::from_column_slice(&z);
        let sv = DVector::from_column_slice(&s);
        let rx = prog.a.tr_mul(&y) + prog.g.tr_mul(&zv) + &prog.c;
        let ry = &prog.a * &x - &prog.b;
        let rz_v = &prog.g * &x + &sv - &prog.h;
        let rz: Vec<f64> = rz_v.iter().copied().collect();
        let gap: f64 = s.iter().zip(&z).map(|(a, b)| a * b).sum();
        let pres = inf_norm(ry.as_slice()).max(inf_norm(&rz));
        let dres = inf_norm(rx.as_slice());

        if pres <= settings.tol && dres <= settings.tol && gap <= settings.tol {
            return Ok(IpmSolution {
                primal_objective: prog.c.dot(&x),
                dual_objective: -prog.h.dot(&zv) - prog.b.dot(&y),
                x,
                y,
                z: zv,
                s: sv,
                gap,
                primal_residual: pres,
                dual_residual: dres,
                iterations: iter,
            });
        }
        if iter == settings.max_iter {
            break;
        }
        if !(gap.is_finite() && pres.is_finite() && dres.is_finite()) {
            return Err(Error::Numerical("non-finite residuals".into()));
        }

        let w = Scaling::new(cones, &s, &z)?;
        let ghat = w.apply_inv_columns(cones, &prog.g);
        let kkt = Kkt::new(ghat.tr_mul(&ghat), &prog.a)?;
        let mu = gap / cones.degree() as f64;

        // Affine-scaling predictor: lambda o (W dz + W^{-1} ds) = -lambda o lambda.
        let neg_lambda: Vec<f64> = w.lambda.iter().map(|v| -v).collect();
        let aff = newton(prog, &w, &ghat, &kkt, &rx, &ry, &rz, &neg_lambda)?;
        let alpha_aff = max_step(cones, &s, &aff.s).min(max_step(cones, &z, &aff.z)).min(1.0);
        let gap_aff: f64 = s
            .iter()
            .zip(&aff.s)
            .zip(z.iter().zip(&aff.z))
            .map(|((si, dsi), (zi, dzi))| (si + alpha_aff * dsi) * (zi + alpha_aff * dzi))
            .sum();
        let sigma = (gap_aff / gap).clamp(0.0, 1.0).powi(3);

        // Combined step with second-order correction.
        let ws = w.apply(cones, &aff.s, true);
        let wz = w.apply(cones, &aff.z, false);
        let corr = cprod(cones, &ws, &wz);
        let ll = cprod(cones, &w.lambda, &w.lambda);
        let target: Vec<f64> = (0..m).map(|i| -ll[i] + sigma * mu * e[i] - corr[i]).collect();
        let ds_over_lambda = cdiv(cones, &w.lambda, &target);
        let dir = newton(prog, &w, &ghat, &kkt, &rx, &ry, &rz, &ds_over_lambda)?;

        let alpha_max = max_step(cones, &s, &dir.s).min(max_step(cones, &z, &dir.z));
        let alpha = (settings.step_fraction * alpha_max).min(1.0);
        if !(alpha > 1e-12) {
            return Err(Error::Numerical(format!("step length collapsed at iteration {iter}")));
        }
        x += alpha * &dir.x;
        y += alpha * &dir.y;
        s.iter_mut().zip(&dir.s).for_each(|(a, b)| *a += alpha * b);
        z.iter_mut().zip(&dir.z).for_each(|(a, b)| *a += alpha * b);
    }
    Err(Error::MaxIterations(settings.max_iter))
}
