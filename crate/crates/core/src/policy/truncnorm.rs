//! Normal distributions truncated to a finite interval.

use rand::Rng;
use statrs::function::erf::{erfc, erfc_inv};

use crate::error::{Error, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
const MIN_MASS: f64 = 1e-300;

/// Standard normal density.
pub fn std_pdf(x: f64) -> f64 {
    (-0.5 * x * x - LN_SQRT_2PI).exp()
}

/// Standard normal CDF.
pub fn std_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Upper tail `1 - Phi(x)`, accurate for large positive `x`.
pub fn std_sf(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

/// `Phi(b) - Phi(a)` for `a <= b`, evaluated on whichever side avoids
/// cancellation.
fn interval_mass(a: f64, b: f64) -> f64 {
    if a >= 0.0 {
        std_sf(a) - std_sf(b)
    } else if b <= 0.0 {
        std_cdf(b) - std_cdf(a)
    } else {
        1.0 - std_sf(b) - std_cdf(a)
    }
}

/// `N(mu, sigma^2)` restricted to `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TruncatedNormal {
    pub mu: f64,
    pub sigma: f64,
    pub lo: f64,
    pub hi: f64,
    alpha: f64,
    beta: f64,
    mass: f64,
}

impl TruncatedNormal {
    pub fn new(mu: f64, sigma: f64, lo: f64, hi: f64) -> Result<Self> {
        if !(mu.is_finite() && sigma.is_finite() && lo.is_finite() && hi.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "non-finite truncated normal (mu {mu}, sigma {sigma}, [{lo}, {hi}])"
            )));
        }
        if !(sigma > 0.0) || !(lo < hi) {
            return Err(Error::InvalidParameter(format!(
                "need sigma > 0 and lo < hi, got sigma {sigma}, [{lo}, {hi}]"
            )));
        }
        let alpha = (lo - mu) / sigma;
        let beta = (hi - mu) / sigma;
        let mass = interval_mass(alpha, beta);
        if !(mass >= MIN_MASS) {
            return Err(Error::DegenerateSupport(mass));
        }
        Ok(TruncatedNormal {
            mu,
            sigma,
            lo,
            hi,
            alpha,
            beta,
            mass,
        })
    }

    /// Standardized bounds `(alpha, beta)`.
    pub fn bounds_z(&self) -> (f64, f64) {
        (self.alpha, self.beta)
    }

    /// Probability mass of the parent normal inside the box.
    pub fn mass(&self) -> f64 {
        self.mass
    }

    /// Inverse-CDF transform of a uniform `u` in `[0, 1]`.
    pub fn quantile(&self, u: f64) -> f64 {
        let z = if self.alpha > 0.0 {
            // Work with upper tails so that mass far out on the right survives.
            let sa = std_sf(self.alpha);
            let tail = sa - u * (sa - std_sf(self.beta));
            std::f64::consts::SQRT_2 * erfc_inv(2.0 * tail)
        } else {
            let t = std_cdf(self.alpha) + u * self.mass;
            -std::f64::consts::SQRT_2 * erfc_inv(2.0 * t)
        };
        (self.mu + self.sigma * z).clamp(self.lo, self.hi)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.quantile(rng.random::<f64>())
    }

    fn check_support(&self, q: f64) -> Result<()> {
        if q >= self.lo && q <= self.hi {
            Ok(())
        } else {
            Err(Error::OutOfSupport {
                value: q,
                lo: self.lo,
                hi: self.hi,
            })
        }
    }

    pub fn log_prob(&self, q: f64) -> Result<f64> {
        self.check_support(q)?;
        let z = (q - self.mu) / self.sigma;
        Ok(-0.5 * z * z - LN_SQRT_2PI - self.sigma.ln() - self.mass.ln())
    }

    pub fn pdf(&self, q: f64) -> f64 {
        self.log_prob(q).map_or(0.0, f64::exp)
    }

    /// `(d log p / d mu, d log p / d sigma)` at `q`.
    pub fn grad_log_prob(&self, q: f64) -> Result<(f64, f64)> {
        self.check_support(q)?;
        let z = (q - self.mu) / self.sigma;
        let (pa, pb) = (std_pdf(self.alpha), std_pdf(self.beta));
        // Bounds at infinity contribute nothing; guard 0 * inf.
        let apa = if self.alpha.is_finite() { self.alpha * pa } else { 0.0 };
        let bpb = if self.beta.is_finite() { self.beta * pb } else { 0.0 };
        let d_mu = z / self.sigma + (pb - pa) / (self.sigma * self.mass);
        let d_sigma = (z * z - 1.0) / self.sigma + (bpb - apa) / (self.sigma * self.mass);
        Ok((d_mu, d_sigma))
    }

    pub fn mean(&self) -> f64 {
        self.mu + self.sigma * (std_pdf(self.alpha) - std_pdf(self.beta)) / self.mass
    }

    pub fn variance(&self) -> f64 {
        let (pa, pb) = (std_pdf(self.alpha), std_pdf(self.beta));
        let r = (pa - pb) / self.mass;
        self.sigma * self.sigma * (1.0 + (self.alpha * pa - self.beta * pb) / self.mass - r * r)
    }
}

/// Product of independent truncated normals, one per inverter.
#[derive(Clone, Debug, PartialEq)]
pub struct TruncatedGaussian {
    pub components: Vec<TruncatedNormal>,
}

impl TruncatedGaussian {
    pub fn new(mu: &[f64], sigma: &[f64], lo: &[f64], hi: &[f64]) -> Result<Self> {
        let m = mu.len();
        for (what, v) in [("sigma", sigma), ("lo", lo), ("hi", hi)] {
            if v.len() != m {
                return Err(Error::LengthMismatch {
                    what,
                    expected: m,
                    got: v.len(),
                });
            }
        }
        let components = (0..m)
            .map(|k| TruncatedNormal::new(mu[k], sigma[k], lo[k], hi[k]))
            .collect::<Result<_>>()?;
        Ok(TruncatedGaussian { components })
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn mu(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.mu).collect()
    }

    pub fn sigma(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.sigma).collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.components.iter().map(|c| c.sample(rng)).collect()
    }

    fn check_len(&self, q: &[f64]) -> Result<()> {
        if q.len() != self.dim() {
            return Err(Error::LengthMismatch {
                what: "action",
                expected: self.dim(),
                got: q.len(),
            });
        }
        Ok(())
    }

    pub fn log_prob(&self, q: &[f64]) -> Result<f64> {
        self.check_len(q)?;
        self.components.iter().zip(q).map(|(c, &x)| c.log_prob(x)).sum()
    }

    /// Per-component `(d/d mu, d/d sigma)` of the joint log-density.
    pub fn grad_log_prob(&self, q: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_len(q)?;
        let mut d_mu = Vec::with_capacity(q.len());
        let mut d_sigma = Vec::with_capacity(q.len());
        for (c, &x) in self.components.iter().zip(q) {
            let (a, b) = c.grad_log_prob(x)?;
            d_mu.push(a);
            d_sigma.push(b);
        }
        Ok((d_mu, d_sigma))
    }
}
