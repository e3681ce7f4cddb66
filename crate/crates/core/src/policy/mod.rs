//! Neural truncated-Gaussian policy over inverter reactive setpoints.
//!
//! The network reads the standardized state `(p, q_c)` and emits a pair of
//! raw outputs `(a_m, b_m)` per inverter, mapped to
//! `mu_m = lo_m + (hi_m - lo_m) * logistic(a_m)` and
//! `sigma_m = softplus(b_m) + sigma_floor`. Actions are drawn from the normal
//! `N(mu_m, sigma_m^2)` truncated to the inverter's capability box, so every
//! sample is physically realizable.

pub mod mlp;
pub mod truncnorm;

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{GridState, NetworkModel};
pub use mlp::{Activations, Dense, Mlp};
pub use truncnorm::{TruncatedGaussian, TruncatedNormal};

pub const MODEL_VERSION: &str = "voltcraft-policy/1";
pub const DEFAULT_HIDDEN: [usize; 3] = [48, 32, 16];
pub const DEFAULT_SIGMA_FLOOR: f64 = 0.01;

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionBox {
    pub q_min: Vec<f64>,
    pub q_max: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyModel {
    pub version: String,
    pub layer_sizes: Vec<usize>,
    pub action_box: ActionBox,
    pub sigma_floor: f64,
    pub input_mean: Vec<f64>,
    pub input_std: Vec<f64>,
    pub network: Mlp,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyGradientRecord {
    pub action: Vec<f64>,
    pub log_prob: f64,
    pub grad_theta_log_prob: Vec<f64>,
}

/// Per-feature mean and standard deviation; constant features get std 1.
pub fn feature_stats(states: &[GridState]) -> (Vec<f64>, Vec<f64>) {
    let Some(first) = states.first() else {
        return (Vec::new(), Vec::new());
    };
    let d = first.p.len() * 2;
    let n = states.len() as f64;
    let mut mean = vec![0.0; d];
    for s in states {
        for (m, x) in mean.iter_mut().zip(s.features()) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; d];
    for s in states {
        for ((v, m), x) in var.iter_mut().zip(&mean).zip(s.features()) {
            *v += (x - m) * (x - m);
        }
    }
    let std = var
        .into_iter()
        .map(|v| {
            let sd = (v / n).sqrt();
            if sd > 1e-12 { sd } else { 1.0 }
        })
        .collect();
    (mean, std)
}

impl PolicyModel {
    pub fn new(
        input_mean: Vec<f64>,
        input_std: Vec<f64>,
        hidden: &[usize],
        action_box: ActionBox,
        sigma_floor: f64,
        seed: u64,
    ) -> Result<Self> {
        let mut sizes = vec![input_mean.len()];
        sizes.extend_from_slice(hidden);
        sizes.push(2 * action_box.q_min.len());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let network = Mlp::new(&sizes, &mut rng)?;
        let model = PolicyModel {
            version: MODEL_VERSION.to_string(),
            layer_sizes: sizes,
            action_box,
            sigma_floor,
            input_mean,
            input_std,
            network,
        };
        model.check()?;
        Ok(model)
    }

    /// Policy for `net` with inputs standardized over `training`.
    pub fn for_network(
        net: &NetworkModel,
        training: &[GridState],
        hidden: &[usize],
        sigma_floor: f64,
        seed: u64,
    ) -> Result<Self> {
        let (mut mean, mut std) = feature_stats(training);
        if training.is_empty() {
            mean = vec![0.0; 2 * net.n_lines()];
            std = vec![1.0; 2 * net.n_lines()];
        }
        let (q_min, q_max) = net.action_box();
        Self::new(mean, std, hidden, ActionBox { q_min, q_max }, sigma_floor, seed)
    }

    pub fn check(&self) -> Result<()> {
        self.network.check()?;
        let m = self.action_box.q_min.len();
        if self.network.layer_sizes() != self.layer_sizes {
            return Err(Error::DimensionMismatch("layer_sizes disagree with weight arrays".into()));
        }
        if self.action_box.q_max.len() != m || self.network.n_outputs() != 2 * m {
            return Err(Error::DimensionMismatch(format!(
                "network emits {} values for {m} inverters",
                self.network.n_outputs()
            )));
        }
        let d = self.network.n_inputs();
        if self.input_mean.len() != d || self.input_std.len() != d {
            return Err(Error::DimensionMismatch("input normalization length".into()));
        }
        if !(self.sigma_floor > 0.0 && self.sigma_floor.is_finite()) {
            return Err(Error::InvalidParameter(format!("sigma_floor must be > 0, got {}", self.sigma_floor)));
        }
        if self.input_std.iter().any(|s| !(*s > 0.0 && s.is_finite())) || self.input_mean.iter().any(|m| !m.is_finite())
        {
            return Err(Error::InvalidParameter("input normalization must be finite with std > 0".into()));
        }
        for (lo, hi) in self.action_box.q_min.iter().zip(&self.action_box.q_max) {
            if !(lo < hi) {
                return Err(Error::InvalidParameter(format!("empty action box [{lo}, {hi}]")));
            }
        }
        Ok(())
    }

    pub fn n_inverters(&self) -> usize {
        self.action_box.q_min.len()
    }

    pub fn n_params(&self) -> usize {
        self.network.n_params()
    }

    pub fn params(&self) -> Vec<f64> {
        self.network.params()
    }

    pub fn set_params(&mut self, p: &[f64]) -> Result<()> {
        self.network.set_params(p)
    }

    fn standardize(&self, s: &GridState) -> Result<Vec<f64>> {
        let x = s.features();
        if x.len() != self.input_mean.len() {
            return Err(Error::DimensionMismatch(format!(
                "policy expects {} state features, got {}",
                self.input_mean.len(),
                x.len()
            )));
        }
        Ok(x.iter()
            .zip(&self.input_mean)
            .zip(&self.input_std)
            .map(|((x, m), s)| (x - m) / s)
            .collect())
    }

    fn head(&self, out: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let m = self.n_inverters();
        let (lo, hi) = (&self.action_box.q_min, &self.action_box.q_max);
        let mu = (0..m).map(|k| lo[k] + (hi[k] - lo[k]) * logistic(out[k])).collect();
        let sigma = (0..m).map(|k| softplus(out[m + k]) + self.sigma_floor).collect();
        (mu, sigma)
    }

    /// Per-inverter `(mu, sigma)` for state `s`.
    pub fn forward(&self, s: &GridState) -> Result<(Vec<f64>, Vec<f64>)> {
        let acts = self.network.forward(&self.standardize(s)?)?;
        Ok(self.head(acts.output()))
    }

    pub fn distribution(&self, s: &GridState) -> Result<TruncatedGaussian> {
        let (mu, sigma) = self.forward(s)?;
        TruncatedGaussian::new(&mu, &sigma, &self.action_box.q_min, &self.action_box.q_max)
    }

    pub fn sample_action<R: Rng + ?Sized>(&self, s: &GridState, rng: &mut R) -> Result<Vec<f64>> {
        Ok(self.distribution(s)?.sample(rng))
    }

    pub fn log_prob(&self, s: &GridState, action: &[f64]) -> Result<f64> {
        self.distribution(s)?.log_prob(action)
    }

    /// `log pi(action | s)` and its gradient with respect to every network
    /// parameter, in the flat order of [`Mlp::params`].
    pub fn grad_log_prob(&self, s: &GridState, action: &[f64]) -> Result<PolicyGradientRecord> {
        let acts = self.network.forward(&self.standardize(s)?)?;
        let out = acts.output();
        let (mu, sigma) = self.head(out);
        let dist = TruncatedGaussian::new(&mu, &sigma, &self.action_box.q_min, &self.action_box.q_max)?;
        let log_prob = dist.log_prob(action)?;
        let (d_mu, d_sigma) = dist.grad_log_prob(action)?;
        let m = self.n_inverters();
        let mut dout = vec![0.0; 2 * m];
        for k in 0..m {
            let width = self.action_box.q_max[k] - self.action_box.q_min[k];
            let la = logistic(out[k]);
            dout[k] = d_mu[k] * width * la * (1.0 - la);
            dout[m + k] = d_sigma[k] * logistic(out[m + k]);
        }
        let grad = self.network.backward(&acts, &dout);
        if !log_prob.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient);
        }
        Ok(PolicyGradientRecord {
            action: action.to_vec(),
            log_prob,
            grad_theta_log_prob: grad,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        match value.get("version").and_then(|v| v.as_str()) {
            Some(v) if v == MODEL_VERSION => {}
            Some(v) => {
                return Err(Error::VersionMismatch {
                    expected: MODEL_VERSION.to_string(),
                    found: v.to_string(),
                })
            }
            None => return Err(Error::Parse("model file has no version tag".into())),
        }
        let model: PolicyModel = serde_json::from_value(value)?;
        model.check()?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut text = self.to_json()?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toy(seed: u64) -> (NetworkModel, PolicyModel) {
        let net = crate::bundled::six_bus();
        let states: Vec<GridState> = (0..5).map(|k| net.nominal_state(0.2 * k as f64, 0.5, 0.8)).collect();
        let policy = PolicyModel::for_network(&net, &states, &[8, 6], DEFAULT_SIGMA_FLOOR, seed).unwrap();
        (net, policy)
    }

    #[test]
    fn zero_network_gives_midpoint_and_softplus_zero() {
        let (net, mut policy) = toy(1);
        policy.set_params(&vec![0.0; policy.n_params()]).unwrap();
        let (mu, sigma) = policy.forward(&net.nominal_state(0.7, 0.3, 0.8)).unwrap();
        for (k, inv) in net.inverters().iter().enumerate() {
            assert!((mu[k] - 0.5 * (inv.q_min + inv.q_max)).abs() < 1e-15);
            assert!((sigma[k] - (2f64.ln() + DEFAULT_SIGMA_FLOOR)).abs() < 1e-15);
        }
    }

    #[test]
    fn mean_input_gives_bias_only_output() {
        let (_, policy) = toy(2);
        let s = GridState {
            p: policy.input_mean[..5].to_vec(),
            q_c: policy.input_mean[5..].to_vec(),
            timestamp: 0,
        };
        let acts = policy.network.forward(&policy.standardize(&s).unwrap()).unwrap();
        // Zero standardized input, so every layer reduces to relu(bias).
        let mut h: Vec<f64> = Vec::new();
        for (i, l) in policy.network.layers.iter().enumerate() {
            h = l.biases.iter().map(|&b| if i + 1 < policy.network.layers.len() { b.max(0.0) } else { b }).collect();
        }
        assert_eq!(acts.output(), h.as_slice());
    }

    #[test]
    fn pure_forward() {
        let (net, policy) = toy(3);
        let s = net.nominal_state(0.9, 0.1, 0.8);
        assert_eq!(policy.forward(&s).unwrap(), policy.forward(&s).unwrap());
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let (net, policy) = toy(4);
        let back = PolicyModel::from_json(&policy.to_json().unwrap()).unwrap();
        assert_eq!(back, policy);
        let s = net.nominal_state(0.6, 0.6, 0.8);
        assert_eq!(back.forward(&s).unwrap(), policy.forward(&s).unwrap());
    }

    #[test]
    fn load_errors() {
        let (_, policy) = toy(5);
        let text = policy.to_json().unwrap();
        assert!(matches!(PolicyModel::from_json(&text[..text.len() / 2]), Err(Error::Parse(_))));
        let bumped = text.replace(MODEL_VERSION, "voltcraft-policy/0");
        assert!(matches!(PolicyModel::from_json(&bumped), Err(Error::VersionMismatch { .. })));
    }

    #[test]
    fn samples_stay_in_box() {
        let (net, policy) = toy(6);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = net.nominal_state(1.0, 0.8, 0.8);
        for _ in 0..10_000 {
            let a = policy.sample_action(&s, &mut rng).unwrap();
            for (k, q) in a.iter().enumerate() {
                assert!(*q >= policy.action_box.q_min[k] && *q <= policy.action_box.q_max[k]);
            }
        }
    }

    #[test]
    fn state_dimension_checked() {
        let (_, policy) = toy(7);
        assert!(matches!(policy.forward(&GridState::zeros(3)), Err(Error::DimensionMismatch(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(20))]
        #[test]
        fn grad_matches_finite_differences(seed in 0u64..1000, lf in 0.0f64..1.2, u0 in 0.01f64..0.99, u1 in 0.01f64..0.99) {
            let (net, policy) = toy(seed);
            let s = net.nominal_state(lf, 0.5, 0.8);
            let dist = policy.distribution(&s).unwrap();
            let q = [dist.components[0].quantile(u0), dist.components[1].quantile(u1)];
            let rec = policy.grad_log_prob(&s, &q).unwrap();
            let p0 = policy.params();
            let mut pm = policy.clone();
            let h = 1e-6;
            for j in 0..p0.len() {
                let mut p = p0.clone();
                p[j] += h;
                pm.set_params(&p).unwrap();
                let up = pm.log_prob(&s, &q).unwrap();
                p[j] -= 2.0 * h;
                pm.set_params(&p).unwrap();
                let dn = pm.log_prob(&s, &q).unwrap();
                let fd = (up - dn) / (2.0 * h);
                let g = rec.grad_theta_log_prob[j];
                prop_assert!((fd - g).abs() <= 1e-4 * fd.abs().max(1e-2), "param {}: fd {} vs {}", j, fd, g);
            }
        }
    }
}
