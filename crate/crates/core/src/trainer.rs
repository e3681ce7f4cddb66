//! Score-function policy-gradient training and inference.
//!
//! Each interval is a one-step decision: sample `q ~ pi(. | s)`, observe the
//! penalized loss `f(q; s)` from the exact power flow, and accumulate
//! `(f - b) * grad log pi(q | s)`. Batches are averaged in a fixed order, so a
//! run is a pure function of its seed, config, data and feeder.

use std::collections::VecDeque;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{GridState, NetworkModel};
use crate::policy::{PolicyGradientRecord, PolicyModel, DEFAULT_HIDDEN, DEFAULT_SIGMA_FLOOR};
use crate::powerflow::{evaluate_loss_with, ActionMode, EvalConfig};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Optimizer {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub const ADAM: Optimizer = Optimizer::Adam {
        beta1: 0.9,
        beta2: 0.999,
        eps: 1e-8,
    };
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BaselineMode {
    None,
    RunningMean { window: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub optimizer: Optimizer,
    pub penalty_coeff: f64,
    pub baseline_mode: BaselineMode,
    pub seed: u64,
    pub sigma_floor: f64,
    pub hidden: Vec<usize>,
    /// L2 clipping threshold for the batch gradient; `None` disables it.
    pub grad_clip: Option<f64>,
    /// Window of the trailing mean in the loss trace.
    pub trace_window: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            batch_size: 30,
            epochs: 40,
            optimizer: Optimizer::ADAM,
            penalty_coeff: 100.0,
            baseline_mode: BaselineMode::RunningMean { window: 200 },
            seed: 0,
            sigma_floor: DEFAULT_SIGMA_FLOOR,
            hidden: DEFAULT_HIDDEN.to_vec(),
            grad_clip: Some(10.0),
            trace_window: 200,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidParameter(format!("learning_rate {}", self.learning_rate)));
        }
        if self.batch_size == 0 || self.epochs == 0 || self.trace_window == 0 {
            return Err(Error::InvalidParameter("batch_size, epochs and trace_window must be >= 1".into()));
        }
        if !(self.sigma_floor > 0.0) {
            return Err(Error::InvalidParameter(format!("sigma_floor {}", self.sigma_floor)));
        }
        if let BaselineMode::RunningMean { window: 0 } = self.baseline_mode {
            return Err(Error::InvalidParameter("running-mean window must be >= 1".into()));
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                return Err(Error::InvalidParameter(format!("grad_clip {c}")));
            }
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: TrainConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub state: GridState,
    pub record: PolicyGradientRecord,
    pub loss: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeBatch {
    pub records: Vec<Episode>,
}

impl EpisodeBatch {
    pub fn batch_mean_loss(&self) -> f64 {
        self.records.iter().map(|e| e.loss).sum::<f64>() / self.records.len() as f64
    }
}

/// `(1/B) sum_i (f_i - b) grad log pi(q_i | s_i)`, reduced in record order.
pub fn estimate_gradient(batch: &EpisodeBatch, baseline: f64) -> Result<Vec<f64>> {
    let first = batch
        .records
        .first()
        .ok_or_else(|| Error::InvalidParameter("empty batch".into()))?;
    let mut g = vec![0.0; first.record.grad_theta_log_prob.len()];
    for ep in &batch.records {
        let w = ep.loss - baseline;
        if ep.record.grad_theta_log_prob.len() != g.len() {
            return Err(Error::DimensionMismatch("gradient records differ in length".into()));
        }
        g.iter_mut()
            .zip(&ep.record.grad_theta_log_prob)
            .for_each(|(a, b)| *a += w * b);
    }
    let inv = 1.0 / batch.records.len() as f64;
    g.iter_mut().for_each(|a| *a *= inv);
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteGradient);
    }
    Ok(g)
}

/// Mean of the most recent `window` losses seen so far.
#[derive(Clone, Debug)]
pub struct RunningMean {
    window: usize,
    buf: VecDeque<f64>,
}

impl RunningMean {
    pub fn new(window: usize) -> Self {
        RunningMean {
            window,
            buf: VecDeque::with_capacity(window),
        }
    }

    pub fn value(&self) -> f64 {
        if self.buf.is_empty() {
            0.0
        } else {
            self.buf.iter().sum::<f64>() / self.buf.len() as f64
        }
    }

    pub fn push(&mut self, x: f64) {
        if self.buf.len() == self.window {
            self.buf.pop_front();
        }
        self.buf.push_back(x);
    }
}

/// Rescales `g` in place to L2 norm at most `max_norm`; returns the original norm.
pub fn clip_gradient(g: &mut [f64], max_norm: f64) -> f64 {
    let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > max_norm {
        let k = max_norm / norm;
        g.iter_mut().for_each(|v| *v *= k);
    }
    norm
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OptState {
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

/// One descent step on `params`.
pub fn apply_update(params: &mut [f64], g: &[f64], optimizer: &Optimizer, lr: f64, state: &mut OptState) -> Result<()> {
    if g.len() != params.len() {
        return Err(Error::DimensionMismatch(format!(
            "gradient has {} entries, model has {}",
            g.len(),
            params.len()
        )));
    }
    state.step += 1;
    match *optimizer {
        Optimizer::Sgd => params.iter_mut().zip(g).for_each(|(p, g)| *p -= lr * g),
        Optimizer::Adam { beta1, beta2, eps } => {
            if state.m.len() != params.len() {
                state.m = vec![0.0; params.len()];
                state.v = vec![0.0; params.len()];
            }
            let t = state.step as i32;
            let c1 = 1.0 - beta1.powi(t);
            let c2 = 1.0 - beta2.powi(t);
            for i in 0..params.len() {
                state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g[i];
                state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * g[i] * g[i];
                let mh = state.m[i] / c1;
                let vh = state.v[i] / c2;
                params[i] -= lr * mh / (vh.sqrt() + eps);
            }
        }
    }
    Ok(())
}

/// Trailing mean over the last `window` entries, each computed from scratch.
pub fn running_average(raw: &[f64], window: usize) -> Vec<f64> {
    (0..raw.len())
        .map(|i| {
            let start = (i + 1).saturating_sub(window);
            raw[start..=i].iter().sum::<f64>() / (i + 1 - start) as f64
        })
        .collect()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTrace {
    pub window: usize,
    /// Dataset index of the interval behind each step.
    pub interval: Vec<usize>,
    pub raw: Vec<f64>,
    pub running_avg: Vec<f64>,
    pub baseline_opt: Vec<Option<f64>>,
    pub feasible: Vec<bool>,
}

impl LossTrace {
    pub fn new(window: usize) -> Self {
        LossTrace {
            window,
            ..Default::default()
        }
    }

    pub fn push(&mut self, interval: usize, loss: f64, feasible: bool) {
        self.interval.push(interval);
        self.raw.push(loss);
        self.feasible.push(feasible);
        self.baseline_opt.push(None);
        let n = self.raw.len();
        let start = n.saturating_sub(self.window);
        self.running_avg
            .push(self.raw[start..].iter().sum::<f64>() / (n - start) as f64);
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    /// Fills the optimum column from per-interval reference losses.
    pub fn attach_reference(&mut self, reference: &[f64]) -> Result<()> {
        self.baseline_opt = self
            .interval
            .iter()
            .map(|&i| {
                reference.get(i).copied().map(Some).ok_or(Error::LengthMismatch {
                    what: "reference losses",
                    expected: i + 1,
                    got: reference.len(),
                })
            })
            .collect::<Result<_>>()?;
        Ok(())
    }

    /// Mean of the running average over consecutive chunks of `chunk` steps.
    pub fn chunk_means(&self, chunk: usize) -> Vec<f64> {
        self.running_avg
            .chunks(chunk.max(1))
            .map(|c| c.iter().sum::<f64>() / c.len() as f64)
            .collect()
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["step", "interval", "raw_loss", "running_avg", "baseline_opt_loss", "feasible"])?;
        for i in 0..self.raw.len() {
            w.write_record([
                i.to_string(),
                self.interval[i].to_string(),
                crate::dataset::fmt_f64(self.raw[i]),
                crate::dataset::fmt_f64(self.running_avg[i]),
                self.baseline_opt[i].map(crate::dataset::fmt_f64).unwrap_or_default(),
                u8::from(self.feasible[i]).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: impl AsRef<Path>, window: usize) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let mut t = LossTrace::new(window);
        for rec in r.records() {
            let rec = rec?;
            let f = |i: usize| -> Result<&str> { rec.get(i).ok_or(Error::MissingColumn(format!("column {i}"))) };
            t.interval
                .push(f(1)?.parse().map_err(|e| Error::Parse(format!("bad interval index: {e}")))?);
            t.raw.push(crate::dataset::parse_f64(f(2)?)?);
            t.running_avg.push(crate::dataset::parse_f64(f(3)?)?);
            let b = f(4)?;
            t.baseline_opt
                .push(if b.is_empty() { None } else { Some(crate::dataset::parse_f64(b)?) });
            t.feasible.push(f(5)? == "1");
        }
        Ok(t)
    }
}

/// Everything needed to reproduce a training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub version: String,
    pub seed: u64,
    pub config: TrainConfig,
    pub feeder_fingerprint: String,
    pub dataset_sha256: String,
    pub n_train: usize,
    /// Free-form inputs recorded by the caller (file paths, split, power factor).
    #[serde(default)]
    pub inputs: serde_json::Map<String, serde_json::Value>,
}

pub const MANIFEST_VERSION: &str = "voltcraft-run/1";

impl RunManifest {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: RunManifest = serde_json::from_str(text)?;
        if m.version != MANIFEST_VERSION {
            return Err(Error::VersionMismatch {
                expected: MANIFEST_VERSION.into(),
                found: m.version,
            });
        }
        Ok(m)
    }
}

/// Hash of the exact bit patterns of a state sequence.
pub fn dataset_hash(states: &[GridState]) -> String {
    let mut bytes = Vec::with_capacity(states.len() * 16 * states.first().map_or(0, |s| s.p.len()));
    for s in states {
        for v in s.p.iter().chain(&s.q_c) {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    crate::network::hex_digest(&bytes)
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: PolicyModel,
    pub trace: LossTrace,
    pub manifest: RunManifest,
    pub opt_state: OptState,
}

/// Fresh policy for `net` sized and seeded from `config`.
pub fn init_policy(net: &NetworkModel, train: &[GridState], config: &TrainConfig) -> Result<PolicyModel> {
    PolicyModel::for_network(net, train, &config.hidden, config.sigma_floor, config.seed)
}

/// Runs the training loop over `dataset` starting from `model`.
pub fn train(model: PolicyModel, net: &NetworkModel, dataset: &[GridState], config: &TrainConfig) -> Result<TrainOutcome> {
    train_with_progress(model, net, dataset, config, |_, _| {})
}

/// As [`train`], calling `progress(epoch, trace)` after every epoch.
pub fn train_with_progress(
    mut model: PolicyModel,
    net: &NetworkModel,
    dataset: &[GridState],
    config: &TrainConfig,
    mut progress: impl FnMut(usize, &LossTrace),
) -> Result<TrainOutcome> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::InvalidParameter("training set is empty".into()));
    }
    if model.n_inverters() != net.n_inverters() {
        return Err(Error::DimensionMismatch(format!(
            "policy controls {} inverters, feeder has {}",
            model.n_inverters(),
            net.n_inverters()
        )));
    }
    for s in dataset {
        s.validate(net)?;
    }
    let eval = EvalConfig {
        penalty_coeff: config.penalty_coeff,
        action_mode: ActionMode::Strict,
        ..EvalConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = model.params();
    let mut opt = OptState::default();
    let mut trace = LossTrace::new(config.trace_window);
    let mut baseline = match config.baseline_mode {
        BaselineMode::None => None,
        BaselineMode::RunningMean { window } => Some(RunningMean::new(window)),
    };
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let mut batch = EpisodeBatch::default();
            for &i in chunk {
                let s = &dataset[i];
                let action = model.sample_action(s, &mut rng)?;
                let ev = evaluate_loss_with(net, s, &action, &eval)?;
                let record = model.grad_log_prob(s, &action)?;
                trace.push(i, ev.penalized, ev.feasible);
                batch.records.push(Episode {
                    state: s.clone(),
                    record,
                    loss: ev.penalized,
                });
            }
            let b = baseline.as_ref().map_or(0.0, RunningMean::value);
            let mut g = estimate_gradient(&batch, b)?;
            if let Some(c) = config.grad_clip {
                clip_gradient(&mut g, c);
            }
            apply_update(&mut params, &g, &config.optimizer, config.learning_rate, &mut opt)?;
            model.set_params(&params)?;
            if let Some(bl) = baseline.as_mut() {
                batch.records.iter().for_each(|e| bl.push(e.loss));
            }
        }
        progress(epoch, &trace);
    }
    let manifest = RunManifest {
        version: MANIFEST_VERSION.into(),
        seed: config.seed,
        config: config.clone(),
        feeder_fingerprint: net.fingerprint(),
        dataset_sha256: dataset_hash(dataset),
        n_train: dataset.len(),
        inputs: Default::default(),
    };
    Ok(TrainOutcome {
        model,
        trace,
        manifest,
        opt_state: opt,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InferenceMode {
    /// Draw from the policy.
    Sample,
    /// Dispatch the mean, clipped to the box.
    Deterministic,
}

/// Setpoints for one interval: one forward pass plus, in sample mode, one
/// inverse-CDF draw per inverter.
pub fn infer<R: rand::Rng + ?Sized>(
    model: &PolicyModel,
    state: &GridState,
    mode: InferenceMode,
    rng: &mut R,
) -> Result<Vec<f64>> {
    match mode {
        InferenceMode::Sample => model.sample_action(state, rng),
        InferenceMode::Deterministic => {
            let (mu, _) = model.forward(state)?;
            Ok(mu
                .iter()
                .zip(model.action_box.q_min.iter().zip(&model.action_box.q_max))
                .map(|(m, (lo, hi))| m.clamp(*lo, *hi))
                .collect())
        }
    }
}
