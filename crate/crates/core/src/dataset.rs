//! Load/solar time series: CSV ingestion, a synthetic day generator, splits,
//! and the tabular result formats written by the CLI.
//!
//! Time-series CSV layout: `timestamp,<bus>_pc_kw...,<bus>_pg_kw...` with
//! timestamps in whole seconds. Every float written by this module uses 17
//! significant digits, so files re-parse bit-exactly.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{BusId, GridState, NetworkModel};

/// Round-trip-safe decimal rendering of a double.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn parse_f64(s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|e| Error::Parse(format!("bad number {s:?}: {e}")))
}

/// One measured interval, in kW as it appears on disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub timestamp: i64,
    /// Consumption per non-root bus, indexed by `bus - 1`.
    pub pc_kw: Vec<f64>,
    /// PV output per inverter, in inverter order.
    pub pg_kw: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    File { path: PathBuf, sha256: String },
    Synthetic { seed: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SplitMode {
    /// First `train_fraction` of the intervals in time order for training.
    Chronological { train_fraction: f64 },
    /// Seeded random partition.
    Shuffled { train_fraction: f64, seed: u64 },
}

impl Default for SplitMode {
    fn default() -> Self {
        SplitMode::Chronological { train_fraction: 0.7 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subset {
    Train,
    Test,
    All,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeSeriesDataset {
    pub interval_s: i64,
    pub power_factor: f64,
    pub intervals: Vec<Interval>,
    pub states: Vec<GridState>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub provenance: Provenance,
    /// Number of PV readings clipped to the inverter nameplate on load.
    pub clipped_pg: usize,
}

fn tan_phi(pf: f64) -> Result<f64> {
    if !(pf > 0.0 && pf <= 1.0) {
        return Err(Error::InvalidParameter(format!("power factor must be in (0, 1], got {pf}")));
    }
    Ok((1.0 - pf * pf).max(0.0).sqrt() / pf)
}

/// Per-unit state of one interval: `p = p_g - p_c`, `q_c = p_c tan(acos(pf))`.
pub fn interval_state(model: &NetworkModel, iv: &Interval, pf: f64, index: usize) -> Result<GridState> {
    let t = tan_phi(pf)?;
    let mut s = GridState::zeros(model.n_lines());
    s.timestamp = index;
    for (i, &pc) in iv.pc_kw.iter().enumerate() {
        let pc = model.kw_to_pu(pc);
        s.p[i] = -pc;
        s.q_c[i] = pc * t;
    }
    for (inv, &pg) in model.inverters().iter().zip(&iv.pg_kw) {
        s.p[inv.bus.index() - 1] += model.kw_to_pu(pg);
    }
    Ok(s)
}

impl TimeSeriesDataset {
    fn from_intervals(
        model: &NetworkModel,
        intervals: Vec<Interval>,
        interval_s: i64,
        power_factor: f64,
        provenance: Provenance,
        clipped_pg: usize,
    ) -> Result<Self> {
        let states = intervals
            .iter()
            .enumerate()
            .map(|(k, iv)| interval_state(model, iv, power_factor, k))
            .collect::<Result<Vec<_>>>()?;
        let mut ds = TimeSeriesDataset {
            interval_s,
            power_factor,
            intervals,
            states,
            train: Vec::new(),
            test: Vec::new(),
            provenance,
            clipped_pg,
        };
        ds.apply_split(SplitMode::default())?;
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn apply_split(&mut self, mode: SplitMode) -> Result<()> {
        let n = self.states.len();
        let frac = match mode {
            SplitMode::Chronological { train_fraction } | SplitMode::Shuffled { train_fraction, .. } => train_fraction,
        };
        if !(0.0..=1.0).contains(&frac) {
            return Err(Error::InvalidParameter(format!("train fraction {frac}")));
        }
        let n_train = (frac * n as f64).round() as usize;
        let mut idx: Vec<usize> = (0..n).collect();
        if let SplitMode::Shuffled { seed, .. } = mode {
            use rand::seq::SliceRandom;
            idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        }
        let (tr, te) = idx.split_at(n_train);
        self.train = tr.to_vec();
        self.test = te.to_vec();
        self.train.sort_unstable();
        self.test.sort_unstable();
        Ok(())
    }

    pub fn indices(&self, subset: Subset) -> Vec<usize> {
        match subset {
            Subset::Train => self.train.clone(),
            Subset::Test => self.test.clone(),
            Subset::All => (0..self.len()).collect(),
        }
    }

    pub fn subset(&self, subset: Subset) -> Vec<GridState> {
        self.indices(subset).into_iter().map(|i| self.states[i].clone()).collect()
    }

    pub fn write_csv(&self, model: &NetworkModel, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(timeseries_header(model))?;
        for iv in &self.intervals {
            let mut rec = vec![iv.timestamp.to_string()];
            rec.extend(iv.pc_kw.iter().map(|&v| fmt_f64(v)));
            rec.extend(iv.pg_kw.iter().map(|&v| fmt_f64(v)));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn timeseries_header(model: &NetworkModel) -> Vec<String> {
    let mut h = vec!["timestamp".to_string()];
    h.extend((1..=model.n_lines()).map(|b| format!("{}_pc_kw", model.label(BusId(b)))));
    h.extend(model.inverters().iter().map(|inv| format!("{}_pg_kw", model.label(inv.bus))));
    h
}

/// Buses whose consumption column is mandatory: those with a nominal load,
/// or every non-root bus when the feeder carries no load data.
fn required_load_buses(model: &NetworkModel) -> Vec<usize> {
    let loaded: Vec<usize> = (1..=model.n_lines())
        .filter(|&b| model.nominal_load()[b - 1] != 0.0)
        .collect();
    if loaded.is_empty() {
        (1..=model.n_lines()).collect()
    } else {
        loaded
    }
}

/// Reads a time-series CSV for `model`.
pub fn load_timeseries(path: impl AsRef<Path>, model: &NetworkModel, power_factor: f64) -> Result<TimeSeriesDataset> {
    let path = path.as_ref();
    let bytes = std::fs::read(path)?;
    let sha = crate::network::hex_digest(&bytes);
    let mut ds = parse_timeseries(&bytes, model, power_factor)?;
    ds.provenance = Provenance::File {
        path: path.to_path_buf(),
        sha256: sha,
    };
    Ok(ds)
}

pub fn parse_timeseries(bytes: &[u8], model: &NetworkModel, power_factor: f64) -> Result<TimeSeriesDataset> {
    tan_phi(power_factor)?;
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(bytes);
    let header = r.headers()?.clone();
    let ts_col = header
        .iter()
        .position(|h| h == "timestamp")
        .ok_or_else(|| Error::MissingColumn("timestamp".into()))?;
    let mut pc_cols: Vec<Option<usize>> = vec![None; model.n_lines()];
    let mut pg_cols: Vec<Option<usize>> = vec![None; model.n_inverters()];
    for (c, h) in header.iter().enumerate() {
        if c == ts_col {
            continue;
        }
        let (label, kind) = if let Some(l) = h.strip_suffix("_pc_kw") {
            (l, 0)
        } else if let Some(l) = h.strip_suffix("_pg_kw") {
            (l, 1)
        } else {
            return Err(Error::Parse(format!("unrecognized column {h:?}")));
        };
        let bus = model
            .bus_by_label(label)
            .filter(|b| *b != BusId::ROOT)
            .ok_or_else(|| Error::Parse(format!("column {h:?} names unknown bus {label:?}")))?;
        if kind == 0 {
            pc_cols[bus.index() - 1] = Some(c);
        } else {
            let k = model
                .inverter_at(bus)
                .ok_or_else(|| Error::Parse(format!("column {h:?}: bus {label} has no inverter")))?;
            pg_cols[k] = Some(c);
        }
    }
    for b in required_load_buses(model) {
        if pc_cols[b - 1].is_none() {
            return Err(Error::MissingColumn(format!("{}_pc_kw", model.label(BusId(b)))));
        }
    }
    for (k, col) in pg_cols.iter().enumerate() {
        if col.is_none() {
            return Err(Error::MissingColumn(format!("{}_pg_kw", model.label(model.inverters()[k].bus))));
        }
    }
    let mut intervals = Vec::new();
    let mut clipped = 0;
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        let field = |c: usize| -> Result<&str> {
            rec.get(c)
                .ok_or_else(|| Error::Parse(format!("row {} is missing column {c}", row + 1)))
        };
        let ts: i64 = field(ts_col)?
            .parse()
            .map_err(|e| Error::Parse(format!("row {}: timestamp: {e}", row + 1)))?;
        if let Some(prev) = intervals.last().map(|iv: &Interval| iv.timestamp) {
            if ts <= prev {
                return Err(Error::NonMonotoneTime(row + 1));
            }
        }
        let mut pc_kw = vec![0.0; model.n_lines()];
        for (i, col) in pc_cols.iter().enumerate() {
            if let Some(c) = col {
                pc_kw[i] = parse_f64(field(*c)?)?;
            }
        }
        let mut pg_kw = vec![0.0; model.n_inverters()];
        for (k, col) in pg_cols.iter().enumerate() {
            let v = parse_f64(field(col.expect("checked"))?)?;
            let cap = model.pu_to_kw(model.inverters()[k].p_rated);
            pg_kw[k] = if v > cap {
                clipped += 1;
                cap
            } else {
                v.max(0.0)
            };
        }
        if pc_kw.iter().chain(&pg_kw).any(|v| !v.is_finite()) {
            return Err(Error::Parse(format!("row {}: non-finite value", row + 1)));
        }
        intervals.push(Interval {
            timestamp: ts,
            pc_kw,
            pg_kw,
        });
    }
    let interval_s = match intervals.as_slice() {
        [a, b, ..] => b.timestamp - a.timestamp,
        _ => 60,
    };
    TimeSeriesDataset::from_intervals(model, intervals, interval_s, power_factor, Provenance::Synthetic { seed: 0 }, clipped)
}

/// Shape of the synthetic day.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfileConfig {
    pub n_intervals: usize,
    pub interval_s: i64,
    pub start_s: i64,
    pub power_factor: f64,
    /// Multiplier on each bus's nominal load.
    pub load_amplitude: f64,
    /// Night-time load as a fraction of the daily peak shape.
    pub load_base: f64,
    /// Std of the per-bus multiplicative AR(1) load noise.
    pub load_noise: f64,
    /// Clear-sky noon output as a fraction of nameplate.
    pub solar_amplitude: f64,
    pub sunrise_h: f64,
    pub sunset_h: f64,
    /// Cloud arrivals per daylight hour.
    pub cloud_rate_per_h: f64,
    /// Bound on the one-minute PV change, as a fraction of nameplate.
    pub max_ramp_per_min: f64,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        ProfileConfig {
            n_intervals: 1440,
            interval_s: 60,
            start_s: 0,
            power_factor: 0.8,
            load_amplitude: 1.0,
            load_base: 0.45,
            load_noise: 0.03,
            solar_amplitude: 0.95,
            sunrise_h: 6.0,
            sunset_h: 20.0,
            cloud_rate_per_h: 1.5,
            max_ramp_per_min: 0.15,
        }
    }
}

/// Diurnal load multiplier in `[load_base, ~1]`, peaking in the evening.
fn load_shape(h: f64, base: f64) -> f64 {
    let bump = |c: f64, w: f64| (-((h - c) / w).powi(2)).exp();
    let s = 0.45 * bump(8.0, 2.0) + bump(19.0, 2.5) + 0.25 * bump(13.0, 3.0);
    base + (1.0 - base) * s.min(1.0)
}

fn clear_sky(h: f64, rise: f64, set: f64) -> f64 {
    if h <= rise || h >= set {
        0.0
    } else {
        (std::f64::consts::PI * (h - rise) / (set - rise)).sin().powf(1.5)
    }
}

/// Seeded synthetic day on `model` (needs nominal loads for consumption).
pub fn synthesize_timeseries(model: &NetworkModel, profile: &ProfileConfig, seed: u64) -> Result<TimeSeriesDataset> {
    tan_phi(profile.power_factor)?;
    if profile.interval_s <= 0 {
        return Err(Error::InvalidParameter("interval_s must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = model.n_lines();
    let dt_min = profile.interval_s as f64 / 60.0;
    // A one-minute bound implies a per-step bound for sub-minute steps.
    let step_bound = profile.max_ramp_per_min * dt_min.min(1.0);
    let rho = (-dt_min / 30.0).exp();
    let mut noise = vec![0.0; n];
    let mut cloud_left = 0usize;
    let mut cloud_depth = 0.0;
    let mut pv_prev: Option<f64> = None;
    let mut intervals = Vec::with_capacity(profile.n_intervals);
    for k in 0..profile.n_intervals {
        let t = profile.start_s + k as i64 * profile.interval_s;
        let h = (t as f64 / 3600.0).rem_euclid(24.0);
        let lf = load_shape(h, profile.load_base) * profile.load_amplitude;
        for e in noise.iter_mut() {
            let z = std_normal(&mut rng);
            *e = rho * *e + (1.0 - rho * rho).sqrt() * profile.load_noise * z;
        }
        let pc_kw: Vec<f64> = (0..n)
            .map(|i| model.pu_to_kw(model.nominal_load()[i]) * (lf * (1.0 + noise[i])).max(0.0))
            .collect();

        let clear = profile.solar_amplitude * clear_sky(h, profile.sunrise_h, profile.sunset_h);
        if cloud_left == 0 && clear > 0.0 && rng.random::<f64>() < profile.cloud_rate_per_h * dt_min / 60.0 {
            cloud_left = rng.random_range(2..16usize).max(1);
            cloud_depth = rng.random_range(0.15..0.7);
        }
        let target = if cloud_left > 0 {
            cloud_left -= 1;
            clear * (1.0 - cloud_depth)
        } else {
            clear
        };
        let pv = match pv_prev {
            Some(prev) => prev + (target - prev).clamp(-step_bound, step_bound),
            None => target,
        }
        .clamp(0.0, 1.0);
        pv_prev = Some(pv);
        let pg_kw = model.inverters().iter().map(|inv| model.pu_to_kw(inv.p_rated) * pv).collect();
        intervals.push(Interval { timestamp: t, pc_kw, pg_kw });
    }
    TimeSeriesDataset::from_intervals(
        model,
        intervals,
        profile.interval_s,
        profile.power_factor,
        Provenance::Synthetic { seed },
        0,
    )
}

/// Box-Muller on the shared ChaCha stream.
fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Largest absolute one-step change of the common PV fraction.
pub fn max_pv_step(ds: &TimeSeriesDataset, model: &NetworkModel) -> f64 {
    let Some(inv) = model.inverters().first() else { return 0.0 };
    let cap = model.pu_to_kw(inv.p_rated);
    ds.intervals
        .windows(2)
        .map(|w| ((w[1].pg_kw[0] - w[0].pg_kw[0]) / cap).abs())
        .fold(0.0, f64::max)
}

// ---------------------------------------------------------------------------
// Result tables
// ---------------------------------------------------------------------------

/// A row type with a fixed CSV layout.
pub trait CsvRow: Sized {
    fn header(width: usize) -> Vec<String>;
    fn fields(&self) -> Vec<String>;
    fn parse(fields: &[&str]) -> Result<Self>;
    fn width(&self) -> usize;
}

pub fn write_rows<T: CsvRow>(path: impl AsRef<Path>, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(T::header(rows.first().map_or(0, CsvRow::width)))?;
    for r in rows {
        w.write_record(r.fields())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows<T: CsvRow>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let fields: Vec<&str> = rec.iter().collect();
        out.push(T::parse(&fields)?);
    }
    Ok(out)
}

fn need<'a>(f: &[&'a str], i: usize) -> Result<&'a str> {
    f.get(i).copied().ok_or_else(|| Error::MissingColumn(format!("column {i}")))
}

fn parse_bool(s: &str) -> Result<bool> {
    match s {
        "1" | "true" => Ok(true),
        "0" | "false" => Ok(false),
        _ => Err(Error::Parse(format!("bad flag {s:?}"))),
    }
}

fn parse_usize(s: &str) -> Result<usize> {
    s.parse().map_err(|e| Error::Parse(format!("bad integer {s:?}: {e}")))
}

#[derive(Clone, Debug, PartialEq)]
pub struct BaselineRow {
    pub t: usize,
    pub objective: f64,
    pub exact: bool,
    pub max_cone_slack: f64,
    pub q_g_star: Vec<f64>,
}

impl CsvRow for BaselineRow {
    fn header(width: usize) -> Vec<String> {
        let mut h: Vec<String> = ["t", "objective", "exact", "max_cone_slack"].map(String::from).into();
        h.extend((1..=width).map(|k| format!("q_g_{k}")));
        h
    }
    fn fields(&self) -> Vec<String> {
        let mut f = vec![
            self.t.to_string(),
            fmt_f64(self.objective),
            u8::from(self.exact).to_string(),
            fmt_f64(self.max_cone_slack),
        ];
        f.extend(self.q_g_star.iter().map(|&v| fmt_f64(v)));
        f
    }
    fn parse(f: &[&str]) -> Result<Self> {
        Ok(BaselineRow {
            t: parse_usize(need(f, 0)?)?,
            objective: parse_f64(need(f, 1)?)?,
            exact: parse_bool(need(f, 2)?)?,
            max_cone_slack: parse_f64(need(f, 3)?)?,
            q_g_star: f[4..].iter().map(|s| parse_f64(s)).collect::<Result<_>>()?,
        })
    }
    fn width(&self) -> usize {
        self.q_g_star.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InferRow {
    pub t: usize,
    pub loss: f64,
    pub penalized: f64,
    pub feasible: bool,
    pub q_g: Vec<f64>,
}

impl CsvRow for InferRow {
    fn header(width: usize) -> Vec<String> {
        let mut h: Vec<String> = ["t", "loss", "penalized_loss", "feasible"].map(String::from).into();
        h.extend((1..=width).map(|k| format!("q_g_{k}")));
        h
    }
    fn fields(&self) -> Vec<String> {
        let mut f = vec![
            self.t.to_string(),
            fmt_f64(self.loss),
            fmt_f64(self.penalized),
            u8::from(self.feasible).to_string(),
        ];
        f.extend(self.q_g.iter().map(|&v| fmt_f64(v)));
        f
    }
    fn parse(f: &[&str]) -> Result<Self> {
        Ok(InferRow {
            t: parse_usize(need(f, 0)?)?,
            loss: parse_f64(need(f, 1)?)?,
            penalized: parse_f64(need(f, 2)?)?,
            feasible: parse_bool(need(f, 3)?)?,
            q_g: f[4..].iter().map(|s| parse_f64(s)).collect::<Result<_>>()?,
        })
    }
    fn width(&self) -> usize {
        self.q_g.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompareRow {
    pub t: usize,
    pub learned_loss: f64,
    pub optimal_loss: f64,
    pub gap: f64,
    pub learned_feasible: bool,
    pub exact: bool,
}

impl CsvRow for CompareRow {
    fn header(_: usize) -> Vec<String> {
        ["t", "learned_loss", "optimal_loss", "gap", "learned_feasible", "exact"]
            .map(String::from)
            .into()
    }
    fn fields(&self) -> Vec<String> {
        vec![
            self.t.to_string(),
            fmt_f64(self.learned_loss),
            fmt_f64(self.optimal_loss),
            fmt_f64(self.gap),
            u8::from(self.learned_feasible).to_string(),
            u8::from(self.exact).to_string(),
        ]
    }
    fn parse(f: &[&str]) -> Result<Self> {
        Ok(CompareRow {
            t: parse_usize(need(f, 0)?)?,
            learned_loss: parse_f64(need(f, 1)?)?,
            optimal_loss: parse_f64(need(f, 2)?)?,
            gap: parse_f64(need(f, 3)?)?,
            learned_feasible: parse_bool(need(f, 4)?)?,
            exact: parse_bool(need(f, 5)?)?,
        })
    }
    fn width(&self) -> usize {
        0
    }
}
