//! Radial feeder data model.
//!
//! Buses are dense integers `0..=N` with bus 0 the substation. Every other
//! bus `n` is fed by exactly one line, also indexed by `n`, from its parent.
//! All electrical quantities are per-unit on `base_mva` / `base_kv`, and
//! voltages are *squared* magnitudes.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Default inverter oversizing `s_rated / p_rated`.
pub const DEFAULT_OVERSIZE: f64 = 1.08;
/// Default voltage band on magnitudes, +-5% around nominal.
pub const DEFAULT_BAND_PU: (f64, f64) = (0.95, 1.05);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BusId(pub usize);

impl BusId {
    pub const ROOT: BusId = BusId(0);

    #[inline]
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for BusId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Distribution line feeding `bus` from `parent`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub bus: BusId,
    pub parent: BusId,
    pub r: f64,
    pub x: f64,
}

/// Smart inverter with a symmetric, time-invariant reactive box.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InverterSpec {
    pub bus: BusId,
    pub p_rated: f64,
    pub s_rated: f64,
    pub q_min: f64,
    pub q_max: f64,
}

impl InverterSpec {
    /// Builds a spec, defaulting `s_rated` to `1.08 * p_rated`.
    pub fn new(bus: BusId, p_rated: f64, s_rated: Option<f64>) -> Result<Self> {
        if !(p_rated > 0.0 && p_rated.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "inverter at bus {bus}: p_rated must be positive, got {p_rated}"
            )));
        }
        let s_rated = s_rated.unwrap_or(DEFAULT_OVERSIZE * p_rated);
        let mut spec = InverterSpec {
            bus,
            p_rated,
            s_rated,
            q_min: 0.0,
            q_max: 0.0,
        };
        let (q_min, q_max) = reactive_capability(&spec)?;
        spec.q_min = q_min;
        spec.q_max = q_max;
        Ok(spec)
    }

    pub fn width(&self) -> f64 {
        self.q_max - self.q_min
    }
}

/// Reactive headroom `q_max = sqrt(s_rated^2 - p_rated^2)`, `q_min = -q_max`.
///
/// The headroom is evaluated at nameplate active output, so the box does not
/// depend on the instantaneous PV output.
pub fn reactive_capability(spec: &InverterSpec) -> Result<(f64, f64)> {
    let (p, s) = (spec.p_rated, spec.s_rated);
    if !(s >= p) || !s.is_finite() {
        return Err(Error::Capability {
            p_rated: p,
            s_rated: s,
        });
    }
    // (s - p)(s + p) avoids cancellation when s is close to p.
    let q_max = ((s - p) * (s + p)).sqrt();
    Ok((-q_max, q_max))
}

/// Grid state for one control interval: net active injections `p = p^g - p^c`
/// and reactive consumptions `q_c`, both indexed by `bus - 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridState {
    pub p: Vec<f64>,
    pub q_c: Vec<f64>,
    #[serde(default)]
    pub timestamp: usize,
}

impl GridState {
    pub fn zeros(n: usize) -> Self {
        GridState {
            p: vec![0.0; n],
            q_c: vec![0.0; n],
            timestamp: 0,
        }
    }

    pub fn validate(&self, model: &NetworkModel) -> Result<()> {
        let n = model.n_lines();
        if self.p.len() != n {
            return Err(Error::LengthMismatch {
                what: "state.p",
                expected: n,
                got: self.p.len(),
            });
        }
        if self.q_c.len() != n {
            return Err(Error::LengthMismatch {
                what: "state.q_c",
                expected: n,
                got: self.q_c.len(),
            });
        }
        if self.p.iter().chain(&self.q_c).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("state has non-finite entries".into()));
        }
        Ok(())
    }

    /// Policy input `(p, q_c)` of length `2N`.
    pub fn features(&self) -> Vec<f64> {
        let mut s = Vec::with_capacity(self.p.len() * 2);
        s.extend_from_slice(&self.p);
        s.extend_from_slice(&self.q_c);
        s
    }
}

/// Validated rooted-tree feeder in per-unit.
#[derive(Clone, Debug, Serialize)]
pub struct NetworkModel {
    pub name: String,
    labels: Vec<String>,
    lines: Vec<Line>,
    base_mva: f64,
    base_kv: f64,
    v0: f64,
    voltage_band: Vec<(f64, f64)>,
    inverters: Vec<InverterSpec>,
    nominal_load: Vec<f64>,
    #[serde(skip)]
    children: Vec<Vec<BusId>>,
    #[serde(skip)]
    order: Vec<BusId>,
    #[serde(skip)]
    inverter_at: Vec<Option<usize>>,
}

/// Everything needed to assemble a [`NetworkModel`]; validated by [`NetworkModel::new`].
#[derive(Clone, Debug)]
pub struct NetworkParts {
    pub name: String,
    pub labels: Option<Vec<String>>,
    /// One line per non-root bus, in any order.
    pub lines: Vec<Line>,
    pub base_mva: f64,
    pub base_kv: f64,
    /// Squared substation voltage.
    pub v0: f64,
    /// Squared band applied to every bus.
    pub voltage_band: (f64, f64),
    pub inverters: Vec<InverterSpec>,
    /// Nominal peak active load per non-root bus, per-unit.
    pub nominal_load: Option<Vec<f64>>,
}

impl NetworkModel {
    pub fn new(parts: NetworkParts) -> Result<Self> {
        if !(parts.base_mva > 0.0 && parts.base_mva.is_finite()) {
            return Err(Error::Unit(format!("base_mva must be positive, got {}", parts.base_mva)));
        }
        if !(parts.base_kv > 0.0 && parts.base_kv.is_finite()) {
            return Err(Error::Unit(format!("base_kv must be positive, got {}", parts.base_kv)));
        }
        let n = parts.lines.len();
        let mut slots: Vec<Option<Line>> = vec![None; n + 1];
        for line in &parts.lines {
            let b = line.bus.index();
            if line.bus == BusId::ROOT {
                return Err(Error::Topology("the root bus cannot have a parent line".into()));
            }
            if line.bus == line.parent {
                return Err(Error::Topology(format!("bus {} is its own parent", line.bus)));
            }
            if b > n || line.parent.index() > n {
                return Err(Error::Topology(format!(
                    "line {} -> {} references a bus outside 0..={n}",
                    line.parent, line.bus
                )));
            }
            if slots[b].is_some() {
                return Err(Error::Topology(format!("bus {} has multiple parents", line.bus)));
            }
            if !(line.r >= 0.0 && line.r.is_finite() && line.x.is_finite()) || line.r + line.x.abs() <= 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "line into bus {}: need r >= 0, finite x and r + |x| > 0 (r={}, x={})",
                    line.bus, line.r, line.x
                )));
            }
            slots[b] = Some(*line);
        }
        let lines: Vec<Line> = slots.into_iter().skip(1).map(|l| l.expect("dense ids")).collect();

        let mut children = vec![Vec::new(); n + 1];
        for line in &lines {
            children[line.parent.index()].push(line.bus);
        }
        for c in &mut children {
            c.sort();
        }
        // BFS from the root; anything unreached sits on a cycle or is detached.
        let mut order = Vec::with_capacity(n + 1);
        order.push(BusId::ROOT);
        let mut head = 0;
        while head < order.len() {
            let b = order[head];
            order.extend_from_slice(&children[b.index()]);
            head += 1;
        }
        if order.len() != n + 1 {
            return Err(Error::Topology(format!(
                "{} bus(es) not reachable from the substation (cycle or disconnected)",
                n + 1 - order.len()
            )));
        }

        let (vmin, vmax) = parts.voltage_band;
        if !(vmin > 0.0 && vmin < vmax && vmax.is_finite()) {
            return Err(Error::InvalidParameter(format!("invalid voltage band [{vmin}, {vmax}]")));
        }
        if !(parts.v0 >= vmin && parts.v0 <= vmax) {
            return Err(Error::InvalidParameter(format!(
                "substation voltage {} outside band [{vmin}, {vmax}]",
                parts.v0
            )));
        }

        let mut inverter_at = vec![None; n + 1];
        for (k, inv) in parts.inverters.iter().enumerate() {
            let b = inv.bus.index();
            if b == 0 || b > n {
                return Err(Error::UnknownBus(b));
            }
            if inverter_at[b].is_some() {
                return Err(Error::InvalidParameter(format!("two inverters on bus {b}")));
            }
            let (q_min, q_max) = reactive_capability(inv)?;
            if (inv.q_max - q_max).abs() > 1e-12 || inv.q_min != -inv.q_max {
                return Err(Error::InvalidParameter(format!(
                    "inverter at bus {b}: reactive box [{}, {}] is not the symmetric capability [{q_min}, {q_max}]",
                    inv.q_min, inv.q_max
                )));
            }
            inverter_at[b] = Some(k);
        }

        let labels = match parts.labels {
            Some(l) if l.len() == n + 1 => l,
            Some(l) => {
                return Err(Error::LengthMismatch {
                    what: "labels",
                    expected: n + 1,
                    got: l.len(),
                })
            }
            None => (0..=n).map(|i| i.to_string()).collect(),
        };
        let nominal_load = parts.nominal_load.unwrap_or_else(|| vec![0.0; n]);
        if nominal_load.len() != n {
            return Err(Error::LengthMismatch {
                what: "nominal_load",
                expected: n,
                got: nominal_load.len(),
            });
        }

        Ok(NetworkModel {
            name: parts.name,
            labels,
            lines,
            base_mva: parts.base_mva,
            base_kv: parts.base_kv,
            v0: parts.v0,
            voltage_band: vec![(vmin, vmax); n + 1],
            inverters: parts.inverters,
            nominal_load,
            children,
            order,
            inverter_at,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        load_network(path)
    }

    /// Number of non-root buses, which equals the number of lines.
    #[inline]
    pub fn n_lines(&self) -> usize {
        self.lines.len()
    }

    #[inline]
    pub fn n_buses(&self) -> usize {
        self.lines.len() + 1
    }

    #[inline]
    pub fn n_inverters(&self) -> usize {
        self.inverters.len()
    }

    /// Lines ordered by the bus they feed (`lines()[n - 1]` feeds bus `n`).
    pub fn lines(&self) -> &[Line] {
        &self.lines
    }

    pub fn line(&self, bus: BusId) -> Result<&Line> {
        if bus == BusId::ROOT {
            return Err(Error::UnknownBus(0));
        }
        self.lines.get(bus.index() - 1).ok_or(Error::UnknownBus(bus.index()))
    }

    pub fn parent(&self, bus: BusId) -> Option<BusId> {
        self.line(bus).ok().map(|l| l.parent)
    }

    /// Buses whose parent is `bus`, ascending.
    pub fn children(&self, bus: BusId) -> Result<&[BusId]> {
        self.children
            .get(bus.index())
            .map(Vec::as_slice)
            .ok_or(Error::UnknownBus(bus.index()))
    }

    /// Root-first breadth-first order, ties broken by ascending id.
    pub fn topological_order(&self) -> &[BusId] {
        &self.order
    }

    pub fn depth(&self) -> usize {
        let mut depth = vec![0usize; self.n_buses()];
        for &b in &self.order[1..] {
            depth[b.index()] = depth[self.lines[b.index() - 1].parent.index()] + 1;
        }
        depth.into_iter().max().unwrap_or(0)
    }

    pub fn inverters(&self) -> &[InverterSpec] {
        &self.inverters
    }

    /// Index into `inverters()` of the inverter sitting on `bus`, if any.
    pub fn inverter_at(&self, bus: BusId) -> Option<usize> {
        self.inverter_at.get(bus.index()).copied().flatten()
    }

    pub fn action_box(&self) -> (Vec<f64>, Vec<f64>) {
        (
            self.inverters.iter().map(|i| i.q_min).collect(),
            self.inverters.iter().map(|i| i.q_max).collect(),
        )
    }

    pub fn v0(&self) -> f64 {
        self.v0
    }

    /// Squared voltage band of `bus`.
    pub fn voltage_band(&self, bus: BusId) -> (f64, f64) {
        self.voltage_band[bus.index()]
    }

    /// Replaces the band on every bus (squared per-unit).
    pub fn with_voltage_band(mut self, v_min: f64, v_max: f64) -> Result<Self> {
        if !(v_min > 0.0 && v_min < v_max) {
            return Err(Error::InvalidParameter(format!("invalid voltage band [{v_min}, {v_max}]")));
        }
        if !(self.v0 >= v_min && self.v0 <= v_max) {
            return Err(Error::InvalidParameter("substation voltage outside the new band".into()));
        }
        self.voltage_band.iter_mut().for_each(|b| *b = (v_min, v_max));
        Ok(self)
    }

    pub fn base_mva(&self) -> f64 {
        self.base_mva
    }

    pub fn base_kv(&self) -> f64 {
        self.base_kv
    }

    pub fn kw_to_pu(&self, kw: f64) -> f64 {
        kw / (1000.0 * self.base_mva)
    }

    pub fn pu_to_kw(&self, pu: f64) -> f64 {
        pu * 1000.0 * self.base_mva
    }

    pub fn label(&self, bus: BusId) -> &str {
        &self.labels[bus.index()]
    }

    pub fn bus_by_label(&self, label: &str) -> Option<BusId> {
        self.labels.iter().position(|l| l == label).map(BusId)
    }

    /// Nominal peak active load per non-root bus (per-unit).
    pub fn nominal_load(&self) -> &[f64] {
        &self.nominal_load
    }

    /// State with every load at `load_factor` of nominal (power factor `pf`)
    /// and every PV unit at `pv_fraction` of nameplate.
    pub fn nominal_state(&self, load_factor: f64, pv_fraction: f64, pf: f64) -> GridState {
        let tan_phi = (1.0 - pf * pf).max(0.0).sqrt() / pf;
        let mut state = GridState::zeros(self.n_lines());
        for (i, &pl) in self.nominal_load.iter().enumerate() {
            state.p[i] = -load_factor * pl;
            state.q_c[i] = load_factor * pl * tan_phi;
        }
        for inv in &self.inverters {
            state.p[inv.bus.index() - 1] += pv_fraction * inv.p_rated;
        }
        state
    }

    /// SHA-256 over the canonical JSON of the model's defining fields.
    pub fn fingerprint(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("model serializes");
        hex_digest(&bytes)
    }

    /// Feeder-file representation of this model.
    pub fn to_feeder_file(&self) -> FeederFile {
        let mut buses = vec![BusEntry {
            id: Label::Text(self.labels[0].clone()),
            parent: None,
            r_pu: None,
            x_pu: None,
            load_kw: None,
        }];
        for line in &self.lines {
            let load = self.nominal_load[line.bus.index() - 1];
            buses.push(BusEntry {
                id: Label::Text(self.labels[line.bus.index()].clone()),
                parent: Some(Label::Text(self.labels[line.parent.index()].clone())),
                r_pu: Some(line.r),
                x_pu: Some(line.x),
                load_kw: (load != 0.0).then(|| self.pu_to_kw(load)),
            });
        }
        let (vmin, vmax) = self.voltage_band[0];
        FeederFile {
            name: Some(self.name.clone()),
            base_mva: self.base_mva,
            base_kv: self.base_kv,
            v0_pu: self.v0.sqrt(),
            voltage_band_pu: [vmin.sqrt(), vmax.sqrt()],
            buses,
            inverters: self
                .inverters
                .iter()
                .map(|i| InverterEntry {
                    bus: Label::Text(self.labels[i.bus.index()].clone()),
                    p_rated_kw: self.pu_to_kw(i.p_rated),
                    s_rated_kw: Some(self.pu_to_kw(i.s_rated)),
                })
                .collect(),
        }
    }
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Bus label in a feeder file: integer or free text.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Label {
    Int(u64),
    Text(String),
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Int(i) => write!(f, "{i}"),
            Label::Text(s) => f.write_str(s),
        }
    }
}

/// On-disk feeder schema. Powers are in kW, impedances per-unit, voltages are
/// magnitudes (squared on load).
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeederFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub base_mva: f64,
    pub base_kv: f64,
    #[serde(default = "one")]
    pub v0_pu: f64,
    #[serde(default = "default_band")]
    pub voltage_band_pu: [f64; 2],
    pub buses: Vec<BusEntry>,
    #[serde(default)]
    pub inverters: Vec<InverterEntry>,
}

fn one() -> f64 {
    1.0
}

fn default_band() -> [f64; 2] {
    [DEFAULT_BAND_PU.0, DEFAULT_BAND_PU.1]
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BusEntry {
    pub id: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<Label>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_pu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_pu: Option<f64>,
    /// Nominal peak active load (kW).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub load_kw: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InverterEntry {
    pub bus: Label,
    pub p_rated_kw: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_rated_kw: Option<f64>,
}

impl FeederFile {
    pub fn parse(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Maps labels to dense ids and validates the result.
    ///
    /// Integer labels that already form `0..=N` with the root at 0 keep their
    /// values; otherwise the root becomes 0 and the remaining buses are
    /// numbered in file order.
    pub fn into_model(self) -> Result<NetworkModel> {
        if !(self.base_mva > 0.0) {
            return Err(Error::Unit(format!("base_mva must be positive, got {}", self.base_mva)));
        }
        if !(self.base_kv > 0.0) {
            return Err(Error::Unit(format!("base_kv must be positive, got {}", self.base_kv)));
        }
        let roots: Vec<&BusEntry> = self.buses.iter().filter(|b| b.parent.is_none()).collect();
        if roots.len() != 1 {
            return Err(Error::Topology(format!(
                "expected exactly one root bus (no parent), found {}",
                roots.len()
            )));
        }
        let root_label = roots[0].id.clone();
        let n = self.buses.len() - 1;

        let identity = self.buses.iter().all(|b| matches!(b.id, Label::Int(i) if (i as usize) <= n))
            && root_label == Label::Int(0);
        let mut index: HashMap<Label, usize> = HashMap::with_capacity(n + 1);
        let mut labels = vec![String::new(); n + 1];
        let mut next = 1;
        for b in &self.buses {
            let id = if identity {
                match b.id {
                    Label::Int(i) => i as usize,
                    Label::Text(_) => unreachable!(),
                }
            } else if b.id == root_label {
                0
            } else {
                next += 1;
                next - 1
            };
            if index.insert(b.id.clone(), id).is_some() {
                return Err(Error::Topology(format!("bus {} listed more than once (multiple parents)", b.id)));
            }
            labels[id] = b.id.to_string();
        }

        let kw = |v: f64| v / (1000.0 * self.base_mva);
        let mut lines = Vec::with_capacity(n);
        let mut nominal_load = vec![0.0; n];
        for b in &self.buses {
            let Some(parent) = &b.parent else { continue };
            let bus = index[&b.id];
            let parent = *index
                .get(parent)
                .ok_or_else(|| Error::Topology(format!("bus {} has unknown parent {parent} (disconnected)", b.id)))?;
            let r = b.r_pu.ok_or_else(|| Error::Parse(format!("bus {}: missing r_pu", b.id)))?;
            let x = b.x_pu.ok_or_else(|| Error::Parse(format!("bus {}: missing x_pu", b.id)))?;
            lines.push(Line {
                bus: BusId(bus),
                parent: BusId(parent),
                r,
                x,
            });
            if bus > 0 {
                nominal_load[bus - 1] = kw(b.load_kw.unwrap_or(0.0));
            }
        }

        let mut inverters = Vec::with_capacity(self.inverters.len());
        for inv in &self.inverters {
            let bus = *index
                .get(&inv.bus)
                .ok_or_else(|| Error::Parse(format!("inverter on unknown bus {}", inv.bus)))?;
            inverters.push(InverterSpec::new(BusId(bus), kw(inv.p_rated_kw), inv.s_rated_kw.map(kw))?);
        }

        let [lo, hi] = self.voltage_band_pu;
        NetworkModel::new(NetworkParts {
            name: self.name.unwrap_or_else(|| "feeder".into()),
            labels: Some(labels),
            lines,
            base_mva: self.base_mva,
            base_kv: self.base_kv,
            v0: self.v0_pu * self.v0_pu,
            voltage_band: (lo * lo, hi * hi),
            inverters,
            nominal_load: Some(nominal_load),
        })
    }
}

/// Reads and validates a feeder file.
pub fn load_network(path: impl AsRef<Path>) -> Result<NetworkModel> {
    let text = std::fs::read_to_string(path)?;
    FeederFile::parse(&text)?.into_model()
}

/// Small programmatic constructor, mostly for tests and examples.
#[derive(Clone, Debug)]
pub struct FeederBuilder {
    lines: Vec<Line>,
    inverters: Vec<(usize, f64, Option<f64>)>,
    loads: Vec<(usize, f64)>,
    v0: f64,
    band: (f64, f64),
    base_mva: f64,
    base_kv: f64,
}

impl Default for FeederBuilder {
    fn default() -> Self {
        Self::new()
    }
}

impl FeederBuilder {
    pub fn new() -> Self {
        FeederBuilder {
            lines: Vec::new(),
            inverters: Vec::new(),
            loads: Vec::new(),
            v0: 1.0,
            band: (DEFAULT_BAND_PU.0.powi(2), DEFAULT_BAND_PU.1.powi(2)),
            base_mva: 1.0,
            base_kv: 12.35,
        }
    }

    pub fn line(mut self, parent: usize, bus: usize, r: f64, x: f64) -> Self {
        self.lines.push(Line {
            bus: BusId(bus),
            parent: BusId(parent),
            r,
            x,
        });
        self
    }

    /// Inverter with per-unit nameplate `p_rated`.
    pub fn inverter(mut self, bus: usize, p_rated: f64, s_rated: Option<f64>) -> Self {
        self.inverters.push((bus, p_rated, s_rated));
        self
    }

    /// Nominal per-unit load at `bus`.
    pub fn load(mut self, bus: usize, p: f64) -> Self {
        self.loads.push((bus, p));
        self
    }

    /// Squared substation voltage.
    pub fn v0(mut self, v0: f64) -> Self {
        self.v0 = v0;
        self
    }

    /// Squared band.
    pub fn band(mut self, v_min: f64, v_max: f64) -> Self {
        self.band = (v_min, v_max);
        self
    }

    pub fn build(self) -> Result<NetworkModel> {
        let n = self.lines.len();
        let mut nominal = vec![0.0; n];
        for (bus, p) in self.loads {
            if bus == 0 || bus > n {
                return Err(Error::UnknownBus(bus));
            }
            nominal[bus - 1] = p;
        }
        let inverters = self
            .inverters
            .into_iter()
            .map(|(b, p, s)| InverterSpec::new(BusId(b), p, s))
            .collect::<Result<Vec<_>>>()?;
        NetworkModel::new(NetworkParts {
            name: "builder".into(),
            labels: None,
            lines: self.lines,
            base_mva: self.base_mva,
            base_kv: self.base_kv,
            v0: self.v0,
            voltage_band: self.band,
            inverters,
            nominal_load: Some(nominal),
        })
    }
}
