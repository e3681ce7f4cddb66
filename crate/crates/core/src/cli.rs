//! Command-line surface: `validate`, `pf`, `synth`, `baseline`, `train`,
//! `infer`, `compare` and `bench`.
//!
//! Every failure is reported as one JSON object `{"kind", "message"}` on
//! stderr with a non-zero exit status. `--network` takes a feeder file or
//! `bundled:<name>`.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::bundled;
use crate::dataset::{
    load_timeseries, synthesize_timeseries, write_rows, BaselineRow, CompareRow, InferRow, ProfileConfig, SplitMode,
    Subset, TimeSeriesDataset,
};
use crate::error::{Error, Result};
use crate::network::{load_network, BusId, GridState, NetworkModel};
use crate::opf::{solve_baseline, SolverOptions};
use crate::policy::PolicyModel;
use crate::powerflow::{evaluate_loss_with, injection_vectors, solve_power_flow, ActionMode, EvalConfig};
use crate::stats::{median, percentile};
use crate::trainer::{infer, init_policy, train_with_progress, InferenceMode, RunManifest, TrainConfig};

pub const SEED_ENV: &str = "VOLTCRAFT_SEED";

#[derive(Debug, Parser)]
#[command(name = "voltcraft", version, about = "Volt/VAR control with learned inverter policies")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a feeder and print a topology/unit report.
    Validate {
        #[arg(long)]
        network: String,
    },
    /// Solve the branch-flow equations for one state.
    Pf {
        #[arg(long)]
        network: String,
        /// GridState JSON file, or `nominal`.
        #[arg(long)]
        state: String,
        /// Comma-separated inverter setpoints in pu (default all zero).
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        action: Option<Vec<f64>>,
    },
    /// Write a synthetic load/solar day as a time-series CSV.
    Synth {
        #[arg(long)]
        network: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// TOML file with profile overrides.
        #[arg(long)]
        profile: Option<PathBuf>,
    },
    /// Per-interval optimal dispatch from the convex relaxation.
    Baseline {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "all")]
        subset: SubsetArg,
    },
    /// Train a policy (fresh from a config, or rerun from a manifest).
    Train(TrainArgs),
    /// Dispatch a trained policy and record realized losses.
    Infer {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Paired learned vs optimal losses per interval.
    Compare {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Timing table for policy inference vs the baseline solve.
    Bench {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        /// Repeat the interval list until at least this many are timed.
        #[arg(long, default_value_t = 1000)]
        min_intervals: usize,
    },
}

#[derive(Debug, Args)]
pub struct DataArgs {
    #[arg(long)]
    pub network: String,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 0.8)]
    pub pf: f64,
    /// `chronological:<frac>` or `shuffled:<frac>:<seed>`.
    #[arg(long, default_value = "chronological:0.7")]
    pub split: String,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long, value_enum, default_value = "test")]
    pub subset: SubsetArg,
    /// Dispatch the clipped mean instead of sampling.
    #[arg(long)]
    pub deterministic: bool,
    /// Sampling seed (falls back to VOLTCRAFT_SEED, then 0).
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 100.0)]
    pub penalty: f64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, required_unless_present = "manifest")]
    pub network: Option<String>,
    #[arg(long, required_unless_present = "manifest")]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub pf: Option<f64>,
    #[arg(long)]
    pub split: Option<String>,
    /// TOML training config; defaults apply to missing fields.
    #[arg(long, conflicts_with = "manifest")]
    pub config: Option<PathBuf>,
    /// Rerun exactly the run described by this manifest.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Loss trace CSV (default `<out>.trace.csv`).
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Manifest to write (default `<out>.manifest.json`).
    #[arg(long)]
    pub manifest_out: Option<PathBuf>,
    /// Fill the trace's optimum column by solving the baseline per interval.
    #[arg(long)]
    pub with_baseline: bool,
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Clone, Copy, Debug, clap::ValueEnum)]
pub enum SubsetArg {
    Train,
    Test,
    All,
}

impl From<SubsetArg> for Subset {
    fn from(s: SubsetArg) -> Self {
        match s {
            SubsetArg::Train => Subset::Train,
            SubsetArg::Test => Subset::Test,
            SubsetArg::All => Subset::All,
        }
    }
}

/// Resolves a feeder argument: a path or `bundled:<name>`.
pub fn resolve_network(spec: &str) -> Result<NetworkModel> {
    match spec.strip_prefix("bundled:") {
        Some(name) => bundled::all()
            .into_iter()
            .find(|(n, _)| *n == name)
            .map(|(_, m)| m)
            .ok_or_else(|| {
                let names: Vec<_> = bundled::all().iter().map(|(n, _)| *n).collect();
                Error::InvalidParameter(format!("unknown bundled feeder {name:?} (have {names:?})"))
            }),
        None => load_network(spec),
    }
}

pub fn parse_split(text: &str) -> Result<SplitMode> {
    let bad = || Error::InvalidParameter(format!("bad split {text:?}"));
    let parts: Vec<&str> = text.split(':').collect();
    let frac = |s: &str| s.parse::<f64>().map_err(|_| bad());
    match parts.as_slice() {
        ["chronological", f] => Ok(SplitMode::Chronological { train_fraction: frac(f)? }),
        ["shuffled", f, seed] => Ok(SplitMode::Shuffled {
            train_fraction: frac(f)?,
            seed: seed.parse().map_err(|_| bad())?,
        }),
        _ => Err(bad()),
    }
}

fn env_seed() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::InvalidParameter(format!("{SEED_ENV}={v:?} is not an integer"))),
        Err(_) => Ok(None),
    }
}

fn load_data(net: &NetworkModel, path: &Path, pf: f64, split: &str) -> Result<TimeSeriesDataset> {
    let mut ds = load_timeseries(path, net, pf)?;
    ds.apply_split(parse_split(split)?)?;
    Ok(ds)
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn write_json(out: &mut dyn Write, value: &serde_json::Value) -> Result<()> {
    writeln!(out, "{}", serde_json::to_string_pretty(value)?)?;
    Ok(())
}

/// Parses `args` (program name first) and runs the command, returning the
/// process exit code.
pub fn main_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return 0;
        }
        Err(e) => {
            report(&mut std::io::stderr(), "UsageError", &e.to_string());
            return 2;
        }
    };
    match run(cli, &mut std::io::stdout().lock()) {
        Ok(()) => 0,
        Err(Error::Io(e)) if e.kind() == std::io::ErrorKind::BrokenPipe => 0,
        Err(e) => {
            report(&mut std::io::stderr(), e.kind(), &e.to_string());
            1
        }
    }
}

fn report(w: &mut dyn Write, kind: &str, message: &str) {
    let rec = json!({ "kind": kind, "message": message.trim() });
    let _ = writeln!(w, "{rec}");
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Validate { network } => validate(&network, out),
        Command::Pf { network, state, action } => pf(&network, &state, action, out),
        Command::Synth {
            network,
            out: path,
            seed,
            profile,
        } => synth(&network, &path, seed, profile.as_deref(), out),
        Command::Baseline { data, out: path, subset } => baseline(&data, &path, subset.into(), out),
        Command::Train(args) => train_cmd(&args, out),
        Command::Infer {
            data,
            model,
            out: path,
            run,
        } => infer_cmd(&data, &model, &path, &run, out),
        Command::Compare {
            data,
            model,
            out: path,
            run,
        } => compare(&data, &model, &path, &run, out),
        Command::Bench {
            data,
            model,
            run,
            min_intervals,
        } => bench(&data, &model, &run, min_intervals, out),
    }
}

fn validate(network: &str, out: &mut dyn Write) -> Result<()> {
    let net = resolve_network(network)?;
    let (lo, hi) = net.action_box();
    let inverters: Vec<_> = net
        .inverters()
        .iter()
        .zip(lo.iter().zip(&hi))
        .map(|(inv, (l, h))| {
            json!({
                "bus": net.label(inv.bus),
                "p_rated_kw": net.pu_to_kw(inv.p_rated),
                "q_range_pu": [l, h],
            })
        })
        .collect();
    let bands: Vec<(f64, f64)> = (1..net.n_buses()).map(|b| net.voltage_band(BusId(b))).collect();
    let vmin = bands.iter().map(|b| b.0).fold(f64::INFINITY, f64::min);
    let vmax = bands.iter().map(|b| b.1).fold(f64::NEG_INFINITY, f64::max);
    write_json(
        out,
        &json!({
            "ok": true,
            "name": net.name,
            "buses": net.n_buses(),
            "lines": net.n_lines(),
            "depth": net.depth(),
            "base_mva": net.base_mva(),
            "base_kv": net.base_kv(),
            "v0_squared": net.v0(),
            "voltage_band_squared": [vmin, vmax],
            "inverters": inverters,
            "fingerprint": net.fingerprint(),
        }),
    )
}

fn pf(network: &str, state: &str, action: Option<Vec<f64>>, out: &mut dyn Write) -> Result<()> {
    let net = resolve_network(network)?;
    let s: GridState = if state == "nominal" {
        net.nominal_state(1.0, 0.0, 0.8)
    } else {
        serde_json::from_str(&std::fs::read_to_string(state)?)?
    };
    s.validate(&net)?;
    let action = action.unwrap_or_else(|| vec![0.0; net.n_inverters()]);
    let (p, q) = injection_vectors(&net, &s, &action)?;
    let sol = solve_power_flow(&net, &p, &q)?;
    write_json(out, &serde_json::to_value(&sol)?)
}

fn synth(network: &str, path: &Path, seed: u64, profile: Option<&Path>, out: &mut dyn Write) -> Result<()> {
    let net = resolve_network(network)?;
    let profile: ProfileConfig = match profile {
        Some(p) => toml::from_str(&std::fs::read_to_string(p)?)?,
        None => ProfileConfig::default(),
    };
    let ds = synthesize_timeseries(&net, &profile, seed)?;
    ds.write_csv(&net, path)?;
    writeln!(out, "wrote {} intervals to {}", ds.len(), path.display())?;
    Ok(())
}

/// Baseline solve for one state; infeasible intervals become a NaN row.
fn baseline_row(net: &NetworkModel, s: &GridState, opts: &SolverOptions) -> Result<BaselineRow> {
    match solve_baseline(net, s, opts) {
        Ok(sol) => Ok(BaselineRow {
            t: s.timestamp,
            objective: sol.objective,
            exact: sol.exact,
            max_cone_slack: sol.max_cone_slack(),
            q_g_star: sol.q_g_star,
        }),
        Err(Error::Infeasible { q_g, .. }) => Ok(BaselineRow {
            t: s.timestamp,
            objective: f64::NAN,
            exact: false,
            max_cone_slack: f64::NAN,
            q_g_star: q_g,
        }),
        Err(e) => Err(e),
    }
}

fn baseline(args: &DataArgs, path: &Path, subset: Subset, out: &mut dyn Write) -> Result<()> {
    let net = resolve_network(&args.network)?;
    let ds = load_data(&net, &args.data, args.pf, &args.split)?;
    let opts = SolverOptions::default();
    let rows = ds
        .subset(subset)
        .iter()
        .map(|s| baseline_row(&net, s, &opts))
        .collect::<Result<Vec<_>>>()?;
    write_rows(path, &rows)?;
    let infeasible = rows.iter().filter(|r| r.objective.is_nan()).count();
    let inexact = rows.iter().filter(|r| !r.exact).count() - infeasible;
    writeln!(
        out,
        "wrote {} rows to {} ({infeasible} infeasible, {inexact} inexact)",
        rows.len(),
        path.display()
    )?;
    Ok(())
}

fn train_cmd(args: &TrainArgs, out: &mut dyn Write) -> Result<()> {
    let (net, network_arg, data_path, pf, split, cfg, expect) = match &args.manifest {
        Some(mpath) => {
            let m = RunManifest::from_json(&std::fs::read_to_string(mpath)?)?;
            let input = |key: &str| -> Result<String> {
                m.inputs
                    .get(key)
                    .and_then(|v| v.as_str())
                    .map(str::to_string)
                    .ok_or_else(|| Error::Parse(format!("manifest lacks input {key:?}")))
            };
            let network = args.network.clone().map_or_else(|| input("network"), Ok)?;
            let data = args.data.clone().map_or_else(|| input("data").map(PathBuf::from), Ok)?;
            let pf = match args.pf {
                Some(pf) => pf,
                None => m.inputs.get("power_factor").and_then(|v| v.as_f64()).unwrap_or(0.8),
            };
            let split = args.split.clone().map_or_else(|| input("split"), Ok)?;
            let mut cfg = m.config.clone();
            cfg.seed = m.seed;
            (resolve_network(&network)?, network, data, pf, split, cfg, Some(m))
        }
        None => {
            let network = args.network.clone().unwrap_or_default();
            let mut cfg = match &args.config {
                Some(p) => TrainConfig::from_toml(&std::fs::read_to_string(p)?)?,
                None => TrainConfig::default(),
            };
            if let Some(seed) = env_seed()? {
                cfg.seed = seed;
            }
            let data = args.data.clone().unwrap_or_default();
            let split = args.split.clone().unwrap_or_else(|| "chronological:0.7".into());
            (resolve_network(&network)?, network, data, args.pf.unwrap_or(0.8), split, cfg, None)
        }
    };
    let ds = load_data(&net, &data_path, pf, &split)?;
    let train_set = ds.subset(Subset::Train);
    if let Some(m) = &expect {
        if m.feeder_fingerprint != net.fingerprint() {
            return Err(Error::InvalidParameter("feeder differs from the one in the manifest".into()));
        }
        let h = crate::trainer::dataset_hash(&train_set);
        if m.dataset_sha256 != h {
            return Err(Error::InvalidParameter("training data differ from the manifest".into()));
        }
    }

    let policy = init_policy(&net, &train_set, &cfg)?;
    let quiet = args.quiet;
    let mut progress_out = std::io::stderr();
    let steps_per_epoch = train_set.len();
    let mut outcome = train_with_progress(policy, &net, &train_set, &cfg, |epoch, trace| {
        if !quiet {
            let n = trace.len();
            let k = steps_per_epoch.min(n);
            let mean = trace.raw[n - k..].iter().sum::<f64>() / k as f64;
            let _ = writeln!(progress_out, "epoch {:>3}  mean penalized loss {mean:.6e}", epoch + 1);
        }
    })?;

    if args.with_baseline {
        let opts = SolverOptions::default();
        let reference = train_set
            .iter()
            .map(|s| baseline_row(&net, s, &opts).map(|r| r.objective))
            .collect::<Result<Vec<_>>>()?;
        outcome.trace.attach_reference(&reference)?;
    }

    let mut manifest = outcome.manifest;
    manifest.inputs.insert("network".into(), json!(network_arg));
    manifest.inputs.insert("data".into(), json!(data_path.to_string_lossy()));
    if let crate::dataset::Provenance::File { sha256, .. } = &ds.provenance {
        manifest.inputs.insert("data_file_sha256".into(), json!(sha256));
    }
    manifest.inputs.insert("power_factor".into(), json!(pf));
    manifest.inputs.insert("split".into(), json!(split));

    let trace_path = args.trace.clone().unwrap_or_else(|| with_suffix(&args.out, ".trace.csv"));
    let manifest_path = args
        .manifest_out
        .clone()
        .unwrap_or_else(|| with_suffix(&args.out, ".manifest.json"));
    outcome.model.save(&args.out)?;
    outcome.trace.write_csv(&trace_path)?;
    std::fs::write(&manifest_path, manifest.to_json()? + "\n")?;
    writeln!(
        out,
        "model {}\ntrace {}\nmanifest {}",
        args.out.display(),
        trace_path.display(),
        manifest_path.display()
    )?;
    Ok(())
}

struct Loaded {
    net: NetworkModel,
    model: PolicyModel,
    states: Vec<GridState>,
    mode: InferenceMode,
    rng: ChaCha8Rng,
    eval: EvalConfig,
}

fn load_run(data: &DataArgs, model: &Path, run: &RunArgs) -> Result<Loaded> {
    let net = resolve_network(&data.network)?;
    let ds = load_data(&net, &data.data, data.pf, &data.split)?;
    let model = PolicyModel::load(model)?;
    if model.n_inverters() != net.n_inverters() {
        return Err(Error::DimensionMismatch(format!(
            "model controls {} inverters, feeder has {}",
            model.n_inverters(),
            net.n_inverters()
        )));
    }
    let seed = match run.seed {
        Some(s) => s,
        None => env_seed()?.unwrap_or(0),
    };
    Ok(Loaded {
        net,
        model,
        states: ds.subset(run.subset.into()),
        mode: if run.deterministic {
            InferenceMode::Deterministic
        } else {
            InferenceMode::Sample
        },
        rng: ChaCha8Rng::seed_from_u64(seed),
        eval: EvalConfig {
            penalty_coeff: run.penalty,
            action_mode: ActionMode::Strict,
            ..EvalConfig::default()
        },
    })
}

fn infer_cmd(data: &DataArgs, model: &Path, path: &Path, run: &RunArgs, out: &mut dyn Write) -> Result<()> {
    let mut l = load_run(data, model, run)?;
    let mut rows = Vec::with_capacity(l.states.len());
    for s in &l.states {
        let q = infer(&l.model, s, l.mode, &mut l.rng)?;
        let ev = evaluate_loss_with(&l.net, s, &q, &l.eval)?;
        rows.push(InferRow {
            t: s.timestamp,
            loss: ev.objective,
            penalized: ev.penalized,
            feasible: ev.feasible,
            q_g: q,
        });
    }
    write_rows(path, &rows)?;
    let feasible = rows.iter().filter(|r| r.feasible).count();
    writeln!(
        out,
        "wrote {} rows to {} ({feasible} voltage-feasible)",
        rows.len(),
        path.display()
    )?;
    Ok(())
}

fn compare(data: &DataArgs, model: &Path, path: &Path, run: &RunArgs, out: &mut dyn Write) -> Result<()> {
    let mut l = load_run(data, model, run)?;
    let opts = SolverOptions::default();
    let mut rows = Vec::with_capacity(l.states.len());
    for s in &l.states {
        let q = infer(&l.model, s, l.mode, &mut l.rng)?;
        let ev = evaluate_loss_with(&l.net, s, &q, &l.eval)?;
        let b = baseline_row(&l.net, s, &opts)?;
        rows.push(CompareRow {
            t: s.timestamp,
            learned_loss: ev.objective,
            optimal_loss: b.objective,
            gap: ev.objective - b.objective,
            learned_feasible: ev.feasible,
            exact: b.exact,
        });
    }
    write_rows(path, &rows)?;
    let s = summarize(&rows);
    write_json(
        out,
        &json!({
            "rows": rows.len(),
            "mean_learned_loss": s.mean_learned,
            "mean_optimal_loss": s.mean_optimal,
            "relative_gap": s.relative_gap,
            "feasible_fraction": s.feasible_fraction,
            "out": path.to_string_lossy(),
        }),
    )
}

/// Aggregates of a compare table over rows with a finite optimum.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CompareSummary {
    pub mean_learned: f64,
    pub mean_optimal: f64,
    /// `mean_learned / mean_optimal - 1`.
    pub relative_gap: f64,
    pub feasible_fraction: f64,
}

pub fn summarize(rows: &[CompareRow]) -> CompareSummary {
    let ok: Vec<&CompareRow> = rows.iter().filter(|r| r.optimal_loss.is_finite()).collect();
    let n = ok.len().max(1) as f64;
    let mean_learned = ok.iter().map(|r| r.learned_loss).sum::<f64>() / n;
    let mean_optimal = ok.iter().map(|r| r.optimal_loss).sum::<f64>() / n;
    CompareSummary {
        mean_learned,
        mean_optimal,
        relative_gap: mean_learned / mean_optimal - 1.0,
        feasible_fraction: rows.iter().filter(|r| r.learned_feasible).count() as f64 / rows.len().max(1) as f64,
    }
}

/// Median and 95th-percentile latencies, in seconds.
#[derive(Clone, Debug, PartialEq)]
pub struct Timing {
    pub n: usize,
    pub infer_median: f64,
    pub infer_p95: f64,
    pub baseline_median: f64,
    pub baseline_p95: f64,
}

impl Timing {
    pub fn ratio(&self) -> f64 {
        self.infer_median / self.baseline_median
    }
}

/// Times `infer` and `solve_baseline` on each state, cycling through
/// `states` until `min_intervals` have been timed.
pub fn time_policy_vs_baseline(
    net: &NetworkModel,
    model: &PolicyModel,
    states: &[GridState],
    mode: InferenceMode,
    rng: &mut ChaCha8Rng,
    min_intervals: usize,
) -> Result<Timing> {
    if states.is_empty() {
        return Err(Error::InvalidParameter("no intervals to time".into()));
    }
    let n = min_intervals.max(states.len());
    let opts = SolverOptions::default();
    let (mut ti, mut tb) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for k in 0..n {
        let s = &states[k % states.len()];
        let t0 = Instant::now();
        let q = infer(model, s, mode, rng)?;
        ti.push(t0.elapsed().as_secs_f64());
        std::hint::black_box(q);
        let t0 = Instant::now();
        let r = solve_baseline(net, s, &opts);
        tb.push(t0.elapsed().as_secs_f64());
        match r {
            Ok(_) | Err(Error::Infeasible { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(Timing {
        n,
        infer_median: median(&ti),
        infer_p95: percentile(&ti, 95.0),
        baseline_median: median(&tb),
        baseline_p95: percentile(&tb, 95.0),
    })
}

fn bench(data: &DataArgs, model: &Path, run: &RunArgs, min_intervals: usize, out: &mut dyn Write) -> Result<()> {
    let mut l = load_run(data, model, run)?;
    let t = time_policy_vs_baseline(&l.net, &l.model, &l.states, l.mode, &mut l.rng, min_intervals)?;
    writeln!(out, "intervals timed: {}", t.n)?;
    writeln!(out, "{:<10} {:>14} {:>14}", "", "median [us]", "p95 [us]")?;
    writeln!(out, "{:<10} {:>14.2} {:>14.2}", "inference", t.infer_median * 1e6, t.infer_p95 * 1e6)?;
    writeln!(out, "{:<10} {:>14.2} {:>14.2}", "baseline", t.baseline_median * 1e6, t.baseline_p95 * 1e6)?;
    writeln!(out, "median ratio (inference / baseline): {:.4}", t.ratio())?;
    Ok(())
}
