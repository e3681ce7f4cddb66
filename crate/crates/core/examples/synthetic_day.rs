//! Generates a synthetic load/solar day for the 47-bus surrogate and writes
//! it in the time-series CSV layout.
//!
//! `cargo run --release --example synthetic_day -- [out.csv] [seed]`

use voltcraft::dataset::{load_timeseries, max_pv_step, Subset};
use voltcraft::{bundled, synthesize_timeseries, ProfileConfig};

fn main() -> voltcraft::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = args.next().unwrap_or_else(|| "synthetic_day.csv".into());
    let seed = args.next().map_or(Ok(7), |s| s.parse()).expect("seed must be an integer");

    let net = bundled::surrogate_47();
    let profile = ProfileConfig::default();
    let ds = synthesize_timeseries(&net, &profile, seed)?;
    ds.write_csv(&net, &out)?;

    let back = load_timeseries(&out, &net, profile.power_factor)?;
    assert_eq!(back.states, ds.states);

    let pv: Vec<f64> = ds.intervals.iter().map(|iv| iv.pg_kw.iter().sum()).collect();
    let load: Vec<f64> = ds.intervals.iter().map(|iv| iv.pc_kw.iter().sum()).collect();
    for h in (0..24).step_by(2) {
        let k = h * 60;
        println!("{h:02}:00  load {:>7.1} kW  pv {:>7.1} kW", load[k], pv[k]);
    }
    println!(
        "largest one-minute PV step: {:.3} of nameplate (bound {})",
        max_pv_step(&ds, &net),
        profile.max_ramp_per_min
    );
    println!(
        "{} intervals, {} train / {} test, written to {out}",
        ds.len(),
        ds.indices(Subset::Train).len(),
        ds.indices(Subset::Test).len()
    );
    Ok(())
}
