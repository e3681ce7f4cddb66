//! Trains the 48/32/16 truncated-Gaussian policy on a synthetic day for the
//! 47-bus surrogate and reports the loss trend.
//!
//! `cargo run --release --example train_policy -- [epochs] [seed]`

use voltcraft::dataset::Subset;
use voltcraft::stats::trend;
use voltcraft::trainer::{init_policy, train_with_progress};
use voltcraft::{bundled, synthesize_timeseries, ProfileConfig, TrainConfig};

fn main() -> voltcraft::Result<()> {
    let mut args = std::env::args().skip(1);
    let mut cfg = TrainConfig::default();
    if let Some(e) = args.next() {
        cfg.epochs = e.parse().expect("epochs must be an integer");
    }
    if let Some(s) = args.next() {
        cfg.seed = s.parse().expect("seed must be an integer");
    }

    let net = bundled::surrogate_47();
    let ds = synthesize_timeseries(&net, &ProfileConfig::default(), 7)?;
    let train_set = ds.subset(Subset::Train);
    let policy = init_policy(&net, &train_set, &cfg)?;
    println!("{} parameters, {} training intervals", policy.n_params(), train_set.len());

    let t0 = std::time::Instant::now();
    let n = train_set.len();
    let out = train_with_progress(policy, &net, &train_set, &cfg, |epoch, trace| {
        let tail = &trace.raw[trace.len() - n..];
        let feasible = trace.feasible[trace.len() - n..].iter().filter(|f| **f).count();
        println!(
            "epoch {:>2}  mean loss {:.4} kW  running avg {:.4} kW  feasible {feasible}/{n}",
            epoch + 1,
            net.pu_to_kw(tail.iter().sum::<f64>() / n as f64),
            net.pu_to_kw(trace.running_avg[trace.len() - 1]),
        );
    })?;
    let t = trend(&out.trace.chunk_means(n));
    println!("trained in {:?}", t0.elapsed());
    println!("trend of per-epoch running average: rho {:.3}, p {:.2e}", t.rho, t.p_value);
    Ok(())
}
