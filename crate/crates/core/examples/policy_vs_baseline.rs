//! Learned dispatch against the per-interval optimum on the held-out part
//! of a synthetic day, plus the latency of each.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use voltcraft::cli::{summarize, time_policy_vs_baseline};
use voltcraft::dataset::{CompareRow, Subset};
use voltcraft::trainer::{init_policy, train};
use voltcraft::{
    bundled, evaluate_loss, infer, solve_baseline, synthesize_timeseries, InferenceMode, ProfileConfig,
    SolverOptions, TrainConfig,
};

fn main() -> voltcraft::Result<()> {
    let net = bundled::surrogate_47();
    let ds = synthesize_timeseries(&net, &ProfileConfig::default(), 7)?;
    let (train_set, test_set) = (ds.subset(Subset::Train), ds.subset(Subset::Test));
    let cfg = TrainConfig::default();
    let untrained = init_policy(&net, &train_set, &cfg)?;
    let trained = train(untrained.clone(), &net, &train_set, &cfg)?.model;

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for (name, model) in [("untrained", &untrained), ("trained", &trained)] {
        for mode in [InferenceMode::Sample, InferenceMode::Deterministic] {
            let mut rows = Vec::new();
            for s in &test_set {
                let q = infer(model, s, mode, &mut rng)?;
                let ev = evaluate_loss(&net, s, &q, cfg.penalty_coeff)?;
                let opt = solve_baseline(&net, s, &SolverOptions::default())?;
                rows.push(CompareRow {
                    t: s.timestamp,
                    learned_loss: ev.objective,
                    optimal_loss: opt.objective,
                    gap: ev.objective - opt.objective,
                    learned_feasible: ev.feasible,
                    exact: opt.exact,
                });
            }
            let sm = summarize(&rows);
            println!(
                "{name:>9} {mode:?}: mean loss {:.3} kW vs optimum {:.3} kW, gap {:+.2}%, feasible {:.1}%",
                net.pu_to_kw(sm.mean_learned),
                net.pu_to_kw(sm.mean_optimal),
                100.0 * sm.relative_gap,
                100.0 * sm.feasible_fraction
            );
        }
    }

    let t = time_policy_vs_baseline(&net, &trained, &test_set, InferenceMode::Sample, &mut rng, 1000)?;
    println!(
        "median latency: inference {:.1} us, baseline {:.1} us, ratio {:.4}",
        t.infer_median * 1e6,
        t.baseline_median * 1e6,
        t.ratio()
    );
    Ok(())
}
