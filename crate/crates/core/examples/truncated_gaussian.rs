//! The per-inverter truncated normal: sampling, density, and the score used
//! by the policy gradient.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use voltcraft::policy::TruncatedNormal;

fn main() -> voltcraft::Result<()> {
    let (lo, hi) = (-0.2, 0.3);
    let d = TruncatedNormal::new(0.25, 0.1, lo, hi)?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);

    let n = 200_000;
    let xs: Vec<f64> = (0..n).map(|_| d.sample(&mut rng)).collect();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    println!("support [{lo}, {hi}], mu 0.25, sigma 0.1, mass {:.4}", d.mass());
    println!("mean      exact {:.5}  sampled {mean:.5}", d.mean());
    println!("variance  exact {:.6}  sampled {var:.6}", d.variance());

    let mut counts = [0usize; 10];
    for x in &xs {
        counts[(((x - lo) / (hi - lo)) * 10.0).min(9.0) as usize] += 1;
    }
    for (k, c) in counts.iter().enumerate() {
        let q = lo + (k as f64 + 0.5) * (hi - lo) / 10.0;
        println!("{q:>6.3} {:>6.3} {}", d.pdf(q), "#".repeat(c * 200 / n));
    }

    for q in [lo, 0.0, 0.25, hi] {
        let (dmu, dsigma) = d.grad_log_prob(q)?;
        println!("q {q:>5.2}: log pi {:>8.4}  d/dmu {dmu:>9.3}  d/dsigma {dsigma:>9.3}", d.log_prob(q)?);
    }
    Ok(())
}
