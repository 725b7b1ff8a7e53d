#![allow(dead_code)]

use qboost::qubo::EnsembleProblem;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Ensemble problem whose columns look like imperfect fits of one target:
/// each learner is the target plus its own bias and smooth error.
pub fn random_problem(rng: &mut ChaCha8Rng, n_learners: usize, n_samples: usize, lambda: f64) -> EnsembleProblem {
    let y: Vec<f64> = (0..n_samples)
        .map(|m| {
            let x = m as f64 / n_samples as f64 * std::f64::consts::TAU;
            4.0 - x.sin() + 0.1 * rng.gen_range(-1.0..1.0)
        })
        .collect();
    let mut h = vec![0.0; n_samples * n_learners];
    for k in 0..n_learners {
        let bias = rng.gen_range(-0.5..0.5);
        let amp = rng.gen_range(0.0..0.8);
        let freq = rng.gen_range(1..4) as f64;
        for m in 0..n_samples {
            let x = m as f64 / n_samples as f64 * std::f64::consts::TAU;
            h[m * n_learners + k] = y[m] + bias + amp * (freq * x).cos() + 0.2 * rng.gen_range(-1.0..1.0);
        }
    }
    EnsembleProblem::new(h, y, n_learners, lambda).unwrap()
}

pub fn random_bits(rng: &mut ChaCha8Rng, n: usize) -> Vec<u8> {
    (0..n).map(|_| rng.gen_range(0..2u8)).collect()
}
