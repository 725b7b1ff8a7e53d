//! Collocation training of a single weak-learner: draw interior, boundary
//! and initial points, evaluate the summed squared residual `G`, take a
//! steepest-descent step with a decaying rate, repeat.

use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::burgers::{initial_condition, BurgersConfig, X_MAX, X_MIN};
use crate::error::{Error, Result};
use crate::jet::Jet2;
use crate::nn::{init_params, param_gradient, MlpArchitecture, MlpParams};
use crate::par;
use crate::seed::{derive, stream_rng};

/// A time-dependent PDE on `[0, T] × [a, b]` written as residuals over the
/// network's output jets.
pub trait CollocationPde: Sync {
    fn t_max(&self) -> f64;
    fn x_range(&self) -> (f64, f64);
    /// Interior residual and its partials with respect to the output jet.
    fn interior_residual(&self, f: Jet2) -> (f64, Jet2);
    /// Boundary residual from the outputs at `(τ, a)` and `(τ, b)`, with
    /// partials with respect to both.
    fn boundary_residual(&self, left: f64, right: f64) -> (f64, f64, f64);
    fn initial_value(&self, x: f64) -> Result<f64>;
}

impl CollocationPde for BurgersConfig {
    fn t_max(&self) -> f64 {
        self.t_max
    }

    fn x_range(&self) -> (f64, f64) {
        (X_MIN, X_MAX)
    }

    /// `f_t + f f_x - ν f_xx`
    fn interior_residual(&self, f: Jet2) -> (f64, Jet2) {
        let r = f.d_t + f.value * f.d_x - self.nu * f.d_xx;
        (r, Jet2::new(f.d_x, 1.0, f.value, -self.nu))
    }

    /// Periodicity `f(τ, 0) - f(τ, 2π)`.
    fn boundary_residual(&self, left: f64, right: f64) -> (f64, f64, f64) {
        (left - right, 1.0, -1.0)
    }

    fn initial_value(&self, x: f64) -> Result<f64> {
        initial_condition(x, self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub alpha0: f64,
    /// Epoch scale of the decay `α_n = α₀ / (1 + n / decay_epochs)`.
    pub decay_epochs: f64,
}

impl LrSchedule {
    pub fn rate(&self, epoch: usize) -> f64 {
        self.alpha0 / (1.0 + epoch as f64 / self.decay_epochs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub batch_interior: usize,
    pub batch_boundary: usize,
    pub batch_initial: usize,
    pub lr: LrSchedule,
    /// Stop once the sampled `G` is at or below this value; `None` trains
    /// for `max_epochs`.
    pub epsilon: Option<f64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 2000,
            batch_interior: 64,
            batch_boundary: 16,
            batch_initial: 16,
            lr: LrSchedule {
                alpha0: 5e-4,
                decay_epochs: 1000.0,
            },
            epsilon: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 || self.batch_interior == 0 || self.batch_boundary == 0 || self.batch_initial == 0 {
            return Err(Error::Config("epoch and batch counts must be >= 1".into()));
        }
        if !(self.lr.alpha0 > 0.0) || !(self.lr.decay_epochs > 0.0) {
            return Err(Error::Config("learning rate and decay scale must be > 0".into()));
        }
        if self.epsilon.is_some_and(|e| !(e >= 0.0)) {
            return Err(Error::Config("epsilon must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CollocationBatch {
    pub interior: Vec<(f64, f64)>,
    /// Times `τ`; each pairs the two spatial boundary points.
    pub boundary: Vec<f64>,
    pub initial: Vec<f64>,
}

impl CollocationBatch {
    fn len(&self) -> usize {
        self.interior.len() + 2 * self.boundary.len() + self.initial.len()
    }

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Interior points, then `(τ, a), (τ, b)` per boundary time, then
    /// `(0, x)` per initial point.
    fn points(&self, (a, b): (f64, f64)) -> Vec<(f64, f64)> {
        let mut pts = Vec::with_capacity(self.len());
        pts.extend(&self.interior);
        for &tau in &self.boundary {
            pts.push((tau, a));
            pts.push((tau, b));
        }
        pts.extend(self.initial.iter().map(|&x| (0.0, x)));
        pts
    }
}

pub fn sample_collocation<P: CollocationPde>(cfg: &TrainConfig, pde: &P, seed: u64) -> CollocationBatch {
    let mut rng = stream_rng(seed, 0);
    let t_max = pde.t_max();
    let (a, b) = pde.x_range();
    let interior = (0..cfg.batch_interior)
        .map(|_| (rng.gen_range(0.0..=t_max), rng.gen_range(a..=b)))
        .collect();
    let boundary = (0..cfg.batch_boundary).map(|_| rng.gen_range(0.0..=t_max)).collect();
    let initial = (0..cfg.batch_initial).map(|_| rng.gen_range(a..=b)).collect();
    CollocationBatch {
        interior,
        boundary,
        initial,
    }
}

/// Loss value and output-jet adjoints for a batch laid out by
/// [`CollocationBatch::points`].
fn residual_loss<P: CollocationPde>(
    pde: &P,
    batch: &CollocationBatch,
    targets: &[f64],
    out: &[Jet2],
) -> (f64, Vec<Jet2>) {
    let mut seeds = vec![Jet2::default(); out.len()];
    let mut g = 0.0;
    let ni = batch.interior.len();
    for (k, f) in out[..ni].iter().enumerate() {
        let (r, dr) = pde.interior_residual(*f);
        g += r * r;
        seeds[k] = dr.scale(2.0 * r);
    }
    for k in 0..batch.boundary.len() {
        let (l, rgt) = (ni + 2 * k, ni + 2 * k + 1);
        let (r, dl, dr) = pde.boundary_residual(out[l].value, out[rgt].value);
        g += r * r;
        seeds[l] = Jet2::constant(2.0 * r * dl);
        seeds[rgt] = Jet2::constant(2.0 * r * dr);
    }
    let off = ni + 2 * batch.boundary.len();
    for (k, target) in targets.iter().enumerate() {
        let r = out[off + k].value - target;
        g += r * r;
        seeds[off + k] = Jet2::constant(2.0 * r);
    }
    (g, seeds)
}

fn initial_targets<P: CollocationPde>(pde: &P, batch: &CollocationBatch) -> Result<Vec<f64>> {
    batch.initial.iter().map(|&x| pde.initial_value(x)).collect()
}

/// Summed squared residual `G` over the batch.
pub fn residual_g<P: CollocationPde>(params: &MlpParams, batch: &CollocationBatch, pde: &P) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Contract("empty collocation batch".into()));
    }
    let points = batch.points(pde.x_range());
    let jets = par::map(&points, |&(t, x)| params.forward_jets(t, x))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let targets = initial_targets(pde, batch)?;
    let (g, _) = residual_loss(pde, batch, &targets, &jets);
    if g.is_finite() {
        Ok(g)
    } else {
        Err(Error::Numeric("non-finite residual".into()))
    }
}

/// `(G, ∇θ G)` for one batch.
pub fn residual_gradient<P: CollocationPde>(
    params: &MlpParams,
    batch: &CollocationBatch,
    pde: &P,
) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::Contract("empty collocation batch".into()));
    }
    let targets = initial_targets(pde, batch)?;
    let points = batch.points(pde.x_range());
    param_gradient(params, &points, |out| residual_loss(pde, batch, &targets, out))
}

pub fn sgd_step(params: &MlpParams, grad: &[f64], alpha: f64) -> Result<MlpParams> {
    if !(alpha > 0.0) {
        return Err(Error::Contract(format!("step size must be > 0, got {alpha}")));
    }
    let theta = params.flatten();
    if grad.len() != theta.len() {
        return Err(Error::Contract(format!(
            "gradient has length {}, parameters {}",
            grad.len(),
            theta.len()
        )));
    }
    let next: Vec<f64> = theta.iter().zip(grad).map(|(p, g)| p - alpha * g).collect();
    params.with_flat(&next)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeakLearner {
    pub label: String,
    pub params: MlpParams,
}

impl WeakLearner {
    pub fn predict(&self, t: f64, x: f64) -> Result<f64> {
        self.params.forward(t, x)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingReport {
    /// Sampled `G` at every epoch, before that epoch's update.
    pub losses: Vec<f64>,
    pub final_g: f64,
    pub epochs: usize,
    pub wall_seconds: f64,
}

/// Seed tag for parameter initialisation; batch `n` uses stream `n` of
/// `derive(seed, BATCH_TAG)`.
const INIT_TAG: u64 = 1;
const BATCH_TAG: u64 = 2;

pub fn train_weak_learner<P: CollocationPde>(
    arch: &MlpArchitecture,
    cfg: &TrainConfig,
    pde: &P,
) -> Result<(WeakLearner, TrainingReport)> {
    cfg.validate()?;
    let start = Instant::now();
    let mut params = init_params(arch, derive(cfg.seed, INIT_TAG))?;
    let batch_seed = derive(cfg.seed, BATCH_TAG);
    let mut losses = Vec::new();
    for epoch in 0..cfg.max_epochs {
        let mut rng = stream_rng(batch_seed, epoch as u64);
        let batch = sample_collocation(cfg, pde, rng.gen());
        let (g, grad) = residual_gradient(&params, &batch, pde).map_err(|e| Error::Training {
            epoch,
            reason: e.to_string(),
        })?;
        losses.push(g);
        if cfg.epsilon.is_some_and(|eps| g <= eps) {
            break;
        }
        params = sgd_step(&params, &grad, cfg.lr.rate(epoch))?;
    }
    let report = TrainingReport {
        final_g: *losses.last().expect("at least one epoch"),
        epochs: losses.len(),
        losses,
        wall_seconds: start.elapsed().as_secs_f64(),
    };
    Ok((
        WeakLearner {
            label: arch.label(),
            params,
        },
        report,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn small_cfg() -> TrainConfig {
        TrainConfig {
            batch_interior: 64,
            batch_boundary: 16,
            batch_initial: 16,
            ..TrainConfig::default()
        }
    }

    fn constant_net(c: f64) -> MlpParams {
        let arch = MlpArchitecture::new(vec![3]).unwrap();
        let mut p = init_params(&arch, 0).unwrap();
        p.layers[1].weights.iter_mut().for_each(|w| *w = 0.0);
        p.layers[1].bias[0] = c;
        p
    }

    #[test]
    fn collocation_counts_ranges_and_determinism() {
        let b = BurgersConfig::default();
        let batch = sample_collocation(&small_cfg(), &b, 4);
        assert_eq!(
            (batch.interior.len(), batch.boundary.len(), batch.initial.len()),
            (64, 16, 16)
        );
        assert_eq!(batch, sample_collocation(&small_cfg(), &b, 4));
        assert!(batch
            .interior
            .iter()
            .all(|&(t, x)| (0.0..=0.5).contains(&t) && (0.0..=2.0 * PI).contains(&x)));
        assert!(batch.boundary.iter().all(|t| (0.0..=0.5).contains(t)));
    }

    #[test]
    fn constant_four_at_symmetry_point_has_zero_g() {
        let b = BurgersConfig::default();
        let batch = CollocationBatch {
            interior: vec![(0.2, 1.0)],
            boundary: vec![0.3],
            initial: vec![PI],
        };
        assert_eq!(residual_g(&constant_net(4.0), &batch, &b).unwrap(), 0.0);
    }

    #[test]
    fn constant_network_reduces_to_initial_misfit() {
        let b = BurgersConfig::default();
        let batch = sample_collocation(&small_cfg(), &b, 8);
        let c = 3.5;
        let expect: f64 = batch
            .initial
            .iter()
            .map(|&a| (c - initial_condition(a, &b).unwrap()).powi(2))
            .sum();
        let got = residual_g(&constant_net(c), &batch, &b).unwrap();
        assert!((got - expect).abs() <= 1e-12 * expect);
    }

    #[test]
    fn sgd_step_arithmetic() {
        let p = MlpParams::from_layers(
            crate::nn::Activation::Tanh,
            vec![crate::nn::DenseLayer::new(2, 1, vec![1.0, 0.0], vec![0.0]).unwrap()],
        )
        .unwrap();
        let g = [2.0, 0.0, 0.0];
        let q = sgd_step(&p, &g, 0.1).unwrap();
        assert!((q.flatten()[0] - 0.8).abs() < 1e-15);
        assert_eq!(sgd_step(&p, &[0.0; 3], 0.1).unwrap(), p);
        let r = sgd_step(&q, &g, 0.1).unwrap();
        assert!((r.flatten()[0] - (1.0 - 2.0 * 0.1 * 2.0)).abs() < 1e-15);
        assert!(matches!(sgd_step(&p, &[1.0], 0.1), Err(Error::Contract(_))));
    }

    #[test]
    fn infinite_epsilon_stops_after_one_epoch() {
        let arch = MlpArchitecture::new(vec![4]).unwrap();
        let cfg = TrainConfig {
            epsilon: Some(f64::INFINITY),
            ..small_cfg()
        };
        let (_, rep) = train_weak_learner(&arch, &cfg, &BurgersConfig::default()).unwrap();
        assert_eq!(rep.epochs, 1);
        assert_eq!(rep.final_g, rep.losses[0]);
    }

    #[test]
    fn training_is_deterministic() {
        let arch = MlpArchitecture::new(vec![5, 5]).unwrap();
        let cfg = TrainConfig {
            max_epochs: 30,
            seed: 3,
            ..small_cfg()
        };
        let b = BurgersConfig::default();
        let (l1, r1) = train_weak_learner(&arch, &cfg, &b).unwrap();
        let (l2, r2) = train_weak_learner(&arch, &cfg, &b).unwrap();
        assert_eq!(l1, l2);
        assert_eq!(r1.losses, r2.losses);
        assert_eq!(r1.epochs, r2.epochs);
    }

    #[test]
    fn divergence_reports_epoch() {
        let arch = MlpArchitecture::new(vec![5]).unwrap();
        let cfg = TrainConfig {
            max_epochs: 200,
            lr: LrSchedule {
                alpha0: 1e6,
                decay_epochs: 1e9,
            },
            ..small_cfg()
        };
        match train_weak_learner(&arch, &cfg, &BurgersConfig::default()) {
            Err(Error::Training { epoch, .. }) => assert!(epoch > 0),
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
