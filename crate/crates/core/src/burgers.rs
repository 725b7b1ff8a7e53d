//! Viscous Burgers' benchmark on `[0, 2π]`: the closed-form solution, its
//! initial condition, a finite-difference residual probe and the labelled
//! dataset sampler.
//!
//! The solution has the Cole–Hopf form `u = -2ν φ_x / φ + 4` where `φ` is a
//! sum of two Gaussians of variance `2ν(t+1)`. `φ_x / φ` is evaluated as a
//! softmax-weighted mean of the two log-derivatives, so it never underflows.
//! The common `(t+1)^{-1/2}` heat-kernel factor cancels in the ratio and is
//! omitted.

use std::f64::consts::PI;
use std::io::{Read, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::stream_rng;

pub const X_MIN: f64 = 0.0;
pub const X_MAX: f64 = 2.0 * PI;

/// Sign convention inside the second Gaussian of `φ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Second centre at `2π + 4t`; both Gaussians travel at the advection
    /// speed, so `u` solves the PDE.
    #[default]
    Corrected,
    /// Second centre at `2π - 4t`, as sometimes printed. Does not solve the
    /// PDE for `t > 0`; kept for comparison runs.
    Verbatim,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BurgersConfig {
    pub nu: f64,
    pub t_max: f64,
    pub variant: Variant,
}

impl Default for BurgersConfig {
    fn default() -> Self {
        Self {
            nu: 0.07,
            t_max: 0.5,
            variant: Variant::Corrected,
        }
    }
}

impl BurgersConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return Err(Error::Config(format!("nu must be > 0, got {}", self.nu)));
        }
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            return Err(Error::Config(format!("t_max must be > 0, got {}", self.t_max)));
        }
        Ok(())
    }

    fn centres(&self, t: f64) -> (f64, f64) {
        let second = match self.variant {
            Variant::Corrected => 2.0 * PI + 4.0 * t,
            Variant::Verbatim => 2.0 * PI - 4.0 * t,
        };
        (4.0 * t, second)
    }
}

fn check_point(t: f64, x: f64) -> Result<()> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::Domain(format!("t = {t} outside [0, ∞)")));
    }
    if !(X_MIN..=X_MAX).contains(&x) {
        return Err(Error::Domain(format!("x = {x} outside [0, 2π]")));
    }
    Ok(())
}

/// Closed-form `u(t, x)`.
pub fn analytic_u(t: f64, x: f64, cfg: &BurgersConfig) -> Result<f64> {
    check_point(t, x)?;
    let s = 4.0 * cfg.nu * (t + 1.0);
    let (c1, c2) = cfg.centres(t);
    let e1 = -(x - c1).powi(2) / s;
    let e2 = -(x - c2).powi(2) / s;
    let m = e1.max(e2);
    let w1 = (e1 - m).exp();
    let w2 = (e2 - m).exp();
    // d/dx of each exponent
    let g1 = -2.0 * (x - c1) / s;
    let g2 = -2.0 * (x - c2) / s;
    let dlog_phi = (w1 * g1 + w2 * g2) / (w1 + w2);
    let u = -2.0 * cfg.nu * dlog_phi + 4.0;
    if u.is_finite() {
        Ok(u)
    } else {
        Err(Error::Domain(format!("non-finite solution at (t={t}, x={x})")))
    }
}

pub fn initial_condition(x: f64, cfg: &BurgersConfig) -> Result<f64> {
    analytic_u(0.0, x, cfg)
}

/// Second-order central-difference estimate of `u_t + u u_x - ν u_xx`.
pub fn pde_residual_check<F>(u: F, t: f64, x: f64, h: f64, nu: f64) -> Result<f64>
where
    F: Fn(f64, f64) -> Result<f64>,
{
    if !(h > 0.0) {
        return Err(Error::Domain(format!("step must be > 0, got {h}")));
    }
    if t - h < 0.0 || x - h < X_MIN || x + h > X_MAX {
        return Err(Error::Domain(format!(
            "stencil around (t={t}, x={x}) with h={h} leaves the domain"
        )));
    }
    let c = u(t, x)?;
    let ut = (u(t + h, x)? - u(t - h, x)?) / (2.0 * h);
    let xp = u(t, x + h)?;
    let xm = u(t, x - h)?;
    let ux = (xp - xm) / (2.0 * h);
    let uxx = (xp - 2.0 * c + xm) / (h * h);
    Ok(ut + c * ux - nu * uxx)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub x: f64,
    pub u: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
    pub train_times: Vec<f64>,
    pub test_times: Vec<f64>,
    pub seed: u64,
}

pub const PAPER_TRAIN_TIMES: [f64; 8] = [0.0, 0.05, 0.15, 0.20, 0.30, 0.35, 0.40, 0.50];
pub const PAPER_TEST_TIMES: [f64; 3] = [0.10, 0.25, 0.45];

/// Draws `n_per_time` uniform positions per listed time and labels them with
/// [`analytic_u`]. Time slice `i` of the concatenated (train, test) list
/// uses generator stream `i`.
pub fn sample_dataset(
    cfg: &BurgersConfig,
    n_per_time: usize,
    train_times: &[f64],
    test_times: &[f64],
    seed: u64,
) -> Result<SampleSet> {
    cfg.validate()?;
    if n_per_time == 0 {
        return Err(Error::Config("n_per_time must be >= 1".into()));
    }
    for &t in train_times.iter().chain(test_times) {
        if !(0.0..=cfg.t_max).contains(&t) {
            return Err(Error::Config(format!("time {t} outside [0, {}]", cfg.t_max)));
        }
    }
    if let Some(t) = train_times.iter().find(|t| test_times.contains(t)) {
        return Err(Error::Config(format!("time {t} appears in both train and test lists")));
    }
    let draw = |t: f64, stream: u64| -> Result<Vec<Sample>> {
        let mut rng = stream_rng(seed, stream);
        (0..n_per_time)
            .map(|_| {
                let x = rng.gen_range(X_MIN..=X_MAX);
                Ok(Sample {
                    t,
                    x,
                    u: analytic_u(t, x, cfg)?,
                })
            })
            .collect()
    };
    let mut train = Vec::with_capacity(n_per_time * train_times.len());
    for (i, &t) in train_times.iter().enumerate() {
        train.extend(draw(t, i as u64)?);
    }
    let mut test = Vec::with_capacity(n_per_time * test_times.len());
    for (i, &t) in test_times.iter().enumerate() {
        test.extend(draw(t, (train_times.len() + i) as u64)?);
    }
    Ok(SampleSet {
        train,
        test,
        train_times: train_times.to_vec(),
        test_times: test_times.to_vec(),
        seed,
    })
}

#[derive(Serialize, Deserialize)]
struct CsvRow {
    split: String,
    t: f64,
    x: f64,
    u: f64,
}

impl SampleSet {
    /// Writes `split,t,x,u` rows, train first.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(w);
        for (split, rows) in [("train", &self.train), ("test", &self.test)] {
            for s in rows {
                out.serialize(CsvRow {
                    split: split.into(),
                    t: s.t,
                    x: s.x,
                    u: s.u,
                })?;
            }
        }
        out.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    /// Reads the CSV written by [`SampleSet::write_csv`]. Time lists are
    /// recovered in order of first appearance; the seed is not stored and
    /// is supplied by the caller.
    pub fn read_csv<R: Read>(r: R, seed: u64) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut set = SampleSet {
            train: Vec::new(),
            test: Vec::new(),
            train_times: Vec::new(),
            test_times: Vec::new(),
            seed,
        };
        for row in rdr.deserialize() {
            let row: CsvRow = row?;
            let s = Sample {
                t: row.t,
                x: row.x,
                u: row.u,
            };
            let (rows, times) = match row.split.as_str() {
                "train" => (&mut set.train, &mut set.train_times),
                "test" => (&mut set.test, &mut set.test_times),
                other => return Err(Error::Config(format!("unknown split '{other}'"))),
            };
            if !times.contains(&s.t) {
                times.push(s.t);
            }
            rows.push(s);
        }
        Ok(set)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> BurgersConfig {
        BurgersConfig::default()
    }

    #[test]
    fn symmetric_point_is_exactly_four() {
        assert_eq!(analytic_u(0.0, PI, &cfg()).unwrap(), 4.0);
        assert_eq!(initial_condition(PI, &cfg()).unwrap(), 4.0);
    }

    #[test]
    fn left_edge_at_t0() {
        assert!((initial_condition(0.0, &cfg()).unwrap() - 4.0).abs() <= 1e-10);
    }

    #[test]
    fn initial_condition_matches_solution_at_t0() {
        for i in 0..100 {
            let x = (X_MAX * i as f64 / 99.0).min(X_MAX);
            assert_eq!(
                initial_condition(x, &cfg()).unwrap(),
                analytic_u(0.0, x, &cfg()).unwrap()
            );
        }
    }

    #[test]
    fn approximately_periodic() {
        let c = cfg();
        for t in [0.0, 0.25, 0.5] {
            let d = analytic_u(t, 0.0, &c).unwrap() - analytic_u(t, X_MAX, &c).unwrap();
            assert!(d.abs() <= 1e-10, "t={t}: {d}");
        }
    }

    #[test]
    fn rejects_points_outside_domain() {
        assert!(matches!(analytic_u(-0.1, 1.0, &cfg()), Err(Error::Domain(_))));
        assert!(matches!(analytic_u(0.1, 7.0, &cfg()), Err(Error::Domain(_))));
    }

    #[test]
    fn constant_field_has_zero_residual() {
        let r = pde_residual_check(|_, _| Ok(4.0), 0.2, 1.0, 1e-3, 0.07).unwrap();
        assert_eq!(r, 0.0);
    }

    #[test]
    fn stencil_outside_domain_is_rejected() {
        let r = pde_residual_check(|_, _| Ok(4.0), 0.0, 1.0, 1e-3, 0.07);
        assert!(matches!(r, Err(Error::Domain(_))));
        let r = pde_residual_check(|_, _| Ok(4.0), 0.1, X_MAX, 1e-3, 0.07);
        assert!(matches!(r, Err(Error::Domain(_))));
    }

    #[test]
    fn verbatim_variant_violates_the_pde() {
        let good = cfg();
        let bad = BurgersConfig {
            variant: Variant::Verbatim,
            ..good
        };
        let (t, x, h) = (0.2, PI, 1e-4);
        let r_good = pde_residual_check(|t, x| analytic_u(t, x, &good), t, x, h, good.nu).unwrap();
        let r_bad = pde_residual_check(|t, x| analytic_u(t, x, &bad), t, x, h, bad.nu).unwrap();
        assert!(r_bad.abs() > 1e4 * r_good.abs(), "{r_bad} vs {r_good}");
    }

    #[test]
    fn dataset_counts_and_determinism() {
        let c = cfg();
        let a = sample_dataset(&c, 250, &PAPER_TRAIN_TIMES, &PAPER_TEST_TIMES, 11).unwrap();
        assert_eq!(a.train.len(), 2000);
        assert_eq!(a.test.len(), 750);
        let b = sample_dataset(&c, 250, &PAPER_TRAIN_TIMES, &PAPER_TEST_TIMES, 11).unwrap();
        assert_eq!(a, b);
        assert!(a.train.iter().all(|s| PAPER_TRAIN_TIMES.contains(&s.t)));
        assert!(a.test.iter().all(|s| PAPER_TEST_TIMES.contains(&s.t)));
        assert!(a.train.iter().chain(&a.test).all(|s| (X_MIN..=X_MAX).contains(&s.x)));
    }

    #[test]
    fn overlapping_times_are_a_config_error() {
        let r = sample_dataset(&cfg(), 10, &[0.0, 0.1], &[0.1], 1);
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn csv_roundtrip() {
        let a = sample_dataset(&cfg(), 5, &[0.0, 0.2], &[0.1], 3).unwrap();
        let mut buf = Vec::new();
        a.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("split,t,x,u\n"));
        assert!(!text.contains('\r'));
        let b = SampleSet::read_csv(buf.as_slice(), 3).unwrap();
        assert_eq!(a, b);
    }
}
