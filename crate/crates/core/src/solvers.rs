//! Minimisers for [`QuboProblem`]: exhaustive enumeration of the low
//! spectrum and single-flip Metropolis annealing, both behind [`Sampler`].

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::qubo::{qubo_energy, QuboProblem};
use crate::seed::stream_rng;

/// Energies closer than this are reported as one level.
pub const LEVEL_RESOLUTION: f64 = 1e-12;
pub const DEFAULT_MAX_VARS: usize = 24;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Level {
    pub energy: f64,
    /// Every bitstring in the level, lexicographically sorted.
    pub bitstrings: Vec<Vec<u8>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub n_vars: usize,
    pub levels: Vec<Level>,
}

impl Spectrum {
    pub fn ground(&self) -> &Level {
        &self.levels[0]
    }

    /// Number of bitstrings that fall outside the returned levels.
    pub fn remaining_states(&self) -> u64 {
        let listed: u64 = self.levels.iter().map(|l| l.bitstrings.len() as u64).sum();
        (1u64 << self.n_vars) - listed
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveSample {
    pub bits: Vec<u8>,
    pub energy: f64,
    pub read: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub samples: Vec<SolveSample>,
}

impl SolveResult {
    /// Lowest-energy sample; ties go to the earliest.
    pub fn best(&self) -> &SolveSample {
        self.samples
            .iter()
            .reduce(|a, b| if b.energy < a.energy { b } else { a })
            .expect("solve result is never empty")
    }
}

/// Anything that turns a QUBO into candidate bitstrings with energies.
pub trait Sampler {
    fn sample(&self, q: &QuboProblem) -> Result<SolveResult>;
}

fn mask_to_bits(mask: u64, n: usize) -> Vec<u8> {
    (0..n).map(|i| ((mask >> i) & 1) as u8).collect()
}

fn level_key(e: f64) -> i128 {
    (e / LEVEL_RESOLUTION).round() as i128
}

/// Local fields `α_i + Σ_j β_ij x_j` and the total energy of `x`.
fn fields(alpha: &[f64], coupling: &[f64], x: &[u8]) -> (Vec<f64>, f64) {
    let n = alpha.len();
    let mut h = alpha.to_vec();
    for i in 0..n {
        if x[i] == 1 {
            let row = &coupling[i * n..(i + 1) * n];
            for j in 0..n {
                h[j] += row[j];
            }
        }
    }
    let mut e = 0.0;
    for i in 0..n {
        if x[i] == 1 {
            // each pair is seen from both ends
            e += 0.5 * (alpha[i] + h[i]);
        }
    }
    (h, e)
}

/// Flips bit `i`, returning the energy change and updating the fields.
#[inline]
fn flip(x: &mut [u8], h: &mut [f64], coupling: &[f64], i: usize) -> f64 {
    let n = x.len();
    let row = &coupling[i * n..(i + 1) * n];
    let (de, sign) = if x[i] == 0 { (h[i], 1.0) } else { (-h[i], -1.0) };
    x[i] ^= 1;
    for j in 0..n {
        h[j] += sign * row[j];
    }
    de
}

#[inline]
fn flip_delta(x: &[u8], h: &[f64], i: usize) -> f64 {
    if x[i] == 0 {
        h[i]
    } else {
        -h[i]
    }
}

#[derive(Default)]
struct TopLevels {
    cap: usize,
    levels: BTreeMap<i128, (f64, Vec<u64>)>,
}

impl TopLevels {
    fn threshold(&self) -> f64 {
        if self.levels.len() < self.cap {
            f64::INFINITY
        } else {
            self.levels
                .values()
                .next_back()
                .map(|(e, _)| *e)
                .unwrap_or(f64::INFINITY)
        }
    }

    fn insert(&mut self, energy: f64, mask: u64) {
        let entry = self.levels.entry(level_key(energy)).or_insert((energy, Vec::new()));
        entry.0 = entry.0.min(energy);
        entry.1.push(mask);
        while self.levels.len() > self.cap {
            self.levels.pop_last();
        }
    }

    fn merge(&mut self, other: TopLevels) {
        for (_, (e, masks)) in other.levels {
            for m in masks {
                self.insert(e, m);
            }
        }
    }
}

const RANGE_BITS: usize = 14;

/// Lowest `num_levels` distinct energies with every bitstring attaining
/// them, by full enumeration in Gray-code order.
///
/// Enumeration runs over contiguous index ranges in parallel; a state enters
/// the running top-level set only after its energy has been recomputed from
/// scratch, so level energies never carry incremental drift.
pub fn exact_solve(q: &QuboProblem, num_levels: usize) -> Result<Spectrum> {
    exact_solve_capped(q, num_levels, DEFAULT_MAX_VARS)
}

pub fn exact_solve_capped(q: &QuboProblem, num_levels: usize, max_vars: usize) -> Result<Spectrum> {
    let n = q.n_vars;
    if n > max_vars || n > 40 {
        return Err(Error::Resource(format!(
            "exhaustive search over {n} variables exceeds the cap of {}",
            max_vars.min(40)
        )));
    }
    if num_levels == 0 {
        return Err(Error::Contract("num_levels must be >= 1".into()));
    }
    let coupling = q.dense_couplings();
    let total: u64 = 1 << n;
    let range_len: u64 = 1 << RANGE_BITS.min(n);
    let n_ranges = (total / range_len) as usize;
    let scale: f64 = q.alpha.iter().map(|a| a.abs()).sum::<f64>() + q.beta.iter().map(|b| b.2.abs()).sum::<f64>();
    let slack = 1e-9 * (1.0 + scale);
    let exact = |mask: u64| -> f64 {
        let bits = mask_to_bits(mask, n);
        qubo_energy(q, &bits).expect("length matches n_vars")
    };

    let partial = par::map_range(n_ranges, |r| {
        let start = r as u64 * range_len;
        let gray = |i: u64| i ^ (i >> 1);
        let mut mask = gray(start);
        let mut x = mask_to_bits(mask, n);
        let (mut h, mut e) = fields(&q.alpha, &coupling, &x);
        let mut top = TopLevels {
            cap: num_levels,
            ..Default::default()
        };
        for idx in start..start + range_len {
            if e <= top.threshold() + slack {
                let ex = exact(mask);
                // Below the cut-off, or a degenerate partner of a kept level.
                if ex <= top.threshold() || top.levels.contains_key(&level_key(ex)) {
                    top.insert(ex, mask);
                }
            }
            if idx + 1 < start + range_len {
                let i = (idx + 1).trailing_zeros() as usize;
                e += flip(&mut x, &mut h, &coupling, i);
                mask ^= 1 << i;
            }
        }
        top
    });

    let mut top = TopLevels {
        cap: num_levels,
        ..Default::default()
    };
    for p in partial {
        top.merge(p);
    }
    let levels = top
        .levels
        .into_values()
        .map(|(energy, masks)| {
            let mut bitstrings: Vec<Vec<u8>> = masks.into_iter().map(|m| mask_to_bits(m, n)).collect();
            bitstrings.sort();
            bitstrings.dedup();
            Level { energy, bitstrings }
        })
        .collect();
    Ok(Spectrum { n_vars: n, levels })
}

pub struct ExactSolver {
    pub max_vars: usize,
}

impl Default for ExactSolver {
    fn default() -> Self {
        Self {
            max_vars: DEFAULT_MAX_VARS,
        }
    }
}

impl Sampler for ExactSolver {
    /// Every ground-state bitstring, one sample each.
    fn sample(&self, q: &QuboProblem) -> Result<SolveResult> {
        let spec = exact_solve_capped(q, 1, self.max_vars)?;
        let ground = spec.ground();
        Ok(SolveResult {
            samples: ground
                .bitstrings
                .iter()
                .enumerate()
                .map(|(read, bits)| SolveSample {
                    bits: bits.clone(),
                    energy: ground.energy,
                    read,
                })
                .collect(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SaConfig {
    pub num_reads: usize,
    pub sweeps: usize,
    /// Inverse temperature at the first and last sweep, interpolated
    /// geometrically. Energies are divided by the problem's largest
    /// single-flip energy change before `β` is applied.
    pub beta_range: (f64, f64),
    pub seed: u64,
}

impl Default for SaConfig {
    fn default() -> Self {
        Self {
            num_reads: 100,
            sweeps: 1000,
            beta_range: (0.1, 10.0),
            seed: 0,
        }
    }
}

impl SaConfig {
    pub fn validate(&self) -> Result<()> {
        let (b0, b1) = self.beta_range;
        if self.num_reads == 0 || self.sweeps == 0 {
            return Err(Error::Config("num_reads and sweeps must be >= 1".into()));
        }
        if !(b0 > 0.0 && b0 <= b1) {
            return Err(Error::Config(format!(
                "beta range must satisfy 0 < beta0 <= beta1, got ({b0}, {b1})"
            )));
        }
        Ok(())
    }

    pub fn schedule(&self) -> Vec<f64> {
        let (b0, b1) = self.beta_range;
        if self.sweeps == 1 || b0 == b1 {
            return vec![b0; self.sweeps];
        }
        let ratio = (b1 / b0).ln() / (self.sweeps - 1) as f64;
        (0..self.sweeps).map(|s| b0 * (ratio * s as f64).exp()).collect()
    }
}

/// Largest `|ΔE|` any single flip can produce.
fn energy_scale(q: &QuboProblem, coupling: &[f64]) -> f64 {
    let n = q.n_vars;
    let s = (0..n)
        .map(|i| {
            let row = &coupling[i * n..(i + 1) * n];
            let pos: f64 = row.iter().filter(|v| **v > 0.0).sum();
            let neg: f64 = row.iter().filter(|v| **v < 0.0).sum();
            (q.alpha[i] + pos).abs().max((q.alpha[i] + neg).abs())
        })
        .fold(0.0, f64::max);
    if s > 0.0 {
        s
    } else {
        1.0
    }
}

/// One annealing read from a uniformly random start. Returns the
/// lowest-energy state visited.
fn anneal_read(q: &QuboProblem, coupling: &[f64], schedule: &[f64], scale: f64, seed: u64, read: usize) -> SolveSample {
    let n = q.n_vars;
    let mut rng = stream_rng(seed, read as u64);
    let mut x: Vec<u8> = (0..n).map(|_| rng.gen_range(0..=1)).collect();
    let (mut h, mut e) = fields(&q.alpha, coupling, &x);
    let (mut best_x, mut best_e) = (x.clone(), e);
    for &beta in schedule {
        let beta = beta / scale;
        for i in 0..n {
            let de = flip_delta(&x, &h, i);
            let accept = de <= 0.0 || rng.gen::<f64>() < (-beta * de).exp();
            if accept {
                e += flip(&mut x, &mut h, coupling, i);
                if e < best_e {
                    best_e = e;
                    best_x.copy_from_slice(&x);
                }
            }
        }
    }
    let energy = qubo_energy(q, &best_x).expect("length matches n_vars");
    SolveSample {
        bits: best_x,
        energy,
        read,
    }
}

/// Metropolis single-flip annealing, `num_reads` independent reads. Read
/// `r` draws from generator stream `r` of `cfg.seed`, so results do not
/// depend on the thread count.
pub fn simulated_anneal(q: &QuboProblem, cfg: &SaConfig) -> Result<SolveResult> {
    cfg.validate()?;
    let coupling = q.dense_couplings();
    let schedule = cfg.schedule();
    let scale = energy_scale(q, &coupling);
    let samples = par::map_range(cfg.num_reads, |r| {
        anneal_read(q, &coupling, &schedule, scale, cfg.seed, r)
    });
    Ok(SolveResult { samples })
}

pub struct SimulatedAnnealer {
    pub cfg: SaConfig,
}

impl Sampler for SimulatedAnnealer {
    fn sample(&self, q: &QuboProblem) -> Result<SolveResult> {
        simulated_anneal(q, &self.cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qubo::{FixedPointCode, QuboMeta};

    fn raw(alpha: Vec<f64>, beta: Vec<(usize, usize, f64)>) -> QuboProblem {
        let n = alpha.len();
        QuboProblem {
            n_vars: n,
            alpha,
            beta,
            code: FixedPointCode {
                bits: n,
                c: 3.0,
                d: 3.0,
            },
            meta: QuboMeta {
                n_learners: 2,
                n_samples: 1,
                lambda: 0.0,
                learner_order: vec![],
                offset: 0.0,
            },
        }
    }

    #[test]
    fn one_variable_spectrum() {
        let s = exact_solve(&raw(vec![-1.0], vec![]), 5).unwrap();
        assert_eq!(s.levels.len(), 2);
        assert_eq!(
            s.levels[0],
            Level {
                energy: -1.0,
                bitstrings: vec![vec![1]]
            }
        );
        assert_eq!(
            s.levels[1],
            Level {
                energy: 0.0,
                bitstrings: vec![vec![0]]
            }
        );
    }

    #[test]
    fn degenerate_ground_pair() {
        let q = raw(vec![-1.0, -1.0], vec![(0, 1, 3.0)]);
        let s = exact_solve(&q, 3).unwrap();
        assert_eq!(s.ground().energy, -1.0);
        assert_eq!(s.ground().bitstrings, vec![vec![0, 1], vec![1, 0]]);
        assert_eq!(s.levels[1].energy, 0.0);
        assert_eq!(s.levels[2].energy, 1.0);
    }

    #[test]
    fn incremental_fields_agree_with_direct_energy() {
        let q = raw(
            vec![0.3, -1.2, 0.7, 0.1],
            vec![(0, 1, 0.5), (0, 3, -2.0), (1, 2, 1.5), (2, 3, 0.25)],
        );
        let c = q.dense_couplings();
        let mut x = vec![1, 0, 1, 1];
        let (mut h, mut e) = fields(&q.alpha, &c, &x);
        assert!((e - qubo_energy(&q, &x).unwrap()).abs() < 1e-15);
        for i in [2, 0, 1, 3, 1, 2] {
            e += flip(&mut x, &mut h, &c, i);
            assert!((e - qubo_energy(&q, &x).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn cap_is_enforced() {
        let q = raw(vec![0.0; 10], vec![]);
        assert!(matches!(exact_solve_capped(&q, 1, 8), Err(Error::Resource(_))));
    }

    #[test]
    fn all_levels_account_for_every_state() {
        let q = raw(vec![0.5, -0.25, 1.0, -0.75, 0.125], vec![(0, 4, 0.5), (1, 3, -0.25)]);
        let s = exact_solve(&q, 1000).unwrap();
        assert_eq!(s.remaining_states(), 0);
        assert!(s.levels.windows(2).all(|w| w[0].energy < w[1].energy));
    }

    #[test]
    fn annealer_finds_degenerate_ground() {
        let q = raw(vec![-1.0, -1.0], vec![(0, 1, 3.0)]);
        let r = simulated_anneal(
            &q,
            &SaConfig {
                num_reads: 20,
                ..SaConfig::default()
            },
        )
        .unwrap();
        assert_eq!(r.best().energy, -1.0);
        assert_eq!(r.samples.len(), 20);
    }

    #[test]
    fn greedy_limit() {
        let q = raw(vec![-1.0], vec![]);
        let cfg = SaConfig {
            num_reads: 10,
            sweeps: 3,
            beta_range: (f64::INFINITY, f64::INFINITY),
            seed: 4,
        };
        let r = simulated_anneal(&q, &cfg).unwrap();
        assert!(r.samples.iter().all(|s| s.bits == vec![1]));
    }

    #[test]
    fn annealing_is_deterministic() {
        let q = raw(vec![0.5, -0.25, 1.0, -0.75], vec![(0, 3, 0.5), (1, 2, -1.25)]);
        let cfg = SaConfig {
            num_reads: 8,
            sweeps: 50,
            seed: 99,
            ..SaConfig::default()
        };
        assert_eq!(simulated_anneal(&q, &cfg).unwrap(), simulated_anneal(&q, &cfg).unwrap());
    }

    #[test]
    fn schedule_is_geometric() {
        let s = SaConfig {
            sweeps: 3,
            beta_range: (0.1, 10.0),
            ..SaConfig::default()
        }
        .schedule();
        assert!((s[0] - 0.1).abs() < 1e-15 && (s[1] - 1.0).abs() < 1e-12 && (s[2] - 10.0).abs() < 1e-12);
        assert!(SaConfig {
            beta_range: (2.0, 1.0),
            ..SaConfig::default()
        }
        .validate()
        .is_err());
    }
}
