//! Affine ensemble weights as a QUBO.
//!
//! Learner `K` (the last column of `H`) is eliminated through
//! `w_K = 1 - Σ_{k<K} w_k`. Each free weight is a fixed-point number
//! `w_k = c·χ_k - d` with `χ_k = Σ_r 2^{-r} q_{k,r}`, and substituting into
//!
//! ```text
//! J(w) = (1/M) Σ_m (Σ_k w_k H[m,k] - y_m)² + λ Σ_k w_k²
//! ```
//!
//! gives, with `g_k = h_k - h_K`, `e = h_K - y`, `A = gᵀg / M`,
//! `b = gᵀe / M` and `P = A + λ(I + 11ᵀ)`,
//!
//! ```text
//! J = wᵀ P w + 2 (b - λ1)·w + const          (free weights)
//! α_i  = c² P_kk 4^{-r} + 2c 2^{-r} [(b_k - λ) - d (P1)_k]
//! β_ij = 2 c² P_{k_i k_j} 2^{-(r_i + r_j)}   (i < j, whole pair)
//! ```
//!
//! Binary variable `i = (k - 1)·R + r` for `k = 1..K-1`, i.e. the merged
//! index `l = k·R + r` shifted down by `R`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct FixedPointCode {
    /// Bits of resolution.
    #[serde(rename = "R")]
    pub bits: usize,
    pub c: f64,
    pub d: f64,
}

impl Default for FixedPointCode {
    fn default() -> Self {
        Self {
            bits: 4,
            c: 3.0,
            d: 3.0,
        }
    }
}

impl FixedPointCode {
    pub fn new(bits: usize, c: f64, d: f64) -> Result<Self> {
        let code = Self { bits, c, d };
        code.validate()?;
        Ok(code)
    }

    pub fn validate(&self) -> Result<()> {
        if self.bits == 0 || self.bits > 52 {
            return Err(Error::Config(format!("R must be in 1..=52, got {}", self.bits)));
        }
        if !(self.d > 0.0 && self.c > self.d / 2.0 && self.c.is_finite()) {
            return Err(Error::Config(format!(
                "fixed-point code needs d > 0 and c > d/2, got c={}, d={}",
                self.c, self.d
            )));
        }
        Ok(())
    }

    /// Smallest and largest representable weight.
    pub fn range(&self) -> (f64, f64) {
        let chi_max = 2.0 - 2f64.powi(1 - self.bits as i32);
        (-self.d, self.c * chi_max - self.d)
    }

    pub fn with_bits(self, bits: usize) -> Self {
        Self { bits, ..self }
    }
}

fn as_bit(b: u8) -> Result<f64> {
    match b {
        0 => Ok(0.0),
        1 => Ok(1.0),
        _ => Err(Error::Contract(format!("bit value {b} is not 0 or 1"))),
    }
}

/// `c·Σ_r 2^{-r} bit_r - d`.
pub fn decode_weight(bits: &[u8], code: &FixedPointCode) -> Result<f64> {
    if bits.len() != code.bits {
        return Err(Error::Contract(format!(
            "expected {} bits, got {}",
            code.bits,
            bits.len()
        )));
    }
    let mut chi = 0.0;
    let mut scale = 1.0;
    for &b in bits {
        chi += scale * as_bit(b)?;
        scale *= 0.5;
    }
    Ok(code.c * chi - code.d)
}

/// Merged index `l = k·R + r` for learner `k ∈ 1..K-1`, bit `r ∈ 0..R-1`.
pub fn flat_index(k: usize, r: usize, bits: usize, n_learners: usize) -> Result<usize> {
    if k == 0 || k >= n_learners || r >= bits {
        return Err(Error::Contract(format!(
            "(k={k}, r={r}) outside 1..{n_learners} x 0..{bits}"
        )));
    }
    Ok(k * bits + r)
}

/// Inverse of [`flat_index`]: `(⌊l/R⌋, l mod R)`.
pub fn unflat_index(l: usize, bits: usize, n_learners: usize) -> Result<(usize, usize)> {
    if bits == 0 || l < bits || l >= n_learners * bits {
        return Err(Error::Contract(format!(
            "index {l} outside {bits}..{}",
            n_learners * bits
        )));
    }
    Ok((l / bits, l % bits))
}

/// Weights of all `K` learners; the last one closes the affine constraint.
pub fn reconstruct_weights(bitstring: &[u8], code: &FixedPointCode, n_learners: usize) -> Result<Vec<f64>> {
    if n_learners < 2 {
        return Err(Error::Contract("an ensemble needs at least two learners".into()));
    }
    let n = (n_learners - 1) * code.bits;
    if bitstring.len() != n {
        return Err(Error::Contract(format!("expected {n} bits, got {}", bitstring.len())));
    }
    let mut w = bitstring
        .chunks(code.bits)
        .map(|slice| decode_weight(slice, code))
        .collect::<Result<Vec<_>>>()?;
    let free: f64 = w.iter().sum();
    w.push(1.0 - free);
    Ok(w)
}

/// Prediction matrix `H` (row-major `M × K`), targets and ridge strength.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleProblem {
    pub n_samples: usize,
    pub n_learners: usize,
    pub h: Vec<f64>,
    pub y: Vec<f64>,
    pub lambda: f64,
}

impl EnsembleProblem {
    pub fn new(h: Vec<f64>, y: Vec<f64>, n_learners: usize, lambda: f64) -> Result<Self> {
        let m = y.len();
        if m == 0 || n_learners < 2 || h.len() != m * n_learners {
            return Err(Error::Contract(format!(
                "need M >= 1, K >= 2 and an M x K matrix; got M={m}, K={n_learners}, |H|={}",
                h.len()
            )));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::Contract(format!("lambda must be finite and >= 0, got {lambda}")));
        }
        if h.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::Numeric("ensemble problem contains non-finite entries".into()));
        }
        Ok(Self {
            n_samples: m,
            n_learners,
            h,
            y,
            lambda,
        })
    }

    pub fn row(&self, m: usize) -> &[f64] {
        &self.h[m * self.n_learners..(m + 1) * self.n_learners]
    }

    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        Self::new(self.h.clone(), self.y.clone(), self.n_learners, lambda)
    }

    /// Column-wise predictions of the ensemble.
    pub fn predict(&self, w: &[f64]) -> Vec<f64> {
        (0..self.n_samples)
            .map(|m| self.row(m).iter().zip(w).map(|(h, w)| h * w).sum())
            .collect()
    }

    pub fn mse(&self, w: &[f64]) -> f64 {
        let pred = self.predict(w);
        pred.iter().zip(&self.y).map(|(p, y)| (p - y).powi(2)).sum::<f64>() / self.n_samples as f64
    }

    /// Reduced-form Gram `A`, cross term `b` (both over the `K-1` free
    /// learners) and the constant `(1/M) Σ e²`.
    fn reduced_moments(&self) -> (Vec<f64>, Vec<f64>, f64) {
        let kf = self.n_learners - 1;
        let m = self.n_samples as f64;
        let last = self.n_learners - 1;
        // column k-major differences g_k = h_k - h_K, and e = h_K - y
        let g: Vec<Vec<f64>> = (0..kf)
            .map(|k| {
                (0..self.n_samples)
                    .map(|i| self.row(i)[k] - self.row(i)[last])
                    .collect()
            })
            .collect();
        let e: Vec<f64> = (0..self.n_samples).map(|i| self.row(i)[last] - self.y[i]).collect();
        let pairs: Vec<(usize, usize)> = (0..kf).flat_map(|a| (a..kf).map(move |b| (a, b))).collect();
        let dots = par::map(&pairs, |&(a, b)| dot(&g[a], &g[b]) / m);
        let mut gram = vec![0.0; kf * kf];
        for (&(a, b), v) in pairs.iter().zip(dots) {
            gram[a * kf + b] = v;
            gram[b * kf + a] = v;
        }
        let cross = g.iter().map(|gk| dot(gk, &e) / m).collect();
        let e2 = dot(&e, &e) / m;
        (gram, cross, e2)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_len(w: &[f64], n: usize) -> Result<()> {
    if w.len() != n {
        return Err(Error::Contract(format!(
            "weight vector has length {}, expected {n}",
            w.len()
        )));
    }
    Ok(())
}

/// `(1/M) Σ_m (Σ_k w_k H[m,k] - y_m)² + λ ‖w‖²`.
pub fn objective_j_full(w: &[f64], prob: &EnsembleProblem) -> Result<f64> {
    check_len(w, prob.n_learners)?;
    Ok(prob.mse(w) + prob.lambda * dot(w, w))
}

/// `wᵀ P w + 2 (b - λ1)·w` over the free weights; equals
/// [`objective_j_full`] at `[w_free, 1 - Σ w_free]` minus
/// `(1/M) Σ e² + λ`.
pub fn objective_j_reduced(w_free: &[f64], prob: &EnsembleProblem) -> Result<f64> {
    let kf = prob.n_learners - 1;
    check_len(w_free, kf)?;
    let (gram, cross, _) = prob.reduced_moments();
    let p = penalised(&gram, kf, prob.lambda);
    let mut j = 0.0;
    for a in 0..kf {
        for b in 0..kf {
            j += w_free[a] * p[a * kf + b] * w_free[b];
        }
        j += 2.0 * (cross[a] - prob.lambda) * w_free[a];
    }
    Ok(j)
}

fn penalised(gram: &[f64], kf: usize, lambda: f64) -> Vec<f64> {
    let mut p = gram.to_vec();
    for a in 0..kf {
        for b in 0..kf {
            p[a * kf + b] += lambda * if a == b { 2.0 } else { 1.0 };
        }
    }
    p
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuboMeta {
    #[serde(rename = "K")]
    pub n_learners: usize,
    #[serde(rename = "M")]
    pub n_samples: usize,
    pub lambda: f64,
    /// Labels of the learners in column order; the last is eliminated.
    pub learner_order: Vec<String>,
    /// `J_full(w(Q)) = energy(Q) + offset`.
    pub offset: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuboProblem {
    pub n_vars: usize,
    pub alpha: Vec<f64>,
    /// Strict upper triangle `(i, j, β_ij)` with `i < j`, row-major order,
    /// zero couplings omitted.
    pub beta: Vec<(usize, usize, f64)>,
    pub code: FixedPointCode,
    pub meta: QuboMeta,
}

pub fn build_qubo(prob: &EnsembleProblem, code: &FixedPointCode) -> Result<QuboProblem> {
    code.validate()?;
    let kf = prob.n_learners - 1;
    let r_bits = code.bits;
    let n = kf * r_bits;
    let (gram, cross, e2) = prob.reduced_moments();
    let lambda = prob.lambda;
    let p = penalised(&gram, kf, lambda);
    let (c, d) = (code.c, code.d);
    let scale: Vec<f64> = (0..r_bits).map(|r| 0.5f64.powi(r as i32)).collect();

    let mut alpha = Vec::with_capacity(n);
    for k in 0..kf {
        let row_sum: f64 = p[k * kf..(k + 1) * kf].iter().sum();
        let lin = 2.0 * c * ((cross[k] - lambda) - d * row_sum);
        for &s in &scale {
            alpha.push(c * c * p[k * kf + k] * s * s + lin * s);
        }
    }
    let mut beta = Vec::new();
    for i in 0..n {
        let (ki, ri) = (i / r_bits, i % r_bits);
        for j in i + 1..n {
            let (kj, rj) = (j / r_bits, j % r_bits);
            let v = 2.0 * c * c * p[ki * kf + kj] * scale[ri] * scale[rj];
            if v != 0.0 {
                beta.push((i, j, v));
            }
        }
    }
    // J at the all-zero bitstring, where every free weight is -d.
    let w0 = vec![-d; kf];
    let mut j0 = e2 + lambda;
    for a in 0..kf {
        for b in 0..kf {
            j0 += w0[a] * p[a * kf + b] * w0[b];
        }
        j0 += 2.0 * (cross[a] - lambda) * w0[a];
    }
    if alpha
        .iter()
        .chain(beta.iter().map(|(_, _, v)| v))
        .any(|v| !v.is_finite())
        || !j0.is_finite()
    {
        return Err(Error::Numeric("QUBO coefficients overflowed".into()));
    }
    Ok(QuboProblem {
        n_vars: n,
        alpha,
        beta,
        code: *code,
        meta: QuboMeta {
            n_learners: prob.n_learners,
            n_samples: prob.n_samples,
            lambda,
            learner_order: (0..prob.n_learners).map(|k| format!("h{}", k + 1)).collect(),
            offset: j0,
        },
    })
}

/// `Σ α_i q_i + Σ_{i<j} β_ij q_i q_j`.
pub fn qubo_energy(q: &QuboProblem, bits: &[u8]) -> Result<f64> {
    if bits.len() != q.n_vars {
        return Err(Error::Contract(format!(
            "expected {} bits, got {}",
            q.n_vars,
            bits.len()
        )));
    }
    let x = bits.iter().map(|&b| as_bit(b)).collect::<Result<Vec<_>>>()?;
    let mut e: f64 = q.alpha.iter().zip(&x).map(|(a, x)| a * x).sum();
    for &(i, j, b) in &q.beta {
        e += b * x[i] * x[j];
    }
    Ok(e)
}

impl QuboProblem {
    /// Dense symmetric coupling matrix (`n × n`, zero diagonal) holding
    /// `β_ij` in both triangles.
    pub fn dense_couplings(&self) -> Vec<f64> {
        let n = self.n_vars;
        let mut m = vec![0.0; n * n];
        for &(i, j, b) in &self.beta {
            m[i * n + j] = b;
            m[j * n + i] = b;
        }
        m
    }

    pub fn weights(&self, bits: &[u8]) -> Result<Vec<f64>> {
        reconstruct_weights(bits, &self.code, self.meta.n_learners)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&QuboFile::from(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let f: QuboFile = serde_json::from_str(s)?;
        f.try_into()
    }
}

/// On-disk QUBO: `n_vars`, `alpha`, `beta` as `[i, j, value]` with
/// `i < j` holding the whole pair coefficient, `code` and `meta`.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct QuboFile {
    n_vars: usize,
    alpha: Vec<f64>,
    beta: Vec<(usize, usize, f64)>,
    code: FixedPointCode,
    meta: QuboMeta,
}

impl From<&QuboProblem> for QuboFile {
    fn from(q: &QuboProblem) -> Self {
        QuboFile {
            n_vars: q.n_vars,
            alpha: q.alpha.clone(),
            beta: q.beta.clone(),
            code: q.code,
            meta: q.meta.clone(),
        }
    }
}

impl TryFrom<QuboFile> for QuboProblem {
    type Error = Error;

    fn try_from(f: QuboFile) -> Result<Self> {
        if f.alpha.len() != f.n_vars || f.beta.iter().any(|&(i, j, _)| i >= j || j >= f.n_vars) {
            return Err(Error::Contract("QUBO file has inconsistent indices".into()));
        }
        if f.n_vars != (f.meta.n_learners.saturating_sub(1)) * f.code.bits {
            return Err(Error::Contract("n_vars does not equal (K-1)·R".into()));
        }
        Ok(QuboProblem {
            n_vars: f.n_vars,
            alpha: f.alpha,
            beta: f.beta,
            code: f.code,
            meta: f.meta,
        })
    }
}
