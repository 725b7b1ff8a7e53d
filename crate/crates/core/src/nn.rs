//! Dense `(t, x) -> u` networks with exact input derivatives.
//!
//! `forward_jets` pushes second-order Taylor coefficients (value, `∂t`,
//! `∂x`, `∂xx`) through every layer. `param_gradient` records those jets on
//! a tape and runs reverse accumulation over all four components, so a loss
//! built from `f`, `f_t`, `f_x` and `f_xx` gets its exact parameter
//! gradient.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jet::Jet2;
use crate::par;
use crate::seed::stream_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Tanh,
    Sigmoid,
}

impl Activation {
    /// `(σ, σ', σ'', σ''')` at `z`.
    #[inline]
    fn derivatives(self, z: f64) -> [f64; 4] {
        match self {
            Activation::Tanh => {
                let s = z.tanh();
                let d1 = 1.0 - s * s;
                let d2 = -2.0 * s * d1;
                let d3 = -2.0 * (d1 * d1 + s * d2);
                [s, d1, d2, d3]
            }
            Activation::Sigmoid => {
                let s = 1.0 / (1.0 + (-z).exp());
                let d1 = s * (1.0 - s);
                let d2 = d1 * (1.0 - 2.0 * s);
                let d3 = d2 * (1.0 - 2.0 * s) - 2.0 * d1 * d1;
                [s, d1, d2, d3]
            }
        }
    }
}

/// Hidden-layer widths; input `(t, x)` and a scalar output are implied.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpArchitecture {
    pub layer_sizes: Vec<usize>,
    #[serde(default)]
    pub activation: Activation,
}

impl MlpArchitecture {
    pub fn new(layer_sizes: Vec<usize>) -> Result<Self> {
        let arch = Self {
            layer_sizes,
            activation: Activation::Tanh,
        };
        arch.validate()?;
        Ok(arch)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.is_empty() || self.layer_sizes.contains(&0) {
            return Err(Error::Config(format!(
                "hidden layer widths must be a non-empty list of positive integers, got {:?}",
                self.layer_sizes
            )));
        }
        Ok(())
    }

    /// The four rosters of the reference benchmark.
    pub fn reference_roster() -> Vec<MlpArchitecture> {
        [
            vec![120, 30, 120, 30, 120],
            vec![10, 20, 30],
            vec![20, 20, 20, 20, 20],
            vec![60, 30, 10, 10, 30, 60],
        ]
        .into_iter()
        .map(|layer_sizes| MlpArchitecture {
            layer_sizes,
            activation: Activation::Tanh,
        })
        .collect()
    }

    fn dims(&self) -> Vec<usize> {
        let mut d = Vec::with_capacity(self.layer_sizes.len() + 2);
        d.push(2);
        d.extend(&self.layer_sizes);
        d.push(1);
        d
    }

    pub fn param_count(&self) -> usize {
        self.dims().windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn label(&self) -> String {
        let parts: Vec<String> = self.layer_sizes.iter().map(|w| w.to_string()).collect();
        format!("[{}]", parts.join(","))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub n_in: usize,
    pub n_out: usize,
    /// Row-major `n_out × n_in`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    pub fn new(n_in: usize, n_out: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if weights.len() != n_in * n_out || bias.len() != n_out || n_in == 0 || n_out == 0 {
            return Err(Error::Contract(format!(
                "layer {n_in}->{n_out} needs {} weights and {n_out} biases, got {} and {}",
                n_in * n_out,
                weights.len(),
                bias.len()
            )));
        }
        Ok(Self {
            n_in,
            n_out,
            weights,
            bias,
        })
    }
}

/// Trained (or freshly initialised) network parameters. The last layer is
/// affine, every other layer is followed by the activation.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub activation: Activation,
    pub layers: Vec<DenseLayer>,
}

/// Glorot-style uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero
/// biases.
pub fn init_params(arch: &MlpArchitecture, seed: u64) -> Result<MlpParams> {
    arch.validate()?;
    let mut rng = stream_rng(seed, 0);
    let layers = arch
        .dims()
        .windows(2)
        .map(|w| {
            let (n_in, n_out) = (w[0], w[1]);
            let a = (6.0 / (n_in + n_out) as f64).sqrt();
            let weights = (0..n_in * n_out).map(|_| rng.gen_range(-a..=a)).collect();
            DenseLayer {
                n_in,
                n_out,
                weights,
                bias: vec![0.0; n_out],
            }
        })
        .collect();
    Ok(MlpParams {
        activation: arch.activation,
        layers,
    })
}

impl MlpParams {
    pub fn from_layers(activation: Activation, layers: Vec<DenseLayer>) -> Result<Self> {
        let first = layers
            .first()
            .ok_or_else(|| Error::Contract("network has no layers".into()))?;
        if first.n_in != 2 || layers.last().map(|l| l.n_out) != Some(1) {
            return Err(Error::Contract("network must map 2 inputs to 1 output".into()));
        }
        if layers.windows(2).any(|w| w[0].n_out != w[1].n_in) {
            return Err(Error::Contract("consecutive layer widths do not match".into()));
        }
        Ok(Self { activation, layers })
    }

    pub fn architecture(&self) -> MlpArchitecture {
        MlpArchitecture {
            layer_sizes: self.layers[..self.layers.len() - 1].iter().map(|l| l.n_out).collect(),
            activation: self.activation,
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Layer by layer: row-major weights, then biases.
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            v.extend(&l.weights);
            v.extend(&l.bias);
        }
        v
    }

    pub fn with_flat(&self, theta: &[f64]) -> Result<Self> {
        if theta.len() != self.param_count() {
            return Err(Error::Contract(format!(
                "parameter vector has length {}, network has {}",
                theta.len(),
                self.param_count()
            )));
        }
        let mut out = self.clone();
        let mut off = 0;
        for l in &mut out.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&theta[off..off + nw]);
            off += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&theta[off..off + nb]);
            off += nb;
        }
        Ok(out)
    }

    pub fn forward(&self, t: f64, x: f64) -> Result<f64> {
        let mut a = vec![t, x];
        let last = self.layers.len() - 1;
        for (li, l) in self.layers.iter().enumerate() {
            let mut z = l.bias.clone();
            for (i, zi) in z.iter_mut().enumerate() {
                let row = &l.weights[i * l.n_in..(i + 1) * l.n_in];
                *zi += row.iter().zip(&a).map(|(w, v)| w * v).sum::<f64>();
            }
            if li < last {
                for zi in z.iter_mut() {
                    *zi = self.activation.derivatives(*zi)[0];
                }
            }
            a = z;
        }
        finite(a[0], t, x)
    }

    pub fn forward_jets(&self, t: f64, x: f64) -> Result<Jet2> {
        let tape = self.record(t, x);
        let out = tape.output();
        if out.is_finite() {
            Ok(out)
        } else {
            Err(non_finite(t, x))
        }
    }

    fn record(&self, t: f64, x: f64) -> Tape {
        let input = JetVec {
            v: vec![t, x],
            t: vec![1.0, 0.0],
            x: vec![0.0, 1.0],
            xx: vec![0.0, 0.0],
        };
        let mut acts = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut a = input;
        let last = self.layers.len() - 1;
        for (li, l) in self.layers.iter().enumerate() {
            let z = affine(l, &a);
            if li < last {
                let mut next = JetVec::zeros(l.n_out);
                for i in 0..l.n_out {
                    let [s, d1, d2, _] = self.activation.derivatives(z.v[i]);
                    next.v[i] = s;
                    next.t[i] = d1 * z.t[i];
                    next.x[i] = d1 * z.x[i];
                    next.xx[i] = d2 * z.x[i] * z.x[i] + d1 * z.xx[i];
                }
                acts.push(a);
                pre.push(z);
                a = next;
            } else {
                acts.push(a);
                pre.push(z);
                break;
            }
        }
        Tape { acts, pre }
    }

    /// Accumulates `∂loss/∂θ` for one point into `grad`, given the adjoint
    /// of the output jet.
    fn backward(&self, tape: &Tape, seed: Jet2, grad: &mut [f64]) {
        let mut z = JetVec {
            v: vec![seed.value],
            t: vec![seed.d_t],
            x: vec![seed.d_x],
            xx: vec![seed.d_xx],
        };
        let offsets = self.offsets();
        for li in (0..self.layers.len()).rev() {
            let l = &self.layers[li];
            let a = &tape.acts[li];
            let off = offsets[li];
            for i in 0..l.n_out {
                let row = &mut grad[off + i * l.n_in..off + (i + 1) * l.n_in];
                let (zv, zt, zx, zxx) = (z.v[i], z.t[i], z.x[i], z.xx[i]);
                for j in 0..l.n_in {
                    row[j] += zv * a.v[j] + zt * a.t[j] + zx * a.x[j] + zxx * a.xx[j];
                }
                grad[off + l.n_in * l.n_out + i] += zv;
            }
            if li == 0 {
                break;
            }
            // adjoint of this layer's input jets
            let mut adj = JetVec::zeros(l.n_in);
            for i in 0..l.n_out {
                let row = &l.weights[i * l.n_in..(i + 1) * l.n_in];
                for j in 0..l.n_in {
                    adj.v[j] += row[j] * z.v[i];
                    adj.t[j] += row[j] * z.t[i];
                    adj.x[j] += row[j] * z.x[i];
                    adj.xx[j] += row[j] * z.xx[i];
                }
            }
            // through the activation of the previous layer
            let p = &tape.pre[li - 1];
            let mut next = JetVec::zeros(l.n_in);
            for j in 0..l.n_in {
                let [_, d1, d2, d3] = self.activation.derivatives(p.v[j]);
                next.v[j] = adj.v[j] * d1
                    + adj.t[j] * d2 * p.t[j]
                    + adj.x[j] * d2 * p.x[j]
                    + adj.xx[j] * (d3 * p.x[j] * p.x[j] + d2 * p.xx[j]);
                next.t[j] = adj.t[j] * d1;
                next.x[j] = adj.x[j] * d1 + adj.xx[j] * 2.0 * d2 * p.x[j];
                next.xx[j] = adj.xx[j] * d1;
            }
            z = next;
        }
    }

    fn offsets(&self) -> Vec<usize> {
        let mut off = 0;
        self.layers
            .iter()
            .map(|l| {
                let o = off;
                off += l.weights.len() + l.bias.len();
                o
            })
            .collect()
    }
}

const GRAD_CHUNK: usize = 8;

/// Gradient of a loss over the network's output jets at `points`.
///
/// `loss` receives the output jets in point order and returns the loss value
/// together with `∂loss/∂jet` for every point; points may be coupled (for
/// example a periodicity penalty between two boundary points). Returns the
/// loss and `∇θ loss` in [`MlpParams::flatten`] order. Per-chunk partial
/// gradients are summed in chunk order.
pub fn param_gradient<L>(params: &MlpParams, points: &[(f64, f64)], loss: L) -> Result<(f64, Vec<f64>)>
where
    L: FnOnce(&[Jet2]) -> (f64, Vec<Jet2>),
{
    if points.is_empty() {
        return Err(Error::Contract("gradient requested on an empty batch".into()));
    }
    let tapes = par::map(points, |&(t, x)| params.record(t, x));
    let outputs: Vec<Jet2> = tapes.iter().map(Tape::output).collect();
    if let Some(i) = outputs.iter().position(|j| !j.is_finite()) {
        return Err(non_finite(points[i].0, points[i].1));
    }
    let (value, seeds) = loss(&outputs);
    if seeds.len() != points.len() {
        return Err(Error::Contract(format!(
            "loss returned {} adjoints for {} points",
            seeds.len(),
            points.len()
        )));
    }
    let n = params.param_count();
    let pairs: Vec<(&Tape, Jet2)> = tapes.iter().zip(seeds).collect();
    let partials = par::map_chunks(&pairs, GRAD_CHUNK, |_, chunk| {
        let mut g = vec![0.0; n];
        for (tape, seed) in chunk {
            params.backward(tape, *seed, &mut g);
        }
        g
    });
    let mut grad = vec![0.0; n];
    for p in partials {
        for (g, v) in grad.iter_mut().zip(p) {
            *g += v;
        }
    }
    if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::Numeric("non-finite loss or gradient".into()));
    }
    Ok((value, grad))
}

#[derive(Debug, Clone)]
struct JetVec {
    v: Vec<f64>,
    t: Vec<f64>,
    x: Vec<f64>,
    xx: Vec<f64>,
}

impl JetVec {
    fn zeros(n: usize) -> Self {
        Self {
            v: vec![0.0; n],
            t: vec![0.0; n],
            x: vec![0.0; n],
            xx: vec![0.0; n],
        }
    }
}

fn affine(l: &DenseLayer, a: &JetVec) -> JetVec {
    let mut z = JetVec::zeros(l.n_out);
    for i in 0..l.n_out {
        let row = &l.weights[i * l.n_in..(i + 1) * l.n_in];
        let (mut v, mut t, mut x, mut xx) = (l.bias[i], 0.0, 0.0, 0.0);
        for j in 0..l.n_in {
            v += row[j] * a.v[j];
            t += row[j] * a.t[j];
            x += row[j] * a.x[j];
            xx += row[j] * a.xx[j];
        }
        z.v[i] = v;
        z.t[i] = t;
        z.x[i] = x;
        z.xx[i] = xx;
    }
    z
}

struct Tape {
    /// Input jets of each layer.
    acts: Vec<JetVec>,
    /// Pre-activation jets of each layer.
    pre: Vec<JetVec>,
}

impl Tape {
    fn output(&self) -> Jet2 {
        let z = self.pre.last().expect("tape has at least one layer");
        Jet2::new(z.v[0], z.t[0], z.x[0], z.xx[0])
    }
}

fn finite(v: f64, t: f64, x: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(non_finite(t, x))
    }
}

fn non_finite(t: f64, x: f64) -> Error {
    Error::Numeric(format!("non-finite network output at (t={t}, x={x})"))
}

/// On-disk model: architecture plus row-major matrices (one row per output
/// neuron).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub layer_sizes: Vec<usize>,
    pub activation: Activation,
    pub weights: Vec<Vec<Vec<f64>>>,
    pub biases: Vec<Vec<f64>>,
}

impl From<&MlpParams> for ModelFile {
    fn from(p: &MlpParams) -> Self {
        ModelFile {
            layer_sizes: p.architecture().layer_sizes,
            activation: p.activation,
            weights: p
                .layers
                .iter()
                .map(|l| l.weights.chunks(l.n_in).map(<[f64]>::to_vec).collect())
                .collect(),
            biases: p.layers.iter().map(|l| l.bias.clone()).collect(),
        }
    }
}

impl TryFrom<ModelFile> for MlpParams {
    type Error = Error;

    fn try_from(m: ModelFile) -> Result<Self> {
        let arch = MlpArchitecture {
            layer_sizes: m.layer_sizes,
            activation: m.activation,
        };
        arch.validate()?;
        let dims = arch.dims();
        if m.weights.len() != dims.len() - 1 || m.biases.len() != dims.len() - 1 {
            return Err(Error::Contract(
                "model file layer count does not match layer_sizes".into(),
            ));
        }
        let layers = dims
            .windows(2)
            .zip(m.weights.into_iter().zip(m.biases))
            .map(|(w, (rows, bias))| {
                if rows.len() != w[1] || rows.iter().any(|r| r.len() != w[0]) {
                    return Err(Error::Contract(format!("weight matrix is not {}x{}", w[1], w[0])));
                }
                DenseLayer::new(w[0], w[1], rows.concat(), bias)
            })
            .collect::<Result<Vec<_>>>()?;
        if layers
            .iter()
            .any(|l| l.weights.iter().chain(&l.bias).any(|v| !v.is_finite()))
        {
            return Err(Error::Numeric("model file contains non-finite parameters".into()));
        }
        MlpParams::from_layers(arch.activation, layers)
    }
}

impl MlpParams {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelFile::from(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: ModelFile = serde_json::from_str(s)?;
        m.try_into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear(a: f64, b: f64, c: f64) -> MlpParams {
        MlpParams::from_layers(
            Activation::Tanh,
            vec![DenseLayer::new(2, 1, vec![a, b], vec![c]).unwrap()],
        )
        .unwrap()
    }

    #[test]
    fn reference_architecture_parameter_count() {
        let arch = MlpArchitecture::new(vec![10, 20, 30]).unwrap();
        let expect = (2 * 10 + 10) + (10 * 20 + 20) + (20 * 30 + 30) + (30 + 1);
        assert_eq!(expect, 911);
        assert_eq!(arch.param_count(), expect);
        assert_eq!(init_params(&arch, 1).unwrap().param_count(), expect);
    }

    #[test]
    fn init_is_deterministic_with_zero_biases() {
        let arch = MlpArchitecture::new(vec![5, 4]).unwrap();
        let a = init_params(&arch, 9).unwrap();
        assert_eq!(a, init_params(&arch, 9).unwrap());
        assert_ne!(a, init_params(&arch, 10).unwrap());
        assert!(a.layers.iter().all(|l| l.bias.iter().all(|&b| b == 0.0)));
    }

    #[test]
    fn invalid_architectures_rejected() {
        assert!(MlpArchitecture::new(vec![]).is_err());
        assert!(MlpArchitecture::new(vec![3, 0]).is_err());
    }

    #[test]
    fn zero_network_outputs_zero() {
        let arch = MlpArchitecture::new(vec![4, 3]).unwrap();
        let p = init_params(&arch, 1).unwrap();
        let z = p.with_flat(&vec![0.0; p.param_count()]).unwrap();
        assert_eq!(z.forward(0.3, 2.0).unwrap(), 0.0);
        assert_eq!(z.forward_jets(0.3, 2.0).unwrap(), Jet2::constant(0.0));
    }

    #[test]
    fn linear_network() {
        let p = linear(1.5, -2.0, 0.25);
        assert_eq!(p.forward(2.0, 3.0).unwrap(), 1.5 * 2.0 - 2.0 * 3.0 + 0.25);
        let j = p.forward_jets(2.0, 3.0).unwrap();
        assert_eq!((j.d_t, j.d_x, j.d_xx), (1.5, -2.0, 0.0));
    }

    #[test]
    fn constant_network_has_zero_derivatives() {
        let arch = MlpArchitecture::new(vec![3]).unwrap();
        let mut p = init_params(&arch, 2).unwrap();
        p.layers[1].weights.iter_mut().for_each(|w| *w = 0.0);
        p.layers[1].bias[0] = 4.0;
        let j = p.forward_jets(0.1, 1.0).unwrap();
        assert_eq!(j, Jet2::constant(4.0));
    }

    #[test]
    fn single_neuron_matches_finite_differences() {
        let layers = vec![
            DenseLayer::new(2, 1, vec![0.7, -1.3], vec![0.2]).unwrap(),
            DenseLayer::new(1, 1, vec![1.1], vec![-0.4]).unwrap(),
        ];
        let p = MlpParams::from_layers(Activation::Tanh, layers).unwrap();
        let (t, x, h) = (0.2, 0.9, 1e-4);
        let f = |t, x| p.forward(t, x).unwrap();
        let j = p.forward_jets(t, x).unwrap();
        let ft = (f(t + h, x) - f(t - h, x)) / (2.0 * h);
        let fx = (f(t, x + h) - f(t, x - h)) / (2.0 * h);
        let fxx = (f(t, x + h) - 2.0 * f(t, x) + f(t, x - h)) / (h * h);
        for (a, b) in [(j.d_t, ft), (j.d_x, fx), (j.d_xx, fxx)] {
            assert!((a - b).abs() <= 1e-6 * b.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn sigmoid_derivatives_match_jet_chain() {
        let layers = vec![
            DenseLayer::new(2, 2, vec![0.5, 0.3, -0.8, 1.2], vec![0.1, -0.2]).unwrap(),
            DenseLayer::new(2, 1, vec![1.0, -0.7], vec![0.0]).unwrap(),
        ];
        let p = MlpParams::from_layers(Activation::Sigmoid, layers).unwrap();
        let (t, x) = (0.4, 1.3);
        let sig = |j: Jet2| {
            let s = 1.0 / (1.0 + (-j.value).exp());
            let d1 = s * (1.0 - s);
            j.chain(s, d1, d1 * (1.0 - 2.0 * s))
        };
        let (jt, jx) = (Jet2::var_t(t), Jet2::var_x(x));
        let h0 = sig(jt * 0.5 + jx * 0.3 + 0.1);
        let h1 = sig(jt * -0.8 + jx * 1.2 + -0.2);
        let expect = h0 - h1 * 0.7;
        let got = p.forward_jets(t, x).unwrap();
        for (a, b) in [
            (got.value, expect.value),
            (got.d_t, expect.d_t),
            (got.d_x, expect.d_x),
            (got.d_xx, expect.d_xx),
        ] {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_residual_gives_zero_gradient() {
        let p = linear(0.0, 0.0, 3.0);
        let (g, grad) = param_gradient(&p, &[(0.1, 0.2)], |out| {
            let r = out[0].value - 3.0;
            (r * r, vec![Jet2::constant(2.0 * r)])
        })
        .unwrap();
        assert_eq!(g, 0.0);
        assert!(grad.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn empty_batch_is_rejected() {
        let p = linear(1.0, 1.0, 0.0);
        assert!(param_gradient(&p, &[], |_| (0.0, vec![])).is_err());
    }

    #[test]
    fn model_json_roundtrip_and_field_order() {
        let arch = MlpArchitecture::new(vec![3, 2]).unwrap();
        let p = init_params(&arch, 5).unwrap();
        let s = p.to_json().unwrap();
        let pos: Vec<usize> = ["layer_sizes", "activation", "weights", "biases"]
            .iter()
            .map(|k| s.find(&format!("\"{k}\"")).unwrap())
            .collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(MlpParams::from_json(&s).unwrap(), p);
    }

    #[test]
    fn malformed_model_file_rejected() {
        let bad = r#"{"layer_sizes":[2],"activation":"tanh","weights":[[[1,2]],[[1,2]]],"biases":[[0,0],[0]]}"#;
        assert!(MlpParams::from_json(bad).is_err());
    }
}
