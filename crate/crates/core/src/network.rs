//! Atomistic fully connected network.
//!
//! The same dense stack maps every atom's feature row to a scalar atomic
//! energy. Hidden layers use a configurable activation followed by inverted
//! dropout in training mode; the output layer is affine.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{AcnnError, Result};
use crate::numeric::CompensatedVec;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayerParams {
    pub d_in: usize,
    pub d_out: usize,
    /// Row-major `(d_in, d_out)`.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl DenseLayerParams {
    pub fn zeros(d_in: usize, d_out: usize) -> Self {
        Self {
            d_in,
            d_out,
            weights: vec![0.0; d_in * d_out],
            biases: vec![0.0; d_out],
        }
    }

    fn affine(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.biases);
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let row = &self.weights[i * self.d_out..(i + 1) * self.d_out];
            for (o, &w) in out.iter_mut().zip(row) {
                *o += xi * w;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation.
    fn deriv(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = AcnnError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            other => Err(AcnnError::Config(format!("unknown activation {other:?}"))),
        }
    }
}

impl std::fmt::Display for Activation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AtomicNetParams {
    pub layers: Vec<DenseLayerParams>,
    pub dropout_p: f64,
    pub activation: Activation,
}

impl AtomicNetParams {
    pub fn d_in(&self) -> usize {
        self.layers[0].d_in
    }

    pub fn validate(&self) -> Result<()> {
        let Some(last) = self.layers.last() else {
            return Err(AcnnError::ShapeMismatch("network has no layers".into()));
        };
        if last.d_out != 1 {
            return Err(AcnnError::ShapeMismatch(format!(
                "final layer must have one output, has {}",
                last.d_out
            )));
        }
        for (k, l) in self.layers.iter().enumerate() {
            if l.weights.len() != l.d_in * l.d_out || l.biases.len() != l.d_out {
                return Err(AcnnError::ShapeMismatch(format!(
                    "layer {k} storage does not match its shape"
                )));
            }
            if k > 0 && self.layers[k - 1].d_out != l.d_in {
                return Err(AcnnError::ShapeMismatch(format!(
                    "layer {k} expects {} inputs but previous layer emits {}",
                    l.d_in,
                    self.layers[k - 1].d_out
                )));
            }
            if l.weights.iter().chain(&l.biases).any(|v| !v.is_finite()) {
                return Err(AcnnError::InvalidParameter(format!("layer {k} has non-finite values")));
            }
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(AcnnError::InvalidParameter(format!(
                "dropout probability {} outside [0, 1)",
                self.dropout_p
            )));
        }
        Ok(())
    }

    /// Hidden widths, excluding the final single-output layer.
    pub fn hidden_sizes(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1].iter().map(|l| l.d_out).collect()
    }

    pub fn zeros_like(&self) -> Vec<DenseLayerParams> {
        self.layers
            .iter()
            .map(|l| DenseLayerParams::zeros(l.d_in, l.d_out))
            .collect()
    }
}

/// Glorot-uniform weights and zero biases for `d_in -> hidden... -> 1`.
pub fn init_params(hidden: &[usize], d_in: usize, seed: u64) -> Result<AtomicNetParams> {
    if hidden.is_empty() {
        return Err(AcnnError::InvalidParameter("layer sizes must be non-empty".into()));
    }
    if d_in == 0 || hidden.contains(&0) {
        return Err(AcnnError::InvalidParameter("layer widths must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dims = vec![d_in];
    dims.extend_from_slice(hidden);
    dims.push(1);
    let layers = dims
        .windows(2)
        .map(|w| {
            let limit = (6.0 / (w[0] + w[1]) as f64).sqrt();
            let mut l = DenseLayerParams::zeros(w[0], w[1]);
            for v in &mut l.weights {
                *v = rng.gen_range(-limit..=limit);
            }
            l
        })
        .collect();
    Ok(AtomicNetParams {
        layers,
        dropout_p: 0.0,
        activation: Activation::Relu,
    })
}

/// Intermediate values kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    n_atoms: usize,
    /// Input to each layer, `(N, d_in)`.
    inputs: Vec<Vec<f64>>,
    /// Pre-activations of each hidden layer, `(N, d_out)`.
    pre: Vec<Vec<f64>>,
    /// Dropout scale per hidden unit, empty in eval mode.
    dropout: Vec<Vec<f64>>,
}

impl ForwardCache {
    /// Hidden-layer pre-activations, one `(N, d_out)` block per layer.
    pub fn pre_activations(&self) -> &[Vec<f64>] {
        &self.pre
    }
}

/// Per-atom energies for an `(n_atoms, d_in)` feature matrix.
///
/// `rng` is consulted only in training mode with non-zero dropout.
pub fn atomic_forward(
    features: &[f64],
    n_atoms: usize,
    params: &AtomicNetParams,
    mode: Mode,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<(Vec<f64>, ForwardCache)> {
    let d_in = params.d_in();
    if features.len() != n_atoms * d_in {
        return Err(AcnnError::ShapeMismatch(format!(
            "features have {} values, expected {n_atoms} x {d_in}",
            features.len()
        )));
    }
    let use_dropout = mode == Mode::Train && params.dropout_p > 0.0;
    let mut rng = rng;
    if use_dropout && rng.is_none() {
        return Err(AcnnError::InvalidParameter("training-mode dropout needs an rng".into()));
    }
    let keep = 1.0 - params.dropout_p;
    let n_layers = params.layers.len();
    let mut cache = ForwardCache {
        n_atoms,
        inputs: Vec::with_capacity(n_layers),
        pre: Vec::with_capacity(n_layers - 1),
        dropout: Vec::new(),
    };
    let mut x = features.to_vec();
    for (k, layer) in params.layers.iter().enumerate() {
        let mut z = vec![0.0; n_atoms * layer.d_out];
        for i in 0..n_atoms {
            layer.affine(
                &x[i * layer.d_in..(i + 1) * layer.d_in],
                &mut z[i * layer.d_out..(i + 1) * layer.d_out],
            );
        }
        cache.inputs.push(std::mem::take(&mut x));
        if k + 1 == n_layers {
            return Ok((z, cache));
        }
        let mut h: Vec<f64> = z.iter().map(|&v| params.activation.apply(v)).collect();
        if use_dropout {
            let r = rng.as_deref_mut().expect("checked above");
            let scale: Vec<f64> = (0..h.len())
                .map(|_| if r.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
                .collect();
            for (v, s) in h.iter_mut().zip(&scale) {
                *v *= s;
            }
            cache.dropout.push(scale);
        }
        cache.pre.push(z);
        x = h;
    }
    unreachable!("network has a final layer")
}

/// Layer gradients summed over atoms, and over successive backward calls,
/// with compensated summation.
#[derive(Debug, Clone)]
pub struct LayerGradAccumulator {
    weights: Vec<CompensatedVec>,
    biases: Vec<CompensatedVec>,
}

impl LayerGradAccumulator {
    pub fn new(params: &AtomicNetParams) -> Self {
        Self {
            weights: params
                .layers
                .iter()
                .map(|l| CompensatedVec::zeros(l.weights.len()))
                .collect(),
            biases: params
                .layers
                .iter()
                .map(|l| CompensatedVec::zeros(l.biases.len()))
                .collect(),
        }
    }

    pub fn finish(&self, params: &AtomicNetParams) -> Vec<DenseLayerParams> {
        params
            .layers
            .iter()
            .zip(self.weights.iter().zip(&self.biases))
            .map(|(l, (w, b))| DenseLayerParams {
                d_in: l.d_in,
                d_out: l.d_out,
                weights: w.finish(),
                biases: b.finish(),
            })
            .collect()
    }
}

/// Back-propagate per-atom energy gradients. Returns parameter gradients
/// (shaped like `params.layers`) and the gradient with respect to the
/// input features.
pub fn atomic_backward(
    params: &AtomicNetParams,
    cache: &ForwardCache,
    d_energy: &[f64],
) -> (Vec<DenseLayerParams>, Vec<f64>) {
    let mut acc = LayerGradAccumulator::new(params);
    let d_features = atomic_backward_into(params, cache, d_energy, &mut acc);
    (acc.finish(params), d_features)
}

/// As [`atomic_backward`], adding the parameter gradients into `acc`.
pub fn atomic_backward_into(
    params: &AtomicNetParams,
    cache: &ForwardCache,
    d_energy: &[f64],
    acc: &mut LayerGradAccumulator,
) -> Vec<f64> {
    let n = cache.n_atoms;
    let mut delta = d_energy.to_vec();
    for k in (0..params.layers.len()).rev() {
        let layer = &params.layers[k];
        let input = &cache.inputs[k];
        let (gw, gb) = (&mut acc.weights[k], &mut acc.biases[k]);
        let mut d_input = vec![0.0; n * layer.d_in];
        for i in 0..n {
            let dz = &delta[i * layer.d_out..(i + 1) * layer.d_out];
            let x = &input[i * layer.d_in..(i + 1) * layer.d_in];
            gb.add_slice(dz);
            let dx = &mut d_input[i * layer.d_in..(i + 1) * layer.d_in];
            for p in 0..layer.d_in {
                let row = p * layer.d_out;
                let w_row = &layer.weights[row..row + layer.d_out];
                let mut s = 0.0;
                for o in 0..layer.d_out {
                    gw.add(row + o, x[p] * dz[o]);
                    s += w_row[o] * dz[o];
                }
                dx[p] = s;
            }
        }
        if k == 0 {
            return d_input;
        }
        let pre = &cache.pre[k - 1];
        for (idx, d) in d_input.iter_mut().enumerate() {
            if let Some(scale) = cache.dropout.get(k - 1) {
                *d *= scale[idx];
            }
            *d *= params.activation.deriv(pre[idx]);
        }
        delta = d_input;
    }
    unreachable!("network has at least one layer")
}

/// Sum of atomic energies in index order.
pub fn total_energy(per_atom: &[f64]) -> f64 {
    per_atom.iter().sum()
}
