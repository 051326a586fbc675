//! Atom type convolution and radial pooling.
//!
//! The atom type convolution spreads the neighbor distance matrix into one
//! channel per vocabulary atomic number; radial pooling sums Gaussian radial
//! filters over each channel, producing an `(N, N_at, N_r)` feature block.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{AcnnError, Result};
use crate::geometry::NeighborContext;

/// Lower bound on filter widths, Angstrom.
pub const SIGMA_MIN: f64 = 1e-3;

/// Distances below this are treated as coincident atoms.
pub const COINCIDENT_TOLERANCE: f64 = 1e-6;

/// Ordered atomic numbers, one per convolution channel.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AtomTypeVocabulary {
    types: Vec<u8>,
}

impl AtomTypeVocabulary {
    pub fn new(types: Vec<u8>) -> Result<Self> {
        if types.is_empty() {
            return Err(AcnnError::InvalidParameter("atom type vocabulary is empty".into()));
        }
        for (k, &z) in types.iter().enumerate() {
            if !(1..=118).contains(&z) {
                return Err(AcnnError::InvalidParameter(format!("atomic number {z} out of range")));
            }
            if types[..k].contains(&z) {
                return Err(AcnnError::InvalidParameter(format!("atomic number {z} repeated")));
            }
        }
        Ok(Self { types })
    }

    /// The `n_types` most frequent atomic numbers (ties by ascending atomic
    /// number). When fewer distinct elements occur, the remaining channels
    /// are filled with the smallest unused atomic numbers so the feature
    /// width stays fixed.
    pub fn most_frequent<'a>(atomic_numbers: impl IntoIterator<Item = &'a [u8]>, n_types: usize) -> Result<Self> {
        let mut counts = [0usize; 119];
        for zs in atomic_numbers {
            for &z in zs {
                counts[z as usize] += 1;
            }
        }
        let mut present: Vec<u8> = (1..=118u8).filter(|&z| counts[z as usize] > 0).collect();
        present.sort_by(|&a, &b| counts[b as usize].cmp(&counts[a as usize]).then(a.cmp(&b)));
        present.truncate(n_types);
        let mut filler = (1..=118u8).filter(|&z| counts[z as usize] == 0);
        while present.len() < n_types {
            match filler.next() {
                Some(z) => present.push(z),
                None => break,
            }
        }
        Self::new(present)
    }

    pub fn types(&self) -> &[u8] {
        &self.types
    }

    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }

    pub fn channel_of(&self, z: u8) -> Option<usize> {
        self.types.iter().position(|&t| t == z)
    }
}

/// Where the cutoff function enters the radial filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum FcMode {
    /// `exp(-(r - r_s)^2 / s^2) * fc(r)`; vanishes beyond the cutoff.
    #[default]
    Multiplicative,
    /// `exp(-(r - r_s)^2 / s^2 * fc(r))`; equals 1 beyond the cutoff.
    Exponent,
}

impl std::str::FromStr for FcMode {
    type Err = AcnnError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "multiplicative" => Ok(FcMode::Multiplicative),
            "exponent" => Ok(FcMode::Exponent),
            other => Err(AcnnError::Config(format!("unknown fc mode {other:?}"))),
        }
    }
}

impl std::fmt::Display for FcMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FcMode::Multiplicative => "multiplicative",
            FcMode::Exponent => "exponent",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialFilterParams {
    /// Learnable filter centers, Angstrom.
    pub r_s: Vec<f64>,
    /// Learnable filter widths, Angstrom.
    pub sigma_s: Vec<f64>,
    pub beta: Vec<f64>,
    pub bias: Vec<f64>,
    pub cutoff: f64,
    pub mode: FcMode,
}

impl RadialFilterParams {
    /// Centers evenly spaced on `[0, cutoff (n-1)/n]`, widths equal to the
    /// spacing `cutoff / n`, unit scale and zero bias.
    pub fn initial(n_filters: usize, cutoff: f64, mode: FcMode) -> Result<Self> {
        if n_filters == 0 {
            return Err(AcnnError::InvalidParameter("need at least one radial filter".into()));
        }
        let spacing = cutoff / n_filters as f64;
        let params = Self {
            r_s: (0..n_filters).map(|k| k as f64 * spacing).collect(),
            sigma_s: vec![spacing; n_filters],
            beta: vec![1.0; n_filters],
            bias: vec![0.0; n_filters],
            cutoff,
            mode,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn n_filters(&self) -> usize {
        self.r_s.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.r_s.len();
        if n == 0 {
            return Err(AcnnError::InvalidParameter("need at least one radial filter".into()));
        }
        if self.sigma_s.len() != n || self.beta.len() != n || self.bias.len() != n {
            return Err(AcnnError::ShapeMismatch(
                "radial parameter lists differ in length".into(),
            ));
        }
        if !(self.cutoff > 0.0 && self.cutoff.is_finite()) {
            return Err(AcnnError::InvalidParameter(format!(
                "cutoff {} must be positive",
                self.cutoff
            )));
        }
        if self.sigma_s.iter().any(|&s| s.is_nan() || s < SIGMA_MIN) {
            return Err(AcnnError::InvalidParameter(format!("sigma_s below {SIGMA_MIN}")));
        }
        Ok(())
    }

    /// Project widths back onto `sigma >= SIGMA_MIN`.
    pub fn clamp_sigma(&mut self) {
        for s in &mut self.sigma_s {
            if s.is_nan() || *s < SIGMA_MIN {
                *s = SIGMA_MIN;
            }
        }
    }
}

/// `0.5 cos(pi r / cutoff)` strictly inside `(0, cutoff)`, zero elsewhere.
pub fn cutoff_fn(r: f64, cutoff: f64) -> f64 {
    if r > 0.0 && r < cutoff {
        0.5 * (PI * r / cutoff).cos()
    } else {
        0.0
    }
}

fn cutoff_fn_deriv(r: f64, cutoff: f64) -> f64 {
    if r > 0.0 && r < cutoff {
        -0.5 * PI / cutoff * (PI * r / cutoff).sin()
    } else {
        0.0
    }
}

pub fn radial_filter(r: f64, r_s: f64, sigma_s: f64, cutoff: f64, mode: FcMode) -> f64 {
    let q = (r - r_s) * (r - r_s) / (sigma_s * sigma_s);
    let fc = cutoff_fn(r, cutoff);
    match mode {
        FcMode::Multiplicative => (-q).exp() * fc,
        FcMode::Exponent => (-q * fc).exp(),
    }
}

/// Filter value with its partials `(f, df/dr, df/dr_s, df/dsigma_s)`.
pub(crate) fn radial_filter_grad(r: f64, r_s: f64, sigma: f64, cutoff: f64, mode: FcMode) -> (f64, f64, f64, f64) {
    let diff = r - r_s;
    let s2 = sigma * sigma;
    let q = diff * diff / s2;
    let fc = cutoff_fn(r, cutoff);
    let dfc = cutoff_fn_deriv(r, cutoff);
    match mode {
        FcMode::Multiplicative => {
            let g = (-q).exp();
            let f = g * fc;
            let d_r = g * dfc - f * 2.0 * diff / s2;
            let d_rs = f * 2.0 * diff / s2;
            let d_sigma = f * 2.0 * diff * diff / (s2 * sigma);
            (f, d_r, d_rs, d_sigma)
        }
        FcMode::Exponent => {
            let f = (-q * fc).exp();
            let d_r = -f * (2.0 * diff / s2 * fc + q * dfc);
            let d_rs = f * 2.0 * diff * fc / s2;
            let d_sigma = f * 2.0 * diff * diff * fc / (s2 * sigma);
            (f, d_r, d_rs, d_sigma)
        }
    }
}

/// Output of the atom type convolution, stored as the channel index of each
/// neighbor slot. The dense tensor `E[i, j, a]` equals the slot distance on
/// its own channel and zero on all others.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomTypeConv {
    n_atoms: usize,
    max_neighbors: usize,
    n_types: usize,
    channel: Vec<Option<u16>>,
    distances: Vec<f64>,
    valid: Vec<bool>,
    /// Valid neighbor slots whose atomic number is outside the vocabulary.
    dropped: usize,
}

impl AtomTypeConv {
    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    pub fn max_neighbors(&self) -> usize {
        self.max_neighbors
    }

    pub fn n_types(&self) -> usize {
        self.n_types
    }

    pub fn dropped_slots(&self) -> usize {
        self.dropped
    }

    pub fn mask(&self) -> &[bool] {
        &self.valid
    }

    pub fn get(&self, atom: usize, j: usize, a: usize) -> f64 {
        let s = atom * self.max_neighbors + j;
        match self.channel[s] {
            Some(c) if c as usize == a && self.valid[s] => self.distances[s],
            _ => 0.0,
        }
    }

    /// Dense row-major `(N, M, N_at)` tensor.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut e = vec![0.0; self.n_atoms * self.max_neighbors * self.n_types];
        for s in 0..self.channel.len() {
            if let (Some(c), true) = (self.channel[s], self.valid[s]) {
                e[s * self.n_types + c as usize] = self.distances[s];
            }
        }
        e
    }

    /// Iterate `(atom, slot, channel, distance)` over populated entries.
    fn entries(&self) -> impl Iterator<Item = (usize, usize, usize, f64)> + '_ {
        (0..self.channel.len()).filter_map(move |s| match self.channel[s] {
            Some(c) if self.valid[s] && self.distances[s] > 0.0 => {
                Some((s / self.max_neighbors, s, c as usize, self.distances[s]))
            }
            _ => None,
        })
    }
}

pub fn atom_type_conv(ctx: &NeighborContext, vocab: &AtomTypeVocabulary) -> Result<AtomTypeConv> {
    let slots = ctx.n_atoms() * ctx.max_neighbors();
    let mut channel = Vec::with_capacity(slots);
    let mut dropped = 0;
    for s in 0..slots {
        if !ctx.valid()[s] {
            channel.push(None);
            continue;
        }
        let r = ctx.distances()[s];
        if r < COINCIDENT_TOLERANCE {
            return Err(AcnnError::CoincidentAtoms {
                atom: s / ctx.max_neighbors(),
                neighbor: ctx.neighbor_index()[s] as usize,
                distance: r,
            });
        }
        let c = vocab.channel_of(ctx.neighbor_types()[s]);
        if c.is_none() {
            dropped += 1;
        }
        channel.push(c.map(|c| c as u16));
    }
    Ok(AtomTypeConv {
        n_atoms: ctx.n_atoms(),
        max_neighbors: ctx.max_neighbors(),
        n_types: vocab.len(),
        channel,
        distances: ctx.distances().to_vec(),
        valid: ctx.valid().to_vec(),
        dropped,
    })
}

/// Pooled per-atom features `P[i, a, k]`, row-major with `k` fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    n_atoms: usize,
    n_types: usize,
    n_filters: usize,
    data: Vec<f64>,
}

impl FeatureTensor {
    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    pub fn n_types(&self) -> usize {
        self.n_types
    }

    pub fn n_filters(&self) -> usize {
        self.n_filters
    }

    /// Flattened width `N_at * N_r`.
    pub fn width(&self) -> usize {
        self.n_types * self.n_filters
    }

    pub fn get(&self, atom: usize, a: usize, k: usize) -> f64 {
        self.data[(atom * self.n_types + a) * self.n_filters + k]
    }

    pub fn row(&self, atom: usize) -> &[f64] {
        let w = self.width();
        &self.data[atom * w..(atom + 1) * w]
    }

    /// Flattened `(N, N_at * N_r)` matrix, row-major.
    pub fn as_matrix(&self) -> &[f64] {
        &self.data
    }
}

pub fn radial_pool(conv: &AtomTypeConv, params: &RadialFilterParams) -> FeatureTensor {
    let n_r = params.n_filters();
    let n_at = conv.n_types;
    let mut data = vec![0.0; conv.n_atoms * n_at * n_r];
    for (i, _, a, r) in conv.entries() {
        let base = (i * n_at + a) * n_r;
        for k in 0..n_r {
            data[base + k] += radial_filter(r, params.r_s[k], params.sigma_s[k], params.cutoff, params.mode);
        }
    }
    for (idx, v) in data.iter_mut().enumerate() {
        let k = idx % n_r;
        *v = params.beta[k] * *v + params.bias[k];
    }
    FeatureTensor {
        n_atoms: conv.n_atoms,
        n_types: n_at,
        n_filters: n_r,
        data,
    }
}

/// Gradients flowing out of radial pooling.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolGrads {
    pub r_s: Vec<f64>,
    pub sigma_s: Vec<f64>,
    /// Gradient with respect to each neighbor slot distance, `(N, M)`.
    pub distances: Vec<f64>,
}

/// Back-propagate `d_features` (same layout as [`FeatureTensor::as_matrix`])
/// through radial pooling.
pub fn radial_pool_backward(conv: &AtomTypeConv, params: &RadialFilterParams, d_features: &[f64]) -> PoolGrads {
    let n_r = params.n_filters();
    let n_at = conv.n_types;
    let mut grads = PoolGrads {
        r_s: vec![0.0; n_r],
        sigma_s: vec![0.0; n_r],
        distances: vec![0.0; conv.channel.len()],
    };
    for (i, s, a, r) in conv.entries() {
        let base = (i * n_at + a) * n_r;
        for k in 0..n_r {
            let upstream = d_features[base + k] * params.beta[k];
            if upstream == 0.0 {
                continue;
            }
            let (_, d_r, d_rs, d_sigma) =
                radial_filter_grad(r, params.r_s[k], params.sigma_s[k], params.cutoff, params.mode);
            grads.r_s[k] += upstream * d_rs;
            grads.sigma_s[k] += upstream * d_sigma;
            grads.distances[s] += upstream * d_r;
        }
    }
    grads
}
