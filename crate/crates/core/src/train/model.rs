use rand_chacha::ChaCha8Rng;

use crate::error::{AcnnError, Result};
use crate::featurize::{
    atom_type_conv, radial_pool, radial_pool_backward, AtomTypeConv, AtomTypeVocabulary, FcMode, RadialFilterParams,
};
use crate::geometry::{build_neighbor_context, merge_systems, NeighborContext};
use crate::network::{
    atomic_backward_into, atomic_forward, init_params, total_energy, Activation, AtomicNetParams, DenseLayerParams,
    ForwardCache, LayerGradAccumulator, Mode,
};
use crate::numeric::CompensatedVec;
use crate::structio::MolecularSystem;

/// Architecture hyperparameters, everything needed to build fresh params
/// apart from the vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub n_types: usize,
    pub n_filters: usize,
    pub hidden: Vec<usize>,
    pub cutoff: f64,
    pub max_neighbors: usize,
    pub fc_mode: FcMode,
    pub activation: Activation,
    pub dropout_p: f64,
}

impl ModelConfig {
    /// 15 atom types, 3 radial filters, (32, 32, 16) network.
    pub fn core() -> Self {
        Self {
            n_types: 15,
            n_filters: 3,
            hidden: vec![32, 32, 16],
            cutoff: crate::geometry::DEFAULT_CUTOFF,
            max_neighbors: crate::geometry::DEFAULT_MAX_NEIGHBORS,
            fc_mode: FcMode::Multiplicative,
            activation: Activation::Relu,
            dropout_p: 0.0,
        }
    }

    /// 25 atom types, 5 radial filters, (128, 128, 64) network, 40% dropout.
    pub fn refined() -> Self {
        Self {
            n_types: 25,
            n_filters: 5,
            hidden: vec![128, 128, 64],
            dropout_p: 0.4,
            ..Self::core()
        }
    }
}

/// Parameters shared by the complex, protein and ligand replicas.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub radial: RadialFilterParams,
    pub net: AtomicNetParams,
    pub vocab: AtomTypeVocabulary,
    pub max_neighbors: usize,
}

impl ModelParams {
    pub fn new(
        vocab: AtomTypeVocabulary,
        radial: RadialFilterParams,
        net: AtomicNetParams,
        max_neighbors: usize,
    ) -> Result<Self> {
        let p = Self {
            radial,
            net,
            vocab,
            max_neighbors,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn initial(vocab: AtomTypeVocabulary, config: &ModelConfig, seed: u64) -> Result<Self> {
        let radial = RadialFilterParams::initial(config.n_filters, config.cutoff, config.fc_mode)?;
        let mut net = init_params(&config.hidden, vocab.len() * config.n_filters, seed)?;
        net.activation = config.activation;
        net.dropout_p = config.dropout_p;
        Self::new(vocab, radial, net, config.max_neighbors)
    }

    pub fn validate(&self) -> Result<()> {
        self.radial.validate()?;
        self.net.validate()?;
        if self.max_neighbors == 0 {
            return Err(AcnnError::InvalidParameter("max_neighbors must be at least 1".into()));
        }
        let width = self.vocab.len() * self.radial.n_filters();
        if self.net.d_in() != width {
            return Err(AcnnError::ShapeMismatch(format!(
                "network takes {} inputs but featurization yields {} x {} = {width}",
                self.net.d_in(),
                self.vocab.len(),
                self.radial.n_filters()
            )));
        }
        Ok(())
    }

    pub fn cutoff(&self) -> f64 {
        self.radial.cutoff
    }

    /// Learnable scalars in a fixed order: `r_s`, `sigma_s`, then each
    /// layer's weights and biases.
    pub fn learnables(&self) -> Vec<&[f64]> {
        let mut v: Vec<&[f64]> = vec![&self.radial.r_s, &self.radial.sigma_s];
        for l in &self.net.layers {
            v.push(&l.weights);
            v.push(&l.biases);
        }
        v
    }

    pub fn learnables_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v: Vec<&mut [f64]> = vec![&mut self.radial.r_s, &mut self.radial.sigma_s];
        for l in &mut self.net.layers {
            v.push(&mut l.weights);
            v.push(&mut l.biases);
        }
        v
    }

    pub fn n_learnable(&self) -> usize {
        self.learnables().iter().map(|s| s.len()).sum()
    }

    /// Neighbor context using this model's cutoff and neighbor count.
    pub fn neighbor_context(&self, system: &MolecularSystem) -> Result<NeighborContext> {
        build_neighbor_context(system, self.cutoff(), self.max_neighbors)
    }

    /// Neighbor list plus atom type convolution, which is all that can be
    /// cached for a structure while radial parameters are still learning.
    pub fn prepare(&self, system: &MolecularSystem) -> Result<AtomTypeConv> {
        atom_type_conv(&self.neighbor_context(system)?, &self.vocab)
    }
}

/// Gradient of a scalar with respect to every learnable, shaped like
/// [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub r_s: Vec<f64>,
    pub sigma_s: Vec<f64>,
    pub layers: Vec<DenseLayerParams>,
}

impl Gradients {
    pub fn zeros(params: &ModelParams) -> Self {
        let n = params.radial.n_filters();
        Self {
            r_s: vec![0.0; n],
            sigma_s: vec![0.0; n],
            layers: params.net.zeros_like(),
        }
    }

    /// Same order as [`ModelParams::learnables`].
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut v: Vec<&[f64]> = vec![&self.r_s, &self.sigma_s];
        for l in &self.layers {
            v.push(&l.weights);
            v.push(&l.biases);
        }
        v
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v: Vec<&mut [f64]> = vec![&mut self.r_s, &mut self.sigma_s];
        for l in &mut self.layers {
            v.push(&mut l.weights);
            v.push(&mut l.biases);
        }
        v
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &Gradients, scale: f64) {
        for (dst, src) in self.slices_mut().into_iter().zip(other.slices()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += scale * s;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for s in self.slices_mut() {
            s.iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.slices().concat()
    }
}

/// Forward state of one replica pass.
pub(crate) struct EnergyPass {
    pub energy: f64,
    cache: ForwardCache,
}

pub(crate) fn energy_forward(
    conv: &AtomTypeConv,
    params: &ModelParams,
    mode: Mode,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<EnergyPass> {
    let features = radial_pool(conv, &params.radial);
    let (per_atom, cache) = atomic_forward(features.as_matrix(), features.n_atoms(), &params.net, mode, rng)?;
    Ok(EnergyPass {
        energy: total_energy(&per_atom),
        cache,
    })
}

/// Parameter gradients under construction, compensated so that replica
/// contributions cancel cleanly.
pub(crate) struct GradAccumulator {
    r_s: CompensatedVec,
    sigma_s: CompensatedVec,
    net: LayerGradAccumulator,
}

impl GradAccumulator {
    pub fn new(params: &ModelParams) -> Self {
        let n = params.radial.n_filters();
        Self {
            r_s: CompensatedVec::zeros(n),
            sigma_s: CompensatedVec::zeros(n),
            net: LayerGradAccumulator::new(&params.net),
        }
    }

    pub fn finish(&self, params: &ModelParams) -> Gradients {
        Gradients {
            r_s: self.r_s.finish(),
            sigma_s: self.sigma_s.finish(),
            layers: self.net.finish(&params.net),
        }
    }
}

/// Accumulate `upstream * dG/dtheta` into `acc`; returns `dG/dR` per
/// neighbor slot scaled by `upstream`.
pub(crate) fn energy_backward(
    conv: &AtomTypeConv,
    params: &ModelParams,
    pass: &EnergyPass,
    upstream: f64,
    acc: &mut GradAccumulator,
) -> Vec<f64> {
    let d_energy = vec![upstream; conv.n_atoms()];
    let d_features = atomic_backward_into(&params.net, &pass.cache, &d_energy, &mut acc.net);
    let pool = radial_pool_backward(conv, &params.radial, &d_features);
    acc.r_s.add_slice(&pool.r_s);
    acc.sigma_s.add_slice(&pool.sigma_s);
    pool.distances
}

/// Molecular energy `G = sum_i E_i` of one system (eval mode).
pub fn system_energy(system: &MolecularSystem, params: &ModelParams) -> Result<f64> {
    let conv = params.prepare(system)?;
    Ok(energy_forward(&conv, params, Mode::Eval, None)?.energy)
}

/// Featurization cache for one complex: the three replica inputs.
#[derive(Debug, Clone)]
pub struct PreparedComplex {
    pub complex: AtomTypeConv,
    pub protein: AtomTypeConv,
    pub ligand: AtomTypeConv,
}

impl PreparedComplex {
    pub fn new(
        complex: &MolecularSystem,
        protein: &MolecularSystem,
        ligand: &MolecularSystem,
        params: &ModelParams,
    ) -> Result<Self> {
        Ok(Self {
            complex: params.prepare(complex)?,
            protein: params.prepare(protein)?,
            ligand: params.prepare(ligand)?,
        })
    }

    /// Complex built as `merge(protein, ligand)`.
    pub fn from_parts(protein: &MolecularSystem, ligand: &MolecularSystem, params: &ModelParams) -> Result<Self> {
        Self::new(&merge_systems(protein, ligand), protein, ligand, params)
    }

    pub fn dropped_slots(&self) -> usize {
        self.complex.dropped_slots() + self.protein.dropped_slots() + self.ligand.dropped_slots()
    }

    fn replicas(&self) -> [(&AtomTypeConv, f64); 3] {
        [(&self.complex, 1.0), (&self.protein, -1.0), (&self.ligand, -1.0)]
    }
}

/// `G_complex - G_protein - G_ligand` with shared parameters.
pub fn predict_dg(
    complex: &MolecularSystem,
    protein: &MolecularSystem,
    ligand: &MolecularSystem,
    params: &ModelParams,
) -> Result<f64> {
    let prep = PreparedComplex::new(complex, protein, ligand, params)?;
    predict_prepared(&prep, params, Mode::Eval, None)
}

pub fn predict_prepared(
    prep: &PreparedComplex,
    params: &ModelParams,
    mode: Mode,
    mut rng: Option<&mut ChaCha8Rng>,
) -> Result<f64> {
    let mut dg = 0.0;
    for (conv, sign) in prep.replicas() {
        dg += sign * energy_forward(conv, params, mode, rng.as_deref_mut())?.energy;
    }
    Ok(dg)
}

/// Predicted dG and `d(dG)/dtheta`.
pub fn dg_and_gradient(
    prep: &PreparedComplex,
    params: &ModelParams,
    mode: Mode,
    mut rng: Option<&mut ChaCha8Rng>,
) -> Result<(f64, Gradients)> {
    let mut acc = GradAccumulator::new(params);
    let mut dg = 0.0;
    for (conv, sign) in prep.replicas() {
        let pass = energy_forward(conv, params, mode, rng.as_deref_mut())?;
        dg += sign * pass.energy;
        energy_backward(conv, params, &pass, sign, &mut acc);
    }
    Ok((dg, acc.finish(params)))
}

/// Gradient of a system energy with respect to its coordinates.
fn energy_coordinate_grad(
    system: &MolecularSystem,
    params: &ModelParams,
    upstream: f64,
) -> Result<(f64, Vec<[f64; 3]>)> {
    let ctx = params.neighbor_context(system)?;
    let conv = atom_type_conv(&ctx, &params.vocab)?;
    let pass = energy_forward(&conv, params, Mode::Eval, None)?;
    let mut scratch = GradAccumulator::new(params);
    let d_r = energy_backward(&conv, params, &pass, upstream, &mut scratch);
    let coords = system.coords();
    let mut out = vec![[0.0; 3]; system.len()];
    for i in 0..ctx.n_atoms() {
        for j in 0..ctx.max_neighbors() {
            let s = ctx.slot(i, j);
            if !ctx.valid()[s] || d_r[s] == 0.0 {
                continue;
            }
            let nb = ctx.neighbor_index()[s] as usize;
            let r = ctx.distances()[s];
            for k in 0..3 {
                let g = d_r[s] * (coords[i][k] - coords[nb][k]) / r;
                out[i][k] += g;
                out[nb][k] -= g;
            }
        }
    }
    Ok((upstream * pass.energy, out))
}

type CoordGrad = Vec<[f64; 3]>;

/// dG (eval mode, complex = merge(protein, ligand)) with its gradient with
/// respect to protein and ligand coordinates. Neighbor lists are rebuilt.
pub fn dg_coordinate_gradient(
    protein: &MolecularSystem,
    ligand: &MolecularSystem,
    params: &ModelParams,
) -> Result<(f64, CoordGrad, CoordGrad)> {
    let complex = merge_systems(protein, ligand);
    let (gc, dc) = energy_coordinate_grad(&complex, params, 1.0)?;
    let (gp, mut dp) = energy_coordinate_grad(protein, params, -1.0)?;
    let (gl, mut dl) = energy_coordinate_grad(ligand, params, -1.0)?;
    let np = protein.len();
    for (i, g) in dc.iter().enumerate() {
        let dst = if i < np { &mut dp[i] } else { &mut dl[i - np] };
        for k in 0..3 {
            dst[k] += g[k];
        }
    }
    Ok((gc + gp + gl, dp, dl))
}
