//! Independent double-double forward pass: neighbor selection from the
//! brute-force oracle, radial pooling written from its definition, dense
//! layers and replica energies. Used as the finite-difference reference.

use acnn::featurize::{AtomTypeVocabulary, FcMode};
use acnn::network::Activation;
use acnn::structio::MolecularSystem;
use acnn::train::ModelParams;

use super::brute_neighbors;
use super::dd::Dd;

#[derive(Debug, Clone)]
pub struct DdLayer {
    pub d_in: usize,
    pub d_out: usize,
    pub weights: Vec<Dd>,
    pub biases: Vec<Dd>,
}

#[derive(Debug, Clone)]
pub struct DdModel {
    pub r_s: Vec<Dd>,
    pub sigma_s: Vec<Dd>,
    pub beta: Vec<Dd>,
    pub bias: Vec<Dd>,
    pub layers: Vec<DdLayer>,
    pub activation: Activation,
    pub cutoff: f64,
    pub mode: FcMode,
    pub vocab: AtomTypeVocabulary,
    pub max_neighbors: usize,
}

fn lift(v: &[f64]) -> Vec<Dd> {
    v.iter().map(|&x| Dd::new(x)).collect()
}

impl DdModel {
    pub fn from_params(p: &ModelParams) -> Self {
        Self {
            r_s: lift(&p.radial.r_s),
            sigma_s: lift(&p.radial.sigma_s),
            beta: lift(&p.radial.beta),
            bias: lift(&p.radial.bias),
            layers: p
                .net
                .layers
                .iter()
                .map(|l| DdLayer {
                    d_in: l.d_in,
                    d_out: l.d_out,
                    weights: lift(&l.weights),
                    biases: lift(&l.biases),
                })
                .collect(),
            activation: p.net.activation,
            cutoff: p.cutoff(),
            mode: p.radial.mode,
            vocab: p.vocab.clone(),
            max_neighbors: p.max_neighbors,
        }
    }

    /// Learnable blocks in the library's order: r_s, sigma_s, then weights
    /// and biases per layer.
    pub fn blocks_mut(&mut self) -> Vec<&mut [Dd]> {
        let mut v: Vec<&mut [Dd]> = vec![&mut self.r_s, &mut self.sigma_s];
        for l in &mut self.layers {
            v.push(&mut l.weights);
            v.push(&mut l.biases);
        }
        v
    }

    fn filter(&self, r: Dd, k: usize) -> Dd {
        let fc = if r.hi > 0.0 && r.hi < self.cutoff {
            Dd::new(0.5) * (Dd::PI * r / Dd::new(self.cutoff)).cos()
        } else {
            Dd::ZERO
        };
        let q = (r - self.r_s[k]).sqr() / self.sigma_s[k].sqr();
        match self.mode {
            FcMode::Multiplicative => (-q).exp() * fc,
            FcMode::Exponent => (-(q * fc)).exp(),
        }
    }

    /// Pooled features, one `(n_types * n_filters)` row per atom.
    pub fn features(&self, rep: &Replica) -> Vec<Vec<Dd>> {
        let nf = self.r_s.len();
        let nt = self.vocab.len();
        (0..rep.coords.len())
            .map(|i| {
                let mut acc = vec![Dd::ZERO; nt * nf];
                for &j in &rep.neighbors[i] {
                    let Some(a) = self.vocab.channel_of(rep.numbers[j]) else {
                        continue;
                    };
                    let r = dd_distance(&rep.coords[i], &rep.coords[j]);
                    for k in 0..nf {
                        acc[a * nf + k] = acc[a * nf + k] + self.filter(r, k);
                    }
                }
                for a in 0..nt {
                    for k in 0..nf {
                        acc[a * nf + k] = self.beta[k] * acc[a * nf + k] + self.bias[k];
                    }
                }
                acc
            })
            .collect()
    }

    /// Eval-mode molecular energy from precomputed features.
    pub fn energy(&self, features: &[Vec<Dd>]) -> Dd {
        let last = self.layers.len() - 1;
        let mut total = Dd::ZERO;
        for row in features {
            let mut x = row.clone();
            for (k, l) in self.layers.iter().enumerate() {
                let mut z = l.biases.clone();
                for (i, &xi) in x.iter().enumerate() {
                    for (o, zo) in z.iter_mut().enumerate() {
                        *zo = *zo + xi * l.weights[i * l.d_out + o];
                    }
                }
                if k < last {
                    for v in &mut z {
                        *v = match self.activation {
                            Activation::Relu => {
                                if v.hi > 0.0 {
                                    *v
                                } else {
                                    Dd::ZERO
                                }
                            }
                            Activation::Tanh => v.tanh(),
                        };
                    }
                }
                x = z;
            }
            total = total + x[0];
        }
        total
    }
}

fn dd_distance(a: &[Dd; 3], b: &[Dd; 3]) -> Dd {
    ((a[0] - b[0]).sqr() + (a[1] - b[1]).sqr() + (a[2] - b[2]).sqr()).sqrt()
}

/// One replica input with a neighbor selection frozen at construction.
#[derive(Debug, Clone)]
pub struct Replica {
    pub coords: Vec<[Dd; 3]>,
    pub numbers: Vec<u8>,
    pub neighbors: Vec<Vec<usize>>,
}

impl Replica {
    pub fn new(sys: &MolecularSystem, cutoff: f64, max_neighbors: usize) -> Self {
        let neighbors = brute_neighbors(sys.coords(), cutoff, max_neighbors)
            .into_iter()
            .map(|row| row.into_iter().map(|(j, _)| j).collect())
            .collect();
        Self {
            coords: sys.coords().iter().map(|p| p.map(Dd::new)).collect(),
            numbers: sys.atomic_numbers().to_vec(),
            neighbors,
        }
    }
}

/// Complex, protein and ligand replicas.
#[derive(Debug, Clone)]
pub struct RefComplex {
    pub complex: Replica,
    pub protein: Replica,
    pub ligand: Replica,
}

impl RefComplex {
    pub fn new(
        complex: &MolecularSystem,
        protein: &MolecularSystem,
        ligand: &MolecularSystem,
        cutoff: f64,
        m: usize,
    ) -> Self {
        Self {
            complex: Replica::new(complex, cutoff, m),
            protein: Replica::new(protein, cutoff, m),
            ligand: Replica::new(ligand, cutoff, m),
        }
    }

    pub fn replicas(&self) -> [(&Replica, f64); 3] {
        [(&self.complex, 1.0), (&self.protein, -1.0), (&self.ligand, -1.0)]
    }

    /// `sum |G_replica|`, the scale of f64 round-off in dG.
    pub fn energy_scale(&self, model: &DdModel) -> f64 {
        self.replicas()
            .iter()
            .map(|(rep, _)| model.energy(&model.features(rep)).to_f64().abs())
            .sum()
    }

    pub fn dg(&self, model: &DdModel) -> Dd {
        self.replicas().iter().fold(Dd::ZERO, |acc, (rep, sign)| {
            acc + Dd::new(*sign) * model.energy(&model.features(rep))
        })
    }
}
