//! Generators and reference implementations shared by the integration tests.
#![allow(dead_code)]

pub mod dd;
pub mod reference;

use acnn::featurize::{AtomTypeConv, AtomTypeVocabulary, FcMode, RadialFilterParams};
use acnn::network::{atomic_forward, Activation, Mode};
use acnn::structio::MolecularSystem;
use acnn::train::{ModelConfig, ModelParams, PreparedComplex, TrainingExample};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Relative difference with the denominator floored at `1e-8`.
pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Random points in a cube of side `edge` centred on `center`, at least
/// `min_sep` apart from each other and from every point in `avoid`.
pub fn random_points(
    rng: &mut ChaCha8Rng,
    n: usize,
    center: [f64; 3],
    edge: f64,
    min_sep: f64,
    avoid: &[[f64; 3]],
) -> Vec<[f64; 3]> {
    let mut out: Vec<[f64; 3]> = Vec::with_capacity(n);
    let mut attempts = 0;
    while out.len() < n {
        attempts += 1;
        assert!(
            attempts < 1_000_000,
            "cannot place {n} points with separation {min_sep}"
        );
        let p = [
            center[0] + rng.gen_range(-0.5..0.5) * edge,
            center[1] + rng.gen_range(-0.5..0.5) * edge,
            center[2] + rng.gen_range(-0.5..0.5) * edge,
        ];
        if out.iter().chain(avoid).all(|q| dist(&p, q) >= min_sep) {
            out.push(p);
        }
    }
    out
}

pub fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let (dx, dy, dz) = (a[0] - b[0], a[1] - b[1], a[2] - b[2]);
    (dx * dx + dy * dy + dz * dz).sqrt()
}

pub fn random_elements(rng: &mut ChaCha8Rng, n: usize, pool: &[u8]) -> Vec<u8> {
    (0..n).map(|_| *pool.choose(rng).unwrap()).collect()
}

pub fn system(coords: Vec<[f64; 3]>, numbers: Vec<u8>) -> MolecularSystem {
    MolecularSystem::new(coords, numbers, "synthetic").unwrap()
}

pub fn random_system(rng: &mut ChaCha8Rng, n: usize, edge: f64, pool: &[u8]) -> MolecularSystem {
    let coords = random_points(rng, n, [0.0; 3], edge, 1.0, &[]);
    let numbers = random_elements(rng, n, pool);
    system(coords, numbers)
}

pub fn random_system_sized(
    rng: &mut ChaCha8Rng,
    sizes: std::ops::RangeInclusive<usize>,
    edge: f64,
    pool: &[u8],
) -> MolecularSystem {
    let n = rng.gen_range(sizes);
    random_system(rng, n, edge, pool)
}

/// A pocket-like protein with a ligand placed inside its cloud.
pub fn random_complex(rng: &mut ChaCha8Rng, n_protein: usize, n_ligand: usize) -> (MolecularSystem, MolecularSystem) {
    let lig_edge = 2.0 + n_ligand as f64 * 0.25;
    let ligand_xyz = random_points(rng, n_ligand, [0.0; 3], lig_edge, 1.2, &[]);
    let protein_xyz = random_points(rng, n_protein, [0.0; 3], lig_edge + 6.0, 1.2, &ligand_xyz);
    let ligand = system(ligand_xyz, random_elements(rng, n_ligand, &[6, 6, 7, 8]));
    let protein = system(protein_xyz, random_elements(rng, n_protein, &[6, 6, 7, 8, 16]));
    (protein, ligand)
}

pub fn small_config(n_types: usize, n_filters: usize, hidden: &[usize], activation: Activation) -> ModelConfig {
    ModelConfig {
        n_types,
        n_filters,
        hidden: hidden.to_vec(),
        activation,
        ..ModelConfig::core()
    }
}

/// Initial parameters with filters and biases jittered away from their
/// symmetric starting values.
pub fn random_params(rng: &mut ChaCha8Rng, vocab: AtomTypeVocabulary, config: &ModelConfig) -> ModelParams {
    let mut p = ModelParams::initial(vocab, config, rng.gen()).unwrap();
    let cutoff = p.cutoff();
    for (r, s) in p.radial.r_s.iter_mut().zip(p.radial.sigma_s.iter_mut()) {
        *r = rng.gen_range(0.0..cutoff * 0.6);
        *s = rng.gen_range(1.5..4.0);
    }
    for b in &mut p.radial.beta {
        *b = rng.gen_range(0.5..1.5);
    }
    for b in &mut p.radial.bias {
        *b = rng.gen_range(-0.2..0.2);
    }
    for l in &mut p.net.layers {
        for b in &mut l.biases {
            *b = rng.gen_range(-0.3..0.3);
        }
    }
    p
}

/// Smallest |pre-activation| over every hidden unit and atom of the three
/// replicas, in eval mode. Large values keep ReLU kinks out of reach of a
/// finite-difference stencil.
pub fn relu_margin(prep: &PreparedComplex, params: &ModelParams) -> f64 {
    [&prep.complex, &prep.protein, &prep.ligand]
        .into_iter()
        .map(|conv| {
            let f = acnn::featurize::radial_pool(conv, &params.radial);
            let (_, cache) = atomic_forward(f.as_matrix(), f.n_atoms(), &params.net, Mode::Eval, None).unwrap();
            cache
                .pre_activations()
                .iter()
                .flatten()
                .fold(f64::INFINITY, |m, z| m.min(z.abs()))
        })
        .fold(f64::INFINITY, f64::min)
}

/// Brute-force neighbor reference: every `j != i` with `d <= cutoff`,
/// sorted by `(distance, index)`, truncated to `m`.
pub fn brute_neighbors(coords: &[[f64; 3]], cutoff: f64, m: usize) -> Vec<Vec<(usize, f64)>> {
    (0..coords.len())
        .map(|i| {
            let mut v: Vec<(usize, f64)> = (0..coords.len())
                .filter(|&j| j != i)
                .map(|j| (j, dist(&coords[i], &coords[j])))
                .filter(|&(_, d)| d <= cutoff)
                .collect();
            v.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            v.truncate(m);
            v
        })
        .collect()
}

/// Naive triple loop over atoms, types and filters, written directly from
/// the pooling definition on the dense convolution tensor.
pub fn naive_pool(conv: &AtomTypeConv, params: &RadialFilterParams) -> Vec<f64> {
    let (n, m, t) = (conv.n_atoms(), conv.max_neighbors(), conv.n_types());
    let nf = params.n_filters();
    let dense = conv.to_dense();
    let rc = params.cutoff;
    let mut out = vec![0.0; n * t * nf];
    for i in 0..n {
        for a in 0..t {
            for k in 0..nf {
                let mut s = 0.0;
                for j in 0..m {
                    let e = dense[(i * m + j) * t + a];
                    if e > 0.0 {
                        let fc = if e < rc {
                            0.5 * (std::f64::consts::PI * e / rc).cos()
                        } else {
                            0.0
                        };
                        let g = (-(e - params.r_s[k]).powi(2) / params.sigma_s[k].powi(2)).exp();
                        s += match params.mode {
                            FcMode::Multiplicative => g * fc,
                            FcMode::Exponent => g.powf(fc),
                        };
                    }
                }
                out[(i * t + a) * nf + k] = params.beta[k] * s + params.bias[k];
            }
        }
    }
    out
}

/// Rotation matrix from a uniformly random unit quaternion.
pub fn random_rotation(rng: &mut ChaCha8Rng) -> [[f64; 3]; 3] {
    let mut q = [0.0f64; 4];
    loop {
        for v in &mut q {
            *v = rng.gen_range(-1.0..1.0);
        }
        let n2: f64 = q.iter().map(|v| v * v).sum();
        if n2 > 1e-3 && n2 <= 1.0 {
            let n = n2.sqrt();
            q.iter_mut().for_each(|v| *v /= n);
            break;
        }
    }
    let [w, x, y, z] = q;
    [
        [
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
        ],
        [
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
        ],
        [
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        ],
    ]
}

pub fn transform(coords: &[[f64; 3]], rot: &[[f64; 3]; 3], shift: [f64; 3]) -> Vec<[f64; 3]> {
    coords
        .iter()
        .map(|p| {
            let mut q = shift;
            for (r, row) in rot.iter().enumerate() {
                q[r] += row[0] * p[0] + row[1] * p[1] + row[2] * p[2];
            }
            q
        })
        .collect()
}

pub fn translate(sys: &MolecularSystem, shift: [f64; 3]) -> MolecularSystem {
    let coords = sys
        .coords()
        .iter()
        .map(|p| [p[0] + shift[0], p[1] + shift[1], p[2] + shift[2]])
        .collect();
    sys.with_coords(coords).unwrap()
}

/// Eight small complexes with uniform random labels in [-12, -2] kcal/mol.
pub fn overfit_examples(seed: u64) -> Vec<TrainingExample> {
    let mut r = rng(seed);
    (0..8)
        .map(|k| {
            let n_lig = r.gen_range(5..=9);
            let n_prot = r.gen_range(18..=26);
            let (protein, ligand) = random_complex(&mut r, n_prot, n_lig);
            let label = r.gen_range(-12.0..=-2.0);
            TrainingExample::new(format!("syn{k}"), protein, ligand, label)
        })
        .collect()
}

pub fn vocab(types: &[u8]) -> AtomTypeVocabulary {
    AtomTypeVocabulary::new(types.to_vec()).unwrap()
}
