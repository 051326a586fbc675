//! Thermodynamic-cycle training.
//!
//! A prediction is `G(complex) - G(protein) - G(ligand)`, three evaluations
//! of one shared model. The squared error against the label is minimised
//! with Adam over every network weight and the radial filter centers and
//! widths.

mod adam;
mod model;

pub use adam::{adam_step, AdamState};
pub use model::{
    dg_and_gradient, dg_coordinate_gradient, predict_dg, predict_prepared, system_energy, Gradients, ModelConfig,
    ModelParams, PreparedComplex,
};

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::datasets::{mue, pearson_r2};
use crate::error::{AcnnError, Result};
use crate::featurize::AtomTypeVocabulary;
use crate::geometry::merge_systems;
use crate::network::Mode;
use crate::parallel::Exec;
use crate::structio::{load_structure, ComplexRecord, MolecularSystem};

/// Gas constant, kcal/(mol K).
pub const GAS_CONSTANT: f64 = 1.9872e-3;
pub const TEMPERATURE: f64 = 298.15;

/// `RT ln(10) log_ki`: binding free energy in kcal/mol.
pub fn label_to_kcal(log_ki: f64) -> f64 {
    GAS_CONSTANT * TEMPERATURE * std::f64::consts::LN_10 * log_ki
}

pub fn kcal_to_log_ki(kcal: f64) -> f64 {
    kcal / (GAS_CONSTANT * TEMPERATURE * std::f64::consts::LN_10)
}

pub fn loss(dg_pred: f64, y: f64) -> f64 {
    (dg_pred - y) * (dg_pred - y)
}

pub fn batch_loss(pairs: &[(f64, f64)]) -> f64 {
    pairs.iter().map(|&(p, y)| loss(p, y)).sum::<f64>() / pairs.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    /// Serial execution of per-record work.
    pub deterministic: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 24,
            epochs: 100,
            lr: 1e-3,
            seed: 0,
            deterministic: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(AcnnError::Config("batch_size must be at least 1".into()));
        }
        if self.epochs == 0 {
            return Err(AcnnError::Config("epochs must be at least 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(AcnnError::Config(format!("lr must be positive, got {}", self.lr)));
        }
        Ok(())
    }

    pub fn exec(&self) -> Exec {
        if self.deterministic {
            Exec::Serial
        } else {
            Exec::Parallel
        }
    }
}

/// Deterministic per-item seed.
fn derive_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mean squared-error loss over a batch and its exact gradient.
///
/// Per-record work runs under `exec`; the reduction always follows batch
/// order. Dropout masks (train mode) are seeded from `dropout_seed` and
/// the item position.
pub fn backward(
    batch: &[(&PreparedComplex, f64)],
    params: &ModelParams,
    mode: Mode,
    dropout_seed: u64,
    exec: Exec,
) -> Result<(f64, Gradients)> {
    if batch.is_empty() {
        return Err(AcnnError::InvalidParameter("empty batch".into()));
    }
    let per_item = exec.try_map(batch, |k, (prep, _)| {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(dropout_seed, k as u64, 0));
        dg_and_gradient(prep, params, mode, Some(&mut rng))
    })?;
    let n = batch.len() as f64;
    let mut total = Gradients::zeros(params);
    let mut loss_sum = 0.0;
    for ((dg, g), (_, y)) in per_item.iter().zip(batch) {
        let residual = dg - y;
        loss_sum += residual * residual;
        total.add_scaled(g, 2.0 * residual / n);
    }
    Ok((loss_sum / n, total))
}

/// One loaded complex with its label.
#[derive(Debug, Clone)]
pub struct TrainingExample {
    pub id: String,
    pub protein: MolecularSystem,
    pub ligand: MolecularSystem,
    pub complex: MolecularSystem,
    pub label_kcal: f64,
}

impl TrainingExample {
    pub fn new(id: impl Into<String>, protein: MolecularSystem, ligand: MolecularSystem, label_kcal: f64) -> Self {
        let complex = merge_systems(&protein, &ligand);
        Self {
            id: id.into(),
            protein,
            ligand,
            complex,
            label_kcal,
        }
    }
}

/// Load the structures of `records`, resolving relative paths against
/// `base_dir`. Errors carry the record id.
pub fn load_examples(records: &[ComplexRecord], base_dir: &Path, exec: Exec) -> Result<Vec<TrainingExample>> {
    exec.try_map(records, |_, r| {
        let load = |p: &str| load_structure(&base_dir.join(p)).map(|(s, _)| s);
        let protein = load(&r.protein_path).map_err(|e| e.with_record(&r.id))?;
        let ligand = load(&r.ligand_path).map_err(|e| e.with_record(&r.id))?;
        Ok(TrainingExample::new(
            r.id.clone(),
            protein,
            ligand,
            label_to_kcal(r.log_ki),
        ))
    })
}

/// Vocabulary of the most frequent elements over protein and ligand atoms.
pub fn derive_vocabulary(examples: &[TrainingExample], n_types: usize) -> Result<AtomTypeVocabulary> {
    AtomTypeVocabulary::most_frequent(
        examples
            .iter()
            .flat_map(|e| [e.protein.atomic_numbers(), e.ligand.atomic_numbers()]),
        n_types,
    )
}

pub fn prepare_examples(
    examples: &[TrainingExample],
    params: &ModelParams,
    exec: Exec,
) -> Result<Vec<PreparedComplex>> {
    exec.try_map(examples, |_, e| {
        PreparedComplex::new(&e.complex, &e.protein, &e.ligand, params).map_err(|err| err.with_record(&e.id))
    })
}

/// Eval-mode predictions in kcal/mol.
pub fn predict_all(prepared: &[PreparedComplex], params: &ModelParams, exec: Exec) -> Result<Vec<f64>> {
    exec.try_map(prepared, |_, p| predict_prepared(p, params, Mode::Eval, None))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub loss: f64,
    /// `None` when predictions or labels are constant.
    pub r2: Option<f64>,
    pub mue_kcal: f64,
}

pub fn metrics(pred_kcal: &[f64], actual_kcal: &[f64]) -> Metrics {
    let pairs: Vec<(f64, f64)> = pred_kcal.iter().copied().zip(actual_kcal.iter().copied()).collect();
    Metrics {
        loss: batch_loss(&pairs),
        r2: pearson_r2(pred_kcal, actual_kcal).ok(),
        mue_kcal: mue(pred_kcal, actual_kcal).unwrap_or(f64::NAN),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistoryRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_r2: Option<f64>,
    pub train_mue_kcal: f64,
}

impl HistoryRow {
    pub const CSV_HEADER: &'static str = "epoch,train_loss,train_r2,train_mue_kcal";

    pub fn to_csv(&self) -> String {
        let r2 = self.train_r2.map_or_else(|| "nan".to_string(), |v| format!("{v:e}"));
        format!("{},{:e},{},{:e}", self.epoch, self.train_loss, r2, self.train_mue_kcal)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub history: Vec<HistoryRow>,
    /// Neighbor slots whose element is outside the vocabulary, summed over
    /// all cached replicas.
    pub dropped_slots: usize,
}

/// Train from freshly initialised parameters. `on_epoch` sees every
/// history row as soon as it is computed, including the rows before a
/// numerical failure.
pub fn train(
    examples: &[TrainingExample],
    model: &ModelConfig,
    config: &TrainConfig,
    on_epoch: impl FnMut(&HistoryRow),
) -> Result<TrainOutcome> {
    if examples.is_empty() {
        return Err(AcnnError::TooFewRecords { needed: 1, got: 0 });
    }
    let vocab = derive_vocabulary(examples, model.n_types)?;
    let params = ModelParams::initial(vocab, model, config.seed)?;
    train_from(examples, params, config, on_epoch)
}

/// Train starting from `params`.
pub fn train_from(
    examples: &[TrainingExample],
    mut params: ModelParams,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&HistoryRow),
) -> Result<TrainOutcome> {
    config.validate()?;
    if examples.is_empty() {
        return Err(AcnnError::TooFewRecords { needed: 1, got: 0 });
    }
    let exec = config.exec();
    let prepared = prepare_examples(examples, &params, exec)?;
    let dropped_slots = prepared.iter().map(PreparedComplex::dropped_slots).sum();
    let labels: Vec<f64> = examples.iter().map(|e| e.label_kcal).collect();
    let mut adam = AdamState::new(&params, config.lr);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        order.shuffle(&mut shuffle_rng);
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<(&PreparedComplex, f64)> = chunk.iter().map(|&i| (&prepared[i], labels[i])).collect();
            let dropout_seed = derive_seed(config.seed, epoch as u64, b as u64 + 1);
            let (batch_loss, grads) = backward(&batch, &params, Mode::Train, dropout_seed, exec)?;
            if !batch_loss.is_finite() || grads.flatten().iter().any(|g| !g.is_finite()) {
                return Err(AcnnError::NonFiniteLoss { epoch });
            }
            adam_step(&mut params, &grads, &mut adam)?;
        }
        let preds = predict_all(&prepared, &params, exec)?;
        let m = metrics(&preds, &labels);
        if !m.loss.is_finite() {
            return Err(AcnnError::NonFiniteLoss { epoch });
        }
        let row = HistoryRow {
            epoch,
            train_loss: m.loss,
            train_r2: m.r2,
            train_mue_kcal: m.mue_kcal,
        };
        on_epoch(&row);
        history.push(row);
    }
    Ok(TrainOutcome {
        params,
        history,
        dropped_slots,
    })
}
