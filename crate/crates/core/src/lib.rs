//! Atomic convolutional neural networks for protein-ligand binding affinity.
//!
//! The pipeline runs from structure files to a trained model:
//!
//! - [`structio`] parses PDB, SDF (V2000) and the dataset index.
//! - [`geometry`] builds truncated neighbor lists.
//! - [`featurize`] applies the atom type convolution and radial pooling.
//! - [`network`] maps per-atom features to atomic energies.
//! - [`train`] evaluates `G(complex) - G(protein) - G(ligand)` with shared
//!   parameters, back-propagates through every stage and runs Adam.
//! - [`datasets`] splits records (random, stratified, scaffold, temporal)
//!   and scores predictions.
//!
//! Data-parallel loops go through [`parallel::Exec`]; the `parallel` cargo
//! feature (default) backs them with rayon.

pub mod checkpoint;
pub mod datasets;
pub mod error;
pub mod featurize;
pub mod geometry;
pub mod network;
pub mod numeric;
pub mod parallel;
pub mod structio;
pub mod train;

pub use error::{AcnnError, Result};
