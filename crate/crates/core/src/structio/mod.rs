//! Structure and manifest parsing.
//!
//! Three text formats are understood: the ATOM/HETATM subset of PDB, the
//! V2000 connection table of SDF/MOL files, and a tab-separated dataset
//! index. All parsers are pure functions of their input text.

mod elements;
mod index;
mod pdb;
mod sdf;

pub use elements::{atomic_number_to_symbol, element_to_atomic_number};
pub use index::{parse_index, ComplexRecord};
pub use pdb::{parse_pdb, write_pdb};
pub use sdf::{parse_sdf, BondGraph};

use std::path::Path;

use crate::error::{AcnnError, Result};

/// Cartesian coordinates (Angstrom) and atomic numbers of one structure.
#[derive(Debug, Clone, PartialEq)]
pub struct MolecularSystem {
    coords: Vec<[f64; 3]>,
    atomic_numbers: Vec<u8>,
    source_id: String,
}

impl MolecularSystem {
    pub fn new(coords: Vec<[f64; 3]>, atomic_numbers: Vec<u8>, source_id: impl Into<String>) -> Result<Self> {
        if coords.is_empty() {
            return Err(AcnnError::EmptyStructure);
        }
        if coords.len() != atomic_numbers.len() {
            return Err(AcnnError::InvalidSystem(format!(
                "{} coordinates but {} atomic numbers",
                coords.len(),
                atomic_numbers.len()
            )));
        }
        if let Some(i) = atomic_numbers.iter().position(|&z| !(1..=118).contains(&z)) {
            return Err(AcnnError::InvalidSystem(format!(
                "atom {i} has atomic number {}",
                atomic_numbers[i]
            )));
        }
        if let Some(i) = coords.iter().position(|c| c.iter().any(|v| !v.is_finite())) {
            return Err(AcnnError::InvalidSystem(format!("atom {i} has non-finite coordinates")));
        }
        Ok(Self {
            coords,
            atomic_numbers,
            source_id: source_id.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    /// Always false; kept for clippy symmetry with `len`.
    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn coords(&self) -> &[[f64; 3]] {
        &self.coords
    }

    pub fn atomic_numbers(&self) -> &[u8] {
        &self.atomic_numbers
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    /// Same atoms with replaced coordinates.
    pub fn with_coords(&self, coords: Vec<[f64; 3]>) -> Result<Self> {
        Self::new(coords, self.atomic_numbers.clone(), self.source_id.clone())
    }
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| AcnnError::io(path, e))
}

/// Load a structure file, choosing the parser by extension (`.sdf`/`.mol`
/// or anything else as PDB).
pub fn load_structure(path: &Path) -> Result<(MolecularSystem, Option<BondGraph>)> {
    let text = read_text(path)?;
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase());
    let id = path.display().to_string();
    match ext.as_deref() {
        Some("sdf") | Some("mol") => {
            let (sys, graph) = parse_sdf(&text)?;
            Ok((rename(sys, id), Some(graph)))
        }
        _ => Ok((rename(parse_pdb(&text)?, id), None)),
    }
}

fn rename(sys: MolecularSystem, id: String) -> MolecularSystem {
    MolecularSystem { source_id: id, ..sys }
}
