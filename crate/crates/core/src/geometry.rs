//! Truncated neighbor lists.
//!
//! For every atom the `max_neighbors` nearest other atoms within `cutoff`
//! are stored in ascending distance order (ties by ascending atom index).
//! Unused slots hold `distance = cutoff`, `atomic number = 0`,
//! `index = -1` and are flagged invalid.

use std::collections::HashMap;

use crate::error::{AcnnError, Result};
use crate::structio::MolecularSystem;

pub const DEFAULT_CUTOFF: f64 = 12.0;
pub const DEFAULT_MAX_NEIGHBORS: usize = 12;

/// Systems smaller than this skip the cell grid.
const BRUTE_FORCE_BELOW: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct NeighborContext {
    n_atoms: usize,
    max_neighbors: usize,
    cutoff: f64,
    neighbor_index: Vec<i64>,
    distances: Vec<f64>,
    neighbor_types: Vec<u8>,
    valid: Vec<bool>,
}

impl NeighborContext {
    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    pub fn max_neighbors(&self) -> usize {
        self.max_neighbors
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    /// Row-major (N, M) neighbor indices, -1 for empty slots.
    pub fn neighbor_index(&self) -> &[i64] {
        &self.neighbor_index
    }

    /// Row-major (N, M) distance matrix R.
    pub fn distances(&self) -> &[f64] {
        &self.distances
    }

    /// Row-major (N, M) neighbor atomic numbers Z.
    pub fn neighbor_types(&self) -> &[u8] {
        &self.neighbor_types
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    pub fn slot(&self, atom: usize, j: usize) -> usize {
        atom * self.max_neighbors + j
    }

    /// Assemble a context from raw row-major arrays. Used by tests that
    /// permute rows; no ordering invariant is checked.
    pub fn from_parts(
        n_atoms: usize,
        max_neighbors: usize,
        cutoff: f64,
        neighbor_index: Vec<i64>,
        distances: Vec<f64>,
        neighbor_types: Vec<u8>,
        valid: Vec<bool>,
    ) -> Result<Self> {
        let len = n_atoms * max_neighbors;
        if [neighbor_index.len(), distances.len(), neighbor_types.len(), valid.len()]
            .iter()
            .any(|&l| l != len)
        {
            return Err(AcnnError::ShapeMismatch(format!(
                "neighbor arrays must have {n_atoms}x{max_neighbors} entries"
            )));
        }
        Ok(Self {
            n_atoms,
            max_neighbors,
            cutoff,
            neighbor_index,
            distances,
            neighbor_types,
            valid,
        })
    }
}

#[inline]
pub(crate) fn distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

pub fn build_neighbor_context(system: &MolecularSystem, cutoff: f64, max_neighbors: usize) -> Result<NeighborContext> {
    if !(cutoff > 0.0 && cutoff.is_finite()) {
        return Err(AcnnError::InvalidParameter(format!(
            "cutoff must be positive, got {cutoff}"
        )));
    }
    if max_neighbors == 0 {
        return Err(AcnnError::InvalidParameter("max_neighbors must be at least 1".into()));
    }
    let coords = system.coords();
    let n = coords.len();
    let rows: Vec<Vec<(f64, usize)>> = if n < BRUTE_FORCE_BELOW {
        (0..n)
            .map(|i| {
                let cands = (0..n).filter(|&j| j != i).filter_map(|j| {
                    let d = distance(&coords[i], &coords[j]);
                    (d <= cutoff).then_some((d, j))
                });
                nearest(cands.collect(), max_neighbors)
            })
            .collect()
    } else {
        CellGrid::new(coords, cutoff).neighbor_rows(coords, cutoff, max_neighbors)
    };

    let m = max_neighbors;
    let mut ctx = NeighborContext {
        n_atoms: n,
        max_neighbors: m,
        cutoff,
        neighbor_index: vec![-1; n * m],
        distances: vec![cutoff; n * m],
        neighbor_types: vec![0; n * m],
        valid: vec![false; n * m],
    };
    let z = system.atomic_numbers();
    for (i, row) in rows.into_iter().enumerate() {
        for (j, (d, nb)) in row.into_iter().enumerate() {
            let s = i * m + j;
            ctx.neighbor_index[s] = nb as i64;
            ctx.distances[s] = d;
            ctx.neighbor_types[s] = z[nb];
            ctx.valid[s] = true;
        }
    }
    Ok(ctx)
}

fn nearest(mut cands: Vec<(f64, usize)>, m: usize) -> Vec<(f64, usize)> {
    cands.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    cands.truncate(m);
    cands
}

/// Uniform grid with cell side equal to the cutoff, so every neighbor of an
/// atom lies in its own cell or one of the 26 adjacent cells.
struct CellGrid {
    origin: [f64; 3],
    side: f64,
    cells: HashMap<[i64; 3], Vec<usize>>,
}

impl CellGrid {
    fn new(coords: &[[f64; 3]], side: f64) -> Self {
        let mut origin = [f64::INFINITY; 3];
        for c in coords {
            for k in 0..3 {
                origin[k] = origin[k].min(c[k]);
            }
        }
        let mut grid = Self {
            origin,
            side,
            cells: HashMap::new(),
        };
        for (i, c) in coords.iter().enumerate() {
            let key = grid.cell_of(c);
            grid.cells.entry(key).or_default().push(i);
        }
        grid
    }

    fn cell_of(&self, c: &[f64; 3]) -> [i64; 3] {
        let mut key = [0i64; 3];
        for k in 0..3 {
            key[k] = ((c[k] - self.origin[k]) / self.side).floor() as i64;
        }
        key
    }

    fn neighbor_rows(&self, coords: &[[f64; 3]], cutoff: f64, m: usize) -> Vec<Vec<(f64, usize)>> {
        coords
            .iter()
            .enumerate()
            .map(|(i, ci)| {
                let home = self.cell_of(ci);
                let mut cands = Vec::new();
                for dx in -1..=1 {
                    for dy in -1..=1 {
                        for dz in -1..=1 {
                            let key = [home[0] + dx, home[1] + dy, home[2] + dz];
                            let Some(members) = self.cells.get(&key) else { continue };
                            for &j in members {
                                if j == i {
                                    continue;
                                }
                                let d = distance(ci, &coords[j]);
                                if d <= cutoff {
                                    cands.push((d, j));
                                }
                            }
                        }
                    }
                }
                nearest(cands, m)
            })
            .collect()
    }
}

/// Concatenate two systems, `a`'s atoms first.
pub fn merge_systems(a: &MolecularSystem, b: &MolecularSystem) -> MolecularSystem {
    let mut coords = a.coords().to_vec();
    coords.extend_from_slice(b.coords());
    let mut z = a.atomic_numbers().to_vec();
    z.extend_from_slice(b.atomic_numbers());
    MolecularSystem::new(coords, z, format!("{}+{}", a.source_id(), b.source_id()))
        .expect("concatenation of valid systems is valid")
}
