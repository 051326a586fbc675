use std::collections::HashSet;

use super::elements::element_to_atomic_number;
use super::MolecularSystem;
use crate::error::{AcnnError, Result};

/// Undirected bond graph over `atom_count` vertices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BondGraph {
    atom_count: usize,
    bonds: Vec<(usize, usize)>,
}

impl BondGraph {
    pub fn new(atom_count: usize, bonds: Vec<(usize, usize)>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(bonds.len());
        for &(i, j) in &bonds {
            if i >= atom_count || j >= atom_count {
                return Err(AcnnError::InvalidGraph(format!(
                    "bond ({i}, {j}) out of range for {atom_count} atoms"
                )));
            }
            if i == j {
                return Err(AcnnError::InvalidGraph(format!("self-loop on atom {i}")));
            }
            if !seen.insert((i.min(j), i.max(j))) {
                return Err(AcnnError::InvalidGraph(format!("duplicate bond ({i}, {j})")));
            }
        }
        Ok(Self { atom_count, bonds })
    }

    pub fn atom_count(&self) -> usize {
        self.atom_count
    }

    pub fn bonds(&self) -> &[(usize, usize)] {
        &self.bonds
    }

    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.atom_count];
        for &(i, j) in &self.bonds {
            adj[i].push(j);
            adj[j].push(i);
        }
        adj
    }
}

/// Parse the first V2000 connection table of an SDF/MOL text.
pub fn parse_sdf(text: &str) -> Result<(MolecularSystem, BondGraph)> {
    let lines: Vec<&str> = text.lines().collect();
    let counts = lines
        .get(3)
        .ok_or_else(|| AcnnError::malformed(lines.len() + 1, "missing counts line"))?;
    let (n_atoms, n_bonds) = parse_counts(counts).ok_or_else(|| AcnnError::malformed(4, "bad counts line"))?;
    if n_atoms == 0 {
        return Err(AcnnError::EmptyStructure);
    }

    let mut coords = Vec::with_capacity(n_atoms);
    let mut numbers = Vec::with_capacity(n_atoms);
    for k in 0..n_atoms {
        let line_no = 5 + k;
        let line = atom_block_line(&lines, line_no, "atom")?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < 4 {
            return Err(AcnnError::malformed(line_no, "expected x y z element"));
        }
        let mut xyz = [0.0; 3];
        for (slot, raw) in xyz.iter_mut().zip(&fields[..3]) {
            *slot = raw
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| AcnnError::malformed(line_no, format!("bad coordinate {raw:?}")))?;
        }
        let z = element_to_atomic_number(fields[3])
            .map_err(|_| AcnnError::malformed(line_no, format!("unknown element {:?}", fields[3])))?;
        coords.push(xyz);
        numbers.push(z);
    }

    let mut bonds = Vec::with_capacity(n_bonds);
    for k in 0..n_bonds {
        let line_no = 5 + n_atoms + k;
        let line = atom_block_line(&lines, line_no, "bond")?;
        let (a, b) = parse_bond(line).ok_or_else(|| AcnnError::malformed(line_no, "bad bond line"))?;
        if a == 0 || b == 0 || a > n_atoms || b > n_atoms {
            return Err(AcnnError::malformed(
                line_no,
                format!("bond atom index out of range 1..={n_atoms}"),
            ));
        }
        bonds.push((a - 1, b - 1));
    }

    let system = MolecularSystem::new(coords, numbers, "sdf")?;
    let graph = BondGraph::new(n_atoms, bonds).map_err(|e| AcnnError::malformed(4, e.to_string()))?;
    Ok((system, graph))
}

fn atom_block_line<'a>(lines: &[&'a str], line_no: usize, what: &str) -> Result<&'a str> {
    match lines.get(line_no - 1) {
        Some(l) if !l.starts_with("M  ") && !l.starts_with("$$$$") => Ok(l),
        _ => Err(AcnnError::malformed(
            line_no,
            format!("missing {what} line declared by counts line"),
        )),
    }
}

/// `aaabbb...` fixed columns, or whitespace-separated when the fixed
/// columns do not parse.
fn parse_counts(line: &str) -> Option<(usize, usize)> {
    fixed_pair(line).or_else(|| {
        let mut it = line.split_whitespace();
        Some((it.next()?.parse().ok()?, it.next()?.parse().ok()?))
    })
}

fn parse_bond(line: &str) -> Option<(usize, usize)> {
    parse_counts(line)
}

fn fixed_pair(line: &str) -> Option<(usize, usize)> {
    let a = line.get(0..3)?.trim().parse().ok()?;
    let b = line.get(3..6)?.trim().parse().ok()?;
    Some((a, b))
}
