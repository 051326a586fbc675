use std::fmt::Write as _;

use super::elements::{atomic_number_to_symbol, element_to_atomic_number};
use super::MolecularSystem;
use crate::error::{AcnnError, Result};

/// Parse every ATOM/HETATM record of a PDB file, in file order.
///
/// Coordinates come from columns 31-54 and the element from columns 77-78,
/// falling back to the atom name (columns 13-16) when the element column is
/// blank. Altloc and occupancy are ignored; all records are kept as written.
pub fn parse_pdb(text: &str) -> Result<MolecularSystem> {
    let mut coords = Vec::new();
    let mut numbers = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if !(line.starts_with("ATOM  ") || line.starts_with("HETATM")) {
            continue;
        }
        let x = coord_field(line, 30..38, line_no)?;
        let y = coord_field(line, 38..46, line_no)?;
        let z = coord_field(line, 46..54, line_no)?;
        let element = resolve_element(line).ok_or_else(|| AcnnError::malformed(line_no, "cannot resolve element"))?;
        coords.push([x, y, z]);
        numbers.push(element);
    }
    if coords.is_empty() {
        return Err(AcnnError::EmptyStructure);
    }
    MolecularSystem::new(coords, numbers, "pdb")
}

fn field(line: &str, range: std::ops::Range<usize>) -> Option<&str> {
    let end = range.end.min(line.len());
    if range.start >= end {
        return None;
    }
    line.get(range.start..end)
}

fn coord_field(line: &str, range: std::ops::Range<usize>, line_no: usize) -> Result<f64> {
    let raw =
        field(line, range.clone()).ok_or_else(|| AcnnError::malformed(line_no, "record too short for coordinates"))?;
    let value: f64 = raw.trim().parse().map_err(|_| {
        AcnnError::malformed(
            line_no,
            format!("bad coordinate {raw:?} in columns {}-{}", range.start + 1, range.end),
        )
    })?;
    if !value.is_finite() {
        return Err(AcnnError::malformed(line_no, "non-finite coordinate"));
    }
    Ok(value)
}

fn resolve_element(line: &str) -> Option<u8> {
    if let Some(sym) = field(line, 76..78).map(str::trim).filter(|s| !s.is_empty()) {
        return element_to_atomic_number(sym).ok();
    }
    element_from_atom_name(field(line, 12..16)?)
}

/// Element from a PDB atom name. Names starting in column 13 carry a
/// two-letter element (`FE  `, `CL1 `) unless they are four-character
/// hydrogen names (`HG21`); names starting in column 14 carry a one-letter
/// element (` CA `).
fn element_from_atom_name(name: &str) -> Option<u8> {
    let bytes = name.as_bytes();
    let first = *bytes.first()?;
    if first.is_ascii_alphabetic() {
        if bytes.len() == 4 && bytes.iter().all(|b| !b.is_ascii_whitespace()) && first == b'H' {
            return Some(1);
        }
        let alpha: String = name.chars().take_while(|c| c.is_ascii_alphabetic()).take(2).collect();
        if alpha.len() == 2 {
            if let Ok(z) = element_to_atomic_number(&alpha) {
                return Some(z);
            }
        }
        return element_to_atomic_number(&alpha[..1]).ok();
    }
    let c = name.chars().find(|c| c.is_ascii_alphabetic())?;
    element_to_atomic_number(&c.to_string()).ok()
}

/// Canonical PDB rendering: one HETATM record per atom with element columns
/// filled. Parsing the output reproduces any system parsed from PDB text
/// bit-exactly, since coordinates are written with the format's three decimals.
pub fn write_pdb(system: &MolecularSystem) -> String {
    let mut out = String::new();
    for (i, (c, &z)) in system.coords().iter().zip(system.atomic_numbers()).enumerate() {
        let sym = atomic_number_to_symbol(z).unwrap_or("X");
        let serial = (i + 1) % 100_000;
        let _ = writeln!(
            out,
            "HETATM{serial:>5} {name:<4} LIG A   1    {x:>8.3}{y:>8.3}{z:>8.3}  1.00  0.00          {sym:>2}",
            name = sym.to_ascii_uppercase(),
            x = c[0],
            y = c[1],
            z = c[2],
        );
    }
    out.push_str("END\n");
    out
}
