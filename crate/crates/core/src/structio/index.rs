use crate::error::{AcnnError, Result};

/// One entry of the dataset manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexRecord {
    pub id: String,
    pub ligand_path: String,
    pub protein_path: String,
    /// log10 of the inhibition constant Ki.
    pub log_ki: f64,
    pub year: Option<u16>,
}

/// Parse a tab-separated index:
/// `id<TAB>ligand_path<TAB>protein_path<TAB>log_ki<TAB>year`, with `-` for
/// an unknown year. Blank lines and lines starting with `#` are skipped.
pub fn parse_index(text: &str) -> Result<Vec<ComplexRecord>> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 5 {
            return Err(AcnnError::malformed(
                line_no,
                format!("expected 5 tab-separated fields, found {}", fields.len()),
            ));
        }
        let id = fields[0].trim();
        if id.is_empty() {
            return Err(AcnnError::malformed(line_no, "empty id"));
        }
        let log_ki: f64 = fields[3]
            .trim()
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| AcnnError::malformed(line_no, format!("bad log_ki {:?}", fields[3])))?;
        let year = match fields[4].trim() {
            "-" => None,
            raw => Some(
                raw.parse::<u16>()
                    .ok()
                    .filter(|y| (1000..=9999).contains(y) && raw.len() == 4)
                    .ok_or_else(|| AcnnError::malformed(line_no, format!("bad year {raw:?}")))?,
            ),
        };
        out.push(ComplexRecord {
            id: id.to_string(),
            ligand_path: fields[1].trim().to_string(),
            protein_path: fields[2].trim().to_string(),
            log_ki,
            year,
        });
    }
    Ok(out)
}
