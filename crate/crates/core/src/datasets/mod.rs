//! Train/test splitting and evaluation metrics.

mod metrics;
mod scaffold;

pub use metrics::{mue, pearson_r2};
pub use scaffold::{bemis_murcko_key, bemis_murcko_key_with_elements, ScaffoldKey};

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{AcnnError, Result};
use crate::structio::{BondGraph, ComplexRecord};

pub const DEFAULT_RATIO: f64 = 0.8;
const STRATUM: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitKind {
    Random,
    Stratified,
    Scaffold,
    Temporal,
}

impl std::str::FromStr for SplitKind {
    type Err = AcnnError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(SplitKind::Random),
            "stratified" => Ok(SplitKind::Stratified),
            "scaffold" => Ok(SplitKind::Scaffold),
            "temporal" => Ok(SplitKind::Temporal),
            other => Err(AcnnError::Config(format!("unknown split kind {other:?}"))),
        }
    }
}

impl std::fmt::Display for SplitKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SplitKind::Random => "random",
            SplitKind::Stratified => "stratified",
            SplitKind::Scaffold => "scaffold",
            SplitKind::Temporal => "temporal",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitResult {
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
}

impl SplitResult {
    fn from_flags(records: &[ComplexRecord], in_train: &[bool]) -> Self {
        let mut out = SplitResult {
            train_ids: Vec::new(),
            test_ids: Vec::new(),
        };
        for (r, &t) in records.iter().zip(in_train) {
            if t {
                out.train_ids.push(r.id.clone());
            } else {
                out.test_ids.push(r.id.clone());
            }
        }
        out
    }

    /// `id,subset` CSV with a header, rows in `order`.
    pub fn to_csv<'a>(&self, order: impl IntoIterator<Item = &'a str>) -> String {
        let mut s = String::from("id,subset\n");
        let train: std::collections::HashSet<&str> = self.train_ids.iter().map(String::as_str).collect();
        for id in order {
            let subset = if train.contains(id) { "train" } else { "test" };
            s.push_str(id);
            s.push(',');
            s.push_str(subset);
            s.push('\n');
        }
        s
    }
}

/// Parse an `id,subset` CSV into id -> is_train.
pub fn parse_split_csv(text: &str) -> Result<HashMap<String, bool>> {
    let mut out = HashMap::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (k == 0 && line == "id,subset") {
            continue;
        }
        let (id, subset) = line
            .rsplit_once(',')
            .ok_or_else(|| AcnnError::malformed(k + 1, "expected id,subset"))?;
        let is_train = match subset {
            "train" => true,
            "test" => false,
            other => return Err(AcnnError::malformed(k + 1, format!("unknown subset {other:?}"))),
        };
        out.insert(id.to_string(), is_train);
    }
    Ok(out)
}

fn check_ratio(ratio: f64) -> Result<()> {
    if ratio > 0.0 && ratio < 1.0 {
        Ok(())
    } else {
        Err(AcnnError::InvalidParameter(format!(
            "split ratio {ratio} outside (0, 1)"
        )))
    }
}

/// `round(ratio * n)`, kept within `[1, n - 1]`.
pub fn train_count(n: usize, ratio: f64) -> usize {
    ((ratio * n as f64).round() as usize).clamp(1, n.saturating_sub(1).max(1))
}

pub fn split_random(records: &[ComplexRecord], ratio: f64, seed: u64) -> Result<SplitResult> {
    check_ratio(ratio)?;
    let n = records.len();
    if n < 2 {
        return Err(AcnnError::TooFewRecords { needed: 2, got: n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut in_train = vec![false; n];
    for &i in &order[..train_count(n, ratio)] {
        in_train[i] = true;
    }
    Ok(SplitResult::from_flags(records, &in_train))
}

/// Sort by label, then split each run of ten consecutive records.
pub fn split_stratified(records: &[ComplexRecord], ratio: f64, seed: u64) -> Result<SplitResult> {
    check_ratio(ratio)?;
    let n = records.len();
    if n < STRATUM {
        return Err(AcnnError::TooFewRecords {
            needed: STRATUM,
            got: n,
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        records[a]
            .log_ki
            .total_cmp(&records[b].log_ki)
            .then_with(|| records[a].id.cmp(&records[b].id))
    });
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_train = vec![false; n];
    for group in order.chunks(STRATUM) {
        let mut g = group.to_vec();
        g.shuffle(&mut rng);
        let n_train = ((ratio * g.len() as f64).round() as usize).clamp(1, g.len());
        for &i in &g[..n_train] {
            in_train[i] = true;
        }
    }
    Ok(SplitResult::from_flags(records, &in_train))
}

/// Whole scaffold groups, most common first, fill train up to the target.
pub fn split_scaffold(
    records: &[ComplexRecord],
    graphs: &HashMap<String, BondGraph>,
    ratio: f64,
) -> Result<SplitResult> {
    let keys = records
        .iter()
        .map(|r| {
            graphs
                .get(&r.id)
                .map(bemis_murcko_key)
                .ok_or_else(|| AcnnError::MissingGraph(r.id.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    split_by_scaffold_keys(records, &keys, ratio)
}

pub fn split_by_scaffold_keys(records: &[ComplexRecord], keys: &[ScaffoldKey], ratio: f64) -> Result<SplitResult> {
    check_ratio(ratio)?;
    let n = records.len();
    if n < 2 {
        return Err(AcnnError::TooFewRecords { needed: 2, got: n });
    }
    if keys.len() != n {
        return Err(AcnnError::ShapeMismatch("one scaffold key per record required".into()));
    }
    let mut groups: BTreeMap<&ScaffoldKey, Vec<usize>> = BTreeMap::new();
    for (i, k) in keys.iter().enumerate() {
        groups.entry(k).or_default().push(i);
    }
    let mut groups: Vec<(&ScaffoldKey, Vec<usize>)> = groups.into_iter().collect();
    groups.sort_by(|a, b| b.1.len().cmp(&a.1.len()).then_with(|| a.0.cmp(b.0)));
    let target = train_count(n, ratio);
    let mut in_train = vec![false; n];
    let mut filled = 0;
    for (_, members) in groups {
        if filled >= target {
            break;
        }
        filled += members.len();
        for i in members {
            in_train[i] = true;
        }
    }
    Ok(SplitResult::from_flags(records, &in_train))
}

/// Earliest deposition years to train, ties by id.
pub fn split_temporal(records: &[ComplexRecord], ratio: f64) -> Result<SplitResult> {
    check_ratio(ratio)?;
    let n = records.len();
    if let Some(r) = records.iter().find(|r| r.year.is_none()) {
        return Err(AcnnError::MissingYear(r.id.clone()));
    }
    if n < 2 {
        return Err(AcnnError::TooFewRecords { needed: 2, got: n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        records[a]
            .year
            .cmp(&records[b].year)
            .then_with(|| records[a].id.cmp(&records[b].id))
    });
    let mut in_train = vec![false; n];
    for &i in &order[..train_count(n, ratio)] {
        in_train[i] = true;
    }
    Ok(SplitResult::from_flags(records, &in_train))
}
