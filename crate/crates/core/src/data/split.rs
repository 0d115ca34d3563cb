use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use crate::numeric::Rng;
use crate::{Error, Result};

pub const TEST_FRACTION: f64 = 0.2;
pub const VALIDATION_FRACTION: f64 = 0.2;
/// Strata smaller than this make a stratified split fall back to a plain one.
pub const MIN_STRATUM: usize = 5;

/// Disjoint row-index lists, each sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
    pub stratified: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

/// `(train, validation, test)` sizes: 20% test, then 20% of the rest.
pub fn split_sizes(n: usize) -> (usize, usize, usize) {
    let test = (n as f64 * TEST_FRACTION).round() as usize;
    let rest = n - test;
    let validation = (rest as f64 * VALIDATION_FRACTION).round() as usize;
    (rest - validation, validation, test)
}

fn assign(rows: &mut [usize], rng: &mut Rng, out: &mut SplitIndices) {
    rng.shuffle(rows);
    let (_, v, t) = split_sizes(rows.len());
    out.test.extend_from_slice(&rows[..t]);
    out.validation.extend_from_slice(&rows[t..t + v]);
    out.train.extend_from_slice(&rows[t + v..]);
}

/// Train/validation/test split (64/16/20). With `stratify`, each stratum of
/// [`Dataset::strata`] is split separately.
pub fn split(ds: &Dataset, seed: u64, stratify: bool) -> Result<SplitIndices> {
    split_rows(
        ds.len(),
        if stratify { ds.strata() } else { None }.as_deref(),
        seed,
    )
}

pub fn split_rows(n: usize, strata: Option<&[String]>, seed: u64) -> Result<SplitIndices> {
    if n < 10 {
        return Err(Error::InvalidArgument(format!(
            "split needs at least 10 rows, got {n}"
        )));
    }
    let mut rng = Rng::new(seed).derive(10);
    let mut out = SplitIndices {
        train: Vec::new(),
        validation: Vec::new(),
        test: Vec::new(),
        stratified: false,
        warning: None,
    };
    match strata {
        Some(labels) => {
            if labels.len() != n {
                return Err(Error::InvalidArgument(format!(
                    "{} stratify labels for {n} rows",
                    labels.len()
                )));
            }
            let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
            for (i, l) in labels.iter().enumerate() {
                groups.entry(l.as_str()).or_default().push(i);
            }
            if let Some((label, rows)) = groups.iter().find(|(_, rows)| rows.len() < MIN_STRATUM) {
                out.warning = Some(format!(
                    "stratum {label:?} has {} rows (< {MIN_STRATUM}); split unstratified",
                    rows.len()
                ));
                assign(&mut (0..n).collect::<Vec<_>>(), &mut rng, &mut out);
            } else {
                out.stratified = true;
                for rows in groups.values_mut() {
                    assign(rows, &mut rng, &mut out);
                }
            }
        }
        None => assign(&mut (0..n).collect::<Vec<_>>(), &mut rng, &mut out),
    }
    out.train.sort_unstable();
    out.validation.sort_unstable();
    out.test.sort_unstable();
    Ok(out)
}
