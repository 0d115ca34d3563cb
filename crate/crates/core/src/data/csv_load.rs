use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, Task};
use crate::numeric::Matrix;
use crate::{Error, Result};

/// Cells treated as missing; a row with any missing used cell is dropped.
pub const MISSING_TOKENS: [&str; 4] = ["", "?", "NA", "NaN"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    #[default]
    Regression,
    Classification,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CsvOptions {
    pub target_columns: Vec<String>,
    pub task: TaskKind,
    /// Feature columns to one-hot encode in addition to those detected as
    /// mostly non-numeric.
    pub categorical: Vec<String>,
    pub stratify: Option<String>,
    /// Ascending cut points turning a numeric classification target into
    /// classes: the class is the number of edges strictly below the value.
    pub bin_edges: Option<Vec<f64>>,
    /// Columns ignored entirely.
    pub drop_columns: Vec<String>,
    pub delimiter: char,
    /// Column names for files without a header row.
    pub column_names: Option<Vec<String>>,
}

impl Default for CsvOptions {
    fn default() -> Self {
        CsvOptions {
            target_columns: Vec::new(),
            task: TaskKind::Regression,
            categorical: Vec::new(),
            stratify: None,
            bin_edges: None,
            drop_columns: Vec::new(),
            delimiter: ',',
            column_names: None,
        }
    }
}

fn is_missing(cell: &str) -> bool {
    MISSING_TOKENS.iter().any(|t| t.eq_ignore_ascii_case(cell))
}

fn parse_number(cell: &str) -> Option<f64> {
    cell.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Category order: numeric order when every label parses as a number,
/// otherwise lexicographic.
fn sorted_categories<'a>(values: impl Iterator<Item = &'a str>) -> Vec<String> {
    let set: BTreeSet<&str> = values.collect();
    let mut cats: Vec<String> = set.into_iter().map(str::to_string).collect();
    if cats.iter().all(|c| parse_number(c).is_some()) {
        cats.sort_by(|a, b| {
            parse_number(a)
                .unwrap_or(0.0)
                .total_cmp(&parse_number(b).unwrap_or(0.0))
        });
    }
    cats
}

enum Column {
    Numeric,
    Categorical,
}

pub fn load_csv(path: &Path, opts: &CsvOptions) -> Result<Dataset> {
    let data_err = |message: String| Error::Data {
        path: path.to_path_buf(),
        message,
    };
    if !opts.delimiter.is_ascii() {
        return Err(data_err(format!(
            "delimiter {:?} must be ASCII",
            opts.delimiter
        )));
    }
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(opts.delimiter as u8)
        .has_headers(opts.column_names.is_none())
        .trim(csv::Trim::All)
        .flexible(false)
        .from_path(path)?;
    let header: Vec<String> = match &opts.column_names {
        Some(names) => names.clone(),
        None => reader.headers()?.iter().map(str::to_string).collect(),
    };
    let mut records: Vec<Vec<String>> = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        if rec.len() != header.len() {
            return Err(data_err(format!(
                "record has {} fields, header has {}",
                rec.len(),
                header.len()
            )));
        }
        records.push(rec.iter().map(str::to_string).collect());
    }

    let index = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| data_err(format!("no column named {name:?}")))
    };
    if opts.target_columns.is_empty() {
        return Err(data_err("no target column given".into()));
    }
    let target_idx = opts
        .target_columns
        .iter()
        .map(|c| index(c))
        .collect::<Result<Vec<_>>>()?;
    let stratify_idx = opts.stratify.as_deref().map(index).transpose()?;
    for c in opts.drop_columns.iter().chain(&opts.categorical) {
        index(c)?;
    }
    let feature_idx: Vec<usize> = (0..header.len())
        .filter(|i| {
            !target_idx.contains(i)
                && Some(*i) != stratify_idx
                && !opts.drop_columns.contains(&header[*i])
        })
        .collect();
    if feature_idx.is_empty() {
        return Err(data_err("no feature columns left".into()));
    }
    let classification = opts.task == TaskKind::Classification;
    if classification && target_idx.len() != 1 {
        return Err(data_err(
            "classification needs exactly one target column".into(),
        ));
    }

    let kinds: BTreeMap<usize, Column> = feature_idx
        .iter()
        .map(|&i| {
            let present: Vec<&str> = records
                .iter()
                .map(|r| r[i].as_str())
                .filter(|c| !is_missing(c))
                .collect();
            let non_numeric = present.iter().filter(|c| parse_number(c).is_none()).count();
            let categorical =
                opts.categorical.contains(&header[i]) || 2 * non_numeric > present.len();
            (
                i,
                if categorical {
                    Column::Categorical
                } else {
                    Column::Numeric
                },
            )
        })
        .collect();
    let label_target = classification && opts.bin_edges.is_none();

    let keep: Vec<&Vec<String>> = records
        .iter()
        .filter(|r| {
            let features_ok = feature_idx.iter().all(|&i| {
                !is_missing(&r[i])
                    && (matches!(kinds[&i], Column::Categorical) || parse_number(&r[i]).is_some())
            });
            let targets_ok = target_idx
                .iter()
                .all(|&i| !is_missing(&r[i]) && (label_target || parse_number(&r[i]).is_some()));
            let stratify_ok = stratify_idx.is_none_or(|i| !is_missing(&r[i]));
            features_ok && targets_ok && stratify_ok
        })
        .collect();
    let dropped = records.len() - keep.len();
    if keep.is_empty() {
        return Err(data_err(format!("no usable rows ({dropped} dropped)")));
    }

    let mut encodings = BTreeMap::new();
    let mut feature_names = Vec::new();
    let mut columns: Vec<Vec<f64>> = Vec::new();
    for &i in &feature_idx {
        match kinds[&i] {
            Column::Numeric => {
                feature_names.push(header[i].clone());
                columns.push(
                    keep.iter()
                        .map(|r| parse_number(&r[i]).unwrap_or(0.0))
                        .collect(),
                );
            }
            Column::Categorical => {
                let cats = sorted_categories(keep.iter().map(|r| r[i].as_str()));
                for cat in &cats {
                    feature_names.push(format!("{}={cat}", header[i]));
                    columns.push(
                        keep.iter()
                            .map(|r| f64::from(u8::from(&r[i] == cat)))
                            .collect(),
                    );
                }
                encodings.insert(header[i].clone(), cats);
            }
        }
    }
    let n = keep.len();
    let mut features = vec![0.0; n * columns.len()];
    for (c, col) in columns.iter().enumerate() {
        for (r, v) in col.iter().enumerate() {
            features[r * columns.len() + c] = *v;
        }
    }

    let (targets, task) = if !classification {
        let k = target_idx.len();
        let mut t = Vec::with_capacity(n * k);
        for r in &keep {
            t.extend(
                target_idx
                    .iter()
                    .map(|&i| parse_number(&r[i]).unwrap_or(0.0)),
            );
        }
        (Matrix::new(n, k, t)?, Task::Regression)
    } else if let Some(edges) = &opts.bin_edges {
        if edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(data_err("bin_edges must be strictly ascending".into()));
        }
        let i = target_idx[0];
        let t: Vec<f64> = keep
            .iter()
            .map(|r| {
                let v = parse_number(&r[i]).unwrap_or(0.0);
                edges.iter().filter(|&&e| e < v).count() as f64
            })
            .collect();
        let names = (0..=edges.len()).map(|c| bin_label(edges, c)).collect();
        encodings.insert(header[i].clone(), names);
        (
            Matrix::column(t),
            Task::Classification {
                n_classes: edges.len() + 1,
            },
        )
    } else {
        let i = target_idx[0];
        let cats = sorted_categories(keep.iter().map(|r| r[i].as_str()));
        let t: Vec<f64> = keep
            .iter()
            .map(|r| cats.iter().position(|c| *c == r[i]).unwrap_or(0) as f64)
            .collect();
        let n_classes = cats.len();
        encodings.insert(header[i].clone(), cats);
        (Matrix::column(t), Task::Classification { n_classes })
    };

    let mut ds = Dataset::new(
        Matrix::new(n, columns.len(), features)?,
        targets,
        feature_names,
        target_idx.iter().map(|&i| header[i].clone()).collect(),
        task,
    )?;
    ds.stratify = stratify_idx.map(|i| keep.iter().map(|r| r[i].clone()).collect());
    ds.dropped_rows = dropped;
    ds.encodings = encodings;
    Ok(ds)
}

fn bin_label(edges: &[f64], class: usize) -> String {
    match (class.checked_sub(1).map(|i| edges[i]), edges.get(class)) {
        (None, Some(hi)) => format!("<= {hi}"),
        (Some(lo), Some(hi)) => format!("({lo}, {hi}]"),
        (Some(lo), None) => format!("> {lo}"),
        (None, None) => "all".into(),
    }
}

/// Reads the named feature columns of a headed file for prediction. A name
/// of the form `col=value` that is not itself a column is rebuilt as a
/// one-hot indicator of `col`. Every row must be complete.
pub fn load_features(path: &Path, names: &[String], delimiter: char) -> Result<Matrix> {
    let data_err = |message: String| Error::Data {
        path: path.to_path_buf(),
        message,
    };
    if !delimiter.is_ascii() {
        return Err(data_err(format!("delimiter {delimiter:?} must be ASCII")));
    }
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter as u8)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let find = |name: &str| header.iter().position(|h| h == name);
    enum Source {
        Value(usize),
        Indicator(usize, String),
    }
    let sources = names
        .iter()
        .map(|name| {
            if let Some(i) = find(name) {
                return Ok(Source::Value(i));
            }
            name.split_once('=')
                .and_then(|(col, cat)| find(col).map(|i| Source::Indicator(i, cat.to_string())))
                .ok_or_else(|| data_err(format!("no column for feature {name:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut data = Vec::new();
    let mut rows = 0;
    for (r, rec) in reader.records().enumerate() {
        let rec = rec?;
        for (src, name) in sources.iter().zip(names) {
            let v = match src {
                Source::Value(i) => parse_number(&rec[*i]),
                Source::Indicator(i, cat) => {
                    (!is_missing(&rec[*i])).then(|| f64::from(u8::from(&rec[*i] == cat)))
                }
            };
            data.push(v.ok_or_else(|| {
                data_err(format!(
                    "row {}: feature {name:?} is missing or not numeric",
                    r + 1
                ))
            })?);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(data_err("no rows".into()));
    }
    Matrix::new(rows, names.len(), data)
}
