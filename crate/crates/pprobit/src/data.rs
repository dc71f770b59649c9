//! Dataset ingestion: numeric CSV and sparse LIBSVM-style text, label
//! folding into the design matrix, and a synthetic two-cluster generator
//! with planted outliers. Everything is densified on load; the paper-scale
//! problems have d ≤ 128, where dense rows are simplest and fastest.

use crate::error::{Error, Result};
use crate::objective::FoldedDesignMatrix;
use ndarray::{Array1, Array2};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

/// Binary-labeled dataset: features Z (n×d) and labels in {0, 1}.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    pub features: Array2<f64>,
    pub labels: Vec<u8>,
    pub feature_names: Option<Vec<String>>,
    /// How raw label values were mapped, e.g. "-1/+1 -> 0/1".
    pub label_mapping: String,
}

impl LabeledDataset {
    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }
}

/// Which CSV column holds the label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelColumn {
    Last,
    Index(usize),
}

pub(crate) fn map_label(raw: f64, line: usize) -> Result<(u8, bool)> {
    // Returns (label, was_negative_one_encoding).
    if raw == 0.0 {
        Ok((0, false))
    } else if raw == 1.0 {
        Ok((1, false))
    } else if raw == -1.0 {
        Ok((0, true))
    } else {
        Err(Error::Parse {
            line,
            message: format!("label must be in {{0,1}} or {{-1,+1}}, got {raw}"),
        })
    }
}

fn parse_field(field: &str, line: usize) -> Result<f64> {
    field.trim().parse::<f64>().map_err(|_| Error::Parse {
        line,
        message: format!("expected a number, got {field:?}"),
    })
}

/// Load a comma-separated numeric file. Labels must be {0,1} or {−1,+1};
/// the −1/+1 encoding is mapped to 0/1 and recorded in the metadata.
pub fn load_csv(path: &Path, label_column: LabelColumn, has_header: bool) -> Result<LabeledDataset> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut features: Vec<f64> = Vec::new();
    let mut labels: Vec<u8> = Vec::new();
    let mut feature_names: Option<Vec<String>> = None;
    let mut d: Option<usize> = None;
    let mut saw_negative = false;
    let mut data_line = 0usize;
    for (line_idx, line) in reader.lines().enumerate() {
        let line_no = line_idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if has_header && data_line == 0 && feature_names.is_none() {
            feature_names = Some(line.split(',').map(|s| s.trim().to_string()).collect());
            continue;
        }
        data_line += 1;
        let fields: Vec<&str> = line.split(',').collect();
        let label_idx = match label_column {
            LabelColumn::Last => fields.len() - 1,
            LabelColumn::Index(i) => {
                if i >= fields.len() {
                    return Err(Error::Parse {
                        line: line_no,
                        message: format!("label column {i} out of range ({} fields)", fields.len()),
                    });
                }
                i
            }
        };
        let width = fields.len() - 1;
        match d {
            None => d = Some(width),
            Some(expect) => {
                if width != expect {
                    return Err(Error::Parse {
                        line: line_no,
                        message: format!("expected {expect} feature fields, got {width}"),
                    });
                }
            }
        }
        let (label, neg) = map_label(parse_field(fields[label_idx], line_no)?, line_no)?;
        saw_negative |= neg;
        labels.push(label);
        for (i, field) in fields.iter().enumerate() {
            if i != label_idx {
                let v = parse_field(field, line_no)?;
                if !v.is_finite() {
                    return Err(Error::Parse {
                        line: line_no,
                        message: "non-finite feature value".into(),
                    });
                }
                features.push(v);
            }
        }
    }
    let d = d.ok_or_else(|| Error::invalid(format!("{} contains no data rows", path.display())))?;
    let n = labels.len();
    // Drop label name from the header if it was provided.
    if let Some(names) = feature_names.as_mut() {
        if names.len() == d + 1 {
            match label_column {
                LabelColumn::Last => {
                    names.pop();
                }
                LabelColumn::Index(i) => {
                    names.remove(i);
                }
            }
        }
    }
    Ok(LabeledDataset {
        features: Array2::from_shape_vec((n, d), features)
            .map_err(|e| Error::invalid(e.to_string()))?,
        labels,
        feature_names,
        label_mapping: if saw_negative {
            "-1/+1 -> 0/1".into()
        } else {
            "0/1".into()
        },
    })
}

pub(crate) fn parse_libsvm_line(
    line: &str,
    line_no: usize,
) -> Result<Option<(u8, bool, Vec<(usize, f64)>)>> {
    let trimmed = line.trim();
    if trimmed.is_empty() {
        return Ok(None);
    }
    let mut tokens = trimmed.split_whitespace();
    let label_tok = tokens.next().unwrap();
    let raw = label_tok.parse::<f64>().map_err(|_| Error::Parse {
        line: line_no,
        message: format!("bad label token {label_tok:?}"),
    })?;
    let (label, neg) = map_label(raw, line_no)?;
    let mut entries = Vec::new();
    for token in tokens {
        let (idx_str, val_str) = token.split_once(':').ok_or_else(|| Error::Parse {
            line: line_no,
            message: format!("expected index:value, got {token:?}"),
        })?;
        let idx: i64 = idx_str.parse().map_err(|_| Error::Parse {
            line: line_no,
            message: format!("bad feature index {idx_str:?}"),
        })?;
        if idx < 1 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("feature indices are 1-based, got {idx}"),
            });
        }
        let val = parse_field(val_str, line_no)?;
        entries.push((idx as usize, val));
    }
    Ok(Some((label, neg, entries)))
}

/// Load sparse `label idx:val idx:val …` text with 1-based indices; the
/// matrix is densified with d = the largest index seen.
pub fn load_libsvm(path: &Path) -> Result<LabeledDataset> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut labels = Vec::new();
    let mut saw_negative = false;
    let mut d = 0usize;
    for (line_idx, line) in reader.lines().enumerate() {
        let line = line?;
        if let Some((label, neg, entries)) = parse_libsvm_line(&line, line_idx + 1)? {
            saw_negative |= neg;
            labels.push(label);
            for &(idx, _) in &entries {
                d = d.max(idx);
            }
            rows.push(entries);
        }
    }
    if rows.is_empty() {
        return Err(Error::invalid(format!(
            "{} contains no data rows",
            path.display()
        )));
    }
    let n = rows.len();
    let mut features = Array2::zeros((n, d));
    for (i, entries) in rows.iter().enumerate() {
        for &(idx, val) in entries {
            features[[i, idx - 1]] = val;
        }
    }
    Ok(LabeledDataset {
        features,
        labels,
        feature_names: None,
        label_mapping: if saw_negative {
            "-1/+1 -> 0/1".into()
        } else {
            "0/1".into()
        },
    })
}

/// Fold labels into the features: x_i = −(2y_i−1)·z_i, with an optional
/// leading intercept column appended before folding.
pub fn fold_labels(ds: &LabeledDataset, add_intercept: bool) -> Result<FoldedDesignMatrix> {
    let n = ds.n();
    let d_in = ds.dim();
    let d = d_in + add_intercept as usize;
    let mut rows = Array2::zeros((n, d));
    for i in 0..n {
        let sign = -(2.0 * ds.labels[i] as f64 - 1.0);
        let mut col = 0;
        if add_intercept {
            rows[[i, 0]] = sign;
            col = 1;
        }
        for j in 0..d_in {
            rows[[i, col + j]] = sign * ds.features[[i, j]];
        }
    }
    FoldedDesignMatrix::new(rows)
}

/// Fold a single raw feature row in place (streaming counterpart of
/// `fold_labels`).
pub fn fold_row(features: &[f64], label: u8, add_intercept: bool, out: &mut Vec<f64>) {
    let sign = -(2.0 * label as f64 - 1.0);
    out.clear();
    if add_intercept {
        out.push(sign);
    }
    out.extend(features.iter().map(|&z| sign * z));
}

/// Per-column scaling to unit max-abs; returns the scale factors applied.
pub fn scale_features_max_abs(ds: &mut LabeledDataset) -> Vec<f64> {
    let d = ds.dim();
    let mut scales = vec![1.0; d];
    for j in 0..d {
        let max = ds.features.column(j).iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if max > 0.0 {
            scales[j] = max;
            for i in 0..ds.n() {
                ds.features[[i, j]] /= max;
            }
        }
    }
    scales
}

/// Parameters for the synthetic two-cluster instance with planted outliers.
#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    pub n: usize,
    pub d: usize,
    pub seed: u64,
    /// Fraction of all points turned into displaced members of class 1.
    pub outlier_fraction: f64,
    /// Displacement factor (> 1) pushing outliers deep into class 0 territory.
    pub outlier_scale: f64,
    /// Distance between the two cluster centers.
    pub target_separation: f64,
}

impl SyntheticSpec {
    fn validate(&self) -> Result<()> {
        if self.n <= self.d {
            return Err(Error::invalid("synthetic spec needs n > d"));
        }
        if !(0.0..1.0).contains(&self.outlier_fraction) {
            return Err(Error::invalid("outlier_fraction must lie in [0, 1)"));
        }
        if !(self.outlier_scale > 1.0) {
            return Err(Error::invalid("outlier_scale must exceed 1"));
        }
        if !self.target_separation.is_finite() || self.target_separation < 0.0 {
            return Err(Error::invalid("target_separation must be nonnegative"));
        }
        Ok(())
    }
}

/// Two Gaussian clusters at ±(separation/2) along a random unit direction,
/// with `outlier_fraction`·n points of class 1 displaced to the far side of
/// class 0 by `outlier_scale`. Reproducible from the seed.
pub fn make_synthetic(spec: &SyntheticSpec) -> Result<LabeledDataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let d = spec.d;
    let mut direction = Array1::zeros(d);
    let mut norm_sq = 0.0;
    while norm_sq == 0.0 {
        for j in 0..d {
            direction[j] = rng.sample::<f64, _>(rand_distr::StandardNormal);
        }
        norm_sq = direction.dot(&direction);
    }
    direction /= norm_sq.sqrt();

    let n = spec.n;
    let n_outliers = (spec.outlier_fraction * n as f64).round() as usize;
    let n_regular = n - n_outliers;
    let n_class0 = n_regular - n_regular / 2;
    let half_sep = spec.target_separation / 2.0;

    let mut features = Array2::zeros((n, d));
    let mut labels = vec![0u8; n];
    for i in 0..n {
        let (center_scale, label) = if i < n_class0 {
            (-half_sep, 0u8)
        } else if i < n_regular {
            (half_sep, 1u8)
        } else {
            // Outliers: labeled class 1, placed far beyond class 0's center.
            (-spec.outlier_scale * half_sep, 1u8)
        };
        labels[i] = label;
        for j in 0..d {
            let noise: f64 = rng.sample(rand_distr::StandardNormal);
            features[[i, j]] = center_scale * direction[j] + noise;
        }
    }
    Ok(LabeledDataset {
        features,
        labels,
        feature_names: None,
        label_mapping: "0/1".into(),
    })
}

/// Write a dataset as CSV with the label in the last column. Values are
/// printed with Rust's shortest round-trip float formatting.
pub fn write_csv(ds: &LabeledDataset, path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for i in 0..ds.n() {
        let mut fields: Vec<String> = (0..ds.dim()).map(|j| ds.features[[i, j]].to_string()).collect();
        fields.push(ds.labels[i].to_string());
        writeln!(out, "{}", fields.join(","))?;
    }
    Ok(())
}

/// Write a coreset as CSV `weight, x_1..x_d`.
pub fn write_coreset_csv(coreset: &crate::sampling::WeightedCoreset, path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for j in 0..coreset.k() {
        let mut fields = vec![coreset.weights[j].to_string()];
        fields.extend((0..coreset.dim()).map(|c| coreset.rows[[j, c]].to_string()));
        writeln!(out, "{}", fields.join(","))?;
    }
    Ok(())
}
