//! Row streams for the pass-bounded coreset pipelines. A `RowSource` yields
//! folded rows x_i one at a time; every full traversal is counted, which is
//! how the two-pass contract is verified. File-backed sources re-parse the
//! file on each pass instead of materializing it.

use crate::data::{fold_row, map_label, parse_libsvm_line, LabelColumn};
use crate::error::{Error, Result};
use crate::objective::FoldedDesignMatrix;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

/// A restartable stream of folded design rows.
pub trait RowSource {
    /// Row count if already known (in-memory data, or a file after one pass).
    fn known_rows(&self) -> Option<usize>;

    /// Column count if already known.
    fn known_dim(&self) -> Option<usize>;

    /// Stream every row once, in index order, into `f(index, row)`.
    /// Returns the number of rows seen. Each call is one pass.
    fn pass(&mut self, f: &mut dyn FnMut(usize, &[f64]) -> Result<()>) -> Result<usize>;

    /// Full traversals made so far.
    fn passes_made(&self) -> usize;
}

/// In-memory source over an already-folded design matrix.
pub struct MatrixSource<'a> {
    matrix: &'a FoldedDesignMatrix,
    passes: usize,
}

impl<'a> MatrixSource<'a> {
    pub fn new(matrix: &'a FoldedDesignMatrix) -> Self {
        MatrixSource { matrix, passes: 0 }
    }
}

impl<'a> RowSource for MatrixSource<'a> {
    fn known_rows(&self) -> Option<usize> {
        Some(self.matrix.n())
    }

    fn known_dim(&self) -> Option<usize> {
        Some(self.matrix.dim())
    }

    fn pass(&mut self, f: &mut dyn FnMut(usize, &[f64]) -> Result<()>) -> Result<usize> {
        self.passes += 1;
        for i in 0..self.matrix.n() {
            f(i, self.matrix.row(i).as_slice().unwrap())?;
        }
        Ok(self.matrix.n())
    }

    fn passes_made(&self) -> usize {
        self.passes
    }
}

/// On-disk text format of a labeled dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileFormat {
    Csv { label: LabelColumn, header: bool },
    Libsvm,
}

/// File-backed source: parses, folds, and streams rows on every pass.
/// Dimensions are discovered during the first pass.
pub struct FileRowSource {
    path: PathBuf,
    format: FileFormat,
    add_intercept: bool,
    /// For LIBSVM input the width must be fixed up front (a later row could
    /// otherwise widen the matrix); pass it in, or learn it from a CSV pass.
    dim: Option<usize>,
    rows: Option<usize>,
    passes: usize,
}

impl FileRowSource {
    pub fn new(path: &Path, format: FileFormat, add_intercept: bool) -> Self {
        FileRowSource {
            path: path.to_path_buf(),
            format,
            add_intercept,
            dim: None,
            rows: None,
            passes: 0,
        }
    }

    /// Preset the feature width (before the intercept), for LIBSVM files
    /// whose true dimension is known to the caller.
    pub fn with_feature_dim(mut self, d: usize) -> Self {
        self.dim = Some(d + self.add_intercept as usize);
        self
    }

    /// Count rows and learn the width; counts as a pass.
    pub fn scan_metadata(&mut self) -> Result<(usize, usize)> {
        let n = self.pass(&mut |_, _| Ok(()))?;
        Ok((n, self.dim.expect("dim set after pass")))
    }
}

impl RowSource for FileRowSource {
    fn known_rows(&self) -> Option<usize> {
        self.rows
    }

    fn known_dim(&self) -> Option<usize> {
        self.dim
    }

    fn pass(&mut self, f: &mut dyn FnMut(usize, &[f64]) -> Result<()>) -> Result<usize> {
        self.passes += 1;
        let reader = BufReader::new(std::fs::File::open(&self.path)?);
        let mut index = 0usize;
        let mut buf: Vec<f64> = Vec::new();
        let mut raw: Vec<f64> = Vec::new();
        match self.format {
            FileFormat::Csv { label, header } => {
                let mut skipped_header = false;
                for (line_idx, line) in reader.lines().enumerate() {
                    let line_no = line_idx + 1;
                    let line = line?;
                    if line.trim().is_empty() {
                        continue;
                    }
                    if header && !skipped_header {
                        skipped_header = true;
                        continue;
                    }
                    let fields: Vec<&str> = line.split(',').collect();
                    let label_idx = match label {
                        LabelColumn::Last => fields.len() - 1,
                        LabelColumn::Index(i) => {
                            if i >= fields.len() {
                                return Err(Error::Parse {
                                    line: line_no,
                                    message: format!("label column {i} out of range"),
                                });
                            }
                            i
                        }
                    };
                    raw.clear();
                    let mut y = 0u8;
                    for (fi, field) in fields.iter().enumerate() {
                        let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
                            line: line_no,
                            message: format!("expected a number, got {field:?}"),
                        })?;
                        if fi == label_idx {
                            y = map_label(v, line_no)?.0;
                        } else {
                            raw.push(v);
                        }
                    }
                    let width = raw.len() + self.add_intercept as usize;
                    match self.dim {
                        None => self.dim = Some(width),
                        Some(expect) => {
                            if width != expect {
                                return Err(Error::Parse {
                                    line: line_no,
                                    message: format!(
                                        "row width {width} differs from {expect}"
                                    ),
                                });
                            }
                        }
                    }
                    fold_row(&raw, y, self.add_intercept, &mut buf);
                    f(index, &buf)?;
                    index += 1;
                }
            }
            FileFormat::Libsvm => {
                let d_total = self.dim.ok_or_else(|| {
                    Error::invalid(
                        "libsvm streaming needs the feature dimension up front; \
                         use with_feature_dim or scan the file",
                    )
                })?;
                let d_features = d_total - self.add_intercept as usize;
                for (line_idx, line) in reader.lines().enumerate() {
                    let line = line?;
                    if let Some((label, _neg, entries)) =
                        parse_libsvm_line(&line, line_idx + 1)?
                    {
                        raw.clear();
                        raw.resize(d_features, 0.0);
                        for (idx, val) in entries {
                            if idx > d_features {
                                return Err(Error::Parse {
                                    line: line_idx + 1,
                                    message: format!(
                                        "feature index {idx} exceeds dimension {d_features}"
                                    ),
                                });
                            }
                            raw[idx - 1] = val;
                        }
                        fold_row(&raw, label, self.add_intercept, &mut buf);
                        f(index, &buf)?;
                        index += 1;
                    }
                }
            }
        }
        self.rows = Some(index);
        if index == 0 {
            return Err(Error::invalid(format!(
                "{} contains no data rows",
                self.path.display()
            )));
        }
        Ok(index)
    }

    fn passes_made(&self) -> usize {
        self.passes
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{fold_labels, load_csv, LabeledDataset};
    use std::io::Write as _;

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn matrix_source_counts_passes() {
        let x = FoldedDesignMatrix::new(ndarray::array![[1.0, 2.0], [3.0, 4.0]]).unwrap();
        let mut src = MatrixSource::new(&x);
        assert_eq!(src.passes_made(), 0);
        let mut seen = 0;
        src.pass(&mut |_, _| {
            seen += 1;
            Ok(())
        })
        .unwrap();
        src.pass(&mut |_, _| Ok(())).unwrap();
        assert_eq!(seen, 2);
        assert_eq!(src.passes_made(), 2);
    }

    #[test]
    fn file_source_streams_folded_rows() {
        let f = write_temp("1,2,1\n3,4,0\n");
        let mut src = FileRowSource::new(
            f.path(),
            FileFormat::Csv {
                label: LabelColumn::Last,
                header: false,
            },
            true,
        );
        assert_eq!(src.known_rows(), None);
        let mut rows: Vec<Vec<f64>> = Vec::new();
        src.pass(&mut |i, row| {
            assert_eq!(i, rows.len());
            rows.push(row.to_vec());
            Ok(())
        })
        .unwrap();
        assert_eq!(src.known_rows(), Some(2));
        assert_eq!(src.known_dim(), Some(3));
        assert_eq!(src.passes_made(), 1);
        // Matches the in-memory fold.
        let ds = load_csv(f.path(), LabelColumn::Last, false).unwrap();
        let folded = fold_labels(&ds, true).unwrap();
        for (i, row) in rows.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                assert_eq!(*v, folded.rows()[[i, j]]);
            }
        }
    }

    #[test]
    fn libsvm_streaming_needs_dimension() {
        let f = write_temp("+1 1:0.5 3:2\n-1 2:1\n");
        let mut src = FileRowSource::new(f.path(), FileFormat::Libsvm, false);
        assert!(src.pass(&mut |_, _| Ok(())).is_err());
        let mut src =
            FileRowSource::new(f.path(), FileFormat::Libsvm, false).with_feature_dim(3);
        let mut count = 0;
        src.pass(&mut |_, row| {
            assert_eq!(row.len(), 3);
            count += 1;
            Ok(())
        })
        .unwrap();
        assert_eq!(count, 2);
    }

    #[test]
    fn empty_file_is_an_error() {
        let f = write_temp("");
        let mut src = FileRowSource::new(
            f.path(),
            FileFormat::Csv {
                label: LabelColumn::Last,
                header: false,
            },
            false,
        );
        assert!(src.pass(&mut |_, _| Ok(())).is_err());
    }

    #[test]
    fn scan_metadata_counts_a_pass() {
        let ds = LabeledDataset {
            features: ndarray::array![[1.0], [2.0], [3.0]],
            labels: vec![0, 1, 0],
            feature_names: None,
            label_mapping: "0/1".into(),
        };
        let f = tempfile::NamedTempFile::new().unwrap();
        crate::data::write_csv(&ds, f.path()).unwrap();
        let mut src = FileRowSource::new(
            f.path(),
            FileFormat::Csv {
                label: LabelColumn::Last,
                header: false,
            },
            false,
        );
        let (n, d) = src.scan_metadata().unwrap();
        assert_eq!((n, d), (3, 1));
        assert_eq!(src.passes_made(), 1);
    }
}
