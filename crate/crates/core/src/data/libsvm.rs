//! LIBSVM text reader. Every line `label idx:val ...` becomes one column of a
//! dense matrix; absent features are stored as zeros.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Samples parsed from a LIBSVM file: one column per line, `d` equal to the
/// largest feature index seen.
#[derive(Debug, Clone)]
pub struct LibsvmData<F: Scalar> {
    pub matrix: DataMatrix<F>,
    pub labels: Vec<F>,
}

/// Reads a LIBSVM file. With `densify == false` every line must already list
/// all features `1..=d`; with `densify == true` missing features become zero.
pub fn load_libsvm<F: Scalar>(path: impl AsRef<Path>, densify: bool) -> Result<LibsvmData<F>> {
    let text = fs::read_to_string(path)?;
    parse_libsvm(&text, densify)
}

pub fn parse_libsvm<F: Scalar>(text: &str, densify: bool) -> Result<LibsvmData<F>> {
    let mut rows: Vec<(usize, Vec<(usize, f64)>)> = Vec::new();
    let mut labels = Vec::new();
    let mut d = 0usize;

    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut tokens = content.split_whitespace();
        let label_tok = tokens.next().expect("non-empty line has a token");
        let label: f64 = label_tok.parse().map_err(|_| Error::Parse {
            line,
            msg: format!("invalid label `{label_tok}`"),
        })?;

        let mut entries = Vec::new();
        let mut last = 0usize;
        for tok in tokens {
            let (idx, val) = tok.split_once(':').ok_or_else(|| Error::Parse {
                line,
                msg: format!("expected `index:value`, got `{tok}`"),
            })?;
            let idx: usize = idx.parse().map_err(|_| Error::Parse {
                line,
                msg: format!("invalid feature index `{idx}`"),
            })?;
            if idx == 0 {
                return Err(Error::Parse {
                    line,
                    msg: "feature indices are 1-based".into(),
                });
            }
            if idx <= last {
                return Err(Error::Parse {
                    line,
                    msg: format!("feature index {idx} does not follow {last} in ascending order"),
                });
            }
            let val: f64 = val.parse().map_err(|_| Error::Parse {
                line,
                msg: format!("invalid feature value `{val}`"),
            })?;
            if !val.is_finite() {
                return Err(Error::Parse {
                    line,
                    msg: format!("non-finite value for feature {idx}"),
                });
            }
            last = idx;
            entries.push((idx, val));
        }
        d = d.max(last);
        labels.push(F::from_f64(label));
        rows.push((line, entries));
    }

    if rows.is_empty() {
        return Err(Error::Parse {
            line: 0,
            msg: "file contains no samples".into(),
        });
    }
    if d == 0 {
        return Err(Error::Parse {
            line: rows[0].0,
            msg: "no features present in any line".into(),
        });
    }
    if !densify {
        if let Some((line, _)) = rows.iter().find(|(_, e)| e.len() != d) {
            return Err(Error::Parse {
                line: *line,
                msg: format!("line does not list all {d} features and densify is off"),
            });
        }
    }

    let n = rows.len();
    let mut values = vec![F::zero(); d * n];
    for (i, (_, entries)) in rows.iter().enumerate() {
        for &(idx, val) in entries {
            values[i * d + idx - 1] = F::from_f64(val);
        }
    }
    Ok(LibsvmData {
        matrix: DataMatrix::new(d, n, values)?,
        labels,
    })
}

/// Writes one line per column: `label idx:val` for the nonzero entries.
pub fn write_libsvm<F: Scalar, W: Write>(
    out: &mut W,
    matrix: &DataMatrix<F>,
    labels: &[F],
) -> Result<()> {
    assert_eq!(labels.len(), matrix.n());
    for (col, label) in matrix.columns().zip(labels) {
        write!(out, "{label}")?;
        for (j, x) in col.iter().enumerate() {
            if *x != F::zero() {
                write!(out, " {}:{}", j + 1, x)?;
            }
        }
        writeln!(out)?;
    }
    Ok(())
}
