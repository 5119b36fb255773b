//! Training data, model state and gap memory.

mod binary;
mod libsvm;
mod matrix;
mod state;
mod synth;

pub use binary::{decode_binary, encode_binary, load_binary, save_binary, HEADER_LEN, MAGIC, VERSION};
pub use libsvm::{load_libsvm, parse_libsvm, write_libsvm, LibsvmData};
pub use matrix::DataMatrix;
pub use state::{GapMemory, ModelState};
pub use synth::{synth_classification, synth_lasso, SynthLasso};

use crate::error::{invalid, Result};
use crate::glm::ModelKind;
use crate::scalar::Scalar;

/// A training matrix laid out for one model family.
///
/// Lasso optimizes over features, so the samples matrix is transposed and the
/// labels become the regression targets (`d` = samples, `n` = features). The
/// SVM dual optimizes over samples; each column is multiplied by its label so
/// that `<w, d_i>` is the only data access either task needs.
#[derive(Debug, Clone)]
pub struct Dataset<F: Scalar> {
    pub matrix: DataMatrix<F>,
    /// Regression targets (Lasso, length `d`). Empty for SVM.
    pub targets: Vec<F>,
    /// Per-column labels in {-1, +1} (SVM). Empty for Lasso.
    pub labels: Vec<F>,
}

impl<F: Scalar> Dataset<F> {
    /// Builds a dataset from samples stored one per column (the LIBSVM layout).
    pub fn from_samples(kind: ModelKind, samples: DataMatrix<F>, labels: Vec<F>) -> Result<Self> {
        if labels.len() != samples.n() {
            return invalid(format!(
                "{} labels for {} samples",
                labels.len(),
                samples.n()
            ));
        }
        match kind {
            ModelKind::Lasso => Ok(Self {
                matrix: samples.transpose(),
                targets: labels,
                labels: Vec::new(),
            }),
            ModelKind::Svm => {
                let signs: Vec<F> = labels
                    .iter()
                    .map(|&y| if y > F::zero() { F::one() } else { -F::one() })
                    .collect();
                Ok(Self {
                    matrix: samples.scale_columns(&signs),
                    targets: Vec::new(),
                    labels: signs,
                })
            }
        }
    }

    pub fn lasso(matrix: DataMatrix<F>, targets: Vec<F>) -> Result<Self> {
        if targets.len() != matrix.d() {
            return invalid(format!(
                "{} targets for a matrix with {} rows",
                targets.len(),
                matrix.d()
            ));
        }
        Ok(Self {
            matrix,
            targets,
            labels: Vec::new(),
        })
    }

    pub fn cast<G: Scalar>(&self) -> Dataset<G> {
        let conv = |v: &[F]| v.iter().map(|x| G::from_f64(x.as_f64())).collect();
        Dataset {
            matrix: self.matrix.cast(),
            targets: conv(&self.targets),
            labels: conv(&self.labels),
        }
    }
}
