//! Generalized linear models of the form `f(D alpha) + sum_i g_i(alpha_i)`.
//!
//! Two instances are provided:
//!
//! * Lasso: `f(u) = 0.5 ||u - y||^2`, `g_i(a) = lambda |a|` restricted to
//!   `|a| <= B`. The restriction keeps the conjugate `g_i*` finite so the
//!   duality gap is a usable certificate.
//! * Dual hinge-loss SVM: `f(u) = ||u||^2 / (2 lambda n^2)`,
//!   `g_i(a) = -a/n` on `[0, 1]`. Columns are label-scaled samples.
//!
//! All scalar maps are evaluated in double precision regardless of the
//! storage precision of the data.

use serde::{Deserialize, Serialize};

use crate::data::DataMatrix;
use crate::error::{invalid, Result};
use crate::scalar::Scalar;

/// Relative slack used when checking box/level-set domain membership.
const DOMAIN_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Lasso,
    Svm,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::Lasso => "lasso",
            ModelKind::Svm => "svm",
        })
    }
}

/// The dual-side vector is `w = scale * (v - shift)`; `shift` is the target
/// vector for Lasso and absent for SVM.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualMap {
    pub scale: f64,
    pub shift_by_targets: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    pub kind: ModelKind,
    pub lambda: f64,
    pub n: usize,
    /// Level-set bound `B` on `|alpha_i|` (Lasso); zero for SVM.
    pub lipschitz_b: f64,
}

impl Problem {
    /// Lasso with the bound initialized from the targets.
    pub fn lasso<F: Scalar>(lambda: f64, n: usize, targets: &[F]) -> Result<Self> {
        let lipschitz_b = init_lipschitz_bound(lambda, targets)?;
        Self::lasso_with_bound(lambda, n, lipschitz_b)
    }

    pub fn lasso_with_bound(lambda: f64, n: usize, lipschitz_b: f64) -> Result<Self> {
        check_lambda(lambda)?;
        if n == 0 {
            return invalid("problem needs n >= 1");
        }
        if !(lipschitz_b >= 0.0 && lipschitz_b.is_finite()) {
            return invalid(format!("Lipschitz bound must be finite and >= 0, got {lipschitz_b}"));
        }
        Ok(Self {
            kind: ModelKind::Lasso,
            lambda,
            n,
            lipschitz_b,
        })
    }

    pub fn svm(lambda: f64, n: usize) -> Result<Self> {
        check_lambda(lambda)?;
        if n == 0 {
            return invalid("problem needs n >= 1");
        }
        Ok(Self {
            kind: ModelKind::Svm,
            lambda,
            n,
            lipschitz_b: 0.0,
        })
    }

    /// `lambda * n^2`, the curvature constant of the SVM data term.
    #[inline]
    fn svm_c(&self) -> f64 {
        self.lambda * (self.n as f64) * (self.n as f64)
    }

    pub fn dual_map(&self) -> DualMap {
        match self.kind {
            ModelKind::Lasso => DualMap {
                scale: 1.0,
                shift_by_targets: true,
            },
            ModelKind::Svm => DualMap {
                scale: 1.0 / self.svm_c(),
                shift_by_targets: false,
            },
        }
    }

    /// Primal-dual mapping `w = grad f(v)`.
    pub fn w_from_v<F: Scalar>(&self, v: &[F], targets: &[F]) -> Vec<F> {
        match self.kind {
            ModelKind::Lasso => {
                assert_eq!(v.len(), targets.len(), "v and targets differ in length");
                v.iter().zip(targets).map(|(&a, &y)| a - y).collect()
            }
            ModelKind::Svm => {
                let s = 1.0 / self.svm_c();
                v.iter().map(|&a| F::from_f64(a.as_f64() * s)).collect()
            }
        }
    }

    /// Coordinate-wise duality gap
    /// `alpha_i * dot + g_i(alpha_i) + g_i*(-dot)` where `dot = <w, d_i>`.
    #[inline]
    pub fn gap_i(&self, dot: f64, alpha_i: f64) -> f64 {
        match self.kind {
            ModelKind::Lasso => {
                debug_assert!(
                    alpha_i.abs() <= self.lipschitz_b * (1.0 + DOMAIN_SLACK) + DOMAIN_SLACK,
                    "alpha_i = {alpha_i} outside [-B, B] with B = {}",
                    self.lipschitz_b
                );
                alpha_i * dot
                    + self.lambda * alpha_i.abs()
                    + self.lipschitz_b * (dot.abs() - self.lambda).max(0.0)
            }
            ModelKind::Svm => {
                let inv_n = 1.0 / self.n as f64;
                alpha_i * dot - alpha_i * inv_n + (inv_n - dot).max(0.0)
            }
        }
    }

    /// Exact minimizer of the objective along coordinate `i`, returned as the
    /// step `delta`. `None` flags a zero-norm column, which cannot move.
    #[inline]
    pub fn update_i(&self, dot: f64, alpha_i: f64, col_sq_norm: f64) -> Option<f64> {
        if !(col_sq_norm > 0.0) {
            return None;
        }
        let q = col_sq_norm;
        let next = match self.kind {
            ModelKind::Lasso => {
                let b = self.lipschitz_b;
                soft_threshold(alpha_i - dot / q, self.lambda / q).clamp(-b, b)
            }
            ModelKind::Svm => {
                let inv_n = 1.0 / self.n as f64;
                (alpha_i + (inv_n - dot) * self.svm_c() / q).clamp(0.0, 1.0)
            }
        };
        Some(next - alpha_i)
    }

    /// `g_i(a)`, `+inf` outside the domain.
    pub fn g_i(&self, a: f64) -> f64 {
        match self.kind {
            ModelKind::Lasso => {
                if a.abs() <= self.lipschitz_b * (1.0 + DOMAIN_SLACK) + f64::EPSILON {
                    self.lambda * a.abs()
                } else {
                    f64::INFINITY
                }
            }
            ModelKind::Svm => {
                if (-DOMAIN_SLACK..=1.0 + DOMAIN_SLACK).contains(&a) {
                    -a / self.n as f64
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    /// Convex conjugate `g_i*(u)`.
    pub fn g_conj(&self, u: f64) -> f64 {
        match self.kind {
            ModelKind::Lasso => self.lipschitz_b * (u.abs() - self.lambda).max(0.0),
            ModelKind::Svm => (u + 1.0 / self.n as f64).max(0.0),
        }
    }

    /// `f(v)`.
    pub fn f(&self, v: &[f64], targets: &[f64]) -> f64 {
        match self.kind {
            ModelKind::Lasso => 0.5 * v.iter().zip(targets).map(|(a, y)| (a - y).powi(2)).sum::<f64>(),
            ModelKind::Svm => v.iter().map(|a| a * a).sum::<f64>() / (2.0 * self.svm_c()),
        }
    }

    /// Convex conjugate `f*(w)`.
    pub fn f_conj(&self, w: &[f64], targets: &[f64]) -> f64 {
        match self.kind {
            ModelKind::Lasso => w
                .iter()
                .zip(targets)
                .map(|(a, y)| 0.5 * a * a + a * y)
                .sum(),
            ModelKind::Svm => 0.5 * self.svm_c() * w.iter().map(|a| a * a).sum::<f64>(),
        }
    }

    /// `F(alpha) = f(v) + sum_i g_i(alpha_i)` with `v` supplied by the caller.
    pub fn primal_objective<F: Scalar>(&self, alpha: &[F], v: &[F], targets: &[F]) -> f64 {
        let v = as_f64(v);
        let y = as_f64(targets);
        self.f(&v, &y) + alpha.iter().map(|a| self.g_i(a.as_f64())).sum::<f64>()
    }

    /// Fenchel dual `D(w) = -f*(w) - sum_i g_i*(-<w, d_i>)`.
    pub fn dual_objective<F: Scalar>(
        &self,
        w: &[f64],
        matrix: &DataMatrix<F>,
        targets: &[F],
    ) -> f64 {
        let y = as_f64(targets);
        let dots = matrix.transpose_matvec_f64(w);
        -self.f_conj(w, &y) - dots.iter().map(|&t| self.g_conj(-t)).sum::<f64>()
    }
}

/// Level-set bound `B = F(0) / lambda = 0.5 ||y||^2 / lambda` for Lasso.
/// Every iterate with `F(alpha) <= F(0)` has `||alpha||_1 <= B`.
pub fn init_lipschitz_bound<F: Scalar>(lambda: f64, targets: &[F]) -> Result<f64> {
    check_lambda(lambda)?;
    let sq: f64 = targets.iter().map(|y| y.as_f64() * y.as_f64()).sum();
    Ok(0.5 * sq / lambda)
}

/// `sign(x) * max(0, |x| - tau)`.
#[inline]
pub fn soft_threshold(x: f64, tau: f64) -> f64 {
    if x > tau {
        x - tau
    } else if x < -tau {
        x + tau
    } else {
        0.0
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return invalid(format!("lambda must be positive and finite, got {lambda}"));
    }
    Ok(())
}

pub(crate) fn as_f64<F: Scalar>(v: &[F]) -> Vec<f64> {
    v.iter().map(|x| x.as_f64()).collect()
}
