use crate::error::{invalid, Result};
use crate::scalar::Scalar;

/// Dense column-major `d x n` training matrix. Column `i` is the data vector
/// of coordinate `i` and occupies `values[i*d .. (i+1)*d]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix<F: Scalar> {
    d: usize,
    n: usize,
    values: Vec<F>,
    col_sq_norms: Vec<F>,
}

impl<F: Scalar> DataMatrix<F> {
    pub fn new(d: usize, n: usize, values: Vec<F>) -> Result<Self> {
        if d == 0 || n == 0 {
            return invalid(format!("matrix must be at least 1x1, got {d}x{n}"));
        }
        if values.len() != d * n {
            return invalid(format!(
                "expected {} values for a {d}x{n} matrix, got {}",
                d * n,
                values.len()
            ));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return invalid(format!(
                "non-finite entry at row {}, column {}",
                pos % d,
                pos / d
            ));
        }
        let col_sq_norms = values.chunks_exact(d).map(sq_norm).collect();
        Ok(Self {
            d,
            n,
            values,
            col_sq_norms,
        })
    }

    pub fn from_columns(columns: &[Vec<F>]) -> Result<Self> {
        let d = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != d) {
            return invalid("columns have different lengths");
        }
        Self::new(d, columns.len(), columns.concat())
    }

    #[inline]
    pub fn d(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn values(&self) -> &[F] {
        &self.values
    }

    #[inline]
    pub fn column(&self, i: usize) -> &[F] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    pub fn columns(&self) -> impl Iterator<Item = &[F]> {
        self.values.chunks_exact(self.d)
    }

    #[inline]
    pub fn col_sq_norm(&self, i: usize) -> F {
        self.col_sq_norms[i]
    }

    pub fn col_sq_norms(&self) -> &[F] {
        &self.col_sq_norms
    }

    /// Recomputes the squared column norms from `values`.
    pub fn recompute_col_sq_norms(&self) -> Vec<F> {
        self.columns().map(sq_norm).collect()
    }

    /// `D * alpha`, accumulated in double precision.
    pub fn matvec_f64(&self, alpha: &[F]) -> Vec<f64> {
        assert_eq!(alpha.len(), self.n);
        let mut out = vec![0.0f64; self.d];
        for (col, &a) in self.columns().zip(alpha) {
            let a = a.as_f64();
            if a == 0.0 {
                continue;
            }
            for (o, &x) in out.iter_mut().zip(col) {
                *o += a * x.as_f64();
            }
        }
        out
    }

    /// `<u, d_i>` for every column, accumulated in double precision.
    pub fn transpose_matvec_f64(&self, u: &[f64]) -> Vec<f64> {
        assert_eq!(u.len(), self.d);
        self.columns()
            .map(|col| col.iter().zip(u).map(|(&x, &y)| x.as_f64() * y).sum())
            .collect()
    }

    /// Matrix with rows and columns swapped (`n x d`).
    pub fn transpose(&self) -> Self {
        let (d, n) = (self.d, self.n);
        let mut values = vec![F::zero(); d * n];
        for i in 0..n {
            for j in 0..d {
                values[j * n + i] = self.values[i * d + j];
            }
        }
        Self::new(n, d, values).expect("transpose of a valid matrix")
    }

    /// Multiplies column `i` by `scales[i]`.
    pub fn scale_columns(&self, scales: &[F]) -> Self {
        assert_eq!(scales.len(), self.n);
        let values = self
            .columns()
            .zip(scales)
            .flat_map(|(col, &s)| col.iter().map(move |&x| x * s))
            .collect();
        Self::new(self.d, self.n, values).expect("scaled matrix stays finite")
    }

    pub fn cast<G: Scalar>(&self) -> DataMatrix<G> {
        let values = self.values.iter().map(|v| G::from_f64(v.as_f64())).collect();
        DataMatrix::new(self.d, self.n, values).expect("cast of a valid matrix")
    }
}

fn sq_norm<F: Scalar>(col: &[F]) -> F {
    F::from_f64(col.iter().map(|x| x.as_f64() * x.as_f64()).sum())
}
