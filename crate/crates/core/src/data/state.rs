use std::sync::atomic::{AtomicU32, AtomicU64, Ordering};

use crate::data::DataMatrix;
use crate::scalar::{AtomicVec, Scalar};
use crate::solver::SharedVector;

/// Model `alpha` (length `n`) and shared vector `v = D alpha` (length `d`).
#[derive(Debug)]
pub struct ModelState<F: Scalar> {
    pub alpha: AtomicVec<F>,
    pub v: SharedVector<F>,
    epoch: AtomicU64,
    generation: AtomicU64,
    update_counts: Option<Vec<AtomicU32>>,
}

impl<F: Scalar> ModelState<F> {
    pub fn zeros(n: usize, d: usize, stripe_len: usize) -> Self {
        Self {
            alpha: AtomicVec::zeros(n),
            v: SharedVector::zeros(d, stripe_len),
            epoch: AtomicU64::new(0),
            generation: AtomicU64::new(0),
            update_counts: None,
        }
    }

    /// State with `v` recomputed from `alpha`.
    pub fn from_alpha(matrix: &DataMatrix<F>, alpha: &[F], stripe_len: usize) -> Self {
        let state = Self::zeros(matrix.n(), matrix.d(), stripe_len);
        state.alpha.copy_from(alpha);
        state.recompute_v(matrix);
        state
    }

    /// Enables per-coordinate update counters (test instrumentation).
    pub fn with_update_counts(mut self) -> Self {
        self.update_counts = Some((0..self.alpha.len()).map(|_| AtomicU32::new(0)).collect());
        self
    }

    pub fn n(&self) -> usize {
        self.alpha.len()
    }

    pub fn d(&self) -> usize {
        self.v.len()
    }

    pub fn epoch(&self) -> u64 {
        self.epoch.load(Ordering::Acquire)
    }

    pub(crate) fn advance_epoch(&self) {
        self.epoch.fetch_add(1, Ordering::AcqRel);
    }

    /// Number of coordinate writes performed on this state so far.
    pub fn generation(&self) -> u64 {
        self.generation.load(Ordering::Acquire)
    }

    #[inline]
    pub(crate) fn write_alpha(&self, i: usize, value: F) {
        self.alpha.set(i, value);
        self.generation.fetch_add(1, Ordering::Release);
        if let Some(counts) = &self.update_counts {
            counts[i].fetch_add(1, Ordering::Relaxed);
        }
    }

    pub fn update_counts(&self) -> Option<Vec<u32>> {
        self.update_counts
            .as_ref()
            .map(|c| c.iter().map(|x| x.load(Ordering::Relaxed)).collect())
    }

    pub fn alpha_vec(&self) -> Vec<F> {
        self.alpha.to_vec()
    }

    pub fn v_vec(&self) -> Vec<F> {
        self.v.to_vec()
    }

    /// Overwrites `v` with a fresh `D alpha`.
    pub fn recompute_v(&self, matrix: &DataMatrix<F>) {
        let fresh: Vec<F> = matrix
            .matvec_f64(&self.alpha.to_vec())
            .into_iter()
            .map(F::from_f64)
            .collect();
        self.v.copy_from(&fresh);
    }

    /// `||v - D alpha||_inf`, with `D alpha` formed in double precision.
    pub fn consistency_error(&self, matrix: &DataMatrix<F>) -> f64 {
        let fresh = matrix.matvec_f64(&self.alpha.to_vec());
        fresh
            .iter()
            .zip(self.v.to_vec())
            .map(|(a, b)| (a - b.as_f64()).abs())
            .fold(0.0, f64::max)
    }

    /// Allowed drift between `v` and `D alpha` at an epoch boundary:
    /// `1e-3 * max_i ||d_i|| * ||alpha||_inf` in single precision, `1e-8` times
    /// the same scale in double.
    pub fn consistency_tolerance(&self, matrix: &DataMatrix<F>) -> f64 {
        let max_col = matrix
            .col_sq_norms()
            .iter()
            .map(|q| q.as_f64().sqrt())
            .fold(0.0, f64::max);
        let max_alpha = self
            .alpha
            .to_vec()
            .iter()
            .map(|a| a.as_f64().abs())
            .fold(0.0, f64::max);
        let rel = if F::BYTES == 4 { 1e-3 } else { 1e-8 };
        rel * max_col * max_alpha
    }
}

/// Gap memory `z`: last computed coordinate-wise duality gaps, used only as a
/// ranking and allowed to be stale.
#[derive(Debug)]
pub struct GapMemory<F: Scalar> {
    z: AtomicVec<F>,
    updates_this_epoch: AtomicU64,
    generation: AtomicU64,
}

impl<F: Scalar> GapMemory<F> {
    pub fn zeros(n: usize) -> Self {
        Self {
            z: AtomicVec::zeros(n),
            updates_this_epoch: AtomicU64::new(0),
            generation: AtomicU64::new(0),
        }
    }

    pub fn from_values(values: &[F]) -> Self {
        let mem = Self::zeros(values.len());
        mem.z.copy_from(values);
        mem
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    #[inline]
    pub fn get(&self, i: usize) -> F {
        self.z.get(i)
    }

    #[inline]
    pub(crate) fn write(&self, i: usize, gap: F) {
        self.z.set(i, gap);
        self.updates_this_epoch.fetch_add(1, Ordering::Relaxed);
        self.generation.fetch_add(1, Ordering::Release);
    }

    pub fn values(&self) -> Vec<F> {
        self.z.to_vec()
    }

    pub fn updates_this_epoch(&self) -> u64 {
        self.updates_this_epoch.load(Ordering::Acquire)
    }

    pub(crate) fn begin_epoch(&self) {
        self.updates_this_epoch.store(0, Ordering::Release);
    }

    /// Total number of z-writes since creation.
    pub fn generation(&self) -> u64 {
        self.generation.load(Ordering::Acquire)
    }
}
