//! Task B: asynchronous parallel coordinate descent over a staged batch.
//!
//! `t_b` updater lanes pull coordinates from a shared cursor over a shuffled
//! batch. Each lane is a group of `v_b` helper threads that split the inner
//! product and the `v` increment of one update between them. Lanes read the
//! live shared vector, so the dot products of one lane may observe partial
//! increments of another. In atomic mode every read-modify-write of `v` holds
//! the lock of the stripe it touches; in wild mode increments race freely.

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Barrier, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{DataMatrix, ModelState};
use crate::error::{invalid, Error, Result};
use crate::glm::Problem;
use crate::scalar::{AtomicVec, Scalar};

/// Default number of `v` elements guarded by one lock.
pub const DEFAULT_STRIPE_LEN: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SyncMode {
    Atomic,
    Wild,
}

impl std::fmt::Display for SyncMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SyncMode::Atomic => "atomic",
            SyncMode::Wild => "wild",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Parallel coordinate updates.
    pub t_b: usize,
    /// Helper threads per update.
    pub v_b: usize,
    pub mode: SyncMode,
    pub stripe_len: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            t_b: 1,
            v_b: 1,
            mode: SyncMode::Atomic,
            stripe_len: DEFAULT_STRIPE_LEN,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.t_b == 0 || self.v_b == 0 {
            return invalid(format!(
                "t_b and v_b must be >= 1, got t_b={} v_b={}",
                self.t_b, self.v_b
            ));
        }
        if self.stripe_len == 0 {
            return invalid("stripe_len must be >= 1");
        }
        Ok(())
    }
}

/// The shared vector `v` together with its stripe locks.
#[derive(Debug)]
pub struct SharedVector<F: Scalar> {
    values: AtomicVec<F>,
    locks: Vec<Mutex<()>>,
    stripe_len: usize,
}

impl<F: Scalar> SharedVector<F> {
    pub fn zeros(len: usize, stripe_len: usize) -> Self {
        Self::from_slice(&vec![F::zero(); len], stripe_len)
    }

    pub fn from_slice(values: &[F], stripe_len: usize) -> Self {
        assert!(stripe_len >= 1, "stripe_len must be >= 1");
        let stripes = values.len().div_ceil(stripe_len);
        Self {
            values: AtomicVec::from_slice(values),
            locks: (0..stripes).map(|_| Mutex::new(())).collect(),
            stripe_len,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn stripe_len(&self) -> usize {
        self.stripe_len
    }

    #[inline]
    pub fn get(&self, j: usize) -> F {
        self.values.get(j)
    }

    pub fn to_vec(&self) -> Vec<F> {
        self.values.to_vec()
    }

    pub fn copy_from(&self, values: &[F]) {
        self.values.copy_from(values)
    }

    pub fn values(&self) -> &AtomicVec<F> {
        &self.values
    }

    /// `v += delta * column` over the whole vector.
    pub fn apply_delta(&self, column: &[F], delta: F, mode: SyncMode) {
        self.apply_delta_range(column, delta, 0, self.len(), mode)
    }

    /// `v[lo..hi] += delta * column[lo..hi]`.
    pub fn apply_delta_range(&self, column: &[F], delta: F, lo: usize, hi: usize, mode: SyncMode) {
        debug_assert_eq!(column.len(), self.len());
        if delta == F::zero() || lo >= hi {
            return;
        }
        let raw = self.values.raw();
        match mode {
            SyncMode::Wild => axpy_raw(raw, column, delta, lo, hi),
            SyncMode::Atomic => {
                let first = lo / self.stripe_len;
                let last = (hi - 1) / self.stripe_len;
                for s in first..=last {
                    let a = lo.max(s * self.stripe_len);
                    let b = hi.min((s + 1) * self.stripe_len);
                    let _guard = self.locks[s].lock().unwrap_or_else(|e| e.into_inner());
                    axpy_raw(raw, column, delta, a, b);
                }
            }
        }
    }
}

/// `v += delta * column` on a shared vector (see [`SharedVector::apply_delta`]).
pub fn apply_delta<F: Scalar>(v: &SharedVector<F>, column: &[F], delta: F, mode: SyncMode) {
    v.apply_delta(column, delta, mode)
}

#[inline]
fn axpy_raw<F: Scalar>(raw: &[F::Atomic], column: &[F], delta: F, lo: usize, hi: usize) {
    for (a, &x) in raw[lo..hi].iter().zip(&column[lo..hi]) {
        F::store(a, F::load(a) + delta * x);
    }
}

/// Where the first operand of an inner product comes from.
#[derive(Debug, Clone, Copy)]
pub enum VectorView<'a, F: Scalar> {
    Plain(&'a [F]),
    Shared(&'a AtomicVec<F>),
}

impl<F: Scalar> VectorView<'_, F> {
    pub fn len(&self) -> usize {
        match self {
            VectorView::Plain(v) => v.len(),
            VectorView::Shared(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Describes `w = scale * (v - shift)` without materializing it.
#[derive(Debug, Clone, Copy)]
pub struct WSource<'a, F: Scalar> {
    pub v: VectorView<'a, F>,
    pub shift: Option<&'a [F]>,
    pub scale: f64,
}

impl<'a, F: Scalar> WSource<'a, F> {
    pub fn plain(w: &'a [F]) -> Self {
        Self {
            v: VectorView::Plain(w),
            shift: None,
            scale: 1.0,
        }
    }

    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }

    /// Unscaled `sum_{j in lo..hi} (v_j - shift_j) * column_j`.
    #[inline]
    pub fn partial(&self, column: &[F], lo: usize, hi: usize) -> F {
        let col = &column[lo..hi];
        match (self.v, self.shift) {
            (VectorView::Plain(v), None) => dot_acc(&v[lo..hi], col),
            (VectorView::Plain(v), Some(s)) => {
                let (v, s) = (&v[lo..hi], &s[lo..hi]);
                accumulate(col, |j| v[j] - s[j])
            }
            (VectorView::Shared(v), None) => {
                let raw = &v.raw()[lo..hi];
                accumulate(col, |j| F::load(&raw[j]))
            }
            (VectorView::Shared(v), Some(s)) => {
                let (raw, s) = (&v.raw()[lo..hi], &s[lo..hi]);
                accumulate(col, |j| F::load(&raw[j]) - s[j])
            }
        }
    }

    /// Full scaled inner product `<w, column>` computed by one thread.
    pub fn dot(&self, column: &[F]) -> f64 {
        self.scale * self.partial(column, 0, column.len()).as_f64()
    }
}

/// Inner product with four independent accumulators.
#[inline]
pub fn dot_acc<F: Scalar>(a: &[F], b: &[F]) -> F {
    debug_assert_eq!(a.len(), b.len());
    accumulate(b, |j| a[j])
}

#[inline(always)]
fn accumulate<F: Scalar>(col: &[F], x: impl Fn(usize) -> F) -> F {
    let mut acc = [F::zero(); 4];
    let blocks = col.len() / 4;
    for blk in 0..blocks {
        let base = blk * 4;
        acc[0] = acc[0] + x(base) * col[base];
        acc[1] = acc[1] + x(base + 1) * col[base + 1];
        acc[2] = acc[2] + x(base + 2) * col[base + 2];
        acc[3] = acc[3] + x(base + 3) * col[base + 3];
    }
    let mut tail = F::zero();
    for j in blocks * 4..col.len() {
        tail = tail + x(j) * col[j];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Contiguous near-equal chunk `k` of `0..d` split `parts` ways.
#[inline]
pub fn chunk_range(d: usize, parts: usize, k: usize) -> (usize, usize) {
    (k * d / parts, (k + 1) * d / parts)
}

/// `<w, column>` with the work split into `v_b` contiguous chunks, each summed
/// by its own thread; partial sums are combined in chunk order.
pub fn split_dot<F: Scalar>(w: &WSource<'_, F>, column: &[F], v_b: usize) -> Result<f64> {
    if w.len() != column.len() {
        return invalid(format!(
            "dot of vectors with lengths {} and {}",
            w.len(),
            column.len()
        ));
    }
    if let Some(s) = w.shift {
        if s.len() != column.len() {
            return invalid("shift length differs from column length");
        }
    }
    if v_b == 0 {
        return invalid("v_b must be >= 1");
    }
    let d = column.len();
    let raw = if v_b == 1 {
        w.partial(column, 0, d)
    } else {
        thread::scope(|scope| {
            let handles: Vec<_> = (0..v_b)
                .map(|k| {
                    let (lo, hi) = chunk_range(d, v_b, k);
                    scope.spawn(move || w.partial(column, lo, hi))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("dot helper panicked"))
                .fold(F::zero(), |a, b| a + b)
        })
    };
    Ok(w.scale * raw.as_f64())
}

/// Task B's private copy of the selected columns.
#[derive(Debug, Clone)]
pub struct BatchBuffer<F: Scalar> {
    indices: Vec<usize>,
    d: usize,
    columns: Vec<F>,
    sq_norms: Vec<F>,
}

impl<F: Scalar> BatchBuffer<F> {
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn column(&self, j: usize) -> &[F] {
        &self.columns[j * self.d..(j + 1) * self.d]
    }

    #[inline]
    pub fn sq_norm(&self, j: usize) -> F {
        self.sq_norms[j]
    }
}

/// Copies the columns listed in `batch` (order preserved) into a contiguous
/// buffer.
pub fn stage_batch<F: Scalar>(matrix: &DataMatrix<F>, batch: &[usize]) -> Result<BatchBuffer<F>> {
    let n = matrix.n();
    let mut seen = vec![false; n];
    for &i in batch {
        if i >= n {
            return invalid(format!("batch index {i} out of range for n = {n}"));
        }
        if std::mem::replace(&mut seen[i], true) {
            return invalid(format!("batch index {i} appears more than once"));
        }
    }
    let mut columns = Vec::with_capacity(batch.len() * matrix.d());
    for &i in batch {
        columns.extend_from_slice(matrix.column(i));
    }
    Ok(BatchBuffer {
        indices: batch.to_vec(),
        d: matrix.d(),
        columns,
        sq_norms: batch.iter().map(|&i| matrix.col_sq_norm(i)).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    /// Coordinates processed (equals the batch size unless aborted).
    pub updates: usize,
    /// Zero-norm columns that were skipped.
    pub skipped: usize,
    pub wall_s: f64,
}

const DONE: usize = usize::MAX;

struct Lane<F: Scalar> {
    barrier: Barrier,
    slot: AtomicUsize,
    partials: Vec<F::Atomic>,
    delta: F::Atomic,
}

struct EpochJob<F: Scalar> {
    buffer: Arc<BatchBuffer<F>>,
    state: Arc<ModelState<F>>,
    order: Vec<usize>,
    cursor: AtomicUsize,
    processed: AtomicUsize,
    skipped: AtomicUsize,
    abort: AtomicBool,
    lanes: Vec<Lane<F>>,
}

struct PoolShared<F: Scalar> {
    cfg: SolverConfig,
    problem: Problem,
    targets: Vec<F>,
    job: Mutex<Option<Arc<EpochJob<F>>>>,
    shutdown: AtomicBool,
    start: Barrier,
    end: Barrier,
}

/// Long-lived pool of `t_b * v_b` task-B workers, reused across epochs.
pub struct SolverPool<F: Scalar> {
    shared: Arc<PoolShared<F>>,
    handles: Vec<JoinHandle<()>>,
}

impl<F: Scalar> SolverPool<F> {
    /// `targets` is the regression target vector for Lasso (ignored for SVM).
    pub fn new(cfg: SolverConfig, problem: Problem, targets: Vec<F>) -> Result<Self> {
        cfg.validate()?;
        let workers = cfg.t_b * cfg.v_b;
        let shared = Arc::new(PoolShared {
            cfg,
            problem,
            targets,
            job: Mutex::new(None),
            shutdown: AtomicBool::new(false),
            start: Barrier::new(workers + 1),
            end: Barrier::new(workers + 1),
        });
        let mut handles = Vec::with_capacity(workers);
        for lane in 0..cfg.t_b {
            for helper in 0..cfg.v_b {
                let shared = Arc::clone(&shared);
                let handle = thread::Builder::new()
                    .name(format!("hthc-b-{lane}.{helper}"))
                    .spawn(move || worker_loop(&shared, lane, helper))?;
                handles.push(handle);
            }
        }
        Ok(Self { shared, handles })
    }

    pub fn config(&self) -> SolverConfig {
        self.shared.cfg
    }

    /// Processes every coordinate of `buffer` exactly once, in an order
    /// shuffled by `seed`.
    pub fn run_epoch(
        &self,
        buffer: Arc<BatchBuffer<F>>,
        state: &Arc<ModelState<F>>,
        seed: u64,
    ) -> Result<EpochStats> {
        let cfg = self.shared.cfg;
        if buffer.d() != state.d() {
            return invalid(format!(
                "batch rows {} differ from shared vector length {}",
                buffer.d(),
                state.d()
            ));
        }
        if self.shared.problem.kind == crate::glm::ModelKind::Lasso
            && self.shared.targets.len() != state.d()
        {
            return invalid("Lasso solver needs one target per row");
        }
        let mut order: Vec<usize> = (0..buffer.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

        let job = Arc::new(EpochJob {
            buffer,
            state: Arc::clone(state),
            order,
            cursor: AtomicUsize::new(0),
            processed: AtomicUsize::new(0),
            skipped: AtomicUsize::new(0),
            abort: AtomicBool::new(false),
            lanes: (0..cfg.t_b)
                .map(|_| Lane {
                    barrier: Barrier::new(cfg.v_b),
                    slot: AtomicUsize::new(DONE),
                    partials: (0..cfg.v_b).map(|_| F::new_atomic(F::zero())).collect(),
                    delta: F::new_atomic(F::zero()),
                })
                .collect(),
        });

        let started = Instant::now();
        *self.shared.job.lock().unwrap_or_else(|e| e.into_inner()) = Some(Arc::clone(&job));
        self.shared.start.wait();
        self.shared.end.wait();
        let wall_s = started.elapsed().as_secs_f64();
        self.shared.job.lock().unwrap_or_else(|e| e.into_inner()).take();

        if job.abort.load(Ordering::Acquire) {
            return Err(Error::Divergence { t_b: cfg.t_b });
        }
        let skipped = job.skipped.load(Ordering::Acquire);
        if skipped > 0 {
            log::warn!("skipped {skipped} degenerate zero-norm columns this epoch");
        }
        Ok(EpochStats {
            updates: job.processed.load(Ordering::Acquire),
            skipped,
            wall_s,
        })
    }
}

impl<F: Scalar> Drop for SolverPool<F> {
    fn drop(&mut self) {
        self.shared.shutdown.store(true, Ordering::Release);
        self.shared.start.wait();
        for h in self.handles.drain(..) {
            let _ = h.join();
        }
    }
}

fn worker_loop<F: Scalar>(shared: &PoolShared<F>, lane: usize, helper: usize) {
    loop {
        shared.start.wait();
        if shared.shutdown.load(Ordering::Acquire) {
            return;
        }
        let job = shared
            .job
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .clone()
            .expect("epoch job published before start");
        run_lane(shared, &job, lane, helper);
        drop(job);
        shared.end.wait();
    }
}

fn run_lane<F: Scalar>(shared: &PoolShared<F>, job: &EpochJob<F>, lane_id: usize, helper: usize) {
    let cfg = shared.cfg;
    let v_b = cfg.v_b;
    let lane = &job.lanes[lane_id];
    let state = &*job.state;
    let buffer = &*job.buffer;
    let (lo, hi) = chunk_range(buffer.d(), v_b, helper);
    let map = shared.problem.dual_map();
    let w = WSource {
        v: VectorView::Shared(state.v.values()),
        shift: map.shift_by_targets.then_some(shared.targets.as_slice()),
        scale: map.scale,
    };
    let m = job.order.len();

    loop {
        // (a) leader claims the next coordinate and resets the lane's slot
        if helper == 0 {
            let next = if job.abort.load(Ordering::Relaxed) {
                DONE
            } else {
                let pos = job.cursor.fetch_add(1, Ordering::Relaxed);
                if pos < m {
                    job.order[pos]
                } else {
                    DONE
                }
            };
            lane.slot.store(next, Ordering::Relaxed);
        }
        if v_b > 1 {
            lane.barrier.wait();
        }
        let j = lane.slot.load(Ordering::Relaxed);
        if j == DONE {
            return;
        }
        let column = buffer.column(j);

        // (b) partial products over this helper's chunk
        let partial = w.partial(column, lo, hi);
        let mut delta = F::zero();
        if v_b > 1 {
            F::store(&lane.partials[helper], partial);
            lane.barrier.wait();
        }

        // (c) leader computes the step and writes alpha
        if helper == 0 {
            let raw = if v_b > 1 {
                lane.partials.iter().map(F::load).fold(F::zero(), |a, b| a + b)
            } else {
                partial
            };
            let dot = map.scale * raw.as_f64();
            let coord = buffer.indices()[j];
            let alpha = state.alpha.get(coord);
            let step = shared
                .problem
                .update_i(dot, alpha.as_f64(), buffer.sq_norm(j).as_f64());
            let mut next_alpha = alpha;
            match step {
                None => {
                    job.skipped.fetch_add(1, Ordering::Relaxed);
                }
                Some(s) if !s.is_finite() || !dot.is_finite() => {
                    job.abort.store(true, Ordering::Release);
                }
                Some(s) => {
                    next_alpha = F::from_f64(alpha.as_f64() + s);
                    delta = next_alpha - alpha;
                }
            }
            state.write_alpha(coord, next_alpha);
            job.processed.fetch_add(1, Ordering::Relaxed);
            if v_b > 1 {
                F::store(&lane.delta, delta);
            }
        }
        if v_b > 1 {
            lane.barrier.wait();
            delta = F::load(&lane.delta);
        }
        if delta != F::zero() {
            state.v.apply_delta_range(column, delta, lo, hi, cfg.mode);
        }
    }
}

/// Runs a single epoch on a temporary pool. Training loops should keep one
/// [`SolverPool`] alive for the whole run instead.
pub fn run_epoch<F: Scalar>(
    cfg: SolverConfig,
    buffer: BatchBuffer<F>,
    state: &Arc<ModelState<F>>,
    problem: &Problem,
    targets: &[F],
    seed: u64,
) -> Result<EpochStats> {
    let pool = SolverPool::new(cfg, problem.clone(), targets.to_vec())?;
    pool.run_epoch(Arc::new(buffer), state, seed)
}
