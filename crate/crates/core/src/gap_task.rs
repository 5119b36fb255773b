//! Task A: refreshes coordinate-wise duality gaps in the gap memory.
//!
//! Workers sample coordinates uniformly and recompute `z_i` from the frozen
//! epoch snapshot `(alpha^t, v^t)`. Each `z_i` refresh is done by a single
//! worker; the stop flag is checked between refreshes, never inside one.
//! Concurrent writes to the same `z_i` store the same value (they come from
//! the same snapshot), so last-write-wins races are harmless.

use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Barrier, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{DataMatrix, GapMemory, ModelState};
use crate::error::{invalid, Result};
use crate::glm::Problem;
use crate::scalar::Scalar;
use crate::seed::{derive_seed, TAG_GAP_WORKER};
use crate::solver::{VectorView, WSource};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GapTaskConfig {
    /// Number of task-A workers.
    pub t_a: usize,
    pub seed: u64,
    /// Fixed number of refreshes per epoch. When set, workers stop on their
    /// own after the quota instead of waiting for the stop signal, which makes
    /// single-worker runs reproducible.
    #[serde(default)]
    pub quota: Option<u64>,
}

impl Default for GapTaskConfig {
    fn default() -> Self {
        Self {
            t_a: 1,
            seed: 0,
            quota: None,
        }
    }
}

/// Uniform coordinate sampler used by every A worker.
#[derive(Debug, Clone)]
pub struct CoordinateSampler {
    rng: ChaCha8Rng,
}

impl CoordinateSampler {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Stream for worker `worker` in epoch `epoch` of a run seeded by `seed`.
    pub fn for_worker(seed: u64, epoch: u64, worker: usize) -> Self {
        Self::new(derive_seed(derive_seed(seed, TAG_GAP_WORKER, epoch), 0, worker as u64))
    }

    #[inline]
    pub fn next_index(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }
}

/// Immutable copy of `(alpha, v)` taken at an epoch boundary, plus the
/// materialized `w` for Lasso.
#[derive(Debug, Clone)]
pub struct EpochSnapshot<F: Scalar> {
    pub alpha: Vec<F>,
    pub v: Vec<F>,
    w: Option<Vec<F>>,
    scale: f64,
}

impl<F: Scalar> EpochSnapshot<F> {
    pub fn w_source(&self) -> WSource<'_, F> {
        WSource {
            v: VectorView::Plain(self.w.as_deref().unwrap_or(&self.v)),
            shift: None,
            scale: self.scale,
        }
    }
}

/// Copies `(alpha, v)` out of the live state. Call only while task B is idle.
pub fn snapshot_for_epoch<F: Scalar>(
    state: &ModelState<F>,
    problem: &Problem,
    targets: &[F],
) -> Result<EpochSnapshot<F>> {
    if state.n() == 0 {
        return invalid("cannot snapshot an empty model");
    }
    let alpha = state.alpha_vec();
    let v = state.v_vec();
    let map = problem.dual_map();
    let w = if map.shift_by_targets {
        if targets.len() != v.len() {
            return invalid("Lasso snapshot needs one target per row");
        }
        Some(v.iter().zip(targets).map(|(&a, &y)| a - y).collect())
    } else {
        None
    };
    Ok(EpochSnapshot {
        alpha,
        v,
        w,
        scale: map.scale,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GapEpochStats {
    /// Total z-writes this epoch.
    pub writes: u64,
    pub per_worker: Vec<u64>,
    /// Writes that landed after the stop signal was raised (at most one per
    /// worker: the refresh that was in flight).
    pub writes_after_stop: u64,
    /// z generation growth between raising the stop signal and quiescence.
    pub generation_after_stop: u64,
    /// Time from raising the stop signal until every worker had parked.
    pub stop_latency_s: f64,
    /// Slowest single refresh observed this epoch.
    pub max_update_s: f64,
}

#[derive(Debug, Default)]
struct WorkerTally {
    writes: u64,
    after_stop: u64,
    max_update: Duration,
}

struct SampleContext<'a, F: Scalar> {
    matrix: &'a DataMatrix<F>,
    z: &'a GapMemory<F>,
    problem: &'a Problem,
    snapshot: &'a EpochSnapshot<F>,
    stop: &'a AtomicBool,
    tickets: &'a AtomicU64,
    quota: Option<u64>,
}

fn sample_loop<F: Scalar>(ctx: &SampleContext<'_, F>, mut sampler: CoordinateSampler) -> WorkerTally {
    let n = ctx.matrix.n();
    let w = ctx.snapshot.w_source();
    let mut tally = WorkerTally::default();
    loop {
        if ctx.stop.load(Ordering::Acquire) {
            break;
        }
        if let Some(q) = ctx.quota {
            if ctx.tickets.fetch_add(1, Ordering::Relaxed) >= q {
                break;
            }
        }
        let began = Instant::now();
        let i = sampler.next_index(n);
        let dot = w.dot(ctx.matrix.column(i));
        let gap = ctx.problem.gap_i(dot, ctx.snapshot.alpha[i].as_f64());
        ctx.z.write(i, F::from_f64(gap));
        tally.writes += 1;
        tally.max_update = tally.max_update.max(began.elapsed());
        if ctx.stop.load(Ordering::Acquire) {
            tally.after_stop += 1;
        }
    }
    tally
}

/// Runs `cfg.t_a` sampling workers until `stop` is raised (or the quota is
/// used up) and returns the number of z-writes.
pub fn run_gap_sampling<F: Scalar>(
    cfg: &GapTaskConfig,
    matrix: &DataMatrix<F>,
    snapshot: &EpochSnapshot<F>,
    z: &GapMemory<F>,
    problem: &Problem,
    stop: &AtomicBool,
) -> Result<u64> {
    check_shapes(matrix, snapshot, z)?;
    let tickets = AtomicU64::new(0);
    let ctx = SampleContext {
        matrix,
        z,
        problem,
        snapshot,
        stop,
        tickets: &tickets,
        quota: cfg.quota,
    };
    let total = thread::scope(|s| {
        let handles: Vec<_> = (0..cfg.t_a)
            .map(|k| {
                let ctx = &ctx;
                let sampler = CoordinateSampler::for_worker(cfg.seed, 0, k);
                s.spawn(move || sample_loop(ctx, sampler).writes)
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("gap worker panicked"))
            .sum()
    });
    Ok(total)
}

fn check_shapes<F: Scalar>(
    matrix: &DataMatrix<F>,
    snapshot: &EpochSnapshot<F>,
    z: &GapMemory<F>,
) -> Result<()> {
    if snapshot.alpha.len() != matrix.n() || z.len() != matrix.n() {
        return invalid("snapshot/gap memory length differs from column count");
    }
    if snapshot.w_source().len() != matrix.d() {
        return invalid("snapshot vector length differs from row count");
    }
    Ok(())
}

struct GapJob<F: Scalar> {
    snapshot: Arc<EpochSnapshot<F>>,
    epoch: u64,
    stop: AtomicBool,
    tickets: AtomicU64,
    tallies: Mutex<Vec<(usize, WorkerTally)>>,
}

/// Controls a fixed set of task-A workers that live for the whole training
/// run. Obtain one through [`GapPool::scope`].
pub struct GapPool<'a, F: Scalar> {
    cfg: GapTaskConfig,
    matrix: &'a DataMatrix<F>,
    z: &'a GapMemory<F>,
    problem: &'a Problem,
    job: Mutex<Option<Arc<GapJob<F>>>>,
    running: AtomicBool,
    shutdown: AtomicBool,
    start: Barrier,
    end: Barrier,
}

impl<'a, F: Scalar> GapPool<'a, F> {
    /// Spawns the workers, hands the pool to `body`, and joins the workers
    /// when `body` returns.
    pub fn scope<R>(
        cfg: GapTaskConfig,
        matrix: &'a DataMatrix<F>,
        z: &'a GapMemory<F>,
        problem: &'a Problem,
        body: impl FnOnce(&GapPool<'a, F>) -> R,
    ) -> Result<R> {
        if z.len() != matrix.n() {
            return invalid("gap memory length differs from column count");
        }
        let pool = GapPool {
            cfg,
            matrix,
            z,
            problem,
            job: Mutex::new(None),
            running: AtomicBool::new(false),
            shutdown: AtomicBool::new(false),
            start: Barrier::new(cfg.t_a + 1),
            end: Barrier::new(cfg.t_a + 1),
        };
        Ok(thread::scope(|s| {
            for k in 0..cfg.t_a {
                let pool = &pool;
                thread::Builder::new()
                    .name(format!("hthc-a-{k}"))
                    .spawn_scoped(s, move || pool.worker(k))
                    .expect("spawn gap worker");
            }
            let _guard = ShutdownGuard(&pool);
            body(&pool)
        }))
    }

    pub fn workers(&self) -> usize {
        self.cfg.t_a
    }

    /// Releases the workers on a new epoch; returns once they are running.
    pub fn start(&self, snapshot: Arc<EpochSnapshot<F>>, epoch: u64) -> Result<()> {
        check_shapes(self.matrix, &snapshot, self.z)?;
        assert!(!self.running.swap(true, Ordering::AcqRel), "epoch already running");
        self.z.begin_epoch();
        *self.job.lock().unwrap_or_else(|e| e.into_inner()) = Some(Arc::new(GapJob {
            snapshot,
            epoch,
            stop: AtomicBool::new(false),
            tickets: AtomicU64::new(0),
            tallies: Mutex::new(Vec::with_capacity(self.cfg.t_a)),
        }));
        if self.cfg.t_a > 0 {
            self.start.wait();
        }
        Ok(())
    }

    /// Ends the epoch: raises the stop signal (or, with a quota, waits for the
    /// quota to be used up) and waits until every worker has parked.
    pub fn finish(&self) -> GapEpochStats {
        assert!(self.running.swap(false, Ordering::AcqRel), "no epoch running");
        // workers may still be about to read the job; clear it only after the
        // end rendezvous
        let job = self
            .job
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .clone()
            .expect("job set by start");
        let stop_raised = Instant::now();
        let gen_at_stop = self.z.generation();
        if self.cfg.quota.is_none() {
            job.stop.store(true, Ordering::Release);
        }
        if self.cfg.t_a > 0 {
            self.end.wait();
        }
        let stop_latency_s = stop_raised.elapsed().as_secs_f64();
        let generation_after_stop = self.z.generation() - gen_at_stop;
        self.job.lock().unwrap_or_else(|e| e.into_inner()).take();

        let mut tallies = std::mem::take(&mut *job.tallies.lock().unwrap_or_else(|e| e.into_inner()));
        tallies.sort_by_key(|(k, _)| *k);
        let per_worker: Vec<u64> = tallies.iter().map(|(_, t)| t.writes).collect();
        GapEpochStats {
            writes: per_worker.iter().sum(),
            per_worker,
            writes_after_stop: tallies.iter().map(|(_, t)| t.after_stop).sum(),
            generation_after_stop,
            stop_latency_s,
            max_update_s: tallies
                .iter()
                .map(|(_, t)| t.max_update.as_secs_f64())
                .fold(0.0, f64::max),
        }
    }

    fn worker(&self, k: usize) {
        loop {
            self.start.wait();
            if self.shutdown.load(Ordering::Acquire) {
                return;
            }
            let job = self
                .job
                .lock()
                .unwrap_or_else(|e| e.into_inner())
                .clone()
                .expect("job published before start");
            let ctx = SampleContext {
                matrix: self.matrix,
                z: self.z,
                problem: self.problem,
                snapshot: &job.snapshot,
                stop: &job.stop,
                tickets: &job.tickets,
                quota: self.cfg.quota,
            };
            let tally = sample_loop(&ctx, CoordinateSampler::for_worker(self.cfg.seed, job.epoch, k));
            job.tallies
                .lock()
                .unwrap_or_else(|e| e.into_inner())
                .push((k, tally));
            drop(job);
            self.end.wait();
        }
    }
}

struct ShutdownGuard<'p, 'a, F: Scalar>(&'p GapPool<'a, F>);

impl<F: Scalar> Drop for ShutdownGuard<'_, '_, F> {
    fn drop(&mut self) {
        let pool = self.0;
        if pool.running.load(Ordering::Acquire) {
            if let Some(job) = pool.job.lock().unwrap_or_else(|e| e.into_inner()).as_ref() {
                job.stop.store(true, Ordering::Release);
            }
            let _ = pool.finish();
        }
        pool.shutdown.store(true, Ordering::Release);
        if pool.cfg.t_a > 0 {
            pool.start.wait();
        }
    }
}
