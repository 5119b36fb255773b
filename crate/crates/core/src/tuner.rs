//! Per-update cost profiling and the parameter-selection model.
//!
//! Given measured seconds per update `t_A(T_A, d)` and `t_B(T_B, V_B, d)`,
//! pick the batch size and worker split minimizing the epoch time `m * t_B`
//! subject to the gap task refreshing at least `r_tilde * n` entries while
//! the solver runs: `m * t_B / t_A >= r_tilde * n`.

use std::fs;
use std::path::Path;
use std::sync::atomic::AtomicBool;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{synth_lasso, GapMemory, ModelState};
use crate::error::{invalid, Error, Result};
use crate::gap_task::{run_gap_sampling, snapshot_for_epoch, GapTaskConfig};
use crate::glm::Problem;
use crate::scalar::Scalar;
use crate::solver::{stage_batch, SolverConfig, SolverPool, SyncMode, DEFAULT_STRIPE_LEN};

/// Relative slack on the coverage constraint, so that products like
/// `0.15 * 1000 * 2` that are mathematically integral are not pushed up by
/// one through rounding.
pub const FEASIBILITY_RTOL: f64 = 1e-9;

pub const DEFAULT_CACHE_BYTES: usize = 1 << 20;
pub const SHORT_VECTOR_FLOOR: usize = 130_000;
pub const DEFAULT_PROFILE_N: usize = 600;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryA {
    pub t_a_workers: usize,
    pub d: usize,
    pub sec_per_update: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryB {
    pub t_b: usize,
    pub v_b: usize,
    pub d: usize,
    pub sec_per_update: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingTable {
    pub host: String,
    pub scalar_bytes: usize,
    pub a: Vec<EntryA>,
    pub b: Vec<EntryB>,
}

impl TimingTable {
    pub fn validate(&self) -> Result<()> {
        let bad_time = |t: f64| !(t > 0.0 && t.is_finite());
        for e in &self.a {
            if e.t_a_workers == 0 || bad_time(e.sec_per_update) {
                return Err(Error::Table(format!("invalid A entry {e:?}")));
            }
        }
        for e in &self.b {
            if e.t_b == 0 || e.v_b == 0 || bad_time(e.sec_per_update) {
                return Err(Error::Table(format!("invalid B entry {e:?}")));
            }
        }
        let mut keys_a: Vec<_> = self.a.iter().map(|e| (e.t_a_workers, e.d)).collect();
        keys_a.sort_unstable();
        let mut keys_b: Vec<_> = self.b.iter().map(|e| (e.t_b, e.v_b, e.d)).collect();
        keys_b.sort_unstable();
        if keys_a.windows(2).any(|w| w[0] == w[1]) || keys_b.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Table("duplicate grid point".into()));
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let table: Self = serde_json::from_slice(&fs::read(path)?)?;
        table.validate()?;
        Ok(table)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    /// Distinct A worker counts, ascending.
    pub fn a_workers(&self) -> Vec<usize> {
        let mut w: Vec<_> = self.a.iter().map(|e| e.t_a_workers).collect();
        w.sort_unstable();
        w.dedup();
        w
    }

    /// Distinct `(T_B, V_B)` pairs, ascending.
    pub fn b_configs(&self) -> Vec<(usize, usize)> {
        let mut c: Vec<_> = self.b.iter().map(|e| (e.t_b, e.v_b)).collect();
        c.sort_unstable();
        c.dedup();
        c
    }

    pub fn t_a(&self, t_a: usize, d: usize) -> Result<f64> {
        let pts = self.a.iter().filter(|e| e.t_a_workers == t_a).map(|e| (e.d, e.sec_per_update));
        interpolate(pts, d)
            .ok_or_else(|| Error::Table(format!("no A timing for T_A={t_a} covering d={d}")))
    }

    pub fn t_b(&self, t_b: usize, v_b: usize, d: usize) -> Result<f64> {
        let pts = self
            .b
            .iter()
            .filter(|e| e.t_b == t_b && e.v_b == v_b)
            .map(|e| (e.d, e.sec_per_update));
        interpolate(pts, d).ok_or_else(|| {
            Error::Table(format!("no B timing for T_B={t_b} V_B={v_b} covering d={d}"))
        })
    }
}

/// Linear interpolation in `d` between the two nearest grid points; exact at
/// grid points, `None` outside the grid.
fn interpolate(points: impl Iterator<Item = (usize, f64)>, d: usize) -> Option<f64> {
    let mut below: Option<(usize, f64)> = None;
    let mut above: Option<(usize, f64)> = None;
    for (x, t) in points {
        if x == d {
            return Some(t);
        }
        if x < d && below.is_none_or(|(b, _)| x > b) {
            below = Some((x, t));
        }
        if x > d && above.is_none_or(|(a, _)| x < a) {
            above = Some((x, t));
        }
    }
    let ((x0, t0), (x1, t1)) = (below?, above?);
    let f = (d - x0) as f64 / (x1 - x0) as f64;
    Some(t0 + f * (t1 - t0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TunedConfig {
    pub m: usize,
    pub t_a: usize,
    pub t_b: usize,
    pub v_b: usize,
    /// `m * t_B`, seconds.
    pub predicted_epoch_s: f64,
    /// `m * t_B / (t_A * n)`: fraction of gap entries refreshed per epoch.
    pub predicted_coverage: f64,
    pub feasible: bool,
}

/// Smallest `m >= 1` with `m * t_b / t_a >= r_tilde * n` (up to
/// [`FEASIBILITY_RTOL`]), or `None` if even `m = n` falls short.
pub fn min_batch(n: usize, r_tilde: f64, t_a: f64, t_b: f64) -> Option<usize> {
    let need = r_tilde * n as f64 * t_a / t_b;
    let m = (need * (1.0 - FEASIBILITY_RTOL)).ceil().max(1.0);
    (m <= n as f64).then_some(m as usize)
}

/// Exhaustive search over `(T_A, T_B, V_B)` in the table with
/// `T_A + T_B * V_B <= core_budget`. Ties in epoch time go to fewer cores,
/// then to the lexicographically smaller `(T_A, T_B, V_B)`.
pub fn choose_parameters(
    table: &TimingTable,
    n: usize,
    d: usize,
    r_tilde: f64,
    core_budget: usize,
) -> Result<TunedConfig> {
    if core_budget < 2 {
        return invalid(format!("core budget must be >= 2, got {core_budget}"));
    }
    if n == 0 {
        return invalid("n must be >= 1");
    }
    if !(0.0..=1.0).contains(&r_tilde) {
        return invalid(format!("r_tilde must lie in [0, 1], got {r_tilde}"));
    }
    table.validate()?;

    type Key = (f64, usize, usize, usize, usize);
    let mut best: Option<(Key, TunedConfig)> = None;
    let mut fallback: Option<((f64, f64), TunedConfig)> = None;
    let mut covered = false;
    for t_a in table.a_workers() {
        let Ok(ta) = table.t_a(t_a, d) else { continue };
        for (t_b, v_b) in table.b_configs() {
            if t_a + t_b * v_b > core_budget {
                continue;
            }
            let Ok(tb) = table.t_b(t_b, v_b, d) else { continue };
            covered = true;
            let tuned = |m: usize, feasible| TunedConfig {
                m,
                t_a,
                t_b,
                v_b,
                predicted_epoch_s: m as f64 * tb,
                predicted_coverage: m as f64 * tb / (ta * n as f64),
                feasible,
            };
            match min_batch(n, r_tilde, ta, tb) {
                Some(m) => {
                    let cand = tuned(m, true);
                    let key = (cand.predicted_epoch_s, t_a + t_b * v_b, t_a, t_b, v_b);
                    if best.as_ref().is_none_or(|(k, _)| key_less(&key, k)) {
                        best = Some((key, cand));
                    }
                }
                None => {
                    let cand = tuned(n, false);
                    // highest coverage, then shortest epoch
                    let key = (-cand.predicted_coverage, cand.predicted_epoch_s);
                    if fallback.as_ref().is_none_or(|(k, _)| key < *k) {
                        fallback = Some((key, cand));
                    }
                }
            }
        }
    }
    if !covered {
        return Err(Error::Table(format!(
            "no worker configuration within {core_budget} cores has timings covering d={d}"
        )));
    }
    Ok(best.map(|(_, c)| c).or(fallback.map(|(_, c)| c)).expect("some candidate"))
}

fn key_less(a: &(f64, usize, usize, usize, usize), b: &(f64, usize, usize, usize, usize)) -> bool {
    a.0.total_cmp(&b.0)
        .then((a.1, a.2, a.3, a.4).cmp(&(b.1, b.2, b.3, b.4)))
        .is_lt()
}

/// Elements of one helper's share of a vector that fit in a third of the
/// cache (the column chunk, the `v` chunk and room for everything else).
pub fn chunk_len(cache_bytes: usize, scalar_bytes: usize) -> usize {
    (cache_bytes / (3 * scalar_bytes)).max(1)
}

/// Helper threads per update for vectors of length `d`.
pub fn suggest_vb(d: usize, cache_bytes: usize, scalar_bytes: usize) -> usize {
    if d < SHORT_VECTOR_FLOOR {
        return 1;
    }
    d.div_ceil(chunk_len(cache_bytes, scalar_bytes)).max(1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileGrid {
    pub d: Vec<usize>,
    pub a_workers: Vec<usize>,
    pub b_workers: Vec<(usize, usize)>,
    pub reps: usize,
    /// Columns in the synthetic profiling matrix.
    pub n: usize,
}

impl Default for ProfileGrid {
    fn default() -> Self {
        Self {
            d: vec![1_000, 10_000, 100_000],
            a_workers: vec![1, 2, 4],
            b_workers: vec![(1, 1), (2, 1), (4, 1)],
            reps: 5,
            n: DEFAULT_PROFILE_N,
        }
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let k = xs.len();
    if k % 2 == 1 {
        xs[k / 2]
    } else {
        0.5 * (xs[k / 2 - 1] + xs[k / 2])
    }
}

pub fn host_fingerprint() -> String {
    let cores = std::thread::available_parallelism().map_or(1, |c| c.get());
    let name = std::env::var("HOSTNAME")
        .ok()
        .or_else(|| fs::read_to_string("/etc/hostname").ok().map(|s| s.trim().to_string()))
        .unwrap_or_else(|| "unknown".into());
    format!("{name}/{}-{}/{cores}cores", std::env::consts::OS, std::env::consts::ARCH)
}

/// Times the real gap-refresh and solver-update code paths on synthetic
/// columns. Grid points needing more threads than the host offers are
/// skipped with a warning.
pub fn profile_tasks<F: Scalar>(grid: &ProfileGrid) -> Result<TimingTable> {
    if grid.reps == 0 || grid.n == 0 {
        return invalid("profiling needs reps >= 1 and n >= 1");
    }
    let cores = std::thread::available_parallelism().map_or(1, |c| c.get());
    let mut table = TimingTable {
        host: host_fingerprint(),
        scalar_bytes: F::BYTES,
        a: Vec::new(),
        b: Vec::new(),
    };
    for (k, &d) in grid.d.iter().enumerate() {
        if d == 0 {
            return invalid("grid d must be >= 1");
        }
        let data = synth_lasso::<F>(grid.n, d, 0.05, 0.1, 0x5eed + k as u64)?;
        let problem = Problem::lasso(0.1, grid.n, &data.targets)?;
        let state = ModelState::zeros(grid.n, d, DEFAULT_STRIPE_LEN);
        let snapshot = snapshot_for_epoch(&state, &problem, &data.targets)?;
        let z = GapMemory::zeros(grid.n);

        for &t_a in &grid.a_workers {
            if t_a == 0 || t_a > cores {
                log::warn!("skipping A grid point T_A={t_a}: host has {cores} cores");
                continue;
            }
            let cfg = GapTaskConfig {
                t_a,
                seed: 7,
                quota: Some((2 * grid.n) as u64),
            };
            let stop = AtomicBool::new(false);
            let times = (0..grid.reps)
                .map(|_| {
                    let t0 = Instant::now();
                    let writes = run_gap_sampling(&cfg, &data.matrix, &snapshot, &z, &problem, &stop)?;
                    Ok(t0.elapsed().as_secs_f64() / writes.max(1) as f64)
                })
                .collect::<Result<Vec<_>>>()?;
            table.a.push(EntryA {
                t_a_workers: t_a,
                d,
                sec_per_update: median(times).max(f64::MIN_POSITIVE),
            });
        }

        let everything: Vec<usize> = (0..grid.n).collect();
        let buffer = Arc::new(stage_batch(&data.matrix, &everything)?);
        for &(t_b, v_b) in &grid.b_workers {
            if t_b == 0 || v_b == 0 || t_b * v_b > cores {
                log::warn!("skipping B grid point T_B={t_b} V_B={v_b}: host has {cores} cores");
                continue;
            }
            let cfg = SolverConfig {
                t_b,
                v_b,
                mode: SyncMode::Atomic,
                stripe_len: DEFAULT_STRIPE_LEN,
            };
            let pool = SolverPool::new(cfg, problem.clone(), data.targets.clone())?;
            let state = Arc::new(ModelState::zeros(grid.n, d, DEFAULT_STRIPE_LEN));
            let times = (0..grid.reps)
                .map(|r| {
                    let stats = pool.run_epoch(Arc::clone(&buffer), &state, r as u64)?;
                    Ok(stats.wall_s / grid.n as f64)
                })
                .collect::<Result<Vec<_>>>()?;
            table.b.push(EntryB {
                t_b,
                v_b,
                d,
                sec_per_update: median(times).max(f64::MIN_POSITIVE),
            });
        }
    }
    Ok(table)
}
