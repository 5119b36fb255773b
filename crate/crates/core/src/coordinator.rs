//! The two-task training loop: select a batch from gap memory, run gap
//! refresh and coordinate descent concurrently, certify, repeat.

use std::cmp::Ordering;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{DataMatrix, GapMemory, ModelState};
use crate::error::{invalid, Error, Result};
use crate::gap_task::{snapshot_for_epoch, GapEpochStats, GapPool, GapTaskConfig};
use crate::glm::{ModelKind, Problem};
use crate::scalar::Scalar;
use crate::seed::{derive_seed, TAG_PERMUTATION};
use crate::solver::{stage_batch, EpochStats, SolverConfig, SolverPool};
use crate::trace::TraceRow;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BatchSize {
    Count(usize),
    /// Fraction of `n`, rounded up.
    Fraction(f64),
}

impl BatchSize {
    pub fn resolve(self, n: usize) -> Result<usize> {
        match self {
            BatchSize::Count(m) if m >= 1 && m <= n => Ok(m),
            BatchSize::Count(m) => invalid(format!("batch size {m} outside [1, {n}]")),
            BatchSize::Fraction(f) if f > 0.0 && f <= 1.0 => {
                Ok(((f * n as f64).ceil() as usize).clamp(1, n))
            }
            BatchSize::Fraction(f) => invalid(format!("batch fraction {f} outside (0, 1]")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopConfig {
    pub tol: f64,
    pub max_epochs: usize,
    pub timeout_s: Option<f64>,
    /// Certify every `gap_every` epochs.
    pub gap_every: usize,
    /// Record `||v - D alpha||_inf` after every epoch.
    pub check_consistency: bool,
}

impl Default for StopConfig {
    fn default() -> Self {
        Self {
            tol: 1e-5,
            max_epochs: 1000,
            timeout_s: None,
            gap_every: 1,
            check_consistency: false,
        }
    }
}

impl StopConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return invalid(format!("tol must be > 0, got {}", self.tol));
        }
        if self.max_epochs == 0 {
            return invalid("max_epochs must be >= 1");
        }
        if self.gap_every == 0 {
            return invalid("gap_every must be >= 1");
        }
        if let Some(t) = self.timeout_s {
            if !(t > 0.0) {
                return invalid(format!("timeout must be > 0, got {t}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch: BatchSize,
    pub r_tilde: f64,
    /// Run seed. Overrides `gap.seed`.
    pub seed: u64,
    pub solver: SolverConfig,
    pub gap: GapTaskConfig,
    #[serde(flatten)]
    pub stop: StopConfig,
    /// Per-coordinate update counters on the model state.
    #[serde(skip)]
    pub instrument: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch: BatchSize::Fraction(0.25),
            r_tilde: 0.15,
            seed: 0,
            solver: SolverConfig::default(),
            gap: GapTaskConfig::default(),
            stop: StopConfig::default(),
            instrument: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.r_tilde > 0.0 && self.r_tilde <= 1.0) {
            return invalid(format!("r_tilde must lie in (0, 1], got {}", self.r_tilde));
        }
        self.solver.validate()?;
        self.stop.validate()
    }

    /// Gap-task settings actually used for a problem with `n` coordinates.
    ///
    /// A single sampler racing a single solver lane is the one configuration
    /// that can be made reproducible; it gets a fixed refresh quota of
    /// `ceil(r_tilde * n)` per epoch unless one is set explicitly.
    pub fn effective_gap(&self, n: usize) -> GapTaskConfig {
        let mut gap = self.gap;
        gap.seed = self.seed;
        if gap.quota.is_none() && gap.t_a == 1 && self.solver.t_b == 1 && self.solver.v_b == 1 {
            gap.quota = Some((self.r_tilde * n as f64).ceil() as u64);
        }
        gap
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    EpochLimit,
    Timeout,
}

#[derive(Debug, Clone)]
pub struct TrainResult<F: Scalar> {
    pub alpha: Vec<F>,
    pub trace: Vec<TraceRow>,
    pub stop: StopReason,
    pub final_gap: f64,
    pub final_objective: f64,
    /// Solve time, excluding certificate evaluation.
    pub wall_s: f64,
}

impl<F: Scalar> TrainResult<F> {
    pub fn converged(&self) -> bool {
        self.stop == StopReason::Converged
    }

    pub fn epochs(&self) -> usize {
        self.trace.len()
    }

    pub fn coverage_a(&self) -> Vec<f64> {
        self.trace.iter().map(|r| r.coverage_a).collect()
    }
}

/// What the training loop exposes to an observer after each epoch, while
/// both tasks are idle.
pub struct EpochView<'s, F: Scalar> {
    pub epoch: usize,
    pub batch: &'s [usize],
    pub state: &'s ModelState<F>,
    pub gap_stats: &'s GapEpochStats,
    pub solver_stats: &'s EpochStats,
    pub z: &'s GapMemory<F>,
}

/// Indices of the `m` largest entries of `z`, ties going to the lower index.
/// Returned in ascending order.
pub fn select_top_m<F: Scalar>(z: &[F], m: usize) -> Vec<usize> {
    let n = z.len();
    assert!(m >= 1 && m <= n, "select_top_m: m={m} outside [1, {n}]");
    // NaN sorts last; adding 0.0 folds -0.0 into +0.0 so both tie
    let key = |i: usize| {
        let x = z[i].as_f64();
        if x.is_nan() {
            f64::NEG_INFINITY
        } else {
            x + 0.0
        }
    };
    let order = |a: &usize, b: &usize| -> Ordering { key(*b).total_cmp(&key(*a)).then(a.cmp(b)) };
    let mut idx: Vec<usize> = (0..n).collect();
    if m < n {
        idx.select_nth_unstable_by(m - 1, order);
        idx.truncate(m);
    }
    idx.sort_unstable();
    idx
}

/// Primal, dual and gap evaluated in double precision from a fresh `v = D alpha`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Certificate {
    pub gap: f64,
    pub primal: f64,
    pub dual: f64,
}

pub fn certificate<F: Scalar>(
    matrix: &DataMatrix<F>,
    targets: &[F],
    alpha: &[F],
    problem: &Problem,
) -> Certificate {
    let v = matrix.matvec_f64(alpha);
    let y: Vec<f64> = targets.iter().map(|t| t.as_f64()).collect();
    let w: Vec<f64> = match problem.kind {
        ModelKind::Lasso => v.iter().zip(&y).map(|(a, b)| a - b).collect(),
        ModelKind::Svm => {
            let s = problem.dual_map().scale;
            v.iter().map(|a| a * s).collect()
        }
    };
    let dots = matrix.transpose_matvec_f64(&w);
    let gap = dots
        .iter()
        .zip(alpha)
        .map(|(&t, a)| problem.gap_i(t, a.as_f64()))
        .sum();
    let primal = problem.f(&v, &y) + alpha.iter().map(|a| problem.g_i(a.as_f64())).sum::<f64>();
    let dual = -problem.f_conj(&w, &y) - dots.iter().map(|&t| problem.g_conj(-t)).sum::<f64>();
    Certificate { gap, primal, dual }
}

/// Global duality gap `sum_i gap_i` with `w` built from a fresh `D alpha`.
///
/// The maintained `v` is not trusted here: in wild mode it can drift from
/// `D alpha`, and in single precision it accumulates rounding.
pub fn full_duality_gap<F: Scalar>(
    matrix: &DataMatrix<F>,
    targets: &[F],
    state: &ModelState<F>,
    problem: &Problem,
) -> f64 {
    certificate(matrix, targets, &state.alpha_vec(), problem).gap
}

/// Fills `suboptimality = F(alpha_t) - f_star` on every row that carries an
/// objective. Fails if the reference is clearly above an observed objective.
pub fn suboptimality(trace: &mut [TraceRow], f_star: f64) -> Result<()> {
    let slack = 1e-8 * f_star.abs().max(1.0);
    for row in trace.iter() {
        if let Some(f) = row.objective {
            if f < f_star - slack {
                return Err(Error::BadReference(format!(
                    "epoch {} has objective {f:e} below reference {f_star:e}",
                    row.epoch
                )));
            }
        }
    }
    for row in trace.iter_mut() {
        row.suboptimality = row.objective.map(|f| (f - f_star).max(0.0));
    }
    Ok(())
}

fn check_inputs<F: Scalar>(matrix: &DataMatrix<F>, targets: &[F], problem: &Problem) -> Result<()> {
    if problem.n != matrix.n() {
        return invalid(format!(
            "problem built for n={} but matrix has {} columns",
            problem.n,
            matrix.n()
        ));
    }
    if problem.kind == ModelKind::Lasso && targets.len() != matrix.d() {
        return invalid(format!(
            "{} targets for a matrix with {} rows",
            targets.len(),
            matrix.d()
        ));
    }
    Ok(())
}

/// Per-epoch bookkeeping and stopping rules shared by every training loop.
pub(crate) struct Monitor<'a, F: Scalar> {
    matrix: &'a DataMatrix<F>,
    targets: &'a [F],
    problem: &'a Problem,
    stop: StopConfig,
    mode: &'static str,
    started: Instant,
    solve_s: f64,
    pub(crate) trace: Vec<TraceRow>,
    last: Option<Certificate>,
}

impl<'a, F: Scalar> Monitor<'a, F> {
    pub(crate) fn new(
        matrix: &'a DataMatrix<F>,
        targets: &'a [F],
        problem: &'a Problem,
        stop: StopConfig,
        mode: &'static str,
    ) -> Self {
        Self {
            matrix,
            targets,
            problem,
            stop,
            mode,
            started: Instant::now(),
            solve_s: 0.0,
            trace: Vec::new(),
            last: None,
        }
    }

    /// Records one finished epoch; returns the stop reason if training ends.
    pub(crate) fn record(
        &mut self,
        epoch: usize,
        state: &ModelState<F>,
        updates_a: u64,
        updates_b: u64,
        churn: usize,
        epoch_s: f64,
    ) -> Option<StopReason> {
        self.solve_s += epoch_s;
        let n = state.n();
        let consistency = self.stop.check_consistency.then(|| state.consistency_error(self.matrix));
        let mut row = TraceRow {
            epoch,
            wall_s: self.solve_s,
            duality_gap: None,
            suboptimality: None,
            updates_a,
            coverage_a: updates_a as f64 / n as f64,
            updates_b,
            mode: self.mode.to_string(),
            objective: None,
            consistency,
            churn,
        };
        let last_epoch = epoch + 1 >= self.stop.max_epochs;
        let timed_out = self
            .stop
            .timeout_s
            .is_some_and(|t| self.started.elapsed().as_secs_f64() >= t);
        let mut stop = None;
        if (epoch + 1).is_multiple_of(self.stop.gap_every) || last_epoch || timed_out {
            let cert = certificate(self.matrix, self.targets, &state.alpha_vec(), self.problem);
            row.duality_gap = Some(cert.gap);
            row.objective = Some(cert.primal);
            self.last = Some(cert);
            if cert.gap <= self.stop.tol {
                stop = Some(StopReason::Converged);
            }
        }
        if stop.is_none() {
            if timed_out {
                stop = Some(StopReason::Timeout);
            } else if last_epoch {
                stop = Some(StopReason::EpochLimit);
            }
        }
        log::debug!(
            "{} epoch {epoch}: gap {:?} updates_A {updates_a} updates_B {updates_b} churn {churn}",
            self.mode,
            row.duality_gap
        );
        self.trace.push(row);
        stop
    }

    pub(crate) fn finish(self, state: &ModelState<F>, stop: StopReason) -> TrainResult<F> {
        let cert = self.last.expect("stopping epochs are always certified");
        TrainResult {
            alpha: state.alpha_vec(),
            trace: self.trace,
            stop,
            final_gap: cert.gap,
            final_objective: cert.primal,
            wall_s: self.solve_s,
        }
    }
}

pub fn train<F: Scalar>(
    matrix: &DataMatrix<F>,
    targets: &[F],
    problem: &Problem,
    cfg: &TrainConfig,
) -> Result<TrainResult<F>> {
    train_observed(matrix, targets, problem, cfg, |_| {})
}

/// [`train`] with a callback invoked at every epoch boundary.
pub fn train_observed<F: Scalar>(
    matrix: &DataMatrix<F>,
    targets: &[F],
    problem: &Problem,
    cfg: &TrainConfig,
    mut observer: impl FnMut(&EpochView<'_, F>),
) -> Result<TrainResult<F>> {
    cfg.validate()?;
    check_inputs(matrix, targets, problem)?;
    let n = matrix.n();
    let m = cfg.batch.resolve(n)?;
    let gap_cfg = cfg.effective_gap(n);

    let mut state = ModelState::zeros(n, matrix.d(), cfg.solver.stripe_len);
    if cfg.instrument {
        state = state.with_update_counts();
    }
    let state = Arc::new(state);
    let z = GapMemory::zeros(n);
    let solver = SolverPool::new(cfg.solver, problem.clone(), targets.to_vec())?;
    let mut monitor = Monitor::new(matrix, targets, problem, cfg.stop, "hthc");
    let mut in_batch = vec![false; n];

    let stop = GapPool::scope(gap_cfg, matrix, &z, problem, |tasks| -> Result<StopReason> {
        let mut frozen = (z.generation(), state.generation());
        for epoch in 0.. {
            let batch = select_top_m(&z.values(), m);
            let churn = batch.iter().filter(|&&i| !in_batch[i]).count();
            in_batch.iter_mut().for_each(|b| *b = false);
            batch.iter().for_each(|&i| in_batch[i] = true);
            let buffer = Arc::new(stage_batch(matrix, &batch)?);
            let snapshot = Arc::new(snapshot_for_epoch(&state, problem, targets)?);
            assert_eq!(
                frozen,
                (z.generation(), state.generation()),
                "writes to z or the model during an epoch boundary"
            );

            let t0 = Instant::now();
            tasks.start(snapshot, epoch as u64)?;
            let solved = solver.run_epoch(buffer, &state, derive_seed(cfg.seed, TAG_PERMUTATION, epoch as u64));
            let gap_stats = tasks.finish();
            let epoch_s = t0.elapsed().as_secs_f64();
            let solver_stats = solved?;
            state.advance_epoch();
            frozen = (z.generation(), state.generation());

            observer(&EpochView {
                epoch,
                batch: &batch,
                state: &state,
                gap_stats: &gap_stats,
                solver_stats: &solver_stats,
                z: &z,
            });
            if let Some(stop) = monitor.record(
                epoch,
                &state,
                gap_stats.writes,
                solver_stats.updates as u64,
                churn,
                epoch_s,
            ) {
                return Ok(stop);
            }
        }
        unreachable!("epoch loop only exits through a stop reason")
    })??;

    let low = monitor
        .trace
        .iter()
        .filter(|r| r.coverage_a < cfg.r_tilde)
        .count();
    if gap_cfg.t_a > 0 && low > 0 {
        log::info!(
            "gap refresh covered less than r_tilde={} of the coordinates in {low} of {} epochs",
            cfg.r_tilde,
            monitor.trace.len()
        );
    }
    Ok(monitor.finish(&state, stop))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_lasso;
    use crate::glm::Problem;
    use proptest::prelude::*;

    fn sort_oracle(z: &[f64], m: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..z.len()).collect();
        idx.sort_by(|&a, &b| z[b].partial_cmp(&z[a]).unwrap().then(a.cmp(&b)));
        let mut top = idx[..m].to_vec();
        top.sort();
        top
    }

    #[test]
    fn top_m_examples() {
        assert_eq!(select_top_m(&[0.1f64, 0.5, 0.3], 2), vec![1, 2]);
        assert_eq!(select_top_m(&[0.2f32; 5], 2), vec![0, 1]);
        assert_eq!(select_top_m(&[0.0f64, -0.0, 0.0], 2), vec![0, 1]);
        assert_eq!(select_top_m(&[1.0f64, 2.0], 2), vec![0, 1]);
    }

    proptest! {
        #[test]
        fn top_m_matches_sort(z in prop::collection::vec(0.0f64..1.0, 1..200), frac in 0.0f64..1.0) {
            let m = ((frac * z.len() as f64) as usize).clamp(1, z.len());
            prop_assert_eq!(select_top_m(&z, m), sort_oracle(&z, m));
        }

        #[test]
        fn top_m_with_ties(z in prop::collection::vec(0u8..4, 1..100), frac in 0.0f64..1.0) {
            let z: Vec<f64> = z.into_iter().map(f64::from).collect();
            let m = ((frac * z.len() as f64) as usize).clamp(1, z.len());
            let top = select_top_m(&z, m);
            let min_in = top.iter().map(|&i| z[i]).fold(f64::INFINITY, f64::min);
            let max_out = (0..z.len()).filter(|i| !top.contains(i)).map(|i| z[i]).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(min_in >= max_out);
            prop_assert_eq!(top, sort_oracle(&z, m));
        }
    }

    #[test]
    fn batch_size_resolution() {
        assert_eq!(BatchSize::Fraction(0.15).resolve(1000).unwrap(), 150);
        assert_eq!(BatchSize::Fraction(1e-9).resolve(10).unwrap(), 1);
        assert_eq!(BatchSize::Count(7).resolve(7).unwrap(), 7);
        assert!(BatchSize::Count(0).resolve(7).is_err());
        assert!(BatchSize::Count(8).resolve(7).is_err());
        assert!(BatchSize::Fraction(1.5).resolve(7).is_err());
    }

    #[test]
    fn zero_alpha_below_threshold_is_optimal() {
        // every |<y, d_i>| <= lambda
        let m = DataMatrix::<f64>::from_columns(&[vec![0.1, 0.0], vec![0.0, 0.2]]).unwrap();
        let y = vec![1.0, 1.0];
        let p = Problem::lasso(0.5, 2, &y).unwrap();
        let c = certificate(&m, &y, &[0.0, 0.0], &p);
        assert_eq!(c.gap, 0.0);
    }

    #[test]
    fn certificate_identity_random() {
        let s = synth_lasso::<f64>(40, 20, 0.2, 0.1, 3).unwrap();
        let p = Problem::lasso(0.05, 40, &s.targets).unwrap();
        let alpha: Vec<f64> = (0..40).map(|i| ((i * 7 % 11) as f64 - 5.0) / 10.0).collect();
        let c = certificate(&s.matrix, &s.targets, &alpha, &p);
        let rel = (c.gap - (c.primal - c.dual)).abs() / c.gap.abs().max(1.0);
        assert!(rel <= 1e-10, "rel {rel}");
    }

    #[test]
    fn infinite_tol_stops_after_one_epoch() {
        let s = synth_lasso::<f64>(30, 10, 0.2, 0.0, 1).unwrap();
        let p = Problem::lasso(0.1, 30, &s.targets).unwrap();
        let cfg = TrainConfig {
            stop: StopConfig { tol: f64::INFINITY, ..Default::default() },
            ..Default::default()
        };
        let r = train(&s.matrix, &s.targets, &p, &cfg).unwrap();
        assert_eq!(r.epochs(), 1);
        assert!(r.converged());
    }

    #[test]
    fn epoch_limit_is_reported() {
        let s = synth_lasso::<f64>(30, 10, 0.2, 0.0, 1).unwrap();
        let p = Problem::lasso(0.01, 30, &s.targets).unwrap();
        let cfg = TrainConfig {
            stop: StopConfig { tol: 1e-300, max_epochs: 3, gap_every: 2, ..Default::default() },
            ..Default::default()
        };
        let r = train(&s.matrix, &s.targets, &p, &cfg).unwrap();
        assert_eq!(r.stop, StopReason::EpochLimit);
        assert_eq!(r.epochs(), 3);
        let gaps: Vec<bool> = r.trace.iter().map(|t| t.duality_gap.is_some()).collect();
        assert_eq!(gaps, vec![false, true, true]);
        assert!(r.final_gap > 0.0);
    }

    #[test]
    fn epoch_zero_takes_lowest_indices() {
        let s = synth_lasso::<f64>(20, 10, 0.2, 0.0, 1).unwrap();
        let p = Problem::lasso(0.1, 20, &s.targets).unwrap();
        let cfg = TrainConfig {
            batch: BatchSize::Count(5),
            stop: StopConfig { tol: f64::INFINITY, ..Default::default() },
            instrument: true,
            ..Default::default()
        };
        let mut first = Vec::new();
        train_observed(&s.matrix, &s.targets, &p, &cfg, |v| {
            if v.epoch == 0 {
                first = v.batch.to_vec();
            }
        })
        .unwrap();
        assert_eq!(first, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn suboptimality_rules() {
        let mut rows: Vec<TraceRow> = [3.0, 2.0, 1.0]
            .iter()
            .enumerate()
            .map(|(k, &f)| TraceRow {
                epoch: k,
                wall_s: 0.0,
                duality_gap: Some(0.0),
                suboptimality: None,
                updates_a: 0,
                coverage_a: 0.0,
                updates_b: 0,
                mode: "st".into(),
                objective: Some(f),
                consistency: None,
                churn: 0,
            })
            .collect();
        suboptimality(&mut rows, 1.0).unwrap();
        let s: Vec<f64> = rows.iter().map(|r| r.suboptimality.unwrap()).collect();
        assert_eq!(s, vec![2.0, 1.0, 0.0]);

        // shifting objectives and reference together changes nothing
        for r in &mut rows {
            r.objective = r.objective.map(|f| f + 10.0);
        }
        suboptimality(&mut rows, 11.0).unwrap();
        let shifted: Vec<f64> = rows.iter().map(|r| r.suboptimality.unwrap()).collect();
        assert_eq!(shifted, s);

        assert!(matches!(suboptimality(&mut rows, 12.0), Err(Error::BadReference(_))));
    }
}
