//! Comparison solvers: single-task asynchronous CD over all coordinates, and
//! a strictly sequential double-precision reference.

use std::sync::Arc;
use std::time::Instant;

use crate::coordinator::{certificate, Certificate, Monitor, StopConfig, TrainResult};
use crate::data::{DataMatrix, ModelState};
use crate::error::{invalid, Result};
use crate::glm::{ModelKind, Problem};
use crate::scalar::Scalar;
use crate::seed::{derive_seed, TAG_PERMUTATION};
use crate::solver::{stage_batch, SolverConfig, SolverPool};

/// Cyclic asynchronous CD: every epoch updates all `n` coordinates once, in
/// a fresh seeded permutation, with the same solver machinery as the
/// two-task loop but without gap memory or a gap task.
pub fn st_train<F: Scalar>(
    matrix: &DataMatrix<F>,
    targets: &[F],
    problem: &Problem,
    solver_cfg: &SolverConfig,
    stop_cfg: &StopConfig,
    seed: u64,
) -> Result<TrainResult<F>> {
    solver_cfg.validate()?;
    stop_cfg.validate()?;
    if problem.n != matrix.n() {
        return invalid("problem size differs from matrix column count");
    }
    if problem.kind == ModelKind::Lasso && targets.len() != matrix.d() {
        return invalid("Lasso needs one target per row");
    }
    let n = matrix.n();
    let state = Arc::new(ModelState::zeros(n, matrix.d(), solver_cfg.stripe_len));
    let all: Vec<usize> = (0..n).collect();
    let buffer = Arc::new(stage_batch(matrix, &all)?);
    let pool = SolverPool::new(*solver_cfg, problem.clone(), targets.to_vec())?;
    let mut monitor = Monitor::new(matrix, targets, problem, *stop_cfg, "st");
    for epoch in 0.. {
        let t0 = Instant::now();
        let stats = pool.run_epoch(
            Arc::clone(&buffer),
            &state,
            derive_seed(seed, TAG_PERMUTATION, epoch as u64),
        )?;
        let epoch_s = t0.elapsed().as_secs_f64();
        state.advance_epoch();
        if let Some(stop) = monitor.record(epoch, &state, 0, stats.updates as u64, 0, epoch_s) {
            return Ok(monitor.finish(&state, stop));
        }
    }
    unreachable!("epoch loop only exits through a stop reason")
}

#[derive(Debug, Clone)]
pub struct ReferenceSolution {
    pub alpha: Vec<f64>,
    pub f_star: f64,
    pub gap: f64,
    pub passes: usize,
    pub converged: bool,
}

const REFRESH_EVERY: usize = 100;

/// Sequential cyclic SCD in double precision, run until the certified gap
/// drops to `tol` or `max_passes` is used up.
pub fn reference_scd<F: Scalar>(
    matrix: &DataMatrix<F>,
    targets: &[F],
    problem: &Problem,
    tol: f64,
    max_passes: usize,
) -> Result<ReferenceSolution> {
    if problem.n != matrix.n() {
        return invalid("problem size differs from matrix column count");
    }
    if problem.kind == ModelKind::Lasso && targets.len() != matrix.d() {
        return invalid("Lasso needs one target per row");
    }
    let m: DataMatrix<f64> = matrix.cast();
    let y: Vec<f64> = targets.iter().map(|t| t.as_f64()).collect();
    let (n, d) = (m.n(), m.d());
    let map = problem.dual_map();
    let mut alpha = vec![0.0f64; n];
    let mut v = vec![0.0f64; d];
    let mut cert = certificate(&m, &y, &alpha, problem);
    let mut best = (cert.primal, alpha.clone(), cert.gap);
    let mut passes = 0;

    while cert.gap > tol && passes < max_passes {
        for (i, col) in m.columns().enumerate() {
            let mut dot = 0.0;
            for j in 0..d {
                let w = if map.shift_by_targets { v[j] - y[j] } else { v[j] };
                dot += w * col[j];
            }
            let Some(delta) = problem.update_i(dot * map.scale, alpha[i], m.col_sq_norm(i)) else {
                continue;
            };
            if delta != 0.0 {
                alpha[i] += delta;
                for j in 0..d {
                    v[j] += delta * col[j];
                }
            }
        }
        passes += 1;
        if passes % REFRESH_EVERY == 0 {
            v = m.matvec_f64(&alpha);
        }
        cert = certificate(&m, &y, &alpha, problem);
        if cert.primal < best.0 {
            best = (cert.primal, alpha.clone(), cert.gap);
        }
    }
    let converged = cert.gap <= tol;
    let Certificate { primal, gap, .. } = cert;
    if converged {
        Ok(ReferenceSolution { alpha, f_star: primal, gap, passes, converged })
    } else {
        Ok(ReferenceSolution {
            alpha: best.1,
            f_star: best.0,
            gap: best.2,
            passes,
            converged,
        })
    }
}
