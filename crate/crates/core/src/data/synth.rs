//! Seeded synthetic problem generators.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::data::DataMatrix;
use crate::error::{invalid, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct SynthLasso<F: Scalar> {
    pub matrix: DataMatrix<F>,
    pub targets: Vec<F>,
    pub alpha_true: Vec<F>,
}

/// Sparse regression instance: `d x n` matrix with unit-norm Gaussian columns,
/// a planted model with `ceil(support_frac * n)` nonzeros and
/// `targets = D * alpha_true + noise`.
pub fn synth_lasso<F: Scalar>(
    n: usize,
    d: usize,
    support_frac: f64,
    noise_sd: f64,
    seed: u64,
) -> Result<SynthLasso<F>> {
    if n == 0 || d == 0 {
        return invalid("synth_lasso needs n >= 1 and d >= 1");
    }
    if !(support_frac > 0.0 && support_frac <= 1.0) {
        return invalid(format!("support_frac must be in (0, 1], got {support_frac}"));
    }
    if !(noise_sd >= 0.0) {
        return invalid(format!("noise_sd must be >= 0, got {noise_sd}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let matrix = gaussian_unit_columns(&mut rng, d, n);

    let k = ((support_frac * n as f64).ceil() as usize).clamp(1, n);
    let mut alpha_true = vec![F::zero(); n];
    for i in sample(&mut rng, n, k) {
        let mag: f64 = rng.random_range(0.5..1.5);
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        alpha_true[i] = F::from_f64(sign * mag);
    }

    let clean = matrix.matvec_f64(&alpha_true);
    let targets = clean
        .into_iter()
        .map(|t| {
            let noise = if noise_sd > 0.0 {
                noise_sd * rng.sample::<f64, _>(StandardNormal)
            } else {
                0.0
            };
            F::from_f64(t + noise)
        })
        .collect();

    Ok(SynthLasso {
        matrix,
        targets,
        alpha_true,
    })
}

/// Binary classification samples: `d x n` with one sample per column and
/// labels in {-1, +1} from a random hyperplane, each flipped with
/// probability `flip_prob`.
pub fn synth_classification<F: Scalar>(
    n: usize,
    d: usize,
    flip_prob: f64,
    seed: u64,
) -> Result<(DataMatrix<F>, Vec<F>)> {
    if n == 0 || d == 0 {
        return invalid("synth_classification needs n >= 1 and d >= 1");
    }
    if !(0.0..=1.0).contains(&flip_prob) {
        return invalid(format!("flip_prob must be in [0, 1], got {flip_prob}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let plane: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let matrix = gaussian_unit_columns::<F>(&mut rng, d, n);
    let labels = matrix
        .columns()
        .map(|col| {
            let s: f64 = col.iter().zip(&plane).map(|(x, w)| x.as_f64() * w).sum();
            let y = if s >= 0.0 { 1.0 } else { -1.0 };
            let flip = rng.random::<f64>() < flip_prob;
            F::from_f64(if flip { -y } else { y })
        })
        .collect();
    Ok((matrix, labels))
}

fn gaussian_unit_columns<F: Scalar>(rng: &mut ChaCha8Rng, d: usize, n: usize) -> DataMatrix<F> {
    let mut values = Vec::with_capacity(d * n);
    for _ in 0..n {
        let col: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let norm = col.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
        values.extend(col.iter().map(|x| F::from_f64(x / norm)));
    }
    DataMatrix::new(d, n, values).expect("gaussian columns are finite")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn support_size() {
        let s = synth_lasso::<f64>(10, 5, 0.2, 0.0, 7).unwrap();
        assert_eq!(s.alpha_true.iter().filter(|a| **a != 0.0).count(), 2);
    }

    #[test]
    fn deterministic_per_seed() {
        let a = synth_lasso::<f32>(30, 8, 0.1, 0.5, 11).unwrap();
        let b = synth_lasso::<f32>(30, 8, 0.1, 0.5, 11).unwrap();
        assert_eq!(a.matrix, b.matrix);
        assert_eq!(a.targets, b.targets);
        let c = synth_lasso::<f32>(30, 8, 0.1, 0.5, 12).unwrap();
        assert_ne!(a.matrix, c.matrix);
    }

    #[test]
    fn noiseless_targets_are_exact() {
        let s = synth_lasso::<f64>(40, 12, 0.25, 0.0, 3).unwrap();
        let fitted = s.matrix.matvec_f64(&s.alpha_true);
        let resid: f64 = fitted
            .iter()
            .zip(&s.targets)
            .map(|(a, b)| (a - b).powi(2))
            .sum();
        assert_eq!(resid, 0.0);
    }

    #[test]
    fn unit_columns() {
        let s = synth_lasso::<f64>(20, 6, 0.5, 0.1, 1).unwrap();
        for q in s.matrix.col_sq_norms() {
            assert!((q - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn bad_support_rejected() {
        assert!(synth_lasso::<f32>(10, 5, 0.0, 0.0, 1).is_err());
        assert!(synth_lasso::<f32>(10, 5, 1.5, 0.0, 1).is_err());
    }

    #[test]
    fn classification_labels() {
        let (m, y) = synth_classification::<f32>(50, 4, 0.0, 5).unwrap();
        assert_eq!((m.d(), m.n()), (4, 50));
        assert!(y.iter().all(|l| *l == 1.0 || *l == -1.0));
        assert!(y.contains(&1.0) && y.contains(&-1.0));
    }
}
