//! Dense matrix primitives shared by every model: column centering, norms,
//! and dominant eigenpairs of symmetric positive semi-definite matrices by
//! the power method.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{BssError, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Seed offset applied each time the power method re-draws its start vector.
const REDRAW_SEED_STRIDE: u64 = 0x9E37_79B9_7F4A_7C15;
const MAX_REDRAWS: usize = 4;
const STAGNATION_WINDOW: usize = 10;
/// Relative size of the random component blended into warm starts.
const WARM_JITTER: f64 = 1e-3;

/// Largest eigenvalue of a symmetric PSD matrix with its unit eigenvector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominantPair {
    pub value: f64,
    pub vector: Vector,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerConfig {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PowerConfig {
    fn default() -> Self {
        PowerConfig {
            tol: 1e-10,
            max_iter: 10_000,
        }
    }
}

pub fn ensure_finite(m: &Matrix, what: &str) -> Result<()> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Err(BssError::dimension(format!("{what} is empty")));
    }
    if let Some(pos) = m.iter().position(|v| !v.is_finite()) {
        let (r, c) = (pos % m.nrows(), pos / m.nrows());
        return Err(BssError::Domain(format!(
            "{what} has a non-finite entry at row {r}, column {c}"
        )));
    }
    Ok(())
}

pub fn column_means(x: &Matrix) -> Vector {
    let n = x.nrows() as f64;
    Vector::from_iterator(x.ncols(), x.column_iter().map(|c| c.sum() / n))
}

/// Subtracts each column's mean.
pub fn center_columns(x: &Matrix) -> Result<Matrix> {
    center_columns_with_means(x).map(|(c, _)| c)
}

/// Like [`center_columns`], also returning the means that were removed.
pub fn center_columns_with_means(x: &Matrix) -> Result<(Matrix, Vector)> {
    if x.nrows() < 2 {
        return Err(BssError::dimension(format!(
            "centering needs at least 2 rows, got {}",
            x.nrows()
        )));
    }
    let means = column_means(x);
    let mut out = x.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        col.add_scalar_mut(-means[j]);
    }
    Ok((out, means))
}

pub fn frobenius_norm(a: &Matrix) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Deterministic pseudo-random unit vector.
pub fn random_unit_vector(dim: usize, seed: u64) -> Vector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let v = Vector::from_fn(dim, |_, _| StandardNormal.sample(&mut rng));
        let norm = v.norm();
        if norm > 0.0 {
            return v / norm;
        }
    }
}

/// Flips the sign so that the entry of largest magnitude is positive.
pub fn normalize_sign(v: &mut Vector) {
    let mut best = 0usize;
    for i in 1..v.len() {
        if v[i].abs() > v[best].abs() {
            best = i;
        }
    }
    if v.len() > 0 && v[best] < 0.0 {
        v.neg_mut();
    }
}

fn check_symmetric(a: &Matrix) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(BssError::dimension(format!(
            "power iteration needs a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let scale = a.amax().max(1.0);
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            if (a[(i, j)] - a[(j, i)]).abs() > 1e-10 * scale {
                return Err(BssError::dimension(format!(
                    "matrix is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    Ok(())
}

/// Dominant eigenpair from a seeded random start.
pub fn power_iteration(a: &Matrix, cfg: &PowerConfig, seed: u64) -> Result<DominantPair> {
    power_iteration_from(a, cfg, None, seed)
}

/// Dominant eigenpair of the symmetric PSD matrix `a`.
///
/// Iterates `w <- A w / |A w|` and stops once both the Rayleigh quotient change
/// and the residual `|A w - eta w|_inf` fall below `tol * max(1, eta)`. `start`
/// is used as the initial vector when given (warm start); otherwise a unit
/// vector is drawn from `seed`. If the start happens to be orthogonal to the
/// dominant eigenspace the quotient stays at zero, and a new start is drawn
/// from an offset seed.
///
/// When `max_iter` is exhausted the error carries the last iterate so the
/// caller can decide whether it is good enough.
pub fn power_iteration_from(
    a: &Matrix,
    cfg: &PowerConfig,
    start: Option<&Vector>,
    seed: u64,
) -> Result<DominantPair> {
    check_symmetric(a)?;
    if !(cfg.tol > 0.0) {
        return Err(BssError::config("power iteration tolerance must be positive"));
    }
    let n = a.nrows();
    let a_norm = frobenius_norm(a);
    if a_norm == 0.0 {
        let mut vector = match start {
            Some(s) if s.len() == n && s.norm() > 0.0 => s / s.norm(),
            _ => random_unit_vector(n, seed),
        };
        normalize_sign(&mut vector);
        return Ok(DominantPair {
            value: 0.0,
            vector,
            iterations: 0,
        });
    }
    let zero_level = f64::EPSILON * a_norm;

    let mut redraws = 0usize;
    let mut omega = match start {
        Some(s) if s.len() == n && s.norm() > 0.0 => {
            // A warm start that is exactly a non-dominant eigenvector would be a
            // fixed point; the jitter keeps a dominant component in play.
            let mut w = s / s.norm();
            w.axpy(WARM_JITTER, &random_unit_vector(n, seed), 1.0);
            let norm = w.norm();
            w / norm
        }
        _ => random_unit_vector(n, seed),
    };
    let mut a_omega = a * &omega;
    let mut eta = omega.dot(&a_omega);
    let mut stagnant = 0usize;
    let mut last_change = f64::INFINITY;

    for iter in 1..=cfg.max_iter {
        let norm = a_omega.norm();
        if norm <= zero_level || stagnant >= STAGNATION_WINDOW {
            if redraws >= MAX_REDRAWS {
                break;
            }
            redraws += 1;
            stagnant = 0;
            omega = random_unit_vector(
                n,
                seed.wrapping_add(REDRAW_SEED_STRIDE.wrapping_mul(redraws as u64)),
            );
            a_omega = a * &omega;
            eta = omega.dot(&a_omega);
            continue;
        }
        omega = &a_omega / norm;
        a_omega = a * &omega;
        let eta_next = omega.dot(&a_omega);
        last_change = (eta_next - eta).abs();
        eta = eta_next;

        if eta.abs() <= zero_level {
            stagnant += 1;
            continue;
        }
        stagnant = 0;

        let scale = eta.abs().max(1.0);
        if last_change <= cfg.tol * scale {
            let residual = (&a_omega - &omega * eta).amax();
            if residual <= cfg.tol * scale {
                normalize_sign(&mut omega);
                return Ok(DominantPair {
                    value: eta,
                    vector: omega,
                    iterations: iter,
                });
            }
        }
    }

    normalize_sign(&mut omega);
    let last = DominantPair {
        value: eta,
        vector: omega,
        iterations: cfg.max_iter,
    };
    if redraws >= MAX_REDRAWS && eta.abs() <= zero_level {
        // Every start collapsed onto the null space; numerically the spectrum is zero.
        return Ok(DominantPair { value: 0.0, ..last });
    }
    Err(BssError::NotConverged {
        iterations: cfg.max_iter,
        last_change,
        last: Box::new(last),
    })
}

/// Power iteration that also accepts a non-converged final iterate whose
/// residual is within `sqrt(tol) * max(1, value)`; the flag reports that
/// case (typically a nearly repeated top eigenvalue).
pub fn dominant_pair(
    a: &Matrix,
    cfg: &PowerConfig,
    start: Option<&Vector>,
    seed: u64,
) -> Result<(DominantPair, bool)> {
    match power_iteration_from(a, cfg, start, seed) {
        Ok(pair) => Ok((pair, false)),
        Err(BssError::NotConverged {
            last,
            iterations,
            last_change,
        }) => {
            let scale = last.value.abs().max(1.0);
            if eigen_residual(a, &last) <= cfg.tol.sqrt() * scale {
                Ok((*last, true))
            } else {
                Err(BssError::NotConverged {
                    last,
                    iterations,
                    last_change,
                })
            }
        }
        Err(e) => Err(e),
    }
}

/// Residual `|A v - value v|_inf` of an eigenpair.
pub fn eigen_residual(a: &Matrix, pair: &DominantPair) -> f64 {
    (a * &pair.vector - &pair.vector * pair.value).amax()
}

/// Principal submatrix `g[idx, idx]`.
pub fn principal_submatrix(g: &Matrix, idx: &[usize]) -> Matrix {
    Matrix::from_fn(idx.len(), idx.len(), |i, j| g[(idx[i], idx[j])])
}

/// Rows `idx` of `m`.
pub fn select_rows(m: &Matrix, idx: &[usize]) -> Matrix {
    Matrix::from_fn(idx.len(), m.ncols(), |i, j| m[(idx[i], j)])
}

/// Columns `idx` of `m`.
pub fn select_columns(m: &Matrix, idx: &[usize]) -> Matrix {
    Matrix::from_fn(m.nrows(), idx.len(), |i, j| m[(i, idx[j])])
}

/// Spectral condition number via singular values; infinite when singular.
pub fn condition_number(a: &Matrix) -> f64 {
    let sv = a.clone().svd(false, false).singular_values;
    let max = sv.max();
    let min = sv.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn centers_two_point_column() {
        let x = Matrix::from_row_slice(2, 1, &[1.0, 3.0]);
        let c = center_columns(&x).unwrap();
        assert_eq!(c, Matrix::from_row_slice(2, 1, &[-1.0, 1.0]));
    }

    #[test]
    fn centers_arithmetic_progressions() {
        let x = Matrix::from_row_slice(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let c = center_columns(&x).unwrap();
        let expected = Matrix::from_row_slice(3, 2, &[-2.0, -2.0, 0.0, 0.0, 2.0, 2.0]);
        assert_abs_diff_eq!(c, expected, epsilon = 1e-15);
    }

    #[test]
    fn centering_needs_two_rows() {
        let x = Matrix::from_row_slice(1, 2, &[1.0, 2.0]);
        assert!(matches!(center_columns(&x), Err(BssError::Dimension(_))));
    }

    #[test]
    fn frobenius_small_cases() {
        assert_eq!(frobenius_norm(&Matrix::zeros(3, 2)), 0.0);
        assert_abs_diff_eq!(
            frobenius_norm(&Matrix::identity(2, 2)),
            2f64.sqrt(),
            epsilon = 1e-15
        );
        assert_eq!(frobenius_norm(&Matrix::from_row_slice(1, 2, &[3.0, 4.0])), 5.0);
    }

    #[test]
    fn power_on_diagonal() {
        let a = Matrix::from_diagonal(&Vector::from_vec(vec![2.0, 0.5]));
        let pair = power_iteration(&a, &PowerConfig::default(), 7).unwrap();
        assert_abs_diff_eq!(pair.value, 2.0, epsilon = 1e-10);
        assert_abs_diff_eq!(pair.vector[0], 1.0, epsilon = 1e-8);
        assert_abs_diff_eq!(pair.vector[1], 0.0, epsilon = 1e-8);
    }

    #[test]
    fn power_on_identity_accepts_any_vector() {
        let a = Matrix::identity(3, 3);
        let pair = power_iteration(&a, &PowerConfig::default(), 3).unwrap();
        assert_abs_diff_eq!(pair.value, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(pair.vector.norm(), 1.0, epsilon = 1e-12);
        assert!(eigen_residual(&a, &pair) < 1e-10);
    }

    #[test]
    fn power_on_zero_matrix() {
        let pair = power_iteration(&Matrix::zeros(4, 4), &PowerConfig::default(), 1).unwrap();
        assert_eq!(pair.value, 0.0);
        assert_abs_diff_eq!(pair.vector.norm(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn power_redraws_when_start_is_in_null_space() {
        let a = Matrix::from_diagonal(&Vector::from_vec(vec![0.0, 3.0]));
        let start = Vector::from_vec(vec![1.0, 0.0]);
        let pair = power_iteration_from(&a, &PowerConfig::default(), Some(&start), 11).unwrap();
        assert_abs_diff_eq!(pair.value, 3.0, epsilon = 1e-10);
    }

    #[test]
    fn power_rejects_non_square() {
        let a = Matrix::zeros(2, 3);
        assert!(matches!(
            power_iteration(&a, &PowerConfig::default(), 0),
            Err(BssError::Dimension(_))
        ));
    }

    #[test]
    fn power_reports_last_iterate_when_budget_runs_out() {
        let a = Matrix::from_diagonal(&Vector::from_vec(vec![1.0, 0.999_999]));
        let cfg = PowerConfig {
            tol: 1e-14,
            max_iter: 5,
        };
        match power_iteration(&a, &cfg, 5) {
            Err(BssError::NotConverged { last, iterations, .. }) => {
                assert_eq!(iterations, 5);
                assert_abs_diff_eq!(last.vector.norm(), 1.0, epsilon = 1e-12);
            }
            other => panic!("expected NotConverged, got {other:?}"),
        }
    }

    #[test]
    fn sign_convention() {
        let mut v = Vector::from_vec(vec![0.1, -0.9, 0.3]);
        normalize_sign(&mut v);
        assert!(v[1] > 0.0);
    }

    #[test]
    fn warm_start_on_a_minor_eigenvector_still_finds_the_top() {
        let a = Matrix::from_diagonal(&Vector::from_vec(vec![1.0, 4.0]));
        let warm = Vector::from_vec(vec![1.0, 0.0]);
        let pair = power_iteration_from(&a, &PowerConfig::default(), Some(&warm), 7).unwrap();
        assert_abs_diff_eq!(pair.value, 4.0, epsilon = 1e-9);
    }
}
