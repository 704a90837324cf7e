//! Independent reference computations for the integration suites.
#![allow(dead_code)]

use bss_core::linalg::center_columns;
use bss_core::{Matrix, Vector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
    Matrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal))
}

pub fn centered_normal(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
    center_columns(&normal_matrix(rng, r, c)).unwrap()
}

pub fn uniform_vector(rng: &mut ChaCha8Rng, len: usize, lo: f64, hi: f64) -> Vector {
    Vector::from_fn(len, |_, _| rng.random_range(lo..hi))
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations: eigenvalues in
/// decreasing order, eigenvectors as the matching columns.
pub fn jacobi_eigen(a: &Matrix) -> (Vec<f64>, Matrix) {
    let n = a.nrows();
    assert_eq!(n, a.ncols());
    let mut m = a.clone();
    let mut v = Matrix::identity(n, n);
    let scale = m.iter().map(|x| x * x).sum::<f64>().max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum();
        if off <= 1e-30 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(j, j)].total_cmp(&m[(i, i)]));
    let values = order.iter().map(|&i| m[(i, i)]).collect();
    let vectors = Matrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    (values, vectors)
}

/// Largest eigenvalue and its distance to the second one.
pub fn top_and_gap(a: &Matrix) -> (f64, f64) {
    let (vals, _) = jacobi_eigen(a);
    let gap = if vals.len() > 1 { vals[0] - vals[1] } else { f64::INFINITY };
    (vals[0], gap)
}

pub fn central_difference(f: impl Fn(&Vector) -> f64, x: &Vector, h: f64) -> Vector {
    Vector::from_fn(x.len(), |j, _| {
        let mut plus = x.clone();
        let mut minus = x.clone();
        plus[j] += h;
        minus[j] -= h;
        (f(&plus) - f(&minus)) / (2.0 * h)
    })
}

/// `||a - b||_inf / ||b||_inf`.
pub fn rel_inf(a: &Vector, b: &Vector) -> f64 {
    (a - b).amax() / b.amax().max(f64::MIN_POSITIVE)
}

/// `diag(t) A diag(t)`.
pub fn sandwich(a: &Matrix, t: &Vector) -> Matrix {
    Matrix::from_fn(a.nrows(), a.ncols(), |i, j| t[i] * a[(i, j)] * t[j])
}

/// Unpenalized relaxed objective from its definition: `-||X_t'y||^2/n^2`,
/// `-lambda_max(M_t'M_t)` or `-lambda_max(X_t'X_t/n)`, with `X_t = X diag(t)`.
pub fn reference_f0(kind: &str, x: &Matrix, y: Option<&Matrix>, t: &Vector) -> f64 {
    let n = x.nrows() as f64;
    let xt = Matrix::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)] * t[j]);
    match kind {
        "pls1" => -(xt.transpose() * y.unwrap().column(0)).norm_squared() / (n * n),
        "pls2" => {
            let mt = xt.transpose() * y.unwrap() / n;
            -jacobi_eigen(&(mt.transpose() * &mt)).0[0]
        }
        "pca" => -jacobi_eigen(&(xt.transpose() * &xt / n)).0[0],
        _ => unreachable!(),
    }
}

/// One-component regression-mode PLS fit on the rows `train`, written out
/// from the definitions; returns predictions for `test` rows.
pub fn one_component_predictions(
    x: &Matrix,
    y: &Matrix,
    support: &[usize],
    train: &[usize],
    test: &[usize],
) -> Matrix {
    let pick = |m: &Matrix, rows: &[usize]| {
        Matrix::from_fn(rows.len(), m.ncols(), |i, j| m[(rows[i], j)])
    };
    let xtr = pick(x, train);
    let ytr = pick(y, train);
    let xm = Vector::from_fn(x.ncols(), |j, _| xtr.column(j).mean());
    let ym = Vector::from_fn(y.ncols(), |j, _| ytr.column(j).mean());
    let xc = Matrix::from_fn(xtr.nrows(), xtr.ncols(), |i, j| xtr[(i, j)] - xm[j]);
    let yc = Matrix::from_fn(ytr.nrows(), ytr.ncols(), |i, j| ytr[(i, j)] - ym[j]);
    let mut m = xc.transpose() * &yc;
    for j in 0..m.nrows() {
        if !support.contains(&j) {
            m.row_mut(j).fill(0.0);
        }
    }
    let (_, vecs) = jacobi_eigen(&(&m * m.transpose()));
    let u = vecs.column(0).into_owned();
    let xi = &xc * &u;
    let d = yc.transpose() * &xi / xi.norm_squared();
    let beta = &u * d.transpose();
    let mut out = Matrix::zeros(test.len(), y.ncols());
    for (r, &i) in test.iter().enumerate() {
        let xr = x.row(i).transpose() - &xm;
        let pred = beta.transpose() * xr + &ym;
        out.row_mut(r).copy_from(&pred.transpose());
    }
    out
}

/// Non-sparse regression-mode PLS with `h` components: dominant left
/// singular vector of the deflated cross-product, deflation, then
/// `beta = U (C'U)^{-1} (T'T)^{-1} T'Y`.
pub fn dense_pls_beta(x: &Matrix, y: &Matrix, h: usize) -> Matrix {
    let mut xd = x.clone();
    let mut yd = y.clone();
    let mut us = Vec::new();
    let mut cs = Vec::new();
    let mut ts = Vec::new();
    for _ in 0..h {
        let m = xd.transpose() * &yd;
        let (_, vecs) = jacobi_eigen(&(&m * m.transpose()));
        let u = vecs.column(0).into_owned();
        let xi = &xd * &u;
        let nx = xi.norm_squared();
        let c = xd.transpose() * &xi / nx;
        let d = yd.transpose() * &xi / nx;
        xd -= &xi * c.transpose();
        yd -= &xi * d.transpose();
        us.push(u);
        cs.push(c);
        ts.push(xi);
    }
    let u = Matrix::from_columns(&us);
    let c = Matrix::from_columns(&cs);
    let t = Matrix::from_columns(&ts);
    let w = &u * (c.transpose() * &u).try_inverse().unwrap();
    let ttt = (t.transpose() * &t).try_inverse().unwrap();
    w * ttt * t.transpose() * y
}
