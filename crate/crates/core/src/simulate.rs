//! Seeded generators for the simulation designs: latent-variable
//! multi-response PLS data, a univariate hidden-factor design and a
//! covariance with two sparse leading eigenvectors.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{BssError, Result};
use crate::linalg::{Matrix, Vector};
use crate::subset::Subset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    Multiresponse,
    TwoComponent,
    Univariate,
    PcaCov,
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scenario::Multiresponse => "multiresponse",
            Scenario::TwoComponent => "two-component",
            Scenario::Univariate => "univariate",
            Scenario::PcaCov => "pca-cov",
        })
    }
}

impl FromStr for Scenario {
    type Err = BssError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "multiresponse" => Ok(Scenario::Multiresponse),
            "two-component" => Ok(Scenario::TwoComponent),
            "univariate" => Ok(Scenario::Univariate),
            "pca-cov" => Ok(Scenario::PcaCov),
            other => Err(BssError::config(format!("unknown scenario {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub scenario: Scenario,
    pub n: usize,
    pub p: usize,
    /// Response columns (ignored for `univariate` and `pca-cov`).
    pub q: usize,
    /// Noise standard deviation.
    pub sigma: f64,
    /// Number of columns unrelated to the latent structure.
    pub gamma: usize,
    /// Target `var(signal) / var(noise)` for `univariate`.
    pub snr: f64,
    /// Rows of the independent test sample drawn from the same truth.
    pub n_test: usize,
    pub seed: u64,
}

impl SimConfig {
    /// `p = 15`, `q = 10`, `n = 100`, `gamma = 5`, `sigma = 3`.
    pub fn multiresponse() -> Self {
        SimConfig {
            scenario: Scenario::Multiresponse,
            n: 100,
            p: 15,
            q: 10,
            sigma: 3.0,
            gamma: 5,
            snr: 0.0,
            n_test: 50,
            seed: 0,
        }
    }

    /// Two latent components on `p = 30`, `q = 10`.
    pub fn two_component() -> Self {
        SimConfig {
            scenario: Scenario::TwoComponent,
            n: 100,
            p: 30,
            q: 10,
            sigma: 1.5,
            gamma: 10,
            snr: 0.0,
            n_test: 50,
            seed: 0,
        }
    }

    /// `n = 400`, `p = 40`, `gamma = 10`, signal-to-noise 3.
    pub fn univariate() -> Self {
        SimConfig {
            scenario: Scenario::Univariate,
            n: 400,
            p: 40,
            q: 1,
            sigma: 1.0,
            gamma: 10,
            snr: 3.0,
            n_test: 200,
            seed: 0,
        }
    }

    pub fn pca_cov() -> Self {
        SimConfig {
            scenario: Scenario::PcaCov,
            n: 300,
            p: 10,
            q: 0,
            sigma: 0.0,
            gamma: 4,
            snr: 0.0,
            n_test: 0,
            seed: 0,
        }
    }

    pub fn defaults_for(scenario: Scenario) -> Self {
        match scenario {
            Scenario::Multiresponse => Self::multiresponse(),
            Scenario::TwoComponent => Self::two_component(),
            Scenario::Univariate => Self::univariate(),
            Scenario::PcaCov => Self::pca_cov(),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = sigma;
        self
    }
}

/// Generating parameters, serialized next to the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub scenario: Scenario,
    pub n: usize,
    pub p: usize,
    pub q: usize,
    pub sigma: f64,
    pub gamma: usize,
    pub seed: u64,
    /// Columns carrying signal (union over components).
    pub support: Vec<usize>,
    /// Per-component supports.
    pub supports: Vec<Vec<usize>>,
    /// `C` (p x H), rows in column order.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub c: Option<Vec<Vec<f64>>>,
    /// `D` (q x H) with `B = I`, rows in response order.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub d: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub eigenvalues: Option<Vec<f64>>,
    /// Leading population eigenvectors (as columns, listed one per entry).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub eigenvectors: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub noise_sd: Option<f64>,
}

impl Truth {
    pub fn support_subset(&self) -> Subset {
        Subset::from_indices(self.p, &self.support).expect("support indices are in range")
    }

    pub fn component_subsets(&self) -> Vec<Subset> {
        self.supports
            .iter()
            .map(|s| Subset::from_indices(self.p, s).expect("support indices are in range"))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimInstance {
    pub x: Matrix,
    pub y: Option<Matrix>,
    pub x_test: Option<Matrix>,
    pub y_test: Option<Matrix>,
    pub true_support: Subset,
    pub truth: Truth,
}

fn rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn normal_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize, sd: f64) -> Matrix {
    Matrix::from_fn(r, c, |_, _| sd * rng.sample::<f64, _>(StandardNormal))
}

/// Default single-component `C`: `gamma` zeros, then `+1, -1, +1, ...`.
pub fn alternating_loadings(p: usize, gamma: usize) -> Vector {
    Vector::from_fn(p, |j, _| {
        if j < gamma {
            0.0
        } else if (j - gamma) % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    })
}

/// The two-component `C`: alternating `+1/-1` on columns 1..10 and
/// `+1/-1.5` on columns 11..20, zero elsewhere (`p = 30`).
pub fn two_component_loadings(p: usize) -> Result<Matrix> {
    if p < 20 {
        return Err(BssError::config(format!(
            "two-component design needs p >= 20, got {p}"
        )));
    }
    Ok(Matrix::from_fn(p, 2, |j, h| match (h, j) {
        (0, 0..=9) => {
            if j % 2 == 0 {
                1.0
            } else {
                -1.0
            }
        }
        (1, 10..=19) => {
            if j % 2 == 0 {
                1.0
            } else {
                -1.5
            }
        }
        _ => 0.0,
    }))
}

/// `X = T C' + E_X`, `Y = T D' + E_Y` with `T ~ U(-1, 3)`, noise
/// `N(0, sigma^2)` and `D' ~ U(0.5, 10)`; the inner relation is `S = T`.
pub fn gen_multiresponse(cfg: &SimConfig) -> Result<SimInstance> {
    let (c, h) = match cfg.scenario {
        Scenario::Multiresponse => {
            if cfg.gamma > cfg.p {
                return Err(BssError::config(format!(
                    "gamma = {} exceeds p = {}",
                    cfg.gamma, cfg.p
                )));
            }
            (Matrix::from_column_slice(cfg.p, 1, alternating_loadings(cfg.p, cfg.gamma).as_slice()), 1)
        }
        Scenario::TwoComponent => (two_component_loadings(cfg.p)?, 2),
        other => {
            return Err(BssError::config(format!(
                "gen_multiresponse does not handle scenario {other}"
            )))
        }
    };
    if cfg.n < 2 || cfg.q == 0 || !(cfg.sigma >= 0.0) {
        return Err(BssError::config("need n >= 2, q >= 1 and sigma >= 0"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let latent = Uniform::new(-1.0, 3.0).expect("valid range");
    let coef = Uniform::new(0.5, 10.0).expect("valid range");
    // B D' (H x q); with B = I it is D'.
    let dt = Matrix::from_fn(h, cfg.q, |_, _| coef.sample(&mut rng));

    let draw = |n: usize, rng: &mut ChaCha8Rng| {
        let t = Matrix::from_fn(n, h, |_, _| latent.sample(rng));
        let x = &t * c.transpose() + normal_matrix(rng, n, cfg.p, cfg.sigma);
        let y = &t * &dt + normal_matrix(rng, n, cfg.q, cfg.sigma);
        (x, y)
    };
    let (x, y) = draw(cfg.n, &mut rng);
    let (x_test, y_test) = if cfg.n_test > 0 {
        let (a, b) = draw(cfg.n_test, &mut rng);
        (Some(a), Some(b))
    } else {
        (None, None)
    };

    let supports: Vec<Vec<usize>> = (0..h)
        .map(|k| (0..cfg.p).filter(|&j| c[(j, k)] != 0.0).collect())
        .collect();
    let support: Vec<usize> = (0..cfg.p)
        .filter(|&j| (0..h).any(|k| c[(j, k)] != 0.0))
        .collect();
    let truth = Truth {
        scenario: cfg.scenario,
        n: cfg.n,
        p: cfg.p,
        q: cfg.q,
        sigma: cfg.sigma,
        gamma: cfg.p - support.len(),
        seed: cfg.seed,
        support: support.clone(),
        supports,
        c: Some(rows(&c)),
        d: Some(rows(&dt.transpose())),
        eigenvalues: None,
        eigenvectors: None,
        noise_sd: Some(cfg.sigma),
    };
    Ok(SimInstance {
        true_support: Subset::from_indices(cfg.p, &support)?,
        x,
        y: Some(y),
        x_test,
        y_test,
        truth,
    })
}

/// Three hidden factors `H_1, H_2, H_3 ~ N(0, 25)`; columns
/// `[0, (p - gamma)/2)` load on `H_1`, `[(p - gamma)/2, p - gamma)` on `H_2`
/// and the last `gamma` on `H_3`, each plus `N(0, 1)` noise;
/// `y = 3 H_1 - 4 H_2 + f` with `var(f)` set from the drawn signal's
/// variance and `snr`.
pub fn gen_univariate(cfg: &SimConfig) -> Result<SimInstance> {
    if cfg.scenario != Scenario::Univariate {
        return Err(BssError::config("gen_univariate needs the univariate scenario"));
    }
    if cfg.gamma > cfg.p || (cfg.p - cfg.gamma) % 2 != 0 {
        return Err(BssError::config(format!(
            "block boundaries need p - gamma even and non-negative (p = {}, gamma = {})",
            cfg.p, cfg.gamma
        )));
    }
    if cfg.n < 2 || !(cfg.snr > 0.0) {
        return Err(BssError::config("need n >= 2 and snr > 0"));
    }
    let half = (cfg.p - cfg.gamma) / 2;
    let bounds = [0, half, cfg.p - cfg.gamma, cfg.p];
    let block = |j: usize| (0..3).find(|&b| j >= bounds[b] && j < bounds[b + 1]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let draw = |n: usize, noise_sd: Option<f64>, rng: &mut ChaCha8Rng| {
        let hidden = normal_matrix(rng, n, 3, 5.0);
        let eps = normal_matrix(rng, n, cfg.p, 1.0);
        let x = Matrix::from_fn(n, cfg.p, |i, j| hidden[(i, block(j))] + eps[(i, j)]);
        let signal = Vector::from_fn(n, |i, _| 3.0 * hidden[(i, 0)] - 4.0 * hidden[(i, 1)]);
        let sd = noise_sd.unwrap_or_else(|| {
            let mean = signal.mean();
            let var = signal.map(|s| (s - mean) * (s - mean)).sum() / (n as f64 - 1.0);
            (var / cfg.snr).sqrt()
        });
        let noise = Normal::new(0.0, sd).expect("finite sd");
        let y = Matrix::from_fn(n, 1, |i, _| signal[i] + noise.sample(rng));
        (x, y, sd)
    };
    let (x, y, sd) = draw(cfg.n, None, &mut rng);
    let (x_test, y_test) = if cfg.n_test > 0 {
        let (a, b, _) = draw(cfg.n_test, Some(sd), &mut rng);
        (Some(a), Some(b))
    } else {
        (None, None)
    };
    let support: Vec<usize> = (0..cfg.p - cfg.gamma).collect();
    let truth = Truth {
        scenario: cfg.scenario,
        n: cfg.n,
        p: cfg.p,
        q: 1,
        sigma: cfg.sigma,
        gamma: cfg.gamma,
        seed: cfg.seed,
        support: support.clone(),
        supports: vec![(0..half).collect(), (half..cfg.p - cfg.gamma).collect()],
        c: None,
        d: None,
        eigenvalues: None,
        eigenvectors: None,
        noise_sd: Some(sd),
    };
    Ok(SimInstance {
        true_support: Subset::from_indices(cfg.p, &support)?,
        x,
        y: Some(y),
        x_test,
        y_test,
        truth,
    })
}

pub const PCA_EIGENVALUES: [f64; 10] = [200.0, 100.0, 50.0, 50.0, 6.0, 5.0, 4.0, 3.0, 2.0, 1.0];
const PCA_LEAD_1: [f64; 10] = [1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.9, 0.9];
const PCA_LEAD_2: [f64; 10] = [0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0, -0.3, 0.3];

/// Orthonormal eigenvector basis of the sparse-PCA covariance: the two
/// normalized leading vectors, completed by Gram-Schmidt on the standard
/// basis.
pub fn pca_eigenvectors() -> Matrix {
    let mut basis: Vec<Vector> = Vec::with_capacity(10);
    for lead in [PCA_LEAD_1, PCA_LEAD_2] {
        let v = Vector::from_column_slice(&lead);
        basis.push(&v / v.norm());
    }
    for e in 0..10 {
        if basis.len() == 10 {
            break;
        }
        let mut v = Vector::zeros(10);
        v[e] = 1.0;
        for b in &basis {
            let proj = b.dot(&v);
            v.axpy(-proj, b, 1.0);
        }
        // re-orthogonalize once for accuracy
        for b in &basis {
            let proj = b.dot(&v);
            v.axpy(-proj, b, 1.0);
        }
        if v.norm() > 1e-8 {
            let norm = v.norm();
            basis.push(v / norm);
        }
    }
    Matrix::from_columns(&basis)
}

pub fn pca_covariance() -> Matrix {
    let u = pca_eigenvectors();
    &u * Matrix::from_diagonal(&Vector::from_column_slice(&PCA_EIGENVALUES)) * u.transpose()
}

/// Rows `x = sum_i sqrt(lambda_i) z_i u_i` with `z ~ N(0, I)`, so that
/// `cov(x)` is the sparse-PCA covariance (`p = 10`).
pub fn gen_pca_cov(cfg: &SimConfig) -> Result<SimInstance> {
    if cfg.scenario != Scenario::PcaCov || cfg.p != 10 {
        return Err(BssError::config("pca-cov needs p = 10"));
    }
    if cfg.n < 2 {
        return Err(BssError::config("need n >= 2"));
    }
    let u = pca_eigenvectors();
    let scale = Matrix::from_diagonal(&Vector::from_iterator(
        10,
        PCA_EIGENVALUES.iter().map(|l| l.sqrt()),
    ));
    let mix = &u * scale;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let draw = |n: usize, rng: &mut ChaCha8Rng| normal_matrix(rng, n, 10, 1.0) * mix.transpose();
    let x = draw(cfg.n, &mut rng);
    let x_test = (cfg.n_test > 0).then(|| draw(cfg.n_test, &mut rng));

    let first: Vec<usize> = vec![0, 1, 2, 3, 8, 9];
    let second: Vec<usize> = vec![4, 5, 6, 7, 8, 9];
    let truth = Truth {
        scenario: cfg.scenario,
        n: cfg.n,
        p: 10,
        q: 0,
        sigma: cfg.sigma,
        gamma: 4,
        seed: cfg.seed,
        support: first.clone(),
        supports: vec![first.clone(), second],
        c: None,
        d: None,
        eigenvalues: Some(PCA_EIGENVALUES.to_vec()),
        eigenvectors: Some((0..2).map(|k| u.column(k).iter().copied().collect()).collect()),
        noise_sd: None,
    };
    Ok(SimInstance {
        true_support: Subset::from_indices(10, &first)?,
        x,
        y: None,
        x_test,
        y_test: None,
        truth,
    })
}

pub fn generate(cfg: &SimConfig) -> Result<SimInstance> {
    match cfg.scenario {
        Scenario::Multiresponse | Scenario::TwoComponent => gen_multiresponse(cfg),
        Scenario::Univariate => gen_univariate(cfg),
        Scenario::PcaCov => gen_pca_cov(cfg),
    }
}
