//! Multi-component fitting: per-component loadings on a chosen subset,
//! deflation, adjusted weights, regression coefficients, explained variance
//! and cross-validated predictive power.
//!
//! Component `h` is computed on the deflated pair `(X_{h-1}, Y_{h-1})`:
//!
//! * scores `xi = X_{h-1} u`, `psi = Y_{h-1} v`,
//! * `c = X_{h-1}' xi / (xi' xi)` and `X_h = X_{h-1} - xi c'`,
//! * regression mode: `d = Y_{h-1}' xi / (xi' xi)`, `Y_h = Y_{h-1} - xi d'`,
//! * canonical mode: `Y_h = Y_{h-1} - psi e'` with `e` as selected by
//!   [`CanonicalDenominator`].
//!
//! Adjusted weights `w_h` satisfy `X w_h = X_{h-1} u_h`, so `T = X W` holds
//! on the original (centered) `X`.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, ModelKind, ModelSpec, PlsMode};
use crate::error::{BssError, Result};
use crate::linalg::{
    center_columns_with_means, condition_number, dominant_pair, frobenius_norm, normalize_sign,
    principal_submatrix, select_rows, Matrix, PowerConfig, Vector,
};
use crate::metrics::msep;
use crate::path::{dynamic_grid, GridConfig, SolutionPath};
use crate::solver::SolverConfig;
use crate::subset::Subset;

const LOADING_SEED: u64 = 0x10AD;
/// `C'U` is declared singular above this condition number.
pub const SINGULAR_CONDITION: f64 = 1e12;
/// A score shorter than this fraction of `||X||_F` (original data) is
/// numerically zero: the deflated data carry no further component.
pub const SCORE_FLOOR: f64 = 1e-12;
/// Per-component offset of the path-building seed.
const COMPONENT_SEED_STRIDE: u64 = 0xA076_1D64_78BD_642F;

#[derive(Debug, Clone, PartialEq)]
pub struct Loading {
    /// Unit norm, zero off the subset.
    pub u: Vector,
    /// Unit-norm response loading (PLS only).
    pub v: Option<Vector>,
    /// `||X_s'y||^2 / n^2` (PLS1), squared top singular value of `M_s`
    /// (PLS2) or top eigenvalue of the masked covariance (PCA).
    pub delta: f64,
}

/// Best loading supported on `s` for the data at the current step.
pub fn loading_from_subset(ds: &Dataset, kind: ModelKind, s: &Subset) -> Result<Loading> {
    let p = ds.p();
    if s.len() != p {
        return Err(BssError::dimension(format!(
            "subset has length {}, expected {p}",
            s.len()
        )));
    }
    let idx = s.indices();
    if idx.is_empty() {
        return Err(BssError::DegenerateLoading("empty subset".into()));
    }
    let n = ds.n() as f64;
    let x = ds.x();
    let y = ds.response_for(kind)?;
    let power = PowerConfig::default();
    let embed = |us: &Vector| {
        let mut u = Vector::zeros(p);
        for (i, &j) in idx.iter().enumerate() {
            u[j] = us[i];
        }
        u
    };

    let (mut u, mut v, delta) = match kind {
        ModelKind::Pls1 => {
            let y = y.expect("checked by response_for");
            let z = (x.transpose() * y.column(0)) / n;
            let zs = Vector::from_iterator(idx.len(), idx.iter().map(|&j| z[j]));
            let norm = zs.norm();
            if norm == 0.0 {
                return Err(BssError::DegenerateLoading(format!(
                    "X_s'y vanishes on subset {s}"
                )));
            }
            (embed(&(zs / norm)), Some(Vector::from_element(1, 1.0)), norm * norm)
        }
        ModelKind::Pls2 => {
            let y = y.expect("checked by response_for");
            let m = (x.transpose() * y) / n;
            let ms = select_rows(&m, &idx);
            if ms.amax() == 0.0 {
                return Err(BssError::DegenerateLoading(format!(
                    "X_s'Y vanishes on subset {s}"
                )));
            }
            let (us, v, delta) = if ms.ncols() <= ms.nrows() {
                let (pair, _) = dominant_pair(&(ms.transpose() * &ms), &power, None, LOADING_SEED)?;
                let mv = &ms * &pair.vector;
                let norm = mv.norm();
                if norm == 0.0 {
                    return Err(BssError::DegenerateLoading(format!("M_s v vanishes on {s}")));
                }
                (mv / norm, pair.vector, pair.value)
            } else {
                let (pair, _) = dominant_pair(&(&ms * ms.transpose()), &power, None, LOADING_SEED)?;
                let mu = ms.transpose() * &pair.vector;
                let norm = mu.norm();
                if norm == 0.0 {
                    return Err(BssError::DegenerateLoading(format!("M_s'u vanishes on {s}")));
                }
                (pair.vector, mu / norm, pair.value)
            };
            (embed(&us), Some(v), delta)
        }
        ModelKind::Pca => {
            let g = (x.transpose() * x) / n;
            let sub = principal_submatrix(&g, &idx);
            if sub.amax() == 0.0 {
                return Err(BssError::DegenerateLoading(format!(
                    "masked covariance vanishes on subset {s}"
                )));
            }
            let (pair, _) = dominant_pair(&sub, &power, None, LOADING_SEED)?;
            (embed(&pair.vector), None, pair.value)
        }
    };
    let before = u.clone();
    normalize_sign(&mut u);
    if u != before {
        if let Some(v) = v.as_mut() {
            v.neg_mut();
        }
    }
    Ok(Loading { u, v, delta })
}

/// Denominator of the canonical-mode response regressor `e`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CanonicalDenominator {
    /// `e = Y_{h-1}' xi / (psi' xi)`.
    #[default]
    ScoreCross,
    /// `e = Y_{h-1}' psi / (psi' psi)`.
    ResponseScore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentState {
    /// 1-based component index.
    pub h: usize,
    pub subset: Subset,
    pub u: Vector,
    pub v: Option<Vector>,
    pub xi: Vector,
    pub psi: Option<Vector>,
    pub c: Vector,
    pub d: Option<Vector>,
    pub e: Option<Vector>,
    pub w: Vector,
    /// `f_0` of the subset on the data this component was fitted to.
    pub objective: f64,
}

/// Scores, regressors and the deflated data for one component.
pub fn deflate(
    ds: &Dataset,
    h: usize,
    subset: &Subset,
    loading: &Loading,
    mode: PlsMode,
    denominator: CanonicalDenominator,
) -> Result<(ComponentState, Dataset)> {
    let x = ds.x();
    let xi = x * &loading.u;
    let xtx = xi.norm_squared();
    if xtx == 0.0 {
        return Err(BssError::DegenerateScore(format!(
            "X-score of component {h} is zero"
        )));
    }
    let c = x.transpose() * &xi / xtx;
    let mut x_next = x.clone();
    x_next.ger(-1.0, &xi, &c, 1.0);

    let (psi, d, e, y_next) = match (ds.y(), &loading.v) {
        (Some(y), Some(v)) => {
            let psi = y * v;
            let d = y.transpose() * &xi / xtx;
            let mut y_next = y.clone();
            let e = match mode {
                PlsMode::Regression => {
                    y_next.ger(-1.0, &xi, &d, 1.0);
                    None
                }
                PlsMode::Canonical => {
                    let (num, den) = match denominator {
                        CanonicalDenominator::ScoreCross => (y.transpose() * &xi, psi.dot(&xi)),
                        CanonicalDenominator::ResponseScore => {
                            (y.transpose() * &psi, psi.norm_squared())
                        }
                    };
                    if den == 0.0 {
                        return Err(BssError::DegenerateScore(format!(
                            "canonical deflation denominator of component {h} is zero"
                        )));
                    }
                    let e = num / den;
                    y_next.ger(-1.0, &psi, &e, 1.0);
                    Some(e)
                }
            };
            (Some(psi), Some(d), e, Some(y_next))
        }
        _ => (None, None, None, ds.y().cloned()),
    };

    let state = ComponentState {
        h,
        subset: subset.clone(),
        u: loading.u.clone(),
        v: loading.v.clone(),
        xi,
        psi,
        c,
        d,
        e,
        w: Vector::zeros(0),
        objective: -loading.delta,
    };
    Ok((state, Dataset::new(x_next, y_next)?))
}

/// `w_h = (I - u_1 c_1') ... (I - u_{h-1} c_{h-1}') u_h`, factor `h-1` applied first.
pub fn adjusted_weight(us: &[Vector], cs: &[Vector], u_h: &Vector) -> Vector {
    let mut w = u_h.clone();
    for (u, c) in us.iter().zip(cs).rev() {
        let coef = c.dot(&w);
        w.axpy(-coef, u, 1.0);
    }
    w
}

/// Loading, deflation and the relative zero-score check for component `h`.
fn component_step(
    ds: &Dataset,
    x0_norm: f64,
    h: usize,
    s: &Subset,
    spec: ModelSpec,
    denominator: CanonicalDenominator,
) -> Result<(ComponentState, Dataset)> {
    let step = loading_from_subset(ds, spec.kind, s)
        .and_then(|l| deflate(ds, h, s, &l, spec.mode, denominator))
        .and_then(|(state, next)| {
            if state.xi.norm() <= SCORE_FLOOR * x0_norm {
                Err(BssError::DegenerateScore(format!(
                    "X-score of component {h} is numerically zero"
                )))
            } else {
                Ok((state, next))
            }
        });
    step.map_err(|e| BssError::Component {
        h,
        source: Box::new(e),
    })
}

/// Adjusted weights by the product formula, one column per component.
pub fn adjusted_weights(u: &Matrix, c: &Matrix) -> Matrix {
    let h = u.ncols();
    let us: Vec<Vector> = (0..h).map(|k| u.column(k).into_owned()).collect();
    let cs: Vec<Vector> = (0..h).map(|k| c.column(k).into_owned()).collect();
    let cols: Vec<Vector> = (0..h).map(|k| adjusted_weight(&us[..k], &cs[..k], &us[k])).collect();
    Matrix::from_columns(&cols)
}

/// `U (C'U)^{-1}`; fails when `C'U` is (numerically) singular.
pub fn adjusted_weights_by_inverse(u: &Matrix, c: &Matrix) -> Result<Matrix> {
    let ctu = c.transpose() * u;
    let condition = condition_number(&ctu);
    if !(condition < SINGULAR_CONDITION) {
        return Err(BssError::Singular { condition });
    }
    let inv = ctu
        .try_inverse()
        .ok_or(BssError::Singular { condition })?;
    Ok(u * inv)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MsepSource {
    /// Held-out rows supplied in [`FitOptions::test`].
    TestSet,
    /// v-fold cross-validation on the training rows.
    Folds(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PickStrategy {
    /// Smallest `k` with `CPEV_k >= (1 - fraction) * CPEV_K`.
    CpevDrop(f64),
    MinMsep(MsepSource),
    /// Largest cross-validated `|corr(X-score, Y-score)|`.
    MaxAbsCorrelation,
    FixedK(usize),
}

impl std::str::FromStr for PickStrategy {
    type Err = BssError;

    /// `cpev-drop=F`, `min-msep`, `min-msep=test`, `min-msep=V`, `max-cor`,
    /// `fixed-k=K`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, arg) = match s.split_once('=') {
            Some((a, b)) => (a, Some(b)),
            None => (s, None),
        };
        let bad = || BssError::config(format!("invalid pick strategy {s:?}"));
        match (name, arg) {
            ("cpev-drop", Some(f)) => {
                let f: f64 = f.parse().map_err(|_| bad())?;
                if !(f > 0.0 && f < 1.0) {
                    return Err(BssError::config("cpev-drop fraction must lie in (0, 1)"));
                }
                Ok(PickStrategy::CpevDrop(f))
            }
            ("min-msep", None) => Ok(PickStrategy::MinMsep(MsepSource::Folds(DEFAULT_FOLDS))),
            ("min-msep", Some("test")) => Ok(PickStrategy::MinMsep(MsepSource::TestSet)),
            ("min-msep", Some(v)) => Ok(PickStrategy::MinMsep(MsepSource::Folds(
                v.parse().map_err(|_| bad())?,
            ))),
            ("max-cor" | "max-abs-correlation", None) => Ok(PickStrategy::MaxAbsCorrelation),
            ("fixed-k", Some(k)) => {
                let k: usize = k.parse().map_err(|_| bad())?;
                if k == 0 {
                    return Err(BssError::config("fixed-k needs k >= 1"));
                }
                Ok(PickStrategy::FixedK(k))
            }
            _ => Err(bad()),
        }
    }
}

pub const DEFAULT_FOLDS: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub spec: ModelSpec,
    pub strategy: PickStrategy,
    pub grid: GridConfig,
    pub solver: SolverConfig,
    pub center: bool,
    /// Folds for the cross-validated strategies.
    pub seed: u64,
    pub canonical_denominator: CanonicalDenominator,
    /// Raw (uncentered) held-out `(X, Y)` for `MinMsep(TestSet)`.
    pub test: Option<(Matrix, Matrix)>,
}

impl FitOptions {
    pub fn new(spec: ModelSpec, strategy: PickStrategy, grid: GridConfig) -> Self {
        FitOptions {
            spec,
            strategy,
            grid,
            solver: SolverConfig::default(),
            center: true,
            seed: 0,
            canonical_denominator: CanonicalDenominator::default(),
            test: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub spec: ModelSpec,
    pub canonical_denominator: CanonicalDenominator,
    pub components: Vec<ComponentState>,
    pub x_means: Vector,
    pub y_means: Option<Vector>,
    /// Stacked loadings (p x H), X-regressors (p x H), adjusted weights
    /// (p x H) and X-scores `T = X W` (n x H).
    pub u: Matrix,
    pub c: Matrix,
    pub w: Matrix,
    pub t: Matrix,
    /// Y-regressors (q x H) and Y-scores (n x H), PLS only.
    pub d: Option<Matrix>,
    pub s: Option<Matrix>,
    /// Inner relationship `S ~ T B`: `b_h = xi_h' psi_h / xi_h' xi_h`.
    pub b: Option<Vector>,
    /// p x q; regression-mode PLS only.
    pub beta: Option<Matrix>,
    pub pev: Vec<f64>,
    pub cpev: Vec<f64>,
    /// Largest entrywise gap between the two routes to `W`; absent when
    /// `C'U` was too ill-conditioned to invert.
    pub weight_route_gap: Option<f64>,
    pub diagnostics: Vec<String>,
}

impl FittedModel {
    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    pub fn supports(&self) -> Vec<Subset> {
        self.components.iter().map(|c| c.subset.clone()).collect()
    }

    /// `X_new * beta` for already centered rows.
    pub fn predict_centered(&self, x: &Matrix) -> Result<Matrix> {
        let beta = self.beta.as_ref().ok_or_else(|| {
            BssError::config("prediction needs a regression-mode PLS model")
        })?;
        if x.ncols() != beta.nrows() {
            return Err(BssError::dimension(format!(
                "X has {} columns, model expects {}",
                x.ncols(),
                beta.nrows()
            )));
        }
        Ok(x * beta)
    }

    /// Predictions for raw rows: centered with the training means, with the
    /// training response means added back.
    pub fn predict(&self, x_raw: &Matrix) -> Result<Matrix> {
        if x_raw.ncols() != self.x_means.len() {
            return Err(BssError::dimension(format!(
                "X has {} columns, model expects {}",
                x_raw.ncols(),
                self.x_means.len()
            )));
        }
        let mut xc = x_raw.clone();
        for (j, mut col) in xc.column_iter_mut().enumerate() {
            col.add_scalar_mut(-self.x_means[j]);
        }
        let mut yhat = self.predict_centered(&xc)?;
        if let Some(ym) = &self.y_means {
            for (j, mut col) in yhat.column_iter_mut().enumerate() {
                col.add_scalar_mut(ym[j]);
            }
        }
        Ok(yhat)
    }

    pub fn document(&self) -> ModelDocument {
        let vec = |v: &Vector| v.iter().copied().collect::<Vec<f64>>();
        ModelDocument {
            model: self.spec.kind,
            mode: self.spec.mode,
            h: self.components.len(),
            column_means: vec(&self.x_means),
            response_means: self.y_means.as_ref().map(vec),
            components: self
                .components
                .iter()
                .map(|c| ComponentRecord {
                    h: c.h,
                    k: c.subset.size(),
                    support: c.subset.indices(),
                    u: vec(&c.u),
                    v: c.v.as_ref().map(vec),
                    w: vec(&c.w),
                    objective: c.objective,
                })
                .collect(),
            beta: self
                .beta
                .as_ref()
                .map(|b| b.row_iter().map(|r| r.iter().copied().collect()).collect()),
            pev: self.pev.clone(),
            cpev: self.cpev.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentRecord {
    pub h: usize,
    pub k: usize,
    pub support: Vec<usize>,
    pub u: Vec<f64>,
    pub v: Option<Vec<f64>>,
    pub w: Vec<f64>,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub model: ModelKind,
    pub mode: PlsMode,
    #[serde(rename = "H")]
    pub h: usize,
    pub column_means: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub response_means: Option<Vec<f64>>,
    pub components: Vec<ComponentRecord>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub beta: Option<Vec<Vec<f64>>>,
    pub pev: Vec<f64>,
    pub cpev: Vec<f64>,
}

/// `(PEV_h, CPEV_h)` for `h = 1..=H`, where `CPEV_h` is the share of
/// `||X||_F^2` captured by projecting onto the span of the first `h` scores.
pub fn pev_cpev(x: &Matrix, t: &Matrix) -> Result<(Vec<f64>, Vec<f64>)> {
    let total = frobenius_norm(x).powi(2);
    if total == 0.0 {
        return Err(BssError::dimension("X has zero norm"));
    }
    if t.nrows() != x.nrows() {
        return Err(BssError::dimension("scores and X have different row counts"));
    }
    // Gram-Schmidt (twice) keeps the basis nested in h.
    let mut basis: Vec<Vector> = Vec::new();
    let mut captured = 0.0;
    let mut cpev = Vec::with_capacity(t.ncols());
    for col in t.column_iter() {
        let mut v = col.into_owned();
        let scale = v.norm();
        for _ in 0..2 {
            for b in &basis {
                let proj = b.dot(&v);
                v.axpy(-proj, b, 1.0);
            }
        }
        let norm = v.norm();
        if norm > 1e-12 * scale.max(f64::MIN_POSITIVE) {
            let q = v / norm;
            captured += (x.transpose() * &q).norm_squared();
            basis.push(q);
        }
        cpev.push((captured / total).min(1.0));
    }
    let mut pev = Vec::with_capacity(cpev.len());
    let mut prev = 0.0;
    for &c in &cpev {
        pev.push(c - prev);
        prev = c;
    }
    Ok((pev, cpev))
}

fn assemble_model(
    spec: ModelSpec,
    denominator: CanonicalDenominator,
    x0: &Matrix,
    mut components: Vec<ComponentState>,
    x_means: Vector,
    y_means: Option<Vector>,
) -> Result<FittedModel> {
    let hcount = components.len();
    fn cols(cs: &[ComponentState], f: impl Fn(&ComponentState) -> Vector) -> Matrix {
        Matrix::from_columns(&cs.iter().map(f).collect::<Vec<_>>())
    }
    let u = cols(&components, |c| c.u.clone());
    let c = cols(&components, |c| c.c.clone());
    let w = adjusted_weights(&u, &c);
    for (k, comp) in components.iter_mut().enumerate() {
        comp.w = w.column(k).into_owned();
    }
    let mut diagnostics = Vec::new();
    let weight_route_gap = match adjusted_weights_by_inverse(&u, &c) {
        Ok(w2) => Some((&w - w2).amax()),
        Err(e) => {
            diagnostics.push(format!("inverse route to W unavailable: {e}"));
            None
        }
    };
    let t = x0 * &w;
    let is_pls = spec.kind != ModelKind::Pca;
    let (d, s, b) = if is_pls {
        let d = cols(&components, |c| c.d.clone().expect("PLS component has d"));
        let s = cols(&components, |c| c.psi.clone().expect("PLS component has psi"));
        let b = Vector::from_iterator(
            hcount,
            components
                .iter()
                .map(|c| c.xi.dot(c.psi.as_ref().unwrap()) / c.xi.norm_squared()),
        );
        (Some(d), Some(s), Some(b))
    } else {
        (None, None, None)
    };
    let beta = match (&d, spec.mode) {
        (Some(d), PlsMode::Regression) => {
            // singular C'U is reported as an error for coefficient recovery
            if weight_route_gap.is_none() {
                let ctu = c.transpose() * &u;
                return Err(BssError::Singular {
                    condition: condition_number(&ctu),
                });
            }
            Some(&w * d.transpose())
        }
        _ => None,
    };
    let (pev, cpev) = pev_cpev(x0, &t)?;
    Ok(FittedModel {
        spec,
        canonical_denominator: denominator,
        components,
        x_means,
        y_means,
        u,
        c,
        w,
        t,
        d,
        s,
        b,
        beta,
        pev,
        cpev,
        weight_route_gap,
        diagnostics,
    })
}

fn center_pair(
    x: &Matrix,
    y: Option<&Matrix>,
    center: bool,
) -> Result<(Dataset, Vector, Option<Vector>)> {
    if center {
        Dataset::centered(x, y)
    } else {
        let ds = Dataset::new(x.clone(), y.cloned())?;
        let ym = y.map(|y| Vector::zeros(y.ncols()));
        Ok((ds, Vector::zeros(x.ncols()), ym))
    }
}

/// Fits `supports.len()` components with the given per-component subsets
/// (no search). `x`, `y` are raw unless `center` is false.
pub fn fit_with_supports(
    x: &Matrix,
    y: Option<&Matrix>,
    spec: ModelSpec,
    supports: &[Subset],
    center: bool,
    denominator: CanonicalDenominator,
) -> Result<FittedModel> {
    if supports.is_empty() {
        return Err(BssError::config("at least one component is required"));
    }
    let (ds0, xm, ym) = center_pair(x, y, center)?;
    ds0.response_for(spec.kind)?;
    let x0_norm = frobenius_norm(ds0.x());
    let mut ds = ds0.clone();
    let mut components = Vec::with_capacity(supports.len());
    for (i, s) in supports.iter().enumerate() {
        let (state, next) = component_step(&ds, x0_norm, i + 1, s, spec, denominator)?;
        components.push(state);
        ds = next;
    }
    assemble_model(spec, denominator, ds0.x(), components, xm, ym)
}

/// Row indices of each fold after a seeded shuffle; fold `f` takes every
/// `folds`-th row of the shuffled order starting at `f`.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 || folds > n {
        return Err(BssError::config(format!(
            "folds must lie in 2..={n}, got {folds}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut out = vec![Vec::new(); folds];
    for (i, &r) in order.iter().enumerate() {
        out[i % folds].push(r);
    }
    for f in &mut out {
        f.sort_unstable();
    }
    Ok(out)
}

fn complement(n: usize, rows: &[usize]) -> Vec<usize> {
    let mut keep = vec![true; n];
    for &r in rows {
        keep[r] = false;
    }
    (0..n).filter(|&r| keep[r]).collect()
}

fn check_response_varies(y: &Matrix, what: &str) -> Result<()> {
    for (j, col) in y.column_iter().enumerate() {
        let first = col[0];
        if col.iter().all(|&v| v == first) {
            return Err(BssError::Domain(format!(
                "response column {j} is constant in {what}"
            )));
        }
    }
    Ok(())
}

/// Out-of-fold predictions of the model with fixed `supports`, refitting
/// the loadings on each training fold.
pub fn cv_predictions(
    x: &Matrix,
    y: &Matrix,
    spec: ModelSpec,
    supports: &[Subset],
    folds: usize,
    seed: u64,
) -> Result<Matrix> {
    let n = x.nrows();
    let assignment = fold_assignment(n, folds, seed)?;
    let parts: Vec<(Vec<usize>, Matrix)> = assignment
        .par_iter()
        .enumerate()
        .map(|(f, test)| -> Result<(Vec<usize>, Matrix)> {
            let train = complement(n, test);
            let ytr = select_rows(y, &train);
            check_response_varies(&ytr, &format!("training fold {f}"))?;
            let model = fit_with_supports(
                &select_rows(x, &train),
                Some(&ytr),
                spec,
                supports,
                true,
                CanonicalDenominator::default(),
            )?;
            Ok((test.clone(), model.predict(&select_rows(x, test))?))
        })
        .collect::<Result<_>>()?;
    let mut out = Matrix::zeros(n, y.ncols());
    for (rows, pred) in parts {
        for (i, &r) in rows.iter().enumerate() {
            out.row_mut(r).copy_from(&pred.row(i));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Q2Row {
    pub h: usize,
    pub press: Vec<f64>,
    /// Residual sum of squares of the `h - 1` component fit, per response.
    pub rss_previous: Vec<f64>,
    /// `None` where the previous fit is already exact.
    pub per_response: Vec<Option<f64>>,
    pub total: Option<f64>,
}

/// Conventional significance threshold for the marginal contribution.
pub const Q2_THRESHOLD: f64 = 0.0975;

/// `Q2_h = 1 - PRESS_h / RSS_{h-1}` with v-fold PRESS, per response and in
/// total (sums over responses before the ratio). Supports are held fixed;
/// loadings are refitted in each fold.
pub fn q2(
    x: &Matrix,
    y: &Matrix,
    spec: ModelSpec,
    supports: &[Subset],
    folds: usize,
    seed: u64,
) -> Result<Vec<Q2Row>> {
    if spec.kind == ModelKind::Pca || spec.mode != PlsMode::Regression {
        return Err(BssError::config("Q2 needs a regression-mode PLS model"));
    }
    let (yc, _) = center_columns_with_means(y)?;
    let q = y.ncols();
    let col_ss = |m: &Matrix| -> Vec<f64> { m.column_iter().map(|c| c.norm_squared()).collect() };
    let mut rss_prev = col_ss(&yc);
    let mut rows = Vec::with_capacity(supports.len());
    for h in 1..=supports.len() {
        let pred = cv_predictions(x, y, spec, &supports[..h], folds, seed)?;
        let press = col_ss(&(y - pred));
        let per_response = (0..q)
            .map(|j| (rss_prev[j] > 0.0).then(|| 1.0 - press[j] / rss_prev[j]))
            .collect();
        let rss_total: f64 = rss_prev.iter().sum();
        let total = (rss_total > 0.0).then(|| 1.0 - press.iter().sum::<f64>() / rss_total);
        rows.push(Q2Row {
            h,
            press,
            rss_previous: rss_prev.clone(),
            per_response,
            total,
        });
        let full = fit_with_supports(x, Some(y), spec, &supports[..h], true, Default::default())?;
        rss_prev = col_ss(&(y - full.predict(x)?));
    }
    Ok(rows)
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}

/// Out-of-fold `|corr|` between the last component's X-score `(x - mean) w_h`
/// and Y-score `(y - mean) v_h`.
fn cv_score_correlation(
    x: &Matrix,
    y: &Matrix,
    spec: ModelSpec,
    supports: &[Subset],
    folds: usize,
    seed: u64,
) -> Result<f64> {
    let n = x.nrows();
    let h = supports.len();
    let mut xs = vec![0.0; n];
    let mut ys = vec![0.0; n];
    for test in fold_assignment(n, folds, seed)? {
        let train = complement(n, &test);
        let model = fit_with_supports(
            &select_rows(x, &train),
            Some(&select_rows(y, &train)),
            spec,
            supports,
            true,
            CanonicalDenominator::default(),
        )?;
        let comp = &model.components[h - 1];
        let v = comp.v.as_ref().expect("PLS component has v");
        let ym = model.y_means.as_ref().expect("PLS model has response means");
        for &r in &test {
            let xr = x.row(r).transpose() - &model.x_means;
            let yr = y.row(r).transpose() - ym;
            xs[r] = comp.w.dot(&xr);
            ys[r] = v.dot(&yr);
        }
    }
    Ok(correlation(&xs, &ys).abs())
}

fn pick_subset(
    path: &SolutionPath,
    chosen: &[Subset],
    x: &Matrix,
    y: Option<&Matrix>,
    opts: &FitOptions,
    h: usize,
) -> Result<Subset> {
    let k_max = path.k_max;
    let spec = opts.spec.with_components(h);
    let candidates = |k: usize| -> Vec<Subset> {
        let mut s = chosen.to_vec();
        s.push(path.bucket(k).expect("bucket exists").best.clone());
        s
    };
    let need_y = || {
        y.ok_or_else(|| BssError::config("this pick strategy needs a response"))
    };
    let need_regression = || {
        if spec.kind == ModelKind::Pca || spec.mode != PlsMode::Regression {
            Err(BssError::config(
                "this pick strategy needs a regression-mode PLS model",
            ))
        } else {
            Ok(())
        }
    };
    let argmin = |scores: Vec<f64>| -> usize {
        let mut best = 0;
        for (i, &s) in scores.iter().enumerate() {
            if s < scores[best] {
                best = i;
            }
        }
        best + 1
    };

    let k = match opts.strategy {
        PickStrategy::FixedK(k) => {
            if k > k_max {
                return Err(BssError::dimension(format!(
                    "fixed-k = {k} exceeds the largest subset size {k_max}"
                )));
            }
            k
        }
        PickStrategy::CpevDrop(fraction) => {
            let cpev: Vec<f64> = (1..=k_max)
                .into_par_iter()
                .map(|k| {
                    let m = fit_with_supports(
                        x,
                        y,
                        spec,
                        &candidates(k),
                        opts.center,
                        opts.canonical_denominator,
                    )?;
                    Ok(*m.cpev.last().unwrap())
                })
                .collect::<Result<_>>()?;
            let target = (1.0 - fraction) * cpev[k_max - 1];
            cpev.iter().position(|&c| c >= target).unwrap_or(k_max - 1) + 1
        }
        PickStrategy::MinMsep(source) => {
            need_regression()?;
            let y = need_y()?;
            let scores: Vec<f64> = match source {
                MsepSource::TestSet => {
                    let (xt, yt) = opts.test.as_ref().ok_or_else(|| {
                        BssError::config("min-msep on a test set needs test data")
                    })?;
                    (1..=k_max)
                        .into_par_iter()
                        .map(|k| {
                            let m = fit_with_supports(
                                x,
                                Some(y),
                                spec,
                                &candidates(k),
                                opts.center,
                                opts.canonical_denominator,
                            )?;
                            msep(&m.predict(xt)?, yt)
                        })
                        .collect::<Result<_>>()?
                }
                MsepSource::Folds(v) => (1..=k_max)
                    .into_par_iter()
                    .map(|k| {
                        let pred = cv_predictions(x, y, spec, &candidates(k), v, opts.seed)?;
                        msep(&pred, y)
                    })
                    .collect::<Result<_>>()?,
            };
            argmin(scores)
        }
        PickStrategy::MaxAbsCorrelation => {
            if spec.kind == ModelKind::Pca {
                return Err(BssError::config("max-abs-correlation needs a PLS model"));
            }
            let y = need_y()?;
            let scores: Vec<f64> = (1..=k_max)
                .into_par_iter()
                .map(|k| {
                    cv_score_correlation(x, y, spec, &candidates(k), DEFAULT_FOLDS, opts.seed)
                        .map(|c| -c)
                })
                .collect::<Result<_>>()?;
            argmin(scores)
        }
    };
    Ok(path.bucket(k).expect("k within 1..=k_max").best.clone())
}

/// Component-by-component fit: a solution path on the current deflated
/// data, one subset picked per the strategy, then deflation.
///
/// `x`, `y` are raw; they are centered unless `opts.center` is false.
/// Returns the model and the path built for each component.
pub fn fit(
    x: &Matrix,
    y: Option<&Matrix>,
    opts: &FitOptions,
) -> Result<(FittedModel, Vec<SolutionPath>)> {
    let hcount = opts.spec.components;
    if hcount == 0 {
        return Err(BssError::config("at least one component is required"));
    }
    let (ds0, _, _) = center_pair(x, y, opts.center)?;
    ds0.response_for(opts.spec.kind)?;
    let x0_norm = frobenius_norm(ds0.x());
    let mut ds = ds0.clone();
    let mut chosen: Vec<Subset> = Vec::with_capacity(hcount);
    let mut paths = Vec::with_capacity(hcount);
    for h in 1..=hcount {
        let wrap = |e: BssError| BssError::Component {
            h,
            source: Box::new(e),
        };
        let solver = SolverConfig {
            seed: opts
                .solver
                .seed
                .wrapping_add(COMPONENT_SEED_STRIDE.wrapping_mul(h as u64 - 1)),
            ..opts.solver.clone()
        };
        let path = dynamic_grid(&ds, opts.spec.kind, &opts.grid, &solver).map_err(wrap)?;
        let s = pick_subset(&path, &chosen, x, y, opts, h).map_err(wrap)?;
        let (_, next) =
            component_step(&ds, x0_norm, h, &s, opts.spec, opts.canonical_denominator)?;
        ds = next;
        chosen.push(s);
        paths.push(path);
    }
    let model = fit_with_supports(
        x,
        y,
        opts.spec,
        &chosen,
        opts.center,
        opts.canonical_denominator,
    )?;
    Ok((model, paths))
}
