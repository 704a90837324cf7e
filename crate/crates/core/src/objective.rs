//! Penalized relaxed objectives over the hypercube and their gradients.
//!
//! For a relaxation point `t` in `[0,1]^p`, column `j` of `X` is scaled by
//! `t_j`. The three objectives are
//!
//! * PLS1: `-sum_j t_j^2 z_j^2 + lambda * sum(t)` with `z = X'y / n`,
//! * PLS2: `-delta_t^2 + lambda * sum(t)`, `delta_t` the top singular value of
//!   `M_t = T M`, `M = X'Y / n`,
//! * PCA: `-delta_t + lambda * sum(t)`, `delta_t` the top eigenvalue of
//!   `T S T`, `S = X'X / n`.
//!
//! At the corners `t = s` of the hypercube they coincide with the
//! column-deleted discrete objectives.
//!
//! The optimizer works on `r` in R^p with `t_j = 1 - exp(-r_j^2)`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, ModelKind};
use crate::error::{BssError, Result};
use crate::linalg::{dominant_pair, principal_submatrix, DominantPair, Matrix, PowerConfig, Vector};
use crate::subset::Subset;

/// Upper clamp applied before inverting the map; `t = 1` has no finite preimage.
pub const T_CLAMP: f64 = 1.0 - 1e-12;

const LAMBDA_MAX_SEED: u64 = 0x5eed;
/// Cold-start seed for corner evaluations, shared so that path buckets and
/// the exhaustive oracle report bit-identical values for the same subset.
pub const CORNER_SEED: u64 = 0x5eed_c0de;

/// Which gradient formula a PLS2 context uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Pls2Branch {
    /// `q < p`: power iteration on the q x q matrix `M_t' M_t`.
    Cross,
    /// `q >= p`: power iteration on the p x p matrix `M_t M_t'`.
    Gram,
}

#[derive(Debug, Clone)]
pub enum Kernel {
    /// `z = X'y / n`.
    Pls1 { z: Vector },
    /// `M = X'Y / n`, p x q.
    Cross { m: Matrix },
    /// `M M'` for PLS2 or `X'X / n` for PCA, p x p.
    Gram { g: Matrix },
}

/// Data-dependent pieces of an objective, precomputed once per dataset.
#[derive(Debug, Clone)]
pub struct ObjectiveContext {
    model: ModelKind,
    n: usize,
    p: usize,
    q: usize,
    kernel: Arc<Kernel>,
    lambda: f64,
    power: PowerConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveEval {
    pub value: f64,
    pub grad_t: Vector,
    /// `||X_t'y||^2 / n^2` (PLS1), `delta_t^2` (PLS2) or `delta_t` (PCA).
    pub delta: f64,
    pub dominant: Option<DominantPair>,
    /// The eigen-solve hit its iteration budget; the top eigenvalue is
    /// probably (nearly) repeated and the gradient is a subgradient choice.
    pub near_crossing: bool,
}

/// Per-run scratch for warm-starting the eigen-solves across evaluations.
#[derive(Debug, Clone)]
pub struct EvalScratch {
    seed: u64,
    warm: Option<Vector>,
    pub evaluations: usize,
    pub crossings: usize,
}

impl EvalScratch {
    pub fn new(seed: u64) -> Self {
        EvalScratch {
            seed,
            warm: None,
            evaluations: 0,
            crossings: 0,
        }
    }
}

impl ObjectiveContext {
    pub fn new(dataset: &Dataset, model: ModelKind, lambda: f64) -> Result<Self> {
        let branch = if dataset.q() < dataset.p() {
            Pls2Branch::Cross
        } else {
            Pls2Branch::Gram
        };
        Self::with_branch(dataset, model, lambda, branch)
    }

    /// Builds a context forcing the PLS2 gradient branch (ignored for PLS1/PCA).
    pub fn with_branch(
        dataset: &Dataset,
        model: ModelKind,
        lambda: f64,
        branch: Pls2Branch,
    ) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(BssError::config(format!("lambda must be >= 0, got {lambda}")));
        }
        let x = dataset.x();
        let n = dataset.n();
        let nf = n as f64;
        let y = dataset.response_for(model)?;
        let kernel = match model {
            ModelKind::Pls1 => {
                let y = y.expect("checked by response_for");
                Kernel::Pls1 {
                    z: (x.transpose() * y.column(0)) / nf,
                }
            }
            ModelKind::Pls2 => {
                let y = y.expect("checked by response_for");
                let m = (x.transpose() * y) / nf;
                match branch {
                    Pls2Branch::Cross => Kernel::Cross { m },
                    Pls2Branch::Gram => Kernel::Gram {
                        g: &m * m.transpose(),
                    },
                }
            }
            ModelKind::Pca => Kernel::Gram {
                g: (x.transpose() * x) / nf,
            },
        };
        Ok(ObjectiveContext {
            model,
            n,
            p: dataset.p(),
            q: dataset.q(),
            kernel: Arc::new(kernel),
            lambda,
            power: PowerConfig::default(),
        })
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        ObjectiveContext {
            lambda,
            ..self.clone()
        }
    }

    pub fn with_power_config(mut self, power: PowerConfig) -> Self {
        self.power = power;
        self
    }

    pub fn model(&self) -> ModelKind {
        self.model
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn power_config(&self) -> &PowerConfig {
        &self.power
    }

    /// The PLS2 branch in use, if this is a PLS2 context.
    pub fn branch(&self) -> Option<Pls2Branch> {
        match (self.model, self.kernel.as_ref()) {
            (ModelKind::Pls2, Kernel::Cross { .. }) => Some(Pls2Branch::Cross),
            (ModelKind::Pls2, Kernel::Gram { .. }) => Some(Pls2Branch::Gram),
            _ => None,
        }
    }

    /// Smallest penalty whose minimizer is the empty model: `sum z_j^2` for
    /// PLS1, the top eigenvalue of `M'M` for PLS2 and of `X'X / n` for PCA.
    pub fn lambda_max(&self) -> Result<f64> {
        match self.kernel.as_ref() {
            Kernel::Pls1 { z } => Ok(z.norm_squared()),
            Kernel::Cross { m } => {
                let a = m.transpose() * m;
                Ok(dominant_pair(&a, &self.power, None, LAMBDA_MAX_SEED)?.0.value)
            }
            Kernel::Gram { g } => Ok(dominant_pair(g, &self.power, None, LAMBDA_MAX_SEED)?.0.value),
        }
    }

    /// Objective value and gradient at `t`, warm-starting from `scratch`.
    pub fn eval(&self, t: &Vector, scratch: &mut EvalScratch) -> Result<ObjectiveEval> {
        if t.len() != self.p {
            return Err(BssError::dimension(format!(
                "relaxation point has length {}, expected {}",
                t.len(),
                self.p
            )));
        }
        scratch.evaluations += 1;
        let penalty = self.lambda * t.sum();
        let eval = match self.kernel.as_ref() {
            Kernel::Pls1 { z } => {
                let mut delta = 0.0;
                let grad_t = Vector::from_fn(self.p, |j, _| {
                    let z2 = z[j] * z[j];
                    delta += t[j] * t[j] * z2;
                    self.lambda - 2.0 * t[j] * z2
                });
                ObjectiveEval {
                    value: -delta + penalty,
                    grad_t,
                    delta,
                    dominant: None,
                    near_crossing: false,
                }
            }
            Kernel::Cross { m } => {
                // M_t' M_t = M' T^2 M
                let mut mt = m.clone();
                for (j, mut row) in mt.row_iter_mut().enumerate() {
                    row *= t[j];
                }
                let a = mt.transpose() * &mt;
                let (pair, near_crossing) = self.solve_warm(&a, scratch)?;
                let mv = m * &pair.vector;
                let grad_t =
                    Vector::from_fn(self.p, |j, _| self.lambda - 2.0 * t[j] * mv[j] * mv[j]);
                ObjectiveEval {
                    value: -pair.value + penalty,
                    grad_t,
                    delta: pair.value,
                    dominant: Some(pair),
                    near_crossing,
                }
            }
            Kernel::Gram { g } => {
                // T G T
                let a = Matrix::from_fn(self.p, self.p, |i, j| t[i] * g[(i, j)] * t[j]);
                let (pair, near_crossing) = self.solve_warm(&a, scratch)?;
                let u = &pair.vector;
                let tu = t.component_mul(u);
                let gtu = g * &tu;
                let grad_t = Vector::from_fn(self.p, |j, _| self.lambda - 2.0 * u[j] * gtu[j]);
                ObjectiveEval {
                    value: -pair.value + penalty,
                    grad_t,
                    delta: pair.value,
                    dominant: Some(pair),
                    near_crossing,
                }
            }
        };
        if eval.near_crossing {
            scratch.crossings += 1;
        }
        Ok(eval)
    }

    fn solve_warm(&self, a: &Matrix, scratch: &mut EvalScratch) -> Result<(DominantPair, bool)> {
        let (pair, flagged) = dominant_pair(a, &self.power, scratch.warm.as_ref(), scratch.seed)?;
        scratch.warm = Some(pair.vector.clone());
        Ok((pair, flagged))
    }

    /// Unpenalized objective `f_0(s)` at a corner of the hypercube, computed
    /// on the column-deleted problem.
    pub fn corner_value(&self, s: &Subset) -> Result<f64> {
        if s.len() != self.p {
            return Err(BssError::dimension(format!(
                "subset has length {}, expected {}",
                s.len(),
                self.p
            )));
        }
        let idx = s.indices();
        self.corner_value_ordered(&idx, None, CORNER_SEED).map(|(v, _)| v)
    }

    /// `f_0` of the subset `idx` (any order), optionally warm-started.
    ///
    /// Returns the value and the eigenvector that was found, laid out in the
    /// order of `idx` for the Gram kernel and in response space for the cross
    /// kernel.
    pub fn corner_value_ordered(
        &self,
        idx: &[usize],
        warm: Option<&Vector>,
        seed: u64,
    ) -> Result<(f64, Option<Vector>)> {
        if idx.is_empty() {
            return Ok((0.0, None));
        }
        match self.kernel.as_ref() {
            Kernel::Pls1 { z } => Ok((-idx.iter().map(|&j| z[j] * z[j]).sum::<f64>(), None)),
            Kernel::Cross { m } => {
                let mut a = Matrix::zeros(self.q, self.q);
                for &j in idx {
                    let row = m.row(j);
                    a += row.transpose() * row;
                }
                self.cross_gram_value(&a, warm, seed)
            }
            Kernel::Gram { g } => {
                let sub = principal_submatrix(g, idx);
                let warm = warm.filter(|w| w.len() == idx.len());
                let (pair, _) = dominant_pair(&sub, &self.power, warm, seed)?;
                Ok((-pair.value, Some(pair.vector)))
            }
        }
    }

    /// `f_0` from an accumulated `M_s' M_s` (cross kernel only).
    pub(crate) fn cross_gram_value(
        &self,
        a: &Matrix,
        warm: Option<&Vector>,
        seed: u64,
    ) -> Result<(f64, Option<Vector>)> {
        let (pair, _) = dominant_pair(a, &self.power, warm, seed)?;
        Ok((-pair.value, Some(pair.vector)))
    }
}

/// PLS1 evaluation (no eigen-solve involved).
pub fn eval_pls1(ctx: &ObjectiveContext, t: &Vector) -> Result<ObjectiveEval> {
    expect_model(ctx, ModelKind::Pls1)?;
    ctx.eval(t, &mut EvalScratch::new(0))
}

/// PLS2 evaluation from a cold, seeded start.
pub fn eval_pls2(ctx: &ObjectiveContext, t: &Vector, seed: u64) -> Result<ObjectiveEval> {
    expect_model(ctx, ModelKind::Pls2)?;
    ctx.eval(t, &mut EvalScratch::new(seed))
}

/// PCA evaluation from a cold, seeded start.
pub fn eval_pca(ctx: &ObjectiveContext, t: &Vector, seed: u64) -> Result<ObjectiveEval> {
    expect_model(ctx, ModelKind::Pca)?;
    ctx.eval(t, &mut EvalScratch::new(seed))
}

fn expect_model(ctx: &ObjectiveContext, model: ModelKind) -> Result<()> {
    if ctx.model() != model {
        return Err(BssError::config(format!(
            "context is for {}, not {model}",
            ctx.model()
        )));
    }
    Ok(())
}

pub fn t_of_r(r: &Vector) -> Vector {
    r.map(|rj| 1.0 - (-rj * rj).exp())
}

/// Non-negative preimage of `t`; every entry must lie in `[0, 1)`.
pub fn r_of_t(t: &Vector) -> Result<Vector> {
    if let Some(j) = t.iter().position(|&tj| !(0.0..1.0).contains(&tj)) {
        return Err(BssError::Domain(format!(
            "t[{j}] = {} has no finite preimage (need 0 <= t < 1)",
            t[j]
        )));
    }
    Ok(t.map(|tj| (-(1.0 - tj).ln()).sqrt()))
}

/// [`r_of_t`] after clamping into `[0, 1 - 1e-12]`.
pub fn r_of_t_clamped(t: &Vector) -> Vector {
    t.map(|tj| {
        let c = if tj.is_nan() { 0.0 } else { tj.clamp(0.0, T_CLAMP) };
        (-(1.0 - c).ln()).sqrt()
    })
}

/// Chain rule through `t_j = 1 - exp(-r_j^2)`.
pub fn grad_r(grad_t: &Vector, r: &Vector) -> Vector {
    Vector::from_fn(r.len(), |j, _| grad_t[j] * 2.0 * r[j] * (-r[j] * r[j]).exp())
}

/// A point of the hypercube together with its unconstrained preimage.
#[derive(Debug, Clone, PartialEq)]
pub struct RelaxationPoint {
    pub t: Vector,
    pub r: Vector,
}

impl RelaxationPoint {
    pub fn from_r(r: Vector) -> Self {
        RelaxationPoint { t: t_of_r(&r), r }
    }

    /// Clamps `t` into `[0, 1 - 1e-12]` before mapping back.
    pub fn from_t(t: &Vector) -> Self {
        RelaxationPoint::from_r(r_of_t_clamped(t))
    }
}
