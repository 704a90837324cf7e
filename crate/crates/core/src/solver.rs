//! First-order minimization of `g(r) = f_lambda(t(r))` over unconstrained `r`.

use serde::{Deserialize, Serialize};

use crate::error::{BssError, Result};
use crate::linalg::Vector;
use crate::objective::{grad_r, r_of_t, t_of_r, EvalScratch, ObjectiveContext};

/// Every iterate is kept until the trace holds this many points; after that
/// only every `THIN_STRIDE`-th iterate (plus the final one).
pub const TRACE_FULL_LIMIT: usize = 10_000;
pub const THIN_STRIDE: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Gd,
    Adam,
}

impl std::str::FromStr for Method {
    type Err = BssError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gd" => Ok(Method::Gd),
            "adam" => Ok(Method::Adam),
            other => Err(BssError::config(format!("unknown solver {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TInit {
    Scalar(f64),
    Vector(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub method: Method,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub max_iter: usize,
    /// Threshold on `max_j |t_j - t_j_prev|`.
    pub tol: f64,
    pub patience: usize,
    pub t_init: TInit,
    /// Seeds the cold start of the eigen-solves.
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            method: Method::Adam,
            learning_rate: 0.05,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            max_iter: 1000,
            tol: 1e-5,
            patience: 10,
            t_init: TInit::Scalar(0.5),
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self, p: usize) -> Result<()> {
        let unit_open = |x: f64| x > 0.0 && x < 1.0;
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(BssError::config("learning_rate must be > 0"));
        }
        if !unit_open(self.adam_beta1) || !unit_open(self.adam_beta2) {
            return Err(BssError::config("adam betas must lie in (0, 1)"));
        }
        if !(self.adam_eps > 0.0) {
            return Err(BssError::config("adam_eps must be > 0"));
        }
        if !(self.tol > 0.0) {
            return Err(BssError::config("tol must be > 0"));
        }
        if self.patience == 0 {
            return Err(BssError::config("patience must be >= 1"));
        }
        match &self.t_init {
            TInit::Scalar(t) if !unit_open(*t) => {
                Err(BssError::config(format!("t_init = {t} must lie in (0, 1)")))
            }
            TInit::Vector(v) if v.len() != p => Err(BssError::dimension(format!(
                "t_init has length {}, expected {p}",
                v.len()
            ))),
            TInit::Vector(v) if !v.iter().all(|&t| unit_open(t)) => {
                Err(BssError::config("every t_init entry must lie in (0, 1)"))
            }
            _ => Ok(()),
        }
    }

    fn initial_t(&self, p: usize) -> Vector {
        match &self.t_init {
            TInit::Scalar(t) => Vector::from_element(p, *t),
            TInit::Vector(v) => Vector::from_column_slice(v),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub iter: usize,
    pub t: Vector,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverRun {
    pub trace: Vec<TracePoint>,
    pub converged: bool,
    pub iterations: usize,
    pub terminal_t: Vector,
    /// Evaluations where the top eigenvalue looked (nearly) repeated.
    pub crossings: usize,
}

impl SolverRun {
    pub fn terminal_objective(&self) -> f64 {
        self.trace.last().map_or(f64::NAN, |p| p.objective)
    }
}

struct Trace {
    points: Vec<TracePoint>,
}

impl Trace {
    fn record(&mut self, iter: usize, t: &Vector, objective: f64) {
        if self.points.len() < TRACE_FULL_LIMIT || iter % THIN_STRIDE == 0 {
            self.points.push(TracePoint {
                iter,
                t: t.clone(),
                objective,
            });
        }
    }

    fn finish(mut self, iter: usize, t: &Vector, objective: f64) -> Vec<TracePoint> {
        if self.points.last().map(|p| p.iter) != Some(iter) {
            self.points.push(TracePoint {
                iter,
                t: t.clone(),
                objective,
            });
        }
        self.points
    }
}

/// Runs the configured first-order method from `t_init`, recording the
/// visited `t` and `f_lambda(t)`; iteration 0 is the starting point.
pub fn minimize(ctx: &ObjectiveContext, cfg: &SolverConfig) -> Result<SolverRun> {
    let p = ctx.p();
    cfg.validate(p)?;
    let mut scratch = EvalScratch::new(cfg.seed);

    let mut r = r_of_t(&cfg.initial_t(p))?;
    let mut t = t_of_r(&r);
    let mut eval = ctx.eval(&t, &mut scratch)?;
    let mut trace = Trace { points: Vec::new() };
    trace.record(0, &t, eval.value);

    let mut m = Vector::zeros(p);
    let mut v = Vector::zeros(p);
    let (mut b1_pow, mut b2_pow) = (1.0, 1.0);
    let mut quiet = 0usize;
    let mut converged = false;
    let mut iter = 0usize;

    while iter < cfg.max_iter {
        let g = grad_r(&eval.grad_t, &r);
        if let Some(j) = g.iter().position(|x| !x.is_finite()) {
            return Err(BssError::SolverAbort {
                iteration: iter + 1,
                reason: format!("non-finite gradient in coordinate {j}"),
            });
        }
        iter += 1;
        match cfg.method {
            Method::Gd => r.axpy(-cfg.learning_rate, &g, 1.0),
            Method::Adam => {
                b1_pow *= cfg.adam_beta1;
                b2_pow *= cfg.adam_beta2;
                for j in 0..p {
                    m[j] = cfg.adam_beta1 * m[j] + (1.0 - cfg.adam_beta1) * g[j];
                    v[j] = cfg.adam_beta2 * v[j] + (1.0 - cfg.adam_beta2) * g[j] * g[j];
                    let m_hat = m[j] / (1.0 - b1_pow);
                    let v_hat = v[j] / (1.0 - b2_pow);
                    r[j] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.adam_eps);
                }
            }
        }
        let t_next = t_of_r(&r);
        let change = (&t_next - &t).amax();
        t = t_next;
        eval = ctx.eval(&t, &mut scratch)?;
        if !eval.value.is_finite() {
            return Err(BssError::SolverAbort {
                iteration: iter,
                reason: "non-finite objective".into(),
            });
        }
        trace.record(iter, &t, eval.value);

        if change < cfg.tol {
            quiet += 1;
            if quiet >= cfg.patience {
                converged = true;
                break;
            }
        } else {
            quiet = 0;
        }
    }

    Ok(SolverRun {
        trace: trace.finish(iter, &t, eval.value),
        converged,
        iterations: iter,
        terminal_t: t,
        crossings: scratch.crossings,
    })
}
