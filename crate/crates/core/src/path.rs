//! Candidate subsets from solver traces, best-per-size selection and the
//! dynamic penalty grid that produces a [`SolutionPath`].

use std::collections::{HashMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, ModelKind};
use crate::error::{BssError, Result};
use crate::linalg::{Matrix, Vector};
use crate::objective::{Kernel, ObjectiveContext};
use crate::solver::{minimize, SolverConfig, SolverRun, TracePoint};
use crate::subset::Subset;

/// Seed offset between successive solver runs of one grid.
const RUN_SEED_STRIDE: u64 = 0xD1B5_4A32_D192_ED03;
const KEY_SEED: u64 = 0x0B55_C0DE;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    /// Maximum number of solver runs, the one at `lambda_max` included.
    pub budget: usize,
    /// Largest subset size.
    pub k_max: usize,
    /// Terminal threshold: column `j` is in the terminal subset iff `t_j > rho`.
    pub rho: f64,
    /// Keep every solver trace in the returned path.
    pub keep_traces: bool,
}

impl GridConfig {
    pub fn new(k_max: usize, budget: usize) -> Self {
        GridConfig {
            budget,
            k_max,
            rho: 0.9,
            keep_traces: false,
        }
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        if self.budget < 2 {
            return Err(BssError::config(format!("budget must be >= 2, got {}", self.budget)));
        }
        if self.k_max == 0 || self.k_max > p {
            return Err(BssError::dimension(format!(
                "largest subset size must lie in 1..={p}, got {}",
                self.k_max
            )));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(BssError::config(format!("rho must lie in (0, 1), got {}", self.rho)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeBucket {
    pub k: usize,
    /// Distinct candidates of size `k`, sorted.
    pub candidates: Vec<Subset>,
    pub best: Subset,
    pub best_value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub lambda: f64,
    pub terminal_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    /// Position in evaluation order (0 is `lambda_max`).
    pub index: usize,
    pub lambda: f64,
    pub terminal_size: Option<usize>,
    pub iterations: usize,
    pub converged: bool,
    pub crossings: usize,
    pub candidates: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionPath {
    pub model: ModelKind,
    pub n: usize,
    pub p: usize,
    pub q: usize,
    pub k_max: usize,
    pub lambda_max: f64,
    /// One bucket per size `k = 1..=k_max`, in order.
    pub buckets: Vec<SizeBucket>,
    /// Successful runs, sorted by decreasing lambda.
    pub lambda_grid: Vec<GridPoint>,
    /// All runs in evaluation order.
    pub diagnostics: Vec<RunSummary>,
    /// `(lambda, run)` in evaluation order, when requested.
    pub traces: Vec<(f64, SolverRun)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketRecord {
    pub k: usize,
    pub bits: String,
    pub objective: f64,
}

/// Serialized form of a path (and of an oracle result).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathDocument {
    pub model: ModelKind,
    pub n: usize,
    pub p: usize,
    pub q: usize,
    #[serde(rename = "K")]
    pub k_max: usize,
    pub buckets: Vec<BucketRecord>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub lambda_grid: Option<Vec<GridPoint>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub oracle: Option<bool>,
}

impl SolutionPath {
    pub fn bucket(&self, k: usize) -> Option<&SizeBucket> {
        self.buckets.get(k.checked_sub(1)?)
    }

    pub fn document(&self) -> PathDocument {
        PathDocument {
            model: self.model,
            n: self.n,
            p: self.p,
            q: self.q,
            k_max: self.k_max,
            buckets: self
                .buckets
                .iter()
                .map(|b| BucketRecord {
                    k: b.k,
                    bits: b.best.to_bit_string(),
                    objective: b.best_value,
                })
                .collect(),
            lambda_grid: Some(self.lambda_grid.clone()),
            oracle: None,
        }
    }
}

/// Column indices by decreasing `t`; ties keep the lower index first.
pub fn descending_order(t: &Vector) -> Vec<usize> {
    let mut order: Vec<usize> = (0..t.len()).collect();
    order.sort_by(|&a, &b| t[b].total_cmp(&t[a]));
    order
}

/// Subset of the `k` largest entries of `t`.
pub fn top_k_subset(t: &Vector, k: usize) -> Subset {
    prefix_subset(t.len(), &descending_order(t)[..k])
}

fn prefix_subset(p: usize, prefix: &[usize]) -> Subset {
    let mut bits = vec![false; p];
    for &j in prefix {
        bits[j] = true;
    }
    Subset::from_bits(bits)
}

/// For every trace point, the subsets of its `k` largest entries,
/// `k = 1..=k_max`, with duplicates removed; first occurrence order.
pub fn extract_subsets(run: &SolverRun, k_max: usize) -> Vec<(usize, Subset)> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for point in &run.trace {
        let order = descending_order(&point.t);
        for k in 1..=k_max.min(order.len()) {
            let s = prefix_subset(point.t.len(), &order[..k]);
            if seen.insert(s.clone()) {
                out.push((k, s));
            }
        }
    }
    out
}

/// Argmin of `f_0` over `candidates`; equal values go to the smaller bits.
pub fn select_best(candidates: &[Subset], ctx: &ObjectiveContext) -> Result<(Subset, f64)> {
    let mut best: Option<(Subset, f64)> = None;
    for s in candidates {
        let v = ctx.corner_value(s)?;
        let better = match &best {
            None => true,
            Some((bs, bv)) => v < *bv || (v == *bv && s < bs),
        };
        if better {
            best = Some((s.clone(), v));
        }
    }
    best.ok_or_else(|| BssError::Domain("empty candidate set".into()))
}

pub fn terminal_subset(terminal_t: &Vector, rho: f64) -> Subset {
    Subset::from_bits(terminal_t.iter().map(|&t| t > rho).collect())
}

/// `(k, f_0(best_k))` for every bucket.
pub fn path_objective_curve(path: &SolutionPath) -> Vec<(usize, f64)> {
    path.buckets.iter().map(|b| (b.k, b.best_value)).collect()
}

/// Sizes `k` whose best value exceeds that of size `k - 1` by more than
/// `slack` (best-subset values cannot increase with `k`).
pub fn monotonicity_violations(curve: &[(usize, f64)], slack: f64) -> Vec<usize> {
    curve
        .windows(2)
        .filter(|w| w[1].1 > w[0].1 + slack)
        .map(|w| w[1].0)
        .collect()
}

/// Random 128-bit key per column; a subset's key is the XOR of its members'.
fn column_keys(p: usize) -> Vec<u128> {
    let mut rng = ChaCha8Rng::seed_from_u64(KEY_SEED);
    (0..p).map(|_| rng.random::<u128>()).collect()
}

struct Candidate {
    k: usize,
    key: u128,
    subset: Subset,
    value: f64,
}

/// Walks each trace point's prefixes in order, evaluating `f_0` only for
/// prefixes not seen before in this run. Kernels are accumulated along the
/// prefix, and each eigen-solve is warm-started from the previous prefix.
fn scan_trace(
    ctx: &ObjectiveContext,
    trace: &[TracePoint],
    k_max: usize,
    keys: &[u128],
    seed: u64,
) -> Result<Vec<Candidate>> {
    let p = ctx.p();
    let mut seen: HashSet<u128> = HashSet::new();
    let mut out = Vec::new();
    let mut prev: Vec<usize> = Vec::new();
    let mut fresh: Vec<(usize, u128)> = Vec::new();

    for point in trace {
        let order = descending_order(&point.t);
        let order = &order[..k_max];
        if order == prev.as_slice() {
            continue;
        }
        fresh.clear();
        let mut key = 0u128;
        for (i, &j) in order.iter().enumerate() {
            key ^= keys[j];
            if seen.insert(key) {
                fresh.push((i + 1, key));
            }
        }
        prev = order.to_vec();
        let Some(&(last_k, _)) = fresh.last() else {
            continue;
        };

        let mut next = fresh.iter().peekable();
        match ctx.kernel() {
            Kernel::Pls1 { z } => {
                let mut sum = 0.0;
                for (i, &j) in order[..last_k].iter().enumerate() {
                    sum += z[j] * z[j];
                    if let Some(&&(k, key)) = next.peek() {
                        if k == i + 1 {
                            next.next();
                            out.push(Candidate {
                                k,
                                key,
                                subset: prefix_subset(p, &order[..k]),
                                value: -sum,
                            });
                        }
                    }
                }
            }
            Kernel::Cross { m } => {
                let q = m.ncols();
                let mut a = Matrix::zeros(q, q);
                let mut warm: Option<Vector> = None;
                for (i, &j) in order[..last_k].iter().enumerate() {
                    let row = m.row(j);
                    a.ger(1.0, &row.transpose(), &row.transpose(), 1.0);
                    if let Some(&&(k, key)) = next.peek() {
                        if k == i + 1 {
                            next.next();
                            let (value, vec) = ctx.cross_gram_value(&a, warm.as_ref(), seed)?;
                            warm = vec;
                            out.push(Candidate {
                                k,
                                key,
                                subset: prefix_subset(p, &order[..k]),
                                value,
                            });
                        }
                    }
                }
            }
            Kernel::Gram { .. } => {
                let mut warm: Option<Vector> = None;
                for &(k, key) in &fresh {
                    let start = warm.map(|w: Vector| {
                        let mut ext = Vector::zeros(k);
                        ext.rows_mut(0, w.len()).copy_from(&w);
                        ext
                    });
                    let (value, vec) = ctx.corner_value_ordered(&order[..k], start.as_ref(), seed)?;
                    warm = vec;
                    out.push(Candidate {
                        k,
                        key,
                        subset: prefix_subset(p, &order[..k]),
                        value,
                    });
                }
            }
        }
    }
    Ok(out)
}

fn run_seed(base: u64, index: usize) -> u64 {
    base.wrapping_add(RUN_SEED_STRIDE.wrapping_mul(index as u64 + 1))
}

struct Evaluation {
    index: usize,
    lambda: f64,
    outcome: Result<(SolverRun, Vec<Candidate>)>,
}

impl Evaluation {
    fn terminal_size(&self, rho: f64) -> Option<usize> {
        self.outcome
            .as_ref()
            .ok()
            .map(|(run, _)| terminal_subset(&run.terminal_t, rho).size())
    }
}

fn evaluate(
    ctx: &ObjectiveContext,
    solver: &SolverConfig,
    k_max: usize,
    keys: &[u128],
    index: usize,
    lambda: f64,
) -> Evaluation {
    let seed = run_seed(solver.seed, index);
    let cfg = SolverConfig {
        seed,
        ..solver.clone()
    };
    let outcome = minimize(&ctx.with_lambda(lambda), &cfg).and_then(|run| {
        let cands = scan_trace(ctx, &run.trace, k_max, keys, seed)?;
        Ok((run, cands))
    });
    Evaluation {
        index,
        lambda,
        outcome,
    }
}

/// Builds the solution path with the dynamic penalty grid.
///
/// Step 1 halves lambda from `lambda_max` until the budget is spent or the
/// terminal subset reaches `k_max` columns. Step 2 repeatedly sweeps the grid
/// in increasing lambda and bisects every neighbouring pair whose terminal
/// sizes differ by more than one, until the budget is spent or no such pair
/// is left. Runs within one sweep are independent and execute in parallel.
pub fn dynamic_grid(
    dataset: &Dataset,
    model: ModelKind,
    grid: &GridConfig,
    solver: &SolverConfig,
) -> Result<SolutionPath> {
    grid.validate(dataset.p())?;
    solver.validate(dataset.p())?;
    let ctx = ObjectiveContext::new(dataset, model, 0.0)?;
    let lambda_max = ctx.lambda_max()?;
    let keys = column_keys(ctx.p());
    let k_max = grid.k_max;

    let mut evals: Vec<Evaluation> = Vec::new();
    let first = evaluate(&ctx, solver, k_max, &keys, 0, lambda_max);
    evals.push(first);

    let mut lambda = lambda_max;
    while evals.len() < grid.budget {
        if let Some(k) = evals.last().unwrap().terminal_size(grid.rho) {
            if k >= k_max && evals.len() > 1 {
                break;
            }
        }
        lambda /= 2.0;
        let e = evaluate(&ctx, solver, k_max, &keys, evals.len(), lambda);
        evals.push(e);
    }

    while evals.len() < grid.budget {
        let mut points: Vec<(f64, usize)> = evals
            .iter()
            .filter_map(|e| e.terminal_size(grid.rho).map(|k| (e.lambda, k)))
            .collect();
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut mids: Vec<f64> = points
            .windows(2)
            .filter(|w| w[0].1 > w[1].1 + 1)
            .map(|w| 0.5 * (w[0].0 + w[1].0))
            .filter(|mid| !evals.iter().any(|e| e.lambda == *mid))
            .collect();
        if mids.is_empty() {
            break;
        }
        mids.truncate(grid.budget - evals.len());
        let base = evals.len();
        let batch: Vec<Evaluation> = mids
            .par_iter()
            .enumerate()
            .map(|(i, &l)| evaluate(&ctx, solver, k_max, &keys, base + i, l))
            .collect();
        evals.extend(batch);
    }

    assemble(dataset, &ctx, model, grid, lambda_max, evals)
}

/// Solution path from an explicit list of penalties (no grid adaptation).
pub fn path_for_lambdas(
    dataset: &Dataset,
    model: ModelKind,
    lambdas: &[f64],
    grid: &GridConfig,
    solver: &SolverConfig,
) -> Result<SolutionPath> {
    if grid.k_max == 0 || grid.k_max > dataset.p() {
        return Err(BssError::dimension(format!(
            "largest subset size must lie in 1..={}, got {}",
            dataset.p(),
            grid.k_max
        )));
    }
    solver.validate(dataset.p())?;
    let ctx = ObjectiveContext::new(dataset, model, 0.0)?;
    let lambda_max = ctx.lambda_max()?;
    let keys = column_keys(ctx.p());
    let evals: Vec<Evaluation> = lambdas
        .par_iter()
        .enumerate()
        .map(|(i, &l)| evaluate(&ctx, solver, grid.k_max, &keys, i, l))
        .collect();
    assemble(dataset, &ctx, model, grid, lambda_max, evals)
}

fn assemble(
    dataset: &Dataset,
    ctx: &ObjectiveContext,
    model: ModelKind,
    grid: &GridConfig,
    lambda_max: f64,
    evals: Vec<Evaluation>,
) -> Result<SolutionPath> {
    let k_max = grid.k_max;
    let mut seen: HashMap<u128, ()> = HashMap::new();
    let mut cands: Vec<Vec<Subset>> = vec![Vec::new(); k_max];
    let mut best: Vec<Option<(Subset, f64)>> = vec![None; k_max];
    let mut diagnostics = Vec::with_capacity(evals.len());
    let mut lambda_grid = Vec::new();
    let mut traces = Vec::new();
    let mut fallback: Option<(f64, Vector)> = None;
    let mut last_error = None;

    for e in evals {
        match e.outcome {
            Ok((run, found)) => {
                let terminal_size = terminal_subset(&run.terminal_t, grid.rho).size();
                diagnostics.push(RunSummary {
                    index: e.index,
                    lambda: e.lambda,
                    terminal_size: Some(terminal_size),
                    iterations: run.iterations,
                    converged: run.converged,
                    crossings: run.crossings,
                    candidates: found.len(),
                    error: None,
                });
                lambda_grid.push(GridPoint {
                    lambda: e.lambda,
                    terminal_size,
                });
                for c in found {
                    if seen.insert(c.key, ()).is_some() {
                        continue;
                    }
                    let slot = &mut best[c.k - 1];
                    let better = match slot {
                        None => true,
                        Some((bs, bv)) => c.value < *bv || (c.value == *bv && c.subset < *bs),
                    };
                    if better {
                        *slot = Some((c.subset.clone(), c.value));
                    }
                    cands[c.k - 1].push(c.subset);
                }
                if fallback.as_ref().is_none_or(|(l, _)| e.lambda < *l) {
                    fallback = Some((e.lambda, run.terminal_t.clone()));
                }
                if grid.keep_traces {
                    traces.push((e.lambda, run));
                }
            }
            Err(err) => {
                diagnostics.push(RunSummary {
                    index: e.index,
                    lambda: e.lambda,
                    terminal_size: None,
                    iterations: 0,
                    converged: false,
                    crossings: 0,
                    candidates: 0,
                    error: Some(err.to_string()),
                });
                last_error = Some(err);
            }
        }
    }

    let Some((_, fallback_t)) = fallback else {
        return Err(match last_error {
            Some(err @ BssError::SolverAbort { .. }) => err,
            Some(err) => BssError::SolverAbort {
                iteration: 0,
                reason: format!("no penalty value produced a path: {err}"),
            },
            None => BssError::config("no penalty values to evaluate"),
        });
    };

    let mut buckets = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        let mut list = std::mem::take(&mut cands[k - 1]);
        let chosen = match best[k - 1].take() {
            Some((s, _)) => s,
            None => {
                let s = top_k_subset(&fallback_t, k);
                list.push(s.clone());
                s
            }
        };
        list.sort();
        // Reported values come from a cold evaluation so they are reproducible
        // independently of the warm-start history.
        let best_value = ctx.corner_value(&chosen)?;
        buckets.push(SizeBucket {
            k,
            candidates: list,
            best: chosen,
            best_value,
        });
    }
    lambda_grid.sort_by(|a, b| b.lambda.total_cmp(&a.lambda));

    Ok(SolutionPath {
        model,
        n: dataset.n(),
        p: dataset.p(),
        q: dataset.q(),
        k_max,
        lambda_max,
        buckets,
        lambda_grid,
        diagnostics,
        traces,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::TracePoint;

    fn run_of(points: &[&[f64]]) -> SolverRun {
        let trace: Vec<TracePoint> = points
            .iter()
            .enumerate()
            .map(|(i, t)| TracePoint {
                iter: i,
                t: Vector::from_column_slice(t),
                objective: 0.0,
            })
            .collect();
        SolverRun {
            terminal_t: trace.last().unwrap().t.clone(),
            iterations: trace.len() - 1,
            converged: true,
            crossings: 0,
            trace,
        }
    }

    fn bits(s: &str) -> Subset {
        Subset::parse_bits(s).unwrap()
    }

    fn toy() -> Dataset {
        Dataset::pls(
            Matrix::identity(2, 2),
            Matrix::from_column_slice(2, 1, &[1.0, 2.0]),
        )
        .unwrap()
    }

    #[test]
    fn extract_direct_sort() {
        let got = extract_subsets(&run_of(&[&[0.9, 0.1, 0.5]]), 2);
        assert_eq!(got, vec![(1, bits("100")), (2, bits("101"))]);
    }

    #[test]
    fn extract_ties_prefer_lower_index() {
        let got = extract_subsets(&run_of(&[&[0.3, 0.3, 0.3]]), 1);
        assert_eq!(got, vec![(1, bits("100"))]);
    }

    #[test]
    fn extract_collapses_duplicates() {
        let got = extract_subsets(&run_of(&[&[1.0, 1.0], &[1.0, 1.0], &[0.2, 0.9]]), 2);
        assert_eq!(got, vec![(1, bits("10")), (2, bits("11")), (1, bits("01"))]);
    }

    #[test]
    fn select_best_picks_larger_z() {
        let ctx = ObjectiveContext::new(&toy(), ModelKind::Pls1, 0.0).unwrap();
        let (s, v) = select_best(&[bits("10"), bits("01")], &ctx).unwrap();
        assert_eq!(s, bits("01"));
        assert_eq!(v, -1.0);
        let (s, _) = select_best(&[bits("10")], &ctx).unwrap();
        assert_eq!(s, bits("10"));
        assert!(select_best(&[], &ctx).is_err());
    }

    #[test]
    fn select_best_ties_go_lexicographic() {
        let ds = Dataset::pls(
            Matrix::identity(2, 2),
            Matrix::from_column_slice(2, 1, &[1.0, 1.0]),
        )
        .unwrap();
        let ctx = ObjectiveContext::new(&ds, ModelKind::Pls1, 0.0).unwrap();
        let (s, _) = select_best(&[bits("10"), bits("01")], &ctx).unwrap();
        assert_eq!(s, bits("01"));
    }

    #[test]
    fn terminal_threshold_is_strict() {
        assert_eq!(terminal_subset(&Vector::from_vec(vec![0.99, 0.01]), 0.9), bits("10"));
        assert_eq!(terminal_subset(&Vector::from_element(3, 0.9), 0.9), bits("000"));
        assert_eq!(terminal_subset(&Vector::from_element(3, 1.0), 0.5), bits("111"));
    }

    #[test]
    fn budget_two_stops_after_halving_once() {
        let path = dynamic_grid(
            &toy(),
            ModelKind::Pls1,
            &GridConfig::new(2, 2),
            &SolverConfig::default(),
        )
        .unwrap();
        let lambdas: Vec<f64> = path.lambda_grid.iter().map(|g| g.lambda).collect();
        assert_eq!(lambdas, vec![1.25, 0.625]);
        assert_eq!(path.lambda_grid[0].terminal_size, 0);
    }

    #[test]
    fn toy_path_buckets() {
        let path = dynamic_grid(
            &toy(),
            ModelKind::Pls1,
            &GridConfig::new(2, 10),
            &SolverConfig::default(),
        )
        .unwrap();
        assert_eq!(path.bucket(1).unwrap().best, bits("01"));
        assert_eq!(path.bucket(2).unwrap().best, bits("11"));
        assert_eq!(path_objective_curve(&path), vec![(1, -1.0), (2, -1.25)]);
        let doc = path.document();
        assert_eq!(doc.buckets[0].bits, "01");
    }

    #[test]
    fn grid_config_validation() {
        assert!(GridConfig::new(3, 2).validate(2).is_err());
        assert!(GridConfig::new(0, 5).validate(2).is_err());
        assert!(GridConfig::new(1, 1).validate(2).is_err());
        let mut g = GridConfig::new(1, 5);
        g.rho = 1.0;
        assert!(g.validate(2).is_err());
    }

    #[test]
    fn monotonicity_flags() {
        let curve = [(1, -1.0), (2, -0.5), (3, -2.0)];
        assert_eq!(monotonicity_violations(&curve, 0.0), vec![2]);
    }
}
