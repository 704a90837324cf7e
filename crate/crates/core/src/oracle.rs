//! Exhaustive best-subset search for small `p`, and numerical checks of the
//! corner-optimality property of the PLS1 relaxation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, ModelKind};
use crate::error::{BssError, Result};
use crate::linalg::Vector;
use crate::objective::{Kernel, ObjectiveContext};
use crate::path::{BucketRecord, PathDocument, SolutionPath};
use crate::subset::Subset;

pub const MAX_ORACLE_P: usize = 25;
pub const MAX_CORNER_CHECK_P: usize = 15;
/// Columns fixed per parallel partition of the subset space.
const PARTITION_BITS: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub model: ModelKind,
    pub n: usize,
    pub p: usize,
    pub q: usize,
    pub max_k: usize,
    /// Optimal subset and `f_0` for `k = 1..=max_k`.
    pub best: Vec<(Subset, f64)>,
    pub enumerated_count: u64,
}

impl OracleResult {
    pub fn winner(&self, k: usize) -> Option<&Subset> {
        self.best.get(k.checked_sub(1)?).map(|(s, _)| s)
    }

    pub fn document(&self) -> PathDocument {
        PathDocument {
            model: self.model,
            n: self.n,
            p: self.p,
            q: self.q,
            k_max: self.max_k,
            buckets: self
                .best
                .iter()
                .enumerate()
                .map(|(i, (s, v))| BucketRecord {
                    k: i + 1,
                    bits: s.to_bit_string(),
                    objective: *v,
                })
                .collect(),
            lambda_grid: None,
            oracle: Some(true),
        }
    }

    /// Sizes where the heuristic bucket winner equals the oracle winner.
    pub fn matches(&self, path: &SolutionPath) -> Vec<(usize, bool)> {
        let upto = self.max_k.min(path.k_max);
        (1..=upto)
            .map(|k| (k, path.bucket(k).map(|b| &b.best) == self.winner(k)))
            .collect()
    }
}

/// Bitmask over `p` columns with column `j` at bit `p - 1 - j`, so that
/// integer order equals the lexicographic order of [`Subset`].
fn mask_to_subset(mask: u32, p: usize) -> Subset {
    Subset::from_bits((0..p).map(|j| mask >> (p - 1 - j) & 1 == 1).collect())
}

type PerSize = Vec<Option<(f64, u32)>>;

fn offer(best: &mut PerSize, k: usize, value: f64, mask: u32) {
    let slot = &mut best[k - 1];
    let better = match slot {
        None => true,
        Some((v, m)) => value < *v || (value == *v && mask < *m),
    };
    if better {
        *slot = Some((value, mask));
    }
}

fn merge(mut a: PerSize, b: PerSize) -> PerSize {
    for (k, entry) in b.into_iter().enumerate() {
        if let Some((v, m)) = entry {
            offer(&mut a, k + 1, v, m);
        }
    }
    a
}

/// Per-size optimum of `f_0` over every non-empty subset of size `<= max_k`.
///
/// PLS1 walks each partition in Gray-code order with a running sum of
/// `z_j^2`; PLS2 and PCA solve one eigenproblem per subset.
pub fn exhaustive_path(dataset: &Dataset, model: ModelKind, max_k: usize) -> Result<OracleResult> {
    let p = dataset.p();
    if p > MAX_ORACLE_P {
        return Err(BssError::Guard {
            p,
            limit: MAX_ORACLE_P,
        });
    }
    if max_k == 0 || max_k > p {
        return Err(BssError::dimension(format!(
            "max_k must lie in 1..={p}, got {max_k}"
        )));
    }
    let ctx = ObjectiveContext::new(dataset, model, 0.0)?;
    let high = PARTITION_BITS.min(p);
    let low = p - high;

    let best: PerSize = match ctx.kernel() {
        Kernel::Pls1 { z } => {
            // weight of integer bit b
            let w: Vec<f64> = (0..p).map(|b| z[p - 1 - b] * z[p - 1 - b]).collect();
            (0u32..1 << high)
                .into_par_iter()
                .map(|prefix| {
                    let mut best: PerSize = vec![None; max_k];
                    let base = prefix << low;
                    let mut sum: f64 = (low..p).filter(|&b| base >> b & 1 == 1).map(|b| w[b]).sum();
                    let mut size = base.count_ones() as usize;
                    let mut mask = base;
                    if size >= 1 && size <= max_k {
                        offer(&mut best, size, -sum, mask);
                    }
                    for i in 1u32..1 << low {
                        let b = i.trailing_zeros() as usize;
                        mask ^= 1 << b;
                        if mask >> b & 1 == 1 {
                            sum += w[b];
                            size += 1;
                        } else {
                            sum -= w[b];
                            size -= 1;
                        }
                        if size >= 1 && size <= max_k {
                            offer(&mut best, size, -sum, mask);
                        }
                    }
                    best
                })
                .reduce(|| vec![None; max_k], merge)
        }
        _ => (0u32..1 << high)
            .into_par_iter()
            .map(|prefix| -> Result<PerSize> {
                let mut best: PerSize = vec![None; max_k];
                let base = prefix << low;
                for lowbits in 0u32..1 << low {
                    let mask = base | lowbits;
                    let size = mask.count_ones() as usize;
                    if size == 0 || size > max_k {
                        continue;
                    }
                    let value = ctx.corner_value(&mask_to_subset(mask, p))?;
                    offer(&mut best, size, value, mask);
                }
                Ok(best)
            })
            .try_reduce(|| vec![None; max_k], |a, b| Ok(merge(a, b)))?,
    };

    let mut out = Vec::with_capacity(max_k);
    for (k, entry) in best.into_iter().enumerate() {
        let (_, mask) = entry.expect("every size up to p has a subset");
        let s = mask_to_subset(mask, p);
        debug_assert_eq!(s.size(), k + 1);
        // same evaluation as the heuristic path reports
        let v = ctx.corner_value(&s)?;
        out.push((s, v));
    }
    let enumerated_count = (1..=max_k).map(|k| binomial(p, k)).sum();
    Ok(OracleResult {
        model,
        n: dataset.n(),
        p,
        q: dataset.q(),
        max_k,
        best: out,
        enumerated_count,
    })
}

fn binomial(n: usize, k: usize) -> u64 {
    (0..k).fold(1u64, |acc, i| acc * (n - i) as u64 / (i + 1) as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CornerOptimalityReport {
    pub p: usize,
    /// Exhaustive optimum `f_0(s^(k))`, `k = 0..=p`.
    pub optimal_values: Vec<f64>,
    pub interior_points_checked: usize,
    pub corner_dominance_failures: usize,
    pub monotonicity_failures: usize,
    pub increment_failures: usize,
    pub realizability_failures: usize,
}

impl CornerOptimalityReport {
    pub fn total_failures(&self) -> usize {
        self.corner_dominance_failures
            + self.monotonicity_failures
            + self.increment_failures
            + self.realizability_failures
    }
}

/// A point of `[0,1]^p` with coordinate sum `k`: `clamp(u + tau)` with `tau`
/// found by bisection.
pub fn point_with_sum(u: &Vector, k: f64) -> Vector {
    let p = u.len() as f64;
    debug_assert!((0.0..=p).contains(&k));
    let sum_at = |tau: f64| u.iter().map(|&x| (x + tau).clamp(0.0, 1.0)).sum::<f64>();
    let (mut lo, mut hi) = (-1.0, 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if sum_at(mid) < k {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let tau = 0.5 * (lo + hi);
    u.map(|x| (x + tau).clamp(0.0, 1.0))
}

/// Numerical checks for PLS1:
/// (a) the size-`k` optimum is no worse than random points of the slice
///     `sum(t) = k`, (b) optimal values decrease with `k`, (c) their
///     increments decrease with `k`, (d) at a penalty between consecutive
///     increments the size-`k` optimum minimizes the penalized objective over
///     all corners.
pub fn check_corner_optimality(dataset: &Dataset, samples: usize, seed: u64) -> Result<CornerOptimalityReport> {
    let p = dataset.p();
    if p > MAX_CORNER_CHECK_P {
        return Err(BssError::Guard {
            p,
            limit: MAX_CORNER_CHECK_P,
        });
    }
    let ctx = ObjectiveContext::new(dataset, ModelKind::Pls1, 0.0)?;
    let Kernel::Pls1 { z } = ctx.kernel() else {
        unreachable!("PLS1 context");
    };
    let z2: Vec<f64> = z.iter().map(|x| x * x).collect();
    let scale = z2.iter().sum::<f64>().max(f64::MIN_POSITIVE);
    let slack = 1e-12 * scale;
    let f0_t = |t: &Vector| -> f64 { -(0..p).map(|j| t[j] * t[j] * z2[j]).sum::<f64>() };

    let oracle = exhaustive_path(dataset, ModelKind::Pls1, p)?;
    let mut values = vec![0.0];
    values.extend(oracle.best.iter().map(|(_, v)| *v));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut corner_failures = 0;
    let mut checked = 0;
    for k in 1..p {
        for _ in 0..samples {
            let u = Vector::from_fn(p, |_, _| rng.random::<f64>());
            let t = point_with_sum(&u, k as f64);
            checked += 1;
            if values[k] > f0_t(&t) + slack {
                corner_failures += 1;
            }
        }
    }

    let monotone_failures = values.windows(2).filter(|w| w[1] > w[0] + slack).count();
    let increments: Vec<f64> = values.windows(2).map(|w| w[0] - w[1]).collect();
    let increment_failures = increments.windows(2).filter(|w| w[1] > w[0] + slack).count();

    // all corners by brute force: (size, f_0)
    let corners: Vec<(usize, f64)> = (0u32..1 << p)
        .map(|mask| {
            let f = -(0..p).filter(|&j| mask >> j & 1 == 1).map(|j| z2[j]).sum::<f64>();
            (mask.count_ones() as usize, f)
        })
        .collect();
    let mut realizability_failures = 0;
    for k in 1..=p {
        let next = increments.get(k).copied().unwrap_or(0.0);
        let lambda = 0.5 * (increments[k - 1] + next);
        let at_k = values[k] + lambda * k as f64;
        let min = corners
            .iter()
            .map(|&(m, f)| f + lambda * m as f64)
            .fold(f64::INFINITY, f64::min);
        if at_k > min + slack {
            realizability_failures += 1;
        }
    }

    Ok(CornerOptimalityReport {
        p,
        optimal_values: values,
        interior_points_checked: checked,
        corner_dominance_failures: corner_failures,
        monotonicity_failures: monotone_failures,
        increment_failures,
        realizability_failures,
    })
}
