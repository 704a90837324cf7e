mod common;

use bss_core::linalg::{center_columns, power_iteration, PowerConfig};
use bss_core::objective::{grad_r, r_of_t, t_of_r, EvalScratch, Pls2Branch};
use bss_core::{Dataset, Matrix, ModelKind, ObjectiveContext, Subset, Vector};
use common::*;
use proptest::prelude::*;

fn tight() -> PowerConfig {
    PowerConfig {
        tol: 1e-14,
        ..PowerConfig::default()
    }
}

fn context(kind: ModelKind, ds: &Dataset, lambda: f64) -> ObjectiveContext {
    ObjectiveContext::new(ds, kind, lambda)
        .unwrap()
        .with_power_config(tight())
}

fn instance(seed: u64, n: usize, p: usize, q: usize) -> (Matrix, Matrix) {
    let mut r = rng(seed);
    (centered_normal(&mut r, n, p), centered_normal(&mut r, n, q))
}

fn value(ctx: &ObjectiveContext, t: &Vector) -> f64 {
    ctx.eval(t, &mut EvalScratch::new(1)).unwrap().value
}

fn kinds() -> [(ModelKind, &'static str, usize); 3] {
    [(ModelKind::Pls1, "pls1", 1), (ModelKind::Pls2, "pls2", 3), (ModelKind::Pca, "pca", 0)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn centering_is_idempotent(seed in any::<u64>(), n in 2usize..12, p in 1usize..6) {
        let mut r = rng(seed);
        let x = normal_matrix(&mut r, n, p);
        let once = center_columns(&x).unwrap();
        let twice = center_columns(&once).unwrap();
        prop_assert!((&once - &twice).amax() <= 1e-12 * x.amax().max(1.0));
        for col in once.column_iter() {
            prop_assert!(col.sum().abs() <= 1e-10 * n as f64 * x.amax().max(1.0));
        }
    }

    #[test]
    fn power_iteration_matches_dense_eigensolver(seed in any::<u64>(), dim in 1usize..=8) {
        let mut r = rng(seed);
        let b = normal_matrix(&mut r, dim, dim + 2);
        let a = &b * b.transpose();
        let (top, _) = top_and_gap(&a);
        let pair = power_iteration(&a, &PowerConfig::default(), seed);
        let pair = match pair {
            Ok(p) => p,
            Err(bss_core::BssError::NotConverged { last, .. }) => *last,
            Err(e) => panic!("{e}"),
        };
        prop_assert!((pair.value - top).abs() <= 1e-8 * top.max(1e-300));
        prop_assert!((pair.vector.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn power_value_does_not_depend_on_the_seed(seed in any::<u64>(), other in any::<u64>()) {
        let mut r = rng(seed);
        let b = normal_matrix(&mut r, 6, 8);
        let a = &b * b.transpose();
        let (_, gap) = top_and_gap(&a);
        prop_assume!(gap >= 1e-6);
        let cfg = PowerConfig::default();
        let v1 = power_iteration(&a, &cfg, seed).unwrap().value;
        let v2 = power_iteration(&a, &cfg, other).unwrap().value;
        prop_assert!((v1 - v2).abs() <= cfg.tol * v1.max(1.0) * 10.0);
    }

    #[test]
    fn t_map_round_trip(ts in prop::collection::vec(0.0f64..(1.0 - 1e-9), 1..8)) {
        let t = Vector::from_vec(ts);
        let back = t_of_r(&r_of_t(&t).unwrap());
        prop_assert!((back - &t).amax() <= 1e-12);
    }

    #[test]
    fn t_of_r_stays_in_the_cube(rs in prop::collection::vec(-1e3f64..1e3, 1..8)) {
        let t = t_of_r(&Vector::from_vec(rs));
        prop_assert!(t.iter().all(|&x| (0.0..=1.0).contains(&x)));
    }

    #[test]
    fn value_is_minus_delta_plus_penalty(seed in any::<u64>(), lambda in 0.0f64..3.0) {
        let (x, y) = instance(seed, 20, 5, 3);
        let mut r = rng(seed ^ 1);
        let t = uniform_vector(&mut r, 5, 0.0, 1.0);
        for (kind, _, q) in kinds() {
            let ds = Dataset::new(x.clone(), (q > 0).then(|| y.columns(0, q).into_owned())).unwrap();
            let e = context(kind, &ds, lambda).eval(&t, &mut EvalScratch::new(0)).unwrap();
            let expect = -e.delta + lambda * t.sum();
            prop_assert!((e.value - expect).abs() <= 1e-12 * expect.abs().max(1.0));
        }
    }

    #[test]
    fn pls1_is_concave(seed in any::<u64>(), a in 0.0f64..1.0, lambda in 0.0f64..2.0) {
        let (x, y) = instance(seed, 15, 6, 1);
        let ctx = context(ModelKind::Pls1, &Dataset::pls(x, y).unwrap(), lambda);
        let mut r = rng(seed ^ 2);
        let t1 = uniform_vector(&mut r, 6, 0.0, 1.0);
        let t2 = uniform_vector(&mut r, 6, 0.0, 1.0);
        let mid = &t1 * a + &t2 * (1.0 - a);
        let lhs = value(&ctx, &mid);
        let rhs = a * value(&ctx, &t1) + (1.0 - a) * value(&ctx, &t2);
        prop_assert!(lhs >= rhs - 1e-12 * rhs.abs().max(1.0));
    }

    #[test]
    fn unpenalized_objective_decreases_in_each_coordinate(
        seed in any::<u64>(), j in 0usize..5, bump in 0.0f64..0.5
    ) {
        let (x, y) = instance(seed, 20, 5, 3);
        let mut r = rng(seed ^ 3);
        let t = uniform_vector(&mut r, 5, 0.0, 0.5);
        let mut t2 = t.clone();
        t2[j] += bump;
        for (kind, _, q) in kinds() {
            let ds = Dataset::new(x.clone(), (q > 0).then(|| y.columns(0, q).into_owned())).unwrap();
            let ctx = context(kind, &ds, 0.0);
            let (f1, f2) = (value(&ctx, &t), value(&ctx, &t2));
            prop_assert!(f2 <= f1 + 1e-10 * f1.abs().max(1.0), "{kind}: {f1} -> {f2}");
        }
    }

    #[test]
    fn pls2_branches_agree(seed in any::<u64>(), lambda in 0.0f64..1.0) {
        let (x, y) = instance(seed, 25, 6, 3);
        let ds = Dataset::pls(x, y).unwrap();
        let mut r = rng(seed ^ 4);
        let t = uniform_vector(&mut r, 6, 0.05, 1.0);
        let (top, gap) = top_and_gap(&sandwich(
            &{ let m = ds.x().transpose() * ds.y().unwrap() / 25.0; &m * m.transpose() },
            &t,
        ));
        prop_assume!(gap > 1e-3 * top.max(1.0));
        let eval = |b| {
            ObjectiveContext::with_branch(&ds, ModelKind::Pls2, lambda, b)
                .unwrap()
                .with_power_config(tight())
                .eval(&t, &mut EvalScratch::new(0))
                .unwrap()
        };
        let (c, g) = (eval(Pls2Branch::Cross), eval(Pls2Branch::Gram));
        prop_assert!((c.value - g.value).abs() <= 1e-8 * c.value.abs().max(1.0));
        prop_assert!((&c.grad_t - &g.grad_t).amax() <= 1e-8 * c.grad_t.amax().max(1.0));
    }

    #[test]
    fn grad_r_is_the_chain_rule(seed in any::<u64>()) {
        let (x, y) = instance(seed, 20, 5, 1);
        let ctx = context(ModelKind::Pls1, &Dataset::pls(x, y).unwrap(), 0.3);
        let mut r = rng(seed ^ 5);
        let rr = uniform_vector(&mut r, 5, 0.1, 1.5);
        let g = |r: &Vector| value(&ctx, &t_of_r(r));
        let fd = central_difference(g, &rr, 1e-6);
        let e = ctx.eval(&t_of_r(&rr), &mut EvalScratch::new(0)).unwrap();
        let analytic = grad_r(&e.grad_t, &rr);
        prop_assert!((&analytic - &fd).amax() <= 1e-6 * fd.amax().max(1.0));
    }
}

/// `eval` at a corner equals the discrete objective on the column-deleted
/// data, for every subset, for every model.
#[test]
fn corner_consistency_is_exhaustive_for_small_p() {
    for (seed, p) in [(1u64, 4usize), (2, 6), (3, 8)] {
        let (x, y) = instance(seed, 30, p, 3);
        for (kind, name, q) in kinds() {
            let yq = (q > 0).then(|| y.columns(0, q).into_owned());
            let ds = Dataset::new(x.clone(), yq.clone()).unwrap();
            let ctx = context(kind, &ds, 0.0);
            for mask in 0u32..(1 << p) {
                let bits: Vec<bool> = (0..p).map(|j| mask >> j & 1 == 1).collect();
                let s = Subset::from_bits(bits);
                let t = Vector::from_vec(s.as_f64());
                let expect = reference_f0(name, &x, yq.as_ref(), &t);
                let got = ctx.eval(&t, &mut EvalScratch::new(0)).unwrap().value;
                let corner = ctx.corner_value(&s).unwrap();
                let tol = 1e-10 * expect.abs().max(1e-12);
                assert!((got - expect).abs() <= tol, "{name} p={p} {s}: {got} vs {expect}");
                assert!((corner - expect).abs() <= tol, "{name} p={p} {s}: {corner} vs {expect}");
            }
        }
    }
}

/// Minimizing `-||X_s'y||` and `-||X_s'y||^2` over corners of one size
/// gives the same subset.
#[test]
fn pls1_norm_and_squared_norm_share_the_argmin() {
    for seed in 0..10u64 {
        let (x, y) = instance(seed, 25, 8, 1);
        for k in 1..=8usize {
            let mut best_sq = (f64::INFINITY, 0u32);
            let mut best_abs = (f64::INFINITY, 0u32);
            for mask in 0u32..(1 << 8) {
                if mask.count_ones() as usize != k {
                    continue;
                }
                let t = Vector::from_fn(8, |j, _| (mask >> j & 1) as f64);
                let f = reference_f0("pls1", &x, Some(&y), &t);
                if f < best_sq.0 {
                    best_sq = (f, mask);
                }
                if -(-f).sqrt() < best_abs.0 {
                    best_abs = (-(-f).sqrt(), mask);
                }
            }
            assert_eq!(best_sq.1, best_abs.1);
        }
    }
}

/// Spec examples on fixed data.
#[test]
fn worked_gradients() {
    let ds = Dataset::pls(Matrix::identity(2, 2), Matrix::from_column_slice(2, 1, &[1.0, 2.0]))
        .unwrap();
    let e = context(ModelKind::Pls1, &ds, 0.0)
        .eval(&Vector::from_vec(vec![1.0, 1.0]), &mut EvalScratch::new(0))
        .unwrap();
    assert!((e.value + 1.25).abs() < 1e-15);
    assert!((e.grad_t - Vector::from_vec(vec![-0.5, -2.0])).amax() < 1e-15);

    // X'X/n = diag(4, 1)
    let x = Matrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]) * 2f64.sqrt();
    let e = context(ModelKind::Pca, &Dataset::pca(x).unwrap(), 0.0)
        .eval(&Vector::from_vec(vec![1.0, 1.0]), &mut EvalScratch::new(0))
        .unwrap();
    assert!((e.delta - 4.0).abs() < 1e-12);
    assert!((e.grad_t - Vector::from_vec(vec![-8.0, 0.0])).amax() < 1e-10);
}
