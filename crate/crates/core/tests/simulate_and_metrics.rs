mod common;

use bss_core::metrics::{confusion, metrics};
use bss_core::simulate::{generate, pca_covariance, pca_eigenvectors, Scenario, SimConfig};
use bss_core::{Matrix, Subset};
use common::*;
use proptest::prelude::*;

#[test]
fn generators_are_pure_functions_of_the_config() {
    for scenario in [Scenario::Multiresponse, Scenario::TwoComponent, Scenario::Univariate, Scenario::PcaCov] {
        let cfg = SimConfig::defaults_for(scenario).with_seed(77);
        assert_eq!(generate(&cfg).unwrap(), generate(&cfg).unwrap(), "{scenario}");
        let other = generate(&cfg.clone().with_seed(78)).unwrap();
        assert_ne!(generate(&cfg).unwrap().x, other.x);
    }
}

#[test]
fn default_multiresponse_shapes() {
    let inst = generate(&SimConfig::multiresponse()).unwrap();
    assert_eq!(inst.x.shape(), (100, 15));
    assert_eq!(inst.y.as_ref().unwrap().shape(), (100, 10));
    assert_eq!(inst.true_support.size(), 10);
    assert_eq!(inst.x_test.as_ref().unwrap().nrows(), 50);
}

/// At sigma = 0 exactly `p - gamma` columns have any variance.
#[test]
fn noise_free_columns_with_variance() {
    let inst = generate(&SimConfig::multiresponse().with_sigma(0.0).with_seed(3)).unwrap();
    let (vals, _) = jacobi_eigen(&(inst.x.transpose() * &inst.x));
    assert!(vals[1] <= 1e-9 * vals[0]);
    let live: Vec<usize> = (0..15).filter(|&j| inst.x.column(j).amax() > 0.0).collect();
    assert_eq!(live, inst.true_support.indices());
}

#[test]
fn univariate_blocks_follow_gamma() {
    let cfg = SimConfig {
        p: 80,
        gamma: 40,
        ..SimConfig::univariate()
    };
    let inst = generate(&cfg).unwrap();
    assert_eq!(inst.truth.supports[0].len(), 20);
    assert_eq!(inst.truth.supports[1].len(), 20);
    assert_eq!(inst.true_support.size(), 40);
    // odd p - gamma has no integral boundary
    let bad = SimConfig { gamma: 39, ..cfg };
    assert!(generate(&bad).is_err());
}

/// Without `f`, `y` is an exact combination of the two hidden factors; block
/// means estimate them up to the column noise, so the fit of `y` on the
/// block means must explain nearly all of its variance.
#[test]
fn univariate_without_response_noise() {
    let cfg = SimConfig {
        snr: f64::INFINITY,
        n: 2000,
        ..SimConfig::univariate()
    };
    let inst = generate(&cfg).unwrap();
    assert_eq!(inst.truth.noise_sd, Some(0.0));
    let y = inst.y.unwrap();
    let block_mean = |cols: &[usize]| {
        bss_core::Vector::from_fn(cfg.n, |i, _| {
            cols.iter().map(|&j| inst.x[(i, j)]).sum::<f64>() / cols.len() as f64
        })
    };
    let h1 = block_mean(&inst.truth.supports[0]);
    let h2 = block_mean(&inst.truth.supports[1]);
    let approx = h1 * 3.0 - h2 * 4.0;
    let resid = (y.column(0) - &approx).norm_squared() / y.column(0).norm_squared();
    // residual variance: 25 * 1/15 from averaging 15 noisy columns
    assert!(resid < 0.01, "{resid}");
}

#[test]
fn pca_population_structure() {
    let u = pca_eigenvectors();
    assert!((u.column(0).dot(&u.column(1))).abs() < 1e-15);
    assert!((u.transpose() * &u - Matrix::identity(10, 10)).amax() < 1e-12);
    let (vals, _) = jacobi_eigen(&pca_covariance());
    assert!((vals[0] - 200.0).abs() < 1e-9);
    assert!((vals[1] - 100.0).abs() < 1e-9);
    let inst = generate(&SimConfig::pca_cov()).unwrap();
    assert_eq!(inst.truth.supports, vec![vec![0, 1, 2, 3, 8, 9], vec![4, 5, 6, 7, 8, 9]]);
}

/// Monte Carlo: the sample covariance of a million draws is within 1% of
/// the population covariance, relative to `sqrt(S_ii S_jj)`.
#[test]
fn pca_sample_covariance_matches_population() {
    let n = 1_000_000;
    let inst = generate(&SimConfig {
        n,
        ..SimConfig::pca_cov().with_seed(101)
    })
    .unwrap();
    let xc = bss_core::linalg::center_columns(&inst.x).unwrap();
    let s = xc.transpose() * &xc / (n as f64 - 1.0);
    let sigma = pca_covariance();
    for i in 0..10 {
        for j in 0..10 {
            let scale = (sigma[(i, i)] * sigma[(j, j)]).sqrt();
            assert!((s[(i, j)] - sigma[(i, j)]).abs() <= 0.01 * scale, "({i},{j})");
        }
    }
}

#[test]
fn two_component_design() {
    let inst = generate(&SimConfig::two_component()).unwrap();
    assert_eq!(inst.x.ncols(), 30);
    assert_eq!(inst.truth.supports[0], (0..10).collect::<Vec<_>>());
    assert_eq!(inst.truth.supports[1], (10..20).collect::<Vec<_>>());
}

fn subset_strategy(p: usize) -> impl Strategy<Value = Subset> {
    prop::collection::vec(any::<bool>(), p).prop_map(Subset::from_bits)
}

proptest! {
    #[test]
    fn metric_identities(a in subset_strategy(12), b in subset_strategy(12)) {
        let m = metrics(&a, &b, None).unwrap();
        let c = confusion(&a, &b).unwrap();
        if let Some(sens) = m.sensitivity {
            let miss = c.r#fn as f64 / (c.tp + c.r#fn) as f64;
            prop_assert!((sens + miss - 1.0).abs() < 1e-15);
            if c.tp + c.fp > 0 {
                let precision = c.tp as f64 / (c.tp + c.fp) as f64;
                prop_assert!(m.f1 >= sens.min(precision) - 1e-15);
                prop_assert!(m.f1 <= sens.max(precision) + 1e-15);
            }
        }
        prop_assert!((0.0..=1.0).contains(&m.f1));
        for v in [m.sensitivity, m.specificity].into_iter().flatten() {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }
}

#[test]
fn metric_examples() {
    let s = Subset::parse_bits("1100").unwrap();
    let m = metrics(&s, &s, None).unwrap();
    assert_eq!((m.sensitivity, m.specificity, m.f1), (Some(1.0), Some(1.0), 1.0));
    let m = metrics(&Subset::parse_bits("0011").unwrap(), &s, None).unwrap();
    assert_eq!(m.sensitivity, Some(0.0));
    let y = Matrix::from_row_slice(2, 1, &[1.0, 2.0]);
    assert_eq!(metrics(&s, &s, Some((&y, &y))).unwrap().msep, Some(0.0));
}
