use nalgebra::DMatrix;
use proptest::prelude::*;
use rrr_core::diagnostics::{autocorrelation, correlation_matrix, crb_percent};

fn covariance(n: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-3.0f64..3.0, n * n).prop_map(move |v| {
        let a = DMatrix::from_vec(n, n, v);
        &a * a.transpose() + DMatrix::identity(n, n) * 1e-3
    })
}

proptest! {
    #[test]
    fn correlation_is_symmetric_and_bounded(cov in (1usize..7).prop_flat_map(covariance)) {
        let n = cov.nrows();
        let names: Vec<String> = (0..n).map(|i| format!("p{i}")).collect();
        let c = correlation_matrix(&cov, &names).unwrap();
        for i in 0..n {
            prop_assert_eq!(c[i][i], 100);
            for j in 0..n {
                prop_assert_eq!(c[i][j], c[j][i]);
                prop_assert!((-100..=100).contains(&c[i][j]));
                // oracle: direct normalisation
                let r = cov[(i, j)] / (cov[(i, i)] * cov[(j, j)]).sqrt();
                prop_assert!(((c[i][j] as f64) - 100.0 * r).abs() <= 0.5 + 1e-9);
            }
        }
    }

    #[test]
    fn crb_percent_is_scale_invariant(
        theta in prop::collection::vec(0.1f64..10.0, 1..8),
        k in 0.01f64..100.0,
    ) {
        let sigma: Vec<f64> = theta.iter().map(|t| 0.1 * t).collect();
        let a = crb_percent(&theta, &sigma).unwrap();
        let ts: Vec<f64> = theta.iter().map(|t| -k * t).collect();
        let ss: Vec<f64> = sigma.iter().map(|s| k * s).collect();
        let b = crb_percent(&ts, &ss).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - 10.0).abs() < 1e-9);
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn autocorrelation_starts_at_one(series in prop::collection::vec(-5.0f64..5.0, 4..60)) {
        prop_assume!(series.iter().any(|v| v.abs() > 1e-6));
        let r = autocorrelation(&series, 3);
        prop_assert!((r[0] - 1.0).abs() < 1e-12);
        prop_assert!(r.iter().all(|v| v.is_finite()));
    }
}
