use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rrr_core::filter::{ekf_forward, rts_smooth, FilterSetup, FilterTrajectory};
use rrr_core::linalg::min_eigenvalue;
use rrr_core::models::LinearModel;
use rrr_core::simulator::{simulate_dataset, SimConfig};
use rrr_core::tuning::{
    compute_costs, estimate_q_smoothed, estimate_r_smoothed, ms_estimate, mt_estimate,
    run_recipe, update_p0, Method, ProcessNoiseOptions, RecipeConfig, NOISE_FLOOR,
};
use rrr_core::Dataset;

fn diag(v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_column_slice(v))
}

fn linear(a: &[f64], c: &[f64], n: usize) -> LinearModel {
    let m = c.len() / n;
    LinearModel::new(DMatrix::from_row_slice(n, n, a), DMatrix::from_row_slice(m, n, c)).unwrap()
}

fn simulate(model: &LinearModel, q: &[f64], r: &[f64], n_samples: usize, seed: u64) -> Dataset {
    let n = q.len();
    let cfg = SimConfig {
        theta: DVector::zeros(0),
        q: diag(q),
        r: diag(r),
        x0: DVector::zeros(n),
        t0: 0.0,
        dt: 1.0,
        n_samples,
        seed,
        inputs: Vec::new(),
    };
    simulate_dataset(model, &cfg).unwrap().dataset
}

fn smoothed(model: &LinearModel, data: &Dataset, q: &[f64], r: &[f64]) -> FilterTrajectory {
    let n = q.len();
    let setup = FilterSetup {
        x0: DVector::zeros(n),
        theta0: DVector::zeros(0),
        p0: DMatrix::identity(n, n) * 1e-6,
        q: diag(q),
        r: diag(r),
    };
    rts_smooth(ekf_forward(model, data, &setup).unwrap(), model, data).unwrap()
}

#[test]
fn smoothed_r_estimate_recovers_true_r() {
    let model = linear(&[0.9, 0.1, 0.0, 0.8], &[1.0, 0.0, 0.0, 1.0], 2);
    let (q, r) = ([0.05, 0.02], [0.3, 0.1]);
    let data = simulate(&model, &q, &r, 5000, 3);
    let traj = smoothed(&model, &data, &q, &r);
    let est = estimate_r_smoothed(&traj, true).unwrap();
    for i in 0..2 {
        let ratio = est.matrix[(i, i)] / r[i];
        assert!((ratio - 1.0).abs() < 0.05, "channel {i}: ratio {ratio}");
    }
    assert_eq!(est.clamped, 0);
}

#[test]
fn scalar_em_recovers_process_noise() {
    let model = linear(&[0.9], &[1.0], 1);
    let data = simulate(&model, &[1.0], &[0.5], 2000, 8);
    // the default 1e-8 seed sits on the Q = 0 fixed point for unit-scale data
    let config = RecipeConfig {
        max_iterations: 60,
        q_seed: 0.1,
        ..RecipeConfig::default()
    };
    let out = run_recipe(&model, &data, &DVector::zeros(0), &config).unwrap();
    let q = out.statistics.q[(0, 0)];
    let r = out.statistics.r[(0, 0)];
    assert!((0.8..=1.2).contains(&q), "Q = {q}");
    assert!((0.4..=0.6).contains(&r), "R = {r}");
}

#[test]
fn em_without_correction_is_the_plain_second_moment() {
    let model = linear(&[0.9], &[1.0], 1);
    let data = simulate(&model, &[1.0], &[0.5], 200, 1);
    let traj = smoothed(&model, &data, &[1.0], &[0.5]);
    let options = ProcessNoiseOptions {
        covariance_correction: false,
        diagonal_only: true,
    };
    let plain = estimate_q_smoothed(&traj, &model, &data, options).unwrap();
    let expect: f64 = (0..traj.len() - 1)
        .map(|k| (traj.steps[k + 1].x_smooth[0] - 0.9 * traj.steps[k].x_smooth[0]).powi(2))
        .sum::<f64>()
        / (traj.len() - 1) as f64;
    assert!((plain.matrix[(0, 0)] - expect).abs() < 1e-12 * expect);
    let full = estimate_q_smoothed(&traj, &model, &data, ProcessNoiseOptions::default()).unwrap();
    assert!(full.matrix[(0, 0)] > plain.matrix[(0, 0)]);
}

#[test]
fn innovation_cost_has_chi_square_mean() {
    let model = linear(&[0.95, 0.05, 0.0, 0.9], &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0], 2);
    let (q, r) = ([0.02, 0.01], [0.1, 0.2, 0.05]);
    let n = 10_000;
    let data = simulate(&model, &q, &r, n, 21);
    let traj = smoothed(&model, &data, &q, &r);
    let costs = compute_costs(&traj, &model, &data, &diag(&q), &diag(&r)).unwrap();
    let m = 3.0;
    let band = 3.0 * (2.0 * m / n as f64).sqrt();
    assert!((costs.j(1) - m).abs() < band, "J1 = {}", costs.j(1));
    assert!((costs.j(3) - m).abs() < 0.2, "J3 = {}", costs.j(3));
    for i in [6, 7, 8] {
        assert!((costs.j(i) - 2.0).abs() < 0.2, "J{i} = {}", costs.j(i));
    }
    assert!(costs.j(4) < 0.01);
}

#[test]
fn noise_free_data_gives_zero_residue_costs() {
    let model = linear(&[0.9, 0.1, 0.0, 0.8], &[1.0, 0.0, 0.0, 1.0], 2);
    let times: Vec<f64> = (0..50).map(|k| k as f64).collect();
    let mut x = DVector::from_vec(vec![1.0, -0.5]);
    let mut zs = Vec::new();
    for _ in &times {
        zs.push(x.clone());
        x = model.a() * &x;
    }
    let data = Dataset::new(times, zs, Default::default()).unwrap();
    let setup = FilterSetup {
        x0: DVector::from_vec(vec![1.0, -0.5]),
        theta0: DVector::zeros(0),
        p0: DMatrix::identity(2, 2) * 1e-4,
        q: diag(&[1e-4, 1e-4]),
        r: diag(&[1e-2, 1e-2]),
    };
    let traj = rts_smooth(ekf_forward(&model, &data, &setup).unwrap(), &model, &data).unwrap();
    let costs = compute_costs(&traj, &model, &data, &setup.q, &setup.r).unwrap();
    for i in 1..=4 {
        assert!(costs.j(i).abs() < 1e-20, "J{i} = {}", costs.j(i));
    }

    // covariance matching on zero innovations drives R negative: clamped
    let mt = mt_estimate(&traj, None, true).unwrap();
    assert!(mt.r.clamped > 0);
    assert!(mt.r.matrix.diagonal().iter().all(|&v| v >= NOISE_FLOOR));
}

#[test]
fn steady_state_rule_with_vanishing_gain_floors_q() {
    let model = linear(&[0.9], &[1.0], 1);
    let data = simulate(&model, &[0.1], &[0.1], 300, 2);
    let traj = smoothed(&model, &data, &[1e-20], &[1e20]);
    let ms = ms_estimate(&traj, true).unwrap();
    assert_eq!(ms.q.matrix[(0, 0)], NOISE_FLOOR);
    assert!(ms.q.clamped > 0);
}

#[test]
fn mt_window_longer_than_record_is_a_config_error() {
    let model = linear(&[0.9], &[1.0], 1);
    let data = simulate(&model, &[0.1], &[0.1], 50, 2);
    let traj = smoothed(&model, &data, &[0.1], &[0.1]);
    assert!(mt_estimate(&traj, Some(51), true).is_err());
    assert!(mt_estimate(&traj, Some(50), true).is_ok());
}

#[test]
fn recipe_is_deterministic_and_records_history() {
    let model = linear(&[0.9, 0.1, 0.0, 0.8], &[1.0, 0.0, 0.0, 1.0], 2);
    let data = simulate(&model, &[0.05, 0.02], &[0.3, 0.1], 400, 4);
    for method in Method::ALL {
        let config = RecipeConfig {
            max_iterations: 8,
            ..RecipeConfig::for_method(method)
        };
        let a = run_recipe(&model, &data, &DVector::zeros(0), &config).unwrap();
        let b = run_recipe(&model, &data, &DVector::zeros(0), &config).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.statistics, b.statistics);
        assert!(a.history.len() <= 8);
        assert_eq!(a.history[0].iteration, 1);
    }
}

#[test]
fn invalid_recipe_settings_are_rejected() {
    let model = linear(&[0.9], &[1.0], 1);
    let data = simulate(&model, &[0.1], &[0.1], 50, 2);
    let bad = RecipeConfig {
        max_iterations: 0,
        ..RecipeConfig::default()
    };
    assert!(run_recipe(&model, &data, &DVector::zeros(0), &bad).is_err());
    let bad = RecipeConfig {
        p0_scale: Some(-1.0),
        ..RecipeConfig::default()
    };
    assert!(run_recipe(&model, &data, &DVector::zeros(0), &bad).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn rescaled_p0_stays_positive_semidefinite(scale in 1e-3f64..1e3, seed in 0u64..50) {
        use rrr_core::models::{builtin_model, CaseId, ModelOptions};
        use rrr_core::simulator::{builtin_scenario, ScenarioSpec};
        use rrr_core::statespace::StateSpaceModel;
        let model = builtin_model(CaseId::Case1Longitudinal, &ModelOptions::default()).unwrap();
        let spec = ScenarioSpec { n_samples: 40, seed, ..ScenarioSpec::default() };
        let cfg = builtin_scenario(&model, &spec).unwrap();
        let run = simulate_dataset(&model, &cfg).unwrap();
        let na = model.n_states() + model.n_params();
        let mut p0 = DMatrix::identity(na, na) * 1e-4;
        for i in model.n_states()..na { p0[(i, i)] = 1.0; }
        let setup = FilterSetup { x0: cfg.x0.clone(), theta0: cfg.theta.clone(), p0, q: cfg.q.clone(), r: cfg.r.clone() };
        let traj = rts_smooth(ekf_forward(&model, &run.dataset, &setup).unwrap(), &model, &run.dataset).unwrap();
        let p = update_p0(&traj, scale).unwrap();
        let base = &traj.steps[0].p_smooth;
        prop_assert!(min_eigenvalue(&p) >= -1e-12 * p.amax());
        // state block untouched, parameter block scaled
        prop_assert_eq!(p[(0, 0)], base[(0, 0)]);
        let i = na - 1;
        prop_assert!((p[(i, i)] - scale * base[(i, i)]).abs() <= 1e-12 * p[(i, i)].abs());
    }
}
