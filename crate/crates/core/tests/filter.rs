use nalgebra::{DMatrix, DVector};
use rrr_core::filter::{ekf_forward, residue_series, rts_smooth, FilterSetup};
use rrr_core::linalg::{asymmetry, min_eigenvalue};
use rrr_core::models::{builtin_model, CaseId, LinearModel, ModelOptions};
use rrr_core::simulator::{builtin_scenario, simulate_dataset, ScenarioSpec, SimConfig};
use rrr_core::statespace::{InputSet, StateSpaceModel};
use rrr_core::Dataset;

fn scalar_model(a: f64) -> LinearModel {
    LinearModel::new(DMatrix::from_element(1, 1, a), DMatrix::from_element(1, 1, 1.0)).unwrap()
}

fn scalar_data(z: &[f64]) -> Dataset {
    let times = (0..z.len()).map(|k| k as f64).collect();
    let zs = z.iter().map(|&v| DVector::from_element(1, v)).collect();
    Dataset::new(times, zs, InputSet::default()).unwrap()
}

fn scalar_setup(x0: f64, p0: f64, q: f64, r: f64) -> FilterSetup {
    FilterSetup {
        x0: DVector::from_element(1, x0),
        theta0: DVector::zeros(0),
        p0: DMatrix::from_element(1, 1, p0),
        q: DMatrix::from_element(1, 1, q),
        r: DMatrix::from_element(1, 1, r),
    }
}

/// Scalar Kalman recursion written out by hand: (x_prior, p_prior, gain,
/// x_post, p_post) per sample, first sample updated with the prior.
fn hand_kalman(a: f64, q: f64, r: f64, x0: f64, p0: f64, z: &[f64]) -> Vec<[f64; 5]> {
    let (mut xp, mut pp) = (x0, p0);
    let mut out = Vec::new();
    for (k, &zk) in z.iter().enumerate() {
        if k > 0 {
            let [_, _, _, xf, pf] = out[k - 1];
            xp = a * xf;
            pp = a * a * pf + q;
        }
        let gain = pp / (pp + r);
        let xf = xp + gain * (zk - xp);
        let pf = (1.0 - gain) * pp;
        out.push([xp, pp, gain, xf, pf]);
    }
    out
}

const Z: [f64; 8] = [0.3, 0.1, -0.4, 0.25, 0.9, 0.6, -0.2, 0.05];

#[test]
fn scalar_filter_matches_hand_riccati() {
    let (a, q, r) = (0.9, 1.0, 1.0);
    let traj = ekf_forward(&scalar_model(a), &scalar_data(&Z), &scalar_setup(0.0, 1.0, q, r)).unwrap();
    let oracle = hand_kalman(a, q, r, 0.0, 1.0, &Z);
    for (s, o) in traj.steps.iter().zip(&oracle) {
        let got = [s.x_prior[0], s.p_prior[(0, 0)], s.gain[(0, 0)], s.x_post[0], s.p_post[(0, 0)]];
        for (g, w) in got.iter().zip(o) {
            assert!((g - w).abs() < 1e-12, "{got:?} vs {o:?}");
        }
    }
    // second sample: P⁻ = 0.81·0.5 + 1
    assert!((traj.steps[1].p_prior[(0, 0)] - 1.405).abs() < 1e-12);
}

#[test]
fn huge_measurement_noise_leaves_prediction_untouched() {
    let traj = ekf_forward(&scalar_model(0.9), &scalar_data(&Z), &scalar_setup(0.5, 1.0, 0.1, 1e12))
        .unwrap();
    for s in &traj.steps {
        assert!(s.gain[(0, 0)].abs() < 1e-11);
        assert!((s.x_post[0] - s.x_prior[0]).abs() < 1e-11);
    }
}

#[test]
fn tiny_measurement_noise_trusts_the_data() {
    let traj = ekf_forward(&scalar_model(0.9), &scalar_data(&Z), &scalar_setup(0.5, 1.0, 0.1, 1e-12))
        .unwrap();
    for (s, z) in traj.steps.iter().zip(Z) {
        assert!((s.x_post[0] - z).abs() < 1e-9);
    }
}

#[test]
fn scalar_smoother_matches_hand_rts() {
    let (a, q, r) = (0.8, 0.5, 2.0);
    let z = [1.0, -0.5, 0.7];
    let model = scalar_model(a);
    let data = scalar_data(&z);
    let traj = rts_smooth(
        ekf_forward(&model, &data, &scalar_setup(0.2, 3.0, q, r)).unwrap(),
        &model,
        &data,
    )
    .unwrap();
    let f = hand_kalman(a, q, r, 0.2, 3.0, &z);
    let mut xs = [0.0; 3];
    let mut ps = [0.0; 3];
    xs[2] = f[2][3];
    ps[2] = f[2][4];
    for k in (0..2).rev() {
        let g = f[k][4] * a / f[k + 1][1];
        xs[k] = f[k][3] + g * (xs[k + 1] - f[k + 1][0]);
        ps[k] = f[k][4] + g * g * (ps[k + 1] - f[k + 1][1]);
        // lag-one cross-covariance P_{k+1|N} G
        assert!((traj.steps[k].cross[(0, 0)] - ps[k + 1] * g).abs() < 1e-12);
    }
    for k in 0..3 {
        assert!((traj.steps[k].x_smooth[0] - xs[k]).abs() < 1e-12);
        assert!((traj.steps[k].p_smooth[(0, 0)] - ps[k]).abs() < 1e-12);
    }
}

fn case1_short() -> (rrr_core::models::AircraftModel, Dataset, SimConfig) {
    let model = builtin_model(CaseId::Case1Longitudinal, &ModelOptions::default()).unwrap();
    let spec = ScenarioSpec {
        n_samples: 300,
        seed: 11,
        ..ScenarioSpec::default()
    };
    let cfg = builtin_scenario(&model, &spec).unwrap();
    let run = simulate_dataset(&model, &cfg).unwrap();
    (model, run.dataset, cfg)
}

fn case1_setup(model: &dyn StateSpaceModel, cfg: &SimConfig) -> FilterSetup {
    let n = model.n_states();
    let p = model.n_params();
    let mut p0 = DMatrix::zeros(n + p, n + p);
    for i in 0..n {
        p0[(i, i)] = 1e-6;
    }
    for i in 0..p {
        p0[(n + i, n + i)] = (0.1 * cfg.theta[i].abs()).max(1e-3).powi(2);
    }
    FilterSetup {
        x0: cfg.x0.clone(),
        theta0: cfg.theta.clone(),
        p0,
        q: cfg.q.clone(),
        r: cfg.r.clone(),
    }
}

#[test]
fn joseph_update_keeps_covariances_symmetric_and_smoothing_only_shrinks() {
    let (model, data, cfg) = case1_short();
    let traj = ekf_forward(&model, &data, &case1_setup(&model, &cfg)).unwrap();
    let traj = rts_smooth(traj, &model, &data).unwrap();
    for s in &traj.steps {
        assert!(asymmetry(&s.p_post) < 1e-12 * s.p_post.amax().max(1.0));
        assert!(asymmetry(&s.p_smooth) < 1e-12 * s.p_smooth.amax().max(1.0));
        let diff = &s.p_post - &s.p_smooth;
        assert!(min_eigenvalue(&diff) >= -1e-9);
    }
    let last = traj.steps.last().unwrap();
    assert_eq!(last.x_smooth, last.x_post);
    assert_eq!(last.p_smooth, last.p_post);
}

#[test]
fn innovation_bands_are_root_of_innovation_covariance() {
    let (model, data, cfg) = case1_short();
    let traj = ekf_forward(&model, &data, &case1_setup(&model, &cfg)).unwrap();
    let traj = rts_smooth(traj, &model, &data).unwrap();
    let res = residue_series(&traj, &cfg.r);
    for (s, b) in traj.steps.iter().zip(&res.bounds) {
        let expect = (&s.h_prior * &s.p_prior * s.h_prior.transpose() + &cfg.r).diagonal();
        for i in 0..expect.len() {
            assert!((b.innovation[i] * b.innovation[i] - expect[i]).abs() < 1e-12 * expect[i].max(1e-300) + 1e-18);
        }
    }
}

#[test]
fn innovations_fall_inside_two_sigma_about_95_percent_of_the_time() {
    let model = LinearModel::new(
        DMatrix::from_row_slice(2, 2, &[0.95, 0.1, -0.1, 0.9]),
        DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.5, 1.0]),
    )
    .unwrap();
    let cfg = SimConfig {
        theta: DVector::zeros(0),
        q: DMatrix::from_diagonal(&DVector::from_vec(vec![0.04, 0.02])),
        r: DMatrix::from_diagonal(&DVector::from_vec(vec![0.1, 0.05])),
        x0: DVector::from_vec(vec![1.0, -1.0]),
        t0: 0.0,
        dt: 1.0,
        n_samples: 4000,
        seed: 5,
        inputs: Vec::new(),
    };
    let run = simulate_dataset(&model, &cfg).unwrap();
    let setup = FilterSetup {
        x0: cfg.x0.clone(),
        theta0: DVector::zeros(0),
        p0: DMatrix::identity(2, 2) * 1e-9,
        q: cfg.q.clone(),
        r: cfg.r.clone(),
    };
    let traj = rts_smooth(ekf_forward(&model, &run.dataset, &setup).unwrap(), &model, &run.dataset).unwrap();
    let res = residue_series(&traj, &cfg.r);
    let mut inside = 0;
    let mut total = 0;
    for (nu, b) in res.innovation.iter().zip(&res.bounds) {
        for i in 0..2 {
            total += 1;
            if nu[i].abs() <= 1.96 * b.innovation[i] {
                inside += 1;
            }
        }
    }
    let frac = inside as f64 / total as f64;
    assert!((frac - 0.95).abs() < 0.015, "coverage {frac}");
}

#[test]
fn mismatched_dimensions_are_rejected() {
    let mut setup = scalar_setup(0.0, 1.0, 1.0, 1.0);
    setup.r = DMatrix::identity(2, 2);
    assert!(ekf_forward(&scalar_model(0.9), &scalar_data(&Z), &setup).is_err());
}
