use pushnpg_core::sim::{step, Configuration, ModelParams, SimState};
use pushnpg_core::task::home_pose;
use pushnpg_core::sysid::{
    gauss_newton, pushing_run, residuals, RecordedRun, SolverOptions, SysIdError, SysIdProblem, Termination,
    RESIDUALS_PER_SAMPLE,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn heavy() -> ModelParams {
    let mut p = ModelParams::default();
    p.object_mass = 0.40;
    p
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[test]
fn residual_vanishes_at_the_truth() {
    let p = heavy();
    let (run, truth) = pushing_run(&p, 0.5, 0.0, &mut rng(0)).unwrap();
    let problem = SysIdProblem::new(&["object_mass"], p.clone());
    let r = residuals(&problem, &p, &truth, &run).unwrap();
    assert_eq!(r.len(), (run.len() - 2) * RESIDUALS_PER_SAMPLE);
    assert_eq!(RESIDUALS_PER_SAMPLE, 16);
    let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!(norm <= 1e-8, "residual norm {norm}");
}

#[test]
fn torque_residual_is_linear_in_the_recorded_torque() {
    let p = ModelParams::default();
    let (mut run, truth) = pushing_run(&p, 0.05, 0.0, &mut rng(0)).unwrap();
    let mut problem = SysIdProblem::new(&["object_mass"], p.clone());
    problem.torque_weight = 4.0;
    let before = residuals(&problem, &p, &truth, &run).unwrap();
    run.torques[10][3] += 0.1;
    let after = residuals(&problem, &p, &truth, &run).unwrap();
    let idx = 9 * RESIDUALS_PER_SAMPLE + 3;
    for (i, (a, b)) in after.iter().zip(&before).enumerate() {
        if i == idx {
            assert!(((b - a) - 2.0 * 0.1).abs() < 1e-12);
        } else {
            assert_eq!(a, b);
        }
    }
}

#[test]
fn converges_immediately_from_the_truth() {
    let p = heavy();
    let (run, truth) = pushing_run(&p, 0.5, 0.0, &mut rng(0)).unwrap();
    let mut problem = SysIdProblem::new(&["object_mass", "contact_friction_mu"], p.clone());
    problem.initial_states = Some(truth);
    let fit = gauss_newton(&problem, &run, &SolverOptions::default()).unwrap();
    assert!(fit.iterations <= 2, "{} iterations", fit.iterations);
    assert!(fit.cost() <= 1e-12, "cost {}", fit.cost());
    assert!((fit.values[0] - 0.40).abs() < 1e-9);
}

#[test]
fn recovers_hidden_mass_from_noiseless_push() {
    let (run, _) = pushing_run(&heavy(), 2.0, 0.0, &mut rng(3)).unwrap();
    let problem = SysIdProblem::new(&["object_mass"], ModelParams::default());
    let fit = gauss_newton(&problem, &run, &SolverOptions::default()).unwrap();
    let mass = fit.value("object_mass").unwrap();
    assert!((mass - 0.40).abs() <= 0.004, "mass {mass}");
    assert!(fit.non_identifiable.is_empty());
    for pair in fit.cost_trace.windows(2) {
        assert!(pair[1] <= pair[0]);
    }
    assert!(fit.report().contains("object_mass"));
}

/// Fingers wave in free space: the object is never touched.
fn contact_free_run() -> RecordedRun {
    let p = ModelParams::default();
    let mut state = SimState::at_rest(home_pose(&p));
    // Pull the tips back first so that the swing stays clear of the object.
    for q in state.q.chunks_mut(2) {
        q[1] -= 0.4;
    }
    let mut torques = Vec::new();
    let mut sensors = Vec::new();
    for i in 0..400 {
        let t = i as f64 * 5e-4;
        let u: [f64; 6] = std::array::from_fn(|j| 0.02 * (7.0 * t + j as f64).sin());
        sensors.push(state.configuration().to_array());
        torques.push(u);
        state = step(&state, &u, &p, 5e-4).unwrap();
    }
    RecordedRun::new(5e-4, torques, sensors).unwrap()
}

#[test]
fn contact_parameters_without_contact_are_flagged() {
    let run = contact_free_run();
    let mut start = ModelParams::default();
    start.joint_damping = 0.3;
    let problem = SysIdProblem::new(&["joint_damping", "contact_stiffness", "contact_friction_mu"], start);
    let fit = gauss_newton(&problem, &run, &SolverOptions::default()).unwrap();
    assert_eq!(fit.non_identifiable, vec!["contact_stiffness", "contact_friction_mu"]);
    assert_eq!(fit.values[1], 2000.0);
    assert_eq!(fit.values[2], 0.8);
    assert!(fit.std_diag[1].is_nan());
    assert!((fit.values[0] - 0.2).abs() < 1e-6, "damping {}", fit.values[0]);
    assert!(fit.report().contains("not identifiable"));
}

#[test]
fn trusted_sensors_pin_the_state_estimate() {
    let (run, _) = pushing_run(&heavy(), 0.3, 1e-4, &mut rng(5)).unwrap();
    let deviation = |w: f64| {
        let mut problem = SysIdProblem::new(&["object_mass"], ModelParams::default());
        problem.sensor_weight = w;
        let fit = gauss_newton(&problem, &run, &SolverOptions::default()).unwrap();
        fit.states
            .iter()
            .zip(&run.sensors)
            .flat_map(|(q, s)| q.to_array().into_iter().zip(s.iter()).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max)
    };
    let loose = deviation(1e4);
    let tight = deviation(1e14);
    assert!(loose > 1e-5, "loose {loose}");
    assert!(tight < 1e-7, "tight {tight}");
}

#[test]
fn invalid_problems_are_rejected() {
    let (run, _) = pushing_run(&ModelParams::default(), 0.01, 0.0, &mut rng(0)).unwrap();
    let opts = SolverOptions::default();
    let p = ModelParams::default();
    let cases = [
        SysIdProblem::new(&[], p.clone()),
        SysIdProblem::new(&["no_such_key"], p.clone()),
        SysIdProblem::new(&["object_mass", "object_mass"], p.clone()),
        SysIdProblem {
            sensor_weight: 0.0,
            ..SysIdProblem::new(&["object_mass"], p.clone())
        },
    ];
    for problem in cases {
        assert!(matches!(gauss_newton(&problem, &run, &opts), Err(SysIdError::InvalidProblem(_))));
    }
    let mut problem = SysIdProblem::new(&["object_mass"], p);
    let mut states: Vec<Configuration> = run.configurations();
    states[4].q[0] = f64::NAN;
    problem.initial_states = Some(states);
    assert!(matches!(
        gauss_newton(&problem, &run, &opts),
        Err(SysIdError::NonFiniteResidual { sample: 3, .. })
    ));
}

#[test]
fn iteration_cap_is_respected() {
    let (run, _) = pushing_run(&heavy(), 0.3, 1e-4, &mut rng(1)).unwrap();
    let problem = SysIdProblem::new(&["object_mass"], ModelParams::default());
    let opts = SolverOptions {
        max_iterations: 2,
        ..SolverOptions::default()
    };
    let fit = gauss_newton(&problem, &run, &opts).unwrap();
    assert_eq!(fit.iterations, 2);
    assert_eq!(fit.termination, Termination::MaxIterations);
}
