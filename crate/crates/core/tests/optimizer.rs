mod common;

use common::{pendubot, random_vector, rng};
use ddpronto::cost::{riccati_map, terminal_weight_dare, TrackingCost};
use ddpronto::dynamics::{rollout_open_loop, Pendubot};
use ddpronto::io::log_to_csv;
use ddpronto::optimizer::{pronto_step, run_data_driven, run_model_based, Mode, SolverConfig};
use ddpronto::JacobianOracle;
use nalgebra::{DMatrix, DVector};

#[test]
fn pendubot_dare_residual() {
    let plant = Pendubot::new(Default::default()).unwrap();
    let (a, b) = plant
        .exact_jacobians(&Pendubot::up_equilibrium(), &DVector::zeros(1))
        .unwrap();
    let q = DMatrix::from_diagonal(&DVector::from_vec(vec![1e3, 1e3, 1e2, 1e2]));
    let r = DMatrix::from_element(1, 1, 50.0);
    let p = terminal_weight_dare(&a, &b, &q, &r).unwrap();
    let residual = (riccati_map(&a, &b, &q, &r, &p).unwrap() - &p).amax();
    assert!(residual <= 1e-9 * p.amax(), "residual {residual:e}, |P| {:e}", p.amax());
    assert!(p.clone().cholesky().is_some());
}

#[test]
fn optimum_is_a_fixed_point() {
    // LTI + quadratic cost: after convergence a further step changes nothing
    let mut r = rng(11);
    let plant = common::random_stable_lti(&mut r, 2, 1);
    let horizon = 10;
    let cost = TrackingCost::new(
        DMatrix::identity(2, 2),
        DMatrix::identity(1, 1),
        DMatrix::identity(2, 2),
        (0..=horizon).map(|_| random_vector(&mut r, 2, 1.0)).collect(),
        vec![DVector::zeros(1); horizon],
        )
    .unwrap();
    let initial = rollout_open_loop(&DVector::zeros(2), &vec![DVector::zeros(1); horizon], &plant).unwrap();
    let cfg = SolverConfig {
        dg_tol: 1e-14,
        ..SolverConfig::model_based()
    };
    let opt = run_model_based(&cfg, &plant, &cost, &initial, None).unwrap().trajectory;
    let (next, record) = pronto_step(&opt, &plant, &cost, &cfg, 0).unwrap();
    assert!(record.dg.abs() <= 1e-12);
    assert!(next.distance(&opt) <= 1e-9);
}

#[test]
fn model_based_pendubot_converges_monotonically_after_transient() {
    let p = pendubot(Mode::ModelBased);
    let cfg = SolverConfig {
        max_iters: 150,
        ..p.solver.clone()
    };
    let out = run_model_based(&cfg, &p.plant, &p.cost, &p.initial, None).unwrap();
    assert!(out.failure.is_none());
    assert!(out.converged(1e-6), "final |dg| {:?}", out.final_dg());
    assert!(out.records.iter().all(|r| r.dg <= 0.0));
    let dg: Vec<f64> = out.records.iter().map(|r| r.dg.abs()).collect();
    let transient = dg.iter().position(|&d| d < 1e3).expect("leaves the transient");
    assert!(dg[transient..].windows(2).all(|w| w[1] < w[0]), "{dg:?}");
}

#[test]
fn data_driven_pendubot_descends_and_plateaus() {
    let p = pendubot(Mode::DataDriven);
    let out = run_data_driven(&p.solver, &p.plant, &p.cost, &p.initial, None).unwrap();
    assert!(out.failure.is_none());
    let descents = out.records.iter().filter(|r| r.dg <= 0.0).count();
    assert!(descents as f64 >= 0.95 * out.records.len() as f64);
    assert!(out.records.iter().all(|r| r.kappa_max.unwrap() < p.solver.dither.condition_bound));
    let last = out.final_dg().unwrap().abs();
    assert!(last < 1e-4 * out.records[0].dg.abs());
    assert!(last > p.solver.dg_tol, "never reaches the stopping tolerance");
}

#[test]
#[ignore = "the data-driven plateau on this problem sits near |dg| = 10"]
fn data_driven_pendubot_below_one_tenth_within_ten_iterations() {
    let p = pendubot(Mode::DataDriven);
    let cfg = SolverConfig {
        max_iters: 10,
        ..p.solver.clone()
    };
    let out = run_data_driven(&cfg, &p.plant, &p.cost, &p.initial, None).unwrap();
    assert!(out.records.iter().any(|r| r.dg.abs() < 1e-1));
}

#[test]
fn data_driven_runs_are_deterministic() {
    let p = pendubot(Mode::DataDriven);
    let cfg = SolverConfig {
        max_iters: 5,
        ..p.solver.clone()
    };
    let a = run_data_driven(&cfg, &p.plant, &p.cost, &p.initial, None).unwrap();
    let b = run_data_driven(&cfg, &p.plant, &p.cost, &p.initial, None).unwrap();
    assert_eq!(log_to_csv(&a.records), log_to_csv(&b.records));
    assert_eq!(a.trajectory, b.trajectory);

    let other = SolverConfig {
        dither: ddpronto::identification::DitherConfig {
            seed: 99,
            ..cfg.dither.clone()
        },
        ..cfg.clone()
    };
    let c = run_data_driven(&other, &p.plant, &p.cost, &p.initial, None).unwrap();
    assert_ne!(a.trajectory, c.trajectory);
}

/// `x⁺ = x + u + x²`: harmless at rest, explosive once pushed.
struct Quadratic;

impl ddpronto::PlantOracle for Quadratic {
    fn state_dim(&self) -> usize {
        1
    }
    fn input_dim(&self) -> usize {
        1
    }
    fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        DVector::from_element(1, x[0] + u[0] + x[0] * x[0])
    }
}

impl JacobianOracle for Quadratic {
    fn exact_jacobians(&self, x: &DVector<f64>, _u: &DVector<f64>) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
        Some((DMatrix::from_element(1, 1, 1.0 + 2.0 * x[0]), DMatrix::from_element(1, 1, 1.0)))
    }
}

#[test]
fn divergence_is_reported_with_iteration() {
    let horizon = 10;
    let cost = TrackingCost::new(
        DMatrix::identity(1, 1),
        DMatrix::identity(1, 1) * 1e-3,
        DMatrix::identity(1, 1),
        vec![DVector::from_element(1, 10.0); horizon + 1],
        vec![DVector::zeros(1); horizon],
    )
    .unwrap();
    let initial = rollout_open_loop(&DVector::zeros(1), &vec![DVector::zeros(1); horizon], &Quadratic).unwrap();
    let out = run_model_based(&SolverConfig::model_based(), &Quadratic, &cost, &initial, None).unwrap();
    match out.failure {
        Some(ddpronto::Error::AtIteration { k, source }) => {
            assert_eq!(k, 0);
            assert!(matches!(*source, ddpronto::Error::Divergence { .. }), "{source:?}");
            assert!(out.records.is_empty());
            assert_eq!(out.trajectory, initial);
        }
        other => panic!("{other:?}"),
    }
}
