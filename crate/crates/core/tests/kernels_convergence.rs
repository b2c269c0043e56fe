use nalgebra::DMatrix;

use tvls_core::kernels::{car1_kernel, convergence_diagnostic, kernel_grid, l2_distance, statespace_kernel, KernelGrid, Scale};
use tvls_core::stability::certify;
use tvls_core::transition::{MethodChoice, TransitionOptions};
use tvls_core::{CarmaModel, Error, LevyModel, MatrixFunction, ScalarFunction, StateSpaceModel};

fn opts() -> TransitionOptions {
    TransitionOptions::default()
}

fn grid(m: &StateSpaceModel, scale: Scale, t: f64, u_max: f64, du: f64) -> KernelGrid {
    kernel_grid(m, scale, t, u_max, du, MethodChoice::Auto, &opts(), None).unwrap()
}

fn constant_pair() -> (StateSpaceModel, StateSpaceModel) {
    let diag = StateSpaceModel::constant(&DMatrix::from_row_slice(2, 2, &[-2.0, 0.0, 0.0, -3.0]), &[1.0, 1.0], &[1.0, 1.0], LevyModel::default()).unwrap();
    let comp = CarmaModel::new(vec![5.0.into(), 6.0.into()], vec![5.0.into(), 2.0.into()], LevyModel::default()).unwrap().to_state_space();
    (diag, comp)
}

#[test]
fn constant_systems_give_the_sum_of_exponentials() {
    let (diag, comp) = constant_pair();
    let want = |u: f64| (-2.0 * u).exp() + (-3.0 * u).exp();
    for m in [&diag, &comp] {
        for scale in [Scale::Finite(3), Scale::Limit] {
            let v = statespace_kernel(m, scale, 0.0, 1.0, MethodChoice::Auto, &opts()).unwrap();
            assert!((v - want(1.0)).abs() < 1e-10, "{scale}: {v}");
            let g = grid(m, scale, 5.0, 8.0, 0.01);
            for (u, v) in g.lags().zip(&g.values) {
                assert!((v - want(u)).abs() < 1e-9, "{scale} u = {u}: {v}");
            }
        }
    }
    // u = 0 gives B'C
    assert!((statespace_kernel(&comp, Scale::Finite(2), 0.0, 0.0, MethodChoice::Auto, &opts()).unwrap() - 2.0).abs() < 1e-15);
}

#[test]
fn zero_input_gives_a_zero_grid() {
    let m = StateSpaceModel::constant(&DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -2.0]), &[1.0, 1.0], &[0.0, 0.0], LevyModel::default()).unwrap();
    for scale in [Scale::Finite(4), Scale::Limit] {
        assert!(grid(&m, scale, 0.0, 5.0, 0.05).values.iter().all(|v| *v == 0.0));
    }
}

#[test]
fn ou_grid_norm_and_distance_closed_forms() {
    let one = StateSpaceModel::car1(1.0.into(), LevyModel::default());
    let two = StateSpaceModel::car1(2.0.into(), LevyModel::default());
    let g1 = grid(&one, Scale::Limit, 0.0, 20.0, 0.01);
    assert!((g1.l2_norm_sq() - 0.5).abs() < 1e-3);
    let (a, b) = (grid(&one, Scale::Limit, 0.0, 20.0, 0.005), grid(&two, Scale::Limit, 0.0, 20.0, 0.005));
    // ∫(e^{-u} - e^{-2u})² = 1/2 - 2/3 + 1/4
    assert!((l2_distance(&a, &b).unwrap() - (1.0f64 / 12.0).sqrt()).abs() < 1e-4);
    assert_eq!(l2_distance(&a, &a).unwrap(), 0.0);
    assert!((l2_distance(&a.scaled(2.0), &a).unwrap() - a.l2_norm()).abs() < 1e-14);
    assert!(matches!(l2_distance(&a, &g1), Err(Error::GridMismatch(_))));
}

#[test]
fn finite_n_grid_matches_pointwise_kernels() {
    let a = ScalarFunction::tanh(1.5, 0.5, 1.0, 0.0);
    let m = StateSpaceModel::car1(a.clone(), LevyModel::default());
    let g = grid(&m, Scale::Finite(4), 0.0, 12.0, 0.01);
    for (k, u) in g.lags().enumerate().step_by(97) {
        let direct = car1_kernel(&a, 4, 0.0, u).unwrap();
        assert!((g.values[k] - direct).abs() < 1e-8 * direct.max(1e-12) + 1e-14, "u = {u}");
    }
}

#[test]
fn tv_car1_distances_decrease_strictly() {
    let m = StateSpaceModel::car1(ScalarFunction::tanh(1.5, 0.5, 1.0, 0.0), LevyModel::default());
    let ns: Vec<u32> = (0..9).map(|k| 1 << k).collect();
    let r = convergence_diagnostic(&m, 0.0, &ns, 25.0, 0.01, MethodChoice::Auto, &opts()).unwrap();
    assert!(r.preconditions.verified, "{:?}", r.preconditions.checks);
    assert!(r.passes);
    for w in r.rows.windows(2) {
        assert!(w[1].distance < w[0].distance, "{:?}", r.rows);
    }
}

#[test]
fn constant_model_distances_vanish() {
    let (_, comp) = constant_pair();
    let r = convergence_diagnostic(&comp, 1.0, &[1, 3, 10], 15.0, 0.01, MethodChoice::Auto, &opts()).unwrap();
    assert!(r.rows.iter().all(|row| row.distance < 1e-9), "{:?}", r.rows);
    assert!(r.passes);
    assert!(r.preconditions.verified);
}

#[test]
fn negative_rate_is_reported_as_unverified() {
    let m = StateSpaceModel::car1((-1.0).into(), LevyModel::default());
    let r = convergence_diagnostic(&m, 0.0, &[1, 2, 4], 2.0, 0.05, MethodChoice::Auto, &opts()).unwrap();
    assert!(!r.preconditions.verified);
    assert_eq!(r.preconditions.label, "unverified-preconditions");
}

#[test]
fn certified_grids_obey_the_exponential_envelope() {
    let a = MatrixFunction::from_rows(vec![
        vec![ScalarFunction::sinusoidal(-2.0, 0.3, 1.0, 0.0), 0.4.into()],
        vec![(-0.4).into(), (-1.5).into()],
    ])
    .unwrap();
    let b = [1.0, -0.5];
    let c = [0.3, 1.0];
    let m = StateSpaceModel::new(
        a.clone(),
        MatrixFunction::column(b.iter().map(|x| (*x).into()).collect()).unwrap(),
        MatrixFunction::column(c.iter().map(|x| (*x).into()).collect()).unwrap(),
        LevyModel::default(),
    )
    .unwrap();
    let (n, t, u_max) = (4u32, 0.0, 20.0);
    let cert = certify(&a, (t - u_max / n as f64 - 1.0, t + 1.0), &[n]).unwrap().expect("stable family");
    let g = kernel_grid(&m, Scale::Finite(n), t, u_max, 0.01, MethodChoice::Auto, &opts(), Some(&cert)).unwrap();
    let tail = g.tail_bound.expect("certificate attached");
    let b_norm = (b[0] * b[0] + b[1] * b[1]) as f64;
    let c_sup = (c[0] * c[0] + c[1] * c[1]) as f64;
    let bound = cert.gamma * b_norm.sqrt() * c_sup.sqrt() / (2.0 * cert.lambda).sqrt() + tail;
    assert!(g.l2_norm() <= bound, "{} > {bound}", g.l2_norm());
    // pointwise envelope |g(u)| ≤ ‖B‖·γe^{-λu}·‖C‖
    for (u, v) in g.lags().zip(&g.values) {
        assert!(v.abs() <= 1.05 * b_norm.sqrt() * cert.bound(u) * c_sup.sqrt() + 1e-12, "u = {u}");
    }
}

#[test]
fn finite_and_limit_kernels_coincide_for_constant_coefficients() {
    let m = StateSpaceModel::constant(&DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -2.0, -3.0]), &[1.0, 0.5], &[0.0, 1.0], LevyModel::default()).unwrap();
    for n in [1u32, 7, 50] {
        for method in [MethodChoice::PeanoBaker, MethodChoice::Ode, MethodChoice::Auto] {
            for u in [0.0, 0.3, 2.0, 6.5] {
                let f = statespace_kernel(&m, Scale::Finite(n), 0.0, u, method, &opts()).unwrap();
                let l = statespace_kernel(&m, Scale::Limit, 0.0, u, method, &opts()).unwrap();
                assert!((f - l).abs() < 1e-8, "N = {n}, {method:?}, u = {u}");
            }
        }
    }
}

#[test]
fn discontinuous_rate_is_rejected_by_the_scalar_kernel() {
    assert!(matches!(car1_kernel(&ScalarFunction::step(0.0, 1.0, 2.0), 1, 0.0, 1.0), Err(Error::NotContinuous(_))));
}
