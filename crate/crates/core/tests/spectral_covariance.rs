use std::f64::consts::PI;

use nalgebra::DMatrix;

use tvls_core::kernels::{kernel_grid, Scale};
use tvls_core::quadrature::UniformGrid;
use tvls_core::spectral::{covariance, plancherel_check, spectral_density, transfer_function, wigner_ville, wv_convergence, SpectralConfig, WignerConfig};
use tvls_core::transition::{MethodChoice, TransitionOptions};
use tvls_core::{LevyModel, MatrixFunction, ScalarFunction, StateSpaceModel};

fn ou(a: f64, sigma: f64) -> StateSpaceModel {
    StateSpaceModel::car1(a.into(), LevyModel::brownian(sigma))
}

fn tv_car1() -> StateSpaceModel {
    StateSpaceModel::car1(ScalarFunction::tanh(1.5, 0.5, 1.0, 0.0), LevyModel::default())
}

fn two_dim_constant(c: [f64; 2]) -> StateSpaceModel {
    StateSpaceModel::constant(&DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -2.0, -3.0]), &[1.0, 0.5], &c, LevyModel::default()).unwrap()
}

#[test]
fn transfer_function_of_one_sided_exponential() {
    let k = kernel_grid(&ou(1.0, 1.0), Scale::Limit, 0.0, 25.0, 0.005, MethodChoice::Auto, &TransitionOptions::default(), None).unwrap();
    let a = transfer_function(&k, &[0.0, 1.0]);
    assert!((a[0].re - 1.0).abs() < 1e-4 && a[0].im.abs() < 1e-12);
    assert!((a[1].re - 0.5).abs() < 1e-4 && (a[1].im + 0.5).abs() < 1e-4);
    let zero = kernel_grid(&two_dim_constant([0.0, 0.0]), Scale::Limit, 0.0, 5.0, 0.01, MethodChoice::Auto, &TransitionOptions::default(), None).unwrap();
    assert!(transfer_function(&zero, &[0.0, 2.0]).iter().all(|z| z.norm() == 0.0));
}

#[test]
fn ou_spectral_density_and_its_scaling() {
    let grid = UniformGrid::symmetric(3.0, 1.0).unwrap();
    let f1 = spectral_density(&ou(1.0, 1.0), 0.0, grid, &SpectralConfig::default()).unwrap();
    let f2 = spectral_density(&ou(1.0, 2.0), 0.0, grid, &SpectralConfig::default()).unwrap();
    for (lam, v) in f1.lambdas().into_iter().zip(&f1.values) {
        assert!((v - 1.0 / (2.0 * PI * (1.0 + lam * lam))).abs() < 1e-6, "λ = {lam}");
    }
    for (a, b) in f1.values.iter().zip(&f2.values) {
        assert!((b - 2.0 * a).abs() <= 1e-12 * b.abs());
    }
}

#[test]
fn ou_covariances_and_zero_input() {
    let cfg = SpectralConfig::default();
    let m = ou(1.0, 1.0);
    assert!((covariance(&m, 1, 0.0, 0.0, &cfg).unwrap() - 0.5).abs() < 1e-4);
    for (n, lag) in [(1u32, 0.5), (4, 0.25), (10, 0.2)] {
        let h = n as f64 * lag;
        let c = covariance(&m, n, 1.0 + lag, 1.0, &cfg).unwrap();
        assert!((c - (-h).exp() / 2.0).abs() < 1e-4, "N = {n}: {c}");
        assert_eq!(c, covariance(&m, n, 1.0, 1.0 + lag, &cfg).unwrap());
    }
    assert_eq!(covariance(&two_dim_constant([0.0, 0.0]), 3, 0.2, 0.0, &cfg).unwrap(), 0.0);
}

#[test]
fn wigner_ville_of_stationary_models() {
    let cfg = SpectralConfig::default();
    let wv = WignerConfig { s_max: Some(30.0), ..Default::default() };
    let grid = UniformGrid::from_range(0.0, 1.0, 1.0).unwrap();
    for n in [1u32, 5] {
        let f = wigner_ville(&ou(1.0, 1.0), n, 0.0, grid, &wv, &cfg).unwrap();
        assert!((f.values[0] - 1.0 / (2.0 * PI)).abs() < 2e-3);
        assert!((f.values[1] - 1.0 / (4.0 * PI)).abs() < 2e-3);
    }
    let zero = wigner_ville(&two_dim_constant([0.0, 0.0]), 2, 0.0, grid, &wv, &cfg).unwrap();
    assert!(zero.values.iter().all(|v| *v == 0.0));
}

#[test]
fn wigner_ville_collapses_to_the_density_for_constant_coefficients() {
    let m = two_dim_constant([0.0, 1.0]);
    let cfg = SpectralConfig::default();
    let grid = UniformGrid::symmetric(5.0, 0.05).unwrap();
    let f = spectral_density(&m, 0.0, grid, &cfg).unwrap();
    let fw = wigner_ville(&m, 3, 0.0, grid, &WignerConfig::default(), &cfg).unwrap();
    let sup = f.values.iter().zip(&fw.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(sup < 5e-3, "sup distance {sup}");

    let r = wv_convergence(&m, 0.0, UniformGrid::symmetric(5.0, 0.1).unwrap(), &[1, 2, 8], &WignerConfig::default(), &cfg).unwrap();
    assert!(r.rows.iter().all(|row| row.distance < 5e-3), "{:?}", r.rows);
}

#[test]
fn tv_car1_wigner_distances_decrease() {
    let r = wv_convergence(&tv_car1(), 0.0, UniformGrid::symmetric(5.0, 0.1).unwrap(), &[2, 4, 8, 16, 32, 64], &WignerConfig::default(), &SpectralConfig::default()).unwrap();
    assert!(r.passes, "{:?}", r.rows);
    for w in r.rows.windows(2) {
        assert!(w[1].distance < w[0].distance, "{:?}", r.rows);
    }
    assert!(!r.verified.is_empty());
    assert!(!r.assumed.is_empty());
}

#[test]
fn covariances_across_a_fixed_gap_decorrelate() {
    let m = tv_car1();
    let coarse = SpectralConfig::default();
    let fine = SpectralConfig { du: coarse.du / 4.0, ..Default::default() };
    let mut prev = f64::INFINITY;
    for n in [1u32, 2, 4, 8, 16, 32, 64, 128] {
        let c = covariance(&m, n, 0.5, -0.5, &coarse).unwrap();
        let oracle = covariance(&m, n, 0.5, -0.5, &fine).unwrap();
        assert!((c - oracle).abs() <= 1e-4 * oracle.abs(), "N = {n}: {c} vs {oracle}");
        assert!(c.abs() < prev, "N = {n}");
        prev = c.abs();
    }
    assert!(prev < 1e-30);
}

#[test]
fn plancherel_holds_for_a_time_varying_kernel() {
    let a = MatrixFunction::from_rows(vec![
        vec![0.0.into(), 1.0.into()],
        vec![ScalarFunction::sinusoidal(-2.0, 0.5, 1.0, 0.0), (-3.0).into()],
    ])
    .unwrap();
    let m = StateSpaceModel::new(
        a,
        MatrixFunction::column(vec![1.0.into(), 0.2.into()]).unwrap(),
        MatrixFunction::column(vec![0.0.into(), 1.0.into()]).unwrap(),
        LevyModel::default(),
    )
    .unwrap();
    let k = kernel_grid(&m, Scale::Finite(4), 0.5, 30.0, 0.005, MethodChoice::Auto, &TransitionOptions::default(), None).unwrap();
    let r = plancherel_check(&k, 200.0, 0.02).unwrap();
    assert!(r.rel_err < 0.01, "{r:?}");
}
