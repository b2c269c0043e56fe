use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;

use tvls_core::kernels::{car1_kernel, kernel_grid, l2_distance, statespace_kernel, Scale};
use tvls_core::quadrature::UniformGrid;
use tvls_core::spectral::{covariance, spectral_density, transfer_function, SpectralConfig};
use tvls_core::transition::{commutative_transition, ode_transition, peano_baker, transition, MethodChoice, TransitionOptions};
use tvls_core::{CarmaModel, LevyModel, MatrixFunction, ScalarFunction, StateSpaceModel};

fn analytic_family() -> impl Strategy<Value = ScalarFunction> {
    prop_oneof![
        (-3.0..3.0f64).prop_map(ScalarFunction::constant),
        (-3.0..3.0f64, -3.0..3.0f64).prop_map(|(a, b)| ScalarFunction::affine(a, b)),
        (-2.0..2.0f64, -2.0..2.0f64, 0.1..3.0f64, -3.0..3.0f64).prop_map(|(a, b, w, p)| ScalarFunction::sinusoidal(a, b, w, p)),
        (-2.0..2.0f64, -2.0..2.0f64, 0.1..2.0f64, -3.0..3.0f64).prop_map(|(a, b, k, t)| ScalarFunction::logistic(a, b, k, t)),
        prop::collection::vec(-1.0..1.0f64, 1..5).prop_map(ScalarFunction::polynomial),
    ]
}

/// Non-commuting 2x2 family with bounded entries.
fn tv_companion(k: f64) -> MatrixFunction {
    MatrixFunction::from_rows(vec![
        vec![0.0.into(), 1.0.into()],
        vec![ScalarFunction::sinusoidal(-2.0, k, 1.0, 0.0), (-3.0).into()],
    ])
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn analytic_derivative_matches_central_difference(f in analytic_family(), t in -10.0..10.0f64) {
        let h = 1e-6 * t.abs().max(1.0);
        let fd = (f.eval(t + h) - f.eval(t - h)) / (2.0 * h);
        let d = f.derivative(t, 1).unwrap();
        prop_assert!((d - fd).abs() <= 1e-6 * (1.0 + d.abs()), "analytic {d}, fd {fd}");
    }

    #[test]
    fn scalar_statespace_kernel_equals_car1(a0 in 0.2..3.0f64, a1 in -0.15..0.15f64, n in 1u32..50, t in -2.0..2.0f64, u in 0.0..6.0f64) {
        let a = ScalarFunction::sinusoidal(a0, a1, 1.0, 0.0);
        let m = StateSpaceModel::car1(a.clone(), LevyModel::default());
        let k = statespace_kernel(&m, Scale::Finite(n), t, u, MethodChoice::Auto, &TransitionOptions::default()).unwrap();
        let c = car1_kernel(&a, n, t, u).unwrap();
        prop_assert!((k - c).abs() <= 1e-12 * c.max(1e-300) + 1e-14, "{k} vs {c}");
    }

    #[test]
    fn kernels_are_causal(n in 1u32..20, u in -10.0..-1e-9f64) {
        let m = StateSpaceModel::car1(1.0.into(), LevyModel::default());
        prop_assert_eq!(statespace_kernel(&m, Scale::Finite(n), 0.0, u, MethodChoice::Auto, &TransitionOptions::default()).unwrap(), 0.0);
        prop_assert_eq!(statespace_kernel(&m, Scale::Limit, 0.0, u, MethodChoice::Auto, &TransitionOptions::default()).unwrap(), 0.0);
        prop_assert_eq!(car1_kernel(&ScalarFunction::constant(1.0), n, 0.0, u).unwrap(), 0.0);
    }

    #[test]
    fn levy_variance_sum_rule(b in 0.0..3.0f64, r in 0.0..5.0f64, s in 0.0..2.0f64) {
        let l = LevyModel::new(b, r, s).unwrap();
        prop_assert_eq!(l.variance(), b + r * s * s);
        prop_assert_eq!(l.characteristic_exponent(0.0), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn identity_at_equal_times(k in -1.0..1.0f64, s in -5.0..5.0f64) {
        let a = tv_companion(k);
        let id = DMatrix::<f64>::identity(2, 2);
        prop_assert_eq!(peano_baker(&a, s, s, 1e-10, 100).unwrap().value, id.clone());
        prop_assert_eq!(ode_transition(&a, s, s, 8).unwrap().value, id.clone());
        let d = MatrixFunction::constant(&DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -2.0]));
        prop_assert_eq!(commutative_transition(&d, s, s).unwrap().value, id);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn semigroup_for_every_method(k in -1.0..1.0f64, x in 0.0..1.0f64, y in 0.0..1.0f64, z in 0.0..1.0f64) {
        let mut v = [2.0 * x - 1.0, 2.0 * y - 1.0, 2.0 * z - 1.0];
        v.sort_by(f64::total_cmp);
        let [s0, u, s] = v;
        let opts = TransitionOptions::default();
        let a = tv_companion(k);
        let diag = MatrixFunction::new(2, 2, vec![
            ScalarFunction::sinusoidal(-1.0, k, 1.0, 0.0), 0.0.into(), 0.0.into(), (-2.0).into(),
        ]).unwrap();
        let cases: [(&MatrixFunction, MethodChoice); 4] = [
            (&a, MethodChoice::PeanoBaker),
            (&a, MethodChoice::Ode),
            (&diag, MethodChoice::CommutativeExp),
            (&diag, MethodChoice::Auto),
        ];
        for (f, method) in cases {
            let whole = transition(f, s0, s, method, &opts).unwrap();
            let second = transition(f, u, s, method, &opts).unwrap();
            let first = transition(f, s0, u, method, &opts).unwrap();
            let residual = (&whole.value - &second.value * &first.value).norm();
            let bound = 10.0 * (whole.error_estimate + second.error_estimate + first.error_estimate);
            prop_assert!(residual <= bound.max(1e-12), "{method:?}: residual {residual:e}, bound {bound:e}");
        }
    }

    #[test]
    fn l2_distance_is_a_metric(a in 0.5..3.0f64, b in 0.5..3.0f64, c in 0.5..3.0f64) {
        let opts = TransitionOptions::default();
        let g = |x: f64| kernel_grid(&StateSpaceModel::car1(x.into(), LevyModel::default()), Scale::Limit, 0.0, 10.0, 0.01, MethodChoice::Auto, &opts, None).unwrap();
        let (ga, gb, gc) = (g(a), g(b), g(c));
        let dab = l2_distance(&ga, &gb).unwrap();
        prop_assert_eq!(dab, l2_distance(&gb, &ga).unwrap());
        prop_assert!(dab <= l2_distance(&ga, &gc).unwrap() + l2_distance(&gc, &gb).unwrap() + 1e-12);
    }

    #[test]
    fn transfer_function_is_hermitian(a in 0.3..3.0f64, mu in 0.0..20.0f64) {
        let k = kernel_grid(&StateSpaceModel::car1(a.into(), LevyModel::default()), Scale::Limit, 0.0, 20.0, 0.01, MethodChoice::Auto, &TransitionOptions::default(), None).unwrap();
        let v = transfer_function(&k, &[mu, -mu]);
        prop_assert!((v[1] - v[0].conj()).norm() <= 1e-12);
    }

    #[test]
    fn spectral_density_is_nonnegative_and_symmetric(k in -0.8..0.8f64, t in -2.0..2.0f64) {
        let m = StateSpaceModel::new(
            tv_companion(k),
            MatrixFunction::column(vec![1.0.into(), 0.3.into()]).unwrap(),
            MatrixFunction::column(vec![0.0.into(), 1.0.into()]).unwrap(),
            LevyModel::default(),
        ).unwrap();
        let f = spectral_density(&m, t, UniformGrid::symmetric(4.0, 0.5).unwrap(), &SpectralConfig::default()).unwrap();
        let n = f.values.len();
        for i in 0..n {
            prop_assert!(f.values[i] >= -1e-12);
            prop_assert!((f.values[i] - f.values[n - 1 - i]).abs() <= 1e-9);
        }
    }

    #[test]
    fn variance_is_nonnegative(a0 in 0.5..2.0f64, a1 in -0.4..0.4f64, n in 1u32..16, t in -1.0..1.0f64) {
        let m = StateSpaceModel::car1(ScalarFunction::tanh(a0, a1, 1.0, 0.0), LevyModel::default());
        prop_assert!(covariance(&m, n, t, t, &SpectralConfig::default()).unwrap() >= 0.0);
    }

    #[test]
    fn companion_preserves_transfer_function(a1 in -3.0..3.0f64, a2 in -3.0..3.0f64, b0 in -2.0..2.0f64, b1 in -2.0..2.0f64, re in -3.0..3.0f64, im in -3.0..3.0f64) {
        let z = Complex64::new(re, im);
        let m = CarmaModel::new(vec![a1.into(), a2.into()], vec![b0.into(), b1.into()], LevyModel::default()).unwrap().to_state_space();
        let den = z * z + z * a1 + a2;
        prop_assume!(den.norm() > 1e-3);
        let q = z * b1 + b0;
        let a = m.a().evaluate(0.0).map(|x| Complex64::new(x, 0.0));
        let resolvent = (DMatrix::<Complex64>::identity(2, 2) * z - a).try_inverse().unwrap();
        let b = m.b().evaluate(0.0).map(|x| Complex64::new(x, 0.0));
        let c = m.c().evaluate(0.0).map(|x| Complex64::new(x, 0.0));
        let h = (b.transpose() * resolvent * c)[(0, 0)];
        let want = q / den;
        prop_assert!((h - want).norm() <= 1e-10 * want.norm().max(1e-10));
    }
}
