//! Dense linear algebra helpers: matrix exponential, norms, eigen-structure.

use nalgebra::{ComplexField, DMatrix};
use num_complex::Complex64;

/// Padé(13) numerator/denominator coefficients for the exponential.
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

/// Scaling threshold for the degree-13 approximant (1-norm).
const THETA13: f64 = 5.371920351148152;

/// Matrix exponential by scaling and squaring with the Padé(13) approximant.
///
/// Works for real and complex matrices. Panics if `m` is not square.
pub fn matrix_exp<T>(m: &DMatrix<T>) -> DMatrix<T>
where
    T: ComplexField<RealField = f64> + Copy,
{
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "matrix_exp needs a square matrix");
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    if n == 1 {
        return DMatrix::from_element(1, 1, m[(0, 0)].exp());
    }
    let norm = norm_one(m);
    let squarings = if norm > THETA13 {
        (norm / THETA13).log2().ceil().max(0.0) as u32
    } else {
        0
    };
    let scale = T::from_real(0.5f64.powi(squarings as i32));
    let a = m.map(|x| x * scale);

    let b = |k: usize| T::from_real(PADE13[k]);
    let id = DMatrix::<T>::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;

    let u_inner = &a6 * b(13) + &a4 * b(11) + &a2 * b(9);
    let u_outer = &a6 * &u_inner + &a6 * b(7) + &a4 * b(5) + &a2 * b(3) + &id * b(1);
    let u = &a * u_outer;
    let v_inner = &a6 * b(12) + &a4 * b(10) + &a2 * b(8);
    let v = &a6 * &v_inner + &a6 * b(6) + &a4 * b(4) + &a2 * b(2) + &id * b(0);

    let p = &v + &u;
    let q = &v - &u;
    let mut r = q
        .lu()
        .solve(&p)
        .expect("Padé denominator is nonsingular for scaled arguments");
    for _ in 0..squarings {
        r = &r * &r;
    }
    r
}

fn norm_one<T: ComplexField<RealField = f64> + Copy>(m: &DMatrix<T>) -> f64 {
    (0..m.ncols())
        .map(|j| m.column(j).iter().map(|x| x.modulus()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Closed-form exponential of a 2×2 matrix from its eigenvalues `{λ, μ}`:
/// `e^λ((1-λ)I + D)` when they coincide, otherwise
/// `(μe^λ - λe^μ)/(μ-λ)·I + (e^μ - e^λ)/(μ-λ)·D`.
///
/// The confluent branch is taken when `|μ - λ| < 1e-8·(1 + |λ|)`.
pub fn expm_2x2(d: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    assert!(d.nrows() == 2 && d.ncols() == 2, "expm_2x2 needs a 2x2 matrix");
    let tr = d[(0, 0)] + d[(1, 1)];
    let det = d[(0, 0)] * d[(1, 1)] - d[(0, 1)] * d[(1, 0)];
    let disc = (tr * tr - 4.0 * det).sqrt();
    let lam = (tr + disc) * 0.5;
    let mu = (tr - disc) * 0.5;
    let id = DMatrix::<Complex64>::identity(2, 2);
    if (mu - lam).norm() < 1e-8 * (1.0 + lam.norm()) {
        let l = (lam + mu) * 0.5;
        (id * (Complex64::new(1.0, 0.0) - l) + d) * l.exp()
    } else {
        let el = lam.exp();
        let em = mu.exp();
        let c0 = (mu * el - lam * em) / (mu - lam);
        let c1 = (em - el) / (mu - lam);
        id * c0 + d * c1
    }
}

/// Real-input convenience wrapper around [`expm_2x2`].
pub fn expm_2x2_real(d: &DMatrix<f64>) -> DMatrix<f64> {
    let z = d.map(|x| Complex64::new(x, 0.0));
    expm_2x2(&z).map(|c| c.re)
}

pub fn frobenius(m: &DMatrix<f64>) -> f64 {
    m.norm()
}

/// Induced 2-norm (largest singular value).
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .singular_values()
        .iter()
        .copied()
        .fold(0.0, f64::max)
}

pub fn commutator(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a * b - b * a
}

/// Eigenvalues of a real square matrix.
pub fn eigenvalues(m: &DMatrix<f64>) -> Vec<Complex64> {
    if m.nrows() == 1 {
        return vec![Complex64::new(m[(0, 0)], 0.0)];
    }
    m.clone().complex_eigenvalues().iter().copied().collect()
}

pub fn max_real_eigenvalue(m: &DMatrix<f64>) -> f64 {
    eigenvalues(m)
        .into_iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Largest eigenvalue of the symmetric part `M + M'`.
pub fn lambda_max_sym(m: &DMatrix<f64>) -> f64 {
    let s = m + m.transpose();
    s.symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Numerical rank from singular values with threshold `p·σ_max·rel`.
pub fn numerical_rank(singular_values: &[f64], rel: f64) -> usize {
    let smax = singular_values.iter().copied().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    let thresh = singular_values.len() as f64 * smax * rel;
    singular_values.iter().filter(|&&s| s > thresh).count()
}

/// Condition number of an eigenvector basis of `m`, or `f64::INFINITY` if
/// `m` is defective.
///
/// Eigenvalues closer than `1e-6·(1 + |λ|)` are clustered; a cluster of
/// algebraic multiplicity `k` must have a `k`-dimensional null space of
/// `m - λI` for the matrix to be diagonalizable.
pub fn eigenvector_condition(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    if n == 1 {
        return 1.0;
    }
    let eigs = eigenvalues(m);
    let mut clusters: Vec<(Complex64, usize)> = Vec::new();
    for z in eigs {
        if let Some(c) = clusters
            .iter_mut()
            .find(|(c, _)| (*c - z).norm() < 1e-6 * (1.0 + c.norm()))
        {
            c.1 += 1;
        } else {
            clusters.push((z, 1));
        }
    }
    let mc = m.map(|x| Complex64::new(x, 0.0));
    let scale = mc.norm().max(1.0);
    let mut basis: Vec<nalgebra::DVector<Complex64>> = Vec::with_capacity(n);
    for (lam, mult) in clusters {
        let shifted = &mc - DMatrix::<Complex64>::identity(n, n) * lam;
        let svd = shifted.svd(false, true);
        let vt = match svd.v_t {
            Some(v) => v,
            None => return f64::INFINITY,
        };
        // singular values are sorted descending; take the trailing `mult`
        let sv = &svd.singular_values;
        let tol = 1e-7 * scale;
        let null_dim = sv.iter().filter(|&&s| s <= tol).count();
        if null_dim < mult {
            return f64::INFINITY;
        }
        for r in (n - mult)..n {
            basis.push(vt.row(r).adjoint().into_owned());
        }
    }
    if basis.len() != n {
        return f64::INFINITY;
    }
    let v = DMatrix::from_columns(&basis);
    let s = v.singular_values();
    let smax = s.iter().copied().fold(0.0, f64::max);
    let smin = s.iter().copied().fold(f64::INFINITY, f64::min);
    if smin <= 0.0 {
        f64::INFINITY
    } else {
        smax / smin
    }
}
