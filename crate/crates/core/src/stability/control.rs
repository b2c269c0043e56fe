//! Controllability matrices and the transformation of a controllable
//! state-space system to CARMA (companion) form.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use crate::function::MatrixFunction;
use crate::linalg::{eigenvalues, numerical_rank};
use crate::model::StateSpaceModel;
use crate::{Error, Result};

fn binom(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn jets(f: &MatrixFunction, t: f64, max_order: usize) -> Result<Vec<DMatrix<f64>>> {
    (0..=max_order).map(|k| f.derivative_of_order(t, k)).collect()
}

fn require_smooth(m: &StateSpaceModel) -> Result<()> {
    if !m.a().is_continuous() || !m.c().is_continuous() {
        return Err(Error::NotContinuous(
            "controllability needs (p-1)-times differentiable A and p-times differentiable C; step coefficients are excluded"
                .into(),
        ));
    }
    Ok(())
}

/// Derivatives `W^{(0)}, .., W^{(r)}` of `W_p(t) = [K_0 .. K_{p-1}]` with
/// `K_0 = C`, `K_{i+1} = -A K_i + K_i'`. Jets are propagated by Leibniz'
/// rule: `K_{i+1}^{(j)} = -Σ_l binom(j,l) A^{(l)} K_i^{(j-l)} + K_i^{(j+1)}`.
fn controllability_jets(m: &StateSpaceModel, t: f64, r: usize) -> Result<Vec<DMatrix<f64>>> {
    require_smooth(m)?;
    let p = m.dim();
    let top = p - 1 + r;
    let a = jets(m.a(), t, top.saturating_sub(1))?;
    let mut k: Vec<DMatrix<f64>> = jets(m.c(), t, top)?;
    let mut w = vec![DMatrix::zeros(p, p); r + 1];
    for (j, wj) in w.iter_mut().enumerate() {
        wj.set_column(0, &k[j].column(0));
    }
    for i in 1..p {
        let order = top - i;
        let mut next = Vec::with_capacity(order + 1);
        for j in 0..=order {
            let mut v = k[j + 1].clone();
            for l in 0..=j {
                v -= &a[l] * &k[j - l] * binom(j, l);
            }
            next.push(v);
        }
        k = next;
        for (j, wj) in w.iter_mut().enumerate() {
            wj.set_column(i, &k[j].column(0));
        }
    }
    Ok(w)
}

/// `W_p(t) = [K_0(t) .. K_{p-1}(t)]` from analytic derivatives of the
/// coefficient families.
pub fn controllability_matrix(m: &StateSpaceModel, t: f64) -> Result<DMatrix<f64>> {
    Ok(controllability_jets(m, t, 0)?.swap_remove(0))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ControllabilityReport {
    pub t_grid: Vec<f64>,
    pub ranks: Vec<usize>,
    pub min_singular_values: Vec<f64>,
    /// Full rank at every grid point (a grid proxy for "all t").
    pub instantaneous: bool,
}

/// Ranks of `W_p(t)` on a grid, threshold `p·σ_max·1e-10`.
pub fn instantaneous_controllability(m: &StateSpaceModel, t_grid: &[f64]) -> Result<ControllabilityReport> {
    let p = m.dim();
    let mut ranks = Vec::with_capacity(t_grid.len());
    let mut mins = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let w = controllability_matrix(m, t)?;
        let sv: Vec<f64> = w.singular_values().iter().copied().collect();
        ranks.push(numerical_rank(&sv, 1e-10));
        mins.push(sv.iter().copied().fold(f64::INFINITY, f64::min));
    }
    Ok(ControllabilityReport {
        t_grid: t_grid.to_vec(),
        instantaneous: !t_grid.is_empty() && ranks.iter().all(|r| *r == p),
        ranks,
        min_singular_values: mins,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CarmaTransform {
    pub t: f64,
    #[serde(rename = "T", serialize_with = "crate::serde_util::matrix_rows")]
    pub transform: DMatrix<f64>,
    #[serde(serialize_with = "crate::serde_util::matrix_rows")]
    pub carma_a: DMatrix<f64>,
    #[serde(serialize_with = "crate::serde_util::vector")]
    pub carma_b: DVector<f64>,
    #[serde(serialize_with = "crate::serde_util::vector")]
    pub carma_c: DVector<f64>,
    /// AR coefficients `a_1..a_p` read off the companion last row.
    pub ar: Vec<f64>,
    /// Largest off-companion entry before projection.
    pub companion_residual: f64,
    /// `‖T C - e_p‖`.
    pub tc_error: f64,
}

impl CarmaTransform {
    /// The frozen companion system as a constant-coefficient model.
    pub fn frozen_model(&self, levy: crate::LevyModel) -> Result<StateSpaceModel> {
        StateSpaceModel::constant(&self.carma_a, self.carma_b.as_slice(), self.carma_c.as_slice(), levy)
    }
}

/// Transformation `T(t)` taking an instantaneously controllable system to
/// companion form: `𝒜 = (TA + T')T^{-1}`, `𝒞 = TC = e_p`, `ℬ = T^{-T}B`.
///
/// The first row is `t_1 = (-1)^{p-1} e_p' W_p^{-1}`, the others follow from
/// `t_{i+1} = t_i A + t_i'`; this makes `t_i K_j` constant for `i + j ≤ p`,
/// which forces `TC = e_p` and the companion shape. Equivalently
/// `T = 𝒲_p W_p^{-1}` with `𝒲_p = T W_p` the controllability matrix of the
/// companion system. Derivatives are propagated analytically, so `A` needs
/// `2p - 2` and `C` `2p - 1` derivatives.
pub fn carma_transform(m: &StateSpaceModel, t: f64) -> Result<CarmaTransform> {
    let p = m.dim();
    let w = controllability_jets(m, t, p)?;
    let sv: Vec<f64> = w[0].singular_values().iter().copied().collect();
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if !(smin > p as f64 * smax * 1e-10) {
        return Err(Error::SingularControllability {
            t,
            min_singular_value: smin,
        });
    }
    let w_inv = w[0].clone().try_inverse().ok_or(Error::SingularControllability {
        t,
        min_singular_value: smin,
    })?;
    // jets of W^{-1}: X^{(k)} = -W^{-1} Σ_{l=1..k} binom(k,l) W^{(l)} X^{(k-l)}
    let mut x: Vec<DMatrix<f64>> = vec![w_inv.clone()];
    for k in 1..=p {
        let mut acc = DMatrix::zeros(p, p);
        for l in 1..=k {
            acc += &w[l] * &x[k - l] * binom(k, l);
        }
        x.push(-(&w_inv * acc));
    }
    let sign = if p % 2 == 1 { 1.0 } else { -1.0 };
    let a = jets(m.a(), t, p)?;
    // row jets: rows[i][k] = t_{i+1}^{(k)}
    let mut row: Vec<DMatrix<f64>> = x.iter().map(|xk| xk.rows(p - 1, 1).into_owned() * sign).collect();
    let mut rows: Vec<Vec<DMatrix<f64>>> = Vec::with_capacity(p + 1);
    rows.push(row.clone());
    for _ in 1..=p {
        let order = row.len() - 2;
        let mut next = Vec::with_capacity(order + 1);
        for k in 0..=order {
            let mut v = row[k + 1].clone();
            for l in 0..=k {
                v += &row[l] * &a[k - l] * binom(k, l);
            }
            next.push(v);
        }
        row = next;
        rows.push(row.clone());
    }
    let mut tm = DMatrix::zeros(p, p);
    for i in 0..p {
        tm.set_row(i, &rows[i][0].row(0));
    }
    let t_inv = tm.clone().try_inverse().ok_or_else(|| Error::Postcondition("transformation T(t) is singular".into()))?;
    // (TA + T') has rows t_{i+1}; the last one is rows[p]
    let mut lhs = DMatrix::zeros(p, p);
    for i in 0..p {
        lhs.set_row(i, &rows[i + 1][0].row(0));
    }
    let raw = &lhs * &t_inv;
    let mut residual: f64 = 0.0;
    let mut carma_a = DMatrix::zeros(p, p);
    for i in 0..p {
        for j in 0..p {
            if i + 1 == p {
                carma_a[(i, j)] = raw[(i, j)];
            } else {
                let want = if j == i + 1 { 1.0 } else { 0.0 };
                residual = residual.max((raw[(i, j)] - want).abs());
                carma_a[(i, j)] = want;
            }
        }
    }
    let scale = raw.amax().max(1.0);
    if residual > 1e-6 * scale {
        return Err(Error::Postcondition(format!(
            "transformed matrix is not in companion form (off-companion residual {residual:e})"
        )));
    }
    let c = m.c().evaluate(t);
    let carma_c = (&tm * &c).column(0).into_owned();
    let mut e_p = DVector::zeros(p);
    e_p[p - 1] = 1.0;
    let tc_error = (&carma_c - &e_p).norm();
    if tc_error > 1e-8 {
        return Err(Error::Postcondition(format!("T(t)C(t) differs from e_p by {tc_error:e}")));
    }
    let b = m.b().evaluate(t);
    let carma_b = (t_inv.transpose() * b).column(0).into_owned();
    let ar = (0..p).map(|k| -carma_a[(p - 1, p - 1 - k)]).collect();
    Ok(CarmaTransform {
        t,
        transform: tm,
        carma_a,
        carma_b,
        carma_c: e_p,
        ar,
        companion_residual: residual,
        tc_error,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquivalenceReport {
    pub t: f64,
    pub max_rel_err: f64,
    pub equivalent: bool,
    pub evaluated: usize,
    pub skipped: Vec<String>,
    /// `(Re z, Im z, Re H1, Im H1, Re H2, Im H2)` per evaluated sample.
    pub values: Vec<[f64; 6]>,
}

fn resolvent(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>, z: Complex64) -> Option<Complex64> {
    let p = a.nrows();
    let m = DMatrix::<Complex64>::identity(p, p) * z - a.map(|x| Complex64::new(x, 0.0));
    let rhs = c.map(|x| Complex64::new(x, 0.0));
    let sol = m.lu().solve(&rhs)?;
    Some((0..p).map(|i| sol[(i, 0)] * b[(i, 0)]).sum())
}

/// Compares the frozen transfer functions `B'(zI - A)^{-1}C` of two models
/// at time `t`. Samples within `1e-6` of either spectrum are skipped;
/// equivalent iff the maximal relative error is below `1e-8`.
pub fn transfer_equivalence(m1: &StateSpaceModel, m2: &StateSpaceModel, t: f64, z_samples: &[Complex64]) -> Result<EquivalenceReport> {
    let (a1, b1, c1) = (m1.a().evaluate(t), m1.b().evaluate(t), m1.c().evaluate(t));
    let (a2, b2, c2) = (m2.a().evaluate(t), m2.b().evaluate(t), m2.c().evaluate(t));
    let spec: Vec<Complex64> = eigenvalues(&a1).into_iter().chain(eigenvalues(&a2)).collect();
    let mut max_rel: f64 = 0.0;
    let mut skipped = Vec::new();
    let mut values = Vec::new();
    for &z in z_samples {
        let dist = spec.iter().map(|e| (z - e).norm()).fold(f64::INFINITY, f64::min);
        if dist <= 1e-6 {
            skipped.push(format!("z = {z} lies within {dist:.1e} of an eigenvalue"));
            continue;
        }
        match (resolvent(&a1, &b1, &c1, z), resolvent(&a2, &b2, &c2, z)) {
            (Some(h1), Some(h2)) => {
                let scale = h1.norm().max(h2.norm());
                let rel = if scale == 0.0 { 0.0 } else { (h1 - h2).norm() / scale };
                max_rel = max_rel.max(rel);
                values.push([z.re, z.im, h1.re, h1.im, h2.re, h2.im]);
            }
            _ => skipped.push(format!("z = {z}: resolvent is numerically singular")),
        }
    }
    if values.is_empty() {
        return Err(Error::param("z_samples", "no usable sample points off both spectra"));
    }
    Ok(EquivalenceReport {
        t,
        max_rel_err: max_rel,
        equivalent: max_rel < 1e-8,
        evaluated: values.len(),
        skipped,
        values,
    })
}

/// `n` fixed sample points spread over the complex plane, starting at 0.
pub fn default_z_samples(n: usize) -> Vec<Complex64> {
    (0..n)
        .map(|k| {
            if k == 0 {
                Complex64::new(0.0, 0.0)
            } else {
                let r = 0.4 * k as f64;
                let phi = 2.399963 * k as f64;
                Complex64::from_polar(r, phi)
            }
        })
        .collect()
}
