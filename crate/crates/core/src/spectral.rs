//! Transfer functions, time-varying spectral densities, model covariances
//! and the Wigner–Ville spectrum of the rescaled processes.
//!
//! All Fourier integrals are direct trapezoid sums on uniform grids, so the
//! lag grid and the frequency grid can be chosen independently.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::kernels::{kernel_grid, KernelGrid, Scale};
use crate::model::StateSpaceModel;
use crate::quadrature::{trapezoid, trapezoid_weight, UniformGrid};
use crate::stability::{certify, StabilityCertificate};
use crate::transition::{MethodChoice, TransitionOptions};
use crate::{Error, Result};

/// Lag grid and truncation settings shared by the spectral operations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpectralConfig {
    /// Lag truncation; `None` derives it from a stability certificate so
    /// that the bound on `∫_U^∞ |g|²` is below `1e-16` (roughly `1e-8` for
    /// `∫_U^∞ |g|`, which controls the transfer function).
    pub u_max: Option<f64>,
    pub du: f64,
    pub method: MethodChoice,
    pub transition: TransitionOptions,
    /// Certificate to size truncations; computed on demand when absent.
    pub certificate: Option<StabilityCertificate>,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        Self {
            u_max: None,
            du: 0.005,
            method: MethodChoice::Auto,
            transition: TransitionOptions::default(),
            certificate: None,
        }
    }
}

/// Fast-time look-back used when searching for a certificate.
const LOOKBACK: f64 = 60.0;

fn scale_factor(n: Scale) -> f64 {
    match n {
        Scale::Finite(n) => n as f64,
        Scale::Limit => f64::INFINITY,
    }
}

/// Certificate for the transition family seen from anchors in `[lo, hi]`
/// at scale `n`, searched on `[lo - LOOKBACK/N, hi]`.
pub fn certificate_for(m: &StateSpaceModel, n: Scale, lo: f64, hi: f64) -> Result<StabilityCertificate> {
    let nf = scale_factor(n);
    let window = if nf.is_finite() {
        (lo - LOOKBACK / nf, hi.max(lo + 1e-9))
    } else {
        (lo - 1e-3, hi + 1e-3)
    };
    let n_list: Vec<u32> = match n {
        Scale::Finite(k) => vec![k],
        Scale::Limit => vec![1],
    };
    certify(m.a(), window, &n_list)?.ok_or_else(|| {
        Error::MissingCertificate(format!(
            "no exponential-stability certificate found for A on [{:.4}, {:.4}]; pass an explicit lag truncation",
            window.0, window.1
        ))
    })
}

impl SpectralConfig {
    fn certificate(&self, m: &StateSpaceModel, n: Scale, lo: f64, hi: f64) -> Result<StabilityCertificate> {
        match &self.certificate {
            Some(c) => Ok(c.clone()),
            None => certificate_for(m, n, lo, hi),
        }
    }

    /// `U_max` for kernels anchored in `[lo, hi]`.
    pub fn resolve_u_max(&self, m: &StateSpaceModel, n: Scale, lo: f64, hi: f64) -> Result<f64> {
        if let Some(u) = self.u_max {
            if !(u > 0.0) || !u.is_finite() {
                return Err(Error::InvalidGrid(format!("U_max must be > 0, got {u}")));
            }
            return Ok(u);
        }
        Ok(self.certificate(m, n, lo, hi)?.lag_cutoff(1e-16))
    }

    fn kernel(&self, m: &StateSpaceModel, n: Scale, t: f64, u_max: f64, du: f64) -> Result<KernelGrid> {
        kernel_grid(m, n, t, u_max, du, self.method, &self.transition, None)
    }
}

/// `A(μ) = ∫ e^{-iμu} g(u) du` by the trapezoid rule on the kernel grid.
pub fn transfer_function(k: &KernelGrid, lambda: &[f64]) -> Vec<Complex64> {
    let n = k.values.len();
    let weighted: Vec<(f64, f64)> = k
        .values
        .iter()
        .enumerate()
        .map(|(j, g)| (j as f64 * k.du, trapezoid_weight(j, n, k.du) * g))
        .collect();
    crate::par::map(lambda, |&mu| {
        let (mut re, mut im) = (0.0, 0.0);
        for &(u, wg) in &weighted {
            let (s, c) = (mu * u).sin_cos();
            re += wg * c;
            im -= wg * s;
        }
        Complex64::new(re, im)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumKind {
    SpectralDensity,
    WignerVille,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumGrid {
    pub t: f64,
    pub lambda_grid: UniformGrid,
    pub values: Vec<f64>,
    pub kind: SpectrumKind,
    #[serde(rename = "N", skip_serializing_if = "Option::is_none")]
    pub n: Option<u32>,
    pub warnings: Vec<String>,
}

impl SpectrumGrid {
    pub fn lambdas(&self) -> Vec<f64> {
        self.lambda_grid.to_vec()
    }

    /// Trapezoid L² distance to another spectrum on the same grid.
    pub fn l2_distance(&self, other: &SpectrumGrid) -> Result<f64> {
        if self.lambda_grid.len != other.lambda_grid.len
            || (self.lambda_grid.step - other.lambda_grid.step).abs() > 1e-12
            || (self.lambda_grid.start - other.lambda_grid.start).abs() > 1e-9
        {
            return Err(Error::GridMismatch("spectra live on different frequency grids".into()));
        }
        let sq: Vec<f64> = self.values.iter().zip(&other.values).map(|(a, b)| (a - b).powi(2)).collect();
        Ok(trapezoid(&sq, self.lambda_grid.step).sqrt())
    }

    pub fn sup_distance(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.lambda_grid
            .points()
            .zip(&self.values)
            .map(|(l, v)| (v - f(l)).abs())
            .fold(0.0, f64::max)
    }
}

/// `f(t, λ) = Σ_L/(2π)·|A(t, λ)|²` from the frozen-coefficient kernel.
pub fn spectral_density(m: &StateSpaceModel, t: f64, lambda: UniformGrid, cfg: &SpectralConfig) -> Result<SpectrumGrid> {
    let sigma = m.levy().variance();
    let u_max = cfg.resolve_u_max(m, Scale::Limit, t, t)?;
    let k = cfg.kernel(m, Scale::Limit, t, u_max, cfg.du)?;
    let a = transfer_function(&k, &lambda.to_vec());
    Ok(SpectrumGrid {
        t,
        lambda_grid: lambda,
        values: a.iter().map(|z| sigma / (2.0 * PI) * z.norm_sqr()).collect(),
        kind: SpectrumKind::SpectralDensity,
        n: None,
        warnings: k.warnings,
    })
}

/// `Cov(Y_N(t1), Y_N(t2)) = Σ_L ∫_0^{U} g_N(t1, v + h) g_N(t2, v) dv` with
/// `h = N(t1 - t2)` (arguments are swapped when `t1 < t2`).
///
/// The lag step is shrunk so that `h` is a whole number of steps.
pub fn covariance(m: &StateSpaceModel, n: u32, t1: f64, t2: f64, cfg: &SpectralConfig) -> Result<f64> {
    let (t1, t2) = if t1 >= t2 { (t1, t2) } else { (t2, t1) };
    if n == 0 {
        return Err(Error::param("N", "must be >= 1"));
    }
    let u_max = cfg.resolve_u_max(m, Scale::Finite(n), t2, t1)?;
    covariance_with(m, n, t1, t2, u_max, cfg)
}

fn covariance_with(m: &StateSpaceModel, n: u32, t1: f64, t2: f64, u_max: f64, cfg: &SpectralConfig) -> Result<f64> {
    let sigma = m.levy().variance();
    let h = n as f64 * (t1 - t2);
    let (du, shift) = aligned_step(h, cfg.du)?;
    let k2 = cfg.kernel(m, Scale::Finite(n), t2, u_max, du)?;
    let len = k2.values.len();
    let k1 = cfg.kernel(m, Scale::Finite(n), t1, (shift + len - 1) as f64 * du, du)?;
    if k1.values.len() < shift + len {
        return Err(Error::Postcondition("shifted kernel grid is too short".into()));
    }
    let prod: Vec<f64> = (0..len).map(|j| k1.values[j + shift] * k2.values[j]).collect();
    Ok(sigma * trapezoid(&prod, du))
}

/// Step `≤ du` that divides `h`, and `h` in steps.
fn aligned_step(h: f64, du: f64) -> Result<(f64, usize)> {
    if !(du > 0.0) || !du.is_finite() {
        return Err(Error::InvalidGrid(format!("du must be > 0, got {du}")));
    }
    if h <= 0.0 {
        return Ok((du, 0));
    }
    let steps = (h / du - 1e-9).ceil().max(1.0);
    Ok((h / steps, steps as usize))
}

/// Wigner–Ville settings on top of the kernel settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WignerConfig {
    /// Lag truncation; `None` uses `30/λ` from the stability certificate.
    pub s_max: Option<f64>,
    pub ds: f64,
}

impl Default for WignerConfig {
    fn default() -> Self {
        Self { s_max: None, ds: 0.05 }
    }
}

/// `f_N(t, λ) = (1/2π) ∫ e^{-iλs} c_N(s) ds` with
/// `c_N(s) = Cov(Y_N(t + s/2N), Y_N(t - s/2N))`, using `c_N(-s) = c_N(s)`.
pub fn wigner_ville(
    m: &StateSpaceModel,
    n: u32,
    t: f64,
    lambda: UniformGrid,
    wv: &WignerConfig,
    cfg: &SpectralConfig,
) -> Result<SpectrumGrid> {
    if n == 0 {
        return Err(Error::param("N", "must be >= 1"));
    }
    if !(wv.ds > 0.0) || !wv.ds.is_finite() {
        return Err(Error::InvalidGrid(format!("ds must be > 0, got {}", wv.ds)));
    }
    let nf = n as f64;
    let s_max = match wv.s_max {
        Some(s) if s > 0.0 && s.is_finite() => s,
        Some(s) => return Err(Error::InvalidGrid(format!("s_max must be > 0, got {s}"))),
        None => 30.0 / cfg.certificate(m, Scale::Finite(n), t, t)?.lambda,
    };
    let half = s_max / (2.0 * nf);
    let u_max = cfg.resolve_u_max(m, Scale::Finite(n), t - half, t + half)?;
    let s_grid = UniformGrid::from_range(0.0, s_max, wv.ds)?;
    let s_pts = s_grid.to_vec();
    let c: Vec<f64> = crate::par::map(&s_pts, |&s| covariance_with(m, n, t + s / (2.0 * nf), t - s / (2.0 * nf), u_max, cfg))
        .into_iter()
        .collect::<Result<_>>()?;
    let mut warnings = Vec::new();
    let last = c[c.len() - 1].abs();
    if last > 1e-4 * c[0].abs() {
        warnings.push(format!(
            "covariance at s_max = {s_max} is {last:.3e}, above 1e-4 of c_N(0) = {:.3e}; increase s_max",
            c[0]
        ));
    }
    let len = c.len();
    // symmetric trapezoid on [-s_max, s_max]: the s = 0 node is counted once
    let weighted: Vec<(f64, f64)> = c
        .iter()
        .enumerate()
        .map(|(j, cj)| {
            let w = if j == 0 {
                wv.ds
            } else if j + 1 == len {
                wv.ds
            } else {
                2.0 * wv.ds
            };
            (s_pts[j], w * cj)
        })
        .collect();
    let values = crate::par::map(&lambda.to_vec(), |&l| {
        weighted.iter().map(|(s, wc)| wc * (l * s).cos()).sum::<f64>() / (2.0 * PI)
    });
    Ok(SpectrumGrid {
        t,
        lambda_grid: lambda,
        values,
        kind: SpectrumKind::WignerVille,
        n: Some(n),
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WvRow {
    #[serde(rename = "N")]
    pub n: u32,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WvConvergenceReport {
    pub t: f64,
    pub rows: Vec<WvRow>,
    pub passes: bool,
    /// Sufficient conditions that were checked, and the ones assumed.
    pub verified: Vec<String>,
    pub assumed: Vec<String>,
    pub warnings: Vec<String>,
}

/// L² distance over the frequency grid between `f_N(t, ·)` and `f(t, ·)`.
pub fn wv_convergence(
    m: &StateSpaceModel,
    t: f64,
    lambda: UniformGrid,
    n_list: &[u32],
    wv: &WignerConfig,
    cfg: &SpectralConfig,
) -> Result<WvConvergenceReport> {
    if n_list.is_empty() || n_list.contains(&0) {
        return Err(Error::param("Ns", "need a non-empty list of positive integers"));
    }
    let f = spectral_density(m, t, lambda, cfg)?;
    let mut warnings = f.warnings.clone();
    let mut rows = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let fn_ = wigner_ville(m, n, t, lambda, wv, cfg)?;
        warnings.extend(fn_.warnings.iter().map(|w| format!("N = {n}: {w}")));
        rows.push(WvRow {
            n,
            distance: fn_.l2_distance(&f)?,
        });
    }
    let d: Vec<f64> = rows.iter().map(|r| r.distance).collect();
    let n_min = *n_list.iter().min().expect("non-empty") as f64;
    let window = (t - LOOKBACK / n_min, t);
    let mut verified = Vec::new();
    match certify(m.a(), window, n_list)? {
        Some(c) => verified.push(format!(
            "uniform exponential stability on [{:.4}, {:.4}]: gamma = {:.4}, lambda = {:.4}",
            window.0, window.1, c.gamma, c.lambda
        )),
        None => warnings.push("no exponential-stability certificate on the look-back window".into()),
    }
    let bounded = (0..=256).all(|k| {
        let s = window.0 + (window.1 - window.0) * k as f64 / 256.0;
        m.b().evaluate(s).iter().chain(m.c().evaluate(s).iter()).all(|x| x.is_finite())
    });
    if bounded {
        verified.push("B and C bounded on the look-back window".into());
    } else {
        warnings.push("B or C not finite on the look-back window".into());
    }
    Ok(WvConvergenceReport {
        t,
        passes: crate::kernels::convergence_passes(&d),
        rows,
        verified,
        assumed: vec![
            "kernels converge in L2 at the shifted anchors t +/- s/(2N)".into(),
            "uniform L2 bounds on the rescaled transfer functions and their frequency derivatives".into(),
        ],
        warnings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PlancherelReport {
    pub kernel_l2_sq: f64,
    pub spectral_l2_sq: f64,
    pub rel_err: f64,
}

/// Compares `‖g‖²` with `(1/2π)∫_{-Λ}^{Λ} |A(μ)|² dμ`.
pub fn plancherel_check(k: &KernelGrid, mu_max: f64, dmu: f64) -> Result<PlancherelReport> {
    let grid = UniformGrid::symmetric(mu_max, dmu)?;
    let a = transfer_function(k, &grid.to_vec());
    let sq: Vec<f64> = a.iter().map(|z| z.norm_sqr()).collect();
    let spectral = trapezoid(&sq, dmu) / (2.0 * PI);
    let kernel = k.l2_norm_sq();
    let rel_err = if kernel == 0.0 { spectral.abs() } else { (spectral - kernel).abs() / kernel };
    Ok(PlancherelReport {
        kernel_l2_sq: kernel,
        spectral_l2_sq: spectral,
        rel_err,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::LevyModel;

    fn car1(a: f64) -> StateSpaceModel {
        StateSpaceModel::car1(a.into(), LevyModel::default())
    }

    fn exp_kernel() -> KernelGrid {
        kernel_grid(&car1(1.0), Scale::Limit, 0.0, 25.0, 0.005, MethodChoice::Auto, &TransitionOptions::default(), None).unwrap()
    }

    #[test]
    fn transfer_of_exponential() {
        let a = transfer_function(&exp_kernel(), &[0.0, 1.0, -1.0]);
        assert!((a[0] - Complex64::new(1.0, 0.0)).norm() < 1e-4);
        assert!((a[1] - Complex64::new(0.5, -0.5)).norm() < 1e-4);
        assert_eq!(a[2], a[1].conj());
    }

    #[test]
    fn car1_density() {
        let f = spectral_density(&car1(1.0), 0.0, UniformGrid::symmetric(1.0, 1.0).unwrap(), &SpectralConfig::default()).unwrap();
        assert!((f.values[1] - 1.0 / (2.0 * PI)).abs() < 1e-5);
        assert!((f.values[2] - 1.0 / (4.0 * PI)).abs() < 1e-5);
        assert_eq!(f.values[0], f.values[2]);
    }

    #[test]
    fn ou_covariances() {
        let cfg = SpectralConfig::default();
        let m = car1(1.0);
        assert!((covariance(&m, 3, 0.2, 0.2, &cfg).unwrap() - 0.5).abs() < 1e-4);
        let c = covariance(&m, 4, 0.0, 0.25, &cfg).unwrap();
        assert!((c - (-1f64).exp() / 2.0).abs() < 1e-4);
        // odd lag that is not a multiple of du
        let c = covariance(&m, 1, 0.0, 0.3337, &cfg).unwrap();
        assert!((c - (-0.3337f64).exp() / 2.0).abs() < 1e-4);
    }

    #[test]
    fn aligned_steps_divide_lag() {
        let (du, k) = aligned_step(1.0, 0.005).unwrap();
        assert_eq!(k, 200);
        assert!((du - 0.005).abs() < 1e-15);
        let (du, k) = aligned_step(0.3337, 0.005).unwrap();
        assert!((du * k as f64 - 0.3337).abs() < 1e-14 && du <= 0.005);
    }

    #[test]
    fn plancherel_on_exponential() {
        let r = plancherel_check(&exp_kernel(), 200.0, 0.05).unwrap();
        assert!(r.rel_err < 0.01, "{r:?}");
    }
}
