//! Browser demo over a time-varying CAR(1) process with rate
//! `a(t) = a0 + a1·tanh(t)`, i.e. `dX = -a(t) X dt + dL`.
//!
//! Every export returns a JSON string; errors come back as a thrown string.

use serde::Serialize;
use tvls_core::kernels::{convergence_diagnostic, kernel_grid, Scale};
use tvls_core::quadrature::UniformGrid;
use tvls_core::simulate::{simulation_certificate, SimConfig, SimulationPlan};
use tvls_core::spectral::{certificate_for, spectral_density, wigner_ville, SpectralConfig, WignerConfig};
use tvls_core::transition::{MethodChoice, TransitionOptions};
use tvls_core::{LevyModel, ScalarFunction, StateSpaceModel};
use wasm_bindgen::prelude::wasm_bindgen;

/// Largest number of simulated paths or grid points accepted from the page.
const MAX_PATHS: usize = 200;
const MAX_POINTS: usize = 20_000;

fn model(a0: f64, a1: f64) -> Result<StateSpaceModel, String> {
    if !a0.is_finite() || !a1.is_finite() {
        return Err("a0 and a1 must be finite".into());
    }
    Ok(StateSpaceModel::car1(ScalarFunction::tanh(a0, a1, 1.0, 0.0), LevyModel::default()))
}

fn to_json<T: Serialize>(value: &T) -> Result<String, String> {
    serde_json::to_string(value).map_err(|e| e.to_string())
}

fn positive_n(n: u32) -> Result<u32, String> {
    if n == 0 {
        Err("N must be >= 1".into())
    } else {
        Ok(n)
    }
}

#[derive(Debug, Serialize)]
pub struct Spectra {
    pub lambda: Vec<f64>,
    /// Frozen-coefficient density `f(t, λ)`.
    pub f: Vec<f64>,
    /// Wigner–Ville spectrum `f_N(t, λ)`.
    pub f_n: Vec<f64>,
    pub warnings: Vec<String>,
}

pub fn compute_spectra(a0: f64, a1: f64, t: f64, n: u32, lmax: f64, dl: f64) -> Result<Spectra, String> {
    let m = model(a0, a1)?;
    let n = positive_n(n)?;
    let grid = UniformGrid::symmetric(lmax, dl).map_err(|e| e.to_string())?;
    if grid.len > MAX_POINTS {
        return Err(format!("frequency grid has {} points, limit {MAX_POINTS}", grid.len));
    }
    let cfg = SpectralConfig { du: 0.01, ..Default::default() };
    let f = spectral_density(&m, t, grid, &cfg).map_err(|e| e.to_string())?;
    let fw = wigner_ville(&m, n, t, grid, &WignerConfig { s_max: None, ds: 0.1 }, &cfg).map_err(|e| e.to_string())?;
    let mut warnings = f.warnings.clone();
    warnings.extend(fw.warnings.iter().cloned());
    Ok(Spectra {
        lambda: f.lambdas(),
        f: f.values,
        f_n: fw.values,
        warnings,
    })
}

#[derive(Debug, Serialize)]
pub struct Kernels {
    pub u: Vec<f64>,
    pub g_n: Vec<f64>,
    pub g: Vec<f64>,
    /// `(N, ‖g_N - g‖)` for `N = 1, 2, 4, .., 64`.
    pub distances: Vec<(u32, f64)>,
    pub verified: bool,
}

pub fn compute_kernels(a0: f64, a1: f64, t: f64, n: u32) -> Result<Kernels, String> {
    let m = model(a0, a1)?;
    let n = positive_n(n)?;
    let du = 0.01;
    let opts = TransitionOptions::default();
    let u_max = certificate_for(&m, Scale::Finite(1), t, t).map_err(|e| e.to_string())?.default_u_max();
    let g_n = kernel_grid(&m, Scale::Finite(n), t, u_max, du, MethodChoice::Auto, &opts, None).map_err(|e| e.to_string())?;
    let g = kernel_grid(&m, Scale::Limit, t, u_max, du, MethodChoice::Auto, &opts, None).map_err(|e| e.to_string())?;
    let ns: Vec<u32> = (0..7).map(|k| 1 << k).collect();
    let r = convergence_diagnostic(&m, t, &ns, u_max, du, MethodChoice::Auto, &opts).map_err(|e| e.to_string())?;
    Ok(Kernels {
        u: g.lags().collect(),
        g_n: g_n.values,
        g: g.values,
        distances: r.rows.iter().map(|row| (row.n, row.distance)).collect(),
        verified: r.preconditions.verified,
    })
}

#[derive(Debug, Serialize)]
pub struct Paths {
    pub t: Vec<f64>,
    /// One observation series per path.
    pub y: Vec<Vec<f64>>,
    pub burn_in: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn compute_paths(a0: f64, a1: f64, n: u32, t0: f64, t1: f64, dt: f64, count: usize, seed: u64) -> Result<Paths, String> {
    let m = model(a0, a1)?;
    let n = positive_n(n)?;
    if count == 0 || count > MAX_PATHS {
        return Err(format!("number of paths must be in 1..={MAX_PATHS}"));
    }
    if dt > 0.0 && (t1 - t0) / dt > MAX_POINTS as f64 {
        return Err(format!("time grid would exceed {MAX_POINTS} points"));
    }
    let cfg = SimConfig::new(n, t0, t1, dt, seed);
    let cert = simulation_certificate(&m, &cfg).map_err(|e| e.to_string())?;
    let plan = SimulationPlan::new(&m, &cfg, Some(&cert)).map_err(|e| e.to_string())?;
    let paths = plan.run_many(count);
    Ok(Paths {
        t: plan.grid().to_vec(),
        y: paths.into_iter().map(|p| p.observations).collect(),
        burn_in: plan.burn_in(),
    })
}

/// `{lambda, f, f_n, warnings}` at time `t` on `[-lmax, lmax]`.
#[wasm_bindgen]
pub fn spectra(a0: f64, a1: f64, t: f64, n: u32, lmax: f64, dl: f64) -> Result<String, String> {
    to_json(&compute_spectra(a0, a1, t, n, lmax, dl)?)
}

/// `{u, g_n, g, distances, verified}` at time `t`.
#[wasm_bindgen]
pub fn kernels(a0: f64, a1: f64, t: f64, n: u32) -> Result<String, String> {
    to_json(&compute_kernels(a0, a1, t, n)?)
}

/// `{t, y, burn_in}` for `count` paths on `[t0, t1]`.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn paths(a0: f64, a1: f64, n: u32, t0: f64, t1: f64, dt: f64, count: usize, seed: u64) -> Result<String, String> {
    to_json(&compute_paths(a0, a1, n, t0, t1, dt, count, seed)?)
}
