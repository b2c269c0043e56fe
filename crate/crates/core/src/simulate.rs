//! Path simulation of `Y_N(t) = B(t)'X_N(t)` by the exact state recursion
//! with a midpoint-frozen stochastic integral.
//!
//! Time is handled in fast units `s = N t`. The noise of path `i` is built
//! from base cells of fixed fast-time length anchored at `N·t_start`; base
//! cell `j` uses a generator keyed by `(seed, i, j)` and is refined by
//! breadth-first bisection. Consequently halving `dt` (with the same base
//! cell) or extending the burn-in reuses the same underlying noise path.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::levy::{keyed_rng, NoiseCell};
use crate::model::StateSpaceModel;
use crate::stability::{certify, StabilityCertificate};
use crate::transition::{norm_bound, rk4_segments, Rescaled};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    #[serde(rename = "N")]
    pub n: u32,
    pub t_start: f64,
    pub t_end: f64,
    /// Physical-time output step.
    pub dt: f64,
    /// Fast-time burn-in before `N·t_start`; `None` uses `12/λ`.
    #[serde(default)]
    pub burn_in: Option<f64>,
    pub seed: u64,
    /// Fast-time length of the base noise cells; `None` uses `N·dt`.
    /// Must equal `N·dt·2^m` for some `m ≥ 0`.
    #[serde(default)]
    pub noise_cell: Option<f64>,
}

impl SimConfig {
    pub fn new(n: u32, t_start: f64, t_end: f64, dt: f64, seed: u64) -> Self {
        Self {
            n,
            t_start,
            t_end,
            dt,
            burn_in: None,
            seed,
            noise_cell: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathSample {
    pub grid: Vec<f64>,
    /// One row per grid point.
    #[serde(serialize_with = "crate::serde_util::matrix_rows")]
    pub states: DMatrix<f64>,
    pub observations: Vec<f64>,
    pub seed: u64,
    pub path: u64,
    #[serde(rename = "N")]
    pub n: u32,
    /// Fast-time burn-in actually used.
    pub burn_in: f64,
}

/// Precomputed one-substep factors shared by all paths.
#[derive(Debug, Clone)]
pub struct SimulationPlan {
    cfg: SimConfig,
    p: usize,
    /// Fast-time substep.
    h: f64,
    /// Bisection depth of each base cell.
    depth: u32,
    /// Substeps per output step.
    per_step: usize,
    /// Base cells in the burn-in, before index 0.
    burn_cells: usize,
    cell: f64,
    burn_in: f64,
    grid: Vec<f64>,
    /// Per substep, row-major `Ψ(s_{k+1}, s_k)` then `Ψ(s_{k+1}, mid)C(mid/N)`.
    phi: Vec<f64>,
    gain: Vec<f64>,
    /// `B(t_k)` at the output grid.
    b_out: Vec<f64>,
    levy: crate::LevyModel,
}

fn is_power_of_two_ratio(ratio: f64) -> Option<u32> {
    (0..=30).find(|&m| ((1u64 << m) as f64 - ratio).abs() <= 1e-9 * ratio)
}

impl SimulationPlan {
    pub fn new(m: &StateSpaceModel, cfg: &SimConfig, cert: Option<&StabilityCertificate>) -> Result<Self> {
        let levy = m.levy().clone();
        levy.require_variance()?;
        let cert = cert.ok_or_else(|| Error::MissingCertificate("simulation needs a stability certificate to size the burn-in".into()))?;
        if cfg.n == 0 {
            return Err(Error::param("N", "must be >= 1"));
        }
        if !(cfg.dt > 0.0) || !cfg.dt.is_finite() {
            return Err(Error::param("dt", format!("must be > 0, got {}", cfg.dt)));
        }
        if !(cfg.t_end >= cfg.t_start) || !cfg.t_start.is_finite() || !cfg.t_end.is_finite() {
            return Err(Error::InvalidGrid(format!("need t_start <= t_end, got [{}, {}]", cfg.t_start, cfg.t_end)));
        }
        let nf = cfg.n as f64;
        let fast_dt = nf * cfg.dt;
        let cell = cfg.noise_cell.unwrap_or(fast_dt);
        let ratio = cell / fast_dt;
        let cell_levels = is_power_of_two_ratio(ratio).ok_or_else(|| {
            Error::param("noise_cell", format!("must be N*dt times a power of two, got ratio {ratio}"))
        })?;
        let burn_in = cfg.burn_in.unwrap_or(12.0 / cert.lambda);
        if !(burn_in >= 0.0) || !burn_in.is_finite() {
            return Err(Error::param("burn_in", format!("must be >= 0, got {burn_in}")));
        }
        let burn_cells = (burn_in / cell - 1e-9).ceil().max(0.0) as usize;
        let steps = ((cfg.t_end - cfg.t_start) / cfg.dt + 1e-9).floor() as usize;
        let grid: Vec<f64> = (0..=steps).map(|k| cfg.t_start + k as f64 * cfg.dt).collect();

        let s0 = nf * cfg.t_start - burn_cells as f64 * cell;
        let s_end = nf * cfg.t_start + steps as f64 * fast_dt;
        let path = Rescaled::new(m.a(), nf, 0.0);
        let norm = norm_bound(&path, s0, s_end.max(s0 + cell));
        // refine by 4 until ‖A‖h ≤ 0.1
        let mut refine = 0u32;
        while norm * fast_dt / 4f64.powi(refine as i32) > 0.1 && refine < 12 {
            refine += 1;
        }
        let per_step = 1usize << (2 * refine);
        let h = fast_dt / per_step as f64;
        let depth = cell_levels + 2 * refine;
        let total = (burn_cells << depth) + steps * per_step;
        let p = m.dim();
        let constant = m.is_constant();
        let factors = |k: usize| -> (DMatrix<f64>, DMatrix<f64>) {
            let lo = s0 + k as f64 * h;
            let hi = lo + h;
            let mid = lo + 0.5 * h;
            let second = rk4_segments(&path, mid, hi, 4);
            let first = rk4_segments(&path, lo, mid, 4);
            let gain = &second * m.c().evaluate(mid / nf);
            (second * first, gain)
        };
        let ks: Vec<usize> = if constant { vec![0] } else { (0..total).collect() };
        let computed = crate::par::map(&ks, |&k| factors(k));
        let mut phi = Vec::with_capacity(computed.len() * p * p);
        let mut gain = Vec::with_capacity(computed.len() * p);
        for (f, g) in &computed {
            for i in 0..p {
                for j in 0..p {
                    phi.push(f[(i, j)]);
                }
                gain.push(g[(i, 0)]);
            }
        }
        if phi.iter().chain(&gain).any(|x| !x.is_finite()) {
            return Err(Error::Postcondition("transition factors are not finite".into()));
        }
        let mut b_out = Vec::with_capacity(grid.len() * p);
        for &t in &grid {
            b_out.extend(m.b().evaluate(t).iter());
        }
        Ok(Self {
            cfg: cfg.clone(),
            p,
            h,
            depth,
            per_step,
            burn_cells,
            cell,
            burn_in: burn_cells as f64 * cell,
            grid,
            phi,
            gain,
            b_out,
            levy,
        })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    /// Fast-time substep.
    pub fn substep(&self) -> f64 {
        self.h
    }

    pub fn burn_in(&self) -> f64 {
        self.burn_in
    }

    fn factor(&self, k: usize) -> (&[f64], &[f64]) {
        let p = self.p;
        let k = if self.gain.len() == p { 0 } else { k };
        (&self.phi[k * p * p..(k + 1) * p * p], &self.gain[k * p..(k + 1) * p])
    }

    /// Substep increments of base cell `j` (negative in the burn-in).
    fn cell_increments(&self, path: u64, j: i64, out: &mut Vec<f64>) {
        let mut rng = keyed_rng(self.cfg.seed, &[path, j as u64]);
        let root: NoiseCell = self.levy.draw_cell(self.cell, &mut rng);
        let mut cells = vec![root];
        for _ in 0..self.depth {
            let mut next = Vec::with_capacity(2 * cells.len());
            for c in &cells {
                let (l, r) = c.bisect(&self.levy, &mut rng);
                next.push(l);
                next.push(r);
            }
            cells = next;
        }
        out.clear();
        out.extend(cells.iter().map(NoiseCell::total));
    }

    /// Runs path `path` from the zero state.
    pub fn run(&self, path: u64) -> PathSample {
        let p = self.p;
        let mut x = vec![0.0; p];
        let mut tmp = vec![0.0; p];
        let mut noise = Vec::new();
        let sub_per_cell = 1usize << self.depth;
        let step = |k: usize, dl: f64, x: &mut Vec<f64>, tmp: &mut Vec<f64>| {
            let (phi, g) = self.factor(k);
            for i in 0..p {
                let row = &phi[i * p..(i + 1) * p];
                tmp[i] = row.iter().zip(x.iter()).map(|(a, b)| a * b).sum::<f64>() + g[i] * dl;
            }
            std::mem::swap(x, tmp);
        };
        let mut k = 0usize;
        for c in 0..self.burn_cells {
            let j = c as i64 - self.burn_cells as i64;
            self.cell_increments(path, j, &mut noise);
            for &dl in &noise {
                step(k, dl, &mut x, &mut tmp);
                k += 1;
            }
        }
        let n_out = self.grid.len();
        let mut states = DMatrix::zeros(n_out, p);
        let mut obs = Vec::with_capacity(n_out);
        let record = |idx: usize, x: &[f64], states: &mut DMatrix<f64>, obs: &mut Vec<f64>| {
            let b = &self.b_out[idx * p..(idx + 1) * p];
            for i in 0..p {
                states[(idx, i)] = x[i];
            }
            obs.push(b.iter().zip(x).map(|(a, b)| a * b).sum());
        };
        record(0, &x, &mut states, &mut obs);
        let total_sub = (n_out - 1) * self.per_step;
        let mut done = 0usize;
        let mut cell_idx = 0i64;
        while done < total_sub {
            self.cell_increments(path, cell_idx, &mut noise);
            cell_idx += 1;
            for &dl in noise.iter().take(sub_per_cell.min(total_sub - done)) {
                step(k, dl, &mut x, &mut tmp);
                k += 1;
                done += 1;
                if done % self.per_step == 0 {
                    record(done / self.per_step, &x, &mut states, &mut obs);
                }
            }
        }
        PathSample {
            grid: self.grid.clone(),
            states,
            observations: obs,
            seed: self.cfg.seed,
            path,
            n: self.cfg.n,
            burn_in: self.burn_in,
        }
    }

    /// Paths `0..count`, in parallel when enabled.
    pub fn run_many(&self, count: usize) -> Vec<PathSample> {
        let ids: Vec<u64> = (0..count as u64).collect();
        crate::par::map(&ids, |&i| self.run(i))
    }
}

/// Certificate covering the simulation window and its default burn-in.
pub fn simulation_certificate(m: &StateSpaceModel, cfg: &SimConfig) -> Result<StabilityCertificate> {
    let nf = cfg.n.max(1) as f64;
    let hi = cfg.t_end.max(cfg.t_start + 1e-9);
    let mut lookback = cfg.burn_in.unwrap_or(20.0);
    for _ in 0..3 {
        let window = (cfg.t_start - lookback / nf, hi);
        let cert = certify(m.a(), window, &[cfg.n.max(1)])?.ok_or_else(|| {
            Error::MissingCertificate(format!(
                "no exponential-stability certificate on [{:.4}, {:.4}]",
                window.0, window.1
            ))
        })?;
        let need = cfg.burn_in.unwrap_or(12.0 / cert.lambda);
        if need <= lookback {
            return Ok(cert);
        }
        lookback = need;
    }
    Err(Error::MissingCertificate("burn-in window keeps growing; supply --burn-in".into()))
}

/// One path.
pub fn simulate_path(m: &StateSpaceModel, cfg: &SimConfig, cert: Option<&StabilityCertificate>) -> Result<PathSample> {
    Ok(SimulationPlan::new(m, cfg, cert)?.run(0))
}

/// `count` paths sharing the model, grid and seed.
pub fn simulate_paths(m: &StateSpaceModel, cfg: &SimConfig, cert: Option<&StabilityCertificate>, count: usize) -> Result<Vec<PathSample>> {
    Ok(SimulationPlan::new(m, cfg, cert)?.run_many(count))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CovarianceEstimate {
    pub estimate: f64,
    /// Jackknife standard error.
    pub stderr: f64,
    pub paths: usize,
}

fn grid_index(grid: &[f64], t: f64) -> Result<usize> {
    let tol = 1e-9 * t.abs().max(1.0);
    grid.iter().position(|g| (g - t).abs() <= tol).ok_or(Error::OffGrid { t })
}

/// Sample covariance of `Y(t1)` and `Y(t2)` across paths, with means
/// subtracted, and its leave-one-out jackknife standard error.
pub fn empirical_covariance(paths: &[PathSample], t1: f64, t2: f64) -> Result<CovarianceEstimate> {
    let first = paths.first().ok_or_else(|| Error::param("paths", "need at least two paths"))?;
    if paths.len() < 2 {
        return Err(Error::param("paths", "need at least two paths"));
    }
    if paths.iter().any(|p| p.grid != first.grid || p.n != first.n) {
        return Err(Error::GridMismatch("paths do not share grid and scale".into()));
    }
    let i1 = grid_index(&first.grid, t1)?;
    let i2 = grid_index(&first.grid, t2)?;
    let x: Vec<f64> = paths.iter().map(|p| p.observations[i1]).collect();
    let y: Vec<f64> = paths.iter().map(|p| p.observations[i2]).collect();
    Ok(covariance_with_jackknife(&x, &y))
}

/// Unbiased cross-covariance with jackknife standard error, in O(n).
pub fn covariance_with_jackknife(x: &[f64], y: &[f64]) -> CovarianceEstimate {
    let n = x.len();
    let nf = n as f64;
    let sx: f64 = x.iter().sum();
    let sy: f64 = y.iter().sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let cov = |n: f64, sx: f64, sy: f64, sxy: f64| (sxy - sx * sy / n) / (n - 1.0);
    let estimate = cov(nf, sx, sy, sxy);
    let stderr = if n > 2 {
        let loo: Vec<f64> = x
            .iter()
            .zip(y)
            .map(|(a, b)| cov(nf - 1.0, sx - a, sy - b, sxy - a * b))
            .collect();
        let mean = loo.iter().sum::<f64>() / nf;
        let ss: f64 = loo.iter().map(|v| (v - mean).powi(2)).sum();
        ((nf - 1.0) / nf * ss).sqrt()
    } else {
        f64::NAN
    };
    CovarianceEstimate {
        estimate,
        stderr,
        paths: n,
    }
}
