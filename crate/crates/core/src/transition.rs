//! Transition matrices `Ψ(s, s0)` of `dΨ/ds = A(s)Ψ`, `Ψ(s0, s0) = I`.
//!
//! Three methods: the Peano–Baker series of iterated integrals, classical
//! RK4, and `exp(∫A)` for commuting families. Coefficient paths are given
//! through [`MatrixPath`], which lets the kernel code pass the rescaled
//! family `s ↦ A(s/N + t)` without building a new function object.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::function::{MatrixFunction, Side};
use crate::levy::keyed_rng;
use crate::linalg::{commutator, frobenius, matrix_exp};
use crate::quadrature::{cumulative_simpson, even_panels};
use crate::{Error, Result};

/// A square matrix-valued function of one real variable.
pub trait MatrixPath: Sync {
    fn dim(&self) -> usize;
    fn eval(&self, s: f64) -> DMatrix<f64>;
    /// One-sided value at a jump; equals `eval` away from jumps.
    fn eval_limit(&self, s: f64, side: Side) -> DMatrix<f64> {
        let _ = side;
        self.eval(s)
    }
    /// Points where the path may jump, sorted.
    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }
}

impl MatrixPath for MatrixFunction {
    fn dim(&self) -> usize {
        self.rows()
    }

    fn eval(&self, s: f64) -> DMatrix<f64> {
        self.evaluate(s)
    }

    fn eval_limit(&self, s: f64, side: Side) -> DMatrix<f64> {
        self.evaluate_limit(s, side)
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.discontinuities()
    }
}

/// `s ↦ f(s/n + t)`: the coefficient path seen in fast time around anchor `t`.
#[derive(Debug, Clone, Copy)]
pub struct Rescaled<'a> {
    pub f: &'a MatrixFunction,
    pub n: f64,
    pub t: f64,
}

impl<'a> Rescaled<'a> {
    pub fn new(f: &'a MatrixFunction, n: f64, t: f64) -> Self {
        Self { f, n, t }
    }
}

impl MatrixPath for Rescaled<'_> {
    fn dim(&self) -> usize {
        self.f.rows()
    }

    fn eval(&self, s: f64) -> DMatrix<f64> {
        self.f.evaluate(s / self.n + self.t)
    }

    fn eval_limit(&self, s: f64, side: Side) -> DMatrix<f64> {
        self.f.evaluate_limit(s / self.n + self.t, side)
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.f
            .discontinuities()
            .into_iter()
            .map(|b| self.n * (b - self.t))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransitionMethod {
    PeanoBaker,
    Ode,
    CommutativeExp,
}

/// Method selection, with `Auto` choosing the exponential for commuting
/// families and RK4 otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodChoice {
    #[serde(alias = "pb")]
    PeanoBaker,
    Ode,
    #[serde(alias = "comm")]
    CommutativeExp,
    #[default]
    Auto,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransitionMatrix {
    #[serde(serialize_with = "crate::serde_util::matrix_rows")]
    pub value: DMatrix<f64>,
    pub method: TransitionMethod,
    pub error_estimate: f64,
    /// Index of the last Peano–Baker term computed, RK4 steps, or
    /// quadrature panels.
    pub terms_or_steps: usize,
}

impl TransitionMatrix {
    fn identity(p: usize, method: TransitionMethod, terms_or_steps: usize) -> Self {
        Self {
            value: DMatrix::identity(p, p),
            method,
            error_estimate: 0.0,
            terms_or_steps,
        }
    }
}

fn check_interval(s0: f64, s: f64) -> Result<()> {
    if !s0.is_finite() || !s.is_finite() {
        return Err(Error::param("s", "interval end points must be finite"));
    }
    if s < s0 {
        return Err(Error::param("s", format!("need s >= s0, got s0 = {s0}, s = {s}")));
    }
    Ok(())
}

/// Sub-intervals of `[s0, s]` between the path's jump points.
fn segments(a: &dyn MatrixPath, s0: f64, s: f64) -> Vec<(f64, f64)> {
    let mut cuts = vec![s0];
    cuts.extend(a.breakpoints().into_iter().filter(|b| *b > s0 && *b < s));
    cuts.push(s);
    cuts.windows(2).map(|w| (w[0], w[1])).collect()
}

/// Evaluation inside segment `[lo, hi]`, using one-sided limits at its ends.
fn eval_in(a: &dyn MatrixPath, x: f64, lo: f64, hi: f64) -> DMatrix<f64> {
    if x <= lo {
        a.eval_limit(lo, Side::Right)
    } else if x >= hi {
        a.eval_limit(hi, Side::Left)
    } else {
        a.eval(x)
    }
}

/// Rough `max ‖A‖_F` on `[s0, s]` from 65 samples per segment.
pub fn norm_bound(a: &dyn MatrixPath, s0: f64, s: f64) -> f64 {
    let mut m: f64 = 0.0;
    for (lo, hi) in segments(a, s0, s) {
        for k in 0..=64 {
            let x = lo + (hi - lo) * k as f64 / 64.0;
            m = m.max(frobenius(&eval_in(a, x, lo, hi)));
        }
    }
    m
}

/// Nodes and coefficient values on the shared panel grid of each segment.
struct PanelGrid {
    /// per segment: step and matrices at the nodes
    segs: Vec<(f64, Vec<DMatrix<f64>>)>,
}

impl PanelGrid {
    fn new(a: &dyn MatrixPath, s0: f64, s: f64, h_max: f64) -> Self {
        let segs = segments(a, s0, s)
            .into_iter()
            .map(|(lo, hi)| {
                // multiple of 4 so the coarse (2h) grid is Simpson-compatible too
                let m = (((hi - lo) / h_max).ceil() as usize).clamp(4, 400_000);
                let m = m.div_ceil(4) * 4;
                let h = (hi - lo) / m as f64;
                let vals = (0..=m).map(|k| eval_in(a, lo + k as f64 * h, lo, hi)).collect();
                (h, vals)
            })
            .collect();
        Self { segs }
    }

    fn coarse(&self) -> Self {
        Self {
            segs: self
                .segs
                .iter()
                .map(|(h, v)| (2.0 * h, v.iter().step_by(2).cloned().collect()))
                .collect(),
        }
    }

    fn panels(&self) -> usize {
        self.segs.iter().map(|(_, v)| v.len() - 1).sum()
    }

    /// One Peano–Baker step: given the previous term at every node, returns
    /// `I_n(x) = ∫_{s0}^x A(σ) I_{n-1}(σ) dσ` at every node.
    fn next_term(&self, prev: &[Vec<DMatrix<f64>>]) -> Vec<Vec<DMatrix<f64>>> {
        let mut offset: Option<DMatrix<f64>> = None;
        let mut out = Vec::with_capacity(self.segs.len());
        for ((h, avals), pvals) in self.segs.iter().zip(prev) {
            let integrand: Vec<DMatrix<f64>> = avals.iter().zip(pvals).map(|(a, p)| a * p).collect();
            let mut cum = cumulative_simpson(&integrand, *h);
            if let Some(off) = &offset {
                for c in &mut cum {
                    *c += off;
                }
            }
            offset = cum.last().cloned();
            out.push(cum);
        }
        out
    }
}

/// Outcome of running the series on one grid.
struct SeriesRun {
    sum: DMatrix<f64>,
    norms: Vec<f64>,
    converged: bool,
}

fn run_series(grid: &PanelGrid, p: usize, tol: f64, max_terms: usize, min_terms: usize, fixed_terms: Option<usize>) -> SeriesRun {
    let mut term: Vec<Vec<DMatrix<f64>>> = grid
        .segs
        .iter()
        .map(|(_, v)| vec![DMatrix::identity(p, p); v.len()])
        .collect();
    let mut sum = DMatrix::identity(p, p);
    let mut norms = Vec::new();
    for n in 1..=max_terms {
        term = grid.next_term(&term);
        let last = term.last().and_then(|v| v.last()).expect("non-empty grid").clone();
        let norm = frobenius(&last);
        sum += &last;
        norms.push(norm);
        let done = match fixed_terms {
            Some(k) => n >= k,
            None => norm < tol && n >= min_terms,
        };
        if done {
            return SeriesRun { sum, norms, converged: true };
        }
    }
    SeriesRun { sum, norms, converged: false }
}

/// Peano–Baker series `Σ_n I_n(s)` with `I_0 = I` and
/// `I_n(x) = ∫_{s0}^x A(σ) I_{n-1}(σ) dσ`, each term by cumulative Simpson
/// quadrature on one shared grid with panel width
/// `≤ 0.05 / max(1, ‖A‖)` (finer for tolerances below `1e-8`).
///
/// Stops at the first `n ≥ max(1, ‖A‖·(s - s0))` with `‖I_n(s)‖_F < tol`;
/// the lower bound keeps the series from stopping on the rising part of the
/// term sequence. The error estimate is the last term norm plus a
/// Richardson estimate of the quadrature error from the 2h grid.
pub fn peano_baker(a: &dyn MatrixPath, s0: f64, s: f64, tol: f64, max_terms: usize) -> Result<TransitionMatrix> {
    check_interval(s0, s)?;
    if !(tol > 0.0) {
        return Err(Error::param("tol", format!("must be > 0, got {tol}")));
    }
    let p = a.dim();
    if s == s0 {
        return Ok(TransitionMatrix::identity(p, TransitionMethod::PeanoBaker, 0));
    }
    let norm = norm_bound(a, s0, s);
    let h_max = 0.05 / norm.max(1.0) * (tol / 1e-8).powf(0.25).min(1.0);
    let grid = PanelGrid::new(a, s0, s, h_max);
    let min_terms = ((norm * (s - s0)).ceil() as usize).max(1);
    let fine = run_series(&grid, p, tol, max_terms.max(1), min_terms, None);
    if !fine.converged {
        return Err(Error::Divergence {
            tol,
            max_terms,
            term_norms: fine.norms,
        });
    }
    let n_star = fine.norms.len();
    let coarse = run_series(&grid.coarse(), p, tol, n_star, n_star, Some(n_star));
    let quad = frobenius(&(&fine.sum - &coarse.sum)) / 15.0;
    let roundoff = f64::EPSILON * grid.panels() as f64 * frobenius(&fine.sum);
    Ok(TransitionMatrix {
        value: fine.sum,
        method: TransitionMethod::PeanoBaker,
        error_estimate: fine.norms[n_star - 1] + quad + roundoff,
        terms_or_steps: n_star,
    })
}

/// Classical RK4 on the matrix IVP. The interval is split at jump points of
/// the coefficients and steps are shared out in proportion to length, each
/// piece integrated with one-sided coefficient values at its ends. The error
/// estimate compares against half the number of steps.
pub fn ode_transition(a: &dyn MatrixPath, s0: f64, s: f64, steps: usize) -> Result<TransitionMatrix> {
    check_interval(s0, s)?;
    if steps == 0 {
        return Err(Error::param("steps", "must be >= 1"));
    }
    let p = a.dim();
    if s == s0 {
        return Ok(TransitionMatrix::identity(p, TransitionMethod::Ode, steps));
    }
    let fine = rk4_segments(a, s0, s, steps);
    let other = if steps >= 2 {
        rk4_segments(a, s0, s, steps / 2)
    } else {
        rk4_segments(a, s0, s, 2)
    };
    let err = frobenius(&(&fine - &other)) / 15.0 + f64::EPSILON * steps as f64 * frobenius(&fine);
    Ok(TransitionMatrix {
        value: fine,
        method: TransitionMethod::Ode,
        error_estimate: err,
        terms_or_steps: steps,
    })
}

pub(crate) fn rk4_segments(a: &dyn MatrixPath, s0: f64, s: f64, steps: usize) -> DMatrix<f64> {
    let p = a.dim();
    let mut psi = DMatrix::identity(p, p);
    let total = s - s0;
    for (lo, hi) in segments(a, s0, s) {
        let n = ((steps as f64 * (hi - lo) / total).round() as usize).max(1);
        psi = rk4_product(a, lo, hi, n) * psi;
    }
    psi
}

/// `Ψ(hi, lo)` by `n` RK4 steps inside one continuity segment.
fn rk4_product(a: &dyn MatrixPath, lo: f64, hi: f64, n: usize) -> DMatrix<f64> {
    let p = a.dim();
    let h = (hi - lo) / n as f64;
    let mut psi = DMatrix::identity(p, p);
    let mut a_left = eval_in(a, lo, lo, hi);
    for k in 0..n {
        let x = lo + k as f64 * h;
        let right = if k + 1 == n { hi } else { lo + (k + 1) as f64 * h };
        let a_mid = eval_in(a, x + 0.5 * h, lo, hi);
        let a_right = eval_in(a, right, lo, hi);
        psi = rk4_step(&a_left, &a_mid, &a_right, &psi, h);
        a_left = a_right;
    }
    psi
}

fn rk4_step(a0: &DMatrix<f64>, am: &DMatrix<f64>, a1: &DMatrix<f64>, y: &DMatrix<f64>, h: f64) -> DMatrix<f64> {
    let k1 = a0 * y;
    let k2 = am * (y + &k1 * (0.5 * h));
    let k3 = am * (y + &k2 * (0.5 * h));
    let k4 = a1 * (y + &k3 * h);
    y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

/// `Ψ(s_k, s0)` at the RK4 nodes `s_k = s0 + k (s - s0)/steps`, `k = 0..=steps`.
/// Coefficient jumps inside the interval are not treated specially.
pub fn ode_dense(a: &dyn MatrixPath, s0: f64, s: f64, steps: usize) -> Result<Vec<DMatrix<f64>>> {
    check_interval(s0, s)?;
    if steps == 0 {
        return Err(Error::param("steps", "must be >= 1"));
    }
    let p = a.dim();
    let h = (s - s0) / steps as f64;
    let mut out = Vec::with_capacity(steps + 1);
    let mut psi = DMatrix::identity(p, p);
    out.push(psi.clone());
    let mut a_left = a.eval(s0);
    for k in 0..steps {
        let x = s0 + k as f64 * h;
        let a_mid = a.eval(x + 0.5 * h);
        let a_right = a.eval(x + h);
        psi = rk4_step(&a_left, &a_mid, &a_right, &psi, h);
        out.push(psi.clone());
        a_left = a_right;
    }
    Ok(out)
}

/// Simpson integral `∫_{s0}^{s} A` with a Richardson error estimate.
fn integral(a: &dyn MatrixPath, s0: f64, s: f64, norm: f64) -> (DMatrix<f64>, f64, usize) {
    let p = a.dim();
    let mut total = DMatrix::zeros(p, p);
    let mut coarse_total = DMatrix::zeros(p, p);
    let mut panels = 0;
    for (lo, hi) in segments(a, s0, s) {
        let m = even_panels(((hi - lo) * norm.max(1.0) / 0.01).ceil() as usize).max(64);
        let m = m.div_ceil(4) * 4;
        let h = (hi - lo) / m as f64;
        let vals: Vec<DMatrix<f64>> = (0..=m).map(|k| eval_in(a, lo + k as f64 * h, lo, hi)).collect();
        total += simpson_matrix(&vals, h);
        let coarse: Vec<DMatrix<f64>> = vals.iter().step_by(2).cloned().collect();
        coarse_total += simpson_matrix(&coarse, 2.0 * h);
        panels += m;
    }
    let diff = (&total - &coarse_total) / 15.0;
    let err = frobenius(&diff);
    (total + diff, err, panels)
}

fn simpson_matrix(vals: &[DMatrix<f64>], h: f64) -> DMatrix<f64> {
    let n = vals.len();
    let mut acc = &vals[0] + &vals[n - 1];
    for (k, v) in vals.iter().enumerate().take(n - 1).skip(1) {
        acc += v * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * (h / 3.0)
}

/// `exp(∫_{s0}^{s} A)`, valid when the family commutes on the interval.
///
/// Commutativity is re-checked at 8 pseudo-random pairs: the commutator must
/// satisfy `‖[A(x), A(y)]‖_F ≤ 1e-8·max(1, ‖A(x)‖‖A(y)‖)`.
pub fn commutative_transition(a: &dyn MatrixPath, s0: f64, s: f64) -> Result<TransitionMatrix> {
    check_interval(s0, s)?;
    let p = a.dim();
    if s == s0 {
        return Ok(TransitionMatrix::identity(p, TransitionMethod::CommutativeExp, 0));
    }
    let mut rng = keyed_rng(s0.to_bits() ^ s.to_bits().rotate_left(17), &[8]);
    let mut worst: f64 = 0.0;
    for _ in 0..8 {
        let x = rng.random_range(s0..=s);
        let y = rng.random_range(s0..=s);
        let (ax, ay) = (a.eval(x), a.eval(y));
        let scale = (frobenius(&ax) * frobenius(&ay)).max(1.0);
        worst = worst.max(frobenius(&commutator(&ax, &ay)) / scale);
    }
    if worst > 1e-8 {
        return Err(Error::NotCommutative {
            max_violation: worst,
            tol: 1e-8,
        });
    }
    let norm = norm_bound(a, s0, s);
    let (int, err, panels) = integral(a, s0, s, norm);
    let value = matrix_exp(&int);
    let error_estimate = err * frobenius(&value) + f64::EPSILON * 16.0 * frobenius(&value);
    Ok(TransitionMatrix {
        value,
        method: TransitionMethod::CommutativeExp,
        error_estimate,
        terms_or_steps: panels,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CommutativityReport {
    pub passes: bool,
    pub max_violation: f64,
    /// `max ‖[A(t_i), A(t_j)]‖_F` over grid pairs.
    pub pairwise: f64,
    /// `max ‖[A(t_i), ∫_{t_0}^{t_i} A]‖_F` over grid points.
    pub integral: f64,
    pub interval: (f64, f64),
    pub grid_points: usize,
}

/// Grid check of pairwise commutators and of `[A(t), ∫_{t0}^t A]`.
pub fn check_commutativity(a: &dyn MatrixPath, interval: (f64, f64), grid_points: usize, tol: f64) -> Result<CommutativityReport> {
    let (lo, hi) = interval;
    if grid_points < 2 {
        return Err(Error::param("grid_points", "need at least 2"));
    }
    check_interval(lo, hi)?;
    let h = (hi - lo) / (grid_points - 1) as f64;
    let pts: Vec<f64> = (0..grid_points).map(|i| lo + i as f64 * h).collect();
    let mats: Vec<DMatrix<f64>> = pts.iter().map(|&t| a.eval(t)).collect();
    let mut pairwise: f64 = 0.0;
    for i in 0..grid_points {
        for j in (i + 1)..grid_points {
            pairwise = pairwise.max(frobenius(&commutator(&mats[i], &mats[j])));
        }
    }
    // cumulative integral on an 8x refined grid
    let refine = 8;
    let fine_h = h / refine as f64;
    let fine: Vec<DMatrix<f64>> = (0..=(grid_points - 1) * refine)
        .map(|k| a.eval(lo + k as f64 * fine_h))
        .collect();
    let cum = cumulative_simpson(&fine, fine_h);
    let mut integral_v: f64 = 0.0;
    for (i, m) in mats.iter().enumerate() {
        integral_v = integral_v.max(frobenius(&commutator(m, &cum[i * refine])));
    }
    let max_violation = pairwise.max(integral_v);
    Ok(CommutativityReport {
        passes: max_violation <= tol,
        max_violation,
        pairwise,
        integral: integral_v,
        interval,
        grid_points,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionOptions {
    pub tol: f64,
    pub max_terms: usize,
    /// RK4 steps; `None` picks `h·‖A‖ ≤ 0.01`.
    pub steps: Option<usize>,
}

impl Default for TransitionOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_terms: 200,
            steps: None,
        }
    }
}

/// Default RK4 step count: `h·max(1, ‖A‖) ≤ 0.01`, at least 16.
pub fn default_steps(a: &dyn MatrixPath, s0: f64, s: f64) -> usize {
    let norm = norm_bound(a, s0, s).max(1.0);
    (((s - s0) * norm / 0.01).ceil() as usize).clamp(16, 2_000_000)
}

/// Whether the `Auto` choice may use the exponential on `[s0, s]`.
pub fn is_commutative_on(a: &dyn MatrixPath, s0: f64, s: f64) -> bool {
    if a.dim() == 1 {
        return true;
    }
    let norm = norm_bound(a, s0, s).max(1.0);
    check_commutativity(a, (s0, s), 17, 1e-10 * norm * norm)
        .map(|r| r.passes)
        .unwrap_or(false)
}

/// Dispatches to the selected method.
pub fn transition(a: &dyn MatrixPath, s0: f64, s: f64, choice: MethodChoice, opts: &TransitionOptions) -> Result<TransitionMatrix> {
    match choice {
        MethodChoice::PeanoBaker => peano_baker(a, s0, s, opts.tol, opts.max_terms),
        MethodChoice::Ode => {
            check_interval(s0, s)?;
            ode_transition(a, s0, s, opts.steps.unwrap_or_else(|| default_steps(a, s0, s)))
        }
        MethodChoice::CommutativeExp => commutative_transition(a, s0, s),
        MethodChoice::Auto => {
            check_interval(s0, s)?;
            if a.breakpoints().iter().all(|b| *b <= s0 || *b >= s) && is_commutative_on(a, s0, s) {
                commutative_transition(a, s0, s)
            } else {
                ode_transition(a, s0, s, opts.steps.unwrap_or_else(|| default_steps(a, s0, s)))
            }
        }
    }
}
