//! Composite quadrature rules on uniform grids.
//!
//! Simpson is used for the inner `∫ a(s) ds` style integrals, the trapezoid
//! rule for L² distances and oscillatory Fourier sums.

use serde::{Deserialize, Serialize};

/// Uniform grid `start, start + step, ..., start + (len - 1) * step`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformGrid {
    pub start: f64,
    pub step: f64,
    pub len: usize,
}

impl UniformGrid {
    /// Grid covering `[start, end]` with spacing `step`; the end point is
    /// included when `(end - start) / step` is (numerically) an integer.
    pub fn from_range(start: f64, end: f64, step: f64) -> crate::Result<Self> {
        if !(step > 0.0) || !step.is_finite() {
            return Err(crate::Error::InvalidGrid(format!("step must be > 0, got {step}")));
        }
        if !(end >= start) || !start.is_finite() || !end.is_finite() {
            return Err(crate::Error::InvalidGrid(format!(
                "range [{start}, {end}] is empty or not finite"
            )));
        }
        let cells = ((end - start) / step + 1e-9).floor() as usize;
        Ok(Self {
            start,
            step,
            len: cells + 1,
        })
    }

    /// Symmetric grid on `[-half_width, half_width]`.
    pub fn symmetric(half_width: f64, step: f64) -> crate::Result<Self> {
        let n = (half_width / step + 1e-9).floor();
        if !(n >= 0.0) || !step.is_finite() || !(step > 0.0) {
            return Err(crate::Error::InvalidGrid(format!(
                "symmetric grid needs half_width >= 0 and step > 0 (got {half_width}, {step})"
            )));
        }
        let n = n as usize;
        Ok(Self {
            start: -(n as f64) * step,
            step,
            len: 2 * n + 1,
        })
    }

    pub fn point(&self, k: usize) -> f64 {
        self.start + k as f64 * self.step
    }

    pub fn end(&self) -> f64 {
        self.point(self.len.saturating_sub(1))
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len).map(move |k| self.point(k))
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.points().collect()
    }
}

/// Composite Simpson rule with `panels` sub-intervals (rounded up to even).
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize) -> f64 {
    let m = even_panels(panels);
    if a == b {
        return 0.0;
    }
    let h = (b - a) / m as f64;
    let mut odd = 0.0;
    let mut even = 0.0;
    for k in 1..m {
        let x = a + k as f64 * h;
        if k % 2 == 1 {
            odd += f(x);
        } else {
            even += f(x);
        }
    }
    h / 3.0 * (f(a) + f(b) + 4.0 * odd + 2.0 * even)
}

pub(crate) fn even_panels(panels: usize) -> usize {
    let m = panels.max(2);
    m + (m % 2)
}

/// Trapezoid weight of node `k` on a grid with `len` nodes and spacing `h`.
#[inline]
pub fn trapezoid_weight(k: usize, len: usize, h: f64) -> f64 {
    if len < 2 {
        0.0
    } else if k == 0 || k + 1 == len {
        0.5 * h
    } else {
        h
    }
}

/// Trapezoid rule for samples on a uniform grid.
pub fn trapezoid(values: &[f64], h: f64) -> f64 {
    let n = values.len();
    values
        .iter()
        .enumerate()
        .map(|(k, v)| trapezoid_weight(k, n, h) * v)
        .sum()
}

/// Cumulative integrals `∫_{x_0}^{x_k} f` at every node of a uniform grid,
/// fourth order: Simpson over panel pairs, with the quadratic through
/// `(x_{k-1}, x_k, x_{k+1})` used for the trailing half pair.
///
/// `values` holds `f` at the nodes; the result has the same length.
pub fn cumulative_simpson<T>(values: &[T], h: f64) -> Vec<T>
where
    T: Clone + std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T>,
{
    let n = values.len();
    if n == 0 {
        return Vec::new();
    }
    let zero = values[0].clone() * 0.0;
    let mut out = Vec::with_capacity(n);
    out.push(zero.clone());
    if n == 1 {
        return out;
    }
    if n == 2 {
        out.push((values[0].clone() + values[1].clone()) * (0.5 * h));
        return out;
    }
    let mut acc = zero;
    let mut k = 0;
    while k + 2 < n {
        let f0 = &values[k];
        let f1 = &values[k + 1];
        let f2 = &values[k + 2];
        let half = f0.clone() * (5.0 * h / 12.0) + f1.clone() * (8.0 * h / 12.0) + f2.clone() * (-h / 12.0);
        out.push(acc.clone() + half);
        acc = acc + (f0.clone() + f1.clone() * 4.0 + f2.clone()) * (h / 3.0);
        out.push(acc.clone());
        k += 2;
    }
    if k + 2 == n {
        // one trailing interval: quadratic through the last three nodes
        let f0 = &values[k - 1];
        let f1 = &values[k];
        let f2 = &values[k + 1];
        let tail = f0.clone() * (-h / 12.0) + f1.clone() * (8.0 * h / 12.0) + f2.clone() * (5.0 * h / 12.0);
        out.push(acc + tail);
    }
    out
}
