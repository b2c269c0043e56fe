//! Two-sided, mean-zero Lévy driving noise: Brownian motion plus a compound
//! Poisson part with centred Gaussian jumps.
//!
//! Sampling is organised around [`NoiseCell`], the increment of `L` over one
//! interval stored as (Gaussian part, jump count, jump sum). A cell can be
//! split into two halves conditionally on its total, so refining a grid never
//! changes the coarse increments drawn from the same seed.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::quadrature::simpson;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LevyParams", into = "LevyParams")]
pub struct LevyModel {
    brownian_variance: f64,
    jump_intensity: f64,
    jump_std: f64,
    sigma_l: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LevyParams {
    #[serde(default)]
    brownian_variance: f64,
    #[serde(default)]
    jump_intensity: f64,
    #[serde(default)]
    jump_std: f64,
}

impl TryFrom<LevyParams> for LevyModel {
    type Error = Error;

    fn try_from(p: LevyParams) -> Result<Self> {
        LevyModel::new(p.brownian_variance, p.jump_intensity, p.jump_std)
    }
}

impl From<LevyModel> for LevyParams {
    fn from(m: LevyModel) -> Self {
        LevyParams {
            brownian_variance: m.brownian_variance,
            jump_intensity: m.jump_intensity,
            jump_std: m.jump_std,
        }
    }
}

impl Default for LevyModel {
    /// Standard Brownian motion.
    fn default() -> Self {
        Self::brownian(1.0)
    }
}

impl LevyModel {
    pub fn new(brownian_variance: f64, jump_intensity: f64, jump_std: f64) -> Result<Self> {
        for (name, v) in [
            ("brownian_variance", brownian_variance),
            ("jump_intensity", jump_intensity),
            ("jump_std", jump_std),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::param(name, format!("must be finite and >= 0, got {v}")));
            }
        }
        Ok(Self {
            brownian_variance,
            jump_intensity,
            jump_std,
            sigma_l: brownian_variance + jump_intensity * jump_std * jump_std,
        })
    }

    pub fn brownian(variance: f64) -> Self {
        Self::new(variance, 0.0, 0.0).expect("variance must be finite and non-negative")
    }

    pub fn brownian_variance(&self) -> f64 {
        self.brownian_variance
    }

    pub fn jump_intensity(&self) -> f64 {
        self.jump_intensity
    }

    pub fn jump_std(&self) -> f64 {
        self.jump_std
    }

    /// `Var L(1) = Σ + rate · std²`.
    pub fn variance(&self) -> f64 {
        self.sigma_l
    }

    /// Same jump structure, all variances multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(
            self.brownian_variance * factor,
            self.jump_intensity,
            self.jump_std * factor.sqrt(),
        )
    }

    pub(crate) fn require_variance(&self) -> Result<()> {
        if self.sigma_l > 0.0 {
            Ok(())
        } else {
            Err(Error::ZeroVariance)
        }
    }

    /// Drift making `E L(1) = 0` in the truncated Lévy–Khintchine form,
    /// `γ = -rate · ∫_{|x|>1} x φ(x) dx`. Zero for symmetric jumps up to
    /// quadrature noise.
    pub fn centering_drift(&self) -> f64 {
        let (lo, hi) = self.jump_range();
        if self.jump_intensity == 0.0 || hi <= 1.0 {
            return 0.0;
        }
        let density = |x: f64| x * self.jump_density(x);
        -self.jump_intensity * (simpson(density, lo, -1.0, 400) + simpson(density, 1.0, hi, 400))
    }

    /// Lévy exponent `Ψ_L(z)` with `E e^{izL(t)} = e^{tΨ_L(z)}`. The jump
    /// integral is evaluated by quadrature over ±8 jump standard deviations.
    pub fn characteristic_exponent(&self, z: f64) -> Complex64 {
        let mut re = -0.5 * self.brownian_variance * z * z;
        let mut im = self.centering_drift() * z;
        if self.jump_intensity > 0.0 && self.jump_std > 0.0 {
            let (lo, hi) = self.jump_range();
            let panels = 800 + (16.0 * (z * self.jump_std).abs()).ceil() as usize * 40;
            re += self.jump_intensity * simpson(|x| ((z * x).cos() - 1.0) * self.jump_density(x), lo, hi, panels);
            let small = |x: f64| ((z * x).sin() - z * x) * self.jump_density(x);
            let large = |x: f64| (z * x).sin() * self.jump_density(x);
            let jump_im = if hi <= 1.0 {
                simpson(small, lo, hi, panels)
            } else {
                simpson(large, lo, -1.0, panels) + simpson(small, -1.0, 1.0, panels) + simpson(large, 1.0, hi, panels)
            };
            im += self.jump_intensity * jump_im;
        }
        Complex64::new(re, im)
    }

    fn jump_range(&self) -> (f64, f64) {
        (-8.0 * self.jump_std, 8.0 * self.jump_std)
    }

    fn jump_density(&self, x: f64) -> f64 {
        let s = self.jump_std;
        (-0.5 * (x / s).powi(2)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt())
    }

    /// Draws `L(b) - L(a)` for an interval of length `len`.
    pub fn draw_cell<R: Rng + ?Sized>(&self, len: f64, rng: &mut R) -> NoiseCell {
        let gauss = if self.brownian_variance > 0.0 {
            normal(0.0, (self.brownian_variance * len).sqrt(), rng)
        } else {
            0.0
        };
        let mean_count = self.jump_intensity * len;
        let count = if mean_count > 0.0 && self.jump_std > 0.0 {
            Poisson::new(mean_count).expect("positive finite mean").sample(rng) as u64
        } else {
            0
        };
        let jumps = if count > 0 {
            normal(0.0, self.jump_std * (count as f64).sqrt(), rng)
        } else {
            0.0
        };
        NoiseCell { len, gauss, count, jumps }
    }

    /// Increments `L(t_{k+1}) - L(t_k)`. Interval `k` uses its own generator
    /// keyed by `(seed, k)`.
    pub fn sample_increments(&self, times: &[f64], seed: u64) -> Result<Vec<f64>> {
        self.require_variance()?;
        check_times(times)?;
        Ok(times
            .windows(2)
            .enumerate()
            .map(|(k, w)| {
                let mut rng = keyed_rng(seed, &[k as u64]);
                self.draw_cell(w[1] - w[0], &mut rng).total()
            })
            .collect())
    }
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.len() < 2 {
        return Err(Error::InvalidGrid("need at least two time points".into()));
    }
    if let Some(w) = times.windows(2).find(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidGrid(format!(
            "times must be strictly increasing ({} followed by {})",
            w[0], w[1]
        )));
    }
    Ok(())
}

fn normal<R: Rng + ?Sized>(mean: f64, std: f64, rng: &mut R) -> f64 {
    if std > 0.0 {
        Normal::new(mean, std).expect("finite std").sample(rng)
    } else {
        mean
    }
}

/// Increment of the noise over one interval, kept in a form that can be
/// split conditionally on its total.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseCell {
    pub len: f64,
    pub gauss: f64,
    pub count: u64,
    pub jumps: f64,
}

impl NoiseCell {
    pub fn total(&self) -> f64 {
        self.gauss + self.jumps
    }

    /// Splits into left and right halves whose joint law given this cell is
    /// exact; the halves add back up to the parent.
    pub fn bisect<R: Rng + ?Sized>(&self, model: &LevyModel, rng: &mut R) -> (NoiseCell, NoiseCell) {
        let half = 0.5 * self.len;
        // Brownian bridge midpoint: N(w/2, ΣH/4)
        let g_left = if model.brownian_variance() > 0.0 {
            normal(0.5 * self.gauss, 0.5 * (model.brownian_variance() * self.len).sqrt(), rng)
        } else {
            0.0
        };
        let (k, j_left) = if self.count > 0 {
            let k = Binomial::new(self.count, 0.5).expect("valid binomial").sample(rng);
            let n = self.count as f64;
            let kf = k as f64;
            let std = model.jump_std() * (kf * (n - kf) / n).sqrt();
            (k, normal(self.jumps * kf / n, std, rng))
        } else {
            (0, 0.0)
        };
        let left = NoiseCell {
            len: half,
            gauss: g_left,
            count: k,
            jumps: j_left,
        };
        let right = NoiseCell {
            len: half,
            gauss: self.gauss - g_left,
            count: self.count - k,
            jumps: self.jumps - j_left,
        };
        (left, right)
    }
}

/// Dyadically refinable increments over a fixed interval.
///
/// Level `l` holds `2^l` equal cells; moving to level `l + 1` bisects each
/// cell with a generator keyed by `(seed, l, k)`, so every level is a
/// refinement of the previous one.
#[derive(Debug, Clone)]
pub struct IncrementTape {
    model: LevyModel,
    seed: u64,
    start: f64,
    level: u32,
    cells: Vec<NoiseCell>,
}

impl IncrementTape {
    pub fn new(model: LevyModel, start: f64, end: f64, seed: u64) -> Result<Self> {
        model.require_variance()?;
        check_times(&[start, end])?;
        let mut rng = keyed_rng(seed, &[u64::MAX]);
        let root = model.draw_cell(end - start, &mut rng);
        Ok(Self {
            model,
            seed,
            start,
            level: 0,
            cells: vec![root],
        })
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn times(&self) -> Vec<f64> {
        let h = self.cells[0].len;
        (0..=self.cells.len()).map(|k| self.start + k as f64 * h).collect()
    }

    pub fn increments(&self) -> Vec<f64> {
        self.cells.iter().map(NoiseCell::total).collect()
    }

    pub fn refine(&mut self) {
        let mut next = Vec::with_capacity(2 * self.cells.len());
        for (k, cell) in self.cells.iter().enumerate() {
            let mut rng = keyed_rng(self.seed, &[self.level as u64, k as u64]);
            let (l, r) = cell.bisect(&self.model, &mut rng);
            next.push(l);
            next.push(r);
        }
        self.cells = next;
        self.level += 1;
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent generator for a `(seed, keys...)` address.
pub(crate) fn keyed_rng(seed: u64, keys: &[u64]) -> ChaCha8Rng {
    let mut h = splitmix64(seed);
    for k in keys {
        h = splitmix64(h ^ splitmix64(*k));
    }
    ChaCha8Rng::seed_from_u64(h)
}
