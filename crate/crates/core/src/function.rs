//! Time-indexed coefficient functions.
//!
//! A [`ScalarFunction`] is one of a closed set of parametric families (so that
//! models can be written to and read from JSON) or an in-process callback.
//! [`MatrixFunction`] is a dense grid of scalar functions.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::de::{self, MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::{Error, Result};

/// Which one-sided limit to take at a discontinuity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

type Callback = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum ScalarFunction {
    Constant(f64),
    /// `a0 + a1·t`
    Affine { a0: f64, a1: f64 },
    /// `a0 + a1·sin(ω t + φ)`
    Sinusoidal { a0: f64, a1: f64, omega: f64, phi: f64 },
    /// `a0 + a1 / (1 + exp(-k (t - t0)))`
    Logistic { a0: f64, a1: f64, k: f64, t0: f64 },
    /// Continuous piecewise polynomial. `pieces[i]` holds coefficients in
    /// powers of `t` and is active on `[breaks[i-1], breaks[i])`; the first
    /// and last pieces extend to `∓∞`.
    PiecewisePolynomial { breaks: Vec<f64>, pieces: Vec<Vec<f64>> },
    /// `left` for `t <= at`, `right` for `t > at`. Discontinuous.
    Step { at: f64, left: f64, right: f64 },
    /// User-supplied continuous function; derivatives by central differences.
    Callback(Callback),
}

impl fmt::Debug for ScalarFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalarFunction::Callback(_) => f.write_str("Callback(..)"),
            other => write!(f, "{}", serde_json::to_string(other).unwrap_or_default()),
        }
    }
}

impl PartialEq for ScalarFunction {
    fn eq(&self, other: &Self) -> bool {
        use ScalarFunction::*;
        match (self, other) {
            (Callback(a), Callback(b)) => Arc::ptr_eq(a, b),
            (Callback(_), _) | (_, Callback(_)) => false,
            (a, b) => serde_json::to_value(a).ok() == serde_json::to_value(b).ok(),
        }
    }
}

impl From<f64> for ScalarFunction {
    fn from(c: f64) -> Self {
        ScalarFunction::Constant(c)
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Coefficients of the polynomial `P_n` with `σ^{(n)}(x) = P_n(σ(x))`.
fn sigmoid_derivative_poly(order: usize) -> Vec<f64> {
    // P_0(s) = s, P_{n+1}(s) = P_n'(s)·(s - s²)
    let mut p = vec![0.0, 1.0];
    for _ in 0..order {
        let dp: Vec<f64> = (1..p.len()).map(|i| i as f64 * p[i]).collect();
        let mut next = vec![0.0; dp.len() + 2];
        for (i, c) in dp.iter().enumerate() {
            next[i + 1] += c;
            next[i + 2] -= c;
        }
        p = next;
    }
    p
}

fn poly_eval(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

fn poly_derivative(coeffs: &[f64], order: usize) -> Vec<f64> {
    let mut c = coeffs.to_vec();
    for _ in 0..order {
        if c.len() <= 1 {
            return vec![0.0];
        }
        c = (1..c.len()).map(|i| i as f64 * c[i]).collect();
    }
    c
}

impl ScalarFunction {
    pub fn constant(c: f64) -> Self {
        ScalarFunction::Constant(c)
    }

    pub fn affine(a0: f64, a1: f64) -> Self {
        ScalarFunction::Affine { a0, a1 }
    }

    pub fn sinusoidal(a0: f64, a1: f64, omega: f64, phi: f64) -> Self {
        ScalarFunction::Sinusoidal { a0, a1, omega, phi }
    }

    pub fn logistic(a0: f64, a1: f64, k: f64, t0: f64) -> Self {
        ScalarFunction::Logistic { a0, a1, k, t0 }
    }

    /// `a0 + a1·tanh(k (t - t0))`, expressed through the logistic family.
    pub fn tanh(a0: f64, a1: f64, k: f64, t0: f64) -> Self {
        ScalarFunction::Logistic {
            a0: a0 - a1,
            a1: 2.0 * a1,
            k: 2.0 * k,
            t0,
        }
    }

    pub fn polynomial(coeffs: Vec<f64>) -> Self {
        ScalarFunction::PiecewisePolynomial {
            breaks: Vec::new(),
            pieces: vec![coeffs],
        }
    }

    /// Continuous piecewise polynomial; continuity at each break is checked
    /// to a relative tolerance of `1e-9`.
    pub fn piecewise_polynomial(breaks: Vec<f64>, pieces: Vec<Vec<f64>>) -> Result<Self> {
        let f = ScalarFunction::PiecewisePolynomial { breaks, pieces };
        f.validate()?;
        Ok(f)
    }

    pub fn step(at: f64, left: f64, right: f64) -> Self {
        ScalarFunction::Step { at, left, right }
    }

    pub fn callback<F: Fn(f64) -> f64 + Send + Sync + 'static>(f: F) -> Self {
        ScalarFunction::Callback(Arc::new(f))
    }

    /// The function `t ↦ -f(t)`, staying inside the same family.
    pub fn negated(&self) -> Self {
        use ScalarFunction::*;
        match self {
            Constant(c) => Constant(-c),
            Affine { a0, a1 } => Affine { a0: -a0, a1: -a1 },
            Sinusoidal { a0, a1, omega, phi } => Sinusoidal {
                a0: -a0,
                a1: -a1,
                omega: *omega,
                phi: *phi,
            },
            Logistic { a0, a1, k, t0 } => Logistic {
                a0: -a0,
                a1: -a1,
                k: *k,
                t0: *t0,
            },
            PiecewisePolynomial { breaks, pieces } => PiecewisePolynomial {
                breaks: breaks.clone(),
                pieces: pieces.iter().map(|p| p.iter().map(|c| -c).collect()).collect(),
            },
            Step { at, left, right } => Step {
                at: *at,
                left: -left,
                right: -right,
            },
            Callback(f) => {
                let f = Arc::clone(f);
                ScalarFunction::callback(move |t| -f(t))
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        use ScalarFunction::*;
        let finite = |name: &str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::param(name, format!("must be finite, got {v}")))
            }
        };
        match self {
            Constant(c) => finite("params[0]", *c),
            Affine { a0, a1 } => {
                finite("params[0]", *a0)?;
                finite("params[1]", *a1)
            }
            Sinusoidal { a0, a1, omega, phi } => {
                for (i, v) in [a0, a1, omega, phi].iter().enumerate() {
                    finite(&format!("params[{i}]"), **v)?;
                }
                Ok(())
            }
            Logistic { a0, a1, k, t0 } => {
                for (i, v) in [a0, a1, k, t0].iter().enumerate() {
                    finite(&format!("params[{i}]"), **v)?;
                }
                Ok(())
            }
            Step { at, left, right } => {
                for (i, v) in [at, left, right].iter().enumerate() {
                    finite(&format!("params[{i}]"), **v)?;
                }
                Ok(())
            }
            PiecewisePolynomial { breaks, pieces } => {
                if pieces.len() != breaks.len() + 1 {
                    return Err(Error::param(
                        "pieces",
                        format!("need breaks.len() + 1 = {} pieces, got {}", breaks.len() + 1, pieces.len()),
                    ));
                }
                if pieces.iter().any(|p| p.is_empty()) {
                    return Err(Error::param("pieces", "every piece needs at least one coefficient"));
                }
                if breaks.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::param("breaks", "must be strictly increasing"));
                }
                for (i, b) in breaks.iter().enumerate() {
                    finite("breaks", *b)?;
                    let l = poly_eval(&pieces[i], *b);
                    let r = poly_eval(&pieces[i + 1], *b);
                    if (l - r).abs() > 1e-9 * (1.0 + l.abs().max(r.abs())) {
                        return Err(Error::param(
                            "pieces",
                            format!("discontinuous at break {b}: {l} vs {r} (use the step family for jumps)"),
                        ));
                    }
                }
                for p in pieces {
                    for c in p {
                        finite("pieces", *c)?;
                    }
                }
                Ok(())
            }
            Callback(_) => Ok(()),
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        use ScalarFunction::*;
        match self {
            Constant(c) => *c,
            Affine { a0, a1 } => a0 + a1 * t,
            Sinusoidal { a0, a1, omega, phi } => a0 + a1 * (omega * t + phi).sin(),
            Logistic { a0, a1, k, t0 } => a0 + a1 * sigmoid(k * (t - t0)),
            PiecewisePolynomial { breaks, pieces } => poly_eval(&pieces[piece_index(breaks, t)], t),
            Step { at, left, right } => {
                if t <= *at {
                    *left
                } else {
                    *right
                }
            }
            Callback(f) => f(t),
        }
    }

    /// One-sided limit; differs from [`eval`](Self::eval) only at a step.
    pub fn eval_limit(&self, t: f64, side: Side) -> f64 {
        match self {
            ScalarFunction::Step { at, left, right } if t == *at => match side {
                Side::Left => *left,
                Side::Right => *right,
            },
            _ => self.eval(t),
        }
    }

    pub fn is_continuous(&self) -> bool {
        !matches!(self, ScalarFunction::Step { .. })
    }

    /// Whether derivatives of every order are available in closed form.
    pub fn is_analytic(&self) -> bool {
        !matches!(self, ScalarFunction::Callback(_) | ScalarFunction::Step { .. })
    }

    /// Points where the function (or one of its derivatives) may jump.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            ScalarFunction::Step { at, .. } => vec![*at],
            ScalarFunction::PiecewisePolynomial { breaks, .. } => breaks.clone(),
            _ => Vec::new(),
        }
    }

    /// Derivative of the given order. At a piecewise-polynomial break the
    /// right-hand derivative is returned; a step has no derivative at its
    /// jump; callbacks support first order only (central difference with
    /// `h = 1e-6·max(1, |t|)`).
    pub fn derivative(&self, t: f64, order: usize) -> Result<f64> {
        use ScalarFunction::*;
        if order == 0 {
            return Ok(self.eval(t));
        }
        Ok(match self {
            Constant(_) => 0.0,
            Affine { a1, .. } => {
                if order == 1 {
                    *a1
                } else {
                    0.0
                }
            }
            Sinusoidal { a1, omega, phi, .. } => {
                a1 * omega.powi(order as i32) * (omega * t + phi + order as f64 * std::f64::consts::FRAC_PI_2).sin()
            }
            Logistic { a1, k, t0, .. } => {
                let s = sigmoid(k * (t - t0));
                a1 * k.powi(order as i32) * poly_eval(&sigmoid_derivative_poly(order), s)
            }
            PiecewisePolynomial { breaks, pieces } => {
                poly_eval(&poly_derivative(&pieces[piece_index(breaks, t)], order), t)
            }
            Step { at, .. } => {
                if t == *at {
                    return Err(Error::NotDifferentiable(format!("step function at its break t = {at}")));
                }
                0.0
            }
            Callback(f) => {
                if order > 1 {
                    return Err(Error::NotDifferentiable(format!(
                        "callback functions only provide first derivatives (requested order {order})"
                    )));
                }
                let h = 1e-6 * t.abs().max(1.0);
                (f(t + h) - f(t - h)) / (2.0 * h)
            }
        })
    }
}

/// Index of the active piece: piece `i` covers `[breaks[i-1], breaks[i])`.
fn piece_index(breaks: &[f64], t: f64) -> usize {
    breaks.partition_point(|b| *b <= t)
}

// ---- serde -----------------------------------------------------------------

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FunctionRepr {
    family: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    params: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    breaks: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pieces: Option<Vec<Vec<f64>>>,
}

impl TryFrom<FunctionRepr> for ScalarFunction {
    type Error = String;

    fn try_from(r: FunctionRepr) -> std::result::Result<Self, String> {
        let want = |n: usize| -> std::result::Result<&[f64], String> {
            if r.params.len() == n {
                Ok(&r.params)
            } else {
                Err(format!(
                    "family `{}` takes {n} params, got {}",
                    r.family,
                    r.params.len()
                ))
            }
        };
        let f = match r.family.as_str() {
            "constant" => ScalarFunction::Constant(want(1)?[0]),
            "affine" => {
                let p = want(2)?;
                ScalarFunction::affine(p[0], p[1])
            }
            "sinusoidal" => {
                let p = want(4)?;
                ScalarFunction::sinusoidal(p[0], p[1], p[2], p[3])
            }
            "logistic" => {
                let p = want(4)?;
                ScalarFunction::logistic(p[0], p[1], p[2], p[3])
            }
            "tanh" => {
                let p = want(4)?;
                ScalarFunction::tanh(p[0], p[1], p[2], p[3])
            }
            "polynomial" => ScalarFunction::polynomial(r.params.clone()),
            "piecewise_polynomial" => ScalarFunction::PiecewisePolynomial {
                breaks: r.breaks.clone().unwrap_or_default(),
                pieces: r.pieces.clone().ok_or("family `piecewise_polynomial` needs `pieces`")?,
            },
            "step" => {
                let p = want(3)?;
                ScalarFunction::step(p[0], p[1], p[2])
            }
            other => {
                return Err(format!(
                    "unknown family `{other}` (expected constant, affine, sinusoidal, logistic, tanh, polynomial, piecewise_polynomial, step)"
                ))
            }
        };
        f.validate().map_err(|e| e.to_string())?;
        Ok(f)
    }
}

impl Serialize for ScalarFunction {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use ScalarFunction::*;
        let repr = |family: &str, params: Vec<f64>| FunctionRepr {
            family: family.to_string(),
            params,
            breaks: None,
            pieces: None,
        };
        let r = match self {
            Constant(c) => repr("constant", vec![*c]),
            Affine { a0, a1 } => repr("affine", vec![*a0, *a1]),
            Sinusoidal { a0, a1, omega, phi } => repr("sinusoidal", vec![*a0, *a1, *omega, *phi]),
            Logistic { a0, a1, k, t0 } => repr("logistic", vec![*a0, *a1, *k, *t0]),
            PiecewisePolynomial { breaks, pieces } => FunctionRepr {
                family: "piecewise_polynomial".into(),
                params: Vec::new(),
                breaks: Some(breaks.clone()),
                pieces: Some(pieces.clone()),
            },
            Step { at, left, right } => repr("step", vec![*at, *left, *right]),
            Callback(_) => return Err(serde::ser::Error::custom("callback functions cannot be serialized")),
        };
        r.serialize(s)
    }
}

impl<'de> Deserialize<'de> for ScalarFunction {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct FnVisitor;

        impl<'de> Visitor<'de> for FnVisitor {
            type Value = ScalarFunction;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a number or a {\"family\": .., \"params\": [..]} object")
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Self::Value, E> {
                Ok(ScalarFunction::Constant(v))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Self::Value, E> {
                Ok(ScalarFunction::Constant(v as f64))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Self::Value, E> {
                Ok(ScalarFunction::Constant(v as f64))
            }

            fn visit_map<M: MapAccess<'de>>(self, map: M) -> std::result::Result<Self::Value, M::Error> {
                let repr = FunctionRepr::deserialize(de::value::MapAccessDeserializer::new(map))?;
                ScalarFunction::try_from(repr).map_err(de::Error::custom)
            }
        }

        d.deserialize_any(FnVisitor)
    }
}

// ---- matrices ----------------------------------------------------------------

/// Dense `rows × cols` matrix of scalar coefficient functions.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixFunction {
    rows: usize,
    cols: usize,
    entries: Vec<ScalarFunction>,
}

impl MatrixFunction {
    /// Builds from row-major entries.
    pub fn new(rows: usize, cols: usize, entries: Vec<ScalarFunction>) -> Result<Self> {
        if rows == 0 || cols == 0 || entries.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "{rows}x{cols} matrix function needs {} entries, got {}",
                rows * cols,
                entries.len()
            )));
        }
        Ok(Self { rows, cols, entries })
    }

    pub fn from_rows(rows: Vec<Vec<ScalarFunction>>) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::ShapeMismatch("ragged rows in matrix function".into()));
        }
        Self::new(r, c, rows.into_iter().flatten().collect())
    }

    /// Column vector `p × 1`.
    pub fn column(entries: Vec<ScalarFunction>) -> Result<Self> {
        let n = entries.len();
        Self::new(n, 1, entries)
    }

    pub fn constant(m: &DMatrix<f64>) -> Self {
        let mut entries = Vec::with_capacity(m.len());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                entries.push(ScalarFunction::Constant(m[(i, j)]));
            }
        }
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            entries,
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::constant(&DMatrix::zeros(rows, cols))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn entry(&self, i: usize, j: usize) -> &ScalarFunction {
        &self.entries[i * self.cols + j]
    }

    pub fn entries(&self) -> &[ScalarFunction] {
        &self.entries
    }

    pub fn evaluate(&self, t: f64) -> DMatrix<f64> {
        DMatrix::from_row_iterator(self.rows, self.cols, self.entries.iter().map(|f| f.eval(t)))
    }

    pub fn evaluate_limit(&self, t: f64, side: Side) -> DMatrix<f64> {
        DMatrix::from_row_iterator(
            self.rows,
            self.cols,
            self.entries.iter().map(|f| f.eval_limit(t, side)),
        )
    }

    /// Entrywise derivative of the given order (see [`ScalarFunction::derivative`]).
    pub fn derivative_of_order(&self, t: f64, order: usize) -> Result<DMatrix<f64>> {
        let vals = self
            .entries
            .iter()
            .map(|f| f.derivative(t, order))
            .collect::<Result<Vec<_>>>()?;
        Ok(DMatrix::from_row_slice(self.rows, self.cols, &vals))
    }

    pub fn derivative(&self, t: f64) -> Result<DMatrix<f64>> {
        self.derivative_of_order(t, 1)
    }

    pub fn is_continuous(&self) -> bool {
        self.entries.iter().all(ScalarFunction::is_continuous)
    }

    pub fn is_analytic(&self) -> bool {
        self.entries.iter().all(ScalarFunction::is_analytic)
    }

    pub fn is_constant(&self) -> bool {
        self.entries.iter().all(|f| matches!(f, ScalarFunction::Constant(_)))
    }

    /// Sorted, deduplicated discontinuity candidates of all entries.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut b: Vec<f64> = self.entries.iter().flat_map(ScalarFunction::breakpoints).collect();
        b.sort_by(f64::total_cmp);
        b.dedup();
        b
    }

    /// Points where some entry jumps (step families only).
    pub fn discontinuities(&self) -> Vec<f64> {
        let mut b: Vec<f64> = self
            .entries
            .iter()
            .filter(|f| !f.is_continuous())
            .flat_map(ScalarFunction::breakpoints)
            .collect();
        b.sort_by(f64::total_cmp);
        b.dedup();
        b
    }
}

impl Serialize for MatrixFunction {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.cols == 1 {
            self.entries.serialize(s)
        } else {
            let rows: Vec<&[ScalarFunction]> = self.entries.chunks(self.cols).collect();
            rows.serialize(s)
        }
    }
}
