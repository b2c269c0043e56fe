//! State-space and CARMA model containers and their JSON form.
//!
//! A state-space model is `dX = A(t)X dt + C(t) dL`, `Y = B(t)'X`. A CARMA
//! model is given by its AR coefficients `a_1..a_p` and MA coefficients
//! `b_0..b_q` and maps to the companion realization.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::function::{MatrixFunction, ScalarFunction};
use crate::levy::LevyModel;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceModel {
    a: MatrixFunction,
    b: MatrixFunction,
    c: MatrixFunction,
    levy: LevyModel,
}

impl StateSpaceModel {
    pub fn new(a: MatrixFunction, b: MatrixFunction, c: MatrixFunction, levy: LevyModel) -> Result<Self> {
        let p = a.rows();
        if a.cols() != p {
            return Err(Error::ShapeMismatch(format!("A must be square, got {}x{}", a.rows(), a.cols())));
        }
        for (name, v) in [("B", &b), ("C", &c)] {
            if v.rows() != p || v.cols() != 1 {
                return Err(Error::ShapeMismatch(format!(
                    "{name} must be {p}x1, got {}x{}",
                    v.rows(),
                    v.cols()
                )));
            }
        }
        Ok(Self { a, b, c, levy })
    }

    /// Time-varying CAR(1): `dX = -a(t) X dt + dL`, `Y = X`.
    pub fn car1(a: ScalarFunction, levy: LevyModel) -> Self {
        let one = || MatrixFunction::column(vec![ScalarFunction::Constant(1.0)]).expect("1x1");
        let a = MatrixFunction::new(1, 1, vec![a.negated()]).expect("1x1");
        Self { a, b: one(), c: one(), levy }
    }

    /// Constant-coefficient model.
    pub fn constant(a: &DMatrix<f64>, b: &[f64], c: &[f64], levy: LevyModel) -> Result<Self> {
        let col = |v: &[f64]| MatrixFunction::column(v.iter().map(|x| ScalarFunction::Constant(*x)).collect());
        Self::new(MatrixFunction::constant(a), col(b)?, col(c)?, levy)
    }

    pub fn dim(&self) -> usize {
        self.a.rows()
    }

    pub fn a(&self) -> &MatrixFunction {
        &self.a
    }

    pub fn b(&self) -> &MatrixFunction {
        &self.b
    }

    pub fn c(&self) -> &MatrixFunction {
        &self.c
    }

    pub fn levy(&self) -> &LevyModel {
        &self.levy
    }

    pub fn with_levy(mut self, levy: LevyModel) -> Self {
        self.levy = levy;
        self
    }

    pub fn is_constant(&self) -> bool {
        self.a.is_constant() && self.b.is_constant() && self.c.is_constant()
    }

    pub fn is_continuous(&self) -> bool {
        self.a.is_continuous() && self.b.is_continuous() && self.c.is_continuous()
    }

    /// Points where any coefficient jumps.
    pub fn discontinuities(&self) -> Vec<f64> {
        let mut d = self.a.discontinuities();
        d.extend(self.b.discontinuities());
        d.extend(self.c.discontinuities());
        d.sort_by(f64::total_cmp);
        d.dedup();
        d
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CarmaModel {
    ar: Vec<ScalarFunction>,
    ma: Vec<ScalarFunction>,
    levy: LevyModel,
}

impl CarmaModel {
    /// `ar = [a_1, .., a_p]`, `ma = [b_0, .., b_q]` with `p > q`.
    pub fn new(ar: Vec<ScalarFunction>, ma: Vec<ScalarFunction>, levy: LevyModel) -> Result<Self> {
        if ar.is_empty() {
            return Err(Error::param("ar", "need at least one AR coefficient (p >= 1)"));
        }
        if ma.is_empty() || ma.len() > ar.len() {
            return Err(Error::param(
                "ma",
                format!("need 1..=p MA coefficients so that p > q (p = {}, got {})", ar.len(), ma.len()),
            ));
        }
        Ok(Self { ar, ma, levy })
    }

    pub fn p(&self) -> usize {
        self.ar.len()
    }

    pub fn q(&self) -> usize {
        self.ma.len() - 1
    }

    pub fn ar(&self) -> &[ScalarFunction] {
        &self.ar
    }

    pub fn ma(&self) -> &[ScalarFunction] {
        &self.ma
    }

    pub fn levy(&self) -> &LevyModel {
        &self.levy
    }

    /// Companion realization: `𝒜` has ones on the superdiagonal and last row
    /// `(-a_p, .., -a_1)`, `ℬ = (b_0, .., b_{p-1})'` padded with zeros,
    /// `𝒞 = e_p`.
    pub fn to_state_space(&self) -> StateSpaceModel {
        let p = self.p();
        let mut a = Vec::with_capacity(p * p);
        for i in 0..p {
            for j in 0..p {
                a.push(if i + 1 == p {
                    self.ar[p - 1 - j].negated()
                } else if j == i + 1 {
                    ScalarFunction::Constant(1.0)
                } else {
                    ScalarFunction::Constant(0.0)
                });
            }
        }
        let b = (0..p)
            .map(|i| self.ma.get(i).cloned().unwrap_or(ScalarFunction::Constant(0.0)))
            .collect();
        let c = (0..p)
            .map(|i| ScalarFunction::Constant(if i + 1 == p { 1.0 } else { 0.0 }))
            .collect();
        StateSpaceModel {
            a: MatrixFunction::new(p, p, a).expect("p x p"),
            b: MatrixFunction::column(b).expect("p x 1"),
            c: MatrixFunction::column(c).expect("p x 1"),
            levy: self.levy,
        }
    }
}

/// A model as read from a file: either form.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    StateSpace(StateSpaceModel),
    Carma(CarmaModel),
}

impl Model {
    pub fn state_space(&self) -> StateSpaceModel {
        match self {
            Model::StateSpace(m) => m.clone(),
            Model::Carma(m) => m.to_state_space(),
        }
    }

    /// Parses the JSON model format. Errors name the offending field, e.g.
    /// `A[1][0]: unknown family ...`. A missing `levy` block means standard
    /// Brownian motion.
    pub fn from_json_str(s: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(s).map_err(|e| Error::Model(e.to_string()))?;
        Self::from_json_value(value)
    }

    pub fn from_json_value(value: serde_json::Value) -> Result<Self> {
        let is_carma = value.get("ar").is_some() || value.get("ma").is_some();
        let named = |e: serde_path_to_error::Error<serde_json::Error>| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            if path == "." {
                Error::Model(inner.to_string())
            } else {
                Error::Model(format!("{path}: {inner}"))
            }
        };
        if is_carma {
            let r: CarmaRepr = serde_path_to_error::deserialize(value).map_err(named)?;
            if r.ar.len() != r.p {
                return Err(Error::Model(format!("ar: expected p = {} coefficients, got {}", r.p, r.ar.len())));
            }
            if r.ma.len() != r.q + 1 {
                return Err(Error::Model(format!("ma: expected q + 1 = {} coefficients, got {}", r.q + 1, r.ma.len())));
            }
            if r.q >= r.p {
                return Err(Error::Model(format!("q: must be < p (p = {}, q = {})", r.p, r.q)));
            }
            Ok(Model::Carma(CarmaModel::new(r.ar, r.ma, r.levy.unwrap_or_default()).map_err(|e| Error::Model(e.to_string()))?))
        } else {
            let r: StateSpaceRepr = serde_path_to_error::deserialize(value).map_err(named)?;
            if r.a.len() != r.p || r.a.iter().any(|row| row.len() != r.p) {
                return Err(Error::Model(format!("A: expected a {p}x{p} array", p = r.p)));
            }
            if r.b.len() != r.p {
                return Err(Error::Model(format!("B: expected {} entries, got {}", r.p, r.b.len())));
            }
            if r.c.len() != r.p {
                return Err(Error::Model(format!("C: expected {} entries, got {}", r.p, r.c.len())));
            }
            if r.p == 0 {
                return Err(Error::Model("p: must be >= 1".into()));
            }
            let a = MatrixFunction::from_rows(r.a)?;
            let m = StateSpaceModel::new(a, MatrixFunction::column(r.b)?, MatrixFunction::column(r.c)?, r.levy.unwrap_or_default())?;
            Ok(Model::StateSpace(m))
        }
    }

    pub fn to_json_value(&self) -> Result<serde_json::Value> {
        let v = match self {
            Model::StateSpace(m) => serde_json::to_value(StateSpaceOut {
                p: m.dim(),
                a: m.a().entries().chunks(m.dim()).collect(),
                b: m.b(),
                c: m.c(),
                levy: m.levy(),
            }),
            Model::Carma(m) => serde_json::to_value(CarmaOut {
                p: m.p(),
                q: m.q(),
                ar: m.ar(),
                ma: m.ma(),
                levy: m.levy(),
            }),
        };
        v.map_err(|e| Error::Model(e.to_string()))
    }
}

impl From<StateSpaceModel> for Model {
    fn from(m: StateSpaceModel) -> Self {
        Model::StateSpace(m)
    }
}

impl From<CarmaModel> for Model {
    fn from(m: CarmaModel) -> Self {
        Model::Carma(m)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StateSpaceRepr {
    p: usize,
    #[serde(rename = "A")]
    a: Vec<Vec<ScalarFunction>>,
    #[serde(rename = "B")]
    b: Vec<ScalarFunction>,
    #[serde(rename = "C")]
    c: Vec<ScalarFunction>,
    #[serde(default)]
    levy: Option<LevyModel>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CarmaRepr {
    p: usize,
    q: usize,
    ar: Vec<ScalarFunction>,
    ma: Vec<ScalarFunction>,
    #[serde(default)]
    levy: Option<LevyModel>,
}

#[derive(Serialize)]
struct StateSpaceOut<'a> {
    p: usize,
    #[serde(rename = "A")]
    a: Vec<&'a [ScalarFunction]>,
    #[serde(rename = "B")]
    b: &'a MatrixFunction,
    #[serde(rename = "C")]
    c: &'a MatrixFunction,
    levy: &'a LevyModel,
}

#[derive(Serialize)]
struct CarmaOut<'a> {
    p: usize,
    q: usize,
    ar: &'a [ScalarFunction],
    ma: &'a [ScalarFunction],
    levy: &'a LevyModel,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn car1_companion_is_scalar() {
        let a = ScalarFunction::sinusoidal(1.0, 0.5, 1.0, 0.0);
        let m = CarmaModel::new(vec![a.clone()], vec![1.0.into()], LevyModel::default()).unwrap();
        let ss = m.to_state_space();
        assert_eq!(ss.dim(), 1);
        for t in [-1.0, 0.0, 2.5] {
            assert_eq!(ss.a().evaluate(t)[(0, 0)], -a.eval(t));
            assert_eq!(ss.b().evaluate(t)[(0, 0)], 1.0);
            assert_eq!(ss.c().evaluate(t)[(0, 0)], 1.0);
        }
    }

    #[test]
    fn carma21_companion() {
        let m = CarmaModel::new(vec![5.0.into(), 6.0.into()], vec![5.0.into(), 2.0.into()], LevyModel::default()).unwrap();
        let ss = m.to_state_space();
        assert_eq!(ss.a().evaluate(0.0), DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -6.0, -5.0]));
        assert_eq!(ss.b().evaluate(0.0).as_slice(), &[5.0, 2.0]);
        assert_eq!(ss.c().evaluate(0.0).as_slice(), &[0.0, 1.0]);
    }

    #[test]
    fn carma20_pads_ma() {
        let m = CarmaModel::new(vec![3.0.into(), 2.0.into()], vec![1.0.into()], LevyModel::default()).unwrap();
        let ss = m.to_state_space();
        assert_eq!(ss.a().evaluate(0.0), DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -2.0, -3.0]));
        assert_eq!(ss.b().evaluate(0.0).as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn p_must_exceed_q() {
        assert!(CarmaModel::new(vec![1.0.into()], vec![1.0.into(), 1.0.into()], LevyModel::default()).is_err());
    }

    #[test]
    fn json_errors_name_the_field() {
        let bad = r#"{"p":2,"A":[[0,1],[{"family":"cosine","params":[1]},1]],"B":[1,1],"C":[0,1]}"#;
        let e = Model::from_json_str(bad).unwrap_err().to_string();
        assert!(e.contains("A[1][0]"), "{e}");
        let bad_levy = r#"{"p":1,"q":0,"ar":[1],"ma":[1],"levy":{"brownian_variance":-1}}"#;
        let e = Model::from_json_str(bad_levy).unwrap_err().to_string();
        assert!(e.contains("levy"), "{e}");
        let extra = r#"{"p":1,"A":[[1]],"B":[1],"C":[1],"D":[1]}"#;
        assert!(Model::from_json_str(extra).unwrap_err().to_string().contains("unknown field"));
    }

    #[test]
    fn json_roundtrip() {
        let src = r#"{"p":1,"q":0,"ar":[{"family":"tanh","params":[1.5,0.5,1,0]}],"ma":[1],"levy":{"brownian_variance":1}}"#;
        let m = Model::from_json_str(src).unwrap();
        let v = m.to_json_value().unwrap();
        assert_eq!(Model::from_json_value(v).unwrap(), m);
        let ss = Model::StateSpace(m.state_space());
        assert_eq!(Model::from_json_value(ss.to_json_value().unwrap()).unwrap(), ss);
    }
}
