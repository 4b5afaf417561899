//! Scalar fields given either as constants or as restricted arithmetic
//! expressions over `x`, `y` and `r = |x|`.
//!
//! Besides the evaluator builtins (`sin`, `cos`, `abs`, `min`, `max`, `log`,
//! `pi()`, `e()`, ...) the namespace provides `sqrt`, `exp` and `ln`.

use std::fmt;

use fasteval::{Compiler, Evaler};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub struct Formula {
    source: String,
    slab: fasteval::Slab,
    instr: fasteval::Instruction,
}

fn namespace(p: [f64; 2]) -> impl FnMut(&str, Vec<f64>) -> Option<f64> {
    move |name: &str, args: Vec<f64>| match (name, args.as_slice()) {
        ("x", []) => Some(p[0]),
        ("y", []) => Some(p[1]),
        ("r", []) => Some((p[0] * p[0] + p[1] * p[1]).sqrt()),
        ("sqrt", [v]) => Some(v.sqrt()),
        ("exp", [v]) => Some(v.exp()),
        ("ln", [v]) => Some(v.ln()),
        _ => None,
    }
}

impl Formula {
    pub fn parse(source: &str) -> Result<Self> {
        let err = |message: String| Error::Formula {
            formula: source.to_string(),
            message,
        };
        let parser = fasteval::Parser::new();
        let mut slab = fasteval::Slab::new();
        let instr = parser
            .parse(source, &mut slab.ps)
            .map_err(|e| err(e.to_string()))?
            .from(&slab.ps)
            .compile(&slab.ps, &mut slab.cs);
        let formula = Formula {
            source: source.to_string(),
            slab,
            instr,
        };
        // Catches unknown identifiers up front.
        let mut ns = namespace([0.25, 0.5]);
        formula
            .instr
            .eval(&formula.slab, &mut ns)
            .map_err(|e| err(e.to_string()))?;
        Ok(formula)
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn eval(&self, p: [f64; 2]) -> f64 {
        let mut ns = namespace(p);
        self.instr.eval(&self.slab, &mut ns).unwrap_or(f64::NAN)
    }
}

impl Clone for Formula {
    fn clone(&self) -> Self {
        Formula::parse(&self.source).expect("formula parsed once already")
    }
}

impl fmt::Debug for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("Formula").field(&self.source).finish()
    }
}

impl PartialEq for Formula {
    fn eq(&self, other: &Self) -> bool {
        self.source == other.source
    }
}

/// A constant or a formula; deserializes from a JSON number or string.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FieldRepr", into = "FieldRepr")]
pub enum ScalarField {
    Constant(f64),
    Formula(Formula),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum FieldRepr {
    Number(f64),
    Text(String),
}

impl TryFrom<FieldRepr> for ScalarField {
    type Error = Error;
    fn try_from(r: FieldRepr) -> Result<Self> {
        match r {
            FieldRepr::Number(c) => Ok(ScalarField::Constant(c)),
            FieldRepr::Text(s) => ScalarField::parse(&s),
        }
    }
}

impl From<ScalarField> for FieldRepr {
    fn from(f: ScalarField) -> Self {
        match f {
            ScalarField::Constant(c) => FieldRepr::Number(c),
            ScalarField::Formula(e) => FieldRepr::Text(e.source),
        }
    }
}

impl ScalarField {
    pub fn parse(source: &str) -> Result<Self> {
        match source.trim().parse::<f64>() {
            Ok(c) => Ok(ScalarField::Constant(c)),
            Err(_) => Ok(ScalarField::Formula(Formula::parse(source)?)),
        }
    }

    pub fn eval(&self, p: [f64; 2]) -> f64 {
        match self {
            ScalarField::Constant(c) => *c,
            ScalarField::Formula(f) => f.eval(p),
        }
    }

    pub fn as_constant(&self) -> Option<f64> {
        match self {
            ScalarField::Constant(c) => Some(*c),
            ScalarField::Formula(_) => None,
        }
    }
}

impl From<f64> for ScalarField {
    fn from(c: f64) -> Self {
        ScalarField::Constant(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_send_sync<T: Send + Sync>() {}

    #[test]
    fn formula_is_shareable() {
        assert_send_sync::<Formula>();
        assert_send_sync::<ScalarField>();
    }

    #[test]
    fn evaluates_variables_and_helpers() {
        let f = Formula::parse("1 + r^2").unwrap();
        assert_eq!(f.eval([0.0, 0.0]), 1.0);
        assert!((f.eval([0.6, 0.8]) - 2.0).abs() < 1e-15);
        let g = Formula::parse("sqrt(x) + exp(0) + ln(e())").unwrap();
        assert!((g.eval([4.0, 0.0]) - 4.0).abs() < 1e-14);
        let h = Formula::parse("sin(pi()*x)*sin(pi()*y)").unwrap();
        assert!((h.eval([0.5, 0.5]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_unknown_identifiers() {
        assert!(Formula::parse("x + z").is_err());
        assert!(Formula::parse("x +").is_err());
    }

    #[test]
    fn scalar_field_json() {
        let c: ScalarField = serde_json::from_str("2.5").unwrap();
        assert_eq!(c.as_constant(), Some(2.5));
        let f: ScalarField = serde_json::from_str("\"x*y\"").unwrap();
        assert_eq!(f.eval([2.0, 3.0]), 6.0);
        assert_eq!(serde_json::to_string(&f).unwrap(), "\"x*y\"");
    }
}
