//! Scalar fields over the domain: constants, named built-ins, and arbitrary
//! callables (used for manufactured sources and boundary data).

use crate::error::{Result, RitzError};
use std::fmt;
use std::sync::Arc;

/// A scalar coefficient / source / boundary-data field c(x).
#[derive(Clone)]
pub enum Field {
    Const(f64),
    /// -sin(pi * x_last); for the Burgers problem this matches the initial
    /// condition on the t=0 facet and vanishes on the x = +-1 facets.
    NegSinPiLast,
    Custom(Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>),
}

impl Field {
    pub fn zero() -> Self {
        Field::Const(0.0)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Field::Const(c) => *c,
            Field::NegSinPiLast => -(std::f64::consts::PI * x[x.len() - 1]).sin(),
            Field::Custom(f) => f(x),
        }
    }

    /// Parses a built-in field id: "zero", "one", "neg_sin_pi_x", "const:<v>".
    pub fn parse(id: &str) -> Result<Self> {
        match id {
            "zero" => Ok(Field::Const(0.0)),
            "one" => Ok(Field::Const(1.0)),
            "neg_sin_pi_x" => Ok(Field::NegSinPiLast),
            _ => {
                if let Some(v) = id.strip_prefix("const:") {
                    let c: f64 = v
                        .parse()
                        .map_err(|_| RitzError::UnknownFunction(id.to_string()))?;
                    Ok(Field::Const(c))
                } else {
                    Err(RitzError::UnknownFunction(id.to_string()))
                }
            }
        }
    }
}

impl fmt::Debug for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Field::Const(c) => write!(f, "Const({c})"),
            Field::NegSinPiLast => write!(f, "NegSinPiLast"),
            Field::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

/// The zero-order nonlinearity h(u) with its derivative, audited at runtime
/// for the sign condition h(u) * u >= 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HFun {
    Zero,
    Cube,
}

impl HFun {
    pub fn eval(&self, u: f64) -> Result<f64> {
        let v = match self {
            HFun::Zero => 0.0,
            HFun::Cube => u * u * u,
        };
        if v * u < 0.0 {
            return Err(RitzError::SignAudit { u, value: v * u });
        }
        Ok(v)
    }

    pub fn deriv(&self, u: f64) -> f64 {
        match self {
            HFun::Zero => 0.0,
            HFun::Cube => 3.0 * u * u,
        }
    }

    pub fn parse(id: &str) -> Result<Self> {
        match id {
            "zero" => Ok(HFun::Zero),
            "cube" => Ok(HFun::Cube),
            _ => Err(RitzError::UnknownFunction(id.to_string())),
        }
    }
}
