//! Scalar activations and the metadata the bound analysis reasons about.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::autodiff::logistic;
use crate::error::GraphError;
use crate::interval::Interval;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivationKind {
    Tanh,
    Logistic,
    Relu,
    Identity,
}

impl ActivationKind {
    pub const ALL: [ActivationKind; 4] = [
        ActivationKind::Tanh,
        ActivationKind::Logistic,
        ActivationKind::Relu,
        ActivationKind::Identity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ActivationKind::Tanh => "tanh",
            ActivationKind::Logistic => "logistic",
            ActivationKind::Relu => "relu",
            ActivationKind::Identity => "identity",
        }
    }

    pub fn eval(self, x: f64) -> f64 {
        match self {
            ActivationKind::Tanh => x.tanh(),
            ActivationKind::Logistic => logistic(x),
            ActivationKind::Relu => x.max(0.0),
            ActivationKind::Identity => x,
        }
    }
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ActivationKind {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tanh" => Ok(ActivationKind::Tanh),
            "logistic" | "sigmoid" => Ok(ActivationKind::Logistic),
            "relu" => Ok(ActivationKind::Relu),
            "identity" | "linear" => Ok(ActivationKind::Identity),
            other => Err(GraphError::UnknownActivation(other.to_string())),
        }
    }
}

/// An activation together with its analytic properties.
///
/// `image_bounds == None` means the image is unbounded; `lipschitz == None`
/// means the function is not globally Lipschitz. `limit_neg`/`limit_pos` are
/// the limits at `-∞`/`+∞` when they are finite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActivationSpec {
    pub kind: ActivationKind,
    pub image_bounds: Option<Interval>,
    pub lipschitz: Option<f64>,
    pub nondecreasing: bool,
    pub limit_neg: Option<f64>,
    pub limit_pos: Option<f64>,
}

impl ActivationSpec {
    pub fn builtin(kind: ActivationKind) -> Self {
        match kind {
            ActivationKind::Tanh => ActivationSpec {
                kind,
                image_bounds: Some(Interval::new(-1.0, 1.0)),
                lipschitz: Some(1.0),
                nondecreasing: true,
                limit_neg: Some(-1.0),
                limit_pos: Some(1.0),
            },
            ActivationKind::Logistic => ActivationSpec {
                kind,
                image_bounds: Some(Interval::new(0.0, 1.0)),
                lipschitz: Some(0.25),
                nondecreasing: true,
                limit_neg: Some(0.0),
                limit_pos: Some(1.0),
            },
            ActivationKind::Relu => ActivationSpec {
                kind,
                image_bounds: None,
                lipschitz: Some(1.0),
                nondecreasing: true,
                limit_neg: Some(0.0),
                limit_pos: None,
            },
            ActivationKind::Identity => ActivationSpec {
                kind,
                image_bounds: None,
                lipschitz: Some(1.0),
                nondecreasing: true,
                limit_neg: None,
                limit_pos: None,
            },
        }
    }

    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.kind.eval(x)
    }

    /// Checks the metadata invariants.
    pub fn validate(&self) -> Result<(), GraphError> {
        if let Some(b) = self.image_bounds {
            if !(b.lo <= b.hi) {
                return Err(GraphError::InvalidActivation(format!(
                    "{}: image bounds [{}, {}] are inverted",
                    self.name(),
                    b.lo,
                    b.hi
                )));
            }
        }
        if let Some(l) = self.lipschitz {
            if !(l > 0.0 && l.is_finite()) {
                return Err(GraphError::InvalidActivation(format!(
                    "{}: Lipschitz constant {l} must be positive and finite",
                    self.name()
                )));
            }
        }
        if let (Some(c0), Some(c1), true) = (self.limit_neg, self.limit_pos, self.nondecreasing) {
            if c0 > c1 {
                return Err(GraphError::InvalidActivation(format!(
                    "{}: nondecreasing but limit at -inf ({c0}) exceeds limit at +inf ({c1})",
                    self.name()
                )));
            }
        }
        Ok(())
    }

    /// Sound enclosure of `{σ(t) : t ∈ x}`.
    pub fn image_of(&self, x: Interval) -> Interval {
        let mapped = if self.nondecreasing {
            Interval::new(self.eval_extended(x.lo), self.eval_extended(x.hi))
        } else {
            Interval::TOP
        };
        match self.image_bounds {
            Some(b) => mapped.intersect(b).unwrap_or(b),
            None => mapped,
        }
    }

    fn eval_extended(&self, t: f64) -> f64 {
        if t == f64::NEG_INFINITY {
            self.limit_neg.unwrap_or(f64::NEG_INFINITY)
        } else if t == f64::INFINITY {
            self.limit_pos.unwrap_or(f64::INFINITY)
        } else {
            self.eval(t)
        }
    }
}

/// Looks up a built-in activation by name.
pub fn builtin_activation(name: &str) -> Result<ActivationSpec, GraphError> {
    Ok(ActivationSpec::builtin(name.parse()?))
}
