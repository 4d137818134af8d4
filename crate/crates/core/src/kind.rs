use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which singularities are being correlated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SingularityKind {
    /// Zeros of an `n`-component vector field in `n` dimensions.
    VectorZero(usize),
    /// Gradient zeros of a planar scalar field, signed by the hessian.
    Critical2D,
    /// Umbilic points of a planar scalar field, signed by their index.
    Umbilic2D,
}

impl SingularityKind {
    pub fn dimension(&self) -> usize {
        match self {
            SingularityKind::VectorZero(n) => *n,
            _ => 2,
        }
    }

    /// Highest derivative of `C` the kind's density and correlations use.
    pub fn required_order(&self) -> usize {
        match self {
            SingularityKind::VectorZero(_) => 2,
            SingularityKind::Critical2D => 4,
            SingularityKind::Umbilic2D => 6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SingularityKind::VectorZero(0) => Err(Error::Contract("vector dimension must be >= 1".into())),
            _ => Ok(()),
        }
    }

    pub fn label(&self) -> String {
        match self {
            SingularityKind::VectorZero(n) => format!("vector{n}"),
            SingularityKind::Critical2D => "critical".into(),
            SingularityKind::Umbilic2D => "umbilic".into(),
        }
    }
}

impl fmt::Display for SingularityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for SingularityKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "critical" => Ok(SingularityKind::Critical2D),
            "umbilic" => Ok(SingularityKind::Umbilic2D),
            other => other
                .strip_prefix("vector")
                .and_then(|n| n.parse::<usize>().ok())
                .filter(|n| *n >= 1)
                .map(SingularityKind::VectorZero)
                .ok_or_else(|| Error::InvalidParameter(format!("unknown singularity kind '{s}'"))),
        }
    }
}
