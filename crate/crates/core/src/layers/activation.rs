use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::numeric::Matrix;
use crate::{Error, Result};

/// Pointwise nonlinearity.
///
/// Serialized as a string: `relu`, `tanh`, `linear`, `elu` (alpha 1) or
/// `elu:<alpha>`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ActivationKind {
    Relu,
    Elu { alpha: f64 },
    Tanh,
    Linear,
}

impl ActivationKind {
    pub const ELU: ActivationKind = ActivationKind::Elu { alpha: 1.0 };

    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            ActivationKind::Relu => z.max(0.0),
            ActivationKind::Elu { alpha } => {
                if z >= 0.0 {
                    z
                } else {
                    alpha * z.exp_m1()
                }
            }
            ActivationKind::Tanh => z.tanh(),
            ActivationKind::Linear => z,
        }
    }

    /// Derivative at `z`; relu'(0) = 0 and elu'(0) = 1.
    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            ActivationKind::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            ActivationKind::Elu { alpha } => {
                if z >= 0.0 {
                    1.0
                } else {
                    alpha * z.exp()
                }
            }
            ActivationKind::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            ActivationKind::Linear => 1.0,
        }
    }

    pub fn forward(self, z: &Matrix) -> Matrix {
        match self {
            ActivationKind::Linear => z.clone(),
            _ => z.map(|v| self.apply(v)),
        }
    }

    /// `upstream ⊙ f'(z)`.
    pub fn backward(self, z: &Matrix, upstream: &Matrix) -> Result<Matrix> {
        if z.shape() != upstream.shape() {
            return Err(Error::shape(
                "activation_backward",
                z.shape(),
                upstream.shape(),
            ));
        }
        if self == ActivationKind::Linear {
            return Ok(upstream.clone());
        }
        let data = z
            .data()
            .iter()
            .zip(upstream.data())
            .map(|(&zi, &g)| g * self.derivative(zi))
            .collect();
        Matrix::new(z.rows(), z.cols(), data)
    }

    /// Whether the derivative jumps somewhere (finite differences are
    /// unreliable near those points).
    pub fn has_kink(self) -> bool {
        matches!(self, ActivationKind::Relu)
            || matches!(self, ActivationKind::Elu { alpha } if alpha != 1.0)
    }
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ActivationKind::Relu => f.write_str("relu"),
            ActivationKind::Elu { alpha } if *alpha == 1.0 => f.write_str("elu"),
            ActivationKind::Elu { alpha } => write!(f, "elu:{alpha}"),
            ActivationKind::Tanh => f.write_str("tanh"),
            ActivationKind::Linear => f.write_str("linear"),
        }
    }
}

impl FromStr for ActivationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "relu" => Ok(ActivationKind::Relu),
            "elu" => Ok(ActivationKind::ELU),
            "tanh" => Ok(ActivationKind::Tanh),
            "linear" | "identity" => Ok(ActivationKind::Linear),
            other => match other.strip_prefix("elu:") {
                Some(a) => {
                    let alpha: f64 = a.parse().map_err(|_| {
                        Error::InvalidArgument(format!("bad elu alpha in {other:?}"))
                    })?;
                    if !alpha.is_finite() || alpha <= 0.0 {
                        return Err(Error::InvalidArgument(format!(
                            "elu alpha must be positive, got {alpha}"
                        )));
                    }
                    Ok(ActivationKind::Elu { alpha })
                }
                None => Err(Error::InvalidArgument(format!(
                    "unknown activation {other:?}"
                ))),
            },
        }
    }
}

impl TryFrom<String> for ActivationKind {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ActivationKind> for String {
    fn from(a: ActivationKind) -> String {
        a.to_string()
    }
}

/// Activation node; caches its pre-activation input for the backward pass.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ActivationLayer {
    pub kind: ActivationKind,
    #[serde(skip)]
    cache: Option<Matrix>,
}

impl ActivationLayer {
    pub fn new(kind: ActivationKind) -> Self {
        ActivationLayer { kind, cache: None }
    }

    pub fn forward(&mut self, z: &Matrix) -> Matrix {
        let out = self.kind.forward(z);
        self.cache = Some(z.clone());
        out
    }

    pub fn infer(&self, z: &Matrix) -> Matrix {
        self.kind.forward(z)
    }

    pub fn backward(&self, upstream: &Matrix) -> Result<Matrix> {
        let z = self
            .cache
            .as_ref()
            .ok_or(Error::MissingCache("activation"))?;
        self.kind.backward(z, upstream)
    }

    /// Pre-activation values from the last forward pass.
    pub fn cached_input(&self) -> Option<&Matrix> {
        self.cache.as_ref()
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }
}
