//! Lorentz (second-order) cone primitives.
//!
//! A point of `R^m` is written `y = (y0, ŷ)` with `ŷ ∈ R^{m-1}`. The cone is
//! `L^m = { y : y0 >= ‖ŷ‖ }`. Every `y` has the spectral decomposition
//! `y = λ1 u1 + λ2 u2` with `λi = y0 + (-1)^i ‖ŷ‖` and `ui = ½(1, (-1)^i w)`,
//! where `w = ŷ/‖ŷ‖` when `ŷ != 0` and any unit vector otherwise.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// `ŷ` is treated as zero below this absolute norm.
pub const HAT_ZERO_TOL: f64 = 1e-14;

/// Accepted deviation of a caller-supplied `w` from unit length.
pub const UNIT_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConeError {
    #[error("cone vectors need dimension >= 2, got {0}")]
    DimensionTooSmall(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("eigenvector choice is not a unit vector (norm {0})")]
    NonUnitChoice(f64),
    #[error("non-finite component in cone vector")]
    NonFinite,
}

/// A point of `R^m`, `m >= 2`, viewed through the Lorentz cone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SocVector {
    data: Vec<f64>,
}

impl TryFrom<Vec<f64>> for SocVector {
    type Error = ConeError;

    fn try_from(data: Vec<f64>) -> Result<Self, Self::Error> {
        SocVector::new(data)
    }
}

impl From<SocVector> for Vec<f64> {
    fn from(v: SocVector) -> Self {
        v.data
    }
}

impl SocVector {
    pub fn new(data: Vec<f64>) -> Result<Self, ConeError> {
        if data.len() < 2 {
            return Err(ConeError::DimensionTooSmall(data.len()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(ConeError::NonFinite);
        }
        Ok(Self { data })
    }

    /// Builds `(y0, ŷ)`.
    pub fn from_parts(y0: f64, yhat: &[f64]) -> Result<Self, ConeError> {
        let mut data = Vec::with_capacity(yhat.len() + 1);
        data.push(y0);
        data.extend_from_slice(yhat);
        Self::new(data)
    }

    pub fn zeros(m: usize) -> Result<Self, ConeError> {
        Self::new(vec![0.0; m])
    }

    pub fn dim(&self) -> usize {
        self.data.len()
    }

    pub fn y0(&self) -> f64 {
        self.data[0]
    }

    pub fn yhat(&self) -> &[f64] {
        &self.data[1..]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn hat_norm(&self) -> f64 {
        norm(self.yhat())
    }

    pub fn norm(&self) -> f64 {
        norm(&self.data)
    }

    pub fn dot(&self, other: &SocVector) -> f64 {
        dot(&self.data, &other.data)
    }

    /// Smallest eigenvalue `y0 - ‖ŷ‖`.
    pub fn lambda1(&self) -> f64 {
        self.y0() - self.hat_norm()
    }

    /// Largest eigenvalue `y0 + ‖ŷ‖`.
    pub fn lambda2(&self) -> f64 {
        self.y0() + self.hat_norm()
    }

    pub fn add(&self, other: &SocVector) -> SocVector {
        assert_eq!(self.dim(), other.dim(), "cone vector dimension mismatch");
        SocVector {
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &SocVector) -> SocVector {
        assert_eq!(self.dim(), other.dim(), "cone vector dimension mismatch");
        SocVector {
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> SocVector {
        SocVector {
            data: self.data.iter().map(|a| a * s).collect(),
        }
    }

    pub fn neg(&self) -> SocVector {
        self.scale(-1.0)
    }
}

/// Spectral data of a [`SocVector`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralDecomposition {
    pub lambda1: f64,
    pub lambda2: f64,
    pub u1: Vec<f64>,
    pub u2: Vec<f64>,
    pub w: Vec<f64>,
    /// True when `ŷ != 0`, so `w` was forced to `ŷ/‖ŷ‖`.
    pub canonical: bool,
    /// Set when a `w_choice` was supplied but ignored because `ŷ != 0`.
    pub choice_ignored: bool,
}

impl SpectralDecomposition {
    /// `λ1 u1 + λ2 u2`.
    pub fn reconstruct(&self) -> Vec<f64> {
        self.u1
            .iter()
            .zip(&self.u2)
            .map(|(a, b)| self.lambda1 * a + self.lambda2 * b)
            .collect()
    }
}

/// `u(w, sign) = ½(1, sign·w)`.
pub fn eigenvector(w: &[f64], sign: f64) -> Vec<f64> {
    let mut u = Vec::with_capacity(w.len() + 1);
    u.push(0.5);
    u.extend(w.iter().map(|wi| 0.5 * sign * wi));
    u
}

/// Spectral decomposition of `y`.
///
/// When `ŷ` vanishes the eigenvectors are not unique; `w_choice` picks them and
/// defaults to the first canonical basis direction.
pub fn spectral_decompose(
    y: &SocVector,
    w_choice: Option<&[f64]>,
) -> Result<SpectralDecomposition, ConeError> {
    let m = y.dim();
    if let Some(w) = w_choice {
        if w.len() != m - 1 {
            return Err(ConeError::DimensionMismatch {
                expected: m - 1,
                got: w.len(),
            });
        }
        let wn = norm(w);
        if (wn - 1.0).abs() > UNIT_TOL {
            return Err(ConeError::NonUnitChoice(wn));
        }
    }
    let hn = y.hat_norm();
    let (w, canonical, choice_ignored) = if hn > HAT_ZERO_TOL {
        let w: Vec<f64> = y.yhat().iter().map(|v| v / hn).collect();
        (w, true, w_choice.is_some())
    } else {
        let w = match w_choice {
            Some(w) => w.to_vec(),
            None => {
                let mut e = vec![0.0; m - 1];
                e[0] = 1.0;
                e
            }
        };
        (w, false, false)
    };
    Ok(SpectralDecomposition {
        lambda1: y.y0() - hn,
        lambda2: y.y0() + hn,
        u1: eigenvector(&w, -1.0),
        u2: eigenvector(&w, 1.0),
        w,
        canonical,
        choice_ignored,
    })
}

/// Euclidean projection onto `L^m`: `[λ1]+ u1 + [λ2]+ u2`.
pub fn project(y: &SocVector) -> SocVector {
    let y0 = y.y0();
    let hn = y.hat_norm();
    if hn <= y0 {
        return y.clone();
    }
    if hn <= -y0 {
        return SocVector {
            data: vec![0.0; y.dim()],
        };
    }
    // Only λ2 is positive: result is λ2·½(1, ŷ/‖ŷ‖).
    let c = 0.5 * (y0 + hn);
    let mut data = Vec::with_capacity(y.dim());
    data.push(c);
    data.extend(y.yhat().iter().map(|v| c * v / hn));
    SocVector { data }
}

/// Position of a point relative to the cone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConeMembership {
    Interior,
    BoundaryNonzero,
    Origin,
    Outside,
}

/// Classifies `y` under tolerance `tol`; checks run in the order
/// Origin, Outside, Interior, BoundaryNonzero.
pub fn classify(y: &SocVector, tol: f64) -> ConeMembership {
    let l1 = y.lambda1();
    if y.norm() <= tol {
        ConeMembership::Origin
    } else if l1 < -tol {
        ConeMembership::Outside
    } else if l1 > tol {
        ConeMembership::Interior
    } else {
        ConeMembership::BoundaryNonzero
    }
}

/// `Γ y = (y0, -ŷ)`.
pub fn gamma_reflect(y: &SocVector) -> SocVector {
    let mut data = y.data.clone();
    for v in &mut data[1..] {
        *v = -*v;
    }
    SocVector { data }
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
