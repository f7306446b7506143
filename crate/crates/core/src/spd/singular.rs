//! Log singular vectors and the majorization order on the cone of
//! nonincreasing vectors.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::spd::InvertibleMatrix;

/// Default absolute tolerance of the majorization comparisons.
pub const MAJORIZATION_TOL: f64 = 1e-9;

/// Allowed increase between consecutive entries of a [`LogSingularVector`].
pub const ORDERING_TOL: f64 = 1e-10;

/// Nonincreasing real vector, typically the logs of singular values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct LogSingularVector(Vec<f64>);

impl TryFrom<Vec<f64>> for LogSingularVector {
    type Error = Error;
    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<LogSingularVector> for Vec<f64> {
    fn from(v: LogSingularVector) -> Self {
        v.0
    }
}

impl LogSingularVector {
    /// Wraps `values`, rejecting any increase larger than [`ORDERING_TOL`].
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("empty log singular vector".into()));
        }
        for i in 1..values.len() {
            if !(values[i] <= values[i - 1] + ORDERING_TOL) {
                return Err(Error::NotOrdered { index: i });
            }
        }
        Ok(Self(values))
    }

    /// Sorts arbitrary values into nonincreasing order.
    pub fn from_unsorted(mut values: Vec<f64>) -> Self {
        values.sort_by(|a, b| b.total_cmp(a));
        Self(values)
    }

    pub fn zeros(d: usize) -> Self {
        Self(vec![0.0; d])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Prefix sums `s_k = ξ_1 + … + ξ_k`.
    pub fn partial_sums(&self) -> Vec<f64> {
        self.0
            .iter()
            .scan(0.0, |acc, x| {
                *acc += x;
                Some(*acc)
            })
            .collect()
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// The opposition involution `(ξ_1, …, ξ_d) ↦ (−ξ_d, …, −ξ_1)`.
    pub fn opposite(&self) -> Self {
        Self(self.0.iter().rev().map(|x| -x).collect())
    }

    /// Multiplies by a nonnegative scalar.
    pub fn scaled(&self, c: f64) -> Self {
        assert!(c >= 0.0, "scaling by a negative factor leaves the cone");
        Self(self.0.iter().map(|x| c * x).collect())
    }

    /// Componentwise sum, which stays nonincreasing.
    pub fn add(&self, other: &Self) -> Result<Self> {
        check_dims(self, other)?;
        Ok(Self(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect()))
    }

    /// `(1 − t) self + t other` for `t ∈ [0, 1]`.
    pub fn lerp(&self, other: &Self, t: f64) -> Result<Self> {
        check_dims(self, other)?;
        Ok(Self(self.0.iter().zip(&other.0).map(|(a, b)| (1.0 - t) * a + t * b).collect()))
    }

    /// Componentwise difference as a plain vector (not ordered in general).
    pub fn diff(&self, other: &Self) -> Result<Vec<f64>> {
        check_dims(self, other)?;
        Ok(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        Ok(self.diff(other)?.iter().fold(0.0f64, |m, x| m.max(x.abs())))
    }
}

impl std::ops::Index<usize> for LogSingularVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

fn check_dims(a: &LogSingularVector, b: &LogSingularVector) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch { expected: a.dim(), found: b.dim() });
    }
    Ok(())
}

/// `σ⃗(L)`: logs of the singular values of `L`, nonincreasing.
pub fn log_singular_values(l: &InvertibleMatrix) -> Result<LogSingularVector> {
    log_singular_values_raw(l.matrix())
}

pub(crate) fn log_singular_values_raw(m: &DMatrix<f64>) -> Result<LogSingularVector> {
    let s = linalg::svd(m).singular_values;
    if s.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
        return Err(Error::SingularMatrix);
    }
    Ok(LogSingularVector(s.iter().map(|x| x.ln()).collect()))
}

/// `σ⃗(A_n ⋯ A_1)` without forming the product.
///
/// `factors` are listed in the order they are applied, so `factors[0]` acts
/// first. Orthogonal factors are peeled off by QR at every step; only the
/// triangular parts are multiplied, which keeps the final graded SVD accurate
/// even when the product itself would overflow. The spread between the
/// largest and smallest singular value must stay within the f64 range.
pub fn log_singular_values_of_product(factors: &[DMatrix<f64>]) -> Result<LogSingularVector> {
    let first = factors.first().ok_or_else(|| Error::InvalidArgument("empty product".into()))?;
    let d = first.nrows();
    let mut q = DMatrix::<f64>::identity(d, d);
    let mut t = DMatrix::<f64>::identity(d, d);
    let mut log_scale = 0.0;
    for a in factors {
        if a.nrows() != d || a.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, found: a.nrows() });
        }
        let (qn, r) = linalg::qr(&(a * &q));
        t = r * t;
        q = qn;
        let m = t.amax();
        if !(m > 0.0) || !m.is_finite() {
            return Err(Error::SingularMatrix);
        }
        if !(1e-100..=1e100).contains(&m) {
            t /= m;
            log_scale += m.ln();
        }
    }
    let mut out = log_singular_values_raw(&t)?;
    for x in &mut out.0 {
        *x += log_scale;
    }
    Ok(out)
}

/// Whether `ξ ⪯ η` (or `ξ ⪯_w η` when `weak`) with absolute tolerance 1e-9.
pub fn majorize_leq(xi: &LogSingularVector, eta: &LogSingularVector, weak: bool) -> Result<bool> {
    majorize_leq_tol(xi, eta, weak, MAJORIZATION_TOL)
}

/// [`majorize_leq`] with an explicit tolerance.
pub fn majorize_leq_tol(
    xi: &LogSingularVector,
    eta: &LogSingularVector,
    weak: bool,
    tol: f64,
) -> Result<bool> {
    Ok(majorization_excess(xi, eta, weak)? <= tol)
}

/// Largest violation of the partial-sum inequalities defining `ξ ⪯ η`.
///
/// Nonpositive values mean the relation holds exactly. In the strong order
/// the final component is `|Σξ − Ση|`.
pub fn majorization_excess(xi: &LogSingularVector, eta: &LogSingularVector, weak: bool) -> Result<f64> {
    check_dims(xi, eta)?;
    let a = xi.partial_sums();
    let b = eta.partial_sums();
    let d = a.len();
    let mut excess = f64::NEG_INFINITY;
    for k in 0..d - 1 {
        excess = excess.max(a[k] - b[k]);
    }
    let last = a[d - 1] - b[d - 1];
    excess = excess.max(if weak { last } else { last.abs() });
    Ok(excess)
}
