//! Geometry of the cone of symmetric positive-definite matrices under the
//! trace metric.
//!
//! [`SpdMatrix`] is stored in spectral form: an orthonormal frame `R` and the
//! logarithms `ℓ` of the eigenvalues, so `P = R diag(e^ℓ) Rᵀ`. Powers, logs,
//! determinant normalization and scalar scaling act on `ℓ` alone and are exact
//! up to rounding in `ℓ`. Whitening `p^{-1/2} q p^{-1/2}` and congruences are
//! evaluated as graded products `D1 M D2` and decomposed with
//! [`linalg::svd`], which keeps matrices with condition numbers far beyond
//! 1e16 usable.

mod barycenter;
mod singular;

pub use barycenter::{barycenter, barycenter_with, karcher_gradient, BarycenterOptions, BarycenterResult};
pub use singular::{
    log_singular_values, log_singular_values_of_product, majorization_excess, majorize_leq,
    majorize_leq_tol, LogSingularVector, MAJORIZATION_TOL, ORDERING_TOL,
};
#[cfg(test)]
pub(crate) use singular::log_singular_values_raw;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, Svd};

/// Relative symmetry tolerance used by the checked constructors.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Smallest `|det|` accepted by [`InvertibleMatrix`].
pub const MIN_ABS_DET: f64 = 1e-300;

fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in i + 1..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch { expected: m.nrows(), found: m.ncols() });
    }
    let a = asymmetry(m);
    if a > SYMMETRY_TOL * (1.0 + m.amax()) {
        return Err(Error::NotSymmetric { asymmetry: a });
    }
    Ok(())
}

fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

/// Real symmetric matrix: a tangent vector of the SPD cone.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    /// Checks symmetry to relative tolerance [`SYMMETRY_TOL`] and stores the exact symmetric part.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        check_symmetric(&m)?;
        Ok(Self(linalg::symmetrize(&m)))
    }

    /// Symmetric part of an arbitrary square matrix.
    pub fn symmetric_part(m: &DMatrix<f64>) -> Self {
        Self(linalg::symmetrize(m))
    }

    pub fn zeros(d: usize) -> Self {
        Self(DMatrix::zeros(d, d))
    }

    pub fn identity(d: usize) -> Self {
        Self(DMatrix::identity(d, d))
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        Self(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    /// Frobenius inner product `tr(self · other)`.
    pub fn dot(&self, other: &Self) -> f64 {
        self.0.dot(&other.0)
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    /// Eigenvalues (nonincreasing) and orthonormal eigenvectors.
    pub fn eigen(&self) -> (DVector<f64>, DMatrix<f64>) {
        linalg::symmetric_eigen(&self.0)
    }

    /// Conjugation `Rᵀ self R` by an orthogonal (or any square) matrix.
    pub(crate) fn conjugate_t(&self, r: &DMatrix<f64>) -> DMatrix<f64> {
        r.transpose() * &self.0 * r
    }
}

impl std::ops::Add for &SymMatrix {
    type Output = SymMatrix;
    fn add(self, rhs: &SymMatrix) -> SymMatrix {
        SymMatrix(&self.0 + &rhs.0)
    }
}

impl std::ops::Sub for &SymMatrix {
    type Output = SymMatrix;
    fn sub(self, rhs: &SymMatrix) -> SymMatrix {
        SymMatrix(&self.0 - &rhs.0)
    }
}

impl std::ops::Mul<f64> for &SymMatrix {
    type Output = SymMatrix;
    fn mul(self, rhs: f64) -> SymMatrix {
        SymMatrix(&self.0 * rhs)
    }
}

impl std::ops::Neg for &SymMatrix {
    type Output = SymMatrix;
    fn neg(self) -> SymMatrix {
        SymMatrix(-&self.0)
    }
}

/// Square matrix with `|det| > 1e-300`.
#[derive(Debug, Clone, PartialEq)]
pub struct InvertibleMatrix(DMatrix<f64>);

impl InvertibleMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch { expected: m.nrows(), found: m.ncols() });
        }
        let det = m.determinant();
        if !(det.abs() > MIN_ABS_DET) || !det.is_finite() {
            return Err(Error::SingularMatrix);
        }
        Ok(Self(m))
    }

    pub fn identity(d: usize) -> Self {
        Self(DMatrix::identity(d, d))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn determinant(&self) -> f64 {
        self.0.determinant()
    }

    /// Ratio of the extreme singular values.
    pub fn condition_number(&self) -> f64 {
        let s = linalg::svd(&self.0).singular_values;
        s[0] / s[s.len() - 1]
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        check_dim(self.dim(), other.dim())?;
        Self::new(&self.0 * &other.0)
    }
}

/// Symmetric positive-definite matrix in spectral form.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix {
    frame: DMatrix<f64>,
    log_eigs: DVector<f64>,
}

impl SpdMatrix {
    /// Validates symmetry and positive definiteness of a dense matrix.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        check_symmetric(&m)?;
        let sym = linalg::symmetrize(&m);
        if sym.iter().any(|x| !x.is_finite()) {
            return Err(Error::NotPositiveDefinite);
        }
        let (vals, vecs) = linalg::symmetric_eigen(&sym);
        if !(vals[vals.len() - 1] > 0.0) {
            return Err(Error::NotPositiveDefinite);
        }
        // Cholesky + graded SVD resolves small eigenvalues to full relative accuracy.
        if let Some(ch) = sym.clone().cholesky() {
            let out = Self::from_factor(&ch.l());
            if out.log_eigs.iter().all(|x| x.is_finite()) {
                return Ok(out);
            }
        }
        Ok(Self::from_spectral(vecs, vals.map(f64::ln)))
    }

    /// Builds `R diag(e^ℓ) Rᵀ` from an orthonormal `frame` and log-eigenvalues.
    ///
    /// The pair is reordered so the log-eigenvalues are nonincreasing.
    pub fn from_spectral(frame: DMatrix<f64>, log_eigs: DVector<f64>) -> Self {
        let d = log_eigs.len();
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| log_eigs[b].total_cmp(&log_eigs[a]).then(a.cmp(&b)));
        let frame = DMatrix::from_fn(d, d, |i, j| frame[(i, order[j])]);
        let log_eigs = DVector::from_fn(d, |i, _| log_eigs[order[i]]);
        Self { frame, log_eigs }
    }

    pub fn identity(d: usize) -> Self {
        Self { frame: DMatrix::identity(d, d), log_eigs: DVector::zeros(d) }
    }

    /// Diagonal matrix with the given positive entries.
    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        if diag.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
            return Err(Error::NotPositiveDefinite);
        }
        let d = diag.len();
        Ok(Self::from_spectral(
            DMatrix::identity(d, d),
            DVector::from_iterator(d, diag.iter().map(|x| x.ln())),
        ))
    }

    /// `L Lᵀ` for a square factor `L`.
    pub(crate) fn from_factor(l: &DMatrix<f64>) -> Self {
        let d = l.nrows();
        Self::gram_of_scaled(None, &DVector::zeros(d), l, &DVector::zeros(d))
    }

    /// Spectral form of `Y Yᵀ` (left-multiplied by `left` when given), where
    /// `Y_ij = m_ij exp(a_i + b_j)`.
    fn gram_of_scaled(
        left: Option<&DMatrix<f64>>,
        a: &DVector<f64>,
        m: &DMatrix<f64>,
        b: &DVector<f64>,
    ) -> Self {
        let svd = scaled_svd(a, m, b);
        let frame = match left {
            Some(r) => r * &svd.u,
            None => svd.u,
        };
        let log_eigs = svd.singular_values.map(|s| 2.0 * s);
        Self { frame, log_eigs }
    }

    pub fn dim(&self) -> usize {
        self.log_eigs.len()
    }

    /// Orthonormal eigenvector frame, columns matching [`Self::log_eigenvalues`].
    pub fn frame(&self) -> &DMatrix<f64> {
        &self.frame
    }

    /// Logarithms of the eigenvalues, nonincreasing.
    pub fn log_eigenvalues(&self) -> &DVector<f64> {
        &self.log_eigs
    }

    pub fn eigenvalues(&self) -> DVector<f64> {
        self.log_eigs.map(f64::exp)
    }

    pub fn log_det(&self) -> f64 {
        self.log_eigs.sum()
    }

    pub fn det(&self) -> f64 {
        self.log_det().exp()
    }

    /// Dense matrix `R diag(e^ℓ) Rᵀ`.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        self.spectral_function(f64::exp)
    }

    fn spectral_function(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let d = self.dim();
        let scaled = DMatrix::from_fn(d, d, |i, j| self.frame[(i, j)] * f(self.log_eigs[j]));
        linalg::symmetrize(&(scaled * self.frame.transpose()))
    }

    /// `P^t` for real `t`.
    pub fn powf(&self, t: f64) -> Self {
        Self::from_spectral(self.frame.clone(), &self.log_eigs * t)
    }

    pub fn sqrt(&self) -> Self {
        self.powf(0.5)
    }

    pub fn inverse(&self) -> Self {
        self.powf(-1.0)
    }

    /// Matrix logarithm.
    pub fn log(&self) -> SymMatrix {
        SymMatrix(self.spectral_function(|l| l))
    }

    /// Matrix exponential of a symmetric matrix.
    pub fn exp(s: &SymMatrix) -> Self {
        let (vals, vecs) = s.eigen();
        Self { frame: vecs, log_eigs: vals }
    }

    /// `c · P` for `c > 0`.
    pub fn scaled(&self, c: f64) -> Self {
        assert!(c > 0.0, "scale factor must be positive");
        Self { frame: self.frame.clone(), log_eigs: self.log_eigs.add_scalar(c.ln()) }
    }

    /// `P / det(P)^{1/d}`, exact in the log-eigenvalues.
    pub fn normalize_det(&self) -> Self {
        let mean = self.log_eigs.mean();
        Self { frame: self.frame.clone(), log_eigs: self.log_eigs.add_scalar(-mean) }
    }

    /// Congruence `X P Xᵀ`.
    pub fn congruence(&self, x: &DMatrix<f64>) -> Result<Self> {
        check_dim(self.dim(), x.nrows())?;
        check_dim(self.dim(), x.ncols())?;
        let d = self.dim();
        let out = Self::gram_of_scaled(None, &DVector::zeros(d), &(x * &self.frame), &(&self.log_eigs * 0.5));
        if out.log_eigs.iter().any(|x| !x.is_finite()) {
            return Err(Error::SingularMatrix);
        }
        Ok(out)
    }

    /// `P^a Q P^a`, returned in spectral form.
    fn power_congruence(&self, a: f64, q: &Self) -> Self {
        let m = self.frame.transpose() * &q.frame;
        Self::gram_of_scaled(Some(&self.frame), &(&self.log_eigs * a), &m, &(&q.log_eigs * 0.5))
    }

    /// `P^{-1/2} Q P^{-1/2}`.
    pub fn whiten(&self, q: &Self) -> Self {
        self.power_congruence(-0.5, q)
    }

    /// `P^{1/2} W P^{1/2}`, the inverse of [`Self::whiten`].
    pub fn unwhiten(&self, w: &Self) -> Self {
        self.power_congruence(0.5, w)
    }

    fn symmetric_congruence(&self, s: &SymMatrix, a: f64) -> SymMatrix {
        let d = self.dim();
        let core = s.conjugate_t(&self.frame);
        let scaled =
            DMatrix::from_fn(d, d, |i, j| core[(i, j)] * (a * (self.log_eigs[i] + self.log_eigs[j])).exp());
        SymMatrix(linalg::symmetrize(&(&self.frame * scaled * self.frame.transpose())))
    }

    /// `P^{-1/2} H P^{-1/2}` for a symmetric `H`.
    pub fn whiten_sym(&self, h: &SymMatrix) -> SymMatrix {
        self.symmetric_congruence(h, -0.5)
    }

    /// `P^{1/2} W P^{1/2}` for a symmetric `W`.
    pub fn unwhiten_sym(&self, w: &SymMatrix) -> SymMatrix {
        self.symmetric_congruence(w, 0.5)
    }

    /// `tr(P^{-1} H)`.
    pub fn trace_of_inverse_times(&self, h: &SymMatrix) -> f64 {
        let core = h.conjugate_t(&self.frame);
        (0..self.dim()).map(|i| core[(i, i)] * (-self.log_eigs[i]).exp()).sum()
    }

    /// Maximum entrywise difference after converting both to dense form,
    /// relative to `1 + max|entries|`.
    pub fn relative_difference(&self, other: &Self) -> f64 {
        let a = self.to_matrix();
        let b = other.to_matrix();
        (&a - &b).amax() / (1.0 + a.amax().max(b.amax()))
    }
}

/// SVD of `diag(e^a) m diag(e^b)`, returning the singular values as logs.
fn scaled_svd(a: &DVector<f64>, m: &DMatrix<f64>, b: &DVector<f64>) -> Svd {
    let shift = 0.5 * (a.max() + a.min() + b.max() + b.min());
    let d = m.nrows();
    let y = DMatrix::from_fn(d, m.ncols(), |i, j| m[(i, j)] * (a[i] + b[j] - shift).exp());
    let mut svd = linalg::svd(&y);
    svd.singular_values = svd.singular_values.map(|s| s.max(f64::MIN_POSITIVE).ln() + shift);
    svd
}

/// SVD of `G_y^{1/2} A G_x^{-1/2}` with ambient singular vectors and log singular values.
///
/// This is the operator `df_x` read in the metric `G` at both ends.
pub fn metric_svd(gy: &SpdMatrix, a: &DMatrix<f64>, gx: &SpdMatrix) -> Result<Svd> {
    check_dim(gy.dim(), a.nrows())?;
    check_dim(gx.dim(), a.ncols())?;
    let core = gy.frame.transpose() * a * &gx.frame;
    let mut svd = scaled_svd(&(&gy.log_eigs * 0.5), &core, &(&gx.log_eigs * -0.5));
    if svd.singular_values.iter().any(|x| !x.is_finite() || *x < -700.0) {
        return Err(Error::SingularMatrix);
    }
    svd.u = &gy.frame * svd.u;
    svd.v = &gx.frame * svd.v;
    Ok(svd)
}

/// `σ⃗(G_y^{1/2} A G_x^{-1/2})`.
pub fn metric_log_singular_values(gy: &SpdMatrix, a: &DMatrix<f64>, gx: &SpdMatrix) -> Result<LogSingularVector> {
    let svd = metric_svd(gy, a, gx)?;
    LogSingularVector::new(svd.singular_values.iter().copied().collect())
}

/// Trace-metric distance `‖log eig(p^{-1/2} q p^{-1/2})‖₂`.
pub fn spd_distance(p: &SpdMatrix, q: &SpdMatrix) -> Result<f64> {
    check_dim(p.dim(), q.dim())?;
    Ok(p.whiten(q).log_eigs.norm())
}

/// Point `p #_t q` on the geodesic from `p` (t = 0) to `q` (t = 1).
pub fn geodesic_between(p: &SpdMatrix, q: &SpdMatrix, t: f64) -> Result<SpdMatrix> {
    check_dim(p.dim(), q.dim())?;
    if t == 0.0 {
        return Ok(p.clone());
    }
    if t == 1.0 {
        return Ok(q.clone());
    }
    Ok(p.unwhiten(&p.whiten(q).powf(t)))
}

/// `γ_{p,v}(t) = p^{1/2} exp(t p^{-1/2} v p^{-1/2}) p^{1/2}`.
pub fn geodesic_from(p: &SpdMatrix, v: &SymMatrix, t: f64) -> Result<SpdMatrix> {
    check_dim(p.dim(), v.dim())?;
    Ok(p.unwhiten(&SpdMatrix::exp(&(&p.whiten_sym(v) * t))))
}

/// Riemannian logarithm: the initial velocity of the geodesic from `p` to `q`.
pub fn log_map(p: &SpdMatrix, q: &SpdMatrix) -> Result<SymMatrix> {
    check_dim(p.dim(), q.dim())?;
    Ok(p.unwhiten_sym(&p.whiten(q).log()))
}

/// GL action `g ∗ p = g p gᵀ`.
pub fn gl_action(g: &InvertibleMatrix, p: &SpdMatrix) -> Result<SpdMatrix> {
    p.congruence(g.matrix())
}

/// Vectorial distance `d⃗(p, q) = 2σ⃗(p^{-1/2} q^{1/2})`.
pub fn vectorial_distance(p: &SpdMatrix, q: &SpdMatrix) -> Result<LogSingularVector> {
    check_dim(p.dim(), q.dim())?;
    Ok(LogSingularVector::from_unsorted(p.whiten(q).log_eigs.iter().copied().collect()))
}

fn dense_spd(m: &DMatrix<f64>) -> Result<SpdMatrix> {
    SpdMatrix::new(m.clone())
}

/// Principal square root of a dense SPD matrix.
pub fn matrix_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Ok(dense_spd(m)?.sqrt().to_matrix())
}

/// Principal logarithm of a dense SPD matrix.
pub fn matrix_log(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Ok(dense_spd(m)?.log().into_matrix())
}

/// Exponential of a dense symmetric matrix.
pub fn matrix_exp(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Ok(SpdMatrix::exp(&SymMatrix::new(m.clone())?).to_matrix())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    fn close(a: &SpdMatrix, b: &SpdMatrix, tol: f64) {
        let diff = a.relative_difference(b);
        assert!(diff < tol, "matrices differ by {diff:e}\n{}\n{}", a.to_matrix(), b.to_matrix());
    }

    #[test]
    fn constructor_validates() {
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(matches!(SpdMatrix::new(asym), Err(Error::NotSymmetric { .. })));
        let indef = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert_eq!(SpdMatrix::new(indef), Err(Error::NotPositiveDefinite));
        let m = DMatrix::from_row_slice(2, 2, &[5.0, 3.0, 3.0, 2.0]);
        let p = SpdMatrix::new(m.clone()).unwrap();
        assert_relative_eq!(p.to_matrix(), m, epsilon = 1e-14);
        assert_relative_eq!(p.det(), 1.0, epsilon = 1e-13);
    }

    #[test]
    fn matrix_functions_examples() {
        let log_id = matrix_log(&DMatrix::identity(2, 2)).unwrap();
        assert_relative_eq!(log_id, DMatrix::zeros(2, 2), epsilon = 1e-15);
        let e = matrix_exp(&DMatrix::from_diagonal(&nalgebra::dvector![1.0, 2.0])).unwrap();
        assert_relative_eq!(e, DMatrix::from_diagonal(&nalgebra::dvector![1f64.exp(), 2f64.exp()]), epsilon = 1e-14);
        let mut r = rng();
        for _ in 0..50 {
            let p = sampling::random_spd(&mut r, 3, 2.0).to_matrix();
            let s = matrix_sqrt(&p).unwrap();
            assert!((&s * &s - &p).amax() <= 1e-10 * p.amax());
            let back = matrix_exp(&matrix_log(&p).unwrap()).unwrap();
            assert!((&back - &p).amax() <= 1e-10 * p.amax());
        }
        assert_eq!(matrix_sqrt(&DMatrix::from_diagonal(&nalgebra::dvector![1.0, -1.0])), Err(Error::NotPositiveDefinite));
    }

    #[test]
    fn distance_examples() {
        let p = SpdMatrix::from_diagonal(&[2.0f64.exp(), (-2.0f64).exp()]).unwrap();
        let id = SpdMatrix::identity(2);
        assert_relative_eq!(spd_distance(&p, &p).unwrap(), 0.0, epsilon = 1e-14);
        assert_relative_eq!(spd_distance(&id, &p).unwrap(), 8f64.sqrt(), epsilon = 1e-14);
        assert!(spd_distance(&id, &SpdMatrix::identity(3)).is_err());
        let mut r = rng();
        for _ in 0..50 {
            let p = sampling::random_spd(&mut r, 3, 1.5);
            let q = sampling::random_spd(&mut r, 3, 1.5);
            let g = sampling::random_invertible(&mut r, 3);
            let d1 = spd_distance(&p, &q).unwrap();
            let d2 = spd_distance(&gl_action(&g, &p).unwrap(), &gl_action(&g, &q).unwrap()).unwrap();
            assert!((d1 - d2).abs() < 1e-9, "{d1} vs {d2}");
        }
    }

    #[test]
    fn geodesic_examples() {
        let mut r = rng();
        let p = sampling::random_spd(&mut r, 3, 1.0);
        close(&geodesic_between(&p, &p, 0.5).unwrap(), &p, 1e-13);
        let mid = geodesic_between(&SpdMatrix::identity(2), &SpdMatrix::from_diagonal(&[4.0, 0.25]).unwrap(), 0.5).unwrap();
        close(&mid, &SpdMatrix::from_diagonal(&[2.0, 0.5]).unwrap(), 1e-14);
        for _ in 0..50 {
            let p = sampling::random_spd(&mut r, 3, 1.5);
            let q = sampling::random_spd(&mut r, 3, 1.5);
            let t: f64 = rand::Rng::random(&mut r);
            close(&p.whiten(&p).powf(1.0), &SpdMatrix::identity(3), 1e-12);
            close(&geodesic_between(&p, &q, 1e-300).unwrap(), &p, 1e-10);
            let lhs = geodesic_between(&p, &q, t).unwrap().inverse();
            let rhs = geodesic_between(&p.inverse(), &q.inverse(), t).unwrap();
            close(&lhs, &rhs, 1e-9);
            let g = sampling::random_invertible(&mut r, 3);
            let a = gl_action(&g, &geodesic_between(&p, &q, t).unwrap()).unwrap();
            let b = geodesic_between(&gl_action(&g, &p).unwrap(), &gl_action(&g, &q).unwrap(), t).unwrap();
            assert!(a.relative_difference(&b) < 1e-9);
            // the two geodesic forms meet at t = 1
            let v = log_map(&p, &q).unwrap();
            close(&geodesic_from(&p, &v, 1.0).unwrap(), &q, 1e-9);
        }
    }

    #[test]
    fn geodesic_from_examples() {
        let mut r = rng();
        let p = sampling::random_spd(&mut r, 2, 1.0);
        close(&geodesic_from(&p, &SymMatrix::zeros(2), 3.0).unwrap(), &p, 1e-13);
        let out = geodesic_from(&SpdMatrix::identity(2), &SymMatrix::from_diagonal(&[1.0, -1.0]), 1.0).unwrap();
        close(&out, &SpdMatrix::from_diagonal(&[1f64.exp(), (-1f64).exp()]).unwrap(), 1e-14);
    }

    #[test]
    fn gl_action_examples() {
        let mut r = rng();
        let p = sampling::random_spd(&mut r, 2, 1.0);
        close(&gl_action(&InvertibleMatrix::identity(2), &p).unwrap(), &p, 1e-14);
        let g = InvertibleMatrix::new(DMatrix::from_diagonal(&nalgebra::dvector![2.0, 1.0])).unwrap();
        close(&gl_action(&g, &SpdMatrix::identity(2)).unwrap(), &SpdMatrix::from_diagonal(&[4.0, 1.0]).unwrap(), 1e-14);
        let g1 = sampling::random_invertible(&mut r, 2);
        let g2 = sampling::random_invertible(&mut r, 2);
        let a = gl_action(&g2, &gl_action(&g1, &p).unwrap()).unwrap();
        let b = gl_action(&g2.mul(&g1).unwrap(), &p).unwrap();
        assert!(a.relative_difference(&b) < 1e-12);
    }

    #[test]
    fn vectorial_distance_examples() {
        let id = SpdMatrix::identity(2);
        let p = SpdMatrix::from_diagonal(&[2f64.exp(), (-4f64).exp()]).unwrap();
        let dv = vectorial_distance(&id, &p).unwrap();
        assert_relative_eq!(dv[0], 2.0, epsilon = 1e-14);
        assert_relative_eq!(dv[1], -4.0, epsilon = 1e-14);
        assert!(vectorial_distance(&p, &p).unwrap().norm() < 1e-14);
        let mut r = rng();
        for _ in 0..50 {
            let p = sampling::random_spd(&mut r, 3, 1.5);
            let q = sampling::random_spd(&mut r, 3, 1.5);
            let pq = vectorial_distance(&p, &q).unwrap();
            let qp = vectorial_distance(&q, &p).unwrap();
            assert!(qp.max_abs_diff(&pq.opposite()).unwrap() < 1e-9);
            assert_relative_eq!(pq.norm(), spd_distance(&p, &q).unwrap(), epsilon = 1e-12);
            // d⃗(I, p) = σ⃗(p)
            let sp = log_singular_values_raw(&p.to_matrix()).unwrap();
            assert!(vectorial_distance(&SpdMatrix::identity(3), &p).unwrap().max_abs_diff(&sp).unwrap() < 1e-10);
        }
    }

    #[test]
    fn whitening_round_trip_under_strong_conditioning() {
        // q is stored in its own frame, which differs from p's by roughly e^-8;
        // at e^±40 that rotation falls below f64 resolution and w is unrecoverable.
        let th: f64 = 0.37;
        let r = DMatrix::from_row_slice(2, 2, &[th.cos(), -th.sin(), th.sin(), th.cos()]);
        let p = SpdMatrix::from_spectral(r, nalgebra::dvector![8.0, -8.0]);
        let w = SpdMatrix::from_diagonal(&[1f64.exp(), (-1f64).exp()]).unwrap();
        let q = p.unwhiten(&w);
        let back = p.whiten(&q);
        assert_relative_eq!(back.log_eigenvalues()[0], 1.0, epsilon = 1e-9);
        assert_relative_eq!(back.log_eigenvalues()[1], -1.0, epsilon = 1e-9);
        assert_relative_eq!(spd_distance(&p, &q).unwrap(), 2f64.sqrt(), epsilon = 1e-9);
    }

    #[test]
    fn scaling_and_normalization_act_on_log_eigenvalues() {
        let p = SpdMatrix::from_diagonal(&[8.0, 2.0]).unwrap();
        assert_relative_eq!(p.normalize_det().det(), 1.0, epsilon = 1e-15);
        assert_relative_eq!(p.scaled(3.0).to_matrix(), p.to_matrix() * 3.0, epsilon = 1e-13);
    }

    #[test]
    fn trace_of_inverse_product() {
        let mut r = rng();
        let p = sampling::random_spd(&mut r, 3, 1.0);
        let h = sampling::random_sym(&mut r, 3);
        let direct = (p.to_matrix().try_inverse().unwrap() * h.as_matrix()).trace();
        assert_relative_eq!(p.trace_of_inverse_times(&h), direct, epsilon = 1e-11);
    }

    #[test]
    fn metric_svd_matches_dense() {
        let mut r = rng();
        let gx = sampling::random_spd(&mut r, 2, 1.0);
        let gy = sampling::random_spd(&mut r, 2, 1.0);
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 1.0]);
        let b = gy.sqrt().to_matrix() * &a * gx.powf(-0.5).to_matrix();
        let svd = metric_svd(&gy, &a, &gx).unwrap();
        let dense = log_singular_values_raw(&b).unwrap();
        for k in 0..2 {
            assert_relative_eq!(svd.singular_values[k], dense[k], epsilon = 1e-12);
        }
        let recon = &svd.u * DMatrix::from_diagonal(&svd.singular_values.map(f64::exp)) * svd.v.transpose();
        assert_relative_eq!(recon, b, epsilon = 1e-12);
    }
}
