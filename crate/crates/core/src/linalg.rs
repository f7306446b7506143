//! Dense kernels with high relative accuracy for graded matrices.
//!
//! The SPD layer works with matrices whose condition numbers reach 1e30 and
//! beyond (long pullback chains of hyperbolic maps). A plain bidiagonal SVD
//! only resolves the small singular values to `eps * sigma_max`. The routines
//! here sort rows, run Householder QR with column pivoting and finish with
//! one-sided Jacobi, which keeps every singular value of `D1 * M * D2`
//! accurate relative to itself when `M` is well conditioned.

use nalgebra::{DMatrix, DVector};

/// Relative threshold below which two singular values count as tied.
const TIE_TOL: f64 = 1e-13;

/// Thin SVD `y = u * diag(singular_values) * vᵀ` with canonical ordering.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: DMatrix<f64>,
    pub singular_values: DVector<f64>,
    pub v: DMatrix<f64>,
}

/// Singular value decomposition of a square matrix.
///
/// Singular values come out nonincreasing. Ties are broken by descending lexicographic
/// order of the left vectors, each pair signed so that the first nonzero
/// entry of the left vector is positive.
pub fn svd(y: &DMatrix<f64>) -> Svd {
    assert!(y.is_square(), "svd expects a square matrix");
    let d = y.nrows();
    let (q, r, cols) = pivoted_qr(y);
    let (ut, s, j) = one_sided_jacobi(&r.transpose());
    let mut u = &q * &j;
    let mut v = DMatrix::zeros(d, d);
    for (k, &c) in cols.iter().enumerate() {
        v.set_row(c, &ut.row(k));
    }
    complete_null_columns(&mut u, &s);
    let mut s = s;
    canonicalize(&mut s, &mut u, &mut v, 0.0);
    Svd { u, singular_values: s, v }
}

/// Householder QR of `y` after sorting rows by norm, with column pivoting.
///
/// Returns `(q, r, cols)` with `y[:, cols] = q * r`.
fn pivoted_qr(y: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>, Vec<usize>) {
    let d = y.nrows();
    let mut rows: Vec<usize> = (0..d).collect();
    let norms: Vec<f64> = (0..d).map(|i| y.row(i).norm()).collect();
    rows.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]).then(a.cmp(&b)));
    let mut a = DMatrix::from_fn(d, d, |i, j| y[(rows[i], j)]);
    let mut q = DMatrix::<f64>::identity(d, d);
    let mut cols: Vec<usize> = (0..d).collect();

    for k in 0..d {
        let mut best = k;
        let mut best_norm = -1.0;
        for j in k..d {
            let n = a.view((k, j), (d - k, 1)).norm();
            if n > best_norm {
                best_norm = n;
                best = j;
            }
        }
        if best != k {
            a.swap_columns(k, best);
            cols.swap(k, best);
        }
        if k + 1 == d {
            break;
        }
        let x = a.view((k, k), (d - k, 1)).clone_owned();
        let xn = x.norm();
        if xn == 0.0 {
            continue;
        }
        let alpha = if x[0] >= 0.0 { -xn } else { xn };
        let mut v = x;
        v[0] -= alpha;
        let vn = v.norm();
        if vn == 0.0 {
            continue;
        }
        v /= vn;
        for j in k..d {
            let mut dot = 0.0;
            for i in 0..d - k {
                dot += v[i] * a[(k + i, j)];
            }
            for i in 0..d - k {
                a[(k + i, j)] -= 2.0 * v[i] * dot;
            }
        }
        for i in 0..d {
            let mut dot = 0.0;
            for l in 0..d - k {
                dot += q[(i, k + l)] * v[l];
            }
            for l in 0..d - k {
                q[(i, k + l)] -= 2.0 * dot * v[l];
            }
        }
        a[(k, k)] = alpha;
        for i in k + 1..d {
            a[(i, k)] = 0.0;
        }
    }
    let mut q_full = DMatrix::zeros(d, d);
    for (i, &r) in rows.iter().enumerate() {
        q_full.set_row(r, &q.row(i));
    }
    (q_full, a.upper_triangle(), cols)
}

/// One-sided Jacobi on the columns of `x`: `x * j = u * diag(s)`.
fn one_sided_jacobi(x: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>) {
    let d = x.ncols();
    let mut x = x.clone();
    let mut j = DMatrix::<f64>::identity(d, d);
    let tol = f64::EPSILON * d as f64;
    for _sweep in 0..80 {
        let mut rotated = false;
        for p in 0..d {
            for q in p + 1..d {
                let a = x.column(p).norm_squared();
                let b = x.column(q).norm_squared();
                let c = x.column(p).dot(&x.column(q));
                if c == 0.0 || c.abs() <= tol * (a * b).sqrt() {
                    continue;
                }
                rotated = true;
                let z = (b - a) / (2.0 * c);
                let t = z.signum() / (z.abs() + (1.0 + z * z).sqrt());
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                rotate_columns(&mut x, p, q, cs, sn);
                rotate_columns(&mut j, p, q, cs, sn);
            }
        }
        if !rotated {
            break;
        }
    }
    let mut s = DVector::zeros(d);
    for k in 0..d {
        let n = x.column(k).norm();
        s[k] = n;
        if n > 0.0 {
            let col = x.column(k) / n;
            x.set_column(k, &col);
        }
    }
    (x, s, j)
}

fn rotate_columns(m: &mut DMatrix<f64>, p: usize, q: usize, cs: f64, sn: f64) {
    for i in 0..m.nrows() {
        let xp = m[(i, p)];
        let xq = m[(i, q)];
        m[(i, p)] = cs * xp - sn * xq;
        m[(i, q)] = sn * xp + cs * xq;
    }
}

/// Replaces columns belonging to zero singular values by an orthonormal completion.
fn complete_null_columns(u: &mut DMatrix<f64>, s: &DVector<f64>) {
    let d = u.nrows();
    let zero: Vec<usize> = (0..d).filter(|&k| s[k] == 0.0).collect();
    if zero.is_empty() {
        return;
    }
    let mut basis: Vec<DVector<f64>> = (0..d)
        .filter(|k| s[*k] != 0.0)
        .map(|k| u.column(k).clone_owned())
        .collect();
    let mut e = 0;
    for k in zero {
        loop {
            let mut c = DVector::zeros(d);
            c[e % d] = 1.0;
            e += 1;
            for b in &basis {
                let proj = b.dot(&c);
                c -= b * proj;
            }
            let n = c.norm();
            if n > 1e-8 {
                c /= n;
                u.set_column(k, &c);
                basis.push(c);
                break;
            }
        }
    }
}

/// Sign of the first entry whose magnitude exceeds a small fraction of the norm.
fn leading_sign(col: &DVector<f64>) -> f64 {
    let cut = 1e-12 * col.amax().max(f64::MIN_POSITIVE);
    col.iter().find(|x| x.abs() > cut).map(|x| x.signum()).unwrap_or(1.0)
}

fn lex_cmp(a: &DVector<f64>, b: &DVector<f64>) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b.iter()) {
        if (x - y).abs() > 1e-12 {
            return y.total_cmp(x);
        }
    }
    std::cmp::Ordering::Equal
}

/// Sorts `values` nonincreasing and permutes the columns of `u` and `v` to match,
/// applying the sign and tie conventions described on [`svd`].
///
/// Two values tie when they differ by at most `TIE_TOL` relative to the larger
/// magnitude plus `abs_floor`.
pub(crate) fn canonicalize(
    values: &mut DVector<f64>,
    u: &mut DMatrix<f64>,
    v: &mut DMatrix<f64>,
    abs_floor: f64,
) {
    let d = values.len();
    for k in 0..d {
        let sgn = leading_sign(&u.column(k).clone_owned());
        if sgn < 0.0 {
            u.column_mut(k).neg_mut();
            v.column_mut(k).neg_mut();
        }
    }
    let cols: Vec<DVector<f64>> = (0..d).map(|k| u.column(k).clone_owned()).collect();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let tied = |a: f64, b: f64| (a - b).abs() <= TIE_TOL * a.abs().max(b.abs()) + abs_floor;
    let mut start = 0;
    while start < d {
        let mut end = start + 1;
        while end < d && tied(values[order[end - 1]], values[order[end]]) {
            end += 1;
        }
        // insertion sort keeps this well defined even though the tolerance comparison is not transitive
        for i in start + 1..end {
            let mut j = i;
            while j > start && lex_cmp(&cols[order[j]], &cols[order[j - 1]]).is_lt() {
                order.swap(j, j - 1);
                j -= 1;
            }
        }
        start = end;
    }
    let vals = DVector::from_fn(d, |i, _| values[order[i]]);
    let nu = DMatrix::from_fn(u.nrows(), d, |i, j| u[(i, order[j])]);
    let nv = DMatrix::from_fn(v.nrows(), d, |i, j| v[(i, order[j])]);
    *values = vals;
    *u = nu;
    *v = nv;
}

/// Eigendecomposition of a symmetric matrix with eigenvalues nonincreasing.
///
/// Eigenvectors follow the same sign and tie rules as [`svd`].
pub fn symmetric_eigen(s: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let sym = (s + s.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let mut values = eig.eigenvalues;
    let mut vecs = eig.eigenvectors;
    let mut dummy = vecs.clone();
    let floor = TIE_TOL * values.amax();
    canonicalize(&mut values, &mut vecs, &mut dummy, floor);
    (values, vecs)
}

/// Orthonormal frame and upper-triangular factor of `m = q * r`.
pub fn qr(m: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let f = m.clone().qr();
    (f.q(), f.r())
}

/// Symmetric part `(m + mᵀ) / 2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn reconstruct(s: &Svd) -> DMatrix<f64> {
        &s.u * DMatrix::from_diagonal(&s.singular_values) * s.v.transpose()
    }

    #[test]
    fn svd_reconstructs_and_is_orthogonal() {
        let y = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, -4.0, 5.0, 0.5, 2.0, -1.0, 7.0]);
        let s = svd(&y);
        assert_relative_eq!(reconstruct(&s), y, epsilon = 1e-12);
        let id = DMatrix::<f64>::identity(3, 3);
        assert_relative_eq!(s.u.transpose() * &s.u, id, epsilon = 1e-13);
        assert_relative_eq!(s.v.transpose() * &s.v, id, epsilon = 1e-13);
        for k in 1..3 {
            assert!(s.singular_values[k - 1] >= s.singular_values[k]);
        }
    }

    #[test]
    fn svd_resolves_tiny_singular_values_of_graded_matrix() {
        // diag(1e20, 1) * R(0.3) * diag(1, 1e-20) has determinant 1.
        let (c, s) = (0.3f64.cos(), 0.3f64.sin());
        let y = DMatrix::from_row_slice(2, 2, &[1e20 * c, -s, s, c * 1e-20]);
        let out = svd(&y);
        let det = y[(0, 0)] * y[(1, 1)] - y[(0, 1)] * y[(1, 0)];
        let prod = out.singular_values[0] * out.singular_values[1];
        assert_relative_eq!(prod, det.abs(), max_relative = 1e-13);
    }

    #[test]
    fn svd_of_identity_uses_canonical_vectors() {
        let s = svd(&DMatrix::identity(3, 3));
        assert_relative_eq!(s.u, DMatrix::identity(3, 3), epsilon = 1e-15);
        assert_relative_eq!(s.v, DMatrix::identity(3, 3), epsilon = 1e-15);
    }

    #[test]
    fn tie_break_orders_left_vectors_lexicographically() {
        // rotation: all singular values are 1
        let (c, s) = (0.4f64.cos(), 0.4f64.sin());
        let y = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
        let out = svd(&y);
        assert!(lex_cmp(&out.u.column(0).clone_owned(), &out.u.column(1).clone_owned()).is_le());
        for k in 0..2 {
            assert!(leading_sign(&out.u.column(k).clone_owned()) > 0.0);
        }
        assert_relative_eq!(reconstruct(&out), y, epsilon = 1e-14);
    }

    #[test]
    fn svd_handles_rank_deficiency() {
        let y = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        let s = svd(&y);
        assert_relative_eq!(s.singular_values[1], 0.0, epsilon = 1e-14);
        assert_relative_eq!(s.u.transpose() * &s.u, DMatrix::identity(2, 2), epsilon = 1e-13);
        assert_relative_eq!(reconstruct(&s), y, epsilon = 1e-13);
    }

    #[test]
    fn symmetric_eigen_sorted_descending() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 1.0]);
        let (vals, vecs) = symmetric_eigen(&m);
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        assert_relative_eq!(vals[0], phi * phi, epsilon = 1e-14);
        assert_relative_eq!(vals[1], 1.0 / (phi * phi), epsilon = 1e-14);
        let back = &vecs * DMatrix::from_diagonal(&vals) * vecs.transpose();
        assert_relative_eq!(back, m, epsilon = 1e-14);
    }
}
