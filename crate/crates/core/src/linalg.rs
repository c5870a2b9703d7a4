//! Small dense helpers on top of nalgebra: ordered spectra, norms that
//! tolerate empty blocks, orthonormal completion and guarded inverses.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::{LabError, Real, Result};

/// Singular values in non-increasing order. Empty for matrices with a zero
/// dimension.
pub fn singular_values<T: Real>(m: &DMatrix<T>) -> Vec<T> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let k = m.nrows().min(m.ncols());
    let eig = SymmetricEigen::new(augmented(m));
    let mut ev: Vec<T> = eig.eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    ev.truncate(k);
    ev.iter().map(|x| x.max(T::zero())).collect()
}

/// `[[0, m], [mᵀ, 0]]`, whose eigenvalues are `±σᵢ(m)` padded with zeros.
/// nalgebra's bidiagonal SVD loses accuracy on rank-deficient input, the
/// symmetric eigensolver does not.
fn augmented<T: Real>(m: &DMatrix<T>) -> DMatrix<T> {
    let (r, c) = m.shape();
    DMatrix::from_fn(r + c, r + c, |i, j| match (i < r, j < r) {
        (true, false) => m[(i, j - r)],
        (false, true) => m[(j, i - r)],
        _ => T::zero(),
    })
}

/// Leading `k` singular triplets `(σ, left, right)` in non-increasing order.
/// Requires `σ_k > 0`; the returned vectors have unit norm.
pub fn top_singular_triplets<T: Real>(
    m: &DMatrix<T>,
    k: usize,
) -> (Vec<T>, DMatrix<T>, DMatrix<T>) {
    let r = m.nrows();
    let eig = SymmetricEigen::new(augmented(m));
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let order = &order[..k];
    let sv = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let part = |rows: std::ops::Range<usize>| {
        let cols: Vec<_> = order
            .iter()
            .map(|&i| {
                let v = eig
                    .eigenvectors
                    .column(i)
                    .rows(rows.start, rows.len())
                    .into_owned();
                let norm = v.norm();
                v / norm
            })
            .collect();
        DMatrix::from_columns(&cols)
    };
    (sv, part(0..r), part(r..r + m.ncols()))
}

/// Spectral norm; zero for empty matrices. The top eigenvalue of the
/// smaller Gram matrix is relatively accurate, so this skips the augmented
/// solve.
pub fn op_norm<T: Real>(m: &DMatrix<T>) -> T {
    if m.nrows() == 0 || m.ncols() == 0 {
        return T::zero();
    }
    let gram = if m.nrows() < m.ncols() {
        m * m.transpose()
    } else {
        m.transpose() * m
    };
    lambda_max(&gram).max(T::zero()).sqrt()
}

/// Smallest of the `min(rows, cols)` singular values; zero for empty input.
pub fn sigma_min<T: Real>(m: &DMatrix<T>) -> T {
    singular_values(m).last().copied().unwrap_or_else(T::zero)
}

pub fn frobenius<T: Real>(m: &DMatrix<T>) -> T {
    m.norm()
}

/// Frobenius inner product `⟨a, b⟩ = tr(aᵀ b)`.
pub fn inner<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>) -> T {
    a.dot(b)
}

/// Eigenvalues of the symmetric part of `m`, non-increasing.
pub fn sym_eigenvalues<T: Real>(m: &DMatrix<T>) -> Vec<T> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let sym = symmetric_part(m);
    let mut ev: Vec<T> = SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .copied()
        .collect();
    ev.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    ev
}

pub fn lambda_min<T: Real>(m: &DMatrix<T>) -> T {
    sym_eigenvalues(m).last().copied().unwrap_or_else(T::zero)
}

pub fn lambda_max<T: Real>(m: &DMatrix<T>) -> T {
    sym_eigenvalues(m).first().copied().unwrap_or_else(T::zero)
}

pub fn symmetric_part<T: Real>(m: &DMatrix<T>) -> DMatrix<T> {
    (m + m.transpose()) * T::lit(0.5)
}

pub fn is_finite<T: Real>(m: &DMatrix<T>) -> bool {
    m.iter().all(|x| x.is_finite())
}

pub fn max_abs<T: Real>(m: &DMatrix<T>) -> T {
    m.iter().fold(T::zero(), |acc, x| acc.max(x.abs()))
}

/// Square diagonal matrix from a list of entries.
pub fn diag<T: Real>(entries: &[T]) -> DMatrix<T> {
    let k = entries.len();
    DMatrix::from_fn(k, k, |i, j| if i == j { entries[i] } else { T::zero() })
}

/// Stacks `top` over `bottom`; both must share the column count.
pub fn vstack<T: Real>(top: &DMatrix<T>, bottom: &DMatrix<T>) -> DMatrix<T> {
    debug_assert_eq!(top.ncols(), bottom.ncols());
    let (r1, r2) = (top.nrows(), bottom.nrows());
    DMatrix::from_fn(r1 + r2, top.ncols(), |i, j| {
        if i < r1 {
            top[(i, j)]
        } else {
            bottom[(i - r1, j)]
        }
    })
}

/// Completes the orthonormal columns of `cols` (k ≤ n columns of length n)
/// to an n×n orthogonal matrix whose first k columns are `cols`.
pub fn complete_orthonormal<T: Real>(cols: &DMatrix<T>) -> DMatrix<T> {
    let n = cols.nrows();
    let mut basis: Vec<nalgebra::DVector<T>> = cols.column_iter().map(|c| c.into_owned()).collect();
    let mut e = 0;
    while basis.len() < n && e < n {
        let mut v = nalgebra::DVector::from_fn(n, |i, _| if i == e { T::one() } else { T::zero() });
        // two passes of modified Gram-Schmidt
        for _ in 0..2 {
            for b in &basis {
                let proj = b.dot(&v);
                v -= b * proj;
            }
        }
        let norm = v.norm();
        if norm > T::lit(0.5) {
            basis.push(v / norm);
        }
        e += 1;
    }
    DMatrix::from_columns(&basis)
}

/// Orthonormal Q factor of a square matrix with the signs fixed so that R
/// has a non-negative diagonal. Applied to a Gaussian matrix this yields a
/// Haar-distributed orthogonal matrix.
pub fn orthonormalize<T: Real>(g: DMatrix<T>) -> DMatrix<T> {
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..q.ncols().min(r.nrows()) {
        if r[(j, j)] < T::zero() {
            let mut col = q.column_mut(j);
            col.neg_mut();
        }
    }
    q
}

/// `‖mᵀm − I‖_op`.
pub fn orthogonality_defect<T: Real>(m: &DMatrix<T>) -> T {
    let g = m.transpose() * m;
    op_norm(&(g - DMatrix::identity(m.ncols(), m.ncols())))
}

/// Inverse of a symmetric matrix via its eigendecomposition. Fails when the
/// smallest eigenvalue magnitude is at or below `guard`.
pub fn sym_inverse<T: Real>(m: &DMatrix<T>, guard: T) -> Result<DMatrix<T>> {
    let eig = SymmetricEigen::new(symmetric_part(m));
    let smallest = eig
        .eigenvalues
        .iter()
        .fold(T::max_value().unwrap(), |acc, x| acc.min(x.abs()));
    if !(smallest > guard) {
        return Err(LabError::Singular(format!(
            "smallest eigenvalue magnitude {smallest:e} at or below guard {guard:e}"
        )));
    }
    let inv_diag = eig.eigenvalues.map(|x| T::one() / x);
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&inv_diag) * eig.eigenvectors.transpose())
}

/// `Q f(Λ) Qᵀ` for a symmetric matrix.
pub fn sym_apply<T: Real>(m: &DMatrix<T>, f: impl Fn(T) -> T) -> DMatrix<T> {
    let eig = SymmetricEigen::new(symmetric_part(m));
    let fd = eig.eigenvalues.map(f);
    &eig.eigenvectors * DMatrix::from_diagonal(&fd) * eig.eigenvectors.transpose()
}
