//! The update maps as pure ring expressions. Nothing here takes a norm or a
//! square root, so every function can be evaluated over exact rationals as
//! well as over floats.

use nalgebra::DMatrix;

use crate::Field;

fn scaled<T: Field>(m: DMatrix<T>, s: &T) -> DMatrix<T> {
    m * s.clone()
}

/// `𝐔' = 𝐔 + η(𝚺 − 𝐔𝐕ᵀ)𝐕`, `𝐕' = 𝐕 + η(𝚺 − 𝐔𝐕ᵀ)ᵀ𝐔`.
pub fn full_step<T: Field>(
    u: &DMatrix<T>,
    v: &DMatrix<T>,
    sigma: &DMatrix<T>,
    eta: &T,
) -> (DMatrix<T>, DMatrix<T>) {
    let r = sigma - u * v.transpose();
    let du = &r * v;
    let dv = r.transpose() * u;
    (u + scaled(du, eta), v + scaled(dv, eta))
}

/// Full step on `f + (λ/8)‖𝐔ᵀ𝐔 − 𝐕ᵀ𝐕‖²_F`.
pub fn regularized_step<T: Field>(
    u: &DMatrix<T>,
    v: &DMatrix<T>,
    sigma: &DMatrix<T>,
    eta: &T,
    lambda: &T,
) -> (DMatrix<T>, DMatrix<T>) {
    let (u1, v1) = full_step(u, v, sigma, eta);
    let gap = u.transpose() * u - v.transpose() * v;
    let coef = eta.clone() * lambda.clone() * T::half();
    (u1 - scaled(u * &gap, &coef), v1 + scaled(v * &gap, &coef))
}

/// Simultaneous update of the principal blocks `U, V` (d×d) and complement
/// blocks `J` ((m−d)×d), `K` ((n−d)×d) for a diagonal target.
#[allow(clippy::type_complexity)]
pub fn block_step<T: Field>(
    u: &DMatrix<T>,
    v: &DMatrix<T>,
    j: &DMatrix<T>,
    k: &DMatrix<T>,
    sigma: &DMatrix<T>,
    eta: &T,
) -> (DMatrix<T>, DMatrix<T>, DMatrix<T>, DMatrix<T>) {
    let r = sigma - u * v.transpose();
    let ktk = k.transpose() * k;
    let jtj = j.transpose() * j;
    let utu = u.transpose() * u;
    let vtv = v.transpose() * v;
    let du = &r * v - u * &ktk;
    let dv = r.transpose() * u - v * &jtj;
    let dj = j * (vtv + &ktk);
    let dk = k * (utu + &jtj);
    (
        u + scaled(du, eta),
        v + scaled(dv, eta),
        j - scaled(dj, eta),
        k - scaled(dk, eta),
    )
}

/// `(A, B) = ((U+V)/2, (U−V)/2)`.
pub fn symmetrize<T: Field>(u: &DMatrix<T>, v: &DMatrix<T>) -> (DMatrix<T>, DMatrix<T>) {
    let h = T::half();
    (scaled(u + v, &h), scaled(u - v, &h))
}

/// `(U, V) = (A+B, A−B)`.
pub fn desymmetrize<T: Field>(a: &DMatrix<T>, b: &DMatrix<T>) -> (DMatrix<T>, DMatrix<T>) {
    (a + b, a - b)
}

/// `P = Σ − AAᵀ + BBᵀ`.
pub fn symmetric_error<T: Field>(a: &DMatrix<T>, b: &DMatrix<T>, sigma: &DMatrix<T>) -> DMatrix<T> {
    sigma - a * a.transpose() + b * b.transpose()
}

/// `Q = ABᵀ − BAᵀ`.
pub fn skew_error<T: Field>(a: &DMatrix<T>, b: &DMatrix<T>) -> DMatrix<T> {
    a * b.transpose() - b * a.transpose()
}

/// Stage-one perturbation matrices `(C, D)` such that
/// `A' = A + ηPA + ηC` and `B' = B − ηPB + ηD`.
pub fn perturbation<T: Field>(
    a: &DMatrix<T>,
    b: &DMatrix<T>,
    j: &DMatrix<T>,
    k: &DMatrix<T>,
) -> (DMatrix<T>, DMatrix<T>) {
    let ktk = k.transpose() * k;
    let jtj = j.transpose() * j;
    let h = T::half();
    let plus = scaled(&ktk + &jtj, &h);
    let minus = scaled(ktk - jtj, &h);
    let c = b * a.transpose() * b - a * b.transpose() * b - a * &plus - b * &minus;
    let d = a * b.transpose() * a - b * a.transpose() * a - a * &minus - b * &plus;
    (c, d)
}

/// The gradient step written in symmetrized coordinates.
pub fn ab_step<T: Field>(
    a: &DMatrix<T>,
    b: &DMatrix<T>,
    j: &DMatrix<T>,
    k: &DMatrix<T>,
    sigma: &DMatrix<T>,
    eta: &T,
) -> (DMatrix<T>, DMatrix<T>) {
    let p = symmetric_error(a, b, sigma);
    let q = skew_error(a, b);
    let ktk = k.transpose() * k;
    let jtj = j.transpose() * j;
    let h = T::half();
    let plus = scaled(&ktk + &jtj, &h);
    let minus = scaled(ktk - jtj, &h);
    let da = &p * a - &q * b - a * &plus - b * &minus;
    let db = &q * a - &p * b - a * &minus - b * &plus;
    (a + scaled(da, eta), b + scaled(db, eta))
}

/// `P_{t+1}` assembled from time-t quantities through the perturbation
/// terms:
///
/// ```text
/// P' = P − ηP(Σ−P) − η(Σ−P)P + η²(P³ − PΣP) − 2η(BBᵀP + PBBᵀ)
///      − η(A+ηPA)Cᵀ − ηC(A+ηPA)ᵀ − η²CCᵀ
///      + η(B−ηPB)Dᵀ + ηD(B−ηPB)ᵀ + η²DDᵀ
/// ```
pub fn next_symmetric_error<T: Field>(
    a: &DMatrix<T>,
    b: &DMatrix<T>,
    j: &DMatrix<T>,
    k: &DMatrix<T>,
    sigma: &DMatrix<T>,
    eta: &T,
) -> DMatrix<T> {
    let p = symmetric_error(a, b, sigma);
    let (c, d) = perturbation(a, b, j, k);
    let e = eta.clone();
    let e2 = e.clone() * e.clone();
    let s_minus_p = sigma - &p;
    let bbt = b * b.transpose();
    let a_hat = a + scaled(&p * a, &e);
    let b_hat = b - scaled(&p * b, &e);
    let first = &p * &s_minus_p + &s_minus_p * &p;
    let cubic = &p * &p * &p - &p * sigma * &p;
    let asym = &bbt * &p + &p * &bbt;
    let c_terms = &a_hat * c.transpose() + &c * a_hat.transpose();
    let d_terms = &b_hat * d.transpose() + &d * b_hat.transpose();
    let two = T::one() + T::one();
    &p - scaled(first, &e) + scaled(cubic, &e2)
        - scaled(asym, &(two * e.clone()))
        - scaled(c_terms, &e)
        - scaled(&c * c.transpose(), &e2)
        + scaled(d_terms, &e)
        + scaled(&d * d.transpose(), &e2)
}
