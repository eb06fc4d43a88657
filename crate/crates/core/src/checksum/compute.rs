use crate::error::{Error, Result};
use crate::matrix::Matrix;

use super::hash::{ErrorConfig, HashMode, HashVector};
use super::ring::{ModRing, Ring};

fn check_len<T, U>(a: &Matrix<T>, h: &HashVector<U>) -> Result<()>
where
    T: Copy + Default,
    U: Copy,
{
    if h.len() != a.rows() {
        return Err(Error::dim(format!(
            "hash vector of length {} against {} rows",
            h.len(),
            a.rows()
        )));
    }
    Ok(())
}

/// `h·A`, evaluated with shift-adds when `h` is a power-of-two hash.
pub fn compute_checksum<R: Ring>(
    ring: &R,
    a: &Matrix<R::Elem>,
    h: &HashVector<R::Elem>,
) -> Result<Vec<R::Elem>> {
    check_len(a, h)?;
    if h.mode == HashMode::Pow2 && h.exponents.len() == h.len() {
        let mut row = vec![R::Elem::default(); a.cols()];
        for (i, &e) in h.exponents.iter().enumerate() {
            for (acc, &x) in row.iter_mut().zip(a.row(i)) {
                *acc = ring.add(*acc, ring.shl(x, e));
            }
        }
        Ok(row)
    } else {
        compute_checksum_muladd(ring, a, h)
    }
}

/// `h·A` by plain multiply-add, regardless of hash mode.
pub fn compute_checksum_muladd<R: Ring>(
    ring: &R,
    a: &Matrix<R::Elem>,
    h: &HashVector<R::Elem>,
) -> Result<Vec<R::Elem>> {
    check_len(a, h)?;
    let mut row = vec![R::Elem::default(); a.cols()];
    for (i, &w) in h.entries.iter().enumerate() {
        for (acc, &x) in row.iter_mut().zip(a.row(i)) {
            *acc = ring.add(*acc, ring.mul(w, x));
        }
    }
    Ok(row)
}

/// `h·A + r^A (mod t)`.
pub fn compute_checksum_with_error(
    ring: &ModRing,
    a: &Matrix<u64>,
    h: &HashVector<u64>,
    err: &ErrorConfig,
) -> Result<Vec<u64>> {
    ErrorConfig::validate_modulus(err.r, ring.modulus())?;
    if err.t != ring.modulus() {
        return Err(Error::InvalidErrorConfig(format!(
            "error config built for t = {}, checksum uses t = {}",
            err.t,
            ring.modulus()
        )));
    }
    if err.len() != a.cols() {
        return Err(Error::dim(format!(
            "error vector of length {} against {} columns",
            err.len(),
            a.cols()
        )));
    }
    let mut row = compute_checksum(ring, a, h)?;
    for (acc, &e) in row.iter_mut().zip(&err.vector) {
        *acc = ring.add(*acc, e);
    }
    Ok(row)
}

/// Row vector times matrix over the ring.
pub(crate) fn vec_mat<R: Ring>(ring: &R, v: &[R::Elem], a: &Matrix<R::Elem>) -> Vec<R::Elem> {
    let mut row = vec![R::Elem::default(); a.cols()];
    for (i, &w) in v.iter().enumerate() {
        for (acc, &x) in row.iter_mut().zip(a.row(i)) {
            *acc = ring.add(*acc, ring.mul(w, x));
        }
    }
    row
}

/// Matrix times column vector over the ring.
pub(crate) fn mat_vec<R: Ring>(ring: &R, a: &Matrix<R::Elem>, v: &[R::Elem]) -> Vec<R::Elem> {
    (0..a.rows())
        .map(|i| {
            a.row(i)
                .iter()
                .zip(v)
                .fold(R::Elem::default(), |acc, (&x, &w)| ring.add(acc, ring.mul(x, w)))
        })
        .collect()
}

/// Appends `B·hᵀ` as an extra column of `B`.
pub fn compute_column_checksum<R: Ring>(
    ring: &R,
    b: &Matrix<R::Elem>,
    h: &HashVector<R::Elem>,
) -> Result<Vec<R::Elem>> {
    if h.len() != b.cols() {
        return Err(Error::dim(format!(
            "column hash of length {} against {} columns",
            h.len(),
            b.cols()
        )));
    }
    Ok(mat_vec(ring, b, &h.entries))
}
