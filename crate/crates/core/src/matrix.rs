//! Dense row-major matrices and the multiplication kernels shared by the
//! client and the reference backends.

use std::fmt::{self, Display};
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Copy + Default> Matrix<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dim(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![T::default(); rows * cols],
        }
    }

    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.as_ref().len() != cols {
                return Err(Error::dim(format!(
                    "row {i} has {} entries, expected {cols}",
                    r.as_ref().len()
                )));
            }
            data.extend_from_slice(r.as_ref());
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> T {
        self.data[row * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: T) {
        self.data[row * self.cols + col] = value;
    }

    pub fn row(&self, row: usize) -> &[T] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn map<U: Copy + Default>(&self, f: impl Fn(T) -> U) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    /// Copies out the rows in `range`.
    pub fn row_slice(&self, range: Range<usize>) -> Matrix<T> {
        assert!(range.end <= self.rows, "row range out of bounds");
        Matrix {
            rows: range.len(),
            cols: self.cols,
            data: self.data[range.start * self.cols..range.end * self.cols].to_vec(),
        }
    }

    /// Copies out the columns in `range`.
    pub fn col_slice(&self, range: Range<usize>) -> Matrix<T> {
        assert!(range.end <= self.cols, "column range out of bounds");
        let width = range.len();
        let mut data = Vec::with_capacity(self.rows * width);
        for i in 0..self.rows {
            data.extend_from_slice(&self.row(i)[range.clone()]);
        }
        Matrix {
            rows: self.rows,
            cols: width,
            data,
        }
    }

    /// Stacks `below` underneath `self`.
    pub fn vstack(&self, below: &Matrix<T>) -> Result<Matrix<T>> {
        if self.cols != below.cols && self.rows != 0 && below.rows != 0 {
            return Err(Error::dim(format!(
                "cannot stack {} columns over {}",
                self.cols, below.cols
            )));
        }
        let cols = if self.rows == 0 { below.cols } else { self.cols };
        let mut data = self.data.clone();
        data.extend_from_slice(&below.data);
        Ok(Matrix {
            rows: self.rows + below.rows,
            cols,
            data,
        })
    }

    /// Places `right` to the right of `self`.
    pub fn hstack(&self, right: &Matrix<T>) -> Result<Matrix<T>> {
        if self.rows != right.rows {
            return Err(Error::dim(format!(
                "cannot join {} rows with {}",
                self.rows, right.rows
            )));
        }
        let cols = self.cols + right.cols;
        let mut data = Vec::with_capacity(self.rows * cols);
        for i in 0..self.rows {
            data.extend_from_slice(self.row(i));
            data.extend_from_slice(right.row(i));
        }
        Ok(Matrix {
            rows: self.rows,
            cols,
            data,
        })
    }

    pub fn transpose(&self) -> Matrix<T> {
        Matrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }
}

impl Matrix<u64> {
    /// Largest entry, or `None` for an empty matrix.
    pub fn max_entry(&self) -> Option<u64> {
        self.data.iter().copied().max()
    }

    /// Checks that every entry lies in `[0, t)`.
    pub fn check_domain(&self, t: u64) -> Result<()> {
        match self.data.iter().position(|&v| v >= t) {
            None => Ok(()),
            Some(pos) => Err(Error::OutOfDomain {
                row: pos / self.cols.max(1),
                col: pos % self.cols.max(1),
                value: self.data[pos],
                modulus: t,
            }),
        }
    }
}

impl Matrix<f64> {
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, x| acc.max(x.abs()))
    }
}

fn check_inner<T, U>(a: &Matrix<T>, b: &Matrix<U>) -> Result<()> {
    if a.cols != b.rows {
        return Err(Error::dim(format!(
            "inner dimensions differ: {}x{} times {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    Ok(())
}

/// `a * b` over `Z_t`.
///
/// Products are accumulated without reduction for as many terms as fit in a
/// `u64`; moduli above 2^32 fall back to 128-bit accumulation.
pub fn matmul_mod(a: &Matrix<u64>, b: &Matrix<u64>, t: u64) -> Result<Matrix<u64>> {
    check_inner(a, b)?;
    let (m, n, k) = (a.rows, a.cols, b.cols);
    let mut out = vec![0u64; m * k];
    if t <= 1 << 32 {
        let max_term = (t - 1).saturating_mul(t - 1).max(1);
        // Terms that fit on top of an already reduced accumulator.
        let budget = ((u64::MAX - (t - 1)) / max_term).max(1);
        let mut acc = vec![0u64; k];
        for i in 0..m {
            acc.iter_mut().for_each(|x| *x = 0);
            let mut pending = 0u64;
            for p in 0..n {
                let x = a.data[i * n + p];
                if x == 0 {
                    continue;
                }
                if pending >= budget {
                    acc.iter_mut().for_each(|v| *v %= t);
                    pending = 0;
                }
                let brow = &b.data[p * k..(p + 1) * k];
                for (dst, &y) in acc.iter_mut().zip(brow) {
                    *dst += x * y;
                }
                pending += 1;
            }
            for (dst, &v) in out[i * k..(i + 1) * k].iter_mut().zip(&acc) {
                *dst = v % t;
            }
        }
    } else {
        let t128 = t as u128;
        let mut acc = vec![0u128; k];
        for i in 0..m {
            acc.iter_mut().for_each(|x| *x = 0);
            for p in 0..n {
                let x = a.data[i * n + p] as u128;
                let brow = &b.data[p * k..(p + 1) * k];
                for (dst, &y) in acc.iter_mut().zip(brow) {
                    *dst = (*dst + x * y as u128) % t128;
                }
            }
            for (dst, &v) in out[i * k..(i + 1) * k].iter_mut().zip(&acc) {
                *dst = v as u64;
            }
        }
    }
    Ok(Matrix {
        rows: m,
        cols: k,
        data: out,
    })
}

/// `a * b` in ordinary floating point.
pub fn matmul_real(a: &Matrix<f64>, b: &Matrix<f64>) -> Result<Matrix<f64>> {
    check_inner(a, b)?;
    let (m, n, k) = (a.rows, a.cols, b.cols);
    let mut out = vec![0.0; m * k];
    for i in 0..m {
        let dst = &mut out[i * k..(i + 1) * k];
        for p in 0..n {
            let x = a.data[i * n + p];
            for (d, &y) in dst.iter_mut().zip(&b.data[p * k..(p + 1) * k]) {
                *d += x * y;
            }
        }
    }
    Ok(Matrix {
        rows: m,
        cols: k,
        data: out,
    })
}

/// `a * b` over `Z_{2^128}`.
pub fn matmul_wrapping(a: &Matrix<u128>, b: &Matrix<u128>) -> Result<Matrix<u128>> {
    check_inner(a, b)?;
    let (m, n, k) = (a.rows, a.cols, b.cols);
    let mut out = vec![0u128; m * k];
    for i in 0..m {
        let dst = &mut out[i * k..(i + 1) * k];
        for p in 0..n {
            let x = a.data[i * n + p];
            if x == 0 {
                continue;
            }
            for (d, &y) in dst.iter_mut().zip(&b.data[p * k..(p + 1) * k]) {
                *d = d.wrapping_add(x.wrapping_mul(y));
            }
        }
    }
    Ok(Matrix {
        rows: m,
        cols: k,
        data: out,
    })
}

/// Plain-text matrix file: a `rows cols` line followed by the entries in
/// row-major order, whitespace separated.
pub fn parse_text<T>(text: &str) -> Result<Matrix<T>>
where
    T: Copy + Default + FromStr,
{
    let mut tokens = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .flat_map(str::split_whitespace);
    let mut dim = |what: &str| -> Result<usize> {
        tokens
            .next()
            .ok_or_else(|| Error::Config(format!("missing {what}")))?
            .parse()
            .map_err(|_| Error::Config(format!("bad {what}")))
    };
    let rows = dim("row count")?;
    let cols = dim("column count")?;
    let data = tokens
        .map(|tok| {
            tok.parse::<T>()
                .map_err(|_| Error::Config(format!("bad matrix entry {tok:?}")))
        })
        .collect::<Result<Vec<T>>>()?;
    Matrix::new(rows, cols, data)
}

impl<T: Copy + Default + Display> Matrix<T> {
    pub fn to_text(&self) -> String {
        self.to_string()
    }
}

impl<T: Copy + Default + Display> Display for Matrix<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} {}", self.rows, self.cols)?;
        for i in 0..self.rows {
            let line: Vec<String> = self.row(i).iter().map(|v| v.to_string()).collect();
            writeln!(f, "{}", line.join(" "))?;
        }
        Ok(())
    }
}
