use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Bookkeeping for one appended checksum row.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChecksumRow {
    /// Row index inside the stacked matrix.
    pub index: usize,
    /// Names the hash vector that produced the row.
    pub hash_label: String,
    pub with_error: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RowMeta {
    pub hash_label: String,
    pub with_error: bool,
}

impl RowMeta {
    pub fn plain(label: impl Into<String>) -> Self {
        RowMeta {
            hash_label: label.into(),
            with_error: false,
        }
    }

    pub fn with_error(label: impl Into<String>) -> Self {
        RowMeta {
            hash_label: label.into(),
            with_error: true,
        }
    }
}

/// A matrix with checksum rows appended below it, or a checksum column
/// appended to its right (the right-hand operand in dual mode).
#[derive(Clone, Debug, PartialEq)]
pub struct CheckedMatrix<T> {
    base: Matrix<T>,
    checksum_rows: Matrix<T>,
    row_map: Vec<ChecksumRow>,
    checksum_cols: Option<Matrix<T>>,
}

impl<T: Copy + Default> CheckedMatrix<T> {
    pub fn base(&self) -> &Matrix<T> {
        &self.base
    }

    pub fn checksum_rows(&self) -> &Matrix<T> {
        &self.checksum_rows
    }

    pub fn checksum_cols(&self) -> Option<&Matrix<T>> {
        self.checksum_cols.as_ref()
    }

    pub fn row_map(&self) -> &[ChecksumRow] {
        &self.row_map
    }

    pub fn proof_row_count(&self) -> usize {
        self.checksum_rows.rows()
    }

    pub fn proof_col_count(&self) -> usize {
        self.checksum_cols.as_ref().map_or(0, Matrix::cols)
    }

    pub fn total_rows(&self) -> usize {
        self.base.rows() + self.checksum_rows.rows()
    }

    /// The matrix that actually gets encrypted.
    pub fn stacked(&self) -> Matrix<T> {
        let widened = match &self.checksum_cols {
            Some(cols) => self.base.hstack(cols).expect("column count checked on attach"),
            None => self.base.clone(),
        };
        widened
            .vstack(&self.checksum_rows)
            .expect("row width checked on attach")
    }

    pub fn detach(self) -> (Matrix<T>, Matrix<T>) {
        (self.base, self.checksum_rows)
    }
}

/// Appends checksum rows beneath `a`.
pub fn attach_checksum<T: Copy + Default>(
    a: &Matrix<T>,
    rows: &[Vec<T>],
    meta: Vec<RowMeta>,
) -> Result<CheckedMatrix<T>> {
    if rows.is_empty() {
        return Err(Error::dim("at least one checksum row is required"));
    }
    if meta.len() != rows.len() {
        return Err(Error::dim(format!(
            "{} checksum rows but {} row descriptors",
            rows.len(),
            meta.len()
        )));
    }
    let checksum_rows = Matrix::from_rows(rows)?;
    if checksum_rows.cols() != a.cols() {
        return Err(Error::dim(format!(
            "checksum rows have {} entries, matrix has {} columns",
            checksum_rows.cols(),
            a.cols()
        )));
    }
    let row_map = meta
        .into_iter()
        .enumerate()
        .map(|(i, m)| ChecksumRow {
            index: a.rows() + i,
            hash_label: m.hash_label,
            with_error: m.with_error,
        })
        .collect();
    Ok(CheckedMatrix {
        base: a.clone(),
        checksum_rows,
        row_map,
        checksum_cols: None,
    })
}

/// Appends checksum columns to the right of `b`.
pub fn attach_checksum_cols<T: Copy + Default>(
    b: &Matrix<T>,
    cols: &[Vec<T>],
) -> Result<CheckedMatrix<T>> {
    if cols.is_empty() {
        return Err(Error::dim("at least one checksum column is required"));
    }
    let as_rows = Matrix::from_rows(cols)?;
    if as_rows.cols() != b.rows() {
        return Err(Error::dim(format!(
            "checksum columns have {} entries, matrix has {} rows",
            as_rows.cols(),
            b.rows()
        )));
    }
    Ok(CheckedMatrix {
        base: b.clone(),
        checksum_rows: Matrix::zeros(0, b.cols()),
        row_map: Vec::new(),
        checksum_cols: Some(as_rows.transpose()),
    })
}

/// A decrypted server response split into the result and its proofs.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultBundle<T> {
    pub result: Matrix<T>,
    pub proof_rows: Matrix<T>,
    pub proof_cols: Option<Matrix<T>>,
    pub corner: Option<Matrix<T>>,
}

impl<T: Copy + Default> ResultBundle<T> {
    pub fn new(result: Matrix<T>, proof_rows: Matrix<T>) -> Result<Self> {
        if result.cols() != proof_rows.cols() {
            return Err(Error::dim(format!(
                "result has {} columns, proof rows have {}",
                result.cols(),
                proof_rows.cols()
            )));
        }
        Ok(ResultBundle {
            result,
            proof_rows,
            proof_cols: None,
            corner: None,
        })
    }

    /// Splits a decrypted product whose trailing `p` rows and `q` columns
    /// are proofs.
    pub fn split(product: &Matrix<T>, p: usize, q: usize) -> Result<Self> {
        if p > product.rows() || q > product.cols() {
            return Err(Error::dim(format!(
                "cannot strip {p} rows and {q} columns from a {}x{} product",
                product.rows(),
                product.cols()
            )));
        }
        let m = product.rows() - p;
        let k = product.cols() - q;
        let top = product.row_slice(0..m);
        let bottom = product.row_slice(m..product.rows());
        let (proof_cols, corner) = if q > 0 {
            (Some(top.col_slice(k..k + q)), Some(bottom.col_slice(k..k + q)))
        } else {
            (None, None)
        };
        Ok(ResultBundle {
            result: top.col_slice(0..k),
            proof_rows: bottom.col_slice(0..k),
            proof_cols,
            corner,
        })
    }
}
