//! Square inputs are reshaped into non-square blocks before hashing so the
//! hash cannot be recovered through the matrix inverse.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SquareStrategy {
    #[default]
    RowSplit,
    Pad,
}

impl std::str::FromStr for SquareStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "row_split" | "split" => Ok(SquareStrategy::RowSplit),
            "pad" => Ok(SquareStrategy::Pad),
            other => Err(Error::Config(format!("unknown square strategy {other:?}"))),
        }
    }
}

/// How block results are reassembled into the product of the original matrix.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Recombine {
    Identity,
    /// Concatenate block results; each block has the listed row count.
    RowSplit { block_rows: Vec<usize> },
    /// Drop the appended zero rows.
    Pad { original_rows: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Normalized<T> {
    pub blocks: Vec<Matrix<T>>,
    pub plan: Recombine,
}

pub fn normalize_square<T: Copy + Default>(
    a: &Matrix<T>,
    strategy: SquareStrategy,
) -> Result<Normalized<T>> {
    if !a.is_square() {
        return Ok(Normalized {
            blocks: vec![a.clone()],
            plan: Recombine::Identity,
        });
    }
    let n = a.rows();
    match strategy {
        SquareStrategy::RowSplit => {
            if n < 2 {
                return Err(Error::CannotSplit { rows: n, cols: n });
            }
            let top = n.div_ceil(2);
            Ok(Normalized {
                blocks: vec![a.row_slice(0..top), a.row_slice(top..n)],
                plan: Recombine::RowSplit {
                    block_rows: vec![top, n - top],
                },
            })
        }
        SquareStrategy::Pad => Ok(Normalized {
            blocks: vec![a.vstack(&Matrix::zeros(1, n))?],
            plan: Recombine::Pad { original_rows: n },
        }),
    }
}

/// Reassembles block products according to `plan`.
pub fn recombine<T: Copy + Default>(plan: &Recombine, results: Vec<Matrix<T>>) -> Result<Matrix<T>> {
    match plan {
        Recombine::Identity => {
            let mut it = results.into_iter();
            match (it.next(), it.next()) {
                (Some(c), None) => Ok(c),
                _ => Err(Error::dim("identity plan expects exactly one block result")),
            }
        }
        Recombine::RowSplit { block_rows } => {
            if results.len() != block_rows.len() {
                return Err(Error::dim(format!(
                    "{} block results for {} blocks",
                    results.len(),
                    block_rows.len()
                )));
            }
            let mut iter = results.into_iter().zip(block_rows);
            let (first, &rows) = iter.next().ok_or_else(|| Error::dim("no blocks"))?;
            if first.rows() != rows {
                return Err(Error::dim("block result has the wrong row count"));
            }
            iter.try_fold(first, |acc, (block, &rows)| {
                if block.rows() != rows {
                    return Err(Error::dim("block result has the wrong row count"));
                }
                acc.vstack(&block)
            })
        }
        Recombine::Pad { original_rows } => {
            let [c]: [Matrix<T>; 1] = results
                .try_into()
                .map_err(|_| Error::dim("pad plan expects exactly one block result"))?;
            if c.rows() < *original_rows {
                return Err(Error::dim("padded result is shorter than the original"));
            }
            Ok(c.row_slice(0..*original_rows))
        }
    }
}
