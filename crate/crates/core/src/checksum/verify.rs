use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::checked::ResultBundle;
use super::compute::vec_mat;
use super::hash::{ErrorConfig, HashVector};
use super::ring::{ModRing, Ring};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckMode {
    #[default]
    Plain,
    WithError,
    Dual,
}

impl CheckMode {
    pub fn as_str(self) -> &'static str {
        match self {
            CheckMode::Plain => "plain",
            CheckMode::WithError => "with_error",
            CheckMode::Dual => "dual",
        }
    }
}

impl std::str::FromStr for CheckMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plain" => Ok(CheckMode::Plain),
            "with_error" | "with-error" | "error" => Ok(CheckMode::WithError),
            "dual" => Ok(CheckMode::Dual),
            other => Err(Error::Config(format!("unknown check mode {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Residuals {
    /// `(proof - recomputed) mod t`, or mod `r` for error-mode checks.
    Exact(Vec<u64>),
    /// `|recomputed - proof|`.
    Approx(Vec<f64>),
}

impl Residuals {
    pub fn len(&self) -> usize {
        match self {
            Residuals::Exact(v) => v.len(),
            Residuals::Approx(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn extend(&mut self, other: Residuals) {
        match (self, other) {
            (Residuals::Exact(a), Residuals::Exact(b)) => a.extend(b),
            (Residuals::Approx(a), Residuals::Approx(b)) => a.extend(b),
            _ => panic!("cannot merge exact and approximate residuals"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub verdict: Verdict,
    pub mode: CheckMode,
    pub residuals: Residuals,
    pub mismatch_count: usize,
    pub tolerance_used: f64,
    /// Client-side scalar operations: `m·k` mult-adds for `h·C` plus one per
    /// compared proof entry.
    pub client_ops: u64,
    /// Result columns whose row-proof entry disagrees.
    pub failing_columns: Vec<usize>,
    /// Result rows whose column-proof entry disagrees (dual mode).
    pub failing_rows: Vec<usize>,
    pub corner_ok: Option<bool>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    /// Combines per-block reports; `row_offset` shifts each block's failing
    /// rows into the recombined result.
    pub fn merge(parts: Vec<(usize, VerificationReport)>) -> Option<VerificationReport> {
        let mut iter = parts.into_iter();
        let (offset, mut acc) = iter.next()?;
        acc.failing_rows.iter_mut().for_each(|r| *r += offset);
        for (offset, part) in iter {
            acc.residuals.extend(part.residuals);
            acc.mismatch_count += part.mismatch_count;
            acc.tolerance_used = acc.tolerance_used.max(part.tolerance_used);
            acc.client_ops += part.client_ops;
            for c in part.failing_columns {
                if !acc.failing_columns.contains(&c) {
                    acc.failing_columns.push(c);
                }
            }
            acc.failing_rows.extend(part.failing_rows.iter().map(|r| r + offset));
            acc.corner_ok = match (acc.corner_ok, part.corner_ok) {
                (Some(a), Some(b)) => Some(a && b),
                (a, b) => a.or(b),
            };
        }
        acc.failing_columns.sort_unstable();
        acc.verdict = if acc.mismatch_count == 0 {
            Verdict::Pass
        } else {
            Verdict::Fail
        };
        Some(acc)
    }
}

fn verdict(mismatches: usize) -> Verdict {
    if mismatches == 0 {
        Verdict::Pass
    } else {
        Verdict::Fail
    }
}

struct RowCheck<E> {
    residuals: Vec<E>,
    failing: Vec<usize>,
    tolerance: f64,
}

fn compare_row<R: Ring>(ring: &R, recomputed: &[R::Elem], proof: &[R::Elem]) -> RowCheck<R::Elem> {
    let tolerance = ring.tolerance(proof);
    let residuals: Vec<R::Elem> = recomputed
        .iter()
        .zip(proof)
        .map(|(&x, &p)| ring.residual(x, p))
        .collect();
    let failing = residuals
        .iter()
        .enumerate()
        .filter(|(_, &r)| !ring.accepts(r, tolerance))
        .map(|(j, _)| j)
        .collect();
    RowCheck {
        residuals,
        failing,
        tolerance,
    }
}

fn check_shapes<T: Copy + Default, H: Copy>(
    bundle: &ResultBundle<T>,
    hashes: &[&HashVector<H>],
) -> Result<()> {
    let m = bundle.result.rows();
    if hashes.is_empty() {
        return Err(Error::dim("no hash vectors given"));
    }
    if bundle.proof_rows.rows() < hashes.len() {
        return Err(Error::dim(format!(
            "{} hash vectors but only {} proof rows",
            hashes.len(),
            bundle.proof_rows.rows()
        )));
    }
    if bundle.proof_rows.cols() != bundle.result.cols() {
        return Err(Error::dim("proof rows and result differ in width"));
    }
    if let Some(h) = hashes.iter().find(|h| h.len() != m) {
        return Err(Error::dim(format!(
            "hash vector of length {} against a result with {m} rows",
            h.len()
        )));
    }
    Ok(())
}

/// Plain blind-hash check: `h·C` must reproduce the proof row.
pub fn verify<R: Ring>(
    ring: &R,
    bundle: &ResultBundle<R::Elem>,
    h: &HashVector<R::Elem>,
) -> Result<VerificationReport> {
    verify_multi(ring, bundle, &[h])
}

/// Checks proof row `i` against `hashes[i]` for every given hash vector.
pub fn verify_multi<R: Ring>(
    ring: &R,
    bundle: &ResultBundle<R::Elem>,
    hashes: &[&HashVector<R::Elem>],
) -> Result<VerificationReport> {
    check_shapes(bundle, hashes)?;
    let (m, k) = (bundle.result.rows(), bundle.result.cols());
    let mut residuals = Vec::with_capacity(k * hashes.len());
    let mut failing_columns = Vec::new();
    let mut mismatches = 0;
    let mut tolerance_used = 0.0f64;
    for (i, h) in hashes.iter().enumerate() {
        let recomputed = vec_mat(ring, &h.entries, &bundle.result);
        let check = compare_row(ring, &recomputed, bundle.proof_rows.row(i));
        mismatches += check.failing.len();
        tolerance_used = tolerance_used.max(check.tolerance);
        for c in check.failing {
            if !failing_columns.contains(&c) {
                failing_columns.push(c);
            }
        }
        residuals.extend(check.residuals);
    }
    failing_columns.sort_unstable();
    Ok(VerificationReport {
        verdict: verdict(mismatches),
        mode: CheckMode::Plain,
        residuals: R::pack(residuals),
        mismatch_count: mismatches,
        tolerance_used,
        client_ops: (hashes.len() * (m * k + k)) as u64,
        failing_columns,
        failing_rows: Vec::new(),
        corner_ok: None,
    })
}

/// `(C^A - h·C) mod t` for the first proof row.
pub fn proof_residual(
    ring: &ModRing,
    bundle: &ResultBundle<u64>,
    h: &HashVector<u64>,
) -> Result<Vec<u64>> {
    check_shapes(bundle, &[h])?;
    let recomputed = vec_mat(ring, &h.entries, &bundle.result);
    Ok(recomputed
        .iter()
        .zip(bundle.proof_rows.row(0))
        .map(|(&x, &p)| ring.sub(p, x))
        .collect())
}

/// Error-augmented check: the proof residual must vanish modulo the secret `r`.
pub fn verify_with_error(
    ring: &ModRing,
    bundle: &ResultBundle<u64>,
    h: &HashVector<u64>,
    err: &ErrorConfig,
) -> Result<VerificationReport> {
    ErrorConfig::validate_modulus(err.r, ring.modulus())?;
    if err.t != ring.modulus() {
        return Err(Error::InvalidErrorConfig(format!(
            "error config built for t = {}, verifying over t = {}",
            err.t,
            ring.modulus()
        )));
    }
    let (m, k) = (bundle.result.rows(), bundle.result.cols());
    let residuals: Vec<u64> = proof_residual(ring, bundle, h)?
        .into_iter()
        .map(|d| d % err.r)
        .collect();
    let failing_columns: Vec<usize> = residuals
        .iter()
        .enumerate()
        .filter(|(_, &r)| r != 0)
        .map(|(j, _)| j)
        .collect();
    Ok(VerificationReport {
        verdict: verdict(failing_columns.len()),
        mode: CheckMode::WithError,
        residuals: Residuals::Exact(residuals),
        mismatch_count: failing_columns.len(),
        tolerance_used: 0.0,
        client_ops: (m * k + k) as u64,
        failing_columns,
        failing_rows: Vec::new(),
        corner_ok: None,
    })
}

/// Cross check with a row hash on the left operand and a column hash on the
/// right operand.
pub fn verify_dual<R: Ring>(
    ring: &R,
    bundle: &ResultBundle<R::Elem>,
    h_rows: &HashVector<R::Elem>,
    h_cols: &HashVector<R::Elem>,
) -> Result<VerificationReport> {
    let (Some(proof_cols), Some(corner)) = (&bundle.proof_cols, &bundle.corner) else {
        return Err(Error::ModeMismatch(
            "dual verification needs column proofs and a corner".into(),
        ));
    };
    check_shapes(bundle, &[h_rows])?;
    let (m, k) = (bundle.result.rows(), bundle.result.cols());
    if h_cols.len() != k || proof_cols.rows() != m || proof_cols.cols() < 1 || corner.rows() < 1 {
        return Err(Error::dim(format!(
            "column hash of length {} against {k} result columns",
            h_cols.len()
        )));
    }

    let row_hash = vec_mat(ring, &h_rows.entries, &bundle.result);
    let rows = compare_row(ring, &row_hash, bundle.proof_rows.row(0));

    let col_hash: Vec<R::Elem> = (0..m)
        .map(|i| {
            bundle
                .result
                .row(i)
                .iter()
                .zip(&h_cols.entries)
                .fold(R::Elem::default(), |acc, (&x, &w)| ring.add(acc, ring.mul(x, w)))
        })
        .collect();
    let col_proof: Vec<R::Elem> = (0..m).map(|i| proof_cols.get(i, 0)).collect();
    let cols = compare_row(ring, &col_hash, &col_proof);

    let corner_hash = row_hash
        .iter()
        .zip(&h_cols.entries)
        .fold(R::Elem::default(), |acc, (&x, &w)| ring.add(acc, ring.mul(x, w)));
    let corner_check = compare_row(ring, &[corner_hash], &[corner.get(0, 0)]);
    let corner_ok = corner_check.failing.is_empty();

    let mismatches = rows.failing.len() + cols.failing.len() + corner_check.failing.len();
    let mut residuals = rows.residuals;
    residuals.extend(cols.residuals);
    residuals.extend(corner_check.residuals);
    Ok(VerificationReport {
        verdict: verdict(mismatches),
        mode: CheckMode::Dual,
        residuals: R::pack(residuals),
        mismatch_count: mismatches,
        tolerance_used: rows.tolerance.max(cols.tolerance).max(corner_check.tolerance),
        client_ops: (2 * m * k + k + k + m + 1) as u64,
        failing_columns: rows.failing,
        failing_rows: cols.failing,
        corner_ok: Some(corner_ok),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::checksum::ring::RealRing;
    use crate::matrix::Matrix;

    fn bundle(c: &[[u64; 2]], proof: [u64; 2]) -> ResultBundle<u64> {
        ResultBundle::new(Matrix::from_rows(c).unwrap(), Matrix::from_rows(&[proof]).unwrap()).unwrap()
    }

    /// A = [[1,2,3],[4,5,6]], B = [[1,0],[0,1],[1,1]] multiplied out by hand.
    const C: [[u64; 2]; 2] = [[4, 5], [10, 11]];

    #[test]
    fn worked_pass() {
        let ring = ModRing::new(65537);
        let h = HashVector::from_entries(vec![2, 3]);
        let r = verify(&ring, &bundle(&C, [38, 43]), &h).unwrap();
        assert!(r.passed());
        assert_eq!(r.residuals, Residuals::Exact(vec![0, 0]));
        assert_eq!(r.client_ops, 2 * 2 + 2);
    }

    #[test]
    fn worked_fail() {
        let ring = ModRing::new(65537);
        let h = HashVector::from_entries(vec![2, 3]);
        let r = verify(&ring, &bundle(&C, [38, 44]), &h).unwrap();
        assert_eq!(r.verdict, Verdict::Fail);
        assert_eq!(r.mismatch_count, 1);
        assert_eq!(r.residuals, Residuals::Exact(vec![0, 1]));
        assert_eq!(r.failing_columns, vec![1]);
    }

    #[test]
    fn zero_result_passes() {
        let ring = ModRing::new(65537);
        let h = HashVector::from_entries(vec![9, 1234]);
        assert!(verify(&ring, &bundle(&[[0, 0], [0, 0]], [0, 0]), &h).unwrap().passed());
    }

    #[test]
    fn dimension_errors() {
        let ring = ModRing::new(65537);
        let h = HashVector::from_entries(vec![2, 3, 4]);
        assert!(matches!(verify(&ring, &bundle(&C, [38, 43]), &h), Err(Error::InvalidDimension(_))));
        let mut b = bundle(&C, [38, 43]);
        b.proof_rows = Matrix::zeros(0, 2);
        let h = HashVector::from_entries(vec![2, 3]);
        assert!(verify(&ring, &b, &h).is_err());
    }

    #[test]
    fn error_mode_worked_values() {
        // r = 5 divides 65535; nothing wraps so the values match t = 65537 arithmetic.
        let ring = ModRing::new(65535);
        let h = HashVector::from_entries(vec![2, 3]);
        let err = ErrorConfig::new(5, 65535, vec![10, 5, 20]).unwrap();
        let pass = verify_with_error(&ring, &bundle(&C, [68, 68]), &h, &err).unwrap();
        assert!(pass.passed());
        assert_eq!(proof_residual(&ring, &bundle(&C, [68, 68]), &h).unwrap(), vec![30, 25]);
        let fail = verify_with_error(&ring, &bundle(&C, [68, 69]), &h, &err).unwrap();
        assert_eq!(fail.residuals, Residuals::Exact(vec![0, 1]));
        assert_eq!(fail.verdict, Verdict::Fail);
    }

    #[test]
    fn error_mode_rejects_trivial_modulus() {
        let ring = ModRing::new(65535);
        let h = HashVector::from_entries(vec![2, 3]);
        let mut err = ErrorConfig::new(5, 65535, vec![0, 0, 0]).unwrap();
        err.r = 1;
        assert!(matches!(
            verify_with_error(&ring, &bundle(&C, [68, 68]), &h, &err),
            Err(Error::InvalidErrorConfig(_))
        ));
    }

    fn dual_bundle(c: Matrix<u64>, ha: &[u64], hb: &[u64], t: u64) -> ResultBundle<u64> {
        let ring = ModRing::new(t);
        let rows = vec_mat(&ring, ha, &c);
        let cols: Vec<u64> = (0..c.rows())
            .map(|i| (0..c.cols()).map(|j| c.get(i, j) * hb[j]).sum::<u64>() % t)
            .collect();
        let corner = rows.iter().zip(hb).map(|(x, y)| x * y).sum::<u64>() % t;
        ResultBundle {
            result: c,
            proof_rows: Matrix::from_rows(&[rows]).unwrap(),
            proof_cols: Some(Matrix::new(cols.len(), 1, cols).unwrap()),
            corner: Some(Matrix::new(1, 1, vec![corner]).unwrap()),
        }
    }

    #[test]
    fn dual_localizes_tamper() {
        let ring = ModRing::new(65537);
        let ha = HashVector::from_entries(vec![2, 3]);
        let hb = HashVector::from_entries(vec![1, 2]);
        let honest = dual_bundle(Matrix::from_rows(&C).unwrap(), &[2, 3], &[1, 2], 65537);
        assert!(verify_dual(&ring, &honest, &ha, &hb).unwrap().passed());

        let mut tampered = honest.clone();
        tampered.result.set(1, 0, 11);
        let r = verify_dual(&ring, &tampered, &ha, &hb).unwrap();
        assert_eq!(r.verdict, Verdict::Fail);
        assert_eq!(r.failing_columns, vec![0]);
        assert_eq!(r.failing_rows, vec![1]);
        assert_eq!(r.corner_ok, Some(false));
    }

    #[test]
    fn dual_needs_column_proofs() {
        let ring = ModRing::new(65537);
        let ha = HashVector::from_entries(vec![2, 3]);
        let hb = HashVector::from_entries(vec![1, 2]);
        assert!(matches!(
            verify_dual(&ring, &bundle(&C, [38, 43]), &ha, &hb),
            Err(Error::ModeMismatch(_))
        ));
        let zero = dual_bundle(Matrix::zeros(2, 2), &[2, 3], &[1, 2], 65537);
        assert!(verify_dual(&ring, &zero, &ha, &hb).unwrap().passed());
    }

    #[test]
    fn approximate_tolerance() {
        let ring = RealRing::default();
        let h = HashVector::from_entries(vec![0.5, -0.25]);
        let c = Matrix::from_rows(&[[1.0, 2.0], [4.0, 8.0]]).unwrap();
        let exact = [0.5 - 1.0, 1.0 - 2.0];
        let ok = ResultBundle::new(c.clone(), Matrix::from_rows(&[[exact[0] + 1e-7, exact[1]]]).unwrap()).unwrap();
        let r = verify(&ring, &ok, &h).unwrap();
        assert!(r.passed());
        assert!((r.tolerance_used - 2.0 / (1u64 << 20) as f64).abs() < 1e-15);
        let bad = ResultBundle::new(c, Matrix::from_rows(&[[exact[0] + 1e-3, exact[1]]]).unwrap()).unwrap();
        assert!(!verify(&ring, &bad, &h).unwrap().passed());
    }
}
