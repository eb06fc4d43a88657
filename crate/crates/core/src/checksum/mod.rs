//! Blind-hash checksums: hash generation, checksum rows, verification, square
//! normalization and the analytic cost model.

pub mod checked;
pub mod compute;
pub mod hash;
pub mod normalize;
pub mod overhead;
pub mod ring;
pub mod verify;

pub use checked::{attach_checksum, attach_checksum_cols, CheckedMatrix, ChecksumRow, ResultBundle, RowMeta};
pub use compute::{compute_checksum, compute_checksum_muladd, compute_checksum_with_error, compute_column_checksum};
pub use hash::{gen_hash_vector, ErrorConfig, HashMode, HashOptions, HashVector};
pub use normalize::{normalize_square, recombine, Normalized, Recombine, SquareStrategy};
pub use overhead::{predict_overheads, OverheadModel};
pub use ring::{ModRing, RealRing, Ring};
pub use verify::{
    proof_residual, verify, verify_dual, verify_multi, verify_with_error, CheckMode, Residuals, Verdict,
    VerificationReport,
};
