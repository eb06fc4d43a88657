//! Verifiable matrix multiplication over homomorphically encrypted data.
//!
//! The client appends a secret-hash checksum row `h·A` to its operand,
//! encrypts the result and outsources `A'·B`. The server's answer carries
//! its own proof row `h·A·B`, which the client checks against `h·C` after
//! decryption. Because the checksum is encrypted, the server cannot adjust
//! the result and the proof consistently.

pub mod adversary;
pub mod backend;
pub mod bench;
pub mod checksum;
pub mod error;
pub mod matrix;
pub mod params;
pub mod protocol;
pub mod seed;

pub use error::{Error, Result};
pub use matrix::Matrix;
