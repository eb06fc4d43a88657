use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCounters {
    /// Logical scalar mult-adds: `rows · inner · cols` per product.
    pub scalar_multadds: u64,
    pub ciphertext_ops: u64,
    pub bytes_encrypted: u64,
}

#[derive(Debug, Default)]
pub struct CounterCell {
    multadds: AtomicU64,
    ops: AtomicU64,
    bytes: AtomicU64,
}

impl CounterCell {
    pub fn record_product(&self, rows: usize, inner: usize, cols: usize) {
        self.multadds
            .fetch_add((rows * inner * cols) as u64, Ordering::Relaxed);
        self.ops.fetch_add(1, Ordering::Relaxed);
    }

    pub fn record_op(&self) {
        self.ops.fetch_add(1, Ordering::Relaxed);
    }

    pub fn record_encryption(&self, bytes: usize) {
        self.bytes.fetch_add(bytes as u64, Ordering::Relaxed);
    }

    pub fn snapshot(&self) -> OpCounters {
        OpCounters {
            scalar_multadds: self.multadds.load(Ordering::Relaxed),
            ciphertext_ops: self.ops.load(Ordering::Relaxed),
            bytes_encrypted: self.bytes.load(Ordering::Relaxed),
        }
    }

    pub fn reset(&self) {
        self.multadds.store(0, Ordering::Relaxed);
        self.ops.store(0, Ordering::Relaxed);
        self.bytes.store(0, Ordering::Relaxed);
    }
}
