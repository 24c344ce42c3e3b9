//! Global instrumentation counters.
//!
//! Every full-order operation (sparse assembly, sparse factorization, sparse
//! triangular solve, sparse matrix-vector product) bumps a process-wide
//! counter.  Tests use the counter to prove that online reduced solves never
//! touch full-order objects: the count taken before and after a reduced solve
//! must be identical.

use std::sync::atomic::{AtomicU64, Ordering};

/// Number of full-order operations performed since process start.
static FULL_ORDER_OPS: AtomicU64 = AtomicU64::new(0);

/// Record one full-order operation.
#[inline]
pub fn record_full_order_op() {
    FULL_ORDER_OPS.fetch_add(1, Ordering::Relaxed);
}

/// Snapshot of the full-order operation counter.
pub fn full_order_ops() -> u64 {
    FULL_ORDER_OPS.load(Ordering::Relaxed)
}
