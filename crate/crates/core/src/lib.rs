//! Sparse random linear network coding for layered multicast.
//!
//! * [`gf`]: GF(2) and GF(2^8) arithmetic.
//! * [`codec`]: sparse coding vectors, packet streams and an operation-counting
//!   Gaussian-elimination decoder.
//! * [`amc`]: closed-form expected transmission counts from the absorbing
//!   Markov chain of a receiver's decoding matrix defect.
//! * [`allocator`]: per-layer MCS and sparsity selection.
//! * [`channel`]: scenario documents, user geometry and erasures.
//! * [`sim`]: Monte Carlo multicast sessions and aggregate metrics.

pub mod allocator;
pub mod amc;
pub mod channel;
pub mod codec;
pub mod gf;
pub mod rng;
pub mod sim;
pub mod stats;
