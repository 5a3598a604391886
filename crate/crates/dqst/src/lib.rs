//! Dynamical quantum state tomography for finite-dimensional Markovian
//! systems: decide when a restricted observable set determines every state
//! (observability analysis), choose which observables to measure and when,
//! simulate shot-noise-limited measurement data, and reconstruct states and
//! unmeasurable expectations by linear inversion.
//!
//! Everything works in the Heisenberg picture: superoperators act on
//! vectorized observables, and expectations are inner products against the
//! fixed initial state.

extern crate blas_src;

extern "C" {
    fn openblas_set_num_threads(num: std::os::raw::c_int);
}

/// Pins the BLAS backend to one thread. The threaded OpenBLAS factorization
/// kernels allocate work buffers on the calling thread's stack and overflow
/// the 2 MiB default of test and rayon worker threads; concurrency in this
/// crate lives at the trial level instead (seeded stream splitting).
pub(crate) fn ensure_serial_blas() {
    static INIT: std::sync::Once = std::sync::Once::new();
    INIT.call_once(|| unsafe { openblas_set_num_threads(1) });
}

pub mod dynamics;
pub mod error;
pub mod linops;
pub mod measurement;
pub mod models;
pub mod observability;
pub mod reconstruct;
pub mod selection;

pub use error::{Error, Result};
