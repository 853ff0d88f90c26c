//! ritzkit: a numerical laboratory for shallow neural PDE solvers.
//!
//! Two-layer tanh networks trained as PINN or Deep Ritz objectives, with
//! gradient-flow / explicit / implicit gradient descent dynamics and
//! convergence diagnostics (tangent-kernel Gram spectra, boundary
//! coercivity certificates, convergence-rate fits).

pub mod config;
pub mod diagnostics;
pub mod dynamics;
pub mod error;
pub mod functions;
pub mod geometry;
pub mod hexfloat;
pub mod loss;
pub mod net;
pub mod operators;
pub mod reference;
pub mod runner;

pub use error::{Result, RitzError};

/// Configures the global thread pool from the `RITZKIT_THREADS` environment
/// variable. No-op if the pool was already built or the variable is unset
/// or invalid.
pub fn init_threads() {
    if let Ok(v) = std::env::var("RITZKIT_THREADS") {
        if let Ok(n) = v.parse::<usize>() {
            if n > 0 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
}
