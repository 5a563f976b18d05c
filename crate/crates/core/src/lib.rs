//! Numerical laboratory for one-dimensional martingales with prescribed
//! marginals.
//!
//! * [`measures`]: grid measures, Wasserstein distances, convex and
//!   first-order stochastic orders.
//! * [`call_surface`]: call-price surfaces and density extraction.
//! * [`dupire`]: local volatility from a call surface.
//! * [`forward_pde`]: Fokker–Planck solver and the calibrate → evolve →
//!   reprice round trip.
//! * [`mc`]: seeded Monte Carlo path ensembles.
//! * [`gallery`]: Markov martingales that are not strong Markov, and a
//!   strong Markov counterpart with the same marginals.
//! * [`transport`]: martingale couplings, Lipschitz kernels, kernel chains.
//! * [`io`]: file formats.

// `!(x > 0.0)` is deliberate: it rejects NaN along with nonpositive values.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod call_surface;
pub mod dupire;
pub mod error;
pub mod forward_pde;
pub mod gallery;
pub mod io;
pub mod mc;
pub mod measures;
pub mod numerics;
pub mod transport;

pub use call_surface::{CallSurface, Convention};
pub use dupire::{DupireConfig, LocalVolSurface};
pub use error::{Error, Result};
pub use forward_pde::FpConfig;
pub use mc::PathEnsemble;
pub use measures::{GridMeasure, PeacockFamily};
pub use transport::MartingaleKernel;
