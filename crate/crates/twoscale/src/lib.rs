//! Solvers and rare-event analysis for the two-scale random elliptic problem
//!
//! ```text
//!     -d/dx ( A(x, x/eps, omega) d/dx u(x) ) = f(x),   x in (0, 1),
//!     u(0) = u(1) = 0,
//! ```
//!
//! where the coefficient `A` mixes a smooth macroscopic profile with random
//! fine-scale oscillations that renew on cells of width `eps`. In one
//! dimension the solution is an explicit functional of four weighted
//! integrals of `1/A`, which lets us compute `u_eps(x)` exactly (up to
//! quadrature), pass to the homogenized limit `u_0`, characterize the
//! Gaussian corrector of size `sqrt(eps)`, and compute large deviation rate
//! functions for the tails of `u_eps(x)` both exactly (via a 4D
//! Gartner-Ellis functional and contraction) and through a cheaper scalar
//! approximation.
//!
//! Module map:
//!
//! * [`media`]: the two random coefficient families and their per-cell laws.
//! * [`source`]: piecewise constant forcing terms with exact antiderivatives.
//! * [`solver`]: exact pointwise solves, homogenized solves, the kernel
//!   `G(x, s)` and the `u_0 + v + R` expansion.
//! * [`corrector`]: variance and sampling of the Gaussian corrector process,
//!   plus the quadratic rate function it induces.
//! * [`ldp`]: cumulant generating functionals, Legendre transforms in 1D and
//!   4D, contraction to a scalar rate, steepness diagnostics and
//!   finite-`eps` Chernoff bounds.
//! * [`montecarlo`]: importance-sampled estimation of tail probabilities and
//!   empirical rate curves.
//! * [`quad`], [`rng`]: shared quadrature kernels and reproducible stream
//!   splitting.

pub mod corrector;
pub mod ldp;
pub mod media;
pub mod montecarlo;
pub mod quad;
pub mod rng;
pub mod solver;
pub mod source;

/// Version string reported in output headers.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
