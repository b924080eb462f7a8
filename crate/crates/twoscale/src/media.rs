//! The two random coefficient families and their per-cell laws.
//!
//! Both families share the same cell structure: the fine scale renews on
//! cells `[(n-1) eps, n eps)`, and a realization is the vector of per-cell
//! random inputs. They differ in what that input is:
//!
//! * **Parameterized**: `A(x, x/eps) = a(x) + nu_b * theta_n` on cell `n`,
//!   where `a` is a smooth random profile bounded below by a floor and
//!   `theta_n ~ U[-1, 1]` iid. The cell law of `1/A` at a point with profile
//!   value `alpha` is the law of `V = 1/(alpha + nu_b * Theta)`, with
//!   density `1/(2 nu_b v^2)` on `(1/(alpha+nu_b), 1/(alpha-nu_b))`.
//! * **Convolved**: `1/A` is itself the cell value, `gamma_n = sum_k h_k
//!   beta_{n-k}` with `beta_m ~ chi-squared(xi)` iid and a short nonnegative
//!   kernel `h`. With the default box kernel of width `kappa = 1` the cells
//!   are independent.

use rand::Rng as _;
use rand_distr::{Distribution, Gamma};
use thiserror::Error;

use crate::rng::Substream;

#[derive(Debug, Error, PartialEq)]
pub enum MediaError {
    #[error("1/epsilon = {0} must be a positive integer")]
    NonIntegerCells(f64),
    #[error("fine amplitude nu_b = {nu_b} must satisfy 0 < nu_b < a(x); a({x}) = {alpha}")]
    AmplitudeExceedsProfile { x: f64, alpha: f64, nu_b: f64 },
    #[error("chi-squared degrees of freedom must be at least 1")]
    ZeroDof,
    #[error("kernel must be nonnegative with positive total mass")]
    BadKernel,
    #[error("realization has {got} cells but epsilon = {epsilon} implies {want}")]
    CellCountMismatch {
        got: usize,
        want: usize,
        epsilon: f64,
    },
    #[error("inverse coefficient denominator {denom} <= 0 at s = {s}")]
    NonPositiveCoefficient { s: f64, denom: f64 },
    #[error("realization is missing the convolution window")]
    MissingWindow,
}

/// Smooth random macroscopic profile `a(x)` plus bounded cell noise.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterizedCoarse {
    /// Fourier-sine amplitudes, drawn iid U[-1, 1] by [`sample_coarse`].
    pub xi: [f64; 8],
    /// Geometric decay factor applied to successive modes.
    pub r: f64,
    /// Hard lower bound enforced on the profile.
    pub floor: f64,
    /// Common factor in front of the oscillating sum.
    pub amplitude: f64,
    /// Amplitude of the per-cell uniform noise.
    pub nu_b: f64,
}

impl ParameterizedCoarse {
    pub const DEFAULT_R: f64 = 0.75;
    pub const DEFAULT_FLOOR: f64 = 17.0 / 32.0;
    pub const DEFAULT_AMPLITUDE: f64 = 2.0 / 3.0;
    pub const DEFAULT_NU_B: f64 = 0.5;

    /// Profile with the default decay, floor and noise amplitude.
    pub fn new(xi: [f64; 8]) -> Self {
        Self {
            xi,
            r: Self::DEFAULT_R,
            floor: Self::DEFAULT_FLOOR,
            amplitude: Self::DEFAULT_AMPLITUDE,
            nu_b: Self::DEFAULT_NU_B,
        }
    }

    /// Same defaults but a custom decay factor.
    pub fn with_r(xi: [f64; 8], r: f64) -> Self {
        Self { r, ..Self::new(xi) }
    }

    /// The macroscopic profile
    /// `a(x) = max{ 1 + amplitude * sum_m xi_m r^m sin((2m+1) pi x), floor }`.
    pub fn coarse_field(&self, x: f64) -> f64 {
        let mut sum = 0.0;
        let mut rm = 1.0;
        for (m, &xi_m) in self.xi.iter().enumerate() {
            sum += xi_m * rm * ((2 * m + 1) as f64 * std::f64::consts::PI * x).sin();
            rm *= self.r;
        }
        (1.0 + self.amplitude * sum).max(self.floor)
    }
}

/// Chi-squared cell noise smoothed by a short nonnegative kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvolvedCoarse {
    /// Degrees of freedom of the underlying chi-squared draws.
    pub xi: u64,
    /// Kernel taps `h_0 .. h_{kappa-1}`.
    pub kernel: Vec<f64>,
}

impl ConvolvedCoarse {
    /// Box kernel: `kappa` equal taps summing to `h_l1`.
    pub fn boxcar(xi: u64, kappa: usize, h_l1: f64) -> Result<Self, MediaError> {
        if xi == 0 {
            return Err(MediaError::ZeroDof);
        }
        if kappa == 0 || !(h_l1 > 0.0) {
            return Err(MediaError::BadKernel);
        }
        Ok(Self {
            xi,
            kernel: vec![h_l1 / kappa as f64; kappa],
        })
    }

    /// Arbitrary nonnegative kernel with positive mass.
    pub fn with_kernel(xi: u64, kernel: Vec<f64>) -> Result<Self, MediaError> {
        if xi == 0 {
            return Err(MediaError::ZeroDof);
        }
        let ok = !kernel.is_empty()
            && kernel.iter().all(|&h| h.is_finite() && h >= 0.0)
            && kernel.iter().sum::<f64>() > 0.0;
        if !ok {
            return Err(MediaError::BadKernel);
        }
        Ok(Self { xi, kernel })
    }

    /// Kernel width in cells.
    pub fn kappa(&self) -> usize {
        self.kernel.len()
    }

    /// `||h||_1`.
    pub fn h_l1(&self) -> f64 {
        self.kernel.iter().sum()
    }

    /// `sum_k h_k^2`, the variance contraction factor of the convolution.
    pub fn h_l2_sq(&self) -> f64 {
        self.kernel.iter().map(|h| h * h).sum()
    }
}

/// One of the two coefficient families.
#[derive(Debug, Clone, PartialEq)]
pub enum MediaModel {
    Parameterized(ParameterizedCoarse),
    Convolved(ConvolvedCoarse),
}

/// Family tag plus the non-sampled structural parameters, for
/// [`sample_coarse`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MediaFamily {
    Parameterized { r: f64, nu_b: f64 },
    Convolved { kappa: usize, h_l1: f64 },
}

/// Draw the coarse (macroscopic) randomness of a family.
///
/// Parameterized: the eight profile amplitudes, iid U[-1, 1]. Convolved: the
/// chi-squared degrees of freedom, geometric with success probability 1/5 on
/// {1, 2, ...}.
pub fn sample_coarse(family: MediaFamily, stream: Substream) -> Result<MediaModel, MediaError> {
    let mut rng = stream.rng();
    match family {
        MediaFamily::Parameterized { r, nu_b } => {
            let mut xi = [0.0; 8];
            for x in &mut xi {
                *x = rng.random_range(-1.0..=1.0);
            }
            Ok(MediaModel::Parameterized(ParameterizedCoarse {
                nu_b,
                ..ParameterizedCoarse::with_r(xi, r)
            }))
        }
        MediaFamily::Convolved { kappa, h_l1 } => {
            let xi = geometric_from_uniform(0.2, rng.random::<f64>());
            Ok(MediaModel::Convolved(ConvolvedCoarse::boxcar(
                xi, kappa, h_l1,
            )?))
        }
    }
}

/// Smallest k >= 1 with `1 - (1-p)^k >= u`: geometric sampling by CDF
/// inversion, exposed so tests can force the uniform draw.
pub fn geometric_from_uniform(p: f64, u: f64) -> u64 {
    debug_assert!((0.0..1.0).contains(&u) && (0.0..1.0).contains(&p) && p > 0.0);
    let k = (f64::ln_1p(-u) / f64::ln_1p(-p)).ceil();
    (k as u64).max(1)
}

/// One draw of the fine-scale randomness at a fixed cell width `epsilon`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldRealization {
    pub epsilon: f64,
    /// Per-cell fine input on `[(n-1) eps, n eps)`: `theta_n` for the
    /// parameterized family, `gamma_n = 1/A` on the cell for the convolved
    /// one.
    pub inv_cells: Vec<f64>,
    /// Convolved only: the underlying chi-squared draws over the padded
    /// index window (cell `n` reads `beta_window[n-1 .. n-1+kappa]`), kept
    /// so importance sampling can reweight the raw draws.
    pub beta_window: Option<Vec<f64>>,
}

/// Number of fine cells for a cell width, rejecting non-integer `1/epsilon`.
pub fn cell_count(epsilon: f64) -> Result<usize, MediaError> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(MediaError::NonIntegerCells(1.0 / epsilon));
    }
    let n = (1.0 / epsilon).round();
    if (n * epsilon - 1.0).abs() > 1e-9 || n < 1.0 {
        return Err(MediaError::NonIntegerCells(1.0 / epsilon));
    }
    Ok(n as usize)
}

impl MediaModel {
    /// Draw the per-cell fine-scale randomness.
    ///
    /// Equal `(master_seed, stream_id)` gives bit-identical output on every
    /// run and thread count; each realization should own its stream.
    pub fn sample_fine(
        &self,
        epsilon: f64,
        stream: Substream,
    ) -> Result<FieldRealization, MediaError> {
        let n = cell_count(epsilon)?;
        let mut rng = stream.rng();
        match self {
            MediaModel::Parameterized(_) => {
                let inv_cells = (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect();
                Ok(FieldRealization {
                    epsilon,
                    inv_cells,
                    beta_window: None,
                })
            }
            MediaModel::Convolved(c) => {
                let kappa = c.kappa();
                let chi2 = Gamma::new(c.xi as f64 / 2.0, 2.0).expect("valid shape and scale");
                let beta: Vec<f64> = (0..n + kappa - 1).map(|_| chi2.sample(&mut rng)).collect();
                let inv_cells = convolve_cells(&c.kernel, &beta, n);
                Ok(FieldRealization {
                    epsilon,
                    inv_cells,
                    beta_window: Some(beta),
                })
            }
        }
    }

    /// Pointwise `1/A` for a realization.
    pub fn inv_coeff_at(&self, real: &FieldRealization, s: f64) -> Result<f64, MediaError> {
        let n = cell_count(real.epsilon)?;
        if real.inv_cells.len() != n {
            return Err(MediaError::CellCountMismatch {
                got: real.inv_cells.len(),
                want: n,
                epsilon: real.epsilon,
            });
        }
        let cell = ((s / real.epsilon) as usize).min(n - 1);
        match self {
            MediaModel::Parameterized(p) => {
                let denom = p.coarse_field(s) + p.nu_b * real.inv_cells[cell];
                if denom <= 0.0 {
                    return Err(MediaError::NonPositiveCoefficient { s, denom });
                }
                Ok(1.0 / denom)
            }
            MediaModel::Convolved(_) => {
                let gamma = real.inv_cells[cell];
                if gamma <= 0.0 {
                    return Err(MediaError::NonPositiveCoefficient { s, denom: gamma });
                }
                Ok(gamma)
            }
        }
    }

    /// The homogenized coefficient `A_0(x) = 1 / E[1/A(x, .)]`.
    ///
    /// Parameterized: harmonic mean of `alpha + nu_b * Theta` over uniform
    /// `Theta`, i.e. `[v_alpha_mean]^-1` at `alpha = a(x)`. Convolved:
    /// constant `1/(xi ||h||_1)`.
    pub fn homogenized_coeff(&self, x: f64) -> Result<f64, MediaError> {
        match self {
            MediaModel::Parameterized(p) => {
                let alpha = p.coarse_field(x);
                if alpha <= p.nu_b {
                    return Err(MediaError::AmplitudeExceedsProfile {
                        x,
                        alpha,
                        nu_b: p.nu_b,
                    });
                }
                Ok(1.0 / v_alpha_mean(alpha, p.nu_b))
            }
            MediaModel::Convolved(c) => Ok(1.0 / (c.xi as f64 * c.h_l1())),
        }
    }

    /// Local variance `sigma^2(t)` of the fine-scale fluctuation of `1/A`,
    /// integrated over one renewal length.
    ///
    /// Parameterized: `Var(V_alpha)` at `alpha = a(t)`. Convolved:
    /// `2 xi ||h||_1^2` (note: the squared l1 mass, not `sum h_k^2`; the
    /// cross-cell correlations introduced by the kernel add up to exactly
    /// this).
    pub fn sigma_sq(&self, t: f64) -> f64 {
        match self {
            MediaModel::Parameterized(p) => {
                let alpha = p.coarse_field(t);
                assert!(
                    alpha > p.nu_b,
                    "profile {alpha} at {t} must exceed nu_b = {}",
                    p.nu_b
                );
                v_alpha_var(alpha, p.nu_b)
            }
            MediaModel::Convolved(c) => {
                let l1 = c.h_l1();
                2.0 * c.xi as f64 * l1 * l1
            }
        }
    }
}

/// `gamma_n = sum_k h_k beta_{n-k}` for `n = 1..=cells`, where the window
/// vector is padded so `beta_window[i..i+kappa]` covers cell `i+1` (taps in
/// reverse order).
pub(crate) fn convolve_cells(kernel: &[f64], beta_window: &[f64], cells: usize) -> Vec<f64> {
    let kappa = kernel.len();
    debug_assert!(beta_window.len() >= cells + kappa - 1);
    (0..cells)
        .map(|i| {
            kernel
                .iter()
                .enumerate()
                .map(|(k, &h)| h * beta_window[i + kappa - 1 - k])
                .sum()
        })
        .collect()
}

/// `E[V]` for `V = 1/(alpha + nu_b * Theta)`, `Theta ~ U[-1, 1]`:
/// `(1/(2 nu_b)) log((alpha+nu_b)/(alpha-nu_b))`. Requires `alpha > nu_b`.
pub fn v_alpha_mean(alpha: f64, nu_b: f64) -> f64 {
    ((alpha + nu_b) / (alpha - nu_b)).ln() / (2.0 * nu_b)
}

/// `E[V^2] = 1/(alpha^2 - nu_b^2)`.
pub fn v_alpha_second_moment(alpha: f64, nu_b: f64) -> f64 {
    1.0 / (alpha * alpha - nu_b * nu_b)
}

/// `Var(V)`.
pub fn v_alpha_var(alpha: f64, nu_b: f64) -> f64 {
    let m = v_alpha_mean(alpha, nu_b);
    v_alpha_second_moment(alpha, nu_b) - m * m
}
