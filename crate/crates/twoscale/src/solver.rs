//! Exact solution of the boundary value problem and its expansion.
//!
//! Integrating `-(A u')' = f` twice on (0, 1) with zero boundary values
//! gives the closed form
//!
//! ```text
//!     u(x) = -int_0^x F/A + ( <F/A> / <1/A> ) int_0^x 1/A,     F(s) = int_0^s f,
//! ```
//!
//! with `<.>` the integral over (0, 1). Only four weighted integrals of
//! `1/A` ever enter, collected in [`ZVector`], and the solution value is the
//! rational function [`ZVector::value`] of those four numbers. All solvers
//! here are organized around evaluating the z integrals:
//!
//! * [`FineSolver`] precomputes a quadrature mesh (fine cells split at the
//!   forcing kinks and the evaluation points) once, then maps any
//!   realization of the random medium to z integrals cheaply. Convolved
//!   media get exact per-segment integrals, parameterized media a fixed
//!   Gauss rule per segment.
//! * [`Homogenized`] evaluates the same formula with the deterministic
//!   limiting coefficient, and owns the kernel `G(x, s)` that propagates
//!   fine-scale fluctuations of `1/A` into the solution.
//! * [`expansion_terms`] splits `u_eps - u_0` into the fluctuation term `v`
//!   (linear in `1/A_eps - 1/A_0`) and the quadratically small remainder,
//!   exactly: the three pieces reassemble to `u_eps` up to quadrature error.

use thiserror::Error;

use crate::media::{cell_count, FieldRealization, MediaError, MediaModel};
use crate::quad::{adaptive_simpson_with_cuts, GaussLegendre, QuadError};
use crate::source::SourceSpec;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("evaluation point x = {0} must lie strictly inside (0, 1)")]
    XOutOfRange(f64),
    #[error("grid must be non-empty, strictly increasing and inside [0, 1]")]
    BadGrid,
    #[error("realization rejected: {0}")]
    BadRealization(&'static str),
    #[error("z vector violates 0 < z3 < z4 (z3 = {z3}, z4 = {z4})")]
    DegenerateZ { z3: f64, z4: f64 },
    #[error(transparent)]
    Media(#[from] MediaError),
    #[error(transparent)]
    Quad(#[from] QuadError),
}

/// The four weighted integrals of `1/A` determining a pointwise solve:
/// `z1 = int_0^x F/A`, `z2 = <F/A>`, `z3 = int_0^x 1/A`, `z4 = <1/A>`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZVector {
    pub z1: f64,
    pub z2: f64,
    pub z3: f64,
    pub z4: f64,
}

impl ZVector {
    pub fn new(z1: f64, z2: f64, z3: f64, z4: f64) -> Result<Self, SolverError> {
        if !(z3 > 0.0 && z3 < z4) {
            return Err(SolverError::DegenerateZ { z3, z4 });
        }
        Ok(Self { z1, z2, z3, z4 })
    }

    /// The solution functional `-z1 + z2 z3 / z4`.
    pub fn value(&self) -> f64 {
        -self.z1 + self.z2 * self.z3 / self.z4
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.z1, self.z2, self.z3, self.z4]
    }
}

/// Solution values on a grid, optionally with the expansion split out.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionPath {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub components: Option<PathComponents>,
}

/// Per-point homogenized value, fluctuation term and remainder.
#[derive(Debug, Clone, PartialEq)]
pub struct PathComponents {
    pub u0: Vec<f64>,
    pub v: Vec<f64>,
    pub r: Vec<f64>,
}

/// Running and total integrals of `F/A` and `1/A` for one realization:
/// `p[k] = int_0^{x_k} F/A`, `q[k] = int_0^{x_k} 1/A`, and the totals over
/// (0, 1).
#[derive(Debug, Clone)]
pub struct PathIntegrals {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub p1: f64,
    pub q1: f64,
}

impl PathIntegrals {
    /// z vector for evaluation point `k`.
    pub fn z_at(&self, k: usize) -> Result<ZVector, SolverError> {
        ZVector::new(self.p[k], self.p1, self.q[k], self.q1)
    }

    /// Solution value at evaluation point `k`.
    pub fn value_at(&self, k: usize) -> f64 {
        -self.p[k] + self.p1 * self.q[k] / self.q1
    }
}

/// Smallest mesh segment: lives inside one fine cell, ends possibly at an
/// evaluation point.
#[derive(Debug, Clone, Copy)]
struct Segment {
    cell: u32,
    /// Index into `targets` if the segment's right edge is an evaluation
    /// point.
    end_target: Option<u32>,
}

#[derive(Debug, Clone)]
enum SegmentData {
    /// Per segment and Gauss node: quadrature weight, `F(s)` and the coarse
    /// profile value `a(s)`; `1/A` at the node is `1/(a(s) + nu_b theta)`.
    Parameterized {
        nu_b: f64,
        degree: usize,
        node_w: Vec<f64>,
        node_f: Vec<f64>,
        node_alpha: Vec<f64>,
    },
    /// Per segment: length and `int F` over the segment; `1/A` is the cell
    /// constant `gamma`.
    Convolved { len: Vec<f64>, int_f: Vec<f64> },
}

/// Precomputed quadrature plan mapping realizations to solution values at a
/// fixed set of evaluation points.
///
/// Building the plan costs a mesh walk plus coarse-profile evaluations;
/// evaluating a realization afterwards is a single fused sweep, which is
/// what makes million-sample Monte Carlo runs affordable.
#[derive(Debug, Clone)]
pub struct FineSolver {
    epsilon: f64,
    n_cells: usize,
    targets: Vec<f64>,
    segments: Vec<Segment>,
    data: SegmentData,
}

pub const DEFAULT_GAUSS_DEGREE: usize = 8;

impl FineSolver {
    /// Plan for evaluation at every point of a strictly increasing `grid`
    /// inside [0, 1].
    pub fn new(
        model: &MediaModel,
        f: &SourceSpec,
        grid: &[f64],
        epsilon: f64,
    ) -> Result<Self, SolverError> {
        Self::with_degree(model, f, grid, epsilon, DEFAULT_GAUSS_DEGREE)
    }

    /// Plan for a single evaluation point in (0, 1).
    pub fn point(
        model: &MediaModel,
        f: &SourceSpec,
        x: f64,
        epsilon: f64,
    ) -> Result<Self, SolverError> {
        if !(x > 0.0 && x < 1.0) {
            return Err(SolverError::XOutOfRange(x));
        }
        Self::new(model, f, &[x], epsilon)
    }

    pub fn with_degree(
        model: &MediaModel,
        f: &SourceSpec,
        grid: &[f64],
        epsilon: f64,
        degree: usize,
    ) -> Result<Self, SolverError> {
        if grid.is_empty()
            || grid.windows(2).any(|w| w[0] >= w[1])
            || grid.iter().any(|&x| !(0.0..=1.0).contains(&x))
        {
            return Err(SolverError::BadGrid);
        }
        let n_cells = cell_count(epsilon)?;
        if let MediaModel::Parameterized(p) = model {
            if p.floor <= p.nu_b {
                return Err(MediaError::AmplitudeExceedsProfile {
                    x: f64::NAN,
                    alpha: p.floor,
                    nu_b: p.nu_b,
                }
                .into());
            }
        }

        // mesh edges: cell boundaries, forcing kinks, evaluation points
        let mut edges: Vec<f64> = (0..=n_cells).map(|i| i as f64 * epsilon).collect();
        edges.extend(f.breakpoints().iter().copied());
        edges.extend(grid.iter().copied());
        edges.sort_by(|a, b| a.partial_cmp(b).unwrap());
        edges.dedup_by(|a, b| (*a - *b).abs() < 1e-14);

        let targets = grid.to_vec();
        let mut segments = Vec::with_capacity(edges.len());
        for w in edges.windows(2) {
            let mid = 0.5 * (w[0] + w[1]);
            let cell = ((mid / epsilon) as usize).min(n_cells - 1) as u32;
            let end_target = targets
                .iter()
                .position(|&t| (t - w[1]).abs() < 1e-14)
                .map(|i| i as u32);
            segments.push(Segment { cell, end_target });
        }

        let data = match model {
            MediaModel::Parameterized(p) => {
                let rule = GaussLegendre::new(degree)?;
                let n_nodes = segments.len() * degree;
                let mut node_w = Vec::with_capacity(n_nodes);
                let mut node_f = Vec::with_capacity(n_nodes);
                let mut node_alpha = Vec::with_capacity(n_nodes);
                for w in edges.windows(2) {
                    for (s, wt) in rule.mapped(w[0], w[1]) {
                        node_w.push(wt);
                        node_f.push(f.integral(s));
                        node_alpha.push(p.coarse_field(s));
                    }
                }
                SegmentData::Parameterized {
                    nu_b: p.nu_b,
                    degree,
                    node_w,
                    node_f,
                    node_alpha,
                }
            }
            MediaModel::Convolved(_) => {
                let mut len = Vec::with_capacity(segments.len());
                let mut int_f = Vec::with_capacity(segments.len());
                for w in edges.windows(2) {
                    len.push(w[1] - w[0]);
                    int_f.push(f.integral_of_integral(w[0], w[1]));
                }
                SegmentData::Convolved { len, int_f }
            }
        };

        Ok(Self {
            epsilon,
            n_cells,
            targets,
            segments,
            data,
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    fn check_realization(&self, real: &FieldRealization) -> Result<(), SolverError> {
        if (real.epsilon - self.epsilon).abs() > 1e-12 {
            return Err(SolverError::BadRealization("epsilon mismatch"));
        }
        if real.inv_cells.len() != self.n_cells {
            return Err(SolverError::BadRealization("cell count mismatch"));
        }
        match &self.data {
            SegmentData::Parameterized { .. } => {
                if real.inv_cells.iter().any(|t| !(-1.0..=1.0).contains(t)) {
                    return Err(SolverError::BadRealization("theta outside [-1, 1]"));
                }
            }
            SegmentData::Convolved { .. } => {
                if real.inv_cells.iter().any(|&g| !(g > 0.0)) {
                    return Err(SolverError::BadRealization("non-positive cell value"));
                }
            }
        }
        Ok(())
    }

    /// Running integrals of `F/A` and `1/A` at every evaluation point.
    pub fn integrals(&self, real: &FieldRealization) -> Result<PathIntegrals, SolverError> {
        self.check_realization(real)?;
        let k = self.targets.len();
        let mut p = vec![0.0; k];
        let mut q = vec![0.0; k];
        let mut p_acc = 0.0;
        let mut q_acc = 0.0;
        // zero-length prefix for a target at 0 is handled by the sweep
        // never writing before it; targets[i] = 0 keeps p = q = 0
        match &self.data {
            SegmentData::Parameterized {
                nu_b,
                degree,
                node_w,
                node_f,
                node_alpha,
            } => {
                for (si, seg) in self.segments.iter().enumerate() {
                    let shift = nu_b * real.inv_cells[seg.cell as usize];
                    let base = si * degree;
                    let mut dq = 0.0;
                    let mut dp = 0.0;
                    for j in base..base + degree {
                        let inv = node_w[j] / (node_alpha[j] + shift);
                        dq += inv;
                        dp += node_f[j] * inv;
                    }
                    p_acc += dp;
                    q_acc += dq;
                    if let Some(t) = seg.end_target {
                        p[t as usize] = p_acc;
                        q[t as usize] = q_acc;
                    }
                }
            }
            SegmentData::Convolved { len, int_f } => {
                for (si, seg) in self.segments.iter().enumerate() {
                    let gamma = real.inv_cells[seg.cell as usize];
                    p_acc += gamma * int_f[si];
                    q_acc += gamma * len[si];
                    if let Some(t) = seg.end_target {
                        p[t as usize] = p_acc;
                        q[t as usize] = q_acc;
                    }
                }
            }
        }
        Ok(PathIntegrals {
            p,
            q,
            p1: p_acc,
            q1: q_acc,
        })
    }

    /// Solution value at the single evaluation point of a [`FineSolver::point`]
    /// plan.
    pub fn value(&self, real: &FieldRealization) -> Result<f64, SolverError> {
        let ints = self.integrals(real)?;
        Ok(ints.value_at(self.targets.len() - 1))
    }
}

/// The z integral vector at `x` for one realization.
pub fn z_vector(
    model: &MediaModel,
    real: &FieldRealization,
    f: &SourceSpec,
    x: f64,
) -> Result<ZVector, SolverError> {
    let solver = FineSolver::point(model, f, x, real.epsilon)?;
    solver.integrals(real)?.z_at(0)
}

/// Pointwise solve: `u_eps(x)` for one realization.
pub fn solve_point(
    model: &MediaModel,
    real: &FieldRealization,
    f: &SourceSpec,
    x: f64,
) -> Result<f64, SolverError> {
    Ok(z_vector(model, real, f, x)?.value())
}

/// Solution values on a grid for one realization.
pub fn solve_path(
    model: &MediaModel,
    real: &FieldRealization,
    f: &SourceSpec,
    grid: &[f64],
) -> Result<SolutionPath, SolverError> {
    let solver = FineSolver::new(model, f, grid, real.epsilon)?;
    let ints = solver.integrals(real)?;
    let values = (0..grid.len()).map(|k| ints.value_at(k)).collect();
    Ok(SolutionPath {
        grid: grid.to_vec(),
        values,
        components: None,
    })
}

/// Deterministic limiting problem: the same integral formula with the
/// homogenized coefficient, plus the fluctuation kernel built on it.
#[derive(Debug, Clone)]
pub struct Homogenized {
    f: SourceSpec,
    /// Constant `A_0` when the family has one (convolved), else per-point.
    const_coeff: Option<f64>,
    model: MediaModel,
    /// `<F/A_0>`.
    m: f64,
    /// `<1/A_0>`.
    n: f64,
}

/// Absolute tolerance for the adaptive quadratures against `1/A_0`.
const A0_QUAD_TOL: f64 = 1e-10;

impl Homogenized {
    pub fn new(model: &MediaModel, f: &SourceSpec) -> Result<Self, SolverError> {
        let const_coeff = match model {
            MediaModel::Convolved(_) => Some(model.homogenized_coeff(0.0)?),
            MediaModel::Parameterized(p) => {
                if p.floor <= p.nu_b {
                    return Err(MediaError::AmplitudeExceedsProfile {
                        x: f64::NAN,
                        alpha: p.floor,
                        nu_b: p.nu_b,
                    }
                    .into());
                }
                None
            }
        };
        let mut hom = Self {
            f: f.clone(),
            const_coeff,
            model: model.clone(),
            m: 0.0,
            n: 0.0,
        };
        hom.n = hom.inv_integral(1.0)?;
        hom.m = hom.f_over_integral(1.0)?;
        Ok(hom)
    }

    /// `A_0(s)`.
    pub fn coeff(&self, s: f64) -> f64 {
        match self.const_coeff {
            Some(c) => c,
            // construction validated the profile, so this cannot fail
            None => self.model.homogenized_coeff(s).expect("validated model"),
        }
    }

    /// `int_0^x 1/A_0`.
    pub fn inv_integral(&self, x: f64) -> Result<f64, SolverError> {
        match self.const_coeff {
            Some(c) => Ok(x / c),
            None => Ok(adaptive_simpson_with_cuts(
                |s| 1.0 / self.coeff(s),
                0.0,
                x,
                &[],
                A0_QUAD_TOL,
            )?),
        }
    }

    /// `int_0^x F/A_0`.
    pub fn f_over_integral(&self, x: f64) -> Result<f64, SolverError> {
        match self.const_coeff {
            Some(c) => Ok(self.f.double_integral(x) / c),
            None => Ok(adaptive_simpson_with_cuts(
                |s| self.f.integral(s) / self.coeff(s),
                0.0,
                x,
                self.f.breakpoints(),
                A0_QUAD_TOL,
            )?),
        }
    }

    /// `<F/A_0>`.
    pub fn mean_forced(&self) -> f64 {
        self.m
    }

    /// `<1/A_0>`.
    pub fn mean_inv(&self) -> f64 {
        self.n
    }

    pub fn source(&self) -> &SourceSpec {
        &self.f
    }

    pub fn model(&self) -> &MediaModel {
        &self.model
    }

    /// `u_0(x)`.
    pub fn solve(&self, x: f64) -> Result<f64, SolverError> {
        Ok(-self.f_over_integral(x)? + self.m / self.n * self.inv_integral(x)?)
    }

    /// Mean z vector `(int H_i / A_0)`: plugging it into the solution
    /// functional reproduces `u_0(x)`.
    pub fn z_star(&self, x: f64) -> Result<ZVector, SolverError> {
        if !(x > 0.0 && x < 1.0) {
            return Err(SolverError::XOutOfRange(x));
        }
        ZVector::new(
            self.f_over_integral(x)?,
            self.m,
            self.inv_integral(x)?,
            self.n,
        )
    }

    /// The kernel `G(x, .)` propagating fluctuations of `1/A` at frozen `x`.
    pub fn kernel(&self, x: f64) -> Result<FluctuationKernel, SolverError> {
        if !(x > 0.0 && x < 1.0) {
            return Err(SolverError::XOutOfRange(x));
        }
        Ok(FluctuationKernel {
            x,
            ratio: self.inv_integral(x)? / self.n,
            m_over_n: self.m / self.n,
            f: self.f.clone(),
        })
    }
}

/// `G(x, s)`: the first-order response of `u(x)` to a perturbation of
/// `1/A` at `s`. Piecewise linear in `s` with a jump at `s = x`.
#[derive(Debug, Clone)]
pub struct FluctuationKernel {
    x: f64,
    /// `(1/<1/A_0>) int_0^x 1/A_0`.
    ratio: f64,
    m_over_n: f64,
    f: SourceSpec,
}

impl FluctuationKernel {
    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn eval(&self, s: f64) -> f64 {
        let base = self.f.integral(s) - self.m_over_n;
        if s <= self.x {
            base * (self.ratio - 1.0)
        } else {
            base * self.ratio
        }
    }

    /// Exact range of the kernel over `s in [0, 1]`.
    ///
    /// `G` is piecewise linear with kinks only at the forcing breakpoints
    /// and the jump at `x`, so the extrema sit on a finite candidate set.
    pub fn range(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut look = |v: f64| {
            lo = lo.min(v);
            hi = hi.max(v);
        };
        look(self.eval(0.0));
        look(self.eval(1.0));
        for &b in self.f.breakpoints() {
            look(self.eval(b));
        }
        // both one-sided limits at the jump
        look(self.eval(self.x));
        let after = (self.f.integral(self.x) - self.m_over_n) * self.ratio;
        look(after);
        (lo, hi)
    }
}

/// Point evaluation of the fluctuation kernel.
pub fn green_kernel(
    model: &MediaModel,
    f: &SourceSpec,
    x: f64,
    s: f64,
) -> Result<f64, SolverError> {
    Ok(Homogenized::new(model, f)?.kernel(x)?.eval(s))
}

/// Homogenized solution on a grid.
pub fn solve_homogenized(
    model: &MediaModel,
    f: &SourceSpec,
    grid: &[f64],
) -> Result<SolutionPath, SolverError> {
    if grid.is_empty() || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(SolverError::BadGrid);
    }
    let hom = Homogenized::new(model, f)?;
    let values = grid
        .iter()
        .map(|&x| hom.solve(x))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SolutionPath {
        grid: grid.to_vec(),
        values,
        components: None,
    })
}

/// Fluctuation term and remainder of the expansion
/// `u_eps = u_0 + v + R` at `x`.
///
/// `v` collects the terms linear in the integral fluctuations
/// `X_x = int_0^x (1/A_eps - 1/A_0)` and `Y_x = int_0^x (F/A_eps - F/A_0)`;
/// everything of higher order lands in `R`. The split is algebraically
/// exact, so the three pieces reassemble `u_eps` to quadrature accuracy.
pub fn expansion_terms(
    model: &MediaModel,
    real: &FieldRealization,
    f: &SourceSpec,
    x: f64,
) -> Result<(f64, f64), SolverError> {
    let hom = Homogenized::new(model, f)?;
    expansion_terms_with(&hom, model, real, x)
}

/// Same as [`expansion_terms`] with a prebuilt homogenized solver.
pub fn expansion_terms_with(
    hom: &Homogenized,
    model: &MediaModel,
    real: &FieldRealization,
    x: f64,
) -> Result<(f64, f64), SolverError> {
    let solver = FineSolver::point(model, hom.source(), x, real.epsilon)?;
    let ints = solver.integrals(real)?;
    let (p, q) = (ints.p[0], ints.q[0]);
    let (p1, q1) = (ints.p1, ints.q1);
    let p0 = hom.f_over_integral(x)?;
    let q0 = hom.inv_integral(x)?;
    let (m, n) = (hom.mean_forced(), hom.mean_inv());

    let x_x = q - q0;
    let y_x = p - p0;
    let x_1 = q1 - n;
    let y_1 = p1 - m;

    let v = -y_x + (y_1 - x_1 * m / n) * (q0 / n) + x_x * m / n;
    let r = x_1 * x_1 * p1 * q / (n * n * q1) - x_1 / (n * n) * (y_1 * q0 + p1 * x_x)
        + y_1 * x_x / n;
    Ok((v, r))
}

/// Fine solve on a grid together with the expansion components.
pub fn solve_path_with_expansion(
    model: &MediaModel,
    real: &FieldRealization,
    f: &SourceSpec,
    grid: &[f64],
) -> Result<SolutionPath, SolverError> {
    let solver = FineSolver::new(model, f, grid, real.epsilon)?;
    let ints = solver.integrals(real)?;
    let hom = Homogenized::new(model, f)?;
    let (m, n) = (hom.mean_forced(), hom.mean_inv());
    let (p1, q1) = (ints.p1, ints.q1);
    let x_1 = q1 - n;
    let y_1 = p1 - m;

    let mut values = Vec::with_capacity(grid.len());
    let mut u0 = Vec::with_capacity(grid.len());
    let mut v = Vec::with_capacity(grid.len());
    let mut r = Vec::with_capacity(grid.len());
    for (k, &x) in grid.iter().enumerate() {
        let p0 = hom.f_over_integral(x)?;
        let q0 = hom.inv_integral(x)?;
        let u0_x = -p0 + m / n * q0;
        let x_x = ints.q[k] - q0;
        let y_x = ints.p[k] - p0;
        let v_x = -y_x + (y_1 - x_1 * m / n) * (q0 / n) + x_x * m / n;
        let r_x = x_1 * x_1 * p1 * ints.q[k] / (n * n * q1)
            - x_1 / (n * n) * (y_1 * q0 + p1 * x_x)
            + y_1 * x_x / n;
        values.push(ints.value_at(k));
        u0.push(u0_x);
        v.push(v_x);
        r.push(r_x);
    }
    Ok(SolutionPath {
        grid: grid.to_vec(),
        values,
        components: Some(PathComponents { u0, v, r }),
    })
}

/// Uniform upper bound on the local fluctuation variance of `1/A`,
/// `sup_t sigma^2(t)`: the constant entering the mean-square error bound
/// for `u_eps - u_0`.
pub fn max_sigma_sq(model: &MediaModel) -> f64 {
    match model {
        MediaModel::Convolved(_) => model.sigma_sq(0.0),
        MediaModel::Parameterized(_) => (0..=2000)
            .map(|i| model.sigma_sq(i as f64 / 2000.0))
            .fold(f64::NEG_INFINITY, f64::max),
    }
}
