//! Quadrature and scalar optimization kernels shared across the crate.
//!
//! Everything we integrate is piecewise analytic once split at a handful of
//! known breakpoints (forcing-term kinks, the observation point, cell
//! boundaries), so the workhorses are a fixed Gauss-Legendre rule applied
//! panel by panel and an adaptive Simpson rule for the few places where a
//! prescribed absolute tolerance is part of the contract.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum QuadError {
    #[error("quadrature degree must be at least 1, got {0}")]
    BadDegree(usize),
    #[error("invalid interval [{a}, {b}]")]
    BadInterval { a: f64, b: f64 },
    #[error("adaptive refinement hit depth {depth} on [{a}, {b}] without meeting the tolerance")]
    MaxDepth { a: f64, b: f64, depth: usize },
}

/// Gauss-Legendre rule of a fixed degree on [-1, 1].
///
/// Nodes are the roots of the Legendre polynomial `P_n`, found by Newton
/// iteration from the Chebyshev-like initial guess; weights follow from the
/// derivative. Accurate to machine precision for the degrees used here (no
/// eigenvalue machinery required).
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(degree: usize) -> Result<Self, QuadError> {
        if degree == 0 {
            return Err(QuadError::BadDegree(degree));
        }
        let n = degree;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n {
            // root i (from the right) of P_n, seeded by the Chebyshev angle
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            for _ in 0..100 {
                let (p, dp) = legendre_and_derivative(n, x);
                let dx = p / dp;
                x -= dx;
                if dx.abs() < 1e-15 {
                    break;
                }
            }
            let (_, dp) = legendre_and_derivative(n, x);
            nodes[i] = x;
            weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
        }
        nodes.reverse();
        weights.reverse();
        Ok(Self { nodes, weights })
    }

    pub fn degree(&self) -> usize {
        self.nodes.len()
    }

    /// Nodes on [-1, 1] in ascending order.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Integrate `f` over [a, b] with the rule mapped onto that interval.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut acc = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(mid + half * x);
        }
        acc * half
    }

    /// The rule's nodes and weights mapped onto [a, b].
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(x, w)| (mid + half * x, w * half))
    }
}

/// Evaluate `P_n(x)` and its derivative via the three-term recurrence.
fn legendre_and_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p_prev = 1.0;
    let mut p = x;
    if n == 1 {
        return (x, 1.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p_next = ((2.0 * kf - 1.0) * x * p - (kf - 1.0) * p_prev) / kf;
        p_prev = p;
        p = p_next;
    }
    let dp = n as f64 * (x * p - p_prev) / (x * x - 1.0);
    (p, dp)
}

/// Adaptive Simpson integration to absolute tolerance `tol`.
pub fn adaptive_simpson<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    tol: f64,
) -> Result<f64, QuadError> {
    if !(a.is_finite() && b.is_finite()) || a > b {
        return Err(QuadError::BadInterval { a, b });
    }
    if a == b {
        return Ok(0.0);
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = simpson(a, b, fa, fm, fb);
    adaptive_step(&mut f, a, b, fa, fm, fb, whole, tol, 60)
}

/// Adaptive Simpson with the interval pre-split at the given sorted cut
/// points, with tolerance shared proportionally to segment length.
pub fn adaptive_simpson_with_cuts<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    cuts: &[f64],
    tol: f64,
) -> Result<f64, QuadError> {
    let mut edges = vec![a];
    for &c in cuts {
        if c > a + 1e-14 && c < b - 1e-14 {
            edges.push(c);
        }
    }
    edges.push(b);
    edges.sort_by(|p, q| p.partial_cmp(q).unwrap());
    edges.dedup_by(|p, q| (*p - *q).abs() < 1e-14);
    let len = b - a;
    let mut total = 0.0;
    for w in edges.windows(2) {
        let seg_tol = tol * ((w[1] - w[0]) / len).max(1e-3);
        total += adaptive_simpson(&mut f, w[0], w[1], seg_tol)?;
    }
    Ok(total)
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn adaptive_step<F: FnMut(f64) -> f64>(
    f: &mut F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: usize,
) -> Result<f64, QuadError> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    // classic Richardson acceptance test; 15 = 2^4 - 1 for Simpson's order
    if delta.abs() <= 15.0 * tol || (b - a) < 1e-15 {
        return Ok(left + right + delta / 15.0);
    }
    if depth == 0 {
        return Err(QuadError::MaxDepth { a, b, depth: 60 });
    }
    let half_tol = 0.5 * tol;
    Ok(adaptive_step(f, a, m, fa, flm, fm, left, half_tol, depth - 1)?
        + adaptive_step(f, m, b, fm, frm, fb, right, half_tol, depth - 1)?)
}

/// Golden-section search for the maximum of a unimodal `f` on [lo, hi].
///
/// Shrinks the bracket below `xtol` and returns `(argmax, max)`. Values of
/// `-inf` are tolerated (they simply lose every comparison), which is how
/// callers feed in concave objectives that jump to `-inf` outside a domain.
pub fn golden_section_max<F: FnMut(f64) -> f64>(
    mut f: F,
    lo: f64,
    hi: f64,
    xtol: f64,
) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > xtol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let xm = 0.5 * (a + b);
    let fm = f(xm);
    if fm >= fc && fm >= fd {
        (xm, fm)
    } else if fc >= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Cover [0, 1] with about `n` panels whose edges include every cut point.
///
/// Cuts split [0, 1] into segments; each segment gets a panel budget
/// proportional to its length (at least one), subdivided uniformly. Used to
/// build fixed quadrature meshes aligned with integrand kinks.
pub fn panels_with_cuts(n: usize, cuts: &[f64]) -> Vec<(f64, f64)> {
    let mut edges = vec![0.0];
    for &c in cuts {
        if c > 1e-14 && c < 1.0 - 1e-14 {
            edges.push(c);
        }
    }
    edges.push(1.0);
    edges.sort_by(|p, q| p.partial_cmp(q).unwrap());
    edges.dedup_by(|p, q| (*p - *q).abs() < 1e-14);
    let mut panels = Vec::with_capacity(n + edges.len());
    for w in edges.windows(2) {
        let len = w[1] - w[0];
        let k = ((len * n as f64).round() as usize).max(1);
        let h = len / k as f64;
        for j in 0..k {
            let a = w[0] + j as f64 * h;
            let b = if j + 1 == k { w[1] } else { w[0] + (j + 1) as f64 * h };
            panels.push((a, b));
        }
    }
    panels
}
