//! Piecewise constant forcing terms and their exact antiderivatives.
//!
//! The right-hand side `f` enters every formula in this crate only through
//! its running integral `F(s) = int_0^s f` and through `int_0^s F`. For a
//! piecewise constant `f` both are available in closed form (piecewise
//! linear and piecewise quadratic), so quadrature against `F` can always be
//! split at the kink locations and done exactly.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SourceError {
    #[error("source pieces must be non-empty")]
    Empty,
    #[error("piece {index} has an empty or inverted interval [{a}, {b}]")]
    BadInterval { index: usize, a: f64, b: f64 },
    #[error("pieces must partition [0, 1]: gap or overlap near {at}")]
    NotAPartition { at: f64 },
    #[error("piece {index} has a non-finite value")]
    NonFinite { index: usize },
}

/// A forcing term given as a piecewise constant function on [0, 1].
///
/// Stored with precomputed values of `F = int_0^s f` and `int_0^s F` at the
/// piece boundaries so point evaluation is a binary search plus a linear or
/// quadratic correction.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceSpec {
    /// Piece edges, `bounds[0] = 0`, `bounds[k] = 1`, strictly increasing.
    bounds: Vec<f64>,
    /// Value on `[bounds[i], bounds[i+1])`.
    values: Vec<f64>,
    /// `F(bounds[i])`.
    cum_f: Vec<f64>,
    /// `int_0^{bounds[i]} F`.
    cum_ff: Vec<f64>,
}

impl SourceSpec {
    /// Build from `(a, b, value)` triples that partition [0, 1].
    pub fn new(pieces: &[(f64, f64, f64)]) -> Result<Self, SourceError> {
        if pieces.is_empty() {
            return Err(SourceError::Empty);
        }
        let mut sorted: Vec<_> = pieces.to_vec();
        sorted.sort_by(|p, q| p.0.partial_cmp(&q.0).unwrap());
        const EDGE_TOL: f64 = 1e-12;
        if sorted[0].0.abs() > EDGE_TOL {
            return Err(SourceError::NotAPartition { at: 0.0 });
        }
        if (sorted.last().unwrap().1 - 1.0).abs() > EDGE_TOL {
            return Err(SourceError::NotAPartition { at: 1.0 });
        }
        let mut bounds = Vec::with_capacity(sorted.len() + 1);
        let mut values = Vec::with_capacity(sorted.len());
        bounds.push(0.0);
        for (index, &(a, b, v)) in sorted.iter().enumerate() {
            if !(a.is_finite() && b.is_finite()) || b <= a {
                return Err(SourceError::BadInterval { index, a, b });
            }
            if !v.is_finite() {
                return Err(SourceError::NonFinite { index });
            }
            if (a - bounds.last().unwrap()).abs() > EDGE_TOL {
                return Err(SourceError::NotAPartition { at: a });
            }
            bounds.push(if index + 1 == sorted.len() { 1.0 } else { b });
            values.push(v);
        }
        let mut cum_f = vec![0.0; bounds.len()];
        let mut cum_ff = vec![0.0; bounds.len()];
        for i in 0..values.len() {
            let h = bounds[i + 1] - bounds[i];
            cum_f[i + 1] = cum_f[i] + values[i] * h;
            // int of F over the piece: F is linear with slope values[i]
            cum_ff[i + 1] = cum_ff[i] + cum_f[i] * h + 0.5 * values[i] * h * h;
        }
        Ok(Self {
            bounds,
            values,
            cum_f,
            cum_ff,
        })
    }

    /// The default forcing used throughout: a unit bump on (0.45, 0.55).
    pub fn unit_bump() -> Self {
        Self::new(&[(0.0, 0.45, 0.0), (0.45, 0.55, 1.0), (0.55, 1.0, 0.0)])
            .expect("static pieces form a partition")
    }

    /// Index of the piece containing `s` (clamped to [0, 1]).
    fn piece(&self, s: f64) -> usize {
        // partition_point returns the count of bounds <= s; piece index is one less
        let i = self.bounds.partition_point(|&b| b <= s);
        i.saturating_sub(1).min(self.values.len() - 1)
    }

    /// `f(s)`.
    pub fn value(&self, s: f64) -> f64 {
        self.values[self.piece(s)]
    }

    /// `F(s) = int_0^s f`, exact.
    pub fn integral(&self, s: f64) -> f64 {
        let s = s.clamp(0.0, 1.0);
        let i = self.piece(s);
        self.cum_f[i] + self.values[i] * (s - self.bounds[i])
    }

    /// `int_0^s F`, exact.
    pub fn double_integral(&self, s: f64) -> f64 {
        let s = s.clamp(0.0, 1.0);
        let i = self.piece(s);
        let d = s - self.bounds[i];
        self.cum_ff[i] + self.cum_f[i] * d + 0.5 * self.values[i] * d * d
    }

    /// `int_a^b F`, exact.
    pub fn integral_of_integral(&self, a: f64, b: f64) -> f64 {
        self.double_integral(b) - self.double_integral(a)
    }

    /// L2 norm of `f` on [0, 1].
    pub fn l2_norm(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.values.len() {
            s += self.values[i] * self.values[i] * (self.bounds[i + 1] - self.bounds[i]);
        }
        s.sqrt()
    }

    /// Interior piece edges, where `f` may jump and `F` has kinks.
    pub fn breakpoints(&self) -> &[f64] {
        &self.bounds[1..self.bounds.len() - 1]
    }

    /// Scale the forcing by a constant (used by linearity checks).
    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        for v in &mut out.values {
            *v *= c;
        }
        for v in &mut out.cum_f {
            *v *= c;
        }
        for v in &mut out.cum_ff {
            *v *= c;
        }
        out
    }
}
