//! Univariate B-splines on uniform, uniformly extended knot grids.
//!
//! A knot vector for `grid_size` intervals over `[lo, hi]` carries `order_k`
//! extra knots on each side, so there are `grid_size + 2 * order_k + 1` knots
//! and `grid_size + order_k` basis functions. `order_k` is the polynomial
//! degree (cubic splines use `order_k = 3`).
//!
//! Evaluation is local: at any point at most `order_k + 1` basis functions are
//! nonzero, and only those are computed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported spline degree.
pub const MAX_ORDER: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnotVector {
    knots: Vec<f64>,
    order_k: usize,
    grid_size: usize,
    domain_lo: f64,
    domain_hi: f64,
}

/// The nonzero basis values (and first derivatives) at one point.
///
/// `vals[r]` is the value of basis function `first + r`. Entries whose global
/// index falls outside `0..n_basis` are zero.
#[derive(Debug, Clone, Copy)]
pub struct LocalBasis {
    pub first: isize,
    pub len: usize,
    pub vals: [f64; MAX_ORDER + 1],
    pub ders: [f64; MAX_ORDER + 1],
}

impl LocalBasis {
    /// Iterates `(global_index, value, derivative)` over valid basis indices.
    pub fn iter(&self, n_basis: usize) -> impl Iterator<Item = (usize, f64, f64)> + '_ {
        (0..self.len).filter_map(move |r| {
            let m = self.first + r as isize;
            if m >= 0 && (m as usize) < n_basis {
                Some((m as usize, self.vals[r], self.ders[r]))
            } else {
                None
            }
        })
    }
}

impl KnotVector {
    /// Uniform knots over `[domain_lo, domain_hi]` with `order_k` uniformly
    /// spaced extension knots on each side.
    pub fn uniform(grid_size: usize, order_k: usize, domain_lo: f64, domain_hi: f64) -> Result<Self> {
        if order_k < 1 {
            return Err(Error::InvalidArgument("spline order must be at least 1".into()));
        }
        Self::build(grid_size, order_k, domain_lo, domain_hi)
    }

    /// Degree-0 (piecewise constant) basis on the same uniform layout.
    pub fn piecewise_constant(grid_size: usize, domain_lo: f64, domain_hi: f64) -> Result<Self> {
        Self::build(grid_size, 0, domain_lo, domain_hi)
    }

    fn build(grid_size: usize, order_k: usize, domain_lo: f64, domain_hi: f64) -> Result<Self> {
        if grid_size < 1 {
            return Err(Error::InvalidArgument("grid size must be at least 1".into()));
        }
        if order_k > MAX_ORDER {
            return Err(Error::InvalidArgument(format!(
                "spline order {order_k} exceeds maximum {MAX_ORDER}"
            )));
        }
        if !(domain_lo.is_finite() && domain_hi.is_finite()) || domain_lo >= domain_hi {
            return Err(Error::InvalidArgument(format!(
                "invalid domain [{domain_lo}, {domain_hi}]"
            )));
        }
        let mut kv = KnotVector {
            knots: Vec::new(),
            order_k,
            grid_size,
            domain_lo,
            domain_hi,
        };
        let n = grid_size + 2 * order_k + 1;
        kv.knots = (0..n as isize).map(|j| kv.knot_at(j)).collect();
        Ok(kv)
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn order_k(&self) -> usize {
        self.order_k
    }

    pub fn grid_size(&self) -> usize {
        self.grid_size
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.domain_lo, self.domain_hi)
    }

    pub fn step(&self) -> f64 {
        (self.domain_hi - self.domain_lo) / self.grid_size as f64
    }

    /// Number of basis functions, `grid_size + order_k`.
    pub fn n_basis(&self) -> usize {
        self.grid_size + self.order_k
    }

    /// First and last knot.
    pub fn span(&self) -> (f64, f64) {
        (self.knots[0], self.knots[self.knots.len() - 1])
    }

    /// Clamps `x` into the extended span; the flag is set when clamping moved it.
    pub fn clamp(&self, x: f64) -> (f64, bool) {
        let (lo, hi) = self.span();
        if x < lo {
            (lo, true)
        } else if x > hi {
            (hi, true)
        } else {
            (x, false)
        }
    }

    // Knot `j` of the infinite uniform grid; `j` may fall outside the stored vector.
    #[inline]
    fn knot_at(&self, j: isize) -> f64 {
        self.domain_lo + (j - self.order_k as isize) as f64 * self.step()
    }

    fn check_span(&self, x: f64) -> Result<()> {
        let (lo, hi) = self.span();
        if x.is_nan() || x < lo || x > hi {
            return Err(Error::Domain { x, lo, hi });
        }
        Ok(())
    }

    /// Nonzero basis values and derivatives at `x`, which must lie in the span.
    pub fn local(&self, x: f64) -> LocalBasis {
        let p = self.order_k;
        let last_span = self.knots.len() as isize - 2;
        let h = self.step();
        let mut i = ((x - self.knots[0]) / h).floor() as isize;
        i = i.clamp(0, last_span);
        while i < last_span && x >= self.knot_at(i + 1) {
            i += 1;
        }
        while i > 0 && x < self.knot_at(i) {
            i -= 1;
        }

        let mut n = [0.0; MAX_ORDER + 1];
        let mut lower = [0.0; MAX_ORDER + 1];
        let mut left = [0.0; MAX_ORDER + 1];
        let mut right = [0.0; MAX_ORDER + 1];
        n[0] = 1.0;
        for j in 1..=p {
            if j == p {
                lower[..p].copy_from_slice(&n[..p]);
            }
            left[j] = x - self.knot_at(i + 1 - j as isize);
            right[j] = self.knot_at(i + j as isize) - x;
            let mut saved = 0.0;
            for r in 0..j {
                let temp = n[r] / (right[r + 1] + left[j - r]);
                n[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            n[j] = saved;
        }

        let mut ders = [0.0; MAX_ORDER + 1];
        if p > 0 {
            for (r, d) in ders.iter_mut().enumerate().take(p + 1) {
                let a = if r >= 1 { lower[r - 1] } else { 0.0 };
                let b = if r < p { lower[r] } else { 0.0 };
                *d = (a - b) / h;
            }
        }

        LocalBasis {
            first: i - p as isize,
            len: p + 1,
            vals: n,
            ders,
        }
    }

    /// All `n_basis` values `B_m(x)`.
    pub fn basis_values(&self, x: f64) -> Result<Vec<f64>> {
        self.check_span(x)?;
        let mut out = vec![0.0; self.n_basis()];
        for (m, v, _) in self.local(x).iter(self.n_basis()) {
            out[m] = v;
        }
        Ok(out)
    }

    /// All `n_basis` derivatives `dB_m/dx`.
    pub fn basis_derivatives(&self, x: f64) -> Result<Vec<f64>> {
        self.check_span(x)?;
        let mut out = vec![0.0; self.n_basis()];
        for (m, _, d) in self.local(x).iter(self.n_basis()) {
            out[m] = d;
        }
        Ok(out)
    }
}

/// Builds a uniform extended knot vector; see [`KnotVector::uniform`].
pub fn build_knot_vector(grid_size: usize, order_k: usize, domain_lo: f64, domain_hi: f64) -> Result<KnotVector> {
    KnotVector::uniform(grid_size, order_k, domain_lo, domain_hi)
}

/// One learnable edge function `phi(x) = sum_m c_m B_m(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineEdge {
    pub knots: KnotVector,
    pub coefficients: Vec<f64>,
}

impl SplineEdge {
    pub fn new(knots: KnotVector, coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.len() != knots.n_basis() {
            return Err(Error::DimensionMismatch {
                expected: knots.n_basis(),
                got: coefficients.len(),
            });
        }
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("spline coefficient".into()));
        }
        Ok(SplineEdge { knots, coefficients })
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        self.knots.check_span(x)?;
        Ok(eval_local(&self.knots.local(x), &self.coefficients))
    }

    /// Returns `(d phi / dx, d phi / dc)`.
    pub fn grad(&self, x: f64) -> Result<(f64, Vec<f64>)> {
        self.knots.check_span(x)?;
        let local = self.knots.local(x);
        let mut d_dc = vec![0.0; self.coefficients.len()];
        let mut d_dx = 0.0;
        for (m, v, d) in local.iter(self.coefficients.len()) {
            d_dc[m] = v;
            d_dx += self.coefficients[m] * d;
        }
        Ok((d_dx, d_dc))
    }
}

#[inline]
pub(crate) fn eval_local(local: &LocalBasis, coefficients: &[f64]) -> f64 {
    local
        .iter(coefficients.len())
        .map(|(m, v, _)| coefficients[m] * v)
        .sum()
}
