//! Stochastic oracle interfaces and the biased hypergradient estimator.
//!
//! Bilevel problems expose sampled first- and second-order information
//! through [`BilevelOracle`]; compositional problems expose the inner map,
//! its vector-Jacobian product, and the outer gradient through
//! [`CompositionalOracle`]. Oracles never own randomness — every call takes
//! an [`RngStream`] so runs are deterministic by seed and trackers can
//! replay a span of draws to share samples across evaluation points.
//!
//! The hypergradient of `Q(x) = F(x, y*(x))` is
//! `∇Q = ∇_x f - ∇²_xy g · [∇²_yy g]⁻¹ · ∇_y f`. The inverse-Hessian factor
//! is estimated by a truncated Neumann series with a uniformly drawn length:
//! draw `l` from `{0, …, k-1}`, then apply `(k/L_g) · Π_{i=1}^{l}
//! (I - ∇²_yy g(ξ_i)/L_g)` to the vector. The estimate is biased, with bias
//! decaying geometrically in `k` at rate `(1 - mu_g/L_g)`.

use crate::error::{Error, Result};
use crate::point::Point;
use crate::rng::RngStream;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// Sampling interface for bilevel problems
/// `min_x F(x, y*(x))  s.t.  y*(x) = argmin_y G(y, x)`.
///
/// Every method draws whatever it needs from the provided stream; a method
/// with a deterministic value (a constant cross-Hessian, say) simply
/// consumes nothing. Each sample must be unbiased for its population
/// quantity, and `hvp_yy_g` must be linear in `v` for a fixed draw.
pub trait BilevelOracle {
    /// Shape of the outer variable `x`.
    fn outer_shape(&self) -> (usize, usize);
    /// Shape of the inner variable `y`.
    fn inner_shape(&self) -> (usize, usize);
    /// Sampled `∇_x f(x, y; θ)`.
    fn grad_x_f(&self, x: &Point, y: &Point, rng: &mut RngStream) -> Result<Point>;
    /// Sampled `∇_y f(x, y; θ)`.
    fn grad_y_f(&self, x: &Point, y: &Point, rng: &mut RngStream) -> Result<Point>;
    /// Sampled inner gradient `∇_y g(x, y; ξ)`.
    fn grad_y_g(&self, x: &Point, y: &Point, rng: &mut RngStream) -> Result<Point>;
    /// Sampled inner Hessian-vector product `∇²_yy g(x, y; ξ) · v`.
    fn hvp_yy_g(&self, x: &Point, y: &Point, v: &Point, rng: &mut RngStream) -> Result<Point>;
    /// Sampled cross Hessian-vector product `∇²_xy g(x, y; ξ) · v` (maps ℝⁿ → ℝᵐ).
    fn cross_hvp_xy_g(&self, x: &Point, y: &Point, v: &Point, rng: &mut RngStream)
        -> Result<Point>;
    /// Strong-convexity modulus of the population inner objective.
    fn mu_g(&self) -> f64;
    /// Smoothness constant of the population inner objective; the Neumann
    /// factors `(I - ∇²g/L_g)` contract only when this really is an upper
    /// bound on the sampled Hessian spectra.
    fn l_g(&self) -> f64;
}

/// Sampling interface for compositional problems `min_x f(E[h(x, ξ)])`.
pub trait CompositionalOracle {
    /// Shape of the decision variable `x`.
    fn outer_shape(&self) -> (usize, usize);
    /// Shape of the inner map value `h(x)`.
    fn inner_shape(&self) -> (usize, usize);
    /// Sampled inner map `h(x; ξ)`.
    fn sample_h(&self, x: &Point, rng: &mut RngStream) -> Result<Point>;
    /// Sampled vector-Jacobian product `∇h(x; ξ)ᵀ u`. Pairing with a
    /// `sample_h` draw is achieved by replaying the stream.
    fn vjp_h(&self, x: &Point, u: &Point, rng: &mut RngStream) -> Result<Point>;
    /// Sampled outer gradient `∇f(y; θ)`.
    fn grad_f(&self, y: &Point, rng: &mut RngStream) -> Result<Point>;
}

/// Single-level sampled gradient `∇f(x; θ)`, the only thing the SFW
/// baseline needs.
pub trait GradientOracle {
    fn shape(&self) -> (usize, usize);
    fn sample_grad(&self, x: &Point, rng: &mut RngStream) -> Result<Point>;
}

/// Exact population quantities for testbed problems, used by
/// [`surrogate_gradient_exact`] and the bias tests. Problems without
/// closed forms return a capability error.
pub trait ExactBilevel: BilevelOracle {
    fn pop_grad_x_f(&self, x: &Point, y: &Point) -> Result<Point>;
    fn pop_grad_y_f(&self, x: &Point, y: &Point) -> Result<Point>;
    /// Dense population inner Hessian `∇²_yy G(y, x)`, n×n.
    fn pop_hess_yy_g(&self, x: &Point, y: &Point) -> Result<DMatrix<f64>>;
    /// Dense population cross Hessian `∇²_xy G(y, x)`, m×n.
    fn pop_cross_xy_g(&self, x: &Point, y: &Point) -> Result<DMatrix<f64>>;
}

/// Counts of stochastic first/second-order oracle calls, for SFO-complexity
/// reporting. Every oracle call made through the estimators and trackers
/// increments exactly one field.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleCallCounter {
    /// `grad_x_f` / `grad_y_f` / single-level gradient samples.
    pub outer_grad: u64,
    /// Inner gradient samples `grad_y_g`.
    pub inner_grad: u64,
    /// Hessian samples (`hvp_yy_g` and `cross_hvp_xy_g`).
    pub hessian: u64,
    /// Inner-map samples (`sample_h` / `vjp_h` / `grad_f`).
    pub inner_map: u64,
}

impl OracleCallCounter {
    pub fn total(&self) -> u64 {
        self.outer_grad + self.inner_grad + self.hessian + self.inner_map
    }
}

/// Apply the randomized truncated-Neumann estimate of `[∇²_yy G]⁻¹` to `v`.
///
/// Draws `l` uniform on `{0, …, k-1}` from `rng`, then returns
/// `(k/L_g) · (I - H(ξ_l)/L_g) ⋯ (I - H(ξ_1)/L_g) v`, consuming exactly
/// `l` Hessian samples (`l = 0` returns `(k/L_g)·v` by convention). For a
/// deterministic scalar Hessian `μ` the expectation over `l` is
/// `(1/μ)(1 - (1 - μ/L_g)^k)`, which converges to `1/μ` as `k` grows.
pub fn neumann_inverse_apply<O: BilevelOracle + ?Sized>(
    oracle: &O,
    x: &Point,
    y: &Point,
    v: &Point,
    k: u64,
    rng: &mut RngStream,
    counter: &mut OracleCallCounter,
) -> Result<Point> {
    if k < 1 {
        return Err(Error::Usage(format!("neumann_inverse_apply: k must be >= 1, got {k}")));
    }
    if !v.is_finite() {
        return Err(Error::Numeric("neumann_inverse_apply: non-finite input vector".into()));
    }
    let l_g = oracle.l_g();
    let l = rng.below(k as usize);
    let mut w = v.clone();
    // Factors are applied in descending index order i = l, …, 1; samples are
    // i.i.d. so only replayability depends on the order being fixed.
    for _ in 0..l {
        let hv = oracle.hvp_yy_g(x, y, &w, rng)?;
        counter.hessian += 1;
        w = w.axpy(-1.0 / l_g, &hv)?;
    }
    Ok(w.scale(k as f64 / l_g))
}

/// One draw of the biased hypergradient estimate
/// `h = ∇_x f - ∇²_xy g · M · ∇_y f` at `(x, y)`.
///
/// `theta` feeds the two outer-gradient samples, which share one θ draw by
/// stream replay; `hess` feeds the Neumann chain and the final independent
/// cross-Hessian sample. Increments the outer-gradient counter by 2 and the
/// Hessian counter by `l + 1 ≤ k`.
pub fn hypergradient_sample<O: BilevelOracle + ?Sized>(
    oracle: &O,
    x: &Point,
    y: &Point,
    k: u64,
    theta: &mut RngStream,
    hess: &mut RngStream,
    counter: &mut OracleCallCounter,
) -> Result<Point> {
    let at = theta.checkpoint();
    let gx = oracle.grad_x_f(x, y, theta)?;
    counter.outer_grad += 1;
    let mid = theta.checkpoint();
    theta.restore(at);
    let gy = oracle.grad_y_f(x, y, theta)?;
    counter.outer_grad += 1;
    // The two outer gradients may consume different spans of θ; leave the
    // stream past both so no part of this draw is replayed later.
    theta.restore(mid.max(theta.checkpoint()));
    let w = neumann_inverse_apply(oracle, x, y, &gy, k, hess, counter)?;
    let cross = oracle.cross_hvp_xy_g(x, y, &w, hess)?;
    counter.hessian += 1;
    let h = gx.sub(&cross)?;
    if !h.is_finite() {
        return Err(Error::Numeric("hypergradient_sample: non-finite estimate".into()));
    }
    Ok(h)
}

/// The surrogate gradient `∇S(x, y) = ∇_x F - ∇²_xy G · [∇²_yy G]⁻¹ ∇_y F`
/// evaluated with exact population pieces and a dense linear solve.
///
/// At `y = y*(x)` this equals `∇Q(x)` exactly; the test suite uses it as
/// the bias oracle for the sampled estimator.
pub fn surrogate_gradient_exact<O: ExactBilevel + ?Sized>(
    oracle: &O,
    x: &Point,
    y: &Point,
) -> Result<Point> {
    let gx = oracle.pop_grad_x_f(x, y)?;
    let gy = oracle.pop_grad_y_f(x, y)?;
    let hess = oracle.pop_hess_yy_g(x, y)?;
    let cross = oracle.pop_cross_xy_g(x, y)?;
    let n = gy.len();
    let rhs = nalgebra::DVector::from_column_slice(gy.as_slice());
    let solved = hess
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Numeric("surrogate_gradient_exact: singular inner Hessian".into()))?;
    if cross.ncols() != n || cross.nrows() != gx.len() {
        return Err(Error::Usage("surrogate_gradient_exact: cross-Hessian shape mismatch".into()));
    }
    let correction = &cross * solved;
    let (rows, cols) = oracle.outer_shape();
    let corr = Point::new(correction.iter().copied().collect(), rows, cols)?;
    gx.sub(&corr)
}

/// View a compositional problem as the bilevel problem
/// `min_x f(y*(x))` with inner objective `g(y, x; ξ) = ½‖y - h(x, ξ)‖²`,
/// whose population minimizer is `y*(x) = E[h(x, ξ)]`.
///
/// The inner Hessian is the identity (`mu_g = L_g = 1`), the cross Hessian
/// applied to `v` is `-∇h(x, ξ)ᵀ v`, and the outer gradient in `y` is the
/// compositional outer gradient. This is how the bilevel solver runs on
/// compositional tasks for head-to-head comparisons.
pub struct CompositionalAsBilevel<'a, C: CompositionalOracle + ?Sized> {
    inner: &'a C,
    sigma_g_sq: f64,
}

impl<'a, C: CompositionalOracle + ?Sized> CompositionalAsBilevel<'a, C> {
    pub fn new(inner: &'a C) -> Self {
        CompositionalAsBilevel { inner, sigma_g_sq: 1.0 }
    }

    /// Declare the inner-gradient variance bound used by schedules.
    pub fn with_sigma_g_sq(mut self, v: f64) -> Self {
        self.sigma_g_sq = v;
        self
    }

    pub fn sigma_g_sq(&self) -> f64 {
        self.sigma_g_sq
    }
}

impl<'a, C: CompositionalOracle + ?Sized> BilevelOracle for CompositionalAsBilevel<'a, C> {
    fn outer_shape(&self) -> (usize, usize) {
        self.inner.outer_shape()
    }

    fn inner_shape(&self) -> (usize, usize) {
        self.inner.inner_shape()
    }

    fn grad_x_f(&self, _x: &Point, _y: &Point, _rng: &mut RngStream) -> Result<Point> {
        // f has no direct x dependence.
        let (r, c) = self.inner.outer_shape();
        Ok(Point::zeros(r, c))
    }

    fn grad_y_f(&self, _x: &Point, y: &Point, rng: &mut RngStream) -> Result<Point> {
        self.inner.grad_f(y, rng)
    }

    fn grad_y_g(&self, x: &Point, y: &Point, rng: &mut RngStream) -> Result<Point> {
        let h = self.inner.sample_h(x, rng)?;
        y.sub(&h)
    }

    fn hvp_yy_g(&self, _x: &Point, _y: &Point, v: &Point, _rng: &mut RngStream) -> Result<Point> {
        Ok(v.clone())
    }

    fn cross_hvp_xy_g(
        &self,
        x: &Point,
        _y: &Point,
        v: &Point,
        rng: &mut RngStream,
    ) -> Result<Point> {
        Ok(self.inner.vjp_h(x, v, rng)?.scale(-1.0))
    }

    fn mu_g(&self) -> f64 {
        1.0
    }

    fn l_g(&self) -> f64 {
        1.0
    }
}
