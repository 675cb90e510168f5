//! Matrix completion with a denoising inner problem.
//!
//! The outer variable is the completed matrix `X` constrained to a nuclear
//! ball; the inner variable is a denoised copy `V` that fits the observed
//! entries of `M` under an ℓ1 penalty and a proximity term `λ₂‖X − V‖²`.
//! The outer loss compares `X` to the denoised `V` on the observed set, so
//! the composite problem completes the matrix against a cleaned-up target
//! instead of the raw noisy observations.
//!
//! Everything here is entrywise-separable, which buys exact population
//! quantities at desk scale: the inner solution, the composite objective,
//! and its gradient all reduce to scalar root-finding per entry. The
//! metrics and bias tests lean on those closed forms.

use crate::constraint::nuclear_norm;
use crate::error::{Error, Result};
use crate::oracles::{BilevelOracle, ExactBilevel, GradientOracle};
use crate::point::Point;
use crate::rng::RngStream;
use crate::solvers::ProblemMetrics;
use nalgebra::DMatrix;

/// How the inner ℓ1 penalty is differentiated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum L1Smoothing {
    /// Pseudo-Huber `φ_ε(v) = √(v² + ε²) − ε`: twice differentiable, so
    /// Hessian-vector products carry the `λ₁ φ″` diagonal and the declared
    /// smoothness constant includes `λ₁/ε`.
    PseudoHuber,
    /// Plain subgradient `sign(v)` with zero Hessian contribution. The
    /// inner problem stays strongly convex, but the oracle is only
    /// piecewise smooth at 0.
    Subgradient,
}

/// Matrix completion with denoising.
///
/// Outer: `f(X, V) = (1/|Ω₁|) Σ_{(i,j)∈Ω₁} (X_ij − V_ij)²` over
/// `‖X‖_* ≤ α`. Inner: `g(V, X) = (1/|Ω₂|) Σ_{(i,j)∈Ω₂} (V_ij − M_ij)²
/// + λ₁ Σ_ij φ(V_ij) + λ₂ ‖X − V‖²_F`, strongly convex with modulus
/// `2λ₂`. Stochastic oracles subsample the index sets with replacement.
#[derive(Debug, Clone)]
pub struct MatrixCompletionProblem {
    /// Observed matrix `M`, dense n×m.
    m_obs: Point,
    /// Observed index sets for the outer and inner losses.
    omega1: Vec<(usize, usize)>,
    omega2: Vec<(usize, usize)>,
    /// Per-entry observation multiplicity (row-major), used by the
    /// population closed forms.
    mask1: Vec<f64>,
    mask2: Vec<f64>,
    lambda1: f64,
    lambda2: f64,
    /// Nuclear-ball radius.
    alpha: f64,
    /// Minibatch sizes for the outer and inner samples.
    b1: usize,
    b2: usize,
    /// Smoothing width for the ℓ1 term.
    epsilon_l1: f64,
    smoothing: L1Smoothing,
}

/// Default regularization weights for the synthetic instance.
const DEFAULT_LAMBDA: f64 = 0.05;
/// Default minibatch size.
const DEFAULT_BATCH: usize = 50;
/// Default ℓ1 smoothing width.
const DEFAULT_EPSILON: f64 = 1e-3;

impl MatrixCompletionProblem {
    /// Build a problem from an observed matrix and its index set; the same
    /// set feeds the outer and inner losses. Defaults: `λ₁ = λ₂ = 0.05`,
    /// batch sizes 50, pseudo-Huber smoothing with `ε = 10⁻³`.
    pub fn new(m_obs: Point, omega: Vec<(usize, usize)>, alpha: f64) -> Result<Self> {
        if omega.is_empty() {
            return Err(Error::Config("matrix completion: empty observed set".into()));
        }
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::Config(format!(
                "matrix completion: nuclear radius must be positive, got {alpha}"
            )));
        }
        let (n, m) = m_obs.shape();
        for &(i, j) in &omega {
            if i >= n || j >= m {
                return Err(Error::Config(format!(
                    "matrix completion: index ({i}, {j}) outside {n}×{m}"
                )));
            }
        }
        let mask = multiplicity(&omega, n, m);
        Ok(MatrixCompletionProblem {
            m_obs,
            omega1: omega.clone(),
            omega2: omega,
            mask1: mask.clone(),
            mask2: mask,
            lambda1: DEFAULT_LAMBDA,
            lambda2: DEFAULT_LAMBDA,
            alpha,
            b1: DEFAULT_BATCH,
            b2: DEFAULT_BATCH,
            epsilon_l1: DEFAULT_EPSILON,
            smoothing: L1Smoothing::PseudoHuber,
        })
    }

    /// Synthetic low-rank instance: truth `X̂ = WWᵀ` with `W` an n×r
    /// standard-normal matrix, observations `M = X̂ + n̂(L + Lᵀ)` with `L`
    /// n×n standard-normal, each entry observed independently with
    /// probability `observe_prob`, and radius `α = ‖X̂‖_*`. Returns the
    /// problem and the ground truth.
    pub fn synthetic(
        n: usize,
        r: usize,
        noise_factor: f64,
        observe_prob: f64,
        rng: &mut RngStream,
    ) -> Result<(Self, Point)> {
        if r < 1 || n < r {
            return Err(Error::Config(format!(
                "synthetic completion: need n ≥ r ≥ 1, got n={n}, r={r}"
            )));
        }
        if !(0.0..1.0).contains(&noise_factor) {
            return Err(Error::Config(format!(
                "synthetic completion: noise factor must lie in [0, 1), got {noise_factor}"
            )));
        }
        if !(observe_prob > 0.0 && observe_prob <= 1.0) {
            return Err(Error::Config(format!(
                "synthetic completion: observation probability must lie in (0, 1], got {observe_prob}"
            )));
        }
        let w = rng.normal_vec(n * r);
        let mut truth = Point::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for k in 0..r {
                    s += w[i * r + k] * w[j * r + k];
                }
                truth.set(i, j, s);
            }
        }
        let l = rng.normal_vec(n * n);
        let mut m_obs = truth.clone();
        if noise_factor > 0.0 {
            for i in 0..n {
                for j in 0..n {
                    let e = noise_factor * (l[i * n + j] + l[j * n + i]);
                    m_obs.set(i, j, m_obs.at(i, j) + e);
                }
            }
        }
        let mut omega = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if rng.uniform() < observe_prob {
                    omega.push((i, j));
                }
            }
        }
        if omega.is_empty() {
            return Err(Error::Config(
                "synthetic completion: the sampled observation set came out empty".into(),
            ));
        }
        let alpha = nuclear_norm(&truth);
        let prob = MatrixCompletionProblem::new(m_obs, omega, alpha)?;
        Ok((prob, truth))
    }

    /// Override the regularization weights.
    pub fn with_weights(mut self, lambda1: f64, lambda2: f64) -> Result<Self> {
        if lambda1 < 0.0 || !(lambda2 > 0.0) {
            return Err(Error::Config(format!(
                "matrix completion: need λ₁ ≥ 0 and λ₂ > 0, got λ₁={lambda1}, λ₂={lambda2}"
            )));
        }
        self.lambda1 = lambda1;
        self.lambda2 = lambda2;
        Ok(self)
    }

    /// Override the minibatch sizes.
    pub fn with_batches(mut self, b1: usize, b2: usize) -> Result<Self> {
        if b1 < 1 || b2 < 1 {
            return Err(Error::Config("matrix completion: batch sizes must be ≥ 1".into()));
        }
        self.b1 = b1;
        self.b2 = b2;
        Ok(self)
    }

    /// Override the ℓ1 differentiation mode and smoothing width.
    pub fn with_smoothing(mut self, smoothing: L1Smoothing, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(Error::Config("matrix completion: smoothing width must be > 0".into()));
        }
        self.smoothing = smoothing;
        self.epsilon_l1 = epsilon;
        Ok(self)
    }

    /// Observed matrix.
    pub fn observations(&self) -> &Point {
        &self.m_obs
    }

    /// Outer observed index set.
    pub fn omega(&self) -> &[(usize, usize)] {
        &self.omega1
    }

    /// Nuclear-ball radius.
    pub fn radius(&self) -> f64 {
        self.alpha
    }

    fn shape(&self) -> (usize, usize) {
        self.m_obs.shape()
    }

    /// φ(v): pseudo-Huber value or |v|.
    fn phi(&self, v: f64) -> f64 {
        match self.smoothing {
            L1Smoothing::PseudoHuber => {
                let e = self.epsilon_l1;
                (v * v + e * e).sqrt() - e
            }
            L1Smoothing::Subgradient => v.abs(),
        }
    }

    fn phi_prime(&self, v: f64) -> f64 {
        match self.smoothing {
            L1Smoothing::PseudoHuber => {
                let e = self.epsilon_l1;
                v / (v * v + e * e).sqrt()
            }
            L1Smoothing::Subgradient => {
                if v == 0.0 {
                    0.0
                } else {
                    v.signum()
                }
            }
        }
    }

    fn phi_second(&self, v: f64) -> f64 {
        match self.smoothing {
            L1Smoothing::PseudoHuber => {
                let e = self.epsilon_l1;
                let d = v * v + e * e;
                e * e / (d * d.sqrt())
            }
            L1Smoothing::Subgradient => 0.0,
        }
    }

    /// Sampled outer residual gradient `(2/|B|) Σ_B (X_ij − V_ij) E_ij`
    /// over a batch of Ω₁ rows.
    fn outer_grad_batch(&self, x: &Point, y: &Point, batch: &[usize]) -> Point {
        let (n, m) = self.shape();
        let mut g = Point::zeros(n, m);
        let scale = 2.0 / batch.len() as f64;
        for &b in batch {
            let (i, j) = self.omega1[b];
            g.set(i, j, g.at(i, j) + scale * (x.at(i, j) - y.at(i, j)));
        }
        g
    }

    #[cfg(test)]
    fn outer_value_batch(&self, x: &Point, y: &Point, batch: &[usize]) -> f64 {
        let mut s = 0.0;
        for &b in batch {
            let (i, j) = self.omega1[b];
            let r = x.at(i, j) - y.at(i, j);
            s += r * r;
        }
        s / batch.len() as f64
    }

    /// Sampled inner gradient: subsampled data-fit term plus the exact
    /// (deterministic) penalty and proximity terms.
    fn inner_grad_batch(&self, x: &Point, y: &Point, batch: &[usize]) -> Point {
        let (n, m) = self.shape();
        let mut g = Point::zeros(n, m);
        let scale = 2.0 / batch.len() as f64;
        for &b in batch {
            let (i, j) = self.omega2[b];
            g.set(i, j, g.at(i, j) + scale * (y.at(i, j) - self.m_obs.at(i, j)));
        }
        for idx in 0..g.len() {
            let v = y.get(idx);
            let d = self.lambda1 * self.phi_prime(v) + 2.0 * self.lambda2 * (v - x.get(idx));
            g.as_mut_slice()[idx] += d;
        }
        g
    }

    #[cfg(test)]
    fn inner_value_batch(&self, x: &Point, y: &Point, batch: &[usize]) -> f64 {
        let mut fit = 0.0;
        for &b in batch {
            let (i, j) = self.omega2[b];
            let r = y.at(i, j) - self.m_obs.at(i, j);
            fit += r * r;
        }
        fit /= batch.len() as f64;
        let mut reg = 0.0;
        for idx in 0..y.len() {
            let v = y.get(idx);
            let d = v - x.get(idx);
            reg += self.lambda1 * self.phi(v) + self.lambda2 * d * d;
        }
        fit + reg
    }

    /// Sampled inner Hessian-vector product: subsampled data-fit diagonal
    /// (entries repeated in the batch count with multiplicity) plus the
    /// exact penalty curvature and proximity terms.
    fn inner_hvp_batch(&self, y: &Point, v: &Point, batch: &[usize]) -> Point {
        let (n, m) = self.shape();
        let mut hv = Point::zeros(n, m);
        let scale = 2.0 / batch.len() as f64;
        for &b in batch {
            let (i, j) = self.omega2[b];
            hv.set(i, j, hv.at(i, j) + scale * v.at(i, j));
        }
        for idx in 0..hv.len() {
            let c = self.lambda1 * self.phi_second(y.get(idx)) + 2.0 * self.lambda2;
            hv.as_mut_slice()[idx] += c * v.get(idx);
        }
        hv
    }

    /// Population outer loss `(1/|Ω₁|) Σ_{Ω₁} (X_ij − V_ij)²`.
    pub fn outer_objective(&self, x: &Point, y: &Point) -> f64 {
        let mut s = 0.0;
        for idx in 0..x.len() {
            let r = x.get(idx) - y.get(idx);
            s += self.mask1[idx] * r * r;
        }
        s / self.omega1.len() as f64
    }

    /// Population inner loss `g(V, X)`.
    pub fn inner_objective(&self, x: &Point, y: &Point) -> f64 {
        let mut s = 0.0;
        for idx in 0..y.len() {
            let v = y.get(idx);
            let r = v - self.m_obs.get(idx);
            let d = v - x.get(idx);
            s += self.mask2[idx] / self.omega2.len() as f64 * r * r
                + self.lambda1 * self.phi(v)
                + self.lambda2 * d * d;
        }
        s
    }

    /// Population inner gradient `∇_V g(V, X)`.
    pub fn inner_gradient(&self, x: &Point, y: &Point) -> Point {
        let (n, m) = self.shape();
        let mut g = Point::zeros(n, m);
        for idx in 0..g.len() {
            let v = y.get(idx);
            g.as_mut_slice()[idx] = 2.0 * self.mask2[idx] / self.omega2.len() as f64
                * (v - self.m_obs.get(idx))
                + self.lambda1 * self.phi_prime(v)
                + 2.0 * self.lambda2 * (v - x.get(idx));
        }
        g
    }

    /// Data-fit weight `w = 2·count/|Ω₂|` for one entry.
    fn fit_weight(&self, idx: usize) -> f64 {
        2.0 * self.mask2[idx] / self.omega2.len() as f64
    }

    /// Root of the per-entry stationarity condition
    /// `w(v − m) + λ₁ φ′(v) + 2λ₂ (v − x) = 0`, and the derivative
    /// `dv*/dx = 2λ₂ / r′(v*)` from the implicit function theorem.
    fn entry_solution(&self, idx: usize, x: f64) -> (f64, f64) {
        let w = self.fit_weight(idx);
        let m = self.m_obs.get(idx);
        let base = w * m + 2.0 * self.lambda2 * x;
        let denom = w + 2.0 * self.lambda2;
        if self.lambda1 == 0.0 {
            return (base / denom, 2.0 * self.lambda2 / denom);
        }
        if self.smoothing == L1Smoothing::Subgradient {
            // Soft threshold: the subdifferential at 0 absorbs |base| ≤ λ₁.
            return if base > self.lambda1 {
                ((base - self.lambda1) / denom, 2.0 * self.lambda2 / denom)
            } else if base < -self.lambda1 {
                ((base + self.lambda1) / denom, 2.0 * self.lambda2 / denom)
            } else {
                (0.0, 0.0)
            };
        }
        // |φ′| < 1 brackets the root around the unpenalized blend.
        let blend = base / denom;
        let mut lo = blend - self.lambda1 / denom;
        let mut hi = blend + self.lambda1 / denom;
        let resid = |v: f64| w * (v - m) + self.lambda1 * self.phi_prime(v) + 2.0 * self.lambda2 * (v - x);
        let slope = |v: f64| w + self.lambda1 * self.phi_second(v) + 2.0 * self.lambda2;
        let mut v = blend;
        for _ in 0..100 {
            let r = resid(v);
            if r.abs() <= 1e-13 * (1.0 + v.abs()) {
                break;
            }
            if r > 0.0 {
                hi = v;
            } else {
                lo = v;
            }
            let step = v - r / slope(v);
            // Newton with a bisection safeguard: the residual is monotone,
            // so the bracket always contains the root.
            v = if step > lo && step < hi { step } else { 0.5 * (lo + hi) };
        }
        (v, 2.0 * self.lambda2 / slope(v))
    }

    /// Population inner solution `V*(X)`, solved entrywise.
    pub fn inner_solution(&self, x: &Point) -> Point {
        let (n, m) = self.shape();
        let mut y = Point::zeros(n, m);
        for idx in 0..y.len() {
            y.as_mut_slice()[idx] = self.entry_solution(idx, x.get(idx)).0;
        }
        y
    }

    /// Population composite objective `f(X, V*(X))`.
    pub fn composite_objective(&self, x: &Point) -> f64 {
        self.outer_objective(x, &self.inner_solution(x))
    }

    /// Population composite gradient via the entrywise implicit function
    /// theorem: `dQ/dX_ij = (2·count₁/|Ω₁|)(X_ij − v*)(1 − dv*/dX_ij)`.
    pub fn composite_gradient(&self, x: &Point) -> Point {
        let (n, m) = self.shape();
        let mut g = Point::zeros(n, m);
        for idx in 0..g.len() {
            if self.mask1[idx] == 0.0 {
                continue;
            }
            let (v, dv) = self.entry_solution(idx, x.get(idx));
            g.as_mut_slice()[idx] =
                2.0 * self.mask1[idx] / self.omega1.len() as f64 * (x.get(idx) - v) * (1.0 - dv);
        }
        g
    }

    /// Population objective of the direct (no denoising) completion,
    /// `(1/|Ω₁|) Σ_{Ω₁} (X_ij − M_ij)²`.
    pub fn direct_objective(&self, x: &Point) -> f64 {
        self.outer_objective(x, &self.m_obs)
    }

    /// Population gradient of the direct completion objective.
    pub fn direct_gradient(&self, x: &Point) -> Point {
        let (n, m) = self.shape();
        let mut g = Point::zeros(n, m);
        for idx in 0..g.len() {
            g.as_mut_slice()[idx] = 2.0 * self.mask1[idx] / self.omega1.len() as f64
                * (x.get(idx) - self.m_obs.get(idx));
        }
        g
    }

    /// Single-level view for the no-denoising baseline.
    pub fn without_denoising(&self) -> DirectCompletion<'_> {
        DirectCompletion { prob: self }
    }
}

/// Per-entry multiplicity of an index list over an n×m grid, row-major.
fn multiplicity(omega: &[(usize, usize)], n: usize, m: usize) -> Vec<f64> {
    let mut mask = vec![0.0; n * m];
    for &(i, j) in omega {
        mask[i * m + j] += 1.0;
    }
    mask
}

/// `b` indices drawn i.i.d. uniform with replacement.
fn draw_batch(rng: &mut RngStream, len: usize, b: usize) -> Vec<usize> {
    (0..b).map(|_| rng.below(len)).collect()
}

impl BilevelOracle for MatrixCompletionProblem {
    fn outer_shape(&self) -> (usize, usize) {
        self.shape()
    }

    fn inner_shape(&self) -> (usize, usize) {
        self.shape()
    }

    fn grad_x_f(&self, x: &Point, y: &Point, rng: &mut RngStream) -> Result<Point> {
        let batch = draw_batch(rng, self.omega1.len(), self.b1);
        Ok(self.outer_grad_batch(x, y, &batch))
    }

    // Consumes the same number of draws as `grad_x_f`, so the replay
    // pairing in the hypergradient estimator sees one shared batch.
    fn grad_y_f(&self, x: &Point, y: &Point, rng: &mut RngStream) -> Result<Point> {
        let batch = draw_batch(rng, self.omega1.len(), self.b1);
        Ok(self.outer_grad_batch(x, y, &batch).scale(-1.0))
    }

    fn grad_y_g(&self, x: &Point, y: &Point, rng: &mut RngStream) -> Result<Point> {
        let batch = draw_batch(rng, self.omega2.len(), self.b2);
        Ok(self.inner_grad_batch(x, y, &batch))
    }

    fn hvp_yy_g(&self, _x: &Point, y: &Point, v: &Point, rng: &mut RngStream) -> Result<Point> {
        let batch = draw_batch(rng, self.omega2.len(), self.b2);
        Ok(self.inner_hvp_batch(y, v, &batch))
    }

    fn cross_hvp_xy_g(
        &self,
        _x: &Point,
        _y: &Point,
        v: &Point,
        _rng: &mut RngStream,
    ) -> Result<Point> {
        Ok(v.scale(-2.0 * self.lambda2))
    }

    fn mu_g(&self) -> f64 {
        2.0 * self.lambda2
    }

    // Data-fit diagonal ≤ 2 (batch normalization bounds each entry's
    // multiplicity share by 1), penalty curvature ≤ λ₁/ε, proximity 2λ₂.
    fn l_g(&self) -> f64 {
        let penalty = match self.smoothing {
            L1Smoothing::PseudoHuber => self.lambda1 / self.epsilon_l1,
            L1Smoothing::Subgradient => 0.0,
        };
        2.0 + penalty + 2.0 * self.lambda2
    }
}

impl ExactBilevel for MatrixCompletionProblem {
    fn pop_grad_x_f(&self, x: &Point, y: &Point) -> Result<Point> {
        let (n, m) = self.shape();
        let mut g = Point::zeros(n, m);
        for idx in 0..g.len() {
            g.as_mut_slice()[idx] = 2.0 * self.mask1[idx] / self.omega1.len() as f64
                * (x.get(idx) - y.get(idx));
        }
        Ok(g)
    }

    fn pop_grad_y_f(&self, x: &Point, y: &Point) -> Result<Point> {
        Ok(self.pop_grad_x_f(x, y)?.scale(-1.0))
    }

    // Dense nm×nm matrices: population forms are for small test instances.
    fn pop_hess_yy_g(&self, _x: &Point, y: &Point) -> Result<DMatrix<f64>> {
        let len = y.len();
        let mut h = DMatrix::zeros(len, len);
        for idx in 0..len {
            h[(idx, idx)] = self.fit_weight(idx)
                + self.lambda1 * self.phi_second(y.get(idx))
                + 2.0 * self.lambda2;
        }
        Ok(h)
    }

    fn pop_cross_xy_g(&self, _x: &Point, _y: &Point) -> Result<DMatrix<f64>> {
        let len = self.m_obs.len();
        Ok(DMatrix::identity(len, len) * (-2.0 * self.lambda2))
    }
}

/// Single-level completion against the raw observations: population
/// objective `(1/|Ω₁|) Σ_{Ω₁} (X_ij − M_ij)²` with no denoising stage. Its
/// minimizer fits the noise in `M`, which is what makes it a baseline.
pub struct DirectCompletion<'a> {
    prob: &'a MatrixCompletionProblem,
}

impl GradientOracle for DirectCompletion<'_> {
    fn shape(&self) -> (usize, usize) {
        self.prob.shape()
    }

    fn sample_grad(&self, x: &Point, rng: &mut RngStream) -> Result<Point> {
        let batch = draw_batch(rng, self.prob.omega1.len(), self.prob.b1);
        Ok(self.prob.outer_grad_batch(x, &self.prob.m_obs, &batch))
    }
}

/// Normalized recovery error `Σ_Ω (X_ij − T_ij)² / Σ_Ω T_ij²` against a
/// reference matrix `T` (ground truth for synthetic data, observations for
/// real data) on an index set.
pub fn normalized_error(x: &Point, truth: &Point, omega: &[(usize, usize)]) -> Result<f64> {
    if omega.is_empty() {
        return Err(Error::Usage("normalized_error: empty index set".into()));
    }
    if !x.same_shape(truth) {
        return Err(Error::Usage("normalized_error: shape mismatch".into()));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for &(i, j) in omega {
        let t = truth.at(i, j);
        let r = x.at(i, j) - t;
        num += r * r;
        den += t * t;
    }
    if den <= 0.0 {
        return Err(Error::Numeric("normalized_error: reference is zero on the index set".into()));
    }
    Ok(num / den)
}

/// Metric view of a completion problem: normalized error against a
/// reference matrix, plus the population objective, gradient, and inner
/// solution from the entrywise closed forms.
pub struct CompletionMetrics<'a> {
    prob: &'a MatrixCompletionProblem,
    truth: Point,
    direct: bool,
}

impl<'a> CompletionMetrics<'a> {
    /// Metrics for the bilevel (denoising) runs.
    pub fn bilevel(prob: &'a MatrixCompletionProblem, truth: Point) -> Result<Self> {
        if !truth.same_shape(prob.observations()) {
            return Err(Error::Usage("completion metrics: reference shape mismatch".into()));
        }
        Ok(CompletionMetrics { prob, truth, direct: false })
    }

    /// Metrics for the single-level baseline: same normalized error, but
    /// objective and gradient describe the direct loss.
    pub fn direct(prob: &'a MatrixCompletionProblem, truth: Point) -> Result<Self> {
        let mut m = CompletionMetrics::bilevel(prob, truth)?;
        m.direct = true;
        Ok(m)
    }
}

impl ProblemMetrics for CompletionMetrics<'_> {
    fn objective(&self, x: &Point) -> Option<f64> {
        Some(if self.direct {
            self.prob.direct_objective(x)
        } else {
            self.prob.composite_objective(x)
        })
    }

    fn normalized_error(&self, x: &Point) -> Option<f64> {
        normalized_error(x, &self.truth, &self.prob.omega1).ok()
    }

    fn exact_gradient(&self, x: &Point) -> Option<Point> {
        Some(if self.direct {
            self.prob.direct_gradient(x)
        } else {
            self.prob.composite_gradient(x)
        })
    }

    fn inner_optimum(&self, x: &Point) -> Option<Point> {
        if self.direct {
            None
        } else {
            Some(self.prob.inner_solution(x))
        }
    }
}
