//! Quadratic testbeds with closed-form optima.
//!
//! These problems exist to make the estimators and solvers checkable: every
//! population quantity (inner solution, composite objective, its gradient)
//! has a closed form, so tests can measure bias, tracking error, and
//! suboptimality exactly. Noise is additive Gaussian with configurable
//! scale on each oracle; setting a scale to zero makes that oracle exact.

use crate::error::{Error, Result};
use crate::oracles::{BilevelOracle, CompositionalOracle, ExactBilevel};
use crate::point::Point;
use crate::rng::RngStream;
use crate::solvers::ProblemMetrics;
use nalgebra::DMatrix;

/// Smooth bounded scalar `φ(u) = u² / (1 + u²)` and its derivative; the
/// nonconvex outer objective applies it componentwise.
fn ratio_phi(u: f64) -> f64 {
    u * u / (1.0 + u * u)
}

fn ratio_phi_prime(u: f64) -> f64 {
    let d = 1.0 + u * u;
    2.0 * u / (d * d)
}

/// Outer objective for [`QuadraticBilevel`].
#[derive(Debug, Clone)]
pub enum OuterKind {
    /// Convex tracking loss `f(x, y) = ½‖Bx − y + c‖²`.
    Tracking { b_mat: Point, c: Vec<f64> },
    /// Linear loss `f(y) = cᵀy`, making the composite objective
    /// `Q(x) = cᵀ(Ax + b)` linear in x.
    Linear { c: Vec<f64> },
    /// Nonconvex bounded loss `f(y) = Σ_i φ(y_i − c_i)` with no direct
    /// x-coupling.
    SmoothRatio { c: Vec<f64> },
}

/// Bilevel testbed with inner objective
/// `g(y, x; ξ) = ½ (y − Ax − b)ᵀ diag(h) (y − Ax − b) + noise`, so the
/// inner solution is the affine map `y*(x) = Ax + b` and the composite
/// objective `Q(x) = f(x, y*(x))` is available in closed form.
#[derive(Debug, Clone)]
pub struct QuadraticBilevel {
    /// Inner map matrix, n×m.
    a: Point,
    /// Inner map offset, length n.
    b: Vec<f64>,
    /// Diagonal of the inner Hessian, length n, all entries > 0.
    h_diag: Vec<f64>,
    outer: OuterKind,
    /// Noise scales: outer gradients, inner gradient, inner Hessian.
    sigma_outer: f64,
    sigma_g: f64,
    sigma_hess: f64,
    /// Declared smoothness constant; defaults to max h_i but may be any
    /// valid upper bound (schedules and Neumann scaling depend on it).
    l_g_declared: f64,
}

impl QuadraticBilevel {
    pub fn new(a: Point, b: Vec<f64>, h_diag: Vec<f64>, outer: OuterKind) -> Result<Self> {
        let (n, m) = a.shape();
        if b.len() != n || h_diag.len() != n {
            return Err(Error::Usage("QuadraticBilevel: b/h_diag length must match rows(A)".into()));
        }
        if h_diag.iter().any(|&h| h <= 0.0) {
            return Err(Error::Usage("QuadraticBilevel: inner Hessian diagonal must be > 0".into()));
        }
        match &outer {
            OuterKind::Tracking { b_mat, c } => {
                if b_mat.shape() != (n, m) || c.len() != n {
                    return Err(Error::Usage("QuadraticBilevel: outer shapes must match A".into()));
                }
            }
            OuterKind::Linear { c } | OuterKind::SmoothRatio { c } => {
                if c.len() != n {
                    return Err(Error::Usage("QuadraticBilevel: outer target length must be n".into()));
                }
            }
        }
        let l_max = h_diag.iter().cloned().fold(f64::MIN, f64::max);
        Ok(QuadraticBilevel {
            a,
            b,
            h_diag,
            outer,
            sigma_outer: 0.0,
            sigma_g: 0.0,
            sigma_hess: 0.0,
            l_g_declared: l_max,
        })
    }

    /// Scalar instance `f = ½(x − y)², g = ½ mu (y − x)²` with `y*(x) = x`.
    pub fn scalar(mu: f64) -> Self {
        QuadraticBilevel::new(
            Point::new(vec![1.0], 1, 1).unwrap(),
            vec![0.0],
            vec![mu],
            OuterKind::Tracking { b_mat: Point::new(vec![1.0], 1, 1).unwrap(), c: vec![0.0] },
        )
        .unwrap()
    }

    /// `m`-dimensional convex instance with `y*(x) = x + b` and composite
    /// objective `½‖x − target‖²`, minimized over a constraint set at the
    /// projection of `target` (the target sits wherever the caller put it,
    /// inside or outside the set).
    pub fn tracking_to(target: &[f64], b: Vec<f64>) -> Result<Self> {
        let m = target.len();
        if b.len() != m {
            return Err(Error::Usage("tracking_to: b length must match target".into()));
        }
        // B = 2I, A = I: Q(x) = ½‖2x − (x + b) + c‖² = ½‖x − (b − c)‖², so
        // choose c = b − target.
        let c: Vec<f64> = (0..m).map(|i| b[i] - target[i]).collect();
        let eye = Point::identity(m);
        QuadraticBilevel::new(
            eye.clone(),
            b,
            vec![1.0; m],
            OuterKind::Tracking { b_mat: eye.scale(2.0), c },
        )
    }

    /// Nonconvex instance: `Q(x) = Σ φ((Ax + b − c)_i)` with bounded,
    /// nonconvex `φ`.
    pub fn smooth_ratio(a: Point, b: Vec<f64>, c: Vec<f64>) -> Result<Self> {
        let n = a.rows();
        let h = vec![1.0; n];
        QuadraticBilevel::new(a, b, h, OuterKind::SmoothRatio { c })
    }

    /// Linear composite `Q(x) = cᵀx` through an identity inner map with
    /// curvature `mu`; the constrained minimum sits at a vertex.
    pub fn linear(c: Vec<f64>, mu: f64) -> Self {
        let m = c.len();
        QuadraticBilevel::new(Point::identity(m), vec![0.0; m], vec![mu; m], OuterKind::Linear {
            c,
        })
        .unwrap()
    }

    pub fn with_noise(mut self, sigma_outer: f64, sigma_g: f64) -> Self {
        self.sigma_outer = sigma_outer;
        self.sigma_g = sigma_g;
        self
    }

    pub fn with_hessian_noise(mut self, sigma_hess: f64) -> Self {
        self.sigma_hess = sigma_hess;
        self
    }

    /// Override the declared smoothness constant (must still upper-bound
    /// the true Hessian spectrum for the Neumann factors to contract).
    pub fn with_l_g(mut self, l_g: f64) -> Self {
        assert!(
            l_g >= self.h_diag.iter().cloned().fold(f64::MIN, f64::max),
            "declared L_g below the true spectral bound"
        );
        self.l_g_declared = l_g;
        self
    }

    fn m(&self) -> usize {
        self.a.cols()
    }

    fn n(&self) -> usize {
        self.a.rows()
    }

    /// Exact inner solution `y*(x) = Ax + b`.
    pub fn y_star(&self, x: &Point) -> Point {
        let mut y = self.a.matvec(x.as_slice());
        for (yi, bi) in y.iter_mut().zip(&self.b) {
            *yi += bi;
        }
        Point::vector(y)
    }

    /// Residual `Bx − y + c` for the tracking outer, `y − c` for the ratio
    /// outer (x term absent), and the constant `c` for the linear outer.
    fn outer_residual(&self, x: &Point, y: &Point) -> Vec<f64> {
        match &self.outer {
            OuterKind::Tracking { b_mat, c } => {
                let mut r = b_mat.matvec(x.as_slice());
                for i in 0..r.len() {
                    r[i] += c[i] - y.as_slice()[i];
                }
                r
            }
            OuterKind::Linear { c } => c.clone(),
            OuterKind::SmoothRatio { c } => {
                y.as_slice().iter().zip(c).map(|(yi, ci)| yi - ci).collect()
            }
        }
    }

    /// Composite objective `Q(x) = f(x, y*(x))`.
    pub fn q_value(&self, x: &Point) -> f64 {
        let y = self.y_star(x);
        let r = self.outer_residual(x, &y);
        match &self.outer {
            OuterKind::Tracking { .. } => 0.5 * r.iter().map(|v| v * v).sum::<f64>(),
            OuterKind::Linear { c } => c.iter().zip(y.as_slice()).map(|(ci, yi)| ci * yi).sum(),
            OuterKind::SmoothRatio { .. } => r.iter().map(|&u| ratio_phi(u)).sum(),
        }
    }

    /// Exact composite gradient `∇Q(x)`.
    pub fn q_grad(&self, x: &Point) -> Point {
        let y = self.y_star(x);
        let r = self.outer_residual(x, &y);
        match &self.outer {
            OuterKind::Tracking { b_mat, .. } => {
                // ∇Q = (B − A)ᵀ (Bx − Ax − b + c); the residual already is
                // Bx − y* + c with y* = Ax + b.
                let bt = Point::vector(b_mat.matvec_t(&r));
                let at = Point::vector(self.a.matvec_t(&r));
                bt.sub(&at).expect("shapes fixed by construction")
            }
            OuterKind::Linear { c } => Point::vector(self.a.matvec_t(c)),
            OuterKind::SmoothRatio { .. } => {
                let fp: Vec<f64> = r.iter().map(|&u| ratio_phi_prime(u)).collect();
                Point::vector(self.a.matvec_t(&fp))
            }
        }
    }

    fn noisy(&self, mut v: Vec<f64>, sigma: f64, rng: &mut RngStream) -> Vec<f64> {
        if sigma > 0.0 {
            for vi in v.iter_mut() {
                *vi += sigma * rng.normal();
            }
        }
        v
    }
}

impl BilevelOracle for QuadraticBilevel {
    fn outer_shape(&self) -> (usize, usize) {
        (self.m(), 1)
    }

    fn inner_shape(&self) -> (usize, usize) {
        (self.n(), 1)
    }

    fn grad_x_f(&self, x: &Point, y: &Point, rng: &mut RngStream) -> Result<Point> {
        // One θ draw is an (m + n) Gaussian pair; grad_x_f uses the first
        // block, grad_y_f the second, so a replayed stream shares θ.
        let zx = self.noisy(vec![0.0; self.m()], self.sigma_outer, rng);
        let _zy = self.noisy(vec![0.0; self.n()], self.sigma_outer, rng);
        let r = self.outer_residual(x, y);
        let mut g = match &self.outer {
            OuterKind::Tracking { b_mat, .. } => b_mat.matvec_t(&r),
            OuterKind::Linear { .. } | OuterKind::SmoothRatio { .. } => vec![0.0; self.m()],
        };
        for i in 0..g.len() {
            g[i] += zx[i];
        }
        Ok(Point::vector(g))
    }

    fn grad_y_f(&self, x: &Point, y: &Point, rng: &mut RngStream) -> Result<Point> {
        let _zx = self.noisy(vec![0.0; self.m()], self.sigma_outer, rng);
        let zy = self.noisy(vec![0.0; self.n()], self.sigma_outer, rng);
        let r = self.outer_residual(x, y);
        let mut g: Vec<f64> = match &self.outer {
            OuterKind::Tracking { .. } => r.iter().map(|v| -v).collect(),
            OuterKind::Linear { .. } => r,
            OuterKind::SmoothRatio { .. } => r.iter().map(|&u| ratio_phi_prime(u)).collect(),
        };
        for i in 0..g.len() {
            g[i] += zy[i];
        }
        Ok(Point::vector(g))
    }

    fn grad_y_g(&self, x: &Point, y: &Point, rng: &mut RngStream) -> Result<Point> {
        let ys = self.y_star(x);
        let mut g: Vec<f64> = (0..self.n())
            .map(|i| self.h_diag[i] * (y.as_slice()[i] - ys.as_slice()[i]))
            .collect();
        g = self.noisy(g, self.sigma_g, rng);
        Ok(Point::vector(g))
    }

    fn hvp_yy_g(&self, _x: &Point, _y: &Point, v: &Point, rng: &mut RngStream) -> Result<Point> {
        // Sampled Hessian diag(h)·(1 + σ_H ω) with one scalar ω per draw:
        // mean-preserving, and linear in v for a fixed draw.
        let jitter = if self.sigma_hess > 0.0 { self.sigma_hess * rng.normal() } else { 0.0 };
        let g: Vec<f64> = (0..self.n())
            .map(|i| self.h_diag[i] * (1.0 + jitter) * v.as_slice()[i])
            .collect();
        Ok(Point::vector(g))
    }

    fn cross_hvp_xy_g(
        &self,
        _x: &Point,
        _y: &Point,
        v: &Point,
        _rng: &mut RngStream,
    ) -> Result<Point> {
        // ∇²_xy g = −Aᵀ diag(h), deterministic.
        let hv: Vec<f64> = (0..self.n()).map(|i| self.h_diag[i] * v.as_slice()[i]).collect();
        Ok(Point::vector(self.a.matvec_t(&hv)).scale(-1.0))
    }

    fn mu_g(&self) -> f64 {
        self.h_diag.iter().cloned().fold(f64::MAX, f64::min)
    }

    fn l_g(&self) -> f64 {
        self.l_g_declared
    }
}

impl ExactBilevel for QuadraticBilevel {
    fn pop_grad_x_f(&self, x: &Point, y: &Point) -> Result<Point> {
        let r = self.outer_residual(x, y);
        Ok(match &self.outer {
            OuterKind::Tracking { b_mat, .. } => Point::vector(b_mat.matvec_t(&r)),
            OuterKind::Linear { .. } | OuterKind::SmoothRatio { .. } => Point::zeros(self.m(), 1),
        })
    }

    fn pop_grad_y_f(&self, x: &Point, y: &Point) -> Result<Point> {
        let r = self.outer_residual(x, y);
        Ok(match &self.outer {
            OuterKind::Tracking { .. } => Point::vector(r.iter().map(|v| -v).collect()),
            OuterKind::Linear { .. } => Point::vector(r),
            OuterKind::SmoothRatio { .. } => {
                Point::vector(r.iter().map(|&u| ratio_phi_prime(u)).collect())
            }
        })
    }

    fn pop_hess_yy_g(&self, _x: &Point, _y: &Point) -> Result<DMatrix<f64>> {
        Ok(DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&self.h_diag)))
    }

    fn pop_cross_xy_g(&self, _x: &Point, _y: &Point) -> Result<DMatrix<f64>> {
        // −Aᵀ diag(h), m×n.
        let (n, m) = self.a.shape();
        let mut out = DMatrix::zeros(m, n);
        for i in 0..m {
            for j in 0..n {
                out[(i, j)] = -self.a.at(j, i) * self.h_diag[j];
            }
        }
        Ok(out)
    }
}

/// Outer objective for [`QuadraticCompositional`].
#[derive(Debug, Clone)]
pub enum CompOuter {
    /// `f(y) = ½‖y − c‖²`.
    Quadratic { c: Vec<f64> },
    /// `f(y) = ½ Σ w_i (y_i − c_i)² + Σ lin_i y_i`: anisotropic convex
    /// quadratic; `w_i = 0` rows make the composite linear in those
    /// coordinates, which keeps their gradients constant under mass moves.
    WeightedQuadratic { c: Vec<f64>, w: Vec<f64>, lin: Vec<f64> },
    /// `f(y) = Σ φ(y_i − c_i)`, bounded and nonconvex.
    SmoothRatio { c: Vec<f64> },
}

/// Compositional testbed with inner map `h(x; ξ) = Ax + b + σ_h ζ` and a
/// quadratic or smooth-ratio outer, so `C(x) = f(Ax + b)` is exact.
#[derive(Debug, Clone)]
pub struct QuadraticCompositional {
    a: Point,
    b: Vec<f64>,
    outer: CompOuter,
    sigma_h: f64,
    sigma_jac: f64,
    sigma_f: f64,
}

impl QuadraticCompositional {
    pub fn new(a: Point, b: Vec<f64>, outer: CompOuter) -> Result<Self> {
        let n = a.rows();
        if b.len() != n {
            return Err(Error::Usage("QuadraticCompositional: b length must match rows(A)".into()));
        }
        let c_len = match &outer {
            CompOuter::Quadratic { c } | CompOuter::SmoothRatio { c } => c.len(),
            CompOuter::WeightedQuadratic { c, w, lin } => {
                if w.len() != c.len() || lin.len() != c.len() {
                    return Err(Error::Usage(
                        "QuadraticCompositional: w and lin must match c length".into(),
                    ));
                }
                if w.iter().any(|&wi| wi < 0.0) {
                    return Err(Error::Usage(
                        "QuadraticCompositional: weights must be nonnegative".into(),
                    ));
                }
                c.len()
            }
        };
        if c_len != n {
            return Err(Error::Usage("QuadraticCompositional: target length must be n".into()));
        }
        Ok(QuadraticCompositional { a, b, outer, sigma_h: 0.0, sigma_jac: 0.0, sigma_f: 0.0 })
    }

    /// `C(x) = ½‖x − target‖²` (identity inner map): the constrained
    /// minimizer is the projection of `target` onto the feasible set.
    pub fn identity_tracking(target: &[f64]) -> Self {
        let m = target.len();
        QuadraticCompositional::new(
            Point::identity(m),
            vec![0.0; m],
            CompOuter::Quadratic { c: target.to_vec() },
        )
        .unwrap()
    }

    /// Rate testbed pairing with box bounds `[-1, 1]^{k+1}`: coordinate 0
    /// is curved (weight 1, target 0) and coordinates 1..=k are linear with
    /// gradient magnitudes log-spaced over `[gmin, gmax]`, alternating in
    /// sign. A misselected sign on a linear coordinate costs its gradient
    /// magnitude outright, and the log-uniform spacing keeps a constant
    /// density of coordinates near any error scale, so the tracked-gradient
    /// error — not the deterministic Frank-Wolfe term — sets the decay of
    /// the objective gap. Returns the problem and its exact minimizer.
    pub fn box_rate_testbed(k: usize, gmin: f64, gmax: f64) -> (Self, Point) {
        assert!(k >= 2 && gmin > 0.0 && gmax > gmin, "degenerate gradient spectrum");
        let m = 1 + k;
        let mut w = vec![0.0; m];
        let mut lin = vec![0.0; m];
        w[0] = 1.0;
        for j in 0..k {
            let f = j as f64 / (k - 1) as f64;
            let gamma = gmin * (gmax / gmin).powf(f);
            lin[1 + j] = if j % 2 == 0 { gamma } else { -gamma };
        }
        let x_star = Point::vector(
            lin.iter()
                .enumerate()
                .map(|(i, &l)| if i == 0 { 0.0 } else { -l.signum() })
                .collect(),
        );
        let prob = QuadraticCompositional::new(
            Point::identity(m),
            vec![0.0; m],
            CompOuter::WeightedQuadratic { c: vec![0.0; m], w, lin },
        )
        .unwrap();
        (prob, x_star)
    }

    pub fn with_noise(mut self, sigma_h: f64, sigma_f: f64) -> Self {
        self.sigma_h = sigma_h;
        self.sigma_f = sigma_f;
        self
    }

    pub fn with_jacobian_noise(mut self, sigma_jac: f64) -> Self {
        self.sigma_jac = sigma_jac;
        self
    }

    fn m(&self) -> usize {
        self.a.cols()
    }

    fn n(&self) -> usize {
        self.a.rows()
    }

    /// Population inner map `h̄(x) = Ax + b`.
    pub fn h_bar(&self, x: &Point) -> Point {
        let mut h = self.a.matvec(x.as_slice());
        for (hi, bi) in h.iter_mut().zip(&self.b) {
            *hi += bi;
        }
        Point::vector(h)
    }

    /// Composite objective `C(x) = f(h̄(x))`.
    pub fn c_value(&self, x: &Point) -> f64 {
        let h = self.h_bar(x);
        match &self.outer {
            CompOuter::Quadratic { c } => {
                0.5 * h.as_slice().iter().zip(c).map(|(hi, ci)| (hi - ci) * (hi - ci)).sum::<f64>()
            }
            CompOuter::WeightedQuadratic { c, w, lin } => h
                .as_slice()
                .iter()
                .zip(c)
                .zip(w.iter().zip(lin))
                .map(|((hi, ci), (wi, li))| 0.5 * wi * (hi - ci) * (hi - ci) + li * hi)
                .sum(),
            CompOuter::SmoothRatio { c } => {
                h.as_slice().iter().zip(c).map(|(hi, ci)| ratio_phi(hi - ci)).sum()
            }
        }
    }

    /// Exact composite gradient `∇C(x) = Aᵀ ∇f(h̄(x))`.
    pub fn c_grad(&self, x: &Point) -> Point {
        let h = self.h_bar(x);
        let fp: Vec<f64> = match &self.outer {
            CompOuter::Quadratic { c } => {
                h.as_slice().iter().zip(c).map(|(hi, ci)| hi - ci).collect()
            }
            CompOuter::WeightedQuadratic { c, w, lin } => h
                .as_slice()
                .iter()
                .zip(c)
                .zip(w.iter().zip(lin))
                .map(|((hi, ci), (wi, li))| wi * (hi - ci) + li)
                .collect(),
            CompOuter::SmoothRatio { c } => {
                h.as_slice().iter().zip(c).map(|(hi, ci)| ratio_phi_prime(hi - ci)).collect()
            }
        };
        Point::vector(self.a.matvec_t(&fp))
    }
}

impl CompositionalOracle for QuadraticCompositional {
    fn outer_shape(&self) -> (usize, usize) {
        (self.m(), 1)
    }

    fn inner_shape(&self) -> (usize, usize) {
        (self.n(), 1)
    }

    fn sample_h(&self, x: &Point, rng: &mut RngStream) -> Result<Point> {
        let mut h = self.h_bar(x).into_vec();
        if self.sigma_h > 0.0 {
            for hi in h.iter_mut() {
                *hi += self.sigma_h * rng.normal();
            }
        }
        Ok(Point::vector(h))
    }

    fn vjp_h(&self, _x: &Point, u: &Point, rng: &mut RngStream) -> Result<Point> {
        // Sampled Jacobian A·(1 + σ_J ω): unbiased, one scalar draw.
        let jitter = if self.sigma_jac > 0.0 { self.sigma_jac * rng.normal() } else { 0.0 };
        Ok(Point::vector(self.a.matvec_t(u.as_slice())).scale(1.0 + jitter))
    }

    fn grad_f(&self, y: &Point, rng: &mut RngStream) -> Result<Point> {
        let mut g: Vec<f64> = match &self.outer {
            CompOuter::Quadratic { c } => {
                y.as_slice().iter().zip(c).map(|(yi, ci)| yi - ci).collect()
            }
            CompOuter::WeightedQuadratic { c, w, lin } => y
                .as_slice()
                .iter()
                .zip(c)
                .zip(w.iter().zip(lin))
                .map(|((yi, ci), (wi, li))| wi * (yi - ci) + li)
                .collect(),
            CompOuter::SmoothRatio { c } => {
                y.as_slice().iter().zip(c).map(|(yi, ci)| ratio_phi_prime(yi - ci)).collect()
            }
        };
        if self.sigma_f > 0.0 {
            for gi in g.iter_mut() {
                *gi += self.sigma_f * rng.normal();
            }
        }
        Ok(Point::vector(g))
    }
}

impl ProblemMetrics for QuadraticBilevel {
    fn objective(&self, x: &Point) -> Option<f64> {
        Some(self.q_value(x))
    }

    fn exact_gradient(&self, x: &Point) -> Option<Point> {
        Some(self.q_grad(x))
    }

    fn inner_optimum(&self, x: &Point) -> Option<Point> {
        Some(self.y_star(x))
    }
}

impl ProblemMetrics for QuadraticCompositional {
    fn objective(&self, x: &Point) -> Option<f64> {
        Some(self.c_value(x))
    }

    fn exact_gradient(&self, x: &Point) -> Option<Point> {
        Some(self.c_grad(x))
    }

    fn inner_optimum(&self, x: &Point) -> Option<Point> {
        Some(self.h_bar(x))
    }
}
