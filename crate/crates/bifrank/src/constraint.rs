//! Constraint sets the solvers optimize over, with membership tests,
//! diameters, canonical vertices, and Euclidean projections.
//!
//! Projections exist only to support the projection-based baseline and
//! tests; the solvers themselves touch the sets exclusively through the
//! linear minimization oracle.

use crate::error::{Error, Result};
use crate::point::Point;
use nalgebra::DMatrix;

/// Relative tolerance for membership checks. Repeated convex combinations
/// accumulate rounding, so exact membership is too strict.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

/// Which convex body, plus its parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum SetKind {
    /// `‖x‖₁ ≤ radius` over the flattened entries.
    L1Ball { radius: f64 },
    /// `‖X‖_* ≤ radius` (sum of singular values).
    NuclearNormBall { radius: f64 },
    /// Unit probability simplex `{x ≥ 0, Σx = 1}`.
    Simplex,
    /// Coordinatewise box `lo ≤ x ≤ hi`.
    Box { lo: Vec<f64>, hi: Vec<f64> },
}

/// A constraint set together with the Point shape it expects.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSet {
    pub kind: SetKind,
    pub rows: usize,
    pub cols: usize,
}

impl ConstraintSet {
    pub fn l1_ball(radius: f64, dim: usize) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::Config(format!("l1 ball radius must be positive, got {radius}")));
        }
        Ok(ConstraintSet { kind: SetKind::L1Ball { radius }, rows: dim, cols: 1 })
    }

    pub fn nuclear_ball(radius: f64, rows: usize, cols: usize) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::Config(format!(
                "nuclear ball radius must be positive, got {radius}"
            )));
        }
        Ok(ConstraintSet { kind: SetKind::NuclearNormBall { radius }, rows, cols })
    }

    pub fn simplex(dim: usize) -> Self {
        ConstraintSet { kind: SetKind::Simplex, rows: dim, cols: 1 }
    }

    pub fn box_set(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::Config("box bounds must have equal length".into()));
        }
        if lo.iter().zip(&hi).any(|(a, b)| a > b) {
            return Err(Error::Config("box requires lo <= hi coordinatewise".into()));
        }
        let dim = lo.len();
        Ok(ConstraintSet { kind: SetKind::Box { lo, hi }, rows: dim, cols: 1 })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn dim(&self) -> usize {
        self.rows * self.cols
    }

    /// Exact Euclidean (Frobenius) diameter of the set.
    pub fn diameter(&self) -> f64 {
        match &self.kind {
            SetKind::L1Ball { radius } => 2.0 * radius,
            SetKind::NuclearNormBall { radius } => 2.0 * radius,
            SetKind::Simplex => std::f64::consts::SQRT_2,
            SetKind::Box { lo, hi } => lo
                .iter()
                .zip(hi)
                .map(|(a, b)| (b - a) * (b - a))
                .sum::<f64>()
                .sqrt(),
        }
    }

    /// Scale used to turn the relative membership tolerance into an
    /// absolute slack.
    fn tol_scale(&self) -> f64 {
        match &self.kind {
            SetKind::L1Ball { radius } | SetKind::NuclearNormBall { radius } => radius.max(1.0),
            SetKind::Simplex => 1.0,
            SetKind::Box { lo, hi } => lo
                .iter()
                .zip(hi)
                .map(|(a, b)| a.abs().max(b.abs()))
                .fold(1.0, f64::max),
        }
    }

    /// Membership within `tol` relative slack (use [`MEMBERSHIP_TOL`]).
    pub fn contains(&self, x: &Point, tol: f64) -> bool {
        if x.shape() != self.shape() || !x.is_finite() {
            return false;
        }
        let slack = tol * self.tol_scale();
        match &self.kind {
            SetKind::L1Ball { radius } => x.norm_l1() <= radius + slack,
            SetKind::NuclearNormBall { radius } => nuclear_norm(x) <= radius + slack,
            SetKind::Simplex => {
                x.as_slice().iter().all(|&v| v >= -slack)
                    && (x.as_slice().iter().sum::<f64>() - 1.0).abs() <= slack
            }
            SetKind::Box { lo, hi } => x
                .as_slice()
                .iter()
                .zip(lo.iter().zip(hi))
                .all(|(&v, (&a, &b))| v >= a - slack && v <= b + slack),
        }
    }

    /// Fixed deterministic vertex used to initialize solvers and to answer
    /// the linear oracle on a zero gradient.
    pub fn canonical_vertex(&self) -> Point {
        match &self.kind {
            SetKind::L1Ball { radius } => Point::basis(self.rows, self.cols, 0, *radius),
            SetKind::NuclearNormBall { radius } => Point::basis(self.rows, self.cols, 0, *radius),
            SetKind::Simplex => Point::basis(self.rows, self.cols, 0, 1.0),
            SetKind::Box { lo, .. } => Point::vector(lo.clone()),
        }
    }

    /// Euclidean projection onto the set.
    pub fn project(&self, x: &Point) -> Result<Point> {
        if x.shape() != self.shape() {
            return Err(Error::Usage("project: point shape does not match set".into()));
        }
        if !x.is_finite() {
            return Err(Error::Numeric("project: non-finite input".into()));
        }
        match &self.kind {
            SetKind::L1Ball { radius } => Ok(project_l1(x, *radius)),
            SetKind::NuclearNormBall { radius } => project_nuclear(x, *radius),
            SetKind::Simplex => Ok(Point::vector(project_simplex(x.as_slice(), 1.0))),
            SetKind::Box { lo, hi } => {
                let data = x
                    .as_slice()
                    .iter()
                    .zip(lo.iter().zip(hi))
                    .map(|(&v, (&a, &b))| v.clamp(a, b))
                    .collect();
                Point::new(data, self.rows, self.cols)
            }
        }
    }
}

/// Sum of singular values via a full decomposition.
pub fn nuclear_norm(x: &Point) -> f64 {
    let m = DMatrix::from_row_slice(x.rows(), x.cols(), x.as_slice());
    m.singular_values().iter().sum()
}

/// Projection onto `{z : z ≥ 0, Σz ≤ total}` of a nonnegative vector,
/// by the sorted soft-threshold rule. Returns the input when already inside.
fn project_simplex_nonneg(v: &[f64], total: f64) -> Vec<f64> {
    let sum: f64 = v.iter().sum();
    if sum <= total {
        return v.to_vec();
    }
    // Find the threshold tau with Σ max(v_i - tau, 0) = total.
    let mut sorted: Vec<f64> = v.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cumsum = 0.0;
    let mut tau = 0.0;
    for (i, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let candidate = (cumsum - total) / (i as f64 + 1.0);
        if i + 1 == sorted.len() || sorted[i + 1] <= candidate {
            tau = candidate;
            break;
        }
    }
    v.iter().map(|&u| (u - tau).max(0.0)).collect()
}

/// Projection onto the simplex `{z ≥ 0, Σz = total}`.
pub fn project_simplex(v: &[f64], total: f64) -> Vec<f64> {
    // Standard sort-based algorithm; differs from the nonneg variant in
    // that the equality constraint always binds.
    let mut sorted: Vec<f64> = v.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cumsum = 0.0;
    let mut tau = 0.0;
    for (i, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let candidate = (cumsum - total) / (i as f64 + 1.0);
        if i + 1 == sorted.len() || sorted[i + 1] <= candidate {
            tau = candidate;
            break;
        }
    }
    v.iter().map(|&u| (u - tau).max(0.0)).collect()
}

/// Projection onto the ℓ1 ball of the given radius (sorted soft-threshold).
pub fn project_l1(x: &Point, radius: f64) -> Point {
    if x.norm_l1() <= radius {
        return x.clone();
    }
    let abs: Vec<f64> = x.as_slice().iter().map(|v| v.abs()).collect();
    let shrunk = project_simplex_nonneg(&abs, radius);
    let data = x
        .as_slice()
        .iter()
        .zip(&shrunk)
        .map(|(&v, &m)| v.signum() * m)
        .collect();
    Point::new(data, x.rows(), x.cols()).expect("shape preserved")
}

/// Projection onto the nuclear-norm ball: full SVD, then project the
/// singular values onto the simplex of radius `radius`.
pub fn project_nuclear(x: &Point, radius: f64) -> Result<Point> {
    let m = DMatrix::from_row_slice(x.rows(), x.cols(), x.as_slice());
    let svd = m.svd(true, true);
    let sigma: Vec<f64> = svd.singular_values.iter().copied().collect();
    if sigma.iter().sum::<f64>() <= radius {
        return Ok(x.clone());
    }
    let shrunk = project_simplex(&sigma, radius);
    let u = svd.u.ok_or_else(|| Error::Numeric("svd did not return U".into()))?;
    let vt = svd.v_t.ok_or_else(|| Error::Numeric("svd did not return V^T".into()))?;
    let k = shrunk.len();
    let mut out = Point::zeros(x.rows(), x.cols());
    for r in 0..x.rows() {
        for c in 0..x.cols() {
            let mut acc = 0.0;
            for (j, s) in shrunk.iter().enumerate().take(k) {
                acc += u[(r, j)] * s * vt[(j, c)];
            }
            out.set(r, c, acc);
        }
    }
    if !out.is_finite() {
        return Err(Error::Numeric("nuclear projection produced non-finite entries".into()));
    }
    Ok(out)
}
