//! Generalized truncated multivariate normal `TN_p(μ, Σ, R̃, c, d)`: the
//! normal law `N(μ, Σ)` restricted to `c ≤ R̃ w ≤ d` (element-wise).
//!
//! Sampling whitens `w = μ + L z` with `Σ = L Lᵀ`, so the constraints become
//! `c − R̃μ ≤ (R̃L) z ≤ d − R̃μ` and each full conditional of `z_j` is a
//! standard normal truncated to the intersection of the row intervals. Any
//! number of rows is allowed, including `m > p` and rank-deficient `R̃`.

mod univariate;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::constraints::{ConstraintSet, FEASIBILITY_TOL};
use crate::error::{Error, Result};

pub use univariate::{sample_truncated_std_normal, TAIL_THRESHOLD, UNIFORM_WIDTH};

/// Coefficients this small relative to the row norm are treated as zero.
const ZERO_COEF: f64 = 1e-13;
/// Empty conditional intervals narrower than this (relative) are rounding noise.
const INTERVAL_SLOP: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct TmvnSpec {
    mu: DVector<f64>,
    sigma: DMatrix<f64>,
    chol: DMatrix<f64>,
    rt: DMatrix<f64>,
    lower: DVector<f64>,
    upper: DVector<f64>,
    witness: DVector<f64>,
}

impl TmvnSpec {
    /// Validates the inputs and certifies that the truncation region is non-empty.
    pub fn new(
        mu: DVector<f64>,
        sigma: DMatrix<f64>,
        rt: DMatrix<f64>,
        lower: DVector<f64>,
        upper: DVector<f64>,
    ) -> Result<Self> {
        let p = mu.len();
        if p == 0 || sigma.nrows() != p || sigma.ncols() != p {
            return Err(Error::DimensionMismatch("sigma must be p x p".into()));
        }
        if rt.ncols() != p || rt.nrows() != lower.len() || rt.nrows() != upper.len() {
            return Err(Error::DimensionMismatch(format!(
                "R̃ is {}x{}, bounds have lengths {} and {}",
                rt.nrows(),
                rt.ncols(),
                lower.len(),
                upper.len()
            )));
        }
        for k in 0..lower.len() {
            if lower[k].is_nan() || upper[k].is_nan() || lower[k] >= upper[k] {
                return Err(Error::EmptyInterval {
                    lower: lower[k],
                    upper: upper[k],
                });
            }
        }
        let chol = cholesky_lower(&sigma)?;
        let witness = Self::stacked_set(&rt, &lower, &upper)?.find_feasible_point(10_000, FEASIBILITY_TOL)?;
        Ok(TmvnSpec {
            mu,
            sigma,
            chol,
            rt,
            lower,
            upper,
            witness,
        })
    }

    /// Unconstrained `N(μ, Σ)`.
    pub fn unconstrained(mu: DVector<f64>, sigma: DMatrix<f64>) -> Result<Self> {
        let p = mu.len();
        Self::new(mu, sigma, DMatrix::zeros(0, p), DVector::zeros(0), DVector::zeros(0))
    }

    /// `N(μ, Σ)` restricted to a constraint set (equalities are not allowed here).
    pub fn from_constraints(mu: DVector<f64>, sigma: DMatrix<f64>, cs: &ConstraintSet) -> Result<Self> {
        if cs.num_equality() > 0 {
            return Err(Error::InvalidConfig(
                "equality rows must be eliminated before building a TMVN".into(),
            ));
        }
        let m = cs.num_rows();
        Self::new(
            mu,
            sigma,
            cs.matrix().clone(),
            cs.rhs().clone(),
            DVector::from_element(m, f64::INFINITY),
        )
    }

    /// Lower/upper bounds rewritten as a one-sided system over the finite ends.
    fn stacked_set(rt: &DMatrix<f64>, lower: &DVector<f64>, upper: &DVector<f64>) -> Result<ConstraintSet> {
        let p = rt.ncols();
        let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
        for k in 0..rt.nrows() {
            let row: Vec<f64> = rt.row(k).iter().copied().collect();
            if lower[k].is_finite() {
                rows.push((row.clone(), lower[k]));
            }
            if upper[k].is_finite() {
                rows.push((row.iter().map(|v| -v).collect(), -upper[k]));
            }
        }
        if rows.is_empty() {
            return Ok(ConstraintSet::unconstrained(p));
        }
        let r = DMatrix::from_fn(rows.len(), p, |i, j| rows[i].0[j]);
        let b = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.1));
        ConstraintSet::new(r, b, 0)
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn constraint_matrix(&self) -> &DMatrix<f64> {
        &self.rt
    }

    pub fn lower(&self) -> &DVector<f64> {
        &self.lower
    }

    pub fn upper(&self) -> &DVector<f64> {
        &self.upper
    }

    /// A point of the truncation region found at construction.
    pub fn feasible_point(&self) -> &DVector<f64> {
        &self.witness
    }

    /// Largest bound violation of `w`, on the row-normalized scale.
    pub fn max_violation(&self, w: &DVector<f64>) -> f64 {
        max_band_violation(&self.rt, &self.lower, &self.upper, w)
    }

    pub fn contains(&self, w: &DVector<f64>, tol: f64) -> bool {
        self.max_violation(w) <= tol
    }
}

/// Lower Cholesky factor of a symmetric positive-definite matrix.
pub fn cholesky_lower(sigma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let sym = 0.5 * (sigma + sigma.transpose());
    sym.cholesky()
        .map(|c| c.l())
        .ok_or(Error::NotPositiveDefinite("covariance"))
}

pub(crate) fn max_band_violation(
    rt: &DMatrix<f64>,
    lower: &DVector<f64>,
    upper: &DVector<f64>,
    w: &DVector<f64>,
) -> f64 {
    let vals = rt * w;
    (0..rt.nrows())
        .map(|k| {
            let norm = rt.row(k).norm();
            if norm == 0.0 {
                return if lower[k] <= 0.0 && upper[k] >= 0.0 { 0.0 } else { f64::INFINITY };
            }
            let v = vals[k];
            ((lower[k] - v) / norm).max((v - upper[k]) / norm).max(0.0)
        })
        .fold(0.0, f64::max)
}

/// Coordinate-wise Gibbs engine in whitened coordinates.
///
/// Holds the chain state `z` and the cached row values `v = (R̃L) z`. Row bounds
/// can be replaced between sweeps, which the slice sampler uses for its
/// data-driven rows.
#[derive(Debug, Clone)]
pub struct WhitenedGibbs {
    mu: DVector<f64>,
    chol: DMatrix<f64>,
    rows: DMatrix<f64>,
    row_norms: Vec<f64>,
    shift: DVector<f64>,
    lo: DVector<f64>,
    hi: DVector<f64>,
    z: DVector<f64>,
    v: DVector<f64>,
}

impl WhitenedGibbs {
    /// `chol` is the lower Cholesky factor of Σ; `init` is in the original coordinates.
    pub fn new(
        mu: DVector<f64>,
        chol: DMatrix<f64>,
        rt: &DMatrix<f64>,
        lower: &DVector<f64>,
        upper: &DVector<f64>,
        init: &DVector<f64>,
    ) -> Result<Self> {
        let p = mu.len();
        if chol.nrows() != p || rt.ncols() != p || init.len() != p {
            return Err(Error::DimensionMismatch("whitened Gibbs inputs".into()));
        }
        let rows = rt * &chol;
        let row_norms = (0..rows.nrows()).map(|k| rows.row(k).norm()).collect();
        let shift = rt * &mu;
        let z = chol
            .solve_lower_triangular(&(init - &mu))
            .ok_or(Error::NotPositiveDefinite("covariance factor"))?;
        let v = &rows * &z;
        let mut engine = WhitenedGibbs {
            mu,
            chol,
            rows,
            row_norms,
            shift,
            lo: DVector::zeros(rt.nrows()),
            hi: DVector::zeros(rt.nrows()),
            z,
            v,
        };
        for k in 0..rt.nrows() {
            engine.set_bounds(k, lower[k], upper[k]);
        }
        Ok(engine)
    }

    pub fn num_rows(&self) -> usize {
        self.rows.nrows()
    }

    /// Replaces the bounds `lower ≤ (R̃ w)_k ≤ upper` of row `k`.
    pub fn set_bounds(&mut self, k: usize, lower: f64, upper: f64) {
        self.lo[k] = lower - self.shift[k];
        self.hi[k] = upper - self.shift[k];
    }

    /// One ascending sweep over all coordinates.
    pub fn sweep<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        self.v = &self.rows * &self.z;
        let m = self.rows.nrows();
        for j in 0..self.z.len() {
            let zj = self.z[j];
            let mut lo = f64::NEG_INFINITY;
            let mut hi = f64::INFINITY;
            let col = self.rows.column(j);
            for k in 0..m {
                let a = col[k];
                if a.abs() <= ZERO_COEF * self.row_norms[k] {
                    continue;
                }
                let rest = self.v[k] - a * zj;
                let (from, to) = ((self.lo[k] - rest) / a, (self.hi[k] - rest) / a);
                if a > 0.0 {
                    lo = lo.max(from);
                    hi = hi.min(to);
                } else {
                    lo = lo.max(to);
                    hi = hi.min(from);
                }
            }
            let next = if lo < hi {
                univariate::draw(lo, hi, rng)
            } else if lo - hi <= INTERVAL_SLOP * (1.0 + lo.abs().max(hi.abs())) {
                0.5 * (lo + hi)
            } else {
                return Err(Error::EmptyConditionalInterval {
                    coord: j,
                    lower: lo,
                    upper: hi,
                });
            };
            let delta = next - zj;
            if delta != 0.0 {
                self.v.axpy(delta, &col, 1.0);
                self.z[j] = next;
            }
        }
        Ok(())
    }

    /// Current state in the original coordinates.
    pub fn state(&self) -> DVector<f64> {
        &self.mu + &self.chol * &self.z
    }
}

/// Stateful sampler for a validated [`TmvnSpec`].
#[derive(Debug, Clone)]
pub struct TmvnSampler {
    engine: WhitenedGibbs,
}

impl TmvnSampler {
    pub fn new(spec: &TmvnSpec, init: &DVector<f64>) -> Result<Self> {
        if init.len() != spec.dim() {
            return Err(Error::DimensionMismatch("init has wrong length".into()));
        }
        let violation = spec.max_violation(init);
        if violation > FEASIBILITY_TOL {
            return Err(Error::Infeasible(format!(
                "initial point violates the truncation region by {violation:e}"
            )));
        }
        let engine = WhitenedGibbs::new(
            spec.mu.clone(),
            spec.chol.clone(),
            &spec.rt,
            &spec.lower,
            &spec.upper,
            init,
        )?;
        Ok(TmvnSampler { engine })
    }

    pub fn sweep<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        self.engine.sweep(rng)
    }

    pub fn current(&self) -> DVector<f64> {
        self.engine.state()
    }
}

/// Runs `n_iter` Gibbs sweeps from `init` and returns every draw as a row.
pub fn gibbs_sample<R: Rng + ?Sized>(
    spec: &TmvnSpec,
    init: &DVector<f64>,
    n_iter: usize,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    if n_iter == 0 {
        return Err(Error::InvalidConfig("n_iter must be at least 1".into()));
    }
    let mut sampler = TmvnSampler::new(spec, init)?;
    let mut out = DMatrix::zeros(n_iter, spec.dim());
    for t in 0..n_iter {
        sampler.sweep(rng)?;
        out.row_mut(t).copy_from(&sampler.current().transpose());
    }
    Ok(out)
}
