//! Posterior samplers for constrained regression.
//!
//! * [`fit_lm`]: Gibbs sampler for the Gaussian linear model, alternating a
//!   truncated-normal draw of β given σ² with a conjugate gamma draw of 1/σ².
//! * [`fit_glm`]: product slice sampler for any canonical-link family. Each
//!   likelihood factor `exp(−Ψ(η_i))` gets a uniform auxiliary variable, which
//!   turns the β conditional into a truncated normal whose region gains one
//!   interval row per observation.
//! * [`estimate_ergodicity_bound`]: Monte-Carlo estimate of the minorization
//!   constant `h`, giving the bound `r ≤ 1 − h` on the geometric rate.
//!
//! Binding rows are removed up front through [`ReparamMap`]; the chain runs in
//! the reduced coordinates γ and every retained draw is mapped back to β and
//! audited against the user's constraint set.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand::distr::Open01;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::Serialize;

use crate::analysis::batch_means_se;
use crate::constraints::{ConstraintSet, FEASIBILITY_TOL};
use crate::error::{Error, Result};
use crate::glm::{mle, Dataset, GlmFamily};
use crate::tmvn::{cholesky_lower, WhitenedGibbs};

/// Prior scale used by [`PriorSpec::vague`].
pub const VAGUE_SCALE: f64 = 100.0;
/// Gamma shape and rate used by [`PriorSpec::vague`].
pub const VAGUE_GAMMA: f64 = 0.01;

const FEASIBLE_POINT_SWEEPS: usize = 10_000;

/// Prior on the error precision of the linear model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Precision {
    /// `1/σ² ~ Gamma(shape a, rate b)`.
    Gamma { a: f64, b: f64 },
    /// σ² held at a known value.
    Fixed { sigma2: f64 },
}

/// Truncated normal prior `TN(μ₁, Σ₁)` on the constraint region, plus the
/// precision prior for the linear model. Always given in β coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorSpec {
    pub mu1: DVector<f64>,
    pub sigma1: DMatrix<f64>,
    pub precision: Precision,
}

impl PriorSpec {
    pub fn new(mu1: DVector<f64>, sigma1: DMatrix<f64>, precision: Precision) -> Result<Self> {
        let prior = PriorSpec { mu1, sigma1, precision };
        prior.check()?;
        Ok(prior)
    }

    /// `μ₁ = 0`, `Σ₁ = c₀² I` with `c₀ = 100`, `a = b = 0.01`.
    pub fn vague(p: usize) -> Self {
        Self::isotropic(p, VAGUE_SCALE * VAGUE_SCALE)
    }

    /// `μ₁ = 0`, `Σ₁ = c² I` with the vague gamma precision prior.
    pub fn isotropic(p: usize, variance: f64) -> Self {
        PriorSpec {
            mu1: DVector::zeros(p),
            sigma1: DMatrix::identity(p, p) * variance,
            precision: Precision::Gamma {
                a: VAGUE_GAMMA,
                b: VAGUE_GAMMA,
            },
        }
    }

    /// `μ₁ = β̂` (unconstrained MLE) and `Σ₁ = I(β̂)⁻¹`.
    pub fn empirical_bayes(family: GlmFamily, data: &Dataset) -> Result<Self> {
        let fit = mle(family, data)?;
        let cov = fit
            .fisher
            .clone()
            .cholesky()
            .ok_or(Error::NotPositiveDefinite("Fisher information at the MLE"))?
            .inverse();
        Ok(PriorSpec {
            mu1: fit.beta,
            sigma1: symmetrize(cov),
            precision: Precision::Gamma {
                a: VAGUE_GAMMA,
                b: VAGUE_GAMMA,
            },
        })
    }

    pub fn with_precision(mut self, precision: Precision) -> Self {
        self.precision = precision;
        self
    }

    pub fn dim(&self) -> usize {
        self.mu1.len()
    }

    fn check(&self) -> Result<()> {
        let p = self.mu1.len();
        if self.sigma1.nrows() != p || self.sigma1.ncols() != p {
            return Err(Error::DimensionMismatch("prior covariance must be p × p".into()));
        }
        if self.sigma1.clone().cholesky().is_none() {
            return Err(Error::NotPositiveDefinite("prior covariance"));
        }
        match self.precision {
            Precision::Gamma { a, b } if !(a > 0.0 && b > 0.0) => {
                Err(Error::InvalidConfig("gamma prior needs a > 0 and b > 0".into()))
            }
            Precision::Fixed { sigma2 } if !(sigma2 > 0.0) => {
                Err(Error::InvalidConfig("fixed error variance must be positive".into()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SamplerConfig {
    pub n_iter: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub n_chains: usize,
    /// TMVN sweeps per outer iteration.
    pub inner_sweeps: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            n_iter: 12_000,
            burn_in: 2_000,
            thin: 2,
            seed: 0,
            n_chains: 2,
            inner_sweeps: 1,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_iter <= self.burn_in {
            return Err(Error::InvalidConfig("n_iter must exceed burn_in".into()));
        }
        if self.thin == 0 || self.n_chains == 0 || self.inner_sweeps == 0 {
            return Err(Error::InvalidConfig(
                "thin, n_chains and inner_sweeps must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Retained draws per chain.
    pub fn retained_per_chain(&self) -> usize {
        (self.n_iter - self.burn_in).div_ceil(self.thin)
    }

    fn keeps(&self, t: usize) -> bool {
        t >= self.burn_in && (t - self.burn_in).is_multiple_of(self.thin)
    }

    fn chain_rng(&self, chain: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(chain as u64);
        rng
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SampleMeta {
    pub config: SamplerConfig,
    pub family: GlmFamily,
    pub prior_precision: Option<Precision>,
    pub num_constraints: usize,
    pub num_equality: usize,
    /// Rows checked against the user constraints; equals the number of draws.
    pub audited: usize,
    pub max_violation: f64,
    pub draws_per_chain: usize,
}

/// Retained draws in the original coordinates, chains concatenated in order.
#[derive(Debug, Clone)]
pub struct PosteriorSamples {
    pub draws: DMatrix<f64>,
    pub sigma2_draws: Option<DVector<f64>>,
    pub names: Vec<String>,
    pub meta: SampleMeta,
}

impl PosteriorSamples {
    pub fn num_draws(&self) -> usize {
        self.draws.nrows()
    }

    pub fn dim(&self) -> usize {
        self.draws.ncols()
    }

    pub fn mean(&self) -> DVector<f64> {
        self.draws.row_mean().transpose()
    }

    /// Draws belonging to one chain.
    pub fn chain(&self, c: usize) -> DMatrix<f64> {
        let len = self.meta.draws_per_chain;
        self.draws.rows(c * len, len).into_owned()
    }
}

/// The sampling problem in reduced coordinates: `β = Aγ + ν`, linear predictor
/// `Uγ + shift`, inequality rows `Gγ ≥ g` and a Gaussian prior on γ.
struct Reduced {
    a: DMatrix<f64>,
    nu: DVector<f64>,
    u: DMatrix<f64>,
    shift: DVector<f64>,
    g: DMatrix<f64>,
    gb: DVector<f64>,
    prior_mean: DVector<f64>,
    prior_prec: DMatrix<f64>,
    init: DVector<f64>,
}

impl Reduced {
    fn new(data: &Dataset, cs: &ConstraintSet, prior: &PriorSpec) -> Result<Self> {
        let p = data.p();
        if cs.dim() != p || prior.dim() != p {
            return Err(Error::DimensionMismatch(format!(
                "design has {} columns, constraints {}, prior {}",
                p,
                cs.dim(),
                prior.dim()
            )));
        }
        prior.check()?;
        let start = cs.find_feasible_point(FEASIBLE_POINT_SWEEPS, FEASIBILITY_TOL)?;
        let prec_beta = spd_inverse(&prior.sigma1, "prior covariance")?;

        if cs.num_equality() == 0 {
            let (g, gb) = cs.inequality_block();
            return Ok(Reduced {
                a: DMatrix::identity(p, p),
                nu: DVector::zeros(p),
                u: data.x.clone(),
                shift: data.offset.clone(),
                g,
                gb,
                prior_mean: prior.mu1.clone(),
                prior_prec: prec_beta,
                init: start,
            });
        }

        let map = cs.eliminate_equalities(&data.x)?;
        if map.alpha == 0 {
            return Err(Error::InvalidConfig(
                "the equality rows determine every coefficient".into(),
            ));
        }
        // condition the β prior on the affine subspace
        let at_prec = map.a.transpose() * &prec_beta;
        let prior_prec = symmetrize(&at_prec * &map.a);
        let rhs = &at_prec * (&prior.mu1 - &map.nu);
        let prior_mean = prior_prec
            .clone()
            .cholesky()
            .ok_or(Error::NotPositiveDefinite("reduced prior precision"))?
            .solve(&rhs);
        let init = map.to_gamma(&start);
        Ok(Reduced {
            shift: &map.delta + &data.offset,
            u: map.u.clone(),
            g: map.d.clone(),
            gb: map.w.clone(),
            a: map.a,
            nu: map.nu,
            prior_mean,
            prior_prec,
            init,
        })
    }

    fn dim(&self) -> usize {
        self.a.ncols()
    }

    fn to_beta(&self, gamma: &DVector<f64>) -> DVector<f64> {
        &self.a * gamma + &self.nu
    }
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

fn spd_inverse(m: &DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>> {
    Ok(symmetrize(
        m.clone().cholesky().ok_or(Error::NotPositiveDefinite(what))?.inverse(),
    ))
}

/// Lower factor `L` with `L Lᵀ = P⁻¹` for a precision matrix `P`.
fn covariance_factor(prec: &DMatrix<f64>, what: &'static str) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let cov = spd_inverse(prec, what)?;
    let l = cholesky_lower(&cov)?;
    Ok((cov, l))
}

struct ChainOutput {
    draws: Vec<DVector<f64>>,
    sigma2: Vec<f64>,
}

fn run_chains<F>(cfg: &SamplerConfig, chain: F) -> Result<Vec<ChainOutput>>
where
    F: Fn(&mut ChaCha8Rng) -> Result<ChainOutput> + Sync,
{
    (0..cfg.n_chains)
        .into_par_iter()
        .map(|c| chain(&mut cfg.chain_rng(c)))
        .collect()
}

fn assemble(
    outputs: Vec<ChainOutput>,
    data: &Dataset,
    cs: &ConstraintSet,
    cfg: &SamplerConfig,
    family: GlmFamily,
    precision: Option<Precision>,
) -> Result<PosteriorSamples> {
    let per_chain = cfg.retained_per_chain();
    let total = per_chain * outputs.len();
    let p = data.p();
    let mut draws = DMatrix::zeros(total, p);
    let mut sigma2 = Vec::with_capacity(total);
    let mut worst = 0.0f64;
    let mut row = 0;
    for out in outputs {
        for beta in out.draws {
            let violation = cs.max_violation(&beta);
            if !(violation <= FEASIBILITY_TOL) {
                return Err(Error::ConstraintViolation { row, slack: -violation });
            }
            worst = worst.max(violation);
            draws.set_row(row, &beta.transpose());
            row += 1;
        }
        sigma2.extend(out.sigma2);
    }
    debug_assert_eq!(row, total);
    Ok(PosteriorSamples {
        draws,
        sigma2_draws: precision.map(|_| DVector::from_vec(sigma2)),
        names: data.names.clone(),
        meta: SampleMeta {
            config: *cfg,
            family,
            prior_precision: precision,
            num_constraints: cs.num_rows(),
            num_equality: cs.num_equality(),
            audited: row,
            max_violation: worst,
            draws_per_chain: per_chain,
        },
    })
}

/// Gibbs sampler for `y = Xβ + offset + ε`, `ε ~ N(0, σ² I)`, with β
/// restricted to the constraint set.
pub fn fit_lm(data: &Dataset, cs: &ConstraintSet, prior: &PriorSpec, cfg: &SamplerConfig) -> Result<PosteriorSamples> {
    cfg.validate()?;
    data.check_family(GlmFamily::Gaussian)?;
    let red = Reduced::new(data, cs, prior)?;
    let n = data.n() as f64;
    let y = &data.y - &red.shift;
    let utu = red.u.transpose() * &red.u;
    let uty = red.u.transpose() * &y;
    let prior_term = &red.prior_prec * &red.prior_mean;
    let (g, gb) = (&red.g, &red.gb);
    let upper = DVector::from_element(gb.len(), f64::INFINITY);

    // conditional of γ given σ²: mean and lower covariance factor
    let conditional = |sigma2: f64| -> Result<(DVector<f64>, DMatrix<f64>)> {
        let prec = symmetrize(&utu / sigma2 + &red.prior_prec);
        let (cov, l) = covariance_factor(&prec, "conditional precision of β")?;
        Ok((&cov * (&prior_term + &uty / sigma2), l))
    };
    let rss = |gamma: &DVector<f64>| (&y - &red.u * gamma).norm_squared();

    let chain = |rng: &mut ChaCha8Rng| -> Result<ChainOutput> {
        let mut gamma = red.init.clone();
        let mut out = ChainOutput {
            draws: Vec::with_capacity(cfg.retained_per_chain()),
            sigma2: Vec::with_capacity(cfg.retained_per_chain()),
        };
        match prior.precision {
            Precision::Fixed { sigma2 } => {
                let (mean, l) = conditional(sigma2)?;
                let mut engine = WhitenedGibbs::new(mean, l, g, gb, &upper, &gamma)?;
                for t in 0..cfg.n_iter {
                    for _ in 0..cfg.inner_sweeps {
                        engine.sweep(rng)?;
                    }
                    if cfg.keeps(t) {
                        out.draws.push(red.to_beta(&engine.state()));
                        out.sigma2.push(sigma2);
                    }
                }
            }
            Precision::Gamma { a, b } => {
                let dof = n.max(1.0);
                let mut sigma2 = (rss(&gamma) / dof).max(f64::MIN_POSITIVE);
                for t in 0..cfg.n_iter {
                    let (mean, l) = conditional(sigma2)?;
                    let mut engine = WhitenedGibbs::new(mean, l, g, gb, &upper, &gamma)?;
                    for _ in 0..cfg.inner_sweeps {
                        engine.sweep(rng)?;
                    }
                    gamma = engine.state();
                    let rate = b + 0.5 * rss(&gamma);
                    let tau = Gamma::new(a + 0.5 * n, 1.0 / rate)
                        .map_err(|_| Error::InvalidConfig("gamma conditional parameters".into()))?
                        .sample(rng);
                    sigma2 = 1.0 / tau;
                    if cfg.keeps(t) {
                        out.draws.push(red.to_beta(&gamma));
                        out.sigma2.push(sigma2);
                    }
                }
            }
        }
        Ok(out)
    };

    let outputs = run_chains(cfg, chain)?;
    assemble(outputs, data, cs, cfg, GlmFamily::Gaussian, Some(prior.precision))
}

/// Product slice sampler for a canonical-link GLM under the constraint set.
/// The precision part of `prior` is ignored.
pub fn fit_glm(
    data: &Dataset,
    family: GlmFamily,
    cs: &ConstraintSet,
    prior: &PriorSpec,
    cfg: &SamplerConfig,
) -> Result<PosteriorSamples> {
    cfg.validate()?;
    data.check_family(family)?;
    let red = Reduced::new(data, cs, prior)?;
    let n = data.n();
    let m_user = red.g.nrows();

    // β given the slice variables: TN(m + P⁻¹Uᵀy, P⁻¹) on user rows and slice rows
    let (cov, l) = covariance_factor(&red.prior_prec, "prior covariance")?;
    let mean = &red.prior_mean + &cov * (red.u.transpose() * &data.y);
    let rows = DMatrix::from_fn(m_user + n, red.dim(), |i, j| {
        if i < m_user {
            red.g[(i, j)]
        } else {
            red.u[(i - m_user, j)]
        }
    });
    let lower = DVector::from_fn(m_user + n, |i, _| if i < m_user { red.gb[i] } else { f64::NEG_INFINITY });
    let upper = DVector::from_element(m_user + n, f64::INFINITY);

    let chain = |rng: &mut ChaCha8Rng| -> Result<ChainOutput> {
        let mut engine = WhitenedGibbs::new(mean.clone(), l.clone(), &rows, &lower, &upper, &red.init)?;
        let mut gamma = red.init.clone();
        let mut out = ChainOutput {
            draws: Vec::with_capacity(cfg.retained_per_chain()),
            sigma2: Vec::new(),
        };
        for t in 0..cfg.n_iter {
            let eta = &red.u * &gamma + &red.shift;
            for i in 0..n {
                let log_u: f64 = Open01.sample(rng);
                let slack = family.psi(eta[i]) - log_u.ln();
                let (c, d) = family.slice_interval(slack)?;
                engine.set_bounds(m_user + i, c - red.shift[i], d - red.shift[i]);
            }
            for _ in 0..cfg.inner_sweeps {
                engine.sweep(rng)?;
            }
            gamma = engine.state();
            if cfg.keeps(t) {
                out.draws.push(red.to_beta(&gamma));
            }
        }
        Ok(out)
    };

    let outputs = run_chains(cfg, chain)?;
    assemble(outputs, data, cs, cfg, family, None)
}

/// `ĥ`, its Monte-Carlo standard error and the implied bound `r ≤ 1 − ĥ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErgodicityEstimate {
    pub h_hat: f64,
    pub mc_se: f64,
    pub r_upper: f64,
}

/// Estimates `h = E_q[∏ g_ℓ(β) / sup g_ℓ]` with `g_ℓ = exp(−Ψ(η_ℓ))`, where q
/// is the truncated normal `TN(μ₁ + Σ₁Xᵀy, Σ₁)` on the constraint region.
/// The supremum of each `g_ℓ` is bounded by `exp(−inf Ψ)`, which can only
/// shrink `ĥ`, so `1 − ĥ` stays a valid bound on the rate.
///
/// Draws of q come from the TMVN Gibbs sampler (one sweep apart) after a
/// burn-in of `n_mc / 10` sweeps; the standard error uses batch means.
pub fn estimate_ergodicity_bound<R: Rng + ?Sized>(
    data: &Dataset,
    family: GlmFamily,
    cs: &ConstraintSet,
    prior: &PriorSpec,
    n_mc: usize,
    rng: &mut R,
) -> Result<ErgodicityEstimate> {
    if n_mc < 2 {
        return Err(Error::TooFewDraws { needed: 2, got: n_mc });
    }
    if data.n() == 0 {
        return Ok(ErgodicityEstimate {
            h_hat: 1.0,
            mc_se: 0.0,
            r_upper: 0.0,
        });
    }
    let red = Reduced::new(data, cs, prior)?;
    let (cov, l) = covariance_factor(&red.prior_prec, "prior covariance")?;
    let mean = &red.prior_mean + &cov * (red.u.transpose() * &data.y);
    let upper = DVector::from_element(red.gb.len(), f64::INFINITY);
    let mut engine = WhitenedGibbs::new(mean, l, &red.g, &red.gb, &upper, &red.init)?;
    for _ in 0..n_mc / 10 {
        engine.sweep(rng)?;
    }
    let floor = family.psi_inf();
    let mut values = Vec::with_capacity(n_mc);
    for _ in 0..n_mc {
        engine.sweep(rng)?;
        let eta = &red.u * engine.state() + &red.shift;
        let log_prod: f64 = eta.iter().map(|&v| -(family.psi(v) - floor)).sum();
        values.push(log_prod.exp());
    }
    let h_hat = values.iter().sum::<f64>() / n_mc as f64;
    Ok(ErgodicityEstimate {
        h_hat,
        mc_se: batch_means_se(&values),
        r_upper: 1.0 - h_hat,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};

    fn small_cfg(seed: u64) -> SamplerConfig {
        SamplerConfig {
            n_iter: 3_000,
            burn_in: 500,
            thin: 1,
            seed,
            n_chains: 2,
            inner_sweeps: 1,
        }
    }

    fn toy_data(n: usize) -> Dataset {
        let x = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { (i as f64 * 0.61).sin() });
        let y = DVector::from_fn(n, |i, _| 0.5 + 1.5 * x[(i, 1)] + 0.3 * (i as f64 * 2.3).cos());
        Dataset::new(x, y).unwrap()
    }

    #[test]
    fn config_validation() {
        let mut cfg = SamplerConfig::default();
        assert!(cfg.validate().is_ok());
        assert_eq!(cfg.retained_per_chain(), 5_000);
        cfg.burn_in = cfg.n_iter;
        assert!(cfg.validate().is_err());
        let cfg = SamplerConfig { thin: 0, ..SamplerConfig::default() };
        assert!(cfg.validate().is_err());
        let cfg = SamplerConfig { n_iter: 10, burn_in: 3, thin: 3, ..SamplerConfig::default() };
        assert_eq!((0..10).filter(|&t| cfg.keeps(t)).count(), cfg.retained_per_chain());
    }

    #[test]
    fn prior_validation() {
        let bad = PriorSpec::new(DVector::zeros(2), dmatrix![1.0, 2.0; 2.0, 1.0], Precision::Fixed { sigma2: 1.0 });
        assert!(matches!(bad, Err(Error::NotPositiveDefinite(_))));
        let bad = PriorSpec::new(DVector::zeros(2), DMatrix::identity(2, 2), Precision::Gamma { a: 0.0, b: 1.0 });
        assert!(bad.is_err());
        let v = PriorSpec::vague(3);
        assert_eq!(v.sigma1[(1, 1)], 1e4);
    }

    #[test]
    fn lm_draws_respect_constraints_and_shapes() {
        let data = toy_data(30);
        let cs = ConstraintSet::inequalities(dmatrix![0.0, -1.0], dvector![-1.0]).unwrap();
        let s = fit_lm(&data, &cs, &PriorSpec::vague(2), &small_cfg(1)).unwrap();
        assert_eq!(s.num_draws(), 5_000);
        assert_eq!(s.meta.audited, 5_000);
        assert!(s.draws.column(1).iter().all(|&b| b <= 1.0 + 1e-8));
        let s2 = s.sigma2_draws.as_ref().unwrap();
        assert!(s2.iter().all(|&v| v > 0.0));
        // truth 1.5 is outside the region so mass piles near the bound
        assert!(s.mean()[1] > 0.8 && s.mean()[1] < 1.0);
    }

    #[test]
    fn lm_is_reproducible_and_seed_sensitive() {
        let data = toy_data(20);
        let cs = ConstraintSet::inequalities(dmatrix![1.0, 0.0], dvector![0.0]).unwrap();
        let a = fit_lm(&data, &cs, &PriorSpec::vague(2), &small_cfg(7)).unwrap();
        let b = fit_lm(&data, &cs, &PriorSpec::vague(2), &small_cfg(7)).unwrap();
        let c = fit_lm(&data, &cs, &PriorSpec::vague(2), &small_cfg(8)).unwrap();
        assert_eq!(a.draws, b.draws);
        assert_eq!(a.sigma2_draws, b.sigma2_draws);
        assert_ne!(a.draws, c.draws);
    }

    #[test]
    fn chains_differ() {
        let s = fit_lm(&toy_data(20), &ConstraintSet::unconstrained(2), &PriorSpec::vague(2), &small_cfg(3)).unwrap();
        assert_ne!(s.chain(0), s.chain(1));
    }

    #[test]
    fn equality_rows_hold_in_every_draw() {
        let data = toy_data(25);
        let cs = ConstraintSet::new(dmatrix![1.0, 1.0; 1.0, 0.0], dvector![2.0, 0.5], 1).unwrap();
        let s = fit_lm(&data, &cs, &PriorSpec::vague(2), &small_cfg(2)).unwrap();
        for row in s.draws.row_iter() {
            assert!((row[0] + row[1] - 2.0).abs() <= 1e-10);
            assert!(row[0] >= 0.5 - 1e-8);
        }
    }

    #[test]
    fn fully_determined_coefficients_rejected() {
        let data = toy_data(10);
        let cs = ConstraintSet::new(DMatrix::identity(2, 2), dvector![1.0, 2.0], 2).unwrap();
        assert!(matches!(
            fit_lm(&data, &cs, &PriorSpec::vague(2), &small_cfg(0)),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn infeasible_constraints_error() {
        let cs = ConstraintSet::inequalities(dmatrix![1.0, 0.0; -1.0, 0.0], dvector![1.0, 0.0]).unwrap();
        let r = fit_glm(&toy_data(10), GlmFamily::Gaussian, &cs, &PriorSpec::vague(2), &small_cfg(0));
        assert!(matches!(r, Err(Error::Infeasible(_))));
    }

    #[test]
    fn poisson_glm_respects_box() {
        let x = DMatrix::from_fn(40, 2, |i, j| if j == 0 { 1.0 } else { (i as f64 / 40.0) - 0.5 });
        let y = DVector::from_fn(40, |i, _| ((i * 7) % 4) as f64);
        let data = Dataset::new(x, y).unwrap();
        let cs = ConstraintSet::inequalities(dmatrix![0.0, 1.0; 0.0, -1.0], dvector![0.2, -0.4]).unwrap();
        let prior = PriorSpec::empirical_bayes(GlmFamily::Poisson, &data).unwrap();
        let s = fit_glm(&data, GlmFamily::Poisson, &cs, &prior, &small_cfg(4)).unwrap();
        assert!(s.sigma2_draws.is_none());
        assert!(s.draws.column(1).iter().all(|&b| (0.2 - 1e-8..=0.4 + 1e-8).contains(&b)));
    }

    #[test]
    fn logistic_glm_runs() {
        let x = DMatrix::from_fn(60, 2, |i, j| if j == 0 { 1.0 } else { (i as f64 * 0.37).sin() });
        let y = DVector::from_fn(60, |i, _| if (i as f64 * 0.37).sin() + 0.3 * (i as f64).cos() > 0.0 { 1.0 } else { 0.0 });
        let data = Dataset::new(x, y).unwrap();
        let cs = ConstraintSet::inequalities(dmatrix![0.0, 1.0], dvector![0.0]).unwrap();
        let s = fit_glm(&data, GlmFamily::Logistic, &cs, &PriorSpec::isotropic(2, 25.0), &small_cfg(5)).unwrap();
        assert!(s.mean()[1] > 1.0);
    }

    #[test]
    fn ergodicity_without_data_is_one() {
        let data = Dataset::new(DMatrix::zeros(0, 2), DVector::zeros(0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let e = estimate_ergodicity_bound(
            &data,
            GlmFamily::Poisson,
            &ConstraintSet::unconstrained(2),
            &PriorSpec::isotropic(2, 1.0),
            100,
            &mut rng,
        )
        .unwrap();
        assert_eq!((e.h_hat, e.r_upper), (1.0, 0.0));
    }

    #[test]
    fn ergodicity_gaussian_closed_form() {
        let data = Dataset::new(DMatrix::from_element(1, 1, 1.0), dvector![0.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let e = estimate_ergodicity_bound(
            &data,
            GlmFamily::Gaussian,
            &ConstraintSet::unconstrained(1),
            &PriorSpec::isotropic(1, 1.0),
            40_000,
            &mut rng,
        )
        .unwrap();
        assert!((e.h_hat - 0.5f64.sqrt()).abs() < 3.0 * e.mc_se, "{e:?}");
    }

    #[test]
    fn ergodicity_shrinks_with_more_data() {
        let x = DMatrix::from_element(6, 1, 1.0);
        let y = dvector![1.0, 0.0, 2.0, 1.0, 1.0, 0.0];
        let cs = ConstraintSet::inequalities(dmatrix![1.0], dvector![0.0]).unwrap();
        let prior = PriorSpec::isotropic(1, 1.0);
        let h = |k: usize| {
            let d = Dataset::new(x.rows(0, k).into_owned(), y.rows(0, k).into_owned()).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            estimate_ergodicity_bound(&d, GlmFamily::Poisson, &cs, &prior, 20_000, &mut rng).unwrap()
        };
        let (h2, h6) = (h(2), h(6));
        for e in [h2, h6] {
            assert!(e.h_hat > 0.0 && e.h_hat < 1.0 && e.r_upper > 0.0 && e.r_upper < 1.0);
        }
        assert!(h6.h_hat < h2.h_hat);
    }
}
