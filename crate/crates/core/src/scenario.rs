//! Simulation designs for comparing the Bayesian constrained fits with
//! unconstrained baselines, and a harness that reports Monte-Carlo
//! efficiency ratios across replicates.
//!
//! | id | model    | p  | truth                      | constraints                                   | baseline |
//! |----|----------|----|----------------------------|-----------------------------------------------|----------|
//! | A1 | linear   | 3  | (−1, −1, 1)                | β1 − 2β2 ≥ 0, −β1 ≥ 0                         | OLS      |
//! | A2 | linear   | 30 | β1 = β2 = −1, rest 1       | A1 rows plus β3, β4, β5 ≥ 0                   | ridge    |
//! | B  | linear   | 4  | (3, −2, 1, 1), intercept   | β1 + β2 + β3 = 0, β2 ≥ 0, β3 ≥ 0              | OLS      |
//! | C  | Poisson  | 11 | ten 1s then 2              | Σβ = 12, β1..β10 ≥ 0.9                        | GLM MLE  |
//!
//! Linear designs draw covariates from `N(0, Σ₀⁻¹)`, `Σ₀(i, j) = ρ^|i−j|`,
//! with `N(0, 9)` errors. The Poisson design draws covariates from
//! `U(−0.5, 0.5)`. Strict inequalities of the designs are imposed as `≥`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{dmatrix, dvector, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::ser::SerializeMap;
use serde::{Deserialize, Serialize, Serializer};

use crate::analysis::{default_ridge_grid, ols, ridge, ridge_cv, ridge_df};
use crate::constraints::{ConstraintSet, FEASIBILITY_TOL};
use crate::error::{Error, Result};
use crate::glm::{mle, Dataset, GlmFamily};
use crate::samplers::{fit_glm, fit_lm, PriorSpec, SamplerConfig};

const ERROR_SD: f64 = 3.0;
const CV_FOLDS: usize = 5;
/// Stream offset that keeps data-generation streams apart from chain streams.
const DATA_STREAM: u64 = 1 << 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScenarioId {
    A1,
    A2,
    B,
    C,
}

impl ScenarioId {
    pub fn dim(self) -> usize {
        match self {
            ScenarioId::A1 => 3,
            ScenarioId::A2 => 30,
            ScenarioId::B => 4,
            ScenarioId::C => 11,
        }
    }

    pub fn default_n(self) -> usize {
        match self {
            ScenarioId::A1 => 30,
            ScenarioId::A2 => 20,
            ScenarioId::B => 50,
            ScenarioId::C => 100,
        }
    }

    pub fn default_rho(self) -> f64 {
        match self {
            ScenarioId::A1 | ScenarioId::B => 0.5,
            ScenarioId::A2 | ScenarioId::C => 0.0,
        }
    }

    pub fn truth(self) -> DVector<f64> {
        match self {
            ScenarioId::A1 => dvector![-1.0, -1.0, 1.0],
            ScenarioId::A2 => DVector::from_fn(30, |j, _| if j < 2 { -1.0 } else { 1.0 }),
            ScenarioId::B => dvector![3.0, -2.0, 1.0, 1.0],
            ScenarioId::C => DVector::from_fn(11, |j, _| if j < 10 { 1.0 } else { 2.0 }),
        }
    }

    pub fn constraints(self) -> ConstraintSet {
        let built = match self {
            ScenarioId::A1 => ConstraintSet::inequalities(dmatrix![1.0, -2.0, 0.0; -1.0, 0.0, 0.0], DVector::zeros(2)),
            ScenarioId::A2 => {
                let mut r = DMatrix::zeros(5, 30);
                r[(0, 0)] = 1.0;
                r[(0, 1)] = -2.0;
                r[(1, 0)] = -1.0;
                for k in 0..3 {
                    r[(2 + k, 2 + k)] = 1.0;
                }
                ConstraintSet::inequalities(r, DVector::zeros(5))
            }
            ScenarioId::B => ConstraintSet::new(
                dmatrix![0.0, 1.0, 1.0, 1.0; 0.0, 0.0, 1.0, 0.0; 0.0, 0.0, 0.0, 1.0],
                DVector::zeros(3),
                1,
            ),
            ScenarioId::C => {
                let mut r = DMatrix::zeros(11, 11);
                r.row_mut(0).fill(1.0);
                for j in 0..10 {
                    r[(1 + j, j)] = 1.0;
                }
                let b = DVector::from_fn(11, |i, _| if i == 0 { 12.0 } else { 0.9 });
                ConstraintSet::new(r, b, 1)
            }
        };
        built.expect("scenario constraint sets are well formed")
    }

    pub fn names(self) -> Vec<String> {
        match self {
            ScenarioId::B => (0..4).map(|j| format!("beta{j}")).collect(),
            _ => (1..=self.dim()).map(|j| format!("beta{j}")).collect(),
        }
    }

    pub fn family(self) -> GlmFamily {
        match self {
            ScenarioId::C => GlmFamily::Poisson,
            _ => GlmFamily::Gaussian,
        }
    }

    pub fn baseline(self) -> &'static str {
        match self {
            ScenarioId::A1 | ScenarioId::B => "ols",
            ScenarioId::A2 => "ridge",
            ScenarioId::C => "glm_mle",
        }
    }
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for ScenarioId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "A1" => Ok(ScenarioId::A1),
            "A2" => Ok(ScenarioId::A2),
            "B" => Ok(ScenarioId::B),
            "C" => Ok(ScenarioId::C),
            other => Err(Error::Parse(format!("unknown scenario `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScenarioSpec {
    pub id: ScenarioId,
    pub n: usize,
    pub rho: f64,
    pub replicates: usize,
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn new(id: ScenarioId, replicates: usize, seed: u64) -> Self {
        ScenarioSpec {
            id,
            n: id.default_n(),
            rho: id.default_rho(),
            replicates,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::InvalidConfig("at least one replicate is required".into()));
        }
        if self.n < 2 {
            return Err(Error::InvalidConfig("scenarios need n >= 2".into()));
        }
        if !(self.rho > -1.0 && self.rho < 1.0) {
            return Err(Error::OutOfRange { value: self.rho, min: -1.0, max: 1.0 });
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioReplicate {
    pub data: Dataset,
    pub constraints: ConstraintSet,
    pub truth: DVector<f64>,
}

/// Draws `n` rows from `N(0, Σ₀⁻¹)`: with `Σ₀ = LLᵀ`, `x = L⁻ᵀ z`.
fn correlated_covariates<R: Rng + ?Sized>(n: usize, p: usize, rho: f64, rng: &mut R) -> Result<DMatrix<f64>> {
    let sigma0 = DMatrix::from_fn(p, p, |i, j| rho.powi((i as i32 - j as i32).abs()));
    let l = sigma0
        .cholesky()
        .ok_or(Error::NotPositiveDefinite("covariate correlation matrix"))?
        .l();
    let z = DMatrix::from_fn(p, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let x = l
        .transpose()
        .solve_upper_triangular(&z)
        .ok_or(Error::Singular("covariate correlation factor"))?;
    Ok(x.transpose())
}

fn generate<R: Rng + ?Sized>(spec: &ScenarioSpec, rng: &mut R) -> Result<ScenarioReplicate> {
    let id = spec.id;
    let truth = id.truth();
    let n = spec.n;
    let x = match id {
        ScenarioId::A1 | ScenarioId::A2 => correlated_covariates(n, id.dim(), spec.rho, rng)?,
        ScenarioId::B => {
            let cov = correlated_covariates(n, 3, spec.rho, rng)?;
            DMatrix::from_fn(n, 4, |i, j| if j == 0 { 1.0 } else { cov[(i, j - 1)] })
        }
        ScenarioId::C => DMatrix::from_fn(n, 11, |_, _| rng.random_range(-0.5..0.5)),
    };
    let eta = &x * &truth;
    let y = match id.family() {
        GlmFamily::Poisson => eta
            .iter()
            .map(|&v| {
                Poisson::new(v.exp())
                    .map(|d| d.sample(rng))
                    .map_err(|_| Error::InvalidConfig("Poisson mean out of range".into()))
            })
            .collect::<Result<Vec<f64>>>()
            .map(DVector::from_vec)?,
        _ => eta.map(|v| v + ERROR_SD * rng.sample::<f64, _>(StandardNormal)),
    };
    let data = Dataset::with_offset(x, y, DVector::zeros(n), id.names())?;
    Ok(ScenarioReplicate {
        data,
        constraints: id.constraints(),
        truth,
    })
}

fn data_rng(seed: u64, replicate: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(DATA_STREAM + replicate as u64);
    rng
}

/// Independent datasets from the scenario's generator, deterministic in the seed.
pub fn simulate_scenario(spec: &ScenarioSpec) -> Result<Vec<ScenarioReplicate>> {
    spec.validate()?;
    (0..spec.replicates)
        .map(|r| generate(spec, &mut data_rng(spec.seed, r)))
        .collect()
}

/// Sampler seed for replicate `r`.
fn replicate_seed(seed: u64, r: usize) -> u64 {
    seed.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(r as u64 + 1))
}

/// Point estimates from one replicate.
#[derive(Debug, Clone)]
struct ReplicateFit {
    bayes: DVector<f64>,
    baseline: DVector<f64>,
    ridge_lambda: Option<f64>,
}

fn fit_replicate(id: ScenarioId, rep: &ScenarioReplicate, cfg: &SamplerConfig) -> Result<ReplicateFit> {
    let p = id.dim();
    let data = &rep.data;
    let cs = &rep.constraints;
    match id {
        ScenarioId::A1 | ScenarioId::B => {
            let bayes = fit_lm(data, cs, &PriorSpec::vague(p), cfg)?.mean();
            Ok(ReplicateFit {
                bayes,
                baseline: ols(data)?.beta,
                ridge_lambda: None,
            })
        }
        ScenarioId::A2 => {
            let lambda = ridge_cv(data, &default_ridge_grid(), CV_FOLDS)?;
            let beta = ridge(data, lambda)?;
            let df = ridge_df(data, lambda)?;
            let resid = (&data.y - &data.x * &beta).norm_squared();
            let sigma2_hat = resid / (data.n() as f64 - df).max(1.0);
            let prior = PriorSpec::isotropic(p, sigma2_hat / lambda);
            let bayes = fit_lm(data, cs, &prior, cfg)?.mean();
            Ok(ReplicateFit {
                bayes,
                baseline: beta,
                ridge_lambda: Some(lambda),
            })
        }
        ScenarioId::C => {
            let prior = PriorSpec::empirical_bayes(GlmFamily::Poisson, data)?;
            let bayes = fit_glm(data, GlmFamily::Poisson, cs, &prior, cfg)?.mean();
            Ok(ReplicateFit {
                bayes,
                baseline: mle(GlmFamily::Poisson, data)?.beta,
                ridge_lambda: None,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MethodStats {
    pub bias: f64,
    pub variance: f64,
    pub mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoefficientRow {
    pub truth: f64,
    pub bayes: MethodStats,
    pub baseline: MethodStats,
    /// Baseline MSE over Bayes MSE; above 1 favours the Bayesian fit.
    pub mse_ratio: f64,
    pub variance_ratio: f64,
}

/// Rows serialized as a JSON object keyed by coefficient name, in model order.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientTable(pub Vec<(String, CoefficientRow)>);

impl CoefficientTable {
    pub fn get(&self, name: &str) -> Option<&CoefficientRow> {
        self.0.iter().find(|(n, _)| n == name).map(|(_, r)| r)
    }
}

impl Serialize for CoefficientTable {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(self.0.len()))?;
        for (name, row) in &self.0 {
            map.serialize_entry(name, row)?;
        }
        map.end()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MethodPair {
    pub bayes: f64,
    pub baseline: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioReport {
    pub scenario: ScenarioId,
    pub n: usize,
    pub rho: f64,
    pub replicates: usize,
    pub seed: u64,
    pub baseline: &'static str,
    pub sampler: SamplerConfig,
    pub coefficients: CoefficientTable,
    /// Percentage of replicates whose point estimate satisfies every constraint.
    pub constraint_satisfaction: MethodPair,
    pub mean_sel: MethodPair,
    /// Cross-validated ridge penalty of each replicate (A2 only).
    pub ridge_lambdas: Option<Vec<f64>>,
    /// Replicate-level estimates, each row in coefficient order.
    #[serde(skip)]
    pub estimates: Vec<(DVector<f64>, DVector<f64>)>,
}

impl ScenarioReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is always serializable")
    }
}

fn method_stats(values: &[f64], truth: f64) -> MethodStats {
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    let variance = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0)
    } else {
        0.0
    };
    let mse = values.iter().map(|v| (v - truth).powi(2)).sum::<f64>() / k;
    MethodStats {
        bias: mean - truth,
        variance,
        mse,
    }
}

/// Fits every replicate with the Bayesian sampler and the scenario baseline.
/// With a single replicate the variances are zero and the ratios rest on one
/// squared error each.
pub fn run_scenario(spec: &ScenarioSpec, cfg: &SamplerConfig) -> Result<ScenarioReport> {
    cfg.validate()?;
    let reps = simulate_scenario(spec)?;
    let id = spec.id;
    let fits: Vec<ReplicateFit> = reps
        .par_iter()
        .enumerate()
        .map(|(r, rep)| {
            let cfg_r = SamplerConfig {
                seed: replicate_seed(cfg.seed.wrapping_add(spec.seed), r),
                ..*cfg
            };
            fit_replicate(id, rep, &cfg_r)
        })
        .collect::<Result<_>>()?;

    let truth = id.truth();
    let cs = id.constraints();
    let names = id.names();
    let rows = names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let bayes: Vec<f64> = fits.iter().map(|f| f.bayes[j]).collect();
            let base: Vec<f64> = fits.iter().map(|f| f.baseline[j]).collect();
            let b = method_stats(&bayes, truth[j]);
            let o = method_stats(&base, truth[j]);
            (
                name.clone(),
                CoefficientRow {
                    truth: truth[j],
                    bayes: b,
                    baseline: o,
                    mse_ratio: o.mse / b.mse,
                    variance_ratio: o.variance / b.variance,
                },
            )
        })
        .collect();

    let k = fits.len() as f64;
    let pct = |pick: fn(&ReplicateFit) -> &DVector<f64>| {
        100.0 * fits.iter().filter(|f| cs.is_satisfied(pick(f), FEASIBILITY_TOL)).count() as f64 / k
    };
    let mean_sel = |pick: fn(&ReplicateFit) -> &DVector<f64>| {
        fits.iter().map(|f| (pick(f) - &truth).norm_squared()).sum::<f64>() / k
    };
    Ok(ScenarioReport {
        scenario: id,
        n: spec.n,
        rho: spec.rho,
        replicates: spec.replicates,
        seed: spec.seed,
        baseline: id.baseline(),
        sampler: *cfg,
        coefficients: CoefficientTable(rows),
        constraint_satisfaction: MethodPair {
            bayes: pct(|f| &f.bayes),
            baseline: pct(|f| &f.baseline),
        },
        mean_sel: MethodPair {
            bayes: mean_sel(|f| &f.bayes),
            baseline: mean_sel(|f| &f.baseline),
        },
        ridge_lambdas: (id == ScenarioId::A2).then(|| fits.iter().filter_map(|f| f.ridge_lambda).collect()),
        estimates: fits.into_iter().map(|f| (f.bayes, f.baseline)).collect(),
    })
}
