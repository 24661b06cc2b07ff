//! Posterior summaries, DIC and the closed-form frequentist baselines.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::glm::{log_likelihood, Dataset, GlmFamily};
use crate::samplers::{ErgodicityEstimate, PosteriorSamples};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoefSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub median: f64,
    pub q025: f64,
    pub q975: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryReport {
    pub coefficients: Vec<CoefSummary>,
    pub dic: Option<f64>,
    pub sel: Option<f64>,
    pub ergodicity: Option<ErgodicityEstimate>,
}

impl SummaryReport {
    pub fn means(&self) -> DVector<f64> {
        DVector::from_iterator(self.coefficients.len(), self.coefficients.iter().map(|c| c.mean))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary is always serializable")
    }
}

/// Quantile by linear interpolation between order statistics (R type 7).
/// `sorted` must be ascending and non-empty.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn column_summary(name: &str, values: &[f64]) -> CoefSummary {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    CoefSummary {
        name: name.to_string(),
        mean,
        sd: var.sqrt(),
        median: quantile_sorted(&sorted, 0.5),
        q025: quantile_sorted(&sorted, 0.025),
        q975: quantile_sorted(&sorted, 0.975),
    }
}

/// Column-wise posterior summaries; `truth` adds the squared-error loss of the
/// posterior mean.
pub fn summarize(samples: &PosteriorSamples, truth: Option<&DVector<f64>>) -> Result<SummaryReport> {
    summarize_draws(&samples.draws, &samples.names, truth)
}

pub fn summarize_draws(draws: &DMatrix<f64>, names: &[String], truth: Option<&DVector<f64>>) -> Result<SummaryReport> {
    if draws.nrows() < 2 {
        return Err(Error::TooFewDraws {
            needed: 2,
            got: draws.nrows(),
        });
    }
    if names.len() != draws.ncols() {
        return Err(Error::DimensionMismatch("one name per coefficient".into()));
    }
    let coefficients: Vec<CoefSummary> = names
        .iter()
        .enumerate()
        .map(|(j, name)| column_summary(name, draws.column(j).as_slice()))
        .collect();
    let sel = match truth {
        Some(t) if t.len() != names.len() => {
            return Err(Error::DimensionMismatch("truth has the wrong length".into()))
        }
        Some(t) => Some(coefficients.iter().zip(t.iter()).map(|(c, v)| (c.mean - v).powi(2)).sum()),
        None => None,
    };
    Ok(SummaryReport {
        coefficients,
        dic: None,
        sel,
        ergodicity: None,
    })
}

/// Squared-error loss `Σ (est_j − truth_j)²`.
pub fn sel(estimate: &DVector<f64>, truth: &DVector<f64>) -> f64 {
    (estimate - truth).norm_squared()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DicReport {
    pub dic: f64,
    pub p_d: f64,
    pub mean_deviance: f64,
    pub deviance_at_mean: f64,
}

/// Deviance `−2 log p(y | θ)` including every constant. With an error
/// variance the Gaussian deviance is `n log(2πσ²) + RSS/σ²`; without one it
/// is the unit-variance GLM deviance.
pub fn deviance(family: GlmFamily, data: &Dataset, beta: &DVector<f64>, sigma2: Option<f64>) -> f64 {
    match (family, sigma2) {
        (GlmFamily::Gaussian, Some(s2)) => {
            let rss = (&data.y - data.linear_predictor(beta)).norm_squared();
            data.n() as f64 * (2.0 * std::f64::consts::PI * s2).ln() + rss / s2
        }
        _ => -2.0 * (log_likelihood(family, data, beta) + family.log_base_measure(&data.y)),
    }
}

/// DIC with the mean-deviance-minus-deviance-at-mean penalty. A negative
/// `p_d` is reported as is.
pub fn dic(samples: &PosteriorSamples, data: &Dataset, family: GlmFamily) -> Result<DicReport> {
    let k = samples.num_draws();
    if k == 0 {
        return Err(Error::TooFewDraws { needed: 1, got: 0 });
    }
    if samples.dim() != data.p() {
        return Err(Error::DimensionMismatch("draws do not match the design".into()));
    }
    let sigma2 = samples.sigma2_draws.as_ref().filter(|_| family == GlmFamily::Gaussian);
    let mean_deviance = (0..k)
        .map(|t| {
            let beta = samples.draws.row(t).transpose();
            deviance(family, data, &beta, sigma2.map(|s| s[t]))
        })
        .sum::<f64>()
        / k as f64;
    let deviance_at_mean = deviance(family, data, &samples.mean(), sigma2.map(|s| s.mean()));
    let p_d = mean_deviance - deviance_at_mean;
    Ok(DicReport {
        dic: deviance_at_mean + 2.0 * p_d,
        p_d,
        mean_deviance,
        deviance_at_mean,
    })
}

/// Monte-Carlo standard error of a chain average by non-overlapping batch
/// means with `⌊√n⌋` batches. Falls back to `sd/√n` for very short chains.
pub fn batch_means_se(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return f64::NAN;
    }
    let batches = (n as f64).sqrt().floor() as usize;
    let size = n / batches.max(1);
    if batches < 2 || size < 2 {
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        return (var / n as f64).sqrt();
    }
    let means: Vec<f64> = values
        .chunks_exact(size)
        .take(batches)
        .map(|c| c.iter().sum::<f64>() / size as f64)
        .collect();
    let grand = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (batches - 1) as f64;
    (var / batches as f64).sqrt()
}

/// Batch-means standard error of every column mean.
pub fn column_mc_se(draws: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(draws.ncols(), draws.column_iter().map(|c| batch_means_se(c.as_slice())))
}

#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    pub beta: DVector<f64>,
    pub se: DVector<f64>,
    pub sigma2: f64,
}

fn response(data: &Dataset) -> DVector<f64> {
    &data.y - &data.offset
}

/// Ordinary least squares with `σ̂² = RSS/(n − p)` standard errors.
pub fn ols(data: &Dataset) -> Result<OlsFit> {
    let (n, p) = (data.n(), data.p());
    if n <= p {
        return Err(Error::Singular("OLS needs more observations than coefficients"));
    }
    let y = response(data);
    let chol = (data.x.transpose() * &data.x)
        .cholesky()
        .ok_or(Error::Singular("XᵀX is not invertible"))?;
    let beta = chol.solve(&(data.x.transpose() * &y));
    let sigma2 = (&y - &data.x * &beta).norm_squared() / (n - p) as f64;
    let inv = chol.inverse();
    let se = DVector::from_fn(p, |j, _| (sigma2 * inv[(j, j)]).sqrt());
    Ok(OlsFit { beta, se, sigma2 })
}

/// Ridge estimate `(XᵀX + λI)⁻¹Xᵀy`; every coefficient is penalized.
pub fn ridge(data: &Dataset, lambda: f64) -> Result<DVector<f64>> {
    ridge_raw(&data.x, &response(data), lambda)
}

fn ridge_raw(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> Result<DVector<f64>> {
    if !(lambda >= 0.0) {
        return Err(Error::OutOfRange {
            value: lambda,
            min: 0.0,
            max: f64::INFINITY,
        });
    }
    let p = x.ncols();
    let m = x.transpose() * x + DMatrix::identity(p, p) * lambda;
    let chol = m.cholesky().ok_or(Error::Singular("XᵀX + λI is not invertible"))?;
    Ok(chol.solve(&(x.transpose() * y)))
}

/// Degrees of freedom `tr(X (XᵀX + λI)⁻¹ Xᵀ)`.
pub fn ridge_df(data: &Dataset, lambda: f64) -> Result<f64> {
    let p = data.p();
    let m = data.x.transpose() * &data.x + DMatrix::identity(p, p) * lambda;
    let inv = m.cholesky().ok_or(Error::Singular("XᵀX + λI is not invertible"))?.inverse();
    Ok((&inv * (data.x.transpose() * &data.x)).trace())
}

/// 50 log-spaced penalties from 1e-3 to 1e3.
pub fn default_ridge_grid() -> Vec<f64> {
    (0..50).map(|i| 10f64.powf(-3.0 + 6.0 * i as f64 / 49.0)).collect()
}

/// Penalty minimizing `folds`-fold cross-validated squared prediction error.
/// Observation `i` belongs to fold `i mod folds`; ties go to the larger penalty.
pub fn ridge_cv(data: &Dataset, grid: &[f64], folds: usize) -> Result<f64> {
    let n = data.n();
    if folds < 2 || folds > n || grid.is_empty() {
        return Err(Error::InvalidConfig("ridge CV needs 2 <= folds <= n and a non-empty grid".into()));
    }
    let y = response(data);
    let mut best = (f64::INFINITY, grid[0]);
    for &lambda in grid {
        let mut err = 0.0;
        for f in 0..folds {
            let train: Vec<usize> = (0..n).filter(|i| i % folds != f).collect();
            let test: Vec<usize> = (0..n).filter(|i| i % folds == f).collect();
            let xt = data.x.select_rows(train.iter());
            let yt = y.select_rows(train.iter());
            let beta = ridge_raw(&xt, &yt, lambda)?;
            err += test
                .iter()
                .map(|&i| (y[i] - data.x.row(i).dot(&beta.transpose())).powi(2))
                .sum::<f64>();
        }
        if err <= best.0 {
            best = (err, lambda);
        }
    }
    Ok(best.1)
}
