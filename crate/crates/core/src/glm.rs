//! Canonical-link GLM machinery: the cumulant function Ψ with its derivatives,
//! inversion of the slice `{v : Ψ(v) ≤ s}`, log-likelihoods with offsets, and
//! the unconstrained Newton–Raphson MLE with its Fisher information.
//!
//! The family set is closed. Adding one means supplying Ψ, Ψ′, Ψ″, the infimum
//! of Ψ and the slice inversion in each `match` below.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MLE_GRAD_TOL: f64 = 1e-8;
const MLE_STEP_TOL: f64 = 1e-8;
const MLE_MAX_ITER: usize = 100;
const MAX_HALVINGS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GlmFamily {
    Gaussian,
    Poisson,
    Logistic,
}

impl GlmFamily {
    pub fn name(self) -> &'static str {
        match self {
            GlmFamily::Gaussian => "gaussian",
            GlmFamily::Poisson => "poisson",
            GlmFamily::Logistic => "logistic",
        }
    }

    pub fn psi(self, v: f64) -> f64 {
        match self {
            GlmFamily::Gaussian => 0.5 * v * v,
            GlmFamily::Poisson => v.exp(),
            GlmFamily::Logistic => v.max(0.0) + (-v.abs()).exp().ln_1p(),
        }
    }

    pub fn dpsi(self, v: f64) -> f64 {
        match self {
            GlmFamily::Gaussian => v,
            GlmFamily::Poisson => v.exp(),
            GlmFamily::Logistic => logistic(v),
        }
    }

    pub fn ddpsi(self, v: f64) -> f64 {
        match self {
            GlmFamily::Gaussian => 1.0,
            GlmFamily::Poisson => v.exp(),
            GlmFamily::Logistic => {
                let p = logistic(v);
                p * (1.0 - p)
            }
        }
    }

    /// Infimum of Ψ over the real line.
    pub fn psi_inf(self) -> f64 {
        0.0
    }

    /// The interval `{v : Ψ(v) ≤ s}`, with infinite ends where unbounded.
    pub fn slice_interval(self, s: f64) -> Result<(f64, f64)> {
        if s.is_nan() || s <= self.psi_inf() {
            return Err(Error::EmptySlice { level: s });
        }
        Ok(match self {
            GlmFamily::Gaussian => {
                let r = (2.0 * s).sqrt();
                (-r, r)
            }
            GlmFamily::Poisson => (f64::NEG_INFINITY, s.ln()),
            GlmFamily::Logistic => {
                // log(e^s − 1); for large s write it as s + log(1 − e^{−s})
                let d = if s > 30.0 { s + (-(-s).exp()).ln_1p() } else { s.exp_m1().ln() };
                (f64::NEG_INFINITY, d)
            }
        })
    }

    /// Support check for a response value.
    pub fn check_response(self, y: f64) -> bool {
        match self {
            GlmFamily::Gaussian => y.is_finite(),
            GlmFamily::Poisson => y >= 0.0 && y.fract() == 0.0 && y.is_finite(),
            GlmFamily::Logistic => y == 0.0 || y == 1.0,
        }
    }

    /// `Σ log A(y_i)`: the part of the log-density that does not involve η
    /// (Gaussian with unit variance, Poisson `−log y!`, logistic zero).
    pub fn log_base_measure(self, y: &DVector<f64>) -> f64 {
        match self {
            GlmFamily::Gaussian => y
                .iter()
                .map(|v| -0.5 * v * v - 0.5 * (2.0 * std::f64::consts::PI).ln())
                .sum(),
            GlmFamily::Poisson => -y.iter().map(|&v| ln_factorial(v)).sum::<f64>(),
            GlmFamily::Logistic => 0.0,
        }
    }
}

impl fmt::Display for GlmFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GlmFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" | "normal" => Ok(GlmFamily::Gaussian),
            "poisson" => Ok(GlmFamily::Poisson),
            "logistic" | "binomial" => Ok(GlmFamily::Logistic),
            other => Err(Error::Parse(format!("unknown family `{other}`"))),
        }
    }
}

fn logistic(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

fn ln_factorial(k: f64) -> f64 {
    let k = k as u64;
    (2..=k).map(|i| (i as f64).ln()).sum()
}

/// Design, response and a fixed additive offset to the linear predictor.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub offset: DVector<f64>,
    pub names: Vec<String>,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        let n = x.nrows();
        let names = (1..=x.ncols()).map(|j| format!("beta{j}")).collect();
        Self::with_offset(x, y, DVector::zeros(n), names)
    }

    pub fn with_offset(x: DMatrix<f64>, y: DVector<f64>, offset: DVector<f64>, names: Vec<String>) -> Result<Self> {
        if x.nrows() != y.len() || offset.len() != y.len() {
            return Err(Error::DimensionMismatch(format!(
                "X has {} rows, y has {}, offset has {}",
                x.nrows(),
                y.len(),
                offset.len()
            )));
        }
        if names.len() != x.ncols() {
            return Err(Error::DimensionMismatch("one name per design column".into()));
        }
        Ok(Dataset { x, y, offset, names })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn check_family(&self, family: GlmFamily) -> Result<()> {
        match self.y.iter().position(|&v| !family.check_response(v)) {
            Some(i) => Err(Error::Parse(format!(
                "response {} at row {} is outside the {} support",
                self.y[i],
                i + 1,
                family
            ))),
            None => Ok(()),
        }
    }

    /// η = Xβ + offset.
    pub fn linear_predictor(&self, beta: &DVector<f64>) -> DVector<f64> {
        &self.x * beta + &self.offset
    }
}

/// `yᵀη − Σ Ψ(η_i)` with `η = Xβ + offset`; constants in y are dropped.
pub fn log_likelihood(family: GlmFamily, data: &Dataset, beta: &DVector<f64>) -> f64 {
    let eta = data.linear_predictor(beta);
    data.y.dot(&eta) - eta.iter().map(|&v| family.psi(v)).sum::<f64>()
}

/// `Σ x_i x_iᵀ Ψ″(η_i)`.
pub fn fisher_information(family: GlmFamily, data: &Dataset, beta: &DVector<f64>) -> DMatrix<f64> {
    let eta = data.linear_predictor(beta);
    let mut weighted = data.x.clone();
    for (i, mut row) in weighted.row_iter_mut().enumerate() {
        row *= family.ddpsi(eta[i]);
    }
    data.x.transpose() * weighted
}

fn score(family: GlmFamily, data: &Dataset, beta: &DVector<f64>) -> DVector<f64> {
    let eta = data.linear_predictor(beta);
    let resid = DVector::from_fn(data.n(), |i, _| data.y[i] - family.dpsi(eta[i]));
    data.x.transpose() * resid
}

#[derive(Debug, Clone)]
pub struct MleFit {
    pub beta: DVector<f64>,
    pub fisher: DMatrix<f64>,
    pub iterations: usize,
    pub gradient_norm: f64,
}

/// Unconstrained MLE by Newton–Raphson with step halving.
///
/// Convergence needs both a small score and a negligible Newton step; the
/// second condition catches separated data, where the score vanishes while the
/// iterates run off to infinity.
pub fn mle(family: GlmFamily, data: &Dataset) -> Result<MleFit> {
    let p = data.p();
    if data.n() < p || (data.x.transpose() * &data.x).cholesky().is_none() {
        return Err(Error::Singular("XᵀX is not invertible"));
    }
    let mut beta = DVector::zeros(p);
    let mut ll = log_likelihood(family, data, &beta);
    for iter in 0..MLE_MAX_ITER {
        let grad = score(family, data, &beta);
        let info = fisher_information(family, data, &beta);
        // XᵀX is invertible, so a singular information matrix means the
        // weights underflowed along a diverging path
        let chol = info.clone().cholesky().ok_or_else(|| Error::NoConvergence {
            iterations: iter,
            gradient_norm: grad.amax(),
            last: beta.iter().copied().collect(),
        })?;
        let step = chol.solve(&grad);
        let gnorm = grad.amax();
        if gnorm <= MLE_GRAD_TOL && step.amax() <= MLE_STEP_TOL * (1.0 + beta.amax()) {
            return Ok(MleFit { beta, fisher: info, iterations: iter, gradient_norm: gnorm });
        }
        // below the resolution of `ll` the line search cannot tell the full
        // Newton step from noise, and halving only stalls convergence
        if grad.dot(&step) <= 64.0 * f64::EPSILON * (1.0 + ll.abs()) {
            let cand = &beta + &step;
            let cand_ll = log_likelihood(family, data, &cand);
            if cand_ll.is_finite() {
                beta = cand;
                ll = cand_ll;
                continue;
            }
        }
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            let cand = &beta + &step * t;
            let cand_ll = log_likelihood(family, data, &cand);
            if cand_ll.is_finite() && cand_ll >= ll {
                beta = cand;
                ll = cand_ll;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // stalled at floating-point resolution
            let scale = 1.0 + (data.x.transpose() * &data.y).amax();
            if gnorm <= MLE_GRAD_TOL * scale {
                return Ok(MleFit { beta, fisher: info, iterations: iter, gradient_norm: gnorm });
            }
            return Err(Error::NoConvergence {
                iterations: iter + 1,
                gradient_norm: gnorm,
                last: beta.iter().copied().collect(),
            });
        }
    }
    let gnorm = score(family, data, &beta).amax();
    Err(Error::NoConvergence {
        iterations: MLE_MAX_ITER,
        gradient_norm: gnorm,
        last: beta.iter().copied().collect(),
    })
}
