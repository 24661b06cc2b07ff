//! Bernstein polynomial designs with monotone and bi-monotone shape
//! constraints on the basis coefficients.
//!
//! A Bernstein polynomial `Σ c_k b_k(x, N)` is non-decreasing whenever its
//! coefficient sequence is, so monotonicity reduces to first-difference rows
//! `c_{k+1} − c_k ≥ 0`. The same holds coordinate-wise for tensor products.
//!
//! The basis sums to one, so an intercept next to a full basis is collinear.
//! Designs built here carry an explicit intercept and drop the k = 0 column
//! of each additive component (the (0, 0) column of a tensor surface). The
//! dropped coefficient is pinned at zero, and the constraint rows are the
//! full difference rows with that column removed.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::analysis::{dic, DicReport};
use crate::constraints::ConstraintSet;
use crate::error::{Error, Result};
use crate::glm::{Dataset, GlmFamily};
use crate::samplers::{fit_lm, PriorSpec, SamplerConfig};

/// Slack allowed when mapping a covariate onto [0, 1].
const RANGE_SLACK: f64 = 1e-12;

fn ln_choose(n: usize, k: usize) -> f64 {
    (1..=k).map(|i| ((n - k + i) as f64).ln() - (i as f64).ln()).sum()
}

/// Basis `b_k(x, N) = C(N, k) x^k (1 − x)^{N−k}`, one row per point.
pub fn bernstein_design(x: &[f64], degree: usize) -> Result<DMatrix<f64>> {
    if let Some(&bad) = x.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::OutOfRange { value: bad, min: 0.0, max: 1.0 });
    }
    let n = degree;
    let logc: Vec<f64> = (0..=n).map(|k| ln_choose(n, k)).collect();
    Ok(DMatrix::from_fn(x.len(), n + 1, |i, k| {
        let t = x[i];
        if t == 0.0 {
            return if k == 0 { 1.0 } else { 0.0 };
        }
        if t == 1.0 {
            return if k == n { 1.0 } else { 0.0 };
        }
        (logc[k] + k as f64 * t.ln() + (n - k) as f64 * (-t).ln_1p()).exp()
    }))
}

fn require_degree(degree: usize) -> Result<()> {
    if degree == 0 {
        return Err(Error::InvalidConfig("shape constraints need degree >= 1".into()));
    }
    Ok(())
}

/// First differences over `N + 1` coefficients: `c_{k+1} − c_k ≥ 0`
/// (negated when decreasing).
pub fn monotone_constraint_matrix(degree: usize, increasing: bool) -> Result<ConstraintSet> {
    require_degree(degree)?;
    let sign = if increasing { 1.0 } else { -1.0 };
    let r = DMatrix::from_fn(degree, degree + 1, |i, j| {
        if j == i + 1 {
            sign
        } else if j == i {
            -sign
        } else {
            0.0
        }
    });
    ConstraintSet::new(r, DVector::zeros(degree), 0)
}

/// Non-decreasing along both coordinates of a `(N+1) × (N+1)` coefficient
/// field stored row-major (`k1 (N+1) + k2`). The first `N(N+1)` rows step
/// `k1`, the rest step `k2`. The rows are linearly dependent and kept so.
pub fn bimonotone_constraint_matrix(degree: usize) -> Result<ConstraintSet> {
    require_degree(degree)?;
    let side = degree + 1;
    let idx = |k1: usize, k2: usize| k1 * side + k2;
    let rows = 2 * degree * side;
    let mut r = DMatrix::zeros(rows, side * side);
    let mut row = 0;
    for k1 in 0..degree {
        for k2 in 0..side {
            r[(row, idx(k1 + 1, k2))] = 1.0;
            r[(row, idx(k1, k2))] = -1.0;
            row += 1;
        }
    }
    for k1 in 0..side {
        for k2 in 0..degree {
            r[(row, idx(k1, k2 + 1))] = 1.0;
            r[(row, idx(k1, k2))] = -1.0;
            row += 1;
        }
    }
    ConstraintSet::new(r, DVector::zeros(rows), 0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeMode {
    /// One non-decreasing component per covariate.
    MonotoneIncreasing,
    /// One non-increasing component per covariate.
    MonotoneDecreasing,
    /// A surface in two covariates, non-decreasing along each.
    TensorBimonotoneIncreasing,
}

/// Degree, mode and the training range used to rescale each covariate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BernsteinSpec {
    pub degree: usize,
    pub mode: ShapeMode,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub names: Vec<String>,
}

impl BernsteinSpec {
    /// Takes the rescaling range from the columns of `covariates`.
    pub fn from_data(covariates: &DMatrix<f64>, names: &[String], degree: usize, mode: ShapeMode) -> Result<Self> {
        require_degree(degree)?;
        let d = covariates.ncols();
        if names.len() != d {
            return Err(Error::DimensionMismatch("one name per covariate".into()));
        }
        if d == 0 || (mode == ShapeMode::TensorBimonotoneIncreasing && d != 2) {
            return Err(Error::InvalidConfig(
                "monotone designs need >= 1 covariate and tensor designs exactly 2".into(),
            ));
        }
        let min: Vec<f64> = covariates.column_iter().map(|c| c.min()).collect();
        let max: Vec<f64> = covariates.column_iter().map(|c| c.max()).collect();
        if min.iter().zip(&max).any(|(a, b)| !(a < b)) {
            return Err(Error::InvalidConfig("each covariate needs min < max".into()));
        }
        Ok(BernsteinSpec {
            degree,
            mode,
            min,
            max,
            names: names.to_vec(),
        })
    }

    pub fn num_covariates(&self) -> usize {
        self.min.len()
    }

    /// Number of design columns, intercept included.
    pub fn num_columns(&self) -> usize {
        let side = self.degree + 1;
        match self.mode {
            ShapeMode::TensorBimonotoneIncreasing => side * side,
            _ => 1 + self.num_covariates() * self.degree,
        }
    }

    fn rescale(&self, j: usize, v: f64) -> Result<f64> {
        let (lo, hi) = (self.min[j], self.max[j]);
        let t = (v - lo) / (hi - lo);
        if !(-RANGE_SLACK..=1.0 + RANGE_SLACK).contains(&t) {
            return Err(Error::OutOfRange { value: v, min: lo, max: hi });
        }
        Ok(t.clamp(0.0, 1.0))
    }

    fn basis(&self, covariates: &DMatrix<f64>, j: usize) -> Result<DMatrix<f64>> {
        let t: Vec<f64> = covariates
            .column(j)
            .iter()
            .map(|&v| self.rescale(j, v))
            .collect::<Result<_>>()?;
        bernstein_design(&t, self.degree)
    }

    /// Design matrix (intercept first) for covariates inside the training range.
    pub fn design(&self, covariates: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if covariates.ncols() != self.num_covariates() {
            return Err(Error::DimensionMismatch("covariate count differs from the fitted basis".into()));
        }
        let n = covariates.nrows();
        let bases: Vec<DMatrix<f64>> = (0..self.num_covariates())
            .map(|j| self.basis(covariates, j))
            .collect::<Result<_>>()?;
        let side = self.degree + 1;
        let mut x = DMatrix::zeros(n, self.num_columns());
        x.column_mut(0).fill(1.0);
        match self.mode {
            ShapeMode::TensorBimonotoneIncreasing => {
                for i in 0..n {
                    for k1 in 0..side {
                        for k2 in 0..side {
                            let col = k1 * side + k2;
                            if col > 0 {
                                x[(i, col)] = bases[0][(i, k1)] * bases[1][(i, k2)];
                            }
                        }
                    }
                }
            }
            _ => {
                for (j, b) in bases.iter().enumerate() {
                    for k in 1..side {
                        x.set_column(1 + j * self.degree + k - 1, &b.column(k));
                    }
                }
            }
        }
        Ok(x)
    }

    pub fn column_names(&self) -> Vec<String> {
        let side = self.degree + 1;
        let mut names = vec!["intercept".to_string()];
        match self.mode {
            ShapeMode::TensorBimonotoneIncreasing => {
                for k1 in 0..side {
                    for k2 in 0..side {
                        if k1 + k2 > 0 {
                            names.push(format!("{}_{}_b{}_{}", self.names[0], self.names[1], k1, k2));
                        }
                    }
                }
            }
            _ => {
                for name in &self.names {
                    names.extend((1..side).map(|k| format!("{name}_b{k}")));
                }
            }
        }
        names
    }

    /// Shape rows over the design columns.
    pub fn constraints(&self) -> Result<ConstraintSet> {
        let p = self.num_columns();
        let (full, blocks): (ConstraintSet, usize) = match self.mode {
            ShapeMode::TensorBimonotoneIncreasing => (bimonotone_constraint_matrix(self.degree)?, 1),
            ShapeMode::MonotoneIncreasing => (monotone_constraint_matrix(self.degree, true)?, self.num_covariates()),
            ShapeMode::MonotoneDecreasing => (monotone_constraint_matrix(self.degree, false)?, self.num_covariates()),
        };
        let a = full.matrix();
        let width = a.ncols() - 1;
        let rows = a.nrows();
        let mut r = DMatrix::zeros(rows * blocks, p);
        for blk in 0..blocks {
            for i in 0..rows {
                for c in 1..a.ncols() {
                    r[(blk * rows + i, 1 + blk * width + c - 1)] = a[(i, c)];
                }
            }
        }
        ConstraintSet::new(r, DVector::zeros(rows * blocks), 0)
    }

    /// Assembles the constrained regression problem for `y` on `covariates`.
    pub fn problem(&self, covariates: &DMatrix<f64>, y: &DVector<f64>) -> Result<(Dataset, ConstraintSet)> {
        let x = self.design(covariates)?;
        let n = y.len();
        let data = Dataset::with_offset(x, y.clone(), DVector::zeros(n), self.column_names())?;
        Ok((data, self.constraints()?))
    }
}

/// Fits every candidate degree with [`fit_lm`] and returns the one with the
/// lowest DIC (ties to the smaller degree) together with the DIC of each
/// candidate, in input order.
pub fn select_degree_by_dic<F>(
    candidates: &[usize],
    cfg: &SamplerConfig,
    mut build: F,
) -> Result<(usize, Vec<(usize, DicReport)>)>
where
    F: FnMut(usize) -> Result<(Dataset, ConstraintSet, PriorSpec)>,
{
    if candidates.is_empty() {
        return Err(Error::InvalidConfig("no candidate degrees".into()));
    }
    let mut table = Vec::with_capacity(candidates.len());
    for &degree in candidates {
        let (data, cs, prior) = build(degree)?;
        let samples = fit_lm(&data, &cs, &prior, cfg)?;
        table.push((degree, dic(&samples, &data, GlmFamily::Gaussian)?));
    }
    let best = table
        .iter()
        .min_by(|a, b| a.1.dic.total_cmp(&b.1.dic).then(a.0.cmp(&b.0)))
        .map(|e| e.0)
        .expect("non-empty table");
    Ok((best, table))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};
    use proptest::prelude::*;

    #[test]
    fn endpoint_rows() {
        let b = bernstein_design(&[0.0, 1.0], 4).unwrap();
        assert_eq!(b.row(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(b.row(1).iter().copied().collect::<Vec<_>>(), vec![0.0, 0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn midpoint_degree_two() {
        let b = bernstein_design(&[0.5], 2).unwrap();
        for (got, want) in b.iter().zip([0.25, 0.5, 0.25]) {
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn degree_zero_is_constant() {
        let b = bernstein_design(&[0.0, 0.3, 1.0], 0).unwrap();
        assert_eq!(b, DMatrix::from_element(3, 1, 1.0));
    }

    #[test]
    fn out_of_range_rejected() {
        assert!(matches!(bernstein_design(&[1.2], 3), Err(Error::OutOfRange { .. })));
        assert!(bernstein_design(&[f64::NAN], 3).is_err());
    }

    #[test]
    fn monotone_matrices() {
        let inc = monotone_constraint_matrix(2, true).unwrap();
        assert_eq!(inc.matrix(), &dmatrix![-1.0, 1.0, 0.0; 0.0, -1.0, 1.0]);
        assert!(inc.rhs().iter().all(|&v| v == 0.0));
        let dec = monotone_constraint_matrix(1, false).unwrap();
        assert_eq!(dec.matrix(), &dmatrix![1.0, -1.0]);
        assert!(inc.is_satisfied(&dvector![0.0, 1.0, 2.0], 0.0));
        let r = inc.matrix() * dvector![0.0, 2.0, 1.0];
        assert!(r[0] >= 0.0 && r[1] < 0.0);
        assert!(monotone_constraint_matrix(0, true).is_err());
    }

    #[test]
    fn bimonotone_degree_one() {
        let cs = bimonotone_constraint_matrix(1).unwrap();
        // columns: b00, b01, b10, b11
        let want = dmatrix![
            -1.0, 0.0, 1.0, 0.0;
            0.0, -1.0, 0.0, 1.0;
            -1.0, 1.0, 0.0, 0.0;
            0.0, 0.0, -1.0, 1.0
        ];
        assert_eq!(cs.matrix(), &want);
        let rank = cs.matrix().clone().svd(false, false).rank(1e-10);
        assert_eq!(rank, 3);
        assert!(cs.is_satisfied(&DVector::from_element(4, 2.5), 0.0));
        assert_eq!(cs.min_inequality_slack(&DVector::from_element(4, 2.5)), 0.0);
    }

    #[test]
    fn bimonotone_dimensions() {
        for n in 1..5 {
            let cs = bimonotone_constraint_matrix(n).unwrap();
            assert_eq!(cs.matrix().shape(), (2 * n * (n + 1), (n + 1) * (n + 1)));
        }
    }

    #[test]
    fn additive_design_layout() {
        let cov = dmatrix![0.0, 10.0; 1.0, 20.0; 0.5, 15.0];
        let names = vec!["n".to_string(), "p".to_string()];
        let spec = BernsteinSpec::from_data(&cov, &names, 2, ShapeMode::MonotoneIncreasing).unwrap();
        let x = spec.design(&cov).unwrap();
        assert_eq!(x.shape(), (3, 5));
        assert_eq!(spec.column_names(), vec!["intercept", "n_b1", "n_b2", "p_b1", "p_b2"]);
        assert!((x[(2, 1)] - 0.5).abs() < 1e-15 && (x[(2, 4)] - 0.25).abs() < 1e-15);
        let cs = spec.constraints().unwrap();
        assert_eq!(cs.matrix().shape(), (4, 5));
        // first row of each block: c_1 − c_0 with c_0 = 0
        assert_eq!(cs.matrix().row(0).iter().copied().collect::<Vec<_>>(), vec![0.0, 1.0, 0.0, 0.0, 0.0]);
        assert_eq!(cs.matrix().row(3).iter().copied().collect::<Vec<_>>(), vec![0.0, 0.0, 0.0, -1.0, 1.0]);
        // full column rank, unlike intercept + complete bases
        assert_eq!(x.clone().svd(false, false).rank(1e-10), 3);
        let bigger = DMatrix::from_fn(40, 2, |i, j| (i as f64 * (0.13 + j as f64 * 0.29)).sin());
        let s2 = BernsteinSpec::from_data(&bigger, &names, 2, ShapeMode::MonotoneIncreasing).unwrap();
        assert_eq!(s2.design(&bigger).unwrap().svd(false, false).rank(1e-10), 5);
    }

    #[test]
    fn tensor_design_layout() {
        let cov = DMatrix::from_fn(30, 2, |i, j| (i as f64 * (0.3 + j as f64 * 0.5)).cos());
        let names = vec!["a".to_string(), "b".to_string()];
        let spec = BernsteinSpec::from_data(&cov, &names, 2, ShapeMode::TensorBimonotoneIncreasing).unwrap();
        let x = spec.design(&cov).unwrap();
        assert_eq!(x.shape(), (30, 9));
        assert_eq!(spec.column_names()[1], "a_b_b0_1");
        assert_eq!(x.clone().svd(false, false).rank(1e-10), 9);
        let cs = spec.constraints().unwrap();
        assert_eq!(cs.matrix().shape(), (12, 9));
        assert!(BernsteinSpec::from_data(&cov.columns(0, 1).into_owned(), &names[..1], 2, ShapeMode::TensorBimonotoneIncreasing).is_err());
    }

    #[test]
    fn prediction_outside_training_range_refused() {
        let cov = dmatrix![0.0; 2.0];
        let spec = BernsteinSpec::from_data(&cov, &["x".to_string()], 3, ShapeMode::MonotoneDecreasing).unwrap();
        assert!(matches!(spec.design(&dmatrix![2.5]), Err(Error::OutOfRange { .. })));
        assert!(spec.design(&dmatrix![1.0]).is_ok());
    }

    #[test]
    fn single_candidate_selected() {
        let x = DMatrix::from_fn(30, 1, |i, _| i as f64 / 29.0);
        let y = x.column(0).map(|v| v * v + 0.01 * (v * 40.0).sin());
        let cfg = SamplerConfig { n_iter: 600, burn_in: 100, thin: 1, seed: 1, n_chains: 1, inner_sweeps: 1 };
        let (best, table) = select_degree_by_dic(&[3], &cfg, |n| {
            let spec = BernsteinSpec::from_data(&x, &["x".to_string()], n, ShapeMode::MonotoneIncreasing)?;
            let (data, cs) = spec.problem(&x, &y)?;
            let p = data.p();
            Ok((data, cs, PriorSpec::vague(p)))
        })
        .unwrap();
        assert_eq!(best, 3);
        assert_eq!(table.len(), 1);
        assert!(table[0].1.dic.is_finite());
        assert!(select_degree_by_dic(&[], &cfg, |_| unreachable!()).is_err());
    }

    proptest! {
        #[test]
        fn partition_of_unity(x in 0.0f64..=1.0, n in 0usize..40) {
            let b = bernstein_design(&[x], n).unwrap();
            prop_assert!((b.sum() - 1.0).abs() < 1e-12);
            prop_assert!(b.iter().all(|&v| v >= 0.0));
        }

        #[test]
        fn monotone_coefficients_give_monotone_curves(
            steps in proptest::collection::vec(0.0f64..2.0, 1..8)
        ) {
            let n = steps.len();
            let coefs: Vec<f64> = std::iter::once(0.0)
                .chain(steps.iter().scan(0.0, |s, d| { *s += d; Some(*s) }))
                .collect();
            let grid: Vec<f64> = (0..100).map(|i| i as f64 / 99.0).collect();
            let f = bernstein_design(&grid, n).unwrap() * DVector::from_vec(coefs);
            for w in f.as_slice().windows(2) {
                prop_assert!(w[1] - w[0] >= -1e-12);
            }
        }
    }
}
