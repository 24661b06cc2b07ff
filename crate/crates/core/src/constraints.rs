//! Linear equality/inequality constraint systems on regression coefficients.
//!
//! A [`ConstraintSet`] stores `R β ≥ b` where the first `num_equality` rows are
//! read as equalities `R_k β = b_k`. Slack comparisons are always made on the
//! row-normalized system (each row of `R` scaled to unit Euclidean norm) so the
//! tolerances are scale invariant; the user's scale is kept for I/O.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute slack tolerance on the row-normalized system.
pub const FEASIBILITY_TOL: f64 = 1e-8;

/// Largest admissible condition number of the eliminated equality block.
pub const PIVOT_CONDITION_MAX: f64 = 1e8;

const RANK_TOL: f64 = 1e-10;

/// Margins (row-normalized units) tried, largest first, when pushing a feasible
/// point into the interior of the polytope.
const INTERIOR_MARGINS: [f64; 8] = [1.0, 0.3, 0.1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6];
const INTERIOR_SWEEPS: usize = 500;

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSet {
    r: DMatrix<f64>,
    b: DVector<f64>,
    num_equality: usize,
    equality_rank: usize,
}

/// On-disk form: `{"R": [[...]], "b": [...], "num_equality": m1}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConstraintFile {
    #[serde(rename = "R")]
    pub r: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    #[serde(default)]
    pub num_equality: usize,
}

impl ConstraintSet {
    /// Builds a set after checking dimensions and the rank of the equality block.
    pub fn new(r: DMatrix<f64>, b: DVector<f64>, num_equality: usize) -> Result<Self> {
        if r.ncols() == 0 {
            return Err(Error::DimensionMismatch("constraint matrix needs p >= 1 columns".into()));
        }
        if r.nrows() != b.len() {
            return Err(Error::DimensionMismatch(format!(
                "R has {} rows but b has length {}",
                r.nrows(),
                b.len()
            )));
        }
        if num_equality > r.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "num_equality = {} exceeds the {} constraint rows",
                num_equality,
                r.nrows()
            )));
        }
        if r.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::DimensionMismatch("constraint entries must be finite".into()));
        }
        let mut set = ConstraintSet {
            r,
            b,
            num_equality,
            equality_rank: 0,
        };
        if num_equality > 0 {
            let (eq, _) = set.normalized_equalities();
            let rank = numerical_rank(&eq);
            if rank < num_equality {
                return Err(Error::RankDeficientEqualities {
                    rank,
                    rows: num_equality,
                });
            }
            set.equality_rank = rank;
        }
        Ok(set)
    }

    /// A set with no rows: the whole of R^p.
    pub fn unconstrained(p: usize) -> Self {
        ConstraintSet {
            r: DMatrix::zeros(0, p),
            b: DVector::zeros(0),
            num_equality: 0,
            equality_rank: 0,
        }
    }

    /// Inequality-only set `R β ≥ b`.
    pub fn inequalities(r: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        Self::new(r, b, 0)
    }

    /// Full validation: dimensions, equality rank and a certified feasible point.
    pub fn validate(self) -> Result<Self> {
        self.find_feasible_point(10_000, FEASIBILITY_TOL)?;
        Ok(self)
    }

    pub fn from_file(file: &ConstraintFile) -> Result<Self> {
        let m = file.r.len();
        let p = file.r.first().map_or(0, Vec::len);
        if file.r.iter().any(|row| row.len() != p) {
            return Err(Error::DimensionMismatch("ragged constraint matrix".into()));
        }
        let r = DMatrix::from_fn(m, p, |i, j| file.r[i][j]);
        Self::new(r, DVector::from_vec(file.b.clone()), file.num_equality)
    }

    pub fn to_file(&self) -> ConstraintFile {
        ConstraintFile {
            r: self
                .r
                .row_iter()
                .map(|row| row.iter().copied().collect())
                .collect(),
            b: self.b.iter().copied().collect(),
            num_equality: self.num_equality,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ConstraintFile = serde_json::from_str(text)?;
        Self::from_file(&file)
    }

    /// Parses a constraint file whose matrix may be empty; `p` supplies the
    /// coefficient dimension in that case.
    pub fn from_json_with_dim(text: &str, p: usize) -> Result<Self> {
        let file: ConstraintFile = serde_json::from_str(text)?;
        if file.r.is_empty() {
            if !file.b.is_empty() || file.num_equality != 0 {
                return Err(Error::DimensionMismatch("empty R with non-empty b".into()));
            }
            return Ok(Self::unconstrained(p));
        }
        let set = Self::from_file(&file)?;
        if set.dim() != p {
            return Err(Error::DimensionMismatch(format!(
                "constraints have {} columns, design has {}",
                set.dim(),
                p
            )));
        }
        Ok(set)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("constraint file serializes")
    }

    pub fn dim(&self) -> usize {
        self.r.ncols()
    }

    pub fn num_rows(&self) -> usize {
        self.r.nrows()
    }

    pub fn num_equality(&self) -> usize {
        self.num_equality
    }

    pub fn num_inequality(&self) -> usize {
        self.r.nrows() - self.num_equality
    }

    pub fn equality_rank(&self) -> usize {
        self.equality_rank
    }

    pub fn is_empty(&self) -> bool {
        self.r.nrows() == 0
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.r
    }

    pub fn rhs(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn equality_block(&self) -> (DMatrix<f64>, DVector<f64>) {
        (
            self.r.rows(0, self.num_equality).into_owned(),
            self.b.rows(0, self.num_equality).into_owned(),
        )
    }

    pub fn inequality_block(&self) -> (DMatrix<f64>, DVector<f64>) {
        let k = self.num_inequality();
        (
            self.r.rows(self.num_equality, k).into_owned(),
            self.b.rows(self.num_equality, k).into_owned(),
        )
    }

    /// Row-normalized copy of `(R, b)`. Zero rows are left untouched.
    pub fn normalized(&self) -> (DMatrix<f64>, DVector<f64>) {
        normalize_rows(&self.r, &self.b)
    }

    fn normalized_equalities(&self) -> (DMatrix<f64>, DVector<f64>) {
        let (e, be) = self.equality_block();
        normalize_rows(&e, &be)
    }

    /// Largest violation over all rows on the normalized scale: `|R_k β − b_k|`
    /// for equalities and `max(0, b_k − R_k β)` for inequalities.
    pub fn max_violation(&self, beta: &DVector<f64>) -> f64 {
        let (rn, bn) = self.normalized();
        let resid = &rn * beta - &bn;
        resid
            .iter()
            .enumerate()
            .map(|(k, &v)| if k < self.num_equality { v.abs() } else { (-v).max(0.0) })
            .fold(0.0, f64::max)
    }

    /// Smallest normalized inequality slack (`+∞` when there are no inequalities).
    pub fn min_inequality_slack(&self, beta: &DVector<f64>) -> f64 {
        let (rn, bn) = self.normalized();
        let resid = &rn * beta - &bn;
        resid
            .iter()
            .skip(self.num_equality)
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn is_satisfied(&self, beta: &DVector<f64>, tol: f64) -> bool {
        beta.len() == self.dim() && self.max_violation(beta) <= tol
    }

    /// Concatenates two inequality-only sets over the same coefficients.
    pub fn stack(&self, other: &ConstraintSet) -> Result<ConstraintSet> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch("stacked sets differ in dimension".into()));
        }
        if other.num_equality > 0 && self.num_inequality() > 0 {
            return Err(Error::InvalidConfig(
                "cannot stack equality rows after inequality rows".into(),
            ));
        }
        let m = self.num_rows() + other.num_rows();
        let r = DMatrix::from_fn(m, self.dim(), |i, j| {
            if i < self.num_rows() {
                self.r[(i, j)]
            } else {
                other.r[(i - self.num_rows(), j)]
            }
        });
        let b = DVector::from_fn(m, |i, _| {
            if i < self.num_rows() {
                self.b[i]
            } else {
                other.b[i - self.num_rows()]
            }
        });
        ConstraintSet::new(r, b, self.num_equality + other.num_equality)
    }

    /// Finds a point of Ω by alternating projections, starting from the origin.
    pub fn find_feasible_point(&self, max_iter: usize, tol: f64) -> Result<DVector<f64>> {
        self.find_feasible_point_from(&DVector::zeros(self.dim()), max_iter, tol)
    }

    /// Alternating projections started from `start`: first onto the equality
    /// subspace, then cyclically onto violated half-spaces inside it. The result
    /// is then pushed into the interior by re-projecting onto shrunken
    /// half-spaces `R_k β ≥ b_k + margin` for the largest margin that works.
    pub fn find_feasible_point_from(
        &self,
        start: &DVector<f64>,
        max_iter: usize,
        tol: f64,
    ) -> Result<DVector<f64>> {
        if start.len() != self.dim() {
            return Err(Error::DimensionMismatch("start point has wrong length".into()));
        }
        let proj = AffineProjector::new(self)?;
        let (g, gb) = {
            let (g, gb) = self.inequality_block();
            normalize_rows(&g, &gb)
        };
        let dirs: Vec<DVector<f64>> = (0..g.nrows())
            .map(|k| proj.project_direction(&g.row(k).transpose()))
            .collect();

        let x0 = proj.project(start);
        let feasible = pocs(&proj, &g, &gb, &dirs, x0, 0.0, tol, max_iter)
            .ok_or_else(|| {
                Error::Infeasible(format!(
                    "alternating projections did not converge in {max_iter} sweeps"
                ))
            })?;

        let mut best = feasible;
        for margin in INTERIOR_MARGINS {
            if let Some(x) = pocs(
                &proj,
                &g,
                &gb,
                &dirs,
                best.clone(),
                margin,
                tol,
                INTERIOR_SWEEPS.min(max_iter.max(1)),
            ) {
                best = x;
                break;
            }
        }
        if self.max_violation(&best) > tol {
            return Err(Error::Infeasible(format!(
                "projected point still violates the constraints by {:e}",
                self.max_violation(&best)
            )));
        }
        Ok(best)
    }

    /// Eliminates the binding rows, choosing pivot columns by column-pivoted QR.
    pub fn eliminate_equalities(&self, x: &DMatrix<f64>) -> Result<ReparamMap> {
        if self.num_equality == 0 {
            return Err(Error::InvalidConfig("no equality rows to eliminate".into()));
        }
        let (e, _) = self.normalized_equalities();
        let pivots = pivoted_qr_columns(&e, self.num_equality);
        self.eliminate_with_pivots(x, &pivots)
    }

    /// Eliminates the binding rows by solving them for the given columns.
    pub fn eliminate_with_pivots(&self, x: &DMatrix<f64>, pivots: &[usize]) -> Result<ReparamMap> {
        let p = self.dim();
        let m1 = self.num_equality;
        if x.ncols() != p {
            return Err(Error::DimensionMismatch(format!(
                "design has {} columns, constraints have {}",
                x.ncols(),
                p
            )));
        }
        if pivots.len() != m1 || pivots.iter().any(|&c| c >= p) {
            return Err(Error::InvalidConfig("pivot set must name m1 distinct columns".into()));
        }
        let mut is_pivot = vec![false; p];
        for &c in pivots {
            if is_pivot[c] {
                return Err(Error::InvalidConfig("duplicate pivot column".into()));
            }
            is_pivot[c] = true;
        }
        let free: Vec<usize> = (0..p).filter(|&c| !is_pivot[c]).collect();
        let alpha = free.len();

        let (e, be) = self.normalized_equalities();
        let r11 = DMatrix::from_fn(m1, m1, |i, j| e[(i, pivots[j])]);
        let r12 = DMatrix::from_fn(m1, alpha, |i, j| e[(i, free[j])]);
        let condition = condition_number(&r11);
        if !(condition <= PIVOT_CONDITION_MAX) {
            return Err(Error::PivotFailure {
                condition,
                threshold: PIVOT_CONDITION_MAX,
            });
        }
        let lu = r11.lu();
        let solved_rhs = lu.solve(&be).ok_or(Error::Singular("equality pivot block"))?;
        let solved_free = lu.solve(&r12).ok_or(Error::Singular("equality pivot block"))?;

        let mut a = DMatrix::zeros(p, alpha);
        let mut nu = DVector::zeros(p);
        for (i, &c) in free.iter().enumerate() {
            a[(c, i)] = 1.0;
        }
        for (i, &c) in pivots.iter().enumerate() {
            nu[c] = solved_rhs[i];
            for j in 0..alpha {
                a[(c, j)] = -solved_free[(i, j)];
            }
        }

        let (g, gb) = self.inequality_block();
        let d = &g * &a;
        let w = &gb - &g * &nu;
        let u = x * &a;
        let delta = x * &nu;
        Ok(ReparamMap {
            a,
            nu,
            u,
            delta,
            d,
            w,
            alpha,
            eliminated: pivots.to_vec(),
            free,
        })
    }
}

/// `β = Aγ + ν`, `Xβ = Uγ + δ` and `Dγ ≥ w` after eliminating binding rows.
#[derive(Debug, Clone)]
pub struct ReparamMap {
    pub a: DMatrix<f64>,
    pub nu: DVector<f64>,
    pub u: DMatrix<f64>,
    pub delta: DVector<f64>,
    pub d: DMatrix<f64>,
    pub w: DVector<f64>,
    pub alpha: usize,
    /// Columns of β solved for by the equality rows.
    pub eliminated: Vec<usize>,
    /// Columns of β kept as the reduced coordinates γ, in ascending order.
    pub free: Vec<usize>,
}

impl ReparamMap {
    pub fn to_beta(&self, gamma: &DVector<f64>) -> DVector<f64> {
        &self.a * gamma + &self.nu
    }

    pub fn to_gamma(&self, beta: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.alpha, self.free.iter().map(|&c| beta[c]))
    }

    /// The reduced inequality system `Dγ ≥ w`.
    pub fn reduced_constraints(&self) -> Result<ConstraintSet> {
        if self.d.nrows() == 0 {
            return Ok(ConstraintSet::unconstrained(self.alpha.max(1)));
        }
        ConstraintSet::new(self.d.clone(), self.w.clone(), 0)
    }
}

/// Orthogonal projection onto `{β : E β = e}` (identity when there are no equalities).
struct AffineProjector {
    e: DMatrix<f64>,
    be: DVector<f64>,
    gram: Option<nalgebra::Cholesky<f64, nalgebra::Dyn>>,
}

impl AffineProjector {
    fn new(set: &ConstraintSet) -> Result<Self> {
        let (e, be) = set.normalized_equalities();
        let gram = if e.nrows() > 0 {
            Some(
                (&e * e.transpose())
                    .cholesky()
                    .ok_or(Error::RankDeficientEqualities {
                        rank: numerical_rank(&e),
                        rows: e.nrows(),
                    })?,
            )
        } else {
            None
        };
        Ok(AffineProjector { e, be, gram })
    }

    fn project(&self, x: &DVector<f64>) -> DVector<f64> {
        match &self.gram {
            None => x.clone(),
            Some(chol) => {
                let resid = &self.e * x - &self.be;
                x - self.e.transpose() * chol.solve(&resid)
            }
        }
    }

    fn project_direction(&self, v: &DVector<f64>) -> DVector<f64> {
        match &self.gram {
            None => v.clone(),
            Some(chol) => v - self.e.transpose() * chol.solve(&(&self.e * v)),
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn pocs(
    proj: &AffineProjector,
    g: &DMatrix<f64>,
    gb: &DVector<f64>,
    dirs: &[DVector<f64>],
    mut x: DVector<f64>,
    margin: f64,
    tol: f64,
    max_sweeps: usize,
) -> Option<DVector<f64>> {
    // Aim a little past the target so the last projection does not land on the boundary.
    let target_pad = 0.5 * tol;
    for _ in 0..max_sweeps {
        let mut moved = false;
        for k in 0..g.nrows() {
            let slack = g.row(k).dot(&x.transpose()) - gb[k] - margin;
            if slack >= 0.0 {
                continue;
            }
            let dir = &dirs[k];
            let norm2 = dir.norm_squared();
            if norm2 < 1e-20 {
                // Row is constant on the equality subspace.
                if slack < -tol {
                    return None;
                }
                continue;
            }
            x.axpy((target_pad - slack) / norm2, dir, 1.0);
            moved = true;
        }
        x = proj.project(&x);
        if !moved {
            return Some(x);
        }
    }
    None
}

pub(crate) fn normalize_rows(r: &DMatrix<f64>, b: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let mut rn = r.clone();
    let mut bn = b.clone();
    for k in 0..r.nrows() {
        let norm = r.row(k).norm();
        if norm > 0.0 {
            rn.row_mut(k).scale_mut(1.0 / norm);
            bn[k] /= norm;
        }
    }
    (rn, bn)
}

fn numerical_rank(m: &DMatrix<f64>) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().copied().fold(0.0, f64::max);
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_TOL * max).count()
}

fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Businger–Golub column pivoting: repeatedly picks the column with the largest
/// norm after removing its components along the columns already picked.
fn pivoted_qr_columns(e: &DMatrix<f64>, count: usize) -> Vec<usize> {
    let mut work = e.clone();
    let mut chosen = Vec::with_capacity(count);
    for _ in 0..count {
        let (best, _) = (0..work.ncols())
            .filter(|c| !chosen.contains(c))
            .map(|c| (c, work.column(c).norm_squared()))
            .fold((usize::MAX, -1.0), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
        chosen.push(best);
        let q = work.column(best).normalize();
        for c in 0..work.ncols() {
            let proj = q.dot(&work.column(c));
            let mut col = work.column_mut(c);
            col.axpy(-proj, &q, 1.0);
        }
    }
    chosen
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};
    use proptest::prelude::*;

    fn trapezoid() -> ConstraintSet {
        ConstraintSet::new(
            dmatrix![1.0, 0.0; 0.0, 1.0; 1.0, 1.0; -1.0, -1.0],
            dvector![0.0, 0.0, 0.5, -1.0],
            0,
        )
        .unwrap()
    }

    fn scenario_b() -> ConstraintSet {
        ConstraintSet::new(
            dmatrix![0.0, 1.0, 1.0, 1.0; 0.0, 0.0, 1.0, 0.0; 0.0, 0.0, 0.0, 1.0],
            dvector![0.0, 0.0, 0.0],
            1,
        )
        .unwrap()
    }

    fn scenario_c() -> ConstraintSet {
        let p = 11;
        let r = DMatrix::from_fn(11, p, |i, j| if i == 0 || i == j + 1 { 1.0 } else { 0.0 });
        let b = DVector::from_fn(11, |i, _| if i == 0 { 12.0 } else { 0.9 });
        ConstraintSet::new(r, b, 1).unwrap()
    }

    #[test]
    fn orthant_is_valid() {
        let cs = ConstraintSet::new(dmatrix![1.0, 0.0; 0.0, 1.0], dvector![0.0, 0.0], 0)
            .unwrap()
            .validate()
            .unwrap();
        assert_eq!(cs.num_inequality(), 2);
    }

    #[test]
    fn duplicate_equalities_rejected() {
        let err = ConstraintSet::new(dmatrix![1.0, 1.0; 1.0, 1.0], dvector![0.0, 1.0], 2).unwrap_err();
        assert!(matches!(err, Error::RankDeficientEqualities { rank: 1, rows: 2 }));
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let err = ConstraintSet::new(dmatrix![1.0, 0.0], dvector![0.0, 1.0], 0).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch(_)));
        let err = ConstraintSet::new(dmatrix![1.0, 0.0], dvector![0.0], 2).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch(_)));
    }

    #[test]
    fn trapezoid_feasible_point_checks_by_substitution() {
        let cs = trapezoid().validate().unwrap();
        let x = cs.find_feasible_point(1000, FEASIBILITY_TOL).unwrap();
        assert!(x[0] >= 0.0 && x[1] >= 0.0);
        let s = x[0] + x[1];
        assert!((0.5..=1.0).contains(&s), "{x}");
        // pushed off the boundary
        assert!(cs.min_inequality_slack(&x) > 1e-7);
    }

    #[test]
    fn empty_interval_is_infeasible() {
        let cs = ConstraintSet::new(dmatrix![1.0; -1.0], dvector![1.0, 0.0], 0).unwrap();
        assert!(matches!(cs.find_feasible_point(500, FEASIBILITY_TOL), Err(Error::Infeasible(_))));
        assert!(matches!(cs.validate(), Err(Error::Infeasible(_))));
    }

    #[test]
    fn scenario_b_feasible_point() {
        let cs = scenario_b();
        let x = cs.find_feasible_point(1000, FEASIBILITY_TOL).unwrap();
        assert!((x[1] + x[2] + x[3]).abs() < 1e-10);
        assert!(x[2] >= 0.0 && x[3] >= 0.0);
        assert!(cs.is_satisfied(&x, FEASIBILITY_TOL));
    }

    #[test]
    fn unconstrained_has_no_rows() {
        let cs = ConstraintSet::unconstrained(3);
        assert!(cs.is_empty());
        let x = cs.find_feasible_point(10, FEASIBILITY_TOL).unwrap();
        assert_eq!(x, DVector::zeros(3));
    }

    #[test]
    fn zero_inequality_row() {
        let ok = ConstraintSet::new(dmatrix![0.0, 0.0], dvector![-1.0], 0).unwrap();
        assert!(ok.find_feasible_point(10, FEASIBILITY_TOL).is_ok());
        let bad = ConstraintSet::new(dmatrix![0.0, 0.0], dvector![1.0], 0).unwrap();
        assert!(bad.find_feasible_point(10, FEASIBILITY_TOL).is_err());
    }

    #[test]
    fn scenario_b_elimination() {
        let cs = scenario_b();
        let x = DMatrix::from_fn(7, 4, |i, j| ((i * 4 + j) as f64).sin());
        let map = cs.eliminate_equalities(&x).unwrap();
        assert_eq!(map.alpha, 3);
        for t in 0..20 {
            let g = DVector::from_fn(3, |i, _| ((t * 3 + i) as f64 * 0.7).cos() * 3.0);
            let beta = map.to_beta(&g);
            assert!((beta[1] + beta[2] + beta[3]).abs() < 1e-12);
            assert_eq!(map.to_gamma(&beta), g);
        }
    }

    #[test]
    fn two_dim_equal_coefficients() {
        let cs = ConstraintSet::new(dmatrix![1.0, -1.0], dvector![0.0], 1).unwrap();
        let map = cs.eliminate_equalities(&DMatrix::zeros(0, 2)).unwrap();
        assert_eq!(map.alpha, 1);
        assert!(map.nu.norm() == 0.0);
        let beta = map.to_beta(&dvector![2.5]);
        assert!((beta[0] - 2.5).abs() < 1e-15 && (beta[1] - 2.5).abs() < 1e-15);
    }

    #[test]
    fn scenario_c_offsets_match_substitution() {
        let cs = scenario_c();
        let x = DMatrix::from_fn(100, 11, |i, j| (((i * 11 + j) as f64) * 0.37).sin() * 0.5);
        let map = cs.eliminate_equalities(&x).unwrap();
        assert_eq!(map.alpha, 10);
        // δ is the eliminated design column times the solved right-hand side
        let c = map.eliminated[0];
        let expected_delta = x.column(c) * map.nu[c];
        assert!((&map.delta - expected_delta).amax() < 1e-10);
        assert!((map.nu[c] - 12.0).abs() < 1e-12);
        for t in 0..10 {
            let g = DVector::from_fn(10, |i, _| 1.0 + ((t * 10 + i) as f64).sin());
            let beta = map.to_beta(&g);
            assert!((beta.sum() - 12.0).abs() < 1e-10);
            let lhs = &x * &beta;
            let rhs = &map.u * &g + &map.delta;
            assert!((lhs - rhs).amax() < 1e-10 * (1.0 + x.amax()));
        }
    }

    #[test]
    fn ill_conditioned_pivot_rejected() {
        let cs = ConstraintSet::new(dmatrix![1.0, 1e-12, 0.0; 0.0, 1e-12, 1.0], dvector![0.0, 0.0], 2)
            .unwrap();
        // Pivoting picks columns 0 and 2, which is fine.
        assert!(cs.eliminate_equalities(&DMatrix::zeros(0, 3)).is_ok());
        let err = cs
            .eliminate_with_pivots(&DMatrix::zeros(0, 3), &[0, 1])
            .unwrap_err();
        assert!(matches!(err, Error::PivotFailure { .. }));
    }

    #[test]
    fn json_round_trip_preserves_scale() {
        let cs = ConstraintSet::new(dmatrix![2.0, 0.0; 0.0, -3.0], dvector![1.0, -6.0], 1).unwrap();
        let back = ConstraintSet::from_json(&cs.to_json()).unwrap();
        assert_eq!(back, cs);
    }

    fn random_gamma(seed: u64, n: usize) -> DVector<f64> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        DVector::from_fn(n, |_, _| rng.random_range(-5.0..5.0))
    }

    proptest! {
        #[test]
        fn reparam_invariants(seed in 0u64..1000, n in 1usize..12) {
            let cs = scenario_b();
            let x = DMatrix::from_fn(n, 4, |i, j| (((seed as usize + i * 4 + j) as f64) * 1.3).sin());
            let map = cs.eliminate_equalities(&x).unwrap();
            let (eq, beq) = cs.equality_block();
            let (ineq, bin) = cs.inequality_block();
            for t in 0..100u64 {
                let g = random_gamma(seed * 1000 + t, map.alpha);
                let beta = map.to_beta(&g);
                let resid = (&eq * &beta - &beq).amax();
                prop_assert!(resid <= 1e-10 * (1.0 + beq.norm()));
                let pred = (&x * &beta - (&map.u * &g + &map.delta)).amax();
                prop_assert!(pred <= 1e-10 * (1.0 + x.amax()));
                let reduced_ok = (&map.d * &g - &map.w).iter().all(|&v| v >= -1e-10);
                let original_ok = (&ineq * &beta - &bin).iter().all(|&v| v >= -1e-10);
                prop_assert_eq!(reduced_ok, original_ok);
            }
        }

        #[test]
        fn feasible_point_never_violates(b1 in -2.0f64..2.0, width in -1.0f64..3.0, start in -10.0f64..10.0) {
            // b1 <= β1 + β2 <= b1 + width, β1 >= 0, β2 >= 0
            let cs = ConstraintSet::new(
                dmatrix![1.0, 1.0; -1.0, -1.0; 1.0, 0.0; 0.0, 1.0],
                dvector![b1, -(b1 + width), 0.0, 0.0],
                0,
            ).unwrap();
            match cs.find_feasible_point_from(&dvector![start, -start], 2000, FEASIBILITY_TOL) {
                Ok(x) => prop_assert!(cs.is_satisfied(&x, FEASIBILITY_TOL)),
                Err(Error::Infeasible(_)) => prop_assert!(width < 1e-6 || b1 + width < 1e-6),
                Err(e) => prop_assert!(false, "unexpected error {e}"),
            }
        }
    }
}
