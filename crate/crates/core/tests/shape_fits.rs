use constrained_glm::shape::{select_degree_by_dic, BernsteinSpec, ShapeMode};
use constrained_glm::{fit_lm, PriorSpec, SamplerConfig};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn names(d: usize) -> Vec<String> {
    ["a", "b"][..d].iter().map(|s| s.to_string()).collect()
}

fn cfg(seed: u64) -> SamplerConfig {
    SamplerConfig {
        n_iter: 2_500,
        burn_in: 500,
        thin: 2,
        seed,
        n_chains: 1,
        inner_sweeps: 1,
    }
}

#[test]
fn dic_prefers_the_nesting_degree() {
    let mut hits = 0;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1_000 + seed);
        let n = 100;
        let x = DMatrix::from_fn(n, 1, |i, _| (i as f64 + 0.5) / n as f64);
        let y = DVector::from_fn(n, |i, _| {
            let e: f64 = rng.sample(StandardNormal);
            x[(i, 0)].powi(2) + 0.1 * e
        });
        let (best, table) = select_degree_by_dic(&[1, 2], &cfg(seed), |degree| {
            let spec = BernsteinSpec::from_data(&x, &names(1), degree, ShapeMode::MonotoneIncreasing)?;
            let (data, cs) = spec.problem(&x, &y)?;
            let p = data.p();
            Ok((data, cs, PriorSpec::vague(p)))
        })
        .unwrap();
        assert_eq!(table.iter().map(|t| t.0).collect::<Vec<_>>(), vec![1, 2]);
        assert!(table.iter().all(|t| t.1.dic.is_finite()));
        hits += usize::from(best == 2);
    }
    assert!(hits >= 18, "nesting degree chosen {hits} / 20 times");
}

#[test]
fn monotone_draws_give_monotone_curves() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let n = 60;
    let x = DMatrix::from_fn(n, 1, |_, _| rng.random::<f64>() * 4.0 - 2.0);
    // flat stretch in the middle tempts an unconstrained fit to wiggle
    let y = DVector::from_fn(n, |i, _| {
        let e: f64 = rng.sample(StandardNormal);
        x[(i, 0)].clamp(-1.0, 1.0).tanh() + 0.3 * e
    });
    for mode in [ShapeMode::MonotoneIncreasing, ShapeMode::MonotoneDecreasing] {
        let spec = BernsteinSpec::from_data(&x, &names(1), 6, mode).unwrap();
        let (data, cs) = spec.problem(&x, &y).unwrap();
        let samples = fit_lm(&data, &cs, &PriorSpec::vague(data.p()), &cfg(3)).unwrap();
        let (lo, hi) = (x.min(), x.max());
        let grid = DMatrix::from_fn(101, 1, |i, _| lo + (hi - lo) * i as f64 / 100.0);
        let curves = spec.design(&grid).unwrap() * samples.draws.transpose();
        let sign = if mode == ShapeMode::MonotoneIncreasing { 1.0 } else { -1.0 };
        for c in 0..curves.ncols() {
            for i in 1..curves.nrows() {
                assert!(sign * (curves[(i, c)] - curves[(i - 1, c)]) >= -1e-8, "draw {c} at grid point {i}");
            }
        }
    }
}

#[test]
fn bimonotone_draws_increase_along_both_axes() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 120;
    let x = DMatrix::from_fn(n, 2, |_, _| rng.random::<f64>());
    let y = DVector::from_fn(n, |i, _| {
        let e: f64 = rng.sample(StandardNormal);
        (x[(i, 0)] * x[(i, 1)]).sqrt() + 0.2 * e
    });
    let spec = BernsteinSpec::from_data(&x, &names(2), 3, ShapeMode::TensorBimonotoneIncreasing).unwrap();
    let (data, cs) = spec.problem(&x, &y).unwrap();
    let samples = fit_lm(&data, &cs, &PriorSpec::vague(data.p()), &cfg(5)).unwrap();
    let g = 21;
    let (lo_a, lo_b) = (x.column(0).min(), x.column(1).min());
    let (hi_a, hi_b) = (x.column(0).max(), x.column(1).max());
    let grid = DMatrix::from_fn(g * g, 2, |k, j| {
        let t = if j == 0 { k / g } else { k % g } as f64 / (g - 1) as f64;
        if j == 0 {
            lo_a + t * (hi_a - lo_a)
        } else {
            lo_b + t * (hi_b - lo_b)
        }
    });
    let surfaces = spec.design(&grid).unwrap() * samples.draws.transpose();
    for c in (0..surfaces.ncols()).step_by(7) {
        let f = |a: usize, b: usize| surfaces[(a * g + b, c)];
        for a in 0..g {
            for b in 0..g {
                if a > 0 {
                    assert!(f(a, b) - f(a - 1, b) >= -1e-8);
                }
                if b > 0 {
                    assert!(f(a, b) - f(a, b - 1) >= -1e-8);
                }
            }
        }
    }
}
