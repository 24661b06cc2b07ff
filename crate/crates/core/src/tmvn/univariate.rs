//! Exact draws from the standard normal restricted to an interval.
//!
//! The algorithm is chosen by region: plain normal rejection when the interval
//! is wide and contains a high-density region near zero, uniform rejection for
//! short intervals, and Robert's translated-exponential rejection for tails.

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use crate::error::{Error, Result};

/// Lower bounds below this use normal (or half-normal) rejection.
pub const TAIL_THRESHOLD: f64 = 0.45;
/// Intervals at most this wide use uniform rejection. In the tail the width is
/// divided by the lower bound so the acceptance rate stays bounded below.
pub const UNIFORM_WIDTH: f64 = 1.0;

/// One draw from N(0, 1) conditioned on `[lower, upper]`; either end may be infinite.
pub fn sample_truncated_std_normal<R: Rng + ?Sized>(lower: f64, upper: f64, rng: &mut R) -> Result<f64> {
    if lower.is_nan() || upper.is_nan() || lower >= upper {
        return Err(Error::EmptyInterval { lower, upper });
    }
    Ok(draw(lower, upper, rng))
}

pub(crate) fn draw<R: Rng + ?Sized>(lower: f64, upper: f64, rng: &mut R) -> f64 {
    if upper <= 0.0 {
        return -draw_nonnegative_side(-upper, -lower, rng);
    }
    if lower < 0.0 {
        return draw_straddling(lower, upper, rng);
    }
    draw_nonnegative_side(lower, upper, rng)
}

/// `lower < 0 < upper`.
fn draw_straddling<R: Rng + ?Sized>(lower: f64, upper: f64, rng: &mut R) -> f64 {
    if upper - lower > UNIFORM_WIDTH {
        loop {
            let z: f64 = StandardNormal.sample(rng);
            if z >= lower && z <= upper {
                return z;
            }
        }
    }
    loop {
        let z = uniform_between(lower, upper, rng);
        let u: f64 = rng.random();
        if u <= (-0.5 * z * z).exp() {
            return z;
        }
    }
}

/// `0 <= lower < upper`.
fn draw_nonnegative_side<R: Rng + ?Sized>(lower: f64, upper: f64, rng: &mut R) -> f64 {
    let width = upper - lower;
    if lower < TAIL_THRESHOLD {
        if width > UNIFORM_WIDTH {
            loop {
                let z: f64 = StandardNormal.sample(rng);
                let z = z.abs();
                if z >= lower && z <= upper {
                    return z;
                }
            }
        }
        return uniform_rejection(lower, upper, rng);
    }
    if width <= UNIFORM_WIDTH / lower.max(1.0) {
        return uniform_rejection(lower, upper, rng);
    }
    // Translated exponential proposal with the optimal rate.
    let rate = 0.5 * (lower + (lower * lower + 4.0).sqrt());
    loop {
        let e: f64 = Exp1.sample(rng);
        let z = lower + e / rate;
        if z > upper {
            continue;
        }
        let u: f64 = rng.random();
        let d = z - rate;
        if u <= (-0.5 * d * d).exp() {
            return z;
        }
    }
}

/// Uniform proposal on `[lower, upper]` with `lower >= 0`, accepted with
/// probability `exp((lower² − z²)/2)`.
fn uniform_rejection<R: Rng + ?Sized>(lower: f64, upper: f64, rng: &mut R) -> f64 {
    loop {
        let z = uniform_between(lower, upper, rng);
        let u: f64 = rng.random();
        if u <= (0.5 * (lower - z) * (lower + z)).exp() {
            return z;
        }
    }
}

fn uniform_between<R: Rng + ?Sized>(lower: f64, upper: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    (lower + u * (upper - lower)).clamp(lower, upper)
}
