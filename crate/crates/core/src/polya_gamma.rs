//! Exact sampling from the Pólya-gamma distribution PG(1, c).
//!
//! Devroye-style accept/reject: the proposal mixes a truncated inverse
//! Gaussian on `(0, 0.64]` with an exponential tail beyond it, and proposals
//! are accepted by the alternating-series method on the Jacobi density.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};

use crate::error::{Error, Result};
use crate::numerics::{std_normal_cdf, std_normal_ln_cdf};

const TRUNC: f64 = 0.64;
const MAX_SERIES_TERMS: usize = 200;

/// Draw from PG(1, c). The distribution depends on `c` only through `|c|`.
pub fn sample_pg1<R: Rng + ?Sized>(c: f64, rng: &mut R) -> Result<f64> {
    if !c.is_finite() {
        return Err(Error::param("c", format!("must be finite, got {c}")));
    }
    let z = 0.5 * c.abs();
    let k = PI * PI / 8.0 + 0.5 * z * z;
    let p = PI / (2.0 * k) * (-k * TRUNC).exp();
    let q = 2.0 * inverse_gaussian_mass_below(z);
    let p_exp = p / (p + q);

    loop {
        let x = if rng.random::<f64>() < p_exp {
            TRUNC + rng.sample::<f64, _>(Exp1) / k
        } else {
            truncated_inverse_gaussian(z, rng)
        };
        let mut s = series_term(0, x);
        let y = rng.random::<f64>() * s;
        let mut accepted = None;
        for n in 1..=MAX_SERIES_TERMS {
            if n % 2 == 1 {
                s -= series_term(n, x);
                if y <= s {
                    accepted = Some(true);
                    break;
                }
            } else {
                s += series_term(n, x);
                if y > s {
                    accepted = Some(false);
                    break;
                }
            }
        }
        match accepted {
            Some(true) => return Ok(0.25 * x),
            Some(false) => continue,
            None => {
                return Err(Error::Numerical(format!(
                    "Pólya-gamma series did not settle within {MAX_SERIES_TERMS} terms (c = {c}, x = {x})"
                )))
            }
        }
    }
}

/// `exp(−z)·P(IG(1/z, 1) < t)`, with the `exp(2z)·Φ(·)` term combined in log
/// space so that it neither overflows nor loses precision for large `z`.
fn inverse_gaussian_mass_below(z: f64) -> f64 {
    let rt = TRUNC.sqrt();
    let a = (-z).exp() * std_normal_cdf((TRUNC * z - 1.0) / rt);
    let b = (z + std_normal_ln_cdf(-(TRUNC * z + 1.0) / rt)).exp();
    a + b
}

/// Piecewise coefficients of the alternating series for the J*(1) density.
fn series_term(n: usize, x: f64) -> f64 {
    let np = n as f64 + 0.5;
    if x > TRUNC {
        PI * np * (-0.5 * np * np * PI * PI * x).exp()
    } else {
        let log = (PI * np).ln() + 1.5 * (2.0 / (PI * x)).ln() - 2.0 * np * np / x;
        log.exp()
    }
}

/// Inverse Gaussian with mean `1/z` and shape 1, truncated to `(0, TRUNC)`.
fn truncated_inverse_gaussian<R: Rng + ?Sized>(z: f64, rng: &mut R) -> f64 {
    let mu = if z > 0.0 { 1.0 / z } else { f64::INFINITY };
    if mu > TRUNC {
        // proposal from the z = 0 limit (a scaled inverse chi-square), thinned
        // by the exponential tilt
        loop {
            let (mut e1, mut e2): (f64, f64);
            loop {
                e1 = rng.sample(Exp1);
                e2 = rng.sample(Exp1);
                if e1 * e1 <= 2.0 * e2 / TRUNC {
                    break;
                }
            }
            let d = 1.0 + TRUNC * e1;
            let x = TRUNC / (d * d);
            if rng.random::<f64>() <= (-0.5 * z * z * x).exp() {
                return x;
            }
        }
    } else {
        loop {
            let n: f64 = rng.sample(StandardNormal);
            let y = n * n;
            let mu_y = mu * y;
            let mut x = mu + 0.5 * mu * mu_y - 0.5 * mu * (4.0 * mu_y + mu_y * mu_y).sqrt();
            if rng.random::<f64>() > mu / (mu + x) {
                x = mu * mu / x;
            }
            if x < TRUNC {
                return x;
            }
        }
    }
}
