//! Gaussian and Student-t copulas.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, PI, SQRT_2};

use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use statrs::distribution::{Continuous, ContinuousCDF, StudentsT};
use statrs::function::erf::erfc_inv;
use statrs::function::gamma::ln_gamma;

use crate::quad;

pub(crate) fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

pub(crate) fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Standard normal quantile, polished with one Newton step.
pub(crate) fn norm_ppf(p: f64) -> f64 {
    let x = -SQRT_2 * erfc_inv(2.0 * p);
    if !x.is_finite() {
        return x;
    }
    let d = norm_pdf(x);
    if d > 0.0 {
        x - (norm_cdf(x) - p) / d
    } else {
        x
    }
}

fn student(df: f64) -> StudentsT {
    StudentsT::new(0.0, 1.0, df).expect("degrees of freedom validated by CopulaModel")
}

pub(crate) fn t_cdf(x: f64, df: f64) -> f64 {
    student(df).cdf(x)
}

/// Student-t quantile, polished with Newton steps on the CDF.
pub(crate) fn t_ppf(p: f64, df: f64) -> f64 {
    let dist = student(df);
    let mut x = dist.inverse_cdf(p);
    for _ in 0..3 {
        if !x.is_finite() {
            break;
        }
        let d = dist.pdf(x);
        if d <= 0.0 {
            break;
        }
        let step = (dist.cdf(x) - p) / d;
        x -= step;
        if step.abs() < 1e-15 * x.abs().max(1.0) {
            break;
        }
    }
    x
}

/// log c for the Gaussian copula given normal scores.
#[inline]
pub(crate) fn gaussian_log_density(x: f64, y: f64, rho: f64) -> f64 {
    let one_m = (1.0 - rho) * (1.0 + rho);
    -0.5 * one_m.ln() - (rho * rho * (x * x + y * y) - 2.0 * rho * x * y) / (2.0 * one_m)
}

/// Constant part of the Student-t copula log density.
pub(crate) fn t_log_const(df: f64) -> f64 {
    ln_gamma(0.5 * (df + 2.0)) + ln_gamma(0.5 * df) - 2.0 * ln_gamma(0.5 * (df + 1.0))
}

/// log c for the Student-t copula given t scores and the precomputed
/// marginal term `ln(1 + x²/ν) + ln(1 + y²/ν)`.
#[inline]
pub(crate) fn t_log_density(x: f64, y: f64, marg: f64, rho: f64, df: f64, konst: f64) -> f64 {
    let one_m = (1.0 - rho) * (1.0 + rho);
    let q = (x * x + y * y - 2.0 * rho * x * y) / one_m;
    konst - 0.5 * one_m.ln() - 0.5 * (df + 2.0) * (q / df).ln_1p() + 0.5 * (df + 1.0) * marg
}

pub(crate) fn t_marginal_term(x: f64, y: f64, df: f64) -> f64 {
    (x * x / df).ln_1p() + (y * y / df).ln_1p()
}

/// Bivariate normal lower-orthant probability via the arcsine representation
/// Φ₂(x,y;ρ) = Φ(x)Φ(y) + (1/2π) ∫₀^{asin ρ} exp(-(x²+y²-2xy sin t)/(2cos² t)) dt.
pub(crate) fn bvn_cdf(x: f64, y: f64, rho: f64) -> f64 {
    if x == f64::NEG_INFINITY || y == f64::NEG_INFINITY {
        return 0.0;
    }
    if x == f64::INFINITY {
        return norm_cdf(y);
    }
    if y == f64::INFINITY {
        return norm_cdf(x);
    }
    let base = norm_cdf(x) * norm_cdf(y);
    if rho == 0.0 {
        return base;
    }
    let hs = x * x + y * y;
    let hk = x * y;
    let upper = rho.asin();
    let integral = quad::adaptive(
        |t| {
            let s = t.sin();
            let c2 = (1.0 - s) * (1.0 + s);
            if c2 <= 0.0 {
                return 0.0;
            }
            (-(hs - 2.0 * hk * s) / (2.0 * c2)).exp()
        },
        0.0,
        upper,
        1e-16,
    );
    (base + integral / (2.0 * PI)).clamp(0.0, 1.0)
}

/// Conditional distribution P(V ≤ v | U = u) for the Student-t copula, in t scores.
pub(crate) fn t_h_function(x: f64, y: f64, rho: f64, df: f64) -> f64 {
    let scale = ((df + x * x) * (1.0 - rho) * (1.0 + rho) / (df + 1.0)).sqrt();
    t_cdf((y - rho * x) / scale, df + 1.0)
}

/// Student-t copula CDF as ∫₀^{u1} h(u2 | s) ds. In t scores with
/// z = √ν tan φ the margin density becomes k cos^{ν-1} φ on a bounded range,
/// which keeps the integrand smooth for any u1.
pub(crate) fn t_copula_cdf(u1: f64, u2: f64, rho: f64, df: f64) -> f64 {
    let x = t_ppf(u1, df);
    let y = t_ppf(u2, df);
    let k = (ln_gamma(0.5 * (df + 1.0)) - ln_gamma(0.5 * df) - 0.5 * PI.ln()).exp();
    let sq = df.sqrt();
    let upper = (x / sq).atan();
    let v = quad::adaptive(
        |phi| {
            let c = phi.cos();
            if c <= 0.0 {
                return 0.0;
            }
            k * c.powf(df - 1.0) * t_h_function(sq * phi.tan(), y, rho, df)
        },
        -FRAC_PI_2,
        upper,
        1e-15,
    );
    v.clamp(0.0, u1.min(u2))
}

pub(crate) fn sample_gaussian<R: Rng + ?Sized>(rho: f64, rng: &mut R) -> (f64, f64) {
    let z1: f64 = StandardNormal.sample(rng);
    let e: f64 = StandardNormal.sample(rng);
    let z2 = rho * z1 + ((1.0 - rho) * (1.0 + rho)).sqrt() * e;
    (norm_cdf(z1), norm_cdf(z2))
}

pub(crate) fn sample_t<R: Rng + ?Sized>(rho: f64, df: f64, rng: &mut R) -> (f64, f64) {
    let z1: f64 = StandardNormal.sample(rng);
    let e: f64 = StandardNormal.sample(rng);
    let z2 = rho * z1 + ((1.0 - rho) * (1.0 + rho)).sqrt() * e;
    let w: f64 = ChiSquared::new(df).expect("df > 2").sample(rng);
    let s = (df / w).sqrt();
    (t_cdf(z1 * s, df), t_cdf(z2 * s, df))
}
