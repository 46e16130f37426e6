//! Clayton, Gumbel and Frank copulas. Log densities take precomputed logs of the
//! margins so the sampler's likelihood cache and direct evaluation share one path.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Exp1, Open01};

use crate::quad;

/// Below this |θ| the Frank copula is evaluated by its second-order expansion.
pub(crate) const FRANK_TAYLOR_EPS: f64 = 1e-5;

#[inline]
fn log_sum_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

#[inline]
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// ln(u^-θ + v^-θ - 1) from lu = ln u, lv = ln v.
#[inline]
fn clayton_log_a(lu: f64, lv: f64, theta: f64) -> f64 {
    let a = -theta * lu;
    let b = -theta * lv;
    let big = a.max(b);
    if big > 30.0 {
        let small = a.min(b);
        big + ((small - big).exp() - (-big).exp()).ln_1p()
    } else {
        (a.exp_m1() + b.exp_m1()).ln_1p()
    }
}

#[inline]
pub(crate) fn clayton_log_density(lu: f64, lv: f64, theta: f64) -> f64 {
    theta.ln_1p() - (1.0 + theta) * (lu + lv) - (2.0 + 1.0 / theta) * clayton_log_a(lu, lv, theta)
}

pub(crate) fn clayton_cdf(u: f64, v: f64, theta: f64) -> f64 {
    (-clayton_log_a(u.ln(), v.ln(), theta) / theta).exp()
}

pub(crate) fn clayton_sample<R: Rng + ?Sized>(theta: f64, rng: &mut R) -> (f64, f64) {
    let u: f64 = rng.sample(Open01);
    let w: f64 = rng.sample(Open01);
    // v = (1 + u^-θ (w^{-θ/(1+θ)} - 1))^{-1/θ}, evaluated in logs
    let inner = (-theta / (1.0 + theta) * w.ln()).exp_m1();
    let z = -theta * u.ln() + inner.ln();
    let v = (-softplus(z) / theta).exp();
    (u, v)
}

/// Gumbel log density from lu = ln u, lv = ln v, lx = ln(-ln u), ly = ln(-ln v).
#[inline]
pub(crate) fn gumbel_log_density(lu: f64, lv: f64, lx: f64, ly: f64, theta: f64) -> f64 {
    let ls = log_sum_exp(theta * lx, theta * ly);
    let a = (ls / theta).exp();
    -a - (lu + lv) + (theta - 1.0) * (lx + ly) + (1.0 / theta - 2.0) * ls + (a + theta - 1.0).ln()
}

pub(crate) fn gumbel_cdf(u: f64, v: f64, theta: f64) -> f64 {
    let lx = (-u.ln()).ln();
    let ly = (-v.ln()).ln();
    let ls = log_sum_exp(theta * lx, theta * ly);
    (-(ls / theta).exp()).exp()
}

/// Marshall-Olkin sampling with a positive stable frailty (Kanter's representation).
pub(crate) fn gumbel_sample<R: Rng + ?Sized>(theta: f64, rng: &mut R) -> (f64, f64) {
    let e1: f64 = Exp1.sample(rng);
    let e2: f64 = Exp1.sample(rng);
    if theta == 1.0 {
        return ((-e1).exp(), (-e2).exp());
    }
    let alpha = 1.0 / theta;
    let w: f64 = PI * rng.sample::<f64, _>(Open01);
    let e: f64 = Exp1.sample(rng);
    let s = (alpha * w).sin() / w.sin().powf(1.0 / alpha)
        * (((1.0 - alpha) * w).sin() / e).powf((1.0 - alpha) / alpha);
    let u1 = (-(e1 / s).powf(alpha)).exp();
    let u2 = (-(e2 / s).powf(alpha)).exp();
    (u1, u2)
}

/// ln B with B = 1 - e^{-θM} + e^{-θ(M-m)} (1 - e^{-θ(1-M)}), θ > 0, m ≤ M.
#[inline]
fn frank_log_b(m: f64, big: f64, theta: f64) -> f64 {
    let b = -(-theta * big).exp_m1() - (-theta * (big - m)).exp() * (-theta * (1.0 - big)).exp_m1();
    b.ln()
}

/// Frank log density for θ > FRANK_TAYLOR_EPS.
#[inline]
fn frank_log_density_pos(u: f64, v: f64, theta: f64) -> f64 {
    let (m, big) = if u < v { (u, v) } else { (v, u) };
    theta.ln() + (-(-theta).exp_m1()).ln() - theta * (big - m) - 2.0 * frank_log_b(m, big, theta)
}

/// Second-order expansion of log c around θ = 0.
fn frank_log_density_taylor(u: f64, v: f64, theta: f64) -> f64 {
    let a = (2.0 * u - 1.0) * (2.0 * v - 1.0);
    let b = (6.0 * u * u - 6.0 * u + 1.0) * (6.0 * v * v - 6.0 * v + 1.0);
    (0.5 * theta * a + theta * theta * b / 12.0).ln_1p()
}

#[inline]
pub(crate) fn frank_log_density(u: f64, v: f64, theta: f64) -> f64 {
    if theta.abs() < FRANK_TAYLOR_EPS {
        return frank_log_density_taylor(u, v, theta);
    }
    if theta > 0.0 {
        frank_log_density_pos(u, v, theta)
    } else {
        frank_log_density_pos(u, 1.0 - v, -theta)
    }
}

fn frank_cdf_pos(u: f64, v: f64, theta: f64) -> f64 {
    let (m, big) = if u < v { (u, v) } else { (v, u) };
    m - (frank_log_b(m, big, theta) - (-(-theta).exp_m1()).ln()) / theta
}

fn frank_cdf_taylor(u: f64, v: f64, theta: f64) -> f64 {
    let a = u * v * (1.0 - u) * (1.0 - v);
    let b = a * (2.0 * u - 1.0) * (2.0 * v - 1.0);
    u * v + 0.5 * theta * a + theta * theta * b / 12.0
}

pub(crate) fn frank_cdf(u: f64, v: f64, theta: f64) -> f64 {
    if theta.abs() < FRANK_TAYLOR_EPS {
        return frank_cdf_taylor(u, v, theta);
    }
    if theta > 0.0 {
        frank_cdf_pos(u, v, theta)
    } else if v <= 0.0 {
        0.0
    } else {
        u - frank_cdf_pos(u, 1.0 - v, -theta)
    }
}

fn frank_sample_pos<R: Rng + ?Sized>(theta: f64, rng: &mut R) -> (f64, f64) {
    let u: f64 = rng.sample(Open01);
    let w: f64 = rng.sample(Open01);
    // conditional inverse: v = -(1/θ) ln[(w e^{-θ} + (1-w) e^{-θu}) / (w + (1-w) e^{-θu})]
    let lw = w.ln();
    let l1w = (-w).ln_1p();
    let num = log_sum_exp(lw - theta, l1w - theta * u);
    let den = log_sum_exp(lw, l1w - theta * u);
    (u, -(num - den) / theta)
}

pub(crate) fn frank_sample<R: Rng + ?Sized>(theta: f64, rng: &mut R) -> (f64, f64) {
    if theta.abs() < FRANK_TAYLOR_EPS {
        // conditional inverse of the expansion is not needed at this scale;
        // the dependence is below Monte Carlo resolution for any practical n
        return (rng.sample(Open01), rng.sample(Open01));
    }
    if theta > 0.0 {
        frank_sample_pos(theta, rng)
    } else {
        let (u, v) = frank_sample_pos(-theta, rng);
        (u, 1.0 - v)
    }
}

/// Debye function of order one, D₁(θ) = θ⁻¹ ∫₀^θ t/(eᵗ-1) dt.
pub(crate) fn debye1(theta: f64) -> f64 {
    if theta == 0.0 {
        return 1.0;
    }
    let integrand = |t: f64| if t == 0.0 { 1.0 } else { t / t.exp_m1() };
    quad::adaptive(integrand, 0.0, theta, 1e-15) / theta
}

pub(crate) fn frank_tau(theta: f64) -> f64 {
    if theta.abs() < 1e-4 {
        let t2 = theta * theta;
        return theta / 9.0 - theta * t2 / 900.0;
    }
    1.0 + 4.0 * (debye1(theta) - 1.0) / theta
}
