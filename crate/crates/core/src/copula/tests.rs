use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::quad::GaussLegendre;
use crate::stats::{kendall_tau, ks_pvalue, ks_statistic};

fn models() -> Vec<CopulaModel> {
    Family::ALL.iter().map(|&f| CopulaModel::new(f)).collect()
}

/// Breakpoints on [0,1] graded geometrically toward both edges.
fn graded_mesh(levels: usize) -> Vec<f64> {
    let mut left = vec![0.0];
    for k in (1..=levels).rev() {
        left.push(0.5 * 0.5f64.powi(k as i32 * 2));
    }
    let mut pts = left.clone();
    pts.push(0.5);
    for &x in left.iter().rev() {
        pts.push(1.0 - x);
    }
    pts.dedup();
    pts
}

fn mesh_nodes(levels: usize, order: usize) -> Vec<(f64, f64)> {
    let rule = GaussLegendre::new(order);
    let mesh = graded_mesh(levels);
    let mut out = Vec::new();
    for w in mesh.windows(2) {
        out.extend(rule.points(w[0], w[1]));
    }
    out
}

/// θ values covering weak to strong dependence, both signs where allowed.
fn thetas(model: &CopulaModel) -> Vec<f64> {
    let taus: &[f64] = match model.family() {
        Family::Clayton | Family::Gumbel => &[0.1, 0.4, 0.6],
        _ => &[-0.5, 0.1, 0.4, 0.6],
    };
    taus.iter().map(|&t| model.theta_from_tau(t).unwrap()).collect()
}

#[test]
fn density_integrates_to_one() {
    let nodes = mesh_nodes(12, 20);
    for m in models() {
        for theta in thetas(&m) {
            let mut total = 0.0;
            for &(u, wu) in &nodes {
                for &(v, wv) in &nodes {
                    total += wu * wv * m.density(u, v, theta).unwrap();
                }
            }
            assert!((total - 1.0).abs() < 2e-3, "{} θ={theta}: {total}", m.family());
        }
    }
}

#[test]
fn density_is_mixed_partial_of_cdf() {
    let h = 1e-3;
    let pts = [(0.3, 0.6), (0.5, 0.5), (0.8, 0.25), (0.15, 0.2)];
    for m in models() {
        for theta in thetas(&m) {
            for &(u, v) in &pts {
                let c = |a: f64, b: f64| m.cdf(a, b, theta).unwrap();
                let fd = (c(u + h, v + h) - c(u + h, v - h) - c(u - h, v + h) + c(u - h, v - h))
                    / (4.0 * h * h);
                let dens = m.density(u, v, theta).unwrap();
                let rel = (fd - dens).abs() / dens;
                assert!(rel < 1e-4, "{} θ={theta} ({u},{v}): fd={fd} c={dens}", m.family());
            }
        }
    }
}

#[test]
fn tau_matches_double_integral() {
    // τ = 4 E[C(U,V)] - 1
    let nodes = mesh_nodes(8, 12);
    for m in models() {
        for theta in thetas(&m) {
            let mut e = 0.0;
            for &(u, wu) in &nodes {
                for &(v, wv) in &nodes {
                    e += wu * wv * m.cdf(u, v, theta).unwrap() * m.density(u, v, theta).unwrap();
                }
            }
            let num = 4.0 * e - 1.0;
            let closed = m.tau_from_theta(theta).unwrap();
            assert!((num - closed).abs() < 1e-3, "{} θ={theta}: {num} vs {closed}", m.family());
        }
    }
}

#[test]
fn samplers_reproduce_tau_and_uniform_margins() {
    let n = 3000;
    let se = (2.0 * (2.0 * n as f64 + 5.0) / (9.0 * n as f64 * (n as f64 - 1.0))).sqrt();
    for (k, m) in models().into_iter().enumerate() {
        for theta in thetas(&m) {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + k as u64);
            let (a, b): (Vec<f64>, Vec<f64>) =
                (0..n).map(|_| m.sample_pair(theta, &mut rng).unwrap()).unzip();
            assert!(a.iter().chain(&b).all(|&u| u > 0.0 && u < 1.0));
            let tau = kendall_tau(&a, &b);
            let target = m.tau_from_theta(theta).unwrap();
            assert!((tau - target).abs() < 4.0 * se, "{} θ={theta}: {tau} vs {target}", m.family());
            for col in [&a, &b] {
                let d = ks_statistic(col, |x| x);
                assert!(ks_pvalue(d, n) > 1e-3, "{} margin KS d={d}", m.family());
            }
        }
    }
}

#[test]
fn tau_inversion_round_trips() {
    for m in models() {
        for &t in &[-0.8, -0.3, 0.0, 0.05, 0.5, 0.9] {
            if !m.tau_attainable(t) {
                assert!(m.theta_from_tau(t).is_err());
                continue;
            }
            let th = m.theta_from_tau(t).unwrap();
            let back = m.tau_from_theta(th).unwrap();
            assert!((back - t).abs() < 1e-8, "{}: {t} -> {th} -> {back}", m.family());
        }
    }
}

#[test]
fn domain_errors() {
    let g = CopulaModel::new(Family::Gaussian);
    assert!(g.log_density(0.0, 0.5, 0.1).is_err());
    assert!(g.log_density(0.5, 1.0, 0.1).is_err());
    assert!(g.log_density(0.5, 0.5, 1.0).is_err());
    assert!(CopulaModel::new(Family::Clayton).check_theta(0.0).is_err());
    assert!(CopulaModel::new(Family::Gumbel).check_theta(0.99).is_err());
    assert!(CopulaModel::with_df(Family::StudentT, 2.0).is_err());
    assert!(CopulaModel::new(Family::Frank).log_density(0.3, 0.4, 0.0).is_ok());
    assert!(g.link(f64::NAN).is_err());
}

#[test]
fn cdf_boundaries() {
    for m in models() {
        for theta in thetas(&m) {
            assert_eq!(m.cdf(0.0, 0.4, theta).unwrap(), 0.0);
            assert_eq!(m.cdf(1.0, 0.4, theta).unwrap(), 0.4);
            assert_eq!(m.cdf(0.7, 1.0, theta).unwrap(), 0.7);
        }
    }
}

#[test]
fn family_names_round_trip() {
    for f in Family::ALL {
        assert_eq!(f.to_string().parse::<Family>().unwrap(), f);
    }
    assert!("bogus".parse::<Family>().is_err());
}

#[test]
fn pseudo_observations_use_average_ranks() {
    let p = pseudo_observations(&[3.0, 1.0, 2.0, 2.0], &[1.0, 2.0, 3.0, 4.0]).unwrap();
    assert_eq!(p.u1, vec![0.8, 0.2, 0.5, 0.5]);
    assert_eq!(p.u2, vec![0.2, 0.4, 0.6, 0.8]);
    assert!(pseudo_observations(&[1.0], &[1.0]).is_err());
    assert!(pseudo_observations(&[1.0, 2.0], &[1.0]).is_err());
}

#[test]
fn prepared_matches_direct() {
    let u1 = [0.1, 0.5, 0.93];
    let u2 = [0.7, 0.45, 0.88];
    for m in models() {
        let p = m.prepare(&u1, &u2).unwrap();
        for eta in [-1.3, 0.2, 1.7] {
            let theta = m.link(eta).unwrap();
            for i in 0..3 {
                let d = m.log_density(u1[i], u2[i], theta).unwrap();
                assert!((p.log_density_at_link(i, eta) - d).abs() < 1e-12);
            }
        }
    }
}

proptest! {
    #[test]
    fn link_lands_in_support(x in -30.0f64..30.0, fam in 0usize..5) {
        let m = CopulaModel::new(Family::ALL[fam]);
        let th = m.link(x).unwrap();
        prop_assert!(m.check_theta(th).is_ok());
    }

    #[test]
    fn log_density_finite_inside(u in 1e-6f64..1.0 - 1e-6, v in 1e-6f64..1.0 - 1e-6,
                                 x in -4.0f64..4.0, fam in 0usize..5) {
        let m = CopulaModel::new(Family::ALL[fam]);
        let th = m.link(x).unwrap();
        prop_assert!(m.log_density(u, v, th).unwrap().is_finite());
    }

    #[test]
    fn cdf_within_frechet_bounds(u in 0.0f64..=1.0, v in 0.0f64..=1.0,
                                 x in -3.0f64..3.0, fam in 0usize..5) {
        let m = CopulaModel::new(Family::ALL[fam]);
        let th = m.link(x).unwrap();
        let c = m.cdf(u, v, th).unwrap();
        prop_assert!(c >= (u + v - 1.0).max(0.0) - 1e-15 && c <= u.min(v) + 1e-15);
    }
}
