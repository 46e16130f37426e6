use super::*;
use crate::copula::Family;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn summary(mean: &[f64], lower: &[f64], upper: &[f64]) -> PosteriorSummary {
    PosteriorSummary {
        mean: mean.to_vec(),
        lower: lower.to_vec(),
        upper: upper.to_vec(),
    }
}

fn gaussian_sample(rho: f64, n: usize, rng: &mut ChaCha8Rng) -> Sample2 {
    let model = CopulaModel::new(Family::Gaussian);
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for _ in 0..n {
        let (a, b) = model.sample_pair(rho, rng).unwrap();
        x.push(a);
        y.push(b);
    }
    Sample2::new(x, y).unwrap()
}

#[test]
fn exact_posterior_means_give_zero_error() {
    let t = vec![0.1, 0.5, 0.9];
    let s = vec![vec![summary(&t, &t, &t)]];
    assert_eq!(rmse(&s, &[t.clone()]).unwrap(), 0.0);
    assert_eq!(ci_length(&s).unwrap(), 0.0);
    assert_eq!(ci_cov(&s, &[t]).unwrap(), 1.0);
}

#[test]
fn constant_offset_gives_printed_and_rooted_values() {
    let t = vec![0.2, 0.4, 0.6, 0.8];
    let m: Vec<f64> = t.iter().map(|v| v + 0.1).collect();
    let s = vec![vec![summary(&m, &m, &m)]];
    let printed = rmse(&s, &[t.clone()]).unwrap();
    assert!((printed - 0.01).abs() < 1e-15);
    assert!((rmse_rooted(&s, &[t.clone()]).unwrap() - 0.1).abs() < 1e-14);
    assert_eq!(ci_cov(&s, &[t]).unwrap(), 0.0);
}

#[test]
fn hand_built_metrics() {
    // two replicates, one chain, three observations
    let truth = vec![vec![0.0, 1.0, 2.0], vec![1.0, 1.0, 1.0]];
    let s = vec![
        vec![summary(&[0.0, 1.5, 2.0], &[-1.0, 1.2, 1.0], &[1.0, 2.0, 3.0])],
        vec![summary(&[1.0, 0.0, 1.3], &[0.0, -0.5, 1.1], &[0.5, 0.5, 2.0])],
    ];
    // replicate 1: squared errors 0, .25, 0 → mean .25/3; replicate 2: 0, 1, .09 → 1.09/3
    let want_mse = (0.25 / 3.0 + 1.09 / 3.0) / 2.0;
    assert!((rmse(&s, &truth).unwrap() - want_mse).abs() < 1e-15);
    // widths: (2, .8, 2) and (.5, 1, .9)
    let want_len = ((2.0 + 0.8 + 2.0) / 3.0 + (0.5 + 1.0 + 0.9) / 3.0) / 2.0;
    assert!((ci_length(&s).unwrap() - want_len).abs() < 1e-15);
    // coverage: (0 ∈ [-1,1], 1 ∉ [1.2,2], 2 ∈ [1,3]) and (1 ∉ [0,.5], 1 ∉ [-.5,.5], 1 ∉ [1.1,2])
    let want_cov = (2.0 / 3.0 + 0.0) / 2.0;
    assert!((ci_cov(&s, &truth).unwrap() - want_cov).abs() < 1e-15);

    let swapped = vec![s[1].clone(), s[0].clone()];
    let truth_swapped = vec![truth[1].clone(), truth[0].clone()];
    assert!((rmse(&swapped, &truth_swapped).unwrap() - want_mse).abs() < 1e-15);
    assert!(rmse(&s, &truth[..1]).is_err());
    assert!(ci_cov(&s, &[vec![0.0; 2], vec![0.0; 3]]).is_err());
}

#[test]
fn summary_quantiles_bracket_draws() {
    let draws: Vec<Vec<f64>> = (0..=100).map(|t| vec![t as f64, -(t as f64)]).collect();
    let s = PosteriorSummary::from_draws(&draws).unwrap();
    assert_eq!(s.mean, vec![50.0, -50.0]);
    assert!((s.lower[0] - 2.5).abs() < 1e-12 && (s.upper[0] - 97.5).abs() < 1e-12);
    assert!((s.lower[1] + 97.5).abs() < 1e-12);
    assert!(PosteriorSummary::from_draws(&[]).is_err());
    assert!(PosteriorSummary::from_draws(&[vec![1.0], vec![1.0, 2.0]]).is_err());
}

#[test]
fn scaled_draws_apply_link_and_tau() {
    let model = CopulaModel::new(Family::Clayton);
    let eta = vec![vec![0.0, 2.0f64.ln()]];
    let th = scaled_draws(&eta, &model, Scale::Theta).unwrap();
    assert!((th[0][1] - 2.0).abs() < 1e-14);
    let tau = scaled_draws(&eta, &model, Scale::Tau).unwrap();
    assert!((tau[0][0] - 1.0 / 3.0).abs() < 1e-14 && (tau[0][1] - 0.5).abs() < 1e-14);
}

fn brute_energy(a: &Sample2, b: &Sample2) -> f64 {
    let d = |x1: f64, y1: f64, x2: f64, y2: f64| ((x1 - x2).powi(2) + (y1 - y2).powi(2)).sqrt();
    let (n, m) = (a.len() as f64, b.len() as f64);
    let mut ab = 0.0;
    for i in 0..a.len() {
        for j in 0..b.len() {
            ab += d(a.x[i], a.y[i], b.x[j], b.y[j]);
        }
    }
    let within = |s: &Sample2| {
        let mut t = 0.0;
        for i in 0..s.len() {
            for j in 0..s.len() {
                t += d(s.x[i], s.y[i], s.x[j], s.y[j]);
            }
        }
        t
    };
    n * m / (n + m) * (2.0 * ab / (n * m) - within(a) / (n * n) - within(b) / (m * m))
}

fn brute_ff(a: &Sample2, b: &Sample2) -> f64 {
    let frac = |s: &Sample2, ox: f64, oy: f64| -> [f64; 4] {
        let mut c = [0.0; 4];
        for i in 0..s.len() {
            let (x, y) = (s.x[i], s.y[i]);
            if x < ox && y < oy {
                c[0] += 1.0;
            } else if x < ox && y > oy {
                c[1] += 1.0;
            } else if x > ox && y < oy {
                c[2] += 1.0;
            } else if x > ox && y > oy {
                c[3] += 1.0;
            }
        }
        c.map(|v| v / s.len() as f64)
    };
    let side = |origins: &Sample2| {
        let mut d: f64 = 0.0;
        for i in 0..origins.len() {
            let fa = frac(a, origins.x[i], origins.y[i]);
            let fb = frac(b, origins.x[i], origins.y[i]);
            for q in 0..4 {
                d = d.max((fa[q] - fb[q]).abs());
            }
        }
        d
    };
    0.5 * (side(a) + side(b))
}

#[test]
fn statistics_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for (na, nb) in [(7, 7), (12, 5), (30, 41)] {
        let a = gaussian_sample(0.6, na, &mut rng);
        let b = gaussian_sample(-0.2, nb, &mut rng);
        let c = cramer_test(&a, &b, 1, 0).unwrap().statistic;
        let want = brute_energy(&a, &b);
        assert!((c - want).abs() < 1e-10 * want.abs().max(1.0), "{c} vs {want}");
        let f = ff_test(&a, &b, 1, 0).unwrap().statistic;
        assert!((f - brute_ff(&a, &b)).abs() < 1e-12, "{f} vs {}", brute_ff(&a, &b));
    }
}

#[test]
fn identical_samples_give_zero_and_p_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a = gaussian_sample(0.5, 40, &mut rng);
    let c = cramer_test(&a, &a, 99, 3).unwrap();
    assert!(c.statistic.abs() < 1e-12);
    assert_eq!(c.p_value, 1.0);
}

#[test]
fn single_permutation_has_two_point_support() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for seed in 0..20 {
        let a = gaussian_sample(0.5, 15, &mut rng);
        let b = gaussian_sample(0.5, 15, &mut rng);
        for p in [cramer_test(&a, &b, 1, seed).unwrap().p_value, ff_test(&a, &b, 1, seed).unwrap().p_value] {
            assert!(p == 0.5 || p == 1.0);
        }
    }
}

#[test]
fn tests_are_deterministic_and_symmetric() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let a = gaussian_sample(0.3, 50, &mut rng);
    let b = gaussian_sample(0.1, 50, &mut rng);
    assert_eq!(cramer_test(&a, &b, 200, 9).unwrap(), cramer_test(&a, &b, 200, 9).unwrap());
    assert_eq!(ff_test(&a, &b, 200, 9).unwrap(), ff_test(&a, &b, 200, 9).unwrap());
    let (c1, c2) = (cramer_test(&a, &b, 1, 0).unwrap(), cramer_test(&b, &a, 1, 0).unwrap());
    assert!((c1.statistic - c2.statistic).abs() < 1e-12);
    let (f1, f2) = (ff_test(&a, &b, 1, 0).unwrap(), ff_test(&b, &a, 1, 0).unwrap());
    assert!((f1.statistic - f2.statistic).abs() < 1e-12);
}

#[test]
fn degenerate_inputs_are_rejected() {
    let one = Sample2::new(vec![0.5], vec![0.5]).unwrap();
    let two = Sample2::new(vec![0.1, 0.2], vec![0.3, 0.4]).unwrap();
    assert!(cramer_test(&one, &two, 10, 0).is_err());
    assert!(ff_test(&two, &two, 0, 0).is_err());
    assert!(Sample2::new(vec![0.1], vec![]).is_err());
    assert!(Sample2::new(vec![f64::NAN], vec![0.2]).is_err());
}

/// Small-scale calibration; the full-size check lives in the acceptance suite.
#[test]
fn null_rejection_rate_is_near_nominal() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let reps = 60;
    let (mut rc, mut rf) = (0, 0);
    for r in 0..reps {
        let a = gaussian_sample(0.5, 80, &mut rng);
        let b = gaussian_sample(0.5, 80, &mut rng);
        rc += usize::from(cramer_test(&a, &b, 199, r).unwrap().p_value < 0.05);
        rf += usize::from(ff_test(&a, &b, 199, r).unwrap().p_value < 0.05);
    }
    // binomial(60, 0.05): P(X > 10) < 1e-3
    assert!(rc <= 10 && rf <= 10, "cramer {rc}, ff {rf}");
}

#[test]
fn strong_difference_is_detected() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for r in 0..3 {
        let a = gaussian_sample(0.9, 200, &mut rng);
        let b = gaussian_sample(0.0, 200, &mut rng);
        assert!(cramer_test(&a, &b, 499, r).unwrap().p_value < 0.01);
        assert!(ff_test(&a, &b, 499, r).unwrap().p_value < 0.01);
    }
}

#[test]
fn harness_summarizes_replicates() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let model = CopulaModel::new(Family::Clayton);
    let theta: Vec<f64> = (0..60).map(|_| rng.random_range(1.0..3.0)).collect();
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for &t in &theta {
        let (a, b) = model.sample_pair(t, &mut rng).unwrap();
        x.push(a);
        y.push(b);
    }
    let obs = Sample2::new(x, y).unwrap();
    let table = gof_harness(&theta, &obs, &model, 8, 99, 10).unwrap();
    assert_eq!(table, gof_harness(&theta, &obs, &model, 8, 99, 10).unwrap());
    assert_eq!(table.cramer.len(), 8);
    assert!(table.cramer_summary.mean > 0.1 && table.ff_summary.mean > 0.1);
    let one = gof_harness(&theta, &obs, &model, 1, 19, 10).unwrap();
    assert!(one.cramer_summary.sd.is_nan());
    assert!(gof_harness(&theta[..5], &obs, &model, 1, 19, 10).is_err());
    assert!(gof_harness(&vec![-1.0; 60], &obs, &model, 1, 19, 10).is_err());
    assert!(table.to_csv().starts_with("test,mean,median,sd\ncramer,"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn p_values_stay_in_range(seed in 0u64..10_000, n_perm in 1usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = gaussian_sample(0.4, 12, &mut rng);
        let b = gaussian_sample(-0.4, 9, &mut rng);
        for p in [cramer_test(&a, &b, n_perm, seed).unwrap().p_value, ff_test(&a, &b, n_perm, seed).unwrap().p_value] {
            prop_assert!(p >= 1.0 / (n_perm as f64 + 1.0) - 1e-15 && p <= 1.0);
        }
    }

    #[test]
    fn ff_matches_brute_force(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let na = rng.random_range(2..20);
        let nb = rng.random_range(2..20);
        let a = gaussian_sample(0.7, na, &mut rng);
        let b = gaussian_sample(0.0, nb, &mut rng);
        prop_assert!((ff_test(&a, &b, 1, 0).unwrap().statistic - brute_ff(&a, &b)).abs() < 1e-12);
    }
}
