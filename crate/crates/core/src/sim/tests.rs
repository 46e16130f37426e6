use super::*;
use crate::stats::{kendall_tau, ks_pvalue, ks_statistic};

#[test]
fn tau_functions() {
    assert_eq!(tau1(0.20), 0.3);
    assert_eq!(tau1(0.50), 0.8);
    assert_eq!(tau1(0.90), 0.3);
    assert_eq!(tau1(0.33), 0.3);
    assert_eq!(tau1(0.66), 0.8);
    assert!((tau2(0.25) - 0.7).abs() < 1e-15);
    assert!((tau2(0.0) - 0.5).abs() < 1e-15 && (tau2(1.0) - 0.5).abs() < 1e-15);
    for s in ["tree", "sine", "constant:0.25"] {
        let t: TauFunction = s.parse().unwrap();
        assert_eq!(t.to_string(), s);
    }
    assert!("wavy".parse::<TauFunction>().is_err());
}

#[test]
fn band_concordance_matches_target() {
    let spec = DgpSpec::new(TauFunction::Tree, Family::Gaussian);
    let d = generate_dataset(&spec, 0).unwrap();
    let idx: Vec<usize> = (0..d.n()).filter(|&i| d.x[i] > 0.33 && d.x[i] <= 0.66).collect();
    let a: Vec<f64> = idx.iter().map(|&i| d.u1[i]).collect();
    let b: Vec<f64> = idx.iter().map(|&i| d.u2[i]).collect();
    let t = kendall_tau(&a, &b);
    assert!((t - 0.8).abs() < 0.12, "band tau {t}");
    assert_eq!(d.n(), 200);
    assert_eq!(d, generate_dataset(&spec, 0).unwrap());
    assert_ne!(d, generate_dataset(&spec, 1).unwrap());
}

#[test]
fn independence_and_uniform_margins() {
    let spec = DgpSpec {
        n: 10_000,
        ..DgpSpec::new(TauFunction::Constant(0.0), Family::Gaussian)
    };
    let d = generate_dataset(&spec, 3).unwrap();
    let t = kendall_tau(&d.u1[..2000], &d.u2[..2000]);
    assert!(t.abs() < 0.1);
    for fam in [Family::Clayton, Family::Frank] {
        let spec = DgpSpec {
            n: 10_000,
            ..DgpSpec::new(TauFunction::Sine, fam)
        };
        let d = generate_dataset(&spec, 0).unwrap();
        for u in [&d.u1, &d.u2] {
            let p = ks_pvalue(ks_statistic(u, |v| v), u.len());
            assert!(p > 0.01, "{fam} margin KS p = {p}");
        }
    }
}

#[test]
fn unattainable_tau_is_a_config_error() {
    let spec = DgpSpec::new(TauFunction::Constant(-0.2), Family::Clayton);
    assert!(matches!(generate_dataset(&spec, 0), Err(Error::Config(_))));
    assert!(DgpSpec::new(TauFunction::Sine, Family::Clayton).validate().is_ok());
    let tiny = DgpSpec {
        n: 1,
        ..DgpSpec::new(TauFunction::Sine, Family::Gaussian)
    };
    assert!(tiny.validate().is_err());
}

fn small_study(variants: Vec<Variant>) -> StudyConfig {
    let dgp = DgpSpec {
        n: 60,
        replicates: 3,
        ..DgpSpec::new(TauFunction::Tree, Family::Clayton)
    };
    let sampler = SamplerConfig {
        iterations: 200,
        burn_in: 100,
        eta0: 50,
        ..SamplerConfig::default()
    };
    StudyConfig {
        chains: 2,
        variants,
        ..StudyConfig::new(dgp, sampler)
    }
}

#[test]
fn study_aggregates_replicate_files() {
    let config = small_study(vec![Variant::Fixed, Variant::Adaptive]);
    let seen = std::sync::Mutex::new(Vec::new());
    let report = replicate_study(&config, |out| {
        assert_eq!(out.traces.len(), 2);
        seen.lock().unwrap().push((out.replicate, out.variant, out.record.to_csv()));
        Ok(())
    })
    .unwrap();
    assert_eq!(report.records.len(), 6);
    assert_eq!(report.rows.len(), 2);
    let files = seen.into_inner().unwrap();
    for v in [Variant::Fixed, Variant::Adaptive] {
        let parsed: Vec<ReplicateRecord> = files
            .iter()
            .filter(|f| f.1 == v)
            .map(|f| ReplicateRecord::from_csv(f.0, f.1, &f.2).unwrap())
            .collect();
        let mut parsed = parsed;
        parsed.sort_by_key(|r| r.replicate);
        // hand recomputation from the written files
        let leaves: Vec<f64> = parsed
            .iter()
            .map(|r| r.chains.iter().map(|c| c.mean_n_leaves).sum::<f64>() / r.chains.len() as f64)
            .collect();
        let mse: Vec<f64> = parsed
            .iter()
            .map(|r| r.chains.iter().map(|c| c.mse).sum::<f64>() / r.chains.len() as f64)
            .collect();
        let row = report.row(v).unwrap();
        assert_eq!(row.mean_n_leaves, stats::mean(&leaves));
        assert_eq!(row.sd_n_leaves, stats::sd(&leaves));
        assert_eq!(row.mse, stats::mean(&mse));
        assert_eq!(row, &StudyRow::aggregate(Family::Clayton, v, &parsed).unwrap());
        assert!(row.ci_cov >= 0.0 && row.ci_cov <= 1.0);
    }
    let again = replicate_study(&config, |_| Ok(())).unwrap();
    assert_eq!(report, again);
    assert!(report.to_csv().starts_with(STUDY_CSV_HEADER));
}

#[test]
fn zero_iterations_fail_before_any_fit() {
    let mut config = small_study(vec![Variant::Adaptive]);
    config.sampler.iterations = 0;
    let calls = std::sync::atomic::AtomicUsize::new(0);
    let r = replicate_study(&config, |_| {
        calls.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
        Ok(())
    });
    assert!(matches!(r, Err(Error::Config(_))));
    assert_eq!(calls.into_inner(), 0);
}
