use mcusum::io::{analyze_sample, ingest, write_sample};
use mcusum::limit::{build_critical_tables, bundled_tables, simulate_kiefer_path};
use mcusum::regression::{self, c_hat, cv_scores, degeneracy_threshold, nw_fit, WeightWindow};
use mcusum::simulation::{generate, run_experiment};
use mcusum::statistics::statistics_for_fit;
use mcusum::{
    AnalysisConfig, ColumnMapping, CriticalTableSet, ExperimentConfig, FunctionalKind, KernelSpec,
    ModelId, ModelSpec, PipelineOptions, Sample, StatisticKind, TestReport,
};
use proptest::prelude::*;

const KINDS: [StatisticKind; 6] = [
    StatisticKind::Tn1,
    StatisticKind::Tn2,
    StatisticKind::Tn3Tilde,
    StatisticKind::Tn4Tilde,
    StatisticKind::Ks,
    StatisticKind::Cm,
];

fn values(sample: &Sample, h: f64) -> (Vec<f64>, f64) {
    let kernel = KernelSpec::epanechnikov4(sample.d()).unwrap();
    let fit = nw_fit(sample, &kernel, h, &WeightWindow::Everywhere).unwrap();
    let stats = statistics_for_fit(&fit, &KINDS).unwrap();
    (stats.iter().map(|s| s.value).collect(), c_hat(&fit))
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

fn xy() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (15usize..50).prop_flat_map(|n| {
        (
            prop::collection::vec(-3.0..3.0f64, n),
            prop::collection::vec(-2.0..2.0f64, n),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn response_shift_leaves_statistics_unchanged((x, y) in xy(), shift in -50.0..50.0f64) {
        let base = Sample::univariate(x.clone(), y.clone()).unwrap();
        let moved = Sample::univariate(x, y.iter().map(|v| v + shift).collect()).unwrap();
        let (a, ca) = values(&base, 0.9);
        let (b, cb) = values(&moved, 0.9);
        for (u, v) in a.iter().zip(&b) {
            prop_assert!(close(*u, *v, 1e-8), "{u} vs {v}");
        }
        prop_assert!(close(ca, cb, 1e-8));
    }

    #[test]
    fn response_scale_scales_statistics((x, y) in xy(), scale in 0.1..10.0f64) {
        let base = Sample::univariate(x.clone(), y.clone()).unwrap();
        let scaled = Sample::univariate(x, y.iter().map(|v| v * scale).collect()).unwrap();
        let (a, ca) = values(&base, 0.9);
        let (b, cb) = values(&scaled, 0.9);
        for (kind, (u, v)) in KINDS.iter().zip(a.iter().zip(&b)) {
            // raw statistics are homogeneous of degree 2 × the normalizer power
            let degree = 2.0 * kind.normalizer_power();
            prop_assert!(close(u * scale.powf(degree), *v, 1e-8), "{kind}: {u} vs {v}");
        }
        prop_assert!(close(ca * scale * scale, cb, 1e-8));
    }

    #[test]
    fn covariate_affine_map_with_matched_bandwidth((x, y) in xy(), a in 0.2..5.0f64, b in -10.0..10.0f64) {
        let base = Sample::univariate(x.clone(), y.clone()).unwrap();
        let moved = Sample::univariate(x.iter().map(|v| a * v + b).collect(), y).unwrap();
        let (u, _) = values(&base, 0.8);
        let (v, _) = values(&moved, 0.8 * a);
        // the raw statistics do not involve the covariate scale except via ĉ
        for k in [0, 1, 4, 5] {
            prop_assert!(close(u[k], v[k], 1e-8), "{}: {} vs {}", KINDS[k], u[k], v[k]);
        }
    }

    #[test]
    fn cv_matches_brute_force_leave_one_out((x, y) in xy(), h in 0.2..3.0f64) {
        let sample = Sample::univariate(x, y).unwrap();
        let kernel = KernelSpec::epanechnikov4(1).unwrap();
        let got = &cv_scores(&sample, &kernel, &[h]).unwrap()[0];
        let n = sample.n();
        let eps: f64 = degeneracy_threshold(&kernel, n);
        let (mut sse, mut valid) = (0.0, 0usize);
        for i in 0..n {
            let (mut num, mut den) = (0.0, 0.0);
            for j in (0..n).filter(|&j| j != i) {
                let w = kernel.weight(sample.row(i), sample.row(j), 1.0 / h);
                num += w * sample.y()[j];
                den += w;
            }
            if den >= eps {
                sse += (sample.y()[i] - num / den).powi(2);
                valid += 1;
            }
        }
        prop_assert_eq!(got.valid_points, valid);
        match got.score {
            Some(s) => prop_assert!(close(s, sse / valid as f64, 1e-10)),
            None => prop_assert!(2 * valid < n || valid == 0),
        }
    }
}

#[test]
fn single_precision_tracks_double() {
    let spec = ModelSpec::new(ModelId::Model1, 150, 1.0).with_seed(11);
    let s64 = generate(&spec).unwrap();
    let x32: Vec<f32> = s64.x().iter().map(|&v| v as f32).collect();
    let y32: Vec<f32> = s64.y().iter().map(|&v| v as f32).collect();
    let s32 = regression::Sample::<f32>::univariate(x32, y32).unwrap();
    let kernel = KernelSpec::epanechnikov4(1).unwrap();
    let f32_fit = nw_fit(&s32, &kernel, 0.7f32, &WeightWindow::Everywhere).unwrap();
    let f64_fit = nw_fit(&s64, &kernel, 0.7f64, &WeightWindow::Everywhere).unwrap();
    let a = statistics_for_fit(&f32_fit, &KINDS).unwrap();
    let b = statistics_for_fit(&f64_fit, &KINDS).unwrap();
    for (u, v) in a.iter().zip(&b) {
        assert!(
            close(u.value as f64, v.value, 1e-3),
            "{}: {} vs {}",
            u.kind,
            u.value,
            v.value
        );
    }
}

#[test]
fn report_json_round_trip() {
    let spec = ModelSpec::new(ModelId::Model1, 80, 2.0).with_seed(3);
    let sample = generate(&spec).unwrap();
    let config = AnalysisConfig {
        input: "sample.csv".into(),
        columns: ColumnMapping {
            response: "y".into(),
            covariates: Some(vec!["x1".into()]),
            ..Default::default()
        },
        pipeline: PipelineOptions {
            statistics: KINDS.to_vec(),
            ..Default::default()
        },
        ..Default::default()
    };
    let report = analyze_sample(&sample, &config, bundled_tables()).unwrap();
    let text = report.to_json().unwrap();
    let back = TestReport::from_json(&text).unwrap();
    assert_eq!(back, report);
    assert_eq!(back.to_json().unwrap(), text);
    assert!(TestReport::from_json(&text.replace("mcusum.test-report", "other")).is_err());
}

#[test]
fn kiefer_covariance() {
    // cov K₀(s₁,t₁),K₀(s₂,t₂) = (s₁∧s₂ − s₁s₂)(t₁∧t₂)
    let paths = 100_000;
    let (mut v, mut c) = (0.0, 0.0);
    for r in 0..paths {
        let k = simulate_kiefer_path::<f64>(4, 4, r as u64).unwrap();
        let a = k.at(2, 4);
        v += a * a;
        c += k.at(1, 2) * k.at(3, 4);
    }
    let var = v / paths as f64;
    let cov = c / paths as f64;
    assert!((var - 0.25).abs() < 0.005, "var {var}");
    assert!((cov - 0.03125).abs() < 0.005, "cov {cov}");
}

#[test]
fn tables_agree_across_seeds() {
    let kinds = [FunctionalKind::SupSt, FunctionalKind::MarginInt];
    let a = build_critical_tables(&kinds, &[0.95], 20_000, 32, 32, 1).unwrap();
    let b = build_critical_tables(&kinds, &[0.95], 20_000, 32, 32, 2).unwrap();
    for (ta, tb) in a.iter().zip(&b) {
        let (qa, qb) = (ta.quantile(0.95), tb.quantile(0.95));
        assert!((qa - qb).abs() < 0.03, "{:?}: {qa} vs {qb}", ta.kind);
    }
}

#[test]
fn single_replication_frequency_is_zero_or_one() {
    let spec = ModelSpec::new(ModelId::Model1, 60, 1.0);
    let cfg = ExperimentConfig {
        replications: 1,
        pipeline: PipelineOptions::default(),
        master_seed: 5,
    };
    let res = run_experiment(&spec, &cfg, None).unwrap();
    for rate in &res.rates {
        assert!(rate.frequency == 0.0 || rate.frequency == 1.0);
        assert_eq!(rate.standard_error, 0.0);
    }
}

#[test]
fn files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let spec = ModelSpec::new(ModelId::Model4Ar2, 40, 0.5).with_seed(8);
    let sample = generate(&spec).unwrap();
    let path = dir.path().join("sample.csv");
    write_sample(&sample, std::fs::File::create(&path).unwrap()).unwrap();
    let mapping = ColumnMapping {
        response: "y".into(),
        covariates: Some(vec!["x1".into(), "x2".into()]),
        ..Default::default()
    };
    let back: Sample = ingest(&path, &mapping).unwrap();
    assert_eq!(back.x(), sample.x());
    assert_eq!(back.y(), sample.y());

    let tables = CriticalTableSet::new(
        build_critical_tables(&[FunctionalKind::SupSt], &[0.9], 1000, 8, 8, 4).unwrap(),
    );
    let path = dir.path().join("tables.json");
    tables.write(&path).unwrap();
    assert_eq!(CriticalTableSet::read(&path).unwrap(), tables);
}
