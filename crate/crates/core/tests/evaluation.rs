use chrono::{Days, NaiveDate};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tvpsv::data::{simulate_dgp, DgpFamily, DgpSpec};
use tvpsv::evaluation::*;
use tvpsv::kernels::{std_normal, GaussianMixture};
use tvpsv::models::{ChainSettings, Family, ModelSpec, PredictiveDensity};
use tvpsv::Error;

fn day(d: usize) -> NaiveDate {
    NaiveDate::from_ymd_opt(2021, 3, 1)
        .unwrap()
        .checked_add_days(Days::new(d as u64))
        .unwrap()
}

fn univariate_record(d: usize, means: &[f64], vars: &[f64], y: f64) -> ForecastRecord {
    let mix = GaussianMixture::equal_weights(
        means.iter().map(|m| DVector::from_element(1, *m)).collect(),
        vars.iter()
            .map(|v| DMatrix::from_element(1, 1, *v))
            .collect(),
    )
    .unwrap();
    ForecastRecord {
        window: d,
        date: day(d),
        model: Family::ArSv,
        train_rows: 50 + d,
        seed: 0,
        density: PredictiveDensity {
            model: Family::ArSv,
            date: Some(day(d)),
            mixture: mix,
        },
        realized: DVector::from_element(1, y),
    }
}

fn component() -> impl Strategy<Value = (f64, f64)> {
    (-2.0..2.0f64, 0.05..3.0f64)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn joint_lps_is_additive_over_partitions(
        comps in prop::collection::vec(prop::collection::vec(component(), 1..4), 2..12),
        ys in prop::collection::vec(-3.0..3.0f64, 12),
        cut in 1usize..11,
    ) {
        let recs: Vec<_> = comps.iter().enumerate().map(|(d, c)| {
            let (m, v): (Vec<f64>, Vec<f64>) = c.iter().cloned().unzip();
            univariate_record(d, &m, &v, ys[d])
        }).collect();
        let cut = cut.min(recs.len() - 1);
        let all = score(&recs, &[0]).unwrap();
        let a = score(&recs[..cut], &[0]).unwrap();
        let b = score(&recs[cut..], &[0]).unwrap();
        prop_assert!((all.joint_lps - a.joint_lps - b.joint_lps).abs() < 1e-9);
        prop_assert!((all.marginal_lps[0] - a.marginal_lps[0] - b.marginal_lps[0]).abs() < 1e-9);
    }

    #[test]
    fn pit_is_invariant_to_increasing_affine_maps(
        comps in prop::collection::vec(component(), 1..5),
        y in -3.0..3.0f64,
        scale in 0.1..10.0f64,
        shift in -5.0..5.0f64,
    ) {
        let (m, v): (Vec<f64>, Vec<f64>) = comps.iter().cloned().unzip();
        let base = pit_z_series(&[univariate_record(0, &m, &v, y)], 0).unwrap()[0];
        let m2: Vec<f64> = m.iter().map(|x| scale * x + shift).collect();
        let v2: Vec<f64> = v.iter().map(|x| scale * scale * x).collect();
        let moved = pit_z_series(&[univariate_record(0, &m2, &v2, scale * y + shift)], 0).unwrap()[0];
        prop_assert!((base - moved).abs() < 1e-8, "{} vs {}", base, moved);
    }

    #[test]
    fn mixture_mean_beats_average_component_mean(
        comps in prop::collection::vec(component(), 1..6),
        y in -3.0..3.0f64,
    ) {
        let (m, v): (Vec<f64>, Vec<f64>) = comps.iter().cloned().unzip();
        let rep = score(&[univariate_record(0, &m, &v, y)], &[0]).unwrap();
        let avg: f64 = m.iter().map(|mk| (y - mk).powi(2)).sum::<f64>() / m.len() as f64;
        prop_assert!(rep.rmse[0].powi(2) <= avg + 1e-12);
    }
}

#[test]
fn pit_tests_have_correct_size() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let reps = 500;
    let mut rejections = [0usize; 3];
    for _ in 0..reps {
        let z: Vec<f64> = (0..10_000).map(|_| std_normal(&mut rng)).collect();
        let t = pit_tests(&z).unwrap();
        for (k, p) in [t.mean.p_value, t.variance.p_value, t.persistence.p_value]
            .iter()
            .enumerate()
        {
            if *p < 0.05 {
                rejections[k] += 1;
            }
        }
    }
    for r in rejections {
        let rate = r as f64 / reps as f64;
        assert!(rate > 0.03 && rate < 0.07, "rejection rate {rate}");
    }
}

#[test]
fn variance_test_has_power_at_holdout_scale() {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let reps = 200;
    let rejected = (0..reps)
        .filter(|_| {
            let z: Vec<f64> = (0..160).map(|_| 0.7 * std_normal(&mut rng)).collect();
            pit_tests(&z).unwrap().variance.p_value < 0.05
        })
        .count();
    assert!(rejected as f64 / reps as f64 > 0.9, "{rejected} of {reps}");
}

#[test]
fn true_density_pit_is_normal() {
    // forecasts from the generating Gaussian density itself
    let mut passed = 0;
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
        let recs: Vec<_> = (0..200)
            .map(|d| {
                let mu = 0.3 * (d as f64 / 7.0).sin();
                let sd = 0.5 + 0.4 * (d as f64 / 11.0).cos().abs();
                univariate_record(d, &[mu], &[sd * sd], mu + sd * std_normal(&mut rng))
            })
            .collect();
        let z = pit_z_series(&recs, 0).unwrap();
        if jarque_bera(&z).unwrap().1 > 0.05 {
            passed += 1;
        }
    }
    assert!(passed >= 18, "{passed} of 20 passed");
}

fn quick_spec(family: Family, iterations: usize) -> ModelSpec {
    let mut spec = ModelSpec::new(family);
    spec.chain = ChainSettings {
        max_components: 100,
        ..ChainSettings::with_iterations(iterations)
    };
    spec.seed = 17;
    spec
}

#[test]
fn single_window_trains_on_all_but_last_row() {
    let (panel, _) =
        simulate_dgp(&DgpSpec::default_for(DgpFamily::ConstantVar, 2, 1), 60, 1).unwrap();
    let recs = expanding_window_run(&panel, &quick_spec(Family::NgVar, 200), 1).unwrap();
    assert_eq!(recs.len(), 1);
    assert_eq!(recs[0].train_rows, 59);
    assert_eq!(recs[0].date, panel.dates()[59]);
    assert_eq!(recs[0].realized, panel.values().row(59).transpose());
}

#[test]
fn long_holdout_starts_from_156_rows() {
    let (panel, _) =
        simulate_dgp(&DgpSpec::default_for(DgpFamily::ConstantVar, 2, 1), 316, 2).unwrap();
    let rec = forecast_window(&panel, &quick_spec(Family::ArSv, 100), 160, 0).unwrap();
    assert_eq!(rec.train_rows, 156);
}

#[test]
fn parallel_and_serial_runs_agree() {
    let (panel, _) = simulate_dgp(&DgpSpec::default_for(DgpFamily::TTvp, 2, 1), 80, 3).unwrap();
    let spec = quick_spec(Family::TTvpNg, 200);
    let serial = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();
    let wide = rayon::ThreadPoolBuilder::new()
        .num_threads(4)
        .build()
        .unwrap();
    let a = serial
        .install(|| expanding_window_run(&panel, &spec, 5))
        .unwrap();
    let b = wide
        .install(|| expanding_window_run(&panel, &spec, 5))
        .unwrap();
    assert_eq!(a, b);
}

#[test]
fn chain_failure_reports_window() {
    let (panel, _) =
        simulate_dgp(&DgpSpec::default_for(DgpFamily::ConstantVar, 2, 1), 60, 4).unwrap();
    let mut spec = quick_spec(Family::NgVar, 100);
    spec.chain.burn_in = spec.chain.iterations;
    match expanding_window_run(&panel, &spec, 3) {
        Err(Error::Window { window, .. }) => assert_eq!(window, 0),
        other => panic!("expected a window error, got {other:?}"),
    }
}

/// Plug-in Gaussian VAR(1) with constant covariance, fitted by least squares.
fn homoskedastic_var_record(values: &DMatrix<f64>, train: usize) -> GaussianMixture {
    let m = values.ncols();
    let x = values.rows(0, train - 1).into_owned();
    let y = values.rows(1, train - 1).into_owned();
    let xtx = x.transpose() * &x;
    let coef = xtx.lu().solve(&(x.transpose() * &y)).unwrap();
    let resid = &y - &x * &coef;
    let sigma = resid.transpose() * &resid / (train - 1 - m) as f64;
    let mean = (values.row(train - 1) * &coef).transpose();
    GaussianMixture::equal_weights(vec![mean], vec![sigma]).unwrap()
}

#[test]
fn true_family_beats_homoskedastic_var() {
    let mut wins = 0;
    for seed in 0..5u64 {
        let mut dgp = DgpSpec::default_for(DgpFamily::TTvp, 2, 1);
        dgp.sv_sigma = vec![0.4; 2];
        let (panel, _) = simulate_dgp(&dgp, 200, 300 + seed).unwrap();
        let holdout = 40;
        let recs =
            expanding_window_run(&panel, &quick_spec(Family::TTvpNg, 1000), holdout).unwrap();
        let model = score(&recs, &[0, 1]).unwrap().joint_lps;
        let plugin: Vec<ForecastRecord> = recs
            .iter()
            .map(|r| ForecastRecord {
                density: PredictiveDensity {
                    model: Family::NgVar,
                    date: Some(r.date),
                    mixture: homoskedastic_var_record(panel.values(), r.train_rows),
                },
                ..r.clone()
            })
            .collect();
        let baseline = score(&plugin, &[0, 1]).unwrap().joint_lps;
        if model > baseline {
            wins += 1;
        }
    }
    assert!(wins >= 4, "{wins} of 5");
}
