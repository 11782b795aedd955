mod common;

use chrono::{Duration, NaiveDate};
use proptest::prelude::*;

use decomp_core::data_io::{
    compute_pmi, generate_synthetic, read_cases_file, write_cases, DateEvidence, DeathDateKind, SyntheticSpec,
    SyntheticSpecDoc, DEMO_SYNTHETIC_SPEC,
};
use decomp_core::model::DecompositionModel;
use decomp_core::pmi::{GridConfig, PmiEngine, PmiPrior, TauGrid};
use decomp_core::schema::{build_mask, CaseDesign, Schema, Variant};

fn empty_model(schema: &Schema) -> DecompositionModel {
    DecompositionModel::new(schema, &build_mask(Variant::Empty, schema, None).unwrap()).unwrap()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    // Single-draw posterior against a direct evaluation of prior times
    // Bernoulli likelihood on the same grid.
    #[test]
    fn single_draw_posterior_matches_direct_evaluation(
        gammas in prop::collection::vec(-4.0f64..2.0, 24),
        rates in prop::collection::vec(-0.5f64..1.5, 24),
        obs in prop::collection::vec(prop::option::of(any::<bool>()), 24),
    ) {
        let schema = Schema::bundled();
        let model = empty_model(&schema);
        let l = &model.layout;
        let mut params = vec![0.0; model.dim()];
        for d in 0..24 {
            params[l.gamma_index(d)] = gammas[d];
            params[l.beta0_index(d)] = rates[d];
        }
        let grid = TauGrid::new(PmiPrior::default(), GridConfig::default()).unwrap();
        let tau = grid.tau.clone();
        let engine = PmiEngine::new(&model, vec![params.as_slice()], grid).unwrap();
        let case = CaseDesign {
            levels: schema.covariates.reference_levels(),
            log1p_pmi: None,
            observations: obs.iter().map(|o| o.map(|b| if b { 1.0 } else { 0.0 })).collect(),
        };
        let post = engine.posterior(&case).unwrap();

        let raw: Vec<f64> = tau
            .iter()
            .map(|&t| {
                let mut v = (-0.5 * ((t - 2.33) / 1.53f64).powi(2)).exp();
                for d in 0..24 {
                    if let Some(y) = obs[d] {
                        let p = sigmoid(gammas[d] + t * rates[d]);
                        v *= if y { p } else { 1.0 - p };
                    }
                }
                v
            })
            .collect();
        let z = common::trapezoid(tau[1] - tau[0], &raw);
        for (a, b) in post.density.iter().zip(&raw) {
            prop_assert!((a - b / z).abs() <= 1e-8 * (1.0 + b / z), "{a} vs {}", b / z);
        }
        prop_assert!((post.integral() - 1.0).abs() < 1e-10);
        let (lo, hi) = (post.quantile(0.05), post.quantile(0.95));
        prop_assert!(lo <= post.median_tau() && post.median_tau() <= hi);
    }

    #[test]
    fn exact_dates_give_day_differences(days in 0i64..4000, start in 0i64..20000) {
        let death = NaiveDate::from_ymd_opt(1970, 1, 1).unwrap() + Duration::days(start);
        let e = DateEvidence {
            discovery_date: death + Duration::days(days),
            death_date_kind: DeathDateKind::Exact,
            death_date: Some(death),
            range_start: None,
            range_end: None,
        };
        prop_assert_eq!(compute_pmi(&e).unwrap(), days as f64);
    }

    #[test]
    fn range_dates_use_the_midpoint(width in 0i64..60, gap in 0i64..400) {
        let start = NaiveDate::from_ymd_opt(2010, 3, 1).unwrap();
        let end = start + Duration::days(width);
        let e = DateEvidence {
            discovery_date: end + Duration::days(gap),
            death_date_kind: DeathDateKind::Range,
            death_date: None,
            range_start: Some(start),
            range_end: Some(end),
        };
        prop_assert_eq!(compute_pmi(&e).unwrap(), gap as f64 + width as f64 / 2.0);
    }
}

#[test]
fn death_after_discovery_is_rejected() {
    let d = NaiveDate::from_ymd_opt(2020, 5, 5).unwrap();
    let e = DateEvidence {
        discovery_date: d,
        death_date_kind: DeathDateKind::Approximate,
        death_date: Some(d + Duration::days(1)),
        range_start: None,
        range_end: None,
    };
    assert!(compute_pmi(&e).is_err());
}

#[test]
fn synthetic_cases_round_trip_through_csv() {
    let schema = Schema::bundled();
    let model = empty_model(&schema);
    let doc: SyntheticSpecDoc = toml::from_str(DEMO_SYNTHETIC_SPEC).unwrap();
    let mut spec = SyntheticSpec::from_doc(&doc, &schema, &model).unwrap();
    spec.n_cases = 150;
    let records = generate_synthetic(&schema, &model, &spec, 21).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cases.csv");
    write_cases(std::fs::File::create(&path).unwrap(), &schema, &records).unwrap();
    let (back, report) = read_cases_file(&path, &schema).unwrap();
    assert_eq!(report.accepted, 150);
    assert!(report.rejected.is_empty());
    assert_eq!(back, records);
    for r in &records {
        let design = schema.encode_case(r).unwrap();
        assert_eq!(schema.decode_case(&r.case_id, &design), *r);
    }
}

#[test]
fn finer_grids_converge() {
    let schema = Schema::bundled();
    let model = empty_model(&schema);
    let mut params = vec![0.0; model.dim()];
    for d in 0..24 {
        params[model.layout.gamma_index(d)] = -2.0 + 0.1 * d as f64;
        params[model.layout.beta0_index(d)] = 0.6;
    }
    let case = CaseDesign {
        levels: schema.covariates.reference_levels(),
        log1p_pmi: None,
        observations: (0..24).map(|d| Some(if d % 3 == 0 { 1.0 } else { 0.0 })).collect(),
    };
    let medians: Vec<f64> = [1001, 2001, 8001]
        .iter()
        .map(|&points| {
            let grid = TauGrid::new(PmiPrior::default(), GridConfig { points, upper_sds: 5.0 }).unwrap();
            PmiEngine::new(&model, vec![params.as_slice()], grid).unwrap().posterior(&case).unwrap().median_tau()
        })
        .collect();
    assert!((medians[1] - medians[2]).abs() < (medians[0] - medians[2]).abs() + 1e-6);
    assert!((medians[0] - medians[2]).abs() < 2e-3, "{medians:?}");
    let coarse = GridConfig { points: 101, upper_sds: 5.0 };
    assert!(TauGrid::new(PmiPrior::default(), coarse).is_err());
}
