mod common;

use common::{binomial_logistic_mi, bivariate_samples};
use decomp_core::eig::{DesignEvaluator, DesignSpec, EffectTarget, EigBudget, EstimatorKind};
use decomp_core::model::DecompositionModel;
use decomp_core::parallel::Execution;
use decomp_core::schema::{build_mask, Schema, Variant};

fn day_zero_case(rho: f64, cadavers: usize, estimator: EstimatorKind) -> (f64, f64, f64) {
    let schema = Schema::bundled();
    let model = DecompositionModel::new(&schema, &build_mask(Variant::Empty, &schema, None).unwrap()).unwrap();
    let l = &model.layout;
    let g = l.index_of("gamma[Bloat]").unwrap();
    let b = l.index_of("beta0[Bloat]").unwrap();
    let base: Vec<f64> = model.prior_means();
    let (mb, sb, mg, sg) = (0.5, 0.4, -1.0, 1.2);
    let samples = bivariate_samples(l.names().to_vec(), &base, (b, g), (mb, mg), (sb, sg), rho, 40_000, 17);
    let theta = EffectTarget { names: vec!["beta0[Bloat]".into()] }.indices(&model).unwrap();
    let ev = DesignEvaluator::new(&model, &schema, &samples, &theta).unwrap();
    let design = DesignSpec {
        num_cadavers: cadavers,
        covariates: Default::default(),
        cadavers: None,
        observation_day: 0.0,
    };
    let budget = EigBudget { n: 10_000, m: 4_000, m_prime: 4_000, seed: 5 };
    let est = ev.estimate(&design, estimator, &budget, Execution::Parallel).unwrap();
    let exact = binomial_logistic_mi(cadavers as u32, mb, sb, mg, sg, rho);
    (est.value, est.mc_standard_error, exact)
}

#[test]
fn quadrature_oracle_vanishes_without_correlation() {
    assert!(binomial_logistic_mi(3, 0.5, 0.4, -1.0, 1.2, 0.0).abs() < 1e-9);
    assert!(binomial_logistic_mi(3, 0.5, 0.4, -1.0, 1.2, -0.8) > 0.01);
}

#[test]
fn day_zero_eig_matches_quadrature() {
    for rho in [0.0, -0.8] {
        for est in [EstimatorKind::LowVariance, EstimatorKind::Naive] {
            let (v, se, exact) = day_zero_case(rho, 3, est);
            println!("rho {rho} {est:?}: {v:.5} ± {se:.5}, quadrature {exact:.5}");
            assert!((v - exact).abs() < 3.0 * se, "rho {rho} {est:?}: {v} ± {se} vs {exact}");
        }
    }
}

