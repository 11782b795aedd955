//! Sequential vs data-parallel execution of the three hot loops: the
//! likelihood gradient, batched PMI posteriors and the nested EIG estimator.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use decomp_core::data_io::{encode_cases, generate_synthetic, SyntheticSpec};
use decomp_core::eig::{eig_naive, EigBudget, ToyExperiment, ToySource, ToyTarget};
use decomp_core::model::DecompositionModel;
use decomp_core::parallel::Execution;
use decomp_core::pmi::{PmiEngine, TauGrid};
use decomp_core::schema::{build_mask, CaseDesign, Schema, Variant};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn setup(n: usize) -> (DecompositionModel, Vec<f64>, Vec<CaseDesign>) {
    let schema = Schema::bundled();
    let model = DecompositionModel::new(&schema, &build_mask(Variant::Strict, &schema, None).unwrap()).unwrap();
    let truth = model.prior_means();
    let spec = SyntheticSpec::new(&schema, truth.clone(), n);
    let records = generate_synthetic(&schema, &model, &spec, 1).unwrap();
    let designs = encode_cases(&schema, &records).unwrap();
    (model, truth, designs)
}

fn gradient(c: &mut Criterion) {
    let (mut model, params, designs) = setup(2000);
    let mut group = c.benchmark_group("log_posterior_and_grad");
    for (name, exec) in MODES {
        model.execution = exec;
        let data = model.dataset(&designs).unwrap();
        let mut grad = vec![0.0; model.dim()];
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| model.log_posterior_and_grad(&data, &params, &mut grad))
        });
    }
    group.finish();
}

fn pmi(c: &mut Criterion) {
    let (mut model, params, designs) = setup(64);
    let draws: Vec<Vec<f64>> = (0..200).map(|i| params.iter().map(|p| p + 1e-3 * i as f64).collect()).collect();
    let mut group = c.benchmark_group("pmi_posteriors");
    group.sample_size(20);
    for (name, exec) in MODES {
        model.execution = exec;
        let grid = TauGrid::new(Default::default(), Default::default()).unwrap();
        let engine = PmiEngine::new(&model, draws.iter().map(Vec::as_slice).collect(), grid).unwrap();
        group.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| engine.posteriors(&designs).unwrap()));
    }
    group.finish();
}

fn eig(c: &mut Criterion) {
    let experiment = ToyExperiment { x: 2.0, sigma: 0.5 };
    let source = ToySource {
        sigma_theta: 1.0,
        sigma_phi: 1.0,
        target: ToyTarget::Slope,
    };
    let budget = EigBudget { n: 1000, m: 500, m_prime: 500, seed: 0 };
    let mut group = c.benchmark_group("eig_naive_toy");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| eig_naive(&experiment, &source, &budget, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, gradient, pmi, eig);
criterion_main!(benches);
