//! Posterior sampling: multinomial NUTS with windowed metric adaptation, an
//! adaptive random-walk Metropolis fallback, and split-R̂ / ESS diagnostics.
//!
//! Chains are independent; each owns a ChaCha stream derived from
//! `(seed, chain)`, so output is bit-identical for a given configuration
//! regardless of how many worker threads run.

pub mod diagnostics;
pub mod metric;
mod nuts;
mod rwm;

use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dataset, DecompositionModel};
use crate::parallel::{map_indexed, Execution};

pub use diagnostics::{diagnose, effective_sample_size, split_rhat, DiagnosticsReport, ParamDiagnostics};
pub use metric::Metric;

/// Differentiable unnormalised log density.
pub trait LogDensity: Sync {
    fn dim(&self) -> usize;
    /// Returns `log p(x)` and writes `∇ log p(x)` into `grad`.
    fn log_density_and_grad(&self, x: &[f64], grad: &mut [f64]) -> f64;
}

/// The decomposition model's posterior over a training set.
pub struct Posterior<'a> {
    pub model: &'a DecompositionModel,
    pub data: &'a Dataset,
}

impl LogDensity for Posterior<'_> {
    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn log_density_and_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        self.model.log_posterior_and_grad(self.data, x, grad)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    #[default]
    Nuts,
    RandomWalk,
}

/// Metric adapted during warmup. `Auto` picks dense up to 256 dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    #[default]
    Auto,
    Dense,
    Diagonal,
}

impl MetricKind {
    fn dense(self, dim: usize) -> bool {
        match self {
            MetricKind::Auto => dim <= 256,
            MetricKind::Dense => true,
            MetricKind::Diagonal => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub num_chains: usize,
    pub warmup: usize,
    pub samples: usize,
    pub seed: u64,
    pub algorithm: Algorithm,
    pub metric: MetricKind,
    pub target_accept: f64,
    pub max_tree_depth: usize,
    pub init_jitter: f64,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            num_chains: 4,
            warmup: 1000,
            samples: 1000,
            seed: 0,
            algorithm: Algorithm::Nuts,
            metric: MetricKind::Auto,
            target_accept: 0.8,
            max_tree_depth: 10,
            init_jitter: 0.1,
            execution: Execution::default(),
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_chains == 0 || self.warmup == 0 || self.samples == 0 {
            return Err(Error::invalid("chains, warmup and samples must all be positive"));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::invalid("target_accept must lie in (0, 1)"));
        }
        if self.max_tree_depth == 0 || self.max_tree_depth > 20 {
            return Err(Error::invalid("max_tree_depth must lie in 1..=20"));
        }
        if !(self.init_jitter >= 0.0) {
            return Err(Error::invalid("init_jitter must be nonnegative"));
        }
        Ok(())
    }
}

/// Per-chain sampler statistics over the kept draws.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ChainStats {
    pub step_size: f64,
    pub mean_accept: f64,
    pub divergences: usize,
    pub max_depth_hits: usize,
    pub gradient_evals: usize,
}

/// Kept draws, `chains[c][i]` being draw `i` of chain `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSamples {
    pub names: Vec<String>,
    pub chains: Vec<Vec<Vec<f64>>>,
    pub stats: Vec<ChainStats>,
}

impl PosteriorSamples {
    pub fn num_chains(&self) -> usize {
        self.chains.len()
    }

    pub fn draws_per_chain(&self) -> usize {
        self.chains.first().map_or(0, Vec::len)
    }

    pub fn num_draws(&self) -> usize {
        self.chains.iter().map(Vec::len).sum()
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    /// All draws, chain-major.
    pub fn iter(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.chains.iter().flatten().map(Vec::as_slice)
    }

    /// Draw `i` in chain-major order.
    pub fn draw(&self, i: usize) -> &[f64] {
        let per = self.draws_per_chain();
        &self.chains[i / per][i % per]
    }

    /// Up to `n` draws spread evenly across the full chain-major sequence.
    pub fn thinned(&self, n: usize) -> Vec<&[f64]> {
        let total = self.num_draws();
        if n == 0 || n >= total {
            return self.iter().collect();
        }
        (0..n).map(|k| self.draw(k * total / n)).collect()
    }

    /// Values of parameter `j`, one vector per chain.
    pub fn column(&self, j: usize) -> Vec<Vec<f64>> {
        self.chains.iter().map(|ch| ch.iter().map(|d| d[j]).collect()).collect()
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim()];
        let n = self.num_draws() as f64;
        for d in self.iter() {
            for (a, x) in m.iter_mut().zip(d) {
                *a += x / n;
            }
        }
        m
    }

    pub fn diagnostics(&self) -> Result<DiagnosticsReport> {
        diagnose(self)
    }

    /// Write one draw per line: `chain,iteration,<names…>`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["chain".to_string(), "iteration".to_string()];
        header.extend(self.names.iter().cloned());
        w.write_record(&header)?;
        let mut row = Vec::with_capacity(header.len());
        for (c, chain) in self.chains.iter().enumerate() {
            for (i, draw) in chain.iter().enumerate() {
                row.clear();
                row.push(c.to_string());
                row.push(i.to_string());
                row.extend(draw.iter().map(|v| v.to_string()));
                w.write_record(&row)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Inverse of [`write_csv`](Self::write_csv). Sampler statistics are not
    /// stored in the draws file and come back empty.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let header = r.headers()?.clone();
        if header.len() < 3 || &header[0] != "chain" || &header[1] != "iteration" {
            return Err(Error::Parse("samples file must start with chain,iteration columns".into()));
        }
        let names: Vec<String> = header.iter().skip(2).map(str::to_string).collect();
        let mut chains: Vec<Vec<Vec<f64>>> = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            let bad = |what: &str| Error::Parse(format!("samples row {}: {what}", line + 2));
            let c: usize = rec[0].parse().map_err(|_| bad("bad chain index"))?;
            let i: usize = rec[1].parse().map_err(|_| bad("bad iteration"))?;
            let draw = rec
                .iter()
                .skip(2)
                .map(|v| v.parse::<f64>().map_err(|_| bad("non-numeric value")))
                .collect::<Result<Vec<_>>>()?;
            if c == chains.len() {
                chains.push(Vec::new());
            }
            if c + 1 != chains.len() || i != chains[c].len() {
                return Err(bad("rows out of order"));
            }
            chains[c].push(draw);
        }
        if chains.is_empty() || chains.iter().any(|ch| ch.len() != chains[0].len()) {
            return Err(Error::Parse("samples file has empty or ragged chains".into()));
        }
        let stats = vec![ChainStats::default(); chains.len()];
        Ok(Self { names, chains, stats })
    }
}

/// Sample the model posterior, initialising at prior means plus jitter.
pub fn sample_posterior(model: &DecompositionModel, data: &Dataset, cfg: &SamplerConfig) -> Result<PosteriorSamples> {
    let target = Posterior { model, data };
    sample(&target, &model.prior_means(), model.layout.names().to_vec(), cfg)
}

/// Sample any [`LogDensity`] starting near `center`.
pub fn sample<T: LogDensity>(target: &T, center: &[f64], names: Vec<String>, cfg: &SamplerConfig) -> Result<PosteriorSamples> {
    cfg.validate()?;
    if center.len() != target.dim() || names.len() != target.dim() {
        return Err(Error::invalid("initial point or names do not match the target dimension"));
    }
    let results = map_indexed(cfg.execution, cfg.num_chains, |chain| {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(chain as u64);
        let init = initial_point(target, center, cfg.init_jitter, &mut rng)?;
        match cfg.algorithm {
            Algorithm::Nuts => run_nuts(target, init, cfg, &mut rng),
            Algorithm::RandomWalk => rwm::run(target, init, cfg, &mut rng),
        }
    });
    let mut chains = Vec::with_capacity(cfg.num_chains);
    let mut stats = Vec::with_capacity(cfg.num_chains);
    for (chain, r) in results.into_iter().enumerate() {
        let (draws, s) = r.map_err(|e| match e {
            Error::Sampler(m) => Error::Sampler(format!("chain {chain}: {m}")),
            other => other,
        })?;
        chains.push(draws);
        stats.push(s);
    }
    Ok(PosteriorSamples { names, chains, stats })
}

/// Fail unless the fit passes the convergence gates.
pub fn ensure_converged(samples: &PosteriorSamples) -> Result<DiagnosticsReport> {
    let report = diagnose(samples)?;
    if !report.passes {
        return Err(Error::Diagnostics(report.summary()));
    }
    Ok(report)
}

fn initial_point<T: LogDensity>(target: &T, center: &[f64], jitter: f64, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let mut grad = vec![0.0; center.len()];
    let noise = Normal::new(0.0, jitter.max(f64::MIN_POSITIVE)).expect("valid jitter");
    for _ in 0..100 {
        let x: Vec<f64> = center
            .iter()
            .map(|m| if jitter > 0.0 { m + noise.sample(rng) } else { *m })
            .collect();
        let lp = target.log_density_and_grad(&x, &mut grad);
        if lp.is_finite() && grad.iter().all(|g| g.is_finite()) {
            return Ok(x);
        }
    }
    Err(Error::Sampler("log density is not finite at initialisation".into()))
}

/// Slow adaptation windows `[start, end)` within the warmup phase.
pub(crate) fn adaptation_windows(warmup: usize) -> Vec<(usize, usize)> {
    if warmup < 20 {
        return Vec::new();
    }
    let (mut init, mut term, mut base) = (75, 50, 25);
    if init + term + base > warmup {
        init = warmup * 15 / 100;
        term = warmup / 10;
        base = warmup - init - term;
    }
    let end_slow = warmup - term;
    let mut windows = Vec::new();
    let (mut start, mut size) = (init, base);
    while start < end_slow {
        let mut end = start + size;
        if end + 2 * size > end_slow {
            end = end_slow;
        }
        windows.push((start, end));
        start = end;
        size *= 2;
    }
    windows
}

type ChainOutput = (Vec<Vec<f64>>, ChainStats);

fn run_nuts<T: LogDensity>(target: &T, init: Vec<f64>, cfg: &SamplerConfig, rng: &mut ChaCha8Rng) -> Result<ChainOutput> {
    let dim = target.dim();
    let dense = cfg.metric.dense(dim);
    let mut metric = Metric::identity(dim);
    let windows = adaptation_windows(cfg.warmup);

    let mut x_current = init;
    let mut w = nuts::Whitened::new(target, &metric);
    let mut z = w.point(metric.to_u(&x_current));
    let mut eps = nuts::find_reasonable_step(&mut w, &z, 1.0, rng)
        .ok_or_else(|| Error::Sampler("could not find an initial step size".into()))?;
    let mut da = nuts::DualAveraging::new(cfg.target_accept, eps);
    let mut window_draws: Vec<Vec<f64>> = Vec::new();
    let mut next_window = 0;

    for it in 0..cfg.warmup {
        let (next, info) = nuts::transition(&mut w, &z, eps, cfg.max_tree_depth, rng);
        z = next;
        eps = da.update(info.accept_stat);
        if next_window < windows.len() {
            let (start, end) = windows[next_window];
            if it >= start && it < end {
                window_draws.push(w.x_of(&z.u));
            }
            if it + 1 == end {
                x_current = w.x_of(&z.u);
                let use_dense = dense && window_draws.len() >= 2 * dim;
                if let Some(m) = Metric::estimate(&window_draws, use_dense) {
                    metric = m;
                }
                window_draws.clear();
                next_window += 1;
                w = nuts::Whitened::new(target, &metric);
                z = w.point(metric.to_u(&x_current));
                eps = nuts::find_reasonable_step(&mut w, &z, eps, rng)
                    .ok_or_else(|| Error::Sampler("step size search failed after metric update".into()))?;
                da.restart(eps);
            }
        }
    }
    eps = da.final_step();
    if !eps.is_finite() || eps <= 0.0 {
        return Err(Error::Sampler("step size adaptation diverged".into()));
    }

    let mut draws = Vec::with_capacity(cfg.samples);
    let mut stats = ChainStats {
        step_size: eps,
        ..ChainStats::default()
    };
    let mut accept_sum = 0.0;
    for _ in 0..cfg.samples {
        let (next, info) = nuts::transition(&mut w, &z, eps, cfg.max_tree_depth, rng);
        z = next;
        accept_sum += info.accept_stat;
        stats.divergences += usize::from(info.divergent);
        stats.max_depth_hits += usize::from(info.depth >= cfg.max_tree_depth);
        stats.gradient_evals += info.n_leapfrog;
        draws.push(w.x_of(&z.u));
    }
    stats.mean_accept = accept_sum / cfg.samples as f64;
    Ok((draws, stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stan_style_windows_for_default_warmup() {
        assert_eq!(
            adaptation_windows(1000),
            vec![(75, 100), (100, 150), (150, 250), (250, 450), (450, 950)]
        );
        assert!(adaptation_windows(10).is_empty());
        let small = adaptation_windows(100);
        assert_eq!(small.first().unwrap().0, 15);
        assert_eq!(small.last().unwrap().1, 90);
    }
}
