//! Adaptive random-walk Metropolis, for gradient-free debugging.
//!
//! Proposals are isotropic in the whitened coordinates. The metric is
//! re-estimated on the same windows as NUTS, and the proposal scale follows
//! a Robbins-Monro recursion towards an acceptance rate of 0.234.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::metric::Metric;
use super::{adaptation_windows, ChainOutput, ChainStats, LogDensity, SamplerConfig};
use crate::error::Result;

const TARGET_ACCEPT: f64 = 0.234;

struct State {
    x: Vec<f64>,
    logp: f64,
}

fn log_density<T: LogDensity>(target: &T, x: &[f64], grad: &mut [f64]) -> f64 {
    let lp = target.log_density_and_grad(x, grad);
    if lp.is_nan() {
        f64::NEG_INFINITY
    } else {
        lp
    }
}

fn step<T: LogDensity>(
    target: &T,
    metric: &Metric,
    state: &mut State,
    scale: f64,
    rng: &mut ChaCha8Rng,
    buf: &mut (Vec<f64>, Vec<f64>, Vec<f64>),
) -> bool {
    let (z, dx, grad) = buf;
    z.iter_mut().for_each(|v| *v = scale * rng.sample::<f64, _>(StandardNormal));
    metric.to_x(z, dx);
    let proposal: Vec<f64> = state.x.iter().zip(dx.iter()).map(|(a, b)| a + b).collect();
    let lp = log_density(target, &proposal, grad);
    let accept = lp - state.logp >= 0.0 || rng.random::<f64>().ln() < lp - state.logp;
    if accept {
        state.x = proposal;
        state.logp = lp;
    }
    accept
}

pub(super) fn run<T: LogDensity>(target: &T, init: Vec<f64>, cfg: &SamplerConfig, rng: &mut ChaCha8Rng) -> Result<ChainOutput> {
    let dim = target.dim();
    let dense = cfg.metric.dense(dim);
    let mut buf = (vec![0.0; dim], vec![0.0; dim], vec![0.0; dim]);
    let mut metric = Metric::identity(dim);
    let mut state = State {
        logp: log_density(target, &init, &mut buf.2),
        x: init,
    };
    let base_scale = 2.38 / (dim as f64).sqrt();
    let mut log_scale = (0.1 * base_scale).ln();
    let windows = adaptation_windows(cfg.warmup);
    let mut next_window = 0;
    let mut window_draws: Vec<Vec<f64>> = Vec::new();
    let mut counter = 0.0f64;

    for it in 0..cfg.warmup {
        let accepted = step(target, &metric, &mut state, log_scale.exp(), rng, &mut buf);
        counter += 1.0;
        let rate = if accepted { 1.0 } else { 0.0 };
        log_scale += (rate - TARGET_ACCEPT) / counter.powf(0.6);
        if next_window < windows.len() {
            let (start, end) = windows[next_window];
            if it >= start && it < end {
                window_draws.push(state.x.clone());
            }
            if it + 1 == end {
                if let Some(m) = Metric::estimate(&window_draws, dense && window_draws.len() >= 2 * dim) {
                    metric = m;
                    log_scale = base_scale.ln();
                    counter = 0.0;
                }
                window_draws.clear();
                next_window += 1;
            }
        }
    }

    let scale = log_scale.exp();
    let mut draws = Vec::with_capacity(cfg.samples);
    let mut accepted = 0usize;
    for _ in 0..cfg.samples {
        accepted += usize::from(step(target, &metric, &mut state, scale, rng, &mut buf));
        draws.push(state.x.clone());
    }
    let stats = ChainStats {
        step_size: scale,
        mean_accept: accepted as f64 / cfg.samples as f64,
        divergences: 0,
        max_depth_hits: 0,
        gradient_evals: 0,
    };
    Ok((draws, stats))
}
