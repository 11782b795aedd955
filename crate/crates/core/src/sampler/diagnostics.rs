//! Split-R̂ and effective sample size.

use serde::{Deserialize, Serialize};

use super::{ChainStats, PosteriorSamples};
use crate::error::{Error, Result};

pub const RHAT_THRESHOLD: f64 = 1.05;
pub const ESS_THRESHOLD: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamDiagnostics {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    /// `None` when the within-chain variance is zero.
    pub rhat: Option<f64>,
    pub ess: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub num_chains: usize,
    pub draws_per_chain: usize,
    pub max_rhat: Option<f64>,
    pub min_ess: Option<f64>,
    pub degenerate: Vec<String>,
    pub passes: bool,
    pub divergences: usize,
    pub chains: Vec<ChainStats>,
    pub params: Vec<ParamDiagnostics>,
}

impl DiagnosticsReport {
    pub fn summary(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or("undefined".to_string(), |x| format!("{x:.4}"));
        let mut s = format!(
            "max R-hat {} (< {RHAT_THRESHOLD}), min ESS {} (> {ESS_THRESHOLD})",
            fmt(self.max_rhat),
            fmt(self.min_ess)
        );
        if !self.degenerate.is_empty() {
            s.push_str(&format!(", {} degenerate parameter(s) e.g. {}", self.degenerate.len(), self.degenerate[0]));
        }
        if self.divergences > 0 {
            s.push_str(&format!(", {} divergent transitions", self.divergences));
        }
        s
    }
}

fn split(chains: &[Vec<f64>]) -> Vec<&[f64]> {
    let n = chains.iter().map(Vec::len).min().unwrap_or(0);
    let half = n / 2;
    chains
        .iter()
        .flat_map(|c| [&c[..half], &c[n - half..n]])
        .collect()
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v)
}

/// Split potential scale reduction. `None` when undefined (zero
/// within-chain variance or fewer than four draws per chain).
pub fn split_rhat(chains: &[Vec<f64>]) -> Option<f64> {
    let parts = split(chains);
    let n = parts.first()?.len();
    if n < 2 {
        return None;
    }
    let stats: Vec<(f64, f64)> = parts.iter().map(|p| mean_var(p)).collect();
    let m = stats.len() as f64;
    let nf = n as f64;
    let grand = stats.iter().map(|s| s.0).sum::<f64>() / m;
    let b = nf / (m - 1.0) * stats.iter().map(|s| (s.0 - grand).powi(2)).sum::<f64>();
    let w = stats.iter().map(|s| s.1).sum::<f64>() / m;
    if !(w > 0.0) || !w.is_finite() {
        return None;
    }
    let var_plus = (nf - 1.0) / nf * w + b / nf;
    Some((var_plus / w).sqrt())
}

/// Autocovariance at one lag (biased, divides by `n`).
fn autocov(x: &[f64], mean: f64, lag: usize) -> f64 {
    let n = x.len();
    (0..n - lag).map(|i| (x[i] - mean) * (x[i + lag] - mean)).sum::<f64>() / n as f64
}

/// Effective sample size with Geyer's initial monotone sequence over split
/// chains.
pub fn effective_sample_size(chains: &[Vec<f64>]) -> Option<f64> {
    let parts = split(chains);
    let n = parts.first()?.len();
    if n < 4 {
        return None;
    }
    let m = parts.len();
    let means: Vec<f64> = parts.iter().map(|p| p.iter().sum::<f64>() / n as f64).collect();
    let nf = n as f64;
    let acov0: Vec<f64> = parts.iter().zip(&means).map(|(p, &mu)| autocov(p, mu, 0)).collect();
    let mean_var = acov0.iter().map(|a| a * nf / (nf - 1.0)).sum::<f64>() / m as f64;
    let mut var_plus = mean_var * (nf - 1.0) / nf;
    if m > 1 {
        let g = means.iter().sum::<f64>() / m as f64;
        var_plus += means.iter().map(|x| (x - g).powi(2)).sum::<f64>() / (m as f64 - 1.0);
    }
    if !(var_plus > 0.0) || !(mean_var > 0.0) {
        return None;
    }
    let rho = |lag: usize| {
        let a = parts
            .iter()
            .zip(&means)
            .map(|(p, &mu)| autocov(p, mu, lag))
            .sum::<f64>()
            / m as f64;
        1.0 - (mean_var - a) / var_plus
    };
    let mut rho_hat = vec![0.0; n];
    rho_hat[0] = 1.0;
    let mut even = 1.0;
    let mut odd = rho(1);
    rho_hat[1] = odd;
    let mut s = 1;
    while s < n - 4 && even + odd > 0.0 {
        even = rho(s + 1);
        odd = rho(s + 2);
        if even + odd >= 0.0 {
            rho_hat[s + 1] = even;
            rho_hat[s + 2] = odd;
        }
        s += 2;
    }
    let max_s = s;
    if even > 0.0 && max_s + 1 < n {
        rho_hat[max_s + 1] = even;
    }
    let mut k = 1;
    while k + 3 <= max_s {
        if rho_hat[k + 1] + rho_hat[k + 2] > rho_hat[k - 1] + rho_hat[k] {
            rho_hat[k + 1] = (rho_hat[k - 1] + rho_hat[k]) / 2.0;
            rho_hat[k + 2] = rho_hat[k + 1];
        }
        k += 2;
    }
    let total = (m * n) as f64;
    let tail = if max_s + 1 < n { rho_hat[max_s + 1] } else { 0.0 };
    let tau = (-1.0 + 2.0 * rho_hat[..max_s].iter().sum::<f64>() + tail).max(1.0 / total.log10());
    Some(total / tau)
}

/// Per-parameter diagnostics and the pass/fail gate
/// (max R̂ < 1.05, min ESS > 100, no degenerate parameter).
pub fn diagnose(samples: &PosteriorSamples) -> Result<DiagnosticsReport> {
    if samples.num_chains() < 2 {
        return Err(Error::Diagnostics("diagnostics need at least two chains".into()));
    }
    let mut params = Vec::with_capacity(samples.dim());
    let mut degenerate = Vec::new();
    let mut max_rhat: Option<f64> = None;
    let mut min_ess: Option<f64> = None;
    for (j, name) in samples.names.iter().enumerate() {
        let col = samples.column(j);
        let flat: Vec<f64> = col.iter().flatten().copied().collect();
        let (mean, var) = mean_var(&flat);
        let rhat = split_rhat(&col);
        let ess = effective_sample_size(&col);
        match (rhat, ess) {
            (Some(r), Some(e)) => {
                max_rhat = Some(max_rhat.map_or(r, |m| m.max(r)));
                min_ess = Some(min_ess.map_or(e, |m| m.min(e)));
            }
            _ => degenerate.push(name.clone()),
        }
        params.push(ParamDiagnostics {
            name: name.clone(),
            mean,
            sd: var.max(0.0).sqrt(),
            rhat,
            ess,
        });
    }
    let passes = degenerate.is_empty()
        && max_rhat.is_some_and(|r| r < RHAT_THRESHOLD)
        && min_ess.is_some_and(|e| e > ESS_THRESHOLD);
    Ok(DiagnosticsReport {
        num_chains: samples.num_chains(),
        draws_per_chain: samples.draws_per_chain(),
        max_rhat,
        min_ess,
        degenerate,
        passes,
        divergences: samples.stats.iter().map(|s| s.divergences).sum(),
        chains: samples.stats.clone(),
        params,
    })
}
