//! Independent oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use decomp_core::sampler::PosteriorSamples;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Trapezoid rule on a uniform grid.
pub fn trapezoid(h: f64, ys: &[f64]) -> f64 {
    if ys.len() < 2 {
        return 0.0;
    }
    h * (ys.iter().sum::<f64>() - 0.5 * (ys[0] + ys[ys.len() - 1]))
}

fn ln_choose(n: u32, k: u32) -> f64 {
    (1..=k).map(|i| ((n - k + i) as f64 / i as f64).ln()).sum()
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Mutual information between `θ` and `Y ~ Binomial(n, σ(γ))` when
/// `(θ, γ)` is bivariate normal. Plain quadrature over both coordinates.
pub fn binomial_logistic_mi(n: u32, mean_theta: f64, sd_theta: f64, mean_gamma: f64, sd_gamma: f64, rho: f64) -> f64 {
    let nt = 801;
    let ng = 2001;
    let ht = 16.0 * sd_theta / (nt - 1) as f64;
    let cond_sd = sd_gamma * (1.0 - rho * rho).sqrt();
    let hg = 20.0 * cond_sd / (ng - 1) as f64;
    let mut marginal = vec![0.0; n as usize + 1];
    let mut cond_entropy_terms = Vec::with_capacity(nt);
    for i in 0..nt {
        let t = mean_theta - 8.0 * sd_theta + ht * i as f64;
        let wt = (-0.5 * ((t - mean_theta) / sd_theta).powi(2)).exp() / (sd_theta * (2.0 * std::f64::consts::PI).sqrt());
        let m = mean_gamma + rho * sd_gamma / sd_theta * (t - mean_theta);
        let mut py = vec![0.0; n as usize + 1];
        for (y, p) in py.iter_mut().enumerate() {
            let vals: Vec<f64> = (0..ng)
                .map(|j| {
                    let g = m - 10.0 * cond_sd + hg * j as f64;
                    let wg = (-0.5 * ((g - m) / cond_sd).powi(2)).exp() / (cond_sd * (2.0 * std::f64::consts::PI).sqrt());
                    let q = logistic(g);
                    let y = y as u32;
                    let lp = ln_choose(n, y) + y as f64 * q.ln() + (n - y) as f64 * (1.0 - q).ln();
                    wg * lp.exp()
                })
                .collect();
            *p = trapezoid(hg, &vals);
        }
        let h: f64 = py.iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum();
        cond_entropy_terms.push(wt * h);
        for (a, p) in marginal.iter_mut().zip(&py) {
            *a += p * wt;
        }
    }
    // plain Riemann sum; the grid ends carry negligible weight
    let marginal: Vec<f64> = marginal.iter().map(|m| m * ht).collect();
    let neg_cond_entropy = trapezoid(ht, &cond_entropy_terms);
    let marg_entropy: f64 = marginal.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.ln()).sum();
    neg_cond_entropy + marg_entropy
}

/// Draws whose coordinates `i` and `j` are bivariate normal and every other
/// coordinate is fixed at `base`.
pub fn bivariate_samples(
    names: Vec<String>,
    base: &[f64],
    (i, j): (usize, usize),
    means: (f64, f64),
    sds: (f64, f64),
    rho: f64,
    count: usize,
    seed: u64,
) -> PosteriorSamples {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws: Vec<Vec<f64>> = (0..count)
        .map(|_| {
            let a: f64 = rng.sample(StandardNormal);
            let b: f64 = rng.sample(StandardNormal);
            let mut d = base.to_vec();
            d[i] = means.0 + sds.0 * a;
            d[j] = means.1 + sds.1 * (rho * a + (1.0 - rho * rho).sqrt() * b);
            d
        })
        .collect();
    PosteriorSamples {
        names,
        chains: vec![draws],
        stats: vec![Default::default()],
    }
}

/// Pair-counting AUC: ties count one half.
pub fn auc_pairs(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for (si, &li) in scores.iter().zip(labels) {
        if !li {
            continue;
        }
        for (sj, &lj) in scores.iter().zip(labels) {
            if lj {
                continue;
            }
            den += 1.0;
            if si > sj {
                num += 1.0;
            } else if si == sj {
                num += 0.5;
            }
        }
    }
    (den > 0.0).then(|| num / den)
}

pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v.sqrt())
}
