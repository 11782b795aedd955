//! PMI posterior for a new case.
//!
//! Work on `τ = log(1 + t)` with a normal prior truncated to a uniform grid.
//! For every coefficient draw the case likelihood is evaluated pointwise on
//! the grid, multiplied by the prior and normalised with the trapezoid rule;
//! the reported density is the average of these per-draw posteriors.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{log_sigmoid, normal_cdf, normal_log_pdf};
use crate::model::DecompositionModel;
use crate::parallel::map_indexed;
use crate::schema::CaseDesign;

/// Normal prior on `τ`. The defaults are the mean and sd of `log(1 + t)` over
/// the reference case collection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PmiPrior {
    pub mean: f64,
    pub sd: f64,
}

impl Default for PmiPrior {
    fn default() -> Self {
        Self { mean: 2.33, sd: 1.53 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridConfig {
    pub points: usize,
    /// Upper grid end in prior standard deviations above the prior mean.
    pub upper_sds: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            points: 1001,
            upper_sds: 5.0,
        }
    }
}

/// Uniform `τ` grid with the log prior evaluated on it.
#[derive(Debug, Clone, PartialEq)]
pub struct TauGrid {
    pub prior: PmiPrior,
    pub tau: Vec<f64>,
    pub log_prior: Vec<f64>,
}

impl TauGrid {
    pub fn new(prior: PmiPrior, config: GridConfig) -> Result<Self> {
        if !(prior.sd > 0.0) || !prior.mean.is_finite() {
            return Err(Error::invalid("PMI prior needs a finite mean and positive sd"));
        }
        if config.points < 3 || !(config.upper_sds > 0.0) {
            return Err(Error::invalid("grid needs at least 3 points and a positive extent"));
        }
        let upper = prior.mean + config.upper_sds * prior.sd;
        if !(upper > 0.0) {
            return Err(Error::invalid("grid upper end must be positive"));
        }
        let h = upper / (config.points - 1) as f64;
        let tau: Vec<f64> = (0..config.points).map(|i| i as f64 * h).collect();
        let log_prior: Vec<f64> = tau.iter().map(|&t| normal_log_pdf(t, prior.mean, prior.sd)).collect();
        let grid = Self { prior, tau, log_prior };

        // the grid has to resolve the prior mass it covers
        let numeric = trapezoid(&grid.tau, &grid.log_prior.iter().map(|v| v.exp()).collect::<Vec<_>>());
        let exact = normal_cdf(upper, prior.mean, prior.sd) - normal_cdf(0.0, prior.mean, prior.sd);
        if ((numeric - exact) / exact).abs() > 1e-6 {
            return Err(Error::Numerical(format!(
                "grid too coarse: prior mass {numeric} vs analytic {exact}"
            )));
        }
        Ok(grid)
    }

    pub fn len(&self) -> usize {
        self.tau.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tau.is_empty()
    }

    pub fn step(&self) -> f64 {
        self.tau[1] - self.tau[0]
    }

    /// Prior density normalised on the grid.
    pub fn prior_posterior(&self) -> PmiPosterior {
        let e: Vec<f64> = self.log_prior.iter().map(|v| v.exp()).collect();
        let z = trapezoid(&self.tau, &e);
        PmiPosterior::from_density(self.tau.clone(), e.iter().map(|v| v / z).collect())
    }
}

pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xs, ys)| 0.5 * (xs[1] - xs[0]) * (ys[0] + ys[1]))
        .sum()
}

/// Normalised density of `τ` on a grid with its trapezoid CDF.
#[derive(Debug, Clone, PartialEq)]
pub struct PmiPosterior {
    pub tau: Vec<f64>,
    pub density: Vec<f64>,
    cdf: Vec<f64>,
}

impl PmiPosterior {
    /// Build from a density that already integrates to one (up to rounding;
    /// the CDF is rescaled so its last node is exactly one).
    pub fn from_density(tau: Vec<f64>, density: Vec<f64>) -> Self {
        let mut cdf = Vec::with_capacity(tau.len());
        let mut acc = 0.0;
        cdf.push(0.0);
        for i in 1..tau.len() {
            acc += 0.5 * (tau[i] - tau[i - 1]) * (density[i] + density[i - 1]);
            cdf.push(acc);
        }
        if acc > 0.0 {
            cdf.iter_mut().for_each(|c| *c /= acc);
        }
        Self { tau, density, cdf }
    }

    pub fn integral(&self) -> f64 {
        trapezoid(&self.tau, &self.density)
    }

    /// Exact inverse of the trapezoid CDF (the density is piecewise linear).
    pub fn quantile(&self, p: f64) -> f64 {
        let p = p.clamp(0.0, 1.0);
        let n = self.tau.len();
        let k = self.cdf.partition_point(|&c| c < p).clamp(1, n - 1) - 1;
        let scale = self.cdf_scale();
        let h = self.tau[k + 1] - self.tau[k];
        // mass needed within the segment, in density units
        let r = ((p - self.cdf[k]) * scale).max(0.0);
        let b = self.density[k];
        let a = (self.density[k + 1] - self.density[k]) / (2.0 * h);
        let disc = (b * b + 4.0 * a * r).max(0.0);
        let denom = b + disc.sqrt();
        let s = if denom > 0.0 { 2.0 * r / denom } else { 0.0 };
        self.tau[k] + s.clamp(0.0, h)
    }

    fn cdf_scale(&self) -> f64 {
        let raw = self.integral();
        if raw > 0.0 {
            raw
        } else {
            1.0
        }
    }

    pub fn median_tau(&self) -> f64 {
        self.quantile(0.5)
    }

    pub fn mean_tau(&self) -> f64 {
        let f: Vec<f64> = self.tau.iter().zip(&self.density).map(|(t, d)| t * d).collect();
        trapezoid(&self.tau, &f) / self.cdf_scale()
    }

    /// Posterior mean of `t = e^τ - 1` in days.
    pub fn mean_days(&self) -> f64 {
        let f: Vec<f64> = self.tau.iter().zip(&self.density).map(|(t, d)| t.exp_m1() * d).collect();
        trapezoid(&self.tau, &f) / self.cdf_scale()
    }

    /// Differential entropy of `τ` (trapezoid rule).
    pub fn entropy(&self) -> f64 {
        let f: Vec<f64> = self
            .density
            .iter()
            .map(|&d| if d > 0.0 { -d * d.ln() } else { 0.0 })
            .collect();
        trapezoid(&self.tau, &f)
    }

    /// Equal-tailed interval holding `mass` of the posterior.
    pub fn interval(&self, mass: f64) -> Interval {
        let mass = mass.clamp(0.0, 1.0);
        let lower_tau = self.quantile(0.5 * (1.0 - mass));
        let upper_tau = self.quantile(0.5 * (1.0 + mass));
        Interval {
            mass,
            lower_tau,
            upper_tau,
            lower_days: lower_tau.exp_m1(),
            upper_days: upper_tau.exp_m1(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub mass: f64,
    pub lower_tau: f64,
    pub upper_tau: f64,
    pub lower_days: f64,
    pub upper_days: f64,
}

impl Interval {
    pub fn contains_tau(&self, tau: f64) -> bool {
        self.lower_tau <= tau && tau <= self.upper_tau
    }
}

/// Point prediction (posterior mean of `t`) and one equal-tailed interval.
pub fn summarize(posterior: &PmiPosterior, mass: f64) -> (f64, Interval) {
    (posterior.mean_days(), posterior.interval(mass))
}

/// JSON payload shared by the CLI and the HTTP service.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PmiReport {
    pub tau_grid: Vec<f64>,
    pub density: Vec<f64>,
    pub mean_days: f64,
    pub mean_tau: f64,
    pub median_tau: f64,
    pub median_days: f64,
    pub intervals: Vec<Interval>,
    pub num_draws: usize,
    pub num_observed: usize,
}

impl PmiReport {
    pub fn new(posterior: &PmiPosterior, masses: &[f64], num_draws: usize, num_observed: usize) -> Self {
        let median_tau = posterior.median_tau();
        Self {
            tau_grid: posterior.tau.clone(),
            density: posterior.density.clone(),
            mean_days: posterior.mean_days(),
            mean_tau: posterior.mean_tau(),
            median_tau,
            median_days: median_tau.exp_m1(),
            intervals: masses.iter().map(|&m| posterior.interval(m)).collect(),
            num_draws,
            num_observed,
        }
    }
}

/// Fixed number of draw chunks, so results do not depend on thread count.
const DRAW_CHUNKS: usize = 8;

/// Evaluates PMI posteriors for batches of cases against a set of draws.
pub struct PmiEngine<'a> {
    model: &'a DecompositionModel,
    draws: Vec<&'a [f64]>,
    grid: TauGrid,
}

impl<'a> PmiEngine<'a> {
    pub fn new(model: &'a DecompositionModel, draws: Vec<&'a [f64]>, grid: TauGrid) -> Result<Self> {
        if draws.is_empty() {
            return Err(Error::invalid("PMI inference needs at least one coefficient draw"));
        }
        if draws.iter().any(|d| d.len() != model.dim()) {
            return Err(Error::invalid("coefficient draws do not match the model layout"));
        }
        Ok(Self { model, draws, grid })
    }

    pub fn grid(&self) -> &TauGrid {
        &self.grid
    }

    pub fn num_draws(&self) -> usize {
        self.draws.len()
    }

    pub fn posterior(&self, case: &CaseDesign) -> Result<PmiPosterior> {
        Ok(self.posteriors(std::slice::from_ref(case))?.remove(0))
    }

    /// Posteriors for many cases. Cases sharing a covariate pattern reuse
    /// the per-draw log-sigmoid tables.
    pub fn posteriors(&self, cases: &[CaseDesign]) -> Result<Vec<PmiPosterior>> {
        let nd = self.model.layout.num_characteristics();
        for case in cases {
            if case.levels.len() != self.model.layout.num_covariates() || case.observations.len() != nd {
                return Err(Error::invalid("case does not match the model schema"));
            }
        }
        let mut groups: BTreeMap<&[usize], Vec<usize>> = BTreeMap::new();
        for (i, c) in cases.iter().enumerate() {
            groups.entry(c.levels.as_slice()).or_default().push(i);
        }
        let mut out: Vec<Option<PmiPosterior>> = vec![None; cases.len()];
        for (levels, members) in groups {
            let group: Vec<&CaseDesign> = members.iter().map(|&i| &cases[i]).collect();
            let dens = self.group_densities(levels, &group)?;
            for (i, d) in members.into_iter().zip(dens) {
                out[i] = Some(PmiPosterior::from_density(self.grid.tau.clone(), d));
            }
        }
        Ok(out.into_iter().map(|p| p.expect("every case assigned")).collect())
    }

    fn group_densities(&self, levels: &[usize], group: &[&CaseDesign]) -> Result<Vec<Vec<f64>>> {
        let g = self.grid.len();
        let nd = self.model.layout.num_characteristics();
        let used: Vec<usize> = (0..nd)
            .filter(|&d| group.iter().any(|c| c.observations[d].is_some()))
            .collect();
        // slot of each characteristic within the tables
        let mut slot = vec![usize::MAX; nd];
        for (j, &d) in used.iter().enumerate() {
            slot[d] = j;
        }
        let n_draws = self.draws.len();
        let n_chunks = DRAW_CHUNKS.min(n_draws);
        let tau = &self.grid.tau;
        let log_prior = &self.grid.log_prior;
        let partials = map_indexed(self.model.execution, n_chunks, |ci| -> Result<Vec<Vec<f64>>> {
            let lo = ci * n_draws / n_chunks;
            let hi = (ci + 1) * n_draws / n_chunks;
            let mut acc = vec![vec![0.0; g]; group.len()];
            let mut ls_pos = vec![0.0; used.len() * g];
            let mut eta = vec![0.0; used.len() * g];
            let mut w = vec![0.0; g];
            for params in &self.draws[lo..hi] {
                for (j, &d) in used.iter().enumerate() {
                    let gamma = params[self.model.layout.gamma_index(d)];
                    let rate = self.model.total_rate(params, levels, d);
                    for k in 0..g {
                        let e = gamma + tau[k] * rate;
                        eta[j * g + k] = e;
                        ls_pos[j * g + k] = log_sigmoid(e);
                    }
                }
                for (case, a) in group.iter().zip(acc.iter_mut()) {
                    w.copy_from_slice(log_prior);
                    for (d, o) in case.observations.iter().enumerate() {
                        let Some(y) = *o else { continue };
                        let row = slot[d] * g;
                        let lp = &ls_pos[row..row + g];
                        let et = &eta[row..row + g];
                        // log σ(-η) = log σ(η) - η
                        for k in 0..g {
                            w[k] += lp[k] - (1.0 - y) * et[k];
                        }
                    }
                    let m = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    if !m.is_finite() {
                        return Err(Error::Numerical("non-finite case likelihood on the PMI grid".into()));
                    }
                    w.iter_mut().for_each(|v| *v = (*v - m).exp());
                    let z = trapezoid(tau, &w);
                    if !(z > 0.0) || !z.is_finite() {
                        return Err(Error::Numerical("PMI posterior could not be normalised".into()));
                    }
                    for k in 0..g {
                        a[k] += w[k] / z;
                    }
                }
            }
            Ok(acc)
        });
        let mut total = vec![vec![0.0; g]; group.len()];
        for part in partials {
            for (t, p) in total.iter_mut().zip(part?) {
                for (x, y) in t.iter_mut().zip(p) {
                    *x += y;
                }
            }
        }
        let nf = n_draws as f64;
        for t in &mut total {
            t.iter_mut().for_each(|v| *v /= nf);
            check_resolution(tau, t)?;
        }
        Ok(total)
    }
}

/// A single grid cell holding most of the mass means the grid cannot
/// resolve the posterior.
fn check_resolution(tau: &[f64], density: &[f64]) -> Result<()> {
    let max_cell = tau
        .windows(2)
        .zip(density.windows(2))
        .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
        .fold(0.0, f64::max);
    if max_cell > 0.5 {
        return Err(Error::Numerical(format!(
            "grid too coarse: one cell holds {max_cell:.3} of the posterior mass"
        )));
    }
    Ok(())
}
