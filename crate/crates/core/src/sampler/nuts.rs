//! Multinomial No-U-Turn sampler with the generalised termination
//! criterion, run on whitened coordinates `u` (identity metric).

use rand::Rng;
use rand_distr::StandardNormal;

use super::metric::Metric;
use super::LogDensity;
use crate::math::LogSumExp;

const MAX_DELTA_H: f64 = 1000.0;

#[derive(Debug, Clone)]
pub(crate) struct Point {
    pub u: Vec<f64>,
    pub p: Vec<f64>,
    pub grad: Vec<f64>,
    pub logp: f64,
}

impl Point {
    fn hamiltonian(&self) -> f64 {
        -self.logp + 0.5 * dot(&self.p, &self.p)
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn add_assign(a: &mut [f64], b: &[f64]) {
    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
}

fn sum(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn criterion(p_minus: &[f64], p_plus: &[f64], rho: &[f64]) -> bool {
    dot(p_plus, rho) > 0.0 && dot(p_minus, rho) > 0.0
}

/// Log density expressed in whitened coordinates.
pub(crate) struct Whitened<'a, T: LogDensity + ?Sized> {
    pub target: &'a T,
    pub metric: &'a Metric,
    x: Vec<f64>,
    gx: Vec<f64>,
}

impl<'a, T: LogDensity + ?Sized> Whitened<'a, T> {
    pub fn new(target: &'a T, metric: &'a Metric) -> Self {
        let d = target.dim();
        Self {
            target,
            metric,
            x: vec![0.0; d],
            gx: vec![0.0; d],
        }
    }

    pub fn eval(&mut self, u: &[f64], grad_u: &mut [f64]) -> f64 {
        self.metric.to_x(u, &mut self.x);
        let lp = self.target.log_density_and_grad(&self.x, &mut self.gx);
        self.metric.grad_to_u(&self.gx, grad_u);
        if lp.is_nan() {
            f64::NEG_INFINITY
        } else {
            lp
        }
    }

    pub fn point(&mut self, u: Vec<f64>) -> Point {
        let mut grad = vec![0.0; u.len()];
        let logp = self.eval(&u, &mut grad);
        Point {
            p: vec![0.0; u.len()],
            u,
            grad,
            logp,
        }
    }

    pub fn x_of(&self, u: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; u.len()];
        self.metric.to_x(u, &mut x);
        x
    }

    fn leapfrog(&mut self, z: &mut Point, eps: f64) {
        for i in 0..z.p.len() {
            z.p[i] += 0.5 * eps * z.grad[i];
        }
        for i in 0..z.u.len() {
            z.u[i] += eps * z.p[i];
        }
        let mut grad = std::mem::take(&mut z.grad);
        z.logp = self.eval(&z.u, &mut grad);
        z.grad = grad;
        for i in 0..z.p.len() {
            z.p[i] += 0.5 * eps * z.grad[i];
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct TransitionInfo {
    pub accept_stat: f64,
    pub n_leapfrog: usize,
    pub depth: usize,
    pub divergent: bool,
}

fn sample_momentum<R: Rng>(rng: &mut R, p: &mut [f64]) {
    p.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
}

struct TreeCtx<'r, 'w, 'a, T: LogDensity + ?Sized, R: Rng> {
    w: &'w mut Whitened<'a, T>,
    rng: &'r mut R,
    eps: f64,
    h0: f64,
    n_leapfrog: usize,
    sum_metro: f64,
    divergent: bool,
}

struct Subtree {
    p_beg: Vec<f64>,
    p_end: Vec<f64>,
    rho: Vec<f64>,
    log_weight: f64,
    proposal: Point,
}

impl<'r, 'w, 'a, T: LogDensity + ?Sized, R: Rng> TreeCtx<'r, 'w, 'a, T, R> {
    /// Extend from `z` by `2^depth` leapfrog steps in direction `sign`.
    /// `z` ends at the outer edge. Returns `None` when the subtree is
    /// invalid (divergence or internal U-turn).
    fn build(&mut self, z: &mut Point, depth: usize, sign: f64) -> Option<Subtree> {
        if depth == 0 {
            self.w.leapfrog(z, sign * self.eps);
            self.n_leapfrog += 1;
            let mut h = z.hamiltonian();
            if h.is_nan() {
                h = f64::INFINITY;
            }
            if h - self.h0 > MAX_DELTA_H {
                self.divergent = true;
            }
            let lw = self.h0 - h;
            self.sum_metro += if lw > 0.0 { 1.0 } else { lw.exp() };
            if self.divergent {
                return None;
            }
            return Some(Subtree {
                p_beg: z.p.clone(),
                p_end: z.p.clone(),
                rho: z.p.clone(),
                log_weight: lw,
                proposal: z.clone(),
            });
        }
        let init = self.build(z, depth - 1, sign)?;
        let fin = self.build(z, depth - 1, sign)?;

        let mut acc = LogSumExp::default();
        acc.push(init.log_weight);
        acc.push(fin.log_weight);
        let lw_subtree = acc.value();
        let take_final = fin.log_weight > lw_subtree || self.rng.random::<f64>() < (fin.log_weight - lw_subtree).exp();
        let proposal = if take_final { fin.proposal } else { init.proposal };

        let rho = sum(&init.rho, &fin.rho);
        let mut ok = criterion(&init.p_beg, &fin.p_end, &rho);
        ok &= criterion(&init.p_beg, &fin.p_beg, &sum(&init.rho, &fin.p_beg));
        ok &= criterion(&init.p_end, &fin.p_end, &sum(&fin.rho, &init.p_end));
        if !ok {
            return None;
        }
        Some(Subtree {
            p_beg: init.p_beg,
            p_end: fin.p_end,
            rho,
            log_weight: lw_subtree,
            proposal,
        })
    }
}

/// One NUTS transition from `current`; returns the new point.
pub(crate) fn transition<T: LogDensity + ?Sized, R: Rng>(
    w: &mut Whitened<'_, T>,
    current: &Point,
    eps: f64,
    max_depth: usize,
    rng: &mut R,
) -> (Point, TransitionInfo) {
    let mut z0 = current.clone();
    sample_momentum(rng, &mut z0.p);
    let h0 = z0.hamiltonian();

    let mut z_fwd = z0.clone();
    let mut z_bck = z0.clone();
    let mut sample = z0.clone();

    // momenta at the four ends of the backward/forward halves
    let mut p_fwd_fwd = z0.p.clone();
    let mut p_fwd_bck = z0.p.clone();
    let mut p_bck_fwd = z0.p.clone();
    let mut p_bck_bck = z0.p.clone();
    let mut rho = z0.p.clone();
    let mut log_sum_weight = 0.0;

    let mut ctx = TreeCtx {
        w,
        rng,
        eps,
        h0,
        n_leapfrog: 0,
        sum_metro: 0.0,
        divergent: false,
    };
    let mut depth = 0;
    while depth < max_depth {
        let forward = ctx.rng.random::<f64>() > 0.5;
        let (rho_fwd, rho_bck, subtree) = if forward {
            let t = ctx.build(&mut z_fwd, depth, 1.0);
            p_bck_fwd = p_fwd_bck.clone();
            match t {
                Some(t) => {
                    p_fwd_bck = t.p_beg.clone();
                    p_fwd_fwd = t.p_end.clone();
                    (t.rho.clone(), rho.clone(), Some(t))
                }
                None => (Vec::new(), Vec::new(), None),
            }
        } else {
            let t = ctx.build(&mut z_bck, depth, -1.0);
            p_fwd_bck = p_bck_fwd.clone();
            match t {
                Some(t) => {
                    p_bck_fwd = t.p_beg.clone();
                    p_bck_bck = t.p_end.clone();
                    (rho.clone(), t.rho.clone(), Some(t))
                }
                None => (Vec::new(), Vec::new(), None),
            }
        };
        let Some(subtree) = subtree else { break };
        depth += 1;

        if subtree.log_weight > log_sum_weight
            || ctx.rng.random::<f64>() < (subtree.log_weight - log_sum_weight).exp()
        {
            sample = subtree.proposal;
        }
        let mut acc = LogSumExp::default();
        acc.push(log_sum_weight);
        acc.push(subtree.log_weight);
        log_sum_weight = acc.value();

        rho = sum(&rho_bck, &rho_fwd);
        let mut ok = criterion(&p_bck_bck, &p_fwd_fwd, &rho);
        let mut ext = rho_bck.clone();
        add_assign(&mut ext, &p_fwd_bck);
        ok &= criterion(&p_bck_bck, &p_fwd_bck, &ext);
        let mut ext = rho_fwd.clone();
        add_assign(&mut ext, &p_bck_fwd);
        ok &= criterion(&p_bck_fwd, &p_fwd_fwd, &ext);
        if !ok {
            break;
        }
    }
    let info = TransitionInfo {
        accept_stat: if ctx.n_leapfrog > 0 {
            ctx.sum_metro / ctx.n_leapfrog as f64
        } else {
            0.0
        },
        n_leapfrog: ctx.n_leapfrog,
        depth,
        divergent: ctx.divergent,
    };
    (sample, info)
}

/// Step-size heuristic: double or halve until the one-step acceptance
/// crosses 0.8.
pub(crate) fn find_reasonable_step<T: LogDensity + ?Sized, R: Rng>(
    w: &mut Whitened<'_, T>,
    current: &Point,
    eps0: f64,
    rng: &mut R,
) -> Option<f64> {
    let mut eps = eps0;
    let threshold = 0.8f64.ln();
    let step = |eps: f64, rng: &mut R, w: &mut Whitened<'_, T>| {
        let mut z = current.clone();
        sample_momentum(rng, &mut z.p);
        let h0 = z.hamiltonian();
        w.leapfrog(&mut z, eps);
        let h = z.hamiltonian();
        let d = h0 - h;
        if d.is_nan() {
            f64::NEG_INFINITY
        } else {
            d
        }
    };
    let direction = if step(eps, rng, w) > threshold { 1 } else { -1 };
    for _ in 0..100 {
        let d = step(eps, rng, w);
        if direction == 1 && d <= threshold {
            break;
        }
        if direction == -1 && d >= threshold {
            break;
        }
        eps = if direction == 1 { eps * 2.0 } else { eps * 0.5 };
        if !(1e-12..=1e7).contains(&eps) {
            return None;
        }
    }
    Some(eps)
}

/// Nesterov dual averaging of `log ε` towards a target acceptance rate.
#[derive(Debug, Clone)]
pub(crate) struct DualAveraging {
    target: f64,
    mu: f64,
    counter: f64,
    s_bar: f64,
    x_bar: f64,
    gamma: f64,
    t0: f64,
    kappa: f64,
}

impl DualAveraging {
    pub fn new(target: f64, eps: f64) -> Self {
        Self {
            target,
            mu: (10.0 * eps).ln(),
            counter: 0.0,
            s_bar: 0.0,
            x_bar: 0.0,
            gamma: 0.05,
            t0: 10.0,
            kappa: 0.75,
        }
    }

    pub fn restart(&mut self, eps: f64) {
        *self = Self::new(self.target, eps);
    }

    /// Update with the latest acceptance statistic; returns the next ε.
    pub fn update(&mut self, accept: f64) -> f64 {
        let accept = accept.min(1.0);
        self.counter += 1.0;
        let eta = 1.0 / (self.counter + self.t0);
        self.s_bar = (1.0 - eta) * self.s_bar + eta * (self.target - accept);
        let x = self.mu - self.s_bar * self.counter.sqrt() / self.gamma;
        let x_eta = self.counter.powf(-self.kappa);
        self.x_bar = (1.0 - x_eta) * self.x_bar + x_eta * x;
        x.exp()
    }

    pub fn final_step(&self) -> f64 {
        self.x_bar.exp()
    }
}
