//! The single-chain Metropolis-within-Gibbs sweep.
//!
//! Sweep order: indicators, effect pairs, a joint indicator/effect-pair
//! refresh from the prior mixture, control parameters, residual SDs, then
//! the shared hyperparameters (β, φ, ρ, κ). Hyperparameters that no
//! subtrial currently links to have their prior as full conditional and are
//! redrawn from it directly. Two auxiliary moves help the shared location
//! and scale mix: a translation that shifts βᵈ together with the linked θᵈ,
//! and a rescaling of φᵈ together with the linked deviations θᵈ − βᵈ.

use super::{ChainDraws, McmcConfig, ScaleRecord};
use crate::datagen::TrialData;
use crate::error::{Error, Result};
use crate::models::{
    component_ln_density, component_params, hyperprior_ln_density, indicator_full_conditional, Component, ModelSpec,
    ParamState, TrialStats,
};
use crate::stats::rng::tag;
use crate::stats::special::{
    ln_pdf_sd_from_halfnormal_variance as ln_pdf_sd, logit, normal_ln_pdf, std_normal_quantile,
};
use crate::stats::{sample_bivariate_normal, sample_half_normal, RngStream};

/// How a sweep refreshes the mixture indicator of one subtrial.
pub trait IndicatorUpdate: Sync {
    fn update(&self, state: &ParamState, spec: &ModelSpec, k: usize, rng: &mut RngStream) -> Component;

    /// Whether sweeps also include the joint (Z, θ) move that redraws both
    /// from the prior mixture and accepts on the likelihood ratio.
    fn prior_refresh(&self) -> bool {
        true
    }
}

/// Exact draw from the four-way full conditional.
#[derive(Clone, Copy, Debug, Default)]
pub struct JointIndicatorGibbs;

impl IndicatorUpdate for JointIndicatorGibbs {
    fn update(&self, state: &ParamState, spec: &ModelSpec, k: usize, rng: &mut RngStream) -> Component {
        let p = indicator_full_conditional(state, spec, k);
        Component::from_index(rng.categorical(&p))
    }
}

const LOG_SCALE_BOUNDS: (f64, f64) = (-12.0, 6.0);

/// Block index layout for `k` subtrials.
#[derive(Clone, Copy)]
struct Layout {
    k: usize,
}

impl Layout {
    fn theta(self, i: usize) -> usize {
        i
    }
    fn alpha_t(self, i: usize) -> usize {
        self.k + i
    }
    fn alpha_e(self, i: usize) -> usize {
        2 * self.k + i
    }
    fn log_sigma(self, i: usize, j: usize) -> usize {
        3 * self.k + 2 * i + j
    }
    fn beta(self) -> usize {
        5 * self.k
    }
    fn shift(self, d: usize) -> usize {
        5 * self.k + 1 + d
    }
    fn phi(self, d: usize) -> usize {
        5 * self.k + 3 + d
    }
    fn phi_scale(self, d: usize) -> usize {
        5 * self.k + 5 + d
    }
    fn rho(self) -> usize {
        5 * self.k + 7
    }
    fn kappa(self) -> usize {
        5 * self.k + 8
    }
    fn refresh(self, i: usize) -> usize {
        5 * self.k + 9 + i
    }
    fn len(self) -> usize {
        6 * self.k + 9
    }
}

pub(crate) fn block_names(k: usize) -> Vec<String> {
    let mut names = Vec::with_capacity(Layout { k }.len());
    names.extend((1..=k).map(|i| format!("theta[{i}]")));
    names.extend((1..=k).map(|i| format!("alpha_t[{i}]")));
    names.extend((1..=k).map(|i| format!("alpha_e[{i}]")));
    for i in 1..=k {
        names.push(format!("log_sigma_c[{i}]"));
        names.push(format!("log_sigma_e[{i}]"));
    }
    for n in [
        "beta", "shift1", "shift2", "log_phi1", "log_phi2", "scale1", "scale2", "rho", "kappa",
    ] {
        names.push(n.to_string());
    }
    names.extend((1..=k).map(|i| format!("refresh[{i}]")));
    names
}

#[derive(Clone, Debug)]
struct Block {
    base: f64,
    log_scale: f64,
    target: f64,
    win_acc: u32,
    win_prop: u32,
    acc: u64,
    prop: u64,
    adaptive: bool,
}

impl Block {
    fn new(base: f64, target: f64) -> Self {
        Block {
            base,
            log_scale: 0.0,
            target,
            win_acc: 0,
            win_prop: 0,
            acc: 0,
            prop: 0,
            adaptive: true,
        }
    }

    /// A block with no step size, tracked for its acceptance rate only.
    fn fixed() -> Self {
        Block {
            adaptive: false,
            ..Block::new(0.0, 0.0)
        }
    }

    #[inline]
    fn step(&self) -> f64 {
        self.base * self.log_scale.exp()
    }

    #[inline]
    fn record(&mut self, accepted: bool, retained_phase: bool) {
        if retained_phase {
            self.prop += 1;
            self.acc += u64::from(accepted);
        } else {
            self.win_prop += 1;
            self.win_acc += u32::from(accepted);
        }
    }
}

/// Cholesky factor of a subtrial's θ proposal covariance plus the running
/// burn-in moments it is re-estimated from.
#[derive(Clone, Debug)]
struct Shape {
    l11: f64,
    l21: f64,
    l22: f64,
    n: f64,
    mean: [f64; 2],
    m2: [f64; 3],
}

impl Shape {
    fn diagonal(sd_t: f64, sd_e: f64) -> Self {
        Shape {
            l11: sd_t,
            l21: 0.0,
            l22: sd_e,
            n: 0.0,
            mean: [0.0; 2],
            m2: [0.0; 3],
        }
    }

    fn observe(&mut self, x: [f64; 2]) {
        self.n += 1.0;
        let d0 = x[0] - self.mean[0];
        let d1 = x[1] - self.mean[1];
        self.mean[0] += d0 / self.n;
        self.mean[1] += d1 / self.n;
        let e0 = x[0] - self.mean[0];
        let e1 = x[1] - self.mean[1];
        self.m2[0] += d0 * e0;
        self.m2[1] += d0 * e1;
        self.m2[2] += d1 * e1;
    }

    /// Replace the factor with that of (2.38²/2)·Σ̂ once enough draws exist.
    fn refit(&mut self, min_draws: f64) {
        if self.n < min_draws {
            return;
        }
        let f = 2.38 * 2.38 / 2.0 / (self.n - 1.0);
        let eps = 1e-6;
        let a = self.m2[0] * f + eps;
        let b = self.m2[1] * f;
        let c = self.m2[2] * f + eps;
        let l11 = a.sqrt();
        let l21 = b / l11;
        let l22 = (c - l21 * l21).max(eps).sqrt();
        if l11.is_finite() && l21.is_finite() && l22.is_finite() {
            self.l11 = l11;
            self.l21 = l21;
            self.l22 = l22;
        }
    }
}

struct Sampler<'a> {
    stats: TrialStats,
    spec: &'a ModelSpec,
    cfg: &'a McmcConfig,
    indicators: &'a dyn IndicatorUpdate,
    s: ParamState,
    rng: RngStream,
    lay: Layout,
    blocks: Vec<Block>,
    shapes: Vec<Shape>,
    tox_ll: Vec<f64>,
    eff_ll: Vec<f64>,
    scratch: Vec<f64>,
    saved: Vec<f64>,
    retained_phase: bool,
}

/// Median of σ when σ² is half-normal with variance `var`.
fn halfnormal_variance_sd_median(var: f64) -> f64 {
    (var.sqrt() * std_normal_quantile(0.75)).sqrt()
}

fn initial_state(stats: &TrialStats, spec: &ModelSpec, cfg: &McmcConfig, rng: &mut RngStream) -> ParamState {
    let k = stats.n_subtrials();
    let sigma_median = halfnormal_variance_sd_median(spec.prior.sigma_halfnormal_var);
    let mut s = ParamState {
        alpha_t: vec![0.0; k],
        alpha_e: vec![0.0; k],
        theta_t: vec![0.0; k],
        theta_e: vec![0.0; k],
        sigma: vec![[sigma_median; 2]; k],
        beta: [0.0, 0.0],
        phi: [halfnormal_variance_sd_median(spec.prior.phi_halfnormal_var); 2],
        rho: spec.fixed_rho.unwrap_or(0.0),
        kappa: spec.fixed_kappa.unwrap_or(0.0),
        z: Vec::with_capacity(k),
    };
    for i in 0..k {
        let [c, e] = stats.arms[i];
        let base_t = if c.n > 0 {
            let (y, n) = (f64::from(c.tox), f64::from(c.n));
            let p = if c.tox == 0 || c.tox == c.n { (y + 0.5) / (n + 1.0) } else { y / n };
            logit(p).unwrap_or(0.0)
        } else {
            0.0
        };
        s.alpha_t[i] = base_t + 0.1 * rng.std_normal();
        let base_e = if c.eff_n > 0 {
            c.eff_mean
        } else if e.eff_n > 0 {
            e.eff_mean
        } else {
            0.0
        };
        s.alpha_e[i] = base_e + 0.1 * rng.std_normal();
        for (j, a) in [c, e].iter().enumerate() {
            s.sigma[i][j] = match cfg.fix_sigma {
                Some(v) => v,
                None if a.eff_n >= 2 => (a.eff_ss / f64::from(a.eff_n - 1)).sqrt().max(1e-3),
                None => sigma_median,
            };
        }
        s.z.push(Component::from_index(rng.categorical(&spec.weights[i])));
    }
    s
}

impl<'a> Sampler<'a> {
    fn new(
        data: &TrialData,
        spec: &'a ModelSpec,
        cfg: &'a McmcConfig,
        chain: usize,
        indicators: &'a dyn IndicatorUpdate,
    ) -> Result<Self> {
        if data.n_subtrials() != spec.n_subtrials() {
            return Err(Error::contract(format!(
                "data has {} subtrials but the model has {}",
                data.n_subtrials(),
                spec.n_subtrials()
            )));
        }
        data.validate()?;
        spec.validate()?;
        let stats = TrialStats::new(data);
        let mut rng = RngStream::for_path(cfg.seed, &[tag::CHAIN, chain as u64]);
        let s = initial_state(&stats, spec, cfg, &mut rng);
        let k = spec.n_subtrials();
        let lay = Layout { k };
        let (ts, tb) = (cfg.target_accept_scalar, cfg.target_accept_block);
        let mut blocks = vec![Block::new(0.5, ts); lay.len()];
        let mut shapes = Vec::with_capacity(k);
        for i in 0..k {
            let [c, e] = stats.arms[i];
            let info = |n: u32| if n > 0 { 1.0 / (0.2 * f64::from(n)) } else { f64::INFINITY };
            let var_t = (info(c.n) + info(e.n)).min(4.0);
            let eff_var = |a: &crate::models::ArmStats, sd: f64| {
                if a.eff_n > 0 { sd * sd / f64::from(a.eff_n) } else { f64::INFINITY }
            };
            let var_e = (eff_var(&c, s.sigma[i][0]) + eff_var(&e, s.sigma[i][1])).min(4.0);
            shapes.push(Shape::diagonal(var_t.sqrt(), var_e.sqrt()));
            blocks[lay.theta(i)] = Block::new(1.0, tb);
            blocks[lay.alpha_t(i)] = Block::new(info(c.n).min(4.0).sqrt(), ts);
            blocks[lay.alpha_e(i)] = Block::new(eff_var(&c, s.sigma[i][0]).min(4.0).sqrt(), ts);
            for (j, a) in [c, e].iter().enumerate() {
                let b = if a.eff_n > 0 { (0.5 / f64::from(a.eff_n)).sqrt() } else { 1.0 };
                blocks[lay.log_sigma(i, j)] = Block::new(b.min(1.0), ts);
            }
        }
        blocks[lay.beta()] = Block::new(0.5, tb);
        for i in 0..k {
            blocks[lay.refresh(i)] = Block::fixed();
        }
        let tox_ll = (0..k).map(|i| stats.tox_kernel(i, s.alpha_t[i], s.theta_t[i])).collect();
        let eff_ll = (0..k)
            .map(|i| stats.eff_ln_lik(i, s.alpha_e[i], s.theta_e[i], s.sigma[i]))
            .collect();
        let sampler = Sampler {
            stats,
            spec,
            cfg,
            indicators,
            s,
            rng,
            lay,
            blocks,
            shapes,
            tox_ll,
            eff_ll,
            scratch: vec![0.0; k],
            saved: vec![0.0; k],
            retained_phase: false,
        };
        let lp = sampler.log_posterior();
        if !lp.is_finite() {
            return Err(Error::Initialisation {
                chain,
                detail: format!("log-posterior = {lp}"),
            });
        }
        Ok(sampler)
    }

    fn log_posterior(&self) -> f64 {
        let mut lp = self.stats.log_likelihood(&self.s) + hyperprior_ln_density(&self.s, self.spec);
        for k in 0..self.s.n_subtrials() {
            lp += self.spec.weights[k][self.s.z[k].index()].ln() + self.comp(k);
        }
        lp
    }

    #[inline]
    fn accept(&mut self, delta: f64) -> bool {
        self.rng.uniform_open().ln() < delta
    }

    #[inline]
    fn comp_at(&self, k: usize, theta: [f64; 2]) -> f64 {
        component_ln_density(self.s.z[k], theta, &self.s, self.spec, k)
    }

    #[inline]
    fn comp(&self, k: usize) -> f64 {
        self.comp_at(k, [self.s.theta_t[k], self.s.theta_e[k]])
    }

    fn comp_sum(&self, linked: impl Fn(Component) -> bool) -> f64 {
        (0..self.s.n_subtrials())
            .filter(|&k| linked(self.s.z[k]))
            .map(|k| self.comp(k))
            .sum()
    }

    #[inline]
    fn theta_d(&self, k: usize, d: usize) -> f64 {
        if d == 0 {
            self.s.theta_t[k]
        } else {
            self.s.theta_e[k]
        }
    }

    #[inline]
    fn set_theta_d(&mut self, k: usize, d: usize, v: f64) {
        if d == 0 {
            self.s.theta_t[k] = v;
        } else {
            self.s.theta_e[k] = v;
        }
    }

    /// Likelihood of subtrial `k` along coordinate `d` at θᵈ = v.
    #[inline]
    fn lik_d(&self, k: usize, d: usize, v: f64) -> f64 {
        if d == 0 {
            self.stats.tox_kernel(k, self.s.alpha_t[k], v)
        } else {
            self.stats.eff_ln_lik(k, self.s.alpha_e[k], v, self.s.sigma[k])
        }
    }

    #[inline]
    fn cached_lik_d(&self, k: usize, d: usize) -> f64 {
        if d == 0 {
            self.tox_ll[k]
        } else {
            self.eff_ll[k]
        }
    }

    #[inline]
    fn set_cached_lik_d(&mut self, k: usize, d: usize, v: f64) {
        if d == 0 {
            self.tox_ll[k] = v;
        } else {
            self.eff_ll[k] = v;
        }
    }

    fn record(&mut self, block: usize, accepted: bool) {
        let phase = self.retained_phase;
        self.blocks[block].record(accepted, phase);
    }

    fn sweep(&mut self) {
        let k = self.s.n_subtrials();
        for i in 0..k {
            let z = self.indicators.update(&self.s, self.spec, i, &mut self.rng);
            self.s.z[i] = z;
        }
        for i in 0..k {
            self.update_theta(i);
        }
        if self.indicators.prior_refresh() {
            for i in 0..k {
                self.refresh(i);
            }
        }
        for i in 0..k {
            self.update_alpha(i);
        }
        if self.cfg.fix_sigma.is_none() {
            for i in 0..k {
                for j in 0..2 {
                    self.update_sigma(i, j);
                }
            }
        }
        self.update_hyperparameters();
    }

    fn update_theta(&mut self, k: usize) {
        let b = self.lay.theta(k);
        let step = self.blocks[b].step();
        let (e1, e2) = (self.rng.std_normal(), self.rng.std_normal());
        let sh = &self.shapes[k];
        let cur = [self.s.theta_t[k], self.s.theta_e[k]];
        let prop = [
            cur[0] + step * sh.l11 * e1,
            cur[1] + step * (sh.l21 * e1 + sh.l22 * e2),
        ];
        let tox = self.stats.tox_kernel(k, self.s.alpha_t[k], prop[0]);
        let eff = self.stats.eff_ln_lik(k, self.s.alpha_e[k], prop[1], self.s.sigma[k]);
        let delta = tox + eff + self.comp_at(k, prop) - self.tox_ll[k] - self.eff_ll[k] - self.comp_at(k, cur);
        let ok = self.accept(delta);
        if ok {
            self.s.theta_t[k] = prop[0];
            self.s.theta_e[k] = prop[1];
            self.tox_ll[k] = tox;
            self.eff_ll[k] = eff;
        }
        self.record(b, ok);
        if !self.retained_phase {
            self.shapes[k].observe([self.s.theta_t[k], self.s.theta_e[k]]);
        }
    }

    /// Independence proposal (Z', θ') from the prior mixture. The prior terms
    /// cancel against the proposal density, leaving the likelihood ratio.
    fn refresh(&mut self, k: usize) {
        let b = self.lay.refresh(k);
        let c = Component::from_index(self.rng.categorical(&self.spec.weights[k]));
        let params = component_params(c, &self.s, self.spec, k);
        let prop = sample_bivariate_normal(&params, &mut self.rng);
        let tox = self.stats.tox_kernel(k, self.s.alpha_t[k], prop[0]);
        let eff = self.stats.eff_ln_lik(k, self.s.alpha_e[k], prop[1], self.s.sigma[k]);
        let ok = self.accept(tox + eff - self.tox_ll[k] - self.eff_ll[k]);
        if ok {
            self.s.z[k] = c;
            self.s.theta_t[k] = prop[0];
            self.s.theta_e[k] = prop[1];
            self.tox_ll[k] = tox;
            self.eff_ll[k] = eff;
        }
        self.record(b, ok);
    }

    fn update_alpha(&mut self, k: usize) {
        let sd = self.spec.prior.alpha_sd;
        let b = self.lay.alpha_t(k);
        let cur = self.s.alpha_t[k];
        let prop = cur + self.blocks[b].step() * self.rng.std_normal();
        let ll = self.stats.tox_kernel(k, prop, self.s.theta_t[k]);
        let delta = ll - self.tox_ll[k] + normal_ln_pdf(prop, 0.0, sd) - normal_ln_pdf(cur, 0.0, sd);
        let ok = self.accept(delta);
        if ok {
            self.s.alpha_t[k] = prop;
            self.tox_ll[k] = ll;
        }
        self.record(b, ok);

        let b = self.lay.alpha_e(k);
        let cur = self.s.alpha_e[k];
        let prop = cur + self.blocks[b].step() * self.rng.std_normal();
        let ll = self.stats.eff_ln_lik(k, prop, self.s.theta_e[k], self.s.sigma[k]);
        let delta = ll - self.eff_ll[k] + normal_ln_pdf(prop, 0.0, sd) - normal_ln_pdf(cur, 0.0, sd);
        let ok = self.accept(delta);
        if ok {
            self.s.alpha_e[k] = prop;
            self.eff_ll[k] = ll;
        }
        self.record(b, ok);
    }

    fn update_sigma(&mut self, k: usize, j: usize) {
        let var = self.spec.prior.sigma_halfnormal_var;
        let b = self.lay.log_sigma(k, j);
        let cur = self.s.sigma[k][j];
        let u = cur.ln();
        let u_new = u + self.blocks[b].step() * self.rng.std_normal();
        let prop = u_new.exp();
        let mut sig = self.s.sigma[k];
        sig[j] = prop;
        let ll = self.stats.eff_ln_lik(k, self.s.alpha_e[k], self.s.theta_e[k], sig);
        let delta = ll - self.eff_ll[k] + ln_pdf_sd(prop, var) - ln_pdf_sd(cur, var) + (u_new - u);
        let ok = prop > 0.0 && self.accept(delta);
        if ok {
            self.s.sigma[k] = sig;
            self.eff_ll[k] = ll;
        }
        self.record(b, ok);
    }

    fn update_hyperparameters(&mut self) {
        let pr = &self.spec.prior;
        let (beta_sd, phi_var) = (pr.beta_sd, pr.phi_halfnormal_var);
        let linked = [
            self.s.z.iter().any(|c| c.tox_exchangeable()),
            self.s.z.iter().any(|c| c.eff_exchangeable()),
        ];
        let rho_free = self.spec.fixed_rho.is_none();
        let kappa_free = self.spec.fixed_kappa.is_none();
        let rho_linked = rho_free && self.s.z.contains(&Component::Both);
        let kappa_linked = kappa_free && self.s.z.contains(&Component::Neither);

        // Unlinked hyperparameters: exact draws from the prior.
        for d in 0..2 {
            if !linked[d] {
                self.s.beta[d] = beta_sd * self.rng.std_normal();
                self.s.phi[d] = sample_half_normal(phi_var, &mut self.rng)
                    .expect("validated prior variance")
                    .sqrt()
                    .max(f64::MIN_POSITIVE);
            }
        }
        if rho_free && !rho_linked {
            self.s.rho = 2.0 * self.rng.uniform_open() - 1.0;
        }
        if kappa_free && !kappa_linked {
            self.s.kappa = 2.0 * self.rng.uniform_open() - 1.0;
        }

        if linked[0] || linked[1] {
            self.update_beta_block(linked);
        }
        for d in 0..2 {
            if linked[d] {
                self.translate(d);
                self.update_phi(d);
                self.rescale(d);
            }
        }
        if rho_linked {
            self.update_corr(true);
        }
        if kappa_linked {
            self.update_corr(false);
        }
    }

    fn update_beta_block(&mut self, linked: [bool; 2]) {
        let sd = self.spec.prior.beta_sd;
        let b = self.lay.beta();
        let step = self.blocks[b].step();
        let cur = self.s.beta;
        let mut prop = cur;
        for d in 0..2 {
            if linked[d] {
                prop[d] += step * self.rng.std_normal();
            }
        }
        let touches = |c: Component| (linked[0] && c.tox_exchangeable()) || (linked[1] && c.eff_exchangeable());
        let old = self.comp_sum(touches);
        self.s.beta = prop;
        let new = self.comp_sum(touches);
        let prior: f64 = (0..2)
            .map(|d| normal_ln_pdf(prop[d], 0.0, sd) - normal_ln_pdf(cur[d], 0.0, sd))
            .sum();
        let ok = self.accept(new - old + prior);
        if !ok {
            self.s.beta = cur;
        }
        self.record(b, ok);
    }

    /// Shift βᵈ and every linked θᵈ by the same amount.
    fn translate(&mut self, d: usize) {
        let b = self.lay.shift(d);
        let shift = self.blocks[b].step() * self.rng.std_normal();
        let sd = self.spec.prior.beta_sd;
        let k = self.s.n_subtrials();
        let on = |c: Component| c.exchangeable(d);
        let old_comp = self.comp_sum(on);
        let mut delta = -old_comp;
        let beta_old = self.s.beta[d];
        self.s.beta[d] += shift;
        delta += normal_ln_pdf(self.s.beta[d], 0.0, sd) - normal_ln_pdf(beta_old, 0.0, sd);
        for i in 0..k {
            if on(self.s.z[i]) {
                let v = self.theta_d(i, d) + shift;
                self.set_theta_d(i, d, v);
                let ll = self.lik_d(i, d, v);
                delta += ll - self.cached_lik_d(i, d);
                self.scratch[i] = ll;
            }
        }
        delta += self.comp_sum(on);
        let ok = self.accept(delta);
        for i in 0..k {
            if on(self.s.z[i]) {
                if ok {
                    let ll = self.scratch[i];
                    self.set_cached_lik_d(i, d, ll);
                } else {
                    let v = self.theta_d(i, d) - shift;
                    self.set_theta_d(i, d, v);
                }
            }
        }
        if !ok {
            self.s.beta[d] = beta_old;
        }
        self.record(b, ok);
    }

    fn update_phi(&mut self, d: usize) {
        let var = self.spec.prior.phi_halfnormal_var;
        let b = self.lay.phi(d);
        let cur = self.s.phi[d];
        let u = cur.ln();
        let u_new = u + self.blocks[b].step() * self.rng.std_normal();
        let prop = u_new.exp();
        let on = |c: Component| c.exchangeable(d);
        let old = self.comp_sum(on);
        self.s.phi[d] = prop;
        let new = self.comp_sum(on);
        let delta = new - old + ln_pdf_sd(prop, var) - ln_pdf_sd(cur, var) + (u_new - u);
        let ok = prop > 0.0 && self.accept(delta);
        if !ok {
            self.s.phi[d] = cur;
        }
        self.record(b, ok);
    }

    /// Multiply φᵈ and every linked deviation θᵈ − βᵈ by the same factor.
    fn rescale(&mut self, d: usize) {
        let var = self.spec.prior.phi_halfnormal_var;
        let b = self.lay.phi_scale(d);
        let h = self.blocks[b].step() * self.rng.std_normal();
        let factor = h.exp();
        let k = self.s.n_subtrials();
        let on = |c: Component| c.exchangeable(d);
        let centre = self.s.beta[d];
        let phi_old = self.s.phi[d];
        let phi_new = phi_old * factor;
        let mut delta = -self.comp_sum(on);
        let mut n_linked = 0.0;
        for i in 0..k {
            let v_old = self.theta_d(i, d);
            self.saved[i] = v_old;
            if on(self.s.z[i]) {
                n_linked += 1.0;
                let v = centre + (v_old - centre) * factor;
                self.set_theta_d(i, d, v);
                let ll = self.lik_d(i, d, v);
                delta += ll - self.cached_lik_d(i, d);
                self.scratch[i] = ll;
            }
        }
        self.s.phi[d] = phi_new;
        delta += self.comp_sum(on);
        // Prior on ln φ plus the Jacobian of the linked deviations.
        delta += ln_pdf_sd(phi_new, var) - ln_pdf_sd(phi_old, var) + h + n_linked * h;
        let ok = phi_new > 0.0 && phi_new.is_finite() && self.accept(delta);
        for i in 0..k {
            if on(self.s.z[i]) {
                if ok {
                    let ll = self.scratch[i];
                    self.set_cached_lik_d(i, d, ll);
                } else {
                    let v = self.saved[i];
                    self.set_theta_d(i, d, v);
                }
            }
        }
        if !ok {
            self.s.phi[d] = phi_old;
        }
        self.record(b, ok);
    }

    /// Random walk on atanh(ρ) (`rho = true`) or atanh(κ).
    fn update_corr(&mut self, rho: bool) {
        let (b, comp): (usize, Component) = if rho {
            (self.lay.rho(), Component::Both)
        } else {
            (self.lay.kappa(), Component::Neither)
        };
        let cur = if rho { self.s.rho } else { self.s.kappa };
        let z_new = cur.atanh() + self.blocks[b].step() * self.rng.std_normal();
        let prop = z_new.tanh();
        if !(prop > -1.0 && prop < 1.0) {
            self.record(b, false);
            return;
        }
        let on = |c: Component| c == comp;
        let old = self.comp_sum(on);
        if rho {
            self.s.rho = prop;
        } else {
            self.s.kappa = prop;
        }
        let new = self.comp_sum(on);
        let jac = (1.0 - prop * prop).ln() - (1.0 - cur * cur).ln();
        let ok = self.accept(new - old + jac);
        if !ok {
            if rho {
                self.s.rho = cur;
            } else {
                self.s.kappa = cur;
            }
        }
        self.record(b, ok);
    }

    /// Robbins–Monro step on every block's log scale at the end of a window.
    fn adapt(&mut self, iteration: usize, window_index: usize, history: &mut Vec<ScaleRecord>) {
        let gain = 1.0 / (window_index as f64).sqrt();
        for (i, b) in self.blocks.iter_mut().enumerate() {
            if b.adaptive && b.win_prop > 0 {
                let rate = f64::from(b.win_acc) / f64::from(b.win_prop);
                b.log_scale = (b.log_scale + gain * (rate - b.target))
                    .clamp(LOG_SCALE_BOUNDS.0, LOG_SCALE_BOUNDS.1);
                history.push(ScaleRecord {
                    iteration,
                    block: i,
                    log_scale: b.log_scale,
                });
            }
            b.win_acc = 0;
            b.win_prop = 0;
        }
        let min_draws = (2 * self.cfg.adapt_window).max(100) as f64;
        for sh in &mut self.shapes {
            sh.refit(min_draws);
        }
    }
}

/// Run one chain; `chain` selects the random stream.
pub fn run_chain(data: &TrialData, spec: &ModelSpec, cfg: &McmcConfig, chain: usize) -> Result<ChainDraws> {
    run_chain_with(data, spec, cfg, chain, &JointIndicatorGibbs)
}

/// [`run_chain`] with a caller-supplied indicator update.
pub fn run_chain_with(
    data: &TrialData,
    spec: &ModelSpec,
    cfg: &McmcConfig,
    chain: usize,
    indicators: &dyn IndicatorUpdate,
) -> Result<ChainDraws> {
    cfg.validate()?;
    let mut sm = Sampler::new(data, spec, cfg, chain, indicators)?;
    let k = spec.n_subtrials();
    let n_coords = ParamState::n_coords(k);
    let retained = cfg.retained_per_chain();
    let mut values = Vec::with_capacity(retained * n_coords);
    let mut indicators_out = Vec::with_capacity(retained * k);
    let mut history = Vec::new();
    let mut window_index = 0;
    for it in 0..cfg.burn_in {
        sm.sweep();
        if (it + 1) % cfg.adapt_window == 0 {
            window_index += 1;
            sm.adapt(it + 1, window_index, &mut history);
        }
    }
    sm.retained_phase = true;
    for it in 0..cfg.iterations {
        sm.sweep();
        if (it + 1) % cfg.thin == 0 {
            sm.s.flatten_into(&mut values);
            indicators_out.extend(sm.s.z.iter().map(|c| c.index() as u8));
        }
    }
    let lp = sm.log_posterior();
    if !lp.is_finite() {
        return Err(Error::NonFinite {
            what: "final log-posterior",
            subtrial: 0,
            arm: "-",
        });
    }
    let acceptance = sm
        .blocks
        .iter()
        .map(|b| if b.prop > 0 { b.acc as f64 / b.prop as f64 } else { f64::NAN })
        .collect();
    Ok(ChainDraws {
        chain,
        values,
        indicators: indicators_out,
        acceptance,
        scale_history: history,
    })
}
