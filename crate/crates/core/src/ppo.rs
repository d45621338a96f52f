//! Clipped-surrogate policy optimisation over real and virtual samples.
//!
//! The policy and every value head share one flat parameter vector laid out
//! as `[policy mean net | log_std | head 0 | head 1 | ...]`, optimised by a
//! single Adam instance with global-norm gradient clipping.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::buffer::RolloutBuffers;
use crate::error::{check_dim, Error, Result};
use crate::mixing::{mixed_minibatch, InfluenceState, MixingApplication, Source};
use crate::nn::policy::{log_one_minus_tanh_sq, HALF_LN_2PI};
use crate::nn::{Adam, PolicyNet, ValueEnsemble, LOG_STD_MAX, LOG_STD_MIN};
use crate::rng::RngStream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PpoConfig {
    pub lr: f64,
    pub n_steps: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip: f64,
    pub ent_coef: f64,
    pub vf_coef: f64,
    pub max_grad_norm: f64,
    pub normalize_advantages: bool,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            lr: 3e-4,
            n_steps: 2048,
            batch_size: 64,
            epochs: 10,
            gamma: 0.99,
            gae_lambda: 0.95,
            clip: 0.2,
            ent_coef: 0.0,
            vf_coef: 0.5,
            max_grad_norm: 0.5,
            normalize_advantages: true,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = [self.lr, self.clip, self.max_grad_norm];
        if pos.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::invalid("ppo lr, clip and max_grad_norm must be positive"));
        }
        if self.n_steps == 0 || self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::invalid("ppo n_steps, batch_size and epochs must be at least 1"));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) || !(self.gae_lambda >= 0.0 && self.gae_lambda <= 1.0) {
            return Err(Error::invalid("ppo gamma must lie in (0, 1] and gae_lambda in [0, 1]"));
        }
        if self.ent_coef < 0.0 || self.vf_coef < 0.0 {
            return Err(Error::invalid("ppo loss coefficients must be non-negative"));
        }
        Ok(())
    }
}

/// Generalised advantage estimation over a flat sequence of transitions.
///
/// `values[t]` is `V(s_t)`; the value after a non-terminal step `t` is
/// `values[t + 1]`, or `bootstrap` for the last step. Returns
/// `(advantages, value targets)`.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    gamma: f64,
    lambda: f64,
    bootstrap: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = rewards.len();
    check_dim("gae values", n, values.len())?;
    check_dim("gae dones", n, dones.len())?;
    let mut adv = vec![0.0; n];
    let mut last = 0.0;
    for t in (0..n).rev() {
        let next_v = if t + 1 < n { values[t + 1] } else { bootstrap };
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_v * live - values[t];
        last = delta + gamma * lambda * live * last;
        adv[t] = last;
    }
    let targets = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, targets))
}

/// Training tuple with its advantage and value target resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct PpoSample {
    pub obs: Vec<f64>,
    /// Pre-squash action.
    pub raw: Vec<f64>,
    pub log_pi_old: f64,
    pub advantage: f64,
    pub v_target: f64,
}

/// Flat parameter vector helpers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamLayout {
    pub mean: usize,
    pub log_std: usize,
    pub head: usize,
    pub heads: usize,
}

impl ParamLayout {
    pub fn of(policy: &PolicyNet, critic: &ValueEnsemble) -> Self {
        Self {
            mean: policy.mean.param_count(),
            log_std: policy.log_std.len(),
            head: critic.heads.first().map_or(0, |h| h.param_count()),
            heads: critic.heads.len(),
        }
    }

    pub fn total(&self) -> usize {
        self.mean + self.log_std + self.head * self.heads
    }

    fn head_offset(&self, d: usize) -> usize {
        self.mean + self.log_std + d * self.head
    }

    pub fn gather(&self, policy: &PolicyNet, critic: &ValueEnsemble) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.total());
        v.extend_from_slice(policy.mean.params());
        v.extend_from_slice(&policy.log_std);
        for h in &critic.heads {
            v.extend_from_slice(h.params());
        }
        v
    }

    pub fn scatter(&self, flat: &[f64], policy: &mut PolicyNet, critic: &mut ValueEnsemble) {
        policy.mean.params_mut().copy_from_slice(&flat[..self.mean]);
        policy.log_std.copy_from_slice(&flat[self.mean..self.mean + self.log_std]);
        for (d, h) in critic.heads.iter_mut().enumerate() {
            let o = self.head_offset(d);
            h.params_mut().copy_from_slice(&flat[o..o + self.head]);
        }
    }
}

/// Loss components averaged over a minibatch.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossParts {
    pub actor: f64,
    pub value: f64,
    /// Negated policy entropy.
    pub entropy: f64,
    pub total: f64,
    /// Samples dropped because their importance ratio was not finite.
    pub excluded: usize,
    pub clip_fraction: f64,
    pub approx_kl: f64,
}

fn normalized_advantages(batch: &[&PpoSample], normalize: bool) -> Vec<f64> {
    let a: Vec<f64> = batch.iter().map(|s| s.advantage).collect();
    if !normalize || a.len() < 2 {
        return a;
    }
    let n = a.len() as f64;
    let mean = a.iter().sum::<f64>() / n;
    let var = a.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let std = var.sqrt() + 1e-8;
    a.iter().map(|x| (x - mean) / std).collect()
}

/// Evaluates the composite loss on `batch`; when `grads` is given, adds
/// `scale * d loss / d params` into it (flat layout).
pub fn ppo_losses(
    policy: &PolicyNet,
    critic: &ValueEnsemble,
    batch: &[&PpoSample],
    cfg: &PpoConfig,
    scale: f64,
    mut grads: Option<&mut [f64]>,
) -> Result<LossParts> {
    if batch.is_empty() {
        return Err(Error::EmptyBuffer("ppo minibatch"));
    }
    let layout = ParamLayout::of(policy, critic);
    if let Some(g) = grads.as_deref() {
        check_dim("gradient buffer", layout.total(), g.len())?;
    }
    let adv = normalized_advantages(batch, cfg.normalize_advantages);
    let log_std = policy.clamped_log_std();
    let std: Vec<f64> = log_std.iter().map(|l| l.exp()).collect();
    let free: Vec<bool> = policy.log_std.iter().map(|l| *l > LOG_STD_MIN && *l < LOG_STD_MAX).collect();
    let k = policy.action_dim();
    let n = batch.len() as f64;
    let d = critic.size() as f64;

    // first pass: ratios, to know how many samples contribute to the actor term
    let mut per = Vec::with_capacity(batch.len());
    for s in batch {
        check_dim("sample action", k, s.raw.len())?;
        let trace = policy.mean_trace(&s.obs)?;
        let mu = trace.output();
        let mut lp = 0.0;
        let mut u = vec![0.0; k];
        for j in 0..k {
            u[j] = (s.raw[j] - mu[j]) / std[j];
            lp += -0.5 * u[j] * u[j] - log_std[j] - HALF_LN_2PI - log_one_minus_tanh_sq(s.raw[j]);
        }
        let log_ratio = lp - s.log_pi_old;
        let ratio = log_ratio.exp();
        per.push((trace, u, ratio, log_ratio));
    }
    let included = per.iter().filter(|p| p.2.is_finite()).count();
    let excluded = batch.len() - included;
    if excluded > 0 {
        warn!("ppo: {excluded} samples with non-finite importance ratio excluded");
    }

    let mut parts = LossParts { excluded, ..Default::default() };
    let mut clipped = 0usize;
    if included > 0 {
        let inv = 1.0 / included as f64;
        for ((trace, u, ratio, log_ratio), a) in per.iter().zip(&adv) {
            if !ratio.is_finite() {
                continue;
            }
            let r = *ratio;
            let rc = r.clamp(1.0 - cfg.clip, 1.0 + cfg.clip);
            let unclipped = r * a;
            let clipped_obj = rc * a;
            let active_unclipped = unclipped <= clipped_obj;
            parts.actor -= unclipped.min(clipped_obj) * inv;
            parts.approx_kl += ((r - 1.0) - log_ratio) * inv;
            if (r - 1.0).abs() > cfg.clip {
                clipped += 1;
            }
            if let Some(g) = grads.as_deref_mut() {
                // d(-min(rA, clip(r)A))/d log pi; zero when the clipped branch is active
                let dl_dlp = if active_unclipped || (r - rc).abs() == 0.0 { -r * a * inv } else { 0.0 };
                if dl_dlp != 0.0 {
                    let grad_mu: Vec<f64> = (0..k).map(|j| scale * dl_dlp * u[j] / std[j]).collect();
                    policy.mean.backward(trace, &grad_mu, &mut g[..layout.mean]);
                    for j in 0..k {
                        if free[j] {
                            g[layout.mean + j] += scale * dl_dlp * (u[j] * u[j] - 1.0);
                        }
                    }
                }
            }
        }
        parts.clip_fraction = clipped as f64 / included as f64;
    }

    // entropy does not depend on the state
    parts.entropy = -policy.entropy();
    if let Some(g) = grads.as_deref_mut() {
        if cfg.ent_coef != 0.0 {
            for j in 0..k {
                if free[j] {
                    g[layout.mean + j] -= scale * cfg.ent_coef;
                }
            }
        }
    }

    for s in batch {
        let x = critic.norm.apply(&s.obs);
        for (hi, head) in critic.heads.iter().enumerate() {
            let trace = head.forward_trace(&x)?;
            let err = trace.output()[0] - s.v_target;
            parts.value += err * err / (n * d);
            if let Some(g) = grads.as_deref_mut() {
                let o = layout.head_offset(hi);
                head.backward(&trace, &[scale * cfg.vf_coef * 2.0 * err / (n * d)], &mut g[o..o + layout.head]);
            }
        }
    }
    parts.total = parts.actor + cfg.vf_coef * parts.value + cfg.ent_coef * parts.entropy;
    if !parts.total.is_finite() {
        return Err(Error::NonFinite("ppo loss"));
    }
    Ok(parts)
}

/// Rescales `g` in place so its Euclidean norm is at most `max_norm`;
/// returns the norm before clipping.
pub fn clip_grad_norm(g: &mut [f64], max_norm: f64) -> f64 {
    let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > max_norm {
        let c = max_norm / (norm + 1e-6);
        g.iter_mut().for_each(|v| *v *= c);
    }
    norm
}

/// Real samples with GAE computed under the current critic. Truncated
/// episodes bootstrap through the reward.
pub fn prepare_real(buffers: &RolloutBuffers, critic: &ValueEnsemble, cfg: &PpoConfig) -> Result<Vec<PpoSample>> {
    let d = &buffers.d_rl;
    if d.is_empty() {
        return Ok(Vec::new());
    }
    let mut values = Vec::with_capacity(d.len());
    let mut rewards = Vec::with_capacity(d.len());
    let mut dones = Vec::with_capacity(d.len());
    for t in d {
        values.push(critic.mean_value(&t.s_t)?);
        let mut r = t.r_t;
        if t.truncated {
            r += cfg.gamma * critic.mean_value(&t.s_next)?;
        }
        rewards.push(r);
        dones.push(t.done || t.truncated);
    }
    let last = d.last().expect("non-empty");
    let bootstrap = if last.done || last.truncated { 0.0 } else { critic.mean_value(&last.s_next)? };
    let (adv, targets) = compute_gae(&rewards, &values, &dones, cfg.gamma, cfg.gae_lambda, bootstrap)?;
    Ok(d.iter()
        .zip(adv.into_iter().zip(targets))
        .map(|(t, (a, v))| PpoSample {
            obs: t.s_t.clone(),
            raw: t.a_t.clone(),
            log_pi_old: t.log_pi_old,
            advantage: a,
            v_target: v,
        })
        .collect())
}

/// Virtual samples: stored targets, advantages against the current critic.
pub fn prepare_virtual(buffers: &RolloutBuffers, critic: &ValueEnsemble) -> Result<Vec<PpoSample>> {
    buffers
        .d_mppi
        .iter()
        .map(|v| {
            let t = &v.step;
            Ok(PpoSample {
                obs: t.s_t.clone(),
                raw: t.a_t.clone(),
                log_pi_old: t.log_pi_old,
                advantage: v.v_target - critic.mean_value(&t.s_t)?,
                v_target: v.v_target,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UpdateStats {
    pub n_real: usize,
    pub n_virtual: usize,
    /// Influence ratio used by this update.
    pub rho: f64,
    pub sigma2_bar: f64,
    pub actor_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub grad_norm: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
    pub excluded: usize,
    pub steps: usize,
}

/// Policy, value ensemble and their shared optimiser.
#[derive(Debug, Clone)]
pub struct Agent {
    pub policy: PolicyNet,
    pub critic: ValueEnsemble,
    pub adam: Adam,
    layout: ParamLayout,
}

impl Agent {
    pub fn new(policy: PolicyNet, critic: ValueEnsemble, lr: f64) -> Self {
        let layout = ParamLayout::of(&policy, &critic);
        Self { adam: Adam::new(layout.total(), lr), policy, critic, layout }
    }

    pub fn layout(&self) -> ParamLayout {
        self.layout
    }

    pub fn params(&self) -> Vec<f64> {
        self.layout.gather(&self.policy, &self.critic)
    }

    /// Gradient of `(1 - w) * L(real) + w * L(virtual)` accumulated into `g`.
    fn accumulate(
        &self,
        real: &[&PpoSample],
        virt: &[&PpoSample],
        w: f64,
        cfg: &PpoConfig,
        g: &mut [f64],
    ) -> Result<LossParts> {
        let mut total = LossParts::default();
        let mut add = |p: LossParts, c: f64| {
            total.actor += c * p.actor;
            total.value += c * p.value;
            total.entropy += c * p.entropy;
            total.total += c * p.total;
            total.excluded += p.excluded;
            total.clip_fraction += c * p.clip_fraction;
            total.approx_kl += c * p.approx_kl;
        };
        if !real.is_empty() && w < 1.0 {
            add(ppo_losses(&self.policy, &self.critic, real, cfg, 1.0 - w, Some(g))?, 1.0 - w);
        }
        if !virt.is_empty() && w > 0.0 {
            add(ppo_losses(&self.policy, &self.critic, virt, cfg, w, Some(g))?, w);
        }
        Ok(total)
    }

    fn apply(&mut self, g: &mut [f64], cfg: &PpoConfig) -> Result<f64> {
        let norm = clip_grad_norm(g, cfg.max_grad_norm);
        let mut flat = self.params();
        self.adam.step(&mut flat, g)?;
        self.layout.scatter(&flat, &mut self.policy, &mut self.critic);
        Ok(norm)
    }

    /// One update period: adapts the influence ratio once, then runs
    /// `epochs` passes of minibatch gradient steps.
    pub fn update(
        &mut self,
        real: &[PpoSample],
        virt: &[PpoSample],
        influence: &mut InfluenceState,
        cfg: &PpoConfig,
        rng: &mut RngStream,
    ) -> Result<UpdateStats> {
        if real.is_empty() {
            return Err(Error::EmptyBuffer("real rollout buffer"));
        }
        let b = cfg.batch_size;
        let mut stats = UpdateStats { n_real: real.len(), n_virtual: virt.len(), ..Default::default() };

        // ensemble disagreement on one real and one virtual minibatch, drawn
        // from a copy so the minibatch sequence does not depend on |d_mppi|
        let mut probe_rng = rng.clone();
        let mut probe: Vec<&[f64]> =
            (0..b.min(real.len())).map(|_| real[probe_rng.index(real.len())].obs.as_slice()).collect();
        if !virt.is_empty() {
            probe.extend((0..b.min(virt.len())).map(|_| virt[probe_rng.index(virt.len())].obs.as_slice()));
        }
        if self.critic.size() >= 2 {
            let values: Vec<Vec<f64>> = probe.iter().map(|s| self.critic.values(s)).collect::<Result<_>>()?;
            stats.sigma2_bar = influence.update(&values)?.sigma2_bar;
        }
        let rho = influence.rho;
        stats.rho = rho;
        if rho > 0.0 && virt.is_empty() && influence.application == MixingApplication::LossWeighting {
            warn!("virtual buffer empty at rho = {rho}; virtual loss treated as zero");
        }

        let mut g = vec![0.0; self.layout.total()];
        let mut acc = LossParts::default();
        let mut order: Vec<usize> = (0..real.len()).collect();
        let n_batches = real.len().div_ceil(b);
        for _ in 0..cfg.epochs {
            match influence.application {
                MixingApplication::LossWeighting => {
                    rng.shuffle(&mut order);
                    for chunk in order.chunks(b) {
                        let rb: Vec<&PpoSample> = chunk.iter().map(|&i| &real[i]).collect();
                        let vb: Vec<&PpoSample> = if rho > 0.0 && !virt.is_empty() {
                            (0..b).map(|_| &virt[rng.index(virt.len())]).collect()
                        } else {
                            Vec::new()
                        };
                        g.iter_mut().for_each(|v| *v = 0.0);
                        let parts = self.accumulate(&rb, &vb, rho, cfg, &mut g)?;
                        stats.grad_norm += self.apply(&mut g, cfg)?;
                        add_parts(&mut acc, &parts);
                        stats.steps += 1;
                    }
                }
                MixingApplication::Distribution => {
                    for _ in 0..n_batches {
                        let picks = mixed_minibatch(real.len(), virt.len(), rho, b, rng)?;
                        let mb: Vec<&PpoSample> = picks
                            .iter()
                            .map(|s| match *s {
                                Source::Real(i) => &real[i],
                                Source::Virtual(i) => &virt[i],
                            })
                            .collect();
                        g.iter_mut().for_each(|v| *v = 0.0);
                        let parts = self.accumulate(&mb, &[], 0.0, cfg, &mut g)?;
                        stats.grad_norm += self.apply(&mut g, cfg)?;
                        add_parts(&mut acc, &parts);
                        stats.steps += 1;
                    }
                }
            }
        }
        let k = stats.steps.max(1) as f64;
        stats.actor_loss = acc.actor / k;
        stats.value_loss = acc.value / k;
        stats.entropy = -acc.entropy / k;
        stats.clip_fraction = acc.clip_fraction / k;
        stats.approx_kl = acc.approx_kl / k;
        stats.excluded = acc.excluded;
        stats.grad_norm /= k;
        Ok(stats)
    }
}

fn add_parts(acc: &mut LossParts, p: &LossParts) {
    acc.actor += p.actor;
    acc.value += p.value;
    acc.entropy += p.entropy;
    acc.total += p.total;
    acc.excluded += p.excluded;
    acc.clip_fraction += p.clip_fraction;
    acc.approx_kl += p.approx_kl;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixing::{InfluenceConfig, InfluenceMode};
    use crate::nn::ObsNormalizer;
    use crate::rng::StreamId;

    fn agent(obs: usize, act: usize, heads: usize) -> Agent {
        let mut rng = RngStream::new(3, StreamId::Init);
        let policy = PolicyNet::new(ObsNormalizer::identity(obs), act, &[8, 8], &mut rng);
        let critic = ValueEnsemble::new(ObsNormalizer::identity(obs), heads, &[8, 8], 3);
        Agent::new(policy, critic, 1e-3)
    }

    fn synthetic(a: &Agent, n: usize, seed: u64) -> Vec<PpoSample> {
        let mut rng = RngStream::new(seed, StreamId::Policy);
        (0..n)
            .map(|i| {
                let obs: Vec<f64> = (0..a.policy.obs_dim()).map(|_| rng.normal()).collect();
                let smp = a.policy.sample(&obs, &mut rng).unwrap();
                PpoSample {
                    obs,
                    raw: smp.raw,
                    // perturb so some ratios leave the clip range
                    log_pi_old: smp.log_prob + 0.3 * ((i as f64) * 1.7).sin(),
                    advantage: rng.normal(),
                    v_target: rng.normal(),
                }
            })
            .collect()
    }

    #[test]
    fn gae_lambda_zero_is_td() {
        let r = [1.0, -0.5, 2.0];
        let v = [0.3, 0.1, -0.2];
        let dones = [false, true, false];
        let (a, t) = compute_gae(&r, &v, &dones, 0.9, 0.0, 0.7).unwrap();
        assert!((a[0] - (1.0 + 0.9 * 0.1 - 0.3)).abs() < 1e-15);
        assert!((a[1] - (-0.5 - 0.1)).abs() < 1e-15);
        assert!((a[2] - (2.0 + 0.9 * 0.7 + 0.2)).abs() < 1e-15);
        for i in 0..3 {
            assert!((t[i] - a[i] - v[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn gae_lambda_one_is_return_minus_value() {
        let r = [1.0, 2.0, 3.0];
        let v = [0.5, -1.0, 0.25];
        let g: f64 = 0.95;
        let boot = 4.0;
        let (a, _) = compute_gae(&r, &v, &[false; 3], g, 1.0, boot).unwrap();
        for t in 0..3 {
            let mut ret = 0.0;
            for k in t..3 {
                ret += g.powi((k - t) as i32) * r[k];
            }
            ret += g.powi((3 - t) as i32) * boot;
            assert!((a[t] - (ret - v[t])).abs() < 1e-12);
        }
    }

    #[test]
    fn gae_two_step_recursion() {
        let (g, l) = (0.99, 0.95);
        let (a, t) = compute_gae(&[1.0, 1.0], &[0.5, 0.5], &[false, false], g, l, 0.5).unwrap();
        let d1 = 1.0 + g * 0.5 - 0.5;
        let d0 = 1.0 + g * 0.5 - 0.5;
        let a1 = d1;
        let a0 = d0 + g * l * a1;
        assert!((a[1] - a1).abs() < 1e-15 && (a[0] - a0).abs() < 1e-15);
        assert!((t[0] - (a0 + 0.5)).abs() < 1e-15);
        assert!(compute_gae(&[1.0], &[0.0, 1.0], &[false], g, l, 0.0).is_err());
    }

    #[test]
    fn ratio_one_gives_minus_mean_advantage() {
        let a = agent(3, 2, 2);
        let mut s = synthetic(&a, 5, 1);
        for x in s.iter_mut() {
            x.log_pi_old = a.policy.log_prob_raw(&x.obs, &x.raw).unwrap();
        }
        let cfg = PpoConfig { normalize_advantages: false, ..Default::default() };
        let refs: Vec<&PpoSample> = s.iter().collect();
        let p = ppo_losses(&a.policy, &a.critic, &refs, &cfg, 1.0, None).unwrap();
        let mean_a = s.iter().map(|x| x.advantage).sum::<f64>() / 5.0;
        assert!((p.actor + mean_a).abs() < 1e-12);
        assert!(p.approx_kl.abs() < 1e-12);
        for x in s.iter_mut() {
            x.advantage = 0.0;
        }
        let refs: Vec<&PpoSample> = s.iter().collect();
        assert_eq!(ppo_losses(&a.policy, &a.critic, &refs, &cfg, 1.0, None).unwrap().actor, 0.0);
    }

    #[test]
    fn clipped_objective_matches_scalar_oracle() {
        let a = agent(2, 1, 2);
        let obs = [vec![0.1, 0.2], vec![-0.4, 0.3], vec![0.9, -0.7]];
        let raw = [0.2, -0.5, 1.1];
        let lp: Vec<f64> = (0..3).map(|i| a.policy.log_prob_raw(&obs[i], &[raw[i]]).unwrap()).collect();
        // ratios 1.5 (clipped, A > 0), 0.5 (clipped, A < 0), 1.1 (inside)
        let ratios = [1.5f64, 0.5, 1.1];
        let adv = [2.0, -1.0, 0.5];
        let s: Vec<PpoSample> = (0..3)
            .map(|i| PpoSample {
                obs: obs[i].clone(),
                raw: vec![raw[i]],
                log_pi_old: lp[i] - ratios[i].ln(),
                advantage: adv[i],
                v_target: 0.0,
            })
            .collect();
        let cfg = PpoConfig { normalize_advantages: false, ..Default::default() };
        let refs: Vec<&PpoSample> = s.iter().collect();
        let p = ppo_losses(&a.policy, &a.critic, &refs, &cfg, 1.0, None).unwrap();
        let want =
            -((1.2 * 2.0f64).min(1.5 * 2.0) + (0.5f64 * -1.0).min(0.8 * -1.0) + (1.1f64 * 0.5).min(1.1 * 0.5)) / 3.0;
        assert!((p.actor - want).abs() < 1e-10, "{} vs {want}", p.actor);
    }

    #[test]
    fn normalized_advantage_moments() {
        let a = agent(2, 1, 2);
        let s = synthetic(&a, 50, 7);
        let refs: Vec<&PpoSample> = s.iter().collect();
        let z = normalized_advantages(&refs, true);
        let n = z.len() as f64;
        let mean = z.iter().sum::<f64>() / n;
        let std = (z.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!(mean.abs() < 1e-6 && (std - 1.0).abs() < 1e-3);
        assert_eq!(normalized_advantages(&refs[..1], true), vec![s[0].advantage]);
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let a = agent(3, 2, 3);
        let mut cfg = PpoConfig { ent_coef: 0.01, ..Default::default() };
        cfg.vf_coef = 0.5;
        let s = synthetic(&a, 12, 5);
        let refs: Vec<&PpoSample> = s.iter().collect();
        let layout = a.layout();
        let mut g = vec![0.0; layout.total()];
        ppo_losses(&a.policy, &a.critic, &refs, &cfg, 1.0, Some(&mut g)).unwrap();
        let base = a.params();
        let h = 1e-5;
        let eval = |flat: &[f64]| {
            let mut p = a.policy.clone();
            let mut c = a.critic.clone();
            layout.scatter(flat, &mut p, &mut c);
            ppo_losses(&p, &c, &refs, &cfg, 1.0, None).unwrap().total
        };
        let mut worst: f64 = 0.0;
        for i in (0..base.len()).step_by(3) {
            let mut xp = base.clone();
            xp[i] += h;
            let mut xm = base.clone();
            xm[i] -= h;
            let fd = (eval(&xp) - eval(&xm)) / (2.0 * h);
            let rel = (fd - g[i]).abs() / (fd.abs().max(g[i].abs()).max(1e-3));
            worst = worst.max(rel);
        }
        assert!(worst < 1e-4, "worst relative error {worst}");
    }

    #[test]
    fn update_descends_on_frozen_batch() {
        let mut a = agent(3, 1, 2);
        let s = synthetic(&a, 64, 9);
        let cfg = PpoConfig { lr: 1e-4, epochs: 1, batch_size: 64, ..Default::default() };
        let refs: Vec<&PpoSample> = s.iter().collect();
        let before = ppo_losses(&a.policy, &a.critic, &refs, &cfg, 1.0, None).unwrap().total;
        let mut inf = InfluenceState::new(&InfluenceConfig { rho0: 0.0, ..Default::default() }).unwrap();
        let st = a.update(&s, &[], &mut inf, &cfg, &mut RngStream::new(1, StreamId::Minibatch)).unwrap();
        assert_eq!(st.steps, 1);
        let after = ppo_losses(&a.policy, &a.critic, &refs, &cfg, 1.0, None).unwrap().total;
        assert!(after < before, "{after} >= {before}");
    }

    #[test]
    fn identical_heads_stay_identical() {
        let mut a = agent(3, 1, 3);
        let h0 = a.critic.heads[0].clone();
        for h in a.critic.heads.iter_mut() {
            *h = h0.clone();
        }
        a = Agent::new(a.policy, a.critic, 1e-3);
        let s = synthetic(&a, 40, 2);
        let v = synthetic(&a, 30, 3);
        let cfg = PpoConfig { epochs: 2, batch_size: 16, ..Default::default() };
        let mut inf =
            InfluenceState::new(&InfluenceConfig { mode: InfluenceMode::Adaptive, ..Default::default() }).unwrap();
        let st = a.update(&s, &v, &mut inf, &cfg, &mut RngStream::new(4, StreamId::Minibatch)).unwrap();
        assert!(st.sigma2_bar < 1e-24);
        assert_eq!(a.critic.heads[1], a.critic.heads[0]);
        assert_eq!(a.critic.heads[2], a.critic.heads[0]);
        assert_eq!((st.n_real, st.n_virtual), (40, 30));
    }

    #[test]
    fn zero_rho_ignores_virtual_data() {
        let base = agent(3, 1, 2);
        let s = synthetic(&base, 50, 2);
        let v = synthetic(&base, 50, 3);
        let cfg = PpoConfig { epochs: 3, batch_size: 16, ..Default::default() };
        let run = |virt: &[PpoSample]| {
            let mut a = base.clone();
            let mut inf = InfluenceState::new(&InfluenceConfig { rho0: 0.0, ..Default::default() }).unwrap();
            let mut rng = RngStream::new(4, StreamId::Minibatch);
            a.update(&s, virt, &mut inf, &cfg, &mut rng).unwrap();
            a.params()
        };
        let with_empty = run(&[]);
        assert_eq!(with_empty, run(&v));
        assert_ne!(with_empty, base.params());
    }

    #[test]
    fn gradient_clip_caps_norm() {
        let mut g = vec![3.0, 4.0];
        let n = clip_grad_norm(&mut g, 0.5);
        assert_eq!(n, 5.0);
        let after = (g[0] * g[0] + g[1] * g[1]).sqrt();
        assert!((after - 0.5).abs() < 1e-6);
    }
}
