//! Sampling-based planner whose cost is conditioned on high-level actions.
//!
//! One set of `K` perturbation sequences is drawn per call and shared by every
//! candidate action. Since all candidates start from the same nominal sequence,
//! the `K` sampled trajectories are simulated once and only their costs differ
//! between candidates.

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::envs::cost::{decode_action, CostSpec, DecodedAction};
use crate::envs::ApproxModel;
use crate::error::{check_dim, Error, Result};
use crate::nn::ValueEnsemble;
use crate::rng::RngStream;

/// Cost assigned to rollouts whose state becomes non-finite.
pub const DIVERGED_COST: f64 = 1e10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MppiConfig {
    /// Number of sampled perturbation sequences `K`.
    pub samples: usize,
    pub horizon: usize,
    /// Per-dimension noise variance (diagonal of the covariance).
    pub noise_sigma: f64,
    /// Softmax temperature.
    pub lambda: f64,
}

impl Default for MppiConfig {
    fn default() -> Self {
        Self { samples: 100, horizon: 10, noise_sigma: 0.5, lambda: 1.0 }
    }
}

impl MppiConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 || self.horizon == 0 {
            return Err(Error::invalid("mppi samples and horizon must be at least 1"));
        }
        if !(self.noise_sigma > 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::invalid("mppi noise_sigma must be positive"));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid("mppi lambda must be positive"));
        }
        Ok(())
    }

    pub fn noise_std(&self) -> f64 {
        self.noise_sigma.sqrt()
    }
}

/// Perturbation tensor `eps[k][t][j]`, stored flat.
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbations {
    pub samples: usize,
    pub horizon: usize,
    pub control_dim: usize,
    pub data: Vec<f64>,
}

impl Perturbations {
    pub fn zeros(samples: usize, horizon: usize, control_dim: usize) -> Self {
        Self { samples, horizon, control_dim, data: vec![0.0; samples * horizon * control_dim] }
    }

    /// Flat `[t][j]` sequence of sample `k`.
    pub fn sequence(&self, k: usize) -> &[f64] {
        let n = self.horizon * self.control_dim;
        &self.data[k * n..(k + 1) * n]
    }

    fn sequence_mut(&mut self, k: usize) -> &mut [f64] {
        let n = self.horizon * self.control_dim;
        &mut self.data[k * n..(k + 1) * n]
    }
}

/// Independent Gaussian draws with per-dimension variance `noise_sigma`.
pub fn sample_perturbations(cfg: &MppiConfig, control_dim: usize, rng: &mut RngStream) -> Perturbations {
    let std = cfg.noise_std();
    let mut eps = Perturbations::zeros(cfg.samples, cfg.horizon, control_dim);
    for v in eps.data.iter_mut() {
        *v = std * rng.normal();
    }
    eps
}

/// Clamps `nominal + eps` into the box and rewrites `eps` as the realised offset.
pub fn clamp_perturbations(nominal: &[f64], eps: &mut Perturbations, low: &[f64], high: &[f64]) {
    let m = eps.control_dim;
    for k in 0..eps.samples {
        for (i, e) in eps.sequence_mut(k).iter_mut().enumerate() {
            let j = i % m;
            let u = (nominal[i] + *e).clamp(low[j], high[j]);
            *e = u - nominal[i];
        }
    }
}

/// Open-loop model trajectory. `states` has `H + 1` entries unless the model
/// diverged, in which case it stops at the last finite state.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<Vec<f64>>,
    pub diverged: bool,
}

/// Simulates `controls` (flat `[t][j]`) from `x0`.
pub fn simulate(model: &dyn ApproxModel, x0: &[f64], controls: &[f64]) -> Trajectory {
    let m = model.control_dim();
    let h = controls.len() / m;
    let mut states = Vec::with_capacity(h + 1);
    states.push(x0.to_vec());
    for t in 0..h {
        let next = model.step(&states[t], &controls[t * m..(t + 1) * m]);
        if next.iter().any(|v| !v.is_finite()) {
            return Trajectory { states, diverged: true };
        }
        states.push(next);
    }
    Trajectory { states, diverged: false }
}

/// Running costs summed over the horizon plus the terminal term.
pub fn trajectory_cost(
    model: &dyn ApproxModel,
    cost: &CostSpec,
    critic: Option<&ValueEnsemble>,
    traj: &Trajectory,
    controls: &[f64],
    action: &DecodedAction,
) -> f64 {
    if traj.diverged {
        return DIVERGED_COST;
    }
    let m = model.control_dim();
    let mut j = 0.0;
    for (t, x_next) in traj.states[1..].iter().enumerate() {
        j += cost.running(model, action, x_next, &controls[t * m..(t + 1) * m]);
    }
    j += cost.terminal(model, critic, traj.states.last().expect("non-empty trajectory"));
    if j.is_finite() {
        j
    } else {
        DIVERGED_COST
    }
}

/// Simulates one perturbed sequence and returns its states and cost.
#[allow(clippy::too_many_arguments)]
pub fn rollout_cost(
    model: &dyn ApproxModel,
    cost: &CostSpec,
    critic: Option<&ValueEnsemble>,
    x_t: &[f64],
    nominal: &[f64],
    eps_k: &[f64],
    action: &DecodedAction,
) -> (Trajectory, f64) {
    let controls: Vec<f64> = nominal.iter().zip(eps_k).map(|(u, e)| u + e).collect();
    let traj = simulate(model, x_t, &controls);
    let j = trajectory_cost(model, cost, critic, &traj, &controls, action);
    (traj, j)
}

/// Min-shifted softmax of `-J / lambda`.
pub fn mppi_weights(costs: &[f64], lambda: f64) -> Vec<f64> {
    let k = costs.len();
    if k == 0 {
        return Vec::new();
    }
    if costs.iter().all(|&c| c >= DIVERGED_COST) {
        warn!("all {k} MPPI rollouts diverged; using uniform weights");
        return vec![1.0 / k as f64; k];
    }
    let min = costs.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut w: Vec<f64> = costs.iter().map(|&c| (-(c - min) / lambda).exp()).collect();
    let z: f64 = w.iter().sum();
    for v in w.iter_mut() {
        *v /= z;
    }
    w
}

/// `u + sum_k w_k eps_k`, clamped into the control box.
pub fn mppi_update(nominal: &[f64], eps: &Perturbations, weights: &[f64], low: &[f64], high: &[f64]) -> Vec<f64> {
    let m = eps.control_dim;
    let mut u = nominal.to_vec();
    for (k, &w) in weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        for (ui, e) in u.iter_mut().zip(eps.sequence(k)) {
            *ui += w * e;
        }
    }
    for (i, ui) in u.iter_mut().enumerate() {
        *ui = ui.clamp(low[i % m], high[i % m]);
    }
    u
}

/// Planner output for one candidate action.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidatePlan {
    /// Updated control sequence, flat `[t][j]`.
    pub controls: Vec<f64>,
    /// Virtual states under `controls`; `H + 1` entries unless diverged.
    pub states: Vec<Vec<f64>>,
    /// Model rewards for each simulated transition.
    pub rewards: Vec<f64>,
    /// Model terminal flag after each simulated transition.
    pub terminals: Vec<bool>,
    /// Cost of the updated sequence.
    pub cost: f64,
    pub diverged: bool,
}

impl CandidatePlan {
    pub fn first_control(&self, control_dim: usize) -> &[f64] {
        &self.controls[..control_dim]
    }
}

/// Receding-horizon planner holding the warm-started nominal sequence.
#[derive(Debug, Clone)]
pub struct Planner {
    pub cfg: MppiConfig,
    pub low: Vec<f64>,
    pub high: Vec<f64>,
    nominal: Vec<f64>,
}

impl Planner {
    pub fn new(cfg: MppiConfig, low: Vec<f64>, high: Vec<f64>) -> Result<Self> {
        cfg.validate()?;
        check_dim("control bounds", low.len(), high.len())?;
        let nominal = vec![0.0; cfg.horizon * low.len()];
        Ok(Self { cfg, low, high, nominal })
    }

    pub fn control_dim(&self) -> usize {
        self.low.len()
    }

    pub fn nominal(&self) -> &[f64] {
        &self.nominal
    }

    pub fn reset(&mut self) {
        self.nominal.iter_mut().for_each(|v| *v = 0.0);
    }

    /// Shifts the chosen sequence left one step, repeating its last control.
    pub fn warm_start(&mut self, executed: &CandidatePlan) {
        let m = self.control_dim();
        let u = &executed.controls;
        let n = u.len();
        self.nominal[..n - m].copy_from_slice(&u[m..]);
        self.nominal[n - m..].copy_from_slice(&u[n - m..]);
    }

    /// Plans every candidate against one fresh perturbation set.
    pub fn plan(
        &self,
        model: &dyn ApproxModel,
        cost: &CostSpec,
        critic: Option<&ValueEnsemble>,
        x_t: &[f64],
        actions: &[Vec<f64>],
        rng: &mut RngStream,
    ) -> Result<Vec<CandidatePlan>> {
        let eps = sample_perturbations(&self.cfg, self.control_dim(), rng);
        self.plan_with(model, cost, critic, x_t, actions, eps)
    }

    /// As [`Planner::plan`] with caller-supplied raw perturbations.
    pub fn plan_with(
        &self,
        model: &dyn ApproxModel,
        cost: &CostSpec,
        critic: Option<&ValueEnsemble>,
        x_t: &[f64],
        actions: &[Vec<f64>],
        mut eps: Perturbations,
    ) -> Result<Vec<CandidatePlan>> {
        if actions.is_empty() {
            return Err(Error::invalid("planner needs at least one candidate action"));
        }
        check_dim("model state", model.state_dim(), x_t.len())?;
        check_dim("control dim", model.control_dim(), self.control_dim())?;
        check_dim("perturbation length", self.nominal.len(), eps.horizon * eps.control_dim)?;
        let decoded: Vec<DecodedAction> = actions.iter().map(|a| decode_action(model, cost.form, a)).collect();
        clamp_perturbations(&self.nominal, &mut eps, &self.low, &self.high);

        // costs[k][m]: the trajectory of sample k is shared by every candidate
        let nominal = &self.nominal;
        let costs: Vec<Vec<f64>> = (0..eps.samples)
            .into_par_iter()
            .map(|k| {
                let controls: Vec<f64> = nominal.iter().zip(eps.sequence(k)).map(|(u, e)| u + e).collect();
                let traj = simulate(model, x_t, &controls);
                decoded.iter().map(|d| trajectory_cost(model, cost, critic, &traj, &controls, d)).collect()
            })
            .collect();

        let plans: Vec<CandidatePlan> = decoded
            .par_iter()
            .enumerate()
            .map(|(mi, d)| {
                let j: Vec<f64> = costs.iter().map(|c| c[mi]).collect();
                let w = mppi_weights(&j, self.cfg.lambda);
                let controls = mppi_update(nominal, &eps, &w, &self.low, &self.high);
                self.evaluate(model, cost, critic, x_t, controls, d)
            })
            .collect();
        Ok(plans)
    }

    fn evaluate(
        &self,
        model: &dyn ApproxModel,
        cost: &CostSpec,
        critic: Option<&ValueEnsemble>,
        x_t: &[f64],
        controls: Vec<f64>,
        action: &DecodedAction,
    ) -> CandidatePlan {
        let m = self.control_dim();
        let traj = simulate(model, x_t, &controls);
        let j = trajectory_cost(model, cost, critic, &traj, &controls, action);
        let mut rewards = Vec::with_capacity(traj.states.len().saturating_sub(1));
        let mut terminals = Vec::with_capacity(rewards.capacity());
        for t in 0..traj.states.len() - 1 {
            let (x, xn) = (&traj.states[t], &traj.states[t + 1]);
            rewards.push(model.transition_reward(x, &controls[t * m..(t + 1) * m], xn));
            terminals.push(model.terminal(xn));
        }
        CandidatePlan { controls, states: traj.states, rewards, terminals, cost: j, diverged: traj.diverged }
    }
}
