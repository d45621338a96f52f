//! Training loop: candidate generation, uniform candidate selection,
//! virtual re-scoring of unselected plans, periodic updates and evaluation.

use std::path::Path;

use log::info;
use serde::{Deserialize, Serialize};

use crate::buffer::{BufferDims, RolloutBuffers, Transition, VirtualTransition};
use crate::config::RunConfig;
use crate::envs::cost::{action_dim, CostSpec};
use crate::envs::{make_env, Environment, StepOutcome};
use crate::error::{Error, Result};
use crate::fmt::sig9;
use crate::mixing::{InfluenceConfig, InfluenceMode, InfluenceState};
use crate::mppi::Planner;
use crate::nn::{save_checkpoint, Checkpoint, ObsNormalizer, PolicyNet, ValueEnsemble};
use crate::ppo::{compute_gae, prepare_real, prepare_virtual, Agent, PpoConfig, UpdateStats};
use crate::rng::{RngStream, StreamId};

/// Raw stream ids of the validation evaluations (environment, planner noise).
const VAL_ENV_STREAM: u64 = 20;
const VAL_MPPI_STREAM: u64 = 21;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Policy action rescaled directly onto the control box; no planner.
    PpoBaseline,
    /// Policy actions condition an MPPI planner; unselected plans become virtual data.
    PpoMppi,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainerConfig {
    /// Real environment steps in the training budget.
    pub total_steps: usize,
    /// Candidate actions `M` per step.
    pub candidates: usize,
    /// Real steps between updates; defaults to `n_steps / M` (planner) or `n_steps`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub update_period: Option<usize>,
    pub eval_episodes: usize,
    /// Episodes per validation evaluation.
    pub val_episodes: usize,
    /// Real steps between validation evaluations; 0 disables them.
    pub eval_interval: usize,
    /// Stop once a validation success rate reaches this value.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub early_stop_success: Option<f64>,
    pub hidden: Vec<usize>,
    pub ensemble_size: usize,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            total_steps: 300_000,
            candidates: 4,
            update_period: None,
            eval_episodes: 50,
            val_episodes: 10,
            eval_interval: 0,
            early_stop_success: None,
            hidden: vec![64, 64],
            ensemble_size: 5,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.candidates == 0 {
            return Err(Error::invalid("trainer candidates must be at least 1"));
        }
        if self.total_steps == 0 || self.eval_episodes == 0 {
            return Err(Error::invalid("trainer total_steps and eval_episodes must be at least 1"));
        }
        if self.eval_interval > 0 && self.val_episodes == 0 {
            return Err(Error::invalid("trainer val_episodes must be at least 1 when eval_interval is set"));
        }
        if self.update_period == Some(0) {
            return Err(Error::invalid("trainer update_period must be at least 1"));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) || self.ensemble_size == 0 {
            return Err(Error::invalid("trainer hidden sizes and ensemble_size must be positive"));
        }
        if let Some(s) = self.early_stop_success {
            if !(0.0..=1.0).contains(&s) {
                return Err(Error::invalid("trainer early_stop_success must lie in [0, 1]"));
            }
        }
        Ok(())
    }

    pub fn period(&self, mode: Mode, ppo: &PpoConfig) -> usize {
        self.update_period.unwrap_or(match mode {
            Mode::PpoMppi => (ppo.n_steps / self.candidates).max(1),
            Mode::PpoBaseline => ppo.n_steps,
        })
    }
}

/// One row of `metrics.csv`; cells that do not apply to the row kind are empty.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsRow {
    pub kind: &'static str,
    pub step: usize,
    pub episode: usize,
    pub reward: Option<f64>,
    pub length: Option<usize>,
    pub success: Option<f64>,
    pub danger_steps: Option<f64>,
    pub rho: Option<f64>,
    pub sigma2: Option<f64>,
    pub n_real: Option<usize>,
    pub n_virtual: Option<usize>,
    pub actor_loss: Option<f64>,
    pub value_loss: Option<f64>,
    pub entropy: Option<f64>,
}

pub const METRICS_HEADER: [&str; 14] = [
    "kind",
    "step",
    "episode",
    "reward",
    "length",
    "success",
    "danger_steps",
    "rho",
    "sigma2",
    "n_real",
    "n_virtual",
    "actor_loss",
    "value_loss",
    "entropy",
];

impl MetricsRow {
    fn cells(&self) -> Vec<String> {
        let f = |v: Option<f64>| v.map(sig9).unwrap_or_default();
        let n = |v: Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
        vec![
            self.kind.to_string(),
            self.step.to_string(),
            self.episode.to_string(),
            f(self.reward),
            n(self.length),
            f(self.success),
            f(self.danger_steps),
            f(self.rho),
            f(self.sigma2),
            n(self.n_real),
            n(self.n_virtual),
            f(self.actor_loss),
            f(self.value_loss),
            f(self.entropy),
        ]
    }
}

/// One evaluation episode.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalRow {
    pub episode: usize,
    /// Goal reached (Acrobot), safe landing (Lander) or finish (Racing).
    pub success: bool,
    pub steps: usize,
    pub reward: f64,
    pub dist_to_goal: f64,
    pub danger_steps: usize,
    pub collision: bool,
    pub off_track: bool,
    pub failure: bool,
}

pub const EVAL_HEADER: [&str; 9] =
    ["episode", "success", "steps", "reward", "dist_to_goal", "danger_steps", "collision", "off_track", "failure"];

impl EvalRow {
    fn cells(&self) -> Vec<String> {
        let b = |x: bool| u8::from(x).to_string();
        vec![
            self.episode.to_string(),
            b(self.success),
            self.steps.to_string(),
            sig9(self.reward),
            sig9(self.dist_to_goal),
            self.danger_steps.to_string(),
            b(self.collision),
            b(self.off_track),
            b(self.failure),
        ]
    }
}

/// Success rate and mean return of a set of evaluation episodes.
pub fn eval_summary(rows: &[EvalRow]) -> (f64, f64) {
    let n = rows.len().max(1) as f64;
    let s = rows.iter().filter(|r| r.success).count() as f64 / n;
    let r = rows.iter().map(|r| r.reward).sum::<f64>() / n;
    (s, r)
}

pub fn write_metrics(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    write_rows(path, &METRICS_HEADER, rows.iter().map(MetricsRow::cells))
}

pub fn write_eval(path: &Path, rows: &[EvalRow]) -> Result<()> {
    write_rows(path, &EVAL_HEADER, rows.iter().map(EvalRow::cells))
}

fn write_rows(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let csv_err = |e: csv::Error| Error::Csv { path: path.to_path_buf(), msg: e.to_string() };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(&r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// What one real step produced.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub outcome: StepOutcome,
    /// Index of the executed candidate.
    pub chosen: usize,
    pub n_virtual: usize,
}

/// Policy-side dimensions for an environment under a mode and cost form.
pub fn policy_action_dim(env: &dyn Environment, mode: Mode, cost: &CostSpec) -> usize {
    match mode {
        Mode::PpoBaseline => env.spec().control_dim(),
        Mode::PpoMppi => action_dim(env.model(), cost.form),
    }
}

/// Fresh policy and value ensemble for a run seed.
pub fn init_networks(env: &dyn Environment, cfg: &RunConfig, seed: u64) -> (PolicyNet, ValueEnsemble) {
    let spec = env.spec();
    let norm = ObsNormalizer::from_bounds(&spec.obs_low, &spec.obs_high);
    let mut rng = RngStream::new(seed, StreamId::Init);
    let adim = policy_action_dim(env, cfg.mode, &cfg.cost());
    let policy = PolicyNet::new(norm.clone(), adim, &cfg.trainer.hidden, &mut rng);
    let critic = ValueEnsemble::new(norm, cfg.trainer.ensemble_size, &cfg.trainer.hidden, seed);
    (policy, critic)
}

/// Per-seed training state.
pub struct Trainer {
    pub cfg: RunConfig,
    pub seed: u64,
    pub env: Box<dyn Environment>,
    pub agent: Agent,
    pub planner: Option<Planner>,
    pub cost: CostSpec,
    pub influence: InfluenceState,
    pub buffers: RolloutBuffers,
    policy_rng: RngStream,
    mppi_rng: RngStream,
    env_rng: RngStream,
    selection_rng: RngStream,
    minibatch_rng: RngStream,
}

impl Trainer {
    pub fn new(cfg: &RunConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let env = make_env(cfg.env, cfg.track_file.as_deref())?;
        let (policy, critic) = init_networks(env.as_ref(), cfg, seed);
        let cost = cfg.cost();
        let spec = env.spec();
        let (planner, influence_cfg, m, h) = match cfg.mode {
            Mode::PpoMppi => {
                let mppi = cfg.mppi();
                let h = mppi.horizon;
                let p = Planner::new(mppi, spec.control_low.clone(), spec.control_high.clone())?;
                (Some(p), cfg.rho.clone(), cfg.trainer.candidates, h)
            }
            // plain PPO: no virtual data and an unscaled real loss
            Mode::PpoBaseline => {
                (None, InfluenceConfig { rho0: 0.0, mode: InfluenceMode::Fixed, ..cfg.rho.clone() }, 1, 0)
            }
        };
        let dims = BufferDims { obs: spec.obs_dim(), action: policy.action_dim(), control: spec.control_dim() };
        let period = cfg.trainer.period(cfg.mode, &cfg.ppo);
        Ok(Self {
            cfg: cfg.clone(),
            seed,
            agent: Agent::new(policy, critic, cfg.ppo.lr),
            planner,
            cost,
            influence: InfluenceState::new(&influence_cfg)?,
            buffers: RolloutBuffers::new(dims, period, (m - 1) * h),
            env,
            policy_rng: RngStream::new(seed, StreamId::Policy),
            mppi_rng: RngStream::new(seed, StreamId::MppiNoise),
            env_rng: RngStream::new(seed, StreamId::EnvNoise),
            selection_rng: RngStream::new(seed, StreamId::Selection),
            minibatch_rng: RngStream::new(seed, StreamId::Minibatch),
        })
    }

    pub fn reset_episode(&mut self) -> (crate::envs::EnvState, Vec<f64>) {
        if let Some(p) = &mut self.planner {
            p.reset();
        }
        crate::envs::env_reset(self.env.as_ref(), &mut self.env_rng)
    }

    /// Samples, plans, executes one candidate and records real and virtual data.
    pub fn collect_step(&mut self, state: &crate::envs::EnvState, obs: &[f64]) -> Result<StepRecord> {
        let Some(planner) = &mut self.planner else {
            let s = self.agent.policy.sample(obs, &mut self.policy_rng)?;
            let u = self.env.spec().rescale_to_controls(&s.action);
            let outcome = self.env.step(state, &u);
            self.buffers.push(real_transition(obs, s.raw, u, s.log_prob, &outcome))?;
            return Ok(StepRecord { outcome, chosen: 0, n_virtual: 0 });
        };
        let m = self.cfg.trainer.candidates;
        let samples =
            (0..m).map(|_| self.agent.policy.sample(obs, &mut self.policy_rng)).collect::<Result<Vec<_>>>()?;
        let actions: Vec<Vec<f64>> = samples.iter().map(|s| s.action.clone()).collect();
        let model = self.env.model();
        let x_t = self.env.model_state(state);
        let critic = self.cost.form.uses_value().then_some(&self.agent.critic);
        let plans = planner.plan(model, &self.cost, critic, &x_t, &actions, &mut self.mppi_rng)?;
        let chosen = self.selection_rng.index(m);
        let u = plans[chosen].first_control(planner.control_dim()).to_vec();
        planner.warm_start(&plans[chosen]);

        let outcome = self.env.step(state, &u);
        let chosen_sample = &samples[chosen];
        self.buffers.push(real_transition(obs, chosen_sample.raw.clone(), u, chosen_sample.log_prob, &outcome))?;

        let mut n_virtual = 0;
        for (i, (plan, sample)) in plans.iter().zip(&samples).enumerate() {
            if i == chosen || plan.diverged {
                continue;
            }
            for v in virtual_transitions(model, &self.agent, &self.cfg.ppo, plan, &sample.raw)? {
                self.buffers.push(v)?;
                n_virtual += 1;
            }
        }
        Ok(StepRecord { outcome, chosen, n_virtual })
    }

    /// Runs one update on the buffered data and clears the buffers.
    pub fn update(&mut self) -> Result<UpdateStats> {
        let real = prepare_real(&self.buffers, &self.agent.critic, &self.cfg.ppo)?;
        let virt = prepare_virtual(&self.buffers, &self.agent.critic)?;
        let stats = self.agent.update(&real, &virt, &mut self.influence, &self.cfg.ppo, &mut self.minibatch_rng)?;
        self.buffers.clear();
        Ok(stats)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint { seed: self.seed, policy: self.agent.policy.clone(), critic: self.agent.critic.clone() }
    }
}

fn real_transition(obs: &[f64], raw: Vec<f64>, u: Vec<f64>, log_pi: f64, o: &StepOutcome) -> Transition {
    Transition {
        s_t: obs.to_vec(),
        a_t: raw,
        u_t: u,
        r_t: o.reward,
        s_next: o.obs.clone(),
        done: o.done,
        truncated: o.truncated && !o.done,
        log_pi_old: log_pi,
    }
}

/// Per-step virtual transitions of an unselected plan, with GAE value targets
/// under the current ensemble mean, truncated at the first model terminal.
pub fn virtual_transitions(
    model: &dyn crate::envs::ApproxModel,
    agent: &Agent,
    ppo: &PpoConfig,
    plan: &crate::mppi::CandidatePlan,
    raw: &[f64],
) -> Result<Vec<VirtualTransition>> {
    let cd = model.control_dim();
    let horizon = plan.rewards.len();
    let len = plan.terminals.iter().position(|&t| t).map_or(horizon, |i| i + 1);
    if len == 0 || plan.states.len() < len + 1 {
        return Ok(Vec::new());
    }
    let obs: Vec<Vec<f64>> = plan.states[..=len].iter().map(|x| model.psi(x)).collect();
    let values = obs[..len].iter().map(|s| agent.critic.mean_value(s)).collect::<Result<Vec<_>>>()?;
    let dones: Vec<bool> = plan.terminals[..len].to_vec();
    let bootstrap = if dones[len - 1] { 0.0 } else { agent.critic.mean_value(&obs[len])? };
    let (_, targets) = compute_gae(&plan.rewards[..len], &values, &dones, ppo.gamma, ppo.gae_lambda, bootstrap)?;
    (0..len)
        .map(|t| {
            Ok(VirtualTransition {
                step: Transition {
                    s_t: obs[t].clone(),
                    a_t: raw.to_vec(),
                    u_t: plan.controls[t * cd..(t + 1) * cd].to_vec(),
                    r_t: plan.rewards[t],
                    s_next: obs[t + 1].clone(),
                    done: dones[t],
                    truncated: false,
                    log_pi_old: agent.policy.log_prob_raw(&obs[t], raw)?,
                },
                v_target: targets[t],
            })
        })
        .collect()
}

/// Result of a training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub metrics: Vec<MetricsRow>,
    pub eval: Vec<EvalRow>,
    /// Parameters used for the final evaluation.
    pub checkpoint: Checkpoint,
    pub steps: usize,
    pub episodes: usize,
}

/// Trains one seed. With `out`, writes `metrics.csv`, `eval.csv` and
/// `checkpoint.bin` there; metrics gathered so far are written on failure.
pub fn train(cfg: &RunConfig, seed: u64, out: Option<&Path>) -> Result<TrainOutcome> {
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
    }
    let mut metrics = Vec::new();
    let result = train_inner(cfg, seed, &mut metrics);
    if let Some(dir) = out {
        write_metrics(&dir.join("metrics.csv"), &metrics)?;
        if let Ok(o) = &result {
            write_eval(&dir.join("eval.csv"), &o.eval)?;
            save_checkpoint(&dir.join("checkpoint.bin"), &o.checkpoint)?;
        }
    }
    result.map(|mut o| {
        o.metrics = metrics;
        o
    })
}

fn train_inner(cfg: &RunConfig, seed: u64, metrics: &mut Vec<MetricsRow>) -> Result<TrainOutcome> {
    let mut tr = Trainer::new(cfg, seed)?;
    let tc = cfg.trainer.clone();
    let (mut state, mut obs) = tr.reset_episode();
    let (mut ep_reward, mut ep_len, mut ep_danger) = (0.0, 0usize, 0usize);
    let mut episode = 0;
    let mut step = 0;
    let mut best: Option<((f64, f64), Checkpoint)> = None;

    while step < tc.total_steps {
        let rec = tr.collect_step(&state, &obs)?;
        step += 1;
        let o = rec.outcome;
        ep_reward += o.reward;
        ep_len += 1;
        ep_danger += usize::from(o.info.in_danger);
        if o.done || o.truncated {
            metrics.push(MetricsRow {
                kind: "episode",
                step,
                episode,
                reward: Some(ep_reward),
                length: Some(ep_len),
                success: Some(f64::from(u8::from(o.info.success))),
                danger_steps: Some(ep_danger as f64),
                ..Default::default()
            });
            episode += 1;
            (ep_reward, ep_len, ep_danger) = (0.0, 0, 0);
            (state, obs) = tr.reset_episode();
        } else {
            (state, obs) = (o.state, o.obs);
        }

        if tr.buffers.is_full() {
            let (n_real, n_virtual) = tr.buffers.sizes();
            let s = tr.update()?;
            metrics.push(MetricsRow {
                kind: "update",
                step,
                episode,
                rho: Some(s.rho),
                sigma2: Some(s.sigma2_bar),
                n_real: Some(n_real),
                n_virtual: Some(n_virtual),
                actor_loss: Some(s.actor_loss),
                value_loss: Some(s.value_loss),
                entropy: Some(s.entropy),
                ..Default::default()
            });
        }

        let last = step == tc.total_steps;
        if tc.eval_interval > 0 && (step % tc.eval_interval == 0 || last) {
            let ck = tr.checkpoint();
            let rows = evaluate(cfg, &ck, tc.val_episodes, seed, EvalStreams::Validation)?;
            let (success, reward) = eval_summary(&rows);
            info!("seed {seed} step {step}: validation success {success:.3} reward {reward:.3}");
            metrics.push(MetricsRow {
                kind: "eval",
                step,
                episode,
                reward: Some(reward),
                success: Some(success),
                rho: Some(tr.influence.rho),
                ..Default::default()
            });
            if best.as_ref().map_or(true, |(score, _)| (success, reward) > *score) {
                best = Some(((success, reward), ck));
            }
            if tc.early_stop_success.is_some_and(|t| success >= t) {
                break;
            }
        }
    }

    let checkpoint = best.map(|(_, ck)| ck).unwrap_or_else(|| tr.checkpoint());
    let eval = evaluate(cfg, &checkpoint, tc.eval_episodes, seed, EvalStreams::Final)?;
    Ok(TrainOutcome { metrics: Vec::new(), eval, checkpoint, steps: step, episodes: episode })
}

/// Which random streams an evaluation draws from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalStreams {
    /// Held-out streams used for model selection during training.
    Validation,
    /// Streams reserved for the reported evaluation.
    Final,
}

/// Deterministic evaluation: the policy mean action, and in planner mode a
/// single MPPI candidate.
pub fn evaluate(
    cfg: &RunConfig,
    ck: &Checkpoint,
    episodes: usize,
    seed: u64,
    streams: EvalStreams,
) -> Result<Vec<EvalRow>> {
    let env = make_env(cfg.env, cfg.track_file.as_deref())?;
    let spec = env.spec();
    let expected = policy_action_dim(env.as_ref(), cfg.mode, &cfg.cost());
    if ck.policy.action_dim() != expected || ck.policy.obs_dim() != spec.obs_dim() {
        return Err(Error::Checkpoint(format!(
            "checkpoint policy is {}->{}, run config needs {}->{}",
            ck.policy.obs_dim(),
            ck.policy.action_dim(),
            spec.obs_dim(),
            expected
        )));
    }
    let (mut env_rng, mut mppi_rng) = match streams {
        EvalStreams::Validation => {
            (RngStream::with_raw_stream(seed, VAL_ENV_STREAM), RngStream::with_raw_stream(seed, VAL_MPPI_STREAM))
        }
        EvalStreams::Final => (RngStream::new(seed, StreamId::EvalEnv), RngStream::new(seed, StreamId::EvalMppi)),
    };
    let cost = cfg.cost();
    let critic = cost.form.uses_value().then_some(&ck.critic);
    let mut planner = match cfg.mode {
        Mode::PpoMppi => Some(Planner::new(cfg.mppi(), spec.control_low.clone(), spec.control_high.clone())?),
        Mode::PpoBaseline => None,
    };
    let mut rows = Vec::with_capacity(episodes);
    for episode in 0..episodes {
        let (mut state, mut obs) = crate::envs::env_reset(env.as_ref(), &mut env_rng);
        if let Some(p) = &mut planner {
            p.reset();
        }
        let mut row = EvalRow { episode, ..Default::default() };
        loop {
            let a = ck.policy.mean_action(&obs)?;
            let u = match &mut planner {
                Some(p) => {
                    let x = env.model_state(&state);
                    let plans = p.plan(env.model(), &cost, critic, &x, &[a], &mut mppi_rng)?;
                    p.warm_start(&plans[0]);
                    plans[0].first_control(p.control_dim()).to_vec()
                }
                None => spec.rescale_to_controls(&a),
            };
            let o = env.step(&state, &u);
            row.steps += 1;
            row.reward += o.reward;
            row.danger_steps += usize::from(o.info.in_danger);
            if o.done || o.truncated {
                row.success = o.info.success;
                row.collision = o.info.collision;
                row.off_track = o.info.off_track;
                row.failure = o.info.failure;
                row.dist_to_goal = env.dist_to_goal(&o.state);
                break;
            }
            (state, obs) = (o.state, o.obs);
        }
        rows.push(row);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config_str;

    fn small(mode: &str, m: usize, h: usize) -> RunConfig {
        let text = format!(
            "mode = \"{mode}\"\ntrainer.candidates = {m}\ntrainer.total_steps = 200\ntrainer.eval_episodes = 2\n\
             trainer.hidden = [16, 16]\nmppi.horizon = {h}\nmppi.samples = 20\nppo.n_steps = 64\nppo.epochs = 2\n"
        );
        parse_config_str(&text).unwrap()
    }

    #[test]
    fn one_step_counts() {
        let cfg = small("ppo-mppi", 3, 10);
        let mut tr = Trainer::new(&cfg, 1).unwrap();
        let (s, o) = tr.reset_episode();
        let rec = tr.collect_step(&s, &o).unwrap();
        assert!(!rec.outcome.done);
        assert_eq!(tr.buffers.sizes(), (1, 20));
        assert_eq!(rec.n_virtual, 20);
    }

    #[test]
    fn single_candidate_has_no_virtual_data() {
        let cfg = small("ppo-mppi", 1, 5);
        let mut tr = Trainer::new(&cfg, 2).unwrap();
        let (mut s, mut o) = tr.reset_episode();
        for _ in 0..20 {
            let rec = tr.collect_step(&s, &o).unwrap();
            (s, o) = (rec.outcome.state, rec.outcome.obs);
        }
        assert_eq!(tr.buffers.sizes(), (20, 0));
    }

    #[test]
    fn stored_log_probs_give_unit_ratios() {
        let cfg = small("ppo-mppi", 4, 5);
        let mut tr = Trainer::new(&cfg, 3).unwrap();
        let (mut s, mut o) = tr.reset_episode();
        for _ in 0..5 {
            let rec = tr.collect_step(&s, &o).unwrap();
            (s, o) = (rec.outcome.state, rec.outcome.obs);
        }
        let p = &tr.agent.policy;
        let all = tr.buffers.d_rl.iter().chain(tr.buffers.d_mppi.iter().map(|v| &v.step));
        for t in all {
            let ratio = (p.log_prob_raw(&t.s_t, &t.a_t).unwrap() - t.log_pi_old).exp();
            assert!((ratio - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn selection_is_uniform() {
        let mut rng = RngStream::new(9, StreamId::Selection);
        let mut counts = [0usize; 4];
        for _ in 0..10_000 {
            counts[rng.index(4)] += 1;
        }
        assert!(counts.iter().all(|&c| (2350..=2650).contains(&c)), "{counts:?}");
    }

    #[test]
    fn training_is_deterministic() {
        let cfg = small("ppo-mppi", 2, 4);
        let a = train(&cfg, 5, None).unwrap();
        let b = train(&cfg, 5, None).unwrap();
        assert_eq!(a.metrics, b.metrics);
        assert_eq!(a.eval, b.eval);
        assert!(a.metrics.iter().any(|r| r.kind == "update"));
    }

    #[test]
    fn baseline_trains_and_evaluates() {
        let cfg = small("ppo-baseline", 4, 4);
        let out = train(&cfg, 0, None).unwrap();
        assert_eq!(out.eval.len(), 2);
        let ups: Vec<_> = out.metrics.iter().filter(|r| r.kind == "update").collect();
        assert!(!ups.is_empty());
        assert!(ups.iter().all(|r| r.n_virtual == Some(0) && r.rho == Some(0.0)));
    }

    #[test]
    fn evaluation_is_reproducible() {
        let cfg = small("ppo-mppi", 2, 4);
        let env = make_env(cfg.env, None).unwrap();
        let (policy, critic) = init_networks(env.as_ref(), &cfg, 4);
        let ck = Checkpoint { seed: 4, policy, critic };
        let a = evaluate(&cfg, &ck, 2, 4, EvalStreams::Final).unwrap();
        let b = evaluate(&cfg, &ck, 2, 4, EvalStreams::Final).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn files_are_written() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small("ppo-mppi", 2, 4);
        train(&cfg, 0, Some(dir.path())).unwrap();
        for f in ["metrics.csv", "eval.csv", "checkpoint.bin"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let t = crate::analysis::read_csv(&dir.path().join("metrics.csv")).unwrap();
        assert_eq!(t.header, METRICS_HEADER);
    }
}
