//! Benchmark environments with danger zones and their approximate planning models.

mod acrobot;
pub mod cost;
mod lander;
mod racing;
mod track;

pub use acrobot::{Acrobot, AcrobotParams};
pub use lander::{Lander, LanderModel, LanderParams};
pub use racing::{Racing, RacingModel, RacingParams};
pub use track::{Track, TrackPoint};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvKind {
    Acrobot,
    Lander,
    Racing,
}

impl std::str::FromStr for EnvKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "acrobot" => Ok(EnvKind::Acrobot),
            "lander" => Ok(EnvKind::Lander),
            "racing" => Ok(EnvKind::Racing),
            other => Err(Error::invalid(format!("unknown environment {other:?}"))),
        }
    }
}

impl std::fmt::Display for EnvKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EnvKind::Acrobot => "acrobot",
            EnvKind::Lander => "lander",
            EnvKind::Racing => "racing",
        })
    }
}

/// Axis-aligned rectangle; membership is closed-set containment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DangerZone {
    pub cx: f64,
    pub cy: f64,
    pub width: f64,
    pub height: f64,
}

impl DangerZone {
    pub fn square(cx: f64, cy: f64, side: f64) -> Self {
        Self { cx, cy, width: side, height: side }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        (x - self.cx).abs() <= 0.5 * self.width && (y - self.cy).abs() <= 0.5 * self.height
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvSpec {
    pub kind: EnvKind,
    pub obs_low: Vec<f64>,
    pub obs_high: Vec<f64>,
    pub control_low: Vec<f64>,
    pub control_high: Vec<f64>,
    pub max_steps: usize,
    /// Reward added per step inside the danger zone (negative).
    pub danger_penalty: f64,
    pub randomize_zone: bool,
}

impl EnvSpec {
    pub fn obs_dim(&self) -> usize {
        self.obs_low.len()
    }

    pub fn control_dim(&self) -> usize {
        self.control_low.len()
    }

    pub fn clamp_control(&self, u: &mut [f64]) {
        for ((x, lo), hi) in u.iter_mut().zip(&self.control_low).zip(&self.control_high) {
            *x = x.clamp(*lo, *hi);
        }
    }

    /// Maps a squashed high-level action in `(-1, 1)^n` onto the control box.
    pub fn rescale_to_controls(&self, a: &[f64]) -> Vec<f64> {
        a.iter()
            .zip(self.control_low.iter().zip(&self.control_high))
            .map(|(x, (lo, hi))| lo + 0.5 * (x + 1.0) * (hi - lo))
            .collect()
    }

    /// Euclidean diameter of the control box.
    pub fn control_diameter(&self) -> f64 {
        self.control_low.iter().zip(&self.control_high).map(|(lo, hi)| (hi - lo).powi(2)).sum::<f64>().sqrt()
    }
}

/// Physical state of a running episode; layout is environment specific.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub x: Vec<f64>,
    pub t: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepInfo {
    pub success: bool,
    pub in_danger: bool,
    pub crashed: bool,
    pub collision: bool,
    pub off_track: bool,
    /// Numerical failure (non-finite state).
    pub failure: bool,
    pub dist_to_goal: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: EnvState,
    pub obs: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub truncated: bool,
    pub info: StepInfo,
}

/// Approximate planning model `(P_hat, r_hat, psi)` over model states `x`.
///
/// Model states carry the danger-zone parameters in their trailing entries so
/// the model itself stays stateless and shareable across rollout workers.
pub trait ApproxModel: Send + Sync {
    fn state_dim(&self) -> usize;
    fn control_dim(&self) -> usize;
    fn step(&self, x: &[f64], u: &[f64]) -> Vec<f64>;
    /// Reward of the transition `x --u--> x_next`, terminal bonuses excluded.
    fn transition_reward(&self, x: &[f64], u: &[f64], x_next: &[f64]) -> f64;
    fn reward(&self, x: &[f64], u: &[f64]) -> f64 {
        let next = self.step(x, u);
        self.transition_reward(x, u, &next)
    }
    fn terminal(&self, x: &[f64]) -> bool;
    /// Interface map from model state to RL observation.
    fn psi(&self, x: &[f64]) -> Vec<f64>;
    /// Planar position tested against the danger zone.
    fn position(&self, x: &[f64]) -> (f64, f64);
    fn zone(&self, x: &[f64]) -> DangerZone;
    /// Number of tracked components and the action decoding `x*(a)`.
    fn target_dim(&self) -> usize;
    fn decode_target(&self, a: &[f64]) -> Vec<f64>;
    /// Component-wise error between the tracked state features and a target.
    fn tracking_error(&self, x: &[f64], target: &[f64]) -> Vec<f64>;
    /// Feature vector `z = [x; u]` of the quadratic cost form.
    fn quad_features(&self, x: &[f64], u: &[f64]) -> Vec<f64>;
    /// Domain-specific extra running cost.
    fn other_cost(&self, _x: &[f64], _u: &[f64], _w: &cost::CostWeights) -> f64 {
        0.0
    }
}

pub trait Environment: Send + Sync {
    fn spec(&self) -> &EnvSpec;
    fn model(&self) -> &dyn ApproxModel;
    fn reset(&self, rng: &mut RngStream) -> EnvState;
    fn step(&self, state: &EnvState, u: &[f64]) -> StepOutcome;
    fn observe(&self, state: &EnvState) -> Vec<f64>;
    /// Planner's view `x_t` of the true state.
    fn model_state(&self, state: &EnvState) -> Vec<f64>;
    /// Distance to the task goal used in evaluation reports.
    fn dist_to_goal(&self, state: &EnvState) -> f64;
}

/// Convenience wrapper returning `(state, observation)`.
pub fn env_reset(env: &dyn Environment, rng: &mut RngStream) -> (EnvState, Vec<f64>) {
    let s = env.reset(rng);
    let obs = env.observe(&s);
    (s, obs)
}

pub fn make_env(kind: EnvKind, track_file: Option<&std::path::Path>) -> Result<Box<dyn Environment>> {
    Ok(match kind {
        EnvKind::Acrobot => Box::new(Acrobot::new(AcrobotParams::default())),
        EnvKind::Lander => Box::new(Lander::new(LanderParams::default())),
        EnvKind::Racing => {
            let track = match track_file {
                Some(p) => Track::from_file(p)?,
                None => Track::default_circuit(),
            };
            Box::new(Racing::new(RacingParams::default(), track))
        }
    })
}

pub(crate) fn wrap_angle(a: f64) -> f64 {
    if a > -std::f64::consts::PI && a <= std::f64::consts::PI {
        return a;
    }
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut w = (a + std::f64::consts::PI).rem_euclid(two_pi) - std::f64::consts::PI;
    if w <= -std::f64::consts::PI {
        w += two_pi;
    }
    w
}

pub(crate) fn non_finite(x: &[f64]) -> bool {
    x.iter().any(|v| !v.is_finite())
}
