//! Two-link underactuated pendulum with a continuous torque on the elbow.
//!
//! Model state: `[theta1, theta2, dtheta1, dtheta2, x_d, y_d, s_d]`. The
//! planning model is the environment itself.

use std::f64::consts::PI;

use super::cost::CostWeights;
use super::{
    non_finite, wrap_angle, ApproxModel, DangerZone, EnvKind, EnvSpec, EnvState, Environment, StepInfo, StepOutcome,
};
use crate::rng::RngStream;

#[derive(Debug, Clone, PartialEq)]
pub struct AcrobotParams {
    pub link_length_1: f64,
    pub link_length_2: f64,
    pub link_mass_1: f64,
    pub link_mass_2: f64,
    pub link_com_1: f64,
    pub link_com_2: f64,
    pub link_moi: f64,
    pub gravity: f64,
    pub dt: f64,
    /// RK4 sub-steps per `dt`.
    pub substeps: usize,
    pub max_vel_1: f64,
    pub max_vel_2: f64,
    pub max_steps: usize,
    pub step_reward: f64,
    pub danger_penalty: f64,
    pub goal_height: f64,
    pub zone: DangerZone,
    pub init_noise: f64,
}

impl Default for AcrobotParams {
    fn default() -> Self {
        Self {
            link_length_1: 1.0,
            link_length_2: 1.0,
            link_mass_1: 1.0,
            link_mass_2: 1.0,
            link_com_1: 0.5,
            link_com_2: 0.5,
            link_moi: 1.0,
            gravity: 9.8,
            dt: 0.2,
            substeps: 1,
            max_vel_1: 4.0 * PI,
            max_vel_2: 9.0 * PI,
            max_steps: 500,
            step_reward: -1.0,
            danger_penalty: -50.0,
            goal_height: 1.0,
            zone: DangerZone::square(0.5, -1.7, 0.4),
            init_noise: 0.1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Acrobot {
    pub params: AcrobotParams,
    spec: EnvSpec,
}

impl Acrobot {
    pub fn new(params: AcrobotParams) -> Self {
        let reach = params.link_length_1 + params.link_length_2;
        let spec = EnvSpec {
            kind: EnvKind::Acrobot,
            obs_low: vec![-1.0, -1.0, -1.0, -1.0, -params.max_vel_1, -params.max_vel_2, -reach, -reach, 0.0],
            obs_high: vec![1.0, 1.0, 1.0, 1.0, params.max_vel_1, params.max_vel_2, reach, reach, reach],
            control_low: vec![-1.0],
            control_high: vec![1.0],
            max_steps: params.max_steps,
            danger_penalty: params.danger_penalty,
            randomize_zone: false,
        };
        Self { params, spec }
    }

    /// Time derivative of `[theta1, theta2, dtheta1, dtheta2]` under torque `tau`.
    fn derivs(&self, s: [f64; 4], tau: f64) -> [f64; 4] {
        let p = &self.params;
        let (m1, m2, l1, lc1, lc2, i1, i2, g) = (
            p.link_mass_1,
            p.link_mass_2,
            p.link_length_1,
            p.link_com_1,
            p.link_com_2,
            p.link_moi,
            p.link_moi,
            p.gravity,
        );
        let [t1, t2, dt1, dt2] = s;
        let d1 = m1 * lc1 * lc1 + m2 * (l1 * l1 + lc2 * lc2 + 2.0 * l1 * lc2 * t2.cos()) + i1 + i2;
        let d2 = m2 * (lc2 * lc2 + l1 * lc2 * t2.cos()) + i2;
        let phi2 = m2 * lc2 * g * (t1 + t2 - PI / 2.0).cos();
        let phi1 = -m2 * l1 * lc2 * dt2 * dt2 * t2.sin() - 2.0 * m2 * l1 * lc2 * dt2 * dt1 * t2.sin()
            + (m1 * lc1 + m2 * l1) * g * (t1 - PI / 2.0).cos()
            + phi2;
        let ddt2 =
            (tau + d2 / d1 * phi1 - m2 * l1 * lc2 * dt1 * dt1 * t2.sin() - phi2) / (m2 * lc2 * lc2 + i2 - d2 * d2 / d1);
        let ddt1 = -(d2 * ddt2 + phi1) / d1;
        [dt1, dt2, ddt1, ddt2]
    }

    fn rk4(&self, s: [f64; 4], tau: f64, h: f64) -> [f64; 4] {
        let add =
            |a: [f64; 4], k: [f64; 4], c: f64| [a[0] + c * k[0], a[1] + c * k[1], a[2] + c * k[2], a[3] + c * k[3]];
        let k1 = self.derivs(s, tau);
        let k2 = self.derivs(add(s, k1, h / 2.0), tau);
        let k3 = self.derivs(add(s, k2, h / 2.0), tau);
        let k4 = self.derivs(add(s, k3, h), tau);
        let mut out = s;
        for i in 0..4 {
            out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        out
    }

    /// Integrates one control period without angle wrapping or velocity limits.
    pub fn integrate(&self, s: [f64; 4], tau: f64) -> [f64; 4] {
        let n = self.params.substeps.max(1);
        let h = self.params.dt / n as f64;
        (0..n).fold(s, |acc, _| self.rk4(acc, tau, h))
    }

    /// Total mechanical energy with the pivot as the potential reference.
    pub fn energy(&self, s: [f64; 4]) -> f64 {
        let p = &self.params;
        let [t1, t2, dt1, dt2] = s;
        let (m1, m2, l1, lc1, lc2, i1, i2, g) = (
            p.link_mass_1,
            p.link_mass_2,
            p.link_length_1,
            p.link_com_1,
            p.link_com_2,
            p.link_moi,
            p.link_moi,
            p.gravity,
        );
        let d1 = m1 * lc1 * lc1 + m2 * (l1 * l1 + lc2 * lc2 + 2.0 * l1 * lc2 * t2.cos()) + i1 + i2;
        let d2 = m2 * (lc2 * lc2 + l1 * lc2 * t2.cos()) + i2;
        let d3 = m2 * lc2 * lc2 + i2;
        let kinetic = 0.5 * (d1 * dt1 * dt1 + 2.0 * d2 * dt1 * dt2 + d3 * dt2 * dt2);
        let potential = -m1 * g * lc1 * t1.cos() - m2 * g * (l1 * t1.cos() + lc2 * (t1 + t2).cos());
        kinetic + potential
    }

    pub fn tip(&self, x: &[f64]) -> (f64, f64) {
        let (l1, l2) = (self.params.link_length_1, self.params.link_length_2);
        let (t1, t2) = (x[0], x[1]);
        (l1 * t1.sin() + l2 * (t1 + t2).sin(), -l1 * t1.cos() - l2 * (t1 + t2).cos())
    }

    pub fn height(&self, x: &[f64]) -> f64 {
        -x[0].cos() - (x[0] + x[1]).cos()
    }

    pub fn reached_goal(&self, x: &[f64]) -> bool {
        self.height(x) > self.params.goal_height
    }

    fn zone_params(&self) -> [f64; 3] {
        let z = &self.params.zone;
        [z.cx, z.cy, z.width]
    }

    /// Reward for arriving at `x_next`: step cost plus the danger penalty.
    fn arrival_reward(&self, x_next: &[f64]) -> f64 {
        let (px, py) = self.tip(x_next);
        let mut r = self.params.step_reward;
        if self.zone(x_next).contains(px, py) {
            r += self.params.danger_penalty;
        }
        r
    }
}

impl ApproxModel for Acrobot {
    fn state_dim(&self) -> usize {
        7
    }

    fn control_dim(&self) -> usize {
        1
    }

    fn step(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let tau = u[0].clamp(-1.0, 1.0);
        let s = self.integrate([x[0], x[1], x[2], x[3]], tau);
        let mut out = Vec::with_capacity(7);
        out.push(wrap_angle(s[0]));
        out.push(wrap_angle(s[1]));
        out.push(s[2].clamp(-self.params.max_vel_1, self.params.max_vel_1));
        out.push(s[3].clamp(-self.params.max_vel_2, self.params.max_vel_2));
        out.extend_from_slice(&x[4..7]);
        out
    }

    fn transition_reward(&self, _x: &[f64], _u: &[f64], x_next: &[f64]) -> f64 {
        self.arrival_reward(x_next)
    }

    fn terminal(&self, x: &[f64]) -> bool {
        self.reached_goal(x)
    }

    fn psi(&self, x: &[f64]) -> Vec<f64> {
        vec![x[0].cos(), x[0].sin(), x[1].cos(), x[1].sin(), x[2], x[3], x[4], x[5], x[6]]
    }

    fn position(&self, x: &[f64]) -> (f64, f64) {
        self.tip(x)
    }

    fn zone(&self, x: &[f64]) -> DangerZone {
        DangerZone::square(x[4], x[5], x[6])
    }

    fn target_dim(&self) -> usize {
        2
    }

    /// Target joint angles `pi * a`.
    fn decode_target(&self, a: &[f64]) -> Vec<f64> {
        vec![PI * a[0], PI * a[1]]
    }

    fn tracking_error(&self, x: &[f64], target: &[f64]) -> Vec<f64> {
        vec![wrap_angle(x[0] - target[0]), wrap_angle(x[1] - target[1])]
    }

    fn quad_features(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        vec![x[0], x[1], x[2], x[3], u[0]]
    }

    fn other_cost(&self, _x: &[f64], _u: &[f64], _w: &CostWeights) -> f64 {
        0.0
    }
}

impl Environment for Acrobot {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn model(&self) -> &dyn ApproxModel {
        self
    }

    fn reset(&self, rng: &mut RngStream) -> EnvState {
        let n = self.params.init_noise;
        let mut x: Vec<f64> = (0..4).map(|_| rng.uniform_range(-n, n)).collect();
        x.extend_from_slice(&self.zone_params());
        EnvState { x, t: 0 }
    }

    fn step(&self, state: &EnvState, u: &[f64]) -> StepOutcome {
        let x_next = ApproxModel::step(self, &state.x, u);
        let t = state.t + 1;
        let next = EnvState { x: x_next, t };
        if non_finite(&next.x) {
            return StepOutcome {
                obs: vec![0.0; self.spec.obs_dim()],
                state: next,
                reward: self.params.step_reward,
                done: true,
                truncated: false,
                info: StepInfo { failure: true, ..Default::default() },
            };
        }
        let (px, py) = self.tip(&next.x);
        let in_danger = self.zone(&next.x).contains(px, py);
        let reward = self.arrival_reward(&next.x);
        let success = self.reached_goal(&next.x);
        let truncated = !success && t >= self.params.max_steps;
        let dist = (self.params.goal_height - self.height(&next.x)).max(0.0);
        StepOutcome {
            obs: self.psi(&next.x),
            state: next,
            reward,
            done: success || truncated,
            truncated,
            info: StepInfo { success, in_danger, dist_to_goal: dist, ..Default::default() },
        }
    }

    fn observe(&self, state: &EnvState) -> Vec<f64> {
        self.psi(&state.x)
    }

    fn model_state(&self, state: &EnvState) -> Vec<f64> {
        state.x.clone()
    }

    fn dist_to_goal(&self, state: &EnvState) -> f64 {
        (self.params.goal_height - self.height(&state.x)).max(0.0)
    }
}
