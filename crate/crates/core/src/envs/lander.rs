//! Planar lander: a rigid body with a main engine along its axis and a gated
//! lateral thruster, landing on a pad at the origin.
//!
//! Positions are kept in metres internally; observations, shaping and the
//! danger zone use coordinates normalised by `scale`, with the pad at the
//! resting pose `(0, 0)`.
//!
//! True state: `[x, y, vx, vy, phi, omega, zone_cx, zone_cy]` (metres, body
//! centre). The planning model uses the same layout but a simplified update.

use super::cost::{cost_other_lander, CostWeights};
use super::{non_finite, ApproxModel, DangerZone, EnvKind, EnvSpec, EnvState, Environment, StepInfo, StepOutcome};
use crate::rng::RngStream;

#[derive(Debug, Clone, PartialEq)]
pub struct LanderParams {
    pub dt: f64,
    pub gravity: f64,
    /// Main-engine acceleration at full throttle.
    pub main_accel: f64,
    /// Lateral-thruster acceleration at full throttle.
    pub side_accel: f64,
    /// Angular acceleration produced by the lateral thruster.
    pub side_torque: f64,
    /// Angular acceleration produced by an off-axis main engine per unit tilt.
    pub main_torque_coupling: f64,
    pub angular_damping: f64,
    /// Body-frame leg anchors `(±leg_dx, -leg_dy)`.
    pub leg_dx: f64,
    pub leg_dy: f64,
    /// Length unit of the normalised frame.
    pub scale: f64,
    pub start_height: f64,
    pub start_jitter: f64,
    pub max_steps: usize,
    pub crash_speed: f64,
    pub crash_angle: f64,
    pub rest_speed: f64,
    pub contact_tol: f64,
    pub main_cost: f64,
    pub side_cost: f64,
    pub leg_bonus: f64,
    pub danger_penalty: f64,
    pub crash_reward: f64,
    pub land_reward: f64,
    pub shaping: f64,
    pub zone_width: f64,
    pub zone_height: f64,
    /// Spawn rectangle of the zone centre, normalised `[x_lo, x_hi, y_lo, y_hi]`.
    pub zone_spawn: [f64; 4],
    /// Fixed gains of the planning model.
    pub model_side_gain: f64,
    pub model_turn_rate: f64,
}

impl Default for LanderParams {
    fn default() -> Self {
        Self {
            dt: 0.05,
            gravity: 10.0,
            main_accel: 15.0,
            side_accel: 2.0,
            side_torque: 3.0,
            main_torque_coupling: 0.5,
            angular_damping: 0.5,
            leg_dx: 0.6,
            leg_dy: 0.5,
            scale: 10.0,
            start_height: 14.0,
            start_jitter: 1.5,
            max_steps: 400,
            crash_speed: 3.0,
            crash_angle: 0.5,
            rest_speed: 0.05,
            contact_tol: 0.02,
            main_cost: 0.3,
            side_cost: 0.03,
            leg_bonus: 10.0,
            danger_penalty: -5.0,
            crash_reward: -100.0,
            land_reward: 100.0,
            shaping: 100.0,
            zone_width: 0.3,
            zone_height: 0.2,
            zone_spawn: [-0.5, 0.5, 0.4, 0.9],
            model_side_gain: 2.0,
            model_turn_rate: 1.0,
        }
    }
}

/// Engine commands decoded from a control in `[-1, 1]^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Engines {
    main: f64,
    side: f64,
}

fn engines(u: &[f64]) -> Engines {
    let m = u[0].clamp(-1.0, 1.0);
    let s = u[1].clamp(-1.0, 1.0);
    let main = if m > 0.0 { 0.5 * (m + 1.0) } else { 0.0 };
    let side = if s.abs() > 0.5 { s.signum() * s.abs() } else { 0.0 };
    Engines { main, side }
}

/// Geometry and reward logic shared by the environment and its planning model.
#[derive(Debug, Clone)]
struct Common {
    p: LanderParams,
}

impl Common {
    fn leg_heights(&self, x: &[f64]) -> [f64; 2] {
        let (y, phi) = (x[1], x[4]);
        let (s, c) = phi.sin_cos();
        let left = y + (-self.p.leg_dx) * s - self.p.leg_dy * c;
        let right = y + self.p.leg_dx * s - self.p.leg_dy * c;
        [left, right]
    }

    fn legs(&self, x: &[f64]) -> [bool; 2] {
        let h = self.leg_heights(x);
        [h[0] <= self.p.contact_tol, h[1] <= self.p.contact_tol]
    }

    /// Normalised position relative to the resting pose on the pad.
    fn norm_pos(&self, x: &[f64]) -> (f64, f64) {
        (x[0] / self.p.scale, (x[1] - self.p.leg_dy) / self.p.scale)
    }

    fn zone(&self, x: &[f64]) -> DangerZone {
        DangerZone { cx: x[6], cy: x[7], width: self.p.zone_width, height: self.p.zone_height }
    }

    fn in_danger(&self, x: &[f64]) -> bool {
        let (px, py) = self.norm_pos(x);
        self.zone(x).contains(px, py)
    }

    fn potential(&self, x: &[f64]) -> f64 {
        let (px, py) = self.norm_pos(x);
        let (vx, vy) = (x[2] / self.p.scale, x[3] / self.p.scale);
        let legs = self.legs(x);
        let k = self.p.shaping;
        -k * px.hypot(py) - k * vx.hypot(vy) - k * x[4].abs()
            + self.p.leg_bonus * (legs[0] as u8 as f64 + legs[1] as u8 as f64)
    }

    /// Per-step reward without terminal bonuses.
    fn shaped_reward(&self, x: &[f64], u: &[f64], x_next: &[f64]) -> f64 {
        let e = engines(u);
        let mut r = self.potential(x_next) - self.potential(x);
        if e.main > 0.0 {
            r -= self.p.main_cost;
        }
        if e.side != 0.0 {
            r -= self.p.side_cost;
        }
        if self.in_danger(x_next) {
            r += self.p.danger_penalty;
        }
        r
    }

    fn psi(&self, x: &[f64]) -> Vec<f64> {
        let (px, py) = self.norm_pos(x);
        let legs = self.legs(x);
        vec![
            px,
            py,
            x[2] / self.p.scale,
            x[3] / self.p.scale,
            x[4],
            x[5],
            legs[0] as u8 as f64,
            legs[1] as u8 as f64,
            x[6],
            x[7],
            self.p.zone_width,
            self.p.zone_height,
        ]
    }

    /// Lifts the body so the lowest leg rests on the ground, killing downward speed.
    fn ground_clamp(&self, x: &mut [f64]) -> bool {
        let low = self.leg_heights(x).iter().cloned().fold(f64::INFINITY, f64::min);
        if low < 0.0 {
            x[1] -= low;
            x[3] = x[3].max(0.0);
            true
        } else {
            false
        }
    }
}

#[derive(Debug, Clone)]
pub struct Lander {
    common: Common,
    model: LanderModel,
    spec: EnvSpec,
}

/// Fixed-gain planning model: thrust follows the current attitude, the
/// lateral thruster drives the attitude directly and there is no torque
/// coupling or contact dynamics beyond a ground clamp.
#[derive(Debug, Clone)]
pub struct LanderModel {
    common: Common,
}

impl Lander {
    pub fn new(params: LanderParams) -> Self {
        let inf = f64::INFINITY;
        let spec = EnvSpec {
            kind: EnvKind::Lander,
            obs_low: vec![-1.0, -0.1, -inf, -inf, -inf, -inf, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0],
            obs_high: vec![1.0, 1.6, inf, inf, inf, inf, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0],
            control_low: vec![-1.0, -1.0],
            control_high: vec![1.0, 1.0],
            max_steps: params.max_steps,
            danger_penalty: params.danger_penalty,
            randomize_zone: true,
        };
        let common = Common { p: params };
        Self { model: LanderModel { common: common.clone() }, common, spec }
    }

    pub fn params(&self) -> &LanderParams {
        &self.common.p
    }

    /// Shaping potential of a state.
    pub fn potential(&self, x: &[f64]) -> f64 {
        self.common.potential(x)
    }

    /// Rigid-body update with contact handling. Returns the next state and
    /// whether the touchdown was a crash.
    fn physics(&self, x: &[f64], u: &[f64]) -> (Vec<f64>, bool) {
        let p = &self.common.p;
        let e = engines(u);
        let (s, c) = x[4].sin_cos();
        // body up axis (-sin, cos), body right axis (cos, sin)
        let ax = -s * p.main_accel * e.main + c * p.side_accel * e.side;
        let ay = c * p.main_accel * e.main + s * p.side_accel * e.side - p.gravity;
        let alpha = -p.side_torque * e.side - p.main_torque_coupling * e.main * x[4] - p.angular_damping * x[5];
        let mut n = x.to_vec();
        n[2] = x[2] + p.dt * ax;
        n[3] = x[3] + p.dt * ay;
        n[5] = x[5] + p.dt * alpha;
        n[0] = x[0] + p.dt * n[2];
        n[1] = x[1] + p.dt * n[3];
        n[4] = x[4] + p.dt * n[5];
        let was_down = self.common.legs(x).iter().any(|&b| b);
        let impact_speed = -n[3];
        let touching = self.common.leg_heights(&n).iter().any(|&h| h < 0.0);
        let mut crashed = false;
        if touching {
            if !was_down && (impact_speed > p.crash_speed || n[4].abs() > p.crash_angle) {
                crashed = true;
            }
            self.common.ground_clamp(&mut n);
            // settle onto both legs with friction
            n[2] *= 0.8;
            n[5] *= 0.5;
            n[4] *= 0.7;
            self.common.ground_clamp(&mut n);
            let low = self.common.leg_heights(&n).iter().cloned().fold(f64::INFINITY, f64::min);
            n[1] -= low;
        }
        if n[4].abs() > std::f64::consts::FRAC_PI_2 && self.common.legs(&n).iter().any(|&b| b) {
            crashed = true;
        }
        (n, crashed)
    }
}

impl LanderModel {
    pub fn params(&self) -> &LanderParams {
        &self.common.p
    }
}

impl ApproxModel for LanderModel {
    fn state_dim(&self) -> usize {
        8
    }

    fn control_dim(&self) -> usize {
        2
    }

    fn step(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let p = &self.common.p;
        let e = engines(u);
        let mut n = x.to_vec();
        let (s, c) = x[4].sin_cos();
        n[2] = x[2] + p.dt * (-s * p.main_accel * e.main + p.model_side_gain * e.side);
        n[3] = x[3] + p.dt * (c * p.main_accel * e.main - p.gravity);
        n[5] = -p.model_turn_rate * e.side;
        n[0] = x[0] + p.dt * n[2];
        n[1] = x[1] + p.dt * n[3];
        n[4] = x[4] + p.dt * n[5];
        self.common.ground_clamp(&mut n);
        n
    }

    fn transition_reward(&self, x: &[f64], u: &[f64], x_next: &[f64]) -> f64 {
        self.common.shaped_reward(x, u, x_next)
    }

    fn terminal(&self, _x: &[f64]) -> bool {
        false
    }

    fn psi(&self, x: &[f64]) -> Vec<f64> {
        self.common.psi(x)
    }

    fn position(&self, x: &[f64]) -> (f64, f64) {
        self.common.norm_pos(x)
    }

    fn zone(&self, x: &[f64]) -> DangerZone {
        self.common.zone(x)
    }

    fn target_dim(&self) -> usize {
        2
    }

    /// Target normalised velocities `(vx*, vy*)`.
    fn decode_target(&self, a: &[f64]) -> Vec<f64> {
        vec![a[0], a[1]]
    }

    fn tracking_error(&self, x: &[f64], target: &[f64]) -> Vec<f64> {
        vec![x[2] / self.common.p.scale - target[0], x[3] / self.common.p.scale - target[1]]
    }

    fn quad_features(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let (px, py) = self.common.norm_pos(x);
        vec![px, py, x[2] / self.common.p.scale, x[3] / self.common.p.scale, x[4], x[5], u[0], u[1]]
    }

    fn other_cost(&self, x: &[f64], u: &[f64], w: &CostWeights) -> f64 {
        cost_other_lander(self.common.norm_pos(x).1, u, w.w_y, w.w_act)
    }
}

impl Environment for Lander {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn model(&self) -> &dyn ApproxModel {
        &self.model
    }

    fn reset(&self, rng: &mut RngStream) -> EnvState {
        let p = &self.common.p;
        let x0 = rng.uniform_range(-p.start_jitter, p.start_jitter);
        let vx = rng.uniform_range(-1.0, 1.0);
        let vy = rng.uniform_range(-1.0, 0.0);
        let [xl, xh, yl, yh] = p.zone_spawn;
        let zx = rng.uniform_range(xl, xh);
        let zy = rng.uniform_range(yl, yh);
        EnvState { x: vec![x0, p.start_height, vx, vy, 0.0, 0.0, zx, zy], t: 0 }
    }

    fn step(&self, state: &EnvState, u: &[f64]) -> StepOutcome {
        let p = &self.common.p;
        let (x_next, crashed) = self.physics(&state.x, u);
        let t = state.t + 1;
        if non_finite(&x_next) {
            return StepOutcome {
                obs: vec![0.0; self.spec.obs_dim()],
                state: EnvState { x: x_next, t },
                reward: p.crash_reward,
                done: true,
                truncated: false,
                info: StepInfo { failure: true, crashed: true, ..Default::default() },
            };
        }
        let mut reward = self.common.shaped_reward(&state.x, u, &x_next);
        let (px, py) = self.common.norm_pos(&x_next);
        let out_of_bounds = px.abs() >= 1.0;
        let legs = self.common.legs(&x_next);
        let speed = x_next[2].hypot(x_next[3]);
        let at_rest = legs[0] && legs[1] && speed < p.rest_speed && x_next[5].abs() < p.rest_speed;
        let mut info =
            StepInfo { in_danger: self.common.in_danger(&x_next), dist_to_goal: px.hypot(py), ..Default::default() };
        let mut done = false;
        if crashed || out_of_bounds {
            reward += p.crash_reward;
            info.crashed = true;
            info.failure = true;
            done = true;
        } else if at_rest {
            reward += p.land_reward;
            info.success = true;
            done = true;
        }
        let truncated = !done && t >= p.max_steps;
        StepOutcome {
            obs: self.common.psi(&x_next),
            state: EnvState { x: x_next, t },
            reward,
            done: done || truncated,
            truncated,
            info,
        }
    }

    fn observe(&self, state: &EnvState) -> Vec<f64> {
        self.common.psi(&state.x)
    }

    fn model_state(&self, state: &EnvState) -> Vec<f64> {
        state.x.clone()
    }

    fn dist_to_goal(&self, state: &EnvState) -> f64 {
        let (px, py) = self.common.norm_pos(&state.x);
        px.hypot(py)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamId;

    fn env() -> Lander {
        Lander::new(LanderParams::default())
    }

    fn resting(zone: (f64, f64)) -> Vec<f64> {
        vec![0.0, 0.5, 0.0, 0.0, 0.0, 0.0, zone.0, zone.1]
    }

    #[test]
    fn resting_on_pad_has_both_leg_bonuses() {
        let e = env();
        let x = resting((0.0, 0.7));
        assert_eq!(e.common.legs(&x), [true, true]);
        assert_eq!(e.potential(&x), 20.0);
        let out = Environment::step(&e, &EnvState { x, t: 0 }, &[-1.0, 0.0]);
        assert!(out.info.success);
        assert_eq!(out.obs[6..8], [1.0, 1.0]);
    }

    #[test]
    fn legs_in_air_have_no_bonus() {
        let e = env();
        let x = vec![0.0, 5.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.7];
        assert_eq!(e.potential(&x), -50.0);
    }

    #[test]
    fn engine_costs() {
        let e = env();
        let x = vec![0.0, 8.0, 0.0, 0.0, 0.0, 0.0, 0.9, 0.2];
        let m = e.model();
        let base = {
            let xn = m.step(&x, &[0.0, 0.0]);
            m.transition_reward(&x, &[0.0, 0.0], &xn) - (e.potential(&xn) - e.potential(&x))
        };
        assert_eq!(base, 0.0);
        let main = {
            let xn = m.step(&x, &[1.0, 0.0]);
            m.transition_reward(&x, &[1.0, 0.0], &xn) - (e.potential(&xn) - e.potential(&x))
        };
        assert!((main + 0.3).abs() < 1e-12);
        let side = {
            let xn = m.step(&x, &[0.0, 0.9]);
            m.transition_reward(&x, &[0.0, 0.9], &xn) - (e.potential(&xn) - e.potential(&x))
        };
        assert!((side + 0.03).abs() < 1e-12);
        // below the gate the lateral thruster is off
        let gated = m.step(&x, &[0.0, 0.4]);
        assert_eq!(gated, m.step(&x, &[0.0, 0.0]));
    }

    #[test]
    fn zone_penalty() {
        let e = env();
        let m = e.model();
        let x = vec![0.0, 8.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.75];
        let xn = m.step(&x, &[0.0, 0.0]);
        assert!(e.common.in_danger(&xn));
        let r = m.transition_reward(&x, &[0.0, 0.0], &xn);
        assert!((r - (e.potential(&xn) - e.potential(&x) - 5.0)).abs() < 1e-12);
    }

    #[test]
    fn hard_touchdown_crashes_and_model_omits_terminal() {
        let e = env();
        let x = vec![0.0, 0.7, 0.0, -8.0, 0.0, 0.0, 0.0, 0.7];
        let u = [-1.0, 0.0];
        let out = Environment::step(&e, &EnvState { x: x.clone(), t: 0 }, &u);
        assert!(out.done && out.info.crashed && !out.info.success);
        let shaped = e.common.shaped_reward(&x, &u, &out.state.x);
        assert!((out.reward - (shaped - 100.0)).abs() < 1e-9);
        let m = e.model();
        let xm = m.step(&x, &u);
        let r_hat = m.reward(&x, &u);
        assert!((r_hat - e.common.shaped_reward(&x, &u, &xm)).abs() < 1e-12);
        assert!(r_hat > -60.0, "model reward {r_hat}");
        assert!(!m.terminal(&xm));
    }

    #[test]
    fn leaving_the_field_fails() {
        let e = env();
        let x = vec![9.99, 8.0, 5.0, 0.0, 0.0, 0.0, 0.0, 0.7];
        let out = Environment::step(&e, &EnvState { x, t: 0 }, &[0.0, 0.0]);
        assert!(out.done && out.info.failure);
    }

    #[test]
    fn zone_spawn_range() {
        let e = env();
        let [xl, xh, yl, yh] = e.params().zone_spawn;
        for seed in 0..1000 {
            let s = e.reset(&mut RngStream::new(seed, StreamId::EnvNoise));
            assert!((xl..=xh).contains(&s.x[6]) && (yl..=yh).contains(&s.x[7]));
            let o = e.observe(&s);
            assert_eq!(o.len(), e.spec().obs_dim());
            assert_eq!(o.len(), 12);
        }
    }

    #[test]
    fn free_fall_matches_model_in_flight() {
        let e = env();
        let x = vec![0.0, 8.0, 0.3, -1.0, 0.0, 0.0, 0.0, 0.7];
        let (xe, _) = e.physics(&x, &[0.0, 0.0]);
        let xm = e.model().step(&x, &[0.0, 0.0]);
        for i in 0..4 {
            assert!((xe[i] - xm[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn model_differs_under_lateral_thrust() {
        let e = env();
        let x = vec![0.0, 8.0, 0.0, 0.0, 0.2, 0.3, 0.0, 0.7];
        let (xe, _) = e.physics(&x, &[1.0, 1.0]);
        let xm = e.model().step(&x, &[1.0, 1.0]);
        assert!((xe[4] - xm[4]).abs() > 1e-6);
    }

    #[test]
    fn hover_throttle_exists() {
        // full main throttle outweighs gravity
        let e = env();
        let x = vec![0.0, 8.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.7];
        let (xe, _) = e.physics(&x, &[1.0, 0.0]);
        assert!(xe[3] > 0.0);
    }
}
