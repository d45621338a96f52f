//! Single-opponent racing on a closed track.
//!
//! Model state: `[px, py, psi, v, s, s_opp, lateral]` where `s` and `s_opp`
//! are unwrapped arc-length progress from the start line. The true state
//! appends the realised steering angle.

use std::f64::consts::PI;

use super::cost::{cost_other_racing, CostWeights};
use super::track::Track;
use super::{
    non_finite, wrap_angle, ApproxModel, DangerZone, EnvKind, EnvSpec, EnvState, Environment, StepInfo, StepOutcome,
};
use crate::rng::RngStream;

#[derive(Debug, Clone, PartialEq)]
pub struct RacingParams {
    pub dt: f64,
    pub wheelbase: f64,
    pub rear_axle: f64,
    pub max_steer: f64,
    pub max_accel: f64,
    pub max_speed: f64,
    pub start_speed: f64,
    /// Steering first-order lag time constant (true dynamics only).
    pub steer_lag: f64,
    /// Understeer gradient: effective steer `delta / (1 + k v^2)`.
    pub understeer: f64,
    pub drag: f64,
    pub opp_start: f64,
    pub opp_speed: f64,
    /// Sum of the two vehicle radii.
    pub d_contact: f64,
    pub goal_s: f64,
    pub max_steps: usize,
    pub progress_reward: f64,
    pub pass_reward: f64,
    pub pass_window: f64,
    pub boundary_penalty: f64,
    pub danger_penalty: f64,
    pub offtrack_reward: f64,
    pub collision_reward: f64,
    pub goal_reward: f64,
    pub zone_s: f64,
    pub zone_offset: f64,
    pub zone_side: f64,
    /// Horizon used for the look-ahead curvature feature.
    pub lookahead: f64,
    /// Scale of the velocity targets decoded from actions.
    pub target_speed: f64,
}

impl Default for RacingParams {
    fn default() -> Self {
        Self {
            dt: 0.1,
            wheelbase: 2.5,
            rear_axle: 1.25,
            max_steer: 0.4,
            max_accel: 4.0,
            max_speed: 20.0,
            start_speed: 5.0,
            steer_lag: 0.2,
            understeer: 0.002,
            drag: 0.005,
            opp_start: 25.0,
            opp_speed: 7.0,
            d_contact: 2.4,
            goal_s: 250.0,
            max_steps: 400,
            progress_reward: 5.0,
            pass_reward: 1.0,
            pass_window: 10.0,
            boundary_penalty: 1.0,
            danger_penalty: -150.0,
            offtrack_reward: -100.0,
            collision_reward: -1000.0,
            goal_reward: 1000.0,
            zone_s: 120.0,
            zone_offset: 1.5,
            zone_side: 3.0,
            lookahead: 15.0,
            target_speed: 15.0,
        }
    }
}

#[derive(Debug, Clone)]
struct Common {
    p: RacingParams,
    track: Track,
    zone: DangerZone,
}

impl Common {
    fn new(p: RacingParams, track: Track) -> Self {
        let (x, y, h) = track.point_at(p.zone_s);
        let zone = DangerZone::square(x - p.zone_offset * h.sin(), y + p.zone_offset * h.cos(), p.zone_side);
        Self { p, track, zone }
    }

    fn opponent(&self, s_opp: f64) -> (f64, f64) {
        let (x, y, _) = self.track.point_at(s_opp);
        (x, y)
    }

    fn opp_dist(&self, x: &[f64]) -> f64 {
        let (ox, oy) = self.opponent(x[5]);
        (x[0] - ox).hypot(x[1] - oy)
    }

    fn bp(&self, x: &[f64]) -> f64 {
        self.track.boundary_progress(x[6])
    }

    /// Kinematic bicycle step on the first six entries; then re-projects.
    fn advance(&self, x: &[f64], accel: f64, delta: f64, out: &mut Vec<f64>) {
        let p = &self.p;
        let v = x[3];
        let beta = (p.rear_axle / p.wheelbase * delta.tan()).atan();
        let px = x[0] + v * (x[2] + beta).cos() * p.dt;
        let py = x[1] + v * (x[2] + beta).sin() * p.dt;
        let psi = wrap_angle(x[2] + v / p.rear_axle * beta.sin() * p.dt);
        let v_next = (v + accel * p.dt).clamp(0.0, p.max_speed);
        let proj = self.track.project_near(px, py, x[4]);
        let s = x[4] + self.track.ds(self.track.wrap_s(x[4]), proj.s);
        out.clear();
        out.extend_from_slice(&[px, py, psi, v_next, s, x[5] + p.opp_speed * p.dt, proj.lateral]);
    }

    /// Per-step reward without terminal terms.
    fn shaped_reward(&self, x: &[f64], x_next: &[f64]) -> f64 {
        let p = &self.p;
        let mut r = p.progress_reward * (x_next[4] - x[4]);
        if (x_next[5] - x_next[4]).abs() <= p.pass_window {
            r += p.pass_reward * (x_next[3] - p.opp_speed).max(0.0);
        }
        r -= p.boundary_penalty * self.bp(x_next);
        if self.zone.contains(x_next[0], x_next[1]) {
            r += p.danger_penalty;
        }
        r
    }

    fn psi(&self, x: &[f64]) -> Vec<f64> {
        let t = &self.track;
        let hw = t.half_width;
        let (_, _, h) = t.point_at(x[4]);
        let (_, _, h_ahead) = t.point_at(x[4] + self.p.lookahead);
        let (ox, oy) = self.opponent(x[5]);
        let (dx, dy) = (ox - x[0], oy - x[1]);
        let (s, c) = x[2].sin_cos();
        vec![
            x[0],
            x[1],
            x[3],
            c,
            s,
            x[6] / hw,
            wrap_angle(x[2] - h),
            h.cos(),
            h.sin(),
            wrap_angle(h_ahead - h),
            hw - x[6],
            hw + x[6],
            c * dx + s * dy,
            -s * dx + c * dy,
            x[5] - x[4],
            self.zone.cx,
            self.zone.cy,
            self.zone.width,
            self.zone.height,
        ]
    }
}

#[derive(Debug, Clone)]
pub struct Racing {
    common: Common,
    model: RacingModel,
    spec: EnvSpec,
}

/// Pure kinematic bicycle with direct steering and acceleration.
#[derive(Debug, Clone)]
pub struct RacingModel {
    common: Common,
}

impl Racing {
    pub fn new(params: RacingParams, track: Track) -> Self {
        let common = Common::new(params, track);
        let hw = common.track.half_width;
        let (mut xl, mut xh, mut yl, mut yh) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for q in common.track.waypoints_dense() {
            xl = xl.min(q.x - hw);
            xh = xh.max(q.x + hw);
            yl = yl.min(q.y - hw);
            yh = yh.max(q.y + hw);
        }
        let p = &common.p;
        let spec = EnvSpec {
            kind: EnvKind::Racing,
            obs_low: vec![
                xl, yl, 0.0, -1.0, -1.0, -1.5, -PI, -1.0, -1.0, -1.0, -hw, -hw, -50.0, -50.0, -50.0, xl, yl, 0.0, 0.0,
            ],
            obs_high: vec![
                xh,
                yh,
                p.max_speed,
                1.0,
                1.0,
                1.5,
                PI,
                1.0,
                1.0,
                1.0,
                3.0 * hw,
                3.0 * hw,
                50.0,
                50.0,
                50.0,
                xh,
                yh,
                10.0,
                10.0,
            ],
            control_low: vec![-1.0, -1.0],
            control_high: vec![1.0, 1.0],
            max_steps: p.max_steps,
            danger_penalty: p.danger_penalty,
            randomize_zone: false,
        };
        Self { model: RacingModel { common: common.clone() }, common, spec }
    }

    pub fn params(&self) -> &RacingParams {
        &self.common.p
    }

    pub fn track(&self) -> &Track {
        &self.common.track
    }

    pub fn zone(&self) -> DangerZone {
        self.common.zone
    }
}

impl ApproxModel for RacingModel {
    fn state_dim(&self) -> usize {
        7
    }

    fn control_dim(&self) -> usize {
        2
    }

    fn step(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let p = &self.common.p;
        let accel = p.max_accel * u[0].clamp(-1.0, 1.0);
        let delta = p.max_steer * u[1].clamp(-1.0, 1.0);
        let mut out = Vec::with_capacity(7);
        self.common.advance(x, accel, delta, &mut out);
        out
    }

    fn transition_reward(&self, x: &[f64], _u: &[f64], x_next: &[f64]) -> f64 {
        self.common.shaped_reward(x, x_next)
    }

    fn terminal(&self, _x: &[f64]) -> bool {
        false
    }

    fn psi(&self, x: &[f64]) -> Vec<f64> {
        self.common.psi(x)
    }

    fn position(&self, x: &[f64]) -> (f64, f64) {
        (x[0], x[1])
    }

    fn zone(&self, _x: &[f64]) -> DangerZone {
        self.common.zone
    }

    fn target_dim(&self) -> usize {
        2
    }

    /// World-frame velocity targets `target_speed * a`.
    fn decode_target(&self, a: &[f64]) -> Vec<f64> {
        vec![self.common.p.target_speed * a[0], self.common.p.target_speed * a[1]]
    }

    fn tracking_error(&self, x: &[f64], target: &[f64]) -> Vec<f64> {
        let (s, c) = x[2].sin_cos();
        vec![x[3] * c - target[0], x[3] * s - target[1]]
    }

    fn quad_features(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let (_, _, h) = self.common.track.point_at(x[4]);
        vec![x[6] / self.common.track.half_width, wrap_angle(x[2] - h), x[3] / 10.0, u[0], u[1]]
    }

    fn other_cost(&self, x: &[f64], _u: &[f64], w: &CostWeights) -> f64 {
        cost_other_racing(self.common.opp_dist(x), self.common.p.d_contact, self.common.bp(x), w.w_coll, w.w_bound)
    }
}

impl Environment for Racing {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn model(&self) -> &dyn ApproxModel {
        &self.model
    }

    fn reset(&self, rng: &mut RngStream) -> EnvState {
        let p = &self.common.p;
        let t = &self.common.track;
        let lat = rng.uniform_range(-1.0, 1.0);
        let (x, y, h) = t.point_at(0.0);
        let px = x - lat * h.sin();
        let py = y + lat * h.cos();
        let psi = wrap_angle(h + rng.uniform_range(-0.05, 0.05));
        let lateral = t.project_near(px, py, 0.0).lateral;
        EnvState { x: vec![px, py, psi, p.start_speed, 0.0, p.opp_start, lateral, 0.0], t: 0 }
    }

    fn step(&self, state: &EnvState, u: &[f64]) -> StepOutcome {
        let c = &self.common;
        let p = &c.p;
        let x = &state.x;
        let accel_cmd = p.max_accel * u[0].clamp(-1.0, 1.0);
        let target = p.max_steer * u[1].clamp(-1.0, 1.0);
        let delta = x[7] + (target - x[7]) * (p.dt / p.steer_lag).min(1.0);
        let v = x[3];
        let eff = delta / (1.0 + p.understeer * v * v);
        let accel = accel_cmd - p.drag * v * v;
        let mut next = Vec::with_capacity(8);
        c.advance(x, accel, eff, &mut next);
        next.push(delta);
        let t = state.t + 1;
        if non_finite(&next) {
            return StepOutcome {
                obs: vec![0.0; self.spec.obs_dim()],
                state: EnvState { x: next, t },
                reward: p.offtrack_reward,
                done: true,
                truncated: false,
                info: StepInfo { failure: true, ..Default::default() },
            };
        }
        let mut reward = c.shaped_reward(x, &next);
        let mut info = StepInfo {
            in_danger: c.zone.contains(next[0], next[1]),
            dist_to_goal: (p.goal_s - next[4]).max(0.0),
            ..Default::default()
        };
        let mut done = true;
        if c.opp_dist(&next) <= p.d_contact {
            reward += p.collision_reward;
            info.collision = true;
            info.failure = true;
        } else if c.bp(&next) > 1.0 {
            reward += p.offtrack_reward;
            info.off_track = true;
            info.failure = true;
        } else if next[4] >= p.goal_s {
            reward += p.goal_reward;
            info.success = true;
        } else {
            done = false;
        }
        let truncated = !done && t >= p.max_steps;
        StepOutcome {
            obs: c.psi(&next),
            state: EnvState { x: next, t },
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
        state.x[..7].to_vec()
    }

    fn dist_to_goal(&self, state: &EnvState) -> f64 {
        (self.common.p.goal_s - state.x[4]).max(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamId;

    fn env() -> Racing {
        Racing::new(RacingParams::default(), Track::default_circuit())
    }

    #[test]
    fn straight_line_bicycle() {
        let e = env();
        let m = e.model();
        let x = vec![0.0, 0.0, 0.3, 10.0, 0.0, 500.0, 0.0];
        let n = m.step(&x, &[0.0, 0.0]);
        assert_eq!(n[2], 0.3);
        assert!((n[0] - 10.0 * 0.3f64.cos() * 0.1).abs() < 1e-12);
        assert!((n[1] - 10.0 * 0.3f64.sin() * 0.1).abs() < 1e-12);
        assert_eq!(n[3], 10.0);
    }

    #[test]
    fn reset_is_deterministic_and_on_track() {
        let e = env();
        let a = e.reset(&mut RngStream::new(3, StreamId::EnvNoise));
        let b = e.reset(&mut RngStream::new(3, StreamId::EnvNoise));
        assert_eq!(a, b);
        assert!(a.x[6].abs() <= 1.0 + 1e-9);
        assert_eq!(e.observe(&a).len(), e.spec().obs_dim());
        assert_eq!(e.model().psi(&e.model_state(&a)), e.observe(&a));
    }

    #[test]
    fn zone_sits_left_of_centreline() {
        let e = env();
        let z = e.zone();
        let p = e.track().project(z.cx, z.cy);
        assert!((p.s - 120.0).abs() < 0.5);
        assert!((p.lateral - 1.5).abs() < 0.05);
    }

    fn state_at(e: &Racing, s: f64, lat: f64, v: f64, s_opp: f64) -> EnvState {
        let (x, y, h) = e.track().point_at(s);
        let px = x - lat * h.sin();
        let py = y + lat * h.cos();
        EnvState { x: vec![px, py, h, v, s, s_opp, lat, 0.0], t: 0 }
    }

    #[test]
    fn collision_is_terminal() {
        let e = env();
        let s = state_at(&e, 30.0, 0.0, 8.0, 31.0);
        let out = Environment::step(&e, &s, &[0.0, 0.0]);
        assert!(out.done && out.info.collision);
        assert!(out.reward < -900.0);
        let m = e.model();
        assert!(m.reward(&e.model_state(&s), &[0.0, 0.0]) > -100.0);
    }

    #[test]
    fn off_track_and_goal() {
        let e = env();
        let s = state_at(&e, 60.0, 5.95, 10.0, 0.0);
        let mut st = s.clone();
        st.x[2] += 0.8;
        let out = Environment::step(&e, &st, &[0.0, 0.0]);
        assert!(out.done && out.info.off_track);
        let g = state_at(&e, 249.5, 0.0, 10.0, 0.0);
        let out = Environment::step(&e, &g, &[0.0, 0.0]);
        assert!(out.done && out.info.success && out.reward > 900.0);
    }

    #[test]
    fn danger_penalty_applies() {
        let e = env();
        let s = state_at(&e, 119.0, 1.5, 5.0, 0.0);
        let out = Environment::step(&e, &s, &[0.0, 0.0]);
        assert!(out.info.in_danger);
        let progress = 5.0 * (out.state.x[4] - 119.0);
        let bp = out.state.x[6].abs() / 6.0;
        assert!((out.reward - (progress - bp - 150.0)).abs() < 1e-9);
    }

    #[test]
    fn progress_reward_on_centreline() {
        let e = env();
        let s = state_at(&e, 60.0, 0.0, 10.0, 0.0);
        let m = e.model();
        let x = e.model_state(&s);
        let n = m.step(&x, &[0.0, 0.0]);
        let r = m.transition_reward(&x, &[0.0, 0.0], &n);
        assert!((n[4] - 61.0).abs() < 0.05);
        assert!((r - 5.0 * (n[4] - 60.0) + n[6].abs() / 6.0).abs() < 1e-9);
    }
}
