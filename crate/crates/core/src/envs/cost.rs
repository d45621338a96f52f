//! MPPI running and terminal cost terms conditioned on a high-level action.
//!
//! Per step the running cost is
//! `w_rl * J_rl(x, u; a) + w_d * J_danger(x) + J_other(x, u)`;
//! value-terminal forms add `w_value * (-V(psi(x_H)))` once at the horizon.

use serde::{Deserialize, Serialize};

use super::{ApproxModel, DangerZone, EnvKind};
use crate::nn::{softplus, ValueEnsemble};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RlTerm {
    Tracking,
    Quadratic,
    Value,
    TrackingValue,
    QuadraticValue,
}

impl RlTerm {
    pub fn uses_value(self) -> bool {
        matches!(self, RlTerm::Value | RlTerm::TrackingValue | RlTerm::QuadraticValue)
    }

    pub fn is_quadratic(self) -> bool {
        matches!(self, RlTerm::Quadratic | RlTerm::QuadraticValue)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostWeights {
    pub w_rl: f64,
    pub w_d: f64,
    pub w_act: f64,
    pub w_y: f64,
    pub w_bound: f64,
    pub w_coll: f64,
    /// Scale of the value-terminal term.
    pub w_value: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self::for_env(EnvKind::Acrobot)
    }
}

impl CostWeights {
    pub fn zero() -> Self {
        Self { w_rl: 0.0, w_d: 0.0, w_act: 0.0, w_y: 0.0, w_bound: 0.0, w_coll: 0.0, w_value: 0.0 }
    }

    /// Per-environment defaults of the MPPI cost weights.
    pub fn for_env(kind: EnvKind) -> Self {
        let z = Self::zero();
        match kind {
            EnvKind::Acrobot => Self { w_rl: 50.0, w_d: 50.0, w_value: 1.0, ..z },
            EnvKind::Lander => Self { w_rl: 50.0, w_d: 400.0, w_act: 20.0, w_y: 10.0, w_value: 1.0, ..z },
            EnvKind::Racing => Self { w_rl: 1.0, w_d: 300.0, w_bound: 500.0, w_coll: 300.0, w_value: 1.0, ..z },
        }
    }

    pub fn all_non_negative(&self) -> bool {
        [self.w_rl, self.w_d, self.w_act, self.w_y, self.w_bound, self.w_coll, self.w_value]
            .iter()
            .all(|w| *w >= 0.0 && w.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostSpec {
    pub form: RlTerm,
    pub weights: CostWeights,
}

/// High-level action decoded into cost parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum DecodedAction {
    Target(Vec<f64>),
    /// Diagonal `Q` (positive via softplus) and linear term `p`.
    Quadratic {
        q_diag: Vec<f64>,
        p: Vec<f64>,
    },
    None,
}

/// Length of the high-level action vector under a cost form.
pub fn action_dim(model: &dyn ApproxModel, form: RlTerm) -> usize {
    let z = model.quad_features(&vec![0.0; model.state_dim()], &vec![0.0; model.control_dim()]).len();
    match form {
        RlTerm::Quadratic | RlTerm::QuadraticValue => 2 * z,
        _ => model.target_dim(),
    }
}

pub fn decode_action(model: &dyn ApproxModel, form: RlTerm, a: &[f64]) -> DecodedAction {
    match form {
        RlTerm::Tracking | RlTerm::TrackingValue => DecodedAction::Target(model.decode_target(a)),
        RlTerm::Quadratic | RlTerm::QuadraticValue => {
            let n = a.len() / 2;
            DecodedAction::Quadratic { q_diag: a[..n].iter().map(|&v| softplus(v)).collect(), p: a[n..].to_vec() }
        }
        RlTerm::Value => DecodedAction::None,
    }
}

/// `||x_tracked - x*(a)||`.
pub fn cost_rl_track(model: &dyn ApproxModel, x: &[f64], target: &[f64]) -> f64 {
    model.tracking_error(x, target).iter().map(|e| e * e).sum::<f64>().sqrt()
}

/// `z^T Q z + p^T z` for a dense row-major `Q`.
pub fn quad_form(q: &[f64], p: &[f64], z: &[f64]) -> f64 {
    let n = z.len();
    debug_assert_eq!(q.len(), n * n);
    let mut acc = 0.0;
    for i in 0..n {
        let row: f64 = (0..n).map(|j| q[i * n + j] * z[j]).sum();
        acc += z[i] * row + p[i] * z[i];
    }
    acc
}

pub fn cost_rl_quad(model: &dyn ApproxModel, x: &[f64], u: &[f64], q_diag: &[f64], p: &[f64]) -> f64 {
    let z = model.quad_features(x, u);
    z.iter().zip(q_diag).zip(p).map(|((z, q), p)| q * z * z + p * z).sum()
}

/// Value-terminal cost: negated ensemble-mean value at `psi(x_H)`.
pub fn cost_rl_value(model: &dyn ApproxModel, critic: &ValueEnsemble, x_h: &[f64]) -> f64 {
    -critic.mean_value(&model.psi(x_h)).unwrap_or(0.0)
}

pub fn cost_danger(zone: &DangerZone, pos: (f64, f64)) -> f64 {
    if zone.contains(pos.0, pos.1) {
        1.0
    } else {
        0.0
    }
}

/// `w_y * y^2 + w_act * |u|^2`.
pub fn cost_other_lander(y: f64, u: &[f64], w_y: f64, w_act: f64) -> f64 {
    w_y * y * y + w_act * u.iter().map(|v| v * v).sum::<f64>()
}

/// `w_coll * [dist <= d_contact] + w_bound * max(0, BP - 1)^2`.
pub fn cost_other_racing(dist_to_opponent: f64, d_contact: f64, bp: f64, w_coll: f64, w_bound: f64) -> f64 {
    let coll = if dist_to_opponent <= d_contact { 1.0 } else { 0.0 };
    let over = (bp - 1.0).max(0.0);
    w_coll * coll + w_bound * over * over
}

impl CostSpec {
    /// Running cost of reaching `x_next` with control `u`.
    pub fn running(&self, model: &dyn ApproxModel, action: &DecodedAction, x_next: &[f64], u: &[f64]) -> f64 {
        let w = &self.weights;
        let rl = match action {
            DecodedAction::Target(t) => cost_rl_track(model, x_next, t),
            DecodedAction::Quadratic { q_diag, p } => cost_rl_quad(model, x_next, u, q_diag, p),
            DecodedAction::None => 0.0,
        };
        let danger = cost_danger(&model.zone(x_next), model.position(x_next));
        let mut c = 0.0;
        if w.w_rl != 0.0 {
            c += w.w_rl * rl;
        }
        if w.w_d != 0.0 {
            c += w.w_d * danger;
        }
        c + model.other_cost(x_next, u, w)
    }

    pub fn terminal(&self, model: &dyn ApproxModel, critic: Option<&ValueEnsemble>, x_h: &[f64]) -> f64 {
        match critic {
            Some(v) if self.form.uses_value() => self.weights.w_value * cost_rl_value(model, v, x_h),
            _ => 0.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{RngStream, StreamId};

    #[test]
    fn quadratic_identity_unit_vector() {
        let n = 4;
        let mut q = vec![0.0; n * n];
        for i in 0..n {
            q[i * n + i] = 1.0;
        }
        assert_eq!(quad_form(&q, &[0.0; 4], &[1.0, 0.0, 0.0, 0.0]), 1.0);
    }

    #[test]
    fn quadratic_matches_explicit_oracle() {
        let mut rng = RngStream::new(3, StreamId::Init);
        for _ in 0..20 {
            let n = 5;
            let q: Vec<f64> = (0..n * n).map(|_| rng.normal()).collect();
            let p: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
            let z: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
            // explicit double sum written out term by term
            let mut expect = 0.0;
            for i in 0..n {
                for j in 0..n {
                    expect += z[i] * q[i * n + j] * z[j];
                }
            }
            for i in 0..n {
                expect += p[i] * z[i];
            }
            assert!((quad_form(&q, &p, &z) - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn lander_other_term() {
        assert_eq!(cost_other_lander(2.0, &[1.0, 0.0], 10.0, 20.0), 60.0);
    }

    #[test]
    fn racing_other_term() {
        assert_eq!(cost_other_racing(10.0, 2.0, 1.5, 300.0, 500.0), 125.0);
        assert_eq!(cost_other_racing(2.0, 2.0, 0.5, 300.0, 500.0), 300.0);
        assert_eq!(cost_other_racing(5.0, 2.0, 1.0, 300.0, 500.0), 0.0);
    }

    #[test]
    fn default_weights() {
        let a = CostWeights::for_env(EnvKind::Acrobot);
        assert_eq!((a.w_rl, a.w_d), (50.0, 50.0));
        let l = CostWeights::for_env(EnvKind::Lander);
        assert_eq!((l.w_rl, l.w_d, l.w_act, l.w_y), (50.0, 400.0, 20.0, 10.0));
        let r = CostWeights::for_env(EnvKind::Racing);
        assert_eq!((r.w_rl, r.w_d, r.w_bound, r.w_coll), (1.0, 300.0, 500.0, 300.0));
    }
}
