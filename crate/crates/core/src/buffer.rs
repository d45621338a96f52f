//! Real and virtual experience buffers.
//!
//! Both buffers are flat, insertion-ordered and cleared after every policy
//! update. Episode boundaries in the real buffer are carried by `done`.

use crate::error::{check_dim, Error, Result};
use crate::rng::RngStream;

/// One real environment step.
///
/// `a_t` holds the pre-squash Gaussian sample of the high-level policy; the
/// squashed action is `tanh(a_t)`. Storing the raw sample keeps stored
/// log-probabilities exactly reproducible.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub s_t: Vec<f64>,
    pub a_t: Vec<f64>,
    pub u_t: Vec<f64>,
    pub r_t: f64,
    pub s_next: Vec<f64>,
    pub done: bool,
    /// Episode ended by the step limit rather than a terminal state.
    pub truncated: bool,
    pub log_pi_old: f64,
}

/// One step of a re-scored, unselected MPPI candidate plan.
#[derive(Debug, Clone, PartialEq)]
pub struct VirtualTransition {
    pub step: Transition,
    pub v_target: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BufferDims {
    pub obs: usize,
    pub action: usize,
    pub control: usize,
}

pub enum Item {
    Real(Transition),
    Virtual(VirtualTransition),
}

impl From<Transition> for Item {
    fn from(t: Transition) -> Self {
        Item::Real(t)
    }
}

impl From<VirtualTransition> for Item {
    fn from(t: VirtualTransition) -> Self {
        Item::Virtual(t)
    }
}

#[derive(Debug, Clone)]
pub struct RolloutBuffers {
    pub d_rl: Vec<Transition>,
    pub d_mppi: Vec<VirtualTransition>,
    /// Real steps per update period.
    pub capacity: usize,
    /// Upper bound on virtual items per real item, `(M - 1) * H`.
    pub max_virtual_per_real: usize,
    dims: BufferDims,
}

impl RolloutBuffers {
    pub fn new(dims: BufferDims, capacity: usize, max_virtual_per_real: usize) -> Self {
        Self { d_rl: Vec::with_capacity(capacity), d_mppi: Vec::new(), capacity, max_virtual_per_real, dims }
    }

    pub fn dims(&self) -> BufferDims {
        self.dims
    }

    fn check(&self, t: &Transition) -> Result<()> {
        check_dim("transition observation", self.dims.obs, t.s_t.len())?;
        check_dim("transition next observation", self.dims.obs, t.s_next.len())?;
        check_dim("transition action", self.dims.action, t.a_t.len())?;
        check_dim("transition control", self.dims.control, t.u_t.len())?;
        if !t.r_t.is_finite() {
            return Err(Error::NonFinite("transition reward"));
        }
        if !t.log_pi_old.is_finite() {
            return Err(Error::NonFinite("transition log-probability"));
        }
        Ok(())
    }

    pub fn push(&mut self, item: impl Into<Item>) -> Result<()> {
        match item.into() {
            Item::Real(t) => {
                self.check(&t)?;
                self.d_rl.push(t);
            }
            Item::Virtual(v) => {
                self.check(&v.step)?;
                if !v.v_target.is_finite() {
                    return Err(Error::NonFinite("virtual value target"));
                }
                if self.d_mppi.len() + 1 > self.max_virtual_per_real * self.d_rl.len() {
                    return Err(Error::invalid(format!(
                        "virtual buffer would exceed (M-1)*H = {} items per real step",
                        self.max_virtual_per_real
                    )));
                }
                self.d_mppi.push(v);
            }
        }
        Ok(())
    }

    pub fn clear(&mut self) {
        self.d_rl.clear();
        self.d_mppi.clear();
    }

    pub fn is_full(&self) -> bool {
        self.d_rl.len() >= self.capacity
    }

    pub fn sizes(&self) -> (usize, usize) {
        (self.d_rl.len(), self.d_mppi.len())
    }

    pub fn sample_real(&self, rng: &mut RngStream) -> Result<&Transition> {
        if self.d_rl.is_empty() {
            return Err(Error::EmptyBuffer("real"));
        }
        Ok(&self.d_rl[rng.index(self.d_rl.len())])
    }

    pub fn sample_virtual(&self, rng: &mut RngStream) -> Result<&VirtualTransition> {
        if self.d_mppi.is_empty() {
            return Err(Error::EmptyBuffer("virtual"));
        }
        Ok(&self.d_mppi[rng.index(self.d_mppi.len())])
    }
}
