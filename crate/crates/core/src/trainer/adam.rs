//! Adam with bias correction, applied block by block so a task update can
//! leave the other task's head untouched.

use crate::error::{Error, Result};
use crate::network::{BlockGroup, Gradients, ModelParams};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Number of `adam_step` calls.
    pub step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    /// Per-block update counts; bias correction uses these so a block that
    /// skips some steps is corrected for the moments it actually saw.
    block_steps: Vec<u64>,
}

impl OptimizerState {
    pub fn new(params: &ModelParams) -> Self {
        let sizes: Vec<usize> = params.blocks().iter().map(|b| b.data.len()).collect();
        OptimizerState {
            beta1: BETA1,
            beta2: BETA2,
            epsilon: EPSILON,
            step: 0,
            first: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            second: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            block_steps: vec![0; sizes.len()],
        }
    }

    pub fn first_moment(&self, block: usize) -> &[f64] {
        &self.first[block]
    }

    pub fn second_moment(&self, block: usize) -> &[f64] {
        &self.second[block]
    }
}

/// One update over every block.
pub fn adam_step(params: &mut ModelParams, grads: &Gradients, state: &mut OptimizerState, lr: f64) -> Result<()> {
    adam_step_where(params, grads, state, lr, |_| true)
}

/// One update restricted to blocks whose group passes `include`. Other
/// blocks and their moments are left bitwise unchanged.
pub fn adam_step_where(
    params: &mut ModelParams,
    grads: &Gradients,
    state: &mut OptimizerState,
    lr: f64,
    include: impl Fn(BlockGroup) -> bool,
) -> Result<()> {
    let grad_blocks = grads.blocks();
    let mut param_blocks = params.blocks_mut();
    if grad_blocks.len() != param_blocks.len() || param_blocks.len() != state.first.len() {
        return Err(Error::Input("gradient/optimizer shape does not match parameters".into()));
    }
    for (p, g) in param_blocks.iter().zip(&grad_blocks) {
        if p.data.len() != g.data.len() {
            return Err(Error::Input(format!("gradient block {} has wrong size", g.name)));
        }
        if include(g.group) && g.data.iter().any(|x| !x.is_finite()) {
            return Err(Error::numeric(g.name.clone(), "non-finite gradient"));
        }
    }
    state.step += 1;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.epsilon);
    for (i, (p, g)) in param_blocks.iter_mut().zip(&grad_blocks).enumerate() {
        if !include(g.group) {
            continue;
        }
        state.block_steps[i] += 1;
        let t = state.block_steps[i] as i32;
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        let m = &mut state.first[i];
        let v = &mut state.second[i];
        for (j, theta) in p.data.iter_mut().enumerate() {
            let gj = g.data[j];
            m[j] = b1 * m[j] + (1.0 - b1) * gj;
            v[j] = b2 * v[j] + (1.0 - b2) * gj * gj;
            let m_hat = m[j] / c1;
            let v_hat = v[j] / c2;
            *theta -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// Rescales `grads` in place so their global L2 norm over the included
/// blocks is at most `max_norm`. Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut Gradients, max_norm: f64, include: impl Fn(BlockGroup) -> bool + Copy) -> f64 {
    let norm = grads.norm_where(include);
    if norm > max_norm && norm > 0.0 {
        let factor = max_norm / norm;
        for b in grads.blocks_mut() {
            if include(b.group) {
                b.data.iter_mut().for_each(|x| *x *= factor);
            }
        }
    }
    norm
}
