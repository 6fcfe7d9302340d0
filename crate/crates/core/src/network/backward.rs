//! Reverse-mode gradients through both heads and the stacked bi-LSTM.

use super::forward::{ade_head_forward, adr_head_forward, pooled_positions, CellStep, ForwardTrace};
use super::loss::{ade_loss_label, adr_loss_tags, check_lambda, joint_loss};
use super::params::{Gradients, Head, LstmCell, ModelParams};
use crate::error::{Error, Result};
use crate::text::Tag;

/// Loss selector together with its gold labels.
#[derive(Clone, Copy, Debug)]
pub enum Target<'a> {
    /// Token tagging loss over all padded timesteps.
    Adr(&'a [Tag]),
    /// Sentence classification loss.
    Ade(usize),
    /// Gated combination. `tags` may be absent when `ade == 0`.
    Joint {
        tags: Option<&'a [Tag]>,
        ade: usize,
        lambda: f64,
    },
}

/// Loss value split by task for logging.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossParts {
    pub total: f64,
    pub adr: Option<f64>,
    pub ade: Option<f64>,
}

/// Head gradient for one softmax output: returns d(input).
fn head_backward(head: &Head, grad: &mut Head, probs: &[f64], gold: usize, weight: f64, input: &[f64]) -> Vec<f64> {
    let dlogits: Vec<f64> = probs
        .iter()
        .enumerate()
        .map(|(i, &p)| weight * (p - if i == gold { 1.0 } else { 0.0 }))
        .collect();
    grad.weight.outer_acc(&dlogits, input);
    for (b, d) in grad.bias.iter_mut().zip(&dlogits) {
        *b += d;
    }
    let mut dinput = vec![0.0; input.len()];
    head.weight.transpose_mul_acc(&dlogits, &mut dinput);
    dinput
}

/// BPTT through one direction. `d_out[t]` is the gradient reaching this
/// direction's hidden state at position t from above; input gradients are
/// accumulated into `d_input`.
fn cell_backward(
    cell: &LstmCell,
    grad: &mut LstmCell,
    steps: &[CellStep],
    d_out: &[&[f64]],
    reverse: bool,
    d_input: &mut [Vec<f64>],
) {
    let n = steps.len();
    let h = cell.hidden();
    let in_dim = cell.input_dim();
    let mut dh_next = vec![0.0; h];
    let mut dc_next = vec![0.0; h];
    let mut dz = vec![0.0; 4 * h];
    let mut dx = vec![0.0; in_dim + h];
    // walk positions opposite to the order the cell consumed them
    for k in 0..n {
        let t = if reverse { k } else { n - 1 - k };
        let s = &steps[t];
        for j in 0..h {
            let i_g = s.gates[j];
            let f_g = s.gates[h + j];
            let g_g = s.gates[2 * h + j];
            let o_g = s.gates[3 * h + j];
            let dh = d_out[t][j] + dh_next[j];
            let d_o = dh * s.cell_tanh[j];
            let dc = dh * o_g * (1.0 - s.cell_tanh[j] * s.cell_tanh[j]) + dc_next[j];
            let d_i = dc * g_g;
            let d_g = dc * i_g;
            let d_f = dc * s.prev_cell[j];
            dc_next[j] = dc * f_g;
            dz[j] = d_i * i_g * (1.0 - i_g);
            dz[h + j] = d_f * f_g * (1.0 - f_g);
            dz[2 * h + j] = d_g * (1.0 - g_g * g_g);
            dz[3 * h + j] = d_o * o_g * (1.0 - o_g);
        }
        grad.weight.outer_acc(&dz, &s.input);
        for (b, d) in grad.bias.iter_mut().zip(&dz) {
            *b += d;
        }
        dx.fill(0.0);
        cell.weight.transpose_mul_acc(&dz, &mut dx);
        for (a, d) in d_input[t].iter_mut().zip(&dx[..in_dim]) {
            *a += d;
        }
        dh_next.copy_from_slice(&dx[in_dim..]);
    }
}

fn check_finite(grads: &Gradients) -> Result<()> {
    for b in grads.blocks() {
        if let Some(i) = b.data.iter().position(|x| !x.is_finite()) {
            return Err(Error::numeric(b.name, format!("non-finite gradient at entry {i}")));
        }
    }
    Ok(())
}

/// Evaluates the selected loss without computing gradients.
pub fn loss_value(params: &ModelParams, trace: &ForwardTrace, target: Target<'_>) -> Result<LossParts> {
    let (adr_weight, ade_weight, tags, ade_label, lambda) = weights(target, trace.len())?;
    let mut parts = LossParts::default();
    if adr_weight != 0.0 || matches!(target, Target::Adr(_)) {
        let tags = tags.expect("validated");
        parts.adr = Some(adr_loss_tags(&adr_head_forward(params, trace), tags)?);
    }
    if ade_weight != 0.0 || matches!(target, Target::Ade(_) | Target::Joint { .. }) {
        parts.ade = Some(ade_loss_label(&ade_head_forward(params, trace).probs, ade_label));
    }
    parts.total = match target {
        Target::Adr(_) => parts.adr.unwrap_or(0.0),
        Target::Ade(_) => parts.ade.unwrap_or(0.0),
        Target::Joint { .. } => joint_loss(
            parts.adr.unwrap_or(0.0),
            parts.ade.unwrap_or(0.0),
            ade_label,
            lambda,
        )?,
    };
    Ok(parts)
}

type Weights<'a> = (f64, f64, Option<&'a [Tag]>, usize, f64);

fn weights<'a>(target: Target<'a>, n: usize) -> Result<Weights<'a>> {
    let check_tags = |tags: &[Tag]| {
        if tags.len() != n {
            Err(Error::Input(format!("{} gold tags for {n} timesteps", tags.len())))
        } else {
            Ok(())
        }
    };
    let check_label = |label: usize| {
        if label > 1 {
            Err(Error::Input(format!("ADE label must be 0 or 1, got {label}")))
        } else {
            Ok(())
        }
    };
    match target {
        Target::Adr(tags) => {
            check_tags(tags)?;
            Ok((1.0, 0.0, Some(tags), 0, 1.0))
        }
        Target::Ade(label) => {
            check_label(label)?;
            Ok((0.0, 1.0, None, label, 0.0))
        }
        Target::Joint { tags, ade, lambda } => {
            check_lambda(lambda)?;
            check_label(ade)?;
            let gate = if ade == 1 { lambda } else { 0.0 };
            if gate != 0.0 {
                let tags = tags.ok_or_else(|| {
                    Error::Data("example with ADE label 1 carries no tag sequence".into())
                })?;
                check_tags(tags)?;
            }
            let tags = if gate != 0.0 { tags } else { None };
            Ok((gate, 1.0 - lambda, tags, ade, lambda))
        }
    }
}

/// Exact gradients of the selected loss with respect to every parameter.
pub fn backward(params: &ModelParams, trace: &ForwardTrace, target: Target<'_>) -> Result<Gradients> {
    backward_with_loss(params, trace, target).map(|(_, g)| g)
}

pub fn backward_with_loss(
    params: &ModelParams,
    trace: &ForwardTrace,
    target: Target<'_>,
) -> Result<(LossParts, Gradients)> {
    let n = trace.len();
    let (adr_weight, ade_weight, tags, ade_label, lambda) = weights(target, n)?;
    let mut grads = params.zeros_like();
    let hidden = trace.hidden();
    let width = hidden[0].len();
    let mut d_hidden = vec![vec![0.0; width]; n];
    let mut parts = LossParts::default();

    if adr_weight != 0.0 {
        let tags = tags.expect("validated");
        let probs = adr_head_forward(params, trace);
        parts.adr = Some(adr_loss_tags(&probs, tags)?);
        for t in 0..n {
            let d = head_backward(
                &params.adr_head,
                &mut grads.adr_head,
                &probs[t],
                tags[t].index(),
                adr_weight,
                &hidden[t],
            );
            for (a, b) in d_hidden[t].iter_mut().zip(d) {
                *a += b;
            }
        }
    } else if let Target::Adr(tags) = target {
        parts.adr = Some(adr_loss_tags(&adr_head_forward(params, trace), tags)?);
    }

    if ade_weight != 0.0 {
        let out = ade_head_forward(params, trace);
        parts.ade = Some(ade_loss_label(&out.probs, ade_label));
        let d_pooled = head_backward(
            &params.ade_head,
            &mut grads.ade_head,
            &out.probs,
            ade_label,
            ade_weight,
            &out.pooled,
        );
        let positions = pooled_positions(params.config.pooling, &trace.mask);
        let inv = 1.0 / positions.len() as f64;
        for t in positions {
            for (a, b) in d_hidden[t].iter_mut().zip(&d_pooled) {
                *a += b * inv;
            }
        }
    } else if matches!(target, Target::Ade(_) | Target::Joint { .. }) {
        parts.ade = Some(ade_loss_label(&ade_head_forward(params, trace).probs, ade_label));
    }

    parts.total = match target {
        Target::Adr(_) => parts.adr.unwrap_or(0.0),
        Target::Ade(_) => parts.ade.unwrap_or(0.0),
        Target::Joint { .. } => joint_loss(
            parts.adr.unwrap_or(0.0),
            parts.ade.unwrap_or(0.0),
            ade_label,
            lambda,
        )?,
    };

    let h = params.hidden();
    for (l, layer) in params.layers.iter().enumerate().rev() {
        let lt = &trace.layers[l];
        let in_dim = layer.forward.input_dim();
        let mut d_input = vec![vec![0.0; in_dim]; n];
        let fwd_out: Vec<&[f64]> = d_hidden.iter().map(|d| &d[..h]).collect();
        let bwd_out: Vec<&[f64]> = d_hidden.iter().map(|d| &d[h..]).collect();
        let g = &mut grads.layers[l];
        cell_backward(&layer.forward, &mut g.forward, &lt.forward, &fwd_out, false, &mut d_input);
        cell_backward(&layer.backward, &mut g.backward, &lt.backward, &bwd_out, true, &mut d_input);
        d_hidden = d_input;
    }

    check_finite(&grads)?;
    Ok((parts, grads))
}
