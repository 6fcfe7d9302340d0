use super::matrix::dot;
use super::params::{Head, LstmCell, ModelParams, Pooling};
use crate::error::{Error, Result};

/// Intermediates of one LSTM step, kept for backpropagation.
#[derive(Clone, Debug)]
pub struct CellStep {
    /// Layer input followed by the previous hidden state.
    pub input: Vec<f64>,
    /// Activated gates: input, forget, candidate, output.
    pub gates: Vec<f64>,
    pub prev_cell: Vec<f64>,
    pub cell: Vec<f64>,
    pub cell_tanh: Vec<f64>,
    pub hidden: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct LayerTrace {
    /// Indexed by sequence position for both directions.
    pub forward: Vec<CellStep>,
    pub backward: Vec<CellStep>,
    /// Concatenated forward and backward hidden states, one per position.
    pub output: Vec<Vec<f64>>,
}

#[derive(Clone, Debug)]
pub struct ForwardTrace {
    pub layers: Vec<LayerTrace>,
    pub mask: Vec<bool>,
}

impl ForwardTrace {
    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }

    /// Top-layer states h_t, each of dimension 2·hidden.
    pub fn hidden(&self) -> &[Vec<f64>] {
        &self.layers.last().expect("at least one layer").output
    }
}

/// Output of the sentence head.
#[derive(Clone, Debug)]
pub struct AdeOutput {
    pub pooled: Vec<f64>,
    pub probs: Vec<f64>,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Softmax with max subtraction.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn run_cell(cell: &LstmCell, inputs: &[Vec<f64>], reverse: bool) -> Vec<CellStep> {
    let n = inputs.len();
    let h = cell.hidden();
    let mut steps: Vec<Option<CellStep>> = vec![None; n];
    let mut prev_h = vec![0.0; h];
    let mut prev_c = vec![0.0; h];
    let mut z = vec![0.0; 4 * h];
    for k in 0..n {
        let t = if reverse { n - 1 - k } else { k };
        let mut input = Vec::with_capacity(inputs[t].len() + h);
        input.extend_from_slice(&inputs[t]);
        input.extend_from_slice(&prev_h);
        cell.weight.affine(&input, &cell.bias, &mut z);
        let mut gates = vec![0.0; 4 * h];
        for j in 0..h {
            gates[j] = sigmoid(z[j]);
            gates[h + j] = sigmoid(z[h + j]);
            gates[2 * h + j] = z[2 * h + j].tanh();
            gates[3 * h + j] = sigmoid(z[3 * h + j]);
        }
        let cell_state: Vec<f64> = (0..h)
            .map(|j| gates[h + j] * prev_c[j] + gates[j] * gates[2 * h + j])
            .collect();
        let cell_tanh: Vec<f64> = cell_state.iter().map(|c| c.tanh()).collect();
        let hidden: Vec<f64> = (0..h).map(|j| gates[3 * h + j] * cell_tanh[j]).collect();
        prev_h.clone_from(&hidden);
        let prev_cell = std::mem::replace(&mut prev_c, cell_state.clone());
        steps[t] = Some(CellStep {
            input,
            gates,
            prev_cell,
            cell: cell_state,
            cell_tanh,
            hidden,
        });
    }
    steps.into_iter().map(|s| s.expect("every step visited")).collect()
}

/// Runs the stacked bidirectional LSTM with zero initial states.
pub fn bilstm_forward(
    params: &ModelParams,
    embedded: &[Vec<f64>],
    mask: &[bool],
) -> Result<ForwardTrace> {
    if embedded.is_empty() {
        return Err(Error::Input("empty input sequence".into()));
    }
    if mask.len() != embedded.len() {
        return Err(Error::Input(format!(
            "mask length {} != sequence length {}",
            mask.len(),
            embedded.len()
        )));
    }
    let dim = params.config.input_dim;
    for (t, e) in embedded.iter().enumerate() {
        if e.len() != dim {
            return Err(Error::Input(format!(
                "input vector {t} has dimension {}, expected {dim}",
                e.len()
            )));
        }
        if e.iter().any(|x| !x.is_finite()) {
            return Err(Error::numeric("input", format!("non-finite embedding at position {t}")));
        }
    }
    let mut layers: Vec<LayerTrace> = Vec::with_capacity(params.layers.len());
    for layer in &params.layers {
        let inputs = layers.last().map_or(embedded, |l: &LayerTrace| &l.output);
        let forward = run_cell(&layer.forward, inputs, false);
        let backward = run_cell(&layer.backward, inputs, true);
        let output = forward
            .iter()
            .zip(&backward)
            .map(|(f, b)| [f.hidden.as_slice(), b.hidden.as_slice()].concat())
            .collect();
        layers.push(LayerTrace {
            forward,
            backward,
            output,
        });
    }
    Ok(ForwardTrace {
        layers,
        mask: mask.to_vec(),
    })
}

fn head_logits(head: &Head, x: &[f64]) -> Vec<f64> {
    (0..head.weight.rows())
        .map(|r| head.bias[r] + dot(head.weight.row(r), x))
        .collect()
}

/// Per-timestep label distributions `softmax(W1·h_t + b)`.
pub fn adr_head_forward(params: &ModelParams, trace: &ForwardTrace) -> Vec<Vec<f64>> {
    trace
        .hidden()
        .iter()
        .map(|h| softmax(&head_logits(&params.adr_head, h)))
        .collect()
}

/// Timesteps that contribute to the pooled sentence vector.
pub fn pooled_positions(pooling: Pooling, mask: &[bool]) -> Vec<usize> {
    let all = || (0..mask.len()).collect();
    match pooling {
        Pooling::Full => all(),
        Pooling::Masked => {
            let kept: Vec<usize> = (0..mask.len()).filter(|&t| mask[t]).collect();
            if kept.is_empty() {
                all()
            } else {
                kept
            }
        }
    }
}

/// Mean-pools h_t and applies `softmax(W2·h + b1)`.
pub fn ade_head_forward(params: &ModelParams, trace: &ForwardTrace) -> AdeOutput {
    let hidden = trace.hidden();
    let positions = pooled_positions(params.config.pooling, &trace.mask);
    let mut pooled = vec![0.0; hidden[0].len()];
    for &t in &positions {
        for (p, v) in pooled.iter_mut().zip(&hidden[t]) {
            *p += v;
        }
    }
    let inv = 1.0 / positions.len() as f64;
    pooled.iter_mut().for_each(|p| *p *= inv);
    let probs = softmax(&head_logits(&params.ade_head, &pooled));
    AdeOutput { pooled, probs }
}
