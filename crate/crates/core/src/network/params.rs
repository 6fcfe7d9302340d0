use rand::Rng;

use super::matrix::Matrix;
use crate::rng::substream;

/// How the sentence head pools timestep states.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Pooling {
    /// Mean over every padded timestep (divide by n).
    #[default]
    Full,
    /// Mean over non-padding timesteps only.
    Masked,
}

impl Pooling {
    pub fn as_str(self) -> &'static str {
        match self {
            Pooling::Full => "full",
            Pooling::Masked => "masked",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "full" => Some(Pooling::Full),
            "masked" => Some(Pooling::Masked),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NetConfig {
    pub hidden: usize,
    pub labels: usize,
    pub input_dim: usize,
    pub layers: usize,
    pub seed: u64,
    pub pooling: Pooling,
}

/// One LSTM direction. Gate rows are stacked as input, forget, candidate,
/// output; columns are the layer input followed by the previous hidden state.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmCell {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl LstmCell {
    pub fn hidden(&self) -> usize {
        self.bias.len() / 4
    }

    pub fn input_dim(&self) -> usize {
        self.weight.cols() - self.hidden()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BiLstmLayer {
    pub forward: LstmCell,
    pub backward: LstmCell,
}

/// Affine output layer followed by a softmax.
#[derive(Clone, Debug, PartialEq)]
pub struct Head {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

/// Which task owns a parameter block.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BlockGroup {
    Shared,
    AdrHead,
    AdeHead,
}

/// Shared bi-LSTM stack plus the token-tagging head (`adr_head`) and the
/// sentence-classification head (`ade_head`).
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub config: NetConfig,
    pub layers: Vec<BiLstmLayer>,
    pub adr_head: Head,
    pub ade_head: Head,
}

/// Gradients share the parameter layout.
pub type Gradients = ModelParams;

pub struct Block<'a> {
    pub name: String,
    pub group: BlockGroup,
    pub rows: usize,
    pub cols: usize,
    pub data: &'a [f64],
}

pub struct BlockMut<'a> {
    pub name: String,
    pub group: BlockGroup,
    pub data: &'a mut [f64],
}

fn glorot<R: Rng>(rng: &mut R, rows: usize, cols: usize, fan_in: usize, fan_out: usize) -> Matrix {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.gen_range(-limit..=limit)).collect();
    Matrix::from_vec(rows, cols, data).expect("shape")
}

fn init_cell<R: Rng>(rng: &mut R, input: usize, hidden: usize) -> LstmCell {
    let weight = glorot(rng, 4 * hidden, input + hidden, input + hidden, 4 * hidden);
    let mut bias = vec![0.0; 4 * hidden];
    bias[hidden..2 * hidden].fill(1.0);
    LstmCell { weight, bias }
}

/// Glorot-uniform weights, zero biases except the forget gate (1.0).
/// Deterministic in `seed`.
pub fn init_params(
    hidden: usize,
    labels: usize,
    input_dim: usize,
    layers: usize,
    seed: u64,
) -> ModelParams {
    init_params_with(NetConfig {
        hidden,
        labels,
        input_dim,
        layers,
        seed,
        pooling: Pooling::Full,
    })
}

pub fn init_params_with(config: NetConfig) -> ModelParams {
    assert!(
        config.hidden > 0 && config.labels > 0 && config.input_dim > 0 && config.layers > 0,
        "network dimensions must be positive"
    );
    let mut rng = substream(config.seed, "init");
    let h = config.hidden;
    let layers = (0..config.layers)
        .map(|l| {
            let input = if l == 0 { config.input_dim } else { 2 * h };
            BiLstmLayer {
                forward: init_cell(&mut rng, input, h),
                backward: init_cell(&mut rng, input, h),
            }
        })
        .collect();
    let adr_head = Head {
        weight: glorot(&mut rng, config.labels, 2 * h, 2 * h, config.labels),
        bias: vec![0.0; config.labels],
    };
    let ade_head = Head {
        weight: glorot(&mut rng, 2, 2 * h, 2 * h, 2),
        bias: vec![0.0; 2],
    };
    ModelParams {
        config,
        layers,
        adr_head,
        ade_head,
    }
}

impl ModelParams {
    pub fn zeros_like(&self) -> Gradients {
        let mut z = self.clone();
        for b in z.blocks_mut() {
            b.data.fill(0.0);
        }
        z
    }

    pub fn hidden(&self) -> usize {
        self.config.hidden
    }

    pub fn labels(&self) -> usize {
        self.config.labels
    }

    /// Every parameter block in a fixed order.
    pub fn blocks(&self) -> Vec<Block<'_>> {
        let mut out = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            for (dir, cell) in [("fwd", &layer.forward), ("bwd", &layer.backward)] {
                out.push(Block {
                    name: format!("layer{l}.{dir}.weight"),
                    group: BlockGroup::Shared,
                    rows: cell.weight.rows(),
                    cols: cell.weight.cols(),
                    data: cell.weight.as_slice(),
                });
                out.push(Block {
                    name: format!("layer{l}.{dir}.bias"),
                    group: BlockGroup::Shared,
                    rows: 1,
                    cols: cell.bias.len(),
                    data: &cell.bias,
                });
            }
        }
        for (name, group, head) in [
            ("adr_head", BlockGroup::AdrHead, &self.adr_head),
            ("ade_head", BlockGroup::AdeHead, &self.ade_head),
        ] {
            out.push(Block {
                name: format!("{name}.weight"),
                group,
                rows: head.weight.rows(),
                cols: head.weight.cols(),
                data: head.weight.as_slice(),
            });
            out.push(Block {
                name: format!("{name}.bias"),
                group,
                rows: 1,
                cols: head.bias.len(),
                data: &head.bias,
            });
        }
        out
    }

    pub fn blocks_mut(&mut self) -> Vec<BlockMut<'_>> {
        let mut out = Vec::new();
        for (l, layer) in self.layers.iter_mut().enumerate() {
            for (dir, cell) in [("fwd", &mut layer.forward), ("bwd", &mut layer.backward)] {
                out.push(BlockMut {
                    name: format!("layer{l}.{dir}.weight"),
                    group: BlockGroup::Shared,
                    data: cell.weight.as_mut_slice(),
                });
                out.push(BlockMut {
                    name: format!("layer{l}.{dir}.bias"),
                    group: BlockGroup::Shared,
                    data: &mut cell.bias,
                });
            }
        }
        for (name, group, head) in [
            ("adr_head", BlockGroup::AdrHead, &mut self.adr_head),
            ("ade_head", BlockGroup::AdeHead, &mut self.ade_head),
        ] {
            out.push(BlockMut {
                name: format!("{name}.weight"),
                group,
                data: head.weight.as_mut_slice(),
            });
            out.push(BlockMut {
                name: format!("{name}.bias"),
                group,
                data: &mut head.bias,
            });
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.blocks().iter().map(|b| b.data.len()).sum()
    }

    /// `self += scale * other`, block by block.
    pub fn add_scaled(&mut self, other: &ModelParams, scale: f64) {
        for (dst, src) in self.blocks_mut().into_iter().zip(other.blocks()) {
            for (d, s) in dst.data.iter_mut().zip(src.data) {
                *d += scale * s;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for b in self.blocks_mut() {
            b.data.iter_mut().for_each(|x| *x *= factor);
        }
    }

    /// L2 norm over the blocks whose group passes `include`.
    pub fn norm_where(&self, include: impl Fn(BlockGroup) -> bool) -> f64 {
        self.blocks()
            .iter()
            .filter(|b| include(b.group))
            .flat_map(|b| b.data.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.blocks().iter().all(|b| b.data.iter().all(|x| x.is_finite()))
    }
}
