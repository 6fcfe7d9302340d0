//! Bidirectional LSTM transducer with a token-tagging head and a
//! sentence-classification head.

mod backward;
pub mod checkpoint;
mod decode;
mod forward;
pub mod gradcheck;
mod loss;
mod matrix;
mod params;

pub use backward::{backward, backward_with_loss, loss_value, LossParts, Target};
pub use decode::{argmax, decode_greedy};
pub use forward::{
    ade_head_forward, adr_head_forward, bilstm_forward, softmax, AdeOutput, CellStep, ForwardTrace,
    LayerTrace,
};
pub use loss::{ade_loss, ade_loss_label, adr_loss, adr_loss_tags, joint_loss, LOG_FLOOR};
pub use matrix::Matrix;
pub use params::{
    init_params, init_params_with, BiLstmLayer, Block, BlockGroup, BlockMut, Gradients, Head,
    LstmCell, ModelParams, NetConfig, Pooling,
};
