//! Central finite-difference check of the analytic gradients.
//!
//! The numeric side only ever calls the forward pass and the loss, so it
//! stays independent of the backpropagation code it validates.

use rand::Rng;

use super::backward::{backward, loss_value, Target};
use super::forward::bilstm_forward;
use super::params::{init_params_with, Gradients, ModelParams, NetConfig, Pooling};
use crate::error::Result;
use crate::rng::indexed_substream;
use crate::text::Tag;

pub const FD_STEP: f64 = 1e-5;
pub const REL_TOL: f64 = 1e-4;
pub const ABS_FLOOR: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossKind {
    Adr,
    Ade,
    Joint,
}

impl LossKind {
    pub const ALL: [LossKind; 3] = [LossKind::Adr, LossKind::Ade, LossKind::Joint];

    pub fn as_str(self) -> &'static str {
        match self {
            LossKind::Adr => "ADR",
            LossKind::Ade => "ADE",
            LossKind::Joint => "JOINT",
        }
    }
}

#[derive(Clone, Debug)]
pub struct BlockCheck {
    pub block: String,
    pub kind: LossKind,
    pub entries: usize,
    pub max_abs_err: f64,
    pub max_rel_err: f64,
    pub passed: bool,
}

/// One randomly drawn problem for the checker.
#[derive(Clone, Debug)]
pub struct Problem {
    pub params: ModelParams,
    pub inputs: Vec<Vec<f64>>,
    pub mask: Vec<bool>,
    pub tags: Vec<Tag>,
    pub ade: usize,
    pub lambda: f64,
}

impl Problem {
    /// A random model with `hidden ≤ 8`, length `≤ 6` and 1–2 layers,
    /// drawn from stream `index` of `seed`.
    pub fn random(seed: u64, index: u64) -> Problem {
        let mut rng = indexed_substream(seed, "gradcheck", index);
        let hidden = rng.gen_range(1..=8);
        let n = rng.gen_range(1..=6);
        let layers = rng.gen_range(1..=2);
        let input_dim = rng.gen_range(1..=5);
        let pooling = if rng.gen_bool(0.5) { Pooling::Full } else { Pooling::Masked };
        let mut params = init_params_with(NetConfig {
            hidden,
            labels: Tag::COUNT,
            input_dim,
            layers,
            seed: rng.gen(),
            pooling,
        });
        // move biases off their init values so every path carries signal
        for b in params.blocks_mut() {
            if b.name.ends_with("bias") {
                b.data.iter_mut().for_each(|x| *x += rng.gen_range(-0.5..0.5));
            }
        }
        Self::with_params(params, n, &mut rng)
    }

    pub fn with_params<R: Rng>(params: ModelParams, n: usize, rng: &mut R) -> Problem {
        let input_dim = params.config.input_dim;
        let original = rng.gen_range(1..=n);
        let inputs = (0..n)
            .map(|t| {
                if t < original {
                    (0..input_dim).map(|_| rng.gen_range(-1.0..1.0)).collect()
                } else {
                    vec![0.0; input_dim]
                }
            })
            .collect();
        let mask = (0..n).map(|t| t < original).collect();
        let tags = (0..n)
            .map(|t| {
                if t < original {
                    Tag::from_index(rng.gen_range(0..3)).unwrap()
                } else {
                    Tag::Pad
                }
            })
            .collect();
        Problem {
            params,
            inputs,
            mask,
            tags,
            ade: 1,
            lambda: rng.gen_range(0.1..0.9),
        }
    }

    pub fn target(&self, kind: LossKind) -> Target<'_> {
        match kind {
            LossKind::Adr => Target::Adr(&self.tags),
            LossKind::Ade => Target::Ade(self.ade),
            LossKind::Joint => Target::Joint {
                tags: Some(&self.tags),
                ade: self.ade,
                lambda: self.lambda,
            },
        }
    }

    fn loss(&self, params: &ModelParams, kind: LossKind) -> Result<f64> {
        let trace = bilstm_forward(params, &self.inputs, &self.mask)?;
        Ok(loss_value(params, &trace, self.target(kind))?.total)
    }

    /// Compares every gradient entry against central differences.
    pub fn check(&self, kind: LossKind) -> Result<Vec<BlockCheck>> {
        let trace = bilstm_forward(&self.params, &self.inputs, &self.mask)?;
        let analytic = backward(&self.params, &trace, self.target(kind))?;
        self.compare(&analytic, kind)
    }

    /// Compares a supplied gradient against central differences.
    pub fn compare(&self, analytic: &Gradients, kind: LossKind) -> Result<Vec<BlockCheck>> {
        let mut probe = self.params.clone();
        let mut out = Vec::new();
        let names: Vec<String> = self.params.blocks().into_iter().map(|b| b.name).collect();
        for (bi, name) in names.into_iter().enumerate() {
            let grad = analytic.blocks()[bi].data.to_vec();
            let mut check = BlockCheck {
                block: name,
                kind,
                entries: grad.len(),
                max_abs_err: 0.0,
                max_rel_err: 0.0,
                passed: true,
            };
            for (i, &a) in grad.iter().enumerate() {
                let orig = probe.blocks()[bi].data[i];
                probe.blocks_mut()[bi].data[i] = orig + FD_STEP;
                let plus = self.loss(&probe, kind)?;
                probe.blocks_mut()[bi].data[i] = orig - FD_STEP;
                let minus = self.loss(&probe, kind)?;
                probe.blocks_mut()[bi].data[i] = orig;
                let numeric = (plus - minus) / (2.0 * FD_STEP);
                let abs = (a - numeric).abs();
                let rel = abs / a.abs().max(numeric.abs()).max(f64::MIN_POSITIVE);
                check.max_abs_err = check.max_abs_err.max(abs);
                if abs > ABS_FLOOR {
                    check.max_rel_err = check.max_rel_err.max(rel);
                    if rel > REL_TOL {
                        check.passed = false;
                    }
                }
            }
            out.push(check);
        }
        Ok(out)
    }
}

/// Runs `configs` random problems through all three loss kinds.
pub fn run_suite(seed: u64, configs: usize) -> Result<Vec<BlockCheck>> {
    let mut all = Vec::new();
    for i in 0..configs {
        let problem = Problem::random(seed, i as u64);
        for kind in LossKind::ALL {
            all.extend(problem.check(kind)?);
        }
    }
    Ok(all)
}
