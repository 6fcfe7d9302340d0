//! Single-task, alternating multi-task and joint-loss training.

mod adam;
mod schedule;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::Example;
use crate::network::{
    backward_with_loss, bilstm_forward, init_params_with, BlockGroup, Gradients, ModelParams,
    NetConfig, Pooling, Target,
};
use crate::rng::indexed_substream;
use crate::text::Tag;

pub use adam::{adam_step, adam_step_where, clip_global_norm, OptimizerState, BETA1, BETA2, EPSILON};
pub use schedule::UpdateSchedule;

#[derive(Clone, Debug, PartialEq)]
pub struct Hyperparams {
    pub hidden: usize,
    pub labels: usize,
    pub input_dim: usize,
    pub max_epochs: usize,
    pub learning_rate: f64,
    pub adr_batch_size: usize,
    pub ade_batch_size: usize,
    pub selftrain_adr_batch_size: usize,
    pub joint_batch_size: usize,
    pub lambda: f64,
    pub tau: f64,
    pub layers: usize,
    pub seed: u64,
    /// Global-norm gradient clip; `None` disables clipping.
    pub grad_clip: Option<f64>,
    pub pooling: Pooling,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            hidden: 500,
            labels: Tag::COUNT,
            input_dim: 400,
            max_epochs: 10,
            learning_rate: 0.001,
            adr_batch_size: 8,
            ade_batch_size: 32,
            selftrain_adr_batch_size: 64,
            joint_batch_size: 32,
            lambda: 0.8,
            tau: 0.5,
            layers: 1,
            seed: 0,
            grad_clip: Some(5.0),
            pooling: Pooling::Full,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("hidden", self.hidden),
            ("labels", self.labels),
            ("input_dim", self.input_dim),
            ("adr_batch_size", self.adr_batch_size),
            ("ade_batch_size", self.ade_batch_size),
            ("selftrain_adr_batch_size", self.selftrain_adr_batch_size),
            ("joint_batch_size", self.joint_batch_size),
            ("layers", self.layers),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.labels != Tag::COUNT {
            return Err(Error::Config(format!("labels must be {}", Tag::COUNT)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        for (name, v) in [("lambda", self.lambda), ("tau", self.tau)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        if let Some(c) = self.grad_clip {
            if c.is_nan() || c <= 0.0 {
                return Err(Error::Config("grad_clip must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn net_config(&self) -> NetConfig {
        NetConfig {
            hidden: self.hidden,
            labels: self.labels,
            input_dim: self.input_dim,
            layers: self.layers,
            seed: self.seed,
            pooling: self.pooling,
        }
    }

    pub fn init(&self) -> ModelParams {
        init_params_with(self.net_config())
    }
}

/// Which objective a minibatch update minimizes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Task {
    Adr,
    Ade,
    Joint { lambda: f64 },
}

impl Task {
    /// Parameter groups the task's update may touch.
    pub fn updates(self, group: BlockGroup) -> bool {
        match self {
            Task::Adr => group != BlockGroup::AdeHead,
            Task::Ade => group != BlockGroup::AdrHead,
            Task::Joint { .. } => true,
        }
    }
}

/// Mean losses over one minibatch.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BatchLoss {
    pub total: f64,
    pub adr: Option<f64>,
    pub ade: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub adr_loss: Option<f64>,
    pub ade_loss: Option<f64>,
    pub joint_loss: Option<f64>,
    pub adr_updates: usize,
    pub ade_updates: usize,
    pub joint_updates: usize,
}

/// Per-epoch metrics of a training run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub epochs: Vec<EpochStats>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.6}"))
}

impl TrainLog {
    /// Tab-separated metrics, one line per epoch after a header.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("epoch\tadr_loss\tade_loss\tjoint_loss\tadr_updates\tade_updates\tjoint_updates\n");
        for e in &self.epochs {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                e.epoch,
                fmt_opt(e.adr_loss),
                fmt_opt(e.ade_loss),
                fmt_opt(e.joint_loss),
                e.adr_updates,
                e.ade_updates,
                e.joint_updates
            ));
        }
        out
    }
}

#[derive(Default)]
struct Mean {
    sum: f64,
    count: usize,
}

impl Mean {
    fn add(&mut self, v: Option<f64>, weight: usize) {
        if let Some(v) = v {
            self.sum += v * weight as f64;
            self.count += weight;
        }
    }

    fn get(&self) -> Option<f64> {
        (self.count > 0).then(|| self.sum / self.count as f64)
    }
}

/// Model parameters with their optimizer state.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub params: ModelParams,
    pub state: OptimizerState,
    learning_rate: f64,
    grad_clip: Option<f64>,
}

impl Trainer {
    pub fn new(params: ModelParams, hyper: &Hyperparams) -> Self {
        let state = OptimizerState::new(&params);
        Trainer {
            params,
            state,
            learning_rate: hyper.learning_rate,
            grad_clip: hyper.grad_clip,
        }
    }

    /// Mean gradient of `task` over `batch`, with mean losses.
    pub fn batch_gradient(&self, batch: &[&Example], task: Task) -> Result<(BatchLoss, Gradients)> {
        if batch.is_empty() {
            return Err(Error::Input("empty minibatch".into()));
        }
        let scale = 1.0 / batch.len() as f64;
        let mut grads = self.params.zeros_like();
        let (mut total, mut adr, mut ade) = (0.0, Mean::default(), Mean::default());
        // per-example gradients are computed in parallel and summed in batch
        // order, so results do not depend on the thread count
        let chunk = rayon::current_num_threads().max(1);
        for part in batch.chunks(chunk) {
            let results: Vec<_> = part
                .par_iter()
                .map(|ex| example_gradient(&self.params, ex, task))
                .collect::<Result<_>>()?;
            for (parts, g) in results {
                grads.add_scaled(&g, scale);
                total += parts.total;
                adr.add(parts.adr, 1);
                ade.add(parts.ade, 1);
            }
        }
        let loss = BatchLoss {
            total: total * scale,
            adr: adr.get(),
            ade: ade.get(),
        };
        Ok((loss, grads))
    }

    /// One optimizer update on `batch`. Only the parameter groups owned by
    /// `task` change.
    pub fn step(&mut self, batch: &[&Example], task: Task) -> Result<BatchLoss> {
        let (loss, mut grads) = self.batch_gradient(batch, task)?;
        if let Some(max) = self.grad_clip {
            clip_global_norm(&mut grads, max, |g| task.updates(g));
        }
        adam_step_where(&mut self.params, &grads, &mut self.state, self.learning_rate, |g| {
            task.updates(g)
        })?;
        Ok(loss)
    }
}

fn example_gradient(params: &ModelParams, ex: &Example, task: Task) -> Result<(crate::network::LossParts, Gradients)> {
    let trace = bilstm_forward(params, &ex.input.inputs, &ex.input.mask)?;
    let target = match task {
        Task::Adr => Target::Adr(
            ex.tags
                .as_deref()
                .ok_or_else(|| Error::Data("ADR example without tags".into()))?,
        ),
        Task::Ade => Target::Ade(
            ex.ade
                .ok_or_else(|| Error::Data("ADE example without label".into()))?,
        ),
        Task::Joint { lambda } => Target::Joint {
            tags: ex.tags.as_deref(),
            ade: ex
                .ade
                .ok_or_else(|| Error::Data("joint example without ADE label".into()))?,
            lambda,
        },
    };
    backward_with_loss(params, &trace, target)
}

/// Example order for one epoch, drawn from stream `stream` of the run seed.
pub fn epoch_order(seed: u64, stream: &str, epoch: usize, len: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(&mut indexed_substream(seed, stream, epoch as u64));
    order
}

fn batches<'a>(data: &'a [Example], order: &[usize], size: usize) -> Vec<Vec<&'a Example>> {
    order
        .chunks(size)
        .map(|c| c.iter().map(|&i| &data[i]).collect())
        .collect()
}

fn check_inputs(data: &[Example], hyper: &Hyperparams, what: &str) -> Result<()> {
    if data.is_empty() {
        return Err(Error::Config(format!("{what} corpus is empty")));
    }
    if let Some(ex) = data.iter().find(|e| e.input.inputs.first().map(Vec::len) != Some(hyper.input_dim)) {
        return Err(Error::Config(format!(
            "{what} input dimension {} does not match input_dim {}",
            ex.input.inputs.first().map_or(0, Vec::len),
            hyper.input_dim
        )));
    }
    Ok(())
}

/// Fully supervised tagging: `max_epochs` passes over shuffled minibatches.
pub fn train_single_task(data: &[Example], hyper: &Hyperparams) -> Result<(ModelParams, TrainLog)> {
    hyper.validate()?;
    check_inputs(data, hyper, "ADR")?;
    let mut trainer = Trainer::new(hyper.init(), hyper);
    let log = fit_tagger(&mut trainer, data, hyper.adr_batch_size, hyper.max_epochs, hyper.seed, "shuffle-adr")?;
    Ok((trainer.params, log))
}

/// Continues tagging-loss training from the trainer's current parameters.
pub fn fit_tagger(
    trainer: &mut Trainer,
    data: &[Example],
    batch_size: usize,
    epochs: usize,
    seed: u64,
    stream: &str,
) -> Result<TrainLog> {
    let mut log = TrainLog::default();
    for epoch in 0..epochs {
        let order = epoch_order(seed, stream, epoch, data.len());
        let mut mean = Mean::default();
        let mut stats = EpochStats {
            epoch: epoch + 1,
            ..Default::default()
        };
        for batch in batches(data, &order, batch_size) {
            let loss = trainer.step(&batch, Task::Adr)?;
            mean.add(loss.adr, batch.len());
            stats.adr_updates += 1;
        }
        stats.adr_loss = mean.get();
        log::info!("epoch {} adr_loss {}", stats.epoch, fmt_opt(stats.adr_loss));
        log.epochs.push(stats);
    }
    Ok(log)
}

/// Alternating multi-task training: per epoch, N tagging updates, each
/// preceded by its share of the M sentence-classification updates.
pub fn train_mtl(adr: &[Example], ade: &[Example], hyper: &Hyperparams) -> Result<(ModelParams, TrainLog)> {
    hyper.validate()?;
    check_inputs(adr, hyper, "ADR")?;
    check_inputs(ade, hyper, "ADE")?;
    let mut trainer = Trainer::new(hyper.init(), hyper);
    let schedule = UpdateSchedule::new(
        adr.len().div_ceil(hyper.adr_batch_size),
        ade.len().div_ceil(hyper.ade_batch_size),
    )?;
    let mut log = TrainLog::default();
    for epoch in 0..hyper.max_epochs {
        let adr_batches = batches(adr, &epoch_order(hyper.seed, "shuffle-adr", epoch, adr.len()), hyper.adr_batch_size);
        let ade_batches = batches(ade, &epoch_order(hyper.seed, "shuffle-ade", epoch, ade.len()), hyper.ade_batch_size);
        let mut stats = EpochStats {
            epoch: epoch + 1,
            ..Default::default()
        };
        let (mut adr_mean, mut ade_mean) = (Mean::default(), Mean::default());
        let mut cursor = 0usize;
        for (i, adr_batch) in adr_batches.iter().enumerate() {
            for _ in 0..schedule.ade_updates_before(i) {
                let batch = &ade_batches[cursor % ade_batches.len()];
                cursor += 1;
                let loss = trainer.step(batch, Task::Ade)?;
                ade_mean.add(loss.ade, batch.len());
                stats.ade_updates += 1;
            }
            let loss = trainer.step(adr_batch, Task::Adr)?;
            adr_mean.add(loss.adr, adr_batch.len());
            stats.adr_updates += 1;
        }
        stats.adr_loss = adr_mean.get();
        stats.ade_loss = ade_mean.get();
        log::info!(
            "epoch {} adr_loss {} ade_loss {} ({} ADR / {} ADE updates)",
            stats.epoch,
            fmt_opt(stats.adr_loss),
            fmt_opt(stats.ade_loss),
            stats.adr_updates,
            stats.ade_updates
        );
        log.epochs.push(stats);
    }
    Ok((trainer.params, log))
}

/// Joint-loss training where every example carries an ADE label and, when
/// that label is 1, a tag sequence.
pub fn train_joint(data: &[Example], hyper: &Hyperparams) -> Result<(ModelParams, TrainLog)> {
    hyper.validate()?;
    check_inputs(data, hyper, "joint")?;
    for (i, ex) in data.iter().enumerate() {
        match ex.ade {
            None => return Err(Error::Data(format!("joint example {i} has no ADE label"))),
            Some(1) if ex.tags.is_none() => {
                return Err(Error::Data(format!("joint example {i} has ADE label 1 but no tags")))
            }
            _ => {}
        }
    }
    let mut trainer = Trainer::new(hyper.init(), hyper);
    let task = Task::Joint { lambda: hyper.lambda };
    let mut log = TrainLog::default();
    for epoch in 0..hyper.max_epochs {
        let order = epoch_order(hyper.seed, "shuffle-joint", epoch, data.len());
        let mut stats = EpochStats {
            epoch: epoch + 1,
            ..Default::default()
        };
        let (mut joint, mut adr_mean, mut ade_mean) = (Mean::default(), Mean::default(), Mean::default());
        for batch in batches(data, &order, hyper.joint_batch_size) {
            let loss = trainer.step(&batch, task)?;
            joint.add(Some(loss.total), batch.len());
            // tagging loss is averaged over the examples whose gate is open
            let open = batch.iter().filter(|e| e.ade == Some(1)).count();
            adr_mean.add(loss.adr, open);
            ade_mean.add(loss.ade, batch.len());
            stats.joint_updates += 1;
        }
        stats.joint_loss = joint.get();
        stats.adr_loss = adr_mean.get();
        stats.ade_loss = ade_mean.get();
        log::info!(
            "epoch {} joint_loss {} adr_loss {} ade_loss {}",
            stats.epoch,
            fmt_opt(stats.joint_loss),
            fmt_opt(stats.adr_loss),
            fmt_opt(stats.ade_loss)
        );
        log.epochs.push(stats);
    }
    Ok((trainer.params, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embeddings::EmbeddingTable;
    use crate::features::Featurizer;
    use crate::synth::{make_synthetic_corpus, SynthConfig};
    use crate::text::Vocabulary;

    const DIM: usize = 6;

    fn hyper() -> Hyperparams {
        Hyperparams {
            hidden: 4,
            input_dim: DIM,
            max_epochs: 2,
            adr_batch_size: 2,
            ade_batch_size: 2,
            joint_batch_size: 4,
            seed: 3,
            ..Default::default()
        }
    }

    fn data(n_adr: usize, n_ade: usize) -> (Vec<Example>, Vec<Example>) {
        let cfg = SynthConfig {
            n_adr,
            n_ade,
            n_pool: 0,
            min_len: 5,
            max_len: 6,
            ..Default::default()
        };
        let c = make_synthetic_corpus(&cfg, 1).unwrap();
        let words = cfg.all_words();
        let vocab = Vocabulary::build([words.as_slice()], usize::MAX);
        let f = Featurizer::new(vocab, EmbeddingTable::empty(DIM, 0), 6);
        (f.adr_examples(&c.adr).unwrap(), f.ade_examples(&c.ade).unwrap())
    }

    #[test]
    fn zero_epochs_returns_initial_params() {
        let (adr, _) = data(6, 0);
        let h = Hyperparams { max_epochs: 0, ..hyper() };
        let (p, log) = train_single_task(&adr, &h).unwrap();
        assert_eq!(p, h.init());
        assert!(log.epochs.is_empty());
    }

    #[test]
    fn single_task_is_deterministic() {
        let (adr, _) = data(10, 0);
        let a = train_single_task(&adr, &hyper()).unwrap();
        let b = train_single_task(&adr, &hyper()).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.0, hyper().init());
        assert_eq!(a.1.epochs[0].adr_updates, 5);
    }

    #[test]
    fn empty_corpora_rejected() {
        let (adr, ade) = data(4, 4);
        assert!(matches!(train_single_task(&[], &hyper()), Err(Error::Config(_))));
        assert!(matches!(train_mtl(&adr, &[], &hyper()), Err(Error::Config(_))));
        assert!(matches!(train_mtl(&[], &ade, &hyper()), Err(Error::Config(_))));
        let bad = Hyperparams { input_dim: DIM + 1, ..hyper() };
        assert!(matches!(train_single_task(&adr, &bad), Err(Error::Config(_))));
    }

    #[test]
    fn mtl_update_accounting() {
        // N = 4 ADR batches, M = 12 ADE batches (batch size 2)
        let (adr, ade) = data(8, 24);
        let (_, log) = train_mtl(&adr, &ade, &hyper()).unwrap();
        for e in &log.epochs {
            assert_eq!((e.ade_updates, e.adr_updates), (12, 4));
        }
        let (adr, ade) = data(8, 20);
        let (_, log) = train_mtl(&adr, &ade, &hyper()).unwrap();
        assert!(log.epochs.iter().all(|e| (e.ade_updates, e.adr_updates) == (10, 4)));
        // M < N still uses every ADE batch
        let (adr, ade) = data(8, 4);
        let (_, log) = train_mtl(&adr, &ade, &hyper()).unwrap();
        assert!(log.epochs.iter().all(|e| (e.ade_updates, e.adr_updates) == (2, 4)));
    }

    #[test]
    fn task_updates_leave_the_other_head_alone() {
        let (adr, ade) = data(4, 4);
        let h = hyper();
        let mut t = Trainer::new(h.init(), &h);
        let before = t.params.clone();
        t.step(&[&ade[0], &ade[1]], Task::Ade).unwrap();
        assert_eq!(t.params.adr_head, before.adr_head);
        assert_ne!(t.params.ade_head, before.ade_head);
        assert_ne!(t.params.layers, before.layers);

        let mid = t.params.clone();
        t.step(&[&adr[0], &adr[1]], Task::Adr).unwrap();
        assert_eq!(t.params.ade_head, mid.ade_head);
        assert_ne!(t.params.adr_head, mid.adr_head);
        assert_ne!(t.params.layers, mid.layers);
    }

    fn joint_examples(adr: &[Example], ade_label: impl Fn(usize) -> usize) -> Vec<Example> {
        adr.iter()
            .enumerate()
            .map(|(i, e)| Example {
                ade: Some(ade_label(i)),
                tags: if ade_label(i) == 1 { e.tags.clone() } else { None },
                input: e.input.clone(),
            })
            .collect()
    }

    #[test]
    fn joint_gate_freezes_tagging_head_on_negative_corpus() {
        let (adr, _) = data(12, 0);
        let joint = joint_examples(&adr, |_| 0);
        let h = hyper();
        let (p, log) = train_joint(&joint, &h).unwrap();
        let init = h.init();
        assert_eq!(p.adr_head, init.adr_head);
        assert_ne!(p.layers, init.layers);
        assert!(log.epochs.iter().all(|e| e.adr_loss.is_none()));
    }

    #[test]
    fn joint_rejects_positive_without_tags() {
        let (adr, _) = data(4, 0);
        let mut joint = joint_examples(&adr, |_| 1);
        joint[2].tags = None;
        assert!(matches!(train_joint(&joint, &hyper()), Err(Error::Data(_))));
    }

    #[test]
    fn lambda_zero_matches_sentence_only_training() {
        let (adr, _) = data(10, 0);
        let joint = joint_examples(&adr, |i| i % 2);
        let h = Hyperparams { lambda: 0.0, ..hyper() };
        let (p, _) = train_joint(&joint, &h).unwrap();

        let mut t = Trainer::new(h.init(), &h);
        for epoch in 0..h.max_epochs {
            let order = epoch_order(h.seed, "shuffle-joint", epoch, joint.len());
            for batch in batches(&joint, &order, h.joint_batch_size) {
                t.step(&batch, Task::Ade).unwrap();
            }
        }
        assert_eq!(p, t.params);
    }

    #[test]
    fn batch_gradient_is_mean_of_examples() {
        let (adr, _) = data(3, 0);
        let h = hyper();
        let t = Trainer::new(h.init(), &h);
        let (loss, g) = t.batch_gradient(&[&adr[0], &adr[1], &adr[2]], Task::Adr).unwrap();
        let mut expected = t.params.zeros_like();
        let mut total = 0.0;
        for ex in &adr {
            let (l, gi) = t.batch_gradient(&[ex], Task::Adr).unwrap();
            expected.add_scaled(&gi, 1.0 / 3.0);
            total += l.total / 3.0;
        }
        assert!((loss.total - total).abs() < 1e-12);
        for (a, b) in g.blocks().iter().zip(expected.blocks()) {
            for (x, y) in a.data.iter().zip(b.data) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn hyperparam_validation() {
        assert!(Hyperparams::default().validate().is_ok());
        assert!(Hyperparams { lambda: 1.2, ..Default::default() }.validate().is_err());
        assert!(Hyperparams { tau: -0.1, ..Default::default() }.validate().is_err());
        assert!(Hyperparams { adr_batch_size: 0, ..Default::default() }.validate().is_err());
        assert!(Hyperparams { labels: 3, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn log_is_tab_separated() {
        let log = TrainLog {
            epochs: vec![EpochStats { epoch: 1, adr_loss: Some(0.5), adr_updates: 3, ..Default::default() }],
        };
        let tsv = log.to_tsv();
        let lines: Vec<&str> = tsv.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[1], "1\t0.500000\tNA\tNA\t3\t0\t0");
    }
}
