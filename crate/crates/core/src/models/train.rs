use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::arch::{Head, Model};
use super::dataset::Dataset;
use crate::error::{Error, Result};
use crate::numerics::{softmax_rows, Graph, NodeId, OptimizerConfig, OptimizerState, Tensor};
use crate::risk::LossFn;
use crate::rng::Seeder;
use crate::simplex::argmax;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LrSchedule {
    #[default]
    Constant,
    /// Cosine decay from the base rate to `final_fraction` of it.
    Cosine { final_fraction: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub loss: LossFn,
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub schedule: LrSchedule,
    /// Rows per step, drawn uniformly with replacement. `0` or anything at
    /// least the dataset size means full batch.
    pub batch_size: usize,
    pub iterations: usize,
    pub checkpoint_interval: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.checkpoint_interval == 0 {
            return Err(Error::Config("checkpoint_interval must be positive".into()));
        }
        if !self.iterations.is_multiple_of(self.checkpoint_interval) {
            return Err(Error::Config(format!(
                "iterations ({}) must be a multiple of checkpoint_interval ({})",
                self.iterations, self.checkpoint_interval
            )));
        }
        if !(self.optimizer.lr > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        Ok(())
    }

    fn lr_at(&self, iteration: usize) -> f64 {
        let base = self.optimizer.lr;
        match self.schedule {
            LrSchedule::Constant => base,
            LrSchedule::Cosine { final_fraction } => {
                let t = iteration as f64 / self.iterations.max(1) as f64;
                let c = 0.5 * (1.0 + (PI * t).cos());
                base * (final_fraction + (1.0 - final_fraction) * c)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub iteration: usize,
    /// Objective over the whole training set.
    pub objective: f64,
    pub snapshot: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub checkpoints: Vec<Checkpoint>,
    /// Index into `checkpoints`.
    pub selected: usize,
    #[serde(skip)]
    pub snapshots: Vec<Vec<Tensor>>,
}

impl TrainRecord {
    pub fn objectives(&self) -> Vec<f64> {
        self.checkpoints.iter().map(|c| c.objective).collect()
    }

    pub fn selected_checkpoint(&self) -> &Checkpoint {
        &self.checkpoints[self.selected]
    }

    /// Parameters saved at checkpoint `index`.
    pub fn snapshot_params(&self, index: usize) -> &[Tensor] {
        &self.snapshots[self.checkpoints[index].snapshot]
    }

    /// Copy of `model` carrying checkpoint `index`'s parameters.
    pub fn restore<M: Model>(&self, model: &M, index: usize) -> M {
        let mut m = model.clone();
        m.params_mut().clone_from_slice(self.snapshot_params(index));
        m
    }
}

/// Index of the checkpoint with minimal objective; ties go to the earliest.
pub fn select_checkpoint(checkpoints: &[Checkpoint]) -> Result<usize> {
    if checkpoints.is_empty() {
        return Err(Error::Domain("no checkpoints recorded".into()));
    }
    let mut best = 0;
    for (i, c) in checkpoints.iter().enumerate().skip(1) {
        if c.objective < checkpoints[best].objective {
            best = i;
        }
    }
    Ok(best)
}

/// Records the batch objective `Σ_b W_bk · ℓ_bk` on `graph` and returns
/// the loss node. `row_weights` must sum to one.
fn batch_loss<M: Model>(
    model: &M,
    graph: &mut Graph,
    params: &[NodeId],
    inputs: Tensor,
    targets: &Tensor,
    row_weights: &[f64],
    loss: LossFn,
) -> Result<NodeId> {
    let out_dim = targets.cols();
    let x = graph.input(inputs);
    let raw = model.forward(graph, x, params)?;
    let weight_matrix = |scale_by: Option<&Tensor>| {
        let mut data = Vec::with_capacity(row_weights.len() * out_dim);
        for (r, w) in row_weights.iter().enumerate() {
            for k in 0..out_dim {
                data.push(w * scale_by.map_or(1.0, |t| t.data()[r * out_dim + k]));
            }
        }
        Tensor::new(vec![row_weights.len(), out_dim], data).expect("shape matches data")
    };
    match loss {
        LossFn::L2 => {
            let pred = match model.head() {
                Head::Identity => raw,
                Head::Softmax => graph.softmax(raw)?,
            };
            let t = graph.input(targets.clone());
            let diff = graph.sub(pred, t)?;
            let sq = graph.square(diff)?;
            let w = graph.input(weight_matrix(None));
            let weighted = graph.mul(w, sq)?;
            Ok(graph.sum(weighted))
        }
        LossFn::CrossEntropy => {
            if model.head() != Head::Softmax {
                return Err(Error::Unsupported("cross-entropy needs a softmax head".into()));
            }
            let ls = graph.log_softmax(raw)?;
            let wt = graph.input(weight_matrix(Some(targets)));
            let prod = graph.mul(wt, ls)?;
            let total = graph.sum(prod);
            Ok(graph.scale(total, -1.0))
        }
    }
}

const EVAL_CHUNK: usize = 2048;

fn normalized_weights(data: &Dataset, rows: &[usize]) -> Vec<f64> {
    match &data.weights {
        None => vec![1.0 / rows.len() as f64; rows.len()],
        Some(w) => {
            let total: f64 = rows.iter().map(|&i| w[i]).sum();
            rows.iter().map(|&i| w[i] / total).collect()
        }
    }
}

/// Weighted mean loss over the whole dataset, `Σ w_n ℓ_n / Σ w_n`.
pub fn objective<M: Model>(model: &M, data: &Dataset, loss: LossFn) -> Result<f64> {
    let n = data.len();
    let total_weight = data.weights.as_ref().map_or(n as f64, |w| w.iter().sum());
    let mut acc = 0.0;
    for start in (0..n).step_by(EVAL_CHUNK) {
        let rows: Vec<usize> = (start..(start + EVAL_CHUNK).min(n)).collect();
        let weights: Vec<f64> = match &data.weights {
            None => vec![1.0 / total_weight; rows.len()],
            Some(w) => rows.iter().map(|&i| w[i] / total_weight).collect(),
        };
        let mut g = Graph::new();
        let params: Vec<NodeId> = model.params().iter().map(|p| g.input(p.clone())).collect();
        let l = batch_loss(
            model,
            &mut g,
            &params,
            data.inputs.select_rows(&rows),
            &data.targets.select_rows(&rows),
            &weights,
            loss,
        )?;
        acc += g.value(l).item()?;
    }
    Ok(acc)
}

/// Minimizes the empirical objective `E[L(f(y; θ), label)]` by minibatch
/// (or full-batch) optimization. Checkpoints are taken at iteration 0 and
/// every `checkpoint_interval` steps; the returned model carries the
/// checkpoint with the smallest whole-dataset objective.
pub fn train_supervised<M: Model>(mut model: M, data: &Dataset, cfg: &TrainConfig) -> Result<(M, TrainRecord)> {
    cfg.validate()?;
    if data.input_dim() != model.input_dim() || data.target_dim() != model.output_dim() {
        return Err(Error::ShapeMismatch {
            op: "train_supervised",
            lhs: vec![model.input_dim(), model.output_dim()],
            rhs: vec![data.input_dim(), data.target_dim()],
        });
    }
    let seeder = Seeder::new(cfg.seed);
    let n = data.len();
    let full_batch = cfg.batch_size == 0 || cfg.batch_size >= n;
    let all_rows: Vec<usize> = (0..n).collect();
    let full_weights = normalized_weights(data, &all_rows);
    let mut opt = OptimizerState::new(cfg.optimizer, model.params());
    let mut record = TrainRecord {
        checkpoints: Vec::new(),
        selected: 0,
        snapshots: Vec::new(),
    };
    let checkpoint = |model: &M, iteration: usize, record: &mut TrainRecord| -> Result<()> {
        let value = objective(model, data, cfg.loss)?;
        if !value.is_finite() {
            return Err(Error::Divergence { iteration, value });
        }
        record.snapshots.push(model.params().to_vec());
        record.checkpoints.push(Checkpoint {
            iteration,
            objective: value,
            snapshot: record.snapshots.len() - 1,
        });
        Ok(())
    };
    checkpoint(&model, 0, &mut record)?;
    for it in 1..=cfg.iterations {
        let mut g = Graph::new();
        let params: Vec<NodeId> = model.params().iter().map(|p| g.param(p.clone())).collect();
        let l = if full_batch {
            batch_loss(&model, &mut g, &params, data.inputs.clone(), &data.targets, &full_weights, cfg.loss)?
        } else {
            let mut rng = seeder.stream("train.batch", it as u64);
            let rows: Vec<usize> = (0..cfg.batch_size).map(|_| rng.random_range(0..n)).collect();
            let weights = normalized_weights(data, &rows);
            batch_loss(
                &model,
                &mut g,
                &params,
                data.inputs.select_rows(&rows),
                &data.targets.select_rows(&rows),
                &weights,
                cfg.loss,
            )?
        };
        let value = g.value(l).item()?;
        if !value.is_finite() {
            return Err(Error::Divergence { iteration: it, value });
        }
        let mut grads = g.backward(l)?;
        let grads: Vec<Tensor> = params.iter().map(|&p| grads.take(p)).collect();
        opt.config.lr = cfg.lr_at(it - 1);
        opt.step(model.params_mut(), &grads)?;
        if it % cfg.checkpoint_interval == 0 {
            checkpoint(&model, it, &mut record)?;
        }
    }
    record.selected = select_checkpoint(&record.checkpoints)?;
    let chosen = record.restore(&model, record.selected);
    Ok((chosen, record))
}

/// Predictions for `[n, input_dim]` inputs, head applied.
pub fn predict<M: Model>(model: &M, inputs: &Tensor) -> Result<Tensor> {
    if inputs.cols() != model.input_dim() {
        return Err(Error::ShapeMismatch {
            op: "predict",
            lhs: vec![model.input_dim()],
            rhs: inputs.shape().to_vec(),
        });
    }
    let n = inputs.rows();
    let mut data = Vec::with_capacity(n * model.output_dim());
    for start in (0..n).step_by(EVAL_CHUNK) {
        let rows: Vec<usize> = (start..(start + EVAL_CHUNK).min(n)).collect();
        let mut g = Graph::new();
        let params: Vec<NodeId> = model.params().iter().map(|p| g.input(p.clone())).collect();
        let x = g.input(inputs.select_rows(&rows));
        let raw = model.forward(&mut g, x, &params)?;
        let out = match model.head() {
            Head::Identity => g.value(raw).clone(),
            Head::Softmax => softmax_rows(g.value(raw)),
        };
        data.extend_from_slice(out.data());
    }
    Tensor::new(vec![n, model.output_dim()], data)
}

/// Argmax class per row; ties go to the lowest index.
pub fn predict_class<M: Model>(model: &M, inputs: &Tensor) -> Result<Vec<usize>> {
    let p = predict(model, inputs)?;
    Ok((0..p.rows()).map(|r| argmax(p.row(r))).collect())
}
