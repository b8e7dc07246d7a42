use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::{
    build_noisy_dataset, calibrate_alpha_from_generated, ce_bar_f, ce_bar_q, reference_outputs,
    theory_accuracy, LabeledSet,
};
use super::qy::{NoiseKind, NoiseSpec};
use crate::error::{Error, Result};
use crate::models::{
    one_hot_rows, predict, predict_class, train_supervised, Dataset, Head, ModelSpec, TableModel, TrainConfig,
};
use crate::numerics::Tensor;
use crate::risk::LossFn;
use crate::rng::Seeder;
use crate::simplex::SimplexVec;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub kind: NoiseKind,
    /// `α` for uniform/biased, `β` for generated.
    pub level: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableCheckConfig {
    pub beta: f64,
    pub draws: usize,
    #[serde(default = "one")]
    pub points_per_class: usize,
    pub train: TrainConfig,
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoisyLabelConfig {
    /// Each `β` yields generated noise plus uniform and biased noise at the
    /// `α` calibrated from it, so all three share a correct-label rate.
    pub matched_betas: Vec<f64>,
    #[serde(default)]
    pub extra: Vec<SweepEntry>,
    pub model: ModelSpec,
    pub train: TrainConfig,
    pub reference_model: ModelSpec,
    pub reference_train: TrainConfig,
    #[serde(default)]
    pub table_check: Option<TableCheckConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoisyLabelRow {
    pub noise_type: NoiseKind,
    /// The `β` a matched row was calibrated from, or the row's own parameter.
    pub level: f64,
    pub alpha_or_beta: f64,
    pub eta: f64,
    pub eta_expected: f64,
    pub ce_bar_f: f64,
    pub ce_bar_q: f64,
    pub test_acc: f64,
    pub theory_acc: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableCheckRow {
    pub noise_type: NoiseKind,
    pub alpha_or_beta: f64,
    pub eta: f64,
    /// `max_y TV(f(y), q_y)`
    pub max_tv: f64,
    pub ce_bar_f: f64,
    pub ce_bar_q: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoisyLabelReport {
    pub reference_test_acc: f64,
    pub rows: Vec<NoisyLabelRow>,
    pub table_check: Vec<TableCheckRow>,
}

pub const CSV_HEADER: &str = "noise_type,level,alpha_or_beta,eta,ce_bar_f,ce_bar_q,test_acc,theory_acc";

impl NoisyLabelReport {
    pub fn csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.noise_type.name(),
                r.level,
                r.alpha_or_beta,
                r.eta,
                r.ce_bar_f,
                r.ce_bar_q,
                r.test_acc,
                r.theory_acc
            ));
        }
        out
    }
}

struct Planned {
    spec: NoiseSpec,
    level: f64,
}

/// Trains a reference classifier on clean labels, then one classifier per
/// noise setting, and scores each against `q_y`, the test labels and the
/// argmax-of-`q_y` prediction. Settings run in parallel; each is fully
/// determined by its own seeds.
pub fn run_noisy_label_experiment(
    cfg: &NoisyLabelConfig,
    train: &LabeledSet,
    test: &LabeledSet,
    seeder: &Seeder,
) -> Result<NoisyLabelReport> {
    if train.n_classes != test.n_classes || train.inputs.cols() != test.inputs.cols() {
        return Err(Error::Domain("train and test sets disagree in shape".into()));
    }
    for t in [&cfg.train, &cfg.reference_train] {
        if t.loss != LossFn::CrossEntropy {
            return Err(Error::Config("noisy-label training uses cross-entropy".into()));
        }
    }
    let n = train.n_classes;
    let dim = train.inputs.cols();

    let init = cfg
        .reference_model
        .build(dim, n, Head::Softmax, &mut seeder.stream("reference.init", 0))?;
    let (reference, _) = train_supervised(init, &train.clean_dataset(), &cfg.reference_train)?;
    let ref_train = reference_outputs(&reference, &train.inputs)?;
    let ref_test = reference_outputs(&reference, &test.inputs)?;
    let reference_test_acc = accuracy(&predict_class(&reference, &test.inputs)?, &test.labels);

    let mut plan = Vec::new();
    for &beta in &cfg.matched_betas {
        let alpha = calibrate_alpha_from_generated(train, beta, &ref_train)?;
        plan.push(Planned { spec: NoiseSpec::generated(beta, n), level: beta });
        plan.push(Planned { spec: NoiseSpec::uniform(alpha, n), level: beta });
        plan.push(Planned { spec: NoiseSpec::biased(alpha, n), level: beta });
    }
    for e in &cfg.extra {
        plan.push(Planned {
            spec: NoiseSpec { kind: e.kind, level: e.level, n_classes: n },
            level: e.level,
        });
    }

    let model_init = cfg.model.build(dim, n, Head::Softmax, &mut seeder.stream("model.init", 0))?;
    let rows = plan
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let generated = p.spec.kind == NoiseKind::Generated;
            let noisy = build_noisy_dataset(
                train,
                &p.spec,
                generated.then_some(&ref_train[..]),
                &seeder.child("noise", i as u64),
            )?;
            let (model, _) = train_supervised(model_init.clone(), &noisy.training_set(train), &cfg.train)?;
            let pred = predict(&model, &train.inputs)?;
            let test_pred = predict_class(&model, &test.inputs)?;
            Ok(NoisyLabelRow {
                noise_type: p.spec.kind,
                level: p.level,
                alpha_or_beta: p.spec.level,
                eta: noisy.eta,
                eta_expected: noisy.eta_expected,
                ce_bar_f: ce_bar_f(&pred, &noisy.qs())?.to_f64(),
                ce_bar_q: ce_bar_q(&noisy.qs()),
                test_acc: accuracy(&test_pred, &test.labels),
                theory_acc: theory_accuracy(&p.spec, test, generated.then_some(&ref_test[..]))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let table_check = match &cfg.table_check {
        Some(tc) => table_model_check(tc, train, &ref_train, seeder)?,
        None => Vec::new(),
    };
    Ok(NoisyLabelReport {
        reference_test_acc,
        rows,
        table_check,
    })
}

fn accuracy(pred: &[usize], labels: &[usize]) -> f64 {
    pred.iter().zip(labels).filter(|(a, b)| a == b).count() as f64 / labels.len() as f64
}

/// Cross-entropy training of a table model on sampled noisy labels over a handful
/// of fixed inputs. The draws are folded into per-input label frequencies
/// with weights equal to the draw counts, which leaves the objective
/// unchanged. Noise levels: generated `β` and uniform/biased at the
/// calibrated `α`.
pub fn table_model_check(
    cfg: &TableCheckConfig,
    train: &LabeledSet,
    ref_train: &[SimplexVec],
    seeder: &Seeder,
) -> Result<Vec<TableCheckRow>> {
    let n = train.n_classes;
    let mut points = Vec::new();
    for c in 0..n {
        let mine: Vec<usize> = (0..train.len())
            .filter(|&i| train.labels[i] == c)
            .take(cfg.points_per_class)
            .collect();
        if mine.len() < cfg.points_per_class {
            return Err(Error::Domain(format!("class {c} has too few training items")));
        }
        points.extend(mine);
    }
    let k = points.len();
    if cfg.draws < k {
        return Err(Error::Config("fewer draws than table inputs".into()));
    }
    let point_of = |i: usize| i % k;
    let item_points: Vec<usize> = (0..cfg.draws).map(point_of).collect();
    let items = LabeledSet::new(
        one_hot_rows(&item_points, k),
        item_points.iter().map(|&p| train.labels[points[p]]).collect(),
        n,
    )?;
    let item_refs: Vec<SimplexVec> = item_points.iter().map(|&p| ref_train[points[p]].clone()).collect();
    let alpha = calibrate_alpha_from_generated(&items, cfg.beta, &item_refs)?;
    let specs = [
        NoiseSpec::generated(cfg.beta, n),
        NoiseSpec::uniform(alpha, n),
        NoiseSpec::biased(alpha, n),
    ];
    specs
        .par_iter()
        .enumerate()
        .map(|(s, spec)| {
            let generated = spec.kind == NoiseKind::Generated;
            let noisy = build_noisy_dataset(
                &items,
                spec,
                generated.then_some(&item_refs[..]),
                &seeder.child("table.noise", s as u64),
            )?;
            let mut counts = vec![vec![0.0; n]; k];
            for (i, it) in noisy.items.iter().enumerate() {
                counts[point_of(i)][it.noisy_class] += 1.0;
            }
            let totals: Vec<f64> = counts.iter().map(|r| r.iter().sum()).collect();
            let freq: Vec<Vec<f64>> = counts
                .iter()
                .zip(&totals)
                .map(|(r, t)| r.iter().map(|c| c / t).collect())
                .collect();
            let data = Dataset::new(
                one_hot_rows(&(0..k).collect::<Vec<_>>(), k),
                Tensor::from_rows(&freq)?,
                Some(totals),
            )?;
            let (model, _) = train_supervised(TableModel::new(k, n, Head::Softmax), &data, &cfg.train)?;
            let outputs: Vec<SimplexVec> = (0..k)
                .map(|p| SimplexVec::from_weights(&model.output(p)))
                .collect::<Result<_>>()?;
            let max_tv = (0..k)
                .map(|p| outputs[p].total_variation(&noisy.items[p].q))
                .fold(0.0, f64::max);
            let pred_rows: Vec<Vec<f64>> = (0..cfg.draws)
                .map(|i| outputs[point_of(i)].as_slice().to_vec())
                .collect();
            let qs = noisy.qs();
            Ok(TableCheckRow {
                noise_type: spec.kind,
                alpha_or_beta: spec.level,
                eta: noisy.eta,
                max_tv,
                ce_bar_f: ce_bar_f(&Tensor::from_rows(&pred_rows)?, &qs)?.to_f64(),
                ce_bar_q: ce_bar_q(&qs),
            })
        })
        .collect()
}
