use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::qy::{qy_generated, NoiseSpec};
use crate::error::{Error, Result};
use crate::models::{one_hot_rows, predict, Dataset, Model};
use crate::numerics::Tensor;
use crate::risk::LossValue;
use crate::rng::Seeder;
use crate::simplex::SimplexVec;

/// Inputs with their true classes.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSet {
    pub inputs: Tensor,
    pub labels: Vec<usize>,
    pub n_classes: usize,
}

impl LabeledSet {
    pub fn new(inputs: Tensor, labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        if inputs.rank() != 2 || inputs.rows() != labels.len() {
            return Err(Error::Domain(format!(
                "{} labels for inputs of shape {:?}",
                labels.len(),
                inputs.shape()
            )));
        }
        if labels.is_empty() {
            return Err(Error::Domain("labeled set is empty".into()));
        }
        if let Some(bad) = labels.iter().find(|c| **c >= n_classes) {
            return Err(Error::Domain(format!("label {bad} out of range for {n_classes} classes")));
        }
        Ok(Self {
            inputs,
            labels,
            n_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Training pairs with one-hot true labels.
    pub fn clean_dataset(&self) -> Dataset {
        Dataset::new(self.inputs.clone(), one_hot_rows(&self.labels, self.n_classes), None)
            .expect("validated at construction")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoisyItem {
    pub true_class: usize,
    pub noisy_class: usize,
    pub q: SimplexVec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoisyDataset {
    pub items: Vec<NoisyItem>,
    /// Fraction of drawn labels equal to the true class.
    pub eta: f64,
    /// Mean of `q_{y,c}`, the correct-label rate in expectation.
    pub eta_expected: f64,
}

impl NoisyDataset {
    pub fn qs(&self) -> Vec<SimplexVec> {
        self.items.iter().map(|it| it.q.clone()).collect()
    }

    /// Training pairs with one-hot noisy labels over `clean`'s inputs.
    pub fn training_set(&self, clean: &LabeledSet) -> Dataset {
        let noisy: Vec<usize> = self.items.iter().map(|it| it.noisy_class).collect();
        Dataset::new(clean.inputs.clone(), one_hot_rows(&noisy, clean.n_classes), None)
            .expect("one row per clean item")
    }
}

/// Inverse-CDF draw; the last positive class absorbs rounding.
fn draw(q: &SimplexVec, u: f64) -> usize {
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, p) in q.as_slice().iter().enumerate() {
        if *p > 0.0 {
            last_positive = i;
        }
        acc += p;
        if u < acc && *p > 0.0 {
            return i;
        }
    }
    last_positive
}

/// Reference classifier outputs `M(y)` for every item.
pub fn reference_outputs<M: Model>(model: &M, inputs: &Tensor) -> Result<Vec<SimplexVec>> {
    let p = predict(model, inputs)?;
    (0..p.rows())
        .map(|r| SimplexVec::from_weights(p.row(r)))
        .collect()
}

fn qs_for(spec: &NoiseSpec, clean: &LabeledSet, reference: Option<&[SimplexVec]>) -> Result<Vec<SimplexVec>> {
    if spec.n_classes != clean.n_classes {
        return Err(Error::Domain(format!(
            "noise spec has {} classes, dataset has {}",
            spec.n_classes, clean.n_classes
        )));
    }
    if let Some(r) = reference {
        if r.len() != clean.len() {
            return Err(Error::Domain("one reference output per item is required".into()));
        }
    }
    clean
        .labels
        .iter()
        .enumerate()
        .map(|(i, &c)| spec.qy(c, reference.map(|r| &r[i])))
        .collect()
}

/// Draws one noisy label per item from its `q_y`, each from the stream
/// `("noise.label", item)` so the result does not depend on scheduling.
pub fn build_noisy_dataset(
    clean: &LabeledSet,
    spec: &NoiseSpec,
    reference: Option<&[SimplexVec]>,
    seeder: &Seeder,
) -> Result<NoisyDataset> {
    let qs = qs_for(spec, clean, reference)?;
    let items: Vec<NoisyItem> = qs
        .into_par_iter()
        .enumerate()
        .map(|(i, q)| {
            let u: f64 = seeder.stream("noise.label", i as u64).random();
            NoisyItem {
                true_class: clean.labels[i],
                noisy_class: draw(&q, u),
                q,
            }
        })
        .collect();
    let n = items.len() as f64;
    let eta = items.iter().filter(|it| it.noisy_class == it.true_class).count() as f64 / n;
    let eta_expected = items.iter().map(|it| it.q.as_slice()[it.true_class]).sum::<f64>() / n;
    Ok(NoisyDataset {
        items,
        eta,
        eta_expected,
    })
}

/// Expected correct-label rate of generated noise, `mean_i β M_{c_i}(y_i)`.
/// No sampling is involved.
pub fn calibrate_alpha_from_generated(clean: &LabeledSet, beta: f64, reference: &[SimplexVec]) -> Result<f64> {
    if reference.len() != clean.len() {
        return Err(Error::Domain("one reference output per item is required".into()));
    }
    let mut total = 0.0;
    for (m, &c) in reference.iter().zip(&clean.labels) {
        total += qy_generated(beta, m, c)?.as_slice()[c];
    }
    Ok(total / clean.len() as f64)
}

/// Accuracy of the optimal model `f(y) = q_y` under the argmax rule.
pub fn theory_accuracy(spec: &NoiseSpec, clean: &LabeledSet, reference: Option<&[SimplexVec]>) -> Result<f64> {
    let qs = qs_for(spec, clean, reference)?;
    let hits = qs
        .iter()
        .zip(&clean.labels)
        .filter(|(q, c)| q.argmax() == **c)
        .count();
    Ok(hits as f64 / clean.len() as f64)
}

/// `(1/N) Σ CE(f(y_i), q_{y_i})` for predictive distributions `pred`
/// (one row per item).
pub fn ce_bar_f(pred: &Tensor, qs: &[SimplexVec]) -> Result<LossValue> {
    if pred.rows() != qs.len() {
        return Err(Error::ShapeMismatch {
            op: "ce_bar_f",
            lhs: pred.shape().to_vec(),
            rhs: vec![qs.len()],
        });
    }
    let mut total = 0.0;
    for (r, q) in qs.iter().enumerate() {
        let f = pred.row(r);
        if f.len() != q.len() {
            return Err(Error::ShapeMismatch {
                op: "ce_bar_f",
                lhs: vec![f.len()],
                rhs: vec![q.len()],
            });
        }
        for (fi, qi) in f.iter().zip(q.as_slice()) {
            if *qi == 0.0 {
                continue;
            }
            if *fi <= 0.0 {
                return Ok(LossValue::Infinite);
            }
            total -= qi * fi.ln();
        }
    }
    Ok(LossValue::Finite(total / qs.len() as f64))
}

/// `(1/N) Σ H(q_{y_i})`, the smallest value `ce_bar_f` can take.
pub fn ce_bar_q(qs: &[SimplexVec]) -> f64 {
    qs.iter().map(SimplexVec::entropy).sum::<f64>() / qs.len() as f64
}
