use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{metrics, nmse, variance_metrics, MetricRow};
use crate::distributions::GaussianLinearModel;
use crate::error::{Error, Result};
use crate::models::{predict, train_supervised, AnyModel, Dataset, Head, ModelSpec, TrainConfig, TrainRecord};
use crate::numerics::Tensor;
use crate::risk::LossFn;
use crate::rng::{Seeder, Stream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InverseTaskConfig {
    pub d: usize,
    pub m: usize,
    pub prior_mean: f64,
    pub prior_scale: f64,
    pub prior_length: f64,
    #[serde(default)]
    pub noise_var: f64,
    pub n_train: usize,
    pub n_test: usize,
}

/// Prior draws `x` with observations `y = A x (+ e)` for a block-averaging
/// operator, split into train and test sets.
#[derive(Clone, Debug)]
pub struct InverseTask {
    pub model: GaussianLinearModel,
    pub train_x: Vec<Vec<f64>>,
    pub train_y: Vec<Vec<f64>>,
    pub test_x: Vec<Vec<f64>>,
    pub test_y: Vec<Vec<f64>>,
}

impl InverseTask {
    pub fn new(cfg: &InverseTaskConfig, seeder: &Seeder) -> Result<Self> {
        if cfg.n_train == 0 || cfg.n_test == 0 {
            return Err(Error::Domain("inverse task needs train and test items".into()));
        }
        let model = GaussianLinearModel::block_average(
            cfg.d,
            cfg.m,
            vec![cfg.prior_mean; cfg.d],
            cfg.prior_scale,
            cfg.prior_length,
            cfg.noise_var,
        )?;
        let draw = |purpose: &str, n: usize| -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
            (0..n as u64)
                .into_par_iter()
                .map(|i| {
                    let x = model.sample_prior(&mut seeder.stream(purpose, i));
                    let y = observe(&model, &x, &mut seeder.stream(&format!("{purpose}.obs"), i));
                    (x, y)
                })
                .unzip()
        };
        let (train_x, train_y) = draw("task.train", cfg.n_train);
        let (test_x, test_y) = draw("task.test", cfg.n_test);
        Ok(Self {
            model,
            train_x,
            train_y,
            test_x,
            test_y,
        })
    }

    /// Observations lifted to `d` pixels, one row each.
    pub fn lifted(&self, ys: &[Vec<f64>]) -> Result<Tensor> {
        let rows: Vec<Vec<f64>> = ys.iter().map(|y| self.model.lift(y)).collect();
        Tensor::from_rows(&rows)
    }
}

fn observe(model: &GaussianLinearModel, x: &[f64], rng: &mut Stream) -> Vec<f64> {
    let mut y = model.observe(x);
    if model.noise_var() > 0.0 {
        let sd = model.noise_var().sqrt();
        for v in &mut y {
            *v += sd * rand::Rng::sample::<f64, _>(rng, rand_distr::StandardNormal);
        }
    }
    y
}

/// `(x − mean)²` elementwise.
pub fn var_label(x: &[f64], mean: &[f64]) -> Result<Vec<f64>> {
    if x.len() != mean.len() {
        return Err(Error::ShapeMismatch {
            op: "var_label",
            lhs: vec![x.len()],
            rhs: vec![mean.len()],
        });
    }
    Ok(x.iter().zip(mean).map(|(a, b)| (a - b) * (a - b)).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageConfig {
    pub model: ModelSpec,
    pub train: TrainConfig,
}

fn check_stage(cfg: &StageConfig) -> Result<()> {
    if cfg.train.loss != LossFn::L2 {
        return Err(Error::Config("both stages use the L2 loss".into()));
    }
    Ok(())
}

/// Fits `f_mean` on `lift(y) → x`.
pub fn train_mean(task: &InverseTask, cfg: &StageConfig, seeder: &Seeder) -> Result<(AnyModel, TrainRecord)> {
    check_stage(cfg)?;
    let d = task.model.dim_x();
    let data = Dataset::new(task.lifted(&task.train_y)?, Tensor::from_rows(&task.train_x)?, None)?;
    let init = cfg.model.build(d, d, Head::Identity, &mut seeder.stream("uncertainty.mean.init", 0))?;
    train_supervised(init, &data, &cfg.train)
}

/// Mean and variance estimators; the variance model sees
/// `concat(lift(y), f_mean(y))` and its outputs are clamped at zero.
#[derive(Clone, Debug)]
pub struct MeanVarModels {
    pub f_mean: AnyModel,
    pub f_var: AnyModel,
    pub clamp: bool,
}

fn var_inputs(task: &InverseTask, f_mean: &AnyModel, ys: &[Vec<f64>]) -> Result<(Tensor, Tensor)> {
    let lifted = task.lifted(ys)?;
    let mean = predict(f_mean, &lifted)?;
    let rows: Vec<Vec<f64>> = (0..lifted.rows())
        .map(|r| lifted.row(r).iter().chain(mean.row(r)).copied().collect())
        .collect();
    Ok((Tensor::from_rows(&rows)?, mean))
}

/// Fits `f_var` on `concat(lift(y), f_mean(y)) → (x − f_mean(y))²` with
/// `f_mean` frozen.
pub fn train_var(
    task: &InverseTask,
    f_mean: &AnyModel,
    cfg: &StageConfig,
    seeder: &Seeder,
) -> Result<(AnyModel, TrainRecord)> {
    check_stage(cfg)?;
    let d = task.model.dim_x();
    let (inputs, mean) = var_inputs(task, f_mean, &task.train_y)?;
    let labels = task
        .train_x
        .iter()
        .enumerate()
        .map(|(i, x)| var_label(x, mean.row(i)))
        .collect::<Result<Vec<_>>>()?;
    let data = Dataset::new(inputs, Tensor::from_rows(&labels)?, None)?;
    let init = cfg.model.build(2 * d, d, Head::Identity, &mut seeder.stream("uncertainty.var.init", 0))?;
    train_supervised(init, &data, &cfg.train)
}

impl MeanVarModels {
    /// Mean and (clamped) variance rows for each observation.
    pub fn predict(&self, task: &InverseTask, ys: &[Vec<f64>]) -> Result<(Tensor, Tensor)> {
        let (inputs, mean) = var_inputs(task, &self.f_mean, ys)?;
        let var = predict(&self.f_var, &inputs)?;
        let var = if self.clamp { var.map(|v| v.max(0.0)) } else { var };
        Ok((mean, var))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyConfig {
    pub task: InverseTaskConfig,
    #[serde(default = "default_mc")]
    pub mc_samples: usize,
    pub mean_stage: StageConfig,
    pub var_stage: StageConfig,
}

fn default_mc() -> usize {
    100
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyReport {
    pub rows: Vec<MetricRow>,
    /// `f_var` against one `var_label` draw per test item.
    pub var_vs_single_label: MetricRow,
    /// NMSE of `f_var` against the oracle variance (on the variance scale).
    pub var_nmse_variance_scale: f64,
    /// `f_var` vs oracle NMSE (on standard deviations) at every checkpoint.
    pub var_history: Vec<f64>,
}

pub const METRIC_CSV_HEADER: &str = "comparison,psnr,mse,nmse";

impl UncertaintyReport {
    pub fn csv(&self) -> String {
        let mut out = format!("{METRIC_CSV_HEADER}\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{},{}\n", r.comparison, r.psnr, r.mse, r.nmse));
        }
        out
    }

    pub fn row(&self, comparison: &str) -> Option<&MetricRow> {
        self.rows.iter().find(|r| r.comparison == comparison)
    }
}

fn flat(rows: &[Vec<f64>]) -> Vec<f64> {
    rows.iter().flatten().copied().collect()
}

/// Trains both stages, then compares them on the test set with the exact
/// posterior and a Monte-Carlo estimate from `mc_samples` posterior draws.
pub fn run_uncertainty_experiment(cfg: &UncertaintyConfig, seeder: &Seeder) -> Result<UncertaintyReport> {
    let task = InverseTask::new(&cfg.task, seeder)?;
    let (f_mean, _) = train_mean(&task, &cfg.mean_stage, seeder)?;
    let (f_var, var_record) = train_var(&task, &f_mean, &cfg.var_stage, seeder)?;
    let models = MeanVarModels {
        f_mean,
        f_var,
        clamp: true,
    };

    let oracle = task
        .test_y
        .par_iter()
        .enumerate()
        .map(|(i, y)| {
            let post = task.model.posterior(y)?;
            let (_, mc_var) = task
                .model
                .posterior_mc_stats(y, cfg.mc_samples, &mut seeder.stream("uncertainty.mc", i as u64))?;
            Ok((post.mean.clone(), post.pixel_variance(), mc_var))
        })
        .collect::<Result<Vec<_>>>()?;
    let oracle_mean = flat(&oracle.iter().map(|o| o.0.clone()).collect::<Vec<_>>());
    let oracle_var = flat(&oracle.iter().map(|o| o.1.clone()).collect::<Vec<_>>());
    let mc_var = flat(&oracle.iter().map(|o| o.2.clone()).collect::<Vec<_>>());
    let x = flat(&task.test_x);

    let (mean, var) = models.predict(&task, &task.test_y)?;
    let (mean, var) = (mean.into_data(), var.into_data());
    let single = var_label(&x, &mean)?;

    let mut var_history = Vec::with_capacity(var_record.checkpoints.len());
    for i in 0..var_record.checkpoints.len() {
        let m = MeanVarModels {
            f_var: var_record.restore(&models.f_var, i),
            ..models.clone()
        };
        let v = m.predict(&task, &task.test_y)?.1.into_data();
        var_history.push(variance_metrics("", &v, &oracle_var)?.nmse);
    }

    Ok(UncertaintyReport {
        rows: vec![
            metrics("oracle_mean_vs_x", &oracle_mean, &x)?,
            metrics("f_mean_vs_x", &mean, &x)?,
            metrics("f_mean_vs_oracle_mean", &mean, &oracle_mean)?,
            variance_metrics("f_var_vs_oracle_var", &var, &oracle_var)?,
            variance_metrics("f_var_vs_mc_var", &var, &mc_var)?,
            variance_metrics("mc_var_vs_oracle_var", &mc_var, &oracle_var)?,
        ],
        var_vs_single_label: variance_metrics("f_var_vs_single_label", &var, &single)?,
        var_nmse_variance_scale: nmse(&var, &oracle_var)?,
        var_history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn var_label_examples() {
        assert_eq!(var_label(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(var_label(&[1.0, -2.0], &[0.0, 0.0]).unwrap(), vec![1.0, 4.0]);
        assert!(var_label(&[1.0], &[0.0, 0.0]).is_err());
    }

    #[test]
    fn noiseless_task_is_consistent() {
        let cfg = InverseTaskConfig {
            d: 8,
            m: 2,
            prior_mean: 0.5,
            prior_scale: 1.0,
            prior_length: 2.0,
            noise_var: 0.0,
            n_train: 50,
            n_test: 10,
        };
        let task = InverseTask::new(&cfg, &Seeder::new(1)).unwrap();
        for (x, y) in task.train_x.iter().zip(&task.train_y) {
            let ax = task.model.observe(x);
            assert!(ax.iter().zip(y).all(|(a, b)| (a - b).abs() < 1e-12));
        }
        assert_eq!(task.lifted(&task.test_y).unwrap().shape(), &[10, 8]);
    }
}
