use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{DataSpec, ExperimentConfig, ExperimentKind, GapConfig, Theorem1Config, TweedieConfig};
use super::data::{load_idx_pair, synth_blobs};
use super::record::{write_record, ExperimentRecord, SCHEMA_VERSION};
use super::tensor_file::write_tensors;
use crate::denoise::{
    discrete_noise2noise_oracle, evaluate_score_model, marginal_grid, noise2noise_equivalence_run,
    score_regression_train, tweedie_mean, verify_score_identity, DenoiseTask, DiscreteOracleReport,
    Noise2NoiseReport, ScoreEvaluation,
};
use crate::distributions::{DiscreteJoint, GaussianMixture};
use crate::error::{Error, Result};
use crate::models::{one_hot, train_supervised, Dataset, Head, Model, TableModel};
use crate::noisy_labels::{run_noisy_label_experiment, LabeledSet, NoisyLabelReport};
use crate::numerics::Tensor;
use crate::risk::{random_probes, theorem2_gap_check, zstar_closed_form, LabelMap, LossFn};
use crate::rng::Seeder;
use crate::simplex::SimplexVec;
use crate::uncertainty::{run_uncertainty_experiment, UncertaintyReport};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Report {
    /// `max_i ‖f(y_i) − z*(y_i)‖_∞` for the L2 run.
    pub l2_linf: f64,
    /// `max_i TV(f(y_i), z*(y_i))` for the cross-entropy run.
    pub ce_tv: f64,
    pub l2_objective: f64,
    pub ce_objective: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapSummary {
    /// Largest `|difference − mean difference|` over all joints and probes.
    pub max_deviation: f64,
    /// Largest `|mean difference − (C2 − C1)|` over all joints.
    pub max_theory_error: f64,
    pub c_theory: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TweedieReport {
    /// Largest `|tweedie_mean − E[x|y]|` over all priors and grid points.
    pub max_abs_diff: f64,
    pub points: usize,
}

#[derive(Clone, Debug)]
pub enum ExperimentOutput {
    Theorem1(Theorem1Report),
    Gap(GapSummary),
    NoisyLabels(NoisyLabelReport),
    Noise2Noise {
        report: Noise2NoiseReport,
        discrete: Option<DiscreteOracleReport>,
    },
    Score {
        identity_deviation: f64,
        evaluation: ScoreEvaluation,
    },
    Tweedie(TweedieReport),
    Uncertainty(UncertaintyReport),
}

#[derive(Clone, Debug, PartialEq)]
pub enum Artifact {
    Csv { name: String, text: String },
    Tensors { name: String, tensors: Vec<Tensor> },
}

impl Artifact {
    pub fn name(&self) -> &str {
        match self {
            Artifact::Csv { name, .. } | Artifact::Tensors { name, .. } => name,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Execution {
    pub metrics: BTreeMap<String, f64>,
    pub artifacts: Vec<Artifact>,
    pub output: ExperimentOutput,
}

/// Runs the experiment a config describes. The metric map depends only on
/// the config, so a rerun reproduces it bit for bit.
pub fn execute(cfg: &ExperimentConfig) -> Result<Execution> {
    cfg.validate()?;
    let seeder = Seeder::new(cfg.seed);
    let missing = || Error::Config(format!("missing section for {}", cfg.kind.name()));
    match cfg.kind {
        ExperimentKind::Theorem1 => theorem1(cfg.theorem1.as_ref().ok_or_else(missing)?, &seeder),
        ExperimentKind::Theorem2Gap => gap(cfg.theorem2_gap.as_ref().ok_or_else(missing)?, &seeder),
        ExperimentKind::NoisyLabels => {
            let section = cfg.noisy_labels.as_ref().ok_or_else(missing)?;
            let (train, test) = load_data(&section.data, &seeder)?;
            let report = run_noisy_label_experiment(&section.experiment, &train, &test, &seeder)?;
            let mut metrics = BTreeMap::new();
            metrics.insert("reference_test_acc".to_string(), report.reference_test_acc);
            for (i, r) in report.rows.iter().enumerate() {
                let p = format!("row{i:02}.{}", r.noise_type.name());
                for (k, v) in [
                    ("level", r.level),
                    ("alpha_or_beta", r.alpha_or_beta),
                    ("eta", r.eta),
                    ("eta_expected", r.eta_expected),
                    ("ce_bar_f", r.ce_bar_f),
                    ("ce_bar_q", r.ce_bar_q),
                    ("test_acc", r.test_acc),
                    ("theory_acc", r.theory_acc),
                ] {
                    metrics.insert(format!("{p}.{k}"), v);
                }
            }
            for r in &report.table_check {
                let p = format!("table.{}", r.noise_type.name());
                for (k, v) in [
                    ("alpha_or_beta", r.alpha_or_beta),
                    ("eta", r.eta),
                    ("max_tv", r.max_tv),
                    ("ce_bar_f", r.ce_bar_f),
                    ("ce_bar_q", r.ce_bar_q),
                ] {
                    metrics.insert(format!("{p}.{k}"), v);
                }
            }
            Ok(Execution {
                metrics,
                artifacts: vec![Artifact::Csv {
                    name: "noisy_labels.csv".into(),
                    text: report.csv(),
                }],
                output: ExperimentOutput::NoisyLabels(report),
            })
        }
        ExperimentKind::Noise2noise => {
            let s = cfg.noise2noise.as_ref().ok_or_else(missing)?;
            let task = DenoiseTask::new(
                s.prior.clone(),
                s.sigma_input,
                s.sigma_target,
                s.n_pairs,
                &seeder.child("n2n.data", 0),
            )?;
            let report = noise2noise_equivalence_run(&task, &s.training, &seeder)?;
            let discrete = s
                .discrete
                .as_ref()
                .map(|d| discrete_noise2noise_oracle(&d.signal, &d.input_noise, &d.target_noise))
                .transpose()?;
            let mut metrics = BTreeMap::from([
                ("nmse_pair".to_string(), report.nmse_pair),
                ("nmse_noisy_vs_exact".to_string(), report.nmse_noisy_vs_exact),
                ("nmse_clean_vs_exact".to_string(), report.nmse_clean_vs_exact),
            ]);
            for (i, v) in report.pair_history.iter().enumerate() {
                metrics.insert(format!("pair_history.{i:03}"), *v);
            }
            if let Some(d) = &discrete {
                metrics.insert("discrete_max_abs_diff".into(), d.max_abs_diff);
            }
            let mut csv = String::from("y,f_noisy,f_clean,exact\n");
            for r in &report.grid {
                csv.push_str(&format!("{},{},{},{}\n", r.y, r.f_noisy, r.f_clean, r.exact));
            }
            Ok(Execution {
                metrics,
                artifacts: vec![Artifact::Csv {
                    name: "noise2noise_grid.csv".into(),
                    text: csv,
                }],
                output: ExperimentOutput::Noise2Noise { report, discrete },
            })
        }
        ExperimentKind::Score => {
            let s = cfg.score.as_ref().ok_or_else(missing)?;
            let nv = s.regression.noise_var;
            let grid = marginal_grid(&s.prior, nv, 4.0, s.grid_points);
            let identity_deviation = verify_score_identity(&s.prior, nv, &grid)?;
            let (model, _) = score_regression_train(&s.prior, &s.regression, &seeder)?;
            let evaluation = evaluate_score_model(&model, &s.prior, nv, s.grid_points)?;
            let mut csv = String::from("y,model_score,exact_score\n");
            for r in &evaluation.grid {
                csv.push_str(&format!("{},{},{}\n", r.y, r.model_score, r.exact_score));
            }
            Ok(Execution {
                metrics: BTreeMap::from([
                    ("identity_max_abs_diff".to_string(), identity_deviation),
                    ("score_nmse".to_string(), evaluation.nmse),
                    ("region_lower".to_string(), evaluation.lower),
                    ("region_upper".to_string(), evaluation.upper),
                ]),
                artifacts: vec![
                    Artifact::Csv {
                        name: "score_grid.csv".into(),
                        text: csv,
                    },
                    Artifact::Tensors {
                        name: "score_model.rmt".into(),
                        tensors: model.params().to_vec(),
                    },
                ],
                output: ExperimentOutput::Score {
                    identity_deviation,
                    evaluation,
                },
            })
        }
        ExperimentKind::Tweedie => tweedie(cfg.tweedie.as_ref().ok_or_else(missing)?, &seeder),
        ExperimentKind::Uncertainty => {
            let u = cfg.uncertainty.as_ref().ok_or_else(missing)?;
            let report = run_uncertainty_experiment(u, &seeder)?;
            let mut metrics = BTreeMap::new();
            for r in report.rows.iter().chain([&report.var_vs_single_label]) {
                for (k, v) in [("psnr", r.psnr), ("mse", r.mse), ("nmse", r.nmse)] {
                    metrics.insert(format!("{}.{k}", r.comparison), v);
                }
            }
            metrics.insert("f_var_vs_oracle_var.nmse_variance_scale".into(), report.var_nmse_variance_scale);
            for (i, v) in report.var_history.iter().enumerate() {
                metrics.insert(format!("var_history.{i:03}"), *v);
            }
            Ok(Execution {
                metrics,
                artifacts: vec![Artifact::Csv {
                    name: "uncertainty_metrics.csv".into(),
                    text: report.csv(),
                }],
                output: ExperimentOutput::Uncertainty(report),
            })
        }
    }
}

fn load_data(spec: &DataSpec, seeder: &Seeder) -> Result<(LabeledSet, LabeledSet)> {
    match spec {
        DataSpec::Blobs {
            n_classes,
            train_per_class,
            test_per_class,
            spread,
        } => Ok((
            synth_blobs(*n_classes, *train_per_class, *spread, &seeder.child("blobs.train", 0))?,
            synth_blobs(*n_classes, *test_per_class, *spread, &seeder.child("blobs.test", 0))?,
        )),
        DataSpec::Idx {
            train_images,
            train_labels,
            test_images,
            test_labels,
            n_classes,
        } => Ok((
            load_idx_pair(train_images, train_labels, *n_classes)?,
            load_idx_pair(test_images, test_labels, *n_classes)?,
        )),
    }
}

fn theorem1(cfg: &Theorem1Config, seeder: &Seeder) -> Result<Execution> {
    let l2_joint = DiscreteJoint::random(cfg.n_inputs, cfg.n_outcomes, cfg.outcome_dim, &mut seeder.stream("t1.l2", 0))?;
    let base = DiscreteJoint::random(cfg.n_inputs, cfg.n_outcomes, 1, &mut seeder.stream("t1.ce", 0))?;
    let ce_joint = DiscreteJoint::new(
        base.y_support().to_vec(),
        (0..cfg.n_outcomes).map(|j| one_hot(cfg.n_outcomes, j)).collect(),
        base.table().to_vec(),
    )?;

    let fit = |joint: &DiscreteJoint, loss: LossFn, head: Head, train: &crate::models::TrainConfig| {
        if train.loss != loss {
            return Err(Error::Config(format!("{loss:?} run must train with {loss:?}")));
        }
        let data = Dataset::from_joint(joint, &LabelMap::IdentityX)?;
        let table = TableModel::new(joint.n_y(), joint.x_support()[0].len(), head);
        let (model, record) = train_supervised(table, &data, train)?;
        let mut deviations = Vec::with_capacity(joint.n_y());
        for (i, y) in joint.y_support().iter().enumerate() {
            let z = zstar_closed_form(loss, &joint.conditional(i)?, joint.x_support(), &LabelMap::IdentityX, y)?;
            let f = model.output(i);
            deviations.push(match loss {
                LossFn::L2 => f.iter().zip(&z).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max),
                LossFn::CrossEntropy => SimplexVec::from_weights(&f)?.total_variation(&SimplexVec::new(z)?),
            });
        }
        let worst = deviations.into_iter().fold(0.0, f64::max);
        Ok((worst, record.selected_checkpoint().objective))
    };
    let (l2_linf, l2_objective) = fit(&l2_joint, LossFn::L2, Head::Identity, &cfg.l2_train)?;
    let (ce_tv, ce_objective) = fit(&ce_joint, LossFn::CrossEntropy, Head::Softmax, &cfg.ce_train)?;
    let report = Theorem1Report {
        l2_linf,
        ce_tv,
        l2_objective,
        ce_objective,
    };
    Ok(Execution {
        metrics: BTreeMap::from([
            ("l2.linf".to_string(), l2_linf),
            ("l2.objective".to_string(), l2_objective),
            ("ce.tv".to_string(), ce_tv),
            ("ce.objective".to_string(), ce_objective),
        ]),
        artifacts: Vec::new(),
        output: ExperimentOutput::Theorem1(report),
    })
}

fn gap(cfg: &GapConfig, seeder: &Seeder) -> Result<Execution> {
    let reports = (0..cfg.n_joints as u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = seeder.stream("gap.joint", k);
            let joint = DiscreteJoint::random(cfg.n_inputs, cfg.n_outcomes, cfg.outcome_dim, &mut rng)?;
            let dim = cfg.label_map.apply(&joint.x_support()[0], &joint.y_support()[0])?.len();
            let probes = random_probes(cfg.n_inputs, dim, cfg.n_probes, cfg.probe_scale, &mut rng);
            theorem2_gap_check(LossFn::L2, &joint, &cfg.label_map, &probes)
        })
        .collect::<Result<Vec<_>>>()?;
    let summary = GapSummary {
        max_deviation: reports.iter().map(|r| r.max_deviation).fold(0.0, f64::max),
        max_theory_error: reports.iter().map(|r| (r.c_emp - r.c_theory).abs()).fold(0.0, f64::max),
        c_theory: reports.iter().map(|r| r.c_theory).collect(),
    };
    let mut metrics = BTreeMap::from([
        ("max_deviation".to_string(), summary.max_deviation),
        ("max_theory_error".to_string(), summary.max_theory_error),
    ]);
    let mut csv = String::from("joint,c_emp,c1,c2,c_theory,max_deviation\n");
    for (k, r) in reports.iter().enumerate() {
        metrics.insert(format!("joint{k:02}.c_theory"), r.c_theory);
        csv.push_str(&format!("{k},{},{},{},{},{}\n", r.c_emp, r.c1, r.c2, r.c_theory, r.max_deviation));
    }
    Ok(Execution {
        metrics,
        artifacts: vec![Artifact::Csv {
            name: "gap.csv".into(),
            text: csv,
        }],
        output: ExperimentOutput::Gap(summary),
    })
}

fn tweedie(cfg: &TweedieConfig, seeder: &Seeder) -> Result<Execution> {
    let mut worst = 0.0f64;
    let mut points = 0;
    let mut csv = String::from("prior,y,tweedie,exact\n");
    for k in 0..cfg.n_priors {
        let prior = GaussianMixture::random(1, cfg.n_components, &mut seeder.stream("tweedie.prior", k as u64))?;
        let marginal = prior.widened(cfg.noise_var);
        for y in marginal_grid(&prior, cfg.noise_var, 4.0, cfg.grid_points) {
            let t = tweedie_mean(&[y], cfg.noise_var, |v| marginal.score(v))?[0];
            let e = prior.posterior_mean_under_noise(&[y], cfg.noise_var)[0];
            worst = worst.max((t - e).abs());
            points += 1;
            csv.push_str(&format!("{k},{y},{t},{e}\n"));
        }
    }
    Ok(Execution {
        metrics: BTreeMap::from([("max_abs_diff".to_string(), worst)]),
        artifacts: vec![Artifact::Csv {
            name: "tweedie_grid.csv".into(),
            text: csv,
        }],
        output: ExperimentOutput::Tweedie(TweedieReport {
            max_abs_diff: worst,
            points,
        }),
    })
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

pub const RECORDS_FILE: &str = "records.jsonl";

/// Executes `cfg`, writes its artifacts under `out/<kind>-<hash prefix>/`
/// and appends the record to `out/records.jsonl`.
pub fn run_and_record(cfg: &ExperimentConfig, out: &Path) -> Result<(ExperimentRecord, Execution)> {
    let started_ms = now_ms();
    let exec = execute(cfg)?;
    let hash = cfg.content_hash();
    let dir: PathBuf = out.join(format!("{}-{}", cfg.kind.name(), &hash[..12]));
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut artifacts = Vec::new();
    for a in &exec.artifacts {
        let path = dir.join(a.name());
        match a {
            Artifact::Csv { text, .. } => std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?,
            Artifact::Tensors { tensors, .. } => write_tensors(&path, tensors)?,
        }
        artifacts.push(path.display().to_string());
    }
    let record = ExperimentRecord {
        schema_version: SCHEMA_VERSION,
        config: ExperimentConfig {
            output_dir: None,
            ..cfg.clone()
        },
        config_hash: hash,
        started_ms,
        finished_ms: now_ms(),
        metrics: exec.metrics.clone(),
        artifacts,
    };
    write_record(&out.join(RECORDS_FILE), &record)?;
    Ok((record, exec))
}

/// Re-executes a record's config and lists every metric that differs.
pub fn replay(record: &ExperimentRecord) -> Result<Vec<String>> {
    let exec = execute(&record.config)?;
    let mut diffs = Vec::new();
    if record.config.content_hash() != record.config_hash {
        diffs.push("config hash does not match the stored config".to_string());
    }
    diffs.extend(record.metric_diff(&exec.metrics));
    Ok(diffs)
}
