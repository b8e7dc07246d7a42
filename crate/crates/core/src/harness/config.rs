use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::denoise::{DenoiseTrainConfig, ScoreRegressionConfig};
use crate::distributions::GaussianMixture;
use crate::error::{Error, Result};
use crate::models::TrainConfig;
use crate::noisy_labels::NoisyLabelConfig;
use crate::risk::LabelMap;
use crate::uncertainty::UncertaintyConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Theorem1,
    Theorem2Gap,
    NoisyLabels,
    Noise2noise,
    Score,
    Tweedie,
    Uncertainty,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 7] = [
        Self::Theorem1,
        Self::Theorem2Gap,
        Self::NoisyLabels,
        Self::Noise2noise,
        Self::Score,
        Self::Tweedie,
        Self::Uncertainty,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Theorem1 => "theorem1",
            Self::Theorem2Gap => "theorem2-gap",
            Self::NoisyLabels => "noisy-labels",
            Self::Noise2noise => "noise2noise",
            Self::Score => "score",
            Self::Tweedie => "tweedie",
            Self::Uncertainty => "uncertainty",
        }
    }

    fn section(self) -> &'static str {
        match self {
            Self::Theorem1 => "theorem1",
            Self::Theorem2Gap => "theorem2_gap",
            Self::NoisyLabels => "noisy_labels",
            Self::Noise2noise => "noise2noise",
            Self::Score => "score",
            Self::Tweedie => "tweedie",
            Self::Uncertainty => "uncertainty",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Theorem1Config {
    pub n_inputs: usize,
    pub n_outcomes: usize,
    /// Outcome dimension for the L2 run; the cross-entropy run uses one-hot
    /// outcomes.
    pub outcome_dim: usize,
    pub l2_train: TrainConfig,
    pub ce_train: TrainConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GapConfig {
    pub n_joints: usize,
    pub n_inputs: usize,
    pub n_outcomes: usize,
    pub outcome_dim: usize,
    pub n_probes: usize,
    pub probe_scale: f64,
    #[serde(default = "identity_map")]
    pub label_map: LabelMap,
}

fn identity_map() -> LabelMap {
    LabelMap::IdentityX
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSpec {
    Blobs {
        n_classes: usize,
        train_per_class: usize,
        test_per_class: usize,
        spread: f64,
    },
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
        n_classes: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoisyLabelsSection {
    pub data: DataSpec,
    #[serde(flatten)]
    pub experiment: NoisyLabelConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscreteOracleConfig {
    pub signal: Vec<(f64, f64)>,
    pub input_noise: Vec<(f64, f64)>,
    pub target_noise: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Noise2NoiseSection {
    pub prior: GaussianMixture,
    pub sigma_input: f64,
    pub sigma_target: f64,
    pub n_pairs: usize,
    #[serde(flatten)]
    pub training: DenoiseTrainConfig,
    #[serde(default)]
    pub discrete: Option<DiscreteOracleConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreSection {
    pub prior: GaussianMixture,
    #[serde(flatten)]
    pub regression: ScoreRegressionConfig,
    #[serde(default = "default_grid")]
    pub grid_points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TweedieConfig {
    pub n_priors: usize,
    pub n_components: usize,
    pub noise_var: f64,
    #[serde(default = "default_grid")]
    pub grid_points: usize,
}

fn default_grid() -> usize {
    512
}

/// One experiment: its kind, seed, and the matching typed section.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theorem1: Option<Theorem1Config>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theorem2_gap: Option<GapConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noisy_labels: Option<NoisyLabelsSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise2noise: Option<Noise2NoiseSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<ScoreSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tweedie: Option<TweedieConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uncertainty: Option<UncertaintyConfig>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Exactly the section named by `kind` must be present, every training
    /// config must be consistent, and every referenced file must exist.
    pub fn validate(&self) -> Result<()> {
        let present = [
            self.theorem1.is_some(),
            self.theorem2_gap.is_some(),
            self.noisy_labels.is_some(),
            self.noise2noise.is_some(),
            self.score.is_some(),
            self.tweedie.is_some(),
            self.uncertainty.is_some(),
        ];
        for (kind, has) in ExperimentKind::ALL.iter().zip(present) {
            if (*kind == self.kind) != has {
                return Err(Error::Config(if has {
                    format!("section [{}] does not belong to a {} config", kind.section(), self.kind.name())
                } else {
                    format!("{} config needs a [{}] section", kind.name(), kind.section())
                }));
            }
        }
        let mut trains: Vec<&TrainConfig> = Vec::new();
        if let Some(t) = &self.theorem1 {
            trains.extend([&t.l2_train, &t.ce_train]);
        }
        if let Some(n) = &self.noisy_labels {
            trains.extend([&n.experiment.train, &n.experiment.reference_train]);
            if let Some(tc) = &n.experiment.table_check {
                trains.push(&tc.train);
            }
            if let DataSpec::Idx {
                train_images,
                train_labels,
                test_images,
                test_labels,
                ..
            } = &n.data
            {
                for p in [train_images, train_labels, test_images, test_labels] {
                    if !p.is_file() {
                        return Err(Error::Config(format!("data file {} does not exist", p.display())));
                    }
                }
            }
        }
        if let Some(n) = &self.noise2noise {
            trains.push(&n.training.train);
        }
        if let Some(s) = &self.score {
            trains.push(&s.regression.train);
        }
        if let Some(u) = &self.uncertainty {
            trains.extend([&u.mean_stage.train, &u.var_stage.train]);
        }
        for t in trains {
            t.validate()?;
        }
        Ok(())
    }

    /// Stable serialization used for hashing: JSON in declaration order,
    /// without the output directory.
    pub fn canonical(&self) -> String {
        let snapshot = Self {
            output_dir: None,
            ..self.clone()
        };
        serde_json::to_string(&snapshot).expect("configs serialize")
    }

    /// Hex SHA-256 of the canonical form.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "kind = \"theorem2-gap\"\nseed = 4\n[theorem2_gap]\nn_joints = 2\nn_inputs = 3\nn_outcomes = 3\noutcome_dim = 1\nn_probes = 5\nprobe_scale = 1.0\n";

    #[test]
    fn shipped_configs_parse() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
        let mut seen = 0;
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.extension().is_some_and(|e| e == "toml") {
                let cfg = ExperimentConfig::load(&path).unwrap();
                let again = ExperimentConfig::parse(&cfg.to_toml().unwrap()).unwrap();
                assert_eq!(cfg, again, "{}", path.display());
                seen += 1;
            }
        }
        assert_eq!(seen, 7);
    }

    #[test]
    fn section_must_match_kind() {
        assert!(ExperimentConfig::parse(MINIMAL).is_ok());
        let wrong = MINIMAL.replace("theorem2-gap", "tweedie");
        assert!(matches!(ExperimentConfig::parse(&wrong), Err(Error::Config(_))));
        let no_seed = MINIMAL.replace("seed = 4\n", "");
        assert!(matches!(ExperimentConfig::parse(&no_seed), Err(Error::Config(_))));
        let typo = MINIMAL.replace("n_probes", "n_probs");
        assert!(matches!(ExperimentConfig::parse(&typo), Err(Error::Config(_))));
    }

    #[test]
    fn hash_ignores_output_dir_but_not_seed() {
        let a = ExperimentConfig::parse(MINIMAL).unwrap();
        let mut b = a.clone();
        b.output_dir = Some("elsewhere".into());
        assert_eq!(a.content_hash(), b.content_hash());
        b.seed += 1;
        assert_ne!(a.content_hash(), b.content_hash());
        assert_eq!(a.content_hash().len(), 64);
    }

    #[test]
    fn missing_data_files_fail_validation() {
        let text = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/noisy_labels.toml"))
            .unwrap()
            .replace(
                "source = \"blobs\"\nn_classes = 10\ntrain_per_class = 1000\ntest_per_class = 200\nspread = 0.05",
                "source = \"idx\"\nn_classes = 10\ntrain_images = \"/nonexistent/a\"\ntrain_labels = \"/nonexistent/b\"\ntest_images = \"/nonexistent/c\"\ntest_labels = \"/nonexistent/d\"",
            );
        match ExperimentConfig::parse(&text) {
            Err(Error::Config(m)) => assert!(m.contains("does not exist"), "{m}"),
            other => panic!("{other:?}"),
        }
    }
}
