use serde::{Deserialize, Serialize};

use super::identity::marginal_grid;
use crate::distributions::{make_noise2noise_pairs, GaussianMixture, NoisePair};
use crate::error::{Error, Result};
use crate::models::{predict, train_supervised, Dataset, Head, ModelSpec, TrainConfig};
use crate::numerics::Tensor;
use crate::risk::LossFn;
use crate::rng::Seeder;
use crate::uncertainty::nmse;

/// Clean prior plus paired corruptions `y = s + n1`, `x = s + n2`.
#[derive(Clone, Debug, PartialEq)]
pub struct DenoiseTask {
    pub prior: GaussianMixture,
    pub sigma_input: f64,
    pub sigma_target: f64,
    pub pairs: Vec<NoisePair>,
}

impl DenoiseTask {
    pub fn new(prior: GaussianMixture, sigma_input: f64, sigma_target: f64, n: usize, seeder: &Seeder) -> Result<Self> {
        if !(sigma_input > 0.0) {
            return Err(Error::Domain("input noise must be > 0".into()));
        }
        if !(sigma_target >= 0.0) {
            return Err(Error::Domain("target noise must be >= 0".into()));
        }
        let pairs = make_noise2noise_pairs(|r| prior.sample(r), sigma_input, sigma_target, seeder, n)?;
        Ok(Self {
            prior,
            sigma_input,
            sigma_target,
            pairs,
        })
    }

    fn dataset(&self, clean_targets: bool) -> Result<Dataset> {
        let inputs: Vec<Vec<f64>> = self.pairs.iter().map(|p| p.input.clone()).collect();
        let targets: Vec<Vec<f64>> = self
            .pairs
            .iter()
            .map(|p| if clean_targets { p.clean.clone() } else { p.target.clone() })
            .collect();
        Dataset::from_rows(&inputs, &targets)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenoiseTrainConfig {
    pub model: ModelSpec,
    pub train: TrainConfig,
    #[serde(default = "default_grid")]
    pub grid_points: usize,
}

fn default_grid() -> usize {
    512
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub y: f64,
    pub f_noisy: f64,
    pub f_clean: f64,
    pub exact: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Noise2NoiseReport {
    /// `NMSE(f_x, f_s)` on the held-out grid.
    pub nmse_pair: f64,
    pub nmse_noisy_vs_exact: f64,
    pub nmse_clean_vs_exact: f64,
    /// `NMSE(f_x, f_s)` at every pair of matching checkpoints.
    pub pair_history: Vec<f64>,
    pub grid: Vec<GridRow>,
}

/// Trains `f_x` on noisy targets and `f_s` on clean targets from the same
/// initialization and minibatch sequence, then compares both with each other
/// and with the exact `E[s|y]` on an equispaced grid of `±4` standard
/// deviations of the noisy marginal.
pub fn noise2noise_equivalence_run(task: &DenoiseTask, cfg: &DenoiseTrainConfig, seeder: &Seeder) -> Result<Noise2NoiseReport> {
    if task.prior.dim() != 1 {
        return Err(Error::Unsupported("grid evaluation needs a scalar prior".into()));
    }
    if cfg.train.loss != LossFn::L2 {
        return Err(Error::Config("denoisers are trained with the L2 loss".into()));
    }
    let init = cfg.model.build(1, 1, Head::Identity, &mut seeder.stream("n2n.init", 0))?;
    let noisy = task.dataset(false)?;
    let clean = task.dataset(true)?;
    let (a, b) = rayon::join(
        || train_supervised(init.clone(), &noisy, &cfg.train),
        || train_supervised(init.clone(), &clean, &cfg.train),
    );
    let ((f_x, rec_x), (f_s, rec_s)) = (a?, b?);

    let noise_var = task.sigma_input * task.sigma_input;
    let ys = marginal_grid(&task.prior, noise_var, 4.0, cfg.grid_points);
    let grid_in = Tensor::new(vec![ys.len(), 1], ys.clone())?;
    let exact: Vec<f64> = ys
        .iter()
        .map(|y| task.prior.posterior_mean_under_noise(&[*y], noise_var)[0])
        .collect();
    let px = predict(&f_x, &grid_in)?.into_data();
    let ps = predict(&f_s, &grid_in)?.into_data();

    let mut pair_history = Vec::with_capacity(rec_x.checkpoints.len());
    for i in 0..rec_x.checkpoints.len().min(rec_s.checkpoints.len()) {
        let hx = predict(&rec_x.restore(&f_x, i), &grid_in)?.into_data();
        let hs = predict(&rec_s.restore(&f_s, i), &grid_in)?.into_data();
        pair_history.push(pair_nmse(&hx, &hs)?);
    }
    let grid = ys
        .iter()
        .enumerate()
        .map(|(i, y)| GridRow {
            y: *y,
            f_noisy: px[i],
            f_clean: ps[i],
            exact: exact[i],
        })
        .collect();
    Ok(Noise2NoiseReport {
        nmse_pair: pair_nmse(&px, &ps)?,
        nmse_noisy_vs_exact: nmse(&px, &exact)?,
        nmse_clean_vs_exact: nmse(&ps, &exact)?,
        pair_history,
        grid,
    })
}

fn pair_nmse(x: &[f64], s: &[f64]) -> Result<f64> {
    if x == s {
        return Ok(0.0);
    }
    nmse(x, s)
}

/// A finite distribution as `(value, probability)` pairs.
pub type FiniteDist = [(f64, f64)];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteOracleRow {
    pub y: f64,
    pub mean_target: f64,
    pub mean_signal: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteOracleReport {
    pub rows: Vec<DiscreteOracleRow>,
    pub max_abs_diff: f64,
}

const MERGE_TOL: f64 = 1e-12;

fn check_dist(name: &str, d: &FiniteDist) -> Result<()> {
    if d.is_empty() || d.iter().any(|(v, p)| !(v.is_finite() && *p >= 0.0)) {
        return Err(Error::Domain(format!("{name} needs finite values and nonnegative probabilities")));
    }
    let total: f64 = d.iter().map(|(_, p)| p).sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::Domain(format!("{name} probabilities sum to {total}")));
    }
    Ok(())
}

/// Enumerates `E[x|y]` and `E[s|y]` for independent finite `s`, `n1`, `n2`
/// with `y = s + n1`, `x = s + n2`. Refuses target noise with nonzero mean.
pub fn discrete_noise2noise_oracle(
    signal: &FiniteDist,
    input_noise: &FiniteDist,
    target_noise: &FiniteDist,
) -> Result<DiscreteOracleReport> {
    check_dist("signal", signal)?;
    check_dist("input noise", input_noise)?;
    check_dist("target noise", target_noise)?;
    let bias: f64 = target_noise.iter().map(|(v, p)| v * p).sum();
    if bias.abs() > MERGE_TOL {
        return Err(Error::Domain(format!("target noise has mean {bias}, must be zero")));
    }
    // (y, P, Σ P·x, Σ P·s)
    let mut cells: Vec<(f64, f64, f64, f64)> = Vec::new();
    for (s, ps) in signal {
        for (n1, p1) in input_noise {
            for (n2, p2) in target_noise {
                let p = ps * p1 * p2;
                if p == 0.0 {
                    continue;
                }
                cells.push((s + n1, p, p * (s + n2), p * s));
            }
        }
    }
    cells.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut groups: Vec<(f64, f64, f64, f64)> = Vec::new();
    for c in cells {
        match groups.last_mut() {
            Some(g) if (c.0 - g.0).abs() <= MERGE_TOL * (1.0 + g.0.abs()) => {
                g.1 += c.1;
                g.2 += c.2;
                g.3 += c.3;
            }
            _ => groups.push(c),
        }
    }
    let rows: Vec<DiscreteOracleRow> = groups
        .iter()
        .map(|(y, p, sx, ss)| DiscreteOracleRow {
            y: *y,
            mean_target: sx / p,
            mean_signal: ss / p,
        })
        .collect();
    let max_abs_diff = rows
        .iter()
        .map(|r| (r.mean_target - r.mean_signal).abs())
        .fold(0.0, f64::max);
    Ok(DiscreteOracleReport { rows, max_abs_diff })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_target_noise() {
        let r = discrete_noise2noise_oracle(
            &[(0.0, 0.5), (1.0, 0.5)],
            &[(-0.5, 0.25), (0.0, 0.5), (0.5, 0.25)],
            &[(-1.0, 0.5), (1.0, 0.5)],
        )
        .unwrap();
        assert!(r.max_abs_diff < 1e-12);
        assert_eq!(r.rows.len(), 5);
    }

    #[test]
    fn clean_targets_and_biased_rejection() {
        let r = discrete_noise2noise_oracle(&[(0.0, 0.3), (2.0, 0.7)], &[(0.0, 1.0)], &[(0.0, 1.0)]).unwrap();
        assert_eq!(r.max_abs_diff, 0.0);
        assert!(discrete_noise2noise_oracle(&[(0.0, 1.0)], &[(0.0, 1.0)], &[(0.1, 1.0)]).is_err());
        assert!(discrete_noise2noise_oracle(&[(0.0, 0.9)], &[(0.0, 1.0)], &[(0.0, 1.0)]).is_err());
    }

    #[test]
    fn clean_targets_give_identical_twins() {
        use crate::models::TrainConfig;
        use crate::numerics::OptimizerConfig;
        let prior = GaussianMixture::gaussian(vec![0.0], 1.0).unwrap();
        let s = Seeder::new(3);
        let task = DenoiseTask::new(prior, 0.5, 0.0, 256, &s).unwrap();
        let cfg = DenoiseTrainConfig {
            model: ModelSpec::Mlp { hidden: vec![8] },
            train: TrainConfig {
                loss: LossFn::L2,
                optimizer: OptimizerConfig::adam(1e-2),
                schedule: Default::default(),
                batch_size: 32,
                iterations: 20,
                checkpoint_interval: 10,
                seed: 0,
            },
            grid_points: 64,
        };
        let r = noise2noise_equivalence_run(&task, &cfg, &s).unwrap();
        assert_eq!(r.nmse_pair, 0.0);
        assert_eq!(r.pair_history, vec![0.0; 3]);
    }
}
