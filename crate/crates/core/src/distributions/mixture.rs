use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::rng::Stream;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub weight: f64,
    pub mean: Vec<f64>,
    /// Isotropic variance σ²; the component covariance is σ²·I.
    pub variance: f64,
}

/// Mixture of isotropic Gaussians with closed-form density and score.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMixture", into = "RawMixture")]
pub struct GaussianMixture {
    dim: usize,
    components: Vec<MixtureComponent>,
}

#[derive(Serialize, Deserialize)]
struct RawMixture {
    components: Vec<MixtureComponent>,
}

impl TryFrom<RawMixture> for GaussianMixture {
    type Error = Error;

    fn try_from(r: RawMixture) -> Result<Self> {
        GaussianMixture::new(r.components)
    }
}

impl From<GaussianMixture> for RawMixture {
    fn from(g: GaussianMixture) -> Self {
        RawMixture {
            components: g.components,
        }
    }
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

impl GaussianMixture {
    pub fn new(components: Vec<MixtureComponent>) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| Error::Domain("mixture needs at least one component".into()))?;
        let dim = first.mean.len();
        if dim == 0 {
            return Err(Error::Domain("mixture dimension must be positive".into()));
        }
        let mut total = 0.0;
        for (k, c) in components.iter().enumerate() {
            if c.mean.len() != dim {
                return Err(Error::Domain(format!("component {k} has wrong dimension")));
            }
            if !(c.variance > 0.0 && c.variance.is_finite()) {
                return Err(Error::Domain(format!("component {k} variance must be > 0")));
            }
            if !(c.weight >= 0.0) {
                return Err(Error::Domain(format!("component {k} weight is negative")));
            }
            total += c.weight;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!("mixture weights sum to {total}")));
        }
        Ok(Self { dim, components })
    }

    /// Single isotropic Gaussian.
    pub fn gaussian(mean: Vec<f64>, variance: f64) -> Result<Self> {
        Self::new(vec![MixtureComponent {
            weight: 1.0,
            mean,
            variance,
        }])
    }

    /// Random mixture: means uniform in `[-3, 3]^dim`, standard deviations in
    /// `[0.3, 1]`, weights from normalized uniforms in `[0.2, 1]`.
    pub fn random(dim: usize, n_components: usize, rng: &mut Stream) -> Result<Self> {
        let raw: Vec<f64> = (0..n_components).map(|_| rng.random_range(0.2..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let mut components: Vec<MixtureComponent> = raw
            .iter()
            .map(|w| {
                let sd: f64 = rng.random_range(0.3..1.0);
                MixtureComponent {
                    weight: w / total,
                    mean: (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect(),
                    variance: sd * sd,
                }
            })
            .collect();
        let residue = 1.0 - components.iter().map(|c| c.weight).sum::<f64>();
        components[0].weight += residue;
        Self::new(components)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> &[MixtureComponent] {
        &self.components
    }

    fn component_log_densities(&self, y: &[f64]) -> Vec<f64> {
        let d = self.dim as f64;
        self.components
            .iter()
            .map(|c| {
                let sq: f64 = y.iter().zip(&c.mean).map(|(a, m)| (a - m) * (a - m)).sum();
                c.weight.ln() - 0.5 * d * (2.0 * PI * c.variance).ln() - sq / (2.0 * c.variance)
            })
            .collect()
    }

    pub fn log_density(&self, y: &[f64]) -> f64 {
        log_sum_exp(&self.component_log_densities(y))
    }

    /// Posterior component probabilities at `y`.
    pub fn responsibilities(&self, y: &[f64]) -> Vec<f64> {
        let logs = self.component_log_densities(y);
        let lse = log_sum_exp(&logs);
        logs.iter().map(|l| (l - lse).exp()).collect()
    }

    /// `∇_y log p(y)`: responsibility-weighted component scores.
    pub fn score(&self, y: &[f64]) -> Vec<f64> {
        let r = self.responsibilities(y);
        let mut out = vec![0.0; self.dim];
        for (rk, c) in r.iter().zip(&self.components) {
            for (o, (m, yv)) in out.iter_mut().zip(c.mean.iter().zip(y)) {
                *o += rk * (m - yv) / c.variance;
            }
        }
        out
    }

    /// Distribution of `y = x + n` with `x` from this mixture and
    /// `n ~ N(0, noise_var·I)`: every component variance grows by `noise_var`.
    pub fn widened(&self, noise_var: f64) -> GaussianMixture {
        GaussianMixture {
            dim: self.dim,
            components: self
                .components
                .iter()
                .map(|c| MixtureComponent {
                    weight: c.weight,
                    mean: c.mean.clone(),
                    variance: c.variance + noise_var,
                })
                .collect(),
        }
    }

    /// Exact `E[x | y]` for `y = x + n`, `n ~ N(0, noise_var·I)`: the
    /// conjugate mean of each component, weighted by its responsibility under
    /// the widened mixture.
    pub fn posterior_mean_under_noise(&self, y: &[f64], noise_var: f64) -> Vec<f64> {
        let r = self.widened(noise_var).responsibilities(y);
        let mut out = vec![0.0; self.dim];
        for (rk, c) in r.iter().zip(&self.components) {
            let s = c.variance + noise_var;
            for (o, (m, yv)) in out.iter_mut().zip(c.mean.iter().zip(y)) {
                *o += rk * (c.variance * yv + noise_var * m) / s;
            }
        }
        out
    }

    pub fn sample(&self, rng: &mut Stream) -> Vec<f64> {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut pick = self.components.len() - 1;
        for (k, c) in self.components.iter().enumerate() {
            acc += c.weight;
            if u < acc {
                pick = k;
                break;
            }
        }
        let c = &self.components[pick];
        let sd = c.variance.sqrt();
        c.mean
            .iter()
            .map(|m| m + sd * rng.sample::<f64, _>(StandardNormal))
            .collect()
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for c in &self.components {
            for (o, m) in out.iter_mut().zip(&c.mean) {
                *o += c.weight * m;
            }
        }
        out
    }

    /// Per-coordinate marginal variance.
    pub fn marginal_variance(&self) -> Vec<f64> {
        let mu = self.mean();
        let mut out = vec![0.0; self.dim];
        for c in &self.components {
            for (o, (m, mbar)) in out.iter_mut().zip(c.mean.iter().zip(&mu)) {
                *o += c.weight * (c.variance + (m - mbar) * (m - mbar));
            }
        }
        out
    }

    /// CDF of a scalar mixture.
    pub fn cdf_1d(&self, y: f64) -> f64 {
        self.components
            .iter()
            .map(|c| c.weight * normal_cdf((y - c.mean[0]) / c.variance.sqrt()))
            .sum()
    }

    /// Quantile of a scalar mixture by bisection on the CDF.
    pub fn quantile_1d(&self, p: f64) -> f64 {
        let (mut lo, mut hi) = self
            .components
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), c| {
                let s = 12.0 * c.variance.sqrt();
                (lo.min(c.mean[0] - s), hi.max(c.mean[0] + s))
            });
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.cdf_1d(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Seeder;

    #[test]
    fn standard_normal_score_at_two() {
        let g = GaussianMixture::gaussian(vec![0.0], 1.0).unwrap();
        assert!((g.score(&[2.0])[0] + 2.0).abs() < 1e-15);
    }

    #[test]
    fn symmetric_pair_has_zero_score_at_origin() {
        let g = GaussianMixture::new(vec![
            MixtureComponent { weight: 0.5, mean: vec![1.5], variance: 0.4 },
            MixtureComponent { weight: 0.5, mean: vec![-1.5], variance: 0.4 },
        ])
        .unwrap();
        assert!(g.score(&[0.0])[0].abs() < 1e-15);
    }

    #[test]
    fn score_matches_finite_differences() {
        let seeder = Seeder::new(11);
        for trial in 0..100 {
            let mut rng = seeder.stream("gmm", trial);
            let dim = 1 + (trial as usize % 2);
            let g = GaussianMixture::random(dim, 3, &mut rng).unwrap();
            let y: Vec<f64> = (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect();
            let s = g.score(&y);
            let h = 1e-5;
            for k in 0..dim {
                let mut yp = y.clone();
                let mut ym = y.clone();
                yp[k] += h;
                ym[k] -= h;
                let fd = (g.log_density(&yp) - g.log_density(&ym)) / (2.0 * h);
                assert!((fd - s[k]).abs() < 1e-6, "trial {trial}: {fd} vs {}", s[k]);
            }
        }
    }

    #[test]
    fn rejects_bad_components() {
        assert!(GaussianMixture::gaussian(vec![0.0], 0.0).is_err());
        assert!(GaussianMixture::new(vec![MixtureComponent {
            weight: 0.5,
            mean: vec![0.0],
            variance: 1.0
        }])
        .is_err());
    }

    #[test]
    fn quantiles_invert_cdf() {
        let g = GaussianMixture::gaussian(vec![1.0], 4.0).unwrap();
        assert!((g.quantile_1d(0.5) - 1.0).abs() < 1e-6);
        assert!((g.cdf_1d(g.quantile_1d(0.05)) - 0.05).abs() < 1e-6);
    }
}
