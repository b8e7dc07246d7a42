use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Stream;

/// Relative eigenvalue cutoff for the pseudo-inverse used when observations
/// are noiseless and `A Σ0 Aᵀ` is rank deficient.
pub const PINV_TOL: f64 = 1e-10;

/// Prior `x ~ N(μ0, Σ0)` observed through `y = A x + e`, `e ~ N(0, σ²I)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawLinear", into = "RawLinear")]
pub struct GaussianLinearModel {
    prior_mean: DVector<f64>,
    prior_cov: DMatrix<f64>,
    operator: DMatrix<f64>,
    noise_var: f64,
}

#[derive(Serialize, Deserialize)]
struct RawLinear {
    prior_mean: Vec<f64>,
    prior_cov: Vec<Vec<f64>>,
    operator: Vec<Vec<f64>>,
    noise_var: f64,
}

impl TryFrom<RawLinear> for GaussianLinearModel {
    type Error = Error;

    fn try_from(r: RawLinear) -> Result<Self> {
        GaussianLinearModel::new(r.prior_mean, r.prior_cov, r.operator, r.noise_var)
    }
}

impl From<GaussianLinearModel> for RawLinear {
    fn from(g: GaussianLinearModel) -> Self {
        let rows = |m: &DMatrix<f64>| {
            (0..m.nrows())
                .map(|i| m.row(i).iter().copied().collect())
                .collect()
        };
        RawLinear {
            prior_mean: g.prior_mean.iter().copied().collect(),
            prior_cov: rows(&g.prior_cov),
            operator: rows(&g.operator),
            noise_var: g.noise_var,
        }
    }
}

fn matrix_from_rows(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || cols == 0 || rows.iter().any(|r| r.len() != cols) {
        return Err(Error::Domain(format!("{what} must be a nonempty rectangular matrix")));
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

/// Exact posterior moments of `x | y`.
#[derive(Clone, Debug)]
pub struct Posterior {
    pub mean: Vec<f64>,
    pub covariance: DMatrix<f64>,
    /// Condition number of `A Σ0 Aᵀ + σ²I` (∞ when singular).
    pub condition: f64,
}

impl Posterior {
    /// Pixel-wise variance: the covariance diagonal.
    pub fn pixel_variance(&self) -> Vec<f64> {
        self.covariance.diagonal().iter().copied().collect()
    }
}

impl GaussianLinearModel {
    pub fn new(
        prior_mean: Vec<f64>,
        prior_cov: Vec<Vec<f64>>,
        operator: Vec<Vec<f64>>,
        noise_var: f64,
    ) -> Result<Self> {
        let d = prior_mean.len();
        let cov = matrix_from_rows(&prior_cov, "prior covariance")?;
        let a = matrix_from_rows(&operator, "operator")?;
        if cov.nrows() != d || cov.ncols() != d {
            return Err(Error::Domain(format!("prior covariance must be {d}x{d}")));
        }
        if a.ncols() != d {
            return Err(Error::Domain(format!("operator must have {d} columns")));
        }
        if !(noise_var >= 0.0 && noise_var.is_finite()) {
            return Err(Error::Domain("observation noise variance must be >= 0".into()));
        }
        if (&cov - cov.transpose()).amax() > 1e-12 {
            return Err(Error::Domain("prior covariance is not symmetric".into()));
        }
        let model = Self {
            prior_mean: DVector::from_vec(prior_mean),
            prior_cov: cov,
            operator: a,
            noise_var,
        };
        let min_eig = model.prior_cov.clone().symmetric_eigenvalues().min();
        if min_eig < -1e-10 * model.prior_cov.amax().max(1.0) {
            return Err(Error::Domain(format!(
                "prior covariance is not positive semidefinite (eigenvalue {min_eig:e})"
            )));
        }
        Ok(model)
    }

    /// `d`-pixel signal with a squared-exponential prior covariance
    /// (`scale² · exp(-(i-j)²/(2ℓ²))` plus a small diagonal jitter), observed
    /// through block averaging down to `m` pixels. `d` must be a multiple of `m`.
    pub fn block_average(
        d: usize,
        m: usize,
        prior_mean: Vec<f64>,
        scale: f64,
        length: f64,
        noise_var: f64,
    ) -> Result<Self> {
        if m == 0 || !d.is_multiple_of(m) || m > d {
            return Err(Error::Domain(format!("cannot block-average {d} pixels to {m}")));
        }
        let block = d / m;
        let cov = (0..d)
            .map(|i| {
                (0..d)
                    .map(|j| {
                        let diff = i as f64 - j as f64;
                        let k = scale * scale * (-diff * diff / (2.0 * length * length)).exp();
                        if i == j {
                            k + 1e-3 * scale * scale
                        } else {
                            k
                        }
                    })
                    .collect()
            })
            .collect();
        let op = (0..m)
            .map(|r| {
                (0..d)
                    .map(|c| if c / block == r { 1.0 / block as f64 } else { 0.0 })
                    .collect()
            })
            .collect();
        Self::new(prior_mean, cov, op, noise_var)
    }

    pub fn dim_x(&self) -> usize {
        self.prior_mean.len()
    }

    pub fn dim_y(&self) -> usize {
        self.operator.nrows()
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    pub fn operator(&self) -> &DMatrix<f64> {
        &self.operator
    }

    pub fn prior_mean(&self) -> &DVector<f64> {
        &self.prior_mean
    }

    pub fn prior_cov(&self) -> &DMatrix<f64> {
        &self.prior_cov
    }

    pub fn observe(&self, x: &[f64]) -> Vec<f64> {
        (&self.operator * DVector::from_column_slice(x))
            .iter()
            .copied()
            .collect()
    }

    /// Lifts `y` back to `d` pixels by zero-order hold: each pixel takes the
    /// operator-weighted average of the observations that touch it.
    pub fn lift(&self, y: &[f64]) -> Vec<f64> {
        (0..self.dim_x())
            .map(|j| {
                let col = self.operator.column(j);
                let weight: f64 = col.iter().sum();
                if weight == 0.0 {
                    0.0
                } else {
                    col.iter().zip(y).map(|(a, v)| a * v).sum::<f64>() / weight
                }
            })
            .collect()
    }

    /// `K = Σ0 Aᵀ S⁺` with `S = A Σ0 Aᵀ + σ²I`, plus the condition of `S`.
    fn gain(&self) -> Result<(DMatrix<f64>, f64)> {
        let a = &self.operator;
        let m = a.nrows();
        let s = a * &self.prior_cov * a.transpose()
            + DMatrix::identity(m, m) * self.noise_var;
        let eig = SymmetricEigen::new(s);
        let max = eig.eigenvalues.amax();
        let min = eig.eigenvalues.min();
        let condition = if min > 0.0 { max / min } else { f64::INFINITY };
        let cutoff = PINV_TOL * max;
        if min <= cutoff && self.noise_var > 0.0 {
            return Err(Error::Singular { condition });
        }
        if max <= 0.0 {
            return Err(Error::Singular { condition });
        }
        let inv_diag = eig
            .eigenvalues
            .map(|l| if l > cutoff { 1.0 / l } else { 0.0 });
        let s_pinv = &eig.eigenvectors
            * DMatrix::from_diagonal(&inv_diag)
            * eig.eigenvectors.transpose();
        Ok((&self.prior_cov * a.transpose() * s_pinv, condition))
    }

    pub fn posterior(&self, y: &[f64]) -> Result<Posterior> {
        if y.len() != self.dim_y() {
            return Err(Error::ShapeMismatch {
                op: "gaussian_linear_posterior",
                lhs: vec![y.len()],
                rhs: vec![self.dim_y()],
            });
        }
        let (k, condition) = self.gain()?;
        let resid = DVector::from_column_slice(y) - &self.operator * &self.prior_mean;
        let mean = &self.prior_mean + &k * resid;
        let cov = &self.prior_cov - &k * &self.operator * &self.prior_cov;
        let cov = (&cov + cov.transpose()) * 0.5;
        // eigenvalues at rounding level relative to the prior are exact zeros
        // (directions pinned down by the observation)
        let floor = PINV_TOL * self.prior_cov.amax();
        let eig = SymmetricEigen::new(cov);
        let clipped = eig.eigenvalues.map(|l| if l > floor { l } else { 0.0 });
        let cov = &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
        let cov = (&cov + cov.transpose()) * 0.5;
        Ok(Posterior {
            mean: mean.iter().copied().collect(),
            covariance: cov,
            condition,
        })
    }

    pub fn sample_prior(&self, rng: &mut Stream) -> Vec<f64> {
        sample_gaussian(&self.prior_mean, &self.prior_cov, rng)
    }

    /// Monte-Carlo mean and pixel-wise variance from `n_samples` exact
    /// posterior draws. The variance uses the `1/n` normalization.
    pub fn posterior_mc_stats(
        &self,
        y: &[f64],
        n_samples: usize,
        rng: &mut Stream,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        if n_samples < 2 {
            return Err(Error::Domain("posterior_mc_stats needs at least 2 samples".into()));
        }
        let post = self.posterior(y)?;
        let sampler = GaussianSampler::new(&DVector::from_vec(post.mean), &post.covariance);
        let d = self.dim_x();
        let draws: Vec<Vec<f64>> = (0..n_samples).map(|_| sampler.sample(rng)).collect();
        // shift by the first draw so identical draws give exactly zero variance
        let origin = draws[0].clone();
        let n = n_samples as f64;
        let mut shift = vec![0.0; d];
        for x in &draws {
            for ((s, xi), oi) in shift.iter_mut().zip(x).zip(&origin) {
                *s += xi - oi;
            }
        }
        for s in &mut shift {
            *s /= n;
        }
        let mut var = vec![0.0; d];
        for x in &draws {
            for (((v, xi), oi), si) in var.iter_mut().zip(x).zip(&origin).zip(&shift) {
                let dev = (xi - oi) - si;
                *v += dev * dev;
            }
        }
        for v in &mut var {
            *v /= n;
        }
        let mean = origin.iter().zip(&shift).map(|(o, s)| o + s).collect();
        Ok((mean, var))
    }
}

/// Draws from `N(mean, cov)` through the symmetric square root; negative
/// eigenvalues from rounding are clipped to zero.
pub struct GaussianSampler {
    mean: DVector<f64>,
    root: DMatrix<f64>,
}

impl GaussianSampler {
    pub fn new(mean: &DVector<f64>, cov: &DMatrix<f64>) -> Self {
        let eig = SymmetricEigen::new(cov.clone());
        let sqrt = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
        let root = &eig.eigenvectors * DMatrix::from_diagonal(&sqrt);
        Self {
            mean: mean.clone(),
            root,
        }
    }

    pub fn sample(&self, rng: &mut Stream) -> Vec<f64> {
        let z = DVector::from_fn(self.root.ncols(), |_, _| rng.sample::<f64, _>(StandardNormal));
        (&self.mean + &self.root * z).iter().copied().collect()
    }
}

fn sample_gaussian(mean: &DVector<f64>, cov: &DMatrix<f64>, rng: &mut Stream) -> Vec<f64> {
    GaussianSampler::new(mean, cov).sample(rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Seeder;

    fn two_pixel() -> GaussianLinearModel {
        GaussianLinearModel::new(
            vec![0.0, 0.0],
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![vec![1.0, 1.0]],
            0.0,
        )
        .unwrap()
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn projection_onto_null_space() {
        let post = two_pixel().posterior(&[2.0]).unwrap();
        for v in &post.mean {
            assert!((v - 1.0).abs() < 1e-12);
        }
        let expect = [[0.5, -0.5], [-0.5, 0.5]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((post.covariance[(i, j)] - expect[i][j]).abs() < 1e-12);
            }
        }
        for v in post.pixel_variance() {
            assert!((v - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn fully_observed_posterior_is_degenerate() {
        let glm = GaussianLinearModel::new(
            vec![0.3, -0.1, 0.2],
            vec![
                vec![1.0, 0.2, 0.0],
                vec![0.2, 1.5, 0.1],
                vec![0.0, 0.1, 0.7],
            ],
            vec![
                vec![1.0, 0.0, 0.0],
                vec![0.0, 1.0, 0.0],
                vec![0.0, 0.0, 1.0],
            ],
            0.0,
        )
        .unwrap();
        let y = [1.0, -2.0, 0.5];
        let post = glm.posterior(&y).unwrap();
        for (m, v) in post.mean.iter().zip(y) {
            assert!((m - v).abs() < 1e-12);
        }
        assert!(post.covariance.amax() < 1e-12);
        let (_, var) = glm
            .posterior_mc_stats(&y, 10, &mut Seeder::new(1).stream("mc", 0))
            .unwrap();
        assert!(var.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn covariance_is_symmetric_psd_and_consistent() {
        let glm = GaussianLinearModel::block_average(8, 2, vec![0.0; 8], 1.0, 2.0, 0.0).unwrap();
        let mut rng = Seeder::new(4).stream("glm", 0);
        for _ in 0..20 {
            let x = glm.sample_prior(&mut rng);
            let y = glm.observe(&x);
            let post = glm.posterior(&y).unwrap();
            assert!((&post.covariance - post.covariance.transpose()).amax() < 1e-12);
            assert!(post.covariance.clone().symmetric_eigenvalues().min() >= -1e-10);
            let back = glm.observe(&post.mean);
            for (a, b) in back.iter().zip(&y) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn noisy_singular_system_reports_condition() {
        let glm = GaussianLinearModel::new(
            vec![0.0, 0.0],
            vec![vec![1.0, 0.0], vec![0.0, 0.0]],
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            1e-300,
        )
        .unwrap();
        match glm.posterior(&[0.0, 0.0]) {
            Err(Error::Singular { condition }) => assert!(condition > 1e12),
            other => panic!("expected singular error, got {other:?}"),
        }
    }

    #[test]
    fn lift_is_zero_order_hold_for_block_average() {
        let glm = GaussianLinearModel::block_average(8, 2, vec![0.0; 8], 1.0, 2.0, 0.0).unwrap();
        assert_eq!(glm.lift(&[1.0, 3.0]), vec![1.0, 1.0, 1.0, 1.0, 3.0, 3.0, 3.0, 3.0]);
    }

    #[test]
    fn rejects_asymmetric_prior() {
        assert!(GaussianLinearModel::new(
            vec![0.0, 0.0],
            vec![vec![1.0, 0.1], vec![0.0, 1.0]],
            vec![vec![1.0, 0.0]],
            0.0
        )
        .is_err());
    }
}
