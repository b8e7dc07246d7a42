use crate::distributions::GaussianMixture;
use crate::error::{Error, Result};

/// `(x − y)/σ²`, which is `∇_y log p(y|x)` for `y = x + N(0, σ²I)`.
pub fn score_label(x: &[f64], y: &[f64], noise_var: f64) -> Vec<f64> {
    x.iter().zip(y).map(|(a, b)| (a - b) / noise_var).collect()
}

/// `y + σ²·score(y)`.
pub fn tweedie_mean<F>(y: &[f64], noise_var: f64, score: F) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    if !(noise_var > 0.0) {
        return Err(Error::Domain("noise variance must be > 0".into()));
    }
    let s = score(y);
    if s.len() != y.len() {
        return Err(Error::ShapeMismatch {
            op: "tweedie_mean",
            lhs: vec![y.len()],
            rhs: vec![s.len()],
        });
    }
    Ok(y.iter().zip(&s).map(|(a, b)| a + noise_var * b).collect())
}

const HALF_WIDTH: f64 = 10.0;
const NODES: usize = 2001;
const CONVERGENCE_TOL: f64 = 1e-11;

fn log_normal(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * (2.0 * std::f64::consts::PI * var).ln() - (x - mean) * (x - mean) / (2.0 * var)
}

/// `E_{x|y}[(x − y)/label_var]` by trapezoid quadrature of
/// `p(x)·N(y; x, noise_var)` over `x`, one node set per prior component
/// centered on where that component's factor concentrates.
fn posterior_label_mean(prior: &GaussianMixture, y: f64, noise_var: f64, label_var: f64, nodes: usize) -> f64 {
    let mut logs = Vec::with_capacity(prior.components().len() * nodes);
    let mut values = Vec::with_capacity(logs.capacity());
    for c in prior.components() {
        if c.weight == 0.0 {
            continue;
        }
        let tau2 = c.variance;
        let center = (tau2 * y + noise_var * c.mean[0]) / (tau2 + noise_var);
        let sd = (tau2 * noise_var / (tau2 + noise_var)).sqrt();
        let h = 2.0 * HALF_WIDTH * sd / (nodes - 1) as f64;
        for i in 0..nodes {
            let x = center - HALF_WIDTH * sd + i as f64 * h;
            let end = if i == 0 || i == nodes - 1 { 0.5 } else { 1.0 };
            let log_joint = c.weight.ln() + log_normal(x, c.mean[0], tau2) + log_normal(y, x, noise_var);
            logs.push(log_joint + (end * h).ln());
            values.push((x - y) / label_var);
        }
    }
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut num = 0.0;
    let mut den = 0.0;
    for (l, v) in logs.iter().zip(&values) {
        let w = (l - max).exp();
        num += w * v;
        den += w;
    }
    num / den
}

/// Largest `|E_{x|y}[∇_y log p(y|x)] − ∇_y log p(y)|` over `y_grid`, with
/// the left side by quadrature against the exact posterior and the right
/// side from the widened mixture. `label_var` is the variance used to form
/// the label; a value different from `noise_var` breaks the identity.
pub fn score_identity_deviation(
    prior: &GaussianMixture,
    noise_var: f64,
    label_var: f64,
    y_grid: &[f64],
) -> Result<f64> {
    if prior.dim() != 1 {
        return Err(Error::Unsupported("score identity check needs a scalar prior".into()));
    }
    if !(noise_var > 0.0 && label_var > 0.0) {
        return Err(Error::Domain("noise variance must be > 0".into()));
    }
    let marginal = prior.widened(noise_var);
    let mut worst = 0.0f64;
    for &y in y_grid {
        let fine = posterior_label_mean(prior, y, noise_var, label_var, NODES);
        let coarse = posterior_label_mean(prior, y, noise_var, label_var, NODES / 2 + 1);
        let scale = 1.0 + fine.abs();
        if !((fine - coarse).abs() <= CONVERGENCE_TOL * scale) {
            return Err(Error::Quadrature(format!(
                "at y = {y}: {fine} with {NODES} nodes, {coarse} with {} nodes",
                NODES / 2 + 1
            )));
        }
        worst = worst.max((fine - marginal.score(&[y])[0]).abs());
    }
    Ok(worst)
}

pub fn verify_score_identity(prior: &GaussianMixture, noise_var: f64, y_grid: &[f64]) -> Result<f64> {
    score_identity_deviation(prior, noise_var, noise_var, y_grid)
}

/// `n` equispaced points over `±half_width` standard deviations of the
/// noisy marginal around its mean.
pub fn marginal_grid(prior: &GaussianMixture, noise_var: f64, half_width: f64, n: usize) -> Vec<f64> {
    let m = prior.mean()[0];
    let sd = (prior.marginal_variance()[0] + noise_var).sqrt();
    let lo = m - half_width * sd;
    let step = 2.0 * half_width * sd / (n.max(2) - 1) as f64;
    (0..n).map(|i| lo + i as f64 * step).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Seeder;

    #[test]
    fn conjugate_tweedie() {
        let prior = GaussianMixture::gaussian(vec![0.0], 1.0).unwrap();
        let m = prior.widened(1.0);
        let out = tweedie_mean(&[2.0], 1.0, |y| m.score(y)).unwrap();
        assert!((out[0] - 1.0).abs() < 1e-15);
        let tiny = tweedie_mean(&[2.0], 1e-12, |y| prior.widened(1e-12).score(y)).unwrap();
        assert!((tiny[0] - 2.0).abs() < 1e-10);
        assert!(tweedie_mean(&[2.0], 0.0, |y| y.to_vec()).is_err());
    }

    #[test]
    fn tweedie_matches_responsibility_weighted_means() {
        let s = Seeder::new(5);
        for k in 0..5 {
            let prior = GaussianMixture::random(1, 3, &mut s.stream("gmm", k)).unwrap();
            let nv = 0.5;
            let m = prior.widened(nv);
            for y in marginal_grid(&prior, nv, 4.0, 512) {
                let t = tweedie_mean(&[y], nv, |v| m.score(v)).unwrap()[0];
                let e = prior.posterior_mean_under_noise(&[y], nv)[0];
                assert!((t - e).abs() < 1e-10, "{t} vs {e}");
            }
        }
    }

    #[test]
    fn identity_holds_and_control_fails() {
        let prior = GaussianMixture::random(1, 3, &mut Seeder::new(2).stream("gmm", 0)).unwrap();
        let grid = marginal_grid(&prior, 0.3, 4.0, 64);
        assert!(verify_score_identity(&prior, 0.3, &grid).unwrap() < 1e-8);
        assert!(score_identity_deviation(&prior, 0.3, 0.6, &grid).unwrap() > 0.1);
        let single = GaussianMixture::gaussian(vec![0.5], 2.0).unwrap();
        assert!(verify_score_identity(&single, 1.0, &grid).unwrap() < 1e-12);
    }
}
