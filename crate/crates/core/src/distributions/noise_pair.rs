use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{Seeder, Stream};

/// One clean signal with two independently corrupted copies:
/// `input = clean + n1`, `target = clean + n2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoisePair {
    pub clean: Vec<f64>,
    pub input: Vec<f64>,
    pub target: Vec<f64>,
}

/// Draws `n` pairs. The clean signal, `n1` and `n2` come from three separate
/// streams keyed by item index, so the two noises are independent and each
/// item is reproducible on its own. Both noises are zero-mean Gaussians.
pub fn make_noise2noise_pairs<F>(
    mut prior: F,
    sigma_input: f64,
    sigma_target: f64,
    seeder: &Seeder,
    n: usize,
) -> Result<Vec<NoisePair>>
where
    F: FnMut(&mut Stream) -> Vec<f64>,
{
    if !(sigma_input >= 0.0 && sigma_target >= 0.0) {
        return Err(Error::Domain("noise scales must be >= 0".into()));
    }
    Ok((0..n as u64)
        .map(|i| {
            let clean = prior(&mut seeder.stream("n2n.clean", i));
            let mut r1 = seeder.stream("n2n.input-noise", i);
            let mut r2 = seeder.stream("n2n.target-noise", i);
            let input = clean
                .iter()
                .map(|s| s + sigma_input * r1.sample::<f64, _>(StandardNormal))
                .collect();
            let target = clean
                .iter()
                .map(|s| {
                    if sigma_target == 0.0 {
                        *s
                    } else {
                        s + sigma_target * r2.sample::<f64, _>(StandardNormal)
                    }
                })
                .collect();
            NoisePair {
                clean,
                input,
                target,
            }
        })
        .collect())
}
