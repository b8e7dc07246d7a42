use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simplex::SimplexVec;

fn check_alpha(alpha: f64, n: usize, c: usize) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if n < 2 {
        return Err(Error::Domain(format!("need at least 2 classes, got {n}")));
    }
    if c >= n {
        return Err(Error::Domain(format!("class {c} out of range for {n} classes")));
    }
    Ok(())
}

/// Keeps the true class with probability `α` and spreads the rest evenly.
pub fn qy_uniform(alpha: f64, n: usize, c: usize) -> Result<SimplexVec> {
    check_alpha(alpha, n, c)?;
    let mut q = vec![(1.0 - alpha) / (n - 1) as f64; n];
    q[c] = alpha;
    SimplexVec::new(q)
}

/// Keeps the true class with probability `α`, otherwise moves to `(c + 1) mod n`.
pub fn qy_biased(alpha: f64, n: usize, c: usize) -> Result<SimplexVec> {
    check_alpha(alpha, n, c)?;
    let mut q = vec![0.0; n];
    q[c] = alpha;
    q[(c + 1) % n] = 1.0 - alpha;
    SimplexVec::new(q)
}

/// Shrinks a reference classifier's true-class probability by `β` and
/// rescales its other classes to fill the remaining mass:
/// `q_c = β M_c`, `q_i = (1 − β M_c) M_i / Σ_{j≠c} M_j`.
///
/// The off-class total is summed directly instead of taken as `1 − M_c`, so
/// confident references whose `M_c` rounds to 1 still work as long as some
/// other class has positive mass.
pub fn qy_generated(beta: f64, reference: &SimplexVec, c: usize) -> Result<SimplexVec> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::Domain(format!("beta must lie in (0, 1), got {beta}")));
    }
    let m = reference.as_slice();
    if c >= m.len() {
        return Err(Error::Domain(format!("class {c} out of range for {} classes", m.len())));
    }
    let off: f64 = m.iter().enumerate().filter(|(i, _)| *i != c).map(|(_, v)| v).sum();
    if !(off > 0.0) {
        return Err(Error::Domain(format!(
            "reference puts all mass on class {c}; the generated noise is undefined"
        )));
    }
    let keep = beta * m[c];
    let spread = (1.0 - keep) / off;
    let q: Vec<f64> = m
        .iter()
        .enumerate()
        .map(|(i, v)| if i == c { keep } else { spread * v })
        .collect();
    SimplexVec::new(q)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    Uniform,
    Biased,
    Generated,
}

impl NoiseKind {
    pub fn name(self) -> &'static str {
        match self {
            NoiseKind::Uniform => "uniform",
            NoiseKind::Biased => "biased",
            NoiseKind::Generated => "generated",
        }
    }
}

/// Label-noise model. `level` is `α` for uniform and biased noise and `β`
/// for generated noise.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub level: f64,
    pub n_classes: usize,
}

impl NoiseSpec {
    pub fn uniform(alpha: f64, n_classes: usize) -> Self {
        Self { kind: NoiseKind::Uniform, level: alpha, n_classes }
    }

    pub fn biased(alpha: f64, n_classes: usize) -> Self {
        Self { kind: NoiseKind::Biased, level: alpha, n_classes }
    }

    pub fn generated(beta: f64, n_classes: usize) -> Self {
        Self { kind: NoiseKind::Generated, level: beta, n_classes }
    }

    /// `q_y` for an item of true class `c`. Generated noise needs the
    /// reference classifier's output at that item.
    pub fn qy(&self, c: usize, reference: Option<&SimplexVec>) -> Result<SimplexVec> {
        match self.kind {
            NoiseKind::Uniform => qy_uniform(self.level, self.n_classes, c),
            NoiseKind::Biased => qy_biased(self.level, self.n_classes, c),
            NoiseKind::Generated => {
                let m = reference.ok_or_else(|| {
                    Error::Domain("generated noise needs reference classifier outputs".into())
                })?;
                if m.len() != self.n_classes {
                    return Err(Error::Domain(format!(
                        "reference has {} classes, spec has {}",
                        m.len(),
                        self.n_classes
                    )));
                }
                qy_generated(self.level, m, c)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_table_value() {
        let q = qy_uniform(0.8913, 10, 3).unwrap();
        assert_eq!(q.as_slice()[3], 0.8913);
        assert!((q.as_slice()[0] - 0.012077777777777778).abs() < 1e-15);
        let q = qy_uniform(0.999, 10, 0).unwrap();
        assert!((q.as_slice()[5] - 0.001 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn biased_wraps_around() {
        let q = qy_biased(0.4, 10, 9).unwrap();
        assert_eq!(q.as_slice()[9], 0.4);
        assert_eq!(q.as_slice()[0], 0.6);
        assert_eq!(q.argmax(), 0);
        assert_eq!(qy_biased(0.6, 10, 9).unwrap().argmax(), 9);
        // tie: the lower index wins
        assert_eq!(qy_biased(0.5, 10, 3).unwrap().argmax(), 3);
        assert_eq!(qy_biased(0.5, 10, 9).unwrap().argmax(), 0);
    }

    #[test]
    fn generated_direct_evaluation() {
        let m = SimplexVec::new(vec![0.6, 0.3, 0.1]).unwrap();
        let q = qy_generated(0.5, &m, 0).unwrap();
        let want = [0.30, 0.525, 0.175];
        for (a, b) in q.as_slice().iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn generated_near_one_recovers_reference() {
        let m = SimplexVec::new(vec![0.6, 0.3, 0.1]).unwrap();
        let q = qy_generated(1.0 - 1e-12, &m, 1).unwrap();
        for (a, b) in q.as_slice().iter().zip(m.as_slice()) {
            assert!((a - b).abs() < 1e-11);
        }
    }

    #[test]
    fn generated_rejects_certain_reference() {
        let m = SimplexVec::one_hot(3, 2);
        assert!(qy_generated(0.5, &m, 2).is_err());
        // rounding M_c to 1 is fine while other classes keep mass
        let m = SimplexVec::new(vec![1.0, 1e-20, 0.0]).unwrap();
        let q = qy_generated(0.5, &m, 0).unwrap();
        assert_eq!(q.as_slice(), &[0.5, 0.5, 0.0]);
    }

    #[test]
    fn range_errors() {
        assert!(qy_uniform(1.0, 10, 0).is_err());
        assert!(qy_uniform(0.5, 1, 0).is_err());
        assert!(qy_biased(0.5, 10, 10).is_err());
        assert!(NoiseSpec::generated(0.5, 3).qy(0, None).is_err());
    }
}
