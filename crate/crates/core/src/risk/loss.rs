use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Stream;
use crate::simplex::SIMPLEX_TOL;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossFn {
    /// `‖a − b‖²`
    L2,
    /// `−Σ b_i ln a_i`: `a` is the prediction, `b` the label. Defined on the
    /// simplex only.
    CrossEntropy,
}

/// Loss value with an explicit `+∞` tag so aggregation can stop early
/// instead of carrying IEEE infinities around.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LossValue {
    Finite(f64),
    Infinite,
}

impl LossValue {
    pub fn is_finite(self) -> bool {
        matches!(self, LossValue::Finite(_))
    }

    /// Collapses to `f64`, mapping the tag to `f64::INFINITY`.
    pub fn to_f64(self) -> f64 {
        match self {
            LossValue::Finite(v) => v,
            LossValue::Infinite => f64::INFINITY,
        }
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            LossValue::Finite(v) => Some(v),
            LossValue::Infinite => None,
        }
    }
}

impl PartialOrd for LossValue {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        self.to_f64().partial_cmp(&other.to_f64())
    }
}

impl fmt::Display for LossValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LossValue::Finite(v) => write!(f, "{v}"),
            LossValue::Infinite => f.write_str("+inf"),
        }
    }
}

pub(crate) fn on_simplex(v: &[f64]) -> bool {
    v.iter().all(|c| c.is_finite() && *c >= 0.0)
        && (v.iter().sum::<f64>() - 1.0).abs() <= SIMPLEX_TOL * (v.len() as f64).max(1.0)
}

impl LossFn {
    pub fn eval(self, a: &[f64], b: &[f64]) -> Result<LossValue> {
        if a.len() != b.len() {
            return Err(Error::ShapeMismatch {
                op: "loss_eval",
                lhs: vec![a.len()],
                rhs: vec![b.len()],
            });
        }
        match self {
            LossFn::L2 => Ok(LossValue::Finite(
                a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum(),
            )),
            LossFn::CrossEntropy => {
                if !on_simplex(a) || !on_simplex(b) {
                    return Ok(LossValue::Infinite);
                }
                let mut total = 0.0;
                for (p, q) in a.iter().zip(b) {
                    if *q == 0.0 {
                        continue;
                    }
                    if *p == 0.0 {
                        return Ok(LossValue::Infinite);
                    }
                    total -= q * p.ln();
                }
                Ok(LossValue::Finite(total))
            }
        }
    }
}

/// Where the hypothesis probe draws `(a, b)` from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ProbeDomain {
    /// Interior of the `n`-simplex (flat Dirichlet draws).
    Simplex(usize),
    /// `[-bound, bound]^dim`.
    Box { dim: usize, bound: f64 },
}

impl ProbeDomain {
    fn draw(self, rng: &mut Stream) -> Vec<f64> {
        match self {
            ProbeDomain::Simplex(n) => {
                let e: Vec<f64> = (0..n)
                    .map(|_| -(1.0 - rng.random::<f64>()).ln())
                    .collect();
                let total: f64 = e.iter().sum();
                let mut v: Vec<f64> = e.iter().map(|x| x / total).collect();
                let residue = 1.0 - v.iter().sum::<f64>();
                v[n - 1] += residue;
                v
            }
            ProbeDomain::Box { dim, bound } => {
                (0..dim).map(|_| rng.random_range(-bound..bound)).collect()
            }
        }
    }
}

/// Which of the two hypothesis inequalities failed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HypothesisSide {
    /// `L(a, b) ≥ L(a, a)`
    FirstArgument,
    /// `L(a, b) ≥ L(b, b)`
    SecondArgument,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub side: HypothesisSide,
    pub l_ab: f64,
    pub l_aa: f64,
    pub l_bb: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub probes: usize,
    /// Probes that satisfied `L(a, b) ≥ L(a, a)`.
    pub first_ok: usize,
    /// Probes that satisfied `L(a, b) ≥ L(b, b)`.
    pub second_ok: usize,
    pub counterexample: Option<Counterexample>,
}

impl HypothesisReport {
    pub fn passed(&self) -> bool {
        self.counterexample.is_none()
    }
}

/// Samples `n_probes` pairs and checks `L(a,b) ≥ L(a,a)` and
/// `L(a,b) ≥ L(b,b)` on each, keeping the first violation found. A slack of
/// `1e-12·(1 + |L(a,b)|)` absorbs rounding.
pub fn loss_hypothesis_probe<F>(
    loss: F,
    domain: ProbeDomain,
    rng: &mut Stream,
    n_probes: usize,
) -> HypothesisReport
where
    F: Fn(&[f64], &[f64]) -> f64,
{
    let mut report = HypothesisReport {
        probes: n_probes,
        first_ok: 0,
        second_ok: 0,
        counterexample: None,
    };
    for _ in 0..n_probes {
        let a = domain.draw(rng);
        let b = domain.draw(rng);
        let (l_ab, l_aa, l_bb) = (loss(&a, &b), loss(&a, &a), loss(&b, &b));
        let slack = 1e-12 * (1.0 + l_ab.abs());
        let first = l_ab + slack >= l_aa;
        let second = l_ab + slack >= l_bb;
        report.first_ok += first as usize;
        report.second_ok += second as usize;
        if report.counterexample.is_none() && !(first && second) {
            report.counterexample = Some(Counterexample {
                side: if first {
                    HypothesisSide::SecondArgument
                } else {
                    HypothesisSide::FirstArgument
                },
                a,
                b,
                l_ab,
                l_aa,
                l_bb,
            });
        }
    }
    report
}

/// Probe for one of the built-in losses on its natural domain.
pub fn probe_builtin(loss: LossFn, dim: usize, rng: &mut Stream, n_probes: usize) -> HypothesisReport {
    let domain = match loss {
        LossFn::L2 => ProbeDomain::Box { dim, bound: 3.0 },
        LossFn::CrossEntropy => ProbeDomain::Simplex(dim),
    };
    loss_hypothesis_probe(
        |a, b| loss.eval(a, b).map(LossValue::to_f64).unwrap_or(f64::NAN),
        domain,
        rng,
        n_probes,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Seeder;

    #[test]
    fn l2_self_loss_is_zero() {
        assert_eq!(LossFn::L2.eval(&[1.0, -2.0], &[1.0, -2.0]).unwrap(), LossValue::Finite(0.0));
    }

    #[test]
    fn ce_uniform_pair_is_ln2() {
        let v = LossFn::CrossEntropy.eval(&[0.5, 0.5], &[0.5, 0.5]).unwrap();
        assert!((v.to_f64() - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn ce_outside_simplex_is_tagged_infinite() {
        assert_eq!(LossFn::CrossEntropy.eval(&[0.6, 0.6], &[0.5, 0.5]).unwrap(), LossValue::Infinite);
        assert_eq!(LossFn::CrossEntropy.eval(&[1.0, 0.0], &[0.5, 0.5]).unwrap(), LossValue::Infinite);
        // zero label mass on a zero prediction is fine
        assert!(LossFn::CrossEntropy.eval(&[1.0, 0.0], &[1.0, 0.0]).unwrap().is_finite());
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        assert!(LossFn::L2.eval(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn expected_ce_against_sampled_outcomes_is_entropy() {
        let q = [0.1, 0.6, 0.3];
        let expected: f64 = (0..3)
            .map(|i| {
                let mut onehot = [0.0; 3];
                onehot[i] = 1.0;
                q[i] * LossFn::CrossEntropy.eval(&q, &onehot).unwrap().to_f64()
            })
            .sum();
        let entropy: f64 = -q.iter().map(|p| p * p.ln()).sum::<f64>();
        assert!((expected - entropy).abs() < 1e-15);
    }

    #[test]
    fn l2_passes_probe() {
        let r = probe_builtin(LossFn::L2, 3, &mut Seeder::new(1).stream("probe", 0), 2000);
        assert!(r.passed());
        assert_eq!(r.first_ok, 2000);
    }

    #[test]
    fn ce_satisfies_gibbs_side_but_not_first_argument_side() {
        let r = probe_builtin(LossFn::CrossEntropy, 3, &mut Seeder::new(1).stream("probe", 0), 2000);
        // Gibbs: CE(a, b) ≥ H(b) always
        assert_eq!(r.second_ok, 2000);
        // CE(a, b) ≥ H(a) fails e.g. for a = (0.4, 0.6), b = (0, 1)
        let cx = r.counterexample.expect("first-argument inequality has violations");
        assert_eq!(cx.side, HypothesisSide::FirstArgument);
        assert!(cx.l_ab < cx.l_aa);
        let explicit = LossFn::CrossEntropy.eval(&[0.4, 0.6], &[0.0, 1.0]).unwrap().to_f64();
        let h_a = LossFn::CrossEntropy.eval(&[0.4, 0.6], &[0.4, 0.6]).unwrap().to_f64();
        assert!(explicit < h_a);
    }

    #[test]
    fn negative_distance_fails_probe() {
        let broken = |a: &[f64], b: &[f64]| {
            -a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt()
        };
        let r = loss_hypothesis_probe(
            broken,
            ProbeDomain::Box { dim: 2, bound: 1.0 },
            &mut Seeder::new(2).stream("probe", 0),
            10,
        );
        assert!(!r.passed());
        let cx = r.counterexample.unwrap();
        assert!(cx.l_ab < cx.l_aa);
    }
}
