use serde::{Deserialize, Serialize};

use super::label::LabelMap;
use super::loss::{LossFn, LossValue};
use crate::error::{Error, Result};
use crate::simplex::SimplexVec;

/// Weighted labels `(p(x_j | y), g(x_j, y))` with zero-probability outcomes
/// dropped, so a `+∞` loss on an impossible outcome never counts.
fn weighted_labels(
    cond: &SimplexVec,
    x_support: &[Vec<f64>],
    g: &LabelMap,
    y: &[f64],
) -> Result<Vec<(f64, Vec<f64>)>> {
    if cond.len() != x_support.len() {
        return Err(Error::ShapeMismatch {
            op: "conditional_risk",
            lhs: vec![cond.len()],
            rhs: vec![x_support.len()],
        });
    }
    cond.as_slice()
        .iter()
        .zip(x_support)
        .filter(|(p, _)| **p > 0.0)
        .map(|(p, x)| Ok((*p, g.apply(x, y)?)))
        .collect()
}

fn risk_of(loss: LossFn, z: &[f64], labels: &[(f64, Vec<f64>)]) -> Result<LossValue> {
    let mut total = 0.0;
    for (p, label) in labels {
        match loss.eval(z, label)? {
            LossValue::Finite(v) => total += p * v,
            LossValue::Infinite => return Ok(LossValue::Infinite),
        }
    }
    Ok(LossValue::Finite(total))
}

/// `Σ_j p(x_j | y) · L(z, g(x_j, y))`, evaluated exactly.
pub fn conditional_risk(
    loss: LossFn,
    z: &[f64],
    cond: &SimplexVec,
    x_support: &[Vec<f64>],
    g: &LabelMap,
    y: &[f64],
) -> Result<LossValue> {
    risk_of(loss, z, &weighted_labels(cond, x_support, g, y)?)
}

fn is_one_hot(v: &[f64]) -> bool {
    v.iter().filter(|c| **c == 1.0).count() == 1 && v.iter().all(|c| *c == 0.0 || *c == 1.0)
}

/// Closed-form conditional-risk minimizer. L2 gives the conditional mean of
/// `g`; cross-entropy with one-hot outcomes and `g = identity` gives the
/// outcome distribution itself.
pub fn zstar_closed_form(
    loss: LossFn,
    cond: &SimplexVec,
    x_support: &[Vec<f64>],
    g: &LabelMap,
    y: &[f64],
) -> Result<Vec<f64>> {
    if loss == LossFn::CrossEntropy
        && !(matches!(g, LabelMap::IdentityX) && x_support.iter().all(|x| is_one_hot(x)))
    {
        return Err(Error::Unsupported(
            "cross-entropy closed form needs identity labels on one-hot outcomes; use zstar_bruteforce".into(),
        ));
    }
    let labels = weighted_labels(cond, x_support, g, y)?;
    let dim = labels.first().map_or(0, |(_, l)| l.len());
    let mut out = vec![0.0; dim];
    for (p, label) in &labels {
        for (o, v) in out.iter_mut().zip(label) {
            *o += p * v;
        }
    }
    Ok(out)
}

/// Candidate set for brute-force minimization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GridSpec {
    /// Axis-aligned lattice `lower + k·step` up to `upper`, at most 3 axes.
    Box {
        lower: Vec<f64>,
        upper: Vec<f64>,
        step: f64,
    },
    /// Barycentric lattice on the simplex; `1/step` must be an integer.
    Simplex { dim: usize, step: f64 },
}

const MAX_BOX_DIM: usize = 3;
const MAX_SIMPLEX_DIM: usize = 4;

impl GridSpec {
    /// Grid points in lexicographic index order.
    pub fn points(&self) -> Result<Vec<Vec<f64>>> {
        match self {
            GridSpec::Box { lower, upper, step } => {
                if lower.len() != upper.len() {
                    return Err(Error::Domain("grid bounds differ in dimension".into()));
                }
                if lower.len() > MAX_BOX_DIM {
                    return Err(Error::Unsupported(format!(
                        "box grids support at most {MAX_BOX_DIM} axes"
                    )));
                }
                if lower.is_empty() || !(*step > 0.0) || lower.iter().zip(upper).any(|(l, u)| u < l) {
                    return Err(Error::EmptyGrid);
                }
                let counts: Vec<usize> = lower
                    .iter()
                    .zip(upper)
                    .map(|(l, u)| ((u - l) / step + 1e-9).floor() as usize + 1)
                    .collect();
                let mut out = Vec::with_capacity(counts.iter().product());
                let mut idx = vec![0usize; counts.len()];
                loop {
                    out.push(idx.iter().zip(lower).map(|(k, l)| l + *k as f64 * step).collect());
                    let mut axis = counts.len();
                    loop {
                        if axis == 0 {
                            return Ok(out);
                        }
                        axis -= 1;
                        idx[axis] += 1;
                        if idx[axis] < counts[axis] {
                            break;
                        }
                        idx[axis] = 0;
                    }
                }
            }
            GridSpec::Simplex { dim, step } => {
                if *dim == 0 || !(*step > 0.0) {
                    return Err(Error::EmptyGrid);
                }
                if *dim > MAX_SIMPLEX_DIM {
                    return Err(Error::Unsupported(format!(
                        "simplex grids support at most {MAX_SIMPLEX_DIM} components"
                    )));
                }
                let k = (1.0 / step).round();
                if (k * step - 1.0).abs() > 1e-9 || k < 1.0 {
                    return Err(Error::Domain(format!("1/step must be an integer, got {}", 1.0 / step)));
                }
                let k = k as usize;
                let mut out = Vec::new();
                let mut counts = vec![0usize; *dim];
                compositions(&mut counts, 0, k, &mut |c| {
                    out.push(c.iter().map(|n| *n as f64 / k as f64).collect());
                });
                Ok(out)
            }
        }
    }
}

/// Every `counts` with `Σ counts[pos..] = remaining`, in lexicographic order.
fn compositions(counts: &mut [usize], pos: usize, remaining: usize, emit: &mut dyn FnMut(&[usize])) {
    if pos + 1 == counts.len() {
        counts[pos] = remaining;
        emit(counts);
        return;
    }
    for c in 0..=remaining {
        counts[pos] = c;
        compositions(counts, pos + 1, remaining - c, emit);
    }
}

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Golden-section search of `f` on `[a, b]`, returning the best point seen.
fn golden_section(f: &mut dyn FnMut(f64) -> f64, mut a: f64, mut b: f64, iterations: usize) -> (f64, f64) {
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..iterations {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    if fc <= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Grid minimizer of the conditional risk, then one golden-section pass per
/// axis within one grid step. Ties on the grid go to the lowest
/// lexicographic index; the refinement only moves on strict improvement.
/// Simplex axes move mass against the last component.
pub fn zstar_bruteforce(
    loss: LossFn,
    cond: &SimplexVec,
    x_support: &[Vec<f64>],
    g: &LabelMap,
    y: &[f64],
    grid: &GridSpec,
) -> Result<Vec<f64>> {
    let labels = weighted_labels(cond, x_support, g, y)?;
    let points = grid.points()?;
    let mut best: Option<(Vec<f64>, f64)> = None;
    for p in points {
        let r = risk_of(loss, &p, &labels)?.to_f64();
        if best.as_ref().is_none_or(|(_, b)| r < *b) {
            best = Some((p, r));
        }
    }
    let (mut z, mut risk) = best.ok_or(Error::EmptyGrid)?;
    if !risk.is_finite() {
        return Ok(z);
    }
    let eval = |z: &[f64]| risk_of(loss, z, &labels).map(LossValue::to_f64);
    match grid {
        GridSpec::Box { lower, upper, step } => {
            for axis in 0..z.len() {
                let lo = (z[axis] - step).max(lower[axis]);
                let hi = (z[axis] + step).min(upper[axis]);
                let mut trial = z.clone();
                let mut err = None;
                let (t, r) = golden_section(
                    &mut |t| {
                        trial[axis] = t;
                        eval(&trial).unwrap_or_else(|e| {
                            err = Some(e);
                            f64::INFINITY
                        })
                    },
                    lo,
                    hi,
                    80,
                );
                if let Some(e) = err {
                    return Err(e);
                }
                if r < risk {
                    z[axis] = t;
                    risk = r;
                }
            }
        }
        GridSpec::Simplex { step, .. } => {
            let last = z.len() - 1;
            for axis in 0..last {
                let lo = (-step).max(-z[axis]);
                let hi = step.min(z[last]);
                if !(hi > lo) {
                    continue;
                }
                let base = z.clone();
                let mut trial = z.clone();
                let mut err = None;
                let (t, r) = golden_section(
                    &mut |t| {
                        trial[axis] = base[axis] + t;
                        trial[last] = base[last] - t;
                        eval(&trial).unwrap_or_else(|e| {
                            err = Some(e);
                            f64::INFINITY
                        })
                    },
                    lo,
                    hi,
                    80,
                );
                if let Some(e) = err {
                    return Err(e);
                }
                if r < risk {
                    z[axis] = base[axis] + t;
                    z[last] = base[last] - t;
                    risk = r;
                }
            }
        }
    }
    Ok(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::DiscreteJoint;
    use crate::rng::Seeder;
    use rand::Rng;

    fn bernoulli(p: f64) -> (SimplexVec, Vec<Vec<f64>>) {
        (SimplexVec::new(vec![1.0 - p, p]).unwrap(), vec![vec![0.0], vec![1.0]])
    }

    fn one_hots(n: usize) -> Vec<Vec<f64>> {
        (0..n).map(|i| SimplexVec::one_hot(n, i).into()).collect()
    }

    #[test]
    fn bernoulli_half_risk_is_its_variance() {
        let (cond, xs) = bernoulli(0.5);
        let r = conditional_risk(LossFn::L2, &[0.5], &cond, &xs, &LabelMap::IdentityX, &[0.0]).unwrap();
        assert_eq!(r, LossValue::Finite(0.25));
    }

    #[test]
    fn ce_risk_at_q_is_entropy() {
        let q = SimplexVec::new(vec![0.2, 0.3, 0.5]).unwrap();
        let r = conditional_risk(LossFn::CrossEntropy, q.as_slice(), &q, &one_hots(3), &LabelMap::IdentityX, &[0.0])
            .unwrap()
            .to_f64();
        assert!((r - q.entropy()).abs() < 1e-15);
    }

    #[test]
    fn risk_matches_double_loop() {
        let mut rng = Seeder::new(4).stream("risk", 0);
        let joint = DiscreteJoint::random(3, 6, 2, &mut rng).unwrap();
        let g = LabelMap::ScoreLabel { noise_var: 0.3 };
        for i in 0..3 {
            let y = vec![joint.y_support()[i][0], 0.5];
            let z: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..1.0)).collect();
            let cond = joint.conditional(i).unwrap();
            let got = conditional_risk(LossFn::L2, &z, &cond, joint.x_support(), &g, &y).unwrap().to_f64();
            let mut want = 0.0;
            for j in 0..joint.n_x() {
                let mut sq = 0.0;
                for k in 0..2 {
                    let label = (joint.x_support()[j][k] - y[k]) / 0.3;
                    sq += (z[k] - label) * (z[k] - label);
                }
                want += joint.prob(i, j) / joint.marginal_y(i) * sq;
            }
            assert!((got - want).abs() < 1e-12 * want.max(1.0));
        }
    }

    #[test]
    fn ce_risk_short_circuits_on_zero_prediction() {
        let q = SimplexVec::new(vec![0.5, 0.5]).unwrap();
        let r = conditional_risk(LossFn::CrossEntropy, &[1.0, 0.0], &q, &one_hots(2), &LabelMap::IdentityX, &[0.0]).unwrap();
        assert_eq!(r, LossValue::Infinite);
    }

    #[test]
    fn closed_forms() {
        let (cond, xs) = bernoulli(0.7);
        let z = zstar_closed_form(LossFn::L2, &cond, &xs, &LabelMap::IdentityX, &[0.0]).unwrap();
        assert!((z[0] - 0.7).abs() < 1e-15);
        let q = SimplexVec::new(vec![0.7, 0.3]).unwrap();
        let z = zstar_closed_form(LossFn::CrossEntropy, &q, &one_hots(2), &LabelMap::IdentityX, &[0.0]).unwrap();
        assert_eq!(z, vec![0.7, 0.3]);
    }

    #[test]
    fn ce_closed_form_rejects_non_one_hot_outcomes() {
        let (cond, xs) = bernoulli(0.7);
        let err = zstar_closed_form(LossFn::CrossEntropy, &cond, &xs, &LabelMap::IdentityX, &[0.0]).unwrap_err();
        assert!(matches!(err, Error::Unsupported(_)));
    }

    #[test]
    fn bruteforce_l2_bernoulli() {
        let (cond, xs) = bernoulli(0.7);
        let grid = GridSpec::Box { lower: vec![0.0], upper: vec![1.0], step: 1e-3 };
        let z = zstar_bruteforce(LossFn::L2, &cond, &xs, &LabelMap::IdentityX, &[0.0], &grid).unwrap();
        assert!((z[0] - 0.7).abs() < 1e-3);
    }

    #[test]
    fn bruteforce_ce_simplex() {
        let q = SimplexVec::new(vec![0.2, 0.3, 0.5]).unwrap();
        let grid = GridSpec::Simplex { dim: 3, step: 0.01 };
        let z = zstar_bruteforce(LossFn::CrossEntropy, &q, &one_hots(3), &LabelMap::IdentityX, &[0.0], &grid).unwrap();
        for (a, b) in z.iter().zip(q.as_slice()) {
            assert!((a - b).abs() <= 0.01);
        }
    }

    #[test]
    fn bruteforce_refines_off_lattice_optimum() {
        let q = SimplexVec::new(vec![0.123, 0.877]).unwrap();
        let grid = GridSpec::Simplex { dim: 2, step: 0.1 };
        let z = zstar_bruteforce(LossFn::CrossEntropy, &q, &one_hots(2), &LabelMap::IdentityX, &[0.0], &grid).unwrap();
        assert!((z[0] - 0.123).abs() < 1e-6, "{z:?}");
    }

    #[test]
    fn deterministic_mapping_gives_label_exactly() {
        // x = h(y) with h(y) = 2y: the conditional is a point mass
        let y = [0.3];
        let xs = vec![vec![-1.0], vec![0.6], vec![5.0]];
        let cond = SimplexVec::one_hot(3, 1);
        let g = LabelMap::ScoreLabel { noise_var: 0.5 };
        let z = zstar_closed_form(LossFn::L2, &cond, &xs, &g, &y).unwrap();
        assert_eq!(z, g.apply(&[0.6], &y).unwrap());
        let grid = GridSpec::Box { lower: vec![-2.0], upper: vec![2.0], step: 0.01 };
        let zb = zstar_bruteforce(LossFn::L2, &cond, &xs, &g, &y, &grid).unwrap();
        assert!((zb[0] - z[0]).abs() < 1e-6);
    }

    #[test]
    fn grid_errors() {
        assert!(matches!(
            GridSpec::Box { lower: vec![1.0], upper: vec![0.0], step: 0.1 }.points(),
            Err(Error::EmptyGrid)
        ));
        assert!(matches!(
            GridSpec::Box { lower: vec![0.0; 4], upper: vec![1.0; 4], step: 0.5 }.points(),
            Err(Error::Unsupported(_))
        ));
        assert_eq!(GridSpec::Simplex { dim: 3, step: 0.01 }.points().unwrap().len(), 5151);
    }

    #[test]
    fn symmetric_grid_tie_refines_to_center() {
        // 0.4 and 0.6 tie on the grid; the refinement from 0.4 reaches 0.5
        let (cond, xs) = bernoulli(0.5);
        let grid = GridSpec::Box { lower: vec![0.4], upper: vec![0.6], step: 0.2 };
        assert_eq!(grid.points().unwrap().len(), 2);
        let z = zstar_bruteforce(LossFn::L2, &cond, &xs, &LabelMap::IdentityX, &[0.0], &grid).unwrap();
        assert!((z[0] - 0.5).abs() < 1e-6);
    }
}
