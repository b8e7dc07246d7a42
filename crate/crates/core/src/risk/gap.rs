use rand::Rng;
use serde::{Deserialize, Serialize};

use super::label::LabelMap;
use super::loss::LossFn;
use super::zstar::zstar_closed_form;
use crate::distributions::DiscreteJoint;
use crate::error::{Error, Result};
use crate::rng::Stream;

/// Exact comparison of the z*-target and g-target L2 objectives over a set
/// of probe functions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    /// `E_y ‖f(y) − z*(y)‖²` per probe.
    pub j_zstar: Vec<f64>,
    /// `E_{x,y} ‖f(y) − g(x, y)‖²` per probe.
    pub j_g: Vec<f64>,
    pub differences: Vec<f64>,
    pub c_emp: f64,
    /// `E_y ‖E[g | y]‖²`
    pub c1: f64,
    /// `E_{x,y} ‖g‖²`
    pub c2: f64,
    pub c_theory: f64,
    /// `max_k |difference_k − c_emp|`
    pub max_deviation: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

fn sq_norm(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum()
}

/// Evaluates both objectives for every probe by enumerating the joint.
/// `probes[k][i]` is probe `k`'s output at `y_i`.
pub fn theorem2_gap_check(
    loss: LossFn,
    joint: &DiscreteJoint,
    g: &LabelMap,
    probes: &[Vec<Vec<f64>>],
) -> Result<GapReport> {
    if loss != LossFn::L2 {
        return Err(Error::Unsupported("the constant-gap identity holds for L2 only".into()));
    }
    if probes.len() < 2 {
        return Err(Error::Domain("gap check needs at least two probes".into()));
    }
    if let Some(bad) = probes.iter().position(|p| p.len() != joint.n_y()) {
        return Err(Error::Domain(format!("probe {bad} does not cover every y")));
    }
    let mut zstar = Vec::with_capacity(joint.n_y());
    let mut labels = Vec::with_capacity(joint.n_y());
    let (mut c1, mut c2) = (0.0, 0.0);
    for (i, y) in joint.y_support().iter().enumerate() {
        let cond = joint.conditional(i)?;
        let z = zstar_closed_form(LossFn::L2, &cond, joint.x_support(), g, y)?;
        c1 += joint.marginal_y(i) * sq_norm(&z);
        let row: Vec<Vec<f64>> = joint
            .x_support()
            .iter()
            .map(|x| g.apply(x, y))
            .collect::<Result<_>>()?;
        for (j, label) in row.iter().enumerate() {
            c2 += joint.prob(i, j) * sq_norm(label);
        }
        zstar.push(z);
        labels.push(row);
    }
    let mut j_zstar = Vec::with_capacity(probes.len());
    let mut j_g = Vec::with_capacity(probes.len());
    for probe in probes {
        let (mut jz, mut jg) = (0.0, 0.0);
        for i in 0..joint.n_y() {
            if probe[i].len() != zstar[i].len() {
                return Err(Error::ShapeMismatch {
                    op: "theorem2_gap_check",
                    lhs: vec![probe[i].len()],
                    rhs: vec![zstar[i].len()],
                });
            }
            jz += joint.marginal_y(i) * sq_dist(&probe[i], &zstar[i]);
            for (j, label) in labels[i].iter().enumerate() {
                jg += joint.prob(i, j) * sq_dist(&probe[i], label);
            }
        }
        j_zstar.push(jz);
        j_g.push(jg);
    }
    let differences: Vec<f64> = j_g.iter().zip(&j_zstar).map(|(a, b)| a - b).collect();
    let c_emp = differences.iter().sum::<f64>() / differences.len() as f64;
    let max_deviation = differences
        .iter()
        .map(|d| (d - c_emp).abs())
        .fold(0.0, f64::max);
    Ok(GapReport {
        j_zstar,
        j_g,
        differences,
        c_emp,
        c1,
        c2,
        c_theory: c2 - c1,
        max_deviation,
    })
}

/// `k` random probe tables with entries uniform in `[-scale, scale]`.
pub fn random_probes(n_y: usize, dim: usize, k: usize, scale: f64, rng: &mut Stream) -> Vec<Vec<Vec<f64>>> {
    (0..k)
        .map(|_| {
            (0..n_y)
                .map(|_| (0..dim).map(|_| rng.random_range(-scale..scale)).collect())
                .collect()
        })
        .collect()
}
