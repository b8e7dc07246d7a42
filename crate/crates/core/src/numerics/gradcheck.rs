//! Central finite-difference checks of [`Graph::backward`].

use std::collections::BTreeMap;

use rand::Rng;

use super::graph::{Graph, NodeId, Op};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::rng::{Seeder, Stream};

/// Relative error `|a − n| / max(1, |a|, |n|)`; gradients below one in
/// magnitude are compared absolutely.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / 1f64.max(analytic.abs()).max(numeric.abs())
}

/// Largest relative error between the backward pass and central
/// differences with step `h`, over every entry of every parameter.
pub fn finite_difference_check(graph: &Graph, loss: NodeId, h: f64) -> Result<f64> {
    let grads = graph.backward(loss)?;
    let mut worst = 0.0f64;
    for id in graph.node_ids() {
        if *graph.op(id) != Op::Param {
            continue;
        }
        let base = graph.value(id).clone();
        let analytic = grads.get(id);
        for k in 0..base.len() {
            let eval = |delta: f64| -> Result<f64> {
                let mut g = graph.clone();
                let mut t = base.clone();
                t.data_mut()[k] += delta;
                g.set_leaf(id, t)?;
                g.replay()?.value(loss).item()
            };
            let numeric = (eval(h)? - eval(-h)?) / (2.0 * h);
            worst = worst.max(relative_error(analytic.data()[k], numeric));
        }
    }
    Ok(worst)
}

fn uniform(shape: &[usize], rng: &mut Stream) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).expect("shape matches")
}

/// Random graph using every operation kind once, with parameters in
/// `[-1, 1]`, returning the scalar loss node.
pub fn random_graph(rng: &mut Stream) -> Result<(Graph, NodeId)> {
    let mut g = Graph::new();
    let n = rng.random_range(1..=3);
    let side = 6;
    let stride = rng.random_range(1..=2);
    let channels = rng.random_range(1..=3);
    let hidden = rng.random_range(2..=4);

    let x = g.input(uniform(&[n, 1, side, side], rng));
    let w = g.param(uniform(&[channels, 1, 3, 3], rng));
    let b = g.param(uniform(&[channels], rng));
    let conv = g.conv2d(x, w, b, stride)?;
    let act = g.relu(conv)?;
    let pooled = g.max_pool2d(act, 2)?;
    let flat_len = g.value(pooled).len() / n;
    let flat = g.reshape(pooled, vec![n, flat_len])?;

    let w1 = g.param(uniform(&[flat_len, hidden], rng));
    let b1 = g.param(uniform(&[hidden], rng));
    let z = g.matmul(flat, w1)?;
    let h1 = g.add_row(z, b1)?;
    let a = g.param(uniform(&[n, hidden], rng));
    let h2 = g.add(h1, a)?;
    let half = g.scale(a, rng.random_range(-2.0..2.0));
    let h3 = g.sub(h2, half)?;
    let h4 = g.mul(h3, h1)?;
    let cat = g.concat(&[h4, h1], 1)?;

    let target = g.input(uniform(&[n, 2 * hidden], rng));
    let ls = g.log_softmax(cat)?;
    let weighted = g.mul(ls, target)?;
    let ce = g.sum(weighted);
    let sm = g.softmax(cat)?;
    let lg = g.log(sm)?;
    let lg_sum = g.sum(lg);
    let lg_term = g.scale(lg_sum, 0.1);
    let sq = g.square(h4)?;
    let sq_mean = g.mean(sq);
    let partial = g.add(ce, lg_term)?;
    let loss = g.add(partial, sq_mean)?;
    Ok((g, loss))
}

/// Smallest distance of any ReLU input from zero, and of any positive
/// max-pool window maximum from its runner-up.
pub fn kink_margin(graph: &Graph) -> f64 {
    let mut margin = f64::INFINITY;
    for id in graph.node_ids() {
        match graph.op(id) {
            Op::Relu(a) => {
                for v in graph.value(*a).data() {
                    margin = margin.min(v.abs());
                }
            }
            Op::MaxPool2d(a, k) => {
                let t = graph.value(*a);
                let s = t.shape();
                let (h, w) = (s[2], s[3]);
                for plane in t.data().chunks(h * w) {
                    for by in 0..h / k {
                        for bx in 0..w / k {
                            let mut vals: Vec<f64> = (0..k * k)
                                .map(|i| plane[(by * k + i / k) * w + bx * k + i % k])
                                .collect();
                            vals.sort_by(|p, q| q.total_cmp(p));
                            if vals[0] > 0.0 {
                                margin = margin.min(vals[0] - vals[1]);
                            }
                        }
                    }
                }
            }
            _ => {}
        }
    }
    margin
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub graphs: usize,
    pub max_relative_error: f64,
    /// Number of nodes of each operation kind across all checked graphs.
    pub op_counts: BTreeMap<&'static str, usize>,
}

pub const KINK_MARGIN: f64 = 1e-4;

/// Builds `n` random graphs from `seeder` and checks each one. Draws whose
/// ReLU or max-pool inputs sit within [`KINK_MARGIN`] of a kink are skipped
/// (the derivative is undefined there) and replaced by the next draw.
pub fn check_random_graphs(n: usize, h: f64, seeder: &Seeder) -> Result<GradCheckReport> {
    let mut report = GradCheckReport {
        graphs: 0,
        max_relative_error: 0.0,
        op_counts: BTreeMap::new(),
    };
    let mut draw = 0u64;
    while report.graphs < n {
        if draw > 100 * n as u64 + 100 {
            return Err(Error::Domain("too many random graphs landed near a kink".into()));
        }
        let (graph, loss) = random_graph(&mut seeder.stream("gradcheck", draw))?;
        draw += 1;
        if kink_margin(&graph) < KINK_MARGIN {
            continue;
        }
        let err = finite_difference_check(&graph, loss, h)?;
        report.max_relative_error = report.max_relative_error.max(err);
        for id in graph.node_ids() {
            *report.op_counts.entry(graph.op(id).kind()).or_default() += 1;
        }
        report.graphs += 1;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn a_few_graphs_pass() {
        let r = check_random_graphs(5, 1e-5, &Seeder::new(1)).unwrap();
        assert_eq!(r.graphs, 5);
        assert!(r.max_relative_error < 1e-5, "{}", r.max_relative_error);
        assert_eq!(r.op_counts.len(), 19);
    }

    #[test]
    fn wrong_gradient_is_detected() {
        // relu'(0) is taken as 0, but the one-sided slopes are 0 and 1
        let mut g = Graph::new();
        let p = g.param(Tensor::vector(vec![0.0]));
        let r = g.relu(p).unwrap();
        let loss = g.sum(r);
        assert!(kink_margin(&g) < KINK_MARGIN);
        assert!(finite_difference_check(&g, loss, 1e-5).unwrap() > 0.1);
    }
}
