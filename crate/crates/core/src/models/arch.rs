use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Graph, NodeId, Tensor};
use crate::rng::Stream;

/// Output transform applied on top of the raw forward pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    Identity,
    /// Raw outputs are logits; predictions are their softmax.
    Softmax,
}

/// A parametric function `f(y; θ)` that records its forward pass on a
/// [`Graph`].
pub trait Model: Clone + Send + Sync {
    fn params(&self) -> &[Tensor];
    fn params_mut(&mut self) -> &mut [Tensor];
    /// Length of one flattened input row.
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn head(&self) -> Head;
    /// Raw outputs (logits for a softmax head) for an `[n, input_dim]` batch.
    fn forward(&self, graph: &mut Graph, input: NodeId, params: &[NodeId]) -> Result<NodeId>;
}

fn uniform_tensor(shape: &[usize], bound: f64, rng: &mut Stream) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape matches data")
}

/// Weight and bias pair drawn uniform in `±1/√fan_in`.
fn fan_in_layer(weight_shape: &[usize], fan_in: usize, bias_len: usize, rng: &mut Stream) -> [Tensor; 2] {
    let bound = 1.0 / (fan_in as f64).sqrt();
    [
        uniform_tensor(weight_shape, bound, rng),
        uniform_tensor(&[bias_len], bound, rng),
    ]
}

/// One free output vector per input point. Inputs are one-hot rows, so the
/// forward pass `onehot · table` selects a row and the family can realize
/// any function of a finite input set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableModel {
    head: Head,
    params: Vec<Tensor>,
}

impl TableModel {
    /// Zero-initialized table: zero outputs, or the uniform distribution
    /// under a softmax head.
    pub fn new(n_inputs: usize, dim: usize, head: Head) -> Self {
        Self {
            head,
            params: vec![Tensor::zeros(&[n_inputs, dim])],
        }
    }

    pub fn n_inputs(&self) -> usize {
        self.params[0].shape()[0]
    }

    pub fn table(&self) -> &Tensor {
        &self.params[0]
    }

    /// Prediction at input point `index`, head applied.
    pub fn output(&self, index: usize) -> Vec<f64> {
        let row = self.params[0].row(index);
        match self.head {
            Head::Identity => row.to_vec(),
            Head::Softmax => crate::numerics::softmax_rows(&Tensor::vector(row.to_vec())).into_data(),
        }
    }
}

impl Model for TableModel {
    fn params(&self) -> &[Tensor] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    fn input_dim(&self) -> usize {
        self.params[0].shape()[0]
    }

    fn output_dim(&self) -> usize {
        self.params[0].shape()[1]
    }

    fn head(&self) -> Head {
        self.head
    }

    fn forward(&self, graph: &mut Graph, input: NodeId, params: &[NodeId]) -> Result<NodeId> {
        graph.matmul(input, params[0])
    }
}

/// Fully connected ReLU network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    sizes: Vec<usize>,
    head: Head,
    /// `[W0, b0, W1, b1, ...]` with `W_l: [sizes[l], sizes[l+1]]`.
    params: Vec<Tensor>,
}

impl MlpModel {
    /// Weights and biases uniform in `±1/√fan_in`.
    pub fn new(sizes: &[usize], head: Head, rng: &mut Stream) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Domain(format!("invalid layer sizes {sizes:?}")));
        }
        let mut params = Vec::with_capacity(2 * (sizes.len() - 1));
        for w in sizes.windows(2) {
            params.extend(fan_in_layer(&[w[0], w[1]], w[0], w[1], rng));
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            head,
            params,
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }
}

fn dense_stack(graph: &mut Graph, mut h: NodeId, params: &[NodeId]) -> Result<NodeId> {
    let layers = params.len() / 2;
    for l in 0..layers {
        let z = graph.matmul(h, params[2 * l])?;
        h = graph.add_row(z, params[2 * l + 1])?;
        if l + 1 < layers {
            h = graph.relu(h)?;
        }
    }
    Ok(h)
}

impl Model for MlpModel {
    fn params(&self) -> &[Tensor] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    fn output_dim(&self) -> usize {
        *self.sizes.last().expect("at least two sizes")
    }

    fn head(&self) -> Head {
        self.head
    }

    fn forward(&self, graph: &mut Graph, input: NodeId, params: &[NodeId]) -> Result<NodeId> {
        dense_stack(graph, input, params)
    }
}

/// conv(6, 5×5) → relu → maxpool 2 → conv(16, 5×5) → relu → maxpool 2 →
/// flatten → linear 128 → relu → linear 64 → relu → linear `classes`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvNet {
    side: usize,
    stride: usize,
    classes: usize,
    /// `[conv1 w, conv1 b, conv2 w, conv2 b, fc1 w, fc1 b, fc2 w, fc2 b, fc3 w, fc3 b]`.
    params: Vec<Tensor>,
}

pub const CONV_KERNEL: usize = 5;
const POOL: usize = 2;

fn conv_out(side: usize, stride: usize) -> Option<usize> {
    side.checked_sub(CONV_KERNEL).map(|s| s / stride + 1)
}

impl ConvNet {
    /// Network for single-channel `side × side` images. `stride` applies to
    /// both convolutions; construction fails when the spatial extent
    /// collapses before the flatten (e.g. stride 5 on 28×28).
    pub fn new(side: usize, classes: usize, stride: usize, rng: &mut Stream) -> Result<Self> {
        if stride == 0 || classes == 0 {
            return Err(Error::Domain("stride and class count must be positive".into()));
        }
        let collapse = || {
            Error::Domain(format!(
                "a {side}x{side} input collapses below one pixel with kernel {CONV_KERNEL}, stride {stride}"
            ))
        };
        let s1 = conv_out(side, stride).ok_or_else(collapse)? / POOL;
        let s2 = conv_out(s1, stride).ok_or_else(collapse)? / POOL;
        if s2 == 0 {
            return Err(collapse());
        }
        let flat = 16 * s2 * s2;
        let k = CONV_KERNEL;
        let params = [
            fan_in_layer(&[6, 1, k, k], k * k, 6, rng),
            fan_in_layer(&[16, 6, k, k], 6 * k * k, 16, rng),
            fan_in_layer(&[flat, 128], flat, 128, rng),
            fan_in_layer(&[128, 64], 128, 64, rng),
            fan_in_layer(&[64, classes], 64, classes, rng),
        ]
        .into_iter()
        .flatten()
        .collect();
        Ok(Self {
            side,
            stride,
            classes,
            params,
        })
    }

    /// Layer summary in forward order.
    pub fn layers(&self) -> Vec<String> {
        let flat = self.params[4].shape()[0];
        vec![
            format!("conv 1->6 k{CONV_KERNEL} s{}", self.stride),
            "relu".into(),
            format!("maxpool {POOL}"),
            format!("conv 6->16 k{CONV_KERNEL} s{}", self.stride),
            "relu".into(),
            format!("maxpool {POOL}"),
            "flatten".into(),
            format!("linear {flat}->128"),
            "relu".into(),
            "linear 128->64".into(),
            "relu".into(),
            format!("linear 64->{}", self.classes),
        ]
    }
}

impl Model for ConvNet {
    fn params(&self) -> &[Tensor] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    fn input_dim(&self) -> usize {
        self.side * self.side
    }

    fn output_dim(&self) -> usize {
        self.classes
    }

    fn head(&self) -> Head {
        Head::Softmax
    }

    fn forward(&self, graph: &mut Graph, input: NodeId, params: &[NodeId]) -> Result<NodeId> {
        let n = graph.value(input).rows();
        let x = graph.reshape(input, vec![n, 1, self.side, self.side])?;
        let mut h = x;
        for l in 0..2 {
            h = graph.conv2d(h, params[2 * l], params[2 * l + 1], self.stride)?;
            h = graph.relu(h)?;
            h = graph.max_pool2d(h, POOL)?;
        }
        let flat = graph.value(h).len() / n;
        let h = graph.reshape(h, vec![n, flat])?;
        dense_stack(graph, h, &params[4..])
    }
}

/// Architecture choice as it appears in experiment configs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    Table,
    Mlp {
        hidden: Vec<usize>,
    },
    ConvNet {
        side: usize,
        #[serde(default = "default_stride")]
        stride: usize,
    },
}

fn default_stride() -> usize {
    1
}

impl ModelSpec {
    pub fn build(&self, input_dim: usize, output_dim: usize, head: Head, rng: &mut Stream) -> Result<AnyModel> {
        match self {
            ModelSpec::Table => Ok(AnyModel::Table(TableModel::new(input_dim, output_dim, head))),
            ModelSpec::Mlp { hidden } => {
                let mut sizes = vec![input_dim];
                sizes.extend_from_slice(hidden);
                sizes.push(output_dim);
                Ok(AnyModel::Mlp(MlpModel::new(&sizes, head, rng)?))
            }
            ModelSpec::ConvNet { side, stride } => {
                if side * side != input_dim {
                    return Err(Error::Config(format!(
                        "conv net expects {side}x{side} inputs, data rows have {input_dim} values"
                    )));
                }
                if head != Head::Softmax {
                    return Err(Error::Config("conv net is a classifier with a softmax head".into()));
                }
                Ok(AnyModel::Conv(ConvNet::new(*side, output_dim, *stride, rng)?))
            }
        }
    }
}

/// Any of the built-in families behind one type.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum AnyModel {
    Table(TableModel),
    Mlp(MlpModel),
    Conv(ConvNet),
}

macro_rules! delegate {
    ($self:ident, $m:ident => $e:expr) => {
        match $self {
            AnyModel::Table($m) => $e,
            AnyModel::Mlp($m) => $e,
            AnyModel::Conv($m) => $e,
        }
    };
}

impl Model for AnyModel {
    fn params(&self) -> &[Tensor] {
        delegate!(self, m => m.params())
    }

    fn params_mut(&mut self) -> &mut [Tensor] {
        delegate!(self, m => m.params_mut())
    }

    fn input_dim(&self) -> usize {
        delegate!(self, m => m.input_dim())
    }

    fn output_dim(&self) -> usize {
        delegate!(self, m => m.output_dim())
    }

    fn head(&self) -> Head {
        delegate!(self, m => m.head())
    }

    fn forward(&self, graph: &mut Graph, input: NodeId, params: &[NodeId]) -> Result<NodeId> {
        delegate!(self, m => m.forward(graph, input, params))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Seeder;

    #[test]
    fn table_param_count() {
        let m = TableModel::new(5, 3, Head::Softmax);
        assert_eq!(m.params()[0].len(), 15);
        assert_eq!(m.output(2), vec![1.0 / 3.0; 3]);
    }

    #[test]
    fn mlp_init_ranges() {
        let m = MlpModel::new(&[2, 8, 3], Head::Identity, &mut Seeder::new(1).stream("init", 0)).unwrap();
        assert_eq!(m.params().len(), 4);
        let bound0 = 1.0 / 2f64.sqrt();
        let bound1 = 1.0 / 8f64.sqrt();
        assert!(m.params()[0].data().iter().all(|w| w.abs() < bound0));
        assert!(m.params()[1].data().iter().all(|b| b.abs() < bound0));
        assert!(m.params()[2].data().iter().all(|w| w.abs() < bound1));
        assert!(m.params()[1].data().iter().any(|b| *b != 0.0));
    }

    #[test]
    fn convnet_layer_table() {
        let net = ConvNet::new(28, 10, 1, &mut Seeder::new(1).stream("init", 0)).unwrap();
        assert_eq!(
            net.layers(),
            vec![
                "conv 1->6 k5 s1", "relu", "maxpool 2", "conv 6->16 k5 s1", "relu", "maxpool 2",
                "flatten", "linear 256->128", "relu", "linear 128->64", "relu", "linear 64->10",
            ]
        );
        let mut g = Graph::new();
        let x = g.input(Tensor::zeros(&[2, 784]));
        let ps: Vec<NodeId> = net.params().iter().map(|p| g.param(p.clone())).collect();
        let out = net.forward(&mut g, x, &ps).unwrap();
        assert_eq!(g.value(out).shape(), &[2, 10]);
    }

    #[test]
    fn literal_stride_five_collapses() {
        let err = ConvNet::new(28, 10, 5, &mut Seeder::new(1).stream("init", 0)).unwrap_err();
        assert!(err.to_string().contains("collapses"));
    }
}
