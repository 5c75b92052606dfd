//! Dense and GRU layers.
//!
//! Layers own their parameter tensors. A forward pass that should be
//! differentiated first binds the parameters onto a [`Graph`] as leaves
//! ([`Parameterized::bind`]) and then threads the returned node ids through
//! `forward`. The `infer*` methods compute the same values directly without
//! recording anything, for action selection in hot loops.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::graph::{sigmoid, Graph, NodeId};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Relu,
    Sigmoid,
    Identity,
}

impl Activation {
    pub fn apply(self, g: &mut Graph, x: NodeId) -> NodeId {
        match self {
            Activation::Tanh => g.tanh(x),
            Activation::Relu => g.relu(x),
            Activation::Sigmoid => g.sigmoid(x),
            Activation::Identity => x,
        }
    }

    pub fn eval(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => sigmoid(x),
            Activation::Identity => x,
        }
    }
}

/// Shape description stored in checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Dense {
        inputs: usize,
        outputs: usize,
        activation: Activation,
    },
    Gru {
        inputs: usize,
        hidden: usize,
    },
}

pub trait Parameterized {
    fn parameters(&self) -> Vec<&Tensor>;
    fn parameters_mut(&mut self) -> Vec<&mut Tensor>;
    fn layer_specs(&self) -> Vec<LayerSpec>;

    fn bind(&self, g: &mut Graph) -> Vec<NodeId> {
        self.parameters()
            .into_iter()
            .map(|t| g.leaf(t.clone()))
            .collect()
    }

    fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|t| t.len()).sum()
    }

    /// Concatenated parameter values in `parameters()` order.
    fn flat_parameters(&self) -> Vec<f64> {
        self.parameters()
            .iter()
            .flat_map(|t| t.data().iter().copied())
            .collect()
    }
}

fn uniform_matrix(rows: usize, cols: usize, fan_in: usize, rng: &mut impl Rng) -> Tensor {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| rng.gen_range(-bound..=bound))
        .collect();
    Tensor::matrix(rows, cols, data)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: Tensor,
    pub bias: Tensor,
    pub activation: Activation,
}

impl Dense {
    /// Weights uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, zero bias.
    pub fn new(inputs: usize, outputs: usize, activation: Activation, rng: &mut impl Rng) -> Self {
        Self {
            weight: uniform_matrix(outputs, inputs, inputs, rng),
            bias: Tensor::zeros(vec![outputs]),
            activation,
        }
    }

    pub fn zeros(inputs: usize, outputs: usize, activation: Activation) -> Self {
        Self {
            weight: Tensor::zeros(vec![outputs, inputs]),
            bias: Tensor::zeros(vec![outputs]),
            activation,
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape()[0]
    }

    /// `params` are this layer's two bound leaves: weight, bias.
    pub fn forward(&self, g: &mut Graph, params: &[NodeId], x: NodeId) -> NodeId {
        let pre = g.affine(x, params[0], Some(params[1]));
        self.activation.apply(g, pre)
    }

    pub fn infer(&self, x: &[f64]) -> Vec<f64> {
        let (out, inp) = (self.outputs(), self.inputs());
        assert_eq!(x.len(), inp, "dense: input width {} vs {inp}", x.len());
        let w = self.weight.data();
        let b = self.bias.data();
        (0..out)
            .map(|o| {
                let mut acc = 0.0;
                for i in 0..inp {
                    acc += w[o * inp + i] * x[i];
                }
                self.activation.eval(acc + b[o])
            })
            .collect()
    }
}

impl Parameterized for Dense {
    fn parameters(&self) -> Vec<&Tensor> {
        vec![&self.weight, &self.bias]
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.weight, &mut self.bias]
    }

    fn layer_specs(&self) -> Vec<LayerSpec> {
        vec![LayerSpec::Dense {
            inputs: self.inputs(),
            outputs: self.outputs(),
            activation: self.activation,
        }]
    }
}

/// Stack of dense layers; hidden layers share one activation and the
/// output layer is linear.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

impl Mlp {
    pub fn new(
        inputs: usize,
        hidden: &[usize],
        outputs: usize,
        activation: Activation,
        rng: &mut impl Rng,
    ) -> Self {
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut width = inputs;
        for &h in hidden {
            layers.push(Dense::new(width, h, activation, rng));
            width = h;
        }
        layers.push(Dense::new(width, outputs, Activation::Identity, rng));
        Self { layers }
    }

    pub fn from_layers(layers: Vec<Dense>) -> Self {
        assert!(!layers.is_empty(), "mlp needs at least one layer");
        for pair in layers.windows(2) {
            assert_eq!(
                pair[0].outputs(),
                pair[1].inputs(),
                "mlp layer widths do not chain"
            );
        }
        Self { layers }
    }

    pub fn inputs(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn outputs(&self) -> usize {
        self.layers.last().map(Dense::outputs).unwrap_or(0)
    }

    pub fn forward(&self, g: &mut Graph, params: &[NodeId], x: NodeId) -> NodeId {
        assert_eq!(
            params.len(),
            2 * self.layers.len(),
            "mlp: wrong number of bound parameters"
        );
        self.layers
            .iter()
            .zip(params.chunks(2))
            .fold(x, |h, (layer, p)| layer.forward(g, p, h))
    }

    pub fn infer(&self, x: &[f64]) -> Vec<f64> {
        let mut h = x.to_vec();
        for layer in &self.layers {
            h = layer.infer(&h);
        }
        h
    }

    /// Sets the output layer's weights and bias to zero.
    pub fn zero_output_layer(&mut self) {
        if let Some(last) = self.layers.last_mut() {
            last.weight.data_mut().fill(0.0);
            last.bias.data_mut().fill(0.0);
        }
    }
}

impl Parameterized for Mlp {
    fn parameters(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|l| l.parameters()).collect()
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.parameters_mut())
            .collect()
    }

    fn layer_specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().flat_map(|l| l.layer_specs()).collect()
    }
}

/// Gated recurrent unit.
///
/// ```text
/// z  = σ(W_z x + U_z h + b_z)
/// r  = σ(W_r x + U_r h + b_r)
/// h̃  = tanh(W_h x + U_h (r ∘ h) + b_h)
/// h' = (1 − z) ∘ h + z ∘ h̃
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GruCell {
    pub w_z: Tensor,
    pub w_r: Tensor,
    pub w_h: Tensor,
    pub u_z: Tensor,
    pub u_r: Tensor,
    pub u_h: Tensor,
    pub b_z: Tensor,
    pub b_r: Tensor,
    pub b_h: Tensor,
}

impl GruCell {
    pub fn new(inputs: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        Self {
            w_z: uniform_matrix(hidden, inputs, inputs, rng),
            w_r: uniform_matrix(hidden, inputs, inputs, rng),
            w_h: uniform_matrix(hidden, inputs, inputs, rng),
            u_z: uniform_matrix(hidden, hidden, hidden, rng),
            u_r: uniform_matrix(hidden, hidden, hidden, rng),
            u_h: uniform_matrix(hidden, hidden, hidden, rng),
            b_z: Tensor::zeros(vec![hidden]),
            b_r: Tensor::zeros(vec![hidden]),
            b_h: Tensor::zeros(vec![hidden]),
        }
    }

    pub fn zeros(inputs: usize, hidden: usize) -> Self {
        Self {
            w_z: Tensor::zeros(vec![hidden, inputs]),
            w_r: Tensor::zeros(vec![hidden, inputs]),
            w_h: Tensor::zeros(vec![hidden, inputs]),
            u_z: Tensor::zeros(vec![hidden, hidden]),
            u_r: Tensor::zeros(vec![hidden, hidden]),
            u_h: Tensor::zeros(vec![hidden, hidden]),
            b_z: Tensor::zeros(vec![hidden]),
            b_r: Tensor::zeros(vec![hidden]),
            b_h: Tensor::zeros(vec![hidden]),
        }
    }

    pub fn inputs(&self) -> usize {
        self.w_z.shape()[1]
    }

    pub fn hidden_size(&self) -> usize {
        self.w_z.shape()[0]
    }

    /// One step over a batch: `x [B,in]`, `h [B,hidden]` (or vectors).
    /// `params` are the nine bound leaves in `parameters()` order.
    pub fn step(&self, g: &mut Graph, params: &[NodeId], x: NodeId, h: NodeId) -> NodeId {
        assert_eq!(params.len(), 9, "gru: expected 9 bound parameters");
        let (_, hw) = g.value(h).rows_cols();
        assert_eq!(hw, self.hidden_size(), "gru: hidden width mismatch");
        let [w_z, w_r, w_h, u_z, u_r, u_h, b_z, b_r, b_h] =
            [0, 1, 2, 3, 4, 5, 6, 7, 8].map(|i| params[i]);
        let zx = g.affine(x, w_z, Some(b_z));
        let zh = g.affine(h, u_z, None);
        let zs = g.add(zx, zh);
        let z = g.sigmoid(zs);
        let rx = g.affine(x, w_r, Some(b_r));
        let rh = g.affine(h, u_r, None);
        let rs = g.add(rx, rh);
        let r = g.sigmoid(rs);
        let gated = g.mul(r, h);
        let cx = g.affine(x, w_h, Some(b_h));
        let ch = g.affine(gated, u_h, None);
        let cs = g.add(cx, ch);
        let cand = g.tanh(cs);
        let keep_gate = g.one_minus(z);
        let keep = g.mul(keep_gate, h);
        let update = g.mul(z, cand);
        g.add(keep, update)
    }

    pub fn infer_step(&self, x: &[f64], h: &[f64]) -> Vec<f64> {
        let hidden = self.hidden_size();
        let inp = self.inputs();
        assert_eq!(x.len(), inp, "gru: input width mismatch");
        assert_eq!(h.len(), hidden, "gru: hidden width mismatch");
        let mv = |m: &Tensor, v: &[f64], cols: usize, row: usize| -> f64 {
            let d = &m.data()[row * cols..(row + 1) * cols];
            d.iter().zip(v).map(|(a, b)| a * b).sum()
        };
        let mut z = vec![0.0; hidden];
        let mut r = vec![0.0; hidden];
        for j in 0..hidden {
            z[j] = sigmoid(
                mv(&self.w_z, x, inp, j) + mv(&self.u_z, h, hidden, j) + self.b_z.data()[j],
            );
            r[j] = sigmoid(
                mv(&self.w_r, x, inp, j) + mv(&self.u_r, h, hidden, j) + self.b_r.data()[j],
            );
        }
        let gated: Vec<f64> = r.iter().zip(h).map(|(a, b)| a * b).collect();
        (0..hidden)
            .map(|j| {
                let cand = (mv(&self.w_h, x, inp, j)
                    + mv(&self.u_h, &gated, hidden, j)
                    + self.b_h.data()[j])
                    .tanh();
                (1.0 - z[j]) * h[j] + z[j] * cand
            })
            .collect()
    }
}

impl Parameterized for GruCell {
    fn parameters(&self) -> Vec<&Tensor> {
        vec![
            &self.w_z, &self.w_r, &self.w_h, &self.u_z, &self.u_r, &self.u_h, &self.b_z, &self.b_r,
            &self.b_h,
        ]
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        vec![
            &mut self.w_z,
            &mut self.w_r,
            &mut self.w_h,
            &mut self.u_z,
            &mut self.u_r,
            &mut self.u_h,
            &mut self.b_z,
            &mut self.b_r,
            &mut self.b_h,
        ]
    }

    fn layer_specs(&self) -> Vec<LayerSpec> {
        vec![LayerSpec::Gru {
            inputs: self.inputs(),
            hidden: self.hidden_size(),
        }]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn zero_gru_from_zero_state_stays_zero() {
        let cell = GruCell::zeros(3, 4);
        assert_eq!(cell.infer_step(&[0.5, -1.0, 2.0], &[0.0; 4]), vec![0.0; 4]);
    }

    #[test]
    fn zero_gru_halves_hidden_state() {
        // z = 0.5 and the candidate is tanh(0) = 0
        let cell = GruCell::zeros(2, 3);
        let h = [0.8, -0.4, 1.0];
        let out = cell.infer_step(&[1.0, 1.0], &h);
        for (o, v) in out.iter().zip(h) {
            assert!((o - 0.5 * v).abs() < 1e-15);
        }
        let mut g = Graph::new();
        let p = cell.bind(&mut g);
        let x = g.leaf(Tensor::vector(vec![1.0, 1.0]));
        let hn = g.leaf(Tensor::vector(h.to_vec()));
        let y = cell.step(&mut g, &p, x, hn);
        assert_eq!(g.value(y).data(), out.as_slice());
    }

    #[test]
    fn infer_matches_graph_forward() {
        let mut rng = stream(3, &[]);
        let mlp = Mlp::new(5, &[7, 4], 3, Activation::Tanh, &mut rng);
        let cell = GruCell::new(5, 6, &mut rng);
        let x: Vec<f64> = (0..5).map(|i| 0.3 * i as f64 - 0.5).collect();
        let h: Vec<f64> = (0..6).map(|i| 0.1 * i as f64 - 0.2).collect();
        let mut g = Graph::new();
        let pm = mlp.bind(&mut g);
        let pc = cell.bind(&mut g);
        let xn = g.leaf(Tensor::vector(x.clone()));
        let hn = g.leaf(Tensor::vector(h.clone()));
        let y = mlp.forward(&mut g, &pm, xn);
        let h2 = cell.step(&mut g, &pc, xn, hn);
        assert_eq!(g.value(y).data(), mlp.infer(&x).as_slice());
        let direct = cell.infer_step(&x, &h);
        for (a, b) in g.value(h2).data().iter().zip(&direct) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn init_within_fan_in_bound() {
        let mut rng = stream(1, &[]);
        let d = Dense::new(16, 8, Activation::Relu, &mut rng);
        let bound = 1.0 / 4.0;
        assert!(d.weight.data().iter().all(|w| w.abs() <= bound));
        assert!(d.bias.data().iter().all(|&b| b == 0.0));
    }

    #[test]
    #[should_panic(expected = "gru")]
    fn gru_dimension_mismatch_panics() {
        GruCell::zeros(2, 3).infer_step(&[1.0], &[0.0; 3]);
    }
}
