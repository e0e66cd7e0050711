//! Dense feed-forward network with hand-written backpropagation.
//!
//! Weights of a layer are stored row-major with shape `(in_dim, out_dim)`, so
//! the inner loop of the affine kernel walks contiguous output columns. Every
//! output is accumulated as `b[j] + x[0]*w[0][j] + x[1]*w[1][j] + ...` in that
//! order regardless of batch size, which makes a batched forward pass
//! bit-identical to evaluating each row on its own.

use rand::distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the activation output `y`.
    #[inline]
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

/// Architecture shared by every member of an ensemble.
///
/// `depth` counts hidden layers; the output layer is always linear.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub output_dim: usize,
    pub hidden_width: usize,
    pub depth: usize,
    pub activation: Activation,
}

impl MlpSpec {
    pub fn new(input_dim: usize, output_dim: usize, hidden_width: usize, depth: usize) -> Self {
        Self {
            input_dim,
            output_dim,
            hidden_width,
            depth,
            activation: Activation::Relu,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden_width == 0 || self.depth == 0 {
            return Err(Error::InvalidConfig(format!(
                "mlp dimensions must all be >= 1, got {self:?}"
            )));
        }
        Ok(())
    }

    /// `(in_dim, out_dim)` of every layer, input to output.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = Vec::with_capacity(self.depth + 1);
        let mut prev = self.input_dim;
        for _ in 0..self.depth {
            shapes.push((prev, self.hidden_width));
            prev = self.hidden_width;
        }
        shapes.push((prev, self.output_dim));
        shapes
    }

    pub fn num_params(&self) -> usize {
        self.layer_shapes().iter().map(|(i, o)| i * o + o).sum()
    }
}

/// Hidden-layer layout without the task-dependent input/output sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetShape {
    pub hidden_width: usize,
    pub depth: usize,
    pub activation: Activation,
}

impl Default for NetShape {
    fn default() -> Self {
        Self {
            hidden_width: 300,
            depth: 5,
            activation: Activation::Relu,
        }
    }
}

impl NetShape {
    pub fn spec(&self, input_dim: usize, output_dim: usize) -> MlpSpec {
        MlpSpec {
            input_dim,
            output_dim,
            hidden_width: self.hidden_width,
            depth: self.depth,
            activation: self.activation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    /// Row-major `(in_dim, out_dim)`.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Dense {
    fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            biases: vec![0.0; out_dim],
        }
    }

    /// `out[r] = b + x[r] W` for `n` rows.
    #[inline]
    fn affine(&self, x: &[f64], n: usize, out: &mut [f64]) {
        let (ni, no) = (self.in_dim, self.out_dim);
        for r in 0..n {
            let xr = &x[r * ni..(r + 1) * ni];
            let o = &mut out[r * no..(r + 1) * no];
            o.copy_from_slice(&self.biases);
            for (i, &xi) in xr.iter().enumerate() {
                let wi = &self.weights[i * no..(i + 1) * no];
                for (oj, &wij) in o.iter_mut().zip(wi) {
                    *oj += xi * wij;
                }
            }
        }
    }
}

/// Parameters of one network. Also used as the gradient container.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub spec: MlpSpec,
    pub layers: Vec<Dense>,
}

pub type Gradients = Mlp;

/// Activations kept from a batched forward pass for backpropagation.
#[derive(Debug, Default, Clone)]
pub struct ForwardCache {
    /// `acts[0]` is the input batch; `acts[l + 1]` is the output of layer `l`.
    acts: Vec<Vec<f64>>,
    rows: usize,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.acts.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

impl Mlp {
    /// He-uniform weights for relu (Glorot-uniform for tanh), zero biases.
    pub fn init(spec: MlpSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = seed::rng(seed);
        let layers = spec
            .layer_shapes()
            .into_iter()
            .map(|(ni, no)| {
                let limit = match spec.activation {
                    Activation::Relu => (6.0 / ni as f64).sqrt(),
                    Activation::Tanh => (6.0 / (ni + no) as f64).sqrt(),
                };
                let dist = Uniform::new_inclusive(-limit, limit).expect("finite limit");
                let mut layer = Dense::zeros(ni, no);
                for w in &mut layer.weights {
                    *w = dist.sample(&mut rng);
                }
                layer
            })
            .collect();
        Ok(Self { spec, layers })
    }

    pub fn zeros(spec: MlpSpec) -> Result<Self> {
        spec.validate()?;
        let layers = spec
            .layer_shapes()
            .into_iter()
            .map(|(ni, no)| Dense::zeros(ni, no))
            .collect();
        Ok(Self { spec, layers })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            spec: self.spec,
            layers: self.layers.iter().map(|l| Dense::zeros(l.in_dim, l.out_dim)).collect(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.spec.output_dim
    }

    /// Parameter slices in a fixed order: per layer, weights then biases.
    pub fn param_slices(&self) -> impl Iterator<Item = &[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.as_slice(), l.biases.as_slice()])
    }

    pub fn param_slices_mut(&mut self) -> impl Iterator<Item = &mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weights.as_mut_slice(), l.biases.as_mut_slice()])
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.param_slices().flatten().copied().collect()
    }

    pub fn is_finite(&self) -> bool {
        self.param_slices().flatten().all(|v| v.is_finite())
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        check_len("mlp input", self.input_dim(), input.len())?;
        let mut out = Vec::new();
        self.forward_rows(input, 1, &mut out);
        Ok(out)
    }

    /// Forward pass over `rows` stacked inputs, writing `rows * output_dim` values.
    pub fn forward_batch(&self, inputs: &[f64], rows: usize, out: &mut Vec<f64>) -> Result<()> {
        check_len("mlp batch input", rows * self.input_dim(), inputs.len())?;
        self.forward_rows(inputs, rows, out);
        Ok(())
    }

    fn forward_rows(&self, inputs: &[f64], rows: usize, out: &mut Vec<f64>) {
        let last = self.layers.len() - 1;
        let mut cur = inputs.to_vec();
        let mut next = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            next.clear();
            next.resize(rows * layer.out_dim, 0.0);
            layer.affine(&cur, rows, &mut next);
            if l != last {
                let act = self.spec.activation;
                next.iter_mut().for_each(|v| *v = act.apply(*v));
            }
            std::mem::swap(&mut cur, &mut next);
        }
        *out = cur;
    }

    pub fn forward_cached(&self, inputs: &[f64], rows: usize) -> Result<ForwardCache> {
        check_len("mlp batch input", rows * self.input_dim(), inputs.len())?;
        let last = self.layers.len() - 1;
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(inputs.to_vec());
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = vec![0.0; rows * layer.out_dim];
            layer.affine(&acts[l], rows, &mut z);
            if l != last {
                let act = self.spec.activation;
                z.iter_mut().for_each(|v| *v = act.apply(*v));
            }
            acts.push(z);
        }
        Ok(ForwardCache { acts, rows })
    }

    /// Backpropagates `d_output` (gradient w.r.t. the network output) through
    /// a cached forward pass, accumulating into `grads`.
    pub fn backward(&self, cache: &ForwardCache, d_output: &[f64], grads: &mut Gradients) {
        let rows = cache.rows;
        let mut delta = d_output.to_vec();
        let mut d_prev = Vec::new();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let g = &mut grads.layers[l];
            let (ni, no) = (layer.in_dim, layer.out_dim);
            let x = &cache.acts[l];
            for r in 0..rows {
                let xr = &x[r * ni..(r + 1) * ni];
                let dr = &delta[r * no..(r + 1) * no];
                for (gb, &d) in g.biases.iter_mut().zip(dr) {
                    *gb += d;
                }
                for (i, &xi) in xr.iter().enumerate() {
                    let gw = &mut g.weights[i * no..(i + 1) * no];
                    for (gwij, &d) in gw.iter_mut().zip(dr) {
                        *gwij += xi * d;
                    }
                }
            }
            if l == 0 {
                break;
            }
            d_prev.clear();
            d_prev.resize(rows * ni, 0.0);
            let act = self.spec.activation;
            for r in 0..rows {
                let dr = &delta[r * no..(r + 1) * no];
                for i in 0..ni {
                    let wi = &layer.weights[i * no..(i + 1) * no];
                    let s: f64 = wi.iter().zip(dr).map(|(w, d)| w * d).sum();
                    d_prev[r * ni + i] = s * act.derivative_from_output(x[r * ni + i]);
                }
            }
            std::mem::swap(&mut delta, &mut d_prev);
        }
    }

    /// Mean squared error over batch and output dimensions, with its gradient.
    pub fn mse_grad(&self, inputs: &[f64], targets: &[f64], rows: usize) -> Result<(Gradients, f64)> {
        if rows == 0 {
            return Err(Error::InvalidInput("mse_grad needs a nonempty batch".into()));
        }
        check_len("mse targets", rows * self.output_dim(), targets.len())?;
        let cache = self.forward_cached(inputs, rows)?;
        let y = cache.output();
        let scale = 1.0 / (rows * self.output_dim()) as f64;
        let mut loss = 0.0;
        let d_out: Vec<f64> = y
            .iter()
            .zip(targets)
            .map(|(p, t)| {
                let e = p - t;
                loss += e * e;
                2.0 * e * scale
            })
            .collect();
        let mut grads = self.zeros_like();
        self.backward(&cache, &d_out, &mut grads);
        Ok((grads, loss * scale))
    }

    pub fn mse(&self, inputs: &[f64], targets: &[f64], rows: usize) -> Result<f64> {
        check_len("mse targets", rows * self.output_dim(), targets.len())?;
        let mut out = Vec::new();
        self.forward_batch(inputs, rows, &mut out)?;
        let sse: f64 = out.iter().zip(targets).map(|(p, t)| (p - t) * (p - t)).sum();
        Ok(sse / targets.len().max(1) as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> MlpSpec {
        MlpSpec::new(2, 1, 4, 1)
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        let a = Mlp::init(tiny(), 7).unwrap();
        let b = Mlp::init(tiny(), 7).unwrap();
        let c = Mlp::init(tiny(), 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.flat_params(), c.flat_params());
    }

    #[test]
    fn layer_shapes_chain() {
        let spec = MlpSpec::new(10, 7, 300, 5);
        let net = Mlp::init(spec, 0).unwrap();
        let shapes: Vec<_> = net.layers.iter().map(|l| (l.in_dim, l.out_dim)).collect();
        assert_eq!(
            shapes,
            vec![(10, 300), (300, 300), (300, 300), (300, 300), (300, 300), (300, 7)]
        );
        assert_eq!(net.flat_params().len(), spec.num_params());
    }

    #[test]
    fn zero_dims_are_rejected() {
        assert!(Mlp::init(MlpSpec::new(0, 1, 4, 1), 0).is_err());
        assert!(Mlp::init(MlpSpec::new(2, 1, 4, 0), 0).is_err());
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = Mlp::zeros(MlpSpec::new(3, 2, 5, 2)).unwrap();
        assert_eq!(net.forward(&[1.0, -2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn hand_arithmetic_linear_path() {
        // hidden relu unit passes positives through unchanged: y = 2*x + 1
        let mut net = Mlp::zeros(MlpSpec::new(1, 1, 1, 1)).unwrap();
        net.layers[0].weights[0] = 1.0;
        net.layers[1].weights[0] = 2.0;
        net.layers[1].biases[0] = 1.0;
        assert_eq!(net.forward(&[3.0]).unwrap(), vec![7.0]);
    }

    #[test]
    fn forward_matches_hand_composition() {
        let net = Mlp::init(tiny(), 3).unwrap();
        let x = [0.3, -1.2];
        let (l0, l1) = (&net.layers[0], &net.layers[1]);
        let mut y = l1.biases[0];
        for j in 0..4 {
            let z = l0.biases[j] + x[0] * l0.weights[j] + x[1] * l0.weights[4 + j];
            y += z.max(0.0) * l1.weights[j];
        }
        let got = net.forward(&x).unwrap()[0];
        assert!((got - y).abs() < 1e-14, "{got} vs {y}");
    }

    #[test]
    fn batch_rows_match_single_forward_bitwise() {
        let net = Mlp::init(MlpSpec::new(3, 2, 8, 2), 11).unwrap();
        let xs = [0.1, 0.2, 0.3, -1.0, 0.5, 2.0, 0.0, 0.0, -0.7];
        let mut out = Vec::new();
        net.forward_batch(&xs, 3, &mut out).unwrap();
        for r in 0..3 {
            let single = net.forward(&xs[r * 3..r * 3 + 3]).unwrap();
            assert_eq!(&out[r * 2..r * 2 + 2], single.as_slice());
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let net = Mlp::init(tiny(), 0).unwrap();
        assert!(matches!(net.forward(&[1.0]), Err(Error::Shape { .. })));
        assert!(net.mse_grad(&[1.0, 2.0], &[1.0, 2.0], 1).is_err());
        assert!(net.mse_grad(&[], &[], 0).is_err());
    }

    #[test]
    fn perfect_targets_give_zero_loss_and_gradient() {
        let net = Mlp::init(MlpSpec::new(2, 3, 5, 2), 1).unwrap();
        let x = [0.4, -0.9, 1.5, 0.2];
        let mut y = Vec::new();
        net.forward_batch(&x, 2, &mut y).unwrap();
        let (g, loss) = net.mse_grad(&x, &y, 2).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.param_slices().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn scalar_gradient_by_hand() {
        // y = w2 * relu(w1 x + b1) + b2 with the hidden unit active
        let mut net = Mlp::zeros(MlpSpec::new(1, 1, 1, 1)).unwrap();
        net.layers[0].weights[0] = 0.5;
        net.layers[0].biases[0] = 0.1;
        net.layers[1].weights[0] = 1.5;
        net.layers[1].biases[0] = -0.2;
        let (x, t) = (2.0, 0.3);
        let h = 0.5 * x + 0.1;
        let y = 1.5 * h - 0.2;
        let e = y - t;
        let (g, loss) = net.mse_grad(&[x], &[t], 1).unwrap();
        assert!((loss - e * e).abs() < 1e-15);
        let expect = [2.0 * e * 1.5 * x, 2.0 * e * 1.5, 2.0 * e * h, 2.0 * e];
        let got = g.flat_params();
        for (a, b) in got.iter().zip(expect) {
            assert!((a - b).abs() < 1e-14, "{got:?} vs {expect:?}");
        }
    }
}
