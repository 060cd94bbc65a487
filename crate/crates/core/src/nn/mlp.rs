use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputActivation {
    Identity,
    Sigmoid,
    Softmax,
}

/// Layer widths from input to output plus activations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    layer_sizes: Vec<usize>,
    hidden_activation: Activation,
    output_activation: OutputActivation,
}

impl MlpSpec {
    pub fn new(
        layer_sizes: Vec<usize>,
        hidden_activation: Activation,
        output_activation: OutputActivation,
    ) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::Config(format!(
                "an MLP needs at least input and output sizes, got {:?}",
                layer_sizes
            )));
        }
        if layer_sizes.contains(&0) {
            return Err(Error::Config(format!("zero-width layer in {:?}", layer_sizes)));
        }
        Ok(Self {
            layer_sizes,
            hidden_activation,
            output_activation,
        })
    }

    /// `input → hidden… → output` with relu hidden layers.
    pub fn relu(input: usize, hidden: &[usize], output: usize, out_act: OutputActivation) -> Result<Self> {
        let mut sizes = Vec::with_capacity(hidden.len() + 2);
        sizes.push(input);
        sizes.extend_from_slice(hidden);
        sizes.push(output);
        Self::new(sizes, Activation::Relu, out_act)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_size(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn hidden_activation(&self) -> Activation {
        self.hidden_activation
    }

    pub fn output_activation(&self) -> OutputActivation {
        self.output_activation
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(&self, rng: &mut Rng) -> ModelParams {
        let layers = self
            .layer_sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let data = (0..fan_in * fan_out)
                    .map(|_| rng.random_range(-limit..=limit))
                    .collect();
                DenseLayer {
                    weights: DenseMatrix::from_vec(fan_in, fan_out, data).expect("finite init"),
                    bias: vec![0.0; fan_out],
                }
            })
            .collect();
        ModelParams {
            spec: self.clone(),
            layers,
        }
    }

    pub fn zeros(&self) -> ModelParams {
        let layers = self
            .layer_sizes
            .windows(2)
            .map(|w| DenseLayer {
                weights: DenseMatrix::zeros(w[0], w[1]),
                bias: vec![0.0; w[1]],
            })
            .collect();
        ModelParams {
            spec: self.clone(),
            layers,
        }
    }

    pub fn num_params(&self) -> usize {
        self.layer_sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }
}

/// Weights are stored `fan_in × fan_out` so a layer computes `x·W + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub weights: DenseMatrix,
    pub bias: Vec<f64>,
}

/// Parameters of one MLP. Gradients use the same type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    spec: MlpSpec,
    layers: Vec<DenseLayer>,
}

impl ModelParams {
    pub fn from_layers(spec: MlpSpec, layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.len() != spec.num_layers() {
            return Err(Error::dim("ModelParams::from_layers", spec.num_layers(), layers.len()));
        }
        for (l, (layer, w)) in layers.iter().zip(spec.layer_sizes.windows(2)).enumerate() {
            if layer.weights.shape() != (w[0], w[1]) || layer.bias.len() != w[1] {
                return Err(Error::dim(
                    "ModelParams::from_layers",
                    format!("layer {l}: {}x{} weights, {} biases", w[0], w[1], w[1]),
                    format!(
                        "{}x{} weights, {} biases",
                        layer.weights.rows(),
                        layer.weights.cols(),
                        layer.bias.len()
                    ),
                ));
            }
        }
        Ok(Self { spec, layers })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn num_values(&self) -> usize {
        self.spec.num_params()
    }

    /// All values in canonical order: per layer, weights row-major then bias.
    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.as_slice().iter().chain(l.bias.iter()))
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.as_mut_slice().iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.values().copied().collect()
    }

    pub fn from_flat(spec: &MlpSpec, flat: &[f64]) -> Result<Self> {
        if flat.len() != spec.num_params() {
            return Err(Error::dim("ModelParams::from_flat", spec.num_params(), flat.len()));
        }
        let mut params = spec.zeros();
        for (dst, src) in params.values_mut().zip(flat) {
            *dst = *src;
        }
        Ok(params)
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.spec.layer_sizes == other.spec.layer_sizes
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(|v| v.is_finite())
    }

    pub fn l2_norm(&self) -> f64 {
        self.values().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Element-wise `self += other`.
    pub fn accumulate(&mut self, other: &Self) -> Result<()> {
        if !self.same_shape(other) {
            return Err(Error::dim(
                "ModelParams::accumulate",
                format!("{:?}", self.spec.layer_sizes),
                format!("{:?}", other.spec.layer_sizes),
            ));
        }
        for (a, b) in self.values_mut().zip(other.values()) {
            *a += b;
        }
        Ok(())
    }

    /// Divides every value by `n`.
    pub fn div_scalar(&mut self, n: f64) {
        for v in self.values_mut() {
            *v /= n;
        }
    }
}

/// Everything the backward pass needs from a forward pass.
#[derive(Debug, Clone)]
pub struct Activations {
    /// Input to each layer; `inputs[0]` is the network input.
    pub inputs: Vec<DenseMatrix>,
    /// Pre-activation of each layer.
    pub pre: Vec<DenseMatrix>,
    /// Final activated output.
    pub output: DenseMatrix,
}

fn hidden_forward(act: Activation, z: &DenseMatrix) -> DenseMatrix {
    match act {
        Activation::Relu => z.map(|v| v.max(0.0)),
        Activation::Sigmoid => z.map(sigmoid),
        Activation::Tanh => z.map(f64::tanh),
    }
}

pub(crate) fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(z: &DenseMatrix) -> DenseMatrix {
    let mut out = z.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

fn output_forward(act: OutputActivation, z: &DenseMatrix) -> DenseMatrix {
    match act {
        OutputActivation::Identity => z.clone(),
        OutputActivation::Sigmoid => z.map(sigmoid),
        OutputActivation::Softmax => softmax_rows(z),
    }
}

pub fn mlp_forward(params: &ModelParams, x: &DenseMatrix) -> Result<Activations> {
    let spec = &params.spec;
    if x.cols() != spec.input_size() {
        return Err(Error::dim("mlp_forward input columns", spec.input_size(), x.cols()));
    }
    let last = params.layers.len() - 1;
    let mut inputs = Vec::with_capacity(params.layers.len());
    let mut pre = Vec::with_capacity(params.layers.len());
    let mut current = x.clone();
    let mut output = None;
    for (l, layer) in params.layers.iter().enumerate() {
        let mut z = current.matmul(&layer.weights)?;
        z.add_row_vector(&layer.bias)?;
        let a = if l == last {
            output_forward(spec.output_activation, &z)
        } else {
            hidden_forward(spec.hidden_activation, &z)
        };
        if !a.is_finite() {
            return Err(Error::NonFinite("mlp_forward activation"));
        }
        inputs.push(std::mem::replace(&mut current, a));
        pre.push(z);
        if l == last {
            output = Some(current.clone());
        }
    }
    Ok(Activations {
        inputs,
        pre,
        output: output.expect("at least one layer"),
    })
}

/// Forward pass returning only the final output.
pub fn predict(params: &ModelParams, x: &DenseMatrix) -> Result<DenseMatrix> {
    Ok(mlp_forward(params, x)?.output)
}

fn check_activations(params: &ModelParams, acts: &Activations, d_out: &DenseMatrix) -> Result<()> {
    let n_layers = params.layers.len();
    if acts.inputs.len() != n_layers || acts.pre.len() != n_layers {
        return Err(Error::dim("mlp_backward activations", n_layers, acts.inputs.len()));
    }
    for (l, layer) in params.layers.iter().enumerate() {
        let batch = acts.inputs[0].rows();
        if acts.inputs[l].shape() != (batch, layer.weights.rows())
            || acts.pre[l].shape() != (batch, layer.weights.cols())
        {
            return Err(Error::dim(
                "mlp_backward activations",
                format!(
                    "layer {l} shaped for {}->{}",
                    layer.weights.rows(),
                    layer.weights.cols()
                ),
                format!("{:?} / {:?}", acts.inputs[l].shape(), acts.pre[l].shape()),
            ));
        }
    }
    if d_out.shape() != acts.output.shape() {
        return Err(Error::dim(
            "mlp_backward upstream gradient",
            format!("{:?}", acts.output.shape()),
            format!("{:?}", d_out.shape()),
        ));
    }
    Ok(())
}

/// Per-layer `dL/dz` for every row, plus `dL/dx`. Rows never interact, so
/// row `i` of every delta depends only on row `i` of `d_out`.
pub(crate) fn backprop_deltas(
    params: &ModelParams,
    acts: &Activations,
    d_out: &DenseMatrix,
) -> Result<(Vec<DenseMatrix>, DenseMatrix)> {
    check_activations(params, acts, d_out)?;
    let spec = &params.spec;
    let n_layers = params.layers.len();

    let mut delta = match spec.output_activation {
        OutputActivation::Identity => d_out.clone(),
        OutputActivation::Sigmoid => {
            let s = &acts.output;
            let mut g = d_out.clone();
            for (gv, sv) in g.as_mut_slice().iter_mut().zip(s.as_slice()) {
                *gv *= sv * (1.0 - sv);
            }
            g
        }
        OutputActivation::Softmax => {
            let s = &acts.output;
            let mut g = d_out.clone();
            for r in 0..g.rows() {
                let srow = s.row(r);
                let dot: f64 = g.row(r).iter().zip(srow).map(|(a, b)| a * b).sum();
                for (gv, sv) in g.row_mut(r).iter_mut().zip(srow) {
                    *gv = sv * (*gv - dot);
                }
            }
            g
        }
    };

    let mut deltas = vec![DenseMatrix::zeros(0, 0); n_layers];
    for l in (0..n_layers).rev() {
        let upstream = delta.matmul_t(&params.layers[l].weights)?;
        deltas[l] = delta;
        delta = if l > 0 {
            let a = &acts.inputs[l];
            let z = &acts.pre[l - 1];
            let mut g = upstream;
            match spec.hidden_activation {
                Activation::Relu => {
                    for (gv, zv) in g.as_mut_slice().iter_mut().zip(z.as_slice()) {
                        if *zv <= 0.0 {
                            *gv = 0.0;
                        }
                    }
                }
                Activation::Sigmoid => {
                    for (gv, av) in g.as_mut_slice().iter_mut().zip(a.as_slice()) {
                        *gv *= av * (1.0 - av);
                    }
                }
                Activation::Tanh => {
                    for (gv, av) in g.as_mut_slice().iter_mut().zip(a.as_slice()) {
                        *gv *= 1.0 - av * av;
                    }
                }
            }
            g
        } else {
            upstream
        };
    }
    Ok((deltas, delta))
}

/// Gradients of a loss whose derivative w.r.t. the network output is
/// `d_out`, summed over the batch rows in row order.
pub fn mlp_backward(
    params: &ModelParams,
    acts: &Activations,
    d_out: &DenseMatrix,
) -> Result<(ModelParams, DenseMatrix)> {
    let (deltas, d_in) = backprop_deltas(params, acts, d_out)?;
    let layers = deltas
        .iter()
        .zip(&acts.inputs)
        .map(|(delta, input)| {
            Ok(DenseLayer {
                weights: input.t_matmul(delta)?,
                bias: delta.col_sums(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((
        ModelParams {
            spec: params.spec.clone(),
            layers,
        },
        d_in,
    ))
}

/// One gradient per row: outer products of each row's layer input and delta.
pub(crate) fn per_row_grads(params: &ModelParams, acts: &Activations, deltas: &[DenseMatrix]) -> Vec<ModelParams> {
    let batch = acts.inputs[0].rows();
    (0..batch)
        .map(|i| {
            let layers = deltas
                .iter()
                .zip(&acts.inputs)
                .map(|(delta, input)| {
                    let a = input.row(i);
                    let d = delta.row(i);
                    let mut w = DenseMatrix::zeros(a.len(), d.len());
                    for (p, &av) in a.iter().enumerate() {
                        for (o, &dv) in w.row_mut(p).iter_mut().zip(d) {
                            *o = av * dv;
                        }
                    }
                    DenseLayer {
                        weights: w,
                        bias: d.to_vec(),
                    }
                })
                .collect();
            ModelParams {
                spec: params.spec.clone(),
                layers,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_for;

    fn linear(w: f64, b: f64) -> ModelParams {
        let spec = MlpSpec::new(vec![1, 1], Activation::Relu, OutputActivation::Identity).unwrap();
        ModelParams::from_layers(
            spec,
            vec![DenseLayer {
                weights: DenseMatrix::from_vec(1, 1, vec![w]).unwrap(),
                bias: vec![b],
            }],
        )
        .unwrap()
    }

    #[test]
    fn single_affine_layer() {
        let p = linear(2.0, 1.0);
        let x = DenseMatrix::from_vec(1, 1, vec![3.0]).unwrap();
        assert_eq!(predict(&p, &x).unwrap().as_slice(), &[7.0]);
    }

    #[test]
    fn zero_net_outputs_zero() {
        let spec = MlpSpec::relu(4, &[8, 8], 3, OutputActivation::Identity).unwrap();
        let x = DenseMatrix::filled(5, 4, 1.7);
        let out = predict(&spec.zeros(), &x).unwrap();
        assert!(out.as_slice().iter().all(|&v| v == 0.0));
        assert_eq!(out.shape(), (5, 3));
    }

    #[test]
    fn two_two_one_matches_straight_line_evaluation() {
        let spec = MlpSpec::new(vec![2, 2, 1], Activation::Tanh, OutputActivation::Sigmoid).unwrap();
        let (w1, b1) = ([[0.1, -0.2], [0.3, 0.4]], [0.05, -0.05]);
        let (w2, b2) = ([0.7, -0.6], 0.2);
        let params = ModelParams::from_layers(
            spec,
            vec![
                DenseLayer {
                    weights: DenseMatrix::from_rows(&w1).unwrap(),
                    bias: b1.to_vec(),
                },
                DenseLayer {
                    weights: DenseMatrix::from_vec(2, 1, w2.to_vec()).unwrap(),
                    bias: vec![b2],
                },
            ],
        )
        .unwrap();
        let xs = [[0.5, -1.5], [2.0, 0.25]];
        let out = predict(&params, &DenseMatrix::from_rows(&xs).unwrap()).unwrap();
        for (i, x) in xs.iter().enumerate() {
            let h0 = (x[0] * w1[0][0] + x[1] * w1[1][0] + b1[0]).tanh();
            let h1 = (x[0] * w1[0][1] + x[1] * w1[1][1] + b1[1]).tanh();
            let z = h0 * w2[0] + h1 * w2[1] + b2;
            let expected = 1.0 / (1.0 + (-z).exp());
            assert!((out.get(i, 0) - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn forward_rejects_wrong_width() {
        let spec = MlpSpec::relu(3, &[4], 1, OutputActivation::Identity).unwrap();
        let p = spec.zeros();
        assert!(matches!(
            mlp_forward(&p, &DenseMatrix::zeros(2, 2)),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn linear_backward_pattern() {
        let p = linear(2.0, 0.0);
        let x = DenseMatrix::from_vec(2, 1, vec![3.0, -1.0]).unwrap();
        let acts = mlp_forward(&p, &x).unwrap();
        let ones = DenseMatrix::filled(2, 1, 1.0);
        let (g, d_in) = mlp_backward(&p, &acts, &ones).unwrap();
        assert_eq!(g.layers()[0].weights.as_slice(), &[2.0]);
        assert_eq!(g.layers()[0].bias, vec![2.0]);
        assert_eq!(d_in.as_slice(), &[2.0, 2.0]);
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let spec = MlpSpec::relu(3, &[5], 2, OutputActivation::Softmax).unwrap();
        let p = spec.init(&mut rng_for(1, 0));
        let x = DenseMatrix::filled(4, 3, 0.3);
        let acts = mlp_forward(&p, &x).unwrap();
        let (g, d_in) = mlp_backward(&p, &acts, &DenseMatrix::zeros(4, 2)).unwrap();
        assert!(g.values().all(|&v| v == 0.0));
        assert!(d_in.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn stale_activations_rejected() {
        let spec = MlpSpec::relu(3, &[5], 2, OutputActivation::Identity).unwrap();
        let other = MlpSpec::relu(3, &[6], 2, OutputActivation::Identity).unwrap();
        let x = DenseMatrix::filled(4, 3, 0.3);
        let acts = mlp_forward(&other.zeros(), &x).unwrap();
        assert!(mlp_backward(&spec.zeros(), &acts, &DenseMatrix::zeros(4, 2)).is_err());
    }

    #[test]
    fn flat_roundtrip() {
        let spec = MlpSpec::relu(3, &[4], 2, OutputActivation::Identity).unwrap();
        let p = spec.init(&mut rng_for(3, 0));
        let flat = p.to_flat();
        assert_eq!(flat.len(), spec.num_params());
        assert_eq!(ModelParams::from_flat(&spec, &flat).unwrap(), p);
    }

    #[test]
    fn init_respects_glorot_limit() {
        let spec = MlpSpec::relu(10, &[20], 5, OutputActivation::Identity).unwrap();
        let p = spec.init(&mut rng_for(9, 0));
        let lim0 = (6.0f64 / 30.0).sqrt();
        assert!(p.layers()[0].weights.as_slice().iter().all(|v| v.abs() <= lim0));
        assert!(p.layers()[0].bias.iter().all(|&b| b == 0.0));
        assert_eq!(p, spec.init(&mut rng_for(9, 0)));
    }
}
