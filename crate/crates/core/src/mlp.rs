//! Fully connected regression network with exact reverse-mode gradients.
//!
//! Parameters live in one flat buffer laid out layer by layer: the weight
//! matrix of layer 1 (shape `[fan_in, fan_out]`, row-major), then its bias,
//! then layer 2's weights and bias, and so on. [`Mlp::flatten`] and
//! [`Mlp::unflatten`] are therefore plain copies. Hidden layers apply the
//! configured activation; the output layer is linear.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::error::{Error, Result};
use crate::param::{check_finite, ParamVector};

/// Width of the hidden layers in the benchmark network.
pub const STANDARD_HIDDEN: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "relu" => Some(Activation::Relu),
            "tanh" => Some(Activation::Tanh),
            "identity" | "linear" => Some(Activation::Identity),
            _ => None,
        }
    }

    pub fn code(self) -> u32 {
        match self {
            Activation::Relu => 0,
            Activation::Tanh => 1,
            Activation::Identity => 2,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(Activation::Relu),
            1 => Some(Activation::Tanh),
            2 => Some(Activation::Identity),
            _ => None,
        }
    }

    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => libm::tanh(z),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `h`.
    #[inline]
    fn derivative(self, z: f64, h: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - h * h,
            Activation::Identity => 1.0,
        }
    }
}

/// Weight initialization scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    /// Weights and biases `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    FanInUniform,
    /// Weights `U(-sqrt(6/(fan_in+fan_out)), +..)`, zero biases.
    GlorotUniform,
}

impl Init {
    pub fn name(self) -> &'static str {
        match self {
            Init::FanInUniform => "fan_in_uniform",
            Init::GlorotUniform => "glorot_uniform",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "fan_in_uniform" => Some(Init::FanInUniform),
            "glorot_uniform" => Some(Init::GlorotUniform),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    dims: Vec<usize>,
    activation: Activation,
}

impl Architecture {
    /// `dims` lists layer widths from input to output; the output width must be 1.
    pub fn new(dims: Vec<usize>, activation: Activation) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::InvalidConfig("an architecture needs at least input and output widths"));
        }
        if dims.contains(&0) {
            return Err(Error::InvalidConfig("layer widths must be positive"));
        }
        if *dims.last().unwrap() != 1 {
            return Err(Error::InvalidConfig("the output layer must have width 1"));
        }
        Ok(Self { dims, activation })
    }

    /// `[2, 500] -> [500, 500] -> [500, 1]`.
    pub fn standard(activation: Activation) -> Self {
        Self::with_hidden(STANDARD_HIDDEN, activation)
    }

    /// `[2, h] -> [h, h] -> [h, 1]`.
    pub fn with_hidden(hidden: usize, activation: Activation) -> Self {
        Self::new(vec![2, hidden, hidden, 1], activation).expect("hidden width must be positive")
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn num_layers(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn param_count(&self) -> usize {
        self.dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// Flat ranges of layer `layer`'s weights and bias (0-based).
    pub fn layer_ranges(&self, layer: usize) -> (Range<usize>, Range<usize>) {
        assert!(layer < self.num_layers(), "layer {layer} out of range");
        let start: usize = self.dims[..layer + 1].windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        let (fan_in, fan_out) = (self.dims[layer], self.dims[layer + 1]);
        let w_end = start + fan_in * fan_out;
        (start..w_end, w_end..w_end + fan_out)
    }

    /// Flat range covering the output layer's weights and bias.
    pub fn head_range(&self) -> Range<usize> {
        let (w, b) = self.layer_ranges(self.num_layers() - 1);
        w.start..b.end
    }

    fn check_params(&self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::WrongParamCount { expected: self.param_count(), actual: params.len() });
        }
        Ok(())
    }

    /// Predictions for `inputs`, a row-major `[B, input_dim]` buffer.
    pub fn forward(&self, params: &[f64], inputs: &[f64], ws: &mut Workspace) -> Result<Vec<f64>> {
        self.check_params(params)?;
        self.run_forward(params, inputs, ws)?;
        Ok(ws.output().to_vec())
    }

    /// MSE loss over `batch`; writes the exact gradient into `grad`.
    pub fn loss_and_grad(&self, params: &[f64], batch: &Batch, ws: &mut Workspace, grad: &mut [f64]) -> Result<f64> {
        self.check_params(params)?;
        if grad.len() != params.len() {
            return Err(Error::DimensionMismatch { left: grad.len(), right: params.len() });
        }
        if batch.input_dim != self.input_dim() {
            return Err(Error::DimensionMismatch { left: batch.input_dim, right: self.input_dim() });
        }
        self.run_forward(params, &batch.inputs, ws)?;
        let b = batch.len();
        let loss = loss_mse(ws.output(), &batch.targets)?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLayer { layer: self.num_layers() });
        }

        let layers = self.num_layers();
        // d loss / d output pre-activation.
        let scale = 2.0 / b as f64;
        let output = ws.acts.last().expect("forward ran");
        ws.delta.clear();
        ws.delta.extend(output.iter().zip(&batch.targets).map(|(p, t)| scale * (p - t)));

        for layer in (0..layers).rev() {
            let (fan_in, fan_out) = (self.dims[layer], self.dims[layer + 1]);
            let (w_range, b_range) = self.layer_ranges(layer);
            let input: &[f64] = if layer == 0 { &batch.inputs } else { &ws.acts[layer - 1] };

            // dW = input^T . delta
            gemm(
                fan_in, b, fan_out,
                input, 1, fan_in as isize,
                &ws.delta, fan_out as isize, 1,
                0.0,
                &mut grad[w_range.clone()], fan_out as isize, 1,
            );
            let gb = &mut grad[b_range];
            gb.fill(0.0);
            for row in ws.delta.chunks_exact(fan_out) {
                for (g, d) in gb.iter_mut().zip(row) {
                    *g += d;
                }
            }

            if layer > 0 {
                // d input = delta . W^T, then through the activation.
                ws.delta_prev.resize(b * fan_in, 0.0);
                gemm(
                    b, fan_out, fan_in,
                    &ws.delta, fan_out as isize, 1,
                    &params[w_range], 1, fan_out as isize,
                    0.0,
                    &mut ws.delta_prev, fan_in as isize, 1,
                );
                let act = self.activation;
                let (z, h) = (&ws.pre[layer - 1], &ws.acts[layer - 1]);
                for ((d, &z), &h) in ws.delta_prev.iter_mut().zip(z).zip(h) {
                    *d *= act.derivative(z, h);
                }
                core::mem::swap(&mut ws.delta, &mut ws.delta_prev);
            }
        }
        check_finite(grad, "gradient")?;
        Ok(loss)
    }

    fn run_forward(&self, params: &[f64], inputs: &[f64], ws: &mut Workspace) -> Result<()> {
        let d_in = self.input_dim();
        if inputs.is_empty() || !inputs.len().is_multiple_of(d_in) {
            return Err(Error::InvalidBatch("input buffer length is not a positive multiple of the input width"));
        }
        check_finite(inputs, "inputs")?;
        let b = inputs.len() / d_in;
        let layers = self.num_layers();
        ws.prepare(layers);

        for layer in 0..layers {
            let (fan_in, fan_out) = (self.dims[layer], self.dims[layer + 1]);
            let (w_range, b_range) = self.layer_ranges(layer);
            let (before, after) = ws.acts.split_at_mut(layer);
            let input: &[f64] = if layer == 0 { inputs } else { &before[layer - 1] };
            let z = &mut ws.pre[layer];
            z.resize(b * fan_out, 0.0);
            gemm(
                b, fan_in, fan_out,
                input, fan_in as isize, 1,
                &params[w_range], fan_out as isize, 1,
                0.0,
                z, fan_out as isize, 1,
            );
            let bias = &params[b_range];
            for row in z.chunks_exact_mut(fan_out) {
                for (v, bv) in row.iter_mut().zip(bias) {
                    *v += bv;
                }
            }
            if z.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteLayer { layer: layer + 1 });
            }
            let h = &mut after[0];
            h.clear();
            if layer + 1 == layers {
                h.extend_from_slice(z);
            } else {
                let act = self.activation;
                h.extend(z.iter().map(|&v| act.apply(v)));
            }
        }
        Ok(())
    }
}

/// Scratch buffers reused across forward/backward passes.
#[derive(Debug, Default, Clone)]
pub struct Workspace {
    pre: Vec<Vec<f64>>,
    acts: Vec<Vec<f64>>,
    delta: Vec<f64>,
    delta_prev: Vec<f64>,
}

impl Workspace {
    pub fn new() -> Self {
        Self::default()
    }

    fn prepare(&mut self, layers: usize) {
        self.pre.resize_with(layers, Vec::new);
        self.acts.resize_with(layers, Vec::new);
    }

    fn output(&self) -> &[f64] {
        self.acts.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Supervised examples: row-major inputs `[B, input_dim]` and `B` targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    inputs: Vec<f64>,
    targets: Vec<f64>,
    input_dim: usize,
}

impl Batch {
    pub fn new(input_dim: usize, inputs: Vec<f64>, targets: Vec<f64>) -> Result<Self> {
        if targets.is_empty() {
            return Err(Error::InvalidBatch("a batch needs at least one example"));
        }
        if input_dim == 0 || inputs.len() != targets.len() * input_dim {
            return Err(Error::InvalidBatch("inputs and targets disagree on the batch size"));
        }
        check_finite(&inputs, "batch inputs")?;
        check_finite(&targets, "batch targets")?;
        Ok(Self { inputs, targets, input_dim })
    }

    pub fn from_points(points: &[[f64; 2]], targets: &[f64]) -> Result<Self> {
        Self::new(2, points.iter().flatten().copied().collect(), targets.to_vec())
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn inputs(&self) -> &[f64] {
        &self.inputs
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }
}

/// Mean squared error.
pub fn loss_mse(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    if predictions.len() != targets.len() {
        return Err(Error::DimensionMismatch { left: predictions.len(), right: targets.len() });
    }
    if targets.is_empty() {
        return Err(Error::Empty("loss over zero examples"));
    }
    let sum: f64 = predictions.iter().zip(targets).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(sum / targets.len() as f64)
}

/// A network: an [`Architecture`] together with its flat parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    arch: Architecture,
    params: ParamVector,
}

impl Mlp {
    pub fn zeros(arch: Architecture) -> Self {
        let params = ParamVector::zeros(arch.param_count());
        Self { arch, params }
    }

    pub fn init<R: Rng + ?Sized>(arch: Architecture, init: Init, rng: &mut R) -> Self {
        let mut values = vec![0.0; arch.param_count()];
        for layer in 0..arch.num_layers() {
            let (fan_in, fan_out) = (arch.dims[layer], arch.dims[layer + 1]);
            let (w_range, b_range) = arch.layer_ranges(layer);
            let (w_bound, b_bound) = match init {
                Init::FanInUniform => {
                    let a = 1.0 / libm::sqrt(fan_in as f64);
                    (a, a)
                }
                Init::GlorotUniform => (libm::sqrt(6.0 / (fan_in + fan_out) as f64), 0.0),
            };
            let w = Uniform::new_inclusive(-w_bound, w_bound).expect("finite bound");
            for v in &mut values[w_range] {
                *v = w.sample(rng);
            }
            if b_bound > 0.0 {
                let b = Uniform::new_inclusive(-b_bound, b_bound).expect("finite bound");
                for v in &mut values[b_range] {
                    *v = b.sample(rng);
                }
            }
        }
        Self { arch, params: ParamVector::from_vec_unchecked(values) }
    }

    pub fn unflatten(arch: Architecture, params: ParamVector) -> Result<Self> {
        arch.check_params(params.as_slice())?;
        Ok(Self { arch, params })
    }

    pub fn flatten(&self) -> ParamVector {
        self.params.clone()
    }

    pub fn into_params(self) -> ParamVector {
        self.params
    }

    pub fn params(&self) -> &ParamVector {
        &self.params
    }

    pub fn set_params(&mut self, params: ParamVector) -> Result<()> {
        self.arch.check_params(params.as_slice())?;
        self.params = params;
        Ok(())
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn weights(&self, layer: usize) -> &[f64] {
        &self.params.as_slice()[self.arch.layer_ranges(layer).0]
    }

    pub fn bias(&self, layer: usize) -> &[f64] {
        &self.params.as_slice()[self.arch.layer_ranges(layer).1]
    }

    pub fn forward(&self, inputs: &[f64]) -> Result<Vec<f64>> {
        self.arch.forward(self.params.as_slice(), inputs, &mut Workspace::new())
    }

    /// Loss and exact gradient of the MSE over `batch`.
    pub fn backward(&self, batch: &Batch) -> Result<(f64, ParamVector)> {
        let mut grad = vec![0.0; self.arch.param_count()];
        let loss = self.arch.loss_and_grad(self.params.as_slice(), batch, &mut Workspace::new(), &mut grad)?;
        Ok((loss, ParamVector::from_vec_unchecked(grad)))
    }
}

/// Safe front for `matrixmultiply::dgemm`: `C = A.B + beta C` with explicit
/// strides (row stride, column stride) for each operand.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize, k: usize, n: usize,
    a: &[f64], rsa: isize, csa: isize,
    b: &[f64], rsb: isize, csb: isize,
    beta: f64,
    c: &mut [f64], rsc: isize, csc: isize,
) {
    let extent = |rows: usize, cols: usize, rs: isize, cs: isize| {
        if rows == 0 || cols == 0 {
            0
        } else {
            (rows - 1) * rs as usize + (cols - 1) * cs as usize + 1
        }
    };
    assert!(a.len() >= extent(m, k, rsa, csa));
    assert!(b.len() >= extent(k, n, rsb, csb));
    assert!(c.len() >= extent(m, n, rsc, csc));
    // SAFETY: the asserts above keep every strided access inside its slice,
    // and `c` is borrowed mutably so it cannot alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m, k, n, 1.0,
            a.as_ptr(), rsa, csa,
            b.as_ptr(), rsb, csb,
            beta,
            c.as_mut_ptr(), rsc, csc,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Mlp {
        // 2 -> 2 -> 2 -> 1 with hand-set weights.
        let arch = Architecture::new(vec![2, 2, 2, 1], Activation::Tanh).unwrap();
        #[rustfmt::skip]
        let params = vec![
            // W1 [2,2] row-major, b1
            0.5, -0.25,
            1.0, 0.75,
            0.1, -0.2,
            // W2, b2
            1.5, -1.0,
            0.5, 2.0,
            0.0, 0.3,
            // W3 [2,1], b3
            -0.7,
            1.2,
            0.05,
        ];
        Mlp::unflatten(arch, ParamVector::new(params).unwrap()).unwrap()
    }

    #[test]
    fn standard_param_count() {
        assert_eq!(Architecture::standard(Activation::Relu).param_count(), 252_501);
        assert_eq!(Architecture::standard(Activation::Relu).head_range().len(), 501);
    }

    #[test]
    fn hand_computed_forward() {
        // x = (0.3, -0.4)
        let z1 = [0.3 * 0.5 - 0.4 * 1.0 + 0.1, 0.3 * -0.25 - 0.4 * 0.75 - 0.2];
        let h1 = [libm::tanh(z1[0]), libm::tanh(z1[1])];
        let z2 = [h1[0] * 1.5 + h1[1] * 0.5, -h1[0] + h1[1] * 2.0 + 0.3];
        let h2 = [libm::tanh(z2[0]), libm::tanh(z2[1])];
        let y = h2[0] * -0.7 + h2[1] * 1.2 + 0.05;
        // Worked by hand: z1 = (-0.15, -0.575), h1 = (-0.14889, -0.51902),
        // z2 = (-0.48284, -0.58916), h2 = (-0.44851, -0.52929), y = -0.27119.
        assert!((y - -0.27119).abs() < 1e-5);
        let out = tiny().forward(&[0.3, -0.4]).unwrap();
        assert!((out[0] - y).abs() < 1e-15);
    }

    #[test]
    fn zero_network_predicts_zero() {
        let m = Mlp::zeros(Architecture::with_hidden(8, Activation::Relu));
        let out = m.forward(&[0.3, -0.2, 5.0, 1.0]).unwrap();
        assert_eq!(out, vec![0.0, 0.0]);
    }

    #[test]
    fn duplicated_rows_give_identical_outputs() {
        let out = tiny().forward(&[0.3, -0.4, 0.3, -0.4]).unwrap();
        assert_eq!(out[0].to_bits(), out[1].to_bits());
    }

    #[test]
    fn non_finite_input_rejected() {
        assert!(matches!(tiny().forward(&[f64::NAN, 0.0]), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn overflow_names_layer() {
        let arch = Architecture::new(vec![2, 2, 1], Activation::Identity).unwrap();
        let m = Mlp::unflatten(arch, ParamVector::new(vec![1e300; 9]).unwrap()).unwrap();
        let batch = Batch::from_points(&[[1e10, 1e10]], &[0.0]).unwrap();
        assert_eq!(m.backward(&batch).unwrap_err(), Error::NonFiniteLayer { layer: 1 });
    }

    #[test]
    fn loss_examples() {
        assert_eq!(loss_mse(&[0.5, 0.25], &[0.5, 0.25]).unwrap(), 0.0);
        assert_eq!(loss_mse(&[1.0, 1.0], &[0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(loss_mse(&[2.0, 0.0], &[0.0, 0.0]).unwrap(), 2.0);
        assert!(loss_mse(&[], &[]).is_err());
        assert!(loss_mse(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn gradient_vanishes_at_exact_fit() {
        let m = tiny();
        let x = [[0.3, -0.4], [0.9, 0.1]];
        let preds = m.forward(&[0.3, -0.4, 0.9, 0.1]).unwrap();
        let (loss, grad) = m.backward(&Batch::from_points(&x, &preds).unwrap()).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.as_slice().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn linear_network_bias_gradient_scales_with_residual() {
        // Identity activations: d loss / d b_out = 2 * mean(residual).
        let arch = Architecture::new(vec![2, 3, 3, 1], Activation::Identity).unwrap();
        let mut rng = crate::rng::stream(3, 0);
        let m = Mlp::init(arch.clone(), Init::FanInUniform, &mut rng);
        let x = [[0.1, 0.2], [-0.5, 0.7], [0.9, -0.3]];
        let preds = m.forward(&[0.1, 0.2, -0.5, 0.7, 0.9, -0.3]).unwrap();
        let shift = |s: f64| preds.iter().map(|p| p - s).collect::<Vec<_>>();
        let bias_idx = arch.param_count() - 1;
        let (_, g1) = m.backward(&Batch::from_points(&x, &shift(0.25)).unwrap()).unwrap();
        let (_, g2) = m.backward(&Batch::from_points(&x, &shift(0.5)).unwrap()).unwrap();
        assert!((g1.as_slice()[bias_idx] - 0.5).abs() < 1e-14);
        assert!((g2.as_slice()[bias_idx] - 2.0 * g1.as_slice()[bias_idx]).abs() < 1e-14);
    }

    #[test]
    fn unflatten_wrong_dimension() {
        let arch = Architecture::standard(Activation::Relu);
        assert_eq!(
            Mlp::unflatten(arch, ParamVector::zeros(10)).unwrap_err(),
            Error::WrongParamCount { expected: 252_501, actual: 10 }
        );
    }

    #[test]
    fn flatten_of_zero_model_and_locality() {
        let arch = Architecture::standard(Activation::Relu);
        let m = Mlp::zeros(arch.clone());
        let flat = m.flatten();
        assert_eq!(flat.len(), 252_501);
        assert!(flat.as_slice().iter().all(|&v| v == 0.0));

        let mut values = flat.into_vec();
        values[arch.layer_ranges(1).0.start + 7] = 1.0;
        let m2 = Mlp::unflatten(arch, ParamVector::new(values).unwrap()).unwrap();
        let diff = m2.flatten().as_slice().iter().zip(m.flatten().as_slice()).filter(|(a, b)| a != b).count();
        assert_eq!(diff, 1);
        assert_eq!(m2.weights(1)[7], 1.0);
    }

    #[test]
    fn batch_validation() {
        assert!(Batch::new(2, vec![], vec![]).is_err());
        assert!(Batch::new(2, vec![1.0, 2.0, 3.0], vec![0.0]).is_err());
        assert!(Batch::new(2, vec![1.0, f64::NAN], vec![0.0]).is_err());
    }
}
