//! Dense multilayer perceptrons with hand-derived reverse-mode gradients.
//!
//! Parameters live outside the network description in a flat [`ParamVector`].
//! Layer `l` occupies a contiguous block: its `fan_out × fan_in` weight matrix
//! (row-major) followed by its `fan_out` biases. Hidden layers apply the
//! activation; the output layer is linear.
//!
//! Besides the usual parameter gradient, [`MlpSpec::input_grad_penalty`]
//! differentiates `‖∂y_k/∂x‖²` with respect to the parameters. That quantity
//! is computed by reverse-mode differentiation of the input-gradient pass
//! itself (exact double backprop), which needs the activation's second
//! derivative.

use std::ops::{Deref, DerefMut};

use rand::Rng;

use super::matrix::{acc_at_b, mul_a_b, mul_a_bt, Matrix};
use crate::binio::{ByteReader, ByteWriter};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    pub fn tag(self) -> u8 {
        match self {
            Activation::Tanh => 0,
            Activation::Relu => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Activation::Tanh),
            1 => Some(Activation::Relu),
            _ => None,
        }
    }

    #[inline]
    fn apply(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => a.tanh(),
            Activation::Relu => a.max(0.0),
        }
    }

    /// σ'(a), written in terms of h = σ(a).
    #[inline]
    fn deriv(self, h: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - h * h,
            Activation::Relu => {
                if h > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// σ''(a), written in terms of h = σ(a).
    #[inline]
    fn second_deriv(self, h: f64) -> f64 {
        match self {
            Activation::Tanh => -2.0 * h * (1.0 - h * h),
            Activation::Relu => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpSpec {
    widths: Vec<usize>,
    activation: Activation,
}

/// Flat parameter storage for one network.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamVector(pub Vec<f64>);

impl ParamVector {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for ParamVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for ParamVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for ParamVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// Post-activation values of every layer for one batch; `acts[0]` is the input.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    acts: Vec<Matrix>,
}

impl ForwardCache {
    pub fn output(&self) -> &Matrix {
        self.acts.last().expect("cache holds at least the input")
    }

    pub fn into_output(mut self) -> Matrix {
        self.acts.pop().expect("cache holds at least the input")
    }

    pub fn batch_size(&self) -> usize {
        self.acts[0].rows
    }
}

impl MlpSpec {
    pub fn new(widths: Vec<usize>, activation: Activation) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::contract("an MLP needs at least two layer widths"));
        }
        if widths.iter().any(|&w| w == 0) {
            return Err(Error::contract("layer widths must be positive"));
        }
        Ok(Self { widths, activation })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().expect("validated non-empty")
    }

    pub fn num_layers(&self) -> usize {
        self.widths.len() - 1
    }

    /// `(fan_in, fan_out)` of layer `l` (0-based).
    pub fn layer_shape(&self, l: usize) -> (usize, usize) {
        (self.widths[l], self.widths[l + 1])
    }

    fn layer_offset(&self, l: usize) -> usize {
        (0..l)
            .map(|i| {
                let (fi, fo) = self.layer_shape(i);
                fi * fo + fo
            })
            .sum()
    }

    pub fn weight_range(&self, l: usize) -> std::ops::Range<usize> {
        let start = self.layer_offset(l);
        let (fi, fo) = self.layer_shape(l);
        start..start + fi * fo
    }

    pub fn bias_range(&self, l: usize) -> std::ops::Range<usize> {
        let w = self.weight_range(l);
        let (_, fo) = self.layer_shape(l);
        w.end..w.end + fo
    }

    pub fn param_count(&self) -> usize {
        self.layer_offset(self.num_layers())
    }

    pub fn zero_params(&self) -> ParamVector {
        ParamVector::zeros(self.param_count())
    }

    /// Weights uniform in ±sqrt(6/(fan_in+fan_out)), biases zero.
    pub fn init_params<R: Rng + ?Sized>(&self, rng: &mut R) -> ParamVector {
        self.init_params_with_output_gain(rng, 1.0)
    }

    /// Like [`init_params`](Self::init_params) with the output layer's weights
    /// multiplied by `gain`.
    pub fn init_params_with_output_gain<R: Rng + ?Sized>(&self, rng: &mut R, gain: f64) -> ParamVector {
        let mut p = self.zero_params();
        let last = self.num_layers() - 1;
        for l in 0..self.num_layers() {
            let (fi, fo) = self.layer_shape(l);
            let bound = (6.0 / (fi + fo) as f64).sqrt();
            let g = if l == last { gain } else { 1.0 };
            for w in &mut p[self.weight_range(l)] {
                *w = g * rng.gen_range(-bound..=bound);
            }
        }
        p
    }

    fn check_params(&self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::contract(format!(
                "parameter length {} does not match spec ({})",
                params.len(),
                self.param_count()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, params: &[f64], input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.input_width() {
            return Err(Error::contract(format!(
                "input length {} does not match first layer width {}",
                input.len(),
                self.input_width()
            )));
        }
        let x = Matrix::from_vec(1, input.len(), input.to_vec());
        Ok(self.forward_batch(params, &x)?.into_output().data)
    }

    pub fn forward_batch(&self, params: &[f64], inputs: &Matrix) -> Result<ForwardCache> {
        self.check_params(params)?;
        if inputs.cols != self.input_width() {
            return Err(Error::contract(format!(
                "input width {} does not match first layer width {}",
                inputs.cols,
                self.input_width()
            )));
        }
        let n = inputs.rows;
        let mut acts = Vec::with_capacity(self.widths.len());
        acts.push(inputs.clone());
        for l in 0..self.num_layers() {
            let (fi, fo) = self.layer_shape(l);
            let w = &params[self.weight_range(l)];
            let b = &params[self.bias_range(l)];
            let mut out = Matrix::zeros(n, fo);
            mul_a_bt(&acts[l].data, w, n, fi, fo, &mut out.data);
            let hidden = l + 1 < self.num_layers();
            for row in out.data.chunks_exact_mut(fo) {
                for (v, &bias) in row.iter_mut().zip(b) {
                    *v += bias;
                    if hidden {
                        *v = self.activation.apply(*v);
                    }
                }
            }
            if out.data.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { layer: l });
            }
            acts.push(out);
        }
        Ok(ForwardCache { acts })
    }

    /// Accumulates `∂L/∂params` into `grad` given `∂L/∂outputs`, and returns
    /// `∂L/∂inputs`.
    pub fn backward(
        &self,
        params: &[f64],
        cache: &ForwardCache,
        d_out: &Matrix,
        grad: &mut [f64],
    ) -> Result<Matrix> {
        self.check_params(params)?;
        self.check_params(grad)?;
        let n = cache.batch_size();
        if d_out.rows != n || d_out.cols != self.output_width() {
            return Err(Error::contract("output gradient shape does not match the cached batch"));
        }
        let mut delta = d_out.clone();
        for l in (0..self.num_layers()).rev() {
            let (fi, fo) = self.layer_shape(l);
            if delta.data.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { layer: l });
            }
            let h_prev = &cache.acts[l];
            acc_at_b(&delta.data, &h_prev.data, n, fo, fi, &mut grad[self.weight_range(l)]);
            let gb = &mut grad[self.bias_range(l)];
            for row in delta.data.chunks_exact(fo) {
                for (g, d) in gb.iter_mut().zip(row) {
                    *g += d;
                }
            }
            let mut d_prev = Matrix::zeros(n, fi);
            mul_a_b(&delta.data, &params[self.weight_range(l)], n, fo, fi, &mut d_prev.data);
            if l > 0 {
                for (d, &h) in d_prev.data.iter_mut().zip(&h_prev.data) {
                    *d *= self.activation.deriv(h);
                }
            }
            delta = d_prev;
        }
        Ok(delta)
    }

    /// Value and parameter gradient of a scalar loss defined on the batch
    /// outputs. `loss` returns the loss value and `∂loss/∂outputs`.
    pub fn grad_params<F>(&self, params: &[f64], inputs: &Matrix, loss: F) -> Result<(f64, ParamVector)>
    where
        F: FnOnce(&Matrix) -> (f64, Matrix),
    {
        let cache = self.forward_batch(params, inputs)?;
        let (value, d_out) = loss(cache.output());
        if !value.is_finite() {
            return Err(Error::NonFinite { layer: self.num_layers() });
        }
        let mut grad = self.zero_params();
        self.backward(params, &cache, &d_out, &mut grad)?;
        Ok((value, grad))
    }

    /// `∂y[selector]/∂x` for a single input.
    pub fn grad_input(&self, params: &[f64], input: &[f64], selector: usize) -> Result<Vec<f64>> {
        let x = Matrix::from_vec(1, input.len(), input.to_vec());
        Ok(self.grad_input_batch(params, &x, selector)?.data)
    }

    pub fn grad_input_batch(&self, params: &[f64], inputs: &Matrix, selector: usize) -> Result<Matrix> {
        if selector >= self.output_width() {
            return Err(Error::contract(format!(
                "output selector {selector} out of range for width {}",
                self.output_width()
            )));
        }
        let cache = self.forward_batch(params, inputs)?;
        let mut d_out = Matrix::zeros(inputs.rows, self.output_width());
        for i in 0..inputs.rows {
            d_out.row_mut(i)[selector] = 1.0;
        }
        let mut scratch = self.zero_params();
        self.backward(params, &cache, &d_out, &mut scratch)
    }

    /// `Σ_i c_i ‖∂y_i[selector]/∂x_i‖²` and its gradient with respect to the
    /// parameters.
    pub fn input_grad_penalty(
        &self,
        params: &[f64],
        inputs: &Matrix,
        selector: usize,
        coeffs: &[f64],
    ) -> Result<(f64, ParamVector)> {
        if selector >= self.output_width() {
            return Err(Error::contract("output selector out of range"));
        }
        if coeffs.len() != inputs.rows {
            return Err(Error::contract("one penalty coefficient per input row is required"));
        }
        let cache = self.forward_batch(params, inputs)?;
        let n = inputs.rows;
        let nl = self.num_layers();
        let act = self.activation;

        // Input-gradient pass. deltas[l] = ∂y/∂a_{l+1} (n × fan_out of layer l),
        // gs[l] = ∂y/∂h_l (n × widths[l]) for l < nl.
        let mut deltas: Vec<Matrix> = vec![Matrix::zeros(0, 0); nl];
        let mut gs: Vec<Matrix> = vec![Matrix::zeros(0, 0); nl];
        let mut delta = Matrix::zeros(n, self.output_width());
        for i in 0..n {
            delta.row_mut(i)[selector] = 1.0;
        }
        for l in (0..nl).rev() {
            let (fi, fo) = self.layer_shape(l);
            let mut g = Matrix::zeros(n, fi);
            mul_a_b(&delta.data, &params[self.weight_range(l)], n, fo, fi, &mut g.data);
            deltas[l] = delta;
            if l > 0 {
                let mut next = g.clone();
                for (d, &h) in next.data.iter_mut().zip(&cache.acts[l].data) {
                    *d *= act.deriv(h);
                }
                delta = next;
            } else {
                delta = Matrix::zeros(0, 0);
            }
            gs[l] = g;
        }

        let mut value = 0.0;
        for (row, &c) in gs[0].iter_rows().zip(coeffs) {
            value += c * row.iter().map(|v| v * v).sum::<f64>();
        }
        if !value.is_finite() {
            return Err(Error::NonFinite { layer: 0 });
        }

        let mut grad = self.zero_params();
        // Adjoint of g_0.
        let mut g_bar = gs[0].clone();
        for (i, row) in g_bar.data.chunks_exact_mut(self.input_width()).enumerate() {
            for v in row {
                *v *= 2.0 * coeffs[i];
            }
        }
        // Adjoints of pre-activations a_l (l = 1..nl-1, hidden layers) collected
        // from the σ' factors of the input-gradient pass.
        let mut a_bar: Vec<Matrix> = (0..nl).map(|l| Matrix::zeros(n, self.widths[l])).collect();
        for l in 0..nl {
            // g_l = delta_l · W_l
            let (fi, fo) = self.layer_shape(l);
            acc_at_b(&deltas[l].data, &g_bar.data, n, fo, fi, &mut grad[self.weight_range(l)]);
            if l + 1 == nl {
                break;
            }
            let mut delta_bar = Matrix::zeros(n, fo);
            mul_a_bt(&g_bar.data, &params[self.weight_range(l)], n, fi, fo, &mut delta_bar.data);
            // delta_l = g_{l+1} ⊙ σ'(a_{l+1})
            let h = &cache.acts[l + 1];
            let g_next = &gs[l + 1];
            let ab = &mut a_bar[l + 1];
            let mut next_g_bar = Matrix::zeros(n, fo);
            for idx in 0..n * fo {
                let hv = h.data[idx];
                next_g_bar.data[idx] = delta_bar.data[idx] * act.deriv(hv);
                ab.data[idx] = delta_bar.data[idx] * g_next.data[idx] * act.second_deriv(hv);
            }
            g_bar = next_g_bar;
        }

        // Push the pre-activation adjoints back through the forward pass.
        let mut h_bar: Option<Matrix> = None;
        for l in (1..nl).rev() {
            let (fi, fo) = self.layer_shape(l - 1);
            let mut r = std::mem::replace(&mut a_bar[l], Matrix::zeros(0, 0));
            if let Some(hb) = h_bar.take() {
                for ((rv, hbv), &h) in r.data.iter_mut().zip(&hb.data).zip(&cache.acts[l].data) {
                    *rv += hbv * act.deriv(h);
                }
            }
            acc_at_b(&r.data, &cache.acts[l - 1].data, n, fo, fi, &mut grad[self.weight_range(l - 1)]);
            let gb = &mut grad[self.bias_range(l - 1)];
            for row in r.data.chunks_exact(fo) {
                for (g, d) in gb.iter_mut().zip(row) {
                    *g += d;
                }
            }
            if l > 1 {
                let mut hb = Matrix::zeros(n, fi);
                mul_a_b(&r.data, &params[self.weight_range(l - 1)], n, fo, fi, &mut hb.data);
                h_bar = Some(hb);
            }
        }
        if grad.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("gradient-penalty parameter gradient is not finite".into()));
        }
        Ok((value, grad))
    }

    /// Checkpoint fragment: widths, activation tag, flat little-endian values.
    pub fn write_fragment(&self, params: &[f64], w: &mut ByteWriter) {
        w.u32(self.widths.len() as u32);
        for &width in &self.widths {
            w.u32(width as u32);
        }
        w.u8(self.activation.tag());
        w.f64s(params);
    }

    pub fn read_fragment(r: &mut ByteReader<'_>) -> Result<(MlpSpec, ParamVector)> {
        let at = r.offset();
        let count = r.u32("layer count")? as usize;
        if count > 64 {
            return Err(Error::parse(at, format!("implausible layer count {count}")));
        }
        let widths = (0..count)
            .map(|_| r.u32("layer width").map(|w| w as usize))
            .collect::<Result<Vec<_>>>()?;
        let tag_at = r.offset();
        let activation = Activation::from_tag(r.u8("activation tag")?)
            .ok_or_else(|| Error::parse(tag_at, "unknown activation tag"))?;
        let spec = MlpSpec::new(widths, activation).map_err(|e| Error::parse(at, e.to_string()))?;
        let values_at = r.offset();
        let values = r.f64s("parameters")?;
        if values.len() != spec.param_count() {
            return Err(Error::parse(values_at, "parameter count does not match widths"));
        }
        Ok((spec, ParamVector(values)))
    }
}
