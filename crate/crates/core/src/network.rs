//! Feed-forward frame classifier: sigmoid hidden layers, softmax output.
//!
//! Weights are stored `out x in`, row-major. The model file is
//!
//! ```text
//! KDAM1\n
//! {"version":1,"arch":{"input_dim":..,"hidden":[..],"output_dim":..}}\n
//! for each layer: weights (out*in f64 LE, row-major), then bias (out f64 LE)
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::numerics::{axpy, dot, sigmoid, softmax_in_place, Matrix, RngStream};

pub const MODEL_MAGIC: &str = "KDAM1";
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
}

impl Architecture {
    pub fn new(input_dim: usize, hidden: Vec<usize>, output_dim: usize) -> Self {
        Self {
            input_dim,
            hidden,
            output_dim,
        }
    }

    /// `[input, hidden.., output]`
    pub fn widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden.len() + 2);
        w.push(self.input_dim);
        w.extend_from_slice(&self.hidden);
        w.push(self.output_dim);
        w
    }

    pub fn num_layers(&self) -> usize {
        self.hidden.len() + 1
    }

    pub fn num_params(&self) -> usize {
        self.widths().windows(2).map(|w| w[1] * (w[0] + 1)).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths().contains(&0) {
            return Err(Error::validation(format!(
                "architecture {:?} has a zero-width layer",
                self.widths()
            )));
        }
        Ok(())
    }
}

/// One affine layer; also used to hold gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `out x in`
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl Layer {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weights: Matrix::zeros(outputs, inputs),
            bias: vec![0.0; outputs],
        }
    }

    /// `x W^T + b`
    fn affine(&self, x: &Matrix) -> Matrix {
        let out_dim = self.bias.len();
        let mut y = Matrix::zeros(x.rows(), out_dim);
        for r in 0..x.rows() {
            let xr = x.row(r);
            let yr = y.row_mut(r);
            for (o, yo) in yr.iter_mut().enumerate() {
                *yo = dot(xr, self.weights.row(o)) + self.bias[o];
            }
        }
        y
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub arch: Architecture,
    pub layers: Vec<Layer>,
}

/// Gradients have the same shape as the parameters.
pub type Gradients = Vec<Layer>;

/// Intermediate values of a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// `activations[0]` is the input batch; `activations[l + 1]` the output
    /// of hidden layer `l`.
    pub activations: Vec<Matrix>,
    /// Affine outputs of every layer; the last entry holds the logits.
    pub pre_activations: Vec<Matrix>,
    /// Softmax of the logits, `batch x S`.
    pub posteriors: Matrix,
}

impl ForwardTrace {
    pub fn logits(&self) -> &Matrix {
        self.pre_activations.last().expect("at least one layer")
    }
}

impl ModelParams {
    /// Weights `~ N(0, 1/fan_in)`, biases zero.
    pub fn init(arch: &Architecture, rng: &mut RngStream) -> Result<Self> {
        arch.validate()?;
        let layers = arch
            .widths()
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let std = (1.0 / fan_in as f64).sqrt();
                let mut layer = Layer::zeros(fan_in, fan_out);
                for v in layer.weights.data_mut() {
                    *v = std * rng.next_gaussian();
                }
                layer
            })
            .collect();
        Ok(Self {
            arch: arch.clone(),
            layers,
        })
    }

    pub fn zeros(arch: &Architecture) -> Result<Self> {
        arch.validate()?;
        let layers = arch
            .widths()
            .windows(2)
            .map(|w| Layer::zeros(w[0], w[1]))
            .collect();
        Ok(Self {
            arch: arch.clone(),
            layers,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.arch.output_dim
    }

    /// Full forward pass keeping every intermediate value for [`backward`](Self::backward).
    pub fn forward(&self, batch: &Matrix) -> Result<ForwardTrace> {
        self.forward_tempered(batch, 1.0)
    }

    /// Forward pass with the logits divided by `temperature` before the softmax.
    pub fn forward_tempered(&self, batch: &Matrix, temperature: f64) -> Result<ForwardTrace> {
        self.check_input(batch)?;
        if !(temperature.is_finite() && temperature > 0.0) {
            return Err(Error::usage(format!(
                "temperature must be positive, got {temperature}"
            )));
        }
        let n = self.layers.len();
        let mut activations = Vec::with_capacity(n);
        let mut pre_activations = Vec::with_capacity(n);
        activations.push(batch.clone());
        for (l, layer) in self.layers.iter().enumerate() {
            let z = layer.affine(activations.last().expect("input present"));
            if l + 1 < n {
                let mut a = z.clone();
                for v in a.data_mut() {
                    *v = sigmoid(*v);
                }
                activations.push(a);
            }
            pre_activations.push(z);
        }
        let posteriors = posteriors_from_logits(pre_activations.last().expect("layer"), temperature)?;
        Ok(ForwardTrace {
            activations,
            pre_activations,
            posteriors,
        })
    }

    /// Posteriors only, without keeping the trace.
    pub fn posteriors(&self, batch: &Matrix, temperature: f64) -> Result<Matrix> {
        self.check_input(batch)?;
        if !(temperature.is_finite() && temperature > 0.0) {
            return Err(Error::usage(format!(
                "temperature must be positive, got {temperature}"
            )));
        }
        let n = self.layers.len();
        let mut a = self.layers[0].affine(batch);
        for layer in &self.layers[1..] {
            for v in a.data_mut() {
                *v = sigmoid(*v);
            }
            a = layer.affine(&a);
        }
        debug_assert_eq!(a.cols(), self.layers[n - 1].bias.len());
        posteriors_from_logits(&a, temperature)
    }

    fn check_input(&self, batch: &Matrix) -> Result<()> {
        if batch.cols() != self.arch.input_dim {
            return Err(Error::usage(format!(
                "batch has {} columns, model expects {}",
                batch.cols(),
                self.arch.input_dim
            )));
        }
        Ok(())
    }

    /// Reverse-mode gradients of `sum(logits .* grad_logits)` with respect to
    /// every weight and bias.
    pub fn backward(&self, trace: &ForwardTrace, grad_logits: &Matrix) -> Result<Gradients> {
        let batch = trace.activations[0].rows();
        if grad_logits.rows() != batch || grad_logits.cols() != self.arch.output_dim {
            return Err(Error::usage(format!(
                "grad_logits is {}x{}, expected {batch}x{}",
                grad_logits.rows(),
                grad_logits.cols(),
                self.arch.output_dim
            )));
        }
        let mut grads: Gradients = self
            .layers
            .iter()
            .map(|l| Layer::zeros(l.weights.cols(), l.weights.rows()))
            .collect();
        let mut delta = grad_logits.clone();
        for l in (0..self.layers.len()).rev() {
            let input = &trace.activations[l];
            let grad = &mut grads[l];
            // dW[o] = sum_b delta[b, o] * input[b]; rows accumulate in batch order
            for b in 0..batch {
                let d_row = delta.row(b);
                let a_row = input.row(b);
                for (o, &d) in d_row.iter().enumerate() {
                    if d != 0.0 {
                        axpy(d, a_row, grad.weights.row_mut(o));
                    }
                    grad.bias[o] += d;
                }
            }
            if l == 0 {
                break;
            }
            // delta_prev = (delta W) .* a (1 - a)
            let weights = &self.layers[l].weights;
            let mut prev = Matrix::zeros(batch, weights.cols());
            for b in 0..batch {
                let d_row = delta.row(b);
                let p_row = prev.row_mut(b);
                for (o, &d) in d_row.iter().enumerate() {
                    if d != 0.0 {
                        axpy(d, weights.row(o), p_row);
                    }
                }
                for (p, &a) in p_row.iter_mut().zip(input.row(b)) {
                    *p *= a * (1.0 - a);
                }
            }
            delta = prev;
        }
        Ok(grads)
    }

    /// `p <- p - lr * g` for every parameter.
    pub fn sgd_step(&mut self, grads: &[Layer], lr: f64) -> Result<()> {
        if !(lr >= 0.0 && lr.is_finite()) {
            return Err(Error::usage(format!("learning rate must be >= 0, got {lr}")));
        }
        if grads.len() != self.layers.len() {
            return Err(Error::usage("gradient layer count does not match the model"));
        }
        for (layer, g) in self.layers.iter_mut().zip(grads) {
            if layer.weights.rows() != g.weights.rows()
                || layer.weights.cols() != g.weights.cols()
                || layer.bias.len() != g.bias.len()
            {
                return Err(Error::usage("gradient shape does not match the model"));
            }
            axpy(-lr, g.weights.data(), layer.weights.data_mut());
            axpy(-lr, &g.bias, &mut layer.bias);
        }
        Ok(())
    }

    /// Flat view of every parameter in file order.
    pub fn flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.arch.num_params());
        for l in &self.layers {
            v.extend_from_slice(l.weights.data());
            v.extend_from_slice(&l.bias);
        }
        v
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.is_finite() && l.bias.iter().all(|b| b.is_finite()))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = ModelHeader {
            version: MODEL_FORMAT_VERSION,
            arch: self.arch.clone(),
        };
        let mut out = Vec::with_capacity(64 + 8 * self.arch.num_params());
        out.extend_from_slice(MODEL_MAGIC.as_bytes());
        out.push(b'\n');
        out.extend_from_slice(
            serde_json::to_string(&header)
                .expect("header serializes")
                .as_bytes(),
        );
        out.push(b'\n');
        for v in self.flat() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Parses a model file image; `path` is used for error messages only.
    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let magic_end = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::format(path, "bad magic"))?;
        if &bytes[..magic_end] != MODEL_MAGIC.as_bytes() {
            return Err(Error::format(path, "bad magic"));
        }
        let rest = &bytes[magic_end + 1..];
        let header_end = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::format(path, "missing header line"))?;
        let header: ModelHeader = serde_json::from_slice(&rest[..header_end])
            .map_err(|e| Error::format(path, format!("bad header: {e}")))?;
        if header.version != MODEL_FORMAT_VERSION {
            return Err(Error::format(
                path,
                format!("unsupported model version {}", header.version),
            ));
        }
        header
            .arch
            .validate()
            .map_err(|e| Error::format(path, e.to_string()))?;
        let body = &rest[header_end + 1..];
        let expected = header.arch.num_params() * 8;
        if body.len() != expected {
            return Err(Error::format(
                path,
                format!(
                    "shape mismatch: body has {} bytes, architecture {:?} needs {expected}",
                    body.len(),
                    header.arch.widths()
                ),
            ));
        }
        let mut values = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
        let mut params = ModelParams::zeros(&header.arch)?;
        for layer in &mut params.layers {
            for v in layer.weights.data_mut().iter_mut().chain(layer.bias.iter_mut()) {
                *v = values.next().expect("length checked");
            }
        }
        if !params.is_finite() {
            return Err(Error::format(path, "non-finite parameter value"));
        }
        Ok(params)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }

    /// SHA-256 of the serialized model, hex encoded.
    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(self.to_bytes()))
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelHeader {
    version: u32,
    arch: Architecture,
}

fn posteriors_from_logits(logits: &Matrix, temperature: f64) -> Result<Matrix> {
    let mut q = logits.clone();
    if temperature != 1.0 {
        q.scale(1.0 / temperature);
    }
    for r in 0..q.rows() {
        softmax_in_place(q.row_mut(r))?;
    }
    Ok(q)
}
