//! Small multi-layer perceptrons over flat `f64` parameter arrays, with
//! exact reverse-mode gradients, an Adam optimizer, and a versioned binary
//! serialization of parameter sets. All math is double precision so
//! finite-difference checks stay sharp.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use libm::{exp, sqrt};

use crate::rng::Rng;
use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
    Sigmoid,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
            Activation::Sigmoid => 1.0 / (1.0 + exp(-x)),
        }
    }

    /// Derivative expressed through the post-activation value.
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
            Activation::Sigmoid => y * (1.0 - y),
        }
    }

    fn tag(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Identity => 1,
            Activation::Sigmoid => 2,
        }
    }

    fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Activation::Relu),
            1 => Some(Activation::Identity),
            2 => Some(Activation::Sigmoid),
            _ => None,
        }
    }
}

/// Layer sizes plus one activation per weight layer. Parameters are stored
/// flat, layer by layer: row-major weights `[out][in]` followed by biases.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpSpec {
    pub sizes: Vec<usize>,
    pub activations: Vec<Activation>,
}

impl MlpSpec {
    pub fn new(sizes: Vec<usize>, activations: Vec<Activation>) -> crate::Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::InvalidConfig("an MLP needs at least one layer".into()));
        }
        if sizes.iter().any(|&s| s == 0) {
            return Err(Error::InvalidConfig("layer sizes must be >= 1".into()));
        }
        if activations.len() != sizes.len() - 1 {
            return Err(Error::InvalidConfig(alloc::format!(
                "need {} activations for {} layers, got {}",
                sizes.len() - 1,
                sizes.len() - 1,
                activations.len()
            )));
        }
        Ok(MlpSpec { sizes, activations })
    }

    /// Rectifier hidden layers with the given output activation.
    pub fn with_hidden(
        input: usize,
        hidden: &[usize],
        output: usize,
        output_activation: Activation,
    ) -> crate::Result<Self> {
        let mut sizes = Vec::with_capacity(hidden.len() + 2);
        sizes.push(input);
        sizes.extend_from_slice(hidden);
        sizes.push(output);
        let mut activations = vec![Activation::Relu; sizes.len() - 1];
        *activations.last_mut().unwrap() = output_activation;
        MlpSpec::new(sizes, activations)
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn param_count(&self) -> usize {
        self.sizes
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }
}

fn layer_offsets(spec: &MlpSpec) -> Vec<usize> {
    let mut offsets = Vec::with_capacity(spec.num_layers());
    let mut acc = 0;
    for l in 0..spec.num_layers() {
        offsets.push(acc);
        acc += spec.sizes[l] * spec.sizes[l + 1] + spec.sizes[l + 1];
    }
    offsets
}

/// Uniform fan-in initialization: weights and biases of each layer drawn
/// from U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
pub fn init_params(spec: &MlpSpec, rng: &mut Rng) -> Vec<f64> {
    let mut params = vec![0.0; spec.param_count()];
    let offsets = layer_offsets(spec);
    for l in 0..spec.num_layers() {
        let fan_in = spec.sizes[l];
        let bound = 1.0 / sqrt(fan_in as f64);
        let count = spec.sizes[l] * spec.sizes[l + 1] + spec.sizes[l + 1];
        for v in &mut params[offsets[l]..offsets[l] + count] {
            *v = rng.range_f64(-bound, bound);
        }
    }
    params
}

/// Scales the final layer's weights and biases, e.g. to start a policy near
/// uniform.
pub fn scale_last_layer(spec: &MlpSpec, params: &mut [f64], factor: f64) {
    let offsets = layer_offsets(spec);
    let last = spec.num_layers() - 1;
    for v in &mut params[offsets[last]..] {
        *v *= factor;
    }
}

/// Per-layer post-activation values captured by [`forward_trace`].
#[derive(Debug, Clone)]
pub struct Trace {
    /// `outputs[0]` is the input; `outputs[l + 1]` the output of layer `l`.
    outputs: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.outputs.last().unwrap()
    }
}

fn check_shapes(spec: &MlpSpec, params: &[f64], input: &[f64]) -> crate::Result<()> {
    if input.len() != spec.input_dim() {
        return Err(Error::Dimension {
            what: "mlp input",
            expected: spec.input_dim(),
            got: input.len(),
        });
    }
    if params.len() != spec.param_count() {
        return Err(Error::Dimension {
            what: "mlp parameters",
            expected: spec.param_count(),
            got: params.len(),
        });
    }
    Ok(())
}

/// Affine + activation composition through all layers.
pub fn forward(spec: &MlpSpec, params: &[f64], input: &[f64]) -> crate::Result<Vec<f64>> {
    Ok(forward_trace(spec, params, input)?.outputs.pop().unwrap())
}

/// Forward pass that keeps every layer's output for the reverse pass.
pub fn forward_trace(spec: &MlpSpec, params: &[f64], input: &[f64]) -> crate::Result<Trace> {
    check_shapes(spec, params, input)?;
    let offsets = layer_offsets(spec);
    let mut outputs = Vec::with_capacity(spec.num_layers() + 1);
    outputs.push(input.to_vec());
    for l in 0..spec.num_layers() {
        let (n_in, n_out) = (spec.sizes[l], spec.sizes[l + 1]);
        let w = &params[offsets[l]..offsets[l] + n_in * n_out];
        let b = &params[offsets[l] + n_in * n_out..offsets[l] + n_in * n_out + n_out];
        let x = outputs.last().unwrap();
        let mut y = Vec::with_capacity(n_out);
        for o in 0..n_out {
            let row = &w[o * n_in..(o + 1) * n_in];
            let mut acc = b[o];
            for (wi, xi) in row.iter().zip(x) {
                acc += wi * xi;
            }
            y.push(spec.activations[l].apply(acc));
        }
        outputs.push(y);
    }
    Ok(Trace { outputs })
}

/// Reverse pass over a stored trace. Parameter gradients are accumulated
/// into `param_grads` (same layout as the parameters); the gradient with
/// respect to the input is returned.
pub fn backward_trace(
    spec: &MlpSpec,
    params: &[f64],
    trace: &Trace,
    output_gradient: &[f64],
    param_grads: &mut [f64],
) -> Vec<f64> {
    assert_eq!(output_gradient.len(), spec.output_dim(), "output gradient length");
    assert_eq!(param_grads.len(), spec.param_count(), "gradient buffer length");
    let offsets = layer_offsets(spec);
    let mut delta = output_gradient.to_vec();
    for l in (0..spec.num_layers()).rev() {
        let (n_in, n_out) = (spec.sizes[l], spec.sizes[l + 1]);
        let y = &trace.outputs[l + 1];
        let x = &trace.outputs[l];
        for (d, &yi) in delta.iter_mut().zip(y.iter()) {
            *d *= spec.activations[l].derivative_from_output(yi);
        }
        let w_off = offsets[l];
        let b_off = w_off + n_in * n_out;
        let mut next_delta = vec![0.0; n_in];
        for o in 0..n_out {
            let d = delta[o];
            param_grads[b_off + o] += d;
            let row = &params[w_off + o * n_in..w_off + (o + 1) * n_in];
            let grow = &mut param_grads[w_off + o * n_in..w_off + (o + 1) * n_in];
            for i in 0..n_in {
                grow[i] += d * x[i];
                next_delta[i] += d * row[i];
            }
        }
        delta = next_delta;
    }
    delta
}

/// Gradient with respect to the input only; parameter gradients are not
/// touched (used where the network is held frozen).
pub fn input_gradient(
    spec: &MlpSpec,
    params: &[f64],
    trace: &Trace,
    output_gradient: &[f64],
) -> Vec<f64> {
    assert_eq!(output_gradient.len(), spec.output_dim(), "output gradient length");
    let offsets = layer_offsets(spec);
    let mut delta = output_gradient.to_vec();
    for l in (0..spec.num_layers()).rev() {
        let (n_in, n_out) = (spec.sizes[l], spec.sizes[l + 1]);
        let y = &trace.outputs[l + 1];
        for (d, &yi) in delta.iter_mut().zip(y.iter()) {
            *d *= spec.activations[l].derivative_from_output(yi);
        }
        let w_off = offsets[l];
        let mut next_delta = vec![0.0; n_in];
        for o in 0..n_out {
            let d = delta[o];
            let row = &params[w_off + o * n_in..w_off + (o + 1) * n_in];
            for i in 0..n_in {
                next_delta[i] += d * row[i];
            }
        }
        delta = next_delta;
    }
    delta
}

/// Exact reverse-mode gradients of [`forward`]: returns `(parameter
/// gradients, input gradient)`.
pub fn backward(
    spec: &MlpSpec,
    params: &[f64],
    input: &[f64],
    output_gradient: &[f64],
) -> crate::Result<(Vec<f64>, Vec<f64>)> {
    let trace = forward_trace(spec, params, input)?;
    let mut grads = vec![0.0; spec.param_count()];
    let input_grad = backward_trace(spec, params, &trace, output_gradient, &mut grads);
    Ok((grads, input_grad))
}

/// Adam optimizer state over one flat parameter array.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(learning_rate: f64, param_count: usize) -> Self {
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One adaptive-moment update, minimizing along `grads`.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), self.m.len(), "parameter count mismatch");
        assert_eq!(grads.len(), self.m.len(), "gradient count mismatch");
        self.step += 1;
        let b1t = 1.0 - libm::pow(self.beta1, self.step as f64);
        let b2t = 1.0 - libm::pow(self.beta2, self.step as f64);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grads[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grads[i] * grads[i];
            let m_hat = self.m[i] / b1t;
            let v_hat = self.v[i] / b2t;
            params[i] -= self.learning_rate * m_hat / (sqrt(v_hat) + self.epsilon);
        }
    }
}

// --- binary serialization ---------------------------------------------------
//
// Network block: magic "MLPB", version u32, layer count u32, sizes u32...,
// activation tags u8..., parameter count u64, f64 little-endian payload.

const MLP_MAGIC: &[u8; 4] = b"MLPB";
const MLP_VERSION: u32 = 1;

pub fn params_to_bytes(spec: &MlpSpec, params: &[f64]) -> Vec<u8> {
    assert_eq!(params.len(), spec.param_count(), "parameter count mismatch");
    let mut out = Vec::new();
    out.extend_from_slice(MLP_MAGIC);
    out.extend_from_slice(&MLP_VERSION.to_le_bytes());
    out.extend_from_slice(&(spec.sizes.len() as u32).to_le_bytes());
    for &s in &spec.sizes {
        out.extend_from_slice(&(s as u32).to_le_bytes());
    }
    for &a in &spec.activations {
        out.push(a.tag());
    }
    out.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for &p in params {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

/// Cursor over a byte buffer with field-labelled error reporting.
pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize, field: &'static str) -> crate::Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Checkpoint {
                field,
                detail: String::from("unexpected end of data"),
            });
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub(crate) fn u32(&mut self, field: &'static str) -> crate::Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, field)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self, field: &'static str) -> crate::Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, field)?.try_into().unwrap()))
    }

    pub(crate) fn f64(&mut self, field: &'static str) -> crate::Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, field)?.try_into().unwrap()))
    }

    pub(crate) fn f64_vec(&mut self, n: usize, field: &'static str) -> crate::Result<Vec<f64>> {
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            out.push(self.f64(field)?);
        }
        Ok(out)
    }

    pub(crate) fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }
}

pub fn params_from_bytes(bytes: &[u8]) -> crate::Result<(MlpSpec, Vec<f64>)> {
    let mut r = Reader::new(bytes);
    let (spec, params) = read_mlp_block(&mut r)?;
    if r.remaining() != 0 {
        return Err(Error::Checkpoint {
            field: "mlp_trailer",
            detail: alloc::format!("{} unread bytes", r.remaining()),
        });
    }
    Ok((spec, params))
}

pub(crate) fn read_mlp_block(r: &mut Reader<'_>) -> crate::Result<(MlpSpec, Vec<f64>)> {
    let magic = r.take(4, "mlp_magic")?;
    if magic != MLP_MAGIC {
        return Err(Error::Checkpoint {
            field: "mlp_magic",
            detail: String::from("bad magic bytes"),
        });
    }
    let version = r.u32("mlp_version")?;
    if version != MLP_VERSION {
        return Err(Error::Checkpoint {
            field: "mlp_version",
            detail: alloc::format!("unsupported version {version}"),
        });
    }
    let n_sizes = r.u32("mlp_layer_count")? as usize;
    if !(2..=64).contains(&n_sizes) {
        return Err(Error::Checkpoint {
            field: "mlp_layer_count",
            detail: alloc::format!("implausible layer count {n_sizes}"),
        });
    }
    let mut sizes = Vec::with_capacity(n_sizes);
    for _ in 0..n_sizes {
        sizes.push(r.u32("mlp_layer_size")? as usize);
    }
    let mut activations = Vec::with_capacity(n_sizes - 1);
    for _ in 0..n_sizes - 1 {
        let tag = r.take(1, "mlp_activation")?[0];
        activations.push(Activation::from_tag(tag).ok_or(Error::Checkpoint {
            field: "mlp_activation",
            detail: alloc::format!("unknown activation tag {tag}"),
        })?);
    }
    let spec = MlpSpec::new(sizes, activations).map_err(|_| Error::Checkpoint {
        field: "mlp_layer_size",
        detail: String::from("invalid layer sizes"),
    })?;
    let count = r.u64("mlp_param_count")? as usize;
    if count != spec.param_count() {
        return Err(Error::Checkpoint {
            field: "mlp_param_count",
            detail: alloc::format!("expected {}, found {count}", spec.param_count()),
        });
    }
    let params = r.f64_vec(count, "mlp_params")?;
    Ok((spec, params))
}

pub(crate) fn write_adam_block(out: &mut Vec<u8>, adam: &Adam) {
    out.extend_from_slice(b"ADAM");
    out.extend_from_slice(&adam.step.to_le_bytes());
    for v in [adam.learning_rate, adam.beta1, adam.beta2, adam.epsilon] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&(adam.m.len() as u64).to_le_bytes());
    for &v in &adam.m {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for &v in &adam.v {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub(crate) fn read_adam_block(r: &mut Reader<'_>, expect_len: usize) -> crate::Result<Adam> {
    let magic = r.take(4, "adam_magic")?;
    if magic != b"ADAM" {
        return Err(Error::Checkpoint {
            field: "adam_magic",
            detail: String::from("bad magic bytes"),
        });
    }
    let step = r.u64("adam_step")?;
    let learning_rate = r.f64("adam_learning_rate")?;
    let beta1 = r.f64("adam_beta1")?;
    let beta2 = r.f64("adam_beta2")?;
    let epsilon = r.f64("adam_epsilon")?;
    let len = r.u64("adam_len")? as usize;
    if len != expect_len {
        return Err(Error::Checkpoint {
            field: "adam_len",
            detail: alloc::format!("expected {expect_len}, found {len}"),
        });
    }
    let m = r.f64_vec(len, "adam_m")?;
    let v = r.f64_vec(len, "adam_v")?;
    Ok(Adam {
        learning_rate,
        beta1,
        beta2,
        epsilon,
        step,
        m,
        v,
    })
}
