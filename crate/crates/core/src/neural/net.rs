//! The fusion network: an encoder branch, a demographics branch, a fusion
//! trunk and a linear head, stored as a flat `f64` parameter vector with
//! per-layer views. Forward and backward passes are hand-written; there
//! is no autodiff.

use super::NeuralError;
use crate::data::Waveform;
use crate::rng::Pcg;

/// Demographics branch width (three affine+ReLU layers).
pub const DEMO_DIM: usize = 32;
/// Fusion trunk width (three affine+ReLU layers).
pub const TRUNK_DIM: usize = 128;
/// Encoder output width for the learned encoders.
pub const ENCODER_DIM: usize = 64;
/// Wave-statistics feature width: 6 fixed summaries per channel.
pub const WAVE_FEATURES: usize = 6 * crate::data::CHANNELS;

// Strided convolution stack used by the learned waveform encoder.
const CONV1_OUT: usize = 8;
const CONV1_KERNEL: usize = 32;
const CONV1_STRIDE: usize = 16;
const CONV2_OUT: usize = 8;
const CONV2_KERNEL: usize = 16;
const CONV2_STRIDE: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum EncoderKind {
    /// No waveform input: the encoder contributes a single constant 0,
    /// reducing the net to a feedforward model over covariates.
    TabularZero,
    /// Fixed per-channel summary statistics feeding one learned
    /// affine+ReLU layer.
    WaveStats,
    /// Two strided 1-D convolution layers with learned kernels, pooled
    /// into an affine+ReLU projection.
    TinyConv,
}

impl EncoderKind {
    pub fn name(&self) -> &'static str {
        match self {
            EncoderKind::TabularZero => "TabularZero",
            EncoderKind::WaveStats => "WaveStats",
            EncoderKind::TinyConv => "TinyConv",
        }
    }
}

/// Static shape of a [`FusionNet`].
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Architecture {
    pub encoder: EncoderKind,
    /// 0 skips the demographics branch entirely.
    pub covariate_dim: usize,
    /// 1 for log-risk/classifier heads, 100 for per-bin heads.
    pub head_dim: usize,
}

/// Waveform-side input of one record.
#[derive(Debug, Clone)]
pub enum WaveInput<'a> {
    None,
    /// Precomputed summary statistics ([`WAVE_FEATURES`] values).
    Stats(Vec<f64>),
    /// Raw (normalized) waveform for the convolutional encoder.
    Raw(&'a Waveform),
}

/// One record's network input.
#[derive(Debug, Clone)]
pub struct NetInput<'a> {
    pub wave: WaveInput<'a>,
    pub covariates: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
struct Affine {
    in_dim: usize,
    out_dim: usize,
    w_offset: usize,
    b_offset: usize,
    relu: bool,
}

impl Affine {
    fn param_count(&self) -> usize {
        self.in_dim * self.out_dim + self.out_dim
    }

    fn forward(&self, params: &[f64], input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        let w = &params[self.w_offset..self.w_offset + self.in_dim * self.out_dim];
        let b = &params[self.b_offset..self.b_offset + self.out_dim];
        for o in 0..self.out_dim {
            let row = &w[o * self.in_dim..(o + 1) * self.in_dim];
            let mut acc = b[o];
            for (wi, xi) in row.iter().zip(input) {
                acc += wi * xi;
            }
            out.push(if self.relu { acc.max(0.0) } else { acc });
        }
    }

    /// Backward through this layer. `d_out` is already masked by the
    /// caller when the layer output was consumed non-linearly; here the
    /// ReLU mask of this layer's own activation is applied.
    fn backward(
        &self,
        params: &[f64],
        input: &[f64],
        output: &[f64],
        d_out: &[f64],
        grad: &mut [f64],
        d_in: &mut Vec<f64>,
    ) {
        let w = &params[self.w_offset..self.w_offset + self.in_dim * self.out_dim];
        d_in.clear();
        d_in.resize(self.in_dim, 0.0);
        for o in 0..self.out_dim {
            let mut d = d_out[o];
            if self.relu && output[o] <= 0.0 {
                d = 0.0;
            }
            if d == 0.0 {
                continue;
            }
            let row = &w[o * self.in_dim..(o + 1) * self.in_dim];
            let wg = &mut grad[self.w_offset + o * self.in_dim..self.w_offset + (o + 1) * self.in_dim];
            for i in 0..self.in_dim {
                wg[i] += d * input[i];
                d_in[i] += d * row[i];
            }
            grad[self.b_offset + o] += d;
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Conv1d {
    in_ch: usize,
    out_ch: usize,
    kernel: usize,
    stride: usize,
    in_len: usize,
    out_len: usize,
    w_offset: usize,
    b_offset: usize,
}

impl Conv1d {
    fn param_count(&self) -> usize {
        self.out_ch * self.in_ch * self.kernel + self.out_ch
    }

    /// input and output are channel-major flat buffers; ReLU applied.
    fn forward(&self, params: &[f64], input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.resize(self.out_ch * self.out_len, 0.0);
        let b = &params[self.b_offset..self.b_offset + self.out_ch];
        for oc in 0..self.out_ch {
            for t in 0..self.out_len {
                let start = t * self.stride;
                let mut acc = b[oc];
                for ic in 0..self.in_ch {
                    let w = &params[self.w_offset + (oc * self.in_ch + ic) * self.kernel..];
                    let seg = &input[ic * self.in_len + start..ic * self.in_len + start + self.kernel];
                    for k in 0..self.kernel {
                        acc += w[k] * seg[k];
                    }
                }
                out[oc * self.out_len + t] = acc.max(0.0);
            }
        }
    }

    fn backward(
        &self,
        params: &[f64],
        input: &[f64],
        output: &[f64],
        d_out: &[f64],
        grad: &mut [f64],
        d_in: &mut Vec<f64>,
    ) {
        d_in.clear();
        d_in.resize(self.in_ch * self.in_len, 0.0);
        for oc in 0..self.out_ch {
            for t in 0..self.out_len {
                let idx = oc * self.out_len + t;
                let mut d = d_out[idx];
                if output[idx] <= 0.0 {
                    d = 0.0;
                }
                if d == 0.0 {
                    continue;
                }
                grad[self.b_offset + oc] += d;
                let start = t * self.stride;
                for ic in 0..self.in_ch {
                    let wo = self.w_offset + (oc * self.in_ch + ic) * self.kernel;
                    let w = &params[wo..wo + self.kernel];
                    let in_base = ic * self.in_len + start;
                    for k in 0..self.kernel {
                        grad[wo + k] += d * input[in_base + k];
                        d_in[in_base + k] += d * w[k];
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
enum EncoderLayers {
    TabularZero,
    WaveStats { project: Affine },
    TinyConv {
        conv1: Conv1d,
        conv2: Conv1d,
        project: Affine,
    },
}

/// The three-branch fusion network.
#[derive(Debug, Clone)]
pub struct FusionNet {
    pub arch: Architecture,
    encoder: EncoderLayers,
    demo: Vec<Affine>,
    trunk: Vec<Affine>,
    head: Affine,
    pub params: Vec<f64>,
}

/// Per-record activations retained for the backward pass.
#[derive(Debug, Clone, Default)]
pub struct ForwardCache {
    enc: Vec<Vec<f64>>,
    demo: Vec<Vec<f64>>,
    trunk: Vec<Vec<f64>>,
    pub output: Vec<f64>,
}

impl FusionNet {
    /// Build the architecture with all parameters zero.
    pub fn new(arch: Architecture) -> Result<Self, NeuralError> {
        if arch.head_dim == 0 {
            return Err(NeuralError::Config("head_dim must be positive".into()));
        }
        let mut offset = 0usize;
        fn affine(offset: &mut usize, in_dim: usize, out_dim: usize, relu: bool) -> Affine {
            let layer = Affine {
                in_dim,
                out_dim,
                w_offset: *offset,
                b_offset: *offset + in_dim * out_dim,
                relu,
            };
            *offset += layer.param_count();
            layer
        }

        let (encoder, enc_out_dim) = match arch.encoder {
            EncoderKind::TabularZero => (EncoderLayers::TabularZero, 1),
            EncoderKind::WaveStats => (
                EncoderLayers::WaveStats {
                    project: affine(&mut offset, WAVE_FEATURES, ENCODER_DIM, true),
                },
                ENCODER_DIM,
            ),
            EncoderKind::TinyConv => {
                let in_len = crate::data::SAMPLES;
                let out_len1 = (in_len - CONV1_KERNEL) / CONV1_STRIDE + 1;
                let conv1 = Conv1d {
                    in_ch: crate::data::CHANNELS,
                    out_ch: CONV1_OUT,
                    kernel: CONV1_KERNEL,
                    stride: CONV1_STRIDE,
                    in_len,
                    out_len: out_len1,
                    w_offset: offset,
                    b_offset: offset + CONV1_OUT * crate::data::CHANNELS * CONV1_KERNEL,
                };
                offset += conv1.param_count();
                let out_len2 = (out_len1 - CONV2_KERNEL) / CONV2_STRIDE + 1;
                let conv2 = Conv1d {
                    in_ch: CONV1_OUT,
                    out_ch: CONV2_OUT,
                    kernel: CONV2_KERNEL,
                    stride: CONV2_STRIDE,
                    in_len: out_len1,
                    out_len: out_len2,
                    w_offset: offset,
                    b_offset: offset + CONV2_OUT * CONV1_OUT * CONV2_KERNEL,
                };
                offset += conv2.param_count();
                let project = affine(&mut offset, CONV2_OUT * out_len2, ENCODER_DIM, true);
                (EncoderLayers::TinyConv { conv1, conv2, project }, ENCODER_DIM)
            }
        };

        let demo: Vec<Affine> = if arch.covariate_dim > 0 {
            vec![
                affine(&mut offset, arch.covariate_dim, DEMO_DIM, true),
                affine(&mut offset, DEMO_DIM, DEMO_DIM, true),
                affine(&mut offset, DEMO_DIM, DEMO_DIM, true),
            ]
        } else {
            Vec::new()
        };
        let demo_out = if arch.covariate_dim > 0 { DEMO_DIM } else { 0 };

        let trunk = vec![
            affine(&mut offset, enc_out_dim + demo_out, TRUNK_DIM, true),
            affine(&mut offset, TRUNK_DIM, TRUNK_DIM, true),
            affine(&mut offset, TRUNK_DIM, TRUNK_DIM, true),
        ];
        let head = affine(&mut offset, TRUNK_DIM, arch.head_dim, false);

        Ok(FusionNet {
            arch,
            encoder,
            demo,
            trunk,
            head,
            params: vec![0.0; offset],
        })
    }

    /// Build and initialize: weights uniform with Kaiming fan-in limit
    /// `sqrt(6 / fan_in)`, biases zero.
    pub fn init(arch: Architecture, seed: u64) -> Result<Self, NeuralError> {
        let mut net = Self::new(arch)?;
        let mut rng = Pcg::new(seed, 0xFEED);
        let init_affine = |layer: &Affine, params: &mut [f64], rng: &mut Pcg| {
            let limit = (6.0 / layer.in_dim as f64).sqrt();
            for w in params[layer.w_offset..layer.w_offset + layer.in_dim * layer.out_dim].iter_mut() {
                *w = rng.range(-limit, limit);
            }
        };
        let encoder = net.encoder.clone();
        match &encoder {
            EncoderLayers::TabularZero => {}
            EncoderLayers::WaveStats { project } => init_affine(project, &mut net.params, &mut rng),
            EncoderLayers::TinyConv { conv1, conv2, project } => {
                for conv in [conv1, conv2] {
                    let fan_in = conv.in_ch * conv.kernel;
                    let limit = (6.0 / fan_in as f64).sqrt();
                    let range = conv.w_offset..conv.w_offset + conv.out_ch * conv.in_ch * conv.kernel;
                    for w in net.params[range].iter_mut() {
                        *w = rng.range(-limit, limit);
                    }
                }
                init_affine(project, &mut net.params, &mut rng);
            }
        }
        let demo = net.demo.clone();
        let trunk = net.trunk.clone();
        let head = net.head;
        for layer in demo.iter().chain(trunk.iter()).chain(std::iter::once(&head)) {
            init_affine(layer, &mut net.params, &mut rng);
        }
        Ok(net)
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn set_params(&mut self, params: Vec<f64>) -> Result<(), NeuralError> {
        if params.len() != self.params.len() {
            return Err(NeuralError::Shape(format!(
                "{} parameters supplied, net has {}",
                params.len(),
                self.params.len()
            )));
        }
        self.params = params;
        Ok(())
    }

    fn encoder_input(&self, input: &NetInput) -> Result<Vec<f64>, NeuralError> {
        match (&self.arch.encoder, &input.wave) {
            (EncoderKind::TabularZero, _) => Ok(vec![0.0]),
            (EncoderKind::WaveStats, WaveInput::Stats(features)) => {
                if features.len() != WAVE_FEATURES {
                    return Err(NeuralError::Shape(format!(
                        "{} wave features supplied, expected {WAVE_FEATURES}",
                        features.len()
                    )));
                }
                Ok(features.clone())
            }
            (EncoderKind::TinyConv, WaveInput::Raw(w)) => {
                if !w.is_standard() {
                    return Err(NeuralError::Shape(format!(
                        "waveform is {} x {}, expected standard shape",
                        w.samples(),
                        w.channels()
                    )));
                }
                Ok(w.raw().iter().map(|&v| v as f64).collect())
            }
            (kind, _) => Err(NeuralError::Shape(format!(
                "wave input does not match encoder {}",
                kind.name()
            ))),
        }
    }

    /// Forward pass retaining activations.
    pub fn forward_cached(&self, input: &NetInput) -> Result<ForwardCache, NeuralError> {
        if input.covariates.len() != self.arch.covariate_dim {
            return Err(NeuralError::Shape(format!(
                "{} covariates supplied, net expects {}",
                input.covariates.len(),
                self.arch.covariate_dim
            )));
        }
        let mut cache = ForwardCache::default();
        cache.enc.push(self.encoder_input(input)?);
        match &self.encoder {
            EncoderLayers::TabularZero => {}
            EncoderLayers::WaveStats { project } => {
                let mut out = Vec::new();
                project.forward(&self.params, &cache.enc[0], &mut out);
                cache.enc.push(out);
            }
            EncoderLayers::TinyConv { conv1, conv2, project } => {
                let mut a = Vec::new();
                conv1.forward(&self.params, &cache.enc[0], &mut a);
                cache.enc.push(a);
                let mut b = Vec::new();
                conv2.forward(&self.params, &cache.enc[1], &mut b);
                cache.enc.push(b);
                let mut c = Vec::new();
                project.forward(&self.params, &cache.enc[2], &mut c);
                cache.enc.push(c);
            }
        }
        if !self.demo.is_empty() {
            cache.demo.push(input.covariates.clone());
            for layer in &self.demo {
                let mut out = Vec::new();
                layer.forward(&self.params, cache.demo.last().unwrap(), &mut out);
                cache.demo.push(out);
            }
        }
        let mut fused = cache.enc.last().unwrap().clone();
        if let Some(demo_out) = cache.demo.last() {
            fused.extend_from_slice(demo_out);
        }
        cache.trunk.push(fused);
        for layer in &self.trunk {
            let mut out = Vec::new();
            layer.forward(&self.params, cache.trunk.last().unwrap(), &mut out);
            cache.trunk.push(out);
        }
        let mut out = Vec::new();
        self.head.forward(&self.params, cache.trunk.last().unwrap(), &mut out);
        cache.output = out;
        Ok(cache)
    }

    /// Head outputs for one record.
    pub fn forward(&self, input: &NetInput) -> Result<Vec<f64>, NeuralError> {
        Ok(self.forward_cached(input)?.output)
    }

    /// Accumulate parameter gradients for one record given the loss
    /// gradient with respect to the head outputs.
    pub fn backward(&self, cache: &ForwardCache, d_output: &[f64], grad: &mut [f64]) {
        debug_assert_eq!(d_output.len(), self.arch.head_dim);
        debug_assert_eq!(grad.len(), self.params.len());

        let mut d_trunk_top = Vec::new();
        self.head.backward(
            &self.params,
            cache.trunk.last().unwrap(),
            &cache.output,
            d_output,
            grad,
            &mut d_trunk_top,
        );
        let mut d_cur = d_trunk_top;
        for (i, layer) in self.trunk.iter().enumerate().rev() {
            let mut d_in = Vec::new();
            layer.backward(&self.params, &cache.trunk[i], &cache.trunk[i + 1], &d_cur, grad, &mut d_in);
            d_cur = d_in;
        }
        // split the fused gradient back into branches
        let enc_out_len = cache.enc.last().unwrap().len();
        let d_enc_out = d_cur[..enc_out_len].to_vec();
        let d_demo_out = d_cur[enc_out_len..].to_vec();

        if !self.demo.is_empty() {
            let mut d = d_demo_out;
            for (i, layer) in self.demo.iter().enumerate().rev() {
                let mut d_in = Vec::new();
                layer.backward(&self.params, &cache.demo[i], &cache.demo[i + 1], &d, grad, &mut d_in);
                d = d_in;
            }
        }
        match &self.encoder {
            EncoderLayers::TabularZero => {}
            EncoderLayers::WaveStats { project } => {
                let mut d_in = Vec::new();
                project.backward(&self.params, &cache.enc[0], &cache.enc[1], &d_enc_out, grad, &mut d_in);
            }
            EncoderLayers::TinyConv { conv1, conv2, project } => {
                let mut d2 = Vec::new();
                project.backward(&self.params, &cache.enc[2], &cache.enc[3], &d_enc_out, grad, &mut d2);
                let mut d1 = Vec::new();
                conv2.backward(&self.params, &cache.enc[1], &cache.enc[2], &d2, grad, &mut d1);
                let mut d0 = Vec::new();
                conv1.backward(&self.params, &cache.enc[0], &cache.enc[1], &d1, grad, &mut d0);
            }
        }
    }
}
