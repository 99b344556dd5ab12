//! Untrained convolutional generator.
//!
//! Each block is `conv3x3 → BN → ReLU → conv3x3 → BN → ReLU`, followed by a
//! 2x2 stride-2 transposed convolution when the block upsamples. The head is
//! `conv3x3 → BN → ReLU → conv1x1` down to one channel. Batch normalization
//! always uses the statistics of the current (single) sample.

pub mod layers;
mod rmsprop;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub use rmsprop::{rmsprop_step, OptState};

use crate::error::{invalid, PactError, Result};
use crate::geometry::Grid;
use crate::image::Image;
use layers::BnCache;

/// Standard deviation of the fixed input.
pub const INPUT_STD: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecoderArch {
    /// Channel width of each block; the input has `channels[0]` channels.
    pub channels: Vec<usize>,
    pub input_hw: usize,
    pub output_hw: usize,
    /// 1-based indices of the blocks that double the resolution.
    pub upsample_blocks: Vec<usize>,
}

impl Default for DecoderArch {
    /// Five 64-wide blocks, 8x8 input to 128x128 output.
    fn default() -> Self {
        Self {
            channels: vec![64; 5],
            input_hw: 8,
            output_hw: 128,
            upsample_blocks: vec![1, 2, 3, 4],
        }
    }
}

impl DecoderArch {
    /// `n_blocks` blocks of constant `width`, upsampling in the leading blocks
    /// as needed to go from `input_hw` to `output_hw`.
    pub fn uniform(n_blocks: usize, width: usize, input_hw: usize, output_hw: usize) -> Result<Self> {
        if input_hw == 0 || output_hw % input_hw != 0 || !(output_hw / input_hw).is_power_of_two() {
            return invalid(format!("cannot reach {output_hw} from {input_hw} by doubling"));
        }
        let doublings = (output_hw / input_hw).trailing_zeros() as usize;
        if doublings > n_blocks {
            return invalid(format!("{n_blocks} blocks cannot perform {doublings} doublings"));
        }
        let arch = Self {
            channels: vec![width; n_blocks],
            input_hw,
            output_hw,
            upsample_blocks: (1..=doublings).collect(),
        };
        arch.validate()?;
        Ok(arch)
    }

    pub fn n_blocks(&self) -> usize {
        self.channels.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels.is_empty() || self.channels.contains(&0) {
            return invalid("decoder needs at least one block of non-zero width");
        }
        if self.input_hw == 0 {
            return invalid("decoder input must be at least 1x1");
        }
        let mut ups = self.upsample_blocks.clone();
        ups.sort_unstable();
        ups.dedup();
        if ups.len() != self.upsample_blocks.len()
            || ups.iter().any(|&b| b == 0 || b > self.n_blocks())
        {
            return invalid(format!("bad upsample block set {:?}", self.upsample_blocks));
        }
        if self.input_hw << ups.len() != self.output_hw {
            return invalid(format!(
                "{} doublings of {} give {}, not {}",
                ups.len(),
                self.input_hw,
                self.input_hw << ups.len(),
                self.output_hw
            ));
        }
        Ok(())
    }

    fn upsamples(&self, block: usize) -> bool {
        self.upsample_blocks.contains(&block)
    }
}

/// A named parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Conv3 { cin: usize, cout: usize, w: usize, b: usize },
    Bn { c: usize, scale: usize, shift: usize },
    Relu,
    Up { cin: usize, cout: usize, w: usize },
    Conv1 { cin: usize, cout: usize, w: usize, b: usize },
}

/// Decoder weights `Θ` plus the layer program that uses them.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderParams {
    pub arch: DecoderArch,
    pub params: Vec<Param>,
    program: Vec<Kind>,
    generation: u64,
}

/// Per-parameter gradients, aligned with [`DecoderParams::params`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    pub grads: Vec<Vec<f64>>,
}

impl ParamGrads {
    pub fn zeros_like(p: &DecoderParams) -> Self {
        Self {
            grads: p.params.iter().map(|t| vec![0.0; t.data.len()]).collect(),
        }
    }

    pub fn norm(&self) -> f64 {
        self.grads
            .iter()
            .flat_map(|g| g.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }
}

/// The fixed network input `z`.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedInput {
    pub channels: usize,
    pub hw: usize,
    pub data: Vec<f64>,
    pub seed: u64,
}

/// `z ~ N(0, 0.1²)`, shape `channels[0] × input_hw × input_hw`.
pub fn sample_input(arch: &DecoderArch, seed: u64) -> FixedInput {
    let channels = arch.channels[0];
    let hw = arch.input_hw;
    let normal = Normal::new(0.0, INPUT_STD).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    FixedInput {
        channels,
        hw,
        data: (0..channels * hw * hw).map(|_| normal.sample(&mut rng)).collect(),
        seed,
    }
}

struct Builder {
    params: Vec<Param>,
    program: Vec<Kind>,
}

impl Builder {
    fn push(&mut self, name: String, dims: Vec<usize>, fill: f64) -> usize {
        let len = dims.iter().product();
        self.params.push(Param {
            name,
            dims,
            data: vec![fill; len],
        });
        self.params.len() - 1
    }

    fn conv3(&mut self, prefix: &str, cin: usize, cout: usize) {
        let w = self.push(format!("{prefix}.weight"), vec![cout, cin, 3, 3], 0.0);
        let b = self.push(format!("{prefix}.bias"), vec![cout], 0.0);
        self.program.push(Kind::Conv3 { cin, cout, w, b });
    }

    fn bn_relu(&mut self, prefix: &str, c: usize) {
        let scale = self.push(format!("{prefix}.scale"), vec![c], 1.0);
        let shift = self.push(format!("{prefix}.shift"), vec![c], 0.0);
        self.program.push(Kind::Bn { c, scale, shift });
        self.program.push(Kind::Relu);
    }
}

/// Scaled-Gaussian kernels (`std = √(2 / fan_in)`), zero biases, unit BN scale,
/// zero BN shift.
pub fn init_decoder(arch: &DecoderArch, seed: u64) -> Result<DecoderParams> {
    arch.validate()?;
    let mut b = Builder {
        params: Vec::new(),
        program: Vec::new(),
    };
    let mut cin = arch.channels[0];
    for (i, &c) in arch.channels.iter().enumerate() {
        let blk = i + 1;
        b.conv3(&format!("block{blk}.conv1"), cin, c);
        b.bn_relu(&format!("block{blk}.bn1"), c);
        b.conv3(&format!("block{blk}.conv2"), c, c);
        b.bn_relu(&format!("block{blk}.bn2"), c);
        if arch.upsamples(blk) {
            let w = b.push(format!("block{blk}.up.weight"), vec![c, 2, 2, c], 0.0);
            b.program.push(Kind::Up { cin: c, cout: c, w });
        }
        cin = c;
    }
    b.conv3("head.conv", cin, cin);
    b.bn_relu("head.bn", cin);
    let w = b.push("head.proj.weight".into(), vec![1, cin], 0.0);
    let bias = b.push("head.proj.bias".into(), vec![1], 0.0);
    b.program.push(Kind::Conv1 { cin, cout: 1, w, b: bias });

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for kind in &b.program {
        let (w, fan_in) = match *kind {
            Kind::Conv3 { cin, w, .. } => (w, cin * 9),
            Kind::Up { cin, w, .. } => (w, cin),
            Kind::Conv1 { cin, w, .. } => (w, cin),
            _ => continue,
        };
        let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).unwrap();
        for v in b.params[w].data.iter_mut() {
            *v = normal.sample(&mut rng);
        }
    }
    Ok(DecoderParams {
        arch: arch.clone(),
        params: b.params,
        program: b.program,
        generation: 0,
    })
}

impl DecoderParams {
    pub fn find(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    pub fn param(&self, name: &str) -> Option<&Param> {
        self.params.iter().find(|p| p.name == name)
    }

    /// Mutable access; bumps the generation so older caches become stale.
    pub fn param_mut(&mut self, name: &str) -> Option<&mut Param> {
        self.generation += 1;
        self.params.iter_mut().find(|p| p.name == name)
    }

    pub fn params_mut(&mut self) -> &mut [Param] {
        self.generation += 1;
        &mut self.params
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn n_values(&self) -> usize {
        self.params.iter().map(|p| p.data.len()).sum()
    }

    /// Replace all tensors (e.g. from a checkpoint), checking names and shapes.
    pub fn load(&mut self, tensors: Vec<Param>) -> Result<()> {
        if tensors.len() != self.params.len() {
            return invalid(format!(
                "checkpoint has {} tensors, decoder has {}",
                tensors.len(),
                self.params.len()
            ));
        }
        for (have, new) in self.params.iter().zip(&tensors) {
            if have.name != new.name || have.dims != new.dims || new.data.len() != have.data.len() {
                return invalid(format!("checkpoint tensor `{}` does not match `{}`", new.name, have.name));
            }
        }
        self.params = tensors;
        self.generation += 1;
        Ok(())
    }
}

enum Saved {
    Conv3 { input: Vec<f64>, h: usize, w: usize },
    Bn { cache: BnCache, hw: usize },
    Relu { output: Vec<f64> },
    Up { input: Vec<f64>, h: usize, w: usize },
    Conv1 { input: Vec<f64>, hw: usize },
}

/// Activations recorded by [`decoder_forward`] for the backward pass.
pub struct ActivationCache {
    saved: Vec<Saved>,
    generation: u64,
    output_hw: usize,
}

/// Runs the generator on `z`. The output image lives on `grid`, which must be
/// `output_hw × output_hw`.
pub fn decoder_forward(p: &DecoderParams, z: &FixedInput, grid: Grid) -> Result<(Image, ActivationCache)> {
    let arch = &p.arch;
    if z.channels != arch.channels[0] || z.hw != arch.input_hw || z.data.len() != z.channels * z.hw * z.hw {
        return invalid(format!(
            "input is {}x{}x{}, decoder expects {}x{}x{}",
            z.channels, z.hw, z.hw, arch.channels[0], arch.input_hw, arch.input_hw
        ));
    }
    if grid.nx != arch.output_hw || grid.ny != arch.output_hw {
        return invalid(format!(
            "output grid {}x{} does not match decoder output {}",
            grid.nx, grid.ny, arch.output_hw
        ));
    }
    let mut x = z.data.clone();
    let (mut h, mut w) = (z.hw, z.hw);
    let mut saved = Vec::with_capacity(p.program.len());
    for kind in &p.program {
        let t = &p.params;
        x = match *kind {
            Kind::Conv3 { cin, cout, w: wi, b } => {
                let out = layers::conv3x3_forward(&x, cin, h, w, &t[wi].data, &t[b].data, cout);
                saved.push(Saved::Conv3 { input: x, h, w });
                out
            }
            Kind::Bn { c, scale, shift } => {
                let (out, cache) = layers::batchnorm_forward(&x, c, h * w, &t[scale].data, &t[shift].data);
                saved.push(Saved::Bn { cache, hw: h * w });
                out
            }
            Kind::Relu => {
                let out = layers::relu_forward(&x);
                saved.push(Saved::Relu { output: out.clone() });
                out
            }
            Kind::Up { cin, cout, w: wi } => {
                let out = layers::upconv_forward(&x, cin, h, w, &t[wi].data, cout);
                saved.push(Saved::Up { input: x, h, w });
                h *= 2;
                w *= 2;
                out
            }
            Kind::Conv1 { cin, cout, w: wi, b } => {
                let out = layers::conv1x1_forward(&x, cin, h * w, &t[wi].data, &t[b].data, cout);
                saved.push(Saved::Conv1 { input: x, hw: h * w });
                out
            }
        };
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(PactError::InvalidState("decoder produced non-finite output".into()));
    }
    let image = Image { grid, values: x };
    Ok((
        image,
        ActivationCache {
            saved,
            generation: p.generation,
            output_hw: arch.output_hw,
        },
    ))
}

/// Vector-Jacobian product `(∂D/∂Θ)ᵀ · grad_output`.
pub fn decoder_backward(p: &DecoderParams, cache: &ActivationCache, grad_output: &Image) -> Result<ParamGrads> {
    if cache.generation != p.generation || cache.saved.len() != p.program.len() {
        return Err(PactError::InvalidState(
            "activation cache does not belong to the current parameters".into(),
        ));
    }
    if grad_output.values.len() != cache.output_hw * cache.output_hw {
        return invalid("output gradient has the wrong size");
    }
    let mut grads = ParamGrads::zeros_like(p);
    let t = &p.params;
    let mut g = grad_output.values.clone();
    for (kind, saved) in p.program.iter().zip(&cache.saved).rev() {
        g = match (*kind, saved) {
            (Kind::Conv1 { cin, cout, w, b }, Saved::Conv1 { input, hw }) => {
                let (gw, gb) = two_mut(&mut grads.grads, w, b);
                layers::conv1x1_backward(input, cin, *hw, &t[w].data, cout, &g, gw, gb)
            }
            (Kind::Relu, Saved::Relu { output }) => layers::relu_backward(output, &g),
            (Kind::Bn { c, scale, shift }, Saved::Bn { cache, hw }) => {
                let (gs, gh) = two_mut(&mut grads.grads, scale, shift);
                layers::batchnorm_backward(cache, c, *hw, &t[scale].data, &g, gs, gh)
            }
            (Kind::Conv3 { cin, cout, w, b }, Saved::Conv3 { input, h, w: width }) => {
                let (gw, gb) = two_mut(&mut grads.grads, w, b);
                layers::conv3x3_backward(input, cin, *h, *width, &t[w].data, cout, &g, gw, gb)
            }
            (Kind::Up { cin, cout, w }, Saved::Up { input, h, w: width }) => {
                layers::upconv_backward(input, cin, *h, *width, &t[w].data, cout, &g, &mut grads.grads[w])
            }
            _ => {
                return Err(PactError::InvalidState(
                    "activation cache layout does not match the decoder".into(),
                ))
            }
        };
    }
    Ok(grads)
}

fn two_mut(v: &mut [Vec<f64>], a: usize, b: usize) -> (&mut [f64], &mut [f64]) {
    assert!(a < b);
    let (lo, hi) = v.split_at_mut(b);
    (&mut lo[a], &mut hi[0])
}
