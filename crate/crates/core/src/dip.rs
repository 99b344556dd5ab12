//! Deep-image-prior compressed-sensing reconstruction.
//!
//! The loss `½‖ΦA D(Θ,z) - b‖² + λ₁ TV_ε(D) + λ₂ ½‖D - f_d‖²` is differentiated
//! in two pieces: the image-space gradient is formed analytically with the
//! operator pair, then pulled back to `Θ` through the decoder.

use crate::decoder::{
    decoder_backward, decoder_forward, init_decoder, rmsprop_step, sample_input, DecoderArch,
    DecoderParams, FixedInput, OptState, ParamGrads,
};
use crate::error::{invalid, PactError, Result};
use crate::forward::PaOperator;
use crate::image::{Image, Sinogram};
use crate::mask::ChannelMask;
use crate::tv::{gradient, gradient_transpose};

pub const DEFAULT_DIP_ITERS: usize = 700;
pub const DEFAULT_LAMBDA1: f64 = 0.006;
pub const DEFAULT_LAMBDA2: f64 = 0.05;
pub const REAL_DATA_LAMBDA1: f64 = 0.005;
pub const REAL_DATA_LAMBDA2: f64 = 0.1;
pub const DEFAULT_TV_EPSILON: f64 = 1e-6;
pub const DEFAULT_SNAPSHOT_EVERY: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct DipConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub iters: usize,
    pub lr: f64,
    /// RMSProp accumulator decay `ρ`.
    pub decay: f64,
    pub seed: u64,
    pub tv_epsilon: f64,
    /// Keep `D(Θ_n, z)` whenever `n` is a multiple of this; `0` disables.
    pub snapshot_every: usize,
    pub arch: DecoderArch,
}

impl Default for DipConfig {
    fn default() -> Self {
        Self {
            lambda1: DEFAULT_LAMBDA1,
            lambda2: DEFAULT_LAMBDA2,
            iters: DEFAULT_DIP_ITERS,
            lr: 1e-3,
            decay: 0.9,
            seed: 0,
            tv_epsilon: DEFAULT_TV_EPSILON,
            snapshot_every: DEFAULT_SNAPSHOT_EVERY,
            arch: DecoderArch::default(),
        }
    }
}

impl DipConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda1 >= 0.0 && self.lambda1.is_finite()) || !(self.lambda2 >= 0.0 && self.lambda2.is_finite()) {
            return invalid(format!(
                "lambdas must be non-negative, got {} and {}",
                self.lambda1, self.lambda2
            ));
        }
        if self.iters == 0 {
            return invalid("iteration count must be at least 1");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return invalid(format!("learning rate must be positive, got {}", self.lr));
        }
        if !(0.0..1.0).contains(&self.decay) {
            return invalid(format!("RMSProp decay must lie in [0, 1), got {}", self.decay));
        }
        if !(self.tv_epsilon > 0.0) {
            return invalid(format!("TV smoothing must be positive, got {}", self.tv_epsilon));
        }
        self.arch.validate()
    }

    /// Seed of the fixed input, kept apart from the weight-initialization stream.
    pub fn input_seed(&self) -> u64 {
        self.seed ^ 0x5DEE_CE66_D1CE_4E5B
    }
}

/// Loss terms at one iterate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DipRecord {
    pub dc_loss: f64,
    /// Smoothed TV value.
    pub tv: f64,
    pub sp_loss: f64,
    /// `dc + λ₁·tv + λ₂·sp`
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct DipResult {
    pub image: Image,
    /// Record `n` is evaluated at `D(Θ_n, z)`, before the `n`-th update.
    pub history: Vec<DipRecord>,
    /// `(n, D(Θ_n, z))` pairs.
    pub snapshots: Vec<(usize, Image)>,
    pub params: DecoderParams,
    pub input: FixedInput,
}

/// `(Aᵀ Φᵀ r, ½‖r‖²)` with `r = ΦAx - b`.
pub fn dc_gradient(x: &Image, b: &Sinogram, mask: &ChannelMask, op: &PaOperator) -> Result<(Image, f64)> {
    op.geometry().check_sinogram(b, mask.len())?;
    let mut r = op.measure(x, mask)?;
    for (ri, bi) in r.data.iter_mut().zip(&b.data) {
        *ri -= bi;
    }
    let loss = 0.5 * r.energy();
    Ok((op.measure_adjoint(&r, mask)?, loss))
}

/// Gradient and value of `Σ √((∂ₓx)² + ε²) + √((∂ᵧx)² + ε²)`.
pub fn tv_gradient_smoothed(x: &Image, eps: f64) -> Result<(Image, f64)> {
    if !(eps > 0.0) {
        return invalid(format!("TV smoothing must be positive, got {eps}"));
    }
    let (nx, ny) = (x.grid.nx, x.grid.ny);
    let n = x.values.len();
    let mut gx = vec![0.0; n];
    let mut gy = vec![0.0; n];
    gradient(&x.values, nx, ny, &mut gx, &mut gy);
    let mut value = 0.0;
    for (a, b) in gx.iter_mut().zip(gy.iter_mut()) {
        let sa = (*a * *a + eps * eps).sqrt();
        let sb = (*b * *b + eps * eps).sqrt();
        value += sa + sb;
        *a /= sa;
        *b /= sb;
    }
    let mut g = Image::zeros(x.grid);
    gradient_transpose(&gx, &gy, nx, ny, &mut g.values);
    Ok((g, value))
}

/// `(x - f_d, ½‖x - f_d‖²)`
pub fn sp_gradient(x: &Image, f_d: &Image) -> Result<(Image, f64)> {
    x.check_same_grid(f_d)?;
    let mut g = x.clone();
    for (v, d) in g.values.iter_mut().zip(&f_d.values) {
        *v -= d;
    }
    let loss = 0.5 * g.values.iter().map(|v| v * v).sum::<f64>();
    Ok((g, loss))
}

/// Image-space gradient of the full loss at `x`, with its terms.
pub fn image_gradient(
    x: &Image,
    b: &Sinogram,
    mask: &ChannelMask,
    op: &PaOperator,
    f_d: &Image,
    cfg: &DipConfig,
) -> Result<(Image, DipRecord)> {
    let (mut g, dc_loss) = dc_gradient(x, b, mask, op)?;
    let (gt, tv) = tv_gradient_smoothed(x, cfg.tv_epsilon)?;
    let (gs, sp_loss) = sp_gradient(x, f_d)?;
    for ((v, t), s) in g.values.iter_mut().zip(&gt.values).zip(&gs.values) {
        *v += cfg.lambda1 * t + cfg.lambda2 * s;
    }
    let total = dc_loss + cfg.lambda1 * tv + cfg.lambda2 * sp_loss;
    Ok((g, DipRecord { dc_loss, tv, sp_loss, total }))
}

/// Scalar loss at `Θ`.
pub fn dip_loss(
    p: &DecoderParams,
    z: &FixedInput,
    b: &Sinogram,
    mask: &ChannelMask,
    op: &PaOperator,
    f_d: &Image,
    cfg: &DipConfig,
) -> Result<DipRecord> {
    let (x, _) = decoder_forward(p, z, op.geometry().grid)?;
    Ok(image_gradient(&x, b, mask, op, f_d, cfg)?.1)
}

/// `∇_Θ L` via the analytic image gradient and backpropagation, plus the
/// current output and loss terms.
pub fn dip_gradient(
    p: &DecoderParams,
    z: &FixedInput,
    b: &Sinogram,
    mask: &ChannelMask,
    op: &PaOperator,
    f_d: &Image,
    cfg: &DipConfig,
) -> Result<(ParamGrads, Image, DipRecord)> {
    let (x, cache) = decoder_forward(p, z, op.geometry().grid)?;
    let (g, rec) = image_gradient(&x, b, mask, op, f_d, cfg)?;
    Ok((decoder_backward(p, &cache, &g)?, x, rec))
}

/// Runs the optimization; `observe` is called with every iterate and its record.
pub fn dip_reconstruct_observed(
    b: &Sinogram,
    mask: &ChannelMask,
    op: &PaOperator,
    f_d: &Image,
    cfg: &DipConfig,
    observe: &mut dyn FnMut(usize, &Image, &DipRecord),
) -> Result<DipResult> {
    cfg.validate()?;
    let grid = op.geometry().grid;
    if f_d.grid != grid {
        return invalid("direct reconstruction is on a different grid");
    }
    if cfg.arch.output_hw != grid.nx || grid.nx != grid.ny {
        return invalid(format!(
            "decoder output {} does not match the {}x{} grid",
            cfg.arch.output_hw, grid.nx, grid.ny
        ));
    }
    op.geometry().check_sinogram(b, mask.len())?;
    let mut params = init_decoder(&cfg.arch, cfg.seed)?;
    let z = sample_input(&cfg.arch, cfg.input_seed());
    let mut opt = OptState::with_hyper(&params, cfg.lr, cfg.decay, 1e-8);
    let mut history = Vec::with_capacity(cfg.iters + 1);
    let mut snapshots = Vec::new();
    for n in 0..=cfg.iters {
        let (x, cache) = decoder_forward(&params, &z, grid)?;
        let (g, rec) = image_gradient(&x, b, mask, op, f_d, cfg)?;
        if !rec.total.is_finite() {
            return Err(PactError::Divergence {
                what: "DIP reconstruction",
                iteration: n,
            });
        }
        observe(n, &x, &rec);
        history.push(rec);
        if cfg.snapshot_every > 0 && n > 0 && n % cfg.snapshot_every == 0 {
            snapshots.push((n, x.clone()));
        }
        if n == cfg.iters {
            return Ok(DipResult {
                image: x,
                history,
                snapshots,
                params,
                input: z,
            });
        }
        let grads = decoder_backward(&params, &cache, &g)?;
        rmsprop_step(&mut params, &grads, &mut opt).map_err(|e| match e {
            PactError::Divergence { .. } => PactError::Divergence {
                what: "DIP reconstruction",
                iteration: n,
            },
            other => other,
        })?;
    }
    unreachable!()
}

pub fn dip_reconstruct(
    b: &Sinogram,
    mask: &ChannelMask,
    op: &PaOperator,
    f_d: &Image,
    cfg: &DipConfig,
) -> Result<DipResult> {
    dip_reconstruct_observed(b, mask, op, f_d, cfg, &mut |_, _, _| {})
}
