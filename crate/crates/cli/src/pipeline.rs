//! Problem construction and the reconstruction runs shared by subcommands.

use pact_core::decoder::DecoderArch;
use pact_core::dip::{self, DipConfig, DipRecord, DipResult};
use pact_core::metrics::Quality;
use pact_core::tv::{self, TvConfig, TvResult};
use pact_core::{
    apply_mask, make_grid, make_mask, make_sensor_array, noise, phantom, ubp, ChannelMask,
    ForwardGeometry, Grid, Image, PaOperator, Point, Sinogram,
};

use crate::config::{DataScale, PhantomKind, Settings};
use crate::error::{CliError, Result};

pub fn grid(s: &Settings) -> Result<Grid> {
    Ok(make_grid(s.grid, s.grid, s.extent_mm * 1e-3)?)
}

/// Geometry with the default (or `sampling-mhz`) time axis.
pub fn geometry(s: &Settings) -> Result<ForwardGeometry> {
    let sensors = make_sensor_array(s.sensors, s.radius_mm * 1e-3, Point::ORIGIN)?;
    let g = grid(s)?;
    Ok(if s.sampling_mhz > 0.0 {
        ForwardGeometry::with_sampling_rate(g, sensors, s.sound_speed, s.sampling_mhz * 1e6)?
    } else {
        ForwardGeometry::new(g, sensors, s.sound_speed)?
    })
}

/// Geometry matching the time axis of recorded data.
pub fn geometry_for(s: &Settings, sino: &Sinogram) -> Result<ForwardGeometry> {
    let sensors = make_sensor_array(s.sensors, s.radius_mm * 1e-3, Point::ORIGIN)?;
    Ok(ForwardGeometry::with_time_axis(
        grid(s)?,
        sensors,
        sino.sound_speed,
        sino.n_samples,
        sino.dt,
        sino.t0,
    )?)
}

pub fn channel_mask(s: &Settings, seed: u64) -> Result<ChannelMask> {
    Ok(make_mask(s.sensors, s.keep, s.scheme, seed)?)
}

/// Phantom on `grid` refined `factor` times (`factor = 1` is `grid` itself).
pub fn phantom_image(s: &Settings, grid: &Grid, seed: u64, factor: usize) -> Result<Image> {
    let fine = phantom::refine_grid(grid, factor)?;
    Ok(match s.phantom {
        PhantomKind::Vessel => phantom::vessel_phantom_fine(grid, seed, s.branches, factor)?,
        PhantomKind::Disc => {
            let r = 0.15 * grid.extent().0;
            phantom::disc_phantom(
                &fine,
                &[Point::new(-0.3 * r, 0.2 * r), Point::new(1.2 * r, -0.8 * r)],
                &[r, 0.5 * r],
                &[1.0, 0.6],
            )?
        }
        PhantomKind::Zero => Image::zeros(fine),
    })
}

/// Forward operators for simulation and reconstruction.
pub struct Operators {
    pub recon: PaOperator,
    /// Present when `supersample > 1`.
    pub fine: Option<PaOperator>,
    pub factor: usize,
}

impl Operators {
    pub fn new(s: &Settings) -> Result<Self> {
        let geom = geometry(s)?;
        let factor = s.supersample.max(1);
        let fine = if factor > 1 {
            let g = ForwardGeometry::with_time_axis(
                phantom::refine_grid(&geom.grid, factor)?,
                geom.sensors.clone(),
                geom.sound_speed,
                geom.n_samples,
                geom.dt,
                geom.t0,
            )?;
            Some(PaOperator::new(g))
        } else {
            None
        };
        Ok(Self {
            recon: PaOperator::new(geom),
            fine,
            factor,
        })
    }

    /// `(truth on the reconstruction grid, clean full sinogram)`.
    pub fn simulate(&self, s: &Settings, seed: u64) -> Result<(Image, Sinogram)> {
        let grid = self.recon.geometry().grid;
        match &self.fine {
            Some(op) => {
                let fine = phantom_image(s, &grid, seed, self.factor)?;
                let truth = phantom::block_average(&fine, &grid, self.factor)?;
                Ok((truth, op.forward(&fine)?))
            }
            None => {
                let truth = phantom_image(s, &grid, seed, 1)?;
                let clean = self.recon.forward(&truth)?;
                Ok((truth, clean))
            }
        }
    }
}

pub fn add_noise(s: &Settings, clean: &Sinogram, seed: u64) -> Result<Sinogram> {
    if s.snr_db.is_infinite() || clean.energy() == 0.0 {
        return Ok(clean.clone());
    }
    Ok(noise::add_noise(clean, s.snr_db, seed)?)
}

/// One simulated compressed-sensing problem.
pub struct Problem {
    pub truth: Image,
    pub mask: ChannelMask,
    /// Reduced, noisy measurements.
    pub b: Sinogram,
}

impl Problem {
    pub fn simulate(s: &Settings, ops: &Operators, seed: u64) -> Result<Self> {
        let (truth, clean) = ops.simulate(s, seed)?;
        let noisy = add_noise(s, &clean, seed)?;
        let mask = channel_mask(s, seed)?;
        let b = apply_mask(&noisy, &mask)?;
        Ok(Self { truth, mask, b })
    }
}

/// Reduces a full sinogram with `mask`, or checks that it is already reduced.
pub fn reduce(sino: &Sinogram, mask: &ChannelMask) -> Result<Sinogram> {
    if sino.n_channels == mask.len() {
        Ok(sino.clone())
    } else if sino.n_channels == mask.total_channels {
        Ok(apply_mask(sino, mask)?)
    } else {
        Err(CliError::Usage(format!(
            "sinogram has {} channels; mask keeps {} of {}",
            sino.n_channels,
            mask.len(),
            mask.total_channels
        )))
    }
}

/// Divisor applied to data and operator under `data-scale`.
pub fn data_divisor(s: &Settings, b: &Sinogram) -> f64 {
    match s.data_scale {
        DataScale::None => 1.0,
        DataScale::Peak => {
            let peak = b.data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if peak > 0.0 {
                peak
            } else {
                1.0
            }
        }
    }
}

/// Measurements and operator brought to the configured scale.
pub fn scaled(s: &Settings, op: &mut PaOperator, b: &Sinogram) -> Result<Sinogram> {
    let c = data_divisor(s, b);
    op.set_gain(1.0 / c)?;
    let mut out = b.clone();
    out.data.iter_mut().for_each(|v| *v /= c);
    Ok(out)
}

pub fn direct(op: &PaOperator, b: &Sinogram, mask: &ChannelMask) -> Result<Image> {
    Ok(ubp::ubp(b, op.geometry(), mask)?)
}

pub fn tv_config(s: &Settings, seed: u64) -> TvConfig {
    TvConfig {
        lambda: s.tv_lambda,
        step: None,
        iters: s.tv_iters,
        prox_iters: s.prox_iters,
        seed,
    }
}

pub fn run_tv(s: &Settings, op: &mut PaOperator, b: &Sinogram, mask: &ChannelMask, seed: u64) -> Result<TvResult> {
    let bs = scaled(s, op, b)?;
    Ok(tv::recon_tv(&bs, mask, op, &tv_config(s, seed))?)
}

pub fn arch(s: &Settings) -> DecoderArch {
    DecoderArch {
        channels: vec![s.width; 5],
        input_hw: s.input_hw,
        output_hw: s.grid,
        upsample_blocks: s.upsample.0.clone(),
    }
}

pub fn dip_config(s: &Settings, seed: u64, lambda1: f64, lambda2: f64, iters: usize) -> DipConfig {
    DipConfig {
        lambda1,
        lambda2,
        iters,
        lr: s.lr,
        decay: s.rms_decay,
        seed,
        tv_epsilon: dip::DEFAULT_TV_EPSILON,
        snapshot_every: s.snapshot_every,
        arch: arch(s),
    }
}

/// Shape prior from the direct reconstruction.
pub fn shape_prior(s: &Settings, f_d: &Image) -> Image {
    s.fd_norm.apply(f_d)
}

#[allow(clippy::too_many_arguments)]
pub fn run_dip(
    op: &mut PaOperator,
    s: &Settings,
    b: &Sinogram,
    mask: &ChannelMask,
    f_d: &Image,
    cfg: &DipConfig,
    observe: &mut dyn FnMut(usize, &Image, &DipRecord),
) -> Result<DipResult> {
    let bs = scaled(s, op, b)?;
    let prior = shape_prior(s, f_d);
    Ok(dip::dip_reconstruct_observed(&bs, mask, op, &prior, cfg, observe)?)
}

pub fn quality(s: &Settings, x: &Image, truth: &Image) -> Result<Quality> {
    Ok(Quality::compare_with(x, truth, s.metric_norm)?)
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
