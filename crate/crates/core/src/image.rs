//! Image and sinogram containers.

use std::fmt;
use std::str::FromStr;

use crate::error::{invalid, PactError, Result};
use crate::geometry::Grid;

/// Real-valued map on a [`Grid`], row-major with x fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl Image {
    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return invalid(format!(
                "image has {} values, grid {}x{} needs {}",
                values.len(),
                grid.nx,
                grid.ny,
                grid.len()
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return invalid("image values must be finite");
        }
        Ok(Self { grid, values })
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.grid.index(i, j);
        self.values[k] = v;
    }

    pub fn dot(&self, other: &Image) -> f64 {
        dot(&self.values, &other.values)
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Index of the largest value (first occurrence).
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (k, v) in self.values.iter().enumerate() {
            if *v > self.values[best] {
                best = k;
            }
        }
        (best % self.grid.nx, best / self.grid.nx)
    }

    /// Min-max rescaling to [0, 1]; constant images map to all zeros.
    pub fn normalized(&self) -> Image {
        let (lo, hi) = (self.min(), self.max());
        let span = hi - lo;
        let values = if span > 0.0 {
            self.values.iter().map(|v| (v - lo) / span).collect()
        } else {
            vec![0.0; self.values.len()]
        };
        Image {
            grid: self.grid,
            values,
        }
    }

    /// Negative values set to zero.
    pub fn clipped(&self) -> Image {
        Image {
            grid: self.grid,
            values: self.values.iter().map(|v| v.max(0.0)).collect(),
        }
    }

    pub fn scaled(&self, a: f64) -> Image {
        Image {
            grid: self.grid,
            values: self.values.iter().map(|v| a * v).collect(),
        }
    }

    pub(crate) fn check_same_grid(&self, other: &Image) -> Result<()> {
        if self.grid != other.grid {
            return invalid(format!(
                "grid mismatch: {}x{} vs {}x{}",
                self.grid.nx, self.grid.ny, other.grid.nx, other.grid.ny
            ));
        }
        Ok(())
    }
}

/// How an image is brought to [0, 1] before comparison or use as a prior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Normalization {
    /// `(x - min) / (max - min)`.
    #[default]
    MinMax,
    /// Negative values clipped to zero, then min-max.
    NonNegative,
}

impl Normalization {
    pub fn apply(self, x: &Image) -> Image {
        match self {
            Self::MinMax => x.normalized(),
            Self::NonNegative => x.clipped().normalized(),
        }
    }
}

impl FromStr for Normalization {
    type Err = PactError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "minmax" => Ok(Self::MinMax),
            "nonneg" => Ok(Self::NonNegative),
            other => Err(PactError::InvalidArgument(format!(
                "unknown normalization `{other}` (expected minmax or nonneg)"
            ))),
        }
    }
}

impl fmt::Display for Normalization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::MinMax => "minmax",
            Self::NonNegative => "nonneg",
        })
    }
}

/// Time-sampled channel data, stored channel-major (`data[ch * n_samples + k]`).
#[derive(Debug, Clone, PartialEq)]
pub struct Sinogram {
    pub n_channels: usize,
    pub n_samples: usize,
    /// Sample interval in seconds.
    pub dt: f64,
    /// Time of sample 0 in seconds.
    pub t0: f64,
    /// Speed of sound in m/s.
    pub sound_speed: f64,
    pub data: Vec<f64>,
}

impl Sinogram {
    pub fn zeros(n_channels: usize, n_samples: usize, dt: f64, t0: f64, sound_speed: f64) -> Self {
        Self {
            n_channels,
            n_samples,
            dt,
            t0,
            sound_speed,
            data: vec![0.0; n_channels * n_samples],
        }
    }

    pub fn new(
        n_channels: usize,
        n_samples: usize,
        dt: f64,
        t0: f64,
        sound_speed: f64,
        data: Vec<f64>,
    ) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return invalid(format!("sample interval must be positive, got {dt}"));
        }
        if !(sound_speed > 0.0 && sound_speed.is_finite()) {
            return invalid(format!("sound speed must be positive, got {sound_speed}"));
        }
        if data.len() != n_channels * n_samples {
            return invalid(format!(
                "sinogram data has {} values, expected {n_channels}x{n_samples}",
                data.len()
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return invalid("sinogram data must be finite");
        }
        Ok(Self {
            n_channels,
            n_samples,
            dt,
            t0,
            sound_speed,
            data,
        })
    }

    /// Same sampling parameters, different channel count, zero data.
    pub fn zeros_like_with_channels(&self, n_channels: usize) -> Self {
        Self::zeros(n_channels, self.n_samples, self.dt, self.t0, self.sound_speed)
    }

    pub fn channel(&self, ch: usize) -> &[f64] {
        &self.data[ch * self.n_samples..(ch + 1) * self.n_samples]
    }

    pub fn channel_mut(&mut self, ch: usize) -> &mut [f64] {
        &mut self.data[ch * self.n_samples..(ch + 1) * self.n_samples]
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn dot(&self, other: &Sinogram) -> f64 {
        dot(&self.data, &other.data)
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn energy(&self) -> f64 {
        self.dot(self)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
