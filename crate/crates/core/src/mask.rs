//! Channel subsampling: the selection operator and its transpose.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};
use crate::image::Sinogram;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskScheme {
    Uniform,
    Random,
}

impl std::str::FromStr for MaskScheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "uniform" => Ok(Self::Uniform),
            "random" => Ok(Self::Random),
            other => Err(format!("unknown mask scheme `{other}` (expected uniform|random)")),
        }
    }
}

impl std::fmt::Display for MaskScheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Uniform => "uniform",
            Self::Random => "random",
        })
    }
}

/// Set of kept channel indices, sorted strictly increasing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelMask {
    pub total_channels: usize,
    pub kept: Vec<usize>,
}

impl ChannelMask {
    pub fn new(total_channels: usize, mut kept: Vec<usize>) -> Result<Self> {
        kept.sort_unstable();
        if kept.windows(2).any(|w| w[0] == w[1]) {
            return invalid("mask has duplicate channel indices");
        }
        if let Some(&k) = kept.last() {
            if k >= total_channels {
                return invalid(format!("mask index {k} out of range for {total_channels} channels"));
            }
        }
        Ok(Self {
            total_channels,
            kept,
        })
    }

    pub fn identity(total_channels: usize) -> Self {
        Self {
            total_channels,
            kept: (0..total_channels).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.kept.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kept.is_empty()
    }

    pub fn is_identity(&self) -> bool {
        self.kept.len() == self.total_channels
    }

    pub fn kept_fraction(&self) -> f64 {
        self.kept.len() as f64 / self.total_channels as f64
    }
}

pub fn make_mask(
    total: usize,
    keep_fraction: f64,
    scheme: MaskScheme,
    seed: u64,
) -> Result<ChannelMask> {
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return invalid(format!("keep fraction must lie in (0, 1], got {keep_fraction}"));
    }
    if total == 0 {
        return invalid("mask needs at least one channel");
    }
    let n_keep = ((total as f64 * keep_fraction).ceil() as usize).clamp(1, total);
    let kept = match scheme {
        MaskScheme::Uniform => (0..n_keep)
            .map(|k| ((k as f64 / keep_fraction).floor() as usize).min(total - 1))
            .collect(),
        MaskScheme::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rand::seq::index::sample(&mut rng, total, n_keep).into_vec()
        }
    };
    ChannelMask::new(total, kept)
}

/// Keep only the rows of `s` selected by `m`.
pub fn apply_mask(s: &Sinogram, m: &ChannelMask) -> Result<Sinogram> {
    if s.n_channels != m.total_channels {
        return invalid(format!(
            "sinogram has {} channels, mask expects {}",
            s.n_channels, m.total_channels
        ));
    }
    let mut out = s.zeros_like_with_channels(m.len());
    for (row, &ch) in m.kept.iter().enumerate() {
        out.channel_mut(row).copy_from_slice(s.channel(ch));
    }
    Ok(out)
}

/// Scatter a reduced sinogram back into a zero-filled full one.
pub fn embed_mask(s: &Sinogram, m: &ChannelMask) -> Result<Sinogram> {
    if s.n_channels != m.len() {
        return invalid(format!(
            "reduced sinogram has {} channels, mask keeps {}",
            s.n_channels,
            m.len()
        ));
    }
    let mut out = s.zeros_like_with_channels(m.total_channels);
    for (row, &ch) in m.kept.iter().enumerate() {
        out.channel_mut(ch).copy_from_slice(s.channel(row));
    }
    Ok(out)
}
