//! Run settings: presets, `key = value` files, and flag overrides.
//!
//! Every setting has a key; the manifest written by each run lists all of
//! them, so feeding a manifest back with `--config` reproduces the run.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use pact_core::{MaskScheme, Normalization};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Desk,
    Paper,
    Invivo,
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "desk" => Ok(Self::Desk),
            "paper" => Ok(Self::Paper),
            "invivo" => Ok(Self::Invivo),
            other => Err(format!("unknown preset `{other}` (expected desk, paper or invivo)")),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Desk => "desk",
            Self::Paper => "paper",
            Self::Invivo => "invivo",
        })
    }
}

/// How measurements are scaled before reconstruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataScale {
    /// Use the sinogram as recorded.
    None,
    /// Divide data and operator by the largest absolute sample.
    Peak,
}

impl FromStr for DataScale {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "none" => Ok(Self::None),
            "peak" => Ok(Self::Peak),
            other => Err(format!("unknown data scale `{other}` (expected none or peak)")),
        }
    }
}

impl fmt::Display for DataScale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::None => "none",
            Self::Peak => "peak",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhantomKind {
    Vessel,
    Disc,
    Zero,
}

impl FromStr for PhantomKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "vessel" => Ok(Self::Vessel),
            "disc" => Ok(Self::Disc),
            "zero" => Ok(Self::Zero),
            other => Err(format!("unknown phantom `{other}` (expected vessel, disc or zero)")),
        }
    }
}

impl fmt::Display for PhantomKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Vessel => "vessel",
            Self::Disc => "disc",
            Self::Zero => "zero",
        })
    }
}

/// Comma-separated list value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct List<T>(pub Vec<T>);

impl<T: FromStr> FromStr for List<T> {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s.trim().is_empty() {
            return Ok(Self(Vec::new()));
        }
        s.split(',')
            .map(|p| p.trim().parse::<T>().map_err(|_| format!("bad list element `{}`", p.trim())))
            .collect::<std::result::Result<Vec<_>, _>>()
            .map(Self)
    }
}

impl<T: fmt::Display> fmt::Display for List<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|v| v.to_string()).collect();
        f.write_str(&parts.join(","))
    }
}

fn parse_scheme(s: &str) -> std::result::Result<MaskScheme, String> {
    s.parse()
}

fn parse_norm(s: &str) -> std::result::Result<Normalization, String> {
    s.parse().map_err(|e: pact_core::PactError| e.to_string())
}

macro_rules! settings {
    ($( $field:ident : $ty:ty = $key:literal, $parse:expr; )*) => {
        #[derive(Debug, Clone, PartialEq)]
        pub struct Settings {
            $( pub $field: $ty, )*
        }

        impl Settings {
            #[cfg(test)]
            pub const KEYS: &'static [&'static str] = &[$($key),*];

            /// Sets one key from its text form.
            pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
                let value = value.trim();
                match key {
                    $( $key => {
                        let parse: fn(&str) -> std::result::Result<$ty, String> = $parse;
                        self.$field = parse(value).map_err(|message| CliError::Config {
                            key: key.to_string(),
                            message,
                        })?;
                    } )*
                    _ => return Err(CliError::UnknownKey(key.to_string())),
                }
                Ok(())
            }

            /// All settings as `key = value` lines.
            pub fn to_lines(&self) -> Vec<String> {
                vec![$( format!("{} = {}", $key, self.$field), )*]
            }
        }
    };
}

fn num<T: FromStr>(s: &str) -> std::result::Result<T, String> {
    s.parse::<T>().map_err(|_| format!("`{s}` is not a valid number"))
}

settings! {
    preset: Preset = "preset", |s| s.parse();
    grid: usize = "grid", num;
    extent_mm: f64 = "extent-mm", num;
    sensors: usize = "sensors", num;
    radius_mm: f64 = "radius-mm", num;
    sound_speed: f64 = "sound-speed", num;
    sampling_mhz: f64 = "sampling-mhz", num;
    keep: f64 = "keep", num;
    scheme: MaskScheme = "scheme", parse_scheme;
    seed: u64 = "seed", num;
    seeds: List<u64> = "seeds", |s| s.parse();
    snr_db: f64 = "snr-db", num;
    phantom: PhantomKind = "phantom", |s| s.parse();
    branches: usize = "branches", num;
    supersample: usize = "supersample", num;
    data_scale: DataScale = "data-scale", |s| s.parse();
    iters: usize = "iters", num;
    lambda1: f64 = "lambda1", num;
    lambda2: f64 = "lambda2", num;
    lr: f64 = "lr", num;
    rms_decay: f64 = "rms-decay", num;
    width: usize = "width", num;
    upsample: List<usize> = "upsample", |s| s.parse();
    input_hw: usize = "input-hw", num;
    snapshot_every: usize = "snapshot-every", num;
    fd_norm: Normalization = "fd-norm", parse_norm;
    metric_norm: Normalization = "metric-norm", parse_norm;
    tv_lambda: f64 = "tv-lambda", num;
    tv_iters: usize = "tv-iters", num;
    prox_iters: usize = "prox-iters", num;
    study_iters: List<usize> = "study-iters", |s| s.parse();
}

impl Settings {
    pub fn preset(p: Preset) -> Self {
        let desk = Self {
            preset: Preset::Desk,
            grid: 64,
            extent_mm: 30.0,
            sensors: 128,
            radius_mm: 14.5,
            sound_speed: 1500.0,
            sampling_mhz: 0.0,
            keep: 0.5,
            scheme: MaskScheme::Uniform,
            seed: 0,
            seeds: List(vec![0, 1, 2]),
            snr_db: 40.0,
            phantom: PhantomKind::Vessel,
            branches: 4,
            supersample: 1,
            data_scale: DataScale::Peak,
            iters: 700,
            lambda1: 0.006,
            lambda2: 0.05,
            lr: 1e-3,
            rms_decay: 0.9,
            width: 32,
            upsample: List(vec![2, 3, 4]),
            input_hw: 8,
            snapshot_every: 100,
            fd_norm: Normalization::NonNegative,
            metric_norm: Normalization::NonNegative,
            tv_lambda: 0.03,
            tv_iters: 300,
            prox_iters: 20,
            study_iters: List(vec![100, 500, 1000, 2000, 4000, 8000]),
        };
        match p {
            Preset::Desk => desk,
            Preset::Paper => Self {
                preset: Preset::Paper,
                grid: 128,
                sampling_mhz: 40.0,
                width: 64,
                upsample: List(vec![1, 2, 3, 4]),
                ..desk
            },
            Preset::Invivo => Self {
                preset: Preset::Invivo,
                grid: 128,
                sampling_mhz: 40.0,
                width: 64,
                upsample: List(vec![1, 2, 3, 4]),
                lambda1: 0.005,
                lambda2: 0.1,
                ..desk
            },
        }
    }

    /// Preset, then config file, then explicit overrides (in order).
    pub fn resolve(
        preset: Option<Preset>,
        file: Option<&Path>,
        overrides: &[(String, String)],
    ) -> Result<Self> {
        let file_pairs = match file {
            Some(path) => parse_pairs(&fs::read_to_string(path).map_err(|e| CliError::Read {
                path: path.to_path_buf(),
                source: e,
            })?)?,
            None => Vec::new(),
        };
        let from_file = file_pairs
            .iter()
            .rev()
            .find(|(k, _)| k == "preset")
            .map(|(_, v)| {
                v.parse::<Preset>().map_err(|message| CliError::Config {
                    key: "preset".into(),
                    message,
                })
            })
            .transpose()?;
        let mut s = Self::preset(preset.or(from_file).unwrap_or(Preset::Desk));
        let settings_only = file_pairs.iter().filter(|(k, _)| !is_manifest_key(k));
        for (k, v) in settings_only.chain(overrides) {
            if k == "preset" {
                continue;
            }
            s.set(k, v)?;
        }
        if let Some(p) = preset {
            s.preset = p;
        }
        Ok(s)
    }
}

/// Keys a manifest carries besides settings.
pub fn is_manifest_key(k: &str) -> bool {
    k == "command" || k.starts_with("arg.")
}

/// Parses `key = value` lines; `#` starts a comment, blank lines are ignored.
/// Keys not in [`Settings::KEYS`] (such as a manifest's `command`) are kept
/// for the caller to interpret.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(CliError::Syntax {
                line: n + 1,
                text: raw.to_string(),
            });
        };
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}
