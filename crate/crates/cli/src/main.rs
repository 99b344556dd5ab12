//! `pact`: simulation, reconstruction and study runner.

mod commands;
mod config;
mod error;
mod output;
mod pipeline;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{is_manifest_key, parse_pairs, Preset, Settings};
use error::{CliError, Result};
use output::Output;

#[derive(Parser)]
#[command(name = "pact", version, about = "Photoacoustic reconstruction from subsampled sensor data")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// `key = value` configuration file (a manifest also works).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    preset: Option<Preset>,
    /// Output directory.
    #[arg(long, global = true, default_value = "pact-out")]
    out: PathBuf,
    #[arg(long, global = true)]
    grid: Option<String>,
    #[arg(long = "extent-mm", global = true)]
    extent_mm: Option<String>,
    #[arg(long, global = true)]
    sensors: Option<String>,
    #[arg(long = "radius-mm", global = true)]
    radius_mm: Option<String>,
    #[arg(long, global = true)]
    keep: Option<String>,
    #[arg(long, global = true)]
    scheme: Option<String>,
    #[arg(long, global = true)]
    seed: Option<String>,
    #[arg(long = "snr-db", global = true)]
    snr_db: Option<String>,
    #[arg(long, global = true)]
    iters: Option<String>,
    #[arg(long, global = true)]
    lambda1: Option<String>,
    #[arg(long, global = true)]
    lambda2: Option<String>,
    #[arg(long, global = true)]
    lr: Option<String>,
    /// Any setting, as `key=value`; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Common {
    fn overrides(&self) -> Result<Vec<(String, String)>> {
        let named = [
            ("grid", &self.grid),
            ("extent-mm", &self.extent_mm),
            ("sensors", &self.sensors),
            ("radius-mm", &self.radius_mm),
            ("keep", &self.keep),
            ("scheme", &self.scheme),
            ("seed", &self.seed),
            ("snr-db", &self.snr_db),
            ("iters", &self.iters),
            ("lambda1", &self.lambda1),
            ("lambda2", &self.lambda2),
            ("lr", &self.lr),
        ];
        let mut out: Vec<(String, String)> = Vec::new();
        for kv in &self.set {
            let Some((k, v)) = kv.split_once('=') else {
                return Err(CliError::Usage(format!("--set expects KEY=VALUE, got `{kv}`")));
            };
            out.push((k.trim().to_string(), v.trim().to_string()));
        }
        for (k, v) in named {
            if let Some(v) = v {
                out.push((k.to_string(), v.clone()));
            }
        }
        Ok(out)
    }

    fn settings(&self) -> Result<Settings> {
        Settings::resolve(self.preset, self.config.as_deref(), &self.overrides()?)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Render a phantom.
    Phantom,
    /// Forward-simulate a full sinogram.
    Simulate {
        /// Phantom image; generated from the settings when absent.
        #[arg(long)]
        phantom: Option<PathBuf>,
    },
    /// Draw a channel mask.
    Mask,
    /// Add white noise at `snr-db`.
    Noise {
        #[arg(long)]
        sino: PathBuf,
    },
    /// Universal back-projection.
    ReconUbp(ReconFiles),
    /// TV-regularized compressed sensing.
    ReconTv(ReconFiles),
    /// Untrained-decoder reconstruction.
    ReconDip {
        #[command(flatten)]
        files: ReconFiles,
        /// Direct reconstruction used as shape prior; UBP of the data when absent.
        #[arg(long)]
        fd: Option<PathBuf>,
    },
    /// Score an image against ground truth.
    Metrics {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        truth: PathBuf,
    },
    /// Unregularized decoder quality versus iteration count.
    StudyIterations,
    /// Regularization ablation with the TV baseline.
    StudyAblation,
    /// Rerun the command recorded in a manifest.
    Replay {
        manifest: PathBuf,
    },
}

#[derive(Args, Clone)]
struct ReconFiles {
    /// Full or already reduced sinogram.
    #[arg(long)]
    sino: PathBuf,
    /// Channel mask; drawn from the settings when absent.
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Ground truth for metrics.
    #[arg(long)]
    truth: Option<PathBuf>,
}

/// File arguments of any subcommand, keyed as in the manifest.
type Files = BTreeMap<String, PathBuf>;

fn files_of(command: &Command) -> Files {
    let mut f = Files::new();
    let mut put = |k: &str, v: &Option<PathBuf>| {
        if let Some(p) = v {
            f.insert(k.to_string(), p.clone());
        }
    };
    match command {
        Command::Simulate { phantom } => put("phantom", phantom),
        Command::Noise { sino } => put("sino", &Some(sino.clone())),
        Command::ReconUbp(r) | Command::ReconTv(r) | Command::ReconDip { files: r, .. } => {
            put("sino", &Some(r.sino.clone()));
            put("mask", &r.mask);
            put("truth", &r.truth);
            if let Command::ReconDip { fd, .. } = command {
                put("fd", fd);
            }
        }
        Command::Metrics { image, truth } => {
            put("image", &Some(image.clone()));
            put("truth", &Some(truth.clone()));
        }
        _ => {}
    }
    f
}

fn name_of(command: &Command) -> &'static str {
    match command {
        Command::Phantom => "phantom",
        Command::Simulate { .. } => "simulate",
        Command::Mask => "mask",
        Command::Noise { .. } => "noise",
        Command::ReconUbp(_) => "recon-ubp",
        Command::ReconTv(_) => "recon-tv",
        Command::ReconDip { .. } => "recon-dip",
        Command::Metrics { .. } => "metrics",
        Command::StudyIterations => "study-iterations",
        Command::StudyAblation => "study-ablation",
        Command::Replay { .. } => "replay",
    }
}

fn required<'a>(files: &'a Files, key: &str) -> Result<&'a Path> {
    files
        .get(key)
        .map(PathBuf::as_path)
        .ok_or_else(|| CliError::Usage(format!("missing file argument `{key}`")))
}

fn run(name: &str, files: &Files, s: &Settings, out: &Output) -> Result<()> {
    let opt = |k: &str| files.get(k).map(PathBuf::as_path);
    let args: Vec<(&str, String)> = files
        .iter()
        .map(|(k, v)| (k.as_str(), v.display().to_string()))
        .collect();
    out.manifest(name, &args, s)?;
    match name {
        "phantom" => commands::phantom(s, out),
        "simulate" => commands::simulate(s, out, opt("phantom")),
        "mask" => commands::mask(s, out),
        "noise" => commands::noise(s, out, required(files, "sino")?),
        "recon-ubp" => commands::recon_ubp(s, out, required(files, "sino")?, opt("mask"), opt("truth")),
        "recon-tv" => commands::recon_tv(s, out, required(files, "sino")?, opt("mask"), opt("truth")),
        "recon-dip" => commands::recon_dip(
            s,
            out,
            required(files, "sino")?,
            opt("mask"),
            opt("truth"),
            opt("fd"),
        ),
        "metrics" => commands::metrics(s, out, required(files, "image")?, required(files, "truth")?),
        "study-iterations" => commands::study_iterations(s, out),
        "study-ablation" => commands::study_ablation(s, out),
        other => Err(CliError::Usage(format!("manifest names unknown command `{other}`"))),
    }
}

fn replay(manifest: &Path, common: &Common) -> Result<()> {
    let text = fs::read_to_string(manifest).map_err(|e| CliError::Read {
        path: manifest.to_path_buf(),
        source: e,
    })?;
    let pairs = parse_pairs(&text)?;
    let mut name = None;
    let mut files = Files::new();
    for (k, v) in pairs.iter().filter(|(k, _)| is_manifest_key(k)) {
        match k.strip_prefix("arg.") {
            Some(arg) => {
                files.insert(arg.to_string(), PathBuf::from(v));
            }
            None => name = Some(v.clone()),
        }
    }
    let name = name.ok_or_else(|| CliError::Usage(format!("{} has no `command` line", manifest.display())))?;
    let s = Settings::resolve(None, Some(manifest), &common.overrides()?)?;
    run(&name, &files, &s, &Output::create(&common.out)?)
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var("PACT_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .map_err(|_| CliError::Usage(format!("PACT_THREADS must be a positive integer, got `{v}`")))?;
    if n == 0 {
        return Err(CliError::Usage("PACT_THREADS must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot size thread pool: {e}")))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| {
        let common = &cli.common;
        match &cli.command {
            Command::Replay { manifest } => replay(manifest, common),
            command => {
                let s = common.settings()?;
                run(name_of(command), &files_of(command), &s, &Output::create(&common.out)?)
            }
        }
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pact: {e}");
            ExitCode::FAILURE
        }
    }
}
