//! Subcommand bodies.

use std::path::Path;

use pact_core::io::{self, Tensor};
use pact_core::metrics::Quality;
use pact_core::{Image, PaOperator, PactError};

use crate::config::Settings;
use crate::error::{CliError, Result};
use crate::output::{num, Output};
use crate::pipeline::{self as pl, Operators, Problem};

pub const QUALITY_COLUMNS: [&str; 3] = ["ssim", "psnr", "snr"];

fn quality_cells(q: &Quality) -> Vec<String> {
    vec![num(q.ssim), num(q.psnr), num(q.snr)]
}

/// Runs a reader, attaching `path` to I/O and format failures.
fn load<T>(path: &Path, read: impl FnOnce(&Path) -> pact_core::Result<T>) -> Result<T> {
    read(path).map_err(|e| match e {
        PactError::Io(source) => CliError::Read {
            path: path.to_path_buf(),
            source,
        },
        other => CliError::Input {
            path: path.to_path_buf(),
            source: other,
        },
    })
}

fn read_image(path: &Path) -> Result<Image> {
    load(path, |p| io::read_image(p))
}

fn check_grid(s: &Settings, im: &Image, what: &str) -> Result<()> {
    if im.grid != pl::grid(s)? {
        return Err(CliError::Usage(format!(
            "{what} is {}x{}, settings describe a {}x{} grid of {} mm",
            im.grid.nx, im.grid.ny, s.grid, s.grid, s.extent_mm
        )));
    }
    Ok(())
}

/// Measurements plus the mask they were taken with.
struct Inputs {
    op: PaOperator,
    mask: pact_core::ChannelMask,
    b: pact_core::Sinogram,
    truth: Option<Image>,
}

fn load_inputs(s: &Settings, sino: &Path, mask: Option<&Path>, truth: Option<&Path>) -> Result<Inputs> {
    let raw = load(sino, |p| io::read_sinogram(p))?;
    let mask = match mask {
        Some(p) => load(p, |p| io::read_mask(p))?,
        None => pl::channel_mask(s, s.seed)?,
    };
    let b = pl::reduce(&raw, &mask)?;
    let op = PaOperator::new(pl::geometry_for(s, &raw)?);
    let truth = truth.map(read_image).transpose()?;
    if let Some(t) = &truth {
        check_grid(s, t, "ground truth")?;
    }
    Ok(Inputs { op, mask, b, truth })
}

fn write_metrics(out: &Output, s: &Settings, x: &Image, truth: &Image) -> Result<()> {
    let q = pl::quality(s, x, truth)?;
    let mut row = vec![s.metric_norm.to_string()];
    row.extend(quality_cells(&q));
    out.csv("metrics", &["normalization", "ssim", "psnr", "snr"], &[row])
}

pub fn phantom(s: &Settings, out: &Output) -> Result<()> {
    let im = pl::phantom_image(s, &pl::grid(s)?, s.seed, 1)?;
    out.image("phantom", &im)
}

pub fn simulate(s: &Settings, out: &Output, input: Option<&Path>) -> Result<()> {
    match input {
        Some(p) => {
            let im = read_image(p)?;
            check_grid(s, &im, "phantom")?;
            let op = PaOperator::new(pl::geometry(s)?);
            out.tensors("sino", &io::sinogram_records(&op.forward(&im)?))
        }
        None => {
            let ops = Operators::new(s)?;
            let (truth, clean) = ops.simulate(s, s.seed)?;
            out.image("phantom", &truth)?;
            out.tensors("sino", &io::sinogram_records(&clean))
        }
    }
}

pub fn mask(s: &Settings, out: &Output) -> Result<()> {
    out.tensors("mask", &io::mask_records(&pl::channel_mask(s, s.seed)?))
}

pub fn noise(s: &Settings, out: &Output, sino: &Path) -> Result<()> {
    let clean = load(sino, |p| io::read_sinogram(p))?;
    out.tensors("noisy", &io::sinogram_records(&pl::add_noise(s, &clean, s.seed)?))
}

pub fn recon_ubp(s: &Settings, out: &Output, sino: &Path, mask: Option<&Path>, truth: Option<&Path>) -> Result<()> {
    let inp = load_inputs(s, sino, mask, truth)?;
    let x = pl::direct(&inp.op, &inp.b, &inp.mask)?;
    out.image("ubp", &x)?;
    if let Some(t) = &inp.truth {
        write_metrics(out, s, &x, t)?;
    }
    Ok(())
}

pub fn recon_tv(s: &Settings, out: &Output, sino: &Path, mask: Option<&Path>, truth: Option<&Path>) -> Result<()> {
    let mut inp = load_inputs(s, sino, mask, truth)?;
    let r = pl::run_tv(s, &mut inp.op, &inp.b, &inp.mask, s.seed)?;
    out.image("tv", &r.image)?;
    let rows: Vec<Vec<String>> = r
        .history
        .iter()
        .enumerate()
        .map(|(i, h)| vec![i.to_string(), num(h.dc), num(h.tv), num(h.total)])
        .collect();
    out.csv("tv_history", &["iter", "dc", "tv", "total"], &rows)?;
    if let Some(t) = &inp.truth {
        write_metrics(out, s, &r.image, t)?;
    }
    Ok(())
}

pub fn recon_dip(
    s: &Settings,
    out: &Output,
    sino: &Path,
    mask: Option<&Path>,
    truth: Option<&Path>,
    fd: Option<&Path>,
) -> Result<()> {
    let mut inp = load_inputs(s, sino, mask, truth)?;
    let f_d = match fd {
        Some(p) => {
            let im = read_image(p)?;
            check_grid(s, &im, "direct reconstruction")?;
            im
        }
        None => pl::direct(&inp.op, &inp.b, &inp.mask)?,
    };
    out.image("fd", &pl::shape_prior(s, &f_d))?;
    let cfg = pl::dip_config(s, s.seed, s.lambda1, s.lambda2, s.iters);
    let mut rows = Vec::new();
    let mut failure = None;
    let truth_ref = inp.truth.clone();
    let r = pl::run_dip(&mut inp.op, s, &inp.b, &inp.mask, &f_d, &cfg, &mut |n, x, h| {
        let mut row = vec![n.to_string(), num(h.dc_loss), num(h.tv), num(h.sp_loss), num(h.total)];
        if let Some(t) = &truth_ref {
            match pl::quality(s, x, t) {
                Ok(q) => row.extend(quality_cells(&q)),
                Err(e) => failure = Some(e),
            }
        }
        rows.push(row);
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    let mut header = vec!["iter", "dc_loss", "tv", "sp_loss", "total"];
    if inp.truth.is_some() {
        header.extend(QUALITY_COLUMNS);
    }
    out.csv("dip_history", &header, &rows)?;
    out.image("dip", &r.image)?;
    let snaps: Vec<Tensor> = r
        .snapshots
        .iter()
        .map(|(n, x)| Tensor {
            name: format!("snapshot.{n}"),
            dims: vec![x.grid.ny as u64, x.grid.nx as u64],
            data: x.values.clone(),
        })
        .collect();
    out.tensors("snapshots", &snaps)?;
    let params: Vec<Tensor> = r
        .params
        .params
        .iter()
        .map(|p| Tensor {
            name: p.name.clone(),
            dims: p.dims.iter().map(|&d| d as u64).collect(),
            data: p.data.clone(),
        })
        .collect();
    out.tensors("params", &params)?;
    if let Some(t) = &inp.truth {
        write_metrics(out, s, &r.image, t)?;
    }
    Ok(())
}

pub fn metrics(s: &Settings, out: &Output, image: &Path, truth: &Path) -> Result<()> {
    let x = read_image(image)?;
    let t = read_image(truth)?;
    write_metrics(out, s, &x, &t)
}

pub fn study_iterations(s: &Settings, out: &Output) -> Result<()> {
    let mut checkpoints = s.study_iters.0.clone();
    checkpoints.sort_unstable();
    checkpoints.dedup();
    let Some(&last) = checkpoints.last() else {
        return Err(CliError::Usage("study-iters is empty".into()));
    };
    if checkpoints[0] == 0 {
        return Err(CliError::Usage("study-iters must be positive".into()));
    }
    let mut ops = Operators::new(s)?;
    let mut rows = Vec::new();
    let mut per_iter: Vec<Vec<Quality>> = vec![Vec::new(); checkpoints.len()];
    for &seed in &s.seeds.0 {
        let p = Problem::simulate(s, &ops, seed)?;
        out.image(&format!("truth_{seed}"), &p.truth)?;
        let cfg = pl::dip_config(s, seed, 0.0, 0.0, last);
        let zero = Image::zeros(p.truth.grid);
        let mut seen: Vec<(usize, Image, f64)> = Vec::new();
        pl::run_dip(&mut ops.recon, s, &p.b, &p.mask, &zero, &cfg, &mut |n, x, h| {
            if checkpoints.contains(&n) {
                seen.push((n, x.clone(), h.dc_loss));
            }
        })?;
        for (n, x, dc) in seen {
            let q = pl::quality(s, &x, &p.truth)?;
            let k = checkpoints.iter().position(|&c| c == n).unwrap();
            per_iter[k].push(q);
            out.image(&format!("iter_{seed}_{n}"), &x)?;
            let mut row = vec![seed.to_string(), n.to_string()];
            row.extend(quality_cells(&q));
            row.push(num(dc));
            rows.push(row);
        }
    }
    out.csv("iterations", &["seed", "iter", "ssim", "psnr", "snr", "dc_loss"], &rows)?;
    let summary: Vec<Vec<String>> = checkpoints
        .iter()
        .zip(&per_iter)
        .map(|(n, qs)| {
            vec![
                n.to_string(),
                num(pl::median(qs.iter().map(|q| q.ssim).collect())),
                num(pl::median(qs.iter().map(|q| q.psnr).collect())),
                num(pl::median(qs.iter().map(|q| q.snr).collect())),
            ]
        })
        .collect();
    out.csv("iterations_summary", &["iter", "ssim", "psnr", "snr"], &summary)
}

pub const ABLATION_METHODS: [&str; 5] = ["D", "D+TV", "D+TV+SP", "TV", "UBP"];

pub fn study_ablation(s: &Settings, out: &Output) -> Result<()> {
    let mut ops = Operators::new(s)?;
    let mut rows = Vec::new();
    let mut per_method: Vec<Vec<Quality>> = vec![Vec::new(); ABLATION_METHODS.len()];
    for &seed in &s.seeds.0 {
        let p = Problem::simulate(s, &ops, seed)?;
        out.image(&format!("truth_{seed}"), &p.truth)?;
        let f_d = pl::direct(&ops.recon, &p.b, &p.mask)?;
        let mut images = Vec::new();
        for (l1, l2) in [(0.0, 0.0), (s.lambda1, 0.0), (s.lambda1, s.lambda2)] {
            let cfg = pl::dip_config(s, seed, l1, l2, s.iters);
            let r = pl::run_dip(&mut ops.recon, s, &p.b, &p.mask, &f_d, &cfg, &mut |_, _, _| {})?;
            images.push(r.image);
        }
        images.push(pl::run_tv(s, &mut ops.recon, &p.b, &p.mask, seed)?.image);
        images.push(f_d);
        for (k, (method, x)) in ABLATION_METHODS.iter().zip(&images).enumerate() {
            let q = pl::quality(s, x, &p.truth)?;
            per_method[k].push(q);
            let tag = method.replace('+', "_");
            out.image(&format!("{tag}_{seed}"), x)?;
            let mut row = vec![method.to_string(), seed.to_string()];
            row.extend(quality_cells(&q));
            rows.push(row);
        }
    }
    out.csv("ablation", &["method", "seed", "ssim", "psnr", "snr"], &rows)?;
    let summary: Vec<Vec<String>> = ABLATION_METHODS
        .iter()
        .zip(&per_method)
        .map(|(m, qs)| {
            vec![
                m.to_string(),
                num(pl::median(qs.iter().map(|q| q.ssim).collect())),
                num(pl::median(qs.iter().map(|q| q.psnr).collect())),
                num(pl::median(qs.iter().map(|q| q.snr).collect())),
            ]
        })
        .collect();
    out.csv("ablation_summary", &["method", "ssim", "psnr", "snr"], &summary)
}
