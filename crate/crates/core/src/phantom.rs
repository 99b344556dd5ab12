//! Deterministic synthetic initial-pressure maps.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{invalid, Result};
use crate::geometry::{Grid, Point};
use crate::image::Image;

/// Accepted range for the fraction of nonzero pixels in a vessel phantom.
pub const VESSEL_SUPPORT: (f64, f64) = (0.03, 0.25);

/// Profile values below this fraction of the branch amplitude are dropped.
const PROFILE_CUTOFF: f64 = 0.02;
const MAX_RESAMPLES: u64 = 10_000;

struct Branch {
    points: Vec<(f64, f64)>,
    sigma: f64,
    amp: f64,
}

/// Branching random-walk vessel tree with Gaussian cross-sections.
///
/// Centerlines stay inside a disc of 42% of the smaller grid extent. Draws
/// that miss [`VESSEL_SUPPORT`] are rejected and redrawn from the same seed
/// stream, so the result is a pure function of `(grid, seed, n_branches)`.
pub fn vessel_phantom(grid: &Grid, seed: u64, n_branches: usize) -> Result<Image> {
    if n_branches == 0 {
        return invalid("vessel phantom needs at least one branch");
    }
    Ok(render(grid, &accepted_branches(grid, seed, n_branches)?, 1))
}

/// The phantom of [`vessel_phantom`] rendered on a grid `factor` times finer in
/// each direction (same extent), for simulating data off the reconstruction grid.
pub fn vessel_phantom_fine(grid: &Grid, seed: u64, n_branches: usize, factor: usize) -> Result<Image> {
    if n_branches == 0 {
        return invalid("vessel phantom needs at least one branch");
    }
    let fine = refine_grid(grid, factor)?;
    Ok(render(&fine, &accepted_branches(grid, seed, n_branches)?, factor))
}

/// Same extent and origin, `factor` times as many pixels along each axis.
pub fn refine_grid(grid: &Grid, factor: usize) -> Result<Grid> {
    if factor == 0 {
        return invalid("refinement factor must be at least 1");
    }
    Grid::new(
        grid.nx * factor,
        grid.ny * factor,
        grid.dx / factor as f64,
        grid.origin,
    )
}

/// Averages `factor x factor` blocks of `fine` onto `coarse`.
pub fn block_average(fine: &Image, coarse: &Grid, factor: usize) -> Result<Image> {
    if refine_grid(coarse, factor)?.nx != fine.grid.nx || coarse.ny * factor != fine.grid.ny {
        return invalid(format!(
            "{}x{} image is not a {factor}x refinement of {}x{}",
            fine.grid.nx, fine.grid.ny, coarse.nx, coarse.ny
        ));
    }
    let mut out = Image::zeros(*coarse);
    let w = 1.0 / (factor * factor) as f64;
    for j in 0..fine.grid.ny {
        for i in 0..fine.grid.nx {
            let k = coarse.index(i / factor, j / factor);
            out.values[k] += w * fine.get(i, j);
        }
    }
    Ok(out)
}

fn accepted_branches(grid: &Grid, seed: u64, n_branches: usize) -> Result<Vec<Branch>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MAX_RESAMPLES {
        let branches = draw_vessels(grid, &mut rng, n_branches);
        let img = render(grid, &branches, 1);
        let support = img.values.iter().filter(|&&v| v > 0.0).count() as f64 / grid.len() as f64;
        if (VESSEL_SUPPORT.0..=VESSEL_SUPPORT.1).contains(&support) {
            return Ok(branches);
        }
    }
    invalid(format!(
        "no vessel draw with support in {VESSEL_SUPPORT:?} for a {}x{} grid and {n_branches} branches",
        grid.nx, grid.ny
    ))
}

fn draw_vessels(grid: &Grid, rng: &mut ChaCha8Rng, n_branches: usize) -> Vec<Branch> {
    let (cx, cy) = (0.5 * (grid.nx as f64 - 1.0), 0.5 * (grid.ny as f64 - 1.0));
    let bound = 0.42 * grid.nx.min(grid.ny) as f64;
    let size = grid.nx.min(grid.ny) as f64;
    let turn = Normal::new(0.0, 0.12).unwrap();
    let inside = |x: f64, y: f64| (x - cx).hypot(y - cy) < bound;

    let mut branches = Vec::new();
    let mut pending: Vec<(f64, f64, f64, f64)> = Vec::new();
    for _ in 0..n_branches {
        let r = bound * 0.7 * rng.random::<f64>().sqrt();
        let a = rng.random::<f64>() * 2.0 * PI;
        let heading = rng.random::<f64>() * 2.0 * PI;
        pending.push((cx + r * a.cos(), cy + r * a.sin(), heading, 0.0));
    }
    while let Some((mut x, mut y, mut heading, depth)) = pending.pop() {
        let width = rng.random_range(2.0..=4.0) * (1.0 - 0.2 * depth);
        let sigma = width / (2.0 * (2.0 * 2f64.ln()).sqrt());
        let amp = rng.random_range(0.5..=1.0);
        let length = size * rng.random_range(0.25..0.6) * (1.0 - 0.3 * depth);
        let steps = (length / 0.5) as usize;
        let mut points = Vec::with_capacity(steps);
        for s in 0..steps {
            if !inside(x, y) {
                break;
            }
            points.push((x, y));
            heading += turn.sample(rng);
            x += 0.5 * heading.cos();
            y += 0.5 * heading.sin();
            if depth < 1.0 && s > 8 && rng.random::<f64>() < 0.012 {
                let side = if rng.random::<bool>() { 1.0 } else { -1.0 };
                pending.push((x, y, heading + side * rng.random_range(0.4..1.1), depth + 1.0));
            }
        }
        branches.push(Branch { points, sigma, amp });
    }
    branches
}

/// Branch coordinates are in pixels of the grid they were drawn on; `grid`
/// is `factor` times finer.
fn render(grid: &Grid, branches: &[Branch], factor: usize) -> Image {
    let mut img = Image::zeros(*grid);
    let (nx, ny) = (grid.nx as isize, grid.ny as isize);
    let f = factor as f64;
    // fine index of a coarse coordinate, and back
    let to_fine = |c: f64| if factor == 1 { c } else { (c + 0.5) * f - 0.5 };
    let to_coarse = |i: isize| if factor == 1 { i as f64 } else { (i as f64 + 0.5) / f - 0.5 };
    for b in branches {
        let reach = b.sigma * (-2.0 * PROFILE_CUTOFF.ln()).sqrt();
        let r = (reach * f).ceil() as isize;
        for &(px, py) in &b.points {
            let (ci, cj) = (to_fine(px).round() as isize, to_fine(py).round() as isize);
            for j in (cj - r).max(0)..=(cj + r).min(ny - 1) {
                for i in (ci - r).max(0)..=(ci + r).min(nx - 1) {
                    let d2 = (to_coarse(i) - px).powi(2) + (to_coarse(j) - py).powi(2);
                    if d2 > reach * reach {
                        continue;
                    }
                    let v = b.amp * (-d2 / (2.0 * b.sigma * b.sigma)).exp();
                    let k = grid.index(i as usize, j as usize);
                    if v > img.values[k] {
                        img.values[k] = v;
                    }
                }
            }
        }
    }
    for v in img.values.iter_mut() {
        *v = v.clamp(0.0, 1.0);
    }
    img
}

/// Sum of uniform discs with edge pixels weighted by their covered area.
pub fn disc_phantom(grid: &Grid, centers: &[Point], radii: &[f64], amps: &[f64]) -> Result<Image> {
    if centers.len() != radii.len() || centers.len() != amps.len() {
        return invalid(format!(
            "disc lists differ in length: {} centers, {} radii, {} amplitudes",
            centers.len(),
            radii.len(),
            amps.len()
        ));
    }
    let mut img = Image::zeros(*grid);
    for ((c, &r), &amp) in centers.iter().zip(radii).zip(amps) {
        if r <= 0.0 {
            continue;
        }
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let cover = coverage(grid, grid.center_of(i, j), *c, r);
                if cover > 0.0 {
                    let k = grid.index(i, j);
                    img.values[k] += amp * cover;
                }
            }
        }
    }
    Ok(img)
}

/// Fraction of the pixel centered at `p` inside the disc, by 16x16 supersampling
/// of boundary pixels.
fn coverage(grid: &Grid, p: Point, c: Point, r: f64) -> f64 {
    const SUB: usize = 16;
    let d = p.distance(&c);
    let half_diag = grid.dx * std::f64::consts::FRAC_1_SQRT_2;
    if d + half_diag <= r {
        return 1.0;
    }
    if d - half_diag >= r {
        return 0.0;
    }
    let mut hits = 0usize;
    for sj in 0..SUB {
        for si in 0..SUB {
            let ox = ((si as f64 + 0.5) / SUB as f64 - 0.5) * grid.dx;
            let oy = ((sj as f64 + 0.5) / SUB as f64 - 0.5) * grid.dx;
            if Point::new(p.x + ox, p.y + oy).distance(&c) <= r {
                hits += 1;
            }
        }
    }
    hits as f64 / (SUB * SUB) as f64
}
