//! Anisotropic total variation: seminorm, proximal map, and the
//! proximal-gradient compressed-sensing solver.

use crate::error::{invalid, PactError, Result};
use crate::forward::PaOperator;
use crate::image::{Image, Sinogram};
use crate::mask::ChannelMask;

pub const DEFAULT_PROX_ITERS: usize = 20;
pub const DEFAULT_TV_ITERS: usize = 300;
pub const POWER_ITERS: usize = 50;

/// `Σ |f[i+1,j] - f[i,j]| + |f[i,j+1] - f[i,j]|`, zero differences across the border.
pub fn tv_seminorm(f: &Image) -> f64 {
    let (nx, ny) = (f.grid.nx, f.grid.ny);
    let v = &f.values;
    let mut total = 0.0;
    for j in 0..ny {
        for i in 0..nx {
            let c = v[j * nx + i];
            if i + 1 < nx {
                total += (v[j * nx + i + 1] - c).abs();
            }
            if j + 1 < ny {
                total += (v[(j + 1) * nx + i] - c).abs();
            }
        }
    }
    total
}

/// Forward differences with Neumann boundary (last difference is zero).
pub(crate) fn gradient(v: &[f64], nx: usize, ny: usize, gx: &mut [f64], gy: &mut [f64]) {
    for j in 0..ny {
        for i in 0..nx {
            let k = j * nx + i;
            gx[k] = if i + 1 < nx { v[k + 1] - v[k] } else { 0.0 };
            gy[k] = if j + 1 < ny { v[k + nx] - v[k] } else { 0.0 };
        }
    }
}

/// Transpose of [`gradient`] (negative divergence).
pub(crate) fn gradient_transpose(gx: &[f64], gy: &[f64], nx: usize, ny: usize, out: &mut [f64]) {
    for j in 0..ny {
        for i in 0..nx {
            let k = j * nx + i;
            let mut acc = 0.0;
            if i + 1 < nx {
                acc -= gx[k];
            }
            if i > 0 {
                acc += gx[k - 1];
            }
            if j + 1 < ny {
                acc -= gy[k];
            }
            if j > 0 {
                acc += gy[k - nx];
            }
            out[k] = acc;
        }
    }
}

/// `½‖u - f‖² + weight · TV(u)`.
pub fn prox_objective(u: &Image, f: &Image, weight: f64) -> f64 {
    let fit: f64 = u
        .values
        .iter()
        .zip(&f.values)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    0.5 * fit + weight * tv_seminorm(u)
}

/// Approximate `argmin_u ½‖u - f‖² + weight · TV(u)`.
///
/// Projected gradient on the dual: with `u = f - weight · ∇ᵀp`, the dual
/// variables are stepped by `∇u / (8 weight)` and clipped to `[-1, 1]`
/// componentwise. The mean of `f` is preserved exactly.
pub fn tv_prox(f: &Image, weight: f64, inner_iters: usize) -> Result<Image> {
    Ok(tv_prox_trace(f, weight, inner_iters)?.0)
}

/// [`tv_prox`] plus the prox objective after every inner iteration.
pub fn tv_prox_trace(f: &Image, weight: f64, inner_iters: usize) -> Result<(Image, Vec<f64>)> {
    let mut dual = TvDual::new(f.values.len());
    let mut trace = Vec::with_capacity(inner_iters);
    let u = dual.prox(f, weight, inner_iters, Some(&mut trace))?;
    Ok((u, trace))
}

/// Dual variables of the TV prox, reusable as a warm start when the prox is
/// applied to a slowly changing sequence of inputs.
#[derive(Debug, Clone)]
pub struct TvDual {
    px: Vec<f64>,
    py: Vec<f64>,
}

impl TvDual {
    pub fn new(n: usize) -> Self {
        Self {
            px: vec![0.0; n],
            py: vec![0.0; n],
        }
    }

    /// Prox of `weight · TV` at `f`, starting from the stored duals.
    pub fn prox(
        &mut self,
        f: &Image,
        weight: f64,
        inner_iters: usize,
        mut trace: Option<&mut Vec<f64>>,
    ) -> Result<Image> {
        if !(weight >= 0.0) || !weight.is_finite() {
            return invalid(format!("TV weight must be non-negative, got {weight}"));
        }
        if inner_iters == 0 {
            return invalid("TV prox needs at least one inner iteration");
        }
        let n = f.values.len();
        if self.px.len() != n {
            return invalid(format!("dual state has {} entries, image {n}", self.px.len()));
        }
        if weight == 0.0 {
            if let Some(t) = trace.as_mut() {
                t.extend(std::iter::repeat(0.0).take(inner_iters));
            }
            return Ok(f.clone());
        }
        let (nx, ny) = (f.grid.nx, f.grid.ny);
        let (px, py) = (&mut self.px, &mut self.py);
        let mut gx = vec![0.0; n];
        let mut gy = vec![0.0; n];
        let mut div = vec![0.0; n];
        let mut u = f.clone();
        let apply = |px: &[f64], py: &[f64], div: &mut [f64], u: &mut Image| {
            gradient_transpose(px, py, nx, ny, div);
            for k in 0..n {
                u.values[k] = f.values[k] - weight * div[k];
            }
        };
        apply(px, py, &mut div, &mut u);
        let step = 1.0 / (8.0 * weight);
        for _ in 0..inner_iters {
            gradient(&u.values, nx, ny, &mut gx, &mut gy);
            for k in 0..n {
                px[k] = (px[k] + step * gx[k]).clamp(-1.0, 1.0);
                py[k] = (py[k] + step * gy[k]).clamp(-1.0, 1.0);
            }
            apply(px, py, &mut div, &mut u);
            if let Some(t) = trace.as_mut() {
                t.push(prox_objective(&u, f, weight));
            }
        }
        Ok(u)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TvConfig {
    /// TV weight `λ`.
    pub lambda: f64,
    /// Gradient step; `None` uses `0.9 / L` from power iteration.
    pub step: Option<f64>,
    pub iters: usize,
    pub prox_iters: usize,
    /// Seed of the power-iteration start vector.
    pub seed: u64,
}

impl Default for TvConfig {
    fn default() -> Self {
        Self {
            lambda: 1e-3,
            step: None,
            iters: DEFAULT_TV_ITERS,
            prox_iters: DEFAULT_PROX_ITERS,
            seed: 0,
        }
    }
}

/// Objective terms at one iterate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TvRecord {
    /// `½‖ΦAf - b‖²`
    pub dc: f64,
    pub tv: f64,
    /// `dc + λ · tv`
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct TvResult {
    pub image: Image,
    /// One record per iteration, evaluated at the iterate entering it.
    pub history: Vec<TvRecord>,
    pub step: f64,
    pub lipschitz: f64,
}

/// `f ← prox_{step·λ·TV}(f - step · AᵀΦᵀ(ΦAf - b))` from `f = 0`, with the
/// prox duals carried over between iterations.
pub fn recon_tv(
    b: &Sinogram,
    mask: &ChannelMask,
    op: &PaOperator,
    cfg: &TvConfig,
) -> Result<TvResult> {
    if !(cfg.lambda >= 0.0) {
        return invalid(format!("TV lambda must be non-negative, got {}", cfg.lambda));
    }
    if let Some(step) = cfg.step {
        if !(step > 0.0 && step.is_finite()) {
            return invalid(format!("step must be positive, got {step}"));
        }
    }
    op.geometry().check_sinogram(b, mask.len())?;
    let lipschitz = op.lipschitz(mask, POWER_ITERS, cfg.seed)?;
    let step = match cfg.step {
        Some(s) => s,
        None if lipschitz > 0.0 => 0.9 / lipschitz,
        None => 1.0,
    };
    let mut f = Image::zeros(op.geometry().grid);
    let mut dual = TvDual::new(f.values.len());
    let mut history = Vec::with_capacity(cfg.iters);
    for iteration in 0..cfg.iters {
        let mut r = op.measure(&f, mask)?;
        for (ri, bi) in r.data.iter_mut().zip(&b.data) {
            *ri -= bi;
        }
        let dc = 0.5 * r.energy();
        let tv = tv_seminorm(&f);
        let total = dc + cfg.lambda * tv;
        if !total.is_finite() {
            return Err(PactError::Divergence {
                what: "TV reconstruction",
                iteration,
            });
        }
        history.push(TvRecord { dc, tv, total });
        let g = op.measure_adjoint(&r, mask)?;
        let mut next = f.clone();
        for (x, gi) in next.values.iter_mut().zip(&g.values) {
            *x -= step * gi;
        }
        f = inexact_prox_step(&mut dual, &f, &next, step * cfg.lambda, cfg.prox_iters)?;
    }
    if f.values.iter().any(|v| !v.is_finite()) {
        return Err(PactError::Divergence {
            what: "TV reconstruction",
            iteration: cfg.iters,
        });
    }
    Ok(TvResult {
        image: f,
        history,
        step,
        lipschitz,
    })
}

/// Extra warm-started prox rounds allowed before keeping the current iterate.
const MAX_PROX_ROUNDS: usize = 10;

/// Prox of `weight · TV` at `v`, accepted only once it scores no worse on the
/// prox objective than the current iterate `f`. That condition makes the
/// outer objective non-increasing for steps up to `1/L` despite the truncated
/// inner solver.
fn inexact_prox_step(dual: &mut TvDual, f: &Image, v: &Image, weight: f64, inner: usize) -> Result<Image> {
    let bound = prox_objective(f, v, weight);
    for _ in 0..MAX_PROX_ROUNDS {
        let u = dual.prox(v, weight, inner, None)?;
        if prox_objective(&u, v, weight) <= bound {
            return Ok(u);
        }
    }
    Ok(f.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::make_grid;

    fn img(n: usize, vals: Vec<f64>) -> Image {
        Image::from_values(make_grid(n, n, 1.0).unwrap(), vals).unwrap()
    }

    #[test]
    fn constant_has_zero_tv() {
        assert_eq!(tv_seminorm(&img(5, vec![3.0; 25])), 0.0);
    }

    #[test]
    fn two_by_two_step() {
        // rows (y) are [0, 1] and [0, 1]: two horizontal unit jumps
        assert_eq!(tv_seminorm(&img(2, vec![0.0, 1.0, 0.0, 1.0])), 2.0);
    }

    #[test]
    fn gradient_transpose_is_adjoint() {
        let (nx, ny) = (5, 4);
        let v: Vec<f64> = (0..20).map(|k| (k as f64 * 0.7).sin()).collect();
        let qx: Vec<f64> = (0..20).map(|k| (k as f64 * 1.3).cos()).collect();
        let qy: Vec<f64> = (0..20).map(|k| (k as f64 * 0.4).sin()).collect();
        let mut gx = vec![0.0; 20];
        let mut gy = vec![0.0; 20];
        gradient(&v, nx, ny, &mut gx, &mut gy);
        let mut back = vec![0.0; 20];
        gradient_transpose(&qx, &qy, nx, ny, &mut back);
        let lhs: f64 = (0..20).map(|k| gx[k] * qx[k] + gy[k] * qy[k]).sum();
        let rhs: f64 = (0..20).map(|k| v[k] * back[k]).sum();
        assert!((lhs - rhs).abs() < 1e-13);
    }

    #[test]
    fn zero_weight_prox_is_identity() {
        let f = img(4, (0..16).map(|k| (k as f64).sqrt()).collect());
        assert_eq!(tv_prox(&f, 0.0, 20).unwrap(), f);
    }

    #[test]
    fn huge_weight_flattens_to_mean() {
        let f = img(8, (0..64).map(|k| ((k * 37 % 11) as f64) * 0.3).collect());
        let mean = f.mean();
        let u = tv_prox(&f, 1e6, 5000).unwrap();
        for v in &u.values {
            assert!((v - mean).abs() < 1e-3, "{v} vs {mean}");
        }
        assert!((u.mean() - mean).abs() < 1e-12);
    }

    #[test]
    fn negative_weight_is_rejected() {
        let f = img(2, vec![0.0; 4]);
        assert!(tv_prox(&f, -1.0, 20).is_err());
        assert!(tv_prox(&f, 1.0, 0).is_err());
    }
}
