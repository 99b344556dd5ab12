//! Discrete photoacoustic forward operator and its exact adjoint.
//!
//! The recorded pressure at sensor `r` is modeled as
//!
//! ```text
//! p(r, t) = 1/(4π v²) · ∂/∂t [ 1/(v t) · ∮_{|r'-r| = v t} p0(r') ds ]
//! ```
//!
//! The circle integral is discretized into arc points spaced at most `dx/2`
//! apart; each point deposits its arc length, split by bilinear weights, onto
//! the four surrounding pixel centers. The resulting sparse matrix `W` is
//! assembled once per geometry, followed by the radial scaling `N` and the
//! central-difference time derivative `D`:
//!
//! ```text
//! forward = D · N · W        adjoint = Wᵀ · N · Dᵀ
//! ```

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::geometry::{Grid, Point, SensorArray};
use crate::image::{Image, Sinogram};
use crate::mask::{apply_mask, embed_mask, ChannelMask};

/// Margin applied to the longest pixel-to-sensor travel time when choosing a
/// default record length.
const RECORD_MARGIN: f64 = 1.1;

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardGeometry {
    pub grid: Grid,
    pub sensors: SensorArray,
    pub n_samples: usize,
    pub dt: f64,
    pub t0: f64,
    pub sound_speed: f64,
}

impl ForwardGeometry {
    /// Default time axis: `t0 = 0`, one sample per half pixel of travel, record
    /// long enough for the farthest pixel plus 10%.
    pub fn new(grid: Grid, sensors: SensorArray, sound_speed: f64) -> Result<Self> {
        let dt = 0.5 * grid.dx / sound_speed;
        Self::with_sample_interval(grid, sensors, sound_speed, dt)
    }

    /// Time axis from an explicit sampling rate in Hz (e.g. 40 MSa/s).
    pub fn with_sampling_rate(
        grid: Grid,
        sensors: SensorArray,
        sound_speed: f64,
        rate_hz: f64,
    ) -> Result<Self> {
        if !(rate_hz > 0.0 && rate_hz.is_finite()) {
            return invalid(format!("sampling rate must be positive, got {rate_hz}"));
        }
        Self::with_sample_interval(grid, sensors, sound_speed, 1.0 / rate_hz)
    }

    pub fn with_sample_interval(
        grid: Grid,
        sensors: SensorArray,
        sound_speed: f64,
        dt: f64,
    ) -> Result<Self> {
        if !(sound_speed > 0.0 && sound_speed.is_finite()) {
            return invalid(format!("sound speed must be positive, got {sound_speed}"));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return invalid(format!("sample interval must be positive, got {dt}"));
        }
        let reach = max_distance(&grid, &sensors);
        let n_samples = ((RECORD_MARGIN * reach / (sound_speed * dt)).ceil() as usize).max(2);
        Self::with_time_axis(grid, sensors, sound_speed, n_samples, dt, 0.0)
    }

    pub fn with_time_axis(
        grid: Grid,
        sensors: SensorArray,
        sound_speed: f64,
        n_samples: usize,
        dt: f64,
        t0: f64,
    ) -> Result<Self> {
        if !(sound_speed > 0.0 && sound_speed.is_finite()) {
            return invalid(format!("sound speed must be positive, got {sound_speed}"));
        }
        if !(dt > 0.0 && dt.is_finite()) || !t0.is_finite() {
            return invalid(format!("invalid time axis dt={dt}, t0={t0}"));
        }
        if n_samples < 2 {
            return invalid("need at least 2 time samples");
        }
        let reach = max_distance(&grid, &sensors);
        if sound_speed * (t0 + n_samples as f64 * dt) < reach {
            return invalid(format!(
                "record of {n_samples} samples does not cover the farthest pixel ({reach:.3e} m)"
            ));
        }
        Ok(Self {
            grid,
            sensors,
            n_samples,
            dt,
            t0,
            sound_speed,
        })
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn empty_sinogram(&self, n_channels: usize) -> Sinogram {
        Sinogram::zeros(n_channels, self.n_samples, self.dt, self.t0, self.sound_speed)
    }

    /// Per-sample factor `1 / (4π v² · v t)` with `t` clamped below by `dt`.
    pub fn radial_scale(&self, k: usize) -> f64 {
        let v = self.sound_speed;
        1.0 / (4.0 * PI * v * v * v * self.time(k).max(self.dt))
    }

    pub fn check_image(&self, f: &Image) -> Result<()> {
        if f.grid != self.grid {
            return invalid(format!(
                "image grid {}x{} (dx {:.3e}) does not match geometry grid {}x{} (dx {:.3e})",
                f.grid.nx, f.grid.ny, f.grid.dx, self.grid.nx, self.grid.ny, self.grid.dx
            ));
        }
        Ok(())
    }

    pub fn check_sinogram(&self, s: &Sinogram, n_channels: usize) -> Result<()> {
        if s.n_channels != n_channels || s.n_samples != self.n_samples {
            return invalid(format!(
                "sinogram is {}x{}, expected {}x{}",
                s.n_channels, s.n_samples, n_channels, self.n_samples
            ));
        }
        Ok(())
    }
}

fn max_distance(grid: &Grid, sensors: &SensorArray) -> f64 {
    let corners = [
        grid.center_of(0, 0),
        grid.center_of(grid.nx - 1, 0),
        grid.center_of(0, grid.ny - 1),
        grid.center_of(grid.nx - 1, grid.ny - 1),
    ];
    sensors
        .positions
        .iter()
        .flat_map(|s| corners.iter().map(move |c| s.distance(c)))
        .fold(0.0, f64::max)
}

/// Compressed sparse rows with `u32` column indices.
#[derive(Debug, Clone)]
struct Csr {
    offsets: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
}

impl Csr {
    fn row(&self, r: usize) -> (&[u32], &[f64]) {
        let (a, b) = (self.offsets[r], self.offsets[r + 1]);
        (&self.cols[a..b], &self.vals[a..b])
    }

    fn n_rows(&self) -> usize {
        self.offsets.len() - 1
    }

    fn transpose(&self, n_cols: usize) -> Csr {
        let mut counts = vec![0usize; n_cols + 1];
        for &c in &self.cols {
            counts[c as usize + 1] += 1;
        }
        for k in 0..n_cols {
            counts[k + 1] += counts[k];
        }
        let offsets = counts.clone();
        let mut next = counts;
        let mut cols = vec![0u32; self.cols.len()];
        let mut vals = vec![0.0; self.vals.len()];
        for r in 0..self.n_rows() {
            let (rc, rv) = self.row(r);
            for (&c, &v) in rc.iter().zip(rv) {
                let slot = next[c as usize];
                cols[slot] = r as u32;
                vals[slot] = v;
                next[c as usize] += 1;
            }
        }
        Csr {
            offsets,
            cols,
            vals,
        }
    }
}

/// Arc-integral weights for one channel: one sparse row per time sample.
///
/// Arc points are laid out relative to the direction from the sensor to the
/// array center, so the discretization rotates with the channel.
fn channel_rows(geom: &ForwardGeometry, channel: usize) -> (Vec<usize>, Vec<u32>, Vec<f64>) {
    let sensor = geom.sensors.positions[channel];
    let heading = geom.sensors.angle(channel) + PI;
    let grid = &geom.grid;
    let (nx, ny) = (grid.nx as isize, grid.ny as isize);
    let mut scratch = vec![0.0f64; grid.len()];
    let mut touched: Vec<u32> = Vec::new();
    let mut lens = Vec::with_capacity(geom.n_samples);
    let mut cols = Vec::new();
    let mut vals = Vec::new();

    // Pixel-center bounding box, padded by one pixel for the bilinear footprint.
    let lo = Point::new(grid.origin.x - grid.dx, grid.origin.y - grid.dx);
    let hi = Point::new(
        grid.origin.x + grid.nx as f64 * grid.dx,
        grid.origin.y + grid.ny as f64 * grid.dx,
    );
    let near = {
        let cx = sensor.x.clamp(lo.x, hi.x);
        let cy = sensor.y.clamp(lo.y, hi.y);
        sensor.distance(&Point::new(cx, cy))
    };
    let far = [lo, hi, Point::new(lo.x, hi.y), Point::new(hi.x, lo.y)]
        .iter()
        .map(|c| sensor.distance(c))
        .fold(0.0, f64::max);

    let max_step = 0.5 * grid.dx;
    for k in 0..geom.n_samples {
        let radius = geom.sound_speed * geom.time(k);
        if radius > 0.0 && radius >= near && radius <= far {
            let n_pts = (2.0 * PI * radius / max_step).ceil().max(1.0) as usize;
            let ds = 2.0 * PI * radius / n_pts as f64;
            for m in 0..n_pts {
                let phi = heading + 2.0 * PI * (m as f64 + 0.5) / n_pts as f64;
                let p = Point::new(sensor.x + radius * phi.cos(), sensor.y + radius * phi.sin());
                let (u, v) = grid.continuous_index(p);
                let (fu, fv) = (u.floor(), v.floor());
                let (i0, j0) = (fu as isize, fv as isize);
                if i0 < -1 || j0 < -1 || i0 >= nx || j0 >= ny {
                    continue;
                }
                let (au, av) = (u - fu, v - fv);
                let corners = [
                    (i0, j0, (1.0 - au) * (1.0 - av)),
                    (i0 + 1, j0, au * (1.0 - av)),
                    (i0, j0 + 1, (1.0 - au) * av),
                    (i0 + 1, j0 + 1, au * av),
                ];
                for (i, j, w) in corners {
                    if i < 0 || j < 0 || i >= nx || j >= ny || w == 0.0 {
                        continue;
                    }
                    let idx = (j * nx + i) as usize;
                    if scratch[idx] == 0.0 {
                        touched.push(idx as u32);
                    }
                    scratch[idx] += ds * w;
                }
            }
        }
        touched.sort_unstable();
        lens.push(touched.len());
        for &idx in &touched {
            cols.push(idx);
            vals.push(scratch[idx as usize]);
            scratch[idx as usize] = 0.0;
        }
        touched.clear();
    }
    (lens, cols, vals)
}

/// Central differences, one-sided at both ends.
fn time_derivative(x: &[f64], dt: f64, out: &mut [f64]) {
    let n = x.len();
    out[0] = (x[1] - x[0]) / dt;
    for k in 1..n - 1 {
        out[k] = (x[k + 1] - x[k - 1]) / (2.0 * dt);
    }
    out[n - 1] = (x[n - 1] - x[n - 2]) / dt;
}

/// Transpose of [`time_derivative`].
fn time_derivative_transpose(y: &[f64], dt: f64, out: &mut [f64]) {
    let n = y.len();
    out.iter_mut().for_each(|v| *v = 0.0);
    out[0] -= y[0] / dt;
    out[1] += y[0] / dt;
    for k in 1..n - 1 {
        out[k + 1] += y[k] / (2.0 * dt);
        out[k - 1] -= y[k] / (2.0 * dt);
    }
    out[n - 1] += y[n - 1] / dt;
    out[n - 2] -= y[n - 1] / dt;
}

/// Assembled forward/adjoint pair for one geometry.
#[derive(Debug, Clone)]
pub struct PaOperator {
    geom: ForwardGeometry,
    weights: Csr,
    weights_t: Csr,
    scale: Vec<f64>,
    gain: f64,
}

impl PaOperator {
    pub fn new(geom: ForwardGeometry) -> Self {
        let blocks: Vec<_> = (0..geom.sensors.count)
            .into_par_iter()
            .map(|ch| channel_rows(&geom, ch))
            .collect();
        let nnz: usize = blocks.iter().map(|b| b.1.len()).sum();
        let mut offsets = Vec::with_capacity(geom.sensors.count * geom.n_samples + 1);
        let mut cols = Vec::with_capacity(nnz);
        let mut vals = Vec::with_capacity(nnz);
        offsets.push(0);
        for (lens, c, v) in blocks {
            for len in lens {
                offsets.push(offsets.last().unwrap() + len);
            }
            cols.extend(c);
            vals.extend(v);
        }
        let weights = Csr {
            offsets,
            cols,
            vals,
        };
        let weights_t = weights.transpose(geom.grid.len());
        let scale = (0..geom.n_samples).map(|k| geom.radial_scale(k)).collect();
        Self {
            geom,
            weights,
            weights_t,
            scale,
            gain: 1.0,
        }
    }

    /// Multiplies [`forward`](Self::forward) and [`adjoint`](Self::adjoint) by
    /// `gain` (used to bring measurements to unit scale).
    pub fn set_gain(&mut self, gain: f64) -> Result<()> {
        if !(gain > 0.0 && gain.is_finite()) {
            return invalid(format!("operator gain must be positive, got {gain}"));
        }
        self.gain = gain;
        Ok(())
    }

    pub fn gain(&self) -> f64 {
        self.gain
    }

    pub fn geometry(&self) -> &ForwardGeometry {
        &self.geom
    }

    pub fn n_channels(&self) -> usize {
        self.geom.sensors.count
    }

    /// Nonzero arc weights stored.
    pub fn nnz(&self) -> usize {
        self.weights.vals.len()
    }

    /// Weight `w(channel, sample, pixel)`.
    pub fn weight(&self, channel: usize, sample: usize, pixel: usize) -> f64 {
        let (c, v) = self.weights.row(channel * self.geom.n_samples + sample);
        match c.binary_search(&(pixel as u32)) {
            Ok(pos) => v[pos],
            Err(_) => 0.0,
        }
    }

    /// Arc integrals `W f` without scaling or differentiation.
    pub fn spherical_mean(&self, f: &Image) -> Result<Sinogram> {
        self.geom.check_image(f)?;
        let mut out = self.geom.empty_sinogram(self.n_channels());
        out.data
            .par_chunks_mut(self.geom.n_samples)
            .enumerate()
            .for_each(|(ch, trace)| self.arc_integrals(&f.values, ch, trace));
        Ok(out)
    }

    /// Scatter with the same weights: `Wᵀ s`.
    pub fn spherical_mean_adjoint(&self, s: &Sinogram) -> Result<Image> {
        self.geom.check_sinogram(s, self.n_channels())?;
        Ok(self.scatter(&s.data))
    }

    pub fn forward(&self, f: &Image) -> Result<Sinogram> {
        self.geom.check_image(f)?;
        let n = self.geom.n_samples;
        let dt = self.geom.dt;
        let mut out = self.geom.empty_sinogram(self.n_channels());
        out.data
            .par_chunks_mut(n)
            .enumerate()
            .for_each_init(
                || vec![0.0; n],
                |tmp, (ch, trace)| {
                    self.arc_integrals(&f.values, ch, tmp);
                    for (t, s) in tmp.iter_mut().zip(&self.scale) {
                        *t *= s * self.gain;
                    }
                    time_derivative(tmp, dt, trace);
                },
            );
        Ok(out)
    }

    pub fn adjoint(&self, s: &Sinogram) -> Result<Image> {
        self.geom.check_sinogram(s, self.n_channels())?;
        let n = self.geom.n_samples;
        let dt = self.geom.dt;
        let mut pre = vec![0.0; s.data.len()];
        pre.par_chunks_mut(n)
            .zip(s.data.par_chunks(n))
            .for_each(|(out, trace)| {
                time_derivative_transpose(trace, dt, out);
                for (o, sc) in out.iter_mut().zip(&self.scale) {
                    *o *= sc * self.gain;
                }
            });
        Ok(self.scatter(&pre))
    }

    /// `Φ A f`: forward model restricted to the kept channels.
    pub fn measure(&self, f: &Image, mask: &ChannelMask) -> Result<Sinogram> {
        apply_mask(&self.forward(f)?, mask)
    }

    /// `Aᵀ Φᵀ r` for a reduced sinogram `r`.
    pub fn measure_adjoint(&self, r: &Sinogram, mask: &ChannelMask) -> Result<Image> {
        self.adjoint(&embed_mask(r, mask)?)
    }

    /// Largest eigenvalue of `AᵀΦᵀΦA` by power iteration from a seeded start.
    pub fn lipschitz(&self, mask: &ChannelMask, iters: usize, seed: u64) -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let grid = self.geom.grid;
        let mut x = Image::zeros(grid);
        for v in x.values.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
        let mut norm = x.norm();
        let mut lambda = 0.0;
        for _ in 0..iters.max(1) {
            x = x.scaled(1.0 / norm);
            let y = self.measure_adjoint(&self.measure(&x, mask)?, mask)?;
            lambda = x.dot(&y);
            norm = y.norm();
            if norm == 0.0 {
                return Ok(0.0);
            }
            x = y;
        }
        Ok(lambda.max(norm))
    }

    fn arc_integrals(&self, f: &[f64], ch: usize, trace: &mut [f64]) {
        let base = ch * self.geom.n_samples;
        for (k, out) in trace.iter_mut().enumerate() {
            let (c, v) = self.weights.row(base + k);
            *out = c.iter().zip(v).map(|(&j, &w)| w * f[j as usize]).sum();
        }
    }

    fn scatter(&self, rows: &[f64]) -> Image {
        let mut img = Image::zeros(self.geom.grid);
        img.values.par_iter_mut().enumerate().for_each(|(px, out)| {
            let (r, v) = self.weights_t.row(px);
            *out = r.iter().zip(v).map(|(&row, &w)| w * rows[row as usize]).sum();
        });
        img
    }
}

/// One-shot arc integrals; assembles the operator for this call.
pub fn spherical_mean(f: &Image, geom: &ForwardGeometry) -> Result<Sinogram> {
    geom.check_image(f)?;
    PaOperator::new(geom.clone()).spherical_mean(f)
}

/// One-shot forward model; assembles the operator for this call.
pub fn forward(f: &Image, geom: &ForwardGeometry) -> Result<Sinogram> {
    geom.check_image(f)?;
    PaOperator::new(geom.clone()).forward(f)
}

/// One-shot adjoint; assembles the operator for this call.
pub fn adjoint(s: &Sinogram, geom: &ForwardGeometry) -> Result<Image> {
    geom.check_sinogram(s, geom.sensors.count)?;
    PaOperator::new(geom.clone()).adjoint(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{make_grid, make_sensor_array};

    fn small_geom(n: usize, sensors: usize) -> ForwardGeometry {
        let grid = make_grid(n, n, 0.01).unwrap();
        let arr = make_sensor_array(sensors, 0.006, Point::ORIGIN).unwrap();
        ForwardGeometry::new(grid, arr, 1500.0).unwrap()
    }

    #[test]
    fn default_time_axis_covers_grid() {
        let g = small_geom(16, 8);
        assert_eq!(g.t0, 0.0);
        assert!((g.sound_speed * g.dt - 0.5 * g.grid.dx).abs() < 1e-18);
        let reach = max_distance(&g.grid, &g.sensors);
        assert!(g.sound_speed * g.n_samples as f64 * g.dt >= 1.1 * reach - 1e-12);
    }

    #[test]
    fn short_record_is_rejected() {
        let g = small_geom(16, 8);
        let r = ForwardGeometry::with_time_axis(g.grid, g.sensors, 1500.0, 4, g.dt, 0.0);
        assert!(r.is_err());
    }

    #[test]
    fn derivative_transpose_matches_dense() {
        let n = 7;
        let dt = 0.3;
        let mut dense = vec![vec![0.0; n]; n];
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            let mut col = vec![0.0; n];
            time_derivative(&e, dt, &mut col);
            for i in 0..n {
                dense[i][j] = col[i];
            }
        }
        let y: Vec<f64> = (0..n).map(|k| (k as f64).cos()).collect();
        let mut got = vec![0.0; n];
        time_derivative_transpose(&y, dt, &mut got);
        for j in 0..n {
            let want: f64 = (0..n).map(|i| dense[i][j] * y[i]).sum();
            assert!((want - got[j]).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_image_gives_zero_sinogram() {
        let g = small_geom(8, 4);
        let op = PaOperator::new(g.clone());
        let s = op.forward(&Image::zeros(g.grid)).unwrap();
        assert!(s.data.iter().all(|&v| v == 0.0));
        let back = op.adjoint(&g.empty_sinogram(4)).unwrap();
        assert!(back.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn grid_mismatch_is_rejected() {
        let g = small_geom(8, 4);
        let other = make_grid(9, 8, 0.01).unwrap();
        assert!(spherical_mean(&Image::zeros(other), &g).is_err());
        assert!(adjoint(&g.empty_sinogram(3), &g).is_err());
    }

    #[test]
    fn centered_impulse_is_rotationally_symmetric() {
        // Odd grid so that a pixel sits exactly on the array center.
        let grid = make_grid(15, 15, 0.01).unwrap();
        let arr = make_sensor_array(4, 0.006, Point::ORIGIN).unwrap();
        let g = ForwardGeometry::new(grid, arr, 1500.0).unwrap();
        let mut f = Image::zeros(grid);
        f.set(7, 7, 1.0);
        let s = spherical_mean(&f, &g).unwrap();
        let (peak, _) = s
            .channel(0)
            .iter()
            .enumerate()
            .fold((0, 0.0), |acc, (k, &v)| if v > acc.1 { (k, v) } else { acc });
        let t_peak = g.time(peak);
        assert!((t_peak - 0.006 / 1500.0).abs() <= 2.0 * g.dt);
        for ch in 1..4 {
            for (a, b) in s.channel(0).iter().zip(s.channel(ch)) {
                assert!((a - b).abs() <= 1e-9 * a.abs().max(1e-30));
            }
        }
    }
}
