//! Universal back-projection.

use std::f64::consts::PI;

use crate::error::{invalid, Result};
use crate::forward::ForwardGeometry;
use crate::image::{Image, Sinogram};
use crate::mask::ChannelMask;

/// Back-projects `2p - 2t ∂p/∂t` from every kept channel.
///
/// `s` holds one row per kept channel of `mask` (a full sinogram goes with an
/// identity mask). Each element covers `2πR / count` of arc; the normalizer is
/// `2π` times the kept fraction so amplitudes stay comparable across masks.
/// Travel times outside the record contribute nothing, and pixels on or
/// outside the detection circle are left at zero.
pub fn ubp(s: &Sinogram, geom: &ForwardGeometry, mask: &ChannelMask) -> Result<Image> {
    if mask.total_channels != geom.sensors.count {
        return invalid(format!(
            "mask covers {} channels, array has {}",
            mask.total_channels, geom.sensors.count
        ));
    }
    geom.check_sinogram(s, mask.len())?;
    let n = s.n_samples;
    let dt = s.dt;
    let grid = geom.grid;

    // Back-projection term per kept channel, sampled on the record's time axis.
    let terms: Vec<Vec<f64>> = (0..mask.len())
        .map(|row| {
            let p = s.channel(row);
            (0..n)
                .map(|k| {
                    let dp = if k == 0 {
                        (p[1] - p[0]) / dt
                    } else if k == n - 1 {
                        (p[n - 1] - p[n - 2]) / dt
                    } else {
                        (p[k + 1] - p[k - 1]) / (2.0 * dt)
                    };
                    2.0 * p[k] - 2.0 * s.time(k) * dp
                })
                .collect()
        })
        .collect();

    let d_s = geom.sensors.element_arc();
    let omega = 2.0 * PI * mask.kept_fraction();
    let min_dist = grid.dx;
    let mut out = Image::zeros(grid);
    for (px, r) in grid.centers().enumerate() {
        if r.distance(&geom.sensors.center) >= geom.sensors.radius {
            continue;
        }
        let mut acc = 0.0;
        for (row, &ch) in mask.kept.iter().enumerate() {
            let pos = geom.sensors.positions[ch];
            let dist = r.distance(&pos);
            if dist < min_dist {
                continue;
            }
            let u = (dist / s.sound_speed - s.t0) / dt;
            if u < 0.0 || u > (n - 1) as f64 {
                continue;
            }
            let k = (u.floor() as usize).min(n - 2);
            let a = u - k as f64;
            let term = &terms[row];
            let value = (1.0 - a) * term[k] + a * term[k + 1];
            let normal = geom.sensors.inward_normal(ch);
            let cos = (normal.x * (r.x - pos.x) + normal.y * (r.y - pos.y)) / dist;
            acc += value * cos / (dist * dist) * d_s;
        }
        out.values[px] = acc / omega;
    }
    Ok(out)
}
