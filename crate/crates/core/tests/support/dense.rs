//! Explicit matrices for the forward model, built point by point from the
//! arc quadrature without any sparsity bookkeeping.

use std::f64::consts::PI;

use pact_core::ForwardGeometry;

/// Row-major dense matrix.
pub struct Dense {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Dense {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn at(&mut self, r: usize, c: usize) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|r| (0..self.cols).map(|c| self.get(r, c) * x[c]).sum())
            .collect()
    }

    pub fn matvec_t(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for r in 0..self.rows {
            for c in 0..self.cols {
                out[c] += self.get(r, c) * y[r];
            }
        }
        out
    }
}

/// Arc-length weights, one row per `(channel, sample)`.
pub fn arc_matrix(geom: &ForwardGeometry) -> Dense {
    let g = &geom.grid;
    let n = geom.n_samples;
    let count = geom.sensors.positions.len();
    let mut w = Dense::zeros(count * n, g.len());
    for ch in 0..count {
        let s = geom.sensors.positions[ch];
        let heading = 2.0 * PI * ch as f64 / count as f64 + PI;
        for k in 0..n {
            let r = geom.sound_speed * (geom.t0 + k as f64 * geom.dt);
            if r <= 0.0 {
                continue;
            }
            let m = (2.0 * PI * r / (0.5 * g.dx)).ceil() as usize;
            let ds = 2.0 * PI * r / m as f64;
            for q in 0..m {
                let phi = heading + 2.0 * PI * (q as f64 + 0.5) / m as f64;
                let u = (s.x + r * phi.cos() - g.origin.x) / g.dx;
                let v = (s.y + r * phi.sin() - g.origin.y) / g.dx;
                let (i0, j0) = (u.floor(), v.floor());
                let (a, b) = (u - i0, v - j0);
                for (di, dj, wt) in [
                    (0.0, 0.0, (1.0 - a) * (1.0 - b)),
                    (1.0, 0.0, a * (1.0 - b)),
                    (0.0, 1.0, (1.0 - a) * b),
                    (1.0, 1.0, a * b),
                ] {
                    let (i, j) = (i0 + di, j0 + dj);
                    if i >= 0.0 && j >= 0.0 && i < g.nx as f64 && j < g.ny as f64 {
                        *w.at(ch * n + k, j as usize * g.nx + i as usize) += ds * wt;
                    }
                }
            }
        }
    }
    w
}

/// `D · N` for one channel: time derivative after radial scaling.
pub fn trace_matrix(geom: &ForwardGeometry) -> Dense {
    let n = geom.n_samples;
    let v = geom.sound_speed;
    let dt = geom.dt;
    let scale: Vec<f64> = (0..n)
        .map(|k| 1.0 / (4.0 * PI * v * v * v * (geom.t0 + k as f64 * dt).max(dt)))
        .collect();
    let mut d = Dense::zeros(n, n);
    *d.at(0, 0) = -1.0 / dt;
    *d.at(0, 1) = 1.0 / dt;
    for k in 1..n - 1 {
        *d.at(k, k - 1) = -0.5 / dt;
        *d.at(k, k + 1) = 0.5 / dt;
    }
    *d.at(n - 1, n - 2) = -1.0 / dt;
    *d.at(n - 1, n - 1) = 1.0 / dt;
    for r in 0..n {
        for c in 0..n {
            *d.at(r, c) *= scale[c];
        }
    }
    d
}

/// Full forward matrix: block-diagonal `D · N` applied to the arc weights.
pub fn forward_matrix(geom: &ForwardGeometry) -> Dense {
    let w = arc_matrix(geom);
    let dn = trace_matrix(geom);
    let n = geom.n_samples;
    let count = w.rows / n;
    let mut a = Dense::zeros(w.rows, w.cols);
    for ch in 0..count {
        for r in 0..n {
            for k in 0..n {
                let c = dn.get(r, k);
                if c == 0.0 {
                    continue;
                }
                for p in 0..w.cols {
                    *a.at(ch * n + r, p) += c * w.get(ch * n + k, p);
                }
            }
        }
    }
    a
}
