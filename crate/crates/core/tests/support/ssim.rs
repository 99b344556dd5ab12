//! Windowed SSIM written as a plain double loop.

use pact_core::Image;

/// Straight windowed double loop with mirrored indices.
pub fn brute_ssim(x: &Image, y: &Image) -> f64 {
    let (nx, ny) = (x.grid.nx as isize, x.grid.ny as isize);
    let mirror = |k: isize, n: isize| -> usize {
        let mut k = k;
        loop {
            if k < 0 {
                k = -k - 1;
            } else if k >= n {
                k = 2 * n - 1 - k;
            } else {
                return k as usize;
            }
        }
    };
    let mut w = [[0.0f64; 11]; 11];
    let mut total_w = 0.0;
    for (a, row) in w.iter_mut().enumerate() {
        for (b, v) in row.iter_mut().enumerate() {
            let (da, db) = (a as f64 - 5.0, b as f64 - 5.0);
            *v = (-(da * da + db * db) / (2.0 * 1.5 * 1.5)).exp();
            total_w += *v;
        }
    }
    let range = y.max() - y.min();
    let (c1, c2) = ((0.01 * range).powi(2), (0.03 * range).powi(2));
    let mut acc = 0.0;
    for j in 0..ny {
        for i in 0..nx {
            let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for (a, row) in w.iter().enumerate() {
                for (b, wt) in row.iter().enumerate() {
                    let jj = mirror(j + a as isize - 5, ny);
                    let ii = mirror(i + b as isize - 5, nx);
                    let (p, q) = (x.get(ii, jj), y.get(ii, jj));
                    let wt = wt / total_w;
                    mx += wt * p;
                    my += wt * q;
                    sxx += wt * p * p;
                    syy += wt * q * q;
                    sxy += wt * p * q;
                }
            }
            let (vx, vy, cov) = (sxx - mx * mx, syy - my * my, sxy - mx * my);
            acc += (2.0 * mx * my + c1) * (2.0 * cov + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
        }
    }
    acc / (nx * ny) as f64
}
