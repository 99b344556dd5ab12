//! Dense kernels for the decoder: 3x3 and 1x1 convolutions, 2x2 stride-2
//! transposed convolution, single-sample batch normalization, ReLU.
//!
//! Feature maps are `[channels][height][width]` in one contiguous slice.
//! Convolutions lower to GEMM through `matrixmultiply`.

pub const BN_EPS: f64 = 1e-5;

/// `c[m×n] = alpha · op(a) · op(b) + beta · c` on row-major buffers.
///
/// `ta`/`tb` select the transpose of the stored `a` (`m×k` or `k×m`) and `b`
/// (`k×n` or `n×k`).
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    ta: bool,
    b: &[f64],
    tb: bool,
    beta: f64,
    c: &mut [f64],
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    let (rsa, csa) = if ta { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if tb { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: bounds checked above; strides describe the row-major layouts.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Patch matrix `[cin·9][h·w]` for a zero-padded 3x3 window.
pub(crate) fn im2col3(input: &[f64], cin: usize, h: usize, w: usize, cols: &mut [f64]) {
    let hw = h * w;
    for ci in 0..cin {
        let plane = &input[ci * hw..(ci + 1) * hw];
        for dy in 0..3 {
            for dx in 0..3 {
                let row = &mut cols[(ci * 9 + dy * 3 + dx) * hw..(ci * 9 + dy * 3 + dx + 1) * hw];
                for y in 0..h {
                    let sy = y as isize + dy as isize - 1;
                    let dst = &mut row[y * w..(y + 1) * w];
                    if sy < 0 || sy >= h as isize {
                        dst.iter_mut().for_each(|v| *v = 0.0);
                        continue;
                    }
                    let src = &plane[sy as usize * w..(sy as usize + 1) * w];
                    match dx {
                        0 => {
                            dst[0] = 0.0;
                            dst[1..].copy_from_slice(&src[..w - 1]);
                        }
                        1 => dst.copy_from_slice(src),
                        _ => {
                            dst[..w - 1].copy_from_slice(&src[1..]);
                            dst[w - 1] = 0.0;
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col3`]: accumulate patch gradients back onto the input.
pub(crate) fn col2im3(cols: &[f64], cin: usize, h: usize, w: usize, out: &mut [f64]) {
    let hw = h * w;
    out.iter_mut().for_each(|v| *v = 0.0);
    for ci in 0..cin {
        let plane = &mut out[ci * hw..(ci + 1) * hw];
        for dy in 0..3 {
            for dx in 0..3 {
                let row = &cols[(ci * 9 + dy * 3 + dx) * hw..(ci * 9 + dy * 3 + dx + 1) * hw];
                for y in 0..h {
                    let sy = y as isize + dy as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src = &row[y * w..(y + 1) * w];
                    let dst = &mut plane[sy as usize * w..(sy as usize + 1) * w];
                    match dx {
                        0 => {
                            for x in 1..w {
                                dst[x - 1] += src[x];
                            }
                        }
                        1 => {
                            for x in 0..w {
                                dst[x] += src[x];
                            }
                        }
                        _ => {
                            for x in 0..w - 1 {
                                dst[x + 1] += src[x];
                            }
                        }
                    }
                }
            }
        }
    }
}

fn add_bias(out: &mut [f64], bias: &[f64], hw: usize) {
    for (plane, b) in out.chunks_mut(hw).zip(bias) {
        plane.iter_mut().for_each(|v| *v += b);
    }
}

fn bias_grad(dout: &[f64], hw: usize, db: &mut [f64]) {
    for (plane, g) in dout.chunks(hw).zip(db.iter_mut()) {
        *g += plane.iter().sum::<f64>();
    }
}

/// 3x3 convolution, stride 1, zero padding 1. `weight` is `[cout][cin][3][3]`.
pub fn conv3x3_forward(
    input: &[f64],
    cin: usize,
    h: usize,
    w: usize,
    weight: &[f64],
    bias: &[f64],
    cout: usize,
) -> Vec<f64> {
    let hw = h * w;
    let mut cols = vec![0.0; cin * 9 * hw];
    im2col3(input, cin, h, w, &mut cols);
    let mut out = vec![0.0; cout * hw];
    gemm(cout, cin * 9, hw, weight, false, &cols, false, 0.0, &mut out);
    add_bias(&mut out, bias, hw);
    out
}

/// Gradients of a 3x3 convolution; weight and bias grads are accumulated.
#[allow(clippy::too_many_arguments)]
pub fn conv3x3_backward(
    input: &[f64],
    cin: usize,
    h: usize,
    w: usize,
    weight: &[f64],
    cout: usize,
    dout: &[f64],
    dweight: &mut [f64],
    dbias: &mut [f64],
) -> Vec<f64> {
    let hw = h * w;
    let mut cols = vec![0.0; cin * 9 * hw];
    im2col3(input, cin, h, w, &mut cols);
    bias_grad(dout, hw, dbias);
    gemm(cout, hw, cin * 9, dout, false, &cols, true, 1.0, dweight);
    gemm(cin * 9, cout, hw, weight, true, dout, false, 0.0, &mut cols);
    let mut din = vec![0.0; cin * hw];
    col2im3(&cols, cin, h, w, &mut din);
    din
}

/// Pointwise convolution. `weight` is `[cout][cin]`.
pub fn conv1x1_forward(input: &[f64], cin: usize, hw: usize, weight: &[f64], bias: &[f64], cout: usize) -> Vec<f64> {
    let mut out = vec![0.0; cout * hw];
    gemm(cout, cin, hw, weight, false, input, false, 0.0, &mut out);
    add_bias(&mut out, bias, hw);
    out
}

#[allow(clippy::too_many_arguments)]
pub fn conv1x1_backward(
    input: &[f64],
    cin: usize,
    hw: usize,
    weight: &[f64],
    cout: usize,
    dout: &[f64],
    dweight: &mut [f64],
    dbias: &mut [f64],
) -> Vec<f64> {
    bias_grad(dout, hw, dbias);
    gemm(cout, hw, cin, dout, false, input, true, 1.0, dweight);
    let mut din = vec![0.0; cin * hw];
    gemm(cin, cout, hw, weight, true, dout, false, 0.0, &mut din);
    din
}

/// 2x2 stride-2 transposed convolution (exact doubling, no overlap).
/// `weight` is `[cout][2][2][cin]`; output is `[cout][2h][2w]`.
pub fn upconv_forward(input: &[f64], cin: usize, h: usize, w: usize, weight: &[f64], cout: usize) -> Vec<f64> {
    let hw = h * w;
    let mut taps = vec![0.0; cout * 4 * hw];
    gemm(cout * 4, cin, hw, weight, false, input, false, 0.0, &mut taps);
    let (oh, ow) = (2 * h, 2 * w);
    let mut out = vec![0.0; cout * oh * ow];
    for co in 0..cout {
        for a in 0..2 {
            for b in 0..2 {
                let src = &taps[((co * 2 + a) * 2 + b) * hw..][..hw];
                let dst = &mut out[co * oh * ow..(co + 1) * oh * ow];
                for y in 0..h {
                    for x in 0..w {
                        dst[(2 * y + a) * ow + 2 * x + b] = src[y * w + x];
                    }
                }
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
pub fn upconv_backward(
    input: &[f64],
    cin: usize,
    h: usize,
    w: usize,
    weight: &[f64],
    cout: usize,
    dout: &[f64],
    dweight: &mut [f64],
) -> Vec<f64> {
    let hw = h * w;
    let (oh, ow) = (2 * h, 2 * w);
    let mut dtaps = vec![0.0; cout * 4 * hw];
    for co in 0..cout {
        for a in 0..2 {
            for b in 0..2 {
                let dst = &mut dtaps[((co * 2 + a) * 2 + b) * hw..][..hw];
                let src = &dout[co * oh * ow..(co + 1) * oh * ow];
                for y in 0..h {
                    for x in 0..w {
                        dst[y * w + x] = src[(2 * y + a) * ow + 2 * x + b];
                    }
                }
            }
        }
    }
    gemm(cout * 4, hw, cin, &dtaps, false, input, true, 1.0, dweight);
    let mut din = vec![0.0; cin * hw];
    gemm(cin, cout * 4, hw, weight, true, &dtaps, false, 0.0, &mut din);
    din
}

/// Saved statistics from a batch-norm forward pass.
#[derive(Debug, Clone)]
pub struct BnCache {
    pub normalized: Vec<f64>,
    pub inv_std: Vec<f64>,
}

/// Per-channel normalization over spatial positions, then `scale · x̂ + shift`.
pub fn batchnorm_forward(input: &[f64], c: usize, hw: usize, scale: &[f64], shift: &[f64]) -> (Vec<f64>, BnCache) {
    let mut out = vec![0.0; c * hw];
    let mut normalized = vec![0.0; c * hw];
    let mut inv_std = vec![0.0; c];
    for ch in 0..c {
        let x = &input[ch * hw..(ch + 1) * hw];
        let mean = x.iter().sum::<f64>() / hw as f64;
        let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / hw as f64;
        let is = 1.0 / (var + BN_EPS).sqrt();
        inv_std[ch] = is;
        let xn = &mut normalized[ch * hw..(ch + 1) * hw];
        let y = &mut out[ch * hw..(ch + 1) * hw];
        for k in 0..hw {
            xn[k] = (x[k] - mean) * is;
            y[k] = scale[ch] * xn[k] + shift[ch];
        }
    }
    (out, BnCache { normalized, inv_std })
}

/// Batch-norm VJP including the mean and variance terms.
pub fn batchnorm_backward(
    cache: &BnCache,
    c: usize,
    hw: usize,
    scale: &[f64],
    dout: &[f64],
    dscale: &mut [f64],
    dshift: &mut [f64],
) -> Vec<f64> {
    let mut din = vec![0.0; c * hw];
    let n = hw as f64;
    for ch in 0..c {
        let xn = &cache.normalized[ch * hw..(ch + 1) * hw];
        let dy = &dout[ch * hw..(ch + 1) * hw];
        let sum_dy: f64 = dy.iter().sum();
        let sum_dy_xn: f64 = dy.iter().zip(xn).map(|(a, b)| a * b).sum();
        dshift[ch] += sum_dy;
        dscale[ch] += sum_dy_xn;
        let k = scale[ch] * cache.inv_std[ch];
        let (mdy, mdyx) = (sum_dy / n, sum_dy_xn / n);
        let dx = &mut din[ch * hw..(ch + 1) * hw];
        for i in 0..hw {
            dx[i] = k * (dy[i] - mdy - xn[i] * mdyx);
        }
    }
    din
}

pub fn relu_forward(input: &[f64]) -> Vec<f64> {
    input.iter().map(|&v| v.max(0.0)).collect()
}

/// Gradient passes only where the forward output was positive.
pub fn relu_backward(output: &[f64], dout: &[f64]) -> Vec<f64> {
    output
        .iter()
        .zip(dout)
        .map(|(&y, &g)| if y > 0.0 { g } else { 0.0 })
        .collect()
}
