//! Hot numeric loops for the recorded ops.
//!
//! Everything here works on flat `&[f64]` buffers in channels-first layout
//! (`[channels, time]`, time contiguous). The stride-2 convolution paths split
//! the padded input into even/odd phases so the innermost loops stay
//! contiguous and vectorize.

/// `floor((t_in + 2*padding - k)/stride) + 1`, or `None` when no window fits.
pub fn conv1d_out_len(t_in: usize, k: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = t_in + 2 * padding;
    if padded < k || stride == 0 {
        return None;
    }
    Some((padded - k) / stride + 1)
}

/// Zero-pad each channel row of `input` by `padding` on both sides.
fn zero_pad(input: &[f64], channels: usize, t_in: usize, padding: usize) -> Vec<f64> {
    let t_pad = t_in + 2 * padding;
    let mut out = vec![0.0; channels * t_pad];
    for c in 0..channels {
        out[c * t_pad + padding..c * t_pad + padding + t_in]
            .copy_from_slice(&input[c * t_in..(c + 1) * t_in]);
    }
    out
}

/// Split a row into even/odd index phases: `row[2i]` and `row[2i+1]`.
fn split_phases(row: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let even: Vec<f64> = row.iter().step_by(2).copied().collect();
    let odd: Vec<f64> = row.iter().skip(1).step_by(2).copied().collect();
    (even, odd)
}

fn axpy(out: &mut [f64], w: f64, x: &[f64]) {
    for (o, &v) in out.iter_mut().zip(x) {
        *o += w * v;
    }
}

/// Dot product with four accumulators; fixed summation order, so results are
/// reproducible run to run.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let chunks = n / 4;
    let (mut s0, mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..chunks {
        let j = i * 4;
        s0 += a[j] * b[j];
        s1 += a[j + 1] * b[j + 1];
        s2 += a[j + 2] * b[j + 2];
        s3 += a[j + 3] * b[j + 3];
    }
    let mut tail = 0.0;
    for j in chunks * 4..n {
        tail += a[j] * b[j];
    }
    (s0 + s1) + (s2 + s3) + tail
}

/// Cross-correlation along time. `kernel` is `[c_out, c_in, k]`, `out` is
/// `[c_out, t_out]` and is overwritten.
#[allow(clippy::too_many_arguments)]
pub fn conv1d_forward(
    input: &[f64],
    c_in: usize,
    t_in: usize,
    kernel: &[f64],
    c_out: usize,
    k: usize,
    bias: Option<&[f64]>,
    stride: usize,
    padding: usize,
    out: &mut [f64],
    t_out: usize,
) {
    let padded = zero_pad(input, c_in, t_in, padding);
    let t_pad = t_in + 2 * padding;

    if stride == 2 {
        let phases: Vec<(Vec<f64>, Vec<f64>)> = (0..c_in)
            .map(|c| split_phases(&padded[c * t_pad..(c + 1) * t_pad]))
            .collect();
        for co in 0..c_out {
            let orow = &mut out[co * t_out..(co + 1) * t_out];
            let b = bias.map_or(0.0, |b| b[co]);
            orow.fill(b);
            for ci in 0..c_in {
                let w = &kernel[(co * c_in + ci) * k..(co * c_in + ci + 1) * k];
                let (even, odd) = &phases[ci];
                for (kk, &wv) in w.iter().enumerate() {
                    let src = if kk % 2 == 0 { even } else { odd };
                    let off = kk / 2;
                    axpy(orow, wv, &src[off..off + t_out]);
                }
            }
        }
    } else {
        for co in 0..c_out {
            let orow = &mut out[co * t_out..(co + 1) * t_out];
            let b = bias.map_or(0.0, |b| b[co]);
            orow.fill(b);
            for ci in 0..c_in {
                let w = &kernel[(co * c_in + ci) * k..(co * c_in + ci + 1) * k];
                let irow = &padded[ci * t_pad..(ci + 1) * t_pad];
                for (kk, &wv) in w.iter().enumerate() {
                    if stride == 1 {
                        axpy(orow, wv, &irow[kk..kk + t_out]);
                    } else {
                        for (t, o) in orow.iter_mut().enumerate() {
                            *o += wv * irow[t * stride + kk];
                        }
                    }
                }
            }
        }
    }
}

/// Accumulates `d loss / d input` into `grad_input` (`[c_in, t_in]`).
#[allow(clippy::too_many_arguments)]
pub fn conv1d_backward_input(
    grad_out: &[f64],
    kernel: &[f64],
    c_in: usize,
    t_in: usize,
    c_out: usize,
    k: usize,
    stride: usize,
    padding: usize,
    t_out: usize,
    grad_input: &mut [f64],
) {
    let t_pad = t_in + 2 * padding;
    // Accumulate into a padded scratch buffer, then fold back the interior.
    let mut gpad = vec![0.0; c_in * t_pad];
    if stride == 2 {
        let even_len = t_pad - t_pad / 2;
        let odd_len = t_pad / 2;
        for ci in 0..c_in {
            let mut even = vec![0.0; even_len];
            let mut odd = vec![0.0; odd_len];
            for co in 0..c_out {
                let gout = &grad_out[co * t_out..(co + 1) * t_out];
                let w = &kernel[(co * c_in + ci) * k..(co * c_in + ci + 1) * k];
                for (kk, &wv) in w.iter().enumerate() {
                    let off = kk / 2;
                    let dst = if kk % 2 == 0 { &mut even } else { &mut odd };
                    axpy(&mut dst[off..off + t_out], wv, gout);
                }
            }
            let row = &mut gpad[ci * t_pad..(ci + 1) * t_pad];
            for (i, v) in even.iter().enumerate() {
                row[2 * i] += v;
            }
            for (i, v) in odd.iter().enumerate() {
                row[2 * i + 1] += v;
            }
        }
    } else {
        for ci in 0..c_in {
            let row = &mut gpad[ci * t_pad..(ci + 1) * t_pad];
            for co in 0..c_out {
                let gout = &grad_out[co * t_out..(co + 1) * t_out];
                let w = &kernel[(co * c_in + ci) * k..(co * c_in + ci + 1) * k];
                for (kk, &wv) in w.iter().enumerate() {
                    if stride == 1 {
                        axpy(&mut row[kk..kk + t_out], wv, gout);
                    } else {
                        for (t, &g) in gout.iter().enumerate() {
                            row[t * stride + kk] += wv * g;
                        }
                    }
                }
            }
        }
    }
    for ci in 0..c_in {
        let src = &gpad[ci * t_pad + padding..ci * t_pad + padding + t_in];
        axpy(&mut grad_input[ci * t_in..(ci + 1) * t_in], 1.0, src);
    }
}

/// Accumulates `d loss / d kernel` into `grad_kernel` (`[c_out, c_in, k]`).
#[allow(clippy::too_many_arguments)]
pub fn conv1d_backward_kernel(
    grad_out: &[f64],
    input: &[f64],
    c_in: usize,
    t_in: usize,
    c_out: usize,
    k: usize,
    stride: usize,
    padding: usize,
    t_out: usize,
    grad_kernel: &mut [f64],
) {
    let padded = zero_pad(input, c_in, t_in, padding);
    let t_pad = t_in + 2 * padding;
    if stride == 2 {
        let phases: Vec<(Vec<f64>, Vec<f64>)> = (0..c_in)
            .map(|c| split_phases(&padded[c * t_pad..(c + 1) * t_pad]))
            .collect();
        for co in 0..c_out {
            let gout = &grad_out[co * t_out..(co + 1) * t_out];
            for ci in 0..c_in {
                let (even, odd) = &phases[ci];
                let gk = &mut grad_kernel[(co * c_in + ci) * k..(co * c_in + ci + 1) * k];
                for (kk, g) in gk.iter_mut().enumerate() {
                    let src = if kk % 2 == 0 { even } else { odd };
                    let off = kk / 2;
                    *g += dot(gout, &src[off..off + t_out]);
                }
            }
        }
    } else {
        for co in 0..c_out {
            let gout = &grad_out[co * t_out..(co + 1) * t_out];
            for ci in 0..c_in {
                let irow = &padded[ci * t_pad..(ci + 1) * t_pad];
                let gk = &mut grad_kernel[(co * c_in + ci) * k..(co * c_in + ci + 1) * k];
                for (kk, g) in gk.iter_mut().enumerate() {
                    if stride == 1 {
                        *g += dot(gout, &irow[kk..kk + t_out]);
                    } else {
                        let mut acc = 0.0;
                        for (t, &gv) in gout.iter().enumerate() {
                            acc += gv * irow[t * stride + kk];
                        }
                        *g += acc;
                    }
                }
            }
        }
    }
}

pub fn conv1d_backward_bias(grad_out: &[f64], c_out: usize, t_out: usize, grad_bias: &mut [f64]) {
    for co in 0..c_out {
        let mut acc = 0.0;
        for &g in &grad_out[co * t_out..(co + 1) * t_out] {
            acc += g;
        }
        grad_bias[co] += acc;
    }
}

/// Index into `0..len` obtained by reflecting about the boundaries (without
/// repeating the edge sample) as many times as needed.
pub fn reflect_index(idx: isize, len: usize) -> usize {
    debug_assert!(len >= 2);
    let mut j = idx;
    let n = len as isize;
    loop {
        if j < 0 {
            j = -j;
        } else if j >= n {
            j = 2 * n - 2 - j;
        } else {
            return j as usize;
        }
    }
}
