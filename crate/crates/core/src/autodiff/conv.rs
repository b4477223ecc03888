//! 3x3 same-size convolution kernels (cross-correlation, zero padding,
//! stride 1), with exact adjoints for input, kernel, and bias.
//!
//! Work is split across rayon by output (or input) channel; every output
//! element is written by exactly one task and inner reductions run in a
//! fixed sequential order, so results are bitwise deterministic for any
//! thread count.

use rayon::prelude::*;

pub(crate) fn forward(
    input: &[f64],
    ci: usize,
    h: usize,
    w: usize,
    kernel: &[f64],
    co: usize,
    bias: &[f64],
) -> Vec<f64> {
    let hw = h * w;
    let mut out = vec![0.0; co * hw];
    out.par_chunks_mut(hw).enumerate().for_each(|(o, out_o)| {
        out_o.fill(bias[o]);
        for i in 0..ci {
            let plane = &input[i * hw..(i + 1) * hw];
            let kbase = (o * ci + i) * 9;
            for ky in 0..3usize {
                let dy = ky as isize - 1;
                for kx in 0..3usize {
                    let dx = kx as isize - 1;
                    let wgt = kernel[kbase + ky * 3 + kx];
                    shifted_axpy(out_o, plane, wgt, h, w, dy, dx);
                }
            }
        }
    });
    out
}

/// `dst[y, x] += wgt * src[y + dy, x + dx]` over the in-range window.
#[inline]
fn shifted_axpy(dst: &mut [f64], src: &[f64], wgt: f64, h: usize, w: usize, dy: isize, dx: isize) {
    let y0 = (-dy).max(0) as usize;
    let y1 = ((h as isize - dy).min(h as isize)).max(0) as usize;
    let x0 = (-dx).max(0) as usize;
    let x1 = ((w as isize - dx).min(w as isize)).max(0) as usize;
    if x0 >= x1 {
        return;
    }
    for y in y0..y1 {
        let sy = (y as isize + dy) as usize;
        let sx = (x0 as isize + dx) as usize;
        let src_row = &src[sy * w + sx..sy * w + sx + (x1 - x0)];
        let dst_row = &mut dst[y * w + x0..y * w + x1];
        for (d, s) in dst_row.iter_mut().zip(src_row) {
            *d += wgt * s;
        }
    }
}

/// Accumulates conv adjoints into the provided buffers (`+=` semantics, so a
/// kernel shared by several conv nodes sums contributions correctly).
#[allow(clippy::too_many_arguments)]
pub(crate) fn backward(
    input: &[f64],
    ci: usize,
    h: usize,
    w: usize,
    kernel: &[f64],
    co: usize,
    gout: &[f64],
    d_input: Option<&mut [f64]>,
    d_kernel: Option<&mut [f64]>,
    d_bias: Option<&mut [f64]>,
) {
    let hw = h * w;

    if let Some(d_input) = d_input {
        d_input.par_chunks_mut(hw).enumerate().for_each(|(i, din)| {
            for o in 0..co {
                let gplane = &gout[o * hw..(o + 1) * hw];
                let kbase = (o * ci + i) * 9;
                for ky in 0..3usize {
                    let dy = ky as isize - 1;
                    for kx in 0..3usize {
                        let dx = kx as isize - 1;
                        let wgt = kernel[kbase + ky * 3 + kx];
                        // d_in[y, x] += wgt * g[y - dy, x - dx]
                        shifted_axpy(din, gplane, wgt, h, w, -dy, -dx);
                    }
                }
            }
        });
    }

    if let Some(d_kernel) = d_kernel {
        d_kernel
            .par_chunks_mut(ci * 9)
            .enumerate()
            .for_each(|(o, dk_o)| {
                let gplane = &gout[o * hw..(o + 1) * hw];
                for i in 0..ci {
                    let plane = &input[i * hw..(i + 1) * hw];
                    for ky in 0..3usize {
                        let dy = ky as isize - 1;
                        for kx in 0..3usize {
                            let dx = kx as isize - 1;
                            dk_o[i * 9 + ky * 3 + kx] +=
                                shifted_dot(gplane, plane, h, w, dy, dx);
                        }
                    }
                }
            });
    }

    if let Some(d_bias) = d_bias {
        for (o, db) in d_bias.iter_mut().enumerate() {
            *db += gout[o * hw..(o + 1) * hw].iter().sum::<f64>();
        }
    }
}

/// `sum over (y, x) of a[y, x] * b[y + dy, x + dx]` over the in-range window.
#[inline]
fn shifted_dot(a: &[f64], b: &[f64], h: usize, w: usize, dy: isize, dx: isize) -> f64 {
    let y0 = (-dy).max(0) as usize;
    let y1 = ((h as isize - dy).min(h as isize)).max(0) as usize;
    let x0 = (-dx).max(0) as usize;
    let x1 = ((w as isize - dx).min(w as isize)).max(0) as usize;
    if x0 >= x1 {
        return 0.0;
    }
    let mut acc = 0.0;
    for y in y0..y1 {
        let sy = (y as isize + dy) as usize;
        let sx = (x0 as isize + dx) as usize;
        let row_a = &a[y * w + x0..y * w + x1];
        let row_b = &b[sy * w + sx..sy * w + sx + (x1 - x0)];
        for (va, vb) in row_a.iter().zip(row_b) {
            acc += va * vb;
        }
    }
    acc
}
