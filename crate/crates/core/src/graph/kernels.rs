//! Raw kernels behind the graph operations. Slices only, no tape.

use alloc::vec;
use alloc::vec::Vec;

/// `c = a · b + beta · c` for row-major `c` (m×n). Strides are given as
/// (row stride, column stride) so transposed operands need no copy.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_strides: (usize, usize),
    b: &[f64],
    b_strides: (usize, usize),
    beta: f64,
    c: &mut [f64],
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(c.len() >= m * n);
    if k == 0 {
        for v in &mut c[..m * n] {
            *v *= beta;
        }
        return;
    }
    let a_max = (m - 1) * a_strides.0 + (k - 1) * a_strides.1;
    let b_max = (k - 1) * b_strides.0 + (n - 1) * b_strides.1;
    assert!(a_max < a.len() && b_max < b.len());
    // SAFETY: the bounds of every addressed element were checked above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            a_strides.0 as isize,
            a_strides.1 as isize,
            b.as_ptr(),
            b_strides.0 as isize,
            b_strides.1 as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `a · b` into a freshly allocated row-major m×n buffer.
pub(crate) fn gemm_new(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_strides: (usize, usize),
    b: &[f64],
    b_strides: (usize, usize),
) -> Vec<f64> {
    if m == 0 || n == 0 || k == 0 {
        return vec![0.0; m * n];
    }
    let a_max = (m - 1) * a_strides.0 + (k - 1) * a_strides.1;
    let b_max = (k - 1) * b_strides.0 + (n - 1) * b_strides.1;
    assert!(a_max < a.len() && b_max < b.len());
    let mut c: Vec<f64> = Vec::with_capacity(m * n);
    // SAFETY: operand bounds were checked above; with beta = 0 dgemm writes
    // every element of the m×n output without reading it, after which all
    // m·n elements are initialized.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            a_strides.0 as isize,
            a_strides.1 as isize,
            b.as_ptr(),
            b_strides.0 as isize,
            b_strides.1 as isize,
            0.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
        c.set_len(m * n);
    }
    c
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub c_in: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeom {
    pub fn is_pointwise(&self) -> bool {
        self.k == 1 && self.stride == 1 && self.pad == 0
    }

    pub fn rows(&self) -> usize {
        self.c_in * self.k * self.k
    }

    pub fn cols(&self) -> usize {
        self.out_h * self.out_w
    }
}

/// Output columns `[lo, hi)` of a stride-1 row whose source column
/// `oj + kj − pad` falls inside the input.
fn valid_span(g: &ConvGeom, kj: usize) -> (usize, usize) {
    let lo = g.pad.saturating_sub(kj).min(g.out_w);
    let hi = (g.w + g.pad).saturating_sub(kj).min(g.out_w).max(lo);
    (lo, hi)
}

/// Unfolds `input` (C×H×W) into a `(C·k·k) × (H'·W')` patch matrix.
pub(crate) fn im2col(input: &[f64], g: &ConvGeom) -> Vec<f64> {
    let mut cols = Vec::with_capacity(g.rows() * g.cols());
    for c in 0..g.c_in {
        let plane = &input[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.k {
            for kj in 0..g.k {
                let (lo, hi) = valid_span(g, kj);
                for oi in 0..g.out_h {
                    let ii = (oi * g.stride + ki) as isize - g.pad as isize;
                    if ii < 0 || ii >= g.h as isize {
                        cols.resize(cols.len() + g.out_w, 0.0);
                        continue;
                    }
                    let src = &plane[ii as usize * g.w..(ii as usize + 1) * g.w];
                    if g.stride == 1 {
                        let shift = kj as isize - g.pad as isize;
                        cols.resize(cols.len() + lo, 0.0);
                        if hi > lo {
                            let a = (lo as isize + shift) as usize;
                            cols.extend_from_slice(&src[a..a + hi - lo]);
                        }
                        cols.resize(cols.len() + g.out_w - hi, 0.0);
                    } else {
                        cols.extend((0..g.out_w).map(|oj| {
                            let jj = (oj * g.stride + kj) as isize - g.pad as isize;
                            if jj < 0 || jj >= g.w as isize {
                                0.0
                            } else {
                                src[jj as usize]
                            }
                        }));
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatters patch gradients back into `input_grad`.
pub(crate) fn col2im(cols: &[f64], g: &ConvGeom, input_grad: &mut [f64]) {
    let p = g.cols();
    let mut row = 0;
    for c in 0..g.c_in {
        let plane = &mut input_grad[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.k {
            for kj in 0..g.k {
                let src = &cols[row * p..(row + 1) * p];
                let (lo, hi) = valid_span(g, kj);
                for oi in 0..g.out_h {
                    let ii = (oi * g.stride + ki) as isize - g.pad as isize;
                    if ii < 0 || ii >= g.h as isize {
                        continue;
                    }
                    let dst = &mut plane[ii as usize * g.w..(ii as usize + 1) * g.w];
                    let line = &src[oi * g.out_w..(oi + 1) * g.out_w];
                    if g.stride == 1 {
                        if hi > lo {
                            let a = (lo as isize + kj as isize - g.pad as isize) as usize;
                            for (d, s) in dst[a..a + hi - lo].iter_mut().zip(&line[lo..hi]) {
                                *d += s;
                            }
                        }
                    } else {
                        for (oj, s) in line.iter().enumerate() {
                            let jj = (oj * g.stride + kj) as isize - g.pad as isize;
                            if jj >= 0 && (jj as usize) < g.w {
                                dst[jj as usize] += s;
                            }
                        }
                    }
                }
                row += 1;
            }
        }
    }
}
