//! Pure forward/backward kernels used by the tape.

use super::NumericsError;

/// `C = op(A)·op(B) + beta·C` on row-major buffers, with `op(A)` of shape
/// `m×k` and `op(B)` of shape `k×n`. A transposed operand is stored in its
/// untransposed layout (`k×m` resp. `n×k`).
#[allow(clippy::too_many_arguments)]
pub fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_trans: bool,
    b: &[f64],
    b_trans: bool,
    c: &mut [f64],
    beta: f64,
) {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), k * n);
    assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.iter_mut().for_each(|v| *v *= beta);
        return;
    }
    let (rsa, csa) = if a_trans { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_trans { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the strides above address exactly the `m×k`, `k×n` and `m×n`
    // extents of the three buffers, whose lengths are asserted above.
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

#[inline]
pub fn dist3(p: &[f64], q: &[f64]) -> f64 {
    let (dx, dy, dz) = (p[0] - q[0], p[1] - q[1], p[2] - q[2]);
    (dx * dx + dy * dy + dz * dz).sqrt()
}

#[derive(Clone, Copy, Debug)]
pub struct ConvGeometry {
    pub c_in: usize,
    pub h: usize,
    pub w: usize,
    pub c_out: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub h_out: usize,
    pub w_out: usize,
}

impl ConvGeometry {
    pub fn new(input: &[usize], kernel: &[usize], stride: usize, pad: usize) -> Result<Self, NumericsError> {
        let bad = |detail: String| NumericsError::Shape { op: "conv2d", detail };
        let (c_in, h, w) = match input {
            [c, h, w] => (*c, *h, *w),
            _ => return Err(bad(format!("input must be C×H×W, got {input:?}"))),
        };
        let (c_out, kc, kh, kw) = match kernel {
            [a, b, c, d] => (*a, *b, *c, *d),
            _ => return Err(bad(format!("kernel must be C_out×C_in×k×k, got {kernel:?}"))),
        };
        if kc != c_in || kh != kw {
            return Err(bad(format!("input {input:?} vs kernel {kernel:?}")));
        }
        if stride == 0 {
            return Err(bad("stride must be at least 1".into()));
        }
        if kh > h + 2 * pad || kw > w + 2 * pad {
            return Err(bad(format!("kernel {kernel:?} larger than padded input {input:?} (pad {pad})")));
        }
        let h_out = (h + 2 * pad - kh) / stride + 1;
        let w_out = (w + 2 * pad - kw) / stride + 1;
        Ok(Self { c_in, h, w, c_out, k: kh, stride, pad, h_out, w_out })
    }

    pub fn output_len(&self) -> usize {
        self.c_out * self.h_out * self.w_out
    }

    /// Output columns `ox` whose input column `ox*stride + kx - pad` is in range.
    #[inline]
    fn valid_range(&self, kernel_offset: usize, out_len: usize, in_len: usize) -> (usize, usize) {
        // in = o*s + kx - pad ∈ [0, in_len)
        let s = self.stride;
        let lo = if kernel_offset >= self.pad { 0 } else { (self.pad - kernel_offset).div_ceil(s) };
        let hi = if in_len + self.pad > kernel_offset {
            ((in_len + self.pad - kernel_offset - 1) / s + 1).min(out_len)
        } else {
            0
        };
        (lo, hi.max(lo))
    }
}

/// Unfolds the input into a `(C_in·k·k) × (H_out·W_out)` matrix so that
/// convolution becomes one gemm.
fn im2col(g: &ConvGeometry, input: &[f64]) -> Vec<f64> {
    let plane_in = g.h * g.w;
    let hw = g.h_out * g.w_out;
    let mut cols = vec![0.0; g.c_in * g.k * g.k * hw];
    for ci in 0..g.c_in {
        let in_plane = &input[ci * plane_in..(ci + 1) * plane_in];
        for ky in 0..g.k {
            let (oy0, oy1) = g.valid_range(ky, g.h_out, g.h);
            for kx in 0..g.k {
                let (ox0, ox1) = g.valid_range(kx, g.w_out, g.w);
                let row = &mut cols[((ci * g.k + ky) * g.k + kx) * hw..][..hw];
                for oy in oy0..oy1 {
                    let iy = oy * g.stride + ky - g.pad;
                    for ox in ox0..ox1 {
                        row[oy * g.w_out + ox] = in_plane[iy * g.w + ox * g.stride + kx - g.pad];
                    }
                }
            }
        }
    }
    cols
}

/// Adds a column matrix back onto the input layout (adjoint of `im2col`).
fn col2im(g: &ConvGeometry, cols: &[f64], grad_in: &mut [f64]) {
    let plane_in = g.h * g.w;
    let hw = g.h_out * g.w_out;
    for ci in 0..g.c_in {
        let gi_plane = &mut grad_in[ci * plane_in..(ci + 1) * plane_in];
        for ky in 0..g.k {
            let (oy0, oy1) = g.valid_range(ky, g.h_out, g.h);
            for kx in 0..g.k {
                let (ox0, ox1) = g.valid_range(kx, g.w_out, g.w);
                let row = &cols[((ci * g.k + ky) * g.k + kx) * hw..][..hw];
                for oy in oy0..oy1 {
                    let iy = oy * g.stride + ky - g.pad;
                    for ox in ox0..ox1 {
                        gi_plane[iy * g.w + ox * g.stride + kx - g.pad] += row[oy * g.w_out + ox];
                    }
                }
            }
        }
    }
}

/// Accumulates the cross-correlation of `input` with `kernel` into `out`.
pub fn conv2d_forward(g: &ConvGeometry, input: &[f64], kernel: &[f64], out: &mut [f64]) {
    let cols = im2col(g, input);
    let ckk = g.c_in * g.k * g.k;
    gemm(g.c_out, ckk, g.h_out * g.w_out, kernel, false, &cols, false, out, 1.0);
}

pub fn conv2d_backward_input(g: &ConvGeometry, kernel: &[f64], grad_out: &[f64], grad_in: &mut [f64]) {
    let ckk = g.c_in * g.k * g.k;
    let hw = g.h_out * g.w_out;
    let mut dcols = vec![0.0; ckk * hw];
    gemm(ckk, g.c_out, hw, kernel, true, grad_out, false, &mut dcols, 0.0);
    col2im(g, &dcols, grad_in);
}

pub fn conv2d_backward_kernel(g: &ConvGeometry, input: &[f64], grad_out: &[f64], grad_kernel: &mut [f64]) {
    let cols = im2col(g, input);
    let ckk = g.c_in * g.k * g.k;
    gemm(g.c_out, g.h_out * g.w_out, ckk, grad_out, false, &cols, true, grad_kernel, 1.0);
}
