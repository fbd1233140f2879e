//! im2col-based 2-d convolution on NCHW tensors, one GEMM per image.

use super::Element;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvGeometry {
    pub in_channels: usize,
    pub height: usize,
    pub width: usize,
    pub out_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeometry {
    pub fn out_h(&self) -> usize {
        (self.height + 2 * self.pad - self.kernel_h) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.width + 2 * self.pad - self.kernel_w) / self.stride + 1
    }

    /// Rows of the column matrix, `Cin * kh * kw`.
    pub fn patch_len(&self) -> usize {
        self.in_channels * self.kernel_h * self.kernel_w
    }

    pub fn out_spatial(&self) -> usize {
        self.out_h() * self.out_w()
    }

    pub fn in_image_len(&self) -> usize {
        self.in_channels * self.height * self.width
    }

    pub fn out_image_len(&self) -> usize {
        self.out_channels * self.out_spatial()
    }

    /// 1x1, stride 1, no padding: the column matrix is the image itself.
    fn is_pointwise(&self) -> bool {
        self.kernel_h == 1 && self.kernel_w == 1 && self.stride == 1 && self.pad == 0
    }
}

/// Output columns `x` whose input column `x * stride + kj - pad` lies
/// inside the image.
fn valid_cols(g: &ConvGeometry, kj: usize, ow: usize) -> (usize, usize) {
    let lo = g.pad.saturating_sub(kj).div_ceil(g.stride);
    let hi = if g.width + g.pad > kj {
        ((g.width + g.pad - kj - 1) / g.stride + 1).min(ow)
    } else {
        0
    };
    (lo.min(hi), hi)
}

/// Unfolds one CHW image into a `[patch_len, out_h * out_w]` matrix.
pub(crate) fn im2col<T: Element>(g: &ConvGeometry, image: &[T], cols: &mut [T]) {
    let (oh, ow) = (g.out_h(), g.out_w());
    let mut row = 0;
    for c in 0..g.in_channels {
        let plane = &image[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ki in 0..g.kernel_h {
            for kj in 0..g.kernel_w {
                let (x0, x1) = valid_cols(g, kj, ow);
                let dst = &mut cols[row * oh * ow..(row + 1) * oh * ow];
                for y in 0..oh {
                    let out_row = &mut dst[y * ow..(y + 1) * ow];
                    let iy = (y * g.stride + ki) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.height as isize {
                        out_row.fill(T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * g.width..(iy as usize + 1) * g.width];
                    out_row[..x0].fill(T::zero());
                    out_row[x1..].fill(T::zero());
                    let first = x0 * g.stride + kj - g.pad;
                    if g.stride == 1 {
                        out_row[x0..x1].copy_from_slice(&src[first..first + (x1 - x0)]);
                    } else {
                        for (o, &v) in out_row[x0..x1].iter_mut().zip(src[first..].iter().step_by(g.stride)) {
                            *o = v;
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulates a column matrix back into an image.
pub(crate) fn col2im<T: Element>(g: &ConvGeometry, cols: &[T], image: &mut [T]) {
    let (oh, ow) = (g.out_h(), g.out_w());
    let mut row = 0;
    for c in 0..g.in_channels {
        let plane = &mut image[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ki in 0..g.kernel_h {
            for kj in 0..g.kernel_w {
                let (x0, x1) = valid_cols(g, kj, ow);
                let src = &cols[row * oh * ow..(row + 1) * oh * ow];
                for y in 0..oh {
                    let iy = (y * g.stride + ki) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.height as isize || x0 == x1 {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.width..(iy as usize + 1) * g.width];
                    let first = x0 * g.stride + kj - g.pad;
                    let vals = &src[y * ow + x0..y * ow + x1];
                    if g.stride == 1 {
                        for (d, &v) in dst[first..first + vals.len()].iter_mut().zip(vals) {
                            *d += v;
                        }
                    } else {
                        for (d, &v) in dst[first..].iter_mut().step_by(g.stride).zip(vals) {
                            *d += v;
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

/// `out = W * cols` for each image of the batch.
pub(crate) fn forward<T: Element>(g: &ConvGeometry, batch: usize, input: &[T], weight: &[T]) -> Vec<T> {
    let (k, s) = (g.patch_len(), g.out_spatial());
    let mut out = vec![T::zero(); batch * g.out_image_len()];
    let mut cols = if g.is_pointwise() {
        Vec::new()
    } else {
        vec![T::zero(); k * s]
    };
    for n in 0..batch {
        let img = &input[n * g.in_image_len()..(n + 1) * g.in_image_len()];
        let rhs: &[T] = if g.is_pointwise() {
            img
        } else {
            im2col(g, img, &mut cols);
            &cols
        };
        let dst = &mut out[n * g.out_image_len()..(n + 1) * g.out_image_len()];
        unsafe {
            T::gemm(
                g.out_channels,
                k,
                s,
                T::one(),
                weight.as_ptr(),
                k as isize,
                1,
                rhs.as_ptr(),
                s as isize,
                1,
                T::zero(),
                dst.as_mut_ptr(),
                s as isize,
                1,
            );
        }
    }
    out
}

/// Gradients of a convolution. Either output may be skipped.
pub(crate) fn backward<T: Element>(
    g: &ConvGeometry,
    batch: usize,
    input: &[T],
    weight: &[T],
    grad_out: &[T],
    mut grad_input: Option<&mut [T]>,
    mut grad_weight: Option<&mut [T]>,
) {
    let (k, s) = (g.patch_len(), g.out_spatial());
    let pointwise = g.is_pointwise();
    let mut cols = vec![T::zero(); if pointwise { 0 } else { k * s }];
    let mut dcols = vec![T::zero(); k * s];
    for n in 0..batch {
        let img = &input[n * g.in_image_len()..(n + 1) * g.in_image_len()];
        let dout = &grad_out[n * g.out_image_len()..(n + 1) * g.out_image_len()];
        if let Some(dw) = grad_weight.as_deref_mut() {
            let rhs: &[T] = if pointwise {
                img
            } else {
                im2col(g, img, &mut cols);
                &cols
            };
            // dW[Cout, K] += dout[Cout, S] * cols[K, S]^T
            unsafe {
                T::gemm(
                    g.out_channels,
                    s,
                    k,
                    T::one(),
                    dout.as_ptr(),
                    s as isize,
                    1,
                    rhs.as_ptr(),
                    1,
                    s as isize,
                    T::one(),
                    dw.as_mut_ptr(),
                    k as isize,
                    1,
                );
            }
        }
        if let Some(dx) = grad_input.as_deref_mut() {
            let dimg = &mut dx[n * g.in_image_len()..(n + 1) * g.in_image_len()];
            // dcols[K, S] = W[Cout, K]^T * dout[Cout, S]
            let target: &mut [T] = if pointwise { dimg } else { &mut dcols };
            unsafe {
                T::gemm(
                    k,
                    g.out_channels,
                    s,
                    T::one(),
                    weight.as_ptr(),
                    1,
                    k as isize,
                    dout.as_ptr(),
                    s as isize,
                    1,
                    if pointwise { T::one() } else { T::zero() },
                    target.as_mut_ptr(),
                    s as isize,
                    1,
                );
            }
            if !pointwise {
                col2im(g, &dcols, dimg);
            }
        }
    }
}
