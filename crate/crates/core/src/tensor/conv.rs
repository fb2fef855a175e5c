//! Direct cross-correlation lowered to GEMM through im2col.

use super::{gemm, MatRef, Scalar, Tensor};
use crate::error::TensorError;

/// Output extent of a convolution along one axis, `None` when the kernel
/// does not fit inside the padded input or the stride is zero.
pub fn conv_out_extent(size: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = size + 2 * pad;
    if stride == 0 || kernel == 0 || kernel > padded {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeom {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub f: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub ho: usize,
    pub wo: usize,
}

impl ConvGeom {
    pub fn new<T: Scalar>(
        x: &Tensor<T>,
        k: &Tensor<T>,
        stride: usize,
        pad: usize,
    ) -> Result<Self, TensorError> {
        let (n, c, h, w) = x.dims4("conv2d")?;
        let (f, kc, kh, kw) = k.dims4("conv2d")?;
        if kc != c {
            return Err(TensorError::shape(
                "conv2d",
                format!("input has {c} channels but kernel expects {kc}"),
            ));
        }
        let (ho, wo) = match (
            conv_out_extent(h, kh, stride, pad),
            conv_out_extent(w, kw, stride, pad),
        ) {
            (Some(ho), Some(wo)) => (ho, wo),
            _ => {
                return Err(TensorError::shape(
                    "conv2d",
                    format!(
                        "kernel {kh}x{kw} (stride {stride}) does not fit {h}x{w} input with pad {pad}"
                    ),
                ))
            }
        };
        Ok(ConvGeom {
            n,
            c,
            h,
            w,
            f,
            kh,
            kw,
            stride,
            pad,
            ho,
            wo,
        })
    }

    fn patch_len(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn out_plane(&self) -> usize {
        self.ho * self.wo
    }

    /// 1x1, stride 1, no padding: the input sample already is the column matrix.
    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad == 0
    }
}

/// Output columns `ox` whose input column `ox*stride + kj - pad` lies in `0..w`.
fn valid_cols(g: &ConvGeom, kj: usize) -> (usize, usize) {
    let lo = g.pad.saturating_sub(kj).div_ceil(g.stride).min(g.wo);
    let hi = if g.w + g.pad > kj {
        ((g.w + g.pad - kj - 1) / g.stride + 1).min(g.wo)
    } else {
        0
    };
    (lo, hi.max(lo))
}

fn im2col<T: Scalar>(g: &ConvGeom, x: &[T], cols: &mut [T]) {
    let plane = g.out_plane();
    for ci in 0..g.c {
        let src = &x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (ci * g.kh + ki) * g.kw + kj;
                let dst = &mut cols[row * plane..(row + 1) * plane];
                let (lo, hi) = valid_cols(g, kj);
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    let out_row = &mut dst[oy * g.wo..(oy + 1) * g.wo];
                    if iy < 0 || iy >= g.h as isize {
                        out_row.fill(T::zero());
                        continue;
                    }
                    let src_row = &src[iy as usize * g.w..(iy as usize + 1) * g.w];
                    out_row[..lo].fill(T::zero());
                    out_row[hi..].fill(T::zero());
                    if lo < hi {
                        let ix0 = lo * g.stride + kj - g.pad;
                        if g.stride == 1 {
                            out_row[lo..hi].copy_from_slice(&src_row[ix0..ix0 + hi - lo]);
                        } else {
                            for (o, ix) in out_row[lo..hi]
                                .iter_mut()
                                .zip((ix0..).step_by(g.stride))
                            {
                                *o = src_row[ix];
                            }
                        }
                    }
                }
            }
        }
    }
}

fn col2im_add<T: Scalar>(g: &ConvGeom, cols: &[T], dx: &mut [T]) {
    let plane = g.out_plane();
    for ci in 0..g.c {
        let dst = &mut dx[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (ci * g.kh + ki) * g.kw + kj;
                let src = &cols[row * plane..(row + 1) * plane];
                let (lo, hi) = valid_cols(g, kj);
                if lo == hi {
                    continue;
                }
                let ix0 = lo * g.stride + kj - g.pad;
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst_row = &mut dst[iy as usize * g.w..(iy as usize + 1) * g.w];
                    let src_row = &src[oy * g.wo + lo..oy * g.wo + hi];
                    if g.stride == 1 {
                        for (d, &v) in dst_row[ix0..ix0 + hi - lo].iter_mut().zip(src_row) {
                            *d = *d + v;
                        }
                    } else {
                        for (ix, &v) in (ix0..).step_by(g.stride).zip(src_row) {
                            dst_row[ix] = dst_row[ix] + v;
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn conv2d_forward<T: Scalar>(
    g: &ConvGeom,
    x: &[T],
    k: &[T],
) -> Vec<T> {
    let plane = g.out_plane();
    let patch = g.patch_len();
    let in_sample = g.c * g.h * g.w;
    let out_sample = g.f * plane;
    let mut out = vec![T::zero(); g.n * out_sample];
    let mut cols = if g.is_pointwise() {
        Vec::new()
    } else {
        vec![T::zero(); patch * plane]
    };
    for s in 0..g.n {
        let xs = &x[s * in_sample..(s + 1) * in_sample];
        let col_view = if g.is_pointwise() {
            xs
        } else {
            im2col(g, xs, &mut cols);
            &cols[..]
        };
        gemm(
            g.f,
            patch,
            plane,
            MatRef::row_major(k, patch),
            MatRef::row_major(col_view, plane),
            T::zero(),
            &mut out[s * out_sample..(s + 1) * out_sample],
        );
    }
    out
}

/// Returns `(dx, dk)`; each is computed only when requested.
pub(crate) fn conv2d_backward<T: Scalar>(
    g: &ConvGeom,
    x: &[T],
    k: &[T],
    gy: &[T],
    need_dx: bool,
    need_dk: bool,
) -> (Option<Vec<T>>, Option<Vec<T>>) {
    let plane = g.out_plane();
    let patch = g.patch_len();
    let in_sample = g.c * g.h * g.w;
    let out_sample = g.f * plane;
    let mut dx = need_dx.then(|| vec![T::zero(); g.n * in_sample]);
    let mut dk = need_dk.then(|| vec![T::zero(); g.f * patch]);
    let mut cols = vec![T::zero(); patch * plane];
    let mut dcols = vec![T::zero(); patch * plane];
    for s in 0..g.n {
        let gys = &gy[s * out_sample..(s + 1) * out_sample];
        let xs = &x[s * in_sample..(s + 1) * in_sample];
        if let Some(dk) = dk.as_mut() {
            let col_view = if g.is_pointwise() {
                xs
            } else {
                im2col(g, xs, &mut cols);
                &cols[..]
            };
            // dk += gy_s [f, plane] * cols^T [plane, patch]
            gemm(
                g.f,
                plane,
                patch,
                MatRef::row_major(gys, plane),
                MatRef::transposed(col_view, plane),
                T::one(),
                dk,
            );
        }
        if let Some(dx) = dx.as_mut() {
            let dxs = &mut dx[s * in_sample..(s + 1) * in_sample];
            if g.is_pointwise() {
                gemm(
                    patch,
                    g.f,
                    plane,
                    MatRef::transposed(k, patch),
                    MatRef::row_major(gys, plane),
                    T::one(),
                    dxs,
                );
            } else {
                gemm(
                    patch,
                    g.f,
                    plane,
                    MatRef::transposed(k, patch),
                    MatRef::row_major(gys, plane),
                    T::zero(),
                    &mut dcols,
                );
                col2im_add(g, &dcols, dxs);
            }
        }
    }
    (dx, dk)
}
