//! im2col-based convolution and max-pooling kernels over NCHW buffers.
//!
//! Columns are stored patch-major: `cols[k * rows + r]` where `r` runs over
//! `(n, oy, ox)` and `k` over `(c, ky, kx)`.

use crate::real::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub oc: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub oh: usize,
    pub ow: usize,
}

impl ConvGeom {
    pub fn patch(&self) -> usize {
        self.c * self.kh * self.kw
    }

    pub fn positions(&self) -> usize {
        self.oh * self.ow
    }

    pub fn rows(&self) -> usize {
        self.n * self.positions()
    }

    fn padded_extent(&self) -> (usize, usize) {
        (self.h + 2 * self.pad, self.w + 2 * self.pad)
    }

    /// Offset of each output position's window corner inside one padded
    /// input plane.
    fn window_offsets(&self) -> Vec<usize> {
        let pw = self.padded_extent().1;
        (0..self.oh)
            .flat_map(|oy| (0..self.ow).map(move |ox| oy * self.stride * pw + ox * self.stride))
            .collect()
    }
}

/// Unfolds `x` into patch-major columns `[c*kh*kw, n*oh*ow]` (zero padding).
pub(crate) fn im2col<R: Real>(x: &[R], g: &ConvGeom) -> Vec<R> {
    let (ph, pw) = g.padded_extent();
    let plane = g.h * g.w;
    let mut padded = vec![R::zero(); g.n * g.c * ph * pw];
    for (src, dst) in x.chunks_exact(plane).zip(padded.chunks_exact_mut(ph * pw)) {
        for (srow, drow) in src.chunks_exact(g.w).zip(dst[g.pad * pw..].chunks_exact_mut(pw)) {
            drow[g.pad..g.pad + g.w].copy_from_slice(srow);
        }
    }
    let offsets = g.window_offsets();
    let mut cols = Vec::with_capacity(g.patch() * g.rows());
    for k in 0..g.patch() {
        let (c, ky, kx) = (k / (g.kh * g.kw), (k / g.kw) % g.kh, k % g.kw);
        for n in 0..g.n {
            let base = (n * g.c + c) * ph * pw + ky * pw + kx;
            let src = &padded[base..];
            cols.extend(offsets.iter().map(|&o| src[o]));
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatters column gradients back onto `dx`.
pub(crate) fn col2im<R: Real>(dcols: &[R], g: &ConvGeom, dx: &mut [R]) {
    let (ph, pw) = g.padded_extent();
    let offsets = g.window_offsets();
    let p = g.positions();
    let mut padded = vec![R::zero(); g.n * g.c * ph * pw];
    for (k, block) in dcols.chunks_exact(g.rows()).enumerate() {
        let (c, ky, kx) = (k / (g.kh * g.kw), (k / g.kw) % g.kh, k % g.kw);
        for (n, src) in block.chunks_exact(p).enumerate() {
            let base = (n * g.c + c) * ph * pw + ky * pw + kx;
            let dst = &mut padded[base..];
            for (&o, &v) in offsets.iter().zip(src) {
                dst[o] += v;
            }
        }
    }
    let plane = g.h * g.w;
    for (dplane, pplane) in dx.chunks_exact_mut(plane).zip(padded.chunks_exact(ph * pw)) {
        for (drow, prow) in dplane.chunks_exact_mut(g.w).zip(pplane[g.pad * pw..].chunks_exact(pw)) {
            for (d, &v) in drow.iter_mut().zip(&prow[g.pad..g.pad + g.w]) {
                *d += v;
            }
        }
    }
}

/// Forward convolution. Returns NCHW output.
pub(crate) fn conv_forward<R: Real>(cols: &[R], weight: &[R], bias: Option<&[R]>, g: &ConvGeom) -> Vec<R> {
    let rows = g.rows();
    let patch = g.patch();
    // out_t[oc, r] = sum_k weight[oc, k] * cols[k, r]
    let mut out_t = vec![R::zero(); g.oc * rows];
    R::gemm(g.oc, patch, rows, R::one(), weight, patch, 1, cols, rows, 1, R::zero(), &mut out_t, rows, 1);
    let p = g.positions();
    let mut out = vec![R::zero(); rows * g.oc];
    for n in 0..g.n {
        for oc in 0..g.oc {
            let b = bias.map_or(R::zero(), |b| b[oc]);
            let dst = &mut out[(n * g.oc + oc) * p..(n * g.oc + oc + 1) * p];
            let src = &out_t[oc * rows + n * p..oc * rows + (n + 1) * p];
            for (d, &s) in dst.iter_mut().zip(src) {
                *d = s + b;
            }
        }
    }
    out
}

/// Rearranges an NCHW output gradient into `[oc, n*oh*ow]`.
pub(crate) fn grad_rows<R: Real>(dout: &[R], g: &ConvGeom) -> Vec<R> {
    let p = g.positions();
    let rows = g.rows();
    let mut out = vec![R::zero(); g.oc * rows];
    for n in 0..g.n {
        for oc in 0..g.oc {
            out[oc * rows + n * p..oc * rows + (n + 1) * p]
                .copy_from_slice(&dout[(n * g.oc + oc) * p..(n * g.oc + oc + 1) * p]);
        }
    }
    out
}

/// Accumulates `dweight[oc, k] += sum_r drows[oc, r] * cols[k, r]`.
pub(crate) fn conv_weight_grad<R: Real>(drows: &[R], cols: &[R], g: &ConvGeom, dweight: &mut [R]) {
    let rows = g.rows();
    let patch = g.patch();
    R::gemm(g.oc, rows, patch, R::one(), drows, rows, 1, cols, 1, rows, R::one(), dweight, patch, 1);
}

/// `dcols[k, r] = sum_oc weight[oc, k] * drows[oc, r]`.
pub(crate) fn conv_input_grad_cols<R: Real>(drows: &[R], weight: &[R], g: &ConvGeom) -> Vec<R> {
    let rows = g.rows();
    let patch = g.patch();
    let mut dcols = vec![R::zero(); rows * patch];
    R::gemm(patch, g.oc, rows, R::one(), weight, 1, patch, drows, rows, 1, R::zero(), &mut dcols, rows, 1);
    dcols
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct PoolGeom {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
    pub stride: usize,
    pub pad_top: usize,
    pub pad_left: usize,
    pub oh: usize,
    pub ow: usize,
}

impl PoolGeom {
    /// "SAME" pooling: output extent is `ceil(in / stride)`, padding split
    /// with the extra cell on the bottom/right.
    pub fn same(n: usize, c: usize, h: usize, w: usize, k: usize, stride: usize) -> Self {
        let oh = h.div_ceil(stride);
        let ow = w.div_ceil(stride);
        let pad_h = ((oh - 1) * stride + k).saturating_sub(h);
        let pad_w = ((ow - 1) * stride + k).saturating_sub(w);
        PoolGeom {
            n,
            c,
            h,
            w,
            k,
            stride,
            pad_top: pad_h / 2,
            pad_left: pad_w / 2,
            oh,
            ow,
        }
    }
}

/// Max pooling; padded cells never win. Returns values and flat argmax
/// indices into the input.
pub(crate) fn maxpool_forward<R: Real>(x: &[R], g: &PoolGeom) -> (Vec<R>, Vec<usize>) {
    let total = g.n * g.c * g.oh * g.ow;
    let mut out = Vec::with_capacity(total);
    let mut arg = Vec::with_capacity(total);
    for plane in 0..g.n * g.c {
        let base = plane * g.h * g.w;
        for oy in 0..g.oh {
            for ox in 0..g.ow {
                let y0 = (oy * g.stride) as isize - g.pad_top as isize;
                let x0 = (ox * g.stride) as isize - g.pad_left as isize;
                let mut best = R::neg_infinity();
                let mut best_i = usize::MAX;
                for ky in 0..g.k as isize {
                    let y = y0 + ky;
                    if y < 0 || y >= g.h as isize {
                        continue;
                    }
                    for kx in 0..g.k as isize {
                        let xx = x0 + kx;
                        if xx < 0 || xx >= g.w as isize {
                            continue;
                        }
                        let i = base + (y as usize) * g.w + xx as usize;
                        if best_i == usize::MAX || x[i] > best {
                            best = x[i];
                            best_i = i;
                        }
                    }
                }
                out.push(best);
                arg.push(best_i);
            }
        }
    }
    (out, arg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_pool_extents() {
        let g = PoolGeom::same(1, 1, 10, 10, 3, 2);
        assert_eq!((g.oh, g.ow, g.pad_top), (5, 5, 0));
        let g = PoolGeom::same(1, 1, 5, 5, 3, 2);
        assert_eq!((g.oh, g.pad_top), (3, 1));
        let g = PoolGeom::same(1, 1, 3, 3, 3, 2);
        assert_eq!((g.oh, g.pad_top), (2, 1));
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        // <im2col(x), y> == <x, col2im(y)>
        let g = ConvGeom {
            n: 2,
            c: 2,
            h: 4,
            w: 3,
            oc: 1,
            kh: 3,
            kw: 2,
            stride: 2,
            pad: 1,
            oh: (4 + 2 - 3) / 2 + 1,
            ow: (3 + 2 - 2) / 2 + 1,
        };
        let x: Vec<f64> = (0..g.n * g.c * g.h * g.w).map(|i| (i as f64 * 0.37).sin()).collect();
        let cols = im2col(&x, &g);
        let y: Vec<f64> = (0..cols.len()).map(|i| (i as f64 * 0.11).cos()).collect();
        let lhs: f64 = cols.iter().zip(&y).map(|(a, b)| a * b).sum();
        let mut dx = vec![0.0; x.len()];
        col2im(&y, &g, &mut dx);
        let rhs: f64 = x.iter().zip(&dx).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
