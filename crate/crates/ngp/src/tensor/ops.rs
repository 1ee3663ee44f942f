//! Forward kernels and vector-Jacobian products for every primitive.
//!
//! Conv kernels use an axpy formulation (inner loop streams along rows) and
//! parallelize over channels; each output element is produced by exactly one
//! task with a fixed-order inner reduction, so results are bit-identical
//! regardless of thread count.

use rayon::prelude::*;

use super::tape::Primitive;
use super::{Result, Scalar, Tensor, TensorError};

fn mismatch(primitive: &'static str, detail: String) -> TensorError {
    TensorError::ShapeMismatch { primitive, detail }
}

/// Elementwise binary rule: identical shapes, or one side scalar (numel 1).
enum BinShape {
    Same,
    ScalarLhs,
    ScalarRhs,
}

fn bin_shape<T: Scalar>(prim: &'static str, a: &Tensor<T>, b: &Tensor<T>) -> Result<BinShape> {
    if a.shape() == b.shape() {
        Ok(BinShape::Same)
    } else if a.numel() == 1 {
        Ok(BinShape::ScalarLhs)
    } else if b.numel() == 1 {
        Ok(BinShape::ScalarRhs)
    } else {
        Err(mismatch(
            prim,
            format!(
                "operands {:?} vs {:?} (use an explicit broadcast)",
                a.shape(),
                b.shape()
            ),
        ))
    }
}

fn bin_forward<T: Scalar>(
    prim: &'static str,
    a: &Tensor<T>,
    b: &Tensor<T>,
    f: impl Fn(T, T) -> T,
) -> Result<Tensor<T>> {
    let (shape, data) = match bin_shape(prim, a, b)? {
        BinShape::Same => (
            a.shape().to_vec(),
            a.data()
                .iter()
                .zip(b.data())
                .map(|(&x, &y)| f(x, y))
                .collect(),
        ),
        BinShape::ScalarLhs => {
            let s = a.data()[0];
            (b.shape().to_vec(), b.data().iter().map(|&y| f(s, y)).collect())
        }
        BinShape::ScalarRhs => {
            let s = b.data()[0];
            (a.shape().to_vec(), a.data().iter().map(|&x| f(x, s)).collect())
        }
    };
    Tensor::new(shape, data)
}

/// Reduce a gradient back to a scalar operand's shape if needed.
fn reduce_to<T: Scalar>(grad: Vec<T>, target_shape: &[usize]) -> Tensor<T> {
    let target_numel: usize = target_shape.iter().product();
    if grad.len() == target_numel {
        return Tensor::new(target_shape.to_vec(), grad).expect("reduce_to shape");
    }
    debug_assert_eq!(target_numel, 1);
    let mut acc = T::ZERO;
    for g in grad {
        acc += g;
    }
    Tensor::new(target_shape.to_vec(), vec![acc]).expect("reduce_to scalar")
}

fn unary_forward<T: Scalar>(x: &Tensor<T>, f: impl Fn(T) -> T) -> Tensor<T> {
    x.map(f)
}

struct ConvDims {
    cin: usize,
    h: usize,
    w: usize,
    cout: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
}

fn conv2d_dims<T: Scalar>(
    x: &Tensor<T>,
    wt: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> Result<ConvDims> {
    let xs = x.shape();
    let ws = wt.shape();
    if xs.len() != 3 || ws.len() != 4 {
        return Err(mismatch(
            "conv2d",
            format!("expected input [cin,h,w] and weight [cout,cin,kh,kw], got {xs:?} and {ws:?}"),
        ));
    }
    let (cin, h, w) = (xs[0], xs[1], xs[2]);
    let (cout, wcin, kh, kw) = (ws[0], ws[1], ws[2], ws[3]);
    if cin != wcin {
        return Err(mismatch(
            "conv2d",
            format!("input channels {cin} != weight channels {wcin}"),
        ));
    }
    if h + 2 * pad < kh || w + 2 * pad < kw || stride == 0 {
        return Err(mismatch(
            "conv2d",
            format!("kernel {kh}x{kw} too large for input {h}x{w} with pad {pad}, stride {stride}"),
        ));
    }
    let oh = (h + 2 * pad - kh) / stride + 1;
    let ow = (w + 2 * pad - kw) / stride + 1;
    Ok(ConvDims {
        cin,
        h,
        w,
        cout,
        kh,
        kw,
        oh,
        ow,
    })
}

/// Range of `o` with `0 <= o*stride + off < in_len`, clipped to `out_len`.
#[inline]
fn valid_range(off: isize, stride: usize, in_len: usize, out_len: usize) -> (usize, usize) {
    let s = stride as isize;
    let lo = if off >= 0 { 0 } else { (-off + s - 1) / s };
    let max_in = in_len as isize - 1 - off;
    if max_in < 0 {
        return (0, 0);
    }
    let hi = (max_in / s + 1).min(out_len as isize);
    if hi <= lo {
        (0, 0)
    } else {
        (lo as usize, hi as usize)
    }
}

/// out[o] += k * src[o*stride + off] over the valid range.
#[inline]
fn axpy_gather<T: Scalar>(out: &mut [T], src: &[T], k: T, off: isize, stride: usize) {
    let (lo, hi) = valid_range(off, stride, src.len(), out.len());
    if stride == 1 {
        let s = &src[(lo as isize + off) as usize..(hi as isize + off) as usize];
        for (o, &v) in out[lo..hi].iter_mut().zip(s) {
            *o += k * v;
        }
    } else {
        for o in lo..hi {
            out[o] += k * src[(o as isize * stride as isize + off) as usize];
        }
    }
}

/// out[o*stride + off] += k * src[o] over the valid range.
#[inline]
fn axpy_scatter<T: Scalar>(out: &mut [T], src: &[T], k: T, off: isize, stride: usize) {
    let (lo, hi) = valid_range(off, stride, out.len(), src.len());
    if stride == 1 {
        let o = &mut out[(lo as isize + off) as usize..(hi as isize + off) as usize];
        for (d, &v) in o.iter_mut().zip(&src[lo..hi]) {
            *d += k * v;
        }
    } else {
        for i in lo..hi {
            out[(i as isize * stride as isize + off) as usize] += k * src[i];
        }
    }
}

/// sum of a[o] * b[o*stride + off] over the valid range.
#[inline]
fn dot_gather<T: Scalar>(a: &[T], b: &[T], off: isize, stride: usize) -> T {
    let (lo, hi) = valid_range(off, stride, b.len(), a.len());
    if stride == 1 {
        let bb = &b[(lo as isize + off) as usize..(hi as isize + off) as usize];
        dot_unrolled(&a[lo..hi], bb)
    } else {
        let mut acc = T::ZERO;
        for o in lo..hi {
            acc += a[o] * b[(o as isize * stride as isize + off) as usize];
        }
        acc
    }
}

/// Dot product with eight independent accumulators so the FMA chains overlap.
/// The combination order is fixed, so results stay bit-deterministic.
#[inline]
fn dot_unrolled<T: Scalar>(a: &[T], b: &[T]) -> T {
    const LANES: usize = 8;
    let mut lanes = [T::ZERO; LANES];
    let (a8, a_tail) = (a.chunks_exact(LANES), a.chunks_exact(LANES).remainder());
    let b8 = b.chunks_exact(LANES);
    for (ca, cb) in a8.zip(b8) {
        for j in 0..LANES {
            lanes[j] += ca[j] * cb[j];
        }
    }
    let mut acc = T::ZERO;
    for lane in lanes {
        acc += lane;
    }
    let b_tail = &b[a.len() - a_tail.len()..];
    for (&x, &y) in a_tail.iter().zip(b_tail) {
        acc += x * y;
    }
    acc
}

/// Run `f(row_index, row)` over equal rows of `buf`, splitting across threads
/// in coarse contiguous blocks. Each row is produced by exactly one task with
/// a fixed-order inner loop, so output is independent of thread count.
fn par_rows<T: Send, F: Fn(usize, &mut [T]) + Sync>(buf: &mut [T], row_len: usize, f: F) {
    debug_assert_eq!(buf.len() % row_len.max(1), 0);
    let nrows = buf.len() / row_len.max(1);
    if buf.len() < 1 << 16 || nrows < 2 {
        for (r, row) in buf.chunks_mut(row_len).enumerate() {
            f(r, row);
        }
        return;
    }
    let rows_per_task = nrows.div_ceil(4 * rayon::current_num_threads().max(1));
    buf.par_chunks_mut(row_len * rows_per_task)
        .enumerate()
        .for_each(|(block, chunk)| {
            for (i, row) in chunk.chunks_mut(row_len).enumerate() {
                f(block * rows_per_task + i, row);
            }
        });
}

/// Unrolled patch matrix: row `(ci*kh+ky)*kw+kx` holds, for every output
/// pixel, the input sample that tap touches (zero where padding). All conv
/// passes then stream along the long `oh*ow` axis.
fn im2col<T: Scalar>(x: &Tensor<T>, d: &ConvDims, stride: usize, pad: usize) -> Vec<T> {
    let xd = x.data();
    let n = d.oh * d.ow;
    let cik = d.cin * d.kh * d.kw;
    let mut patches = vec![T::ZERO; cik * n];
    par_rows(&mut patches, d.kh * d.kw * n, |ci, chunk| {
            let xplane = &xd[ci * d.h * d.w..(ci + 1) * d.h * d.w];
            for ky in 0..d.kh {
                for kx in 0..d.kw {
                    let row = &mut chunk[(ky * d.kw + kx) * n..(ky * d.kw + kx + 1) * n];
                    let kxi = kx as isize - pad as isize;
                    for oy in 0..d.oh {
                        let iy = (oy * stride + ky) as isize - pad as isize;
                        if iy < 0 || iy as usize >= d.h {
                            continue;
                        }
                        let xrow = &xplane[iy as usize * d.w..(iy as usize + 1) * d.w];
                        let prow = &mut row[oy * d.ow..(oy + 1) * d.ow];
                        let (lo, hi) = valid_range(kxi, stride, d.w, d.ow);
                        if stride == 1 {
                            prow[lo..hi].copy_from_slice(
                                &xrow[(lo as isize + kxi) as usize..(hi as isize + kxi) as usize],
                            );
                        } else {
                            for o in lo..hi {
                                prow[o] = xrow[(o as isize * stride as isize + kxi) as usize];
                            }
                        }
                    }
                }
            }
        });
    patches
}

/// Adjoint of [`im2col`]: scatter-add patch-space gradients back to the input.
fn col2im<T: Scalar>(gp: &[T], d: &ConvDims, stride: usize, pad: usize) -> Vec<T> {
    let n = d.oh * d.ow;
    let mut gx = vec![T::ZERO; d.cin * d.h * d.w];
    par_rows(&mut gx, d.h * d.w, |ci, gplane| {
        for ky in 0..d.kh {
            for kx in 0..d.kw {
                let row = &gp[((ci * d.kh + ky) * d.kw + kx) * n..][..n];
                let kxi = kx as isize - pad as isize;
                for oy in 0..d.oh {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy as usize >= d.h {
                        continue;
                    }
                    let grow = &row[oy * d.ow..(oy + 1) * d.ow];
                    let gxrow = &mut gplane[iy as usize * d.w..(iy as usize + 1) * d.w];
                    axpy_scatter(gxrow, grow, T::ONE, kxi, stride);
                }
            }
        }
    });
    gx
}

fn conv2d_forward<T: Scalar>(
    x: &Tensor<T>,
    wt: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> Result<Tensor<T>> {
    let d = conv2d_dims(x, wt, stride, pad)?;
    let n = d.oh * d.ow;
    let cik = d.cin * d.kh * d.kw;
    let patches = im2col(x, &d, stride, pad);
    let wd = wt.data();
    let mut out = vec![T::ZERO; d.cout * n];
    par_rows(&mut out, n, |co, orow| {
        for k in 0..cik {
            let wv = wd[co * cik + k];
            let prow = &patches[k * n..(k + 1) * n];
            for (o, &p) in orow.iter_mut().zip(prow) {
                *o += wv * p;
            }
        }
    });
    Tensor::new(vec![d.cout, d.oh, d.ow], out)
}

fn conv2d_backward<T: Scalar>(
    x: &Tensor<T>,
    wt: &Tensor<T>,
    grad: &Tensor<T>,
    stride: usize,
    pad: usize,
    needs: &[bool],
) -> Result<Vec<Option<Tensor<T>>>> {
    let d = conv2d_dims(x, wt, stride, pad)?;
    let n = d.oh * d.ow;
    let cik = d.cin * d.kh * d.kw;
    let wd = wt.data();
    let gd = grad.data();

    let gx = if needs[0] {
        // patch-space gradient, then scatter back through the tap geometry
        let mut gp = vec![T::ZERO; cik * n];
        par_rows(&mut gp, n, |k, prow| {
            for co in 0..d.cout {
                let wv = wd[co * cik + k];
                let grow = &gd[co * n..(co + 1) * n];
                for (p, &g) in prow.iter_mut().zip(grow) {
                    *p += wv * g;
                }
            }
        });
        Some(Tensor::new(x.shape().to_vec(), col2im(&gp, &d, stride, pad))?)
    } else {
        None
    };

    let gw = if needs[1] {
        let patches = im2col(x, &d, stride, pad);
        let mut gw = vec![T::ZERO; d.cout * cik];
        par_rows(&mut gw, cik, |co, wrow| {
            let grow = &gd[co * n..(co + 1) * n];
            for (k, wslot) in wrow.iter_mut().enumerate() {
                *wslot = dot_unrolled(grow, &patches[k * n..(k + 1) * n]);
            }
        });
        Some(Tensor::new(wt.shape().to_vec(), gw)?)
    } else {
        None
    };

    Ok(vec![gx, gw])
}

struct TConvDims {
    cin: usize,
    h: usize,
    w: usize,
    cout: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
}

fn tconv_dims<T: Scalar>(
    x: &Tensor<T>,
    wt: &Tensor<T>,
    stride: usize,
    pad: usize,
    out_pad: usize,
) -> Result<TConvDims> {
    let xs = x.shape();
    let ws = wt.shape();
    if xs.len() != 3 || ws.len() != 4 {
        return Err(mismatch(
            "transpose_conv2d",
            format!("expected input [cin,h,w] and weight [cin,cout,kh,kw], got {xs:?} and {ws:?}"),
        ));
    }
    let (cin, h, w) = (xs[0], xs[1], xs[2]);
    let (wcin, cout, kh, kw) = (ws[0], ws[1], ws[2], ws[3]);
    if cin != wcin {
        return Err(mismatch(
            "transpose_conv2d",
            format!("input channels {cin} != weight channels {wcin}"),
        ));
    }
    if stride == 0 || out_pad >= stride {
        return Err(mismatch(
            "transpose_conv2d",
            format!("invalid stride {stride} / out_pad {out_pad}"),
        ));
    }
    let full_h = (h - 1) * stride + kh;
    let full_w = (w - 1) * stride + kw;
    let oh = (full_h + out_pad).checked_sub(2 * pad).ok_or_else(|| {
        mismatch(
            "transpose_conv2d",
            format!("pad {pad} too large for produced extent {full_h}"),
        )
    })?;
    let ow = (full_w + out_pad).checked_sub(2 * pad).ok_or_else(|| {
        mismatch(
            "transpose_conv2d",
            format!("pad {pad} too large for produced extent {full_w}"),
        )
    })?;
    Ok(TConvDims {
        cin,
        h,
        w,
        cout,
        kh,
        kw,
        oh,
        ow,
    })
}

fn tconv_forward<T: Scalar>(
    x: &Tensor<T>,
    wt: &Tensor<T>,
    stride: usize,
    pad: usize,
    out_pad: usize,
) -> Result<Tensor<T>> {
    let d = tconv_dims(x, wt, stride, pad, out_pad)?;
    let xd = x.data();
    let wd = wt.data();
    let mut out = vec![T::ZERO; d.cout * d.oh * d.ow];
    par_rows(&mut out, d.oh * d.ow, |co, plane| {
            for ci in 0..d.cin {
                let xplane = &xd[ci * d.h * d.w..(ci + 1) * d.h * d.w];
                for ky in 0..d.kh {
                    for kx in 0..d.kw {
                        let wv = wd[((ci * d.cout + co) * d.kh + ky) * d.kw + kx];
                        let kxi = kx as isize - pad as isize;
                        for y in 0..d.h {
                            let oy = (y * stride + ky) as isize - pad as isize;
                            if oy < 0 || oy as usize >= d.oh {
                                continue;
                            }
                            let xrow = &xplane[y * d.w..(y + 1) * d.w];
                            let orow =
                                &mut plane[oy as usize * d.ow..(oy as usize + 1) * d.ow];
                            axpy_scatter(orow, xrow, wv, kxi, stride);
                        }
                    }
                }
            }
        });
    Tensor::new(vec![d.cout, d.oh, d.ow], out)
}

fn tconv_backward<T: Scalar>(
    x: &Tensor<T>,
    wt: &Tensor<T>,
    grad: &Tensor<T>,
    stride: usize,
    pad: usize,
    out_pad: usize,
    needs: &[bool],
) -> Result<Vec<Option<Tensor<T>>>> {
    let d = tconv_dims(x, wt, stride, pad, out_pad)?;
    let xd = x.data();
    let wd = wt.data();
    let gd = grad.data();

    // grad wrt input is a conv-style gather from the output gradient
    let gx = if needs[0] {
        let mut gx = vec![T::ZERO; d.cin * d.h * d.w];
        par_rows(&mut gx, d.h * d.w, |ci, gplane| {
            for co in 0..d.cout {
                let goplane = &gd[co * d.oh * d.ow..(co + 1) * d.oh * d.ow];
                for ky in 0..d.kh {
                    for kx in 0..d.kw {
                        let wv = wd[((ci * d.cout + co) * d.kh + ky) * d.kw + kx];
                        let kxi = kx as isize - pad as isize;
                        for y in 0..d.h {
                            let oy = (y * stride + ky) as isize - pad as isize;
                            if oy < 0 || oy as usize >= d.oh {
                                continue;
                            }
                            let grow =
                                &goplane[oy as usize * d.ow..(oy as usize + 1) * d.ow];
                            let gxrow = &mut gplane[y * d.w..(y + 1) * d.w];
                            axpy_gather(gxrow, grow, wv, kxi, stride);
                        }
                    }
                }
            }
        });
        Some(Tensor::new(x.shape().to_vec(), gx)?)
    } else {
        None
    };

    let gw = if needs[1] {
        let mut gw = vec![T::ZERO; d.cin * d.cout * d.kh * d.kw];
        par_rows(&mut gw, d.cout * d.kh * d.kw, |ci, wplane| {
                let xplane = &xd[ci * d.h * d.w..(ci + 1) * d.h * d.w];
                for co in 0..d.cout {
                    let goplane = &gd[co * d.oh * d.ow..(co + 1) * d.oh * d.ow];
                    for ky in 0..d.kh {
                        for kx in 0..d.kw {
                            let kxi = kx as isize - pad as isize;
                            let mut acc = T::ZERO;
                            for y in 0..d.h {
                                let oy = (y * stride + ky) as isize - pad as isize;
                                if oy < 0 || oy as usize >= d.oh {
                                    continue;
                                }
                                let grow =
                                    &goplane[oy as usize * d.ow..(oy as usize + 1) * d.ow];
                                let xrow = &xplane[y * d.w..(y + 1) * d.w];
                                acc += dot_gather(xrow, grow, kxi, stride);
                            }
                            wplane[(co * d.kh + ky) * d.kw + kx] = acc;
                        }
                    }
                }
            });
        Some(Tensor::new(wt.shape().to_vec(), gw)?)
    } else {
        None
    };

    Ok(vec![gx, gw])
}

fn matmul_dims<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<(usize, usize, usize)> {
    let (sa, sb) = (a.shape(), b.shape());
    if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
        return Err(mismatch(
            "matmul",
            format!("expected [m,k] x [k,n], got {sa:?} x {sb:?}"),
        ));
    }
    Ok((sa[0], sa[1], sb[1]))
}

fn matmul_raw<T: Scalar>(
    a: &[T],
    b: &[T],
    m: usize,
    k: usize,
    n: usize,
    ta: bool,
    tb: bool,
) -> Vec<T> {
    // a is m x k (or k x m when ta), b is k x n (or n x k when tb)
    let mut out = vec![T::ZERO; m * n];
    for i in 0..m {
        for p in 0..k {
            let av = if ta { a[p * m + i] } else { a[i * k + p] };
            for j in 0..n {
                let bv = if tb { b[j * k + p] } else { b[p * n + j] };
                out[i * n + j] += av * bv;
            }
        }
    }
    out
}

fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

fn reduce_out_shape(shape: &[usize], axis: Option<usize>) -> Result<Vec<usize>> {
    match axis {
        None => Ok(vec![1]),
        Some(ax) => {
            if ax >= shape.len() {
                return Err(mismatch(
                    "sum",
                    format!("axis {ax} out of range for shape {shape:?}"),
                ));
            }
            let mut out = shape.to_vec();
            out[ax] = 1;
            Ok(out)
        }
    }
}

/// Iterate `(outer, inner)` so index = outer*axis_len*inner_stride + a*inner_stride + inner.
fn axis_split(shape: &[usize], ax: usize) -> (usize, usize, usize) {
    let axis_len = shape[ax];
    let inner: usize = shape[ax + 1..].iter().product();
    let outer: usize = shape[..ax].iter().product();
    (outer, axis_len, inner)
}

fn reduce_forward<T: Scalar>(
    x: &Tensor<T>,
    axis: Option<usize>,
    mean: bool,
) -> Result<Tensor<T>> {
    let out_shape = reduce_out_shape(x.shape(), axis)?;
    match axis {
        None => {
            let mut acc = T::ZERO;
            for &v in x.data() {
                acc += v;
            }
            if mean {
                acc = acc / T::from_f64(x.numel() as f64);
            }
            Tensor::new(out_shape, vec![acc])
        }
        Some(ax) => {
            let (outer, axis_len, inner) = axis_split(x.shape(), ax);
            let xd = x.data();
            let mut out = vec![T::ZERO; outer * inner];
            for o in 0..outer {
                for a in 0..axis_len {
                    let base = (o * axis_len + a) * inner;
                    let dst = &mut out[o * inner..(o + 1) * inner];
                    for (d, &v) in dst.iter_mut().zip(&xd[base..base + inner]) {
                        *d += v;
                    }
                }
            }
            if mean {
                let inv = T::ONE / T::from_f64(axis_len as f64);
                for v in &mut out {
                    *v = *v * inv;
                }
            }
            Tensor::new(out_shape, out)
        }
    }
}

fn reduce_backward<T: Scalar>(
    x: &Tensor<T>,
    grad: &Tensor<T>,
    axis: Option<usize>,
    mean: bool,
) -> Tensor<T> {
    match axis {
        None => {
            let mut g = grad.data()[0];
            if mean {
                g = g / T::from_f64(x.numel() as f64);
            }
            Tensor::full(x.shape(), g)
        }
        Some(ax) => {
            let (outer, axis_len, inner) = axis_split(x.shape(), ax);
            let gd = grad.data();
            let scale = if mean {
                T::ONE / T::from_f64(axis_len as f64)
            } else {
                T::ONE
            };
            let mut out = vec![T::ZERO; x.numel()];
            for o in 0..outer {
                let src = &gd[o * inner..(o + 1) * inner];
                for a in 0..axis_len {
                    let base = (o * axis_len + a) * inner;
                    for (d, &g) in out[base..base + inner].iter_mut().zip(src) {
                        *d = g * scale;
                    }
                }
            }
            Tensor::new(x.shape().to_vec(), out).expect("reduce_backward shape")
        }
    }
}

fn concat_forward<T: Scalar>(xs: &[&Tensor<T>], axis: usize) -> Result<Tensor<T>> {
    if xs.is_empty() {
        return Err(mismatch("concat", "no inputs".into()));
    }
    let rank = xs[0].shape().len();
    if axis >= rank {
        return Err(mismatch(
            "concat",
            format!("axis {axis} out of range for rank {rank}"),
        ));
    }
    for x in xs {
        if x.shape().len() != rank {
            return Err(mismatch(
                "concat",
                format!("rank mismatch: {:?} vs {:?}", xs[0].shape(), x.shape()),
            ));
        }
        for (d, (&ea, &eb)) in xs[0].shape().iter().zip(x.shape()).enumerate() {
            if d != axis && ea != eb {
                return Err(mismatch(
                    "concat",
                    format!("extent mismatch at dim {d}: {:?} vs {:?}", xs[0].shape(), x.shape()),
                ));
            }
        }
    }
    let mut out_shape = xs[0].shape().to_vec();
    out_shape[axis] = xs.iter().map(|x| x.shape()[axis]).sum();
    let (outer, _, inner) = axis_split(&out_shape, axis);
    let mut out = Vec::with_capacity(out_shape.iter().product());
    for o in 0..outer {
        for x in xs {
            let alen = x.shape()[axis];
            let base = o * alen * inner;
            out.extend_from_slice(&x.data()[base..base + alen * inner]);
        }
    }
    Tensor::new(out_shape, out)
}

fn concat_backward<T: Scalar>(
    xs: &[&Tensor<T>],
    grad: &Tensor<T>,
    axis: usize,
    needs: &[bool],
) -> Result<Vec<Option<Tensor<T>>>> {
    let (outer, _, inner) = axis_split(grad.shape(), axis);
    let gd = grad.data();
    let total_axis: usize = grad.shape()[axis];
    let mut outs: Vec<Option<Vec<T>>> = xs
        .iter()
        .zip(needs)
        .map(|(x, &n)| n.then(|| Vec::with_capacity(x.numel())))
        .collect();
    for o in 0..outer {
        let mut offset = 0usize;
        for (i, x) in xs.iter().enumerate() {
            let alen = x.shape()[axis];
            if let Some(buf) = &mut outs[i] {
                let base = (o * total_axis + offset) * inner;
                buf.extend_from_slice(&gd[base..base + alen * inner]);
            }
            offset += alen;
        }
    }
    xs.iter()
        .zip(outs)
        .map(|(x, buf)| buf.map(|b| Tensor::new(x.shape().to_vec(), b)).transpose())
        .collect()
}

fn slice_forward<T: Scalar>(
    x: &Tensor<T>,
    axis: usize,
    start: usize,
    len: usize,
) -> Result<Tensor<T>> {
    let shape = x.shape();
    if axis >= shape.len() || start + len > shape[axis] || len == 0 {
        return Err(mismatch(
            "slice",
            format!("slice [{start}..{}] on axis {axis} of shape {shape:?}", start + len),
        ));
    }
    let (outer, axis_len, inner) = axis_split(shape, axis);
    let mut out_shape = shape.to_vec();
    out_shape[axis] = len;
    let xd = x.data();
    let mut out = Vec::with_capacity(outer * len * inner);
    for o in 0..outer {
        let base = (o * axis_len + start) * inner;
        out.extend_from_slice(&xd[base..base + len * inner]);
    }
    Tensor::new(out_shape, out)
}

fn slice_backward<T: Scalar>(
    x: &Tensor<T>,
    grad: &Tensor<T>,
    axis: usize,
    start: usize,
    len: usize,
) -> Tensor<T> {
    let (outer, axis_len, inner) = axis_split(x.shape(), axis);
    let gd = grad.data();
    let mut out = vec![T::ZERO; x.numel()];
    for o in 0..outer {
        let dst = (o * axis_len + start) * inner;
        let src = o * len * inner;
        out[dst..dst + len * inner].copy_from_slice(&gd[src..src + len * inner]);
    }
    Tensor::new(x.shape().to_vec(), out).expect("slice_backward shape")
}

/// Trailing-dimension broadcast: source is right-aligned against the target;
/// each source extent must equal the target extent or be 1.
fn broadcast_check(src: &[usize], dst: &[usize]) -> Result<()> {
    if src.len() > dst.len() {
        return Err(mismatch(
            "broadcast",
            format!("source rank {:?} exceeds target {:?}", src, dst),
        ));
    }
    let offset = dst.len() - src.len();
    for (i, &se) in src.iter().enumerate() {
        let de = dst[offset + i];
        if se != de && se != 1 {
            return Err(mismatch(
                "broadcast",
                format!("cannot broadcast {src:?} to {dst:?} at dim {}", offset + i),
            ));
        }
    }
    Ok(())
}

fn broadcast_forward<T: Scalar>(x: &Tensor<T>, target: &[usize]) -> Result<Tensor<T>> {
    broadcast_check(x.shape(), target)?;
    let offset = target.len() - x.shape().len();
    let src_strides = strides(x.shape());
    let numel: usize = target.iter().product();
    let xd = x.data();
    let mut out = Vec::with_capacity(numel);
    let mut idx = vec![0usize; target.len()];
    for _ in 0..numel {
        let mut src = 0usize;
        for (d, &i) in idx.iter().enumerate() {
            if d >= offset {
                let sd = d - offset;
                if x.shape()[sd] != 1 {
                    src += i * src_strides[sd];
                }
            }
        }
        out.push(xd[src]);
        for d in (0..target.len()).rev() {
            idx[d] += 1;
            if idx[d] < target[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    Tensor::new(target.to_vec(), out)
}

fn broadcast_backward<T: Scalar>(x: &Tensor<T>, grad: &Tensor<T>) -> Tensor<T> {
    let target = grad.shape();
    let offset = target.len() - x.shape().len();
    let src_strides = strides(x.shape());
    let gd = grad.data();
    let mut out = vec![T::ZERO; x.numel()];
    let mut idx = vec![0usize; target.len()];
    for &g in gd {
        let mut src = 0usize;
        for (d, &i) in idx.iter().enumerate() {
            if d >= offset {
                let sd = d - offset;
                if x.shape()[sd] != 1 {
                    src += i * src_strides[sd];
                }
            }
        }
        out[src] += g;
        for d in (0..target.len()).rev() {
            idx[d] += 1;
            if idx[d] < target[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    Tensor::new(x.shape().to_vec(), out).expect("broadcast_backward shape")
}

const L2_EPS: f64 = 1e-12;

/// Normalize over axis 0, independently for every trailing index.
fn normalize_l2_forward<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let shape = x.shape();
    if shape.is_empty() {
        return Err(mismatch("normalize_l2_channel", "rank 0 input".into()));
    }
    let c = shape[0];
    let inner: usize = shape[1..].iter().product();
    let xd = x.data();
    let eps = T::from_f64(L2_EPS);
    let mut out = vec![T::ZERO; xd.len()];
    for i in 0..inner {
        let mut ss = T::ZERO;
        for ch in 0..c {
            let v = xd[ch * inner + i];
            ss += v * v;
        }
        let inv = T::ONE / (ss + eps).sqrt();
        for ch in 0..c {
            out[ch * inner + i] = xd[ch * inner + i] * inv;
        }
    }
    Tensor::new(shape.to_vec(), out)
}

fn normalize_l2_backward<T: Scalar>(x: &Tensor<T>, grad: &Tensor<T>) -> Tensor<T> {
    let shape = x.shape();
    let c = shape[0];
    let inner: usize = shape[1..].iter().product();
    let xd = x.data();
    let gd = grad.data();
    let eps = T::from_f64(L2_EPS);
    let mut out = vec![T::ZERO; xd.len()];
    for i in 0..inner {
        let mut ss = T::ZERO;
        let mut xg = T::ZERO;
        for ch in 0..c {
            let v = xd[ch * inner + i];
            ss += v * v;
            xg += v * gd[ch * inner + i];
        }
        let s = T::ONE / (ss + eps).sqrt();
        let s3 = s * s * s;
        for ch in 0..c {
            let idx = ch * inner + i;
            out[idx] = s * gd[idx] - s3 * xd[idx] * xg;
        }
    }
    Tensor::new(shape.to_vec(), out).expect("normalize_l2_backward shape")
}

const IN_EPS: f64 = 1e-5;

fn instance_norm_forward<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let shape = x.shape();
    if shape.len() != 3 {
        return Err(mismatch(
            "instance_norm",
            format!("expected [c,h,w], got {shape:?}"),
        ));
    }
    let (c, hw) = (shape[0], shape[1] * shape[2]);
    let xd = x.data();
    let eps = T::from_f64(IN_EPS);
    let n = T::from_f64(hw as f64);
    let mut out = vec![T::ZERO; xd.len()];
    for ch in 0..c {
        let plane = &xd[ch * hw..(ch + 1) * hw];
        let mut mean = T::ZERO;
        for &v in plane {
            mean += v;
        }
        mean = mean / n;
        let mut var = T::ZERO;
        for &v in plane {
            let d = v - mean;
            var += d * d;
        }
        var = var / n;
        let inv = T::ONE / (var + eps).sqrt();
        for (o, &v) in out[ch * hw..(ch + 1) * hw].iter_mut().zip(plane) {
            *o = (v - mean) * inv;
        }
    }
    Tensor::new(shape.to_vec(), out)
}

fn instance_norm_backward<T: Scalar>(
    x: &Tensor<T>,
    y: &Tensor<T>,
    grad: &Tensor<T>,
) -> Tensor<T> {
    let shape = x.shape();
    let (c, hw) = (shape[0], shape[1] * shape[2]);
    let xd = x.data();
    let yd = y.data();
    let gd = grad.data();
    let eps = T::from_f64(IN_EPS);
    let n = T::from_f64(hw as f64);
    let mut out = vec![T::ZERO; xd.len()];
    for ch in 0..c {
        let plane = &xd[ch * hw..(ch + 1) * hw];
        let yhat = &yd[ch * hw..(ch + 1) * hw];
        let g = &gd[ch * hw..(ch + 1) * hw];
        let mut mean = T::ZERO;
        for &v in plane {
            mean += v;
        }
        mean = mean / n;
        let mut var = T::ZERO;
        for &v in plane {
            let d = v - mean;
            var += d * d;
        }
        var = var / n;
        let inv = T::ONE / (var + eps).sqrt();
        let mut gmean = T::ZERO;
        let mut gymean = T::ZERO;
        for i in 0..hw {
            gmean += g[i];
            gymean += g[i] * yhat[i];
        }
        gmean = gmean / n;
        gymean = gymean / n;
        for i in 0..hw {
            out[ch * hw + i] = inv * (g[i] - gmean - yhat[i] * gymean);
        }
    }
    Tensor::new(shape.to_vec(), out).expect("instance_norm_backward shape")
}

/// Bilinear sample coefficients for one output coordinate (align_corners=false).
fn bilinear_axis(o: usize, out_len: usize, in_len: usize) -> (usize, usize, f64) {
    let scale = in_len as f64 / out_len as f64;
    let src = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (in_len - 1) as f64);
    let i0 = src.floor() as usize;
    let i1 = (i0 + 1).min(in_len - 1);
    let frac = src - i0 as f64;
    (i0, i1, frac)
}

fn pixel_resample_forward<T: Scalar>(
    x: &Tensor<T>,
    out_h: usize,
    out_w: usize,
) -> Result<Tensor<T>> {
    let shape = x.shape();
    if shape.len() != 3 || out_h == 0 || out_w == 0 {
        return Err(mismatch(
            "pixel_resample",
            format!("expected [c,h,w] input and positive target, got {shape:?} -> {out_h}x{out_w}"),
        ));
    }
    let (c, h, w) = (shape[0], shape[1], shape[2]);
    let xd = x.data();
    let mut out = vec![T::ZERO; c * out_h * out_w];
    for oy in 0..out_h {
        let (y0, y1, fy) = bilinear_axis(oy, out_h, h);
        for ox in 0..out_w {
            let (x0, x1, fx) = bilinear_axis(ox, out_w, w);
            let w00 = T::from_f64((1.0 - fy) * (1.0 - fx));
            let w01 = T::from_f64((1.0 - fy) * fx);
            let w10 = T::from_f64(fy * (1.0 - fx));
            let w11 = T::from_f64(fy * fx);
            for ch in 0..c {
                let p = &xd[ch * h * w..];
                out[(ch * out_h + oy) * out_w + ox] = w00 * p[y0 * w + x0]
                    + w01 * p[y0 * w + x1]
                    + w10 * p[y1 * w + x0]
                    + w11 * p[y1 * w + x1];
            }
        }
    }
    Tensor::new(vec![c, out_h, out_w], out)
}

fn pixel_resample_backward<T: Scalar>(x: &Tensor<T>, grad: &Tensor<T>) -> Tensor<T> {
    let shape = x.shape();
    let (c, h, w) = (shape[0], shape[1], shape[2]);
    let (out_h, out_w) = (grad.shape()[1], grad.shape()[2]);
    let gd = grad.data();
    let mut out = vec![T::ZERO; x.numel()];
    for oy in 0..out_h {
        let (y0, y1, fy) = bilinear_axis(oy, out_h, h);
        for ox in 0..out_w {
            let (x0, x1, fx) = bilinear_axis(ox, out_w, w);
            let w00 = T::from_f64((1.0 - fy) * (1.0 - fx));
            let w01 = T::from_f64((1.0 - fy) * fx);
            let w10 = T::from_f64(fy * (1.0 - fx));
            let w11 = T::from_f64(fy * fx);
            for ch in 0..c {
                let g = gd[(ch * out_h + oy) * out_w + ox];
                let p = &mut out[ch * h * w..(ch + 1) * h * w];
                p[y0 * w + x0] += w00 * g;
                p[y0 * w + x1] += w01 * g;
                p[y1 * w + x0] += w10 * g;
                p[y1 * w + x1] += w11 * g;
            }
        }
    }
    Tensor::new(shape.to_vec(), out).expect("pixel_resample_backward shape")
}

fn arity(prim: &Primitive, n: usize) -> Result<()> {
    let expected = match prim {
        Primitive::Add
        | Primitive::Sub
        | Primitive::Mul
        | Primitive::Div
        | Primitive::Matmul
        | Primitive::Conv2d { .. }
        | Primitive::TransposeConv2d { .. }
        | Primitive::Pow => 2,
        Primitive::Concat { .. } => {
            if n == 0 {
                return Err(mismatch("concat", "no inputs".into()));
            }
            return Ok(());
        }
        _ => 1,
    };
    if n != expected {
        return Err(mismatch(
            prim.name(),
            format!("expected {expected} inputs, got {n}"),
        ));
    }
    Ok(())
}

/// Floor of the base used for the exponent gradient of `pow`; keeps the
/// ln factor finite when the base reaches the clamp at zero.
const POW_LN_FLOOR: f64 = 1e-30;

pub(super) fn forward<T: Scalar>(prim: &Primitive, inputs: &[&Tensor<T>]) -> Result<Tensor<T>> {
    arity(prim, inputs.len())?;
    match prim {
        Primitive::Add => bin_forward("add", inputs[0], inputs[1], |a, b| a + b),
        Primitive::Sub => bin_forward("sub", inputs[0], inputs[1], |a, b| a - b),
        Primitive::Mul => bin_forward("mul", inputs[0], inputs[1], |a, b| a * b),
        Primitive::Div => bin_forward("div", inputs[0], inputs[1], |a, b| a / b),
        Primitive::Pow => bin_forward("pow", inputs[0], inputs[1], |a, b| a.powf(b)),
        Primitive::Matmul => {
            let (m, k, n) = matmul_dims(inputs[0], inputs[1])?;
            let out = matmul_raw(inputs[0].data(), inputs[1].data(), m, k, n, false, false);
            Tensor::new(vec![m, n], out)
        }
        Primitive::Conv2d { stride, pad } => conv2d_forward(inputs[0], inputs[1], *stride, *pad),
        Primitive::TransposeConv2d {
            stride,
            pad,
            out_pad,
        } => tconv_forward(inputs[0], inputs[1], *stride, *pad, *out_pad),
        Primitive::LeakyRelu { slope } => {
            let s = T::from_f64(*slope);
            Ok(unary_forward(inputs[0], |v| if v > T::ZERO { v } else { s * v }))
        }
        Primitive::Relu => Ok(unary_forward(inputs[0], |v| v.max(T::ZERO))),
        Primitive::Tanh => Ok(unary_forward(inputs[0], Scalar::tanh)),
        Primitive::Sigmoid => Ok(unary_forward(inputs[0], |v| {
            T::ONE / (T::ONE + (-v).exp())
        })),
        Primitive::Exp => Ok(unary_forward(inputs[0], Scalar::exp)),
        Primitive::Log => Ok(unary_forward(inputs[0], Scalar::ln)),
        Primitive::Sum { axis } => reduce_forward(inputs[0], *axis, false),
        Primitive::Mean { axis } => reduce_forward(inputs[0], *axis, true),
        Primitive::Concat { axis } => concat_forward(inputs, *axis),
        Primitive::Slice { axis, start, len } => slice_forward(inputs[0], *axis, *start, *len),
        Primitive::Broadcast { shape } => broadcast_forward(inputs[0], shape),
        Primitive::NormalizeL2Channel => normalize_l2_forward(inputs[0]),
        Primitive::InstanceNorm => instance_norm_forward(inputs[0]),
        Primitive::Clamp { lo, hi } => {
            let (lo, hi) = (T::from_f64(*lo), T::from_f64(*hi));
            Ok(unary_forward(inputs[0], |v| v.max(lo).min(hi)))
        }
        Primitive::PixelResample { out_h, out_w } => {
            pixel_resample_forward(inputs[0], *out_h, *out_w)
        }
    }
}

fn unary_grad<T: Scalar>(
    x: &Tensor<T>,
    grad: &Tensor<T>,
    f: impl Fn(T, T) -> T,
) -> Vec<Option<Tensor<T>>> {
    let data = x
        .data()
        .iter()
        .zip(grad.data())
        .map(|(&v, &g)| f(v, g))
        .collect();
    vec![Some(Tensor::new(x.shape().to_vec(), data).expect("unary grad shape"))]
}

/// VJP for one primitive. `needs[i]` marks inputs whose gradient is wanted;
/// skipped inputs return `None`.
pub(super) fn backward<T: Scalar>(
    prim: &Primitive,
    inputs: &[&Tensor<T>],
    output: &Tensor<T>,
    grad: &Tensor<T>,
    needs: &[bool],
) -> Result<Vec<Option<Tensor<T>>>> {
    let gd = grad.data();
    match prim {
        Primitive::Add | Primitive::Sub | Primitive::Mul | Primitive::Div | Primitive::Pow => {
            let (a, b) = (inputs[0], inputs[1]);
            let fetch = |t: &Tensor<T>, i: usize| -> T {
                if t.numel() == 1 {
                    t.data()[0]
                } else {
                    t.data()[i]
                }
            };
            let ga = needs[0].then(|| {
                let g: Vec<T> = (0..gd.len())
                    .map(|i| {
                        let (av, bv, g) = (fetch(a, i), fetch(b, i), gd[i]);
                        match prim {
                            Primitive::Add | Primitive::Sub => g,
                            Primitive::Mul => g * bv,
                            Primitive::Div => g / bv,
                            Primitive::Pow => {
                                // d/da a^b = b * a^(b-1)
                                g * bv * av.powf(bv - T::ONE)
                            }
                            _ => unreachable!(),
                        }
                    })
                    .collect();
                reduce_to(g, a.shape())
            });
            let gb = needs[1].then(|| {
                let g: Vec<T> = (0..gd.len())
                    .map(|i| {
                        let (av, bv, g) = (fetch(a, i), fetch(b, i), gd[i]);
                        match prim {
                            Primitive::Add => g,
                            Primitive::Sub => -g,
                            Primitive::Mul => g * av,
                            Primitive::Div => -g * av / (bv * bv),
                            Primitive::Pow => {
                                // d/db a^b = a^b ln a; ln floored so a=0 stays finite
                                let safe = av.max(T::from_f64(POW_LN_FLOOR));
                                g * av.powf(bv) * safe.ln()
                            }
                            _ => unreachable!(),
                        }
                    })
                    .collect();
                reduce_to(g, b.shape())
            });
            Ok(vec![ga, gb])
        }
        Primitive::Matmul => {
            let (m, k, n) = matmul_dims(inputs[0], inputs[1])?;
            let ga = needs[0].then(|| {
                // g [m,n] x b^T [n,k]
                let data = matmul_raw(gd, inputs[1].data(), m, n, k, false, true);
                Tensor::new(vec![m, k], data).expect("matmul ga")
            });
            let gb = needs[1].then(|| {
                // a^T [k,m] x g [m,n]
                let data = matmul_raw(inputs[0].data(), gd, k, m, n, true, false);
                Tensor::new(vec![k, n], data).expect("matmul gb")
            });
            Ok(vec![ga, gb])
        }
        Primitive::Conv2d { stride, pad } => {
            conv2d_backward(inputs[0], inputs[1], grad, *stride, *pad, needs)
        }
        Primitive::TransposeConv2d {
            stride,
            pad,
            out_pad,
        } => tconv_backward(inputs[0], inputs[1], grad, *stride, *pad, *out_pad, needs),
        Primitive::LeakyRelu { slope } => {
            let s = T::from_f64(*slope);
            Ok(unary_grad(inputs[0], grad, |v, g| {
                if v > T::ZERO {
                    g
                } else {
                    s * g
                }
            }))
        }
        Primitive::Relu => Ok(unary_grad(inputs[0], grad, |v, g| {
            if v > T::ZERO {
                g
            } else {
                T::ZERO
            }
        })),
        Primitive::Tanh => {
            let data = output
                .data()
                .iter()
                .zip(gd)
                .map(|(&y, &g)| g * (T::ONE - y * y))
                .collect();
            Ok(vec![Some(Tensor::new(output.shape().to_vec(), data)?)])
        }
        Primitive::Sigmoid => {
            let data = output
                .data()
                .iter()
                .zip(gd)
                .map(|(&y, &g)| g * y * (T::ONE - y))
                .collect();
            Ok(vec![Some(Tensor::new(output.shape().to_vec(), data)?)])
        }
        Primitive::Exp => {
            let data = output.data().iter().zip(gd).map(|(&y, &g)| g * y).collect();
            Ok(vec![Some(Tensor::new(output.shape().to_vec(), data)?)])
        }
        Primitive::Log => Ok(unary_grad(inputs[0], grad, |v, g| g / v)),
        Primitive::Sum { axis } => Ok(vec![Some(reduce_backward(inputs[0], grad, *axis, false))]),
        Primitive::Mean { axis } => Ok(vec![Some(reduce_backward(inputs[0], grad, *axis, true))]),
        Primitive::Concat { axis } => concat_backward(inputs, grad, *axis, needs),
        Primitive::Slice { axis, start, len } => Ok(vec![Some(slice_backward(
            inputs[0], grad, *axis, *start, *len,
        ))]),
        Primitive::Broadcast { .. } => Ok(vec![Some(broadcast_backward(inputs[0], grad))]),
        Primitive::NormalizeL2Channel => Ok(vec![Some(normalize_l2_backward(inputs[0], grad))]),
        Primitive::InstanceNorm => Ok(vec![Some(instance_norm_backward(
            inputs[0], output, grad,
        ))]),
        Primitive::Clamp { lo, hi } => {
            let (lo, hi) = (T::from_f64(*lo), T::from_f64(*hi));
            Ok(unary_grad(inputs[0], grad, |v, g| {
                if v >= lo && v <= hi {
                    g
                } else {
                    T::ZERO
                }
            }))
        }
        Primitive::PixelResample { .. } => {
            Ok(vec![Some(pixel_resample_backward(inputs[0], grad))])
        }
    }
}
