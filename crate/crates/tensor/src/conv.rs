//! Spatial operators on channel-major `C×H×W` tensors.

use std::rc::Rc;

use rayon::prelude::*;

use crate::error::{invalid, shape_err, Result};
use crate::tensor::Tensor;

/// How out-of-range taps are filled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PadMode {
    /// Zeros on every side.
    Zero,
    /// Wrap left/right (360° continuity), zeros top/bottom.
    CircularH,
}

#[derive(Debug, Clone, Copy)]
pub struct Conv2dOpts {
    pub stride: usize,
    pub padding: usize,
    pub groups: usize,
    pub pad_mode: PadMode,
}

impl Default for Conv2dOpts {
    fn default() -> Self {
        Conv2dOpts {
            stride: 1,
            padding: 0,
            groups: 1,
            pad_mode: PadMode::Zero,
        }
    }
}

impl Conv2dOpts {
    pub fn same(kernel: usize, pad_mode: PadMode) -> Self {
        Conv2dOpts {
            padding: kernel / 2,
            pad_mode,
            ..Default::default()
        }
    }
}

const NO_TAP: usize = usize::MAX;

/// Output spatial size of a convolution.
pub fn conv_out_size(input: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    (input + 2 * padding)
        .checked_sub(kernel)
        .map(|span| span / stride + 1)
}

/// Cross-correlation of `x: C_in×H×W` with `w: C_out×(C_in/g)×k×k`.
///
/// Lowered to an im2col matrix per group. Each output pixel accumulates its
/// taps in the same `(channel, ky, kx)` order no matter where it lies, which
/// makes circular-padded stride-1 convolutions exactly shift-equivariant.
pub fn conv2d(x: &Tensor, w: &Tensor, b: Option<&Tensor>, opts: Conv2dOpts) -> Result<Tensor> {
    let xs = x.shape();
    let ws = w.shape();
    if xs.len() != 3 || ws.len() != 4 {
        return shape_err("conv2d", format!("input {xs:?}, weight {ws:?}"));
    }
    let (cin, h, wd) = (xs[0], xs[1], xs[2]);
    let (cout, cin_g, kh, kw) = (ws[0], ws[1], ws[2], ws[3]);
    let g = opts.groups;
    if g == 0 || cin % g != 0 || cout % g != 0 || cin / g != cin_g {
        return shape_err(
            "conv2d",
            format!("channels in={cin} out={cout} weight_in={cin_g} groups={g}"),
        );
    }
    if opts.stride == 0 {
        return invalid("conv2d", "stride 0");
    }
    if let Some(bias) = b {
        if bias.shape() != [cout] {
            return shape_err("conv2d", format!("bias {:?} for {cout} outputs", bias.shape()));
        }
    }
    let (Some(oh), Some(ow)) = (
        conv_out_size(h, kh, opts.stride, opts.padding),
        conv_out_size(wd, kw, opts.stride, opts.padding),
    ) else {
        return shape_err("conv2d", format!("kernel {kh}x{kw} larger than padded {h}x{wd}"));
    };
    if opts.pad_mode == PadMode::CircularH && opts.padding > wd {
        return invalid("conv2d", "circular padding wider than the input");
    }
    let cout_g = cout / g;
    let kk = cin_g * kh * kw;
    let npix = oh * ow;

    // Input row of each (ky, oy) and column of each (kx, ox), NO_TAP where
    // the tap falls in zero padding.
    let pointwise = kh == 1 && kw == 1 && opts.stride == 1 && opts.padding == 0;
    let rowmap: Vec<usize> = (0..kh)
        .flat_map(|ky| (0..oh).map(move |oy| (ky, oy)))
        .map(|(ky, oy)| {
            let iy = (oy * opts.stride + ky) as isize - opts.padding as isize;
            if iy < 0 || iy >= h as isize { NO_TAP } else { iy as usize }
        })
        .collect();
    let colmap: Vec<usize> = (0..kw)
        .flat_map(|kx| (0..ow).map(move |ox| (kx, ox)))
        .map(|(kx, ox)| {
            let ix = (ox * opts.stride + kx) as isize - opts.padding as isize;
            match opts.pad_mode {
                PadMode::CircularH => ix.rem_euclid(wd as isize) as usize,
                PadMode::Zero if ix < 0 || ix >= wd as isize => NO_TAP,
                PadMode::Zero => ix as usize,
            }
        })
        .collect();
    // Visits every non-padding tap as (column index, input index) in
    // (group, channel, ky, kx, oy, ox) order.
    let geometry = (cin, h, wd, kh, kw, oh, ow, npix);
    let mut parents = vec![x.clone(), w.clone()];
    if let Some(b) = b {
        parents.push(b.clone());
    }
    let keep = Tensor::records(&parents.iter().collect::<Vec<_>>());
    let xd = x.data();
    let cols: Vec<f64> = if pointwise {
        x.saved(keep)
    } else {
        let mut cols = vec![0.0; g * kk * npix];
        for_each_tap(geometry, &rowmap, &colmap, |col, src| cols[col] = xd[src]);
        cols
    };
    let src_cols: &[f64] = if pointwise { &xd } else { &cols };
    let wd_ = w.data();
    let wv: &[f64] = &wd_;
    let bd = b.map(|b| b.data());
    let bv: Option<&[f64]> = bd.as_deref().map(Vec::as_slice);

    // Four output channels of a group share each column row; every pixel
    // still accumulates its taps in `k` order.
    let block = if cout_g % 4 == 0 { 4 } else { 1 };
    let mut out = vec![0.0; cout * npix];
    out.par_chunks_mut(block * npix).enumerate().for_each(|(ob, dst)| {
        let o0 = ob * block;
        let gi = o0 / cout_g;
        let gcols = &src_cols[gi * kk * npix..(gi + 1) * kk * npix];
        // Weights of the block interleaved per tap.
        let wblk: Vec<f64> = (0..kk).flat_map(|k| (0..block).map(move |j| wv[(o0 + j) * kk + k])).collect();
        if block == 4 {
            tile_product::<4, 4>(gcols, &wblk, kk, npix, dst);
        } else {
            tile_product::<1, 8>(gcols, &wblk, kk, npix, dst);
        }
        if let Some(bv) = bv {
            for (j, d) in dst.chunks_mut(npix).enumerate() {
                let bo = bv[o0 + j];
                d.iter_mut().for_each(|x| *x += bo);
            }
        }
    });

    drop(bd);
    drop(xd);
    let wv = if keep { wv.to_vec() } else { Vec::new() };
    drop(wd_);
    let in_len = cin * h * wd;
    Ok(Tensor::from_op(
        out,
        vec![cout, oh, ow],
        parents,
        move |grad, needs| {
            let gx = needs[0].then(|| {
                // grad_cols[g, k, p] = Σ_o w[o, k]·grad[o, p]
                let mut gcols = vec![0.0; g * kk * npix];
                gcols.par_chunks_mut(npix).enumerate().for_each(|(row, dst)| {
                    let gi = row / kk;
                    let k = row % kk;
                    for oo in 0..cout_g {
                        let o = gi * cout_g + oo;
                        let wk = wv[o * kk + k];
                        let src = &grad[o * npix..(o + 1) * npix];
                        dst.iter_mut().zip(src).for_each(|(d, s)| *d += wk * s);
                    }
                });
                if pointwise {
                    return gcols;
                }
                let mut gx = vec![0.0; in_len];
                for_each_tap(geometry, &rowmap, &colmap, |col, src| gx[src] += gcols[col]);
                gx
            });
            let gw = needs[1].then(|| {
                let mut gw = vec![0.0; cout * kk];
                gw.par_chunks_mut(kk).enumerate().for_each(|(o, dst)| {
                    let gi = o / cout_g;
                    let grow = &grad[o * npix..(o + 1) * npix];
                    for (k, d) in dst.iter_mut().enumerate() {
                        let src = &cols[(gi * kk + k) * npix..(gi * kk + k + 1) * npix];
                        *d = grow.iter().zip(src).map(|(a, b)| a * b).sum();
                    }
                });
                gw
            });
            let mut res = vec![gx, gw];
            if needs.len() > 2 {
                res.push(needs[2].then(|| {
                    (0..cout)
                        .map(|o| grad[o * npix..(o + 1) * npix].iter().sum())
                        .collect()
                }));
            }
            res
        },
    ))
}

/// `dst[j, p] = Σ_k w[k, j]·cols[k, p]` for `J` outputs, summed in `k` order
/// with `J×P` register accumulators per pixel tile.
fn tile_product<const J: usize, const P: usize>(cols: &[f64], w: &[f64], kk: usize, npix: usize, dst: &mut [f64]) {
    let full = npix / P * P;
    for p0 in (0..full).step_by(P) {
        let mut acc = [[0.0; P]; J];
        for k in 0..kk {
            let s: &[f64; P] = cols[k * npix + p0..][..P].try_into().unwrap();
            let wk: &[f64; J] = w[k * J..][..J].try_into().unwrap();
            for j in 0..J {
                for q in 0..P {
                    acc[j][q] += wk[j] * s[q];
                }
            }
        }
        for (j, a) in acc.iter().enumerate() {
            dst[j * npix + p0..][..P].copy_from_slice(a);
        }
    }
    for p in full..npix {
        for j in 0..J {
            let mut a = 0.0;
            for k in 0..kk {
                a += w[k * J + j] * cols[k * npix + p];
            }
            dst[j * npix + p] = a;
        }
    }
}

type ConvGeometry = (usize, usize, usize, usize, usize, usize, usize, usize);

fn for_each_tap(geo: ConvGeometry, rowmap: &[usize], colmap: &[usize], mut f: impl FnMut(usize, usize)) {
    let (cin, h, wd, kh, kw, oh, ow, npix) = geo;
    // Channel-major columns: row index = c·kh·kw + ky·kw + kx for every group.
    for c in 0..cin {
        for ky in 0..kh {
            for kx in 0..kw {
                let row = (c * kh + ky) * kw + kx;
                let cmap = &colmap[kx * ow..(kx + 1) * ow];
                for oy in 0..oh {
                    let iy = rowmap[ky * oh + oy];
                    if iy == NO_TAP {
                        continue;
                    }
                    let base = (c * h + iy) * wd;
                    let dst = row * npix + oy * ow;
                    for (ox, &ix) in cmap.iter().enumerate() {
                        if ix != NO_TAP {
                            f(dst + ox, base + ix);
                        }
                    }
                }
            }
        }
    }
}

fn chw(x: &Tensor, op: &'static str) -> Result<(usize, usize, usize)> {
    match x.shape() {
        &[c, h, w] => Ok((c, h, w)),
        s => shape_err(op, format!("expected C×H×W, got {s:?}")),
    }
}

/// `[C·s²]×H×W → C×(H·s)×(W·s)`.
pub fn pixel_shuffle(x: &Tensor, s: usize) -> Result<Tensor> {
    let (c, h, w) = chw(x, "pixel_shuffle")?;
    if s == 0 || c % (s * s) != 0 {
        return shape_err("pixel_shuffle", format!("{c} channels not divisible by {s}²"));
    }
    let oc = c / (s * s);
    let (oh, ow) = (h * s, w * s);
    let mut index = Vec::with_capacity(c * h * w);
    for co in 0..oc {
        for y in 0..oh {
            for xo in 0..ow {
                let (i, j) = (y % s, xo % s);
                let ci = co * s * s + i * s + j;
                index.push((ci * h + y / s) * w + xo / s);
            }
        }
    }
    x.gather(Rc::new(index), &[oc, oh, ow])
}

/// `C×(H·s)×(W·s) → [C·s²]×H×W`, the exact inverse of [`pixel_shuffle`].
pub fn pixel_unshuffle(x: &Tensor, s: usize) -> Result<Tensor> {
    let (c, h, w) = chw(x, "pixel_unshuffle")?;
    if s == 0 || h % s != 0 || w % s != 0 {
        return shape_err("pixel_unshuffle", format!("{h}x{w} not divisible by {s}"));
    }
    let (oh, ow) = (h / s, w / s);
    let oc = c * s * s;
    let mut index = Vec::with_capacity(c * h * w);
    for co in 0..oc {
        let (ci, i, j) = (co / (s * s), (co / s) % s, co % s);
        for y in 0..oh {
            for xo in 0..ow {
                index.push((ci * h + y * s + i) * w + xo * s + j);
            }
        }
    }
    x.gather(Rc::new(index), &[oc, oh, ow])
}

pub fn nearest_upsample(x: &Tensor, s: usize) -> Result<Tensor> {
    let (c, h, w) = chw(x, "nearest_upsample")?;
    if s == 0 {
        return invalid("nearest_upsample", "scale 0");
    }
    let (oh, ow) = (h * s, w * s);
    let mut index = Vec::with_capacity(c * oh * ow);
    for ci in 0..c {
        for y in 0..oh {
            for xo in 0..ow {
                index.push((ci * h + y / s) * w + xo / s);
            }
        }
    }
    x.gather(Rc::new(index), &[c, oh, ow])
}

/// Mean over the spatial axes: `C×H×W → C×1×1`.
pub fn global_avg_pool(x: &Tensor) -> Result<Tensor> {
    chw(x, "global_avg_pool")?;
    x.mean_axes(&[1, 2])
}

/// Pads a `C×H×W` tensor: horizontal by wrapping, vertical by replicating edge rows.
pub fn pad_wrap_replicate(x: &Tensor, pad: usize) -> Result<Tensor> {
    let (c, h, w) = chw(x, "pad_wrap_replicate")?;
    let (ph, pw) = (h + 2 * pad, w + 2 * pad);
    let mut index = Vec::with_capacity(c * ph * pw);
    for ci in 0..c {
        for y in 0..ph {
            let sy = (y as isize - pad as isize).clamp(0, h as isize - 1) as usize;
            for xo in 0..pw {
                let sx = (xo as isize - pad as isize).rem_euclid(w as isize) as usize;
                index.push((ci * h + sy) * w + sx);
            }
        }
    }
    x.gather(Rc::new(index), &[c, ph, pw])
}

/// Circular shift by `k` columns to the right along the last axis.
pub fn roll_columns(x: &Tensor, k: isize) -> Result<Tensor> {
    let (c, h, w) = chw(x, "roll_columns")?;
    let mut index = Vec::with_capacity(c * h * w);
    for ci in 0..c {
        for y in 0..h {
            for xo in 0..w {
                let sx = (xo as isize - k).rem_euclid(w as isize) as usize;
                index.push((ci * h + y) * w + sx);
            }
        }
    }
    x.gather(Rc::new(index), &[c, h, w])
}
