//! Naive reference implementations the integration tests compare against.
//! Each is written directly from the defining formula, loop by loop, and
//! shares no code with the library.

#![allow(dead_code)]

use panorect_core::image::ErpImage;

pub fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

pub fn relu(v: f64) -> f64 {
    v.max(0.0)
}

/// Stride-1 "same" convolution, one group. Horizontal taps wrap when
/// `circular`, every other out-of-range tap reads zero.
#[allow(clippy::too_many_arguments)]
pub fn conv_same(x: &[f64], cin: usize, h: usize, w: usize, wt: &[f64], bias: &[f64], cout: usize, k: usize, circular: bool) -> Vec<f64> {
    let r = (k / 2) as isize;
    let mut out = vec![0.0; cout * h * w];
    for o in 0..cout {
        for y in 0..h {
            for px in 0..w {
                let mut acc = bias[o];
                for c in 0..cin {
                    for ky in 0..k {
                        for kx in 0..k {
                            let yy = y as isize + ky as isize - r;
                            let mut xx = px as isize + kx as isize - r;
                            if yy < 0 || yy >= h as isize {
                                continue;
                            }
                            if circular {
                                xx = xx.rem_euclid(w as isize);
                            } else if xx < 0 || xx >= w as isize {
                                continue;
                            }
                            acc += wt[((o * cin + c) * k + ky) * k + kx] * x[(c * h + yy as usize) * w + xx as usize];
                        }
                    }
                }
                out[(o * h + y) * w + px] = acc;
            }
        }
    }
    out
}

/// Per-channel standardization over all pixels (biased variance), then
/// `γ·x̂ + β`.
pub fn batch_norm_train(x: &[f64], c: usize, n: usize, gamma: &[f64], beta: &[f64], eps: f64) -> Vec<f64> {
    let mut out = vec![0.0; c * n];
    for ch in 0..c {
        let v = &x[ch * n..(ch + 1) * n];
        let mean = v.iter().sum::<f64>() / n as f64;
        let var = v.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n as f64;
        for i in 0..n {
            out[ch * n + i] = gamma[ch] * (v[i] - mean) / (var + eps).sqrt() + beta[ch];
        }
    }
    out
}

/// Adaptive fusion in training mode, written out step by step:
/// sum, 3×3 conv + relu, 1×1 conv, sigmoid gate, gated blend, 3×3 conv +
/// relu refinement, two 3×3 conv + batch-norm layers on a residual path,
/// final relu. `p(name)` returns a parameter's values.
pub fn fuse_reference(tf: &[f64], cf: &[f64], c: usize, h: usize, w: usize, circular: bool, p: &dyn Fn(&str) -> Vec<f64>) -> FuseReference {
    let n = h * w;
    let sum: Vec<f64> = tf.iter().zip(cf).map(|(a, b)| a + b).collect();
    let a = conv_same(&sum, c, h, w, &p("att3.weight"), &p("att3.bias"), c, 3, circular);
    let a: Vec<f64> = a.into_iter().map(relu).collect();
    let a = conv_same(&a, c, h, w, &p("att1.weight"), &p("att1.bias"), c, 1, circular);
    let attn: Vec<f64> = a.into_iter().map(sigmoid).collect();
    let blended: Vec<f64> = (0..c * n).map(|i| tf[i] * attn[i] + cf[i] * (1.0 - attn[i])).collect();
    let r = conv_same(&blended, c, h, w, &p("ref.weight"), &p("ref.bias"), c, 3, circular);
    let refined: Vec<f64> = r.into_iter().map(relu).collect();
    let t = conv_same(&refined, c, h, w, &p("res1.weight"), &p("res1.bias"), c, 3, circular);
    let t = batch_norm_train(&t, c, n, &p("bn1.gamma"), &p("bn1.beta"), 1e-5);
    let t: Vec<f64> = t.into_iter().map(relu).collect();
    let t = conv_same(&t, c, h, w, &p("res2.weight"), &p("res2.bias"), c, 3, circular);
    let t = batch_norm_train(&t, c, n, &p("bn2.gamma"), &p("bn2.beta"), 1e-5);
    let out = (0..c * n).map(|i| relu(refined[i] + t[i])).collect();
    FuseReference { attn, blended, refined, out }
}

pub struct FuseReference {
    pub attn: Vec<f64>,
    pub blended: Vec<f64>,
    pub refined: Vec<f64>,
    pub out: Vec<f64>,
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "length mismatch");
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn psnr_naive(a: &ErpImage, b: &ErpImage) -> f64 {
    let mut se = 0.0;
    for c in 0..a.channels {
        for y in 0..a.height() {
            for x in 0..a.width() {
                let d = a.at(c, y, x) - b.at(c, y, x);
                se += d * d;
            }
        }
    }
    let mse = se / a.data.len() as f64;
    if mse == 0.0 { 120.0 } else { (10.0 * (1.0 / mse).log10()).min(120.0) }
}

/// SSIM with a full 11×11 Gaussian window (σ 1.5), columns wrapping and
/// rows clamped at the borders, averaged over pixels and channels.
pub fn ssim_naive(a: &ErpImage, b: &ErpImage) -> f64 {
    let (h, w) = (a.height() as isize, a.width() as isize);
    let mut g = [[0.0; 11]; 11];
    let mut total = 0.0;
    for (i, row) in g.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let (di, dj) = (i as f64 - 5.0, j as f64 - 5.0);
            *v = (-(di * di + dj * dj) / (2.0 * 1.5 * 1.5)).exp();
            total += *v;
        }
    }
    let (c1, c2) = (1e-4, 9e-4);
    let mut acc = 0.0;
    for c in 0..a.channels {
        for y in 0..h {
            for x in 0..w {
                let (mut ma, mut mb, mut aa, mut bb, mut ab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for i in 0..11 {
                    for j in 0..11 {
                        let yy = (y + i as isize - 5).clamp(0, h - 1) as usize;
                        let xx = (x + j as isize - 5).rem_euclid(w) as usize;
                        let k = g[i][j] / total;
                        let (va, vb) = (a.at(c, yy, xx), b.at(c, yy, xx));
                        ma += k * va;
                        mb += k * vb;
                        aa += k * va * va;
                        bb += k * vb * vb;
                        ab += k * va * vb;
                    }
                }
                let (sa, sb, sab) = (aa - ma * ma, bb - mb * mb, ab - ma * mb);
                acc += ((2.0 * ma * mb + c1) * (2.0 * sab + c2)) / ((ma * ma + mb * mb + c1) * (sa + sb + c2));
            }
        }
    }
    acc / (a.channels as f64 * (h * w) as f64)
}

/// `(nrmse, nmae)` normalized by the ground truth's value range.
pub fn errors_naive(pred: &ErpImage, gt: &ErpImage) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::MAX, f64::MIN);
    for &v in &gt.data {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let range = if hi > lo { hi - lo } else { 1.0 };
    let (mut se, mut ae) = (0.0, 0.0);
    for i in 0..gt.data.len() {
        let d = pred.data[i] - gt.data[i];
        se += d * d;
        ae += d.abs();
    }
    let n = gt.data.len() as f64;
    ((se / n).sqrt() / range, ae / n / range)
}

/// 3×3 matrix product.
pub fn matmul3(a: [[f64; 3]; 3], b: [[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut m = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                m[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    m
}

/// Right-handed rotations about `y` and `x`.
pub fn ry(deg: f64) -> [[f64; 3]; 3] {
    let t = deg.to_radians();
    [[t.cos(), 0.0, t.sin()], [0.0, 1.0, 0.0], [-t.sin(), 0.0, t.cos()]]
}

pub fn rx(deg: f64) -> [[f64; 3]; 3] {
    let t = deg.to_radians();
    [[1.0, 0.0, 0.0], [0.0, t.cos(), -t.sin()], [0.0, t.sin(), t.cos()]]
}
