//! Bilinear resampling shared by the image pipeline and the gradient graph.
//!
//! Coordinates are continuous pixel positions where integer `u` addresses the
//! centre of column `u`. Rows always clamp; columns either wrap (periodic
//! longitude) or clamp.

use std::rc::Rc;

use rayon::prelude::*;

use crate::error::{shape_err, Result, TensorError};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HorizontalWrap {
    #[default]
    Circular,
    Clamp,
}

/// Four taps and the fractional offsets of one bilinear sample.
#[derive(Debug, Clone, Copy)]
struct Taps {
    x0: usize,
    x1: usize,
    y0: usize,
    y1: usize,
    fx: f64,
    fy: f64,
}

#[inline]
fn taps(u: f64, v: f64, h: usize, w: usize, wrap: HorizontalWrap) -> Taps {
    let xf = u.floor();
    let yf = v.floor();
    let fx = u - xf;
    let fy = v - yf;
    let (xi, yi) = (xf as i64, yf as i64);
    let (x0, x1) = match wrap {
        HorizontalWrap::Circular => (
            xi.rem_euclid(w as i64) as usize,
            (xi + 1).rem_euclid(w as i64) as usize,
        ),
        HorizontalWrap::Clamp => (
            xi.clamp(0, w as i64 - 1) as usize,
            (xi + 1).clamp(0, w as i64 - 1) as usize,
        ),
    };
    let y0 = yi.clamp(0, h as i64 - 1) as usize;
    let y1 = (yi + 1).clamp(0, h as i64 - 1) as usize;
    Taps { x0, x1, y0, y1, fx, fy }
}

/// Samples every channel of `img` (`C×H×W`, row-major) at each `(u[i], v[i])`.
/// The result is `C×len(u)`.
pub fn bilinear_kernel(
    img: &[f64],
    channels: usize,
    h: usize,
    w: usize,
    u: &[f64],
    v: &[f64],
    wrap: HorizontalWrap,
) -> Result<Vec<f64>> {
    assert_eq!(img.len(), channels * h * w);
    assert_eq!(u.len(), v.len());
    if let Some(i) = u.iter().zip(v).position(|(a, b)| !a.is_finite() || !b.is_finite()) {
        return Err(TensorError::NonFiniteCoord(i));
    }
    let npix = u.len();
    let mut out = vec![0.0; channels * npix];
    out.par_chunks_mut(npix).enumerate().for_each(|(c, dst)| {
        let plane = &img[c * h * w..(c + 1) * h * w];
        for (i, d) in dst.iter_mut().enumerate() {
            let t = taps(u[i], v[i], h, w, wrap);
            let top = plane[t.y0 * w + t.x0] * (1.0 - t.fx) + plane[t.y0 * w + t.x1] * t.fx;
            let bot = plane[t.y1 * w + t.x0] * (1.0 - t.fx) + plane[t.y1 * w + t.x1] * t.fx;
            *d = top * (1.0 - t.fy) + bot * t.fy;
        }
    });
    Ok(out)
}

/// Differentiable bilinear sampling: `img: C×H×W`, `coords: 2×H'×W'` holding
/// `(u, v)` planes. Gradients flow to both the image and the coordinates.
pub fn grid_sample(img: &Tensor, coords: &Tensor, wrap: HorizontalWrap) -> Result<Tensor> {
    let &[c, h, w] = img.shape() else {
        return shape_err("grid_sample", format!("image {:?}", img.shape()));
    };
    let cs = coords.shape().to_vec();
    if cs.len() != 3 || cs[0] != 2 {
        return shape_err("grid_sample", format!("coords {cs:?}, expected 2×H×W"));
    }
    let npix = cs[1] * cs[2];
    let cv = coords.to_vec();
    let (u, v) = cv.split_at(npix);
    let (u, v) = (u.to_vec(), v.to_vec());
    let iv = img.to_vec();
    let out = bilinear_kernel(&iv, c, h, w, &u, &v, wrap)?;
    Ok(Tensor::from_op(
        out,
        vec![c, cs[1], cs[2]],
        vec![img.clone(), coords.clone()],
        move |g, needs| {
            let gimg = needs[0].then(|| {
                let mut acc = vec![0.0; c * h * w];
                for ci in 0..c {
                    let plane = &mut acc[ci * h * w..(ci + 1) * h * w];
                    let gp = &g[ci * npix..(ci + 1) * npix];
                    for i in 0..npix {
                        let t = taps(u[i], v[i], h, w, wrap);
                        let gi = gp[i];
                        plane[t.y0 * w + t.x0] += gi * (1.0 - t.fx) * (1.0 - t.fy);
                        plane[t.y0 * w + t.x1] += gi * t.fx * (1.0 - t.fy);
                        plane[t.y1 * w + t.x0] += gi * (1.0 - t.fx) * t.fy;
                        plane[t.y1 * w + t.x1] += gi * t.fx * t.fy;
                    }
                }
                acc
            });
            let gcoord = needs[1].then(|| {
                let mut acc = vec![0.0; 2 * npix];
                let (gu, gv) = acc.split_at_mut(npix);
                for i in 0..npix {
                    let t = taps(u[i], v[i], h, w, wrap);
                    // A clamped axis is flat: both taps read the same pixel.
                    let x_live = t.x0 != t.x1 || wrap == HorizontalWrap::Circular;
                    let y_live = t.y0 != t.y1;
                    for ci in 0..c {
                        let p = &iv[ci * h * w..(ci + 1) * h * w];
                        let (i00, i01) = (p[t.y0 * w + t.x0], p[t.y0 * w + t.x1]);
                        let (i10, i11) = (p[t.y1 * w + t.x0], p[t.y1 * w + t.x1]);
                        let gi = g[ci * npix + i];
                        if x_live {
                            gu[i] += gi * ((i01 - i00) * (1.0 - t.fy) + (i11 - i10) * t.fy);
                        }
                        if y_live {
                            let top = i00 * (1.0 - t.fx) + i01 * t.fx;
                            let bot = i10 * (1.0 - t.fx) + i11 * t.fx;
                            gv[i] += gi * (bot - top);
                        }
                    }
                }
                acc
            });
            vec![gimg, gcoord]
        },
    ))
}

/// A fixed linear resampling: output element `i` is `Σ_j weights[i][j]·x[taps[i][j]]`.
#[derive(Debug, Clone)]
pub struct InterpTable {
    pub input_len: usize,
    pub taps: Vec<[usize; 4]>,
    pub weights: Vec<[f64; 4]>,
}

impl InterpTable {
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.input_len);
        self.taps
            .iter()
            .zip(&self.weights)
            .map(|(t, w)| {
                let mut acc = 0.0;
                for j in 0..4 {
                    acc += w[j] * x[t[j]];
                }
                acc
            })
            .collect()
    }
}

impl Tensor {
    /// Applies a precomputed [`InterpTable`] and reshapes to `shape`.
    pub fn interp(&self, table: Rc<InterpTable>, shape: &[usize]) -> Result<Tensor> {
        if self.numel() != table.input_len || table.taps.len() != shape.iter().product::<usize>() {
            return shape_err(
                "interp",
                format!("input {:?} / output {:?} vs table", self.shape(), shape),
            );
        }
        let out = table.apply(&self.data());
        Ok(Tensor::from_op(out, shape.to_vec(), vec![self.clone()], move |g, _| {
            let mut acc = vec![0.0; table.input_len];
            for (i, (t, w)) in table.taps.iter().zip(&table.weights).enumerate() {
                for j in 0..4 {
                    acc[t[j]] += w[j] * g[i];
                }
            }
            vec![Some(acc)]
        }))
    }
}
