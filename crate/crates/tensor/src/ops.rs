//! Elementwise arithmetic, reductions and shape manipulation.

use std::rc::Rc;

use crate::error::{invalid, shape_err, Result};
use crate::tensor::{numel, Tensor};

fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let n = a.len().max(b.len());
    let mut out = vec![0; n];
    for i in 0..n {
        let da = if i + a.len() >= n { a[i + a.len() - n] } else { 1 };
        let db = if i + b.len() >= n { b[i + b.len() - n] } else { 1 };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return None,
        };
    }
    Some(out)
}

/// How an output element of a broadcast maps to its source element.
enum SourceMap {
    Same,
    /// Source varies only along leading dimensions: `k / inner`.
    Div(usize),
    /// Source varies only along trailing dimensions: `k % period`.
    Mod(usize),
    Table(Vec<usize>),
}

impl SourceMap {
    fn new(src: &[usize], out_shape: &[usize]) -> SourceMap {
        let n = out_shape.len();
        let mut padded = vec![1; n - src.len()];
        padded.extend_from_slice(src);
        if padded == out_shape {
            return SourceMap::Same;
        }
        // Leading run of matching dims followed only by ones.
        let lead = padded.iter().zip(out_shape).take_while(|(s, o)| s == o).count();
        if padded[lead..].iter().all(|&d| d == 1) {
            return SourceMap::Div(numel(&out_shape[lead..]));
        }
        // Leading ones followed only by matching dims.
        let ones = padded.iter().take_while(|&&d| d == 1).count();
        if padded[ones..] == out_shape[ones..] {
            return SourceMap::Mod(numel(&out_shape[ones..]));
        }
        SourceMap::Table(broadcast_index(src, out_shape))
    }

    #[inline]
    fn at(&self, k: usize) -> usize {
        match self {
            SourceMap::Same => k,
            SourceMap::Div(inner) => k / inner,
            SourceMap::Mod(period) => k % period,
            SourceMap::Table(t) => t[k],
        }
    }
}

/// For every element of `out_shape`, the flat index of the broadcast source.
fn broadcast_index(src: &[usize], out_shape: &[usize]) -> Vec<usize> {
    let n = out_shape.len();
    let off = n - src.len();
    let src_strides = strides(src);
    let mut eff = vec![0; n];
    for i in 0..src.len() {
        if src[i] != 1 {
            eff[i + off] = src_strides[i];
        }
    }
    let total = numel(out_shape);
    let mut idx = Vec::with_capacity(total);
    let mut counter = vec![0usize; n];
    let mut cur = 0usize;
    for _ in 0..total {
        idx.push(cur);
        for d in (0..n).rev() {
            counter[d] += 1;
            cur += eff[d];
            if counter[d] < out_shape[d] {
                break;
            }
            cur -= eff[d] * counter[d];
            counter[d] = 0;
        }
    }
    idx
}

type BinFn = fn(f64, f64) -> f64;

/// Binary op with numpy-style broadcasting. `da`/`db` return the partial
/// derivatives at `(a, b)`.
fn binary(
    a: &Tensor,
    b: &Tensor,
    op: &'static str,
    f: BinFn,
    da: BinFn,
    db: BinFn,
) -> Result<Tensor> {
    let keep = Tensor::records(&[a, b]);
    if a.shape() == b.shape() {
        let out: Vec<f64> = a.data().iter().zip(b.data().iter()).map(|(&x, &y)| f(x, y)).collect();
        let (av, bv) = (a.saved(keep), b.saved(keep));
        return Ok(Tensor::from_op(
            out,
            a.shape().to_vec(),
            vec![a.clone(), b.clone()],
            move |g, needs| {
                let ga = needs[0].then(|| {
                    g.iter()
                        .zip(av.iter().zip(&bv))
                        .map(|(g, (&x, &y))| g * da(x, y))
                        .collect()
                });
                let gb = needs[1].then(|| {
                    g.iter()
                        .zip(av.iter().zip(&bv))
                        .map(|(g, (&x, &y))| g * db(x, y))
                        .collect()
                });
                vec![ga, gb]
            },
        ));
    }
    let Some(out_shape) = broadcast_shape(a.shape(), b.shape()) else {
        return shape_err(op, format!("cannot broadcast {:?} with {:?}", a.shape(), b.shape()));
    };
    let ia = SourceMap::new(a.shape(), &out_shape);
    let ib = SourceMap::new(b.shape(), &out_shape);
    let out: Vec<f64> = {
        let (av, bv) = (a.data(), b.data());
        (0..numel(&out_shape)).map(|k| f(av[ia.at(k)], bv[ib.at(k)])).collect()
    };
    let (na, nb) = (a.numel(), b.numel());
    let (av, bv) = (a.saved(keep), b.saved(keep));
    Ok(Tensor::from_op(
        out,
        out_shape,
        vec![a.clone(), b.clone()],
        move |g, needs| {
            let ga = needs[0].then(|| {
                let mut acc = vec![0.0; na];
                for (k, gk) in g.iter().enumerate() {
                    let (i, j) = (ia.at(k), ib.at(k));
                    acc[i] += gk * da(av[i], bv[j]);
                }
                acc
            });
            let gb = needs[1].then(|| {
                let mut acc = vec![0.0; nb];
                for (k, gk) in g.iter().enumerate() {
                    let (i, j) = (ia.at(k), ib.at(k));
                    acc[j] += gk * db(av[i], bv[j]);
                }
                acc
            });
            vec![ga, gb]
        },
    ))
}

/// Elementwise map with derivative `df(x, y)` expressed through input and output.
fn unary(x: &Tensor, f: impl Fn(f64) -> f64, df: fn(f64, f64) -> f64) -> Tensor {
    let keep = Tensor::records(&[x]);
    let out: Vec<f64> = x.data().iter().map(|&v| f(v)).collect();
    let (xv, yv) = (x.saved(keep), if keep { out.clone() } else { Vec::new() });
    Tensor::from_op(out, x.shape().to_vec(), vec![x.clone()], move |g, _| {
        vec![Some(
            g.iter()
                .zip(xv.iter().zip(&yv))
                .map(|(g, (&x, &y))| g * df(x, y))
                .collect(),
        )]
    })
}

impl Tensor {
    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        binary(self, other, "add", |a, b| a + b, |_, _| 1.0, |_, _| 1.0)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        binary(self, other, "sub", |a, b| a - b, |_, _| 1.0, |_, _| -1.0)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        binary(self, other, "mul", |a, b| a * b, |_, b| b, |a, _| a)
    }

    pub fn div(&self, other: &Tensor) -> Result<Tensor> {
        binary(
            self,
            other,
            "div",
            |a, b| a / b,
            |_, b| 1.0 / b,
            |a, b| -a / (b * b),
        )
    }

    /// Four-quadrant arctangent of `self / other` (self is the y argument).
    pub fn atan2(&self, other: &Tensor) -> Result<Tensor> {
        binary(
            self,
            other,
            "atan2",
            f64::atan2,
            |y, x| atan2_grad(x, y),
            |y, x| atan2_grad(-y, x),
        )
    }

    pub fn add_scalar(&self, c: f64) -> Tensor {
        unary(self, move |x| x + c, |_, _| 1.0)
    }

    pub fn mul_scalar(&self, c: f64) -> Tensor {
        let out = self.data().iter().map(|x| x * c).collect();
        Tensor::from_op(out, self.shape().to_vec(), vec![self.clone()], move |g, _| {
            vec![Some(g.iter().map(|g| g * c).collect())]
        })
    }

    pub fn neg(&self) -> Tensor {
        self.mul_scalar(-1.0)
    }

    pub fn square(&self) -> Tensor {
        unary(self, |x| x * x, |x, _| 2.0 * x)
    }

    pub fn sqrt(&self) -> Tensor {
        // Zero gradient at the origin rather than an infinity.
        unary(self, f64::sqrt, |_, y| if y > 0.0 { 0.5 / y } else { 0.0 })
    }

    pub fn exp(&self) -> Tensor {
        unary(self, f64::exp, |_, y| y)
    }

    pub fn ln(&self) -> Tensor {
        unary(self, f64::ln, |x, _| 1.0 / x)
    }

    pub fn log10(&self) -> Tensor {
        unary(self, f64::log10, |x, _| 1.0 / (x * std::f64::consts::LN_10))
    }

    pub fn abs(&self) -> Tensor {
        // Subgradient 0 at the origin.
        unary(self, f64::abs, |x, _| {
            if x > 0.0 {
                1.0
            } else if x < 0.0 {
                -1.0
            } else {
                0.0
            }
        })
    }

    pub fn sin(&self) -> Tensor {
        unary(self, f64::sin, |x, _| x.cos())
    }

    pub fn cos(&self) -> Tensor {
        unary(self, f64::cos, |x, _| -x.sin())
    }

    pub fn recip(&self) -> Tensor {
        unary(self, |x| 1.0 / x, |_, y| -y * y)
    }

    // ---- reductions ----

    pub fn sum(&self) -> Tensor {
        let total: f64 = self.data().iter().sum();
        let n = self.numel();
        Tensor::from_op(vec![total], vec![1], vec![self.clone()], move |g, _| {
            vec![Some(vec![g[0]; n])]
        })
    }

    pub fn mean(&self) -> Tensor {
        let n = self.numel() as f64;
        self.sum().mul_scalar(1.0 / n)
    }

    /// Sums over `axes`, keeping them as size-1 dimensions.
    pub fn sum_axes(&self, axes: &[usize]) -> Result<Tensor> {
        let shape = self.shape().to_vec();
        for &a in axes {
            if a >= shape.len() {
                return invalid("sum_axes", format!("axis {a} for shape {shape:?}"));
            }
        }
        let mut out_shape = shape.clone();
        for &a in axes {
            out_shape[a] = 1;
        }
        let idx = broadcast_index(&out_shape, &shape);
        let mut out = vec![0.0; numel(&out_shape)];
        {
            let d = self.data();
            for (k, &i) in idx.iter().enumerate() {
                out[i] += d[k];
            }
        }
        Ok(Tensor::from_op(out, out_shape, vec![self.clone()], move |g, _| {
            vec![Some(idx.iter().map(|&i| g[i]).collect())]
        }))
    }

    pub fn mean_axes(&self, axes: &[usize]) -> Result<Tensor> {
        let count: usize = axes.iter().map(|&a| self.shape().get(a).copied().unwrap_or(1)).product();
        Ok(self.sum_axes(axes)?.mul_scalar(1.0 / count as f64))
    }

    /// Maximum along the last axis, as a constant (no gradient).
    pub fn max_last_axis_const(&self) -> Tensor {
        let shape = self.shape();
        let last = *shape.last().unwrap_or(&1);
        let d = self.data();
        let out: Vec<f64> = d
            .chunks(last.max(1))
            .map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .collect();
        let mut out_shape = shape.to_vec();
        if let Some(l) = out_shape.last_mut() {
            *l = 1;
        }
        Tensor::from_vec(out, &out_shape).expect("shape")
    }

    // ---- shape manipulation ----

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        if numel(shape) != self.numel() {
            return shape_err("reshape", format!("{:?} -> {:?}", self.shape(), shape));
        }
        Ok(Tensor::from_op(
            self.to_vec(),
            shape.to_vec(),
            vec![self.clone()],
            |g, _| vec![Some(g.to_vec())],
        ))
    }

    /// Output element `i` is input element `index[i]`. The backward pass
    /// scatter-adds, so indices may repeat.
    pub fn gather(&self, index: Rc<Vec<usize>>, shape: &[usize]) -> Result<Tensor> {
        if index.len() != numel(shape) {
            return shape_err("gather", format!("{} indices for {:?}", index.len(), shape));
        }
        let n = self.numel();
        if let Some(&bad) = index.iter().find(|&&i| i >= n) {
            return invalid("gather", format!("index {bad} out of range {n}"));
        }
        let out: Vec<f64> = {
            let d = self.data();
            index.iter().map(|&i| d[i]).collect()
        };
        Ok(Tensor::from_op(out, shape.to_vec(), vec![self.clone()], move |g, _| {
            let mut acc = vec![0.0; n];
            for (k, &i) in index.iter().enumerate() {
                acc[i] += g[k];
            }
            vec![Some(acc)]
        }))
    }

    pub fn permute(&self, axes: &[usize]) -> Result<Tensor> {
        let shape = self.shape();
        let mut seen = vec![false; shape.len()];
        if axes.len() != shape.len() || axes.iter().any(|&a| a >= shape.len() || std::mem::replace(&mut seen[a], true)) {
            return invalid("permute", format!("axes {axes:?} for shape {shape:?}"));
        }
        let out_shape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
        let in_strides = strides(shape);
        let permuted: Vec<usize> = axes.iter().map(|&a| in_strides[a]).collect();
        let total = self.numel();
        let mut index = Vec::with_capacity(total);
        let mut counter = vec![0usize; out_shape.len()];
        let mut cur = 0usize;
        for _ in 0..total {
            index.push(cur);
            for d in (0..out_shape.len()).rev() {
                counter[d] += 1;
                cur += permuted[d];
                if counter[d] < out_shape[d] {
                    break;
                }
                cur -= permuted[d] * counter[d];
                counter[d] = 0;
            }
        }
        self.gather(Rc::new(index), &out_shape)
    }

    /// Two-dimensional transpose.
    pub fn t(&self) -> Result<Tensor> {
        if self.ndim() != 2 {
            return shape_err("t", format!("expected 2-D, got {:?}", self.shape()));
        }
        self.permute(&[1, 0])
    }

    /// Slice `len` entries starting at `start` along `axis`.
    pub fn narrow(&self, axis: usize, start: usize, len: usize) -> Result<Tensor> {
        let shape = self.shape();
        if axis >= shape.len() || start + len > shape[axis] {
            return invalid("narrow", format!("axis {axis} [{start}, +{len}) of {shape:?}"));
        }
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let mut index = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            for a in start..start + len {
                let base = (o * shape[axis] + a) * inner;
                index.extend(base..base + inner);
            }
        }
        let mut out_shape = shape.to_vec();
        out_shape[axis] = len;
        self.gather(Rc::new(index), &out_shape)
    }

    /// Concatenates along `axis`; all other dimensions must agree.
    pub fn concat(parts: &[Tensor], axis: usize) -> Result<Tensor> {
        let Some(first) = parts.first() else {
            return invalid("concat", "no inputs");
        };
        let base = first.shape().to_vec();
        if axis >= base.len() {
            return invalid("concat", format!("axis {axis} for shape {base:?}"));
        }
        for p in parts {
            let s = p.shape();
            if s.len() != base.len()
                || s.iter().enumerate().any(|(i, &d)| i != axis && d != base[i])
            {
                return shape_err("concat", format!("{:?} vs {:?} on axis {axis}", base, s));
            }
        }
        let outer: usize = base[..axis].iter().product();
        let inner: usize = base[axis + 1..].iter().product();
        let sizes: Vec<usize> = parts.iter().map(|p| p.shape()[axis]).collect();
        let total_axis: usize = sizes.iter().sum();
        let mut out = Vec::with_capacity(outer * total_axis * inner);
        {
            let datas: Vec<_> = parts.iter().map(|p| p.data()).collect();
            for o in 0..outer {
                for (d, &sz) in datas.iter().zip(&sizes) {
                    out.extend_from_slice(&d[o * sz * inner..(o + 1) * sz * inner]);
                }
            }
        }
        let mut out_shape = base;
        out_shape[axis] = total_axis;
        Ok(Tensor::from_op(out, out_shape, parts.to_vec(), move |g, needs| {
            let mut grads: Vec<Option<Vec<f64>>> = sizes
                .iter()
                .zip(needs)
                .map(|(&sz, &n)| n.then(|| Vec::with_capacity(outer * sz * inner)))
                .collect();
            let mut pos = 0;
            for _ in 0..outer {
                for (gp, &sz) in grads.iter_mut().zip(&sizes) {
                    let len = sz * inner;
                    if let Some(v) = gp {
                        v.extend_from_slice(&g[pos..pos + len]);
                    }
                    pos += len;
                }
            }
            grads
        }))
    }

    // ---- linear algebra ----

    /// Matrix product of `M×K` and `K×N`.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (a, b) = (self.shape(), other.shape());
        if a.len() != 2 || b.len() != 2 || a[1] != b[0] {
            return shape_err("matmul", format!("{a:?} x {b:?}"));
        }
        let (m, k, n) = (a[0], a[1], b[1]);
        let out = matmul_raw(&self.data(), &other.data(), m, k, n);
        let keep = Tensor::records(&[self, other]);
        let (av, bv) = (self.saved(keep), other.saved(keep));
        Ok(Tensor::from_op(
            out,
            vec![m, n],
            vec![self.clone(), other.clone()],
            move |g, needs| {
                // dA = G·Bᵀ, dB = Aᵀ·G
                let ga = needs[0].then(|| {
                    let mut ga = vec![0.0; m * k];
                    for i in 0..m {
                        let grow = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            let brow = &bv[p * n..(p + 1) * n];
                            ga[i * k + p] = grow.iter().zip(brow).map(|(x, y)| x * y).sum();
                        }
                    }
                    ga
                });
                let gb = needs[1].then(|| {
                    let mut gb = vec![0.0; k * n];
                    for i in 0..m {
                        let grow = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            let aip = av[i * k + p];
                            let dst = &mut gb[p * n..(p + 1) * n];
                            dst.iter_mut().zip(grow).for_each(|(d, g)| *d += aip * g);
                        }
                    }
                    gb
                });
                vec![ga, gb]
            },
        ))
    }
}

/// Row-major `M×K · K×N` with a fixed accumulation order over `K`.
pub(crate) fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let dst = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            let brow = &b[p * n..(p + 1) * n];
            dst.iter_mut().zip(brow).for_each(|(d, y)| *d += aip * y);
        }
    }
    out
}


/// `num / (num² + other²)`, zero at the origin where the angle is undefined.
fn atan2_grad(num: f64, other: f64) -> f64 {
    let r2 = num * num + other * other;
    if r2 > 0.0 {
        num / r2
    } else {
        0.0
    }
}
