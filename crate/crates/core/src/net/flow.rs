//! The operator interface the network is written against.
//!
//! The same wiring runs on two backends: [`ShapeFlow`] propagates shapes only
//! (so the full-size model can be checked without allocating it) and
//! [`TensorFlow`] evaluates real tensors with gradients.

use std::cell::RefCell;
use std::collections::{BTreeMap, HashMap};
use std::rc::Rc;

use panorect_tensor::conv::{self, conv_out_size, Conv2dOpts};
use panorect_tensor::nn::{self, AttentionWeights, BatchNormState};
use panorect_tensor::{InterpTable, Tensor};

use crate::error::{Error, Result};
use crate::geometry::ErpGrid;
use crate::resample::cube_to_erp_table;
use crate::warp;

/// Parameter initialization rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// `U(−1/√fan_in, 1/√fan_in)`.
    FanIn(usize),
    Normal(f64),
    Zeros,
    Ones,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Unary {
    Relu,
    Gelu,
    Elu,
    Sigmoid,
    /// `x·scale + shift`.
    Affine(f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Binary {
    Add,
    Sub,
    Mul,
}

pub trait Flow {
    type V: Clone;

    fn dims(&self, v: &Self::V) -> Vec<usize>;
    fn param(&mut self, name: &str, shape: &[usize], init: Init) -> Result<Self::V>;
    fn zeros(&mut self, shape: &[usize]) -> Self::V;
    fn conv(&mut self, x: &Self::V, w: &Self::V, b: Option<&Self::V>, opts: Conv2dOpts) -> Result<Self::V>;
    fn linear(&mut self, x: &Self::V, w: &Self::V, b: Option<&Self::V>) -> Result<Self::V>;
    fn layer_norm(&mut self, x: &Self::V, axis: usize, gamma: &Self::V, beta: &Self::V) -> Result<Self::V>;
    fn batch_norm(&mut self, name: &str, x: &Self::V, gamma: &Self::V, beta: &Self::V) -> Result<Self::V>;
    /// `w` holds `[wq, bq, wk, bk, wv, bv, wo, bo]`.
    fn attention(&mut self, x: &Self::V, heads: usize, w: &[Self::V; 8]) -> Result<Self::V>;
    fn unary(&mut self, x: &Self::V, op: Unary) -> Self::V;
    fn binary(&mut self, a: &Self::V, b: &Self::V, op: Binary) -> Result<Self::V>;
    fn pixel_shuffle(&mut self, x: &Self::V, s: usize) -> Result<Self::V>;
    fn pixel_unshuffle(&mut self, x: &Self::V, s: usize) -> Result<Self::V>;
    fn upsample(&mut self, x: &Self::V, s: usize) -> Result<Self::V>;
    fn concat(&mut self, xs: &[Self::V], axis: usize) -> Result<Self::V>;
    fn avg_pool(&mut self, x: &Self::V) -> Result<Self::V>;
    fn reshape(&mut self, x: &Self::V, shape: &[usize]) -> Result<Self::V>;
    fn transpose(&mut self, x: &Self::V) -> Result<Self::V>;
    /// Horizontal-wrap, vertical-replicate 3×3 mean filter.
    fn box_blur(&mut self, x: &Self::V) -> Result<Self::V>;
    /// `6×C×S×S` faces → `N×(p·p·C)` tokens, each patch flattened row, column,
    /// channel.
    fn patchify(&mut self, cube: &Self::V, patch: usize) -> Result<Self::V>;
    /// Inverse of [`Flow::patchify`].
    fn unpatchify(&mut self, tokens: &Self::V, patch: usize, face: usize) -> Result<Self::V>;
    /// `6×C×S×S` → `C×H×W` through the sphere.
    fn cub2erp(&mut self, cube: &Self::V, g: ErpGrid) -> Result<Self::V>;
    /// Samples `img` at the (renormalized) direction stored in each `lut` pixel.
    fn warp_lut(&mut self, img: &Self::V, lut: &Self::V) -> Result<Self::V>;

    fn check(&mut self, v: &Self::V, expect: &[usize], label: &str) -> Result<()> {
        let got = self.dims(v);
        if got != expect {
            return Err(Error::Dimension(format!("{label}: got {got:?}, expected {expect:?}")));
        }
        Ok(())
    }
}

/// One parameter as requested by the wiring.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

/// Shape-only backend. Records every parameter, batch-norm site and checked
/// shape in the order the wiring touches them.
#[derive(Debug, Default)]
pub struct ShapeFlow {
    pub params: Vec<ParamSpec>,
    pub batch_norms: Vec<(String, usize)>,
    pub trace: Vec<(String, Vec<usize>)>,
    /// Output shape of every convolution, linear map and rearrangement.
    pub ops: Vec<(&'static str, Vec<usize>)>,
}

impl ShapeFlow {
    fn logged(&mut self, op: &'static str, out: Vec<usize>) -> Vec<usize> {
        self.ops.push((op, out.clone()));
        out
    }
}

fn shape_error<T>(op: &str, detail: String) -> Result<T> {
    Err(Error::Dimension(format!("{op}: {detail}")))
}

fn broadcast(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let n = a.len().max(b.len());
    let at = |s: &[usize], i: usize| if i + s.len() >= n { s[i + s.len() - n] } else { 1 };
    (0..n)
        .map(|i| match (at(a, i), at(b, i)) {
            (x, y) if x == y => Some(x),
            (1, y) => Some(y),
            (x, 1) => Some(x),
            _ => None,
        })
        .collect()
}

impl Flow for ShapeFlow {
    type V = Vec<usize>;

    fn dims(&self, v: &Vec<usize>) -> Vec<usize> {
        v.clone()
    }

    fn param(&mut self, name: &str, shape: &[usize], init: Init) -> Result<Vec<usize>> {
        if self.params.iter().any(|p| p.name == name) {
            return shape_error("param", format!("duplicate parameter {name}"));
        }
        self.params.push(ParamSpec { name: name.to_string(), shape: shape.to_vec(), init });
        Ok(shape.to_vec())
    }

    fn zeros(&mut self, shape: &[usize]) -> Vec<usize> {
        shape.to_vec()
    }

    fn conv(&mut self, x: &Vec<usize>, w: &Vec<usize>, b: Option<&Vec<usize>>, o: Conv2dOpts) -> Result<Vec<usize>> {
        let (&[cin, h, wd], &[cout, cg, kh, kw]) = (x.as_slice(), w.as_slice()) else {
            return shape_error("conv2d", format!("input {x:?}, weight {w:?}"));
        };
        if o.groups == 0 || cin != cg * o.groups || cout % o.groups != 0 || b.is_some_and(|b| b != &[cout]) {
            return shape_error("conv2d", format!("input {x:?}, weight {w:?}, groups {}", o.groups));
        }
        match (conv_out_size(h, kh, o.stride, o.padding), conv_out_size(wd, kw, o.stride, o.padding)) {
            (Some(oh), Some(ow)) => Ok(self.logged("conv", vec![cout, oh, ow])),
            _ => shape_error("conv2d", format!("kernel {kh}×{kw} larger than padded {h}×{wd}")),
        }
    }

    fn linear(&mut self, x: &Vec<usize>, w: &Vec<usize>, b: Option<&Vec<usize>>) -> Result<Vec<usize>> {
        match (x.as_slice(), w.as_slice()) {
            (&[n, din], &[dout, wi]) if din == wi && b.is_none_or(|b| b == &[dout]) => Ok(self.logged("linear", vec![n, dout])),
            _ => shape_error("linear", format!("input {x:?}, weight {w:?}")),
        }
    }

    fn layer_norm(&mut self, x: &Vec<usize>, axis: usize, g: &Vec<usize>, b: &Vec<usize>) -> Result<Vec<usize>> {
        if axis >= x.len() || broadcast(x, g).as_ref() != Some(x) || broadcast(x, b).as_ref() != Some(x) {
            return shape_error("layer_norm", format!("input {x:?}, axis {axis}, affine {g:?}"));
        }
        Ok(x.clone())
    }

    fn batch_norm(&mut self, name: &str, x: &Vec<usize>, g: &Vec<usize>, b: &Vec<usize>) -> Result<Vec<usize>> {
        match x.as_slice() {
            &[c, _, _] if g == &[c, 1, 1] && b == &[c, 1, 1] => {
                self.batch_norms.push((name.to_string(), c));
                Ok(x.clone())
            }
            _ => shape_error("batch_norm", format!("input {x:?}, affine {g:?}")),
        }
    }

    fn attention(&mut self, x: &Vec<usize>, heads: usize, w: &[Vec<usize>; 8]) -> Result<Vec<usize>> {
        let &[_, d] = x.as_slice() else {
            return shape_error("attention", format!("tokens {x:?}"));
        };
        let ok = heads > 0
            && d % heads == 0
            && w.chunks(2).all(|p| p[0] == [d, d] && p[1] == [d]);
        if !ok {
            return shape_error("attention", format!("tokens {x:?}, {heads} heads"));
        }
        Ok(x.clone())
    }

    fn unary(&mut self, x: &Vec<usize>, _: Unary) -> Vec<usize> {
        x.clone()
    }

    fn binary(&mut self, a: &Vec<usize>, b: &Vec<usize>, _: Binary) -> Result<Vec<usize>> {
        broadcast(a, b).map_or_else(|| shape_error("broadcast", format!("{a:?} vs {b:?}")), Ok)
    }

    fn pixel_shuffle(&mut self, x: &Vec<usize>, s: usize) -> Result<Vec<usize>> {
        match x.as_slice() {
            &[c, h, w] if s > 0 && c % (s * s) == 0 => Ok(self.logged("pixel_shuffle", vec![c / (s * s), h * s, w * s])),
            _ => shape_error("pixel_shuffle", format!("{x:?} by {s}")),
        }
    }

    fn pixel_unshuffle(&mut self, x: &Vec<usize>, s: usize) -> Result<Vec<usize>> {
        match x.as_slice() {
            &[c, h, w] if s > 0 && h % s == 0 && w % s == 0 => Ok(self.logged("pixel_unshuffle", vec![c * s * s, h / s, w / s])),
            _ => shape_error("pixel_unshuffle", format!("{x:?} by {s}")),
        }
    }

    fn upsample(&mut self, x: &Vec<usize>, s: usize) -> Result<Vec<usize>> {
        match x.as_slice() {
            &[c, h, w] => Ok(self.logged("upsample", vec![c, h * s, w * s])),
            _ => shape_error("nearest_upsample", format!("{x:?}")),
        }
    }

    fn concat(&mut self, xs: &[Vec<usize>], axis: usize) -> Result<Vec<usize>> {
        let first = xs.first().ok_or_else(|| Error::Dimension("concat of nothing".into()))?;
        let mut out = first.clone();
        for x in &xs[1..] {
            if x.len() != first.len() || axis >= x.len() || (0..x.len()).any(|i| i != axis && x[i] != first[i]) {
                return shape_error("concat", format!("{first:?} vs {x:?} on axis {axis}"));
            }
            out[axis] += x[axis];
        }
        Ok(self.logged("concat", out))
    }

    fn avg_pool(&mut self, x: &Vec<usize>) -> Result<Vec<usize>> {
        match x.as_slice() {
            &[c, _, _] => Ok(vec![c, 1, 1]),
            _ => shape_error("global_avg_pool", format!("{x:?}")),
        }
    }

    fn reshape(&mut self, x: &Vec<usize>, shape: &[usize]) -> Result<Vec<usize>> {
        if x.iter().product::<usize>() != shape.iter().product::<usize>() {
            return shape_error("reshape", format!("{x:?} -> {shape:?}"));
        }
        Ok(self.logged("reshape", shape.to_vec()))
    }

    fn transpose(&mut self, x: &Vec<usize>) -> Result<Vec<usize>> {
        match x.as_slice() {
            &[a, b] => Ok(vec![b, a]),
            _ => shape_error("transpose", format!("{x:?}")),
        }
    }

    fn box_blur(&mut self, x: &Vec<usize>) -> Result<Vec<usize>> {
        match x.as_slice() {
            &[_, h, w] if h >= 1 && w >= 1 => Ok(x.clone()),
            _ => shape_error("box_blur", format!("{x:?}")),
        }
    }

    fn patchify(&mut self, cube: &Vec<usize>, p: usize) -> Result<Vec<usize>> {
        match cube.as_slice() {
            &[6, c, s, s2] if s == s2 && p > 0 && s % p == 0 => Ok(vec![6 * (s / p) * (s / p), p * p * c]),
            _ => shape_error("patchify", format!("{cube:?} by {p}")),
        }
    }

    fn unpatchify(&mut self, t: &Vec<usize>, p: usize, face: usize) -> Result<Vec<usize>> {
        match t.as_slice() {
            &[n, d] if p > 0 && face % p == 0 && n == 6 * (face / p).pow(2) && d % (p * p) == 0 => {
                Ok(self.logged("unpatchify", vec![6, d / (p * p), face, face]))
            }
            _ => shape_error("unpatchify", format!("{t:?} into faces of {face} by {p}")),
        }
    }

    fn cub2erp(&mut self, cube: &Vec<usize>, g: ErpGrid) -> Result<Vec<usize>> {
        match cube.as_slice() {
            &[6, c, s, s2] if s == s2 => Ok(self.logged("cub2erp", vec![c, g.height, g.width])),
            _ => shape_error("cub2erp", format!("{cube:?}")),
        }
    }

    fn warp_lut(&mut self, img: &Vec<usize>, lut: &Vec<usize>) -> Result<Vec<usize>> {
        match (img.as_slice(), lut.as_slice()) {
            (&[c, h, w], &[3, lh, lw]) if h == lh && w == lw => Ok(vec![c, h, w]),
            _ => shape_error("warp_lut", format!("image {img:?}, lut {lut:?}")),
        }
    }

    fn check(&mut self, v: &Vec<usize>, expect: &[usize], label: &str) -> Result<()> {
        if v != expect {
            return Err(Error::Dimension(format!("{label}: got {v:?}, expected {expect:?}")));
        }
        self.trace.push((label.to_string(), v.clone()));
        Ok(())
    }
}

/// Index map of [`Flow::patchify`] for `6×c×s×s` faces and patch `p`.
pub fn patchify_index(c: usize, s: usize, p: usize) -> Vec<usize> {
    let per = s / p;
    let d = p * p * c;
    let mut idx = vec![0; 6 * per * per * d];
    for f in 0..6 {
        for py in 0..per {
            for px in 0..per {
                let k = (f * per + py) * per + px;
                for yi in 0..p {
                    for xi in 0..p {
                        for ch in 0..c {
                            let j = (yi * p + xi) * c + ch;
                            idx[k * d + j] = ((f * c + ch) * s + py * p + yi) * s + px * p + xi;
                        }
                    }
                }
            }
        }
    }
    idx
}

/// Inverse permutation of [`patchify_index`].
pub fn unpatchify_index(c: usize, s: usize, p: usize) -> Vec<usize> {
    let fwd = patchify_index(c, s, p);
    let mut inv = vec![0; fwd.len()];
    for (k, &i) in fwd.iter().enumerate() {
        inv[i] = k;
    }
    inv
}

/// Named parameter tensors in registration order.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    pub names: Vec<String>,
    pub tensors: HashMap<String, Tensor>,
}

impl ParamStore {
    pub fn insert(&mut self, name: &str, t: Tensor) {
        if self.tensors.insert(name.to_string(), t).is_none() {
            self.names.push(name.to_string());
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn ordered(&self) -> Vec<Tensor> {
        self.names.iter().map(|n| self.tensors[n].clone()).collect()
    }

    pub fn count(&self) -> usize {
        self.tensors.values().map(Tensor::numel).sum()
    }
}

/// Precomputed index maps and resampling tables, shared across forwards.
#[derive(Debug, Default)]
pub struct Consts {
    indices: RefCell<HashMap<(bool, usize, usize, usize), Rc<Vec<usize>>>>,
    tables: RefCell<HashMap<(usize, usize, usize), Rc<InterpTable>>>,
}

impl Consts {
    fn index(&self, inverse: bool, c: usize, s: usize, p: usize) -> Rc<Vec<usize>> {
        self.indices
            .borrow_mut()
            .entry((inverse, c, s, p))
            .or_insert_with(|| Rc::new(if inverse { unpatchify_index(c, s, p) } else { patchify_index(c, s, p) }))
            .clone()
    }

    pub fn cube_table(&self, c: usize, s: usize, g: ErpGrid) -> Rc<InterpTable> {
        self.tables
            .borrow_mut()
            .entry((c, s, g.height))
            .or_insert_with(|| Rc::new(cube_to_erp_table(c, s, g)))
            .clone()
    }
}

/// Tensor backend over a parameter store.
pub struct TensorFlow<'a> {
    pub params: &'a ParamStore,
    pub bn: &'a mut BTreeMap<String, BatchNormState>,
    pub train: bool,
    pub consts: &'a Consts,
}

impl Flow for TensorFlow<'_> {
    type V = Tensor;

    fn dims(&self, v: &Tensor) -> Vec<usize> {
        v.shape().to_vec()
    }

    fn param(&mut self, name: &str, shape: &[usize], _: Init) -> Result<Tensor> {
        let t = self.params.get(name).ok_or_else(|| Error::Config(format!("missing parameter {name}")))?;
        if t.shape() != shape {
            return shape_error("param", format!("{name} stored as {:?}, wired as {shape:?}", t.shape()));
        }
        Ok(t.clone())
    }

    fn zeros(&mut self, shape: &[usize]) -> Tensor {
        Tensor::zeros(shape)
    }

    fn conv(&mut self, x: &Tensor, w: &Tensor, b: Option<&Tensor>, opts: Conv2dOpts) -> Result<Tensor> {
        Ok(conv::conv2d(x, w, b, opts)?)
    }

    fn linear(&mut self, x: &Tensor, w: &Tensor, b: Option<&Tensor>) -> Result<Tensor> {
        Ok(nn::linear(x, w, b)?)
    }

    fn layer_norm(&mut self, x: &Tensor, axis: usize, g: &Tensor, b: &Tensor) -> Result<Tensor> {
        Ok(nn::layer_norm(x, axis, g, b)?)
    }

    fn batch_norm(&mut self, name: &str, x: &Tensor, g: &Tensor, b: &Tensor) -> Result<Tensor> {
        let c = x.shape().first().copied().unwrap_or(0);
        let state = self.bn.entry(name.to_string()).or_insert_with(|| BatchNormState::new(c));
        Ok(nn::batch_norm(x, g, b, state, self.train)?)
    }

    fn attention(&mut self, x: &Tensor, heads: usize, w: &[Tensor; 8]) -> Result<Tensor> {
        let [wq, bq, wk, bk, wv, bv, wo, bo] = w.clone();
        let weights = AttentionWeights { wq, bq, wk, bk, wv, bv, wo, bo };
        Ok(nn::multi_head_attention(x, heads, &weights)?.0)
    }

    fn unary(&mut self, x: &Tensor, op: Unary) -> Tensor {
        match op {
            Unary::Relu => nn::relu(x),
            Unary::Gelu => nn::gelu(x),
            Unary::Elu => nn::elu(x),
            Unary::Sigmoid => nn::sigmoid(x),
            Unary::Affine(a, b) => x.mul_scalar(a).add_scalar(b),
        }
    }

    fn binary(&mut self, a: &Tensor, b: &Tensor, op: Binary) -> Result<Tensor> {
        Ok(match op {
            Binary::Add => a.add(b)?,
            Binary::Sub => a.sub(b)?,
            Binary::Mul => a.mul(b)?,
        })
    }

    fn pixel_shuffle(&mut self, x: &Tensor, s: usize) -> Result<Tensor> {
        Ok(conv::pixel_shuffle(x, s)?)
    }

    fn pixel_unshuffle(&mut self, x: &Tensor, s: usize) -> Result<Tensor> {
        Ok(conv::pixel_unshuffle(x, s)?)
    }

    fn upsample(&mut self, x: &Tensor, s: usize) -> Result<Tensor> {
        Ok(conv::nearest_upsample(x, s)?)
    }

    fn concat(&mut self, xs: &[Tensor], axis: usize) -> Result<Tensor> {
        Ok(Tensor::concat(xs, axis)?)
    }

    fn avg_pool(&mut self, x: &Tensor) -> Result<Tensor> {
        Ok(conv::global_avg_pool(x)?)
    }

    fn reshape(&mut self, x: &Tensor, shape: &[usize]) -> Result<Tensor> {
        Ok(x.reshape(shape)?)
    }

    fn transpose(&mut self, x: &Tensor) -> Result<Tensor> {
        Ok(x.t()?)
    }

    fn box_blur(&mut self, x: &Tensor) -> Result<Tensor> {
        let c = x.shape()[0];
        let padded = conv::pad_wrap_replicate(x, 1)?;
        let w = Tensor::full(&[c, 1, 3, 3], 1.0 / 9.0);
        let opts = Conv2dOpts { groups: c, ..Default::default() };
        Ok(conv::conv2d(&padded, &w, None, opts)?)
    }

    fn patchify(&mut self, cube: &Tensor, p: usize) -> Result<Tensor> {
        let shape = ShapeFlow::default().patchify(&cube.shape().to_vec(), p)?;
        let [_, c, s, _] = cube.shape().try_into().expect("checked rank");
        Ok(cube.gather(self.consts.index(false, c, s, p), &shape)?)
    }

    fn unpatchify(&mut self, tokens: &Tensor, p: usize, face: usize) -> Result<Tensor> {
        let shape = ShapeFlow::default().unpatchify(&tokens.shape().to_vec(), p, face)?;
        Ok(tokens.gather(self.consts.index(true, shape[1], face, p), &shape)?)
    }

    fn cub2erp(&mut self, cube: &Tensor, g: ErpGrid) -> Result<Tensor> {
        let shape = ShapeFlow::default().cub2erp(&cube.shape().to_vec(), g)?;
        let table = self.consts.cube_table(shape[0], cube.shape()[2], g);
        Ok(cube.interp(table, &shape)?)
    }

    fn warp_lut(&mut self, img: &Tensor, lut: &Tensor) -> Result<Tensor> {
        warp::warp_by_lut(img, lut)
    }
}
