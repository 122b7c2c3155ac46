//! Activations, normalization layers and attention.

use crate::error::{invalid, shape_err, Result};
use crate::tensor::Tensor;

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

pub const NORM_EPS: f64 = 1e-5;

fn map(x: &Tensor, f: impl Fn(f64) -> f64, df: impl Fn(f64, f64) -> f64 + 'static) -> Tensor {
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

pub fn relu(x: &Tensor) -> Tensor {
    map(x, |v| v.max(0.0), |x, _| if x > 0.0 { 1.0 } else { 0.0 })
}

/// Exact (erf-based) GELU.
pub fn gelu(x: &Tensor) -> Tensor {
    map(
        x,
        |v| 0.5 * v * (1.0 + libm::erf(v / SQRT_2)),
        |x, _| 0.5 * (1.0 + libm::erf(x / SQRT_2)) + x * INV_SQRT_2PI * (-0.5 * x * x).exp(),
    )
}

/// ELU with α = 1.
pub fn elu(x: &Tensor) -> Tensor {
    map(
        x,
        |v| if v > 0.0 { v } else { v.exp_m1() },
        |x, y| if x > 0.0 { 1.0 } else { y + 1.0 },
    )
}

pub fn sigmoid(x: &Tensor) -> Tensor {
    map(x, sigmoid_f, |_, y| y * (1.0 - y))
}

pub fn sigmoid_f(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

pub fn tanh(x: &Tensor) -> Tensor {
    map(x, f64::tanh, |_, y| 1.0 - y * y)
}

/// Softmax over the last axis.
pub fn softmax(x: &Tensor) -> Result<Tensor> {
    let last = x.ndim().checked_sub(1).ok_or(crate::TensorError::Invalid {
        op: "softmax",
        detail: "scalar input".into(),
    })?;
    let shifted = x.sub(&x.max_last_axis_const())?;
    let e = shifted.exp();
    let s = e.sum_axes(&[last])?;
    e.div(&s)
}

/// Normalizes over `axis` then applies the per-feature affine `gamma`, `beta`
/// (each broadcastable against the input).
pub fn layer_norm(x: &Tensor, axis: usize, gamma: &Tensor, beta: &Tensor) -> Result<Tensor> {
    if axis >= x.ndim() {
        return invalid("layer_norm", format!("axis {axis} for {:?}", x.shape()));
    }
    let mean = x.mean_axes(&[axis])?;
    let centered = x.sub(&mean)?;
    let var = centered.square().mean_axes(&[axis])?;
    let std = var.add_scalar(NORM_EPS).sqrt();
    centered.div(&std)?.mul(gamma)?.add(beta)
}

/// Batch-norm state for `C×H×W` feature maps.
///
/// Statistics are taken per channel over the spatial positions of the tensor
/// passed in; the running estimates follow PyTorch's momentum convention.
#[derive(Debug, Clone)]
pub struct BatchNormState {
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
}

impl BatchNormState {
    pub fn new(channels: usize) -> Self {
        BatchNormState {
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            momentum: 0.1,
        }
    }
}

pub fn batch_norm(
    x: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    state: &mut BatchNormState,
    train: bool,
) -> Result<Tensor> {
    let &[c, h, w] = x.shape() else {
        return shape_err("batch_norm", format!("expected C×H×W, got {:?}", x.shape()));
    };
    if state.running_mean.len() != c || gamma.shape() != [c, 1, 1] || beta.shape() != [c, 1, 1] {
        return shape_err("batch_norm", format!("{c} channels vs parameters {:?}", gamma.shape()));
    }
    if train {
        let mean = x.mean_axes(&[1, 2])?;
        let centered = x.sub(&mean)?;
        let var = centered.square().mean_axes(&[1, 2])?;
        let n = (h * w) as f64;
        let m = state.momentum;
        {
            let (mv, vv) = (mean.data(), var.data());
            for ci in 0..c {
                state.running_mean[ci] = (1.0 - m) * state.running_mean[ci] + m * mv[ci];
                let unbiased = if n > 1.0 { vv[ci] * n / (n - 1.0) } else { vv[ci] };
                state.running_var[ci] = (1.0 - m) * state.running_var[ci] + m * unbiased;
            }
        }
        let std = var.add_scalar(NORM_EPS).sqrt();
        centered.div(&std)?.mul(gamma)?.add(beta)
    } else {
        let mean = Tensor::from_vec(state.running_mean.clone(), &[c, 1, 1])?;
        let inv: Vec<f64> = state
            .running_var
            .iter()
            .map(|v| 1.0 / (v + NORM_EPS).sqrt())
            .collect();
        let inv = Tensor::from_vec(inv, &[c, 1, 1])?;
        x.sub(&mean)?.mul(&inv)?.mul(gamma)?.add(beta)
    }
}

/// `x: N×D_in`, `w: D_out×D_in`, `b: D_out`.
pub fn linear(x: &Tensor, w: &Tensor, b: Option<&Tensor>) -> Result<Tensor> {
    let (xs, ws) = (x.shape(), w.shape());
    if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[1] {
        return shape_err("linear", format!("input {xs:?}, weight {ws:?}"));
    }
    let y = x.matmul(&w.t()?)?;
    match b {
        Some(b) if b.shape() != [ws[0]] => {
            shape_err("linear", format!("bias {:?} for {} outputs", b.shape(), ws[0]))
        }
        Some(b) => y.add(b),
        None => Ok(y),
    }
}

/// Weights of one attention layer: fused-free Q, K, V and output projections.
#[derive(Debug, Clone)]
pub struct AttentionWeights {
    pub wq: Tensor,
    pub bq: Tensor,
    pub wk: Tensor,
    pub bk: Tensor,
    pub wv: Tensor,
    pub bv: Tensor,
    pub wo: Tensor,
    pub bo: Tensor,
}

/// Scaled dot-product multi-head self-attention over `N×D` tokens.
///
/// Returns the projected output and, per head, the `N×N` attention weights.
pub fn multi_head_attention(
    tokens: &Tensor,
    heads: usize,
    w: &AttentionWeights,
) -> Result<(Tensor, Vec<Tensor>)> {
    let &[n, d] = tokens.shape() else {
        return shape_err("multi_head_attention", format!("tokens {:?}", tokens.shape()));
    };
    if heads == 0 || d % heads != 0 {
        return invalid("multi_head_attention", format!("dim {d} not divisible by {heads} heads"));
    }
    let hd = d / heads;
    let q = linear(tokens, &w.wq, Some(&w.bq))?;
    let k = linear(tokens, &w.wk, Some(&w.bk))?;
    let v = linear(tokens, &w.wv, Some(&w.bv))?;
    let scale = 1.0 / (hd as f64).sqrt();
    let mut outs = Vec::with_capacity(heads);
    let mut attn = Vec::with_capacity(heads);
    for hi in 0..heads {
        let qh = q.narrow(1, hi * hd, hd)?;
        let kh = k.narrow(1, hi * hd, hd)?;
        let vh = v.narrow(1, hi * hd, hd)?;
        let scores = qh.matmul(&kh.t()?)?.mul_scalar(scale);
        let p = softmax(&scores)?;
        outs.push(p.matmul(&vh)?);
        attn.push(p);
    }
    debug_assert_eq!(outs[0].shape(), &[n, hd]);
    let merged = Tensor::concat(&outs, 1)?;
    Ok((linear(&merged, &w.wo, Some(&w.bo))?, attn))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_zero() {
        assert_eq!(sigmoid(&Tensor::scalar(0.0)).item(), 0.5);
        assert!(sigmoid_f(-800.0) >= 0.0 && sigmoid_f(800.0) <= 1.0);
    }

    #[test]
    fn softmax_constant_row_is_uniform() {
        let x = Tensor::full(&[2, 5], 3.7);
        let s = softmax(&x).unwrap();
        assert!(s.data().iter().all(|&v| (v - 0.2).abs() < 1e-15));
    }

    #[test]
    fn elu_continuous_at_zero() {
        let y = elu(&Tensor::from_vec(vec![-1e-12, 0.0, 1e-12], &[3]).unwrap());
        assert!(y.data().iter().all(|v| v.abs() < 1e-11));
    }

    #[test]
    fn layer_norm_of_standardized_row() {
        let row = vec![-1.5, -0.5, 0.5, 1.5];
        let mean = 0.0;
        let var: f64 = row.iter().map(|v: &f64| (v - mean).powi(2)).sum::<f64>() / 4.0;
        let std = var.sqrt();
        let standardized: Vec<f64> = row.iter().map(|v| v / std).collect();
        let x = Tensor::from_vec(standardized.clone(), &[1, 4]).unwrap();
        let y = layer_norm(&x, 1, &Tensor::ones(&[4]), &Tensor::zeros(&[4])).unwrap();
        for (a, b) in y.data().iter().zip(&standardized) {
            assert!((a - b).abs() < 1e-4);
        }
    }

    #[test]
    fn batch_norm_train_standardizes() {
        let data: Vec<f64> = (0..2 * 4 * 4).map(|i| (i as f64 * 1.7).sin() * 3.0 + 2.0).collect();
        let x = Tensor::from_vec(data, &[2, 4, 4]).unwrap();
        let mut st = BatchNormState::new(2);
        let y = batch_norm(&x, &Tensor::ones(&[2, 1, 1]), &Tensor::zeros(&[2, 1, 1]), &mut st, true).unwrap();
        for c in 0..2 {
            let ch = &y.data()[c * 16..(c + 1) * 16];
            let m: f64 = ch.iter().sum::<f64>() / 16.0;
            let v: f64 = ch.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 16.0;
            assert!(m.abs() < 1e-12);
            assert!((v - 1.0).abs() < 1e-3);
        }
        assert!(st.running_mean.iter().all(|&m| m != 0.0));
        let e = batch_norm(&x, &Tensor::ones(&[2, 1, 1]), &Tensor::zeros(&[2, 1, 1]), &mut st, false).unwrap();
        assert_eq!(e.shape(), &[2, 4, 4]);
    }

    fn attn_weights(d: usize, seed: u64) -> AttentionWeights {
        let mut s = seed;
        let mut next = move || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64 - 0.5) * 0.4
        };
        let mut m = |r: usize, c: usize| Tensor::param((0..r * c).map(|_| next()).collect(), &[r, c]).unwrap();
        AttentionWeights {
            wq: m(d, d),
            bq: m(1, d).reshape(&[d]).unwrap(),
            wk: m(d, d),
            bk: m(1, d).reshape(&[d]).unwrap(),
            wv: m(d, d),
            bv: m(1, d).reshape(&[d]).unwrap(),
            wo: m(d, d),
            bo: m(1, d).reshape(&[d]).unwrap(),
        }
    }

    #[test]
    fn attention_rows_sum_to_one() {
        let w = attn_weights(12, 3);
        let x = Tensor::from_vec((0..72).map(|i| (i as f64 * 0.31).cos()).collect(), &[6, 12]).unwrap();
        let (y, probs) = multi_head_attention(&x, 3, &w).unwrap();
        assert_eq!(y.shape(), &[6, 12]);
        for p in probs {
            for row in p.data().chunks(6) {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            }
        }
        assert!(multi_head_attention(&x, 5, &w).is_err());
    }
}
