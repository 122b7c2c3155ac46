//! Mean-reduced distances between tensors of identical shape.

use crate::error::{shape_err, Result};
use crate::tensor::Tensor;

fn same_shape(a: &Tensor, b: &Tensor, op: &'static str) -> Result<()> {
    if a.shape() != b.shape() {
        return shape_err(op, format!("{:?} vs {:?}", a.shape(), b.shape()));
    }
    Ok(())
}

pub fn l1(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    same_shape(a, b, "l1")?;
    Ok(a.sub(b)?.abs().mean())
}

pub fn mse(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    same_shape(a, b, "mse")?;
    Ok(a.sub(b)?.square().mean())
}

/// Huber-style smooth L1: `d²/(2β)` for `|d| < β`, else `|d| − β/2`.
pub fn smooth_l1(a: &Tensor, b: &Tensor, beta: f64) -> Result<Tensor> {
    same_shape(a, b, "smooth_l1")?;
    let d = a.sub(b)?;
    let dv = d.to_vec();
    let out: Vec<f64> = dv
        .iter()
        .map(|&x| {
            if x.abs() < beta {
                0.5 * x * x / beta
            } else {
                x.abs() - 0.5 * beta
            }
        })
        .collect();
    let elem = Tensor::from_op(out, d.shape().to_vec(), vec![d.clone()], move |g, _| {
        vec![Some(
            g.iter()
                .zip(&dv)
                .map(|(g, &x)| g * if x.abs() < beta { x / beta } else { x.signum() })
                .collect(),
        )]
    });
    Ok(elem.mean())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn l1_of_self_is_zero() {
        let x = Tensor::from_vec(vec![0.2, -3.0, 5.5], &[3]).unwrap();
        assert_eq!(l1(&x, &x).unwrap().item(), 0.0);
    }

    #[test]
    fn smooth_l1_quadratic_branch_closed_form() {
        let beta = 0.8;
        let d = beta / 2.0;
        let a = Tensor::full(&[10], d + 1.0);
        let b = Tensor::full(&[10], 1.0);
        let v = smooth_l1(&a, &b, beta).unwrap().item();
        assert!((v - d * d / (2.0 * beta)).abs() < 1e-15);
    }

    #[test]
    fn smooth_l1_linear_branch() {
        let a = Tensor::full(&[4], 3.0);
        let b = Tensor::zeros(&[4]);
        assert!((smooth_l1(&a, &b, 1.0).unwrap().item() - 2.5).abs() < 1e-15);
    }

    #[test]
    fn mse_gradient_is_two_diff_over_n() {
        let a = Tensor::param(vec![0.5, 1.0, -2.0, 4.0], &[4]).unwrap();
        let b = Tensor::from_vec(vec![0.0, 2.0, -1.0, 1.0], &[4]).unwrap();
        mse(&a, &b).unwrap().backward().unwrap();
        let expect: Vec<f64> = [0.5, -1.0, -1.0, 3.0].iter().map(|d| 2.0 * d / 4.0).collect();
        assert_eq!(a.grad().unwrap(), expect);
    }

    #[test]
    fn mismatched_shapes_rejected() {
        assert!(l1(&Tensor::zeros(&[2]), &Tensor::zeros(&[3])).is_err());
    }
}
