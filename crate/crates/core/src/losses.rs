//! Training objective: angle, offset and perceptual terms and their weighted
//! sum. All inputs are tensors so gradients reach the network.

use panorect_tensor::loss::{l1, mse, smooth_l1};
use panorect_tensor::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::warp::{rotation_warp, warp_by_lut};

/// Inside the PSNR logarithm; bounds the term at 120 dB.
pub const PSNR_EPS: f64 = 1e-12;
/// Smooth-L1 transition point, in normalized angle units.
pub const SMOOTH_L1_BETA: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub tau: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { alpha: 1.0, beta: 1.0, gamma: 10.0, lambda: 1.0, tau: 10.0 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.alpha, self.beta, self.gamma, self.lambda, self.tau];
        if all.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Config(format!("loss weights must be finite and ≥ 0: {self:?}")));
        }
        Ok(())
    }
}

/// A learned image distance plugged into the perceptual term. None ships by
/// default; the term then contributes nothing.
pub trait PerceptualBackend {
    fn distance(&self, pred: &Tensor, gt: &Tensor) -> Result<Tensor>;
}

/// Smooth L1 on normalized angles plus L1 between the input warped back by
/// the predicted angles and the upright target.
pub fn angle_loss(angles_pred: &Tensor, angles_gt: &Tensor, input: &Tensor, upright_gt: &Tensor) -> Result<Tensor> {
    let a = smooth_l1(angles_pred, angles_gt, SMOOTH_L1_BETA)?;
    let corrected = rotation_warp(input, angles_pred)?;
    Ok(a.add(&l1(&corrected, upright_gt)?)?)
}

/// Per-pixel Euclidean norm of a `3×H×W` map, as `1×H×W`.
pub fn lut_norm(lut: &Tensor) -> Result<Tensor> {
    Ok(lut.square().sum_axes(&[0])?.sqrt())
}

/// Mean squared deviation of the per-pixel norm from 1.
pub fn unit_sphere_loss(lut: &Tensor) -> Result<Tensor> {
    let n = lut_norm(lut)?;
    let shape = n.shape().to_vec();
    Ok(mse(&n, &Tensor::ones(&shape))?)
}

pub fn offset_loss(lut_pred: &Tensor, lut_gt: &Tensor, input: &Tensor, upright_gt: &Tensor) -> Result<Tensor> {
    let coords = l1(lut_pred, lut_gt)?;
    let image = l1(&warp_by_lut(input, lut_pred)?, upright_gt)?;
    Ok(coords.add(&image)?.add(&unit_sphere_loss(lut_pred)?)?)
}

/// `−10·log10(mse + ε)` for images in `[0, 1]`.
pub fn psnr_tensor(pred: &Tensor, gt: &Tensor) -> Result<Tensor> {
    Ok(mse(pred, gt)?.add_scalar(PSNR_EPS).log10().mul_scalar(-10.0))
}

pub fn perceptual_loss(
    pred: &Tensor,
    gt: &Tensor,
    w: &LossWeights,
    backend: Option<&dyn PerceptualBackend>,
) -> Result<Tensor> {
    let psnr = psnr_tensor(pred, gt)?;
    let mut out = psnr.recip().mul_scalar(w.tau);
    if let Some(b) = backend {
        out = out.add(&b.distance(pred, gt)?.mul_scalar(w.lambda))?;
    }
    Ok(out)
}

/// The three weighted parts and their sum.
#[derive(Debug, Clone)]
pub struct LossParts {
    pub angle: Tensor,
    pub offset: Tensor,
    pub perceptual: Tensor,
    pub total: Tensor,
}

/// Plain-number view of [`LossParts`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossValues {
    pub angle: f64,
    pub offset: f64,
    pub perceptual: f64,
    pub total: f64,
}

impl LossParts {
    pub fn values(&self) -> LossValues {
        LossValues {
            angle: self.angle.item(),
            offset: self.offset.item(),
            perceptual: self.perceptual.item(),
            total: self.total.item(),
        }
    }
}

pub fn total_loss(angle: Tensor, offset: Tensor, perceptual: Tensor, w: &LossWeights) -> Result<LossParts> {
    let total = angle.mul_scalar(w.alpha).add(&offset.mul_scalar(w.beta))?.add(&perceptual.mul_scalar(w.gamma))?;
    Ok(LossParts { angle, offset, perceptual, total })
}
