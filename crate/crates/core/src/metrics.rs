//! Angle accuracy and image quality measures.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::InclinationAngles;
use crate::image::ErpImage;

pub const DEFAULT_THRESHOLDS: [f64; 6] = [1.0, 2.0, 3.0, 4.0, 5.0, 12.0];
pub const PSNR_CAP_DB: f64 = 120.0;
/// Ground-truth tilt bins are `[10k, 10k+10)` degrees; 90° joins the last one.
pub const BIN_WIDTH_DEG: f64 = 10.0;
pub const N_BINS: usize = 9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleReport {
    pub count: usize,
    /// Threshold in degrees (as printed) → fraction of samples with both
    /// `|pitch error|` and `|roll error|` strictly below it.
    pub accuracy_at: BTreeMap<String, f64>,
    pub mean_err_deg: f64,
    pub median_err_deg: f64,
    /// Median per-sample error of each ground-truth magnitude bin; `None`
    /// for an empty bin.
    pub per_bin_medians: Vec<Option<f64>>,
}

/// Per-sample error: the larger of the absolute pitch and roll errors.
pub fn sample_error(pred: &InclinationAngles, gt: &InclinationAngles) -> f64 {
    (pred.pitch_deg - gt.pitch_deg).abs().max((pred.roll_deg - gt.roll_deg).abs())
}

pub fn bin_of(gt: &InclinationAngles) -> usize {
    ((gt.magnitude() / BIN_WIDTH_DEG) as usize).min(N_BINS - 1)
}

pub fn threshold_key(t: f64) -> String {
    format!("{t}")
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// `|pitch_err| < t && |roll_err| < t` is the same as `max < t`, so every
/// accuracy is one partition point of the sorted per-sample errors.
pub fn angle_accuracy(
    preds: &[InclinationAngles],
    gts: &[InclinationAngles],
    thresholds: &[f64],
) -> Result<AngleReport> {
    if preds.len() != gts.len() {
        return Err(Error::Dimension(format!("{} predictions vs {} ground truths", preds.len(), gts.len())));
    }
    if preds.is_empty() {
        return Err(Error::Dimension("no samples to score".into()));
    }
    let errs: Vec<f64> = preds.iter().zip(gts).map(|(p, g)| sample_error(p, g)).collect();
    let mut sorted = errs.clone();
    sorted.sort_by(f64::total_cmp);
    let n = errs.len() as f64;
    let accuracy_at = thresholds
        .iter()
        .map(|&t| (threshold_key(t), sorted.partition_point(|&e| e < t) as f64 / n))
        .collect();
    let mut bins: Vec<Vec<f64>> = vec![Vec::new(); N_BINS];
    for (e, g) in errs.iter().zip(gts) {
        bins[bin_of(g)].push(*e);
    }
    let per_bin_medians = bins
        .into_iter()
        .map(|mut b| {
            (!b.is_empty()).then(|| {
                b.sort_by(f64::total_cmp);
                median(&b)
            })
        })
        .collect();
    Ok(AngleReport {
        count: errs.len(),
        accuracy_at,
        mean_err_deg: errs.iter().sum::<f64>() / n,
        median_err_deg: median(&sorted),
        per_bin_medians,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImageReport {
    pub psnr_db: f64,
    pub ssim: f64,
    pub nrmse: f64,
    pub nmae: f64,
}

impl ImageReport {
    /// Component-wise mean.
    pub fn mean(reports: &[ImageReport]) -> Option<ImageReport> {
        if reports.is_empty() {
            return None;
        }
        let n = reports.len() as f64;
        let sum = |f: fn(&ImageReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
        Some(ImageReport {
            psnr_db: sum(|r| r.psnr_db),
            ssim: sum(|r| r.ssim),
            nrmse: sum(|r| r.nrmse),
            nmae: sum(|r| r.nmae),
        })
    }
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        PSNR_CAP_DB
    } else {
        (10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB)
    }
}

pub fn psnr(pred: &ErpImage, gt: &ErpImage) -> Result<f64> {
    check_shapes(pred, gt)?;
    let mse = pred.data.iter().zip(&gt.data).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / pred.data.len() as f64;
    Ok(psnr_from_mse(mse))
}

fn check_shapes(pred: &ErpImage, gt: &ErpImage) -> Result<()> {
    if pred.shape() != gt.shape() {
        return Err(Error::Dimension(format!("prediction {:?} vs ground truth {:?}", pred.shape(), gt.shape())));
    }
    Ok(())
}

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

/// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
pub fn gaussian_taps() -> [f64; SSIM_WINDOW] {
    let r = (SSIM_WINDOW / 2) as f64;
    let mut k: [f64; SSIM_WINDOW] =
        std::array::from_fn(|i| (-((i as f64 - r).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp());
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable Gaussian filter: columns wrap, rows clamp.
fn blur(plane: &[f64], h: usize, w: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as isize;
    let mut tmp = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (j, kv) in k.iter().enumerate() {
                let xx = (x as isize + j as isize - r).rem_euclid(w as isize) as usize;
                acc += kv * plane[y * w + xx];
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (i, kv) in k.iter().enumerate() {
                let yy = (y as isize + i as isize - r).clamp(0, h as isize - 1) as usize;
                acc += kv * tmp[yy * w + x];
            }
            out[y * w + x] = acc;
        }
    }
    out
}

/// Mean SSIM over pixels, averaged over channels.
pub fn ssim(pred: &ErpImage, gt: &ErpImage) -> Result<f64> {
    check_shapes(pred, gt)?;
    let (h, w) = (gt.height(), gt.width());
    let k = gaussian_taps();
    let n = h * w;
    let mut total = 0.0;
    for c in 0..gt.channels {
        let a = &pred.data[c * n..(c + 1) * n];
        let b = &gt.data[c * n..(c + 1) * n];
        let prod = |f: &dyn Fn(f64, f64) -> f64| a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect::<Vec<_>>();
        let mu_a = blur(a, h, w, &k);
        let mu_b = blur(b, h, w, &k);
        let aa = blur(&prod(&|x, _| x * x), h, w, &k);
        let bb = blur(&prod(&|_, y| y * y), h, w, &k);
        let ab = blur(&prod(&|x, y| x * y), h, w, &k);
        let mut sum = 0.0;
        for i in 0..n {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = aa[i] - ma * ma;
            let vb = bb[i] - mb * mb;
            let cov = ab[i] - ma * mb;
            sum += ((2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2))
                / ((ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2));
        }
        total += sum / n as f64;
    }
    Ok(total / gt.channels as f64)
}

pub fn image_metrics(pred: &ErpImage, gt: &ErpImage) -> Result<ImageReport> {
    check_shapes(pred, gt)?;
    let n = gt.data.len() as f64;
    let (mut se, mut ae) = (0.0, 0.0);
    for (a, b) in pred.data.iter().zip(&gt.data) {
        se += (a - b) * (a - b);
        ae += (a - b).abs();
    }
    let (lo, hi) = gt.data.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    let range = if hi > lo { hi - lo } else { 1.0 };
    Ok(ImageReport {
        psnr_db: psnr_from_mse(se / n),
        ssim: if pred == gt { 1.0 } else { ssim(pred, gt)? },
        nrmse: (se / n).sqrt() / range,
        nmae: ae / n / range,
    })
}
