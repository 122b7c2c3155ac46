//! Resampling floors measured once on seeded procedural panoramas and stored
//! here: `T1` for the ERP→cubemap→ERP round trip and `T2` for undoing a tilt
//! with its ground-truth LUT. Rerunning [`calibrate`] must land within
//! [`TOLERANCE_DB`] of the stored values.

use serde::{Deserialize, Serialize};

use crate::dataset::{draw_angles, ground_truth_lut, seeded_rng, stream};
use crate::error::Result;
use crate::geometry::InclinationAngles;
use crate::image::ErpImage;
use crate::metrics::psnr;
use crate::procedural::test_image;
use crate::resample::{apply_lut, cubemap_to_erp, erp_to_cubemap, rotate_erp};

/// Minimum ERP→cube→ERP PSNR over the calibration images, 256×512 with 128² faces.
/// Output of [`calibrate`], rounded to 0.01 dB.
pub const T1_DB: f64 = 57.84;
/// Minimum tilt-recovery PSNR over the calibration cases, `|angle| ≤ 60°`.
pub const T2_DB: f64 = 58.98;
pub const TOLERANCE_DB: f64 = 0.5;

pub const ERP_HEIGHT: usize = 256;
pub const FACE_SIZE: usize = 128;
pub const IMAGE_SEEDS: [u64; 4] = [11, 12, 13, 14];
pub const TILT_CASES: usize = 20;
pub const TILT_RANGE_DEG: f64 = 60.0;
pub const TILT_SEED: u64 = 2024;

/// The calibration image for `seed`.
pub fn image(seed: u64) -> ErpImage {
    test_image(ERP_HEIGHT, seed)
}

pub fn round_trip_psnr(img: &ErpImage, face_size: usize) -> Result<f64> {
    let back = cubemap_to_erp(&erp_to_cubemap(img, face_size)?, img.grid)?;
    psnr(&back, img)
}

/// PSNR of `apply_lut(rotate_erp(img, a), ground_truth_lut(a))` and of the
/// tilted image itself, both against `img`.
pub fn recovery_psnr(img: &ErpImage, a: InclinationAngles) -> Result<(f64, f64)> {
    let tilted = rotate_erp(img, a)?;
    let back = apply_lut(&tilted, &ground_truth_lut(a, img.grid)?)?;
    Ok((psnr(&back, img)?, psnr(&tilted, img)?))
}

/// The seeded tilts used for `T2`.
pub fn tilt_cases() -> Vec<InclinationAngles> {
    (0..TILT_CASES as u64).map(|i| draw_angles(&mut seeded_rng(TILT_SEED, stream::ANGLES, i), TILT_RANGE_DEG)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TiltCase {
    pub angles: InclinationAngles,
    pub image_seed: u64,
    pub recovered_db: f64,
    pub unrectified_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub t1_db: f64,
    pub t2_db: f64,
    pub round_trips_db: Vec<f64>,
    pub tilts: Vec<TiltCase>,
}

/// Reruns both oracles. Tilt case `i` uses image `IMAGE_SEEDS[i % 4]`.
pub fn calibrate() -> Result<Calibration> {
    let images: Vec<ErpImage> = IMAGE_SEEDS.iter().map(|&s| image(s)).collect();
    let round_trips_db = images.iter().map(|img| round_trip_psnr(img, FACE_SIZE)).collect::<Result<Vec<_>>>()?;
    let mut tilts = Vec::new();
    for (i, a) in tilt_cases().into_iter().enumerate() {
        let k = i % images.len();
        let (recovered_db, unrectified_db) = recovery_psnr(&images[k], a)?;
        tilts.push(TiltCase { angles: a, image_seed: IMAGE_SEEDS[k], recovered_db, unrectified_db });
    }
    Ok(Calibration {
        t1_db: round_trips_db.iter().copied().fold(f64::INFINITY, f64::min),
        t2_db: tilts.iter().map(|t| t.recovered_db).fold(f64::INFINITY, f64::min),
        round_trips_db,
        tilts,
    })
}
