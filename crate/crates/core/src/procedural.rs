//! Seeded synthetic panoramas for tests, calibration and demo corpora.
//!
//! Each image is a function of sphere direction only, so it is seamless across
//! the ERP border and single-valued at the poles. It carries a sky/ground
//! split, vertical structure (columns of alternating brightness that fade
//! towards the poles) and a few low-frequency plane waves.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::geometry::{erp_pixel_to_sphere, ErpGrid};
use crate::image::ErpImage;

struct Wave {
    normal: [f64; 3],
    freq: f64,
    phase: f64,
    amp: [f64; 3],
}

/// An 8-bit quantized `3×H×2H` panorama, deterministic in `seed`.
pub fn test_image(height: usize, seed: u64) -> ErpImage {
    let g = ErpGrid::with_height(height).expect("even height ≥ 2");
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let waves: Vec<Wave> = (0..4)
        .map(|_| {
            let z: f64 = rng.random_range(-1.0..1.0);
            let t: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let r = (1.0 - z * z).sqrt();
            Wave {
                normal: [r * t.cos(), r * t.sin(), z],
                freq: rng.random_range(2.0..7.0),
                phase: rng.random_range(0.0..std::f64::consts::TAU),
                amp: std::array::from_fn(|_| rng.random_range(0.03..0.08)),
            }
        })
        .collect();
    let columns = rng.random_range(5..11) as f64;
    let col_phase = rng.random_range(0.0..std::f64::consts::TAU);
    let col_amp: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.08..0.16));
    let sky: [f64; 3] = std::array::from_fn(|c| rng.random_range(0.05..0.15) * if c == 2 { 1.5 } else { 1.0 });
    let n = g.pixels();
    let mut data = vec![0.0; 3 * n];
    for i in 0..n {
        let d = erp_pixel_to_sphere((i % g.width) as f64, (i / g.width) as f64, g);
        let lon = d.y.atan2(d.x);
        let horiz = 1.0 - d.z * d.z;
        let column = (4.0 * (columns * lon + col_phase).sin()).tanh() * horiz * horiz;
        let horizon = (10.0 * d.z).tanh();
        for c in 0..3 {
            let mut v = 0.5 + sky[c] * horizon + col_amp[c] * column;
            for w in &waves {
                let p = w.normal[0] * d.x + w.normal[1] * d.y + w.normal[2] * d.z;
                v += w.amp[c] * (w.freq * p + w.phase).sin();
            }
            data[c * n + i] = v;
        }
    }
    ErpImage::new(3, g, data).expect("sizes match").quantized()
}
