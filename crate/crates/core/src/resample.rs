//! Image-space warps: ERP↔cubemap reprojection, tilt simulation and LUT
//! application. Every warp is a single bilinear resampling pass.

use std::rc::Rc;

use panorect_tensor::sample::bilinear_kernel;
use panorect_tensor::{HorizontalWrap, InterpTable};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{
    cube_pixel_to_sphere, erp_pixel_to_sphere, rotation_from_angles, sphere_to_cube_pixel,
    sphere_to_erp_pixel, CubeCoord, ErpGrid, InclinationAngles, SphereDirection,
};
use crate::image::{Cubemap, ErpImage, Lut3D};

/// Coordinates within this distance of a pixel centre are snapped onto it, so
/// that maps which are the identity up to round-off copy pixels exactly.
pub const SNAP_EPS: f64 = 1e-9;

#[inline]
pub fn snap(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() < SNAP_EPS {
        r
    } else {
        x
    }
}

/// Bilinear sampling of a `C×H×W` image at continuous pixel coordinates.
/// Rows clamp, columns follow `wrap`. Returns `C×len(u)`.
pub fn bilinear_sample(
    img: &[f64],
    shape: [usize; 3],
    u: &[f64],
    v: &[f64],
    wrap: HorizontalWrap,
) -> Result<Vec<f64>> {
    let [c, h, w] = shape;
    if img.len() != c * h * w {
        return Err(Error::Dimension(format!("{} values for {c}×{h}×{w}", img.len())));
    }
    if u.len() != v.len() {
        return Err(Error::Dimension(format!("{} u vs {} v coordinates", u.len(), v.len())));
    }
    Ok(bilinear_kernel(img, c, h, w, u, v, wrap)?)
}

fn sample_erp(img: &ErpImage, u: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    bilinear_sample(&img.data, img.shape(), u, v, HorizontalWrap::Circular)
}

/// ERP sampling positions for a set of directions, snapped to pixel centres.
fn erp_coords(dirs: impl IndexedParallelIterator<Item = SphereDirection>, g: ErpGrid) -> (Vec<f64>, Vec<f64>) {
    dirs.map(|d| {
        let (u, v) = sphere_to_erp_pixel(d, g);
        (snap(u), snap(v))
    })
    .unzip()
}

pub fn erp_to_cubemap(img: &ErpImage, face_size: usize) -> Result<Cubemap> {
    if face_size == 0 {
        return Err(Error::Dimension("face size must be positive".into()));
    }
    let s = face_size;
    let (u, v) = erp_coords(
        (0..6 * s * s).into_par_iter().map(|i| {
            let (f, r) = (i / (s * s), i % (s * s));
            let c = CubeCoord { face: f, u: (r % s) as f64, v: (r / s) as f64 };
            cube_pixel_to_sphere(c, s).expect("face index in range")
        }),
        img.grid,
    );
    // Sampled as C×(6·S·S), stored as 6×C×S×S.
    let planes = sample_erp(img, &u, &v)?;
    let c = img.channels;
    let mut data = vec![0.0; planes.len()];
    for ch in 0..c {
        for f in 0..6 {
            let src = &planes[ch * 6 * s * s + f * s * s..][..s * s];
            data[(f * c + ch) * s * s..][..s * s].copy_from_slice(src);
        }
    }
    Cubemap::new(c, s, data)
}

/// The linear map from a `6×C×S×S` cubemap to a `C×H×W` ERP image. Each ERP
/// pixel reads only from its owning face, clamping at face borders.
pub fn cube_to_erp_table(channels: usize, face_size: usize, g: ErpGrid) -> InterpTable {
    let s = face_size;
    let n = g.pixels();
    let plane: Vec<([usize; 4], [f64; 4])> = (0..n)
        .into_par_iter()
        .map(|i| {
            let d = erp_pixel_to_sphere((i % g.width) as f64, (i / g.width) as f64, g);
            let cc = sphere_to_cube_pixel(d, s);
            let (u, v) = (snap(cc.u), snap(cc.v));
            let (xf, yf) = (u.floor(), v.floor());
            let (fx, fy) = (u - xf, v - yf);
            let clamp = |k: f64| k.clamp(0.0, (s - 1) as f64) as usize;
            let (x0, x1) = (clamp(xf), clamp(xf + 1.0));
            let (y0, y1) = (clamp(yf), clamp(yf + 1.0));
            // Offsets within the face's channel-0 plane.
            let base = cc.face * channels * s * s;
            (
                [base + y0 * s + x0, base + y0 * s + x1, base + y1 * s + x0, base + y1 * s + x1],
                [(1.0 - fx) * (1.0 - fy), fx * (1.0 - fy), (1.0 - fx) * fy, fx * fy],
            )
        })
        .collect();
    let mut taps = Vec::with_capacity(channels * n);
    let mut weights = Vec::with_capacity(channels * n);
    for ch in 0..channels {
        for (t, w) in &plane {
            taps.push(t.map(|k| k + ch * s * s));
            weights.push(*w);
        }
    }
    InterpTable { input_len: 6 * channels * s * s, taps, weights }
}

pub fn cubemap_to_erp(cm: &Cubemap, g: ErpGrid) -> Result<ErpImage> {
    let table = Rc::new(cube_to_erp_table(cm.channels, cm.face_size, g));
    ErpImage::new(cm.channels, g, table.apply(&cm.data))
}

/// Simulates a camera tilted by `a`: the output pixel looking along `e` shows
/// the upright scene at `Rᵀe`.
pub fn rotate_erp(img: &ErpImage, a: InclinationAngles) -> Result<ErpImage> {
    let r = rotation_from_angles(a)?;
    if a.is_zero() {
        return Ok(img.clone());
    }
    let g = img.grid;
    let rt = r.transpose();
    let (u, v) = erp_coords(
        (0..g.pixels()).into_par_iter().map(|i| {
            rt.apply(erp_pixel_to_sphere((i % g.width) as f64, (i / g.width) as f64, g))
        }),
        g,
    );
    ErpImage::new(img.channels, g, sample_erp(img, &u, &v)?)
}

/// Samples `img` at the sphere direction each LUT pixel stores. Entries are
/// normalized before conversion; a zero vector is rejected.
pub fn apply_lut(img: &ErpImage, lut: &Lut3D) -> Result<ErpImage> {
    if lut.grid != img.grid {
        return Err(Error::Dimension(format!(
            "LUT {}×{} vs image {}×{}",
            lut.grid.height, lut.grid.width, img.grid.height, img.grid.width
        )));
    }
    let g = img.grid;
    let dirs: Vec<SphereDirection> = (0..g.pixels())
        .map(|i| {
            let p = lut.get(i);
            let n = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
            if n > 0.0 && n.is_finite() {
                Ok(SphereDirection { x: p[0] / n, y: p[1] / n, z: p[2] / n })
            } else {
                Err(Error::Numeric(format!("LUT entry {i} has norm {n}")))
            }
        })
        .collect::<Result<_>>()?;
    let (u, v) = erp_coords(dirs.into_par_iter(), g);
    ErpImage::new(img.channels, g, sample_erp(img, &u, &v)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::procedural::test_image;

    #[test]
    fn identity_lut_and_zero_rotation_are_exact() {
        let img = test_image(32, 3);
        assert_eq!(apply_lut(&img, &Lut3D::identity(img.grid)).unwrap(), img);
        assert_eq!(rotate_erp(&img, InclinationAngles::default()).unwrap(), img);
    }

    #[test]
    fn constant_images_stay_constant() {
        let g = ErpGrid::with_height(16).unwrap();
        let img = ErpImage::constant(3, g, 0.25);
        let cm = erp_to_cubemap(&img, 8).unwrap();
        assert_eq!(cm.shape(), [6, 3, 8, 8]);
        assert!(cm.data.iter().all(|&v| (v - 0.25).abs() < 1e-15));
        let back = cubemap_to_erp(&cm, g).unwrap();
        assert!(back.data.iter().all(|&v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn north_pole_lut_reads_pole_coordinate() {
        let img = test_image(16, 1);
        let g = img.grid;
        let mut data = vec![0.0; 3 * g.pixels()];
        data[2 * g.pixels()..].fill(1.0);
        let out = apply_lut(&img, &Lut3D::new(g, data).unwrap()).unwrap();
        let (u, v) = sphere_to_erp_pixel(SphereDirection::NORTH, g);
        let expect = sample_erp(&img, &[u], &[v]).unwrap();
        for c in 0..3 {
            let plane = &out.data[c * g.pixels()..(c + 1) * g.pixels()];
            assert!(plane.iter().all(|&x| x == expect[c]));
        }
    }

    #[test]
    fn pole_impulse_follows_quarter_pitch() {
        let g = ErpGrid::with_height(32).unwrap();
        let mut img = ErpImage::constant(1, g, 0.0);
        // The whole top row sits at the pole.
        img.data[..g.width].fill(1.0);
        let out = rotate_erp(&img, InclinationAngles::new(90.0, 0.0).unwrap()).unwrap();
        let argmax = (0..g.pixels()).max_by(|&a, &b| out.data[a].total_cmp(&out.data[b])).unwrap();
        let (x, y) = (argmax % g.width, argmax / g.width);
        assert!((30..=33).contains(&x) && (14..=17).contains(&y), "{x},{y}");
    }

    #[test]
    fn lut_size_mismatch_rejected() {
        let img = test_image(16, 1);
        let lut = Lut3D::identity(ErpGrid::with_height(8).unwrap());
        assert!(apply_lut(&img, &lut).is_err());
    }
}
