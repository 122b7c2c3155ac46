//! Differentiable counterparts of the LUT and tilt warps, used inside the
//! training graph.

use std::f64::consts::{FRAC_PI_2, PI};

use panorect_tensor::sample::grid_sample;
use panorect_tensor::{HorizontalWrap, Tensor};

use crate::error::{Error, Result};
use crate::geometry::ErpGrid;
use crate::image::Lut3D;
use crate::resample::snap;

/// Norm guard under the latitude square root.
const RHO_EPS: f64 = 1e-12;

/// ERP pixel coordinates (`2×H×W`) of the directions in `lut` (`3×H×W`).
/// Positions within the snapping distance of a pixel centre are moved onto it
/// by a constant offset, so gradients pass through unchanged.
pub fn lut_to_coords(lut: &Tensor) -> Result<Tensor> {
    let &[3, h, w] = lut.shape() else {
        return Err(Error::Dimension(format!("LUT must be 3×H×W, got {:?}", lut.shape())));
    };
    let x = lut.narrow(0, 0, 1)?;
    let y = lut.narrow(0, 1, 1)?;
    let z = lut.narrow(0, 2, 1)?;
    let lon = y.atan2(&x)?;
    let rho = x.square().add(&y.square())?.add_scalar(RHO_EPS).sqrt();
    let lat = z.atan2(&rho)?;
    let u = lon.add_scalar(PI).mul_scalar(w as f64 / (2.0 * PI)).add_scalar(-0.5);
    let v = lat.mul_scalar(-(h as f64) / PI).add_scalar(FRAC_PI_2 * h as f64 / PI - 0.5);
    let coords = Tensor::concat(&[u, v], 0)?;
    let offset: Vec<f64> = coords.data().iter().map(|&c| snap(c) - c).collect();
    Ok(coords.add(&Tensor::from_vec(offset, &[2, h, w])?)?)
}

/// Samples `img` (`C×H×W`) at the direction stored in each `lut` pixel.
pub fn warp_by_lut(img: &Tensor, lut: &Tensor) -> Result<Tensor> {
    let coords = lut_to_coords(lut)?;
    if coords.shape()[1..] != img.shape()[1..] {
        return Err(Error::Dimension(format!("image {:?} vs LUT {:?}", img.shape(), lut.shape())));
    }
    Ok(grid_sample(img, &coords, HorizontalWrap::Circular)?)
}

/// The identity direction planes of `g` as a constant `3×H×W` tensor.
pub fn identity_lut(g: ErpGrid) -> Tensor {
    Tensor::from_vec(Lut3D::identity(g).data, &[3, g.height, g.width]).expect("identity LUT size")
}

/// `R(pitch, roll)·d` for every pixel direction `d`, with the angles given as
/// normalized `[1, 2]` network outputs in `[0, 1]`.
pub fn rotation_lut(angles_n: &Tensor, g: ErpGrid) -> Result<Tensor> {
    if angles_n.shape() != [1, 2] {
        return Err(Error::Dimension(format!("angles must be [1, 2], got {:?}", angles_n.shape())));
    }
    let rad = |i| -> Result<Tensor> {
        Ok(angles_n.narrow(1, i, 1)?.mul_scalar(PI).add_scalar(-FRAC_PI_2).reshape(&[1, 1, 1])?)
    };
    let (p, r) = (rad(0)?, rad(1)?);
    let (sp, cp, sr, cr) = (p.sin(), p.cos(), r.sin(), r.cos());
    let d = identity_lut(g);
    let (dx, dy, dz) = (d.narrow(0, 0, 1)?, d.narrow(0, 1, 1)?, d.narrow(0, 2, 1)?);
    let ex = dx.mul(&cp)?.add(&dy.mul(&sp.mul(&sr)?)?)?.add(&dz.mul(&sp.mul(&cr)?)?)?;
    let ey = dy.mul(&cr)?.sub(&dz.mul(&sr)?)?;
    let ez = dy.mul(&cp.mul(&sr)?)?.add(&dz.mul(&cp.mul(&cr)?)?)?.sub(&dx.mul(&sp)?)?;
    Ok(Tensor::concat(&[ex, ey, ez], 0)?)
}

/// Undoes the tilt given by normalized angles on a `C×H×W` image.
pub fn rotation_warp(img: &Tensor, angles_n: &Tensor) -> Result<Tensor> {
    let &[_, h, w] = img.shape() else {
        return Err(Error::Dimension(format!("image must be C×H×W, got {:?}", img.shape())));
    };
    let g = ErpGrid::new(h, w)?;
    warp_by_lut(img, &rotation_lut(angles_n, g)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::ground_truth_lut;
    use crate::geometry::{normalize_angles, InclinationAngles};
    use crate::image::ErpImage;
    use crate::procedural::test_image;
    use crate::resample::{apply_lut, rotate_erp};

    fn tensor(img: &ErpImage) -> Tensor {
        Tensor::from_vec(img.data.clone(), &img.shape()).unwrap()
    }

    #[test]
    fn identity_lut_copies_pixels() {
        let img = test_image(16, 2);
        let out = warp_by_lut(&tensor(&img), &identity_lut(img.grid)).unwrap();
        assert_eq!(out.to_vec(), img.data);
    }

    #[test]
    fn matches_image_pipeline() {
        let img = test_image(16, 5);
        let a = InclinationAngles::new(23.0, -41.0).unwrap();
        let lut = ground_truth_lut(a, img.grid).unwrap();
        let tilted = rotate_erp(&img, a).unwrap();
        let reference = apply_lut(&tilted, &lut).unwrap();
        let n = normalize_angles(a).unwrap();
        let angles = Tensor::from_vec(vec![n.pitch, n.roll], &[1, 2]).unwrap();
        let out = rotation_warp(&tensor(&tilted), &angles).unwrap();
        let diff = out.to_vec().iter().zip(&reference.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-9, "{diff}");
        let lut_t = rotation_lut(&angles, img.grid).unwrap().to_vec();
        let lut_diff = lut_t.iter().zip(&lut.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(lut_diff < 1e-12, "{lut_diff}");
    }
}
