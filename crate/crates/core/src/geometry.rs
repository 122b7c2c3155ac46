//! Coordinate conventions shared by every projection in the crate.
//!
//! * The world is z-up: the upright reference is the north pole `(0, 0, 1)`.
//! * The centre of an equirectangular (ERP) image looks along `+x`; longitude
//!   grows to the right, towards `+y`.
//! * Continuous pixel coordinate `u` addresses the centre of integer column
//!   `u`, so column `u` spans longitude `2π(u + ½)/W − π`.
//! * Cubemap faces are ordered `[+x, −x, +y, −y, +z, −z]`. See [`CUBE_FACES`]
//!   for the frozen per-face axes.

use std::f64::consts::{FRAC_PI_2, PI};
use std::ops::Mul;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Camera inclination in degrees. Yaw is never corrected.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct InclinationAngles {
    pub pitch_deg: f64,
    pub roll_deg: f64,
}

impl InclinationAngles {
    pub fn new(pitch_deg: f64, roll_deg: f64) -> Result<Self> {
        let a = InclinationAngles { pitch_deg, roll_deg };
        a.validate()?;
        Ok(a)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("pitch", self.pitch_deg), ("roll", self.roll_deg)] {
            if !(-90.0..=90.0).contains(&v) {
                return Err(Error::domain("inclination angle", format!("{name} = {v}° not in [-90, 90]")));
            }
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        self.pitch_deg == 0.0 && self.roll_deg == 0.0
    }

    /// `max(|pitch|, |roll|)`.
    pub fn magnitude(&self) -> f64 {
        self.pitch_deg.abs().max(self.roll_deg.abs())
    }
}

/// Angles mapped to `[0, 1]` by `(deg + 90) / 180`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NormalizedAngles {
    pub pitch: f64,
    pub roll: f64,
}

pub fn denormalize_angles(n: NormalizedAngles) -> Result<InclinationAngles> {
    for (name, v) in [("pitch", n.pitch), ("roll", n.roll)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::domain("normalized angle", format!("{name} = {v} not in [0, 1]")));
        }
    }
    Ok(InclinationAngles {
        pitch_deg: n.pitch * 180.0 - 90.0,
        roll_deg: n.roll * 180.0 - 90.0,
    })
}

pub fn normalize_angles(a: InclinationAngles) -> Result<NormalizedAngles> {
    a.validate()?;
    Ok(NormalizedAngles {
        pitch: (a.pitch_deg + 90.0) / 180.0,
        roll: (a.roll_deg + 90.0) / 180.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphereDirection {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl SphereDirection {
    pub const NORTH: SphereDirection = SphereDirection { x: 0.0, y: 0.0, z: 1.0 };

    /// Normalizes an arbitrary non-zero vector.
    pub fn from_vector(v: [f64; 3]) -> Self {
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        SphereDirection { x: v[0] / n, y: v[1] / n, z: v[2] / n }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }
}

/// A proper rotation stored row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationMatrix(pub [[f64; 3]; 3]);

impl RotationMatrix {
    pub const IDENTITY: RotationMatrix =
        RotationMatrix([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);

    /// Rotation about `+y` by `deg`.
    pub fn about_y(deg: f64) -> Self {
        let (s, c) = deg.to_radians().sin_cos();
        RotationMatrix([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])
    }

    /// Rotation about `+x` by `deg`.
    pub fn about_x(deg: f64) -> Self {
        let (s, c) = deg.to_radians().sin_cos();
        RotationMatrix([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])
    }

    pub fn transpose(&self) -> Self {
        let m = &self.0;
        let mut t = [[0.0; 3]; 3];
        for (i, row) in t.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = m[j][i];
            }
        }
        RotationMatrix(t)
    }

    pub fn apply(&self, d: SphereDirection) -> SphereDirection {
        let [x, y, z] = self.apply_raw([d.x, d.y, d.z]);
        SphereDirection { x, y, z }
    }

    pub fn apply_raw(&self, v: [f64; 3]) -> [f64; 3] {
        let m = &self.0;
        [
            m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
            m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
            m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
        ]
    }

    pub fn determinant(&self) -> f64 {
        let m = &self.0;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    /// Largest entrywise deviation of `mᵀm` from the identity.
    pub fn orthonormality_error(&self) -> f64 {
        let p = self.transpose() * *self;
        let mut worst: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((p.0[i][j] - target).abs());
            }
        }
        worst
    }
}

impl Mul for RotationMatrix {
    type Output = RotationMatrix;

    fn mul(self, rhs: RotationMatrix) -> RotationMatrix {
        let mut out = [[0.0; 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (0..3).map(|k| self.0[i][k] * rhs.0[k][j]).sum();
            }
        }
        RotationMatrix(out)
    }
}

/// The tilt rotation taking upright sphere coordinates to the coordinates
/// seen by the inclined camera:
///
/// ```text
/// ⎡ cos p   sin p·sin r   sin p·cos r ⎤
/// ⎢ 0       cos r         −sin r      ⎥
/// ⎣ −sin p  cos p·sin r   cos p·cos r ⎦
/// ```
///
/// which factors as `R_y(pitch)·R_x(roll)`.
pub fn rotation_from_angles(a: InclinationAngles) -> Result<RotationMatrix> {
    a.validate()?;
    let (sp, cp) = a.pitch_deg.to_radians().sin_cos();
    let (sr, cr) = a.roll_deg.to_radians().sin_cos();
    Ok(RotationMatrix([
        [cp, sp * sr, sp * cr],
        [0.0, cr, -sr],
        [-sp, cp * sr, cp * cr],
    ]))
}

/// The inverse of a rotation is its transpose.
pub fn invert_rotation(r: &RotationMatrix) -> RotationMatrix {
    r.transpose()
}

/// An equirectangular raster size; width is always twice the height.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErpGrid {
    pub width: usize,
    pub height: usize,
}

impl ErpGrid {
    pub fn new(height: usize, width: usize) -> Result<Self> {
        if width != 2 * height || height < 2 || height % 2 != 0 {
            return Err(Error::Dimension(format!(
                "ERP grid must be H×2H with even H ≥ 2, got {height}×{width}"
            )));
        }
        Ok(ErpGrid { width, height })
    }

    pub fn with_height(height: usize) -> Result<Self> {
        ErpGrid::new(height, 2 * height)
    }

    pub fn pixels(&self) -> usize {
        self.width * self.height
    }

    /// Latitude (radians) of the centre of row `v`.
    pub fn row_latitude(&self, v: f64) -> f64 {
        FRAC_PI_2 - PI * (v + 0.5) / self.height as f64
    }
}

pub fn erp_pixel_to_sphere(u: f64, v: f64, g: ErpGrid) -> SphereDirection {
    let lon = 2.0 * PI * (u + 0.5) / g.width as f64 - PI;
    let lat = g.row_latitude(v);
    let (sl, cl) = lon.sin_cos();
    let (sp, cp) = lat.sin_cos();
    SphereDirection { x: cp * cl, y: cp * sl, z: sp }
}

/// Inverse of [`erp_pixel_to_sphere`]. Longitude is undefined at the poles;
/// there the centre column `W/2 − ½` is returned.
pub fn sphere_to_erp_pixel(d: SphereDirection, g: ErpGrid) -> (f64, f64) {
    let (w, h) = (g.width as f64, g.height as f64);
    let lat = d.z.clamp(-1.0, 1.0).asin();
    let v = (FRAC_PI_2 - lat) * h / PI - 0.5;
    if d.x == 0.0 && d.y == 0.0 || d.z.abs() >= 1.0 {
        return (w / 2.0 - 0.5, v);
    }
    let lon = d.y.atan2(d.x);
    ((lon + PI) * w / (2.0 * PI) - 0.5, v)
}

/// Outward normal, tangent (direction of increasing `u`) and bitangent
/// (direction of increasing `v`) of one cube face.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CubeFace {
    pub normal: [f64; 3],
    pub tangent: [f64; 3],
    pub bitangent: [f64; 3],
}

/// Frozen face table. Side faces keep `+z` up (`v` runs towards `−z`) and
/// their `u` axis follows increasing ERP longitude; the `+z` and `−z` faces
/// share the `+y` tangent of the `+x` face so their edges meet it seamlessly.
pub const CUBE_FACES: [CubeFace; 6] = [
    CubeFace { normal: [1.0, 0.0, 0.0], tangent: [0.0, 1.0, 0.0], bitangent: [0.0, 0.0, -1.0] },
    CubeFace { normal: [-1.0, 0.0, 0.0], tangent: [0.0, -1.0, 0.0], bitangent: [0.0, 0.0, -1.0] },
    CubeFace { normal: [0.0, 1.0, 0.0], tangent: [-1.0, 0.0, 0.0], bitangent: [0.0, 0.0, -1.0] },
    CubeFace { normal: [0.0, -1.0, 0.0], tangent: [1.0, 0.0, 0.0], bitangent: [0.0, 0.0, -1.0] },
    CubeFace { normal: [0.0, 0.0, 1.0], tangent: [0.0, 1.0, 0.0], bitangent: [1.0, 0.0, 0.0] },
    CubeFace { normal: [0.0, 0.0, -1.0], tangent: [0.0, 1.0, 0.0], bitangent: [-1.0, 0.0, 0.0] },
];

pub const FACE_NAMES: [&str; 6] = ["px", "nx", "py", "ny", "pz", "nz"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CubeCoord {
    pub face: usize,
    pub u: f64,
    pub v: f64,
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn cube_pixel_to_sphere(c: CubeCoord, face_size: usize) -> Result<SphereDirection> {
    let Some(face) = CUBE_FACES.get(c.face) else {
        return Err(Error::domain("cube face", format!("index {} not in 0..6", c.face)));
    };
    let s = face_size as f64;
    let a = 2.0 * (c.u + 0.5) / s - 1.0;
    let b = 2.0 * (c.v + 0.5) / s - 1.0;
    let v: [f64; 3] =
        std::array::from_fn(|i| face.normal[i] + a * face.tangent[i] + b * face.bitangent[i]);
    Ok(SphereDirection::from_vector(v))
}

/// Projects onto the face whose axis has the largest absolute component.
/// Ties go to the lower face index, so `x` beats `y` beats `z`.
pub fn sphere_to_cube_pixel(d: SphereDirection, face_size: usize) -> CubeCoord {
    let (ax, ay, az) = (d.x.abs(), d.y.abs(), d.z.abs());
    let face = if ax >= ay && ax >= az {
        if d.x >= 0.0 { 0 } else { 1 }
    } else if ay >= az {
        if d.y >= 0.0 { 2 } else { 3 }
    } else if d.z >= 0.0 {
        4
    } else {
        5
    };
    let f = &CUBE_FACES[face];
    let v = d.to_array();
    let depth = dot(v, f.normal);
    let a = dot(v, f.tangent) / depth;
    let b = dot(v, f.bitangent) / depth;
    let s = face_size as f64;
    CubeCoord {
        face,
        u: (a + 1.0) * s / 2.0 - 0.5,
        v: (b + 1.0) * s / 2.0 - 0.5,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const G: ErpGrid = ErpGrid { width: 512, height: 256 };

    fn close(a: [f64; 3], b: [f64; 3], tol: f64) -> bool {
        a.iter().zip(&b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn zero_angles_give_identity() {
        let r = rotation_from_angles(InclinationAngles::default()).unwrap();
        assert_eq!(r, RotationMatrix::IDENTITY);
    }

    #[test]
    fn quarter_pitch_substitution() {
        let r = rotation_from_angles(InclinationAngles::new(90.0, 0.0).unwrap()).unwrap();
        let expect = [[0.0, 0.0, 1.0], [0.0, 1.0, 0.0], [-1.0, 0.0, 0.0]];
        for i in 0..3 {
            assert!(close(r.0[i], expect[i], 1e-15), "{:?}", r);
        }
        let back = invert_rotation(&r).apply_raw([1.0, 0.0, 0.0]);
        assert!(close(back, [0.0, 0.0, 1.0], 1e-15));
    }

    #[test]
    fn pitch30_roll45_on_north_pole() {
        let r = rotation_from_angles(InclinationAngles::new(30.0, 45.0).unwrap()).unwrap();
        let d = r.apply(SphereDirection::NORTH);
        assert!(close(d.to_array(), [0.353553, -0.707107, 0.612372], 1e-6));
    }

    #[test]
    fn out_of_range_angles_rejected() {
        assert!(InclinationAngles::new(90.5, 0.0).is_err());
        assert!(rotation_from_angles(InclinationAngles { pitch_deg: 0.0, roll_deg: -91.0 }).is_err());
        assert!(denormalize_angles(NormalizedAngles { pitch: 1.2, roll: 0.0 }).is_err());
    }

    #[test]
    fn angle_codec() {
        let a = denormalize_angles(NormalizedAngles { pitch: 0.5, roll: 0.5 }).unwrap();
        assert_eq!((a.pitch_deg, a.roll_deg), (0.0, 0.0));
        let b = denormalize_angles(NormalizedAngles { pitch: 1.0, roll: 0.0 }).unwrap();
        assert_eq!((b.pitch_deg, b.roll_deg), (90.0, -90.0));
    }

    #[test]
    fn erp_reference_points() {
        assert!(close(erp_pixel_to_sphere(255.5, 127.5, G).to_array(), [1.0, 0.0, 0.0], 1e-15));
        assert!(close(erp_pixel_to_sphere(255.5, -0.5, G).to_array(), [0.0, 0.0, 1.0], 1e-15));
        assert!(close(erp_pixel_to_sphere(383.5, 127.5, G).to_array(), [0.0, 1.0, 0.0], 1e-15));
        assert_eq!(sphere_to_erp_pixel(SphereDirection { x: 1.0, y: 0.0, z: 0.0 }, G), (255.5, 127.5));
        assert_eq!(sphere_to_erp_pixel(SphereDirection::NORTH, G), (255.5, -0.5));
    }

    #[test]
    fn cube_reference_points() {
        let c = |face, u, v| cube_pixel_to_sphere(CubeCoord { face, u, v }, 128).unwrap().to_array();
        assert!(close(c(0, 63.5, 63.5), [1.0, 0.0, 0.0], 1e-15));
        assert!(close(c(4, 63.5, 63.5), [0.0, 0.0, 1.0], 1e-15));
        let n = (1.0f64 + 2.0 * 0.9921875 * 0.9921875).sqrt();
        assert!(close(c(0, 0.0, 0.0), [1.0 / n, -0.9921875 / n, 0.9921875 / n], 1e-15));
        assert!(cube_pixel_to_sphere(CubeCoord { face: 6, u: 0.0, v: 0.0 }, 8).is_err());
    }

    #[test]
    fn cube_tie_break_prefers_lower_face() {
        let d = SphereDirection::from_vector([1.0, 1.0, 1.0]);
        assert_eq!(sphere_to_cube_pixel(d, 16).face, 0);
        let d = SphereDirection::from_vector([0.0, -1.0, 1.0]);
        assert_eq!(sphere_to_cube_pixel(d, 16).face, 3);
        let c = sphere_to_cube_pixel(SphereDirection::NORTH, 16);
        assert_eq!((c.face, c.u, c.v), (4, 7.5, 7.5));
    }

    #[test]
    fn grid_validation() {
        assert!(ErpGrid::new(256, 512).is_ok());
        assert!(ErpGrid::new(256, 500).is_err());
        assert!(ErpGrid::new(3, 6).is_err());
    }
}
