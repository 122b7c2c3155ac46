//! Sample synthesis, splits, degradations and the on-disk sample layout.
//!
//! Randomness comes from ChaCha20 keyed by the run seed. Every consumer draws
//! from its own stream, `domain << 32 | index`, so samples can be produced in
//! any order or in parallel without changing a single bit.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use panorect_tensor::container::{self, Entry};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{erp_pixel_to_sphere, rotation_from_angles, ErpGrid, InclinationAngles};
use crate::image::{Cubemap, ErpImage, Lut3D};
use crate::manifest::{config_hash, container_err, file_crc, read_json, write_json};
use crate::resample::{erp_to_cubemap, rotate_erp};

pub const DEFAULT_SEED: u64 = 100;
pub const SAMPLE_FORMAT_VERSION: u32 = 1;

/// Stream domains of the seeded generator.
pub mod stream {
    pub const ANGLES: u64 = 1;
    pub const SPLIT: u64 = 2;
    pub const DEGRADE: u64 = 3;
    pub const INIT: u64 = 4;
    pub const BATCH: u64 = 5;
}

pub fn seeded_rng(seed: u64, domain: u64, index: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream((domain << 32) | (index & 0xffff_ffff));
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub erp_height: usize,
    pub face_size: usize,
    pub angle_range_deg: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig { erp_height: 256, face_size: 128, angle_range_deg: 90.0, seed: DEFAULT_SEED }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.angle_range_deg > 0.0 && self.angle_range_deg <= 90.0) {
            return Err(Error::Config(format!("angle_range_deg {} not in (0, 90]", self.angle_range_deg)));
        }
        ErpGrid::with_height(self.erp_height).map_err(|e| Error::Config(e.to_string()))?;
        if self.face_size == 0 {
            return Err(Error::Config("face_size must be positive".into()));
        }
        Ok(())
    }

    pub fn grid(&self) -> ErpGrid {
        ErpGrid::with_height(self.erp_height).expect("validated")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub index: u64,
    pub upright_gt: ErpImage,
    pub angles_gt: InclinationAngles,
    pub nonupright_erp: ErpImage,
    pub nonupright_cubemap: Cubemap,
    pub lut_gt: Lut3D,
}

/// For every upright pixel direction `d`, the tilted-frame direction `R·d`
/// at which the tilted image shows it.
pub fn ground_truth_lut(a: InclinationAngles, g: ErpGrid) -> Result<Lut3D> {
    let r = rotation_from_angles(a)?;
    let n = g.pixels();
    let mut data = vec![0.0; 3 * n];
    for i in 0..n {
        let d = r.apply(erp_pixel_to_sphere((i % g.width) as f64, (i / g.width) as f64, g));
        data[i] = d.x;
        data[n + i] = d.y;
        data[2 * n + i] = d.z;
    }
    Lut3D::new(g, data)
}

/// Pitch and roll, independently uniform in `±range`.
pub fn draw_angles(rng: &mut impl Rng, range_deg: f64) -> InclinationAngles {
    InclinationAngles {
        pitch_deg: rng.random_range(-range_deg..=range_deg),
        roll_deg: rng.random_range(-range_deg..=range_deg),
    }
}

/// Builds one training record. The tilted image is quantized to 8 bits so the
/// stored PNG reproduces it exactly; the cubemap is derived from that
/// quantized image.
pub fn synth_sample(upright: &ErpImage, cfg: &SynthConfig, index: u64) -> Result<Sample> {
    cfg.validate()?;
    if upright.grid != cfg.grid() {
        return Err(Error::Dimension(format!(
            "upright image {}×{}, config expects {}×{}",
            upright.height(),
            upright.width(),
            cfg.erp_height,
            2 * cfg.erp_height
        )));
    }
    let mut rng = seeded_rng(cfg.seed, stream::ANGLES, index);
    let angles = draw_angles(&mut rng, cfg.angle_range_deg);
    build_sample(upright, angles, cfg.face_size, format!("s{index:05}"), index)
}

pub fn build_sample(
    upright: &ErpImage,
    angles: InclinationAngles,
    face_size: usize,
    id: String,
    index: u64,
) -> Result<Sample> {
    let upright_gt = upright.quantized();
    let nonupright_erp = rotate_erp(&upright_gt, angles)?.quantized();
    let nonupright_cubemap = erp_to_cubemap(&nonupright_erp, face_size)?;
    let lut_gt = ground_truth_lut(angles, upright_gt.grid)?;
    Ok(Sample { id, index, upright_gt, angles_gt: angles, nonupright_erp, nonupright_cubemap, lut_gt })
}

/// Resamples an equirectangular image to another grid through the sphere.
pub fn resize_erp(img: &ErpImage, g: ErpGrid) -> Result<ErpImage> {
    if img.grid == g {
        return Ok(img.clone());
    }
    let (u, v): (Vec<f64>, Vec<f64>) = (0..g.pixels())
        .map(|i| {
            let d = erp_pixel_to_sphere((i % g.width) as f64, (i / g.width) as f64, g);
            crate::geometry::sphere_to_erp_pixel(d, img.grid)
        })
        .unzip();
    let out = crate::resample::bilinear_sample(
        &img.data,
        img.shape(),
        &u,
        &v,
        panorect_tensor::HorizontalWrap::Circular,
    )?;
    ErpImage::new(img.channels, g, out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec { train: 0.70, val: 0.15, test: 0.15 }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|f| !(0.0..=1.0).contains(f)) || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split fractions {parts:?} must be in [0,1] and sum to 1")));
        }
        Ok(())
    }

    /// Part sizes for `n` items by largest remainder: each part gets
    /// `floor(n·f)`, and leftover items go to the parts with the largest
    /// fractional remainders, ties to the earlier part (train, val, test).
    /// Ten items at 70/15/15 give 7/2/1.
    pub fn sizes(&self, n: usize) -> [usize; 3] {
        let exact = [self.train, self.val, self.test].map(|f| f * n as f64);
        let mut sizes = exact.map(|x| (x + 1e-9).floor() as usize);
        let mut left = n - sizes.iter().sum::<usize>();
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| {
            let ra = exact[a] - sizes[a] as f64;
            let rb = exact[b] - sizes[b] as f64;
            rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
        });
        for &k in order.iter().cycle() {
            if left == 0 {
                break;
            }
            sizes[k] += 1;
            left -= 1;
        }
        sizes
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

impl Splits {
    pub fn named(&self) -> [(&'static str, &Vec<String>); 3] {
        [("train", &self.train), ("val", &self.val), ("test", &self.test)]
    }
}

/// Seeded shuffle followed by consecutive cuts of the sizes above.
pub fn split_dataset(ids: &[String], s: &SplitSpec, seed: u64) -> Result<Splits> {
    if ids.is_empty() {
        return Err(Error::Config("cannot split an empty id list".into()));
    }
    s.validate()?;
    let mut order = ids.to_vec();
    order.shuffle(&mut seeded_rng(seed, stream::SPLIT, 0));
    let [a, b, _] = s.sizes(ids.len());
    let test = order.split_off(a + b);
    let val = order.split_off(a);
    Ok(Splits { train: order, val, test })
}

/// Replaces one uniformly placed `mask_size²` window with the means of
/// `block×block` tiles; tiles cut by the window edge average what they cover.
pub fn degrade_mosaic(img: &ErpImage, mask_size: usize, block: usize, rng: &mut impl Rng) -> Result<ErpImage> {
    let (h, w) = (img.height(), img.width());
    if mask_size == 0 || block == 0 || mask_size > h || mask_size > w {
        return Err(Error::domain(
            "mosaic mask",
            format!("mask {mask_size} block {block} on {h}×{w} image"),
        ));
    }
    let y0 = rng.random_range(0..=h - mask_size);
    let x0 = rng.random_range(0..=w - mask_size);
    Ok(mosaic_at(img, x0, y0, mask_size, block))
}

pub fn mosaic_at(img: &ErpImage, x0: usize, y0: usize, mask_size: usize, block: usize) -> ErpImage {
    let (h, w) = (img.height(), img.width());
    let mut out = img.clone();
    for c in 0..img.channels {
        let plane = &mut out.data[c * h * w..(c + 1) * h * w];
        for by in (0..mask_size).step_by(block) {
            for bx in (0..mask_size).step_by(block) {
                let ys = y0 + by..y0 + (by + block).min(mask_size);
                let xs = x0 + bx..x0 + (bx + block).min(mask_size);
                let mut sum = 0.0;
                for y in ys.clone() {
                    for x in xs.clone() {
                        sum += plane[y * w + x];
                    }
                }
                let mean = sum / (ys.len() * xs.len()) as f64;
                for y in ys.clone() {
                    for x in xs.clone() {
                        plane[y * w + x] = mean;
                    }
                }
            }
        }
    }
    out
}

/// `n` i.i.d. draws of `N(0, σ²)`.
pub fn gaussian_noise(n: usize, sigma: f64, rng: &mut impl Rng) -> Result<Vec<f64>> {
    let dist = Normal::new(0.0, sigma).map_err(|e| Error::domain("noise sigma", e.to_string()))?;
    Ok((0..n).map(|_| dist.sample(rng)).collect())
}

pub fn degrade_gaussian(img: &ErpImage, sigma: f64, rng: &mut impl Rng) -> Result<ErpImage> {
    if !(sigma >= 0.0) {
        return Err(Error::domain("noise sigma", format!("{sigma} < 0")));
    }
    if sigma == 0.0 {
        return Ok(img.clone());
    }
    let noise = gaussian_noise(img.data.len(), sigma, rng)?;
    let data = img.data.iter().zip(&noise).map(|(v, n)| v + n).collect();
    ErpImage::new(img.channels, img.grid, data)
}

/// One evaluation condition.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Degradation {
    #[default]
    None,
    Mosaic { mask: usize, block: usize },
    Gaussian { sigma: f64 },
}

pub const MOSAIC_BLOCK: usize = 10;
pub const MOSAIC_MASKS: [usize; 4] = [32, 64, 96, 128];
pub const NOISE_SIGMAS: [f64; 5] = [0.01, 0.02, 0.03, 0.04, 0.05];

impl Degradation {
    /// The clean condition followed by every mask size and noise level.
    pub fn protocol_grid() -> Vec<Degradation> {
        let mut v = vec![Degradation::None];
        v.extend(MOSAIC_MASKS.map(|mask| Degradation::Mosaic { mask, block: MOSAIC_BLOCK }));
        v.extend(NOISE_SIGMAS.map(|sigma| Degradation::Gaussian { sigma }));
        v
    }

    /// Mosaic sizes are stated for 256-row images; this shrinks mask and
    /// block in proportion for an `erp_height`-row image (at least one
    /// pixel each). Noise is left as is.
    pub fn scaled_to(&self, erp_height: usize) -> Degradation {
        match *self {
            Degradation::Mosaic { mask, block } => {
                let f = erp_height as f64 / 256.0;
                let px = |v: usize| ((v as f64 * f).round() as usize).max(1);
                Degradation::Mosaic { mask: px(mask), block: px(block) }
            }
            d => d,
        }
    }

    /// Applies the condition to one input with the sample's own stream.
    pub fn apply(&self, img: &ErpImage, seed: u64, index: u64) -> Result<ErpImage> {
        let mut rng = seeded_rng(seed, stream::DEGRADE, index);
        match *self {
            Degradation::None => Ok(img.clone()),
            Degradation::Mosaic { mask, block } => degrade_mosaic(img, mask, block, &mut rng),
            Degradation::Gaussian { sigma } => degrade_gaussian(img, sigma, &mut rng),
        }
    }
}

impl fmt::Display for Degradation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Degradation::None => write!(f, "none"),
            Degradation::Mosaic { mask, block } if *block == MOSAIC_BLOCK => write!(f, "mosaic:{mask}"),
            Degradation::Mosaic { mask, block } => write!(f, "mosaic:{mask}:{block}"),
            Degradation::Gaussian { sigma } => write!(f, "gaussian:{sigma}"),
        }
    }
}

impl FromStr for Degradation {
    type Err = Error;

    /// `none`, `mosaic:<mask>[:<block>]` or `gaussian:<sigma>`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("bad degradation spec {s:?}"));
        let parts: Vec<&str> = s.trim().split(':').collect();
        match parts.as_slice() {
            ["none"] => Ok(Degradation::None),
            ["mosaic", m] => Ok(Degradation::Mosaic { mask: m.parse().map_err(|_| bad())?, block: MOSAIC_BLOCK }),
            ["mosaic", m, b] => Ok(Degradation::Mosaic {
                mask: m.parse().map_err(|_| bad())?,
                block: b.parse().map_err(|_| bad())?,
            }),
            ["gaussian", s] => {
                let sigma: f64 = s.parse().map_err(|_| bad())?;
                if !(sigma >= 0.0) {
                    return Err(bad());
                }
                Ok(Degradation::Gaussian { sigma })
            }
            _ => Err(bad()),
        }
    }
}

impl Serialize for Degradation {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Degradation {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleMeta {
    pub format_version: u32,
    pub id: String,
    pub index: u64,
    pub pitch_deg: f64,
    pub roll_deg: f64,
    pub erp_height: usize,
    pub face_size: usize,
    pub seed: Option<u64>,
    pub config_hash: Option<String>,
    pub crc32: std::collections::BTreeMap<String, String>,
}

pub const SAMPLE_FILES: [&str; 4] = ["upright.png", "input_erp.png", "input_cube.bin", "lut_gt.bin"];

/// Writes `dir/<id>/{upright.png, input_erp.png, input_cube.bin, lut_gt.bin,
/// meta.json}`. The JSON records every other file's CRC-32.
pub fn write_sample(s: &Sample, dir: &Path, provenance: Option<(&SynthConfig, u64)>) -> Result<PathBuf> {
    let d = dir.join(&s.id);
    std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    s.upright_gt.write_png(&d.join("upright.png"))?;
    s.nonupright_erp.write_png(&d.join("input_erp.png"))?;
    let cube = d.join("input_cube.bin");
    container::write_file(&cube, &[Entry::f64("cubemap", &s.nonupright_cubemap.shape(), s.nonupright_cubemap.data.clone())])
        .map_err(|e| container_err(&cube, e))?;
    let lut = d.join("lut_gt.bin");
    let g = s.lut_gt.grid;
    container::write_file(&lut, &[Entry::f64("lut", &[3, g.height, g.width], s.lut_gt.data.clone())])
        .map_err(|e| container_err(&lut, e))?;
    let mut crc32 = std::collections::BTreeMap::new();
    for f in SAMPLE_FILES {
        crc32.insert(f.to_string(), format!("{:08x}", file_crc(&d.join(f))?));
    }
    let meta = SampleMeta {
        format_version: SAMPLE_FORMAT_VERSION,
        id: s.id.clone(),
        index: s.index,
        pitch_deg: s.angles_gt.pitch_deg,
        roll_deg: s.angles_gt.roll_deg,
        erp_height: s.upright_gt.height(),
        face_size: s.nonupright_cubemap.face_size,
        seed: provenance.map(|p| p.1),
        config_hash: provenance.map(|p| config_hash(p.0)),
        crc32,
    };
    write_json(&d.join("meta.json"), &meta)?;
    Ok(d)
}

pub fn read_meta(dir: &Path, id: &str) -> Result<SampleMeta> {
    let path = dir.join(id).join("meta.json");
    let meta: SampleMeta = read_json(&path)?;
    if meta.format_version != SAMPLE_FORMAT_VERSION {
        return Err(Error::data(
            &path,
            format!("format version {} (expected {SAMPLE_FORMAT_VERSION})", meta.format_version),
        ));
    }
    Ok(meta)
}

fn single_entry(path: &Path, name: &str, shape: &[usize]) -> Result<Vec<f64>> {
    let mut entries = container::read_file(path).map_err(|e| container_err(path, e))?;
    match entries.pop() {
        Some(e) if entries.is_empty() && e.name == name && e.shape == shape => Ok(e.data),
        _ => Err(Error::data(path, format!("expected a single {name} entry of shape {shape:?}"))),
    }
}

pub fn read_sample(dir: &Path, id: &str) -> Result<Sample> {
    let meta = read_meta(dir, id)?;
    let d = dir.join(id);
    for f in SAMPLE_FILES {
        let p = d.join(f);
        let stored = meta.crc32.get(f).ok_or_else(|| Error::data(&p, "no checksum recorded"))?;
        if format!("{:08x}", file_crc(&p)?) != *stored {
            return Err(Error::Checksum(p));
        }
    }
    let g = ErpGrid::with_height(meta.erp_height).map_err(|e| Error::data(&d, e.to_string()))?;
    let upright_gt = ErpImage::read_png(&d.join("upright.png"))?;
    let nonupright_erp = ErpImage::read_png(&d.join("input_erp.png"))?;
    for (name, img) in [("upright.png", &upright_gt), ("input_erp.png", &nonupright_erp)] {
        if img.grid != g {
            return Err(Error::data(d.join(name), "size disagrees with meta.json"));
        }
    }
    let s = meta.face_size;
    let cube = single_entry(&d.join("input_cube.bin"), "cubemap", &[6, 3, s, s])?;
    let lut = single_entry(&d.join("lut_gt.bin"), "lut", &[3, g.height, g.width])?;
    Ok(Sample {
        id: meta.id,
        index: meta.index,
        upright_gt,
        angles_gt: InclinationAngles { pitch_deg: meta.pitch_deg, roll_deg: meta.roll_deg },
        nonupright_erp,
        nonupright_cubemap: Cubemap::new(3, s, cube)?,
        lut_gt: Lut3D::new(g, lut)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub synth: SynthConfig,
    pub split: SplitSpec,
    pub config_hash: String,
    pub sources: Vec<String>,
    pub splits: Splits,
    pub degradation: Option<Degradation>,
}

/// Sorted `.png` files of a directory.
pub fn list_pngs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
        .collect();
    files.sort();
    Ok(files)
}

/// Synthesizes one sample per readable corpus image into
/// `root/<split>/<id>/` and writes `root/manifest.json`. Unreadable images
/// are logged and skipped; ids follow the sorted corpus order.
pub fn synth_dataset(images: &[PathBuf], cfg: &SynthConfig, split: &SplitSpec, root: &Path) -> Result<DatasetManifest> {
    cfg.validate()?;
    split.validate()?;
    let g = cfg.grid();
    let loaded: Vec<Option<(String, ErpImage, u64)>> = images
        .par_iter()
        .enumerate()
        .map(|(i, p)| match ErpImage::read_png(p).and_then(|img| resize_erp(&img, g)) {
            Ok(img) => Some((p.display().to_string(), img, i as u64)),
            Err(e) => {
                log::warn!("skipping {}: {e}", p.display());
                None
            }
        })
        .collect();
    let loaded: Vec<_> = loaded.into_iter().flatten().collect();
    let ids: Vec<String> = loaded.iter().map(|(_, _, i)| format!("s{i:05}")).collect();
    let splits = split_dataset(&ids, split, cfg.seed)?;
    let part_of = |id: &str| splits.named().into_iter().find(|(_, v)| v.iter().any(|x| x == id)).unwrap().0;
    loaded.par_iter().try_for_each(|(_, img, i)| -> Result<()> {
        let s = synth_sample(img, cfg, *i)?;
        write_sample(&s, &root.join(part_of(&s.id)), Some((cfg, cfg.seed)))?;
        Ok(())
    })?;
    let manifest = DatasetManifest {
        format_version: SAMPLE_FORMAT_VERSION,
        synth: *cfg,
        split: *split,
        config_hash: config_hash(&(cfg, split)),
        sources: loaded.iter().map(|(p, _, _)| p.clone()).collect(),
        splits,
        degradation: None,
    };
    write_json(&root.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

pub fn read_manifest(root: &Path) -> Result<DatasetManifest> {
    read_json(&root.join("manifest.json"))
}

/// Loads every sample of one split in manifest order.
pub fn load_split(root: &Path, split: &str) -> Result<Vec<Sample>> {
    let m = read_manifest(root)?;
    let ids = m
        .splits
        .named()
        .into_iter()
        .find(|(n, _)| *n == split)
        .ok_or_else(|| Error::Config(format!("unknown split {split:?}")))?
        .1
        .clone();
    ids.par_iter().map(|id| read_sample(&root.join(split), id)).collect()
}

/// Copies a dataset with `spec` applied to every non-upright input; the
/// cubemap is regenerated from the degraded ERP.
pub fn degrade_dataset(src: &Path, dst: &Path, spec: Degradation, seed: u64) -> Result<DatasetManifest> {
    let mut m = read_manifest(src)?;
    if src.canonicalize().ok() == dst.canonicalize().ok() {
        return Err(Error::Config("degraded copy must not overwrite its source".into()));
    }
    for (name, ids) in m.splits.named() {
        ids.par_iter().try_for_each(|id| -> Result<()> {
            let mut s = read_sample(&src.join(name), id)?;
            s.nonupright_erp = spec.apply(&s.nonupright_erp, seed, s.index)?.quantized();
            s.nonupright_cubemap = erp_to_cubemap(&s.nonupright_erp, s.nonupright_cubemap.face_size)?;
            write_sample(&s, &dst.join(name), Some((&m.synth, m.synth.seed)))?;
            Ok(())
        })?;
    }
    m.degradation = Some(spec);
    write_json(&dst.join("manifest.json"), &m)?;
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_rounding() {
        let s = SplitSpec::default();
        assert_eq!(s.sizes(100), [70, 15, 15]);
        assert_eq!(s.sizes(10), [7, 2, 1]);
        assert_eq!(s.sizes(1), [1, 0, 0]);
    }

    #[test]
    fn degradation_specs_parse() {
        assert_eq!("mosaic:64".parse::<Degradation>().unwrap(), Degradation::Mosaic { mask: 64, block: 10 });
        assert_eq!("gaussian:0.02".parse::<Degradation>().unwrap(), Degradation::Gaussian { sigma: 0.02 });
        assert!("gaussian:-1".parse::<Degradation>().is_err());
        assert!("blur:3".parse::<Degradation>().is_err());
        for d in Degradation::protocol_grid() {
            assert_eq!(d.to_string().parse::<Degradation>().unwrap(), d);
        }
    }
}
