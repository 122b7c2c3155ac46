//! The dual-stream rectification network.

pub mod config;
pub mod flow;
pub mod model;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use panorect_tensor::container::{self, Entry};
use panorect_tensor::nn::BatchNormState;
use panorect_tensor::{no_grad, Tensor};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use config::{AlignMode, ModelConfig, Scale, VitConfig};
pub use flow::{Consts, Flow, Init, ParamSpec, ParamStore, ShapeFlow, TensorFlow};
pub use model::Outputs;

use crate::dataset::{resize_erp, seeded_rng, stream, Sample};
use crate::resample::erp_to_cubemap;
use crate::error::{Error, Result};
use crate::geometry::{denormalize_angles, InclinationAngles, NormalizedAngles};
use crate::image::{ErpImage, Lut3D};
use crate::manifest::{config_hash, container_err, file_crc, read_json, write_json};

/// Parameters, batch-norm sites and checked shapes of one configuration,
/// obtained by a shape-only pass.
pub fn plan(cfg: &ModelConfig) -> Result<ShapeFlow> {
    cfg.validate()?;
    let g = cfg.grid();
    let s = cfg.face_size;
    let mut f = ShapeFlow::default();
    model::forward(&mut f, cfg, &vec![3, g.height, g.width], &vec![6, 3, s, s])?;
    Ok(f)
}

fn init_values(spec: &ParamSpec, rng: &mut impl Rng) -> Vec<f64> {
    let n: usize = spec.shape.iter().product();
    match spec.init {
        Init::Zeros => vec![0.0; n],
        Init::Ones => vec![1.0; n],
        Init::FanIn(fan) => {
            let b = 1.0 / (fan.max(1) as f64).sqrt();
            (0..n).map(|_| rng.random_range(-b..=b)).collect()
        }
        Init::Normal(std) => {
            let d = Normal::new(0.0, std).expect("positive std");
            (0..n).map(|_| d.sample(rng)).collect()
        }
    }
}

/// A network instance: configuration, weights and batch-norm statistics.
pub struct Model {
    pub cfg: ModelConfig,
    pub params: ParamStore,
    pub bn: BTreeMap<String, BatchNormState>,
    pub consts: Consts,
    pub specs: Vec<ParamSpec>,
}

/// Inference result for one sample.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub angles_norm: NormalizedAngles,
    pub angles: InclinationAngles,
    pub lut: Lut3D,
    pub upright: ErpImage,
}

pub fn image_tensor(img: &ErpImage) -> Tensor {
    Tensor::from_vec(img.data.clone(), &img.shape()).expect("image shape")
}

impl Model {
    /// Allocates every parameter in wiring order from the seeded init stream.
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<Model> {
        let p = plan(&cfg)?;
        let mut rng = seeded_rng(seed, stream::INIT, 0);
        let mut params = ParamStore::default();
        for spec in &p.params {
            params.insert(&spec.name, Tensor::param(init_values(spec, &mut rng), &spec.shape)?);
        }
        let bn = p.batch_norms.iter().map(|(n, c)| (n.clone(), BatchNormState::new(*c))).collect();
        Ok(Model { cfg, params, bn, consts: Consts::default(), specs: p.params })
    }

    pub fn param_count(&self) -> usize {
        self.params.count()
    }

    /// Parameters in wiring order, the order the optimizer state follows.
    pub fn parameters(&self) -> Vec<Tensor> {
        self.params.ordered()
    }

    /// Overwrites one parameter's values (shape must match).
    pub fn set_param(&mut self, name: &str, values: &[f64]) -> Result<()> {
        let t = self.params.get(name).ok_or_else(|| Error::Config(format!("no parameter {name}")))?;
        if t.numel() != values.len() {
            return Err(Error::Dimension(format!("{name}: {} values for {:?}", values.len(), t.shape())));
        }
        t.set_data(values);
        Ok(())
    }

    pub fn forward(&mut self, erp: &Tensor, cube: &Tensor, train: bool) -> Result<Outputs<Tensor>> {
        let mut f = TensorFlow { params: &self.params, bn: &mut self.bn, train, consts: &self.consts };
        model::forward(&mut f, &self.cfg, erp, cube)
    }

    /// Runs any piece of the wiring on this model's weights.
    pub fn with_flow<T>(&mut self, train: bool, body: impl FnOnce(&mut TensorFlow<'_>, &ModelConfig) -> Result<T>) -> Result<T> {
        let mut f = TensorFlow { params: &self.params, bn: &mut self.bn, train, consts: &self.consts };
        body(&mut f, &self.cfg)
    }

    pub fn sample_inputs(&self, s: &Sample) -> Result<(Tensor, Tensor)> {
        let g = self.cfg.grid();
        if s.nonupright_erp.grid != g || s.nonupright_cubemap.face_size != self.cfg.face_size {
            return Err(Error::Dimension(format!(
                "sample {} is {}×{} / faces {}, model expects {}×{} / faces {}",
                s.id,
                s.nonupright_erp.height(),
                s.nonupright_erp.width(),
                s.nonupright_cubemap.face_size,
                g.height,
                g.width,
                self.cfg.face_size
            )));
        }
        let cube = Tensor::from_vec(s.nonupright_cubemap.data.clone(), &s.nonupright_cubemap.shape())?;
        Ok((image_tensor(&s.nonupright_erp), cube))
    }

    /// Gradient-free inference in evaluation mode.
    pub fn predict(&mut self, s: &Sample) -> Result<Prediction> {
        let (erp, cube) = self.sample_inputs(s)?;
        self.predict_tensors(&erp, &cube)
    }

    /// Inference on a bare panorama: resized to the model grid, cubemap
    /// derived from it.
    pub fn predict_image(&mut self, img: &ErpImage) -> Result<Prediction> {
        let img = resize_erp(img, self.cfg.grid())?;
        let cm = erp_to_cubemap(&img, self.cfg.face_size)?;
        let shape = cm.shape();
        let cube = Tensor::from_vec(cm.data, &shape)?;
        self.predict_tensors(&image_tensor(&img), &cube)
    }

    fn predict_tensors(&mut self, erp: &Tensor, cube: &Tensor) -> Result<Prediction> {
        let _guard = no_grad();
        let out = self.forward(erp, cube, false)?;
        let a = out.angles_n.to_vec();
        let angles_norm = NormalizedAngles { pitch: a[0], roll: a[1] };
        let g = self.cfg.grid();
        Ok(Prediction {
            angles_norm,
            angles: denormalize_angles(angles_norm)?,
            lut: Lut3D::new(g, out.lut.to_vec())?,
            upright: ErpImage::new(3, g, out.upright.to_vec())?,
        })
    }

    pub fn entries(&self) -> Vec<Entry> {
        let mut out: Vec<Entry> =
            self.params.names.iter().map(|n| Entry::f64(n.clone(), self.params.tensors[n].shape(), self.params.tensors[n].to_vec())).collect();
        for (n, st) in &self.bn {
            let c = st.running_mean.len();
            out.push(Entry::f64(format!("bn:{n}:mean"), &[c], st.running_mean.clone()));
            out.push(Entry::f64(format!("bn:{n}:var"), &[c], st.running_var.clone()));
        }
        out
    }

    /// Loads weights and statistics; every planned entry must be present with
    /// its planned shape.
    pub fn load_entries(&mut self, entries: &[Entry], origin: &Path) -> Result<()> {
        let by_name: BTreeMap<&str, &Entry> = entries.iter().map(|e| (e.name.as_str(), e)).collect();
        let fetch = |name: &str, shape: &[usize]| -> Result<Vec<f64>> {
            let e = by_name.get(name).ok_or_else(|| Error::data(origin, format!("missing entry {name}")))?;
            if e.shape != shape {
                return Err(Error::data(origin, format!("{name} stored as {:?}, expected {shape:?}", e.shape)));
            }
            Ok(e.data.clone())
        };
        for spec in &self.specs {
            self.params.tensors[&spec.name].set_data(&fetch(&spec.name, &spec.shape)?);
        }
        for (n, st) in self.bn.iter_mut() {
            let c = st.running_mean.len();
            st.running_mean = fetch(&format!("bn:{n}:mean"), &[c])?;
            st.running_var = fetch(&format!("bn:{n}:var"), &[c])?;
        }
        Ok(())
    }
}

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;
pub const CHECKPOINT_PARAMS: &str = "params.bin";
pub const CHECKPOINT_MANIFEST: &str = "checkpoint.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointManifest {
    pub format_version: u32,
    pub config: ModelConfig,
    pub config_hash: String,
    pub step: u64,
    pub seed: u64,
    pub param_count: usize,
    /// Hex CRC-32 of each binary file in the checkpoint directory.
    pub crc32: BTreeMap<String, String>,
}

/// Writes `params.bin` plus `checkpoint.json` (and any `extra` containers)
/// into `dir`.
pub fn save_checkpoint(model: &Model, dir: &Path, step: u64, seed: u64, extra: &[(&str, Vec<Entry>)]) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut crc32 = BTreeMap::new();
    let files = std::iter::once((CHECKPOINT_PARAMS, model.entries())).chain(extra.iter().cloned());
    for (file, entries) in files {
        let path = dir.join(file);
        container::write_file(&path, &entries).map_err(|e| container_err(&path, e))?;
        crc32.insert(file.to_string(), format!("{:08x}", file_crc(&path)?));
    }
    let manifest = CheckpointManifest {
        format_version: CHECKPOINT_FORMAT_VERSION,
        config: model.cfg.clone(),
        config_hash: config_hash(&model.cfg),
        step,
        seed,
        param_count: model.param_count(),
        crc32,
    };
    let path = dir.join(CHECKPOINT_MANIFEST);
    write_json(&path, &manifest)?;
    Ok(path)
}

pub fn read_checkpoint_manifest(dir: &Path) -> Result<CheckpointManifest> {
    let path = dir.join(CHECKPOINT_MANIFEST);
    let m: CheckpointManifest = read_json(&path)?;
    if m.format_version != CHECKPOINT_FORMAT_VERSION {
        return Err(Error::data(&path, format!("unsupported checkpoint version {}", m.format_version)));
    }
    if config_hash(&m.config) != m.config_hash {
        return Err(Error::data(&path, "config hash does not match the recorded config"));
    }
    Ok(m)
}

/// Reads a checkpoint container, verifying its recorded CRC first.
pub fn read_checkpoint_file(dir: &Path, m: &CheckpointManifest, file: &str) -> Result<Vec<Entry>> {
    let path = dir.join(file);
    let want = m.crc32.get(file).ok_or_else(|| Error::data(dir, format!("{file} not listed in manifest")))?;
    if &format!("{:08x}", file_crc(&path)?) != want {
        return Err(Error::Checksum(path));
    }
    container::read_file(&path).map_err(|e| container_err(&path, e))
}

/// Rebuilds the model a checkpoint was written from. With `expect`, the
/// stored configuration must hash identically.
pub fn load_checkpoint(dir: &Path, expect: Option<&ModelConfig>) -> Result<(Model, CheckpointManifest)> {
    let m = read_checkpoint_manifest(dir)?;
    if let Some(cfg) = expect {
        let want = config_hash(cfg);
        if want != m.config_hash {
            return Err(Error::Config(format!(
                "checkpoint config hash {} does not match requested {want}",
                m.config_hash
            )));
        }
    }
    let entries = read_checkpoint_file(dir, &m, CHECKPOINT_PARAMS)?;
    let mut model = Model::new(m.config.clone(), m.seed)?;
    model.load_entries(&entries, &dir.join(CHECKPOINT_PARAMS))?;
    Ok((model, m))
}
