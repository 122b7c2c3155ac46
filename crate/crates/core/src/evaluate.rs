//! Test-set evaluation: optional input degradation, gradient-free inference
//! and the aggregated angle and image reports.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dataset::{Degradation, Sample};
use crate::error::Result;
use crate::geometry::InclinationAngles;
use crate::manifest::{config_hash, write_json};
use crate::metrics::{angle_accuracy, image_metrics, AngleReport, ImageReport, DEFAULT_THRESHOLDS};
use crate::net::Model;
use crate::resample::erp_to_cubemap;

pub const RESULTS_FORMAT_VERSION: u32 = 1;

/// Per-sample outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleResult {
    pub id: String,
    pub gt: InclinationAngles,
    pub pred: InclinationAngles,
    pub image: ImageReport,
}

/// Everything an evaluation reports. Byte-identical across reruns; timings
/// are kept separately in [`Timings`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResults {
    pub format_version: u32,
    pub model_config_hash: String,
    pub checkpoint_step: u64,
    pub split: String,
    pub degradation: Degradation,
    pub degradation_seed: u64,
    pub thresholds_deg: Vec<f64>,
    pub angle: AngleReport,
    /// Rectified output vs upright ground truth.
    pub image: ImageReport,
    /// The (possibly degraded) tilted input vs upright ground truth.
    pub unrectified: ImageReport,
    /// Not computed: needs a pretrained perception network.
    pub fid: Option<f64>,
    pub samples: Vec<SampleResult>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub samples: usize,
    pub total_s: f64,
    pub inference_s: f64,
    pub per_sample_ms: f64,
}

/// Degrades a sample's inputs the way [`crate::dataset::degrade_dataset`]
/// does, using the sample index as the stream.
pub fn degrade_inputs(s: &Sample, spec: Degradation, seed: u64) -> Result<Sample> {
    if spec == Degradation::None {
        return Ok(s.clone());
    }
    let mut out = s.clone();
    out.nonupright_erp = spec.apply(&s.nonupright_erp, seed, s.index)?.quantized();
    out.nonupright_cubemap = erp_to_cubemap(&out.nonupright_erp, s.nonupright_cubemap.face_size)?;
    Ok(out)
}

pub fn evaluate_run(
    model: &mut Model,
    samples: &[Sample],
    split: &str,
    step: u64,
    spec: Degradation,
    seed: u64,
) -> Result<(EvalResults, Timings)> {
    let start = Instant::now();
    let mut inference = 0.0;
    let mut results = Vec::with_capacity(samples.len());
    let mut unrect = Vec::with_capacity(samples.len());
    for s in samples {
        let s = degrade_inputs(s, spec, seed)?;
        let t = Instant::now();
        let p = model.predict(&s)?;
        inference += t.elapsed().as_secs_f64();
        unrect.push(image_metrics(&s.nonupright_erp, &s.upright_gt)?);
        results.push(SampleResult {
            id: s.id.clone(),
            gt: s.angles_gt,
            pred: p.angles,
            image: image_metrics(&p.upright, &s.upright_gt)?,
        });
    }
    let preds: Vec<_> = results.iter().map(|r| r.pred).collect();
    let gts: Vec<_> = results.iter().map(|r| r.gt).collect();
    let images: Vec<_> = results.iter().map(|r| r.image).collect();
    let angle = angle_accuracy(&preds, &gts, &DEFAULT_THRESHOLDS)?;
    let res = EvalResults {
        format_version: RESULTS_FORMAT_VERSION,
        model_config_hash: config_hash(&model.cfg),
        checkpoint_step: step,
        split: split.to_string(),
        degradation: spec,
        degradation_seed: seed,
        thresholds_deg: DEFAULT_THRESHOLDS.to_vec(),
        angle,
        image: ImageReport::mean(&images).expect("non-empty"),
        unrectified: ImageReport::mean(&unrect).expect("non-empty"),
        fid: None,
        samples: results,
    };
    let total_s = start.elapsed().as_secs_f64();
    let timings = Timings {
        samples: samples.len(),
        total_s,
        inference_s: inference,
        per_sample_ms: 1e3 * inference / samples.len() as f64,
    };
    Ok((res, timings))
}

/// Writes `<stem>.json` and `<stem>.timings.json` into `dir`.
pub fn write_results(dir: &Path, stem: &str, res: &EvalResults, t: &Timings) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| crate::error::Error::io(dir, e))?;
    write_json(&dir.join(format!("{stem}.json")), res)?;
    write_json(&dir.join(format!("{stem}.timings.json")), t)
}
