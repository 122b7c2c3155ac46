//! The finite-difference gradient suite: every tensor operator, the
//! differentiable warps, the loss parts and a subsampled check of the whole
//! toy network, each against its own tolerance.

use std::collections::BTreeMap;
use std::rc::Rc;
use std::time::Instant;

use panorect_tensor::conv::{self, conv2d};
use panorect_tensor::gradcheck::{all_indices, check_gradients, GradCheck};
use panorect_tensor::nn::{self, AttentionWeights, BatchNormState};
use panorect_tensor::sample::grid_sample;
use panorect_tensor::{loss, Conv2dOpts, HorizontalWrap, PadMode, Tensor, TensorError};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{synth_sample, SynthConfig};
use crate::error::{Error, Result};
use crate::geometry::{normalize_angles, ErpGrid, InclinationAngles};
use crate::losses::{angle_loss, offset_loss, perceptual_loss, total_loss, LossWeights};
use crate::net::{model, Init, Model, ModelConfig};
use crate::procedural::test_image;
use crate::resample::cube_to_erp_table;
use crate::train::sample_loss;

/// Relative errors are taken against `max(|analytic|, |numeric|, FLOOR)`.
pub const FLOOR: f64 = 1e-7;

/// Parameter step of the full-model check. The training loss has L1, ReLU
/// and bilinear kinks; a wider step crosses enough of them to swamp the
/// comparison.
pub const MODEL_EPS: f64 = 1e-5;

/// Probes of the full-model check that miss their tolerance at
/// [`MODEL_EPS`] are measured again with this step and with [`ROUNDOFF_EPS`],
/// keeping the closer of the two. A difference that straddles a kink shrinks
/// with the step; a wrong backward pass does not.
pub const KINK_EPS: f64 = 1e-6;

/// Wider re-measurement step. For gradients near [`FLOOR`] the rounding
/// noise of the loss, divided by a small step, outweighs the gradient.
pub const ROUNDOFF_EPS: f64 = 1e-4;

/// Tolerance of the full-model check.
pub const MODEL_TOL: f64 = 1e-2;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GradRow {
    pub name: String,
    pub tolerance: f64,
    pub max_rel_err: f64,
    pub probes: usize,
    pub seconds: f64,
    pub pass: bool,
    /// The probe with the largest error.
    pub worst: String,
    /// Probes measured again at [`KINK_EPS`] and [`ROUNDOFF_EPS`].
    #[serde(default)]
    pub reprobed: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct SuiteOptions {
    /// Parameter entries probed per network layer in the full-model check.
    pub probes_per_layer: usize,
    pub seed: u64,
    pub include_model: bool,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        SuiteOptions { probes_per_layer: 50, seed: 7, include_model: true }
    }
}

fn rand_param(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::param((0..n).map(|_| rng.random_range(-scale..scale)).collect(), shape).expect("shape")
}

/// Fixed random projection to a scalar, so every output element gets its
/// own gradient weight.
fn project(y: &Tensor, seed: u64) -> Result<Tensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w: Vec<f64> = (0..y.numel()).map(|_| rng.random_range(-1.0..1.0)).collect();
    Ok(y.mul(&Tensor::from_vec(w, y.shape())?)?.sum())
}

/// Keeps samples away from integer positions and kinks.
fn off_grid(v: f64) -> f64 {
    if (v - v.round()).abs() < 0.05 { v + 0.2 } else { v }
}

struct Rows(Vec<GradRow>);

impl Rows {
    fn push(&mut self, name: &str, tolerance: f64, run: impl FnOnce() -> Result<Vec<GradCheck>>) -> Result<()> {
        self.push_labeled(name, tolerance, |i| format!("input {i}"), run)
    }

    fn push_labeled(
        &mut self,
        name: &str,
        tolerance: f64,
        label: impl Fn(usize) -> String,
        run: impl FnOnce() -> Result<Vec<GradCheck>>,
    ) -> Result<()> {
        let t = Instant::now();
        let checks = run()?;
        let max_rel_err = checks.iter().map(|c| c.max_rel_err(FLOOR)).fold(0.0, f64::max);
        let probes = checks.iter().map(|c| c.probes.len()).sum();
        let pass = max_rel_err <= tolerance;
        let worst = checks
            .iter()
            .filter_map(|c| c.worst(FLOOR))
            .max_by(|a, b| a.rel_err(FLOOR).total_cmp(&b.rel_err(FLOOR)))
            .map(|p| format!("{}[{}] analytic {:.6e} numeric {:.6e}", label(p.input), p.index, p.analytic, p.numeric))
            .unwrap_or_default();
        let seconds = t.elapsed().as_secs_f64();
        let row = GradRow { name: name.into(), tolerance, max_rel_err, probes, seconds, pass, worst, reprobed: 0 };
        log::info!("{name}: max rel err {max_rel_err:.3e} (tol {tolerance:.0e}, {probes} probes)");
        self.0.push(row);
        Ok(())
    }
}

fn op_rows(rows: &mut Rows, seed: u64) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rows.push("conv2d", 1e-6, || {
        let mut out = Vec::new();
        for (k, stride, pad, groups, mode) in [
            (3, 1, 1, 1, PadMode::CircularH),
            (3, 1, 1, 1, PadMode::Zero),
            (2, 2, 0, 1, PadMode::Zero),
            (7, 1, 3, 4, PadMode::CircularH),
            (1, 1, 0, 2, PadMode::Zero),
            (4, 4, 0, 1, PadMode::CircularH),
        ] {
            let x = rand_param(&mut rng, &[4, 8, 16], 1.0);
            let cout = if groups == 4 { 4 } else { 6 };
            let w = rand_param(&mut rng, &[cout, 4 / groups, k, k], 0.5);
            let b = rand_param(&mut rng, &[cout], 0.5);
            let opts = Conv2dOpts { stride, padding: pad, groups, pad_mode: mode };
            let inputs = [x.clone(), w.clone(), b.clone()];
            // Affine in each input, so a wide step costs no truncation error.
            out.push(check(&inputs, || project(&conv2d(&x, &w, Some(&b), opts)?, 7), 1e-3, all_indices)?);
        }
        Ok(out)
    })?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
    rows.push("linear", 1e-6, || {
        let x = rand_param(&mut rng, &[5, 7], 1.0);
        let w = rand_param(&mut rng, &[3, 7], 1.0);
        let b = rand_param(&mut rng, &[3], 1.0);
        let inputs = [x.clone(), w.clone(), b.clone()];
        Ok(vec![check(&inputs, || Ok(project_t(&nn::linear(&x, &w, Some(&b))?, 3)), 1e-3, all_indices)?])
    })?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed + 2);
    let vals: Vec<f64> = (0..40).map(|_| rng.random_range(-3.0..3.0)).map(|v: f64| if v.abs() < 0.05 { v + 0.1 } else { v }).collect();
    type Act = fn(&Tensor) -> Tensor;
    let acts: [(&str, Act, f64); 5] = [
        ("relu", nn::relu, 1e-6),
        ("gelu", nn::gelu, 1e-4),
        ("elu", nn::elu, 1e-6),
        ("sigmoid", nn::sigmoid, 1e-6),
        ("tanh", nn::tanh, 1e-6),
    ];
    for (name, f, tol) in acts {
        rows.push(name, tol, || {
            let x = Tensor::param(vals.clone(), &[5, 8])?;
            Ok(vec![check(std::slice::from_ref(&x), || Ok(project_t(&f(&x), 4)), 1e-6, all_indices)?])
        })?;
    }
    rows.push("softmax", 1e-6, || {
        let x = Tensor::param(vals.clone(), &[5, 8])?;
        Ok(vec![check(std::slice::from_ref(&x), || Ok(project_t(&nn::softmax(&x)?, 5)), 1e-6, all_indices)?])
    })?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed + 3);
    rows.push("elementwise math", 1e-6, || {
        let a = Tensor::param((0..12).map(|_| rng.random_range(0.5..2.0)).collect(), &[3, 4])?;
        let b = Tensor::param((0..4).map(|_| rng.random_range(0.5..2.0)).collect(), &[4])?;
        let inputs = [a.clone(), b.clone()];
        let f = || {
            let t = a.mul(&b)?.add(&a.sqrt())?.div(&b.exp())?;
            let u = a.atan2(&b)?.add(&a.ln())?.add(&a.sin().mul(&b.cos())?)?;
            let v = a.log10().add(&a.recip())?.sub(&b.abs())?.add(&a.square())?;
            let m = a.matmul(&b.reshape(&[4, 1])?)?.sum_axes(&[0])?.mean();
            Ok(project_t(&t.add(&u)?.add(&v)?.add(&m)?, 9))
        };
        Ok(vec![check(&inputs, f, 1e-6, all_indices)?])
    })?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed + 4);
    let x = rand_param(&mut rng, &[3, 4, 5], 2.0);
    let g = rand_param(&mut rng, &[3, 1, 1], 1.0);
    let b = rand_param(&mut rng, &[3, 1, 1], 1.0);
    let inputs = [x.clone(), g.clone(), b.clone()];
    rows.push("layer_norm", 1e-4, || {
        Ok(vec![check(&inputs, || Ok(project_t(&nn::layer_norm(&x, 0, &g, &b)?, 1)), 1e-6, all_indices)?])
    })?;
    rows.push("batch_norm", 1e-4, || {
        let f = || {
            let mut st = BatchNormState::new(3);
            Ok(project_t(&nn::batch_norm(&x, &g, &b, &mut st, true)?, 2))
        };
        Ok(vec![check(&inputs, f, 1e-6, all_indices)?])
    })?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed + 5);
    rows.push("multi_head_attention", 1e-3, || {
        let mut p = |shape: &[usize]| rand_param(&mut rng, shape, 0.5);
        let w = AttentionWeights {
            wq: p(&[12, 12]),
            bq: p(&[12]),
            wk: p(&[12, 12]),
            bk: p(&[12]),
            wv: p(&[12, 12]),
            bv: p(&[12]),
            wo: p(&[12, 12]),
            bo: p(&[12]),
        };
        let x = p(&[6, 12]);
        let inputs = [x.clone(), w.wq.clone(), w.bq.clone(), w.wk.clone(), w.wv.clone(), w.wo.clone(), w.bo.clone()];
        Ok(vec![check(&inputs, || Ok(project_t(&nn::multi_head_attention(&x, 3, &w)?.0, 8)), 1e-6, all_indices)?])
    })?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed + 6);
    rows.push("spatial rearrangements", 1e-6, || {
        let x = rand_param(&mut rng, &[8, 4, 6], 1.0);
        let y = rand_param(&mut rng, &[3, 8, 12], 1.0);
        let idx: Vec<usize> = (0..30).map(|_| rng.random_range(0..x.numel())).collect();
        let inputs = [x.clone(), y.clone()];
        let f = || {
            let a = conv::pixel_shuffle(&x, 2)?;
            let b = conv::pixel_unshuffle(&y, 2)?;
            let c = conv::nearest_upsample(&b.narrow(0, 0, 2)?, 2)?;
            let d = Tensor::concat(&[a, c], 0)?;
            let e = conv::global_avg_pool(&d)?;
            let p = conv::pad_wrap_replicate(&x, 1)?;
            let r = conv::roll_columns(&y, 5)?;
            let gth = x.reshape(&[x.numel()])?.gather(Rc::new(idx.clone()), &[30])?;
            let t = x.reshape(&[8, 24])?.t()?;
            Ok(project_t(&d, 1)
                .add(&project_t(&e, 2))?
                .add(&project_t(&p, 3))?
                .add(&project_t(&r, 4))?
                .add(&project_t(&x.permute(&[2, 0, 1])?, 5))?
                .add(&project_t(&gth, 6))?
                .add(&project_t(&t, 7))?)
        };
        Ok(vec![check(&inputs, f, 1e-6, all_indices)?])
    })?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed + 7);
    let img = rand_param(&mut rng, &[2, 6, 10], 1.0);
    let mut cv: Vec<f64> = (0..12).map(|_| off_grid(rng.random_range(-1.0..11.0))).collect();
    cv.extend((0..12).map(|_| off_grid(rng.random_range(0.2..4.8))));
    let coords = Tensor::param(cv, &[2, 3, 4])?;
    for (name, wrap) in [("grid_sample circular", HorizontalWrap::Circular), ("grid_sample clamp", HorizontalWrap::Clamp)] {
        rows.push(name, 1e-4, || {
            let inputs = [img.clone(), coords.clone()];
            Ok(vec![check(&inputs, || Ok(project_t(&grid_sample(&img, &coords, wrap)?, 2)), 1e-6, all_indices)?])
        })?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed + 8);
    rows.push("cubemap to erp table", 1e-6, || {
        let g = ErpGrid::with_height(8)?;
        let table = Rc::new(cube_to_erp_table(2, 4, g));
        let cube = rand_param(&mut rng, &[6, 2, 4, 4], 1.0);
        let f = || Ok(project_t(&cube.interp(table.clone(), &[2, 8, 16])?, 3));
        Ok(vec![check(std::slice::from_ref(&cube), f, 1e-6, all_indices)?])
    })?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed + 9);
    let a = rand_param(&mut rng, &[20], 2.0);
    let b = rand_param(&mut rng, &[20], 2.0).detach();
    for (name, f) in [
        ("l1", Box::new(|| loss::l1(&a, &b)) as Box<dyn Fn() -> panorect_tensor::Result<Tensor>>),
        ("mse", Box::new(|| loss::mse(&a, &b))),
        ("smooth_l1", Box::new(|| loss::smooth_l1(&a, &b, 1.0))),
    ] {
        rows.push(name, 1e-6, || Ok(vec![check(std::slice::from_ref(&a), || Ok(f()?), 1e-6, all_indices)?]))?;
    }
    Ok(())
}

/// Central differences on a closure returning this crate's results.
fn check(
    inputs: &[Tensor],
    f: impl Fn() -> Result<Tensor>,
    eps: f64,
    select: impl FnMut(usize, usize) -> Vec<usize>,
) -> Result<GradCheck> {
    let lifted = || f().map_err(|e| TensorError::Invalid { op: "gradsuite", detail: e.to_string() });
    Ok(check_gradients(inputs, lifted, eps, select)?)
}

fn project_t(y: &Tensor, seed: u64) -> Tensor {
    project(y, seed).expect("projection shape")
}

/// Random unit directions, kept clear of the poles and the ±180° seam.
fn random_lut(rng: &mut ChaCha8Rng, g: ErpGrid) -> Result<Tensor> {
    let n = g.pixels();
    let mut data = vec![0.0; 3 * n];
    for i in 0..n {
        let lon: f64 = rng.random_range(-3.0..3.0);
        let lat: f64 = rng.random_range(-1.2..1.2);
        let r: f64 = rng.random_range(0.8..1.2);
        data[i] = r * lat.cos() * lon.cos();
        data[n + i] = r * lat.cos() * lon.sin();
        data[2 * n + i] = r * lat.sin();
    }
    Ok(Tensor::param(data, &[3, g.height, g.width])?)
}

fn warp_rows(rows: &mut Rows, seed: u64) -> Result<()> {
    let g = ErpGrid::with_height(8)?;
    let img = test_image(8, seed);
    let input = Tensor::from_vec(img.data.clone(), &[3, g.height, g.width])?;
    let gt = Tensor::from_vec(test_image(8, seed + 1).data, &[3, g.height, g.width])?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lut = random_lut(&mut rng, g)?;

    rows.push("warp by LUT (LUT gradient)", 1e-3, || {
        Ok(vec![check(std::slice::from_ref(&lut), || Ok(project_t(&crate::warp::warp_by_lut(&input, &lut)?, 5)), 1e-6, all_indices)?])
    })?;

    let big = test_image(32, seed);
    let big_in = Tensor::from_vec(big.data.clone(), &big.shape())?;
    let big_gt = Tensor::from_vec(test_image(32, seed + 1).data, &big.shape())?;
    let n = normalize_angles(InclinationAngles::new(10.0, 5.0)?)?;
    let angles = Tensor::param(vec![n.pitch, n.roll], &[1, 2])?;
    rows.push("tilt warp image term (angle gradient)", 1e-2, || {
        let f = || Ok(loss::l1(&crate::warp::rotation_warp(&big_in, &angles)?, &big_gt)?);
        Ok(vec![check(std::slice::from_ref(&angles), f, 1e-6, all_indices)?])
    })?;

    let w = LossWeights::default();
    let n2 = normalize_angles(InclinationAngles::new(-20.0, 12.0)?)?;
    let a_gt = Tensor::from_vec(vec![n2.pitch, n2.roll], &[1, 2])?;
    let lut_gt = crate::warp::rotation_lut(&a_gt, g)?;
    let img_pred = Tensor::param(img.data.iter().map(|v| (v + 0.1).min(1.0)).collect(), &[3, g.height, g.width])?;
    rows.push("angle loss", 1e-2, || {
        let f = || angle_loss(&angles, &a_gt, &input, &gt);
        Ok(vec![check(std::slice::from_ref(&angles), f, 1e-6, all_indices)?])
    })?;
    rows.push("offset loss", 1e-3, || {
        let f = || offset_loss(&lut, &lut_gt, &input, &gt);
        Ok(vec![check(std::slice::from_ref(&lut), f, 1e-6, all_indices)?])
    })?;
    rows.push("perceptual loss", 1e-4, || {
        let f = || perceptual_loss(&img_pred, &gt, &w, None);
        Ok(vec![check(std::slice::from_ref(&img_pred), f, 1e-6, all_indices)?])
    })?;
    rows.push("total loss", 1e-2, || {
        let inputs = [angles.clone(), lut.clone(), img_pred.clone()];
        let f = || {
            let a = angle_loss(&angles, &a_gt, &input, &gt)?;
            let o = offset_loss(&lut, &lut_gt, &input, &gt)?;
            let p = perceptual_loss(&img_pred, &gt, &w, None)?;
            Ok(total_loss(a, o, p, &w)?.total)
        };
        Ok(vec![check(&inputs, f, 1e-6, all_indices)?])
    })?;
    Ok(())
}

/// The toy network with every parameter moved off its initial constant, so
/// no branch is switched off by a zero gate.
pub fn perturbed_toy(seed: u64) -> Result<Model> {
    let m = Model::new(ModelConfig::toy(), seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for spec in m.specs.clone() {
        if matches!(spec.init, Init::Zeros | Init::Ones) {
            let t = &m.params.tensors[&spec.name];
            let v: Vec<f64> = t.to_vec().iter().map(|x| x + rng.random_range(-0.2..0.2)).collect();
            t.set_data(&v);
        }
    }
    Ok(m)
}

fn model_rows(rows: &mut Rows, opts: &SuiteOptions) -> Result<()> {
    let m = perturbed_toy(opts.seed)?;
    let cfg = m.cfg.clone();
    let inputs = m.parameters();
    let names = m.params.names.clone();
    let numel: Vec<usize> = inputs.iter().map(Tensor::numel).collect();
    let cell = std::cell::RefCell::new(m);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed + 100);

    let f4 = rand_param(&mut rng, &[cfg.cnn[4], 2, 4], 1.0);
    rows.push("angle head (F4 gradient)", 1e-3, || {
        let f = || cell.borrow_mut().with_flow(true, |fl, cfg| Ok(project_t(&model::angle_head(fl, &f4, cfg.cnn[4])?, 11)));
        Ok(vec![check(std::slice::from_ref(&f4), f, 1e-6, all_indices)?])
    })?;

    let synth = SynthConfig { erp_height: cfg.erp_height, face_size: cfg.face_size, angle_range_deg: 30.0, seed: opts.seed };
    let sample_img = test_image(cfg.erp_height, opts.seed);
    let s = synth_sample(&sample_img, &synth, 0)?;
    let w = LossWeights::default();

    // Layers are parameter names with the final component removed.
    let mut layers: BTreeMap<String, Vec<(usize, usize)>> = BTreeMap::new();
    for (ti, name) in names.iter().enumerate() {
        let layer = name.rsplit_once('.').map_or(name.as_str(), |p| p.0).to_string();
        layers.entry(layer).or_default().extend((0..numel[ti]).map(|i| (ti, i)));
    }
    let mut chosen: Vec<Vec<usize>> = vec![Vec::new(); names.len()];
    for entries in layers.values() {
        let k = opts.probes_per_layer.min(entries.len());
        for j in sample(&mut rng, entries.len(), k) {
            let (ti, i) = entries[j];
            chosen[ti].push(i);
        }
    }
    for c in &mut chosen {
        c.sort_unstable();
    }
    let name = format!("full toy model ({} per layer, {} layers)", opts.probes_per_layer, layers.len());
    let mut reprobed = 0;
    rows.push_labeled(&name, MODEL_TOL, |i| names[i].clone(), || {
        let f = || {
            let mut m = cell.borrow_mut();
            Ok(sample_loss(&mut m, &s, &w, None, true)?.total)
        };
        let mut first = check(&inputs, f, MODEL_EPS, |ti, _| chosen[ti].clone())?;
        let mut missed: Vec<Vec<usize>> = vec![Vec::new(); inputs.len()];
        first.probes.retain(|p| {
            let miss = p.rel_err(FLOOR) > MODEL_TOL;
            if miss {
                missed[p.input].push(p.index);
            }
            !miss
        });
        reprobed = missed.iter().map(Vec::len).sum();
        if reprobed == 0 {
            return Ok(vec![first]);
        }
        log::info!("re-measuring {reprobed} probes at steps {KINK_EPS:e} and {ROUNDOFF_EPS:e}");
        let narrow = check(&inputs, f, KINK_EPS, |ti, _| missed[ti].clone())?;
        let wide = check(&inputs, f, ROUNDOFF_EPS, |ti, _| missed[ti].clone())?;
        let closer = narrow
            .probes
            .into_iter()
            .zip(wide.probes)
            .map(|(n, w)| if w.rel_err(FLOOR) < n.rel_err(FLOOR) { w } else { n })
            .collect();
        Ok(vec![first, GradCheck { probes: closer }])
    })?;
    rows.0.last_mut().expect("model row").reprobed = reprobed;
    Ok(())
}

/// Runs every row. Errors only on failures to evaluate; tolerance misses are
/// reported in the rows.
pub fn run_suite(opts: &SuiteOptions) -> Result<Vec<GradRow>> {
    let mut rows = Rows(Vec::new());
    op_rows(&mut rows, opts.seed)?;
    warp_rows(&mut rows, opts.seed)?;
    if opts.include_model {
        model_rows(&mut rows, opts)?;
    }
    if rows.0.iter().any(|r| !r.max_rel_err.is_finite()) {
        return Err(Error::Numeric("non-finite gradient in the suite".into()));
    }
    Ok(rows.0)
}

/// Fixed-width pass/fail table.
pub fn format_table(rows: &[GradRow]) -> String {
    let mut out = format!("{:<48} {:>8} {:>11} {:>7} {:>8}  result\n", "check", "tol", "max rel err", "probes", "seconds");
    for r in rows {
        out.push_str(&format!(
            "{:<48} {:>8.0e} {:>11.3e} {:>7} {:>8.2}  {}\n",
            r.name,
            r.tolerance,
            r.max_rel_err,
            r.probes,
            r.seconds,
            if r.pass { "pass" } else { "FAIL" }
        ));
        if r.reprobed > 0 {
            out.push_str(&format!("    {} probe(s) re-measured at steps {KINK_EPS:e} and {ROUNDOFF_EPS:e}\n", r.reprobed));
        }
        if !r.pass {
            out.push_str(&format!("    worst: {}\n", r.worst));
        }
    }
    out
}
