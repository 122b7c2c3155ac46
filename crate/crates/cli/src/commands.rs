use std::path::{Path, PathBuf};
use std::time::Instant;

use panorect_core::calibration::{self, TOLERANCE_DB};
use panorect_core::dataset::{
    degrade_dataset, ground_truth_lut, list_pngs, load_split, read_manifest, synth_dataset, Degradation, DEFAULT_SEED,
};
use panorect_core::evaluate::{evaluate_run, write_results, Timings};
use panorect_core::geometry::{ErpGrid, InclinationAngles, FACE_NAMES};
use panorect_core::gradsuite::{format_table, run_suite, SuiteOptions};
use panorect_core::image::{read_png_rgb, write_png, Cubemap, ErpImage};
use panorect_core::manifest::{config_hash, write_json};
use panorect_core::net::{load_checkpoint, Model};
use panorect_core::procedural::test_image;
use panorect_core::resample::{apply_lut, cubemap_to_erp, erp_to_cubemap};
use panorect_core::run::RunConfig;
use panorect_core::train::train;
use panorect_core::{Error, Result};
use serde::Serialize;

use crate::{
    CalibrateArgs, Cli, Command, ConvertArgs, ConvertMode, DegradeArgs, EvalArgs, GradcheckArgs, RectifyArgs,
    SynthArgs, TrainArgs,
};

pub fn run(cli: &Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    match &cli.command {
        Command::Convert(a) => convert(a),
        Command::Synth(a) => synth(a, cfg),
        Command::Degrade(a) => degrade(a, &cfg),
        Command::Rectify(a) => rectify(a),
        Command::Train(a) => train_cmd(a, cfg),
        Command::Eval(a) => eval(a, &cfg),
        Command::Gradcheck(a) => gradcheck(a),
        Command::Calibrate(a) => calibrate(a),
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.to_path_buf(), source }
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(io_err(path))
}

fn required(flag: Option<PathBuf>, fallback: &Option<PathBuf>, name: &str) -> Result<PathBuf> {
    flag.or_else(|| fallback.clone())
        .ok_or_else(|| Error::Config(format!("--{name} is required (or set it under [paths] in the config)")))
}

#[derive(Serialize)]
struct ConvertManifest<'a> {
    mode: &'a str,
    input: String,
    erp_height: usize,
    erp_width: usize,
    face_size: usize,
    faces: Vec<String>,
    config_hash: String,
}

fn convert(a: &ConvertArgs) -> Result<()> {
    match a.mode {
        ConvertMode::Erp2cube => {
            let img = ErpImage::read_png(&a.input)?;
            let face = a.face_size.unwrap_or(img.height() / 2);
            let cube = erp_to_cubemap(&img, face)?;
            create_dir(&a.output)?;
            let mut faces = Vec::new();
            for (f, name) in FACE_NAMES.iter().enumerate() {
                let file = format!("{name}.png");
                write_png(&a.output.join(&file), cube.channels, face, face, cube.face(f))?;
                faces.push(file);
            }
            let m = ConvertManifest {
                mode: "erp2cube",
                input: a.input.display().to_string(),
                erp_height: img.height(),
                erp_width: img.width(),
                face_size: face,
                faces,
                config_hash: config_hash(&("erp2cube", img.height(), face)),
            };
            write_json(&a.output.join("manifest.json"), &m)?;
            println!("wrote 6 faces of {face}x{face} to {}", a.output.display());
        }
        ConvertMode::Cube2erp => {
            let mut data = Vec::new();
            let mut size = None;
            for name in FACE_NAMES {
                let path = a.input.join(format!("{name}.png"));
                let (w, h, rgb) = read_png_rgb(&path)?;
                if w != h || size.is_some_and(|s| s != w) {
                    return Err(Error::Dimension(format!("face {} is {w}x{h}; faces must be equal squares", path.display())));
                }
                size = Some(w);
                data.extend(rgb);
            }
            let face = size.expect("six faces");
            let cube = Cubemap::new(3, face, data)?;
            let grid = ErpGrid::with_height(a.height.unwrap_or(2 * face))?;
            let erp = cubemap_to_erp(&cube, grid)?;
            if let Some(dir) = a.output.parent().filter(|d| !d.as_os_str().is_empty()) {
                create_dir(dir)?;
            }
            erp.write_png(&a.output)?;
            let m = ConvertManifest {
                mode: "cube2erp",
                input: a.input.display().to_string(),
                erp_height: grid.height,
                erp_width: grid.width,
                face_size: face,
                faces: FACE_NAMES.iter().map(|n| format!("{n}.png")).collect(),
                config_hash: config_hash(&("cube2erp", grid.height, face)),
            };
            write_json(&a.output.with_extension("json"), &m)?;
            println!("wrote {}x{} panorama to {}", grid.height, grid.width, a.output.display());
        }
    }
    Ok(())
}

fn synth(a: &SynthArgs, mut cfg: RunConfig) -> Result<()> {
    if let Some(h) = a.erp_height {
        cfg.synth.erp_height = h;
    }
    if let Some(f) = a.face_size {
        cfg.synth.face_size = f;
    }
    if let Some(r) = a.angle_range {
        cfg.synth.angle_range_deg = r;
    }
    if let Some(s) = a.seed {
        cfg.synth.seed = s;
    }
    cfg.validate()?;
    let out = required(a.output.clone(), &cfg.paths.output, "output")?;
    let images = match (a.procedural, a.corpus.clone().or(cfg.paths.corpus.clone())) {
        (Some(n), _) => {
            // Procedural image i uses seed `seed + i`.
            let dir = out.join("sources");
            create_dir(&dir)?;
            (0..n)
                .map(|i| {
                    let p = dir.join(format!("procedural_{i:05}.png"));
                    test_image(cfg.synth.erp_height, cfg.synth.seed + i as u64).write_png(&p)?;
                    Ok(p)
                })
                .collect::<Result<Vec<_>>>()?
        }
        (None, Some(corpus)) => list_pngs(&corpus)?,
        (None, None) => return Err(Error::Config("give --corpus or --procedural".into())),
    };
    if images.is_empty() {
        return Err(Error::Config("corpus holds no PNG files".into()));
    }
    let m = synth_dataset(&images, &cfg.synth, &cfg.split, &out)?;
    let [tr, va, te] = [&m.splits.train, &m.splits.val, &m.splits.test].map(|v| v.len());
    println!("synthesized {} samples into {} (train {tr}, val {va}, test {te})", tr + va + te, out.display());
    Ok(())
}

fn degrade(a: &DegradeArgs, cfg: &RunConfig) -> Result<()> {
    let spec: Degradation = a.spec.parse()?;
    let src = required(a.dataset.clone(), &cfg.paths.dataset, "dataset")?;
    degrade_dataset(&src, &a.output, spec, a.seed.unwrap_or(DEFAULT_SEED))?;
    println!("wrote {spec} copy of {} to {}", src.display(), a.output.display());
    Ok(())
}

#[derive(Serialize)]
struct RectifyReport {
    input: String,
    output: String,
    mode: &'static str,
    pitch_deg: f64,
    roll_deg: f64,
    checkpoint: Option<String>,
    model_config_hash: Option<String>,
    checkpoint_step: Option<u64>,
    seed: Option<u64>,
}

fn rectify(a: &RectifyArgs) -> Result<()> {
    if let Some(dir) = a.output.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    let report = if let (Some(p), Some(r)) = (a.pitch, a.roll) {
        let angles = InclinationAngles::new(p, r)?;
        let img = ErpImage::read_png(&a.input)?;
        if angles.is_zero() {
            std::fs::copy(&a.input, &a.output).map_err(io_err(&a.output))?;
        } else {
            apply_lut(&img, &ground_truth_lut(angles, img.grid)?)?.write_png(&a.output)?;
        }
        RectifyReport {
            input: a.input.display().to_string(),
            output: a.output.display().to_string(),
            mode: "angles",
            pitch_deg: p,
            roll_deg: r,
            checkpoint: None,
            model_config_hash: None,
            checkpoint_step: None,
            seed: None,
        }
    } else {
        let ckpt = a.checkpoint.as_ref().expect("clap requires a checkpoint without angles");
        if !ckpt.exists() {
            return Err(Error::Config(format!("checkpoint {} does not exist", ckpt.display())));
        }
        let (mut model, m) = load_checkpoint(ckpt, None)?;
        let img = ErpImage::read_png(&a.input)?;
        let pred = model.predict_image(&img)?;
        pred.upright.write_png(&a.output)?;
        println!("pitch {:.3} deg, roll {:.3} deg", pred.angles.pitch_deg, pred.angles.roll_deg);
        RectifyReport {
            input: a.input.display().to_string(),
            output: a.output.display().to_string(),
            mode: "model",
            pitch_deg: pred.angles.pitch_deg,
            roll_deg: pred.angles.roll_deg,
            checkpoint: Some(ckpt.display().to_string()),
            model_config_hash: Some(m.config_hash),
            checkpoint_step: Some(m.step),
            seed: Some(m.seed),
        }
    };
    write_json(&a.output.with_extension("json"), &report)
}

#[derive(Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    config_hash: String,
    model_config_hash: String,
    seed: u64,
    dataset: String,
    samples: usize,
    steps: u64,
    final_total_loss: Option<f64>,
}

fn train_cmd(a: &TrainArgs, mut cfg: RunConfig) -> Result<()> {
    let m = &a.model;
    if let Some(s) = m.scale {
        cfg.model.scale = s.into();
    }
    if let Some(al) = m.align {
        cfg.model.align_mode = al.into();
    }
    cfg.model.use_hfm &= !m.no_hfm;
    cfg.model.use_circular_pad &= !m.no_circular_pad;
    cfg.model.use_channel_attention &= !m.no_channel_attention;
    cfg.model.use_vit &= !m.no_vit;
    if let Some(v) = a.epochs {
        cfg.train.epochs = v;
    }
    if let Some(v) = a.batch_size {
        cfg.train.batch_size = v;
    }
    if let Some(v) = a.lr {
        cfg.train.lr = v;
    }
    if a.max_steps.is_some() {
        cfg.train.max_steps = a.max_steps;
    }
    if let Some(v) = a.checkpoint_every {
        cfg.train.checkpoint_every = v;
    }
    if let Some(v) = a.seed {
        cfg.train.seed = v;
    }
    cfg.validate()?;
    let dataset = required(a.dataset.clone(), &cfg.paths.dataset, "dataset")?;
    let out = required(a.output.clone(), &cfg.paths.output, "output")?;
    cfg.paths.dataset = Some(dataset.clone());
    cfg.paths.output = Some(out.clone());
    let model_cfg = cfg.model.resolve()?;
    let grid = read_manifest(&dataset)?.synth.grid();
    if grid.height != model_cfg.erp_height {
        log::info!("samples are {}x{}; the model resamples them to height {}", grid.height, grid.width, model_cfg.erp_height);
    }
    let samples = load_split(&dataset, "train")?;
    create_dir(&out)?;
    let toml_path = out.join("run.toml");
    std::fs::write(&toml_path, cfg.to_toml()).map_err(io_err(&toml_path))?;
    let mut model = Model::new(model_cfg, cfg.train.seed)?;
    log::info!("training {} parameters on {} samples", model.param_count(), samples.len());
    let run = train(&mut model, &samples, &cfg.train, &cfg.loss, &out, a.resume)?;
    let steps = panorect_core::net::read_checkpoint_manifest(&run.checkpoint)?.step;
    let manifest = RunManifest {
        command: "train",
        config_hash: config_hash(&cfg),
        model_config_hash: config_hash(&model.cfg),
        seed: cfg.train.seed,
        dataset: dataset.display().to_string(),
        samples: samples.len(),
        steps,
        final_total_loss: run.history.last().map(|r| r.loss.total),
    };
    write_json(&out.join("run.json"), &manifest)?;
    println!("trained to step {steps}; checkpoint in {}", run.checkpoint.display());
    Ok(())
}

fn eval(a: &EvalArgs, cfg: &RunConfig) -> Result<()> {
    let dataset = required(a.dataset.clone(), &cfg.paths.dataset, "dataset")?;
    let seed = a.seed.unwrap_or(DEFAULT_SEED);
    let out = a.output.clone().unwrap_or_else(|| a.checkpoint.join("eval"));
    let (mut model, m) = load_checkpoint(&a.checkpoint, None)?;
    let specs = if a.protocol {
        let h = model.cfg.erp_height;
        if h != 256 {
            log::info!("mosaic sizes scaled by {h}/256 for {h}-row inputs");
        }
        Degradation::protocol_grid().into_iter().map(|d| d.scaled_to(h)).collect()
    } else {
        vec![a.degradation.as_deref().unwrap_or("none").parse()?]
    };
    let samples = load_split(&dataset, &a.split)?;
    if samples.is_empty() {
        return Err(Error::Config(format!("split {:?} is empty", a.split)));
    }
    let mut summary = Vec::new();
    let start = Instant::now();
    for spec in specs {
        let (res, t): (_, Timings) = evaluate_run(&mut model, &samples, &a.split, m.step, spec, seed)?;
        let stem = format!("results-{}-{}", a.split, spec.to_string().replace(':', "-"));
        write_results(&out, &stem, &res, &t)?;
        let within: Vec<String> =
            res.angle.accuracy_at.iter().map(|(d, p)| format!("<{d}°:{:.1}%", 100.0 * p)).collect();
        println!(
            "{spec:<14} mean err {:.3}° | {} | PSNR {:.2} dB (unrectified {:.2})",
            res.angle.mean_err_deg,
            within.join(" "),
            res.image.psnr_db,
            res.unrectified.psnr_db
        );
        summary.push(stem);
    }
    log::info!("evaluated {} condition(s) in {:.1} s; results in {}", summary.len(), start.elapsed().as_secs_f64(), out.display());
    Ok(())
}

fn gradcheck(a: &GradcheckArgs) -> Result<()> {
    let opts = SuiteOptions { probes_per_layer: a.probes_per_layer, seed: a.seed, include_model: !a.ops_only };
    let rows = run_suite(&opts)?;
    print!("{}", format_table(&rows));
    if let Some(p) = &a.output {
        write_json(p, &rows)?;
    }
    let failed: Vec<&str> = rows.iter().filter(|r| !r.pass).map(|r| r.name.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Error::Numeric(format!("gradient check failed for: {}", failed.join(", "))))
    }
}

fn calibrate(a: &CalibrateArgs) -> Result<()> {
    let c = calibration::calibrate()?;
    println!("round trip floor  {:.3} dB (stored {:.3})", c.t1_db, calibration::T1_DB);
    println!("tilt recovery floor {:.3} dB (stored {:.3})", c.t2_db, calibration::T2_DB);
    if let Some(p) = &a.output {
        write_json(p, &c)?;
    }
    let drift = (c.t1_db - calibration::T1_DB).abs().max((c.t2_db - calibration::T2_DB).abs());
    if drift > TOLERANCE_DB {
        return Err(Error::Numeric(format!("calibration drifted by {drift:.3} dB (tolerance {TOLERANCE_DB})")));
    }
    Ok(())
}
