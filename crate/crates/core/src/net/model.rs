//! Network wiring, written once against [`Flow`].

use panorect_tensor::{Conv2dOpts, PadMode};

use super::config::{AlignMode, ModelConfig};
use super::flow::{Binary, Flow, Init, Unary};
use crate::error::{Error, Result};

/// One convolution layer: `name.weight` and, with `bias`, `name.bias`.
#[derive(Debug, Clone, Copy)]
pub struct ConvSpec {
    pub cin: usize,
    pub cout: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub groups: usize,
    pub bias: bool,
}

impl ConvSpec {
    /// Stride 1, "same" padding.
    pub fn same(cin: usize, cout: usize, kernel: usize) -> Self {
        ConvSpec { cin, cout, kernel, stride: 1, padding: kernel / 2, groups: 1, bias: true }
    }

    /// Non-overlapping `k×k` windows.
    pub fn strided(cin: usize, cout: usize, k: usize) -> Self {
        ConvSpec { cin, cout, kernel: k, stride: k, padding: 0, groups: 1, bias: true }
    }

    pub fn fan_in(&self) -> usize {
        self.cin / self.groups * self.kernel * self.kernel
    }
}

pub fn pad_mode(cfg: &ModelConfig) -> PadMode {
    if cfg.use_circular_pad {
        PadMode::CircularH
    } else {
        PadMode::Zero
    }
}

pub fn conv<F: Flow>(f: &mut F, name: &str, x: &F::V, s: ConvSpec, mode: PadMode) -> Result<F::V> {
    let fan = Init::FanIn(s.fan_in());
    let w = f.param(&format!("{name}.weight"), &[s.cout, s.cin / s.groups, s.kernel, s.kernel], fan)?;
    let b = if s.bias { Some(f.param(&format!("{name}.bias"), &[s.cout], fan)?) } else { None };
    let opts = Conv2dOpts { stride: s.stride, padding: s.padding, groups: s.groups, pad_mode: mode };
    f.conv(x, &w, b.as_ref(), opts)
}

pub fn linear<F: Flow>(f: &mut F, name: &str, x: &F::V, din: usize, dout: usize) -> Result<F::V> {
    let fan = Init::FanIn(din);
    let w = f.param(&format!("{name}.weight"), &[dout, din], fan)?;
    let b = f.param(&format!("{name}.bias"), &[dout], fan)?;
    f.linear(x, &w, Some(&b))
}

/// Layer norm over the channel axis of a `C×H×W` map.
pub fn channel_ln<F: Flow>(f: &mut F, name: &str, x: &F::V, c: usize) -> Result<F::V> {
    let g = f.param(&format!("{name}.gamma"), &[c, 1, 1], Init::Ones)?;
    let b = f.param(&format!("{name}.beta"), &[c, 1, 1], Init::Zeros)?;
    f.layer_norm(x, 0, &g, &b)
}

/// Layer norm over the feature axis of `N×D` tokens.
pub fn token_ln<F: Flow>(f: &mut F, name: &str, x: &F::V, d: usize) -> Result<F::V> {
    let g = f.param(&format!("{name}.gamma"), &[d], Init::Ones)?;
    let b = f.param(&format!("{name}.beta"), &[d], Init::Zeros)?;
    f.layer_norm(x, 1, &g, &b)
}

fn batch_norm<F: Flow>(f: &mut F, name: &str, x: &F::V, c: usize) -> Result<F::V> {
    let g = f.param(&format!("{name}.gamma"), &[c, 1, 1], Init::Ones)?;
    let b = f.param(&format!("{name}.beta"), &[c, 1, 1], Init::Zeros)?;
    f.batch_norm(name, x, &g, &b)
}

/// `x + γ·conv1×1(x − blur(x))` with per-channel `γ` starting at zero.
pub fn hf_enhance<F: Flow>(f: &mut F, name: &str, x: &F::V, c: usize) -> Result<F::V> {
    let blurred = f.box_blur(x)?;
    let high = f.binary(x, &blurred, Binary::Sub)?;
    let proj = conv(f, &format!("{name}.proj"), &high, ConvSpec { bias: false, ..ConvSpec::same(c, c, 1) }, PadMode::Zero)?;
    let gamma = f.param(&format!("{name}.gamma"), &[c, 1, 1], Init::Zeros)?;
    let scaled = f.binary(&proj, &gamma, Binary::Mul)?;
    f.binary(x, &scaled, Binary::Add)
}

/// Depthwise 7×7, layer norm, inverted bottleneck; added to the (optionally
/// high-frequency enhanced) input.
pub fn hfconv_block<F: Flow>(f: &mut F, cfg: &ModelConfig, name: &str, x: &F::V, c: usize) -> Result<F::V> {
    let mode = pad_mode(cfg);
    let dw = conv(f, &format!("{name}.dw"), x, ConvSpec { groups: c, ..ConvSpec::same(c, c, 7) }, mode)?;
    let t = channel_ln(f, &format!("{name}.ln"), &dw, c)?;
    let t = conv(f, &format!("{name}.pw1"), &t, ConvSpec::same(c, 4 * c, 1), mode)?;
    let t = f.unary(&t, Unary::Gelu);
    let t = conv(f, &format!("{name}.pw2"), &t, ConvSpec::same(4 * c, c, 1), mode)?;
    let base = if cfg.use_hfm { hf_enhance(f, &format!("{name}.hf"), x, c)? } else { x.clone() };
    f.binary(&base, &t, Binary::Add)
}

/// Stem plus four stages: `[F0, F1, F2, F3, F4]`.
pub fn local_encoder<F: Flow>(f: &mut F, cfg: &ModelConfig, erp: &F::V) -> Result<Vec<F::V>> {
    let g = cfg.grid();
    f.check(erp, &[3, g.height, g.width], "input erp")?;
    let mode = pad_mode(cfg);
    let c = cfg.cnn;
    let stem = conv(f, "enc.stem", erp, ConvSpec::strided(3, c[0], 4), mode)?;
    let mut x = channel_ln(f, "enc.stem_ln", &stem, c[0])?;
    let mut feats = vec![x.clone()];
    for s in 1..5 {
        let name = format!("enc.s{s}");
        if s > 1 {
            let t = channel_ln(f, &format!("{name}.down_ln"), &x, c[s - 1])?;
            x = conv(f, &format!("{name}.down"), &t, ConvSpec::strided(c[s - 1], c[s], 2), mode)?;
        }
        x = hfconv_block(f, cfg, &format!("{name}.blk"), &x, c[s])?;
        feats.push(x.clone());
    }
    for (s, v) in feats.iter().enumerate() {
        let (h, w) = cfg.stage_hw(s + 1);
        f.check(v, &[c[s], h, w], &format!("local F{s}"))?;
    }
    Ok(feats)
}

/// Pooled `F4` → two sigmoid outputs, the normalized `[pitch, roll]`.
pub fn angle_head<F: Flow>(f: &mut F, f4: &F::V, c: usize) -> Result<F::V> {
    let pooled = f.avg_pool(f4)?;
    let flat = f.reshape(&pooled, &[1, c])?;
    let logits = linear(f, "head.fc", &flat, c, 2)?;
    Ok(f.unary(&logits, Unary::Sigmoid))
}

/// Flattened cube patches → embedded tokens plus position embeddings.
pub fn patch_embed<F: Flow>(f: &mut F, cfg: &ModelConfig, cube: &F::V) -> Result<F::V> {
    let v = &cfg.vit;
    let s = cfg.face_size;
    f.check(cube, &[6, 3, s, s], "input cubemap")?;
    let patches = f.patchify(cube, v.patch)?;
    let tokens = linear(f, "vit.embed", &patches, v.patch * v.patch * 3, v.embed)?;
    let pos = f.param("vit.pos", &[cfg.n_tokens(), v.embed], Init::Normal(0.02))?;
    let out = f.binary(&tokens, &pos, Binary::Add)?;
    f.check(&out, &[cfg.n_tokens(), v.embed], "patch tokens")?;
    Ok(out)
}

/// Pre-norm encoder blocks; returns the outputs of every block (index 0 is
/// block 1).
pub fn vit_encode<F: Flow>(f: &mut F, cfg: &ModelConfig, tokens: &F::V) -> Result<Vec<F::V>> {
    let v = &cfg.vit;
    let d = v.embed;
    let mut x = tokens.clone();
    let mut outs = Vec::with_capacity(v.blocks);
    for b in 1..=v.blocks {
        let name = format!("vit.b{b}");
        let t = token_ln(f, &format!("{name}.ln1"), &x, d)?;
        let mut w = Vec::with_capacity(8);
        for p in ["q", "k", "v", "o"] {
            let fan = Init::FanIn(d);
            w.push(f.param(&format!("{name}.attn.{p}.weight"), &[d, d], fan)?);
            w.push(f.param(&format!("{name}.attn.{p}.bias"), &[d], fan)?);
        }
        let w: [F::V; 8] = w.try_into().unwrap_or_else(|_| unreachable!());
        let a = f.attention(&t, v.heads, &w)?;
        x = f.binary(&x, &a, Binary::Add)?;
        let t = token_ln(f, &format!("{name}.ln2"), &x, d)?;
        let t = linear(f, &format!("{name}.fc1"), &t, d, v.ffn)?;
        let t = f.unary(&t, Unary::Gelu);
        let t = linear(f, &format!("{name}.fc2"), &t, v.ffn, d)?;
        x = f.binary(&x, &t, Binary::Add)?;
        f.check(&x, &[cfg.n_tokens(), d], &format!("vit block {b}"))?;
        outs.push(x.clone());
    }
    Ok(outs)
}

/// Token axis projected onto the `H/16 × W/16` grid, then the per-stage
/// channel/resolution chain.
pub fn align_implicit<F: Flow>(f: &mut F, cfg: &ModelConfig, stage: usize, tap: &F::V) -> Result<F::V> {
    let g = cfg.grid();
    let d = cfg.vit.embed;
    let (gh, gw) = (g.height / 16, g.width / 16);
    let name = format!("align.s{stage}");
    let t = f.transpose(tap)?;
    let t = linear(f, &format!("{name}.tok"), &t, cfg.n_tokens(), gh * gw)?;
    let x = f.reshape(&t, &[d, gh, gw])?;
    f.check(&x, &[d, gh, gw], &format!("implicit grid s{stage}"))?;
    let c = cfg.cnn[stage - 1];
    let mode = pad_mode(cfg);
    let c1 = |f: &mut F, i: usize, x: &F::V, cin: usize, cout: usize| {
        conv(f, &format!("{name}.c{i}"), x, ConvSpec::same(cin, cout, 1), mode)
    };
    match stage {
        1 | 2 => {
            let x = c1(f, 1, &x, d, 4 * c)?;
            let x = f.pixel_shuffle(&x, 2)?;
            let x = c1(f, 2, &x, c, 4 * c)?;
            f.pixel_shuffle(&x, 2)
        }
        3 => {
            let x = c1(f, 1, &x, d, 4 * c)?;
            let x = f.pixel_shuffle(&x, 2)?;
            c1(f, 2, &x, c, c)
        }
        4 => c1(f, 1, &x, d, c),
        5 => conv(f, &format!("{name}.c1"), &x, ConvSpec::strided(d, c, 2), mode),
        _ => Err(Error::Config(format!("no fusion stage {stage}"))),
    }
}

/// Tokens read back as cube patches and reprojected to a `3×H×W` ERP map.
pub fn explicit_erp<F: Flow>(f: &mut F, cfg: &ModelConfig, tap: &F::V) -> Result<F::V> {
    let cube = f.unpatchify(tap, cfg.vit.patch, cfg.face_size)?;
    let g = cfg.grid();
    let erp = f.cub2erp(&cube, g)?;
    f.check(&erp, &[3, g.height, g.width], "explicit erp")?;
    Ok(erp)
}

/// Unshuffle factors `(f1, f2)` with `f1·f2` the stage stride.
pub fn explicit_factors(stride: usize) -> (usize, usize) {
    match stride {
        4 => (2, 2),
        8 => (4, 2),
        16 => (8, 2),
        _ => (8, 4),
    }
}

pub fn align_explicit<F: Flow>(f: &mut F, cfg: &ModelConfig, stage: usize, tap: &F::V) -> Result<F::V> {
    let erp = explicit_erp(f, cfg, tap)?;
    let (f1, f2) = explicit_factors(cfg.stage_stride(stage));
    let c = cfg.cnn[stage - 1];
    let x = f.pixel_unshuffle(&erp, f1)?;
    let spec = ConvSpec::same(3 * f1 * f1, c / (f2 * f2), 1);
    let x = conv(f, &format!("align.s{stage}.c1"), &x, spec, pad_mode(cfg))?;
    f.pixel_unshuffle(&x, f2)
}

/// Intermediate maps of one fusion stage.
#[derive(Debug, Clone)]
pub struct Fused<V> {
    pub attn: V,
    /// `Tf·attn + Cf·(1 − attn)`.
    pub blended: V,
    /// After the 3×3 refinement convolution.
    pub refined: V,
    pub out: V,
}

pub fn fuse_adaptive<F: Flow>(f: &mut F, name: &str, tf: &F::V, cf: &F::V, c: usize, mode: PadMode) -> Result<Fused<F::V>> {
    let cf_dims = f.dims(cf);
    f.check(tf, &cf_dims, &format!("{name} global vs local"))?;
    let sum = f.binary(tf, cf, Binary::Add)?;
    let t = conv(f, &format!("{name}.att3"), &sum, ConvSpec::same(c, c, 3), mode)?;
    let t = f.unary(&t, Unary::Relu);
    let t = conv(f, &format!("{name}.att1"), &t, ConvSpec::same(c, c, 1), mode)?;
    let attn = f.unary(&t, Unary::Sigmoid);
    let tw = f.binary(tf, &attn, Binary::Mul)?;
    let inv = f.unary(&attn, Unary::Affine(-1.0, 1.0));
    let cw = f.binary(cf, &inv, Binary::Mul)?;
    let blended = f.binary(&tw, &cw, Binary::Add)?;
    let t = conv(f, &format!("{name}.ref"), &blended, ConvSpec::same(c, c, 3), mode)?;
    let refined = f.unary(&t, Unary::Relu);
    let t = conv(f, &format!("{name}.res1"), &refined, ConvSpec::same(c, c, 3), mode)?;
    let t = batch_norm(f, &format!("{name}.bn1"), &t, c)?;
    let t = f.unary(&t, Unary::Relu);
    let t = conv(f, &format!("{name}.res2"), &t, ConvSpec::same(c, c, 3), mode)?;
    let res = batch_norm(f, &format!("{name}.bn2"), &t, c)?;
    let t = f.binary(&refined, &res, Binary::Add)?;
    let out = f.unary(&t, Unary::Relu);
    Ok(Fused { attn, blended, refined, out })
}

pub fn channel_attention<F: Flow>(f: &mut F, name: &str, x: &F::V, c: usize, hidden: usize) -> Result<F::V> {
    let d = f.avg_pool(x)?;
    let d = conv(f, &format!("{name}.fc1"), &d, ConvSpec::same(c, hidden, 1), PadMode::Zero)?;
    let d = f.unary(&d, Unary::Relu);
    let d = conv(f, &format!("{name}.fc2"), &d, ConvSpec::same(hidden, c, 1), PadMode::Zero)?;
    let w = f.unary(&d, Unary::Sigmoid);
    f.binary(x, &w, Binary::Mul)
}

/// Skip-connected upsampling from the five fused maps (`tcf[0]` finest) to a
/// `3×H×W` map in `(−1, 1)`.
pub fn decode_lut<F: Flow>(f: &mut F, cfg: &ModelConfig, tcf: &[F::V]) -> Result<F::V> {
    let t = cfg.tcf;
    for (s, v) in tcf.iter().enumerate() {
        let (h, w) = cfg.stage_hw(s + 1);
        f.check(v, &[t[s], h, w], &format!("decoder input TCf{}", s + 1))?;
    }
    let mode = pad_mode(cfg);
    let step = |f: &mut F, line: &str, x: &F::V, cin: usize, cout: usize| -> Result<F::V> {
        let y = conv(f, &format!("dec.l{line}"), x, ConvSpec::same(cin, cout, 3), mode)?;
        Ok(f.unary(&y, Unary::Elu))
    };
    let x = step(f, "02", &tcf[4], t[4], t[3])?;
    let x = f.upsample(&x, 2)?;
    let x = f.concat(&[x, tcf[3].clone()], 0)?;
    let x = step(f, "05", &x, 2 * t[3], t[3])?;
    let x = step(f, "06", &x, t[3], t[2])?;
    let x = f.upsample(&x, 2)?;
    let x = f.concat(&[x, tcf[2].clone()], 0)?;
    let x = step(f, "09", &x, 2 * t[2], t[2])?;
    let x = step(f, "10", &x, t[2], t[1])?;
    let x = f.upsample(&x, 2)?;
    let x = f.concat(&[x, tcf[1].clone()], 0)?;
    let x = step(f, "13", &x, 2 * t[1], t[1])?;
    let x = step(f, "14", &x, t[1], t[0])?;
    let x = f.concat(&[x, tcf[0].clone()], 0)?;
    let x = step(f, "16", &x, 2 * t[0], t[0])?;
    let half = t[0] / 2;
    let x = step(f, "17", &x, t[0], half * 16)?;
    let x = f.pixel_shuffle(&x, 4)?;
    let x = step(f, "19", &x, half, half)?;
    let x = conv(f, "dec.l20", &x, ConvSpec::same(half, 3, 3), mode)?;
    let s = f.unary(&x, Unary::Sigmoid);
    let lut = f.unary(&s, Unary::Affine(2.0, -1.0));
    let g = cfg.grid();
    f.check(&lut, &[3, g.height, g.width], "decoder output")?;
    Ok(lut)
}

/// Everything one forward pass produces.
#[derive(Debug, Clone)]
pub struct Outputs<V> {
    /// Normalized `[pitch, roll]` as `[1, 2]`.
    pub angles_n: V,
    /// `3×H×W` in `(−1, 1)`.
    pub lut: V,
    /// The input resampled through `lut`.
    pub upright: V,
    /// Fused maps handed to the decoder.
    pub tcf: Vec<V>,
}

pub fn forward<F: Flow>(f: &mut F, cfg: &ModelConfig, erp: &F::V, cube: &F::V) -> Result<Outputs<F::V>> {
    let local = local_encoder(f, cfg, erp)?;
    let angles_n = angle_head(f, &local[4], cfg.cnn[4])?;
    f.check(&angles_n, &[1, 2], "angles")?;
    let blocks = if cfg.use_vit {
        let tokens = patch_embed(f, cfg, cube)?;
        vit_encode(f, cfg, &tokens)?
    } else {
        Vec::new()
    };
    let mode = pad_mode(cfg);
    let mut tcf = Vec::with_capacity(5);
    for s in 1..=5 {
        let c = cfg.cnn[s - 1];
        let (h, w) = cfg.stage_hw(s);
        let tf = if cfg.use_vit {
            let tap = &blocks[cfg.vit.taps[s - 1] - 1];
            match cfg.align_mode {
                AlignMode::Implicit => align_implicit(f, cfg, s, tap)?,
                AlignMode::Explicit => align_explicit(f, cfg, s, tap)?,
            }
        } else {
            f.zeros(&[c, h, w])
        };
        f.check(&tf, &[c, h, w], &format!("aligned Tf{s}"))?;
        let fused = fuse_adaptive(f, &format!("fuse.s{s}"), &tf, &local[s - 1], c, mode)?;
        let mut x = fused.out;
        if cfg.use_channel_attention {
            x = channel_attention(f, &format!("ca.s{s}"), &x, c, cfg.ca_hidden(c))?;
        }
        if s == 1 {
            x = conv(f, "fuse.s1.proj", &x, ConvSpec::same(c, cfg.tcf[0], 1), mode)?;
        }
        f.check(&x, &[cfg.tcf[s - 1], h, w], &format!("TCf{s}"))?;
        tcf.push(x);
    }
    let lut = decode_lut(f, cfg, &tcf)?;
    let upright = f.warp_lut(erp, &lut)?;
    Ok(Outputs { angles_n, lut, upright, tcf })
}
