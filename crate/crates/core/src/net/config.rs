use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::ErpGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlignMode {
    #[default]
    Implicit,
    Explicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    #[default]
    Full,
    Toy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VitConfig {
    pub blocks: usize,
    pub heads: usize,
    pub embed: usize,
    pub ffn: usize,
    pub patch: usize,
    /// 1-based block indices whose outputs feed fusion stages 1..5.
    pub taps: [usize; 5],
}

/// Architecture of the dual-stream network.
///
/// `cnn` are the channel widths of the stem and the four local stages;
/// `tcf` the widths of the five fused maps handed to the decoder. The two
/// agree except at stage 1, where a 1×1 convolution bridges them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub scale: Scale,
    pub align_mode: AlignMode,
    pub erp_height: usize,
    pub face_size: usize,
    pub use_hfm: bool,
    pub use_circular_pad: bool,
    pub use_channel_attention: bool,
    pub use_vit: bool,
    pub vit: VitConfig,
    pub cnn: [usize; 5],
    pub tcf: [usize; 5],
    pub ca_ratio: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::full()
    }
}

impl ModelConfig {
    pub fn full() -> Self {
        ModelConfig {
            scale: Scale::Full,
            align_mode: AlignMode::Implicit,
            erp_height: 256,
            face_size: 128,
            use_hfm: true,
            use_circular_pad: true,
            use_channel_attention: true,
            use_vit: true,
            vit: VitConfig { blocks: 12, heads: 16, embed: 768, ffn: 3072, patch: 16, taps: [4, 6, 8, 10, 12] },
            cnn: [128, 128, 256, 512, 1024],
            tcf: [64, 128, 256, 512, 1024],
            ca_ratio: 0.8,
        }
    }

    pub fn toy() -> Self {
        ModelConfig {
            scale: Scale::Toy,
            erp_height: 64,
            face_size: 16,
            vit: VitConfig { blocks: 2, heads: 4, embed: 48, ffn: 192, patch: 4, taps: [1, 2, 2, 2, 2] },
            cnn: [16, 16, 32, 64, 128],
            tcf: [8, 16, 32, 64, 128],
            ..ModelConfig::full()
        }
    }

    pub fn preset(scale: Scale) -> Self {
        match scale {
            Scale::Full => ModelConfig::full(),
            Scale::Toy => ModelConfig::toy(),
        }
    }

    pub fn with_align(mut self, mode: AlignMode) -> Self {
        self.align_mode = mode;
        self
    }

    pub fn grid(&self) -> ErpGrid {
        ErpGrid::with_height(self.erp_height).expect("validated grid")
    }

    /// Tokens produced by patch embedding.
    pub fn n_tokens(&self) -> usize {
        6 * (self.face_size / self.vit.patch).pow(2)
    }

    /// Spatial size of fusion stage `s` (1..=5): stride 4 for the stem and
    /// the first stage, then halving.
    pub fn stage_hw(&self, s: usize) -> (usize, usize) {
        let g = self.grid();
        let d = self.stage_stride(s);
        (g.height / d, g.width / d)
    }

    pub fn stage_stride(&self, s: usize) -> usize {
        [4, 4, 8, 16, 32][s - 1]
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let g = ErpGrid::with_height(self.erp_height).map_err(|e| Error::Config(e.to_string()))?;
        if g.height % 32 != 0 {
            return bad(format!("erp_height {} must be a multiple of 32", self.erp_height));
        }
        let v = &self.vit;
        if v.patch == 0 || self.face_size % v.patch != 0 {
            return bad(format!("face size {} not divisible by patch {}", self.face_size, v.patch));
        }
        if v.heads == 0 || v.embed % v.heads != 0 {
            return bad(format!("embed {} not divisible by {} heads", v.embed, v.heads));
        }
        if v.taps.iter().any(|&t| t == 0 || t > v.blocks) {
            return bad(format!("taps {:?} outside 1..={}", v.taps, v.blocks));
        }
        if self.align_mode == AlignMode::Explicit && v.embed != v.patch * v.patch * 3 {
            return bad(format!("explicit alignment needs embed = patch²·3, got {} vs {}", v.embed, v.patch * v.patch * 3));
        }
        if self.cnn[1] != self.cnn[0] {
            return bad("the first local stage keeps the stem width".into());
        }
        if self.tcf[1..] != self.cnn[1..] {
            return bad(format!("fused widths {:?} must match local widths {:?} past stage 1", self.tcf, self.cnn));
        }
        for (s, &c) in self.cnn.iter().enumerate() {
            // The alignment chains divide the target width by up to 16.
            if c % 16 != 0 {
                return bad(format!("stage {} width {c} must be a multiple of 16", s + 1));
            }
        }
        if self.tcf[0] % 2 != 0 {
            return bad(format!("first fused width {} must be even", self.tcf[0]));
        }
        if !(self.ca_ratio > 0.0 && self.ca_ratio <= 1.0) {
            return bad(format!("ca_ratio {} not in (0, 1]", self.ca_ratio));
        }
        Ok(())
    }

    pub fn ca_hidden(&self, c: usize) -> usize {
        ((self.ca_ratio * c as f64).round() as usize).max(1)
    }
}
