use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::io::KeyValues;

/// Architecture variants used in the ablation studies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Ablation {
    #[default]
    Full,
    /// Doppler branch removed: contexts are zero.
    SpatialOnly,
    /// Spatial patch encoder output zeroed; positional embeddings remain.
    DopplerOnly,
    /// Spatial token concatenated with the mean Doppler token of its
    /// neighborhood, then mapped back to `d`.
    NaiveConcat,
    /// No gate bias in the attention logits.
    Ungated,
    /// Every spatial token attends to every Doppler cell.
    GlobalInteraction,
    /// Gate removed entirely: no logit bias and uniform multi-frame weights.
    NoGating,
}

impl Ablation {
    pub const ALL: [Ablation; 7] = [
        Ablation::Full,
        Ablation::SpatialOnly,
        Ablation::DopplerOnly,
        Ablation::NaiveConcat,
        Ablation::Ungated,
        Ablation::GlobalInteraction,
        Ablation::NoGating,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Ablation::Full => "full",
            Ablation::SpatialOnly => "spatial_only",
            Ablation::DopplerOnly => "doppler_only",
            Ablation::NaiveConcat => "naive_concat",
            Ablation::Ungated => "ungated",
            Ablation::GlobalInteraction => "global_interaction",
            Ablation::NoGating => "no_gating",
        }
    }

    /// Whether `β·g` enters the cross-attention logits.
    pub fn gate_bias(self) -> bool {
        matches!(
            self,
            Ablation::Full | Ablation::DopplerOnly | Ablation::GlobalInteraction
        )
    }

    pub fn uses_doppler(self) -> bool {
        self != Ablation::SpatialOnly
    }

    /// Whether cross-attention (as opposed to concatenation) fuses the
    /// branches.
    pub fn uses_attention(self) -> bool {
        !matches!(self, Ablation::SpatialOnly | Ablation::NaiveConcat)
    }
}

impl FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ablation::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::Usage(format!("unknown variant '{s}'")))
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Shapes and switches of the pose network.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub range_bins: usize,
    pub angle_bins: usize,
    pub doppler_bins: usize,
    pub patch_r: usize,
    pub patch_a: usize,
    pub embed_dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub dropout: f64,
    /// Neighborhood side length in patches.
    pub window: usize,
    /// Gate strength `β`.
    pub beta: f64,
    /// Frames per input window `K`.
    pub frames: usize,
    /// `ε` of the confidence-weighted aggregation.
    pub eps: f64,
    pub joints: usize,
    pub ablation: Ablation,
    /// Regression head hidden width.
    pub head_hidden: usize,
    /// Learned per-patch positional embeddings on spatial tokens.
    pub positional: bool,
    /// Divide every input frame by its maximum before tokenization.
    pub normalize_input: bool,
}

impl Default for ModelConfig {
    /// Desk-scale profile.
    fn default() -> Self {
        Self {
            range_bins: 32,
            angle_bins: 32,
            doppler_bins: 16,
            patch_r: 4,
            patch_a: 4,
            embed_dim: 16,
            layers: 2,
            heads: 2,
            dropout: 0.1,
            window: 3,
            beta: 1.0,
            frames: 1,
            eps: 1e-6,
            joints: 8,
            ablation: Ablation::Full,
            head_hidden: 64,
            positional: true,
            normalize_input: true,
        }
    }
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

impl ModelConfig {
    /// Full-size profile: 64×64×16 grid, 4×4 patches, `d = 32`, 4 layers,
    /// 4 heads.
    pub fn full_scale() -> Self {
        Self {
            range_bins: 64,
            angle_bins: 64,
            doppler_bins: 16,
            embed_dim: 32,
            layers: 4,
            heads: 4,
            head_hidden: 128,
            ..Self::default()
        }
    }

    pub fn patches_r(&self) -> usize {
        self.range_bins / self.patch_r
    }

    pub fn patches_a(&self) -> usize {
        self.angle_bins / self.patch_a
    }

    /// `N_s`.
    pub fn spatial_tokens(&self) -> usize {
        self.patches_r() * self.patches_a()
    }

    /// `N_v = R·A`.
    pub fn doppler_tokens(&self) -> usize {
        self.range_bins * self.angle_bins
    }

    pub fn key_dim(&self) -> usize {
        self.embed_dim / self.heads
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("R", self.range_bins),
            ("A", self.angle_bins),
            ("D", self.doppler_bins),
            ("patch_r", self.patch_r),
            ("patch_a", self.patch_a),
            ("embed_dim", self.embed_dim),
            ("heads", self.heads),
            ("window", self.window),
            ("K", self.frames),
            ("joints", self.joints),
            ("head_hidden", self.head_hidden),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !self.range_bins.is_multiple_of(self.patch_r) || !self.angle_bins.is_multiple_of(self.patch_a) {
            return Err(Error::Config(format!(
                "grid {}×{} not divisible by patch {}×{}",
                self.range_bins, self.angle_bins, self.patch_r, self.patch_a
            )));
        }
        if !self.embed_dim.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "embed_dim {} not divisible by heads {}",
                self.embed_dim, self.heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0,1)", self.dropout)));
        }
        if !(self.eps > 0.0) || !self.beta.is_finite() {
            return Err(Error::Config("eps must be positive and beta finite".into()));
        }
        Ok(())
    }

    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.set("R", self.range_bins);
        kv.set("A", self.angle_bins);
        kv.set("D", self.doppler_bins);
        kv.set("patch_r", self.patch_r);
        kv.set("patch_a", self.patch_a);
        kv.set("embed_dim", self.embed_dim);
        kv.set("layers", self.layers);
        kv.set("heads", self.heads);
        kv.set("dropout", self.dropout);
        kv.set("window", self.window);
        kv.set("beta", self.beta);
        kv.set("K", self.frames);
        kv.set("eps", self.eps);
        kv.set("joints", self.joints);
        kv.set("variant", self.ablation);
        kv.set("head_hidden", self.head_hidden);
        kv.set("positional", self.positional);
        kv.set("normalize_input", self.normalize_input);
        kv
    }

    /// Reads the keys written by [`ModelConfig::to_key_values`]; absent keys
    /// keep the values of `base`.
    pub fn from_key_values(kv: &KeyValues, base: &ModelConfig) -> Result<Self> {
        let flag = |key: &str, default: bool| -> Result<bool> {
            kv.get(key).map_or(Ok(default), crate::io::parse_flag)
        };
        let cfg = Self {
            range_bins: kv.parse_or("R", base.range_bins)?,
            angle_bins: kv.parse_or("A", base.angle_bins)?,
            doppler_bins: kv.parse_or("D", base.doppler_bins)?,
            patch_r: kv.parse_or("patch_r", base.patch_r)?,
            patch_a: kv.parse_or("patch_a", base.patch_a)?,
            embed_dim: kv.parse_or("embed_dim", base.embed_dim)?,
            layers: kv.parse_or("layers", base.layers)?,
            heads: kv.parse_or("heads", base.heads)?,
            dropout: kv.parse_or("dropout", base.dropout)?,
            window: kv.parse_or("window", base.window)?,
            beta: kv.parse_or("beta", base.beta)?,
            frames: kv.parse_or("K", base.frames)?,
            eps: kv.parse_or("eps", base.eps)?,
            joints: kv.parse_or("joints", base.joints)?,
            ablation: kv.parse_or("variant", base.ablation)?,
            head_hidden: kv.parse_or("head_hidden", base.head_hidden)?,
            positional: flag("positional", base.positional)?,
            normalize_input: flag("normalize_input", base.normalize_input)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
