use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{Ablation, ModelConfig};
use super::layers::{
    aggregate_doppler_multiframe, conditional_cross_attention, gate, naive_concat_update, regress,
    residual_update, spatial_transformer, tokenize_doppler, tokenize_spatial,
};
use crate::error::{Error, Result};
use crate::features::{doppler_volume, normalize_frame, spatial_magnitude, DopplerVolume, RadTensor, SpatialMap};
use crate::pose::Pose;
use crate::tensorcore::{Graph, ParamGroup, Tensor, Var};

/// Freshly initialized parameters for `cfg`.
///
/// Weights are `uniform(±1/√fan_in)`, biases zero, layer-norm gains one.
/// The transformer's attention output and second MLP layer start at zero so
/// every block is an identity map at initialization.
pub fn init_params(cfg: &ModelConfig, seed: u64) -> Result<ParamGroup> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = ParamGroup::new();
    let d = cfg.embed_dim;
    let patch = cfg.patch_r * cfg.patch_a;
    p.add_uniform("spatial.w", &[patch, d], patch, &mut rng)?;
    p.add_zeros("spatial.b", &[d])?;
    if cfg.positional {
        p.add_uniform("spatial.pos", &[cfg.spatial_tokens(), d], d, &mut rng)?;
    }
    p.add_uniform("doppler.w1", &[cfg.doppler_bins, d], cfg.doppler_bins, &mut rng)?;
    p.add_zeros("doppler.b1", &[d])?;
    p.add_uniform("doppler.w2", &[d, d], d, &mut rng)?;
    p.add_zeros("doppler.b2", &[d])?;
    p.add_uniform("gate.w", &[d, 1], d, &mut rng)?;
    p.add_zeros("gate.b", &[1])?;
    for name in ["cross.wq", "cross.wk", "cross.wv", "cross.wo"] {
        p.add_uniform(name, &[d, d], d, &mut rng)?;
    }
    p.add_zeros("cross.bo", &[d])?;
    p.add_uniform("lambda.w", &[d, 1], d, &mut rng)?;
    p.add_zeros("lambda.b", &[1])?;
    if cfg.ablation == Ablation::NaiveConcat {
        p.add_uniform("concat.w", &[2 * d, d], 2 * d, &mut rng)?;
        p.add_zeros("concat.b", &[d])?;
    }
    for l in 0..cfg.layers {
        let b = format!("block{l}");
        p.add_ones(&format!("{b}.ln1.g"), &[d])?;
        p.add_zeros(&format!("{b}.ln1.b"), &[d])?;
        for m in ["wq", "wk", "wv"] {
            p.add_uniform(&format!("{b}.attn.{m}"), &[d, d], d, &mut rng)?;
        }
        p.add_zeros(&format!("{b}.attn.wo"), &[d, d])?;
        p.add_zeros(&format!("{b}.attn.bo"), &[d])?;
        p.add_ones(&format!("{b}.ln2.g"), &[d])?;
        p.add_zeros(&format!("{b}.ln2.b"), &[d])?;
        p.add_uniform(&format!("{b}.mlp.w1"), &[d, 4 * d], d, &mut rng)?;
        p.add_zeros(&format!("{b}.mlp.b1"), &[4 * d])?;
        p.add_zeros(&format!("{b}.mlp.w2"), &[4 * d, d])?;
        p.add_zeros(&format!("{b}.mlp.b2"), &[d])?;
    }
    let flat = cfg.spatial_tokens() * d;
    p.add_uniform("head.w1", &[flat, cfg.head_hidden], flat, &mut rng)?;
    p.add_zeros("head.b1", &[cfg.head_hidden])?;
    p.add_uniform("head.w2", &[cfg.head_hidden, 3 * cfg.joints], cfg.head_hidden, &mut rng)?;
    p.add_zeros("head.b2", &[3 * cfg.joints])?;
    Ok(p)
}

/// Model inputs for one window: the last frame's spatial map and every
/// frame's Doppler volume.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowFeatures {
    pub spatial: SpatialMap,
    pub doppler: Vec<DopplerVolume>,
}

/// Builds [`WindowFeatures`] from `K` frames, oldest first.
pub fn prepare_window(frames: &[RadTensor], cfg: &ModelConfig) -> Result<WindowFeatures> {
    if frames.len() != cfg.frames {
        return Err(Error::Usage(format!(
            "window has {} frames, model expects K={}",
            frames.len(),
            cfg.frames
        )));
    }
    let want = (cfg.range_bins, cfg.angle_bins, cfg.doppler_bins);
    let prepared: Vec<RadTensor> = frames
        .iter()
        .map(|f| {
            if f.dims() != want {
                return Err(Error::Data(format!(
                    "frame grid {:?} does not match model grid {want:?}",
                    f.dims()
                )));
            }
            Ok(if cfg.normalize_input { normalize_frame(f) } else { f.clone() })
        })
        .collect::<Result<_>>()?;
    let last = prepared.last().expect("K >= 1");
    Ok(WindowFeatures {
        spatial: spatial_magnitude(last),
        doppler: prepared.iter().map(doppler_volume).collect(),
    })
}

/// Graph handles produced by [`PulseModel::build`].
#[derive(Debug, Clone)]
pub struct Built {
    /// `1 × 3J` pose in millimeters.
    pub pose: Var,
    /// `N_v × 1` gates that conditioned the attention (aggregated-token gates
    /// for multi-frame windows); absent when the variant has none.
    pub gates: Option<Var>,
}

/// Prediction for one window.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    pub pose: Pose,
    pub gates: Option<Vec<f64>>,
}

/// Network configuration, trainable parameters, and the fixed affine map
/// from head output to millimeters.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseModel {
    pub cfg: ModelConfig,
    pub params: ParamGroup,
    /// Added to the scaled head output, `3J` values.
    pub pose_mean: Vec<f64>,
    /// Per-coordinate scale of the head output, `3J` values.
    pub pose_scale: Vec<f64>,
}

impl PulseModel {
    /// Unit pose mapping (head output is already millimeters).
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<Self> {
        let params = init_params(&cfg, seed)?;
        let n = 3 * cfg.joints;
        Ok(Self {
            cfg,
            params,
            pose_mean: vec![0.0; n],
            pose_scale: vec![1.0; n],
        })
    }

    pub fn with_pose_stats(mut self, mean: Vec<f64>, scale: Vec<f64>) -> Result<Self> {
        let n = 3 * self.cfg.joints;
        if mean.len() != n || scale.len() != n {
            return Err(Error::shape("pose stats", &[n], &[mean.len(), scale.len()]));
        }
        if scale.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::Config("pose scale must be positive".into()));
        }
        self.pose_mean = mean;
        self.pose_scale = scale;
        Ok(self)
    }

    /// Records the full network on `g` using `params` (which must share this
    /// model's layout). `aggregate` forces the multi-frame aggregation even
    /// for `K = 1`.
    pub fn build(
        &self,
        g: &mut Graph,
        params: &ParamGroup,
        input: &WindowFeatures,
        train: bool,
        aggregate: bool,
    ) -> Result<Built> {
        let cfg = &self.cfg;
        if input.doppler.len() != cfg.frames {
            return Err(Error::Usage(format!(
                "window has {} Doppler volumes, model expects K={}",
                input.doppler.len(),
                cfg.frames
            )));
        }
        let ts = tokenize_spatial(g, &input.spatial, params, cfg)?;
        let mut gates = None;
        let updated = if cfg.ablation.uses_doppler() {
            let gated = cfg.ablation != Ablation::NoGating;
            let mut tokens = Vec::with_capacity(cfg.frames);
            let mut frame_gates = Vec::with_capacity(cfg.frames);
            for v in &input.doppler {
                let t = tokenize_doppler(g, v, params, cfg)?;
                frame_gates.push(if gated {
                    gate(g, t, params)?
                } else {
                    g.constant(Tensor::full(&[cfg.doppler_tokens(), 1], 1.0))
                });
                tokens.push(t);
            }
            let tv = if cfg.frames == 1 && !aggregate {
                if gated {
                    gates = Some(frame_gates[0]);
                }
                tokens[0]
            } else {
                let agg = aggregate_doppler_multiframe(g, &tokens, &frame_gates, cfg.eps)?;
                if gated {
                    gates = Some(gate(g, agg, params)?);
                }
                agg
            };
            if cfg.ablation == Ablation::NaiveConcat {
                naive_concat_update(g, ts, tv, cfg, params)?
            } else {
                let ca = conditional_cross_attention(g, ts, tv, gates, cfg, params)?;
                residual_update(g, ts, Some(ca.context), params)?
            }
        } else {
            residual_update(g, ts, None, params)?
        };
        let z = spatial_transformer(g, updated, params, cfg, train)?;
        let out = regress(g, z, params, cfg)?;
        let scale = g.constant(Tensor::new(&[3 * cfg.joints], self.pose_scale.clone())?);
        let mean = g.constant(Tensor::new(&[3 * cfg.joints], self.pose_mean.clone())?);
        let out = g.mul_row(out, scale)?;
        let pose = g.add_row(out, mean)?;
        Ok(Built { pose, gates })
    }

    fn run(&self, input: &WindowFeatures, train: bool, seed: u64, aggregate: bool) -> Result<ForwardOutput> {
        let mut g = Graph::new(seed);
        let built = self.build(&mut g, &self.params, input, train, aggregate)?;
        let pose = Pose::from_flat(g.value(built.pose).data())?;
        if !pose.is_finite() {
            return Err(Error::Numeric("non-finite pose prediction".into()));
        }
        Ok(ForwardOutput {
            pose,
            gates: built.gates.map(|v| g.value(v).data().to_vec()),
        })
    }

    /// Pose for a window of `K` frames (oldest first). With `K = 1` the
    /// Doppler tokens of the single frame are used directly.
    pub fn forward(&self, frames: &[RadTensor], train: bool, seed: u64) -> Result<ForwardOutput> {
        let input = prepare_window(frames, &self.cfg)?;
        self.run(&input, train, seed, false)
    }

    /// Like [`PulseModel::forward`] but always routes the Doppler tokens
    /// through the confidence-weighted aggregation.
    pub fn forward_aggregated(&self, frames: &[RadTensor], train: bool, seed: u64) -> Result<ForwardOutput> {
        let input = prepare_window(frames, &self.cfg)?;
        self.run(&input, train, seed, true)
    }

    /// Forward pass on precomputed features.
    pub fn forward_features(&self, input: &WindowFeatures, train: bool, seed: u64) -> Result<ForwardOutput> {
        self.run(input, train, seed, false)
    }
}
