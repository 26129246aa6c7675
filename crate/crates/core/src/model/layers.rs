//! Graph-building pieces of the pose network, one function per stage.

use std::sync::Arc;

use super::config::{ModelConfig, LAYER_NORM_EPS};
use crate::error::{Error, Result};
use crate::features::{DopplerVolume, SpatialMap};
use crate::tensorcore::{Graph, Mask, ParamGroup, Tensor, Var};

/// `(patch_row, patch_col)` of every spatial token, row-major.
pub fn patch_coords(cfg: &ModelConfig) -> Vec<(usize, usize)> {
    let pa = cfg.patches_a();
    (0..cfg.spatial_tokens()).map(|i| (i / pa, i % pa)).collect()
}

/// `(range, angle)` of every Doppler token, row-major.
pub fn cell_coords(cfg: &ModelConfig) -> Vec<(usize, usize)> {
    let a = cfg.angle_bins;
    (0..cfg.doppler_tokens()).map(|j| (j / a, j % a)).collect()
}

/// Flattens each `P_r × P_a` patch of `s` into one row.
pub fn patch_matrix(s: &SpatialMap, cfg: &ModelConfig) -> Result<Tensor> {
    cfg.validate()?;
    if s.range_bins != cfg.range_bins || s.angle_bins != cfg.angle_bins {
        return Err(Error::shape(
            "tokenize_spatial",
            &[s.range_bins, s.angle_bins],
            &[cfg.range_bins, cfg.angle_bins],
        ));
    }
    let (pr, pa) = (cfg.patch_r, cfg.patch_a);
    let mut data = Vec::with_capacity(cfg.spatial_tokens() * pr * pa);
    for (bi, bj) in patch_coords(cfg) {
        for u in 0..pr {
            for v in 0..pa {
                data.push(s.get(bi * pr + u, bj * pa + v));
            }
        }
    }
    Tensor::new(&[cfg.spatial_tokens(), pr * pa], data)
}

/// Spatial tokens `t^s_i = f_s(patch_i)` plus the positional embedding.
/// Under `doppler_only` the encoder output is zeroed.
pub fn tokenize_spatial(g: &mut Graph, s: &SpatialMap, params: &ParamGroup, cfg: &ModelConfig) -> Result<Var> {
    let patches = patch_matrix(s, cfg)?;
    let content = if cfg.ablation == super::Ablation::DopplerOnly {
        g.constant(Tensor::zeros(&[cfg.spatial_tokens(), cfg.embed_dim]))
    } else {
        let x = g.constant(patches);
        let w = g.param(params, "spatial.w")?;
        let b = g.param(params, "spatial.b")?;
        g.affine(x, w, b)?
    };
    if cfg.positional {
        let pos = g.param(params, "spatial.pos")?;
        g.add(content, pos)
    } else {
        Ok(content)
    }
}

/// Doppler tokens `t^v_j = f_v(v_j)`, one per range–angle cell, through a
/// shared two-layer MLP.
pub fn tokenize_doppler(g: &mut Graph, v: &DopplerVolume, params: &ParamGroup, cfg: &ModelConfig) -> Result<Var> {
    let (r, a, d) = v.0.dims();
    if (r, a, d) != (cfg.range_bins, cfg.angle_bins, cfg.doppler_bins) {
        return Err(Error::shape(
            "tokenize_doppler",
            &[r, a, d],
            &[cfg.range_bins, cfg.angle_bins, cfg.doppler_bins],
        ));
    }
    let x = g.constant(Tensor::new(&[r * a, d], v.as_rows().to_vec())?);
    let w1 = g.param(params, "doppler.w1")?;
    let b1 = g.param(params, "doppler.b1")?;
    let w2 = g.param(params, "doppler.w2")?;
    let b2 = g.param(params, "doppler.b2")?;
    let h = g.affine(x, w1, b1)?;
    let h = g.relu(h);
    g.affine(h, w2, b2)
}

/// `g = σ(f_g(t^v))`, shape `N_v × 1`.
pub fn gate(g: &mut Graph, tokens: Var, params: &ParamGroup) -> Result<Var> {
    let w = g.param(params, "gate.w")?;
    let b = g.param(params, "gate.b")?;
    let logit = g.affine(tokens, w, b)?;
    Ok(g.sigmoid(logit))
}

/// Inclusive patch-index range of a window of `w` patches around `c`,
/// clipped to `[0, n)`. Even windows extend one patch further forward.
fn window_span(c: usize, w: usize, n: usize) -> (usize, usize) {
    let back = (w - 1) / 2;
    let fwd = w / 2;
    (c.saturating_sub(back), (c + fwd).min(n - 1))
}

/// Doppler cells that spatial token `i` may attend to: the cells of the
/// `w × w` patch window centred on patch `i`, clipped to the grid. Every
/// cell under `global_interaction`.
pub fn neighborhood(i: usize, cfg: &ModelConfig) -> Vec<usize> {
    if cfg.ablation == super::Ablation::GlobalInteraction {
        return (0..cfg.doppler_tokens()).collect();
    }
    let (pi, pj) = patch_coords(cfg)[i];
    let (r0, r1) = window_span(pi, cfg.window, cfg.patches_r());
    let (a0, a1) = window_span(pj, cfg.window, cfg.patches_a());
    let mut cells = Vec::new();
    for r in r0 * cfg.patch_r..(r1 + 1) * cfg.patch_r {
        for a in a0 * cfg.patch_a..(a1 + 1) * cfg.patch_a {
            cells.push(r * cfg.angle_bins + a);
        }
    }
    cells
}

/// `N_s × N_v` keep-mask of all neighborhoods; `None` means no restriction.
pub fn neighborhood_mask(cfg: &ModelConfig) -> Result<Option<Arc<Mask>>> {
    if cfg.ablation == super::Ablation::GlobalInteraction {
        return Ok(None);
    }
    let (ns, nv) = (cfg.spatial_tokens(), cfg.doppler_tokens());
    let mut keep = vec![false; ns * nv];
    for i in 0..ns {
        for j in neighborhood(i, cfg) {
            keep[i * nv + j] = true;
        }
    }
    Ok(Some(Arc::new(Mask::new(ns, nv, keep)?)))
}

/// Output of [`conditional_cross_attention`].
#[derive(Debug, Clone)]
pub struct CrossAttention {
    /// `N_s × d` context vectors `c_i`.
    pub context: Var,
    /// Per-head attention nodes; [`Graph::attention_weights`] expands one
    /// to its `N_s × N_v` weights.
    pub heads: Vec<Var>,
}

/// Multi-head attention from spatial queries to Doppler keys/values,
/// restricted to each token's neighborhood, with logits
/// `q·kᵀ/√d_k + β·g_j` when the variant keeps the gate bias.
pub fn conditional_cross_attention(
    g: &mut Graph,
    spatial: Var,
    doppler: Var,
    gates: Option<Var>,
    cfg: &ModelConfig,
    params: &ParamGroup,
) -> Result<CrossAttention> {
    let nv = g.value(doppler).rows();
    let wq = g.param(params, "cross.wq")?;
    let wk = g.param(params, "cross.wk")?;
    let wv = g.param(params, "cross.wv")?;
    let q = g.matmul(spatial, wq)?;
    let k = g.matmul(doppler, wk)?;
    let v = g.matmul(doppler, wv)?;
    let bias = match gates {
        Some(gv) if cfg.ablation.gate_bias() => {
            let row = g.reshape(gv, &[1, nv])?;
            Some(g.scale(row, cfg.beta))
        }
        _ => None,
    };
    let keys = Arc::new((0..cfg.spatial_tokens()).map(|i| neighborhood(i, cfg)).collect::<Vec<_>>());
    let dk = cfg.key_dim();
    let inv = 1.0 / (dk as f64).sqrt();
    let mut heads = Vec::with_capacity(cfg.heads);
    for h in 0..cfg.heads {
        let qh = g.slice_cols(q, h * dk, dk)?;
        let kh = g.slice_cols(k, h * dk, dk)?;
        let vh = g.slice_cols(v, h * dk, dk)?;
        heads.push(g.sparse_attention(qh, kh, vh, bias, keys.clone(), inv)?);
    }
    let merged = if heads.len() == 1 { heads[0] } else { g.concat_cols(&heads)? };
    let wo = g.param(params, "cross.wo")?;
    let bo = g.param(params, "cross.bo")?;
    Ok(CrossAttention {
        context: g.affine(merged, wo, bo)?,
        heads,
    })
}

/// Confidence-weighted mean over frames:
/// `t̄_j = Σ_τ g^τ_j t^τ_j / (Σ_τ g^τ_j + ε)`.
pub fn aggregate_doppler_multiframe(g: &mut Graph, tokens: &[Var], gates: &[Var], eps: f64) -> Result<Var> {
    if tokens.is_empty() || tokens.len() != gates.len() {
        return Err(Error::shape("aggregate_doppler_multiframe", &[tokens.len()], &[gates.len()]));
    }
    let shape = g.value(tokens[0]).shape().to_vec();
    let mut num = None;
    let mut den = None;
    for (&t, &w) in tokens.iter().zip(gates) {
        if g.value(t).shape() != shape.as_slice() {
            return Err(Error::shape("aggregate_doppler_multiframe", &shape, g.value(t).shape()));
        }
        if g.value(w).len() != shape[0] {
            return Err(Error::shape("aggregate_doppler_multiframe", &shape, g.value(w).shape()));
        }
        let weighted = g.mul_col(t, w)?;
        num = Some(match num {
            None => weighted,
            Some(acc) => g.add(acc, weighted)?,
        });
        den = Some(match den {
            None => w,
            Some(acc) => g.add(acc, w)?,
        });
    }
    let den = g.add_scalar(den.expect("nonempty"), eps);
    let inv = g.recip(den);
    g.mul_col(num.expect("nonempty"), inv)
}

/// `t̃_i = t_i + λ_i·c_i` with `λ_i = σ(f_λ(t_i))`; no context leaves the
/// tokens untouched.
pub fn residual_update(g: &mut Graph, spatial: Var, context: Option<Var>, params: &ParamGroup) -> Result<Var> {
    let Some(c) = context else {
        return Ok(spatial);
    };
    let w = g.param(params, "lambda.w")?;
    let b = g.param(params, "lambda.b")?;
    let logit = g.affine(spatial, w, b)?;
    let lambda = g.sigmoid(logit);
    let scaled = g.mul_col(c, lambda)?;
    g.add(spatial, scaled)
}

/// `N_s × N_v` matrix averaging each neighborhood.
pub fn neighborhood_pooling(cfg: &ModelConfig) -> Result<Tensor> {
    let (ns, nv) = (cfg.spatial_tokens(), cfg.doppler_tokens());
    let mut data = vec![0.0; ns * nv];
    for i in 0..ns {
        let cells = neighborhood(i, cfg);
        let w = 1.0 / cells.len() as f64;
        for j in cells {
            data[i * nv + j] = w;
        }
    }
    Tensor::new(&[ns, nv], data)
}

/// Replaces attention with `affine([t_i ; mean_{j∈N(i)} t^v_j])`.
pub fn naive_concat_update(
    g: &mut Graph,
    spatial: Var,
    doppler: Var,
    cfg: &ModelConfig,
    params: &ParamGroup,
) -> Result<Var> {
    let pool = g.constant(neighborhood_pooling(cfg)?);
    let pooled = g.matmul(pool, doppler)?;
    let joined = g.concat_cols(&[spatial, pooled])?;
    let w = g.param(params, "concat.w")?;
    let b = g.param(params, "concat.b")?;
    g.affine(joined, w, b)
}

fn layer_norm_affine(g: &mut Graph, x: Var, params: &ParamGroup, prefix: &str) -> Result<Var> {
    let n = g.layer_norm(x, LAYER_NORM_EPS);
    let gain = g.param(params, &format!("{prefix}.g"))?;
    let bias = g.param(params, &format!("{prefix}.b"))?;
    let n = g.mul_row(n, gain)?;
    g.add_row(n, bias)
}

fn self_attention(g: &mut Graph, x: Var, params: &ParamGroup, cfg: &ModelConfig, p: &str) -> Result<Var> {
    let wq = g.param(params, &format!("{p}.wq"))?;
    let wk = g.param(params, &format!("{p}.wk"))?;
    let wv = g.param(params, &format!("{p}.wv"))?;
    let q = g.matmul(x, wq)?;
    let k = g.matmul(x, wk)?;
    let v = g.matmul(x, wv)?;
    let dk = cfg.key_dim();
    let inv = 1.0 / (dk as f64).sqrt();
    let mut heads = Vec::with_capacity(cfg.heads);
    for h in 0..cfg.heads {
        let qh = g.slice_cols(q, h * dk, dk)?;
        let kh = g.slice_cols(k, h * dk, dk)?;
        let vh = g.slice_cols(v, h * dk, dk)?;
        let kt = g.transpose(kh);
        let logits = g.matmul(qh, kt)?;
        let logits = g.scale(logits, inv);
        let alpha = g.softmax_lastdim(logits, None, None)?;
        heads.push(g.matmul(alpha, vh)?);
    }
    let merged = if heads.len() == 1 { heads[0] } else { g.concat_cols(&heads)? };
    let wo = g.param(params, &format!("{p}.wo"))?;
    let bo = g.param(params, &format!("{p}.bo"))?;
    g.affine(merged, wo, bo)
}

/// Pre-norm transformer blocks over the spatial tokens.
pub fn spatial_transformer(
    g: &mut Graph,
    tokens: Var,
    params: &ParamGroup,
    cfg: &ModelConfig,
    train: bool,
) -> Result<Var> {
    let mut x = tokens;
    for l in 0..cfg.layers {
        let p = format!("block{l}");
        let n = layer_norm_affine(g, x, params, &format!("{p}.ln1"))?;
        let a = self_attention(g, n, params, cfg, &format!("{p}.attn"))?;
        let a = g.dropout(a, cfg.dropout, train)?;
        x = g.add(x, a)?;
        let n = layer_norm_affine(g, x, params, &format!("{p}.ln2"))?;
        let w1 = g.param(params, &format!("{p}.mlp.w1"))?;
        let b1 = g.param(params, &format!("{p}.mlp.b1"))?;
        let w2 = g.param(params, &format!("{p}.mlp.w2"))?;
        let b2 = g.param(params, &format!("{p}.mlp.b2"))?;
        let h = g.affine(n, w1, b1)?;
        let h = g.relu(h);
        let m = g.affine(h, w2, b2)?;
        let m = g.dropout(m, cfg.dropout, train)?;
        x = g.add(x, m)?;
    }
    Ok(x)
}

/// Flattened embedding through a two-layer MLP to `1 × 3J` (normalized
/// pose units).
pub fn regress(g: &mut Graph, z: Var, params: &ParamGroup, cfg: &ModelConfig) -> Result<Var> {
    let flat = g.reshape(z, &[1, cfg.spatial_tokens() * cfg.embed_dim])?;
    let w1 = g.param(params, "head.w1")?;
    let b1 = g.param(params, "head.b1")?;
    let w2 = g.param(params, "head.w2")?;
    let b2 = g.param(params, "head.b2")?;
    let h = g.affine(flat, w1, b1)?;
    let h = g.relu(h);
    g.affine(h, w2, b2)
}
