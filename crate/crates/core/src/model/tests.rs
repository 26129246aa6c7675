use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::layers::{neighborhood_mask, patch_matrix};
use super::*;
use crate::features::{DopplerVolume, RadTensor, SpatialMap};
use crate::tensorcore::{grad_check, grad_check_with, GradCheckOptions, Graph, ParamGroup, Tensor};

fn tiny(ablation: Ablation) -> ModelConfig {
    ModelConfig {
        range_bins: 8,
        angle_bins: 8,
        doppler_bins: 4,
        patch_r: 2,
        patch_a: 2,
        embed_dim: 8,
        layers: 1,
        heads: 2,
        window: 3,
        head_hidden: 16,
        ablation,
        ..ModelConfig::default()
    }
}

fn random_frame(cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> RadTensor {
    let n = cfg.range_bins * cfg.angle_bins * cfg.doppler_bins;
    RadTensor::new(
        cfg.range_bins,
        cfg.angle_bins,
        cfg.doppler_bins,
        (0..n).map(|_| rng.gen_range(0.0..1.0)).collect(),
    )
    .unwrap()
}

/// Re-draws every parameter so zero-initialized blocks are exercised too.
fn randomize(params: &mut ParamGroup, rng: &mut ChaCha8Rng, scale: f64) {
    for i in 0..params.len() {
        for v in params.data_mut(i) {
            *v = rng.gen_range(-scale..scale);
        }
    }
}

fn model(cfg: ModelConfig, seed: u64) -> PulseModel {
    let mut m = PulseModel::new(cfg, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
    randomize(&mut m.params, &mut rng, 0.5);
    m
}

fn const_map(cfg: &ModelConfig, v: f64) -> SpatialMap {
    SpatialMap {
        range_bins: cfg.range_bins,
        angle_bins: cfg.angle_bins,
        values: vec![v; cfg.range_bins * cfg.angle_bins],
    }
}

#[test]
fn token_counts_at_full_scale() {
    let cfg = ModelConfig::full_scale();
    assert_eq!(cfg.spatial_tokens(), 256);
    assert_eq!(cfg.doppler_tokens(), 4096);
    let params = init_params(&cfg, 0).unwrap();
    let mut g = Graph::new(0);
    let ts = tokenize_spatial(&mut g, &const_map(&cfg, 0.3), &params, &cfg).unwrap();
    assert_eq!(g.value(ts).shape(), &[256, 32]);
    let v = DopplerVolume(RadTensor::zeros(64, 64, 16));
    let tv = tokenize_doppler(&mut g, &v, &params, &cfg).unwrap();
    assert_eq!(g.value(tv).shape(), &[4096, 32]);
}

#[test]
fn zero_map_gives_positional_embeddings() {
    let cfg = tiny(Ablation::Full);
    let params = init_params(&cfg, 3).unwrap();
    let mut g = Graph::new(0);
    let ts = tokenize_spatial(&mut g, &const_map(&cfg, 0.0), &params, &cfg).unwrap();
    assert_eq!(g.value(ts).data(), params.get("spatial.pos").unwrap().data());
}

#[test]
fn doppler_only_drops_patch_content() {
    let cfg = tiny(Ablation::DopplerOnly);
    let params = init_params(&cfg, 3).unwrap();
    let mut g = Graph::new(0);
    let ts = tokenize_spatial(&mut g, &const_map(&cfg, 0.7), &params, &cfg).unwrap();
    assert_eq!(g.value(ts).data(), params.get("spatial.pos").unwrap().data());
}

#[test]
fn permuting_patches_permutes_content() {
    let cfg = ModelConfig {
        positional: false,
        ..tiny(Ablation::Full)
    };
    let params = init_params(&cfg, 4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut s = const_map(&cfg, 0.0);
    for v in s.values.iter_mut() {
        *v = rng.gen_range(0.0..1.0);
    }
    // swap patch (0,0) with patch (2,3)
    let mut swapped = s.clone();
    for u in 0..2 {
        for w in 0..2 {
            let a = u * 8 + w;
            let b = (4 + u) * 8 + 6 + w;
            swapped.values.swap(a, b);
        }
    }
    let tok = |m: &SpatialMap| {
        let mut g = Graph::new(0);
        let v = tokenize_spatial(&mut g, m, &params, &cfg).unwrap();
        g.value(v).clone()
    };
    let (x, y) = (tok(&s), tok(&swapped));
    let i = 2 * cfg.patches_a() + 3;
    let d = cfg.embed_dim;
    assert_eq!(&x.data()[..d], &y.data()[i * d..(i + 1) * d]);
    assert_eq!(&x.data()[i * d..(i + 1) * d], &y.data()[..d]);
    assert_eq!(&x.data()[d..i * d], &y.data()[d..i * d]);
}

#[test]
fn doppler_tokens_are_cell_independent() {
    let cfg = tiny(Ablation::Full);
    let params = init_params(&cfg, 5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut h = random_frame(&cfg, &mut rng);
    // cells 3 and 17 share a spectrum
    for d in 0..4 {
        let v = h.get(0, 3, d);
        h.set(2, 1, d, v);
    }
    let tok = |h: &RadTensor| {
        let mut g = Graph::new(0);
        let v = tokenize_doppler(&mut g, &DopplerVolume(h.clone()), &params, &cfg).unwrap();
        g.value(v).clone()
    };
    let base = tok(&h);
    let d = cfg.embed_dim;
    assert_eq!(&base.data()[3 * d..4 * d], &base.data()[17 * d..18 * d]);
    let mut bumped = h.clone();
    bumped.set(5, 6, 2, 3.0);
    let other = tok(&bumped);
    let j = 5 * 8 + 6;
    for cell in 0..64 {
        let same = base.data()[cell * d..(cell + 1) * d] == other.data()[cell * d..(cell + 1) * d];
        assert_eq!(same, cell != j, "cell {cell}");
    }
}

#[test]
fn zero_gate_projection_gives_one_half() {
    let cfg = tiny(Ablation::Full);
    let mut params = init_params(&cfg, 6).unwrap();
    params.set("gate.w", &[0.0; 8]).unwrap();
    let mut g = Graph::new(0);
    let v = DopplerVolume(random_frame(&cfg, &mut ChaCha8Rng::seed_from_u64(3)));
    let tv = tokenize_doppler(&mut g, &v, &params, &cfg).unwrap();
    let gv = gate(&mut g, tv, &params).unwrap();
    assert!(g.value(gv).data().iter().all(|&x| x == 0.5));
}

#[test]
fn gate_is_monotone_in_its_logit() {
    let cfg = tiny(Ablation::Full);
    let mut params = init_params(&cfg, 6).unwrap();
    let mut last = -1.0;
    for b in [-5.0, -1.0, 0.0, 0.5, 3.0] {
        params.set("gate.b", &[b]).unwrap();
        let mut g = Graph::new(0);
        let t = g.constant(Tensor::zeros(&[1, 8]));
        let gv = gate(&mut g, t, &params).unwrap();
        let x = g.value(gv).data()[0];
        assert!(x > last && x > 0.0 && x < 1.0);
        last = x;
    }
}

#[test]
fn neighborhood_sizes() {
    let cfg = ModelConfig {
        range_bins: 64,
        angle_bins: 64,
        ..ModelConfig::default()
    };
    let interior = 5 * cfg.patches_a() + 7;
    assert_eq!(neighborhood(interior, &cfg).len(), 144);
    assert_eq!(neighborhood(0, &cfg).len(), 64);
    let last = cfg.spatial_tokens() - 1;
    assert_eq!(neighborhood(last, &cfg).len(), 64);
    let edge = 3;
    assert_eq!(neighborhood(edge, &cfg).len(), 96);
    let huge = ModelConfig {
        window: 2 * cfg.patches_r() + 1,
        ..cfg.clone()
    };
    let global = ModelConfig {
        ablation: Ablation::GlobalInteraction,
        ..cfg.clone()
    };
    for i in [0, interior, last] {
        assert_eq!(neighborhood(i, &huge), neighborhood(i, &global));
    }
    // every cell of a neighborhood lies within one patch of the centre patch
    let (pi, pj) = patch_coords(&cfg)[interior];
    for j in neighborhood(interior, &cfg) {
        let (r, a) = cell_coords(&cfg)[j];
        assert!((r / 4).abs_diff(pi) <= 1 && (a / 4).abs_diff(pj) <= 1);
    }
}

struct AttnSetup {
    cfg: ModelConfig,
    params: ParamGroup,
    spatial: Tensor,
    doppler: Tensor,
}

fn attn_setup(ablation: Ablation, seed: u64) -> AttnSetup {
    let cfg = tiny(ablation);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = init_params(&cfg, seed).unwrap();
    randomize(&mut params, &mut rng, 0.8);
    let rand_t = |rows: usize, rng: &mut ChaCha8Rng| {
        Tensor::new(&[rows, 8], (0..rows * 8).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    };
    let spatial = rand_t(cfg.spatial_tokens(), &mut rng);
    let doppler = rand_t(cfg.doppler_tokens(), &mut rng);
    AttnSetup {
        cfg,
        params,
        spatial,
        doppler,
    }
}

fn attention_weights(s: &AttnSetup, gates: Option<Vec<f64>>) -> (Vec<Tensor>, Tensor) {
    let mut g = Graph::new(0);
    let ts = g.constant(s.spatial.clone());
    let tv = g.constant(s.doppler.clone());
    let gv = gates.map(|v| g.constant(Tensor::new(&[v.len(), 1], v).unwrap()));
    let ca = conditional_cross_attention(&mut g, ts, tv, gv, &s.cfg, &s.params).unwrap();
    (
        ca.heads.iter().map(|h| g.attention_weights(*h).unwrap()).collect(),
        g.value(ca.context).clone(),
    )
}

#[test]
fn attention_rows_are_distributions_over_the_neighborhood() {
    let s = attn_setup(Ablation::Full, 7);
    let gates: Vec<f64> = (0..64).map(|j| (j as f64 * 0.37).sin().abs()).collect();
    let (weights, _) = attention_weights(&s, Some(gates));
    let mask = neighborhood_mask(&s.cfg).unwrap().unwrap();
    for w in &weights {
        for i in 0..s.cfg.spatial_tokens() {
            let row = &w.data()[i * 64..(i + 1) * 64];
            let total: f64 = row.iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
            for (j, &a) in row.iter().enumerate() {
                if !mask.keep(i, j) {
                    assert_eq!(a, 0.0);
                }
            }
        }
    }
}

#[test]
fn constant_gates_match_ungated_attention() {
    let full = attn_setup(Ablation::Full, 8);
    let ungated = AttnSetup {
        cfg: tiny(Ablation::Ungated),
        ..attn_setup(Ablation::Full, 8)
    };
    let (wu, _) = attention_weights(&ungated, Some(vec![0.3; 64]));
    let (wf, _) = attention_weights(&full, Some(vec![0.73; 64]));
    for (a, b) in wu.iter().zip(&wf) {
        assert!(a.max_abs_diff(b) <= 1e-12);
    }
}

#[test]
fn shifting_gates_within_a_neighborhood_keeps_weights() {
    let s = attn_setup(Ablation::Full, 9);
    let gates: Vec<f64> = (0..64).map(|j| 0.1 + 0.5 * ((j * 7 % 11) as f64 / 11.0)).collect();
    let shifted: Vec<f64> = gates.iter().map(|g| g + 0.25).collect();
    let (a, _) = attention_weights(&s, Some(gates));
    let (b, _) = attention_weights(&s, Some(shifted));
    for (x, y) in a.iter().zip(&b) {
        assert!(x.max_abs_diff(y) <= 1e-12);
    }
}

#[test]
fn strong_gate_concentrates_attention() {
    let mut s = attn_setup(Ablation::Full, 10);
    s.cfg.beta = 50.0;
    s.params.set("cross.wq", &[0.0; 64]).unwrap();
    let hot = 3 * 8 + 4;
    let mut gates: Vec<f64> = (0..64).map(|j| 0.7 * ((j * 13 % 64) as f64) / 64.0).collect();
    gates[hot] = 1.0;
    let (w, _) = attention_weights(&s, Some(gates));
    let mask = neighborhood_mask(&s.cfg).unwrap().unwrap();
    let mut seen = 0;
    for head in &w {
        for i in (0..s.cfg.spatial_tokens()).filter(|&i| mask.keep(i, hot)) {
            assert!(head.data()[i * 64 + hot] > 0.99);
            seen += 1;
        }
    }
    assert!(seen > 0);
}

#[test]
fn singleton_neighborhood_passes_the_value_through() {
    let mut s = attn_setup(Ablation::Full, 11);
    s.cfg.patch_r = 1;
    s.cfg.patch_a = 1;
    s.cfg.window = 1;
    s.params = init_params(&s.cfg, 11).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    s.spatial = Tensor::new(&[64, 8], (0..512).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
    let gates: Vec<f64> = (0..64).map(|_| rng.gen_range(0.0..1.0)).collect();
    let (w, ctx) = attention_weights(&s, Some(gates));
    for head in &w {
        for i in 0..64 {
            assert_eq!(head.data()[i * 64 + i], 1.0);
        }
    }
    // c_i = (t^v_i W_V) W_O + b_O
    let mut g = Graph::new(0);
    let tv = g.constant(s.doppler.clone());
    let wv = g.param(&s.params, "cross.wv").unwrap();
    let wo = g.param(&s.params, "cross.wo").unwrap();
    let bo = g.param(&s.params, "cross.bo").unwrap();
    let v = g.matmul(tv, wv).unwrap();
    let expect = g.affine(v, wo, bo).unwrap();
    assert!(g.value(expect).max_abs_diff(&ctx) < 1e-12);
}

#[test]
fn locality_outside_neighborhood_is_ignored() {
    let s = attn_setup(Ablation::Full, 13);
    let gates: Vec<f64> = (0..64).map(|j| (j as f64 * 0.11).cos().abs()).collect();
    let (_, base) = attention_weights(&s, Some(gates.clone()));
    let i = 0;
    let reach = neighborhood(i, &s.cfg);
    let far = (0..64).find(|j| !reach.contains(j)).unwrap();
    let mut perturbed = AttnSetup {
        cfg: s.cfg.clone(),
        params: s.params.clone(),
        spatial: s.spatial.clone(),
        doppler: s.doppler.clone(),
    };
    for v in &mut perturbed.doppler.data_mut()[far * 8..(far + 1) * 8] {
        *v = 0.0;
    }
    let mut g2 = gates;
    g2[far] = 0.99;
    let (_, after) = attention_weights(&perturbed, Some(g2));
    assert_eq!(&base.data()[..8], &after.data()[..8]);
    let changed = (1..16).any(|k| base.data()[k * 8..(k + 1) * 8] != after.data()[k * 8..(k + 1) * 8]);
    assert!(changed);
}

fn agg(tokens: &[Vec<f64>], gates: &[Vec<f64>], eps: f64) -> Vec<f64> {
    let mut g = Graph::new(0);
    let n = gates[0].len();
    let cols = tokens[0].len() / n;
    let t: Vec<_> = tokens
        .iter()
        .map(|v| g.constant(Tensor::new(&[n, cols], v.clone()).unwrap()))
        .collect();
    let w: Vec<_> = gates
        .iter()
        .map(|v| g.constant(Tensor::new(&[n, 1], v.clone()).unwrap()))
        .collect();
    let out = aggregate_doppler_multiframe(&mut g, &t, &w, eps).unwrap();
    g.value(out).data().to_vec()
}

#[test]
fn aggregation_examples() {
    let eps = 1e-6;
    let a = vec![1.0, -2.0];
    let b = vec![3.0, 5.0];
    let out = agg(&[a.clone(), b.clone()], &[vec![0.2], vec![0.6]], eps);
    for k in 0..2 {
        let expect = (0.2 * a[k] + 0.6 * b[k]) / (0.8 + eps);
        assert!((out[k] - expect).abs() < 1e-15);
    }
    let out = agg(&[a.clone(), b.clone()], &[vec![0.4], vec![0.4]], eps);
    for k in 0..2 {
        let mean = 0.5 * (a[k] + b[k]);
        assert!((out[k] - mean).abs() <= 2.0 * eps * mean.abs());
    }
    let out = agg(&[a.clone(), b.clone()], &[vec![1.0], vec![0.0]], eps);
    for k in 0..2 {
        assert!((out[k] - a[k]).abs() <= eps * a[k].abs());
    }
}

#[test]
fn aggregation_rejects_mismatched_lattices() {
    let mut g = Graph::new(0);
    let t1 = g.constant(Tensor::zeros(&[4, 2]));
    let t2 = g.constant(Tensor::zeros(&[3, 2]));
    let w1 = g.constant(Tensor::zeros(&[4, 1]));
    let w2 = g.constant(Tensor::zeros(&[3, 1]));
    assert!(aggregate_doppler_multiframe(&mut g, &[t1, t2], &[w1, w2], 1e-6).is_err());
    assert!(aggregate_doppler_multiframe(&mut g, &[t1], &[], 1e-6).is_err());
}

#[test]
fn residual_update_examples() {
    let cfg = tiny(Ablation::Full);
    let mut params = init_params(&cfg, 1).unwrap();
    let mut g = Graph::new(0);
    let t = g.constant(Tensor::new(&[1, 8], vec![0.5; 8]).unwrap());
    let zero = g.constant(Tensor::zeros(&[1, 8]));
    let out = residual_update(&mut g, t, Some(zero), &params).unwrap();
    assert_eq!(g.value(out).data(), &[0.5; 8]);

    params.set("lambda.w", &[0.0; 8]).unwrap();
    params.set("lambda.b", &[-60.0]).unwrap();
    let mut g = Graph::new(0);
    let t = g.constant(Tensor::new(&[1, 8], vec![0.5; 8]).unwrap());
    let c = g.constant(Tensor::new(&[1, 8], vec![3.0; 8]).unwrap());
    let out = residual_update(&mut g, t, Some(c), &params).unwrap();
    assert!(g.value(out).data().iter().all(|v| (v - 0.5).abs() < 1e-20));

    params.set("lambda.b", &[0.0]).unwrap();
    let mut g = Graph::new(0);
    let t = g.constant(Tensor::zeros(&[1, 8]));
    let mut cv = vec![0.0; 8];
    cv[0] = 2.0;
    let c = g.constant(Tensor::new(&[1, 8], cv).unwrap());
    let out = residual_update(&mut g, t, Some(c), &params).unwrap();
    let mut expect = [0.0; 8];
    expect[0] = 1.0;
    assert_eq!(g.value(out).data(), &expect[..]);
}

#[test]
fn transformer_is_identity_at_init() {
    let cfg = tiny(Ablation::Full);
    let params = init_params(&cfg, 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = Tensor::new(&[16, 8], (0..128).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
    let mut g = Graph::new(0);
    let xv = g.constant(x.clone());
    let z = spatial_transformer(&mut g, xv, &params, &cfg, true).unwrap();
    assert_eq!(g.value(z), &x);
}

#[test]
fn transformer_is_permutation_equivariant() {
    let cfg = tiny(Ablation::Full);
    let mut params = init_params(&cfg, 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    randomize(&mut params, &mut rng, 0.5);
    let x = Tensor::new(&[16, 8], (0..128).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
    let perm: Vec<usize> = (0..16).map(|i| (i * 5 + 3) % 16).collect();
    let permute = |t: &Tensor| {
        let data = perm
            .iter()
            .flat_map(|&p| t.data()[p * 8..(p + 1) * 8].to_vec())
            .collect();
        Tensor::new(&[16, 8], data).unwrap()
    };
    let run = |t: Tensor| {
        let mut g = Graph::new(0);
        let v = g.constant(t);
        let z = spatial_transformer(&mut g, v, &params, &cfg, false).unwrap();
        g.value(z).clone()
    };
    let a = permute(&run(x.clone()));
    let b = run(permute(&x));
    assert!(a.max_abs_diff(&b) < 1e-12);
}

#[test]
fn regression_head_zero_and_shape() {
    let cfg = tiny(Ablation::Full);
    let mut params = init_params(&cfg, 2).unwrap();
    for name in ["head.w1", "head.w2"] {
        let n = params.get(name).unwrap().len();
        params.set(name, &vec![0.0; n]).unwrap();
    }
    let mut g = Graph::new(0);
    let z = g.constant(Tensor::zeros(&[16, 8]));
    let out = regress(&mut g, z, &params, &cfg).unwrap();
    assert_eq!(g.value(out).shape(), &[1, 24]);
    assert!(g.value(out).data().iter().all(|&v| v == 0.0));
}

#[test]
fn regression_head_gradient_matches_finite_differences() {
    let cfg = tiny(Ablation::Full);
    let mut params = init_params(&cfg, 2).unwrap();
    randomize(&mut params, &mut ChaCha8Rng::seed_from_u64(9), 0.5);
    let head = {
        let mut p = ParamGroup::new();
        for name in ["head.w1", "head.b1", "head.w2", "head.b2"] {
            p.add(name, params.get(name).unwrap().clone()).unwrap();
        }
        p
    };
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let z = Tensor::new(&[16, 8], (0..128).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
    let target = Tensor::new(&[8, 3], (0..24).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
    let report = grad_check(
        |g, p| {
            let zv = g.constant(z.clone());
            let out = regress(g, zv, p, &cfg)?;
            let out = g.reshape(out, &[8, 3])?;
            let t = g.constant(target.clone());
            let diff = g.sub(out, t)?;
            let n = g.row_norm(diff);
            Ok(g.mean(n))
        },
        &head,
        1e-5,
    )
    .unwrap();
    for e in report {
        assert!(e.max_rel_err < 1e-4, "{}: {}", e.name, e.max_rel_err);
    }
}

#[test]
fn single_frame_path_matches_aggregated_path() {
    let m = model(tiny(Ablation::Full), 20);
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..5 {
        let frame = random_frame(&m.cfg, &mut rng);
        let a = m.forward(std::slice::from_ref(&frame), false, 0).unwrap();
        let b = m.forward_aggregated(std::slice::from_ref(&frame), false, 0).unwrap();
        let (pa, pb) = (a.pose.flat(), b.pose.flat());
        let diff: f64 = pa.iter().zip(&pb).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = pa.iter().map(|p| p * p).sum::<f64>().sqrt();
        assert!(diff <= 1e-5 * norm, "{diff} vs {norm}");
    }
}

#[test]
fn zero_beta_is_bit_identical_to_ungated() {
    let mut cfg = tiny(Ablation::Full);
    cfg.beta = 0.0;
    let full = model(cfg.clone(), 30);
    let ungated = PulseModel {
        cfg: ModelConfig {
            ablation: Ablation::Ungated,
            ..cfg
        },
        ..full.clone()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..3 {
        let f = [random_frame(&full.cfg, &mut rng)];
        assert_eq!(
            full.forward(&f, false, 0).unwrap().pose,
            ungated.forward(&f, false, 0).unwrap().pose
        );
    }
}

#[test]
fn spatial_only_ignores_doppler() {
    let m = model(tiny(Ablation::SpatialOnly), 40);
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let frame = random_frame(&m.cfg, &mut rng);
    let base = prepare_window(&[frame], &m.cfg).unwrap();
    let out = m.forward_features(&base, false, 0).unwrap();
    assert!(out.gates.is_none());
    for _ in 0..3 {
        let other = WindowFeatures {
            spatial: base.spatial.clone(),
            doppler: vec![DopplerVolume(random_frame(&m.cfg, &mut rng))],
        };
        assert_eq!(m.forward_features(&other, false, 0).unwrap(), out);
    }
}

#[test]
fn forward_checks_window_length_and_grid() {
    let m = model(tiny(Ablation::Full), 50);
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    let f = random_frame(&m.cfg, &mut rng);
    assert!(matches!(m.forward(&[f.clone(), f], false, 0), Err(crate::Error::Usage(_))));
    assert!(m.forward(&[RadTensor::zeros(4, 4, 4)], false, 0).is_err());
}

#[test]
fn eval_forward_is_deterministic_and_gates_are_probabilities() {
    let m = model(tiny(Ablation::Full), 60);
    let f = [random_frame(&m.cfg, &mut ChaCha8Rng::seed_from_u64(61))];
    let a = m.forward(&f, false, 1).unwrap();
    let b = m.forward(&f, false, 2).unwrap();
    assert_eq!(a, b);
    let gates = a.gates.unwrap();
    assert_eq!(gates.len(), 64);
    assert!(gates.iter().all(|&g| g > 0.0 && g < 1.0));
    let c = m.forward(&f, true, 1).unwrap();
    assert_ne!(a.pose, c.pose);
}

#[test]
fn multi_frame_window_runs_for_every_variant() {
    for ablation in Ablation::ALL {
        let cfg = ModelConfig {
            frames: 3,
            ..tiny(ablation)
        };
        let m = model(cfg, 70);
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        let frames: Vec<_> = (0..3).map(|_| random_frame(&m.cfg, &mut rng)).collect();
        let out = m.forward(&frames, false, 0).unwrap();
        assert_eq!(out.pose.num_joints(), 8);
        assert_eq!(
            out.gates.is_some(),
            !matches!(ablation, Ablation::SpatialOnly | Ablation::NoGating),
            "{ablation}"
        );
    }
}

#[test]
fn patch_matrix_rejects_wrong_grid() {
    let cfg = tiny(Ablation::Full);
    let s = SpatialMap {
        range_bins: 4,
        angle_bins: 8,
        values: vec![0.0; 32],
    };
    assert!(patch_matrix(&s, &cfg).is_err());
    let bad = ModelConfig {
        patch_r: 3,
        ..cfg
    };
    assert!(matches!(bad.validate(), Err(crate::Error::Config(_))));
}

fn end_to_end_check(ablation: Ablation, frames: usize) {
    let cfg = ModelConfig {
        frames,
        ..tiny(ablation)
    };
    let m = model(cfg, 80);
    let mut rng = ChaCha8Rng::seed_from_u64(81);
    let window: Vec<_> = (0..frames).map(|_| random_frame(&m.cfg, &mut rng)).collect();
    let input = prepare_window(&window, &m.cfg).unwrap();
    let target = Tensor::new(&[8, 3], (0..24).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
    let report = grad_check_with(
        |g, p| {
            let built = m.build(g, p, &input, false, false)?;
            let pose = g.reshape(built.pose, &[8, 3])?;
            let t = g.constant(target.clone());
            let diff = g.sub(pose, t)?;
            let n = g.row_norm(diff);
            Ok(g.mean(n))
        },
        &m.params,
        GradCheckOptions {
            step: 1e-3,
            richardson: true,
        },
    )
    .unwrap();
    for e in report {
        assert!(e.max_rel_err < 1e-4, "{ablation} {}: {}", e.name, e.max_rel_err);
    }
}

#[test]
fn end_to_end_gradients_full() {
    end_to_end_check(Ablation::Full, 1);
}

#[test]
fn end_to_end_gradients_multi_frame_and_concat() {
    end_to_end_check(Ablation::Full, 2);
    end_to_end_check(Ablation::NaiveConcat, 1);
}

#[test]
fn config_round_trips_through_key_values() {
    let cfg = ModelConfig {
        ablation: Ablation::NaiveConcat,
        beta: 0.5,
        ..ModelConfig::full_scale()
    };
    let kv = cfg.to_key_values();
    assert_eq!(ModelConfig::from_key_values(&kv, &ModelConfig::default()).unwrap(), cfg);
}
