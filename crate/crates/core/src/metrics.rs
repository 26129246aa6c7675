//! Pose accuracy and temporal-stability metrics, gate–motion diagnostics and
//! a constant-velocity Kalman baseline.
//!
//! Positions are millimeters; velocities are millimeters per frame.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::features::SpatialMap;
use crate::pose::{distance, Pose, PoseSequence};

fn check_pair(pred: &PoseSequence, gt: &PoseSequence) -> Result<(usize, usize)> {
    if pred.len() != gt.len() {
        return Err(Error::shape("pose sequences", &[pred.len()], &[gt.len()]));
    }
    let j = gt.num_joints();
    for (p, g) in pred.frames.iter().zip(&gt.frames) {
        if p.num_joints() != j || g.num_joints() != j {
            return Err(Error::shape("pose joints", &[p.num_joints()], &[g.num_joints()]));
        }
    }
    Ok((gt.len(), j))
}

fn need_velocity(seq: &PoseSequence) -> Result<()> {
    if seq.len() < 2 {
        return Err(Error::Domain(format!(
            "velocity metrics need at least 2 frames, got {}",
            seq.len()
        )));
    }
    Ok(())
}

/// Mean per-joint Euclidean error between two poses.
pub fn pose_error(pred: &Pose, gt: &Pose) -> Result<f64> {
    if pred.num_joints() != gt.num_joints() || gt.num_joints() == 0 {
        return Err(Error::shape("pose joints", &[pred.num_joints()], &[gt.num_joints()]));
    }
    let total: f64 = pred.joints.iter().zip(&gt.joints).map(|(a, b)| distance(a, b)).sum();
    Ok(total / gt.num_joints() as f64)
}

pub fn mpjpe(pred: &PoseSequence, gt: &PoseSequence) -> Result<f64> {
    let (t, _) = check_pair(pred, gt)?;
    if t == 0 {
        return Err(Error::Domain("empty pose sequence".into()));
    }
    let mut total = 0.0;
    for (p, g) in pred.frames.iter().zip(&gt.frames) {
        total += pose_error(p, g)?;
    }
    Ok(total / t as f64)
}

fn centroid(pose: &Pose) -> Vector3<f64> {
    let n = pose.num_joints() as f64;
    pose.joints.iter().map(|p| Vector3::from(*p)).sum::<Vector3<f64>>() / n
}

/// Below this centered spread (mm²) a pose counts as collapsed to a point.
const DEGENERATE_SPREAD: f64 = 1e-18;

/// Similarity transform (`s·R·x + t`) of `pred` minimizing the summed
/// squared distance to `gt`. The rotation comes from the SVD of the
/// cross-covariance with a reflection correction. With `with_scale = false`
/// the scale is pinned to 1. Collapsed predictions fall back to a pure
/// translation onto the ground-truth centroid.
pub fn procrustes_align(pred: &Pose, gt: &Pose, with_scale: bool) -> Result<Pose> {
    if pred.num_joints() != gt.num_joints() || gt.num_joints() == 0 {
        return Err(Error::shape("pose joints", &[pred.num_joints()], &[gt.num_joints()]));
    }
    let mu_p = centroid(pred);
    let mu_g = centroid(gt);
    let xs: Vec<Vector3<f64>> = pred.joints.iter().map(|p| Vector3::from(*p) - mu_p).collect();
    let ys: Vec<Vector3<f64>> = gt.joints.iter().map(|p| Vector3::from(*p) - mu_g).collect();
    let spread: f64 = xs.iter().map(|x| x.norm_squared()).sum();
    let target_spread: f64 = ys.iter().map(|y| y.norm_squared()).sum();
    if spread <= DEGENERATE_SPREAD || target_spread <= DEGENERATE_SPREAD {
        return Ok(Pose::new(
            xs.iter().map(|x| (x + mu_g).into()).collect(),
        ));
    }
    // Cross-covariance Σ y xᵀ; the optimal rotation is U·D·Vᵀ.
    let mut cov = Matrix3::zeros();
    for (x, y) in xs.iter().zip(&ys) {
        cov += y * x.transpose();
    }
    let svd = cov.svd(true, true);
    let (u, v_t) = (svd.u.expect("u requested"), svd.v_t.expect("v_t requested"));
    let d = if (u * v_t).determinant() < 0.0 { -1.0 } else { 1.0 };
    let correction = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d));
    let rot = u * correction * v_t;
    let s = if with_scale {
        let sv = svd.singular_values;
        (sv[0] + sv[1] + d * sv[2]) / spread
    } else {
        1.0
    };
    Ok(Pose::new(
        xs.iter().map(|x| (s * (rot * x) + mu_g).into()).collect(),
    ))
}

/// MPJPE after per-frame similarity alignment (rigid when `with_scale` is
/// off).
pub fn pa_mpjpe(pred: &PoseSequence, gt: &PoseSequence, with_scale: bool) -> Result<f64> {
    let (t, _) = check_pair(pred, gt)?;
    if t == 0 {
        return Err(Error::Domain("empty pose sequence".into()));
    }
    let mut total = 0.0;
    for (p, g) in pred.frames.iter().zip(&gt.frames) {
        total += pose_error(&procrustes_align(p, g, with_scale)?, g)?;
    }
    Ok(total / t as f64)
}

/// First differences `p_{t+1} − p_t`, `(T−1) × J`.
pub fn velocities(seq: &PoseSequence) -> Result<Vec<Vec<[f64; 3]>>> {
    need_velocity(seq)?;
    Ok(seq
        .frames
        .windows(2)
        .map(|w| {
            w[1].joints
                .iter()
                .zip(&w[0].joints)
                .map(|(b, a)| [b[0] - a[0], b[1] - a[1], b[2] - a[2]])
                .collect()
        })
        .collect())
}

/// Per-transition MPJVE: entry `t` compares the velocities between frames
/// `t` and `t+1`.
pub fn frame_velocity_errors(pred: &PoseSequence, gt: &PoseSequence) -> Result<Vec<f64>> {
    let (_, j) = check_pair(pred, gt)?;
    let vp = velocities(pred)?;
    let vg = velocities(gt)?;
    Ok(vp
        .iter()
        .zip(&vg)
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| distance(x, y)).sum::<f64>() / j as f64)
        .collect())
}

pub fn mpjve(pred: &PoseSequence, gt: &PoseSequence) -> Result<f64> {
    let per_frame = frame_velocity_errors(pred, gt)?;
    Ok(per_frame.iter().sum::<f64>() / per_frame.len() as f64)
}

/// Mean predicted joint speed.
pub fn akv(pred: &PoseSequence) -> Result<f64> {
    let v = velocities(pred)?;
    let j = pred.num_joints();
    if j == 0 {
        return Err(Error::Domain("poses have no joints".into()));
    }
    let total: f64 = v.iter().flatten().map(|d| distance(d, &[0.0; 3])).sum();
    Ok(total / (v.len() * j) as f64)
}

/// Motion proxy `v_t = (1/J)·Σ_j ‖p_{t+1,j} − p_{t,j}‖` for `t < T−1`.
pub fn motion_proxy(gt: &PoseSequence) -> Result<Vec<f64>> {
    let j = gt.num_joints() as f64;
    Ok(velocities(gt)?
        .iter()
        .map(|f| f.iter().map(|d| distance(d, &[0.0; 3])).sum::<f64>() / j)
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointRow {
    pub joint: usize,
    pub name: String,
    pub mpjpe: f64,
    pub mpjve: f64,
}

/// Scalar and per-joint metrics pooled over one or more sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub mpjpe: f64,
    pub pa_mpjpe: f64,
    pub mpjve: f64,
    pub akv: f64,
    pub frames: usize,
    pub per_joint: Vec<JointRow>,
}

/// Pools every frame (positions) and every transition (velocities) of the
/// `(pred, gt)` pairs. Sequences shorter than two frames contribute to the
/// position metrics only.
pub fn evaluate(
    pairs: &[(PoseSequence, PoseSequence)],
    names: &[&str],
    pa_scale: bool,
) -> Result<MetricReport> {
    let j = names.len();
    let mut pos = vec![0.0; j];
    let mut vel = vec![0.0; j];
    let (mut pa, mut speed) = (0.0, 0.0);
    let (mut frames, mut transitions) = (0usize, 0usize);
    for (pred, gt) in pairs {
        let (t, jj) = check_pair(pred, gt)?;
        if jj != j {
            return Err(Error::shape("joint names", &[j], &[jj]));
        }
        for (p, g) in pred.frames.iter().zip(&gt.frames) {
            for (k, (a, b)) in p.joints.iter().zip(&g.joints).enumerate() {
                pos[k] += distance(a, b);
            }
            pa += pose_error(&procrustes_align(p, g, pa_scale)?, g)?;
        }
        frames += t;
        if t >= 2 {
            let vp = velocities(pred)?;
            let vg = velocities(gt)?;
            for (a, b) in vp.iter().zip(&vg) {
                for k in 0..j {
                    vel[k] += distance(&a[k], &b[k]);
                    speed += distance(&a[k], &[0.0; 3]);
                }
            }
            transitions += t - 1;
        }
    }
    if frames == 0 || j == 0 {
        return Err(Error::Domain("nothing to evaluate".into()));
    }
    let mean_or_nan = |x: f64, n: usize| if n == 0 { f64::NAN } else { x / n as f64 };
    let per_joint: Vec<JointRow> = names
        .iter()
        .enumerate()
        .map(|(k, name)| JointRow {
            joint: k,
            name: name.to_string(),
            mpjpe: pos[k] / frames as f64,
            mpjve: mean_or_nan(vel[k], transitions),
        })
        .collect();
    Ok(MetricReport {
        mpjpe: pos.iter().sum::<f64>() / (frames * j) as f64,
        pa_mpjpe: pa / frames as f64,
        mpjve: mean_or_nan(vel.iter().sum(), transitions * j),
        akv: mean_or_nan(speed, transitions * j),
        frames,
        per_joint,
    })
}

/// Per-joint MPJPE and MPJVE of one sequence pair.
pub fn per_joint_report(pred: &PoseSequence, gt: &PoseSequence, names: &[&str]) -> Result<Vec<JointRow>> {
    need_velocity(gt)?;
    Ok(evaluate(&[(pred.clone(), gt.clone())], names, true)?.per_joint)
}

/// Pearson correlation; `None` when either input has zero variance or the
/// lengths differ or are below 2.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// How per-cell gates are reduced to a frame score `ḡ_t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GateAggregation {
    /// Mean over cells whose spatial magnitude exceeds the frame median.
    #[default]
    BodyCells,
    /// Mean over all cells.
    Global,
}

impl std::str::FromStr for GateAggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "body" => Ok(Self::BodyCells),
            "global" => Ok(Self::Global),
            other => Err(Error::Usage(format!("unknown gate aggregation '{other}'"))),
        }
    }
}

impl std::fmt::Display for GateAggregation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::BodyCells => "body",
            Self::Global => "global",
        })
    }
}

/// Cells counted as body-occupied: magnitude strictly above the median.
pub fn body_cells(spatial: &SpatialMap) -> Vec<bool> {
    let med = spatial.median();
    spatial.values.iter().map(|&v| v > med).collect()
}

/// Frame gate score. Falls back to the global mean if no cell is above the
/// median (a flat map).
pub fn frame_gate_score(gates: &[f64], spatial: &SpatialMap, agg: GateAggregation) -> Result<f64> {
    if gates.len() != spatial.values.len() {
        return Err(Error::shape("gates vs spatial map", &[gates.len()], &[spatial.values.len()]));
    }
    let global = || gates.iter().sum::<f64>() / gates.len() as f64;
    if agg == GateAggregation::Global {
        return Ok(global());
    }
    let mask = body_cells(spatial);
    let n = mask.iter().filter(|&&m| m).count();
    if n == 0 {
        return Ok(global());
    }
    Ok(gates.iter().zip(&mask).filter(|(_, &m)| m).map(|(g, _)| g).sum::<f64>() / n as f64)
}

/// One sequence worth of diagnostic inputs; `gates[t]` and `spatial[t]`
/// belong to the frame predicted as `pred.frames[t]`.
#[derive(Debug, Clone)]
pub struct GateSequence {
    pub name: String,
    pub gates: Vec<Vec<f64>>,
    pub spatial: Vec<SpatialMap>,
    pub pred: PoseSequence,
    pub gt: PoseSequence,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GateDiagRow {
    pub seq: String,
    pub frame: usize,
    pub g_bar: f64,
    pub v_t: f64,
    pub bin: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GateBin {
    pub bin: usize,
    pub frames: usize,
    pub g_lo: f64,
    pub g_hi: f64,
    pub mpjve: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GateDiag {
    /// `None` when ḡ or v has zero variance.
    pub pearson: Option<f64>,
    pub rows: Vec<GateDiagRow>,
    pub bins: Vec<GateBin>,
}

/// Correlates `ḡ_t` with the motion proxy `v_t` over every frame that has
/// a successor, and reports MPJVE per equal-count `ḡ` quantile bin.
pub fn gate_motion_diag(seqs: &[GateSequence], bins: usize, agg: GateAggregation) -> Result<GateDiag> {
    if bins < 2 {
        return Err(Error::Usage(format!("need at least 2 gate bins, got {bins}")));
    }
    let mut rows = Vec::new();
    let mut errs = Vec::new();
    for s in seqs {
        let t = s.gt.len();
        if s.gates.len() != t || s.spatial.len() != t {
            return Err(Error::shape("gate sequence", &[t], &[s.gates.len(), s.spatial.len()]));
        }
        let v = motion_proxy(&s.gt)?;
        let e = frame_velocity_errors(&s.pred, &s.gt)?;
        for f in 0..t - 1 {
            rows.push(GateDiagRow {
                seq: s.name.clone(),
                frame: f,
                g_bar: frame_gate_score(&s.gates[f], &s.spatial[f], agg)?,
                v_t: v[f],
                bin: 0,
            });
            errs.push(e[f]);
        }
    }
    if rows.len() < bins {
        return Err(Error::Data(format!(
            "{} diagnostic frames cannot fill {bins} bins",
            rows.len()
        )));
    }
    let g: Vec<f64> = rows.iter().map(|r| r.g_bar).collect();
    let v: Vec<f64> = rows.iter().map(|r| r.v_t).collect();
    let pearson = pearson(&g, &v);

    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.sort_by(|&a, &b| g[a].total_cmp(&g[b]).then(a.cmp(&b)));
    let n = rows.len();
    let mut out_bins = Vec::with_capacity(bins);
    for b in 0..bins {
        let members = &order[b * n / bins..(b + 1) * n / bins];
        for &i in members {
            rows[i].bin = b;
        }
        out_bins.push(GateBin {
            bin: b,
            frames: members.len(),
            g_lo: g[members[0]],
            g_hi: g[*members.last().expect("bins <= frames")],
            mpjve: members.iter().map(|&i| errs[i]).sum::<f64>() / members.len() as f64,
        });
    }
    Ok(GateDiag {
        pearson,
        rows,
        bins: out_bins,
    })
}

/// Constant-velocity filter settings, per axis, in mm and frames.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KalmanConfig {
    /// White-acceleration process noise, mm²/frame⁴ scaled into
    /// `Q = q·[[1/4, 1/2], [1/2, 1]]`.
    pub q: f64,
    /// Measurement noise variance, mm².
    pub r_meas: f64,
    /// Initial velocity variance; the initial position variance is `r_meas`.
    pub p0_velocity: f64,
}

impl Default for KalmanConfig {
    fn default() -> Self {
        Self {
            q: 1.0,
            r_meas: 25.0,
            p0_velocity: 100.0,
        }
    }
}

impl KalmanConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.q > 0.0 && self.r_meas > 0.0 && self.p0_velocity > 0.0) {
            return Err(Error::Config(format!(
                "kalman noise terms must be positive: q={} r={} p0={}",
                self.q, self.r_meas, self.p0_velocity
            )));
        }
        Ok(())
    }
}

/// Causal constant-velocity filter run independently on every joint axis.
/// The state starts at the first measurement with zero velocity.
pub fn kalman_smooth(pred: &PoseSequence, cfg: &KalmanConfig) -> Result<PoseSequence> {
    cfg.validate()?;
    need_velocity(pred)?;
    let j = pred.num_joints();
    let mut out: Vec<Pose> = vec![Pose::zeros(j); pred.len()];
    for joint in 0..j {
        for axis in 0..3 {
            let z0 = pred.frames[0].joints[joint][axis];
            let (mut x, mut v) = (z0, 0.0);
            let (mut p00, mut p01, mut p11) = (cfg.r_meas, 0.0, cfg.p0_velocity);
            out[0].joints[joint][axis] = x;
            for t in 1..pred.len() {
                // Predict with F = [[1,1],[0,1]].
                x += v;
                let n00 = p00 + 2.0 * p01 + p11 + 0.25 * cfg.q;
                let n01 = p01 + p11 + 0.5 * cfg.q;
                let n11 = p11 + cfg.q;
                // Update with H = [1, 0].
                let z = pred.frames[t].joints[joint][axis];
                let s = n00 + cfg.r_meas;
                let (k0, k1) = (n00 / s, n01 / s);
                let innov = z - x;
                x += k0 * innov;
                v += k1 * innov;
                p00 = (1.0 - k0) * n00;
                p01 = (1.0 - k0) * n01;
                p11 = n11 - k1 * n01;
                out[t].joints[joint][axis] = x;
            }
        }
    }
    Ok(PoseSequence::new(out, pred.frame_rate))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub const METRICS_HEADER: &str = "metric,value";
pub const PER_JOINT_HEADER: &str = "joint,name,mpjpe,mpjve";
pub const GATE_DIAG_HEADER: &str = "seq,frame,g_bar,v_t,bin";

pub fn metrics_csv(report: &MetricReport) -> String {
    let mut s = format!("{METRICS_HEADER}\n");
    for (k, v) in [
        ("mpjpe", report.mpjpe),
        ("pa_mpjpe", report.pa_mpjpe),
        ("mpjve", report.mpjve),
        ("akv", report.akv),
        ("frames", report.frames as f64),
    ] {
        let _ = writeln!(s, "{k},{v}");
    }
    s
}

pub fn per_joint_csv(rows: &[JointRow]) -> String {
    let mut s = format!("{PER_JOINT_HEADER}\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{}", r.joint, r.name, r.mpjpe, r.mpjve);
    }
    s
}

pub fn gate_diag_csv(diag: &GateDiag) -> String {
    let mut s = format!("{GATE_DIAG_HEADER}\n");
    for r in &diag.rows {
        let _ = writeln!(s, "{},{},{},{},{}", r.seq, r.frame, r.g_bar, r.v_t, r.bin);
    }
    s
}

/// Pearson r and binning settings as `metric,value` lines.
pub fn gate_summary_csv(diag: &GateDiag, agg: GateAggregation) -> String {
    let mut s = format!("{METRICS_HEADER}\n");
    let r = diag.pearson.map_or(String::from("undefined"), |r| r.to_string());
    let _ = writeln!(s, "pearson,{r}");
    let _ = writeln!(s, "frames,{}", diag.rows.len());
    let _ = writeln!(s, "bins,{}", diag.bins.len());
    let _ = writeln!(s, "aggregation,{agg}");
    s
}

pub const GATE_BINS_HEADER: &str = "bin,frames,g_lo,g_hi,mpjve";

pub fn gate_bins_csv(diag: &GateDiag) -> String {
    let mut s = format!("{GATE_BINS_HEADER}\n");
    for b in &diag.bins {
        let _ = writeln!(s, "{},{},{},{},{}", b.bin, b.frames, b.g_lo, b.g_hi, b.mpjve);
    }
    s
}

pub fn write_metrics_csv(path: &Path, report: &MetricReport) -> Result<()> {
    write_text(path, &metrics_csv(report))
}

pub fn write_per_joint_csv(path: &Path, rows: &[JointRow]) -> Result<()> {
    write_text(path, &per_joint_csv(rows))
}

pub fn write_gate_diag_csv(path: &Path, diag: &GateDiag) -> Result<()> {
    write_text(path, &gate_diag_csv(diag))
}
