//! Central finite-difference gradient checker.

use super::{Graph, ParamGroup, Var};
use crate::error::{Error, Result};

/// Per-parameter outcome of [`grad_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckEntry {
    pub name: String,
    pub max_rel_err: f64,
    pub max_abs_grad: f64,
    pub entries: usize,
    /// Probes whose ±step evaluations straddled a ReLU or norm kink even
    /// after step refinement; excluded from `max_rel_err`.
    pub kink_skipped: usize,
}

const REFINEMENTS: usize = 3;

/// Relative error with a `max(|a|, |b|, 1e-8)` denominator.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

fn eval<F>(f: &F, params: &ParamGroup) -> Result<(f64, u64)>
where
    F: Fn(&mut Graph, &ParamGroup) -> Result<Var>,
{
    let mut g = Graph::new(0);
    let loss = f(&mut g, params)?;
    let v = g.value(loss);
    if v.len() != 1 {
        return Err(Error::Usage("grad_check needs a scalar loss".into()));
    }
    let value = v.data()[0];
    if !value.is_finite() {
        return Err(Error::Numeric(format!("non-finite loss {value} at probe point")));
    }
    Ok((value, g.kink_signature()))
}

/// Finite-difference settings for [`grad_check_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckOptions {
    pub step: f64,
    /// Combine steps `h` and `h/2` as `(4·D(h/2) − D(h)) / 3`, cancelling
    /// the `O(h²)` truncation term so larger, rounding-safe steps can be used.
    pub richardson: bool,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-5,
            richardson: false,
        }
    }
}

/// Compares autodiff gradients of `f` at `point` against central
/// differences `(f(θ+h) − f(θ−h)) / 2h`, entry by entry.
///
/// A probe whose perturbed evaluations land in a different piece of a
/// piecewise-smooth function is retried with `h/10`, up to three times.
pub fn grad_check<F>(f: F, point: &ParamGroup, step: f64) -> Result<Vec<GradCheckEntry>>
where
    F: Fn(&mut Graph, &ParamGroup) -> Result<Var>,
{
    grad_check_with(
        f,
        point,
        GradCheckOptions {
            step,
            richardson: false,
        },
    )
}

/// [`grad_check`] with explicit options.
pub fn grad_check_with<F>(f: F, point: &ParamGroup, opts: GradCheckOptions) -> Result<Vec<GradCheckEntry>>
where
    F: Fn(&mut Graph, &ParamGroup) -> Result<Var>,
{
    let step = opts.step;
    if !(step > 0.0) {
        return Err(Error::Domain(format!("grad_check step must be positive, got {step}")));
    }
    let mut g = Graph::new(0);
    let loss = f(&mut g, point)?;
    if !g.value(loss).all_finite() {
        return Err(Error::Numeric("non-finite loss at the base point".into()));
    }
    let grads = g.backward(loss)?;
    let analytic = g.param_grads(point, &grads);
    let base_sig = g.kink_signature();

    let mut work = point.clone();
    let mut report = Vec::with_capacity(point.len());
    for (i, name) in point.names().iter().enumerate() {
        let mut entry = GradCheckEntry {
            name: name.clone(),
            max_rel_err: 0.0,
            max_abs_grad: 0.0,
            entries: analytic[i].len(),
            kink_skipped: 0,
        };
        for k in 0..analytic[i].len() {
            let orig = work.data_mut(i)[k];
            // Central difference at step h, or None if a kink was crossed.
            let mut central = |h: f64| -> Result<Option<f64>> {
                work.data_mut(i)[k] = orig + h;
                let (fp, sp) = eval(&f, &work)?;
                work.data_mut(i)[k] = orig - h;
                let (fm, sm) = eval(&f, &work)?;
                work.data_mut(i)[k] = orig;
                Ok((sp == base_sig && sm == base_sig).then(|| (fp - fm) / (2.0 * h)))
            };
            let mut h = step;
            let mut numeric = None;
            for _ in 0..=REFINEMENTS {
                let d = if opts.richardson {
                    match (central(h)?, central(h / 2.0)?) {
                        (Some(d1), Some(d2)) => Some((4.0 * d2 - d1) / 3.0),
                        _ => None,
                    }
                } else {
                    central(h)?
                };
                if d.is_some() {
                    numeric = d;
                    break;
                }
                h /= 10.0;
            }
            let a = analytic[i][k];
            entry.max_abs_grad = entry.max_abs_grad.max(a.abs());
            match numeric {
                Some(n) => entry.max_rel_err = entry.max_rel_err.max(rel_err(a, n)),
                None => entry.kink_skipped += 1,
            }
        }
        report.push(entry);
    }
    Ok(report)
}
