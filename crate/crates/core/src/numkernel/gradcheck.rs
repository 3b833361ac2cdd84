//! Central finite-difference verification of tape gradients.

use super::params::{Bound, ParamSet};
use super::tape::{Tape, Var};
use crate::error::{Error, Result};
use crate::exec::Exec;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    /// max over coordinates of |analytic − numeric| / max(1, |analytic|)
    pub max_rel_error: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub coordinates: usize,
}

fn eval<F>(f: &F, params: &ParamSet) -> Result<f64>
where
    F: Fn(&mut Tape, &Bound) -> Result<Var>,
{
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape, None);
    let out = f(&mut tape, &bound)?;
    let v = tape.value(out).item();
    if !v.is_finite() {
        return Err(Error::NonFinite {
            what: "finite-difference evaluation".into(),
        });
    }
    Ok(v)
}

/// Compares the tape gradient of `f` against central differences with the
/// given `step`, over every scalar in `params`. Coordinates are perturbed
/// independently, so `exec` may spread them over threads.
pub fn finite_diff_report<F>(f: F, params: &ParamSet, step: f64, exec: Exec) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &Bound) -> Result<Var> + Sync + Send,
{
    if step <= 0.0 || !step.is_finite() {
        return Err(Error::Config(format!("finite-difference step must be > 0, got {step}")));
    }
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape, Some(0));
    let loss = f(&mut tape, &bound)?;
    let grads = tape.backward(loss)?;

    let coords: Vec<(usize, usize)> = params
        .tensors()
        .iter()
        .enumerate()
        .flat_map(|(p, t)| (0..t.len()).map(move |i| (p, i)))
        .collect();

    let errs = exec.try_map_range(coords.len(), |c| -> Result<f64> {
        let (p, i) = coords[c];
        let analytic = grads.get(p).map_or(0.0, |g| g.data()[i]);
        let mut plus = params.clone();
        plus.tensors_mut()[p].data_mut()[i] += step;
        let mut minus = params.clone();
        minus.tensors_mut()[p].data_mut()[i] -= step;
        let numeric = (eval(&f, &plus)? - eval(&f, &minus)?) / (2.0 * step);
        Ok((analytic - numeric).abs() / analytic.abs().max(1.0))
    })?;

    let (worst, max_rel_error) = errs
        .iter()
        .copied()
        .enumerate()
        .fold((0, 0.0), |best, (k, e)| if e > best.1 { (k, e) } else { best });
    let (p, i) = coords.get(worst).copied().unwrap_or((0, 0));
    Ok(GradCheckReport {
        max_rel_error,
        worst_param: params.names().get(p).cloned().unwrap_or_default(),
        worst_index: i,
        coordinates: coords.len(),
    })
}

/// Maximum relative error between analytic and central-difference gradients.
pub fn finite_diff_check<F>(f: F, params: &ParamSet, step: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &Bound) -> Result<Var> + Sync + Send,
{
    finite_diff_report(f, params, step, Exec::default()).map(|r| r.max_rel_error)
}
