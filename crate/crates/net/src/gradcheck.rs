//! Central finite-difference checks of the analytic gradients.

use sdfseg_core::{BinaryVolume, ScalarVolume};

use crate::loss::{cross_entropy, weighted_mse, MseNormalization};
use crate::net::{backward, forward_train, Params};
use crate::tensor::Tensor4;
use crate::Result;

/// Target for the scalar loss being differentiated.
#[derive(Debug, Clone, Copy)]
pub enum CheckTarget<'a> {
    Label(&'a BinaryVolume),
    Sdf(&'a ScalarVolume, f64),
}

impl CheckTarget<'_> {
    fn loss(&self, out: &Tensor4<f64>) -> Result<(f64, Tensor4<f64>)> {
        match *self {
            CheckTarget::Label(m) => cross_entropy(out, m),
            CheckTarget::Sdf(d, eps) => weighted_mse(out, d, eps, MseNormalization::VoxelCount),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckReport {
    pub checked: usize,
    pub max_rel_err: f64,
    /// Index of the worst parameter, or of the worst input voxel when
    /// checking input gradients.
    pub worst: usize,
}

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

fn loss_at(
    params: &Params<f64>,
    input: &Tensor4<f64>,
    target: CheckTarget<'_>,
) -> Result<(f64, Vec<usize>)> {
    let (out, tape) = forward_train(params, input)?;
    Ok((target.loss(&out)?.0, tape.activation_pattern()))
}

/// Central difference of `f` at step `h`, shrunk tenfold (down to `h * 1e-4`)
/// while either side lands in a different activation pattern than the
/// base point, i.e. while the step straddles a ReLU or max-pool kink.
fn central_difference(
    mut f: impl FnMut(f64) -> Result<(f64, Vec<usize>)>,
    base: &[usize],
    h: f64,
) -> Result<f64> {
    let mut step = h;
    loop {
        let (up, pu) = f(step)?;
        let (down, pd) = f(-step)?;
        if (pu == base && pd == base) || step <= h * 1e-4 {
            return Ok((up - down) / (2.0 * step));
        }
        step *= 0.1;
    }
}

/// Compares the backpropagated gradient of every parameter (or every
/// `stride`-th) with a central difference starting at step `h`.
pub fn check_parameters(
    params: &Params<f64>,
    input: &Tensor4<f64>,
    target: CheckTarget<'_>,
    h: f64,
    floor: f64,
    stride: usize,
) -> Result<CheckReport> {
    let (out, tape) = forward_train(params, input)?;
    let (_, upstream) = target.loss(&out)?;
    let (grads, _) = backward(params, &tape, &upstream, false)?;
    let base = tape.activation_pattern();
    let mut probe = params.clone();
    let mut report = CheckReport { checked: 0, max_rel_err: 0.0, worst: 0 };
    for i in (0..params.len()).step_by(stride.max(1)) {
        let keep = probe.values()[i];
        let numeric = central_difference(
            |d| {
                probe.values_mut()[i] = keep + d;
                let r = loss_at(&probe, input, target);
                probe.values_mut()[i] = keep;
                r
            },
            &base,
            h,
        )?;
        let err = relative_error(grads.values()[i], numeric, floor);
        report.checked += 1;
        if err > report.max_rel_err {
            report.max_rel_err = err;
            report.worst = i;
        }
    }
    Ok(report)
}

/// The same comparison for the gradient with respect to the input volume.
pub fn check_input(
    params: &Params<f64>,
    input: &Tensor4<f64>,
    target: CheckTarget<'_>,
    h: f64,
    floor: f64,
) -> Result<CheckReport> {
    let (out, tape) = forward_train(params, input)?;
    let (_, upstream) = target.loss(&out)?;
    let (_, dx) = backward(params, &tape, &upstream, true)?;
    let dx = dx.expect("requested");
    let base = tape.activation_pattern();
    let mut probe = input.clone();
    let mut report = CheckReport { checked: 0, max_rel_err: 0.0, worst: 0 };
    for i in 0..input.values().len() {
        let keep = probe.values()[i];
        let numeric = central_difference(
            |d| {
                probe.values_mut()[i] = keep + d;
                let r = loss_at(params, &probe, target);
                probe.values_mut()[i] = keep;
                r
            },
            &base,
            h,
        )?;
        let err = relative_error(dx.values()[i], numeric, floor);
        report.checked += 1;
        if err > report.max_rel_err {
            report.max_rel_err = err;
            report.worst = i;
        }
    }
    Ok(report)
}
