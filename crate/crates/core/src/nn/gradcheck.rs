//! Finite-difference verification of analytic gradients.

use serde::Serialize;

use super::{Fault, Tape, Tensor, Var};
use crate::error::Result;

#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub step: f64,
    /// Denominator floor for the relative error, so that gradients at the
    /// round-off level are compared absolutely.
    pub rel_floor: f64,
    /// Check at most this many evenly spaced elements per parameter.
    pub max_elements_per_param: Option<usize>,
    /// Corrupt the analytic pass (negative control).
    pub fault: Option<Fault>,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-5,
            rel_floor: 1e-6,
            max_elements_per_param: None,
            fault: None,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ParamCheck {
    pub name: String,
    pub max_rel_error: f64,
    pub checked: usize,
    /// Elements whose perturbation crossed a relu or maxpool kink.
    pub skipped: usize,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel_error).fold(0.0, f64::max)
    }

    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error() <= tolerance
    }
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares the analytic gradient of a scalar function of `params` with
/// central finite differences.
///
/// `build` records the function on a fresh tape, given one leaf per
/// parameter (in order), and returns the scalar loss node.
pub fn gradient_check<F>(
    params: &[(String, Tensor<f64>)],
    build: F,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let eval = |values: &[Tensor<f64>], fault: Option<Fault>, grads: bool| -> Result<(f64, u64, Vec<Vec<f64>>)> {
        let mut tape = if grads { Tape::new() } else { Tape::inference() };
        if let Some(f) = fault {
            tape.inject_fault(f);
        }
        let vars: Vec<Var> = values.iter().map(|t| tape.param(t.clone())).collect();
        let loss = build(&mut tape, &vars)?;
        let value = tape.value(loss)?.data()[0];
        let sig = tape.kink_signature();
        let mut out = Vec::new();
        if grads {
            tape.backward(loss)?;
            for &v in &vars {
                out.push(tape.grad(v)?.map(<[f64]>::to_vec).unwrap_or_default());
            }
        }
        Ok((value, sig, out))
    };

    let mut values: Vec<Tensor<f64>> = params.iter().map(|(_, t)| t.clone()).collect();
    let (_, base_sig, analytic) = eval(&values, opts.fault, true)?;
    let mut report = GradCheckReport::default();

    for (pi, (name, tensor)) in params.iter().enumerate() {
        let n = tensor.len();
        let picks: Vec<usize> = match opts.max_elements_per_param {
            Some(limit) if limit < n => (0..limit).map(|i| i * n / limit).collect(),
            _ => (0..n).collect(),
        };
        let mut check = ParamCheck {
            name: name.clone(),
            max_rel_error: 0.0,
            checked: 0,
            skipped: 0,
        };
        for idx in picks {
            let orig = values[pi].data()[idx];
            values[pi].data_mut()[idx] = orig + opts.step;
            let (plus, sig_plus, _) = eval(&values, None, false)?;
            values[pi].data_mut()[idx] = orig - opts.step;
            let (minus, sig_minus, _) = eval(&values, None, false)?;
            values[pi].data_mut()[idx] = orig;
            if sig_plus != base_sig || sig_minus != base_sig {
                check.skipped += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * opts.step);
            let a = analytic[pi].get(idx).copied().unwrap_or(0.0);
            check.max_rel_error = check.max_rel_error.max(relative_error(a, numeric, opts.rel_floor));
            check.checked += 1;
        }
        report.params.push(check);
    }
    Ok(report)
}
