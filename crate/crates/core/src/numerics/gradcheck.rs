//! Central finite-difference gradient checking.

use super::{Matrix, Tape, Var};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub struct GradCheckOptions {
    pub epsilon: f64,
    pub tolerance: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            epsilon: 1e-5,
            tolerance: 1e-4,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub passed: bool,
    pub worst_rel_err: f64,
    /// `(input index, flat entry index)` of the worst coordinate.
    pub worst_at: Option<(usize, usize)>,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

/// `|a - n| / max(|a|, |n|, 1e-8)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares `analytic` against central differences of `value` at `inputs`,
/// coordinate by coordinate.
pub fn grad_check<F>(
    value: F,
    inputs: &[Matrix],
    analytic: &[Matrix],
    opts: GradCheckOptions,
) -> Result<GradCheckReport>
where
    F: Fn(&[Matrix]) -> Result<f64>,
{
    if analytic.len() != inputs.len() {
        return Err(Error::Domain(format!(
            "grad_check: {} analytic gradients for {} inputs",
            analytic.len(),
            inputs.len()
        )));
    }
    for (x, g) in inputs.iter().zip(analytic) {
        if x.shape() != g.shape() {
            return Err(Error::shape("grad_check", x.shape(), g.shape()));
        }
    }

    let eval = |xs: &[Matrix], at: (usize, usize)| -> Result<f64> {
        let v = value(xs)?;
        if !v.is_finite() {
            return Err(Error::NonFinite(format!(
                "grad_check: function value {v} with input {} entry {} perturbed",
                at.0, at.1
            )));
        }
        Ok(v)
    };

    let mut work = inputs.to_vec();
    let mut report = GradCheckReport {
        passed: true,
        worst_rel_err: 0.0,
        worst_at: None,
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
    };
    for i in 0..work.len() {
        for j in 0..work[i].len() {
            let x0 = work[i].data()[j];
            work[i].data_mut()[j] = x0 + opts.epsilon;
            let up = eval(&work, (i, j))?;
            work[i].data_mut()[j] = x0 - opts.epsilon;
            let down = eval(&work, (i, j))?;
            work[i].data_mut()[j] = x0;

            let numeric = (up - down) / (2.0 * opts.epsilon);
            let a = analytic[i].data()[j];
            let rel = relative_error(a, numeric);
            report.checked += 1;
            if rel > report.worst_rel_err || report.worst_at.is_none() {
                report.worst_rel_err = rel;
                report.worst_at = Some((i, j));
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    report.passed = report.worst_rel_err < opts.tolerance;
    Ok(report)
}

/// Gradient-checks a scalar function written against the tape. `build`
/// receives one leaf per input and returns the `1 x 1` output node.
pub fn check_tape_function<F>(
    build: F,
    inputs: &[Matrix],
    opts: GradCheckOptions,
) -> Result<GradCheckReport>
where
    F: for<'t> Fn(&mut Tape<'t>, &[Var]) -> Result<Var>,
{
    let value = |xs: &[Matrix]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|x| tape.leaf_ref(x)).collect();
        let out = build(&mut tape, &vars)?;
        Ok(tape.scalar(out))
    };
    let analytic = {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|x| tape.leaf_ref(x)).collect();
        let out = build(&mut tape, &vars)?;
        let grads = tape.backward(out)?;
        vars.iter().map(|v| grads.get(*v)).collect::<Vec<_>>()
    };
    grad_check(value, inputs, &analytic, opts)
}
