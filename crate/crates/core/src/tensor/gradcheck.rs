//! Analytic vs central finite-difference gradient comparison.

use rand::seq::index::sample;
use serde::Serialize;

use super::array::Tensor;
use super::tape::{Tape, Var};
use crate::error::Result;
use crate::rng;

/// Finite-difference step.
pub const STEP: f64 = 1e-5;

/// Denominator floor of the relative error, so coordinates whose true
/// gradient is ~0 are judged on absolute error.
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckReport {
    pub name: String,
    pub checked: usize,
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl std::fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{:<28} {} coords={:<5} max_rel_err={:.3e} max_abs_err={:.3e} tol={:.0e}",
            self.name,
            if self.passed { "PASS" } else { "FAIL" },
            self.checked,
            self.max_rel_err,
            self.max_abs_err,
            self.tolerance
        )
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Checks `f` (which must map the given inputs to a scalar on the tape)
/// at up to `coords` randomly chosen coordinates of every input flagged in
/// `differentiable`.
pub fn grad_check<F>(name: &str, inputs: &[Tensor], differentiable: &[bool], f: F, coords: usize, seed: u64, tolerance: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval = |values: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|t| tape.constant(t.clone())).collect();
        let out = f(&mut tape, &vars)?;
        Ok(tape.value(out).item())
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs
        .iter()
        .zip(differentiable)
        .map(|(t, &d)| tape.leaf(t.clone(), d))
        .collect();
    let loss = f(&mut tape, &vars)?;
    tape.backward(loss)?;

    let mut rng = rng::stream(seed, name);
    let mut report = GradCheckReport {
        name: name.to_string(),
        checked: 0,
        max_rel_err: 0.0,
        max_abs_err: 0.0,
        tolerance,
        passed: true,
    };
    let mut probe = inputs.to_vec();
    for (i, input) in inputs.iter().enumerate() {
        if !differentiable[i] {
            continue;
        }
        let analytic = tape.grad_or_zero(vars[i]);
        let picks: Vec<usize> = if input.len() <= coords {
            (0..input.len()).collect()
        } else {
            let mut v = sample(&mut rng, input.len(), coords).into_vec();
            v.sort_unstable();
            v
        };
        for j in picks {
            let orig = input.data()[j];
            probe[i].data_mut()[j] = orig + STEP;
            let up = eval(&probe)?;
            probe[i].data_mut()[j] = orig - STEP;
            let down = eval(&probe)?;
            probe[i].data_mut()[j] = orig;
            let numeric = (up - down) / (2.0 * STEP);
            let rel = relative_error(analytic[j], numeric);
            report.max_rel_err = report.max_rel_err.max(rel);
            report.max_abs_err = report.max_abs_err.max((analytic[j] - numeric).abs());
            report.checked += 1;
        }
    }
    report.passed = report.max_rel_err < tolerance;
    Ok(report)
}
