//! Central finite-difference checks against tape gradients.

use super::tape::{Tape, Var};
use super::tensor::Tensor;
use super::DiffError;

/// Denominator floor for relative error, so that near-zero gradients are
/// compared on an absolute scale.
pub const REL_ERR_FLOOR: f64 = 1e-6;

pub const MIN_STEP: f64 = 1e-7;
pub const MAX_STEP: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// Coordinate with the largest relative error.
    pub worst_index: Option<usize>,
    pub checked: usize,
    /// Coordinates whose ±step evaluations crossed a relu or max branch and
    /// so have no classical derivative to compare against.
    pub skipped_kinks: usize,
    /// First coordinate whose difference quotient was non-finite.
    pub non_finite_index: Option<usize>,
    pub tol: f64,
    pub passed: bool,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR)
}

fn check_step(step: f64) -> Result<(), DiffError> {
    if (MIN_STEP..=MAX_STEP).contains(&step) {
        Ok(())
    } else {
        Err(DiffError::InvalidStep { step })
    }
}

/// Compares `analytic[i]` with `(f(+step) - f(-step)) / 2·step` for every
/// index in `indices`.
///
/// `eval(i, delta)` must return the scalar value with coordinate `i` shifted
/// by `delta`, together with the branch signature of that evaluation.
pub fn finite_difference_report<I, F>(
    analytic: &[f64],
    indices: I,
    step: f64,
    tol: f64,
    mut eval: F,
) -> Result<GradCheckReport, DiffError>
where
    I: IntoIterator<Item = usize>,
    F: FnMut(usize, f64) -> Result<(f64, u64), DiffError>,
{
    check_step(step)?;
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst_index: None,
        checked: 0,
        skipped_kinks: 0,
        non_finite_index: None,
        tol,
        passed: true,
    };
    for i in indices {
        let (_, s0) = eval(i, 0.0)?;
        let (plus, sp) = eval(i, step)?;
        let (minus, sm) = eval(i, -step)?;
        if sp != s0 || sm != s0 {
            report.skipped_kinks += 1;
            continue;
        }
        let numeric = (plus - minus) / (2.0 * step);
        if !numeric.is_finite() {
            report.non_finite_index.get_or_insert(i);
            report.passed = false;
            continue;
        }
        report.checked += 1;
        let err = relative_error(analytic[i], numeric);
        if report.worst_index.is_none() || err > report.max_rel_err {
            report.max_rel_err = err;
            report.worst_index = Some(i);
        }
    }
    if report.max_rel_err > tol {
        report.passed = false;
    }
    Ok(report)
}

/// Gradient check of a scalar tensor function at `x`.
pub fn grad_check<F>(f: F, x: &Tensor, step: f64, tol: f64) -> Result<GradCheckReport, DiffError>
where
    F: Fn(&mut Tape, Var) -> Result<Var, DiffError>,
{
    check_step(step)?;
    let mut tape = Tape::new();
    let xv = tape.leaf(x.clone(), true);
    let y = f(&mut tape, xv)?;
    tape.backward(y)?;
    let analytic = tape.grad(xv).expect("input requires grad").to_vec();

    let n = x.shape().len();
    finite_difference_report(&analytic, 0..n, step, tol, |i, delta| {
        let mut shifted = x.clone();
        shifted.data_mut()[i] += delta;
        let mut t = Tape::new();
        let v = t.constant(shifted);
        let out = f(&mut t, v)?;
        Ok((t.value(out).item()?, t.branch_signature()))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_is_exact() {
        let x = Tensor::new(2, 3, vec![0.3, -1.0, 2.0, 4.0, 0.1, -0.5]).unwrap();
        let r = grad_check(|t, v| t.sum(v), &x, 1e-5, 1e-8).unwrap();
        assert!(r.passed);
        assert_eq!(r.checked, 6);
        assert!(r.max_rel_err < 1e-9, "{}", r.max_rel_err);
    }

    #[test]
    fn step_outside_range_is_rejected() {
        let x = Tensor::scalar(1.0);
        assert!(matches!(
            grad_check(|t, v| t.sum(v), &x, 1e-2, 1e-4),
            Err(DiffError::InvalidStep { .. })
        ));
        assert!(matches!(
            grad_check(|t, v| t.sum(v), &x, 1e-9, 1e-4),
            Err(DiffError::InvalidStep { .. })
        ));
    }

    #[test]
    fn kink_crossings_are_skipped_not_failed() {
        // relu at 1e-7 with step 1e-5 crosses the kink
        let x = Tensor::row_vector(&[1e-7, 1.0]).unwrap();
        let r = grad_check(
            |t, v| {
                let r = t.relu(v)?;
                t.sum(r)
            },
            &x,
            1e-5,
            1e-6,
        )
        .unwrap();
        assert_eq!(r.skipped_kinks, 1);
        assert_eq!(r.checked, 1);
        assert!(r.passed);
    }

    #[test]
    fn wrong_gradient_fails() {
        let x = Tensor::row_vector(&[1.0, 2.0]).unwrap();
        let analytic = [2.0, 4.0];
        let r = finite_difference_report(&analytic, 0..2, 1e-5, 1e-4, |i, d| {
            let v = x.data()[i] + d;
            Ok((v * v * 2.0, 0))
        })
        .unwrap();
        assert!(!r.passed);
        assert!((r.max_rel_err - 0.5).abs() < 1e-6);
    }

    #[test]
    fn non_finite_quotient_reports_index() {
        let analytic = [0.0, 0.0];
        let r = finite_difference_report(&analytic, 0..2, 1e-5, 1e-4, |i, d| {
            Ok((if i == 1 && d > 0.0 { f64::INFINITY } else { 0.0 }, 0))
        })
        .unwrap();
        assert!(!r.passed);
        assert_eq!(r.non_finite_index, Some(1));
    }
}
