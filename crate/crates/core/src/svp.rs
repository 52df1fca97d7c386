//! Support-vector proliferation: the sign and leave-one-out conditions and
//! their agreement with the SVM solver.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::solvers::{MniSolution, SvmSolution};

/// Default relative indeterminacy band for `|y_i beta_i|`.
pub const DEFAULT_TAU: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvpVerdict {
    /// `min_i y_i beta_i > 0`
    pub svp: bool,
    /// `y_i beta_i`
    pub sign_margins: Vec<f64>,
    /// `y_i eta_hat_{\i}(x_i)`
    pub loo_margins: Vec<f64>,
    pub min_sign_margin: f64,
    pub max_loo_margin: f64,
    pub indeterminate: bool,
    pub indeterminate_indices: Vec<usize>,
    pub solver_agreement: Option<bool>,
}

impl SvpVerdict {
    /// SVP that is not inside the numerical band.
    pub fn counts_as_svp(&self) -> bool {
        self.svp && !self.indeterminate
    }
}

pub fn detect_svp(mni: &MniSolution, y: &[f64], tau: f64) -> Result<SvpVerdict> {
    let n = mni.beta.len();
    if y.len() != n {
        return Err(Error::domain("labels and solution differ in length"));
    }
    let scale = mni.beta.iter().map(|b| b.abs()).fold(0.0, f64::max);
    let sign_margins: Vec<f64> = (0..n).map(|i| y[i] * mni.beta[i]).collect();
    let loo_margins = mni.loo_margins.clone();
    let mut indeterminate_indices = Vec::new();
    for i in 0..n {
        if sign_margins[i].abs() <= tau * scale {
            indeterminate_indices.push(i);
            continue;
        }
        if (sign_margins[i] > 0.0) != (loo_margins[i] < 1.0) {
            return Err(Error::InvariantViolation {
                index: i,
                sign_margin: sign_margins[i],
                loo_margin: loo_margins[i],
            });
        }
    }
    let min_sign_margin = sign_margins.iter().copied().fold(f64::INFINITY, f64::min);
    let max_loo_margin = loo_margins.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(SvpVerdict {
        svp: min_sign_margin > 0.0,
        sign_margins,
        loo_margins,
        min_sign_margin,
        max_loo_margin,
        indeterminate: !indeterminate_indices.is_empty(),
        indeterminate_indices,
        solver_agreement: None,
    })
}

/// Checks the verdict against the SVM: equal coefficients under SVP, a
/// dropped point otherwise. Records the outcome in `verdict`.
pub fn cross_check_solver(
    verdict: &mut SvpVerdict,
    svm: &SvmSolution,
    mni: &MniSolution,
    rel_tol: f64,
) -> Result<bool> {
    if svm.kkt.max_violation > svm.tol {
        return Err(Error::domain(format!(
            "svm solution not converged (kkt violation {:e} > {:e})",
            svm.kkt.max_violation, svm.tol
        )));
    }
    if svm.beta.len() != mni.beta.len() {
        return Err(Error::domain("svm and mni solutions differ in length"));
    }
    let agree = if verdict.svp {
        let scale = mni.beta.iter().map(|b| b.abs()).fold(0.0, f64::max);
        svm.beta
            .iter()
            .zip(&mni.beta)
            .all(|(a, b)| (a - b).abs() <= rel_tol * scale)
    } else {
        svm.support_set.len() < svm.beta.len()
    };
    verdict.solver_agreement = Some(agree);
    Ok(agree)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solvers::{solve_mni, solve_svm, SvmOptions};
    use nalgebra::DMatrix;

    #[test]
    fn single_point_is_svp() {
        let k = DMatrix::from_element(1, 1, 3.5);
        let mni = solve_mni(&k, &[-1.0]).unwrap();
        let v = detect_svp(&mni, &[-1.0], DEFAULT_TAU).unwrap();
        assert!(v.svp && !v.indeterminate);
        assert!(v.loo_margins[0].abs() < 1e-15);
    }

    #[test]
    fn two_by_two_verdict() {
        let k = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let mni = solve_mni(&k, &[1.0, 1.0]).unwrap();
        let v = detect_svp(&mni, &[1.0, 1.0], DEFAULT_TAU).unwrap();
        assert!(v.svp);
        for i in 0..2 {
            assert!((v.sign_margins[i] - 1.0 / 3.0).abs() < 1e-15);
            assert!((v.loo_margins[i] - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn identity_cross_check() {
        let k = DMatrix::identity(2, 2);
        let y = [1.0, -1.0];
        let mni = solve_mni(&k, &y).unwrap();
        let svm = solve_svm(&k, &y, SvmOptions::default()).unwrap();
        let mut v = detect_svp(&mni, &y, DEFAULT_TAU).unwrap();
        assert!(cross_check_solver(&mut v, &svm, &mni, 1e-6).unwrap());
        assert_eq!(v.solver_agreement, Some(true));
    }

    #[test]
    fn three_point_geometry_is_not_svp() {
        // PD neighbour of the rank-2 linear-kernel instance; same active set
        let x = [[1.0, 0.0, 0.0], [-1.0, 0.1, 0.0], [2.0, 2.0, 1e-3]];
        let k = DMatrix::from_fn(3, 3, |i, j| (0..3).map(|c| x[i][c] * x[j][c]).sum());
        let y = [1.0, -1.0, 1.0];
        let mni = solve_mni(&k, &y).unwrap();
        let mut v = detect_svp(&mni, &y, DEFAULT_TAU).unwrap();
        assert!(!v.svp);
        let svm = solve_svm(&k, &y, SvmOptions::default()).unwrap();
        assert!(svm.beta[2].abs() <= svm.tol);
        assert!(cross_check_solver(&mut v, &svm, &mni, 1e-6).unwrap());
    }

    #[test]
    fn indeterminate_band() {
        let mni = MniSolution {
            beta: vec![1.0, 1e-12],
            loo_margins: vec![0.2, 1.0],
            inverse_diagonal: vec![1.0, 1.0],
            condition: 1.0,
            residual: 0.0,
            inverse: DMatrix::identity(2, 2),
        };
        let v = detect_svp(&mni, &[1.0, 1.0], DEFAULT_TAU).unwrap();
        assert!(v.indeterminate && !v.counts_as_svp());
        assert_eq!(v.indeterminate_indices, vec![1]);
        let broken = MniSolution {
            loo_margins: vec![1.5, 1.0],
            ..mni
        };
        assert!(matches!(
            detect_svp(&broken, &[1.0, 1.0], DEFAULT_TAU),
            Err(Error::InvariantViolation { index: 0, .. })
        ));
    }
}
