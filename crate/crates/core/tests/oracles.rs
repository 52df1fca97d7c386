use nalgebra::DMatrix;
use svplab::gram::dirichlet_sum;
use svplab::solvers::{loo_refit_margins, solve_mni, solve_svm, SvmOptions};
use svplab::svp::{detect_svp, DEFAULT_TAU};

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * (1.0 + b.abs())
}

#[test]
fn two_point_interpolation_by_hand() {
    let k = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
    let y = [1.0, 1.0];
    let mni = solve_mni(&k, &y).unwrap();
    assert!(mni.beta.iter().all(|&b| close(b, 1.0 / 3.0)));
    assert!(mni.inverse_diagonal.iter().all(|&h| close(h, 2.0 / 3.0)));
    assert!(mni.loo_margins.iter().all(|&m| close(m, 0.5)));
    let refit = loo_refit_margins(&k, &y).unwrap();
    assert!(refit.iter().all(|&m| close(m, 0.5)));

    let verdict = detect_svp(&mni, &y, DEFAULT_TAU).unwrap();
    assert!(verdict.counts_as_svp());
    let svm = solve_svm(&k, &y, SvmOptions::default()).unwrap();
    assert!(svm.certify());
    assert!(svm.beta.iter().zip(&mni.beta).all(|(a, b)| (a - b).abs() <= 1e-9));
}

// K^-1 = [[5, -2], [-2, 1]], so beta = (3, -1) and point 2 is not a support vector
#[test]
fn two_point_without_proliferation() {
    let k = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 5.0]);
    let y = [1.0, 1.0];
    let mni = solve_mni(&k, &y).unwrap();
    assert!(close(mni.beta[0], 3.0) && close(mni.beta[1], -1.0));
    // leaving out point 1 fits beta_2 = 1/5, predicting 2/5 at x_1
    let refit = loo_refit_margins(&k, &y).unwrap();
    assert!(close(refit[0], 0.4) && close(refit[1], 2.0));
    assert!(close(mni.loo_margins[0], 0.4) && close(mni.loo_margins[1], 2.0));

    let verdict = detect_svp(&mni, &y, DEFAULT_TAU).unwrap();
    assert!(!verdict.svp);
    // only point 1 is active: alpha_1 = 1 / K_11
    let svm = solve_svm(&k, &y, SvmOptions::default()).unwrap();
    assert!(svm.certify());
    assert!((svm.beta[0] - 1.0).abs() <= 1e-9 && svm.beta[1].abs() <= 1e-9);
}

#[test]
fn dirichlet_sum_matches_direct_sum() {
    for m in [0usize, 1, 3, 17] {
        assert!(close(dirichlet_sum(0.0, m), (2 * m + 1) as f64));
        for delta in [1e-9, 0.013, 0.25, 0.5, 0.731] {
            let direct: f64 = (-(m as i64)..=m as i64)
                .map(|l| (2.0 * std::f64::consts::PI * l as f64 * delta).cos())
                .sum();
            assert!((dirichlet_sum(delta, m) - direct).abs() <= 1e-10, "m={m} delta={delta}");
        }
    }
}
