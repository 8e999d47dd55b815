//! Desk-scale Monte Carlo checks. These take several minutes on one core.

use antitonic::experiment::{scaled_error_covariance, MseRow};
use antitonic::*;
use nalgebra::DMatrix;

fn mse(rows: &[MseRow], est: Estimator) -> f64 {
    let row = rows.iter().find(|r| r.estimator == est).unwrap();
    assert_eq!(row.failures, 0, "{est} failed");
    row.mse
}

fn spec(noise: &str, n: usize, d: usize, reps: usize, seed: u64, estimators: &[Estimator]) -> ExperimentSpec {
    let mut s = ExperimentSpec::new(noise.parse().unwrap(), n, d, reps, seed);
    s.estimators = estimators.to_vec();
    s
}

#[test]
fn lad_beats_least_squares_under_cauchy_noise() {
    let rows = mse_compare(&spec("cauchy", 2000, 3, 50, 11, &[Estimator::Lad, Estimator::Ols])).unwrap();
    let ratio = mse(&rows, Estimator::Lad) / mse(&rows, Estimator::Ols);
    assert!(ratio < 0.05, "{ratio}");
}

#[test]
fn gaussian_noise_ordering() {
    use Estimator::*;
    let rows = mse_compare(&spec("gaussian", 600, 6, 200, 12, &[Asm, OneStep, Lad, Ols])).unwrap();
    let (asm, one, lad, ols) = (mse(&rows, Asm), mse(&rows, OneStep), mse(&rows, Lad), mse(&rows, Ols));
    assert!(asm <= 1.15 * ols, "asm {asm} ols {ols}");
    assert!(ols <= asm && asm <= lad, "ols {ols} asm {asm} lad {lad}");
    assert!(asm < one && one < lad, "asm {asm} 1s {one} lad {lad}");
    assert!((one / 9.77e-3 - 1.0).abs() <= 0.3, "1s {one}");
}

#[test]
fn cauchy_noise_matches_the_oracle() {
    use Estimator::*;
    let rows = mse_compare(&spec("cauchy", 600, 6, 200, 13, &[Oracle, Asm, Ols])).unwrap();
    let (oracle, asm, ols) = (mse(&rows, Oracle), mse(&rows, Asm), mse(&rows, Ols));
    assert!((asm / oracle - 1.0).abs() <= 0.15, "asm {asm} oracle {oracle}");
    assert!(ols > 100.0 * asm, "ols {ols} asm {asm}");
}

#[test]
fn location_mixture_separates_the_estimators() {
    use Estimator::*;
    let mut s = spec("loc_mix", 600, 6, 100, 14, &[Oracle, Asm, Alt, OneStep, Lad]);
    s.fit.pilot = Pilot::Ols;
    let rows = mse_compare(&s).unwrap();
    let (oracle, asm, alt) = (mse(&rows, Oracle), mse(&rows, Asm), mse(&rows, Alt));
    assert!((alt / oracle - 1.0).abs() <= 0.25, "alt {alt} oracle {oracle}");
    assert!(mse(&rows, OneStep) > 10.0 * asm, "1s {} asm {asm}", mse(&rows, OneStep));
    assert!(mse(&rows, Lad) > 100.0 * asm, "lad {} asm {asm}", mse(&rows, Lad));
}

#[test]
fn symmetric_crossfit_covariance_under_gaussian_noise() {
    let mut s = spec("gaussian", 1200, 4, 500, 15, &[Estimator::Asm]);
    s.intercept = false;
    s.fit.mode = FitMode::Symmetric;
    s.fit.folds = Folds::Three;
    let (cov, failures) = scaled_error_covariance(&s, Estimator::Asm).unwrap();
    let target = DMatrix::<f64>::identity(4, 4);
    let rel = (&cov - &target).norm() / target.norm();
    assert_eq!(failures, 0);
    assert!(rel <= 0.2, "{rel}: {cov}");
}

#[test]
fn symmetric_mode_coverage_under_gaussian_noise() {
    let mut s = spec("gaussian", 600, 4, 2000, 16, &[Estimator::Asm]);
    s.intercept = false;
    s.fit.mode = FitMode::Symmetric;
    let rep = coverage(&s, &[0.05]).unwrap();
    for c in &rep.levels[0].coordinate {
        assert!((0.93..=0.97).contains(c), "{:?}", rep.levels[0].coordinate);
    }
    for p in &rep.ks_pvalues {
        assert!(*p > 0.01, "{:?}", rep.ks_pvalues);
    }
}

#[test]
fn information_estimate_under_the_inference_mixture() {
    let mut s = spec("infer_mix", 600, 4, 500, 17, &[Estimator::Asm]);
    s.fit.mode = FitMode::Intercept;
    let rep = coverage(&s, &[0.05]).unwrap();
    assert!(
        rep.i_star_rmse <= 0.1,
        "{} (mean {}, target {})",
        rep.i_star_rmse,
        rep.i_star_mean,
        rep.target_i_star
    );
}
