use vinegof::bicop::FitCriterion;
use vinegof::gof::{fit_and_test, test_statistic};
use vinegof::margins::{fit_margins, ifm_transform, pseudo_observations, MarginFamily};
use vinegof::power_lab::fixtures::{study_two_model, study_one_model, TauLevel};
use vinegof::vine::{fit_sequential, read_model, refit, select_mst, write_model_file, FitOptions};
use vinegof::{BicopFamily, CopulaSample, FittedModel, GofOptions, VineError};

#[test]
fn files_roundtrip_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let m = study_two_model();
    let path = dir.path().join("m.vine");
    write_model_file(&m, &path).unwrap();
    assert_eq!(read_model(&path).unwrap(), m);
    let x = m.simulate(250, 1).unwrap();
    let csv = dir.path().join("x.csv");
    x.write_csv_file(&csv).unwrap();
    assert_eq!(CopulaSample::read_csv_file(&csv).unwrap(), x);
}

#[test]
fn select_fit_and_test() {
    let truth = study_one_model(TauLevel::Medium);
    let x = truth.simulate(800, 2).unwrap();
    let selected = select_mst(&x, &BicopFamily::all(), FitCriterion::Aic).unwrap();
    assert!(selected.loglik(&x).unwrap() > 0.0);
    let (fitted, r) = fit_and_test(&selected, &x, &GofOptions::default()).unwrap();
    assert_eq!(r.p, fitted.n_params());
    assert_eq!(r.dof, r.p * (r.p + 1) / 2);
    assert!((0.0..=1.0).contains(&r.p_asymptotic));
    // the test refuses parameters that were not estimated on the sample
    let other = truth.simulate(800, 3).unwrap();
    let f = FittedModel::fitted_on(fitted, &x);
    assert!(matches!(test_statistic(&f, &other, &GofOptions::default()), Err(VineError::ParamsNotFitted)));
}

#[test]
fn raw_data_through_estimated_margins() {
    let truth = study_one_model(TauLevel::Mixed);
    let u = truth.simulate(1000, 4).unwrap();
    let raw: Vec<Vec<f64>> =
        u.columns().into_iter().map(|c| c.into_iter().map(|v| 2.0 * vinegof::special::norm_quantile(v) + 1.0).collect()).collect();
    let fitted = fit_margins(&raw, &[MarginFamily::Normal; 5]).unwrap();
    let ifm = ifm_transform(&raw, &fitted).unwrap();
    let ranks = pseudo_observations(&raw).unwrap();
    let fams = truth.families();
    let a = fit_sequential(truth.structure(), &fams, &ifm).unwrap();
    let b = fit_sequential(truth.structure(), &fams, &ranks).unwrap();
    let c = refit(&truth, &u, &FitOptions::default()).unwrap();
    for ((x, y), z) in a.pairs().iter().zip(b.pairs()).zip(c.pairs()) {
        assert!((x.tau() - z.tau()).abs() < 0.05, "{} vs {}", x.tau(), z.tau());
        assert!((y.tau() - z.tau()).abs() < 0.05, "{} vs {}", y.tau(), z.tau());
    }
}
