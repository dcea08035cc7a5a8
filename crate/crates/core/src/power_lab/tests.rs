use super::*;
use crate::bicop::BicopSpec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_truth() -> RVineModel {
    let s = RVineStructure::dvine(&[1, 2, 3]).unwrap();
    let pairs = vec![
        BicopSpec::from_tau("clayton".parse().unwrap(), 0.4, None).unwrap(),
        BicopSpec::from_tau(BicopFamily::GAUSS, 0.3, None).unwrap(),
        BicopSpec::from_tau("gumbel".parse().unwrap(), 0.2, None).unwrap(),
    ];
    RVineModel::new(s, pairs).unwrap()
}

fn small_config(r: usize) -> StudyConfig {
    let truth = small_truth();
    let mut c = StudyConfig::new(
        "small",
        truth.clone(),
        vec![Alternative::new("self", AltSource::Fixed(truth)), Alternative::new("Gauss", AltSource::GaussPaired)],
    );
    c.n = 150;
    c.r = r;
    c.prerun_n = 300;
    c.seed = 11;
    c.pvalue_mode = PValueMode::Both;
    c
}

#[test]
fn grid_shape() {
    let g = alpha_grid();
    assert_eq!(g.len(), 215);
    assert_eq!(&g[..3], &[0.001, 0.002, 0.003]);
    assert_eq!(*g.last().unwrap(), 0.999);
    assert!(g.windows(2).all(|w| w[0] < w[1]));
    for level in output::REPORT_LEVELS {
        assert!(g.contains(&level));
    }
}

#[test]
fn empirical_cdf_examples() {
    let g = alpha_grid();
    assert!(empirical_cdf_curve(&[1.0; 7], &g).iter().all(|&v| v == 0.0));
    assert_eq!(empirical_cdf(&[0.25, 0.75], 0.5), 0.5);
    assert_eq!(empirical_cdf_curve(&[0.25, 0.75], &[0.25, 0.5, 0.75]), vec![0.5, 0.5, 1.0]);
}

#[test]
fn uniform_pvalues_stay_in_the_band() {
    let g = alpha_grid();
    let band = dkw_halfwidth(500, 0.01);
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p: Vec<f64> = (0..500).map(|_| rng.random::<f64>()).collect();
        let curve = empirical_cdf_curve(&p, &g);
        assert!(curve.windows(2).all(|w| w[0] <= w[1]));
        assert!(curve.iter().zip(&g).all(|(f, a)| (f - a).abs() <= band), "seed {seed}");
    }
}

#[test]
fn study_ids() {
    for id in StudyId::ALL {
        assert_eq!(id.name().parse::<StudyId>().unwrap(), id);
        let c = study_config(id);
        c.validate().unwrap();
        assert_eq!(c.truth.d(), 5);
    }
    let err = "IV".parse::<StudyId>().unwrap_err().to_string();
    assert!(err.contains("I_mixed") && err.contains("III_rvine_t"), "{err}");
}

#[test]
fn invalid_configs_are_rejected() {
    let mut c = small_config(1);
    assert!(c.validate().is_err());
    c.r = 10;
    c.n = 20;
    assert!(c.validate().is_err());
    c.n = 100;
    c.margins = Margins::Ifm(vec![1.0, 2.0]);
    assert!(c.validate().is_err());
    c.margins = Margins::Known;
    c.alternatives.push(Alternative::new("M1", AltSource::GaussPaired));
    assert!(c.validate().is_err());
}

#[test]
fn margin_treatments() {
    let u = small_truth().simulate(400, 3).unwrap();
    let ranks = Margins::RankBased.apply(&u).unwrap();
    assert_eq!(ranks, pseudo_observations(&u.columns()).unwrap());
    let ifm = Margins::Ifm(vec![1.0, 3.0, 5.0]).apply(&u).unwrap();
    for j in 0..3 {
        let (a, b) = (u.column(j), ifm.column(j));
        let gap = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(gap < 0.1, "column {j}: {gap}");
        assert_eq!(pseudo_observations(&[a]).unwrap(), pseudo_observations(&[b]).unwrap());
    }
}

#[test]
fn small_study_is_reproducible_and_well_formed() {
    let c = small_config(40);
    let a = run_study(&c).unwrap();
    let b = run_study(&c).unwrap();
    assert_eq!(a.arms[1].statistics, b.arms[1].statistics);
    assert_eq!(a.curves, b.curves);
    assert_eq!(a.arms.len(), 3);
    assert_eq!(a.alternative_models[1].families(), vec![BicopFamily::GAUSS; 3]);
    let names: Vec<&str> = a.curves.columns.iter().map(|c| c.0.as_str()).collect();
    assert_eq!(names, ["F_M1", "self", "Gauss", "F_M1_asy", "self_asy", "Gauss_asy"]);
    for (_, col) in &a.curves.columns {
        assert!(col.windows(2).all(|w| w[0] <= w[1]));
        assert!(col.iter().all(|v| (0.0..=1.0).contains(v)));
    }
    // M1 simulated p-values are ranks within the M1 statistics
    let m1 = &a.arms[0];
    let ok = m1.statistics.iter().flatten().count();
    let mut p: Vec<f64> = m1.p_simulated.iter().flatten().map(|v| v * ok as f64).collect();
    p.sort_by(f64::total_cmp);
    assert!(p.iter().enumerate().all(|(k, v)| (v - (k + 1) as f64).abs() < 1e-9));

    let dir = tempfile::tempdir().unwrap();
    write_outputs(&a, dir.path()).unwrap();
    let stats = std::fs::read_to_string(dir.path().join("statistics.csv")).unwrap();
    assert!(stats.starts_with("replicate,arm,t,p_asy,p_sim\n"));
    assert_eq!(stats.lines().count(), 1 + 3 * 40);
    let curves = std::fs::read_to_string(dir.path().join("curves.csv")).unwrap();
    assert_eq!(curves.lines().count(), 216);
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("study.json")).unwrap()).unwrap();
    assert_eq!(json["R"], 40);
    assert_eq!(json["power"].as_array().unwrap().len(), 3);
}

#[test]
fn self_alternative_tracks_the_diagonal() {
    // M2 = M1: the alternative's statistics are a second null sample, so the
    // size-power curve stays within a two-sample band of the diagonal
    let a = run_study(&small_config(100)).unwrap();
    let band = 2.0 * dkw_halfwidth(100, 0.01);
    let m1 = &a.curves.columns[0].1;
    let m2 = &a.curves.columns[1].1;
    for (x, y) in m1.iter().zip(m2) {
        assert!((x - y).abs() <= band, "{x} vs {y}");
    }
}
