use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use vinegof::power_lab::fixtures::{study_one_model, TauLevel};
use vinegof::vine::{write_model, write_structure};
use vinegof::{BicopFamily, BicopSpec, RVineModel, RVineStructure};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vinegof")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn small_model() -> RVineModel {
    let s = RVineStructure::dvine(&[1, 2, 3]).unwrap();
    let pairs = vec![
        BicopSpec::from_tau("clayton".parse().unwrap(), 0.4, None).unwrap(),
        BicopSpec::from_tau(BicopFamily::GAUSS, 0.3, None).unwrap(),
        BicopSpec::from_tau("gumbel".parse().unwrap(), 0.2, None).unwrap(),
    ];
    RVineModel::new(s, pairs).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn json(o: &Output) -> serde_json::Value {
    serde_json::from_str(&stdout(o)).unwrap_or_else(|e| panic!("{e}: {}", stdout(o)))
}

#[test]
fn simulate_writes_reproducible_csv() {
    let dir = tempfile::tempdir().unwrap();
    let model = write(dir.path(), "m.vine", &write_model(&study_one_model(TauLevel::Mixed)));
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    for out in [&a, &b] {
        let o = run(&["simulate", "--model", p(&model), "--n", "100", "--seed", "7", "--out", p(out)]);
        assert!(o.status.success(), "{}", stderr(&o));
        assert!(stdout(&o).contains("n=100 d=5 seed=7"));
    }
    let text = std::fs::read(&a).unwrap();
    assert_eq!(text, std::fs::read(&b).unwrap());
    let text = String::from_utf8(text).unwrap();
    assert_eq!(text.lines().count(), 101);
    assert!(text.lines().all(|l| l.split(',').count() == 5));
}

#[test]
fn input_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.vine", "d=2\n\ntree=1 cond=1,2 given= family=gausss params=0.5\n");
    let out = dir.path().join("x.csv");
    let o = run(&["simulate", "--model", p(&bad), "--n", "10", "--seed", "1", "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
    let good = write(dir.path(), "m.vine", &write_model(&small_model()));
    let o = run(&["simulate", "--model", p(&good), "--n", "10", "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--seed"));
}

#[test]
fn fit_reports_likelihood_criteria() {
    let dir = tempfile::tempdir().unwrap();
    let truth = study_one_model(TauLevel::Mixed);
    let data = dir.path().join("x.csv");
    truth.simulate(600, 3).unwrap().write_csv_file(&data).unwrap();
    let s = truth.structure();

    let indep = write(dir.path(), "indep.vine", &write_structure(s, Some(&vec![BicopFamily::INDEPENDENCE; 10])));
    let o = run(&["fit", "--spec", p(&indep), "--data", p(&data)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = json(&o);
    assert_eq!((r["loglik"].as_f64(), r["aic"].as_f64(), r["bic"].as_f64()), (Some(0.0), Some(0.0), Some(0.0)));
    assert_eq!(r["n_params"], 0);

    let rich = write(dir.path(), "rich.vine", &write_structure(s, Some(&truth.families())));
    let gauss = write(dir.path(), "gauss.vine", &write_structure(s, Some(&vec![BicopFamily::GAUSS; 10])));
    let fitted = dir.path().join("fitted.vine");
    let o = run(&["fit", "--spec", p(&rich), "--data", p(&data), "--out", p(&fitted)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = json(&o);
    let (ll, k, n) = (r["loglik"].as_f64().unwrap(), r["n_params"].as_f64().unwrap(), 600.0f64);
    assert!((r["aic"].as_f64().unwrap() - (-2.0 * ll + 2.0 * k)).abs() < 1e-9);
    assert!((r["bic"].as_f64().unwrap() - (-2.0 * ll + k * n.ln())).abs() < 1e-9);
    assert!(fitted.exists());
    let g = json(&run(&["fit", "--spec", p(&gauss), "--data", p(&data)]));
    assert!(ll > g["loglik"].as_f64().unwrap());

    let full = json(&run(&["fit", "--spec", p(&rich), "--data", p(&data), "--full"]));
    assert!(full["loglik"].as_f64().unwrap() >= ll - 1e-9);
}

#[test]
fn gof_contract() {
    let dir = tempfile::tempdir().unwrap();
    let m = small_model();
    let model = write(dir.path(), "m.vine", &write_model(&m));
    let data = dir.path().join("x.csv");
    m.simulate(300, 5).unwrap().write_csv_file(&data).unwrap();

    let o = run(&["gof", "--model", p(&model), "--data", p(&data)]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));

    let o = run(&["gof", "--model", p(&model), "--data", p(&data), "--refit"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = json(&o);
    assert_eq!(r["dof"], 6);
    for key in ["statistic", "p_asymptotic", "p_bootstrap", "regularized", "v_condition", "n", "p", "B", "N", "seed"] {
        assert!(r.get(key).is_some(), "{key}");
    }

    let o = run(&["gof", "--model", p(&model), "--data", p(&data), "--assume-fitted"]);
    assert!(o.status.success());
    assert!(stderr(&o).contains("warning"));

    let indep = write(dir.path(), "i.vine", &write_model(&RVineModel::independence(m.structure().clone()).unwrap()));
    let o = run(&["gof", "--model", p(&indep), "--data", p(&data), "--refit"]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
}

#[test]
fn bootstrap_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let m = small_model();
    let model = write(dir.path(), "m.vine", &write_model(&m));
    let data = dir.path().join("x.csv");
    m.simulate(300, 6).unwrap().write_csv_file(&data).unwrap();
    let args = ["gof", "--model", p(&model), "--data", p(&data), "--bootstrap", "100", "400", "--seed", "9"];
    let a = json(&run(&args));
    let b = json(&run(&args));
    assert_eq!(a, b);
    assert_eq!(a["B"], 100);
    assert_eq!(a["N"], 400);
    let pb = a["p_bootstrap"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&pb));
    let o = run(&["gof", "--model", p(&model), "--data", p(&data), "--bootstrap", "100", "400"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn gof_under_the_null_is_not_always_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let m = study_one_model(TauLevel::Mixed);
    let model = write(dir.path(), "m.vine", &write_model(&m));
    let data = dir.path().join("x.csv");
    let mut rejected = 0;
    for seed in 0..10 {
        m.simulate(10_000, seed).unwrap().write_csv_file(&data).unwrap();
        let r = json(&run(&["gof", "--model", p(&model), "--data", p(&data), "--refit"]));
        if r["p_asymptotic"].as_f64().unwrap() < 0.05 {
            rejected += 1;
        }
    }
    assert!(rejected < 10);
}

#[test]
fn study_from_config_file_with_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let truth = write(dir.path(), "truth.vine", &write_model(&small_model()));
    let out = dir.path().join("out");
    let cfg = write(
        dir.path(),
        "study.cfg",
        &format!(
            "# small custom study\nname=small\ntruth={}\nalternatives=Gauss:gauss,self:self\nn=100\nR=15\nseed=3\n\
             pvalues=both\nprerun_n=200\nout={}\n",
            p(&truth),
            p(&out)
        ),
    );
    let o = run(&["study", "--config", p(&cfg), "--R", "12", "--threads", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("R=12"));
    let stats = std::fs::read_to_string(out.join("statistics.csv")).unwrap();
    assert_eq!(stats.lines().count(), 1 + 3 * 12);
    let curves = std::fs::read_to_string(out.join("curves.csv")).unwrap();
    let header: Vec<&str> = curves.lines().next().unwrap().split(',').collect();
    assert_eq!(header, ["alpha", "F_M1", "Gauss", "self", "F_M1_asy", "Gauss_asy", "self_asy"]);
    let rows: Vec<Vec<f64>> =
        curves.lines().skip(1).map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 215);
    for c in 1..header.len() {
        assert!(rows.windows(2).all(|w| w[0][c] <= w[1][c]));
    }
    let study: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("study.json")).unwrap()).unwrap();
    assert_eq!(study["R"], 12);
    assert_eq!(study["n"], 100);
}

#[test]
fn unknown_study_lists_valid_ids() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["study", "IV", "--seed", "1", "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    for id in ["I_mixed", "I_low", "I_med", "II", "III_mtcop", "III_rvine_t"] {
        assert!(e.contains(id), "{e}");
    }
}

#[test]
fn select_and_margins_commands() {
    let dir = tempfile::tempdir().unwrap();
    let m = small_model();
    let u = m.simulate(400, 8).unwrap();
    // raw data with normal margins of different scales
    let raw = dir.path().join("raw.csv");
    let mut text = String::from("a,b,c\n");
    for row in u.rows() {
        let x: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(j, &v)| ((j + 1) as f64 * vinegof::special::norm_quantile(v)).to_string())
            .collect();
        text.push_str(&x.join(","));
        text.push('\n');
    }
    std::fs::write(&raw, text).unwrap();
    let (ranks, ifm, fits) = (dir.path().join("r.csv"), dir.path().join("i.csv"), dir.path().join("fits.json"));
    let o = run(&["margins", "--data", p(&raw), "--method", "rank", "--out", p(&ranks)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = run(&["margins", "--data", p(&raw), "--method", "ifm", "--out", p(&ifm), "--fits", p(&fits)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let f: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&fits).unwrap()).unwrap();
    assert_eq!(f.as_array().unwrap().len(), 3);
    assert_eq!(f[0]["family"], "normal");

    let selected = dir.path().join("sel.vine");
    let o = run(&["select", "--data", p(&ranks), "--criterion", "bic", "--out", p(&selected)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(std::fs::read_to_string(&selected).unwrap().starts_with("d=3\n"));
    let o = run(&["select", "--data", p(&raw), "--margins", "rank", "--families", "gauss,clayton,gumbel"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("tree=2"));
    let o = run(&["select", "--data", p(&raw)]);
    assert_eq!(o.status.code(), Some(2));
}
