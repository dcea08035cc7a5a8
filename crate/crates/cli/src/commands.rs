use crate::config::ConfigFile;
use crate::{FitArgs, GofArgs, MarginsArgs, SelectArgs, SimulateArgs, StudyArgs};
use serde::Serialize;
use std::path::{Path, PathBuf};
use vinegof::bicop::FitCriterion;
use vinegof::gof::{bootstrap_pvalue, test_statistic, BootstrapConfig};
use vinegof::margins::{fit_margins, ifm_transform, pseudo_observations, read_raw_csv, MarginFamily};
use vinegof::power_lab::{run_study, study_config, write_outputs, AltSource, Alternative, Margins, PValueMode, StudyConfig};
use vinegof::vine::{
    fit_full, fit_sequential, read_model, refit, select_families, select_mst, write_model_file, FitOptions, VineSpecFile,
};
use vinegof::{BicopFamily, CopulaSample, FittedModel, GofOptions, RVineModel, Result, VineError};

fn fit_options(full: bool) -> FitOptions {
    if full {
        FitOptions::full()
    } else {
        FitOptions::default()
    }
}

fn parse_list<T: std::str::FromStr<Err = VineError>>(s: &str) -> Result<Vec<T>> {
    s.split(',').filter(|x| !x.trim().is_empty()).map(|x| x.trim().parse()).collect()
}

/// Copula data from a CSV, transforming raw margins if asked.
fn load_data(path: &Path, margins: Option<&str>) -> Result<CopulaSample> {
    match margins.unwrap_or("known") {
        "known" => CopulaSample::read_csv_file(path),
        "rank" => pseudo_observations(&read_raw_csv(path)?.1),
        "ifm" => {
            let (_, cols) = read_raw_csv(path)?;
            let fitted = fit_margins(&cols, &vec![MarginFamily::Normal; cols.len()])?;
            ifm_transform(&cols, &fitted)
        }
        other => Err(VineError::Config(format!("unknown margins '{other}', expected known, rank or ifm"))),
    }
}

#[derive(Serialize)]
struct FitReport {
    n: usize,
    d: usize,
    n_params: usize,
    loglik: f64,
    aic: f64,
    bic: f64,
}

impl FitReport {
    fn new(model: &RVineModel, sample: &CopulaSample) -> Result<Self> {
        let loglik = model.loglik(sample)?;
        let p = model.n_params() as f64;
        Ok(FitReport {
            n: sample.n(),
            d: sample.d(),
            n_params: model.n_params(),
            loglik,
            aic: -2.0 * loglik + 2.0 * p,
            bic: -2.0 * loglik + p * (sample.n() as f64).ln(),
        })
    }
}

fn print_json<T: Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("plain data serializes"));
}

pub fn simulate(a: &SimulateArgs, cfg: &ConfigFile) -> Result<()> {
    let model = read_model(cfg.require(a.model.clone(), "model")?)?;
    let n: usize = cfg.require(a.n, "n")?;
    let seed: u64 = cfg.require(a.seed, "seed")?;
    let out: PathBuf = cfg.require(a.out.clone(), "out")?;
    model.simulate(n, seed)?.write_csv_file(&out)?;
    println!("n={n} d={} seed={seed} out={}", model.d(), out.display());
    Ok(())
}

pub fn fit(a: &FitArgs, cfg: &ConfigFile) -> Result<()> {
    let spec = VineSpecFile::read(cfg.require(a.spec.clone(), "spec")?)?;
    let data: PathBuf = cfg.require(a.data.clone(), "data")?;
    let margins: Option<String> = cfg.pick(a.margins.clone(), "margins")?;
    let sample = load_data(&data, margins.as_deref())?;
    let full = cfg.switch(a.full, "full")?;
    let model = if let Ok(start) = spec.model() {
        refit(&start, &sample, &fit_options(full))?
    } else {
        let families = spec.families()?;
        let seq = fit_sequential(&spec.structure, &families, &sample)?;
        if spec.shared_df {
            refit(&seq.with_shared_df()?, &sample, &fit_options(full))?
        } else if full {
            fit_full(&spec.structure, &families, &sample, Some(&seq))?.model
        } else {
            seq
        }
    };
    if let Some(out) = cfg.pick(a.out.clone(), "out")? {
        write_model_file(&model, out)?;
    }
    print_json(&FitReport::new(&model, &sample)?);
    Ok(())
}

pub fn gof(a: &GofArgs, cfg: &ConfigFile) -> Result<()> {
    let model = read_model(cfg.require(a.model.clone(), "model")?)?;
    let sample = CopulaSample::read_csv_file(cfg.require::<PathBuf>(a.data.clone(), "data")?)?;
    let full = cfg.switch(a.full, "full")?;
    let refit_first = cfg.switch(a.refit, "refit")?;
    let assume = cfg.switch(a.assume_fitted, "assume-fitted")?;
    let opts = GofOptions { allow_unfitted: assume, fit: fit_options(full), ..Default::default() };
    let bootstrap = match &a.bootstrap {
        Some(v) => Some((v[0], v[1])),
        None => match cfg.raw("bootstrap") {
            Some(s) => {
                let v: Vec<usize> = s
                    .split_whitespace()
                    .map(|x| x.parse().map_err(|_| VineError::Config(format!("bootstrap={s}: expected 'B N'"))))
                    .collect::<Result<_>>()?;
                match v[..] {
                    [b, n] => Some((b, n)),
                    _ => return Err(VineError::Config(format!("bootstrap={s}: expected 'B N'"))),
                }
            }
            None => None,
        },
    };
    let result = if let Some((b, n)) = bootstrap {
        let seed = cfg.pick(a.seed, "seed")?.ok_or_else(|| VineError::Config("--seed is required with --bootstrap".into()))?;
        bootstrap_pvalue(&model, &sample, BootstrapConfig { b, n, seed }, &opts)?.result
    } else {
        let fitted = if refit_first {
            FittedModel::fit(&model, &sample, &opts.fit)?
        } else {
            FittedModel::external(model)
        };
        test_statistic(&fitted, &sample, &opts)?
    };
    for w in &result.warnings {
        eprintln!("warning: {w}");
    }
    match cfg.pick::<PathBuf>(a.out.clone(), "out")? {
        Some(p) => std::fs::write(p, result.to_json())?,
        None => println!("{}", result.to_json()),
    }
    Ok(())
}

fn parse_margins(s: &str, d: usize) -> Result<Margins> {
    match s {
        "known" => Ok(Margins::Known),
        "rank" => Ok(Margins::RankBased),
        "ifm" => Ok(Margins::Ifm(vec![1.0; d])),
        _ => match s.strip_prefix("ifm:") {
            Some(list) => Ok(Margins::Ifm(
                list.split(',')
                    .map(|x| x.trim().parse().map_err(|_| VineError::Config(format!("bad margin scale '{x}'"))))
                    .collect::<Result<_>>()?,
            )),
            None => Err(VineError::Config(format!("unknown margins '{s}', expected known, rank, ifm or ifm:s1,...,sd"))),
        },
    }
}

/// A study built from `truth` and `alternatives` keys of the config file.
fn custom_study(cfg: &ConfigFile) -> Result<StudyConfig> {
    let truth_path = cfg.raw("truth").ok_or_else(|| VineError::Config("a study id or a 'truth' model file is required".into()))?;
    let truth = read_model(truth_path)?;
    let list = cfg.raw("alternatives").ok_or_else(|| VineError::Config("'alternatives' is required with 'truth'".into()))?;
    let alternatives = list
        .split(',')
        .map(|item| {
            let (name, source) = item
                .trim()
                .split_once(':')
                .ok_or_else(|| VineError::Config(format!("alternative '{item}' is not name:source")))?;
            let source = match source {
                "gauss" => AltSource::GaussPaired,
                "self" => AltSource::Fixed(truth.clone()),
                "mst" => AltSource::Selected { structure: None, families: BicopFamily::all(), criterion: FitCriterion::Aic },
                path => AltSource::Fixed(read_model(path)?),
            };
            Ok(Alternative::new(name, source))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(StudyConfig::new(cfg.raw("name").unwrap_or("custom"), truth, alternatives))
}

pub fn study(a: &StudyArgs, cfg: &ConfigFile) -> Result<()> {
    let id: Option<String> = cfg.pick(a.id.clone(), "study")?;
    let mut c = match id {
        Some(id) => study_config(id.parse()?),
        None => custom_study(cfg)?,
    };
    c.n = cfg.pick_or(a.n, "n", c.n)?;
    c.r = cfg.pick_or(a.r, "r", c.r)?;
    c.seed = cfg.require(a.seed, "seed")?;
    c.prerun_n = cfg.pick_or(a.prerun_n, "prerun-n", c.prerun_n)?;
    if let Some(m) = cfg.pick::<String>(a.margins.clone(), "margins")? {
        c.margins = parse_margins(&m, c.truth.d())?;
    }
    c.pvalue_mode = cfg.pick_or::<PValueMode>(a.pvalues.as_deref().map(str::parse).transpose()?, "pvalues", c.pvalue_mode)?;
    c.fit = fit_options(cfg.switch(a.full, "full")?);
    let out: PathBuf = cfg.require(a.out.clone(), "out")?;
    let result = run_study(&c)?;
    write_outputs(&result, &out)?;
    println!("study {}  n={}  R={}  seed={}", c.name, c.n, c.r, c.seed);
    println!("{:<12} {:>6} {:>8} {:>8} {:>8}", "arm", "p", "0.01", "0.05", "0.10");
    for row in result.power_table() {
        for (label, v) in [("sim", row.simulated), ("asy", row.asymptotic)] {
            if let Some(v) = v {
                println!("{:<12} {:>6} {:>8.3} {:>8.3} {:>8.3}", row.arm, label, v[0], v[1], v[2]);
            }
        }
        if row.failures > 0 {
            println!("{:<12} {} failed replicates", row.arm, row.failures);
        }
    }
    println!("outputs in {}", out.display());
    Ok(())
}

pub fn select(a: &SelectArgs, cfg: &ConfigFile) -> Result<()> {
    let data: PathBuf = cfg.require(a.data.clone(), "data")?;
    let margins: Option<String> = cfg.pick(a.margins.clone(), "margins")?;
    let sample = load_data(&data, margins.as_deref())?;
    let criterion = cfg.pick_or(a.criterion.as_deref().map(str::parse).transpose()?, "criterion", FitCriterion::Aic)?;
    let families = match cfg.pick::<String>(a.families.clone(), "families")? {
        Some(s) => parse_list::<BicopFamily>(&s)?,
        None => BicopFamily::all(),
    };
    let model = match cfg.pick::<PathBuf>(a.structure.clone(), "structure")? {
        Some(p) => select_families(&VineSpecFile::read(p)?.structure, &sample, &families, criterion)?,
        None => select_mst(&sample, &families, criterion)?,
    };
    if let Some(out) = cfg.pick(a.out.clone(), "out")? {
        write_model_file(&model, out)?;
    } else {
        print!("{}", vinegof::vine::write_model(&model));
    }
    let report = FitReport::new(&model, &sample)?;
    eprintln!("loglik={} aic={} bic={} n_params={}", report.loglik, report.aic, report.bic, report.n_params);
    Ok(())
}

pub fn margins(a: &MarginsArgs, cfg: &ConfigFile) -> Result<()> {
    let data: PathBuf = cfg.require(a.data.clone(), "data")?;
    let method: String = cfg.pick_or(a.method.clone(), "method", "rank".to_string())?;
    let out: PathBuf = cfg.require(a.out.clone(), "out")?;
    let (_, cols) = read_raw_csv(&data)?;
    let sample = match method.as_str() {
        "rank" => pseudo_observations(&cols)?,
        "ifm" => {
            let fams = parse_list::<MarginFamily>(&cfg.pick_or(a.families.clone(), "families", "normal".to_string())?)?;
            let fams = match fams.len() {
                1 => vec![fams[0]; cols.len()],
                _ => fams,
            };
            let fitted = fit_margins(&cols, &fams)?;
            if let Some(p) = cfg.pick::<PathBuf>(a.fits.clone(), "fits")? {
                std::fs::write(p, serde_json::to_string_pretty(&fitted).expect("plain data serializes"))?;
            }
            ifm_transform(&cols, &fitted)?
        }
        other => return Err(VineError::Config(format!("unknown method '{other}', expected rank or ifm"))),
    };
    sample.write_csv_file(&out)?;
    println!("n={} d={} method={method} out={}", sample.n(), sample.d(), out.display());
    Ok(())
}
