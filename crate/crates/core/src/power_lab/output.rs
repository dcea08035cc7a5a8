//! Study output files: `statistics.csv`, `curves.csv` and `study.json`.

use super::{Margins, StudyResult};
use crate::error::Result;
use crate::vine::write_model;
use serde::Serialize;
use std::path::Path;

/// Levels reported in the summary.
pub const REPORT_LEVELS: [f64; 3] = [0.01, 0.05, 0.10];

/// Rejection rates of one arm at the report levels.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PowerRow {
    pub arm: String,
    pub simulated: Option<[f64; 3]>,
    pub asymptotic: Option<[f64; 3]>,
    pub failures: usize,
    pub regularized: usize,
}

impl StudyResult {
    pub fn power_table(&self) -> Vec<PowerRow> {
        let mode = self.config.pvalue_mode;
        self.arms
            .iter()
            .map(|a| PowerRow {
                arm: a.name.clone(),
                simulated: mode.simulated().then(|| REPORT_LEVELS.map(|l| a.rejection_rate(l, false))),
                asymptotic: mode.asymptotic().then(|| REPORT_LEVELS.map(|l| a.rejection_rate(l, true))),
                failures: a.failures(),
                regularized: a.regularized,
            })
            .collect()
    }

    pub fn summary_json(&self) -> String {
        #[derive(Serialize)]
        struct Alt<'a> {
            name: &'a str,
            model: String,
        }
        #[derive(Serialize)]
        struct Summary<'a> {
            name: &'a str,
            n: usize,
            #[serde(rename = "R")]
            r: usize,
            seed: u64,
            prerun_n: usize,
            margins: &'a Margins,
            pvalue_mode: super::PValueMode,
            estimation: crate::vine::EstimationMethod,
            truth: String,
            alternatives: Vec<Alt<'a>>,
            levels: [f64; 3],
            power: Vec<PowerRow>,
        }
        let c = &self.config;
        let s = Summary {
            name: &c.name,
            n: c.n,
            r: c.r,
            seed: c.seed,
            prerun_n: c.prerun_n,
            margins: &c.margins,
            pvalue_mode: c.pvalue_mode,
            estimation: c.fit.method,
            truth: write_model(&c.truth),
            alternatives: c
                .alternatives
                .iter()
                .zip(&self.alternative_models)
                .map(|(a, m)| Alt { name: &a.name, model: write_model(m) })
                .collect(),
            levels: REPORT_LEVELS,
            power: self.power_table(),
        };
        serde_json::to_string_pretty(&s).expect("plain data serializes")
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(crate::sample::fmt17).unwrap_or_default()
}

/// Write the three study files into `dir`, creating it if needed.
pub fn write_outputs(result: &StudyResult, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join("statistics.csv"))?;
    w.write_record(["replicate", "arm", "t", "p_asy", "p_sim"])?;
    for arm in &result.arms {
        for r in 0..arm.statistics.len() {
            w.write_record([
                (r + 1).to_string(),
                arm.name.clone(),
                opt(arm.statistics[r]),
                opt(arm.p_asymptotic[r]),
                opt(arm.p_simulated[r]),
            ])?;
        }
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(dir.join("curves.csv"))?;
    let cols = &result.curves.columns;
    w.write_record(std::iter::once("alpha".to_string()).chain(cols.iter().map(|c| c.0.clone())))?;
    for (i, a) in result.curves.alpha.iter().enumerate() {
        w.write_record(std::iter::once(format!("{a}")).chain(cols.iter().map(|c| c.1[i].to_string())))?;
    }
    w.flush()?;
    std::fs::write(dir.join("study.json"), result.summary_json())?;
    Ok(())
}
