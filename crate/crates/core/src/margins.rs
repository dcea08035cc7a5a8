//! From raw observations to copula data: ranks or fitted parametric margins.

use crate::bicop::U_EPS;
use crate::error::{Result, VineError};
use crate::optim::{bfgs, brent_min, BfgsOptions};
use crate::sample::{read_matrix_csv, CopulaSample};
use crate::special::{norm_cdf, t_cdf, t_ln_pdf};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MarginFamily {
    Normal,
    #[serde(rename = "t")]
    StudentT,
    Exponential,
}

impl std::str::FromStr for MarginFamily {
    type Err = VineError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "normal" | "norm" => Ok(MarginFamily::Normal),
            "t" | "student" => Ok(MarginFamily::StudentT),
            "exp" | "exponential" => Ok(MarginFamily::Exponential),
            _ => Err(VineError::Config(format!("unknown margin family '{s}'"))),
        }
    }
}

/// A fitted univariate distribution.
///
/// Parameters: Normal `[mean, sd]`, StudentT `[location, scale, nu]`,
/// Exponential `[rate]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginalModel {
    pub family: MarginFamily,
    pub params: Vec<f64>,
}

impl MarginalModel {
    pub fn new(family: MarginFamily, params: &[f64]) -> Result<Self> {
        let ok = match (family, params) {
            (MarginFamily::Normal, [m, s]) => m.is_finite() && *s > 0.0 && s.is_finite(),
            (MarginFamily::StudentT, [m, s, nu]) => m.is_finite() && *s > 0.0 && s.is_finite() && *nu > 2.0,
            (MarginFamily::Exponential, [r]) => *r > 0.0 && r.is_finite(),
            _ => false,
        };
        if !ok {
            return Err(VineError::MarginFit(format!("invalid parameters {params:?} for {family:?}")));
        }
        Ok(MarginalModel { family, params: params.to_vec() })
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let p = &self.params;
        match self.family {
            MarginFamily::Normal => norm_cdf((x - p[0]) / p[1]),
            MarginFamily::StudentT => t_cdf((x - p[0]) / p[1], p[2]),
            MarginFamily::Exponential => {
                if x <= 0.0 {
                    0.0
                } else {
                    -(-p[0] * x).exp_m1()
                }
            }
        }
    }

    /// Fit to one column: Normal by moments, StudentT and Exponential by maximum likelihood.
    pub fn fit(family: MarginFamily, x: &[f64]) -> Result<Self> {
        if x.len() < 2 || x.iter().any(|v| !v.is_finite()) {
            return Err(VineError::MarginFit("need at least two finite observations".into()));
        }
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        if !(var > 0.0) {
            return Err(VineError::MarginFit("zero variance".into()));
        }
        match family {
            MarginFamily::Normal => Self::new(family, &[mean, var.sqrt()]),
            MarginFamily::Exponential => {
                if x.iter().any(|&v| v < 0.0) {
                    return Err(VineError::MarginFit("negative values for an exponential margin".into()));
                }
                Self::new(family, &[1.0 / mean])
            }
            MarginFamily::StudentT => fit_student(x, mean, var.sqrt()),
        }
    }
}

/// Location and log-scale by BFGS for each nu, nu by a Brent profile.
fn fit_student(x: &[f64], mean: f64, sd: f64) -> Result<MarginalModel> {
    let n = x.len() as f64;
    let inner = |nu: f64| -> Option<(f64, Vec<f64>)> {
        let f = |z: &[f64]| -> Option<(f64, Vec<f64>)> {
            let (mu, ls) = (z[0], z[1]);
            let s = ls.exp();
            let (mut ll, mut gm, mut gs) = (0.0, 0.0, 0.0);
            for &v in x {
                let r = (v - mu) / s;
                ll += t_ln_pdf(r, nu) - ls;
                let w = (nu + 1.0) / (nu + r * r);
                gm += w * r / s;
                gs += w * r * r - 1.0;
            }
            ll.is_finite().then(|| (-ll / n, vec![-gm / n, -gs / n]))
        };
        let z0 = [mean, (sd * ((nu - 2.0) / nu).sqrt()).ln()];
        let r = bfgs(f, &z0, &BfgsOptions::default()).ok()?;
        Some((r.value, r.x))
    };
    let obj = |w: f64| inner(2.0 + w.exp()).map_or(f64::MAX, |r| r.0);
    let (w, _) = brent_min(obj, (0.01f64).ln(), (200.0f64).ln(), 1e-5, 100);
    let nu = 2.0 + w.exp();
    let (_, z) = inner(nu).ok_or_else(|| VineError::MarginFit("t margin fit failed".into()))?;
    MarginalModel::new(MarginFamily::StudentT, &[z[0], z[1].exp(), nu])
}

/// Column-wise ranks over `n + 1`; ties get their average rank.
pub fn pseudo_observations(columns: &[Vec<f64>]) -> Result<CopulaSample> {
    let n = columns.first().map_or(0, Vec::len);
    if n < 2 {
        return Err(VineError::DegenerateSample("at least two observations are needed".into()));
    }
    let mut out = Vec::with_capacity(columns.len());
    for c in columns {
        if c.len() != n {
            return Err(VineError::DegenerateSample("columns of unequal length".into()));
        }
        if c.iter().any(|v| v.is_nan()) {
            return Err(VineError::DegenerateSample("missing value".into()));
        }
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&a, &b| c[a].total_cmp(&c[b]));
        let mut ranks = vec![0.0; n];
        let mut i = 0;
        while i < n {
            let mut j = i;
            while j + 1 < n && c[idx[j + 1]] == c[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &k in &idx[i..=j] {
                ranks[k] = avg / (n as f64 + 1.0);
            }
            i = j + 1;
        }
        out.push(ranks);
    }
    CopulaSample::from_columns(&out)
}

/// Fit one margin per column.
pub fn fit_margins(columns: &[Vec<f64>], families: &[MarginFamily]) -> Result<Vec<MarginalModel>> {
    if families.len() != columns.len() {
        return Err(VineError::Config(format!("{} margin families for {} columns", families.len(), columns.len())));
    }
    columns
        .iter()
        .zip(families)
        .enumerate()
        .map(|(j, (c, &f))| MarginalModel::fit(f, c).map_err(|e| VineError::MarginFit(format!("column {}: {e}", j + 1))))
        .collect()
}

/// Probability integral transform with fitted margins, clamped away from 0 and 1.
pub fn ifm_transform(columns: &[Vec<f64>], fitted: &[MarginalModel]) -> Result<CopulaSample> {
    if fitted.len() != columns.len() {
        return Err(VineError::Config(format!("{} margins for {} columns", fitted.len(), columns.len())));
    }
    let cols: Vec<Vec<f64>> = columns
        .iter()
        .zip(fitted)
        .map(|(c, m)| c.iter().map(|&x| m.cdf(x).clamp(U_EPS, 1.0 - U_EPS)).collect())
        .collect();
    CopulaSample::from_columns(&cols)
}

/// Raw data CSV with a header row; returns the header and the columns.
pub fn read_raw_csv(path: impl AsRef<Path>) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let (hdr, n, d, values) = read_matrix_csv(std::fs::File::open(path)?)?;
    let cols = (0..d).map(|j| (0..n).map(|t| values[t * d + j]).collect()).collect();
    Ok((hdr, cols))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::norm_quantile;
    use crate::stats::{ks_pvalue, ks_statistic};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn normals(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| norm_quantile(rng.random_range(1e-12..1.0))).collect()
    }

    #[test]
    fn rank_example() {
        let s = pseudo_observations(&[vec![3.2, -1.0, 7.0]]).unwrap();
        assert_eq!(s.column(0), vec![0.5, 0.25, 0.75]);
    }

    #[test]
    fn ties_get_average_ranks() {
        let s = pseudo_observations(&[vec![1.0, 2.0, 2.0, 3.0]]).unwrap();
        assert_eq!(s.column(0), vec![0.2, 0.5, 0.5, 0.8]);
    }

    #[test]
    fn distinct_column_gives_all_ranks() {
        let x = normals(1000, 1);
        let mut u = pseudo_observations(&[x]).unwrap().column(0);
        u.sort_by(f64::total_cmp);
        for (k, v) in u.iter().enumerate() {
            assert_eq!(*v, (k + 1) as f64 / 1001.0);
        }
    }

    proptest! {
        #[test]
        fn ranks_are_invariant_to_increasing_maps(xs in proptest::collection::vec(-50.0f64..50.0, 2..80)) {
            let a = pseudo_observations(&[xs.clone()]).unwrap();
            let b = pseudo_observations(&[xs.iter().map(|v| v.exp()).collect()]).unwrap();
            let c = pseudo_observations(&[xs.iter().map(|v| 3.0 * v + v.powi(3)).collect()]).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert_eq!(&a, &c);
        }
    }

    #[test]
    fn exact_pit_with_true_parameters() {
        let m = MarginalModel::new(MarginFamily::Normal, &[0.0, 1.0]).unwrap();
        let u = ifm_transform(&[vec![0.0]], &[m.clone()]).unwrap();
        assert_eq!(u.row(0), &[0.5]);
        let x = normals(200, 3);
        let u = ifm_transform(&[x.clone()], &[m]).unwrap();
        for (a, b) in u.column(0).iter().zip(&x) {
            assert!((a - norm_cdf(*b)).abs() < 1e-12);
        }
    }

    #[test]
    fn normal_moments_give_uniform_output() {
        let x: Vec<f64> = normals(2000, 5).iter().map(|v| 3.0 * v + 1.0).collect();
        let fitted = fit_margins(&[x.clone()], &[MarginFamily::Normal]).unwrap();
        assert!((fitted[0].params[1] - 3.0).abs() < 0.15);
        let u = ifm_transform(&[x], &fitted).unwrap().column(0);
        assert!(ks_statistic(&u, |v| v) < 0.05);
    }

    #[test]
    fn zero_variance_is_a_fit_error() {
        assert!(matches!(MarginalModel::fit(MarginFamily::Normal, &[2.0; 10]), Err(VineError::MarginFit(_))));
    }

    #[test]
    fn exponential_and_t_fits() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let e: Vec<f64> = (0..3000).map(|_| -(1.0 - rng.random::<f64>()).ln() / 2.0).collect();
        let m = MarginalModel::fit(MarginFamily::Exponential, &e).unwrap();
        assert!((m.params[0] - 2.0).abs() < 0.15);
        let nu = 5.0;
        let t: Vec<f64> = (0..3000)
            .map(|_| 1.0 + 2.0 * crate::special::t_quantile(rng.random_range(1e-12..1.0), nu))
            .collect();
        let m = MarginalModel::fit(MarginFamily::StudentT, &t).unwrap();
        assert!((m.params[0] - 1.0).abs() < 0.15, "{:?}", m.params);
        assert!((m.params[1] - 2.0).abs() < 0.2, "{:?}", m.params);
        assert!(m.params[2] > 3.0 && m.params[2] < 9.0, "{:?}", m.params);
        let u: Vec<f64> = t.iter().map(|&x| m.cdf(x)).collect();
        assert!(ks_pvalue(ks_statistic(&u, |v| v), u.len()) > 0.01);
        // a t sample fitted with an exponential margin is rejected by the domain check
        assert!(MarginalModel::fit(MarginFamily::Exponential, &t).is_err());
    }
}
