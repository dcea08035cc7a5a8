//! Model configurations used by the power studies.

use crate::bicop::{BicopFamily, BicopSpec};
use crate::error::Result;
use crate::vine::{RVineModel, RVineStructure, VineEdge};

fn e(j: usize, k: usize, given: &[usize]) -> VineEdge {
    VineEdge::new(j, k, given)
}

/// Dependence level of the study I true model.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TauLevel {
    Mixed,
    Low,
    Medium,
}

/// Five-dimensional R-vine of study I.
pub fn r_vine_structure() -> RVineStructure {
    RVineStructure::new(
        5,
        vec![
            vec![e(1, 2, &[]), e(1, 3, &[]), e(1, 4, &[]), e(4, 5, &[])],
            vec![e(2, 4, &[1]), e(3, 4, &[1]), e(1, 5, &[4])],
            vec![e(2, 3, &[1, 4]), e(3, 5, &[1, 4])],
            vec![e(2, 5, &[1, 3, 4])],
        ],
    )
    .expect("valid")
}

/// C-vine with roots 2, then 1, then 4, then 5.
pub fn c_vine_structure() -> RVineStructure {
    RVineStructure::new(
        5,
        vec![
            vec![e(1, 2, &[]), e(2, 3, &[]), e(2, 4, &[]), e(2, 5, &[])],
            vec![e(1, 3, &[2]), e(1, 4, &[2]), e(1, 5, &[2])],
            vec![e(3, 4, &[1, 2]), e(4, 5, &[1, 2])],
            vec![e(3, 5, &[1, 2, 4])],
        ],
    )
    .expect("valid")
}

/// D-vine with order 3-4-5-1-2.
pub fn d_vine_structure() -> RVineStructure {
    RVineStructure::new(
        5,
        vec![
            vec![e(1, 2, &[]), e(1, 5, &[]), e(4, 5, &[]), e(3, 4, &[])],
            vec![e(2, 5, &[1]), e(1, 4, &[5]), e(3, 5, &[4])],
            vec![e(2, 4, &[1, 5]), e(1, 3, &[4, 5])],
            vec![e(2, 3, &[1, 4, 5])],
        ],
    )
    .expect("valid")
}

/// Families and Kendall's tau of the mixed study I model, in edge order.
pub const MIXED_TABLE: [(&str, f64); 10] = [
    ("gauss", 0.71),
    ("gauss", 0.33),
    ("clayton", 0.71),
    ("gumbel", 0.74),
    ("gumbel", 0.38),
    ("gumbel", 0.47),
    ("gumbel", 0.33),
    ("clayton", 0.35),
    ("clayton", 0.31),
    ("gauss", 0.13),
];

fn from_table(structure: RVineStructure, table: &[(&str, f64)], nu: Option<f64>) -> Result<RVineModel> {
    let pairs = table
        .iter()
        .map(|&(code, tau)| BicopSpec::from_tau(code.parse::<BicopFamily>()?, tau, nu))
        .collect::<Result<Vec<_>>>()?;
    RVineModel::new(structure, pairs)
}

/// Study I true model: the mixed table, or its families at a constant tau.
pub fn study_one_model(level: TauLevel) -> RVineModel {
    let table: Vec<(&str, f64)> = match level {
        TauLevel::Mixed => MIXED_TABLE.to_vec(),
        TauLevel::Low => MIXED_TABLE.iter().map(|&(f, _)| (f, 0.25)).collect(),
        TauLevel::Medium => MIXED_TABLE.iter().map(|&(f, _)| (f, 0.5)).collect(),
    };
    from_table(r_vine_structure(), &table, None).expect("valid fixture")
}

/// Study II true model.
pub fn study_two_model() -> RVineModel {
    let s = RVineStructure::new(
        5,
        vec![
            vec![e(1, 2, &[]), e(2, 3, &[]), e(3, 4, &[]), e(3, 5, &[])],
            vec![e(1, 3, &[2]), e(2, 4, &[3]), e(2, 5, &[3])],
            vec![e(1, 4, &[2, 3]), e(1, 5, &[2, 3])],
            vec![e(4, 5, &[1, 2, 3])],
        ],
    )
    .expect("valid");
    let table = [
        ("gauss", 0.10),
        ("t", -0.15),
        ("t", -0.10),
        ("t", 0.15),
        ("gauss", 0.70),
        ("gumbel@90", -0.60),
        ("gumbel", 0.85),
        ("gauss", 0.45),
        ("gauss", -0.50),
        ("gauss", 0.10),
    ];
    from_table(s, &table, Some(3.0)).expect("valid fixture")
}

/// Structure and families of the study II alternative found by the
/// maximum spanning tree search.
pub fn study_two_mst() -> (RVineStructure, Vec<BicopFamily>) {
    let s = RVineStructure::new(
        5,
        vec![
            vec![e(1, 3, &[]), e(1, 5, &[]), e(2, 5, &[]), e(4, 5, &[])],
            vec![e(1, 2, &[5]), e(1, 4, &[5]), e(3, 5, &[1])],
            vec![e(2, 3, &[1, 5]), e(3, 4, &[1, 5])],
            vec![e(2, 4, &[1, 3, 5])],
        ],
    )
    .expect("valid");
    let fams = ["t", "gauss", "t", "gumbel@270", "t", "t", "t", "t", "t", "gauss"];
    (s, fams.iter().map(|c| c.parse().expect("code")).collect())
}

/// Structure and families of the study II alternative found by MCMC.
pub fn study_two_mcmc() -> (RVineStructure, Vec<BicopFamily>) {
    let s = RVineStructure::new(
        5,
        vec![
            vec![e(1, 2, &[]), e(2, 3, &[]), e(2, 4, &[]), e(3, 5, &[])],
            vec![e(1, 3, &[2]), e(3, 4, &[2]), e(2, 5, &[3])],
            vec![e(1, 4, &[2, 3]), e(1, 5, &[2, 3])],
            vec![e(4, 5, &[1, 2, 3])],
        ],
    )
    .expect("valid");
    let fams = ["gauss", "t", "gumbel@90", "t", "gauss", "gumbel", "t", "gauss", "gauss", "gauss"];
    (s, fams.iter().map(|c| c.parse().expect("code")).collect())
}

/// Study III multivariate t copula: the study I structure and mixed taus
/// with one shared degrees-of-freedom parameter `nu = 8`.
pub fn study_three_mvt() -> RVineModel {
    let table: Vec<(&str, f64)> = MIXED_TABLE.iter().map(|&(_, t)| ("t", t)).collect();
    from_table(r_vine_structure(), &table, Some(8.0))
        .and_then(RVineModel::with_shared_df)
        .expect("valid fixture")
}

/// Study III R-vine with Student-t pairs whose degrees of freedom spread
/// evenly over [4, 20].
pub fn study_three_rvine_t() -> RVineModel {
    let m = r_vine_structure().n_edges();
    let pairs = MIXED_TABLE
        .iter()
        .enumerate()
        .map(|(i, &(_, tau))| {
            let nu = 4.0 + 16.0 * i as f64 / (m - 1) as f64;
            BicopSpec::from_tau(BicopFamily::STUDENT_T, tau, Some(nu))
        })
        .collect::<Result<Vec<_>>>()
        .expect("valid fixture");
    RVineModel::new(r_vine_structure(), pairs).expect("valid fixture")
}
