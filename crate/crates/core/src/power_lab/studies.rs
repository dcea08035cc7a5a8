//! Configurations of the built-in studies.

use super::fixtures::{
    c_vine_structure, d_vine_structure, r_vine_structure, study_one_model, study_three_mvt, study_three_rvine_t,
    study_two_mcmc, study_two_model, study_two_mst, TauLevel,
};
use super::{AltSource, Alternative, StudyConfig};
use crate::bicop::{BicopFamily, FitCriterion};
use crate::error::{Result, VineError};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StudyId {
    /// R-vine truth with mixed tau against C-vine, D-vine and Gauss alternatives.
    IMixed,
    /// As `IMixed` with every tau 0.25.
    ILow,
    /// As `IMixed` with every tau 0.5.
    IMed,
    /// Five-dimensional truth against the spanning-tree and MCMC selections.
    II,
    /// Multivariate t truth against an R-vine with free t pairs.
    IIIMtcop,
    /// R-vine with free t pairs against a multivariate t.
    IIIRvineT,
}

impl StudyId {
    pub const ALL: [StudyId; 6] =
        [StudyId::IMixed, StudyId::ILow, StudyId::IMed, StudyId::II, StudyId::IIIMtcop, StudyId::IIIRvineT];

    pub fn name(self) -> &'static str {
        match self {
            StudyId::IMixed => "I_mixed",
            StudyId::ILow => "I_low",
            StudyId::IMed => "I_med",
            StudyId::II => "II",
            StudyId::IIIMtcop => "III_mtcop",
            StudyId::IIIRvineT => "III_rvine_t",
        }
    }
}

impl std::fmt::Display for StudyId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for StudyId {
    type Err = VineError;
    fn from_str(s: &str) -> Result<Self> {
        StudyId::ALL.into_iter().find(|id| id.name().eq_ignore_ascii_case(s)).ok_or_else(|| {
            let valid: Vec<&str> = StudyId::ALL.iter().map(|id| id.name()).collect();
            VineError::Config(format!("unknown study '{s}', valid ids: {}", valid.join(", ")))
        })
    }
}

fn selected_on(structure: crate::vine::RVineStructure) -> AltSource {
    AltSource::Selected { structure: Some(structure), families: BicopFamily::all(), criterion: FitCriterion::Aic }
}

/// Default configuration of a built-in study: n = 500, R = 200, seed 1, known margins.
pub fn study_config(id: StudyId) -> StudyConfig {
    let study_one = |level| {
        StudyConfig::new(
            id.name(),
            study_one_model(level),
            vec![
                Alternative::new("C-vine", selected_on(c_vine_structure())),
                Alternative::new("D-vine", selected_on(d_vine_structure())),
                Alternative::new("Gauss", AltSource::GaussPaired),
            ],
        )
    };
    match id {
        StudyId::IMixed => study_one(TauLevel::Mixed),
        StudyId::ILow => study_one(TauLevel::Low),
        StudyId::IMed => study_one(TauLevel::Medium),
        StudyId::II => {
            let (ms, mf) = study_two_mst();
            let (cs, cf) = study_two_mcmc();
            StudyConfig::new(
                id.name(),
                study_two_model(),
                vec![
                    Alternative::new("MST", AltSource::Families { structure: ms, families: mf }),
                    Alternative::new("MCMC", AltSource::Families { structure: cs, families: cf }),
                ],
            )
        }
        StudyId::IIIMtcop => {
            let s = r_vine_structure();
            let fams = vec![BicopFamily::STUDENT_T; s.n_edges()];
            StudyConfig::new(
                id.name(),
                study_three_mvt(),
                vec![Alternative::new("R-vine-t", AltSource::Families { structure: s, families: fams })],
            )
        }
        StudyId::IIIRvineT => StudyConfig::new(
            id.name(),
            study_three_rvine_t(),
            vec![Alternative::new("mvt", AltSource::SharedT { structure: r_vine_structure() })],
        ),
    }
}
