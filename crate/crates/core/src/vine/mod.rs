//! Regular vines: structures, models, estimation and the text format.

pub mod fit;
pub mod format;
pub mod model;
pub mod select;
pub mod structure;

pub use fit::{fit_full, fit_sequential, refit, EstimationMethod, FitOptions, FullFit};
pub use model::{ParamLayout, ParamSlot, RVineModel};
pub use structure::{RVineStructure, VineEdge, Violation, ViolationKind};
pub use format::{read_model, write_model, write_model_file, write_structure, VineSpecFile};
pub use select::{collapse_student_t, select_families, select_mst};
