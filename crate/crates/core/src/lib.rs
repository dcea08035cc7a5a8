//! Regular vine copulas and the information-matrix goodness-of-fit test.

pub mod bicop;
pub mod diff;
pub mod error;
pub mod gof;
pub mod jet;
pub mod margins;
pub mod optim;
pub mod power_lab;
pub mod rng;
pub mod sample;
pub mod special;
pub mod stats;
pub mod vine;

pub use bicop::{BicopFamily, BicopKind, BicopSpec, Rotation};
pub use gof::{FittedModel, GofOptions, GofResult};
pub use error::{Result, VineError};
pub use sample::CopulaSample;
pub use vine::{RVineModel, RVineStructure, VineEdge};
