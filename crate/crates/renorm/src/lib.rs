//! Renormalization workbench for area-preserving maps at the level of
//! generating functions: truncated two-variable Taylor algebra, the
//! period-doubling renormalization operator and its derivative, fixed-point
//! location with a-posteriori contraction certificates, spectral analysis of
//! the linearization, and numerical experiments on reversible twist maps.

pub mod error;
pub mod fixpoint;
pub mod genfun;
pub mod mapdyn;
pub mod spectrum;
pub mod taylor2;

pub use error::{RenormError, Result};
pub use fixpoint::{Certificate, DeflationData, FixedPointRun};
pub use genfun::{MidpointSolution, RenormOutcome, RenormWorkspace};
pub use mapdyn::{CascadeRecord, TwistMap};
pub use spectrum::{BasisTable, SpectrumReport};
pub use taylor2::{GenFunction, Poly2, Var};
