//! Robust simultaneous stabilization of a finite family of MIMO LTI plants
//! by one static output-feedback gain and diagonal pre/post compensators.
//!
//! The pieces, bottom-up:
//!
//! - [`lti`]: state-space plants, frequency grids, spectra, series augmentation.
//! - [`vgap`]: nu-gap metric and central-plant identification.
//! - [`margins`]: generalized stability margin, sensitivity curves, disk margins.
//! - [`eigassign`]: output-feedback eigenstructure assignment.
//! - [`compensator`]: compensator banks, loop-shaping constraints, the gap objective.
//! - [`ga`]: real-coded genetic algorithm.
//! - [`synthesis`]: the two-level synthesis driver and its verification.
//! - [`sim`]: RK4 closed-loop simulation and tracking metrics.
//! - [`io`], [`cli`]: file formats and the `rssd` command front end.

pub mod cli;
pub mod compensator;
pub mod eigassign;
pub mod error;
pub mod ga;
pub mod io;
pub mod linalg;
pub mod lti;
pub mod margins;
pub mod sim;
pub mod synthesis;
pub mod vgap;

pub use error::{Error, Result};
pub use linalg::Mat;
pub use lti::{FrequencyGrid, PlantSet, StateSpacePlant};
