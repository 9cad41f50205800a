//! Verification and simulation toolkit for limited-budget output consensus
//! of descriptor multi-agent systems.
//!
//! The crate takes a scenario (plant, observability transform, switching
//! topologies, certificate matrices, initial states) and answers two
//! questions:
//!
//! - does the certificate satisfy the admissibility, budget, and
//!   block-matrix conditions over the topology set's eigenvalue range, and
//! - does the resulting protocol actually drive the agent outputs together
//!   within the energy budget, checked by integrating the switching closed
//!   loop.
//!
//! Modules are layered bottom-up: `numerics` (ranks, spectra, pencils),
//! `descriptor` (regularity and admissibility of a single pair),
//! `decomposition` (observable reduction via a supplied transform),
//! `topology` (Laplacians, spectral bounds, switching schedules), `gains`
//! (protocol gains, condition checks, the budget inequality), `simulation`
//! (closed-loop assembly, implicit integration, energy metering, the
//! transformed-coordinates oracle), and `scenario`/`run`/`report` (file
//! format, pipelines, output).

pub mod decomposition;
pub mod descriptor;
pub mod error;
pub mod gains;
pub mod numerics;
pub mod report;
pub mod run;
pub mod scenario;
pub mod simulation;
pub mod topology;

pub use error::{Error, Result};
