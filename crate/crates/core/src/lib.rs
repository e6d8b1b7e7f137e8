//! Inverse mean curvature flow of entire convex graphs over `R^n`.
//!
//! The crate bundles closed-form cone and sphere solutions, discrete graph
//! geometry, an implicit radial solver, a 2-D lattice solver, a shooting
//! solver for self-similar profiles and a set of trajectory checkers.

pub mod bicgstab;
pub mod cartesian;
pub mod config;
pub mod diagnostics;
pub mod driver;
pub mod error;
pub mod exact;
pub mod geometry;
pub mod output;
pub mod radial;
pub mod selfsimilar;
pub mod snapshot;
pub mod stencil;
pub mod sweep;
pub mod tridiag;
pub mod verify;

pub use error::{ImcfError, Result};
pub use exact::{ConeFamily, ExpandingSphere};
pub use geometry::{GeometryFields, GraphState2D, NodeGeometry, RadialGrid, RadialProfile};
pub use config::{parse_config, RunConfig};
pub use selfsimilar::{flux_exponent, shoot_profile, SelfSimilarProfile};
pub use snapshot::Snapshot;
