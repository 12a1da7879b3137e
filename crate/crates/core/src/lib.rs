//! Discrete harmonic and α-harmonic maps from the two-sphere into round
//! spheres.

pub mod covers;
pub mod curvature;
pub mod energy;
pub mod error;
pub mod flow;
pub mod linalg;
pub mod mesh;
pub mod quadrature;
pub mod reports;
pub mod spectrum;
pub mod topology;

pub use error::{Error, Result};

#[cfg(doctest)]
pub mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/meshes.md")]
    pub mod meshes {}
    #[doc = include_str!("../../../book/src/flow.md")]
    pub mod flow {}
    #[doc = include_str!("../../../book/src/spectrum.md")]
    pub mod spectrum {}
    #[doc = include_str!("../../../book/src/covers.md")]
    pub mod covers {}
    #[doc = include_str!("../../../book/src/curvature.md")]
    pub mod curvature {}
    #[doc = include_str!("../../../book/src/topology.md")]
    pub mod topology {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    pub mod experiments {}
}
