//! Sparse linear algebra: CSR storage, envelope factorizations and
//! shift-invert eigensolvers.

pub mod eigen;
pub mod profile;
pub mod sparse;

pub use eigen::{general_smallest, symmetric_smallest, EigenOptions, EigenPairs, GeneralEigenValues};
pub use profile::{SkylineCholesky, SkylineLu};
pub use sparse::{CsrMatrix, TripletBuilder};
