//! Brownian motion tree models on phylogenetic trees.
//!
//! The crate covers the covariance side of the model (`Σ_θ`, the simplicial
//! cone of tree covariances, Farris transform, sampling), the concentration
//! side in Laplacian edge coordinates `p_ij` (toric generators and the full
//! semialgebraic membership test), exact trek-system polynomials with
//! positivity certificates and determinant factorizations, and maximum
//! likelihood estimation over the cone with boundary-face reporting.

pub mod covariance;
pub mod error;
pub mod matrix;
pub mod mle;
pub mod pcoords;
pub mod poly;
pub mod scalar;
pub mod toric;
pub mod treks;
pub mod trees;

pub use error::{Error, Result};
pub use matrix::SymMatrix;
pub use pcoords::PCoords;
pub use poly::{MultilinearPoly, Poly};
pub use scalar::{Rational, Scalar};
pub use trees::{parse_newick, QuartetTopology, RootedTree, Split, Theta};
