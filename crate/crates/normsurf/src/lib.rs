//! Geodesics, calibrators and saddle embeddings for surfaces in finite
//! dimensional normed spaces with smooth strictly convex norms.

pub mod calibrator;
pub mod cli;
pub mod convexgeom;
pub mod embedding;
pub mod error;
pub mod geodesics;
pub mod linalg;
pub mod norms;
pub mod surfaces;

pub use error::{Error, Result};
pub use norms::{Covector, MinkowskiNorm};
