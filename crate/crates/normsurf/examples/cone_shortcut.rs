//! Shortcut between two faces of a trihedral cone, compared with the
//! broken line through the apex.

use nalgebra::DMatrix;
use normsurf::convexgeom::{cone_shortcut, TrihedralCone};
use normsurf::MinkowskiNorm;

fn main() -> normsurf::Result<()> {
    let norm = MinkowskiNorm::quadratic(DMatrix::from_row_slice(3, 3, &[1.0, 0.2, 0.0, 0.2, 1.5, 0.1, 0.0, 0.1, 0.8]))?;
    let cone = TrihedralCone::new([[-1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -1.0]])?;
    let r = cone_shortcut(&norm, &cone, [0.0, 1.0, 2.0], [1.5, 0.0, 1.0])?;
    println!("{:?} path with {} vertices", r.kind, r.path.len());
    println!("length {:.12} vs broken line {:.12} (margin {:.3e})", r.length, r.broken_length, r.margin);
    println!("slope at the apex: difference {:.9}, closed form {:.9}", r.fd_slope, r.limit_slope);
    Ok(())
}
