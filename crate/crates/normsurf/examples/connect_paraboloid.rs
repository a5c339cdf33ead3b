//! Two-point geodesic on a paraboloid by shooting with restarts.

use std::sync::Arc;

use normsurf::geodesics::{connect, ConnectOptions};
use normsurf::surfaces::{Chart, Domain, ImmersedSurface};
use normsurf::MinkowskiNorm;

fn main() -> normsurf::Result<()> {
    let s = ImmersedSurface::new(
        Arc::new(MinkowskiNorm::euclidean(3)),
        Chart::QuadraticGraph { a: 1.0, b: 0.0, c: 1.0 },
        Domain::square(3.0),
    )?;
    let r = connect(&s, [-0.5, 0.2], [0.6, -0.1], &ConnectOptions::default())?;
    println!("length {:.12} from {} converged restarts", r.length, r.converged_restarts);
    for sol in &r.solutions {
        println!("  chart direction at start {:.6} rad, length {:.12}", sol.angle, sol.length);
    }
    Ok(())
}
