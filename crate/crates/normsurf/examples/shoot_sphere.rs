//! A geodesic on the unit sphere against the great circle through the same
//! point and direction.

use std::sync::Arc;

use normsurf::geodesics::shoot;
use normsurf::surfaces::{Chart, Domain, ImmersedSurface};
use normsurf::MinkowskiNorm;

fn main() -> normsurf::Result<()> {
    let s = ImmersedSurface::new(
        Arc::new(MinkowskiNorm::euclidean(3)),
        Chart::Sphere { radius: 1.0 },
        Domain {
            x: [-4.0, 4.0],
            y: [-1.5, 1.5],
        },
    )?;
    let (x0, d) = ([0.2, 0.1], [1.0, 0.4]);
    let path = shoot(&s, x0, d, 1.0, 1e-3)?;
    let p = s.point(x0);
    let w = s.chart.push_forward(x0, d).normalize();
    let exact = &p * 1f64.cos() + &w * 1f64.sin();
    println!("steps {}, length {:.12}", path.samples.len() - 1, path.length(&s));
    println!("distance to the great circle point: {:.3e}", (s.point(path.end()) - exact).norm());
    println!("speed drift {:.3e}", path.max_speed_residual());
    Ok(())
}
