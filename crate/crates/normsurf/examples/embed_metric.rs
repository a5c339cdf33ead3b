//! Saddle embedding of a planar metric into a synthesized 4D normed space.
//! Pass `sphere` for the round metric, anything else for the flat one.

use std::sync::Arc;

use normsurf::embedding::metric::MetricField;
use normsurf::embedding::pipeline::{embed, EmbedOptions};
use normsurf::MinkowskiNorm;

fn main() -> normsurf::Result<()> {
    let metric = match std::env::args().nth(1).as_deref() {
        Some("sphere") => MetricField::StereographicSphere { radius: 1.0 },
        _ => MetricField::constant(Arc::new(MinkowskiNorm::euclidean(2)))?,
    };
    let a = embed(&metric, &EmbedOptions::default())?;
    let c = &a.certificates;
    println!("σ = {}, patch radius {:.3e}, blow-up ε = {}", a.sigma, a.u_radius, a.epsilon);
    println!("pre-convexity constant {:.3e}", c.preconvexity.c_est);
    println!(
        "glued norm: min Hessian eigenvalue {:.3e} over {} directions",
        c.convexity.min_eigenvalue, c.convexity.directions
    );
    println!(
        "isometry deviation {:.1e}, induced metric error {:.1e}",
        c.isometry.max_deviation, c.isometry.induced_metric_error
    );
    println!("{}/{} grid nodes strictly saddle", c.isometry.strictly_saddle, c.isometry.grid_nodes);
    println!("passed: {}", a.passed);
    Ok(())
}
