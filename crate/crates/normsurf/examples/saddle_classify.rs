//! Saddle classification of the F_σ surface in Euclidean R⁴ over a grid.

use std::sync::Arc;

use normsurf::surfaces::{Chart, Domain, Grid, ImmersedSurface};
use normsurf::MinkowskiNorm;

fn main() -> normsurf::Result<()> {
    let s = ImmersedSurface::new(
        Arc::new(MinkowskiNorm::euclidean(4)),
        Chart::FSigma { sigma: 0.05 },
        Domain::square(1.0),
    )?;
    let origin = s.saddle_classify([0.0, 0.0], [1.0, 0.0])?;
    println!(
        "origin: {} with pencil det(αA + βB) = {:.4}α² + {:.4}αβ + {:.4}β²",
        origin.class,
        origin.det_a,
        origin.mixed.unwrap_or(0.0),
        origin.det_b.unwrap_or(0.0)
    );
    let grid = Grid {
        x: [-0.5, 0.5],
        y: [-0.5, 0.5],
        nx: 9,
        ny: 9,
    };
    let r = s.classify_region(&grid, [1.0, 0.0])?;
    println!(
        "{} nodes: {} strictly saddle, {} saddle, {} not saddle",
        r.verdicts.len(),
        r.strictly_saddle,
        r.saddle,
        r.not_saddle
    );
    Ok(())
}
