//! Long geodesics on a strictly convex hyperboloid are not shortest: the
//! bundled scene finds a shorter planar section path after rescaling.

use std::path::Path;

use normsurf::convexgeom::{geodesic_line_refute, ConvexScene};

fn main() -> normsurf::Result<()> {
    let scene = ConvexScene::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("scenes/hyperboloid_refute.json"))?;
    let r = geodesic_line_refute(&scene)?;
    for x in &r.results {
        println!(
            "λ = {:>5}: competitor {:.6} (bound {:.6}), rescaled geodesic length 2",
            x.lambda, x.competitor_length, x.upper_bound
        );
    }
    println!("{:?} at λ = {:?}", r.status, r.refuted_at);
    Ok(())
}
