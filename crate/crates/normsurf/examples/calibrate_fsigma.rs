//! Calibrator of a short geodesic on F_σ, with the competitor search.

use std::sync::Arc;

use normsurf::calibrator::{calibrate, CalibratorField, CalibratorOptions};
use normsurf::geodesics::CompetitorOptions;
use normsurf::surfaces::{Chart, Domain, ImmersedSurface};
use normsurf::MinkowskiNorm;

fn main() -> normsurf::Result<()> {
    let s = ImmersedSurface::new(
        Arc::new(MinkowskiNorm::euclidean(4)),
        Chart::FSigma { sigma: 0.05 },
        Domain::square(1.0),
    )?;
    let field = CalibratorField::new(s, [-0.04, 0.01], [1.0, 0.2], 0.1, CalibratorOptions::default())?;
    let comp = CompetitorOptions {
        tube_radius: field.s_max,
        ..CompetitorOptions::default()
    };
    let (report, rho, corr) = calibrate(&field, &comp)?;
    println!("max |∂_s ρ| on the geodesic  {:.3e}", rho.rho_s_max);
    println!("min ∂²_s ρ on the geodesic   {:.3e}", rho.rho_ss_min);
    println!("σ witness {:?}, max φ*(dg) {:.12}", corr.sigma_witness, corr.phi_star_dg_max);
    println!("best competitor minus geodesic {:.3e}", report.competitor_gap);
    println!("certified: {}", report.certifies(1e-6));
    Ok(())
}
