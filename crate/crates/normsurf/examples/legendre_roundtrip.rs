//! Legendre map of a quartic-perturbed norm and its inverse.

use nalgebra::{DMatrix, DVector};
use normsurf::norms::QuarticTerm;
use normsurf::MinkowskiNorm;

fn main() -> normsurf::Result<()> {
    let a = DMatrix::from_row_slice(3, 3, &[1.0, 0.1, 0.0, 0.1, 1.2, 0.0, 0.0, 0.0, 0.9]);
    let norm = MinkowskiNorm::quartic_perturbed(a, vec![QuarticTerm::new(1.0, vec![1.0, 0.5, 0.2])], 0.1)?;
    let v = DVector::from_vec(vec![0.3, -1.2, 0.7]);
    let l = norm.legendre(&v);
    let back = norm.legendre_inverse(&l)?;
    println!("Φ(v)        = {:.15}", norm.eval(&v));
    println!("Φ*(ℒ(v))    = {:.15}", norm.dual_eval(&l)?);
    println!("⟨ℒ(v), v⟩   = {:.15} (Φ(v)² = {:.15})", l.pair(&v), norm.eval(&v).powi(2));
    println!("|ℒ⁻¹ℒv - v| = {:.3e}", (back - &v).norm());
    Ok(())
}
