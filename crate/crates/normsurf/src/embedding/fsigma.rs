//! The saddle map `F_σ(x, y) = (f_σ(x, y), x² - y², xy)` into `R⁴` with
//! `f_σ(x, y) = (1 - σ²(x² + y²)) (x - σx³, y - σy³)`.

use num_dual::DualNum;

/// `F_σ` on dual numbers.
pub fn f_sigma_generic<D: DualNum<Primitive = f64> + Copy>(sigma: f64, x: D, y: D) -> [D; 4] {
    let damp = -(x * x + y * y) * (sigma * sigma) + 1.0;
    [
        damp * (x - x * x * x * sigma),
        damp * (y - y * y * y * sigma),
        x * x - y * y,
        x * y,
    ]
}

pub fn f_sigma(sigma: f64, x: f64, y: f64) -> [f64; 4] {
    f_sigma_generic(sigma, x, y)
}

/// Jacobian of `F_σ` as a 4×2 row-major array.
pub fn df_sigma(sigma: f64, x: f64, y: f64) -> [[f64; 2]; 4] {
    let s2 = sigma * sigma;
    let damp = 1.0 - s2 * (x * x + y * y);
    let gx = x - sigma * x.powi(3);
    let gy = y - sigma * y.powi(3);
    [
        [
            damp * (1.0 - 3.0 * sigma * x * x) - 2.0 * s2 * x * gx,
            -2.0 * s2 * y * gx,
        ],
        [
            -2.0 * s2 * x * gy,
            damp * (1.0 - 3.0 * sigma * y * y) - 2.0 * s2 * y * gy,
        ],
        [2.0 * x, -2.0 * y],
        [y, x],
    ]
}

/// Matrix `A(x, y)` with `df_σ(x, y) v = v - A v`.
pub fn deviation_matrix(sigma: f64, x: f64, y: f64) -> [[f64; 2]; 2] {
    let s2 = sigma * sigma;
    let a11 = 3.0 * sigma * x * x + s2 * x * x * (3.0 - 5.0 * sigma * x * x)
        + s2 * y * y * (1.0 - 3.0 * sigma * x * x);
    let a22 = 3.0 * sigma * y * y + s2 * y * y * (3.0 - 5.0 * sigma * y * y)
        + s2 * x * x * (1.0 - 3.0 * sigma * y * y);
    let a12 = 2.0 * s2 * x * y * (1.0 - sigma * x * x);
    let a21 = 2.0 * s2 * x * y * (1.0 - sigma * y * y);
    [[a11, a12], [a21, a22]]
}

/// `G(x, y, ξ, η) = dF_σ(x, y)(ξ, η)`, the tangent-bundle map whose image
/// over the unit circle bundle is the embedded patch.
pub fn tangent_map_generic<D: DualNum<Primitive = f64> + Copy>(sigma: f64, p: [D; 4]) -> [D; 4] {
    let [x, y, xi, eta] = p;
    let s2 = sigma * sigma;
    let damp = -(x * x + y * y) * s2 + 1.0;
    let gx = x - x * x * x * sigma;
    let gy = y - y * y * y * sigma;
    let j11 = damp * (-(x * x) * (3.0 * sigma) + 1.0) - x * gx * (2.0 * s2);
    let j12 = -(y * gx) * (2.0 * s2);
    let j21 = -(x * gy) * (2.0 * s2);
    let j22 = damp * (-(y * y) * (3.0 * sigma) + 1.0) - y * gy * (2.0 * s2);
    [
        j11 * xi + j12 * eta,
        j21 * xi + j22 * eta,
        (x * xi - y * eta) * 2.0,
        y * xi + x * eta,
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Matrix4, SVector};
    use num_dual::{jacobian, DualSVec64};

    #[test]
    fn f0_values() {
        assert_eq!(f_sigma(0.0, 1.0, 1.0), [1.0, 1.0, 0.0, 1.0]);
        let d = df_sigma(0.37, 0.0, 0.0);
        assert_eq!(d, [[1.0, 0.0], [0.0, 1.0], [0.0, 0.0], [0.0, 0.0]]);
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let (s, x, y) = (0.3, 0.4, -0.7);
        let d = df_sigma(s, x, y);
        let h = 1e-5;
        for i in 0..4 {
            let dx = (f_sigma(s, x + h, y)[i] - f_sigma(s, x - h, y)[i]) / (2.0 * h);
            let dy = (f_sigma(s, x, y + h)[i] - f_sigma(s, x, y - h)[i]) / (2.0 * h);
            assert!((dx - d[i][0]).abs() < 1e-9);
            assert!((dy - d[i][1]).abs() < 1e-9);
        }
    }

    #[test]
    fn deviation_matrix_matches_jacobian() {
        for &(s, x, y) in &[(0.1, 0.3, 0.2), (0.5, -0.8, 0.6), (0.05, 1.2, -0.1)] {
            let d = df_sigma(s, x, y);
            let a = deviation_matrix(s, x, y);
            for i in 0..2 {
                for j in 0..2 {
                    let id = if i == j { 1.0 } else { 0.0 };
                    assert!((id - a[i][j] - d[i][j]).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn tangent_map_determinant_at_sigma_zero() {
        // At σ = 0 the determinant reduces to 2(ξ² + η²).
        for &(x, y, xi, eta) in &[(0.1, 0.2, 0.3, -0.4), (-1.0, 0.5, 2.0, 0.1)] {
            let p = SVector::<f64, 4>::from([x, y, xi, eta]);
            let (_, j) = jacobian(
                |v: SVector<DualSVec64<4>, 4>| {
                    SVector::from(tangent_map_generic(0.0, [v[0], v[1], v[2], v[3]]))
                },
                &p,
            );
            let j: Matrix4<f64> = j;
            assert!((j.determinant() - 2.0 * (xi * xi + eta * eta)).abs() < 1e-12);
        }
    }
}
