use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use normsurf::convexgeom::{convex_hull, polygon_perimeter};
use normsurf::embedding::parallelogram::parallelogram_normalize;
use normsurf::geodesics::shoot;
use normsurf::norms::QuarticTerm;
use normsurf::surfaces::{Chart, Domain, ImmersedSurface, SaddleClass, SaddleVerdict};
use normsurf::{Covector, MinkowskiNorm};

/// Quartic perturbation of `BᵀB + I/2`, small enough to stay convex.
fn quartic(entries: &[f64], dir: &[f64], n: usize) -> MinkowskiNorm {
    let b = DMatrix::from_row_slice(n, n, &entries[..n * n]);
    let a = b.transpose() * b + DMatrix::identity(n, n) * 0.5;
    let d: Vec<f64> = dir[..n].to_vec();
    let scale = d.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-3);
    let term = QuarticTerm::new(1.0, d.iter().map(|x| x / scale).collect());
    MinkowskiNorm::quartic_perturbed(a, vec![term], 0.02).unwrap()
}

fn norm_and_vectors(n: usize) -> impl Strategy<Value = (MinkowskiNorm, DVector<f64>, DVector<f64>)> {
    (
        prop::collection::vec(-1.0f64..1.0, n * n),
        prop::collection::vec(-1.0f64..1.0, n),
        prop::collection::vec(-3.0f64..3.0, n),
        prop::collection::vec(-3.0f64..3.0, n),
    )
        .prop_filter("non-zero vectors", |(_, _, v, w)| {
            v.iter().any(|x| x.abs() > 1e-3) && w.iter().any(|x| x.abs() > 1e-3)
        })
        .prop_map(move |(e, d, v, w)| (quartic(&e, &d, n), DVector::from_vec(v), DVector::from_vec(w)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn norm_is_symmetric_homogeneous_and_subadditive((norm, v, w) in norm_and_vectors(3), t in -4.0f64..4.0) {
        let (pv, pw) = (norm.eval(&v), norm.eval(&w));
        prop_assert!((norm.eval(&(&v * t)) - t.abs() * pv).abs() <= 1e-12 * (1.0 + t.abs() * pv));
        prop_assert!((norm.eval(&-&v) - pv).abs() <= 1e-13 * pv);
        prop_assert!(norm.eval(&(&v + &w)) <= pv + pw + 1e-12);
    }

    #[test]
    fn legendre_is_homogeneous_and_pairs_to_the_square((norm, v, w) in norm_and_vectors(3), t in 0.1f64..5.0) {
        let l = norm.legendre(&v);
        let pv = norm.eval(&v);
        prop_assert!((l.pair(&v) - pv * pv).abs() <= 1e-11 * pv * pv);
        let lt = norm.legendre(&(&v * t));
        prop_assert!((lt.as_vector() - l.as_vector() * t).norm() <= 1e-11 * t * l.as_vector().norm());
        // Fenchel-Young: ⟨ℒv, w⟩ ≤ Φ*(ℒv) Φ(w) with Φ*(ℒv) = Φ(v)
        prop_assert!(l.pair(&w) <= pv * norm.eval(&w) + 1e-10);
    }

    #[test]
    fn dual_norm_is_homogeneous((norm, v, _w) in norm_and_vectors(2), t in 0.1f64..5.0) {
        let l = Covector(v.clone());
        let d = norm.dual_eval(&l).unwrap();
        let dt = norm.dual_eval(&Covector(&v * t)).unwrap();
        prop_assert!((dt - t * d).abs() <= 1e-9 * t * d);
    }

    #[test]
    fn saddle_class_ignores_normal_orientation(
        a in prop::array::uniform3(-2.0f64..2.0),
        b in prop::array::uniform3(-2.0f64..2.0),
    ) {
        let fa = [[a[0], a[1]], [a[1], a[2]]];
        let fb = [[b[0], b[1]], [b[1], b[2]]];
        let neg = |f: [[f64; 2]; 2]| [[-f[0][0], -f[0][1]], [-f[1][0], -f[1][1]]];
        let base = SaddleVerdict::from_pencil([0.0, 0.0], &[fa, fb]);
        for forms in [[neg(fa), fb], [fa, neg(fb)], [fb, fa]] {
            let v = SaddleVerdict::from_pencil([0.0, 0.0], &forms);
            prop_assert_eq!(v.class, base.class);
        }
        // a rotation of the normal frame keeps the class
        let (c, s) = (0.6, 0.8);
        let mix = |x: [[f64; 2]; 2], y: [[f64; 2]; 2], p: f64, q: f64| {
            [[p * x[0][0] + q * y[0][0], p * x[0][1] + q * y[0][1]], [p * x[1][0] + q * y[1][0], p * x[1][1] + q * y[1][1]]]
        };
        let rotated = SaddleVerdict::from_pencil([0.0, 0.0], &[mix(fa, fb, c, s), mix(fa, fb, -s, c)]);
        if !base.boundary && !rotated.boundary {
            prop_assert_eq!(rotated.class, base.class);
        }
    }

    #[test]
    fn graph_of_indefinite_form_is_strictly_saddle(a in 0.1f64..3.0, c in 0.1f64..3.0, b in -1.0f64..1.0) {
        let s = ImmersedSurface::new(
            Arc::new(MinkowskiNorm::euclidean(3)),
            Chart::QuadraticGraph { a, b, c: -c },
            Domain::square(2.0),
        ).unwrap();
        let v = s.saddle_classify([0.0, 0.0], [1.0, 0.0]).unwrap();
        prop_assert_eq!(v.class, SaddleClass::StrictlySaddle);
    }

    #[test]
    fn perimeter_is_translation_invariant_and_homogeneous(
        pts in prop::collection::vec(prop::array::uniform2(-2.0f64..2.0), 6..16),
        shift in prop::array::uniform2(-5.0f64..5.0),
        k in 0.1f64..4.0,
    ) {
        let hull = convex_hull(&pts);
        prop_assume!(hull.len() >= 3);
        prop_assert_eq!(convex_hull(&hull).len(), hull.len());
        let norm = MinkowskiNorm::quadratic(DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0])).unwrap();
        let p = polygon_perimeter(&hull, &norm).unwrap();
        let moved: Vec<[f64; 2]> = hull.iter().map(|q| [q[0] + shift[0], q[1] + shift[1]]).collect();
        let scaled: Vec<[f64; 2]> = hull.iter().map(|q| [k * q[0], k * q[1]]).collect();
        prop_assert!((polygon_perimeter(&moved, &norm).unwrap() - p).abs() <= 1e-12 * p.max(1.0));
        prop_assert!((polygon_perimeter(&scaled, &norm).unwrap() - k * p).abs() <= 1e-12 * k * p.max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn geodesics_retrace_themselves(x in -0.5f64..0.5, y in -0.5f64..0.5, a in 0.0f64..6.28) {
        let s = ImmersedSurface::new(
            Arc::new(quartic(&[1.0, 0.2, 0.0, 0.1, 0.9, 0.3, 0.0, 0.0, 1.1], &[1.0, 0.5, -0.2], 3)),
            Chart::QuadraticGraph { a: 0.5, b: 0.2, c: -0.4 },
            Domain::square(3.0),
        ).unwrap();
        let fwd = shoot(&s, [x, y], [a.cos(), a.sin()], 0.8, 2e-3).unwrap();
        prop_assume!(!fwd.truncated);
        let (end, vel, _) = fwd.eval(fwd.t_end());
        let back = shoot(&s, end, [-vel[0], -vel[1]], 0.8, 2e-3).unwrap();
        let e = back.end();
        prop_assert!((e[0] - x).abs() < 1e-8 && (e[1] - y).abs() < 1e-8, "{:?} vs {:?}", e, [x, y]);
    }

    #[test]
    fn normalization_area_is_invariant_under_linear_maps(
        entries in prop::collection::vec(-1.0f64..1.0, 4),
        m in prop::array::uniform4(-1.0f64..1.0),
    ) {
        let base = quartic(&entries, &[1.0, 0.3], 2);
        let map = DMatrix::from_row_slice(2, 2, &[1.0 + m[0].abs(), m[1], m[2], 1.0 + m[3].abs()]);
        let det = map.determinant();
        prop_assume!(det.abs() > 0.2);
        // Φ'(v) = Φ(Mv) has unit ball M⁻¹B, so every circumscribed area scales by 1/|det M|
        let pulled = MinkowskiNorm::pullback(Arc::new(base.clone()), map).unwrap();
        let a = parallelogram_normalize(&base).unwrap().area;
        let b = parallelogram_normalize(&pulled).unwrap().area;
        prop_assert!((b * det.abs() - a).abs() <= 1e-9 * a, "{} vs {}", b * det.abs(), a);
    }
}
