use num_complex::Complex64;

use super::frame::{Mat2, Vec2};
use crate::error::{Error, Result};

/// Solves `eig(-omega0 * J - k * v^T) = sigma` for the column gain `k`.
///
/// The closed-loop matrix is a rank-one update of `-omega0 * J`, so its
/// trace is `-v^T k` and, by the matrix determinant lemma, its determinant is
/// `omega0^2 - omega0 * v^T J k`. Matching both against the requested
/// characteristic polynomial gives a 2x2 linear system in `k` whose matrix
/// has determinant `-|v|^2`.
pub fn place_rank_one(v: Vec2, omega0: f64, sigma: [Complex64; 2]) -> Result<Vec2> {
    if v.norm() < 1e-12 {
        return Err(Error::ZeroDirection);
    }
    if omega0 == 0.0 || !omega0.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "nominal frequency must be finite and non-zero, got {omega0}"
        )));
    }
    let (sum, prod) = pole_pair_coefficients(sigma)?;

    // [v_d  v_q ] k = -sum
    // [v_q  -v_d] k = (omega0^2 - prod) / omega0
    let rhs_trace = -sum;
    let rhs_det = (omega0 * omega0 - prod) / omega0;
    let n2 = v.dot(v);
    let kd = (v.d * rhs_trace + v.q * rhs_det) / n2;
    let kq = (v.q * rhs_trace - v.d * rhs_det) / n2;
    Ok(Vec2::new(kd, kq))
}

/// Returns `(s1 + s2, s1 * s2)` for a conjugation-closed pole pair.
pub fn pole_pair_coefficients(sigma: [Complex64; 2]) -> Result<(f64, f64)> {
    let [s1, s2] = sigma;
    if !(s1.re.is_finite() && s1.im.is_finite() && s2.re.is_finite() && s2.im.is_finite()) {
        return Err(Error::NonConjugatePair);
    }
    let sum = s1 + s2;
    let prod = s1 * s2;
    let scale = 1.0 + s1.norm().max(s2.norm());
    if sum.im.abs() > 1e-12 * scale || prod.im.abs() > 1e-12 * scale * scale {
        return Err(Error::NonConjugatePair);
    }
    Ok((sum.re, prod.re))
}

/// The matrix `-omega0 * J - k * v^T` whose spectrum [`place_rank_one`] assigns.
pub fn rank_one_closed_loop(v: Vec2, omega0: f64, k: Vec2) -> Mat2 {
    Mat2::J.scale(-omega0) - Mat2::outer(k, v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::eigen::eig_small;
    use crate::numerics::matrix::SmallMatrix;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn spectrum_of(m: Mat2) -> Vec<Complex64> {
        eig_small(&SmallMatrix::from_mat2(m)).unwrap().values().to_vec()
    }

    #[test]
    fn double_pole_at_minus_two_and_a_half() {
        let k = place_rank_one(Vec2::new(0.0, -1.0), 1.0, [c(-2.5, 0.0), c(-2.5, 0.0)]).unwrap();
        assert!((k.d - 5.25).abs() < 1e-14);
        assert!((k.q + 5.0).abs() < 1e-14);
        let m = rank_one_closed_loop(Vec2::new(0.0, -1.0), 1.0, k);
        assert!((m.trace() + 5.0).abs() < 1e-14);
        assert!((m.det() - 6.25).abs() < 1e-14);
        for ev in spectrum_of(m) {
            assert!((ev - c(-2.5, 0.0)).norm() < 1e-7);
        }
    }

    #[test]
    fn open_loop_poles_need_no_gain() {
        let k = place_rank_one(Vec2::new(0.0, -1.0), 1.0, [c(0.0, 1.0), c(0.0, -1.0)]).unwrap();
        assert!(k.norm() < 1e-15);
    }

    #[test]
    fn voltage_direction_instance() {
        // w = [0, -omega0] at omega0 = 1
        let k = place_rank_one(Vec2::new(0.0, -1.0), 1.0, [c(-1.0, 0.0), c(-1.0, 0.0)]).unwrap();
        assert!(k.d.abs() < 1e-15);
        assert!((k.q + 2.0).abs() < 1e-15);
        let m = rank_one_closed_loop(Vec2::new(0.0, -1.0), 1.0, k);
        // s^2 + 2 s + 1
        assert!((m.trace() + 2.0).abs() < 1e-15);
        assert!((m.det() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_zero_direction() {
        let err = place_rank_one(Vec2::ZERO, 1.0, [c(-1.0, 0.0), c(-2.0, 0.0)]).unwrap_err();
        assert_eq!(err, Error::ZeroDirection);
    }

    #[test]
    fn rejects_non_conjugate_pair() {
        let err =
            place_rank_one(Vec2::new(1.0, 0.0), 1.0, [c(-1.0, 1.0), c(-1.0, 1.0)]).unwrap_err();
        assert_eq!(err, Error::NonConjugatePair);
        let err =
            place_rank_one(Vec2::new(1.0, 0.0), 1.0, [c(-1.0, 1.0), c(-2.0, 0.0)]).unwrap_err();
        assert_eq!(err, Error::NonConjugatePair);
    }

    fn stable_pair() -> impl Strategy<Value = [Complex64; 2]> {
        prop_oneof![
            (0.05..5.0f64, 0.0..5.0f64).prop_map(|(a, b)| [c(-a, b), c(-a, -b)]),
            (0.05..5.0f64, 0.05..5.0f64).prop_map(|(a, b)| [c(-a, 0.0), c(-b, 0.0)]),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(500))]

        #[test]
        fn placement_reproduces_requested_poles(
            theta in -3.2..3.2f64,
            mag in 0.01..10.0f64,
            omega0 in 0.2..5.0f64,
            pair in stable_pair(),
        ) {
            let v = Vec2::new(mag * theta.cos(), mag * theta.sin());
            let sigma = [pair[0] * omega0, pair[1] * omega0];
            let k = place_rank_one(v, omega0, sigma).unwrap();
            let m = rank_one_closed_loop(v, omega0, k);
            // Characteristic-polynomial match is the well-conditioned statement
            // of the placement, including for repeated poles.
            let scale = sigma[0].norm().max(omega0);
            prop_assert!((m.trace() - (sigma[0] + sigma[1]).re).abs() <= 1e-9 * scale);
            prop_assert!((m.det() - (sigma[0] * sigma[1]).re).abs() <= 1e-9 * scale * scale);
            let got = spectrum_of(m);
            let mut want: Vec<Complex64> = sigma.to_vec();
            for g in got {
                let (idx, dist) = want
                    .iter()
                    .enumerate()
                    .map(|(i, w)| (i, (g - w).norm()))
                    .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
                // repeated real roots are only sqrt(eps)-conditioned
                let separated = (sigma[0] - sigma[1]).norm() > 1e-3 * scale;
                let tol = if separated { 1e-9 } else { 1e-6 };
                prop_assert!(dist <= tol * scale, "pole {g} off by {dist}");
                want.remove(idx);
            }
        }
    }
}
