use crate::error::{Error, Result};

/// One classical fourth-order Runge-Kutta step of `dx/dt = f(t, x)`.
///
/// Fails with [`Error::NonFiniteState`] if any stage or the result is not
/// finite; the reported time is the start of the step.
pub fn rk4_step<const N: usize, F>(f: F, x: &[f64; N], t: f64, h: f64) -> Result<[f64; N]>
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    debug_assert!(h > 0.0);
    let check = |v: &[f64; N]| {
        if v.iter().all(|x| x.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFiniteState { t })
        }
    };
    let axpy = |a: &[f64; N], s: f64, b: &[f64; N]| -> [f64; N] {
        let mut out = *a;
        for (o, bi) in out.iter_mut().zip(b) {
            *o += s * bi;
        }
        out
    };

    let k1 = f(t, x);
    check(&k1)?;
    let k2 = f(t + 0.5 * h, &axpy(x, 0.5 * h, &k1));
    check(&k2)?;
    let k3 = f(t + 0.5 * h, &axpy(x, 0.5 * h, &k2));
    check(&k3)?;
    let k4 = f(t + h, &axpy(x, h, &k3));
    check(&k4)?;

    let mut out = *x;
    for i in 0..N {
        out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    check(&out)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_field_is_identity() {
        let x = [1.5, -2.0, 3.25];
        assert_eq!(rk4_step(|_, _| [0.0; 3], &x, 0.0, 0.3).unwrap(), x);
    }

    #[test]
    fn exponential_decay_one_step() {
        let x = rk4_step(|_, x: &[f64; 1]| [-x[0]], &[1.0], 0.0, 0.1).unwrap();
        assert!((x[0] - (-0.1f64).exp()).abs() < 1e-7);
        assert!((x[0] - 0.904_837_418).abs() < 1e-7);
    }

    #[test]
    fn quadrature_of_t_squared_is_exact() {
        let x = rk4_step(|t, _: &[f64; 1]| [t * t], &[0.0], 0.0, 1.0).unwrap();
        assert_eq!(x[0], 1.0 / 3.0);
    }

    #[test]
    fn cubic_quadrature_is_exact() {
        let x = rk4_step(|t, _: &[f64; 1]| [4.0 * t * t * t], &[0.0], 1.0, 1.0).unwrap();
        assert!((x[0] - 15.0).abs() < 1e-14);
    }

    #[test]
    fn non_finite_is_reported() {
        let err = rk4_step(|_, x: &[f64; 1]| [1.0 / (x[0] - 1.0)], &[1.0], 2.5, 0.1).unwrap_err();
        assert_eq!(err, Error::NonFiniteState { t: 2.5 });
    }

    #[test]
    fn global_error_is_fourth_order() {
        let endpoint_error = |steps: usize| {
            let h = 1.0 / steps as f64;
            let mut x = [1.0];
            for k in 0..steps {
                x = rk4_step(|_, x: &[f64; 1]| [-x[0]], &x, k as f64 * h, h).unwrap();
            }
            (x[0] - (-1.0f64).exp()).abs()
        };
        for steps in [10, 20, 40] {
            let ratio = endpoint_error(steps) / endpoint_error(2 * steps);
            assert!((ratio - 16.0).abs() < 0.2 * 16.0, "ratio {ratio}");
        }
    }
}
