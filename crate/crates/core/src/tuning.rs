//! Operating point and gain design.
//!
//! The recipe runs in a fixed order: load angle for the design power, the
//! set-point constellation, the rank-one observer gain, the PI gains that
//! decouple frequency estimation from flux estimation, and the voltage gain.
//! Gains are computed once for the design point and then held fixed; only
//! the set-points follow later power commands.

use serde::{Deserialize, Serialize};

use crate::controller::{ControllerGains, Setpoints};
use crate::error::{Error, Result};
use crate::numerics::{
    place_rank_one, pole_pair_coefficients, rank_one_closed_loop, rot, Complex64, Mat2, Vec2,
};
use crate::plant::grid_flux;
use crate::smallsignal::sync_tf_coeffs;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuningSpec {
    /// Flux-estimation poles (rad/s).
    pub sigma_o: [Complex64; 2],
    /// Voltage-loop poles (rad/s).
    pub sigma_v: [Complex64; 2],
    /// Damping of the synchronization polynomial.
    pub zeta: f64,
    /// Synchronization bandwidth (rad/s).
    pub omega_s: f64,
    /// Design inductance (pu).
    pub l0_pu: f64,
    /// Design power (pu).
    pub p_star: f64,
    /// Terminal voltage set-point (pu).
    pub v_star: f64,
    /// Grid voltage amplitude assumed by the design (pu).
    pub u_g: f64,
    /// Nominal grid frequency (rad/s).
    pub omega0: f64,
}

impl TuningSpec {
    /// Reference design: observer poles at `-2.5 w0` (double), synchronization
    /// `zeta = 0.9`, `omega_s = 1.5 w0`, voltage poles at `-w0` (double),
    /// designed for 1 pu power with `L0 = 0.5` pu at 50 Hz.
    pub fn reference() -> Self {
        Self::reference_at(std::f64::consts::TAU * 50.0)
    }

    pub fn reference_at(omega0: f64) -> Self {
        let double = |x: f64| [Complex64::new(x, 0.0), Complex64::new(x, 0.0)];
        Self {
            sigma_o: double(-2.5 * omega0),
            sigma_v: double(-omega0),
            zeta: 0.9,
            omega_s: 1.5 * omega0,
            l0_pu: 0.5,
            p_star: 1.0,
            v_star: 1.0,
            u_g: 1.0,
            omega0,
        }
    }

    /// Structural checks. Pole locations are not required to be stable so
    /// that deliberately unstable designs can be analysed.
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")))
            }
        };
        positive("zeta", self.zeta)?;
        positive("omega_s", self.omega_s)?;
        positive("L0", self.l0_pu)?;
        positive("V*", self.v_star)?;
        positive("U_g", self.u_g)?;
        positive("omega0", self.omega0)?;
        if !self.p_star.is_finite() {
            return Err(Error::InvalidParameter("p* must be finite".into()));
        }
        pole_pair_coefficients(self.sigma_o)?;
        pole_pair_coefficients(self.sigma_v)?;
        Ok(())
    }

    /// `alpha_p = omega0 L0 / (U_g V*)` in per-unit (`omega0 L0_sec = L0_pu`).
    pub fn alpha_p(&self) -> f64 {
        self.l0_pu / (self.u_g * self.v_star)
    }

    pub fn with_power(self, p_star: f64) -> Self {
        Self { p_star, ..self }
    }
}

/// Exact load angle `asin(alpha_p p*)` at the design power.
pub fn load_angle_setpoint(spec: &TuningSpec) -> Result<f64> {
    let ratio = spec.alpha_p() * spec.p_star;
    if !(-1.0..=1.0).contains(&ratio) {
        return Err(Error::InfeasibleSetpoint {
            p_star: spec.p_star,
            ratio,
        });
    }
    Ok(ratio.asin())
}

/// Small-angle form `alpha_p p*`.
pub fn load_angle_linear(spec: &TuningSpec) -> f64 {
    spec.alpha_p() * spec.p_star
}

pub fn steady_state_targets(spec: &TuningSpec, delta_star: f64) -> Setpoints {
    let u_c_star = Vec2::new(spec.v_star, 0.0);
    let u_g_star = rot(-delta_star) * Vec2::new(spec.u_g, 0.0);
    Setpoints {
        p_star: spec.p_star,
        v_star: spec.v_star,
        delta_star,
        u_c_star,
        u_g_star,
        psi_g_star: grid_flux(u_g_star, spec.omega0),
        psi_star: grid_flux(u_c_star, spec.omega0),
    }
}

/// Set-points for a new power command under an existing spec.
pub fn setpoints_for_power(spec: &TuningSpec, p_star: f64) -> Result<Setpoints> {
    let spec = spec.with_power(p_star);
    Ok(steady_state_targets(&spec, load_angle_setpoint(&spec)?))
}

/// Rank-one observer gain `K_o = k_o psi_g*^T` placing `sigma_o`.
pub fn design_k_o(spec: &TuningSpec, sp: &Setpoints) -> Result<(Vec2, Mat2)> {
    let k_o = place_rank_one(sp.psi_g_star, spec.omega0, spec.sigma_o)?;
    Ok((k_o, Mat2::outer(k_o, sp.psi_g_star)))
}

/// Proportional gain giving `D1(s) = s^2 + 2 zeta omega_s s + omega_s^2`.
pub fn design_k_p(spec: &TuningSpec, sp: &Setpoints) -> Result<Vec2> {
    let psi = sp.psi_g_star;
    if psi.norm() < 1e-12 {
        return Err(Error::SingularFlux);
    }
    // [psi_q  -psi_d] k_p^T = [2 zeta omega_s  ]
    // [psi_d   psi_q]         [omega_s^2/omega0]
    let m = Mat2::new(psi.q, -psi.d, psi.d, psi.q);
    let rhs = Vec2::new(2.0 * spec.zeta * spec.omega_s, spec.omega_s * spec.omega_s / spec.omega0);
    let inv = m.inverse().ok_or(Error::SingularFlux)?;
    Ok(inv * rhs)
}

/// `k_i = k_p (omega0 J + K_o)`.
pub fn design_k_i(k_p: Vec2, k_o_mat: Mat2, omega0: f64) -> Vec2 {
    (Mat2::J.scale(omega0) + k_o_mat).left_mul(k_p)
}

/// Row direction of the linearised voltage feedback, `[0, -omega0]`.
pub fn voltage_direction(omega0: f64) -> Vec2 {
    Vec2::new(0.0, -omega0)
}

pub fn design_k_v(spec: &TuningSpec) -> Result<Vec2> {
    place_rank_one(voltage_direction(spec.omega0), spec.omega0, spec.sigma_v)
}

/// Runs the full recipe for `spec`.
pub fn full_design(spec: &TuningSpec) -> Result<(ControllerGains, Setpoints)> {
    spec.validate()?;
    let delta_star = load_angle_setpoint(spec)?;
    let sp = steady_state_targets(spec, delta_star);
    let (k_o, k_o_mat) = design_k_o(spec, &sp)?;
    let k_p = design_k_p(spec, &sp)?;
    let k_i = design_k_i(k_p, k_o_mat, spec.omega0);
    let k_v = design_k_v(spec)?;
    let gains = ControllerGains {
        k_o,
        k_o_mat,
        k_p,
        k_i,
        k_v,
        omega0: spec.omega0,
    };
    Ok((gains, sp))
}

/// Relative residuals of every identity the design is supposed to satisfy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignResiduals {
    /// Characteristic polynomial of `-omega0 J - K_o` against `sigma_o`.
    pub observer_placement: f64,
    /// Characteristic polynomial of `-omega0 J - k_v w` against `sigma_v`.
    pub voltage_placement: f64,
    /// `(-a1, -a2)` against `(2 zeta omega_s, omega_s^2)`.
    pub sync_polynomial: f64,
    /// `k_i - k_p (omega0 J + K_o)`.
    pub pi_cancellation: f64,
    /// `K_o J psi_g*`, the flux-to-angle coupling the rank-one form removes.
    pub angle_coupling: f64,
}

impl DesignResiduals {
    pub fn max(&self) -> f64 {
        [
            self.observer_placement,
            self.voltage_placement,
            self.sync_polynomial,
            self.pi_cancellation,
            self.angle_coupling,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

fn char_poly_mismatch(m: Mat2, sigma: [Complex64; 2]) -> f64 {
    let Ok((sum, prod)) = pole_pair_coefficients(sigma) else {
        return f64::INFINITY;
    };
    let scale = sigma[0].norm().max(sigma[1].norm()).max(f64::MIN_POSITIVE);
    ((m.trace() - sum).abs() / scale).max((m.det() - prod).abs() / (scale * scale))
}

pub fn design_residuals(spec: &TuningSpec, g: &ControllerGains, sp: &Setpoints) -> DesignResiduals {
    let w0 = spec.omega0;
    let obs = Mat2::J.scale(-w0) - g.k_o_mat;
    let volt = rank_one_closed_loop(voltage_direction(w0), w0, g.k_v);
    let sync = sync_tf_coeffs(g.k_p, sp, w0);
    let want1 = 2.0 * spec.zeta * spec.omega_s;
    let want2 = spec.omega_s * spec.omega_s;
    let ki_ref = design_k_i(g.k_p, g.k_o_mat, w0);
    let psi_scale = sp.psi_g_star.norm().max(f64::MIN_POSITIVE);
    DesignResiduals {
        observer_placement: char_poly_mismatch(obs, spec.sigma_o),
        voltage_placement: char_poly_mismatch(volt, spec.sigma_v),
        sync_polynomial: ((-sync.a1 - want1).abs() / want1).max((-sync.a2 - want2).abs() / want2),
        pi_cancellation: (g.k_i - ki_ref).norm() / ki_ref.norm().max(f64::MIN_POSITIVE),
        angle_coupling: (g.k_o_mat * sp.psi_g_star.perp()).norm()
            / (g.k_o_mat.max_abs() * psi_scale).max(f64::MIN_POSITIVE),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{eig_small, SmallMatrix};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn normalized() -> TuningSpec {
        TuningSpec::reference_at(1.0)
    }

    #[test]
    fn reference_load_angle() {
        let d = load_angle_setpoint(&TuningSpec::reference()).unwrap();
        assert!((d - 0.523_598_775_598_298_8).abs() < 1e-12);
        assert!((load_angle_linear(&TuningSpec::reference()) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn zero_power_zero_angle() {
        assert_eq!(load_angle_setpoint(&TuningSpec::reference().with_power(0.0)).unwrap(), 0.0);
    }

    #[test]
    fn infeasible_power() {
        let err = load_angle_setpoint(&TuningSpec::reference().with_power(2.5)).unwrap_err();
        assert!(matches!(err, Error::InfeasibleSetpoint { .. }));
    }

    #[test]
    fn targets_at_zero_angle() {
        let sp = steady_state_targets(&normalized(), 0.0);
        assert_eq!(sp.u_g_star, Vec2::new(1.0, 0.0));
        assert_eq!(sp.psi_g_star, Vec2::new(0.0, -1.0));
        assert_eq!(sp.psi_star, Vec2::new(0.0, -1.0));
        assert_eq!(sp.u_c_star, Vec2::new(1.0, 0.0));
    }

    #[test]
    fn targets_at_thirty_degrees() {
        let sp = steady_state_targets(&normalized(), PI / 6.0);
        assert!((sp.u_g_star - Vec2::new(0.866_025_403_784_438_6, -0.5)).norm() < 1e-15);
    }

    #[test]
    fn targets_reproduce_design_power() {
        // p* = u_g*^T psi* / L (kappa folded into the base)
        for p in [0.0, 0.3, 1.0, -0.7, 1.9] {
            let spec = TuningSpec::reference().with_power(p);
            let sp = setpoints_for_power(&spec, p).unwrap();
            let l_sec = spec.l0_pu / spec.omega0;
            let p_check = sp.u_g_star.dot(sp.psi_star - sp.psi_g_star) / l_sec;
            assert!((p_check - p).abs() < 1e-12, "{p}: {p_check}");
        }
    }

    #[test]
    fn observer_gain_normalized() {
        let spec = normalized().with_power(0.0);
        let sp = steady_state_targets(&spec, 0.0);
        let (k_o, k_mat) = design_k_o(&spec, &sp).unwrap();
        assert!((k_o - Vec2::new(5.25, -5.0)).norm() < 1e-14);
        let s = eig_small(&SmallMatrix::from_mat2(Mat2::J.scale(-1.0) - k_mat)).unwrap();
        for z in s.iter() {
            assert!((z - c(-2.5)).norm() < 1e-7);
        }
    }

    #[test]
    fn observer_gain_vanishes_at_open_loop_poles() {
        let mut spec = normalized().with_power(0.0);
        spec.sigma_o = [Complex64::new(0.0, 1.0), Complex64::new(0.0, -1.0)];
        let sp = steady_state_targets(&spec, 0.0);
        let (_, k_mat) = design_k_o(&spec, &sp).unwrap();
        assert!(k_mat.max_abs() < 1e-15);
    }

    #[test]
    fn observer_gain_at_thirty_degrees() {
        let mut spec = normalized();
        spec.sigma_o = [Complex64::new(-2.0, 1.5), Complex64::new(-2.0, -1.5)];
        let sp = steady_state_targets(&spec, PI / 6.0);
        let (_, k_mat) = design_k_o(&spec, &sp).unwrap();
        let s = eig_small(&SmallMatrix::from_mat2(Mat2::J.scale(-1.0) - k_mat)).unwrap();
        assert!((s.values()[0] - spec.sigma_o[0]).norm() < 1e-9 * 2.5);
        assert!((s.values()[1] - spec.sigma_o[1]).norm() < 1e-9 * 2.5);
    }

    #[test]
    fn proportional_gain_normalized() {
        let spec = normalized();
        let sp = steady_state_targets(&spec, 0.0);
        let k_p = design_k_p(&spec, &sp).unwrap();
        assert!((k_p - Vec2::new(-2.7, -2.25)).norm() < 1e-14);
        let s = sync_tf_coeffs(k_p, &sp, 1.0);
        assert!((s.a1 + 2.7).abs() < 1e-14 && (s.a2 + 2.25).abs() < 1e-14);
    }

    #[test]
    fn proportional_gain_half_damping() {
        let mut spec = normalized();
        spec.zeta = 0.5;
        spec.omega_s = 1.0;
        let sp = steady_state_targets(&spec, 0.0);
        let s = sync_tf_coeffs(design_k_p(&spec, &sp).unwrap(), &sp, 1.0);
        assert!((s.a1 + 1.0).abs() < 1e-14 && (s.a2 + 1.0).abs() < 1e-14);
    }

    #[test]
    fn proportional_gain_rejects_zero_flux() {
        let mut sp = steady_state_targets(&normalized(), 0.0);
        sp.psi_g_star = Vec2::ZERO;
        assert_eq!(design_k_p(&normalized(), &sp).unwrap_err(), Error::SingularFlux);
    }

    #[test]
    fn integral_gain_cases() {
        let k_mat = Mat2::outer(Vec2::new(5.25, -5.0), Vec2::new(0.0, -1.0));
        assert_eq!(design_k_i(Vec2::ZERO, k_mat, 1.0), Vec2::ZERO);
        let k_i = design_k_i(Vec2::new(-2.7, -2.25), k_mat, 1.0);
        // [-2.7, -2.25] . [[0, -6.25], [1, 5]]
        assert!((k_i - Vec2::new(-2.25, 5.625)).norm() < 1e-14);
    }

    #[test]
    fn voltage_gain_cases() {
        let k_v = design_k_v(&normalized()).unwrap();
        assert!((k_v - Vec2::new(0.0, -2.0)).norm() < 1e-15);

        let mut spec = normalized();
        spec.sigma_v = [Complex64::new(0.0, 1.0), Complex64::new(0.0, -1.0)];
        assert!(design_k_v(&spec).unwrap().norm() < 1e-15);

        let spec = TuningSpec::reference();
        let k_v = design_k_v(&spec).unwrap();
        let w0 = spec.omega0;
        let m = rank_one_closed_loop(voltage_direction(w0), w0, k_v);
        assert!((m.trace() + 2.0 * w0).abs() < 1e-9 * w0);
        assert!((m.det() - w0 * w0).abs() < 1e-9 * w0 * w0);
        for z in eig_small(&SmallMatrix::from_mat2(m)).unwrap().iter() {
            assert!((z - c(-w0)).norm() < 1e-6 * w0);
        }
    }

    #[test]
    fn reference_design_passes_all_identities() {
        let spec = TuningSpec::reference();
        let (g, sp) = full_design(&spec).unwrap();
        let r = design_residuals(&spec, &g, &sp);
        assert!(r.max() < 1e-12, "{r:?}");
        assert!((sp.delta_star - PI / 6.0).abs() < 1e-12);
    }

    #[test]
    fn zero_power_design_is_finite() {
        let spec = TuningSpec::reference().with_power(0.0);
        let (g, sp) = full_design(&spec).unwrap();
        assert_eq!(sp.delta_star, 0.0);
        for v in [g.k_o, g.k_p, g.k_i, g.k_v] {
            assert!(v.is_finite());
        }
        assert!(design_residuals(&spec, &g, &sp).max() < 1e-12);
    }

    #[test]
    fn lower_damping_design() {
        let mut spec = TuningSpec::reference();
        spec.zeta = 0.7;
        let (g, sp) = full_design(&spec).unwrap();
        let s = sync_tf_coeffs(g.k_p, &sp, spec.omega0);
        assert!((-s.a1 - 1.4 * spec.omega_s).abs() < 1e-10 * spec.omega_s);
        assert!((-s.a2 - spec.omega_s.powi(2)).abs() < 1e-10 * spec.omega_s.powi(2));
    }

    proptest! {
        #[test]
        fn load_angle_is_monotonic(p1 in -1.99..1.99f64, dp in 1e-6..0.5f64) {
            let spec = TuningSpec::reference();
            let p2 = (p1 + dp).min(2.0);
            let d1 = load_angle_setpoint(&spec.with_power(p1)).unwrap();
            let d2 = load_angle_setpoint(&spec.with_power(p2)).unwrap();
            prop_assert!(d2 > d1);
        }
    }
}
