//! Converter and grid behind a lossless inductance.
//!
//! Quantities are per-unit amplitudes with time in seconds, so the inductance
//! that enters the current ODE is `L_pu / omega_base` (seconds). The factor
//! 3/2 of the two-axis power expression is folded into the power base, which
//! makes the per-unit active power simply `u_g . i`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{rot, Vec2};

/// Rated apparent power of the reference platform (VA).
pub const RATED_POWER_VA: f64 = 20e3;
/// Rated line-to-line RMS voltage (V).
pub const RATED_LINE_VOLTAGE_V: f64 = 380.0;
/// Rated RMS phase current (A).
pub const RATED_CURRENT_A: f64 = 30.0;
/// Base (and nominal grid) frequency (Hz).
pub const BASE_FREQUENCY_HZ: f64 = 50.0;
/// Converter-side filter inductance (pu).
pub const FILTER_L_PU: f64 = 0.1;
/// Control sampling rate (Hz).
pub const SAMPLING_HZ: f64 = 10e3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantParams {
    /// Total inductance, filter plus grid (pu).
    pub l_pu: f64,
    /// Base angular frequency (rad/s).
    pub omega_base: f64,
    /// Grid voltage amplitude (pu).
    pub u_g: f64,
    /// Power base (VA).
    pub s_base: f64,
    /// Peak phase voltage base (V).
    pub u_base: f64,
    /// Peak current base (A).
    pub i_base: f64,
    pub kappa: f64,
}

impl PlantParams {
    /// Rated platform bases with the given total inductance.
    pub fn rated(l_pu: f64) -> Self {
        Self {
            l_pu,
            omega_base: std::f64::consts::TAU * BASE_FREQUENCY_HZ,
            u_g: 1.0,
            s_base: RATED_POWER_VA,
            u_base: (2.0f64 / 3.0).sqrt() * RATED_LINE_VOLTAGE_V,
            i_base: 2.0f64.sqrt() * RATED_CURRENT_A,
            kappa: 1.5,
        }
    }

    pub fn with_inductance(self, l_pu: f64) -> Self {
        Self { l_pu, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.l_pu > 0.0 && self.l_pu.is_finite()) {
            return Err(Error::InvalidParameter(format!("L_pu must be positive, got {}", self.l_pu)));
        }
        if !(self.omega_base > 0.0 && self.omega_base.is_finite()) {
            return Err(Error::InvalidParameter("omega_base must be positive".into()));
        }
        if !(self.u_g > 0.0 && self.u_g.is_finite()) {
            return Err(Error::InvalidParameter("U_g must be positive".into()));
        }
        Ok(())
    }

    /// Inductance in seconds as it enters the per-unit ODE.
    pub fn l_sec(&self) -> f64 {
        self.l_pu / self.omega_base
    }

    pub fn z_base_ohm(&self) -> f64 {
        self.u_base / self.i_base
    }

    pub fn l_base_henry(&self) -> f64 {
        self.z_base_ohm() / self.omega_base
    }

    /// Converts a two-axis SI voltage/current pair (peak values) to pu power.
    pub fn si_power_to_pu(&self, u_si: Vec2, i_si: Vec2) -> f64 {
        self.kappa * u_si.dot(i_si) / self.s_base
    }
}

/// Grid angle and frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridState {
    pub theta_g: f64,
    pub omega_g: f64,
}

impl GridState {
    /// Grid voltage vector `rot(theta_g) * [U_g, 0]` in the stationary frame.
    pub fn voltage(&self, p: &PlantParams) -> Vec2 {
        rot(self.theta_g) * Vec2::new(p.u_g, 0.0)
    }
}

/// Stationary-frame plant state.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PlantState {
    pub i_s: Vec2,
    pub theta_g: f64,
}

/// `d/dt` of [`PlantState`] for converter voltage `u_c_s` (stationary frame).
pub fn plant_derivative(x: &PlantState, u_c_s: Vec2, omega_g: f64, p: &PlantParams) -> PlantState {
    let u_g_s = GridState {
        theta_g: x.theta_g,
        omega_g,
    }
    .voltage(p);
    PlantState {
        i_s: (u_c_s - u_g_s) * (1.0 / p.l_sec()),
        theta_g: omega_g,
    }
}

/// Stationary to controller frame, `rot(-theta_c) * v_s`.
pub fn to_controller_frame(v_s: Vec2, theta_c: f64) -> Vec2 {
    rot(-theta_c) * v_s
}

/// Controller to stationary frame, `rot(theta_c) * v`.
pub fn from_controller_frame(v: Vec2, theta_c: f64) -> Vec2 {
    rot(theta_c) * v
}

/// Per-unit active power; both vectors must be in the same frame.
pub fn active_power(u_g: Vec2, i: Vec2) -> f64 {
    u_g.dot(i)
}

pub fn pcc_voltage_mag(u_c: Vec2) -> f64 {
    u_c.norm()
}

/// Grid-side flux `(omega_g J)^-1 u_g = -J u_g / omega_g`.
pub fn grid_flux(u_g: Vec2, omega_g: f64) -> Vec2 {
    -u_g.perp() * (1.0 / omega_g)
}

/// Virtual flux `L i + (omega_g J)^-1 u_g` in pu*s.
pub fn virtual_flux(i: Vec2, u_g: Vec2, omega_g: f64, p: &PlantParams) -> Result<Vec2> {
    if omega_g.abs() < 1e-6 * p.omega_base {
        return Err(Error::ZeroFrequency { omega: omega_g });
    }
    Ok(i * p.l_sec() + grid_flux(u_g, omega_g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{rk4_step, Mat2};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn zero_voltage_difference_holds_current() {
        let p = PlantParams::rated(0.5);
        let x = PlantState {
            i_s: Vec2::new(0.3, -0.2),
            theta_g: 0.7,
        };
        let u = GridState {
            theta_g: 0.7,
            omega_g: p.omega_base,
        }
        .voltage(&p);
        let dx = plant_derivative(&x, u, p.omega_base, &p);
        assert!(dx.i_s.norm() < 1e-12);
        assert_eq!(dx.theta_g, p.omega_base);
    }

    #[test]
    fn current_slope_against_grid() {
        let p = PlantParams::rated(0.5);
        let dx = plant_derivative(&PlantState::default(), Vec2::ZERO, 100.0 * PI, &p);
        assert!((dx.i_s.d + 628.318_530_717_958_6).abs() < 1e-9);
        assert_eq!(dx.i_s.q, 0.0);
    }

    #[test]
    fn quarter_turn_frame_change() {
        let v = to_controller_frame(Vec2::new(0.0, 1.0), PI / 2.0);
        assert!((v - Vec2::new(1.0, 0.0)).norm() < 1e-15);
        assert_eq!(to_controller_frame(Vec2::new(0.4, 0.1), 0.0), Vec2::new(0.4, 0.1));
    }

    #[test]
    fn power_and_voltage() {
        assert_eq!(active_power(Vec2::new(1.0, 0.0), Vec2::new(1.0, 0.0)), 1.0);
        assert_eq!(active_power(Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0)), 0.0);
        assert_eq!(pcc_voltage_mag(Vec2::new(1.0, 0.0)), 1.0);
        assert_eq!(pcc_voltage_mag(Vec2::ZERO), 0.0);
        assert!((pcc_voltage_mag(Vec2::new(0.6, 0.8)) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rated_bases_are_consistent() {
        let p = PlantParams::rated(0.5);
        // 310.3 V and 42.43 A peak, aligned
        let pu = p.si_power_to_pu(Vec2::new(310.3, 0.0), Vec2::new(42.43, 0.0));
        assert!((pu - 0.987).abs() < 1e-3, "{pu}");
        assert!((p.l_base_henry() - 23e-3).abs() < 0.5e-3);
    }

    #[test]
    fn virtual_flux_cases() {
        let mut p = PlantParams::rated(0.5);
        p.omega_base = 1.0;
        let psi = virtual_flux(Vec2::ZERO, Vec2::new(1.0, 0.0), 1.0, &p).unwrap();
        assert_eq!(psi, Vec2::new(0.0, -1.0));

        let p0 = PlantParams::rated(0.0);
        let ug = Vec2::new(0.3, 0.9);
        let w = p0.omega_base;
        assert_eq!(virtual_flux(Vec2::new(1.0, 0.0), ug, w, &p0).unwrap(), grid_flux(ug, w));

        let err = virtual_flux(Vec2::ZERO, ug, 0.0, &p0).unwrap_err();
        assert!(matches!(err, Error::ZeroFrequency { .. }));
    }

    #[test]
    fn grid_flux_inverts_rotation_generator() {
        let w = 314.0;
        let u = Vec2::new(0.8, -0.3);
        let back = Mat2::J.scale(w) * grid_flux(u, w);
        assert!((back - u).norm() < 1e-15);
    }

    /// Flux identity d(psi)/dt = -omega_c J psi + u_c along an open-loop
    /// trajectory, checked with central differences of the reconstructed flux
    /// in a frame rotating at an arbitrary omega_c.
    #[test]
    fn flux_dynamics_identity_by_finite_differences() {
        let p = PlantParams::rated(0.5);
        let w_g = p.omega_base;
        let w_c = 0.97 * w_g;
        let u_c_dq = |t: f64| Vec2::new(1.0 + 0.1 * (40.0 * t).sin(), 0.2 * (25.0 * t).cos());
        let h = 1e-6;
        let field = |t: f64, x: &[f64; 3]| {
            let st = PlantState {
                i_s: Vec2::new(x[0], x[1]),
                theta_g: x[2],
            };
            let u_s = from_controller_frame(u_c_dq(t), w_c * t);
            let d = plant_derivative(&st, u_s, w_g, &p);
            [d.i_s.d, d.i_s.q, d.theta_g]
        };
        let mut x = [0.2, -0.4, 0.3];
        let mut traj = vec![(0.0, x)];
        for k in 0..2000 {
            x = rk4_step(field, &x, k as f64 * h, h).unwrap();
            traj.push(((k + 1) as f64 * h, x));
        }
        let flux_dq = |t: f64, x: &[f64; 3]| {
            let theta_c = w_c * t;
            let i = to_controller_frame(Vec2::new(x[0], x[1]), theta_c);
            let ug = to_controller_frame(
                GridState {
                    theta_g: x[2],
                    omega_g: w_g,
                }
                .voltage(&p),
                theta_c,
            );
            virtual_flux(i, ug, w_g, &p).unwrap()
        };
        for k in [100usize, 900, 1500] {
            let (t0, x0) = traj[k];
            let fd = (flux_dq(traj[k + 1].0, &traj[k + 1].1) - flux_dq(traj[k - 1].0, &traj[k - 1].1))
                * (0.5 / h);
            let psi = flux_dq(t0, &x0);
            let model = -psi.perp() * w_c + u_c_dq(t0);
            assert!((fd - model).norm() < 1e-6, "k={k}: {fd:?} vs {model:?}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn frame_round_trip(theta in -20.0..20.0f64, d in -5.0..5.0f64, q in -5.0..5.0f64) {
            let v = Vec2::new(d, q);
            let back = from_controller_frame(to_controller_frame(v, theta), theta);
            prop_assert!((back - v).norm() < 1e-12);
        }

        #[test]
        fn active_power_is_rotation_invariant(
            theta in -10.0..10.0f64,
            u in proptest::array::uniform2(-2.0..2.0f64),
            i in proptest::array::uniform2(-2.0..2.0f64),
        ) {
            let (u, i) = (Vec2::from(u), Vec2::from(i));
            let r = rot(theta);
            prop_assert!((active_power(r * u, r * i) - active_power(u, i)).abs() < 1e-12);
        }
    }
}
