//! Virtual flux observer, PI grid-frequency estimator and terminal voltage law.
//!
//! The controller works in its own rotating frame (angle `theta_c`). It only
//! knows the design inductance `L0`, passed in as the `model` plant
//! parameters; the actual plant inductance never enters here.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Mat2, Vec2};
use crate::plant::{from_controller_frame, to_controller_frame, PlantParams};

/// Observer, frequency-estimator and voltage gains.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerGains {
    /// Column vector of the rank-one observer gain.
    pub k_o: Vec2,
    /// Observer gain matrix `k_o * psi_g*^T`.
    pub k_o_mat: Mat2,
    /// Proportional row gain of the frequency estimator.
    pub k_p: Vec2,
    /// Integral row gain, `k_p (omega0 J + K_o)`.
    pub k_i: Vec2,
    /// Column gain of the voltage-magnitude loop.
    pub k_v: Vec2,
    /// Nominal grid frequency (rad/s).
    pub omega0: f64,
}

/// Operating-point constellation for a power set-point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Setpoints {
    pub p_star: f64,
    pub v_star: f64,
    pub delta_star: f64,
    pub u_c_star: Vec2,
    pub u_g_star: Vec2,
    pub psi_g_star: Vec2,
    pub psi_star: Vec2,
}

/// Integrator states of the controller.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ControllerState {
    /// Flux estimate (pu*s).
    pub psi_hat: Vec2,
    /// Integral of the observer error (pu*s^2).
    pub gamma: Vec2,
    /// Controller frame angle, unwrapped (rad).
    pub theta_c: f64,
}

impl ControllerState {
    /// Cold-start state: flux estimate at the grid flux target and the
    /// integrator pre-biased so that the frequency estimate starts at the
    /// nominal frequency.
    pub fn presynchronized(g: &ControllerGains, sp: &Setpoints) -> Self {
        Self {
            psi_hat: sp.psi_g_star,
            gamma: integrator_for_frequency(g, g.omega0),
            theta_c: 0.0,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.psi_hat.is_finite() && self.gamma.is_finite() && self.theta_c.is_finite()
    }
}

/// Minimum-norm `gamma` with `k_i . gamma = omega`.
pub fn integrator_for_frequency(g: &ControllerGains, omega: f64) -> Vec2 {
    let n2 = g.k_i.dot(g.k_i);
    if n2 == 0.0 {
        Vec2::ZERO
    } else {
        g.k_i * (omega / n2)
    }
}

/// Instantaneous controller outputs for a given state and measured current.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerOutputs {
    pub e: Vec2,
    pub omega_c: f64,
    pub v_hat: f64,
    pub u_c: Vec2,
}

/// `e = L0 i + psi_g* - psi_hat`, with `i` in the controller frame.
pub fn observer_error(i: Vec2, psi_hat: Vec2, model: &PlantParams, sp: &Setpoints) -> Vec2 {
    i * model.l_sec() + sp.psi_g_star - psi_hat
}

/// `omega_c = k_i . gamma + k_p . e`.
pub fn estimate_frequency(gamma: Vec2, e: Vec2, g: &ControllerGains) -> f64 {
    g.k_i.dot(gamma) + g.k_p.dot(e)
}

/// Estimated terminal voltage magnitude `omega_c |psi_hat|`.
pub fn voltage_estimate(psi_hat: Vec2, omega_c: f64) -> f64 {
    omega_c * psi_hat.norm()
}

/// `u_c = u_c* + k_v (V* - omega_c |psi_hat|)` in the controller frame.
pub fn voltage_command(psi_hat: Vec2, omega_c: f64, g: &ControllerGains, sp: &Setpoints) -> Vec2 {
    sp.u_c_star + g.k_v * (sp.v_star - voltage_estimate(psi_hat, omega_c))
}

pub fn evaluate(
    cs: &ControllerState,
    i_dq: Vec2,
    g: &ControllerGains,
    model: &PlantParams,
    sp: &Setpoints,
) -> ControllerOutputs {
    let e = observer_error(i_dq, cs.psi_hat, model, sp);
    let omega_c = estimate_frequency(cs.gamma, e, g);
    ControllerOutputs {
        e,
        omega_c,
        v_hat: voltage_estimate(cs.psi_hat, omega_c),
        u_c: voltage_command(cs.psi_hat, omega_c, g, sp),
    }
}

/// Time derivative of the controller states.
pub fn observer_derivative(
    cs: &ControllerState,
    i_dq: Vec2,
    u_c: Vec2,
    omega_c: f64,
    g: &ControllerGains,
    model: &PlantParams,
    sp: &Setpoints,
) -> ControllerState {
    let e = observer_error(i_dq, cs.psi_hat, model, sp);
    ControllerState {
        psi_hat: -cs.psi_hat.perp() * omega_c + u_c + g.k_o_mat * e,
        gamma: e,
        theta_c: omega_c,
    }
}

/// One sampled-data controller period.
///
/// Samples the stationary-frame current, evaluates the control law, advances
/// the controller states by forward Euler over `dt` and returns the new state
/// with the stationary-frame voltage to hold until the next call.
pub fn controller_step(
    cs: &ControllerState,
    i_s: Vec2,
    dt: f64,
    g: &ControllerGains,
    model: &PlantParams,
    sp: &Setpoints,
) -> Result<(ControllerState, Vec2, ControllerOutputs)> {
    let i_dq = to_controller_frame(i_s, cs.theta_c);
    let out = evaluate(cs, i_dq, g, model, sp);
    let d = observer_derivative(cs, i_dq, out.u_c, out.omega_c, g, model, sp);
    let next = ControllerState {
        psi_hat: cs.psi_hat + d.psi_hat * dt,
        gamma: cs.gamma + d.gamma * dt,
        theta_c: cs.theta_c + d.theta_c * dt,
    };
    let u_c_s = from_controller_frame(out.u_c, cs.theta_c);
    if !next.is_finite() || !u_c_s.is_finite() {
        return Err(Error::NonFiniteState { t: f64::NAN });
    }
    Ok((next, u_c_s, out))
}

/// Re-biases the integrator on a set-point change so that `omega_c` is
/// continuous across the change.
///
/// Without this, the jump of `psi_g*` passes straight through `k_p` into the
/// frame frequency. With it, the load-angle response to a `delta*` step
/// follows `-a2 / D1(s)` with no derivative kick.
pub fn retarget(
    cs: &ControllerState,
    i_dq: Vec2,
    g: &ControllerGains,
    model: &PlantParams,
    old: &Setpoints,
    new: &Setpoints,
) -> ControllerState {
    let e_old = observer_error(i_dq, cs.psi_hat, model, old);
    let e_new = observer_error(i_dq, cs.psi_hat, model, new);
    let kick = g.k_p.dot(e_new - e_old);
    ControllerState {
        gamma: cs.gamma - integrator_for_frequency(g, kick),
        ..*cs
    }
}
