//! Nonlinear time-domain runs of the converter under its controller.
//!
//! The plant is integrated in the stationary frame with RK4. In continuous
//! mode the controller states are integrated together with the plant; in
//! sampled mode the controller runs at a fixed rate with forward Euler and
//! its voltage is held between samples.
//!
//! A power step recomputes the set-points from the new power command with the
//! gains left at their initial design, and re-biases the frequency integrator
//! so that the frame frequency does not jump (see
//! [`retarget`](crate::controller::retarget)).

mod metrics;
mod series;

pub use metrics::{extract_metrics, ScenarioMetrics, StepMetrics, STEADY_WINDOW_S};
pub use series::{hex_float, mean, parse_hex_float, rms_diff, FloatFormat, Sample, TimeSeries, CSV_HEADER};

use serde::{Deserialize, Serialize};

use crate::controller::{
    controller_step, evaluate, retarget, ControllerGains, ControllerOutputs, ControllerState, Setpoints,
};
use crate::error::{Error, Result};
use crate::numerics::{rk4_step, rot, wrap_angle, Vec2};
use crate::plant::{from_controller_frame, to_controller_frame, GridState, PlantParams, SAMPLING_HZ};
use crate::smallsignal::find_equilibrium;
use crate::tuning::{full_design, setpoints_for_power, TuningSpec};

/// Default RK4 step (s).
pub const DEFAULT_STEP_S: f64 = 1e-5;
/// Default output rate (Hz).
pub const DEFAULT_OUTPUT_HZ: f64 = 25e3;
/// States larger than this (pu) count as divergence.
const DIVERGENCE_BOUND: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Event {
    PowerStep { t: f64, p_star: f64 },
    FreqRamp { t_start: f64, t_end: f64, f_start_hz: f64, f_end_hz: f64 },
}

impl Event {
    pub fn time(&self) -> f64 {
        match *self {
            Event::PowerStep { t, .. } => t,
            Event::FreqRamp { t_start, .. } => t_start,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Mode {
    Continuous,
    Sampled { rate_hz: f64 },
}

fn default_step() -> f64 {
    DEFAULT_STEP_S
}

fn default_output_hz() -> f64 {
    DEFAULT_OUTPUT_HZ
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    /// s
    pub duration: f64,
    /// Actual plant.
    pub plant: PlantParams,
    /// Controller design; its `l0_pu` is what the controller believes.
    pub design: TuningSpec,
    pub mode: Mode,
    pub initial_p_star: f64,
    pub events: Vec<Event>,
    /// RK4 step (s).
    #[serde(default = "default_step")]
    pub step: f64,
    #[serde(default = "default_output_hz")]
    pub output_hz: f64,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return bad(format!("duration must be positive, got {}", self.duration));
        }
        if !(self.step > 0.0 && self.step <= self.duration) {
            return bad(format!("step {} is out of range", self.step));
        }
        if !(self.output_hz > 0.0 && self.output_hz.is_finite()) {
            return bad("output rate must be positive".into());
        }
        if let Mode::Sampled { rate_hz } = self.mode {
            if !(rate_hz > 0.0 && rate_hz.is_finite()) {
                return bad("sampling rate must be positive".into());
            }
        }
        self.plant.validate()?;
        self.design.validate()?;
        let mut last = 0.0;
        for ev in &self.events {
            let t = ev.time();
            if !(0.0..=self.duration).contains(&t) || t < last {
                return bad(format!("event at {t} s is out of order or outside [0, duration]"));
            }
            if let Event::FreqRamp { t_start, t_end, f_start_hz, f_end_hz } = *ev {
                if !(t_end >= t_start && t_end <= self.duration) {
                    return bad("frequency ramp must end within the run".into());
                }
                if !(f_start_hz > 0.0 && f_end_hz > 0.0) {
                    return bad("ramp frequencies must be positive".into());
                }
            }
            last = t;
        }
        Ok(())
    }

    /// Grid frequency (rad/s) at time `t`.
    pub fn omega_g(&self, t: f64) -> f64 {
        let mut f_hz = self.plant.omega_base / std::f64::consts::TAU;
        for ev in &self.events {
            if let Event::FreqRamp { t_start, t_end, f_start_hz, f_end_hz } = *ev {
                if t >= t_end {
                    f_hz = f_end_hz;
                } else if t >= t_start {
                    let s = (t - t_start) / (t_end - t_start);
                    f_hz = f_start_hz + s * (f_end_hz - f_start_hz);
                }
            }
        }
        std::f64::consts::TAU * f_hz
    }

    /// Controller's view of the plant.
    pub fn model(&self) -> PlantParams {
        self.plant.with_inductance(self.design.l0_pu)
    }

    pub fn power_steps(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.events.iter().filter_map(|e| match *e {
            Event::PowerStep { t, p_star } => Some((t, p_star)),
            _ => None,
        })
    }

    pub fn freq_ramp(&self) -> Option<Event> {
        self.events.iter().copied().find(|e| matches!(e, Event::FreqRamp { .. }))
    }
}

/// The four reference scenarios: power steps at `L` = 0.5, 1.0 and 0.1 pu
/// and a 50 to 45 Hz grid frequency ramp.
pub fn standard_scenarios() -> Vec<Scenario> {
    let design = TuningSpec::reference();
    let steps = vec![
        Event::PowerStep { t: 0.1, p_star: 0.5 },
        Event::PowerStep { t: 0.3, p_star: 1.0 },
        Event::PowerStep { t: 0.5, p_star: 0.0 },
    ];
    let step = |name: &str, l: f64| Scenario {
        name: name.into(),
        duration: 0.7,
        plant: PlantParams::rated(l),
        design,
        mode: Mode::Continuous,
        initial_p_star: 0.0,
        events: steps.clone(),
        step: DEFAULT_STEP_S,
        output_hz: DEFAULT_OUTPUT_HZ,
    };
    vec![
        step("step_L050", 0.5),
        step("step_L100", 1.0),
        step("step_L010", 0.1),
        Scenario {
            name: "framp_L050".into(),
            duration: 1.5,
            plant: PlantParams::rated(0.5),
            design,
            mode: Mode::Continuous,
            initial_p_star: 0.5,
            events: vec![Event::FreqRamp {
                t_start: 0.2,
                t_end: 1.2,
                f_start_hz: 50.0,
                f_end_hz: 45.0,
            }],
            step: DEFAULT_STEP_S,
            output_hz: DEFAULT_OUTPUT_HZ,
        },
    ]
}

pub fn standard_scenario(name: &str) -> Option<Scenario> {
    standard_scenarios().into_iter().find(|s| s.name == name)
}

/// Same scenario with the controller sampled at the platform rate.
pub fn sampled(mut sc: Scenario) -> Scenario {
    sc.mode = Mode::Sampled { rate_hz: SAMPLING_HZ };
    sc
}

struct Run<'a> {
    sc: &'a Scenario,
    gains: ControllerGains,
    model: PlantParams,
    sp: Setpoints,
    /// `[i_s_d, i_s_q, theta_g]`
    plant_x: [f64; 3],
    cs: ControllerState,
}

fn diverged(t: f64) -> Error {
    Error::NonFiniteState { t }
}

fn bounded(x: &[f64]) -> bool {
    x.iter().all(|v| v.is_finite() && v.abs() < DIVERGENCE_BOUND)
}

impl<'a> Run<'a> {
    fn new(sc: &'a Scenario) -> Result<Self> {
        sc.validate()?;
        let (gains, _) = full_design(&sc.design)?;
        let model = sc.model();
        let sp = setpoints_for_power(&sc.design, sc.initial_p_star)?;
        let eq = find_equilibrium(&gains, &sp, &model, &sc.plant, sc.omega_g(0.0))?;
        // controller frame at angle zero, grid behind by delta
        Ok(Self {
            sc,
            gains,
            model,
            sp,
            plant_x: [eq.x[0], eq.x[1], -eq.delta()],
            cs: ControllerState {
                psi_hat: eq.psi_hat(),
                gamma: eq.gamma(),
                theta_c: 0.0,
            },
        })
    }

    fn i_s(&self) -> Vec2 {
        Vec2::new(self.plant_x[0], self.plant_x[1])
    }

    fn apply_power_step(&mut self, p_star: f64) -> Result<()> {
        let new = setpoints_for_power(&self.sc.design, p_star)?;
        let i_dq = to_controller_frame(self.i_s(), self.cs.theta_c);
        self.cs = retarget(&self.cs, i_dq, &self.gains, &self.model, &self.sp, &new);
        self.sp = new;
        Ok(())
    }

    fn sample(&self, t: f64, out: &ControllerOutputs, u_c: Vec2) -> Sample {
        let theta_c = self.cs.theta_c;
        let omega_g = self.sc.omega_g(t);
        let u_g = GridState {
            theta_g: self.plant_x[2],
            omega_g,
        }
        .voltage(&self.sc.plant);
        let i_s = self.i_s();
        let i = to_controller_frame(i_s, theta_c);
        Sample {
            t,
            p: u_g.dot(i_s),
            v: u_c.norm(),
            v_hat: out.v_hat,
            omega_c: out.omega_c,
            omega_g,
            delta: wrap_angle(theta_c - self.plant_x[2]),
            i_d: i.d,
            i_q: i.q,
            u_c_d: u_c.d,
            u_c_q: u_c.q,
            psi_hat_d: self.cs.psi_hat.d,
            psi_hat_q: self.cs.psi_hat.q,
            e_d: out.e.d,
            e_q: out.e.q,
        }
    }

    fn plant_field(&self, t: f64, x: &[f64; 3], u_c_s: Vec2) -> [f64; 3] {
        let u_g = rot(x[2]) * Vec2::new(self.sc.plant.u_g, 0.0);
        let di = (u_c_s - u_g) * (1.0 / self.sc.plant.l_sec());
        [di.d, di.q, self.sc.omega_g(t)]
    }

    fn continuous_field(&self, t: f64, x: &[f64; 8]) -> [f64; 8] {
        let cs = ControllerState {
            psi_hat: Vec2::new(x[3], x[4]),
            gamma: Vec2::new(x[5], x[6]),
            theta_c: x[7],
        };
        let i_dq = to_controller_frame(Vec2::new(x[0], x[1]), cs.theta_c);
        let out = evaluate(&cs, i_dq, &self.gains, &self.model, &self.sp);
        let u_c_s = from_controller_frame(out.u_c, cs.theta_c);
        let dp = self.plant_field(t, &[x[0], x[1], x[2]], u_c_s);
        let psi = -cs.psi_hat.perp() * out.omega_c + out.u_c + self.gains.k_o_mat * out.e;
        [dp[0], dp[1], dp[2], psi.d, psi.q, out.e.d, out.e.q, out.omega_c]
    }
}

/// Power steps and their integer step indices.
fn step_schedule(sc: &Scenario, dt: f64) -> Vec<(usize, f64)> {
    sc.power_steps()
        .map(|(t, p)| ((t / dt).round() as usize, p))
        .collect()
}

/// Integrates the scenario and returns the decimated output.
pub fn simulate(sc: &Scenario) -> Result<TimeSeries> {
    let mut run = Run::new(sc)?;
    match sc.mode {
        Mode::Continuous => simulate_continuous(&mut run),
        Mode::Sampled { rate_hz } => simulate_sampled(&mut run, rate_hz),
    }
}

fn simulate_continuous(run: &mut Run<'_>) -> Result<TimeSeries> {
    let sc = run.sc;
    let h = sc.step;
    let n = (sc.duration / h).round() as usize;
    let stride = ((1.0 / sc.output_hz) / h).round().max(1.0) as usize;
    let steps = step_schedule(sc, h);
    let mut next_event = 0;
    let mut ts = TimeSeries::with_capacity(n / stride + 1);

    let mut x = [
        run.plant_x[0],
        run.plant_x[1],
        run.plant_x[2],
        run.cs.psi_hat.d,
        run.cs.psi_hat.q,
        run.cs.gamma.d,
        run.cs.gamma.q,
        run.cs.theta_c,
    ];
    for k in 0..=n {
        let t = k as f64 * h;
        let mut changed = false;
        while next_event < steps.len() && steps[next_event].0 <= k {
            run.plant_x = [x[0], x[1], x[2]];
            run.cs = ControllerState {
                psi_hat: Vec2::new(x[3], x[4]),
                gamma: Vec2::new(x[5], x[6]),
                theta_c: x[7],
            };
            run.apply_power_step(steps[next_event].1)?;
            next_event += 1;
            changed = true;
        }
        if changed {
            x[5] = run.cs.gamma.d;
            x[6] = run.cs.gamma.q;
        }
        if k % stride == 0 {
            run.plant_x = [x[0], x[1], x[2]];
            run.cs = ControllerState {
                psi_hat: Vec2::new(x[3], x[4]),
                gamma: Vec2::new(x[5], x[6]),
                theta_c: x[7],
            };
            let i_dq = to_controller_frame(run.i_s(), run.cs.theta_c);
            let out = evaluate(&run.cs, i_dq, &run.gains, &run.model, &run.sp);
            ts.push(run.sample(t, &out, out.u_c));
        }
        if k == n {
            break;
        }
        let r = &*run;
        x = rk4_step(|t, x| r.continuous_field(t, x), &x, t, h).map_err(|_| diverged(t))?;
        if !bounded(&x[..7]) {
            return Err(diverged(t + h));
        }
    }
    Ok(ts)
}

fn simulate_sampled(run: &mut Run<'_>, rate_hz: f64) -> Result<TimeSeries> {
    let sc = run.sc;
    let ts_ctrl = 1.0 / rate_hz;
    // whole number of plant steps per control period, no longer than `step`
    let sub = (ts_ctrl / sc.step).ceil().max(1.0) as usize;
    let h = ts_ctrl / sub as f64;
    let n = (sc.duration / h).round() as usize;
    let stride = ((1.0 / sc.output_hz) / h).round().max(1.0) as usize;
    let steps = step_schedule(sc, ts_ctrl);
    let mut next_event = 0;
    let mut ts = TimeSeries::with_capacity(n / stride + 1);

    let mut held = Vec2::ZERO;
    let mut held_out = None;
    for k in 0..=n {
        let t = k as f64 * h;
        if k % sub == 0 {
            let j = k / sub;
            while next_event < steps.len() && steps[next_event].0 <= j {
                run.apply_power_step(steps[next_event].1)?;
                next_event += 1;
            }
            let (next, u_c_s, out) =
                controller_step(&run.cs, run.i_s(), ts_ctrl, &run.gains, &run.model, &run.sp)
                    .map_err(|_| diverged(t))?;
            run.cs = next;
            held = u_c_s;
            held_out = Some(out);
        }
        let out = held_out.expect("controller runs at k = 0");
        if k % stride == 0 {
            ts.push(run.sample(t, &out, out.u_c));
        }
        if k == n {
            break;
        }
        let r = &*run;
        run.plant_x = rk4_step(|t, x| r.plant_field(t, x, held), &run.plant_x, t, h).map_err(|_| diverged(t))?;
        if !bounded(&run.plant_x[..2]) || !run.cs.is_finite() {
            return Err(diverged(t + h));
        }
    }
    Ok(ts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::eig_small;
    use crate::smallsignal::closed_loop_matrix;

    fn short(name: &str, duration: f64) -> Scenario {
        let mut sc = standard_scenario(name).unwrap();
        sc.duration = duration;
        sc.events.retain(|e| e.time() <= duration);
        sc
    }

    #[test]
    fn standard_set_is_complete() {
        let names: Vec<_> = standard_scenarios().into_iter().map(|s| s.name).collect();
        assert_eq!(names, ["step_L050", "step_L100", "step_L010", "framp_L050"]);
        for sc in standard_scenarios() {
            sc.validate().unwrap();
        }
        let s = standard_scenario("step_L050").unwrap();
        assert_eq!(s.power_steps().collect::<Vec<_>>(), [(0.1, 0.5), (0.3, 1.0), (0.5, 0.0)]);
        assert_eq!(s.duration, 0.7);
    }

    #[test]
    fn null_scenario_holds_equilibrium() {
        let mut sc = short("step_L050", 0.05);
        sc.events.clear();
        let ts = simulate(&sc).unwrap();
        assert_eq!(ts.len(), 1251);
        assert!(ts.is_finite());
        for k in 0..ts.len() {
            assert!(ts.e_d[k].hypot(ts.e_q[k]) < 1e-9);
            assert!(ts.p[k].abs() < 1e-9);
        }
    }

    #[test]
    fn ramp_profile() {
        let sc = standard_scenario("framp_L050").unwrap();
        let w = |t| sc.omega_g(t) / std::f64::consts::TAU;
        assert!((w(0.0) - 50.0).abs() < 1e-12);
        assert!((w(0.7) - 47.5).abs() < 1e-12);
        assert!((w(1.4) - 45.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_unordered_events() {
        let mut sc = short("step_L050", 0.7);
        sc.events.swap(0, 1);
        assert!(sc.validate().is_err());
        let mut sc = short("step_L050", 0.7);
        sc.events.push(Event::PowerStep { t: 0.9, p_star: 0.1 });
        assert!(sc.validate().is_err());
    }

    #[test]
    fn infeasible_step_is_reported() {
        let mut sc = short("step_L050", 0.2);
        sc.events = vec![Event::PowerStep { t: 0.05, p_star: 3.0 }];
        assert!(matches!(simulate(&sc).unwrap_err(), Error::InfeasibleSetpoint { .. }));
    }

    #[test]
    fn unstable_design_diverges_with_time() {
        let mut sc = short("step_L050", 0.5);
        sc.design.sigma_v = [crate::numerics::Complex64::new(0.3 * sc.design.omega0, 0.0); 2];
        sc.events.clear();
        sc.initial_p_star = 0.5;
        match simulate(&sc) {
            Err(Error::NonFiniteState { t }) => assert!(t > 0.0 && t <= 0.5),
            Err(Error::NoEquilibrium { .. }) => {}
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn halving_the_step_changes_little() {
        let mut sc = short("step_L050", 0.2);
        sc.events = vec![Event::PowerStep { t: 0.02, p_star: 0.5 }];
        let a = simulate(&sc).unwrap();
        sc.step /= 2.0;
        let b = simulate(&sc).unwrap();
        assert_eq!(a.len(), b.len());
        for (ca, cb) in a.channels().iter().zip(b.channels()).skip(1) {
            assert!(rms_diff(ca, cb) < 1e-6, "{}", rms_diff(ca, cb));
        }
    }

    #[test]
    fn flux_identity_along_closed_loop() {
        // plant flux in the controller frame obeys d psi/dt = -omega_c J psi + u_c
        let mut sc = short("step_L050", 0.06);
        sc.events = vec![Event::PowerStep { t: 0.01, p_star: 0.5 }];
        let ts = simulate(&sc).unwrap();
        let l = sc.plant.l_sec();
        let w = sc.plant.omega_base;
        let flux = |k: usize| {
            let u_g = rot(-ts.delta[k]) * Vec2::new(1.0, 0.0);
            Vec2::new(ts.i_d[k], ts.i_q[k]) * l + crate::plant::grid_flux(u_g, w)
        };
        let dt = ts.t[1] - ts.t[0];
        for k in [300, 600, 1200] {
            let fd = (flux(k + 1) - flux(k - 1)) * (0.5 / dt);
            let model = -flux(k).perp() * ts.omega_c[k] + Vec2::new(ts.u_c_d[k], ts.u_c_q[k]);
            assert!((fd - model).norm() < 1e-3 * model.norm(), "{fd:?} {model:?}");
        }
    }

    #[test]
    fn small_step_matches_linear_model() {
        let mut sc = short("step_L050", 0.06);
        sc.initial_p_star = 0.5;
        sc.events = vec![Event::PowerStep { t: 0.01, p_star: 0.51 }];
        let ts = simulate(&sc).unwrap();

        let (gains, _) = full_design(&sc.design).unwrap();
        let model = sc.model();
        let sp0 = setpoints_for_power(&sc.design, 0.5).unwrap();
        let sp1 = setpoints_for_power(&sc.design, 0.51).unwrap();
        let w0 = sc.plant.omega_base;
        let eq0 = find_equilibrium(&gains, &sp0, &model, &sc.plant, w0).unwrap();
        let m1 = closed_loop_matrix(&gains, &sp1, &model, &sc.plant, w0).unwrap();
        let cs = retarget(
            &ControllerState {
                psi_hat: eq0.psi_hat(),
                gamma: eq0.gamma(),
                theta_c: 0.0,
            },
            eq0.i(),
            &gains,
            &model,
            &sp0,
            &sp1,
        );
        let mut x0 = eq0.x;
        x0[5] = cs.gamma.d;
        x0[6] = cs.gamma.q;
        let mut dx: [f64; 7] = std::array::from_fn(|j| x0[j] - m1.equilibrium.x[j]);
        let eq1 = m1.equilibrium;
        let dp = |dx: &[f64; 7]| {
            let u_g = eq1.u_g;
            u_g.dot(Vec2::new(dx[0], dx[1])) + eq1.i().dot(-u_g.perp()) * dx[2]
        };
        assert!(eig_small(&m1.a).unwrap().spectral_abscissa() < 1e-6);

        let win = ts.window(0.01, 0.06);
        let h = ts.t[1] - ts.t[0];
        let sub = 8;
        let mut lin = Vec::with_capacity(win.len());
        let mut nl = Vec::with_capacity(win.len());
        for k in win {
            lin.push(eq1.p + dp(&dx));
            nl.push(ts.p[k]);
            for _ in 0..sub {
                dx = rk4_step(
                    |_, x: &[f64; 7]| {
                        let v = m1.a.mul_vec(x);
                        std::array::from_fn(|j| v[j])
                    },
                    &dx,
                    0.0,
                    h / sub as f64,
                )
                .unwrap();
            }
        }
        let resp: Vec<f64> = nl.iter().map(|p| p - eq1.p).collect();
        let err = rms_diff(&lin, &nl);
        let scale = rms_diff(&resp, &vec![0.0; resp.len()]);
        assert!(err < 0.05 * scale, "err {err} scale {scale}");
    }
}
