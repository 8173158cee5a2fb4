use serde::{Deserialize, Serialize};

use super::series::{mean, TimeSeries};
use super::{Event, Scenario};
use crate::error::{Error, Result};

/// Averaging window for steady-state values (one 50 Hz period).
pub const STEADY_WINDOW_S: f64 = 0.02;
/// Maximum spread of `p` in a steady window (pu of rated).
const STEADY_SPREAD: f64 = 0.01;

/// Response to one power step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    /// Event time (s).
    pub t: f64,
    pub p_star_from: f64,
    pub p_star_to: f64,
    /// Steady power before the step (pu).
    pub p_start: f64,
    /// Steady power at the end of the step window (pu).
    pub p_final: f64,
    /// Last time after the step that `p` is more than 2% of
    /// `|p_final - p_start|` away from `p_final` (s).
    pub settling_time_2pct: f64,
    /// Largest excursion beyond `p_final` in the step direction (pu).
    pub overshoot: f64,
    /// `overshoot / |p_final - p_start|`.
    pub overshoot_rel: f64,
    /// `max |V - V*|` within the step window (pu).
    pub v_excursion: f64,
    /// `p_final - p_star_to` (pu).
    pub steady_offset: f64,
}

impl StepMetrics {
    pub fn is_step_up(&self) -> bool {
        self.p_star_to > self.p_star_from
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioMetrics {
    pub steps: Vec<StepMetrics>,
    /// Longest settling time over all power steps (s).
    pub settling_time_2pct: Option<f64>,
    /// Largest overshoot over all power steps (pu).
    pub overshoot: f64,
    /// Largest overshoot relative to its step.
    pub overshoot_rel: f64,
    /// `max |V - V*|` over the whole run (pu).
    pub v_excursion_max: f64,
    /// Offset `p - p*` of largest magnitude over all plateaus at nominal
    /// grid frequency (pu).
    pub steady_p_offset: f64,
    /// Droop coefficient `|dp| / |d omega_g|`, both in pu.
    pub d_p: Option<f64>,
    /// Steady power before and after a frequency ramp (pu).
    pub p_before_ramp: Option<f64>,
    pub p_after_ramp: Option<f64>,
    /// `max |omega_c - omega_g|` during a ramp (Hz).
    pub freq_tracking_max_hz: Option<f64>,
}

/// Mean of `p` over `[to - STEADY_WINDOW_S, to)`.
fn steady(ts: &TimeSeries, to: f64) -> Result<f64> {
    let r = ts.window(to - STEADY_WINDOW_S - 1e-12, to - 1e-12);
    let r = if r.is_empty() { ts.window(0.0, to) } else { r };
    if r.is_empty() {
        return Ok(ts.p.first().copied().unwrap_or(f64::NAN));
    }
    let w = &ts.p[r];
    let (lo, hi) = w.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if hi - lo > STEADY_SPREAD {
        return Err(Error::NoSteadyState { spread: hi - lo });
    }
    Ok(mean(w))
}

pub fn extract_metrics(ts: &TimeSeries, sc: &Scenario) -> Result<ScenarioMetrics> {
    if ts.is_empty() {
        return Err(Error::InvalidParameter("empty time series".into()));
    }
    let end = ts.t[ts.len() - 1] + 1e-9;
    let v_star = sc.design.v_star;
    let boundaries: Vec<f64> = sc.events.iter().map(Event::time).chain([end]).collect();
    let next_boundary = |t: f64| boundaries.iter().copied().find(|&b| b > t + 1e-12).unwrap_or(end);

    let mut steps = Vec::new();
    let mut p_star = sc.initial_p_star;
    for (t, to) in sc.power_steps() {
        let stop = next_boundary(t);
        let p_start = steady(ts, t)?;
        let p_final = steady(ts, stop)?;
        let r = ts.window(t, stop);
        let mag = (p_final - p_start).abs();
        let dir = (p_final - p_start).signum();
        let mut settling = 0.0;
        let mut overshoot = 0.0f64;
        let mut v_exc = 0.0f64;
        for k in r {
            if (ts.p[k] - p_final).abs() > 0.02 * mag {
                settling = ts.t[k] - t;
            }
            overshoot = overshoot.max((ts.p[k] - p_final) * dir);
            v_exc = v_exc.max((ts.v[k] - v_star).abs());
        }
        steps.push(StepMetrics {
            t,
            p_star_from: p_star,
            p_star_to: to,
            p_start,
            p_final,
            settling_time_2pct: settling,
            overshoot,
            overshoot_rel: if mag > 0.0 { overshoot / mag } else { 0.0 },
            v_excursion: v_exc,
            steady_offset: p_final - to,
        });
        p_star = to;
    }

    // plateau offsets at nominal frequency
    let nominal = sc.plant.omega_base;
    let mut steady_p_offset = 0.0f64;
    let mut p_star = sc.initial_p_star;
    let mut starts = vec![(0.0, sc.initial_p_star)];
    for (t, to) in sc.power_steps() {
        starts.push((t, to));
    }
    for &(t, to) in &starts {
        let stop = next_boundary(t);
        if t > 0.0 {
            p_star = to;
        }
        if (sc.omega_g(stop - 1e-9) - nominal).abs() > 1e-9 * nominal {
            continue;
        }
        let off = steady(ts, stop)? - p_star;
        if off.abs() > steady_p_offset.abs() {
            steady_p_offset = off;
        }
    }

    let mut d_p = None;
    let mut p_before_ramp = None;
    let mut p_after_ramp = None;
    let mut freq_tracking_max_hz = None;
    if let Some(Event::FreqRamp { t_start, t_end, f_start_hz, f_end_hz }) = sc.freq_ramp() {
        let before = steady(ts, t_start)?;
        let after = steady(ts, end)?;
        let f_base = nominal / std::f64::consts::TAU;
        let dw = (f_end_hz - f_start_hz) / f_base;
        if dw != 0.0 {
            d_p = Some(((after - before) / dw).abs());
        }
        p_before_ramp = Some(before);
        p_after_ramp = Some(after);
        let worst = ts.window(t_start, t_end).fold(0.0f64, |m, k| m.max((ts.omega_c[k] - ts.omega_g[k]).abs()));
        freq_tracking_max_hz = Some(worst / std::f64::consts::TAU);
    }

    Ok(ScenarioMetrics {
        settling_time_2pct: steps.iter().map(|s| s.settling_time_2pct).reduce(f64::max),
        overshoot: steps.iter().map(|s| s.overshoot).fold(0.0, f64::max),
        overshoot_rel: steps.iter().map(|s| s.overshoot_rel).fold(0.0, f64::max),
        v_excursion_max: ts.v.iter().fold(0.0, |m, v| m.max((v - v_star).abs())),
        steady_p_offset,
        d_p,
        p_before_ramp,
        p_after_ramp,
        freq_tracking_max_hz,
        steps,
    })
}
