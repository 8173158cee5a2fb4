//! Grid-forming control of a grid-connected converter through a virtual flux
//! observer.
//!
//! The crate is organised bottom-up:
//!
//! - [`numerics`]: 2-D frame algebra, rank-one pole placement, a small dense
//!   eigenvalue solver and a fixed-step RK4 integrator.
//! - [`plant`]: inductive converter/grid model in the stationary frame and the
//!   virtual-flux map.
//! - [`controller`]: flux observer, PI frequency estimator and voltage law.
//! - [`tuning`]: operating point and gain design by decoupling and pole
//!   placement.
//! - [`smallsignal`]: closed-loop equilibrium, analytic Jacobian and pole
//!   sweeps over grid strength.
//! - [`scenarios`]: nonlinear time-domain runs and step/droop metrics.
//!
//! Units: voltages, currents and fluxes are per-unit amplitudes, time is in
//! seconds and every frequency or pole is in rad/s.

pub mod controller;
pub mod error;
pub mod numerics;
pub mod plant;
pub mod scenarios;
pub mod smallsignal;
pub mod tuning;

pub use controller::{ControllerGains, ControllerState, Setpoints};
pub use error::{Error, Result};
pub use numerics::{Mat2, SmallMatrix, Spectrum, Vec2};
pub use plant::{GridState, PlantParams, PlantState};
pub use scenarios::{Scenario, ScenarioMetrics, TimeSeries};
pub use smallsignal::{ClosedLoopModel, Equilibrium, PoleSweepResult};
pub use tuning::TuningSpec;
