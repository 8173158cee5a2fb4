//! JSON configuration. Every field has a default taken from the rated
//! laboratory platform, so `{}` is a valid configuration.

use anyhow::{bail, Context, Result};
use fluxgfm::numerics::Complex64;
use fluxgfm::plant::{
    BASE_FREQUENCY_HZ, FILTER_L_PU, RATED_CURRENT_A, RATED_LINE_VOLTAGE_V, RATED_POWER_VA, SAMPLING_HZ,
};
use fluxgfm::scenarios::FloatFormat;
use fluxgfm::{PlantParams, TuningSpec};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub design: DesignConfig,
    pub plant: PlantConfig,
    pub sweep: SweepConfig,
    /// Scenario run by `simulate` when none is given on the command line.
    pub scenario: String,
    pub float_format: FloatFormat,
}

/// Controller design. Poles and bandwidths are in units of the nominal
/// angular frequency; poles are `[re, im]` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignConfig {
    pub sigma_o: [[f64; 2]; 2],
    pub sigma_v: [[f64; 2]; 2],
    pub zeta: f64,
    pub omega_s: f64,
    pub l0_pu: f64,
    pub p_star: f64,
    pub v_star: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantConfig {
    /// Total inductance, filter plus grid (pu).
    pub l_pu: f64,
    /// Grid voltage amplitude (pu).
    pub u_g: f64,
    pub rated_power_va: f64,
    pub rated_line_voltage_v: f64,
    pub rated_current_a: f64,
    pub base_frequency_hz: f64,
    /// Converter-side filter inductance (pu); lower bound for `l_pu`.
    pub filter_l_pu: f64,
    pub sampling_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub l_min: f64,
    pub l_max: f64,
    pub n_points: usize,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            design: DesignConfig::default(),
            plant: PlantConfig::default(),
            sweep: SweepConfig::default(),
            scenario: "step_L050".into(),
            float_format: FloatFormat::Decimal,
        }
    }
}

impl Default for DesignConfig {
    fn default() -> Self {
        Self {
            sigma_o: [[-2.5, 0.0], [-2.5, 0.0]],
            sigma_v: [[-1.0, 0.0], [-1.0, 0.0]],
            zeta: 0.9,
            omega_s: 1.5,
            l0_pu: 0.5,
            p_star: 1.0,
            v_star: 1.0,
        }
    }
}

impl Default for PlantConfig {
    fn default() -> Self {
        Self {
            l_pu: 0.5,
            u_g: 1.0,
            rated_power_va: RATED_POWER_VA,
            rated_line_voltage_v: RATED_LINE_VOLTAGE_V,
            rated_current_a: RATED_CURRENT_A,
            base_frequency_hz: BASE_FREQUENCY_HZ,
            filter_l_pu: FILTER_L_PU,
            sampling_hz: SAMPLING_HZ,
        }
    }
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            l_min: 0.1,
            l_max: 1.0,
            n_points: 19,
        }
    }
}

impl Config {
    pub fn load(path: Option<&std::path::Path>) -> Result<Self> {
        let cfg = match path {
            None => Self::default(),
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.plant;
        for (name, v) in [
            ("plant.u_g", p.u_g),
            ("plant.rated_power_va", p.rated_power_va),
            ("plant.rated_line_voltage_v", p.rated_line_voltage_v),
            ("plant.rated_current_a", p.rated_current_a),
            ("plant.base_frequency_hz", p.base_frequency_hz),
            ("plant.sampling_hz", p.sampling_hz),
            ("design.l0_pu", self.design.l0_pu),
            ("design.zeta", self.design.zeta),
            ("design.omega_s", self.design.omega_s),
            ("design.v_star", self.design.v_star),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                bail!("{name} must be positive, got {v}");
            }
        }
        if p.filter_l_pu.is_nan() || p.filter_l_pu < 0.0 {
            bail!("plant.filter_l_pu must be non-negative");
        }
        if !(p.l_pu >= p.filter_l_pu && p.l_pu > 0.0) {
            bail!("plant.l_pu ({}) must be positive and at least the filter inductance ({})", p.l_pu, p.filter_l_pu);
        }
        let s = &self.sweep;
        if !(s.l_min > 0.0 && s.l_max > s.l_min) {
            bail!("sweep needs 0 < l_min < l_max, got {} and {}", s.l_min, s.l_max);
        }
        if s.n_points == 0 {
            bail!("sweep.n_points must be at least 1");
        }
        Ok(())
    }

    pub fn omega0(&self) -> f64 {
        std::f64::consts::TAU * self.plant.base_frequency_hz
    }

    pub fn tuning_spec(&self) -> TuningSpec {
        let w0 = self.omega0();
        let d = &self.design;
        let poles = |p: [[f64; 2]; 2]| p.map(|[re, im]| Complex64::new(re * w0, im * w0));
        TuningSpec {
            sigma_o: poles(d.sigma_o),
            sigma_v: poles(d.sigma_v),
            zeta: d.zeta,
            omega_s: d.omega_s * w0,
            l0_pu: d.l0_pu,
            p_star: d.p_star,
            v_star: d.v_star,
            u_g: self.plant.u_g,
            omega0: w0,
        }
    }

    /// Actual plant with inductance `plant.l_pu`.
    pub fn plant_params(&self) -> PlantParams {
        let p = &self.plant;
        PlantParams {
            l_pu: p.l_pu,
            omega_base: self.omega0(),
            u_g: p.u_g,
            s_base: p.rated_power_va,
            u_base: (2.0f64 / 3.0).sqrt() * p.rated_line_voltage_v,
            i_base: 2.0f64.sqrt() * p.rated_current_a,
            kappa: 1.5,
        }
    }

    /// Plant as the controller models it (inductance `design.l0_pu`).
    pub fn model_params(&self) -> PlantParams {
        self.plant_params().with_inductance(self.design.l0_pu)
    }
}
