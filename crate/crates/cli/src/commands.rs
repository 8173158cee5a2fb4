use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use fluxgfm::numerics::{eig_small, rank_one_closed_loop, Complex64, Mat2};
use fluxgfm::scenarios::{
    extract_metrics, simulate as run_scenario, standard_scenario, FloatFormat, Mode, Scenario, ScenarioMetrics,
};
use fluxgfm::smallsignal::{
    closed_loop_matrix, linspace, numeric_jacobian, pole_sweep, sync_tf_coeffs, LoopSystem, ModalSummary,
};
use fluxgfm::tuning::{design_residuals, full_design, voltage_direction};
use fluxgfm::{Error, SmallMatrix, Vec2};
use serde::Serialize;

use crate::config::Config;
use crate::plots;

/// Residual bound for a successful `gains` report.
const RESIDUAL_TOL: f64 = 1e-9;

pub const EXIT_INFEASIBLE: u8 = 2;
pub const EXIT_PLACEMENT: u8 = 3;
pub const EXIT_UNSTABLE: u8 = 4;
pub const EXIT_DIVERGED: u8 = 5;
pub const EXIT_NO_EQUILIBRIUM: u8 = 6;

pub fn exit_code_for(err: &anyhow::Error) -> ExitCode {
    let code = err
        .chain()
        .find_map(|e| e.downcast_ref::<Error>())
        .map_or(1, |e| match e {
            Error::InfeasibleSetpoint { .. } => EXIT_INFEASIBLE,
            Error::ZeroDirection | Error::NonConjugatePair | Error::SingularFlux => EXIT_PLACEMENT,
            Error::NonFiniteState { .. } => EXIT_DIVERGED,
            Error::NoEquilibrium { .. } => EXIT_NO_EQUILIBRIUM,
            _ => 1,
        });
    ExitCode::from(code)
}

fn out_dir(out: Option<&Path>) -> Result<PathBuf> {
    let dir = out.map_or_else(|| PathBuf::from("."), Path::to_path_buf);
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn write(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn vec2(v: Vec2) -> String {
    format!("[{:.6}, {:.6}]", v.d, v.q)
}

fn vec2_e(v: Vec2) -> String {
    format!("[{:.6e}, {:.6e}]", v.d, v.q)
}

fn complex(z: Complex64, scale: f64) -> String {
    let z = z / scale;
    if z.im.abs() < 1e-12 {
        format!("{:.6}", z.re)
    } else {
        format!("{:.6} {} {:.6}j", z.re, if z.im < 0.0 { '-' } else { '+' }, z.im.abs())
    }
}

#[derive(Serialize)]
struct GainsReport {
    omega0: f64,
    delta_star: f64,
    setpoints: fluxgfm::Setpoints,
    gains: fluxgfm::ControllerGains,
    residuals: fluxgfm::tuning::DesignResiduals,
}

pub fn gains(cfg: &Config, p_star: Option<f64>, out: Option<&Path>) -> Result<ExitCode> {
    let mut spec = cfg.tuning_spec();
    if let Some(p) = p_star {
        spec.p_star = p;
    }
    let (g, sp) = full_design(&spec)?;
    let res = design_residuals(&spec, &g, &sp);
    let w0 = spec.omega0;

    let obs = eig_small(&SmallMatrix::from_mat2(Mat2::J.scale(-w0) - g.k_o_mat))?;
    let volt = eig_small(&SmallMatrix::from_mat2(rank_one_closed_loop(voltage_direction(w0), w0, g.k_v)))?;
    let sync = sync_tf_coeffs(g.k_p, &sp, w0);
    let disc = Complex64::new(sync.a1 * sync.a1 + 4.0 * sync.a2, 0.0).sqrt();
    let d1 = [(sync.a1 + disc) / 2.0, (sync.a1 - disc) / 2.0];
    let list = |zs: &mut dyn Iterator<Item = Complex64>| zs.map(|z| complex(z, w0)).collect::<Vec<_>>().join(", ");

    let mut r = String::new();
    writeln!(r, "nominal frequency      {} Hz ({:.6} rad/s)", w0 / std::f64::consts::TAU, w0)?;
    writeln!(r, "design power p*        {} pu, L0 = {} pu, V* = {} pu", spec.p_star, spec.l0_pu, spec.v_star)?;
    writeln!(r, "load angle delta*      {:.6} rad ({:.4} deg)", sp.delta_star, sp.delta_star.to_degrees())?;
    writeln!(r, "u_c*                   {}", vec2(sp.u_c_star))?;
    writeln!(r, "u_g*                   {}", vec2(sp.u_g_star))?;
    writeln!(r, "psi_g*                 {}", vec2_e(sp.psi_g_star))?;
    writeln!(r, "psi*                   {}", vec2_e(sp.psi_star))?;
    writeln!(r, "k_o                    {}", vec2_e(g.k_o))?;
    let k = g.k_o_mat.m;
    writeln!(r, "K_o                    [[{:.6e}, {:.6e}], [{:.6e}, {:.6e}]]", k[0][0], k[0][1], k[1][0], k[1][1])?;
    writeln!(r, "k_p                    {}", vec2_e(g.k_p))?;
    writeln!(r, "k_i                    {}", vec2_e(g.k_i))?;
    writeln!(r, "k_v                    {}", vec2(g.k_v))?;
    writeln!(r, "observer poles / w0    {}", list(&mut obs.iter().copied()))?;
    writeln!(r, "voltage poles / w0     {}", list(&mut volt.iter().copied()))?;
    writeln!(r, "sync roots / w0        {}", list(&mut d1.into_iter()))?;
    writeln!(r, "residuals")?;
    for (name, v) in [
        ("observer placement", res.observer_placement),
        ("voltage placement", res.voltage_placement),
        ("sync polynomial", res.sync_polynomial),
        ("PI cancellation", res.pi_cancellation),
        ("angle coupling", res.angle_coupling),
    ] {
        writeln!(r, "  {name:<20} {v:.3e}")?;
    }
    print!("{r}");

    if out.is_some() {
        let dir = out_dir(out)?;
        let report = GainsReport {
            omega0: w0,
            delta_star: sp.delta_star,
            setpoints: sp,
            gains: g,
            residuals: res,
        };
        write(&dir.join("gains.json"), &serde_json::to_string_pretty(&report)?)?;
    }

    if res.max() < RESIDUAL_TOL {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("design identities violated: max residual {:.3e}", res.max());
        Ok(ExitCode::from(EXIT_PLACEMENT))
    }
}

fn default_threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

pub fn eig_sweep(
    cfg: &Config,
    l_min: Option<f64>,
    l_max: Option<f64>,
    n_points: Option<usize>,
    threads: Option<usize>,
    out: Option<&Path>,
) -> Result<ExitCode> {
    let lo = l_min.unwrap_or(cfg.sweep.l_min);
    let hi = l_max.unwrap_or(cfg.sweep.l_max);
    let n = n_points.unwrap_or(cfg.sweep.n_points);
    if !(lo > 0.0 && (hi > lo || (n == 1 && hi >= lo))) || n == 0 {
        bail!("need 0 < l_min < l_max and at least one point, got {lo}..{hi} with {n}");
    }
    let spec = cfg.tuning_spec();
    let (g, sp) = full_design(&spec)?;
    let ls = linspace(lo, hi, n);
    let threads = threads.filter(|&t| t > 0).unwrap_or_else(default_threads);
    let sweep = pole_sweep(&g, &sp, &cfg.model_params(), &cfg.plant_params(), &ls, threads)?;

    let dir = out_dir(out)?;
    write(&dir.join("poles.csv"), &sweep.to_csv())?;
    write(&dir.join("poles.gp"), &plots::sweep_script("poles.csv", spec.omega0))?;

    let w0 = spec.omega0;
    println!("{:>8}  {:>14}  {:>12}  stable", "L (pu)", "dominant / w0", "|structural|");
    for p in &sweep.points {
        match &p.outcome {
            Ok(s) => println!(
                "{:>8.4}  {:>14}  {:>12.3e}  {}",
                p.l_pu,
                complex(s.modes.dominant(), w0),
                s.modes.structural_value().norm(),
                s.modes.is_stable()
            ),
            Err(e) => println!("{:>8.4}  {e}", p.l_pu),
        }
    }
    let unstable = sweep.unstable();
    if unstable.is_empty() {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("unstable or without equilibrium at L = {unstable:?} pu");
        Ok(ExitCode::from(EXIT_UNSTABLE))
    }
}

fn load_scenario(cfg: &Config, name: &str) -> Result<Scenario> {
    if let Some(mut sc) = standard_scenario(name) {
        sc.design = cfg.tuning_spec();
        sc.plant = cfg.plant_params().with_inductance(sc.plant.l_pu);
        return Ok(sc);
    }
    let path = Path::new(name);
    if !path.exists() {
        bail!("no standard scenario or file named {name:?}");
    }
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

#[derive(Serialize)]
struct MetricsDoc<'a> {
    scenario: &'a str,
    mode: Mode,
    plant_l_pu: f64,
    design_l0_pu: f64,
    #[serde(flatten)]
    metrics: &'a ScenarioMetrics,
}

pub fn simulate(
    cfg: &Config,
    scenario: Option<&str>,
    sampled: bool,
    hex: bool,
    out: Option<&Path>,
) -> Result<ExitCode> {
    let name = scenario.unwrap_or(&cfg.scenario);
    let mut sc = load_scenario(cfg, name)?;
    if sampled {
        sc.mode = Mode::Sampled {
            rate_hz: cfg.plant.sampling_hz,
        };
    }
    let ts = run_scenario(&sc).with_context(|| format!("simulating {}", sc.name))?;
    let format = if hex { FloatFormat::Hex } else { cfg.float_format };
    let stem = sc.name.clone();

    let dir = out_dir(out)?;
    let csv = format!("{stem}.csv");
    let file = std::fs::File::create(dir.join(&csv)).with_context(|| format!("creating {csv}"))?;
    ts.write_csv(std::io::BufWriter::new(file), format)?;
    write(&dir.join(format!("{stem}.gp")), &plots::scenario_script(&csv, &stem))?;

    let m = extract_metrics(&ts, &sc)?;
    let doc = MetricsDoc {
        scenario: &stem,
        mode: sc.mode,
        plant_l_pu: sc.plant.l_pu,
        design_l0_pu: sc.design.l0_pu,
        metrics: &m,
    };
    write(&dir.join(format!("{stem}_metrics.json")), &serde_json::to_string_pretty(&doc)?)?;

    println!("scenario {stem}: {} samples", ts.len());
    for s in &m.steps {
        println!(
            "  step at {:.3} s, p* {} -> {}: settling {:.1} ms, overshoot {:.2}%, |V - V*| max {:.4} pu, offset {:+.4} pu",
            s.t,
            s.p_star_from,
            s.p_star_to,
            1e3 * s.settling_time_2pct,
            100.0 * s.overshoot_rel,
            s.v_excursion,
            s.steady_offset
        );
    }
    println!("  max |V - V*|          {:.4} pu", m.v_excursion_max);
    println!("  steady power offset   {:+.4} pu", m.steady_p_offset);
    if let (Some(d_p), Some(a), Some(b), Some(tr)) = (m.d_p, m.p_before_ramp, m.p_after_ramp, m.freq_tracking_max_hz) {
        println!("  power before/after    {a:.4} / {b:.4} pu");
        println!("  droop D_p             {d_p:.4} pu");
        println!("  max |f_c - f_g|       {tr:.4} Hz");
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct LinearizeDoc<'a> {
    l_pu: f64,
    omega_g: f64,
    labels: [&'a str; 7],
    a: Vec<Vec<f64>>,
    eigenvalues: Vec<[f64; 2]>,
    structural_index: usize,
    jacobian_deviation: f64,
    equilibrium: fluxgfm::Equilibrium,
}

pub fn linearize(cfg: &Config, l: Option<f64>, f_hz: Option<f64>, out: Option<&Path>) -> Result<ExitCode> {
    let spec = cfg.tuning_spec();
    let (g, sp) = full_design(&spec)?;
    let plant = cfg.plant_params().with_inductance(l.unwrap_or(cfg.plant.l_pu));
    plant.validate()?;
    let model = cfg.model_params();
    let w0 = spec.omega0;
    let wg = f_hz.map_or(w0, |f| std::f64::consts::TAU * f);
    let m = closed_loop_matrix(&g, &sp, &model, &plant, wg)?;
    let modes = m.modes()?;

    let sys = LoopSystem {
        gains: &g,
        sp: &sp,
        model: &model,
        plant: &plant,
        omega_g: wg,
    };
    let num = numeric_jacobian(
        |v| {
            let mut x = [0.0; 7];
            x.copy_from_slice(v);
            sys.field(&x).to_vec()
        },
        &m.equilibrium.x,
    );
    let dev = m.a.max_abs_diff(&num) / m.a.norm_inf().max(1.0);

    let eq = &m.equilibrium;
    println!(
        "L = {} pu, L0 = {} pu, grid {:.4} Hz ({:.6} rad/s)",
        plant.l_pu,
        model.l_pu,
        wg / std::f64::consts::TAU,
        wg
    );
    println!(
        "equilibrium: p = {:.6} pu, V = {:.6} pu, delta = {:.6} rad, |e| = {:.3e}, residual {:.1e}",
        eq.p,
        eq.v,
        eq.delta(),
        eq.e.norm(),
        eq.residual
    );
    println!();
    print!("{:>10}", "");
    for l in m.labels {
        print!("{l:>13}");
    }
    println!();
    for (i, l) in m.labels.iter().enumerate() {
        print!("{l:>10}");
        for j in 0..7 {
            print!("{:>13.4e}", m.a[(i, j)]);
        }
        println!();
    }
    println!();
    print_modes(&modes, w0);
    println!("max |A - A_numeric| / max(1, |A|) = {dev:.3e}");

    if out.is_some() {
        let dir = out_dir(out)?;
        let doc = LinearizeDoc {
            l_pu: plant.l_pu,
            omega_g: wg,
            labels: m.labels,
            a: (0..7).map(|i| m.a.row(i).to_vec()).collect(),
            eigenvalues: modes.spectrum.iter().map(|z| [z.re, z.im]).collect(),
            structural_index: modes.structural,
            jacobian_deviation: dev,
            equilibrium: *eq,
        };
        write(&dir.join("linearize.json"), &serde_json::to_string_pretty(&doc)?)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn print_modes(modes: &ModalSummary, w0: f64) {
    println!("{:>30}  {:>24}", "eigenvalue (rad/s)", "/ w0");
    for (k, z) in modes.spectrum.iter().enumerate() {
        let tag = if k == modes.structural { "  structural (gamma orthogonal to k_i)" } else { "" };
        println!("{:>30}  {:>24}{tag}", complex(*z, 1.0), complex(*z, w0));
    }
    println!("dominant pole / w0: {}", complex(modes.dominant(), w0));
    println!("stable (excluding structural mode): {}", modes.is_stable());
}
