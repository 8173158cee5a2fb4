//! Closed-loop equilibrium, linearisation and pole sweeps.
//!
//! The closed loop is written in the controller frame with seven states
//! `[i_d, i_q, delta, psi_hat_d, psi_hat_q, gamma_d, gamma_q]`, where
//! `delta = theta_c - theta_g`. The frequency estimate `omega_c` and the
//! converter voltage `u_c` are static functions of these states and are
//! eliminated.
//!
//! `omega_c` reads `gamma` only through `k_i . gamma`, so the `gamma`
//! direction orthogonal to `k_i` feeds back into nothing. It shows up as one
//! eigenvalue at the origin (the structural mode) and is excluded from
//! stability verdicts. When the plant inductance differs from `L0` the
//! observer error settles to a non-zero vector orthogonal to `k_i`, and that
//! hidden integrator component drifts linearly; the equilibrium below is
//! therefore defined on the other six directions.

use serde::{Deserialize, Serialize};

use crate::controller::{ControllerGains, Setpoints};
use crate::error::{Error, Result};
use crate::numerics::{eig_small, rk4_step, rot, Complex64, Mat2, SmallMatrix, Spectrum, Vec2};
use crate::plant::PlantParams;

pub const STATE_LABELS: [&str; 7] = ["i_d", "i_q", "delta", "psi_hat_d", "psi_hat_q", "gamma_d", "gamma_q"];

/// Coefficients of the synchronization loop `D1(s) = s^2 - a1 s - a2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyncCoeffs {
    /// rad/s
    pub a1: f64,
    /// (rad/s)^2
    pub a2: f64,
}

/// `a1 = k_p J psi_g*`, `a2 = -omega0 k_p psi_g*`.
pub fn sync_tf_coeffs(k_p: Vec2, sp: &Setpoints, omega0: f64) -> SyncCoeffs {
    SyncCoeffs {
        a1: k_p.dot(sp.psi_g_star.perp()),
        a2: -omega0 * k_p.dot(sp.psi_g_star),
    }
}

/// Algebraic signals of the closed loop at one state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoopOutputs {
    pub e: Vec2,
    pub omega_c: f64,
    pub v_hat: f64,
    pub u_c: Vec2,
    pub u_g: Vec2,
    /// Active power (pu).
    pub p: f64,
    /// Converter voltage magnitude (pu).
    pub v: f64,
}

/// Controller plus actual plant in the controller frame at constant grid
/// frequency.
#[derive(Debug, Clone, Copy)]
pub struct LoopSystem<'a> {
    pub gains: &'a ControllerGains,
    pub sp: &'a Setpoints,
    /// Plant parameters as the controller believes them (carries `L0`).
    pub model: &'a PlantParams,
    /// Actual plant.
    pub plant: &'a PlantParams,
    pub omega_g: f64,
}

fn unpack(x: &[f64; 7]) -> (Vec2, f64, Vec2, Vec2) {
    (
        Vec2::new(x[0], x[1]),
        x[2],
        Vec2::new(x[3], x[4]),
        Vec2::new(x[5], x[6]),
    )
}

impl LoopSystem<'_> {
    pub fn outputs(&self, x: &[f64; 7]) -> LoopOutputs {
        let (i, delta, psi_hat, gamma) = unpack(x);
        let g = self.gains;
        let e = i * self.model.l_sec() + self.sp.psi_g_star - psi_hat;
        let omega_c = g.k_i.dot(gamma) + g.k_p.dot(e);
        let v_hat = omega_c * psi_hat.norm();
        let u_c = self.sp.u_c_star + g.k_v * (self.sp.v_star - v_hat);
        let u_g = rot(-delta) * Vec2::new(self.plant.u_g, 0.0);
        LoopOutputs {
            e,
            omega_c,
            v_hat,
            u_c,
            u_g,
            p: u_g.dot(i),
            v: u_c.norm(),
        }
    }

    pub fn field(&self, x: &[f64; 7]) -> [f64; 7] {
        let (i, _, psi_hat, _) = unpack(x);
        let o = self.outputs(x);
        let di = -i.perp() * o.omega_c + (o.u_c - o.u_g) * (1.0 / self.plant.l_sec());
        let dpsi = -psi_hat.perp() * o.omega_c + o.u_c + self.gains.k_o_mat * o.e;
        [
            di.d,
            di.q,
            o.omega_c - self.omega_g,
            dpsi.d,
            dpsi.q,
            o.e.d,
            o.e.q,
        ]
    }

    /// Analytic Jacobian of [`field`](Self::field).
    pub fn jacobian(&self, x: &[f64; 7]) -> SmallMatrix {
        let (i, _, psi_hat, _) = unpack(x);
        let g = self.gains;
        let o = self.outputs(x);
        let l0 = self.model.l_sec();
        let inv_l = 1.0 / self.plant.l_sec();

        // gradient of omega_c
        let mut w = [0.0; 7];
        w[0] = l0 * g.k_p.d;
        w[1] = l0 * g.k_p.q;
        w[3] = -g.k_p.d;
        w[4] = -g.k_p.q;
        w[5] = g.k_i.d;
        w[6] = g.k_i.q;

        // gradient of V_hat = omega_c |psi_hat|
        let n = psi_hat.norm();
        let mut grad_v = w.map(|wj| n * wj);
        if n > 0.0 {
            grad_v[3] += o.omega_c * psi_hat.d / n;
            grad_v[4] += o.omega_c * psi_hat.q / n;
        }

        // du_c = -k_v grad_v, du_g/ddelta = -J u_g
        let du_c = |r: usize, j: usize| -[g.k_v.d, g.k_v.q][r] * grad_v[j];
        let du_g_ddelta = -o.u_g.perp();

        // de/dx
        let de = |r: usize, j: usize| -> f64 {
            match (r, j) {
                (0, 0) | (1, 1) => l0,
                (0, 3) | (1, 4) => -1.0,
                _ => 0.0,
            }
        };

        let ji = i.perp().to_array();
        let jpsi = psi_hat.perp().to_array();
        let wc = o.omega_c;
        let jm = Mat2::J.m;
        let ko = g.k_o_mat.m;

        let mut a = SmallMatrix::zeros(7);
        for j in 0..7 {
            for r in 0..2 {
                let mut v = -ji[r] * w[j] + du_c(r, j) * inv_l;
                if j < 2 {
                    v -= wc * jm[r][j];
                }
                if j == 2 {
                    v -= du_g_ddelta.to_array()[r] * inv_l;
                }
                a[(r, j)] = v;

                let mut v = -jpsi[r] * w[j] + du_c(r, j) + ko[r][0] * de(0, j) + ko[r][1] * de(1, j);
                if (3..5).contains(&j) {
                    v -= wc * jm[r][j - 3];
                }
                a[(3 + r, j)] = v;

                a[(5 + r, j)] = de(r, j);
            }
            a[(2, j)] = w[j];
        }
        a
    }

    /// Residual scaled to per-unit in every row: current rows by `L`, the
    /// angle row by `1/omega0`, observer error rows by `omega0`.
    fn scale_rows(&self) -> [f64; 7] {
        let w0 = self.gains.omega0;
        let l = self.plant.l_sec();
        [l, l, 1.0 / w0, 1.0, 1.0, w0, w0]
    }
}

/// Full closed-loop operating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Equilibrium {
    /// `[i_d, i_q, delta, psi_hat_d, psi_hat_q, gamma_d, gamma_q]`, with
    /// `gamma` taken along `k_i`.
    pub x: [f64; 7],
    pub omega_c: f64,
    pub omega_g: f64,
    pub u_c: Vec2,
    pub u_g: Vec2,
    pub e: Vec2,
    pub p: f64,
    pub v: f64,
    pub v_hat: f64,
    /// Actual plant inductance (pu).
    pub l_pu: f64,
    /// Per-unit residual of the six determined directions.
    pub residual: f64,
    /// Drift rate of the hidden integrator direction, `|e|` orthogonal to
    /// `k_i` (pu*s per second).
    pub drift: f64,
}

impl Equilibrium {
    pub fn i(&self) -> Vec2 {
        Vec2::new(self.x[0], self.x[1])
    }

    pub fn delta(&self) -> f64 {
        self.x[2]
    }

    pub fn psi_hat(&self) -> Vec2 {
        Vec2::new(self.x[3], self.x[4])
    }

    pub fn gamma(&self) -> Vec2 {
        Vec2::new(self.x[5], self.x[6])
    }
}

const NEWTON_TOL: f64 = 1e-10;
const FALLBACK_TOL: f64 = 1e-8;
const NEWTON_MAX_ITER: usize = 60;
const FALLBACK_SECONDS: f64 = 2.0;
const FALLBACK_STEP: f64 = 1e-5;

struct Reduced<'s, 'a> {
    sys: &'s LoopSystem<'a>,
    k_i_dir: Vec2,
    scale: [f64; 7],
}

impl Reduced<'_, '_> {
    fn expand(&self, y: &[f64; 6]) -> [f64; 7] {
        let n2 = self.sys.gains.k_i.dot(self.sys.gains.k_i);
        let gamma = self.sys.gains.k_i * (y[5] / n2);
        [y[0], y[1], y[2], y[3], y[4], gamma.d, gamma.q]
    }

    fn residual(&self, y: &[f64; 6]) -> [f64; 6] {
        let f = self.sys.field(&self.expand(y));
        let s = self.scale;
        let e = Vec2::new(f[5], f[6]);
        [
            f[0] * s[0],
            f[1] * s[1],
            f[2] * s[2],
            f[3] * s[3],
            f[4] * s[4],
            self.k_i_dir.dot(e) * s[5],
        ]
    }

    fn jacobian(&self, y: &[f64; 6]) -> SmallMatrix {
        let a = self.sys.jacobian(&self.expand(y));
        let n2 = self.sys.gains.k_i.dot(self.sys.gains.k_i);
        let k = self.sys.gains.k_i;
        let d = self.k_i_dir;
        let mut m = SmallMatrix::zeros(6);
        let row = |r: usize, j: usize| -> f64 {
            if r < 5 {
                a[(r, j)] * self.scale[r]
            } else {
                (d.d * a[(5, j)] + d.q * a[(6, j)]) * self.scale[5]
            }
        };
        for r in 0..6 {
            for j in 0..5 {
                m[(r, j)] = row(r, j);
            }
            m[(r, 5)] = (row(r, 5) * k.d + row(r, 6) * k.q) / n2;
        }
        m
    }

    fn newton(&self, mut y: [f64; 6]) -> ([f64; 6], f64) {
        let norm = |r: &[f64; 6]| r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut r = self.residual(&y);
        let mut res = norm(&r);
        for _ in 0..NEWTON_MAX_ITER {
            if !res.is_finite() || res < NEWTON_TOL {
                break;
            }
            let m = self.jacobian(&y);
            let Some(step) = m.solve(&r.map(|v| -v)) else {
                break;
            };
            let mut alpha = 1.0;
            let mut improved = false;
            for _ in 0..30 {
                let mut trial = y;
                for (t, s) in trial.iter_mut().zip(&step) {
                    *t += alpha * s;
                }
                let rt = self.residual(&trial);
                let nt = norm(&rt);
                if nt.is_finite() && nt < res {
                    y = trial;
                    r = rt;
                    res = nt;
                    improved = true;
                    break;
                }
                alpha *= 0.5;
            }
            if !improved {
                break;
            }
        }
        (y, res)
    }
}

/// Operating point of the closed loop for the given plant and constant grid
/// frequency.
///
/// Damped Newton on the six determined directions, seeded from the design
/// targets. If that fails, the loop is integrated for two seconds, the last
/// grid period is averaged and Newton is restarted from there.
pub fn find_equilibrium(
    gains: &ControllerGains,
    sp: &Setpoints,
    model: &PlantParams,
    plant: &PlantParams,
    omega_g: f64,
) -> Result<Equilibrium> {
    if gains.k_i.norm() == 0.0 {
        return Err(Error::InvalidParameter("integral gain is zero".into()));
    }
    let sys = LoopSystem {
        gains,
        sp,
        model,
        plant,
        omega_g,
    };
    let red = Reduced {
        sys: &sys,
        k_i_dir: gains.k_i * (1.0 / gains.k_i.norm()),
        scale: sys.scale_rows(),
    };
    let i0 = (sp.psi_star - sp.psi_g_star) * (1.0 / model.l_sec());
    let seed = [i0.d, i0.q, sp.delta_star, sp.psi_star.d, sp.psi_star.q, omega_g];
    let (mut y, mut res) = red.newton(seed);

    if res.is_nan() || res >= NEWTON_TOL {
        let avg = settle_by_simulation(&sys, &red.expand(&seed))?;
        let gamma = Vec2::new(avg[5], avg[6]);
        let start = [avg[0], avg[1], avg[2], avg[3], avg[4], gains.k_i.dot(gamma)];
        let (y2, res2) = red.newton(start);
        if res2.is_nan() || res2 >= FALLBACK_TOL {
            return Err(Error::NoEquilibrium {
                residual: if res2.is_finite() { res2 } else { f64::INFINITY },
            });
        }
        y = y2;
        res = res2;
    }

    let x = red.expand(&y);
    let o = sys.outputs(&x);
    let drift = (o.e - red.k_i_dir * red.k_i_dir.dot(o.e)).norm();
    Ok(Equilibrium {
        x,
        omega_c: o.omega_c,
        omega_g,
        u_c: o.u_c,
        u_g: o.u_g,
        e: o.e,
        p: o.p,
        v: o.v,
        v_hat: o.v_hat,
        l_pu: plant.l_pu,
        residual: res,
        drift,
    })
}

fn settle_by_simulation(sys: &LoopSystem<'_>, x0: &[f64; 7]) -> Result<[f64; 7]> {
    let steps = (FALLBACK_SECONDS / FALLBACK_STEP).round() as usize;
    let period = std::f64::consts::TAU / sys.omega_g.abs().max(1.0);
    let window = ((period / FALLBACK_STEP).round() as usize).clamp(1, steps);
    let mut x = *x0;
    let mut sum = [0.0; 7];
    for k in 0..steps {
        x = rk4_step(|_, x: &[f64; 7]| sys.field(x), &x, k as f64 * FALLBACK_STEP, FALLBACK_STEP)
            .map_err(|_| Error::NoEquilibrium {
                residual: f64::INFINITY,
            })?;
        if k >= steps - window {
            for (s, v) in sum.iter_mut().zip(&x) {
                *s += v;
            }
        }
    }
    Ok(sum.map(|s| s / window as f64))
}

/// Linearised closed loop at an equilibrium.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopModel {
    pub a: SmallMatrix,
    pub labels: [&'static str; 7],
    pub equilibrium: Equilibrium,
    pub l_pu: f64,
}

/// Eigenvalues with the structural origin mode singled out.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalSummary {
    pub spectrum: Spectrum,
    /// Index into `spectrum` of the structural mode.
    pub structural: usize,
}

impl ModalSummary {
    pub fn from_spectrum(spectrum: Spectrum) -> Self {
        let structural = spectrum
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
            .map_or(0, |(k, _)| k);
        Self { spectrum, structural }
    }

    pub fn structural_value(&self) -> Complex64 {
        self.spectrum.values()[self.structural]
    }

    pub fn non_structural(&self) -> impl Iterator<Item = Complex64> + '_ {
        self.spectrum
            .iter()
            .enumerate()
            .filter(move |(k, _)| *k != self.structural)
            .map(|(_, z)| *z)
    }

    /// Slowest non-structural pole (largest real part).
    pub fn dominant(&self) -> Complex64 {
        self.non_structural()
            .max_by(|a, b| a.re.total_cmp(&b.re))
            .unwrap_or(Complex64::new(f64::NAN, 0.0))
    }

    pub fn is_stable(&self) -> bool {
        self.non_structural().all(|z| z.re < 0.0)
    }
}

impl ClosedLoopModel {
    pub fn spectrum(&self) -> Result<Spectrum> {
        eig_small(&self.a)
    }

    pub fn modes(&self) -> Result<ModalSummary> {
        Ok(ModalSummary::from_spectrum(self.spectrum()?))
    }
}

/// Analytic linearisation at the equilibrium for plant `plant`.
pub fn closed_loop_matrix(
    gains: &ControllerGains,
    sp: &Setpoints,
    model: &PlantParams,
    plant: &PlantParams,
    omega_g: f64,
) -> Result<ClosedLoopModel> {
    let eq = find_equilibrium(gains, sp, model, plant, omega_g)?;
    let sys = LoopSystem {
        gains,
        sp,
        model,
        plant,
        omega_g,
    };
    Ok(ClosedLoopModel {
        a: sys.jacobian(&eq.x),
        labels: STATE_LABELS,
        equilibrium: eq,
        l_pu: plant.l_pu,
    })
}

/// Central-difference Jacobian with step `1e-6 max(1, |x_j|)`.
pub fn numeric_jacobian<F>(f: F, x0: &[f64]) -> SmallMatrix
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let n = x0.len();
    let mut a = SmallMatrix::zeros(n);
    let mut x = x0.to_vec();
    for j in 0..n {
        let h = 1e-6 * x0[j].abs().max(1.0);
        x[j] = x0[j] + h;
        let fp = f(&x);
        x[j] = x0[j] - h;
        let fm = f(&x);
        x[j] = x0[j];
        for i in 0..n {
            a[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    a
}

/// One sweep sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub l_pu: f64,
    pub outcome: Result<SweepSample>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSample {
    pub modes: ModalSummary,
    pub equilibrium: Equilibrium,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoleSweepResult {
    pub points: Vec<SweepPoint>,
}

impl PoleSweepResult {
    /// Inductances whose sample is unstable or has no equilibrium.
    pub fn unstable(&self) -> Vec<f64> {
        self.points
            .iter()
            .filter(|p| !matches!(&p.outcome, Ok(s) if s.modes.is_stable()))
            .map(|p| p.l_pu)
            .collect()
    }

    pub fn all_stable(&self) -> bool {
        self.unstable().is_empty()
    }

    /// CSV with columns `L_pu,re_1,im_1,...,re_7,im_7`. Failed samples are
    /// written as `NaN`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("L_pu");
        for k in 1..=7 {
            out.push_str(&format!(",re_{k},im_{k}"));
        }
        out.push('\n');
        for p in &self.points {
            out.push_str(&format!("{:?}", p.l_pu));
            match &p.outcome {
                Ok(s) => {
                    for z in s.modes.spectrum.iter() {
                        out.push_str(&format!(",{:?},{:?}", z.re, z.im));
                    }
                }
                Err(_) => {
                    for _ in 0..7 {
                        out.push_str(",NaN,NaN");
                    }
                }
            }
            out.push('\n');
        }
        out
    }
}

fn sweep_sample(
    gains: &ControllerGains,
    sp: &Setpoints,
    model: &PlantParams,
    plant: &PlantParams,
    omega_g: f64,
) -> Result<SweepSample> {
    let m = closed_loop_matrix(gains, sp, model, plant, omega_g)?;
    Ok(SweepSample {
        modes: m.modes()?,
        equilibrium: m.equilibrium,
    })
}

/// Spectra over `l_values` with the design held fixed. Samples run on up to
/// `threads` worker threads; output order follows `l_values`.
pub fn pole_sweep(
    gains: &ControllerGains,
    sp: &Setpoints,
    model: &PlantParams,
    template: &PlantParams,
    l_values: &[f64],
    threads: usize,
) -> Result<PoleSweepResult> {
    if l_values.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
        return Err(Error::InvalidParameter("inductance samples must be positive".into()));
    }
    if l_values.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("inductance samples must be increasing".into()));
    }
    let omega_g = template.omega_base;
    let run = |l: f64| SweepPoint {
        l_pu: l,
        outcome: sweep_sample(gains, sp, model, &template.with_inductance(l), omega_g),
    };

    let threads = threads.clamp(1, l_values.len().max(1));
    let points = if threads == 1 {
        l_values.iter().map(|&l| run(l)).collect()
    } else {
        let chunk = l_values.len().div_ceil(threads);
        std::thread::scope(|s| {
            let handles: Vec<_> = l_values
                .chunks(chunk)
                .map(|c| s.spawn(|| c.iter().map(|&l| run(l)).collect::<Vec<_>>()))
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("sweep worker panicked"))
                .collect()
        })
    };
    Ok(PoleSweepResult { points })
}

/// `n` evenly spaced samples from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|k| if k + 1 == n { hi } else { lo + (hi - lo) * k as f64 / (n - 1) as f64 })
            .collect(),
    }
}
