//! Pseudospectral solver for the Fourier-filtered van der Waals system
//! `u_t + v_x = 0`, `v_t + (S p(u))_x = 0` on the 2pi-torus, where `S`
//! keeps modes `|n| <= lambda`.
//!
//! Coefficients use `u(x) = sum_n uhat_n e^{inx}` and are stored in FFT
//! order: mode `n` lives at index `n mod nmodes`.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit;
use crate::ode::{rk4_step, step_count};
use crate::symbol::vdw_tools;

#[derive(Clone, Debug, PartialEq)]
pub struct FilteredState {
    pub lambda: usize,
    pub nmodes: usize,
    pub uhat: Vec<Complex64>,
    pub vhat: Vec<Complex64>,
    pub t: f64,
}

fn slot(n: i64, len: usize) -> usize {
    n.rem_euclid(len as i64) as usize
}

impl FilteredState {
    pub fn zeros(lambda: usize, nmodes: usize) -> Result<Self> {
        if lambda == 0 {
            return Err(Error::Config("lambda must be >= 1".into()));
        }
        if !nmodes.is_power_of_two() || nmodes < 4 * lambda {
            return Err(Error::Config(format!(
                "nmodes = {nmodes} must be a power of two >= 4 lambda = {}",
                4 * lambda
            )));
        }
        Ok(Self {
            lambda,
            nmodes,
            uhat: vec![Complex64::default(); nmodes],
            vhat: vec![Complex64::default(); nmodes],
            t: 0.0,
        })
    }

    pub fn u_mode(&self, n: i64) -> Complex64 {
        self.uhat[slot(n, self.nmodes)]
    }

    pub fn v_mode(&self, n: i64) -> Complex64 {
        self.vhat[slot(n, self.nmodes)]
    }

    /// Set mode `n` of `u` (and `-n` to its conjugate). Modes beyond the
    /// cutoff are silently dropped, as `S` would.
    pub fn set_u(&mut self, n: i64, c: Complex64) {
        set_sym(&mut self.uhat, self.lambda, n, c);
    }

    pub fn set_v(&mut self, n: i64, c: Complex64) {
        set_sym(&mut self.vhat, self.lambda, n, c);
    }

    /// Largest violation of filter closure or conjugate symmetry.
    pub fn invariant_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for c in [&self.uhat, &self.vhat] {
            for (k, z) in c.iter().enumerate() {
                let n = if k < self.nmodes / 2 { k as i64 } else { k as i64 - self.nmodes as i64 };
                if n.unsigned_abs() as usize > self.lambda {
                    worst = worst.max(z.norm());
                } else {
                    worst = worst.max((z - c[slot(-n, self.nmodes)].conj()).norm());
                }
            }
        }
        worst
    }

    fn is_finite(&self) -> bool {
        self.uhat
            .iter()
            .chain(&self.vhat)
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

fn set_sym(c: &mut [Complex64], lambda: usize, n: i64, z: Complex64) {
    if n.unsigned_abs() as usize > lambda {
        return;
    }
    let len = c.len();
    if n == 0 {
        c[0] = Complex64::new(z.re, 0.0);
    } else {
        c[slot(n, len)] = z;
        c[slot(-n, len)] = z.conj();
    }
}

/// `S_lambda`: zero every mode with `|n| > lambda` (FFT order).
pub fn s_lambda(coeffs: &[Complex64], lambda: usize) -> Vec<Complex64> {
    let len = coeffs.len();
    coeffs
        .iter()
        .enumerate()
        .map(|(k, &z)| {
            let n = if k < len.div_ceil(2) { k } else { len - k };
            if n <= lambda {
                z
            } else {
                Complex64::default()
            }
        })
        .collect()
}

/// FFT plans on the 2x padded grid.
pub struct Transform {
    nmodes: usize,
    lambda: usize,
    m: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Transform {
    pub fn new(lambda: usize, nmodes: usize) -> Self {
        let m = 2 * nmodes;
        let mut planner = FftPlanner::new();
        Self {
            nmodes,
            lambda,
            m,
            fwd: planner.plan_fft_forward(m),
            inv: planner.plan_fft_inverse(m),
        }
    }

    /// Values on the padded grid `x_j = 2 pi j / m`.
    pub fn to_grid(&self, c: &[Complex64]) -> Vec<f64> {
        let mut buf = vec![Complex64::default(); self.m];
        let l = self.lambda as i64;
        for n in -l..=l {
            buf[slot(n, self.m)] = c[slot(n, self.nmodes)];
        }
        self.inv.process(&mut buf);
        buf.iter().map(|z| z.re).collect()
    }

    /// Filtered coefficients of real grid values, conjugate symmetry
    /// enforced exactly.
    pub fn from_grid(&self, vals: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = vals.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.fwd.process(&mut buf);
        let scale = 1.0 / self.m as f64;
        let mut out = vec![Complex64::default(); self.nmodes];
        out[0] = Complex64::new(buf[0].re * scale, 0.0);
        for n in 1..=self.lambda as i64 {
            let z = (buf[slot(n, self.m)] + buf[slot(-n, self.m)].conj()) * (0.5 * scale);
            out[slot(n, self.nmodes)] = z;
            out[slot(-n, self.nmodes)] = z.conj();
        }
        out
    }

    pub fn grid_len(&self) -> usize {
        self.m
    }
}

/// Right-hand side of the filtered system in coefficient space.
pub fn vdw_rhs(state: &FilteredState, tr: &Transform) -> (Vec<Complex64>, Vec<Complex64>) {
    let mut du = vec![Complex64::default(); state.nmodes];
    let mut dv = du.clone();
    rhs_into(state.lambda, state.nmodes, &state.uhat, &state.vhat, tr, &mut du, &mut dv);
    (du, dv)
}

fn rhs_into(
    lambda: usize,
    nmodes: usize,
    u: &[Complex64],
    v: &[Complex64],
    tr: &Transform,
    du: &mut [Complex64],
    dv: &mut [Complex64],
) {
    let p: Vec<f64> = tr.to_grid(u).iter().map(|&x| x * (x * x - 1.0)).collect();
    let ph = tr.from_grid(&p);
    du.fill(Complex64::default());
    dv.fill(Complex64::default());
    let l = lambda as i64;
    for n in -l..=l {
        let k = slot(n, nmodes);
        let ikn = Complex64::new(0.0, -(n as f64));
        du[k] = ikn * v[k];
        dv[k] = ikn * ph[k];
    }
}

/// `E = int (v^2/2 + P(u)) dx` by the rectangle rule on the padded grid.
pub fn energy(state: &FilteredState, tr: &Transform) -> f64 {
    let u = tr.to_grid(&state.uhat);
    let v = tr.to_grid(&state.vhat);
    let h = 2.0 * std::f64::consts::PI / tr.grid_len() as f64;
    u.iter()
        .zip(&v)
        .map(|(&a, &b)| 0.5 * b * b + vdw_tools(a).big_p)
        .sum::<f64>()
        * h
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyTrace {
    pub samples: Vec<(f64, f64)>,
    pub drift: f64,
}

impl EnergyTrace {
    fn push(&mut self, t: f64, e: f64) {
        let e0 = self.samples.first().map_or(e, |s| s.1);
        self.drift = self.drift.max((e - e0).abs() / e0.abs().max(1.0));
        self.samples.push((t, e));
    }
}

/// Per-record amplitudes of the tracked modes.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ModeSample {
    pub t: f64,
    pub u_abs: Vec<f64>,
    pub v_abs: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    /// Last finite state.
    pub state: FilteredState,
    pub trace: EnergyTrace,
    pub modes: Vec<ModeSample>,
    /// Time of the last finite state when the run overflowed.
    pub blow_up: Option<f64>,
}

/// Largest characteristic speed `sqrt|p'(u)|` over the padded grid.
pub fn max_char_speed(state: &FilteredState, tr: &Transform) -> f64 {
    tr.to_grid(&state.uhat)
        .iter()
        .map(|&u| vdw_tools(u).dp.abs().sqrt())
        .fold(0.0, f64::max)
}

/// RK4 from `state.t` to `t_end`, recording energy and tracked-mode
/// amplitudes every `record_every` steps and at the end.
pub fn integrate(
    state: FilteredState,
    dt: f64,
    t_end: f64,
    record_every: usize,
    track: &[i64],
) -> Result<RunOutcome> {
    if !(dt > 0.0) || !t_end.is_finite() || t_end < state.t {
        return Err(Error::Config(format!("need dt > 0 and t_end >= t (dt = {dt}, t_end = {t_end})")));
    }
    if record_every == 0 {
        return Err(Error::Config("record_every must be >= 1".into()));
    }
    let tr = Transform::new(state.lambda, state.nmodes);
    let cfl = dt * state.lambda as f64 * max_char_speed(&state, &tr);
    if cfl > 0.5 {
        return Err(Error::Config(format!("CFL number {cfl:.3} exceeds 0.5; reduce dt")));
    }
    let (lambda, nm) = (state.lambda, state.nmodes);
    let t0 = state.t;
    let (nsteps, h) = step_count(t_end - t0, dt);
    let mut y: Vec<Complex64> = state.uhat.iter().chain(&state.vhat).copied().collect();
    let mut cur = state;
    let mut out = RunOutcome {
        state: cur.clone(),
        trace: EnergyTrace::default(),
        modes: Vec::new(),
        blow_up: None,
    };
    let record = |s: &FilteredState, out: &mut RunOutcome| -> Result<()> {
        let defect = s.invariant_defect();
        if defect > 0.0 {
            return Err(Error::Divergence(format!(
                "filter closure or conjugate symmetry broken by {defect:e} at t = {}",
                s.t
            )));
        }
        out.trace.push(s.t, energy(s, &tr));
        out.modes.push(ModeSample {
            t: s.t,
            u_abs: track.iter().map(|&n| s.u_mode(n).norm()).collect(),
            v_abs: track.iter().map(|&n| s.v_mode(n).norm()).collect(),
        });
        Ok(())
    };
    record(&cur, &mut out)?;
    for k in 0..nsteps {
        rk4_step(&mut y, t0 + k as f64 * h, h, |_, y, d| {
            let (u, v) = y.split_at(nm);
            let (du, dv) = d.split_at_mut(nm);
            rhs_into(lambda, nm, u, v, &tr, du, dv);
        });
        let next = FilteredState {
            lambda,
            nmodes: nm,
            uhat: y[..nm].to_vec(),
            vhat: y[nm..].to_vec(),
            t: if k + 1 == nsteps { t_end } else { t0 + (k + 1) as f64 * h },
        };
        if !next.is_finite() {
            out.blow_up = Some(cur.t);
            break;
        }
        cur = next;
        if (k + 1) % record_every == 0 || k + 1 == nsteps {
            record(&cur, &mut out)?;
        }
    }
    out.state = cur;
    Ok(out)
}

/// Least-squares slope of `ln a` against `t` over samples with
/// `lo <= a <= hi`.
pub fn growth_fit_window(samples: &[(f64, f64)], lo: f64, hi: f64) -> Result<f64> {
    let (ts, ls): (Vec<f64>, Vec<f64>) = samples
        .iter()
        .filter(|&&(_, a)| a >= lo && a <= hi && a > 0.0)
        .map(|&(t, a)| (t, a.ln()))
        .unzip();
    if ts.len() < 10 {
        return Err(Error::InsufficientGrowth(format!(
            "{} samples in amplitude window [{lo:e}, {hi:e}], need 10",
            ts.len()
        )));
    }
    fit::line(&ts, &ls)
        .map(|(slope, _)| slope)
        .ok_or_else(|| Error::InsufficientGrowth("degenerate time samples".into()))
}

/// Growth rate over the window from 10x the first amplitude up to `1e-3`.
pub fn growth_fit(samples: &[(f64, f64)]) -> Result<f64> {
    let a0 = samples
        .first()
        .map(|s| s.1)
        .ok_or_else(|| Error::InsufficientGrowth("empty trace".into()))?;
    growth_fit_window(samples, 10.0 * a0, 1e-3)
}
