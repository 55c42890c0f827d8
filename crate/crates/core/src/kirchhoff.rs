//! Nonlocal Kirchhoff-type system
//! `u_t = a(t) v_x`, `v_t = |a(t)| u_x`, `a = ||u||^2 - 1`, with
//! Fourier-filtered data `u(0) = 0`, `v(0) = S h` on the torus.
//!
//! While `U = ||u||^2 < 1` the solution is explicit in
//! `A(t) = int_0^t (1 - U)`, and `A' = 1 - Phi(A)` is an autonomous scalar
//! ODE. Weights `w_n = |h_n|^2` carry all Parseval normalization, so
//! `||h||^2 = sum w_n` and `h_n = sqrt(w_n)`.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::ode::{rk4_step, step_count};

/// `sinh`/`cosh` arguments above this overflow soon after.
pub const SATURATION: f64 = 700.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum WeightSpec {
    /// `w_n = c (1 + |n|)^{-s}` for `|n| <= n_max`, with `sum w_n = norm`.
    Power {
        s: f64,
        norm: f64,
        #[serde(default = "default_n_max")]
        n_max: i64,
    },
    /// `w_n = c e^{-a |n|}` for `|n| <= n_max`, with `sum w_n = norm`.
    Exp {
        a: f64,
        norm: f64,
        #[serde(default = "default_n_max")]
        n_max: i64,
    },
    /// Weight `w / 2` on each of `+-n` (`w` on `0` when `n = 0`).
    Single { n: i64, w: f64 },
    Explicit { weights: Vec<(i64, f64)> },
}

fn default_n_max() -> i64 {
    4096
}

/// Which field carries the data at `t = 0`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Initial {
    /// `u(0) = 0`, `v(0) = S h`.
    #[default]
    Velocity,
    /// `u(0) = S h`, `v(0) = 0`; needs `||S h|| < 1`.
    Displacement,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SpectrumData {
    pub weights: BTreeMap<i64, f64>,
}

impl SpectrumData {
    pub fn from_spec(spec: &WeightSpec) -> Result<Self> {
        let symmetric = |n_max: i64, norm: f64, f: &dyn Fn(i64) -> f64| -> Result<Self> {
            if n_max < 0 || !(norm >= 0.0) {
                return Err(Error::Config("n_max and norm must be non-negative".into()));
            }
            let raw: BTreeMap<i64, f64> = (-n_max..=n_max).map(|n| (n, f(n.abs()))).collect();
            let total: f64 = raw.values().sum();
            Ok(Self {
                weights: raw.into_iter().map(|(n, w)| (n, w * norm / total)).collect(),
            })
        };
        let data = match *spec {
            WeightSpec::Power { s, norm, n_max } => {
                symmetric(n_max, norm, &|n| (1.0 + n as f64).powf(-s))?
            }
            WeightSpec::Exp { a, norm, n_max } => symmetric(n_max, norm, &|n| (-a * n as f64).exp())?,
            WeightSpec::Single { n, w } => {
                let mut weights = BTreeMap::new();
                if n == 0 {
                    weights.insert(0, w);
                } else {
                    weights.insert(n, 0.5 * w);
                    weights.insert(-n, 0.5 * w);
                }
                Self { weights }
            }
            WeightSpec::Explicit { ref weights } => {
                let mut m = BTreeMap::new();
                for &(n, w) in weights {
                    *m.entry(n).or_insert(0.0) += w;
                }
                Self { weights: m }
            }
        };
        if let Some((n, w)) = data.weights.iter().find(|(_, w)| !(**w >= 0.0) || !w.is_finite()) {
            return Err(Error::Config(format!("weight w_{n} = {w} must be finite and >= 0")));
        }
        Ok(data)
    }

    pub fn norm2(&self) -> f64 {
        self.weights.values().sum()
    }

    /// `||S_lambda h||^2`.
    pub fn filtered_norm2(&self, lambda: i64) -> f64 {
        self.in_band(lambda).map(|(_, w)| w).sum()
    }

    /// Largest `|n|` with positive weight.
    pub fn support(&self) -> i64 {
        self.weights
            .iter()
            .filter(|(_, w)| **w > 0.0)
            .map(|(n, _)| n.abs())
            .max()
            .unwrap_or(0)
    }

    fn in_band(&self, lambda: i64) -> impl Iterator<Item = (i64, f64)> + '_ {
        self.weights
            .range(-lambda..=lambda)
            .filter(|(_, w)| **w > 0.0)
            .map(|(&n, &w)| (n, w))
    }

    pub fn hhat(&self, n: i64) -> f64 {
        self.weights.get(&n).map_or(0.0, |w| w.sqrt())
    }
}

fn guard(data: &SpectrumData, lambda: i64, a: f64) -> Result<()> {
    let top = data.in_band(lambda).map(|(n, _)| n.abs()).max().unwrap_or(0);
    let arg = top as f64 * a.abs();
    if arg > SATURATION {
        return Err(Error::Saturation { arg, limit: SATURATION });
    }
    Ok(())
}

/// `Phi(A) = sum_{|n| <= lambda} w_n sinh^2(n A)` (`cosh^2` for
/// displacement data).
pub fn u_of_a(a: f64, data: &SpectrumData, lambda: i64, initial: Initial) -> Result<f64> {
    guard(data, lambda, a)?;
    Ok(data
        .in_band(lambda)
        .map(|(n, w)| {
            let x = n as f64 * a;
            match initial {
                Initial::Velocity => w * x.sinh().powi(2),
                Initial::Displacement => w * x.cosh().powi(2),
            }
        })
        .sum())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KirchhoffTrajectory {
    pub lambda: i64,
    pub initial: Initial,
    pub tgrid: Vec<f64>,
    pub a: Vec<f64>,
    pub u: Vec<f64>,
}

impl KirchhoffTrajectory {
    /// Cubic Hermite interpolation of `A`, using `A' = 1 - U` at the nodes.
    pub fn a_at(&self, t: f64) -> Result<f64> {
        let last = *self.tgrid.last().unwrap();
        if !(t >= 0.0 && t <= last) {
            return Err(Error::Domain(format!("t = {t} outside [0, {last}]")));
        }
        let k = match self.tgrid.binary_search_by(|x| x.total_cmp(&t)) {
            Ok(k) => return Ok(self.a[k]),
            Err(k) => k - 1,
        };
        let (t0, t1) = (self.tgrid[k], self.tgrid[k + 1]);
        let h = t1 - t0;
        let s = (t - t0) / h;
        let (y0, y1) = (self.a[k], self.a[k + 1]);
        let (d0, d1) = (1.0 - self.u[k], 1.0 - self.u[k + 1]);
        let h00 = (1.0 + 2.0 * s) * (1.0 - s).powi(2);
        let h10 = s * (1.0 - s).powi(2);
        let h01 = s * s * (3.0 - 2.0 * s);
        let h11 = s * s * (s - 1.0);
        Ok(h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1)
    }

    /// Check `U < 1`, `U` non-decreasing, `t (1 - U(t)) <= A(t) <= t`.
    pub fn check_invariants(&self) -> Result<()> {
        let slack = 1e-12;
        for k in 0..self.tgrid.len() {
            let (t, a, u) = (self.tgrid[k], self.a[k], self.u[k]);
            if u >= 1.0 {
                return Err(Error::Divergence(format!("U({t}) = {u} >= 1")));
            }
            if k > 0 && u < self.u[k - 1] - slack {
                return Err(Error::Divergence(format!("U decreases at t = {t}")));
            }
            if self.initial == Initial::Velocity && (a > t + slack || a < t * (1.0 - u) - slack) {
                return Err(Error::Divergence(format!(
                    "A({t}) = {a} outside [t(1-U), t] = [{}, {t}]",
                    t * (1.0 - u)
                )));
            }
        }
        Ok(())
    }
}

/// RK4 on `A' = 1 - Phi(A)`, `A(0) = 0`.
pub fn integrate_a(
    data: &SpectrumData,
    lambda: i64,
    t_end: f64,
    dt: f64,
    initial: Initial,
) -> Result<KirchhoffTrajectory> {
    if !(dt > 0.0) || !(t_end >= 0.0) {
        return Err(Error::Config(format!("need dt > 0, t_end >= 0 (dt = {dt}, t_end = {t_end})")));
    }
    if initial == Initial::Displacement && data.filtered_norm2(lambda) >= 1.0 {
        return Err(Error::Precondition("displacement data needs ||S h|| < 1".into()));
    }
    let (n, h) = step_count(t_end, dt);
    let mut traj = KirchhoffTrajectory {
        lambda,
        initial,
        tgrid: Vec::with_capacity(n + 1),
        a: Vec::with_capacity(n + 1),
        u: Vec::with_capacity(n + 1),
    };
    let mut y = [0.0];
    traj.tgrid.push(0.0);
    traj.a.push(0.0);
    traj.u.push(u_of_a(0.0, data, lambda, initial)?);
    let mut err = None;
    for k in 0..n {
        rk4_step(&mut y, k as f64 * h, h, |_, y, d| match u_of_a(y[0], data, lambda, initial) {
            Ok(u) => d[0] = 1.0 - u,
            Err(e) => {
                err.get_or_insert(e);
                d[0] = 0.0;
            }
        });
        if let Some(e) = err.take() {
            return Err(e);
        }
        traj.tgrid.push(if k + 1 == n { t_end } else { (k + 1) as f64 * h });
        traj.a.push(y[0]);
        traj.u.push(u_of_a(y[0], data, lambda, initial)?);
    }
    Ok(traj)
}

/// Mode `n` with coefficients of `u` and `v`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModeValue {
    pub n: i64,
    pub u: Complex64,
    pub v: Complex64,
}

/// Explicit modes at time `t`:
/// `u_n = -i sinh(n A) h_n`, `v_n = cosh(n A) h_n` for velocity data and
/// `u_n = cosh(n A) h_n`, `v_n = i sinh(n A) h_n` for displacement data.
pub fn closed_form_state(
    traj: &KirchhoffTrajectory,
    data: &SpectrumData,
    t: f64,
) -> Result<Vec<ModeValue>> {
    let a = traj.a_at(t)?;
    guard(data, traj.lambda, a)?;
    Ok((-traj.lambda..=traj.lambda)
        .map(|n| {
            let h = data.hhat(n);
            let (s, c) = ((n as f64 * a).sinh() * h, (n as f64 * a).cosh() * h);
            match traj.initial {
                Initial::Velocity => ModeValue {
                    n,
                    u: Complex64::new(0.0, -s),
                    v: Complex64::new(c, 0.0),
                },
                Initial::Displacement => ModeValue {
                    n,
                    u: Complex64::new(c, 0.0),
                    v: Complex64::new(0.0, s),
                },
            }
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DirectRun {
    pub tgrid: Vec<f64>,
    /// `E = ||v||^2 + | ||u||^2 - 1 |` at each record time.
    pub energy: Vec<f64>,
    /// Modes at each record time.
    pub snapshots: Vec<Vec<ModeValue>>,
    /// Largest `|U - Phi(A)|` seen, with `A` integrated alongside.
    pub consistency: f64,
}

/// Coupled mode ODEs `u_n' = i n a v_n`, `v_n' = i n |a| u_n` with
/// `a = sum |u_n|^2 - 1` recomputed at every stage.
pub fn direct_mode_ode(
    data: &SpectrumData,
    lambda: i64,
    t_end: f64,
    dt: f64,
    record_every: usize,
    initial: Initial,
) -> Result<DirectRun> {
    if !(dt > 0.0) || record_every == 0 {
        return Err(Error::Config("need dt > 0 and record_every >= 1".into()));
    }
    let ns: Vec<i64> = (-lambda..=lambda).collect();
    let m = ns.len();
    // layout: u modes, v modes, then A
    let mut y = vec![Complex64::default(); 2 * m + 1];
    for (k, &n) in ns.iter().enumerate() {
        let h = Complex64::new(data.hhat(n), 0.0);
        match initial {
            Initial::Velocity => y[m + k] = h,
            Initial::Displacement => y[k] = h,
        }
    }
    let nf: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
    let rhs = |y: &[Complex64], d: &mut [Complex64]| {
        let uu: f64 = y[..m].iter().map(|z| z.norm_sqr()).sum();
        let a = uu - 1.0;
        for k in 0..m {
            let i_n = Complex64::new(0.0, nf[k]);
            d[k] = i_n * y[m + k] * a;
            d[m + k] = i_n * y[k] * a.abs();
        }
        d[2 * m] = Complex64::new(-a, 0.0);
    };
    let snapshot = |y: &[Complex64]| -> Vec<ModeValue> {
        ns.iter()
            .enumerate()
            .map(|(k, &n)| ModeValue { n, u: y[k], v: y[m + k] })
            .collect()
    };
    let energy = |y: &[Complex64]| {
        let uu: f64 = y[..m].iter().map(|z| z.norm_sqr()).sum();
        let vv: f64 = y[m..2 * m].iter().map(|z| z.norm_sqr()).sum();
        vv + (uu - 1.0).abs()
    };
    let (n, h) = step_count(t_end, dt);
    let mut run = DirectRun {
        tgrid: vec![0.0],
        energy: vec![energy(&y)],
        snapshots: vec![snapshot(&y)],
        consistency: 0.0,
    };
    for k in 0..n {
        rk4_step(&mut y, k as f64 * h, h, |_, y, d| rhs(y, d));
        let uu: f64 = y[..m].iter().map(|z| z.norm_sqr()).sum();
        let a = y[2 * m].re;
        let phi = u_of_a(a, data, lambda, initial)?;
        let gap = (uu - phi).abs();
        run.consistency = run.consistency.max(gap);
        if gap > 1e-6 || !uu.is_finite() {
            return Err(Error::Divergence(format!(
                "|U - Phi(A)| = {gap:e} at t = {}",
                (k + 1) as f64 * h
            )));
        }
        if (k + 1) % record_every == 0 || k + 1 == n {
            run.tgrid.push(if k + 1 == n { t_end } else { (k + 1) as f64 * h });
            run.energy.push(energy(&y));
            run.snapshots.push(snapshot(&y));
        }
    }
    Ok(run)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AnalyticityDiagnostic {
    pub lambdas: Vec<i64>,
    /// `+inf` when the annulus carries no weight.
    pub mu: Vec<f64>,
    pub ratio: Vec<f64>,
}

/// Weight in the dyadic annulus `lambda / 2 <= |n| <= lambda`.
pub fn annulus_mass(data: &SpectrumData, lambda: i64) -> f64 {
    data.in_band(lambda)
        .filter(|(n, _)| 2 * n.abs() >= lambda)
        .map(|(_, w)| w)
        .sum()
}

/// `mu(lambda) = -ln(annulus mass)`.
pub fn mu_diagnostic(data: &SpectrumData, lambdas: &[i64]) -> AnalyticityDiagnostic {
    let mu: Vec<f64> = lambdas
        .iter()
        .map(|&l| {
            let m = annulus_mass(data, l);
            if m > 0.0 {
                -m.ln()
            } else {
                f64::INFINITY
            }
        })
        .collect();
    let ratio = mu.iter().zip(lambdas).map(|(m, &l)| m / l as f64).collect();
    AnalyticityDiagnostic {
        lambdas: lambdas.to_vec(),
        mu,
        ratio,
    }
}

/// `K = ln(8 pi (1 + ||h||^2))`.
pub fn bound_constant(data: &SpectrumData) -> f64 {
    (8.0 * std::f64::consts::PI * (1.0 + data.norm2())).ln()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundRow {
    pub lambda: i64,
    pub t: f64,
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "U")]
    pub u: f64,
    pub mu: f64,
    pub bound_lhs: f64,
    pub bound_rhs: f64,
    pub pass: bool,
    pub residual_u: f64,
    pub residual_v: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundReport {
    pub k: f64,
    pub rows: Vec<BoundRow>,
    pub all_pass: bool,
    /// Both low-mode residuals strictly decrease along the sweep.
    pub residuals_decreasing: bool,
}

/// `1 - U(t) <= (mu + K) / (t lambda)` per `lambda`, with low-mode
/// residuals `max_{|n| <= n0} |u_n(t)|` and `|v_n(t) - h_n|`.
pub fn verify_bound_and_limit(
    data: &SpectrumData,
    lambdas: &[i64],
    t: f64,
    dt: f64,
    n0: i64,
    exec: Exec,
) -> Result<BoundReport> {
    if !(t > 0.0) {
        return Err(Error::Config(format!("bound needs t > 0, got {t}")));
    }
    let k = bound_constant(data);
    let diag = mu_diagnostic(data, lambdas);
    let rows: Vec<Result<BoundRow>> = exec.map_range(lambdas.len(), |i| {
        let lambda = lambdas[i];
        let traj = integrate_a(data, lambda, t, dt, Initial::Velocity)?;
        traj.check_invariants()?;
        let modes = closed_form_state(&traj, data, t)?;
        let low = modes.iter().filter(|m| m.n.abs() <= n0);
        let residual_u = low.clone().map(|m| m.u.norm()).fold(0.0, f64::max);
        let residual_v = low
            .map(|m| (m.v - Complex64::new(data.hhat(m.n), 0.0)).norm())
            .fold(0.0, f64::max);
        let u = *traj.u.last().unwrap();
        let mu = diag.mu[i];
        let bound_lhs = 1.0 - u;
        let bound_rhs = (mu + k) / (t * lambda as f64);
        Ok(BoundRow {
            lambda,
            t,
            a: *traj.a.last().unwrap(),
            u,
            mu,
            bound_lhs,
            bound_rhs,
            pass: bound_lhs <= bound_rhs,
            residual_u,
            residual_v,
        })
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let all_pass = rows.iter().all(|r| r.pass);
    let residuals_decreasing = rows
        .windows(2)
        .all(|w| w[1].residual_u < w[0].residual_u && w[1].residual_v < w[0].residual_v);
    Ok(BoundReport {
        k,
        rows,
        all_pass,
        residuals_decreasing,
    })
}
