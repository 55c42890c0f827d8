//! Gaussian wave-packet transform
//! `T h(y, lambda) = (lambda/pi)^{d/2} int e^{-lambda q(x - y)} h(x) chi(x) dx`
//! at complex `y`, a decay classifier for analytic directions, and a solver
//! for the model equation `(d_x + i d_y) u = u^2` with data on `x = 0`.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector};
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::fit;

/// Uniformly sampled function on a box in `R^d`, `d` in `{1, 2}`.
/// Values are row-major with the last axis fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct Signal {
    pub origin: Vec<f64>,
    pub dx: f64,
    pub shape: Vec<usize>,
    pub values: Vec<Complex64>,
}

impl Signal {
    pub fn sample_1d(x0: f64, dx: f64, n: usize, f: impl Fn(f64) -> Complex64) -> Self {
        Self {
            origin: vec![x0],
            dx,
            shape: vec![n],
            values: (0..n).map(|i| f(x0 + i as f64 * dx)).collect(),
        }
    }

    pub fn sample_2d(origin: [f64; 2], dx: f64, n: [usize; 2], f: impl Fn(f64, f64) -> Complex64) -> Self {
        let mut values = Vec::with_capacity(n[0] * n[1]);
        for i in 0..n[0] {
            for j in 0..n[1] {
                values.push(f(origin[0] + i as f64 * dx, origin[1] + j as f64 * dx));
            }
        }
        Self {
            origin: origin.to_vec(),
            dx,
            shape: n.to_vec(),
            values,
        }
    }

    /// Samples `(x, value)` on a uniform grid, as read from CSV.
    pub fn from_pairs(xs: &[f64], vs: &[f64]) -> Result<Self> {
        if xs.len() < 2 || xs.len() != vs.len() {
            return Err(Error::Config("signal needs at least two (x, value) rows".into()));
        }
        let dx = xs[1] - xs[0];
        if dx <= 0.0 || xs.windows(2).any(|w| ((w[1] - w[0]) - dx).abs() > 1e-9 * dx.max(1e-300)) {
            return Err(Error::Config("signal samples must be uniformly spaced and increasing".into()));
        }
        Ok(Self {
            origin: vec![xs[0]],
            dx,
            shape: vec![xs.len()],
            values: vs.iter().map(|v| Complex64::new(*v, 0.0)).collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    fn point(&self, flat: usize) -> [f64; 2] {
        if self.dim() == 1 {
            [self.origin[0] + flat as f64 * self.dx, 0.0]
        } else {
            let (i, j) = (flat / self.shape[1], flat % self.shape[1]);
            [self.origin[0] + i as f64 * self.dx, self.origin[1] + j as f64 * self.dx]
        }
    }

    /// Trapezoid weight of a grid point (without the `dx^d` factor).
    fn weight(&self, flat: usize) -> f64 {
        let edge = |i: usize, n: usize| if i == 0 || i + 1 == n { 0.5 } else { 1.0 };
        if self.dim() == 1 {
            edge(flat, self.shape[0])
        } else {
            edge(flat / self.shape[1], self.shape[0]) * edge(flat % self.shape[1], self.shape[1])
        }
    }

    fn covers(&self, lo: &[f64], hi: &[f64]) -> bool {
        (0..self.dim()).all(|a| {
            let end = self.origin[a] + (self.shape[a] - 1) as f64 * self.dx;
            self.origin[a] <= lo[a] + 1e-12 && end >= hi[a] - 1e-12
        })
    }
}

/// Named test signals on the line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    Gaussian,
    Lorentzian,
    CosLinear,
    RampSquared,
    Abs,
    AbsCubed,
    PlaneWave { omega: f64 },
    ShiftedAbs { at: f64 },
    Constant { c: f64 },
}

impl Family {
    pub fn eval(&self, x: f64) -> Complex64 {
        let r = |v: f64| Complex64::new(v, 0.0);
        match self {
            Family::Gaussian => r((-x * x).exp()),
            Family::Lorentzian => r(1.0 / (1.0 + x * x)),
            Family::CosLinear => r((3.0 * x).cos() + 0.5 * x),
            Family::RampSquared => r(x.max(0.0).powi(2)),
            Family::Abs => r(x.abs()),
            Family::AbsCubed => r(x.abs().powi(3)),
            Family::PlaneWave { omega } => Complex64::from_polar(1.0, omega * x),
            Family::ShiftedAbs { at } => r((x - at).abs()),
            Family::Constant { c } => r(*c),
        }
    }

    /// Whether the family is real-analytic at the origin.
    pub fn analytic_at_origin(&self) -> bool {
        !matches!(self, Family::RampSquared | Family::Abs | Family::AbsCubed)
            && !matches!(self, Family::ShiftedAbs { at } if *at == 0.0)
    }
}

/// Smooth radial cutoff: 1 inside `inner`, 0 outside `outer`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cutoff {
    pub center: Vec<f64>,
    pub inner: f64,
    pub outer: f64,
}

impl Cutoff {
    pub fn eval(&self, x: &[f64]) -> f64 {
        let r = x.iter().zip(&self.center).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        if r <= self.inner {
            return 1.0;
        }
        if r >= self.outer {
            return 0.0;
        }
        let s = (self.outer - r) / (self.outer - self.inner);
        let e = |v: f64| if v <= 0.0 { 0.0 } else { (-1.0 / v).exp() };
        e(s) / (e(s) + e(1.0 - s))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransformSpec {
    /// Row-major `d x d` symmetric positive-definite matrix of `q`.
    pub q: Vec<f64>,
    pub chi: Option<Cutoff>,
    pub lambdas: Vec<f64>,
}

impl TransformSpec {
    pub fn dim(&self) -> usize {
        (self.q.len() as f64).sqrt().round() as usize
    }

    pub fn q_matrix(&self) -> Result<DMatrix<f64>> {
        let d = self.dim();
        if d * d != self.q.len() || !(1..=2).contains(&d) {
            return Err(Error::Config("q must be a 1x1 or 2x2 matrix".into()));
        }
        let m = DMatrix::from_row_slice(d, d, &self.q);
        if (&m - m.transpose()).amax() > 1e-14 * m.amax() {
            return Err(Error::Config("q must be symmetric".into()));
        }
        Cholesky::new(m.clone()).ok_or_else(|| Error::Config("q must be positive definite".into()))?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        self.q_matrix()?;
        if let Some(c) = &self.chi {
            if !(c.inner >= 0.0 && c.inner < c.outer) || c.center.len() != self.dim() {
                return Err(Error::Config("cutoff needs 0 <= inner < outer and a center in R^d".into()));
            }
        }
        if self.lambdas.is_empty() || self.lambdas.windows(2).any(|w| w[1] <= w[0]) || self.lambdas[0] <= 0.0 {
            return Err(Error::Config("lambdas must be positive and increasing".into()));
        }
        Ok(())
    }
}

/// Transform split as `T h = e^{ln_factor} * scaled` with
/// `ln_factor = lambda q(Im y)`, so large growth factors never overflow.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransformValue {
    pub scaled: Complex64,
    pub ln_factor: f64,
}

impl TransformValue {
    pub fn value(&self) -> Complex64 {
        self.scaled * self.ln_factor.exp()
    }
}

fn quad(q: &DMatrix<f64>, a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        for j in 0..b.len() {
            s += a[i] * q[(i, j)] * b[j];
        }
    }
    s
}

pub fn gaussian_transform_parts(h: &Signal, spec: &TransformSpec, y: &[Complex64], lambda: f64) -> Result<TransformValue> {
    let q = spec.q_matrix()?;
    let d = q.nrows();
    if h.dim() != d || y.len() != d {
        return Err(Error::Config(format!("signal, q and y must share dimension {d}")));
    }
    let qmax = q.symmetric_eigenvalues().max();
    let need = 1.0 / (8.0 * (lambda * qmax).sqrt());
    if h.dx > need {
        return Err(Error::Resolution { have: h.dx, need });
    }
    if let Some(c) = &spec.chi {
        let lo: Vec<f64> = c.center.iter().map(|x| x - c.outer).collect();
        let hi: Vec<f64> = c.center.iter().map(|x| x + c.outer).collect();
        if !h.covers(&lo, &hi) {
            return Err(Error::Config("signal grid does not cover the cutoff support".into()));
        }
    }
    let re: Vec<f64> = y.iter().map(|z| z.re).collect();
    let im: Vec<f64> = y.iter().map(|z| z.im).collect();
    let mut acc = Complex64::default();
    let mut w = [0.0; 2];
    for (flat, hv) in h.values.iter().enumerate() {
        let x = h.point(flat);
        let chi = spec.chi.as_ref().map_or(1.0, |c| c.eval(&x[..d]));
        if chi == 0.0 {
            continue;
        }
        for a in 0..d {
            w[a] = x[a] - re[a];
        }
        // q(w - i b) = q(w) - 2i <Qw, b> - q(b)
        let phase = 2.0 * lambda * quad(&q, &w[..d], &im);
        let amp = (-lambda * quad(&q, &w[..d], &w[..d])).exp();
        acc += hv * Complex64::from_polar(amp * chi * h.weight(flat), phase);
    }
    let scaled = acc * h.dx.powi(d as i32) * (lambda / PI).powf(0.5 * d as f64);
    Ok(TransformValue {
        scaled,
        ln_factor: lambda * quad(&q, &im, &im),
    })
}

pub fn gaussian_transform(h: &Signal, spec: &TransformSpec, y: &[Complex64], lambda: f64) -> Result<Complex64> {
    Ok(gaussian_transform_parts(h, spec, y, lambda)?.value())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum DecayVerdict {
    AnalyticDirection,
    NotDetected,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecaySettings {
    pub t: f64,
    pub rho: f64,
    /// Real offset `y' = Re y - xbar`; must satisfy `|y'| <= rho t`.
    pub offset: Vec<f64>,
}

/// `2^{k/2}` for `k = 12..=20`, i.e. `64..=1024` in half-octave steps.
pub fn default_lambdas() -> Vec<f64> {
    (12..=20).map(|k| 2f64.powf(k as f64 / 2.0)).collect()
}

impl Default for DecaySettings {
    fn default() -> Self {
        Self {
            t: 0.18,
            rho: 0.05,
            offset: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DecayReport {
    pub xi: Vec<f64>,
    pub xbar: Vec<f64>,
    pub y_re: Vec<f64>,
    pub y_im: Vec<f64>,
    pub q_im_y: f64,
    pub lambdas: Vec<f64>,
    /// `ln |T h(y, lambda)| - lambda q(Im y)`.
    pub log_values: Vec<f64>,
    pub epsilon1: f64,
    pub power: f64,
    pub decay_margin: f64,
    pub underflow: bool,
    pub verdict: DecayVerdict,
}

/// Fits `ln|T h| - lambda q(Im y) = c + p ln lambda - eps1 lambda` along
/// `y = xbar + y' - i t Q^{-1} xi`; the direction is analytic when
/// `eps1 >= 0.05 q(Im y)`.
pub fn decay_classify(
    h: &Signal,
    xbar: &[f64],
    xi: &[f64],
    spec: &TransformSpec,
    st: &DecaySettings,
    exec: Exec,
) -> Result<DecayReport> {
    spec.validate()?;
    let q = spec.q_matrix()?;
    let d = q.nrows();
    if xbar.len() != d || xi.len() != d {
        return Err(Error::Config(format!("xbar and xi must have {d} entries")));
    }
    if xi.iter().all(|v| *v == 0.0) {
        return Err(Error::Config("xi must be nonzero".into()));
    }
    if !(st.t > 0.0 && st.rho >= 0.0) {
        return Err(Error::Config("t must be positive and rho nonnegative".into()));
    }
    let offset = if st.offset.is_empty() { vec![0.0; d] } else { st.offset.clone() };
    if offset.len() != d {
        return Err(Error::Config(format!("offset must have {d} entries")));
    }
    let off_norm = offset.iter().map(|v| v * v).sum::<f64>().sqrt();
    if off_norm > st.rho * st.t {
        return Err(Error::Precondition(format!(
            "|y'| = {off_norm} exceeds rho t = {}",
            st.rho * st.t
        )));
    }
    let qinv = q.clone().try_inverse().ok_or_else(|| Error::Config("q is singular".into()))?;
    let a = &qinv * DVector::from_column_slice(xi);
    let y: Vec<Complex64> = (0..d)
        .map(|i| Complex64::new(xbar[i] + offset[i], -st.t * a[i]))
        .collect();
    let y_im: Vec<f64> = y.iter().map(|z| z.im).collect();
    let q_im_y = quad(&q, &y_im, &y_im);
    let values = exec.map(&spec.lambdas, |&l| gaussian_transform_parts(h, spec, &y, l));
    let mut lams = Vec::new();
    let mut logs = Vec::new();
    for (l, v) in spec.lambdas.iter().zip(values) {
        let n = v?.scaled.norm();
        if n > 0.0 {
            lams.push(*l);
            logs.push(n.ln());
        }
    }
    let decay_margin = 0.05 * q_im_y;
    let (epsilon1, power, underflow) = if lams.len() < 3 {
        (f64::INFINITY, f64::NAN, true)
    } else {
        let (rate, p, _) =
            fit::exp_rate_with_power(&lams, &logs).ok_or_else(|| Error::Evaluation("decay fit is singular".into()))?;
        (rate, p, false)
    };
    Ok(DecayReport {
        xi: xi.to_vec(),
        xbar: xbar.to_vec(),
        y_re: y.iter().map(|z| z.re).collect(),
        y_im,
        q_im_y,
        lambdas: lams,
        log_values: logs,
        epsilon1,
        power,
        decay_margin,
        underflow,
        verdict: if epsilon1 >= decay_margin {
            DecayVerdict::AnalyticDirection
        } else {
            DecayVerdict::NotDetected
        },
    })
}

/// `min eps1` over analytic entries minus `max eps1` over the rest.
pub fn separation(analytic: &[&DecayReport], other: &[&DecayReport]) -> f64 {
    let lo = analytic.iter().map(|r| r.epsilon1).fold(f64::INFINITY, f64::min);
    let hi = other.iter().map(|r| r.epsilon1).fold(f64::NEG_INFINITY, f64::max);
    lo - hi
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSettings {
    pub x_max: f64,
    /// Points in `x` on `[0, x_max]` for the solution grid.
    pub nx: usize,
    /// Required one-sided decay rate is `margin * x_max`.
    pub margin: f64,
    /// Relative level below which Fourier coefficients are treated as zero.
    pub floor: f64,
}

impl Default for ModelSettings {
    fn default() -> Self {
        Self {
            x_max: 0.5,
            nx: 256,
            margin: 1.25,
            floor: 1e-13,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Solvability {
    Solvable,
    NoSolution,
}

#[derive(Clone, Debug, Serialize)]
pub struct ModelOutcome {
    pub verdict: Solvability,
    /// Fitted exponential decay rate of the positive-frequency coefficients
    /// of `1/h`; infinite when they vanish below the floor.
    pub decay_rate: f64,
    pub decay_power: f64,
    pub needed_rate: f64,
    /// `(omega, |coefficient|)` for positive frequencies above the floor.
    pub profile: Vec<(f64, f64)>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// `u[i * ny + j]` at `(x_i, y_j)`; empty without a solution.
    pub u: Vec<Complex64>,
    /// `sup |(d_x + i d_y) u - u^2|` on interior points, fourth-order
    /// differences.
    pub residual: f64,
}

/// `(d_x + i d_y) u = u^2` on `0 <= x <= x_max` with `u(0, y) = h(y)`, `h`
/// sampled at `y_j = y0 + j L / N` and extended periodically.
///
/// `1/u + zbar/2` is holomorphic, so `1/u = G(z) - x` where `G` is the
/// holomorphic extension of `1/h` from the line `x = 0`. A coefficient at
/// frequency `omega` grows like `e^{omega x}`, so the data must have
/// positive-frequency decay faster than `e^{-omega x_max}`.
pub fn model_cr_solve(h: &[Complex64], y0: f64, period: f64, st: &ModelSettings, exec: Exec) -> Result<ModelOutcome> {
    let n = h.len();
    if n < 8 || !n.is_power_of_two() {
        return Err(Error::Config("boundary samples must be a power of two >= 8".into()));
    }
    if !(st.x_max > 0.0 && st.nx >= 8 && period > 0.0) {
        return Err(Error::Config("x_max, period must be positive and nx >= 8".into()));
    }
    let hmax = h.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if h.iter().any(|z| z.norm() <= 1e-12 * hmax) || hmax == 0.0 {
        return Err(Error::Precondition("boundary data vanishes".into()));
    }
    let mut coef: Vec<Complex64> = h.iter().map(|z| 1.0 / z).collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(n).process(&mut coef);
    for c in &mut coef {
        *c /= n as f64;
    }
    // shift so that coef[m] multiplies e^{i omega_m (y - y0)}
    let omega = |m: usize| -> f64 {
        let k = if m <= n / 2 { m as f64 } else { m as f64 - n as f64 };
        2.0 * PI * k / period
    };
    let cmax = coef.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let profile: Vec<(f64, f64)> = (1..n / 2)
        .map(|m| (omega(m), coef[m].norm()))
        .filter(|(_, a)| *a > st.floor * cmax)
        .collect();
    let (decay_rate, decay_power) = if profile.len() < 3 {
        (f64::INFINITY, f64::NAN)
    } else {
        let xs: Vec<f64> = profile.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = profile.iter().map(|p| p.1.ln()).collect();
        let (r, p, _) = fit::exp_rate_with_power(&xs, &ys).ok_or_else(|| Error::Evaluation("decay fit is singular".into()))?;
        (r, p)
    };
    // round-off above the floor would be amplified by e^{omega x}
    for m in 1..=n / 2 {
        if coef[m].norm() <= st.floor * cmax {
            coef[m] = Complex64::default();
        }
    }
    let needed_rate = st.margin * st.x_max;
    let ys: Vec<f64> = (0..n).map(|j| y0 + j as f64 * period / n as f64).collect();
    let xs: Vec<f64> = (0..st.nx).map(|i| st.x_max * i as f64 / (st.nx - 1) as f64).collect();
    let mut out = ModelOutcome {
        verdict: Solvability::NoSolution,
        decay_rate,
        decay_power,
        needed_rate,
        profile,
        x: xs.clone(),
        y: ys,
        u: Vec::new(),
        residual: f64::NAN,
    };
    if decay_rate < needed_rate {
        return Ok(out);
    }
    let inverse = planner.plan_fft_inverse(n);
    let rows = exec.map(&xs, |&x| -> Result<Vec<Complex64>> {
        let mut g: Vec<Complex64> = (0..n).map(|m| coef[m] * (omega(m) * x).exp()).collect();
        inverse.process(&mut g);
        g.iter()
            .map(|gv| {
                let den = gv - x;
                if den.norm() < 1e-12 {
                    Err(Error::Divergence(format!("1/u vanishes at x = {x}")))
                } else {
                    Ok(1.0 / den)
                }
            })
            .collect()
    });
    let mut u = Vec::with_capacity(st.nx * n);
    for r in rows {
        u.extend(r?);
    }
    out.residual = model_residual(&u, st.nx, n, st.x_max / (st.nx - 1) as f64, period / n as f64);
    out.u = u;
    out.verdict = Solvability::Solvable;
    Ok(out)
}

/// Fourth-order central differences; periodic in `y`, interior in `x`.
pub fn model_residual(u: &[Complex64], nx: usize, ny: usize, hx: f64, hy: f64) -> f64 {
    let at = |i: usize, j: usize| u[i * ny + j];
    let d4 = |a: Complex64, b: Complex64, c: Complex64, d: Complex64, h: f64| (a - 8.0 * b + 8.0 * c - d) / (12.0 * h);
    let mut worst = 0.0f64;
    for i in 2..nx - 2 {
        for j in 0..ny {
            let jm = |k: usize| (j + ny - k) % ny;
            let jp = |k: usize| (j + k) % ny;
            let ux = d4(at(i - 2, j), at(i - 1, j), at(i + 1, j), at(i + 2, j), hx);
            let uy = d4(at(i, jm(2)), at(i, jm(1)), at(i, jp(1)), at(i, jp(2)), hy);
            let r = ux + Complex64::i() * uy - at(i, j) * at(i, j);
            worst = worst.max(r.norm());
        }
    }
    worst
}
