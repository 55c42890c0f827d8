//! Hadamard-instability experiment for nonhyperbolic first-order systems:
//! oscillating data `eps^M Re(e^{i x xibar / eps} r)`, the fast profile
//! equation `u_s = Abar u_theta + G(u)`, and the Hoelder ratio on lens
//! domains `{t > 0, |x - xbar|^2 + delta t < r^2}`.
//!
//! Profiles are taken independent of the slow variables `y = (t, x - xbar)`,
//! which is exact for autonomous systems since the data depend on `theta`
//! only.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::fit;
use crate::series::{FtSeries, ProfileOperator};
use crate::symbol::{spectrum_classify, to_complex, PolySystem, Verdict};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HoelderInputs {
    pub m: f64,
    pub alpha: f64,
    pub d: f64,
    pub delta: f64,
    pub r0: f64,
}

impl Default for HoelderInputs {
    fn default() -> Self {
        Self {
            m: 1.0,
            alpha: 1.0,
            d: 1.0,
            delta: 0.5,
            r0: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct InstabilityParams {
    pub eps: f64,
    #[serde(rename = "M")]
    pub big_m: f64,
    pub beta: f64,
    pub gamma0: f64,
    pub kappa1: f64,
    pub gamma: f64,
    pub kappa: f64,
    #[serde(rename = "R")]
    pub big_r: f64,
    pub rho: f64,
    pub sigma: f64,
    pub sbar: f64,
    pub sbar_from_kappa: bool,
    pub hoelder: HoelderInputs,
    pub alpha_prime: f64,
    pub t_eps: f64,
    pub r_eps: f64,
}

pub fn make_params(
    eps: f64,
    big_m: f64,
    beta: f64,
    gamma0: f64,
    hoelder: HoelderInputs,
) -> Result<InstabilityParams> {
    let bad = |m: String| Err(Error::Infeasible(m));
    if !(eps > 0.0 && eps < 1.0) {
        return bad(format!("eps = {eps} must lie in (0, 1)"));
    }
    if !(big_m >= 1.0) || !(beta > 0.0) || !(gamma0 > 0.0) {
        return bad("need M >= 1, beta > 0, gamma0 > 0".into());
    }
    let HoelderInputs { m, alpha, d, delta, r0 } = hoelder;
    if !(alpha > 0.0 && alpha <= 1.0) || !(delta > 0.0) || !(r0 > 0.0) || !(d >= 1.0) || m < 0.0 {
        return bad("need alpha in (0, 1], delta > 0, r0 > 0, d >= 1, m >= 0".into());
    }
    let kappa1 = big_m * eps.ln().abs();
    let gamma = (1.0 + beta) * gamma0;
    let kappa = (1.0 - beta) * kappa1;
    let big_r = eps.powf(-beta * big_m);
    let rho = big_r * big_r;
    let sigma = (1.0 - beta) / (1.0 + beta);
    let (s_k, s_r) = (kappa / gamma, 1.0 / (eps * rho));
    let sbar = s_k.min(s_r);
    let alpha_prime = (big_m - m) / big_m * alpha - (1.0 + d) / (2.0 * big_m);
    if !(alpha_prime > 0.0) {
        return bad(format!("alpha' = {alpha_prime} must be > 0"));
    }
    if !(1.0 - alpha_prime < sigma) {
        return bad(format!("1 - alpha' = {} must be < sigma = {sigma}", 1.0 - alpha_prime));
    }
    if !(2.0 * big_m * beta < 1.0) {
        return bad(format!("2 M beta = {} must be < 1", 2.0 * big_m * beta));
    }
    let t_eps = eps * sbar;
    Ok(InstabilityParams {
        eps,
        big_m,
        beta,
        gamma0,
        kappa1,
        gamma,
        kappa,
        big_r,
        rho,
        sigma,
        sbar,
        sbar_from_kappa: s_k <= s_r,
        hoelder,
        alpha_prime,
        t_eps,
        r_eps: (t_eps / delta).sqrt(),
    })
}

impl InstabilityParams {
    /// `M (1 - sigma - alpha')`.
    pub fn predicted_exponent(&self) -> f64 {
        self.big_m * (1.0 - self.sigma - self.alpha_prime)
    }

    /// The cube `{t_eps - eps <= t <= t_eps, |x| <= eps}` lies inside the
    /// lens of radius `r_eps`.
    pub fn cube_in_lens(&self) -> bool {
        let e = self.eps;
        self.t_eps - e >= 0.0
            && e * e + self.hoelder.delta * self.t_eps < self.r_eps * self.r_eps
    }
}

/// Base point data for a system at `u = 0` along direction `xibar`: the
/// eigenpair with `Im lambda = -gamma0`, whose mode `e^{i theta}` grows
/// like `e^{s gamma0}` under `e^{s Abar d_theta}`.
#[derive(Clone, Debug)]
pub struct GrowingMode {
    pub abar: DMatrix<f64>,
    pub gamma0: f64,
    pub lambda: Complex64,
    pub r: DVector<Complex64>,
    /// `sigma_min([r, conj r]) / (2 sqrt 2)`, so `|f| >= 2 c e^{s gamma0 - kappa1}`.
    pub c: f64,
}

pub fn growing_mode(abar: &DMatrix<f64>) -> Result<GrowingMode> {
    let spec = spectrum_classify(abar)?;
    if spec.verdict == Verdict::Hyperbolic {
        return Err(Error::Precondition("symbol is hyperbolic at the base point".into()));
    }
    let lambda = spec.lambda0.unwrap().conj();
    let r = spec.rbar.unwrap().map(|z| z.conj());
    Ok(GrowingMode {
        abar: abar.clone(),
        gamma0: spec.gamma0,
        lambda,
        c: pair_constant(&r),
        r,
    })
}

fn pair_constant(r: &DVector<Complex64>) -> f64 {
    let n = r.len();
    let mut m = DMatrix::<Complex64>::zeros(n, 2);
    m.set_column(0, r);
    m.set_column(1, &r.map(|z| z.conj()));
    let sv = m.singular_values();
    sv.iter().copied().fold(f64::INFINITY, f64::min) / (2.0 * 2f64.sqrt())
}

/// `eps^M Re(e^{i s lambda + i theta} r)`.
pub fn linear_profile(
    p: &InstabilityParams,
    s: f64,
    theta: f64,
    lambda: Complex64,
    r: &DVector<Complex64>,
) -> DVector<f64> {
    let phase = (Complex64::new(0.0, s) * lambda + Complex64::new(0.0, theta)).exp();
    let amp = (-p.kappa1).exp();
    r.map(|z| amp * (phase * z).re)
}

/// Data `eps^M Re(e^{i x xibar / eps} r)` on a grid of `B_{r0}` (one space
/// dimension) and its `H^m(B_{r0})` size
/// `eps^M (1 + (xibar/eps)^2)^{m/2} ||Re(e^{i k x} r)||_{L^2(-r0, r0)}`,
/// `||Re(e^{ikx} r)||^2 = r0 |r|^2 + Re(r.r) sin(2 k r0) / (2k)`.
#[derive(Clone, Debug, Serialize)]
pub struct OscillatoryData {
    pub x: Vec<f64>,
    pub h: Vec<Vec<f64>>,
    pub hm_norm: f64,
}

pub fn hm_norm(p: &InstabilityParams, xibar: f64, r: &DVector<Complex64>) -> f64 {
    let k = xibar / p.eps;
    let r0 = p.hoelder.r0;
    let rr: Complex64 = r.iter().map(|z| z * z).sum();
    let l2sq = r0 * r.norm_squared() + rr.re * (2.0 * k * r0).sin() / (2.0 * k);
    (-p.kappa1).exp() * (1.0 + k * k).powf(0.5 * p.hoelder.m) * l2sq.sqrt()
}

pub fn oscillatory_data(
    p: &InstabilityParams,
    xibar: f64,
    r: &DVector<Complex64>,
    npts: usize,
) -> OscillatoryData {
    let r0 = p.hoelder.r0;
    let x: Vec<f64> = (0..npts)
        .map(|j| -r0 + 2.0 * r0 * (j as f64 + 0.5) / npts as f64)
        .collect();
    let amp = (-p.kappa1).exp();
    let h = x
        .iter()
        .map(|&x| {
            let ph = Complex64::from_polar(1.0, x * xibar / p.eps);
            r.iter().map(|z| amp * (ph * z).re).collect()
        })
        .collect();
    OscillatoryData {
        x,
        h,
        hm_norm: hm_norm(p, xibar, r),
    }
}

/// Operator norm induced by the max norm (largest absolute row sum).
pub fn norm_inf(m: &DMatrix<Complex64>) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `exp(i tau Abar - gamma tau I)`, scaled before exponentiation so the
/// result never overflows when `gamma > gamma0`.
fn damped_exp(abar: &DMatrix<f64>, tau: f64, gamma: f64) -> DMatrix<Complex64> {
    let n = abar.nrows();
    let m = to_complex(abar) * Complex64::new(0.0, tau)
        - DMatrix::<Complex64>::identity(n, n) * Complex64::new(gamma * tau.abs(), 0.0);
    m.exp()
}

/// `max_{|n| <= nmax, s in grid} ||e^{i n s Abar}|| e^{-|n| gamma s}` in the
/// max-norm operator norm, over an `s`-grid of `ns + 1` points on
/// `[0, smax]`.
pub fn semigroup_bound_check(
    abar: &DMatrix<f64>,
    gamma: f64,
    nmax: usize,
    smax: f64,
    ns: usize,
    exec: Exec,
) -> Result<f64> {
    let g0 = spectrum_classify(abar)?.gamma0;
    if !(gamma > g0) {
        return Err(Error::Precondition(format!("gamma = {gamma} must exceed gamma0 = {g0}")));
    }
    let rows = exec.map_range(2 * nmax + 1, |i| {
        let n = i as f64 - nmax as f64;
        (0..=ns)
            .map(|j| {
                let s = smax * j as f64 / ns as f64;
                norm_inf(&damped_exp(abar, n * s, gamma))
            })
            .fold(0.0, f64::max)
    });
    Ok(rows.into_iter().fold(0.0, f64::max))
}

#[derive(Clone, Debug)]
pub struct ProfileTrajectory {
    pub sgrid: Vec<f64>,
    /// `fields[i][c]`: component `c` at `sgrid[i]`.
    pub fields: Vec<Vec<FtSeries>>,
    /// Last finite `s` when the run overflowed.
    pub blow_up: Option<f64>,
}

impl ProfileTrajectory {
    pub fn value(&self, i: usize, theta: f64) -> Vec<f64> {
        self.fields[i].iter().map(|c| c.eval_theta(theta).re).collect()
    }
}

/// Fourier data of `eps^M Re(e^{i theta} r)` with `|n| <= k`.
pub fn initial_profile(p: &InstabilityParams, r: &DVector<Complex64>, k: usize, t: usize) -> Vec<FtSeries> {
    let amp = 0.5 * (-p.kappa1).exp();
    r.iter()
        .map(|z| {
            let mut s = FtSeries::zeros(k, t);
            s.set(1, 0, z * amp);
            s.set(-1, 0, z.conj() * amp);
            s
        })
        .collect()
}

/// Per-mode propagators `exp(i n h Abar)` for `|n| <= k`.
pub fn mode_propagators(abar: &DMatrix<f64>, k: usize, h: f64) -> Vec<DMatrix<Complex64>> {
    (-(k as i64)..=k as i64)
        .map(|n| (to_complex(abar) * Complex64::new(0.0, n as f64 * h)).exp())
        .collect()
}

/// Apply per-mode matrices to a vector-valued series.
pub fn apply_modewise(props: &[DMatrix<Complex64>], u: &[FtSeries]) -> Vec<FtSeries> {
    let mut out: Vec<FtSeries> = u.iter().map(|c| FtSeries::zeros(c.k, c.t)).collect();
    let (k, t) = (u[0].k as i64, u[0].t);
    for n in -k..=k {
        let e = &props[(n + k) as usize];
        for j in 0..=t {
            let i = u[0].idx(n, j);
            for (r, o) in out.iter_mut().enumerate() {
                let mut acc = Complex64::default();
                for (c, uc) in u.iter().enumerate() {
                    acc += e[(r, c)] * uc.c[i];
                }
                o.c[i] = acc;
            }
        }
    }
    out
}

fn combine(a: &[FtSeries], b: &[FtSeries], w: f64) -> Vec<FtSeries> {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let mut z = x.clone();
            z.axpy(w, y);
            z
        })
        .collect()
}

/// Integrating-factor RK4 for `u_s = Abar u_theta + G(u)`: the linear part
/// is applied exactly per mode, RK4 acts on the remainder. Records every
/// `record_every` steps and at the end.
pub fn solve_profile(
    op: &ProfileOperator,
    u0: Vec<FtSeries>,
    s_end: f64,
    ds: f64,
    record_every: usize,
) -> Result<ProfileTrajectory> {
    let k = u0[0].k;
    let cfl = ds * k as f64 * op.abar.norm();
    if cfl > 0.5 {
        return Err(Error::Config(format!("ds K |Abar| = {cfl:.3} exceeds 0.5; reduce ds")));
    }
    if record_every == 0 {
        return Err(Error::Config("record_every must be >= 1".into()));
    }
    let (nsteps, h) = crate::ode::step_count(s_end, ds);
    let half = mode_propagators(&op.abar, k, 0.5 * h);
    let full = mode_propagators(&op.abar, k, h);
    let mut traj = ProfileTrajectory {
        sgrid: vec![0.0],
        fields: vec![u0.clone()],
        blow_up: None,
    };
    let mut u = u0;
    let linear_only = op.is_linear_free() && (u[0].t == 0 || op.eps == 0.0);
    for step in 0..nsteps {
        let next = if linear_only {
            apply_modewise(&full, &u)
        } else {
            // Lawson RK4 in v = e^{-s L} u
            let k1 = op.apply(&u);
            let eu = apply_modewise(&half, &u);
            let ek1 = apply_modewise(&half, &k1);
            let k2 = op.apply(&combine(&eu, &ek1, 0.5 * h));
            let k3 = op.apply(&combine(&eu, &k2, 0.5 * h));
            let eu3 = apply_modewise(&half, &combine(&eu, &k3, h));
            let k4 = op.apply(&eu3);
            let mid: Vec<FtSeries> = (0..u.len())
                .map(|c| {
                    let mut z = ek1[c].clone();
                    z.axpy(2.0, &k2[c]);
                    z.axpy(2.0, &k3[c]);
                    z
                })
                .collect();
            let a = combine(&eu, &mid, h / 6.0);
            combine(&apply_modewise(&half, &a), &k4, h / 6.0)
        };
        if !next.iter().all(|c| c.is_finite()) {
            traj.blow_up = Some(step as f64 * h);
            break;
        }
        u = next;
        if (step + 1) % record_every == 0 || step + 1 == nsteps {
            traj.sgrid.push(if step + 1 == nsteps { s_end } else { (step + 1) as f64 * h });
            traj.fields.push(u.clone());
        }
    }
    Ok(traj)
}

#[derive(Clone, Debug, Serialize)]
pub struct HoelderRow {
    pub eps: f64,
    pub kappa1: f64,
    pub sbar: f64,
    pub t_eps: f64,
    pub r_eps: f64,
    pub l2_norm: f64,
    pub hm_norm: f64,
    pub ratio: f64,
    pub predicted_exponent: f64,
    pub fitted_slope: f64,
    pub truncated_flag: bool,
    pub cube_in_lens: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct HoelderReport {
    pub rows: Vec<HoelderRow>,
    pub predicted_exponent: f64,
    pub fitted_slope: f64,
    pub strictly_increasing: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepSettings {
    #[serde(rename = "M")]
    pub big_m: f64,
    pub beta: f64,
    #[serde(flatten)]
    pub hoelder: HoelderInputs,
    /// Fourier truncation `|n| <= K`.
    #[serde(rename = "K")]
    pub k: usize,
    /// Quadrature rows in `s` over `[0, sbar]`.
    pub s_rows: usize,
    /// Quadrature points per `2 pi` in `theta`.
    pub theta_per_period: usize,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self {
            big_m: 3.0,
            beta: 0.1,
            hoelder: HoelderInputs::default(),
            k: 32,
            s_rows: 2000,
            theta_per_period: 16,
        }
    }
}

/// `||u_eps||_{L^2}` over the part of the lens with `t <= t_eps`
/// (`t = eps s`, `x = eps theta / xibar`), midpoint rule in `(s, theta)`.
/// `traj` must hold values at the row midpoints `s_{i+1/2}` at odd indices.
fn lens_norm(p: &InstabilityParams, xibar: f64, traj: &ProfileTrajectory, rows: usize, per_period: usize, exec: Exec) -> f64 {
    let hs = p.sbar / rows as f64;
    let usable = (traj.fields.len() - 1) / 2;
    let delta = p.hoelder.delta;
    let r2 = p.r_eps * p.r_eps;
    let row_sums = exec.map_range(rows.min(usable), |i| {
        let idx = 2 * i + 1;
        let s = traj.sgrid[idx];
        let t = p.eps * s;
        let half_x = (r2 - delta * t).max(0.0).sqrt();
        let big_theta = half_x * xibar / p.eps;
        let npts = ((2.0 * big_theta) / (2.0 * std::f64::consts::PI) * per_period as f64).ceil().max(1.0) as usize;
        let h = 2.0 * big_theta / npts as f64;
        let f = &traj.fields[idx];
        // only nonzero modes contribute
        let live: Vec<(i64, Vec<Complex64>)> = f[0]
            .modes()
            .filter_map(|n| {
                let cs: Vec<Complex64> = f.iter().map(|c| c.get(n, 0)).collect();
                cs.iter().any(|z| z.norm() > 0.0).then_some((n, cs))
            })
            .collect();
        let mut acc = 0.0;
        for j in 0..npts {
            let th = -big_theta + (j as f64 + 0.5) * h;
            let mut vals = vec![0.0; f.len()];
            for (n, cs) in &live {
                let e = Complex64::from_polar(1.0, *n as f64 * th);
                for (v, z) in vals.iter_mut().zip(cs) {
                    *v += (e * z).re;
                }
            }
            acc += vals.iter().map(|v| v * v).sum::<f64>();
        }
        acc * h * hs
    });
    // dt dx = eps^2 / xibar ds dtheta
    (row_sums.iter().sum::<f64>() * p.eps * p.eps / xibar).sqrt()
}

/// One row of the Hoelder experiment at scale `eps`.
pub fn hoelder_row(sys: &PolySystem, xibar: f64, eps: f64, st: &SweepSettings, exec: Exec) -> Result<HoelderRow> {
    if sys.d != 1 {
        return Err(Error::Config("the Hoelder sweep uses one space dimension".into()));
    }
    let op0 = ProfileOperator::new(sys, &[xibar], eps)?;
    let gm = growing_mode(&op0.abar)?;
    let p = make_params(eps, st.big_m, st.beta, gm.gamma0, st.hoelder)?;
    let u0 = initial_profile(&p, &gm.r, st.k, 0);
    let ds = p.sbar / (2 * st.s_rows) as f64;
    let traj = solve_profile(&op0, u0, p.sbar, ds, 1)?;
    let l2 = lens_norm(&p, xibar, &traj, st.s_rows, st.theta_per_period, exec);
    let hm = hm_norm(&p, xibar, &gm.r);
    Ok(HoelderRow {
        eps,
        kappa1: p.kappa1,
        sbar: p.sbar,
        t_eps: p.t_eps,
        r_eps: p.r_eps,
        l2_norm: l2,
        hm_norm: hm,
        ratio: l2 / hm.powf(p.hoelder.alpha),
        predicted_exponent: p.predicted_exponent(),
        fitted_slope: f64::NAN,
        truncated_flag: traj.blow_up.is_some(),
        cube_in_lens: p.cube_in_lens(),
    })
}

/// Rows for each `eps`, the fitted slope of `ln ratio` against `ln eps`
/// and the predicted exponent.
pub fn hoelder_ratio_sweep(
    sys: &PolySystem,
    xibar: f64,
    eps_list: &[f64],
    st: &SweepSettings,
    exec: Exec,
) -> Result<HoelderReport> {
    let rows: Vec<Result<HoelderRow>> = eps_list
        .iter()
        .map(|&e| hoelder_row(sys, xibar, e, st, exec))
        .collect();
    let mut rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let xs: Vec<f64> = rows.iter().map(|r| r.eps.ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.ratio.ln()).collect();
    let slope = fit::line(&xs, &ys).map_or(f64::NAN, |(s, _)| s);
    for r in &mut rows {
        r.fitted_slope = slope;
    }
    let mut order: Vec<&HoelderRow> = rows.iter().collect();
    order.sort_by(|a, b| b.eps.total_cmp(&a.eps));
    let strictly_increasing = order.windows(2).all(|w| w[1].ratio > w[0].ratio);
    let predicted = rows.first().map_or(f64::NAN, |r| r.predicted_exponent);
    Ok(HoelderReport {
        rows,
        predicted_exponent: predicted,
        fitted_slope: slope,
        strictly_increasing,
    })
}
