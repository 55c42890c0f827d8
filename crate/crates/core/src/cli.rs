//! Experiment runner: TOML configs in, `results.csv` / `report.json` /
//! `manifest.json` out.
//!
//! A config has a header (`command`, `name`, `output_dir`, `seed`, `exec`)
//! and a `[params]` table whose schema depends on the command. The manifest
//! echoes the fully resolved parameters, so re-running from it reproduces
//! the outputs byte for byte.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::fbi::{self, Cutoff, DecaySettings, Family, ModelSettings, Signal, TransformSpec};
use crate::instability::{self, HoelderInputs, SweepSettings};
use crate::kirchhoff::{self, Initial, SpectrumData, WeightSpec};
use crate::majorant::{self, ContractionSettings, NormParams};
use crate::spectral_vdw::{self, FilteredState};
use crate::symbol::{self, PolySystem, Verdict};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_INTERNAL: i32 = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Classify,
    Vdw,
    Kirchhoff,
    Instability,
    Majorant,
    Fbi,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExecChoice {
    #[default]
    Parallel,
    Sequential,
}

impl From<ExecChoice> for Exec {
    fn from(e: ExecChoice) -> Self {
        match e {
            ExecChoice::Parallel => Exec::default(),
            ExecChoice::Sequential => Exec::Sequential,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Header {
    pub command: Command,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub exec: ExecChoice,
    #[serde(default = "empty_table")]
    pub params: Value,
}

fn empty_table() -> Value {
    json!({})
}

fn from_value<T: DeserializeOwned>(v: &Value, prefix: &str) -> Result<T> {
    serde_path_to_error::deserialize(v).map_err(|e| {
        let inner = e.path().to_string();
        let path = if inner == "." || inner.is_empty() {
            prefix.to_string()
        } else if prefix.is_empty() {
            inner
        } else {
            format!("{prefix}.{inner}")
        };
        Error::usage(path, e.inner().to_string())
    })
}

/// Parses a TOML config into a header; command parameters are checked later.
pub fn parse_config(text: &str) -> Result<Header> {
    let doc: toml::Table = toml::from_str(text).map_err(|e| Error::usage("<document>", e.message().to_string()))?;
    if doc.is_empty() {
        return Err(Error::usage("<document>", "empty config; `command` is required"));
    }
    let v = serde_json::to_value(doc)?;
    from_value(&v, "")
}

/// Output of one command before it is written to disk.
#[derive(Debug, Default)]
pub struct Artifacts {
    pub files: Vec<(String, Vec<u8>)>,
    pub report: Value,
    /// A recorded blow-up or other expected numerical outcome.
    pub expected_numerical: bool,
}

fn fmt(x: f64) -> String {
    format!("{x}")
}

fn csv_bytes(header: &[String], rows: &[Vec<String>]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

fn strs(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SystemRef {
    Named(String),
    Custom(PolySystem),
}

impl SystemRef {
    pub fn resolve(&self) -> Result<PolySystem> {
        let sys = match self {
            SystemRef::Named(n) => PolySystem::builtin(n)
                .ok_or_else(|| Error::usage("params.system", format!("unknown system `{n}` (vdw, complex-burgers)")))?,
            SystemRef::Custom(s) => s.clone(),
        };
        sys.validate()?;
        Ok(sys)
    }
}

impl Default for SystemRef {
    fn default() -> Self {
        SystemRef::Named("vdw".into())
    }
}

// ---- classify ----

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleSpec {
    pub count: usize,
    pub lo: f64,
    pub hi: f64,
    /// Skip draws with `|u^2 - 1/3| < exclude` (vdW sonic points).
    #[serde(default)]
    pub exclude: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifyParams {
    pub system: SystemRef,
    pub t: f64,
    pub x: Vec<f64>,
    pub xi: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// Random first component, remaining components zero.
    pub sample: Option<SampleSpec>,
}

impl Default for ClassifyParams {
    fn default() -> Self {
        Self {
            system: SystemRef::default(),
            t: 0.0,
            x: vec![0.0],
            xi: vec![1.0],
            states: Vec::new(),
            sample: None,
        }
    }
}

fn run_classify(p: &ClassifyParams, seed: u64, exec: Exec) -> Result<Artifacts> {
    let sys = p.system.resolve()?;
    if p.x.len() != sys.d || p.xi.len() != sys.d {
        return Err(Error::usage("params.xi", format!("x and xi need {} entries", sys.d)));
    }
    let mut states = p.states.clone();
    if let Some(s) = &p.sample {
        if !(s.lo < s.hi) {
            return Err(Error::usage("params.sample", "need lo < hi"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        while states.len() < p.states.len() + s.count {
            let u: f64 = rng.random_range(s.lo..s.hi);
            if (u * u - 1.0 / 3.0).abs() < s.exclude {
                continue;
            }
            let mut st = vec![0.0; sys.n];
            st[0] = u;
            states.push(st);
        }
    }
    if let Some((i, _)) = states.iter().enumerate().find(|(_, s)| s.len() != sys.n) {
        return Err(Error::usage(format!("params.states[{i}]"), format!("state needs {} entries", sys.n)));
    }
    let is_vdw = sys.name == "vdw";
    let xi_norm = p.xi.iter().map(|v| v * v).sum::<f64>().sqrt();
    let rows = exec.map(&states, |u| -> Result<(symbol::SymbolSpectrum, Option<(f64, bool)>)> {
        let m = symbol::principal_symbol(&sys, p.t, &p.x, u, &p.xi)?;
        let spec = symbol::spectrum_classify(&m)?;
        let oracle = is_vdw.then(|| {
            let dp = symbol::vdw_tools(u[0]).dp;
            (xi_norm * (-dp).max(0.0).sqrt(), dp < 0.0)
        });
        Ok((spec, oracle))
    });
    let mut header = vec!["index".to_string()];
    header.extend((0..sys.n).map(|i| format!("u{i}")));
    header.extend(strs(&["verdict", "gamma0", "oracle_gamma0", "oracle_elliptic"]));
    let mut out_rows = Vec::new();
    let (mut mismatches, mut max_err, mut nonhyp) = (0usize, 0.0f64, 0usize);
    let mut detail = Vec::new();
    for (i, (u, r)) in states.iter().zip(rows).enumerate() {
        let (spec, oracle) = r?;
        let non = spec.verdict == Verdict::NonHyperbolic;
        nonhyp += non as usize;
        let mut row = vec![i.to_string()];
        row.extend(u.iter().map(|v| fmt(*v)));
        row.push(format!("{:?}", spec.verdict));
        row.push(fmt(spec.gamma0));
        match oracle {
            Some((g, ell)) => {
                mismatches += (ell != non) as usize;
                max_err = max_err.max((g - spec.gamma0).abs());
                row.push(fmt(g));
                row.push(ell.to_string());
            }
            None => {
                row.push(String::new());
                row.push(String::new());
            }
        }
        out_rows.push(row);
        if i < p.states.len() {
            detail.push(json!({
                "u": u,
                "verdict": spec.verdict,
                "gamma0": spec.gamma0,
                "eigenvalues": spec.eigenvalues.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>(),
            }));
        }
    }
    let mut report = json!({
        "system": sys.name,
        "count": states.len(),
        "nonhyperbolic": nonhyp,
        "states": detail,
    });
    if is_vdw {
        report["vdw_oracle"] = json!({ "mismatches": mismatches, "max_gamma0_error": max_err });
    }
    Ok(Artifacts {
        files: vec![("results.csv".into(), csv_bytes(&header, &out_rows)?)],
        report,
        expected_numerical: false,
    })
}

// ---- vdw ----

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrowthSpec {
    /// Tracked mode whose `|v_n|` is fitted.
    pub mode: i64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VdwParams {
    pub lambda: usize,
    pub nmodes: usize,
    pub dt: f64,
    pub t_end: f64,
    pub record_every: usize,
    /// `(n, re, im)` entries of `u_hat`; conjugates are implied.
    pub u_modes: Vec<(i64, f64, f64)>,
    pub v_modes: Vec<(i64, f64, f64)>,
    pub track: Vec<i64>,
    /// Base step for a three-level refinement (`h`, `h/2`, `h/4`) reporting
    /// the ratio of successive final-state differences.
    pub order_dt: Option<f64>,
    pub growth: Option<GrowthSpec>,
}

impl Default for VdwParams {
    fn default() -> Self {
        Self {
            lambda: 16,
            nmodes: 64,
            dt: 1e-3,
            t_end: 1.0,
            record_every: 1,
            u_modes: Vec::new(),
            v_modes: Vec::new(),
            track: Vec::new(),
            order_dt: None,
            growth: None,
        }
    }
}

fn vdw_state(p: &VdwParams) -> Result<FilteredState> {
    let mut s = FilteredState::zeros(p.lambda, p.nmodes)?;
    for (field, modes) in [("u_modes", &p.u_modes), ("v_modes", &p.v_modes)] {
        for (i, &(n, re, im)) in modes.iter().enumerate() {
            if n.unsigned_abs() as usize > p.lambda {
                return Err(Error::usage(format!("params.{field}[{i}]"), format!("mode {n} outside |n| <= lambda")));
            }
            if n == 0 && im != 0.0 {
                return Err(Error::usage(format!("params.{field}[{i}]"), "mode 0 must be real"));
            }
            let c = Complex64::new(re, im);
            if field == "u_modes" {
                s.set_u(n, c);
            } else {
                s.set_v(n, c);
            }
        }
    }
    Ok(s)
}

fn run_vdw(p: &VdwParams) -> Result<Artifacts> {
    let mut track = p.track.clone();
    if let Some(g) = &p.growth {
        if !track.contains(&g.mode) {
            track.push(g.mode);
        }
    }
    let s0 = vdw_state(p)?;
    let out = spectral_vdw::integrate(s0.clone(), p.dt, p.t_end, p.record_every, &track)?;
    let mut header = strs(&["t", "E", "drift"]);
    for n in &track {
        header.push(format!("u_abs_{n}"));
        header.push(format!("v_abs_{n}"));
    }
    let e0 = out.trace.samples.first().map_or(0.0, |s| s.1);
    let rows: Vec<Vec<String>> = out
        .trace
        .samples
        .iter()
        .zip(&out.modes)
        .map(|(&(t, e), m)| {
            let mut r = vec![fmt(t), fmt(e), fmt((e - e0).abs() / e0.abs().max(1.0))];
            for k in 0..track.len() {
                r.push(fmt(m.u_abs[k]));
                r.push(fmt(m.v_abs[k]));
            }
            r
        })
        .collect();
    let mut report = json!({
        "lambda": p.lambda,
        "t_final": out.state.t,
        "energy_initial": e0,
        "energy_drift": out.trace.drift,
        "blow_up": out.blow_up,
    });
    if let Some(h) = p.order_dt {
        let fin = |dt: f64| spectral_vdw::integrate(s0.clone(), dt, p.t_end, usize::MAX, &[]).map(|o| o.state);
        let (a, b, c) = (fin(h)?, fin(h / 2.0)?, fin(h / 4.0)?);
        let diff = |x: &FilteredState, y: &FilteredState| {
            x.uhat
                .iter()
                .zip(&y.uhat)
                .chain(x.vhat.iter().zip(&y.vhat))
                .map(|(p, q)| (p - q).norm())
                .fold(0.0, f64::max)
        };
        let (d1, d2) = (diff(&a, &b), diff(&b, &c));
        report["order_check"] = json!({ "dt": h, "diff_dt": d1, "diff_half": d2, "ratio": d1 / d2 });
    }
    if let Some(g) = &p.growth {
        let k = track.iter().position(|n| *n == g.mode).unwrap();
        let samples: Vec<(f64, f64)> = out.modes.iter().map(|m| (m.t, m.v_abs[k])).collect();
        let measured = spectral_vdw::growth_fit(&samples)?;
        let u0 = [s0.u_mode(0).re, s0.v_mode(0).re];
        let m = symbol::principal_symbol(&PolySystem::vdw(), 0.0, &[0.0], &u0, &[g.mode as f64])?;
        let expected = symbol::spectrum_classify(&m)?.gamma0;
        report["growth"] = json!({
            "mode": g.mode,
            "u0": u0[0],
            "measured": measured,
            "symbol_rate": expected,
            "relative_error": (measured / expected - 1.0).abs(),
        });
    }
    Ok(Artifacts {
        files: vec![("results.csv".into(), csv_bytes(&header, &rows)?)],
        expected_numerical: out.blow_up.is_some(),
        report,
    })
}

// ---- kirchhoff ----

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KirchhoffMode {
    #[default]
    Bound,
    Oracle,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContrastSpec {
    pub weights: WeightSpec,
    pub lambdas: Vec<i64>,
    pub t_end: f64,
    pub dt: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KirchhoffParams {
    pub mode: KirchhoffMode,
    pub weights: WeightSpec,
    pub lambdas: Vec<i64>,
    pub t_end: f64,
    pub dt: f64,
    /// Low-mode window `|n| <= n0` for the residuals.
    pub n0: i64,
    pub initial: Initial,
    /// Oracle mode: record every this many steps.
    pub record_every: usize,
    pub contrast: Option<ContrastSpec>,
}

impl Default for KirchhoffParams {
    fn default() -> Self {
        Self {
            mode: KirchhoffMode::Bound,
            weights: WeightSpec::Power {
                s: 4.0,
                norm: 0.5,
                n_max: 4096,
            },
            lambdas: vec![16, 32, 64, 128],
            t_end: 1.0,
            dt: 1e-4,
            n0: 4,
            initial: Initial::Velocity,
            record_every: 100,
            contrast: None,
        }
    }
}

fn bound_rows(rep: &kirchhoff::BoundReport) -> (Vec<String>, Vec<Vec<String>>) {
    let header = strs(&[
        "lambda", "t", "A", "U", "mu", "bound_lhs", "bound_rhs", "residual_u", "residual_v", "pass",
    ]);
    let rows = rep
        .rows
        .iter()
        .map(|r| {
            vec![
                r.lambda.to_string(),
                fmt(r.t),
                fmt(r.a),
                fmt(r.u),
                fmt(r.mu),
                fmt(r.bound_lhs),
                fmt(r.bound_rhs),
                fmt(r.residual_u),
                fmt(r.residual_v),
                r.pass.to_string(),
            ]
        })
        .collect();
    (header, rows)
}

fn run_kirchhoff(p: &KirchhoffParams, exec: Exec) -> Result<Artifacts> {
    let data = SpectrumData::from_spec(&p.weights)?;
    let mut files = Vec::new();
    let mut report = match p.mode {
        KirchhoffMode::Bound => {
            let rep = kirchhoff::verify_bound_and_limit(&data, &p.lambdas, p.t_end, p.dt, p.n0, exec)?;
            let (h, rows) = bound_rows(&rep);
            files.push(("results.csv".to_string(), csv_bytes(&h, &rows)?));
            json!({ "mode": "bound", "bound": rep })
        }
        KirchhoffMode::Oracle => {
            let rows = exec.map(&p.lambdas, |&lambda| -> Result<[f64; 4]> {
                let run = kirchhoff::direct_mode_ode(&data, lambda, p.t_end, p.dt, p.record_every, p.initial)?;
                let traj = kirchhoff::integrate_a(&data, lambda, p.t_end, p.dt, p.initial)?;
                traj.check_invariants()?;
                let mut worst = 0.0f64;
                for (t, snap) in run.tgrid.iter().zip(&run.snapshots) {
                    let cf = kirchhoff::closed_form_state(&traj, &data, *t)?;
                    for (a, b) in cf.iter().zip(snap) {
                        worst = worst.max((a.u - b.u).norm()).max((a.v - b.v).norm());
                    }
                }
                let e0 = run.energy[0];
                let drift = run.energy.iter().map(|e| (e - e0).abs()).fold(0.0, f64::max);
                Ok([lambda as f64, worst, drift, run.consistency])
            });
            let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
            let h = strs(&["lambda", "t_end", "sup_mode_error", "energy_drift", "consistency"]);
            let body: Vec<Vec<String>> = rows
                .iter()
                .map(|r| vec![(r[0] as i64).to_string(), fmt(p.t_end), fmt(r[1]), fmt(r[2]), fmt(r[3])])
                .collect();
            files.push(("results.csv".to_string(), csv_bytes(&h, &body)?));
            json!({
                "mode": "oracle",
                "max_mode_error": rows.iter().map(|r| r[1]).fold(0.0, f64::max),
                "max_energy_drift": rows.iter().map(|r| r[2]).fold(0.0, f64::max),
            })
        }
    };
    report["mu"] = serde_json::to_value(kirchhoff::mu_diagnostic(&data, &p.lambdas))?;
    if let Some(c) = &p.contrast {
        let cdata = SpectrumData::from_spec(&c.weights)?;
        let rep = kirchhoff::verify_bound_and_limit(&cdata, &c.lambdas, c.t_end, c.dt, p.n0, exec)?;
        let (h, rows) = bound_rows(&rep);
        files.push(("contrast.csv".to_string(), csv_bytes(&h, &rows)?));
        report["contrast"] = serde_json::to_value(rep)?;
    }
    Ok(Artifacts {
        files,
        report,
        expected_numerical: false,
    })
}

// ---- instability ----

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InstabilityConfig {
    pub system: SystemRef,
    pub xibar: f64,
    pub eps_list: Vec<f64>,
    #[serde(rename = "M")]
    pub big_m: f64,
    pub beta: f64,
    pub m: f64,
    pub alpha: f64,
    pub d: f64,
    pub delta: f64,
    pub r0: f64,
    #[serde(rename = "K")]
    pub k: usize,
    /// Quadrature rows in `s`; the solver step is `sbar / (2 s_rows)`.
    pub s_rows: usize,
    pub theta_per_period: usize,
}

impl Default for InstabilityConfig {
    fn default() -> Self {
        let st = SweepSettings::default();
        Self {
            system: SystemRef::default(),
            xibar: 1.0,
            eps_list: vec![1e-2, 1e-3, 1e-4],
            big_m: st.big_m,
            beta: st.beta,
            m: st.hoelder.m,
            alpha: st.hoelder.alpha,
            d: st.hoelder.d,
            delta: st.hoelder.delta,
            r0: st.hoelder.r0,
            k: st.k,
            s_rows: st.s_rows,
            theta_per_period: st.theta_per_period,
        }
    }
}

fn run_instability(p: &InstabilityConfig, exec: Exec) -> Result<Artifacts> {
    let sys = p.system.resolve()?;
    let st = SweepSettings {
        big_m: p.big_m,
        beta: p.beta,
        hoelder: HoelderInputs {
            m: p.m,
            alpha: p.alpha,
            d: p.d,
            delta: p.delta,
            r0: p.r0,
        },
        k: p.k,
        s_rows: p.s_rows,
        theta_per_period: p.theta_per_period,
    };
    let rep = instability::hoelder_ratio_sweep(&sys, p.xibar, &p.eps_list, &st, exec)?;
    let header = strs(&[
        "eps",
        "kappa1",
        "sbar",
        "t_eps",
        "r_eps",
        "l2_norm",
        "hm_norm",
        "ratio",
        "predicted_exponent",
        "fitted_slope",
        "truncated_flag",
    ]);
    let rows: Vec<Vec<String>> = rep
        .rows
        .iter()
        .map(|r| {
            vec![
                fmt(r.eps),
                fmt(r.kappa1),
                fmt(r.sbar),
                fmt(r.t_eps),
                fmt(r.r_eps),
                fmt(r.l2_norm),
                fmt(r.hm_norm),
                fmt(r.ratio),
                fmt(r.predicted_exponent),
                fmt(rep.fitted_slope),
                r.truncated_flag.to_string(),
            ]
        })
        .collect();
    let truncated = rep.rows.iter().any(|r| r.truncated_flag);
    Ok(Artifacts {
        files: vec![("results.csv".into(), csv_bytes(&header, &rows)?)],
        report: serde_json::to_value(&rep)?,
        expected_numerical: truncated,
    })
}

// ---- majorant ----

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlgebraSpec {
    pub count: usize,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "T")]
    pub t: usize,
    /// Sample times at `j * sbar / s_samples`, `j < s_samples`.
    pub s_samples: usize,
}

impl Default for AlgebraSpec {
    fn default() -> Self {
        Self {
            count: 100,
            k: 8,
            t: 4,
            s_samples: 4,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DuhamelSpec {
    pub count: usize,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "T")]
    pub t: usize,
    /// Uniform grid points on `[0, 0.9 sbar]`.
    pub s_points: usize,
}

impl Default for DuhamelSpec {
    fn default() -> Self {
        Self {
            count: 50,
            k: 6,
            t: 2,
            s_points: 401,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MajorantParams {
    pub system: SystemRef,
    pub xibar: f64,
    /// Order for the `phi^2 << phi`, `c1` and `c2` checks.
    pub check_order: usize,
    pub bracket_range: i64,
    pub algebra: AlgebraSpec,
    pub duhamel: DuhamelSpec,
    pub contraction: ContractionSettings,
}

impl Default for MajorantParams {
    fn default() -> Self {
        Self {
            system: SystemRef::default(),
            xibar: 1.0,
            check_order: 200,
            bracket_range: 100,
            algebra: AlgebraSpec::default(),
            duhamel: DuhamelSpec::default(),
            contraction: ContractionSettings::default(),
        }
    }
}

fn run_majorant(p: &MajorantParams, seed: u64, exec: Exec) -> Result<Artifacts> {
    let sys = p.system.resolve()?;
    let n = p.check_order;
    let constants = majorant::compute_constants(n, n, exec);
    let phi = majorant::MajorantSeries::phi(constants.c0, n);
    let phi_dominates = majorant::dominates(&phi.mul(&phi), &phi);
    let c1_worst = majorant::c1_inequality_worst(constants.c1, n, exec);
    let c2 = majorant::compute_c2(constants.c1, n, exec);
    let subadditive = majorant::bracket_subadditive(p.bracket_range);

    let ex = majorant::contraction_experiment(&sys, p.xibar, &p.contraction, exec)?;
    let np: &NormParams = &ex.norm;
    let a_grid: Vec<f64> = (0..p.algebra.s_samples)
        .map(|j| j as f64 * np.sbar / p.algebra.s_samples as f64)
        .collect();
    let algebra = majorant::algebra_batch(np, c2, &a_grid, p.algebra.k, p.algebra.t, p.algebra.count, seed, exec)?;
    let d_grid: Vec<f64> = (0..p.duhamel.s_points)
        .map(|j| j as f64 * 0.9 * np.sbar / (p.duhamel.s_points - 1).max(1) as f64)
        .collect();
    let op = crate::series::ProfileOperator::new(&sys, &[p.xibar], p.contraction.eps)?;
    let duhamel = majorant::duhamel_batch(
        np,
        &op.abar,
        &ex.duhamel,
        &d_grid,
        p.duhamel.k,
        p.duhamel.t,
        p.duhamel.count,
        seed.wrapping_add(0x5bd1_e995),
        exec,
    )?;
    let header = strs(&["iteration", "sup_change", "ratio"]);
    let rows: Vec<Vec<String>> = ex
        .report
        .changes
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let ratio = if i == 0 { String::new() } else { fmt(c / ex.report.changes[i - 1]) };
            vec![(i + 1).to_string(), fmt(*c), ratio]
        })
        .collect();
    let report = json!({
        "constants": constants,
        "c2": c2,
        "phi_squared_dominated": phi_dominates,
        "c1_inequality_worst": c1_worst,
        "bracket_subadditive": subadditive,
        "check_order": n,
        "algebra": algebra,
        "duhamel": duhamel,
        "contraction": ex,
    });
    Ok(Artifacts {
        files: vec![("results.csv".into(), csv_bytes(&header, &rows)?)],
        report,
        expected_numerical: false,
    })
}

// ---- fbi ----

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub x0: f64,
    pub dx: f64,
    pub n: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalSpec {
    pub name: String,
    /// Named family sampled on `grid`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<Family>,
    /// CSV file with `x,value` rows, relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
    /// Expected verdict, if known; reported alongside the measurement.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub analytic: Option<bool>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BoundaryData {
    Constant { c: f64 },
    Cosine { c: f64, amp: f64 },
    Abs { c: f64, amp: f64 },
}

impl BoundaryData {
    fn eval(&self, y: f64) -> f64 {
        match *self {
            BoundaryData::Constant { c } => c,
            BoundaryData::Cosine { c, amp } => c + amp * y.cos(),
            BoundaryData::Abs { c, amp } => c + amp * y.abs(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelCase {
    pub name: String,
    pub data: BoundaryData,
    /// Samples on `[-pi, pi)`.
    #[serde(default = "default_model_samples")]
    pub samples: usize,
    #[serde(default)]
    pub write_grid: bool,
}

fn default_model_samples() -> usize {
    256
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FbiParams {
    pub q: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub chi: Option<Cutoff>,
    pub xbar: Vec<f64>,
    pub directions: Vec<Vec<f64>>,
    pub decay: DecaySettings,
    pub grid: GridSpec,
    pub signals: Vec<SignalSpec>,
    pub model: ModelSettings,
    pub model_cases: Vec<ModelCase>,
}

impl Default for FbiParams {
    fn default() -> Self {
        Self {
            q: vec![1.0],
            lambdas: fbi::default_lambdas(),
            chi: Some(Cutoff {
                center: vec![0.0],
                inner: 0.5,
                outer: 1.0,
            }),
            xbar: vec![0.0],
            directions: vec![vec![1.0], vec![-1.0]],
            decay: DecaySettings::default(),
            grid: GridSpec {
                x0: -3.0,
                dx: 1.0 / 512.0,
                n: 3073,
            },
            signals: Vec::new(),
            model: ModelSettings::default(),
            model_cases: Vec::new(),
        }
    }
}

fn load_signal(s: &SignalSpec, grid: &GridSpec, base: &Path) -> Result<Signal> {
    match (&s.family, &s.csv) {
        (Some(f), None) => Ok(Signal::sample_1d(grid.x0, grid.dx, grid.n, |x| f.eval(x))),
        (None, Some(path)) => {
            let full = base.join(path);
            let mut rd = csv::ReaderBuilder::new().has_headers(true).from_path(&full)?;
            let (mut xs, mut vs) = (Vec::new(), Vec::new());
            for rec in rd.records() {
                let rec = rec?;
                let parse = |i: usize| -> Result<f64> {
                    rec.get(i)
                        .and_then(|v| v.trim().parse().ok())
                        .ok_or_else(|| Error::Config(format!("{}: bad number in column {i}", full.display())))
                };
                xs.push(parse(0)?);
                vs.push(parse(1)?);
            }
            Signal::from_pairs(&xs, &vs)
        }
        _ => Err(Error::usage(
            format!("params.signals[{}]", s.name),
            "give exactly one of `family` or `csv`",
        )),
    }
}

fn run_fbi(p: &FbiParams, base: &Path, exec: Exec) -> Result<Artifacts> {
    let spec = TransformSpec {
        q: p.q.clone(),
        chi: p.chi.clone(),
        lambdas: p.lambdas.clone(),
    };
    spec.validate()?;
    let mut names = std::collections::BTreeSet::new();
    for s in &p.signals {
        if !names.insert(&s.name) {
            return Err(Error::usage("params.signals", format!("duplicate signal name `{}`", s.name)));
        }
    }
    let mut files = Vec::new();
    let header = strs(&[
        "signal",
        "xi",
        "epsilon1",
        "power",
        "q_im_y",
        "decay_margin",
        "verdict",
        "expected_analytic",
    ]);
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    let (mut analytic, mut other) = (Vec::new(), Vec::new());
    let mut verdict_mismatches = 0usize;
    for s in &p.signals {
        let sig = load_signal(s, &p.grid, base)?;
        for xi in &p.directions {
            let r = fbi::decay_classify(&sig, &p.xbar, xi, &spec, &p.decay, exec)?;
            let detected = r.verdict == fbi::DecayVerdict::AnalyticDirection;
            if let Some(a) = s.analytic {
                verdict_mismatches += (a != detected) as usize;
                if a {
                    analytic.push(r.clone());
                } else {
                    other.push(r.clone());
                }
            }
            rows.push(vec![
                s.name.clone(),
                xi.iter().map(|v| fmt(*v)).collect::<Vec<_>>().join(";"),
                fmt(r.epsilon1),
                fmt(r.power),
                fmt(r.q_im_y),
                fmt(r.decay_margin),
                format!("{:?}", r.verdict),
                s.analytic.map_or(String::new(), |a| a.to_string()),
            ]);
            reports.push(json!({ "signal": s.name, "report": r }));
        }
    }
    if !rows.is_empty() {
        files.push(("results.csv".to_string(), csv_bytes(&header, &rows)?));
    }
    let separation = (!analytic.is_empty() && !other.is_empty())
        .then(|| fbi::separation(&analytic.iter().collect::<Vec<_>>(), &other.iter().collect::<Vec<_>>()));
    let margin = reports
        .first()
        .map(|_| analytic.iter().chain(&other).map(|r| r.decay_margin).fold(0.0, f64::max));

    let mut model = Vec::new();
    let mut model_rows = Vec::new();
    for case in &p.model_cases {
        let n = case.samples;
        let period = 2.0 * std::f64::consts::PI;
        let h: Vec<Complex64> = (0..n)
            .map(|j| Complex64::new(case.data.eval(-std::f64::consts::PI + j as f64 * period / n as f64), 0.0))
            .collect();
        let out = fbi::model_cr_solve(&h, -std::f64::consts::PI, period, &p.model, exec)?;
        model_rows.push(vec![
            case.name.clone(),
            format!("{:?}", out.verdict),
            fmt(out.decay_rate),
            fmt(out.decay_power),
            fmt(out.needed_rate),
            fmt(out.residual),
        ]);
        if case.write_grid && !out.u.is_empty() {
            let gh = strs(&["x", "y", "re_u", "im_u"]);
            let ny = out.y.len();
            let g: Vec<Vec<String>> = out
                .u
                .iter()
                .enumerate()
                .map(|(k, z)| vec![fmt(out.x[k / ny]), fmt(out.y[k % ny]), fmt(z.re), fmt(z.im)])
                .collect();
            files.push((format!("model_{}.csv", case.name), csv_bytes(&gh, &g)?));
        }
        model.push(json!({
            "name": case.name,
            "verdict": out.verdict,
            "decay_rate": out.decay_rate,
            "decay_power": out.decay_power,
            "needed_rate": out.needed_rate,
            "residual": out.residual,
            "profile": out.profile,
        }));
    }
    if !model_rows.is_empty() {
        let mh = strs(&["case", "verdict", "decay_rate", "decay_power", "needed_rate", "residual"]);
        files.push(("model.csv".to_string(), csv_bytes(&mh, &model_rows)?));
    }
    Ok(Artifacts {
        files,
        report: json!({
            "decay": reports,
            "separation": separation,
            "decay_margin": margin,
            "verdict_mismatches": verdict_mismatches,
            "model": model,
        }),
        expected_numerical: false,
    })
}

// ---- dispatch ----

/// Resolves the command parameters (filling defaults) and runs them.
/// Returns the header with resolved parameters for the manifest.
pub fn execute(h: &Header, base: &Path) -> Result<(Header, Artifacts)> {
    let exec: Exec = h.exec.into();
    let mut resolved = h.clone();
    let art = match h.command {
        Command::Classify => {
            let p: ClassifyParams = from_value(&h.params, "params")?;
            resolved.params = serde_json::to_value(&p)?;
            run_classify(&p, h.seed, exec)?
        }
        Command::Vdw => {
            let p: VdwParams = from_value(&h.params, "params")?;
            resolved.params = serde_json::to_value(&p)?;
            run_vdw(&p)?
        }
        Command::Kirchhoff => {
            let p: KirchhoffParams = from_value(&h.params, "params")?;
            resolved.params = serde_json::to_value(&p)?;
            run_kirchhoff(&p, exec)?
        }
        Command::Instability => {
            let p: InstabilityConfig = from_value(&h.params, "params")?;
            resolved.params = serde_json::to_value(&p)?;
            run_instability(&p, exec)?
        }
        Command::Majorant => {
            let p: MajorantParams = from_value(&h.params, "params")?;
            resolved.params = serde_json::to_value(&p)?;
            run_majorant(&p, h.seed, exec)?
        }
        Command::Fbi => {
            let p: FbiParams = from_value(&h.params, "params")?;
            resolved.params = serde_json::to_value(&p)?;
            run_fbi(&p, base, exec)?
        }
    };
    Ok((resolved, art))
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes artifacts and the manifest into `out`; returns the exit code.
pub fn write_outputs(out: &Path, resolved: &Header, base: &Path, art: &Artifacts, wall: f64) -> Result<i32> {
    fs::create_dir_all(out)?;
    let mut files = art.files.clone();
    let mut report = serde_json::to_vec_pretty(&art.report)?;
    report.push(b'\n');
    files.push(("report.json".into(), report));
    let mut listing = Vec::new();
    for (name, bytes) in &files {
        fs::write(out.join(name), bytes)?;
        listing.push(json!({ "file": name, "sha256": sha256_hex(bytes) }));
    }
    let code = if art.expected_numerical { EXIT_NUMERICAL } else { EXIT_OK };
    let manifest = json!({
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "config": resolved,
        "base_dir": base,
        "outputs": listing,
        "exit_code": code,
        "wall_time_s": wall,
    });
    let mut m = serde_json::to_vec_pretty(&manifest)?;
    m.push(b'\n');
    fs::write(out.join("manifest.json"), m)?;
    Ok(code)
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Usage { .. } | Error::Config(_) => EXIT_USAGE,
        Error::ContractionInfeasible { .. } | Error::InsufficientGrowth(_) | Error::Saturation { .. } | Error::Infeasible(_) => {
            EXIT_NUMERICAL
        }
        _ => EXIT_INTERNAL,
    }
}

fn config_base(path: &Path) -> PathBuf {
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let dir = if dir.as_os_str().is_empty() { PathBuf::from(".") } else { dir };
    fs::canonicalize(&dir).unwrap_or(dir)
}

fn output_for(h: &Header, base: &Path, out: Option<&Path>) -> Result<PathBuf> {
    match (out, &h.output_dir) {
        (Some(o), _) => Ok(o.to_path_buf()),
        (None, Some(d)) => Ok(base.join(d)),
        (None, None) => Err(Error::usage("output_dir", "no output directory; set `output_dir` or pass --out")),
    }
}

fn run_header(h: &Header, base: &Path, out: &Path, seq: bool) -> Result<i32> {
    let mut h = h.clone();
    if seq {
        h.exec = ExecChoice::Sequential;
    }
    let start = Instant::now();
    let (resolved, art) = execute(&h, base)?;
    write_outputs(out, &resolved, base, &art, start.elapsed().as_secs_f64())
}

pub fn run_file(config: &Path, out: Option<&Path>, seq: bool) -> Result<i32> {
    let text = fs::read_to_string(config)?;
    let h = parse_config(&text)?;
    let base = config_base(config);
    let out = output_for(&h, &base, out)?;
    run_header(&h, &base, &out, seq)
}

pub fn rerun_manifest(manifest: &Path, out: Option<&Path>) -> Result<i32> {
    let m: Value = serde_json::from_str(&fs::read_to_string(manifest)?)?;
    let h: Header = from_value(&m["config"], "config")?;
    let base = m["base_dir"]
        .as_str()
        .map(PathBuf::from)
        .unwrap_or_else(|| config_base(manifest));
    let out = match out {
        Some(o) => o.to_path_buf(),
        None => config_base(manifest),
    };
    run_header(&h, &base, &out, false)
}

/// Runs every config into `out/<key>` and writes `sweep.csv` and
/// `sweep.json` sorted by key. Failed runs are recorded, not fatal.
pub fn sweep(configs: &[PathBuf], out: &Path, exec: Exec) -> Result<i32> {
    let mut jobs = BTreeMap::new();
    for c in configs {
        let h = parse_config(&fs::read_to_string(c)?)?;
        let key = h
            .name
            .clone()
            .unwrap_or_else(|| c.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default());
        if jobs.insert(key.clone(), (h, config_base(c))).is_some() {
            return Err(Error::usage("name", format!("duplicate sweep key `{key}`")));
        }
    }
    let list: Vec<(String, Header, PathBuf)> = jobs.into_iter().map(|(k, (h, b))| (k, h, b)).collect();
    let results = exec.map(&list, |(key, h, base)| {
        let dir = out.join(key);
        match run_header(h, base, &dir, false) {
            Ok(code) => (code, String::new()),
            Err(e) => (exit_code(&e), e.to_string()),
        }
    });
    fs::create_dir_all(out)?;
    let mut rows = Vec::new();
    let mut merged = serde_json::Map::new();
    for ((key, h, _), (code, err)) in list.iter().zip(&results) {
        rows.push(vec![
            key.clone(),
            serde_json::to_value(h.command)?.as_str().unwrap_or_default().to_string(),
            code.to_string(),
            err.clone(),
        ]);
        let report = fs::read(out.join(key).join("report.json"))
            .ok()
            .and_then(|b| serde_json::from_slice::<Value>(&b).ok())
            .filter(|_| err.is_empty())
            .unwrap_or(Value::Null);
        merged.insert(key.clone(), json!({ "exit_code": code, "error": err, "report": report }));
    }
    fs::write(out.join("sweep.csv"), csv_bytes(&strs(&["key", "command", "exit_code", "error"]), &rows)?)?;
    let mut bytes = serde_json::to_vec_pretty(&Value::Object(merged))?;
    bytes.push(b'\n');
    fs::write(out.join("sweep.json"), bytes)?;
    Ok(results.iter().map(|r| r.0).max().unwrap_or(EXIT_OK))
}

#[derive(Parser, Debug)]
#[command(name = "cauchy-lab", version, about = "Numerical experiments on ill-posed Cauchy problems")]
pub struct Cli {
    #[command(subcommand)]
    pub cmd: Cmd,
}

#[derive(Subcommand, Debug)]
pub enum Cmd {
    /// Run one experiment config.
    Run {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Force the sequential execution policy.
        #[arg(long)]
        sequential: bool,
    },
    /// Re-run the experiment recorded in a manifest.
    Rerun {
        manifest: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run several configs and merge their reports.
    Sweep {
        #[arg(required = true)]
        configs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the default parameters of a command as TOML.
    Defaults { command: String },
}

fn defaults(command: &str) -> Result<String> {
    let v = match command {
        "classify" => serde_json::to_value(ClassifyParams::default())?,
        "vdw" => serde_json::to_value(VdwParams::default())?,
        "kirchhoff" => serde_json::to_value(KirchhoffParams::default())?,
        "instability" => serde_json::to_value(InstabilityConfig::default())?,
        "majorant" => serde_json::to_value(MajorantParams::default())?,
        "fbi" => serde_json::to_value(FbiParams::default())?,
        other => return Err(Error::usage("command", format!("unknown command `{other}`"))),
    };
    let v = strip_nulls(v);
    let doc = json!({ "command": command, "params": v });
    toml::to_string(&doc).map_err(|e| Error::Config(e.to_string()))
}

fn strip_nulls(v: Value) -> Value {
    match v {
        Value::Object(m) => Value::Object(m.into_iter().filter(|(_, v)| !v.is_null()).map(|(k, v)| (k, strip_nulls(v))).collect()),
        Value::Array(a) => Value::Array(a.into_iter().map(strip_nulls).collect()),
        other => other,
    }
}

/// Entry point for the binary; returns the process exit code.
pub fn main_with(cli: Cli) -> i32 {
    let res = match cli.cmd {
        Cmd::Run { config, out, sequential } => run_file(&config, out.as_deref(), sequential),
        Cmd::Rerun { manifest, out } => rerun_manifest(&manifest, out.as_deref()),
        Cmd::Sweep { configs, out } => sweep(&configs, &out, Exec::default()),
        Cmd::Defaults { command } => defaults(&command).map(|s| {
            print!("{s}");
            EXIT_OK
        }),
    };
    match res {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
