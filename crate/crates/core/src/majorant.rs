//! Majorant-series machinery for the profile equation: the series
//! `phi(z) = c0 sum z^k / (k^2 + 1)`, the weighted norms on Fourier-Taylor
//! profiles, the Duhamel operator and a Picard solver for
//! `u = f + T(u)`, `T(u)(s) = int_0^s e^{(s - s') Abar d_theta} G(u(s')) ds'`.
//!
//! Norms are evaluated on a finite `(s, n, k)` lattice and in log space so
//! that `e^{(gamma s - kappa) <n>}` never underflows.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::instability::{apply_modewise, mode_propagators, InstabilityParams};
use crate::poly::{Polynomial, Ring};
use crate::series::{FtSeries, ProfileOperator};
use crate::symbol::PolySystem;

/// `<n> = |n|` for `n != 0`, `<0> = 2`.
pub fn weight_bracket(n: i64) -> i64 {
    if n == 0 {
        2
    } else {
        n.abs()
    }
}

fn floor12(x: f64) -> f64 {
    (x * 1e12).floor() / 1e12
}

fn ceil12(x: f64) -> f64 {
    (x * 1e12).ceil() / 1e12
}

/// `sum_{p=0}^n 1 / ((p^2 + 1)((n - p)^2 + 1))`.
pub fn half_convolution(n: i64) -> f64 {
    (0..=n)
        .map(|p| 1.0 / ((p * p + 1) as f64 * ((n - p) * (n - p) + 1) as f64))
        .sum()
}

/// Upper bound for `sum_{p in Z} 1 / ((p^2 + 1)((n - p)^2 + 1))`: exact
/// part over `|p| <= pmax` plus `8 / (3 pmax^3)` for the rest
/// (valid for `pmax >= 2 |n|`).
pub fn full_convolution_upper(n: i64, pmax: i64) -> f64 {
    assert!(pmax >= 2 * n.abs() && pmax > 0);
    let exact: f64 = (-pmax..=pmax)
        .map(|p| 1.0 / ((p * p + 1) as f64 * ((n - p) * (n - p) + 1) as f64))
        .sum();
    exact + 8.0 / (3.0 * (pmax as f64).powi(3))
}

/// Truncation for the full convolution sums up to order `nmax`. The tail
/// term scaled by `n^2 + 1` stays below 1e-8 relative.
fn full_sum_cutoff(nmax: usize) -> i64 {
    64 * nmax as i64 + 4096
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Constants {
    pub c0: f64,
    pub c1: f64,
    pub c0_limit: f64,
    pub c1_limit: f64,
    /// `(n^2 + 1) S_n` non-increasing on `[64, T]` and above its limit, so
    /// no `n > T` beats the computed infimum.
    pub c0_tail_monotone: bool,
}

/// `c0 = inf_n [(n^2+1) S_n]^{-1}` over `n <= T` and the limit
/// `1 / (1 + pi coth pi)`; `c1` likewise over `|n| <= nmax` with the full
/// convolution and limit `1 / (2 pi coth pi)`. Both rounded down.
pub fn compute_constants(t: usize, nmax: usize, exec: Exec) -> Constants {
    let coth = 1.0 / PI.tanh();
    let c0_limit = 1.0 / (1.0 + PI * coth);
    let c1_limit = 1.0 / (2.0 * PI * coth);
    let scaled0 = exec.map_range(t + 1, |n| {
        let n = n as i64;
        (n * n + 1) as f64 * half_convolution(n)
    });
    let c0 = scaled0
        .iter()
        .map(|v| 1.0 / v)
        .fold(c0_limit, f64::min);
    let tail: Vec<f64> = scaled0.iter().skip(64).copied().collect();
    let c0_tail_monotone = tail.windows(2).all(|w| w[1] <= w[0]) && tail.iter().all(|v| *v >= 1.0 / c0_limit);
    let pmax = full_sum_cutoff(nmax);
    let c1 = exec
        .map_range(nmax + 1, |n| {
            let n = n as i64;
            1.0 / ((n * n + 1) as f64 * full_convolution_upper(n, pmax))
        })
        .into_iter()
        .fold(c1_limit, f64::min);
    Constants {
        c0: floor12(c0),
        c1: floor12(c1),
        c0_limit,
        c1_limit,
        c0_tail_monotone,
    }
}

/// `c2 = c1 sup_n sqrt(n^2+1) sum_p 1 / ((p^2+1) sqrt((n-p)^2+1))`, sup
/// over `|n| <= nmax` and the large-`n` limit `pi coth pi`, rounded up.
pub fn compute_c2(c1: f64, nmax: usize, exec: Exec) -> f64 {
    let pmax = 4 * nmax as i64 + 256;
    // tail |p| > pmax >= 2|n|: term <= 1/p^2 * 2/|p|, summed both sides
    let tail = 2.0 / (pmax as f64).powi(2);
    let sup = exec
        .map_range(nmax + 1, |n| {
            let n = n as i64;
            let s: f64 = (-pmax..=pmax)
                .map(|p| 1.0 / ((p * p + 1) as f64 * (((n - p) * (n - p) + 1) as f64).sqrt()))
                .sum();
            ((n * n + 1) as f64).sqrt() * (s + tail)
        })
        .into_iter()
        .fold(PI / PI.tanh(), f64::max);
    ceil12(c1 * sup)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MajorantSeries {
    pub coeffs: Vec<f64>,
}

impl MajorantSeries {
    pub fn phi(c0: f64, t: usize) -> Self {
        Self {
            coeffs: (0..=t).map(|k| c0 / ((k * k + 1) as f64)).collect(),
        }
    }

    pub fn mul(&self, other: &Self) -> Self {
        let t = self.coeffs.len().min(other.coeffs.len());
        let mut out = vec![0.0; t];
        for (i, a) in self.coeffs.iter().enumerate().take(t) {
            for (j, b) in other.coeffs.iter().enumerate().take(t - i) {
                out[i + j] += a * b;
            }
        }
        Self { coeffs: out }
    }

    pub fn derivative(&self) -> Self {
        Self {
            coeffs: self.coeffs.iter().enumerate().skip(1).map(|(k, a)| k as f64 * a).collect(),
        }
    }

    pub fn is_valid(&self) -> bool {
        self.coeffs.iter().all(|a| a.is_finite() && *a >= 0.0)
    }
}

/// `u << v` coefficient-wise; `false` on length mismatch.
pub fn dominates(u: &MajorantSeries, v: &MajorantSeries) -> bool {
    u.coeffs.len() == v.coeffs.len() && u.coeffs.iter().zip(&v.coeffs).all(|(a, b)| a <= b)
}

/// `phi^{(k)}(z) / k!` (`phi^{(k+1)}(z) / k!` when `prime`) for `0 <= z < 1`.
pub fn phi_taylor(c0: f64, z: f64, k: usize, prime: bool) -> Result<f64> {
    if !(0.0..1.0).contains(&z) {
        return Err(Error::Domain(format!("majorant argument {z} outside [0, 1)")));
    }
    // sum_{j >= k'} C(j, k') z^{j-k'} / (j^2 + 1), times (k+1) for the prime
    let kk = if prime { k + 1 } else { k };
    let mut binom = 1.0;
    let mut zp = 1.0;
    let mut sum = 0.0;
    let mut j = kk;
    loop {
        let term = binom * zp / ((j * j + 1) as f64);
        sum += term;
        if (term < 1e-18 * sum && j > kk + 8) || j > kk + 2_000_000 {
            break;
        }
        j += 1;
        binom *= j as f64 / (j - kk) as f64;
        zp *= z;
        if zp == 0.0 {
            break;
        }
    }
    let factor = if prime { (k + 1) as f64 } else { 1.0 };
    Ok(c0 * sum * factor)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Plain,
    Prime,
    One,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NormParams {
    pub gamma: f64,
    pub kappa: f64,
    pub eps: f64,
    #[serde(rename = "R")]
    pub big_r: f64,
    pub rho: f64,
    pub sbar: f64,
    pub c0: f64,
    pub c1: f64,
}

impl NormParams {
    pub fn from_instability(p: &InstabilityParams, k: &Constants) -> Self {
        Self {
            gamma: p.gamma,
            kappa: p.kappa,
            eps: p.eps,
            big_r: p.big_r,
            rho: p.rho,
            sbar: p.sbar,
            c0: k.c0,
            c1: k.c1,
        }
    }

    /// `ln` of the Fourier weight of mode `n` at time `s`.
    pub fn ln_weight(&self, n: i64, s: f64, v: Variant) -> f64 {
        let q = (n * n + 1) as f64;
        let poly = match v {
            Variant::One => 0.5 * q.ln(),
            _ => q.ln(),
        };
        self.c1.ln() - poly + (self.gamma * s - self.kappa) * weight_bracket(n) as f64
    }

    /// `ln` of the `Y^k` coefficient of `phi(RY + eps rho s)` (or `phi'`).
    pub fn ln_taylor(&self, k: usize, s: f64, v: Variant) -> Result<f64> {
        let z = self.eps * self.rho * s;
        let t = phi_taylor(self.c0, z, k, v == Variant::Prime)?;
        Ok(k as f64 * self.big_r.ln() + t.ln())
    }
}

/// Vector-valued Fourier-Taylor profile sampled on an `s`-grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ProfileSeries {
    pub sgrid: Vec<f64>,
    /// `fields[i][c]`.
    pub fields: Vec<Vec<FtSeries>>,
}

impl ProfileSeries {
    pub fn zeros(sgrid: Vec<f64>, ncomp: usize, k: usize, t: usize) -> Self {
        let fields = vec![vec![FtSeries::zeros(k, t); ncomp]; sgrid.len()];
        Self { sgrid, fields }
    }

    pub fn ncomp(&self) -> usize {
        self.fields[0].len()
    }

    /// Componentwise product (each component times the matching one).
    pub fn mul(&self, other: &Self) -> Self {
        let fields = self
            .fields
            .iter()
            .zip(&other.fields)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x.mul(y)).collect())
            .collect();
        Self {
            sgrid: self.sgrid.clone(),
            fields,
        }
    }

    pub fn scale(&self, c: f64) -> Self {
        let fields = self
            .fields
            .iter()
            .map(|a| a.iter().map(|x| x.scale(c)).collect())
            .collect();
        Self {
            sgrid: self.sgrid.clone(),
            fields,
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        let fields = self
            .fields
            .iter()
            .zip(&other.fields)
            .map(|(a, b)| {
                a.iter()
                    .zip(b)
                    .map(|(x, y)| {
                        let mut z = x.clone();
                        z.axpy(-1.0, y);
                        z
                    })
                    .collect()
            })
            .collect();
        Self {
            sgrid: self.sgrid.clone(),
            fields,
        }
    }

    /// `sup_s sum_{n, k} |c|`, an upper bound for the sup over `theta` of
    /// the `Y^0` part when `T = 0`.
    pub fn sup_abs(&self) -> f64 {
        self.fields
            .iter()
            .flat_map(|f| f.iter())
            .map(|c| c.c.iter().map(|z| z.norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.fields.iter().flatten().all(|c| c.is_finite())
    }
}

/// Smallest `C` with `|c_{n,k}(s)| <= C weight_n(s) taylor_k(s)` over the
/// lattice, sup over components.
pub fn enorm(u: &ProfileSeries, p: &NormParams, v: Variant) -> Result<f64> {
    let mut best = 0.0f64;
    for (i, &s) in u.sgrid.iter().enumerate() {
        if s > p.sbar * (1.0 + 1e-12) {
            return Err(Error::Domain(format!("s = {s} beyond sbar = {}", p.sbar)));
        }
        let f = &u.fields[i];
        let (k, t) = (f[0].k, f[0].t);
        let lt: Vec<f64> = (0..=t).map(|j| p.ln_taylor(j, s, v)).collect::<Result<_>>()?;
        for n in -(k as i64)..=k as i64 {
            let lw = p.ln_weight(n, s, v);
            for (j, ltj) in lt.iter().enumerate() {
                for comp in f {
                    let a = comp.get(n, j).norm();
                    if a > 0.0 {
                        best = best.max((a.ln() - lw - ltj).exp());
                    }
                }
            }
        }
    }
    Ok(best)
}

/// Mode-wise Duhamel integral `v_n(s) = int_0^s e^{i n (s - s') Abar} f_n(s') ds'`
/// by the trapezoid rule on a uniform grid, with exact propagators.
pub fn duhamel_apply(f: &ProfileSeries, abar: &DMatrix<f64>) -> Result<ProfileSeries> {
    let g = &f.sgrid;
    let m = g.len();
    if m < 2 {
        return Ok(ProfileSeries::zeros(g.clone(), f.ncomp(), f.fields[0][0].k, f.fields[0][0].t));
    }
    let h = g[1] - g[0];
    if g.windows(2).any(|w| ((w[1] - w[0]) - h).abs() > 1e-9 * h.max(1.0)) || g[0] != 0.0 {
        return Err(Error::Config("Duhamel quadrature needs a uniform grid starting at 0".into()));
    }
    let k = f.fields[0][0].k;
    let props = mode_propagators(abar, k, h);
    let mut out = ProfileSeries::zeros(g.clone(), f.ncomp(), k, f.fields[0][0].t);
    for j in 0..m - 1 {
        let moved = apply_modewise(&props, &out.fields[j]);
        let src = apply_modewise(&props, &f.fields[j]);
        out.fields[j + 1] = moved
            .iter()
            .zip(&src)
            .zip(&f.fields[j + 1])
            .map(|((a, b), c)| {
                let mut z = a.clone();
                z.axpy(0.5 * h, b);
                z.axpy(0.5 * h, c);
                z
            })
            .collect();
    }
    Ok(out)
}

/// Constants of the two Duhamel estimates:
/// `[[I f]] <= k_one [[f]]_1` with `k_one = sqrt 2 K_{gamma1} / (gamma - gamma1)`,
/// `gamma1 = (gamma + gamma0) / 2`, and `[[I f]] <= k_prime [[f]]'` with
/// `k_prime = K_gamma / (eps rho)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DuhamelConstants {
    pub k_gamma: f64,
    pub k_gamma1: f64,
    pub k_one: f64,
    pub k_prime: f64,
}

pub fn duhamel_constants(p: &NormParams, gamma0: f64, k_gamma: f64, k_gamma1: f64) -> DuhamelConstants {
    let gamma1 = 0.5 * (p.gamma + gamma0);
    DuhamelConstants {
        k_gamma,
        k_gamma1,
        k_one: 2f64.sqrt() * k_gamma1 / (p.gamma - gamma1),
        k_prime: k_gamma / (p.eps * p.rho),
    }
}

/// Constants of the polynomial nonlinearity bound `F << C phi(R0 Y) prod 1/(a - u_j)`:
/// with `a = 1`, `C = max |a_alpha| a^{N + |alpha|} / c0`, `R0 = 1`; on the
/// ball of radius `a0 = a/2`, `[[F(u)]] <= C0 = C / (a - a0)^N`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NonlinearBounds {
    pub a: f64,
    pub c: f64,
    pub r0: f64,
    pub a0: f64,
    pub c0_ball: f64,
}

pub fn nonlinear_bounds(polys: &[Polynomial], nvars: usize, c0: f64) -> NonlinearBounds {
    let a = 1.0f64;
    let c = polys
        .iter()
        .flat_map(|p| p.terms.iter())
        .map(|m| m.coeff.abs() * a.powi((nvars as u32 + m.powers.iter().sum::<u32>()) as i32) / c0)
        .fold(0.0, f64::max);
    let a0 = 0.5 * a;
    NonlinearBounds {
        a,
        c,
        r0: 1.0,
        a0,
        c0_ball: c / (a - a0).powi(nvars as i32),
    }
}

/// All polynomial entries entering the profile nonlinearity of `sys`.
pub fn system_polynomials(sys: &PolySystem, xibar: &[f64]) -> Vec<Polynomial> {
    let mut v: Vec<Polynomial> = sys
        .symbol_poly(xibar)
        .into_iter()
        .flatten()
        .map(|p| p.without_constant())
        .collect();
    v.extend(sys.source.iter().cloned());
    v
}

#[derive(Clone, Debug, Serialize)]
pub struct ContractionReport {
    pub f_norm: f64,
    /// `K_gamma (1/R + 4 [[f]] + R/rho)`.
    pub factor: f64,
    /// `1/2 - factor`.
    pub margin: f64,
    pub certified: bool,
    pub iterations: usize,
    /// Sup-change of the last iterate, relative to `sup |u|`.
    pub residual: f64,
    /// Sup-changes of consecutive iterates.
    pub changes: Vec<f64>,
    /// Ratios of consecutive sup-changes.
    pub ratios: Vec<f64>,
    /// `[[u - f]]`.
    pub aposteriori: f64,
    /// `factor * [[f]]`, the a-priori bound on `[[u - f]]`.
    pub apriori: f64,
    pub converged: bool,
}

/// `f(s) = e^{s Abar d_theta} h` on the grid, mode-wise.
pub fn free_evolution(abar: &DMatrix<f64>, h: &[FtSeries], sgrid: &[f64]) -> ProfileSeries {
    let k = h[0].k;
    let fields = sgrid
        .iter()
        .map(|&s| apply_modewise(&mode_propagators(abar, k, s), h))
        .collect();
    ProfileSeries {
        sgrid: sgrid.to_vec(),
        fields,
    }
}

/// Picard iteration `u <- f + T(u)` on the lattice. With `certify` the
/// feasibility condition `factor < 1/2` is required; otherwise the
/// iteration runs uncertified and the margin is only reported.
#[allow(clippy::too_many_arguments)]
pub fn contraction_solve(
    op: &ProfileOperator,
    p: &NormParams,
    f: &ProfileSeries,
    k_gamma: f64,
    certify: bool,
    tol: f64,
    max_iter: usize,
    exec: Exec,
) -> Result<(ProfileSeries, ContractionReport)> {
    let f_norm = enorm(f, p, Variant::Plain)?;
    let factor = k_gamma * (1.0 / p.big_r + 4.0 * f_norm + p.big_r / p.rho);
    let margin = 0.5 - factor;
    if certify && margin <= 0.0 {
        return Err(Error::ContractionInfeasible { factor, margin });
    }
    let mut u = f.clone();
    let mut changes = Vec::new();
    let mut converged = false;
    let mut residual = f64::INFINITY;
    for _ in 0..max_iter {
        let g_fields = exec.map(&u.fields, |fs| op.apply(fs));
        let g = ProfileSeries {
            sgrid: u.sgrid.clone(),
            fields: g_fields,
        };
        let tu = duhamel_apply(&g, &op.abar)?;
        let next = ProfileSeries {
            sgrid: u.sgrid.clone(),
            fields: f
                .fields
                .iter()
                .zip(&tu.fields)
                .map(|(a, b)| {
                    a.iter()
                        .zip(b)
                        .map(|(x, y)| {
                            let mut z = x.clone();
                            z.axpy(1.0, y);
                            z
                        })
                        .collect()
                })
                .collect(),
        };
        if !next.is_finite() {
            return Err(Error::Divergence("Picard iterate overflowed".into()));
        }
        let change = next.sub(&u).sup_abs();
        let scale = next.sup_abs().max(f64::MIN_POSITIVE);
        changes.push(change);
        u = next;
        residual = change / scale;
        if residual <= tol {
            converged = true;
            break;
        }
    }
    let ratios = changes
        .windows(2)
        .filter(|w| w[0] > 0.0)
        .map(|w| w[1] / w[0])
        .collect();
    let aposteriori = enorm(&u.sub(f), p, Variant::Plain)?;
    let report = ContractionReport {
        f_norm,
        factor,
        margin,
        certified: margin > 0.0,
        iterations: changes.len(),
        residual,
        changes,
        ratios,
        aposteriori,
        apriori: factor * f_norm,
        converged,
    };
    Ok((u, report))
}

/// Random single-component profile whose coefficients are uniform
/// fractions of the lattice weights of `variant`, so its norm is `O(1)`.
pub fn random_profile(
    seed: u64,
    p: &NormParams,
    sgrid: &[f64],
    ncomp: usize,
    k: usize,
    t: usize,
    v: Variant,
) -> Result<ProfileSeries> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = ProfileSeries::zeros(sgrid.to_vec(), ncomp, k, t);
    let density: f64 = rng.random_range(0.3..1.0);
    for (i, &s) in sgrid.iter().enumerate() {
        let lt: Vec<f64> = (0..=t).map(|j| p.ln_taylor(j, s, v)).collect::<Result<_>>()?;
        for comp in out.fields[i].iter_mut() {
            for n in -(k as i64)..=k as i64 {
                let lw = p.ln_weight(n, s, v);
                for (j, ltj) in lt.iter().enumerate() {
                    if rng.random::<f64>() > density {
                        continue;
                    }
                    let mag = rng.random::<f64>() * (lw + ltj).exp();
                    let ph = rng.random_range(0.0..2.0 * PI);
                    comp.set(n, j, Complex64::from_polar(mag, ph));
                }
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct AlgebraReport {
    pub instances: usize,
    pub submultiplicative_violations: usize,
    pub prime_product_violations: usize,
    pub one_product_violations: usize,
    pub homogeneity_violations: usize,
    /// Largest `[[uv]] / ([[u]] [[v]])` seen.
    pub worst_ratio: f64,
}

/// Seeded batch of norm-inequality checks: `[[uv]] <= [[u]][[v]]`,
/// `2 [[uv]]' <= [[u]][[v]]'`, `[[uv]]_1 <= c2 [[u]][[v]]_1` and
/// `[[2u]] = 2[[u]]`. Instance `i` uses seeds derived from `seed + i`.
#[allow(clippy::too_many_arguments)]
pub fn algebra_batch(
    p: &NormParams,
    c2: f64,
    sgrid: &[f64],
    k: usize,
    t: usize,
    count: usize,
    seed: u64,
    exec: Exec,
) -> Result<AlgebraReport> {
    let slack = 1.0 + 1e-12;
    let rows = exec.map_range(count, |i| -> Result<[f64; 4]> {
        let base = seed.wrapping_add(i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        let u = random_profile(base, p, sgrid, 1, k, t, Variant::Plain)?;
        let v = random_profile(base ^ 1, p, sgrid, 1, k, t, Variant::Plain)?;
        let vp = random_profile(base ^ 2, p, sgrid, 1, k, t, Variant::Prime)?;
        let v1 = random_profile(base ^ 3, p, sgrid, 1, k, t, Variant::One)?;
        let nu = enorm(&u, p, Variant::Plain)?;
        let sub = enorm(&u.mul(&v), p, Variant::Plain)? / (nu * enorm(&v, p, Variant::Plain)?);
        let prime = 2.0 * enorm(&u.mul(&vp), p, Variant::Prime)? / (nu * enorm(&vp, p, Variant::Prime)?);
        let one = enorm(&u.mul(&v1), p, Variant::One)? / (c2 * nu * enorm(&v1, p, Variant::One)?);
        let hom = (enorm(&u.scale(2.0), p, Variant::Plain)? / (2.0 * nu) - 1.0).abs();
        Ok([sub, prime, one, hom])
    });
    let mut rep = AlgebraReport {
        instances: count,
        ..Default::default()
    };
    for r in rows {
        let [sub, prime, one, hom] = r?;
        rep.worst_ratio = rep.worst_ratio.max(sub);
        rep.submultiplicative_violations += (sub > slack) as usize;
        rep.prime_product_violations += (prime > slack) as usize;
        rep.one_product_violations += (one > slack) as usize;
        rep.homogeneity_violations += (hom > 1e-12) as usize;
    }
    Ok(rep)
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct DuhamelCheck {
    pub instances: usize,
    pub one_violations: usize,
    pub prime_violations: usize,
    pub worst_one: f64,
    pub worst_prime: f64,
}

/// `[[I f]] <= k_one [[f]]_1` and `[[I f]] <= k_prime [[f]]'` on seeded
/// random vector-valued `f`.
#[allow(clippy::too_many_arguments)]
pub fn duhamel_batch(
    p: &NormParams,
    abar: &DMatrix<f64>,
    dc: &DuhamelConstants,
    sgrid: &[f64],
    k: usize,
    t: usize,
    count: usize,
    seed: u64,
    exec: Exec,
) -> Result<DuhamelCheck> {
    let n = abar.nrows();
    let rows = exec.map_range(count, |i| -> Result<(f64, f64)> {
        let base = seed.wrapping_add(i as u64).wrapping_mul(0xD1B5_4A32_D192_ED03);
        let v = if i % 2 == 0 { Variant::One } else { Variant::Prime };
        let f = random_profile(base, p, sgrid, n, k, t, v)?;
        let out = enorm(&duhamel_apply(&f, abar)?, p, Variant::Plain)?;
        let one = out / (dc.k_one * enorm(&f, p, Variant::One)?);
        let prime = out / (dc.k_prime * enorm(&f, p, Variant::Prime)?);
        Ok((one, prime))
    });
    let mut rep = DuhamelCheck {
        instances: count,
        ..Default::default()
    };
    for r in rows {
        let (one, prime) = r?;
        rep.worst_one = rep.worst_one.max(one);
        rep.worst_prime = rep.worst_prime.max(prime);
        rep.one_violations += (one > 1.0 + 1e-9) as usize;
        rep.prime_violations += (prime > 1.0 + 1e-9) as usize;
    }
    Ok(rep)
}

/// Largest `(n^2+1) c1 sum_{p+q=n} 1/((p^2+1)(q^2+1))` over `|n| <= nmax`,
/// using the tail-bounded upper sum; `<= 1` is the convolution inequality.
pub fn c1_inequality_worst(c1: f64, nmax: usize, exec: Exec) -> f64 {
    let pmax = full_sum_cutoff(nmax);
    exec.map_range(nmax + 1, |n| {
        let n = n as i64;
        (n * n + 1) as f64 * c1 * full_convolution_upper(n, pmax)
    })
    .into_iter()
    .fold(0.0, f64::max)
}

/// `<p + q> <= <p> + <q>` for all `|p|, |q| <= r`.
pub fn bracket_subadditive(r: i64) -> bool {
    (-r..=r).all(|p| (-r..=r).all(|q| weight_bracket(p + q) <= weight_bracket(p) + weight_bracket(q)))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContractionSettings {
    pub eps: f64,
    #[serde(rename = "M")]
    pub big_m: f64,
    pub beta: f64,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "T")]
    pub t: usize,
    /// Grid points on `[0, sbar * s_fraction]`.
    pub s_points: usize,
    pub s_fraction: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Refuse to iterate when the feasibility margin is not positive.
    pub certify: bool,
    /// Truncation for the constants `c0, c1`.
    pub constants_order: usize,
    /// `tau` samples for the semigroup constant.
    pub semigroup_samples: usize,
}

impl Default for ContractionSettings {
    fn default() -> Self {
        Self {
            eps: 1e-2,
            big_m: 3.0,
            beta: 0.1,
            k: 32,
            t: 0,
            s_points: 1001,
            s_fraction: 0.5,
            tol: 1e-10,
            max_iter: 200,
            certify: false,
            constants_order: 200,
            semigroup_samples: 400,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ContractionExperiment {
    pub norm: NormParams,
    pub constants: Constants,
    pub gamma0: f64,
    pub duhamel: DuhamelConstants,
    pub nonlinear: NonlinearBounds,
    pub report: ContractionReport,
    /// Largest measured iterate ratio.
    pub worst_ratio: f64,
    /// `sup_s sum_n |u_n - w_n|` against the integrating-factor solver.
    pub agreement: f64,
}

/// Builds the linear data for the growing mode, solves `u = f + T(u)` on
/// `[0, s_fraction * sbar]` and compares with the profile ODE solver on
/// the same grid.
pub fn contraction_experiment(
    sys: &PolySystem,
    xibar: f64,
    st: &ContractionSettings,
    exec: Exec,
) -> Result<ContractionExperiment> {
    use crate::instability::{growing_mode, initial_profile, make_params, semigroup_bound_check, solve_profile, HoelderInputs};
    if st.s_points < 2 {
        return Err(Error::Config("s_points must be >= 2".into()));
    }
    let op = ProfileOperator::new(sys, &[xibar], st.eps)?;
    let gm = growing_mode(&op.abar)?;
    let ip = make_params(st.eps, st.big_m, st.beta, gm.gamma0, HoelderInputs::default())?;
    let constants = compute_constants(st.constants_order, st.constants_order, exec);
    let norm = NormParams::from_instability(&ip, &constants);
    let send = st.s_fraction * ip.sbar;
    let sgrid: Vec<f64> = (0..st.s_points)
        .map(|j| send * j as f64 / (st.s_points - 1) as f64)
        .collect();
    let k_gamma = semigroup_bound_check(&op.abar, norm.gamma, st.k, ip.sbar, st.semigroup_samples, exec)?;
    let gamma1 = 0.5 * (norm.gamma + gm.gamma0);
    let k_gamma1 = semigroup_bound_check(&op.abar, gamma1, st.k, ip.sbar, st.semigroup_samples, exec)?;
    let duhamel = duhamel_constants(&norm, gm.gamma0, k_gamma, k_gamma1);
    let nonlinear = nonlinear_bounds(&system_polynomials(sys, &[xibar]), sys.n, constants.c0);
    let h0 = initial_profile(&ip, &gm.r, st.k, st.t);
    let f = free_evolution(&op.abar, &h0, &sgrid);
    let (u, report) = contraction_solve(&op, &norm, &f, k_gamma, st.certify, st.tol, st.max_iter, exec)?;
    let ds = sgrid[1] - sgrid[0];
    let traj = solve_profile(&op, h0, send, ds, 1)?;
    if traj.fields.len() != sgrid.len() {
        return Err(Error::Precondition(format!(
            "profile solver returned {} rows, expected {}",
            traj.fields.len(),
            sgrid.len()
        )));
    }
    let other = ProfileSeries {
        sgrid: sgrid.clone(),
        fields: traj.fields,
    };
    let agreement = u.sub(&other).sup_abs();
    let worst_ratio = report.ratios.iter().copied().fold(0.0, f64::max);
    Ok(ContractionExperiment {
        norm,
        constants,
        gamma0: gm.gamma0,
        duhamel,
        nonlinear,
        report,
        worst_ratio,
        agreement,
    })
}
