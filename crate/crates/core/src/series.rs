//! Truncated Fourier-Taylor series `sum_{|n| <= K, j <= T} c_{n,j} e^{in theta} Y^j`
//! and the nonlinear part of the profile equation for polynomial systems.
//!
//! Products are direct truncated convolutions. FFT products would seed
//! round-off into empty high modes, which the profile equation then
//! amplifies like `e^{|n| s gamma0}`.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::poly::{Polynomial, Ring};
use crate::symbol::{principal_symbol, PolySystem};

#[derive(Clone, Debug, PartialEq)]
pub struct FtSeries {
    pub k: usize,
    pub t: usize,
    /// Index `(n + K) * (T + 1) + j`.
    pub c: Vec<Complex64>,
}

impl FtSeries {
    pub fn zeros(k: usize, t: usize) -> Self {
        Self {
            k,
            t,
            c: vec![Complex64::default(); (2 * k + 1) * (t + 1)],
        }
    }

    #[inline]
    pub fn idx(&self, n: i64, j: usize) -> usize {
        (n + self.k as i64) as usize * (self.t + 1) + j
    }

    pub fn get(&self, n: i64, j: usize) -> Complex64 {
        if n.unsigned_abs() as usize > self.k || j > self.t {
            return Complex64::default();
        }
        self.c[self.idx(n, j)]
    }

    pub fn set(&mut self, n: i64, j: usize, z: Complex64) {
        let i = self.idx(n, j);
        self.c[i] = z;
    }

    pub fn modes(&self) -> std::ops::RangeInclusive<i64> {
        -(self.k as i64)..=self.k as i64
    }

    /// `d/d theta`.
    pub fn dtheta(&self) -> Self {
        let mut out = self.clone();
        for n in self.modes() {
            for j in 0..=self.t {
                let i = self.idx(n, j);
                out.c[i] = self.c[i] * Complex64::new(0.0, n as f64);
            }
        }
        out
    }

    /// `d/dY`.
    pub fn dy(&self) -> Self {
        let mut out = Self::zeros(self.k, self.t);
        for n in self.modes() {
            for j in 0..self.t {
                out.set(n, j, self.get(n, j + 1) * (j + 1) as f64);
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.c.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.c.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Value at `theta` of the `Y^0` part.
    pub fn eval_theta(&self, theta: f64) -> Complex64 {
        self.modes()
            .map(|n| self.get(n, 0) * Complex64::from_polar(1.0, n as f64 * theta))
            .sum()
    }

    pub fn axpy(&mut self, a: f64, x: &FtSeries) {
        for (y, x) in self.c.iter_mut().zip(&x.c) {
            *y += x * a;
        }
    }
}

impl Ring for FtSeries {
    fn zero_like(&self) -> Self {
        Self::zeros(self.k, self.t)
    }
    fn one_like(&self) -> Self {
        let mut o = Self::zeros(self.k, self.t);
        o.set(0, 0, Complex64::new(1.0, 0.0));
        o
    }
    fn add(&self, other: &Self) -> Self {
        let mut o = self.clone();
        for (a, b) in o.c.iter_mut().zip(&other.c) {
            *a += b;
        }
        o
    }
    fn mul(&self, other: &Self) -> Self {
        let (k, t) = (self.k as i64, self.t);
        let mut o = Self::zeros(self.k, self.t);
        for p in -k..=k {
            for i in 0..=t {
                let a = self.c[self.idx(p, i)];
                if a.re == 0.0 && a.im == 0.0 {
                    continue;
                }
                for q in (-k - p).max(-k)..=(k - p).min(k) {
                    for j in 0..=(t - i) {
                        let b = other.c[other.idx(q, j)];
                        if b.re == 0.0 && b.im == 0.0 {
                            continue;
                        }
                        let at = o.idx(p + q, i + j);
                        o.c[at] += a * b;
                    }
                }
            }
        }
        o
    }
    fn scale(&self, c: f64) -> Self {
        let mut o = self.clone();
        for z in &mut o.c {
            *z *= c;
        }
        o
    }
}

/// Right-hand side pieces of the profile equation
/// `u_s = Abar u_theta + G(u)` with
/// `G(u) = (A(u) - Abar) u_theta + eps (F(u) + (sum_j A_j(u) - I) u_Y)`,
/// where `A(u) = sum_j xibar_j A_j(u)`. The last term is the slow-variable
/// derivative with `y` collapsed to `Y = t + sum x_j`, exact for
/// autonomous systems.
#[derive(Clone, Debug)]
pub struct ProfileOperator {
    pub n: usize,
    pub abar: DMatrix<f64>,
    pub eps: f64,
    a_nl: Vec<Vec<Polynomial>>,
    b: Vec<Vec<Polynomial>>,
    src: Vec<Polynomial>,
}

impl ProfileOperator {
    pub fn new(sys: &PolySystem, xibar: &[f64], eps: f64) -> Result<Self> {
        sys.validate()?;
        if xibar.len() != sys.d {
            return Err(Error::Config(format!("xibar must have {} entries", sys.d)));
        }
        let zero_x = vec![0.0; sys.d];
        let zero_u = vec![0.0; sys.n];
        let abar = principal_symbol(sys, 0.0, &zero_x, &zero_u, xibar)?;
        let a_nl = sys
            .symbol_poly(xibar)
            .into_iter()
            .map(|r| r.into_iter().map(|p| p.without_constant()).collect())
            .collect();
        let ones = vec![1.0; sys.d];
        let mut b = sys.symbol_poly(&ones);
        for (i, row) in b.iter_mut().enumerate() {
            row[i] = std::mem::take(&mut row[i]).plus(Polynomial::constant(-1.0, sys.n));
        }
        Ok(Self {
            n: sys.n,
            abar,
            eps,
            a_nl,
            b,
            src: sys.source.clone(),
        })
    }

    pub fn apply(&self, u: &[FtSeries]) -> Vec<FtSeries> {
        let proto = u[0].zero_like();
        let du: Vec<FtSeries> = u.iter().map(|c| c.dtheta()).collect();
        let taylor = u[0].t > 0;
        let dy: Vec<FtSeries> = if taylor { u.iter().map(|c| c.dy()).collect() } else { Vec::new() };
        (0..self.n)
            .map(|r| {
                let mut acc = proto.clone();
                for c in 0..self.n {
                    if !self.a_nl[r][c].is_zero() {
                        acc = acc.add(&self.a_nl[r][c].eval_ring(u).mul(&du[c]));
                    }
                    if taylor && !self.b[r][c].is_zero() {
                        acc = acc.add(&self.b[r][c].eval_ring(u).mul(&dy[c]).scale(self.eps));
                    }
                }
                if !self.src[r].is_zero() {
                    acc = acc.add(&self.src[r].eval_ring(u).scale(self.eps));
                }
                acc
            })
            .collect()
    }

    /// True when `G` vanishes identically (constant coefficients, no source).
    pub fn is_linear_free(&self) -> bool {
        self.a_nl.iter().flatten().all(|p| p.is_zero()) && self.src.iter().all(|p| p.is_zero())
    }
}
