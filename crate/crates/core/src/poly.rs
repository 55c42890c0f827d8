//! Multivariate polynomials in the state variables, used for coefficient
//! tables of user systems and for evaluating coefficients on series.

use serde::{Deserialize, Serialize};

/// Commutative algebra over the reals: scalars, truncated Fourier series,
/// Fourier-Taylor profile series.
pub trait Ring: Clone {
    fn zero_like(&self) -> Self;
    fn one_like(&self) -> Self;
    fn add(&self, other: &Self) -> Self;
    fn mul(&self, other: &Self) -> Self;
    fn scale(&self, c: f64) -> Self;
}

impl Ring for f64 {
    fn zero_like(&self) -> Self {
        0.0
    }
    fn one_like(&self) -> Self {
        1.0
    }
    fn add(&self, other: &Self) -> Self {
        self + other
    }
    fn mul(&self, other: &Self) -> Self {
        self * other
    }
    fn scale(&self, c: f64) -> Self {
        self * c
    }
}

/// `coeff * prod_i u_i^{powers[i]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub coeff: f64,
    pub powers: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct Polynomial {
    pub terms: Vec<Monomial>,
}

impl Polynomial {
    pub fn zero() -> Self {
        Self { terms: Vec::new() }
    }

    pub fn constant(c: f64, nvars: usize) -> Self {
        Self {
            terms: vec![Monomial {
                coeff: c,
                powers: vec![0; nvars],
            }],
        }
    }

    pub fn monomial(c: f64, powers: Vec<u32>) -> Self {
        Self {
            terms: vec![Monomial { coeff: c, powers }],
        }
    }

    pub fn plus(mut self, other: Polynomial) -> Self {
        self.terms.extend(other.terms);
        self
    }

    pub fn degree(&self) -> u32 {
        self.terms
            .iter()
            .map(|m| m.powers.iter().sum::<u32>())
            .max()
            .unwrap_or(0)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.iter().all(|m| m.coeff == 0.0)
    }

    /// Check that every monomial has `nvars` exponents.
    pub fn validate(&self, nvars: usize) -> Result<(), String> {
        for m in &self.terms {
            if m.powers.len() != nvars {
                return Err(format!(
                    "monomial has {} exponents, expected {nvars}",
                    m.powers.len()
                ));
            }
            if !m.coeff.is_finite() {
                return Err(format!("non-finite coefficient {}", m.coeff));
            }
        }
        Ok(())
    }

    pub fn eval(&self, u: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|m| {
                m.powers
                    .iter()
                    .zip(u)
                    .fold(m.coeff, |acc, (&p, &x)| acc * x.powi(p as i32))
            })
            .sum()
    }

    /// The polynomial with its value at `u = 0` removed.
    pub fn without_constant(&self) -> Self {
        Self {
            terms: self
                .terms
                .iter()
                .filter(|m| m.powers.iter().any(|&p| p > 0))
                .cloned()
                .collect(),
        }
    }

    /// Evaluate on ring elements (`vars.len()` must match the exponents).
    /// Powers are built once per variable and reused across monomials.
    pub fn eval_ring<R: Ring>(&self, vars: &[R]) -> R {
        let proto = &vars[0];
        let mut acc = proto.zero_like();
        let maxp: Vec<u32> = (0..vars.len())
            .map(|i| {
                self.terms
                    .iter()
                    .map(|m| m.powers[i])
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let powers: Vec<Vec<R>> = vars
            .iter()
            .zip(&maxp)
            .map(|(v, &mp)| {
                let mut pw = vec![v.one_like()];
                for k in 1..=mp as usize {
                    let next = pw[k - 1].mul(v);
                    pw.push(next);
                }
                pw
            })
            .collect();
        for m in &self.terms {
            if m.coeff == 0.0 {
                continue;
            }
            let mut term: Option<R> = None;
            for (i, &p) in m.powers.iter().enumerate() {
                if p == 0 {
                    continue;
                }
                let f = &powers[i][p as usize];
                term = Some(match term {
                    None => f.clone(),
                    Some(t) => t.mul(f),
                });
            }
            let term = match term {
                None => proto.one_like(),
                Some(t) => t,
            };
            acc = acc.add(&term.scale(m.coeff));
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eval_matches_ring_eval_on_scalars() {
        // 1 - 3 u^2 + 2 u v
        let p = Polynomial::constant(1.0, 2)
            .plus(Polynomial::monomial(-3.0, vec![2, 0]))
            .plus(Polynomial::monomial(2.0, vec![1, 1]));
        let u = [0.7, -1.3];
        let direct = p.eval(&u);
        assert!((direct - (1.0 - 3.0 * 0.49 + 2.0 * 0.7 * -1.3)).abs() < 1e-14);
        assert!((p.eval_ring(&u) - direct).abs() < 1e-14);
        assert_eq!(p.degree(), 2);
        assert!((p.without_constant().eval(&u) - (direct - 1.0)).abs() < 1e-14);
    }

    #[test]
    fn validate_rejects_wrong_arity() {
        let p = Polynomial::monomial(1.0, vec![1]);
        assert!(p.validate(2).is_err());
        assert!(p.validate(1).is_ok());
    }
}
