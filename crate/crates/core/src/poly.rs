//! Sparse multivariate polynomials given as monomial lists.
//!
//! Used for the curvature-measure density `φ(x)` (variables `x₁, x₂, x₃` of the
//! unit direction) and for the graph right-hand side `H(x₁, x₂, g)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Monomial {
    pub coeff: f64,
    pub powers: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Polynomial {
    terms: Vec<Monomial>,
}

impl Polynomial {
    pub fn new(terms: Vec<Monomial>, arity: usize) -> Result<Self> {
        let p = Self { terms };
        p.check_arity(arity)?;
        Ok(p)
    }

    pub fn constant(c: f64, arity: usize) -> Self {
        Self {
            terms: vec![Monomial { coeff: c, powers: vec![0; arity] }],
        }
    }

    /// `c + Σ_i a_i·v_i` for the listed linear coefficients.
    pub fn affine(c: f64, linear: &[f64]) -> Self {
        let arity = linear.len();
        let mut terms = vec![Monomial { coeff: c, powers: vec![0; arity] }];
        for (i, &a) in linear.iter().enumerate() {
            if a != 0.0 {
                let mut powers = vec![0; arity];
                powers[i] = 1;
                terms.push(Monomial { coeff: a, powers });
            }
        }
        Self { terms }
    }

    pub fn terms(&self) -> &[Monomial] {
        &self.terms
    }

    pub fn check_arity(&self, arity: usize) -> Result<()> {
        if self.terms.is_empty() {
            return Err(Error::InvalidProblem("polynomial has no terms".into()));
        }
        for (i, t) in self.terms.iter().enumerate() {
            if t.powers.len() != arity {
                return Err(Error::InvalidProblem(format!(
                    "monomial {i} has {} exponents, expected {arity}",
                    t.powers.len()
                )));
            }
            if !t.coeff.is_finite() {
                return Err(Error::NonFinite(format!("coefficient of monomial {i}")));
            }
        }
        Ok(())
    }

    pub fn eval(&self, vars: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                t.powers
                    .iter()
                    .zip(vars)
                    .fold(t.coeff, |acc, (&p, &v)| acc * v.powi(p as i32))
            })
            .sum()
    }

    /// Whether every term other than a constant has zero coefficient in variable `var`.
    pub fn independent_of(&self, var: usize) -> bool {
        self.terms.iter().all(|t| t.coeff == 0.0 || t.powers[var] == 0)
    }

    /// Partial derivative with respect to variable `var`.
    pub fn partial(&self, var: usize) -> Polynomial {
        let mut terms: Vec<Monomial> = self
            .terms
            .iter()
            .filter(|t| t.powers[var] > 0)
            .map(|t| {
                let mut powers = t.powers.clone();
                powers[var] -= 1;
                Monomial { coeff: t.coeff * t.powers[var] as f64, powers }
            })
            .collect();
        if terms.is_empty() {
            let arity = self.terms.first().map_or(0, |t| t.powers.len());
            terms.push(Monomial { coeff: 0.0, powers: vec![0; arity] });
        }
        Polynomial { terms }
    }

    pub fn is_constant(&self, c: f64) -> bool {
        let total: f64 = self
            .terms
            .iter()
            .filter(|t| t.powers.iter().all(|&p| p == 0))
            .map(|t| t.coeff)
            .sum();
        let rest = self
            .terms
            .iter()
            .all(|t| t.coeff == 0.0 || t.powers.iter().all(|&p| p == 0));
        rest && total == c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evaluates_monomials() {
        let p = Polynomial::new(
            vec![
                Monomial { coeff: 1.0, powers: vec![0, 0, 0] },
                Monomial { coeff: 0.2, powers: vec![0, 0, 1] },
                Monomial { coeff: -3.0, powers: vec![2, 1, 0] },
            ],
            3,
        )
        .unwrap();
        assert_eq!(p.eval(&[2.0, 0.5, 1.0]), 1.0 + 0.2 - 3.0 * 4.0 * 0.5);
        assert!(!p.is_constant(1.0));
        assert!(Polynomial::affine(1.0, &[0.0, 0.0, 0.0]).is_constant(1.0));
        assert!(!p.independent_of(2));
        assert!(Polynomial::affine(1.0, &[0.0, 0.0, 0.2]).independent_of(0));
    }

    #[test]
    fn partial_derivatives() {
        // p = 3x²y + y − 2
        let p = Polynomial::new(
            vec![
                Monomial { coeff: 3.0, powers: vec![2, 1] },
                Monomial { coeff: 1.0, powers: vec![0, 1] },
                Monomial { coeff: -2.0, powers: vec![0, 0] },
            ],
            2,
        )
        .unwrap();
        let (x, y) = (0.7, -1.3);
        assert!((p.partial(0).eval(&[x, y]) - 6.0 * x * y).abs() < 1e-14);
        assert!((p.partial(1).eval(&[x, y]) - (3.0 * x * x + 1.0)).abs() < 1e-14);
        assert_eq!(p.partial(0).partial(0).partial(0).eval(&[x, y]), 0.0);
    }

    #[test]
    fn arity_is_checked() {
        let err = Polynomial::new(vec![Monomial { coeff: 1.0, powers: vec![1, 0] }], 3);
        assert!(err.is_err());
        assert!(Polynomial::new(vec![], 3).is_err());
    }
}
