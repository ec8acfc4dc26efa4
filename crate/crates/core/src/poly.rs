//! Polynomial expressions over agent state coordinates.
//!
//! Agent nonlinearities are declared as sparse sums of monomials in the
//! internal state `z` and the chain state `x`. Keeping them as data (rather
//! than closures) makes agent models comparable, serializable into scenario
//! files, and deterministic to evaluate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One term `coeff * prod z_i^{z_powers[i]} * prod x_j^{x_powers[j]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub coeff: f64,
    /// Exponent per `z` coordinate; length equals the owning model's `nz`.
    #[serde(default)]
    pub z_powers: Vec<u32>,
    /// Exponent per `x` coordinate; length equals the owning model's `nx`.
    #[serde(default)]
    pub x_powers: Vec<u32>,
}

/// A scalar polynomial in `(z, x)`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PolyExpr {
    pub terms: Vec<Monomial>,
}

impl PolyExpr {
    pub fn zero() -> Self {
        Self { terms: Vec::new() }
    }

    /// Start a builder for a polynomial over `nz` z-coordinates and `nx`
    /// x-coordinates.
    pub fn builder(nz: usize, nx: usize) -> PolyBuilder {
        PolyBuilder {
            nz,
            nx,
            terms: Vec::new(),
        }
    }

    /// Evaluate at `(z, x)`. Zero exponents never index their slice, so a
    /// polynomial that does not involve `z` may be evaluated with an empty
    /// `z` slice.
    pub fn eval(&self, z: &[f64], x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for m in &self.terms {
            let mut v = m.coeff;
            for (i, &p) in m.z_powers.iter().enumerate() {
                if p > 0 {
                    v *= z[i].powi(p as i32);
                }
            }
            for (j, &p) in m.x_powers.iter().enumerate() {
                if p > 0 {
                    v *= x[j].powi(p as i32);
                }
            }
            acc += v;
        }
        acc
    }

    /// True when no term touches a `z` coordinate.
    pub fn is_x_only(&self) -> bool {
        self.terms
            .iter()
            .all(|m| m.z_powers.iter().all(|&p| p == 0))
    }

    /// Check that every term carries exponent vectors of the expected
    /// lengths (shorter vectors are allowed and padded on normalization).
    pub fn validate_dims(&self, nz: usize, nx: usize) -> Result<()> {
        for m in &self.terms {
            if m.z_powers.len() > nz || m.x_powers.len() > nx {
                return Err(Error::Dimension(format!(
                    "monomial exponents ({}, {}) exceed state dims (nz={nz}, nx={nx})",
                    m.z_powers.len(),
                    m.x_powers.len()
                )));
            }
        }
        Ok(())
    }

    /// Pad every exponent vector to the full `(nz, nx)` lengths so that
    /// structurally equal polynomials compare equal.
    pub fn normalized(mut self, nz: usize, nx: usize) -> Self {
        for m in &mut self.terms {
            m.z_powers.resize(nz, 0);
            m.x_powers.resize(nx, 0);
        }
        self
    }
}

pub struct PolyBuilder {
    nz: usize,
    nx: usize,
    terms: Vec<Monomial>,
}

impl PolyBuilder {
    /// Add `coeff * prod z[i]^p * prod x[j]^q` from sparse `(index, power)`
    /// lists.
    pub fn term(mut self, coeff: f64, z: &[(usize, u32)], x: &[(usize, u32)]) -> Self {
        let mut zp = vec![0u32; self.nz];
        let mut xp = vec![0u32; self.nx];
        for &(i, p) in z {
            assert!(i < self.nz, "z index {i} out of range (nz={})", self.nz);
            zp[i] += p;
        }
        for &(j, p) in x {
            assert!(j < self.nx, "x index {j} out of range (nx={})", self.nx);
            xp[j] += p;
        }
        self.terms.push(Monomial {
            coeff,
            z_powers: zp,
            x_powers: xp,
        });
        self
    }

    pub fn build(self) -> PolyExpr {
        PolyExpr { terms: self.terms }
    }
}
