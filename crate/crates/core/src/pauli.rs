//! Exact algebra of generalized Pauli (Weyl) operators on d-level sites.
//!
//! The single-site generators are the clock and shift operators,
//! `Z|k> = q^k |k>` and `X|k> = |k-1 mod d>` with `q = exp(2*pi*i/d)`.
//! They obey the exchange rule `X Z = q Z X`, so any product of Z and X
//! factors normalizes to `phase * Z^z X^x` per site, where the phase is a
//! power of the 2d-th root of unity. Words carry that power as an integer
//! exponent, so composition and daggering stay exact; floating point only
//! enters when a word is realized as a dense matrix or applied to a state.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Dense complex matrix used for operator realizations.
pub type CMatrix = DMatrix<Complex64>;

pub(crate) fn check_d(d: usize) -> Result<()> {
    if d < 2 {
        return Err(Error::InvalidDimension { d });
    }
    Ok(())
}

/// `exp(2*pi*i * num / den)`, exact at quarter turns so that the d = 2 and
/// d = 4 algebras produce literal `1, i, -1, -i` values.
pub(crate) fn root_of_unity(num: i64, den: i64) -> Complex64 {
    let r = num.rem_euclid(den);
    if (4 * r) % den == 0 {
        return match (4 * r / den) % 4 {
            0 => Complex64::new(1.0, 0.0),
            1 => Complex64::new(0.0, 1.0),
            2 => Complex64::new(-1.0, 0.0),
            _ => Complex64::new(0.0, -1.0),
        };
    }
    let theta = 2.0 * std::f64::consts::PI * (r as f64) / (den as f64);
    Complex64::new(theta.cos(), theta.sin())
}

/// The primitive d-th root of unity raised to the k-th power, `q_d^k`.
pub fn primitive_root(d: usize, k: i64) -> Result<Complex64> {
    check_d(d)?;
    Ok(root_of_unity(k, d as i64))
}

/// Clock matrix `Z = diag(1, q, q^2, ..., q^(d-1))`.
pub fn z_matrix(d: usize) -> Result<CMatrix> {
    check_d(d)?;
    let mut m = CMatrix::zeros(d, d);
    for k in 0..d {
        m[(k, k)] = root_of_unity(k as i64, d as i64);
    }
    Ok(m)
}

/// Shift matrix with `X|k> = |k-1 mod d>`; for d = 2 this is the usual
/// sigma-x.
pub fn x_matrix(d: usize) -> Result<CMatrix> {
    check_d(d)?;
    let mut m = CMatrix::zeros(d, d);
    for k in 0..d {
        m[((k + d - 1) % d, k)] = Complex64::new(1.0, 0.0);
    }
    Ok(m)
}

/// Negation operator `U|k> = |-k mod d>`. It is a self-inverse permutation
/// satisfying `U X U = X^dagger` and `U Z U = Z^dagger`; for d = 2 it is the
/// identity.
pub fn negation_matrix(d: usize) -> Result<CMatrix> {
    check_d(d)?;
    let mut m = CMatrix::zeros(d, d);
    for k in 0..d {
        m[((d - k) % d, k)] = Complex64::new(1.0, 0.0);
    }
    Ok(m)
}

/// Global phase of a word, stored as the integer exponent `t` of the 2d-th
/// root of unity: the represented value is `exp(2*pi*i * t / (2d))`.
///
/// Products of Z and X factors only ever generate such phases (the exchange
/// rule contributes q = the square of the 2d-th root), so integer arithmetic
/// on `t` tracks them without rounding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PhaseExp {
    d: usize,
    t: usize,
}

impl PhaseExp {
    /// The trivial phase (+1) for level count `d`.
    pub fn zero(d: usize) -> Result<Self> {
        check_d(d)?;
        Ok(Self { d, t: 0 })
    }

    /// Phase with exponent `t`, reduced modulo 2d.
    pub fn new(d: usize, t: i64) -> Result<Self> {
        check_d(d)?;
        let t = t.rem_euclid(2 * d as i64) as usize;
        Ok(Self { d, t })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// The exponent t in `exp(2*pi*i * t / (2d))`, always in `0..2d`.
    pub fn exponent(&self) -> usize {
        self.t
    }

    pub fn is_trivial(&self) -> bool {
        self.t == 0
    }

    /// Product of two phases (exponents add mod 2d).
    pub fn times(&self, other: &PhaseExp) -> Result<PhaseExp> {
        if self.d != other.d {
            return Err(Error::DimensionClash { a: self.d, b: other.d });
        }
        Ok(Self { d: self.d, t: (self.t + other.t) % (2 * self.d) })
    }

    /// Complex conjugate (the inverse phase).
    pub fn conj(&self) -> PhaseExp {
        Self { d: self.d, t: (2 * self.d - self.t) % (2 * self.d) }
    }

    /// Numeric value of the phase.
    pub fn value(&self) -> Complex64 {
        root_of_unity(self.t as i64, 2 * self.d as i64)
    }
}

/// A scalar phase times a product of per-site factors `Z^z X^x`.
///
/// Per site the Z factor stands to the left of the X factor. Multiplication
/// reorders with `X^m Z^n = q^(m n) Z^n X^m` and folds the q power into the
/// global [`PhaseExp`]. Sites with exponents (0, 0) are not stored, so the
/// identity word is empty.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PauliWord {
    d: usize,
    phase: PhaseExp,
    terms: BTreeMap<usize, (usize, usize)>,
}

impl PauliWord {
    /// The identity word for level count `d`.
    pub fn identity(d: usize) -> Result<Self> {
        Ok(Self { d, phase: PhaseExp::zero(d)?, terms: BTreeMap::new() })
    }

    /// A word with a single-site factor `Z^z X^x` (exponents reduced mod d).
    pub fn single(d: usize, site: usize, z: usize, x: usize) -> Result<Self> {
        let mut w = Self::identity(d)?;
        let (z, x) = (z % d, x % d);
        if (z, x) != (0, 0) {
            w.terms.insert(site, (z, x));
        }
        Ok(w)
    }

    /// A single Z factor at `site`.
    pub fn z(d: usize, site: usize) -> Result<Self> {
        Self::single(d, site, 1, 0)
    }

    /// A single X factor at `site`.
    pub fn x(d: usize, site: usize) -> Result<Self> {
        Self::single(d, site, 0, 1)
    }

    /// The same word with `t` added to the phase exponent.
    pub fn with_phase(mut self, t: i64) -> Self {
        let cur = self.phase.t as i64;
        self.phase = PhaseExp::new(self.d, cur + t).expect("d already validated");
        self
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn phase(&self) -> PhaseExp {
        self.phase
    }

    /// Exponents `(z, x)` at `site`; (0, 0) if the site carries no factor.
    pub fn exponents(&self, site: usize) -> (usize, usize) {
        self.terms.get(&site).copied().unwrap_or((0, 0))
    }

    /// Sites carrying a nontrivial factor, ascending.
    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        self.terms.keys().copied()
    }

    /// Iterate `(site, z, x)` over nontrivial factors, ascending by site.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        self.terms.iter().map(|(&s, &(z, x))| (s, z, x))
    }

    /// True when the word is the identity with trivial phase.
    pub fn is_identity(&self) -> bool {
        self.terms.is_empty() && self.phase.is_trivial()
    }

    /// Largest site index in the support, if any.
    pub fn max_site(&self) -> Option<usize> {
        self.terms.keys().next_back().copied()
    }

    /// Product `self * other` in canonical form.
    ///
    /// Site exponents add mod d; every reorder of the rhs Z factor past the
    /// lhs X factor at the same site contributes `q^(x_lhs * z_rhs)` to the
    /// phase, which is exponent `2 * x_lhs * z_rhs` of the 2d-th root.
    pub fn mul(&self, other: &PauliWord) -> Result<PauliWord> {
        if self.d != other.d {
            return Err(Error::DimensionClash { a: self.d, b: other.d });
        }
        let d = self.d;
        let mut t = (self.phase.t + other.phase.t) as i64;
        let mut terms = self.terms.clone();
        for (&site, &(z2, x2)) in &other.terms {
            let (z1, x1) = terms.get(&site).copied().unwrap_or((0, 0));
            t += 2 * (x1 * z2) as i64;
            let merged = ((z1 + z2) % d, (x1 + x2) % d);
            if merged == (0, 0) {
                terms.remove(&site);
            } else {
                terms.insert(site, merged);
            }
        }
        Ok(PauliWord { d, phase: PhaseExp::new(d, t)?, terms })
    }

    /// Hermitian adjoint in canonical form.
    pub fn dagger(&self) -> PauliWord {
        let d = self.d;
        let mut t = -(self.phase.t as i64);
        let mut terms = BTreeMap::new();
        for (&site, &(z, x)) in &self.terms {
            // (Z^z X^x)^dagger = X^(d-x) Z^(d-z), reordered to canonical form.
            let m = (d - x) % d;
            let n = (d - z) % d;
            t += 2 * (m * n) as i64;
            if (n, m) != (0, 0) {
                terms.insert(site, (n, m));
            }
        }
        PauliWord { d, phase: PhaseExp::new(d, t).expect("d validated"), terms }
    }

    /// Dense matrix for the factor `Z^z X^x` on one site.
    pub fn site_matrix(d: usize, z: usize, x: usize) -> Result<CMatrix> {
        check_d(d)?;
        let (z, x) = (z % d, x % d);
        let mut m = CMatrix::zeros(d, d);
        for col in 0..d {
            let row = (col + d - x) % d;
            m[(row, col)] = root_of_unity((z * row) as i64, d as i64);
        }
        Ok(m)
    }

    /// Dense realization on an `n_sites` register, with site 0 as the
    /// leftmost (most significant) tensor factor.
    pub fn dense_matrix(&self, n_sites: usize) -> Result<CMatrix> {
        if let Some(max) = self.max_site() {
            if max >= n_sites {
                return Err(Error::SiteOutOfRange { site: max, sites: n_sites });
            }
        }
        let d = self.d;
        let mut acc = CMatrix::from_element(1, 1, self.phase.value());
        let eye = CMatrix::identity(d, d);
        for site in 0..n_sites {
            let (z, x) = self.exponents(site);
            if (z, x) == (0, 0) {
                acc = acc.kronecker(&eye);
            } else {
                acc = acc.kronecker(&Self::site_matrix(d, z, x)?);
            }
        }
        Ok(acc)
    }
}

impl fmt::Display for PauliWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if !self.phase.is_trivial() {
            parts.push(format!("e({}/{})", self.phase.t, 2 * self.d));
        }
        for (&site, &(z, x)) in &self.terms {
            if z == 1 {
                parts.push(format!("Z{site}"));
            } else if z > 1 {
                parts.push(format!("Z{site}^{z}"));
            }
            if x == 1 {
                parts.push(format!("X{site}"));
            } else if x > 1 {
                parts.push(format!("X{site}^{x}"));
            }
        }
        if parts.is_empty() {
            return write!(f, "I");
        }
        write!(f, "{}", parts.join("*"))
    }
}

/// Free-function form of [`PauliWord::mul`].
pub fn pauli_mul(a: &PauliWord, b: &PauliWord) -> Result<PauliWord> {
    a.mul(b)
}

/// Free-function form of [`PauliWord::dagger`].
pub fn pauli_dagger(a: &PauliWord) -> PauliWord {
    a.dagger()
}
