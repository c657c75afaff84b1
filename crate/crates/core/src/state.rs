//! Dense state-vector engine for registers of n sites with d levels each.
//!
//! Amplitudes are stored flat, with site 0 as the most significant base-d
//! digit of the index. All gates preserve the norm; measurements collapse
//! and renormalize. Measured sites stay in the register (projected onto the
//! observed basis vector); [`StateVector::extract_output_state`] drops them
//! once every non-output site has a recorded outcome.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};

use num_complex::Complex64;
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::pauli::{check_d, root_of_unity, CMatrix, PauliWord};

/// Branches whose probability falls below this cannot be forced and are
/// skipped during enumeration.
pub const MIN_BRANCH_PROBABILITY: f64 = 1e-12;

/// How far a matrix may deviate from unitarity before it is rejected.
const UNITARY_TOL: f64 = 1e-9;

/// How far an input factor may deviate from unit norm.
const INPUT_NORM_TOL: f64 = 1e-9;

static REGISTER_CAP: AtomicUsize = AtomicUsize::new(1 << 22);

/// Current cap on the number of amplitudes a register may hold.
pub fn register_cap() -> usize {
    REGISTER_CAP.load(Ordering::Relaxed)
}

/// Replace the amplitude cap (default 2^22). Constructors refuse registers
/// beyond the cap before allocating anything.
pub fn set_register_cap(amps: usize) {
    REGISTER_CAP.store(amps.max(2), Ordering::Relaxed);
}

fn checked_amp_count(d: usize, n: usize) -> Result<usize> {
    let cap = register_cap();
    let mut total: u128 = 1;
    for _ in 0..n {
        total *= d as u128;
        if total > cap as u128 {
            return Err(Error::RegisterTooLarge { amps: total, cap });
        }
    }
    Ok(total as usize)
}

/// Measurement basis for one site: the computational (Z) basis or the
/// Fourier (X) basis whose vectors `|x_s> = d^(-1/2) sum_k q^(s k) |k>` are
/// X eigenvectors with eigenvalue `q^s`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum MeasurementBasis {
    Z,
    X,
}

impl fmt::Display for MeasurementBasis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MeasurementBasis::Z => write!(f, "Z"),
            MeasurementBasis::X => write!(f, "X"),
        }
    }
}

/// One recorded measurement: which basis was used and which index came out.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SiteOutcome {
    pub basis: MeasurementBasis,
    pub value: usize,
}

/// How a measurement picks its outcome: sampled from the Born distribution
/// with the caller's generator, or forced to a given index.
pub enum MeasurePolicy<'r> {
    Random(&'r mut dyn RngCore),
    Forced(usize),
}

/// Result of measuring one site.
#[derive(Debug, Clone)]
pub struct Measurement {
    pub outcome: usize,
    pub probability: f64,
    pub state: StateVector,
}

/// The uniform single-site vector `d^(-1/2) (1, 1, ..., 1)`.
pub fn plus_state(d: usize) -> Result<Vec<Complex64>> {
    check_d(d)?;
    let a = Complex64::new(1.0 / (d as f64).sqrt(), 0.0);
    Ok(vec![a; d])
}

/// The Fourier basis vector `|x_s>` with amplitudes `d^(-1/2) q^(s k)`.
pub fn fourier_basis_vector(d: usize, s: usize) -> Result<Vec<Complex64>> {
    check_d(d)?;
    if s >= d {
        return Err(Error::OutcomeOutOfRange { value: s, d });
    }
    let scale = 1.0 / (d as f64).sqrt();
    Ok((0..d)
        .map(|k| root_of_unity((s * k) as i64, d as i64) * scale)
        .collect())
}

/// Haar-random single-site state: complex normal entries, normalized.
pub fn random_unit_vector<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Result<Vec<Complex64>> {
    check_d(d)?;
    let mut v: Vec<Complex64> = (0..d)
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(re, im)
        })
        .collect();
    let norm = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    if norm < 1e-9 {
        return Err(Error::ZeroNorm { norm });
    }
    for c in &mut v {
        *c /= norm;
    }
    Ok(v)
}

/// Dense register of `n` sites with `d` levels each.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    d: usize,
    n: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    /// Tensor product of single-site factors; factor `i` becomes site `i`.
    /// Every factor must hold `d` amplitudes and be normalized within 1e-9.
    pub fn product_state(d: usize, factors: &[Vec<Complex64>]) -> Result<Self> {
        check_d(d)?;
        if factors.is_empty() {
            return Err(Error::NoFactors);
        }
        let n = factors.len();
        let len = checked_amp_count(d, n)?;
        for f in factors {
            if f.len() != d {
                return Err(Error::BadAmplitudeCount { expected: d, got: f.len() });
            }
            let norm = f.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > INPUT_NORM_TOL {
                return Err(Error::NotNormalized { norm });
            }
        }
        let mut amps = vec![Complex64::new(1.0, 0.0); len];
        let mut stride = len;
        for f in factors {
            stride /= d;
            for (idx, amp) in amps.iter_mut().enumerate() {
                *amp *= f[(idx / stride) % d];
            }
        }
        let mut state = Self { d, n, amps };
        state.renormalize()?;
        Ok(state)
    }

    /// Wrap a flat amplitude list whose length is a power of d. The list
    /// must be normalized within 1e-9; it is renormalized exactly.
    pub fn from_amplitudes(d: usize, amps: Vec<Complex64>) -> Result<Self> {
        check_d(d)?;
        let mut n = 0;
        let mut len = 1usize;
        while len < amps.len() {
            len = len.checked_mul(d).ok_or(Error::RegisterTooLarge {
                amps: amps.len() as u128,
                cap: register_cap(),
            })?;
            n += 1;
        }
        if len != amps.len() || n == 0 {
            return Err(Error::BadAmplitudeCount { expected: len, got: amps.len() });
        }
        checked_amp_count(d, n)?;
        let norm = amps.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > INPUT_NORM_TOL {
            return Err(Error::NotNormalized { norm });
        }
        let mut state = Self { d, n, amps };
        state.renormalize()?;
        Ok(state)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Number of sites in the register.
    pub fn site_count(&self) -> usize {
        self.n
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    fn renormalize(&mut self) -> Result<()> {
        let norm = self.norm();
        if norm < 1e-300 {
            return Err(Error::ZeroNorm { norm });
        }
        for c in &mut self.amps {
            *c /= norm;
        }
        Ok(())
    }

    fn check_site(&self, site: usize) -> Result<()> {
        if site >= self.n {
            return Err(Error::SiteOutOfRange { site, sites: self.n });
        }
        Ok(())
    }

    /// Index weight of `site`: d^(n - 1 - site).
    fn stride(&self, site: usize) -> usize {
        self.d.pow((self.n - 1 - site) as u32)
    }

    fn digit(&self, index: usize, site: usize) -> usize {
        (index / self.stride(site)) % self.d
    }

    /// Inner product `<self|other>`.
    pub fn inner(&self, other: &StateVector) -> Result<Complex64> {
        if self.d != other.d {
            return Err(Error::DimensionClash { a: self.d, b: other.d });
        }
        if self.amps.len() != other.amps.len() {
            return Err(Error::ShapeMismatch {
                expected: self.amps.len(),
                got: other.amps.len(),
            });
        }
        Ok(self
            .amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    /// `|<self|other>|`, insensitive to a global phase on either state.
    pub fn fidelity_up_to_phase(&self, other: &StateVector) -> Result<f64> {
        Ok(self.inner(other)?.norm())
    }

    /// Symmetric controlled-phase gate: multiplies the amplitude of
    /// `|.. i .. j ..>` (digits at `a` and `b`) by `q^(i j)`. For d = 2 the
    /// only affected amplitude is `|11>`, which picks up -1.
    pub fn apply_controlled_phase(&mut self, a: usize, b: usize) -> Result<()> {
        self.check_site(a)?;
        self.check_site(b)?;
        if a == b {
            return Err(Error::DuplicateSite { site: a });
        }
        let d = self.d;
        let q: Vec<Complex64> = (0..d).map(|k| root_of_unity(k as i64, d as i64)).collect();
        let (sa, sb) = (self.stride(a), self.stride(b));
        for (idx, amp) in self.amps.iter_mut().enumerate() {
            let i = (idx / sa) % d;
            let j = (idx / sb) % d;
            *amp *= q[(i * j) % d];
        }
        Ok(())
    }

    /// Apply a d x d matrix to one site. The matrix must be unitary within
    /// 1e-9, which keeps the register normalized.
    pub fn apply_single_site(&mut self, site: usize, m: &CMatrix) -> Result<()> {
        self.check_site(site)?;
        let d = self.d;
        if m.nrows() != d || m.ncols() != d {
            return Err(Error::ShapeMismatch { expected: d * d, got: m.nrows() * m.ncols() });
        }
        let gram = m.adjoint() * m;
        let eye = CMatrix::identity(d, d);
        let deviation = (&gram - &eye).iter().map(|c| c.norm()).fold(0.0, f64::max);
        if deviation > UNITARY_TOL {
            return Err(Error::NotUnitary { deviation });
        }
        let stride = self.stride(site);
        let block = stride * d;
        let mut tmp = vec![Complex64::new(0.0, 0.0); d];
        for base in (0..self.amps.len()).step_by(block) {
            for inner in 0..stride {
                let at = |k: usize| base + inner + k * stride;
                for (k, t) in tmp.iter_mut().enumerate() {
                    *t = (0..d).map(|j| m[(k, j)] * self.amps[at(j)]).sum();
                }
                for k in 0..d {
                    self.amps[at(k)] = tmp[k];
                }
            }
        }
        Ok(())
    }

    /// Apply a [`PauliWord`], phase included, site by site.
    pub fn apply_pauli_word(&mut self, w: &PauliWord) -> Result<()> {
        if w.d() != self.d {
            return Err(Error::DimensionClash { a: self.d, b: w.d() });
        }
        if let Some(max) = w.max_site() {
            self.check_site(max)?;
        }
        let d = self.d;
        let q: Vec<Complex64> = (0..d).map(|k| root_of_unity(k as i64, d as i64)).collect();
        if !w.phase().is_trivial() {
            let phase = w.phase().value();
            for amp in &mut self.amps {
                *amp *= phase;
            }
        }
        for (site, z, x) in w.iter() {
            // Z^z X^x maps |k> to q^(z r) |r> with r = k - x mod d.
            let stride = self.stride(site);
            let mut next = vec![Complex64::new(0.0, 0.0); self.amps.len()];
            for (idx, amp) in self.amps.iter().enumerate() {
                let k = (idx / stride) % d;
                let r = (k + d - x) % d;
                let target = idx - k * stride + r * stride;
                next[target] = q[(z * r) % d] * amp;
            }
            self.amps = next;
        }
        Ok(())
    }

    /// Born probabilities for measuring `site` in `basis`.
    pub fn site_distribution(&self, site: usize, basis: MeasurementBasis) -> Result<Vec<f64>> {
        self.check_site(site)?;
        let d = self.d;
        let mut probs = vec![0.0; d];
        match basis {
            MeasurementBasis::Z => {
                for (idx, amp) in self.amps.iter().enumerate() {
                    probs[self.digit(idx, site)] += amp.norm_sqr();
                }
            }
            MeasurementBasis::X => {
                let scale = 1.0 / (d as f64).sqrt();
                let stride = self.stride(site);
                let block = stride * d;
                for base in (0..self.amps.len()).step_by(block) {
                    for inner in 0..stride {
                        for (s, p) in probs.iter_mut().enumerate() {
                            let c: Complex64 = (0..d)
                                .map(|k| {
                                    root_of_unity(-((s * k) as i64), d as i64)
                                        * self.amps[base + inner + k * stride]
                                })
                                .sum();
                            *p += (c * scale).norm_sqr();
                        }
                    }
                }
            }
        }
        Ok(probs)
    }

    /// Measure one site. The returned state keeps the site, projected onto
    /// the observed basis vector and renormalized.
    pub fn measure_site(
        &self,
        site: usize,
        basis: MeasurementBasis,
        policy: MeasurePolicy,
    ) -> Result<Measurement> {
        let probs = self.site_distribution(site, basis)?;
        let d = self.d;
        let outcome = match policy {
            MeasurePolicy::Forced(s) => {
                if s >= d {
                    return Err(Error::OutcomeOutOfRange { value: s, d });
                }
                if probs[s] < MIN_BRANCH_PROBABILITY {
                    return Err(Error::ImpossibleBranch { probability: probs[s] });
                }
                s
            }
            MeasurePolicy::Random(rng) => {
                let total: f64 = probs.iter().sum();
                let u = rng.gen::<f64>() * total;
                let mut cum = 0.0;
                let mut picked = d - 1;
                for (s, p) in probs.iter().enumerate() {
                    cum += p;
                    if u < cum {
                        picked = s;
                        break;
                    }
                }
                picked
            }
        };
        let mut state = self.clone();
        let stride = state.stride(site);
        match basis {
            MeasurementBasis::Z => {
                for (idx, amp) in state.amps.iter_mut().enumerate() {
                    if (idx / stride) % d != outcome {
                        *amp = Complex64::new(0.0, 0.0);
                    }
                }
            }
            MeasurementBasis::X => {
                let scale = 1.0 / (d as f64).sqrt();
                let block = stride * d;
                for base in (0..state.amps.len()).step_by(block) {
                    for inner in 0..stride {
                        let at = |k: usize| base + inner + k * stride;
                        let c: Complex64 = (0..d)
                            .map(|k| {
                                root_of_unity(-((outcome * k) as i64), d as i64)
                                    * state.amps[at(k)]
                            })
                            .sum::<Complex64>()
                            * scale;
                        for k in 0..d {
                            state.amps[at(k)] =
                                c * scale * root_of_unity((outcome * k) as i64, d as i64);
                        }
                    }
                }
            }
        }
        state.renormalize()?;
        Ok(Measurement { outcome, probability: probs[outcome], state })
    }

    /// Drop every measured site and return the register on `outputs`,
    /// ordered as given. `measured` must record an outcome for exactly the
    /// non-output sites; the slice taken through the recorded outcomes is
    /// renormalized.
    pub fn extract_output_state(
        &self,
        outputs: &[usize],
        measured: &BTreeMap<usize, SiteOutcome>,
    ) -> Result<StateVector> {
        if outputs.is_empty() {
            return Err(Error::NoFactors);
        }
        let d = self.d;
        let mut seen = BTreeSet::new();
        for &site in outputs {
            self.check_site(site)?;
            if !seen.insert(site) {
                return Err(Error::DuplicateSite { site });
            }
            if measured.contains_key(&site) {
                return Err(Error::BadOutcomeRecord {
                    site,
                    reason: "output site also appears in the outcome record",
                });
            }
        }
        let mut fixed = vec![None; self.n];
        let mut x_count = 0usize;
        for (&site, oc) in measured {
            self.check_site(site)?;
            if oc.value >= d {
                return Err(Error::OutcomeOutOfRange { value: oc.value, d });
            }
            fixed[site] = Some(match oc.basis {
                // A Z-collapsed site holds |s| exactly; slice at digit s.
                MeasurementBasis::Z => oc.value,
                // An X-collapsed site holds |x_s|, whose digit-0 component
                // is d^(-1/2) regardless of s; slice at digit 0.
                MeasurementBasis::X => {
                    x_count += 1;
                    0
                }
            });
        }
        for site in 0..self.n {
            if fixed[site].is_none() && !outputs.contains(&site) {
                return Err(Error::BadOutcomeRecord {
                    site,
                    reason: "non-output site has no recorded outcome",
                });
            }
        }
        let out_len = checked_amp_count(d, outputs.len())?;
        let base: usize = (0..self.n)
            .filter_map(|site| fixed[site].map(|digit| digit * self.stride(site)))
            .sum();
        let mut amps = Vec::with_capacity(out_len);
        for ridx in 0..out_len {
            let mut idx = base;
            let mut rest = ridx;
            for &site in outputs.iter().rev() {
                idx += (rest % d) * self.stride(site);
                rest /= d;
            }
            amps.push(self.amps[idx]);
        }
        let norm = amps.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        let expected = (d as f64).powf(-(x_count as f64) / 2.0);
        if norm < 1e-6 * expected {
            return Err(Error::ImpossibleBranch { probability: (norm / expected).powi(2) });
        }
        for c in &mut amps {
            *c /= norm;
        }
        Ok(StateVector { d, n: outputs.len(), amps })
    }

    /// Base-2 entanglement entropy of the bipartition `part_a` against the
    /// remaining sites, from the singular values of the reshaped amplitude
    /// matrix.
    pub fn schmidt_entropy(&self, part_a: &BTreeSet<usize>) -> Result<f64> {
        if part_a.is_empty() || part_a.len() >= self.n {
            return Err(Error::TrivialBipartition);
        }
        for &site in part_a {
            self.check_site(site)?;
        }
        let d = self.d;
        let part_b: Vec<usize> = (0..self.n).filter(|s| !part_a.contains(s)).collect();
        let a_sites: Vec<usize> = part_a.iter().copied().collect();
        let rows = checked_amp_count(d, a_sites.len())?;
        let cols = checked_amp_count(d, part_b.len())?;
        let mut m = CMatrix::zeros(rows, cols);
        for (idx, amp) in self.amps.iter().enumerate() {
            let mut r = 0;
            for &site in &a_sites {
                r = r * d + self.digit(idx, site);
            }
            let mut c = 0;
            for &site in &part_b {
                c = c * d + self.digit(idx, site);
            }
            m[(r, c)] = *amp;
        }
        let sv = m.svd(false, false).singular_values;
        let mut entropy = 0.0;
        for s in sv.iter() {
            let p = s * s;
            if p > 1e-15 {
                entropy -= p * p.log2();
            }
        }
        Ok(entropy)
    }
}
