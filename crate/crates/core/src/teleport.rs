//! The teleport protocol: measure every non-output site of a cluster in
//! the Fourier basis, read the outcome digits, and apply a local
//! correction to the output register so it reproduces the input exactly.
//!
//! Closed-form corrections are provided for wire layouts (disjoint odd
//! paths from input to output) and for the six-site coupled pair of qubit
//! wires. Any other layout falls back to a search that tries every
//! single-site candidate and fails loudly when none restores the input.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use nalgebra::DVector;
use num_complex::Complex64;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cluster::{build_cluster, BuildSpec};
use crate::error::{Error, Result};
use crate::graph::{ClusterGraph, SiteRole};
use crate::pauli::{negation_matrix, CMatrix, PauliWord};
use crate::state::{
    MeasurePolicy, MeasurementBasis, SiteOutcome, StateVector,
};

/// How close to 1 the corrected overlap must come for a branch to count
/// as a perfect transfer.
pub const PERFECT_FIDELITY: f64 = 1.0 - 1e-10;

/// Hard cap on the number of branches the enumerating policy will visit.
const ENUMERATION_CAP: usize = 1 << 16;

// ---------------------------------------------------------------------------
// Corrections
// ---------------------------------------------------------------------------

/// A local recovery operation on the output register: an optional digit
/// negation on some sites followed by a phase-tracked Z/X word. Applying
/// it means negating first, then applying the word, so the operator reads
/// `word * N(negated)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Correction {
    negated: BTreeSet<usize>,
    word: PauliWord,
}

impl Correction {
    pub fn identity(d: usize) -> Result<Self> {
        Ok(Self { negated: BTreeSet::new(), word: PauliWord::identity(d)? })
    }

    pub fn from_parts(word: PauliWord, negated: BTreeSet<usize>) -> Self {
        Self { negated, word }
    }

    pub fn d(&self) -> usize {
        self.word.d()
    }

    pub fn word(&self) -> &PauliWord {
        &self.word
    }

    pub fn negated(&self) -> &BTreeSet<usize> {
        &self.negated
    }

    pub fn is_identity(&self) -> bool {
        self.negated.is_empty() && self.word.is_identity()
    }

    /// Combine corrections that act on disjoint output sites.
    pub fn merge(&self, other: &Correction) -> Result<Correction> {
        if let Some(&site) = self.negated.intersection(&other.negated).next() {
            return Err(Error::DuplicateSite { site });
        }
        let word = self.word.mul(&other.word)?;
        let negated = self.negated.union(&other.negated).copied().collect();
        Ok(Correction { negated, word })
    }

    /// Apply to a register: digit negation at the flagged sites first,
    /// then the word.
    pub fn apply(&self, state: &mut StateVector) -> Result<()> {
        if !self.negated.is_empty() {
            let neg = negation_matrix(self.d())?;
            for &site in &self.negated {
                state.apply_single_site(site, &neg)?;
            }
        }
        state.apply_pauli_word(&self.word)
    }

    /// The full operator on `sites` registers as a dense matrix.
    pub fn dense_matrix(&self, sites: usize) -> Result<CMatrix> {
        let d = self.d();
        let word = self.word.dense_matrix(sites)?;
        let neg = negation_matrix(d)?;
        let eye = CMatrix::identity(d, d);
        let mut nall = CMatrix::identity(1, 1);
        for site in 0..sites {
            let factor = if self.negated.contains(&site) { &neg } else { &eye };
            nall = nall.kronecker(factor);
        }
        Ok(word * nall)
    }

    /// Whether two corrections implement the same operator up to a global
    /// phase on `sites` registers.
    pub fn equiv_up_to_phase(&self, other: &Correction, sites: usize) -> Result<bool> {
        if self.d() != other.d() {
            return Err(Error::DimensionClash { a: self.d(), b: other.d() });
        }
        let a = self.dense_matrix(sites)?;
        let b = other.dense_matrix(sites)?;
        let mut pivot = None;
        let mut best = 0.0;
        for (i, v) in a.iter().enumerate() {
            if v.norm() > best {
                best = v.norm();
                pivot = Some(i);
            }
        }
        let Some(i) = pivot else { return Ok(false) };
        let phase = b[i] / a[i];
        if (phase.norm() - 1.0).abs() > 1e-9 {
            return Ok(false);
        }
        let diff = (&b - a * phase).iter().map(|v| v.norm()).fold(0.0, f64::max);
        Ok(diff < 1e-9)
    }
}

impl fmt::Display for Correction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let negs: Vec<String> = self.negated.iter().map(|s| format!("N{s}")).collect();
        if self.negated.is_empty() {
            write!(f, "{}", self.word)
        } else if self.word.is_identity() {
            write!(f, "{}", negs.join("*"))
        } else {
            write!(f, "{}*{}", self.word, negs.join("*"))
        }
    }
}

/// Signed positional sums of the measured digits along a wire: `a` over
/// odd positions (first, third, ...) and `b` over even positions, each
/// weighted by an alternating sign that starts at +1 for the pair closest
/// to the output.
fn alternating_sums(outcomes: &[usize]) -> (i64, i64) {
    let k = outcomes.len() / 2;
    let mut a: i64 = 0;
    let mut b: i64 = 0;
    for j in 1..=k {
        let sign: i64 = if (k - j) % 2 == 0 { 1 } else { -1 };
        a += sign * outcomes[2 * j - 2] as i64;
        b -= sign * outcomes[2 * j - 1] as i64;
    }
    (a, b)
}

fn chain_correction_at(d: usize, outcomes: &[usize], site: usize) -> Result<Correction> {
    if outcomes.is_empty() || outcomes.len() % 2 != 0 {
        return Err(Error::BadGraphShape(format!(
            "a teleport wire measures an even number of sites, got {}",
            outcomes.len()
        )));
    }
    for &s in outcomes {
        if s >= d {
            return Err(Error::OutcomeOutOfRange { value: s, d });
        }
    }
    let k = outcomes.len() / 2;
    let (a, b) = alternating_sums(outcomes);
    let dd = d as i64;
    // The leftover on the output is Z^a X^b N^k; undo it. N is its own
    // inverse and conjugates both generators to their inverses, so an odd
    // number of hops flips the sign of the exponents and leaves one
    // negation to perform (a no-op for qubits).
    let (z, x, negate) = if k % 2 == 0 {
        ((-a).rem_euclid(dd) as usize, (-b).rem_euclid(dd) as usize, false)
    } else {
        (a.rem_euclid(dd) as usize, b.rem_euclid(dd) as usize, d > 2)
    };
    let word = PauliWord::single(d, site, 0, x)?.mul(&PauliWord::single(d, site, z, 0)?)?;
    let negated = if negate { BTreeSet::from([site]) } else { BTreeSet::new() };
    Ok(Correction::from_parts(word, negated))
}

/// Correction for one wire of any odd length, from its measured digits in
/// path order (input end first).
pub fn correction_chain_collective(d: usize, outcomes: &[usize]) -> Result<Correction> {
    chain_correction_at(d, outcomes, 0)
}

/// Correction for the three-site unit at general d: digits `s1` at the
/// input site and `s2` at the middle site.
pub fn correction_qudit_chain(d: usize, s1: usize, s2: usize) -> Result<Correction> {
    correction_chain_collective(d, &[s1, s2])
}

/// Qubit special case of the three-site unit, `X^s2 Z^s1` and nothing else.
pub fn correction_one_wire_qubit(s1: usize, s2: usize) -> Result<Correction> {
    correction_chain_collective(2, &[s1, s2])
}

/// Correction for the six-site coupled pair of qubit wires. The digits
/// are the outcomes at sites 0 through 3 in order: the two inputs, then
/// the body site on wire 0, then the shared body site.
pub fn correction_coupled_pair(s: [usize; 4]) -> Result<Correction> {
    let d = 2;
    for &v in &s {
        if v >= d {
            return Err(Error::OutcomeOutOfRange { value: v, d });
        }
    }
    let [s1, s2, s3, s4] = s;
    // Leftover on the outputs: Z^s1 X^s3 on wire 0 and Z^s2 X^(s3+s4) on
    // wire 1, because the shared body site feeds its digit to both wires.
    let leftover = PauliWord::single(d, 0, s1, s3)?
        .mul(&PauliWord::single(d, 1, s2, (s3 + s4) % d)?)?;
    Ok(Correction::from_parts(leftover.dagger(), BTreeSet::new()))
}

// ---------------------------------------------------------------------------
// Correction search (the oracle for layouts without a closed form)
// ---------------------------------------------------------------------------

fn site_candidates(d: usize) -> Result<Vec<(bool, usize, usize)>> {
    let mut out = Vec::new();
    for z in 0..d {
        for x in 0..d {
            out.push((false, z, x));
            if d > 2 {
                out.push((true, z, x));
            }
        }
    }
    Ok(out)
}

fn candidate_matrix(d: usize, negate: bool, z: usize, x: usize) -> Result<CMatrix> {
    let word = PauliWord::site_matrix(d, z, x)?;
    if negate {
        Ok(word * negation_matrix(d)?)
    } else {
        Ok(word)
    }
}

fn reduced_density(state: &StateVector, site: usize) -> CMatrix {
    let d = state.d();
    let n = state.site_count();
    let stride = d.pow((n - 1 - site) as u32);
    let mut rho = CMatrix::zeros(d, d);
    for (idx, amp) in state.amplitudes().iter().enumerate() {
        let i = (idx / stride) % d;
        let base = idx - i * stride;
        for j in 0..d {
            rho[(i, j)] += amp * state.amplitudes()[base + j * stride].conj();
        }
    }
    rho
}

/// Search for a local correction site by site: for each output site, pick
/// the candidate (negation flag plus Z/X exponents) whose image of the
/// site's reduced density matrix has full overlap with the intended
/// state. Errors with [`Error::ProtocolBroken`] when no candidate works,
/// which is what happens on layouts that do not actually teleport.
pub fn derive_correction_oracle(
    state: &StateVector,
    targets: &[Vec<Complex64>],
) -> Result<Correction> {
    let d = state.d();
    if targets.len() != state.site_count() {
        return Err(Error::ShapeMismatch { expected: state.site_count(), got: targets.len() });
    }
    let candidates = site_candidates(d)?;
    let mut word = PauliWord::identity(d)?;
    let mut negated = BTreeSet::new();
    for (site, target) in targets.iter().enumerate() {
        if target.len() != d {
            return Err(Error::BadAmplitudeCount { expected: d, got: target.len() });
        }
        let t = DVector::from_column_slice(target);
        let rho = reduced_density(state, site);
        let mut best_score = -1.0;
        let mut best = (false, 0usize, 0usize);
        for &(negate, z, x) in &candidates {
            let m = candidate_matrix(d, negate, z, x)?;
            let u = m.adjoint() * &t;
            let score = (u.adjoint() * &rho * &u)[(0, 0)].re;
            if score > best_score {
                best_score = score;
                best = (negate, z, x);
            }
        }
        if best_score < PERFECT_FIDELITY * PERFECT_FIDELITY {
            return Err(Error::ProtocolBroken(format!(
                "no single-site recovery restores output site {site}; best overlap {best_score:.6}"
            )));
        }
        let (negate, z, x) = best;
        if negate {
            negated.insert(site);
        }
        word = word.mul(&PauliWord::single(d, site, z, x)?)?;
    }
    Ok(Correction::from_parts(word, negated))
}

/// Exhaustive variant of the search: tries every joint assignment of
/// site candidates and scores the full register fidelity. Slower, but it
/// does not assume the recovery factorizes, so agreement with
/// [`derive_correction_oracle`] certifies that byproducts stay local.
pub fn derive_correction_oracle_joint(
    state: &StateVector,
    targets: &[Vec<Complex64>],
) -> Result<Correction> {
    let d = state.d();
    if targets.len() != state.site_count() {
        return Err(Error::ShapeMismatch { expected: state.site_count(), got: targets.len() });
    }
    let target = StateVector::product_state(d, targets)?;
    let candidates = site_candidates(d)?;
    let sites = state.site_count();
    let total = candidates.len().checked_pow(sites as u32).filter(|&t| t <= ENUMERATION_CAP);
    let Some(total) = total else {
        return Err(Error::TooManyBranches {
            branches: (candidates.len() as u128)
                .checked_pow(sites as u32)
                .unwrap_or(u128::MAX),
            cap: ENUMERATION_CAP,
        });
    };
    let mut best_score = -1.0;
    let mut best: Option<Correction> = None;
    for mut code in 0..total {
        let mut word = PauliWord::identity(d)?;
        let mut negated = BTreeSet::new();
        for site in 0..sites {
            let (negate, z, x) = candidates[code % candidates.len()];
            code /= candidates.len();
            if negate {
                negated.insert(site);
            }
            word = word.mul(&PauliWord::single(d, site, z, x)?)?;
        }
        let cand = Correction::from_parts(word, negated);
        let mut moved = state.clone();
        cand.apply(&mut moved)?;
        let score = moved.fidelity_up_to_phase(&target)?;
        if score > best_score {
            best_score = score;
            best = Some(cand);
        }
    }
    let cand = best.expect("candidate list is never empty");
    if best_score < PERFECT_FIDELITY {
        return Err(Error::ProtocolBroken(format!(
            "no joint local recovery restores the output register; best overlap {best_score:.6}"
        )));
    }
    Ok(cand)
}

// ---------------------------------------------------------------------------
// Layout classification and the protocol runner
// ---------------------------------------------------------------------------

/// How a graph teleports: disjoint odd wires with a closed-form
/// correction per wire, the coupled pair with its four-digit formula, or
/// anything else, which runs through the correction search.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProtocolKind {
    /// One site path per wire, in wire order, input end first.
    Wires(Vec<Vec<usize>>),
    CoupledPair,
    General,
}

/// Decide which correction rule a graph gets.
pub fn classify(graph: &ClusterGraph) -> Result<ProtocolKind> {
    if graph.wire_count() == 0 {
        return Err(Error::UnsupportedGraph(
            "the graph has no input/output wires to teleport".into(),
        ));
    }
    if graph.d() == 2 {
        if let Ok(pair) = ClusterGraph::coupled_pair(2) {
            if *graph == pair {
                return Ok(ProtocolKind::CoupledPair);
            }
        }
    }
    let mut paths = Vec::new();
    let mut covered = BTreeSet::new();
    for w in 0..graph.wire_count() {
        let start = graph.input_site(w)?;
        let mut path = vec![start];
        let mut prev = None;
        let mut cur = start;
        loop {
            if graph.role(cur)? == SiteRole::Output(w) {
                break;
            }
            let next: Vec<usize> = graph
                .neighbors(cur)?
                .into_iter()
                .filter(|&n| Some(n) != prev)
                .collect();
            if next.len() != 1 || path.contains(&next[0]) {
                return Ok(ProtocolKind::General);
            }
            prev = Some(cur);
            cur = next[0];
            path.push(cur);
        }
        for (i, &site) in path.iter().enumerate() {
            let ok = match graph.role(site)? {
                SiteRole::Input(iw) => i == 0 && iw == w,
                SiteRole::Output(ow) => i + 1 == path.len() && ow == w,
                SiteRole::Body => i > 0 && i + 1 < path.len(),
            };
            if !ok {
                return Ok(ProtocolKind::General);
            }
        }
        if path.len() < 3 || path.len() % 2 == 0 {
            return Ok(ProtocolKind::General);
        }
        if graph.neighbors(*path.last().expect("path is nonempty"))?.len() != 1 {
            return Ok(ProtocolKind::General);
        }
        covered.extend(path.iter().copied());
        paths.push(path);
    }
    if covered.len() != graph.site_count() {
        return Ok(ProtocolKind::General);
    }
    Ok(ProtocolKind::Wires(paths))
}

/// How the runner picks measurement outcomes.
#[derive(Debug, Clone)]
pub enum RunPolicy {
    /// Visit every outcome tuple once and report its exact probability.
    EnumerateAll,
    /// Sample `trials` runs with a seeded generator.
    Random { seed: u64, trials: usize },
    /// Force one specific outcome per measured site.
    Forced(BTreeMap<usize, usize>),
}

/// One completed branch of the protocol.
#[derive(Debug, Clone)]
pub struct ProtocolBranch {
    /// Digit observed at each measured site.
    pub outcomes: BTreeMap<usize, SiteOutcome>,
    /// Joint probability of those digits.
    pub probability: f64,
    /// The recovery that was applied to the output register.
    pub correction: Correction,
    /// Overlap of the corrected output with the input product, ideally 1.
    pub fidelity: f64,
    /// The corrected output register, one site per wire.
    pub output: StateVector,
}

enum BranchPolicy<'a> {
    Forced(&'a BTreeMap<usize, usize>),
    Rng(&'a mut ChaCha8Rng),
}

fn correction_for(
    graph: &ClusterGraph,
    kind: &ProtocolKind,
    outcomes: &BTreeMap<usize, SiteOutcome>,
    extracted: &StateVector,
    inputs: &[Vec<Complex64>],
) -> Result<Correction> {
    let d = graph.d();
    let digit = |site: usize| -> Result<usize> {
        outcomes
            .get(&site)
            .map(|o| o.value)
            .ok_or(Error::BadOutcomeRecord { site, reason: "site was not measured" })
    };
    match kind {
        ProtocolKind::Wires(paths) => {
            let mut correction = Correction::identity(d)?;
            for (w, path) in paths.iter().enumerate() {
                let digits: Vec<usize> = path[..path.len() - 1]
                    .iter()
                    .map(|&s| digit(s))
                    .collect::<Result<_>>()?;
                correction = correction.merge(&chain_correction_at(d, &digits, w)?)?;
            }
            Ok(correction)
        }
        ProtocolKind::CoupledPair => {
            correction_coupled_pair([digit(0)?, digit(1)?, digit(2)?, digit(3)?])
        }
        ProtocolKind::General => derive_correction_oracle(extracted, inputs),
    }
}

fn run_branch(
    graph: &ClusterGraph,
    cluster: &StateVector,
    inputs: &[Vec<Complex64>],
    target: &StateVector,
    kind: &ProtocolKind,
    mut policy: BranchPolicy,
) -> Result<ProtocolBranch> {
    let mut state = cluster.clone();
    let mut outcomes = BTreeMap::new();
    let mut probability = 1.0;
    for site in graph.measured_sites() {
        let m = match &mut policy {
            BranchPolicy::Forced(map) => {
                let v = *map
                    .get(&site)
                    .ok_or(Error::BadOutcomeRecord { site, reason: "no forced outcome given" })?;
                state.measure_site(site, MeasurementBasis::X, MeasurePolicy::Forced(v))?
            }
            BranchPolicy::Rng(rng) => {
                state.measure_site(site, MeasurementBasis::X, MeasurePolicy::Random(&mut **rng))?
            }
        };
        probability *= m.probability;
        outcomes.insert(site, SiteOutcome { basis: MeasurementBasis::X, value: m.outcome });
        state = m.state;
    }
    let extracted = state.extract_output_state(&graph.output_sites(), &outcomes)?;
    let correction = correction_for(graph, kind, &outcomes, &extracted, inputs)?;
    let mut output = extracted;
    correction.apply(&mut output)?;
    let fidelity = output.fidelity_up_to_phase(target)?;
    Ok(ProtocolBranch { outcomes, probability, correction, fidelity, output })
}

/// Run the protocol on a cluster state that was already built, for
/// example after carving a wire out of a larger grid. `inputs` holds one
/// d-amplitude state per wire and is what the output is compared to.
pub fn run_teleport_prepared(
    graph: &ClusterGraph,
    cluster: &StateVector,
    inputs: &[Vec<Complex64>],
    policy: &RunPolicy,
) -> Result<Vec<ProtocolBranch>> {
    if cluster.d() != graph.d() {
        return Err(Error::DimensionClash { a: cluster.d(), b: graph.d() });
    }
    if cluster.site_count() != graph.site_count() {
        return Err(Error::ShapeMismatch {
            expected: graph.site_count(),
            got: cluster.site_count(),
        });
    }
    if inputs.len() != graph.wire_count() {
        return Err(Error::ShapeMismatch { expected: graph.wire_count(), got: inputs.len() });
    }
    let d = graph.d();
    let kind = classify(graph)?;
    let target = StateVector::product_state(d, inputs)?;
    let measured = graph.measured_sites();
    match policy {
        RunPolicy::EnumerateAll => {
            let total = (d as u128).checked_pow(measured.len() as u32);
            let total = match total {
                Some(t) if t <= ENUMERATION_CAP as u128 => t as usize,
                other => {
                    return Err(Error::TooManyBranches {
                        branches: other.unwrap_or(u128::MAX),
                        cap: ENUMERATION_CAP,
                    })
                }
            };
            let mut branches = Vec::with_capacity(total);
            for mut code in 0..total {
                let mut forced = BTreeMap::new();
                for &site in &measured {
                    forced.insert(site, code % d);
                    code /= d;
                }
                match run_branch(graph, cluster, inputs, &target, &kind, BranchPolicy::Forced(&forced)) {
                    Ok(branch) => branches.push(branch),
                    // A branch the state gives no weight to is simply absent.
                    Err(Error::ImpossibleBranch { .. }) => continue,
                    Err(e) => return Err(e),
                }
            }
            Ok(branches)
        }
        RunPolicy::Random { seed, trials } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let mut branches = Vec::with_capacity(*trials);
            for _ in 0..*trials {
                branches.push(run_branch(
                    graph,
                    cluster,
                    inputs,
                    &target,
                    &kind,
                    BranchPolicy::Rng(&mut rng),
                )?);
            }
            Ok(branches)
        }
        RunPolicy::Forced(map) => Ok(vec![run_branch(
            graph,
            cluster,
            inputs,
            &target,
            &kind,
            BranchPolicy::Forced(map),
        )?]),
    }
}

/// Build the cluster for `graph` with `inputs` attached (one per wire)
/// and run the protocol.
pub fn run_teleport(
    graph: &ClusterGraph,
    inputs: &[Vec<Complex64>],
    policy: &RunPolicy,
) -> Result<Vec<ProtocolBranch>> {
    if inputs.len() != graph.wire_count() {
        return Err(Error::ShapeMismatch { expected: graph.wire_count(), got: inputs.len() });
    }
    let cluster = build_cluster(&BuildSpec::with_inputs(graph, inputs))?;
    run_teleport_prepared(graph, &cluster, inputs, policy)
}

// ---------------------------------------------------------------------------
// Bell-pair view of the two measured sites (qubits)
// ---------------------------------------------------------------------------

/// Label of one of the four entangled pair states the protocol's two
/// Fourier measurements project onto: `x1` picks the sign, `x2` the pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct BellLabel {
    pub x1: usize,
    pub x2: usize,
}

impl BellLabel {
    pub fn all() -> [BellLabel; 4] {
        [
            BellLabel { x1: 0, x2: 0 },
            BellLabel { x1: 0, x2: 1 },
            BellLabel { x1: 1, x2: 0 },
            BellLabel { x1: 1, x2: 1 },
        ]
    }

    /// Row-major index, `2 * x1 + x2`.
    pub fn index(&self) -> usize {
        2 * self.x1 + self.x2
    }
}

impl fmt::Display for BellLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.x1 == 0 { '+' } else { '-' };
        write!(f, "B{sign}{}", self.x2)
    }
}

/// The two-qubit state the pair of Fourier measurements projects onto:
/// the controlled-phase image of a product of Fourier vectors. The four
/// of them form an orthonormal, maximally entangled basis.
pub fn bell_state(label: BellLabel) -> Result<StateVector> {
    for v in [label.x1, label.x2] {
        if v >= 2 {
            return Err(Error::OutcomeOutOfRange { value: v, d: 2 });
        }
    }
    let f1 = crate::state::fourier_basis_vector(2, label.x1)?;
    let f2 = crate::state::fourier_basis_vector(2, label.x2)?;
    let mut st = StateVector::product_state(2, &[f1, f2])?;
    st.apply_controlled_phase(0, 1)?;
    Ok(st)
}

/// Exact probabilities of the four pair outcomes when sites `a` and `b`
/// of a qubit register are measured in the entangled basis, indexed by
/// [`BellLabel::index`].
pub fn bell_probabilities(state: &StateVector, a: usize, b: usize) -> Result<[f64; 4]> {
    if state.d() != 2 {
        return Err(Error::QubitOnly { d: state.d() });
    }
    let n = state.site_count();
    for site in [a, b] {
        if site >= n {
            return Err(Error::SiteOutOfRange { site, sites: n });
        }
    }
    if a == b {
        return Err(Error::DuplicateSite { site: a });
    }
    let sa = 1usize << (n - 1 - a);
    let sb = 1usize << (n - 1 - b);
    let mut probs = [0.0f64; 4];
    for label in BellLabel::all() {
        let bell = bell_state(label)?;
        let mut p = 0.0;
        for idx in 0..state.amplitudes().len() {
            if idx & sa != 0 || idx & sb != 0 {
                continue;
            }
            let mut acc = Complex64::new(0.0, 0.0);
            for i in 0..2 {
                for j in 0..2 {
                    acc += bell.amplitudes()[2 * i + j].conj()
                        * state.amplitudes()[idx + i * sa + j * sb];
                }
            }
            p += acc.norm_sqr();
        }
        probs[label.index()] = p;
    }
    Ok(probs)
}

/// Outcome selection for [`two_step_bell_measure`].
pub enum BellPolicy<'r> {
    Random(&'r mut dyn RngCore),
    Forced(BellLabel),
}

/// Result of projecting two sites onto the entangled pair basis.
#[derive(Debug, Clone)]
pub struct BellMeasurement {
    pub label: BellLabel,
    pub probability: f64,
    /// The full register after the projection, renormalized.
    pub state: StateVector,
}

/// Measure sites `a` and `b` of a qubit register in the entangled pair
/// basis by two single-site Fourier measurements: rotate the pair with a
/// controlled phase, measure each site, rotate back. The joint
/// probability equals the direct projection onto [`bell_state`].
pub fn two_step_bell_measure(
    state: &StateVector,
    a: usize,
    b: usize,
    policy: BellPolicy,
) -> Result<BellMeasurement> {
    if state.d() != 2 {
        return Err(Error::QubitOnly { d: state.d() });
    }
    let mut work = state.clone();
    work.apply_controlled_phase(a, b)?;
    let (m1, m2) = match policy {
        BellPolicy::Random(rng) => {
            let m1 = work.measure_site(a, MeasurementBasis::X, MeasurePolicy::Random(&mut *rng))?;
            let m2 = m1
                .state
                .measure_site(b, MeasurementBasis::X, MeasurePolicy::Random(rng))?;
            (m1, m2)
        }
        BellPolicy::Forced(label) => {
            let m1 =
                work.measure_site(a, MeasurementBasis::X, MeasurePolicy::Forced(label.x1))?;
            let m2 = m1
                .state
                .measure_site(b, MeasurementBasis::X, MeasurePolicy::Forced(label.x2))?;
            (m1, m2)
        }
    };
    let mut out = m2.state;
    out.apply_controlled_phase(a, b)?;
    Ok(BellMeasurement {
        label: BellLabel { x1: m1.outcome, x2: m2.outcome },
        probability: m1.probability * m2.probability,
        state: out,
    })
}

// ---------------------------------------------------------------------------
// Resource accounting
// ---------------------------------------------------------------------------

/// Classical communication spent by one protocol run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassicalCost {
    pub wires: usize,
    pub measured_sites: usize,
    /// What must actually travel to the output side: two digits per wire.
    pub compressed_bits: f64,
    /// What the measurements produce before compression: one digit per
    /// measured site.
    pub raw_bits: f64,
}

/// Two digits per wire suffice no matter how long the wires are, because
/// the positional sums collapse every measurement record to one Z and one
/// X exponent per output.
pub fn classical_cost(graph: &ClusterGraph) -> ClassicalCost {
    let bits_per_digit = (graph.d() as f64).log2();
    let wires = graph.wire_count();
    let measured = graph.measured_sites().len();
    ClassicalCost {
        wires,
        measured_sites: measured,
        compressed_bits: 2.0 * wires as f64 * bits_per_digit,
        raw_bits: measured as f64 * bits_per_digit,
    }
}

/// Entanglement audit of a row of `2 * pairs` cluster sites split into
/// alternating halves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EbitCheck {
    pub pairs: usize,
    pub sites: usize,
    pub entropy_bits: f64,
    pub expected_bits: f64,
}

/// Confirm the entanglement budget: a row of `2 * pairs` sites holds
/// exactly `pairs * log2(d)` ebits across its alternating bipartition,
/// one maximally entangled pair's worth per two sites.
pub fn ebit_resource_check(d: usize, pairs: usize) -> Result<EbitCheck> {
    if pairs == 0 {
        return Err(Error::BadGraphShape("the ebit check needs at least one pair".into()));
    }
    let graph = ClusterGraph::grid(d, 1, 2 * pairs)?;
    let cluster = build_cluster(&BuildSpec::pure(&graph))?;
    let part_a: BTreeSet<usize> = (0..2 * pairs).step_by(2).collect();
    let entropy_bits = cluster.schmidt_entropy(&part_a)?;
    Ok(EbitCheck {
        pairs,
        sites: 2 * pairs,
        entropy_bits,
        expected_bits: pairs as f64 * (d as f64).log2(),
    })
}

// ---------------------------------------------------------------------------
// Carving a wire out of a larger cluster
// ---------------------------------------------------------------------------

/// Outcome selection while deleting off-path sites, keyed by the site's
/// index in the original graph.
pub enum CarvePolicy<'r> {
    Random(&'r mut dyn RngCore),
    Forced(BTreeMap<usize, usize>),
}

/// One deletion performed during a carve, in original-graph numbering.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CarveRecord {
    pub site: usize,
    pub outcome: usize,
    pub probability: f64,
}

/// A wire cut out of a larger cluster, with its residual state already
/// repaired site by site.
#[derive(Debug, Clone)]
pub struct Carved {
    pub graph: ClusterGraph,
    pub state: StateVector,
    /// The path sites in the carved graph's numbering, input end first.
    pub path: Vec<usize>,
    pub deletions: Vec<CarveRecord>,
    /// Joint probability of the deletion outcomes that occurred.
    pub probability: f64,
}

/// Cut a cluster down to one wire by measuring every off-path site in Z,
/// applying each deletion's repair immediately. The graph must carry
/// exactly one wire whose input and output are the ends of `path`, the
/// path must be odd, and consecutive path sites must be the only edges
/// among them (no chords), so that what remains is a clean wire.
pub fn carve_to_wire(
    graph: &ClusterGraph,
    cluster: &StateVector,
    path: &[usize],
    mut policy: CarvePolicy,
) -> Result<Carved> {
    if cluster.d() != graph.d() {
        return Err(Error::DimensionClash { a: cluster.d(), b: graph.d() });
    }
    if cluster.site_count() != graph.site_count() {
        return Err(Error::ShapeMismatch {
            expected: graph.site_count(),
            got: cluster.site_count(),
        });
    }
    if graph.wire_count() != 1 {
        return Err(Error::BadGraphShape(format!(
            "carving expects exactly one wire, the graph has {}",
            graph.wire_count()
        )));
    }
    if path.len() < 3 || path.len() % 2 == 0 {
        return Err(Error::BadGraphShape(format!(
            "a carved wire needs an odd number of sites, at least 3, got {}",
            path.len()
        )));
    }
    let in_path: BTreeSet<usize> = path.iter().copied().collect();
    if in_path.len() != path.len() {
        return Err(Error::BadGraphShape("the carve path repeats a site".into()));
    }
    for &site in path {
        if site >= graph.site_count() {
            return Err(Error::SiteOutOfRange { site, sites: graph.site_count() });
        }
    }
    if graph.role(path[0])? != SiteRole::Input(0)
        || graph.role(*path.last().expect("path is nonempty"))? != SiteRole::Output(0)
    {
        return Err(Error::BadGraphShape(
            "the carve path must run from the wire's input to its output".into(),
        ));
    }
    for &site in &path[1..path.len() - 1] {
        if graph.role(site)? != SiteRole::Body {
            return Err(Error::BadRole { site, reason: "interior path sites must be body sites" });
        }
    }
    let position: BTreeMap<usize, usize> =
        path.iter().enumerate().map(|(i, &s)| (s, i)).collect();
    for pair in path.windows(2) {
        if !graph.neighbors(pair[0])?.contains(&pair[1]) {
            return Err(Error::BadGraphShape(format!(
                "path sites {} and {} are not adjacent",
                pair[0], pair[1]
            )));
        }
    }
    for (a, b) in graph.edges() {
        if let (Some(&ia), Some(&ib)) = (position.get(&a), position.get(&b)) {
            if ia.abs_diff(ib) != 1 {
                return Err(Error::BadGraphShape(format!(
                    "edge ({a}, {b}) is a chord of the carve path"
                )));
            }
        }
    }

    let mut orig_of: Vec<usize> = (0..graph.site_count()).collect();
    let mut g = graph.clone();
    let mut state = cluster.clone();
    let mut deletions = Vec::new();
    let mut probability = 1.0;
    while let Some(cur) = (0..g.site_count()).rev().find(|&i| !in_path.contains(&orig_of[i])) {
        let orig = orig_of[cur];
        let site_policy = match &mut policy {
            CarvePolicy::Random(rng) => MeasurePolicy::Random(&mut **rng),
            CarvePolicy::Forced(map) => MeasurePolicy::Forced(*map.get(&orig).ok_or(
                Error::BadOutcomeRecord { site: orig, reason: "no forced outcome for carved site" },
            )?),
        };
        let del = crate::cluster::delete_site_by_z(&state, &g, cur, site_policy)?;
        let mut repaired = del.state;
        repaired.apply_pauli_word(&del.byproduct)?;
        state = repaired;
        g = del.graph;
        orig_of.remove(cur);
        deletions.push(CarveRecord { site: orig, outcome: del.outcome, probability: del.probability });
        probability *= del.probability;
    }
    let new_index: BTreeMap<usize, usize> =
        orig_of.iter().enumerate().map(|(i, &o)| (o, i)).collect();
    let path = path.iter().map(|s| new_index[s]).collect();
    Ok(Carved { graph: g, state, path, deletions, probability })
}

/// A rows-by-cols grid wired for carving: the top-left corner is the
/// input, the bottom-right corner the output, and the returned path runs
/// along the top row and then down the last column. The path length
/// `rows + cols - 1` must be odd.
pub fn grid_wire_layout(d: usize, rows: usize, cols: usize) -> Result<(ClusterGraph, Vec<usize>)> {
    let base = ClusterGraph::grid(d, rows, cols)?;
    let n = base.site_count();
    if rows < 2 || cols < 2 {
        return Err(Error::BadGraphShape(
            "carving needs a grid of at least 2 rows and 2 columns".into(),
        ));
    }
    if (rows + cols - 1) % 2 == 0 {
        return Err(Error::BadGraphShape(format!(
            "the corner-to-corner path has {} sites, which must be odd",
            rows + cols - 1
        )));
    }
    let mut roles = vec![SiteRole::Body; n];
    roles[0] = SiteRole::Input(0);
    roles[n - 1] = SiteRole::Output(0);
    let graph = ClusterGraph::new(d, roles, base.edges())?;
    let path: Vec<usize> = (0..cols).chain((1..rows).map(|r| r * cols + cols - 1)).collect();
    Ok((graph, path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::random_unit_vector;
    use rand::Rng;

    fn random_inputs(d: usize, wires: usize, seed: u64) -> Vec<Vec<Complex64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..wires).map(|_| random_unit_vector(d, &mut rng).unwrap()).collect()
    }

    #[test]
    fn unit_qubit_teleports_on_every_branch() {
        let g = ClusterGraph::teleport_unit(2).unwrap();
        let inputs = random_inputs(2, 1, 11);
        let branches = run_teleport(&g, &inputs, &RunPolicy::EnumerateAll).unwrap();
        assert_eq!(branches.len(), 4);
        let mut total = 0.0;
        for b in &branches {
            assert!((b.probability - 0.25).abs() < 1e-10);
            assert!(b.fidelity > PERFECT_FIDELITY, "fidelity {} too low", b.fidelity);
            total += b.probability;
        }
        assert!((total - 1.0).abs() < 1e-10);
        // The branch table is the familiar one: X^s2 Z^s1 up to phase.
        for b in &branches {
            let s1 = b.outcomes[&0].value;
            let s2 = b.outcomes[&1].value;
            let expected = correction_one_wire_qubit(s1, s2).unwrap();
            assert!(b.correction.equiv_up_to_phase(&expected, 1).unwrap());
        }
    }

    #[test]
    fn unit_qudits_teleport_on_every_branch() {
        for &d in &[3usize, 5] {
            let g = ClusterGraph::teleport_unit(d).unwrap();
            let inputs = random_inputs(d, 1, d as u64);
            let branches = run_teleport(&g, &inputs, &RunPolicy::EnumerateAll).unwrap();
            assert_eq!(branches.len(), d * d);
            for b in &branches {
                assert!((b.probability - 1.0 / (d * d) as f64).abs() < 1e-10);
                assert!(b.fidelity > PERFECT_FIDELITY, "d = {d}: fidelity {}", b.fidelity);
            }
        }
    }

    #[test]
    fn closed_form_matches_the_search_on_units() {
        for &d in &[2usize, 3] {
            let g = ClusterGraph::teleport_unit(d).unwrap();
            let inputs = random_inputs(d, 1, 100 + d as u64);
            let cluster = build_cluster(&BuildSpec::with_inputs(&g, &inputs)).unwrap();
            for s1 in 0..d {
                for s2 in 0..d {
                    let forced = BTreeMap::from([(0, s1), (1, s2)]);
                    let mut state = cluster.clone();
                    let mut outcomes = BTreeMap::new();
                    for site in [0usize, 1] {
                        let m = state
                            .measure_site(
                                site,
                                MeasurementBasis::X,
                                MeasurePolicy::Forced(forced[&site]),
                            )
                            .unwrap();
                        outcomes.insert(
                            site,
                            SiteOutcome { basis: MeasurementBasis::X, value: m.outcome },
                        );
                        state = m.state;
                    }
                    let extracted =
                        state.extract_output_state(&[2], &outcomes).unwrap();
                    let closed = correction_qudit_chain(d, s1, s2).unwrap();
                    let oracle = derive_correction_oracle(&extracted, &inputs).unwrap();
                    let joint = derive_correction_oracle_joint(&extracted, &inputs).unwrap();
                    assert!(closed.equiv_up_to_phase(&oracle, 1).unwrap(), "d={d} s=({s1},{s2})");
                    assert!(oracle.equiv_up_to_phase(&joint, 1).unwrap(), "d={d} s=({s1},{s2})");
                }
            }
        }
    }

    #[test]
    fn longer_chains_use_the_collective_sums() {
        for &(d, m) in &[(2usize, 5usize), (2, 7), (3, 5)] {
            let g = ClusterGraph::chain(d, m).unwrap();
            let inputs = random_inputs(d, 1, 7 * d as u64 + m as u64);
            let branches = run_teleport(&g, &inputs, &RunPolicy::EnumerateAll).unwrap();
            assert_eq!(branches.len(), d.pow((m - 1) as u32));
            for b in &branches {
                assert!(
                    b.fidelity > PERFECT_FIDELITY,
                    "d={d} m={m} outcomes {:?} fidelity {}",
                    b.outcomes,
                    b.fidelity
                );
            }
        }
    }

    #[test]
    fn chain_corrections_agree_with_the_search() {
        // Spot-check a five-site qutrit chain branch by branch.
        let d = 3;
        let g = ClusterGraph::chain(d, 5).unwrap();
        let inputs = random_inputs(d, 1, 23);
        let cluster = build_cluster(&BuildSpec::with_inputs(&g, &inputs)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..12 {
            let digits: Vec<usize> = (0..4).map(|_| rng.gen_range(0..d)).collect();
            let mut state = cluster.clone();
            let mut outcomes = BTreeMap::new();
            for (i, site) in (0..4).enumerate() {
                let m = state
                    .measure_site(site, MeasurementBasis::X, MeasurePolicy::Forced(digits[i]))
                    .unwrap();
                outcomes
                    .insert(site, SiteOutcome { basis: MeasurementBasis::X, value: m.outcome });
                state = m.state;
            }
            let extracted = state.extract_output_state(&[4], &outcomes).unwrap();
            let closed = correction_chain_collective(d, &digits).unwrap();
            let oracle = derive_correction_oracle(&extracted, &inputs).unwrap();
            assert!(closed.equiv_up_to_phase(&oracle, 1).unwrap(), "digits {digits:?}");
        }
    }

    #[test]
    fn coupled_pair_teleports_two_states_at_once() {
        let g = ClusterGraph::coupled_pair(2).unwrap();
        let inputs = random_inputs(2, 2, 31);
        let branches = run_teleport(&g, &inputs, &RunPolicy::EnumerateAll).unwrap();
        assert_eq!(branches.len(), 16);
        for b in &branches {
            assert!((b.probability - 1.0 / 16.0).abs() < 1e-10);
            assert!(b.fidelity > PERFECT_FIDELITY, "outcomes {:?}", b.outcomes);
        }
    }

    #[test]
    fn coupled_pair_formula_matches_the_search() {
        let g = ClusterGraph::coupled_pair(2).unwrap();
        let inputs = random_inputs(2, 2, 37);
        let cluster = build_cluster(&BuildSpec::with_inputs(&g, &inputs)).unwrap();
        for code in 0..16 {
            let digits: Vec<usize> = (0..4).map(|i| (code >> i) & 1).collect();
            let mut state = cluster.clone();
            let mut outcomes = BTreeMap::new();
            for site in 0..4 {
                let m = state
                    .measure_site(site, MeasurementBasis::X, MeasurePolicy::Forced(digits[site]))
                    .unwrap();
                outcomes
                    .insert(site, SiteOutcome { basis: MeasurementBasis::X, value: m.outcome });
                state = m.state;
            }
            let extracted = state.extract_output_state(&[4, 5], &outcomes).unwrap();
            let closed =
                correction_coupled_pair([digits[0], digits[1], digits[2], digits[3]]).unwrap();
            let oracle = derive_correction_oracle(&extracted, &inputs).unwrap();
            let joint = derive_correction_oracle_joint(&extracted, &inputs).unwrap();
            assert!(closed.equiv_up_to_phase(&oracle, 2).unwrap(), "digits {digits:?}");
            assert!(oracle.equiv_up_to_phase(&joint, 2).unwrap(), "digits {digits:?}");
        }
    }

    #[test]
    fn negation_must_precede_the_word_for_qutrits() {
        // On the branch (1, 1) of the qutrit unit the two orders differ,
        // and only negation-first restores the input.
        let d = 3;
        let g = ClusterGraph::teleport_unit(d).unwrap();
        let inputs = random_inputs(d, 1, 41);
        let cluster = build_cluster(&BuildSpec::with_inputs(&g, &inputs)).unwrap();
        let mut state = cluster;
        let mut outcomes = BTreeMap::new();
        for site in [0usize, 1] {
            let m = state
                .measure_site(site, MeasurementBasis::X, MeasurePolicy::Forced(1))
                .unwrap();
            outcomes.insert(site, SiteOutcome { basis: MeasurementBasis::X, value: 1 });
            state = m.state;
        }
        let extracted = state.extract_output_state(&[2], &outcomes).unwrap();
        let target = StateVector::product_state(d, &inputs).unwrap();
        let correction = correction_qudit_chain(d, 1, 1).unwrap();
        assert_eq!(correction.negated(), &BTreeSet::from([0]));

        let mut right = extracted.clone();
        correction.apply(&mut right).unwrap();
        assert!(right.fidelity_up_to_phase(&target).unwrap() > PERFECT_FIDELITY);

        // Swapped order: word first, then negation.
        let mut wrong = extracted.clone();
        wrong.apply_pauli_word(correction.word()).unwrap();
        wrong.apply_single_site(0, &negation_matrix(d).unwrap()).unwrap();
        assert!(wrong.fidelity_up_to_phase(&target).unwrap() < 0.99);
    }

    #[test]
    fn qubit_corrections_depend_only_on_the_positional_sums() {
        let d = 2;
        let g = ClusterGraph::chain(d, 7).unwrap();
        let inputs = random_inputs(d, 1, 43);
        let branches = run_teleport(&g, &inputs, &RunPolicy::EnumerateAll).unwrap();
        assert_eq!(branches.len(), 64);
        let mut by_class: BTreeMap<(usize, usize), String> = BTreeMap::new();
        for b in &branches {
            let digits: Vec<usize> = (0..6).map(|site| b.outcomes[&site].value).collect();
            let class = (
                (digits[0] + digits[2] + digits[4]) % 2,
                (digits[1] + digits[3] + digits[5]) % 2,
            );
            let rendered = b.correction.to_string();
            let prior = by_class.entry(class).or_insert_with(|| rendered.clone());
            assert_eq!(*prior, rendered, "class {class:?} got two different corrections");
        }
        assert_eq!(by_class.len(), 4);
    }

    #[test]
    fn coupled_pair_exponents_rewritten_with_flipped_digits() {
        // The same recovery can be written with exponents (x + 1) where
        // x = 1 - s flips each digit; both forms must agree branch by
        // branch, while the unflipped rewrite must not.
        let mut agree_all = true;
        let mut unflipped_breaks = false;
        for code in 0..16u32 {
            let s: Vec<usize> = (0..4).map(|i| ((code >> i) & 1) as usize).collect();
            let plain = correction_coupled_pair([s[0], s[1], s[2], s[3]]).unwrap();
            let x: Vec<usize> = s.iter().map(|&v| 1 - v).collect();
            let rewritten = Correction::from_parts(
                PauliWord::single(2, 0, x[0] + 1, x[2] + 1)
                    .unwrap()
                    .mul(&PauliWord::single(2, 1, x[1] + 1, x[2] + x[3]).unwrap())
                    .unwrap()
                    .dagger(),
                BTreeSet::new(),
            );
            agree_all &= plain.equiv_up_to_phase(&rewritten, 2).unwrap();
            let unflipped = Correction::from_parts(
                PauliWord::single(2, 0, s[0] + 1, s[2] + 1)
                    .unwrap()
                    .mul(&PauliWord::single(2, 1, s[1] + 1, s[2] + s[3]).unwrap())
                    .unwrap()
                    .dagger(),
                BTreeSet::new(),
            );
            unflipped_breaks |= !plain.equiv_up_to_phase(&unflipped, 2).unwrap();
        }
        assert!(agree_all);
        assert!(unflipped_breaks);
    }

    #[test]
    fn parallel_wires_stay_independent() {
        let g = ClusterGraph::parallel_stack(2, 3).unwrap();
        let inputs = random_inputs(2, 3, 47);
        let branches = run_teleport(&g, &inputs, &RunPolicy::EnumerateAll).unwrap();
        assert_eq!(branches.len(), 64);
        for b in &branches {
            assert!(b.fidelity > PERFECT_FIDELITY);
        }
    }

    #[test]
    fn random_policy_is_seeded_and_reproducible() {
        let g = ClusterGraph::teleport_unit(2).unwrap();
        let inputs = random_inputs(2, 1, 53);
        let policy = RunPolicy::Random { seed: 9, trials: 400 };
        let a = run_teleport(&g, &inputs, &policy).unwrap();
        let b = run_teleport(&g, &inputs, &policy).unwrap();
        assert_eq!(a.len(), 400);
        let digits = |bs: &[ProtocolBranch]| -> Vec<usize> {
            bs.iter()
                .flat_map(|b| b.outcomes.values().map(|o| o.value).collect::<Vec<_>>())
                .collect()
        };
        assert_eq!(digits(&a), digits(&b));
        let c = run_teleport(&g, &inputs, &RunPolicy::Random { seed: 10, trials: 400 }).unwrap();
        assert_ne!(digits(&a), digits(&c));
        // Every sampled branch still transfers perfectly, and the four
        // outcome pairs appear with roughly equal frequency.
        let mut counts = BTreeMap::new();
        for branch in &a {
            assert!(branch.fidelity > PERFECT_FIDELITY);
            let key = (branch.outcomes[&0].value, branch.outcomes[&1].value);
            *counts.entry(key).or_insert(0usize) += 1;
        }
        // 5 sigma around 100 for binomial(400, 1/4).
        for (&key, &count) in &counts {
            assert!((57..=143).contains(&count), "outcome {key:?} seen {count} times");
        }
    }

    #[test]
    fn forced_policy_visits_exactly_one_branch() {
        let d = 3;
        let g = ClusterGraph::teleport_unit(d).unwrap();
        let inputs = random_inputs(d, 1, 59);
        let forced = BTreeMap::from([(0, 2), (1, 1)]);
        let branches = run_teleport(&g, &inputs, &RunPolicy::Forced(forced)).unwrap();
        assert_eq!(branches.len(), 1);
        let b = &branches[0];
        assert_eq!(b.outcomes[&0].value, 2);
        assert_eq!(b.outcomes[&1].value, 1);
        assert!((b.probability - 1.0 / 9.0).abs() < 1e-10);
        assert!(b.fidelity > PERFECT_FIDELITY);
        // Missing a site is an error.
        let partial = BTreeMap::from([(0, 2)]);
        assert!(matches!(
            run_teleport(&g, &inputs, &RunPolicy::Forced(partial)),
            Err(Error::BadOutcomeRecord { site: 1, .. })
        ));
    }

    #[test]
    fn runner_validates_inputs() {
        let g = ClusterGraph::teleport_unit(2).unwrap();
        let too_many = random_inputs(2, 2, 61);
        assert!(matches!(
            run_teleport(&g, &too_many, &RunPolicy::EnumerateAll),
            Err(Error::ShapeMismatch { expected: 1, got: 2 })
        ));
        let bad_len = vec![vec![Complex64::new(1.0, 0.0); 3]];
        assert!(matches!(
            run_teleport(&g, &bad_len, &RunPolicy::EnumerateAll),
            Err(Error::BadAmplitudeCount { expected: 2, got: 3 })
        ));
        let unnormalized = vec![vec![Complex64::new(0.9, 0.0), Complex64::new(0.9, 0.0)]];
        assert!(matches!(
            run_teleport(&g, &unnormalized, &RunPolicy::EnumerateAll),
            Err(Error::NotNormalized { .. })
        ));
    }

    #[test]
    fn triangle_layout_teleports_through_the_search() {
        // A triangle is not a wire, but it still transfers the input with
        // a different byproduct table, which the search discovers. On the
        // all-zero branch the wire formula would apply nothing, yet the
        // actual leftover is a Z.
        let roles = vec![SiteRole::Input(0), SiteRole::Body, SiteRole::Output(0)];
        let g = ClusterGraph::new(2, roles, [(0, 1), (1, 2), (0, 2)]).unwrap();
        assert_eq!(classify(&g).unwrap(), ProtocolKind::General);
        let inputs = random_inputs(2, 1, 67);
        let branches = run_teleport(&g, &inputs, &RunPolicy::EnumerateAll).unwrap();
        assert_eq!(branches.len(), 4);
        for b in &branches {
            assert!(b.fidelity > PERFECT_FIDELITY, "outcomes {:?}", b.outcomes);
        }
        let zero = branches
            .iter()
            .find(|b| b.outcomes.values().all(|o| o.value == 0))
            .expect("the all-zero branch exists");
        let wire_rule = correction_one_wire_qubit(0, 0).unwrap();
        assert!(wire_rule.is_identity());
        assert!(!zero.correction.equiv_up_to_phase(&wire_rule, 1).unwrap());
    }

    #[test]
    fn even_wires_break_the_protocol() {
        // A two-site wire hands the output a Fourier transform of the
        // input, which no digit shift and phase can undo. The search
        // reports that instead of quietly returning a bad branch.
        let roles = vec![SiteRole::Input(0), SiteRole::Output(0)];
        let g = ClusterGraph::new(2, roles, [(0, 1)]).unwrap();
        assert_eq!(classify(&g).unwrap(), ProtocolKind::General);
        let inputs = random_inputs(2, 1, 68);
        let result = run_teleport(&g, &inputs, &RunPolicy::EnumerateAll);
        assert!(matches!(result, Err(Error::ProtocolBroken(_))), "got {result:?}");
    }

    #[test]
    fn classification_recognizes_the_layouts() {
        assert!(matches!(
            classify(&ClusterGraph::teleport_unit(2).unwrap()).unwrap(),
            ProtocolKind::Wires(ref p) if p == &vec![vec![0, 1, 2]]
        ));
        assert!(matches!(
            classify(&ClusterGraph::chain(3, 5).unwrap()).unwrap(),
            ProtocolKind::Wires(ref p) if p == &vec![vec![0, 1, 2, 3, 4]]
        ));
        assert_eq!(
            classify(&ClusterGraph::coupled_pair(2).unwrap()).unwrap(),
            ProtocolKind::CoupledPair
        );
        assert!(matches!(
            classify(&ClusterGraph::parallel_stack(2, 2).unwrap()).unwrap(),
            ProtocolKind::Wires(ref p) if p.len() == 2
        ));
        assert!(matches!(
            classify(&ClusterGraph::grid(2, 2, 2).unwrap()),
            Err(Error::UnsupportedGraph(_))
        ));
    }

    #[test]
    fn bell_states_are_orthonormal_and_maximally_entangled() {
        let all = BellLabel::all();
        for (i, &la) in all.iter().enumerate() {
            let sa = bell_state(la).unwrap();
            for (j, &lb) in all.iter().enumerate() {
                let overlap = sa.inner(&bell_state(lb).unwrap()).unwrap().norm();
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((overlap - expected).abs() < 1e-12, "{la} vs {lb}");
            }
            let part: std::collections::BTreeSet<usize> = [0usize].into_iter().collect();
            assert!((sa.schmidt_entropy(&part).unwrap() - 1.0).abs() < 1e-9);
        }
        assert_eq!(BellLabel { x1: 1, x2: 0 }.to_string(), "B-0");
    }

    #[test]
    fn two_step_probabilities_match_the_direct_projection() {
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        for _ in 0..20 {
            let amps = random_unit_vector(4, &mut rng).unwrap();
            let st = StateVector::from_amplitudes(2, amps).unwrap();
            let exact = bell_probabilities(&st, 0, 1).unwrap();
            assert!((exact.iter().sum::<f64>() - 1.0).abs() < 1e-10);
            for label in BellLabel::all() {
                let two = two_step_bell_measure(&st, 0, 1, BellPolicy::Forced(label));
                match two {
                    Ok(m) => {
                        assert!((m.probability - exact[label.index()]).abs() < 1e-10);
                        // The register really is in the pair state now.
                        let overlap =
                            m.state.fidelity_up_to_phase(&bell_state(label).unwrap()).unwrap();
                        assert!(overlap > 1.0 - 1e-10);
                    }
                    Err(Error::ImpossibleBranch { .. }) => {
                        assert!(exact[label.index()] < 1e-10);
                    }
                    Err(e) => panic!("unexpected error {e}"),
                }
            }
        }
        let qutrit = StateVector::product_state(3, &[crate::state::plus_state(3).unwrap()])
            .unwrap();
        assert!(matches!(
            bell_probabilities(&qutrit, 0, 0),
            Err(Error::QubitOnly { d: 3 })
        ));
    }

    #[test]
    fn classical_cost_counts_digits() {
        let unit = classical_cost(&ClusterGraph::teleport_unit(2).unwrap());
        assert_eq!(unit.wires, 1);
        assert_eq!(unit.measured_sites, 2);
        assert!((unit.compressed_bits - 2.0).abs() < 1e-12);
        assert!((unit.raw_bits - 2.0).abs() < 1e-12);

        let pair = classical_cost(&ClusterGraph::coupled_pair(2).unwrap());
        assert_eq!(pair.wires, 2);
        assert_eq!(pair.measured_sites, 4);
        assert!((pair.compressed_bits - 4.0).abs() < 1e-12);

        let chain = classical_cost(&ClusterGraph::chain(3, 7).unwrap());
        assert_eq!(chain.measured_sites, 6);
        assert!((chain.compressed_bits - 2.0 * 3f64.log2()).abs() < 1e-12);
        assert!((chain.raw_bits - 6.0 * 3f64.log2()).abs() < 1e-12);
    }

    #[test]
    fn ebit_budget_is_one_pair_per_two_sites() {
        for &(d, pairs) in &[(2usize, 1usize), (2, 2), (3, 1), (3, 2)] {
            let check = ebit_resource_check(d, pairs).unwrap();
            assert_eq!(check.sites, 2 * pairs);
            assert!(
                (check.entropy_bits - check.expected_bits).abs() < 1e-9,
                "d={d} pairs={pairs}: {} vs {}",
                check.entropy_bits,
                check.expected_bits
            );
        }
        assert!(ebit_resource_check(2, 0).is_err());
    }

    #[test]
    fn carving_a_grid_leaves_a_working_wire() {
        let mut rng = ChaCha8Rng::seed_from_u64(73);
        let (g, path) = grid_wire_layout(2, 2, 4).unwrap();
        assert_eq!(path, vec![0, 1, 2, 3, 7]);
        let psi = random_unit_vector(2, &mut rng).unwrap();
        let cluster =
            build_cluster(&BuildSpec::pure(&g).with_input(0, psi.clone())).unwrap();
        // Forced all-zero deletions keep the carved graph checkable.
        let forced: BTreeMap<usize, usize> = [4, 5, 6].into_iter().map(|s| (s, 0)).collect();
        let carved = carve_to_wire(&g, &cluster, &path, CarvePolicy::Forced(forced)).unwrap();
        assert_eq!(carved.graph.site_count(), 5);
        assert_eq!(carved.path, vec![0, 1, 2, 3, 4]);
        assert_eq!(carved.deletions.len(), 3);
        // The carved register is the five-site chain cluster with the
        // same input.
        let chain = ClusterGraph::chain(2, 5).unwrap();
        assert_eq!(carved.graph, chain);
        let reference =
            build_cluster(&BuildSpec::pure(&chain).with_input(0, psi.clone())).unwrap();
        assert!(carved.state.fidelity_up_to_phase(&reference).unwrap() > 1.0 - 1e-10);
        // And the wire teleports.
        let branches = run_teleport_prepared(
            &carved.graph,
            &carved.state,
            &[psi.clone()],
            &RunPolicy::EnumerateAll,
        )
        .unwrap();
        assert_eq!(branches.len(), 16);
        for b in &branches {
            assert!(b.fidelity > PERFECT_FIDELITY);
        }
        // Random carve outcomes give an equally good wire.
        let carved = carve_to_wire(&g, &cluster, &path, CarvePolicy::Random(&mut rng)).unwrap();
        let branches = run_teleport_prepared(
            &carved.graph,
            &carved.state,
            &[psi],
            &RunPolicy::EnumerateAll,
        )
        .unwrap();
        for b in &branches {
            assert!(b.fidelity > PERFECT_FIDELITY);
        }
    }

    #[test]
    fn carve_path_must_be_clean() {
        let (g, path) = grid_wire_layout(2, 2, 4).unwrap();
        let cluster = build_cluster(&BuildSpec::pure(&g)).unwrap();
        // Even-length path.
        let even = &path[..4];
        assert!(matches!(
            carve_to_wire(&g, &cluster, even, CarvePolicy::Forced(BTreeMap::new())),
            Err(Error::BadGraphShape(_))
        ));
        // Wrong endpoints.
        let shifted = vec![1, 2, 3, 7, 6];
        assert!(matches!(
            carve_to_wire(&g, &cluster, &shifted, CarvePolicy::Forced(BTreeMap::new())),
            Err(Error::BadGraphShape(_))
        ));
        // Non-adjacent consecutive sites.
        let torn = vec![0, 5, 6, 3, 7];
        assert!(matches!(
            carve_to_wire(&g, &cluster, &torn, CarvePolicy::Forced(BTreeMap::new())),
            Err(Error::BadGraphShape(_))
        ));
        // Missing forced outcome.
        assert!(matches!(
            carve_to_wire(&g, &cluster, &path, CarvePolicy::Forced(BTreeMap::new())),
            Err(Error::BadOutcomeRecord { .. })
        ));
        // A path that doubles back next to itself has a chord.
        let base = ClusterGraph::grid(2, 3, 3).unwrap();
        let mut roles = vec![SiteRole::Body; 9];
        roles[0] = SiteRole::Input(0);
        roles[6] = SiteRole::Output(0);
        let snake_graph = ClusterGraph::new(2, roles, base.edges()).unwrap();
        let snake_cluster = build_cluster(&BuildSpec::pure(&snake_graph)).unwrap();
        let chorded = vec![0, 1, 2, 5, 4, 3, 6];
        assert!(matches!(
            carve_to_wire(&snake_graph, &snake_cluster, &chorded, CarvePolicy::Forced(BTreeMap::new())),
            Err(Error::BadGraphShape(_))
        ));
    }

    #[test]
    fn grid_layout_validates_its_shape() {
        assert!(matches!(grid_wire_layout(2, 2, 3), Err(Error::BadGraphShape(_))));
        assert!(matches!(grid_wire_layout(2, 1, 5), Err(Error::BadGraphShape(_))));
        let (g, path) = grid_wire_layout(3, 3, 3).unwrap();
        assert_eq!(path, vec![0, 1, 2, 5, 8]);
        assert_eq!(g.wire_count(), 1);
        assert_eq!(g.input_site(0).unwrap(), 0);
        assert_eq!(g.output_site(0).unwrap(), 8);
    }

    #[test]
    fn correction_display_and_merge() {
        let c0 = correction_qudit_chain(3, 1, 2).unwrap();
        assert_eq!(c0.negated(), &BTreeSet::from([0]));
        let shifted = chain_correction_at(3, &[1, 2], 1).unwrap();
        let merged = c0.merge(&shifted).unwrap();
        assert_eq!(merged.negated(), &BTreeSet::from([0, 1]));
        let rendered = merged.to_string();
        assert!(rendered.contains("N0") && rendered.contains("N1"), "{rendered}");
        assert!(Correction::identity(2).unwrap().is_identity());
        assert!(matches!(
            c0.merge(&c0),
            Err(Error::DuplicateSite { site: 0 })
        ));
    }
}
