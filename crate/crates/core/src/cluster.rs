//! Building cluster states from graphs and checking their correlations.
//!
//! A cluster state starts every site in the uniform superposition, except
//! input sites which hold the state being teleported, and applies one
//! controlled-phase gate per edge. The resulting state is a +1 eigenstate
//! of every correlation word of the graph (exactly so when no inputs are
//! attached), which [`verify_stabilizers`] checks numerically.

use std::collections::BTreeMap;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::graph::{ClusterGraph, SiteRole};
use crate::pauli::PauliWord;
use crate::state::{plus_state, MeasurePolicy, MeasurementBasis, StateVector};

/// What to build: a graph plus optional input states keyed by wire index.
/// Wires without an entry get the uniform superposition like body sites.
#[derive(Debug, Clone)]
pub struct BuildSpec<'a> {
    graph: &'a ClusterGraph,
    inputs: BTreeMap<usize, Vec<Complex64>>,
}

impl<'a> BuildSpec<'a> {
    /// The bare cluster state of `graph`, no inputs attached.
    pub fn pure(graph: &'a ClusterGraph) -> Self {
        Self { graph, inputs: BTreeMap::new() }
    }

    /// Attach `amps` to the input site of `wire`.
    pub fn with_input(mut self, wire: usize, amps: Vec<Complex64>) -> Self {
        self.inputs.insert(wire, amps);
        self
    }

    /// Attach one input per wire, in wire order.
    pub fn with_inputs(graph: &'a ClusterGraph, inputs: &[Vec<Complex64>]) -> Self {
        let mut spec = Self::pure(graph);
        for (wire, amps) in inputs.iter().enumerate() {
            spec = spec.with_input(wire, amps.clone());
        }
        spec
    }

    pub fn graph(&self) -> &ClusterGraph {
        self.graph
    }
}

/// Build the cluster state: inputs at their sites, uniform superpositions
/// everywhere else, then one controlled-phase per edge.
pub fn build_cluster(spec: &BuildSpec) -> Result<StateVector> {
    let g = spec.graph;
    let d = g.d();
    for &wire in spec.inputs.keys() {
        if wire >= g.wire_count() {
            return Err(Error::BadGraphShape(format!(
                "input given for wire {wire}, but the graph has {} wires",
                g.wire_count()
            )));
        }
    }
    let plus = plus_state(d)?;
    let mut factors = Vec::with_capacity(g.site_count());
    for site in 0..g.site_count() {
        let factor = match g.role(site)? {
            SiteRole::Input(w) => spec.inputs.get(&w).cloned().unwrap_or_else(|| plus.clone()),
            _ => plus.clone(),
        };
        factors.push(factor);
    }
    let mut state = StateVector::product_state(d, &factors)?;
    for (a, b) in g.edges() {
        state.apply_controlled_phase(a, b)?;
    }
    Ok(state)
}

fn check_same_shape(state: &StateVector, graph: &ClusterGraph) -> Result<()> {
    if state.d() != graph.d() {
        return Err(Error::DimensionClash { a: state.d(), b: graph.d() });
    }
    if state.site_count() != graph.site_count() {
        return Err(Error::ShapeMismatch {
            expected: graph.site_count(),
            got: state.site_count(),
        });
    }
    Ok(())
}

/// `|| w|phi> - |phi> ||`, the 2-norm residual of one eigenvalue relation.
pub fn relation_residual(state: &StateVector, word: &PauliWord) -> Result<f64> {
    let mut moved = state.clone();
    moved.apply_pauli_word(word)?;
    let residual = moved
        .amplitudes()
        .iter()
        .zip(state.amplitudes())
        .map(|(a, b)| (a - b).norm_sqr())
        .sum::<f64>()
        .sqrt();
    Ok(residual)
}

/// Largest residual of the graph's correlation words on `state`. For the
/// pure cluster state this is numerically zero (below 1e-12).
pub fn verify_stabilizers(state: &StateVector, graph: &ClusterGraph) -> Result<f64> {
    check_same_shape(state, graph)?;
    let mut max = 0.0f64;
    for site in 0..graph.site_count() {
        let k = graph.correlation_operator(site)?;
        max = max.max(relation_residual(state, &k)?);
    }
    Ok(max)
}

/// Largest residual over an explicit list of relation words, for checking
/// products of correlation operators against the state directly.
pub fn verify_derived_relations(
    state: &StateVector,
    graph: &ClusterGraph,
    words: &[PauliWord],
) -> Result<f64> {
    check_same_shape(state, graph)?;
    let mut max = 0.0f64;
    for word in words {
        if word.d() != graph.d() {
            return Err(Error::DimensionClash { a: graph.d(), b: word.d() });
        }
        if let Some(site) = word.max_site() {
            if site >= graph.site_count() {
                return Err(Error::SiteOutOfRange { site, sites: graph.site_count() });
            }
        }
        max = max.max(relation_residual(state, word)?);
    }
    Ok(max)
}

/// The two wire-to-wire relations of the one-wire unit: shift factors on
/// input and output (`X_0 X_2^(d-1)`), and the middle-site word conjugated
/// by the ends (`Z_0^(d-1) X_1 Z_2^(d-1)`). Both are products of
/// correlation words, so the pure cluster satisfies them.
pub fn teleport_unit_derived_relations(d: usize) -> Result<Vec<PauliWord>> {
    let a = PauliWord::x(d, 0)?.mul(&PauliWord::single(d, 2, 0, d - 1)?)?;
    let b = PauliWord::single(d, 0, d - 1, 0)?
        .mul(&PauliWord::x(d, 1)?)?
        .mul(&PauliWord::single(d, 2, d - 1, 0)?)?;
    Ok(vec![a, b])
}

/// The four reduced relations of the qubit coupled pair, each a product of
/// two correlation words: X0 X4, X1 X5, Z0 X2 Z4, and Z1 X2 X3 Z5.
pub fn coupled_pair_derived_relations() -> Result<Vec<PauliWord>> {
    let d = 2;
    let w1 = PauliWord::x(d, 0)?.mul(&PauliWord::x(d, 4)?)?;
    let w2 = PauliWord::x(d, 1)?.mul(&PauliWord::x(d, 5)?)?;
    let w3 = PauliWord::z(d, 0)?
        .mul(&PauliWord::x(d, 2)?)?
        .mul(&PauliWord::z(d, 4)?)?;
    let w4 = PauliWord::z(d, 1)?
        .mul(&PauliWord::x(d, 2)?)?
        .mul(&PauliWord::x(d, 3)?)?
        .mul(&PauliWord::z(d, 5)?)?;
    Ok(vec![w1, w2, w3, w4])
}

/// Outcome of deleting one site from a cluster by measuring it in Z.
#[derive(Debug, Clone)]
pub struct SiteDeletion {
    /// Measured digit s.
    pub outcome: usize,
    /// Born probability of that digit.
    pub probability: f64,
    /// The register with the measured site removed. The byproduct has NOT
    /// been applied yet.
    pub state: StateVector,
    /// The graph with the site removed and higher sites shifted down.
    pub graph: ClusterGraph,
    /// `Z^(-s)` on every former neighbor (renumbered); applying it to
    /// `state` yields the cluster state of `graph` exactly.
    pub byproduct: PauliWord,
}

/// Remove a body site from a cluster state by measuring it in the Z basis.
///
/// Measuring digit s leaves `Z^s` stuck on every neighbor, so the returned
/// byproduct `Z^(-s)` on those neighbors restores the cluster state of the
/// reduced graph.
pub fn delete_site_by_z(
    state: &StateVector,
    graph: &ClusterGraph,
    site: usize,
    policy: MeasurePolicy,
) -> Result<SiteDeletion> {
    check_same_shape(state, graph)?;
    if graph.role(site)? != SiteRole::Body {
        return Err(Error::BadRole { site, reason: "only body sites can be deleted" });
    }
    let d = graph.d();
    let m = state.measure_site(site, MeasurementBasis::Z, policy)?;
    let reduced_graph = graph.without_site(site)?;
    // Contract the projected site out of the register.
    let outputs: Vec<usize> = (0..state.site_count()).filter(|&s| s != site).collect();
    let mut measured = BTreeMap::new();
    measured.insert(
        site,
        crate::state::SiteOutcome { basis: MeasurementBasis::Z, value: m.outcome },
    );
    let reduced_state = m.state.extract_output_state(&outputs, &measured)?;
    let mut byproduct = PauliWord::identity(d)?;
    for b in graph.neighbors(site)? {
        let b_new = if b > site { b - 1 } else { b };
        byproduct = byproduct.mul(&PauliWord::single(d, b_new, (d - m.outcome) % d, 0)?)?;
    }
    Ok(SiteDeletion {
        outcome: m.outcome,
        probability: m.probability,
        state: reduced_state,
        graph: reduced_graph,
        byproduct,
    })
}
