//! Simulation of quantum teleportation through cluster states, for qubits
//! and for d-level qudits.
//!
//! The crate builds cluster states from site-and-edge graphs, measures the
//! prescribed sites in the Fourier basis, applies the byproduct correction
//! selected by the outcomes, and checks that the input state reappears at
//! the output sites. Everything runs on a dense state vector, so it is meant
//! for desk-scale registers, not large lattices.
//!
//! Modules:
//! - [`pauli`]: exact Weyl-operator words (clock and shift factors with an
//!   integer-tracked phase).
//! - [`state`]: the dense register with gates, measurements, extraction,
//!   fidelity, and entanglement entropy.
//! - [`graph`]: cluster graphs, roles, wire bookkeeping, and a line-based
//!   text format.
//! - [`cluster`]: building cluster states, checking correlation operators,
//!   and deleting sites with Z measurements.
//! - [`teleport`]: the protocol runner, closed-form and searched
//!   corrections, Bell measurements, and resource accounting.

pub mod cluster;
pub mod error;
pub mod graph;
pub mod pauli;
pub mod state;
pub mod teleport;

pub use cluster::{
    build_cluster, coupled_pair_derived_relations, delete_site_by_z, relation_residual,
    teleport_unit_derived_relations, verify_derived_relations, verify_stabilizers, BuildSpec,
    SiteDeletion,
};
pub use error::{Error, Result};
pub use graph::{ClusterGraph, SiteRole};
pub use pauli::{
    negation_matrix, pauli_dagger, pauli_mul, primitive_root, x_matrix, z_matrix, CMatrix,
    PauliWord, PhaseExp,
};
pub use state::{
    fourier_basis_vector, plus_state, random_unit_vector, register_cap, set_register_cap,
    MeasurePolicy, Measurement, MeasurementBasis, SiteOutcome, StateVector,
    MIN_BRANCH_PROBABILITY,
};
pub use teleport::{
    bell_probabilities, bell_state, carve_to_wire, classical_cost, classify,
    correction_chain_collective, correction_coupled_pair, correction_one_wire_qubit,
    correction_qudit_chain, derive_correction_oracle, derive_correction_oracle_joint,
    ebit_resource_check, grid_wire_layout, run_teleport, run_teleport_prepared,
    two_step_bell_measure, BellLabel, BellMeasurement, BellPolicy, CarvePolicy, CarveRecord,
    Carved, ClassicalCost, Correction, EbitCheck, ProtocolBranch, ProtocolKind, RunPolicy,
    PERFECT_FIDELITY,
};
