//! Port-Hamiltonian differential-algebraic modelling and simulation of
//! electrical networks and electromagnetic devices.
//!
//! The crate provides
//!
//! * a generic PH-DAE system representation with structural validators and
//!   an energy-balance audit ([`system`], [`energy`]),
//! * skew-symmetric interconnection of subsystems, both in condensed form
//!   and through the dummy-variable joint system ([`interconnect`]),
//! * a SPICE-like netlist front end with topological soundness and index
//!   diagnostics ([`netlist`], [`topology`]),
//! * charge/flux-oriented modified nodal analysis assembly ([`mna`],
//!   [`models`]),
//! * finite-integration-technique Maxwell grid devices ([`grid`],
//!   [`device`]),
//! * field/circuit coupling ([`coupler`]),
//! * energy-aware implicit time integration and DAE diagnostics
//!   ([`integrate`], [`pencil`], [`splitting`]),
//! * waveform-relaxation co-simulation ([`cosim`]).

pub mod coupler;
pub mod cosim;
pub mod device;
pub mod energy;
pub mod error;
pub mod grid;
pub mod integrate;
pub mod interconnect;
pub mod mm;
pub mod mna;
pub mod models;
pub mod netlist;
pub mod pencil;
pub mod splitting;
pub mod system;
pub mod topology;

pub use energy::{energy_audit, EnergyLedger};
pub use integrate::{
    consistent_init, integrate, integrate_span, JacobianMode, Scheme, SolverConfig, Trajectory,
};
pub use pencil::{pencil_regularity, RegularityReport};
pub use splitting::{lie_trotter_demo, SplittingReport};
pub use system::{
    effort_subspace_violation, gradient_check, max_subspace_violation, validate_structure,
    validate_structure_seeded, PhDaeSystem, StructureReport,
};
