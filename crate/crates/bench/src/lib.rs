//! Shared fixtures for the criterion benchmarks.

use nalgebra::DVector;
use phdae_core::coupler::{couple, extend_circuit};
use phdae_core::device::{assemble_device, FitDevice, MaterialSpec, PortPath};
use phdae_core::grid::build_grid;
use phdae_core::integrate::consistent_init;
use phdae_core::mna::{source_signal, AssembledCircuit};
use phdae_core::models::ElementModels;
use phdae_core::netlist::{parse, CircuitGraph};
use phdae_core::system::PhDaeSystem;

pub const SERIES_RLC: &str = "V1 1 0 SIN 1 0.5\nR1 1 2 1\nL1 2 3 1\nC1 3 0 1\n";
pub const NONLINEAR_RLC: &str =
    "V1 1 0 SIN 1 0.5\nR1 1 2 1\nL1 2 3 1 PHI=POLY3:1:0.2\nC1 3 0 1 Q=POLY3:1:0.3\n";
pub const RL_FIELD: &str = "V1 1 0 SIN 1 0.5\nR1 1 2 1\nL1 2 3 1\nE1 3 0 dev\n";

pub fn circuit(netlist: &str) -> (CircuitGraph, ElementModels) {
    let graph = parse(netlist).expect("benchmark netlist parses");
    let models = ElementModels::resolve(&graph).expect("benchmark models resolve");
    (graph, models)
}

pub fn benchmark_device(dims: (usize, usize, usize), sigma: f64) -> FitDevice {
    let grid = build_grid(dims, (1.0, 1.0, 1.0)).expect("benchmark grid");
    let ports: Vec<PortPath> = grid
        .interior_edges()
        .first()
        .copied()
        .map(|edge| PortPath {
            name: "P1".into(),
            edges: vec![(edge, 1.0)],
        })
        .into_iter()
        .collect();
    assemble_device(
        "dev",
        grid,
        MaterialSpec::Uniform(1.0),
        MaterialSpec::Uniform(1.0),
        MaterialSpec::Uniform(sigma),
        &ports,
    )
    .expect("benchmark device")
}

pub fn coupled_pair() -> (AssembledCircuit, FitDevice) {
    let (graph, models) = circuit(RL_FIELD);
    let ext = extend_circuit(&graph, &models).expect("field ports present");
    (ext, benchmark_device((1, 2, 2), 0.2))
}

pub fn condensed_system() -> PhDaeSystem {
    let (ext, dev) = coupled_pair();
    couple(&ext, &dev).expect("ports match").condensed
}

pub fn consistent_start(
    sys: &PhDaeSystem,
    source: &(dyn Fn(f64) -> DVector<f64> + Sync),
) -> DVector<f64> {
    consistent_init(sys, &DVector::zeros(sys.dim_state()), &source(0.0))
        .expect("benchmark init is consistent")
}

pub fn rlc_source(netlist: &str) -> impl Fn(f64) -> DVector<f64> + Send + Sync {
    let (graph, _) = circuit(netlist);
    source_signal(&graph)
}
