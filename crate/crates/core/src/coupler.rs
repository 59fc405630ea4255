//! Field/circuit coupling.
//!
//! The circuit side is the network assembly extended by the field-port
//! branches: one extra state block `j_E`, the incidence blocks `-A_E` /
//! `A_E^T` in the structure matrix and an internal port column per branch.
//! The internal output is `y1 = j_E`; the device's internal output is
//! `y2 = X_S^T e`. The coupling identifies `u1 = -y2` (voltage drop at the
//! device) and `u2 = y1` (port current), i.e. `u + C y = 0` with the fixed
//! skew matrix `C = [[0, I], [-I, 0]]`, which condenses into the structure
//! matrix as off-diagonal blocks `-+ X_S` between `j_E` and `e`.

use nalgebra::DMatrix;

use crate::device::FitDevice;
use crate::error::{ModelError, StructureError};
use crate::interconnect::{condense, CoupledSystem};
use crate::mna::{assemble_network, AssembledCircuit};
use crate::models::ElementModels;
use crate::netlist::{CircuitGraph, ElementClass};
use crate::system::PhDaeSystem;

/// Assembles the network equations extended by the field-port branches.
/// Fails when the netlist has no `E` branch.
pub fn extend_circuit(
    g: &CircuitGraph,
    models: &ElementModels,
) -> Result<AssembledCircuit, ModelError> {
    if g.count_of(ElementClass::FieldPort) == 0 {
        return Err(ModelError::NoFieldPorts);
    }
    assemble_network(g, models, true)
}

/// A coupled field/circuit pair: the block view and the condensed monolith.
#[derive(Debug, Clone)]
pub struct FieldCircuitCoupling {
    pub coupled: CoupledSystem,
    pub condensed: PhDaeSystem,
    /// Incidence of the field-port branches.
    pub a_e: DMatrix<f64>,
    pub port_count: usize,
}

/// Couples an extended circuit with a device through the fixed skew relation
/// `u1 = -y2`, `u2 = y1`.
pub fn couple(
    circuit: &AssembledCircuit,
    device: &FitDevice,
) -> Result<FieldCircuitCoupling, StructureError> {
    let p = circuit.layout.n_p;
    if p != device.port_count() {
        return Err(StructureError::PortCountMismatch {
            circuit: p,
            device: device.port_count(),
        });
    }
    if let Some(bad) = circuit.device_ids.iter().find(|id| **id != device.id) {
        return Err(StructureError::Invalid(format!(
            "field-port branch references device `{bad}` but the device file defines `{}`",
            device.id
        )));
    }

    let mut coupling = DMatrix::zeros(2 * p, 2 * p);
    coupling
        .view_mut((0, p), (p, p))
        .copy_from(&DMatrix::identity(p, p));
    coupling
        .view_mut((p, 0), (p, p))
        .copy_from(&(-DMatrix::<f64>::identity(p, p)));

    let device_sys = device.to_system();
    let coupled = CoupledSystem::with_skew_coupling(
        vec![
            (circuit.system.clone(), circuit.ports.clone()),
            (device_sys, device.port_split()),
        ],
        coupling,
    )?;
    let condensed = condense(&coupled)?;
    Ok(FieldCircuitCoupling {
        coupled,
        condensed,
        a_e: circuit.a_e.clone(),
        port_count: p,
    })
}
