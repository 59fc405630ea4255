//! Charge/flux-oriented modified nodal analysis as a PH-DAE.
//!
//! State ordering is `(q_C, Phi_L, e, j_V)` and, when field-port branches
//! are included, `(q_C, Phi_L, e, j_V, j_E)`. Equation rows are ordered
//! `(node KCL, flux, charge constraint, source, port)`. The effort vector
//! follows the equation rows: `z = (e, flux_inv(Phi), charge_inv(q), j_V,
//! j_E)`.
//!
//! The assembled structure matrix carries the incidence blocks
//!
//! ```text
//!       |  0     -A_L    0    -A_V  -A_E |
//!       |  A_L^T  0      0     0     0   |
//!   J = |  0      0      0     0     0   |
//!       |  A_V^T  0      0     0     0   |
//!       |  A_E^T  0      0     0     0   |
//! ```
//!
//! the resistive map `r(z) = (A_R g(A_R^T e), 0, A_C^T e - u_C, 0, 0)`, the
//! Hamiltonian `H = V_C(q_C) + V_L(Phi_L)` and the admissible subspace
//! `V = { (e, j_L, u_C, j_V, j_E) : A_C^T e = u_C }`.

use std::io::Write as _;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::ModelError;
use crate::interconnect::PortSplit;
use crate::mm;
use crate::models::ElementModels;
use crate::netlist::{CircuitGraph, ElementClass, SourceSpec};
use crate::system::{DiscreteGradientRule, PhDaeSystem, StateFn};
use crate::topology::check_soundness;

/// Dimensions and offsets of the MNA state and equation layout.
#[derive(Debug, Clone, Copy)]
pub struct MnaLayout {
    pub n_c: usize,
    pub n_l: usize,
    pub n_e: usize,
    pub n_v: usize,
    pub n_i: usize,
    /// Field-port branch count; zero for a plain network.
    pub n_p: usize,
}

impl MnaLayout {
    pub fn of(g: &CircuitGraph, with_field_ports: bool) -> Self {
        Self {
            n_c: g.count_of(ElementClass::Capacitor),
            n_l: g.count_of(ElementClass::Inductor),
            n_e: g.node_count(),
            n_v: g.count_of(ElementClass::VoltageSource),
            n_i: g.count_of(ElementClass::CurrentSource),
            n_p: if with_field_ports {
                g.count_of(ElementClass::FieldPort)
            } else {
                0
            },
        }
    }

    pub fn dim(&self) -> usize {
        self.n_c + self.n_l + self.n_e + self.n_v + self.n_p
    }

    // State offsets.
    pub fn q_offset(&self) -> usize {
        0
    }

    pub fn phi_offset(&self) -> usize {
        self.n_c
    }

    pub fn e_offset(&self) -> usize {
        self.n_c + self.n_l
    }

    pub fn jv_offset(&self) -> usize {
        self.n_c + self.n_l + self.n_e
    }

    pub fn je_offset(&self) -> usize {
        self.n_c + self.n_l + self.n_e + self.n_v
    }

    // Equation/effort row offsets.
    pub fn node_rows(&self) -> usize {
        0
    }

    pub fn flux_rows(&self) -> usize {
        self.n_e
    }

    pub fn charge_rows(&self) -> usize {
        self.n_e + self.n_l
    }

    pub fn source_rows(&self) -> usize {
        self.n_e + self.n_l + self.n_c
    }

    pub fn port_rows(&self) -> usize {
        self.n_e + self.n_l + self.n_c + self.n_v
    }
}

/// An assembled network: the PH-DAE plus the layout and port bookkeeping.
#[derive(Debug, Clone)]
pub struct AssembledCircuit {
    pub system: PhDaeSystem,
    pub layout: MnaLayout,
    /// External sources as `[ -A_I | 0 ; 0 | -I ]` columns, field ports as
    /// the trailing identity block; equals the port split of the system.
    pub ports: PortSplit,
    /// Incidence of the field-port branches (empty without ports).
    pub a_e: DMatrix<f64>,
    /// Device ids referenced by field-port branches, in branch order.
    pub device_ids: Vec<String>,
}

/// Assembles the PH-DAE network equations for a netlist without field ports.
pub fn assemble(g: &CircuitGraph, models: &ElementModels) -> Result<PhDaeSystem, ModelError> {
    if g.count_of(ElementClass::FieldPort) > 0 {
        let names: Vec<String> = g
            .branches_of(ElementClass::FieldPort)
            .iter()
            .map(|b| b.name.clone())
            .collect();
        return Err(ModelError::FieldPortsPresent(names.join(", ")));
    }
    Ok(assemble_network(g, models, false)?.system)
}

/// Shared assembly; `with_field_ports` appends the `j_E` state, the port
/// rows of the structure matrix and the internal port column.
pub(crate) fn assemble_network(
    g: &CircuitGraph,
    models: &ElementModels,
    with_field_ports: bool,
) -> Result<AssembledCircuit, ModelError> {
    let soundness = check_soundness(g);
    if !soundness.sound() {
        let mut reasons = Vec::new();
        if !soundness.connected {
            reasons.push("graph is not connected".to_string());
        }
        if !soundness.v_loop_free {
            reasons.push(format!(
                "V-loop through {}",
                soundness.v_loop_witness.join(", ")
            ));
        }
        if !soundness.i_cutset_free {
            reasons.push(format!(
                "I-cutset through {}",
                soundness.i_cutset_witness.join(", ")
            ));
        }
        return Err(ModelError::Unsound(reasons.join("; ")));
    }

    let layout = MnaLayout::of(g, with_field_ports);
    let n = layout.dim();
    let a_c = g.a_c();
    let a_l = g.a_l();
    let a_r = g.a_r();
    let a_v = g.a_v();
    let a_i = g.a_i();
    let a_e = if with_field_ports {
        g.a_e()
    } else {
        DMatrix::zeros(layout.n_e, 0)
    };

    // E: d/dt of (A_C q) in the node rows, d/dt Phi in the flux rows.
    let mut e_mat = DMatrix::zeros(n, n);
    e_mat
        .view_mut((layout.node_rows(), layout.q_offset()), (layout.n_e, layout.n_c))
        .copy_from(&a_c);
    e_mat
        .view_mut((layout.flux_rows(), layout.phi_offset()), (layout.n_l, layout.n_l))
        .copy_from(&DMatrix::identity(layout.n_l, layout.n_l));

    let mut j_mat = DMatrix::zeros(n, n);
    j_mat
        .view_mut((layout.node_rows(), layout.flux_rows()), (layout.n_e, layout.n_l))
        .copy_from(&(-&a_l));
    j_mat
        .view_mut((layout.node_rows(), layout.source_rows()), (layout.n_e, layout.n_v))
        .copy_from(&(-&a_v));
    j_mat
        .view_mut((layout.flux_rows(), layout.node_rows()), (layout.n_l, layout.n_e))
        .copy_from(&a_l.transpose());
    j_mat
        .view_mut((layout.source_rows(), layout.node_rows()), (layout.n_v, layout.n_e))
        .copy_from(&a_v.transpose());
    if layout.n_p > 0 {
        j_mat
            .view_mut((layout.node_rows(), layout.port_rows()), (layout.n_e, layout.n_p))
            .copy_from(&(-&a_e));
        j_mat
            .view_mut((layout.port_rows(), layout.node_rows()), (layout.n_p, layout.n_e))
            .copy_from(&a_e.transpose());
    }

    // External input columns: currents then voltages, as in the displayed
    // source term; the internal port column is the trailing identity block.
    let m_ext = layout.n_i + layout.n_v;
    let mut b_ext = DMatrix::zeros(n, m_ext);
    b_ext
        .view_mut((layout.node_rows(), 0), (layout.n_e, layout.n_i))
        .copy_from(&(-&a_i));
    b_ext
        .view_mut((layout.source_rows(), layout.n_i), (layout.n_v, layout.n_v))
        .copy_from(&(-DMatrix::<f64>::identity(layout.n_v, layout.n_v)));
    let mut b_int = DMatrix::zeros(n, layout.n_p);
    if layout.n_p > 0 {
        b_int
            .view_mut((layout.port_rows(), 0), (layout.n_p, layout.n_p))
            .copy_from(&DMatrix::identity(layout.n_p, layout.n_p));
    }
    let mut b_full = DMatrix::zeros(n, m_ext + layout.n_p);
    b_full.view_mut((0, 0), (n, m_ext)).copy_from(&b_ext);
    b_full
        .view_mut((0, m_ext), (n, layout.n_p))
        .copy_from(&b_int);

    // Effort z = (e, flux_inv(Phi), charge_inv(q), j_V, j_E).
    let effort: StateFn = {
        let models = models.clone();
        Arc::new(move |x: &DVector<f64>| {
            let mut z = DVector::zeros(layout.dim());
            let q = x.rows(layout.q_offset(), layout.n_c).into_owned();
            let phi = x.rows(layout.phi_offset(), layout.n_l).into_owned();
            z.rows_mut(layout.node_rows(), layout.n_e)
                .copy_from(&x.rows(layout.e_offset(), layout.n_e));
            z.rows_mut(layout.flux_rows(), layout.n_l)
                .copy_from(&models.flux_inv(&phi));
            z.rows_mut(layout.charge_rows(), layout.n_c)
                .copy_from(&models.charge_inv(&q));
            z.rows_mut(layout.source_rows(), layout.n_v)
                .copy_from(&x.rows(layout.jv_offset(), layout.n_v));
            if layout.n_p > 0 {
                z.rows_mut(layout.port_rows(), layout.n_p)
                    .copy_from(&x.rows(layout.je_offset(), layout.n_p));
            }
            z
        })
    };

    let effort_jacobian = {
        let models = models.clone();
        Arc::new(move |x: &DVector<f64>| {
            let mut dz = DMatrix::zeros(layout.dim(), layout.dim());
            for i in 0..layout.n_e {
                dz[(layout.node_rows() + i, layout.e_offset() + i)] = 1.0;
            }
            for (i, law) in models.inductors.iter().enumerate() {
                dz[(layout.flux_rows() + i, layout.phi_offset() + i)] =
                    law.inverse_derivative(x[layout.phi_offset() + i]);
            }
            for (i, law) in models.capacitors.iter().enumerate() {
                dz[(layout.charge_rows() + i, layout.q_offset() + i)] =
                    law.inverse_derivative(x[layout.q_offset() + i]);
            }
            for i in 0..layout.n_v {
                dz[(layout.source_rows() + i, layout.jv_offset() + i)] = 1.0;
            }
            for i in 0..layout.n_p {
                dz[(layout.port_rows() + i, layout.je_offset() + i)] = 1.0;
            }
            dz
        })
    };

    // r(z) = (A_R g(A_R^T e), 0, A_C^T e - u_C, 0, 0).
    let resistive: StateFn = {
        let models = models.clone();
        let a_r = a_r.clone();
        let a_c = a_c.clone();
        Arc::new(move |z: &DVector<f64>| {
            let mut r = DVector::zeros(layout.dim());
            let e_pot = z.rows(layout.node_rows(), layout.n_e).into_owned();
            let u_r = a_r.transpose() * &e_pot;
            r.rows_mut(layout.node_rows(), layout.n_e)
                .copy_from(&(&a_r * models.conductance(&u_r)));
            let constraint =
                a_c.transpose() * &e_pot - z.rows(layout.charge_rows(), layout.n_c).into_owned();
            r.rows_mut(layout.charge_rows(), layout.n_c)
                .copy_from(&constraint);
            r
        })
    };

    let resistive_jacobian = {
        let models = models.clone();
        let a_r = a_r.clone();
        let a_c = a_c.clone();
        Arc::new(move |z: &DVector<f64>| {
            let mut dr = DMatrix::zeros(layout.dim(), layout.dim());
            let e_pot = z.rows(layout.node_rows(), layout.n_e).into_owned();
            let u_r = a_r.transpose() * &e_pot;
            let gp = models.conductance_derivative(&u_r);
            let block = &a_r * DMatrix::from_diagonal(&gp) * a_r.transpose();
            dr.view_mut((layout.node_rows(), layout.node_rows()), (layout.n_e, layout.n_e))
                .copy_from(&block);
            dr.view_mut((layout.charge_rows(), layout.node_rows()), (layout.n_c, layout.n_e))
                .copy_from(&a_c.transpose());
            for i in 0..layout.n_c {
                dr[(layout.charge_rows() + i, layout.charge_rows() + i)] = -1.0;
            }
            dr
        })
    };

    let hamiltonian = {
        let models = models.clone();
        Arc::new(move |x: &DVector<f64>| {
            let q = x.rows(layout.q_offset(), layout.n_c).into_owned();
            let phi = x.rows(layout.phi_offset(), layout.n_l).into_owned();
            models.v_c(&q) + models.v_l(&phi)
        })
    };

    let hamiltonian_grad = {
        let models = models.clone();
        Arc::new(move |x: &DVector<f64>| {
            let mut grad = DVector::zeros(layout.dim());
            let q = x.rows(layout.q_offset(), layout.n_c).into_owned();
            let phi = x.rows(layout.phi_offset(), layout.n_l).into_owned();
            grad.rows_mut(layout.q_offset(), layout.n_c)
                .copy_from(&models.v_c_grad(&q));
            grad.rows_mut(layout.phi_offset(), layout.n_l)
                .copy_from(&models.v_l_grad(&phi));
            grad
        })
    };

    // Basis of V = { A_C^T e = u_C }: one column per node potential carrying
    // its induced capacitor voltages, plus unit columns for j_L, j_V, j_E.
    let k = layout.n_e + layout.n_l + layout.n_v + layout.n_p;
    let mut basis = DMatrix::zeros(n, k);
    for i in 0..layout.n_e {
        basis[(layout.node_rows() + i, i)] = 1.0;
        for c in 0..layout.n_c {
            basis[(layout.charge_rows() + c, i)] = a_c[(i, c)];
        }
    }
    for i in 0..layout.n_l {
        basis[(layout.flux_rows() + i, layout.n_e + i)] = 1.0;
    }
    for i in 0..layout.n_v {
        basis[(layout.source_rows() + i, layout.n_e + layout.n_l + i)] = 1.0;
    }
    for i in 0..layout.n_p {
        basis[(
            layout.port_rows() + i,
            layout.n_e + layout.n_l + layout.n_v + i,
        )] = 1.0;
    }

    // Replacing q by q(A_C^T e) puts the effort of any state into V.
    let state_projector: StateFn = {
        let models = models.clone();
        let a_c = a_c.clone();
        Arc::new(move |x: &DVector<f64>| {
            let mut out = x.clone();
            let e_pot = x.rows(layout.e_offset(), layout.n_e).into_owned();
            let u_c = a_c.transpose() * e_pot;
            out.rows_mut(layout.q_offset(), layout.n_c)
                .copy_from(&models.charge(&u_c));
            out
        })
    };

    let mut labels = Vec::with_capacity(n);
    for id in g.node_ids() {
        labels.push(format!("kcl(node {id})"));
    }
    for b in g.branches_of(ElementClass::Inductor) {
        labels.push(format!("flux({})", b.name));
    }
    for b in g.branches_of(ElementClass::Capacitor) {
        labels.push(format!("charge({})", b.name));
    }
    for b in g.branches_of(ElementClass::VoltageSource) {
        labels.push(format!("source({})", b.name));
    }
    if layout.n_p > 0 {
        for b in g.branches_of(ElementClass::FieldPort) {
            labels.push(format!("port({})", b.name));
        }
    }

    let mut builder = PhDaeSystem::builder(n, m_ext + layout.n_p)
        .e_matrix(e_mat)
        .j_matrix(j_mat)
        .b_matrix(b_full)
        .effort_fn(effort)
        .resistive_fn(resistive)
        .hamiltonian_fns(hamiltonian, hamiltonian_grad)
        .effort_jacobian(effort_jacobian)
        .resistive_jacobian(resistive_jacobian)
        .subspace_basis(basis)
        .state_projector(state_projector)
        .row_labels(labels);

    if models.storage_linear() {
        // z = Q x with the diagonal storage coefficients in permuted blocks.
        let mut q_mat = DMatrix::zeros(n, n);
        for i in 0..layout.n_e {
            q_mat[(layout.node_rows() + i, layout.e_offset() + i)] = 1.0;
        }
        for (i, law) in models.inductors.iter().enumerate() {
            q_mat[(layout.flux_rows() + i, layout.phi_offset() + i)] = law.inverse_derivative(0.0);
        }
        for (i, law) in models.capacitors.iter().enumerate() {
            q_mat[(layout.charge_rows() + i, layout.q_offset() + i)] = law.inverse_derivative(0.0);
        }
        for i in 0..layout.n_v {
            q_mat[(layout.source_rows() + i, layout.jv_offset() + i)] = 1.0;
        }
        for i in 0..layout.n_p {
            q_mat[(layout.port_rows() + i, layout.je_offset() + i)] = 1.0;
        }
        builder = builder.linear_effort(q_mat);
    } else {
        builder = builder.discrete_gradient(discrete_gradient_rule(models, layout));
    }

    if models.conductance_linear() {
        let mut r_mat = DMatrix::zeros(n, n);
        if a_r.ncols() > 0 {
            // Constant for linear laws; evaluate at zero voltage.
            let g_diag = models.conductance_derivative(&DVector::zeros(a_r.ncols()));
            let block = &a_r * DMatrix::from_diagonal(&g_diag) * a_r.transpose();
            r_mat
                .view_mut((layout.node_rows(), layout.node_rows()), (layout.n_e, layout.n_e))
                .copy_from(&block);
        }
        r_mat
            .view_mut((layout.charge_rows(), layout.node_rows()), (layout.n_c, layout.n_e))
            .copy_from(&a_c.transpose());
        for i in 0..layout.n_c {
            r_mat[(layout.charge_rows() + i, layout.charge_rows() + i)] = -1.0;
        }
        builder = builder.linear_resistive(r_mat);
    }

    let system = builder.build().expect("assembly dimensions are consistent");
    let device_ids = g
        .branches_of(ElementClass::FieldPort)
        .iter()
        .map(|b| match &b.kind {
            crate::netlist::ElementKind::FieldPort { device_id } => device_id.clone(),
            _ => unreachable!(),
        })
        .collect();

    Ok(AssembledCircuit {
        system,
        layout,
        ports: PortSplit::new(b_ext, b_int),
        a_e,
        device_ids,
    })
}

/// Two-point effort for nonlinear storage laws: difference quotients of the
/// storage potentials on the differential components, end-point evaluation
/// for the algebraic components. Gives the exact per-step energy identity.
fn discrete_gradient_rule(models: &ElementModels, layout: MnaLayout) -> DiscreteGradientRule {
    let effort = {
        let models = models.clone();
        Arc::new(move |x: &DVector<f64>, xp: &DVector<f64>| {
            let mut z = DVector::zeros(layout.dim());
            z.rows_mut(layout.node_rows(), layout.n_e)
                .copy_from(&xp.rows(layout.e_offset(), layout.n_e));
            for (i, law) in models.inductors.iter().enumerate() {
                let (w0, w1) = (x[layout.phi_offset() + i], xp[layout.phi_offset() + i]);
                z[layout.flux_rows() + i] = potential_difference_quotient(law, w0, w1);
            }
            for (i, law) in models.capacitors.iter().enumerate() {
                let (w0, w1) = (x[layout.q_offset() + i], xp[layout.q_offset() + i]);
                z[layout.charge_rows() + i] = potential_difference_quotient(law, w0, w1);
            }
            z.rows_mut(layout.source_rows(), layout.n_v)
                .copy_from(&xp.rows(layout.jv_offset(), layout.n_v));
            if layout.n_p > 0 {
                z.rows_mut(layout.port_rows(), layout.n_p)
                    .copy_from(&xp.rows(layout.je_offset(), layout.n_p));
            }
            z
        })
    };
    let jacobian = {
        let models = models.clone();
        Arc::new(move |x: &DVector<f64>, xp: &DVector<f64>| {
            let mut dz = DMatrix::zeros(layout.dim(), layout.dim());
            for i in 0..layout.n_e {
                dz[(layout.node_rows() + i, layout.e_offset() + i)] = 1.0;
            }
            for (i, law) in models.inductors.iter().enumerate() {
                let (w0, w1) = (x[layout.phi_offset() + i], xp[layout.phi_offset() + i]);
                dz[(layout.flux_rows() + i, layout.phi_offset() + i)] =
                    difference_quotient_derivative(law, w0, w1);
            }
            for (i, law) in models.capacitors.iter().enumerate() {
                let (w0, w1) = (x[layout.q_offset() + i], xp[layout.q_offset() + i]);
                dz[(layout.charge_rows() + i, layout.q_offset() + i)] =
                    difference_quotient_derivative(law, w0, w1);
            }
            for i in 0..layout.n_v {
                dz[(layout.source_rows() + i, layout.jv_offset() + i)] = 1.0;
            }
            for i in 0..layout.n_p {
                dz[(layout.port_rows() + i, layout.je_offset() + i)] = 1.0;
            }
            dz
        })
    };
    DiscreteGradientRule {
        effort,
        jacobian: Some(jacobian),
    }
}

fn potential_difference_quotient(law: &crate::models::StorageLaw, w0: f64, w1: f64) -> f64 {
    let dw = w1 - w0;
    if dw.abs() <= 1e-8 * (1.0 + w0.abs() + w1.abs()) {
        law.inverse(0.5 * (w0 + w1))
    } else {
        (law.potential(w1) - law.potential(w0)) / dw
    }
}

fn difference_quotient_derivative(law: &crate::models::StorageLaw, w0: f64, w1: f64) -> f64 {
    let dw = w1 - w0;
    if dw.abs() <= 1e-8 * (1.0 + w0.abs() + w1.abs()) {
        0.5 * law.inverse_derivative(0.5 * (w0 + w1))
    } else {
        (law.inverse(w1) * dw - (law.potential(w1) - law.potential(w0))) / (dw * dw)
    }
}

/// External source signal `u(t) = (i(t), v(t))` in branch file order.
pub fn source_signal(g: &CircuitGraph) -> impl Fn(f64) -> DVector<f64> + Send + Sync {
    let mut specs: Vec<SourceSpec> = Vec::new();
    for b in g.branches_of(ElementClass::CurrentSource) {
        if let crate::netlist::ElementKind::CurrentSource(spec) = &b.kind {
            specs.push(*spec);
        }
    }
    for b in g.branches_of(ElementClass::VoltageSource) {
        if let crate::netlist::ElementKind::VoltageSource(spec) = &b.kind {
            specs.push(*spec);
        }
    }
    move |t: f64| DVector::from_fn(specs.len(), |i, _| specs[i].eval(t))
}

/// Writes the assembled matrices in coordinate ("matrix market") form for
/// inspection: `E.mtx`, `J.mtx`, `B.mtx` and, when declared, `Q.mtx`,
/// `R.mtx`.
pub fn export_matrices(sys: &PhDaeSystem, dir: &Path) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut pairs = vec![
        ("E.mtx", sys.e_matrix()),
        ("J.mtx", sys.j_matrix()),
        ("B.mtx", sys.b_matrix()),
    ];
    if let Some(q) = sys.linear_effort() {
        pairs.push(("Q.mtx", q));
    }
    if let Some(r) = sys.linear_resistive() {
        pairs.push(("R.mtx", r));
    }
    for (name, matrix) in pairs {
        let mut file = std::fs::File::create(dir.join(name))?;
        mm::write_coordinate(&mut file, matrix)?;
        file.flush()?;
    }
    Ok(())
}
