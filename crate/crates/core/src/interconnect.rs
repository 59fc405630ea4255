//! Interconnection of PH-DAE blocks.
//!
//! Two routes are provided. [`condense`] handles the skew coupling
//! `u_int + C y_int = 0` by absorbing the internal ports into the structure
//! matrix, `J_hat = diag(J_i) - B_int C B_int^T`, which stays skew-symmetric
//! because `C` is. [`aggregate`] handles a general linear relation
//! `M u + N y = 0` by extending the state with dummy port variables
//! `(u_hat, y_hat)` and keeping the relation as an explicit algebraic
//! equation driven by the new external input:
//!
//! ```text
//!   d/dt E x = J z(x) - r(z(x)) + B u_hat
//!          0 = -B^T z(x) + y_hat
//!          0 = -(M u_hat + N y_hat) + u(t),        y = y_hat.
//! ```
//!
//! For `M = I` and skew `N` (the condensable case) the extended structure
//! matrix is itself exactly skew-symmetric.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::StructureError;
use crate::system::{
    DiscreteGradientRule, JacobianFn, PhDaeSystem, ScalarFn, StateFn, TwoPointFn,
    TwoPointJacobianFn,
};

/// Split of a block's ports into internal (coupled) and external (sources).
#[derive(Debug, Clone)]
pub struct PortSplit {
    /// Internal port allocation, `n x m_int`.
    pub internal: DMatrix<f64>,
    /// External port allocation, `n x m_ext`.
    pub external: DMatrix<f64>,
}

impl PortSplit {
    pub fn new(external: DMatrix<f64>, internal: DMatrix<f64>) -> Self {
        Self { internal, external }
    }

    /// All ports internal; used by blocks without independent sources.
    pub fn all_internal(internal: DMatrix<f64>) -> Self {
        let n = internal.nrows();
        Self {
            internal,
            external: DMatrix::zeros(n, 0),
        }
    }

    pub fn internal_count(&self) -> usize {
        self.internal.ncols()
    }

    pub fn external_count(&self) -> usize {
        self.external.ncols()
    }
}

/// A list of PH-DAE blocks with port splits and the coupling description.
#[derive(Debug, Clone)]
pub struct CoupledSystem {
    pub blocks: Vec<(PhDaeSystem, PortSplit)>,
    /// Skew matrix of `u_int + C y_int = 0`, when the coupling is skew.
    pub coupling_matrix: Option<DMatrix<f64>>,
    /// General relation `M u + N y = 0` over the full aggregated ports.
    pub interconnection: Option<(DMatrix<f64>, DMatrix<f64>)>,
}

impl CoupledSystem {
    /// Builds a skew-coupled system; rejects non-skew `C` and inconsistent
    /// port splits.
    pub fn with_skew_coupling(
        blocks: Vec<(PhDaeSystem, PortSplit)>,
        coupling: DMatrix<f64>,
    ) -> Result<Self, StructureError> {
        for (i, (sys, split)) in blocks.iter().enumerate() {
            let declared = sys.dim_input();
            let split_total = split.internal_count() + split.external_count();
            if split_total != declared {
                return Err(StructureError::PortSplitMismatch {
                    block: i,
                    split: split_total,
                    declared,
                });
            }
        }
        let m_int: usize = blocks.iter().map(|(_, s)| s.internal_count()).sum();
        if coupling.nrows() != m_int || coupling.ncols() != m_int {
            return Err(StructureError::CouplingDimension {
                coupling: coupling.nrows(),
                internal: m_int,
            });
        }
        let violation = skew_violation(&coupling);
        if violation > 1e-14 * matrix_scale(&coupling) {
            return Err(StructureError::NonSkewCoupling { violation });
        }
        Ok(Self {
            blocks,
            coupling_matrix: Some(coupling),
            interconnection: None,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.blocks.iter().map(|(sys, _)| sys.dim_state()).sum()
    }

    pub fn external_count(&self) -> usize {
        self.blocks.iter().map(|(_, s)| s.external_count()).sum()
    }

    pub fn internal_count(&self) -> usize {
        self.blocks.iter().map(|(_, s)| s.internal_count()).sum()
    }

    pub fn condense(&self) -> Result<PhDaeSystem, StructureError> {
        condense(self)
    }
}

fn skew_violation(c: &DMatrix<f64>) -> f64 {
    let s = c + c.transpose();
    s.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
}

fn matrix_scale(c: &DMatrix<f64>) -> f64 {
    c.iter().fold(0.0f64, |acc, v| acc.max(v.abs())).max(1.0)
}

fn block_diag(mats: &[DMatrix<f64>]) -> DMatrix<f64> {
    let rows: usize = mats.iter().map(|m| m.nrows()).sum();
    let cols: usize = mats.iter().map(|m| m.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for m in mats {
        out.view_mut((r, c), (m.nrows(), m.ncols())).copy_from(m);
        r += m.nrows();
        c += m.ncols();
    }
    out
}

/// Per-block state slicing offsets.
fn state_offsets(blocks: &[&PhDaeSystem]) -> Vec<(usize, usize)> {
    let mut offsets = Vec::with_capacity(blocks.len());
    let mut at = 0;
    for sys in blocks {
        offsets.push((at, sys.dim_state()));
        at += sys.dim_state();
    }
    offsets
}

/// Condenses a skew-coupled system into a single PH-DAE:
/// `J_hat = diag(J_i) - B_int C B_int^T`, external ports only.
pub fn condense(coupled: &CoupledSystem) -> Result<PhDaeSystem, StructureError> {
    let coupling = coupled
        .coupling_matrix
        .as_ref()
        .ok_or_else(|| StructureError::Invalid("condense needs a skew coupling matrix".into()))?;
    let violation = skew_violation(coupling);
    if violation > 1e-14 * matrix_scale(coupling) {
        return Err(StructureError::NonSkewCoupling { violation });
    }

    let systems: Vec<&PhDaeSystem> = coupled.blocks.iter().map(|(sys, _)| sys).collect();
    let offsets = state_offsets(&systems);
    let n = coupled.state_dim();

    let e = block_diag(&systems.iter().map(|s| s.e_matrix().clone()).collect::<Vec<_>>());
    let j_blocks = block_diag(&systems.iter().map(|s| s.j_matrix().clone()).collect::<Vec<_>>());
    let b_int = block_diag(
        &coupled
            .blocks
            .iter()
            .map(|(_, s)| s.internal.clone())
            .collect::<Vec<_>>(),
    );
    let b_ext = block_diag(
        &coupled
            .blocks
            .iter()
            .map(|(_, s)| s.external.clone())
            .collect::<Vec<_>>(),
    );
    let j_hat = &j_blocks - &b_int * coupling * b_int.transpose();

    let basis = block_diag(
        &systems
            .iter()
            .map(|s| s.subspace_basis().clone())
            .collect::<Vec<_>>(),
    );

    let effort = compose_state_fn(&systems, &offsets, |sys, x| sys.effort(x));
    let resistive = compose_state_fn(&systems, &offsets, |sys, z| sys.resistive(z));
    let projector = compose_state_fn(&systems, &offsets, |sys, x| sys.project_state(x));
    let (hamiltonian, hamiltonian_grad) = compose_hamiltonian(&systems, &offsets, 0);
    let effort_jacobian = compose_jacobian(&systems, &offsets, |sys, x| {
        sys.effort_jacobian_at(x, 1e-7)
    });
    let resistive_jacobian = compose_jacobian(&systems, &offsets, |sys, z| {
        sys.resistive_jacobian_at(z, 1e-7)
    });

    let mut labels = Vec::with_capacity(n);
    for (i, sys) in systems.iter().enumerate() {
        for row in 0..sys.dim_state() {
            labels.push(format!("block{i}:{}", sys.row_label(row)));
        }
    }

    let mut builder = PhDaeSystem::builder(n, b_ext.ncols())
        .e_matrix(e)
        .j_matrix(j_hat)
        .b_matrix(b_ext)
        .effort_fn(effort)
        .resistive_fn(resistive)
        .hamiltonian_fns(hamiltonian, hamiltonian_grad)
        .effort_jacobian(effort_jacobian)
        .resistive_jacobian(resistive_jacobian)
        .subspace_basis(basis)
        .state_projector(projector)
        .row_labels(labels);

    if systems.iter().all(|s| s.linear_effort().is_some()) {
        builder = builder.linear_effort(block_diag(
            &systems
                .iter()
                .map(|s| s.linear_effort().unwrap().clone())
                .collect::<Vec<_>>(),
        ));
    }
    if systems.iter().all(|s| s.linear_resistive().is_some()) {
        builder = builder.linear_resistive(block_diag(
            &systems
                .iter()
                .map(|s| s.linear_resistive().unwrap().clone())
                .collect::<Vec<_>>(),
        ));
    }
    if let Some(rule) = compose_discrete_gradient(&systems, &offsets, 0) {
        builder = builder.discrete_gradient(rule);
    }

    Ok(builder.build().expect("condensed dimensions are consistent"))
}

/// Joins blocks under the general relation `M u + N y = 0` by appending the
/// dummy port variables `(u_hat, y_hat)` to the state. The relation row is
/// driven by the new external input, so `M = I, N = 0` exposes the block
/// inputs directly and a skew `N` with `u(t) = 0` closes the loop.
pub fn aggregate(
    blocks: &[PhDaeSystem],
    m_matrix: &DMatrix<f64>,
    n_matrix: &DMatrix<f64>,
) -> Result<PhDaeSystem, StructureError> {
    if blocks.is_empty() {
        return Err(StructureError::EmptyAggregation);
    }
    let m: usize = blocks.iter().map(|b| b.dim_input()).sum();
    for (mat, _name) in [(m_matrix, "M"), (n_matrix, "N")] {
        if mat.nrows() != m || mat.ncols() != m {
            return Err(StructureError::InterconnectionShape {
                want: m,
                found_rows: mat.nrows(),
                found_cols: mat.ncols(),
            });
        }
    }
    let systems: Vec<&PhDaeSystem> = blocks.iter().collect();
    let offsets = state_offsets(&systems);
    let nx: usize = blocks.iter().map(|b| b.dim_state()).sum();
    let n = nx + 2 * m;

    let e_blocks = block_diag(&systems.iter().map(|s| s.e_matrix().clone()).collect::<Vec<_>>());
    let mut e = DMatrix::zeros(n, n);
    e.view_mut((0, 0), (nx, nx)).copy_from(&e_blocks);

    let j_blocks = block_diag(&systems.iter().map(|s| s.j_matrix().clone()).collect::<Vec<_>>());
    let b_blocks = block_diag(&systems.iter().map(|s| s.b_matrix().clone()).collect::<Vec<_>>());
    let mut j = DMatrix::zeros(n, n);
    j.view_mut((0, 0), (nx, nx)).copy_from(&j_blocks);
    j.view_mut((0, nx), (nx, m)).copy_from(&b_blocks);
    j.view_mut((nx, 0), (m, nx))
        .copy_from(&(-b_blocks.transpose()));
    j.view_mut((nx, nx + m), (m, m))
        .copy_from(&DMatrix::identity(m, m));
    j.view_mut((nx + m, nx), (m, m)).copy_from(&(-m_matrix));
    j.view_mut((nx + m, nx + m), (m, m)).copy_from(&(-n_matrix));

    let mut b = DMatrix::zeros(n, m);
    b.view_mut((nx + m, 0), (m, m))
        .copy_from(&DMatrix::identity(m, m));

    let effort = extend_state_fn(
        compose_state_fn(&systems, &offsets, |sys, x| sys.effort(x)),
        nx,
        2 * m,
    );
    let resistive = {
        let inner = compose_state_fn(&systems, &offsets, |sys, z| sys.resistive(z));
        Arc::new(move |z: &DVector<f64>| {
            let mut out = DVector::zeros(z.len());
            let blocks_part = z.rows(0, nx).into_owned();
            out.rows_mut(0, nx).copy_from(&inner(&blocks_part));
            out
        }) as StateFn
    };
    let projector = extend_state_fn(
        compose_state_fn(&systems, &offsets, |sys, x| sys.project_state(x)),
        nx,
        2 * m,
    );
    let (hamiltonian, hamiltonian_grad) = compose_hamiltonian(&systems, &offsets, 2 * m);

    let effort_jacobian = {
        let inner = compose_jacobian(&systems, &offsets, |sys, x| sys.effort_jacobian_at(x, 1e-7));
        Arc::new(move |x: &DVector<f64>| {
            let mut out = DMatrix::identity(x.len(), x.len());
            let blocks_part = x.rows(0, nx).into_owned();
            out.view_mut((0, 0), (nx, nx)).copy_from(&inner(&blocks_part));
            out
        }) as JacobianFn
    };
    let resistive_jacobian = {
        let inner = compose_jacobian(&systems, &offsets, |sys, z| {
            sys.resistive_jacobian_at(z, 1e-7)
        });
        Arc::new(move |z: &DVector<f64>| {
            let mut out = DMatrix::zeros(z.len(), z.len());
            let blocks_part = z.rows(0, nx).into_owned();
            out.view_mut((0, 0), (nx, nx)).copy_from(&inner(&blocks_part));
            out
        }) as JacobianFn
    };

    let basis_blocks = block_diag(
        &systems
            .iter()
            .map(|s| s.subspace_basis().clone())
            .collect::<Vec<_>>(),
    );
    let k = basis_blocks.ncols();
    let mut basis = DMatrix::zeros(n, k + 2 * m);
    basis.view_mut((0, 0), (nx, k)).copy_from(&basis_blocks);
    basis
        .view_mut((nx, k), (2 * m, 2 * m))
        .copy_from(&DMatrix::identity(2 * m, 2 * m));

    let mut labels = Vec::with_capacity(n);
    for (i, sys) in systems.iter().enumerate() {
        for row in 0..sys.dim_state() {
            labels.push(format!("block{i}:{}", sys.row_label(row)));
        }
    }
    for kk in 0..m {
        labels.push(format!("output definition {kk}"));
    }
    for kk in 0..m {
        labels.push(format!("interconnection {kk}"));
    }

    let mut builder = PhDaeSystem::builder(n, m)
        .e_matrix(e)
        .j_matrix(j)
        .b_matrix(b)
        .effort_fn(effort)
        .resistive_fn(resistive)
        .hamiltonian_fns(hamiltonian, hamiltonian_grad)
        .effort_jacobian(effort_jacobian)
        .resistive_jacobian(resistive_jacobian)
        .subspace_basis(basis)
        .state_projector(projector)
        .row_labels(labels);

    if systems.iter().all(|s| s.linear_effort().is_some()) {
        let q_blocks = block_diag(
            &systems
                .iter()
                .map(|s| s.linear_effort().unwrap().clone())
                .collect::<Vec<_>>(),
        );
        let mut q = DMatrix::identity(n, n);
        q.view_mut((0, 0), (nx, nx)).copy_from(&q_blocks);
        builder = builder.linear_effort(q);
    }
    if systems.iter().all(|s| s.linear_resistive().is_some()) {
        let r_blocks = block_diag(
            &systems
                .iter()
                .map(|s| s.linear_resistive().unwrap().clone())
                .collect::<Vec<_>>(),
        );
        let mut r = DMatrix::zeros(n, n);
        r.view_mut((0, 0), (nx, nx)).copy_from(&r_blocks);
        builder = builder.linear_resistive(r);
    }
    if let Some(rule) = compose_discrete_gradient(&systems, &offsets, 2 * m) {
        builder = builder.discrete_gradient(rule);
    }

    Ok(builder.build().expect("aggregated dimensions are consistent"))
}

/// Stacks block initial states and zero dummy ports for an aggregated system.
pub fn joint_initial_state(blocks: &[PhDaeSystem], states: &[DVector<f64>]) -> DVector<f64> {
    let m: usize = blocks.iter().map(|b| b.dim_input()).sum();
    let nx: usize = blocks.iter().map(|b| b.dim_state()).sum();
    let mut out = DVector::zeros(nx + 2 * m);
    let mut at = 0;
    for x in states {
        out.rows_mut(at, x.len()).copy_from(x);
        at += x.len();
    }
    out
}

fn compose_state_fn(
    systems: &[&PhDaeSystem],
    offsets: &[(usize, usize)],
    apply: impl Fn(&PhDaeSystem, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
) -> StateFn {
    let systems: Vec<PhDaeSystem> = systems.iter().map(|s| (*s).clone()).collect();
    let offsets = offsets.to_vec();
    Arc::new(move |x: &DVector<f64>| {
        let mut out = DVector::zeros(x.len());
        for (sys, (at, len)) in systems.iter().zip(&offsets) {
            let part = x.rows(*at, *len).into_owned();
            out.rows_mut(*at, *len).copy_from(&apply(sys, &part));
        }
        out
    })
}

fn compose_jacobian(
    systems: &[&PhDaeSystem],
    offsets: &[(usize, usize)],
    apply: impl Fn(&PhDaeSystem, &DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
) -> JacobianFn {
    let systems: Vec<PhDaeSystem> = systems.iter().map(|s| (*s).clone()).collect();
    let offsets = offsets.to_vec();
    Arc::new(move |x: &DVector<f64>| {
        let mut out = DMatrix::zeros(x.len(), x.len());
        for (sys, (at, len)) in systems.iter().zip(&offsets) {
            let part = x.rows(*at, *len).into_owned();
            out.view_mut((*at, *at), (*len, *len))
                .copy_from(&apply(sys, &part));
        }
        out
    })
}

fn compose_hamiltonian(
    systems: &[&PhDaeSystem],
    offsets: &[(usize, usize)],
    extra: usize,
) -> (ScalarFn, StateFn) {
    let systems: Vec<PhDaeSystem> = systems.iter().map(|s| (*s).clone()).collect();
    let offsets = offsets.to_vec();
    let nx: usize = offsets.iter().map(|(_, len)| len).sum();
    let h = {
        let systems = systems.clone();
        let offsets = offsets.clone();
        Arc::new(move |x: &DVector<f64>| {
            systems
                .iter()
                .zip(&offsets)
                .map(|(sys, (at, len))| sys.hamiltonian(&x.rows(*at, *len).into_owned()))
                .sum()
        }) as ScalarFn
    };
    let grad = Arc::new(move |x: &DVector<f64>| {
        let mut out = DVector::zeros(nx + extra);
        for (sys, (at, len)) in systems.iter().zip(&offsets) {
            let part = x.rows(*at, *len).into_owned();
            out.rows_mut(*at, *len)
                .copy_from(&sys.hamiltonian_grad(&part));
        }
        out
    }) as StateFn;
    (h, grad)
}

/// Composes per-block two-point effort rules; dummy coordinates (if any) are
/// algebraic and evaluate at the end point.
fn compose_discrete_gradient(
    systems: &[&PhDaeSystem],
    offsets: &[(usize, usize)],
    extra: usize,
) -> Option<DiscreteGradientRule> {
    let rules: Option<Vec<DiscreteGradientRule>> = systems
        .iter()
        .map(|s| s.resolve_discrete_gradient())
        .collect();
    let rules = rules?;
    let nx: usize = offsets.iter().map(|(_, len)| len).sum();
    let offsets_vec = offsets.to_vec();
    let effort: TwoPointFn = {
        let rules = rules.clone();
        let offsets = offsets_vec.clone();
        Arc::new(move |x: &DVector<f64>, xp: &DVector<f64>| {
            let mut out = DVector::zeros(nx + extra);
            for (rule, (at, len)) in rules.iter().zip(&offsets) {
                let a = x.rows(*at, *len).into_owned();
                let b = xp.rows(*at, *len).into_owned();
                out.rows_mut(*at, *len).copy_from(&(rule.effort)(&a, &b));
            }
            if extra > 0 {
                out.rows_mut(nx, extra).copy_from(&xp.rows(nx, extra));
            }
            out
        })
    };
    let jacobian: Option<TwoPointJacobianFn> = if rules.iter().all(|r| r.jacobian.is_some()) {
        let rules = rules.clone();
        let offsets = offsets_vec;
        Some(Arc::new(move |x: &DVector<f64>, xp: &DVector<f64>| {
            let mut out = DMatrix::zeros(nx + extra, nx + extra);
            for (rule, (at, len)) in rules.iter().zip(&offsets) {
                let a = x.rows(*at, *len).into_owned();
                let b = xp.rows(*at, *len).into_owned();
                let jac = rule.jacobian.as_ref().expect("checked above");
                out.view_mut((*at, *at), (*len, *len)).copy_from(&jac(&a, &b));
            }
            for i in 0..extra {
                out[(nx + i, nx + i)] = 1.0;
            }
            out
        }))
    } else {
        None
    };
    Some(DiscreteGradientRule { effort, jacobian })
}

fn extend_state_fn(inner: StateFn, nx: usize, extra: usize) -> StateFn {
    Arc::new(move |x: &DVector<f64>| {
        let mut out = DVector::zeros(nx + extra);
        let blocks_part = x.rows(0, nx).into_owned();
        out.rows_mut(0, nx).copy_from(&inner(&blocks_part));
        out.rows_mut(nx, extra).copy_from(&x.rows(nx, extra));
        out
    })
}
