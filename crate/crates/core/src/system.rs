//! Port-Hamiltonian DAE systems and their structural validators.
//!
//! A system is the data
//!
//! ```text
//! d/dt (E x) = J z(x) - r(z(x)) + B u(t),      y = B^T z(x),
//! ```
//!
//! together with a Hamiltonian `H`, its gradient, and an admissible subspace
//! `V` on which `J` is skew-symmetric, `r` is accretive and the compatibility
//! condition `grad H = E^T z` holds.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{EvalError, StructureError};

/// Vector-valued state function (e.g. effort `z`, resistive map `r`).
pub type StateFn = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
/// Scalar state function (the Hamiltonian).
pub type ScalarFn = Arc<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>;
/// Jacobian of a state function.
pub type JacobianFn = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;
/// Two-point effort rule used by the discrete-gradient scheme.
pub type TwoPointFn = Arc<dyn Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync>;
/// Jacobian of a two-point effort rule with respect to the second argument.
pub type TwoPointJacobianFn =
    Arc<dyn Fn(&DVector<f64>, &DVector<f64>) -> DMatrix<f64> + Send + Sync>;

/// Seed used by randomized validators unless the caller provides one.
pub const DEFAULT_VALIDATION_SEED: u64 = 12345;

/// Magnitude scales over which accretivity and passivity are sampled.
pub const SAMPLE_SCALES: [f64; 3] = [1e-3, 1.0, 1e3];

/// Two-point effort rule with an optional analytic Jacobian.
#[derive(Clone)]
pub struct DiscreteGradientRule {
    pub effort: TwoPointFn,
    pub jacobian: Option<TwoPointJacobianFn>,
}

/// A port-Hamiltonian differential-algebraic system.
///
/// Values are immutable after construction; all stored functions must be pure,
/// so a system can be shared freely across threads.
#[derive(Clone)]
pub struct PhDaeSystem {
    dim_state: usize,
    dim_input: usize,
    e_matrix: DMatrix<f64>,
    j_matrix: DMatrix<f64>,
    b_matrix: DMatrix<f64>,
    effort: StateFn,
    resistive: StateFn,
    hamiltonian: ScalarFn,
    hamiltonian_grad: StateFn,
    subspace_basis: DMatrix<f64>,
    linear_effort: Option<DMatrix<f64>>,
    linear_resistive: Option<DMatrix<f64>>,
    effort_jacobian: Option<JacobianFn>,
    resistive_jacobian: Option<JacobianFn>,
    state_projector: Option<StateFn>,
    discrete_gradient: Option<DiscreteGradientRule>,
    row_labels: Option<Vec<String>>,
}

impl std::fmt::Debug for PhDaeSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PhDaeSystem")
            .field("dim_state", &self.dim_state)
            .field("dim_input", &self.dim_input)
            .field("quasilinear", &self.linear_effort.is_some())
            .field("linear_resistive", &self.linear_resistive.is_some())
            .finish()
    }
}

impl PhDaeSystem {
    pub fn builder(dim_state: usize, dim_input: usize) -> PhDaeSystemBuilder {
        PhDaeSystemBuilder::new(dim_state, dim_input)
    }

    pub fn dim_state(&self) -> usize {
        self.dim_state
    }

    pub fn dim_input(&self) -> usize {
        self.dim_input
    }

    pub fn e_matrix(&self) -> &DMatrix<f64> {
        &self.e_matrix
    }

    pub fn j_matrix(&self) -> &DMatrix<f64> {
        &self.j_matrix
    }

    pub fn b_matrix(&self) -> &DMatrix<f64> {
        &self.b_matrix
    }

    pub fn subspace_basis(&self) -> &DMatrix<f64> {
        &self.subspace_basis
    }

    pub fn linear_effort(&self) -> Option<&DMatrix<f64>> {
        self.linear_effort.as_ref()
    }

    pub fn linear_resistive(&self) -> Option<&DMatrix<f64>> {
        self.linear_resistive.as_ref()
    }

    pub fn row_labels(&self) -> Option<&[String]> {
        self.row_labels.as_deref()
    }

    pub fn row_label(&self, row: usize) -> String {
        match &self.row_labels {
            Some(labels) if row < labels.len() => labels[row].clone(),
            _ => format!("equation {row}"),
        }
    }

    pub fn effort(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.effort)(x)
    }

    pub fn resistive(&self, z: &DVector<f64>) -> DVector<f64> {
        (self.resistive)(z)
    }

    pub fn hamiltonian(&self, x: &DVector<f64>) -> f64 {
        (self.hamiltonian)(x)
    }

    pub fn hamiltonian_grad(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.hamiltonian_grad)(x)
    }

    /// Output map `y = B^T z`.
    pub fn output(&self, z: &DVector<f64>) -> DVector<f64> {
        self.b_matrix.transpose() * z
    }

    /// Right-hand side `J z - r(z) + B u` for a given effort and input.
    pub fn rhs(&self, z: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.j_matrix * z - self.resistive(z) + &self.b_matrix * u
    }

    /// Maps a state to one whose effort lies in the admissible subspace.
    /// Identity unless the assembling front-end installed a projector.
    pub fn project_state(&self, x: &DVector<f64>) -> DVector<f64> {
        match &self.state_projector {
            Some(p) => p(x),
            None => x.clone(),
        }
    }

    /// True when both the effort and the resistive part are declared linear.
    pub fn is_linear(&self) -> bool {
        self.linear_effort.is_some() && self.linear_resistive.is_some()
    }

    pub fn discrete_gradient_rule(&self) -> Option<&DiscreteGradientRule> {
        self.discrete_gradient.as_ref()
    }

    /// Effort Jacobian `dz/dx`, analytic when declared, otherwise central
    /// finite differences with the given step.
    pub fn effort_jacobian_at(&self, x: &DVector<f64>, fd_step: f64) -> DMatrix<f64> {
        if let Some(j) = &self.effort_jacobian {
            return j(x);
        }
        if let Some(q) = &self.linear_effort {
            return q.clone();
        }
        central_jacobian(&*self.effort, x, fd_step)
    }

    /// Resistive Jacobian `dr/dz`.
    pub fn resistive_jacobian_at(&self, z: &DVector<f64>, fd_step: f64) -> DMatrix<f64> {
        if let Some(j) = &self.resistive_jacobian {
            return j(z);
        }
        if let Some(r) = &self.linear_resistive {
            return r.clone();
        }
        central_jacobian(&*self.resistive, z, fd_step)
    }

    /// Resolves the two-point effort rule used by the discrete-gradient
    /// scheme: an explicit rule wins, a quasilinear declaration falls back to
    /// the midpoint effort, and systems with `E = I` use the Gonzalez
    /// midpoint discrete gradient of `H`.
    pub fn resolve_discrete_gradient(&self) -> Option<DiscreteGradientRule> {
        if let Some(rule) = &self.discrete_gradient {
            return Some(rule.clone());
        }
        if let Some(q) = &self.linear_effort {
            let q = q.clone();
            let effort: TwoPointFn = Arc::new(move |x: &DVector<f64>, xp: &DVector<f64>| {
                &q * ((x + xp) * 0.5)
            });
            let qj = self.linear_effort.clone().unwrap();
            let jacobian: TwoPointJacobianFn =
                Arc::new(move |_: &DVector<f64>, _: &DVector<f64>| &qj * 0.5);
            return Some(DiscreteGradientRule {
                effort,
                jacobian: Some(jacobian),
            });
        }
        if self.e_matrix == DMatrix::identity(self.dim_state, self.dim_state) {
            let h = self.hamiltonian.clone();
            let grad = self.hamiltonian_grad.clone();
            let effort: TwoPointFn = Arc::new(move |x: &DVector<f64>, xp: &DVector<f64>| {
                gonzalez_discrete_gradient(&*h, &*grad, x, xp)
            });
            return Some(DiscreteGradientRule {
                effort,
                jacobian: None,
            });
        }
        None
    }
}

/// Gonzalez midpoint discrete gradient: the midpoint gradient plus a secant
/// correction so that `(x' - x)^T zbar = H(x') - H(x)` holds exactly.
pub fn gonzalez_discrete_gradient(
    h: &(dyn Fn(&DVector<f64>) -> f64 + Send + Sync),
    grad: &(dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync),
    x: &DVector<f64>,
    xp: &DVector<f64>,
) -> DVector<f64> {
    let mid = (x + xp) * 0.5;
    let g = grad(&mid);
    let dx = xp - x;
    let nrm2 = dx.norm_squared();
    if nrm2 <= f64::EPSILON * (1.0 + x.norm_squared() + xp.norm_squared()) {
        return g;
    }
    let defect = h(xp) - h(x) - g.dot(&dx);
    g + dx * (defect / nrm2)
}

fn central_jacobian(
    f: &(dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync),
    x: &DVector<f64>,
    step: f64,
) -> DMatrix<f64> {
    let n = x.len();
    let f0 = f(x);
    let mut jac = DMatrix::zeros(f0.len(), n);
    let mut xp = x.clone();
    let mut xm = x.clone();
    for col in 0..n {
        let h = step * (1.0 + x[col].abs());
        xp[col] = x[col] + h;
        xm[col] = x[col] - h;
        let df = (f(&xp) - f(&xm)) / (2.0 * h);
        jac.set_column(col, &df);
        xp[col] = x[col];
        xm[col] = x[col];
    }
    jac
}

/// Builder with dimension validation; every mismatch names the offending field.
pub struct PhDaeSystemBuilder {
    dim_state: usize,
    dim_input: usize,
    e_matrix: Option<DMatrix<f64>>,
    j_matrix: Option<DMatrix<f64>>,
    b_matrix: Option<DMatrix<f64>>,
    effort: Option<StateFn>,
    resistive: Option<StateFn>,
    hamiltonian: Option<ScalarFn>,
    hamiltonian_grad: Option<StateFn>,
    subspace_basis: Option<DMatrix<f64>>,
    linear_effort: Option<DMatrix<f64>>,
    linear_resistive: Option<DMatrix<f64>>,
    effort_jacobian: Option<JacobianFn>,
    resistive_jacobian: Option<JacobianFn>,
    state_projector: Option<StateFn>,
    discrete_gradient: Option<DiscreteGradientRule>,
    row_labels: Option<Vec<String>>,
}

impl PhDaeSystemBuilder {
    fn new(dim_state: usize, dim_input: usize) -> Self {
        Self {
            dim_state,
            dim_input,
            e_matrix: None,
            j_matrix: None,
            b_matrix: None,
            effort: None,
            resistive: None,
            hamiltonian: None,
            hamiltonian_grad: None,
            subspace_basis: None,
            linear_effort: None,
            linear_resistive: None,
            effort_jacobian: None,
            resistive_jacobian: None,
            state_projector: None,
            discrete_gradient: None,
            row_labels: None,
        }
    }

    pub fn e_matrix(mut self, e: DMatrix<f64>) -> Self {
        self.e_matrix = Some(e);
        self
    }

    pub fn j_matrix(mut self, j: DMatrix<f64>) -> Self {
        self.j_matrix = Some(j);
        self
    }

    pub fn b_matrix(mut self, b: DMatrix<f64>) -> Self {
        self.b_matrix = Some(b);
        self
    }

    pub fn effort(mut self, f: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static) -> Self {
        self.effort = Some(Arc::new(f));
        self
    }

    pub fn resistive(
        mut self,
        f: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        self.resistive = Some(Arc::new(f));
        self
    }

    pub fn hamiltonian(mut self, f: impl Fn(&DVector<f64>) -> f64 + Send + Sync + 'static) -> Self {
        self.hamiltonian = Some(Arc::new(f));
        self
    }

    pub fn hamiltonian_grad(
        mut self,
        f: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        self.hamiltonian_grad = Some(Arc::new(f));
        self
    }

    pub fn hamiltonian_fns(mut self, h: ScalarFn, grad: StateFn) -> Self {
        self.hamiltonian = Some(h);
        self.hamiltonian_grad = Some(grad);
        self
    }

    pub fn effort_fn(mut self, f: StateFn) -> Self {
        self.effort = Some(f);
        self
    }

    pub fn resistive_fn(mut self, f: StateFn) -> Self {
        self.resistive = Some(f);
        self
    }

    pub fn subspace_basis(mut self, basis: DMatrix<f64>) -> Self {
        self.subspace_basis = Some(basis);
        self
    }

    /// Declares the effort linear, `z(x) = Q x`. Installs the effort function
    /// and its Jacobian unless they were set explicitly.
    pub fn linear_effort(mut self, q: DMatrix<f64>) -> Self {
        self.linear_effort = Some(q);
        self
    }

    /// Declares the resistive part linear, `r(z) = R z`. Installs the map and
    /// its Jacobian unless set explicitly.
    pub fn linear_resistive(mut self, r: DMatrix<f64>) -> Self {
        self.linear_resistive = Some(r);
        self
    }

    pub fn effort_jacobian(mut self, f: JacobianFn) -> Self {
        self.effort_jacobian = Some(f);
        self
    }

    pub fn resistive_jacobian(mut self, f: JacobianFn) -> Self {
        self.resistive_jacobian = Some(f);
        self
    }

    pub fn state_projector(mut self, f: StateFn) -> Self {
        self.state_projector = Some(f);
        self
    }

    pub fn discrete_gradient(mut self, rule: DiscreteGradientRule) -> Self {
        self.discrete_gradient = Some(rule);
        self
    }

    pub fn row_labels(mut self, labels: Vec<String>) -> Self {
        self.row_labels = Some(labels);
        self
    }

    pub fn build(self) -> Result<PhDaeSystem, StructureError> {
        let n = self.dim_state;
        let m = self.dim_input;
        let check = |field: &'static str, mat: &DMatrix<f64>, rows: usize, cols: usize| {
            if mat.nrows() != rows || mat.ncols() != cols {
                Err(StructureError::Dimension {
                    field,
                    found_rows: mat.nrows(),
                    found_cols: mat.ncols(),
                    want_rows: rows,
                    want_cols: cols,
                })
            } else {
                Ok(())
            }
        };

        let e_matrix = self.e_matrix.unwrap_or_else(|| DMatrix::identity(n, n));
        check("e_matrix", &e_matrix, n, n)?;
        let j_matrix = self
            .j_matrix
            .ok_or_else(|| StructureError::Invalid("j_matrix is required".into()))?;
        check("j_matrix", &j_matrix, n, n)?;
        let b_matrix = self.b_matrix.unwrap_or_else(|| DMatrix::zeros(n, m));
        check("b_matrix", &b_matrix, n, m)?;
        let subspace_basis = self
            .subspace_basis
            .unwrap_or_else(|| DMatrix::identity(n, n));
        if subspace_basis.nrows() != n || subspace_basis.ncols() > n {
            return Err(StructureError::Dimension {
                field: "subspace_basis",
                found_rows: subspace_basis.nrows(),
                found_cols: subspace_basis.ncols(),
                want_rows: n,
                want_cols: n,
            });
        }
        if let Some(q) = &self.linear_effort {
            check("linear_effort", q, n, n)?;
        }
        if let Some(r) = &self.linear_resistive {
            check("linear_resistive", r, n, n)?;
        }
        if let Some(labels) = &self.row_labels {
            if labels.len() != n {
                return Err(StructureError::Invalid(format!(
                    "row_labels has {} entries, expected {n}",
                    labels.len()
                )));
            }
        }

        let effort: StateFn = match (self.effort, &self.linear_effort) {
            (Some(f), _) => f,
            (None, Some(q)) => {
                let q = q.clone();
                Arc::new(move |x: &DVector<f64>| &q * x)
            }
            (None, None) => return Err(StructureError::Invalid("effort function is required".into())),
        };
        let resistive: StateFn = match (self.resistive, &self.linear_resistive) {
            (Some(f), _) => f,
            (None, Some(r)) => {
                let r = r.clone();
                Arc::new(move |z: &DVector<f64>| &r * z)
            }
            (None, None) => Arc::new(move |z: &DVector<f64>| DVector::zeros(z.len())),
        };
        let hamiltonian = self
            .hamiltonian
            .ok_or_else(|| StructureError::Invalid("hamiltonian is required".into()))?;
        let hamiltonian_grad = self
            .hamiltonian_grad
            .ok_or_else(|| StructureError::Invalid("hamiltonian_grad is required".into()))?;

        Ok(PhDaeSystem {
            dim_state: n,
            dim_input: m,
            e_matrix,
            j_matrix,
            b_matrix,
            effort,
            resistive,
            hamiltonian,
            hamiltonian_grad,
            subspace_basis,
            linear_effort: self.linear_effort,
            linear_resistive: self.linear_resistive,
            effort_jacobian: self.effort_jacobian,
            resistive_jacobian: self.resistive_jacobian,
            state_projector: self.state_projector,
            discrete_gradient: self.discrete_gradient,
            row_labels: self.row_labels,
        })
    }
}

/// Per-condition result of [`validate_structure`].
#[derive(Debug, Clone)]
pub struct StructureReport {
    /// Max of `|v^T J w + w^T J v|` over subspace basis pairs.
    pub skew_violation: f64,
    /// Min of `v^T r(v)` over random samples in the subspace.
    pub accretivity_min: f64,
    pub accretivity_witness: Option<DVector<f64>>,
    /// Max componentwise `|grad H(x) - E^T z(x)|` over admissible states.
    pub compatibility_violation: f64,
    /// Min of `v^T (R + R^T) v` over unit samples, when `R` is declared.
    pub resistive_symmetry_min: Option<f64>,
    pub samples: usize,
    pub tol: f64,
}

impl StructureReport {
    pub fn skew_ok(&self) -> bool {
        self.skew_violation <= self.tol
    }

    pub fn accretive_ok(&self) -> bool {
        self.accretivity_min >= -self.tol
    }

    pub fn compatible_ok(&self) -> bool {
        self.compatibility_violation <= self.tol
    }

    pub fn resistive_ok(&self) -> bool {
        self.resistive_symmetry_min.is_none_or(|v| v >= -self.tol)
    }

    pub fn passed(&self) -> bool {
        self.skew_ok() && self.accretive_ok() && self.compatible_ok() && self.resistive_ok()
    }
}

impl std::fmt::Display for StructureReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(
            f,
            "skew-symmetry on V:   {} (max violation {:.3e})",
            pass(self.skew_ok()),
            self.skew_violation
        )?;
        writeln!(
            f,
            "accretivity on V:     {} (min v^T r(v) = {:.3e}, {} samples)",
            pass(self.accretive_ok()),
            self.accretivity_min,
            self.samples
        )?;
        write!(
            f,
            "compatibility on V:   {} (max |grad H - E^T z| = {:.3e})",
            pass(self.compatible_ok()),
            self.compatibility_violation
        )?;
        if let Some(v) = self.resistive_symmetry_min {
            write!(
                f,
                "\nlinear R definiteness: {} (min v^T(R+R^T)v = {:.3e})",
                pass(v >= -self.tol),
                v
            )?;
        }
        Ok(())
    }
}

fn pass(ok: bool) -> &'static str {
    if ok {
        "pass"
    } else {
        "FAIL"
    }
}

/// Checks skew-symmetry, accretivity and the compatibility condition on the
/// admissible subspace, using `samples` random draws per magnitude scale.
pub fn validate_structure(sys: &PhDaeSystem, samples: usize, tol: f64) -> StructureReport {
    validate_structure_seeded(sys, samples, tol, DEFAULT_VALIDATION_SEED)
}

pub fn validate_structure_seeded(
    sys: &PhDaeSystem,
    samples: usize,
    tol: f64,
    seed: u64,
) -> StructureReport {
    let samples = samples.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let basis = sys.subspace_basis();
    let k = basis.ncols();

    // Exact pairwise check: S = B^T J B + (B^T J B)^T vanishes iff J is
    // skew on the span of the basis columns.
    let bjb = basis.transpose() * sys.j_matrix() * basis;
    let sym = &bjb + bjb.transpose();
    let skew_violation = sym.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));

    let mut accretivity_min = f64::INFINITY;
    let mut accretivity_witness = None;
    let mut resistive_min = sys.linear_resistive().map(|_| f64::INFINITY);
    for _ in 0..samples {
        let alpha = standard_normal_vector(&mut rng, k);
        let v = basis * alpha;
        let norm = v.norm();
        if norm == 0.0 {
            continue;
        }
        for scale in SAMPLE_SCALES {
            let vs = &v * (scale / norm);
            let value = vs.dot(&sys.resistive(&vs));
            if value < accretivity_min {
                accretivity_min = value;
                accretivity_witness = Some(vs.clone());
            }
            if let (Some(min), Some(r)) = (resistive_min.as_mut(), sys.linear_resistive()) {
                let unit = &vs / scale;
                let q = unit.dot(&(r * &unit)) * 2.0;
                if q < *min {
                    *min = q;
                }
            }
        }
    }
    if !accretivity_min.is_finite() {
        accretivity_min = 0.0;
    }

    let mut compatibility_violation = 0.0f64;
    let et = sys.e_matrix().transpose();
    for _ in 0..samples {
        let raw = standard_normal_vector(&mut rng, sys.dim_state());
        for scale in SAMPLE_SCALES {
            let x = sys.project_state(&(&raw * scale));
            let lhs = sys.hamiltonian_grad(&x);
            let rhs = &et * sys.effort(&x);
            let diff = (lhs - rhs).amax();
            compatibility_violation = compatibility_violation.max(diff);
        }
    }

    StructureReport {
        skew_violation,
        accretivity_min,
        accretivity_witness,
        compatibility_violation,
        resistive_symmetry_min: resistive_min,
        samples,
        tol,
    }
}

/// Max-norm distance of `z(x)` from the span of the subspace basis,
/// computed through a least-squares projection. Membership of the effort in
/// the admissible subspace along solutions cannot be proven generically, so
/// integrators' trajectories are checked post hoc with this residual.
pub fn effort_subspace_violation(sys: &PhDaeSystem, x: &DVector<f64>) -> f64 {
    let basis = sys.subspace_basis();
    if basis.ncols() == sys.dim_state() {
        // Quick exit for the full-space default.
        if basis == &DMatrix::identity(sys.dim_state(), sys.dim_state()) {
            return 0.0;
        }
    }
    let z = sys.effort(x);
    let svd = basis.clone().svd(true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0f64, f64::max);
    match svd.solve(&z, 1e-13 * smax.max(1.0)) {
        Ok(coeffs) => (basis * coeffs - z).amax(),
        Err(_) => f64::INFINITY,
    }
}

/// Worst effort-subspace violation over a set of states.
pub fn max_subspace_violation<'a>(
    sys: &PhDaeSystem,
    states: impl IntoIterator<Item = &'a DVector<f64>>,
) -> f64 {
    states
        .into_iter()
        .map(|x| effort_subspace_violation(sys, x))
        .fold(0.0f64, f64::max)
}

/// Compares the declared gradient of `H` against central finite differences.
/// Returns the max componentwise relative error.
pub fn gradient_check(sys: &PhDaeSystem, x: &DVector<f64>, h: f64) -> Result<f64, EvalError> {
    let grad = sys.hamiltonian_grad(x);
    let mut worst = 0.0f64;
    let mut xp = x.clone();
    let mut xm = x.clone();
    for i in 0..x.len() {
        xp[i] = x[i] + h;
        xm[i] = x[i] - h;
        let hp = sys.hamiltonian(&xp);
        let hm = sys.hamiltonian(&xm);
        if !hp.is_finite() || !hm.is_finite() {
            return Err(EvalError::NonFiniteHamiltonian {
                point: xp.iter().copied().collect(),
            });
        }
        let fd = (hp - hm) / (2.0 * h);
        let err = (grad[i] - fd).abs() / (1.0 + grad[i].abs());
        worst = worst.max(err);
        xp[i] = x[i];
        xm[i] = x[i];
    }
    Ok(worst)
}

pub(crate) fn standard_normal_vector(rng: &mut ChaCha8Rng, len: usize) -> DVector<f64> {
    DVector::from_fn(len, |_, _| standard_normal(rng))
}

/// Box-Muller draw; keeps the dependency surface to plain uniform sampling.
pub(crate) fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}
