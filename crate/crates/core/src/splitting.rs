//! Lie-Trotter splitting demonstrator for quasilinear PH-DAEs.
//!
//! Splitting `d/dt Ex = (J - R)x` into a conservative substep
//! `d/dt Ex = Jx` and a dissipative substep `d/dt Ew = -Rw` can fail for
//! DAEs: a substep pencil may be singular, or a substep may pin a
//! differential variable through an algebraic row so that no consistent
//! solution exists for the given initial value. The demonstrator runs both
//! substeps and the unsplit system and reports what happened.

use nalgebra::{DMatrix, DVector};

use crate::error::IntegrationError;
use crate::integrate::{consistent_init, integrate, Scheme, SolverConfig};
use crate::pencil::{pencil_regularity, RegularityReport};
use crate::system::PhDaeSystem;

/// A linear relation `c^T x = 0` that an algebraic row imposes on
/// differential components of the state.
#[derive(Debug, Clone)]
pub struct ForcedRelation {
    pub coefficients: DVector<f64>,
    /// Value of `c^T x0`; nonzero means the initial value is inconsistent.
    pub value_at_x0: f64,
}

#[derive(Debug, Clone)]
pub enum SubstepOutcome {
    /// Consistent initialization succeeded and the substep integrated.
    Integrated { final_state: DVector<f64> },
    /// No consistent solution exists for the given initial value.
    Inconsistent {
        message: String,
        forced: Vec<ForcedRelation>,
    },
}

impl SubstepOutcome {
    pub fn is_consistent(&self) -> bool {
        matches!(self, SubstepOutcome::Integrated { .. })
    }
}

#[derive(Debug, Clone)]
pub struct SubstepReport {
    pub name: &'static str,
    pub pencil: RegularityReport,
    pub outcome: SubstepOutcome,
}

#[derive(Debug, Clone)]
pub struct SplittingReport {
    /// Conservative substep `d/dt Ex = Jx`.
    pub conservative: SubstepReport,
    /// Dissipative substep `d/dt Ew = -Rw` (started from the conservative
    /// substep's final state when available, else from `x0`).
    pub dissipative: SubstepReport,
    /// Pencil `{E, J - R}` of the unsplit system.
    pub unsplit_pencil: RegularityReport,
    /// Final state of the unsplit implicit Euler run, if it succeeded.
    pub unsplit_final: Option<DVector<f64>>,
    /// Max-norm gap between the composed substeps and the unsplit run over
    /// one macro step, when both substeps integrated.
    pub composed_error: Option<f64>,
}

impl SplittingReport {
    pub fn splitting_feasible(&self) -> bool {
        self.conservative.outcome.is_consistent() && self.dissipative.outcome.is_consistent()
    }
}

impl std::fmt::Display for SplittingReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for report in [&self.conservative, &self.dissipative] {
            match &report.outcome {
                SubstepOutcome::Integrated { .. } => {
                    writeln!(f, "substep `{}`: consistent, integrated", report.name)?
                }
                SubstepOutcome::Inconsistent { message, .. } => {
                    writeln!(f, "substep `{}`: INCONSISTENT: {message}", report.name)?
                }
            }
        }
        match &self.unsplit_final {
            Some(_) => writeln!(f, "unsplit system: integrated successfully")?,
            None => writeln!(f, "unsplit system: integration failed")?,
        }
        if let Some(err) = self.composed_error {
            writeln!(f, "composed vs unsplit over one step: {err:.3e}")?;
        }
        Ok(())
    }
}

/// Runs the splitting experiment for the quasilinear system `z(x) = x`,
/// `B = 0`. `E` must be symmetric so that `H(x) = x^T E x / 2` is the
/// compatible Hamiltonian.
pub fn lie_trotter_demo(
    e: &DMatrix<f64>,
    j: &DMatrix<f64>,
    r: &DMatrix<f64>,
    x0: &DVector<f64>,
    h: f64,
) -> Result<SplittingReport, IntegrationError> {
    if e != &e.transpose() {
        return Err(IntegrationError::Config(
            "the splitting demonstrator requires a symmetric E".into(),
        ));
    }
    let conservative_sys = quasilinear(e, j.clone());
    let dissipative_sys = quasilinear(e, -r.clone());
    let unsplit_sys = quasilinear(e, j - r);

    let cfg = SolverConfig::new(Scheme::ImplicitEuler, h, h);

    let conservative = run_substep("d/dt Ex = Jx", &conservative_sys, e, &j.clone(), x0, &cfg);
    let start_for_dissipative = match &conservative.outcome {
        SubstepOutcome::Integrated { final_state } => final_state.clone(),
        SubstepOutcome::Inconsistent { .. } => x0.clone(),
    };
    let dissipative = run_substep(
        "d/dt Ew = -Rw",
        &dissipative_sys,
        e,
        &(-r.clone()),
        &start_for_dissipative,
        &cfg,
    );

    let unsplit_pencil = pencil_regularity(e, &(j - r));
    let zero = |_t: f64| DVector::zeros(0);
    let unsplit_final = consistent_init(&unsplit_sys, x0, &DVector::zeros(0))
        .ok()
        .and_then(|x0c| integrate(&unsplit_sys, &cfg, &x0c, &zero).ok())
        .map(|traj| traj.final_state().clone());

    let composed_error = match (&conservative.outcome, &dissipative.outcome, &unsplit_final) {
        (
            SubstepOutcome::Integrated { .. },
            SubstepOutcome::Integrated { final_state },
            Some(unsplit),
        ) => Some((final_state - unsplit).amax()),
        _ => None,
    };

    Ok(SplittingReport {
        conservative,
        dissipative,
        unsplit_pencil,
        unsplit_final,
        composed_error,
    })
}

fn quasilinear(e: &DMatrix<f64>, flow: DMatrix<f64>) -> PhDaeSystem {
    let n = e.nrows();
    let e_for_h = e.clone();
    let e_for_grad = e.clone();
    PhDaeSystem::builder(n, 0)
        .e_matrix(e.clone())
        .j_matrix(flow)
        .linear_effort(DMatrix::identity(n, n))
        .linear_resistive(DMatrix::zeros(n, n))
        .hamiltonian(move |x: &DVector<f64>| 0.5 * x.dot(&(&e_for_h * x)))
        .hamiltonian_grad(move |x: &DVector<f64>| &e_for_grad * x)
        .build()
        .expect("square quasilinear system")
}

fn run_substep(
    name: &'static str,
    sys: &PhDaeSystem,
    e: &DMatrix<f64>,
    flow: &DMatrix<f64>,
    x0: &DVector<f64>,
    cfg: &SolverConfig,
) -> SubstepReport {
    let pencil = pencil_regularity(e, flow);
    let zero = |_t: f64| DVector::zeros(0);
    let outcome = match consistent_init(sys, x0, &DVector::zeros(0)) {
        Ok(x0c) => match integrate(sys, cfg, &x0c, &zero) {
            Ok(traj) => SubstepOutcome::Integrated {
                final_state: traj.final_state().clone(),
            },
            Err(err) => SubstepOutcome::Inconsistent {
                message: format!("integration failed: {err}"),
                forced: Vec::new(),
            },
        },
        Err(err) => {
            let forced = evaluate_forced(forced_relations(e, flow), x0);
            let mut message = err.to_string();
            for rel in &forced {
                if rel.value_at_x0.abs() > 1e-12 {
                    message = describe_forced(rel, x0);
                    break;
                }
            }
            SubstepOutcome::Inconsistent { message, forced }
        }
    };
    SubstepReport {
        name,
        pencil,
        outcome,
    }
}

/// Algebraic rows of the linear substep `d/dt Ex = Ax` whose coefficients
/// touch only differential state components: relations `c^T x = 0` that the
/// dynamics cannot adjust, so the initial value must satisfy them.
fn forced_relations(e: &DMatrix<f64>, a: &DMatrix<f64>) -> Vec<ForcedRelation> {
    let n = e.nrows();
    // Differential columns: state components that appear under the derivative.
    let differential: Vec<bool> = (0..n)
        .map(|col| e.column(col).iter().any(|v| *v != 0.0))
        .collect();
    let mut forced = Vec::new();
    for row in 0..n {
        let e_row_zero = e.row(row).iter().all(|v| *v == 0.0);
        if !e_row_zero {
            continue;
        }
        let coeffs: DVector<f64> = a.row(row).transpose();
        let touches_algebraic = coeffs
            .iter()
            .enumerate()
            .any(|(col, v)| *v != 0.0 && !differential[col]);
        let nonzero = coeffs.iter().any(|v| *v != 0.0);
        if nonzero && !touches_algebraic {
            forced.push(ForcedRelation {
                coefficients: coeffs,
                value_at_x0: 0.0,
            });
        }
    }
    forced
}

fn describe_forced(rel: &ForcedRelation, x0: &DVector<f64>) -> String {
    let support: Vec<usize> = rel
        .coefficients
        .iter()
        .enumerate()
        .filter(|(_, v)| **v != 0.0)
        .map(|(i, _)| i)
        .collect();
    if support.len() == 1 {
        let i = support[0];
        format!(
            "algebraic row forces x[{i}] = 0, but x0[{i}] = {}",
            x0[i]
        )
    } else {
        format!(
            "algebraic row forces a relation on differential components {support:?} violated by x0 (value {:.3e})",
            rel.value_at_x0
        )
    }
}

fn evaluate_forced(mut relations: Vec<ForcedRelation>, x0: &DVector<f64>) -> Vec<ForcedRelation> {
    for rel in &mut relations {
        rel.value_at_x0 = rel.coefficients.dot(x0);
    }
    relations
}
