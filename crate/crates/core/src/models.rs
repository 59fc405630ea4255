//! Constitutive element models for the network assembly.
//!
//! Built-in library:
//!
//! * `LINEAR` storage and conductance laws, `q = c u`, `phi = l j`,
//!   `g = u / R`;
//! * `POLY3` laws, `q(u) = a1 u + a3 u^3` with `a1 > 0`, `a3 >= 0`
//!   (strictly increasing, hence bijective with well-defined inverse), and
//!   `g(u) = g1 u + g3 u^3` with `g1 > 0`, `g3 >= 0`.
//!
//! Inverses of the cubic laws are computed by a bisection-guarded Newton
//! iteration; the storage potentials come from the Legendre identity
//! `V(w) = u(w) w - P(u(w))` with `P` the primitive of the law, which is
//! exact once the inverse is known.

use nalgebra::DVector;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::ModelError;
use crate::netlist::{CircuitGraph, ElementKind, ModelRef};
use crate::system::{standard_normal, DEFAULT_VALIDATION_SEED, SAMPLE_SCALES};

/// Scalar storage law `w = f(v)` (charge over voltage, flux over current).
#[derive(Debug, Clone, PartialEq)]
pub enum StorageLaw {
    Linear { coeff: f64 },
    /// `f(v) = a1 v + a3 v^3`, strictly increasing.
    Cubic { a1: f64, a3: f64 },
}

impl StorageLaw {
    pub fn is_linear(&self) -> bool {
        matches!(self, StorageLaw::Linear { .. })
    }

    pub fn value(&self, v: f64) -> f64 {
        match self {
            StorageLaw::Linear { coeff } => coeff * v,
            StorageLaw::Cubic { a1, a3 } => a1 * v + a3 * v * v * v,
        }
    }

    pub fn derivative(&self, v: f64) -> f64 {
        match self {
            StorageLaw::Linear { coeff } => *coeff,
            StorageLaw::Cubic { a1, a3 } => a1 + 3.0 * a3 * v * v,
        }
    }

    /// Primitive with `P(0) = 0`, used by the potential.
    fn primitive(&self, v: f64) -> f64 {
        match self {
            StorageLaw::Linear { coeff } => 0.5 * coeff * v * v,
            StorageLaw::Cubic { a1, a3 } => 0.5 * a1 * v * v + 0.25 * a3 * v.powi(4),
        }
    }

    /// Inverse `f^{-1}(w)`, exact for the linear law, guarded Newton for the
    /// cubic (the law is strictly increasing, so the root is unique).
    pub fn inverse(&self, w: f64) -> f64 {
        match self {
            StorageLaw::Linear { coeff } => w / coeff,
            StorageLaw::Cubic { a1, a3 } => {
                if *a3 == 0.0 {
                    return w / a1;
                }
                // |f(v)| >= a1 |v| brackets the root in [0, w/a1].
                let (mut lo, mut hi) = if w >= 0.0 { (0.0, w / a1) } else { (w / a1, 0.0) };
                let mut v = w / a1;
                let tol = 1e-15 * (1.0 + w.abs());
                for _ in 0..100 {
                    let f = self.value(v) - w;
                    if f.abs() <= tol {
                        break;
                    }
                    if f > 0.0 {
                        hi = v;
                    } else {
                        lo = v;
                    }
                    let step = f / self.derivative(v);
                    let candidate = v - step;
                    v = if candidate > lo && candidate < hi {
                        candidate
                    } else {
                        0.5 * (lo + hi)
                    };
                }
                v
            }
        }
    }

    /// Derivative of the inverse at `w`.
    pub fn inverse_derivative(&self, w: f64) -> f64 {
        1.0 / self.derivative(self.inverse(w))
    }

    /// Stored energy `V(w) = int_0^w f^{-1}(s) ds`.
    pub fn potential(&self, w: f64) -> f64 {
        match self {
            StorageLaw::Linear { coeff } => 0.5 * w * w / coeff,
            StorageLaw::Cubic { .. } => {
                let v = self.inverse(w);
                v * w - self.primitive(v)
            }
        }
    }
}

/// Scalar resistive law `i = g(u)`.
#[derive(Debug, Clone, PartialEq)]
pub enum ConductanceLaw {
    Linear { resistance: f64 },
    /// `g(u) = g1 u + g3 u^3`.
    Poly3 { g1: f64, g3: f64 },
}

impl ConductanceLaw {
    pub fn is_linear(&self) -> bool {
        matches!(self, ConductanceLaw::Linear { .. })
    }

    pub fn current(&self, u: f64) -> f64 {
        match self {
            ConductanceLaw::Linear { resistance } => u / resistance,
            ConductanceLaw::Poly3 { g1, g3 } => g1 * u + g3 * u * u * u,
        }
    }

    pub fn derivative(&self, u: f64) -> f64 {
        match self {
            ConductanceLaw::Linear { resistance } => 1.0 / resistance,
            ConductanceLaw::Poly3 { g1, g3 } => g1 + 3.0 * g3 * u * u,
        }
    }
}

/// Resolved per-element models in branch file order.
#[derive(Debug, Clone)]
pub struct ElementModels {
    pub capacitors: Vec<StorageLaw>,
    pub inductors: Vec<StorageLaw>,
    pub resistors: Vec<ConductanceLaw>,
}

impl ElementModels {
    /// Resolves model references of a parsed circuit against the built-in
    /// library.
    pub fn resolve(g: &CircuitGraph) -> Result<Self, ModelError> {
        let mut capacitors = Vec::new();
        let mut inductors = Vec::new();
        let mut resistors = Vec::new();
        for branch in g.branches() {
            match &branch.kind {
                ElementKind::Capacitor {
                    value,
                    charge_model,
                } => capacitors.push(storage_law(&branch.name, *value, charge_model.as_ref())?),
                ElementKind::Inductor { value, flux_model } => {
                    inductors.push(storage_law(&branch.name, *value, flux_model.as_ref())?)
                }
                ElementKind::Resistor { value } => {
                    resistors.push(ConductanceLaw::Linear { resistance: *value })
                }
                ElementKind::NonlinearResistor { model } => {
                    resistors.push(conductance_law(&branch.name, model)?)
                }
                _ => {}
            }
        }
        Ok(Self {
            capacitors,
            inductors,
            resistors,
        })
    }

    pub fn storage_linear(&self) -> bool {
        self.capacitors.iter().all(StorageLaw::is_linear)
            && self.inductors.iter().all(StorageLaw::is_linear)
    }

    pub fn conductance_linear(&self) -> bool {
        self.resistors.iter().all(ConductanceLaw::is_linear)
    }

    pub fn charge(&self, u: &DVector<f64>) -> DVector<f64> {
        apply(&self.capacitors, u, StorageLaw::value)
    }

    pub fn charge_inv(&self, q: &DVector<f64>) -> DVector<f64> {
        apply(&self.capacitors, q, StorageLaw::inverse)
    }

    pub fn flux(&self, j: &DVector<f64>) -> DVector<f64> {
        apply(&self.inductors, j, StorageLaw::value)
    }

    pub fn flux_inv(&self, phi: &DVector<f64>) -> DVector<f64> {
        apply(&self.inductors, phi, StorageLaw::inverse)
    }

    pub fn conductance(&self, u: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.resistors.len(), |i, _| self.resistors[i].current(u[i]))
    }

    pub fn conductance_derivative(&self, u: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.resistors.len(), |i, _| {
            self.resistors[i].derivative(u[i])
        })
    }

    /// Capacitive stored energy `V_C(q)`.
    pub fn v_c(&self, q: &DVector<f64>) -> f64 {
        self.capacitors
            .iter()
            .zip(q.iter())
            .map(|(law, qi)| law.potential(*qi))
            .sum()
    }

    /// Inductive stored energy `V_L(phi)`.
    pub fn v_l(&self, phi: &DVector<f64>) -> f64 {
        self.inductors
            .iter()
            .zip(phi.iter())
            .map(|(law, pi)| law.potential(*pi))
            .sum()
    }

    pub fn v_c_grad(&self, q: &DVector<f64>) -> DVector<f64> {
        self.charge_inv(q)
    }

    pub fn v_l_grad(&self, phi: &DVector<f64>) -> DVector<f64> {
        self.flux_inv(phi)
    }
}

fn apply(laws: &[StorageLaw], v: &DVector<f64>, f: impl Fn(&StorageLaw, f64) -> f64) -> DVector<f64> {
    DVector::from_fn(laws.len(), |i, _| f(&laws[i], v[i]))
}

fn storage_law(element: &str, value: f64, model: Option<&ModelRef>) -> Result<StorageLaw, ModelError> {
    let Some(model) = model else {
        return Ok(StorageLaw::Linear { coeff: value });
    };
    match model.name.as_str() {
        "LINEAR" => Ok(StorageLaw::Linear { coeff: value }),
        "POLY3" => {
            if model.params.len() != 2 {
                return Err(ModelError::ParameterCount {
                    element: element.to_string(),
                    name: model.name.clone(),
                    want: 2,
                    got: model.params.len(),
                });
            }
            let (a1, a3) = (model.params[0], model.params[1]);
            if a1 <= 0.0 || a3 < 0.0 {
                return Err(ModelError::InvalidParameter {
                    element: element.to_string(),
                    message: format!("POLY3 storage needs a1 > 0 and a3 >= 0, got ({a1}, {a3})"),
                });
            }
            Ok(StorageLaw::Cubic { a1, a3 })
        }
        other => Err(ModelError::Unresolved {
            element: element.to_string(),
            name: other.to_string(),
        }),
    }
}

fn conductance_law(element: &str, model: &ModelRef) -> Result<ConductanceLaw, ModelError> {
    match model.name.as_str() {
        "LINEAR" => {
            if model.params.len() != 1 {
                return Err(ModelError::ParameterCount {
                    element: element.to_string(),
                    name: model.name.clone(),
                    want: 1,
                    got: model.params.len(),
                });
            }
            let r = model.params[0];
            if r <= 0.0 {
                return Err(ModelError::InvalidParameter {
                    element: element.to_string(),
                    message: format!("LINEAR conductance needs R > 0, got {r}"),
                });
            }
            Ok(ConductanceLaw::Linear { resistance: r })
        }
        "POLY3" => {
            if model.params.len() != 2 {
                return Err(ModelError::ParameterCount {
                    element: element.to_string(),
                    name: model.name.clone(),
                    want: 2,
                    got: model.params.len(),
                });
            }
            let (g1, g3) = (model.params[0], model.params[1]);
            if g1 <= 0.0 || g3 < 0.0 {
                return Err(ModelError::InvalidParameter {
                    element: element.to_string(),
                    message: format!("POLY3 conductance needs g1 > 0 and g3 >= 0, got ({g1}, {g3})"),
                });
            }
            Ok(ConductanceLaw::Poly3 { g1, g3 })
        }
        other => Err(ModelError::Unresolved {
            element: element.to_string(),
            name: other.to_string(),
        }),
    }
}

/// Worst-case findings of the randomized passivity verification.
#[derive(Debug, Clone)]
pub struct PassivityReport {
    /// Min Jacobian of the charge laws over the samples (must be > 0).
    pub charge_jacobian_min: f64,
    /// Min Jacobian of the flux laws over the samples (must be > 0).
    pub flux_jacobian_min: f64,
    /// Min symmetrized conductance Jacobian over the samples (must be > 0).
    pub conductance_jacobian_min: f64,
    /// Max error of `grad V_C` against the inverse charge law.
    pub storage_gradient_error: f64,
    pub witness: Option<(String, f64)>,
    pub samples: usize,
}

impl PassivityReport {
    pub fn passed(&self) -> bool {
        self.charge_jacobian_min > 0.0
            && self.flux_jacobian_min > 0.0
            && self.conductance_jacobian_min > 0.0
            && self.storage_gradient_error <= 1e-8
    }
}

/// Samples the model laws over the standard magnitude scales and reports the
/// worst definiteness and gradient-consistency findings.
pub fn verify_passivity(models: &ElementModels, samples: usize) -> PassivityReport {
    verify_passivity_seeded(models, samples, DEFAULT_VALIDATION_SEED)
}

pub fn verify_passivity_seeded(
    models: &ElementModels,
    samples: usize,
    seed: u64,
) -> PassivityReport {
    let samples = samples.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = PassivityReport {
        charge_jacobian_min: f64::INFINITY,
        flux_jacobian_min: f64::INFINITY,
        conductance_jacobian_min: f64::INFINITY,
        storage_gradient_error: 0.0,
        witness: None,
        samples,
    };

    let record = |min: &mut f64, witness: &str, value: f64, report_witness: &mut Option<(String, f64)>| {
        if value < *min {
            *min = value;
            if value <= 0.0 {
                *report_witness = Some((witness.to_string(), value));
            }
        }
    };

    for _ in 0..samples {
        for scale in SAMPLE_SCALES {
            let v = standard_normal(&mut rng) * scale;
            for (i, law) in models.capacitors.iter().enumerate() {
                record(
                    &mut report.charge_jacobian_min,
                    &format!("charge law {i} at u = {v:.3e}"),
                    law.derivative(v),
                    &mut report.witness,
                );
                // grad V equals the inverse law: compare against central
                // differences of the potential.
                let w = law.value(v);
                let h = 1e-5 * (1.0 + w.abs());
                let fd = (law.potential(w + h) - law.potential(w - h)) / (2.0 * h);
                let err = (fd - law.inverse(w)).abs() / (1.0 + law.inverse(w).abs());
                report.storage_gradient_error = report.storage_gradient_error.max(err);
            }
            for (i, law) in models.inductors.iter().enumerate() {
                record(
                    &mut report.flux_jacobian_min,
                    &format!("flux law {i} at j = {v:.3e}"),
                    law.derivative(v),
                    &mut report.witness,
                );
                let w = law.value(v);
                let h = 1e-5 * (1.0 + w.abs());
                let fd = (law.potential(w + h) - law.potential(w - h)) / (2.0 * h);
                let err = (fd - law.inverse(w)).abs() / (1.0 + law.inverse(w).abs());
                report.storage_gradient_error = report.storage_gradient_error.max(err);
            }
            for (i, law) in models.resistors.iter().enumerate() {
                record(
                    &mut report.conductance_jacobian_min,
                    &format!("conductance law {i} at u = {v:.3e}"),
                    law.derivative(v),
                    &mut report.witness,
                );
            }
        }
    }

    for min in [
        &mut report.charge_jacobian_min,
        &mut report.flux_jacobian_min,
        &mut report.conductance_jacobian_min,
    ] {
        if !min.is_finite() {
            // No elements of that class; vacuously positive.
            *min = f64::INFINITY;
        }
    }
    report
}
