//! Error types shared across the crate.

use thiserror::Error;

/// Structural problems detected while building or combining systems.
#[derive(Debug, Error)]
pub enum StructureError {
    #[error("field `{field}` has shape {found_rows}x{found_cols}, expected {want_rows}x{want_cols}")]
    Dimension {
        field: &'static str,
        found_rows: usize,
        found_cols: usize,
        want_rows: usize,
        want_cols: usize,
    },
    #[error("coupling matrix is not skew-symmetric: max |C + C^T| = {violation:.3e}")]
    NonSkewCoupling { violation: f64 },
    #[error("aggregation requires at least one block")]
    EmptyAggregation,
    #[error("interconnection matrices must be {want}x{want} for aggregated port count {want}, got {found_rows}x{found_cols}")]
    InterconnectionShape {
        want: usize,
        found_rows: usize,
        found_cols: usize,
    },
    #[error("port split of block {block} declares {split} ports but the block has {declared}")]
    PortSplitMismatch {
        block: usize,
        split: usize,
        declared: usize,
    },
    #[error("coupling matrix has {coupling} rows but blocks expose {internal} internal ports")]
    CouplingDimension { coupling: usize, internal: usize },
    #[error("port edge {edge} lies on the PEC boundary")]
    PortOnBoundary { edge: usize },
    #[error("circuit has {circuit} field-port branches but device exposes {device} ports")]
    PortCountMismatch { circuit: usize, device: usize },
    #[error("{0}")]
    Invalid(String),
}

/// Netlist or device file rejection, with the offending line (zero for
/// file-level findings).
#[derive(Debug, Error)]
#[error("{}{message}", if *.line > 0 { format!("line {line}: ") } else { String::new() })]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

impl ParseError {
    pub fn new(line: usize, message: impl Into<String>) -> Self {
        Self {
            line,
            message: message.into(),
        }
    }
}

/// Constitutive model resolution and evaluation failures.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error("element {element}: unknown model `{name}`")]
    Unresolved { element: String, name: String },
    #[error("element {element}: model `{name}` expects {want} parameters, got {got}")]
    ParameterCount {
        element: String,
        name: String,
        want: usize,
        got: usize,
    },
    #[error("element {element}: {message}")]
    InvalidParameter { element: String, message: String },
    #[error("netlist is not sound: {0}")]
    Unsound(String),
    #[error("netlist contains field-port branches ({0}); assemble it through the coupler")]
    FieldPortsPresent(String),
    #[error("netlist has no field-port branch; nothing to couple")]
    NoFieldPorts,
}

/// Consistent-initialization failures.
#[derive(Debug, Error)]
pub enum InitError {
    #[error("initial guess contains non-finite entries")]
    NonFiniteGuess,
    #[error(
        "consistent initialization did not converge (residual {residual:.3e}); violated: {}",
        format_rows(violated_rows)
    )]
    Inconsistent {
        residual: f64,
        residual_history: Vec<f64>,
        /// Offending equation rows as (index, label, residual value).
        violated_rows: Vec<(usize, String, f64)>,
    },
    #[error(
        "algebraic equations are structurally unsolvable from the given guess; rows: {}",
        format_rows(violated_rows)
    )]
    Unsolvable {
        residual_history: Vec<f64>,
        violated_rows: Vec<(usize, String, f64)>,
    },
}

fn format_rows(rows: &[(usize, String, f64)]) -> String {
    if rows.is_empty() {
        return "(none identified)".to_string();
    }
    rows.iter()
        .map(|(i, label, r)| format!("{label} [row {i}, residual {r:.3e}]"))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Time-integration failures.
#[derive(Debug, Error)]
pub enum IntegrationError {
    #[error("invalid solver configuration: {0}")]
    Config(String),
    #[error("Newton iteration failed at t = {time:.6e} after {iterations} iterations (residual {residual:.3e})")]
    NewtonFailure {
        time: f64,
        iterations: usize,
        residual: f64,
    },
    #[error("state became non-finite at t = {time:.6e}")]
    NonFinite { time: f64 },
    #[error("linear solve failed at t = {time:.6e}: iteration matrix is singular")]
    SingularIteration { time: f64 },
    #[error("discrete-gradient scheme needs a quasilinear declaration or a discrete-gradient effort rule")]
    NoDiscreteGradient,
    #[error(transparent)]
    Init(#[from] InitError),
}

/// Evaluation errors from validators.
#[derive(Debug, Error)]
pub enum EvalError {
    #[error("Hamiltonian evaluated non-finite at {point:?}")]
    NonFiniteHamiltonian { point: Vec<f64> },
    #[error("trajectory is empty")]
    EmptyTrajectory,
    #[error("trajectory state dimension {found} does not match system dimension {want}")]
    TrajectoryDimension { found: usize, want: usize },
}

/// Dynamic-iteration (co-simulation) failures.
#[derive(Debug, Error)]
pub enum CosimError {
    #[error("invalid co-simulation configuration: {0}")]
    Config(String),
    #[error(
        "window {window} did not converge within {max_sweeps} sweeps; waveform deltas: {history:?}"
    )]
    WindowDivergence {
        window: usize,
        max_sweeps: usize,
        history: Vec<f64>,
    },
    #[error("window {window}, {subsystem}: {source}")]
    Subsystem {
        window: usize,
        subsystem: &'static str,
        source: IntegrationError,
    },
}
