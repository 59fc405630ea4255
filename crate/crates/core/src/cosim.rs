//! Weak coupling by windowed dynamic iteration (waveform relaxation).
//!
//! The split pair exchanges the port current `y1 = j_E` (circuit output)
//! and the port voltage `y2 = X_S^T e` (device output) over time windows.
//! Within a window the subsystems are re-solved until the exchanged
//! waveforms, stored on the shared micro grid and interpolated linearly,
//! stop changing:
//!
//! * Gauss-Seidel: the circuit goes first against the previous iterate's
//!   `y2`, the device then consumes the freshly computed `y1`;
//! * Jacobi: both subsystems read only the previous iterate, so their
//!   solves run concurrently (and bitwise-identically to a sequential
//!   evaluation, since each solve is deterministic).

use std::io::Write;
use std::str::FromStr;

use nalgebra::DVector;

use crate::error::{CosimError, IntegrationError};
use crate::integrate::{integrate_span, NewtonStats, Scheme, SolverConfig, Trajectory};
use crate::interconnect::PortSplit;
use crate::system::PhDaeSystem;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IterationMode {
    Jacobi,
    GaussSeidel,
}

impl IterationMode {
    pub fn name(&self) -> &'static str {
        match self {
            IterationMode::Jacobi => "jacobi",
            IterationMode::GaussSeidel => "gauss-seidel",
        }
    }
}

impl FromStr for IterationMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "jacobi" => Ok(IterationMode::Jacobi),
            "gauss-seidel" | "gaussseidel" | "gs" => Ok(IterationMode::GaussSeidel),
            other => Err(format!(
                "unknown iteration mode `{other}` (expected jacobi or gauss-seidel)"
            )),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CosimConfig {
    /// Window length; must be an integer multiple of the micro step.
    pub window: f64,
    pub micro_step: f64,
    pub end_time: f64,
    pub mode: IterationMode,
    pub scheme: Scheme,
    /// Convergence threshold on the max-norm change of the exchanged
    /// waveforms between sweeps. Gauss-Seidel gates on the feedback signal
    /// (the waveform the leading subsystem consumed): once it is reproduced,
    /// the sweep is a fixed point of the composite map. Jacobi gates on both
    /// signals.
    pub sweep_tol: f64,
    pub max_sweeps: usize,
    /// Gauss-Seidel sweep order; the circuit leads by default.
    pub circuit_leads: bool,
    pub newton_tol: f64,
    pub max_newton: usize,
}

impl CosimConfig {
    pub fn new(window: f64, micro_step: f64, end_time: f64) -> Self {
        Self {
            window,
            micro_step,
            end_time,
            mode: IterationMode::GaussSeidel,
            scheme: Scheme::Midpoint,
            sweep_tol: 1e-8,
            max_sweeps: 30,
            circuit_leads: true,
            newton_tol: 1e-12,
            max_newton: 50,
        }
    }

    fn validate(&self) -> Result<usize, CosimError> {
        if !(self.micro_step > 0.0 && self.window > 0.0 && self.end_time > 0.0) {
            return Err(CosimError::Config(
                "window, micro step and end time must be positive".into(),
            ));
        }
        if self.micro_step > self.window {
            return Err(CosimError::Config(format!(
                "micro step {} exceeds window {}",
                self.micro_step, self.window
            )));
        }
        let steps = (self.window / self.micro_step).round();
        if (self.window - steps * self.micro_step).abs() > 1e-9 * self.window {
            return Err(CosimError::Config(format!(
                "window {} is not an integer multiple of the micro step {}",
                self.window, self.micro_step
            )));
        }
        Ok(steps as usize)
    }
}

/// Exchanged signal on the micro grid with linear interpolation.
#[derive(Debug, Clone)]
pub struct Waveform {
    pub times: Vec<f64>,
    pub values: Vec<DVector<f64>>,
}

impl Waveform {
    pub fn constant(times: Vec<f64>, value: DVector<f64>) -> Self {
        let values = vec![value; times.len()];
        Self { times, values }
    }

    pub fn eval(&self, t: f64) -> DVector<f64> {
        let n = self.times.len();
        if t <= self.times[0] {
            return self.values[0].clone();
        }
        if t >= self.times[n - 1] {
            return self.values[n - 1].clone();
        }
        let mut hi = self.times.partition_point(|tk| *tk <= t);
        hi = hi.clamp(1, n - 1);
        let lo = hi - 1;
        let span = self.times[hi] - self.times[lo];
        let w = (t - self.times[lo]) / span;
        &self.values[lo] * (1.0 - w) + &self.values[hi] * w
    }

    /// Max-norm distance on shared sample nodes.
    pub fn max_delta(&self, other: &Waveform) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).amax())
            .fold(0.0f64, f64::max)
    }
}

/// One sweep record: `window, sweep, delta_y1, delta_y2, contraction`.
#[derive(Debug, Clone, Copy)]
pub struct SweepDiagnostics {
    pub window: usize,
    pub sweep: usize,
    pub delta_y1: f64,
    pub delta_y2: f64,
    pub contraction: Option<f64>,
}

pub fn write_diagnostics_csv<W: Write>(
    diags: &[SweepDiagnostics],
    mut w: W,
) -> std::io::Result<()> {
    writeln!(w, "window,sweep,delta_y1,delta_y2,contraction")?;
    for d in diags {
        match d.contraction {
            Some(c) => writeln!(
                w,
                "{},{},{:.16e},{:.16e},{:.16e}",
                d.window, d.sweep, d.delta_y1, d.delta_y2, c
            )?,
            None => writeln!(
                w,
                "{},{},{:.16e},{:.16e},",
                d.window, d.sweep, d.delta_y1, d.delta_y2
            )?,
        }
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct CosimResult {
    pub circuit: Trajectory,
    pub device: Trajectory,
    pub diagnostics: Vec<SweepDiagnostics>,
    pub sweeps_per_window: Vec<usize>,
}

impl CosimResult {
    pub fn total_sweeps(&self) -> usize {
        self.sweeps_per_window.iter().sum()
    }
}

/// Runs the dynamic iteration.
///
/// `circuit` must expose its ports as `B = [external | internal]` (the
/// convention of the network assembly); `external` supplies the independent
/// sources. The device's ports are all internal. Initial states must be
/// consistent.
pub fn run_cosim(
    circuit: &PhDaeSystem,
    circuit_ports: &PortSplit,
    device: &PhDaeSystem,
    cfg: &CosimConfig,
    x0_circuit: &DVector<f64>,
    x0_device: &DVector<f64>,
    external: &(dyn Fn(f64) -> DVector<f64> + Sync),
) -> Result<CosimResult, CosimError> {
    cfg.validate()?;
    let m_ext = circuit_ports.external_count();
    let m_int = circuit_ports.internal_count();
    if m_int != device.dim_input() {
        return Err(CosimError::Config(format!(
            "circuit exposes {m_int} internal ports, device has {}",
            device.dim_input()
        )));
    }

    let micro_cfg = |window_len: f64| SolverConfig {
        scheme: cfg.scheme,
        step: cfg.micro_step,
        end_time: window_len,
        newton_tol: cfg.newton_tol,
        max_newton: cfg.max_newton,
        jacobian: Default::default(),
        fd_step: 1e-7,
    };

    // Output rows: circuit outputs are (external..., internal...).
    let y1_range = m_ext..m_ext + m_int;

    let mut diagnostics = Vec::new();
    let mut sweeps_per_window = Vec::new();
    let mut xc = x0_circuit.clone();
    let mut xd = x0_device.clone();
    let mut y1_last = circuit
        .output(&circuit.effort(&xc))
        .rows(y1_range.start, m_int)
        .into_owned();
    let mut y2_last = device.output(&device.effort(&xd));

    let mut global_circuit: Option<Trajectory> = None;
    let mut global_device: Option<Trajectory> = None;

    let total_windows = ((cfg.end_time / cfg.window) - 1e-9).ceil().max(1.0) as usize;
    for window in 0..total_windows {
        let t0 = window as f64 * cfg.window;
        let t1 = (t0 + cfg.window).min(cfg.end_time);
        let steps = ((t1 - t0) / cfg.micro_step).round() as usize;
        let micro_times: Vec<f64> = (0..=steps)
            .map(|i| t0 + i as f64 * cfg.micro_step)
            .collect();

        // Constant continuation of the last exchanged values.
        let mut y1 = Waveform::constant(micro_times.clone(), y1_last.clone());
        let mut y2 = Waveform::constant(micro_times.clone(), y2_last.clone());

        let mut converged = false;
        let mut prev_delta: Option<f64> = None;
        let mut history = Vec::new();
        let mut last_pair: Option<(Trajectory, Trajectory)> = None;

        for sweep in 1..=cfg.max_sweeps {
            let (circuit_traj, device_traj) = match cfg.mode {
                IterationMode::GaussSeidel if cfg.circuit_leads => {
                    let ct = solve_circuit(
                        circuit, &micro_cfg(t1 - t0), t0, t1, &xc, external, &y2,
                    )
                    .map_err(|source| CosimError::Subsystem {
                        window,
                        subsystem: "circuit",
                        source,
                    })?;
                    let fresh_y1 = extract_waveform(&ct, y1_range.clone());
                    let dt = solve_device(device, &micro_cfg(t1 - t0), t0, t1, &xd, &fresh_y1)
                        .map_err(|source| CosimError::Subsystem {
                            window,
                            subsystem: "device",
                            source,
                        })?;
                    (ct, dt)
                }
                IterationMode::GaussSeidel => {
                    let dt = solve_device(device, &micro_cfg(t1 - t0), t0, t1, &xd, &y1).map_err(
                        |source| CosimError::Subsystem {
                            window,
                            subsystem: "device",
                            source,
                        },
                    )?;
                    let fresh_y2 = extract_waveform(&dt, 0..device.dim_input());
                    let ct = solve_circuit(
                        circuit, &micro_cfg(t1 - t0), t0, t1, &xc, external, &fresh_y2,
                    )
                    .map_err(|source| CosimError::Subsystem {
                        window,
                        subsystem: "circuit",
                        source,
                    })?;
                    (ct, dt)
                }
                IterationMode::Jacobi => {
                    let mc = micro_cfg(t1 - t0);
                    let (ct_res, dt_res) = std::thread::scope(|scope| {
                        let ct = scope.spawn(|| {
                            solve_circuit(circuit, &mc, t0, t1, &xc, external, &y2)
                        });
                        let dt = scope.spawn(|| solve_device(device, &mc, t0, t1, &xd, &y1));
                        (ct.join().expect("circuit solve"), dt.join().expect("device solve"))
                    });
                    let ct = ct_res.map_err(|source| CosimError::Subsystem {
                        window,
                        subsystem: "circuit",
                        source,
                    })?;
                    let dt = dt_res.map_err(|source| CosimError::Subsystem {
                        window,
                        subsystem: "device",
                        source,
                    })?;
                    (ct, dt)
                }
            };

            let y1_new = extract_waveform(&circuit_traj, y1_range.clone());
            let y2_new = extract_waveform(&device_traj, 0..device.dim_input());
            let delta1 = y1_new.max_delta(&y1);
            let delta2 = y2_new.max_delta(&y2);
            let total = delta1 + delta2;
            let contraction = prev_delta
                .filter(|p| *p > 0.0)
                .map(|p| total / p);
            diagnostics.push(SweepDiagnostics {
                window,
                sweep,
                delta_y1: delta1,
                delta_y2: delta2,
                contraction,
            });
            history.push(total);
            prev_delta = Some(total);
            y1 = y1_new;
            y2 = y2_new;
            last_pair = Some((circuit_traj, device_traj));

            let converged_now = match cfg.mode {
                // The feedback signal consumed by the leader determines the
                // composite fixed point.
                IterationMode::GaussSeidel if cfg.circuit_leads => delta2 <= cfg.sweep_tol,
                IterationMode::GaussSeidel => delta1 <= cfg.sweep_tol,
                IterationMode::Jacobi => delta1.max(delta2) <= cfg.sweep_tol,
            };
            if converged_now {
                sweeps_per_window.push(sweep);
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(CosimError::WindowDivergence {
                window,
                max_sweeps: cfg.max_sweeps,
                history,
            });
        }

        let (circuit_traj, device_traj) = last_pair.expect("at least one sweep ran");
        xc = circuit_traj.final_state().clone();
        xd = device_traj.final_state().clone();
        y1_last = y1.values.last().expect("window has nodes").clone();
        y2_last = y2.values.last().expect("window has nodes").clone();
        append_window(&mut global_circuit, circuit_traj);
        append_window(&mut global_device, device_traj);
    }

    Ok(CosimResult {
        circuit: global_circuit.expect("at least one window"),
        device: global_device.expect("at least one window"),
        diagnostics,
        sweeps_per_window,
    })
}

#[allow(clippy::too_many_arguments)]
fn solve_circuit(
    circuit: &PhDaeSystem,
    micro: &SolverConfig,
    t0: f64,
    t1: f64,
    x0: &DVector<f64>,
    external: &(dyn Fn(f64) -> DVector<f64> + Sync),
    y2: &Waveform,
) -> Result<Trajectory, IntegrationError> {
    let m_int = y2.values[0].len();
    let m_ext = circuit.dim_input() - m_int;
    let input = move |t: f64| {
        let mut u = DVector::zeros(m_ext + m_int);
        u.rows_mut(0, m_ext).copy_from(&external(t));
        // Internal port input is the negated device voltage.
        u.rows_mut(m_ext, m_int).copy_from(&(-y2.eval(t)));
        u
    };
    integrate_span(circuit, micro, t0, t1, x0, &input)
}

fn solve_device(
    device: &PhDaeSystem,
    micro: &SolverConfig,
    t0: f64,
    t1: f64,
    x0: &DVector<f64>,
    y1: &Waveform,
) -> Result<Trajectory, IntegrationError> {
    let input = move |t: f64| y1.eval(t);
    integrate_span(device, micro, t0, t1, x0, &input)
}

fn extract_waveform(traj: &Trajectory, range: std::ops::Range<usize>) -> Waveform {
    let values = traj
        .outputs
        .iter()
        .map(|y| y.rows(range.start, range.len()).into_owned())
        .collect();
    Waveform {
        times: traj.times.clone(),
        values,
    }
}

fn append_window(global: &mut Option<Trajectory>, window: Trajectory) {
    match global {
        None => *global = Some(window),
        Some(acc) => {
            acc.times.extend_from_slice(&window.times[1..]);
            acc.states.extend_from_slice(&window.states[1..]);
            acc.outputs.extend_from_slice(&window.outputs[1..]);
            acc.step_efforts.extend_from_slice(&window.step_efforts);
            acc.step_inputs.extend_from_slice(&window.step_inputs);
            acc.newton = NewtonStats {
                steps: acc.newton.steps + window.newton.steps,
                total_iterations: acc.newton.total_iterations + window.newton.total_iterations,
                max_iterations: acc.newton.max_iterations.max(window.newton.max_iterations),
                factorizations: acc.newton.factorizations + window.newton.factorizations,
            };
        }
    }
}
