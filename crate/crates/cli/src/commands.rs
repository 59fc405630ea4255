//! Command implementations shared by the binary entry point.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use phdae_core::cosim::{run_cosim, write_diagnostics_csv, CosimConfig, IterationMode};
use phdae_core::coupler::{couple, extend_circuit};
use phdae_core::device::parse_device_file;
use phdae_core::energy::{energy_audit, EnergyLedger};
use phdae_core::integrate::{consistent_init, integrate, Scheme, SolverConfig, Trajectory};
use phdae_core::mna::{assemble, source_signal};
use phdae_core::models::{verify_passivity_seeded, ElementModels};
use phdae_core::netlist::{parse, CircuitGraph};
use phdae_core::pencil::pencil_regularity_seeded;
use phdae_core::splitting::lie_trotter_demo;
use phdae_core::system::PhDaeSystem;
use phdae_core::topology::{classify_index, check_soundness, DaeIndex, TopologyReport};

/// Process outcome with the documented exit codes: 2 input, 3 solver,
/// 4 audit.
#[derive(Debug)]
pub enum CliError {
    Input(String),
    Solver(String),
    Audit(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Solver(_) => 3,
            CliError::Audit(_) => 4,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Input(m) | CliError::Solver(m) | CliError::Audit(m) => m,
        }
    }
}

pub type CliResult = Result<(), CliError>;

fn input_err(e: impl std::fmt::Display) -> CliError {
    CliError::Input(e.to_string())
}

fn solver_err(e: impl std::fmt::Display) -> CliError {
    CliError::Solver(e.to_string())
}

fn read_file(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))
}

fn load_netlist(path: &Path) -> Result<CircuitGraph, CliError> {
    parse(&read_file(path)?).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

/// Resolved numerical settings after merging flags, config file and defaults.
#[derive(Debug, Clone)]
pub struct RunSettings {
    pub scheme: Scheme,
    pub step: f64,
    pub end_time: f64,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub audit_tol: f64,
    /// Trajectory CSV whose final state the run is compared against.
    pub reference: Option<PathBuf>,
}

impl RunSettings {
    fn solver_config(&self) -> SolverConfig {
        SolverConfig::new(self.scheme, self.step, self.end_time)
    }
}

pub struct CosimSettings {
    pub run: RunSettings,
    pub window: f64,
    pub mode: IterationMode,
    pub sweep_tol: f64,
    pub max_sweeps: usize,
}

fn ensure_out_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Input(format!("cannot create {}: {e}", dir.display())))
}

fn write_trajectory(path: &Path, traj: &Trajectory) -> Result<(), CliError> {
    let mut file = fs::File::create(path)
        .map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))?;
    traj.write_csv(&mut file).map_err(input_err)?;
    Ok(())
}

fn write_ledger(path: &Path, ledger: &EnergyLedger) -> Result<(), CliError> {
    let mut file = fs::File::create(path)
        .map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))?;
    ledger.write_csv(&mut file).map_err(input_err)?;
    Ok(())
}

fn topology_lines(report: &TopologyReport) -> Vec<String> {
    let list = |items: &[String]| {
        if items.is_empty() {
            "none".to_string()
        } else {
            items.join(", ")
        }
    };
    let mut lines = vec![
        format!("connected: {}", report.connected),
        format!(
            "v-loops: {}",
            if report.v_loop_free {
                "none".to_string()
            } else {
                list(&report.v_loop_witness)
            }
        ),
        format!(
            "i-cutsets: {}",
            if report.i_cutset_free {
                "none".to_string()
            } else {
                list(&report.i_cutset_witness)
            }
        ),
    ];
    if report.sound() {
        lines.push(format!(
            "li-cutsets: {}",
            if report.li_cutset_present {
                list(&report.li_cutset_witness)
            } else {
                "none".to_string()
            }
        ));
        lines.push(format!(
            "cv-loops: {}",
            if report.cv_loop_present {
                list(&report.cv_loop_witness)
            } else {
                "none".to_string()
            }
        ));
        lines.push(format!(
            "c-loops (index-neutral): {}",
            if report.c_loop_present { "present" } else { "none" }
        ));
        let index_line = match report.index {
            Some(DaeIndex::One) => "index: 1".to_string(),
            Some(DaeIndex::Two) => {
                if report.cv_loop_present {
                    format!("index: 2 (CV-loop: {})", report.cv_loop_witness.join(", "))
                } else {
                    format!(
                        "index: 2 (LI-cutset: {})",
                        report.li_cutset_witness.join(", ")
                    )
                }
            }
            None => "index: undefined".to_string(),
        };
        lines.push(index_line);
    } else {
        lines.push("index: undefined (unsound)".to_string());
    }
    lines
}

pub fn cmd_check(
    netlist: &Path,
    samples: usize,
    seed: u64,
    out_dir: Option<&Path>,
) -> CliResult {
    let graph = load_netlist(netlist)?;
    let soundness = check_soundness(&graph);
    let report = if soundness.sound() {
        classify_index(&graph).map_err(input_err)?
    } else {
        soundness
    };

    println!("netlist: {}", netlist.display());
    for line in topology_lines(&report) {
        println!("{line}");
    }

    let models = ElementModels::resolve(&graph).map_err(input_err)?;
    let passivity = verify_passivity_seeded(&models, samples, seed);
    let show = |v: f64| {
        if v.is_finite() {
            format!("{v:.3e}")
        } else {
            "n/a".to_string()
        }
    };
    println!(
        "passivity: {} (min charge jacobian {}, min flux jacobian {}, min conductance jacobian {}, storage gradient error {:.3e}, {} samples)",
        if passivity.passed() { "pass" } else { "FAIL" },
        show(passivity.charge_jacobian_min),
        show(passivity.flux_jacobian_min),
        show(passivity.conductance_jacobian_min),
        passivity.storage_gradient_error,
        passivity.samples,
    );
    if let Some((witness, value)) = &passivity.witness {
        println!("passivity witness: {witness} -> {value:.3e}");
    }

    if let Some(dir) = out_dir {
        ensure_out_dir(dir)?;
        let json = serde_json::json!({
            "netlist": netlist.display().to_string(),
            "connected": report.connected,
            "v_loop_free": report.v_loop_free,
            "i_cutset_free": report.i_cutset_free,
            "sound": report.sound(),
            "li_cutset_present": report.li_cutset_present,
            "cv_loop_present": report.cv_loop_present,
            "c_loop_present": report.c_loop_present,
            "index": report.index.map(|i| i.as_u8()),
            "v_loop_witness": report.v_loop_witness,
            "i_cutset_witness": report.i_cutset_witness,
            "li_cutset_witness": report.li_cutset_witness,
            "cv_loop_witness": report.cv_loop_witness,
            "passivity_pass": passivity.passed(),
            "charge_jacobian_min": finite_or_null(passivity.charge_jacobian_min),
            "flux_jacobian_min": finite_or_null(passivity.flux_jacobian_min),
            "conductance_jacobian_min": finite_or_null(passivity.conductance_jacobian_min),
            "storage_gradient_error": passivity.storage_gradient_error,
            "samples": passivity.samples,
        });
        let path = dir.join("check_report.json");
        fs::write(&path, serde_json::to_string_pretty(&json).unwrap())
            .map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))?;
    }

    if report.sound() && passivity.passed() {
        Ok(())
    } else {
        Err(CliError::Input(
            "netlist is unsound or fails the passivity checks".into(),
        ))
    }
}

fn finite_or_null(v: f64) -> serde_json::Value {
    if v.is_finite() {
        serde_json::json!(v)
    } else {
        serde_json::Value::Null
    }
}

struct RunArtifacts<'a> {
    command: &'a str,
    inputs: Vec<(String, String)>,
    system: &'a PhDaeSystem,
    traj: &'a Trajectory,
    ledger: &'a EnergyLedger,
    settings: &'a RunSettings,
    extra: Vec<String>,
}

/// Writes trajectory, ledger and summary; enforces the dissipation
/// inequality gate (exit 4 on failure).
fn finish_run(artifacts: RunArtifacts<'_>) -> CliResult {
    let RunArtifacts {
        command,
        inputs,
        system,
        traj,
        ledger,
        settings,
        extra,
    } = artifacts;
    ensure_out_dir(&settings.out_dir)?;
    write_trajectory(&settings.out_dir.join("trajectory.csv"), traj)?;
    write_ledger(&settings.out_dir.join("ledger.csv"), ledger)?;

    let h0 = ledger.hamiltonian_samples[0];
    let supplied_max = ledger
        .supplied
        .iter()
        .fold(0.0f64, |a, v| a.max(v.abs()));
    let audit_scale = 1.0 + h0.abs() + supplied_max;
    let audit_ok = ledger.dissipation_inequality_ok(settings.audit_tol * audit_scale);

    let mut summary = String::new();
    summary.push_str(&format!("command: {command}\n"));
    for (key, value) in &inputs {
        summary.push_str(&format!("{key}: {value}\n"));
    }
    summary.push_str(&format!("scheme: {}\n", settings.scheme.name()));
    summary.push_str(&format!("h: {:e}\n", settings.step));
    summary.push_str(&format!("T: {:e}\n", settings.end_time));
    summary.push_str(&format!("seed: {}\n", settings.seed));
    summary.push_str(&format!("state dimension: {}\n", system.dim_state()));
    summary.push_str(&format!("steps: {}\n", traj.steps()));
    summary.push_str(&format!(
        "final H: {:.16e}\n",
        ledger.hamiltonian_samples.last().unwrap()
    ));
    summary.push_str(&format!(
        "max |balance residual|: {:.3e}\n",
        ledger.max_abs_residual()
    ));
    summary.push_str(&format!(
        "max per-step residual: {:.3e}\n",
        ledger.max_step_residual()
    ));
    summary.push_str(&format!(
        "newton: steps {}, iterations {}, max per step {}, factorizations {}\n",
        traj.newton.steps,
        traj.newton.total_iterations,
        traj.newton.max_iterations,
        traj.newton.factorizations
    ));
    for line in &extra {
        summary.push_str(line);
        summary.push('\n');
    }
    if let Some(reference) = &settings.reference {
        let deviation = reference_deviation(reference, &[traj.final_state().clone()])?;
        summary.push_str(&format!("final deviation vs reference: {:.3e}\n", deviation));
    }
    summary.push_str(&format!(
        "energy audit: {} (tolerance {:.3e})\n",
        if audit_ok { "pass" } else { "FAILED-AUDIT" },
        settings.audit_tol * audit_scale
    ));

    let path = settings.out_dir.join("summary.txt");
    fs::write(&path, &summary)
        .map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))?;
    print!("{summary}");

    if audit_ok {
        Ok(())
    } else {
        Err(CliError::Audit(
            "dissipation inequality violated; see summary.txt".into(),
        ))
    }
}

pub fn cmd_run(netlist: &Path, settings: &RunSettings) -> CliResult {
    let graph = load_netlist(netlist)?;
    let models = ElementModels::resolve(&graph).map_err(input_err)?;
    let system = assemble(&graph, &models).map_err(input_err)?;
    let source = source_signal(&graph);

    let guess = DVector::zeros(system.dim_state());
    let x0 = consistent_init(&system, &guess, &source(0.0)).map_err(solver_err)?;
    let cfg = settings.solver_config();
    cfg.validate().map_err(input_err)?;
    let traj = integrate(&system, &cfg, &x0, &source).map_err(solver_err)?;
    let ledger = energy_audit(&system, &traj).map_err(solver_err)?;

    finish_run(RunArtifacts {
        command: "run",
        inputs: vec![("netlist".into(), netlist.display().to_string())],
        system: &system,
        traj: &traj,
        ledger: &ledger,
        settings,
        extra: Vec::new(),
    })
}

fn load_coupling(
    netlist: &Path,
    device_file: &Path,
) -> Result<
    (
        phdae_core::mna::AssembledCircuit,
        phdae_core::device::FitDevice,
        impl Fn(f64) -> DVector<f64> + Send + Sync,
    ),
    CliError,
> {
    let graph = load_netlist(netlist)?;
    let models = ElementModels::resolve(&graph).map_err(input_err)?;
    let circuit = extend_circuit(&graph, &models).map_err(input_err)?;
    let description = parse_device_file(&read_file(device_file)?)
        .map_err(|e| CliError::Input(format!("{}: {e}", device_file.display())))?;
    let device = description.build().map_err(input_err)?;
    let source = source_signal(&graph);
    Ok((circuit, device, source))
}

pub fn cmd_couple(netlist: &Path, device_file: &Path, settings: &RunSettings) -> CliResult {
    let (circuit, device, source) = load_coupling(netlist, device_file)?;
    let coupling = couple(&circuit, &device).map_err(input_err)?;
    let system = &coupling.condensed;

    let guess = DVector::zeros(system.dim_state());
    let x0 = consistent_init(system, &guess, &source(0.0)).map_err(solver_err)?;
    let cfg = settings.solver_config();
    cfg.validate().map_err(input_err)?;
    let traj = integrate(system, &cfg, &x0, &source).map_err(solver_err)?;
    let ledger = energy_audit(system, &traj).map_err(solver_err)?;

    finish_run(RunArtifacts {
        command: "couple",
        inputs: vec![
            ("netlist".into(), netlist.display().to_string()),
            ("device".into(), device_file.display().to_string()),
        ],
        system,
        traj: &traj,
        ledger: &ledger,
        settings,
        extra: vec![format!("device ports: {}", coupling.port_count)],
    })
}

pub fn cmd_cosim(netlist: &Path, device_file: &Path, settings: &CosimSettings) -> CliResult {
    let (circuit, device, source) = load_coupling(netlist, device_file)?;
    let device_system = device.to_system();

    let mut cfg = CosimConfig::new(settings.window, settings.run.step, settings.run.end_time);
    cfg.mode = settings.mode;
    cfg.scheme = settings.run.scheme;
    cfg.sweep_tol = settings.sweep_tol;
    cfg.max_sweeps = settings.max_sweeps;

    // Consistent circuit start against the device's initial port voltage.
    let m_ext = circuit.ports.external.ncols();
    let x0_device = device.initial_state();
    let mut u0 = DVector::zeros(circuit.system.dim_input());
    u0.rows_mut(0, m_ext).copy_from(&source(0.0));
    let x0_circuit = consistent_init(
        &circuit.system,
        &DVector::zeros(circuit.system.dim_state()),
        &u0,
    )
    .map_err(solver_err)?;

    let result = run_cosim(
        &circuit.system,
        &circuit.ports,
        &device_system,
        &cfg,
        &x0_circuit,
        &x0_device,
        &source,
    )
    .map_err(solver_err)?;

    let out = &settings.run.out_dir;
    ensure_out_dir(out)?;
    write_trajectory(&out.join("trajectory_circuit.csv"), &result.circuit)?;
    write_trajectory(&out.join("trajectory_device.csv"), &result.device)?;
    let circuit_ledger = energy_audit(&circuit.system, &result.circuit).map_err(solver_err)?;
    let device_ledger = energy_audit(&device_system, &result.device).map_err(solver_err)?;
    write_ledger(&out.join("ledger_circuit.csv"), &circuit_ledger)?;
    write_ledger(&out.join("ledger_device.csv"), &device_ledger)?;
    {
        let mut file = fs::File::create(out.join("diagnostics.csv"))
            .map_err(|e| CliError::Input(format!("cannot write diagnostics.csv: {e}")))?;
        write_diagnostics_csv(&result.diagnostics, &mut file).map_err(input_err)?;
        file.flush().map_err(input_err)?;
    }

    let mut summary = String::new();
    summary.push_str("command: cosim\n");
    summary.push_str(&format!("netlist: {}\n", netlist.display()));
    summary.push_str(&format!("device: {}\n", device_file.display()));
    summary.push_str(&format!("mode: {}\n", cfg.mode.name()));
    summary.push_str(&format!(
        "leader: {}\n",
        if cfg.circuit_leads { "circuit" } else { "device" }
    ));
    summary.push_str(&format!("scheme: {}\n", cfg.scheme.name()));
    summary.push_str(&format!("h: {:e}\n", cfg.micro_step));
    summary.push_str(&format!("window: {:e}\n", cfg.window));
    summary.push_str(&format!("T: {:e}\n", cfg.end_time));
    summary.push_str(&format!("seed: {}\n", settings.run.seed));
    summary.push_str(&format!("windows: {}\n", result.sweeps_per_window.len()));
    summary.push_str(&format!(
        "sweeps per window: {}\n",
        result
            .sweeps_per_window
            .iter()
            .map(|s| s.to_string())
            .collect::<Vec<_>>()
            .join(" ")
    ));
    summary.push_str(&format!("total sweeps: {}\n", result.total_sweeps()));
    let final_h = circuit_ledger.hamiltonian_samples.last().unwrap()
        + device_ledger.hamiltonian_samples.last().unwrap();
    summary.push_str(&format!("final total H: {:.16e}\n", final_h));
    summary.push_str(&format!(
        "max |balance residual| (circuit): {:.3e}\n",
        circuit_ledger.max_abs_residual()
    ));
    summary.push_str(&format!(
        "max |balance residual| (device): {:.3e}\n",
        device_ledger.max_abs_residual()
    ));

    if let Some(reference) = &settings.run.reference {
        let deviation = reference_deviation(
            reference,
            &[
                result.circuit.final_state().clone(),
                result.device.final_state().clone(),
            ],
        )?;
        summary.push_str(&format!(
            "final deviation vs reference: {:.3e}\n",
            deviation
        ));
    }

    let path = out.join("summary.txt");
    fs::write(&path, &summary)
        .map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))?;
    print!("{summary}");
    Ok(())
}

/// Max-norm gap between stacked final state blocks and the last row of a
/// reference trajectory CSV (state columns only).
fn reference_deviation(reference: &Path, blocks: &[DVector<f64>]) -> Result<f64, CliError> {
    let text = read_file(reference)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| CliError::Input("reference file is empty".into()))?;
    let n_states = header.split(',').filter(|c| c.starts_with("x_")).count();
    let last = lines.rfind(|l| !l.trim().is_empty())
        .ok_or_else(|| CliError::Input("reference file has no data rows".into()))?;
    let fields: Vec<&str> = last.split(',').collect();
    if fields.len() < 1 + n_states {
        return Err(CliError::Input("reference row is too short".into()));
    }
    let reference_state: Vec<f64> = fields[1..=n_states]
        .iter()
        .map(|f| f.parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Input(format!("reference parse error: {e}")))?;
    let stacked: Vec<f64> = blocks.iter().flat_map(|b| b.iter().copied()).collect();
    if reference_state.len() != stacked.len() {
        return Err(CliError::Input(format!(
            "reference has {} states, this run has {}",
            reference_state.len(),
            stacked.len()
        )));
    }
    let worst = reference_state
        .iter()
        .zip(&stacked)
        .map(|(r, v)| (v - r).abs())
        .fold(0.0f64, f64::max);
    Ok(worst)
}

pub fn cmd_demo_splitting(h: f64, seed: u64) -> CliResult {
    let e = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0, 1.0]));
    let j = DMatrix::from_row_slice(3, 3, &[0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    let r = DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, 1.0, 1.0]));
    let x0 = DVector::from_vec(vec![1.0, -1.0, 0.0]);

    println!("operator-splitting demonstrator");
    println!("E  = diag(1, 0, 1)");
    println!("J  = [[0, -1, 0], [1, 0, 0], [0, 0, 0]]");
    println!("R  = diag(0, 1, 1)");
    println!("x0 = (1, -1, 0)");
    println!();

    // The randomized pencil probes share the CLI seed for reproducibility.
    for (name, a) in [("{E, J}", &j), ("{E, R}", &r)] {
        let report = pencil_regularity_seeded(&e, a, seed);
        println!("pencil {name}:   {report}");
    }
    let jr = &j - &r;
    println!("pencil {{E, J-R}}: {}", pencil_regularity_seeded(&e, &jr, seed));
    println!();

    let report = lie_trotter_demo(&e, &j, &r, &x0, h).map_err(solver_err)?;
    print!("{report}");
    Ok(())
}
