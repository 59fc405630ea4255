//! Coupled field/circuit benchmark: monolithic condensed runs, the port
//! power handshake, and dynamic-iteration co-simulation against the
//! monolithic reference.

use nalgebra::{DMatrix, DVector};
use phdae_core::cosim::{run_cosim, CosimConfig, IterationMode};
use phdae_core::coupler::{couple, extend_circuit};
use phdae_core::device::{assemble_device, FitDevice, MaterialSpec, PortPath};
use phdae_core::energy::energy_audit;
use phdae_core::grid::{build_grid, Axis};
use phdae_core::integrate::{consistent_init, integrate, Scheme, SolverConfig};
use phdae_core::mna::{source_signal, AssembledCircuit};
use phdae_core::models::ElementModels;
use phdae_core::netlist::parse;
use phdae_core::system::validate_structure;

/// Smallest device with an interior edge: dims (1, 2, 2), the single
/// interior x-edge is the port.
fn benchmark_device(sigma: f64) -> FitDevice {
    let grid = build_grid((1, 2, 2), (1.0, 1.0, 1.0)).unwrap();
    let edge = grid.edge_index(Axis::X, 0, 1, 1).unwrap();
    assemble_device(
        "dev",
        grid,
        MaterialSpec::Uniform(1.0),
        MaterialSpec::Uniform(1.0),
        MaterialSpec::Uniform(sigma),
        &[PortPath {
            name: "P1".into(),
            edges: vec![(edge, 1.0)],
        }],
    )
    .unwrap()
}

const DRIVEN_RL: &str = "V1 1 0 SIN 1 0.5\nR1 1 2 1\nL1 2 3 1\nE1 3 0 dev\n";
const SOURCE_FREE_RL: &str = "R1 0 1 1\nL1 1 2 1\nE1 2 0 dev\n";

fn driven_benchmark() -> (AssembledCircuit, FitDevice) {
    let g = parse(DRIVEN_RL).unwrap();
    let models = ElementModels::resolve(&g).unwrap();
    (extend_circuit(&g, &models).unwrap(), benchmark_device(0.2))
}

#[test]
fn condensed_field_circuit_system_passes_validation() {
    let (ext, dev) = driven_benchmark();
    let coupling = couple(&ext, &dev).unwrap();
    let report = validate_structure(&coupling.condensed, 40, 1e-10);
    assert!(report.passed(), "{report}");
    assert_eq!(report.skew_violation, 0.0);
}

#[test]
fn source_free_coupled_system_dissipates_total_energy() {
    let g = parse(SOURCE_FREE_RL).unwrap();
    let models = ElementModels::resolve(&g).unwrap();
    let ext = extend_circuit(&g, &models).unwrap();
    let dev = benchmark_device(0.0);
    let coupling = couple(&ext, &dev).unwrap();
    let sys = &coupling.condensed;

    // Initial energy in the inductor and the device fields.
    let nc = ext.system.dim_state();
    let mut guess = DVector::zeros(sys.dim_state());
    guess[ext.layout.phi_offset()] = 1.0;
    for i in 0..dev.magnetic_dim() {
        guess[nc + i] = 0.2 * ((i % 5) as f64 - 2.0);
    }
    guess[nc + dev.magnetic_dim()] = 0.5;
    let zero = |_t: f64| DVector::zeros(sys.dim_input());
    let x0 = consistent_init(sys, &guess, &zero(0.0)).unwrap();
    let h0 = sys.hamiltonian(&x0);
    assert!(h0 > 0.0);

    let cfg = SolverConfig::new(Scheme::DiscreteGradient, 1e-2, 2.0);
    let traj = integrate(sys, &cfg, &x0, &zero).unwrap();
    let ledger = energy_audit(sys, &traj).unwrap();
    assert_eq!(*ledger.supplied.last().unwrap(), 0.0);
    assert!(
        ledger.max_abs_residual() <= 1e-9 * (1.0 + h0),
        "balance residual {:.3e}",
        ledger.max_abs_residual()
    );
    // Total Hamiltonian never increases (R dissipation).
    for w in ledger.hamiltonian_samples.windows(2) {
        assert!(w[1] <= w[0] + 1e-12 * (1.0 + h0));
    }
    assert!(*ledger.hamiltonian_samples.last().unwrap() < h0);
}

#[test]
fn port_power_handshake_is_antisymmetric() {
    let (ext, dev) = driven_benchmark();
    let coupling = couple(&ext, &dev).unwrap();
    let sys = &coupling.condensed;
    let src = source_signal(&parse(DRIVEN_RL).unwrap());

    let x0 = consistent_init(sys, &DVector::zeros(sys.dim_state()), &src(0.0)).unwrap();
    let cfg = SolverConfig::new(Scheme::Midpoint, 1e-2, 1.0);
    let traj = integrate(sys, &cfg, &x0, &src).unwrap();

    // Internal outputs from the scheme's effort samples: y1 = j_E (circuit),
    // y2 = X_S^T e (device); the coupling sets u1 = -y2, u2 = y1.
    let nc = ext.system.dim_state();
    let je_row = ext.layout.je_offset();
    let xs = dev.port_matrix.clone();
    for zbar in &traj.step_efforts {
        let y1 = zbar[je_row];
        let e_part = zbar.rows(nc + dev.magnetic_dim(), dev.electric_dim());
        let y2 = (xs.transpose() * e_part)[0];
        let power = (-y2) * y1 + y1 * y2;
        assert!(power.abs() <= 1e-12, "net port power {power:.3e}");
    }
}

fn cosim_setup() -> (
    AssembledCircuit,
    FitDevice,
    DVector<f64>,
    DVector<f64>,
    impl Fn(f64) -> DVector<f64> + Send + Sync,
) {
    let (ext, dev) = driven_benchmark();
    let src = source_signal(&parse(DRIVEN_RL).unwrap());
    let dev_sys = dev.to_system();
    let x0_dev = dev.initial_state();
    // Circuit init consistent with the device's initial port voltage (zero).
    let m_ext = ext.ports.external.ncols();
    let u0 = {
        let mut u = DVector::zeros(ext.system.dim_input());
        u.rows_mut(0, m_ext).copy_from(&src(0.0));
        u
    };
    let x0_circ = consistent_init(&ext.system, &DVector::zeros(ext.system.dim_state()), &u0).unwrap();
    drop(dev_sys);
    (ext, dev, x0_circ, x0_dev, src)
}

fn monolithic_reference(
    ext: &AssembledCircuit,
    dev: &FitDevice,
    x0_circ: &DVector<f64>,
    x0_dev: &DVector<f64>,
    src: &(dyn Fn(f64) -> DVector<f64> + Sync),
    h: f64,
    t_end: f64,
) -> Vec<DVector<f64>> {
    let coupling = couple(ext, dev).unwrap();
    let sys = &coupling.condensed;
    let mut x0 = DVector::zeros(sys.dim_state());
    x0.rows_mut(0, x0_circ.len()).copy_from(x0_circ);
    x0.rows_mut(x0_circ.len(), x0_dev.len()).copy_from(x0_dev);
    let cfg = SolverConfig::new(Scheme::Midpoint, h, t_end);
    let traj = integrate(sys, &cfg, &x0, src).unwrap();
    traj.states
}

#[test]
fn gauss_seidel_cosim_matches_monolithic_reference() {
    let (ext, dev, x0_circ, x0_dev, src) = cosim_setup();
    let h = 1e-3;
    let t_end = 0.5;
    let reference = monolithic_reference(&ext, &dev, &x0_circ, &x0_dev, &src, h, t_end);

    let mut cfg = CosimConfig::new(10.0 * h, h, t_end);
    cfg.mode = IterationMode::GaussSeidel;
    let result = run_cosim(
        &ext.system,
        &ext.ports,
        &dev.to_system(),
        &cfg,
        &x0_circ,
        &x0_dev,
        &src,
    )
    .unwrap();

    // Every window converged within the sweep budget.
    assert!(result.sweeps_per_window.iter().all(|s| *s <= cfg.max_sweeps));

    // Final state against the monolithic condensed run.
    let xc = result.circuit.final_state();
    let xd = result.device.final_state();
    let reference_final = reference.last().unwrap();
    let nc = xc.len();
    let gap_c = (xc - reference_final.rows(0, nc)).amax();
    let gap_d = (xd - reference_final.rows(nc, xd.len())).amax();
    assert!(
        gap_c.max(gap_d) <= 1e-6,
        "deviation from monolithic reference: circuit {gap_c:.3e}, device {gap_d:.3e}"
    );

    // Converged sweeps end with the feedback signal below the tolerance.
    for window in 0..result.sweeps_per_window.len() {
        let last = result
            .diagnostics
            .iter()
            .rfind(|d| d.window == window)
            .unwrap();
        assert!(last.delta_y2 <= cfg.sweep_tol);
    }
}

#[test]
fn jacobi_needs_at_least_as_many_sweeps_as_gauss_seidel() {
    let (ext, dev, x0_circ, x0_dev, src) = cosim_setup();
    let h = 1e-3;
    let t_end = 0.2;
    let mut cfg = CosimConfig::new(10.0 * h, h, t_end);

    cfg.mode = IterationMode::GaussSeidel;
    let gs = run_cosim(
        &ext.system,
        &ext.ports,
        &dev.to_system(),
        &cfg,
        &x0_circ,
        &x0_dev,
        &src,
    )
    .unwrap();

    cfg.mode = IterationMode::Jacobi;
    let jac = run_cosim(
        &ext.system,
        &ext.ports,
        &dev.to_system(),
        &cfg,
        &x0_circ,
        &x0_dev,
        &src,
    )
    .unwrap();

    assert_eq!(gs.sweeps_per_window.len(), jac.sweeps_per_window.len());
    for (w, (g, j)) in gs
        .sweeps_per_window
        .iter()
        .zip(&jac.sweeps_per_window)
        .enumerate()
    {
        assert!(j >= g, "window {w}: jacobi {j} sweeps < gauss-seidel {g}");
    }
}

#[test]
fn decoupled_fixed_point_converges_in_one_sweep() {
    // Zeroed port matrix: the exchanged signals are constants, the first
    // sweep already reproduces them and the subsystems run standalone.
    let (ext, _dev, x0_circ, _x0_dev, src) = cosim_setup();
    let dev = {
        let grid = build_grid((1, 2, 2), (1.0, 1.0, 1.0)).unwrap();
        let edge = grid.edge_index(Axis::X, 0, 1, 1).unwrap();
        let mut d = assemble_device(
            "dev",
            grid,
            MaterialSpec::Uniform(1.0),
            MaterialSpec::Uniform(1.0),
            MaterialSpec::Uniform(0.2),
            &[PortPath {
                name: "P1".into(),
                edges: vec![(edge, 1.0)],
            }],
        )
        .unwrap();
        d.port_matrix = DMatrix::zeros(d.electric_dim(), 1);
        d
    };
    let x0_dev = {
        let mut x = dev.initial_state();
        for i in 0..dev.magnetic_dim() {
            x[i] = 0.1 * (i as f64 % 3.0 - 1.0);
        }
        x
    };

    let h = 1e-3;
    let mut cfg = CosimConfig::new(10.0 * h, h, 0.1);
    cfg.mode = IterationMode::GaussSeidel;
    let result = run_cosim(
        &ext.system,
        &ext.ports,
        &dev.to_system(),
        &cfg,
        &x0_circ,
        &x0_dev,
        &src,
    )
    .unwrap();
    assert!(result.sweeps_per_window.iter().all(|s| *s == 1));

    // Standalone device run for comparison.
    let dev_sys = dev.to_system();
    let cfg_solo = SolverConfig::new(Scheme::Midpoint, h, 0.1);
    let zero_in = |_t: f64| DVector::zeros(1);
    let solo = integrate(&dev_sys, &cfg_solo, &x0_dev, &zero_in).unwrap();
    let gap = (result.device.final_state() - solo.final_state()).amax();
    assert!(gap <= 1e-12, "decoupled device deviates by {gap:.3e}");
}

#[test]
fn per_sweep_trajectories_satisfy_energy_balance_with_exchanged_power() {
    let (ext, dev, x0_circ, x0_dev, src) = cosim_setup();
    let h = 1e-3;
    let cfg = CosimConfig::new(10.0 * h, h, 0.2);
    let result = run_cosim(
        &ext.system,
        &ext.ports,
        &dev.to_system(),
        &cfg,
        &x0_circ,
        &x0_dev,
        &src,
    )
    .unwrap();

    // The stitched trajectories carry the exchanged inputs per step, so the
    // audit counts exchanged power as supplied power.
    let circ_ledger = energy_audit(&ext.system, &result.circuit).unwrap();
    let dev_ledger = energy_audit(&dev.to_system(), &result.device).unwrap();
    let scale = 1.0
        + circ_ledger
            .hamiltonian_samples
            .iter()
            .chain(&dev_ledger.hamiltonian_samples)
            .fold(0.0f64, |a, v| a.max(v.abs()));
    assert!(circ_ledger.max_step_residual() <= 1e-9 * scale);
    assert!(dev_ledger.max_step_residual() <= 1e-9 * scale);
    // The device is driven through its port: supplied power is nonzero.
    assert!(dev_ledger.supplied.last().unwrap().abs() > 1e-12);
}

#[test]
fn zero_coupling_override_decouples_the_condensed_system() {
    use phdae_core::interconnect::{condense, CoupledSystem};

    let (ext, dev) = driven_benchmark();
    let src = source_signal(&parse(DRIVEN_RL).unwrap());

    // Override the coupling with C = 0: the condensed structure matrix is
    // block diagonal and the circuit block evolves as if standalone.
    let p = dev.port_count();
    let coupled = CoupledSystem::with_skew_coupling(
        vec![
            (ext.system.clone(), ext.ports.clone()),
            (dev.to_system(), dev.port_split()),
        ],
        DMatrix::zeros(2 * p, 2 * p),
    )
    .unwrap();
    let sys = condense(&coupled).unwrap();

    let nc = ext.system.dim_state();
    let m_ext = ext.ports.external.ncols();
    let x0c = consistent_init(&ext.system, &DVector::zeros(nc), &{
        let mut u = DVector::zeros(ext.system.dim_input());
        u.rows_mut(0, m_ext).copy_from(&src(0.0));
        u
    })
    .unwrap();
    let mut x0 = DVector::zeros(sys.dim_state());
    x0.rows_mut(0, nc).copy_from(&x0c);

    let cfg = SolverConfig::new(Scheme::Midpoint, 1e-3, 0.3);
    let traj = integrate(&sys, &cfg, &x0, &src).unwrap();

    // Standalone circuit with a zeroed internal port input.
    let standalone_input = |t: f64| {
        let mut u = DVector::zeros(ext.system.dim_input());
        u.rows_mut(0, m_ext).copy_from(&src(t));
        u
    };
    let solo = integrate(&ext.system, &cfg, &x0c, &standalone_input).unwrap();
    let gap = (traj.final_state().rows(0, nc) - solo.final_state()).amax();
    assert!(gap <= 1e-12, "decoupled circuit block deviates by {gap:.3e}");
    // The device block stays at rest.
    assert!(traj.final_state().rows(nc, dev.state_dim()).amax() <= 1e-12);
}

#[test]
fn sweep_limit_exceeded_reports_divergence_with_history() {
    use phdae_core::error::CosimError;

    let (ext, dev, x0_circ, x0_dev, src) = cosim_setup();
    let h = 1e-3;
    let mut cfg = CosimConfig::new(10.0 * h, h, 0.1);
    cfg.max_sweeps = 1;
    let err = run_cosim(
        &ext.system,
        &ext.ports,
        &dev.to_system(),
        &cfg,
        &x0_circ,
        &x0_dev,
        &src,
    )
    .unwrap_err();
    match err {
        CosimError::WindowDivergence {
            window,
            max_sweeps,
            history,
        } => {
            assert_eq!(window, 0);
            assert_eq!(max_sweeps, 1);
            assert_eq!(history.len(), 1);
        }
        other => panic!("expected window divergence, got {other}"),
    }
}

#[test]
fn jacobi_threaded_sweeps_are_deterministic() {
    let (ext, dev, x0_circ, x0_dev, src) = cosim_setup();
    let h = 1e-3;
    let mut cfg = CosimConfig::new(10.0 * h, h, 0.1);
    cfg.mode = IterationMode::Jacobi;
    let run = || {
        run_cosim(
            &ext.system,
            &ext.ports,
            &dev.to_system(),
            &cfg,
            &x0_circ,
            &x0_dev,
            &src,
        )
        .unwrap()
    };
    let a = run();
    let b = run();
    assert_eq!(a.sweeps_per_window, b.sweeps_per_window);
    for (xa, xb) in a.circuit.states.iter().zip(&b.circuit.states) {
        assert_eq!(xa, xb, "threaded Jacobi must be bitwise reproducible");
    }
    for (xa, xb) in a.device.states.iter().zip(&b.device.states) {
        assert_eq!(xa, xb);
    }
}

#[test]
fn contraction_is_monotone_on_benchmark_windows() {
    let (ext, dev, x0_circ, x0_dev, src) = cosim_setup();
    let h = 1e-3;
    let mut cfg = CosimConfig::new(20.0 * h, h, 0.2);
    cfg.mode = IterationMode::GaussSeidel;
    let result = run_cosim(
        &ext.system,
        &ext.ports,
        &dev.to_system(),
        &cfg,
        &x0_circ,
        &x0_dev,
        &src,
    )
    .unwrap();
    for window in 0..result.sweeps_per_window.len() {
        let deltas: Vec<f64> = result
            .diagnostics
            .iter()
            .filter(|d| d.window == window)
            .map(|d| d.delta_y1 + d.delta_y2)
            .collect();
        for pair in deltas.windows(2) {
            assert!(
                pair[1] <= pair[0] * 1.001 + 1e-14,
                "window {window}: deltas not monotone: {deltas:?}"
            );
        }
    }
}
