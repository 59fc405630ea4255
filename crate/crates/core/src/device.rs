//! Electromagnetic devices on a FIT grid as linear PH-DAE systems.
//!
//! State is `(h, e)`: magnetic mesh voltages on all primary facets and
//! electric mesh voltages on the interior primary edges (boundary electric
//! unknowns are removed by the PEC condition, and the curl is restricted to
//! the retained columns, which keeps the structure matrix exactly skew).
//!
//! ```text
//!   diag(M_mu, M_eps) d/dt (h, e) = [[0, -C], [C^T, 0]] (h, e)
//!                                   - diag(0, M_sigma) (h, e) + [0; X_S] u
//!   y = X_S^T e
//! ```
//!
//! Material matrices are diagonal with the standard uniform-grid scalings
//! (dual facet area over primary edge length for `M_eps`/`M_sigma`, facet
//! area over dual edge length for `M_mu`); per-cell material values are
//! averaged over the cells adjacent to each edge or facet.

use nalgebra::{DMatrix, DVector};

use crate::error::{ParseError, StructureError};
use crate::grid::{build_grid, Axis, FitGrid};
use crate::interconnect::PortSplit;
use crate::system::PhDaeSystem;

/// Homogeneous or per-cell material distribution.
#[derive(Debug, Clone, PartialEq)]
pub enum MaterialSpec {
    Uniform(f64),
    PerCell(Vec<f64>),
}

impl MaterialSpec {
    fn average_over(&self, cells: &[usize]) -> f64 {
        match self {
            MaterialSpec::Uniform(v) => *v,
            MaterialSpec::PerCell(values) => {
                cells.iter().map(|c| values[*c]).sum::<f64>() / cells.len() as f64
            }
        }
    }

    fn validate(&self, what: &str, cell_count: usize, allow_zero: bool) -> Result<(), StructureError> {
        let check = |v: f64| {
            if allow_zero {
                v >= 0.0
            } else {
                v > 0.0
            }
        };
        match self {
            MaterialSpec::Uniform(v) => {
                if !check(*v) {
                    return Err(StructureError::Invalid(format!(
                        "{what} must be {} got {v}",
                        if allow_zero { "non-negative," } else { "positive," }
                    )));
                }
            }
            MaterialSpec::PerCell(values) => {
                if values.len() != cell_count {
                    return Err(StructureError::Invalid(format!(
                        "{what} table has {} entries, grid has {cell_count} cells",
                        values.len()
                    )));
                }
                if let Some(v) = values.iter().find(|v| !check(**v)) {
                    return Err(StructureError::Invalid(format!(
                        "{what} must be {} got {v}",
                        if allow_zero { "non-negative," } else { "positive," }
                    )));
                }
            }
        }
        Ok(())
    }
}

/// One lumped port: a signed set of interior edges.
#[derive(Debug, Clone)]
pub struct PortPath {
    pub name: String,
    /// `(global edge index, sign)` with sign in `{-1, +1}`.
    pub edges: Vec<(usize, f64)>,
}

/// Assembled device: grid, diagonal materials and the port allocation.
#[derive(Debug, Clone)]
pub struct FitDevice {
    pub id: String,
    pub grid: FitGrid,
    /// Diagonal of `M_mu`, one entry per facet.
    pub m_mu: DVector<f64>,
    /// Diagonal of `M_eps`, one entry per retained edge.
    pub m_eps: DVector<f64>,
    /// Diagonal of `M_sigma`, one entry per retained edge.
    pub m_sigma: DVector<f64>,
    /// Global indices of the retained (interior) edges.
    pub retained_edges: Vec<usize>,
    /// `X_S`: retained edges x ports, signed indicator columns.
    pub port_matrix: DMatrix<f64>,
    pub port_names: Vec<String>,
}

/// Builds the device data from grid, materials and port paths.
pub fn assemble_device(
    id: impl Into<String>,
    grid: FitGrid,
    eps: MaterialSpec,
    mu: MaterialSpec,
    sigma: MaterialSpec,
    ports: &[PortPath],
) -> Result<FitDevice, StructureError> {
    let cells = grid.cell_count();
    eps.validate("eps", cells, false)?;
    mu.validate("mu", cells, false)?;
    sigma.validate("sigma", cells, true)?;

    let retained_edges = grid.interior_edges();
    let mut retained_pos = vec![usize::MAX; grid.edge_count()];
    for (new, &old) in retained_edges.iter().enumerate() {
        retained_pos[old] = new;
    }

    let m_mu = DVector::from_fn(grid.facet_count(), |f, _| {
        let value = mu.average_over(&grid.cells_at_facet(f));
        value * grid.facet_area(f) / grid.facet_dual_length(f)
    });
    let m_eps = DVector::from_fn(retained_edges.len(), |i, _| {
        let e = retained_edges[i];
        let value = eps.average_over(&grid.cells_at_edge(e));
        value * grid.edge_dual_area(e) / grid.edge_length(e)
    });
    let m_sigma = DVector::from_fn(retained_edges.len(), |i, _| {
        let e = retained_edges[i];
        let value = sigma.average_over(&grid.cells_at_edge(e));
        value * grid.edge_dual_area(e) / grid.edge_length(e)
    });

    let mut port_matrix = DMatrix::zeros(retained_edges.len(), ports.len());
    let mut port_names = Vec::with_capacity(ports.len());
    for (col, port) in ports.iter().enumerate() {
        port_names.push(port.name.clone());
        for &(edge, sign) in &port.edges {
            if edge >= grid.edge_count() {
                return Err(StructureError::Invalid(format!(
                    "port {}: edge index {edge} out of range ({} edges)",
                    port.name,
                    grid.edge_count()
                )));
            }
            if retained_pos[edge] == usize::MAX {
                return Err(StructureError::PortOnBoundary { edge });
            }
            port_matrix[(retained_pos[edge], col)] += sign;
        }
    }

    Ok(FitDevice {
        id: id.into(),
        grid,
        m_mu,
        m_eps,
        m_sigma,
        retained_edges,
        port_matrix,
        port_names,
    })
}

impl FitDevice {
    pub fn magnetic_dim(&self) -> usize {
        self.m_mu.len()
    }

    pub fn electric_dim(&self) -> usize {
        self.m_eps.len()
    }

    pub fn state_dim(&self) -> usize {
        self.magnetic_dim() + self.electric_dim()
    }

    pub fn port_count(&self) -> usize {
        self.port_matrix.ncols()
    }

    /// Curl restricted to the retained electric unknowns (facets x edges).
    pub fn restricted_curl(&self) -> DMatrix<f64> {
        self.grid.curl().to_dense_columns(&self.retained_edges)
    }

    /// All-zero initial fields.
    pub fn initial_state(&self) -> DVector<f64> {
        DVector::zeros(self.state_dim())
    }

    /// Port split of the PH-DAE: every port is internal (couplable).
    pub fn port_split(&self) -> PortSplit {
        PortSplit::all_internal(self.port_allocation())
    }

    /// `[0; X_S]` over the full state.
    pub fn port_allocation(&self) -> DMatrix<f64> {
        let n = self.state_dim();
        let mut b = DMatrix::zeros(n, self.port_count());
        b.view_mut(
            (self.magnetic_dim(), 0),
            (self.electric_dim(), self.port_count()),
        )
        .copy_from(&self.port_matrix);
        b
    }

    /// The device as a quasilinear PH-DAE.
    pub fn to_system(&self) -> PhDaeSystem {
        let n = self.state_dim();
        let nf = self.magnetic_dim();
        let ne = self.electric_dim();
        let c = self.restricted_curl();

        let mut e_mat = DMatrix::zeros(n, n);
        for i in 0..nf {
            e_mat[(i, i)] = self.m_mu[i];
        }
        for i in 0..ne {
            e_mat[(nf + i, nf + i)] = self.m_eps[i];
        }

        let mut j_mat = DMatrix::zeros(n, n);
        j_mat.view_mut((0, nf), (nf, ne)).copy_from(&(-&c));
        j_mat.view_mut((nf, 0), (ne, nf)).copy_from(&c.transpose());

        let mut r_mat = DMatrix::zeros(n, n);
        for i in 0..ne {
            r_mat[(nf + i, nf + i)] = self.m_sigma[i];
        }

        let e_for_h = e_mat.clone();
        let e_for_grad = e_mat.clone();
        let mut labels = Vec::with_capacity(n);
        for f in 0..nf {
            let (axis, i, j, k) = self.grid.facet_origin(f);
            labels.push(format!("faraday({}-facet {i},{j},{k})", axis.letter()));
        }
        for idx in 0..ne {
            let (axis, i, j, k) = self.grid.edge_origin(self.retained_edges[idx]);
            labels.push(format!("ampere({}-edge {i},{j},{k})", axis.letter()));
        }

        PhDaeSystem::builder(n, self.port_count())
            .e_matrix(e_mat)
            .j_matrix(j_mat)
            .b_matrix(self.port_allocation())
            .linear_effort(DMatrix::identity(n, n))
            .linear_resistive(r_mat)
            .hamiltonian(move |x: &DVector<f64>| 0.5 * x.dot(&(&e_for_h * x)))
            .hamiltonian_grad(move |x: &DVector<f64>| &e_for_grad * x)
            .row_labels(labels)
            .build()
            .expect("device dimensions are consistent")
    }
}

/// Parsed device description file.
#[derive(Debug, Clone)]
pub struct DeviceDescription {
    pub id: String,
    pub dims: (usize, usize, usize),
    pub spacings: (f64, f64, f64),
    pub eps: MaterialSpec,
    pub mu: MaterialSpec,
    pub sigma: MaterialSpec,
    pub ports: Vec<(String, Vec<PortEdgeSpec>)>,
}

/// Port edge tokens: raw global index `+12` / `-7`, or an axis-aligned
/// specifier `+x:i:j:k`.
#[derive(Debug, Clone, PartialEq)]
pub enum PortEdgeSpec {
    Indexed { index: usize, sign: f64 },
    Path {
        axis: Axis,
        i: usize,
        j: usize,
        k: usize,
        sign: f64,
    },
}

impl DeviceDescription {
    pub fn build(&self) -> Result<FitDevice, StructureError> {
        let grid = build_grid(self.dims, self.spacings)?;
        let mut ports = Vec::with_capacity(self.ports.len());
        for (name, specs) in &self.ports {
            let mut edges = Vec::with_capacity(specs.len());
            for spec in specs {
                let (index, sign) = match spec {
                    PortEdgeSpec::Indexed { index, sign } => (*index, *sign),
                    PortEdgeSpec::Path { axis, i, j, k, sign } => {
                        let index = grid.edge_index(*axis, *i, *j, *k).ok_or_else(|| {
                            StructureError::Invalid(format!(
                                "port {name}: edge {}:{i}:{j}:{k} out of range",
                                axis.letter()
                            ))
                        })?;
                        (index, *sign)
                    }
                };
                edges.push((index, sign));
            }
            ports.push(PortPath {
                name: name.clone(),
                edges,
            });
        }
        assemble_device(
            self.id.clone(),
            grid,
            self.eps.clone(),
            self.mu.clone(),
            self.sigma.clone(),
            &ports,
        )
    }
}

/// Parses a key-value device file:
///
/// ```text
/// id dev
/// dims 1 2 2
/// spacing 1.0 1.0 1.0
/// eps 1.0            # or: eps_cells v0 v1 ... (one value per cell)
/// mu 1.0
/// sigma 0.1
/// port P1 +x:0:1:1   # or signed raw edge indices: +12 -13
/// ```
pub fn parse_device_file(text: &str) -> Result<DeviceDescription, ParseError> {
    let mut id = None;
    let mut dims = None;
    let mut spacings = None;
    let mut eps = None;
    let mut mu = None;
    let mut sigma = None;
    let mut ports: Vec<(String, Vec<PortEdgeSpec>)> = Vec::new();

    for (idx, raw_line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw_line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        let key = tokens[0].to_ascii_lowercase();
        let args = &tokens[1..];
        match key.as_str() {
            "id" => {
                id = Some(
                    args.first()
                        .ok_or_else(|| ParseError::new(lineno, "id needs a value"))?
                        .to_string(),
                );
            }
            "dims" => {
                if args.len() != 3 {
                    return Err(ParseError::new(lineno, "dims needs three integers"));
                }
                let mut v = [0usize; 3];
                for (slot, tok) in v.iter_mut().zip(args) {
                    *slot = tok
                        .parse()
                        .map_err(|_| ParseError::new(lineno, format!("invalid integer `{tok}`")))?;
                }
                dims = Some((v[0], v[1], v[2]));
            }
            "spacing" | "spacings" => {
                if args.len() != 3 {
                    return Err(ParseError::new(lineno, "spacing needs three values"));
                }
                let mut v = [0f64; 3];
                for (slot, tok) in v.iter_mut().zip(args) {
                    *slot = parse_f64(tok, lineno)?;
                }
                spacings = Some((v[0], v[1], v[2]));
            }
            "eps" => eps = Some(MaterialSpec::Uniform(parse_single(args, lineno)?)),
            "mu" => mu = Some(MaterialSpec::Uniform(parse_single(args, lineno)?)),
            "sigma" => sigma = Some(MaterialSpec::Uniform(parse_single(args, lineno)?)),
            "eps_cells" => eps = Some(MaterialSpec::PerCell(parse_table(args, lineno)?)),
            "mu_cells" => mu = Some(MaterialSpec::PerCell(parse_table(args, lineno)?)),
            "sigma_cells" => sigma = Some(MaterialSpec::PerCell(parse_table(args, lineno)?)),
            "port" => {
                let name = args
                    .first()
                    .ok_or_else(|| ParseError::new(lineno, "port needs a name"))?
                    .to_string();
                if args.len() < 2 {
                    return Err(ParseError::new(lineno, "port needs at least one edge"));
                }
                let mut specs = Vec::new();
                for tok in &args[1..] {
                    specs.push(parse_port_edge(tok, lineno)?);
                }
                ports.push((name, specs));
            }
            other => {
                return Err(ParseError::new(lineno, format!("unknown key `{other}`")));
            }
        }
    }

    Ok(DeviceDescription {
        id: id.ok_or_else(|| ParseError::new(0, "device file is missing `id`"))?,
        dims: dims.ok_or_else(|| ParseError::new(0, "device file is missing `dims`"))?,
        spacings: spacings.ok_or_else(|| ParseError::new(0, "device file is missing `spacing`"))?,
        eps: eps.ok_or_else(|| ParseError::new(0, "device file is missing `eps`"))?,
        mu: mu.ok_or_else(|| ParseError::new(0, "device file is missing `mu`"))?,
        sigma: sigma.ok_or_else(|| ParseError::new(0, "device file is missing `sigma`"))?,
        ports,
    })
}

fn parse_f64(tok: &str, lineno: usize) -> Result<f64, ParseError> {
    tok.parse()
        .map_err(|_| ParseError::new(lineno, format!("invalid number `{tok}`")))
}

fn parse_single(args: &[&str], lineno: usize) -> Result<f64, ParseError> {
    if args.len() != 1 {
        return Err(ParseError::new(lineno, "expected exactly one value"));
    }
    parse_f64(args[0], lineno)
}

fn parse_table(args: &[&str], lineno: usize) -> Result<Vec<f64>, ParseError> {
    args.iter().map(|t| parse_f64(t, lineno)).collect()
}

fn parse_port_edge(tok: &str, lineno: usize) -> Result<PortEdgeSpec, ParseError> {
    let (sign, body) = match tok.chars().next() {
        Some('+') => (1.0, &tok[1..]),
        Some('-') => (-1.0, &tok[1..]),
        _ => (1.0, tok),
    };
    if let Ok(index) = body.parse::<usize>() {
        return Ok(PortEdgeSpec::Indexed { index, sign });
    }
    let parts: Vec<&str> = body.split(':').collect();
    if parts.len() != 4 {
        return Err(ParseError::new(
            lineno,
            format!("invalid port edge `{tok}` (expected +<index> or +<axis>:i:j:k)"),
        ));
    }
    let axis = match parts[0].to_ascii_lowercase().as_str() {
        "x" => Axis::X,
        "y" => Axis::Y,
        "z" => Axis::Z,
        other => {
            return Err(ParseError::new(lineno, format!("invalid axis `{other}`")));
        }
    };
    let mut coords = [0usize; 3];
    for (slot, part) in coords.iter_mut().zip(&parts[1..]) {
        *slot = part
            .parse()
            .map_err(|_| ParseError::new(lineno, format!("invalid coordinate `{part}`")))?;
    }
    Ok(PortEdgeSpec::Path {
        axis,
        i: coords[0],
        j: coords[1],
        k: coords[2],
        sign,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::energy_audit;
    use crate::integrate::{integrate, Scheme, SolverConfig};
    use crate::system::validate_structure;
    use rand_chacha::rand_core::SeedableRng;

    fn unit_device(dims: (usize, usize, usize), sigma: f64, ports: &[PortPath]) -> FitDevice {
        let grid = build_grid(dims, (1.0, 1.0, 1.0)).unwrap();
        assemble_device(
            "dev",
            grid,
            MaterialSpec::Uniform(1.0),
            MaterialSpec::Uniform(1.0),
            MaterialSpec::Uniform(sigma),
            ports,
        )
        .unwrap()
    }

    fn random_state(n: usize, seed: u64) -> DVector<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        DVector::from_fn(n, |_, _| crate::system::standard_normal(&mut rng))
    }

    #[test]
    fn device_structure_is_exactly_skew() {
        let dev = unit_device((2, 2, 2), 0.5, &[]);
        let sys = dev.to_system();
        let report = validate_structure(&sys, 20, 1e-10);
        assert!(report.passed(), "{report}");
        assert_eq!(report.skew_violation, 0.0);
    }

    #[test]
    fn conservative_device_preserves_energy_with_midpoint() {
        let dev = unit_device((3, 3, 3), 0.0, &[]);
        let sys = dev.to_system();
        let x0 = random_state(sys.dim_state(), 7);
        let cfg = SolverConfig::new(Scheme::Midpoint, 1e-2, 1.0);
        let zero = |_t: f64| DVector::zeros(0);
        let traj = integrate(&sys, &cfg, &x0, &zero).unwrap();
        let h0 = sys.hamiltonian(&x0);
        let drift = traj
            .states
            .iter()
            .map(|x| (sys.hamiltonian(x) - h0).abs())
            .fold(0.0f64, f64::max);
        assert!(drift <= 1e-10 * h0, "relative drift {}", drift / h0);
    }

    #[test]
    fn lossy_device_dissipates_strictly() {
        let dev = unit_device((2, 2, 2), 0.4, &[]);
        let sys = dev.to_system();
        let x0 = random_state(sys.dim_state(), 3);
        let cfg = SolverConfig::new(Scheme::Midpoint, 1e-2, 0.5);
        let zero = |_t: f64| DVector::zeros(0);
        let traj = integrate(&sys, &cfg, &x0, &zero).unwrap();
        let ledger = energy_audit(&sys, &traj).unwrap();
        for w in ledger.hamiltonian_samples.windows(2) {
            assert!(w[1] < w[0], "H must decrease: {} !< {}", w[1], w[0]);
        }
        assert!(ledger.dissipation_inequality_ok(1e-12));
    }

    #[test]
    fn conservative_spectrum_matches_curl_singular_values() {
        // Raw single-cell complex: eigenvalues of [[0, -C], [C^T, 0]] are
        // +-i sigma(C) plus zeros.
        let grid = build_grid((1, 1, 1), (1.0, 1.0, 1.0)).unwrap();
        let c = grid.curl().to_dense();
        let (nf, ne) = (c.nrows(), c.ncols());
        let mut j = DMatrix::zeros(nf + ne, nf + ne);
        j.view_mut((0, nf), (nf, ne)).copy_from(&(-&c));
        j.view_mut((nf, 0), (ne, nf)).copy_from(&c.transpose());
        let eigen: Vec<f64> = j
            .complex_eigenvalues()
            .iter()
            .map(|l| l.im.abs())
            .filter(|v| *v > 1e-9)
            .collect();
        let singular: Vec<f64> = c
            .svd(false, false)
            .singular_values
            .iter()
            .copied()
            .filter(|v| *v > 1e-9)
            .collect();
        let mut eigen_sorted = eigen;
        eigen_sorted.sort_by(f64::total_cmp);
        let mut expected: Vec<f64> = singular.iter().flat_map(|s| [*s, *s]).collect();
        expected.sort_by(f64::total_cmp);
        assert_eq!(eigen_sorted.len(), expected.len());
        for (a, b) in eigen_sorted.iter().zip(&expected) {
            assert!((a - b).abs() <= 1e-8, "{a} vs {b}");
        }

        // Same statement for the PEC-restricted curl on a larger grid.
        let dev = unit_device((2, 2, 2), 0.0, &[]);
        let sys = dev.to_system();
        let eig: Vec<f64> = sys
            .j_matrix()
            .clone()
            .complex_eigenvalues()
            .iter()
            .map(|l| l.im.abs())
            .filter(|v| *v > 1e-9)
            .collect();
        let sv: Vec<f64> = dev
            .restricted_curl()
            .svd(false, false)
            .singular_values
            .iter()
            .copied()
            .filter(|v| *v > 1e-9)
            .collect();
        let mut eig = eig;
        eig.sort_by(f64::total_cmp);
        let mut expected: Vec<f64> = sv.iter().flat_map(|s| [*s, *s]).collect();
        expected.sort_by(f64::total_cmp);
        assert_eq!(eig.len(), expected.len());
        for (a, b) in eig.iter().zip(&expected) {
            assert!((a - b).abs() <= 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn boundary_port_edge_is_rejected() {
        let grid = build_grid((1, 2, 2), (1.0, 1.0, 1.0)).unwrap();
        let boundary_edge = grid.edge_index(Axis::X, 0, 0, 0).unwrap();
        let err = assemble_device(
            "dev",
            grid,
            MaterialSpec::Uniform(1.0),
            MaterialSpec::Uniform(1.0),
            MaterialSpec::Uniform(0.0),
            &[PortPath {
                name: "P1".into(),
                edges: vec![(boundary_edge, 1.0)],
            }],
        )
        .unwrap_err();
        assert!(matches!(err, StructureError::PortOnBoundary { .. }));
    }

    #[test]
    fn device_file_round_trip() {
        let text = "\
# benchmark device
id dev
dims 1 2 2
spacing 1.0 1.0 1.0
eps 1.0
mu 1.0
sigma 0.1
port P1 +x:0:1:1
";
        let desc = parse_device_file(text).unwrap();
        assert_eq!(desc.id, "dev");
        let dev = desc.build().unwrap();
        assert_eq!(dev.port_count(), 1);
        assert_eq!(dev.electric_dim(), 1);
        assert_eq!(dev.magnetic_dim(), 20);
        // X_S is the signed indicator of the single interior edge.
        assert_eq!(dev.port_matrix[(0, 0)], 1.0);
    }

    #[test]
    fn per_cell_material_table_is_averaged() {
        let grid = build_grid((2, 1, 1), (1.0, 1.0, 1.0)).unwrap();
        let dev = assemble_device(
            "dev",
            grid,
            MaterialSpec::Uniform(1.0),
            MaterialSpec::PerCell(vec![1.0, 3.0]),
            MaterialSpec::Uniform(0.0),
            &[],
        )
        .unwrap();
        // The x-facet between the two cells averages mu to 2.
        let f = dev.grid.facet_index(Axis::X, 1, 0, 0).unwrap();
        assert_eq!(dev.m_mu[f], 2.0);
    }

    #[test]
    fn wrong_table_length_is_rejected() {
        let grid = build_grid((2, 1, 1), (1.0, 1.0, 1.0)).unwrap();
        assert!(assemble_device(
            "dev",
            grid,
            MaterialSpec::PerCell(vec![1.0]),
            MaterialSpec::Uniform(1.0),
            MaterialSpec::Uniform(0.0),
            &[],
        )
        .is_err());
    }
}
