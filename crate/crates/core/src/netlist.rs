//! SPICE-like netlist front end.
//!
//! Line-oriented grammar, case-insensitive element letter, `#` or `*`
//! comments, `.END` terminates:
//!
//! ```text
//! R<name> n+ n- <value>
//! C<name> n+ n- <value> [Q=<model>]
//! L<name> n+ n- <value> [PHI=<model>]
//! V<name> n+ n- DC <v> | SIN <amp> <freq_hz> [<phase_rad>]
//! I<name> n+ n- DC <v> | SIN <amp> <freq_hz> [<phase_rad>]
//! G<name> n+ n- MODEL <model> <params...>        (nonlinear resistor)
//! E<name> n+ n- <device-id>                       (field-device port branch)
//! ```
//!
//! Nodes are non-negative integers; node 0 is ground and must appear. The
//! first listed node is the positive terminal. Parallel branches are allowed
//! (the graph is a multigraph); self-loops are not.

use std::collections::HashMap;

use nalgebra::DMatrix;

use crate::error::ParseError;

/// Element classes that own an incidence matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ElementClass {
    Capacitor,
    Inductor,
    Resistor,
    VoltageSource,
    CurrentSource,
    FieldPort,
}

impl ElementClass {
    pub fn letter(&self) -> char {
        match self {
            ElementClass::Capacitor => 'C',
            ElementClass::Inductor => 'L',
            ElementClass::Resistor => 'R',
            ElementClass::VoltageSource => 'V',
            ElementClass::CurrentSource => 'I',
            ElementClass::FieldPort => 'E',
        }
    }
}

/// Independent source waveform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SourceSpec {
    Dc(f64),
    Sin {
        amplitude: f64,
        freq_hz: f64,
        phase_rad: f64,
    },
}

impl SourceSpec {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            SourceSpec::Dc(v) => *v,
            SourceSpec::Sin {
                amplitude,
                freq_hz,
                phase_rad,
            } => amplitude * (std::f64::consts::TAU * freq_hz * t + phase_rad).sin(),
        }
    }
}

/// Raw model reference; resolution happens in the model library.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelRef {
    pub name: String,
    pub params: Vec<f64>,
}

/// Per-element payload.
#[derive(Debug, Clone, PartialEq)]
pub enum ElementKind {
    Capacitor {
        value: f64,
        charge_model: Option<ModelRef>,
    },
    Inductor {
        value: f64,
        flux_model: Option<ModelRef>,
    },
    Resistor {
        value: f64,
    },
    NonlinearResistor {
        model: ModelRef,
    },
    VoltageSource(SourceSpec),
    CurrentSource(SourceSpec),
    FieldPort {
        device_id: String,
    },
}

impl ElementKind {
    pub fn class(&self) -> ElementClass {
        match self {
            ElementKind::Capacitor { .. } => ElementClass::Capacitor,
            ElementKind::Inductor { .. } => ElementClass::Inductor,
            ElementKind::Resistor { .. } | ElementKind::NonlinearResistor { .. } => {
                ElementClass::Resistor
            }
            ElementKind::VoltageSource(_) => ElementClass::VoltageSource,
            ElementKind::CurrentSource(_) => ElementClass::CurrentSource,
            ElementKind::FieldPort { .. } => ElementClass::FieldPort,
        }
    }
}

/// One netlist branch, oriented from `pos` to `neg` (raw node ids).
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub name: String,
    pub kind: ElementKind,
    pub pos: u32,
    pub neg: u32,
}

impl Branch {
    pub fn class(&self) -> ElementClass {
        self.kind.class()
    }
}

/// Parsed circuit as a multigraph with per-class reduced incidence matrices
/// (the ground row is deleted).
#[derive(Debug, Clone, PartialEq)]
pub struct CircuitGraph {
    /// Non-ground nodes in ascending raw-id order; row `i` of every
    /// incidence matrix belongs to `node_ids[i]`.
    node_ids: Vec<u32>,
    branches: Vec<Branch>,
}

impl CircuitGraph {
    pub fn node_count(&self) -> usize {
        self.node_ids.len()
    }

    pub fn node_ids(&self) -> &[u32] {
        &self.node_ids
    }

    pub fn node_index(&self, raw: u32) -> Option<usize> {
        if raw == 0 {
            return None;
        }
        self.node_ids.binary_search(&raw).ok()
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn branches_of(&self, class: ElementClass) -> Vec<&Branch> {
        self.branches.iter().filter(|b| b.class() == class).collect()
    }

    pub fn count_of(&self, class: ElementClass) -> usize {
        self.branches.iter().filter(|b| b.class() == class).count()
    }

    /// Reduced incidence matrix of one element class; columns follow file
    /// order, +1 at the positive node row, -1 at the negative node row,
    /// ground rows absent.
    pub fn incidence(&self, class: ElementClass) -> DMatrix<f64> {
        let branches = self.branches_of(class);
        let mut a = DMatrix::zeros(self.node_count(), branches.len());
        for (col, branch) in branches.iter().enumerate() {
            if let Some(row) = self.node_index(branch.pos) {
                a[(row, col)] = 1.0;
            }
            if let Some(row) = self.node_index(branch.neg) {
                a[(row, col)] = -1.0;
            }
        }
        a
    }

    pub fn a_c(&self) -> DMatrix<f64> {
        self.incidence(ElementClass::Capacitor)
    }

    pub fn a_l(&self) -> DMatrix<f64> {
        self.incidence(ElementClass::Inductor)
    }

    pub fn a_r(&self) -> DMatrix<f64> {
        self.incidence(ElementClass::Resistor)
    }

    pub fn a_v(&self) -> DMatrix<f64> {
        self.incidence(ElementClass::VoltageSource)
    }

    pub fn a_i(&self) -> DMatrix<f64> {
        self.incidence(ElementClass::CurrentSource)
    }

    pub fn a_e(&self) -> DMatrix<f64> {
        self.incidence(ElementClass::FieldPort)
    }

    /// Serializes back to netlist text; `parse(to_netlist(g)) == g`.
    pub fn to_netlist(&self) -> String {
        let mut out = String::new();
        for branch in &self.branches {
            let head = format!("{} {} {}", branch.name, branch.pos, branch.neg);
            let line = match &branch.kind {
                ElementKind::Resistor { value } => format!("{head} {value:e}"),
                ElementKind::Capacitor {
                    value,
                    charge_model,
                } => match charge_model {
                    Some(m) => format!("{head} {value:e} Q={}", format_model(m)),
                    None => format!("{head} {value:e}"),
                },
                ElementKind::Inductor { value, flux_model } => match flux_model {
                    Some(m) => format!("{head} {value:e} PHI={}", format_model(m)),
                    None => format!("{head} {value:e}"),
                },
                ElementKind::NonlinearResistor { model } => {
                    let params = model
                        .params
                        .iter()
                        .map(|p| format!("{p:e}"))
                        .collect::<Vec<_>>()
                        .join(" ");
                    format!("{head} MODEL {} {params}", model.name)
                }
                ElementKind::VoltageSource(spec) | ElementKind::CurrentSource(spec) => match spec {
                    SourceSpec::Dc(v) => format!("{head} DC {v:e}"),
                    SourceSpec::Sin {
                        amplitude,
                        freq_hz,
                        phase_rad,
                    } => format!("{head} SIN {amplitude:e} {freq_hz:e} {phase_rad:e}"),
                },
                ElementKind::FieldPort { device_id } => format!("{head} {device_id}"),
            };
            out.push_str(&line);
            out.push('\n');
        }
        out.push_str(".END\n");
        out
    }
}

fn format_model(m: &ModelRef) -> String {
    let mut s = m.name.clone();
    for p in &m.params {
        s.push(':');
        s.push_str(&format!("{p:e}"));
    }
    s
}

/// Parses netlist text into a [`CircuitGraph`].
pub fn parse(text: &str) -> Result<CircuitGraph, ParseError> {
    let mut branches: Vec<Branch> = Vec::new();
    let mut seen_names: HashMap<String, usize> = HashMap::new();

    'lines: for (idx, raw_line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw_line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with('*') {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        let head = tokens[0];
        if head.eq_ignore_ascii_case(".end") {
            break 'lines;
        }
        let letter = head.chars().next().unwrap().to_ascii_uppercase();
        let name = head.to_string();
        let key = name.to_ascii_uppercase();
        if let Some(first) = seen_names.get(&key) {
            return Err(ParseError::new(
                lineno,
                format!("duplicate element name `{name}` (first defined on line {first})"),
            ));
        }
        seen_names.insert(key, lineno);

        if tokens.len() < 4 {
            return Err(ParseError::new(
                lineno,
                format!("element `{name}` needs at least two nodes and a value"),
            ));
        }
        let pos = parse_node(tokens[1], lineno)?;
        let neg = parse_node(tokens[2], lineno)?;
        if pos == neg {
            return Err(ParseError::new(
                lineno,
                format!("element `{name}` is a self-loop (both terminals on node {pos})"),
            ));
        }
        let rest = &tokens[3..];

        let kind = match letter {
            'R' => ElementKind::Resistor {
                value: parse_positive_value(rest[0], "resistance", lineno)?,
            },
            'C' => ElementKind::Capacitor {
                value: parse_positive_value(rest[0], "capacitance", lineno)?,
                charge_model: parse_model_suffix(&rest[1..], "Q=", lineno)?,
            },
            'L' => ElementKind::Inductor {
                value: parse_positive_value(rest[0], "inductance", lineno)?,
                flux_model: parse_model_suffix(&rest[1..], "PHI=", lineno)?,
            },
            'V' => ElementKind::VoltageSource(parse_source(rest, lineno)?),
            'I' => ElementKind::CurrentSource(parse_source(rest, lineno)?),
            'G' => {
                if !rest[0].eq_ignore_ascii_case("model") || rest.len() < 2 {
                    return Err(ParseError::new(
                        lineno,
                        format!("nonlinear resistor `{name}` expects `MODEL <model> <params...>`"),
                    ));
                }
                let params = rest[2..]
                    .iter()
                    .map(|t| parse_value(t, lineno))
                    .collect::<Result<Vec<_>, _>>()?;
                ElementKind::NonlinearResistor {
                    model: ModelRef {
                        name: rest[1].to_ascii_uppercase(),
                        params,
                    },
                }
            }
            'E' => ElementKind::FieldPort {
                device_id: rest[0].to_string(),
            },
            other => {
                return Err(ParseError::new(
                    lineno,
                    format!("unknown element class `{other}`"),
                ));
            }
        };
        branches.push(Branch {
            name,
            kind,
            pos,
            neg,
        });
    }

    if branches.is_empty() {
        return Err(ParseError::new(0, "netlist contains no elements"));
    }
    if !branches.iter().any(|b| b.pos == 0 || b.neg == 0) {
        return Err(ParseError::new(0, "no ground node (node 0 never appears)"));
    }

    let mut node_ids: Vec<u32> = branches
        .iter()
        .flat_map(|b| [b.pos, b.neg])
        .filter(|n| *n != 0)
        .collect();
    node_ids.sort_unstable();
    node_ids.dedup();

    Ok(CircuitGraph { node_ids, branches })
}

fn parse_node(token: &str, lineno: usize) -> Result<u32, ParseError> {
    token.parse::<u32>().map_err(|_| {
        ParseError::new(
            lineno,
            format!("invalid node `{token}` (expected a non-negative integer)"),
        )
    })
}

fn parse_value(token: &str, lineno: usize) -> Result<f64, ParseError> {
    token
        .parse::<f64>()
        .map_err(|_| ParseError::new(lineno, format!("invalid number `{token}`")))
}

fn parse_positive_value(token: &str, what: &str, lineno: usize) -> Result<f64, ParseError> {
    let v = parse_value(token, lineno)?;
    if v <= 0.0 {
        return Err(ParseError::new(
            lineno,
            format!("{what} must be positive, got {v}"),
        ));
    }
    Ok(v)
}

/// `Q=NAME:p1:p2` / `PHI=NAME:p1:p2` suffixes on storage elements.
fn parse_model_suffix(
    rest: &[&str],
    prefix: &str,
    lineno: usize,
) -> Result<Option<ModelRef>, ParseError> {
    let Some(token) = rest.first() else {
        return Ok(None);
    };
    let upper = token.to_ascii_uppercase();
    if !upper.starts_with(prefix) {
        return Err(ParseError::new(
            lineno,
            format!("unexpected token `{token}` (expected `{prefix}<model>`)"),
        ));
    }
    let spec = &upper[prefix.len()..];
    let mut parts = spec.split(':');
    let name = parts
        .next()
        .filter(|s| !s.is_empty())
        .ok_or_else(|| ParseError::new(lineno, format!("empty model in `{token}`")))?
        .to_string();
    let params = parts
        .map(|p| parse_value(p, lineno))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Some(ModelRef { name, params }))
}

fn parse_source(rest: &[&str], lineno: usize) -> Result<SourceSpec, ParseError> {
    match rest[0].to_ascii_uppercase().as_str() {
        "DC" => {
            if rest.len() < 2 {
                return Err(ParseError::new(lineno, "DC source needs a value"));
            }
            Ok(SourceSpec::Dc(parse_value(rest[1], lineno)?))
        }
        "SIN" => {
            if rest.len() < 3 {
                return Err(ParseError::new(
                    lineno,
                    "SIN source needs amplitude and frequency",
                ));
            }
            Ok(SourceSpec::Sin {
                amplitude: parse_value(rest[1], lineno)?,
                freq_hz: parse_value(rest[2], lineno)?,
                phase_rad: if rest.len() > 3 {
                    parse_value(rest[3], lineno)?
                } else {
                    0.0
                },
            })
        }
        other => Err(ParseError::new(
            lineno,
            format!("unknown source kind `{other}` (expected DC or SIN)"),
        )),
    }
}
