//! Topological soundness and DAE-index diagnostics on the circuit graph.
//!
//! All tests are exact graph algorithms (union-find and spanning forests) on
//! the multigraph including ground; no floating-point rank decisions. The
//! rank conditions on the incidence matrices are equivalent to these graph
//! conditions.

use crate::error::ModelError;
use crate::netlist::{Branch, CircuitGraph, ElementClass};

/// Algebraic index of the assembled network equations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DaeIndex {
    One,
    Two,
}

impl DaeIndex {
    pub fn as_u8(&self) -> u8 {
        match self {
            DaeIndex::One => 1,
            DaeIndex::Two => 2,
        }
    }
}

/// Soundness and index findings, with witness branch names where a finding
/// is positive.
#[derive(Debug, Clone)]
pub struct TopologyReport {
    pub connected: bool,
    pub v_loop_free: bool,
    pub i_cutset_free: bool,
    pub li_cutset_present: bool,
    pub cv_loop_present: bool,
    /// A loop of capacitors only; does not raise the index.
    pub c_loop_present: bool,
    /// Defined only when the soundness checks pass.
    pub index: Option<DaeIndex>,
    pub v_loop_witness: Vec<String>,
    pub i_cutset_witness: Vec<String>,
    pub li_cutset_witness: Vec<String>,
    pub cv_loop_witness: Vec<String>,
}

impl TopologyReport {
    pub fn sound(&self) -> bool {
        self.connected && self.v_loop_free && self.i_cutset_free
    }
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent[ra] = rb;
        true
    }

    fn connected(&mut self, a: usize, b: usize) -> bool {
        self.find(a) == self.find(b)
    }
}

/// Node slot in the union-find universe: ground is slot 0, non-ground node
/// `i` is slot `i + 1`.
fn slot(g: &CircuitGraph, raw: u32) -> usize {
    match g.node_index(raw) {
        Some(i) => i + 1,
        None => 0,
    }
}

/// Checks connectivity, absence of voltage-source loops and absence of
/// current-source cutsets.
pub fn check_soundness(g: &CircuitGraph) -> TopologyReport {
    let universe = g.node_count() + 1;

    let mut full = UnionFind::new(universe);
    for b in g.branches() {
        full.union(slot(g, b.pos), slot(g, b.neg));
    }
    let root = full.find(0);
    let connected = (0..universe).all(|s| full.find(s) == root);

    // V-branches must form a forest.
    let mut v_forest = UnionFind::new(universe);
    let mut v_loop_witness = Vec::new();
    for b in g.branches_of(ElementClass::VoltageSource) {
        if !v_forest.union(slot(g, b.pos), slot(g, b.neg)) {
            v_loop_witness.push(b.name.clone());
        }
    }

    // Every I-branch must be bridged by non-I branches, otherwise the
    // I-branches crossing the gap form a cutset.
    let mut non_i = UnionFind::new(universe);
    for b in g.branches() {
        if b.class() != ElementClass::CurrentSource {
            non_i.union(slot(g, b.pos), slot(g, b.neg));
        }
    }
    let mut i_cutset_witness = Vec::new();
    for b in g.branches_of(ElementClass::CurrentSource) {
        if !non_i.connected(slot(g, b.pos), slot(g, b.neg)) {
            i_cutset_witness.push(b.name.clone());
        }
    }

    TopologyReport {
        connected,
        v_loop_free: v_loop_witness.is_empty(),
        i_cutset_free: i_cutset_witness.is_empty(),
        li_cutset_present: false,
        cv_loop_present: false,
        c_loop_present: false,
        index: None,
        v_loop_witness,
        i_cutset_witness,
        li_cutset_witness: Vec::new(),
        cv_loop_witness: Vec::new(),
    }
}

/// Classifies the index: one iff the graph has neither LI-cutsets nor
/// CV-loops, where pure C-loops are excluded; two otherwise. Requires a
/// sound graph.
pub fn classify_index(g: &CircuitGraph) -> Result<TopologyReport, ModelError> {
    let mut report = check_soundness(g);
    if !report.sound() {
        let mut reasons = Vec::new();
        if !report.connected {
            reasons.push("graph is not connected".to_string());
        }
        if !report.v_loop_free {
            reasons.push(format!("V-loop through {}", report.v_loop_witness.join(", ")));
        }
        if !report.i_cutset_free {
            reasons.push(format!(
                "I-cutset through {}",
                report.i_cutset_witness.join(", ")
            ));
        }
        return Err(ModelError::Unsound(reasons.join("; ")));
    }

    let universe = g.node_count() + 1;

    // LI-cutset: removing all L and I branches must not split any component.
    let mut non_li = UnionFind::new(universe);
    for b in g.branches() {
        if !matches!(
            b.class(),
            ElementClass::Inductor | ElementClass::CurrentSource
        ) {
            non_li.union(slot(g, b.pos), slot(g, b.neg));
        }
    }
    for b in g.branches() {
        if matches!(
            b.class(),
            ElementClass::Inductor | ElementClass::CurrentSource
        ) && !non_li.connected(slot(g, b.pos), slot(g, b.neg))
        {
            report.li_cutset_witness.push(b.name.clone());
        }
    }
    report.li_cutset_present = !report.li_cutset_witness.is_empty();

    // CV-loop: insert V branches into a spanning forest of the C branches.
    // A V branch whose endpoints are already connected closes a loop that
    // contains at least that V branch; pure C-loops are tracked separately.
    let mut cv_forest = UnionFind::new(universe);
    let mut forest_adjacency: Vec<Vec<(usize, usize)>> = vec![Vec::new(); universe];
    let mut forest_branches: Vec<&Branch> = Vec::new();

    for b in g.branches_of(ElementClass::Capacitor) {
        let (a, c) = (slot(g, b.pos), slot(g, b.neg));
        if !add_forest_edge(
            &mut cv_forest,
            &mut forest_adjacency,
            &mut forest_branches,
            b,
            a,
            c,
        ) {
            report.c_loop_present = true;
        }
    }
    for b in g.branches_of(ElementClass::VoltageSource) {
        let (a, c) = (slot(g, b.pos), slot(g, b.neg));
        if cv_forest.connected(a, c) {
            report.cv_loop_present = true;
            let mut witness = vec![b.name.clone()];
            witness.extend(
                forest_path(&forest_adjacency, a, c)
                    .into_iter()
                    .map(|id| forest_branches[id].name.clone()),
            );
            report.cv_loop_witness = witness;
            break;
        }
        add_forest_edge(
            &mut cv_forest,
            &mut forest_adjacency,
            &mut forest_branches,
            b,
            a,
            c,
        );
    }

    report.index = Some(if report.li_cutset_present || report.cv_loop_present {
        DaeIndex::Two
    } else {
        DaeIndex::One
    });
    Ok(report)
}

fn add_forest_edge<'a>(
    forest: &mut UnionFind,
    adjacency: &mut [Vec<(usize, usize)>],
    branches: &mut Vec<&'a Branch>,
    b: &'a Branch,
    a: usize,
    c: usize,
) -> bool {
    if forest.union(a, c) {
        let id = branches.len();
        branches.push(b);
        adjacency[a].push((c, id));
        adjacency[c].push((a, id));
        true
    } else {
        false
    }
}

/// Branch ids along the unique forest path between two connected slots.
fn forest_path(adjacency: &[Vec<(usize, usize)>], from: usize, to: usize) -> Vec<usize> {
    let mut prev: Vec<Option<(usize, usize)>> = vec![None; adjacency.len()];
    let mut queue = std::collections::VecDeque::new();
    let mut seen = vec![false; adjacency.len()];
    queue.push_back(from);
    seen[from] = true;
    while let Some(node) = queue.pop_front() {
        if node == to {
            break;
        }
        for &(next, id) in &adjacency[node] {
            if !seen[next] {
                seen[next] = true;
                prev[next] = Some((node, id));
                queue.push_back(next);
            }
        }
    }
    let mut path = Vec::new();
    let mut cursor = to;
    while let Some((parent, id)) = prev[cursor] {
        path.push(id);
        cursor = parent;
    }
    path.reverse();
    path
}
