//! Cell-network problem model: lumped heat capacities joined by thermal
//! resistances, with optional per-cell sources and pinned (fixed-temperature)
//! boundary cells.
//!
//! A [`CellNetwork`] is the physical problem definition. [`CellNetwork::assemble`]
//! turns it into the [`CoefficientSet`] of the linear ODE system
//!
//! ```text
//! du_i/dt = sum_{j in n(i)} m_ij (u_j - u_i) ... = sum_j m_ij u_j + m_ii u_i + Q_i
//! m_ij = 1 / (R_ij C_i),     m_ii = -sum_{j in n(i)} m_ij
//! ```
//!
//! which every integrator and reference solver in this crate consumes.
//!
//! Units: capacities in J/K, resistances in K/W, sources in K/s,
//! temperatures in K, time in seconds.

use std::collections::HashSet;
use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors reported by network validation and the problem builders.
#[derive(Debug, Error, PartialEq)]
pub enum NetworkError {
    #[error("cell {cell}: non-positive capacity {value}")]
    NonPositiveCapacity { cell: usize, value: f64 },
    #[error("cell {cell}: non-finite {field}")]
    NonFiniteCellValue { cell: usize, field: &'static str },
    #[error("edge {edge}: non-positive resistance {value}")]
    NonPositiveResistance { edge: usize, value: f64 },
    #[error("edge {edge}: self-edge on cell {cell}")]
    SelfEdge { edge: usize, cell: usize },
    #[error("edge {edge}: duplicate edge between cells {i} and {j}")]
    DuplicateEdge { edge: usize, i: usize, j: usize },
    #[error("edge {edge}: cell index {cell} out of range for {cells} cells")]
    IndexOutOfRange { edge: usize, cell: usize, cells: usize },
    #[error("line network needs at least 3 cells, got {0}")]
    LineTooShort(usize),
    #[error("lattice must contain at least one cell")]
    EmptyLattice,
    #[error("value specification `{0}` is not `const:V` or `uniform:LO,HI`")]
    BadValueSpec(String),
    #[error("network file: {0}")]
    File(String),
}

/// One lumped cell: heat capacity, source strength, initial temperature and
/// an optional pinned (Dirichlet) temperature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    /// Heat capacity C_i in J/K; must be positive.
    pub capacity: f64,
    /// Source term Q_i in K/s.
    pub source: f64,
    /// Initial temperature u_i(0) in K.
    pub initial_temperature: f64,
    /// When `Some(v)`, the cell is held at `v` kelvin for all time. Pinned
    /// cells still act as neighbours of adjacent cells but are never updated
    /// by any integrator.
    pub pinned: Option<f64>,
}

impl Cell {
    /// A free cell with unit capacity and no source, at the given temperature.
    pub fn at(initial_temperature: f64) -> Self {
        Cell {
            capacity: 1.0,
            source: 0.0,
            initial_temperature,
            pinned: None,
        }
    }
}

/// Undirected resistive connection between two cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    /// Thermal resistance R_ij in K/W; must be positive and finite.
    pub resistance: f64,
}

impl Edge {
    pub fn new(i: usize, j: usize, resistance: f64) -> Self {
        Edge { i, j, resistance }
    }
}

/// The full problem definition: cells plus resistive edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellNetwork {
    cells: Vec<Cell>,
    edges: Vec<Edge>,
}

impl CellNetwork {
    pub fn new(cells: Vec<Cell>, edges: Vec<Edge>) -> Self {
        CellNetwork { cells, edges }
    }

    pub fn cell_count(&self) -> usize {
        self.cells.len()
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn capacities(&self) -> Vec<f64> {
        self.cells.iter().map(|c| c.capacity).collect()
    }

    /// Same topology and parameters, different initial temperatures.
    /// Pinned markers are kept as they are.
    pub fn with_initial_temperatures(&self, temperatures: &[f64]) -> Self {
        assert_eq!(temperatures.len(), self.cells.len());
        let cells = self
            .cells
            .iter()
            .zip(temperatures)
            .map(|(c, &u)| Cell {
                initial_temperature: u,
                ..*c
            })
            .collect();
        CellNetwork {
            cells,
            edges: self.edges.clone(),
        }
    }

    /// Initial state at t = 0. Pinned cells start at their pinned value,
    /// which is what every solver holds them at afterwards.
    pub fn initial_state(&self) -> TemperatureState {
        let u = self
            .cells
            .iter()
            .map(|c| c.pinned.unwrap_or(c.initial_temperature))
            .collect();
        TemperatureState::new(u, 0.0)
    }

    /// Checks every structural invariant and reports the first violation:
    /// positive finite capacities and resistances, no self-edges, at most one
    /// edge per cell pair, edge indices in range, finite cell values.
    pub fn validate(&self) -> Result<&Self, NetworkError> {
        let n = self.cells.len();
        for (idx, cell) in self.cells.iter().enumerate() {
            if !cell.capacity.is_finite() {
                return Err(NetworkError::NonFiniteCellValue {
                    cell: idx,
                    field: "capacity",
                });
            }
            if cell.capacity <= 0.0 {
                return Err(NetworkError::NonPositiveCapacity {
                    cell: idx,
                    value: cell.capacity,
                });
            }
            if !cell.source.is_finite() {
                return Err(NetworkError::NonFiniteCellValue {
                    cell: idx,
                    field: "source",
                });
            }
            if !cell.initial_temperature.is_finite() {
                return Err(NetworkError::NonFiniteCellValue {
                    cell: idx,
                    field: "initial temperature",
                });
            }
            if let Some(p) = cell.pinned
                && !p.is_finite()
            {
                return Err(NetworkError::NonFiniteCellValue {
                    cell: idx,
                    field: "pinned temperature",
                });
            }
        }
        let mut seen = HashSet::with_capacity(self.edges.len());
        for (idx, edge) in self.edges.iter().enumerate() {
            for endpoint in [edge.i, edge.j] {
                if endpoint >= n {
                    return Err(NetworkError::IndexOutOfRange {
                        edge: idx,
                        cell: endpoint,
                        cells: n,
                    });
                }
            }
            if edge.i == edge.j {
                return Err(NetworkError::SelfEdge {
                    edge: idx,
                    cell: edge.i,
                });
            }
            if !edge.resistance.is_finite() || edge.resistance <= 0.0 {
                return Err(NetworkError::NonPositiveResistance {
                    edge: idx,
                    value: edge.resistance,
                });
            }
            let key = (edge.i.min(edge.j), edge.i.max(edge.j));
            if !seen.insert(key) {
                return Err(NetworkError::DuplicateEdge {
                    edge: idx,
                    i: key.0,
                    j: key.1,
                });
            }
        }
        Ok(self)
    }

    /// Validates the network and assembles the ODE coefficients.
    ///
    /// Each directed neighbour pair gets `m_ij = 1/(R_ij C_i)` and every
    /// diagonal entry is the exact negated sum of its row couplings, so the
    /// row sum `m_ii + sum_j m_ij` is zero by construction. Pinned cells get
    /// ordinary coefficients but are flagged so integrators skip them.
    pub fn assemble(&self) -> Result<CoefficientSet, NetworkError> {
        self.validate()?;
        let n = self.cells.len();

        let mut adjacency: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for edge in &self.edges {
            adjacency[edge.i].push((edge.j, 1.0 / (edge.resistance * self.cells[edge.i].capacity)));
            adjacency[edge.j].push((edge.i, 1.0 / (edge.resistance * self.cells[edge.j].capacity)));
        }

        let mut offsets = Vec::with_capacity(n + 1);
        let mut neighbours = Vec::new();
        let mut couplings = Vec::new();
        let mut diagonal = Vec::with_capacity(n);
        offsets.push(0);
        for row in &mut adjacency {
            row.sort_unstable_by_key(|&(j, _)| j);
            let mut row_sum = 0.0;
            for &(j, m) in row.iter() {
                neighbours.push(j);
                couplings.push(m);
                row_sum += m;
            }
            diagonal.push(-row_sum);
            offsets.push(neighbours.len());
        }

        Ok(CoefficientSet {
            offsets,
            neighbours,
            couplings,
            diagonal,
            sources: self.cells.iter().map(|c| c.source).collect(),
            capacities: self.capacities(),
            pinned: self.cells.iter().map(|c| c.pinned.is_some()).collect(),
        })
    }

    /// Serialises the network to the versioned JSON document format.
    pub fn to_json(&self) -> String {
        let file = NetworkFile {
            format: FILE_FORMAT.to_string(),
            version: FILE_VERSION,
            cells: self
                .cells
                .iter()
                .enumerate()
                .map(|(id, c)| CellRecord {
                    id,
                    c: c.capacity,
                    q: c.source,
                    u0: c.initial_temperature,
                    pinned: c.pinned,
                })
                .collect(),
            edges: self
                .edges
                .iter()
                .map(|e| EdgeRecord {
                    i: e.i,
                    j: e.j,
                    r: e.resistance,
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("network serialisation cannot fail")
    }

    /// Parses a network from the JSON document format. Cell ids may appear in
    /// any order but must be exactly 0..N-1.
    pub fn from_json(text: &str) -> Result<Self, NetworkError> {
        let file: NetworkFile =
            serde_json::from_str(text).map_err(|e| NetworkError::File(e.to_string()))?;
        if file.format != FILE_FORMAT {
            return Err(NetworkError::File(format!(
                "unknown format `{}`, expected `{FILE_FORMAT}`",
                file.format
            )));
        }
        if file.version != FILE_VERSION {
            return Err(NetworkError::File(format!(
                "unsupported version {}, expected {FILE_VERSION}",
                file.version
            )));
        }
        let n = file.cells.len();
        let mut cells = vec![None; n];
        for record in &file.cells {
            if record.id >= n {
                return Err(NetworkError::File(format!(
                    "cell id {} out of range for {n} cells",
                    record.id
                )));
            }
            if cells[record.id].is_some() {
                return Err(NetworkError::File(format!("duplicate cell id {}", record.id)));
            }
            cells[record.id] = Some(Cell {
                capacity: record.c,
                source: record.q,
                initial_temperature: record.u0,
                pinned: record.pinned,
            });
        }
        let cells = cells.into_iter().map(|c| c.unwrap()).collect();
        let edges = file
            .edges
            .iter()
            .map(|e| Edge::new(e.i, e.j, e.r))
            .collect();
        Ok(CellNetwork { cells, edges })
    }

    pub fn write_file(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_json())
    }

    pub fn read_file(path: &Path) -> Result<Self, NetworkError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| NetworkError::File(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

const FILE_FORMAT: &str = "rc-network";
const FILE_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct NetworkFile {
    format: String,
    version: u32,
    cells: Vec<CellRecord>,
    edges: Vec<EdgeRecord>,
}

#[derive(Serialize, Deserialize)]
struct CellRecord {
    id: usize,
    c: f64,
    q: f64,
    u0: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pinned: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct EdgeRecord {
    i: usize,
    j: usize,
    r: f64,
}

/// Assembled coefficients of the ODE system in compressed sparse rows.
///
/// Immutable after construction and safe to share across worker threads.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSet {
    offsets: Vec<usize>,
    neighbours: Vec<usize>,
    couplings: Vec<f64>,
    diagonal: Vec<f64>,
    sources: Vec<f64>,
    capacities: Vec<f64>,
    pinned: Vec<bool>,
}

impl CoefficientSet {
    pub fn cell_count(&self) -> usize {
        self.diagonal.len()
    }

    /// Neighbours of cell `i` as `(j, m_ij)` pairs, ascending in `j`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.offsets[i]..self.offsets[i + 1];
        self.neighbours[range.clone()]
            .iter()
            .copied()
            .zip(self.couplings[range].iter().copied())
    }

    /// Diagonal entry m_ii (non-positive; zero only for isolated cells).
    pub fn diagonal(&self, i: usize) -> f64 {
        self.diagonal[i]
    }

    /// Time constant tau_i = -1/m_ii; infinite for an isolated cell.
    pub fn tau(&self, i: usize) -> f64 {
        if self.diagonal[i] == 0.0 {
            f64::INFINITY
        } else {
            -1.0 / self.diagonal[i]
        }
    }

    pub fn source(&self, i: usize) -> f64 {
        self.sources[i]
    }

    pub fn capacity(&self, i: usize) -> f64 {
        self.capacities[i]
    }

    pub fn capacities(&self) -> &[f64] {
        &self.capacities
    }

    pub fn is_pinned(&self, i: usize) -> bool {
        self.pinned[i]
    }

    pub fn any_pinned(&self) -> bool {
        self.pinned.iter().any(|&p| p)
    }

    /// Neighbour aggregate a_i(w) = sum_j m_ij w_j + Q_i.
    pub fn neighbour_aggregate(&self, i: usize, w: &[f64]) -> f64 {
        self.neighbour_sum(i, w) + self.sources[i]
    }

    /// sum_j m_ij w_j without the source term.
    pub fn neighbour_sum(&self, i: usize, w: &[f64]) -> f64 {
        self.row(i).map(|(j, m)| m * w[j]).sum()
    }

    /// Full right-hand side du/dt = M u + Q, with zero rate on pinned cells.
    pub fn rhs_into(&self, u: &[f64], out: &mut [f64]) {
        assert_eq!(u.len(), self.cell_count());
        assert_eq!(out.len(), self.cell_count());
        for i in 0..self.cell_count() {
            out[i] = if self.pinned[i] {
                0.0
            } else {
                self.neighbour_sum(i, u) + self.diagonal[i] * u[i] + self.sources[i]
            };
        }
    }

    /// Smallest finite time constant, if any cell has a neighbour.
    pub fn tau_min(&self) -> Option<f64> {
        (0..self.cell_count())
            .map(|i| self.tau(i))
            .filter(|t| t.is_finite())
            .min_by(f64::total_cmp)
    }

    /// Largest finite time constant, if any cell has a neighbour.
    pub fn tau_max(&self) -> Option<f64> {
        (0..self.cell_count())
            .map(|i| self.tau(i))
            .filter(|t| t.is_finite())
            .max_by(f64::total_cmp)
    }
}

/// Temperature vector with its simulation time.
#[derive(Debug, Clone, PartialEq)]
pub struct TemperatureState {
    temperatures: Vec<f64>,
    time: f64,
}

impl TemperatureState {
    pub fn new(temperatures: Vec<f64>, time: f64) -> Self {
        TemperatureState { temperatures, time }
    }

    pub fn temperatures(&self) -> &[f64] {
        &self.temperatures
    }

    pub fn into_temperatures(self) -> Vec<f64> {
        self.temperatures
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn len(&self) -> usize {
        self.temperatures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.temperatures.is_empty()
    }

    pub fn all_finite(&self) -> bool {
        self.temperatures.iter().all(|u| u.is_finite())
    }

    pub(crate) fn set_time(&mut self, time: f64) {
        self.time = time;
    }
}

/// How a per-cell scalar (initial temperature or source strength) is drawn
/// when generating random lattices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ValueSpec {
    Constant(f64),
    Uniform { lo: f64, hi: f64 },
}

impl ValueSpec {
    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            ValueSpec::Constant(v) => v,
            ValueSpec::Uniform { lo, hi } => rng.random_range(lo..hi),
        }
    }
}

impl FromStr for ValueSpec {
    type Err = NetworkError;

    /// Accepts `const:V` and `uniform:LO,HI`.
    fn from_str(s: &str) -> Result<Self, NetworkError> {
        let bad = || NetworkError::BadValueSpec(s.to_string());
        if let Some(v) = s.strip_prefix("const:") {
            return v.parse().map(ValueSpec::Constant).map_err(|_| bad());
        }
        if let Some(rest) = s.strip_prefix("uniform:") {
            let (lo, hi) = rest.split_once(',').ok_or_else(bad)?;
            let lo: f64 = lo.parse().map_err(|_| bad())?;
            let hi: f64 = hi.parse().map_err(|_| bad())?;
            if !(lo < hi) {
                return Err(bad());
            }
            return Ok(ValueSpec::Uniform { lo, hi });
        }
        Err(bad())
    }
}

impl fmt::Display for ValueSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            ValueSpec::Constant(v) => write!(f, "const:{v}"),
            ValueSpec::Uniform { lo, hi } => write!(f, "uniform:{lo},{hi}"),
        }
    }
}

/// One-dimensional chain of N unit-capacity cells spanning [0, pi], carrying
/// the initial profile `10 sin(x) + 77 sin(2x)` with no sources.
///
/// Cell centres sit at x_i = i*dx with dx = pi/(N-1). A homogeneous medium of
/// unit diffusivity is realised as C = 1 and edge resistance R = dx^2, so the
/// assembled coupling 1/(R C) reproduces the classical dx^-2 stencil. With
/// `pin_ends` the first and last cells are held at zero (Dirichlet ends);
/// otherwise the chain ends are thermally closed.
pub fn build_sine_line(n: usize, pin_ends: bool) -> Result<CellNetwork, NetworkError> {
    if n < 3 {
        return Err(NetworkError::LineTooShort(n));
    }
    let dx = PI / (n - 1) as f64;
    let cells = (0..n)
        .map(|i| {
            let x = i as f64 * dx;
            Cell {
                capacity: 1.0,
                source: 0.0,
                initial_temperature: 10.0 * x.sin() + 77.0 * (2.0 * x).sin(),
                pinned: (pin_ends && (i == 0 || i == n - 1)).then_some(0.0),
            }
        })
        .collect();
    let edges = (0..n - 1).map(|i| Edge::new(i, i + 1, dx * dx)).collect();
    Ok(CellNetwork::new(cells, edges))
}

/// Rectangular nx-by-ny lattice with log-uniform random capacities and edge
/// resistances, `C = R = 10^U` with `U` uniform on the given exponent range.
///
/// Cell (x, y) has index `y*nx + x`. The generator is a ChaCha8 stream seeded
/// with `seed`, so outputs are bit-identical across runs and platforms. Draw
/// order: for each cell in index order, exponent draws for C, the eastward
/// edge resistance and the northward edge resistance (boundary-facing draws
/// are made and discarded, keeping the stream aligned); then one initial
/// temperature per cell from `u0_spec`; then one source per cell from
/// `q_spec`. `Constant` specs consume no draws.
pub fn build_random_lattice(
    nx: usize,
    ny: usize,
    exponent_range: (f64, f64),
    u0_spec: ValueSpec,
    q_spec: ValueSpec,
    seed: u64,
) -> Result<CellNetwork, NetworkError> {
    let n = nx * ny;
    if n == 0 {
        return Err(NetworkError::EmptyLattice);
    }
    let (lo, hi) = exponent_range;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut exponent = move |rng: &mut ChaCha8Rng| 10f64.powf(rng.random_range(lo..hi));

    let mut capacities = Vec::with_capacity(n);
    let mut edges = Vec::new();
    for y in 0..ny {
        for x in 0..nx {
            let i = y * nx + x;
            capacities.push(exponent(&mut rng));
            let r_east = exponent(&mut rng);
            let r_north = exponent(&mut rng);
            if x + 1 < nx {
                edges.push(Edge::new(i, i + 1, r_east));
            }
            if y + 1 < ny {
                edges.push(Edge::new(i, i + nx, r_north));
            }
        }
    }
    let initial: Vec<f64> = (0..n).map(|_| u0_spec.sample(&mut rng)).collect();
    let sources: Vec<f64> = (0..n).map(|_| q_spec.sample(&mut rng)).collect();

    let cells = (0..n)
        .map(|i| Cell {
            capacity: capacities[i],
            source: sources[i],
            initial_temperature: initial[i],
            pinned: None,
        })
        .collect();
    Ok(CellNetwork::new(cells, edges))
}

/// Convenience: the two-cell unit network (C = 1 each, one edge with R = 1).
/// Its exact solution from (0, 1) is `uel(t) = 1/2 -+ e^{-2t}/2`.
pub fn two_cell_unit(u0: f64, u1: f64) -> CellNetwork {
    CellNetwork::new(
        vec![Cell::at(u0), Cell::at(u1)],
        vec![Edge::new(0, 1, 1.0)],
    )
}
