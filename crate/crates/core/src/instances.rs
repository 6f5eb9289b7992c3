//! Classical problem instances: weighted 3-regular Max-Cut graphs and
//! heavy-hex random Ising models with three-body terms.
//!
//! Spins follow the computational-basis convention used by the simulator:
//! bit `i` of a basis index set to 0 means `z_i = +1`, set to 1 means `z_i = -1`.

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest register that can be enumerated or simulated exactly.
pub const MAX_QUBITS: usize = 24;

const MAX_PAIRING_RETRIES: usize = 10_000;

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("3-regular graphs need an even vertex count of at least 4, got {0}")]
    InvalidVertexCount(usize),
    #[error("no simple connected 3-regular pairing found after {0} attempts")]
    PairingFailed(usize),
    #[error("heavy-hex patch needs rows >= 1 and cols >= 1, got {rows}x{cols}")]
    InvalidPatch { rows: usize, cols: usize },
    #[error("vertex {vertex} has degree {degree}, at most 3 allowed")]
    DegreeTooLarge { vertex: usize, degree: usize },
    #[error("invalid edge ({0}, {1})")]
    InvalidEdge(usize, usize),
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(usize, usize),
    #[error("bitstring has length {got}, instance has {expected} variables")]
    LengthMismatch { expected: usize, got: usize },
    #[error("{n} variables exceed the enumeration limit of {MAX_QUBITS}")]
    TooLarge { n: usize },
    #[error("malformed instance: {0}")]
    Malformed(String),
    #[error("instance id {0:?} not found in manifest")]
    UnknownInstance(String),
    #[error("manifest already holds a different instance with id {0:?}")]
    ConflictingId(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, InstanceError>;

/// Simple undirected graph. Edges are stored as `(i, j)` with `i < j`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
}

impl Graph {
    pub fn new(n: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(edges.len());
        let mut normalized = Vec::with_capacity(edges.len());
        for (a, b) in edges {
            if a == b || a >= n || b >= n {
                return Err(InstanceError::InvalidEdge(a, b));
            }
            let e = (a.min(b), a.max(b));
            if !seen.insert(e) {
                return Err(InstanceError::DuplicateEdge(e.0, e.1));
            }
            normalized.push(e);
        }
        Ok(Self {
            n,
            edges: normalized,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n];
        for &(a, b) in &self.edges {
            deg[a] += 1;
            deg[b] += 1;
        }
        deg
    }

    pub fn max_degree(&self) -> usize {
        self.degrees().into_iter().max().unwrap_or(0)
    }

    /// Sorted neighbor lists.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    pub fn is_connected(&self) -> bool {
        if self.n == 0 {
            return true;
        }
        let adj = self.adjacency();
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = queue.pop_front() {
            for &u in &adj[v] {
                if !seen[u] {
                    seen[u] = true;
                    count += 1;
                    queue.push_back(u);
                }
            }
        }
        count == self.n
    }
}

/// Vector of ±1 decision variables.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Bitstring(Vec<i8>);

impl Bitstring {
    /// Panics if any entry is not ±1.
    pub fn new(spins: Vec<i8>) -> Self {
        assert!(
            spins.iter().all(|&s| s == 1 || s == -1),
            "spins must be +1 or -1"
        );
        Self(spins)
    }

    pub fn from_index(index: usize, n: usize) -> Self {
        Self((0..n).map(|i| spin_of(index, i)).collect())
    }

    pub fn to_index(&self) -> usize {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, &s)| s < 0)
            .fold(0, |acc, (i, _)| acc | (1 << i))
    }

    pub fn spins(&self) -> &[i8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn flipped(&self) -> Self {
        Self(self.0.iter().map(|s| -s).collect())
    }
}

#[inline]
fn spin_of(index: usize, qubit: usize) -> i8 {
    if (index >> qubit) & 1 == 0 {
        1
    } else {
        -1
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MaxCutInstance {
    graph: Graph,
    weights: Vec<f64>,
    seed: Option<u64>,
}

impl MaxCutInstance {
    /// `weights[k]` belongs to `graph.edges()[k]`.
    pub fn new(graph: Graph, weights: Vec<f64>, seed: Option<u64>) -> Result<Self> {
        if weights.len() != graph.edges().len() {
            return Err(InstanceError::Malformed(format!(
                "{} weights for {} edges",
                weights.len(),
                graph.edges().len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(0.0..=1.0).contains(*w)) {
            return Err(InstanceError::Malformed(format!(
                "edge weight {w} outside [0, 1]"
            )));
        }
        Ok(Self {
            graph,
            weights,
            seed,
        })
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    fn cost_of_spins(&self, z: &[i8]) -> f64 {
        self.graph
            .edges
            .iter()
            .zip(&self.weights)
            .map(|(&(i, j), &w)| w * f64::from(z[i] * z[j]))
            .sum()
    }
}

/// Three-body term `coeff * z_center * z_left * z_right` on a degree-2 vertex.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CubicTerm {
    pub sites: [usize; 3],
    pub coeff: i8,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeavyHexInstance {
    graph: Graph,
    linear: Vec<i8>,
    quadratic: Vec<i8>,
    cubic: Vec<CubicTerm>,
    seed: Option<u64>,
}

impl HeavyHexInstance {
    pub fn new(
        graph: Graph,
        linear: Vec<i8>,
        quadratic: Vec<i8>,
        cubic: Vec<CubicTerm>,
        seed: Option<u64>,
    ) -> Result<Self> {
        let unit = |c: &i8| *c == 1 || *c == -1;
        if linear.len() != graph.n() || quadratic.len() != graph.edges().len() {
            return Err(InstanceError::Malformed(
                "coefficient counts do not match the graph".into(),
            ));
        }
        if !linear.iter().all(unit)
            || !quadratic.iter().all(unit)
            || !cubic.iter().map(|t| t.coeff).all(|c| unit(&c))
        {
            return Err(InstanceError::Malformed("coefficients must be ±1".into()));
        }
        let adj = graph.adjacency();
        let expected: BTreeSet<usize> = (0..graph.n()).filter(|&v| adj[v].len() == 2).collect();
        let mut centers = BTreeSet::new();
        for t in &cubic {
            let [c, l, r] = t.sites;
            if c >= graph.n() || adj[c].len() != 2 || adj[c] != [l.min(r), l.max(r)] {
                return Err(InstanceError::Malformed(format!(
                    "cubic term {:?} is not a degree-2 vertex with its two neighbors",
                    t.sites
                )));
            }
            if !centers.insert(c) {
                return Err(InstanceError::Malformed(format!(
                    "vertex {c} carries two cubic terms"
                )));
            }
        }
        if centers != expected {
            return Err(InstanceError::Malformed(
                "every degree-2 vertex needs exactly one cubic term".into(),
            ));
        }
        Ok(Self {
            graph,
            linear,
            quadratic,
            cubic,
            seed,
        })
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn linear(&self) -> &[i8] {
        &self.linear
    }

    pub fn quadratic(&self) -> &[i8] {
        &self.quadratic
    }

    pub fn cubic(&self) -> &[CubicTerm] {
        &self.cubic
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    fn cost_of_spins(&self, z: &[i8]) -> i64 {
        let lin: i64 = self
            .linear
            .iter()
            .zip(z)
            .map(|(&d, &s)| i64::from(d * s))
            .sum();
        let quad: i64 = self
            .graph
            .edges
            .iter()
            .zip(&self.quadratic)
            .map(|(&(i, j), &d)| i64::from(d * z[i] * z[j]))
            .sum();
        let cub: i64 = self
            .cubic
            .iter()
            .map(|t| {
                let [a, b, c] = t.sites;
                i64::from(t.coeff * z[a] * z[b] * z[c])
            })
            .sum();
        lin + quad + cub
    }
}

/// Either problem family, evaluated through one interface.
#[derive(Clone, Debug, PartialEq)]
pub enum ProblemInstance {
    MaxCut(MaxCutInstance),
    HeavyHex(HeavyHexInstance),
}

impl ProblemInstance {
    pub fn n(&self) -> usize {
        self.graph().n()
    }

    pub fn graph(&self) -> &Graph {
        match self {
            Self::MaxCut(m) => m.graph(),
            Self::HeavyHex(h) => h.graph(),
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            Self::MaxCut(m) => m.seed,
            Self::HeavyHex(h) => h.seed,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::MaxCut(_) => "maxcut",
            Self::HeavyHex(_) => "heavy_hex",
        }
    }

    /// `<z|H_C|z>` for a ±1 assignment.
    pub fn classical_cost(&self, z: &Bitstring) -> Result<f64> {
        if z.len() != self.n() {
            return Err(InstanceError::LengthMismatch {
                expected: self.n(),
                got: z.len(),
            });
        }
        Ok(self.cost_of_spins(z.spins()))
    }

    fn cost_of_spins(&self, z: &[i8]) -> f64 {
        match self {
            Self::MaxCut(m) => m.cost_of_spins(z),
            Self::HeavyHex(h) => h.cost_of_spins(z) as f64,
        }
    }

    /// Classical cost of every computational basis state, indexed by basis index.
    pub fn cost_table(&self) -> Result<Vec<f64>> {
        let n = self.n();
        if n > MAX_QUBITS {
            return Err(InstanceError::TooLarge { n });
        }
        // Gray-code walk: one spin flip per step keeps the buffer in sync.
        let mut table = vec![0.0; 1 << n];
        let mut spins = vec![1i8; n];
        let mut index = 0usize;
        table[0] = self.cost_of_spins(&spins);
        for step in 1usize..(1 << n) {
            let bit = step.trailing_zeros() as usize;
            spins[bit] = -spins[bit];
            index ^= 1 << bit;
            table[index] = self.cost_of_spins(&spins);
        }
        Ok(table)
    }
}

impl From<MaxCutInstance> for ProblemInstance {
    fn from(m: MaxCutInstance) -> Self {
        Self::MaxCut(m)
    }
}

impl From<HeavyHexInstance> for ProblemInstance {
    fn from(h: HeavyHexInstance) -> Self {
        Self::HeavyHex(h)
    }
}

/// Exact extrema of the classical cost over all `2^n` assignments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumExtrema {
    pub c_min: f64,
    pub c_max: f64,
    pub argmin: Vec<i8>,
    pub argmax: Vec<i8>,
}

pub fn brute_force_extrema(instance: &ProblemInstance) -> Result<SpectrumExtrema> {
    let n = instance.n();
    let table = instance.cost_table()?;
    let (mut imin, mut imax) = (0usize, 0usize);
    for (k, &c) in table.iter().enumerate() {
        if c < table[imin] {
            imin = k;
        }
        if c > table[imax] {
            imax = k;
        }
    }
    Ok(SpectrumExtrema {
        c_min: table[imin],
        c_max: table[imax],
        argmin: Bitstring::from_index(imin, n).0,
        argmax: Bitstring::from_index(imax, n).0,
    })
}

/// Random connected 3-regular graph with i.i.d. uniform edge weights,
/// drawn from the pairing model with rejection.
pub fn generate_3regular_maxcut(n: usize, seed: u64) -> Result<MaxCutInstance> {
    if n < 4 || n % 2 != 0 {
        return Err(InstanceError::InvalidVertexCount(n));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stubs: Vec<usize> = (0..n).flat_map(|v| [v, v, v]).collect();
    for _ in 0..MAX_PAIRING_RETRIES {
        stubs.shuffle(&mut rng);
        let mut edges = Vec::with_capacity(3 * n / 2);
        let mut seen = HashSet::with_capacity(3 * n / 2);
        let simple = stubs.chunks_exact(2).all(|pair| {
            let (a, b) = (pair[0].min(pair[1]), pair[0].max(pair[1]));
            edges.push((a, b));
            a != b && seen.insert((a, b))
        });
        if !simple {
            continue;
        }
        edges.sort_unstable();
        let graph = Graph::new(n, edges)?;
        if !graph.is_connected() {
            continue;
        }
        let weights = (0..graph.edges().len()).map(|_| rng.gen::<f64>()).collect();
        return MaxCutInstance::new(graph, weights, Some(seed));
    }
    Err(InstanceError::PairingFailed(MAX_PAIRING_RETRIES))
}

/// Heavy-hex patch of `rows x cols` hexagonal cells.
///
/// Cells are laid out brick-wall style: cell `k` of row `y` spans lattice
/// columns `x0..=x0 + 2` with `x0 = y % 2 + 2k`. Every edge of the resulting
/// honeycomb patch is subdivided by a degree-2 vertex. Lattice vertices are
/// numbered first in `(y, x)` order, followed by one vertex per subdivided
/// edge in edge order.
pub fn generate_heavy_hex(rows: usize, cols: usize) -> Result<Graph> {
    if rows == 0 || cols == 0 {
        return Err(InstanceError::InvalidPatch { rows, cols });
    }
    let mut lattice_edges = BTreeSet::new();
    for y in 0..rows {
        for k in 0..cols {
            let x0 = y % 2 + 2 * k;
            let ring = [
                (y, x0),
                (y, x0 + 1),
                (y, x0 + 2),
                (y + 1, x0 + 2),
                (y + 1, x0 + 1),
                (y + 1, x0),
            ];
            for s in 0..6 {
                let (a, b) = (ring[s], ring[(s + 1) % 6]);
                lattice_edges.insert((a.min(b), a.max(b)));
            }
        }
    }
    let sites: BTreeSet<(usize, usize)> = lattice_edges.iter().flat_map(|&(a, b)| [a, b]).collect();
    let ids: BTreeMap<(usize, usize), usize> =
        sites.iter().enumerate().map(|(k, &s)| (s, k)).collect();
    let mut next = ids.len();
    let mut edges = Vec::with_capacity(2 * lattice_edges.len());
    for (a, b) in &lattice_edges {
        let mid = next;
        next += 1;
        edges.push((ids[a], mid));
        edges.push((ids[b], mid));
    }
    Graph::new(next, edges)
}

/// Assigns fair ±1 coefficients to every vertex, every edge, and one
/// three-body term per degree-2 vertex.
pub fn generate_heavy_hex_instance(graph: Graph, seed: u64) -> Result<HeavyHexInstance> {
    let adj = graph.adjacency();
    if let Some((vertex, list)) = adj.iter().enumerate().find(|(_, l)| l.len() > 3) {
        return Err(InstanceError::DegreeTooLarge {
            vertex,
            degree: list.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coin = || if rng.gen::<bool>() { 1i8 } else { -1i8 };
    let linear = (0..graph.n()).map(|_| coin()).collect();
    let quadratic = (0..graph.edges().len()).map(|_| coin()).collect();
    let cubic = adj
        .iter()
        .enumerate()
        .filter(|(_, l)| l.len() == 2)
        .map(|(v, l)| CubicTerm {
            sites: [v, l[0], l[1]],
            coeff: coin(),
        })
        .collect();
    HeavyHexInstance::new(graph, linear, quadratic, cubic, Some(seed))
}

/// On-disk instance file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InstanceFile {
    Maxcut {
        n: usize,
        edges: Vec<(usize, usize)>,
        weights: Vec<f64>,
        seed: Option<u64>,
    },
    HeavyHex {
        n: usize,
        edges: Vec<(usize, usize)>,
        linear: Vec<i8>,
        quadratic: Vec<i8>,
        cubic: Vec<CubicTerm>,
        seed: Option<u64>,
    },
}

impl From<&ProblemInstance> for InstanceFile {
    fn from(inst: &ProblemInstance) -> Self {
        match inst {
            ProblemInstance::MaxCut(m) => Self::Maxcut {
                n: m.graph.n,
                edges: m.graph.edges.clone(),
                weights: m.weights.clone(),
                seed: m.seed,
            },
            ProblemInstance::HeavyHex(h) => Self::HeavyHex {
                n: h.graph.n,
                edges: h.graph.edges.clone(),
                linear: h.linear.clone(),
                quadratic: h.quadratic.clone(),
                cubic: h.cubic.clone(),
                seed: h.seed,
            },
        }
    }
}

impl TryFrom<InstanceFile> for ProblemInstance {
    type Error = InstanceError;

    fn try_from(file: InstanceFile) -> Result<Self> {
        match file {
            InstanceFile::Maxcut {
                n,
                edges,
                weights,
                seed,
            } => Ok(MaxCutInstance::new(Graph::new(n, edges)?, weights, seed)?.into()),
            InstanceFile::HeavyHex {
                n,
                edges,
                linear,
                quadratic,
                cubic,
                seed,
            } => Ok(HeavyHexInstance::new(Graph::new(n, edges)?, linear, quadratic, cubic, seed)?.into()),
        }
    }
}

pub fn save_instance(instance: &ProblemInstance, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(&InstanceFile::from(instance))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

pub fn load_instance(path: &Path) -> Result<ProblemInstance> {
    let file: InstanceFile = serde_json::from_str(&fs::read_to_string(path)?)?;
    file.try_into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub path: PathBuf,
    pub seed: u64,
}

/// Instance id → file → seed listing. Relative paths resolve against the
/// manifest's own directory.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub instances: Vec<ManifestEntry>,
    #[serde(skip)]
    root: PathBuf,
}

impl Manifest {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self {
            instances: Vec::new(),
            root: root.into(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut m: Manifest = serde_json::from_str(&fs::read_to_string(path)?)?;
        m.root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn entry(&self, id: &str) -> Result<&ManifestEntry> {
        self.instances
            .iter()
            .find(|e| e.id == id)
            .ok_or_else(|| InstanceError::UnknownInstance(id.to_string()))
    }

    pub fn resolve(&self, id: &str) -> PathBuf {
        self.entry(id)
            .map(|e| self.root.join(&e.path))
            .unwrap_or_default()
    }

    pub fn load_instance(&self, id: &str) -> Result<ProblemInstance> {
        let entry = self.entry(id)?;
        load_instance(&self.root.join(&entry.path))
    }

    /// Writes the instance under `instances/<id>.json` and records it.
    /// Re-adding an identical instance is a no-op.
    pub fn add(&mut self, id: &str, instance: &ProblemInstance, seed: u64) -> Result<()> {
        let rel = PathBuf::from("instances").join(format!("{id}.json"));
        if let Ok(existing) = self.entry(id) {
            let same = existing.seed == seed
                && load_instance(&self.root.join(&existing.path))
                    .map(|old| &old == instance)
                    .unwrap_or(false);
            return if same {
                Ok(())
            } else {
                Err(InstanceError::ConflictingId(id.to_string()))
            };
        }
        fs::create_dir_all(self.root.join("instances"))?;
        save_instance(instance, &self.root.join(&rel))?;
        self.instances.push(ManifestEntry {
            id: id.to_string(),
            path: rel,
            seed,
        });
        Ok(())
    }
}
