//! Independent dense-matrix reference for small QAOA circuits.
//!
//! Hamiltonians are assembled from Kronecker products of Pauli matrices and
//! exponentiated by scaling and squaring of a Taylor series, so nothing here
//! relies on the cost Hamiltonian being diagonal or on the simulator's
//! per-qubit mixer.

#![allow(dead_code)]

use num_complex::Complex64 as C;
use qaoa_surrogate::engine::AngleVector;
use qaoa_surrogate::instances::{CubicTerm, Graph, HeavyHexInstance, MaxCutInstance, ProblemInstance};
use rand::seq::SliceRandom;
use rand::Rng;

#[derive(Clone, Debug)]
pub struct Dense {
    pub dim: usize,
    pub data: Vec<C>,
}

impl Dense {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, data: vec![C::new(0.0, 0.0); dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = C::new(1.0, 0.0);
        }
        m
    }

    pub fn from_rows(rows: &[[C; 2]; 2]) -> Self {
        Self { dim: 2, data: rows.iter().flatten().copied().collect() }
    }

    pub fn at(&self, i: usize, j: usize) -> C {
        self.data[i * self.dim + j]
    }

    pub fn kron(&self, other: &Dense) -> Dense {
        let dim = self.dim * other.dim;
        let mut out = Dense::zeros(dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                let a = self.at(i, j);
                for k in 0..other.dim {
                    for l in 0..other.dim {
                        out.data[(i * other.dim + k) * dim + j * other.dim + l] = a * other.at(k, l);
                    }
                }
            }
        }
        out
    }

    pub fn matmul(&self, other: &Dense) -> Dense {
        let n = self.dim;
        let mut out = Dense::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.at(i, k);
                for j in 0..n {
                    out.data[i * n + j] += a * other.at(k, j);
                }
            }
        }
        out
    }

    pub fn apply(&self, v: &[C]) -> Vec<C> {
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self.at(i, j) * v[j]).sum())
            .collect()
    }

    pub fn add_scaled(&mut self, other: &Dense, s: C) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    fn norm1(&self) -> f64 {
        (0..self.dim)
            .map(|j| (0..self.dim).map(|i| self.at(i, j).norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// `exp(s * self)` by scaling and squaring.
    pub fn expm(&self, s: C) -> Dense {
        let mut a = self.clone();
        for x in a.data.iter_mut() {
            *x *= s;
        }
        let mut squarings = 0;
        while a.norm1() > 0.25 {
            for x in a.data.iter_mut() {
                *x *= 0.5;
            }
            squarings += 1;
        }
        let mut term = Dense::identity(self.dim);
        let mut sum = Dense::identity(self.dim);
        for k in 1..=24 {
            term = term.matmul(&a);
            for x in term.data.iter_mut() {
                *x /= k as f64;
            }
            sum.add_scaled(&term, C::new(1.0, 0.0));
        }
        for _ in 0..squarings {
            sum = sum.matmul(&sum);
        }
        sum
    }
}

fn c(re: f64, im: f64) -> C {
    C::new(re, im)
}

pub fn pauli_i() -> Dense {
    Dense::identity(2)
}

pub fn pauli_x() -> Dense {
    Dense::from_rows(&[[c(0.0, 0.0), c(1.0, 0.0)], [c(1.0, 0.0), c(0.0, 0.0)]])
}

pub fn pauli_z() -> Dense {
    Dense::from_rows(&[[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(-1.0, 0.0)]])
}

pub fn hadamard() -> Dense {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    Dense::from_rows(&[[c(h, 0.0), c(h, 0.0)], [c(h, 0.0), c(-h, 0.0)]])
}

/// Tensor product with `op` on the listed qubits and identity elsewhere.
/// Qubit 0 is the least significant bit of the basis index.
pub fn pauli_string(n: usize, op: &Dense, qubits: &[usize]) -> Dense {
    let mut out = Dense::identity(1);
    for q in (0..n).rev() {
        let factor = if qubits.contains(&q) { op.clone() } else { pauli_i() };
        out = out.kron(&factor);
    }
    out
}

pub fn cost_hamiltonian(inst: &ProblemInstance) -> Dense {
    let n = inst.n();
    let z = pauli_z();
    let mut h = Dense::zeros(1 << n);
    match inst {
        ProblemInstance::MaxCut(m) => {
            for (&(i, j), &w) in m.graph().edges().iter().zip(m.weights()) {
                h.add_scaled(&pauli_string(n, &z, &[i, j]), c(w, 0.0));
            }
        }
        ProblemInstance::HeavyHex(hh) => {
            for (i, &d) in hh.linear().iter().enumerate() {
                h.add_scaled(&pauli_string(n, &z, &[i]), c(d as f64, 0.0));
            }
            for (&(i, j), &d) in hh.graph().edges().iter().zip(hh.quadratic()) {
                h.add_scaled(&pauli_string(n, &z, &[i, j]), c(d as f64, 0.0));
            }
            for t in hh.cubic() {
                h.add_scaled(&pauli_string(n, &z, &t.sites), c(t.coeff as f64, 0.0));
            }
        }
    }
    h
}

pub fn mixer_hamiltonian(n: usize) -> Dense {
    let mut h = Dense::zeros(1 << n);
    for q in 0..n {
        h.add_scaled(&pauli_string(n, &pauli_x(), &[q]), c(1.0, 0.0));
    }
    h
}

/// QAOA state by explicit matrix chain on `H^{⊗n}|0…0>`.
pub fn oracle_state(inst: &ProblemInstance, angles: &AngleVector) -> Vec<C> {
    let n = inst.n();
    let hc = cost_hamiltonian(inst);
    let hm = mixer_hamiltonian(n);
    let mut h_all = Dense::identity(1);
    for _ in 0..n {
        h_all = h_all.kron(&hadamard());
    }
    let mut zero = vec![c(0.0, 0.0); 1 << n];
    zero[0] = c(1.0, 0.0);
    let mut psi = h_all.apply(&zero);
    for (&g, &b) in angles.gamma.iter().zip(&angles.beta) {
        psi = hc.expm(c(0.0, -g)).apply(&psi);
        psi = hm.expm(c(0.0, -b)).apply(&psi);
    }
    psi
}

pub fn oracle_cost(inst: &ProblemInstance, angles: &AngleVector) -> f64 {
    let psi = oracle_state(inst, angles);
    let hpsi = cost_hamiltonian(inst).apply(&psi);
    psi.iter().zip(&hpsi).map(|(a, b)| (a.conj() * b).re).sum()
}

/// Random simple graph on `n` vertices with max degree 3 and at least one edge.
pub fn random_graph<R: Rng>(n: usize, rng: &mut R) -> Graph {
    loop {
        let mut pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        pairs.shuffle(rng);
        let mut deg = vec![0; n];
        let mut edges = Vec::new();
        for (i, j) in pairs {
            if rng.gen_bool(0.6) && deg[i] < 3 && deg[j] < 3 {
                deg[i] += 1;
                deg[j] += 1;
                edges.push((i, j));
            }
        }
        if !edges.is_empty() {
            return Graph::new(n, edges).unwrap();
        }
    }
}

pub fn random_maxcut<R: Rng>(n: usize, rng: &mut R) -> ProblemInstance {
    let g = random_graph(n, rng);
    let w = (0..g.edges().len()).map(|_| rng.gen::<f64>()).collect();
    MaxCutInstance::new(g, w, None).unwrap().into()
}

pub fn random_heavy_hex<R: Rng>(n: usize, rng: &mut R) -> ProblemInstance {
    let g = random_graph(n, rng);
    let mut coin = || if rng.gen_bool(0.5) { 1i8 } else { -1 };
    let linear = (0..n).map(|_| coin()).collect();
    let quadratic = (0..g.edges().len()).map(|_| coin()).collect();
    let adj = g.adjacency();
    let cubic = (0..n)
        .filter(|&v| adj[v].len() == 2)
        .map(|v| CubicTerm { sites: [v, adj[v][0], adj[v][1]], coeff: coin() })
        .collect();
    HeavyHexInstance::new(g, linear, quadratic, cubic, None).unwrap().into()
}

pub fn random_angles<R: Rng>(p: usize, rng: &mut R) -> AngleVector {
    let pi = std::f64::consts::PI;
    AngleVector::new(
        (0..p).map(|_| rng.gen_range(-pi..pi)).collect(),
        (0..p).map(|_| rng.gen_range(-pi..pi)).collect(),
    )
    .unwrap()
}

pub fn single_edge() -> ProblemInstance {
    MaxCutInstance::new(Graph::new(2, vec![(0, 1)]).unwrap(), vec![1.0], None).unwrap().into()
}
