//! Exact statevector simulation of the QAOA state and its cost estimators.
//!
//! The cost Hamiltonian is diagonal, so a phase layer is a pointwise
//! multiplication by `exp(-i γ C(z))` using a cost table built once per
//! instance. The mixer `exp(-i β Σ X)` factorizes into one `exp(-i β X)`
//! rotation per qubit. The initial state is `|+>^n`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instances::{HeavyHexInstance, InstanceError, ProblemInstance, MAX_QUBITS};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("{n} qubits exceed the statevector limit of {MAX_QUBITS}")]
    TooManyQubits { n: usize },
    #[error("angle vector must have equal, nonzero gamma/beta lengths (got {gamma} and {beta})")]
    BadLayerCount { gamma: usize, beta: usize },
    #[error("flat angle vector of length {0} is not 2p")]
    OddLength(usize),
    #[error("non-finite angle {value} at component {index}")]
    NonFiniteAngle { index: usize, value: f64 },
    #[error("shot count must be positive")]
    ZeroShots,
    #[error("component {index} out of range for {len} angles")]
    ComponentOutOfRange { index: usize, len: usize },
    #[error(transparent)]
    Instance(#[from] InstanceError),
}

pub type Result<T> = std::result::Result<T, EngineError>;

/// QAOA angles `θ = (γ_1..γ_p, β_1..β_p)`, in radians.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AngleVector {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

impl AngleVector {
    pub fn new(gamma: Vec<f64>, beta: Vec<f64>) -> Result<Self> {
        if gamma.is_empty() || gamma.len() != beta.len() {
            return Err(EngineError::BadLayerCount {
                gamma: gamma.len(),
                beta: beta.len(),
            });
        }
        Ok(Self { gamma, beta })
    }

    /// Splits a flat `(γ.., β..)` vector.
    pub fn from_flat(theta: &[f64]) -> Result<Self> {
        if theta.is_empty() || theta.len() % 2 != 0 {
            return Err(EngineError::OddLength(theta.len()));
        }
        let p = theta.len() / 2;
        Self::new(theta[..p].to_vec(), theta[p..].to_vec())
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.gamma.iter().chain(&self.beta).copied().collect()
    }

    pub fn p(&self) -> usize {
        self.gamma.len()
    }

    fn check_finite(&self) -> Result<()> {
        match self.to_flat().into_iter().enumerate().find(|(_, v)| !v.is_finite()) {
            Some((index, value)) => Err(EngineError::NonFiniteAngle { index, value }),
            None => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    pub amplitudes: Vec<Complex64>,
}

impl StateVector {
    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(Complex64::norm_sqr).sum()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(Complex64::norm_sqr).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShotEstimate {
    pub value: f64,
    pub shots: u64,
    pub rng_seed: u64,
}

/// Per-instance simulator. Holds the read-only cost table and can be shared
/// across threads.
#[derive(Clone, Debug)]
pub struct QaoaSimulator {
    n: usize,
    costs: Vec<f64>,
}

impl QaoaSimulator {
    pub fn new(instance: &ProblemInstance) -> Result<Self> {
        let n = instance.n();
        if n > MAX_QUBITS {
            return Err(EngineError::TooManyQubits { n });
        }
        Ok(Self {
            n,
            costs: instance.cost_table()?,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn cost_table(&self) -> &[f64] {
        &self.costs
    }

    pub fn prepare_state(&self, angles: &AngleVector) -> Result<StateVector> {
        angles.check_finite()?;
        let dim = self.costs.len();
        let mut amps = vec![Complex64::new((dim as f64).powf(-0.5), 0.0); dim];
        for (&gamma, &beta) in angles.gamma.iter().zip(&angles.beta) {
            for (a, &c) in amps.iter_mut().zip(&self.costs) {
                let (s, co) = (gamma * c).sin_cos();
                *a *= Complex64::new(co, -s);
            }
            let (s, c) = beta.sin_cos();
            for q in 0..self.n {
                apply_x_rotation(&mut amps, q, c, s);
            }
        }
        Ok(StateVector { amplitudes: amps })
    }

    /// `<γ,β|H_C|γ,β>`, the infinite-shot cost.
    pub fn exact_cost(&self, angles: &AngleVector) -> Result<f64> {
        let state = self.prepare_state(angles)?;
        Ok(state
            .amplitudes
            .iter()
            .zip(&self.costs)
            .map(|(a, &c)| a.norm_sqr() * c)
            .sum())
    }

    /// Mean classical cost of `shots` computational-basis samples.
    pub fn sampled_cost(&self, angles: &AngleVector, shots: u64, seed: u64) -> Result<ShotEstimate> {
        if shots == 0 {
            return Err(EngineError::ZeroShots);
        }
        let state = self.prepare_state(angles)?;
        let mut cdf = state.probabilities();
        let mut acc = 0.0;
        for p in cdf.iter_mut() {
            acc += *p;
            *p = acc;
        }
        let total = acc;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sum = 0.0;
        for _ in 0..shots {
            let u = rng.gen::<f64>() * total;
            let k = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
            sum += self.costs[k];
        }
        Ok(ShotEstimate {
            value: sum / shots as f64,
            shots,
            rng_seed: seed,
        })
    }
}

/// Applies `exp(-i β X)` = `cos β I - i sin β X` on `qubit`.
fn apply_x_rotation(amps: &mut [Complex64], qubit: usize, cos: f64, sin: f64) {
    let stride = 1usize << qubit;
    let misin = Complex64::new(0.0, -sin);
    for block in amps.chunks_exact_mut(2 * stride) {
        let (lo, hi) = block.split_at_mut(stride);
        for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
            let (x, y) = (*a, *b);
            *a = x * cos + y * misin;
            *b = x * misin + y * cos;
        }
    }
}

pub fn prepare_qaoa_state(instance: &ProblemInstance, angles: &AngleVector) -> Result<StateVector> {
    QaoaSimulator::new(instance)?.prepare_state(angles)
}

pub fn exact_cost(instance: &ProblemInstance, angles: &AngleVector) -> Result<f64> {
    QaoaSimulator::new(instance)?.exact_cost(angles)
}

pub fn sampled_cost(
    instance: &ProblemInstance,
    angles: &AngleVector,
    shots: u64,
    seed: u64,
) -> Result<ShotEstimate> {
    QaoaSimulator::new(instance)?.sampled_cost(angles, shots, seed)
}

/// `|C(θ) - C(θ + π e_k)|` for flat component `k`. Integer-coefficient
/// Hamiltonians make this vanish.
pub fn pi_shift_invariance_check(
    instance: &HeavyHexInstance,
    angles: &AngleVector,
    component: usize,
) -> Result<f64> {
    shift_difference(&ProblemInstance::HeavyHex(instance.clone()), angles, component, PI)
}

/// `|C(θ) - C(θ + shift e_k)|` on any instance.
pub fn shift_difference(
    instance: &ProblemInstance,
    angles: &AngleVector,
    component: usize,
    shift: f64,
) -> Result<f64> {
    let sim = QaoaSimulator::new(instance)?;
    let mut flat = angles.to_flat();
    if component >= flat.len() {
        return Err(EngineError::ComponentOutOfRange {
            index: component,
            len: flat.len(),
        });
    }
    let base = sim.exact_cost(angles)?;
    flat[component] += shift;
    let shifted = sim.exact_cost(&AngleVector::from_flat(&flat)?)?;
    Ok((base - shifted).abs())
}
