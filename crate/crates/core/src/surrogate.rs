//! Thin-plate radial-basis-function interpolation of archived cost values.
//!
//! The interpolant is
//!
//! ```text
//! s(θ) = Σ_k w_k φ(‖θ - c_k‖) + a_0 + Σ_j a_j θ_j,      φ(r) = r² ln r,
//! ```
//!
//! with the side conditions `Σ_k w_k = 0` and `Σ_k w_k c_k = 0`, which makes
//! the augmented system `[Φ P; Pᵀ 0]` nonsingular whenever the centers are
//! distinct and not affinely degenerate. No smoothing term is added, so the
//! fit reproduces the training targets exactly.

use faer::linalg::solvers::Solve;
use faer::{Mat, Side};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use wide::f64x4;

/// Centers closer than this (∞-norm) are merged by [`dedupe`].
pub const DUPLICATE_TOLERANCE: f64 = 1e-12;

/// Relative singular-value floor for the affine part of the system.
const AFFINE_RANK_TOLERANCE: f64 = 1e-10;

/// Relative backward error above which a solve is reported as singular.
const RESIDUAL_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Error, PartialEq)]
pub enum SurrogateError {
    #[error("need at least {needed} distinct points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("interpolation system is singular: {0}")]
    SingularSystem(String),
    #[error("expected dimension {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite training data at point {0}")]
    NonFinite(usize),
}

pub type Result<T> = std::result::Result<T, SurrogateError>;

/// Polynomial tail appended to the kernel expansion.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tail {
    /// Affine tail with orthogonality constraints.
    #[default]
    Affine,
    /// Plain kernel system `Φ w = y`.
    None,
}

/// Deduplicated interpolation nodes with one target each.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSet {
    dim: usize,
    points: Vec<Vec<f64>>,
    targets: Vec<f64>,
}

impl TrainingSet {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn shifted(&self, offset: &[f64]) -> Self {
        let points = self
            .points
            .iter()
            .map(|p| p.iter().zip(offset).map(|(a, b)| a + b).collect())
            .collect();
        Self {
            dim: self.dim,
            points,
            targets: self.targets.clone(),
        }
    }
}

/// Merges points whose coordinates agree within [`DUPLICATE_TOLERANCE`];
/// the merged target is the mean of the duplicates. First-seen order is kept.
pub fn dedupe<P: AsRef<[f64]>>(points: &[(P, f64)]) -> TrainingSet {
    let dim = points.first().map_or(0, |(p, _)| p.as_ref().len());
    let mut centers: Vec<Vec<f64>> = Vec::new();
    let mut sums: Vec<(f64, usize)> = Vec::new();
    for (p, y) in points {
        let p = p.as_ref();
        let hit = centers.iter().position(|c| {
            c.iter()
                .zip(p)
                .all(|(a, b)| (a - b).abs() <= DUPLICATE_TOLERANCE)
        });
        match hit {
            Some(k) => {
                sums[k].0 += y;
                sums[k].1 += 1;
            }
            None => {
                centers.push(p.to_vec());
                sums.push((*y, 1));
            }
        }
    }
    TrainingSet {
        dim,
        points: centers,
        targets: sums.into_iter().map(|(s, c)| s / c as f64).collect(),
    }
}

/// `r² ln r` written in terms of `r²`; zero at the origin.
#[inline]
pub fn thin_plate(r2: f64) -> f64 {
    thin_plate4(f64x4::splat(r2)).as_array()[0]
}

/// Four lanes of [`thin_plate`]. Both the fit and evaluation go through this
/// one routine so interpolation stays exact at the centers.
#[inline]
fn thin_plate4(r2: f64x4) -> f64x4 {
    let positive = r2.simd_gt(f64x4::ZERO);
    let safe = positive.select(r2, f64x4::ONE);
    positive.select(f64x4::splat(0.5) * safe * safe.ln(), f64x4::ZERO)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RbfSurrogate {
    dim: usize,
    /// Row-major, one center per row.
    centers: Vec<f64>,
    rbf_weights: Vec<f64>,
    /// `[a_0, a_1..a_d]`; empty without a tail.
    poly_weights: Vec<f64>,
    tail: Tail,
}

impl RbfSurrogate {
    pub fn fit(training: &TrainingSet, tail: Tail) -> Result<Self> {
        let (n, d) = (training.len(), training.dim);
        let needed = match tail {
            Tail::Affine => d + 2,
            Tail::None => 1,
        };
        if d == 0 || n < needed {
            return Err(SurrogateError::TooFewPoints { needed, got: n });
        }
        for (k, (p, y)) in training.points.iter().zip(&training.targets).enumerate() {
            if p.len() != d {
                return Err(SurrogateError::DimensionMismatch {
                    expected: d,
                    got: p.len(),
                });
            }
            if !y.is_finite() || p.iter().any(|v| !v.is_finite()) {
                return Err(SurrogateError::NonFinite(k));
            }
        }
        let centers: Vec<f64> = training.points.concat();
        let m = if tail == Tail::Affine { d + 1 } else { 0 };
        let size = n + m;

        if tail == Tail::Affine {
            check_affine_rank(&centers, n, d)?;
        }

        let mut system = Mat::<f64>::zeros(size, size);
        for i in 0..n {
            let ci = &centers[i * d..(i + 1) * d];
            for j in 0..i {
                let cj = &centers[j * d..(j + 1) * d];
                let v = thin_plate(sq_dist(ci, cj));
                system[(i, j)] = v;
                system[(j, i)] = v;
            }
            if m > 0 {
                system[(i, n)] = 1.0;
                system[(n, i)] = 1.0;
                for (j, &x) in ci.iter().enumerate() {
                    system[(i, n + 1 + j)] = x;
                    system[(n + 1 + j, i)] = x;
                }
            }
        }
        let mut rhs = Mat::<f64>::zeros(size, 1);
        for (k, &y) in training.targets.iter().enumerate() {
            rhs[(k, 0)] = y;
        }

        let factor = system.lblt(Side::Lower);
        let mut sol = factor.solve(&rhs);
        // One step of iterative refinement.
        let residual = &rhs - &system * &sol;
        let correction = factor.solve(&residual);
        sol += &correction;

        let residual = &rhs - &system * &sol;
        let backward = max_abs(&residual)
            / (inf_norm(&system) * max_abs(&sol) + max_abs(&rhs)).max(f64::MIN_POSITIVE);
        if !backward.is_finite() || backward > RESIDUAL_TOLERANCE {
            return Err(SurrogateError::SingularSystem(format!(
                "relative backward error {backward:.3e} after refinement"
            )));
        }

        let coeffs: Vec<f64> = (0..size).map(|k| sol[(k, 0)]).collect();
        Ok(Self {
            dim: d,
            centers,
            rbf_weights: coeffs[..n].to_vec(),
            poly_weights: coeffs[n..].to_vec(),
            tail,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn tail(&self) -> Tail {
        self.tail
    }

    pub fn rbf_weights(&self) -> &[f64] {
        &self.rbf_weights
    }

    pub fn poly_weights(&self) -> &[f64] {
        &self.poly_weights
    }

    pub fn centers(&self) -> impl Iterator<Item = &[f64]> {
        self.centers.chunks_exact(self.dim)
    }

    pub fn evaluate(&self, theta: &[f64]) -> Result<f64> {
        if theta.len() != self.dim {
            return Err(SurrogateError::DimensionMismatch {
                expected: self.dim,
                got: theta.len(),
            });
        }
        Ok(self.value(theta))
    }

    /// Unchecked evaluation for hot loops. `theta` must have length `dim`.
    #[inline]
    pub fn value(&self, theta: &[f64]) -> f64 {
        debug_assert_eq!(theta.len(), self.dim);
        let d = self.dim;
        let mut acc = f64x4::ZERO;
        let blocks = self.centers.chunks_exact(4 * d).zip(self.rbf_weights.chunks_exact(4));
        for (block, w) in blocks {
            let mut r2 = [0.0; 4];
            for (lane, c) in r2.iter_mut().zip(block.chunks_exact(d)) {
                *lane = sq_dist(c, theta);
            }
            acc += f64x4::from(<[f64; 4]>::try_from(w).expect("chunk of 4")) * thin_plate4(f64x4::from(r2));
        }
        let tail_start = self.rbf_weights.len() / 4 * 4;
        let mut kernel = acc.reduce_add();
        for (c, &w) in self.centers[tail_start * d..]
            .chunks_exact(d)
            .zip(&self.rbf_weights[tail_start..])
        {
            kernel += w * thin_plate(sq_dist(c, theta));
        }
        match self.poly_weights.split_first() {
            Some((a0, lin)) => kernel + a0 + lin.iter().zip(theta).map(|(a, x)| a * x).sum::<f64>(),
            None => kernel,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("surrogate serializes")
    }
}

pub fn fit(training: &TrainingSet) -> Result<RbfSurrogate> {
    RbfSurrogate::fit(training, Tail::Affine)
}

pub fn evaluate(surrogate: &RbfSurrogate, theta: &[f64]) -> Result<f64> {
    surrogate.evaluate(theta)
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn max_abs(m: &Mat<f64>) -> f64 {
    (0..m.nrows())
        .flat_map(|i| (0..m.ncols()).map(move |j| (i, j)))
        .map(|(i, j)| m[(i, j)].abs())
        .fold(0.0, f64::max)
}

fn inf_norm(m: &Mat<f64>) -> f64 {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)].abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Rejects center sets whose affine span is lower-dimensional.
fn check_affine_rank(centers: &[f64], n: usize, d: usize) -> Result<()> {
    let p = Mat::<f64>::from_fn(n, d + 1, |i, j| if j == 0 { 1.0 } else { centers[i * d + j - 1] });
    let sv = p
        .singular_values()
        .map_err(|e| SurrogateError::SingularSystem(format!("svd failed: {e:?}")))?;
    let hi = sv.iter().copied().fold(0.0, f64::max);
    let lo = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if !(lo > AFFINE_RANK_TOLERANCE * hi) {
        return Err(SurrogateError::SingularSystem(
            "centers are affinely degenerate".into(),
        ));
    }
    Ok(())
}
