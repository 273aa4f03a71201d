//! Per-sub-motion PCA pose spaces.
//!
//! A pose `θ` in sub-motion `m` is modelled as `θ = αᵀB + a`, where the rows of `B`
//! are the top principal directions of the sub-motion's training poses and `a` is
//! their mean.

use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::kinematics::PoseVector;
use crate::numeric::{dot, exact_sum};

/// Coefficient width used when none is given.
pub const DEFAULT_K: usize = 25;

/// Relative floor applied to eigenvalues before computing prior weights.
pub const EIGENVALUE_FLOOR: f64 = 1e-8;

/// Fitted PCA space of one sub-motion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSpace {
    pub submotion: String,
    #[serde(rename = "K")]
    pub k: usize,
    pub mean: Vec<f64>,
    /// `K` orthonormal rows of length `3N`.
    pub bases: Vec<Vec<f64>>,
    /// Descending, nonnegative.
    pub eigenvalues: Vec<f64>,
    /// Trace of the full covariance. Defaults to the eigenvalue sum when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_variance: Option<f64>,
    /// Mean training-set coefficients; zero when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coefficient_mean: Option<Vec<f64>>,
}

/// Coordinates of a pose in an [`EmbeddingSpace`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PoseCoefficients(pub Vec<f64>);

impl PoseCoefficients {
    pub fn zeros(k: usize) -> Self {
        PoseCoefficients(vec![0.0; k])
    }
}

fn eigen_descending(cov: DMatrix<f64>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let dim = cov.nrows();
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .partial_cmp(&eig.eigenvalues[i])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });
    let values = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let vectors = order
        .iter()
        .map(|&i| {
            let mut v: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
            fix_sign(&mut v);
            v
        })
        .collect();
    (values, vectors)
}

/// Flips `v` so that its largest-magnitude entry (lowest index on ties) is positive.
pub fn fix_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        for x in v.iter_mut() {
            *x = -*x;
        }
    }
}

/// Sample mean and population covariance (`1/n`) with exact accumulation, so the
/// result does not depend on sample order or on duplicating the whole set.
pub fn mean_and_covariance(samples: &[&[f64]]) -> (Vec<f64>, DMatrix<f64>) {
    let n = samples.len();
    let dim = samples[0].len();
    let mean: Vec<f64> = (0..dim)
        .map(|j| exact_sum(samples.iter().map(|s| s[j])) / n as f64)
        .collect();
    let centered: Vec<Vec<f64>> = samples
        .iter()
        .map(|s| s.iter().zip(&mean).map(|(x, m)| x - m).collect())
        .collect();
    let mut cov = DMatrix::zeros(dim, dim);
    for j in 0..dim {
        for k in j..dim {
            let c = exact_sum(centered.iter().map(|r| r[j] * r[k])) / n as f64;
            cov[(j, k)] = c;
            cov[(k, j)] = c;
        }
    }
    (mean, cov)
}

/// Fits a `k`-dimensional space to the given poses.
pub fn fit_space(poses: &[PoseVector], k: usize, submotion: &str) -> Result<EmbeddingSpace> {
    let rows: Vec<&[f64]> = poses.iter().map(|p| p.as_slice()).collect();
    fit_space_from_rows(&rows, k, submotion)
}

pub fn fit_space_from_rows(rows: &[&[f64]], k: usize, submotion: &str) -> Result<EmbeddingSpace> {
    if rows.len() < k + 1 {
        return Err(Error::InsufficientSamples {
            needed: k + 1,
            got: rows.len(),
        });
    }
    let dim = rows[0].len();
    if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: bad.len(),
        });
    }
    if k == 0 || k > dim {
        return Err(Error::InvalidInput(format!(
            "coefficient dimension {k} must be in 1..={dim}"
        )));
    }
    if rows.iter().any(|r| r.iter().any(|x| !x.is_finite())) {
        return Err(Error::NonFinite("training pose".into()));
    }
    let (mean, cov) = mean_and_covariance(rows);
    let total_variance = exact_sum((0..dim).map(|j| cov[(j, j)]));
    let (values, vectors) = eigen_descending(cov);
    let bases: Vec<Vec<f64>> = vectors.into_iter().take(k).collect();
    let coefficient_mean = (0..k)
        .map(|c| {
            exact_sum(rows.iter().map(|r| {
                r.iter()
                    .zip(&mean)
                    .zip(&bases[c])
                    .map(|((x, m), b)| (x - m) * b)
                    .sum::<f64>()
            })) / rows.len() as f64
        })
        .collect();
    Ok(EmbeddingSpace {
        submotion: submotion.to_string(),
        k,
        mean,
        bases,
        eigenvalues: values.into_iter().take(k).collect(),
        total_variance: Some(total_variance),
        coefficient_mean: Some(coefficient_mean),
    })
}

impl EmbeddingSpace {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn total_variance(&self) -> f64 {
        self.total_variance
            .unwrap_or_else(|| self.eigenvalues.iter().sum())
    }

    pub fn coefficient_mean(&self) -> Vec<f64> {
        self.coefficient_mean
            .clone()
            .unwrap_or_else(|| vec![0.0; self.k])
    }

    pub fn validate(&self) -> Result<()> {
        let dim = self.mean.len();
        if self.k == 0 || self.k > dim {
            return Err(Error::InvalidInput(format!("K = {} out of range", self.k)));
        }
        if self.bases.len() != self.k || self.eigenvalues.len() != self.k {
            return Err(Error::DimensionMismatch {
                expected: self.k,
                got: self.bases.len().min(self.eigenvalues.len()),
            });
        }
        if let Some(b) = self.bases.iter().find(|b| b.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: b.len(),
            });
        }
        if let Some(m) = &self.coefficient_mean {
            if m.len() != self.k {
                return Err(Error::DimensionMismatch {
                    expected: self.k,
                    got: m.len(),
                });
            }
        }
        Ok(())
    }

    /// `α = B (θ - a)`.
    pub fn encode(&self, theta: &[f64]) -> Result<PoseCoefficients> {
        if theta.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: theta.len(),
            });
        }
        let centered: Vec<f64> = theta.iter().zip(&self.mean).map(|(x, m)| x - m).collect();
        Ok(PoseCoefficients(
            self.bases.iter().map(|b| dot(b, &centered)).collect(),
        ))
    }

    /// `θ = αᵀB + a`.
    pub fn decode(&self, alpha: &[f64]) -> Result<PoseVector> {
        if alpha.len() != self.k {
            return Err(Error::DimensionMismatch {
                expected: self.k,
                got: alpha.len(),
            });
        }
        let mut theta = self.mean.clone();
        for (a, b) in alpha.iter().zip(&self.bases) {
            for (t, bv) in theta.iter_mut().zip(b) {
                *t += a * bv;
            }
        }
        Ok(PoseVector(theta))
    }

    /// `c_k = Σ_{j≤k} λ_j / total_variance`.
    pub fn cumulative_variance(&self) -> Vec<f64> {
        let total = self.total_variance();
        let mut acc = 0.0;
        self.eigenvalues
            .iter()
            .map(|l| {
                acc += l;
                if total > 0.0 {
                    (acc / total).min(1.0)
                } else {
                    1.0
                }
            })
            .collect()
    }

    /// Smallest `k` whose cumulative variance reaches `ratio`, if any.
    pub fn components_for(&self, ratio: f64) -> Option<usize> {
        self.cumulative_variance()
            .iter()
            .position(|&c| c >= ratio)
            .map(|i| i + 1)
    }

    /// Prior weights `W_k = sqrt(λ_1 / λ_k)` after flooring `λ_k` at `1e-8 λ_1`.
    pub fn prior_weights(&self) -> Vec<f64> {
        let top = self.eigenvalues.first().copied().unwrap_or(0.0);
        if top <= 0.0 {
            return vec![1.0; self.k];
        }
        let floor = EIGENVALUE_FLOOR * top;
        self.eigenvalues
            .iter()
            .map(|&l| (top / l.max(floor)).sqrt())
            .collect()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let space: EmbeddingSpace = serde_json::from_str(text)?;
        space.validate()?;
        Ok(space)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

/// Loads every `*.json` embedding space in a directory, sorted by file name.
pub fn load_spaces_dir(dir: impl AsRef<Path>) -> Result<Vec<EmbeddingSpace>> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    paths.sort();
    paths.into_iter().map(EmbeddingSpace::load).collect()
}

/// Space constants placed on a tape.
#[derive(Clone, Copy, Debug)]
pub struct SpaceVars {
    pub mean: Var,
    pub bases: Var,
    pub weights: Var,
    pub coefficient_mean: Var,
    pub k: usize,
}

impl SpaceVars {
    pub fn new(tape: &mut Tape, space: &EmbeddingSpace) -> Self {
        let dim = space.dim();
        SpaceVars {
            mean: tape.constant(Tensor::from_parts(vec![dim], space.mean.clone())),
            bases: tape.constant(Tensor::from_parts(vec![space.k, dim], space.bases.concat())),
            weights: tape.constant(Tensor::from_parts(vec![space.k], space.prior_weights())),
            coefficient_mean: tape
                .constant(Tensor::from_parts(vec![space.k], space.coefficient_mean())),
            k: space.k,
        }
    }
}

/// Differentiable decode: `alpha [K]` to `theta [3N]`.
pub fn decode_on_tape(tape: &mut Tape, vars: &SpaceVars, alpha: Var) -> Result<Var> {
    let row = tape.reshape(alpha, &[1, vars.k])?;
    let lin = tape.matmul(row, vars.bases)?;
    let dim = tape.shape(lin)[1];
    let lin = tape.reshape(lin, &[dim])?;
    tape.add(lin, vars.mean)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_space_samples(n: usize, dim: usize, seed: u64) -> Vec<PoseVector> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scales: Vec<f64> = (0..dim).map(|j| 1.0 / (1.0 + j as f64)).collect();
        (0..n)
            .map(|_| {
                PoseVector(
                    scales
                        .iter()
                        .map(|s| s * rng.sample::<f64, _>(StandardNormal))
                        .collect(),
                )
            })
            .collect()
    }

    #[test]
    fn rank_one_line_recovers_direction_and_variance() {
        let a = [0.5, -1.0, 2.0, 0.25];
        let b = [0.5, 0.5, 0.5, 0.5];
        let cs = [-2.0, -1.0, 0.0, 0.5, 1.0, 1.5];
        let poses: Vec<PoseVector> = cs
            .iter()
            .map(|c| PoseVector(a.iter().zip(&b).map(|(x, y)| x + c * y).collect()))
            .collect();
        let space = fit_space(&poses, 1, "line").unwrap();
        let mean_c = cs.iter().sum::<f64>() / cs.len() as f64;
        let var_c = cs.iter().map(|c| (c - mean_c).powi(2)).sum::<f64>() / cs.len() as f64;
        assert!((space.eigenvalues[0] - var_c).abs() < 1e-12);
        let d = dot(&space.bases[0], &b).abs();
        assert!((d - 1.0).abs() < 1e-12);
        assert!(space
            .cumulative_variance()
            .iter()
            .all(|&c| (c - 1.0).abs() < 1e-12));
    }

    #[test]
    fn duplicated_set_gives_bitwise_identical_space() {
        let poses = random_space_samples(40, 12, 3);
        let doubled: Vec<PoseVector> = poses.iter().chain(poses.iter()).cloned().collect();
        let a = fit_space(&poses, 5, "x").unwrap();
        let b = fit_space(&doubled, 5, "x").unwrap();
        assert_eq!(a.mean, b.mean);
        assert_eq!(a.bases, b.bases);
        assert_eq!(a.eigenvalues, b.eigenvalues);
    }

    #[test]
    fn encode_decode_examples() {
        let poses = random_space_samples(50, 8, 11);
        let space = fit_space(&poses, 3, "x").unwrap();
        let zero = space.encode(&space.mean).unwrap();
        assert!(zero.0.iter().all(|&v| v.abs() < 1e-15));
        assert_eq!(space.decode(&[0.0; 3]).unwrap().0, space.mean);

        let c = 0.7;
        let theta: Vec<f64> = space
            .mean
            .iter()
            .zip(&space.bases[0])
            .map(|(m, b)| m + c * b)
            .collect();
        let alpha = space.encode(&theta).unwrap();
        assert!((alpha.0[0] - c).abs() < 1e-12);
        assert!(alpha.0[1].abs() < 1e-12 && alpha.0[2].abs() < 1e-12);

        // affine linearity
        let a1 = [0.3, -0.2, 1.1];
        let a2 = [-0.5, 0.9, 0.05];
        let sum: Vec<f64> = a1.iter().zip(&a2).map(|(x, y)| x + y).collect();
        let lhs: Vec<f64> = space
            .decode(&a1)
            .unwrap()
            .0
            .iter()
            .zip(space.decode(&a2).unwrap().0)
            .zip(&space.mean)
            .map(|((x, y), m)| x + y - m)
            .collect();
        let rhs = space.decode(&sum).unwrap().0;
        for (x, y) in lhs.iter().zip(&rhs) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn half_std_pose_on_first_component() {
        let poses = random_space_samples(60, 6, 5);
        let space = fit_space(&poses, 2, "x").unwrap();
        let half_std = 0.5 * space.eigenvalues[0].sqrt();
        let theta = space.decode(&[half_std, 0.0]).unwrap();
        let back = space.encode(&theta.0).unwrap();
        assert!((back.0[0] - half_std).abs() < 1e-12);
        let moved: f64 = theta
            .0
            .iter()
            .zip(&space.mean)
            .map(|(t, m)| (t - m).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!((moved - half_std).abs() < 1e-12);
    }

    #[test]
    fn prior_weight_examples() {
        let mut space = fit_space(&random_space_samples(30, 4, 1), 2, "x").unwrap();
        space.eigenvalues = vec![4.0, 1.0];
        assert_eq!(space.prior_weights(), vec![1.0, 2.0]);
        space.eigenvalues = vec![3.0, 3.0];
        assert_eq!(space.prior_weights(), vec![1.0, 1.0]);
        space.eigenvalues = vec![3.0, 0.0];
        let w = space.prior_weights();
        assert!((w[1] - 1e4).abs() < 1e-6);
    }

    #[test]
    fn fit_errors() {
        let poses = random_space_samples(3, 4, 1);
        assert!(matches!(
            fit_space(&poses, 3, "x"),
            Err(Error::InsufficientSamples { .. })
        ));
        let poses = random_space_samples(10, 4, 1);
        assert!(fit_space(&poses, 5, "x").is_err());
        let space = fit_space(&poses, 2, "x").unwrap();
        assert!(space.encode(&[0.0; 3]).is_err());
        assert!(space.decode(&[0.0; 3]).is_err());
    }

    #[test]
    fn isotropic_cumulative_variance_is_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let d = 4;
        // vertices of a cross-polytope: exactly isotropic second moment
        let mut poses = Vec::new();
        for j in 0..d {
            for s in [-1.0, 1.0] {
                let mut v = vec![0.0; d];
                v[j] = s * (1.0 + 0.0 * rng.gen::<f64>());
                poses.push(PoseVector(v));
            }
        }
        let space = fit_space(&poses, d, "iso").unwrap();
        for (k, c) in space.cumulative_variance().iter().enumerate() {
            assert!((c - (k + 1) as f64 / d as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn json_round_trip_is_bitwise() {
        let space = fit_space(&random_space_samples(30, 6, 2), 3, "twist").unwrap();
        let back = EmbeddingSpace::from_json(&space.to_json().unwrap()).unwrap();
        assert_eq!(space, back);
    }
}
