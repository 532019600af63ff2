//! Visual-word codebook: k-means training, nearest-word assignment and
//! residual computation.
//!
//! Training is Lloyd's algorithm with k-means++ seeding. Given the same
//! sample, kappa, iteration budget and seed it produces bitwise-identical
//! centroids: the RNG is a fixed-stream ChaCha generator, the assignment
//! step is parallelized over fixed-size point blocks, and the update step
//! accumulates in point order.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

const ASSIGN_BLOCK: usize = 256;

/// kappa centroids in descriptor space. Immutable once trained.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    centroids: Vec<f32>,
    kappa: usize,
    dim: usize,
    seed: u64,
}

/// The `multiplicity` nearest visual words of one descriptor, with squared
/// Euclidean distances in ascending order. Ties go to the lower word index.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub word_ids: Vec<u32>,
    pub distances: Vec<f64>,
}

/// Per-iteration diagnostics of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub iterations: usize,
    /// Sum of squared distances to the assigned centroid after each
    /// assignment pass (empty-cluster repair already applied).
    pub objective: Vec<f64>,
}

fn squared_distance(a: &[f32], b: &[f32]) -> f64 {
    let mut acc = 0.0f64;
    for (&x, &y) in a.iter().zip(b) {
        let d = x as f64 - y as f64;
        acc += d * d;
    }
    acc
}

impl Codebook {
    pub fn from_centroids(centroids: Vec<f32>, kappa: usize, dim: usize, seed: u64) -> Result<Self> {
        if kappa == 0 || dim == 0 {
            return Err(Error::InvalidParameter(format!(
                "kappa and dim must be positive, got kappa={kappa} dim={dim}"
            )));
        }
        if centroids.len() != kappa * dim {
            return Err(Error::DimensionMismatch {
                expected: kappa * dim,
                got: centroids.len(),
            });
        }
        if let Some(index) = centroids.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue {
                index,
                value: centroids[index],
            });
        }
        Ok(Self {
            centroids,
            kappa,
            dim,
            seed,
        })
    }

    pub fn train(sample: &[f32], dim: usize, kappa: usize, iters: usize, seed: u64) -> Result<Self> {
        Ok(Self::train_detailed(sample, dim, kappa, iters, seed)?.0)
    }

    pub fn train_detailed(
        sample: &[f32],
        dim: usize,
        kappa: usize,
        iters: usize,
        seed: u64,
    ) -> Result<(Self, TrainReport)> {
        if dim == 0 || kappa == 0 {
            return Err(Error::InvalidParameter(format!(
                "kappa and dim must be positive, got kappa={kappa} dim={dim}"
            )));
        }
        if sample.len() % dim != 0 {
            return Err(Error::DimensionMismatch {
                expected: dim * (sample.len() / dim + 1),
                got: sample.len(),
            });
        }
        let n = sample.len() / dim;
        if n < kappa {
            return Err(Error::SampleTooSmall {
                sample: n,
                required: kappa,
            });
        }
        if let Some(index) = sample.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue {
                index,
                value: sample[index],
            });
        }

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut centroids = seed_plus_plus(sample, dim, n, kappa, &mut rng);

        let mut assignments = vec![0u32; n];
        let mut previous: Option<Vec<u32>> = None;
        let mut point_dist2 = vec![0.0f64; n];
        let mut objective_history = Vec::new();
        let mut iterations = 0;

        for _ in 0..iters {
            iterations += 1;
            assign_blocked(sample, dim, &centroids, kappa, &mut assignments);

            // Exact distances to the assigned centroid, for the objective and
            // for empty-cluster repair.
            point_dist2
                .par_iter_mut()
                .enumerate()
                .for_each(|(i, d)| {
                    let a = assignments[i] as usize;
                    *d = squared_distance(
                        &sample[i * dim..(i + 1) * dim],
                        &centroids[a * dim..(a + 1) * dim],
                    );
                });

            let mut counts = vec![0usize; kappa];
            for &a in &assignments {
                counts[a as usize] += 1;
            }
            // Re-seed empty clusters from the point currently farthest from
            // its centroid; repeat until none are empty.
            loop {
                let empties: Vec<usize> =
                    (0..kappa).filter(|&c| counts[c] == 0).collect();
                if empties.is_empty() {
                    break;
                }
                for e in empties {
                    if counts[e] != 0 {
                        continue;
                    }
                    let mut far = 0usize;
                    for i in 1..n {
                        if point_dist2[i] > point_dist2[far] {
                            far = i;
                        }
                    }
                    let old = assignments[far] as usize;
                    counts[old] -= 1;
                    counts[e] += 1;
                    assignments[far] = e as u32;
                    centroids[e * dim..(e + 1) * dim]
                        .copy_from_slice(&sample[far * dim..(far + 1) * dim]);
                    point_dist2[far] = 0.0;
                }
            }

            let objective: f64 = point_dist2.iter().sum();
            objective_history.push(objective);
            log::debug!("k-means iteration {iterations}: objective {objective:.6e}");

            if previous.as_deref() == Some(assignments.as_slice()) {
                break;
            }
            previous = Some(assignments.clone());

            // Update step: means accumulated in point order.
            let mut sums = vec![0.0f64; kappa * dim];
            for (i, &a) in assignments.iter().enumerate() {
                let row = &sample[i * dim..(i + 1) * dim];
                let acc = &mut sums[a as usize * dim..(a as usize + 1) * dim];
                for (s, &v) in acc.iter_mut().zip(row) {
                    *s += v as f64;
                }
            }
            for c in 0..kappa {
                let count = counts[c] as f64;
                for j in 0..dim {
                    centroids[c * dim + j] = (sums[c * dim + j] / count) as f32;
                }
            }
        }

        Ok((
            Self {
                centroids,
                kappa,
                dim,
                seed,
            },
            TrainReport {
                iterations,
                objective: objective_history,
            },
        ))
    }

    pub fn kappa(&self) -> usize {
        self.kappa
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn centroids(&self) -> &[f32] {
        &self.centroids
    }

    pub fn centroid(&self, word: u32) -> Result<&[f32]> {
        let w = word as usize;
        if w >= self.kappa {
            return Err(Error::WordOutOfRange {
                word,
                kappa: self.kappa,
            });
        }
        Ok(&self.centroids[w * self.dim..(w + 1) * self.dim])
    }

    /// The `multiplicity` nearest visual words by exhaustive scan.
    pub fn assign(&self, x: &[f32], multiplicity: usize) -> Result<Assignment> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        if multiplicity == 0 || multiplicity > self.kappa {
            return Err(Error::InvalidParameter(format!(
                "multiplicity {multiplicity} must be in 1..={}",
                self.kappa
            )));
        }
        let mut best: Vec<(f64, u32)> = Vec::with_capacity(multiplicity + 1);
        for w in 0..self.kappa {
            let d2 = squared_distance(x, &self.centroids[w * self.dim..(w + 1) * self.dim]);
            let key = (d2, w as u32);
            if best.len() < multiplicity || key < *best.last().unwrap() {
                let pos = best.partition_point(|probe| *probe < key);
                best.insert(pos, key);
                best.truncate(multiplicity);
            }
        }
        Ok(Assignment {
            word_ids: best.iter().map(|&(_, w)| w).collect(),
            distances: best.iter().map(|&(d, _)| d).collect(),
        })
    }

    /// `x - centroid[word]`, computed in f32.
    pub fn residual(&self, x: &[f32], word: u32) -> Result<Vec<f32>> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        let c = self.centroid(word)?;
        Ok(x.iter().zip(c).map(|(&a, &b)| a - b).collect())
    }

    /// Expanded (word, residual) pairs for a descriptor assigned to its
    /// `multiplicity` nearest words; each residual is taken against its own
    /// word's centroid.
    pub fn quantize(&self, x: &[f32], multiplicity: usize) -> Result<Vec<(u32, Vec<f32>)>> {
        let assignment = self.assign(x, multiplicity)?;
        assignment
            .word_ids
            .iter()
            .map(|&w| Ok((w, self.residual(x, w)?)))
            .collect()
    }
}

/// k-means++ seeding: first centroid uniform, the rest sampled with
/// probability proportional to the squared distance to the nearest chosen
/// centroid. If all remaining mass is zero (duplicate-heavy samples) the
/// point with the largest remaining distance is taken, lowest index first.
fn seed_plus_plus(
    sample: &[f32],
    dim: usize,
    n: usize,
    kappa: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<f32> {
    let mut centroids = vec![0.0f32; kappa * dim];
    let first = rng.random_range(0..n);
    centroids[..dim].copy_from_slice(&sample[first * dim..(first + 1) * dim]);

    let mut min_d2 = vec![0.0f64; n];
    min_d2.par_iter_mut().enumerate().for_each(|(i, d)| {
        *d = squared_distance(&sample[i * dim..(i + 1) * dim], &centroids[..dim]);
    });

    for c in 1..kappa {
        let total: f64 = min_d2.iter().sum();
        let chosen = if total > 0.0 {
            let r = rng.random::<f64>() * total;
            let mut acc = 0.0f64;
            let mut chosen = n - 1;
            for (i, &d) in min_d2.iter().enumerate() {
                acc += d;
                if acc >= r {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            let mut far = 0usize;
            for i in 1..n {
                if min_d2[i] > min_d2[far] {
                    far = i;
                }
            }
            far
        };
        let (head, tail) = centroids.split_at_mut(c * dim);
        tail[..dim].copy_from_slice(&sample[chosen * dim..(chosen + 1) * dim]);
        let _ = head;
        let new_c = &centroids[c * dim..(c + 1) * dim];
        min_d2.par_iter_mut().enumerate().for_each(|(i, d)| {
            let cand = squared_distance(&sample[i * dim..(i + 1) * dim], new_c);
            if cand < *d {
                *d = cand;
            }
        });
    }
    centroids
}

/// Nearest-centroid assignment for all points, blocked matrix products for
/// the inner loop. Ties go to the lower word index. Block boundaries are
/// fixed, so the result does not depend on the worker count.
fn assign_blocked(
    sample: &[f32],
    dim: usize,
    centroids: &[f32],
    kappa: usize,
    assignments: &mut [u32],
) {
    let c_t = nalgebra::DMatrix::<f32>::from_row_slice(kappa, dim, centroids).transpose();
    let cnorm2: Vec<f64> = (0..kappa)
        .map(|w| {
            centroids[w * dim..(w + 1) * dim]
                .iter()
                .map(|&v| v as f64 * v as f64)
                .sum()
        })
        .collect();
    assignments
        .par_chunks_mut(ASSIGN_BLOCK)
        .enumerate()
        .for_each(|(block, out)| {
            let start = block * ASSIGN_BLOCK;
            let rows = out.len();
            let x = nalgebra::DMatrix::<f32>::from_row_slice(
                rows,
                dim,
                &sample[start * dim..(start + rows) * dim],
            );
            let scores = &x * &c_t;
            for (r, slot) in out.iter_mut().enumerate() {
                let mut best_w = 0usize;
                let mut best_d = f64::INFINITY;
                for w in 0..kappa {
                    let d = cnorm2[w] - 2.0 * scores[(r, w)] as f64;
                    if d < best_d {
                        best_d = d;
                        best_w = w;
                    }
                }
                *slot = best_w as u32;
            }
        });
}
