//! Unsupervised partitioning of state embeddings into runtime states.
//!
//! For every candidate K, k-means (squared Euclidean, k-means++ seeding,
//! 10 restarts, at most 100 Lloyd iterations) is run and the K with the best
//! mean silhouette is kept; ties go to the smaller K. Centroids are renormalised
//! to unit length after every update so they live on the same sphere as the
//! embeddings.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fusion::SystemStateEmbedding;
use crate::linalg::sq_dist;
use crate::rng::{stable_hash64, stream_rng};

pub const RESTARTS: usize = 10;
pub const MAX_ITERATIONS: usize = 100;

#[derive(Debug, Error, PartialEq)]
pub enum StateError {
    #[error("not enough data: {n} points for k range [{k_min}, {k_max}]")]
    InsufficientData { n: usize, k_min: usize, k_max: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("silhouette needs at least two non-empty clusters")]
    DegeneratePartition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KDiagnostic {
    pub k: usize,
    /// Mean silhouette of the best restart; `None` when undefined.
    pub silhouette: Option<f64>,
    /// Within-cluster sum of squared distances of the best restart.
    pub inertia: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatePartition {
    pub k: usize,
    pub centroids: Vec<Vec<f64>>,
    pub sizes: Vec<usize>,
    pub diagnostics: Vec<KDiagnostic>,
    pub seed: u64,
}

impl StatePartition {
    pub fn dim(&self) -> usize {
        self.centroids.first().map_or(0, Vec::len)
    }
}

/// Hex digest of the partition's canonical JSON; bundles record it to detect
/// use against a different partition.
pub fn partition_checksum(p: &StatePartition) -> String {
    let bytes = serde_json::to_vec(p).expect("partition serialises");
    format!("{:016x}", stable_hash64(&bytes))
}

/// Index of the nearest centroid; ties go to the lowest index.
pub fn nearest(centroids: &[Vec<f64>], z: &[f64]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (k, c) in centroids.iter().enumerate() {
        let d = sq_dist(c, z);
        if d < best_d {
            best_d = d;
            best = k;
        }
    }
    best
}

pub fn assign(partition: &StatePartition, z: &[f64]) -> Result<usize, StateError> {
    if z.len() != partition.dim() {
        return Err(StateError::DimensionMismatch {
            expected: partition.dim(),
            got: z.len(),
        });
    }
    Ok(nearest(&partition.centroids, z))
}

fn normalize_or_keep(v: &mut [f64], fallback: &[f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 && n.is_finite() {
        v.iter_mut().for_each(|x| *x /= n);
    } else {
        v.copy_from_slice(fallback);
    }
}

struct KMeansRun {
    centroids: Vec<Vec<f64>>,
    assignments: Vec<usize>,
    inertia: f64,
}

fn plus_plus_seeds(points: &[&[f64]], k: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centroids = vec![points[rng.gen_range(0..n)].to_vec()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 && target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            rng.gen_range(0..n)
        };
        let c = points[pick].to_vec();
        for (di, p) in d2.iter_mut().zip(points) {
            *di = di.min(sq_dist(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

fn kmeans_once(points: &[&[f64]], k: usize, rng: &mut impl Rng) -> KMeansRun {
    let dim = points[0].len();
    let mut centroids = plus_plus_seeds(points, k, rng);
    let mut assignments = vec![usize::MAX; points.len()];
    for _ in 0..MAX_ITERATIONS {
        let mut changed = false;
        for (a, p) in assignments.iter_mut().zip(points) {
            let k_near = nearest(&centroids, p);
            if *a != k_near {
                *a = k_near;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (&a, p) in assignments.iter().zip(points) {
            counts[a] += 1;
            for (s, x) in sums[a].iter_mut().zip(p.iter()) {
                *s += x;
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                // Reseed with the point farthest from its current centroid.
                let far = (0..points.len())
                    .max_by(|&i, &j| {
                        let di = sq_dist(points[i], &centroids[assignments[i]]);
                        let dj = sq_dist(points[j], &centroids[assignments[j]]);
                        di.total_cmp(&dj).then(j.cmp(&i))
                    })
                    .expect("non-empty");
                centroids[c] = points[far].to_vec();
                continue;
            }
            let inv = 1.0 / counts[c] as f64;
            sums[c].iter_mut().for_each(|s| *s *= inv);
            let previous = centroids[c].clone();
            normalize_or_keep(&mut sums[c], &previous);
            centroids[c] = std::mem::take(&mut sums[c]);
        }
    }
    for (a, p) in assignments.iter_mut().zip(points) {
        *a = nearest(&centroids, p);
    }
    let inertia = assignments
        .iter()
        .zip(points)
        .map(|(&a, p)| sq_dist(p, &centroids[a]))
        .sum();
    KMeansRun {
        centroids,
        assignments,
        inertia,
    }
}

/// Mean silhouette with Euclidean distance. Singletons score 0, and a point
/// with a = b = 0 scores 0.
pub fn silhouette(points: &[&[f64]], assignments: &[usize]) -> Result<f64, StateError> {
    let k = assignments.iter().copied().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; k];
    for &a in assignments {
        sizes[a] += 1;
    }
    if k < 2 || sizes.iter().any(|&s| s == 0) || points.len() != assignments.len() {
        return Err(StateError::DegeneratePartition);
    }
    let n = points.len();
    let mut total = 0.0;
    let mut sums = vec![0.0; k];
    for i in 0..n {
        let own = assignments[i];
        if sizes[own] == 1 {
            continue;
        }
        sums.iter_mut().for_each(|s| *s = 0.0);
        for j in 0..n {
            if i != j {
                sums[assignments[j]] += sq_dist(points[i], points[j]).sqrt();
            }
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    Ok(total / n as f64)
}

/// Assignments of `points` under `partition`.
pub fn assign_all(partition: &StatePartition, points: &[&[f64]]) -> Vec<usize> {
    points.iter().map(|p| nearest(&partition.centroids, p)).collect()
}

pub fn partition(
    embeddings: &[SystemStateEmbedding],
    k_min: usize,
    k_max: usize,
    seed: u64,
) -> Result<StatePartition, StateError> {
    let n = embeddings.len();
    if k_min == 0 || k_min > k_max || k_max > n || (n < 2 && k_min > 1) {
        return Err(StateError::InsufficientData { n, k_min, k_max });
    }
    let dim = embeddings[0].vector.len();
    if let Some(bad) = embeddings.iter().find(|e| e.vector.len() != dim) {
        return Err(StateError::DimensionMismatch {
            expected: dim,
            got: bad.vector.len(),
        });
    }
    // Canonical order so the result does not depend on input order.
    let mut sorted: Vec<&SystemStateEmbedding> = embeddings.iter().collect();
    sorted.sort_by(|a, b| {
        a.window_id
            .cmp(&b.window_id)
            .then_with(|| a.vector.iter().zip(&b.vector).fold(std::cmp::Ordering::Equal, |o, (x, y)| o.then(x.total_cmp(y))))
    });
    let points: Vec<&[f64]> = sorted.iter().map(|e| e.vector.as_slice()).collect();

    let mut best: Option<(f64, usize, KMeansRun)> = None;
    let mut diagnostics = Vec::new();
    for k in k_min..=k_max {
        let mut best_run: Option<KMeansRun> = None;
        for restart in 0..RESTARTS {
            let mut rng = stream_rng(seed, (k as u64) << 16 | restart as u64);
            let run = kmeans_once(&points, k, &mut rng);
            if best_run.as_ref().map_or(true, |b| run.inertia < b.inertia) {
                best_run = Some(run);
            }
        }
        let run = best_run.expect("at least one restart");
        let sil = if k == 1 {
            None
        } else {
            silhouette(&points, &run.assignments).ok()
        };
        diagnostics.push(KDiagnostic {
            k,
            silhouette: sil,
            inertia: run.inertia,
        });
        // K = 1 competes with a score of 0; an undefined silhouette never wins.
        let score = match (k, sil) {
            (1, _) => 0.0,
            (_, Some(s)) => s,
            (_, None) => f64::NEG_INFINITY,
        };
        if best.as_ref().map_or(true, |(s, _, _)| score > *s) {
            best = Some((score, k, run));
        }
    }
    let (_, k, run) = best.expect("non-empty k range");
    let mut sizes = vec![0; k];
    for &a in &run.assignments {
        sizes[a] += 1;
    }
    Ok(StatePartition {
        k,
        centroids: run.centroids,
        sizes,
        diagnostics,
        seed,
    })
}
