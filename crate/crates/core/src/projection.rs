//! Deterministic 2D PCA export for plotting state embeddings.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::eval::EvalError;
use crate::linalg::{dot, norm};
use crate::rng::stream_rng;

pub const POWER_ITERATIONS: usize = 200;
const START_SEED: u64 = 0x5043_4132;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection2d {
    pub points: Vec<(f64, f64)>,
    /// Share of total variance captured by each of the two directions.
    pub explained: (f64, f64),
    pub components: [Vec<f64>; 2],
}

fn covariance(centered: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let d = centered[0].len();
    let n = centered.len() as f64;
    let mut c = vec![vec![0.0; d]; d];
    for x in centered {
        for i in 0..d {
            if x[i] == 0.0 {
                continue;
            }
            for j in i..d {
                c[i][j] += x[i] * x[j];
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            c[i][j] /= n;
            c[j][i] = c[i][j];
        }
    }
    c
}

fn top_eigenvector(c: &[Vec<f64>], start: &[f64]) -> (Vec<f64>, f64) {
    let mut v = start.to_vec();
    let n0 = norm(&v);
    v.iter_mut().for_each(|x| *x /= n0);
    for _ in 0..POWER_ITERATIONS {
        let w: Vec<f64> = c.iter().map(|row| dot(row, &v)).collect();
        let n = norm(&w);
        if n == 0.0 {
            break;
        }
        v = w.into_iter().map(|x| x / n).collect();
    }
    // Largest-magnitude loading positive (first one on ties).
    let mut pivot = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[pivot].abs() {
            pivot = i;
        }
    }
    if v[pivot] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    let cv: Vec<f64> = c.iter().map(|row| dot(row, &v)).collect();
    let lambda = dot(&v, &cv);
    (v, lambda)
}

/// Projects rows onto their top two principal directions. Output order
/// matches input order.
pub fn project_2d(embeddings: &[Vec<f64>]) -> Result<Projection2d, EvalError> {
    if embeddings.len() < 2 {
        return Err(EvalError::EmptyInput);
    }
    let d = embeddings[0].len();
    let n = embeddings.len() as f64;
    let mut mean = vec![0.0; d];
    for e in embeddings {
        for (m, x) in mean.iter_mut().zip(e) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let centered: Vec<Vec<f64>> = embeddings
        .iter()
        .map(|e| e.iter().zip(&mean).map(|(x, m)| x - m).collect())
        .collect();
    let mut cov = covariance(&centered);
    let total: f64 = (0..d).map(|i| cov[i][i]).sum();
    if total <= 0.0 {
        return Err(EvalError::DegenerateVariance);
    }
    let mut rng = stream_rng(START_SEED, 0);
    let mut comps = Vec::with_capacity(2);
    let mut lambdas = Vec::with_capacity(2);
    for _ in 0..2 {
        let start: Vec<f64> = (0..d).map(|_| rng.gen::<f64>() - 0.5).collect();
        let (v, lambda) = top_eigenvector(&cov, &start);
        for i in 0..d {
            for j in 0..d {
                cov[i][j] -= lambda * v[i] * v[j];
            }
        }
        comps.push(v);
        lambdas.push(lambda.max(0.0));
    }
    let points = centered
        .iter()
        .map(|x| (dot(x, &comps[0]), dot(x, &comps[1])))
        .collect();
    let second = comps.pop().expect("two components");
    let first = comps.pop().expect("two components");
    Ok(Projection2d {
        points,
        explained: (lambdas[0] / total, lambdas[1] / total),
        components: [first, second],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_points_are_degenerate() {
        let pts = vec![vec![1.0, 2.0]; 3];
        assert_eq!(project_2d(&pts), Err(EvalError::DegenerateVariance));
    }

    #[test]
    fn planar_data_is_fully_explained() {
        let pts: Vec<Vec<f64>> = (0..10)
            .map(|i| {
                let (a, b) = (i as f64, ((i * 7) % 5) as f64);
                vec![a, b, a + b, 0.5 * a - b]
            })
            .collect();
        let p = project_2d(&pts).unwrap();
        assert!(p.explained.0 + p.explained.1 > 0.999);
    }

    #[test]
    fn duplicates_project_identically() {
        let base = vec![vec![1.0, 0.0, 2.0], vec![0.0, 3.0, 1.0], vec![2.0, 2.0, 0.0]];
        let mut pts = base.clone();
        pts.extend(base);
        let p = project_2d(&pts).unwrap();
        for i in 0..3 {
            assert_eq!(p.points[i], p.points[i + 3]);
        }
    }
}
