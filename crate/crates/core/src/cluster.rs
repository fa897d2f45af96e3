//! Lloyd's k-means with k-means++ seeding.

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::Matrix;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KMeansParams {
    pub k: usize,
    pub max_iter: usize,
    /// Stop once no centroid moves farther than this.
    pub tolerance: f64,
}

impl Default for KMeansParams {
    fn default() -> Self {
        KMeansParams {
            k: 4,
            max_iter: 300,
            tolerance: 1e-6,
        }
    }
}

#[derive(Clone, Debug)]
pub struct KMeansFit {
    pub assignments: Vec<usize>,
    pub centroids: Matrix,
    pub iterations: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &Matrix) -> usize {
    let mut best = (0, f64::INFINITY);
    for c in 0..centroids.rows() {
        let d = sq_dist(point, centroids.row(c));
        if d < best.1 {
            best = (c, d);
        }
    }
    best.0
}

fn plus_plus<R: Rng + ?Sized>(points: &Matrix, k: usize, rng: &mut R) -> Vec<usize> {
    let n = points.rows();
    let mut chosen = vec![rng.gen_range(0..n)];
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(points.row(i), points.row(chosen[0]))).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut t = rng.gen::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 && t < w {
                    pick = i;
                    break;
                }
                t -= w;
            }
            while d2[pick] == 0.0 {
                pick -= 1;
            }
            pick
        } else {
            // fewer distinct points than k
            (0..n).find(|i| !chosen.contains(i)).unwrap_or(0)
        };
        chosen.push(next);
        for i in 0..n {
            d2[i] = d2[i].min(sq_dist(points.row(i), points.row(next)));
        }
    }
    chosen
}

/// Clusters the rows of `points`. Assignment ties go to the lower cluster
/// index; an emptied cluster keeps its previous centroid.
pub fn kmeans<R: Rng + ?Sized>(points: &Matrix, params: &KMeansParams, rng: &mut R) -> Result<KMeansFit> {
    let (n, dim) = (points.rows(), points.cols());
    if params.k == 0 {
        return Err(Error::Config("k must be positive".into()));
    }
    if n < params.k {
        return Err(Error::Config(format!("{n} points cannot form {} clusters", params.k)));
    }
    let seeds = plus_plus(points, params.k, rng);
    let mut centroids = points.select_rows(&seeds);
    let mut assignments = vec![0; n];
    let mut iterations = 0;
    while iterations < params.max_iter {
        iterations += 1;
        for (i, a) in assignments.iter_mut().enumerate() {
            *a = nearest(points.row(i), &centroids);
        }
        let mut sums = Matrix::zeros(params.k, dim);
        let mut counts = vec![0usize; params.k];
        for (i, &a) in assignments.iter().enumerate() {
            counts[a] += 1;
            for (s, &v) in sums.row_mut(a).iter_mut().zip(points.row(i)) {
                *s += v;
            }
        }
        let mut shift = 0.0f64;
        for c in 0..params.k {
            if counts[c] == 0 {
                continue;
            }
            let inv = 1.0 / counts[c] as f64;
            let new: Vec<f64> = sums.row(c).iter().map(|s| s * inv).collect();
            shift = shift.max(sq_dist(&new, centroids.row(c)).sqrt());
            centroids.row_mut(c).copy_from_slice(&new);
        }
        if shift < params.tolerance {
            break;
        }
    }
    for (i, a) in assignments.iter_mut().enumerate() {
        *a = nearest(points.row(i), &centroids);
    }
    Ok(KMeansFit {
        assignments,
        centroids,
        iterations,
    })
}
