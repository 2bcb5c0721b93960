#![allow(dead_code)]

use glr_core::graph::SparseSymmetricMatrix;
use glr_core::{Point, PointCloud, Vector};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_points(rng: &mut impl Rng, n: usize) -> Vec<Point> {
    (0..n)
        .map(|_| Point::new(rng.random(), rng.random(), rng.random()))
        .collect()
}

pub fn random_cloud(rng: &mut impl Rng, n: usize) -> PointCloud {
    PointCloud::new(random_points(rng, n)).unwrap()
}

pub fn random_vector(rng: &mut impl Rng, scale: f64) -> Vector {
    Vector::new(
        rng.random_range(-scale..scale),
        rng.random_range(-scale..scale),
        rng.random_range(-scale..scale),
    )
}

/// Indices of the `k` nearest points by exhaustive sort, lower index first on ties.
pub fn brute_knn(points: &[Point], q: &Point, k: usize) -> Vec<usize> {
    let mut order: Vec<(f64, usize)> = points
        .iter()
        .enumerate()
        .map(|(i, p)| ((p - q).norm_squared(), i))
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    order.into_iter().take(k).map(|(_, i)| i).collect()
}

/// Random weighted edge list over `n` vertices.
pub fn random_edges(rng: &mut impl Rng, n: usize, count: usize, max_w: f64) -> Vec<(usize, usize, f64)> {
    let mut edges = Vec::with_capacity(count);
    while edges.len() < count {
        let i = rng.random_range(0..n);
        let j = rng.random_range(0..n);
        if i != j {
            edges.push((i, j, rng.random_range(0.0..max_w)));
        }
    }
    edges
}

/// Dense Laplacian built entry by entry from an edge list.
pub fn dense_laplacian(n: usize, edges: &[(usize, usize, f64)]) -> DMatrix<f64> {
    let mut l = DMatrix::zeros(n, n);
    for &(i, j, w) in edges {
        l[(i, i)] += w;
        l[(j, j)] += w;
        l[(i, j)] -= w;
        l[(j, i)] -= w;
    }
    l
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn sparse_dense_gap(a: &SparseSymmetricMatrix, b: &DMatrix<f64>) -> f64 {
    max_abs_diff(&a.to_dense(), b)
}

pub fn inf_norm_gap(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}
