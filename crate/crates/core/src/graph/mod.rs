//! Patch graph construction and point-domain Laplacian assembly.
//!
//! Patches are vertices; candidate edges join each patch to the patches at
//! its `K` nearest centers. Edge weights are a thresholded Gaussian of the
//! projection-based patch distance, divided by `(ρ_m ρ_n)^(1/γ)` where `ρ`
//! is the unnormalized degree. Each patch edge then expands into a small
//! point-level Laplacian over the `2k` stacked points of the pair, and those
//! are accumulated into one Laplacian over all patch slots.

mod sparse;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use sparse::{SparseSymmetricMatrix, TripletList};

use crate::cloud::Point;
use crate::error::{Error, Result};
use crate::normals::ReferenceFrame;
use crate::patch::Patch;
use crate::patchdist::{patch_distance, Correspondence, InterpolationWeighting};
use crate::spatial::SpatialIndex;

/// Each unordered pair of centers where at least one nominates the other
/// among its `k_neighbors` nearest, as `(m, n)` with `m < n`, sorted.
pub fn patch_knn_edges(centers: &[Point], k_neighbors: usize) -> Result<Vec<(usize, usize)>> {
    let m = centers.len();
    if k_neighbors >= m {
        return Err(Error::TooManyNeighbors {
            requested: k_neighbors,
            available: m.saturating_sub(1),
        });
    }
    let index = SpatialIndex::build(centers)?;
    let nominated: Vec<Vec<usize>> = (0..m)
        .into_par_iter()
        .map(|i| {
            index
                .knn(&centers[i], k_neighbors + 1)
                .expect("k + 1 <= M")
                .into_iter()
                .map(|nb| nb.index)
                .filter(|&j| j != i)
                .take(k_neighbors)
                .collect()
        })
        .collect();
    let mut edges: Vec<(usize, usize)> = nominated
        .iter()
        .enumerate()
        .flat_map(|(i, js)| js.iter().map(move |&j| (i.min(j), i.max(j))))
        .collect();
    edges.sort_unstable();
    edges.dedup();
    Ok(edges)
}

/// Kernel width from the spread of squared distances:
/// `0.5 * sqrt(population_std(d²))`, falling back to `mean(d)` when the
/// spread is zero and to 1 when every distance is zero.
pub fn epsilon_from_distances(distances: &[f64]) -> Result<f64> {
    if distances.is_empty() {
        return Err(Error::EmptyInput);
    }
    let n = distances.len() as f64;
    let mean_sq = distances.iter().map(|d| d * d).sum::<f64>() / n;
    let var = distances
        .iter()
        .map(|d| {
            let e = d * d - mean_sq;
            e * e
        })
        .sum::<f64>()
        / n;
    // Equal squares can still leave rounding noise in the variance.
    let first = distances[0] * distances[0];
    let spread = distances.iter().any(|d| d * d != first);
    let std = var.sqrt();
    if spread && std > 0.0 {
        return Ok(0.5 * std.sqrt());
    }
    let mean = distances.iter().sum::<f64>() / n;
    Ok(if mean > 0.0 { mean } else { 1.0 })
}

/// Thresholded Gaussian `exp(-d² / 2ε²)` for `d < r`, else 0.
pub fn kernel(distance: f64, epsilon: f64, radius: Option<f64>) -> f64 {
    match radius {
        Some(r) if distance >= r => 0.0,
        _ => (-(distance * distance) / (2.0 * epsilon * epsilon)).exp(),
    }
}

/// `(ρ_m ρ_n)^(-1/γ) · ψ(d)`.
pub fn edge_weight(
    distance: f64,
    epsilon: f64,
    radius: Option<f64>,
    rho_m: f64,
    rho_n: f64,
    gamma: f64,
) -> Result<f64> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    if !(rho_m > 0.0 && rho_n > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "degrees must be positive, got {rho_m} and {rho_n}"
        )));
    }
    if !(gamma > 0.0) {
        return Err(Error::InvalidParameter(format!("gamma must be positive, got {gamma}")));
    }
    let psi = kernel(distance, epsilon, radius);
    if psi == 0.0 {
        return Ok(0.0);
    }
    Ok((rho_m * rho_n).powf(-1.0 / gamma) * psi)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphOptions {
    pub tau: f64,
    pub gamma: f64,
    /// `r = C_r · ε` when set; otherwise no distance threshold.
    pub radius_multiplier: Option<f64>,
    pub weighting: InterpolationWeighting,
}

impl Default for GraphOptions {
    fn default() -> Self {
        Self {
            tau: 1.0,
            gamma: 0.5,
            radius_multiplier: None,
            weighting: InterpolationWeighting::Proportional,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchEdge {
    pub m: usize,
    pub n: usize,
    pub distance: f64,
    pub weight: f64,
    pub correspondences: Vec<Correspondence>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchGraph {
    /// Edges with positive weight, sorted by `(m, n)`.
    pub edges: Vec<PatchEdge>,
    pub epsilon: f64,
    pub radius: Option<f64>,
    /// Unnormalized degrees `ρ`, including the self term `ψ(0) = 1`.
    pub degrees: Vec<f64>,
    /// Candidate edges evaluated before weighting.
    pub candidate_count: usize,
    /// Interpolations that fell back to nearest-neighbor replacement.
    pub fallbacks: usize,
}

impl PatchGraph {
    pub fn patch_count(&self) -> usize {
        self.degrees.len()
    }
}

/// Evaluates patch distances over `candidates` and weights the edges.
pub fn build_patch_graph(
    patches: &[Patch],
    frames: &[ReferenceFrame],
    candidates: &[(usize, usize)],
    options: &GraphOptions,
) -> Result<PatchGraph> {
    if patches.len() != frames.len() {
        return Err(Error::DimensionMismatch {
            expected: patches.len(),
            actual: frames.len(),
        });
    }
    let m = patches.len();
    for &(a, b) in candidates {
        if a >= m || b >= m {
            return Err(Error::IndexOutOfRange {
                index: a.max(b),
                dimension: m,
            });
        }
    }
    let measured = candidates
        .par_iter()
        .map(|&(a, b)| {
            patch_distance(
                &patches[a],
                &patches[b],
                &frames[a],
                &frames[b],
                options.tau,
                options.weighting,
            )
        })
        .collect::<Result<Vec<_>>>()?;

    let distances: Vec<f64> = measured.iter().map(|r| r.distance).collect();
    let epsilon = if distances.is_empty() {
        1.0
    } else {
        epsilon_from_distances(&distances)?
    };
    let radius = options.radius_multiplier.map(|c| c * epsilon);

    let mut degrees = vec![1.0; m];
    for (&(a, b), &d) in candidates.iter().zip(&distances) {
        let psi = kernel(d, epsilon, radius);
        degrees[a] += psi;
        degrees[b] += psi;
    }

    let mut edges = Vec::with_capacity(candidates.len());
    let mut fallbacks = 0;
    for (&(a, b), result) in candidates.iter().zip(measured) {
        fallbacks += result.fallbacks;
        let weight = edge_weight(result.distance, epsilon, radius, degrees[a], degrees[b], options.gamma)?;
        if weight > 0.0 {
            edges.push(PatchEdge {
                m: a,
                n: b,
                distance: result.distance,
                weight,
                correspondences: result.correspondences,
            });
        }
    }
    edges.sort_by_key(|e| (e.m, e.n));
    Ok(PatchGraph {
        edges,
        epsilon,
        radius,
        degrees,
        candidate_count: candidates.len(),
        fallbacks,
    })
}

/// Laplacian over the stacked `[patch m; patch n]` points of one patch pair:
/// replacement pairs get weight `w_mn`, interpolated ones split it over
/// their three plane vertices.
pub fn build_subgraph_laplacian(
    correspondences: &[Correspondence],
    weight: f64,
    m_len: usize,
    n_len: usize,
) -> Result<SparseSymmetricMatrix> {
    subgraph_triplets(correspondences, weight, m_len, n_len)?.build()
}

fn subgraph_triplets(
    correspondences: &[Correspondence],
    weight: f64,
    m_len: usize,
    n_len: usize,
) -> Result<TripletList> {
    let dim = m_len + n_len;
    let mut t = TripletList::with_capacity(dim, correspondences.len() * 4);
    for c in correspondences {
        for (i, j, frac) in c.pair_edges(m_len) {
            if i >= dim || j >= dim {
                return Err(Error::IndexOutOfRange {
                    index: i.max(j),
                    dimension: dim,
                });
            }
            t.add_edge(i, j, weight * frac);
        }
    }
    Ok(t)
}

/// `Σ Sᵀ L S`: each subgraph's local index `i` is scattered to `map[i]`.
pub fn assemble_point_laplacian(
    subgraphs: &[(SparseSymmetricMatrix, Vec<usize>)],
    total: usize,
) -> Result<SparseSymmetricMatrix> {
    let mut triplets = Vec::with_capacity(subgraphs.iter().map(|(l, _)| l.nnz()).sum());
    let mut seen = vec![usize::MAX; total];
    for (stamp, (local, map)) in subgraphs.iter().enumerate() {
        if map.len() != local.dim() {
            return Err(Error::DimensionMismatch {
                expected: local.dim(),
                actual: map.len(),
            });
        }
        for &g in map {
            if g >= total {
                return Err(Error::IndexOutOfRange {
                    index: g,
                    dimension: total,
                });
            }
            if seen[g] == stamp {
                return Err(Error::IndexCollision { index: g });
            }
            seen[g] = stamp;
        }
        triplets.extend(local.entries().map(|(r, c, v)| (map[r], map[c], v)));
    }
    SparseSymmetricMatrix::from_triplets(total, triplets)
}

/// Point-domain Laplacian over all patch slots. Patch `m` occupies slots
/// `offsets[m]..offsets[m] + patches[m].len()`.
pub fn point_laplacian(
    graph: &PatchGraph,
    patches: &[Patch],
    offsets: &[usize],
    total: usize,
) -> Result<SparseSymmetricMatrix> {
    let pieces = graph
        .edges
        .par_iter()
        .map(|e| {
            let (lm, ln) = (patches[e.m].len(), patches[e.n].len());
            let local = subgraph_triplets(&e.correspondences, e.weight, lm, ln)?;
            let (om, on) = (offsets[e.m], offsets[e.n]);
            let map = |i: usize| if i < lm { om + i } else { on + i - lm };
            Ok(local
                .entries()
                .iter()
                .map(|&(r, c, v)| (map(r), map(c), v))
                .collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;
    let mut triplets = Vec::with_capacity(pieces.iter().map(Vec::len).sum());
    for p in pieces {
        triplets.extend(p);
    }
    SparseSymmetricMatrix::from_triplets(total, triplets)
}

/// Laplacian of an explicit weighted edge list.
pub fn laplacian_from_edges(dim: usize, edges: &[(usize, usize, f64)]) -> Result<SparseSymmetricMatrix> {
    let mut t = TripletList::with_capacity(dim, edges.len() * 4);
    for &(i, j, w) in edges {
        if i >= dim || j >= dim {
            return Err(Error::IndexOutOfRange {
                index: i.max(j),
                dimension: dim,
            });
        }
        t.add_edge(i, j, w);
    }
    t.build()
}

/// `fᵀ L f`.
pub fn quadratic_form(laplacian: &SparseSymmetricMatrix, f: &[f64]) -> Result<f64> {
    laplacian.quadratic_form(f)
}

/// `Σ_i α_iᵀ L α_i` over coordinate vectors `α_i`.
pub fn dimension_estimate(laplacian: &SparseSymmetricMatrix, coords: &[Vec<f64>]) -> Result<f64> {
    coords.iter().map(|a| laplacian.quadratic_form(a)).sum()
}

/// Total edge weight of a combinatorial Laplacian (half its trace).
pub fn total_edge_weight(laplacian: &SparseSymmetricMatrix) -> f64 {
    laplacian.diagonal().iter().sum::<f64>() / 2.0
}

/// Dimension estimate divided by `ε² · Σ w`: the kernel-weighted mean of
/// `d² / ε²`, which approaches the intrinsic dimension for a Gaussian kernel
/// on uniformly sampled data.
pub fn normalized_dimension_estimate(
    laplacian: &SparseSymmetricMatrix,
    coords: &[Vec<f64>],
    epsilon: f64,
) -> Result<f64> {
    let total = total_edge_weight(laplacian);
    if !(total > 0.0) {
        return Err(Error::InvalidParameter("graph has no positive edges".into()));
    }
    Ok(dimension_estimate(laplacian, coords)? / (epsilon * epsilon * total))
}

/// Fully connected sample graph where every sample is its own vertex, with
/// the same normalized thresholded-Gaussian weights as the patch graph.
/// O(M²); meant for small experiments.
pub fn sample_graph_laplacian(
    samples: &[Vec<f64>],
    epsilon: f64,
    gamma: f64,
    radius: Option<f64>,
) -> Result<SparseSymmetricMatrix> {
    let m = samples.len();
    let dist = |a: usize, b: usize| -> f64 {
        samples[a]
            .iter()
            .zip(&samples[b])
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    };
    let mut pairs = Vec::with_capacity(m * m.saturating_sub(1) / 2);
    for a in 0..m {
        for b in a + 1..m {
            pairs.push((a, b, dist(a, b)));
        }
    }
    let mut degrees = vec![1.0; m];
    for &(a, b, d) in &pairs {
        let psi = kernel(d, epsilon, radius);
        degrees[a] += psi;
        degrees[b] += psi;
    }
    let mut edges = Vec::with_capacity(pairs.len());
    for (a, b, d) in pairs {
        let w = edge_weight(d, epsilon, radius, degrees[a], degrees[b], gamma)?;
        if w > 0.0 {
            edges.push((a, b, w));
        }
    }
    laplacian_from_edges(m, &edges)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GershgorinBound {
    /// Largest weighted degree `ρ_max`.
    pub max_degree: f64,
    /// `2 ρ_max`.
    pub lambda_max_bound: f64,
    /// `(2 ρ_max + μ) / μ`.
    pub condition_bound: f64,
}

/// Eigenvalue and condition bounds for `L + μI` from Gershgorin discs.
pub fn gershgorin_bound(laplacian: &SparseSymmetricMatrix, mu: f64) -> Result<GershgorinBound> {
    if !(mu > 0.0) {
        return Err(Error::InvalidParameter(format!("mu must be positive, got {mu}")));
    }
    let mut max_degree = 0.0f64;
    for r in 0..laplacian.dim() {
        let mut radius = 0.0;
        let mut diag = 0.0;
        for (c, v) in laplacian.row(r) {
            if c == r {
                diag = v;
            } else if v > 0.0 {
                return Err(Error::NotLaplacian(format!(
                    "positive off-diagonal entry at ({r}, {c})"
                )));
            } else {
                radius -= v;
            }
        }
        if (diag - radius).abs() > 1e-9 * radius.max(1.0) {
            return Err(Error::NotLaplacian(format!(
                "row {r}: diagonal {diag} differs from off-diagonal magnitude {radius}"
            )));
        }
        max_degree = max_degree.max(radius);
    }
    Ok(GershgorinBound {
        max_degree,
        lambda_max_bound: 2.0 * max_degree,
        condition_bound: (2.0 * max_degree + mu) / mu,
    })
}

/// `D^(-1/2) L D^(-1/2)`; isolated vertices get zero rows.
pub fn normalized_laplacian(laplacian: &SparseSymmetricMatrix) -> Result<SparseSymmetricMatrix> {
    let scale: Vec<f64> = laplacian
        .diagonal()
        .into_iter()
        .map(|d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
        .collect();
    laplacian.scale_symmetric(&scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::patchdist::{Direction, Target};

    fn line_points(xs: &[f64]) -> Vec<Point> {
        xs.iter().map(|&x| Point::new(x, 0.0, 0.0)).collect()
    }

    #[test]
    fn knn_edges_small_cases() {
        assert_eq!(patch_knn_edges(&line_points(&[0.0, 1.0]), 1).unwrap(), vec![(0, 1)]);
        assert_eq!(
            patch_knn_edges(&line_points(&[0.0, 1.0, 2.0, 3.0]), 1).unwrap(),
            vec![(0, 1), (1, 2), (2, 3)]
        );
        assert!(patch_knn_edges(&line_points(&[0.0, 1.0]), 2).is_err());
    }

    #[test]
    fn epsilon_rules() {
        assert_eq!(epsilon_from_distances(&[0.3, 0.3, 0.3]).unwrap(), 0.3);
        // d² ∈ {0, 2}: population std 1.
        assert_eq!(
            epsilon_from_distances(&[0.0, 2f64.sqrt()]).unwrap().to_bits(),
            0.5f64.to_bits()
        );
        assert_eq!(epsilon_from_distances(&[0.0, 0.0]).unwrap(), 1.0);
        assert!(epsilon_from_distances(&[]).is_err());
    }

    #[test]
    fn weight_examples() {
        assert_eq!(edge_weight(2.0, 1.0, Some(2.0), 1.0, 1.0, 0.5).unwrap(), 0.0);
        assert_eq!(edge_weight(0.0, 1.0, None, 1.0, 1.0, 0.5).unwrap(), 1.0);
        let w = edge_weight(0.7, 0.7, None, 1.0, 1.0, 0.5).unwrap();
        assert!((w - (-0.5f64).exp()).abs() < 1e-15);
        // Exponent -1/γ = -2 at γ = 0.5.
        let w = edge_weight(0.0, 1.0, None, 2.0, 1.0, 0.5).unwrap();
        assert_eq!(w, 0.25);
        assert!(edge_weight(0.0, 0.0, None, 1.0, 1.0, 0.5).is_err());
        assert!(edge_weight(0.0, 1.0, None, 0.0, 1.0, 0.5).is_err());
    }

    #[test]
    fn subgraph_examples() {
        let c = Correspondence {
            source: 0,
            target: Target::Replacement(0),
            direction: Direction::Forward,
        };
        let l = build_subgraph_laplacian(&[c], 2.5, 1, 1).unwrap();
        assert_eq!(l.to_dense(), nalgebra::dmatrix![2.5, -2.5; -2.5, 2.5]);

        let empty = build_subgraph_laplacian(&[], 1.0, 3, 3).unwrap();
        assert_eq!(empty.nnz(), 0);
        assert_eq!(empty.dim(), 6);

        let third = 1.0 / 3.0;
        let c = Correspondence {
            source: 0,
            target: Target::Interpolated {
                members: [0, 1, 2],
                weights: [third; 3],
            },
            direction: Direction::Forward,
        };
        let l = build_subgraph_laplacian(&[c], 3.0, 3, 3).unwrap();
        for t in 3..6 {
            assert!((l.get(0, t) + 1.0).abs() < 1e-15);
        }
        assert!((l.get(0, 0) - 3.0).abs() < 1e-15);
    }

    #[test]
    fn subgraph_index_out_of_range() {
        let c = Correspondence {
            source: 0,
            target: Target::Replacement(5),
            direction: Direction::Forward,
        };
        assert!(matches!(
            build_subgraph_laplacian(&[c], 1.0, 1, 1),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn assembly_identity_and_block_diagonal() {
        let l = laplacian_from_edges(2, &[(0, 1, 1.5)]).unwrap();
        assert_eq!(assemble_point_laplacian(&[(l.clone(), vec![0, 1])], 2).unwrap(), l);
        let block = assemble_point_laplacian(&[(l.clone(), vec![0, 1]), (l.clone(), vec![2, 3])], 4).unwrap();
        assert_eq!(block.get(2, 3), -1.5);
        assert_eq!(block.get(1, 2), 0.0);
        assert!(matches!(
            assemble_point_laplacian(&[(l, vec![1, 1])], 2),
            Err(Error::IndexCollision { .. })
        ));
    }

    #[test]
    fn dimension_estimate_single_edge() {
        // Two patch vectors; weight w; expect w·|p_m - p_n|².
        let l = laplacian_from_edges(2, &[(0, 1, 0.4)]).unwrap();
        let pm = [1.0, 2.0, 0.0, -1.0];
        let pn = [0.0, 2.0, 1.0, 1.0];
        let coords: Vec<Vec<f64>> = (0..4).map(|i| vec![pm[i], pn[i]]).collect();
        let expected = 0.4 * (1.0 + 0.0 + 1.0 + 4.0);
        assert!((dimension_estimate(&l, &coords).unwrap() - expected).abs() < 1e-14);
        let same: Vec<Vec<f64>> = (0..4).map(|i| vec![pm[i], pm[i]]).collect();
        assert_eq!(dimension_estimate(&l, &same).unwrap(), 0.0);
    }

    #[test]
    fn gershgorin_single_edge_is_tight() {
        let l = laplacian_from_edges(2, &[(0, 1, 1.0)]).unwrap();
        let b = gershgorin_bound(&l, 1.0).unwrap();
        assert_eq!(b.lambda_max_bound, 2.0);
        assert_eq!(b.condition_bound, 3.0);
        let not_laplacian = SparseSymmetricMatrix::from_triplets(2, vec![(0, 1, 1.0), (1, 0, 1.0)]).unwrap();
        assert!(gershgorin_bound(&not_laplacian, 1.0).is_err());
    }

    #[test]
    fn normalized_laplacian_has_unit_diagonal() {
        let l = laplacian_from_edges(3, &[(0, 1, 2.0), (1, 2, 0.5)]).unwrap();
        let n = normalized_laplacian(&l).unwrap();
        for d in n.diagonal() {
            assert!((d - 1.0).abs() < 1e-15);
        }
        // Constants are no longer in the null space.
        assert!(n.quadratic_form(&[1.0, 1.0, 1.0]).unwrap() > 1e-3);
    }
}
