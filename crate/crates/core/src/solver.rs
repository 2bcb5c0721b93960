//! Outer denoising loop and the per-coordinate linear solves.
//!
//! Each outer iteration rebuilds patches and the patch graph from the current
//! estimate, then solves `(SᵀL_pS + μI) u = μ u_prev + SᵀL_pC` for each
//! coordinate. `S` gathers cloud points into patch slots and is never
//! materialized.

use log::{debug, warn};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use rustc_hash::FxHashMap;
use serde::Serialize;

use crate::cloud::{Point, PointCloud};
use crate::config::{DenoiseConfig, LaplacianKind};
use crate::error::{Error, Result};
use crate::graph::{build_patch_graph, patch_knn_edges, GraphOptions, PatchGraph, SparseSymmetricMatrix};
use crate::normals::{estimate_normal, ReferenceFrame};
use crate::patch::{ensure_coverage, extract_patch, select_patch_centers, FpsStart, Patch};
use crate::spatial::{estimate_diameter, SpatialIndex};

/// Largest dimension accepted by [`spectral_filter_reference`].
pub const ORACLE_LIMIT: usize = 500;

const EDGE_CHUNK: usize = 2048;

/// `25 (exp(i / r) - 1)`.
pub fn mu_schedule(iteration: usize, schedule_r: f64) -> f64 {
    25.0 * ((iteration as f64 / schedule_r).exp() - 1.0)
}

/// Patch slots and the cloud points they sample. Slot `offsets[m] + j`
/// holds member `j` of patch `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingMap {
    offsets: Vec<usize>,
    slot_points: Vec<usize>,
    slot_patch: Vec<usize>,
    points: usize,
}

impl SamplingMap {
    /// Fails with `CoverageViolated` if some point lies in no patch.
    pub fn from_patches(patches: &[Patch], points: usize) -> Result<Self> {
        let mut offsets = Vec::with_capacity(patches.len());
        let mut slot_points = Vec::new();
        let mut slot_patch = Vec::new();
        let mut covered = vec![false; points];
        for (m, p) in patches.iter().enumerate() {
            offsets.push(slot_points.len());
            for &i in p.members() {
                if i >= points {
                    return Err(Error::IndexOutOfRange {
                        index: i,
                        dimension: points,
                    });
                }
                covered[i] = true;
                slot_points.push(i);
                slot_patch.push(m);
            }
        }
        if let Some(point) = covered.iter().position(|&c| !c) {
            return Err(Error::CoverageViolated { point });
        }
        Ok(Self {
            offsets,
            slot_points,
            slot_patch,
            points,
        })
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn slot_points(&self) -> &[usize] {
        &self.slot_points
    }

    pub fn slot_count(&self) -> usize {
        self.slot_points.len()
    }

    pub fn point_count(&self) -> usize {
        self.points
    }

    /// `S x`.
    pub fn gather(&self, x: &[f64]) -> Vec<f64> {
        self.slot_points.iter().map(|&p| x[p]).collect()
    }

    /// `Sᵀ y`, summed in slot order.
    pub fn scatter(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.points];
        for (&p, &v) in self.slot_points.iter().zip(y) {
            out[p] += v;
        }
        out
    }

    /// `C` for one axis: each slot gets its patch center's coordinate.
    pub fn center_column(&self, centers: &[Point], axis: usize) -> Vec<f64> {
        self.slot_patch.iter().map(|&m| centers[m][axis]).collect()
    }
}

/// The point-domain pieces of the objective for a fixed `L_p`:
/// `Σ_Θ (S u - C)ᵀ L_p (S u - C) = uᵀ A u - 2 uᵀ b + c` per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSystem {
    /// `Sᵀ L_p S`.
    pub laplacian: SparseSymmetricMatrix,
    /// `Sᵀ L_p C` per axis.
    pub coupling: [Vec<f64>; 3],
    /// `Cᵀ L_p C` per axis.
    pub offset: [f64; 3],
}

impl PointSystem {
    /// Regularizer value `(S u - C)ᵀ L_p (S u - C)` for one axis.
    pub fn regularizer(&self, axis: usize, u: &[f64]) -> Result<f64> {
        let quad = self.laplacian.quadratic_form(u)?;
        let cross: f64 = u.iter().zip(&self.coupling[axis]).map(|(a, b)| a * b).sum();
        Ok(quad - 2.0 * cross + self.offset[axis])
    }
}

/// Projects a slot-space Laplacian through `S`.
pub fn point_system_from_slots(
    l_p: &SparseSymmetricMatrix,
    map: &SamplingMap,
    centers: &[Point],
) -> Result<PointSystem> {
    if l_p.dim() != map.slot_count() {
        return Err(Error::DimensionMismatch {
            expected: map.slot_count(),
            actual: l_p.dim(),
        });
    }
    if centers.len() != map.offsets.len() {
        return Err(Error::DimensionMismatch {
            expected: map.offsets.len(),
            actual: centers.len(),
        });
    }
    let sp = &map.slot_points;
    let triplets = l_p.entries().map(|(r, c, v)| (sp[r], sp[c], v)).collect();
    let laplacian = SparseSymmetricMatrix::from_triplets(map.points, triplets)?;
    let mut coupling: [Vec<f64>; 3] = Default::default();
    let mut offset = [0.0; 3];
    for axis in 0..3 {
        let c = map.center_column(centers, axis);
        let lc = l_p.matvec(&c)?;
        offset[axis] = c.iter().zip(&lc).map(|(a, b)| a * b).sum();
        coupling[axis] = map.scatter(&lc);
    }
    Ok(PointSystem {
        laplacian,
        coupling,
        offset,
    })
}

fn slot_edges(graph_edge: &crate::graph::PatchEdge, patches: &[Patch], offsets: &[usize]) -> Vec<(usize, usize, f64)> {
    let m_len = patches[graph_edge.m].len();
    let (om, on) = (offsets[graph_edge.m], offsets[graph_edge.n]);
    let slot = |i: usize| if i < m_len { om + i } else { on + i - m_len };
    graph_edge
        .correspondences
        .iter()
        .flat_map(|c| c.pair_edges(m_len))
        .map(|(i, j, frac)| (slot(i), slot(j), graph_edge.weight * frac))
        .collect()
}

fn for_each_slot_edge(graph: &PatchGraph, patches: &[Patch], offsets: &[usize], mut f: impl FnMut(usize, usize, f64)) {
    for chunk in graph.edges.chunks(EDGE_CHUNK) {
        let lists: Vec<_> = chunk.par_iter().map(|e| slot_edges(e, patches, offsets)).collect();
        for (i, j, w) in lists.into_iter().flatten() {
            f(i, j, w);
        }
    }
}

/// Builds [`PointSystem`] straight from the patch graph without storing the
/// slot-space Laplacian. Equivalent to assembling `L_p` and calling
/// [`point_system_from_slots`], with far less memory.
pub fn point_system(
    graph: &PatchGraph,
    patches: &[Patch],
    map: &SamplingMap,
    kind: LaplacianKind,
) -> Result<PointSystem> {
    let slots = map.slot_count();
    let offsets = &map.offsets;
    let centers: Vec<Point> = patches.iter().map(|p| *p.center()).collect();

    let mut degree = vec![0.0; slots];
    for_each_slot_edge(graph, patches, offsets, |i, j, w| {
        degree[i] += w;
        degree[j] += w;
    });
    let (diag, scale): (Vec<f64>, Vec<f64>) = match kind {
        LaplacianKind::Combinatorial => (degree.clone(), vec![1.0; slots]),
        LaplacianKind::Normalized => degree
            .iter()
            .map(|&d| if d > 0.0 { (1.0, 1.0 / d.sqrt()) } else { (0.0, 0.0) })
            .unzip(),
    };

    let mut point_diag = vec![0.0; map.points];
    for (s, &d) in diag.iter().enumerate() {
        point_diag[map.slot_points[s]] += d;
    }
    let mut lc: [Vec<f64>; 3] =
        std::array::from_fn(|axis| (0..slots).map(|s| diag[s] * centers[map.slot_patch[s]][axis]).collect());
    let mut off: FxHashMap<(u32, u32), f64> = FxHashMap::default();
    for_each_slot_edge(graph, patches, offsets, |i, j, w| {
        let w = w * scale[i] * scale[j];
        let (pi, pj) = (map.slot_points[i], map.slot_points[j]);
        if pi == pj {
            point_diag[pi] -= 2.0 * w;
        } else {
            let key = (pi.min(pj) as u32, pi.max(pj) as u32);
            *off.entry(key).or_insert(0.0) -= w;
        }
        let (ci, cj) = (&centers[map.slot_patch[i]], &centers[map.slot_patch[j]]);
        for axis in 0..3 {
            lc[axis][i] -= w * cj[axis];
            lc[axis][j] -= w * ci[axis];
        }
    });

    let mut triplets = Vec::with_capacity(map.points + 2 * off.len());
    triplets.extend(point_diag.iter().enumerate().map(|(p, &d)| (p, p, d)));
    for (&(a, b), &v) in &off {
        triplets.push((a as usize, b as usize, v));
        triplets.push((b as usize, a as usize, v));
    }
    let laplacian = SparseSymmetricMatrix::from_triplets(map.points, triplets)?;

    let mut offset = [0.0; 3];
    let mut coupling: [Vec<f64>; 3] = Default::default();
    for axis in 0..3 {
        offset[axis] = (0..slots).map(|s| centers[map.slot_patch[s]][axis] * lc[axis][s]).sum();
        coupling[axis] = map.scatter(&lc[axis]);
    }
    Ok(PointSystem {
        laplacian,
        coupling,
        offset,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    /// `Sᵀ L_p S + μI`.
    pub system_matrix: SparseSymmetricMatrix,
    /// `μ anchor + Sᵀ L_p C` per axis.
    pub rhs: [Vec<f64>; 3],
    pub anchor: [Vec<f64>; 3],
    pub mu: f64,
}

impl LinearSystem {
    pub fn new(system: &PointSystem, anchor: [Vec<f64>; 3], mu: f64) -> Result<Self> {
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::InvalidParameter(format!("mu must be positive, got {mu}")));
        }
        let n = system.laplacian.dim();
        for a in &anchor {
            if a.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    actual: a.len(),
                });
            }
        }
        let rhs = std::array::from_fn(|axis| {
            anchor[axis]
                .iter()
                .zip(&system.coupling[axis])
                .map(|(v, c)| mu * v + c)
                .collect()
        });
        Ok(Self {
            system_matrix: system.laplacian.add_identity(mu),
            rhs,
            anchor,
            mu,
        })
    }

    pub fn dim(&self) -> usize {
        self.system_matrix.dim()
    }
}

/// `(SᵀL_pS + μI, μV + SᵀL_pC)` from a slot-space `L_p`.
pub fn build_system(
    l_p: &SparseSymmetricMatrix,
    map: &SamplingMap,
    centers: &[Point],
    v: [Vec<f64>; 3],
    mu: f64,
) -> Result<LinearSystem> {
    LinearSystem::new(&point_system_from_slots(l_p, map, centers)?, v, mu)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PcgOptions {
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for PcgOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iters: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcgOutcome {
    pub solution: Vec<f64>,
    pub iterations: usize,
    pub relative_residual: f64,
    /// False when the iteration cap was hit; `solution` is then the iterate
    /// with the smallest residual seen.
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn breakdown_check(values: &[f64], what: &str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NumericalBreakdown(format!("non-finite {what}")))
    }
}

/// Jacobi-preconditioned conjugate gradient for an SPD matrix.
pub fn pcg(a: &SparseSymmetricMatrix, b: &[f64], x0: &[f64], options: PcgOptions) -> Result<PcgOutcome> {
    let n = a.dim();
    if b.len() != n || x0.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: if b.len() != n { b.len() } else { x0.len() },
        });
    }
    breakdown_check(b, "right-hand side")?;
    breakdown_check(x0, "initial guess")?;
    let inv_diag: Vec<f64> = a
        .diagonal()
        .into_iter()
        .map(|d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        return Ok(PcgOutcome {
            solution: vec![0.0; n],
            iterations: 0,
            relative_residual: 0.0,
            converged: true,
        });
    }

    let mut x = x0.to_vec();
    let mut ax = vec![0.0; n];
    a.matvec_into(&x, &mut ax)?;
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, ax)| b - ax).collect();
    let mut rel = dot(&r, &r).sqrt() / b_norm;
    let mut best = (rel, x.clone());
    if rel <= options.tol {
        return Ok(PcgOutcome {
            solution: x,
            iterations: 0,
            relative_residual: rel,
            converged: true,
        });
    }
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];

    for iteration in 1..=options.max_iters {
        a.matvec_into(&p, &mut ap)?;
        let pap = dot(&p, &ap);
        if !(pap > 0.0) || !pap.is_finite() {
            return Err(Error::NumericalBreakdown(format!(
                "non-positive curvature {pap} at iteration {iteration}"
            )));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        rel = dot(&r, &r).sqrt() / b_norm;
        if !rel.is_finite() {
            return Err(Error::NumericalBreakdown(format!(
                "non-finite residual at iteration {iteration}"
            )));
        }
        if rel < best.0 {
            best = (rel, x.clone());
        }
        if rel <= options.tol {
            return Ok(PcgOutcome {
                solution: x,
                iterations: iteration,
                relative_residual: rel,
                converged: true,
            });
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    warn!(
        "conjugate gradient stopped after {} iterations at relative residual {:.3e}",
        options.max_iters, best.0
    );
    Ok(PcgOutcome {
        solution: best.1,
        iterations: options.max_iters,
        relative_residual: best.0,
        converged: false,
    })
}

/// Solves one coordinate, warm-started at the fidelity anchor.
pub fn solve_coordinate(system: &LinearSystem, axis: usize, options: PcgOptions) -> Result<PcgOutcome> {
    if axis >= 3 {
        return Err(Error::IndexOutOfRange {
            index: axis,
            dimension: 3,
        });
    }
    pcg(&system.system_matrix, &system.rhs[axis], &system.anchor[axis], options)
}

/// Dense eigen-filter `Φ diag(1 / λ_i(L + μI)) Φᵀ rhs`; equals
/// `(L + μI)⁻¹ rhs`.
pub fn spectral_filter_reference(l: &SparseSymmetricMatrix, mu: f64, rhs: &[f64]) -> Result<Vec<f64>> {
    let n = l.dim();
    if n > ORACLE_LIMIT {
        return Err(Error::OracleLimit {
            dimension: n,
            limit: ORACLE_LIMIT,
        });
    }
    if rhs.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: rhs.len(),
        });
    }
    let shifted: DMatrix<f64> = l.to_dense() + DMatrix::identity(n, n) * mu;
    let eig = SymmetricEigen::new(shifted);
    let phi = &eig.eigenvectors;
    let mut spectrum = phi.transpose() * DVector::from_column_slice(rhs);
    for (c, lambda) in spectrum.iter_mut().zip(eig.eigenvalues.iter()) {
        if !(*lambda > 0.0) {
            return Err(Error::NumericalBreakdown(format!("non-positive eigenvalue {lambda}")));
        }
        *c /= lambda;
    }
    Ok((phi * spectrum).iter().copied().collect())
}

/// Patches, frames and patch graph for one iteration.
#[derive(Debug, Clone)]
pub struct IterationGraph {
    pub patches: Vec<Patch>,
    pub frames: Vec<ReferenceFrame>,
    pub graph: PatchGraph,
}

/// Builds the patch graph of `cloud`: FPS centers, patch extraction,
/// coverage, normals, candidate edges and weights.
pub fn iteration_graph(cloud: &PointCloud, config: &DenoiseConfig) -> Result<IterationGraph> {
    let index = SpatialIndex::from_cloud(cloud);
    let patches = iteration_patches(cloud, &index, config)?;
    let frames = patches
        .par_iter()
        .map(estimate_normal)
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.at(0, "normals"))?;
    let graph = patch_graph(&patches, &frames, config)?;
    Ok(IterationGraph { patches, frames, graph })
}

fn iteration_patches(cloud: &PointCloud, index: &SpatialIndex, config: &DenoiseConfig) -> Result<Vec<Patch>> {
    let centers = select_patch_centers(cloud, config.center_fraction, FpsStart::FirstPoint)?;
    let patches = centers
        .par_iter()
        .map(|&c| extract_patch(cloud, index, c, config.patch_size))
        .collect::<Result<Vec<_>>>()?;
    ensure_coverage(cloud, index, patches, config.patch_size)
}

fn patch_graph(patches: &[Patch], frames: &[ReferenceFrame], config: &DenoiseConfig) -> Result<PatchGraph> {
    let centers: Vec<Point> = patches.iter().map(|p| *p.center()).collect();
    let k_neighbors = config.patch_neighbors.min(centers.len().saturating_sub(1));
    let candidates = if k_neighbors == 0 {
        Vec::new()
    } else {
        patch_knn_edges(&centers, k_neighbors)?
    };
    let options = GraphOptions {
        tau: config.tau,
        gamma: config.gamma,
        radius_multiplier: config.radius_multiplier,
        weighting: config.weighting,
    };
    build_patch_graph(patches, frames, &candidates, &options)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationStats {
    pub iteration: usize,
    pub mu: f64,
    pub mean_displacement: f64,
    pub pcg_iterations: [usize; 3],
    pub pcg_converged: bool,
    pub patch_count: usize,
    pub edge_count: usize,
    pub epsilon: f64,
    /// Objective with this iteration's `L_p` at the previous estimate.
    pub objective_before: f64,
    /// Same objective at the solution.
    pub objective_after: f64,
    pub interpolation_fallbacks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DenoiseReport {
    pub iterations_run: usize,
    pub per_iteration: Vec<IterationStats>,
    pub converged: bool,
    pub diameter: f64,
    pub schedule_r: f64,
}

/// Runs the full denoising loop on `cloud`.
pub fn denoise(cloud: &PointCloud, config: &DenoiseConfig) -> Result<(PointCloud, DenoiseReport)> {
    config.validate(cloud.len())?;
    let n = cloud.len();
    let diameter = estimate_diameter(cloud);
    let schedule_r = config.effective_schedule_r();
    let threshold = config.convergence_tol * diameter;
    let pcg_options = PcgOptions {
        tol: config.pcg_tol,
        max_iters: config.pcg_max_iters,
    };
    let mut report = DenoiseReport {
        iterations_run: 0,
        per_iteration: Vec::new(),
        converged: false,
        diameter,
        schedule_r,
    };
    let mut current = cloud.clone();

    for iteration in 1..=config.max_iterations {
        let index = SpatialIndex::from_cloud(&current);
        let patches = iteration_patches(&current, &index, config).map_err(|e| e.at(iteration, "patches"))?;
        let frames = patches
            .par_iter()
            .map(estimate_normal)
            .collect::<Result<Vec<_>>>()
            .map_err(|e| e.at(iteration, "normals"))?;
        let graph = patch_graph(&patches, &frames, config).map_err(|e| e.at(iteration, "graph"))?;
        let map = SamplingMap::from_patches(&patches, n).map_err(|e| e.at(iteration, "sampling"))?;
        let system = point_system(&graph, &patches, &map, config.laplacian).map_err(|e| e.at(iteration, "assembly"))?;

        let mu = mu_schedule(iteration, schedule_r);
        let anchor: [Vec<f64>; 3] = std::array::from_fn(|axis| current.coordinate(axis));
        let linear = LinearSystem::new(&system, anchor, mu).map_err(|e| e.at(iteration, "system"))?;
        let outcomes = (0..3)
            .into_par_iter()
            .map(|axis| solve_coordinate(&linear, axis, pcg_options))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| e.at(iteration, "solve"))?;

        let objective = |u: &[Vec<f64>]| -> Result<f64> {
            let mut total = 0.0;
            for (axis, u) in u.iter().enumerate() {
                total += system.regularizer(axis, u)?;
                total += mu
                    * u.iter()
                        .zip(&linear.anchor[axis])
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>();
            }
            Ok(total)
        };
        let solution: Vec<Vec<f64>> = outcomes.iter().map(|o| o.solution.clone()).collect();
        let objective_before = objective(&linear.anchor).map_err(|e| e.at(iteration, "objective"))?;
        let objective_after = objective(&solution).map_err(|e| e.at(iteration, "objective"))?;

        let next = PointCloud::from_coordinates(&[solution[0].clone(), solution[1].clone(), solution[2].clone()])
            .map_err(|e| e.at(iteration, "update"))?;
        let mean_displacement = next
            .points()
            .iter()
            .zip(current.points())
            .map(|(a, b)| (a - b).norm())
            .sum::<f64>()
            / n as f64;

        let stats = IterationStats {
            iteration,
            mu,
            mean_displacement,
            pcg_iterations: [outcomes[0].iterations, outcomes[1].iterations, outcomes[2].iterations],
            pcg_converged: outcomes.iter().all(|o| o.converged),
            patch_count: patches.len(),
            edge_count: graph.edges.len(),
            epsilon: graph.epsilon,
            objective_before,
            objective_after,
            interpolation_fallbacks: graph.fallbacks,
        };
        debug!("iteration {iteration}: {stats:?}");
        report.per_iteration.push(stats);
        report.iterations_run = iteration;
        current = next;
        if mean_displacement <= threshold {
            report.converged = true;
            break;
        }
    }
    Ok((current, report))
}
