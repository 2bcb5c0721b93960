//! Projection-based patch distance.
//!
//! Two centered patches are compared on the reference plane of one of them:
//! every point is paired with the point of the other patch whose projection
//! is closest, and the signed offsets along the normal are compared. When
//! the closest projection is farther than `tau`, the opposing offset is
//! interpolated from the plane through the three closest projections.

use std::collections::HashSet;

use crate::cloud::Vector;
use crate::error::{Error, Result};
use crate::normals::{project_to_plane, ReferenceFrame};
use crate::patch::Patch;

/// Which patch's frame defined the projection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    /// Source in patch m, target in patch n, frame of m.
    Forward,
    /// Source in patch n, target in patch m, frame of n.
    Backward,
}

/// How an interpolated correspondence splits its weight over the three plane vertices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InterpolationWeighting {
    /// `d_va / (d_va + d_vb + d_vc)`: the farther vertex gets the larger share.
    #[default]
    Proportional,
    /// `(1/d_va) / Σ 1/d`.
    InverseDistance,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    Replacement(usize),
    Interpolated { members: [usize; 3], weights: [f64; 3] },
}

/// One source point and what it was matched to, as member positions within
/// the two patches.
#[derive(Debug, Clone, PartialEq)]
pub struct Correspondence {
    pub source: usize,
    pub target: Target,
    pub direction: Direction,
}

impl Correspondence {
    /// Point-pair edges in the stacked `[patch m; patch n]` ordering, where
    /// patch m occupies `0..m_len`. Each edge carries its weight fraction.
    pub fn pair_edges(&self, m_len: usize) -> Vec<(usize, usize, f64)> {
        let (src, tgt_offset) = match self.direction {
            Direction::Forward => (self.source, m_len),
            Direction::Backward => (m_len + self.source, 0),
        };
        match &self.target {
            Target::Replacement(t) => vec![(src, tgt_offset + t, 1.0)],
            Target::Interpolated { members, weights } => members
                .iter()
                .zip(weights)
                .map(|(&t, &w)| (src, tgt_offset + t, w))
                .collect(),
        }
    }

    /// Global point indices of source and targets.
    pub fn global_points(&self, pm: &Patch, pn: &Patch) -> (usize, Vec<usize>) {
        let (from, to) = match self.direction {
            Direction::Forward => (pm, pn),
            Direction::Backward => (pn, pm),
        };
        let targets = match &self.target {
            Target::Replacement(t) => vec![to.members()[*t]],
            Target::Interpolated { members, .. } => members.iter().map(|&t| to.members()[t]).collect(),
        };
        (from.members()[self.source], targets)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirectedDistance {
    pub value: f64,
    pub correspondences: Vec<Correspondence>,
    /// Interpolations that fell back to nearest-neighbor replacement.
    pub fallbacks: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchDistanceResult {
    /// `sqrt((forward² + backward²) / 2)`.
    pub distance: f64,
    pub forward: f64,
    pub backward: f64,
    pub correspondences: Vec<Correspondence>,
    pub fallbacks: usize,
}

/// Signed distance from `v` along `normal` to the plane through `a`, `b`, `c`.
pub fn plane_interpolated_displacement(v: &Vector, a: &Vector, b: &Vector, c: &Vector, normal: &Vector) -> Result<f64> {
    let ab = b - a;
    let ac = c - a;
    let cross = ab.cross(&ac);
    let len = cross.norm();
    if !(len > 1e-12 * ab.norm() * ac.norm()) || len == 0.0 {
        return Err(Error::DegenerateInterpolationPlane);
    }
    let plane_normal = cross / len;
    let denom = normal.dot(&plane_normal);
    if denom.abs() < 1e-12 {
        return Err(Error::DegenerateInterpolationPlane);
    }
    Ok(plane_normal.dot(&(v - a)) / denom)
}

/// Distance from `pm` to `pn` measured on `frame_m`'s reference plane.
pub fn directed_distance(
    pm: &Patch,
    pn: &Patch,
    frame_m: &ReferenceFrame,
    tau: f64,
    weighting: InterpolationWeighting,
) -> Result<DirectedDistance> {
    directed(
        pm.translated(),
        pn.translated(),
        frame_m,
        tau,
        weighting,
        Direction::Forward,
    )
}

/// [`directed_distance`] on center-translated coordinate sets.
pub fn directed_point_distance(
    source: &[Vector],
    target: &[Vector],
    frame: &ReferenceFrame,
    tau: f64,
    weighting: InterpolationWeighting,
) -> Result<DirectedDistance> {
    directed(source, target, frame, tau, weighting, Direction::Forward)
}

fn directed(
    source: &[Vector],
    target: &[Vector],
    frame: &ReferenceFrame,
    tau: f64,
    weighting: InterpolationWeighting,
    direction: Direction,
) -> Result<DirectedDistance> {
    if source.is_empty() || target.is_empty() {
        return Err(Error::EmptyInput);
    }
    if !(tau > 0.0) {
        return Err(Error::InvalidParameter(format!("tau must be positive, got {tau}")));
    }
    let src = project_to_plane(source, frame);
    let tgt = project_to_plane(target, frame);
    let normal = frame.normal();

    let mut sum_sq = 0.0;
    let mut fallbacks = 0;
    let mut correspondences = Vec::with_capacity(source.len());
    let mut ranked: Vec<(f64, usize)> = Vec::with_capacity(target.len());
    for (i, x) in src.projections.iter().enumerate() {
        ranked.clear();
        ranked.extend(
            tgt.projections
                .iter()
                .enumerate()
                .map(|(j, y)| ((x - y).norm_squared(), j)),
        );
        let nearest = *ranked
            .iter()
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
            .expect("target nonempty");

        let replacement = |fallback: bool| {
            (
                src.displacements[i] - tgt.displacements[nearest.1],
                Target::Replacement(nearest.1),
                fallback,
            )
        };
        let (diff, target_kind, fell_back) = if nearest.0.sqrt() <= tau {
            replacement(false)
        } else if target.len() < 3 {
            replacement(true)
        } else {
            ranked.select_nth_unstable_by(2, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            ranked[..3].sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let tri = [ranked[0].1, ranked[1].1, ranked[2].1];
            let v = &source[i];
            let [a, b, c] = tri.map(|j| &target[j]);
            match plane_interpolated_displacement(v, a, b, c, normal) {
                Ok(offset) => {
                    let dist = [(v - a).norm(), (v - b).norm(), (v - c).norm()];
                    let weights = match weighting {
                        InterpolationWeighting::Proportional => {
                            let total: f64 = dist.iter().sum();
                            dist.map(|d| d / total)
                        }
                        InterpolationWeighting::InverseDistance => {
                            let total: f64 = dist.iter().map(|d| 1.0 / d).sum();
                            dist.map(|d| (1.0 / d) / total)
                        }
                    };
                    (offset, Target::Interpolated { members: tri, weights }, false)
                }
                Err(Error::DegenerateInterpolationPlane) => replacement(true),
                Err(e) => return Err(e),
            }
        };
        if fell_back {
            fallbacks += 1;
        }
        sum_sq += diff * diff;
        correspondences.push(Correspondence {
            source: i,
            target: target_kind,
            direction,
        });
    }
    Ok(DirectedDistance {
        value: (sum_sq / source.len() as f64).sqrt(),
        correspondences,
        fallbacks,
    })
}

/// Symmetric distance: each patch's frame is used once, and the two directed
/// values are combined as their root mean square.
pub fn patch_distance(
    pm: &Patch,
    pn: &Patch,
    frame_m: &ReferenceFrame,
    frame_n: &ReferenceFrame,
    tau: f64,
    weighting: InterpolationWeighting,
) -> Result<PatchDistanceResult> {
    point_set_distance(pm.translated(), pn.translated(), frame_m, frame_n, tau, weighting)
}

/// [`patch_distance`] on center-translated coordinate sets.
pub fn point_set_distance(
    pm: &[Vector],
    pn: &[Vector],
    frame_m: &ReferenceFrame,
    frame_n: &ReferenceFrame,
    tau: f64,
    weighting: InterpolationWeighting,
) -> Result<PatchDistanceResult> {
    let forward = directed(pm, pn, frame_m, tau, weighting, Direction::Forward)?;
    let backward = directed(pn, pm, frame_n, tau, weighting, Direction::Backward)?;

    let m_len = pm.len();
    let mut seen: HashSet<(usize, usize)> = HashSet::new();
    let mut correspondences = Vec::with_capacity(forward.correspondences.len() * 2);
    for c in forward.correspondences.into_iter().chain(backward.correspondences) {
        if let Target::Replacement(_) = c.target {
            let (a, b, _) = c.pair_edges(m_len)[0];
            if !seen.insert((a.min(b), a.max(b))) {
                continue;
            }
        }
        correspondences.push(c);
    }
    Ok(PatchDistanceResult {
        distance: combine(forward.value, backward.value),
        forward: forward.value,
        backward: backward.value,
        correspondences,
        fallbacks: forward.fallbacks + backward.fallbacks,
    })
}

/// `sqrt((a² + b²) / 2)`.
pub fn combine(forward: f64, backward: f64) -> f64 {
    ((forward * forward + backward * backward) / 2.0).sqrt()
}

/// Directed modified Hausdorff distance between patches, on translated coordinates.
pub fn modified_hausdorff(pm: &Patch, pn: &Patch) -> Result<f64> {
    modified_hausdorff_points(pm.translated(), pn.translated())
}

/// Mean over `a` of the Euclidean distance to the nearest point of `b`.
pub fn modified_hausdorff_points(a: &[Vector], b: &[Vector]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyInput);
    }
    let total: f64 = a
        .iter()
        .map(|v| b.iter().map(|w| (v - w).norm()).fold(f64::INFINITY, f64::min))
        .sum();
    Ok(total / a.len() as f64)
}
