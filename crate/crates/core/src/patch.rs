//! Surface patches: center selection, k-nearest extraction and coverage.

use crate::cloud::{Point, PointCloud, Vector};
use crate::error::{Error, Result};
use crate::spatial::{farthest_point_sample, SpatialIndex};

/// A center point plus its `k` nearest neighbors, expressed relative to the center.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    center_index: usize,
    center: Point,
    members: Vec<usize>,
    translated: Vec<Vector>,
}

impl Patch {
    /// Builds a patch from explicit member indices (the center must be one of them).
    pub fn from_members(cloud: &PointCloud, center_index: usize, members: Vec<usize>) -> Result<Self> {
        let n = cloud.len();
        if let Some(&bad) = members.iter().chain([&center_index]).find(|&&i| i >= n) {
            return Err(Error::IndexOutOfRange {
                index: bad,
                dimension: n,
            });
        }
        if !members.contains(&center_index) {
            return Err(Error::InvalidParameter(format!(
                "patch members must include center {center_index}"
            )));
        }
        let center = *cloud.point(center_index);
        let translated = members.iter().map(|&i| cloud.point(i) - center).collect();
        Ok(Self {
            center_index,
            center,
            members,
            translated,
        })
    }

    pub fn center_index(&self) -> usize {
        self.center_index
    }

    /// Position of the center in the cloud the patch was cut from.
    pub fn center(&self) -> &Point {
        &self.center
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    /// Member positions minus the center position; the center maps to the origin.
    pub fn translated(&self) -> &[Vector] {
        &self.translated
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// The translated coordinates flattened into one `3k` vector (x, y, z per member).
    pub fn as_vector(&self) -> Vec<f64> {
        self.translated.iter().flat_map(|v| [v.x, v.y, v.z]).collect()
    }
}

/// Where farthest point sampling starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FpsStart {
    #[default]
    FirstPoint,
    Index(usize),
}

/// Number of centers for a sampling fraction: `ceil(fraction * n)`, at least one.
pub fn center_count(n: usize, fraction: f64) -> usize {
    // The small slack keeps products like (2/3) * 3 from rounding up to 3.
    let raw = (fraction * n as f64 - 1e-9).ceil();
    (raw.max(1.0) as usize).min(n)
}

pub fn select_patch_centers(cloud: &PointCloud, fraction: f64, start: FpsStart) -> Result<Vec<usize>> {
    if cloud.is_empty() {
        return Err(Error::EmptyInput);
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "center fraction {fraction} outside (0, 1]"
        )));
    }
    let start = match start {
        FpsStart::FirstPoint => 0,
        FpsStart::Index(i) => i,
    };
    farthest_point_sample(cloud.points(), center_count(cloud.len(), fraction), start)
}

/// The `k` points nearest to `center_index` (the center itself included).
pub fn extract_patch(cloud: &PointCloud, index: &SpatialIndex, center_index: usize, k: usize) -> Result<Patch> {
    let n = cloud.len();
    if k > n {
        return Err(Error::PatchLargerThanCloud { k, points: n });
    }
    if k == 0 {
        return Err(Error::InvalidParameter("patch size must be positive".into()));
    }
    if center_index >= n {
        return Err(Error::IndexOutOfRange {
            index: center_index,
            dimension: n,
        });
    }
    let mut members: Vec<usize> = index
        .knn(cloud.point(center_index), k)?
        .into_iter()
        .map(|nb| nb.index)
        .collect();
    if !members.contains(&center_index) {
        // Only possible when lower-indexed duplicates of the center fill
        // all k slots; the center is tied with them at distance zero.
        members.pop();
        members.insert(0, center_index);
    }
    Patch::from_members(cloud, center_index, members)
}

/// Appends patches centered at uncovered points (lowest index first) until
/// every point belongs to at least one patch.
pub fn ensure_coverage(
    cloud: &PointCloud,
    index: &SpatialIndex,
    mut patches: Vec<Patch>,
    k: usize,
) -> Result<Vec<Patch>> {
    let mut covered = vec![false; cloud.len()];
    for p in &patches {
        for &m in p.members() {
            covered[m] = true;
        }
    }
    for i in 0..cloud.len() {
        if !covered[i] {
            let extra = extract_patch(cloud, index, i, k)?;
            for &m in extra.members() {
                covered[m] = true;
            }
            patches.push(extra);
        }
    }
    Ok(patches)
}
