//! PCA normals of centered patches and projection onto the reference plane.

use std::cmp::Ordering;

use nalgebra::{Matrix3, SymmetricEigen};

use crate::cloud::Vector;
use crate::error::{Error, Result};
use crate::patch::Patch;

/// Relative gap below which the two smallest eigenvalues count as equal.
pub const EIGEN_TIE_TOLERANCE: f64 = 1e-9;

/// Plane through the patch center (the origin of translated coordinates)
/// with unit normal `normal`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceFrame {
    normal: Vector,
    degenerate: bool,
}

impl ReferenceFrame {
    /// Normalizes `normal` and flips it so its largest-magnitude component is nonnegative.
    pub fn new(normal: Vector) -> Result<Self> {
        let norm = normal.norm();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::InvalidParameter("normal must be a nonzero finite vector".into()));
        }
        Ok(Self {
            normal: canonical(normal / norm),
            degenerate: false,
        })
    }

    pub fn normal(&self) -> &Vector {
        &self.normal
    }

    /// True when the covariance had a repeated smallest eigenvalue and the
    /// normal was picked by the tie rule rather than by the data.
    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }
}

fn canonical(v: Vector) -> Vector {
    let mut axis = 0;
    for a in 1..3 {
        if v[a].abs() > v[axis].abs() {
            axis = a;
        }
    }
    if v[axis] < 0.0 {
        -v
    } else {
        v
    }
}

fn lexicographic(a: &Vector, b: &Vector) -> Ordering {
    a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)).then(a.z.total_cmp(&b.z))
}

/// `Q = (1/k) Σ v vᵀ` over the translated coordinates. No mean is removed:
/// the patch center, not the centroid, is the origin.
pub fn patch_covariance(patch: &Patch) -> Matrix3<f64> {
    covariance_of(patch.translated())
}

pub fn covariance_of(points: &[Vector]) -> Matrix3<f64> {
    let mut q = Matrix3::zeros();
    if points.is_empty() {
        return q;
    }
    for v in points {
        q += v * v.transpose();
    }
    q / points.len() as f64
}

pub fn estimate_normal(patch: &Patch) -> Result<ReferenceFrame> {
    normal_of(patch.translated())
}

/// Eigenvector of the smallest covariance eigenvalue, canonically oriented.
pub fn normal_of(points: &[Vector]) -> Result<ReferenceFrame> {
    if points.len() < 3 {
        return Err(Error::UnderdeterminedNormal { points: points.len() });
    }
    let eig = SymmetricEigen::new(covariance_of(points));
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));
    let smallest = eig.eigenvalues[order[0]];
    let second = eig.eigenvalues[order[1]];
    let scale = eig.eigenvalues[order[2]].abs().max(f64::MIN_POSITIVE);
    let first_vec = canonical(eig.eigenvectors.column(order[0]).normalize());
    if second - smallest <= EIGEN_TIE_TOLERANCE * scale {
        let second_vec = canonical(eig.eigenvectors.column(order[1]).normalize());
        let normal = match lexicographic(&first_vec, &second_vec) {
            Ordering::Less => second_vec,
            _ => first_vec,
        };
        return Ok(ReferenceFrame {
            normal,
            degenerate: true,
        });
    }
    Ok(ReferenceFrame {
        normal: first_vec,
        degenerate: false,
    })
}

/// Points split into their in-plane projection and signed offset along the normal.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanarProjection {
    pub projections: Vec<Vector>,
    pub displacements: Vec<f64>,
}

pub fn project_to_plane(points: &[Vector], frame: &ReferenceFrame) -> PlanarProjection {
    let n = frame.normal();
    let mut projections = Vec::with_capacity(points.len());
    let mut displacements = Vec::with_capacity(points.len());
    for v in points {
        let d = v.dot(n);
        projections.push(v - n * d);
        displacements.push(d);
    }
    PlanarProjection {
        projections,
        displacements,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::PointCloud;

    fn patch(coords: &[[f64; 3]]) -> Patch {
        let cloud = PointCloud::from_xyz(coords).unwrap();
        Patch::from_members(&cloud, 0, (0..coords.len()).collect()).unwrap()
    }

    #[test]
    fn covariance_small_cases() {
        assert_eq!(patch_covariance(&patch(&[[0.0, 0.0, 0.0]])), Matrix3::zeros());
        let p = patch(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]]);
        // Origin plus ±x: (1 + 1) / 3 on the xx entry.
        let q = patch_covariance(&p);
        assert!((q[(0, 0)] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(q[(1, 1)], 0.0);
    }

    #[test]
    fn covariance_of_two_axis_points() {
        let q = covariance_of(&[Vector::new(1.0, 0.0, 0.0), Vector::new(-1.0, 0.0, 0.0)]);
        assert_eq!(q, Matrix3::from_diagonal(&Vector::new(1.0, 0.0, 0.0)));
    }

    #[test]
    fn planar_patch_normal_is_z() {
        let p = patch(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 1.0, 0.0]]);
        let f = estimate_normal(&p).unwrap();
        assert!(!f.is_degenerate());
        assert!((f.normal() - Vector::new(0.0, 0.0, 1.0)).norm() < 1e-12);
    }

    #[test]
    fn collinear_patch_is_flagged_and_deterministic() {
        let p = patch(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0], [-1.0, 0.0, 0.0]]);
        let a = estimate_normal(&p).unwrap();
        let b = estimate_normal(&p).unwrap();
        assert!(a.is_degenerate());
        assert_eq!(a, b);
        assert!(a.normal().x.abs() < 1e-12);
        assert!((a.normal().norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fewer_than_three_points_is_an_error() {
        let p = patch(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]);
        let err = estimate_normal(&p).unwrap_err();
        assert!(err.to_string().contains("underdetermined normal"));
    }

    #[test]
    fn canonical_sign() {
        let f = ReferenceFrame::new(Vector::new(0.1, -2.0, 0.3)).unwrap();
        assert!(f.normal().y > 0.0);
    }

    #[test]
    fn projection_examples() {
        let f = ReferenceFrame::new(Vector::new(0.0, 0.0, 1.0)).unwrap();
        let pr = project_to_plane(&[Vector::new(0.0, 0.0, 2.0), Vector::new(1.0, 2.0, 0.0)], &f);
        assert_eq!(pr.projections[0], Vector::zeros());
        assert_eq!(pr.displacements, vec![2.0, 0.0]);
        assert_eq!(pr.projections[1], Vector::new(1.0, 2.0, 0.0));
    }
}
