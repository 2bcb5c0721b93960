use nalgebra::{Point3, Vector3};

use crate::error::{Error, Result};

pub type Point = Point3<f64>;
pub type Vector = Vector3<f64>;

/// An ordered, nonempty set of finite 3D points.
///
/// Index `i` refers to the same point for the lifetime of the cloud; the
/// denoiser produces a new cloud with the same ordering.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<Point>,
}

impl PointCloud {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyInput);
        }
        if let Some(index) = points.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { points })
    }

    pub fn from_xyz(coords: &[[f64; 3]]) -> Result<Self> {
        Self::new(coords.iter().map(|c| Point::new(c[0], c[1], c[2])).collect())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    /// Always false; kept for API symmetry with `len`.
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn point(&self, index: usize) -> &Point {
        &self.points[index]
    }

    pub fn into_points(self) -> Vec<Point> {
        self.points
    }

    /// Column `axis` (0 = x, 1 = y, 2 = z) as a dense vector.
    pub fn coordinate(&self, axis: usize) -> Vec<f64> {
        self.points.iter().map(|p| p[axis]).collect()
    }

    /// Rebuilds a cloud from three coordinate columns of equal length.
    pub fn from_coordinates(columns: &[Vec<f64>; 3]) -> Result<Self> {
        let n = columns[0].len();
        for c in &columns[1..] {
            if c.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    actual: c.len(),
                });
            }
        }
        Self::new(
            (0..n)
                .map(|i| Point::new(columns[0][i], columns[1][i], columns[2][i]))
                .collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_empty_and_non_finite() {
        assert!(matches!(PointCloud::new(vec![]), Err(Error::EmptyInput)));
        let err = PointCloud::from_xyz(&[[0.0, 0.0, 0.0], [f64::NAN, 0.0, 0.0]]).unwrap_err();
        assert!(matches!(err, Error::NonFinite { index: 1 }));
    }

    #[test]
    fn coordinate_columns_round_trip() {
        let cloud = PointCloud::from_xyz(&[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]).unwrap();
        let cols = [cloud.coordinate(0), cloud.coordinate(1), cloud.coordinate(2)];
        assert_eq!(cols[1], vec![2.0, 5.0]);
        assert_eq!(PointCloud::from_coordinates(&cols).unwrap(), cloud);
    }
}
