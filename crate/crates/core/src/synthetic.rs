//! Uniform samplers for simple test shapes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::cloud::{Point, PointCloud};

/// `n` points uniform on the square `[0, side]² × {0}`.
pub fn plane(n: usize, side: f64, seed: u64) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts = (0..n)
        .map(|_| Point::new(rng.random::<f64>() * side, rng.random::<f64>() * side, 0.0))
        .collect();
    PointCloud::new(pts).expect("finite samples")
}

/// `n` points uniform on the surface of the cube `[0, side]³`.
pub fn cube_surface(n: usize, side: f64, seed: u64) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts = (0..n)
        .map(|_| {
            let face = rng.random_range(0..6usize);
            let u = rng.random::<f64>() * side;
            let v = rng.random::<f64>() * side;
            let w = if face % 2 == 0 { 0.0 } else { side };
            match face / 2 {
                0 => Point::new(w, u, v),
                1 => Point::new(u, w, v),
                _ => Point::new(u, v, w),
            }
        })
        .collect();
    PointCloud::new(pts).expect("finite samples")
}

/// `n` points uniform on the sphere of the given radius about the origin.
pub fn sphere(n: usize, radius: f64, seed: u64) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts = (0..n)
        .map(|_| loop {
            let v = nalgebra::Vector3::new(
                StandardNormal.sample(&mut rng),
                StandardNormal.sample(&mut rng),
                StandardNormal.sample(&mut rng),
            );
            let len: f64 = v.norm();
            if len > 1e-12 {
                break Point::from(v * (radius / len));
            }
        })
        .collect();
    PointCloud::new(pts).expect("finite samples")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn samples_lie_on_shapes() {
        for p in plane(100, 2.0, 1).points() {
            assert!(p.z == 0.0 && (0.0..=2.0).contains(&p.x));
        }
        for p in cube_surface(100, 1.0, 1).points() {
            let on_face = [p.x, p.y, p.z].iter().any(|&c| c == 0.0 || c == 1.0);
            assert!(on_face);
        }
        for p in sphere(100, 3.0, 1).points() {
            assert!((p.coords.norm() - 3.0).abs() < 1e-12);
        }
        assert_eq!(sphere(10, 1.0, 5), sphere(10, 1.0, 5));
    }
}
