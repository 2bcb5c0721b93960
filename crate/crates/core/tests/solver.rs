mod common;

use common::{dense_laplacian, inf_norm_gap, random_edges, rel_close, rng, sparse_dense_gap};
use glr_core::graph::{laplacian_from_edges, normalized_laplacian, point_laplacian, SparseSymmetricMatrix};
use glr_core::patch::Patch;
use glr_core::solver::{
    build_system, iteration_graph, pcg, point_system, point_system_from_slots, solve_coordinate,
    spectral_filter_reference, LinearSystem, PcgOptions, PointSystem, SamplingMap,
};
use glr_core::spatial::estimate_diameter;
use glr_core::{add_gaussian_noise, denoise, mse, synthetic, DenoiseConfig, LaplacianKind, Point, PointCloud};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use proptest::prelude::*;
use rand::Rng;

fn dense_sampling(map: &SamplingMap) -> DMatrix<f64> {
    let mut s = DMatrix::zeros(map.slot_count(), map.point_count());
    for (slot, &p) in map.slot_points().iter().enumerate() {
        s[(slot, p)] = 1.0;
    }
    s
}

fn random_system(seed: u64, n: usize, edges: usize) -> (SparseSymmetricMatrix, DMatrix<f64>) {
    let mut r = rng(seed);
    let e = random_edges(&mut r, n, edges, 1.0);
    (laplacian_from_edges(n, &e).unwrap(), dense_laplacian(n, &e))
}

fn bare_system(l: SparseSymmetricMatrix) -> PointSystem {
    let n = l.dim();
    PointSystem {
        laplacian: l,
        coupling: [vec![0.0; n], vec![0.0; n], vec![0.0; n]],
        offset: [0.0; 3],
    }
}

#[test]
fn system_matches_dense_materialized_sampling() {
    let mut r = rng(41);
    let cloud = common::random_cloud(&mut r, 12);
    let patches: Vec<Patch> = [
        (0, vec![0, 1, 2, 3, 4, 5]),
        (6, vec![6, 3, 7, 8, 9]),
        (10, vec![10, 11, 0, 6]),
    ]
    .into_iter()
    .map(|(c, m)| Patch::from_members(&cloud, c, m).unwrap())
    .collect();
    let map = SamplingMap::from_patches(&patches, cloud.len()).unwrap();
    let slots = map.slot_count();
    let edges = random_edges(&mut r, slots, 30, 1.0);
    let l_p = laplacian_from_edges(slots, &edges).unwrap();
    let centers: Vec<Point> = patches.iter().map(|p| *p.center()).collect();
    let v: [Vec<f64>; 3] = std::array::from_fn(|a| cloud.coordinate(a));
    let mu = 2.173;
    let sys = build_system(&l_p, &map, &centers, v.clone(), mu).unwrap();

    let s = dense_sampling(&map);
    let l = dense_laplacian(slots, &edges);
    let want = s.transpose() * &l * &s + DMatrix::identity(cloud.len(), cloud.len()) * mu;
    assert!(sparse_dense_gap(&sys.system_matrix, &want) < 1e-12);
    for axis in 0..3 {
        let c = DVector::from_iterator(
            slots,
            map.slot_points().iter().enumerate().map(|(slot, _)| {
                let patch = map.offsets().iter().rposition(|&o| o <= slot).unwrap();
                centers[patch][axis]
            }),
        );
        let rhs = DVector::from_column_slice(&v[axis]) * mu + s.transpose() * &l * c;
        assert!(inf_norm_gap(&sys.rhs[axis], rhs.as_slice()) < 1e-12);
    }
}

#[test]
fn single_patch_over_whole_cloud_keeps_laplacian() {
    let cloud = common::random_cloud(&mut rng(42), 6);
    let patch = Patch::from_members(&cloud, 0, (0..6).collect()).unwrap();
    let map = SamplingMap::from_patches(std::slice::from_ref(&patch), 6).unwrap();
    let (l, dense) = random_system(42, 6, 10);
    let ps = point_system_from_slots(&l, &map, &[*patch.center()]).unwrap();
    assert!(sparse_dense_gap(&ps.laplacian, &dense) < 1e-15);
}

#[test]
fn streaming_assembly_matches_slot_projection() {
    for (seed, tau) in [(43, 1.0), (44, 0.03)] {
        let cloud = synthetic::cube_surface(400, 1.0, seed);
        let ig = iteration_graph(
            &cloud,
            &DenoiseConfig {
                tau,
                ..DenoiseConfig::default()
            },
        )
        .unwrap();
        let map = SamplingMap::from_patches(&ig.patches, cloud.len()).unwrap();
        let centers: Vec<Point> = ig.patches.iter().map(|p| *p.center()).collect();
        let l_p = point_laplacian(&ig.graph, &ig.patches, map.offsets(), map.slot_count()).unwrap();
        for (kind, slots) in [
            (LaplacianKind::Combinatorial, l_p.clone()),
            (LaplacianKind::Normalized, normalized_laplacian(&l_p).unwrap()),
        ] {
            let want = point_system_from_slots(&slots, &map, &centers).unwrap();
            let got = point_system(&ig.graph, &ig.patches, &map, kind).unwrap();
            let scale = want.laplacian.diagonal().iter().fold(0.0f64, |a, b| a.max(b.abs()));
            assert!(sparse_dense_gap(&got.laplacian, &want.laplacian.to_dense()) <= 1e-12 * scale);
            for axis in 0..3 {
                assert!(inf_norm_gap(&got.coupling[axis], &want.coupling[axis]) <= 1e-12 * scale);
                assert!(rel_close(got.offset[axis], want.offset[axis], 1e-9));
            }
        }
    }
}

#[test]
fn pcg_matches_dense_factorization() {
    for seed in 0..10 {
        let (l, dense) = random_system(seed, 50, 150);
        let mu = 0.7;
        let a = l.add_identity(mu);
        let mut r = rng(seed + 100);
        let b: Vec<f64> = (0..50).map(|_| r.random_range(-1.0..1.0)).collect();
        let want = (dense + DMatrix::identity(50, 50) * mu)
            .cholesky()
            .unwrap()
            .solve(&DVector::from_column_slice(&b));
        let got = pcg(&a, &b, &vec![0.0; 50], PcgOptions::default()).unwrap();
        assert!(got.converged);
        assert!(inf_norm_gap(&got.solution, want.as_slice()) < 1e-6);
    }
}

#[test]
fn zero_laplacian_returns_anchor() {
    let v = vec![0.3, -1.0, 2.5, 7.0];
    let linear = LinearSystem::new(
        &bare_system(SparseSymmetricMatrix::zeros(4)),
        [v.clone(), v.clone(), v.clone()],
        3.0,
    )
    .unwrap();
    assert_eq!(linear.rhs[0], v.iter().map(|x| 3.0 * x).collect::<Vec<_>>());
    assert_eq!(solve_coordinate(&linear, 2, PcgOptions::default()).unwrap().solution, v);
}

#[test]
fn system_eigenvalues_exceed_mu() {
    for seed in 0..5 {
        let (l, _) = random_system(seed, 120, 300);
        let mu = 2.173;
        let min = SymmetricEigen::new(l.add_identity(mu).to_dense()).eigenvalues.min();
        assert!(min >= mu - 1e-9, "{min}");
    }
}

#[test]
fn large_mu_keeps_the_anchor() {
    let cloud = synthetic::sphere(300, 1.0, 45);
    let ig = iteration_graph(&cloud, &DenoiseConfig::default()).unwrap();
    let map = SamplingMap::from_patches(&ig.patches, cloud.len()).unwrap();
    let ps = point_system(&ig.graph, &ig.patches, &map, LaplacianKind::Combinatorial).unwrap();
    let v: [Vec<f64>; 3] = std::array::from_fn(|a| cloud.coordinate(a));
    let linear = LinearSystem::new(&ps, v.clone(), 1e8).unwrap();
    let diameter = estimate_diameter(&cloud);
    for (axis, v) in v.iter().enumerate() {
        let u = solve_coordinate(&linear, axis, PcgOptions::default()).unwrap().solution;
        assert!(inf_norm_gap(&u, v) <= 1e-4 * diameter);
    }
}

#[test]
fn solution_minimizes_the_objective() {
    let cloud = add_gaussian_noise(&synthetic::sphere(600, 1.0, 46), 0.02, 1).unwrap();
    let config = DenoiseConfig {
        max_iterations: 4,
        convergence_tol: 1e-12,
        ..DenoiseConfig::default()
    };
    let (_, report) = denoise(&cloud, &config).unwrap();
    assert_eq!(report.iterations_run, 4);
    for s in &report.per_iteration {
        assert!(s.objective_after <= s.objective_before + 1e-9, "{s:?}");
        assert!(s.pcg_converged);
    }
}

#[test]
fn denoise_is_deterministic() {
    let cloud = add_gaussian_noise(&synthetic::cube_surface(800, 1.0, 47), 0.02, 2).unwrap();
    let config = DenoiseConfig {
        max_iterations: 3,
        ..DenoiseConfig::default()
    };
    let (a, ra) = denoise(&cloud, &config).unwrap();
    let (b, rb) = denoise(&cloud, &config).unwrap();
    let bits = |c: &PointCloud| {
        c.points()
            .iter()
            .flat_map(|p| p.iter().map(|x| x.to_bits()).collect::<Vec<_>>())
            .collect::<Vec<_>>()
    };
    assert_eq!(bits(&a), bits(&b));
    assert_eq!(ra, rb);
}

#[test]
fn noisy_plane_mse_ratio_at_most_seven_tenths() {
    let clean = synthetic::plane(2000, 1.0, 48);
    let noisy = add_gaussian_noise(&clean, 0.02, 3).unwrap();
    let (out, _) = denoise(&noisy, &DenoiseConfig::default()).unwrap();
    let ratio = mse(&clean, &out) / mse(&clean, &noisy);
    assert!(ratio <= 0.7, "{ratio}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn pcg_agrees_with_spectral_filter(seed in 0u64..10_000, n in 5usize..300, mu in prop::sample::select(vec![2.173, 10.0, 100.0])) {
        let (l, _) = random_system(seed, n, 3 * n);
        let mut r = rng(seed ^ 0x5eed);
        let v: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
        let c: Vec<f64> = (0..n).map(|_| r.random_range(-0.1..0.1)).collect();
        let system = PointSystem { coupling: [c.clone(), c.clone(), c], ..bare_system(l.clone()) };
        let linear = LinearSystem::new(&system, [v.clone(), v.clone(), v], mu).unwrap();
        let got = solve_coordinate(&linear, 0, PcgOptions::default()).unwrap();
        let want = spectral_filter_reference(&l, mu, &linear.rhs[0]).unwrap();
        prop_assert!(inf_norm_gap(&got.solution, &want) <= 1e-6);
    }
}
