use patmod::geometry::*;
use patmod::numerics::{grad_check, Graph};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_cloud(rng: &mut ChaCha8Rng, n: usize, half: f64) -> PointCloud {
    PointCloud::new((0..n).map(|_| [0; 3].map(|_: i32| rng.random_range(-half..half))).collect())
}

fn brute_nearest(q: &Point3, targets: &[Point3]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, t) in targets.iter().enumerate() {
        let d = ((q[0] - t[0]).powi(2) + (q[1] - t[1]).powi(2) + (q[2] - t[2]).powi(2)).sqrt();
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn brute_chamfer(a: &[Point3], b: &[Point3]) -> f64 {
    let fwd: f64 = a.iter().map(|p| brute_nearest(p, b).1).sum();
    let rev: f64 = b.iter().map(|p| brute_nearest(p, a).1).sum();
    fwd + rev
}

#[test]
fn bounding_box_examples() {
    let b = bounding_box(&PointCloud::new(vec![[0.0, 0.0, 0.0], [1.0, 2.0, 3.0]]), 0.0).unwrap();
    assert_eq!(b.min, [0.0; 3]);
    assert_eq!(b.max, [1.0, 2.0, 3.0]);

    let one = PointCloud::new(vec![[0.2, -0.1, 0.3]]);
    let tight = bounding_box(&one, 0.0).unwrap();
    let b = bounding_box(&one, split_epsilon(&tight)).unwrap();
    for a in 0..3 {
        assert!((b.side(a) - 1e-6).abs() < 1e-12);
    }

    assert!(matches!(bounding_box(&PointCloud::default(), 0.0), Err(GeometryError::Domain(_))));
}

#[test]
fn bounding_box_contains_random_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let c = random_cloud(&mut rng, 100, 0.5);
    let b = bounding_box(&c, 0.0).unwrap();
    assert!(c.points().iter().all(|p| b.contains(p)));
}

#[test]
fn eight_regions_means_two_per_edge() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let c = random_cloud(&mut rng, 64, 0.5);
    let rs = split_regions(&c, &c, 8, 64).unwrap();
    assert_eq!(rs.per_edge, 2);
    assert_eq!(rs.len(), 8);
    assert!(matches!(split_regions(&c, &c, 9, 64), Err(GeometryError::Domain(_))));
}

#[test]
fn single_region_holds_everything() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let c = random_cloud(&mut rng, 50, 0.5);
    let rs = split_regions(&c, &c, 1, 50).unwrap();
    assert_eq!(rs.regions[0].real_count(), 50);
    let m = c.mean().unwrap();
    for a in 0..3 {
        assert!((rs.regions[0].center[a] - m[a]).abs() < 1e-15);
    }
}

#[test]
fn regions_partition_source() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let c = random_cloud(&mut rng, 500, 0.5);
    let rs = split_regions(&c, &c, 8, 500).unwrap();
    let mut seen = vec![0; 500];
    for (m, r) in rs.regions.iter().enumerate() {
        assert_eq!(r.points.len(), 500);
        for (row, &i) in r.source_indices.iter().enumerate() {
            seen[i] += 1;
            assert!(r.mask[row]);
            assert_eq!(r.points[row], c.points()[i]);
            // brute-force binning against the same box
            let mut v = [0usize; 3];
            for a in 0..3 {
                let t = (c.points()[i][a] - rs.bounds.min[a]) / rs.bounds.side(a);
                v[a] = if t < 0.5 { 0 } else { 1 };
            }
            assert_eq!(v, r.voxel_index);
            assert_eq!(m, (v[0] * 2 + v[1]) * 2 + v[2]);
        }
        for row in r.real_count()..500 {
            assert!(!r.mask[row]);
            assert_eq!(r.points[row], [0.0; 3]);
        }
        if r.is_empty() {
            assert_eq!(r.center, [0.0; 3]);
        } else {
            let mean = r.real_points().mean().unwrap();
            assert_eq!(mean, r.center);
        }
    }
    assert!(seen.iter().all(|&s| s == 1));
    assert_eq!(rs.truncated, 0);
}

#[test]
fn overflow_keeps_lowest_indices() {
    let c = PointCloud::new((0..10).map(|i| [i as f64 * 0.01, 0.0, 0.0]).collect());
    let rs = split_regions(&c, &c, 1, 4).unwrap();
    assert_eq!(rs.regions[0].source_indices, vec![0, 1, 2, 3]);
    assert_eq!(rs.truncated, 6);
    assert_eq!(rs.real_count(), 4);
}

#[test]
fn outside_points_clamp_to_boundary() {
    let reference = PointCloud::new(vec![[0.0; 3], [1.0; 3]]);
    let source = PointCloud::new(vec![[-5.0, -5.0, -5.0], [9.0, 9.0, 9.0], [0.1, 0.9, 2.0]]);
    let rs = split_regions(&source, &reference, 8, 3).unwrap();
    assert_eq!(rs.real_count(), 3);
    assert_eq!(rs.regions[0].source_indices, vec![0]);
    assert_eq!(rs.regions[7].source_indices, vec![1]);
    assert_eq!(rs.regions[3].source_indices, vec![2]);
}

#[test]
fn max_face_point_lands_in_last_voxel() {
    let c = PointCloud::new(vec![[0.0; 3], [1.0; 3]]);
    let rs = split_regions(&c, &c, 27, 2).unwrap();
    assert_eq!(rs.regions[26].source_indices, vec![1]);
}

fn region_from(points: &[Point3], capacity: usize) -> Region {
    let c = PointCloud::new(points.to_vec());
    let mut r = split_regions(&c, &c, 1, capacity).unwrap().regions.remove(0);
    r.center = [0.0; 3];
    r
}

#[test]
fn center_region_examples() {
    let r = region_from(&[[1.0; 3], [3.0; 3]], 4);
    let c = center_region(&r);
    assert_eq!(c.center, [2.0; 3]);
    assert_eq!(&c.points[..2], &[[-1.0; 3], [1.0; 3]]);
    assert_eq!(&c.points[2..], &[[0.0; 3]; 2]);
    assert_eq!(c.mask, r.mask);

    let zero_mean = region_from(&[[-1.0, 2.0, 0.5], [1.0, -2.0, -0.5]], 2);
    assert_eq!(center_region(&zero_mean).points, zero_mean.points);

    let mut empty = region_from(&[[1.0; 3]], 3);
    empty.mask = vec![false; 3];
    empty.points = vec![[0.0; 3]; 3];
    empty.source_indices.clear();
    empty.center = [7.0; 3];
    let out = center_region(&empty);
    assert_eq!(out.points, empty.points);
    assert_eq!(out.center, [0.0; 3]);
}

#[test]
fn center_decenter_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let cloud = random_cloud(&mut rng, 37, 0.5).translated([0.3, -0.2, 0.1]);
    let r = region_from(cloud.points(), 50);
    let c = center_region(&r);
    let mean = c.real_points().mean().unwrap();
    assert!(mean.iter().all(|v| v.abs() < 1e-12));
    let back = decenter(&c.points[..37], c.center);
    for (p, q) in back.iter().zip(cloud.points()) {
        for a in 0..3 {
            assert!((p[a] - q[a]).abs() < 1e-12);
        }
    }
    assert_eq!(decenter(cloud.points(), [0.0; 3]), cloud.points());
}

#[test]
fn lattice_examples() {
    assert_eq!(lattice_dims(256, SamplingMode::Voxel).unwrap(), [8, 8, 4]);
    let pts = grid_lattice(256, 0.25, SamplingMode::Voxel).unwrap();
    assert_eq!(pts.len(), 256);
    assert!(pts.iter().flatten().all(|v| v.abs() <= 0.25));

    let corners = grid_lattice(8, 1.0, SamplingMode::Voxel).unwrap();
    assert_eq!(corners.len(), 8);
    assert!(corners.iter().flatten().all(|v| v.abs() == 1.0));
    let mut sorted = corners.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    sorted.dedup();
    assert_eq!(sorted.len(), 8);

    assert_eq!(lattice_dims(256, SamplingMode::Plane).unwrap(), [16, 16, 1]);
    let plane = grid_lattice(256, 0.25, SamplingMode::Plane).unwrap();
    assert_eq!(plane.len(), 256);
    assert!(plane.iter().all(|p| p[2] == 0.0));

    assert!(matches!(grid_lattice(0, 1.0, SamplingMode::Voxel), Err(GeometryError::Domain(_))));
    assert_eq!("plane".parse::<SamplingMode>().unwrap(), SamplingMode::Plane);
    assert!("grid".parse::<SamplingMode>().is_err());
}

#[test]
fn nearest_neighbor_examples() {
    let (i, d) = nearest_neighbor(&[[0.0; 3]], &[[1.0, 0.0, 0.0], [0.5, 0.0, 0.0]]).unwrap();
    assert_eq!((i[0], d[0]), (1, 0.5));
    let (i, d) = nearest_neighbor(&[[0.2, 0.3, 0.4]], &[[1.0; 3], [0.2, 0.3, 0.4]]).unwrap();
    assert_eq!((i[0], d[0]), (1, 0.0));
    assert!(matches!(nearest_neighbor(&[[0.0; 3]], &[]), Err(GeometryError::Domain(_))));
}

#[test]
fn nearest_neighbor_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let q = random_cloud(&mut rng, 200, 0.5);
    let t = random_cloud(&mut rng, 300, 0.5);
    let (idx, dist) = nearest_neighbor(q.points(), t.points()).unwrap();
    for (k, p) in q.points().iter().enumerate() {
        let (bi, bd) = brute_nearest(p, t.points());
        assert_eq!(idx[k], bi);
        assert_eq!(dist[k], bd);
    }
}

#[test]
fn nearest_neighbor_ties_go_low() {
    // lattice targets make many equidistant candidates
    let t = grid_lattice(64, 1.0, SamplingMode::Voxel).unwrap();
    let q: Vec<Point3> = grid_lattice(27, 1.0, SamplingMode::Voxel).unwrap();
    let (idx, dist) = nearest_neighbor(&q, &t).unwrap();
    for (k, p) in q.iter().enumerate() {
        let (bi, bd) = brute_nearest(p, &t);
        assert_eq!((idx[k], dist[k]), (bi, bd));
    }
}

#[test]
fn chamfer_examples() {
    let a = PointCloud::new(vec![[0.0; 3]]);
    let b = PointCloud::new(vec![[1.0, 0.0, 0.0]]);
    assert_eq!(chamfer_value(&a, &b).unwrap(), 2.0);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = random_cloud(&mut rng, 20, 0.5);
    assert_eq!(chamfer_value(&x, &x).unwrap(), 0.0);
    assert!(matches!(chamfer_value(&x, &PointCloud::default()), Err(GeometryError::Domain(_))));
}

#[test]
fn chamfer_matches_brute_force_and_differentiates() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let a = random_cloud(&mut rng, 30, 0.5);
    let b = random_cloud(&mut rng, 40, 0.5);
    let v = chamfer_value(&a, &b).unwrap();
    assert!((v - brute_chamfer(a.points(), b.points())).abs() < 1e-12);

    let mut g = Graph::new();
    let va = g.leaf(a.to_tensor());
    let vb = g.leaf(b.to_tensor());
    let c = chamfer(&mut g, va, vb).unwrap();
    assert!((g.value(c).data()[0] - v).abs() < 1e-12);

    let bt = b.to_tensor();
    let report = grad_check(
        |g: &mut Graph, x| {
            let vb = g.leaf(bt.clone());
            chamfer(g, x, vb)
        },
        &a.to_tensor(),
        1e-6,
    )
    .unwrap();
    assert!(report.max_rel_error < 1e-4, "{report:?}");
}

#[test]
fn chamfer_eval_normalises_per_point() {
    let a = PointCloud::new(vec![[0.0; 3], [0.0; 3]]);
    let b = PointCloud::new(vec![[1.0, 0.0, 0.0]]);
    // forward mean 1, reverse mean 1
    assert_eq!(chamfer_eval(&a, &b).unwrap(), 1.0);
    assert_eq!(chamfer_value(&a, &b).unwrap(), 3.0);
}

#[test]
fn voxelize_examples() {
    let bounds = Aabb { min: [-1.0; 3], max: [1.0; 3] };
    let g = voxelize(&PointCloud::new(vec![[0.0; 3]]), 1, bounds).unwrap();
    assert_eq!(g.occupancy, vec![true]);

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let c = random_cloud(&mut rng, 40, 0.9);
    let g1 = voxelize(&c, 8, bounds).unwrap();
    let g2 = voxelize(&c.clone(), 8, bounds).unwrap();
    assert_eq!(g1, g2);
    assert_eq!(iou(&g1, &g2).unwrap(), 1.0);
    assert!(voxelize(&c, 0, bounds).is_err());
}

#[test]
fn voxelize_matches_brute_binning() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let c = random_cloud(&mut rng, 60, 0.5);
    let bounds = Aabb { min: [-0.5; 3], max: [0.5; 3] };
    let g = voxelize(&c, 4, bounds).unwrap();
    let mut want = vec![false; 64];
    for p in c.points() {
        let cell = |v: f64| (0..4).find(|&k| v < -0.5 + 0.25 * (k + 1) as f64).unwrap_or(3);
        want[(cell(p[0]) * 4 + cell(p[1])) * 4 + cell(p[2])] = true;
    }
    assert_eq!(g.occupancy, want);
}

#[test]
fn iou_matches_set_counts() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let bounds = Aabb { min: [-0.5; 3], max: [0.5; 3] };
    let a = voxelize(&random_cloud(&mut rng, 80, 0.5), 8, bounds).unwrap();
    let b = voxelize(&random_cloud(&mut rng, 80, 0.5), 8, bounds).unwrap();
    let cells = |g: &VoxelGrid| -> std::collections::BTreeSet<usize> {
        g.occupancy.iter().enumerate().filter(|(_, &o)| o).map(|(i, _)| i).collect()
    };
    let (sa, sb) = (cells(&a), cells(&b));
    let want = sa.intersection(&sb).count() as f64 / sa.union(&sb).count() as f64;
    assert_eq!(iou(&a, &b).unwrap(), want);

    let lo = voxelize(&PointCloud::new(vec![[-0.4; 3]]), 8, bounds).unwrap();
    let hi = voxelize(&PointCloud::new(vec![[0.4; 3]]), 8, bounds).unwrap();
    assert_eq!(iou(&lo, &hi).unwrap(), 0.0);

    let coarse = voxelize(&PointCloud::new(vec![[0.0; 3]]), 4, bounds).unwrap();
    assert!(matches!(iou(&a, &coarse), Err(GeometryError::Contract(_))));
    let mut empty = a.clone();
    empty.occupancy.iter_mut().for_each(|o| *o = false);
    assert!(matches!(iou(&empty, &empty), Err(GeometryError::Domain(_))));
}

#[test]
fn downsample_examples() {
    let line = PointCloud::new((0..4).map(|i| [i as f64, 0.0, 0.0]).collect());
    let mut idx = farthest_point_indices(&line, 2).unwrap();
    idx.sort();
    assert_eq!(idx, vec![0, 3]);

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let c = random_cloud(&mut rng, 30, 0.5);
    for method in [DownsampleMethod::Fps, DownsampleMethod::Random { seed: 1 }] {
        let d = downsample(&c, 30, method).unwrap();
        let mut got = d.into_points();
        let mut want = c.points().to_vec();
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        want.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(got, want);
        assert!(matches!(downsample(&c, 31, method), Err(GeometryError::Domain(_))));
    }
    let r1 = downsample(&c, 10, DownsampleMethod::Random { seed: 5 }).unwrap();
    let r2 = downsample(&c, 10, DownsampleMethod::Random { seed: 5 }).unwrap();
    assert_eq!(r1, r2);
}

fn min_pairwise(c: &PointCloud) -> f64 {
    let p = c.points();
    let mut best = f64::INFINITY;
    for i in 0..p.len() {
        for j in i + 1..p.len() {
            best = best.min(brute_nearest(&p[i], &[p[j]]).1);
        }
    }
    best
}

#[test]
fn fps_spreads_wider_than_random() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for trial in 0..50 {
        let c = random_cloud(&mut rng, 200, 0.5);
        let f = downsample(&c, 16, DownsampleMethod::Fps).unwrap();
        let r = downsample(&c, 16, DownsampleMethod::Random { seed: trial }).unwrap();
        assert!(f.points().iter().all(|p| c.points().contains(p)));
        assert!(min_pairwise(&f) >= min_pairwise(&r), "trial {trial}");
    }
}

fn cloud_strategy(max: usize) -> impl Strategy<Value = PointCloud> {
    prop::collection::vec(prop::array::uniform3(-0.5f64..0.5), 1..max).prop_map(PointCloud::new)
}

proptest! {
    #[test]
    fn chamfer_symmetric_and_nonnegative(a in cloud_strategy(40), b in cloud_strategy(40)) {
        let ab = chamfer_value(&a, &b).unwrap();
        prop_assert_eq!(ab, chamfer_value(&b, &a).unwrap());
        prop_assert!(ab >= 0.0);
        prop_assert_eq!(chamfer_value(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn kd_tree_is_exact(q in cloud_strategy(30), t in cloud_strategy(60)) {
        let (idx, dist) = nearest_neighbor(q.points(), t.points()).unwrap();
        for (k, p) in q.points().iter().enumerate() {
            prop_assert_eq!((idx[k], dist[k]), brute_nearest(p, t.points()));
        }
    }

    #[test]
    fn partition_counts(c in cloud_strategy(200), e in 1usize..4, cap in 1usize..80) {
        let m = e * e * e;
        let rs = split_regions(&c, &c, m, cap).unwrap();
        let mut seen = vec![0u8; c.len()];
        for r in &rs.regions {
            for &i in &r.source_indices { seen[i] += 1; }
            prop_assert_eq!(r.mask.iter().filter(|&&x| x).count(), r.real_count());
        }
        prop_assert!(seen.iter().all(|&s| s <= 1));
        prop_assert_eq!(rs.real_count() + rs.truncated, c.len());
        if cap >= c.len() {
            prop_assert_eq!(rs.real_count(), c.len());
        }
    }

    #[test]
    fn lattice_within_cube(p in 1usize..300, ext in 0.01f64..2.0) {
        let pts = grid_lattice(p, ext, SamplingMode::Voxel).unwrap();
        prop_assert_eq!(pts.len(), p);
        prop_assert!(pts.iter().flatten().all(|v| v.abs() <= ext));
    }
}
