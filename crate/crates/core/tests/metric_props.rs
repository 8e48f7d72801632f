//! Property tests for the Hausdorff metrics and the shortest-distance matrix.

use hpc_core::kernel::{generate_kernel, KernelShape};
use hpc_core::metric::{
    build_dense, build_dmin, directed_hausdorff, hausdorff, shortest_distance_set, similarity_matrix,
    DistanceMatrixKind, DistributiveFn,
};
use hpc_core::Point3;
use proptest::prelude::*;

fn point(r: f64) -> impl Strategy<Value = Point3> {
    (-r..r, -r..r, -r..r).prop_map(|(x, y, z)| Point3::new(x, y, z))
}

fn cloud(max: usize) -> impl Strategy<Value = Vec<Point3>> {
    prop::collection::vec(point(2.0), 1..max)
}

fn distributive() -> impl Strategy<Value = DistributiveFn> {
    prop::sample::select(DistributiveFn::ALL.to_vec())
}

fn brute(a: &[Point3], b: &[Point3], f: DistributiveFn) -> f64 {
    let mut all = Vec::new();
    for p in a {
        all.push(b.iter().map(|q| p.distance(q)).fold(f64::INFINITY, f64::min));
    }
    for q in b {
        all.push(a.iter().map(|p| p.distance(q)).fold(f64::INFINITY, f64::min));
    }
    match f {
        DistributiveFn::Max => all.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        DistributiveFn::Min => all.iter().copied().fold(f64::INFINITY, f64::min),
        DistributiveFn::Sum => all.iter().sum(),
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

fn rotate(p: Point3, axis: [f64; 3], angle: f64) -> Point3 {
    let n = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
    let (x, y, z) = (axis[0] / n, axis[1] / n, axis[2] / n);
    let (s, c) = angle.sin_cos();
    let t = 1.0 - c;
    Point3::new(
        (t * x * x + c) * p.x + (t * x * y - s * z) * p.y + (t * x * z + s * y) * p.z,
        (t * x * y + s * z) * p.x + (t * y * y + c) * p.y + (t * y * z - s * x) * p.z,
        (t * x * z - s * y) * p.x + (t * y * z + s * x) * p.y + (t * z * z + c) * p.z,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn matches_brute_force(a in cloud(40), b in cloud(40), f in distributive()) {
        let h = hausdorff(&a, &b, f).unwrap();
        prop_assert!(rel(h, brute(&a, &b, f)) <= 1e-12);
    }

    #[test]
    fn symmetric_in_its_arguments(a in cloud(30), b in cloud(30), f in distributive()) {
        let ab = hausdorff(&a, &b, f).unwrap();
        let ba = hausdorff(&b, &a, f).unwrap();
        prop_assert!(rel(ab, ba) <= 1e-12);
    }

    #[test]
    fn max_is_the_larger_directed_distance(a in cloud(30), b in cloud(30)) {
        let h = hausdorff(&a, &b, DistributiveFn::Max).unwrap();
        let d = directed_hausdorff(&a, &b).unwrap().max(directed_hausdorff(&b, &a).unwrap());
        prop_assert_eq!(h, d);
    }

    #[test]
    fn permutation_invariant(
        a in cloud(30),
        b in cloud(30),
        f in distributive(),
        seed in any::<u64>(),
    ) {
        let mut pa = a.clone();
        let mut pb = b.clone();
        let n = pa.len();
        for i in 0..n {
            pa.swap(i, (seed as usize).wrapping_add(i * 7919) % n);
        }
        pb.reverse();
        let h = hausdorff(&a, &b, f).unwrap();
        let hp = hausdorff(&pa, &pb, f).unwrap();
        match f {
            DistributiveFn::Sum => prop_assert!(rel(h, hp) <= 1e-12),
            _ => prop_assert_eq!(h, hp),
        }
    }

    #[test]
    fn scale_covariant(a in cloud(30), b in cloud(30), f in distributive(), s in 1e-3f64..1e3) {
        let sa: Vec<Point3> = a.iter().map(|&p| p * s).collect();
        let sb: Vec<Point3> = b.iter().map(|&p| p * s).collect();
        let h = hausdorff(&a, &b, f).unwrap();
        prop_assert!(rel(hausdorff(&sa, &sb, f).unwrap() / s, h) <= 1e-12 || h == 0.0);
    }

    #[test]
    fn rotation_invariant(
        a in cloud(30),
        b in cloud(30),
        f in distributive(),
        axis in (-1.0f64..1.0, -1.0f64..1.0, 0.1f64..1.0),
        angle in 0.0f64..6.3,
    ) {
        let ax = [axis.0, axis.1, axis.2];
        let ra: Vec<Point3> = a.iter().map(|&p| rotate(p, ax, angle)).collect();
        let rb: Vec<Point3> = b.iter().map(|&p| rotate(p, ax, angle)).collect();
        let h = hausdorff(&a, &b, f).unwrap();
        let hr = hausdorff(&ra, &rb, f).unwrap();
        prop_assert!((h - hr).abs() <= 1e-9 * h.max(1.0));
    }

    #[test]
    fn dmin_sparsity_bound(q in cloud(60), g in cloud(30)) {
        let s = shortest_distance_set(&q, &g).unwrap();
        let d = build_dmin(&s, g.len(), q.len(), 4.0).unwrap();
        prop_assert!(d.nnz() <= g.len() + q.len());
        prop_assert!(d.nnz() >= g.len().max(q.len()));
        for e in d.entries() {
            let direct = q[e.col as usize].distance(&g[e.row as usize]);
            prop_assert_eq!(e.value, direct);
        }
        let dense = build_dense(&q, &g, 4.0);
        prop_assert_eq!(dense.nnz(), g.len() * q.len());
    }

    #[test]
    fn dmin_rows_and_columns_hold_the_minima(q in cloud(40), g in cloud(20)) {
        let s = shortest_distance_set(&q, &g).unwrap();
        let d = build_dmin(&s, g.len(), q.len(), 4.0).unwrap();
        for (j, gj) in g.iter().enumerate() {
            let best = q.iter().map(|p| p.distance(gj)).fold(f64::INFINITY, f64::min);
            let row_min = d.entries().iter().filter(|e| e.row as usize == j).map(|e| e.value).fold(f64::INFINITY, f64::min);
            prop_assert_eq!(row_min, best);
        }
        for (i, qi) in q.iter().enumerate() {
            let best = g.iter().map(|p| p.distance(qi)).fold(f64::INFINITY, f64::min);
            let col_min = d.entries().iter().filter(|e| e.col as usize == i).map(|e| e.value).fold(f64::INFINITY, f64::min);
            prop_assert_eq!(col_min, best);
        }
    }

    #[test]
    fn similarity_lies_in_unit_interval(
        q in prop::collection::vec(point(0.5), 1..40),
        shape in prop::sample::select(KernelShape::ALL.to_vec()),
        dense in any::<bool>(),
    ) {
        let r = 0.9;
        let q: Vec<Point3> = q.into_iter().filter(|p| p.norm() <= r).collect();
        prop_assume!(!q.is_empty());
        let n = if shape == KernelShape::CenterPoint { 1 } else { 8 };
        let kernel = generate_kernel(shape, n, 64 * n).unwrap();
        let g = kernel.scaled(r).unwrap();
        let kind = if dense { DistanceMatrixKind::Dense } else { DistanceMatrixKind::Shortest };
        let s = similarity_matrix(&q, &g, r, kind).unwrap();
        for e in s.entries() {
            prop_assert!((-1.0..=1.0).contains(&e.value));
            let expect = 1.0 - q[e.col as usize].distance(&g[e.row as usize]) / r;
            prop_assert!((e.value - expect).abs() <= 1e-12);
        }
    }
}

#[test]
fn shortest_pair_ties_go_to_the_lowest_index() {
    let q = vec![Point3::new(0.0, 0.0, 0.0)];
    let g = vec![Point3::new(1.0, 0.0, 0.0), Point3::new(-1.0, 0.0, 0.0)];
    let s = shortest_distance_set(&q, &g).unwrap();
    assert_eq!(s.q_arg, vec![0]);
    assert_eq!(s.g_arg, vec![0, 0]);
}
