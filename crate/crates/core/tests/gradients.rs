//! Central finite-difference checks of the analytic gradients.

use hpc_core::kernel::{generate_kernel, KernelShape};
use hpc_core::metric::{DistanceMatrixKind, DistributiveFn};
use hpc_core::network::{cross_entropy, HpcNetwork, NetworkConfig, Sample};
use hpc_core::{HpcLayer, Matrix, MultiKernelLayer, Point3, PointCloud};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-6;
/// Max/Min routing near-ties are dense enough across a whole network that
/// the wider step straddles a switch now and then.
const H_NET: f64 = 1e-7;

fn rel_err(fd: f64, an: f64) -> f64 {
    (fd - an).abs() / fd.abs().max(an.abs()).max(1e-3)
}

fn ball_offsets(rng: &mut ChaCha8Rng, m: usize, r: f64) -> Vec<Point3> {
    (0..m)
        .map(|_| loop {
            let p = Point3::new(
                rng.random_range(-r..r),
                rng.random_range(-r..r),
                rng.random_range(-r..r),
            );
            if p.norm() <= r {
                break p;
            }
        })
        .collect()
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_layer(seed: u64, f: DistributiveFn, kind: DistanceMatrixKind) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = KernelShape::ALL[rng.random_range(0..4)];
    let n = if shape == KernelShape::CenterPoint {
        1
    } else {
        rng.random_range(3..9)
    };
    let kernel = generate_kernel(shape, n, 64 * n).unwrap();
    let (c_in, c_out) = (rng.random_range(1..4), rng.random_range(1..4));
    let r = rng.random_range(0.2..2.0);
    let m = rng.random_range(1..25);
    let offsets = ball_offsets(&mut rng, m, r);
    let features = random_matrix(&mut rng, m, c_in);
    let weights: Vec<f64> = (0..kernel.len() * c_in * c_out)
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    let coef: Vec<f64> = (0..c_out).map(|_| rng.random_range(-1.0..1.0)).collect();

    let build = |w: Vec<f64>| {
        HpcLayer::with_weights(kernel.clone(), r, f, c_in, c_out, w)
            .unwrap()
            .with_matrix_kind(kind)
    };
    let layer = build(weights.clone());
    let loss = |layer: &HpcLayer, x: &Matrix| dot(&layer.forward(&offsets, x).unwrap().0, &coef);
    let (_, cache) = layer.forward(&offsets, &features).unwrap();
    let (dw, dx) = layer.backward(&cache, &features, &coef).unwrap();

    let mut worst: f64 = 0.0;
    for k in 0..weights.len() {
        let mut plus = weights.clone();
        plus[k] += H;
        let mut minus = weights.clone();
        minus[k] -= H;
        let fd = (loss(&build(plus), &features) - loss(&build(minus), &features)) / (2.0 * H);
        worst = worst.max(rel_err(fd, dw[k]));
    }
    for k in 0..features.as_slice().len() {
        let mut plus = features.clone();
        plus.as_mut_slice()[k] += H;
        let mut minus = features.clone();
        minus.as_mut_slice()[k] -= H;
        let fd = (loss(&layer, &plus) - loss(&layer, &minus)) / (2.0 * H);
        worst = worst.max(rel_err(fd, dx.as_slice()[k]));
    }
    worst
}

#[test]
fn layer_gradients_match_finite_differences() {
    for f in DistributiveFn::ALL {
        for seed in 0..50 {
            let e = check_layer(seed, f, DistanceMatrixKind::Shortest);
            assert!(e <= 1e-5, "{f} seed {seed}: relative error {e}");
        }
    }
}

#[test]
fn dense_layer_gradients_match_finite_differences() {
    for f in DistributiveFn::ALL {
        for seed in 100..115 {
            let e = check_layer(seed, f, DistanceMatrixKind::Dense);
            assert!(e <= 1e-5, "{f} seed {seed}: relative error {e}");
        }
    }
}

#[test]
fn multi_kernel_gradients_match_finite_differences() {
    for f in DistributiveFn::ALL {
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 1000);
            let (c_in, c_out, r) = (2, 3, 1.0);
            let m = rng.random_range(2..20);
            let offsets = ball_offsets(&mut rng, m, r);
            let features = random_matrix(&mut rng, m, c_in);
            let shapes = [KernelShape::Sphere, KernelShape::Plane, KernelShape::Line];
            let kernels: Vec<_> = shapes.iter().map(|&s| generate_kernel(s, 5, 320).unwrap()).collect();
            let weights: Vec<Vec<f64>> = kernels
                .iter()
                .map(|k| {
                    (0..k.len() * c_in * c_out)
                        .map(|_| rng.random_range(-1.0..1.0))
                        .collect()
                })
                .collect();
            let coef: Vec<f64> = (0..c_out).map(|_| rng.random_range(-1.0..1.0)).collect();
            let build = |ws: &[Vec<f64>]| {
                let layers = kernels
                    .iter()
                    .zip(ws)
                    .map(|(k, w)| HpcLayer::with_weights(k.clone(), r, f, c_in, c_out, w.clone()).unwrap())
                    .collect();
                MultiKernelLayer::new(layers).unwrap()
            };
            let loss = |ws: &[Vec<f64>]| dot(&build(ws).forward(&offsets, &features).unwrap().0, &coef);
            let layer = build(&weights);
            let (_, cache) = layer.forward(&offsets, &features).unwrap();
            let (dws, _) = layer.backward(&cache, &features, &coef).unwrap();
            for (t, dw) in dws.iter().enumerate() {
                for k in 0..dw.len() {
                    let mut plus = weights.clone();
                    plus[t][k] += H;
                    let mut minus = weights.clone();
                    minus[t][k] -= H;
                    let fd = (loss(&plus) - loss(&minus)) / (2.0 * H);
                    let e = rel_err(fd, dw[k]);
                    assert!(e <= 1e-5, "{f} seed {seed} kernel {t} weight {k}: {fd} vs {}", dw[k]);
                }
            }
        }
    }
}

fn tiny_cloud(seed: u64, n: usize, classes: i32) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = (0..n)
        .map(|_| {
            Point3::new(
                rng.random_range(0.0..1.0),
                rng.random_range(0.0..1.0),
                rng.random_range(0.0..0.5),
            )
        })
        .collect();
    let labels = (0..n).map(|_| rng.random_range(-1..classes)).collect();
    PointCloud::new(points).unwrap().with_labels(labels).unwrap()
}

fn network_loss(net: &HpcNetwork, sample: &Sample) -> f64 {
    let fwd = net.forward(sample).unwrap();
    cross_entropy(&fwd.logits, sample.labels(), net.config().num_classes)
        .unwrap()
        .0
}

fn check_network(cfg: NetworkConfig, seed: u64) -> f64 {
    let cloud = tiny_cloud(seed, 40, cfg.num_classes as i32);
    let sample = Sample::new(&cfg, &cloud).unwrap();
    let mut net = HpcNetwork::new(cfg, seed).unwrap();
    // Zero biases put pre-activations exactly on the ReLU kink, so every
    // parameter is redrawn.
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    for t in net.tensors_mut() {
        t.iter_mut().for_each(|w| *w = rng.random_range(-0.5..0.5));
    }
    let (_, grads, _) = net.loss_and_gradients(&sample).unwrap();
    let mut worst: f64 = 0.0;
    for (t, g) in grads.iter().enumerate() {
        for k in 0..g.len() {
            let orig = net.tensors()[t][k];
            net.tensors_mut()[t][k] = orig + H_NET;
            let lp = network_loss(&net, &sample);
            net.tensors_mut()[t][k] = orig - H_NET;
            let lm = network_loss(&net, &sample);
            net.tensors_mut()[t][k] = orig;
            worst = worst.max(rel_err((lp - lm) / (2.0 * H_NET), g[k]));
        }
    }
    worst
}

fn tiny_config(depth: usize, f: DistributiveFn) -> NetworkConfig {
    NetworkConfig {
        depth,
        base_channels: 2,
        base_radius: 0.35,
        base_cell: 0.15,
        kernel_points: 5,
        distributive: f,
        num_classes: 3,
        ..NetworkConfig::default()
    }
}

#[test]
fn single_level_network_gradients() {
    for f in DistributiveFn::ALL {
        for seed in 0..50 {
            let e = check_network(tiny_config(1, f), seed);
            assert!(e <= 1e-4, "{f} seed {seed}: relative error {e}");
        }
    }
}

#[test]
fn deeper_network_gradients() {
    for f in DistributiveFn::ALL {
        for seed in 0..3 {
            let e = check_network(tiny_config(2, f), seed);
            assert!(e <= 1e-4, "{f} seed {seed}: relative error {e}");
        }
    }
}

#[test]
fn multi_kernel_and_dense_network_gradients() {
    let multi = NetworkConfig {
        kernels: vec![KernelShape::Sphere, KernelShape::Line],
        ..tiny_config(2, DistributiveFn::Sum)
    };
    assert!(check_network(multi, 7) <= 1e-4);
    let dense = NetworkConfig {
        distance_matrix: DistanceMatrixKind::Dense,
        ..tiny_config(2, DistributiveFn::Max)
    };
    assert!(check_network(dense, 8) <= 1e-4);
}
