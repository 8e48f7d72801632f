use hpc::checkpoint::{
    checkpoint_bytes, layer_bytes, load_checkpoint, load_layer, read_checkpoint_from, read_layer_from, save_checkpoint,
    save_layer,
};
use hpc_core::kernel::KernelShape;
use hpc_core::metric::DistributiveFn;
use hpc_core::network::{evaluate, train, HpcNetwork, NetworkConfig, Sample, TrainState};
use hpc_core::scene::{generate_scene, SceneSpec};
use hpc_core::{HpcLayer, KernelPrior, Matrix, Point3};

fn small_config() -> NetworkConfig {
    NetworkConfig {
        depth: 2,
        base_channels: 4,
        kernel_points: 7,
        ..NetworkConfig::default()
    }
}

fn small_scene() -> hpc_core::PointCloud {
    generate_scene(&SceneSpec {
        extent: 1.5,
        poles: 2,
        spheres: 1,
        clutter_points: 100,
        ..SceneSpec::default()
    })
    .unwrap()
}

#[test]
fn layer_record_layout() {
    let layer = HpcLayer::new(
        KernelPrior::standard(KernelShape::Plane),
        0.5,
        DistributiveFn::Min,
        3,
        2,
        4,
    )
    .unwrap();
    let bytes = layer_bytes(&layer);
    assert_eq!(&bytes[..4], b"HPCW");
    let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    assert_eq!(u32_at(4), 1);
    assert_eq!((u32_at(8), u32_at(12), u32_at(16)), (15, 3, 2));
    assert_eq!(u32_at(20), DistributiveFn::Min.code());
    assert_eq!(u32_at(24), KernelShape::Plane.code());
    assert_eq!(bytes.len(), 28 + 15 * 3 * 2 * 8);
    assert_eq!(
        f64::from_le_bytes(bytes[28..36].try_into().unwrap()),
        layer.weights()[0]
    );
}

#[test]
fn layer_round_trip_reproduces_outputs() {
    let layer = HpcLayer::new(
        KernelPrior::standard(KernelShape::Sphere),
        0.5,
        DistributiveFn::Max,
        2,
        3,
        11,
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("layer.hpcw");
    save_layer(&path, &layer).unwrap();
    let back = load_layer(&path, 0.5).unwrap();
    assert_eq!(back, layer);
    let offsets = vec![Point3::new(0.1, 0.0, 0.2), Point3::new(-0.3, 0.1, 0.0)];
    let features = Matrix::from_rows(&[vec![1.0, -2.0], vec![0.5, 0.25]]).unwrap();
    assert_eq!(
        back.forward(&offsets, &features).unwrap().0,
        layer.forward(&offsets, &features).unwrap().0
    );
}

#[test]
fn corrupted_headers_are_rejected() {
    let layer = HpcLayer::new(
        KernelPrior::standard(KernelShape::Line),
        1.0,
        DistributiveFn::Sum,
        1,
        1,
        0,
    )
    .unwrap();
    let mut bytes = layer_bytes(&layer);
    bytes[0] = b'X';
    let err = read_layer_from(&bytes[..], 1.0).unwrap_err().to_string();
    assert!(err.contains("HPCW"), "{err}");

    let mut bytes = layer_bytes(&layer);
    bytes[4] = 9;
    let err = read_layer_from(&bytes[..], 1.0).unwrap_err().to_string();
    assert!(err.contains("version 9"), "{err}");

    let bytes = layer_bytes(&layer);
    assert!(read_layer_from(&bytes[..bytes.len() - 3], 1.0).is_err());
}

#[test]
fn network_round_trip_is_exact() {
    let cfg = small_config();
    let cloud = small_scene();
    let sample = Sample::new(&cfg, &cloud).unwrap();
    let mut state = TrainState::new(HpcNetwork::new(cfg.clone(), 3).unwrap(), 3);
    train(&mut state, std::slice::from_ref(&sample), 2).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.hpcw");
    save_checkpoint(&path, &state).unwrap();
    let back = load_checkpoint(&path).unwrap();
    assert_eq!(back.network, state.network);
    assert_eq!(back.optimizer, state.optimizer);
    assert_eq!((back.epoch, back.seed), (2, 3));
    let a = state.network.forward(&sample).unwrap().logits;
    let b = back.network.forward(&sample).unwrap().logits;
    assert_eq!(a, b);
    let ma = evaluate(&state.network, std::slice::from_ref(&sample)).unwrap();
    let mb = evaluate(&back.network, std::slice::from_ref(&sample)).unwrap();
    assert_eq!(ma.miou, mb.miou);
}

#[test]
fn resumed_training_matches_uninterrupted_training() {
    // Constant learning rate, so the schedule does not depend on the run length.
    let mut cfg = small_config();
    cfg.train.lr_decay = 1.0;
    let sample = Sample::new(&cfg, &small_scene()).unwrap();
    let samples = std::slice::from_ref(&sample);
    let mut straight = TrainState::new(HpcNetwork::new(cfg.clone(), 1).unwrap(), 1);
    train(&mut straight, samples, 4).unwrap();

    let mut first = TrainState::new(HpcNetwork::new(cfg, 1).unwrap(), 1);
    train(&mut first, samples, 2).unwrap();
    let mut resumed = read_checkpoint_from(&checkpoint_bytes(&first)[..]).unwrap();
    train(&mut resumed, samples, 4).unwrap();
    assert_eq!(resumed.network, straight.network);
}

#[test]
fn network_checkpoint_errors() {
    let state = TrainState::new(HpcNetwork::new(small_config(), 0).unwrap(), 0);
    let bytes = checkpoint_bytes(&state);
    let mut bad = bytes.clone();
    bad[..4].copy_from_slice(b"HPCX");
    assert!(read_checkpoint_from(&bad[..]).unwrap_err().to_string().contains("HPCW"));
    assert!(read_checkpoint_from(&bytes[..bytes.len() - 1]).is_err());
    let mut longer = bytes.clone();
    longer.push(0);
    assert!(read_checkpoint_from(&longer[..]).is_err());
    let layer = HpcLayer::new(
        KernelPrior::standard(KernelShape::Line),
        1.0,
        DistributiveFn::Sum,
        1,
        1,
        0,
    )
    .unwrap();
    assert!(read_checkpoint_from(&layer_bytes(&layer)[..]).is_err());
    assert!(read_layer_from(&bytes[..], 1.0).is_err());
}
