//! Desk-scale ablation sweeps: train every variant on synthetic scenes and
//! compare held-out segmentation quality.

use hpc_core::kernel::KernelShape;
use hpc_core::metric::{DistanceMatrixKind, DistributiveFn};
use hpc_core::network::{evaluate, split_tiles, train, HpcNetwork, NetworkConfig, Sample, TrainState};
use hpc_core::scene::{generate_scene, split_seeds, SceneSpec};
use hpc_core::PointCloud;

use crate::error::Result;
use crate::tables::Table;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Axis {
    #[value(name = "distfn")]
    DistFn,
    DistanceMatrix,
    KernelShape,
    KernelCount,
}

/// The variants of one axis, each derived from `base`.
pub fn variants(base: &NetworkConfig, axis: Axis) -> Vec<(String, NetworkConfig)> {
    let with = |f: &dyn Fn(&mut NetworkConfig)| {
        let mut c = base.clone();
        f(&mut c);
        c
    };
    match axis {
        Axis::DistFn => [DistributiveFn::Sum, DistributiveFn::Max, DistributiveFn::Min]
            .into_iter()
            .map(|f| (f.name().to_string(), with(&|c| c.distributive = f)))
            .collect(),
        Axis::DistanceMatrix => [DistanceMatrixKind::Shortest, DistanceMatrixKind::Dense]
            .into_iter()
            .map(|k| (k.name().to_string(), with(&|c| c.distance_matrix = k)))
            .collect(),
        Axis::KernelShape => KernelShape::ALL
            .into_iter()
            .map(|s| (s.name().to_string(), with(&|c| c.kernels = vec![s])))
            .collect(),
        Axis::KernelCount => [1usize, 2, 4]
            .into_iter()
            .map(|k| {
                let kernels = KernelShape::ALL[..k].to_vec();
                (format!("k={k}"), with(&|c| c.kernels = kernels.clone()))
            })
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationOptions {
    pub seeds: usize,
    pub epochs: usize,
    pub train_scenes: usize,
    pub test_scenes: usize,
    pub scene: SceneSpec,
}

impl Default for AblationOptions {
    fn default() -> Self {
        Self {
            seeds: 3,
            epochs: 20,
            train_scenes: 2,
            test_scenes: 1,
            scene: SceneSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub variant: String,
    /// Held-out mIoU per seed.
    pub miou: Vec<f64>,
    pub accuracy: Vec<f64>,
}

impl AblationRow {
    pub fn mean_miou(&self) -> f64 {
        mean(&self.miou)
    }

    pub fn mean_accuracy(&self) -> f64 {
        mean(&self.accuracy)
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Seed `s` trains on scenes `[100 s, 100 s + train)` and tests on the
/// scenes that follow, with network seed `s`.
pub fn scene_split(opts: &AblationOptions, seed: usize) -> Result<(Vec<PointCloud>, Vec<PointCloud>)> {
    let (train_seeds, test_seeds) = split_seeds(100 * seed as u64, opts.train_scenes, opts.test_scenes);
    let make = |seeds: &[u64]| -> Result<Vec<PointCloud>> {
        seeds
            .iter()
            .map(|&s| Ok(generate_scene(&opts.scene.with_seed(s))?))
            .collect()
    };
    Ok((make(&train_seeds)?, make(&test_seeds)?))
}

pub fn tile_samples(cfg: &NetworkConfig, clouds: &[PointCloud]) -> Result<Vec<Sample>> {
    let mut out = Vec::new();
    for cloud in clouds {
        for tile in split_tiles(cloud, cfg.train.tile_size) {
            out.push(Sample::new(cfg, &cloud.select(&tile))?);
        }
    }
    Ok(out)
}

pub fn whole_samples(cfg: &NetworkConfig, clouds: &[PointCloud]) -> Result<Vec<Sample>> {
    Ok(clouds
        .iter()
        .map(|c| Sample::new(cfg, c))
        .collect::<hpc_core::Result<_>>()?)
}

/// Trains and evaluates every variant for every seed. `progress` receives
/// `(variant, seed, held-out mIoU)` after each run.
pub fn run_variants(
    variants: &[(String, NetworkConfig)],
    opts: &AblationOptions,
    mut progress: impl FnMut(&str, usize, f64),
) -> Result<Vec<AblationRow>> {
    let mut rows: Vec<AblationRow> = variants
        .iter()
        .map(|(name, _)| AblationRow {
            variant: name.clone(),
            miou: Vec::new(),
            accuracy: Vec::new(),
        })
        .collect();
    for seed in 0..opts.seeds {
        let (train_clouds, test_clouds) = scene_split(opts, seed)?;
        for ((name, cfg), row) in variants.iter().zip(&mut rows) {
            let samples = tile_samples(cfg, &train_clouds)?;
            let mut state = TrainState::new(HpcNetwork::new(cfg.clone(), seed as u64)?, seed as u64);
            train(&mut state, &samples, opts.epochs)?;
            let m = evaluate(&state.network, &whole_samples(cfg, &test_clouds)?)?;
            progress(name, seed, m.miou);
            row.miou.push(m.miou);
            row.accuracy.push(m.accuracy);
        }
    }
    Ok(rows)
}

pub fn run_ablation(
    base: &NetworkConfig,
    axis: Axis,
    opts: &AblationOptions,
    progress: impl FnMut(&str, usize, f64),
) -> Result<Vec<AblationRow>> {
    run_variants(&variants(base, axis), opts, progress)
}

pub fn ablation_table(rows: &[AblationRow]) -> Table {
    let seeds = rows.first().map_or(0, |r| r.miou.len());
    let mut header = vec!["variant".to_string(), "miou".to_string(), "accuracy".to_string()];
    header.extend((0..seeds).map(|s| format!("miou_seed{s}")));
    let mut table = Table {
        header,
        rows: Vec::new(),
    };
    for r in rows {
        let mut cells = vec![
            r.variant.clone(),
            format!("{:.4}", r.mean_miou()),
            format!("{:.4}", r.mean_accuracy()),
        ];
        cells.extend(r.miou.iter().map(|m| format!("{m:.4}")));
        table.push(cells);
    }
    table
}
