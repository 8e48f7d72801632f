use alloc::vec;
use alloc::vec::Vec;

use crate::kernel::{KernelShape, DEFAULT_KERNEL_POINTS};
use crate::metric::{DistanceMatrixKind, DistributiveFn};
use crate::{Error, Result};

/// Architecture and optimization hyperparameters.
///
/// Defaults describe the desk-scale network: three levels, 8 base channels,
/// a single sphere kernel with the sum aggregator, shortest-distance matrices
/// and residual shortcuts.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct NetworkConfig {
    /// Encoder levels.
    pub depth: usize,
    /// Input width of the first block; block `l` maps `c0 * 2^l` to `c0 * 2^(l+1)`.
    pub base_channels: usize,
    /// Query radius of level 0, meters. Doubles per level.
    pub base_radius: f64,
    /// Voxel cell, meters; level `l >= 1` subsamples with `base_cell * 2^l`.
    pub base_cell: f64,
    /// Kernel priors per convolution. More than one turns every convolution
    /// into a multi-kernel layer and drops the shortcuts.
    pub kernels: Vec<KernelShape>,
    pub kernel_points: usize,
    pub distributive: DistributiveFn,
    pub distance_matrix: DistanceMatrixKind,
    pub num_classes: usize,
    /// Residual shortcut in each block (single-kernel networks only).
    pub shortcut: bool,
    /// Width of the per-point input features. With no features on the cloud a
    /// constant 1 is used, which requires a width of 1.
    pub input_channels: usize,
    pub train: TrainConfig,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            depth: 3,
            base_channels: 8,
            base_radius: 0.1,
            base_cell: 0.04,
            kernels: vec![KernelShape::Sphere],
            kernel_points: DEFAULT_KERNEL_POINTS,
            distributive: DistributiveFn::Sum,
            distance_matrix: DistanceMatrixKind::Shortest,
            num_classes: 4,
            shortcut: true,
            input_channels: 1,
            train: TrainConfig::default(),
        }
    }
}

/// SGD with momentum and step decay.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    /// Multiplier applied at every decay step.
    pub lr_decay: f64,
    /// Decay period as a fraction of the total epoch count.
    pub decay_every: f64,
    /// Rescale the full gradient to at most this L2 norm before each step.
    /// Zero disables clipping.
    pub clip_norm: f64,
    /// Run [`HpcNetwork::calibrate`](super::HpcNetwork::calibrate) on the
    /// largest sample before the first epoch.
    pub calibrate: bool,
    /// Target side of the xy tiles a cloud is cut into, meters. Each tile is
    /// one optimization step. Zero or negative keeps clouds whole.
    pub tile_size: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-2,
            momentum: 0.9,
            lr_decay: 0.5,
            decay_every: 0.2,
            clip_norm: 1.0,
            calibrate: true,
            tile_size: 1.0,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if self.depth == 0 {
            return Err(Error::invalid("depth must be >= 1"));
        }
        if self.depth > 16 {
            return Err(Error::invalid("depth must be <= 16"));
        }
        if self.base_channels == 0 {
            return Err(Error::invalid("base_channels must be >= 1"));
        }
        if !positive(self.base_radius) {
            return Err(Error::invalid("base_radius must be finite and > 0"));
        }
        if !positive(self.base_cell) {
            return Err(Error::invalid("base_cell must be finite and > 0"));
        }
        if self.kernels.is_empty() {
            return Err(Error::invalid("at least one kernel prior is required"));
        }
        for (i, k) in self.kernels.iter().enumerate() {
            if self.kernels[..i].contains(k) {
                return Err(Error::invalid(alloc::format!("kernel '{k}' listed twice")));
            }
        }
        if self.kernel_points == 0 {
            return Err(Error::invalid("kernel_points must be >= 1"));
        }
        if self.num_classes == 0 {
            return Err(Error::invalid("num_classes must be >= 1"));
        }
        if self.input_channels == 0 {
            return Err(Error::invalid("input_channels must be >= 1"));
        }
        let t = &self.train;
        if !positive(t.learning_rate) {
            return Err(Error::invalid("train.learning_rate must be finite and > 0"));
        }
        if !(t.momentum.is_finite() && (0.0..1.0).contains(&t.momentum)) {
            return Err(Error::invalid("train.momentum must lie in [0, 1)"));
        }
        if !positive(t.lr_decay) {
            return Err(Error::invalid("train.lr_decay must be finite and > 0"));
        }
        if !positive(t.decay_every) {
            return Err(Error::invalid("train.decay_every must be finite and > 0"));
        }
        if !(t.clip_norm.is_finite() && t.clip_norm >= 0.0) {
            return Err(Error::invalid("train.clip_norm must be finite and >= 0"));
        }
        if !t.tile_size.is_finite() {
            return Err(Error::invalid("train.tile_size must be finite"));
        }
        Ok(())
    }

    pub fn is_multi_kernel(&self) -> bool {
        self.kernels.len() > 1
    }

    pub fn uses_shortcut(&self) -> bool {
        self.shortcut && !self.is_multi_kernel()
    }

    /// Query radius of level `l`.
    pub fn radius(&self, level: usize) -> f64 {
        self.base_radius * (1u64 << level) as f64
    }

    /// Subsampling cell that produces level `l` (unused for level 0).
    pub fn cell(&self, level: usize) -> f64 {
        self.base_cell * (1u64 << level) as f64
    }

    /// Input width of encoder block `l`.
    pub fn block_in(&self, level: usize) -> usize {
        self.base_channels << level
    }

    /// Output width of encoder block `l`.
    pub fn block_out(&self, level: usize) -> usize {
        self.base_channels << (level + 1)
    }

    /// Width of the features entering the segmentation head.
    pub fn head_in(&self) -> usize {
        self.block_out(0)
    }
}
