use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::NetworkConfig;
use crate::kernel::{generate_kernel, KernelShape, OVERSAMPLE_FACTOR};
use crate::layer::HpcLayer;
use crate::{Error, Result};

/// Pointwise affine map `y = x W + b`, `W` row-major `c_in x c_out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub c_in: usize,
    pub c_out: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Linear {
    pub fn new(c_in: usize, c_out: usize, seed: u64) -> Self {
        let b = libm::sqrt(6.0 / (c_in + c_out).max(1) as f64);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            c_in,
            c_out,
            weight: (0..c_in * c_out).map(|_| rng.random_range(-b..=b)).collect(),
            bias: vec![0.0; c_out],
        }
    }
}

/// One convolution: a single HPC layer, or K of them combined as a
/// multi-kernel layer.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct ConvUnit {
    pub layers: Vec<HpcLayer>,
}

impl ConvUnit {
    pub fn is_multi(&self) -> bool {
        self.layers.len() > 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Block {
    pub conv1: ConvUnit,
    pub conv2: ConvUnit,
    pub shortcut: Option<Linear>,
}

/// What a parameter tensor belongs to; used by checkpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TensorKind {
    /// HPC weights of shape `n x c_in x c_out`.
    Hpc {
        n: usize,
        c_in: usize,
        c_out: usize,
        shape: KernelShape,
    },
    LinearWeight {
        c_in: usize,
        c_out: usize,
    },
    LinearBias {
        c_out: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TensorInfo {
    pub kind: TensorKind,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HpcNetwork {
    pub(crate) config: NetworkConfig,
    pub(crate) stem: Linear,
    pub(crate) blocks: Vec<Block>,
    /// `decoder[l]` produces level-l features, for l in 0..depth-1.
    pub(crate) decoder: Vec<Linear>,
    pub(crate) head: Linear,
}

/// SplitMix64 step, used to derive independent per-tensor seeds.
pub(crate) fn mix_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed
        ^ stream
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl HpcNetwork {
    pub fn new(config: NetworkConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let kernels = config
            .kernels
            .iter()
            .map(|&s| generate_kernel(s, config.kernel_points, config.kernel_points * OVERSAMPLE_FACTOR))
            .collect::<Result<Vec<_>>>()?;
        let mut stream = 0u64;
        let mut next_seed = || {
            stream += 1;
            mix_seed(seed, stream)
        };
        let c0 = config.base_channels;
        let stem = Linear::new(config.input_channels, c0, next_seed());
        let mut blocks = Vec::with_capacity(config.depth);
        for l in 0..config.depth {
            let (cin, cout, r) = (config.block_in(l), config.block_out(l), config.radius(l));
            let mut unit = |c_in: usize| -> Result<ConvUnit> {
                let layers = kernels
                    .iter()
                    .map(|k| {
                        Ok(
                            HpcLayer::new(k.clone(), r, config.distributive, c_in, cout, next_seed())?
                                .with_matrix_kind(config.distance_matrix),
                        )
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(ConvUnit { layers })
            };
            let conv1 = unit(cin)?;
            let conv2 = unit(cout)?;
            let shortcut = config.uses_shortcut().then(|| Linear::new(cin, cout, next_seed()));
            blocks.push(Block { conv1, conv2, shortcut });
        }
        let mut decoder = Vec::with_capacity(config.depth.saturating_sub(1));
        for l in 0..config.depth.saturating_sub(1) {
            decoder.push(Linear::new(
                config.block_out(l + 1) + config.block_out(l),
                config.block_out(l),
                next_seed(),
            ));
        }
        let head = Linear::new(config.head_in(), config.num_classes, next_seed());
        Ok(Self {
            config,
            stem,
            blocks,
            decoder,
            head,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    /// Every parameter tensor in canonical order: stem, blocks (conv1 kernels,
    /// conv2 kernels, shortcut), decoder units from fine to coarse, head.
    /// Linear layers contribute weight then bias.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = vec![&self.stem.weight, &self.stem.bias];
        for b in &self.blocks {
            for layer in b.conv1.layers.iter().chain(&b.conv2.layers) {
                out.push(layer.weights());
            }
            if let Some(s) = &b.shortcut {
                out.push(&s.weight);
                out.push(&s.bias);
            }
        }
        for d in &self.decoder {
            out.push(&d.weight);
            out.push(&d.bias);
        }
        out.push(&self.head.weight);
        out.push(&self.head.bias);
        out
    }

    /// Mutable view of [`tensors`](Self::tensors), same order.
    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        out.push(&mut self.stem.weight);
        out.push(&mut self.stem.bias);
        for b in &mut self.blocks {
            for layer in b.conv1.layers.iter_mut().chain(b.conv2.layers.iter_mut()) {
                out.push(layer.weights_mut());
            }
            if let Some(s) = &mut b.shortcut {
                out.push(&mut s.weight);
                out.push(&mut s.bias);
            }
        }
        for d in &mut self.decoder {
            out.push(&mut d.weight);
            out.push(&mut d.bias);
        }
        out.push(&mut self.head.weight);
        out.push(&mut self.head.bias);
        out
    }

    /// Shape descriptors matching [`tensors`](Self::tensors).
    pub fn tensor_layout(&self) -> Vec<TensorInfo> {
        let mut out = Vec::new();
        let lin = |l: &Linear, out: &mut Vec<TensorInfo>| {
            out.push(TensorInfo {
                kind: TensorKind::LinearWeight {
                    c_in: l.c_in,
                    c_out: l.c_out,
                },
                len: l.weight.len(),
            });
            out.push(TensorInfo {
                kind: TensorKind::LinearBias { c_out: l.c_out },
                len: l.bias.len(),
            });
        };
        lin(&self.stem, &mut out);
        for b in &self.blocks {
            for layer in b.conv1.layers.iter().chain(&b.conv2.layers) {
                out.push(TensorInfo {
                    kind: TensorKind::Hpc {
                        n: layer.n(),
                        c_in: layer.c_in(),
                        c_out: layer.c_out(),
                        shape: layer.kernel().shape(),
                    },
                    len: layer.weights().len(),
                });
            }
            if let Some(s) = &b.shortcut {
                lin(s, &mut out);
            }
        }
        for d in &self.decoder {
            lin(d, &mut out);
        }
        lin(&self.head, &mut out);
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Replaces every tensor, checking lengths against the layout.
    pub fn load_tensors(&mut self, values: &[Vec<f64>]) -> Result<()> {
        let layout = self.tensor_layout();
        if values.len() != layout.len() {
            return Err(Error::DimensionMismatch {
                what: "tensor count",
                expected: layout.len(),
                found: values.len(),
            });
        }
        for (info, v) in layout.iter().zip(values) {
            if v.len() != info.len {
                return Err(Error::DimensionMismatch {
                    what: "tensor length",
                    expected: info.len,
                    found: v.len(),
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::invalid("parameters must be finite"));
            }
        }
        for (dst, src) in self.tensors_mut().into_iter().zip(values) {
            dst.copy_from_slice(src);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_matches_tensors() {
        for kernels in [vec![KernelShape::Sphere], KernelShape::ALL.to_vec()] {
            let cfg = NetworkConfig {
                kernels,
                ..NetworkConfig::default()
            };
            let mut net = HpcNetwork::new(cfg, 3).unwrap();
            let lens: Vec<usize> = net.tensors().iter().map(|t| t.len()).collect();
            let layout: Vec<usize> = net.tensor_layout().iter().map(|t| t.len).collect();
            assert_eq!(lens, layout);
            assert_eq!(net.tensors_mut().len(), lens.len());
        }
    }

    #[test]
    fn same_seed_same_network() {
        let a = HpcNetwork::new(NetworkConfig::default(), 1).unwrap();
        let b = HpcNetwork::new(NetworkConfig::default(), 1).unwrap();
        let c = HpcNetwork::new(NetworkConfig::default(), 2).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn shortcut_only_for_single_kernel() {
        let net = HpcNetwork::new(NetworkConfig::default(), 0).unwrap();
        assert!(net.blocks.iter().all(|b| b.shortcut.is_some()));
        let multi = HpcNetwork::new(
            NetworkConfig {
                kernels: vec![KernelShape::Sphere, KernelShape::Plane],
                ..NetworkConfig::default()
            },
            0,
        )
        .unwrap();
        assert!(multi.blocks.iter().all(|b| b.shortcut.is_none()));
    }
}
