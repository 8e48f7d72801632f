//! "HPCW" little-endian weight containers.
//!
//! Layer file: magic, version, then `n, c_in, c_out, f, shape` as u32 and
//! the `n * c_in * c_out` weights as f64 in row-major order.
//!
//! Network file: magic, version, the tag `NET\0`, the run configuration as
//! length-prefixed JSON, seed and completed epochs (u64), the tensor count
//! and one header per tensor, every tensor's values, and finally a flag byte
//! followed by the optimizer velocities when present.

use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use hpc_core::kernel::{generate_kernel, KernelShape, OVERSAMPLE_FACTOR};
use hpc_core::metric::DistributiveFn;
use hpc_core::network::{HpcNetwork, NetworkConfig, TensorKind, TrainState};
use hpc_core::HpcLayer;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"HPCW";
pub const VERSION: u32 = 1;
const NETWORK_TAG: &[u8; 4] = b"NET\0";

const TAG_HPC: u32 = 0;
const TAG_WEIGHT: u32 = 1;
const TAG_BIAS: u32 = 2;

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.inner
            .read_exact(&mut b)
            .map_err(|_| bad(format!("truncated while reading {what}")))?;
        Ok(b)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes(what)?))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes(what)?))
    }

    fn f64s(&mut self, len: usize, what: &str) -> Result<Vec<f64>> {
        let mut raw = vec![0u8; len * 8];
        self.inner
            .read_exact(&mut raw)
            .map_err(|_| bad(format!("truncated while reading {what}")))?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn preamble(&mut self) -> Result<()> {
        let magic: [u8; 4] = self.bytes("magic")?;
        if &magic != MAGIC {
            return Err(bad(format!("bad magic {magic:02x?}, expected HPCW")));
        }
        let version = self.u32("version")?;
        if version != VERSION {
            return Err(bad(format!("unsupported HPCW version {version}, expected {VERSION}")));
        }
        Ok(())
    }

    fn expect_end(&mut self) -> Result<()> {
        let mut probe = [0u8; 1];
        match self.inner.read(&mut probe) {
            Ok(0) => Ok(()),
            Ok(_) => Err(bad("trailing bytes after the last record")),
            Err(e) => Err(bad(e.to_string())),
        }
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend(u32::try_from(v).expect("dimension fits in u32").to_le_bytes());
}

fn put_f64s(out: &mut Vec<u8>, values: &[f64]) {
    for v in values {
        out.extend(v.to_le_bytes());
    }
}

fn preamble(out: &mut Vec<u8>) {
    out.extend(MAGIC);
    out.extend(VERSION.to_le_bytes());
}

fn kernel_for(shape: KernelShape, n: usize) -> Result<hpc_core::KernelPrior> {
    Ok(generate_kernel(shape, n, n * OVERSAMPLE_FACTOR)?)
}

pub fn layer_bytes(layer: &HpcLayer) -> Vec<u8> {
    let mut out = Vec::with_capacity(28 + layer.weights().len() * 8);
    preamble(&mut out);
    for v in [layer.n(), layer.c_in(), layer.c_out()] {
        put_u32(&mut out, v);
    }
    out.extend(layer.distributive_fn().code().to_le_bytes());
    out.extend(layer.kernel().shape().code().to_le_bytes());
    put_f64s(&mut out, layer.weights());
    out
}

/// Reads a layer record. The radius is not stored; the kernel is rebuilt
/// from its shape and point count.
pub fn read_layer_from(r: impl Read, radius: f64) -> Result<HpcLayer> {
    let mut r = Reader { inner: r };
    r.preamble()?;
    let n = r.u32("n")? as usize;
    if &(n as u32).to_le_bytes() == NETWORK_TAG {
        return Err(bad("this is a network checkpoint, not a layer record"));
    }
    let c_in = r.u32("c_in")? as usize;
    let c_out = r.u32("c_out")? as usize;
    let f = DistributiveFn::from_code(r.u32("distributive function")?)?;
    let shape = KernelShape::from_code(r.u32("kernel shape")?)?;
    let weights = r.f64s(n * c_in * c_out, "layer weights")?;
    r.expect_end()?;
    Ok(HpcLayer::with_weights(
        kernel_for(shape, n)?,
        radius,
        f,
        c_in,
        c_out,
        weights,
    )?)
}

pub fn save_layer(path: impl AsRef<Path>, layer: &HpcLayer) -> Result<()> {
    let path = path.as_ref();
    let mut w = crate::ply::create_file(path)?;
    w.write_all(&layer_bytes(layer))
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn load_layer(path: impl AsRef<Path>, radius: f64) -> Result<HpcLayer> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_layer_from(BufReader::new(file), radius)
}

pub fn checkpoint_bytes(state: &TrainState) -> Vec<u8> {
    let net = &state.network;
    let mut out = Vec::new();
    preamble(&mut out);
    out.extend(NETWORK_TAG);
    let config = serde_json::to_vec(net.config()).expect("config serializes");
    put_u32(&mut out, config.len());
    out.extend(&config);
    out.extend(state.seed.to_le_bytes());
    out.extend((state.epoch as u64).to_le_bytes());
    let layout = net.tensor_layout();
    put_u32(&mut out, layout.len());
    let f = net.config().distributive.code();
    for info in &layout {
        match info.kind {
            TensorKind::Hpc { n, c_in, c_out, shape } => {
                put_u32(&mut out, TAG_HPC as usize);
                for v in [n, c_in, c_out] {
                    put_u32(&mut out, v);
                }
                out.extend(f.to_le_bytes());
                out.extend(shape.code().to_le_bytes());
            }
            TensorKind::LinearWeight { c_in, c_out } => {
                put_u32(&mut out, TAG_WEIGHT as usize);
                put_u32(&mut out, c_in);
                put_u32(&mut out, c_out);
            }
            TensorKind::LinearBias { c_out } => {
                put_u32(&mut out, TAG_BIAS as usize);
                put_u32(&mut out, c_out);
            }
        }
    }
    for t in net.tensors() {
        put_f64s(&mut out, t);
    }
    out.push(1);
    for v in &state.optimizer.velocity {
        put_f64s(&mut out, v);
    }
    out
}

pub fn read_checkpoint_from(r: impl Read) -> Result<TrainState> {
    let mut r = Reader { inner: r };
    r.preamble()?;
    let tag: [u8; 4] = r.bytes("record tag")?;
    if &tag != NETWORK_TAG {
        return Err(bad("not a network checkpoint (layer record?)"));
    }
    let len = r.u32("config length")? as usize;
    let mut json = vec![0u8; len];
    r.inner
        .read_exact(&mut json)
        .map_err(|_| bad("truncated while reading config"))?;
    let config: NetworkConfig = serde_json::from_slice(&json).map_err(|e| bad(format!("embedded config: {e}")))?;
    let seed = r.u64("seed")?;
    let epoch = r.u64("epoch")? as usize;
    let mut network = HpcNetwork::new(config, seed)?;
    let layout = network.tensor_layout();
    let count = r.u32("tensor count")? as usize;
    if count != layout.len() {
        return Err(bad(format!(
            "{count} tensors stored, configuration needs {}",
            layout.len()
        )));
    }
    let f = network.config().distributive.code();
    for (i, info) in layout.iter().enumerate() {
        let what = format!("header of tensor {i}");
        let found = match r.u32(&what)? {
            TAG_HPC => {
                let (n, c_in, c_out) = (r.u32(&what)? as usize, r.u32(&what)? as usize, r.u32(&what)? as usize);
                if r.u32(&what)? != f {
                    return Err(bad(format!(
                        "tensor {i}: distributive function differs from the configuration"
                    )));
                }
                let shape = KernelShape::from_code(r.u32(&what)?)?;
                TensorKind::Hpc { n, c_in, c_out, shape }
            }
            TAG_WEIGHT => TensorKind::LinearWeight {
                c_in: r.u32(&what)? as usize,
                c_out: r.u32(&what)? as usize,
            },
            TAG_BIAS => TensorKind::LinearBias {
                c_out: r.u32(&what)? as usize,
            },
            other => return Err(bad(format!("tensor {i}: unknown tag {other}"))),
        };
        if found != info.kind {
            return Err(bad(format!(
                "tensor {i}: stored {found:?}, configuration needs {:?}",
                info.kind
            )));
        }
    }
    let values = layout
        .iter()
        .enumerate()
        .map(|(i, info)| r.f64s(info.len, &format!("tensor {i}")))
        .collect::<Result<Vec<_>>>()?;
    network.load_tensors(&values)?;
    let mut state = TrainState::new(network, seed);
    state.epoch = epoch;
    match r.bytes::<1>("optimizer flag")?[0] {
        0 => {}
        1 => {
            for (i, info) in layout.iter().enumerate() {
                state.optimizer.velocity[i] = r.f64s(info.len, &format!("velocity {i}"))?;
            }
        }
        other => return Err(bad(format!("bad optimizer flag {other}"))),
    }
    r.expect_end()?;
    Ok(state)
}

pub fn save_checkpoint(path: impl AsRef<Path>, state: &TrainState) -> Result<()> {
    let path = path.as_ref();
    let mut w = crate::ply::create_file(path)?;
    w.write_all(&checkpoint_bytes(state))
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<TrainState> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint_from(BufReader::new(file))
}
