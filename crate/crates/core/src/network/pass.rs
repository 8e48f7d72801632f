use alloc::vec;
use alloc::vec::Vec;

use super::model::{Block, ConvUnit, HpcNetwork, Linear};
use super::sample::{ConvGeometry, GeomEntry, Sample};
use crate::layer::HpcLayer;
use crate::metric::DistributiveFn;
use crate::{par, Error, Matrix, Result};

struct UnitTrace {
    pre: Vec<Matrix>,
    routing: Vec<Vec<u32>>,
    /// Multi-kernel only: `sum_k ReLU(pre_k)` before the outer rectifier.
    sum: Option<Matrix>,
}

struct BlockTrace {
    input: Matrix,
    c1: UnitTrace,
    y1: Matrix,
    c2: UnitTrace,
    shortcut_in: Option<Matrix>,
    /// Pre-activation of the block output.
    z: Matrix,
}

struct DecoderTrace {
    cat: Matrix,
    pre: Matrix,
}

/// Everything a forward pass records for the backward pass.
pub struct Forward {
    pub logits: Matrix,
    blocks: Vec<BlockTrace>,
    encoded: Vec<Matrix>,
    decoder: Vec<DecoderTrace>,
    head_in: Matrix,
}

impl Forward {
    /// Features entering the segmentation head, one row per input point.
    pub fn head_features(&self) -> &Matrix {
        &self.head_in
    }

    /// Block output at encoder level `l`.
    pub fn encoded(&self, level: usize) -> &Matrix {
        &self.encoded[level]
    }
}

fn rms(m: &Matrix) -> f64 {
    let v = m.as_slice();
    if v.is_empty() {
        return 0.0;
    }
    libm::sqrt(v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64)
}

fn relu(m: &Matrix) -> Matrix {
    let mut out = m.clone();
    out.as_mut_slice().iter_mut().for_each(|v| *v = v.max(0.0));
    out
}

fn relu_backward(pre: &Matrix, grad: &Matrix) -> Matrix {
    let mut out = grad.clone();
    for (g, &p) in out.as_mut_slice().iter_mut().zip(pre.as_slice()) {
        if p <= 0.0 {
            *g = 0.0;
        }
    }
    out
}

fn add_into(acc: &mut Matrix, other: &Matrix) {
    for (a, b) in acc.as_mut_slice().iter_mut().zip(other.as_slice()) {
        *a += b;
    }
}

fn gather(x: &Matrix, index: &[u32]) -> Matrix {
    let mut out = Matrix::zeros(index.len(), x.cols());
    for (i, &src) in index.iter().enumerate() {
        out.row_mut(i).copy_from_slice(x.row(src as usize));
    }
    out
}

fn scatter_add(grad: &Matrix, index: &[u32], rows: usize) -> Matrix {
    let mut out = Matrix::zeros(rows, grad.cols());
    for (i, &dst) in index.iter().enumerate() {
        for (o, g) in out.row_mut(dst as usize).iter_mut().zip(grad.row(i)) {
            *o += g;
        }
    }
    out
}

fn linear_forward(lin: &Linear, x: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(x.rows(), lin.c_out);
    par::fill_rows(out.as_mut_slice(), lin.c_out, |i, row| {
        row.copy_from_slice(&lin.bias);
        for (ci, &xv) in x.row(i).iter().enumerate() {
            if xv == 0.0 {
                continue;
            }
            for (o, &w) in row.iter_mut().zip(&lin.weight[ci * lin.c_out..(ci + 1) * lin.c_out]) {
                *o += xv * w;
            }
        }
    });
    out
}

/// Returns `(dW, db, dx)`.
fn linear_backward(lin: &Linear, x: &Matrix, dy: &Matrix) -> (Vec<f64>, Vec<f64>, Matrix) {
    let (ci, co) = (lin.c_in, lin.c_out);
    let partials = par::map_chunks(x.rows(), |range| {
        let mut gw = vec![0.0; ci * co];
        let mut gb = vec![0.0; co];
        for i in range {
            let g = dy.row(i);
            for (b, &v) in gb.iter_mut().zip(g) {
                *b += v;
            }
            for (c, &xv) in x.row(i).iter().enumerate() {
                if xv == 0.0 {
                    continue;
                }
                for (w, &v) in gw[c * co..(c + 1) * co].iter_mut().zip(g) {
                    *w += xv * v;
                }
            }
        }
        (gw, gb)
    });
    let mut gw = vec![0.0; ci * co];
    let mut gb = vec![0.0; co];
    for (pw, pb) in partials {
        gw.iter_mut().zip(&pw).for_each(|(a, b)| *a += b);
        gb.iter_mut().zip(&pb).for_each(|(a, b)| *a += b);
    }
    let mut dx = Matrix::zeros(x.rows(), ci);
    par::fill_rows(dx.as_mut_slice(), ci, |i, row| {
        let g = dy.row(i);
        for (c, o) in row.iter_mut().enumerate() {
            *o = lin.weight[c * co..(c + 1) * co].iter().zip(g).map(|(w, v)| w * v).sum();
        }
    });
    (gw, gb, dx)
}

fn accumulate(entries: &[GeomEntry], x: &Matrix, c_in: usize, a: &mut [f64]) {
    a.fill(0.0);
    for e in entries {
        let row = &mut a[e.row as usize * c_in..(e.row as usize + 1) * c_in];
        for (acc, &v) in row.iter_mut().zip(x.row(e.support as usize)) {
            *acc += e.value * v;
        }
    }
}

fn conv_forward(layer: &HpcLayer, g: &ConvGeometry, x: &Matrix) -> (Matrix, Vec<u32>) {
    let (n, ci, co) = (layer.n(), layer.c_in(), layer.c_out());
    let routed = layer.distributive_fn() != DistributiveFn::Sum;
    let nq = g.n_queries();
    let chunks = par::map_chunks(nq, |range| {
        let mut out = vec![0.0; range.len() * co];
        let mut routing = vec![0u32; if routed { range.len() * co } else { 0 }];
        let mut a = vec![0.0; n * ci];
        for (k, q) in range.enumerate() {
            let entries = g.query_entries(q);
            if entries.is_empty() {
                continue;
            }
            accumulate(entries, x, ci, &mut a);
            let r: &mut [u32] = if routed {
                &mut routing[k * co..(k + 1) * co]
            } else {
                &mut []
            };
            layer.contract(&a, None, &mut out[k * co..(k + 1) * co], r);
        }
        (out, routing)
    });
    let mut out = Vec::with_capacity(nq * co);
    let mut routing = Vec::with_capacity(if routed { nq * co } else { 0 });
    for (o, r) in chunks {
        out.extend(o);
        routing.extend(r);
    }
    (Matrix::from_vec(nq, co, out).expect("conv output size"), routing)
}

fn conv_backward(layer: &HpcLayer, g: &ConvGeometry, x: &Matrix, routing: &[u32], dy: &Matrix) -> (Vec<f64>, Matrix) {
    let (n, ci, co) = (layer.n(), layer.c_in(), layer.c_out());
    let routed = !routing.is_empty();
    let nq = g.n_queries();
    let chunks = par::map_chunks(nq, |range| {
        let mut gw = vec![0.0; n * ci * co];
        let mut ga = vec![0.0; range.len() * n * ci];
        let mut a = vec![0.0; n * ci];
        for (k, q) in range.enumerate() {
            let entries = g.query_entries(q);
            let gout = dy.row(q);
            if entries.is_empty() || gout.iter().all(|&v| v == 0.0) {
                continue;
            }
            accumulate(entries, x, ci, &mut a);
            let r: &[u32] = if routed { &routing[q * co..(q + 1) * co] } else { &[] };
            layer.backward_contract(&a, r, gout, &mut gw, &mut ga[k * n * ci..(k + 1) * n * ci]);
        }
        (gw, ga)
    });
    let mut gw = vec![0.0; n * ci * co];
    let mut ga = Vec::with_capacity(nq * n * ci);
    for (pw, pa) in chunks {
        gw.iter_mut().zip(&pw).for_each(|(a, b)| *a += b);
        ga.extend(pa);
    }
    let mut dx = Matrix::zeros(g.n_support, ci);
    par::fill_rows(dx.as_mut_slice(), ci, |s, row| {
        for e in g.support_entries(s) {
            let base = (e.query as usize * n + e.row as usize) * ci;
            for (o, &v) in row.iter_mut().zip(&ga[base..base + ci]) {
                *o += e.value * v;
            }
        }
    });
    (gw, dx)
}

fn unit_forward(unit: &ConvUnit, geoms: &[&ConvGeometry], x: &Matrix) -> (Matrix, UnitTrace) {
    let mut pre = Vec::with_capacity(unit.layers.len());
    let mut routing = Vec::with_capacity(unit.layers.len());
    for (layer, g) in unit.layers.iter().zip(geoms) {
        let (p, r) = conv_forward(layer, g, x);
        pre.push(p);
        routing.push(r);
    }
    if unit.is_multi() {
        let mut sum = Matrix::zeros(pre[0].rows(), pre[0].cols());
        for p in &pre {
            for (s, &v) in sum.as_mut_slice().iter_mut().zip(p.as_slice()) {
                *s += v.max(0.0);
            }
        }
        let out = relu(&sum);
        (
            out,
            UnitTrace {
                pre,
                routing,
                sum: Some(sum),
            },
        )
    } else {
        let out = pre[0].clone();
        (
            out,
            UnitTrace {
                pre,
                routing,
                sum: None,
            },
        )
    }
}

/// Back through a unit given the gradient of its output. For single-kernel
/// units the output is the raw convolution (rectification happens outside).
fn unit_backward(
    unit: &ConvUnit,
    geoms: &[&ConvGeometry],
    x: &Matrix,
    trace: &UnitTrace,
    dout: &Matrix,
) -> (Vec<Vec<f64>>, Matrix) {
    let mut dx = Matrix::zeros(x.rows(), x.cols());
    let mut gws = Vec::with_capacity(unit.layers.len());
    let dsum = trace.sum.as_ref().map(|s| relu_backward(s, dout));
    for (k, (layer, g)) in unit.layers.iter().zip(geoms).enumerate() {
        let dpre = match &dsum {
            Some(ds) => relu_backward(&trace.pre[k], ds),
            None => dout.clone(),
        };
        let (gw, dxk) = conv_backward(layer, g, x, &trace.routing[k], &dpre);
        add_into(&mut dx, &dxk);
        gws.push(gw);
    }
    (gws, dx)
}

impl HpcNetwork {
    fn geoms<'s>(&self, sample: &'s Sample, level: usize, conv: usize) -> Vec<&'s ConvGeometry> {
        sample.conv_geom[level][conv]
            .iter()
            .map(|&i| &sample.geoms[i])
            .collect()
    }

    fn check_sample(&self, sample: &Sample) -> Result<()> {
        if sample.depth() != self.config.depth
            || sample.conv_geom.first().map_or(0, |c| c[0].len()) != self.config.kernels.len()
        {
            return Err(Error::invalid(
                "sample was prepared for a different network configuration",
            ));
        }
        if sample.input.cols() != self.config.input_channels {
            return Err(Error::DimensionMismatch {
                what: "input channels",
                expected: self.config.input_channels,
                found: sample.input.cols(),
            });
        }
        Ok(())
    }

    /// Full forward pass, keeping every intermediate for [`backward`](Self::backward).
    pub fn forward(&self, sample: &Sample) -> Result<Forward> {
        self.check_sample(sample)?;
        let mut x = linear_forward(&self.stem, &sample.input);
        let mut blocks = Vec::with_capacity(self.blocks.len());
        let mut encoded = Vec::with_capacity(self.blocks.len());
        for (l, block) in self.blocks.iter().enumerate() {
            let (out, trace) = self.block_forward(sample, l, block, x);
            encoded.push(out.clone());
            blocks.push(trace);
            x = out;
        }

        let depth = self.blocks.len();
        let mut decoder: Vec<Option<DecoderTrace>> = (0..depth.saturating_sub(1)).map(|_| None).collect();
        let mut up = encoded[depth - 1].clone();
        for l in (0..depth.saturating_sub(1)).rev() {
            let cat = gather(&up, &sample.up_index[l]).hconcat(&encoded[l])?;
            let pre = linear_forward(&self.decoder[l], &cat);
            up = relu(&pre);
            decoder[l] = Some(DecoderTrace { cat, pre });
        }
        let head_in = up;
        let logits = linear_forward(&self.head, &head_in);
        Ok(Forward {
            logits,
            blocks,
            encoded,
            decoder: decoder
                .into_iter()
                .map(|d| d.expect("every decoder level ran"))
                .collect(),
            head_in,
        })
    }

    fn block_forward(&self, sample: &Sample, l: usize, block: &Block, input: Matrix) -> (Matrix, BlockTrace) {
        let (c1_out, c1) = unit_forward(&block.conv1, &self.geoms(sample, l, 0), &input);
        let y1 = if block.conv1.is_multi() { c1_out } else { relu(&c1_out) };
        let (c2_out, c2) = unit_forward(&block.conv2, &self.geoms(sample, l, 1), &y1);
        let (z, shortcut_in) = match &block.shortcut {
            Some(s) => {
                let sin = if l == 0 {
                    input.clone()
                } else {
                    gather(&input, &sample.pool_index[l])
                };
                let mut z = c2_out;
                add_into(&mut z, &linear_forward(s, &sin));
                (z, Some(sin))
            }
            None => (c2_out, None),
        };
        let out = if block.conv2.is_multi() { z.clone() } else { relu(&z) };
        (
            out,
            BlockTrace {
                input,
                c1,
                y1,
                c2,
                shortcut_in,
                z,
            },
        )
    }

    /// Gradients of every tensor (canonical order) given the gradient of the logits.
    pub fn backward(&self, sample: &Sample, fwd: &Forward, dlogits: &Matrix) -> Result<Vec<Vec<f64>>> {
        if dlogits.rows() != fwd.logits.rows() || dlogits.cols() != fwd.logits.cols() {
            return Err(Error::DimensionMismatch {
                what: "logit gradient",
                expected: fwd.logits.rows() * fwd.logits.cols(),
                found: dlogits.rows() * dlogits.cols(),
            });
        }
        let layout_len = self.tensor_layout().len();
        let mut grads: Vec<Vec<f64>> = vec![Vec::new(); layout_len];
        let mut block_base = Vec::with_capacity(self.blocks.len());
        let mut idx = 2;
        for b in &self.blocks {
            block_base.push(idx);
            idx += b.conv1.layers.len() + b.conv2.layers.len() + if b.shortcut.is_some() { 2 } else { 0 };
        }
        let decoder_base = idx;
        let head_base = decoder_base + 2 * self.decoder.len();

        let depth = self.blocks.len();
        let (hw, hb, mut d_up) = linear_backward(&self.head, &fwd.head_in, dlogits);
        grads[head_base] = hw;
        grads[head_base + 1] = hb;

        let mut d_enc: Vec<Matrix> = fwd.encoded.iter().map(|e| Matrix::zeros(e.rows(), e.cols())).collect();
        for l in 0..depth.saturating_sub(1) {
            let t = &fwd.decoder[l];
            let dpre = relu_backward(&t.pre, &d_up);
            let (w, b, dcat) = linear_backward(&self.decoder[l], &t.cat, &dpre);
            grads[decoder_base + 2 * l] = w;
            grads[decoder_base + 2 * l + 1] = b;
            let coarse_w = dcat.cols() - fwd.encoded[l].cols();
            let mut d_coarse = Matrix::zeros(dcat.rows(), coarse_w);
            for i in 0..dcat.rows() {
                let row = dcat.row(i);
                d_coarse.row_mut(i).copy_from_slice(&row[..coarse_w]);
                for (d, &v) in d_enc[l].row_mut(i).iter_mut().zip(&row[coarse_w..]) {
                    *d += v;
                }
            }
            d_up = scatter_add(&d_coarse, &sample.up_index[l], sample.levels[l + 1].len());
        }
        add_into(&mut d_enc[depth - 1], &d_up);

        let mut d_input = Matrix::zeros(0, 0);
        for l in (0..depth).rev() {
            let mut dout = core::mem::replace(&mut d_enc[l], Matrix::zeros(0, 0));
            if l + 1 < depth {
                add_into(&mut dout, &d_input);
            }
            let block = &self.blocks[l];
            let t = &fwd.blocks[l];
            let dz = if block.conv2.is_multi() {
                dout
            } else {
                relu_backward(&t.z, &dout)
            };
            let mut base = block_base[l];

            let (gw1_slot, gw2_slot) = (base, base + block.conv1.layers.len());
            base += block.conv1.layers.len() + block.conv2.layers.len();

            let (gw2, dy1) = unit_backward(&block.conv2, &self.geoms(sample, l, 1), &t.y1, &t.c2, &dz);
            let mut dx = Matrix::zeros(t.input.rows(), t.input.cols());
            if let (Some(s), Some(sin)) = (&block.shortcut, &t.shortcut_in) {
                let (w, b, dsin) = linear_backward(s, sin, &dz);
                grads[base] = w;
                grads[base + 1] = b;
                if l == 0 {
                    add_into(&mut dx, &dsin);
                } else {
                    add_into(&mut dx, &scatter_add(&dsin, &sample.pool_index[l], t.input.rows()));
                }
            }
            let dc1 = if block.conv1.is_multi() {
                dy1
            } else {
                relu_backward(&t.c1.pre[0], &dy1)
            };
            let (gw1, dx1) = unit_backward(&block.conv1, &self.geoms(sample, l, 0), &t.input, &t.c1, &dc1);
            add_into(&mut dx, &dx1);
            for (k, g) in gw1.into_iter().enumerate() {
                grads[gw1_slot + k] = g;
            }
            for (k, g) in gw2.into_iter().enumerate() {
                grads[gw2_slot + k] = g;
            }
            d_input = dx;
        }

        let (sw, sb, _) = linear_backward(&self.stem, &sample.input, &d_input);
        grads[0] = sw;
        grads[1] = sb;
        Ok(grads)
    }

    /// Mean cross-entropy over labeled points and the gradient of every tensor.
    pub fn loss_and_gradients(&self, sample: &Sample) -> Result<(f64, Vec<Vec<f64>>, Forward)> {
        let fwd = self.forward(sample)?;
        let (loss, dlogits) = super::loss::cross_entropy(&fwd.logits, &sample.labels, self.config.num_classes)?;
        let grads = self.backward(sample, &fwd, &dlogits)?;
        Ok((loss, grads, fwd))
    }
    /// Rescales every HPC layer, first block to last, so that its
    /// pre-activation on `sample` has unit root-mean-square. Layers whose
    /// output is identically zero are left alone.
    pub fn calibrate(&mut self, sample: &Sample) -> Result<()> {
        self.check_sample(sample)?;
        for l in 0..self.blocks.len() {
            for conv in 0..2 {
                let fwd = self.forward(sample)?;
                let trace = &fwd.blocks[l];
                let unit_trace = if conv == 0 { &trace.c1 } else { &trace.c2 };
                let scales: Vec<f64> = unit_trace.pre.iter().map(rms).collect();
                let block = &mut self.blocks[l];
                let unit = if conv == 0 { &mut block.conv1 } else { &mut block.conv2 };
                for (layer, s) in unit.layers.iter_mut().zip(scales) {
                    if s.is_finite() && s > 0.0 {
                        layer.weights_mut().iter_mut().for_each(|w| *w /= s);
                    }
                }
            }
        }
        Ok(())
    }
}
