//! Minimal trainable point-set networks: a shared per-point MLP with max
//! pooling (permutation invariant by construction) followed by a
//! fully-connected head, with exact reverse-mode gradients and Adam.
//!
//! Parameters live in one flat vector with a layout derived from the spec;
//! batch-norm running statistics are a separate (untrained) buffer.

mod adam;
mod backward;
mod params_io;
mod train;

pub use adam::{adam_step, AdamHyper, OptimizerState};
pub use backward::batch_gradient;
pub use params_io::{load_params, parse_params, save_params, serialize_params};
pub use train::{assemble_task_inputs, train, TrainConfig, TrainReport, TrainTask};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::geom::Point3;

/// Numerical floor inside normalization denominators.
pub(crate) const NORM_EPS: f64 = 1e-5;

/// Momentum for batch-norm running statistics.
pub(crate) const BN_MOMENTUM: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HeadNorm {
    None,
    /// Per-sample layer normalization (the default: batch-size robust
    /// and deterministic).
    Layer,
    /// Batch normalization with running statistics, for parity
    /// experiments.
    Batch,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderSpec {
    /// Widths of the shared per-point layers; the last is the feature dim.
    pub per_point_widths: Vec<usize>,
}

impl Default for EncoderSpec {
    fn default() -> Self {
        EncoderSpec {
            per_point_widths: vec![64, 128, 256],
        }
    }
}

impl EncoderSpec {
    pub fn feature_dim(&self) -> usize {
        *self.per_point_widths.last().expect("validated non-empty")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeadSpec {
    pub hidden_widths: Vec<usize>,
    /// 3 for the direction head, 1 for the distance head.
    pub output_dim: usize,
    pub norm: HeadNorm,
}

impl Default for HeadSpec {
    fn default() -> Self {
        HeadSpec {
            hidden_widths: vec![128, 64, 32],
            output_dim: 3,
            norm: HeadNorm::Layer,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkSpec {
    pub encoder: EncoderSpec,
    pub head: HeadSpec,
}

impl NetworkSpec {
    pub fn validate(&self) -> Result<()> {
        if self.encoder.per_point_widths.is_empty()
            || self.encoder.per_point_widths.iter().any(|&w| w == 0)
        {
            return Err(Error::InvalidParameter(
                "encoder widths must be non-empty and positive".into(),
            ));
        }
        if self.head.hidden_widths.iter().any(|&w| w == 0) {
            return Err(Error::InvalidParameter(
                "head widths must be positive".into(),
            ));
        }
        if !matches!(self.head.output_dim, 1 | 3) {
            return Err(Error::InvalidParameter("output_dim must be 1 or 3".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct LinearSlot {
    pub w: usize,
    pub b: usize,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl LinearSlot {
    pub fn w_range(&self) -> std::ops::Range<usize> {
        self.w..self.w + self.in_dim * self.out_dim
    }

    pub fn b_range(&self) -> std::ops::Range<usize> {
        self.b..self.b + self.out_dim
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct NormSlot {
    pub gamma: usize,
    pub beta: usize,
    pub dim: usize,
    /// Offset of (mean, var) pairs inside the running-stats buffer.
    pub running: usize,
}

#[derive(Clone, Debug)]
pub(crate) struct Layout {
    pub encoder: Vec<LinearSlot>,
    pub head: Vec<(LinearSlot, Option<NormSlot>)>,
    pub output: LinearSlot,
    pub total: usize,
    pub running_len: usize,
}

impl Layout {
    pub fn of(spec: &NetworkSpec) -> Layout {
        fn linear(offset: &mut usize, in_dim: usize, out_dim: usize) -> LinearSlot {
            let slot = LinearSlot {
                w: *offset,
                b: *offset + in_dim * out_dim,
                in_dim,
                out_dim,
            };
            *offset += in_dim * out_dim + out_dim;
            slot
        }
        let mut offset = 0usize;
        let mut running = 0usize;

        let mut encoder = Vec::new();
        let mut in_dim = 3;
        for &w in &spec.encoder.per_point_widths {
            encoder.push(linear(&mut offset, in_dim, w));
            in_dim = w;
        }

        let mut head = Vec::new();
        for &w in &spec.head.hidden_widths {
            let lin = linear(&mut offset, in_dim, w);
            let norm = match spec.head.norm {
                HeadNorm::None => None,
                HeadNorm::Layer | HeadNorm::Batch => {
                    let slot = NormSlot {
                        gamma: offset,
                        beta: offset + w,
                        dim: w,
                        running,
                    };
                    offset += 2 * w;
                    if spec.head.norm == HeadNorm::Batch {
                        running += 2 * w;
                    }
                    Some(slot)
                }
            };
            head.push((lin, norm));
            in_dim = w;
        }
        let output = linear(&mut offset, in_dim, spec.head.output_dim);
        Layout {
            encoder,
            head,
            output,
            total: offset,
            running_len: running,
        }
    }
}

/// Flat parameter vector plus the metadata needed to interpret it.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkParams {
    pub spec: NetworkSpec,
    pub values: Vec<f64>,
    /// Batch-norm running (mean, var) pairs; empty unless `norm == Batch`.
    pub bn_running: Vec<f64>,
    pub init_seed: u64,
    /// Neighborhood size the network was trained with.
    pub input_k: usize,
    /// Task tag recorded for schema checks at load time.
    pub task: Option<TrainTask>,
}

impl NetworkParams {
    /// He-style fan-in uniform initialization with a recorded seed; biases
    /// zero, norm gains one.
    pub fn init(spec: NetworkSpec, seed: u64, input_k: usize) -> Result<NetworkParams> {
        spec.validate()?;
        let layout = Layout::of(&spec);
        let mut values = vec![0.0f64; layout.total];
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut init_linear = |slot: &LinearSlot, values: &mut Vec<f64>| {
            let bound = (6.0 / slot.in_dim as f64).sqrt();
            for v in &mut values[slot.w_range()] {
                *v = rng.random_range(-bound..bound);
            }
        };
        for slot in &layout.encoder {
            init_linear(slot, &mut values);
        }
        for (slot, norm) in &layout.head {
            init_linear(slot, &mut values);
            if let Some(norm) = norm {
                for v in &mut values[norm.gamma..norm.gamma + norm.dim] {
                    *v = 1.0;
                }
            }
        }
        init_linear(&layout.output, &mut values);

        // Running stats are (mean, var) pairs per feature; variances start
        // at one.
        let mut bn_running = vec![0.0f64; layout.running_len];
        for pair in bn_running.chunks_exact_mut(2) {
            pair[1] = 1.0;
        }

        Ok(NetworkParams {
            spec,
            values,
            bn_running,
            init_seed: seed,
            input_k,
            task: None,
        })
    }

    pub fn param_count(&self) -> usize {
        self.values.len()
    }

    pub(crate) fn layout(&self) -> Layout {
        Layout::of(&self.spec)
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
            && self.bn_running.iter().all(|v| v.is_finite())
    }
}

pub(crate) fn linear_forward(w: &[f64], b: &[f64], input: &[f64], out: &mut [f64]) {
    let in_dim = input.len();
    for (j, o) in out.iter_mut().enumerate() {
        let row = &w[j * in_dim..(j + 1) * in_dim];
        let mut acc = b[j];
        for (wi, xi) in row.iter().zip(input) {
            acc += wi * xi;
        }
        *o = acc;
    }
}

pub(crate) fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

/// Eval-mode forward pass: encoder with max pooling, then the head. Batch
/// normalization uses the stored running statistics.
pub fn forward(params: &NetworkParams, neighborhood: &[Point3]) -> Result<Vec<f64>> {
    if neighborhood.is_empty() {
        return Err(Error::EmptyInput);
    }
    if neighborhood.iter().any(|p| !p.is_finite()) {
        return Err(Error::NonFinite {
            context: "network input",
        });
    }
    let layout = params.layout();
    let values = &params.values;
    let feature_dim = params.spec.encoder.feature_dim();
    let mut pooled = vec![f64::NEG_INFINITY; feature_dim];
    let mut cur = Vec::new();
    let mut next = Vec::new();
    for p in neighborhood {
        cur.clear();
        cur.extend_from_slice(&[p.x, p.y, p.z]);
        for slot in &layout.encoder {
            next.resize(slot.out_dim, 0.0);
            linear_forward(
                &values[slot.w_range()],
                &values[slot.b_range()],
                &cur,
                &mut next,
            );
            for v in &mut next {
                *v = relu(*v);
            }
            std::mem::swap(&mut cur, &mut next);
        }
        for (pool, &v) in pooled.iter_mut().zip(&cur) {
            if v > *pool {
                *pool = v;
            }
        }
    }

    let mut x = pooled;
    let mut z = Vec::new();
    for (slot, norm) in &layout.head {
        z.resize(slot.out_dim, 0.0);
        linear_forward(&values[slot.w_range()], &values[slot.b_range()], &x, &mut z);
        if let Some(norm) = norm {
            let gamma = &values[norm.gamma..norm.gamma + norm.dim];
            let beta = &values[norm.beta..norm.beta + norm.dim];
            match params.spec.head.norm {
                HeadNorm::Layer => {
                    let n = z.len() as f64;
                    let mu = z.iter().sum::<f64>() / n;
                    let var = z.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n;
                    let inv_std = 1.0 / (var + NORM_EPS).sqrt();
                    for (j, v) in z.iter_mut().enumerate() {
                        *v = gamma[j] * ((*v - mu) * inv_std) + beta[j];
                    }
                }
                HeadNorm::Batch => {
                    for (j, v) in z.iter_mut().enumerate() {
                        let mean = params.bn_running[norm.running + 2 * j];
                        let var = params.bn_running[norm.running + 2 * j + 1];
                        *v = gamma[j] * ((*v - mean) / (var + NORM_EPS).sqrt()) + beta[j];
                    }
                }
                HeadNorm::None => unreachable!(),
            }
        }
        for v in &mut z {
            *v = relu(*v);
        }
        std::mem::swap(&mut x, &mut z);
    }

    let slot = &layout.output;
    let mut out = vec![0.0; slot.out_dim];
    linear_forward(&values[slot.w_range()], &values[slot.b_range()], &x, &mut out);
    Ok(out)
}

/// Mean of squared componentwise differences.
pub fn loss_mse(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::LengthMismatch);
    }
    if pred.is_empty() {
        return Err(Error::EmptyInput);
    }
    let sum: f64 = pred
        .iter()
        .zip(target)
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok(sum / pred.len() as f64)
}
