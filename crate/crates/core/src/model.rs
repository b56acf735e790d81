//! The FINNger counting network.
//!
//! Three convolutional blocks followed by two dense layers:
//!
//! ```text
//! input            (3, 96, 96)
//! block 1          conv→relu→bn ×2, maxpool, dropout 0.2   (64, 48, 48)
//! block 2          conv→relu→bn ×2, maxpool, dropout 0.3   (128, 24, 24)
//! block 3          conv→relu→bn ×2, maxpool, dropout 0.4   (128, 12, 12)
//! flatten          18432
//! fc1 + relu       128
//! fc2 + logsoftmax 6
//! ```
//!
//! A width scale of 1/2, 1/4 or 1/8 shrinks every channel count and the
//! hidden width for desk-scale experiments.

mod io;

pub use io::{ModelInfo, FORMAT_VERSION, MAGIC};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::nn::{
    log_softmax, log_softmax_backward, max_pool2d, max_pool2d_backward, relu,
    relu_backward, BatchNorm2d, BatchNormCache, Conv2d, Dropout, DropoutMask, Linear, Mode,
    NnError, PoolIndices,
};
use crate::tensor::{Tensor, TensorError};

pub const INPUT_CHANNELS: usize = 3;
pub const INPUT_SIZE: usize = 96;
pub const CLASSES: usize = 6;
const BLOCK_CHANNELS: [usize; 3] = [64, 128, 128];
const BLOCK_DROPOUT: [f64; 3] = [0.2, 0.3, 0.4];
const HIDDEN: usize = 128;
/// Spatial size after three 2×2 poolings of a 96×96 input.
const FINAL_SIZE: usize = INPUT_SIZE / 8;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("width scale {0} must be one of 1, 1/2, 1/4, 1/8")]
    InvalidWidthScale(f64),
    #[error("input must be [N, 3, 96, 96], got {0:?}")]
    InputShape(Vec<usize>),
    #[error("model produced a non-finite output")]
    NonFinite,
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a model file (bad magic)")]
    BadMagic,
    #[error("unsupported model format version {0}")]
    UnsupportedVersion(u32),
    #[error("model file is truncated")]
    Truncated,
    #[error("checksum mismatch: stored {stored:08x}, computed {computed:08x}")]
    Checksum { stored: u32, computed: u32 },
    #[error("model file layout does not match the architecture: {0}")]
    Architecture(String),
}

impl From<TensorError> for ModelError {
    fn from(e: TensorError) -> Self {
        ModelError::Nn(e.into())
    }
}

pub type Result<T> = std::result::Result<T, ModelError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WidthScale {
    Full,
    Half,
    Quarter,
    Eighth,
}

impl WidthScale {
    pub fn from_f64(v: f64) -> Result<WidthScale> {
        [WidthScale::Full, WidthScale::Half, WidthScale::Quarter, WidthScale::Eighth]
            .into_iter()
            .find(|s| s.as_f64() == v)
            .ok_or(ModelError::InvalidWidthScale(v))
    }

    pub fn as_f64(self) -> f64 {
        1.0 / self.divisor() as f64
    }

    fn divisor(self) -> usize {
        match self {
            WidthScale::Full => 1,
            WidthScale::Half => 2,
            WidthScale::Quarter => 4,
            WidthScale::Eighth => 8,
        }
    }

    pub fn channels(self) -> [usize; 3] {
        BLOCK_CHANNELS.map(|c| c / self.divisor())
    }

    pub fn hidden(self) -> usize {
        HIDDEN / self.divisor()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvBlock {
    pub conv1: Conv2d,
    pub bn1: BatchNorm2d,
    pub conv2: Conv2d,
    pub bn2: BatchNorm2d,
    pub dropout: Dropout,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FinngerModel {
    width: WidthScale,
    pub blocks: [ConvBlock; 3],
    pub fc1: Linear,
    pub fc2: Linear,
    mode: Mode,
}

struct BlockCache {
    input: Tensor,
    z1: Tensor,
    bn1: BatchNormCache,
    a1: Tensor,
    z2: Tensor,
    bn2: BatchNormCache,
    pool: PoolIndices,
    dropout: Option<DropoutMask>,
}

/// Everything [`FinngerModel::backward`] needs from a training forward pass.
pub struct ForwardCache {
    blocks: Vec<BlockCache>,
    flat: Tensor,
    hidden_pre: Tensor,
    hidden: Tensor,
    log_probs: Tensor,
}

impl ForwardCache {
    pub fn log_probs(&self) -> &Tensor {
        &self.log_probs
    }
}

/// Batch statistics gathered in train mode, applied after the pass.
type BnStats = Vec<(Vec<f32>, Vec<f32>, usize)>;

impl FinngerModel {
    /// Freshly initialized model; the same seed always yields the same weights.
    pub fn build(seed: u64, width_scale: f64) -> Result<FinngerModel> {
        let width = WidthScale::from_f64(width_scale)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let channels = width.channels();
        let mut in_c = INPUT_CHANNELS;
        let mut blocks = Vec::with_capacity(3);
        for (&out_c, &p) in channels.iter().zip(&BLOCK_DROPOUT) {
            blocks.push(ConvBlock {
                conv1: Conv2d::new(in_c, out_c, &mut rng)?,
                bn1: BatchNorm2d::new(out_c)?,
                conv2: Conv2d::new(out_c, out_c, &mut rng)?,
                bn2: BatchNorm2d::new(out_c)?,
                dropout: Dropout::new(p)?,
            });
            in_c = out_c;
        }
        let flat = channels[2] * FINAL_SIZE * FINAL_SIZE;
        let fc1 = Linear::new(flat, width.hidden(), &mut rng)?;
        let fc2 = Linear::new(width.hidden(), CLASSES, &mut rng)?;
        let blocks: [ConvBlock; 3] = blocks.try_into().expect("three blocks");
        Ok(FinngerModel { width, blocks, fc1, fc2, mode: Mode::Eval })
    }

    pub fn width_scale(&self) -> WidthScale {
        self.width
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let d = x.dims();
        if d.len() != 4 || d[1..] != [INPUT_CHANNELS, INPUT_SIZE, INPUT_SIZE] {
            return Err(ModelError::InputShape(d.to_vec()));
        }
        Ok(())
    }

    /// Forward pass in the current mode. Train mode draws dropout masks from
    /// `rng` and updates the batch-norm running statistics.
    pub fn forward(&mut self, x: &Tensor, rng: &mut impl Rng) -> Result<Tensor> {
        match self.mode {
            Mode::Eval => self.infer(x),
            Mode::Train => Ok(self.forward_train(x, rng)?.log_probs),
        }
    }

    /// Eval-mode forward pass (`[N, 3, 96, 96] -> [N, 6]` log-probabilities).
    /// Never mutates the model, so it can be shared between threads.
    pub fn infer(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let (cache, _) = self.run(x, Mode::Eval, None::<&mut ChaCha8Rng>)?;
        Ok(cache.log_probs)
    }

    /// Train-mode forward pass that keeps what backward needs.
    pub fn forward_train(&mut self, x: &Tensor, rng: &mut impl Rng) -> Result<ForwardCache> {
        self.check_input(x)?;
        let (cache, stats) = self.run(x, Mode::Train, Some(rng))?;
        let bns = self.blocks.iter_mut().flat_map(|b| [&mut b.bn1, &mut b.bn2]);
        for (bn, (mean, var, count)) in bns.zip(&stats) {
            bn.update_running(mean, var, *count);
        }
        Ok(cache)
    }

    fn run<R: Rng>(
        &self,
        x: &Tensor,
        mode: Mode,
        mut rng: Option<&mut R>,
    ) -> Result<(ForwardCache, BnStats)> {
        let mut stats = BnStats::new();
        let mut bn = |layer: &BatchNorm2d, x: &Tensor| -> Result<(Tensor, BatchNormCache)> {
            match mode {
                Mode::Train => {
                    let (y, cache, mean, var) = layer.forward_train(x)?;
                    let d = x.dims();
                    stats.push((mean, var, d[0] * d[2] * d[3]));
                    Ok((y, cache))
                }
                Mode::Eval => Ok(layer.forward_eval(x)?),
            }
        };

        let mut blocks = Vec::with_capacity(3);
        let mut h = x.clone();
        for block in &self.blocks {
            let z1 = block.conv1.forward(&h)?;
            let (a1, bn1) = bn(&block.bn1, &relu(&z1))?;
            let z2 = block.conv2.forward(&a1)?;
            let (a2, bn2) = bn(&block.bn2, &relu(&z2))?;
            let (pooled, pool) = max_pool2d(&a2)?;
            let (out, dropout) = match rng.as_deref_mut() {
                Some(r) => block.dropout.forward(&pooled, mode, r),
                None => (pooled, None),
            };
            blocks.push(BlockCache { input: h, z1, bn1, a1, z2, bn2, pool, dropout });
            h = out;
        }

        let n = x.dims()[0];
        let flat = h.into_reshape(&[n, self.fc1.inputs()])?;
        let hidden_pre = self.fc1.forward(&flat)?;
        let hidden = relu(&hidden_pre);
        let logits = self.fc2.forward(&hidden)?;
        let log_probs = log_softmax(&logits).map_err(|_| ModelError::NonFinite)?;
        if log_probs.check_finite().is_err() {
            return Err(ModelError::NonFinite);
        }
        Ok((ForwardCache { blocks, flat, hidden_pre, hidden, log_probs }, stats))
    }

    /// Gradients of a scalar loss with respect to every parameter, in
    /// [`FinngerModel::parameters`] order, given `dL/dlog_probs`.
    pub fn backward(&self, cache: &ForwardCache, grad_log_probs: &Tensor) -> Result<Vec<Tensor>> {
        let g_logits = log_softmax_backward(&cache.log_probs, grad_log_probs)?;
        let fc2 = self.fc2.backward(&cache.hidden, &g_logits)?;
        let g_hidden = relu_backward(&cache.hidden_pre, &fc2.input)?;
        let fc1 = self.fc1.backward(&cache.flat, &g_hidden)?;

        let last = &cache.blocks[2];
        let mut g = fc1.input.into_reshape(&pooled_dims(last))?;
        let mut block_grads: Vec<[Tensor; 8]> = Vec::with_capacity(3);
        for (block, bc) in self.blocks.iter().zip(&cache.blocks).rev() {
            let g_pooled = block.dropout.backward(bc.dropout.as_ref(), &g)?;
            let g_a2 = max_pool2d_backward(&bc.pool, &g_pooled)?;
            let bn2 = block.bn2.backward(&bc.bn2, &g_a2)?;
            let g_z2 = relu_backward(&bc.z2, &bn2.input)?;
            let c2 = block.conv2.backward(&bc.a1, &g_z2)?;
            let bn1 = block.bn1.backward(&bc.bn1, &c2.input)?;
            let g_z1 = relu_backward(&bc.z1, &bn1.input)?;
            let c1 = block.conv1.backward(&bc.input, &g_z1)?;
            g = c1.input;
            block_grads.push([
                c1.weight, c1.bias, bn1.gamma, bn1.beta, c2.weight, c2.bias, bn2.gamma, bn2.beta,
            ]);
        }
        let mut grads: Vec<Tensor> = block_grads.into_iter().rev().flatten().collect();
        grads.extend([fc1.weight, fc1.bias, fc2.weight, fc2.bias]);
        Ok(grads)
    }

    /// Trainable tensors in declaration order.
    pub fn parameters(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for b in &self.blocks {
            out.extend([
                &b.conv1.weight, &b.conv1.bias, &b.bn1.gamma, &b.bn1.beta,
                &b.conv2.weight, &b.conv2.bias, &b.bn2.gamma, &b.bn2.beta,
            ]);
        }
        out.extend([&self.fc1.weight, &self.fc1.bias, &self.fc2.weight, &self.fc2.bias]);
        out
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for b in &mut self.blocks {
            out.extend([
                &mut b.conv1.weight, &mut b.conv1.bias, &mut b.bn1.gamma, &mut b.bn1.beta,
                &mut b.conv2.weight, &mut b.conv2.bias, &mut b.bn2.gamma, &mut b.bn2.beta,
            ]);
        }
        out.extend([
            &mut self.fc1.weight,
            &mut self.fc1.bias,
            &mut self.fc2.weight,
            &mut self.fc2.bias,
        ]);
        out
    }

    /// Every stored tensor (parameters and running statistics) with its
    /// stable name, in file order.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (i, b) in self.blocks.iter().enumerate() {
            let p = format!("block{}", i + 1);
            for (conv, bn, tag) in [(&b.conv1, &b.bn1, 1), (&b.conv2, &b.bn2, 2)] {
                out.push((format!("{p}.conv{tag}.weight"), &conv.weight));
                out.push((format!("{p}.conv{tag}.bias"), &conv.bias));
                out.push((format!("{p}.bn{tag}.gamma"), &bn.gamma));
                out.push((format!("{p}.bn{tag}.beta"), &bn.beta));
                out.push((format!("{p}.bn{tag}.running_mean"), &bn.running_mean));
                out.push((format!("{p}.bn{tag}.running_var"), &bn.running_var));
            }
        }
        out.push(("fc1.weight".into(), &self.fc1.weight));
        out.push(("fc1.bias".into(), &self.fc1.bias));
        out.push(("fc2.weight".into(), &self.fc2.weight));
        out.push(("fc2.bias".into(), &self.fc2.bias));
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for b in &mut self.blocks {
            for (conv, bn) in [(&mut b.conv1, &mut b.bn1), (&mut b.conv2, &mut b.bn2)] {
                out.extend([
                    &mut conv.weight, &mut conv.bias, &mut bn.gamma, &mut bn.beta,
                    &mut bn.running_mean, &mut bn.running_var,
                ]);
            }
        }
        out.extend([
            &mut self.fc1.weight,
            &mut self.fc1.bias,
            &mut self.fc2.weight,
            &mut self.fc2.bias,
        ]);
        out
    }

    /// Output shape (without the batch axis) after every stage of an
    /// eval-mode pass over `x`.
    pub fn shape_trace(&self, x: &Tensor) -> Result<Vec<(String, Vec<usize>)>> {
        self.check_input(x)?;
        let mut trace = Vec::new();
        let mut record = |name: String, t: &Tensor| trace.push((name, t.dims()[1..].to_vec()));
        let mut h = x.clone();
        for (i, b) in self.blocks.iter().enumerate() {
            let p = format!("C{}", i + 1);
            let z = relu(&b.conv1.forward(&h)?);
            record(format!("{p}.conv1"), &z);
            let z = b.bn1.forward_eval(&z)?.0;
            record(format!("{p}.bn1"), &z);
            let z = relu(&b.conv2.forward(&z)?);
            record(format!("{p}.conv2"), &z);
            let z = b.bn2.forward_eval(&z)?.0;
            record(format!("{p}.bn2"), &z);
            let (z, _) = max_pool2d(&z)?;
            record(format!("{p}.maxpool"), &z);
            record(format!("{p}.dropout"), &z);
            h = z;
        }
        let n = x.dims()[0];
        let flat = h.into_reshape(&[n, self.fc1.inputs()])?;
        record("flatten".into(), &flat);
        let hidden = relu(&self.fc1.forward(&flat)?);
        record("fc1".into(), &hidden);
        let out = log_softmax(&self.fc2.forward(&hidden)?)?;
        record("fc2.log_softmax".into(), &out);
        Ok(trace)
    }

    /// Argmax class of every row of an eval-mode pass.
    pub fn predict(&self, x: &Tensor) -> Result<Vec<usize>> {
        Ok(argmax_rows(&self.infer(x)?))
    }
}

/// Index of the largest value in each row of `[N, K]`; ties pick the first.
pub fn argmax_rows(t: &Tensor) -> Vec<usize> {
    let k = *t.dims().last().expect("rank >= 1");
    t.data()
        .chunks_exact(k)
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, f32::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
                .0
        })
        .collect()
}

fn pooled_dims(bc: &BlockCache) -> Vec<usize> {
    let d = bc.z2.dims();
    vec![d[0], d[1], d[2] / 2, d[3] / 2]
}
