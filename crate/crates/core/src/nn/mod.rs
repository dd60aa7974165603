//! Small convolutional classifier: a stack of conv3x3 → batchnorm → ReLU
//! (→ 2x2 max pool) blocks, a fully-connected layer to `K` classes, and
//! softmax.

mod layers;
mod tensor;
mod train;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image_io::FloatImage;

pub use layers::{
    argmax, maxpool2_backward, maxpool2_forward, relu_backward, relu_forward, softmax,
    softmax_xent, BatchNorm, BatchNormCache, BatchNormGrads, Conv2d, ConvGrads, Dense, DenseGrads,
    Mode, PoolCache, SoftmaxXent, BN_EPSILON, BN_MOMENTUM, KERNEL,
};
pub use tensor::{Real, Tensor};
pub use train::{evaluate, train, train_with, EpochStats, TrainConfig, TrainReport};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockSpec {
    pub filters: usize,
    pub pool: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchSpec {
    pub input_h: usize,
    pub input_w: usize,
    pub input_c: usize,
    pub blocks: Vec<BlockSpec>,
    pub num_classes: usize,
}

impl ArchSpec {
    /// conv8-pool, conv16-pool, conv32, dense.
    pub fn default_for(input_h: usize, input_w: usize, input_c: usize, num_classes: usize) -> Self {
        Self::with_depth(input_h, input_w, input_c, num_classes, 3)
    }

    /// The first `depth` blocks of the 8/16/32/64/... ladder, pooling after
    /// every block but the last.
    pub fn with_depth(
        input_h: usize,
        input_w: usize,
        input_c: usize,
        num_classes: usize,
        depth: usize,
    ) -> Self {
        let blocks = (0..depth)
            .map(|i| BlockSpec { filters: 8 << i, pool: i + 1 < depth })
            .collect();
        Self { input_h, input_w, input_c, blocks, num_classes }
    }

    /// Channels, height and width entering the dense layer.
    pub fn feature_dims(&self) -> (usize, usize, usize) {
        let (mut c, mut h, mut w) = (self.input_c, self.input_h, self.input_w);
        for block in &self.blocks {
            c = block.filters;
            if block.pool {
                h /= 2;
                w /= 2;
            }
        }
        (c, h, w)
    }

    pub fn dense_inputs(&self) -> usize {
        let (c, h, w) = self.feature_dims();
        c * h * w
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_h == 0 || self.input_w == 0 {
            return Err(Error::InvalidArch(format!("input {}x{}", self.input_h, self.input_w)));
        }
        if self.input_c != 1 && self.input_c != 3 {
            return Err(Error::InvalidArch(format!("{} input channels", self.input_c)));
        }
        if self.num_classes < 2 {
            return Err(Error::InvalidArch(format!("{} classes (need at least 2)", self.num_classes)));
        }
        if self.blocks.iter().any(|b| b.filters == 0) {
            return Err(Error::InvalidArch("block with zero filters".into()));
        }
        let (mut h, mut w) = (self.input_h, self.input_w);
        for (i, block) in self.blocks.iter().enumerate() {
            if block.pool {
                if h < 2 || w < 2 {
                    return Err(Error::InvalidArch(format!(
                        "block {i} pools a {h}x{w} feature map to zero size"
                    )));
                }
                h /= 2;
                w /= 2;
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvBlock<T> {
    pub conv: Conv2d<T>,
    pub bn: BatchNorm<T>,
    pub pool: bool,
}

/// Network parameters and batchnorm running statistics. [`Model`] is the
/// single-precision instance used everywhere outside the gradient checks.
#[derive(Clone, Debug, PartialEq)]
pub struct Network<T> {
    arch: ArchSpec,
    pub blocks: Vec<ConvBlock<T>>,
    pub dense: Dense<T>,
    mode: Mode,
}

pub type Model = Network<f32>;

#[derive(Clone, Debug)]
struct BlockCache<T> {
    input: Tensor<T>,
    bn: BatchNormCache<T>,
    bn_out: Tensor<T>,
    pool: Option<PoolCache>,
}

/// Intermediates a forward pass keeps for the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache<T> {
    blocks: Vec<BlockCache<T>>,
    features: Tensor<T>,
    pub logits: Tensor<T>,
}

impl<T: Real> Network<T> {
    /// He-normal weights (std `sqrt(2 / fan_in)`), zero biases, unit gain,
    /// zero shift, running mean 0 and variance 1. Returned in infer mode.
    pub fn init(arch: ArchSpec, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut he = |fan_in: usize, len: usize| -> Vec<T> {
            let normal = Normal::new(0.0f64, (2.0 / fan_in as f64).sqrt()).expect("positive std");
            (0..len).map(|_| T::of(normal.sample(&mut rng))).collect()
        };
        let mut blocks = Vec::with_capacity(arch.blocks.len());
        let mut in_c = arch.input_c;
        for spec in &arch.blocks {
            let mut conv = Conv2d::zeros(in_c, spec.filters);
            conv.weights = he(in_c * KERNEL * KERNEL, conv.weights.len());
            blocks.push(ConvBlock { conv, bn: BatchNorm::new(spec.filters), pool: spec.pool });
            in_c = spec.filters;
        }
        let mut dense = Dense::zeros(arch.dense_inputs(), arch.num_classes);
        dense.weights = he(dense.inputs, dense.weights.len());
        Ok(Self { arch, blocks, dense, mode: Mode::Infer })
    }

    /// Assembles a network from explicit layers, checking shapes against `arch`.
    pub fn from_parts(arch: ArchSpec, blocks: Vec<ConvBlock<T>>, dense: Dense<T>) -> Result<Self> {
        arch.validate()?;
        let template = Self::init(arch.clone(), 0)?;
        let shapes_match = blocks.len() == template.blocks.len()
            && blocks.iter().zip(&template.blocks).all(|(b, t)| {
                b.pool == t.pool
                    && b.conv.in_channels == t.conv.in_channels
                    && b.conv.filters == t.conv.filters
                    && b.conv.weights.len() == t.conv.weights.len()
                    && b.conv.bias.len() == t.conv.bias.len()
                    && [&b.bn.gamma, &b.bn.beta, &b.bn.running_mean, &b.bn.running_var]
                        .iter()
                        .all(|v| v.len() == t.bn.channels())
            })
            && dense.inputs == template.dense.inputs
            && dense.outputs == template.dense.outputs
            && dense.weights.len() == template.dense.weights.len()
            && dense.bias.len() == template.dense.bias.len();
        if !shapes_match {
            return Err(Error::ShapeMismatch("layer shapes do not match the architecture".into()));
        }
        Ok(Self { arch, blocks, dense, mode: Mode::Infer })
    }

    pub fn arch(&self) -> &ArchSpec {
        &self.arch
    }

    pub fn num_classes(&self) -> usize {
        self.arch.num_classes
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    /// Learnable parameters in declaration order: per block conv weights,
    /// conv bias, gain, shift; then dense weights and bias.
    pub fn params(&self) -> Vec<&[T]> {
        let mut out: Vec<&[T]> = Vec::with_capacity(self.blocks.len() * 4 + 2);
        for b in &self.blocks {
            out.extend([&b.conv.weights[..], &b.conv.bias[..], &b.bn.gamma[..], &b.bn.beta[..]]);
        }
        out.extend([&self.dense.weights[..], &self.dense.bias[..]]);
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Vec<T>> {
        let mut out: Vec<&mut Vec<T>> = Vec::with_capacity(self.blocks.len() * 4 + 2);
        for b in &mut self.blocks {
            out.push(&mut b.conv.weights);
            out.push(&mut b.conv.bias);
            out.push(&mut b.bn.gamma);
            out.push(&mut b.bn.beta);
        }
        out.push(&mut self.dense.weights);
        out.push(&mut self.dense.bias);
        out
    }

    pub fn is_finite(&self) -> bool {
        self.params().iter().all(|p| p.iter().all(|v| v.is_finite()))
            && self.blocks.iter().all(|b| {
                b.bn.running_mean.iter().chain(&b.bn.running_var).all(|v| v.is_finite())
            })
    }

    fn check_input(&self, input: &Tensor<T>) -> Result<()> {
        let [_, c, h, w] = input.shape();
        let a = &self.arch;
        if (c, h, w) != (a.input_c, a.input_h, a.input_w) {
            return Err(Error::DimensionMismatch(format!(
                "input {h}x{w}x{c}, model expects {}x{}x{}",
                a.input_h, a.input_w, a.input_c
            )));
        }
        Ok(())
    }

    /// Class probabilities (`batch x K`) using the network's current mode.
    pub fn forward(&self, input: &Tensor<T>) -> Result<(Vec<T>, ForwardCache<T>)> {
        self.forward_mode(input, self.mode)
    }

    pub fn forward_mode(&self, input: &Tensor<T>, mode: Mode) -> Result<(Vec<T>, ForwardCache<T>)> {
        self.check_input(input)?;
        let mut x = input.clone();
        let mut caches = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let conv_out = block.conv.forward(&x)?;
            let (bn_out, bn) = block.bn.forward(&conv_out, mode)?;
            let act = relu_forward(&bn_out);
            let (next, pool) = if block.pool {
                let (p, cache) = maxpool2_forward(&act)?;
                (p, Some(cache))
            } else {
                (act, None)
            };
            caches.push(BlockCache { input: x, bn, bn_out, pool });
            x = next;
        }
        let features = x.flatten();
        let logits = self.dense.forward(&features)?;
        let probs = softmax(logits.data(), self.arch.num_classes);
        Ok((probs, ForwardCache { blocks: caches, features, logits }))
    }

    /// Parameter gradients, in [`Network::params`] order, given the gradient
    /// of a scalar loss with respect to the logits.
    pub fn backward(&self, cache: &ForwardCache<T>, grad_logits: &[T]) -> Result<Vec<Vec<T>>> {
        let grad_logits = Tensor::new(cache.logits.shape(), grad_logits.to_vec())?;
        let dense = self.dense.backward(&cache.features, &grad_logits)?;
        let mut per_block: Vec<[Vec<T>; 4]> = Vec::with_capacity(self.blocks.len());
        let last = cache.blocks.last().map(|b| b.bn_out.shape());
        let mut grad = match last {
            Some(shape) => {
                let pooled_shape = match &cache.blocks.last().unwrap().pool {
                    Some(_) => [shape[0], shape[1], shape[2] / 2, shape[3] / 2],
                    None => shape,
                };
                dense.input.reshape(pooled_shape)?
            }
            None => dense.input,
        };
        for (block, bc) in self.blocks.iter().zip(&cache.blocks).rev() {
            if let Some(pool) = &bc.pool {
                grad = maxpool2_backward(pool, &grad)?;
            }
            grad = relu_backward(&bc.bn_out, &grad)?;
            let bn = block.bn.backward(&bc.bn, &grad)?;
            let conv = block.conv.backward(&bc.input, &bn.input)?;
            grad = conv.input;
            per_block.push([conv.weights, conv.bias, bn.gamma, bn.beta]);
        }
        let mut out: Vec<Vec<T>> = per_block.into_iter().rev().flatten().collect();
        out.push(dense.weights);
        out.push(dense.bias);
        Ok(out)
    }

    /// Folds the batch statistics of a train-mode pass into the running
    /// statistics. No-op for infer-mode caches.
    pub fn update_running_stats(&mut self, cache: &ForwardCache<T>) {
        for (block, bc) in self.blocks.iter_mut().zip(&cache.blocks) {
            block.bn.update_running_stats(&bc.bn);
        }
    }
}

const PREDICT_CHUNK: usize = 64;

impl Model {
    /// Infer-mode class probabilities for each tile, `tiles.len() x K`
    /// row-major, whatever mode the model is in.
    pub fn predict<'a>(&self, tiles: impl IntoIterator<Item = &'a FloatImage>) -> Result<Vec<f32>> {
        let tiles: Vec<&FloatImage> = tiles.into_iter().collect();
        let mut probs = Vec::with_capacity(tiles.len() * self.num_classes());
        for chunk in tiles.chunks(PREDICT_CHUNK) {
            let batch = Tensor::from_tiles(chunk.iter().copied())?;
            probs.extend(self.forward_mode(&batch, Mode::Infer)?.0);
        }
        Ok(probs)
    }
}

/// He-initialized single-precision model.
pub fn init_model(arch: ArchSpec, seed: u64) -> Result<Model> {
    Model::init(arch, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_tiles(n: usize, h: usize, w: usize, c: usize, seed: u64) -> Vec<FloatImage> {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let data = (0..h * w * c).map(|_| rng.random::<f32>()).collect();
                FloatImage::new(h, w, c, data).unwrap()
            })
            .collect()
    }

    #[test]
    fn default_arch_dense_sizes() {
        assert_eq!(ArchSpec::default_for(20, 20, 3, 2).dense_inputs(), 800);
        assert_eq!(ArchSpec::default_for(10, 10, 1, 2).dense_inputs(), 128);
        let arch = ArchSpec::default_for(20, 20, 3, 2);
        assert_eq!(
            arch.blocks,
            vec![
                BlockSpec { filters: 8, pool: true },
                BlockSpec { filters: 16, pool: true },
                BlockSpec { filters: 32, pool: false }
            ]
        );
    }

    #[test]
    fn pooled_to_zero_is_rejected() {
        let arch = ArchSpec::default_for(3, 3, 1, 2);
        assert!(matches!(init_model(arch, 0), Err(Error::InvalidArch(_))));
        assert!(init_model(ArchSpec::default_for(20, 20, 3, 1), 0).is_err());
    }

    #[test]
    fn init_is_seed_deterministic() {
        let arch = ArchSpec::default_for(20, 20, 3, 2);
        let a = init_model(arch.clone(), 5).unwrap();
        let b = init_model(arch.clone(), 5).unwrap();
        let c = init_model(arch, 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.blocks.iter().all(|b| b.conv.bias.iter().all(|&v| v == 0.0)));
        assert!(a.blocks.iter().all(|b| b.bn.gamma.iter().all(|&v| v == 1.0)));
        assert!(a.blocks.iter().all(|b| b.bn.running_var.iter().all(|&v| v == 1.0)));
    }

    #[test]
    fn he_scale_is_plausible() {
        let model = init_model(ArchSpec::default_for(20, 20, 3, 2), 1).unwrap();
        let w = &model.blocks[2].conv.weights; // fan_in 16*9
        let n = w.len() as f64;
        let var = w.iter().map(|&v| f64::from(v).powi(2)).sum::<f64>() / n;
        let expected = 2.0 / 144.0;
        assert!((var / expected - 1.0).abs() < 0.15, "{var} vs {expected}");
    }

    #[test]
    fn probabilities_rows_sum_to_one() {
        let model = init_model(ArchSpec::default_for(10, 10, 1, 3), 2).unwrap();
        let tiles = random_tiles(7, 10, 10, 1, 3);
        let probs = model.predict(&tiles).unwrap();
        assert_eq!(probs.len(), 21);
        for row in probs.chunks(3) {
            let s: f32 = row.iter().sum();
            assert!((s - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn infer_forward_leaves_model_untouched() {
        let model = init_model(ArchSpec::default_for(10, 10, 1, 2), 2).unwrap();
        let before = model.clone();
        let batch = Tensor::from_tiles(&random_tiles(4, 10, 10, 1, 9)).unwrap();
        let (_, cache) = model.forward(&batch).unwrap();
        let mut after = model.clone();
        after.update_running_stats(&cache);
        assert_eq!(after, before);
    }

    #[test]
    fn fresh_model_is_near_uniform() {
        // Averaged over init seeds: a single He draw with untrained running
        // statistics can be confidently wrong (seed 0 peaks near 0.98).
        let mut total = 0.0f64;
        let mut count = 0usize;
        for seed in 0..8u64 {
            let model = init_model(ArchSpec::default_for(20, 20, 3, 2), seed).unwrap();
            let probs = model.predict(&random_tiles(16, 20, 20, 3, 100 + seed)).unwrap();
            for row in probs.chunks(2) {
                total += f64::from(row[0].max(row[1]));
                count += 1;
            }
        }
        let mean_max = total / count as f64;
        assert!(mean_max < 0.9, "mean max probability {mean_max}");
    }

    #[test]
    fn wrong_tile_size_is_rejected() {
        let model = init_model(ArchSpec::default_for(20, 20, 3, 2), 4).unwrap();
        let err = model.predict(&random_tiles(1, 10, 10, 3, 1)).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch(_)));
    }

    #[test]
    fn from_parts_checks_shapes() {
        let model = init_model(ArchSpec::default_for(10, 10, 1, 2), 0).unwrap();
        let rebuilt =
            Model::from_parts(model.arch().clone(), model.blocks.clone(), model.dense.clone()).unwrap();
        assert_eq!(rebuilt, model);
        let mut dense = model.dense.clone();
        dense.bias.push(0.0);
        assert!(Model::from_parts(model.arch().clone(), model.blocks.clone(), dense).is_err());
    }
}
