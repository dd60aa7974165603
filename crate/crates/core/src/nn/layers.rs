//! Layer forward and backward passes. Every layer is generic over [`Real`] so
//! the same code runs in single precision for training and in double
//! precision under the finite-difference checks.

use crate::error::{Error, Result};
use crate::nn::tensor::{Real, Tensor};

pub const KERNEL: usize = 3;
const TAPS: usize = KERNEL * KERNEL;

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// 3x3 convolution, stride 1, zero "same" padding.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv2d<T> {
    pub in_channels: usize,
    pub filters: usize,
    /// `filters x in_channels x 3 x 3`
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvGrads<T> {
    pub input: Tensor<T>,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

/// Unfolds one `c x h x w` sample into a `(c*9) x (h*w)` patch matrix.
fn im2col<T: Real>(sample: &[T], c: usize, h: usize, w: usize, cols: &mut [T]) {
    let hw = h * w;
    for ch in 0..c {
        let plane = &sample[ch * hw..(ch + 1) * hw];
        for ky in 0..KERNEL {
            for kx in 0..KERNEL {
                let row = &mut cols[((ch * KERNEL + ky) * KERNEL + kx) * hw..][..hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    for x in 0..w {
                        let sx = x as isize + kx as isize - 1;
                        row[y * w + x] = if sy < 0 || sy >= h as isize || sx < 0 || sx >= w as isize {
                            T::zero()
                        } else {
                            plane[sy as usize * w + sx as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters patch-matrix gradients back onto the sample.
fn col2im<T: Real>(cols: &[T], c: usize, h: usize, w: usize, sample: &mut [T]) {
    let hw = h * w;
    for ch in 0..c {
        for ky in 0..KERNEL {
            for kx in 0..KERNEL {
                let row = &cols[((ch * KERNEL + ky) * KERNEL + kx) * hw..][..hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    for x in 0..w {
                        let sx = x as isize + kx as isize - 1;
                        if sx >= 0 && sx < w as isize {
                            sample[ch * hw + sy as usize * w + sx as usize] += row[y * w + x];
                        }
                    }
                }
            }
        }
    }
}

impl<T: Real> Conv2d<T> {
    pub fn zeros(in_channels: usize, filters: usize) -> Self {
        Self {
            in_channels,
            filters,
            weights: vec![T::zero(); filters * in_channels * TAPS],
            bias: vec![T::zero(); filters],
        }
    }

    fn check(&self, input: &Tensor<T>) -> Result<()> {
        if input.channels() != self.in_channels {
            return Err(Error::ShapeMismatch(format!(
                "conv expects {} input channels, got {}",
                self.in_channels,
                input.channels()
            )));
        }
        if self.weights.len() != self.filters * self.in_channels * TAPS
            || self.bias.len() != self.filters
        {
            return Err(Error::ShapeMismatch("conv parameter lengths".into()));
        }
        Ok(())
    }

    pub fn forward(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        self.check(input)?;
        let [n, c, h, w] = input.shape();
        let hw = h * w;
        let k = c * TAPS;
        let mut out = Tensor::zeros([n, self.filters, h, w]);
        let mut cols = vec![T::zero(); k * hw];
        for b in 0..n {
            im2col(input.sample(b), c, h, w, &mut cols);
            let dst = &mut out.data_mut()[b * self.filters * hw..(b + 1) * self.filters * hw];
            for f in 0..self.filters {
                let row = &mut dst[f * hw..(f + 1) * hw];
                row.fill(self.bias[f]);
                for (kk, &wv) in self.weights[f * k..(f + 1) * k].iter().enumerate() {
                    for (o, &x) in row.iter_mut().zip(&cols[kk * hw..(kk + 1) * hw]) {
                        *o += wv * x;
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn backward(&self, input: &Tensor<T>, grad_out: &Tensor<T>) -> Result<ConvGrads<T>> {
        self.check(input)?;
        let [n, c, h, w] = input.shape();
        if grad_out.shape() != [n, self.filters, h, w] {
            return Err(Error::ShapeMismatch(format!(
                "conv output gradient {:?}, expected {:?}",
                grad_out.shape(),
                [n, self.filters, h, w]
            )));
        }
        let hw = h * w;
        let k = c * TAPS;
        let mut grad_input = Tensor::zeros(input.shape());
        let mut grad_w = vec![T::zero(); self.weights.len()];
        let mut grad_b = vec![T::zero(); self.filters];
        let mut cols = vec![T::zero(); k * hw];
        let mut grad_cols = vec![T::zero(); k * hw];
        for b in 0..n {
            im2col(input.sample(b), c, h, w, &mut cols);
            grad_cols.fill(T::zero());
            let g = grad_out.sample(b);
            for f in 0..self.filters {
                let gf = &g[f * hw..(f + 1) * hw];
                grad_b[f] += gf.iter().copied().sum();
                for kk in 0..k {
                    let col = &cols[kk * hw..(kk + 1) * hw];
                    grad_w[f * k + kk] += gf.iter().zip(col).map(|(&a, &x)| a * x).sum();
                    let wv = self.weights[f * k + kk];
                    for (gc, &a) in grad_cols[kk * hw..(kk + 1) * hw].iter_mut().zip(gf) {
                        *gc += wv * a;
                    }
                }
            }
            let len = c * hw;
            col2im(&grad_cols, c, h, w, &mut grad_input.data_mut()[b * len..(b + 1) * len]);
        }
        Ok(ConvGrads { input: grad_input, weights: grad_w, bias: grad_b })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics, running statistics updated.
    Train,
    /// Running statistics, no state change.
    Infer,
}

/// Per-channel batch normalization with learned gain and shift.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNorm<T> {
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
}

#[derive(Clone, Debug)]
pub struct BatchNormCache<T> {
    x_hat: Tensor<T>,
    inv_std: Vec<T>,
    /// Per-channel batch mean and biased variance (train mode only).
    batch_stats: Option<(Vec<T>, Vec<T>)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormGrads<T> {
    pub input: Tensor<T>,
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
}

impl<T: Real> BatchNorm<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: vec![T::one(); channels],
            beta: vec![T::zero(); channels],
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn forward(&self, input: &Tensor<T>, mode: Mode) -> Result<(Tensor<T>, BatchNormCache<T>)> {
        let [n, c, h, w] = input.shape();
        if c != self.channels() {
            return Err(Error::ShapeMismatch(format!(
                "batchnorm over {} channels, got {c}",
                self.channels()
            )));
        }
        let hw = h * w;
        let count = n * hw;
        let eps = BN_EPSILON;
        let (mean, var, batch_stats) = match mode {
            Mode::Train => {
                if count < 2 {
                    return Err(Error::BatchTooSmall(count));
                }
                let mut mean = vec![0.0f64; c];
                let mut var = vec![0.0f64; c];
                for ch in 0..c {
                    let values = (0..n).flat_map(|b| input.data()[(b * c + ch) * hw..][..hw].iter());
                    let m = values.clone().map(|v| v.as_f64()).sum::<f64>() / count as f64;
                    let v = values.map(|v| (v.as_f64() - m).powi(2)).sum::<f64>() / count as f64;
                    mean[ch] = m;
                    var[ch] = v;
                }
                let stats = (
                    mean.iter().map(|&m| T::of(m)).collect(),
                    var.iter().map(|&v| T::of(v)).collect(),
                );
                (mean, var, Some(stats))
            }
            Mode::Infer => (
                self.running_mean.iter().map(|v| v.as_f64()).collect(),
                self.running_var.iter().map(|v| v.as_f64()).collect(),
                None,
            ),
        };
        let inv_std: Vec<T> = var.iter().map(|&v| T::of(1.0 / (v + eps).sqrt())).collect();
        let mut x_hat = Tensor::zeros(input.shape());
        let mut out = Tensor::zeros(input.shape());
        for b in 0..n {
            for ch in 0..c {
                let at = (b * c + ch) * hw;
                let m = T::of(mean[ch]);
                for i in at..at + hw {
                    let xh = (input.data()[i] - m) * inv_std[ch];
                    x_hat.data_mut()[i] = xh;
                    out.data_mut()[i] = self.gamma[ch] * xh + self.beta[ch];
                }
            }
        }
        Ok((out, BatchNormCache { x_hat, inv_std, batch_stats }))
    }

    /// Gradients through whichever statistics the forward pass used.
    pub fn backward(&self, cache: &BatchNormCache<T>, grad_out: &Tensor<T>) -> Result<BatchNormGrads<T>> {
        if grad_out.shape() != cache.x_hat.shape() {
            return Err(Error::ShapeMismatch("batchnorm output gradient".into()));
        }
        let [n, c, h, w] = grad_out.shape();
        let hw = h * w;
        let count = T::of((n * hw) as f64);
        let mut grad_gamma = vec![T::zero(); c];
        let mut grad_beta = vec![T::zero(); c];
        for b in 0..n {
            for ch in 0..c {
                let at = (b * c + ch) * hw;
                for i in at..at + hw {
                    let g = grad_out.data()[i];
                    grad_beta[ch] += g;
                    grad_gamma[ch] += g * cache.x_hat.data()[i];
                }
            }
        }
        let mut grad_input = Tensor::zeros(grad_out.shape());
        for b in 0..n {
            for ch in 0..c {
                let at = (b * c + ch) * hw;
                let scale = self.gamma[ch] * cache.inv_std[ch];
                for i in at..at + hw {
                    let g = grad_out.data()[i];
                    grad_input.data_mut()[i] = if cache.batch_stats.is_some() {
                        // dx = gamma/sigma * (dy - mean(dy) - x_hat * mean(dy * x_hat))
                        scale
                            * (g - grad_beta[ch] / count
                                - cache.x_hat.data()[i] * grad_gamma[ch] / count)
                    } else {
                        scale * g
                    };
                }
            }
        }
        Ok(BatchNormGrads { input: grad_input, gamma: grad_gamma, beta: grad_beta })
    }

    /// `running = 0.9 * running + 0.1 * batch`, using the batch statistics a
    /// train-mode forward pass recorded.
    pub fn update_running_stats(&mut self, cache: &BatchNormCache<T>) {
        if let Some((mean, var)) = &cache.batch_stats {
            let m = T::of(BN_MOMENTUM);
            let keep = T::one() - m;
            for ch in 0..self.channels() {
                self.running_mean[ch] = keep * self.running_mean[ch] + m * mean[ch];
                self.running_var[ch] = keep * self.running_var[ch] + m * var[ch];
            }
        }
    }
}

pub fn relu_forward<T: Real>(input: &Tensor<T>) -> Tensor<T> {
    input.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Passes the gradient where the forward input was positive.
pub fn relu_backward<T: Real>(input: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    if input.shape() != grad_out.shape() {
        return Err(Error::ShapeMismatch("relu gradient".into()));
    }
    let data = input
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&x, &g)| if x > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::new(input.shape(), data)
}

/// Winning input index for every pooled output, plus the input shape.
#[derive(Clone, Debug, PartialEq)]
pub struct PoolCache {
    input_shape: [usize; 4],
    argmax: Vec<usize>,
}

/// 2x2 max pooling, stride 2. Odd trailing rows/columns are dropped; ties go
/// to the first window position in raster order.
pub fn maxpool2_forward<T: Real>(input: &Tensor<T>) -> Result<(Tensor<T>, PoolCache)> {
    let [n, c, h, w] = input.shape();
    if h < 2 || w < 2 {
        return Err(Error::ShapeMismatch(format!("max pool needs at least 2x2, got {h}x{w}")));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Tensor::zeros([n, c, oh, ow]);
    let mut argmax = Vec::with_capacity(n * c * oh * ow);
    let x = input.data();
    for plane in 0..n * c {
        let base = plane * h * w;
        for y in 0..oh {
            for xo in 0..ow {
                let mut best = base + 2 * y * w + 2 * xo;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let i = base + (2 * y + dy) * w + 2 * xo + dx;
                    if x[i] > x[best] {
                        best = i;
                    }
                }
                out.data_mut()[(plane * oh + y) * ow + xo] = x[best];
                argmax.push(best);
            }
        }
    }
    Ok((out, PoolCache { input_shape: input.shape(), argmax }))
}

pub fn maxpool2_backward<T: Real>(cache: &PoolCache, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    if grad_out.data().len() != cache.argmax.len() {
        return Err(Error::ShapeMismatch("max pool gradient".into()));
    }
    let mut grad = Tensor::zeros(cache.input_shape);
    for (&i, &g) in cache.argmax.iter().zip(grad_out.data()) {
        grad.data_mut()[i] += g;
    }
    Ok(grad)
}

/// Fully-connected layer, `logits = W x + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense<T> {
    pub inputs: usize,
    pub outputs: usize,
    /// `outputs x inputs`
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseGrads<T> {
    pub input: Tensor<T>,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> Dense<T> {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![T::zero(); inputs * outputs],
            bias: vec![T::zero(); outputs],
        }
    }

    fn check(&self, input: &Tensor<T>) -> Result<()> {
        if input.sample_len() != self.inputs {
            return Err(Error::ShapeMismatch(format!(
                "dense expects {} features, got {}",
                self.inputs,
                input.sample_len()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        self.check(input)?;
        let n = input.batch();
        let mut out = Vec::with_capacity(n * self.outputs);
        for b in 0..n {
            let x = input.sample(b);
            for k in 0..self.outputs {
                let row = &self.weights[k * self.inputs..(k + 1) * self.inputs];
                out.push(self.bias[k] + row.iter().zip(x).map(|(&wv, &xv)| wv * xv).sum::<T>());
            }
        }
        Tensor::new([n, self.outputs, 1, 1], out)
    }

    pub fn backward(&self, input: &Tensor<T>, grad_out: &Tensor<T>) -> Result<DenseGrads<T>> {
        self.check(input)?;
        let n = input.batch();
        if grad_out.data().len() != n * self.outputs {
            return Err(Error::ShapeMismatch("dense output gradient".into()));
        }
        let mut grad_w = vec![T::zero(); self.weights.len()];
        let mut grad_b = vec![T::zero(); self.outputs];
        let mut grad_in = Tensor::zeros(input.shape());
        for b in 0..n {
            let x = input.sample(b);
            let g = &grad_out.data()[b * self.outputs..(b + 1) * self.outputs];
            let gx = &mut grad_in.data_mut()[b * self.inputs..(b + 1) * self.inputs];
            for (k, &gk) in g.iter().enumerate() {
                grad_b[k] += gk;
                let row = &self.weights[k * self.inputs..(k + 1) * self.inputs];
                let grow = &mut grad_w[k * self.inputs..(k + 1) * self.inputs];
                for d in 0..self.inputs {
                    grow[d] += gk * x[d];
                    gx[d] += gk * row[d];
                }
            }
        }
        Ok(DenseGrads { input: grad_in, weights: grad_w, bias: grad_b })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SoftmaxXent<T> {
    /// Mean negative log-likelihood over the batch.
    pub loss: T,
    /// `batch x classes`, rows sum to one.
    pub probs: Vec<T>,
    /// `(probs - onehot) / batch`
    pub grad_logits: Vec<T>,
}

/// Row-wise softmax with the row maximum subtracted first.
pub fn softmax<T: Real>(logits: &[T], classes: usize) -> Vec<T> {
    let mut probs = Vec::with_capacity(logits.len());
    for row in logits.chunks_exact(classes) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let exps: Vec<T> = row.iter().map(|&z| (z - max).exp()).collect();
        let total: T = exps.iter().copied().sum();
        probs.extend(exps.into_iter().map(|e| e / total));
    }
    probs
}

pub fn softmax_xent<T: Real>(logits: &[T], classes: usize, labels: &[usize]) -> Result<SoftmaxXent<T>> {
    if classes == 0 || logits.len() != labels.len() * classes {
        return Err(Error::ShapeMismatch(format!(
            "{} logits for {} labels x {classes} classes",
            logits.len(),
            labels.len()
        )));
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::LabelOutOfRange { label, classes });
    }
    let n = labels.len();
    let probs = softmax(logits, classes);
    let scale = T::one() / T::of(n as f64);
    let mut loss = T::zero();
    let mut grad = probs.clone();
    for (b, &label) in labels.iter().enumerate() {
        // log p = z - max - log(sum exp(z - max)), computed without forming p.
        let row = &logits[b * classes..(b + 1) * classes];
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = row.iter().map(|&z| (z - max).exp()).sum::<T>().ln();
        loss -= row[label] - max - lse;
        grad[b * classes + label] -= T::one();
    }
    for g in &mut grad {
        *g *= scale;
    }
    Ok(SoftmaxXent { loss: loss * scale, probs, grad_logits: grad })
}

/// Index of the largest entry; ties resolve to the lowest index.
pub fn argmax<T: Real>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}
