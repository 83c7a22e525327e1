//! Dense, convolutional, pooling, normalisation and dropout layers.

use super::{NnError, NnResult};
use crate::autodiff::{sigmoid, NodeId, TapeBuilder};
use crate::rng::Rng;
use crate::tensor::Tensor;
use rand::Rng as _;

/// Element-wise activation; `Softmax` acts on the whole vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Linear,
    Sigmoid,
    Tanh,
    Relu,
    Softmax,
}

impl Activation {
    fn apply_scalar(self, x: f64) -> f64 {
        match self {
            Activation::Linear => x,
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
            Activation::Softmax => unreachable!("softmax is not element-wise"),
        }
    }

    fn apply_vec(self, mut z: Vec<f64>) -> NnResult<Vec<f64>> {
        if self == Activation::Softmax {
            return Ok(softmax(&Tensor::from_vec(z))?.into_data());
        }
        for v in &mut z {
            *v = self.apply_scalar(*v);
        }
        Ok(z)
    }

    fn apply_on(self, b: &mut TapeBuilder, z: Vec<NodeId>) -> Vec<NodeId> {
        match self {
            Activation::Linear => z,
            Activation::Sigmoid => z.into_iter().map(|n| b.sigmoid(n)).collect(),
            Activation::Tanh => z.into_iter().map(|n| b.tanh(n)).collect(),
            Activation::Relu => z.into_iter().map(|n| b.relu(n)).collect(),
            Activation::Softmax => softmax_on(b, &z),
        }
    }
}

/// Fully connected layer `σ(Wx + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// `[out × in]`.
    pub weights: Tensor,
    /// `[out]`.
    pub biases: Tensor,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn new(weights: Tensor, biases: Tensor, activation: Activation) -> NnResult<Self> {
        if weights.shape().len() != 2 || weights.shape()[0] != biases.len() {
            return Err(NnError::Shape(format!(
                "weights {:?} incompatible with biases of length {}",
                weights.shape(),
                biases.len()
            )));
        }
        Ok(DenseLayer {
            weights,
            biases,
            activation,
        })
    }

    /// Fresh layer with `scheme`-initialised weights and zero biases.
    pub fn init(
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        scheme: super::InitScheme,
        rng: &mut Rng,
    ) -> Self {
        DenseLayer {
            weights: super::init_weights([out_dim, in_dim], scheme, rng),
            biases: Tensor::zeros([out_dim]),
            activation,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn out_dim(&self) -> usize {
        self.weights.shape()[0]
    }
}

/// `σ(Wx + b)` on plain tensors.
pub fn dense_forward(x: &Tensor, layer: &DenseLayer) -> NnResult<Tensor> {
    let (out_dim, in_dim) = (layer.out_dim(), layer.in_dim());
    if x.len() != in_dim {
        return Err(NnError::Shape(format!(
            "input length {} vs layer input extent {in_dim}",
            x.len()
        )));
    }
    let mut z = Vec::with_capacity(out_dim);
    for o in 0..out_dim {
        let row = layer.weights.row(o);
        let acc: f64 = row.iter().zip(x.data()).map(|(w, v)| w * v).sum();
        z.push(acc + layer.biases.data()[o]);
    }
    Ok(Tensor::from_vec(layer.activation.apply_vec(z)?))
}

/// Tape version of [`dense_forward`]; `w` is row-major `[out × in]`.
pub fn dense_on(
    b: &mut TapeBuilder,
    x: &[NodeId],
    w: &[NodeId],
    bias: &[NodeId],
    activation: Activation,
) -> Vec<NodeId> {
    let out_dim = bias.len();
    let in_dim = x.len();
    debug_assert_eq!(w.len(), out_dim * in_dim);
    let mut z = Vec::with_capacity(out_dim);
    for o in 0..out_dim {
        let row = &w[o * in_dim..(o + 1) * in_dim];
        let dot = b.dot(row, x);
        z.push(b.add(dot, bias[o]));
    }
    activation.apply_on(b, z)
}

/// 2-D convolution layer (cross-correlation orientation, zero padding).
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2DLayer {
    /// `[out-ch × in-ch × k × k]`.
    pub kernels: Tensor,
    /// `[out-ch]`.
    pub biases: Tensor,
    pub stride: usize,
    pub padding: usize,
    pub activation: Activation,
}

impl Conv2DLayer {
    pub fn new(
        kernels: Tensor,
        biases: Tensor,
        stride: usize,
        padding: usize,
        activation: Activation,
    ) -> NnResult<Self> {
        if kernels.shape().len() != 4 || kernels.shape()[0] != biases.len() {
            return Err(NnError::Shape(format!(
                "kernels {:?} incompatible with biases of length {}",
                kernels.shape(),
                biases.len()
            )));
        }
        assert!(stride > 0, "stride must be positive");
        Ok(Conv2DLayer {
            kernels,
            biases,
            stride,
            padding,
            activation,
        })
    }

    pub fn out_channels(&self) -> usize {
        self.kernels.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.kernels.shape()[1]
    }

    pub fn kernel_size(&self) -> usize {
        self.kernels.shape()[2]
    }

    fn out_extent(&self, extent: usize) -> NnResult<usize> {
        let k = self.kernel_size();
        let padded = extent + 2 * self.padding;
        if padded < k {
            return Err(NnError::EmptyConvOutput);
        }
        Ok((padded - k) / self.stride + 1)
    }
}

/// Slides the kernels over the zero-padded image; `image` is `[c × h × w]`.
pub fn conv2d(image: &Tensor, layer: &Conv2DLayer) -> NnResult<Tensor> {
    let shape = image.shape();
    if shape.len() != 3 || shape[0] != layer.in_channels() {
        return Err(NnError::Shape(format!(
            "image {shape:?} vs kernel in-channels {}",
            layer.in_channels()
        )));
    }
    let (h, w) = (shape[1], shape[2]);
    let (oh, ow) = (layer.out_extent(h)?, layer.out_extent(w)?);
    let k = layer.kernel_size();
    let (oc, ic) = (layer.out_channels(), layer.in_channels());
    let mut out = Tensor::zeros([oc, oh, ow]);
    for o in 0..oc {
        for i in 0..oh {
            for j in 0..ow {
                let mut acc = layer.biases.data()[o];
                for c in 0..ic {
                    for m in 0..k {
                        for n in 0..k {
                            let y = (i * layer.stride + m) as isize - layer.padding as isize;
                            let x = (j * layer.stride + n) as isize - layer.padding as isize;
                            if y >= 0 && x >= 0 && (y as usize) < h && (x as usize) < w {
                                let kv = layer.kernels.data()
                                    [((o * ic + c) * k + m) * k + n];
                                acc += kv * image.at3(c, y as usize, x as usize);
                            }
                        }
                    }
                }
                let v = if layer.activation == Activation::Softmax {
                    return Err(NnError::Shape("softmax is not a conv activation".into()));
                } else {
                    layer.activation.apply_scalar(acc)
                };
                out.set3(o, i, j, v);
            }
        }
    }
    Ok(out)
}

/// Tape version of [`conv2d`]; `image` ids are `[c × h × w]` row-major,
/// `kernels` ids `[oc × ic × k × k]`, one bias id per output channel.
#[allow(clippy::too_many_arguments)]
pub fn conv2d_on(
    b: &mut TapeBuilder,
    image: &[NodeId],
    image_shape: [usize; 3],
    kernels: &[NodeId],
    bias: &[NodeId],
    k: usize,
    stride: usize,
    padding: usize,
    activation: Activation,
) -> (Vec<NodeId>, [usize; 3]) {
    let [ic, h, w] = image_shape;
    let oc = bias.len();
    let oh = (h + 2 * padding - k) / stride + 1;
    let ow = (w + 2 * padding - k) / stride + 1;
    let mut out = Vec::with_capacity(oc * oh * ow);
    for o in 0..oc {
        for i in 0..oh {
            for j in 0..ow {
                let mut prods = vec![bias[o]];
                for c in 0..ic {
                    for m in 0..k {
                        for n in 0..k {
                            let y = (i * stride + m) as isize - padding as isize;
                            let x = (j * stride + n) as isize - padding as isize;
                            if y >= 0 && x >= 0 && (y as usize) < h && (x as usize) < w {
                                let kv = kernels[((o * ic + c) * k + m) * k + n];
                                let px = image[(c * h + y as usize) * w + x as usize];
                                prods.push(b.mul(kv, px));
                            }
                        }
                    }
                }
                let z = b.sum(&prods);
                out.push(z);
            }
        }
    }
    let out = activation.apply_on(b, out);
    (out, [oc, oh, ow])
}

/// Max pooling with a square `window` and `stride`; `map` is `[c × h × w]`.
pub fn max_pool(map: &Tensor, window: usize, stride: usize) -> NnResult<Tensor> {
    let shape = map.shape();
    if shape.len() != 3 || shape[1] < window || shape[2] < window {
        return Err(NnError::Shape(format!(
            "cannot pool {shape:?} with window {window}"
        )));
    }
    assert!(window > 0 && stride > 0);
    let (c, h, w) = (shape[0], shape[1], shape[2]);
    let oh = (h - window) / stride + 1;
    let ow = (w - window) / stride + 1;
    let mut out = Tensor::zeros([c, oh, ow]);
    for ch in 0..c {
        for i in 0..oh {
            for j in 0..ow {
                let mut best = f64::NEG_INFINITY;
                for m in 0..window {
                    for n in 0..window {
                        best = best.max(map.at3(ch, i * stride + m, j * stride + n));
                    }
                }
                out.set3(ch, i, j, best);
            }
        }
    }
    Ok(out)
}

/// Tape version of [`max_pool`].
pub fn max_pool_on(
    b: &mut TapeBuilder,
    map: &[NodeId],
    map_shape: [usize; 3],
    window: usize,
    stride: usize,
) -> (Vec<NodeId>, [usize; 3]) {
    let [c, h, w] = map_shape;
    let oh = (h - window) / stride + 1;
    let ow = (w - window) / stride + 1;
    let mut out = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        for i in 0..oh {
            for j in 0..ow {
                let mut best = map[(ch * h + i * stride) * w + j * stride];
                for m in 0..window {
                    for n in 0..window {
                        if m == 0 && n == 0 {
                            continue;
                        }
                        let v = map[(ch * h + i * stride + m) * w + j * stride + n];
                        best = b.max(best, v);
                    }
                }
                out.push(best);
            }
        }
    }
    (out, [c, oh, ow])
}

/// Stable softmax: positive entries summing to 1.
pub fn softmax(z: &Tensor) -> NnResult<Tensor> {
    if z.is_empty() || z.data().iter().any(|v| !v.is_finite()) {
        return Err(NnError::NonFiniteSoftmax);
    }
    let m = z.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.data().iter().map(|v| (v - m).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(Tensor::from_vec(exps.iter().map(|e| e / total).collect()))
}

/// Tape version of [`softmax`], with max-subtraction for stability.
pub fn softmax_on(b: &mut TapeBuilder, z: &[NodeId]) -> Vec<NodeId> {
    let mut m = z[0];
    for &v in &z[1..] {
        m = b.max(m, v);
    }
    let exps: Vec<NodeId> = z
        .iter()
        .map(|&v| {
            let shifted = b.sub(v, m);
            b.exp(shifted)
        })
        .collect();
    let total = b.sum(&exps);
    exps.into_iter().map(|e| b.div(e, total)).collect()
}

/// Inverted-dropout mask: entries are `0` or `1/(1−rate)`, so the expected
/// value of the masked activations is unchanged. Training mode only; at
/// inference no mask is applied.
pub fn dropout_mask(
    shape: impl Into<Vec<usize>>,
    rate: f64,
    rng: &mut Rng,
) -> NnResult<Tensor> {
    if !(0.0..1.0).contains(&rate) {
        return Err(NnError::BadDropoutRate);
    }
    let keep = 1.0 - rate;
    let mut t = Tensor::zeros(shape);
    for v in t.data_mut() {
        *v = if rng.random::<f64>() < keep {
            1.0 / keep
        } else {
            0.0
        };
    }
    Ok(t)
}

/// Batch normalisation with running statistics for inference.
///
/// Training mode normalises each feature over the batch and updates the
/// running mean/variance with momentum 0.9; inference mode uses the frozen
/// statistics. The learned affine (γ, β) is applied after normalisation.
#[derive(Debug, Clone)]
pub struct BatchNormLayer {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub eps: f64,
}

/// Fresh batch-norm layer over `features` channels (γ = 1, β = 0).
pub fn batch_norm_layer(features: usize) -> BatchNormLayer {
    BatchNormLayer {
        gamma: vec![1.0; features],
        beta: vec![0.0; features],
        running_mean: vec![0.0; features],
        running_var: vec![1.0; features],
        momentum: 0.9,
        eps: 1e-8,
    }
}

impl BatchNormLayer {
    /// Normalises a `[n × features]` batch in training mode, advancing the
    /// running statistics.
    pub fn forward_train(&mut self, batch: &Tensor) -> NnResult<Tensor> {
        let (n, f) = self.check(batch)?;
        let mut out = batch.clone();
        for j in 0..f {
            let mean: f64 = (0..n).map(|i| batch.at2(i, j)).sum::<f64>() / n as f64;
            let var: f64 =
                (0..n).map(|i| (batch.at2(i, j) - mean).powi(2)).sum::<f64>() / n as f64;
            self.running_mean[j] = self.momentum * self.running_mean[j] + (1.0 - self.momentum) * mean;
            self.running_var[j] = self.momentum * self.running_var[j] + (1.0 - self.momentum) * var;
            let denom = (var + self.eps).sqrt();
            for i in 0..n {
                let norm = (batch.at2(i, j) - mean) / denom;
                out.set2(i, j, self.gamma[j] * norm + self.beta[j]);
            }
        }
        Ok(out)
    }

    /// Normalises with the frozen running statistics.
    pub fn forward_eval(&self, batch: &Tensor) -> NnResult<Tensor> {
        let (n, f) = self.check(batch)?;
        let mut out = batch.clone();
        for j in 0..f {
            let denom = (self.running_var[j] + self.eps).sqrt();
            for i in 0..n {
                let norm = (batch.at2(i, j) - self.running_mean[j]) / denom;
                out.set2(i, j, self.gamma[j] * norm + self.beta[j]);
            }
        }
        Ok(out)
    }

    fn check(&self, batch: &Tensor) -> NnResult<(usize, usize)> {
        let s = batch.shape();
        if s.len() != 2 || s[1] != self.gamma.len() {
            return Err(NnError::Shape(format!(
                "batch {s:?} vs {} features",
                self.gamma.len()
            )));
        }
        Ok((s[0], s[1]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::TapeBuilder;

    fn rand_tensor(shape: &[usize], rng: &mut Rng) -> Tensor {
        let mut t = Tensor::zeros(shape.to_vec());
        for v in t.data_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
        t
    }

    #[test]
    fn dense_zero_weights_sigmoid_gives_half() {
        let layer = DenseLayer::new(
            Tensor::zeros([3, 2]),
            Tensor::zeros([3]),
            Activation::Sigmoid,
        )
        .unwrap();
        let y = dense_forward(&Tensor::from_vec(vec![0.7, -0.4]), &layer).unwrap();
        for &v in y.data() {
            assert_eq!(v, 0.5);
        }
    }

    #[test]
    fn dense_identity_passes_input_through() {
        let layer =
            DenseLayer::new(Tensor::eye(3), Tensor::zeros([3]), Activation::Linear).unwrap();
        let x = Tensor::from_vec(vec![1.0, -2.0, 0.25]);
        assert_eq!(dense_forward(&x, &layer).unwrap().data(), x.data());
    }

    #[test]
    fn dense_matches_explicit_matrix_product() {
        let mut rng = crate::rng::seeded(60);
        let w = rand_tensor(&[3, 2], &mut rng);
        let bias = rand_tensor(&[3], &mut rng);
        let layer = DenseLayer::new(w.clone(), bias.clone(), Activation::Linear).unwrap();
        let x = rand_tensor(&[2], &mut rng);
        let y = dense_forward(&x, &layer).unwrap();
        for o in 0..3 {
            let want =
                w.at2(o, 0) * x.data()[0] + w.at2(o, 1) * x.data()[1] + bias.data()[o];
            assert!((y.data()[o] - want).abs() <= 1e-12);
        }
    }

    #[test]
    fn dense_rejects_wrong_input_length() {
        let layer =
            DenseLayer::new(Tensor::zeros([3, 2]), Tensor::zeros([3]), Activation::Linear)
                .unwrap();
        assert!(dense_forward(&Tensor::from_vec(vec![1.0; 5]), &layer).is_err());
    }

    #[test]
    fn conv_output_shape_5x5_kernel_2x2() {
        let layer = Conv2DLayer::new(
            Tensor::filled([1, 1, 2, 2], 1.0),
            Tensor::zeros([1]),
            1,
            0,
            Activation::Linear,
        )
        .unwrap();
        let img = Tensor::zeros([1, 5, 5]);
        let out = conv2d(&img, &layer).unwrap();
        assert_eq!(out.shape(), &[1, 4, 4]);
    }

    #[test]
    fn conv_one_by_one_kernel_scales() {
        let layer = Conv2DLayer::new(
            Tensor::filled([1, 1, 1, 1], 2.0),
            Tensor::zeros([1]),
            1,
            0,
            Activation::Linear,
        )
        .unwrap();
        let img = Tensor::filled([1, 3, 3], 1.0);
        let out = conv2d(&img, &layer).unwrap();
        assert_eq!(out.shape(), &[1, 3, 3]);
        assert!(out.data().iter().all(|&v| v == 2.0));
    }

    #[test]
    fn conv_identity_kernel_is_identity_per_channel() {
        let mut rng = crate::rng::seeded(61);
        let mut kernels = Tensor::zeros([2, 2, 1, 1]);
        kernels.data_mut()[0] = 1.0; // o=0 reads c=0
        kernels.data_mut()[3] = 1.0; // o=1 reads c=1
        let layer =
            Conv2DLayer::new(kernels, Tensor::zeros([2]), 1, 0, Activation::Linear).unwrap();
        let img = rand_tensor(&[2, 4, 4], &mut rng);
        let out = conv2d(&img, &layer).unwrap();
        assert_eq!(out.data(), img.data());
    }

    #[test]
    fn conv_sobel_matches_double_sum_oracle() {
        let mut rng = crate::rng::seeded(62);
        let sobel_x = [-1.0, 0.0, 1.0, -2.0, 0.0, 2.0, -1.0, 0.0, 1.0];
        let layer = Conv2DLayer::new(
            Tensor::new([1, 1, 3, 3], sobel_x.to_vec()).unwrap(),
            Tensor::zeros([1]),
            1,
            0,
            Activation::Linear,
        )
        .unwrap();
        let img = rand_tensor(&[1, 6, 6], &mut rng);
        let out = conv2d(&img, &layer).unwrap();
        assert_eq!(out.shape(), &[1, 4, 4]);
        for i in 0..4 {
            for j in 0..4 {
                let mut want = 0.0;
                for m in 0..3 {
                    for n in 0..3 {
                        want += sobel_x[m * 3 + n] * img.at3(0, i + m, j + n);
                    }
                }
                assert!((out.at3(0, i, j) - want).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn conv_rejects_too_small_input() {
        let layer = Conv2DLayer::new(
            Tensor::zeros([1, 1, 3, 3]),
            Tensor::zeros([1]),
            1,
            0,
            Activation::Linear,
        )
        .unwrap();
        assert!(matches!(
            conv2d(&Tensor::zeros([1, 2, 2]), &layer),
            Err(NnError::EmptyConvOutput)
        ));
    }

    #[test]
    fn max_pool_worked_example() {
        let input = Tensor::new(
            [1, 4, 4],
            vec![
                1., 3., 2., 4., //
                5., 6., 7., 8., //
                4., 2., 1., 3., //
                9., 8., 6., 5.,
            ],
        )
        .unwrap();
        let out = max_pool(&input, 2, 2).unwrap();
        assert_eq!(out.data(), &[6., 8., 9., 6.]);
    }

    #[test]
    fn max_pool_constant_input() {
        let out = max_pool(&Tensor::filled([1, 4, 4], 3.5), 2, 2).unwrap();
        assert!(out.data().iter().all(|&v| v == 3.5));
    }

    #[test]
    fn max_pool_matches_window_scan_oracle() {
        let mut rng = crate::rng::seeded(63);
        let map = rand_tensor(&[1, 8, 8], &mut rng);
        let out = max_pool(&map, 2, 2).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let mut best = f64::NEG_INFINITY;
                for m in 0..2 {
                    for n in 0..2 {
                        best = best.max(map.at3(0, 2 * i + m, 2 * j + n));
                    }
                }
                assert_eq!(out.at3(0, i, j), best);
            }
        }
    }

    #[test]
    fn softmax_symmetry_and_shift_invariance() {
        let a = softmax(&Tensor::from_vec(vec![0.0, 0.0])).unwrap();
        assert_eq!(a.data(), &[0.5, 0.5]);
        let b = softmax(&Tensor::from_vec(vec![1000.0, 1000.0])).unwrap();
        assert_eq!(b.data(), &[0.5, 0.5]);
        let c = softmax(&Tensor::from_vec(vec![
            1.0f64.ln(),
            2.0f64.ln(),
            3.0f64.ln(),
        ]))
        .unwrap();
        let want = [1.0 / 6.0, 2.0 / 6.0, 3.0 / 6.0];
        for (g, w) in c.data().iter().zip(want) {
            assert!((g - w).abs() <= 1e-12);
        }
    }

    #[test]
    fn softmax_sums_to_one_and_ignores_offsets() {
        let mut rng = crate::rng::seeded(64);
        for _ in 0..50 {
            let z: Vec<f64> = (0..6).map(|_| rng.random_range(-30.0..30.0)).collect();
            let shifted: Vec<f64> = z.iter().map(|v| v + 13.7).collect();
            let a = softmax(&Tensor::from_vec(z)).unwrap();
            let b = softmax(&Tensor::from_vec(shifted)).unwrap();
            assert!((a.data().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            for (x, y) in a.data().iter().zip(b.data()) {
                assert!((x - y).abs() <= 1e-12);
            }
        }
        assert!(softmax(&Tensor::from_vec(vec![f64::NAN])).is_err());
    }

    #[test]
    fn dropout_rate_zero_is_all_ones() {
        let mut rng = crate::rng::seeded(65);
        let m = dropout_mask([10], 0.0, &mut rng).unwrap();
        assert!(m.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn dropout_mask_mean_is_one() {
        let mut rng = crate::rng::seeded(66);
        let m = dropout_mask([100_000], 0.5, &mut rng).unwrap();
        let mean = m.data().iter().sum::<f64>() / m.len() as f64;
        assert!((mean - 1.0).abs() <= 0.02, "mean {mean}");
    }

    #[test]
    fn dropout_rejects_rate_one() {
        let mut rng = crate::rng::seeded(67);
        assert!(dropout_mask([4], 1.0, &mut rng).is_err());
    }

    #[test]
    fn batch_norm_whitens_and_freezes() {
        let mut rng = crate::rng::seeded(68);
        let mut layer = batch_norm_layer(3);
        let n = 256;
        let mut batch = Tensor::zeros([n, 3]);
        for i in 0..n {
            for j in 0..3 {
                batch.set2(i, j, rng.random_range(-2.0..2.0) + j as f64);
            }
        }
        let out = layer.forward_train(&batch).unwrap();
        for j in 0..3 {
            let mean: f64 = (0..n).map(|i| out.at2(i, j)).sum::<f64>() / n as f64;
            let var: f64 = (0..n).map(|i| (out.at2(i, j) - mean).powi(2)).sum::<f64>() / n as f64;
            assert!(mean.abs() <= 1e-10, "mean {mean}");
            assert!((var - 1.0).abs() <= 1e-6, "var {var}");
        }
        // inference path uses the running stats and is deterministic
        let a = layer.forward_eval(&batch).unwrap();
        let b = layer.forward_eval(&batch).unwrap();
        assert_eq!(a.data(), b.data());
    }

    // Tape paths agree with the numeric paths, and their gradients pass the
    // finite-difference check.
    #[test]
    fn tape_dense_matches_numeric_and_check_grad() {
        let mut rng = crate::rng::seeded(69);
        for &(out_dim, in_dim, act) in &[
            (3usize, 2usize, Activation::Sigmoid),
            (2, 4, Activation::Tanh),
            (4, 3, Activation::Relu),
            (3, 3, Activation::Softmax),
            (2, 2, Activation::Linear),
        ] {
            let mut b = TapeBuilder::new();
            let w_ids = b.inputs(out_dim * in_dim);
            let bias_ids = b.inputs(out_dim);
            let x_ids = b.inputs(in_dim);
            let y = dense_on(&mut b, &x_ids, &w_ids, &bias_ids, act);
            let out = b.sum(&y);
            let tape = b.finish(out);

            let w = rand_tensor(&[out_dim, in_dim], &mut rng);
            let bias = rand_tensor(&[out_dim], &mut rng);
            let x = rand_tensor(&[in_dim], &mut rng);
            let layer = DenseLayer::new(w.clone(), bias.clone(), act).unwrap();
            let numeric: f64 = dense_forward(&x, &layer).unwrap().data().iter().sum();

            let inputs: Vec<f64> = w
                .data()
                .iter()
                .chain(bias.data())
                .chain(x.data())
                .copied()
                .collect();
            let taped = tape.evaluate(&inputs).unwrap();
            assert!((numeric - taped).abs() <= 1e-12, "{act:?}");

            let err = tape.check_grad(&inputs, 1e-5).unwrap();
            assert!(err <= 1e-5, "{act:?}: check_grad {err}");
        }
    }

    #[test]
    fn tape_conv_and_pool_match_numeric_and_check_grad() {
        let mut rng = crate::rng::seeded(70);
        let (ic, oc, k, h, w) = (2usize, 2usize, 2usize, 4usize, 4usize);
        let mut b = TapeBuilder::new();
        let kernel_ids = b.inputs(oc * ic * k * k);
        let bias_ids = b.inputs(oc);
        let img_ids = b.inputs(ic * h * w);
        let (fm, fm_shape) = conv2d_on(
            &mut b,
            &img_ids,
            [ic, h, w],
            &kernel_ids,
            &bias_ids,
            k,
            1,
            0,
            Activation::Relu,
        );
        let (pooled, _) = max_pool_on(&mut b, &fm, fm_shape, 2, 2);
        let out = b.sum(&pooled);
        let tape = b.finish(out);

        let kernels = rand_tensor(&[oc, ic, k, k], &mut rng);
        let bias = rand_tensor(&[oc], &mut rng);
        let img = rand_tensor(&[ic, h, w], &mut rng);
        let layer =
            Conv2DLayer::new(kernels.clone(), bias.clone(), 1, 0, Activation::Relu).unwrap();
        let numeric: f64 = max_pool(&conv2d(&img, &layer).unwrap(), 2, 2)
            .unwrap()
            .data()
            .iter()
            .sum();

        let inputs: Vec<f64> = kernels
            .data()
            .iter()
            .chain(bias.data())
            .chain(img.data())
            .copied()
            .collect();
        let taped = tape.evaluate(&inputs).unwrap();
        assert!((numeric - taped).abs() <= 1e-12);

        let err = tape.check_grad(&inputs, 1e-5).unwrap();
        assert!(err <= 1e-5, "check_grad {err}");
    }

    #[test]
    fn tape_softmax_check_grad() {
        let mut rng = crate::rng::seeded(71);
        let mut b = TapeBuilder::new();
        let z = b.inputs(5);
        let s = softmax_on(&mut b, &z);
        // weighted sum so the gradient is not identically zero
        let weights: Vec<NodeId> = (0..5).map(|i| b.constant(i as f64 + 0.5)).collect();
        let out = b.dot(&s, &weights);
        let tape = b.finish(out);
        let at: Vec<f64> = (0..5).map(|_| rng.random_range(-2.0..2.0)).collect();
        let err = tape.check_grad(&at, 1e-5).unwrap();
        assert!(err <= 1e-5, "check_grad {err}");
    }
}
