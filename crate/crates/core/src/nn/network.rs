//! Sequential layer composition with a single flattened parameter vector.

use super::layers::{
    conv2d, conv2d_on, dense_forward, dense_on, max_pool, max_pool_on, Activation, Conv2DLayer,
    DenseLayer,
};
use super::loss::{mse_on, penalty_on, softmax_cross_entropy_on, LossKind, LossSpec};
use super::{NnError, NnResult};
use crate::autodiff::{AdResult, NodeId, Tape, TapeBuilder, TapeScratch};
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub enum Layer {
    Dense(DenseLayer),
    Conv2D(Conv2DLayer),
    MaxPool { window: usize, stride: usize },
    /// Inverted dropout; active only when training through a [`LossTape`].
    Dropout { rate: f64 },
}

/// A feed-forward stack. Parameters of all layers live behind
/// [`params`](Network::params)/[`set_params`](Network::set_params) as one
/// flat vector in layer order, which is what the optimizers and the loss
/// tape operate on.
#[derive(Debug, Clone)]
pub struct Network {
    input_shape: Vec<usize>,
    layers: Vec<Layer>,
}

impl Network {
    pub fn new(input_shape: impl Into<Vec<usize>>) -> Self {
        Network {
            input_shape: input_shape.into(),
            layers: Vec::new(),
        }
    }

    pub fn push(mut self, layer: Layer) -> Self {
        self.layers.push(layer);
        self
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_len(&self) -> usize {
        self.input_shape.iter().product()
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    /// Shapes after each layer, starting with the input shape.
    pub fn shapes(&self) -> NnResult<Vec<Vec<usize>>> {
        let mut shapes = vec![self.input_shape.clone()];
        for layer in &self.layers {
            let cur = shapes.last().unwrap().clone();
            let next = match layer {
                Layer::Dense(d) => {
                    let flat: usize = cur.iter().product();
                    if flat != d.in_dim() {
                        return Err(NnError::Shape(format!(
                            "dense expects {} inputs, got shape {cur:?}",
                            d.in_dim()
                        )));
                    }
                    vec![d.out_dim()]
                }
                Layer::Conv2D(c) => {
                    if cur.len() != 3 || cur[0] != c.in_channels() {
                        return Err(NnError::Shape(format!(
                            "conv expects [{} × h × w], got {cur:?}",
                            c.in_channels()
                        )));
                    }
                    let padded_h = cur[1] + 2 * c.padding;
                    let padded_w = cur[2] + 2 * c.padding;
                    let k = c.kernel_size();
                    if padded_h < k || padded_w < k {
                        return Err(NnError::EmptyConvOutput);
                    }
                    vec![
                        c.out_channels(),
                        (padded_h - k) / c.stride + 1,
                        (padded_w - k) / c.stride + 1,
                    ]
                }
                Layer::MaxPool { window, stride } => {
                    if cur.len() != 3 || cur[1] < *window || cur[2] < *window {
                        return Err(NnError::Shape(format!(
                            "cannot pool shape {cur:?} with window {window}"
                        )));
                    }
                    vec![
                        cur[0],
                        (cur[1] - window) / stride + 1,
                        (cur[2] - window) / stride + 1,
                    ]
                }
                Layer::Dropout { .. } => cur,
            };
            shapes.push(next);
        }
        Ok(shapes)
    }

    pub fn output_len(&self) -> NnResult<usize> {
        Ok(self.shapes()?.last().unwrap().iter().product())
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| match l {
                Layer::Dense(d) => d.weights.len() + d.biases.len(),
                Layer::Conv2D(c) => c.kernels.len() + c.biases.len(),
                _ => 0,
            })
            .sum()
    }

    /// All trainable parameters, flattened in layer order (weights before
    /// biases within a layer).
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            match layer {
                Layer::Dense(d) => {
                    out.extend_from_slice(d.weights.data());
                    out.extend_from_slice(d.biases.data());
                }
                Layer::Conv2D(c) => {
                    out.extend_from_slice(c.kernels.data());
                    out.extend_from_slice(c.biases.data());
                }
                _ => {}
            }
        }
        out
    }

    pub fn set_params(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.param_count(), "parameter count");
        let mut at = 0;
        let mut take = |n: usize| {
            let s = &params[at..at + n];
            at += n;
            s
        };
        for layer in &mut self.layers {
            match layer {
                Layer::Dense(d) => {
                    let (wn, bn) = (d.weights.len(), d.biases.len());
                    d.weights.data_mut().copy_from_slice(take(wn));
                    d.biases.data_mut().copy_from_slice(take(bn));
                }
                Layer::Conv2D(c) => {
                    let (kn, bn) = (c.kernels.len(), c.biases.len());
                    c.kernels.data_mut().copy_from_slice(take(kn));
                    c.biases.data_mut().copy_from_slice(take(bn));
                }
                _ => {}
            }
        }
    }

    /// Inference pass: dropout is the identity.
    pub fn forward(&self, x: &Tensor) -> NnResult<Tensor> {
        let shapes = self.shapes()?;
        if x.len() != self.input_len() {
            return Err(NnError::Shape(format!(
                "input length {} vs network input {:?}",
                x.len(),
                self.input_shape
            )));
        }
        let mut cur = x.clone().reshape(self.input_shape.clone()).expect("checked");
        for (layer, shape) in self.layers.iter().zip(&shapes) {
            cur = match layer {
                Layer::Dense(d) => {
                    let flat = cur.reshape(vec![shape.iter().product()]).expect("volume");
                    dense_forward(&flat, d)?
                }
                Layer::Conv2D(c) => conv2d(&cur, c)?,
                Layer::MaxPool { window, stride } => max_pool(&cur, *window, *stride)?,
                Layer::Dropout { .. } => cur,
            };
        }
        Ok(cur)
    }

    /// Class prediction: argmax of the forward pass.
    pub fn predict_class(&self, x: &Tensor) -> NnResult<usize> {
        let y = self.forward(x)?;
        Ok(y
            .data()
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0))
    }

    /// Builds the scalar training tape `loss(net(x), target) + penalties`.
    ///
    /// Input layout: `[params | x | target | dropout masks]`. When the loss
    /// is cross-entropy and the final layer is a softmax dense head, the
    /// softmax is fused into the loss for numerical stability; the logits
    /// path is built linear.
    pub fn loss_tape(&self, spec: &LossSpec) -> NnResult<LossTape> {
        let shapes = self.shapes()?;
        let in_len = self.input_len();
        let out_len: usize = shapes.last().unwrap().iter().product();
        let mask_sizes: Vec<usize> = self
            .layers
            .iter()
            .zip(&shapes)
            .filter_map(|(l, s)| match l {
                Layer::Dropout { .. } => Some(s.iter().product()),
                _ => None,
            })
            .collect();

        let fuse_softmax = spec.kind == LossKind::CategoricalCrossEntropy
            && matches!(
                self.layers.last(),
                Some(Layer::Dense(d)) if d.activation == Activation::Softmax
            );

        let mut b = TapeBuilder::new();
        let param_ids = b.inputs(self.param_count());
        let x_ids = b.inputs(in_len);
        let target_ids = b.inputs(out_len);
        let mask_ids: Vec<Vec<NodeId>> = mask_sizes.iter().map(|&n| b.inputs(n)).collect();

        let mut cur = x_ids;
        let mut at = 0;
        let mut mask_at = 0;
        let take = |n: usize, at: &mut usize| -> Vec<NodeId> {
            let s = param_ids[*at..*at + n].to_vec();
            *at += n;
            s
        };
        let last = self.layers.len().saturating_sub(1);
        for (idx, (layer, shape)) in self.layers.iter().zip(&shapes).enumerate() {
            cur = match layer {
                Layer::Dense(d) => {
                    let w = take(d.weights.len(), &mut at);
                    let bias = take(d.biases.len(), &mut at);
                    let act = if fuse_softmax && idx == last {
                        Activation::Linear
                    } else {
                        d.activation
                    };
                    dense_on(&mut b, &cur, &w, &bias, act)
                }
                Layer::Conv2D(c) => {
                    let kern = take(c.kernels.len(), &mut at);
                    let bias = take(c.biases.len(), &mut at);
                    let (out, _) = conv2d_on(
                        &mut b,
                        &cur,
                        [shape[0], shape[1], shape[2]],
                        &kern,
                        &bias,
                        c.kernel_size(),
                        c.stride,
                        c.padding,
                        c.activation,
                    );
                    out
                }
                Layer::MaxPool { window, stride } => {
                    let (out, _) =
                        max_pool_on(&mut b, &cur, [shape[0], shape[1], shape[2]], *window, *stride);
                    out
                }
                Layer::Dropout { .. } => {
                    let masks = &mask_ids[mask_at];
                    mask_at += 1;
                    cur.iter()
                        .zip(masks)
                        .map(|(&v, &m)| b.mul(v, m))
                        .collect()
                }
            };
        }

        let base = match spec.kind {
            LossKind::Mse => mse_on(&mut b, &cur, &target_ids),
            LossKind::CategoricalCrossEntropy => {
                if fuse_softmax {
                    softmax_cross_entropy_on(&mut b, &cur, &target_ids)
                } else {
                    // plain −Σ t ln p on whatever the head produced
                    let logs: Vec<NodeId> = cur.iter().map(|&p| b.ln(p)).collect();
                    let s = b.dot(&target_ids, &logs);
                    b.neg(s)
                }
            }
        };
        let out = penalty_on(&mut b, base, &param_ids, spec);
        Ok(LossTape {
            tape: b.finish(out),
            n_params: self.param_count(),
            in_len,
            out_len,
            mask_sizes,
        })
    }
}

/// A frozen scalar-loss tape for one network architecture.
#[derive(Debug, Clone)]
pub struct LossTape {
    tape: Tape,
    n_params: usize,
    in_len: usize,
    out_len: usize,
    mask_sizes: Vec<usize>,
}

/// Per-thread buffers for [`LossTape`] evaluation.
#[derive(Debug, Default)]
pub struct LossScratch {
    inputs: Vec<f64>,
    partials: Vec<f64>,
    tape: TapeScratch,
}

impl LossTape {
    pub fn n_params(&self) -> usize {
        self.n_params
    }

    pub fn in_len(&self) -> usize {
        self.in_len
    }

    pub fn out_len(&self) -> usize {
        self.out_len
    }

    pub fn mask_len(&self) -> usize {
        self.mask_sizes.iter().sum()
    }

    pub fn mask_sizes(&self) -> &[usize] {
        &self.mask_sizes
    }

    pub fn node_count(&self) -> usize {
        self.tape.node_count()
    }

    fn assemble(&self, params: &[f64], x: &[f64], target: &[f64], masks: &[f64], buf: &mut Vec<f64>) {
        assert_eq!(params.len(), self.n_params);
        assert_eq!(x.len(), self.in_len);
        assert_eq!(target.len(), self.out_len);
        buf.clear();
        buf.extend_from_slice(params);
        buf.extend_from_slice(x);
        buf.extend_from_slice(target);
        if masks.is_empty() {
            buf.extend(std::iter::repeat(1.0).take(self.mask_len()));
        } else {
            assert_eq!(masks.len(), self.mask_len());
            buf.extend_from_slice(masks);
        }
    }

    /// Loss value with dropout disabled (masks of ones).
    pub fn value(&self, params: &[f64], x: &[f64], target: &[f64]) -> AdResult<f64> {
        let mut ws = LossScratch::default();
        self.assemble(params, x, target, &[], &mut ws.inputs);
        self.tape.evaluate_with(&ws.inputs, &mut ws.tape)
    }

    /// Loss and parameter gradient for one item; `masks` may be empty to
    /// disable dropout. Returns the loss value.
    pub fn grad_into(
        &self,
        params: &[f64],
        x: &[f64],
        target: &[f64],
        masks: &[f64],
        ws: &mut LossScratch,
        grad_out: &mut [f64],
    ) -> AdResult<f64> {
        assert_eq!(grad_out.len(), self.n_params);
        self.assemble(params, x, target, masks, &mut ws.inputs);
        ws.partials.resize(self.tape.input_count(), 0.0);
        let value = self
            .tape
            .reverse_grad_with(&ws.inputs, &mut ws.tape, &mut ws.partials)?;
        grad_out.copy_from_slice(&ws.partials[..self.n_params]);
        Ok(value)
    }
}
