//! Append-only computation tape with reverse-mode gradients.

use super::dual::Dual;
use super::{sigmoid, AdError, AdResult};

/// Index of a node on the tape.
pub type NodeId = usize;

/// A recorded operation. Operands always point at earlier nodes, so the tape
/// is topologically ordered by construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Op {
    /// Placeholder for the input at the given slot.
    Input(usize),
    Const(f64),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Div(NodeId, NodeId),
    Neg(NodeId),
    Ln(NodeId),
    Sin(NodeId),
    Cos(NodeId),
    Exp(NodeId),
    Tanh(NodeId),
    Sigmoid(NodeId),
    Relu(NodeId),
    PowInt(NodeId, i32),
}

/// Gradient of the tape output with respect to every input slot.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub partials: Vec<f64>,
}

/// An immutable computation graph.
///
/// Built once through [`TapeBuilder`], then evaluated any number of times
/// with different inputs. All evaluation state lives in a per-call
/// [`TapeScratch`], so a shared `&Tape` may be evaluated from several threads
/// at once.
#[derive(Debug, Clone)]
pub struct Tape {
    nodes: Vec<Op>,
    input_count: usize,
    output: NodeId,
}

/// Growable tape under construction.
#[derive(Debug, Clone, Default)]
pub struct TapeBuilder {
    nodes: Vec<Op>,
    input_count: usize,
}

/// Reusable evaluation buffers (primals and adjoints).
#[derive(Debug, Default)]
pub struct TapeScratch {
    primals: Vec<f64>,
    adjoints: Vec<f64>,
}

impl TapeBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, op: Op) -> NodeId {
        self.nodes.push(op);
        self.nodes.len() - 1
    }

    /// Registers the next input slot and returns its node.
    pub fn input(&mut self) -> NodeId {
        let slot = self.input_count;
        self.input_count += 1;
        self.push(Op::Input(slot))
    }

    /// Registers `n` consecutive input slots.
    pub fn inputs(&mut self, n: usize) -> Vec<NodeId> {
        (0..n).map(|_| self.input()).collect()
    }

    pub fn constant(&mut self, v: f64) -> NodeId {
        self.push(Op::Const(v))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Mul(a, b))
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Div(a, b))
    }

    pub fn neg(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Neg(a))
    }

    pub fn ln(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Ln(a))
    }

    pub fn sin(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Sin(a))
    }

    pub fn cos(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Cos(a))
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Exp(a))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Sigmoid(a))
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Relu(a))
    }

    pub fn powi(&mut self, a: NodeId, n: i32) -> NodeId {
        self.push(Op::PowInt(a, n))
    }

    /// Scales a node by a compile-time constant.
    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let k = self.constant(c);
        self.mul(a, k)
    }

    /// `max(a, b)` as `a + relu(b − a)`; the subgradient follows relu.
    pub fn max(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let d = self.sub(b, a);
        let r = self.relu(d);
        self.add(a, r)
    }

    /// Balanced-tree sum of `ids`. Empty input sums to the constant 0.
    pub fn sum(&mut self, ids: &[NodeId]) -> NodeId {
        match ids.len() {
            0 => self.constant(0.0),
            1 => ids[0],
            n => {
                let (lo, hi) = ids.split_at(n / 2);
                let l = self.sum(lo);
                let r = self.sum(hi);
                self.add(l, r)
            }
        }
    }

    /// Dot product `Σ a_i·b_i`.
    pub fn dot(&mut self, a: &[NodeId], b: &[NodeId]) -> NodeId {
        debug_assert_eq!(a.len(), b.len());
        let prods: Vec<NodeId> = a.iter().zip(b).map(|(&x, &y)| self.mul(x, y)).collect();
        self.sum(&prods)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn input_count(&self) -> usize {
        self.input_count
    }

    /// Freezes the graph with `output` as the tape output.
    pub fn finish(self, output: NodeId) -> Tape {
        assert!(output < self.nodes.len(), "output node out of range");
        Tape {
            nodes: self.nodes,
            input_count: self.input_count,
            output,
        }
    }
}

// Scalar interface shared by plain evaluation and dual-number forward mode.
trait Scalar: Copy {
    fn from_f64(v: f64) -> Self;
    fn primal(self) -> f64;
    fn add(a: Self, b: Self) -> Self;
    fn sub(a: Self, b: Self) -> Self;
    fn mul(a: Self, b: Self) -> Self;
    fn div(a: Self, b: Self) -> Self;
    fn neg(a: Self) -> Self;
    fn ln(a: Self) -> Self;
    fn sin(a: Self) -> Self;
    fn cos(a: Self) -> Self;
    fn exp(a: Self) -> Self;
    fn tanh(a: Self) -> Self;
    fn sigmoid(a: Self) -> Self;
    fn relu(a: Self) -> Self;
    fn powi(a: Self, n: i32) -> Self;
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn primal(self) -> f64 {
        self
    }
    fn add(a: Self, b: Self) -> Self {
        a + b
    }
    fn sub(a: Self, b: Self) -> Self {
        a - b
    }
    fn mul(a: Self, b: Self) -> Self {
        a * b
    }
    fn div(a: Self, b: Self) -> Self {
        a / b
    }
    fn neg(a: Self) -> Self {
        -a
    }
    fn ln(a: Self) -> Self {
        a.ln()
    }
    fn sin(a: Self) -> Self {
        a.sin()
    }
    fn cos(a: Self) -> Self {
        a.cos()
    }
    fn exp(a: Self) -> Self {
        a.exp()
    }
    fn tanh(a: Self) -> Self {
        a.tanh()
    }
    fn sigmoid(a: Self) -> Self {
        sigmoid(a)
    }
    fn relu(a: Self) -> Self {
        a.max(0.0)
    }
    fn powi(a: Self, n: i32) -> Self {
        a.powi(n)
    }
}

impl Scalar for Dual {
    fn from_f64(v: f64) -> Self {
        Dual::constant(v)
    }
    fn primal(self) -> f64 {
        self.primal
    }
    fn add(a: Self, b: Self) -> Self {
        a + b
    }
    fn sub(a: Self, b: Self) -> Self {
        a - b
    }
    fn mul(a: Self, b: Self) -> Self {
        a * b
    }
    fn div(a: Self, b: Self) -> Self {
        a / b
    }
    fn neg(a: Self) -> Self {
        -a
    }
    fn ln(a: Self) -> Self {
        a.ln()
    }
    fn sin(a: Self) -> Self {
        a.sin()
    }
    fn cos(a: Self) -> Self {
        a.cos()
    }
    fn exp(a: Self) -> Self {
        a.exp()
    }
    fn tanh(a: Self) -> Self {
        a.tanh()
    }
    fn sigmoid(a: Self) -> Self {
        a.sigmoid()
    }
    fn relu(a: Self) -> Self {
        a.relu()
    }
    fn powi(a: Self, n: i32) -> Self {
        a.powi(n)
    }
}

impl Tape {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn input_count(&self) -> usize {
        self.input_count
    }

    pub fn output_id(&self) -> NodeId {
        self.output
    }

    pub fn node(&self, id: NodeId) -> Op {
        self.nodes[id]
    }

    fn check_inputs(&self, inputs: &[f64]) -> AdResult<()> {
        if inputs.len() != self.input_count {
            return Err(AdError::InputCount {
                expected: self.input_count,
                got: inputs.len(),
            });
        }
        Ok(())
    }

    fn eval_nodes<S: Scalar>(&self, read_input: impl Fn(usize) -> S, out: &mut Vec<S>) -> AdResult<()> {
        out.clear();
        out.reserve(self.nodes.len());
        for (id, op) in self.nodes.iter().enumerate() {
            let v = match *op {
                Op::Input(slot) => read_input(slot),
                Op::Const(c) => S::from_f64(c),
                Op::Add(a, b) => S::add(out[a], out[b]),
                Op::Sub(a, b) => S::sub(out[a], out[b]),
                Op::Mul(a, b) => S::mul(out[a], out[b]),
                Op::Div(a, b) => {
                    if out[b].primal() == 0.0 {
                        return Err(AdError::Domain {
                            node: id,
                            what: "division by zero",
                        });
                    }
                    S::div(out[a], out[b])
                }
                Op::Neg(a) => S::neg(out[a]),
                Op::Ln(a) => {
                    if out[a].primal() <= 0.0 {
                        return Err(AdError::Domain {
                            node: id,
                            what: "ln of non-positive value",
                        });
                    }
                    S::ln(out[a])
                }
                Op::Sin(a) => S::sin(out[a]),
                Op::Cos(a) => S::cos(out[a]),
                Op::Exp(a) => S::exp(out[a]),
                Op::Tanh(a) => S::tanh(out[a]),
                Op::Sigmoid(a) => S::sigmoid(out[a]),
                Op::Relu(a) => S::relu(out[a]),
                Op::PowInt(a, n) => S::powi(out[a], n),
            };
            out.push(v);
        }
        Ok(())
    }

    /// Evaluates the output at `inputs`.
    pub fn evaluate(&self, inputs: &[f64]) -> AdResult<f64> {
        let mut scratch = TapeScratch::default();
        self.evaluate_with(inputs, &mut scratch)
    }

    /// As [`evaluate`](Self::evaluate), reusing caller-provided buffers.
    pub fn evaluate_with(&self, inputs: &[f64], scratch: &mut TapeScratch) -> AdResult<f64> {
        self.check_inputs(inputs)?;
        self.eval_nodes(|slot| inputs[slot], &mut scratch.primals)?;
        Ok(scratch.primals[self.output])
    }

    /// Directional derivative `∂f/∂x_direction` by dual-number propagation.
    pub fn forward_grad(&self, inputs: &[f64], direction: usize) -> AdResult<f64> {
        self.check_inputs(inputs)?;
        if direction >= self.input_count {
            return Err(AdError::BadDirection(direction));
        }
        let mut duals: Vec<Dual> = Vec::new();
        self.eval_nodes(
            |slot| Dual::new(inputs[slot], if slot == direction { 1.0 } else { 0.0 }),
            &mut duals,
        )?;
        Ok(duals[self.output].tangent)
    }

    /// All partial derivatives in one backward sweep.
    pub fn reverse_grad(&self, inputs: &[f64]) -> AdResult<Gradient> {
        let mut scratch = TapeScratch::default();
        let mut partials = vec![0.0; self.input_count];
        self.reverse_grad_with(inputs, &mut scratch, &mut partials)?;
        Ok(Gradient { partials })
    }

    /// As [`reverse_grad`](Self::reverse_grad), reusing buffers. Returns the
    /// primal output value; `partials` must have one slot per input.
    pub fn reverse_grad_with(
        &self,
        inputs: &[f64],
        scratch: &mut TapeScratch,
        partials: &mut [f64],
    ) -> AdResult<f64> {
        assert_eq!(partials.len(), self.input_count, "partials length");
        let value = self.evaluate_with(inputs, scratch)?;
        let p = &scratch.primals;
        let adj = &mut scratch.adjoints;
        adj.clear();
        adj.resize(self.nodes.len(), 0.0);
        adj[self.output] = 1.0;
        partials.fill(0.0);
        for (id, op) in self.nodes.iter().enumerate().rev() {
            let w = adj[id];
            if w == 0.0 {
                continue;
            }
            match *op {
                Op::Input(slot) => partials[slot] += w,
                Op::Const(_) => {}
                Op::Add(a, b) => {
                    adj[a] += w;
                    adj[b] += w;
                }
                Op::Sub(a, b) => {
                    adj[a] += w;
                    adj[b] -= w;
                }
                Op::Mul(a, b) => {
                    adj[a] += w * p[b];
                    adj[b] += w * p[a];
                }
                Op::Div(a, b) => {
                    adj[a] += w / p[b];
                    adj[b] -= w * p[a] / (p[b] * p[b]);
                }
                Op::Neg(a) => adj[a] -= w,
                Op::Ln(a) => adj[a] += w / p[a],
                Op::Sin(a) => adj[a] += w * p[a].cos(),
                Op::Cos(a) => adj[a] -= w * p[a].sin(),
                Op::Exp(a) => adj[a] += w * p[id],
                Op::Tanh(a) => adj[a] += w * (1.0 - p[id] * p[id]),
                Op::Sigmoid(a) => adj[a] += w * p[id] * (1.0 - p[id]),
                Op::Relu(a) => {
                    if p[a] > 0.0 {
                        adj[a] += w;
                    }
                }
                Op::PowInt(a, n) => adj[a] += w * f64::from(n) * p[a].powi(n - 1),
            }
        }
        Ok(value)
    }

    /// Maximum relative disagreement between [`reverse_grad`](Self::reverse_grad)
    /// and central finite differences of step `step`.
    pub fn check_grad(&self, inputs: &[f64], step: f64) -> AdResult<f64> {
        assert!(step > 0.0, "step must be positive");
        let grad = self.reverse_grad(inputs)?;
        let mut shifted = inputs.to_vec();
        let mut worst = 0.0f64;
        for i in 0..self.input_count {
            shifted[i] = inputs[i] + step;
            let fp = self.evaluate(&shifted)?;
            shifted[i] = inputs[i] - step;
            let fm = self.evaluate(&shifted)?;
            shifted[i] = inputs[i];
            let fd = (fp - fm) / (2.0 * step);
            let rel = (grad.partials[i] - fd).abs() / fd.abs().max(1.0);
            worst = worst.max(rel);
        }
        Ok(worst)
    }
}

impl Gradient {
    pub fn len(&self) -> usize {
        self.partials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.partials.is_empty()
    }
}
