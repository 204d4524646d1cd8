use super::conv::{conv2d_backward, conv2d_forward};
use super::{forward_differences, forward_differences_adjoint, Shape, Tensor, TensorError};

/// Handle to a value recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Conv2d {
        input: Var,
        weight: Var,
        bias: Var,
        padding: usize,
    },
    Relu(Var),
    Concat(Vec<Var>),
    Add(Var, Var),
    Sub(Var, Var),
    Square(Var),
    Abs(Var),
    Scale(Var, f64),
    MeanAll(Var),
    SumAll(Var),
    SpatialGradient(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    grad: Option<Tensor>,
}

/// Operation record for reverse-mode differentiation.
///
/// Nodes are appended in evaluation order, so the record is always
/// topologically sorted. A graph is single-owner and supports exactly one
/// [`backward`](Graph::backward) pass.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    consumed: bool,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records an input tensor. Gradients are only accumulated into leaves
    /// created with `requires_grad` and the values derived from them.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated gradient, present after `backward` for every node that
    /// requires grad and lies on a path to the loss.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn take_grad(&mut self, v: Var) -> Option<Tensor> {
        self.nodes[v.0].grad.take()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn record(&mut self, op_name: &'static str, value: Tensor, op: Op, inputs: &[Var]) -> Result<Var, TensorError> {
        if !value.data().iter().all(|v| v.is_finite()) {
            return Err(TensorError::NonFinite { op: op_name });
        }
        let requires_grad = inputs.iter().any(|&v| self.requires_grad(v));
        Ok(self.push(value, op, requires_grad))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<Shape, TensorError> {
        let (lhs, rhs) = (self.value(a).shape(), self.value(b).shape());
        if lhs != rhs {
            return Err(TensorError::ShapeMismatch { op, lhs, rhs });
        }
        Ok(lhs)
    }

    fn map(&mut self, name: &'static str, x: Var, op: Op, f: impl Fn(f64) -> f64) -> Result<Var, TensorError> {
        let t = self.value(x);
        let out = Tensor::from_parts(t.shape(), t.data().iter().map(|&v| f(v)).collect());
        self.record(name, out, op, &[x])
    }

    fn zip(&mut self, name: &'static str, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Result<Var, TensorError> {
        let shape = self.same_shape(name, a, b)?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        self.record(name, Tensor::from_parts(shape, data), op, &[a, b])
    }

    /// Zero-padded cross-correlation. `weight` is `(cout, cin, kh, kw)` with
    /// odd kernel sides and `bias` is `(cout, 1, 1, 1)`.
    pub fn conv2d(&mut self, input: Var, weight: Var, bias: Var, padding: usize) -> Result<Var, TensorError> {
        let out = conv2d_forward(self.value(input), self.value(weight), self.value(bias), padding)?;
        self.record(
            "conv2d",
            out,
            Op::Conv2d {
                input,
                weight,
                bias,
                padding,
            },
            &[input, weight, bias],
        )
    }

    pub fn relu(&mut self, x: Var) -> Result<Var, TensorError> {
        self.map("relu", x, Op::Relu(x), |v| v.max(0.0))
    }

    pub fn concat_channels(&mut self, inputs: &[Var]) -> Result<Var, TensorError> {
        let first = *inputs.first().ok_or(TensorError::EmptyConcat)?;
        let s0 = self.value(first).shape();
        let mut channels = 0;
        for &v in inputs {
            let s = self.value(v).shape();
            if s.batch() != s0.batch() || s.height() != s0.height() || s.width() != s0.width() {
                return Err(TensorError::ShapeMismatch {
                    op: "concat_channels",
                    lhs: s0,
                    rhs: s,
                });
            }
            channels += s.channels();
        }
        let shape = Shape::new(s0.batch(), channels, s0.height(), s0.width());
        let mut data = Vec::with_capacity(shape.numel());
        for b in 0..s0.batch() {
            for &v in inputs {
                let t = self.value(v);
                let per = t.shape().channels() * t.shape().plane();
                data.extend_from_slice(&t.data()[b * per..(b + 1) * per]);
            }
        }
        self.record("concat_channels", Tensor::from_parts(shape, data), Op::Concat(inputs.to_vec()), inputs)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.zip("add", a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.zip("sub", a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn square(&mut self, x: Var) -> Result<Var, TensorError> {
        self.map("square", x, Op::Square(x), |v| v * v)
    }

    pub fn abs(&mut self, x: Var) -> Result<Var, TensorError> {
        self.map("abs", x, Op::Abs(x), f64::abs)
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Result<Var, TensorError> {
        self.map("scale", x, Op::Scale(x, s), |v| v * s)
    }

    pub fn mean_all(&mut self, x: Var) -> Result<Var, TensorError> {
        let t = self.value(x);
        let mean = t.data().iter().sum::<f64>() / t.numel() as f64;
        self.record("mean_all", Tensor::from_parts(Shape::scalar(), vec![mean]), Op::MeanAll(x), &[x])
    }

    pub fn sum_all(&mut self, x: Var) -> Result<Var, TensorError> {
        let sum = self.value(x).data().iter().sum::<f64>();
        self.record("sum_all", Tensor::from_parts(Shape::scalar(), vec![sum]), Op::SumAll(x), &[x])
    }

    /// Forward-difference gradients. Input channel `c` maps to output
    /// channels `2c` (horizontal, last column zero) and `2c + 1` (vertical,
    /// last row zero).
    pub fn spatial_gradient(&mut self, x: Var) -> Result<Var, TensorError> {
        let t = self.value(x);
        let [b, c, h, w] = t.shape().0;
        let n = h * w;
        let shape = Shape::new(b, 2 * c, h, w);
        let mut out = vec![0.0; shape.numel()];
        for bi in 0..b {
            for ci in 0..c {
                let base = (bi * 2 * c + 2 * ci) * n;
                let (gx, gy) = out[base..base + 2 * n].split_at_mut(n);
                forward_differences(t.plane(bi, ci), h, w, gx, gy);
            }
        }
        self.record("spatial_gradient", Tensor::from_parts(shape, out), Op::SpatialGradient(x), &[x])
    }

    /// Reverse pass from a single-element `loss`, seeded with gradient 1.
    pub fn backward(&mut self, loss: Var) -> Result<(), TensorError> {
        if self.consumed {
            return Err(TensorError::GraphConsumed);
        }
        let shape = self.value(loss).shape();
        if shape.numel() != 1 {
            return Err(TensorError::NotScalar(shape));
        }
        self.consumed = true;
        if !self.requires_grad(loss) {
            return Ok(());
        }
        self.nodes[loss.0].grad = Some(Tensor::full(shape, 1.0));

        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad || matches!(self.nodes[i].op, Op::Leaf) {
                continue;
            }
            let Some(grad) = self.nodes[i].grad.take() else {
                continue;
            };
            let contributions = self.local_grads(i, &grad);
            self.nodes[i].grad = Some(grad);
            for (v, g) in contributions {
                self.accumulate(v, g);
            }
        }
        Ok(())
    }

    fn accumulate(&mut self, v: Var, g: Tensor) {
        let node = &mut self.nodes[v.0];
        match node.grad.as_mut() {
            Some(acc) => {
                for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                    *a += b;
                }
            }
            None => node.grad = Some(g),
        }
    }

    fn local_grads(&self, i: usize, grad: &Tensor) -> Vec<(Var, Tensor)> {
        let wants = |v: Var| self.requires_grad(v);
        let like = |v: Var, f: &dyn Fn(usize, f64) -> f64| {
            let data = grad.data().iter().enumerate().map(|(k, &g)| f(k, g)).collect();
            Tensor::from_parts(self.value(v).shape(), data)
        };
        let mut out = Vec::new();
        match &self.nodes[i].op {
            Op::Leaf => {}
            &Op::Conv2d {
                input,
                weight,
                bias,
                padding,
            } => {
                let g = conv2d_backward(
                    self.value(input),
                    self.value(weight),
                    self.value(bias).shape(),
                    padding,
                    grad,
                    [wants(input), wants(weight), wants(bias)],
                );
                out.extend(g.input.map(|t| (input, t)));
                out.extend(g.weight.map(|t| (weight, t)));
                out.extend(g.bias.map(|t| (bias, t)));
            }
            &Op::Relu(x) => {
                let xs = self.value(x).data();
                out.push((x, like(x, &|k, g| if xs[k] > 0.0 { g } else { 0.0 })));
            }
            Op::Concat(inputs) => {
                let s = grad.shape();
                let per_out = s.channels() * s.plane();
                let mut offset = 0;
                for &v in inputs {
                    let vs = self.value(v).shape();
                    let per = vs.channels() * vs.plane();
                    if wants(v) {
                        let mut data = Vec::with_capacity(vs.numel());
                        for b in 0..s.batch() {
                            let start = b * per_out + offset;
                            data.extend_from_slice(&grad.data()[start..start + per]);
                        }
                        out.push((v, Tensor::from_parts(vs, data)));
                    }
                    offset += per;
                }
            }
            &Op::Add(a, b) => {
                for v in [a, b] {
                    if wants(v) {
                        out.push((v, grad.clone()));
                    }
                }
            }
            &Op::Sub(a, b) => {
                if wants(a) {
                    out.push((a, grad.clone()));
                }
                if wants(b) {
                    out.push((b, like(b, &|_, g| -g)));
                }
            }
            &Op::Square(x) => {
                let xs = self.value(x).data();
                out.push((x, like(x, &|k, g| 2.0 * xs[k] * g)));
            }
            &Op::Abs(x) => {
                let xs = self.value(x).data();
                let sign = |v: f64| if v > 0.0 { 1.0 } else if v < 0.0 { -1.0 } else { 0.0 };
                out.push((x, like(x, &|k, g| sign(xs[k]) * g)));
            }
            &Op::Scale(x, s) => out.push((x, like(x, &|_, g| s * g))),
            &Op::MeanAll(x) => {
                let t = self.value(x);
                let g = grad.data()[0] / t.numel() as f64;
                out.push((x, Tensor::full(t.shape(), g)));
            }
            &Op::SumAll(x) => out.push((x, Tensor::full(self.value(x).shape(), grad.data()[0]))),
            &Op::SpatialGradient(x) => {
                let [b, c, h, w] = self.value(x).shape().0;
                let n = h * w;
                let mut gin = vec![0.0; b * c * n];
                for bi in 0..b {
                    for ci in 0..c {
                        let base = (bi * 2 * c + 2 * ci) * n;
                        let gx = &grad.data()[base..base + n];
                        let gy = &grad.data()[base + n..base + 2 * n];
                        let dst = &mut gin[(bi * c + ci) * n..(bi * c + ci + 1) * n];
                        forward_differences_adjoint(gx, gy, h, w, dst);
                    }
                }
                out.push((x, Tensor::from_parts(self.value(x).shape(), gin)));
            }
        }
        out
    }
}
