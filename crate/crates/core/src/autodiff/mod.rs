//! Reverse-mode automatic differentiation over dense tensors.
//!
//! A [`Tape`] records every operation executed on its [`Tensor`] handles; a
//! single [`Tensor::backward`] sweep replays the chain rule in reverse
//! creation order, visiting each node exactly once. Tapes are cheap and
//! intended to be rebuilt per forward pass and dropped per iteration.
//!
//! Storage and accumulation are `f64` throughout. Shape misuse (mismatched
//! operands, non-scalar loss roots, channel mismatches in convolution) is a
//! programming error and panics with a descriptive message; fallible
//! interfaces live at the module boundaries above this engine.
//!
//! A tape and its tensors form a single-threaded unit of work. Distinct
//! tapes may run on different threads; convolution parallelizes internally
//! across channels with a fixed per-element reduction order, so results are
//! bitwise deterministic regardless of thread count.

mod adam;
mod backward;
mod check;
mod conv;
mod ops;

pub use adam::AdamState;
pub use check::{central_diff_gradients, grad_check, grad_check_multi, max_relative_error};
pub use ops::{Axis, BinaryKind, ReduceKind, UnaryKind};

use std::cell::RefCell;

use ops::{binary_forward, reduce_forward, unary_forward, Broadcast, OpRecord};

/// Tensor extents, rank 1 through 4. Images use channel-major `[C, H, W]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Shape(Vec<usize>);

impl Shape {
    pub fn new(dims: &[usize]) -> Self {
        assert!(
            (1..=4).contains(&dims.len()),
            "rank must be 1..=4, got {}",
            dims.len()
        );
        assert!(
            dims.iter().all(|&d| d > 0),
            "zero extent in shape {dims:?}"
        );
        Shape(dims.to_vec())
    }

    pub fn scalar() -> Self {
        Shape(vec![1])
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }

    pub fn rank(&self) -> usize {
        self.0.len()
    }

    pub fn numel(&self) -> usize {
        self.0.iter().product()
    }

    pub fn is_scalar(&self) -> bool {
        self.numel() == 1
    }

    /// Height and width, the trailing two extents.
    pub(crate) fn spatial(&self) -> (usize, usize) {
        assert!(self.rank() >= 2, "rank-{} tensor has no spatial dims", self.rank());
        (self.0[self.rank() - 2], self.0[self.rank() - 1])
    }

    /// Product of all extents except the trailing two.
    pub(crate) fn planes(&self) -> usize {
        self.0[..self.rank() - 2].iter().product()
    }
}

/// Plain shape-plus-values buffer: parameters, inputs, and extracted
/// results live here when not attached to a tape.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorData {
    shape: Shape,
    values: Vec<f64>,
}

impl TensorData {
    pub fn new(shape: Shape, values: Vec<f64>) -> Self {
        assert_eq!(
            values.len(),
            shape.numel(),
            "value count {} does not match shape {:?}",
            values.len(),
            shape.dims()
        );
        Self { shape, values }
    }

    pub fn zeros(shape: Shape) -> Self {
        let n = shape.numel();
        Self::new(shape, vec![0.0; n])
    }

    pub fn scalar(v: f64) -> Self {
        Self::new(Shape::scalar(), vec![v])
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

pub(crate) struct Node {
    pub(crate) shape: Shape,
    pub(crate) values: Vec<f64>,
    /// Accumulated gradient; materialized for `requires_grad` leaves by
    /// `backward`, additively across repeated calls.
    pub(crate) grad: Option<Vec<f64>>,
    pub(crate) requires_grad: bool,
    pub(crate) op: OpRecord,
}

/// Operation recorder for one optimization step.
#[derive(Default)]
pub struct Tape {
    pub(crate) nodes: RefCell<Vec<Node>>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.borrow().len()
    }

    /// Tracked leaf: gradients accumulate here on backward.
    pub fn var(&self, data: TensorData) -> Tensor<'_> {
        self.push(data.shape, data.values, true, OpRecord::Leaf)
    }

    /// Untracked leaf: no gradient flows into or through it.
    pub fn constant(&self, data: TensorData) -> Tensor<'_> {
        self.push(data.shape, data.values, false, OpRecord::Leaf)
    }

    pub fn scalar(&self, v: f64) -> Tensor<'_> {
        self.constant(TensorData::scalar(v))
    }

    pub(crate) fn push(
        &self,
        shape: Shape,
        values: Vec<f64>,
        requires_grad: bool,
        op: OpRecord,
    ) -> Tensor<'_> {
        debug_assert_eq!(values.len(), shape.numel());
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            shape,
            values,
            grad: None,
            requires_grad,
            op,
        });
        Tensor {
            tape: self,
            index: nodes.len() - 1,
        }
    }
}

/// Handle to a tape node. Copyable; all state lives on the tape.
#[derive(Clone, Copy)]
pub struct Tensor<'t> {
    tape: &'t Tape,
    pub(crate) index: usize,
}

impl<'t> Tensor<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn shape(&self) -> Shape {
        self.tape.nodes.borrow()[self.index].shape.clone()
    }

    pub fn numel(&self) -> usize {
        self.tape.nodes.borrow()[self.index].shape.numel()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.nodes.borrow()[self.index].requires_grad
    }

    /// Copies the forward values out of the tape.
    pub fn values(&self) -> Vec<f64> {
        self.tape.nodes.borrow()[self.index].values.clone()
    }

    /// Scalar forward value; panics if the tensor has more than one element.
    pub fn value(&self) -> f64 {
        let nodes = self.tape.nodes.borrow();
        let node = &nodes[self.index];
        assert!(node.shape.is_scalar(), "value() on non-scalar tensor");
        node.values[0]
    }

    pub fn to_data(&self) -> TensorData {
        let nodes = self.tape.nodes.borrow();
        let node = &nodes[self.index];
        TensorData::new(node.shape.clone(), node.values.clone())
    }

    /// Accumulated gradient, if `backward` has materialized one.
    pub fn grad(&self) -> Option<Vec<f64>> {
        self.tape.nodes.borrow()[self.index].grad.clone()
    }

    /// Same values, detached from the gradient graph.
    pub fn detach(&self) -> Tensor<'t> {
        let (shape, values) = {
            let nodes = self.tape.nodes.borrow();
            let node = &nodes[self.index];
            (node.shape.clone(), node.values.clone())
        };
        self.tape.push(shape, values, false, OpRecord::Leaf)
    }

    /// Reverse sweep from a scalar loss. Gradients of every tracked leaf on
    /// the tape are materialized (zeros if unreachable) and accumulate
    /// additively across repeated calls.
    pub fn backward(&self) {
        assert!(
            self.shape().is_scalar(),
            "backward requires a scalar loss tensor"
        );
        self.tape.backward_from(self.index);
    }

    fn unary(self, kind: UnaryKind) -> Tensor<'t> {
        let (shape, values, rg) = {
            let nodes = self.tape.nodes.borrow();
            let node = &nodes[self.index];
            (
                node.shape.clone(),
                unary_forward(kind, &node.values),
                node.requires_grad,
            )
        };
        self.tape.push(
            shape,
            values,
            rg,
            OpRecord::Unary {
                kind,
                input: self.index,
            },
        )
    }

    fn binary(self, rhs: Tensor<'t>, kind: BinaryKind) -> Tensor<'t> {
        assert!(
            std::ptr::eq(self.tape, rhs.tape),
            "operands come from different tapes"
        );
        let (shape, values, rg, bc) = {
            let nodes = self.tape.nodes.borrow();
            let l = &nodes[self.index];
            let r = &nodes[rhs.index];
            let bc = Broadcast::resolve(&l.shape, &r.shape);
            let out_shape = match bc {
                Broadcast::LhsScalar | Broadcast::LhsChannel(_) => r.shape.clone(),
                _ => l.shape.clone(),
            };
            let values = binary_forward(kind, &l.values, &r.values, bc);
            (
                out_shape,
                values,
                l.requires_grad || r.requires_grad,
                bc,
            )
        };
        self.tape.push(
            shape,
            values,
            rg,
            OpRecord::Binary {
                kind,
                lhs: self.index,
                rhs: rhs.index,
                broadcast: bc,
            },
        )
    }

    fn reduce(self, kind: ReduceKind) -> Tensor<'t> {
        let (value, rg) = {
            let nodes = self.tape.nodes.borrow();
            let node = &nodes[self.index];
            (reduce_forward(kind, &node.values), node.requires_grad)
        };
        self.tape.push(
            Shape::scalar(),
            vec![value],
            rg,
            OpRecord::Reduce {
                kind,
                input: self.index,
            },
        )
    }

    pub fn abs(self) -> Tensor<'t> {
        self.unary(UnaryKind::Abs)
    }

    pub fn exp(self) -> Tensor<'t> {
        self.unary(UnaryKind::Exp)
    }

    pub fn relu(self) -> Tensor<'t> {
        self.unary(UnaryKind::Relu)
    }

    pub fn sigmoid(self) -> Tensor<'t> {
        self.unary(UnaryKind::Sigmoid)
    }

    pub fn tanh(self) -> Tensor<'t> {
        self.unary(UnaryKind::Tanh)
    }

    /// Elementwise power by a constant exponent. Backward uses
    /// `c * x^(c-1)`; callers keep the base non-negative.
    pub fn powc(self, exponent: f64) -> Tensor<'t> {
        self.unary(UnaryKind::PowConst(exponent))
    }

    /// Elementwise clamp. Gradient passes only strictly inside `(lo, hi)`.
    pub fn clamp(self, lo: f64, hi: f64) -> Tensor<'t> {
        assert!(lo <= hi, "clamp bounds reversed");
        self.unary(UnaryKind::Clamp(lo, hi))
    }

    /// Wraps angles into `(-pi, pi]`; derivative 1 away from the seam.
    pub fn wrap_angle(self) -> Tensor<'t> {
        self.unary(UnaryKind::WrapAngle)
    }

    pub fn add_scalar(self, c: f64) -> Tensor<'t> {
        self.unary(UnaryKind::AddConst(c))
    }

    pub fn mul_scalar(self, c: f64) -> Tensor<'t> {
        self.unary(UnaryKind::MulConst(c))
    }

    /// Two-argument arctangent, `self` as y and `rhs` as x. The backward
    /// rule guards the `x^2 + y^2` denominator so exactly-achromatic points
    /// contribute zero gradient instead of NaN.
    pub fn atan2(self, rhs: Tensor<'t>) -> Tensor<'t> {
        self.binary(rhs, BinaryKind::Atan2)
    }

    pub fn sum(self) -> Tensor<'t> {
        self.reduce(ReduceKind::Sum)
    }

    pub fn mean(self) -> Tensor<'t> {
        self.reduce(ReduceKind::Mean)
    }

    /// Sum of absolute values.
    pub fn l1(self) -> Tensor<'t> {
        self.reduce(ReduceKind::L1)
    }

    /// Frobenius norm, `sqrt(sum of squares)`.
    pub fn fro(self) -> Tensor<'t> {
        self.reduce(ReduceKind::Fro)
    }

    /// Squared Frobenius norm.
    pub fn fro_sq(self) -> Tensor<'t> {
        self.reduce(ReduceKind::FroSq)
    }

    /// Extracts channel `c` of a rank-3 `[C, H, W]` tensor as `[1, H, W]`.
    pub fn slice_channel(self, channel: usize) -> Tensor<'t> {
        let (shape, values, rg) = {
            let nodes = self.tape.nodes.borrow();
            let node = &nodes[self.index];
            let dims = node.shape.dims();
            assert_eq!(dims.len(), 3, "slice_channel expects a [C, H, W] tensor");
            assert!(channel < dims[0], "channel {channel} out of range");
            let hw = dims[1] * dims[2];
            let values = node.values[channel * hw..(channel + 1) * hw].to_vec();
            (
                Shape::new(&[1, dims[1], dims[2]]),
                values,
                node.requires_grad,
            )
        };
        self.tape.push(
            shape,
            values,
            rg,
            OpRecord::SliceChannel {
                input: self.index,
                channel,
            },
        )
    }

    /// Forward finite difference along an image axis with replicate
    /// boundary: the final column (or row) of the output is zero. Matches
    /// [`crate::img::ImageTensor::spatial_gradients`] bit for bit.
    pub fn spatial_diff(self, axis: Axis) -> Tensor<'t> {
        let (shape, values, rg) = {
            let nodes = self.tape.nodes.borrow();
            let node = &nodes[self.index];
            let (h, w) = node.shape.spatial();
            let planes = node.shape.planes();
            let values = ops::diff_forward(&node.values, planes, h, w, axis);
            (node.shape.clone(), values, node.requires_grad)
        };
        self.tape.push(
            shape,
            values,
            rg,
            OpRecord::SpatialDiff {
                input: self.index,
                axis,
            },
        )
    }

    /// 3x3 same-size cross-correlation with zero padding and stride 1.
    /// `self` is `[C_in, H, W]`, `kernel` is `[C_out, C_in, 3, 3]`, `bias`
    /// is `[C_out]`; output is `[C_out, H, W]`.
    pub fn conv2d(self, kernel: Tensor<'t>, bias: Tensor<'t>) -> Tensor<'t> {
        let (shape, values, rg) = {
            let nodes = self.tape.nodes.borrow();
            let input = &nodes[self.index];
            let k = &nodes[kernel.index];
            let b = &nodes[bias.index];
            let in_dims = input.shape.dims();
            let k_dims = k.shape.dims();
            assert_eq!(in_dims.len(), 3, "conv2d input must be [C, H, W]");
            assert_eq!(k_dims.len(), 4, "conv2d kernel must be [Co, Ci, 3, 3]");
            assert_eq!(
                k_dims[1], in_dims[0],
                "kernel input channels {} do not match input channels {}",
                k_dims[1], in_dims[0]
            );
            assert_eq!((k_dims[2], k_dims[3]), (3, 3), "kernel window must be 3x3");
            assert_eq!(b.shape.dims(), &[k_dims[0]], "bias must be [C_out]");
            let (h, w) = (in_dims[1], in_dims[2]);
            let values = conv::forward(
                &input.values,
                in_dims[0],
                h,
                w,
                &k.values,
                k_dims[0],
                &b.values,
            );
            (
                Shape::new(&[k_dims[0], h, w]),
                values,
                input.requires_grad || k.requires_grad || b.requires_grad,
            )
        };
        self.tape.push(
            shape,
            values,
            rg,
            OpRecord::Conv2d {
                input: self.index,
                kernel: kernel.index,
                bias: bias.index,
            },
        )
    }
}

impl<'t> std::ops::Add for Tensor<'t> {
    type Output = Tensor<'t>;
    fn add(self, rhs: Self) -> Tensor<'t> {
        self.binary(rhs, BinaryKind::Add)
    }
}

impl<'t> std::ops::Sub for Tensor<'t> {
    type Output = Tensor<'t>;
    fn sub(self, rhs: Self) -> Tensor<'t> {
        self.binary(rhs, BinaryKind::Sub)
    }
}

impl<'t> std::ops::Mul for Tensor<'t> {
    type Output = Tensor<'t>;
    fn mul(self, rhs: Self) -> Tensor<'t> {
        self.binary(rhs, BinaryKind::Mul)
    }
}

impl<'t> std::ops::Div for Tensor<'t> {
    type Output = Tensor<'t>;
    fn div(self, rhs: Self) -> Tensor<'t> {
        self.binary(rhs, BinaryKind::Div)
    }
}

impl<'t> std::ops::Neg for Tensor<'t> {
    type Output = Tensor<'t>;
    fn neg(self) -> Tensor<'t> {
        self.unary(UnaryKind::Negate)
    }
}

impl<'t> std::ops::Add<f64> for Tensor<'t> {
    type Output = Tensor<'t>;
    fn add(self, c: f64) -> Tensor<'t> {
        self.add_scalar(c)
    }
}

impl<'t> std::ops::Sub<f64> for Tensor<'t> {
    type Output = Tensor<'t>;
    fn sub(self, c: f64) -> Tensor<'t> {
        self.add_scalar(-c)
    }
}

impl<'t> std::ops::Mul<f64> for Tensor<'t> {
    type Output = Tensor<'t>;
    fn mul(self, c: f64) -> Tensor<'t> {
        self.mul_scalar(c)
    }
}

impl<'t> std::ops::Mul<Tensor<'t>> for f64 {
    type Output = Tensor<'t>;
    fn mul(self, t: Tensor<'t>) -> Tensor<'t> {
        t.mul_scalar(self)
    }
}
