//! Operation records and forward kernels for the tape.

use super::Shape;

/// Gradient-rule bookkeeping for one tape node.
#[derive(Clone, Copy, Debug)]
pub(crate) enum OpRecord {
    Leaf,
    Unary {
        kind: UnaryKind,
        input: usize,
    },
    Binary {
        kind: BinaryKind,
        lhs: usize,
        rhs: usize,
        broadcast: Broadcast,
    },
    Reduce {
        kind: ReduceKind,
        input: usize,
    },
    SliceChannel {
        input: usize,
        channel: usize,
    },
    SpatialDiff {
        input: usize,
        axis: Axis,
    },
    Conv2d {
        input: usize,
        kernel: usize,
        bias: usize,
    },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum UnaryKind {
    Negate,
    Abs,
    Exp,
    Relu,
    Sigmoid,
    Tanh,
    PowConst(f64),
    Clamp(f64, f64),
    WrapAngle,
    AddConst(f64),
    MulConst(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinaryKind {
    Add,
    Sub,
    Mul,
    Div,
    Atan2,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReduceKind {
    Sum,
    Mean,
    L1,
    Fro,
    FroSq,
}

/// Finite-difference axis over the trailing two extents.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    Horizontal,
    Vertical,
}

/// Legal elementwise pairings: equal shapes, a one-element operand against
/// anything, or a `[1, H, W]` map against `[C, H, W]` (the payload is `H*W`).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Broadcast {
    Same,
    LhsScalar,
    RhsScalar,
    LhsChannel(usize),
    RhsChannel(usize),
}

impl Broadcast {
    pub(crate) fn resolve(lhs: &Shape, rhs: &Shape) -> Broadcast {
        if lhs == rhs {
            return Broadcast::Same;
        }
        if lhs.is_scalar() {
            return Broadcast::LhsScalar;
        }
        if rhs.is_scalar() {
            return Broadcast::RhsScalar;
        }
        if lhs.rank() == 3 && rhs.rank() == 3 {
            let (ld, rd) = (lhs.dims(), rhs.dims());
            if ld[1] == rd[1] && ld[2] == rd[2] {
                let hw = ld[1] * ld[2];
                if ld[0] == 1 && rd[0] > 1 {
                    return Broadcast::LhsChannel(hw);
                }
                if rd[0] == 1 && ld[0] > 1 {
                    return Broadcast::RhsChannel(hw);
                }
            }
        }
        panic!(
            "no legal broadcast between shapes {:?} and {:?}",
            lhs.dims(),
            rhs.dims()
        );
    }

    #[inline]
    pub(crate) fn lhs_index(&self, i: usize) -> usize {
        match self {
            Broadcast::LhsScalar => 0,
            Broadcast::LhsChannel(hw) => i % hw,
            _ => i,
        }
    }

    #[inline]
    pub(crate) fn rhs_index(&self, i: usize) -> usize {
        match self {
            Broadcast::RhsScalar => 0,
            Broadcast::RhsChannel(hw) => i % hw,
            _ => i,
        }
    }
}

pub(crate) fn unary_forward(kind: UnaryKind, x: &[f64]) -> Vec<f64> {
    use UnaryKind::*;
    let f = |v: f64| -> f64 {
        match kind {
            Negate => -v,
            Abs => v.abs(),
            Exp => v.exp(),
            Relu => v.max(0.0),
            Sigmoid => 1.0 / (1.0 + (-v).exp()),
            Tanh => v.tanh(),
            PowConst(c) => v.powf(c),
            Clamp(lo, hi) => v.clamp(lo, hi),
            WrapAngle => wrap_angle(v),
            AddConst(c) => v + c,
            MulConst(c) => v * c,
        }
    };
    x.iter().map(|&v| f(v)).collect()
}

/// Local derivative of a unary op given input and output values.
#[inline]
pub(crate) fn unary_derivative(kind: UnaryKind, x: f64, out: f64) -> f64 {
    use UnaryKind::*;
    match kind {
        Negate => -1.0,
        // Subgradient 0 at the kink.
        Abs => {
            if x > 0.0 {
                1.0
            } else if x < 0.0 {
                -1.0
            } else {
                0.0
            }
        }
        Exp => out,
        Relu => {
            if x > 0.0 {
                1.0
            } else {
                0.0
            }
        }
        Sigmoid => out * (1.0 - out),
        Tanh => 1.0 - out * out,
        PowConst(c) => c * x.powf(c - 1.0),
        // Boundaries block gradient.
        Clamp(lo, hi) => {
            if x > lo && x < hi {
                1.0
            } else {
                0.0
            }
        }
        WrapAngle => 1.0,
        AddConst(_) => 1.0,
        MulConst(c) => c,
    }
}

pub(crate) fn wrap_angle(v: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let mut w = v % TAU;
    if w > PI {
        w -= TAU;
    } else if w <= -PI {
        w += TAU;
    }
    w
}

pub(crate) fn binary_forward(
    kind: BinaryKind,
    lhs: &[f64],
    rhs: &[f64],
    bc: Broadcast,
) -> Vec<f64> {
    let n = lhs.len().max(rhs.len());
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let l = lhs[bc.lhs_index(i)];
        let r = rhs[bc.rhs_index(i)];
        out.push(match kind {
            BinaryKind::Add => l + r,
            BinaryKind::Sub => l - r,
            BinaryKind::Mul => l * r,
            BinaryKind::Div => l / r,
            BinaryKind::Atan2 => {
                if l == 0.0 && r == 0.0 {
                    0.0
                } else {
                    l.atan2(r)
                }
            }
        });
    }
    out
}

/// Partial derivatives `(d/d_lhs, d/d_rhs)` of a binary op at `(l, r)`.
#[inline]
pub(crate) fn binary_partials(kind: BinaryKind, l: f64, r: f64) -> (f64, f64) {
    match kind {
        BinaryKind::Add => (1.0, 1.0),
        BinaryKind::Sub => (1.0, -1.0),
        BinaryKind::Mul => (r, l),
        BinaryKind::Div => {
            // Machine-epsilon floor on the denominator.
            let rg = if r.abs() < f64::EPSILON {
                f64::EPSILON.copysign(r)
            } else {
                r
            };
            (1.0 / rg, -l / (rg * rg))
        }
        BinaryKind::Atan2 => {
            let d = l * l + r * r;
            if d < 1e-24 {
                (0.0, 0.0)
            } else {
                (r / d, -l / d)
            }
        }
    }
}

pub(crate) fn reduce_forward(kind: ReduceKind, x: &[f64]) -> f64 {
    match kind {
        ReduceKind::Sum => x.iter().sum(),
        ReduceKind::Mean => x.iter().sum::<f64>() / x.len() as f64,
        ReduceKind::L1 => x.iter().map(|v| v.abs()).sum(),
        ReduceKind::Fro => x.iter().map(|v| v * v).sum::<f64>().sqrt(),
        ReduceKind::FroSq => x.iter().map(|v| v * v).sum(),
    }
}

pub(crate) fn diff_forward(
    vals: &[f64],
    planes: usize,
    h: usize,
    w: usize,
    axis: Axis,
) -> Vec<f64> {
    let mut out = vec![0.0; vals.len()];
    for p in 0..planes {
        let base = p * h * w;
        match axis {
            Axis::Horizontal => {
                for y in 0..h {
                    let row = base + y * w;
                    for x in 0..w - 1 {
                        out[row + x] = vals[row + x + 1] - vals[row + x];
                    }
                }
            }
            Axis::Vertical => {
                for y in 0..h - 1 {
                    let row = base + y * w;
                    for x in 0..w {
                        out[row + x] = vals[row + w + x] - vals[row + x];
                    }
                }
            }
        }
    }
    out
}
