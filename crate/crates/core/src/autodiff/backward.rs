//! Reverse sweep: adjoints flow from the loss root back to the leaves in
//! one pass over the tape in reverse creation order (creation order is
//! already topological).

use super::ops::{binary_partials, unary_derivative, Axis, OpRecord, ReduceKind};
use super::{conv, Tape};

impl Tape {
    pub(crate) fn backward_from(&self, root: usize) {
        let mut nodes = self.nodes.borrow_mut();
        let mut adjoints: Vec<Option<Vec<f64>>> = vec![None; nodes.len()];
        adjoints[root] = Some(vec![1.0]);

        for id in (0..=root).rev() {
            if !nodes[id].requires_grad {
                continue;
            }
            let Some(gout) = adjoints[id].take() else {
                continue;
            };
            match nodes[id].op {
                OpRecord::Leaf => {
                    adjoints[id] = Some(gout); // restored for the leaf pass below
                    continue;
                }
                OpRecord::Unary { kind, input } => {
                    if nodes[input].requires_grad {
                        let adj = ensure(&mut adjoints, input, nodes[input].values.len());
                        let x = &nodes[input].values;
                        let out = &nodes[id].values;
                        for i in 0..adj.len() {
                            adj[i] += gout[i] * unary_derivative(kind, x[i], out[i]);
                        }
                    }
                }
                OpRecord::Binary {
                    kind,
                    lhs,
                    rhs,
                    broadcast,
                } => {
                    let lhs_rg = nodes[lhs].requires_grad;
                    let rhs_rg = nodes[rhs].requires_grad;
                    // Accumulate one side at a time; sides may alias shapes
                    // but never the same adjoint buffer unless lhs == rhs.
                    if lhs_rg {
                        let n = gout.len();
                        let adj = ensure(&mut adjoints, lhs, nodes[lhs].values.len());
                        for i in 0..n {
                            let l = nodes[lhs].values[broadcast.lhs_index(i)];
                            let r = nodes[rhs].values[broadcast.rhs_index(i)];
                            let (pl, _) = binary_partials(kind, l, r);
                            adj[broadcast.lhs_index(i)] += gout[i] * pl;
                        }
                    }
                    if rhs_rg {
                        let n = gout.len();
                        let adj = ensure(&mut adjoints, rhs, nodes[rhs].values.len());
                        for i in 0..n {
                            let l = nodes[lhs].values[broadcast.lhs_index(i)];
                            let r = nodes[rhs].values[broadcast.rhs_index(i)];
                            let (_, pr) = binary_partials(kind, l, r);
                            adj[broadcast.rhs_index(i)] += gout[i] * pr;
                        }
                    }
                }
                OpRecord::Reduce { kind, input } => {
                    if nodes[input].requires_grad {
                        let g = gout[0];
                        let out = nodes[id].values[0];
                        let n = nodes[input].values.len() as f64;
                        let adj = ensure(&mut adjoints, input, nodes[input].values.len());
                        let x = &nodes[input].values;
                        match kind {
                            ReduceKind::Sum => adj.iter_mut().for_each(|a| *a += g),
                            ReduceKind::Mean => adj.iter_mut().for_each(|a| *a += g / n),
                            ReduceKind::L1 => {
                                for (a, &v) in adj.iter_mut().zip(x) {
                                    *a += g * if v > 0.0 {
                                        1.0
                                    } else if v < 0.0 {
                                        -1.0
                                    } else {
                                        0.0
                                    };
                                }
                            }
                            ReduceKind::Fro => {
                                let denom = out.max(1e-12);
                                for (a, &v) in adj.iter_mut().zip(x) {
                                    *a += g * v / denom;
                                }
                            }
                            ReduceKind::FroSq => {
                                for (a, &v) in adj.iter_mut().zip(x) {
                                    *a += g * 2.0 * v;
                                }
                            }
                        }
                    }
                }
                OpRecord::SliceChannel { input, channel } => {
                    if nodes[input].requires_grad {
                        let hw = gout.len();
                        let adj = ensure(&mut adjoints, input, nodes[input].values.len());
                        for (p, &g) in gout.iter().enumerate() {
                            adj[channel * hw + p] += g;
                        }
                    }
                }
                OpRecord::SpatialDiff { input, axis } => {
                    if nodes[input].requires_grad {
                        let (h, w) = nodes[input].shape.spatial();
                        let planes = nodes[input].shape.planes();
                        let adj = ensure(&mut adjoints, input, nodes[input].values.len());
                        for p in 0..planes {
                            let base = p * h * w;
                            match axis {
                                Axis::Horizontal => {
                                    for y in 0..h {
                                        let row = base + y * w;
                                        for x in 0..w - 1 {
                                            let g = gout[row + x];
                                            adj[row + x + 1] += g;
                                            adj[row + x] -= g;
                                        }
                                    }
                                }
                                Axis::Vertical => {
                                    for y in 0..h - 1 {
                                        let row = base + y * w;
                                        for x in 0..w {
                                            let g = gout[row + x];
                                            adj[row + w + x] += g;
                                            adj[row + x] -= g;
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
                OpRecord::Conv2d {
                    input,
                    kernel,
                    bias,
                } => {
                    let dims = nodes[input].shape.dims().to_vec();
                    let (ci, h, w) = (dims[0], dims[1], dims[2]);
                    let co = nodes[kernel].shape.dims()[0];
                    let need_in = nodes[input].requires_grad;
                    let need_k = nodes[kernel].requires_grad;
                    let need_b = nodes[bias].requires_grad;
                    if need_in {
                        ensure(&mut adjoints, input, nodes[input].values.len());
                    }
                    if need_k {
                        ensure(&mut adjoints, kernel, nodes[kernel].values.len());
                    }
                    if need_b {
                        ensure(&mut adjoints, bias, nodes[bias].values.len());
                    }
                    // Split the three adjoint buffers out of the vec so they
                    // can be borrowed mutably at once (indices are distinct).
                    let mut d_input = if need_in { adjoints[input].take() } else { None };
                    let mut d_kernel = if need_k { adjoints[kernel].take() } else { None };
                    let mut d_bias = if need_b { adjoints[bias].take() } else { None };
                    conv::backward(
                        &nodes[input].values,
                        ci,
                        h,
                        w,
                        &nodes[kernel].values,
                        co,
                        &gout,
                        d_input.as_deref_mut(),
                        d_kernel.as_deref_mut(),
                        d_bias.as_deref_mut(),
                    );
                    if need_in {
                        adjoints[input] = d_input;
                    }
                    if need_k {
                        adjoints[kernel] = d_kernel;
                    }
                    if need_b {
                        adjoints[bias] = d_bias;
                    }
                }
            }
        }

        // Materialize gradients on every tracked leaf, additively.
        for (id, node) in nodes.iter_mut().enumerate() {
            if !matches!(node.op, OpRecord::Leaf) || !node.requires_grad {
                continue;
            }
            let grad = node.grad.get_or_insert_with(|| vec![0.0; node.values.len()]);
            if let Some(adj) = adjoints[id].take() {
                for (g, a) in grad.iter_mut().zip(adj) {
                    *g += a;
                }
            }
        }
    }
}

fn ensure(adjoints: &mut [Option<Vec<f64>>], id: usize, len: usize) -> &mut Vec<f64> {
    adjoints[id].get_or_insert_with(|| vec![0.0; len])
}
