//! Dense tensors with reverse-mode differentiation.
//!
//! A [`Tape`] records every operation eagerly: each op appends a node holding
//! its value, and [`Tape::grad_nodes`] builds the backward pass *as new graph
//! nodes* using the same op vocabulary. Because every op's vector-Jacobian
//! product is itself expressed through graph ops, gradients are differentiable
//! again — which is what the Wasserstein gradient penalty needs when it
//! backpropagates the norm of an input gradient into critic parameters.
//!
//! Values are stored as `f64`; file formats quantize to `f32` at the I/O
//! boundary only.

pub mod checkpoint;
mod kernels;

use crate::error::{Error, Result};

/// Handle to a node in a [`Tape`]. Cheap to copy; only valid for the tape
/// that created it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tensor {
    id: usize,
}

impl Tensor {
    pub fn id(&self) -> usize {
        self.id
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    AddScalar(usize),
    MulScalar(usize, f64),
    Recip(usize),
    Sqrt(usize),
    Relu(usize),
    LeakyRelu(usize, f64),
    Tanh(usize),
    MatMul {
        a: usize,
        b: usize,
        ta: bool,
        tb: bool,
    },
    Conv1d {
        x: usize,
        k: usize,
        stride: usize,
    },
    Conv1dBackInput {
        dy: usize,
        k: usize,
        stride: usize,
    },
    Conv1dBackKernel {
        x: usize,
        dy: usize,
        stride: usize,
    },
    Conv2d {
        x: usize,
        k: usize,
        pad: usize,
    },
    Conv2dBackInput {
        dy: usize,
        k: usize,
        pad: usize,
    },
    Conv2dBackKernel {
        x: usize,
        dy: usize,
        pad: usize,
    },
    Concat {
        a: usize,
        b: usize,
        axis: usize,
    },
    Slice {
        x: usize,
        axis: usize,
        start: usize,
        len: usize,
    },
    Reshape(usize),
    SumAll(usize),
    BroadcastAll(usize),
    SumPerSample(usize),
    BroadcastPerSample(usize),
    SumPerChannel(usize),
    BroadcastPerChannel(usize),
}

struct Node {
    op: Op,
    shape: Vec<usize>,
    value: Vec<f64>,
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

/// Eagerly-evaluated computation graph.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    backward_done: bool,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn shape(&self, t: Tensor) -> &[usize] {
        &self.nodes[t.id].shape
    }

    pub fn value(&self, t: Tensor) -> &[f64] {
        &self.nodes[t.id].value
    }

    pub fn numel(&self, t: Tensor) -> usize {
        self.nodes[t.id].value.len()
    }

    fn push(&mut self, op: Op, shape: Vec<usize>, value: Vec<f64>) -> Tensor {
        debug_assert_eq!(numel(&shape), value.len());
        let id = self.nodes.len();
        self.nodes.push(Node { op, shape, value });
        Tensor { id }
    }

    // ------------------------------------------------------------------
    // Leaves
    // ------------------------------------------------------------------

    /// Insert a leaf holding `data` with the given shape.
    pub fn leaf(&mut self, data: Vec<f64>, shape: &[usize]) -> Result<Tensor> {
        if numel(shape) != data.len() {
            return Err(Error::ShapeMismatch {
                op: "leaf",
                lhs: shape.to_vec(),
                rhs: vec![data.len()],
            });
        }
        Ok(self.push(Op::Leaf, shape.to_vec(), data))
    }

    pub fn scalar(&mut self, v: f64) -> Tensor {
        self.push(Op::Leaf, vec![1], vec![v])
    }

    pub fn zeros(&mut self, shape: &[usize]) -> Tensor {
        self.push(Op::Leaf, shape.to_vec(), vec![0.0; numel(shape)])
    }

    // ------------------------------------------------------------------
    // Elementwise ops
    // ------------------------------------------------------------------

    fn check_same_shape(&self, op: &'static str, a: Tensor, b: Tensor) -> Result<()> {
        if self.nodes[a.id].shape != self.nodes[b.id].shape {
            return Err(Error::ShapeMismatch {
                op,
                lhs: self.nodes[a.id].shape.clone(),
                rhs: self.nodes[b.id].shape.clone(),
            });
        }
        Ok(())
    }

    pub fn add(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        self.check_same_shape("add", a, b)?;
        let value: Vec<f64> = self.nodes[a.id]
            .value
            .iter()
            .zip(&self.nodes[b.id].value)
            .map(|(x, y)| x + y)
            .collect();
        let shape = self.nodes[a.id].shape.clone();
        Ok(self.push(Op::Add(a.id, b.id), shape, value))
    }

    pub fn sub(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        self.check_same_shape("sub", a, b)?;
        let value: Vec<f64> = self.nodes[a.id]
            .value
            .iter()
            .zip(&self.nodes[b.id].value)
            .map(|(x, y)| x - y)
            .collect();
        let shape = self.nodes[a.id].shape.clone();
        Ok(self.push(Op::Sub(a.id, b.id), shape, value))
    }

    pub fn mul(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        self.check_same_shape("mul", a, b)?;
        let value: Vec<f64> = self.nodes[a.id]
            .value
            .iter()
            .zip(&self.nodes[b.id].value)
            .map(|(x, y)| x * y)
            .collect();
        let shape = self.nodes[a.id].shape.clone();
        Ok(self.push(Op::Mul(a.id, b.id), shape, value))
    }

    pub fn add_scalar(&mut self, x: Tensor, c: f64) -> Tensor {
        let value: Vec<f64> = self.nodes[x.id].value.iter().map(|v| v + c).collect();
        let shape = self.nodes[x.id].shape.clone();
        self.push(Op::AddScalar(x.id), shape, value)
    }

    pub fn mul_scalar(&mut self, x: Tensor, c: f64) -> Tensor {
        let value: Vec<f64> = self.nodes[x.id].value.iter().map(|v| v * c).collect();
        let shape = self.nodes[x.id].shape.clone();
        self.push(Op::MulScalar(x.id, c), shape, value)
    }

    pub fn neg(&mut self, x: Tensor) -> Tensor {
        self.mul_scalar(x, -1.0)
    }

    pub fn recip(&mut self, x: Tensor) -> Tensor {
        let value: Vec<f64> = self.nodes[x.id].value.iter().map(|v| 1.0 / v).collect();
        let shape = self.nodes[x.id].shape.clone();
        self.push(Op::Recip(x.id), shape, value)
    }

    pub fn sqrt(&mut self, x: Tensor) -> Tensor {
        let value: Vec<f64> = self.nodes[x.id].value.iter().map(|v| v.sqrt()).collect();
        let shape = self.nodes[x.id].shape.clone();
        self.push(Op::Sqrt(x.id), shape, value)
    }

    pub fn relu(&mut self, x: Tensor) -> Tensor {
        let value: Vec<f64> = self.nodes[x.id].value.iter().map(|v| v.max(0.0)).collect();
        let shape = self.nodes[x.id].shape.clone();
        self.push(Op::Relu(x.id), shape, value)
    }

    pub fn leaky_relu(&mut self, x: Tensor, slope: f64) -> Tensor {
        let value: Vec<f64> = self.nodes[x.id]
            .value
            .iter()
            .map(|&v| if v >= 0.0 { v } else { slope * v })
            .collect();
        let shape = self.nodes[x.id].shape.clone();
        self.push(Op::LeakyRelu(x.id, slope), shape, value)
    }

    pub fn tanh(&mut self, x: Tensor) -> Tensor {
        let value: Vec<f64> = self.nodes[x.id].value.iter().map(|v| v.tanh()).collect();
        let shape = self.nodes[x.id].shape.clone();
        self.push(Op::Tanh(x.id), shape, value)
    }

    // ------------------------------------------------------------------
    // Linear algebra / convolution
    // ------------------------------------------------------------------

    fn dims2(&self, op: &'static str, t: Tensor) -> Result<(usize, usize)> {
        let s = &self.nodes[t.id].shape;
        if s.len() != 2 {
            return Err(Error::ShapeMismatch {
                op,
                lhs: s.clone(),
                rhs: vec![0, 0],
            });
        }
        Ok((s[0], s[1]))
    }

    /// Matrix product with optional transposes: `op_ta(a) · op_tb(b)`.
    pub fn matmul(&mut self, a: Tensor, b: Tensor, ta: bool, tb: bool) -> Result<Tensor> {
        let (ar, ac) = self.dims2("matmul", a)?;
        let (br, bc) = self.dims2("matmul", b)?;
        let (m, k) = if ta { (ac, ar) } else { (ar, ac) };
        let (kb, n) = if tb { (bc, br) } else { (br, bc) };
        if k != kb {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                lhs: self.nodes[a.id].shape.clone(),
                rhs: self.nodes[b.id].shape.clone(),
            });
        }
        let mut value = vec![0.0; m * n];
        kernels::matmul(
            &self.nodes[a.id].value,
            (ar, ac),
            ta,
            &self.nodes[b.id].value,
            (br, bc),
            tb,
            &mut value,
        );
        Ok(self.push(
            Op::MatMul {
                a: a.id,
                b: b.id,
                ta,
                tb,
            },
            vec![m, n],
            value,
        ))
    }

    fn dims3(&self, op: &'static str, t: Tensor) -> Result<(usize, usize, usize)> {
        let s = &self.nodes[t.id].shape;
        if s.len() != 3 {
            return Err(Error::ShapeMismatch {
                op,
                lhs: s.clone(),
                rhs: vec![0, 0, 0],
            });
        }
        Ok((s[0], s[1], s[2]))
    }

    fn dims4(&self, op: &'static str, t: Tensor) -> Result<(usize, usize, usize, usize)> {
        let s = &self.nodes[t.id].shape;
        if s.len() != 4 {
            return Err(Error::ShapeMismatch {
                op,
                lhs: s.clone(),
                rhs: vec![0, 0, 0, 0],
            });
        }
        Ok((s[0], s[1], s[2], s[3]))
    }

    /// Valid 1-D convolution, input (N, Ci, L), kernel (Co, Ci, K).
    pub fn conv1d(&mut self, x: Tensor, k: Tensor, stride: usize) -> Result<Tensor> {
        let (n, ci, l) = self.dims3("conv1d", x)?;
        let (co, kci, kl) = self.dims3("conv1d", k)?;
        if kci != ci || kl > l || stride == 0 {
            return Err(Error::ShapeMismatch {
                op: "conv1d",
                lhs: self.nodes[x.id].shape.clone(),
                rhs: self.nodes[k.id].shape.clone(),
            });
        }
        let lo = kernels::conv1d_out_len(l, kl, stride);
        let mut value = vec![0.0; n * co * lo];
        kernels::conv1d(
            &self.nodes[x.id].value,
            (n, ci, l),
            &self.nodes[k.id].value,
            (co, ci, kl),
            stride,
            &mut value,
        );
        Ok(self.push(
            Op::Conv1d {
                x: x.id,
                k: k.id,
                stride,
            },
            vec![n, co, lo],
            value,
        ))
    }

    /// Adjoint of [`Tape::conv1d`] w.r.t. its input, exposed as a first-class
    /// op so the backward pass stays differentiable.
    pub fn conv1d_back_input(
        &mut self,
        dy: Tensor,
        k: Tensor,
        stride: usize,
        in_len: usize,
    ) -> Result<Tensor> {
        let (n, co, lo) = self.dims3("conv1d_back_input", dy)?;
        let (kco, ci, kl) = self.dims3("conv1d_back_input", k)?;
        if kco != co || kernels::conv1d_out_len(in_len, kl, stride) != lo {
            return Err(Error::ShapeMismatch {
                op: "conv1d_back_input",
                lhs: self.nodes[dy.id].shape.clone(),
                rhs: self.nodes[k.id].shape.clone(),
            });
        }
        let mut value = vec![0.0; n * ci * in_len];
        kernels::conv1d_back_input(
            &self.nodes[dy.id].value,
            (n, co, lo),
            &self.nodes[k.id].value,
            (co, ci, kl),
            stride,
            in_len,
            &mut value,
        );
        Ok(self.push(
            Op::Conv1dBackInput {
                dy: dy.id,
                k: k.id,
                stride,
            },
            vec![n, ci, in_len],
            value,
        ))
    }

    /// Adjoint of [`Tape::conv1d`] w.r.t. its kernel.
    pub fn conv1d_back_kernel(
        &mut self,
        x: Tensor,
        dy: Tensor,
        stride: usize,
        k_len: usize,
    ) -> Result<Tensor> {
        let (n, ci, l) = self.dims3("conv1d_back_kernel", x)?;
        let (n2, co, lo) = self.dims3("conv1d_back_kernel", dy)?;
        if n2 != n || kernels::conv1d_out_len(l, k_len, stride) != lo {
            return Err(Error::ShapeMismatch {
                op: "conv1d_back_kernel",
                lhs: self.nodes[x.id].shape.clone(),
                rhs: self.nodes[dy.id].shape.clone(),
            });
        }
        let mut value = vec![0.0; co * ci * k_len];
        kernels::conv1d_back_kernel(
            &self.nodes[x.id].value,
            (n, ci, l),
            &self.nodes[dy.id].value,
            (n, co, lo),
            stride,
            k_len,
            &mut value,
        );
        Ok(self.push(
            Op::Conv1dBackKernel {
                x: x.id,
                dy: dy.id,
                stride,
            },
            vec![co, ci, k_len],
            value,
        ))
    }

    /// Transposed 1-D convolution, input (N, Ci, L), kernel (Ci, Co, K),
    /// output (N, Co, L + K - 1). Implemented as the adjoint of a stride-1
    /// valid convolution.
    pub fn conv_transpose1d(&mut self, x: Tensor, k: Tensor) -> Result<Tensor> {
        let (_, ci, l) = self.dims3("conv_transpose1d", x)?;
        let (kci, _, kl) = self.dims3("conv_transpose1d", k)?;
        if kci != ci {
            return Err(Error::ShapeMismatch {
                op: "conv_transpose1d",
                lhs: self.nodes[x.id].shape.clone(),
                rhs: self.nodes[k.id].shape.clone(),
            });
        }
        // A (Ci, Co, K) kernel read as (Co', Ci', K) with Co' = Ci describes
        // the virtual forward conv (N, Co, L+K-1) -> (N, Ci, L) whose adjoint
        // is exactly this transposed convolution.
        self.conv1d_back_input(x, k, 1, l + kl - 1)
    }

    /// Stride-1 2-D convolution with symmetric zero padding,
    /// input (N, Ci, H, W), kernel (Co, Ci, Kh, Kw).
    pub fn conv2d(&mut self, x: Tensor, k: Tensor, pad: usize) -> Result<Tensor> {
        let (n, ci, h, w) = self.dims4("conv2d", x)?;
        let (co, kci, kh, kw) = self.dims4("conv2d", k)?;
        if kci != ci || kh > h + 2 * pad || kw > w + 2 * pad {
            return Err(Error::ShapeMismatch {
                op: "conv2d",
                lhs: self.nodes[x.id].shape.clone(),
                rhs: self.nodes[k.id].shape.clone(),
            });
        }
        let ho = kernels::conv2d_out_side(h, kh, pad);
        let wo = kernels::conv2d_out_side(w, kw, pad);
        let mut value = vec![0.0; n * co * ho * wo];
        kernels::conv2d(
            &self.nodes[x.id].value,
            (n, ci, h, w),
            &self.nodes[k.id].value,
            (co, ci, kh, kw),
            pad,
            &mut value,
        );
        Ok(self.push(
            Op::Conv2d {
                x: x.id,
                k: k.id,
                pad,
            },
            vec![n, co, ho, wo],
            value,
        ))
    }

    pub fn conv2d_back_input(
        &mut self,
        dy: Tensor,
        k: Tensor,
        pad: usize,
        in_hw: (usize, usize),
    ) -> Result<Tensor> {
        let (n, co, ho, wo) = self.dims4("conv2d_back_input", dy)?;
        let (kco, ci, kh, kw) = self.dims4("conv2d_back_input", k)?;
        if kco != co
            || kernels::conv2d_out_side(in_hw.0, kh, pad) != ho
            || kernels::conv2d_out_side(in_hw.1, kw, pad) != wo
        {
            return Err(Error::ShapeMismatch {
                op: "conv2d_back_input",
                lhs: self.nodes[dy.id].shape.clone(),
                rhs: self.nodes[k.id].shape.clone(),
            });
        }
        let mut value = vec![0.0; n * ci * in_hw.0 * in_hw.1];
        kernels::conv2d_back_input(
            &self.nodes[dy.id].value,
            (n, co, ho, wo),
            &self.nodes[k.id].value,
            (co, ci, kh, kw),
            pad,
            in_hw,
            &mut value,
        );
        Ok(self.push(
            Op::Conv2dBackInput {
                dy: dy.id,
                k: k.id,
                pad,
            },
            vec![n, ci, in_hw.0, in_hw.1],
            value,
        ))
    }

    pub fn conv2d_back_kernel(
        &mut self,
        x: Tensor,
        dy: Tensor,
        pad: usize,
        k_hw: (usize, usize),
    ) -> Result<Tensor> {
        let (n, ci, h, w) = self.dims4("conv2d_back_kernel", x)?;
        let (n2, co, ho, wo) = self.dims4("conv2d_back_kernel", dy)?;
        if n2 != n
            || kernels::conv2d_out_side(h, k_hw.0, pad) != ho
            || kernels::conv2d_out_side(w, k_hw.1, pad) != wo
        {
            return Err(Error::ShapeMismatch {
                op: "conv2d_back_kernel",
                lhs: self.nodes[x.id].shape.clone(),
                rhs: self.nodes[dy.id].shape.clone(),
            });
        }
        let mut value = vec![0.0; co * ci * k_hw.0 * k_hw.1];
        kernels::conv2d_back_kernel(
            &self.nodes[x.id].value,
            (n, ci, h, w),
            &self.nodes[dy.id].value,
            (n, co, ho, wo),
            pad,
            k_hw,
            &mut value,
        );
        Ok(self.push(
            Op::Conv2dBackKernel {
                x: x.id,
                dy: dy.id,
                pad,
            },
            vec![co, ci, k_hw.0, k_hw.1],
            value,
        ))
    }

    // ------------------------------------------------------------------
    // Shape manipulation
    // ------------------------------------------------------------------

    pub fn reshape(&mut self, x: Tensor, shape: &[usize]) -> Result<Tensor> {
        if numel(shape) != self.nodes[x.id].value.len() {
            return Err(Error::ShapeMismatch {
                op: "reshape",
                lhs: self.nodes[x.id].shape.clone(),
                rhs: shape.to_vec(),
            });
        }
        let value = self.nodes[x.id].value.clone();
        Ok(self.push(Op::Reshape(x.id), shape.to_vec(), value))
    }

    /// Flatten all non-batch dimensions: (N, ...) -> (N, rest).
    pub fn flatten(&mut self, x: Tensor) -> Result<Tensor> {
        let s = self.nodes[x.id].shape.clone();
        let n = s[0];
        let rest = numel(&s) / n;
        self.reshape(x, &[n, rest])
    }

    /// Insert a singleton dimension at `axis`.
    pub fn unsqueeze(&mut self, x: Tensor, axis: usize) -> Result<Tensor> {
        let mut s = self.nodes[x.id].shape.clone();
        if axis > s.len() {
            return Err(Error::ShapeMismatch {
                op: "unsqueeze",
                lhs: s,
                rhs: vec![axis],
            });
        }
        s.insert(axis, 1);
        self.reshape(x, &s)
    }

    fn concat_layout(shape: &[usize], axis: usize) -> (usize, usize, usize) {
        // (outer, axis_len, inner)
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        (outer, shape[axis], inner)
    }

    pub fn concat(&mut self, a: Tensor, b: Tensor, axis: usize) -> Result<Tensor> {
        let sa = self.nodes[a.id].shape.clone();
        let sb = self.nodes[b.id].shape.clone();
        let compatible = sa.len() == sb.len()
            && axis < sa.len()
            && sa
                .iter()
                .zip(&sb)
                .enumerate()
                .all(|(i, (x, y))| i == axis || x == y);
        if !compatible {
            return Err(Error::ShapeMismatch {
                op: "concat",
                lhs: sa,
                rhs: sb,
            });
        }
        let (outer, alen, inner) = Self::concat_layout(&sa, axis);
        let blen = sb[axis];
        let mut shape = sa.clone();
        shape[axis] = alen + blen;
        let mut value = vec![0.0; numel(&shape)];
        let av = &self.nodes[a.id].value;
        let bv = &self.nodes[b.id].value;
        let ostride = (alen + blen) * inner;
        for o in 0..outer {
            value[o * ostride..o * ostride + alen * inner]
                .copy_from_slice(&av[o * alen * inner..(o + 1) * alen * inner]);
            value[o * ostride + alen * inner..(o + 1) * ostride]
                .copy_from_slice(&bv[o * blen * inner..(o + 1) * blen * inner]);
        }
        Ok(self.push(
            Op::Concat {
                a: a.id,
                b: b.id,
                axis,
            },
            shape,
            value,
        ))
    }

    pub fn slice(&mut self, x: Tensor, axis: usize, start: usize, len: usize) -> Result<Tensor> {
        let s = self.nodes[x.id].shape.clone();
        if axis >= s.len() || start + len > s[axis] || len == 0 {
            return Err(Error::ShapeMismatch {
                op: "slice",
                lhs: s,
                rhs: vec![axis, start, len],
            });
        }
        let (outer, alen, inner) = Self::concat_layout(&s, axis);
        let mut shape = s.clone();
        shape[axis] = len;
        let mut value = vec![0.0; numel(&shape)];
        let xv = &self.nodes[x.id].value;
        for o in 0..outer {
            let src = o * alen * inner + start * inner;
            value[o * len * inner..(o + 1) * len * inner]
                .copy_from_slice(&xv[src..src + len * inner]);
        }
        Ok(self.push(
            Op::Slice {
                x: x.id,
                axis,
                start,
                len,
            },
            shape,
            value,
        ))
    }

    // ------------------------------------------------------------------
    // Reductions and broadcasts
    // ------------------------------------------------------------------

    /// Sum of every element, yielding a scalar.
    pub fn sum_all(&mut self, x: Tensor) -> Tensor {
        let s: f64 = self.nodes[x.id].value.iter().sum();
        self.push(Op::SumAll(x.id), vec![1], vec![s])
    }

    /// Mean of every element, yielding a scalar.
    pub fn mean_all(&mut self, x: Tensor) -> Tensor {
        let n = self.nodes[x.id].value.len();
        let s = self.sum_all(x);
        self.mul_scalar(s, 1.0 / n as f64)
    }

    /// Broadcast a scalar to `shape`.
    pub fn broadcast_all(&mut self, s: Tensor, shape: &[usize]) -> Result<Tensor> {
        if self.nodes[s.id].value.len() != 1 {
            return Err(Error::ShapeMismatch {
                op: "broadcast_all",
                lhs: self.nodes[s.id].shape.clone(),
                rhs: vec![1],
            });
        }
        let v = self.nodes[s.id].value[0];
        Ok(self.push(
            Op::BroadcastAll(s.id),
            shape.to_vec(),
            vec![v; numel(shape)],
        ))
    }

    /// Per-sample sum over all non-batch dimensions: (N, ...) -> (N).
    pub fn sum_per_sample(&mut self, x: Tensor) -> Tensor {
        let s = &self.nodes[x.id].shape;
        let n = s[0];
        let inner = numel(s) / n;
        let v = &self.nodes[x.id].value;
        let value: Vec<f64> = (0..n)
            .map(|i| v[i * inner..(i + 1) * inner].iter().sum())
            .collect();
        self.push(Op::SumPerSample(x.id), vec![n], value)
    }

    /// Broadcast a per-sample vector (N) over `shape` = (N, ...).
    pub fn broadcast_per_sample(&mut self, v: Tensor, shape: &[usize]) -> Result<Tensor> {
        let n = shape[0];
        if self.nodes[v.id].shape != vec![n] {
            return Err(Error::ShapeMismatch {
                op: "broadcast_per_sample",
                lhs: self.nodes[v.id].shape.clone(),
                rhs: shape.to_vec(),
            });
        }
        let inner = numel(shape) / n;
        let vv = &self.nodes[v.id].value;
        let mut value = vec![0.0; numel(shape)];
        for i in 0..n {
            value[i * inner..(i + 1) * inner].fill(vv[i]);
        }
        Ok(self.push(Op::BroadcastPerSample(v.id), shape.to_vec(), value))
    }

    /// Per-channel sum over batch and spatial dims: (N, C, ...) -> (C).
    pub fn sum_per_channel(&mut self, x: Tensor) -> Result<Tensor> {
        let s = self.nodes[x.id].shape.clone();
        if s.len() < 2 {
            return Err(Error::ShapeMismatch {
                op: "sum_per_channel",
                lhs: s,
                rhs: vec![0, 0],
            });
        }
        let (n, c) = (s[0], s[1]);
        let inner: usize = s[2..].iter().product();
        let v = &self.nodes[x.id].value;
        let mut value = vec![0.0; c];
        for b in 0..n {
            for ch in 0..c {
                let base = (b * c + ch) * inner;
                value[ch] += v[base..base + inner].iter().sum::<f64>();
            }
        }
        Ok(self.push(Op::SumPerChannel(x.id), vec![c], value))
    }

    /// Broadcast a per-channel vector (C) over `shape` = (N, C, ...).
    pub fn broadcast_per_channel(&mut self, v: Tensor, shape: &[usize]) -> Result<Tensor> {
        if shape.len() < 2 || self.nodes[v.id].shape != vec![shape[1]] {
            return Err(Error::ShapeMismatch {
                op: "broadcast_per_channel",
                lhs: self.nodes[v.id].shape.clone(),
                rhs: shape.to_vec(),
            });
        }
        let (n, c) = (shape[0], shape[1]);
        let inner: usize = shape[2..].iter().product();
        let vv = self.nodes[v.id].value.clone();
        let mut value = vec![0.0; numel(shape)];
        for b in 0..n {
            for ch in 0..c {
                let base = (b * c + ch) * inner;
                value[base..base + inner].fill(vv[ch]);
            }
        }
        Ok(self.push(Op::BroadcastPerChannel(v.id), shape.to_vec(), value))
    }

    // ------------------------------------------------------------------
    // Composites
    // ------------------------------------------------------------------

    /// Fully connected layer: y = x·W + b with x (N, in), W (in, out), b (out).
    pub fn dense(&mut self, x: Tensor, w: Tensor, b: Tensor) -> Result<Tensor> {
        let y = self.matmul(x, w, false, false)?;
        let shape = self.nodes[y.id].shape.clone();
        let bb = self.broadcast_per_channel(b, &shape)?;
        self.add(y, bb)
    }

    /// Add a per-channel bias (C) to (N, C, ...).
    pub fn add_channel_bias(&mut self, x: Tensor, b: Tensor) -> Result<Tensor> {
        let shape = self.nodes[x.id].shape.clone();
        let bb = self.broadcast_per_channel(b, &shape)?;
        self.add(x, bb)
    }

    /// Per-channel mean over batch and spatial dims.
    pub fn mean_per_channel(&mut self, x: Tensor) -> Result<Tensor> {
        let s = self.nodes[x.id].shape.clone();
        let count = (numel(&s) / s[1]) as f64;
        let sum = self.sum_per_channel(x)?;
        Ok(self.mul_scalar(sum, 1.0 / count))
    }

    /// Forward hourly differences along axis 1: (N, T, ...) -> (N, T-1, ...),
    /// out[t] = in[t+1] - in[t].
    pub fn temporal_diff(&mut self, x: Tensor) -> Result<Tensor> {
        let s = self.nodes[x.id].shape.clone();
        if s.len() < 2 || s[1] < 2 {
            return Err(Error::ShapeMismatch {
                op: "temporal_diff",
                lhs: s,
                rhs: vec![0, 2],
            });
        }
        let t = s[1];
        let hi = self.slice(x, 1, 1, t - 1)?;
        let lo = self.slice(x, 1, 0, t - 1)?;
        self.sub(hi, lo)
    }

    /// Per-sample Euclidean norm: (N, ...) -> (N).
    pub fn l2_norm_per_sample(&mut self, x: Tensor) -> Result<Tensor> {
        let sq = self.mul(x, x)?;
        let ss = self.sum_per_sample(sq);
        Ok(self.sqrt(ss))
    }

    /// Euclidean norm of the whole tensor, yielding a scalar.
    pub fn l2_norm(&mut self, x: Tensor) -> Result<Tensor> {
        let sq = self.mul(x, x)?;
        let ss = self.sum_all(sq);
        Ok(self.sqrt(ss))
    }

    /// Batch normalization over channel axis 1 using batch statistics
    /// (biased variance). Returns the normalized output plus the batch mean
    /// and variance so callers can maintain running statistics.
    pub fn batch_norm_train(
        &mut self,
        x: Tensor,
        gamma: Tensor,
        beta: Tensor,
        eps: f64,
    ) -> Result<(Tensor, Vec<f64>, Vec<f64>)> {
        let shape = self.nodes[x.id].shape.clone();
        let mean = self.mean_per_channel(x)?;
        let mean_b = self.broadcast_per_channel(mean, &shape)?;
        let centered = self.sub(x, mean_b)?;
        let sq = self.mul(centered, centered)?;
        let var = self.mean_per_channel(sq)?;
        let var_eps = self.add_scalar(var, eps);
        let std = self.sqrt(var_eps);
        let inv_std = self.recip(std);
        let inv_b = self.broadcast_per_channel(inv_std, &shape)?;
        let normed = self.mul(centered, inv_b)?;
        let gb = self.broadcast_per_channel(gamma, &shape)?;
        let scaled = self.mul(normed, gb)?;
        let bb = self.broadcast_per_channel(beta, &shape)?;
        let y = self.add(scaled, bb)?;
        Ok((
            y,
            self.nodes[mean.id].value.clone(),
            self.nodes[var.id].value.clone(),
        ))
    }

    /// Batch normalization in eval mode with fixed running statistics.
    pub fn batch_norm_eval(
        &mut self,
        x: Tensor,
        gamma: Tensor,
        beta: Tensor,
        running_mean: &[f64],
        running_var: &[f64],
        eps: f64,
    ) -> Result<Tensor> {
        let shape = self.nodes[x.id].shape.clone();
        let c = shape[1];
        let mean = self.leaf(running_mean.to_vec(), &[c])?;
        let scale: Vec<f64> = running_var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let inv_std = self.leaf(scale, &[c])?;
        let mean_b = self.broadcast_per_channel(mean, &shape)?;
        let centered = self.sub(x, mean_b)?;
        let inv_b = self.broadcast_per_channel(inv_std, &shape)?;
        let normed = self.mul(centered, inv_b)?;
        let gb = self.broadcast_per_channel(gamma, &shape)?;
        let scaled = self.mul(normed, gb)?;
        let bb = self.broadcast_per_channel(beta, &shape)?;
        self.add(scaled, bb)
    }

    // ------------------------------------------------------------------
    // Differentiation
    // ------------------------------------------------------------------

    /// Node ids reachable backwards from `t` (inclusive).
    pub fn ancestors(&self, t: Tensor) -> Vec<bool> {
        let mut seen = vec![false; t.id + 1];
        let mut stack = vec![t.id];
        while let Some(id) = stack.pop() {
            if seen[id] {
                continue;
            }
            seen[id] = true;
            self.visit_inputs(id, |input| {
                if !seen[input] {
                    stack.push(input);
                }
            });
        }
        seen
    }

    fn visit_inputs(&self, id: usize, mut f: impl FnMut(usize)) {
        match self.nodes[id].op {
            Op::Leaf => {}
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => {
                f(a);
                f(b);
            }
            Op::AddScalar(x)
            | Op::MulScalar(x, _)
            | Op::Recip(x)
            | Op::Sqrt(x)
            | Op::Relu(x)
            | Op::LeakyRelu(x, _)
            | Op::Tanh(x)
            | Op::Reshape(x)
            | Op::SumAll(x)
            | Op::BroadcastAll(x)
            | Op::SumPerSample(x)
            | Op::BroadcastPerSample(x)
            | Op::SumPerChannel(x)
            | Op::BroadcastPerChannel(x)
            | Op::Slice { x, .. } => f(x),
            Op::MatMul { a, b, .. } | Op::Concat { a, b, .. } => {
                f(a);
                f(b);
            }
            Op::Conv1d { x, k, .. } | Op::Conv2d { x, k, .. } => {
                f(x);
                f(k);
            }
            Op::Conv1dBackInput { dy, k, .. } | Op::Conv2dBackInput { dy, k, .. } => {
                f(dy);
                f(k);
            }
            Op::Conv1dBackKernel { x, dy, .. } | Op::Conv2dBackKernel { x, dy, .. } => {
                f(x);
                f(dy);
            }
        }
    }

    /// Build gradient nodes of scalar `output` with respect to each tensor in
    /// `wrt`. The returned tensors live on this tape and are differentiable
    /// again; entries are `None` for tensors the output does not depend on.
    pub fn grad_nodes(&mut self, output: Tensor, wrt: &[Tensor]) -> Result<Vec<Option<Tensor>>> {
        if self.nodes[output.id].value.len() != 1 {
            return Err(Error::ShapeMismatch {
                op: "grad",
                lhs: self.nodes[output.id].shape.clone(),
                rhs: vec![1],
            });
        }
        for t in wrt {
            if t.id >= self.nodes.len() {
                return Err(Error::NotTracked);
            }
        }
        let mut adjoint: Vec<Option<Tensor>> = vec![None; output.id + 1];
        adjoint[output.id] = Some(self.scalar(1.0));

        for id in (0..=output.id).rev() {
            let Some(dy) = adjoint[id] else { continue };
            let op = self.nodes[id].op.clone();
            match op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    self.accumulate(&mut adjoint, a, dy)?;
                    self.accumulate(&mut adjoint, b, dy)?;
                }
                Op::Sub(a, b) => {
                    self.accumulate(&mut adjoint, a, dy)?;
                    let nb = self.neg(dy);
                    self.accumulate(&mut adjoint, b, nb)?;
                }
                Op::Mul(a, b) => {
                    let ta = Tensor { id: a };
                    let tb = Tensor { id: b };
                    let da = self.mul(dy, tb)?;
                    self.accumulate(&mut adjoint, a, da)?;
                    let db = self.mul(dy, ta)?;
                    self.accumulate(&mut adjoint, b, db)?;
                }
                Op::AddScalar(x) => self.accumulate(&mut adjoint, x, dy)?,
                Op::MulScalar(x, c) => {
                    let dx = self.mul_scalar(dy, c);
                    self.accumulate(&mut adjoint, x, dx)?;
                }
                Op::Recip(x) => {
                    // d(1/x)/dx = -y²
                    let y = Tensor { id };
                    let y2 = self.mul(y, y)?;
                    let ny2 = self.neg(y2);
                    let dx = self.mul(dy, ny2)?;
                    self.accumulate(&mut adjoint, x, dx)?;
                }
                Op::Sqrt(x) => {
                    // d√x/dx = 1/(2y)
                    let y = Tensor { id };
                    let ry = self.recip(y);
                    let half = self.mul_scalar(ry, 0.5);
                    let dx = self.mul(dy, half)?;
                    self.accumulate(&mut adjoint, x, dx)?;
                }
                Op::Relu(x) => {
                    // Subgradient at 0 takes the positive side.
                    let mask: Vec<f64> = self.nodes[x]
                        .value
                        .iter()
                        .map(|&v| if v >= 0.0 { 1.0 } else { 0.0 })
                        .collect();
                    let shape = self.nodes[x].shape.clone();
                    let m = self.leaf(mask, &shape)?;
                    let dx = self.mul(dy, m)?;
                    self.accumulate(&mut adjoint, x, dx)?;
                }
                Op::LeakyRelu(x, slope) => {
                    let mask: Vec<f64> = self.nodes[x]
                        .value
                        .iter()
                        .map(|&v| if v >= 0.0 { 1.0 } else { slope })
                        .collect();
                    let shape = self.nodes[x].shape.clone();
                    let m = self.leaf(mask, &shape)?;
                    let dx = self.mul(dy, m)?;
                    self.accumulate(&mut adjoint, x, dx)?;
                }
                Op::Tanh(x) => {
                    // d tanh/dx = 1 - y²
                    let y = Tensor { id };
                    let y2 = self.mul(y, y)?;
                    let ny2 = self.mul_scalar(y2, -1.0);
                    let one_minus = self.add_scalar(ny2, 1.0);
                    let dx = self.mul(dy, one_minus)?;
                    self.accumulate(&mut adjoint, x, dx)?;
                }
                Op::MatMul { a, b, ta, tb } => {
                    let tna = Tensor { id: a };
                    let tnb = Tensor { id: b };
                    let da = if ta {
                        self.matmul(tnb, dy, tb, true)?
                    } else {
                        self.matmul(dy, tnb, false, !tb)?
                    };
                    self.accumulate(&mut adjoint, a, da)?;
                    let db = if tb {
                        self.matmul(dy, tna, true, ta)?
                    } else {
                        self.matmul(tna, dy, !ta, false)?
                    };
                    self.accumulate(&mut adjoint, b, db)?;
                }
                Op::Conv1d { x, k, stride } => {
                    let tx = Tensor { id: x };
                    let tk = Tensor { id: k };
                    let in_len = self.nodes[x].shape[2];
                    let k_len = self.nodes[k].shape[2];
                    let dx = self.conv1d_back_input(dy, tk, stride, in_len)?;
                    self.accumulate(&mut adjoint, x, dx)?;
                    let dk = self.conv1d_back_kernel(tx, dy, stride, k_len)?;
                    self.accumulate(&mut adjoint, k, dk)?;
                }
                Op::Conv1dBackInput { dy: fdy, k, stride } => {
                    // Bilinear closure: upstream u has the virtual input shape.
                    let tk = Tensor { id: k };
                    let tfdy = Tensor { id: fdy };
                    let k_len = self.nodes[k].shape[2];
                    let ddy = self.conv1d(dy, tk, stride)?;
                    self.accumulate(&mut adjoint, fdy, ddy)?;
                    let dk = self.conv1d_back_kernel(dy, tfdy, stride, k_len)?;
                    self.accumulate(&mut adjoint, k, dk)?;
                }
                Op::Conv1dBackKernel { x, dy: fdy, stride } => {
                    let tx = Tensor { id: x };
                    let tfdy = Tensor { id: fdy };
                    let in_len = self.nodes[x].shape[2];
                    let dx = self.conv1d_back_input(tfdy, dy, stride, in_len)?;
                    self.accumulate(&mut adjoint, x, dx)?;
                    let ddy = self.conv1d(tx, dy, stride)?;
                    self.accumulate(&mut adjoint, fdy, ddy)?;
                }
                Op::Conv2d { x, k, pad } => {
                    let tx = Tensor { id: x };
                    let tk = Tensor { id: k };
                    let in_hw = (self.nodes[x].shape[2], self.nodes[x].shape[3]);
                    let k_hw = (self.nodes[k].shape[2], self.nodes[k].shape[3]);
                    let dx = self.conv2d_back_input(dy, tk, pad, in_hw)?;
                    self.accumulate(&mut adjoint, x, dx)?;
                    let dk = self.conv2d_back_kernel(tx, dy, pad, k_hw)?;
                    self.accumulate(&mut adjoint, k, dk)?;
                }
                Op::Conv2dBackInput { dy: fdy, k, pad } => {
                    let tk = Tensor { id: k };
                    let tfdy = Tensor { id: fdy };
                    let k_hw = (self.nodes[k].shape[2], self.nodes[k].shape[3]);
                    let ddy = self.conv2d(dy, tk, pad)?;
                    self.accumulate(&mut adjoint, fdy, ddy)?;
                    let dk = self.conv2d_back_kernel(dy, tfdy, pad, k_hw)?;
                    self.accumulate(&mut adjoint, k, dk)?;
                }
                Op::Conv2dBackKernel { x, dy: fdy, pad } => {
                    let tx = Tensor { id: x };
                    let tfdy = Tensor { id: fdy };
                    let in_hw = (self.nodes[x].shape[2], self.nodes[x].shape[3]);
                    let dx = self.conv2d_back_input(tfdy, dy, pad, in_hw)?;
                    self.accumulate(&mut adjoint, x, dx)?;
                    let ddy = self.conv2d(tx, dy, pad)?;
                    self.accumulate(&mut adjoint, fdy, ddy)?;
                }
                Op::Concat { a, b, axis } => {
                    let alen = self.nodes[a].shape[axis];
                    let blen = self.nodes[b].shape[axis];
                    let da = self.slice(dy, axis, 0, alen)?;
                    self.accumulate(&mut adjoint, a, da)?;
                    let db = self.slice(dy, axis, alen, blen)?;
                    self.accumulate(&mut adjoint, b, db)?;
                }
                Op::Slice {
                    x,
                    axis,
                    start,
                    len,
                } => {
                    // Adjoint pads dy with zeros on both sides of the slice.
                    let full = self.nodes[x].shape.clone();
                    let total = full[axis];
                    let mut dx = dy;
                    if start > 0 {
                        let mut zshape = full.clone();
                        zshape[axis] = start;
                        let z = self.zeros(&zshape);
                        dx = self.concat(z, dx, axis)?;
                    }
                    if start + len < total {
                        let mut zshape = full.clone();
                        zshape[axis] = total - start - len;
                        let z = self.zeros(&zshape);
                        dx = self.concat(dx, z, axis)?;
                    }
                    self.accumulate(&mut adjoint, x, dx)?;
                }
                Op::Reshape(x) => {
                    let shape = self.nodes[x].shape.clone();
                    let dx = self.reshape(dy, &shape)?;
                    self.accumulate(&mut adjoint, x, dx)?;
                }
                Op::SumAll(x) => {
                    let shape = self.nodes[x].shape.clone();
                    let dx = self.broadcast_all(dy, &shape)?;
                    self.accumulate(&mut adjoint, x, dx)?;
                }
                Op::BroadcastAll(x) => {
                    let dx = self.sum_all(dy);
                    self.accumulate(&mut adjoint, x, dx)?;
                }
                Op::SumPerSample(x) => {
                    let shape = self.nodes[x].shape.clone();
                    let dx = self.broadcast_per_sample(dy, &shape)?;
                    self.accumulate(&mut adjoint, x, dx)?;
                }
                Op::BroadcastPerSample(x) => {
                    let dx = self.sum_per_sample(dy);
                    self.accumulate(&mut adjoint, x, dx)?;
                }
                Op::SumPerChannel(x) => {
                    let shape = self.nodes[x].shape.clone();
                    let dx = self.broadcast_per_channel(dy, &shape)?;
                    self.accumulate(&mut adjoint, x, dx)?;
                }
                Op::BroadcastPerChannel(x) => {
                    let dx = self.sum_per_channel(dy)?;
                    self.accumulate(&mut adjoint, x, dx)?;
                }
            }
        }

        Ok(wrt
            .iter()
            .map(|t| adjoint.get(t.id).copied().flatten())
            .collect())
    }

    fn accumulate(
        &mut self,
        adjoint: &mut [Option<Tensor>],
        target: usize,
        contrib: Tensor,
    ) -> Result<()> {
        adjoint[target] = Some(match adjoint[target] {
            None => contrib,
            Some(existing) => self.add(existing, contrib)?,
        });
        Ok(())
    }

    /// Materialize gradients of scalar `loss` w.r.t. `wrt`, returning a dense
    /// vector per tensor (zeros when disconnected). Errors when called twice
    /// on the same tape.
    pub fn backward(&mut self, loss: Tensor, wrt: &[Tensor]) -> Result<Vec<Vec<f64>>> {
        if self.backward_done {
            return Err(Error::BackwardTwice);
        }
        self.backward_done = true;
        let grads = self.grad_nodes(loss, wrt)?;
        Ok(wrt
            .iter()
            .zip(grads)
            .map(|(t, g)| match g {
                Some(g) => self.nodes[g.id].value.clone(),
                None => vec![0.0; self.nodes[t.id].value.len()],
            })
            .collect())
    }

    /// Gradient of a scalar score w.r.t. a tracked input, as a differentiable
    /// node. Errors when the score does not depend on the input.
    pub fn grad_wrt_input(&mut self, score: Tensor, input: Tensor) -> Result<Tensor> {
        let grads = self.grad_nodes(score, &[input])?;
        grads[0].ok_or(Error::NotTracked)
    }
}

#[cfg(test)]
mod tests;
