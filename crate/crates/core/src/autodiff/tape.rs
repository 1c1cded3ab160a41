//! Reverse-mode tape over the handful of operations the rankers need.
//!
//! Every op appends a node holding its forward value; `backward` walks the
//! nodes in reverse and accumulates gradients into the [`ParameterSet`] the
//! parameter leaves were read from.

use super::{ParamId, ParameterSet, Tensor};
use crate::error::{Error, Result};

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Constant,
    Param(ParamId),
    Affine {
        input: Var,
        weight: Var,
        bias: Option<Var>,
    },
    Relu(Var),
    Embedding {
        table: Var,
        index: usize,
    },
    Softmax(Var),
    Log(Var),
    Add(Var, Var),
    Scale(Var, f64),
    ConcatCols(Vec<Var>),
    RepeatRows(Var),
    KronRows {
        left: Var,
        right: Var,
    },
    Pick(Var, usize),
    Sum(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Constant, false)
    }

    /// Records a leaf holding a snapshot of parameter `id`.
    pub fn param(&mut self, params: &ParameterSet, id: ParamId) -> Var {
        self.push(params.value(id).clone(), Op::Param(id), true)
    }

    /// `output[b,o] = Σ_i input[b,i]·weight[i,o] + bias[o]`.
    pub fn affine(&mut self, input: Var, weight: Var, bias: Option<Var>) -> Result<Var> {
        let x = &self.nodes[input.0].value;
        let w = &self.nodes[weight.0].value;
        if w.shape().len() != 2 || x.cols() != w.shape()[0] {
            return Err(Error::Dimension {
                op: "affine",
                left: x.shape().to_vec(),
                right: w.shape().to_vec(),
            });
        }
        let (rows, inner, out) = (x.rows(), w.shape()[0], w.shape()[1]);
        if let Some(b) = bias {
            let bs = self.nodes[b.0].value.shape();
            if bs != [out] {
                return Err(Error::Dimension {
                    op: "affine bias",
                    left: w.shape().to_vec(),
                    right: bs.to_vec(),
                });
            }
        }
        let mut data = match bias {
            Some(b) => self.nodes[b.0].value.data().repeat(rows),
            None => vec![0.0; rows * out],
        };
        let (xd, wd) = (x.data(), w.data());
        for r in 0..rows {
            let orow = &mut data[r * out..(r + 1) * out];
            for i in 0..inner {
                let xv = xd[r * inner + i];
                if xv == 0.0 {
                    continue;
                }
                let wrow = &wd[i * out..(i + 1) * out];
                for (o, wv) in orow.iter_mut().zip(wrow) {
                    *o += xv * wv;
                }
            }
        }
        let rg = self.needs(input) || self.needs(weight) || bias.is_some_and(|b| self.needs(b));
        Ok(self.push(
            Tensor::from_parts(vec![rows, out], data),
            Op::Affine {
                input,
                weight,
                bias,
            },
            rg,
        ))
    }

    pub fn matmul(&mut self, input: Var, weight: Var) -> Result<Var> {
        self.affine(input, weight, None)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let t = &self.nodes[x.0].value;
        let data = t.data().iter().map(|v| v.max(0.0)).collect();
        let value = Tensor::from_parts(t.shape().to_vec(), data);
        let rg = self.needs(x);
        self.push(value, Op::Relu(x), rg)
    }

    /// Row `index` of a `C×E` table, as a `1×E` matrix.
    pub fn embedding(&mut self, table: Var, index: usize, feature: &str) -> Result<Var> {
        let t = &self.nodes[table.0].value;
        if t.shape().len() != 2 {
            return Err(Error::Dimension {
                op: "embedding",
                left: t.shape().to_vec(),
                right: vec![index],
            });
        }
        let (card, dim) = (t.shape()[0], t.shape()[1]);
        if index >= card {
            return Err(Error::OutOfRange {
                feature: feature.to_string(),
                index,
                cardinality: card,
            });
        }
        let value = Tensor::from_parts(vec![1, dim], t.row(index).to_vec());
        let rg = self.needs(table);
        Ok(self.push(value, Op::Embedding { table, index }, rg))
    }

    /// Softmax over all elements, stabilized by subtracting the maximum.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let t = &self.nodes[x.0].value;
        let value = Tensor::from_parts(t.shape().to_vec(), softmax_values(t.data())?);
        let rg = self.needs(x);
        Ok(self.push(value, Op::Softmax(x), rg))
    }

    /// Elementwise natural log; every input must be strictly positive.
    pub fn log(&mut self, x: Var) -> Result<Var> {
        let t = &self.nodes[x.0].value;
        if let Some(pos) = t.data().iter().position(|&v| v <= 0.0) {
            return Err(Error::domain(format!(
                "log of non-positive value {} at flat index {pos}",
                t.data()[pos]
            )));
        }
        let value = Tensor::from_parts(t.shape().to_vec(), t.data().iter().map(|v| v.ln()).collect());
        let rg = self.needs(x);
        Ok(self.push(value, Op::Log(x), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if ta.shape() != tb.shape() {
            return Err(Error::Dimension {
                op: "add",
                left: ta.shape().to_vec(),
                right: tb.shape().to_vec(),
            });
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x + y).collect();
        let value = Tensor::from_parts(ta.shape().to_vec(), data);
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::Add(a, b), rg))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let t = &self.nodes[x.0].value;
        let value = Tensor::from_parts(t.shape().to_vec(), t.data().iter().map(|v| v * factor).collect());
        let rg = self.needs(x);
        self.push(value, Op::Scale(x, factor), rg)
    }

    /// Horizontal concatenation of matrices with equal row counts.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(first) = parts.first() else {
            return Err(Error::contract("concat of zero tensors"));
        };
        let rows = self.nodes[first.0].value.rows();
        for p in parts {
            let t = &self.nodes[p.0].value;
            if t.rows() != rows {
                return Err(Error::Dimension {
                    op: "concat_cols",
                    left: self.nodes[first.0].value.shape().to_vec(),
                    right: t.shape().to_vec(),
                });
            }
        }
        let total: usize = parts.iter().map(|p| self.nodes[p.0].value.cols()).sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for p in parts {
                data.extend_from_slice(self.nodes[p.0].value.row(r));
            }
        }
        let rg = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(
            Tensor::from_parts(vec![rows, total], data),
            Op::ConcatCols(parts.to_vec()),
            rg,
        ))
    }

    /// Stacks `times` copies of a single-row tensor.
    pub fn repeat_rows(&mut self, x: Var, times: usize) -> Result<Var> {
        let t = &self.nodes[x.0].value;
        if t.rows() != 1 {
            return Err(Error::Dimension {
                op: "repeat_rows",
                left: t.shape().to_vec(),
                right: vec![1],
            });
        }
        let cols = t.cols();
        let value = Tensor::from_parts(vec![times, cols], t.data().repeat(times));
        let rg = self.needs(x);
        Ok(self.push(value, Op::RepeatRows(x), rg))
    }

    /// Row `j` of the output is `left ⊗ right[j]` (Kronecker product of a
    /// `1×L` row with each row of a `D×K` matrix), giving `D×(L·K)` with
    /// column index `l·K + k`.
    pub fn kron_rows(&mut self, left: Var, right: Var) -> Result<Var> {
        let (tl, tr) = (&self.nodes[left.0].value, &self.nodes[right.0].value);
        if tl.rows() != 1 {
            return Err(Error::Dimension {
                op: "kron_rows",
                left: tl.shape().to_vec(),
                right: tr.shape().to_vec(),
            });
        }
        let (l_dim, rows, k_dim) = (tl.cols(), tr.rows(), tr.cols());
        let mut data = Vec::with_capacity(rows * l_dim * k_dim);
        for j in 0..rows {
            let rrow = tr.row(j);
            for &s in tl.data() {
                data.extend(rrow.iter().map(|v| s * v));
            }
        }
        let rg = self.needs(left) || self.needs(right);
        Ok(self.push(
            Tensor::from_parts(vec![rows, l_dim * k_dim], data),
            Op::KronRows { left, right },
            rg,
        ))
    }

    /// Scalar element at flat index `index`.
    pub fn pick(&mut self, x: Var, index: usize) -> Result<Var> {
        let t = &self.nodes[x.0].value;
        let Some(&v) = t.data().get(index) else {
            return Err(Error::Dimension {
                op: "pick",
                left: t.shape().to_vec(),
                right: vec![index],
            });
        };
        let rg = self.needs(x);
        Ok(self.push(Tensor::scalar(v), Op::Pick(x, index), rg))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.nodes[x.0].value.data().iter().sum();
        let rg = self.needs(x);
        self.push(Tensor::scalar(s), Op::Sum(x), rg)
    }

    /// Backpropagates from a scalar node, accumulating into `params`.
    pub fn backward(&self, loss: Var, params: &mut ParameterSet) -> Result<()> {
        let n = self.nodes[loss.0].value.len();
        if n != 1 {
            return Err(Error::contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.nodes[loss.0].value.shape()
            )));
        }
        self.backward_with_seed(loss, Tensor::scalar(1.0), params)
    }

    /// Backpropagates an upstream gradient `seed` (same shape as `root`).
    pub fn backward_with_seed(&self, root: Var, seed: Tensor, params: &mut ParameterSet) -> Result<()> {
        if seed.len() != self.nodes[root.0].value.len() {
            return Err(Error::Dimension {
                op: "backward seed",
                left: self.nodes[root.0].value.shape().to_vec(),
                right: seed.shape().to_vec(),
            });
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; root.0 + 1];
        grads[root.0] = Some(seed.into_data());

        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            match &node.op {
                Op::Constant => {}
                Op::Param(id) => {
                    params.accumulate_grad(*id, &Tensor::from_parts(node.value.shape().to_vec(), g));
                }
                Op::Affine {
                    input,
                    weight,
                    bias,
                } => {
                    let x = &self.nodes[input.0].value;
                    let w = &self.nodes[weight.0].value;
                    let (rows, inner, out) = (x.rows(), w.shape()[0], w.shape()[1]);
                    if self.needs(*input) {
                        let mut gx = vec![0.0; rows * inner];
                        for r in 0..rows {
                            let grow = &g[r * out..(r + 1) * out];
                            for i in 0..inner {
                                let wrow = &w.data()[i * out..(i + 1) * out];
                                gx[r * inner + i] = grow.iter().zip(wrow).map(|(a, b)| a * b).sum();
                            }
                        }
                        accumulate(&mut grads, *input, gx);
                    }
                    if self.needs(*weight) {
                        let mut gw = vec![0.0; inner * out];
                        for r in 0..rows {
                            let grow = &g[r * out..(r + 1) * out];
                            for i in 0..inner {
                                let xv = x.data()[r * inner + i];
                                if xv == 0.0 {
                                    continue;
                                }
                                for (o, gv) in gw[i * out..(i + 1) * out].iter_mut().zip(grow) {
                                    *o += xv * gv;
                                }
                            }
                        }
                        accumulate(&mut grads, *weight, gw);
                    }
                    if let Some(b) = bias {
                        if self.needs(*b) {
                            let mut gb = vec![0.0; out];
                            for r in 0..rows {
                                for (o, gv) in gb.iter_mut().zip(&g[r * out..(r + 1) * out]) {
                                    *o += gv;
                                }
                            }
                            accumulate(&mut grads, *b, gb);
                        }
                    }
                }
                Op::Relu(x) => {
                    let xin = self.nodes[x.0].value.data();
                    let gx = g
                        .iter()
                        .zip(xin)
                        .map(|(gv, &xv)| if xv > 0.0 { *gv } else { 0.0 })
                        .collect();
                    accumulate(&mut grads, *x, gx);
                }
                Op::Embedding { table, index } => {
                    let t = &self.nodes[table.0].value;
                    let dim = t.shape()[1];
                    let mut gt = vec![0.0; t.len()];
                    gt[index * dim..(index + 1) * dim].copy_from_slice(&g);
                    accumulate(&mut grads, *table, gt);
                }
                Op::Softmax(x) => {
                    let y = node.value.data();
                    let dot: f64 = g.iter().zip(y).map(|(a, b)| a * b).sum();
                    let gx = g.iter().zip(y).map(|(gv, yv)| yv * (gv - dot)).collect();
                    accumulate(&mut grads, *x, gx);
                }
                Op::Log(x) => {
                    let xin = self.nodes[x.0].value.data();
                    let gx = g.iter().zip(xin).map(|(gv, xv)| gv / xv).collect();
                    accumulate(&mut grads, *x, gx);
                }
                Op::Add(a, b) => {
                    if self.needs(*a) {
                        accumulate(&mut grads, *a, g.clone());
                    }
                    if self.needs(*b) {
                        accumulate(&mut grads, *b, g);
                    }
                }
                Op::Scale(x, f) => {
                    accumulate(&mut grads, *x, g.iter().map(|v| v * f).collect());
                }
                Op::ConcatCols(parts) => {
                    let rows = node.value.rows();
                    let total = node.value.cols();
                    let mut offset = 0;
                    for p in parts {
                        let cols = self.nodes[p.0].value.cols();
                        if self.needs(*p) {
                            let mut gp = Vec::with_capacity(rows * cols);
                            for r in 0..rows {
                                gp.extend_from_slice(&g[r * total + offset..r * total + offset + cols]);
                            }
                            accumulate(&mut grads, *p, gp);
                        }
                        offset += cols;
                    }
                }
                Op::RepeatRows(x) => {
                    let cols = self.nodes[x.0].value.cols();
                    let mut gx = vec![0.0; cols];
                    for chunk in g.chunks(cols) {
                        for (a, b) in gx.iter_mut().zip(chunk) {
                            *a += b;
                        }
                    }
                    accumulate(&mut grads, *x, gx);
                }
                Op::KronRows { left, right } => {
                    let tl = &self.nodes[left.0].value;
                    let tr = &self.nodes[right.0].value;
                    let (l_dim, rows, k_dim) = (tl.cols(), tr.rows(), tr.cols());
                    let width = l_dim * k_dim;
                    if self.needs(*left) {
                        let mut gl = vec![0.0; l_dim];
                        for j in 0..rows {
                            let rrow = tr.row(j);
                            for (l, gv) in gl.iter_mut().enumerate() {
                                let seg = &g[j * width + l * k_dim..j * width + (l + 1) * k_dim];
                                *gv += seg.iter().zip(rrow).map(|(a, b)| a * b).sum::<f64>();
                            }
                        }
                        accumulate(&mut grads, *left, gl);
                    }
                    if self.needs(*right) {
                        let mut gr = vec![0.0; rows * k_dim];
                        for j in 0..rows {
                            for (l, s) in tl.data().iter().enumerate() {
                                let seg = &g[j * width + l * k_dim..j * width + (l + 1) * k_dim];
                                for (o, gv) in gr[j * k_dim..(j + 1) * k_dim].iter_mut().zip(seg) {
                                    *o += s * gv;
                                }
                            }
                        }
                        accumulate(&mut grads, *right, gr);
                    }
                }
                Op::Pick(x, index) => {
                    let mut gx = vec![0.0; self.nodes[x.0].value.len()];
                    gx[*index] = g[0];
                    accumulate(&mut grads, *x, gx);
                }
                Op::Sum(x) => {
                    let n = self.nodes[x.0].value.len();
                    accumulate(&mut grads, *x, vec![g[0]; n]);
                }
            }
        }
        Ok(())
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], v: Var, g: Vec<f64>) {
    match &mut grads[v.0] {
        Some(existing) => {
            for (a, b) in existing.iter_mut().zip(&g) {
                *a += b;
            }
        }
        slot @ None => *slot = Some(g),
    }
}

/// Max-shifted softmax of a non-empty slice.
pub fn softmax_values(xs: &[f64]) -> Result<Vec<f64>> {
    if xs.is_empty() {
        return Err(Error::domain("softmax of an empty vector"));
    }
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = xs.iter().map(|x| (x - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}
