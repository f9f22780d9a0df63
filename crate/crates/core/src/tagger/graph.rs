//! Reverse-mode differentiation over a tape of matrix-valued operations.
//!
//! Nodes are appended in evaluation order, so the tape is already a
//! topological order and backward is one reverse sweep. Fused operations
//! (LSTM, CRF likelihood, KL) carry their own forward caches.

use super::crf;
use super::lstm::{lstm_backward, lstm_forward, LstmCache};
use super::params::{Gradients, ParamId, ParamStore};
use super::tensor::{axpy, dot, Tensor};
use crate::error::AutogradError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

enum Op {
    Constant,
    /// Rows of a parameter table.
    Gather { table: ParamId, ids: Vec<usize> },
    Lstm { input: NodeId, weight: ParamId, bias: ParamId, cache: LstmCache },
    SelectRow { input: NodeId, row: usize },
    ConcatCols(Vec<NodeId>),
    StackRows(Vec<NodeId>),
    /// Elementwise multiply by a fixed mask.
    Mask { input: NodeId, mask: Vec<f64> },
    /// `x W^T + b`
    Linear { input: NodeId, weight: ParamId, bias: ParamId },
    /// Negative CRF log-likelihood; the cache holds `d/d emissions` and
    /// `d/d transitions`.
    CrfNll { emissions: NodeId, transitions: ParamId, grad_em: Tensor, grad_tr: Tensor },
    SoftmaxKl { clean: NodeId, noisy: NodeId, grad_clean: Tensor, grad_noisy: Tensor },
    MarginalKl { clean: NodeId, noisy: NodeId, transitions: ParamId, grad_clean: Tensor, grad_noisy: Tensor, grad_tr: Tensor },
    Add(NodeId, NodeId),
    Scale(NodeId, f64),
}

struct Node {
    value: Tensor,
    op: Op,
}

pub struct Graph<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Graph { params, nodes: Vec::new() }
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Constant)
    }

    pub fn gather(&mut self, table: ParamId, ids: &[usize]) -> NodeId {
        let t = self.params.get(table);
        let mut out = Tensor::zeros(ids.len(), t.cols());
        for (r, &id) in ids.iter().enumerate() {
            out.row_mut(r).copy_from_slice(t.row(id));
        }
        self.push(out, Op::Gather { table, ids: ids.to_vec() })
    }

    /// All hidden states, in input order, of an LSTM run forwards or backwards.
    pub fn lstm(&mut self, input: NodeId, weight: ParamId, bias: ParamId, reverse: bool) -> NodeId {
        let (out, cache) = lstm_forward(self.value(input), self.params.get(weight), self.params.get(bias), reverse);
        self.push(out, Op::Lstm { input, weight, bias, cache })
    }

    pub fn select_row(&mut self, input: NodeId, row: usize) -> NodeId {
        let v = self.value(input);
        let out = Tensor::from_vec(1, v.cols(), v.row(row).to_vec());
        self.push(out, Op::SelectRow { input, row })
    }

    pub fn concat_cols(&mut self, inputs: &[NodeId]) -> NodeId {
        let rows = self.value(inputs[0]).rows();
        let cols: usize = inputs.iter().map(|&i| self.value(i).cols()).sum();
        let mut out = Tensor::zeros(rows, cols);
        for r in 0..rows {
            let mut off = 0;
            for &i in inputs {
                let v = self.value(i);
                assert_eq!(v.rows(), rows, "concat_cols row mismatch");
                out.row_mut(r)[off..off + v.cols()].copy_from_slice(v.row(r));
                off += v.cols();
            }
        }
        self.push(out, Op::ConcatCols(inputs.to_vec()))
    }

    pub fn stack_rows(&mut self, inputs: &[NodeId]) -> NodeId {
        let cols = self.value(inputs[0]).cols();
        let mut data = Vec::with_capacity(inputs.len() * cols);
        let mut rows = 0;
        for &i in inputs {
            let v = self.value(i);
            assert_eq!(v.cols(), cols, "stack_rows column mismatch");
            data.extend_from_slice(v.data());
            rows += v.rows();
        }
        self.push(Tensor::from_vec(rows, cols, data), Op::StackRows(inputs.to_vec()))
    }

    pub fn mask(&mut self, input: NodeId, mask: Vec<f64>) -> NodeId {
        let mut out = self.value(input).clone();
        assert_eq!(out.data().len(), mask.len());
        out.data_mut().iter_mut().zip(&mask).for_each(|(v, m)| *v *= m);
        self.push(out, Op::Mask { input, mask })
    }

    pub fn linear(&mut self, input: NodeId, weight: ParamId, bias: ParamId) -> NodeId {
        let x = self.value(input);
        let w = self.params.get(weight);
        let b = self.params.get(bias).data();
        let mut out = Tensor::zeros(x.rows(), w.rows());
        for r in 0..x.rows() {
            let xr = x.row(r);
            for (o, (k, bk)) in out.row_mut(r).iter_mut().zip(b.iter().enumerate()) {
                *o = dot(w.row(k), xr) + bk;
            }
        }
        self.push(out, Op::Linear { input, weight, bias })
    }

    /// `-log p(gold | emissions)` under the CRF. `mask` is added to the
    /// transition scores (use `-inf` to forbid a transition).
    pub fn crf_nll(&mut self, emissions: NodeId, transitions: ParamId, gold: &[usize], mask: Option<&Tensor>) -> NodeId {
        let em = self.value(emissions);
        let mut tr = self.params.get(transitions).clone();
        if let Some(m) = mask {
            tr.add_assign(m);
        }
        let (steps, labels) = em.shape();
        let lat = crf::forward_backward(em.data(), steps, labels, tr.data());
        let nll = lat.log_z - crf::path_score(em, &tr, gold);
        let mut grad_em = Tensor::from_vec(steps, labels, lat.node);
        let mut grad_tr = Tensor::from_vec(labels + 2, labels + 2, lat.pair);
        let w = labels + 2;
        grad_tr.data_mut()[crf::start_state(labels) * w + gold[0]] -= 1.0;
        grad_tr.data_mut()[gold[steps - 1] * w + crf::stop_state(labels)] -= 1.0;
        for (t, &y) in gold.iter().enumerate() {
            grad_em.data_mut()[t * labels + y] -= 1.0;
            if t > 0 {
                grad_tr.data_mut()[gold[t - 1] * w + y] -= 1.0;
            }
        }
        self.push(Tensor::scalar(nll), Op::CrfNll { emissions, transitions, grad_em, grad_tr })
    }

    /// `Σ_t KL(softmax(clean_t) ‖ softmax(noisy_t))`.
    pub fn softmax_kl(&mut self, clean: NodeId, noisy: NodeId) -> NodeId {
        let (v, grad_clean, grad_noisy) = crf::softmax_kl(self.value(clean), self.value(noisy));
        self.push(Tensor::scalar(v), Op::SoftmaxKl { clean, noisy, grad_clean, grad_noisy })
    }

    /// KL between CRF node marginals of two emission matrices.
    pub fn marginal_kl(&mut self, clean: NodeId, noisy: NodeId, transitions: ParamId, mask: Option<&Tensor>) -> NodeId {
        let mut tr = self.params.get(transitions).clone();
        if let Some(m) = mask {
            tr.add_assign(m);
        }
        let (v, grad_clean, grad_noisy, grad_tr) = crf::marginal_kl(self.value(clean), self.value(noisy), &tr);
        self.push(Tensor::scalar(v), Op::MarginalKl { clean, noisy, transitions, grad_clean, grad_noisy, grad_tr })
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        self.push(out, Op::Add(a, b))
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> NodeId {
        let mut out = self.value(a).clone();
        out.data_mut().iter_mut().for_each(|v| *v *= factor);
        self.push(out, Op::Scale(a, factor))
    }

    /// Gradients of a scalar root with respect to every parameter.
    pub fn backward(&self, root: NodeId) -> Result<Gradients, AutogradError> {
        let mut grads = Gradients::zeros_like(self.params);
        self.backward_into(root, &mut grads)?;
        Ok(grads)
    }

    /// Adds the gradients of `root` into an existing accumulator.
    pub fn backward_into(&self, root: NodeId, grads: &mut Gradients) -> Result<(), AutogradError> {
        let (rows, cols) = self.value(root).shape();
        if (rows, cols) != (1, 1) {
            return Err(AutogradError::NonScalarRoot { rows, cols });
        }
        let mut adj: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        adj[root.0] = Some(Tensor::scalar(1.0));

        fn accumulate(adj: &mut [Option<Tensor>], id: NodeId, g: Tensor) {
            match &mut adj[id.0] {
                Some(existing) => existing.add_assign(&g),
                slot => *slot = Some(g),
            }
        }

        for idx in (0..=root.0).rev() {
            let Some(g) = adj[idx].take() else { continue };
            match &self.nodes[idx].op {
                Op::Constant => {}
                Op::Gather { table, ids } => {
                    let gt = grads.get_mut(*table);
                    for (r, &id) in ids.iter().enumerate() {
                        axpy(gt.row_mut(id), 1.0, g.row(r));
                    }
                }
                Op::Lstm { input, weight, bias, cache } => {
                    let (gw, gb) = two_mut(grads, *weight, *bias);
                    let gi = lstm_backward(cache, &g, self.params.get(*weight), gw, gb);
                    accumulate(&mut adj, *input, gi);
                }
                Op::SelectRow { input, row } => {
                    let (r, c) = self.value(*input).shape();
                    let mut gi = Tensor::zeros(r, c);
                    gi.row_mut(*row).copy_from_slice(g.data());
                    accumulate(&mut adj, *input, gi);
                }
                Op::ConcatCols(inputs) => {
                    let mut off = 0;
                    for &i in inputs {
                        let (r, c) = self.value(i).shape();
                        let mut gi = Tensor::zeros(r, c);
                        for row in 0..r {
                            gi.row_mut(row).copy_from_slice(&g.row(row)[off..off + c]);
                        }
                        off += c;
                        accumulate(&mut adj, i, gi);
                    }
                }
                Op::StackRows(inputs) => {
                    let mut off = 0;
                    for &i in inputs {
                        let (r, c) = self.value(i).shape();
                        let gi = Tensor::from_vec(r, c, g.data()[off * c..(off + r) * c].to_vec());
                        off += r;
                        accumulate(&mut adj, i, gi);
                    }
                }
                Op::Mask { input, mask } => {
                    let mut gi = g;
                    gi.data_mut().iter_mut().zip(mask).for_each(|(v, m)| *v *= m);
                    accumulate(&mut adj, *input, gi);
                }
                Op::Linear { input, weight, bias } => {
                    let x = self.value(*input);
                    let w = self.params.get(*weight);
                    let mut gi = Tensor::zeros(x.rows(), x.cols());
                    {
                        let (gw, gb) = two_mut(grads, *weight, *bias);
                        for r in 0..x.rows() {
                            let gr = g.row(r);
                            for (k, &gk) in gr.iter().enumerate() {
                                gb.data_mut()[k] += gk;
                                axpy(gw.row_mut(k), gk, x.row(r));
                                axpy(gi.row_mut(r), gk, w.row(k));
                            }
                        }
                    }
                    accumulate(&mut adj, *input, gi);
                }
                Op::CrfNll { emissions, transitions, grad_em, grad_tr } => {
                    let s = g.data()[0];
                    grads.get_mut(*transitions).add_scaled(grad_tr, s);
                    let mut ge = grad_em.clone();
                    ge.data_mut().iter_mut().for_each(|v| *v *= s);
                    accumulate(&mut adj, *emissions, ge);
                }
                Op::SoftmaxKl { clean, noisy, grad_clean, grad_noisy } => {
                    let s = g.data()[0];
                    let mut gc = grad_clean.clone();
                    gc.data_mut().iter_mut().for_each(|v| *v *= s);
                    let mut gn = grad_noisy.clone();
                    gn.data_mut().iter_mut().for_each(|v| *v *= s);
                    accumulate(&mut adj, *clean, gc);
                    accumulate(&mut adj, *noisy, gn);
                }
                Op::MarginalKl { clean, noisy, transitions, grad_clean, grad_noisy, grad_tr } => {
                    let s = g.data()[0];
                    grads.get_mut(*transitions).add_scaled(grad_tr, s);
                    let mut gc = grad_clean.clone();
                    gc.data_mut().iter_mut().for_each(|v| *v *= s);
                    let mut gn = grad_noisy.clone();
                    gn.data_mut().iter_mut().for_each(|v| *v *= s);
                    accumulate(&mut adj, *clean, gc);
                    accumulate(&mut adj, *noisy, gn);
                }
                Op::Add(a, b) => {
                    accumulate(&mut adj, *a, g.clone());
                    accumulate(&mut adj, *b, g);
                }
                Op::Scale(a, f) => {
                    let mut gi = g;
                    gi.data_mut().iter_mut().for_each(|v| *v *= f);
                    accumulate(&mut adj, *a, gi);
                }
            }
        }
        Ok(())
    }
}

fn two_mut(grads: &mut Gradients, a: ParamId, b: ParamId) -> (&mut Tensor, &mut Tensor) {
    grads.pair_mut(a, b)
}
