//! Linear-chain CRF over emission scores `N x L` and a transition matrix
//! `(L+2) x (L+2)` whose last two states are START and STOP.
//!
//! `transitions[i][j]` scores moving from label `i` to label `j`. A path
//! `y` scores `T[START][y0] + Σ e_t(y_t) + Σ T[y_{t-1}][y_t] + T[y_{N-1}][STOP]`.

use std::ops::{Add, Mul, Sub};

use super::tensor::Tensor;

pub fn start_state(num_labels: usize) -> usize {
    num_labels
}

pub fn stop_state(num_labels: usize) -> usize {
    num_labels + 1
}

/// Numbers the forward-backward recursion can run over: plain floats, and
/// dual numbers for Hessian-vector products.
pub(crate) trait Scalar: Copy + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> {
    fn constant(v: f64) -> Self;
    fn value(self) -> f64;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
}

impl Scalar for f64 {
    fn constant(v: f64) -> Self {
        v
    }
    fn value(self) -> f64 {
        self
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
}

/// Forward-mode dual number `value + tangent·ε`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Dual {
    pub v: f64,
    pub d: f64,
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, o: Dual) -> Dual {
        Dual { v: self.v + o.v, d: self.d + o.d }
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, o: Dual) -> Dual {
        Dual { v: self.v - o.v, d: self.d - o.d }
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, o: Dual) -> Dual {
        Dual { v: self.v * o.v, d: self.d * o.v + self.v * o.d }
    }
}

impl Scalar for Dual {
    fn constant(v: f64) -> Self {
        Dual { v, d: 0.0 }
    }
    fn value(self) -> f64 {
        self.v
    }
    fn exp(self) -> Self {
        let e = self.v.exp();
        // exp(-inf) carries no tangent even when the tangent is itself unbounded.
        Dual { v: e, d: if e == 0.0 { 0.0 } else { self.d * e } }
    }
    fn ln(self) -> Self {
        Dual { v: self.v.ln(), d: self.d / self.v }
    }
}

/// Max-shifted log-sum-exp. The shift is a constant, so tangents are exact.
pub(crate) fn log_sum_exp<T: Scalar>(xs: impl Iterator<Item = T> + Clone) -> T {
    let max = xs.clone().map(Scalar::value).fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return T::constant(f64::NEG_INFINITY);
    }
    let shift = T::constant(max);
    let mut acc = T::constant(0.0);
    for x in xs {
        acc = acc + (x - shift).exp();
    }
    shift + acc.ln()
}

pub(crate) struct Lattice<T> {
    pub log_z: T,
    /// `N x L` node marginals.
    pub node: Vec<T>,
    /// `(L+2) x (L+2)` expected transition counts.
    pub pair: Vec<T>,
}

/// Forward-backward in log space.
pub(crate) fn forward_backward<T: Scalar>(em: &[T], steps: usize, labels: usize, trans: &[T]) -> Lattice<T> {
    let w = labels + 2;
    let (start, stop) = (start_state(labels), stop_state(labels));
    let tr = |i: usize, j: usize| trans[i * w + j];

    let mut alpha = vec![T::constant(0.0); steps * labels];
    for j in 0..labels {
        alpha[j] = tr(start, j) + em[j];
    }
    for t in 1..steps {
        for j in 0..labels {
            let prev = &alpha[(t - 1) * labels..t * labels];
            alpha[t * labels + j] = log_sum_exp(prev.iter().enumerate().map(|(i, &a)| a + tr(i, j))) + em[t * labels + j];
        }
    }
    let last = &alpha[(steps - 1) * labels..];
    let log_z = log_sum_exp(last.iter().enumerate().map(|(i, &a)| a + tr(i, stop)));

    let mut beta = vec![T::constant(0.0); steps * labels];
    for i in 0..labels {
        beta[(steps - 1) * labels + i] = tr(i, stop);
    }
    for t in (0..steps - 1).rev() {
        for i in 0..labels {
            let next_em = &em[(t + 1) * labels..(t + 2) * labels];
            let next_beta = &beta[(t + 1) * labels..(t + 2) * labels];
            beta[t * labels + i] =
                log_sum_exp((0..labels).map(|j| tr(i, j) + next_em[j] + next_beta[j]));
        }
    }

    let node: Vec<T> = alpha.iter().zip(&beta).map(|(&a, &b)| (a + b - log_z).exp()).collect();
    let mut pair = vec![T::constant(0.0); w * w];
    for j in 0..labels {
        pair[start * w + j] = node[j];
        pair[j * w + stop] = node[(steps - 1) * labels + j];
    }
    for t in 1..steps {
        for i in 0..labels {
            let a = alpha[(t - 1) * labels + i];
            for j in 0..labels {
                let xi = (a + tr(i, j) + em[t * labels + j] + beta[t * labels + j] - log_z).exp();
                pair[i * w + j] = pair[i * w + j] + xi;
            }
        }
    }
    Lattice { log_z, node, pair }
}

fn check_shapes(emissions: &Tensor, transitions: &Tensor) -> (usize, usize) {
    let (steps, labels) = emissions.shape();
    assert!(steps >= 1, "CRF needs at least one time step");
    assert_eq!(transitions.shape(), (labels + 2, labels + 2), "transition matrix must be (L+2)x(L+2)");
    (steps, labels)
}

/// Log partition function by the forward algorithm.
pub fn log_partition(emissions: &Tensor, transitions: &Tensor) -> f64 {
    let (steps, labels) = check_shapes(emissions, transitions);
    let w = labels + 2;
    let tr = transitions.data();
    let (start, stop) = (start_state(labels), stop_state(labels));
    let mut alpha: Vec<f64> = (0..labels).map(|j| tr[start * w + j] + emissions.get(0, j)).collect();
    let mut next = vec![0.0; labels];
    for t in 1..steps {
        for (j, n) in next.iter_mut().enumerate() {
            *n = log_sum_exp(alpha.iter().enumerate().map(|(i, &a)| a + tr[i * w + j])) + emissions.get(t, j);
        }
        std::mem::swap(&mut alpha, &mut next);
    }
    log_sum_exp(alpha.iter().enumerate().map(|(i, &a)| a + tr[i * w + stop]))
}

pub fn path_score(emissions: &Tensor, transitions: &Tensor, path: &[usize]) -> f64 {
    let (steps, labels) = check_shapes(emissions, transitions);
    assert_eq!(path.len(), steps);
    let mut score = transitions.get(start_state(labels), path[0]);
    for (t, &y) in path.iter().enumerate() {
        score += emissions.get(t, y);
        if t > 0 {
            score += transitions.get(path[t - 1], y);
        }
    }
    score + transitions.get(path[steps - 1], stop_state(labels))
}

/// `score(gold) - logZ`.
pub fn crf_log_likelihood(emissions: &Tensor, transitions: &Tensor, gold: &[usize]) -> f64 {
    path_score(emissions, transitions, gold) - log_partition(emissions, transitions)
}

/// Highest-scoring path. Ties go to the lowest label id at the latest
/// position where tied paths differ.
pub fn viterbi_decode(emissions: &Tensor, transitions: &Tensor) -> Vec<usize> {
    let (steps, labels) = check_shapes(emissions, transitions);
    let w = labels + 2;
    let tr = transitions.data();
    let (start, stop) = (start_state(labels), stop_state(labels));
    let mut score: Vec<f64> = (0..labels).map(|j| tr[start * w + j] + emissions.get(0, j)).collect();
    let mut back = vec![0usize; steps * labels];
    let mut next = vec![0.0; labels];
    for t in 1..steps {
        for j in 0..labels {
            let mut best = f64::NEG_INFINITY;
            let mut arg = 0;
            for (i, &s) in score.iter().enumerate() {
                let v = s + tr[i * w + j];
                if v > best {
                    best = v;
                    arg = i;
                }
            }
            next[j] = best + emissions.get(t, j);
            back[t * labels + j] = arg;
        }
        std::mem::swap(&mut score, &mut next);
    }
    let mut best = f64::NEG_INFINITY;
    let mut last = 0;
    for (i, &s) in score.iter().enumerate() {
        let v = s + tr[i * w + stop];
        if v > best {
            best = v;
            last = i;
        }
    }
    let mut path = vec![0; steps];
    path[steps - 1] = last;
    for t in (1..steps).rev() {
        path[t - 1] = back[t * labels + path[t]];
    }
    path
}

/// Node marginals `N x L`, expected transition counts and logZ.
pub fn marginals(emissions: &Tensor, transitions: &Tensor) -> (Tensor, Tensor, f64) {
    let (steps, labels) = check_shapes(emissions, transitions);
    let lat = forward_backward(emissions.data(), steps, labels, transitions.data());
    (
        Tensor::from_vec(steps, labels, lat.node),
        Tensor::from_vec(labels + 2, labels + 2, lat.pair),
        lat.log_z,
    )
}

/// Row-wise softmax with max subtraction.
pub fn token_posteriors(logits: &Tensor) -> Tensor {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        row.iter_mut().for_each(|v| *v /= sum);
    }
    out
}

pub(crate) fn log_softmax_row(row: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(row.iter().copied());
    row.iter().map(|v| v - lse).collect()
}

/// `Σ_t KL(softmax(clean_t) ‖ softmax(noisy_t))` with gradients with respect
/// to both logit matrices.
pub(crate) fn softmax_kl(clean: &Tensor, noisy: &Tensor) -> (f64, Tensor, Tensor) {
    assert_eq!(clean.shape(), noisy.shape());
    let mut total = 0.0;
    let mut g_clean = Tensor::zeros(clean.rows(), clean.cols());
    let mut g_noisy = Tensor::zeros(noisy.rows(), noisy.cols());
    for t in 0..clean.rows() {
        let lr = log_softmax_row(clean.row(t));
        let lq = log_softmax_row(noisy.row(t));
        let r: Vec<f64> = lr.iter().map(|v| v.exp()).collect();
        let diff: Vec<f64> = lr.iter().zip(&lq).map(|(a, b)| a - b).collect();
        let kl: f64 = r.iter().zip(&diff).map(|(p, d)| p * d).sum();
        total += kl;
        for (k, g) in g_clean.row_mut(t).iter_mut().enumerate() {
            *g = r[k] * (diff[k] - kl);
        }
        for (k, g) in g_noisy.row_mut(t).iter_mut().enumerate() {
            *g = lq[k].exp() - r[k];
        }
    }
    (total, g_clean, g_noisy)
}

fn tangent_lattice(em: &Tensor, trans: &Tensor, em_tangent: &[f64]) -> Lattice<Dual> {
    let (steps, labels) = em.shape();
    let em_dual: Vec<Dual> = em.data().iter().zip(em_tangent).map(|(&v, &d)| Dual { v, d }).collect();
    let tr_dual: Vec<Dual> = trans.data().iter().map(|&v| Dual::constant(v)).collect();
    forward_backward(&em_dual, steps, labels, &tr_dual)
}

/// `Σ_t KL(μ_t ‖ ν_t)` between CRF node marginals of the clean and noisy
/// emissions, with gradients for both emission matrices and the shared
/// transitions. Gradients are Hessian-vector products of logZ, computed by
/// pushing dual numbers through forward-backward.
pub(crate) fn marginal_kl(clean: &Tensor, noisy: &Tensor, transitions: &Tensor) -> (f64, Tensor, Tensor, Tensor) {
    let (steps, labels) = check_shapes(clean, transitions);
    assert_eq!(noisy.shape(), clean.shape());
    let mu = forward_backward(clean.data(), steps, labels, transitions.data()).node;
    let nu = forward_backward(noisy.data(), steps, labels, transitions.data()).node;

    let mut value = 0.0;
    let mut w_clean = vec![0.0; mu.len()];
    let mut w_noisy = vec![0.0; mu.len()];
    for k in 0..mu.len() {
        if mu[k] > 0.0 {
            let d = mu[k].ln() - nu[k].ln();
            value += mu[k] * d;
            w_clean[k] = d + 1.0;
            w_noisy[k] = -mu[k] / nu[k];
        }
    }
    let lc = tangent_lattice(clean, transitions, &w_clean);
    let ln = tangent_lattice(noisy, transitions, &w_noisy);
    let g_clean = Tensor::from_vec(steps, labels, lc.node.iter().map(|x| x.d).collect());
    let g_noisy = Tensor::from_vec(steps, labels, ln.node.iter().map(|x| x.d).collect());
    let g_trans = Tensor::from_vec(
        labels + 2,
        labels + 2,
        lc.pair.iter().zip(&ln.pair).map(|(a, b)| a.d + b.d).collect(),
    );
    (value, g_clean, g_noisy, g_trans)
}
