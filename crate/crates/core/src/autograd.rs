//! Reverse-mode differentiation over a tape of the layer operations.
//!
//! Nodes are appended in evaluation order and may only reference earlier
//! nodes, so the recorded graph is acyclic by construction; `backward` walks
//! the tape once in reverse.

use crate::error::{Error, Result};
use crate::ops::{self, Activation, BatchNormState, BnMode};
use crate::tensor::{Scalar, Tensor};

/// Clamp applied to probabilities before taking logarithms.
pub const LOG_EPS: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    ConvDown { x: Var, w: Var, b: Option<Var> },
    ConvUp { x: Var, w: Var, b: Option<Var> },
    BatchNorm { x: Var, gamma: Var, beta: Var, mean: Vec<T>, var: Vec<T>, eps: T, train: bool },
    Act { x: Var, kind: Activation },
    Sum { x: Var },
    WeightedSum { x: Var, weights: Tensor<T> },
    Add { a: Var, b: Var },
    Scale { x: Var, c: T },
    MeanNegLog { x: Var, complement: bool },
}

impl<T> Op<T> {
    fn parents(&self) -> Vec<Var> {
        match self {
            Op::Leaf => vec![],
            Op::ConvDown { x, w, b } | Op::ConvUp { x, w, b } => {
                let mut p = vec![*x, *w];
                p.extend(b);
                p
            }
            Op::BatchNorm { x, gamma, beta, .. } => vec![*x, *gamma, *beta],
            Op::Act { x, .. }
            | Op::Sum { x }
            | Op::WeightedSum { x, .. }
            | Op::Scale { x, .. }
            | Op::MeanNegLog { x, .. } => vec![*x],
            Op::Add { a, b } => vec![*a, *b],
        }
    }
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

/// Gradients indexed by node; `None` for nodes the loss does not reach.
#[derive(Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    /// A leaf whose gradient is tracked.
    pub fn param(&mut self, t: Tensor<T>) -> Var {
        self.leaf(t, true)
    }

    /// A leaf treated as a constant.
    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.leaf(t, false)
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Result<Var> {
        let mut requires_grad = false;
        for p in op.parents() {
            let node = self
                .nodes
                .get(p.0)
                .ok_or_else(|| Error::Graph(format!("operand {} is not an earlier node", p.0)))?;
            requires_grad |= node.requires_grad;
        }
        self.nodes.push(Node { value, op, requires_grad });
        Ok(Var(self.nodes.len() - 1))
    }

    fn check(&self, v: Var) -> Result<&Tensor<T>> {
        self.nodes
            .get(v.0)
            .map(|n| &n.value)
            .ok_or_else(|| Error::Graph(format!("unknown node {}", v.0)))
    }

    fn conv_params(&self, w: Var, b: Option<Var>) -> Result<ops::ConvParams<T>> {
        let w = self.check(w)?.clone();
        let b = match b {
            Some(b) => Some(self.check(b)?.clone()),
            None => None,
        };
        ops::ConvParams::new(w, b)
    }

    pub fn conv_down(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let p = self.conv_params(w, b)?;
        let y = ops::conv2d_down(self.check(x)?, &p)?;
        self.push(y, Op::ConvDown { x, w, b })
    }

    pub fn conv_up(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let p = self.conv_params(w, b)?;
        let y = ops::conv2d_up(self.check(x)?, &p)?;
        self.push(y, Op::ConvUp { x, w, b })
    }

    /// Batch normalization with `gamma`/`beta` taken from the given nodes and
    /// running statistics from `state`. In train mode the batch statistics are
    /// used and blended into `state`.
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        state: &mut BatchNormState<T>,
        mode: BnMode,
    ) -> Result<Var> {
        let xv = self.check(x)?;
        let [n, h, w, c] = ops::dims4(xv)?;
        if n * h * w == 0 {
            return Err(Error::Shape("batch norm over an empty batch".into()));
        }
        if c != state.channels() || self.check(gamma)?.len() != c || self.check(beta)?.len() != c {
            return Err(Error::Shape(format!(
                "batch norm over {} channels applied to {c}",
                state.channels()
            )));
        }
        let (mean, var) = match mode {
            BnMode::Train => {
                let st = ops::bn_batch_stats(xv.data(), c);
                (st.mean, st.var)
            }
            BnMode::Infer => (state.running_mean.data().to_vec(), state.running_var.data().to_vec()),
        };
        let mut affine = state.clone();
        affine.gamma = self.value(gamma).clone();
        affine.beta = self.value(beta).clone();
        let y = ops::bn_apply(xv.data(), c, &mean, &var, &affine);
        let y = Tensor::from_vec(xv.shape(), y)?;
        if mode == BnMode::Train {
            state.update_running(&mean, &var);
        }
        let eps = state.eps;
        let train = mode == BnMode::Train;
        self.push(y, Op::BatchNorm { x, gamma, beta, mean, var, eps, train })
    }

    pub fn activation(&mut self, x: Var, kind: Activation) -> Result<Var> {
        let y = ops::activation(self.check(x)?, kind);
        self.push(y, Op::Act { x, kind })
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.check(x)?.sum();
        self.push(Tensor::scalar(s), Op::Sum { x })
    }

    /// `sum(x * weights)` for a constant tensor of the same shape.
    pub fn weighted_sum(&mut self, x: Var, weights: Tensor<T>) -> Result<Var> {
        let s = self.check(x)?.dot(&weights)?;
        self.push(Tensor::scalar(s), Op::WeightedSum { x, weights })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.check(a)?, self.check(b)?);
        if av.shape() != bv.shape() {
            return Err(Error::Shape(format!("add of {:?} and {:?}", av.shape(), bv.shape())));
        }
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| x + y).collect();
        let y = Tensor::from_vec(av.shape(), data)?;
        self.push(y, Op::Add { a, b })
    }

    pub fn scale(&mut self, x: Var, c: T) -> Result<Var> {
        let y = self.check(x)?.map(|v| v * c);
        self.push(y, Op::Scale { x, c })
    }

    /// `-mean(log(x))`, with `x` clamped to `[1e-7, 1 - 1e-7]`.
    pub fn mean_neg_log(&mut self, x: Var) -> Result<Var> {
        self.neg_log(x, false)
    }

    /// `-mean(log(1 - x))`, with `x` clamped to `[1e-7, 1 - 1e-7]`.
    pub fn mean_neg_log1m(&mut self, x: Var) -> Result<Var> {
        self.neg_log(x, true)
    }

    fn neg_log(&mut self, x: Var, complement: bool) -> Result<Var> {
        let xv = self.check(x)?;
        let (lo, hi) = clamp_bounds::<T>();
        let mut clamped = 0usize;
        let mut acc = T::zero();
        for &p in xv.data() {
            if p < lo || p > hi {
                clamped += 1;
            }
            let p = p.max(lo).min(hi);
            acc = acc + if complement { (T::one() - p).ln() } else { p.ln() };
        }
        if clamped > 0 {
            log::debug!("clamped {clamped} probabilities before log");
        }
        let n = T::from_usize(xv.len()).unwrap();
        self.push(Tensor::scalar(-acc / n), Op::MeanNegLog { x, complement })
    }

    /// Gradients of the scalar `loss` with respect to every node.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let root = self.check(loss)?;
        if root.len() != 1 {
            return Err(Error::Graph(format!("loss must be scalar, got shape {:?}", root.shape())));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(root.shape(), T::one()));
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            for p in node.op.parents() {
                if p.0 >= idx {
                    return Err(Error::Graph(format!("cycle through node {idx}")));
                }
            }
            for (parent, pg) in self.local_grads(node, &g)? {
                accumulate(&mut grads[parent.0], pg);
            }
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    /// Gradients for `params` in order. Parameters not connected to the loss
    /// are rejected.
    pub fn backward_params(&self, loss: Var, params: &[Var]) -> Result<Vec<Tensor<T>>> {
        let reach = self.reachable(loss)?;
        for p in params {
            if !reach.get(p.0).copied().unwrap_or(false) {
                return Err(Error::Graph(format!("parameter node {} is detached from the loss", p.0)));
            }
            if !self.nodes[p.0].requires_grad {
                return Err(Error::Graph(format!("node {} is a constant, not a parameter", p.0)));
            }
        }
        let mut g = self.backward(loss)?;
        Ok(params
            .iter()
            .map(|&p| g.take(p).unwrap_or_else(|| Tensor::zeros(self.value(p).shape())))
            .collect())
    }

    fn reachable(&self, loss: Var) -> Result<Vec<bool>> {
        self.check(loss)?;
        let mut seen = vec![false; self.nodes.len()];
        seen[loss.0] = true;
        for idx in (0..=loss.0).rev() {
            if seen[idx] {
                for p in self.nodes[idx].op.parents() {
                    seen[p.0] = true;
                }
            }
        }
        Ok(seen)
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn local_grads(&self, node: &Node<T>, g: &Tensor<T>) -> Result<Vec<(Var, Tensor<T>)>> {
        let mut out = Vec::new();
        match &node.op {
            Op::Leaf => {}
            Op::ConvDown { x, w, b } => {
                let xv = self.value(*x);
                let wv = self.value(*w);
                let d = ops::dims4(xv)?;
                let co = wv.shape()[3];
                if self.wants(*x) {
                    let wt = ops::transpose_kernel(wv);
                    let [n, h, wd, _] = d;
                    let gd = [n, h / 2, wd / 2, co];
                    let dx = ops::up_kernel(g.data(), gd, wt.data(), d[3], None);
                    out.push((*x, Tensor::from_vec(xv.shape(), dx)?));
                }
                if self.wants(*w) {
                    let dw = ops::down_weight_grad(xv.data(), d, g.data(), co);
                    out.push((*w, Tensor::from_vec(wv.shape(), dw)?));
                }
                if let Some(b) = b.filter(|b| self.wants(*b)) {
                    out.push((b, Tensor::from_vec(&[co], ops::channel_sums(g.data(), co))?));
                }
            }
            Op::ConvUp { x, w, b } => {
                let xv = self.value(*x);
                let wv = self.value(*w);
                let d = ops::dims4(xv)?;
                let co = wv.shape()[3];
                if self.wants(*x) {
                    let wt = ops::transpose_kernel(wv);
                    let [n, l, m, _] = d;
                    let gd = [n, 2 * l, 2 * m, co];
                    let dx = ops::down_kernel(g.data(), gd, wt.data(), d[3], None);
                    out.push((*x, Tensor::from_vec(xv.shape(), dx)?));
                }
                if self.wants(*w) {
                    let dw = ops::up_weight_grad(xv.data(), d, g.data(), co);
                    out.push((*w, Tensor::from_vec(wv.shape(), dw)?));
                }
                if let Some(b) = b.filter(|b| self.wants(*b)) {
                    out.push((b, Tensor::from_vec(&[co], ops::channel_sums(g.data(), co))?));
                }
            }
            Op::BatchNorm { x, gamma, beta, mean, var, eps, train } => {
                let xv = self.value(*x);
                let gam = self.value(*gamma).data();
                let c = gam.len();
                let invstd: Vec<T> = var.iter().map(|&v| T::one() / (v + *eps).sqrt()).collect();
                let mut xhat = Vec::with_capacity(xv.len());
                for row in xv.data().chunks_exact(c) {
                    xhat.extend((0..c).map(|ch| (row[ch] - mean[ch]) * invstd[ch]));
                }
                let mut dgamma = vec![T::zero(); c];
                let mut dbeta = vec![T::zero(); c];
                for (grow, hrow) in g.data().chunks_exact(c).zip(xhat.chunks_exact(c)) {
                    for ch in 0..c {
                        dgamma[ch] = dgamma[ch] + grow[ch] * hrow[ch];
                        dbeta[ch] = dbeta[ch] + grow[ch];
                    }
                }
                if self.wants(*x) {
                    let rows = T::from_usize(xv.len() / c).unwrap();
                    let mut dx = vec![T::zero(); xv.len()];
                    for ((drow, grow), hrow) in dx
                        .chunks_exact_mut(c)
                        .zip(g.data().chunks_exact(c))
                        .zip(xhat.chunks_exact(c))
                    {
                        for ch in 0..c {
                            let dxhat = grow[ch] * gam[ch];
                            drow[ch] = if *train {
                                let mean_dxhat = dbeta[ch] * gam[ch] / rows;
                                let mean_dxhat_xhat = dgamma[ch] * gam[ch] / rows;
                                invstd[ch] * (dxhat - mean_dxhat - hrow[ch] * mean_dxhat_xhat)
                            } else {
                                invstd[ch] * dxhat
                            };
                        }
                    }
                    out.push((*x, Tensor::from_vec(xv.shape(), dx)?));
                }
                if self.wants(*gamma) {
                    out.push((*gamma, Tensor::from_vec(&[c], dgamma)?));
                }
                if self.wants(*beta) {
                    out.push((*beta, Tensor::from_vec(&[c], dbeta)?));
                }
            }
            Op::Act { x, kind } => {
                if self.wants(*x) {
                    let xv = self.value(*x);
                    let data = xv
                        .data()
                        .iter()
                        .zip(node.value.data())
                        .zip(g.data())
                        .map(|((&xi, &yi), &gi)| gi * kind.derivative(xi, yi))
                        .collect();
                    out.push((*x, Tensor::from_vec(xv.shape(), data)?));
                }
            }
            Op::Sum { x } => {
                if self.wants(*x) {
                    out.push((*x, Tensor::full(self.value(*x).shape(), g.data()[0])));
                }
            }
            Op::WeightedSum { x, weights } => {
                if self.wants(*x) {
                    let s = g.data()[0];
                    out.push((*x, weights.map(|w| w * s)));
                }
            }
            Op::Add { a, b } => {
                if self.wants(*a) {
                    out.push((*a, g.clone()));
                }
                if self.wants(*b) {
                    out.push((*b, g.clone()));
                }
            }
            Op::Scale { x, c } => {
                if self.wants(*x) {
                    out.push((*x, g.map(|v| v * *c)));
                }
            }
            Op::MeanNegLog { x, complement } => {
                if self.wants(*x) {
                    let xv = self.value(*x);
                    let (lo, hi) = clamp_bounds::<T>();
                    let s = g.data()[0] / T::from_usize(xv.len()).unwrap();
                    let data = xv
                        .data()
                        .iter()
                        .map(|&p| {
                            if p < lo || p > hi {
                                T::zero()
                            } else if *complement {
                                s / (T::one() - p)
                            } else {
                                -s / p
                            }
                        })
                        .collect();
                    out.push((*x, Tensor::from_vec(xv.shape(), data)?));
                }
            }
        }
        Ok(out)
    }
}

fn clamp_bounds<T: Scalar>() -> (T, T) {
    let eps = T::from_f64_lossy(LOG_EPS);
    (eps, T::one() - eps)
}

fn accumulate<T: Scalar>(slot: &mut Option<Tensor<T>>, g: Tensor<T>) {
    match slot {
        Some(acc) => {
            for (a, &b) in acc.data_mut().iter_mut().zip(g.data()) {
                *a = *a + b;
            }
        }
        None => *slot = Some(g),
    }
}
