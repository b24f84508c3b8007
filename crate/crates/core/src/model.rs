//! Spatial generator and discriminator.
//!
//! Both networks are purely convolutional: `k` transposed 5x5 layers map a
//! noise field `(l, m, d)` to an image `(2^k l, 2^k m, 3)`, and `k` strided
//! layers map an image back to an `(l, m)` field of real/fake probabilities.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::autograd::{Graph, Var};
use crate::error::{check_divisible, Error, Result};
use crate::fields::ratio;
use crate::ops::{self, Activation, BatchNormState, BnMode, ConvParams};
use crate::tensor::{Scalar, Tensor};

pub const IMAGE_CHANNELS: usize = 3;
pub const INIT_STD: f64 = 0.02;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NetworkSpec {
    pub k: u32,
    /// Noise channels per spatial position.
    pub d: usize,
    /// Output channels of each generator layer, ending in 3.
    pub g_filters: Vec<usize>,
    /// Output channels of each discriminator layer, ending in 1.
    pub d_filters: Vec<usize>,
}

impl NetworkSpec {
    /// Builds a spec from the generator's hidden filter counts; the
    /// discriminator mirrors them.
    pub fn from_hidden(d: usize, g_hidden: &[usize]) -> Result<Self> {
        let k = g_hidden.len() as u32 + 1;
        let mut g_filters = g_hidden.to_vec();
        g_filters.push(IMAGE_CHANNELS);
        let mut d_filters: Vec<usize> = g_hidden.iter().rev().copied().collect();
        d_filters.push(1);
        let spec = Self { k, d, g_filters, d_filters };
        spec.validate()?;
        Ok(spec)
    }

    pub fn sgan4() -> Self {
        Self::from_hidden(20, &[256, 128, 64]).expect("valid preset")
    }

    pub fn sgan5() -> Self {
        Self::from_hidden(50, &[512, 256, 128, 64]).expect("valid preset")
    }

    pub fn sgan6() -> Self {
        Self::from_hidden(100, &[1024, 512, 256, 128, 64]).expect("valid preset")
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "sgan4" => Some(Self::sgan4()),
            "sgan5" => Some(Self::sgan5()),
            "sgan6" => Some(Self::sgan6()),
            _ => None,
        }
    }

    pub fn ratio(&self) -> usize {
        ratio(self.k)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.k as usize;
        if k == 0 || k > 12 {
            return Err(Error::Spec(format!("depth must be in 1..=12, got {k}")));
        }
        if self.d == 0 {
            return Err(Error::Spec("noise channel count must be positive".into()));
        }
        if self.g_filters.len() != k || self.d_filters.len() != k {
            return Err(Error::Spec(format!(
                "filter lists must have length k = {k} (got {} and {})",
                self.g_filters.len(),
                self.d_filters.len()
            )));
        }
        if self.g_filters.contains(&0) || self.d_filters.contains(&0) {
            return Err(Error::Spec("filter counts must be positive".into()));
        }
        if self.g_filters[k - 1] != IMAGE_CHANNELS {
            return Err(Error::Spec("the generator's last layer must output 3 channels".into()));
        }
        if self.d_filters[k - 1] != 1 {
            return Err(Error::Spec("the discriminator's last layer must output 1 channel".into()));
        }
        let reversed: Vec<usize> = self.g_filters[..k - 1].iter().rev().copied().collect();
        if self.d_filters[..k - 1] != reversed[..] {
            return Err(Error::Spec(format!(
                "discriminator filters {:?} must mirror generator filters {:?}",
                self.d_filters, self.g_filters
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerKind {
    Up,
    Down,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer<T> {
    pub kind: LayerKind,
    pub conv: ConvParams<T>,
    pub bn: Option<BatchNormState<T>>,
    pub act: Activation,
}

impl<T: Scalar> Layer<T> {
    fn forward(&self, x: &Tensor<T>, mode: BnMode) -> Result<Tensor<T>> {
        let y = match self.kind {
            LayerKind::Up => ops::conv2d_up(x, &self.conv)?,
            LayerKind::Down => ops::conv2d_down(x, &self.conv)?,
        };
        let y = match &self.bn {
            Some(bn) => {
                // The plain forward never mutates, so train mode here uses batch
                // statistics without touching the running estimates.
                let mut bn = bn.clone();
                bn.mode = mode;
                ops::batch_norm(&y, &mut bn)?
            }
            None => y,
        };
        Ok(ops::activation(&y, self.act))
    }

    /// Parameter tensors in serialization order: weights, bias, gamma, beta.
    pub fn params(&self) -> Vec<&Tensor<T>> {
        let mut p = vec![&self.conv.weights];
        p.extend(self.conv.bias.as_ref());
        if let Some(bn) = &self.bn {
            p.push(&bn.gamma);
            p.push(&bn.beta);
        }
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut p = vec![&mut self.conv.weights];
        p.extend(self.conv.bias.as_mut());
        if let Some(bn) = &mut self.bn {
            p.push(&mut bn.gamma);
            p.push(&mut bn.beta);
        }
        p
    }
}

/// A stack of layers shared by both networks.
#[derive(Clone, Debug, PartialEq)]
pub struct Network<T> {
    pub layers: Vec<Layer<T>>,
}

/// Parameters registered on a tape, in [`Network::params`] order.
#[derive(Clone, Debug)]
pub struct TapeParams {
    pub vars: Vec<Var>,
}

impl<T: Scalar> Network<T> {
    pub fn forward(&self, x: &Tensor<T>, mode: BnMode) -> Result<Tensor<T>> {
        let mut h = self.layers[0].forward(x, mode)?;
        for layer in &self.layers[1..] {
            h = layer.forward(&h, mode)?;
        }
        Ok(h)
    }

    /// Records the forward pass on `graph`. Parameters become leaves that
    /// track gradients when `trainable`, constants otherwise. Train mode
    /// blends batch statistics into the running estimates.
    /// Records every layer on the tape; train-mode batch norm updates the
    /// running statistics.
    pub fn forward_tape(
        &mut self,
        graph: &mut Graph<T>,
        x: Var,
        mode: BnMode,
        trainable: bool,
    ) -> Result<(Var, TapeParams)> {
        let params = self.register(graph, trainable);
        let h = self.forward_with(graph, x, &params, mode)?;
        Ok((h, params))
    }

    /// Adds the parameters to the tape as leaves, in [`Network::params`] order.
    /// Several passes may share one registration so their gradients add up.
    pub fn register(&self, graph: &mut Graph<T>, trainable: bool) -> TapeParams {
        let vars = self.params().into_iter().map(|p| graph.leaf(p.clone(), trainable)).collect();
        TapeParams { vars }
    }

    pub fn forward_with(&mut self, graph: &mut Graph<T>, x: Var, params: &TapeParams, mode: BnMode) -> Result<Var> {
        let expected: usize = self.layers.iter().map(|l| l.params().len()).sum();
        if params.vars.len() != expected {
            return Err(Error::Graph(format!(
                "registration holds {} parameters, network has {expected}",
                params.vars.len()
            )));
        }
        let mut it = params.vars.iter().copied();
        let mut h = x;
        for layer in &mut self.layers {
            let w = it.next().expect("counted");
            let b = layer.conv.bias.as_ref().map(|_| it.next().expect("counted"));
            h = match layer.kind {
                LayerKind::Up => graph.conv_up(h, w, b)?,
                LayerKind::Down => graph.conv_down(h, w, b)?,
            };
            if let Some(bn) = &mut layer.bn {
                let gamma = it.next().expect("counted");
                let beta = it.next().expect("counted");
                h = graph.batch_norm(h, gamma, beta, bn, mode)?;
            }
            h = graph.activation(h, layer.act)?;
        }
        Ok(h)
    }

    pub fn params(&self) -> Vec<&Tensor<T>> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    pub fn set_bn_mode(&mut self, mode: BnMode) {
        for bn in self.layers.iter_mut().filter_map(|l| l.bn.as_mut()) {
            bn.mode = mode;
        }
    }

    pub fn cast<U: Scalar>(&self) -> Network<U> {
        Network {
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    kind: l.kind,
                    conv: ConvParams {
                        weights: l.conv.weights.cast(),
                        bias: l.conv.bias.as_ref().map(|b| b.cast()),
                    },
                    bn: l.bn.as_ref().map(|bn| BatchNormState {
                        gamma: bn.gamma.cast(),
                        beta: bn.beta.cast(),
                        running_mean: bn.running_mean.cast(),
                        running_var: bn.running_var.cast(),
                        eps: U::from_f64_lossy(bn.eps.to_f64_lossy()),
                        momentum: U::from_f64_lossy(bn.momentum.to_f64_lossy()),
                        mode: bn.mode,
                    }),
                    act: l.act,
                })
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Generator<T> {
    pub spec: NetworkSpec,
    pub net: Network<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Discriminator<T> {
    pub spec: NetworkSpec,
    pub net: Network<T>,
}

/// Layer layout of the generator: batch norm and ReLU on hidden layers, bias
/// and tanh on the output layer.
pub fn generator_layout(spec: &NetworkSpec) -> Vec<(LayerKind, usize, usize, bool, bool, Activation)> {
    let k = spec.k as usize;
    let mut c_in = spec.d;
    (0..k)
        .map(|i| {
            let last = i + 1 == k;
            let c_out = spec.g_filters[i];
            let act = if last { Activation::Tanh } else { Activation::Relu };
            let row = (LayerKind::Up, c_in, c_out, last, !last, act);
            c_in = c_out;
            row
        })
        .collect()
}

/// Layer layout of the discriminator: bias and no batch norm on the input and
/// output layers, leaky ReLU on hidden layers, sigmoid output.
pub fn discriminator_layout(spec: &NetworkSpec) -> Vec<(LayerKind, usize, usize, bool, bool, Activation)> {
    let k = spec.k as usize;
    let mut c_in = IMAGE_CHANNELS;
    (0..k)
        .map(|i| {
            let last = i + 1 == k;
            let first = i == 0;
            let c_out = spec.d_filters[i];
            let act = if last { Activation::Sigmoid } else { Activation::LeakyRelu };
            let bias = first || last;
            let row = (LayerKind::Down, c_in, c_out, bias, !bias, act);
            c_in = c_out;
            row
        })
        .collect()
}

fn build_network<T: Scalar>(
    layout: &[(LayerKind, usize, usize, bool, bool, Activation)],
    rng: &mut ChaCha8Rng,
) -> Network<T> {
    let normal = Normal::new(0.0, INIT_STD).expect("valid std");
    let layers = layout
        .iter()
        .map(|&(kind, c_in, c_out, has_bias, has_bn, act)| {
            let weights = Tensor::from_fn(&[5, 5, c_in, c_out], |_| T::from_f64_lossy(normal.sample(rng)));
            Layer {
                kind,
                conv: ConvParams { weights, bias: has_bias.then(|| Tensor::zeros(&[c_out])) },
                bn: has_bn.then(|| BatchNormState::new(c_out)),
                act,
            }
        })
        .collect();
    Network { layers }
}

/// Initializes both networks with N(0, 0.02^2) weights, zero biases and
/// identity batch-norm statistics.
pub fn build<T: Scalar>(spec: &NetworkSpec, seed: u64) -> Result<(Generator<T>, Discriminator<T>)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = build_network(&generator_layout(spec), &mut rng);
    let d = build_network(&discriminator_layout(spec), &mut rng);
    Ok((Generator { spec: spec.clone(), net: g }, Discriminator { spec: spec.clone(), net: d }))
}

/// Noise field `(l, m, d)` with i.i.d. entries uniform on `[-1, 1]`.
pub fn sample_z<T: Scalar>(l: usize, m: usize, d: usize, seed: u64) -> Result<Tensor<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_z_with(&mut rng, &[l, m, d])
}

pub fn sample_z_with<T: Scalar, R: Rng>(rng: &mut R, shape: &[usize]) -> Result<Tensor<T>> {
    if shape.is_empty() || shape.contains(&0) {
        return Err(Error::Invalid(format!("noise shape {shape:?} must be positive")));
    }
    let uni = Uniform::new_inclusive(-1.0f64, 1.0).expect("valid range");
    Ok(Tensor::from_fn(shape, |_| T::from_f64_lossy(uni.sample(rng))))
}

impl<T: Scalar> Generator<T> {
    pub fn ratio(&self) -> usize {
        self.spec.ratio()
    }

    /// `G(Z)` for a single field `(l, m, d)` or a batch `(n, l, m, d)`.
    pub fn generate(&self, z: &Tensor<T>, mode: BnMode) -> Result<Tensor<T>> {
        let c = *z.shape().last().unwrap_or(&0);
        if !(z.rank() == 3 || z.rank() == 4) || c != self.spec.d {
            return Err(Error::Shape(format!(
                "noise must have {} channels, got shape {:?}",
                self.spec.d,
                z.shape()
            )));
        }
        self.net.forward(z, mode)
    }

    pub fn cast<U: Scalar>(&self) -> Generator<U> {
        Generator { spec: self.spec.clone(), net: self.net.cast() }
    }
}

impl<T: Scalar> Discriminator<T> {
    /// Probability field `(h / r, w / r, 1)` for an image `(h, w, 3)` or batch.
    pub fn discriminate(&self, x: &Tensor<T>, mode: BnMode) -> Result<Tensor<T>> {
        let [_, h, w, c] = ops::dims4(x)?;
        let r = self.spec.ratio();
        if c != IMAGE_CHANNELS {
            return Err(Error::Shape(format!("images must have 3 channels, got {:?}", x.shape())));
        }
        check_divisible(h, r)?;
        check_divisible(w, r)?;
        self.net.forward(x, mode)
    }

    pub fn cast<U: Scalar>(&self) -> Discriminator<U> {
        Discriminator { spec: self.spec.clone(), net: self.net.cast() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_match_table() {
        let s4 = NetworkSpec::sgan4();
        assert_eq!((s4.k, s4.d, s4.ratio()), (4, 20, 16));
        let s5 = NetworkSpec::sgan5();
        assert_eq!((s5.k, s5.d, s5.ratio()), (5, 50, 32));
        assert_eq!(s5.g_filters, vec![512, 256, 128, 64, 3]);
        assert_eq!(s5.d_filters, vec![64, 128, 256, 512, 1]);
        let s6 = NetworkSpec::sgan6();
        assert_eq!((s6.k, s6.d, s6.ratio()), (6, 100, 64));
    }

    #[test]
    fn inconsistent_specs_rejected() {
        let mut s = NetworkSpec::sgan4();
        s.d_filters[0] = 65;
        assert!(s.validate().is_err());
        let mut s = NetworkSpec::sgan4();
        s.g_filters.pop();
        assert!(build::<f32>(&s, 0).is_err());
    }

    #[test]
    fn layer_layout() {
        let (g, d) = build::<f32>(&NetworkSpec::from_hidden(4, &[8, 6]).unwrap(), 1).unwrap();
        let gl = &g.net.layers;
        assert!(gl[0].bn.is_some() && gl[0].conv.bias.is_none());
        assert!(gl[2].bn.is_none() && gl[2].conv.bias.is_some());
        assert_eq!(gl[2].act, Activation::Tanh);
        let dl = &d.net.layers;
        assert!(dl[0].bn.is_none() && dl[0].conv.bias.is_some());
        assert!(dl[1].bn.is_some());
        assert!(dl[2].bn.is_none() && dl[2].act == Activation::Sigmoid);
        assert_eq!(dl[1].conv.c_in(), 6);
        assert_eq!(dl[2].conv.c_in(), 8);
    }

    #[test]
    fn init_statistics() {
        let (g, _) = build::<f64>(&NetworkSpec::from_hidden(16, &[32, 16]).unwrap(), 3).unwrap();
        let w: Vec<f64> = g.net.layers.iter().flat_map(|l| l.conv.weights.data().to_vec()).collect();
        let n = w.len() as f64;
        let mean = w.iter().sum::<f64>() / n;
        let var = w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        // 3 sigma bounds on the sample mean and sample std
        assert!(mean.abs() < 3.0 * INIT_STD / n.sqrt(), "mean {mean}");
        let std_se = INIT_STD / (2.0 * n).sqrt();
        assert!((var.sqrt() - INIT_STD).abs() < 3.0 * std_se, "std {}", var.sqrt());
    }

    #[test]
    fn noise_support_and_moments() {
        let z = sample_z::<f64>(100, 100, 10, 11).unwrap();
        assert!(z.data().iter().all(|v| (-1.0..=1.0).contains(v)));
        let n = z.len() as f64;
        let mean = z.mean();
        let var = z.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 3.0 * (1.0f64 / 3.0 / n).sqrt());
        // var of (U^2) for U~[-1,1] is 1/5 - 1/9 = 4/45
        assert!((var - 1.0 / 3.0).abs() < 3.0 * (4.0f64 / 45.0 / n).sqrt());
        assert_eq!(z, sample_z::<f64>(100, 100, 10, 11).unwrap());
        assert_ne!(z, sample_z::<f64>(100, 100, 10, 12).unwrap());
    }

    #[test]
    fn generate_shapes() {
        let spec = NetworkSpec::from_hidden(5, &[4, 4]).unwrap();
        let (g, d) = build::<f32>(&spec, 0).unwrap();
        let z = sample_z(3, 2, 5, 0).unwrap();
        let x = g.generate(&z, BnMode::Infer).unwrap();
        assert_eq!(x.shape(), &[24, 16, 3]);
        assert!(x.data().iter().all(|v| (-1.0..=1.0).contains(v)));
        let p = d.discriminate(&x, BnMode::Infer).unwrap();
        assert_eq!(p.shape(), &[3, 2, 1]);
        assert!(p.data().iter().all(|&v| v > 0.0 && v < 1.0));
        assert!(g.generate(&sample_z(3, 2, 4, 0).unwrap(), BnMode::Infer).is_err());
        assert!(d.discriminate(&Tensor::zeros(&[12, 16, 3]), BnMode::Infer).is_err());
    }

    #[test]
    fn zero_weights_give_constant_output() {
        let spec = NetworkSpec::from_hidden(3, &[4]).unwrap();
        let (mut g, mut d) = build::<f64>(&spec, 0).unwrap();
        for p in g.net.params_mut().into_iter().chain(d.net.params_mut()) {
            p.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let z = Tensor::zeros(&[2, 2, 3]);
        let x = g.generate(&z, BnMode::Infer).unwrap();
        assert!(x.data().iter().all(|&v| v == 0.0));
        let p = d.discriminate(&x, BnMode::Infer).unwrap();
        assert!(p.data().iter().all(|&v| v == 0.5));
    }
}
