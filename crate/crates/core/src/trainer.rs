//! Adversarial training on random patches of example textures.
//!
//! Each step updates the discriminator once on a fresh real batch and a fresh
//! fake batch (two separate batch-norm passes), then the generator once on a
//! fresh noise batch using the non-saturating loss `-log D(G(Z))`. Losses
//! average over the batch and over every position of the probability field.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autograd::{Graph, LOG_EPS};
use crate::error::{Error, Result};
use crate::model::{build, sample_z_with, Discriminator, Generator, NetworkSpec};
use crate::ops::BnMode;
use crate::optim::{AdamConfig, AdamState};
use crate::persist::{self, Model, TrainState};
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub spec: NetworkSpec,
    pub batch_size: usize,
    pub steps: u64,
    pub adam: AdamConfig,
    /// Noise extent `(l, m)`; patches are `(r l, r m)` pixels.
    pub z_extent: (usize, usize),
    pub checkpoint_every: u64,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(spec: NetworkSpec) -> Self {
        Self {
            spec,
            batch_size: 32,
            steps: 1000,
            adam: AdamConfig::default(),
            z_extent: (4, 4),
            checkpoint_every: 100,
            seed: 0,
        }
    }

    pub fn patch_size(&self) -> (usize, usize) {
        let r = self.spec.ratio();
        (self.z_extent.0 * r, self.z_extent.1 * r)
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        if self.batch_size < 2 {
            return Err(Error::Invalid(format!("batch_size must be at least 2, got {}", self.batch_size)));
        }
        if self.z_extent.0 == 0 || self.z_extent.1 == 0 {
            return Err(Error::Invalid("noise extent must be positive".into()));
        }
        if self.checkpoint_every == 0 {
            return Err(Error::Invalid("checkpoint_every must be positive".into()));
        }
        Ok(())
    }
}

/// Draws patches uniformly over source images and valid top-left corners.
#[derive(Clone, Debug)]
pub struct PatchSampler<T> {
    images: Vec<Tensor<T>>,
    patch: (usize, usize),
    rng: ChaCha8Rng,
}

impl<T: Scalar> PatchSampler<T> {
    pub fn new(images: Vec<Tensor<T>>, patch: (usize, usize), seed: u64) -> Result<Self> {
        if images.is_empty() {
            return Err(Error::Invalid("at least one source image is required".into()));
        }
        for (i, img) in images.iter().enumerate() {
            match *img.shape() {
                [h, w, 3] if h >= patch.0 && w >= patch.1 => {}
                _ => {
                    return Err(Error::Invalid(format!(
                        "source image {i} with shape {:?} cannot hold a {}x{} RGB patch",
                        img.shape(),
                        patch.0,
                        patch.1
                    )))
                }
            }
        }
        Ok(Self { images, patch, rng: ChaCha8Rng::seed_from_u64(seed) })
    }

    pub fn patch_size(&self) -> (usize, usize) {
        self.patch
    }

    pub fn rng(&self) -> &ChaCha8Rng {
        &self.rng
    }

    pub fn set_rng(&mut self, rng: ChaCha8Rng) {
        self.rng = rng;
    }

    /// Picks a source image and a top-left corner.
    pub fn sample_position(&mut self) -> (usize, usize, usize) {
        let idx = self.rng.random_range(0..self.images.len());
        let s = self.images[idx].shape();
        let y = self.rng.random_range(0..=s[0] - self.patch.0);
        let x = self.rng.random_range(0..=s[1] - self.patch.1);
        (idx, y, x)
    }

    /// `(n, h, w, 3)` batch of patches.
    pub fn sample_batch(&mut self, n: usize) -> Result<Tensor<T>> {
        let (h, w) = self.patch;
        let patches = (0..n)
            .map(|_| {
                let (idx, y, x) = self.sample_position();
                self.images[idx].crop3(y, y + h, x, x + w)
            })
            .collect::<Result<Vec<_>>>()?;
        Tensor::stack(&patches)
    }
}

fn clamp_log(p: f64) -> f64 {
    p.clamp(LOG_EPS, 1.0 - LOG_EPS).ln()
}

/// `-mean(log D_real + log(1 - D_fake))` over all field positions.
pub fn d_loss<T: Scalar>(real: &Tensor<T>, fake: &Tensor<T>) -> Result<f64> {
    if real.shape() != fake.shape() {
        return Err(Error::Shape(format!("fields {:?} and {:?} differ", real.shape(), fake.shape())));
    }
    let n = real.len() as f64;
    let r: f64 = real.data().iter().map(|p| clamp_log(p.to_f64_lossy())).sum();
    let f: f64 = fake.data().iter().map(|p| clamp_log(1.0 - p.to_f64_lossy().clamp(LOG_EPS, 1.0 - LOG_EPS))).sum();
    Ok(-(r / n) - (f / n))
}

/// `-mean(log D_fake)` over all field positions.
pub fn g_loss<T: Scalar>(fake: &Tensor<T>) -> f64 {
    let n = fake.len() as f64;
    -fake.data().iter().map(|p| clamp_log(p.to_f64_lossy())).sum::<f64>() / n
}

/// Discriminator objective on a tape; returns gradients for D's parameters in
/// [`crate::model::Network::params`] order.
pub fn discriminator_step_grads<T: Scalar>(
    g: &Generator<T>,
    d: &mut Discriminator<T>,
    real: &Tensor<T>,
    z: &Tensor<T>,
) -> Result<(T, Vec<Tensor<T>>)> {
    let fake = g.generate(z, BnMode::Train)?;
    let mut graph = Graph::new();
    let params = d.net.register(&mut graph, true);
    let xr = graph.constant(real.clone());
    let xf = graph.constant(fake);
    let pr = d.net.forward_with(&mut graph, xr, &params, BnMode::Train)?;
    let pf = d.net.forward_with(&mut graph, xf, &params, BnMode::Train)?;
    let lr = graph.mean_neg_log(pr)?;
    let lf = graph.mean_neg_log1m(pf)?;
    let loss = graph.add(lr, lf)?;
    let value = graph.value(loss).data()[0];
    let grads = graph.backward_params(loss, &params.vars)?;
    Ok((value, grads))
}

/// Generator objective on a tape; returns gradients for G's parameters.
pub fn generator_step_grads<T: Scalar>(
    g: &mut Generator<T>,
    d: &mut Discriminator<T>,
    z: &Tensor<T>,
) -> Result<(T, Vec<Tensor<T>>)> {
    let mut graph = Graph::new();
    let gp = g.net.register(&mut graph, true);
    let dp = d.net.register(&mut graph, false);
    let zv = graph.constant(z.clone());
    let x = g.net.forward_with(&mut graph, zv, &gp, BnMode::Train)?;
    let p = d.net.forward_with(&mut graph, x, &dp, BnMode::Train)?;
    let loss = graph.mean_neg_log(p)?;
    let value = graph.value(loss).data()[0];
    let grads = graph.backward_params(loss, &gp.vars)?;
    Ok((value, grads))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepLosses {
    pub step: u64,
    pub d_loss: f64,
    pub g_loss: f64,
}

/// Training state: both networks, their optimizers and all random streams.
#[derive(Clone, Debug)]
pub struct Trainer<T> {
    pub config: TrainConfig,
    pub generator: Generator<T>,
    pub discriminator: Discriminator<T>,
    pub adam_g: AdamState<T>,
    pub adam_d: AdamState<T>,
    pub sampler: PatchSampler<T>,
    pub z_rng: ChaCha8Rng,
    pub step: u64,
}

impl<T: Scalar> Trainer<T> {
    pub fn new(config: TrainConfig, images: Vec<Tensor<T>>) -> Result<Self> {
        config.validate()?;
        let (generator, discriminator) = build(&config.spec, config.seed)?;
        Self::from_parts(config, generator, discriminator, images)
    }

    pub fn from_parts(
        config: TrainConfig,
        generator: Generator<T>,
        discriminator: Discriminator<T>,
        images: Vec<Tensor<T>>,
    ) -> Result<Self> {
        config.validate()?;
        if generator.spec != config.spec {
            return Err(Error::Spec("model architecture differs from the configured one".into()));
        }
        let sampler = PatchSampler::new(images, config.patch_size(), config.seed.wrapping_add(1))?;
        let adam_g = AdamState::new(config.adam, generator.net.params());
        let adam_d = AdamState::new(config.adam, discriminator.net.params());
        let z_rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(2));
        Ok(Self { config, generator, discriminator, adam_g, adam_d, sampler, z_rng, step: 0 })
    }

    fn noise_batch(&mut self) -> Result<Tensor<T>> {
        let (l, m) = self.config.z_extent;
        let shape = [self.config.batch_size, l, m, self.config.spec.d];
        sample_z_with(&mut self.z_rng, &shape)
    }

    /// One discriminator update followed by one generator update.
    pub fn train_step(&mut self) -> Result<StepLosses> {
        let step = self.step + 1;
        let non_finite = |what: &str| Error::NonFinite { step, what: what.to_string() };

        let real = self.sampler.sample_batch(self.config.batch_size)?;
        let z = self.noise_batch()?;
        let (dl, dgrads) = discriminator_step_grads(&self.generator, &mut self.discriminator, &real, &z)?;
        if !dl.is_finite() {
            return Err(non_finite("discriminator loss"));
        }
        self.adam_d
            .step(self.discriminator.net.params_mut(), &dgrads)
            .map_err(|_| non_finite("discriminator gradient"))?;

        let z = self.noise_batch()?;
        let (gl, ggrads) = generator_step_grads(&mut self.generator, &mut self.discriminator, &z)?;
        if !gl.is_finite() {
            return Err(non_finite("generator loss"));
        }
        self.adam_g
            .step(self.generator.net.params_mut(), &ggrads)
            .map_err(|_| non_finite("generator gradient"))?;

        self.step = step;
        Ok(StepLosses { step, d_loss: dl.to_f64_lossy(), g_loss: gl.to_f64_lossy() })
    }
}

impl Trainer<f32> {
    pub fn model(&self) -> Model {
        Model { generator: self.generator.clone(), discriminator: self.discriminator.clone() }
    }

    pub fn state(&self) -> TrainState {
        TrainState {
            step: self.step,
            z_rng: self.z_rng.clone(),
            sampler_rng: self.sampler.rng().clone(),
            adam_g: self.adam_g.clone(),
            adam_d: self.adam_d.clone(),
        }
    }

    /// Continues from a checkpoint. The optimizer hyperparameters come from
    /// `config`; moments and step counters from `state`.
    pub fn resume(config: TrainConfig, model: Model, state: TrainState, images: Vec<Tensor<f32>>) -> Result<Self> {
        let mut t = Self::from_parts(config, model.generator, model.discriminator, images)?;
        t.adam_g = AdamState { config: t.config.adam, ..state.adam_g };
        t.adam_d = AdamState { config: t.config.adam, ..state.adam_d };
        t.sampler.set_rng(state.sampler_rng);
        t.z_rng = state.z_rng;
        t.step = state.step;
        Ok(t)
    }
}

/// Output locations of a training run.
#[derive(Clone, Debug)]
pub struct RunPaths {
    pub out_dir: PathBuf,
    pub loss_log: PathBuf,
}

impl RunPaths {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        let out_dir = out_dir.into();
        let loss_log = out_dir.join("loss.log");
        Self { out_dir, loss_log }
    }

    pub fn model_path(&self, step: u64) -> PathBuf {
        self.out_dir.join(format!("step_{step:08}.sgan"))
    }

    pub fn state_path(&self, step: u64) -> PathBuf {
        self.out_dir.join(format!("step_{step:08}.state"))
    }

    pub fn latest_path(&self) -> PathBuf {
        self.out_dir.join("latest")
    }

    /// Step recorded by the last completed checkpoint.
    pub fn latest_step(&self) -> Result<u64> {
        let p = self.latest_path();
        let s = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
        s.trim()
            .parse()
            .map_err(|_| Error::Malformed { path: p, reason: format!("not a step number: {s:?}") })
    }
}

/// Writes model and state, then points `latest` at them. A crash before the
/// pointer update leaves the previous checkpoint as the latest.
pub fn write_checkpoint(trainer: &Trainer<f32>, paths: &RunPaths) -> Result<()> {
    fs::create_dir_all(&paths.out_dir).map_err(|e| Error::io(&paths.out_dir, e))?;
    persist::save_model(&trainer.model(), &paths.model_path(trainer.step))?;
    persist::save_state(&trainer.state(), &paths.state_path(trainer.step))?;
    persist::write_atomic(&paths.latest_path(), format!("{}\n", trainer.step).as_bytes())
}

pub fn load_checkpoint(paths: &RunPaths, step: u64) -> Result<(Model, TrainState)> {
    let model = persist::load_model(&paths.model_path(step))?;
    let state = persist::load_state(&paths.state_path(step), &model)?;
    Ok((model, state))
}

/// Runs until `config.steps` total steps, appending `step\td_loss\tg_loss\tseconds`
/// lines to the loss log and checkpointing every `checkpoint_every` steps and
/// at the end. A fresh run also checkpoints step 0. Log lines beyond the
/// trainer's current step (left by an interrupted run) are dropped first.
pub fn train_loop(
    trainer: &mut Trainer<f32>,
    paths: &RunPaths,
    mut progress: impl FnMut(&StepLosses),
) -> Result<Vec<StepLosses>> {
    let with_step = |step: u64, e: Error| match e {
        Error::Io { path, source } => Error::Io {
            path: PathBuf::from(format!("{} (at step {step})", path.display())),
            source,
        },
        other => other,
    };
    fs::create_dir_all(&paths.out_dir).map_err(|e| Error::io(&paths.out_dir, e))?;
    if trainer.step == 0 {
        write_checkpoint(trainer, paths).map_err(|e| with_step(0, e))?;
    }
    truncate_log(&paths.loss_log, trainer.step)?;
    let mut log = open_log(&paths.loss_log)?;
    let start = Instant::now();
    let mut history = Vec::new();
    while trainer.step < trainer.config.steps {
        let losses = trainer.train_step()?;
        let secs = start.elapsed().as_secs_f64();
        writeln!(log, "{}\t{}\t{}\t{:.6}", losses.step, losses.d_loss, losses.g_loss, secs)
            .and_then(|_| log.flush())
            .map_err(|e| with_step(losses.step, Error::io(&paths.loss_log, e)))?;
        progress(&losses);
        history.push(losses);
        let last = trainer.step == trainer.config.steps;
        if trainer.step.is_multiple_of(trainer.config.checkpoint_every) || last {
            write_checkpoint(trainer, paths).map_err(|e| with_step(trainer.step, e))?;
        }
    }
    Ok(history)
}

/// Keeps only loss-log lines for steps `<= step`.
pub fn truncate_log(path: &Path, step: u64) -> Result<()> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(()),
        Err(e) => return Err(Error::io(path, e)),
    };
    let kept: String = text
        .lines()
        .take_while(|l| l.split('\t').next().and_then(|s| s.parse::<u64>().ok()).is_some_and(|s| s <= step))
        .map(|l| format!("{l}\n"))
        .collect();
    if kept.len() != text.len() {
        persist::write_atomic(path, kept.as_bytes())?;
    }
    Ok(())
}

fn open_log(path: &Path) -> Result<fs::File> {
    OpenOptions::new().create(true).append(true).open(path).map_err(|e| Error::io(path, e))
}
