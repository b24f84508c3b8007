//! Binary model and training-state files.
//!
//! Model file layout, all integers and floats little-endian:
//!
//! ```text
//! magic       4 bytes  "SGAN"
//! version     u16      1
//! k           u16      depth
//! d           u16      noise channels
//! 2k records  kind u8 (0 = up, 1 = down), c_in u16, c_out u16,
//!             has_bias u8, has_bn u8
//!             generator layers first, then discriminator layers
//! parameters  f32 per layer in record order: conv weights
//!             (kernel_row, kernel_col, c_in, c_out) row-major, then bias,
//!             then gamma, beta, running_mean, running_var
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{
    discriminator_layout, generator_layout, Discriminator, Generator, LayerKind, Network, NetworkSpec,
};
use crate::ops::{BatchNormState, ConvParams};
use crate::optim::{AdamConfig, AdamState};
use crate::tensor::Tensor;

pub const MODEL_MAGIC: &[u8; 4] = b"SGAN";
pub const MODEL_VERSION: u16 = 1;
pub const STATE_MAGIC: &[u8; 4] = b"SGST";
pub const STATE_VERSION: u16 = 1;

/// A generator/discriminator pair at training precision.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub generator: Generator<f32>,
    pub discriminator: Discriminator<f32>,
}

impl Model {
    pub fn spec(&self) -> &NetworkSpec {
        &self.generator.spec
    }
}

/// Writes `bytes` to a temporary file beside `path` and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u128(&mut self, v: u128) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn tensor(&mut self, t: &Tensor<f32>) {
        for v in t.data() {
            self.0.extend_from_slice(&v.to_le_bytes());
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Truncated { path: self.path.to_path_buf() });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn u128(&mut self) -> Result<u128> {
        Ok(u128::from_le_bytes(self.take(16)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn tensor(&mut self, shape: &[usize]) -> Result<Tensor<f32>> {
        let n: usize = shape.iter().product();
        let bytes = self.take(n * 4)?;
        let data = bytes.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();
        Tensor::from_vec(shape, data)
    }
    fn header(&mut self, magic: &[u8; 4], version: u16) -> Result<()> {
        let path = self.path.to_path_buf();
        if self.buf.len() < 4 {
            return Err(Error::Truncated { path });
        }
        if self.take(4)? != magic {
            return Err(Error::BadMagic { path });
        }
        let found = self.u16()?;
        if found != version {
            return Err(Error::Version { path, found, expected: version });
        }
        Ok(())
    }
    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(self.malformed(format!("{} trailing bytes", self.buf.len() - self.pos)));
        }
        Ok(())
    }
    fn malformed(&self, reason: String) -> Error {
        Error::Malformed { path: self.path.to_path_buf(), reason }
    }
}

fn to_u16(v: usize, what: &str) -> Result<u16> {
    u16::try_from(v).map_err(|_| Error::Spec(format!("{what} = {v} does not fit the model format")))
}

pub fn encode_model(model: &Model) -> Result<Vec<u8>> {
    let spec = model.spec();
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MODEL_MAGIC);
    w.u16(MODEL_VERSION);
    w.u16(to_u16(spec.k as usize, "k")?);
    w.u16(to_u16(spec.d, "d")?);
    let layers = model.generator.net.layers.iter().chain(&model.discriminator.net.layers);
    for l in layers.clone() {
        w.u8(match l.kind {
            LayerKind::Up => 0,
            LayerKind::Down => 1,
        });
        w.u16(to_u16(l.conv.c_in(), "c_in")?);
        w.u16(to_u16(l.conv.c_out(), "c_out")?);
        w.u8(l.conv.bias.is_some() as u8);
        w.u8(l.bn.is_some() as u8);
    }
    for l in layers {
        w.tensor(&l.conv.weights);
        if let Some(b) = &l.conv.bias {
            w.tensor(b);
        }
        if let Some(bn) = &l.bn {
            w.tensor(&bn.gamma);
            w.tensor(&bn.beta);
            w.tensor(&bn.running_mean);
            w.tensor(&bn.running_var);
        }
    }
    Ok(w.0)
}

pub fn decode_model(bytes: &[u8], path: &Path) -> Result<Model> {
    let mut r = Reader { buf: bytes, pos: 0, path };
    r.header(MODEL_MAGIC, MODEL_VERSION)?;
    let k = r.u16()? as usize;
    let d = r.u16()? as usize;
    if k == 0 {
        return Err(r.malformed("depth 0".into()));
    }
    let mut records = Vec::with_capacity(2 * k);
    for _ in 0..2 * k {
        let kind = match r.u8()? {
            0 => LayerKind::Up,
            1 => LayerKind::Down,
            other => return Err(r.malformed(format!("unknown layer kind {other}"))),
        };
        let c_in = r.u16()? as usize;
        let c_out = r.u16()? as usize;
        let has_bias = r.u8()? != 0;
        let has_bn = r.u8()? != 0;
        records.push((kind, c_in, c_out, has_bias, has_bn));
    }
    let spec = NetworkSpec {
        k: k as u32,
        d,
        g_filters: records[..k].iter().map(|r| r.2).collect(),
        d_filters: records[k..].iter().map(|r| r.2).collect(),
    };
    spec.validate().map_err(|e| r.malformed(e.to_string()))?;
    let expected = generator_layout(&spec).into_iter().chain(discriminator_layout(&spec));
    let mut acts = Vec::with_capacity(2 * k);
    for (rec, exp) in records.iter().zip(expected) {
        if *rec != (exp.0, exp.1, exp.2, exp.3, exp.4) {
            return Err(r.malformed(format!("layer record {rec:?} does not match the architecture")));
        }
        acts.push(exp.5);
    }
    let mut layers = Vec::with_capacity(2 * k);
    for (&(kind, c_in, c_out, has_bias, has_bn), act) in records.iter().zip(acts) {
        let weights = r.tensor(&[5, 5, c_in, c_out])?;
        let bias = if has_bias { Some(r.tensor(&[c_out])?) } else { None };
        let bn = if has_bn {
            let mut s = BatchNormState::new(c_out);
            s.gamma = r.tensor(&[c_out])?;
            s.beta = r.tensor(&[c_out])?;
            s.running_mean = r.tensor(&[c_out])?;
            s.running_var = r.tensor(&[c_out])?;
            Some(s)
        } else {
            None
        };
        layers.push(crate::model::Layer { kind, conv: ConvParams::new(weights, bias)?, bn, act });
    }
    r.finish()?;
    let d_layers = layers.split_off(k);
    Ok(Model {
        generator: Generator { spec: spec.clone(), net: Network { layers } },
        discriminator: Discriminator { spec, net: Network { layers: d_layers } },
    })
}

pub fn save_model(model: &Model, path: &Path) -> Result<()> {
    write_atomic(path, &encode_model(model)?)
}

pub fn load_model(path: &Path) -> Result<Model> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_model(&bytes, path)
}

/// Everything besides the model needed to continue training bit-identically.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub step: u64,
    pub z_rng: ChaCha8Rng,
    pub sampler_rng: ChaCha8Rng,
    pub adam_g: AdamState<f32>,
    pub adam_d: AdamState<f32>,
}

fn write_rng(w: &mut Writer, rng: &ChaCha8Rng) {
    w.0.extend_from_slice(&rng.get_seed());
    w.u64(rng.get_stream());
    w.u128(rng.get_word_pos());
}

fn read_rng(r: &mut Reader) -> Result<ChaCha8Rng> {
    use rand::SeedableRng;
    let seed: [u8; 32] = r.take(32)?.try_into().unwrap();
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(r.u64()?);
    rng.set_word_pos(r.u128()?);
    Ok(rng)
}

fn write_adam(w: &mut Writer, s: &AdamState<f32>) {
    w.f64(s.config.lr);
    w.f64(s.config.beta1);
    w.f64(s.config.beta2);
    w.f64(s.config.eps);
    w.u64(s.t);
    w.u32(s.m.len() as u32);
    for t in s.m.iter().chain(&s.v) {
        w.tensor(t);
    }
}

fn read_adam(r: &mut Reader, shapes: &[Vec<usize>]) -> Result<AdamState<f32>> {
    let config = AdamConfig { lr: r.f64()?, beta1: r.f64()?, beta2: r.f64()?, eps: r.f64()? };
    let t = r.u64()?;
    let n = r.u32()? as usize;
    if n != shapes.len() {
        return Err(r.malformed(format!("optimizer holds {n} slots, model has {}", shapes.len())));
    }
    let m = shapes.iter().map(|s| r.tensor(s)).collect::<Result<Vec<_>>>()?;
    let v = shapes.iter().map(|s| r.tensor(s)).collect::<Result<Vec<_>>>()?;
    Ok(AdamState { config, t, m, v })
}

pub fn encode_state(state: &TrainState) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(STATE_MAGIC);
    w.u16(STATE_VERSION);
    w.u64(state.step);
    write_rng(&mut w, &state.z_rng);
    write_rng(&mut w, &state.sampler_rng);
    write_adam(&mut w, &state.adam_g);
    write_adam(&mut w, &state.adam_d);
    w.0
}

/// Decodes a training state whose optimizer slots match `model`.
pub fn decode_state(bytes: &[u8], path: &Path, model: &Model) -> Result<TrainState> {
    let shapes = |net: &Network<f32>| net.params().iter().map(|p| p.shape().to_vec()).collect::<Vec<_>>();
    let mut r = Reader { buf: bytes, pos: 0, path };
    r.header(STATE_MAGIC, STATE_VERSION)?;
    let step = r.u64()?;
    let z_rng = read_rng(&mut r)?;
    let sampler_rng = read_rng(&mut r)?;
    let adam_g = read_adam(&mut r, &shapes(&model.generator.net))?;
    let adam_d = read_adam(&mut r, &shapes(&model.discriminator.net))?;
    r.finish()?;
    Ok(TrainState { step, z_rng, sampler_rng, adam_g, adam_d })
}

pub fn save_state(state: &TrainState, path: &Path) -> Result<()> {
    write_atomic(path, &encode_state(state))
}

pub fn load_state(path: &Path, model: &Model) -> Result<TrainState> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_state(&bytes, path, model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build;

    fn model(seed: u64) -> Model {
        let spec = NetworkSpec::from_hidden(4, &[6, 5]).unwrap();
        let (mut generator, discriminator) = build::<f32>(&spec, seed).unwrap();
        // non-trivial running statistics
        let bn = generator.net.layers[0].bn.as_mut().unwrap();
        bn.running_mean.data_mut()[1] = 0.25;
        bn.running_var.data_mut()[2] = 3.5;
        Model { generator, discriminator }
    }

    #[test]
    fn encode_decode_roundtrip() {
        let m = model(1);
        let bytes = encode_model(&m).unwrap();
        let back = decode_model(&bytes, Path::new("mem")).unwrap();
        assert_eq!(back, m);
        assert_eq!(encode_model(&back).unwrap(), bytes);
    }

    #[test]
    fn header_errors_are_distinct() {
        let bytes = encode_model(&model(2)).unwrap();
        let p = Path::new("mem");
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_model(&bad, p), Err(Error::BadMagic { .. })));
        let mut ver = bytes.clone();
        ver[4] = 9;
        assert!(matches!(decode_model(&ver, p), Err(Error::Version { found: 9, .. })));
        assert!(matches!(decode_model(&bytes[..bytes.len() - 3], p), Err(Error::Truncated { .. })));
        assert!(matches!(decode_model(&bytes[..2], p), Err(Error::Truncated { .. })));
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(decode_model(&extra, p), Err(Error::Malformed { .. })));
    }

    #[test]
    fn state_roundtrip() {
        use rand::{RngCore, SeedableRng};
        let m = model(3);
        let mut z_rng = ChaCha8Rng::seed_from_u64(5);
        z_rng.next_u32();
        let mut adam_g = AdamState::new(AdamConfig::default(), m.generator.net.params());
        adam_g.t = 7;
        adam_g.m[0].data_mut()[3] = 0.5;
        let state = TrainState {
            step: 7,
            z_rng,
            sampler_rng: ChaCha8Rng::seed_from_u64(6),
            adam_g,
            adam_d: AdamState::new(AdamConfig::default(), m.discriminator.net.params()),
        };
        let back = decode_state(&encode_state(&state), Path::new("mem"), &m).unwrap();
        assert_eq!(back, state);
    }
}
