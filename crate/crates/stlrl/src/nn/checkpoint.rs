//! Versioned binary checkpoints: parameter tensors, optimizer state, and
//! RNG state, bit-exact across save/load.
//!
//! Layout (all little-endian): an 8-byte magic, a u32 format version, then
//! counted sections of named entries — metadata string pairs, networks
//! (output activation, layer dims, weight and bias tensors), per-network
//! Adam moments, named scalars, scalar Adam states, and RNG states
//! (seed, stream, word position).

use super::{AdamState, Linear, Mlp, OutputActivation, ScalarAdam};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

const MAGIC: &[u8; 8] = b"STLRLCKP";
const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("checkpoint io: {0}")]
    Io(#[from] io::Error),
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
}

/// Restorable ChaCha state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &ChaCha12Rng) -> Self {
        Self {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> ChaCha12Rng {
        let mut rng = ChaCha12Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

/// Everything a training run persists at a checkpoint interval.
#[derive(Debug, Clone, Default)]
pub struct Checkpoint {
    pub meta: Vec<(String, String)>,
    pub nets: Vec<(String, Mlp)>,
    pub opts: Vec<(String, AdamState)>,
    pub scalars: Vec<(String, f64)>,
    pub scalar_opts: Vec<(String, ScalarAdam)>,
    pub rngs: Vec<(String, RngState)>,
}

impl Checkpoint {
    pub fn meta_value(&self, key: &str) -> Option<&str> {
        self.meta
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn net(&self, name: &str) -> Option<&Mlp> {
        self.nets.iter().find(|(k, _)| k == name).map(|(_, v)| v)
    }

    pub fn scalar(&self, name: &str) -> Option<f64> {
        self.scalars.iter().find(|(k, _)| k == name).map(|(_, v)| *v)
    }

    pub fn save(&self, path: &Path) -> io::Result<()> {
        let mut buf: Vec<u8> = Vec::new();
        buf.extend_from_slice(MAGIC);
        put_u32(&mut buf, VERSION);

        put_u32(&mut buf, self.meta.len() as u32);
        for (k, v) in &self.meta {
            put_str(&mut buf, k);
            put_str(&mut buf, v);
        }

        put_u32(&mut buf, self.nets.len() as u32);
        for (name, net) in &self.nets {
            put_str(&mut buf, name);
            buf.push(match net.out_act {
                OutputActivation::Identity => 0,
                OutputActivation::Tanh => 1,
            });
            put_u32(&mut buf, net.layers.len() as u32);
            for l in &net.layers {
                put_u32(&mut buf, l.in_dim as u32);
                put_u32(&mut buf, l.out_dim as u32);
                put_f64s(&mut buf, &l.w);
                put_f64s(&mut buf, &l.b);
            }
        }

        put_u32(&mut buf, self.opts.len() as u32);
        for (name, opt) in &self.opts {
            put_str(&mut buf, name);
            buf.extend_from_slice(&opt.lr.to_le_bytes());
            buf.extend_from_slice(&opt.t.to_le_bytes());
            put_u32(&mut buf, opt.m.len() as u32);
            for i in 0..opt.m.len() {
                put_f64s(&mut buf, &opt.m[i].0);
                put_f64s(&mut buf, &opt.m[i].1);
                put_f64s(&mut buf, &opt.v[i].0);
                put_f64s(&mut buf, &opt.v[i].1);
            }
        }

        put_u32(&mut buf, self.scalars.len() as u32);
        for (name, v) in &self.scalars {
            put_str(&mut buf, name);
            buf.extend_from_slice(&v.to_le_bytes());
        }

        put_u32(&mut buf, self.scalar_opts.len() as u32);
        for (name, o) in &self.scalar_opts {
            put_str(&mut buf, name);
            buf.extend_from_slice(&o.lr.to_le_bytes());
            buf.extend_from_slice(&o.t.to_le_bytes());
            buf.extend_from_slice(&o.m.to_le_bytes());
            buf.extend_from_slice(&o.v.to_le_bytes());
        }

        put_u32(&mut buf, self.rngs.len() as u32);
        for (name, r) in &self.rngs {
            put_str(&mut buf, name);
            buf.extend_from_slice(&r.seed);
            buf.extend_from_slice(&r.stream.to_le_bytes());
            buf.extend_from_slice(&(r.word_pos as u64).to_le_bytes());
            buf.extend_from_slice(&((r.word_pos >> 64) as u64).to_le_bytes());
        }

        let mut file = fs::File::create(path)?;
        file.write_all(&buf)?;
        file.sync_all()
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let data = fs::read(path)?;
        let mut r = Reader { data: &data, at: 0 };
        if r.take(8)? != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(CheckpointError::Version(version));
        }

        let mut ck = Checkpoint::default();
        for _ in 0..r.u32()? {
            let k = r.string()?;
            let v = r.string()?;
            ck.meta.push((k, v));
        }

        for _ in 0..r.u32()? {
            let name = r.string()?;
            let out_act = match r.take(1)?[0] {
                0 => OutputActivation::Identity,
                1 => OutputActivation::Tanh,
                other => {
                    return Err(CheckpointError::Malformed(format!(
                        "unknown activation tag {other}"
                    )))
                }
            };
            let n_layers = r.u32()? as usize;
            let mut layers = Vec::with_capacity(n_layers);
            for _ in 0..n_layers {
                let in_dim = r.u32()? as usize;
                let out_dim = r.u32()? as usize;
                let w = r.f64s()?;
                let b = r.f64s()?;
                if w.len() != in_dim * out_dim || b.len() != out_dim {
                    return Err(CheckpointError::Malformed("layer tensor shape".into()));
                }
                layers.push(Linear {
                    in_dim,
                    out_dim,
                    w,
                    b,
                });
            }
            ck.nets.push((name, Mlp { layers, out_act }));
        }

        for _ in 0..r.u32()? {
            let name = r.string()?;
            let lr = r.f64()?;
            let t = r.u64()?;
            let n_layers = r.u32()? as usize;
            let mut m = Vec::with_capacity(n_layers);
            let mut v = Vec::with_capacity(n_layers);
            for _ in 0..n_layers {
                let mw = r.f64s()?;
                let mb = r.f64s()?;
                let vw = r.f64s()?;
                let vb = r.f64s()?;
                m.push((mw, mb));
                v.push((vw, vb));
            }
            ck.opts.push((name, AdamState { lr, t, m, v }));
        }

        for _ in 0..r.u32()? {
            let name = r.string()?;
            let v = r.f64()?;
            ck.scalars.push((name, v));
        }

        for _ in 0..r.u32()? {
            let name = r.string()?;
            let lr = r.f64()?;
            let t = r.u64()?;
            let m = r.f64()?;
            let v = r.f64()?;
            ck.scalar_opts.push((name, ScalarAdam { lr, t, m, v }));
        }

        for _ in 0..r.u32()? {
            let name = r.string()?;
            let seed_bytes = r.take(32)?;
            let mut seed = [0u8; 32];
            seed.copy_from_slice(seed_bytes);
            let stream = r.u64()?;
            let lo = r.u64()? as u128;
            let hi = r.u64()? as u128;
            ck.rngs.push((
                name,
                RngState {
                    seed,
                    stream,
                    word_pos: lo | (hi << 64),
                },
            ));
        }

        if r.at != data.len() {
            return Err(CheckpointError::Malformed("trailing bytes".into()));
        }
        Ok(ck)
    }
}

fn put_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_str(buf: &mut Vec<u8>, s: &str) {
    put_u32(buf, s.len() as u32);
    buf.extend_from_slice(s.as_bytes());
}

fn put_f64s(buf: &mut Vec<u8>, vals: &[f64]) {
    buf.extend_from_slice(&(vals.len() as u64).to_le_bytes());
    for v in vals {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    data: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.at + n > self.data.len() {
            return Err(CheckpointError::Malformed("truncated file".into()));
        }
        let out = &self.data[self.at..self.at + n];
        self.at += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, CheckpointError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self) -> Result<Vec<f64>, CheckpointError> {
        let n = self.u64()? as usize;
        let bytes = self.take(n * 8)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn string(&mut self) -> Result<String, CheckpointError> {
        let n = self.u32()? as usize;
        let bytes = self.take(n)?;
        String::from_utf8(bytes.to_vec())
            .map_err(|_| CheckpointError::Malformed("non-utf8 string".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.bin");

        let mut rng = ChaCha12Rng::seed_from_u64(21);
        let mut net = Mlp::new(&[4, 16, 16, 2], OutputActivation::Tanh, &mut rng);
        net.layers[0].w[0] = -0.0; // sign of zero must survive
        let mut opt = AdamState::new(&net, 3e-4);
        // push some state into the moments
        let tr = net.forward_batch(&[0.1, 0.2, 0.3, 0.4], 1);
        let g = net.backward(&tr, &[1.0, -1.0]);
        opt.step(&mut net.clone(), &g);

        let mut sampler = ChaCha12Rng::seed_from_u64(99);
        sampler.set_stream(5);
        let _: f64 = sampler.gen();

        let ck = Checkpoint {
            meta: vec![("algorithm".into(), "sac".into()), ("step".into(), "42".into())],
            nets: vec![("actor".into(), net.clone())],
            opts: vec![("actor".into(), opt.clone())],
            scalars: vec![("kappa".into(), 1.25), ("alpha".into(), 0.5)],
            scalar_opts: vec![("kappa".into(), ScalarAdam::new(1e-5))],
            rngs: vec![("policy".into(), RngState::capture(&sampler))],
        };
        ck.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();

        assert_eq!(back.meta, ck.meta);
        let net_back = back.net("actor").unwrap();
        for (la, lb) in net.layers.iter().zip(&net_back.layers) {
            for (a, b) in la.w.iter().zip(&lb.w) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
            for (a, b) in la.b.iter().zip(&lb.b) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
        assert_eq!(back.opts[0].1, opt);
        assert_eq!(back.scalar("kappa"), Some(1.25));

        // the restored rng continues the exact stream
        let mut restored = back.rngs[0].1.restore();
        let a: u64 = sampler.gen();
        let b: u64 = restored.gen();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_foreign_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.bin");
        fs::write(&path, b"definitely not a checkpoint").unwrap();
        assert!(matches!(
            Checkpoint::load(&path),
            Err(CheckpointError::BadMagic)
        ));
    }
}
