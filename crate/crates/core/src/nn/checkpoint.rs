//! Flat binary parameter checkpoints.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic  b"HRLMPPI\0"
//! u32    format version (1)
//! u64    seed
//! u32    policy layer count L, then L x u32 layer sizes
//! u32    ensemble size D
//! u32    value-head layer count L', then L' x u32 layer sizes
//! f64[]  normaliser centre, normaliser scale      (obs dim each)
//! f64[]  policy weights, policy log-std
//! f64[]  value head 1 .. value head D
//! ```

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::{Mlp, ObsNormalizer, PolicyNet, ValueEnsemble};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"HRLMPPI\0";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub seed: u64,
    pub policy: PolicyNet,
    pub critic: ValueEnsemble,
}

pub fn save_checkpoint(path: &Path, ck: &Checkpoint) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&ck.seed.to_le_bytes());
    write_sizes(&mut buf, ck.policy.mean.sizes());
    buf.extend_from_slice(&(ck.critic.size() as u32).to_le_bytes());
    let head_sizes = ck.critic.heads.first().map(|h| h.sizes().to_vec()).unwrap_or_default();
    write_sizes(&mut buf, &head_sizes);
    let floats = ck
        .policy
        .norm
        .center
        .iter()
        .chain(&ck.policy.norm.scale)
        .chain(ck.policy.mean.params())
        .chain(&ck.policy.log_std)
        .chain(ck.critic.heads.iter().flat_map(|h| h.params()));
    for f in floats {
        buf.extend_from_slice(&f.to_le_bytes());
    }
    let mut file = fs::File::create(path)?;
    file.write_all(&buf)?;
    Ok(())
}

fn write_sizes(buf: &mut Vec<u8>, sizes: &[usize]) {
    buf.extend_from_slice(&(sizes.len() as u32).to_le_bytes());
    for &s in sizes {
        buf.extend_from_slice(&(s as u32).to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Checkpoint("truncated file".into()));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))).collect()
    }
    fn sizes(&mut self) -> Result<Vec<usize>> {
        let n = self.u32()? as usize;
        if n < 2 || n > 64 {
            return Err(Error::Checkpoint(format!("implausible layer count {n}")));
        }
        (0..n).map(|_| Ok(self.u32()? as usize)).collect()
    }
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut r = Reader { bytes: &bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let seed = r.u64()?;
    let p_sizes = r.sizes()?;
    let d = r.u32()? as usize;
    let v_sizes = r.sizes()?;
    let obs = p_sizes[0];
    if v_sizes[0] != obs || *v_sizes.last().unwrap() != 1 {
        return Err(Error::Checkpoint("value head shape does not match policy".into()));
    }
    let center = r.f64s(obs)?;
    let scale = r.f64s(obs)?;
    let norm = ObsNormalizer { center, scale };
    let mean = Mlp::from_params(&p_sizes, r.f64s(param_count(&p_sizes))?)?;
    let log_std = r.f64s(*p_sizes.last().unwrap())?;
    let heads =
        (0..d).map(|_| Mlp::from_params(&v_sizes, r.f64s(param_count(&v_sizes))?)).collect::<Result<Vec<_>>>()?;
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint("trailing bytes".into()));
    }
    Ok(Checkpoint {
        seed,
        policy: PolicyNet { mean, log_std, norm: norm.clone() },
        critic: ValueEnsemble { heads, norm },
    })
}
