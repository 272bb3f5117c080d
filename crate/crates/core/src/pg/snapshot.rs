//! Binary policy snapshot:
//!
//! ```text
//! magic "FMGPOLCY" | version u32 | descriptor length u32 | descriptor JSON
//! | param count u64 | params f64... | adam t u64 | lr, beta1, beta2, eps f64
//! | adam m f64... | adam v f64...
//! ```
//!
//! All integers and floats are little-endian; floats round-trip bit-exactly.

use std::io::{Read, Write};

use thiserror::Error;

use super::nn::Adam;
use super::policy::{ActorCritic, ArchDescriptor};
use super::train::Agent;

const MAGIC: &[u8; 8] = b"FMGPOLCY";
pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a policy snapshot (bad magic)")]
    BadMagic,
    #[error("unsupported snapshot version {0}")]
    Version(u32),
    #[error("bad architecture descriptor: {0}")]
    Descriptor(#[from] serde_json::Error),
    #[error("parameter count {found} does not match architecture ({expected})")]
    ParamCount { expected: usize, found: usize },
}

fn put_f64s<W: Write>(out: &mut W, v: &[f64]) -> std::io::Result<()> {
    for x in v {
        out.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

fn get_u32<R: Read>(r: &mut R) -> std::io::Result<u32> {
    let mut b = [0; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn get_u64<R: Read>(r: &mut R) -> std::io::Result<u64> {
    let mut b = [0; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn get_f64s<R: Read>(r: &mut R, n: usize) -> std::io::Result<Vec<f64>> {
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

pub fn write_snapshot<W: Write>(agent: &Agent, mut out: W) -> Result<(), SnapshotError> {
    let desc = serde_json::to_vec(agent.net.descriptor())?;
    out.write_all(MAGIC)?;
    out.write_all(&SNAPSHOT_VERSION.to_le_bytes())?;
    out.write_all(&(desc.len() as u32).to_le_bytes())?;
    out.write_all(&desc)?;
    out.write_all(&(agent.net.params.len() as u64).to_le_bytes())?;
    put_f64s(&mut out, &agent.net.params)?;
    let adam = &agent.optimizer;
    out.write_all(&adam.t.to_le_bytes())?;
    put_f64s(&mut out, &[adam.lr, adam.beta1, adam.beta2, adam.eps])?;
    put_f64s(&mut out, &adam.m)?;
    put_f64s(&mut out, &adam.v)?;
    Ok(())
}

pub fn read_snapshot<R: Read>(mut input: R) -> Result<Agent, SnapshotError> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(SnapshotError::BadMagic);
    }
    let version = get_u32(&mut input)?;
    if version != SNAPSHOT_VERSION {
        return Err(SnapshotError::Version(version));
    }
    let desc_len = get_u32(&mut input)? as usize;
    let mut desc = vec![0u8; desc_len];
    input.read_exact(&mut desc)?;
    let desc: ArchDescriptor = serde_json::from_slice(&desc)?;
    let mut net = ActorCritic::zeroed(desc);
    let found = get_u64(&mut input)? as usize;
    if found != net.param_count() {
        return Err(SnapshotError::ParamCount {
            expected: net.param_count(),
            found,
        });
    }
    net.params = get_f64s(&mut input, found)?;
    let t = get_u64(&mut input)?;
    let hp = get_f64s(&mut input, 4)?;
    let m = get_f64s(&mut input, found)?;
    let v = get_f64s(&mut input, found)?;
    let optimizer = Adam {
        lr: hp[0],
        beta1: hp[1],
        beta2: hp[2],
        eps: hp[3],
        t,
        m,
        v,
    };
    Ok(Agent { net, optimizer })
}

pub fn save_snapshot(agent: &Agent, path: &std::path::Path) -> Result<(), SnapshotError> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    write_snapshot(agent, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_snapshot(path: &std::path::Path) -> Result<Agent, SnapshotError> {
    read_snapshot(std::io::BufReader::new(std::fs::File::open(path)?))
}
