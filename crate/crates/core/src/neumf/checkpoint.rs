//! Versioned checkpoint files.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic      b"FRCK"
//! version    u32 = 1
//! kind       u8   (0 gmf, 1 mlp, 2 neumf)
//! input_dim  u64
//! gmf_dim    u64
//! mlp_embed  u64
//! mlp_layers 3 x u64
//! seed       u64
//! n_tensors  u32
//! per tensor: name_len u32, name (utf-8), ndim u32, dims ndim x u64, data f64 row-major
//! ```

use std::io::{Read, Write};

use super::model::{AnyModel, GmfModel, LatentConfig, MlpModel, ModelKind, NeumfModel, NeuralModel};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"FRCK";
const VERSION: u32 = 1;

fn put_u32<W: Write>(w: &mut W, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_u64<W: Write>(w: &mut W, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn get_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn get_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub fn save<M: NeuralModel, W: Write>(model: &M, mut w: W) -> Result<()> {
    w.write_all(MAGIC)?;
    put_u32(&mut w, VERSION)?;
    w.write_all(&[model.kind().tag()])?;
    let cfg = model.latent();
    put_u64(&mut w, model.input_dim() as u64)?;
    put_u64(&mut w, cfg.gmf_dim as u64)?;
    put_u64(&mut w, cfg.mlp_embed_dim as u64)?;
    for l in cfg.mlp_layers {
        put_u64(&mut w, l as u64)?;
    }
    put_u64(&mut w, cfg.seed)?;
    let tensors = model.tensors();
    put_u32(&mut w, tensors.len() as u32)?;
    for t in tensors {
        put_u32(&mut w, t.name.len() as u32)?;
        w.write_all(t.name.as_bytes())?;
        put_u32(&mut w, t.shape.len() as u32)?;
        for d in &t.shape {
            put_u64(&mut w, *d as u64)?;
        }
        for v in t.data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn fill<M: NeuralModel, R: Read>(mut model: M, r: &mut R) -> Result<M> {
    let n = get_u32(r)? as usize;
    let expected: Vec<(String, Vec<usize>)> = model.tensors().into_iter().map(|t| (t.name, t.shape)).collect();
    if n != expected.len() {
        return Err(Error::Checkpoint(format!("{n} tensors, expected {}", expected.len())));
    }
    let mut targets = model.tensors_mut();
    for (i, (name, shape)) in expected.iter().enumerate() {
        let len = get_u32(r)? as usize;
        if len > 256 {
            return Err(Error::Checkpoint("tensor name too long".into()));
        }
        let mut buf = vec![0u8; len];
        r.read_exact(&mut buf)?;
        let got = String::from_utf8(buf).map_err(|_| Error::Checkpoint("tensor name is not utf-8".into()))?;
        let ndim = get_u32(r)? as usize;
        if ndim > 8 {
            return Err(Error::Checkpoint(format!("tensor {got} has {ndim} dimensions")));
        }
        let dims = (0..ndim)
            .map(|_| get_u64(r).map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        if &got != name || &dims != shape {
            return Err(Error::Checkpoint(format!(
                "tensor {i} is {got} {dims:?}, expected {name} {shape:?}"
            )));
        }
        for v in targets[i].iter_mut() {
            *v = f64::from_le_bytes(get_u64(r)?.to_le_bytes());
        }
    }
    drop(targets);
    Ok(model)
}

pub fn load<R: Read>(mut r: R) -> Result<AnyModel> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file".into()));
    }
    let version = get_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let mut tag = [0u8; 1];
    r.read_exact(&mut tag)?;
    let kind = ModelKind::from_tag(tag[0])?;
    let input_dim = get_u64(&mut r)? as usize;
    let gmf_dim = get_u64(&mut r)? as usize;
    let mlp_embed_dim = get_u64(&mut r)? as usize;
    let mut mlp_layers = [0usize; 3];
    for l in &mut mlp_layers {
        *l = get_u64(&mut r)? as usize;
    }
    let seed = get_u64(&mut r)?;
    let cfg = LatentConfig {
        gmf_dim,
        mlp_embed_dim,
        mlp_layers,
        seed,
    };
    let too_big = [input_dim, gmf_dim, mlp_embed_dim]
        .iter()
        .chain(&mlp_layers)
        .any(|&d| d > 1 << 16);
    if too_big {
        return Err(Error::Checkpoint("implausible dimensions".into()));
    }
    Ok(match kind {
        ModelKind::Gmf => AnyModel::Gmf(fill(GmfModel::new(input_dim, &cfg)?, &mut r)?),
        ModelKind::Mlp => AnyModel::Mlp(fill(MlpModel::new(input_dim, &cfg)?, &mut r)?),
        ModelKind::Neumf => AnyModel::Neumf(fill(NeumfModel::new(input_dim, &cfg)?, &mut r)?),
    })
}

pub fn save_any<W: Write>(model: &AnyModel, w: W) -> Result<()> {
    match model {
        AnyModel::Gmf(m) => save(m, w),
        AnyModel::Mlp(m) => save(m, w),
        AnyModel::Neumf(m) => save(m, w),
    }
}
