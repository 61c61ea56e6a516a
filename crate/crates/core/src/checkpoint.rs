//! Value-head checkpoints.
//!
//! Flat little-endian binary layout, bit-exact across round trips:
//!
//! ```text
//! magic   8  bytes  "DLPQHEAD"
//! version u32       1
//! layers  u32       L
//! per layer: in_dim u32, out_dim u32
//! online weights:  per layer, row-major f64 w then f64 b
//! target weights:  same shapes
//! steps   u64       gradient-step counter
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::qhead::{LayerParams, QHeadParams};

const MAGIC: &[u8; 8] = b"DLPQHEAD";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint file or unsupported version")]
    FormatVersionMismatch,
    #[error("inconsistent checkpoint shapes: {0}")]
    BadShape(String),
}

pub fn save_checkpoint(params: &QHeadParams, path: &Path) -> Result<(), CheckpointError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(params.online.len() as u32).to_le_bytes())?;
    for layer in &params.online {
        w.write_all(&(layer.in_dim as u32).to_le_bytes())?;
        w.write_all(&(layer.out_dim as u32).to_le_bytes())?;
    }
    for side in [&params.online, &params.target] {
        for layer in side {
            for v in layer.w.iter().chain(layer.b.iter()) {
                w.write_all(&v.to_le_bytes())?;
            }
        }
    }
    w.write_all(&params.train_steps.to_le_bytes())?;
    w.flush()?;
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32, CheckpointError> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64(r: &mut impl Read) -> Result<u64, CheckpointError> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_f64s(r: &mut impl Read, n: usize) -> Result<Vec<f64>, CheckpointError> {
    let mut out = Vec::with_capacity(n);
    let mut buf = [0u8; 8];
    for _ in 0..n {
        r.read_exact(&mut buf)?;
        out.push(f64::from_le_bytes(buf));
    }
    Ok(out)
}

pub fn load_checkpoint(path: &Path) -> Result<QHeadParams, CheckpointError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| CheckpointError::FormatVersionMismatch)?;
    if &magic != MAGIC {
        return Err(CheckpointError::FormatVersionMismatch);
    }
    if read_u32(&mut r)? != VERSION {
        return Err(CheckpointError::FormatVersionMismatch);
    }
    let n_layers = read_u32(&mut r)? as usize;
    if n_layers == 0 || n_layers > 16 {
        return Err(CheckpointError::BadShape(format!("{n_layers} layers")));
    }
    let mut shapes = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let in_dim = read_u32(&mut r)? as usize;
        let out_dim = read_u32(&mut r)? as usize;
        if in_dim == 0 || out_dim == 0 {
            return Err(CheckpointError::BadShape(format!("{in_dim}x{out_dim}")));
        }
        shapes.push((in_dim, out_dim));
    }
    let read_side = |r: &mut BufReader<File>| -> Result<Vec<LayerParams>, CheckpointError> {
        shapes
            .iter()
            .map(|&(in_dim, out_dim)| {
                Ok(LayerParams {
                    in_dim,
                    out_dim,
                    w: read_f64s(r, in_dim * out_dim)?,
                    b: read_f64s(r, out_dim)?,
                })
            })
            .collect()
    };
    let online = read_side(&mut r)?;
    let target = read_side(&mut r)?;
    let train_steps = read_u64(&mut r)?;
    Ok(QHeadParams {
        online,
        target,
        train_steps,
    })
}
