//! Binary checkpoint format, bit-exact across platforms.
//!
//! Layout: magic `PNE1`, then six little-endian `u32` values
//! (`num_users`, `num_items`, `vocab_size`, `d`, `hidden`, `use_memnet` as
//! 0/1), then the tensors P, Q, A, W, b, h in that order, row-major
//! little-endian `f32`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{PneConfig, PneParams};
use crate::error::PneError;
use crate::numkernel::DenseMatrix;

const MAGIC: &[u8; 4] = b"PNE1";

pub fn write_checkpoint<W: Write>(
    w: &mut W,
    config: &PneConfig,
    params: &PneParams<f32>,
) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    for v in [
        config.num_users as u32,
        config.num_items as u32,
        config.vocab_size as u32,
        config.d as u32,
        config.hidden as u32,
        config.use_memnet as u32,
    ] {
        w.write_all(&v.to_le_bytes())?;
    }
    for tensor in [
        params.p.data(),
        params.q.data(),
        params.a.data(),
        params.w.data(),
        &params.b[..],
        &params.h[..],
    ] {
        for &x in tensor {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn save_checkpoint(
    path: &Path,
    config: &PneConfig,
    params: &PneParams<f32>,
) -> Result<(), PneError> {
    let file = File::create(path).map_err(|e| PneError::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_checkpoint(&mut w, config, params).map_err(|e| PneError::io(path, e))?;
    w.flush().map_err(|e| PneError::io(path, e))
}

pub fn read_checkpoint<R: Read>(
    r: &mut R,
    path: &Path,
) -> Result<(PneConfig, PneParams<f32>), PneError> {
    let bad = |message: &str| PneError::BadCheckpoint {
        path: path.to_path_buf(),
        message: message.to_string(),
    };

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| bad("file too short"))?;
    if &magic != MAGIC {
        return Err(bad("bad magic; not a PNE1 checkpoint"));
    }

    let read_u32 = |r: &mut R| -> Result<u32, PneError> {
        let mut buf = [0u8; 4];
        r.read_exact(&mut buf).map_err(|_| bad("truncated header"))?;
        Ok(u32::from_le_bytes(buf))
    };
    let num_users = read_u32(r)? as usize;
    let num_items = read_u32(r)? as usize;
    let vocab_size = read_u32(r)? as usize;
    let d = read_u32(r)? as usize;
    let hidden = read_u32(r)? as usize;
    let use_memnet = match read_u32(r)? {
        0 => false,
        1 => true,
        v => return Err(bad(&format!("use_memnet flag must be 0 or 1, found {}", v))),
    };
    if d == 0 || hidden == 0 {
        return Err(bad("zero embedding or hidden dimension"));
    }

    let config = PneConfig {
        num_users,
        num_items,
        vocab_size,
        d,
        hidden,
        use_memnet,
    };

    let read_floats = |r: &mut R, n: usize| -> Result<Vec<f32>, PneError> {
        let mut bytes = vec![0u8; n * 4];
        r.read_exact(&mut bytes).map_err(|_| bad("truncated tensor data"))?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    };

    let p = DenseMatrix::from_vec(num_users, d, read_floats(r, num_users * d)?);
    let q = DenseMatrix::from_vec(num_items, d, read_floats(r, num_items * d)?);
    let a = DenseMatrix::from_vec(vocab_size, d, read_floats(r, vocab_size * d)?);
    let w = DenseMatrix::from_vec(hidden, 2 * d, read_floats(r, hidden * 2 * d)?);
    let b = read_floats(r, hidden)?;
    let h = read_floats(r, config.output_dim())?;

    let mut rest = [0u8; 1];
    if r.read(&mut rest).map_err(|_| bad("read error"))? != 0 {
        return Err(bad("trailing bytes after tensor data"));
    }

    Ok((config, PneParams { p, q, a, w, b, h }))
}

pub fn load_checkpoint(path: &Path) -> Result<(PneConfig, PneParams<f32>), PneError> {
    let file = File::open(path).map_err(|e| PneError::io(path, e))?;
    let mut r = BufReader::new(file);
    read_checkpoint(&mut r, path)
}
