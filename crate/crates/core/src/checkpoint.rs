//! Binary model checkpoints.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! b"CIMTRAIN1"
//! u8   activation (0 relu, 1 tanh, 2 identity)
//! u64  number of layer dims, then each dim as u64
//! f64  weights of W_1 … W_N, row-major
//! u8   1 if a feedback matrix follows, else 0
//! u64  rows, u64 cols, f64 entries row-major   (only if present)
//! [32] SHA-256 of everything above
//! ```

use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::math::Mat;
use crate::network::{Activation, Mlp, NetworkError, Topology};
use crate::trainers::FeedbackBank;

pub const MAGIC: &[u8; 9] = b"CIMTRAIN1";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("not a checkpoint (bad magic header)")]
    BadMagic,
    #[error("checkpoint truncated")]
    Truncated,
    #[error("checkpoint checksum mismatch")]
    Checksum,
    #[error("checkpoint malformed: {0}")]
    Malformed(String),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

fn activation_code(a: Activation) -> u8 {
    match a {
        Activation::Relu => 0,
        Activation::Tanh => 1,
        Activation::Identity => 2,
    }
}

fn put_mat(out: &mut Vec<u8>, m: &Mat) {
    for v in m.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode(mlp: &Mlp, bank: Option<&FeedbackBank>) -> Vec<u8> {
    let topo = mlp.topology();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.push(activation_code(topo.activation));
    out.extend_from_slice(&(topo.layer_dims.len() as u64).to_le_bytes());
    for &d in &topo.layer_dims {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for w in mlp.weights() {
        put_mat(&mut out, w);
    }
    match bank {
        Some(b) => {
            out.push(1);
            out.extend_from_slice(&(b.master().rows() as u64).to_le_bytes());
            out.extend_from_slice(&(b.master().cols() as u64).to_le_bytes());
            put_mat(&mut out, b.master());
        }
        None => out.push(0),
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).ok_or(CheckpointError::Truncated)?;
        let s = self.buf.get(self.pos..end).ok_or(CheckpointError::Truncated)?;
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, CheckpointError> {
        Ok(self.take(1)?[0])
    }

    fn u64(&mut self) -> Result<usize, CheckpointError> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes"));
        usize::try_from(v).map_err(|_| CheckpointError::Malformed(format!("size {v} too large")))
    }

    fn mat(&mut self, rows: usize, cols: usize) -> Result<Mat, CheckpointError> {
        let n = rows.checked_mul(cols).ok_or_else(|| CheckpointError::Malformed("matrix too large".into()))?;
        let bytes = self.take(n.checked_mul(8).ok_or(CheckpointError::Truncated)?)?;
        let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        Mat::from_vec(rows, cols, data).map_err(|e| CheckpointError::Malformed(e.to_string()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<(Mlp, Option<FeedbackBank>), CheckpointError> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    if bytes.len() < MAGIC.len() + 32 {
        return Err(CheckpointError::Truncated);
    }
    let (body, digest) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != digest {
        return Err(CheckpointError::Checksum);
    }
    let mut r = Reader { buf: body, pos: MAGIC.len() };
    let activation = match r.u8()? {
        0 => Activation::Relu,
        1 => Activation::Tanh,
        2 => Activation::Identity,
        c => return Err(CheckpointError::Malformed(format!("unknown activation code {c}"))),
    };
    let n_dims = r.u64()?;
    if n_dims > body.len() {
        return Err(CheckpointError::Truncated);
    }
    let dims = (0..n_dims).map(|_| r.u64()).collect::<Result<Vec<_>, _>>()?;
    let topology = Topology::new(dims, activation)?;
    let weights = (1..=topology.depth())
        .map(|i| {
            let (rows, cols) = topology.weight_shape(i);
            r.mat(rows, cols)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mlp = Mlp::from_weights(topology, weights)?;
    let bank = match r.u8()? {
        0 => None,
        1 => {
            let (rows, cols) = (r.u64()?, r.u64()?);
            Some(FeedbackBank::from_master(r.mat(rows, cols)?))
        }
        f => return Err(CheckpointError::Malformed(format!("bad feedback flag {f}"))),
    };
    if r.pos != body.len() {
        return Err(CheckpointError::Malformed(format!("{} trailing bytes", body.len() - r.pos)));
    }
    Ok((mlp, bank))
}

pub fn save(path: &Path, mlp: &Mlp, bank: Option<&FeedbackBank>) -> Result<(), CheckpointError> {
    std::fs::write(path, encode(mlp, bank))
        .map_err(|source| CheckpointError::Io { path: path.display().to_string(), source })
}

pub fn load(path: &Path) -> Result<(Mlp, Option<FeedbackBank>), CheckpointError> {
    let bytes =
        std::fs::read(path).map_err(|source| CheckpointError::Io { path: path.display().to_string(), source })?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Rng;
    use crate::network::xavier_init;

    fn sample() -> (Mlp, FeedbackBank) {
        let t = Topology::uniform(7, 5, 3, 4, Activation::Tanh).unwrap();
        (xavier_init(&t, &mut Rng::new(3)), FeedbackBank::new(&t, 3))
    }

    #[test]
    fn roundtrip_is_bitwise() {
        let (mlp, bank) = sample();
        let bytes = encode(&mlp, Some(&bank));
        assert_eq!(&bytes[..9], b"CIMTRAIN1");
        let (m2, b2) = decode(&bytes).unwrap();
        assert_eq!(m2.weights(), mlp.weights());
        assert_eq!(m2.topology(), mlp.topology());
        assert_eq!(b2.unwrap().digest(), bank.digest());
        let (_, none) = decode(&encode(&mlp, None)).unwrap();
        assert!(none.is_none());
    }

    #[test]
    fn weights_are_little_endian_after_header() {
        let t = Topology::new(vec![1, 1], Activation::Relu).unwrap();
        let mlp = Mlp::from_weights(t, vec![Mat::from_rows(&[[1.5]])]).unwrap();
        let bytes = encode(&mlp, None);
        let off = 9 + 1 + 8 + 2 * 8;
        assert_eq!(&bytes[off..off + 8], &1.5f64.to_le_bytes());
    }

    #[test]
    fn corruption_is_detected() {
        let (mlp, bank) = sample();
        let bytes = encode(&mlp, Some(&bank));
        let mut flipped = bytes.clone();
        flipped[40] ^= 1;
        assert!(matches!(decode(&flipped), Err(CheckpointError::Checksum)));
        assert!(matches!(decode(b"NOTACKPT1xxxxxxxxxx"), Err(CheckpointError::BadMagic)));
        assert!(matches!(decode(&bytes[..20]), Err(CheckpointError::Truncated | CheckpointError::Checksum)));
    }
}
