//! `NGROW1` network container.
//!
//! Little-endian throughout:
//!
//! ```text
//! "NGROW1"  u32 version (=1)  u8 head (0 identity, 1 softmax logits)  u32 n_layers
//! per layer: u32 n_out  u32 n_in  f64[n_out*n_in] weights (row-major)
//!            f64[n_out] biases  u32[n_out] birth stages
//! ```

use std::fs;
use std::path::Path;

use neurogrow_core::nn::{DenseLayer, Network, NeuronTag, OutputHead};
use neurogrow_core::Matrix;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 6] = b"NGROW1";
pub const VERSION: u32 = 1;

pub fn encode_network(net: &Network) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(match net.head() {
        OutputHead::Identity => 0,
        OutputHead::SoftmaxLogits => 1,
    });
    out.extend_from_slice(&(net.layers().len() as u32).to_le_bytes());
    for layer in net.layers() {
        out.extend_from_slice(&(layer.n_out() as u32).to_le_bytes());
        out.extend_from_slice(&(layer.n_in() as u32).to_le_bytes());
        for v in layer.weights.as_slice().iter().chain(&layer.biases) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for t in &layer.tags {
            out.extend_from_slice(&t.birth_stage.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::format(self.path, self.bytes.len() as u64, format!("truncated, needed {n} bytes at {}", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw =
            self.take(n.checked_mul(8).ok_or_else(|| Error::format(self.path, self.pos as u64, "size overflow"))?)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }
}

pub fn decode_network(bytes: &[u8], path: &Path) -> Result<Network> {
    let mut r = Reader { bytes, pos: 0, path };
    if r.take(MAGIC.len()).ok() != Some(&MAGIC[..]) {
        return Err(Error::format(path, 0, "not an NGROW1 file"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::format(path, 6, format!("unsupported version {version}")));
    }
    let head = match r.take(1)?[0] {
        0 => OutputHead::Identity,
        1 => OutputHead::SoftmaxLogits,
        h => return Err(Error::format(path, 10, format!("unknown output head {h}"))),
    };
    let n_layers = r.u32()? as usize;
    let mut layers = Vec::with_capacity(n_layers.min(1024));
    for _ in 0..n_layers {
        let at = r.pos as u64;
        let (n_out, n_in) = (r.u32()? as usize, r.u32()? as usize);
        let weights = r.f64s(n_out.saturating_mul(n_in))?;
        let biases = r.f64s(n_out)?;
        let tags = (0..n_out).map(|_| r.u32().map(|s| NeuronTag { birth_stage: s })).collect::<Result<Vec<_>>>()?;
        let w = Matrix::from_vec(n_out, n_in, weights).map_err(|e| Error::format(path, at, e.to_string()))?;
        layers.push(DenseLayer::new(w, biases, tags).map_err(|e| Error::format(path, at, e.to_string()))?);
    }
    if r.pos != bytes.len() {
        return Err(Error::format(path, r.pos as u64, format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Network::new(layers, head).map_err(|e| Error::format(path, 0, e.to_string()))
}

pub fn save_network(net: &Network, path: &Path) -> Result<()> {
    fs::write(path, encode_network(net)).map_err(|e| Error::io(path, e))
}

pub fn load_network(path: &Path) -> Result<Network> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_network(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use neurogrow_core::nn::predict;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn net() -> Network {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut n = Network::mlp(4, &[5, 3], 2, OutputHead::SoftmaxLogits, &mut rng).unwrap();
        n.layers_mut()[0].tags[2].birth_stage = 4;
        n
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("n.ngrow");
        let a = net();
        save_network(&a, &p).unwrap();
        let b = load_network(&p).unwrap();
        assert_eq!(a, b);
        let x = Matrix::from_fn(3, 4, |r, c| (r * 4 + c) as f64 / 12.0);
        assert_eq!(predict(&a, &x).unwrap(), predict(&b, &x).unwrap());
    }

    #[test]
    fn corrupt_files_are_format_errors() {
        let p = Path::new("n.ngrow");
        let mut bytes = encode_network(&net());
        assert!(matches!(decode_network(&bytes[..bytes.len() - 3], p), Err(Error::Format { .. })));
        bytes[6] = 9;
        assert!(matches!(decode_network(&bytes, p), Err(Error::Format { offset: 6, .. })));
        bytes[0] = b'X';
        assert!(matches!(decode_network(&bytes, p), Err(Error::Format { offset: 0, .. })));
    }
}
