//! Versioned little-endian weights file.
//!
//! ```text
//! magic        4 bytes  "NTNW"
//! version      u32      FORMAT_VERSION
//! seed         u64
//! n_sizes      u32
//! sizes        n_sizes x u32
//! group        u32      softmax row width (users)
//! ref_snr      f64
//! ref_lambda   f64
//! params       f64 x param_count, layer by layer: weights row-major, then biases
//! ```

use std::fs;
use std::path::Path;

use super::{Allocator, FeatureConfig, Mlp};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"NTNW";

pub fn to_bytes(a: &Allocator) -> Vec<u8> {
    let net = &a.net;
    let mut out = Vec::with_capacity(64 + 8 * net.param_count());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&net.seed().to_le_bytes());
    out.extend_from_slice(&(net.sizes().len() as u32).to_le_bytes());
    for s in net.sizes() {
        out.extend_from_slice(&(*s as u32).to_le_bytes());
    }
    out.extend_from_slice(&(net.group() as u32).to_le_bytes());
    out.extend_from_slice(&a.features.ref_snr.to_le_bytes());
    out.extend_from_slice(&a.features.ref_lambda.to_le_bytes());
    for p in net.params() {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() < n {
            return Err(Error::Weights("truncated file".to_string()));
        }
        let (head, rest) = self.buf.split_at(n);
        self.buf = rest;
        Ok(head)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<Allocator> {
    let mut r = Reader { buf: bytes };
    if r.take(4)? != MAGIC {
        return Err(Error::Weights("bad magic".to_string()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::Weights(format!(
            "unsupported format_version {version}, expected {FORMAT_VERSION}"
        )));
    }
    let seed = r.u64()?;
    let n = r.u32()? as usize;
    if n > 64 {
        return Err(Error::Weights(format!("implausible layer count {n}")));
    }
    let sizes = (0..n)
        .map(|_| r.u32().map(|s| s as usize))
        .collect::<Result<Vec<_>>>()?;
    let group = r.u32()? as usize;
    let features = FeatureConfig {
        ref_snr: r.f64()?,
        ref_lambda: r.f64()?,
    };
    let expected: usize = sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
    if r.buf.len() != 8 * expected {
        return Err(Error::Weights(format!(
            "expected {expected} parameters, found {} bytes",
            r.buf.len()
        )));
    }
    let params = (0..expected).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    let net = Mlp::from_parts(sizes, group, seed, &params)?;
    Ok(Allocator { net, features })
}

pub fn save(a: &Allocator, path: &Path) -> Result<()> {
    fs::write(path, to_bytes(a)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Allocator> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}
