//! `.t64`: magic, dtype, rank, dims, then little-endian f64 payload.

use std::io::{Read, Write};

use super::DataError;
use crate::nn::Tensor;

pub const T64_MAGIC: &[u8; 4] = b"T64\0";
const DTYPE_F64: u8 = 1;
const MAX_ELEMENTS: u64 = 1 << 32;

pub fn write_tensor<W: Write>(w: &mut W, t: &Tensor) -> Result<(), DataError> {
    w.write_all(T64_MAGIC)?;
    w.write_all(&[DTYPE_F64, t.shape().len() as u8])?;
    for &d in t.shape() {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(t.len() * 8);
    for v in t.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<(), DataError> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            DataError::Malformed(format!("truncated {what}"))
        } else {
            DataError::Io(e)
        }
    })
}

pub fn read_tensor<R: Read>(r: &mut R) -> Result<Tensor, DataError> {
    let mut head = [0u8; 6];
    read_exact(r, &mut head, "header")?;
    if &head[..4] != T64_MAGIC {
        return Err(DataError::Malformed("bad magic".into()));
    }
    if head[4] != DTYPE_F64 {
        return Err(DataError::Malformed(format!("unsupported dtype {}", head[4])));
    }
    let rank = head[5] as usize;
    if !(1..=3).contains(&rank) {
        return Err(DataError::Malformed(format!("rank {rank} not in 1..=3")));
    }
    let mut shape = Vec::with_capacity(rank);
    let mut total: u64 = 1;
    for _ in 0..rank {
        let mut b = [0u8; 8];
        read_exact(r, &mut b, "dims")?;
        let d = u64::from_le_bytes(b);
        total = total.saturating_mul(d);
        shape.push(d as usize);
    }
    if total == 0 || total > MAX_ELEMENTS {
        return Err(DataError::Malformed(format!("implausible shape {shape:?}")));
    }
    let mut raw = vec![0u8; total as usize * 8];
    read_exact(r, &mut raw, "payload")?;
    let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Tensor::new(&shape, data).map_err(|e| DataError::Malformed(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_and_rejections() {
        let t = Tensor::new(&[2, 1, 3], vec![1.0, -0.5, 3.25, 0.0, 1e-300, -7.0]).unwrap();
        let mut buf = Vec::new();
        write_tensor(&mut buf, &t).unwrap();
        assert_eq!(buf.len(), 6 + 3 * 8 + 6 * 8);
        assert_eq!(read_tensor(&mut buf.as_slice()).unwrap(), t);

        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(read_tensor(&mut bad.as_slice()).is_err());
        assert!(matches!(read_tensor(&mut &buf[..20]), Err(DataError::Malformed(_))));
        let mut nan = buf.clone();
        let off = nan.len() - 8;
        nan[off..].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(read_tensor(&mut nan.as_slice()).is_err());
    }
}
