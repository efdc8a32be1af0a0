//! Payload encodings for plaintext matrices.

use crate::nn::Tensor;

use super::SplitError;

/// `count:u32 ‖ (rows:u32 ‖ cols:u32 ‖ f64 LE data)*`
pub fn encode_matrices(ms: &[&Tensor]) -> Vec<u8> {
    let total: usize = ms.iter().map(|m| 8 + 8 * m.len()).sum();
    let mut out = Vec::with_capacity(4 + total);
    out.extend_from_slice(&(ms.len() as u32).to_le_bytes());
    for m in ms {
        let (r, c) = (m.dim(0), m.len() / m.dim(0));
        out.extend_from_slice(&(r as u32).to_le_bytes());
        out.extend_from_slice(&(c as u32).to_le_bytes());
        for v in m.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_matrices(b: &[u8], count: usize) -> Result<Vec<Tensor>, SplitError> {
    let bad = |m: &str| SplitError::Protocol(format!("matrix payload: {m}"));
    if b.len() < 4 || u32::from_le_bytes(b[..4].try_into().unwrap()) as usize != count {
        return Err(bad("wrong matrix count"));
    }
    let mut pos = 4;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        if b.len() < pos + 8 {
            return Err(bad("truncated header"));
        }
        let r = u32::from_le_bytes(b[pos..pos + 4].try_into().unwrap()) as usize;
        let c = u32::from_le_bytes(b[pos + 4..pos + 8].try_into().unwrap()) as usize;
        pos += 8;
        let n = r.checked_mul(c).ok_or_else(|| bad("size overflow"))?;
        if b.len() < pos + 8 * n {
            return Err(bad("truncated data"));
        }
        let data = b[pos..pos + 8 * n].chunks_exact(8).map(|x| f64::from_le_bytes(x.try_into().unwrap())).collect();
        pos += 8 * n;
        out.push(Tensor::new(&[r, c], data).map_err(|e| bad(&e.to_string()))?);
    }
    if pos != b.len() {
        return Err(bad("trailing bytes"));
    }
    Ok(out)
}

pub fn decode_matrix(b: &[u8]) -> Result<Tensor, SplitError> {
    Ok(decode_matrices(b, 1)?.pop().unwrap())
}

/// `len:u32 ‖ first ‖ second`
pub fn join2(first: &[u8], second: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + first.len() + second.len());
    out.extend_from_slice(&(first.len() as u32).to_le_bytes());
    out.extend_from_slice(first);
    out.extend_from_slice(second);
    out
}

pub fn split2(b: &[u8]) -> Result<(&[u8], &[u8]), SplitError> {
    if b.len() < 4 {
        return Err(SplitError::Protocol("truncated compound payload".into()));
    }
    let n = u32::from_le_bytes(b[..4].try_into().unwrap()) as usize;
    if b.len() < 4 + n {
        return Err(SplitError::Protocol("truncated compound payload".into()));
    }
    Ok((&b[4..4 + n], &b[4 + n..]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip() {
        let a = Tensor::new(&[2, 3], vec![1.0, -2.0, 3.5, 0.0, 1e-17, 9.0]).unwrap();
        let b = Tensor::new(&[1, 1], vec![4.0]).unwrap();
        let enc = encode_matrices(&[&a, &b]);
        let dec = decode_matrices(&enc, 2).unwrap();
        assert_eq!(dec, vec![a.clone(), b]);
        assert!(decode_matrices(&enc, 1).is_err());
        assert!(decode_matrices(&enc[..enc.len() - 1], 2).is_err());
        let j = join2(b"abc", b"defg");
        assert_eq!(split2(&j).unwrap(), (&b"abc"[..], &b"defg"[..]));
    }
}
