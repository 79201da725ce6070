//! Flat binary checkpoint: `"KCN1"`, `u32` version, then one record per
//! parameter (`u32` name length, name bytes, `u32` rows, `u32` cols,
//! little-endian `f64` data). Records run to end of input.

use std::io::{Read, Write};
use std::path::Path;

use super::{NnError, ParamSet, Tensor2D};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"KCN1";
const VERSION: u32 = 1;

pub fn write_checkpoint<W: Write>(params: &ParamSet, mut w: W) -> Result<(), NnError> {
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    for (name, p) in params.iter() {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(p.value.rows() as u32).to_le_bytes())?;
        w.write_all(&(p.value.cols() as u32).to_le_bytes())?;
        for v in p.value.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn take<'a>(buf: &mut &'a [u8], n: usize) -> Result<&'a [u8], NnError> {
    if buf.len() < n {
        return Err(NnError::Checkpoint("truncated record".into()));
    }
    let (head, tail) = buf.split_at(n);
    *buf = tail;
    Ok(head)
}

fn take_u32(buf: &mut &[u8]) -> Result<u32, NnError> {
    Ok(u32::from_le_bytes(take(buf, 4)?.try_into().expect("4 bytes")))
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<ParamSet, NnError> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut buf = bytes.as_slice();
    if take(&mut buf, 4)? != CHECKPOINT_MAGIC {
        return Err(NnError::Checkpoint("bad magic".into()));
    }
    let version = take_u32(&mut buf)?;
    if version != VERSION {
        return Err(NnError::Checkpoint(format!("unsupported version {version}")));
    }
    let mut params = ParamSet::new();
    while !buf.is_empty() {
        let len = take_u32(&mut buf)? as usize;
        let name = std::str::from_utf8(take(&mut buf, len)?)
            .map_err(|_| NnError::Checkpoint("parameter name is not utf-8".into()))?
            .to_string();
        let rows = take_u32(&mut buf)? as usize;
        let cols = take_u32(&mut buf)? as usize;
        let raw = take(&mut buf, rows * cols * 8)?;
        let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        params.insert(&name, Tensor2D::from_vec(rows, cols, data)?)?;
    }
    Ok(params)
}

pub fn save_checkpoint(params: &ParamSet, path: &Path) -> Result<(), NnError> {
    let mut bytes = Vec::new();
    write_checkpoint(params, &mut bytes)?;
    std::fs::write(path, bytes)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<ParamSet, NnError> {
    read_checkpoint(std::fs::File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let mut p = ParamSet::new();
        p.insert("ab", Tensor2D::row_vector(&[1.5])).unwrap();
        let mut out = Vec::new();
        write_checkpoint(&p, &mut out).unwrap();
        assert_eq!(&out[..4], b"KCN1");
        assert_eq!(&out[4..8], &1u32.to_le_bytes());
        assert_eq!(&out[8..12], &2u32.to_le_bytes());
        assert_eq!(&out[12..14], b"ab");
        assert_eq!(out.len(), 14 + 8 + 8);
        assert_eq!(&out[22..30], &1.5f64.to_le_bytes());
    }

    #[test]
    fn bad_magic_and_truncation() {
        assert!(read_checkpoint(&b"XXXX\x01\0\0\0"[..]).is_err());
        assert!(read_checkpoint(&b"KCN1\x01\0\0\0\x05\0\0\0ab"[..]).is_err());
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(values in prop::collection::vec(prop::num::f64::ANY, 1..40), cols in 1usize..5) {
            let rows = values.len().div_ceil(cols);
            let mut data = values.clone();
            data.resize(rows * cols, -0.0);
            let mut p = ParamSet::new();
            p.insert("layer.w", Tensor2D::from_vec(rows, cols, data.clone()).unwrap()).unwrap();
            p.insert("a", Tensor2D::row_vector(&[f64::MIN_POSITIVE])).unwrap();
            let mut out = Vec::new();
            write_checkpoint(&p, &mut out).unwrap();
            let back = read_checkpoint(out.as_slice()).unwrap();
            let got: Vec<u64> = back.value("layer.w").unwrap().data().iter().map(|v| v.to_bits()).collect();
            let want: Vec<u64> = data.iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(got, want);
            let mut again = Vec::new();
            write_checkpoint(&back, &mut again).unwrap();
            prop_assert_eq!(out, again);
        }
    }
}
