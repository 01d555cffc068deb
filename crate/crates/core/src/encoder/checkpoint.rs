//! Binary checkpoint format.
//!
//! ```text
//! "FUZZCKPT v1\n"
//! u64 meta length, meta bytes (UTF-8, usually JSON)
//! u64 tensor count
//! per tensor: u64 name length, name bytes, u64 rows, u64 cols, rows*cols f64
//! ```
//! All integers and floats are little-endian.

use std::io::{Read, Write};
use std::path::Path;

use super::autograd::{Mat, ParamStore};
use super::EncoderError;

pub const CHECKPOINT_MAGIC: &[u8] = b"FUZZCKPT v1\n";
const MAX_NAME: u64 = 4096;

pub fn write_checkpoint(mut w: impl Write, meta: &str, store: &ParamStore) -> Result<(), EncoderError> {
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&(meta.len() as u64).to_le_bytes())?;
    w.write_all(meta.as_bytes())?;
    w.write_all(&(store.len() as u64).to_le_bytes())?;
    for id in store.ids() {
        let name = store.name(id);
        let m = store.get(id);
        w.write_all(&(name.len() as u64).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(m.nrows() as u64).to_le_bytes())?;
        w.write_all(&(m.ncols() as u64).to_le_bytes())?;
        for x in m.iter() {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_u64(r: &mut impl Read) -> Result<u64, EncoderError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub fn read_checkpoint(mut r: impl Read) -> Result<(String, ParamStore), EncoderError> {
    let bad = |m: &str| EncoderError::Checkpoint(m.to_string());
    let mut magic = vec![0u8; CHECKPOINT_MAGIC.len()];
    r.read_exact(&mut magic).map_err(|_| bad("truncated header"))?;
    if magic != CHECKPOINT_MAGIC {
        return Err(bad("not a FUZZCKPT v1 file"));
    }
    let meta_len = read_u64(&mut r)?;
    let mut meta = Vec::new();
    (&mut r).take(meta_len).read_to_end(&mut meta)?;
    if meta.len() as u64 != meta_len {
        return Err(bad("truncated metadata"));
    }
    let meta = String::from_utf8(meta).map_err(|_| bad("metadata is not UTF-8"))?;
    let count = read_u64(&mut r)?;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let name_len = read_u64(&mut r)?;
        if name_len > MAX_NAME {
            return Err(bad("tensor name too long"));
        }
        let mut name = vec![0u8; name_len as usize];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|_| bad("tensor name is not UTF-8"))?;
        let rows = read_u64(&mut r)? as usize;
        let cols = read_u64(&mut r)? as usize;
        let n = rows.checked_mul(cols).ok_or_else(|| bad("tensor too large"))?;
        let mut bytes = Vec::new();
        (&mut r).take((n * 8) as u64).read_to_end(&mut bytes)?;
        if bytes.len() != n * 8 {
            return Err(bad("truncated tensor data"));
        }
        let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        let m = Mat::from_shape_vec((rows, cols), data).map_err(|_| bad("bad tensor shape"))?;
        if store.id(&name).is_some() {
            return Err(bad("duplicate tensor name"));
        }
        store.add(name, m);
    }
    Ok((meta, store))
}

pub fn save_checkpoint(path: &Path, meta: &str, store: &ParamStore) -> Result<(), EncoderError> {
    let f = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(f);
    write_checkpoint(&mut w, meta, store)?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(String, ParamStore), EncoderError> {
    let f = std::fs::File::open(path)?;
    read_checkpoint(std::io::BufReader::new(f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn round_trips_bit_exactly() {
        let mut store = ParamStore::new();
        store.add("a", array![[1.0, -0.0, f64::MIN_POSITIVE], [1e300, 0.1 + 0.2, -3.5]]);
        store.add("b.c", array![[f64::EPSILON]]);
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, "{\"k\":1}", &store).unwrap();
        let (meta, back) = read_checkpoint(buf.as_slice()).unwrap();
        assert_eq!(meta, "{\"k\":1}");
        assert_eq!(back.len(), 2);
        for id in store.ids() {
            assert_eq!(back.name(id), store.name(id));
            let bits = |m: &Mat| m.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(back.get(id)), bits(store.get(id)));
        }
    }

    #[test]
    fn rejects_bad_header_and_truncation() {
        assert!(read_checkpoint(&b"FUZZCKPT v2\n"[..]).is_err());
        let mut store = ParamStore::new();
        store.add("a", array![[1.0, 2.0]]);
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, "", &store).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(read_checkpoint(buf.as_slice()).is_err());
    }
}
