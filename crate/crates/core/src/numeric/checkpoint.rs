//! Binary parameter container.
//!
//! Layout (little endian):
//!
//! ```text
//! magic    b"MSUDACKP"
//! version  u32 (= 1)
//! count    u32
//! count x { name_len u32, name utf-8, rows u64, cols u64, rows*cols f64 }
//! ```
//!
//! Values are widened to `f64`, which round-trips `f32` and `f64` exactly.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::matrix::Matrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

const MAGIC: &[u8; 8] = b"MSUDACKP";
const VERSION: u32 = 1;

pub type NamedBlock<T> = (String, Matrix<T>);

pub fn write_blocks<T: Scalar, W: Write>(mut w: W, blocks: &[NamedBlock<T>]) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(blocks.len() as u32).to_le_bytes())?;
    for (name, m) in blocks {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(m.rows() as u64).to_le_bytes())?;
        w.write_all(&(m.cols() as u64).to_le_bytes())?;
        for &v in m.as_slice() {
            w.write_all(&v.f64().to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_blocks<T: Scalar, R: Read>(mut r: R) -> Result<Vec<NamedBlock<T>>> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("not a parameter checkpoint (bad magic)".into()));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let count = read_u32(&mut r)? as usize;
    let mut blocks = Vec::with_capacity(count);
    for _ in 0..count {
        let len = read_u32(&mut r)? as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name)
            .map_err(|_| Error::Checkpoint("block name is not utf-8".into()))?;
        let rows = read_u64(&mut r)? as usize;
        let cols = read_u64(&mut r)? as usize;
        let mut data = Vec::with_capacity(rows * cols);
        let mut buf = [0u8; 8];
        for _ in 0..rows * cols {
            r.read_exact(&mut buf)?;
            data.push(T::c(f64::from_le_bytes(buf)));
        }
        blocks.push((name, Matrix::from_vec(rows, cols, data)?));
    }
    Ok(blocks)
}

pub fn save<T: Scalar>(path: impl AsRef<Path>, blocks: &[NamedBlock<T>]) -> Result<()> {
    write_blocks(BufWriter::new(File::create(path)?), blocks)
}

pub fn load<T: Scalar>(path: impl AsRef<Path>) -> Result<Vec<NamedBlock<T>>> {
    read_blocks(BufReader::new(File::open(path)?))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let blocks = vec![
            ("a".to_string(), Matrix::<f64>::from_f64(&[[0.1, -1e-300, f64::MAX]])),
            ("b.c".to_string(), Matrix::<f64>::zeros(0, 3)),
        ];
        let mut buf = Vec::new();
        write_blocks(&mut buf, &blocks).unwrap();
        let back: Vec<NamedBlock<f64>> = read_blocks(&buf[..]).unwrap();
        assert_eq!(back.len(), 2);
        for ((n1, m1), (n2, m2)) in blocks.iter().zip(&back) {
            assert_eq!(n1, n2);
            assert_eq!(m1.shape(), m2.shape());
            let bits1: Vec<u64> = m1.as_slice().iter().map(|v| v.to_bits()).collect();
            let bits2: Vec<u64> = m2.as_slice().iter().map(|v| v.to_bits()).collect();
            assert_eq!(bits1, bits2);
        }
    }

    #[test]
    fn f32_survives_widening() {
        let blocks = vec![("w".to_string(), Matrix::<f32>::from_f64(&[[0.1, 3.3e-7]]))];
        let mut buf = Vec::new();
        write_blocks(&mut buf, &blocks).unwrap();
        let back: Vec<NamedBlock<f32>> = read_blocks(&buf[..]).unwrap();
        assert_eq!(back[0].1, blocks[0].1);
    }

    #[test]
    fn rejects_garbage() {
        assert!(read_blocks::<f64, _>(&b"NOTACKPT\x01\0\0\0"[..]).is_err());
    }
}
