//! `TNS1` binary tensor files.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "TNS1"
//! 4       1     dtype: 0 = real f64, 1 = complex f64 (re, im interleaved)
//! 5       3     reserved, zero
//! 8       24    n1, n2, n3 as little-endian u64
//! 32      ...   payload, little-endian f64, element (i, j, k) at
//!               (k * n2 + j) * n1 + i
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::tensor::Tensor3;
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"TNS1";
pub const DTYPE_REAL: u8 = 0;
pub const DTYPE_COMPLEX: u8 = 1;

/// Complex tensor payload in the same linear layout as [`Tensor3`].
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexTensor3 {
    pub n1: usize,
    pub n2: usize,
    pub n3: usize,
    pub data: Vec<Complex64>,
}

impl ComplexTensor3 {
    /// Packs per-frontal-slice matrices (`n1 x n2` each) into one tensor.
    pub fn from_slices(slices: &[DMatrix<Complex64>]) -> Self {
        let (n1, n2) = slices.first().map(|m| m.shape()).unwrap_or((0, 0));
        let data = slices
            .iter()
            .flat_map(|m| m.as_slice().iter().copied())
            .collect();
        Self {
            n1,
            n2,
            n3: slices.len(),
            data,
        }
    }

    pub fn frontal(&self, k: usize) -> DMatrix<Complex64> {
        let len = self.n1 * self.n2;
        DMatrix::from_column_slice(self.n1, self.n2, &self.data[k * len..(k + 1) * len])
    }
}

/// Contents of a `TNS1` file.
#[derive(Debug, Clone, PartialEq)]
pub enum TnsData {
    Real(Tensor3),
    Complex(ComplexTensor3),
}

fn write_header<W: Write>(w: &mut W, dtype: u8, dims: [usize; 3]) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&[dtype, 0, 0, 0])?;
    for d in dims {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    Ok(())
}

pub fn write_real<W: Write>(w: &mut W, t: &Tensor3) -> Result<()> {
    let (n1, n2, n3) = t.dims();
    write_header(w, DTYPE_REAL, [n1, n2, n3])?;
    for x in t.as_slice() {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

pub fn write_complex<W: Write>(w: &mut W, t: &ComplexTensor3) -> Result<()> {
    write_header(w, DTYPE_COMPLEX, [t.n1, t.n2, t.n3])?;
    for z in &t.data {
        w.write_all(&z.re.to_le_bytes())?;
        w.write_all(&z.im.to_le_bytes())?;
    }
    Ok(())
}

pub fn read<R: Read>(r: &mut R) -> Result<TnsData> {
    let mut head = [0u8; 32];
    r.read_exact(&mut head)?;
    if &head[0..4] != MAGIC {
        return Err(Error::Format("missing TNS1 magic".into()));
    }
    if head[5..8] != [0, 0, 0] {
        return Err(Error::Format("reserved header bytes are not zero".into()));
    }
    let dim = |o: usize| -> Result<usize> {
        let v = u64::from_le_bytes(head[o..o + 8].try_into().expect("8 bytes"));
        usize::try_from(v).map_err(|_| Error::Format(format!("dimension {v} too large")))
    };
    let (n1, n2, n3) = (dim(8)?, dim(16)?, dim(24)?);
    let count = n1
        .checked_mul(n2)
        .and_then(|x| x.checked_mul(n3))
        .ok_or_else(|| Error::Format("dimension product overflows".into()))?;
    let width = match head[4] {
        DTYPE_REAL => 1,
        DTYPE_COMPLEX => 2,
        d => return Err(Error::Format(format!("unknown dtype {d}"))),
    };
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    if payload.len() != count * width * 8 {
        return Err(Error::Format(format!(
            "payload has {} bytes, expected {}",
            payload.len(),
            count * width * 8
        )));
    }
    let vals: Vec<f64> = payload
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
        .collect();
    Ok(if width == 1 {
        TnsData::Real(Tensor3::from_vec(n1, n2, n3, vals)?)
    } else {
        TnsData::Complex(ComplexTensor3 {
            n1,
            n2,
            n3,
            data: vals
                .chunks_exact(2)
                .map(|p| Complex64::new(p[0], p[1]))
                .collect(),
        })
    })
}

pub fn save_real(path: impl AsRef<Path>, t: &Tensor3) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_real(&mut w, t)?;
    w.flush()?;
    Ok(())
}

pub fn save_complex(path: impl AsRef<Path>, t: &ComplexTensor3) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_complex(&mut w, t)?;
    w.flush()?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<TnsData> {
    read(&mut BufReader::new(File::open(path)?))
}

/// Loads a file that must hold a real tensor.
pub fn load_real(path: impl AsRef<Path>) -> Result<Tensor3> {
    match load(path)? {
        TnsData::Real(t) => Ok(t),
        TnsData::Complex(_) => Err(Error::Format("expected a real (dtype 0) tensor".into())),
    }
}
