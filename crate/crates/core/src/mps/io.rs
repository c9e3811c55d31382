//! Binary state container.
//!
//! Layout (all integers and floats little-endian):
//!
//! | field        | type                          |
//! |--------------|-------------------------------|
//! | magic        | 4 bytes `MPSQ`                |
//! | version      | `u32` (currently 1)           |
//! | N            | `u64`                         |
//! | d            | `u64`                         |
//! | bond dims    | `N + 1` x `u64`               |
//! | center       | `i64`, `-1` when not canonical |
//! | log scale    | `f64`                         |
//! | tensors      | per site, row-major `[left][phys][right]`, each entry `f64` real then `f64` imaginary |

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use num_complex::Complex;

use super::{MatrixProductState, SiteTensor};
use crate::error::{Error, Result};
use crate::scalar::{lit, to_f64, Real};

pub const MAGIC: &[u8; 4] = b"MPSQ";
pub const VERSION: u32 = 1;

/// Bond and site sizes above this are rejected as corrupt rather than allocated.
const MAX_DIM: u64 = 1 << 20;

pub fn write_state<T: Real, W: Write>(state: &MatrixProductState<T>, mut w: W) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(VERSION)?;
    w.write_u64::<LittleEndian>(state.n_sites() as u64)?;
    w.write_u64::<LittleEndian>(state.local_dim() as u64)?;
    for b in state.bond_dims() {
        w.write_u64::<LittleEndian>(b as u64)?;
    }
    w.write_i64::<LittleEndian>(state.center().map(|c| c as i64).unwrap_or(-1))?;
    w.write_f64::<LittleEndian>(to_f64(state.log_scale()))?;
    for t in state.tensors() {
        for a in 0..t.left() {
            for s in 0..t.phys() {
                for b in 0..t.right() {
                    let z = t.get(a, s, b);
                    w.write_f64::<LittleEndian>(to_f64(z.re))?;
                    w.write_f64::<LittleEndian>(to_f64(z.im))?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_state<T: Real, R: Read>(mut r: R) -> Result<MatrixProductState<T>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("bad magic bytes".into()));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let n = r.read_u64::<LittleEndian>()?;
    let d = r.read_u64::<LittleEndian>()?;
    if n == 0 || n > MAX_DIM || d == 0 || d > MAX_DIM {
        return Err(Error::Format(format!("implausible header N={n}, d={d}")));
    }
    let (n, d) = (n as usize, d as usize);
    let mut bonds = Vec::with_capacity(n + 1);
    for _ in 0..=n {
        let b = r.read_u64::<LittleEndian>()?;
        if b == 0 || b > MAX_DIM {
            return Err(Error::Format(format!("implausible bond dimension {b}")));
        }
        bonds.push(b as usize);
    }
    let center = r.read_i64::<LittleEndian>()?;
    let log_scale = r.read_f64::<LittleEndian>()?;
    let mut tensors = Vec::with_capacity(n);
    for j in 0..n {
        let (l, rr) = (bonds[j], bonds[j + 1]);
        let mut t = SiteTensor::zeros(l, d, rr);
        for a in 0..l {
            for s in 0..d {
                for b in 0..rr {
                    let re = r.read_f64::<LittleEndian>()?;
                    let im = r.read_f64::<LittleEndian>()?;
                    t.set(a, s, b, Complex::new(lit(re), lit(im)));
                }
            }
        }
        tensors.push(t);
    }
    let center = match center {
        -1 => None,
        c if c >= 0 && (c as usize) < n => Some(c as usize),
        c => return Err(Error::Format(format!("invalid center {c}"))),
    };
    MatrixProductState::with_gauge(tensors, d, center, lit(log_scale))
}

pub fn save<T: Real>(state: &MatrixProductState<T>, path: impl AsRef<Path>) -> Result<()> {
    write_state(state, BufWriter::new(File::create(path)?))
}

pub fn load<T: Real>(path: impl AsRef<Path>) -> Result<MatrixProductState<T>> {
    read_state(BufReader::new(File::open(path)?))
}
