//! WTM1 binary field container.
//!
//! Layout (all little-endian):
//! magic `"WTM1"` · u32 dtype (1 = f32 real, 2 = complex64 interleaved, i.e.
//! f32 re/im pairs) · u32 ndim · ndim × u64 dims (outermost first) · f64 dx ·
//! 2 × f64 origin · row-major payload. Round-trips bit-exactly.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::error::ContainerError;
use crate::grid::{ComplexField, Grid2D, RealField};

pub const MAGIC: [u8; 4] = *b"WTM1";

pub const DTYPE_REAL_F32: u32 = 1;
pub const DTYPE_COMPLEX64: u32 = 2;

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    RealF32(Vec<f32>),
    /// Interleaved re/im pairs.
    Complex64(Vec<[f32; 2]>),
}

impl Payload {
    pub fn len(&self) -> usize {
        match self {
            Payload::RealF32(v) => v.len(),
            Payload::Complex64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn dtype(&self) -> u32 {
        match self {
            Payload::RealF32(_) => DTYPE_REAL_F32,
            Payload::Complex64(_) => DTYPE_COMPLEX64,
        }
    }

    fn dtype_name(&self) -> &'static str {
        match self {
            Payload::RealF32(_) => "f32 real",
            Payload::Complex64(_) => "complex64",
        }
    }
}

/// A decoded WTM1 container.
#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub dims: Vec<u64>,
    pub dx: f64,
    pub origin: (f64, f64),
    pub payload: Payload,
}

impl Container {
    pub fn element_count(&self) -> usize {
        self.dims.iter().product::<u64>() as usize
    }

    pub fn write(&self, path: &Path) -> Result<(), ContainerError> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(&MAGIC)?;
        w.write_all(&self.payload.dtype().to_le_bytes())?;
        w.write_all(&(self.dims.len() as u32).to_le_bytes())?;
        for d in &self.dims {
            w.write_all(&d.to_le_bytes())?;
        }
        w.write_all(&self.dx.to_le_bytes())?;
        w.write_all(&self.origin.0.to_le_bytes())?;
        w.write_all(&self.origin.1.to_le_bytes())?;
        match &self.payload {
            Payload::RealF32(v) => {
                for x in v {
                    w.write_all(&x.to_le_bytes())?;
                }
            }
            Payload::Complex64(v) => {
                for [re, im] in v {
                    w.write_all(&re.to_le_bytes())?;
                    w.write_all(&im.to_le_bytes())?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self, ContainerError> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if magic != MAGIC {
            return Err(ContainerError::BadMagic);
        }
        let dtype = read_u32(&mut r)?;
        let ndim = read_u32(&mut r)? as usize;
        let mut dims = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            dims.push(read_u64(&mut r)?);
        }
        let dx = read_f64(&mut r)?;
        let origin = (read_f64(&mut r)?, read_f64(&mut r)?);
        let n: usize = dims.iter().product::<u64>() as usize;
        let payload = match dtype {
            DTYPE_REAL_F32 => {
                let mut bytes = vec![0u8; n * 4];
                read_payload(&mut r, &mut bytes)?;
                Payload::RealF32(
                    bytes
                        .chunks_exact(4)
                        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                        .collect(),
                )
            }
            DTYPE_COMPLEX64 => {
                let mut bytes = vec![0u8; n * 8];
                read_payload(&mut r, &mut bytes)?;
                Payload::Complex64(
                    bytes
                        .chunks_exact(8)
                        .map(|c| {
                            [
                                f32::from_le_bytes([c[0], c[1], c[2], c[3]]),
                                f32::from_le_bytes([c[4], c[5], c[6], c[7]]),
                            ]
                        })
                        .collect(),
                )
            }
            other => return Err(ContainerError::BadDtype(other)),
        };
        Ok(Container {
            dims,
            dx,
            origin,
            payload,
        })
    }
}

fn read_payload(r: &mut impl Read, buf: &mut [u8]) -> Result<(), ContainerError> {
    let mut got = 0;
    while got < buf.len() {
        let n = r.read(&mut buf[got..])?;
        if n == 0 {
            return Err(ContainerError::Truncated {
                expected: buf.len(),
                got,
            });
        }
        got += n;
    }
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32, ContainerError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64, ContainerError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> Result<f64, ContainerError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

pub fn write_real_field(path: &Path, f: &RealField) -> Result<(), ContainerError> {
    Container {
        dims: vec![f.grid.ny as u64, f.grid.nx as u64],
        dx: f.grid.dx,
        origin: f.grid.origin,
        payload: Payload::RealF32(f.data.iter().map(|&v| v as f32).collect()),
    }
    .write(path)
}

pub fn read_real_field(path: &Path) -> Result<RealField, ContainerError> {
    let c = Container::read(path)?;
    if c.dims.len() != 2 {
        return Err(ContainerError::NdimMismatch {
            expected: 2,
            found: c.dims.len() as u32,
        });
    }
    let data = match &c.payload {
        Payload::RealF32(v) => v.iter().map(|&x| x as f64).collect(),
        p => {
            return Err(ContainerError::DtypeMismatch {
                expected: "f32 real",
                found: p.dtype_name(),
            })
        }
    };
    let grid = Grid2D {
        nx: c.dims[1] as usize,
        ny: c.dims[0] as usize,
        dx: c.dx,
        origin: c.origin,
    };
    Ok(RealField { grid, data })
}

pub fn write_complex_field(path: &Path, f: &ComplexField) -> Result<(), ContainerError> {
    Container {
        dims: vec![f.grid.ny as u64, f.grid.nx as u64],
        dx: f.grid.dx,
        origin: f.grid.origin,
        payload: Payload::Complex64(
            f.data.iter().map(|v| [v.re as f32, v.im as f32]).collect(),
        ),
    }
    .write(path)
}

pub fn read_complex_field(path: &Path) -> Result<ComplexField, ContainerError> {
    let c = Container::read(path)?;
    if c.dims.len() != 2 {
        return Err(ContainerError::NdimMismatch {
            expected: 2,
            found: c.dims.len() as u32,
        });
    }
    let data = match &c.payload {
        Payload::Complex64(v) => v
            .iter()
            .map(|&[re, im]| Complex64::new(re as f64, im as f64))
            .collect(),
        p => {
            return Err(ContainerError::DtypeMismatch {
                expected: "complex64",
                found: p.dtype_name(),
            })
        }
    };
    let grid = Grid2D {
        nx: c.dims[1] as usize,
        ny: c.dims[0] as usize,
        dx: c.dx,
        origin: c.origin,
    };
    Ok(ComplexField { grid, data })
}
