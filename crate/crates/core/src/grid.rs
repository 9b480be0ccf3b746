//! Uniform 2D grids and the real/complex fields living on them.
//!
//! Fields are stored row-major (`index = iy * nx + ix`); node `(ix, iy)` sits
//! at physical position `origin + (ix, iy) * dx`. Spacing is isotropic.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::StructuralError;

/// Uniform 2D grid with isotropic spacing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid2D {
    pub nx: usize,
    pub ny: usize,
    /// Grid spacing in meters.
    pub dx: f64,
    /// Physical position of node (0, 0) in meters.
    pub origin: (f64, f64),
}

impl Grid2D {
    pub fn new(nx: usize, ny: usize, dx: f64) -> Result<Self, StructuralError> {
        if nx < 8 || ny < 8 {
            return Err(StructuralError::InvalidGrid(format!(
                "grid must be at least 8x8, got {nx}x{ny}"
            )));
        }
        if !(dx > 0.0) || !dx.is_finite() {
            return Err(StructuralError::InvalidGrid(format!("dx must be positive, got {dx}")));
        }
        Ok(Self {
            nx,
            ny,
            dx,
            origin: (0.0, 0.0),
        })
    }

    /// Grid with the physical (0, 0) at the center of the domain.
    pub fn centered(nx: usize, ny: usize, dx: f64) -> Result<Self, StructuralError> {
        let mut g = Self::new(nx, ny, dx)?;
        g.origin = (
            -0.5 * (nx as f64 - 1.0) * dx,
            -0.5 * (ny as f64 - 1.0) * dx,
        );
        Ok(g)
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Physical extent (width, height) in meters.
    pub fn extent(&self) -> (f64, f64) {
        (self.nx as f64 * self.dx, self.ny as f64 * self.dx)
    }

    pub fn index(&self, ix: usize, iy: usize) -> usize {
        debug_assert!(ix < self.nx && iy < self.ny);
        iy * self.nx + ix
    }

    /// Physical position of a node.
    pub fn position(&self, ix: usize, iy: usize) -> (f64, f64) {
        (
            self.origin.0 + ix as f64 * self.dx,
            self.origin.1 + iy as f64 * self.dx,
        )
    }

    /// Fractional grid coordinates of a physical point.
    pub fn frac_coords(&self, x: f64, y: f64) -> (f64, f64) {
        ((x - self.origin.0) / self.dx, (y - self.origin.1) / self.dx)
    }

    /// Nearest node to a physical point, or None if it falls outside the grid.
    pub fn nearest_node(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let (fx, fy) = self.frac_coords(x, y);
        let ix = fx.round();
        let iy = fy.round();
        if ix < 0.0 || iy < 0.0 || ix >= self.nx as f64 || iy >= self.ny as f64 {
            return None;
        }
        Some((ix as usize, iy as usize))
    }

    /// Grid extended by `pad` nodes on every side; the origin shifts so that
    /// interior nodes keep their physical positions.
    pub fn padded(&self, pad: usize) -> Grid2D {
        Grid2D {
            nx: self.nx + 2 * pad,
            ny: self.ny + 2 * pad,
            dx: self.dx,
            origin: (
                self.origin.0 - pad as f64 * self.dx,
                self.origin.1 - pad as f64 * self.dx,
            ),
        }
    }

    pub fn same_shape(&self, other: &Grid2D) -> bool {
        self.nx == other.nx && self.ny == other.ny
    }

    fn check_shape(&self, other: &Grid2D) -> Result<(), StructuralError> {
        if !self.same_shape(other) {
            return Err(StructuralError::GridMismatch {
                expected_nx: self.nx,
                expected_ny: self.ny,
                got_nx: other.nx,
                got_ny: other.ny,
            });
        }
        Ok(())
    }
}

/// How to fill the border band when padding a field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PadMode {
    /// Replicate edge values (sound-speed maps).
    Edge,
    /// Fill with zeros (sources).
    Zero,
}

macro_rules! field_impl {
    ($name:ident, $scalar:ty, $zero:expr) => {
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name {
            pub grid: Grid2D,
            pub data: Vec<$scalar>,
        }

        impl $name {
            pub fn zeros(grid: Grid2D) -> Self {
                Self {
                    grid,
                    data: vec![$zero; grid.len()],
                }
            }

            pub fn constant(grid: Grid2D, value: $scalar) -> Self {
                Self {
                    grid,
                    data: vec![value; grid.len()],
                }
            }

            pub fn from_fn(grid: Grid2D, mut f: impl FnMut(usize, usize) -> $scalar) -> Self {
                let mut data = Vec::with_capacity(grid.len());
                for iy in 0..grid.ny {
                    for ix in 0..grid.nx {
                        data.push(f(ix, iy));
                    }
                }
                Self { grid, data }
            }

            pub fn from_vec(grid: Grid2D, data: Vec<$scalar>) -> Result<Self, StructuralError> {
                if data.len() != grid.len() {
                    return Err(StructuralError::InvalidGrid(format!(
                        "data length {} does not match grid {}x{}",
                        data.len(),
                        grid.nx,
                        grid.ny
                    )));
                }
                Ok(Self { grid, data })
            }

            #[inline]
            pub fn get(&self, ix: usize, iy: usize) -> $scalar {
                self.data[self.grid.index(ix, iy)]
            }

            #[inline]
            pub fn set(&mut self, ix: usize, iy: usize, v: $scalar) {
                let i = self.grid.index(ix, iy);
                self.data[i] = v;
            }

            pub fn check_same_grid(&self, other: &$name) -> Result<(), StructuralError> {
                self.grid.check_shape(&other.grid)
            }

            /// Extend by `pad` nodes per side, filling the border per `mode`.
            pub fn pad_extend(&self, pad: usize, mode: PadMode) -> $name {
                let g = self.grid.padded(pad);
                let mut out = $name::zeros(g);
                for iy in 0..g.ny {
                    for ix in 0..g.nx {
                        let v = match mode {
                            PadMode::Zero => {
                                if ix >= pad
                                    && iy >= pad
                                    && ix < pad + self.grid.nx
                                    && iy < pad + self.grid.ny
                                {
                                    self.get(ix - pad, iy - pad)
                                } else {
                                    $zero
                                }
                            }
                            PadMode::Edge => {
                                let sx = (ix.max(pad) - pad).min(self.grid.nx - 1);
                                let sy = (iy.max(pad) - pad).min(self.grid.ny - 1);
                                self.get(sx, sy)
                            }
                        };
                        out.data[g.index(ix, iy)] = v;
                    }
                }
                out
            }

            /// Crop the central region, inverse of `pad_extend`.
            pub fn crop(&self, pad: usize) -> $name {
                assert!(
                    2 * pad < self.grid.nx && 2 * pad < self.grid.ny,
                    "crop exceeds field size"
                );
                let g = Grid2D {
                    nx: self.grid.nx - 2 * pad,
                    ny: self.grid.ny - 2 * pad,
                    dx: self.grid.dx,
                    origin: (
                        self.grid.origin.0 + pad as f64 * self.grid.dx,
                        self.grid.origin.1 + pad as f64 * self.grid.dx,
                    ),
                };
                let mut out = $name::zeros(g);
                for iy in 0..g.ny {
                    for ix in 0..g.nx {
                        out.data[g.index(ix, iy)] = self.get(ix + pad, iy + pad);
                    }
                }
                out
            }

            pub fn all_finite(&self) -> bool {
                self.data.iter().all(|v| Self::value_finite(*v))
            }
        }
    };
}

field_impl!(RealField, f64, 0.0);
field_impl!(ComplexField, Complex64, Complex64::new(0.0, 0.0));

impl RealField {
    fn value_finite(v: f64) -> bool {
        v.is_finite()
    }

    pub fn min_max(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &v in &self.data {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        (lo, hi)
    }

    pub fn norm_l2(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &RealField) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a * b)
            .sum()
    }

    /// Bilinear interpolation at a physical point; clamps to the grid hull.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> f64 {
        let (w, idx) = bilinear_weights(&self.grid, x, y);
        idx.iter()
            .zip(w.iter())
            .map(|(&i, &wi)| self.data[i] * wi)
            .sum()
    }
}

impl ComplexField {
    fn value_finite(v: Complex64) -> bool {
        v.re.is_finite() && v.im.is_finite()
    }

    pub fn norm_l2(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn sample_bilinear(&self, x: f64, y: f64) -> Complex64 {
        let (w, idx) = bilinear_weights(&self.grid, x, y);
        idx.iter()
            .zip(w.iter())
            .map(|(&i, &wi)| self.data[i] * wi)
            .sum()
    }

    pub fn map_real(&self, f: impl Fn(Complex64) -> f64) -> RealField {
        RealField {
            grid: self.grid,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

impl RealField {
    pub fn to_complex(&self) -> ComplexField {
        ComplexField {
            grid: self.grid,
            data: self
                .data
                .iter()
                .map(|&v| Complex64::new(v, 0.0))
                .collect(),
        }
    }
}

/// Weights and flat indices of the four nodes around a physical point.
/// Points outside the hull are clamped to the boundary cell.
pub fn bilinear_weights(grid: &Grid2D, x: f64, y: f64) -> ([f64; 4], [usize; 4]) {
    let (fx, fy) = grid.frac_coords(x, y);
    let fx = fx.clamp(0.0, (grid.nx - 1) as f64);
    let fy = fy.clamp(0.0, (grid.ny - 1) as f64);
    let ix0 = (fx.floor() as usize).min(grid.nx - 2);
    let iy0 = (fy.floor() as usize).min(grid.ny - 2);
    let tx = fx - ix0 as f64;
    let ty = fy - iy0 as f64;
    let w = [
        (1.0 - tx) * (1.0 - ty),
        tx * (1.0 - ty),
        (1.0 - tx) * ty,
        tx * ty,
    ];
    let idx = [
        grid.index(ix0, iy0),
        grid.index(ix0 + 1, iy0),
        grid.index(ix0, iy0 + 1),
        grid.index(ix0 + 1, iy0 + 1),
    ];
    (w, idx)
}

/// Squared Fourier wavenumber magnitude p² = px² + py² on a grid, in the
/// standard DFT ordering (rad²/m²).
#[derive(Debug, Clone)]
pub struct SpectralCoords {
    pub grid: Grid2D,
    pub p_squared: Vec<f64>,
}

impl SpectralCoords {
    pub fn new(grid: Grid2D) -> Self {
        let px: Vec<f64> = fft_wavenumbers(grid.nx, grid.dx);
        let py: Vec<f64> = fft_wavenumbers(grid.ny, grid.dx);
        let mut p_squared = Vec::with_capacity(grid.len());
        for ky in &py {
            for kx in &px {
                p_squared.push(kx * kx + ky * ky);
            }
        }
        Self { grid, p_squared }
    }
}

/// Angular wavenumbers 2π·f for an n-point DFT with spacing dx, DFT order.
pub fn fft_wavenumbers(n: usize, dx: f64) -> Vec<f64> {
    let l = n as f64 * dx;
    (0..n)
        .map(|i| {
            let k = if i <= n / 2 { i as f64 } else { i as f64 - n as f64 };
            2.0 * std::f64::consts::PI * k / l
        })
        .collect()
}
