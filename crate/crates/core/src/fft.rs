//! 2D Fourier transforms on complex fields.
//!
//! Convention: `fft2` is the plain unnormalized forward sum, `ifft2` divides
//! by nx·ny, so `ifft2(fft2(f)) = f`. Plans are cached per thread.

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::grid::ComplexField;

thread_local! {
    static PLANS: RefCell<(FftPlanner<f64>, HashMap<(usize, bool), Arc<dyn Fft<f64>>>)> =
        RefCell::new((FftPlanner::new(), HashMap::new()));
}

fn with_plan<R>(len: usize, forward: bool, f: impl FnOnce(&Arc<dyn Fft<f64>>) -> R) -> R {
    PLANS.with(|cell| {
        let (planner, cache) = &mut *cell.borrow_mut();
        let plan = cache.entry((len, forward)).or_insert_with(|| {
            if forward {
                planner.plan_fft_forward(len)
            } else {
                planner.plan_fft_inverse(len)
            }
        });
        f(plan)
    })
}

fn transpose(src: &[Complex64], dst: &mut [Complex64], nx: usize, ny: usize) {
    const BLOCK: usize = 32;
    for by in (0..ny).step_by(BLOCK) {
        for bx in (0..nx).step_by(BLOCK) {
            for y in by..(by + BLOCK).min(ny) {
                for x in bx..(bx + BLOCK).min(nx) {
                    dst[x * ny + y] = src[y * nx + x];
                }
            }
        }
    }
}

fn fft2_dir(f: &ComplexField, forward: bool) -> ComplexField {
    let (nx, ny) = (f.grid.nx, f.grid.ny);
    let mut buf = f.data.clone();
    // rows
    with_plan(nx, forward, |plan| {
        let mut scratch = vec![Complex64::default(); plan.get_inplace_scratch_len()];
        plan.process_with_scratch(&mut buf, &mut scratch);
    });
    // columns via transpose
    let mut tr = vec![Complex64::default(); buf.len()];
    transpose(&buf, &mut tr, nx, ny);
    with_plan(ny, forward, |plan| {
        let mut scratch = vec![Complex64::default(); plan.get_inplace_scratch_len()];
        plan.process_with_scratch(&mut tr, &mut scratch);
    });
    transpose(&tr, &mut buf, ny, nx);
    ComplexField {
        grid: f.grid,
        data: buf,
    }
}

/// Unnormalized forward 2D DFT.
pub fn fft2(f: &ComplexField) -> ComplexField {
    fft2_dir(f, true)
}

/// Inverse 2D DFT, scaled by 1/(nx·ny).
pub fn ifft2(ft: &ComplexField) -> ComplexField {
    let mut out = fft2_dir(ft, false);
    let scale = 1.0 / (ft.grid.nx as f64 * ft.grid.ny as f64);
    for v in &mut out.data {
        *v *= scale;
    }
    out
}
