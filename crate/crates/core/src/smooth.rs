//! Separable Gaussian smoothing of real fields (sigma in grid units).

use crate::grid::RealField;

/// Gaussian blur with standard deviation `sigma` grid cells, kernel truncated
/// at 3σ and renormalized at the borders. σ = 0 returns the input unchanged.
pub fn gaussian_blur(f: &RealField, sigma: f64) -> RealField {
    assert!(sigma >= 0.0, "sigma must be non-negative");
    if sigma == 0.0 {
        return f.clone();
    }
    let radius = (3.0 * sigma).ceil() as usize;
    let kernel: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let d = i as f64 - radius as f64;
            (-0.5 * (d / sigma).powi(2)).exp()
        })
        .collect();

    let g = f.grid;
    let pass = |src: &[f64], n_along: usize, n_across: usize, stride_along: usize, stride_across: usize| {
        let mut dst = vec![0.0; src.len()];
        for j in 0..n_across {
            for i in 0..n_along {
                let mut acc = 0.0;
                let mut wsum = 0.0;
                let lo = i.saturating_sub(radius);
                let hi = (i + radius).min(n_along - 1);
                for t in lo..=hi {
                    let w = kernel[t + radius - i];
                    acc += w * src[t * stride_along + j * stride_across];
                    wsum += w;
                }
                dst[i * stride_along + j * stride_across] = acc / wsum;
            }
        }
        dst
    };

    let hx = pass(&f.data, g.nx, g.ny, 1, g.nx);
    let hxy = pass(&hx, g.ny, g.nx, g.nx, 1);
    RealField { grid: g, data: hxy }
}
