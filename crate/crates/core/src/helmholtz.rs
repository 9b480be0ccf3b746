//! Frequency-domain forward modeling of the Helmholtz equation
//! [∇² + (ω/c)²] u = −ρ via the convergent Born series.
//!
//! The medium enters through the scattering potential
//! v(x) = (ω/c(x))² − κ² − iε against a damped homogeneous background, whose
//! Green operator G = F⁻¹ ∘ (p² − κ² − iε)⁻¹ ∘ F is diagonal in Fourier
//! space. The plain Born iteration u ← Gρ + (Gv)u converges only for weak
//! contrast; the preconditioned iteration with q = 1 − iv/ε,
//! u ← u₀ + [(1−q)Gv + q]u, u₀ = (1−q)Gρ, converges whenever ε dominates
//! the real spread of the potential.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{SolverError, StructuralError};
use crate::fft::{fft2, ifft2};
use crate::grid::{ComplexField, PadMode, RealField, SpectralCoords};

/// CBS solver parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    /// Relative update-norm tolerance.
    pub tol: f64,
    pub n_max: usize,
    /// Safety margin on the absorption parameter, >= 1.
    pub margin: f64,
    /// Absorbing buffer width in grid cells around the imaging grid.
    pub pad: usize,
    /// Peak absorbing-layer strength as a fraction of the local k²;
    /// 0 disables the layer (undamped periodic formulation).
    pub absorber: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol: 1e-6,
            n_max: 1000,
            margin: 1.05,
            pad: 64,
            absorber: 0.5,
        }
    }
}

impl SolverConfig {
    /// Desk-scale preset: thinner buffer for small test grids.
    pub fn desk() -> Self {
        SolverConfig {
            pad: 16,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), StructuralError> {
        if !(self.tol > 0.0) {
            return Err(StructuralError::InvalidParameter(format!(
                "solver tol must be positive, got {}",
                self.tol
            )));
        }
        if self.n_max == 0 {
            return Err(StructuralError::InvalidParameter(
                "solver n_max must be at least 1".into(),
            ));
        }
        if self.margin < 1.0 {
            return Err(StructuralError::InvalidParameter(format!(
                "solver margin must be >= 1, got {}",
                self.margin
            )));
        }
        Ok(())
    }
}

/// A padded CBS solve: the cropped imaging-grid field plus the raw padded
/// field (useful as a warm start for a nearby model).
#[derive(Debug, Clone)]
pub struct PaddedSolve {
    pub field: ComplexField,
    pub padded: ComplexField,
    pub report: SolveReport,
}

/// Solve [∇² + (ω/c)²]u = −ρ for imaging-grid inputs: the sound speed is
/// edge-replicated and the source zero-padded into an absorbing buffer of
/// `cfg.pad` cells, solved with CBS, and the solution cropped back.
pub fn solve_padded(
    c: &RealField,
    source: &ComplexField,
    omega: f64,
    cfg: &SolverConfig,
    warm: Option<&ComplexField>,
) -> Result<PaddedSolve, SolverError> {
    let c_pad = c.pad_extend(cfg.pad, PadMode::Edge);
    let rho_pad = source.pad_extend(cfg.pad, PadMode::Zero);
    let absorption = if cfg.absorber > 0.0 && cfg.pad > 0 {
        Some(absorption_profile(&c_pad, omega, cfg.pad, cfg.absorber))
    } else {
        None
    };
    let (kappa_sq, epsilon) =
        choose_kappa_eps_absorbing(&c_pad, omega, cfg.margin, absorption.as_ref());
    let problem = HelmholtzProblem {
        c: c_pad,
        source: rho_pad,
        omega,
        kappa_sq,
        epsilon,
        absorption,
    };
    let (u, report) = cbs_solve_from(&problem, cfg.tol, cfg.n_max, warm)?;
    Ok(PaddedSolve {
        field: u.crop(cfg.pad),
        padded: u,
        report,
    })
}

/// One frequency-domain solve: medium, source and background parameters.
/// All fields live on the (already padded) solve grid.
#[derive(Debug, Clone)]
pub struct HelmholtzProblem {
    pub c: RealField,
    pub source: ComplexField,
    /// Angular frequency in rad/s.
    pub omega: f64,
    /// Background squared wavenumber in rad²/m².
    pub kappa_sq: f64,
    /// Absorption parameter, > 0.
    pub epsilon: f64,
    /// Optional absorbing-layer profile: a non-negative imaginary addition
    /// to k², normally a smooth ramp in the boundary band. Without it the
    /// converged solution is the undamped periodic one, whose box
    /// resonances can stall the iteration on strongly scattering media.
    pub absorption: Option<RealField>,
}

impl HelmholtzProblem {
    pub fn validate(&self) -> Result<(), StructuralError> {
        self.c.check_same_grid(&RealField {
            grid: self.source.grid,
            data: vec![],
        })?;
        if !(self.omega > 0.0) {
            return Err(StructuralError::InvalidParameter(format!(
                "omega must be positive, got {}",
                self.omega
            )));
        }
        if !(self.kappa_sq > 0.0) {
            return Err(StructuralError::InvalidParameter(format!(
                "kappa_sq must be positive, got {}",
                self.kappa_sq
            )));
        }
        if !(self.epsilon > 0.0) {
            return Err(StructuralError::InvalidParameter(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if self.c.data.iter().any(|&v| !(v > 0.0)) {
            return Err(StructuralError::InvalidParameter(
                "sound speed must be positive everywhere".into(),
            ));
        }
        if let Some(a) = &self.absorption {
            a.check_same_grid(&self.c)?;
            if a.data.iter().any(|&v| v < 0.0) {
                return Err(StructuralError::InvalidParameter(
                    "absorption profile must be non-negative".into(),
                ));
            }
        }
        Ok(())
    }

    /// Scattering potential including the absorbing layer:
    /// v_eff = (ω/c)² + iα − κ² − iε.
    fn effective_potential(&self) -> Result<ComplexField, StructuralError> {
        let mut pot =
            scattering_potential(&self.c, self.omega, self.kappa_sq, self.epsilon)?.v;
        if let Some(a) = &self.absorption {
            for (v, &alpha) in pot.data.iter_mut().zip(&a.data) {
                *v += Complex64::new(0.0, alpha);
            }
        }
        Ok(pot)
    }
}

/// Smooth absorbing-layer profile for a padded grid: zero in the interior,
/// ramping as smoothstep² over the outer `band` cells up to
/// `strength`·(ω/c)² at the grid edge.
pub fn absorption_profile(c: &RealField, omega: f64, band: usize, strength: f64) -> RealField {
    let g = c.grid;
    RealField::from_fn(g, |ix, iy| {
        let dx_edge = ix.min(g.nx - 1 - ix);
        let dy_edge = iy.min(g.ny - 1 - iy);
        let d = dx_edge.min(dy_edge);
        if band == 0 || d >= band {
            return 0.0;
        }
        let t = 1.0 - d as f64 / band as f64;
        let s = t * t * (3.0 - 2.0 * t);
        let k = omega / c.get(ix, iy);
        strength * k * k * s * s
    })
}

/// Background parameters accounting for an absorbing layer:
/// ε = margin · max |k²_eff(x) − κ²| with κ² from the real part alone.
pub fn choose_kappa_eps_absorbing(
    c: &RealField,
    omega: f64,
    margin: f64,
    absorption: Option<&RealField>,
) -> (f64, f64) {
    let (kappa_sq, eps_plain) = choose_kappa_eps(c, omega, margin);
    match absorption {
        None => (kappa_sq, eps_plain),
        Some(a) => {
            let mut max_mag: f64 = 0.0;
            for (ci, &alpha) in c.data.iter().zip(&a.data) {
                let k = omega / ci;
                let re = k * k - kappa_sq;
                max_mag = max_mag.max((re * re + alpha * alpha).sqrt());
            }
            let eps = (margin * max_mag).max(1e-3 * kappa_sq);
            (kappa_sq, eps)
        }
    }
}

/// Scattering potential v(x) = (ω/c(x))² − κ² − iε.
#[derive(Debug, Clone)]
pub struct ScatteringPotential {
    pub v: ComplexField,
    pub epsilon: f64,
}

pub fn scattering_potential(
    c: &RealField,
    omega: f64,
    kappa_sq: f64,
    epsilon: f64,
) -> Result<ScatteringPotential, StructuralError> {
    if c.data.iter().any(|&v| !(v > 0.0)) {
        return Err(StructuralError::InvalidParameter(
            "sound speed must be positive everywhere".into(),
        ));
    }
    let v = ComplexField {
        grid: c.grid,
        data: c
            .data
            .iter()
            .map(|&ci| {
                let k = omega / ci;
                Complex64::new(k * k - kappa_sq, -epsilon)
            })
            .collect(),
    };
    Ok(ScatteringPotential { v, epsilon })
}

/// Preconditioner q = 1 − i·v/ε.
pub fn cbs_preconditioner(pot: &ScatteringPotential) -> ComplexField {
    let inv_eps = 1.0 / pot.epsilon;
    ComplexField {
        grid: pot.v.grid,
        data: pot
            .v
            .data
            .iter()
            .map(|&v| Complex64::new(1.0, 0.0) - Complex64::new(0.0, inv_eps) * v)
            .collect(),
    }
}

/// Background parameters for a medium at one frequency.
///
/// κ² is centered mid-way between the extreme squared wavenumbers, which
/// minimizes max|Re v|; ε = margin · max|Re v| with a small floor so the
/// homogeneous case stays well-posed.
pub fn choose_kappa_eps(c: &RealField, omega: f64, margin: f64) -> (f64, f64) {
    assert!(margin >= 1.0, "margin must be >= 1");
    let (c_min, c_max) = c.min_max();
    let k_max_sq = (omega / c_min).powi(2);
    let k_min_sq = (omega / c_max).powi(2);
    let kappa_sq = 0.5 * (k_min_sq + k_max_sq);
    let spread = 0.5 * (k_max_sq - k_min_sq);
    let eps = (margin * spread).max(1e-3 * kappa_sq);
    (kappa_sq, eps)
}

/// Apply the spectral Green operator F⁻¹[(p² − κ² − iε)⁻¹ F[f]].
pub fn green_apply(
    f: &ComplexField,
    kappa_sq: f64,
    epsilon: f64,
) -> Result<ComplexField, StructuralError> {
    if epsilon == 0.0 {
        return Err(StructuralError::InvalidParameter(
            "epsilon must be nonzero: Green symbol singular on the p² = κ² shell".into(),
        ));
    }
    let sc = SpectralCoords::new(f.grid);
    let mut ft = fft2(f);
    let shift = Complex64::new(kappa_sq, epsilon);
    for (v, &p2) in ft.data.iter_mut().zip(&sc.p_squared) {
        *v /= Complex64::new(p2, 0.0) - shift;
    }
    Ok(ifft2(&ft))
}

/// Per-solve convergence report.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub iterations: usize,
    pub final_update_norm: f64,
    pub converged: bool,
    /// Relative update norm ‖u_{n+1}−u_n‖/‖u_{n+1}‖ per iteration.
    pub update_norms: Vec<f64>,
    /// Absolute update norm ‖u_{n+1}−u_n‖ per iteration. Under divergence
    /// the relative norms saturate near a constant while these grow.
    pub absolute_update_norms: Vec<f64>,
}

/// Plain Born iteration u ← u₀ + (Gv)u, u₀ = Gρ, run for exactly `n_max`
/// iterations. No convergence guarantee: diverges for strong scattering.
pub fn born_solve(
    problem: &HelmholtzProblem,
    n_max: usize,
) -> Result<(ComplexField, SolveReport), SolverError> {
    problem.validate()?;
    assert!(n_max >= 1);
    let v = problem.effective_potential()?;
    let u0 = green_apply(&problem.source, problem.kappa_sq, problem.epsilon)?;
    let mut u = u0.clone();
    let mut norms = Vec::with_capacity(n_max);
    let mut abs_norms = Vec::with_capacity(n_max);
    for it in 0..n_max {
        let vu = pointwise_mul(&v, &u);
        let gvu = green_apply(&vu, problem.kappa_sq, problem.epsilon)?;
        let mut next = u0.clone();
        let mut diff_sq = 0.0;
        let mut ref_sq = 0.0;
        for ((n, g), old) in next.data.iter_mut().zip(&gvu.data).zip(&u.data) {
            *n += g;
            diff_sq += (*n - old).norm_sqr();
            ref_sq += old.norm_sqr();
        }
        let rel = if ref_sq > 0.0 {
            (diff_sq / ref_sq).sqrt()
        } else {
            diff_sq.sqrt()
        };
        if !rel.is_finite() {
            return Err(SolverError::Diverged {
                iteration: it,
                update_norms: norms,
            });
        }
        norms.push(rel);
        abs_norms.push(diff_sq.sqrt());
        u = next;
    }
    let final_norm = *norms.last().unwrap();
    Ok((
        u,
        SolveReport {
            iterations: n_max,
            final_update_norm: final_norm,
            converged: false,
            update_norms: norms,
            absolute_update_norms: abs_norms,
        },
    ))
}

/// Convergent Born series solve to relative update tolerance `tol`.
pub fn cbs_solve(
    problem: &HelmholtzProblem,
    tol: f64,
    n_max: usize,
) -> Result<(ComplexField, SolveReport), SolverError> {
    cbs_solve_from(problem, tol, n_max, None)
}

/// CBS with an optional warm-start iterate. The fixed point does not depend
/// on the initial iterate, so warm starts only shorten the iteration.
pub fn cbs_solve_from(
    problem: &HelmholtzProblem,
    tol: f64,
    n_max: usize,
    init: Option<&ComplexField>,
) -> Result<(ComplexField, SolveReport), SolverError> {
    problem.validate()?;
    assert!(tol > 0.0);
    let v = problem.effective_potential()?;
    let q = cbs_preconditioner(&ScatteringPotential {
        v: v.clone(),
        epsilon: problem.epsilon,
    });
    // u0 = (1-q) G rho
    let g_rho = green_apply(&problem.source, problem.kappa_sq, problem.epsilon)?;
    let grid = problem.c.grid;
    let n = grid.len();
    let mut u0 = ComplexField::zeros(grid);
    for i in 0..n {
        u0.data[i] = (Complex64::new(1.0, 0.0) - q.data[i]) * g_rho.data[i];
    }

    let source_norm = problem.source.norm_l2();
    if source_norm == 0.0 {
        return Ok((
            ComplexField::zeros(grid),
            SolveReport {
                iterations: 1,
                final_update_norm: 0.0,
                converged: true,
                update_norms: vec![0.0],
                absolute_update_norms: vec![0.0],
            },
        ));
    }

    let mut u = match init {
        Some(f) => {
            f.check_same_grid(&u0).map_err(SolverError::Structural)?;
            f.clone()
        }
        None => u0.clone(),
    };
    let mut norms = Vec::new();
    let mut abs_norms = Vec::new();
    let mut vu = ComplexField::zeros(grid);
    for it in 0..n_max {
        for i in 0..n {
            vu.data[i] = v.data[i] * u.data[i];
        }
        let gvu = green_apply(&vu, problem.kappa_sq, problem.epsilon)?;
        let mut diff_sq = 0.0;
        let mut ref_sq = 0.0;
        for i in 0..n {
            let next = u0.data[i]
                + (Complex64::new(1.0, 0.0) - q.data[i]) * gvu.data[i]
                + q.data[i] * u.data[i];
            diff_sq += (next - u.data[i]).norm_sqr();
            ref_sq += next.norm_sqr();
            u.data[i] = next;
        }
        let rel = if ref_sq > 0.0 {
            (diff_sq / ref_sq).sqrt()
        } else {
            0.0
        };
        if !rel.is_finite() {
            return Err(SolverError::Diverged {
                iteration: it,
                update_norms: norms,
            });
        }
        norms.push(rel);
        abs_norms.push(diff_sq.sqrt());
        if rel <= tol {
            return Ok((
                u,
                SolveReport {
                    iterations: it + 1,
                    final_update_norm: rel,
                    converged: true,
                    update_norms: norms,
                    absolute_update_norms: abs_norms,
                },
            ));
        }
    }
    let final_norm = norms.last().copied().unwrap_or(f64::INFINITY);
    Err(SolverError::NotConverged {
        n_max,
        final_norm,
    })
}

/// Relative Helmholtz residual ‖[∇² + (ω/c)²]u + ρ‖ / ‖ρ‖, Laplacian
/// evaluated spectrally on the same grid as the solve.
pub fn residual(c: &RealField, u: &ComplexField, source: &ComplexField, omega: f64) -> f64 {
    let sc = SpectralCoords::new(u.grid);
    let mut ft = fft2(u);
    for (v, &p2) in ft.data.iter_mut().zip(&sc.p_squared) {
        *v *= Complex64::new(-p2, 0.0);
    }
    let lap = ifft2(&ft);
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..u.data.len() {
        let k = omega / c.data[i];
        let r = lap.data[i] + Complex64::new(k * k, 0.0) * u.data[i] + source.data[i];
        num += r.norm_sqr();
        den += source.data[i].norm_sqr();
    }
    if den == 0.0 {
        return num.sqrt();
    }
    (num / den).sqrt()
}

fn pointwise_mul(a: &ComplexField, b: &ComplexField) -> ComplexField {
    ComplexField {
        grid: a.grid,
        data: a
            .data
            .iter()
            .zip(&b.data)
            .map(|(x, y)| x * y)
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid2D;
    use std::f64::consts::PI;

    fn homogeneous_problem(n: usize, c0: f64, ppw: f64) -> HelmholtzProblem {
        let dx = 1e-3;
        let grid = Grid2D::centered(n, n, dx).unwrap();
        let lambda = ppw * dx;
        let omega = 2.0 * PI * c0 / lambda;
        let c = RealField::constant(grid, c0);
        let (kappa_sq, eps) = choose_kappa_eps(&c, omega, 1.05);
        let mut source = ComplexField::zeros(grid);
        let mid = grid.index(n / 2, n / 2);
        source.data[mid] = Complex64::new(1.0 / (dx * dx), 0.0);
        HelmholtzProblem {
            c,
            source,
            omega,
            kappa_sq,
            epsilon: eps,
        }
    }

    #[test]
    fn potential_homogeneous_cancels_to_pure_damping() {
        let grid = Grid2D::new(16, 16, 1e-3).unwrap();
        let c0 = 1500.0;
        let omega = 2.0 * PI * 0.5e6;
        let kappa_sq = (omega / c0).powi(2);
        let eps = 1e-3 * kappa_sq;
        let c = RealField::constant(grid, c0);
        let pot = scattering_potential(&c, omega, kappa_sq, eps).unwrap();
        for v in &pot.v.data {
            assert!(v.re.abs() < 1e-9 * kappa_sq);
            assert_eq!(v.im, -eps);
        }
        // q = 1 - i v / eps = 1 - i(-i eps)/eps = 0 for the pure-damping potential
        let q = cbs_preconditioner(&pot);
        for qv in &q.data {
            assert!(qv.norm() < 1e-9);
        }
    }

    #[test]
    fn potential_matches_hand_evaluation_on_two_speed_map() {
        let grid = Grid2D::new(8, 8, 1e-3).unwrap();
        let omega = 2.0 * PI * 0.4e6;
        let kappa_sq = 3.0e6;
        let eps = 2.0e6;
        let c = RealField::from_fn(grid, |ix, _| if ix < 4 { 1500.0 } else { 3000.0 });
        let pot = scattering_potential(&c, omega, kappa_sq, eps).unwrap();
        let expect_low = (omega / 1500.0).powi(2) - kappa_sq;
        let expect_high = (omega / 3000.0).powi(2) - kappa_sq;
        assert!((pot.v.get(0, 0).re - expect_low).abs() < 1e-6 * expect_low.abs());
        assert!((pot.v.get(7, 0).re - expect_high).abs() < 1e-6 * expect_high.abs());
        assert_eq!(pot.v.get(0, 0).im, -eps);
    }

    #[test]
    fn kappa_eps_homogeneous_hits_floor() {
        let grid = Grid2D::new(16, 16, 1e-3).unwrap();
        let c0 = 1500.0;
        let omega = 2.0 * PI * 0.25e6;
        let c = RealField::constant(grid, c0);
        let (kappa_sq, eps) = choose_kappa_eps(&c, omega, 1.05);
        assert!((kappa_sq - (omega / c0).powi(2)).abs() < 1e-9 * kappa_sq);
        assert!((eps - 1e-3 * kappa_sq).abs() < 1e-12 * kappa_sq);
    }

    #[test]
    fn kappa_eps_two_speed_midpoint_and_margin() {
        let grid = Grid2D::new(16, 16, 1e-3).unwrap();
        let omega = 2.0 * PI * 0.3e6;
        let c = RealField::from_fn(grid, |ix, _| if ix % 2 == 0 { 1400.0 } else { 1600.0 });
        let (kappa_sq, eps) = choose_kappa_eps(&c, omega, 1.05);
        let k_lo = (omega / 1600.0).powi(2);
        let k_hi = (omega / 1400.0).powi(2);
        assert!((kappa_sq - 0.5 * (k_lo + k_hi)).abs() < 1e-12 * kappa_sq);
        assert!((eps - 1.05 * 0.5 * (k_hi - k_lo)).abs() < 1e-12 * eps);
        // convergence headroom: |Re v| <= eps / margin, |v| <= eps * sqrt(2)
        let pot = scattering_potential(&c, omega, kappa_sq, eps).unwrap();
        for v in &pot.v.data {
            assert!(v.re.abs() <= eps / 1.05 + 1e-9 * eps);
            assert!(v.norm() <= eps * 2f64.sqrt() * (1.0 + 1e-12));
        }
    }

    #[test]
    fn green_of_zero_is_zero_and_needs_epsilon() {
        let grid = Grid2D::new(16, 16, 1e-3).unwrap();
        let f = ComplexField::zeros(grid);
        let g = green_apply(&f, 1.0, 1e-3).unwrap();
        assert!(g.norm_l2() == 0.0);
        assert!(green_apply(&f, 1.0, 0.0).is_err());
    }

    #[test]
    fn green_scales_plane_wave_by_symbol() {
        let n = 32;
        let dx = 0.5e-3;
        let grid = Grid2D::new(n, n, dx).unwrap();
        // grid-commensurate wavevector: 3 periods in x, 2 in y
        let kx = 2.0 * PI * 3.0 / (n as f64 * dx);
        let ky = 2.0 * PI * 2.0 / (n as f64 * dx);
        let f = ComplexField::from_fn(grid, |ix, iy| {
            let phase = kx * ix as f64 * dx + ky * iy as f64 * dx;
            Complex64::new(0.0, phase).exp()
        });
        let kappa_sq = 1.7e6;
        let eps = 4.0e5;
        let g = green_apply(&f, kappa_sq, eps).unwrap();
        let symbol = Complex64::new(kx * kx + ky * ky - kappa_sq, -eps);
        for (gv, fv) in g.data.iter().zip(&f.data) {
            let expect = fv / symbol;
            assert!((gv - expect).norm() < 1e-9 * expect.norm());
        }
    }

    #[test]
    fn cbs_zero_source_converges_immediately() {
        let p = HelmholtzProblem {
            source: ComplexField::zeros(Grid2D::new(16, 16, 1e-3).unwrap()),
            ..homogeneous_problem(16, 1500.0, 8.0)
        };
        let (u, report) = cbs_solve(&p, 1e-6, 100).unwrap();
        assert!(u.norm_l2() == 0.0);
        assert!(report.converged);
        assert_eq!(report.iterations, 1);
    }

    #[test]
    fn cbs_satisfies_discrete_residual() {
        // non-commensurate wavelength: keeps lattice modes off the p² = κ²
        // resonance shell of the periodic operator
        let p = homogeneous_problem(48, 1500.0, 7.3);
        let (u, report) = cbs_solve(&p, 1e-8, 2000).unwrap();
        assert!(report.converged);
        let r = residual(&p.c, &u, &p.source, p.omega);
        assert!(r < 1e-6, "residual {r} too large");
    }

    #[test]
    fn residual_normalization_zero_field() {
        let p = homogeneous_problem(16, 1500.0, 8.0);
        let u = ComplexField::zeros(p.c.grid);
        let r = residual(&p.c, &u, &p.source, p.omega);
        assert!((r - 1.0).abs() < 1e-12);
    }

    #[test]
    fn born_weak_potential_stays_near_first_term() {
        // epsilon-only potential: c == c0 and kappa matched, so v = -i eps and
        // the series correction is O(eps/|G spectrum|), small after 3 terms.
        let p = homogeneous_problem(32, 1500.0, 7.3);
        let (u, _) = born_solve(&p, 3).unwrap();
        let u0 = green_apply(&p.source, p.kappa_sq, p.epsilon).unwrap();
        let mut diff = 0.0;
        let mut norm = 0.0;
        for (a, b) in u.data.iter().zip(&u0.data) {
            diff += (a - b).norm_sqr();
            norm += b.norm_sqr();
        }
        assert!((diff / norm).sqrt() < 0.05);
    }

    #[test]
    fn cbs_linear_in_source() {
        let base = homogeneous_problem(24, 1500.0, 8.0);
        let grid = base.c.grid;
        let mut s1 = ComplexField::zeros(grid);
        s1.data[grid.index(8, 9)] = Complex64::new(1.0, 0.5);
        let mut s2 = ComplexField::zeros(grid);
        s2.data[grid.index(15, 13)] = Complex64::new(-0.3, 1.0);
        let alpha = Complex64::new(1.7, -0.2);
        let beta = Complex64::new(0.4, 0.9);

        let solve = |src: ComplexField| {
            let p = HelmholtzProblem {
                source: src,
                ..base.clone()
            };
            // fixed iteration count for strict linearity
            let pot =
                scattering_potential(&p.c, p.omega, p.kappa_sq, p.epsilon).unwrap();
            let q = cbs_preconditioner(&pot);
            let g_rho = green_apply(&p.source, p.kappa_sq, p.epsilon).unwrap();
            let mut u = ComplexField::zeros(grid);
            let mut u0 = ComplexField::zeros(grid);
            for i in 0..grid.len() {
                u0.data[i] = (Complex64::new(1.0, 0.0) - q.data[i]) * g_rho.data[i];
            }
            u.data.copy_from_slice(&u0.data);
            for _ in 0..40 {
                let vu = pointwise_mul(&pot.v, &u);
                let gvu = green_apply(&vu, p.kappa_sq, p.epsilon).unwrap();
                for i in 0..grid.len() {
                    u.data[i] = u0.data[i]
                        + (Complex64::new(1.0, 0.0) - q.data[i]) * gvu.data[i]
                        + q.data[i] * u.data[i];
                }
            }
            u
        };

        let mut combo = ComplexField::zeros(grid);
        for i in 0..grid.len() {
            combo.data[i] = alpha * s1.data[i] + beta * s2.data[i];
        }
        let u_combo = solve(combo);
        let u1 = solve(s1);
        let u2 = solve(s2);
        let mut diff = 0.0;
        let mut norm = 0.0;
        for i in 0..grid.len() {
            let lin = alpha * u1.data[i] + beta * u2.data[i];
            diff += (u_combo.data[i] - lin).norm_sqr();
            norm += lin.norm_sqr();
        }
        assert!((diff / norm).sqrt() < 1e-8);
    }
}
