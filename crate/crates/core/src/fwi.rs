//! Adjoint-state full waveform inversion with frequency marching.
//!
//! Per stage (one frequency), the misfit J = Σ_k ‖s_k·u_k(x_f) − y_k‖² is
//! minimized over the sound-speed map with NCG. The adjoint field of source
//! k solves the same Helmholtz equation driven by conjugated, source-scaled
//! residuals deposited at the receiver nodes; the model gradient is
//! −2ω²·dx²·Re(λ_k u_k)/c³ accumulated in ascending source order. When every
//! ring element transmits, adjoint fields are linear combinations of the
//! forward fields (source–receiver reciprocity) and cost no extra solves.
//!
//! The conjugation bookkeeping is pinned by the directional finite-
//! difference identity ⟨∇J, δc⟩ = dJ(c + t·δc)/dt, which the test suite
//! checks against central differences.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::acquisition::{point_source_field, ArrayGeometry, MeasurementSet};
use crate::error::{SolverError, StructuralError};
use crate::grid::{ComplexField, RealField};
use crate::helmholtz::{solve_padded, SolverConfig};
use crate::optim::{ncg_step, LineSearchConfig, NcgMemory};
use crate::smooth::gaussian_blur;

/// Forward-modeling contract: wavefield on the imaging grid from a sound
/// speed map and a source at one angular frequency. Implementations must be
/// deterministic and linear in the source; this is the substitution point
/// for a learned surrogate.
pub trait ForwardOperator: Sync {
    fn solve(
        &self,
        c: &RealField,
        source: &ComplexField,
        omega: f64,
    ) -> Result<ComplexField, SolverError>;

    /// Like `solve`, with an optional previous wavefield as an iteration
    /// hint. The result must not depend on the hint beyond solver tolerance.
    fn solve_hinted(
        &self,
        c: &RealField,
        source: &ComplexField,
        omega: f64,
        hint: Option<&ComplexField>,
    ) -> Result<ComplexField, SolverError> {
        let _ = hint;
        self.solve(c, source, omega)
    }
}

/// Convergent Born series forward operator (pads, solves, crops).
#[derive(Debug, Clone)]
pub struct CbsOperator {
    pub cfg: SolverConfig,
}

impl CbsOperator {
    pub fn new(cfg: SolverConfig) -> Self {
        CbsOperator { cfg }
    }
}

impl ForwardOperator for CbsOperator {
    fn solve(
        &self,
        c: &RealField,
        source: &ComplexField,
        omega: f64,
    ) -> Result<ComplexField, SolverError> {
        Ok(solve_padded(c, source, omega, &self.cfg, None)?.field)
    }

    fn solve_hinted(
        &self,
        c: &RealField,
        source: &ComplexField,
        omega: f64,
        hint: Option<&ComplexField>,
    ) -> Result<ComplexField, SolverError> {
        let padded_hint = hint.map(|h| h.pad_extend(self.cfg.pad, crate::grid::PadMode::Zero));
        Ok(solve_padded(c, source, omega, &self.cfg, padded_hint.as_ref())?.field)
    }
}

/// Data misfit Σ_k ‖y_sim,k − y_obs,k‖² over receiver vectors.
pub fn misfit(y_sim: &[Vec<Complex64>], y_obs: &[&[Complex64]]) -> Result<f64, StructuralError> {
    if y_sim.len() != y_obs.len() {
        return Err(StructuralError::InvalidParameter(format!(
            "misfit shape mismatch: {} vs {} sources",
            y_sim.len(),
            y_obs.len()
        )));
    }
    let mut j = 0.0;
    for (sim, obs) in y_sim.iter().zip(y_obs) {
        if sim.len() != obs.len() {
            return Err(StructuralError::InvalidParameter(format!(
                "misfit shape mismatch: {} vs {} receivers",
                sim.len(),
                obs.len()
            )));
        }
        for (s, o) in sim.iter().zip(obs.iter()) {
            j += (s - o).norm_sqr();
        }
    }
    Ok(j)
}

/// Least-squares complex source scale ρ̂ = Σᵢ yᵢ·conj(uᵢ) / Σᵢ |uᵢ|²,
/// the minimizer of ‖y − s·u‖².
pub fn estimate_source_scale(
    u_at_receivers: &[Complex64],
    y: &[Complex64],
) -> Result<Complex64, StructuralError> {
    if u_at_receivers.len() != y.len() {
        return Err(StructuralError::InvalidParameter(
            "source-scale shape mismatch".into(),
        ));
    }
    let den: f64 = u_at_receivers.iter().map(|u| u.norm_sqr()).sum();
    if den == 0.0 {
        return Err(StructuralError::InvalidParameter(
            "source-scale regression is singular: simulated receiver data all zero".into(),
        ));
    }
    let num: Complex64 = y
        .iter()
        .zip(u_at_receivers)
        .map(|(yi, ui)| yi * ui.conj())
        .sum();
    Ok(num / den)
}

/// Adjoint source for one transmitter: discrete deltas at the receiver
/// nodes, weighted by twice the conjugated (source-scaled) residuals, with
/// the same 1/dx² delta discretization as the forward point sources.
pub fn adjoint_source(
    residual_weights: &[Complex64],
    geom: &ArrayGeometry,
    grid: crate::grid::Grid2D,
) -> Result<ComplexField, StructuralError> {
    if residual_weights.len() != geom.n_elements {
        return Err(StructuralError::InvalidParameter(
            "one residual weight per element required".into(),
        ));
    }
    let mut f = ComplexField::zeros(grid);
    let inv_cell = 1.0 / (grid.dx * grid.dx);
    for (i, &(x, y)) in geom.positions.iter().enumerate() {
        let (ix, iy) = grid.nearest_node(x, y).ok_or_else(|| {
            StructuralError::GeometryOutOfGrid(format!("element {i} outside grid"))
        })?;
        f.data[grid.index(ix, iy)] += 2.0 * residual_weights[i] * inv_cell;
    }
    Ok(f)
}

/// Adjoint field as a linear combination of forward fields (reciprocity):
/// λ = Σᵢ 2·wᵢ·uᵢ, valid when transmitters and receivers share positions and
/// `fields[i]` is the unit-point-source field of element i.
pub fn adjoint_via_reciprocity(
    fields: &[ComplexField],
    residual_weights: &[Complex64],
) -> Result<ComplexField, StructuralError> {
    if fields.len() != residual_weights.len() {
        return Err(StructuralError::InvalidParameter(format!(
            "reciprocity needs one forward field per receiver: {} fields, {} weights",
            fields.len(),
            residual_weights.len()
        )));
    }
    let first = fields.first().ok_or_else(|| {
        StructuralError::InvalidParameter("reciprocity with no fields".into())
    })?;
    let mut lambda = ComplexField::zeros(first.grid);
    for (u, &w) in fields.iter().zip(residual_weights) {
        u.check_same_grid(&lambda)?;
        let w2 = 2.0 * w;
        for (l, ui) in lambda.data.iter_mut().zip(&u.data) {
            *l += w2 * ui;
        }
    }
    Ok(lambda)
}

/// Accumulate the model gradient of one source: −2ω²·dx²·Re(λ·u)/c³.
pub fn accumulate_gradient(
    grad: &mut RealField,
    c: &RealField,
    u: &ComplexField,
    lambda: &ComplexField,
    omega: f64,
) -> Result<(), StructuralError> {
    grad.check_same_grid(c)?;
    if c.data.iter().any(|&v| !(v > 0.0)) {
        return Err(StructuralError::InvalidParameter(
            "gradient needs positive sound speed".into(),
        ));
    }
    let scale = -2.0 * omega * omega * c.grid.dx * c.grid.dx;
    for i in 0..grad.data.len() {
        let prod = lambda.data[i] * u.data[i];
        grad.data[i] += scale * prod.re / c.data[i].powi(3);
    }
    Ok(())
}

/// Sum of per-source gradients in ascending source order.
pub fn gradient(
    c: &RealField,
    pairs: &[(&ComplexField, &ComplexField)],
    omega: f64,
) -> Result<RealField, StructuralError> {
    let mut g = RealField::zeros(c.grid);
    for (u, lambda) in pairs {
        accumulate_gradient(&mut g, c, u, lambda, omega)?;
    }
    Ok(g)
}

/// FWI configuration: ascending frequency schedule and per-stage settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FwiConfig {
    /// Frequency schedule in Hz, strictly ascending within a round.
    pub schedule: Vec<f64>,
    #[serde(default = "default_iters")]
    pub iters_per_stage: usize,
    /// Gaussian blur sigma (grid cells) applied to each stage's input model.
    #[serde(default = "default_blur")]
    pub blur_sigma: f64,
    /// Number of passes over the schedule.
    #[serde(default = "default_rounds")]
    pub rounds: usize,
    #[serde(default = "default_c_min")]
    pub c_min: f64,
    #[serde(default = "default_c_max")]
    pub c_max: f64,
    #[serde(default = "default_true")]
    pub source_estimation: bool,
    #[serde(default)]
    pub line_search: LineSearchConfig,
}

fn default_iters() -> usize {
    20
}
fn default_blur() -> f64 {
    2.0
}
fn default_rounds() -> usize {
    1
}
fn default_c_min() -> f64 {
    1300.0
}
fn default_c_max() -> f64 {
    3500.0
}
fn default_true() -> bool {
    true
}

impl FwiConfig {
    pub fn validate(&self) -> Result<(), StructuralError> {
        if self.schedule.is_empty() {
            return Err(StructuralError::InvalidParameter(
                "FWI schedule is empty".into(),
            ));
        }
        if self.schedule.windows(2).any(|w| w[1] <= w[0]) {
            return Err(StructuralError::InvalidParameter(
                "FWI schedule must be strictly ascending".into(),
            ));
        }
        if self.blur_sigma < 0.0 {
            return Err(StructuralError::InvalidParameter(
                "blur sigma must be non-negative".into(),
            ));
        }
        if self.rounds == 0 || self.iters_per_stage == 0 {
            return Err(StructuralError::InvalidParameter(
                "rounds and iters_per_stage must be at least 1".into(),
            ));
        }
        if !(self.c_min > 0.0) || self.c_max <= self.c_min {
            return Err(StructuralError::InvalidParameter(
                "model bounds must satisfy 0 < c_min < c_max".into(),
            ));
        }
        Ok(())
    }
}

/// One simulated stage evaluation: receiver rows, fitted scales, misfit.
struct StageEval {
    fields: Vec<ComplexField>,
    scaled_rx: Vec<Vec<Complex64>>,
    scales: Vec<Complex64>,
    misfit: f64,
}

/// Forward-model every source of one stage and fit per-source scales.
fn evaluate_stage(
    c: &RealField,
    geom: &ArrayGeometry,
    y_rows: &[&[Complex64]],
    omega: f64,
    fwd: &dyn ForwardOperator,
    source_estimation: bool,
    hints: Option<&[ComplexField]>,
    keep_fields: bool,
) -> Result<StageEval, SolverError> {
    let n_src = geom.source_indices.len();
    let results: Vec<Result<(ComplexField, Vec<Complex64>), SolverError>> = (0..n_src)
        .into_par_iter()
        .map(|ki| {
            let elem = geom.source_indices[ki];
            let source = point_source_field(geom, elem, c.grid)?;
            let hint = hints.map(|h| &h[ki]);
            let u = fwd.solve_hinted(c, &source, omega, hint).map_err(|e| {
                SolverError::AtTask {
                    frequency_hz: omega / std::f64::consts::TAU,
                    source_index: elem,
                    source_err: Box::new(e),
                }
            })?;
            let rx: Vec<Complex64> = geom
                .positions
                .iter()
                .map(|&(x, y)| u.sample_bilinear(x, y))
                .collect();
            Ok((u, rx))
        })
        .collect();

    let mut fields = Vec::with_capacity(if keep_fields { n_src } else { 0 });
    let mut scaled_rx = Vec::with_capacity(n_src);
    let mut scales = Vec::with_capacity(n_src);
    let mut j = 0.0;
    for (ki, res) in results.into_iter().enumerate() {
        let (u, rx) = res?;
        let s = if source_estimation {
            estimate_source_scale(&rx, y_rows[ki])?
        } else {
            Complex64::new(1.0, 0.0)
        };
        let row: Vec<Complex64> = rx.iter().map(|&v| s * v).collect();
        for (sim, obs) in row.iter().zip(y_rows[ki]) {
            j += (sim - obs).norm_sqr();
        }
        scales.push(s);
        scaled_rx.push(row);
        if keep_fields {
            fields.push(u);
        }
    }
    Ok(StageEval {
        fields,
        scaled_rx,
        scales,
        misfit: j,
    })
}

/// Misfit and gradient of one stage objective at model `c`. Building block
/// of the march; exposed for gradient verification.
pub fn stage_objective(
    c: &RealField,
    geom: &ArrayGeometry,
    y_rows: &[&[Complex64]],
    omega: f64,
    fwd: &dyn ForwardOperator,
    source_estimation: bool,
) -> Result<(f64, RealField), SolverError> {
    let eval = evaluate_stage(c, geom, y_rows, omega, fwd, source_estimation, None, true)?;
    let n_src = geom.source_indices.len();
    // residual weights w_i = s·conj(s·u_i − y_i) per source
    let weight_rows: Vec<Vec<Complex64>> = (0..n_src)
        .map(|ki| {
            let s = eval.scales[ki];
            eval.scaled_rx[ki]
                .iter()
                .zip(y_rows[ki])
                .map(|(sim, obs)| s * (sim - obs).conj())
                .collect()
        })
        .collect();

    let reciprocity_ok = geom.source_indices.len() == geom.n_elements
        && geom.source_indices.iter().enumerate().all(|(i, &e)| i == e);

    let lambdas: Vec<ComplexField> = if reciprocity_ok {
        (0..n_src)
            .into_par_iter()
            .map(|ki| adjoint_via_reciprocity(&eval.fields, &weight_rows[ki]).map_err(SolverError::from))
            .collect::<Result<_, _>>()?
    } else {
        (0..n_src)
            .into_par_iter()
            .map(|ki| {
                let rho_adj = adjoint_source(&weight_rows[ki], geom, c.grid)?;
                fwd.solve(c, &rho_adj, omega).map_err(|e| SolverError::AtTask {
                    frequency_hz: omega / std::f64::consts::TAU,
                    source_index: geom.source_indices[ki],
                    source_err: Box::new(e),
                })
            })
            .collect::<Result<_, _>>()?
    };

    let mut g = RealField::zeros(c.grid);
    for ki in 0..n_src {
        accumulate_gradient(&mut g, c, &eval.fields[ki], &lambdas[ki], omega)?;
    }
    Ok((eval.misfit, g))
}

/// Misfit of one stage objective at model `c` (forward solves only).
pub fn stage_misfit(
    c: &RealField,
    geom: &ArrayGeometry,
    y_rows: &[&[Complex64]],
    omega: f64,
    fwd: &dyn ForwardOperator,
    source_estimation: bool,
) -> Result<f64, SolverError> {
    Ok(evaluate_stage(c, geom, y_rows, omega, fwd, source_estimation, None, false)?.misfit)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageReport {
    pub round: usize,
    pub frequency_hz: f64,
    pub initial_misfit: f64,
    pub final_misfit: f64,
    pub misfit_history: Vec<f64>,
    pub iterations_run: usize,
    pub skipped: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aborted: Option<String>,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FwiReport {
    pub stages: Vec<StageReport>,
}

/// Hierarchical frequency marching: ascending-frequency stages (optionally
/// several rounds), each NCG-optimized from the Gaussian-blurred previous
/// model, with misfit/gradient normalization reset per stage.
pub fn frequency_march(
    y_obs: &MeasurementSet,
    c_init: &RealField,
    cfg: &FwiConfig,
    fwd: &dyn ForwardOperator,
) -> Result<(RealField, FwiReport), SolverError> {
    cfg.validate()?;
    let geom = &y_obs.geometry;
    // map schedule entries to measurement frequency indices
    let freq_index: Vec<usize> = cfg
        .schedule
        .iter()
        .map(|&f| {
            y_obs
                .frequencies
                .iter()
                .position(|&g| (g - f).abs() <= 1e-9 * f.max(1.0))
                .ok_or_else(|| {
                    StructuralError::InvalidParameter(format!(
                        "schedule frequency {f} Hz not present in observations"
                    ))
                })
        })
        .collect::<Result<_, _>>()?;

    let mut c = c_init.clone();
    let mut stages = Vec::new();
    let clamp = |m: &mut Vec<f64>| {
        for v in m.iter_mut() {
            *v = v.clamp(cfg.c_min, cfg.c_max);
        }
    };
    let mut first_stage = true;

    for round in 0..cfg.rounds {
        for (si, &fi) in freq_index.iter().enumerate() {
            let f_hz = y_obs.frequencies[fi];
            let omega = std::f64::consts::TAU * f_hz;
            let y_rows: Vec<&[Complex64]> = (0..geom.source_indices.len())
                .map(|ki| y_obs.receiver_row(fi, ki))
                .collect();
            let y_norm_sq: f64 = y_rows
                .iter()
                .flat_map(|r| r.iter())
                .map(|v| v.norm_sqr())
                .sum();
            let t0 = std::time::Instant::now();

            // converged-fixed-point guard: a stage whose entry model already
            // fits the data is recorded and left untouched (no blur)
            let entry_misfit =
                stage_misfit(&c, geom, &y_rows, omega, fwd, cfg.source_estimation)?;
            if entry_misfit <= 1e-12 * y_norm_sq {
                stages.push(StageReport {
                    round,
                    frequency_hz: f_hz,
                    initial_misfit: entry_misfit,
                    final_misfit: entry_misfit,
                    misfit_history: vec![entry_misfit],
                    iterations_run: 0,
                    skipped: true,
                    aborted: None,
                    wall_seconds: t0.elapsed().as_secs_f64(),
                });
                first_stage = false;
                continue;
            }

            // smooth the previous sub-problem's output before optimizing
            let mut c_stage = if first_stage {
                c.clone()
            } else {
                gaussian_blur(&c, cfg.blur_sigma)
            };
            first_stage = false;

            let stage_result = run_stage(
                &mut c_stage,
                geom,
                &y_rows,
                omega,
                fwd,
                cfg,
                &clamp,
            );
            match stage_result {
                Ok((history, iterations_run)) => {
                    let initial_misfit = *history.first().unwrap_or(&entry_misfit);
                    let final_misfit = *history.last().unwrap_or(&entry_misfit);
                    stages.push(StageReport {
                        round,
                        frequency_hz: f_hz,
                        initial_misfit,
                        final_misfit,
                        misfit_history: history,
                        iterations_run,
                        skipped: false,
                        aborted: None,
                        wall_seconds: t0.elapsed().as_secs_f64(),
                    });
                    c = c_stage;
                }
                Err(e) => {
                    // diverged stage: keep the previous stage's model
                    stages.push(StageReport {
                        round,
                        frequency_hz: f_hz,
                        initial_misfit: entry_misfit,
                        final_misfit: entry_misfit,
                        misfit_history: vec![entry_misfit],
                        iterations_run: 0,
                        skipped: false,
                        aborted: Some(e.to_string()),
                        wall_seconds: t0.elapsed().as_secs_f64(),
                    });
                    log::warn!(
                        "stage {si} (round {round}, {f_hz} Hz) aborted: {e}; keeping previous model"
                    );
                    return Ok((c, FwiReport { stages }));
                }
            }
        }
    }
    Ok((c, FwiReport { stages }))
}

fn run_stage(
    c_stage: &mut RealField,
    geom: &ArrayGeometry,
    y_rows: &[&[Complex64]],
    omega: f64,
    fwd: &dyn ForwardOperator,
    cfg: &FwiConfig,
    clamp: &impl Fn(&mut Vec<f64>),
) -> Result<(Vec<f64>, usize), SolverError> {
    let mut memory = NcgMemory::default();
    let (j_init, g_init) =
        stage_objective(c_stage, geom, y_rows, omega, fwd, cfg.source_estimation)?;
    let g0 = g_init.norm_l2();
    if g0 == 0.0 || j_init == 0.0 {
        return Ok((vec![j_init], 0));
    }
    let j0 = j_init;
    let mut history = vec![j_init];
    let mut j_now = j_init;
    let mut g_now = g_init;
    let mut iterations_run = 0;

    for _ in 0..cfg.iters_per_stage {
        let mut x = std::mem::take(&mut c_stage.data);
        let eval_err: std::cell::RefCell<Option<SolverError>> = std::cell::RefCell::new(None);
        let outcome = ncg_step(
            &mut x,
            j_now,
            &g_now.data,
            j0,
            g0,
            &mut memory,
            &cfg.line_search,
            |trial| {
                let trial_field = RealField {
                    grid: c_stage.grid,
                    data: trial.to_vec(),
                };
                match stage_misfit(&trial_field, geom, y_rows, omega, fwd, cfg.source_estimation)
                {
                    Ok(j) => j,
                    Err(e) => {
                        *eval_err.borrow_mut() = Some(e);
                        f64::INFINITY
                    }
                }
            },
            clamp,
        );
        c_stage.data = x;
        if let Some(e) = eval_err.into_inner() {
            return Err(e);
        }
        iterations_run += 1;
        if !outcome.accepted {
            break;
        }
        j_now = outcome.objective;
        history.push(j_now);
        if iterations_run < cfg.iters_per_stage {
            let (j_check, g) =
                stage_objective(c_stage, geom, y_rows, omega, fwd, cfg.source_estimation)?;
            j_now = j_check;
            g_now = g;
            if g_now.norm_l2() == 0.0 {
                break;
            }
        }
    }
    Ok((history, iterations_run))
}
