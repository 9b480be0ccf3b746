//! Ring transducer arrays, point sources, and measurement simulation.
//!
//! Every element of the ring acts as a receiver; a subsampled set acts as
//! sources. One simulated measurement set holds the complex receiver values
//! y[f][k][i] for every (frequency, source, element) triple, ordered
//! frequency-major then by ascending source index, which keeps batch runs
//! bit-reproducible regardless of worker count.

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::container::{Container, Payload};
use crate::error::{ContainerError, SolverError, StructuralError};
use crate::grid::{ComplexField, Grid2D, RealField};
use crate::helmholtz::{solve_padded, SolverConfig};

/// Transducer ring: uniformly spaced elements, subsampled source schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    pub n_elements: usize,
    /// Ring diameter in meters.
    pub diameter: f64,
    /// Ring center in meters.
    pub center: (f64, f64),
    /// Element positions, element j at angle 2πj/n.
    pub positions: Vec<(f64, f64)>,
    /// Indices of elements that act as sources.
    pub source_indices: Vec<usize>,
}

/// Uniform ring of `n_elements` with every `source_stride`-th element
/// transmitting.
pub fn ring_array(
    n_elements: usize,
    diameter: f64,
    center: (f64, f64),
    source_stride: usize,
) -> Result<ArrayGeometry, StructuralError> {
    if n_elements < 3 {
        return Err(StructuralError::InvalidParameter(format!(
            "ring needs at least 3 elements, got {n_elements}"
        )));
    }
    if source_stride < 1 {
        return Err(StructuralError::InvalidParameter(
            "source stride must be at least 1".into(),
        ));
    }
    if !(diameter > 0.0) {
        return Err(StructuralError::InvalidParameter(format!(
            "ring diameter must be positive, got {diameter}"
        )));
    }
    let r = 0.5 * diameter;
    let positions = (0..n_elements)
        .map(|j| {
            let th = std::f64::consts::TAU * j as f64 / n_elements as f64;
            (center.0 + r * th.cos(), center.1 + r * th.sin())
        })
        .collect();
    let source_indices = (0..n_elements).step_by(source_stride).collect();
    Ok(ArrayGeometry {
        n_elements,
        diameter,
        center,
        positions,
        source_indices,
    })
}

impl ArrayGeometry {
    /// Check that every element sits inside the grid with at least
    /// `margin_cells` cells to the boundary (geometry binding).
    pub fn validate_on_grid(
        &self,
        grid: &Grid2D,
        margin_cells: usize,
    ) -> Result<(), StructuralError> {
        let m = margin_cells as f64;
        for (j, &(x, y)) in self.positions.iter().enumerate() {
            let (fx, fy) = grid.frac_coords(x, y);
            if fx < m
                || fy < m
                || fx > (grid.nx - 1) as f64 - m
                || fy > (grid.ny - 1) as f64 - m
            {
                return Err(StructuralError::GeometryOutOfGrid(format!(
                    "element {j} at ({x:.4}, {y:.4}) m is within {margin_cells} cells of the grid edge"
                )));
            }
        }
        Ok(())
    }
}

/// Discrete unit point source for one element: amplitude 1/dx² at the
/// nearest grid node, zero elsewhere (unit mass under Σ·dx²).
pub fn point_source_field(
    geom: &ArrayGeometry,
    element_index: usize,
    grid: Grid2D,
) -> Result<ComplexField, StructuralError> {
    let (x, y) = *geom
        .positions
        .get(element_index)
        .ok_or_else(|| StructuralError::InvalidParameter(format!(
            "element index {element_index} out of range"
        )))?;
    let (ix, iy) = grid.nearest_node(x, y).ok_or_else(|| {
        StructuralError::GeometryOutOfGrid(format!(
            "element {element_index} at ({x:.4}, {y:.4}) m lies outside the grid"
        ))
    })?;
    let mut f = ComplexField::zeros(grid);
    f.data[grid.index(ix, iy)] = Complex64::new(1.0 / (grid.dx * grid.dx), 0.0);
    Ok(f)
}

/// Complex observations y[f][k][i] over (frequency, source, element).
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    pub frequencies: Vec<f64>,
    pub sources: Vec<usize>,
    pub geometry: ArrayGeometry,
    /// Row-major [n_freq][n_src][n_elements].
    pub data: Vec<Complex64>,
}

impl MeasurementSet {
    pub fn shape(&self) -> (usize, usize, usize) {
        (
            self.frequencies.len(),
            self.sources.len(),
            self.geometry.n_elements,
        )
    }

    #[inline]
    pub fn at(&self, fi: usize, ki: usize, ri: usize) -> Complex64 {
        let (_, ns, ne) = self.shape();
        self.data[(fi * ns + ki) * ne + ri]
    }

    /// Receiver vector for one (frequency, source) pair.
    pub fn receiver_row(&self, fi: usize, ki: usize) -> &[Complex64] {
        let (_, ns, ne) = self.shape();
        let start = (fi * ns + ki) * ne;
        &self.data[start..start + ne]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }
}

/// Sidecar metadata stored next to a measurement container.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSidecar {
    pub frequencies: Vec<f64>,
    pub sources: Vec<usize>,
    pub geometry: ArrayGeometry,
    pub solver: SolverConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phantom_sha256: Option<String>,
}

/// Simulate the receiver data for one sound-speed map over all configured
/// frequencies and sources. Deterministic ordering: frequency-major, then
/// ascending source index; tasks run in parallel on the ambient rayon pool.
pub fn simulate_measurements(
    c: &RealField,
    geom: &ArrayGeometry,
    frequencies: &[f64],
    solver_cfg: &SolverConfig,
) -> Result<MeasurementSet, SolverError> {
    solver_cfg.validate()?;
    geom.validate_on_grid(&c.grid, 2)?;
    let tasks: Vec<(usize, usize)> = (0..frequencies.len())
        .flat_map(|fi| (0..geom.source_indices.len()).map(move |ki| (fi, ki)))
        .collect();
    let rows: Vec<Result<Vec<Complex64>, SolverError>> = tasks
        .par_iter()
        .map(|&(fi, ki)| {
            let omega = std::f64::consts::TAU * frequencies[fi];
            let src_elem = geom.source_indices[ki];
            let source = point_source_field(geom, src_elem, c.grid)?;
            let solve = solve_padded(c, &source, omega, solver_cfg, None).map_err(|e| {
                SolverError::AtTask {
                    frequency_hz: frequencies[fi],
                    source_index: src_elem,
                    source_err: Box::new(e),
                }
            })?;
            Ok(geom
                .positions
                .iter()
                .map(|&(x, y)| solve.field.sample_bilinear(x, y))
                .collect())
        })
        .collect();
    let mut data = Vec::with_capacity(tasks.len() * geom.n_elements);
    for row in rows {
        data.extend(row?);
    }
    Ok(MeasurementSet {
        frequencies: frequencies.to_vec(),
        sources: geom.source_indices.clone(),
        geometry: geom.clone(),
        data,
    })
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(".json");
    PathBuf::from(s)
}

pub fn write_measurement_set(
    path: &Path,
    set: &MeasurementSet,
    solver: &SolverConfig,
    phantom_sha256: Option<String>,
) -> Result<(), ContainerError> {
    let (nf, ns, ne) = set.shape();
    Container {
        dims: vec![nf as u64, ns as u64, ne as u64],
        dx: 0.0,
        origin: (0.0, 0.0),
        payload: Payload::Complex64(
            set.data.iter().map(|v| [v.re as f32, v.im as f32]).collect(),
        ),
    }
    .write(path)?;
    let sidecar = MeasurementSidecar {
        frequencies: set.frequencies.clone(),
        sources: set.sources.clone(),
        geometry: set.geometry.clone(),
        solver: *solver,
        phantom_sha256,
    };
    let json = serde_json::to_vec_pretty(&sidecar).expect("sidecar serializes");
    std::fs::write(sidecar_path(path), json)?;
    Ok(())
}

pub fn read_measurement_set(path: &Path) -> Result<(MeasurementSet, MeasurementSidecar), ContainerError> {
    let c = Container::read(path)?;
    if c.dims.len() != 3 {
        return Err(ContainerError::NdimMismatch {
            expected: 3,
            found: c.dims.len() as u32,
        });
    }
    let data: Vec<Complex64> = match &c.payload {
        Payload::Complex64(v) => v
            .iter()
            .map(|&[re, im]| Complex64::new(re as f64, im as f64))
            .collect(),
        _ => {
            return Err(ContainerError::DtypeMismatch {
                expected: "complex64",
                found: "f32 real",
            })
        }
    };
    let sidecar: MeasurementSidecar =
        serde_json::from_slice(&std::fs::read(sidecar_path(path))?).map_err(|e| {
            ContainerError::Io(std::io::Error::new(std::io::ErrorKind::InvalidData, e))
        })?;
    let set = MeasurementSet {
        frequencies: sidecar.frequencies.clone(),
        sources: sidecar.sources.clone(),
        geometry: sidecar.geometry.clone(),
        data,
    };
    Ok((set, sidecar))
}

/// Outcome of one phantom in a harness run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub phantom: PathBuf,
    pub output: PathBuf,
    pub status: ManifestStatus,
    pub sha256: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ManifestStatus {
    Simulated,
    Resumed,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    let bytes = std::fs::read(path)?;
    let mut h = Sha256::new();
    h.update(&bytes);
    Ok(format!("{:x}", h.finalize()))
}

/// Simulate measurement sets for every sound-speed map in `phantom_dir`.
/// Complete outputs are kept (resume); partial or unreadable outputs are
/// re-simulated; unreadable phantoms are skipped with a logged error.
pub fn dataset_harness(
    phantom_dir: &Path,
    geom: &ArrayGeometry,
    frequencies: &[f64],
    solver_cfg: &SolverConfig,
    out_dir: &Path,
    workers: usize,
) -> Result<Manifest, SolverError> {
    std::fs::create_dir_all(out_dir).map_err(|e| {
        SolverError::Structural(StructuralError::InvalidParameter(format!(
            "cannot create output dir: {e}"
        )))
    })?;
    let mut phantom_files: Vec<PathBuf> = std::fs::read_dir(phantom_dir)
        .map_err(|e| {
            SolverError::Structural(StructuralError::InvalidParameter(format!(
                "cannot read phantom dir: {e}"
            )))
        })?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "wtm1"))
        .collect();
    phantom_files.sort();

    let run = |files: &[PathBuf]| -> Vec<ManifestEntry> {
        files
            .par_iter()
            .map(|phantom_path| {
                let stem = phantom_path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "phantom".into());
                let out = out_dir.join(format!("{stem}_meas.wtm1"));
                // resume: a readable, shape-consistent output counts as done
                if let Ok((set, _)) = read_measurement_set(&out) {
                    let expect = (frequencies.len(), geom.source_indices.len(), geom.n_elements);
                    if set.shape() == expect {
                        return ManifestEntry {
                            phantom: phantom_path.clone(),
                            output: out.clone(),
                            status: ManifestStatus::Resumed,
                            sha256: sha256_file(&out).ok(),
                            error: None,
                        };
                    }
                }
                let c = match crate::container::read_real_field(phantom_path) {
                    Ok(c) => c,
                    Err(e) => {
                        log::warn!("skipping unreadable phantom {}: {e}", phantom_path.display());
                        return ManifestEntry {
                            phantom: phantom_path.clone(),
                            output: out,
                            status: ManifestStatus::Skipped,
                            sha256: None,
                            error: Some(e.to_string()),
                        };
                    }
                };
                match simulate_measurements(&c, geom, frequencies, solver_cfg) {
                    Ok(set) => {
                        let sha = sha256_file(phantom_path).ok();
                        if let Err(e) = write_measurement_set(&out, &set, solver_cfg, sha) {
                            return ManifestEntry {
                                phantom: phantom_path.clone(),
                                output: out,
                                status: ManifestStatus::Skipped,
                                sha256: None,
                                error: Some(e.to_string()),
                            };
                        }
                        ManifestEntry {
                            phantom: phantom_path.clone(),
                            output: out.clone(),
                            status: ManifestStatus::Simulated,
                            sha256: sha256_file(&out).ok(),
                            error: None,
                        }
                    }
                    Err(e) => {
                        log::warn!("simulation failed for {}: {e}", phantom_path.display());
                        ManifestEntry {
                            phantom: phantom_path.clone(),
                            output: out,
                            status: ManifestStatus::Skipped,
                            sha256: None,
                            error: Some(e.to_string()),
                        }
                    }
                }
            })
            .collect()
    };

    let entries = if workers > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| {
                SolverError::Structural(StructuralError::InvalidParameter(format!(
                    "cannot build worker pool: {e}"
                )))
            })?;
        pool.install(|| run(&phantom_files))
    } else {
        run(&phantom_files)
    };

    let manifest = Manifest { entries };
    let json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    std::fs::write(out_dir.join("manifest.json"), json).map_err(|e| {
        SolverError::Structural(StructuralError::InvalidParameter(format!(
            "cannot write manifest: {e}"
        )))
    })?;
    Ok(manifest)
}
