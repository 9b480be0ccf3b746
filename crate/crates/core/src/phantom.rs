//! Procedural 2D tissue phantoms and their sound-speed maps.
//!
//! Organs are built from jittered superellipse/circle primitives: a skin
//! ring around a soft-tissue body, optional cortical bones with marrow
//! cavities, optional lesions. Geometry is fully determined by the spec's
//! seed. Speeds are assigned per connected tissue region: table mean plus a
//! uniform perturbation, with the exterior water kept at its mean exactly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::StructuralError;
use crate::grid::{Grid2D, RealField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TissueLabel {
    Water,
    Skin,
    Fat,
    Muscle,
    BoneCortical,
    BoneMarrow,
    Gland,
    Lesion,
}

impl TissueLabel {
    pub const ALL: [TissueLabel; 8] = [
        TissueLabel::Water,
        TissueLabel::Skin,
        TissueLabel::Fat,
        TissueLabel::Muscle,
        TissueLabel::BoneCortical,
        TissueLabel::BoneMarrow,
        TissueLabel::Gland,
        TissueLabel::Lesion,
    ];

    pub fn id(self) -> u8 {
        match self {
            TissueLabel::Water => 0,
            TissueLabel::Skin => 1,
            TissueLabel::Fat => 2,
            TissueLabel::Muscle => 3,
            TissueLabel::BoneCortical => 4,
            TissueLabel::BoneMarrow => 5,
            TissueLabel::Gland => 6,
            TissueLabel::Lesion => 7,
        }
    }

    pub fn from_id(id: u8) -> Option<TissueLabel> {
        TissueLabel::ALL.iter().copied().find(|l| l.id() == id)
    }

    pub fn name(self) -> &'static str {
        match self {
            TissueLabel::Water => "water",
            TissueLabel::Skin => "skin",
            TissueLabel::Fat => "fat",
            TissueLabel::Muscle => "muscle",
            TissueLabel::BoneCortical => "bone_cortical",
            TissueLabel::BoneMarrow => "bone_marrow",
            TissueLabel::Gland => "gland",
            TissueLabel::Lesion => "lesion",
        }
    }
}

/// Per-label sound speed: mean and uniform perturbation half-width, m/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TissueSpeed {
    pub mean: f64,
    pub half_width: f64,
}

/// Sound-speed assignment table for all tissue labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TissueTable {
    pub water: TissueSpeed,
    pub skin: TissueSpeed,
    pub fat: TissueSpeed,
    pub muscle: TissueSpeed,
    pub bone_cortical: TissueSpeed,
    pub bone_marrow: TissueSpeed,
    pub gland: TissueSpeed,
    pub lesion: TissueSpeed,
}

impl Default for TissueTable {
    fn default() -> Self {
        let t = |mean, half_width| TissueSpeed { mean, half_width };
        TissueTable {
            water: t(1500.0, 0.0),
            skin: t(1610.0, 10.0),
            fat: t(1450.0, 10.0),
            muscle: t(1580.0, 12.0),
            bone_cortical: t(2800.0, 60.0),
            bone_marrow: t(1450.0, 15.0),
            gland: t(1520.0, 10.0),
            lesion: t(1590.0, 5.0),
        }
    }
}

impl TissueTable {
    pub fn get(&self, label: TissueLabel) -> TissueSpeed {
        match label {
            TissueLabel::Water => self.water,
            TissueLabel::Skin => self.skin,
            TissueLabel::Fat => self.fat,
            TissueLabel::Muscle => self.muscle,
            TissueLabel::BoneCortical => self.bone_cortical,
            TissueLabel::BoneMarrow => self.bone_marrow,
            TissueLabel::Gland => self.gland,
            TissueLabel::Lesion => self.lesion,
        }
    }

    pub fn validate(&self) -> Result<(), StructuralError> {
        for label in TissueLabel::ALL {
            let s = self.get(label);
            if !(1300.0..=3500.0).contains(&s.mean) {
                return Err(StructuralError::InvalidParameter(format!(
                    "{} mean speed {} outside [1300, 3500] m/s",
                    label.name(),
                    s.mean
                )));
            }
            if s.half_width < 0.0 || s.half_width >= 0.1 * s.mean {
                return Err(StructuralError::InvalidParameter(format!(
                    "{} perturbation half-width {} must be in [0, 10% of mean)",
                    label.name(),
                    s.half_width
                )));
            }
            if s.mean - s.half_width < 1300.0 || s.mean + s.half_width > 3500.0 {
                return Err(StructuralError::InvalidParameter(format!(
                    "{} speed range leaves [1300, 3500] m/s",
                    label.name()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrganKind {
    Breast,
    Arm,
    Leg,
    Disc,
}

/// Geometry recipe for one phantom; the seed fully determines the output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhantomSpec {
    pub organ: OrganKind,
    /// Outer body radius in meters.
    pub body_radius: f64,
    #[serde(default)]
    pub bone_count: usize,
    /// Nominal cortical bone radius in meters (jittered per bone).
    #[serde(default)]
    pub bone_radius: f64,
    #[serde(default)]
    pub lesion_count: usize,
    pub seed: u64,
}

impl PhantomSpec {
    fn effective_bone_count(&self) -> usize {
        match self.organ {
            OrganKind::Arm | OrganKind::Leg => self.bone_count.max(1),
            _ => self.bone_count,
        }
    }
}

/// Labeled tissue map on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TissuePhantom {
    pub grid: Grid2D,
    pub labels: Vec<TissueLabel>,
}

impl TissuePhantom {
    pub fn label_at(&self, ix: usize, iy: usize) -> TissueLabel {
        self.labels[self.grid.index(ix, iy)]
    }

    /// Label ids as a real field (for the WTM1 container).
    pub fn to_id_field(&self) -> RealField {
        RealField {
            grid: self.grid,
            data: self.labels.iter().map(|l| l.id() as f64).collect(),
        }
    }

    pub fn from_id_field(f: &RealField) -> Result<TissuePhantom, StructuralError> {
        let labels = f
            .data
            .iter()
            .map(|&v| {
                TissueLabel::from_id(v.round() as u8).ok_or_else(|| {
                    StructuralError::InvalidParameter(format!("unknown tissue id {v}"))
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(TissuePhantom {
            grid: f.grid,
            labels,
        })
    }
}

struct Ellipse {
    cx: f64,
    cy: f64,
    a: f64,
    b: f64,
    /// Superellipse exponent; 2 is a plain ellipse.
    n: f64,
    rot: f64,
}

impl Ellipse {
    fn contains(&self, x: f64, y: f64) -> bool {
        let dx = x - self.cx;
        let dy = y - self.cy;
        let (s, c) = self.rot.sin_cos();
        let u = (c * dx + s * dy) / self.a;
        let v = (-s * dx + c * dy) / self.b;
        u.abs().powf(self.n) + v.abs().powf(self.n) <= 1.0
    }
}

fn paint(labels: &mut [TissueLabel], grid: &Grid2D, shape: &Ellipse, label: TissueLabel) {
    // bounding box in grid indices
    let r = shape.a.max(shape.b);
    let (fx0, fy0) = grid.frac_coords(shape.cx - r, shape.cy - r);
    let (fx1, fy1) = grid.frac_coords(shape.cx + r, shape.cy + r);
    let ix0 = fx0.floor().max(0.0) as usize;
    let iy0 = fy0.floor().max(0.0) as usize;
    let ix1 = (fx1.ceil() as usize).min(grid.nx - 1);
    let iy1 = (fy1.ceil() as usize).min(grid.ny - 1);
    for iy in iy0..=iy1 {
        for ix in ix0..=ix1 {
            let (x, y) = grid.position(ix, iy);
            if shape.contains(x, y) {
                labels[grid.index(ix, iy)] = label;
            }
        }
    }
}

/// Generate a labeled phantom on `grid`. Deterministic in `spec.seed`.
pub fn generate_phantom(
    spec: &PhantomSpec,
    grid: Grid2D,
) -> Result<TissuePhantom, StructuralError> {
    let (w, h) = grid.extent();
    let half = 0.5 * w.min(h);
    if !(spec.body_radius > 0.0) {
        return Err(StructuralError::InvalidParameter(
            "body radius must be positive".into(),
        ));
    }
    // keep at least 2 water cells to the grid edge
    if spec.body_radius > half - 2.0 * grid.dx {
        return Err(StructuralError::GeometryOutOfGrid(format!(
            "body radius {} does not fit grid of half-extent {}",
            spec.body_radius, half
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let rotation: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let center_x = 0.5 * (grid.position(0, 0).0 + grid.position(grid.nx - 1, 0).0);
    let center_y = 0.5 * (grid.position(0, 0).1 + grid.position(0, grid.ny - 1).1);
    let rot_offset = |r: f64, phi: f64| -> (f64, f64) {
        let a = phi + rotation;
        (center_x + r * a.cos(), center_y + r * a.sin())
    };

    let mut labels = vec![TissueLabel::Water; grid.len()];
    let body_r = spec.body_radius;
    let skin_t = (0.04 * body_r).max(2.0 * grid.dx);
    let body_n: f64 = rng.gen_range(1.9..2.4);
    let squish: f64 = rng.gen_range(0.88..1.0);

    let body = Ellipse {
        cx: center_x,
        cy: center_y,
        a: body_r,
        b: body_r * squish,
        n: body_n,
        rot: rotation,
    };
    let interior = Ellipse {
        a: body_r - skin_t,
        b: body_r * squish - skin_t,
        ..body
    };

    match spec.organ {
        OrganKind::Disc => {
            // degenerate organ: no skin, single tissue
            paint(&mut labels, &grid, &body, TissueLabel::Muscle);
        }
        OrganKind::Breast => {
            paint(&mut labels, &grid, &body, TissueLabel::Skin);
            paint(&mut labels, &grid, &interior, TissueLabel::Fat);
            // central glandular mass with jittered lobes
            let gland_r = rng.gen_range(0.45..0.62) * body_r;
            let (gx, gy) = rot_offset(rng.gen_range(0.0..0.12 * body_r), rng.gen_range(0.0..std::f64::consts::TAU));
            let gland = Ellipse {
                cx: gx,
                cy: gy,
                a: gland_r,
                b: gland_r * rng.gen_range(0.75..0.95),
                n: rng.gen_range(1.8..2.6),
                rot: rng.gen_range(0.0..std::f64::consts::TAU),
            };
            paint(&mut labels, &grid, &gland, TissueLabel::Gland);
            let lobes = rng.gen_range(2..5);
            for _ in 0..lobes {
                let lr = rng.gen_range(0.12..0.25) * body_r;
                let dist = rng.gen_range(0.2..0.55) * body_r;
                let phi = rng.gen_range(0.0..std::f64::consts::TAU);
                let (cx, cy) = rot_offset(dist, phi);
                let lobe = Ellipse {
                    cx,
                    cy,
                    a: lr,
                    b: lr * rng.gen_range(0.7..1.0),
                    n: 2.0,
                    rot: rng.gen_range(0.0..std::f64::consts::TAU),
                };
                // only paint lobes that stay inside the interior
                if hypot(cx - center_x, cy - center_y) + lr.max(lr) < body_r - skin_t - grid.dx {
                    paint(&mut labels, &grid, &lobe, TissueLabel::Gland);
                }
            }
        }
        OrganKind::Arm | OrganKind::Leg => {
            paint(&mut labels, &grid, &body, TissueLabel::Skin);
            paint(&mut labels, &grid, &interior, TissueLabel::Muscle);
            // subcutaneous fat band
            let fat_t = rng.gen_range(0.05..0.10) * body_r;
            let fat_outer = Ellipse {
                a: body_r - skin_t,
                b: body_r * squish - skin_t,
                ..body
            };
            let fat_inner = Ellipse {
                a: body_r - skin_t - fat_t,
                b: body_r * squish - skin_t - fat_t,
                ..body
            };
            paint(&mut labels, &grid, &fat_outer, TissueLabel::Fat);
            paint(&mut labels, &grid, &fat_inner, TissueLabel::Muscle);
        }
    }

    // bones: cortical shell with a marrow cavity
    let n_bones = match spec.organ {
        OrganKind::Disc | OrganKind::Breast => spec.bone_count,
        _ => spec.effective_bone_count(),
    };
    if n_bones > 0 {
        let nominal = if spec.bone_radius > 0.0 {
            spec.bone_radius
        } else {
            match spec.organ {
                OrganKind::Leg => 0.30 * body_r,
                _ => 0.22 * body_r,
            }
        };
        for bi in 0..n_bones {
            let bone_r = nominal * rng.gen_range(0.9..1.1);
            let interior_r = body_r - skin_t - 2.0 * grid.dx;
            if bone_r + 2.0 * grid.dx >= interior_r {
                return Err(StructuralError::GeometryOutOfGrid(format!(
                    "bone radius {bone_r} does not fit inside organ of radius {body_r}"
                )));
            }
            let max_off = interior_r - bone_r - 2.0 * grid.dx;
            let off = rng.gen_range(0.0..(0.5 * max_off).max(f64::MIN_POSITIVE));
            let phi = rng.gen_range(0.0..std::f64::consts::TAU)
                + bi as f64 * std::f64::consts::TAU / n_bones.max(1) as f64;
            let (bx, by) = rot_offset(off, phi);
            let squash = rng.gen_range(0.85..1.0);
            let bone = Ellipse {
                cx: bx,
                cy: by,
                a: bone_r,
                b: bone_r * squash,
                n: 2.0,
                rot: rng.gen_range(0.0..std::f64::consts::TAU),
            };
            // marrow cavity: concentric, leaves a cortical wall of >= 2 cells
            let wall = (0.35 * bone_r).max(2.0 * grid.dx);
            let marrow = Ellipse {
                a: (bone_r - wall).max(grid.dx),
                b: (bone_r * squash - wall).max(grid.dx),
                ..bone
            };
            paint(&mut labels, &grid, &bone, TissueLabel::BoneCortical);
            paint(&mut labels, &grid, &marrow, TissueLabel::BoneMarrow);
        }
    }

    // lesions: small stiff inclusions, placed in the soft interior
    for _ in 0..spec.lesion_count {
        let lr = rng.gen_range(0.08..0.15) * body_r;
        let max_off = body_r - skin_t - lr - 2.0 * grid.dx;
        if max_off <= 0.0 {
            return Err(StructuralError::GeometryOutOfGrid(
                "lesion does not fit inside organ".into(),
            ));
        }
        // rejection-sample a spot not on bone
        let mut placed = false;
        for _ in 0..64 {
            let off = rng.gen_range(0.0..max_off);
            let phi = rng.gen_range(0.0..std::f64::consts::TAU);
            let (cx, cy) = rot_offset(off, phi);
            if let Some((ix, iy)) = grid.nearest_node(cx, cy) {
                let at = labels[grid.index(ix, iy)];
                if matches!(
                    at,
                    TissueLabel::Fat | TissueLabel::Gland | TissueLabel::Muscle
                ) {
                    let lesion = Ellipse {
                        cx,
                        cy,
                        a: lr,
                        b: lr * rng.gen_range(0.8..1.0),
                        n: 2.0,
                        rot: rng.gen_range(0.0..std::f64::consts::TAU),
                    };
                    paint(&mut labels, &grid, &lesion, TissueLabel::Lesion);
                    placed = true;
                    break;
                }
            }
        }
        if !placed {
            return Err(StructuralError::GeometryOutOfGrid(
                "could not place lesion in soft tissue".into(),
            ));
        }
    }

    Ok(TissuePhantom { grid, labels })
}

fn hypot(a: f64, b: f64) -> f64 {
    (a * a + b * b).sqrt()
}

/// 4-connected components of equal label. Returns per-pixel region ids
/// (scan-order, 0-based) and the region count.
pub fn connected_components<T: PartialEq>(grid: &Grid2D, values: &[T]) -> (Vec<u32>, usize) {
    const UNSET: u32 = u32::MAX;
    let mut region = vec![UNSET; values.len()];
    let mut count = 0u32;
    let mut stack = Vec::new();
    for start in 0..values.len() {
        if region[start] != UNSET {
            continue;
        }
        let id = count;
        count += 1;
        region[start] = id;
        stack.push(start);
        while let Some(i) = stack.pop() {
            let ix = i % grid.nx;
            let iy = i / grid.nx;
            let mut visit = |j: usize| {
                if region[j] == UNSET && values[j] == values[i] {
                    region[j] = id;
                    stack.push(j);
                }
            };
            if ix > 0 {
                visit(i - 1);
            }
            if ix + 1 < grid.nx {
                visit(i + 1);
            }
            if iy > 0 {
                visit(i - grid.nx);
            }
            if iy + 1 < grid.ny {
                visit(i + grid.nx);
            }
        }
    }
    (region, count as usize)
}

/// Number of 4-connected components of `label` in a phantom.
pub fn count_label_components(ph: &TissuePhantom, label: TissueLabel) -> usize {
    let mask: Vec<bool> = ph.labels.iter().map(|&l| l == label).collect();
    let (region, _) = connected_components(&ph.grid, &mask);
    let mut ids = std::collections::HashSet::new();
    for (i, &m) in mask.iter().enumerate() {
        if m {
            ids.insert(region[i]);
        }
    }
    ids.len()
}

/// Assign sound speeds per connected tissue region: table mean plus a
/// seed-deterministic uniform perturbation within the half-width. The
/// exterior water region keeps its mean exactly.
pub fn assign_sound_speed(
    ph: &TissuePhantom,
    table: &TissueTable,
    seed: u64,
) -> Result<RealField, StructuralError> {
    table.validate()?;
    let (region, n_regions) = connected_components(&ph.grid, &ph.labels);
    // representative (first) pixel per region, in scan order
    let mut rep = vec![usize::MAX; n_regions];
    for (i, &r) in region.iter().enumerate() {
        if rep[r as usize] == usize::MAX {
            rep[r as usize] = i;
        }
    }
    let exterior = region[0] as usize; // grid corner is exterior water by invariant
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut region_speed = vec![0.0f64; n_regions];
    for r in 0..n_regions {
        let label = ph.labels[rep[r]];
        let s = table.get(label);
        let dv = if s.half_width > 0.0 {
            rng.gen_range(-s.half_width..=s.half_width)
        } else {
            0.0
        };
        region_speed[r] = if r == exterior { s.mean } else { s.mean + dv };
    }
    Ok(RealField {
        grid: ph.grid,
        data: region.iter().map(|&r| region_speed[r as usize]).collect(),
    })
}
