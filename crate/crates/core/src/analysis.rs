//! Template-space analysis: per-element coordinates for cross-shape
//! correspondence, parameter-space interpolation, and the F-score surface
//! reconstruction metric.

use std::io::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh::TriangleMesh;
use crate::raycast::MeshBvh;
use crate::real::Real;
use crate::sampling::sample_surface;
use crate::template::Template;
use crate::vec3::Vec3;

/// Which field magnitude scales the per-element coordinate vectors.
///
/// The per-element influence |f_i| is the default: it is what lets the
/// coordinates tell elements apart. The total field |F| is kept as the
/// literal alternative reading.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum CoordinateMagnitude {
    #[default]
    PerElement,
    TotalField,
}

/// One query point located relative to every element: a unit direction in
/// each element's own anisotropic frame, scaled by the field magnitude.
/// Degenerate directions (query at an element center) stay zero vectors;
/// the magnitude channel still records the influence.
#[derive(Clone, Debug, PartialEq)]
pub struct TemplateCoordinates<T> {
    pub vectors: Vec<Vec3<T>>,
    pub magnitudes: Vec<T>,
}

impl<T: Real> TemplateCoordinates<T> {
    pub fn flattened(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.vectors.len() * 3);
        for v in &self.vectors {
            out.push(v.x);
            out.push(v.y);
            out.push(v.z);
        }
        out
    }
}

pub fn template_coordinates<T: Real>(
    template: &Template<T>,
    v: Vec3<T>,
    magnitude: CoordinateMagnitude,
) -> TemplateCoordinates<T> {
    let total = match magnitude {
        CoordinateMagnitude::TotalField => Some(template.eval(v).abs()),
        CoordinateMagnitude::PerElement => None,
    };
    let mut vectors = Vec::with_capacity(template.len());
    let mut magnitudes = Vec::with_capacity(template.len());
    for e in template.elements() {
        let m = total.unwrap_or_else(|| e.eval(v).abs());
        let u = (v - e.p).div_each(e.r);
        let norm = u.norm();
        let dir = if norm > T::zero() {
            u / norm * m
        } else {
            Vec3::zero()
        };
        vectors.push(dir);
        magnitudes.push(m);
    }
    TemplateCoordinates {
        vectors,
        magnitudes,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CorrespondenceEntry<T> {
    pub dst_index: u32,
    pub distance: T,
}

/// For every source vertex, the destination vertex whose template
/// coordinates are closest in cosine distance.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrespondenceMap<T> {
    pub entries: Vec<CorrespondenceEntry<T>>,
}

impl<T: Real> CorrespondenceMap<T> {
    /// CSV with a `src_index,dst_index,cos_distance` header row.
    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut buf = Vec::new();
        writeln!(buf, "src_index,dst_index,cos_distance").expect("write to memory");
        for (i, e) in self.entries.iter().enumerate() {
            writeln!(buf, "{},{},{}", i, e.dst_index, e.distance).expect("write to memory");
        }
        std::fs::write(path, &buf).map_err(|e| Error::io(path, e))
    }
}

/// Cosine distance between two flattened coordinate vectors, computed as
/// half the squared distance of the normalized vectors. Identical inputs
/// give exactly zero; the range is [0, 2]. Zero-norm inputs normalize to
/// the zero vector.
pub fn cosine_distance<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let na = norm(a);
    let nb = norm(b);
    let mut sum = T::zero();
    for (x, y) in a.iter().zip(b) {
        let ax = if na > T::zero() { *x / na } else { T::zero() };
        let by = if nb > T::zero() { *y / nb } else { T::zero() };
        let d = ax - by;
        sum += d * d;
    }
    sum * T::of(0.5)
}

fn norm<T: Real>(v: &[T]) -> T {
    v.iter().map(|x| *x * *x).fold(T::zero(), |a, b| a + b).sqrt()
}

fn normalized_coords<T: Real>(
    template: &Template<T>,
    vertices: &[Vec3<T>],
    magnitude: CoordinateMagnitude,
) -> Vec<Vec<T>> {
    vertices
        .par_iter()
        .map(|v| {
            let mut flat = template_coordinates(template, *v, magnitude).flattened();
            let n = norm(&flat);
            if n > T::zero() {
                for x in &mut flat {
                    *x = *x / n;
                }
            } else {
                for x in &mut flat {
                    *x = T::zero();
                }
            }
            flat
        })
        .collect()
}

/// Exhaustive nearest-neighbor match from source vertices to destination
/// vertices in template-coordinate space. Ties break to the lowest
/// destination index.
pub fn correspond<T: Real>(
    src_mesh: &TriangleMesh<T>,
    src_template: &Template<T>,
    dst_mesh: &TriangleMesh<T>,
    dst_template: &Template<T>,
    magnitude: CoordinateMagnitude,
) -> Result<CorrespondenceMap<T>> {
    if src_template.len() != dst_template.len() {
        return Err(Error::Mismatch(format!(
            "templates must have the same element count: {} vs {}",
            src_template.len(),
            dst_template.len()
        )));
    }
    if dst_mesh.vertices.is_empty() || src_mesh.vertices.is_empty() {
        return Err(Error::EmptyMesh);
    }
    let dst = normalized_coords(dst_template, &dst_mesh.vertices, magnitude);
    let src = normalized_coords(src_template, &src_mesh.vertices, magnitude);

    let entries = src
        .par_iter()
        .map(|s| {
            let mut best = CorrespondenceEntry {
                dst_index: 0,
                distance: T::infinity(),
            };
            for (j, d) in dst.iter().enumerate() {
                let mut sum = T::zero();
                for (x, y) in s.iter().zip(d) {
                    let diff = *x - *y;
                    sum += diff * diff;
                }
                let dist = sum * T::of(0.5);
                if dist < best.distance {
                    best = CorrespondenceEntry {
                        dst_index: j as u32,
                        distance: dist,
                    };
                }
            }
            best
        })
        .collect();
    Ok(CorrespondenceMap { entries })
}

/// Weighted blend of templates in the unconstrained parameterization
/// (log radii, log magnitude of c), so the element invariants survive
/// averaging. A one-hot weight vector returns that input bit-for-bit.
pub fn interpolate<T: Real>(templates: &[Template<T>], weights: &[T]) -> Result<Template<T>> {
    if templates.is_empty() {
        return Err(Error::InvalidInput("no templates to interpolate".into()));
    }
    if templates.len() != weights.len() {
        return Err(Error::Mismatch(format!(
            "{} templates but {} weights",
            templates.len(),
            weights.len()
        )));
    }
    let n = templates[0].len();
    for t in templates {
        if t.len() != n {
            return Err(Error::Mismatch(format!(
                "templates must have the same element count: {} vs {}",
                n,
                t.len()
            )));
        }
    }
    let mut sum = T::zero();
    for w in weights {
        if !(*w >= T::zero()) {
            return Err(Error::InvalidInput("weights must be nonnegative".into()));
        }
        sum += *w;
    }
    if (sum - T::one()).abs() > T::of(1e-6) {
        return Err(Error::InvalidInput(format!(
            "weights must sum to 1, got {}",
            sum.to_f64_lossy()
        )));
    }

    // Exact endpoint: all the mass on one input clones it, skipping the
    // log/exp round trip.
    if let Some(hot) = weights.iter().position(|w| *w == T::one()) {
        if weights.iter().enumerate().all(|(i, w)| i == hot || *w == T::zero()) {
            return Ok(templates[hot].clone());
        }
    }

    let mut blended = vec![T::zero(); n * crate::element::PARAMS_PER_ELEMENT];
    let mut isolevel = T::zero();
    for (t, w) in templates.iter().zip(weights) {
        for (acc, value) in blended.iter_mut().zip(t.to_unconstrained()) {
            *acc += *w * value;
        }
        isolevel += *w * t.isolevel();
    }
    Template::from_unconstrained(&blended, isolevel)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FScoreReport<T> {
    /// Fraction of predicted-surface samples within the threshold of the
    /// ground-truth surface.
    pub precision: T,
    /// Fraction of ground-truth samples within the threshold of the
    /// predicted surface.
    pub recall: T,
    /// Harmonic mean as a percentage.
    pub score: T,
}

/// Surface agreement between two meshes: both are sampled by area with the
/// same seed, each sample's exact squared distance to the other mesh is
/// compared against tau, and the harmonic mean of the two fractions is
/// reported as a percentage. Identical meshes score exactly 100.
pub fn f_score<T: Real>(
    pred: &TriangleMesh<T>,
    gt: &TriangleMesh<T>,
    tau: T,
    sample_count: usize,
    seed: u64,
) -> Result<FScoreReport<T>> {
    if !(tau > T::zero()) {
        return Err(Error::InvalidInput("tau must be positive".into()));
    }
    if sample_count == 0 {
        return Err(Error::InvalidInput("sample count must be positive".into()));
    }
    let pred_bvh = MeshBvh::build(pred)?;
    let gt_bvh = MeshBvh::build(gt)?;
    let pred_samples = sample_surface(pred, sample_count, seed)?;
    let gt_samples = sample_surface(gt, sample_count, seed)?;

    let within = |bvh: &MeshBvh<T>, points: &[crate::sampling::SurfaceSample<T>]| -> T {
        let hits = points
            .par_iter()
            .filter(|s| bvh.closest(s.position).distance_squared <= tau)
            .count();
        T::of(hits as f64) / T::of(points.len() as f64)
    };
    let precision = within(&gt_bvh, &pred_samples);
    let recall = within(&pred_bvh, &gt_samples);
    let denom = precision + recall;
    let score = if denom > T::zero() {
        T::of(2.0) * precision * recall / denom * T::of(100.0)
    } else {
        T::zero()
    };
    Ok(FScoreReport {
        precision,
        recall,
        score,
    })
}
