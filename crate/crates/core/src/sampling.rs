//! Labeled point generation from watertight meshes, plus sample file I/O.
//!
//! Three samplers feed the fitter: uniform points in the bounding box
//! labeled by the voxel grid, surface points with outward normals drawn
//! area-proportionally, and near-surface points offset along the normal
//! with density concentrated at the surface. All are deterministic
//! functions of their inputs and a seed.

use std::io::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mesh::TriangleMesh;
use crate::raycast::MeshBvh;
use crate::real::Real;
use crate::template::Label;
use crate::vec3::{Aabb, Vec3};
use crate::voxel::VoxelGrid;

/// Default band half-width for near-surface sampling, in normalized units.
pub const DEFAULT_TRUNCATION: f64 = 0.1;
/// Attempts to place one near-surface sample before giving up.
pub const NEAR_SURFACE_RETRY_BUDGET: usize = 64;
/// On-disk sample format version.
pub const SAMPLE_FORMAT_VERSION: u32 = 1;

const SAMPLE_MAGIC: &[u8; 4] = b"SIFS";
const LABELED_RECORD: usize = 13; // 3 x f32 + u8
const SURFACE_RECORD: usize = 24; // 3 x f32 + 3 x f32

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LabeledSample<T> {
    pub position: Vec3<T>,
    pub label: Label,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurfaceSample<T> {
    pub position: Vec3<T>,
    pub normal: Vec3<T>,
}

/// Uniform points in `bbox`, labeled by the voxel cell that contains them.
/// Surface cells label as inside, matching the boundary tie rule.
pub fn sample_uniform<T: Real>(
    grid: &VoxelGrid<T>,
    bbox: &Aabb<T>,
    count: usize,
    seed: u64,
) -> Vec<LabeledSample<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |lo: T, hi: T| -> T {
        if hi > lo {
            rng.gen_range(lo..hi)
        } else {
            lo
        }
    };
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let position = Vec3::new(
            draw(bbox.min.x, bbox.max.x),
            draw(bbox.min.y, bbox.max.y),
            draw(bbox.min.z, bbox.max.z),
        );
        out.push(LabeledSample {
            position,
            label: grid.state_at(position).label(),
        });
    }
    out
}

/// Points evenly distributed over the mesh surface: triangles chosen with
/// probability proportional to area, then a uniform barycentric point.
/// Normals are the face normals, so their orientation follows the winding.
pub fn sample_surface<T: Real>(
    mesh: &TriangleMesh<T>,
    count: usize,
    seed: u64,
) -> Result<Vec<SurfaceSample<T>>> {
    let mut cumulative = Vec::with_capacity(mesh.triangles.len());
    let mut total = T::zero();
    for i in 0..mesh.triangles.len() {
        total += mesh.triangle_area(i);
        cumulative.push(total);
    }
    if !(total > T::zero()) {
        return Err(Error::ZeroArea);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let target = rng.gen_range(T::zero()..total);
        // First entry strictly above the target. Zero-area triangles can
        // never be selected: cumulative[i] > target >= cumulative[i-1]
        // forces a positive area step.
        let ti = cumulative
            .partition_point(|&a| a <= target)
            .min(mesh.triangles.len() - 1);
        let [a, b, c] = mesh.triangle(ti);
        let r1: T = rng.gen_range(T::zero()..T::one());
        let r2: T = rng.gen_range(T::zero()..T::one());
        let s = r1.sqrt();
        let w0 = T::one() - s;
        let w1 = s * (T::one() - r2);
        let w2 = s * r2;
        out.push(SurfaceSample {
            position: a * w0 + b * w1 + c * w2,
            normal: mesh.triangle_normal(ti).expect("selected triangle has area"),
        });
    }
    Ok(out)
}

/// Points offset from the surface along the normal, labeled by ray parity.
///
/// For each sample a surface point is drawn, rays along both normal
/// directions find the minimum crossing distance t, and the offset
/// magnitude is drawn in (truncation/100, min(t, truncation)) with density
/// proportional to 1/offset squared. The side is a fair coin, so both
/// sides of thin structures get equal coverage while mass concentrates at
/// the surface. Surface points whose rays both miss (a numerical fluke on
/// a watertight mesh) are redrawn, within a bounded retry budget.
pub fn sample_near_surface<T: Real>(
    mesh: &TriangleMesh<T>,
    surface_samples: &[SurfaceSample<T>],
    count: usize,
    truncation: T,
    seed: u64,
) -> Result<Vec<LabeledSample<T>>> {
    if !(truncation > T::zero()) {
        return Err(Error::InvalidInput("truncation must be positive".into()));
    }
    if surface_samples.is_empty() {
        return Err(Error::InvalidInput(
            "near-surface sampling needs at least one surface sample".into(),
        ));
    }
    let bvh = MeshBvh::build(mesh)?;
    let delta_min = truncation / T::of(100.0);
    // Skip the originating triangle (hit at t = 0) and its edge-sharing
    // neighbors without masking real nearby geometry.
    let t_skip = truncation * T::of(1e-6);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut placed = false;
        for _ in 0..NEAR_SURFACE_RETRY_BUDGET {
            let s = surface_samples[rng.gen_range(0..surface_samples.len())];
            let forward = bvh.nearest_hit(s.position, s.normal, t_skip).map(|h| h.t);
            let backward = bvh.nearest_hit(s.position, -s.normal, t_skip).map(|h| h.t);
            let t = match (forward, backward) {
                (Some(a), Some(b)) => a.min(b),
                (Some(a), None) => a,
                (None, Some(b)) => b,
                (None, None) => continue,
            };
            let hi = t.min(truncation);
            // Features thinner than the guard would invert the interval;
            // shrink the guard instead so the bound on the offset holds.
            let lo = delta_min.min(hi * T::of(0.5));
            let u: T = rng.gen_range(T::zero()..T::one());
            // Inverse CDF of the 1/d^2 density on (lo, hi).
            let delta = T::one() / (T::one() / lo - u * (T::one() / lo - T::one() / hi));
            let side = if rng.gen_range(0u32..2) == 0 {
                T::one()
            } else {
                -T::one()
            };
            let position = s.position + s.normal * (side * delta);
            let label = bvh.classify(position)?;
            out.push(LabeledSample { position, label });
            placed = true;
            break;
        }
        if !placed {
            return Err(Error::RetryBudget {
                attempts: NEAR_SURFACE_RETRY_BUDGET,
            });
        }
    }
    Ok(out)
}

fn push_f32<T: Real>(buf: &mut Vec<u8>, v: T) {
    buf.extend_from_slice(&(v.to_f64_lossy() as f32).to_le_bytes());
}

fn header(count: usize) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(SAMPLE_MAGIC);
    buf.extend_from_slice(&SAMPLE_FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(count as u64).to_le_bytes());
    buf
}

/// Validate the fixed header and return (record bytes, record count).
fn check_header<'a>(path: &Path, bytes: &'a [u8], record_size: usize) -> Result<(&'a [u8], usize)> {
    if bytes.len() < 16 || &bytes[0..4] != SAMPLE_MAGIC {
        return Err(Error::parse(path, 0, "not a sample file (bad magic)"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != SAMPLE_FORMAT_VERSION {
        return Err(Error::Version {
            path: path.to_path_buf(),
            found: version,
            expected: SAMPLE_FORMAT_VERSION,
        });
    }
    let count = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let expected = 16 + count * record_size;
    if bytes.len() != expected {
        return Err(Error::parse(
            path,
            0,
            format!(
                "expected {expected} bytes for {count} records, found {} (wrong record kind?)",
                bytes.len()
            ),
        ));
    }
    Ok((&bytes[16..], count))
}

fn read_f32(bytes: &[u8], offset: usize) -> f32 {
    f32::from_le_bytes(bytes[offset..offset + 4].try_into().unwrap())
}

fn read_vec3<T: Real>(bytes: &[u8], offset: usize) -> Vec3<T> {
    Vec3::new(
        T::of(read_f32(bytes, offset) as f64),
        T::of(read_f32(bytes, offset + 4) as f64),
        T::of(read_f32(bytes, offset + 8) as f64),
    )
}

/// Binary save: `SIFS`, version, count, then 3 x f32 position + u8 label.
pub fn save_labeled_samples<T: Real>(path: &Path, samples: &[LabeledSample<T>]) -> Result<()> {
    let mut buf = header(samples.len());
    buf.reserve(samples.len() * LABELED_RECORD);
    for s in samples {
        push_f32(&mut buf, s.position.x);
        push_f32(&mut buf, s.position.y);
        push_f32(&mut buf, s.position.z);
        buf.push(s.label.as_u8());
    }
    std::fs::write(path, &buf).map_err(|e| Error::io(path, e))
}

pub fn load_labeled_samples<T: Real>(path: &Path) -> Result<Vec<LabeledSample<T>>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let (records, count) = check_header(path, &bytes, LABELED_RECORD)?;
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let at = i * LABELED_RECORD;
        out.push(LabeledSample {
            position: read_vec3(records, at),
            label: Label::from_u8(records[at + 12])?,
        });
    }
    Ok(out)
}

/// Binary save: `SIFS`, version, count, then 3 x f32 position + 3 x f32 normal.
pub fn save_surface_samples<T: Real>(path: &Path, samples: &[SurfaceSample<T>]) -> Result<()> {
    let mut buf = header(samples.len());
    buf.reserve(samples.len() * SURFACE_RECORD);
    for s in samples {
        push_f32(&mut buf, s.position.x);
        push_f32(&mut buf, s.position.y);
        push_f32(&mut buf, s.position.z);
        push_f32(&mut buf, s.normal.x);
        push_f32(&mut buf, s.normal.y);
        push_f32(&mut buf, s.normal.z);
    }
    std::fs::write(path, &buf).map_err(|e| Error::io(path, e))
}

pub fn load_surface_samples<T: Real>(path: &Path) -> Result<Vec<SurfaceSample<T>>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let (records, count) = check_header(path, &bytes, SURFACE_RECORD)?;
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let at = i * SURFACE_RECORD;
        out.push(SurfaceSample {
            position: read_vec3(records, at),
            normal: read_vec3(records, at + 12),
        });
    }
    Ok(out)
}

/// Text save: one `x y z label` line per sample.
pub fn save_labeled_samples_text<T: Real>(path: &Path, samples: &[LabeledSample<T>]) -> Result<()> {
    let mut buf = Vec::new();
    for s in samples {
        writeln!(
            buf,
            "{} {} {} {}",
            s.position.x,
            s.position.y,
            s.position.z,
            s.label.as_u8()
        )
        .expect("write to memory");
    }
    std::fs::write(path, &buf).map_err(|e| Error::io(path, e))
}

pub fn load_labeled_samples_text<T: Real>(path: &Path) -> Result<Vec<LabeledSample<T>>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(Error::parse(path, line_no, "expected `x y z label`"));
        }
        let mut coords = [T::zero(); 3];
        for (slot, field) in coords.iter_mut().zip(&fields[..3]) {
            *slot = T::of(field
                .parse::<f64>()
                .map_err(|e| Error::parse(path, line_no, format!("bad coordinate: {e}")))?);
        }
        let label = field_label(path, line_no, fields[3])?;
        out.push(LabeledSample {
            position: Vec3::new(coords[0], coords[1], coords[2]),
            label,
        });
    }
    Ok(out)
}

/// Text save: one `x y z nx ny nz` line per sample.
pub fn save_surface_samples_text<T: Real>(path: &Path, samples: &[SurfaceSample<T>]) -> Result<()> {
    let mut buf = Vec::new();
    for s in samples {
        writeln!(
            buf,
            "{} {} {} {} {} {}",
            s.position.x, s.position.y, s.position.z, s.normal.x, s.normal.y, s.normal.z
        )
        .expect("write to memory");
    }
    std::fs::write(path, &buf).map_err(|e| Error::io(path, e))
}

pub fn load_surface_samples_text<T: Real>(path: &Path) -> Result<Vec<SurfaceSample<T>>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 6 {
            return Err(Error::parse(path, line_no, "expected `x y z nx ny nz`"));
        }
        let mut vals = [T::zero(); 6];
        for (slot, field) in vals.iter_mut().zip(&fields) {
            *slot = T::of(field
                .parse::<f64>()
                .map_err(|e| Error::parse(path, line_no, format!("bad number: {e}")))?);
        }
        out.push(SurfaceSample {
            position: Vec3::new(vals[0], vals[1], vals[2]),
            normal: Vec3::new(vals[3], vals[4], vals[5]),
        });
    }
    Ok(out)
}

fn field_label(path: &Path, line_no: usize, field: &str) -> Result<Label> {
    let v: u8 = field
        .parse()
        .map_err(|e| Error::parse(path, line_no, format!("bad label: {e}")))?;
    Label::from_u8(v).map_err(|_| Error::parse(path, line_no, "label must be 0 or 1"))
}
