//! Triangle meshes: OBJ input/output, normalization into the unit domain,
//! areas and normals, and watertightness checks.
//!
//! The OBJ reader handles the `v`/`f` subset: 1-based (or negative, relative)
//! vertex indices, optional `/vt/vn` suffixes which are ignored, and faces
//! with more than three vertices, which are fan-triangulated. Triangles that
//! repeat a vertex index are dropped and counted. Everything else (`vn`,
//! `vt`, groups, materials, comments) is skipped.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::real::Real;
use crate::vec3::{Aabb, Vec3};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TriangleMesh<T> {
    pub vertices: Vec<Vec3<T>>,
    pub triangles: Vec<[u32; 3]>,
}

/// Result of reading an OBJ file.
#[derive(Clone, Debug)]
pub struct ObjLoad<T> {
    pub mesh: TriangleMesh<T>,
    /// Triangles discarded because they repeated a vertex index.
    pub dropped_degenerate: usize,
}

/// Invertible map between original and normalized coordinates:
/// `normalized = (x - center) / scale`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormalizeTransform<T> {
    pub center: Vec3<T>,
    pub scale: T,
}

impl<T: Real> NormalizeTransform<T> {
    pub fn to_normalized(&self, x: Vec3<T>) -> Vec3<T> {
        (x - self.center) / self.scale
    }

    pub fn to_original(&self, n: Vec3<T>) -> Vec3<T> {
        n * self.scale + self.center
    }
}

/// Edge and Euler statistics used to judge watertightness.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ManifoldReport {
    pub undirected_edges: usize,
    /// Edges used by exactly one triangle.
    pub boundary_edges: usize,
    /// Edges used by three or more triangles.
    pub nonmanifold_edges: usize,
    /// `V - E + F` over the vertex array, edge set, and triangle list.
    pub euler_characteristic: i64,
}

impl ManifoldReport {
    /// Every edge shared by exactly two triangles.
    pub fn is_closed(&self) -> bool {
        self.boundary_edges == 0 && self.nonmanifold_edges == 0
    }
}

impl<T: Real> TriangleMesh<T> {
    pub fn new(vertices: Vec<Vec3<T>>, triangles: Vec<[u32; 3]>) -> Result<Self> {
        let n = vertices.len() as u64;
        for t in &triangles {
            for &i in t {
                if u64::from(i) >= n {
                    return Err(Error::InvalidInput(format!(
                        "triangle references vertex {i} but the mesh has {n} vertices"
                    )));
                }
            }
        }
        Ok(Self {
            vertices,
            triangles,
        })
    }

    pub fn triangle(&self, i: usize) -> [Vec3<T>; 3] {
        let [a, b, c] = self.triangles[i];
        [
            self.vertices[a as usize],
            self.vertices[b as usize],
            self.vertices[c as usize],
        ]
    }

    /// Area-weighted normal (cross product / 2 has the triangle's area as its
    /// norm); zero for degenerate triangles.
    pub fn triangle_area_normal(&self, i: usize) -> Vec3<T> {
        let [a, b, c] = self.triangle(i);
        (b - a).cross(c - a) * T::of(0.5)
    }

    pub fn triangle_area(&self, i: usize) -> T {
        self.triangle_area_normal(i).norm()
    }

    /// Unit normal, or `None` for a degenerate triangle.
    pub fn triangle_normal(&self, i: usize) -> Option<Vec3<T>> {
        let n = self.triangle_area_normal(i);
        let len = n.norm();
        if len > T::zero() {
            Some(n / len)
        } else {
            None
        }
    }

    /// Total surface area, summed in triangle order.
    pub fn area(&self) -> T {
        let mut acc = T::zero();
        for i in 0..self.triangles.len() {
            acc += self.triangle_area(i);
        }
        acc
    }

    pub fn bounding_box(&self) -> Result<Aabb<T>> {
        Aabb::from_points(self.vertices.iter().copied()).ok_or(Error::EmptyMesh)
    }

    /// Signed volume via the divergence theorem; positive when triangles wind
    /// counterclockwise seen from outside.
    pub fn signed_volume(&self) -> T {
        let sixth = T::one() / T::of(6.0);
        let mut acc = T::zero();
        for i in 0..self.triangles.len() {
            let [a, b, c] = self.triangle(i);
            acc += a.dot(b.cross(c)) * sixth;
        }
        acc
    }

    /// Centered copy scaled so the longest bounding-box axis has extent 1,
    /// which places every vertex in `[-0.5, 0.5]^3`, plus the inverse map.
    pub fn normalized(&self) -> Result<(Self, NormalizeTransform<T>)> {
        let bb = self.bounding_box()?;
        let extent = bb.extent();
        let scale = extent.max_element();
        if !(scale.is_finite() && scale > T::zero()) {
            return Err(Error::ZeroExtent);
        }
        let transform = NormalizeTransform {
            center: bb.center(),
            scale,
        };
        let vertices = self
            .vertices
            .iter()
            .map(|v| transform.to_normalized(*v))
            .collect();
        Ok((
            Self {
                vertices,
                triangles: self.triangles.clone(),
            },
            transform,
        ))
    }

    pub fn manifold_report(&self) -> ManifoldReport {
        let mut counts: HashMap<(u32, u32), usize> = HashMap::new();
        for t in &self.triangles {
            for k in 0..3 {
                let a = t[k];
                let b = t[(k + 1) % 3];
                let key = (a.min(b), a.max(b));
                *counts.entry(key).or_insert(0) += 1;
            }
        }
        let mut boundary = 0;
        let mut nonmanifold = 0;
        for &c in counts.values() {
            if c == 1 {
                boundary += 1;
            } else if c > 2 {
                nonmanifold += 1;
            }
        }
        ManifoldReport {
            undirected_edges: counts.len(),
            boundary_edges: boundary,
            nonmanifold_edges: nonmanifold,
            euler_characteristic: self.vertices.len() as i64 - counts.len() as i64
                + self.triangles.len() as i64,
        }
    }

    /// Axis-aligned box as 12 triangles with outward orientation.
    pub fn axis_box(bb: Aabb<T>) -> Self {
        let (lo, hi) = (bb.min, bb.max);
        let v = |x: usize, y: usize, z: usize| {
            Vec3::new(
                if x == 0 { lo.x } else { hi.x },
                if y == 0 { lo.y } else { hi.y },
                if z == 0 { lo.z } else { hi.z },
            )
        };
        // Corner order: index bit 0 = x, bit 1 = y, bit 2 = z.
        let vertices = vec![
            v(0, 0, 0),
            v(1, 0, 0),
            v(0, 1, 0),
            v(1, 1, 0),
            v(0, 0, 1),
            v(1, 0, 1),
            v(0, 1, 1),
            v(1, 1, 1),
        ];
        let triangles = vec![
            // -z face (normal (0,0,-1)): viewed from below, wind clockwise in xy.
            [0, 2, 3],
            [0, 3, 1],
            // +z face.
            [4, 5, 7],
            [4, 7, 6],
            // -y face.
            [0, 1, 5],
            [0, 5, 4],
            // +y face.
            [2, 6, 7],
            [2, 7, 3],
            // -x face.
            [0, 4, 6],
            [0, 6, 2],
            // +x face.
            [1, 3, 7],
            [1, 7, 5],
        ];
        Self {
            vertices,
            triangles,
        }
    }

    /// Latitude/longitude sphere with fan caps at the poles; watertight.
    pub fn uv_sphere(center: Vec3<T>, radius: T, stacks: usize, slices: usize) -> Self {
        assert!(stacks >= 2 && slices >= 3);
        let mut vertices = Vec::with_capacity((stacks - 1) * slices + 2);
        vertices.push(center + Vec3::new(T::zero(), T::zero(), radius));
        for i in 1..stacks {
            let phi = T::PI() * T::of(i as f64) / T::of(stacks as f64);
            let (sin_phi, cos_phi) = phi.sin_cos();
            for j in 0..slices {
                let theta = T::of(2.0) * T::PI() * T::of(j as f64) / T::of(slices as f64);
                let (sin_theta, cos_theta) = theta.sin_cos();
                vertices.push(
                    center
                        + Vec3::new(
                            radius * sin_phi * cos_theta,
                            radius * sin_phi * sin_theta,
                            radius * cos_phi,
                        ),
                );
            }
        }
        let bottom = vertices.len() as u32;
        vertices.push(center + Vec3::new(T::zero(), T::zero(), -radius));

        let ring = |i: usize, j: usize| (1 + (i - 1) * slices + (j % slices)) as u32;
        let mut triangles = Vec::new();
        for j in 0..slices {
            triangles.push([0, ring(1, j), ring(1, j + 1)]);
        }
        for i in 1..stacks - 1 {
            for j in 0..slices {
                let a = ring(i, j);
                let b = ring(i, j + 1);
                let c = ring(i + 1, j);
                let d = ring(i + 1, j + 1);
                triangles.push([a, c, d]);
                triangles.push([a, d, b]);
            }
        }
        for j in 0..slices {
            triangles.push([bottom, ring(stacks - 1, j + 1), ring(stacks - 1, j)]);
        }
        Self {
            vertices,
            triangles,
        }
    }

    pub fn load_obj(path: impl AsRef<Path>) -> Result<ObjLoad<T>> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut vertices: Vec<Vec3<T>> = Vec::new();
        let mut triangles: Vec<[u32; 3]> = Vec::new();
        let mut dropped = 0usize;

        for (line_index, raw_line) in text.lines().enumerate() {
            let line_no = line_index + 1;
            let line = match raw_line.split_once('#') {
                Some((before, _)) => before,
                None => raw_line,
            };
            let mut tokens = line.split_whitespace();
            let Some(keyword) = tokens.next() else {
                continue;
            };
            match keyword {
                "v" => {
                    let mut coords = [T::zero(); 3];
                    for c in &mut coords {
                        let tok = tokens.next().ok_or_else(|| {
                            Error::parse(path, line_no, "vertex needs three coordinates")
                        })?;
                        let value: f64 = tok.parse().map_err(|_| {
                            Error::parse(path, line_no, format!("bad coordinate {tok:?}"))
                        })?;
                        if !value.is_finite() {
                            return Err(Error::parse(
                                path,
                                line_no,
                                format!("non-finite coordinate {tok:?}"),
                            ));
                        }
                        *c = T::of(value);
                    }
                    // A fourth (weight) coordinate is legal; anything further is not.
                    if tokens.next().is_some() && tokens.next().is_some() {
                        return Err(Error::parse(path, line_no, "too many vertex coordinates"));
                    }
                    vertices.push(Vec3::from_array(coords));
                }
                "f" => {
                    let mut face: Vec<u32> = Vec::new();
                    for tok in tokens {
                        let index_part = tok.split('/').next().unwrap_or("");
                        let idx: i64 = index_part.parse().map_err(|_| {
                            Error::parse(path, line_no, format!("bad vertex index {tok:?}"))
                        })?;
                        let resolved = if idx > 0 {
                            idx - 1
                        } else if idx < 0 {
                            vertices.len() as i64 + idx
                        } else {
                            return Err(Error::parse(path, line_no, "vertex index 0"));
                        };
                        if resolved < 0 || resolved >= vertices.len() as i64 {
                            return Err(Error::parse(
                                path,
                                line_no,
                                format!(
                                    "vertex index {idx} out of range (have {})",
                                    vertices.len()
                                ),
                            ));
                        }
                        face.push(resolved as u32);
                    }
                    if face.len() < 3 {
                        return Err(Error::parse(path, line_no, "face needs at least 3 vertices"));
                    }
                    for k in 1..face.len() - 1 {
                        let tri = [face[0], face[k], face[k + 1]];
                        if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                            dropped += 1;
                        } else {
                            triangles.push(tri);
                        }
                    }
                }
                _ => {}
            }
        }

        if vertices.is_empty() || triangles.is_empty() {
            return Err(Error::EmptyMesh);
        }
        Ok(ObjLoad {
            mesh: Self {
                vertices,
                triangles,
            },
            dropped_degenerate: dropped,
        })
    }

    pub fn save_obj(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::new();
        for v in &self.vertices {
            writeln!(out, "v {} {} {}", v.x, v.y, v.z).expect("string write");
        }
        for t in &self.triangles {
            writeln!(out, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1).expect("string write");
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}
