//! Ray and proximity queries against a triangle mesh, accelerated by a
//! bounding-volume hierarchy.
//!
//! The BVH build is fully deterministic: median splits on the longest
//! centroid axis with index tie-breaks. Queries therefore return identical
//! results run to run, and inside/outside parity tests either count crossings
//! cleanly or report the direction as ambiguous so the caller can try the
//! next one.

use crate::error::{Error, Result};
use crate::mesh::TriangleMesh;
use crate::real::Real;
use crate::template::Label;
use crate::vec3::{Aabb, Vec3};

/// Triangles per leaf node.
const LEAF_SIZE: usize = 8;

/// Barycentric margin inside which a crossing counts as grazing an edge.
const GRAZE_EPS: f64 = 1e-9;

/// How many fallback directions a parity classification may consume.
pub const PARITY_BUDGET: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hit<T> {
    /// Distance along the ray in units of the direction's length.
    pub t: T,
    /// Original triangle index in the source mesh.
    pub triangle: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClosestPoint<T> {
    pub distance_squared: T,
    pub point: Vec3<T>,
    pub triangle: usize,
}

enum NodeKind {
    Leaf { start: u32, count: u32 },
    Inner { left: u32, right: u32 },
}

struct Node<T> {
    bbox: Aabb<T>,
    kind: NodeKind,
}

/// Bounding-volume hierarchy over a mesh's triangles. Owns copies of the
/// triangle vertices in build order.
pub struct MeshBvh<T> {
    nodes: Vec<Node<T>>,
    tris: Vec<[Vec3<T>; 3]>,
    tri_index: Vec<u32>,
    root: u32,
}

struct BuildTri<T> {
    bbox: Aabb<T>,
    centroid: Vec3<T>,
    tri: [Vec3<T>; 3],
    index: u32,
}

impl<T: Real> MeshBvh<T> {
    pub fn build(mesh: &TriangleMesh<T>) -> Result<Self> {
        if mesh.triangles.is_empty() || mesh.vertices.is_empty() {
            return Err(Error::EmptyMesh);
        }
        let third = T::one() / T::of(3.0);
        let mut items: Vec<BuildTri<T>> = (0..mesh.triangles.len())
            .map(|i| {
                let tri = mesh.triangle(i);
                let bbox = Aabb::from_points(tri.iter().copied()).expect("three points");
                BuildTri {
                    bbox,
                    centroid: (tri[0] + tri[1] + tri[2]) * third,
                    tri,
                    index: i as u32,
                }
            })
            .collect();

        let mut nodes = Vec::new();
        let root = build_node(&mut items, &mut nodes, 0);
        Ok(Self {
            nodes,
            tris: items.iter().map(|it| it.tri).collect(),
            tri_index: items.iter().map(|it| it.index).collect(),
            root,
        })
    }

    /// Nearest intersection with `t > t_min`. Boundary hits (edges, vertices)
    /// count; ties on `t` resolve to the lower original triangle index.
    pub fn nearest_hit(&self, origin: Vec3<T>, direction: Vec3<T>, t_min: T) -> Option<Hit<T>> {
        let inv_dir = safe_inverse(direction);
        let mut best: Option<Hit<T>> = None;
        let mut stack = vec![self.root];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id as usize];
            let t_cap = best.map_or(T::infinity(), |h| h.t);
            if !ray_intersects_box(origin, inv_dir, &node.bbox, t_min, t_cap) {
                continue;
            }
            match node.kind {
                NodeKind::Inner { left, right } => {
                    stack.push(right);
                    stack.push(left);
                }
                NodeKind::Leaf { start, count } => {
                    for k in start..start + count {
                        let tri = &self.tris[k as usize];
                        if let TriCrossing::Hit { t } | TriCrossing::Grazing { t } =
                            intersect_triangle(origin, direction, tri)
                        {
                            if t <= t_min {
                                continue;
                            }
                            let candidate = Hit {
                                t,
                                triangle: self.tri_index[k as usize] as usize,
                            };
                            let better = match best {
                                None => true,
                                Some(b) => {
                                    t < b.t || (t == b.t && candidate.triangle < b.triangle)
                                }
                            };
                            if better {
                                best = Some(candidate);
                            }
                        }
                    }
                }
            }
        }
        best
    }

    /// Number of crossings with `t > 0`, or `None` when any triangle is hit
    /// too close to an edge or too flat-on for the count to be trusted.
    pub fn count_crossings(&self, origin: Vec3<T>, direction: Vec3<T>) -> Option<usize> {
        let inv_dir = safe_inverse(direction);
        let graze_t = T::of(1e-12);
        let mut count = 0usize;
        let mut stack = vec![self.root];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id as usize];
            if !ray_intersects_box(origin, inv_dir, &node.bbox, T::zero(), T::infinity()) {
                continue;
            }
            match node.kind {
                NodeKind::Inner { left, right } => {
                    stack.push(right);
                    stack.push(left);
                }
                NodeKind::Leaf { start, count: n } => {
                    for k in start..start + n {
                        match intersect_triangle(origin, direction, &self.tris[k as usize]) {
                            TriCrossing::Miss => {}
                            TriCrossing::Grazing { .. } => return None,
                            TriCrossing::Hit { t } => {
                                if t.abs() <= graze_t {
                                    return None;
                                }
                                if t > T::zero() {
                                    count += 1;
                                }
                            }
                        }
                    }
                }
            }
        }
        Some(count)
    }

    /// Inside/outside by crossing parity, retrying with well-spread fallback
    /// directions when a cast grazes geometry.
    pub fn classify(&self, point: Vec3<T>) -> Result<Label> {
        for k in 0..PARITY_BUDGET {
            if let Some(crossings) = self.count_crossings(point, parity_direction(k)) {
                return Ok(if crossings % 2 == 1 {
                    Label::Inside
                } else {
                    Label::Outside
                });
            }
        }
        Err(Error::RetryBudget {
            attempts: PARITY_BUDGET,
        })
    }

    /// Closest point on the mesh surface.
    pub fn closest(&self, point: Vec3<T>) -> ClosestPoint<T> {
        let mut best = ClosestPoint {
            distance_squared: T::infinity(),
            point,
            triangle: usize::MAX,
        };
        self.closest_recurse(self.root, point, &mut best);
        best
    }

    /// Distance from a point to the mesh surface.
    pub fn distance(&self, point: Vec3<T>) -> T {
        self.closest(point).distance_squared.sqrt()
    }

    fn closest_recurse(&self, id: u32, point: Vec3<T>, best: &mut ClosestPoint<T>) {
        let node = &self.nodes[id as usize];
        if node.bbox.distance_squared(point) >= best.distance_squared {
            return;
        }
        match node.kind {
            NodeKind::Inner { left, right } => {
                // Visit the nearer child first to tighten the bound sooner.
                let dl = self.nodes[left as usize].bbox.distance_squared(point);
                let dr = self.nodes[right as usize].bbox.distance_squared(point);
                let (first, second) = if dl <= dr { (left, right) } else { (right, left) };
                self.closest_recurse(first, point, best);
                self.closest_recurse(second, point, best);
            }
            NodeKind::Leaf { start, count } => {
                for k in start..start + count {
                    let tri = &self.tris[k as usize];
                    let q = closest_point_on_triangle(point, tri[0], tri[1], tri[2]);
                    let d2 = (point - q).norm_squared();
                    let index = self.tri_index[k as usize] as usize;
                    let better = d2 < best.distance_squared
                        || (d2 == best.distance_squared && index < best.triangle);
                    if better {
                        *best = ClosestPoint {
                            distance_squared: d2,
                            point: q,
                            triangle: index,
                        };
                    }
                }
            }
        }
    }
}

fn build_node<T: Real>(items: &mut [BuildTri<T>], nodes: &mut Vec<Node<T>>, offset: u32) -> u32 {
    let mut bbox = items[0].bbox;
    for it in items.iter().skip(1) {
        bbox = bbox.union(&it.bbox);
    }
    if items.len() <= LEAF_SIZE {
        nodes.push(Node {
            bbox,
            kind: NodeKind::Leaf {
                start: offset,
                count: items.len() as u32,
            },
        });
        return (nodes.len() - 1) as u32;
    }

    let centroid_bb =
        Aabb::from_points(items.iter().map(|it| it.centroid)).expect("non-empty slice");
    let extent = centroid_bb.extent();
    let axis = if extent.x >= extent.y && extent.x >= extent.z {
        0
    } else if extent.y >= extent.z {
        1
    } else {
        2
    };
    items.sort_unstable_by(|a, b| {
        a.centroid[axis]
            .partial_cmp(&b.centroid[axis])
            .expect("finite centroids")
            .then(a.index.cmp(&b.index))
    });
    let mid = items.len() / 2;
    let (lo, hi) = items.split_at_mut(mid);
    let left = build_node(lo, nodes, offset);
    let right = build_node(hi, nodes, offset + mid as u32);
    nodes.push(Node {
        bbox,
        kind: NodeKind::Inner { left, right },
    });
    (nodes.len() - 1) as u32
}

fn safe_inverse<T: Real>(d: Vec3<T>) -> Vec3<T> {
    // Division by zero gives +/-inf, which the slab test handles.
    Vec3::new(T::one() / d.x, T::one() / d.y, T::one() / d.z)
}

fn ray_intersects_box<T: Real>(
    origin: Vec3<T>,
    inv_dir: Vec3<T>,
    bbox: &Aabb<T>,
    t_min: T,
    t_max: T,
) -> bool {
    let mut enter = t_min;
    let mut exit = t_max;
    for d in 0..3 {
        let a = (bbox.min[d] - origin[d]) * inv_dir[d];
        let b = (bbox.max[d] - origin[d]) * inv_dir[d];
        // Float::min/max drop a NaN operand, which arises when the origin
        // sits exactly on a slab plane of an axis-parallel ray.
        enter = enter.max(a.min(b));
        exit = exit.min(a.max(b));
    }
    enter <= exit
}

enum TriCrossing<T> {
    Miss,
    Hit { t: T },
    /// Numerically ambiguous: near an edge or near-parallel to the plane.
    Grazing { t: T },
}

fn intersect_triangle<T: Real>(
    origin: Vec3<T>,
    direction: Vec3<T>,
    tri: &[Vec3<T>; 3],
) -> TriCrossing<T> {
    let eps = T::of(GRAZE_EPS);
    let edge1 = tri[1] - tri[0];
    let edge2 = tri[2] - tri[0];
    let pvec = direction.cross(edge2);
    let det = edge1.dot(pvec);
    // Relative parallelism guard: det is a triple product of the three.
    let det_scale = direction.norm() * edge1.norm() * edge2.norm();
    if det.abs() <= T::of(1e-12) * det_scale {
        // Parallel or degenerate: only ambiguous if the ray's line passes
        // near the triangle's plane slab; for counting purposes treat any
        // parallel case as grazing only when the triangle is real.
        return if det_scale > T::zero() && det.abs() <= T::of(1e-15) * det_scale {
            TriCrossing::Miss
        } else {
            TriCrossing::Grazing { t: T::zero() }
        };
    }
    let inv_det = T::one() / det;
    let tvec = origin - tri[0];
    let u = tvec.dot(pvec) * inv_det;
    let qvec = tvec.cross(edge1);
    let v = direction.dot(qvec) * inv_det;
    let w = T::one() - u - v;

    let lo = -eps;
    if u < lo || v < lo || w < lo {
        return TriCrossing::Miss;
    }
    let t = edge2.dot(qvec) * inv_det;
    if u <= eps || v <= eps || w <= eps {
        return TriCrossing::Grazing { t };
    }
    TriCrossing::Hit { t }
}

/// Unit directions on a spherical Fibonacci lattice: well spread and never
/// axis-aligned, so successive fallbacks rarely graze the same feature.
pub fn parity_direction<T: Real>(k: usize) -> Vec3<T> {
    assert!(k < PARITY_BUDGET);
    let golden_angle = std::f64::consts::PI * (3.0 - 5.0f64.sqrt());
    let z = 1.0 - 2.0 * (k as f64 + 0.5) / PARITY_BUDGET as f64;
    let r = (1.0 - z * z).sqrt();
    let theta = golden_angle * k as f64;
    Vec3::new(
        T::of(r * theta.cos()),
        T::of(r * theta.sin()),
        T::of(z),
    )
}

/// Closest point on a triangle by Voronoi-region classification.
fn closest_point_on_triangle<T: Real>(
    p: Vec3<T>,
    a: Vec3<T>,
    b: Vec3<T>,
    c: Vec3<T>,
) -> Vec3<T> {
    let zero = T::zero();
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(ap);
    let d2 = ac.dot(ap);
    if d1 <= zero && d2 <= zero {
        return a;
    }
    let bp = p - b;
    let d3 = ab.dot(bp);
    let d4 = ac.dot(bp);
    if d3 >= zero && d4 <= d3 {
        return b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= zero && d1 >= zero && d3 <= zero {
        let v = d1 / (d1 - d3);
        return a + ab * v;
    }
    let cp = p - c;
    let d5 = ab.dot(cp);
    let d6 = ac.dot(cp);
    if d6 >= zero && d5 <= d6 {
        return c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= zero && d2 >= zero && d6 <= zero {
        let w = d2 / (d2 - d6);
        return a + ac * w;
    }
    let va = d3 * d6 - d5 * d4;
    if va <= zero && d4 - d3 >= zero && d5 - d6 >= zero {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }
    let denom = va + vb + vc;
    if !(denom > zero) {
        // Degenerate (collinear) triangle: best point on its edges.
        let c1 = closest_point_on_segment(p, a, b);
        let c2 = closest_point_on_segment(p, a, c);
        let c3 = closest_point_on_segment(p, b, c);
        let mut best = c1;
        if (p - c2).norm_squared() < (p - best).norm_squared() {
            best = c2;
        }
        if (p - c3).norm_squared() < (p - best).norm_squared() {
            best = c3;
        }
        return best;
    }
    let inv = T::one() / denom;
    a + ab * (vb * inv) + ac * (vc * inv)
}

fn closest_point_on_segment<T: Real>(p: Vec3<T>, a: Vec3<T>, b: Vec3<T>) -> Vec3<T> {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 <= T::zero() {
        return a;
    }
    let t = (p - a).dot(ab) / len2;
    let t = t.max(T::zero()).min(T::one());
    a + ab * t
}
