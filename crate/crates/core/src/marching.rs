//! Marching cubes over a dense scalar lattice, shared by isosurface
//! extraction (smooth fields) and voxel-grid surfacing (binary occupancy).
//!
//! Vertices are welded exactly: every output vertex lives on a lattice edge
//! and is created once, keyed by that edge, so triangles from neighboring
//! cells share vertices bit for bit and closed fields produce closed meshes.

use std::collections::HashMap;

use crate::mc_tables::{EDGE_CORNERS, TRI_TABLE};
use crate::mesh::TriangleMesh;
use crate::real::Real;
use crate::vec3::{Aabb, Vec3};

/// Dense scalar samples on a regular lattice. `dims` counts lattice nodes
/// per axis; values are stored x-fastest (`(z * ny + y) * nx + x`).
#[derive(Clone, Debug)]
pub struct ScalarGrid<T> {
    pub origin: Vec3<T>,
    pub spacing: Vec3<T>,
    pub dims: [usize; 3],
    pub values: Vec<T>,
}

impl<T: Real> ScalarGrid<T> {
    /// Allocate a grid whose nodes span `domain` with `cells` cells per axis
    /// (so `cells + 1` nodes), filled with zeros.
    pub fn zeros(domain: &Aabb<T>, cells: [usize; 3]) -> Self {
        assert!(cells.iter().all(|&c| c >= 1), "need at least one cell per axis");
        let extent = domain.extent();
        let spacing = Vec3::new(
            extent.x / T::of(cells[0] as f64),
            extent.y / T::of(cells[1] as f64),
            extent.z / T::of(cells[2] as f64),
        );
        let dims = [cells[0] + 1, cells[1] + 1, cells[2] + 1];
        Self {
            origin: domain.min,
            spacing,
            dims,
            values: vec![T::zero(); dims[0] * dims[1] * dims[2]],
        }
    }

    /// Sample a function at every lattice node.
    pub fn sample(domain: &Aabb<T>, cells: [usize; 3], f: impl Fn(Vec3<T>) -> T) -> Self {
        let mut grid = Self::zeros(domain, cells);
        for z in 0..grid.dims[2] {
            for y in 0..grid.dims[1] {
                for x in 0..grid.dims[0] {
                    let p = grid.position(x, y, z);
                    let i = grid.index(x, y, z);
                    grid.values[i] = f(p);
                }
            }
        }
        grid
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        debug_assert!(x < self.dims[0] && y < self.dims[1] && z < self.dims[2]);
        (z * self.dims[1] + y) * self.dims[0] + x
    }

    #[inline]
    pub fn position(&self, x: usize, y: usize, z: usize) -> Vec3<T> {
        self.origin
            + Vec3::new(
                self.spacing.x * T::of(x as f64),
                self.spacing.y * T::of(y as f64),
                self.spacing.z * T::of(z as f64),
            )
    }

    #[inline]
    pub fn value(&self, x: usize, y: usize, z: usize) -> T {
        self.values[self.index(x, y, z)]
    }
}

/// Per-cell corner offsets in table order.
const CORNER_OFFSETS: [(usize, usize, usize); 8] = [
    (0, 0, 0),
    (1, 0, 0),
    (1, 1, 0),
    (0, 1, 0),
    (0, 0, 1),
    (1, 0, 1),
    (1, 1, 1),
    (0, 1, 1),
];

/// Extract the isosurface of the lattice. Corners with values strictly below
/// the isolevel are inside; triangles wind outward (away from the inside).
pub fn marching_cubes<T: Real>(grid: &ScalarGrid<T>, isolevel: T) -> TriangleMesh<T> {
    let [nx, ny, nz] = grid.dims;
    let mut vertices: Vec<Vec3<T>> = Vec::new();
    let mut triangles: Vec<[u32; 3]> = Vec::new();
    // Global edge key: lattice index of the lower corner plus the axis.
    let mut edge_vertex: HashMap<(usize, u8), u32> = HashMap::new();

    for z in 0..nz.saturating_sub(1) {
        for y in 0..ny.saturating_sub(1) {
            for x in 0..nx.saturating_sub(1) {
                let mut case = 0usize;
                for (bit, (dx, dy, dz)) in CORNER_OFFSETS.iter().enumerate() {
                    if grid.value(x + dx, y + dy, z + dz) < isolevel {
                        case |= 1 << bit;
                    }
                }
                let row = &TRI_TABLE[case];
                if row[0] < 0 {
                    continue;
                }

                let mut vertex_on_edge = |edge: usize| -> u32 {
                    let (ca, cb) = EDGE_CORNERS[edge];
                    let (ax, ay, az) = CORNER_OFFSETS[ca];
                    let (bx, by, bz) = CORNER_OFFSETS[cb];
                    let a = (x + ax, y + ay, z + az);
                    let b = (x + bx, y + by, z + bz);
                    // Orient the key from the lower lattice corner.
                    let (lo, hi, axis) = if (a.2, a.1, a.0) <= (b.2, b.1, b.0) {
                        (a, b, edge_axis(a, b))
                    } else {
                        (b, a, edge_axis(b, a))
                    };
                    let key = (grid.index(lo.0, lo.1, lo.2), axis);
                    if let Some(&id) = edge_vertex.get(&key) {
                        return id;
                    }
                    let va = grid.value(lo.0, lo.1, lo.2);
                    let vb = grid.value(hi.0, hi.1, hi.2);
                    let pa = grid.position(lo.0, lo.1, lo.2);
                    let pb = grid.position(hi.0, hi.1, hi.2);
                    let t = ((isolevel - va) / (vb - va)).max(T::zero()).min(T::one());
                    let p = pa + (pb - pa) * t;
                    let id = vertices.len() as u32;
                    vertices.push(p);
                    edge_vertex.insert(key, id);
                    id
                };

                let mut k = 0;
                while k < 16 && row[k] >= 0 {
                    let i0 = vertex_on_edge(row[k] as usize);
                    let i1 = vertex_on_edge(row[k + 1] as usize);
                    let i2 = vertex_on_edge(row[k + 2] as usize);
                    // Table order winds toward the inside under our bit
                    // convention; swap so normals point outward (positive
                    // signed volume for closed surfaces).
                    triangles.push([i0, i2, i1]);
                    k += 3;
                }
            }
        }
    }

    TriangleMesh {
        vertices,
        triangles,
    }
}

fn edge_axis(lo: (usize, usize, usize), hi: (usize, usize, usize)) -> u8 {
    if lo.0 != hi.0 {
        0
    } else if lo.1 != hi.1 {
        1
    } else {
        debug_assert!(lo.2 != hi.2);
        2
    }
}

/// Split by shared vertices and drop every connected component whose surface
/// area falls below `min_area`. Returns the filtered mesh and how many
/// components were removed.
pub fn filter_small_components<T: Real>(
    mesh: &TriangleMesh<T>,
    min_area: T,
) -> (TriangleMesh<T>, usize) {
    if mesh.triangles.is_empty() {
        return (mesh.clone(), 0);
    }
    let mut dsu = DisjointSets::new(mesh.vertices.len());
    for t in &mesh.triangles {
        dsu.union(t[0] as usize, t[1] as usize);
        dsu.union(t[1] as usize, t[2] as usize);
    }

    let mut component_area: HashMap<usize, T> = HashMap::new();
    for (i, t) in mesh.triangles.iter().enumerate() {
        let root = dsu.find(t[0] as usize);
        *component_area.entry(root).or_insert_with(T::zero) += mesh.triangle_area(i);
    }
    let total_components = component_area.len();

    let mut vertex_map: HashMap<u32, u32> = HashMap::new();
    let mut out = TriangleMesh::default();
    for t in &mesh.triangles {
        let root = dsu.find(t[0] as usize);
        if component_area[&root] < min_area {
            continue;
        }
        let mut mapped = [0u32; 3];
        for (slot, &v) in mapped.iter_mut().zip(t) {
            *slot = *vertex_map.entry(v).or_insert_with(|| {
                out.vertices.push(mesh.vertices[v as usize]);
                (out.vertices.len() - 1) as u32
            });
        }
        out.triangles.push(mapped);
    }

    let kept = component_area
        .values()
        .filter(|&&a| a >= min_area)
        .count();
    (out, total_components - kept)
}

struct DisjointSets {
    parent: Vec<usize>,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let ra = self.find(a);
        let rb = self.find(b);
        if ra != rb {
            // Smaller root wins so results do not depend on call order.
            let (lo, hi) = (ra.min(rb), ra.max(rb));
            self.parent[hi] = lo;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mc_tables::{EDGE_CORNERS, TRI_TABLE};
    use approx::assert_relative_eq;

    #[test]
    fn table_cases_are_consistent() {
        for case in 0..256usize {
            let row = &TRI_TABLE[case];
            let mut edges_used = 0u16;
            let mut k = 0;
            while k < 16 && row[k] >= 0 {
                for j in 0..3 {
                    let e = row[k + j];
                    assert!((0..12).contains(&e), "case {case} edge {e}");
                    edges_used |= 1 << e;
                    // Every listed edge must actually cross the surface.
                    let (a, b) = EDGE_CORNERS[e as usize];
                    let ia = (case >> a) & 1;
                    let ib = (case >> b) & 1;
                    assert_ne!(ia, ib, "case {case} edge {e} does not cross");
                }
                k += 3;
            }
            assert!(k <= 15, "case {case} overruns");
            // Complementary cases cut exactly the same edges.
            let comp = &TRI_TABLE[255 - case];
            let mut comp_edges = 0u16;
            let mut k = 0;
            while k < 16 && comp[k] >= 0 {
                comp_edges |= 1 << comp[k];
                comp_edges |= 1 << comp[k + 1];
                comp_edges |= 1 << comp[k + 2];
                k += 3;
            }
            assert_eq!(edges_used, comp_edges, "case {case} vs complement");
        }
    }

    fn sphere_grid(radius: f64, cells: usize) -> ScalarGrid<f64> {
        let domain = Aabb::new(Vec3::splat(-1.0), Vec3::splat(1.0));
        ScalarGrid::sample(&domain, [cells; 3], |p| p.norm() - radius)
    }

    #[test]
    fn sphere_surface_is_closed_and_outward() {
        let mesh = marching_cubes(&sphere_grid(0.6, 40), 0.0);
        assert!(!mesh.triangles.is_empty());
        let report = mesh.manifold_report();
        assert!(report.is_closed(), "{report:?}");
        assert_eq!(report.euler_characteristic, 2);
        let exact = 4.0 / 3.0 * std::f64::consts::PI * 0.6f64.powi(3);
        assert_relative_eq!(mesh.signed_volume(), exact, max_relative = 0.01);
        assert_relative_eq!(
            mesh.area(),
            4.0 * std::f64::consts::PI * 0.36,
            max_relative = 0.01
        );
    }

    #[test]
    fn all_vertices_are_welded_and_referenced() {
        let mesh = marching_cubes(&sphere_grid(0.5, 16), 0.0);
        let mut seen = std::collections::HashSet::new();
        for v in &mesh.vertices {
            let key = (v.x.to_bits(), v.y.to_bits(), v.z.to_bits());
            assert!(seen.insert(key), "duplicate vertex at {v:?}");
        }
        let mut referenced = vec![false; mesh.vertices.len()];
        for t in &mesh.triangles {
            for &i in t {
                referenced[i as usize] = true;
            }
        }
        assert!(referenced.iter().all(|&r| r));
    }

    #[test]
    fn binary_occupancy_extracts_closed_surface() {
        // One inside node in the middle of a 5^3 lattice of outside nodes.
        let domain = Aabb::new(Vec3::splat(-1.0), Vec3::splat(1.0));
        let mut grid = ScalarGrid::zeros(&domain, [4, 4, 4]);
        for v in &mut grid.values {
            *v = 1.0;
        }
        let center = grid.index(2, 2, 2);
        grid.values[center] = 0.0;
        let mesh = marching_cubes(&grid, 0.5);
        // Six cut edges around the lone inside node form an octahedron.
        assert_eq!(mesh.vertices.len(), 6);
        assert_eq!(mesh.triangles.len(), 8);
        let report = mesh.manifold_report();
        assert!(report.is_closed());
        assert_eq!(report.euler_characteristic, 2);
        assert!(mesh.signed_volume() > 0.0);
    }

    #[test]
    fn marching_cubes_is_deterministic() {
        let a = marching_cubes(&sphere_grid(0.55, 20), 0.0);
        let b = marching_cubes(&sphere_grid(0.55, 20), 0.0);
        assert_eq!(a.triangles, b.triangles);
        assert_eq!(a.vertices.len(), b.vertices.len());
        for (x, y) in a.vertices.iter().zip(&b.vertices) {
            for d in 0..3 {
                assert_eq!(x[d].to_bits(), y[d].to_bits());
            }
        }
    }

    #[test]
    fn small_components_are_filtered_by_area() {
        // Two spheres of different sizes in one field.
        let domain = Aabb::new(Vec3::splat(-1.0), Vec3::splat(1.0));
        let grid = ScalarGrid::sample(&domain, [48; 3], |p: Vec3<f64>| {
            let a = (p - Vec3::new(-0.45, 0.0, 0.0)).norm() - 0.35;
            let b = (p - Vec3::new(0.55, 0.0, 0.0)).norm() - 0.1;
            a.min(b)
        });
        let mesh = marching_cubes(&grid, 0.0);
        let big_area = 4.0 * std::f64::consts::PI * 0.35f64.powi(2);
        let small_area = 4.0 * std::f64::consts::PI * 0.1f64.powi(2);

        let (kept_all, removed) = filter_small_components(&mesh, small_area * 0.5);
        assert_eq!(removed, 0);
        assert_eq!(kept_all.triangles.len(), mesh.triangles.len());

        let (kept_big, removed) = filter_small_components(&mesh, (small_area + big_area) * 0.5);
        assert_eq!(removed, 1);
        assert!(kept_big.triangles.len() < mesh.triangles.len());
        assert_relative_eq!(kept_big.area(), big_area, max_relative = 0.02);
        assert!(kept_big.manifold_report().is_closed());

        let (kept_none, removed) = filter_small_components(&mesh, big_area * 2.0);
        assert_eq!(removed, 2);
        assert!(kept_none.triangles.is_empty());
    }
}
