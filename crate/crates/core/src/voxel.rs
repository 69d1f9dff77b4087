//! Dense voxelization of triangle meshes and watertight surface recovery.
//!
//! Cells touched by any triangle (by a 13-axis separating-axis test) become
//! surface cells. A breadth-first fill from the padded grid border marks
//! everything it can reach as outside; whatever remains is inside. Meshes
//! with holes leak, leaving zero inside cells, which the fill report exposes
//! so callers can warn. A watertight mesh is recovered by running marching
//! cubes over the cell-center lattice with outside cells at 1, everything
//! else at 0, and the surface at 0.5.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::marching::{marching_cubes, ScalarGrid};
use crate::mesh::TriangleMesh;
use crate::real::Real;
use crate::template::Label;
use crate::vec3::{Aabb, Vec3};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CellState {
    Inside,
    Outside,
    Surface,
}

impl CellState {
    /// Surface cells count as inside: samples on the boundary are inside by
    /// the tie rule.
    pub fn label(self) -> Label {
        match self {
            CellState::Outside => Label::Outside,
            CellState::Inside | CellState::Surface => Label::Inside,
        }
    }
}

/// How a border flood fill partitioned the grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FillReport {
    pub inside: usize,
    pub outside: usize,
    pub surface: usize,
}

impl FillReport {
    /// True when the fill reached everything, meaning the mesh has holes
    /// (or no interior at this resolution).
    pub fn leaked(&self) -> bool {
        self.inside == 0
    }
}

#[derive(Clone, Debug)]
pub struct VoxelGrid<T> {
    /// Minimum corner of the padded grid.
    origin: Vec3<T>,
    /// Cell size per axis.
    spacing: Vec3<T>,
    /// Total cells per axis, padding included.
    cells: [usize; 3],
    padding: usize,
    content_domain: Aabb<T>,
    states: Vec<CellState>,
}

impl<T: Real> VoxelGrid<T> {
    /// Mark surface cells for every triangle of the mesh. `resolution` is the
    /// cell count per axis across `domain`; `padding` adds extra cells on
    /// every side so the outside region stays connected.
    pub fn voxelize(
        mesh: &TriangleMesh<T>,
        domain: &Aabb<T>,
        resolution: usize,
        padding: usize,
    ) -> Result<Self> {
        if resolution == 0 {
            return Err(Error::InvalidInput("voxel resolution must be positive".into()));
        }
        if mesh.triangles.is_empty() {
            return Err(Error::EmptyMesh);
        }
        let extent = domain.extent();
        if !(extent.min_element() > T::zero()) {
            return Err(Error::ZeroExtent);
        }
        let spacing = extent / T::of(resolution as f64);
        let pad = Vec3::new(
            spacing.x * T::of(padding as f64),
            spacing.y * T::of(padding as f64),
            spacing.z * T::of(padding as f64),
        );
        let origin = domain.min - pad;
        let n = resolution + 2 * padding;
        let cells = [n, n, n];
        let mut grid = Self {
            origin,
            spacing,
            cells,
            padding,
            content_domain: *domain,
            states: vec![CellState::Inside; n * n * n],
        };

        let half = spacing * T::of(0.5);
        for i in 0..mesh.triangles.len() {
            let tri = mesh.triangle(i);
            let bb = Aabb::from_points(tri.iter().copied()).expect("three points");
            let (lo, hi) = grid.candidate_range(&bb);
            for z in lo[2]..=hi[2] {
                for y in lo[1]..=hi[1] {
                    for x in lo[0]..=hi[0] {
                        let idx = grid.index(x, y, z);
                        if grid.states[idx] == CellState::Surface {
                            continue;
                        }
                        let center = grid.cell_center(x, y, z);
                        if tri_box_overlap(center, half, &tri) {
                            grid.states[idx] = CellState::Surface;
                        }
                    }
                }
            }
        }
        Ok(grid)
    }

    /// Breadth-first fill from the grid border, 6-connected.
    pub fn fill_outside(&mut self) -> FillReport {
        let [nx, ny, nz] = self.cells;
        let mut queue = VecDeque::new();
        let push = |states: &mut Vec<CellState>,
                        queue: &mut VecDeque<(usize, usize, usize)>,
                        x: usize,
                        y: usize,
                        z: usize| {
            let idx = (z * ny + y) * nx + x;
            if states[idx] == CellState::Inside {
                states[idx] = CellState::Outside;
                queue.push_back((x, y, z));
            }
        };
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    if x == 0 || y == 0 || z == 0 || x == nx - 1 || y == ny - 1 || z == nz - 1 {
                        push(&mut self.states, &mut queue, x, y, z);
                    }
                }
            }
        }
        while let Some((x, y, z)) = queue.pop_front() {
            if x > 0 {
                push(&mut self.states, &mut queue, x - 1, y, z);
            }
            if x + 1 < nx {
                push(&mut self.states, &mut queue, x + 1, y, z);
            }
            if y > 0 {
                push(&mut self.states, &mut queue, x, y - 1, z);
            }
            if y + 1 < ny {
                push(&mut self.states, &mut queue, x, y + 1, z);
            }
            if z > 0 {
                push(&mut self.states, &mut queue, x, y, z - 1);
            }
            if z + 1 < nz {
                push(&mut self.states, &mut queue, x, y, z + 1);
            }
        }

        let mut report = FillReport {
            inside: 0,
            outside: 0,
            surface: 0,
        };
        for s in &self.states {
            match s {
                CellState::Inside => report.inside += 1,
                CellState::Outside => report.outside += 1,
                CellState::Surface => report.surface += 1,
            }
        }
        report
    }

    /// Voxelize and fill in one call.
    pub fn from_mesh(
        mesh: &TriangleMesh<T>,
        domain: &Aabb<T>,
        resolution: usize,
        padding: usize,
    ) -> Result<(Self, FillReport)> {
        let mut grid = Self::voxelize(mesh, domain, resolution, padding)?;
        let report = grid.fill_outside();
        Ok((grid, report))
    }

    /// Closed mesh separating outside cells from the rest: marching cubes on
    /// the cell-center lattice with outside at 1 and inside/surface at 0.
    pub fn extract_watertight(&self) -> Result<TriangleMesh<T>> {
        let field = ScalarGrid {
            origin: self.origin + self.spacing * T::of(0.5),
            spacing: self.spacing,
            dims: self.cells,
            values: self
                .states
                .iter()
                .map(|s| {
                    if *s == CellState::Outside {
                        T::one()
                    } else {
                        T::zero()
                    }
                })
                .collect(),
        };
        let mesh = marching_cubes(&field, T::of(0.5));
        if mesh.triangles.is_empty() {
            return Err(Error::NoInsideCells);
        }
        Ok(mesh)
    }

    pub fn cells(&self) -> [usize; 3] {
        self.cells
    }

    pub fn padding(&self) -> usize {
        self.padding
    }

    pub fn spacing(&self) -> Vec3<T> {
        self.spacing
    }

    pub fn content_domain(&self) -> Aabb<T> {
        self.content_domain
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        debug_assert!(x < self.cells[0] && y < self.cells[1] && z < self.cells[2]);
        (z * self.cells[1] + y) * self.cells[0] + x
    }

    pub fn state(&self, x: usize, y: usize, z: usize) -> CellState {
        self.states[self.index(x, y, z)]
    }

    pub fn cell_center(&self, x: usize, y: usize, z: usize) -> Vec3<T> {
        let half = T::of(0.5);
        self.origin
            + Vec3::new(
                self.spacing.x * (T::of(x as f64) + half),
                self.spacing.y * (T::of(y as f64) + half),
                self.spacing.z * (T::of(z as f64) + half),
            )
    }

    /// State of the cell containing a point; beyond the padded grid
    /// everything is outside.
    pub fn state_at(&self, p: Vec3<T>) -> CellState {
        let mut idx = [0usize; 3];
        for d in 0..3 {
            let c = ((p[d] - self.origin[d]) / self.spacing[d]).floor();
            if c < T::zero() || c >= T::of(self.cells[d] as f64) {
                return CellState::Outside;
            }
            idx[d] = c.to_f64_lossy() as usize;
        }
        self.state(idx[0], idx[1], idx[2])
    }

    /// Cell range covering a box, expanded by one cell so geometry lying
    /// exactly on a lattice plane still reaches both adjacent cells.
    fn candidate_range(&self, bb: &Aabb<T>) -> ([usize; 3], [usize; 3]) {
        let mut lo = [0usize; 3];
        let mut hi = [0usize; 3];
        for d in 0..3 {
            let a = ((bb.min[d] - self.origin[d]) / self.spacing[d]).floor();
            let b = ((bb.max[d] - self.origin[d]) / self.spacing[d]).floor();
            let m = (self.cells[d] - 1) as i64;
            lo[d] = (a.to_f64_lossy() as i64 - 1).clamp(0, m) as usize;
            hi[d] = (b.to_f64_lossy() as i64 + 1).clamp(0, m) as usize;
        }
        (lo, hi)
    }
}

/// Separating-axis triangle/box overlap: the three box axes, the triangle
/// plane, and the nine edge cross products. Touching counts as overlap.
pub fn tri_box_overlap<T: Real>(
    box_center: Vec3<T>,
    box_half: Vec3<T>,
    tri: &[Vec3<T>; 3],
) -> bool {
    let v0 = tri[0] - box_center;
    let v1 = tri[1] - box_center;
    let v2 = tri[2] - box_center;

    let separated = |axis: Vec3<T>| -> bool {
        let p0 = v0.dot(axis);
        let p1 = v1.dot(axis);
        let p2 = v2.dot(axis);
        let r = box_half.x * axis.x.abs()
            + box_half.y * axis.y.abs()
            + box_half.z * axis.z.abs();
        p0.min(p1).min(p2) > r || p0.max(p1).max(p2) < -r
    };

    // Box face normals.
    if separated(Vec3::new(T::one(), T::zero(), T::zero()))
        || separated(Vec3::new(T::zero(), T::one(), T::zero()))
        || separated(Vec3::new(T::zero(), T::zero(), T::one()))
    {
        return false;
    }

    let e0 = v1 - v0;
    let e1 = v2 - v1;
    let e2 = v0 - v2;

    // Edge cross products with the box axes. A zero axis (edge parallel to
    // the box axis) never separates, which errs toward overlap.
    let units = [
        Vec3::new(T::one(), T::zero(), T::zero()),
        Vec3::new(T::zero(), T::one(), T::zero()),
        Vec3::new(T::zero(), T::zero(), T::one()),
    ];
    for e in [e0, e1, e2] {
        for u in units {
            if separated(u.cross(e)) {
                return false;
            }
        }
    }

    // Triangle plane.
    !separated(e0.cross(e1))
}
