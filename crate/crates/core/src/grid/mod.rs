//! Staggered (MAC) grid on the fluid phase: scalars at cell centres,
//! velocity components at faces.
//!
//! Cells are indexed `c = j * nx + i`. The x-face `(i, j)` sits between cells
//! `(i - 1, j)` and `(i, j)`; the y-face `(i, j)` between `(i, j - 1)` and
//! `(i, j)`. On a periodic grid there are `nx` x-faces per row (face 0 wraps),
//! on a walled grid `nx + 1`.

pub mod dense;
pub mod field;
pub mod krylov;
pub mod multigrid;
pub mod ops;
pub mod stokes;
pub mod sum;

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use field::{MacVectorField, ScalarField};
pub use krylov::SolveReport;

pub const NONE: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("field does not match the grid: {0}")]
    GridMismatch(String),
    #[error("solver did not converge: {0}")]
    NoConvergence(SolveReport),
    #[error("right-hand side is not orthogonal to the kernel (defect {0:e})")]
    InconsistentRhs(f64),
    #[error("dense system is singular")]
    Singular,
    #[error("malformed field file: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Topology {
    Periodic,
    Walled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaceKind {
    /// Both neighbours fluid.
    Open,
    /// Fluid on one side, grain on the other.
    Wall,
    /// Fluid cell against the outer wall of a walled grid.
    Boundary,
    /// No fluid neighbour.
    Solid,
}

/// A fluid face on a grain surface, with its surface quadrature weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryFace {
    pub axis: Axis,
    pub face: usize,
    pub cell: usize,
    pub grain: usize,
    pub weight: f64,
}

/// Realized fluid geometry on a rectangular cell grid.
#[derive(Debug, Clone)]
pub struct FluidGrid {
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
    pub topology: Topology,
    fluid: Vec<bool>,
    grain_of: Vec<u32>,
    x_kind: Vec<FaceKind>,
    y_kind: Vec<FaceKind>,
    boundary: Vec<BoundaryFace>,
    n_grains: usize,
    fluid_cells: Vec<u32>,
    /// Per cell: neighbour across (left, right, bottom, top) through an open face.
    cell_nbr: Vec<[u32; 4]>,
    /// Per cell: the four face indices (left x, right x, bottom y, top y).
    cell_face: Vec<[u32; 4]>,
    vel_x: VelocityStencil,
    vel_y: VelocityStencil,
}

/// Five-point vector Laplacian restricted to open faces; links to non-open
/// faces become Dirichlet-zero contributions to the diagonal.
#[derive(Debug, Clone)]
pub(crate) struct VelocityStencil {
    pub open: Vec<u32>,
    pub nbr: Vec<[u32; 4]>,
    /// Diagonal in units of 1/h^2, per open face (same order as `open`).
    pub diag: Vec<f64>,
}

impl FluidGrid {
    /// Builds a grid from a fluid mask and the grain owning each solid cell.
    /// Grain-surface weights are the raw face length h.
    pub fn from_mask(
        nx: usize,
        ny: usize,
        h: f64,
        topology: Topology,
        fluid: Vec<bool>,
        grain_of: Vec<u32>,
    ) -> Self {
        assert_eq!(fluid.len(), nx * ny);
        assert_eq!(grain_of.len(), nx * ny);
        let n_grains = grain_of
            .iter()
            .filter(|&&g| g != NONE)
            .map(|&g| g as usize + 1)
            .max()
            .unwrap_or(0);
        let mut g = FluidGrid {
            nx,
            ny,
            h,
            topology,
            fluid,
            grain_of,
            x_kind: Vec::new(),
            y_kind: Vec::new(),
            boundary: Vec::new(),
            n_grains,
            fluid_cells: Vec::new(),
            cell_nbr: Vec::new(),
            cell_face: Vec::new(),
            vel_x: VelocityStencil {
                open: vec![],
                nbr: vec![],
                diag: vec![],
            },
            vel_y: VelocityStencil {
                open: vec![],
                nbr: vec![],
                diag: vec![],
            },
        };
        g.classify();
        g
    }

    /// All-fluid grid.
    pub fn all_fluid(nx: usize, ny: usize, h: f64, topology: Topology) -> Self {
        Self::from_mask(
            nx,
            ny,
            h,
            topology,
            vec![true; nx * ny],
            vec![NONE; nx * ny],
        )
    }

    pub fn cells(&self) -> usize {
        self.nx * self.ny
    }

    pub fn nfx(&self) -> usize {
        match self.topology {
            Topology::Periodic => self.nx,
            Topology::Walled => self.nx + 1,
        }
    }

    pub fn nfy(&self) -> usize {
        match self.topology {
            Topology::Periodic => self.ny,
            Topology::Walled => self.ny + 1,
        }
    }

    pub fn x_faces(&self) -> usize {
        self.nfx() * self.ny
    }

    pub fn y_faces(&self) -> usize {
        self.nx * self.nfy()
    }

    pub fn lx(&self) -> f64 {
        self.nx as f64 * self.h
    }

    pub fn ly(&self) -> f64 {
        self.ny as f64 * self.h
    }

    pub fn is_fluid(&self, c: usize) -> bool {
        self.fluid[c]
    }

    pub fn fluid_mask(&self) -> &[bool] {
        &self.fluid
    }

    pub fn grain_of_cell(&self, c: usize) -> Option<usize> {
        let g = self.grain_of[c];
        (g != NONE).then_some(g as usize)
    }

    pub fn fluid_cells(&self) -> &[u32] {
        &self.fluid_cells
    }

    pub fn fluid_count(&self) -> usize {
        self.fluid_cells.len()
    }

    pub fn porosity(&self) -> f64 {
        self.fluid_cells.len() as f64 / self.cells() as f64
    }

    pub fn n_grains(&self) -> usize {
        self.n_grains
    }

    pub fn x_kind(&self, f: usize) -> FaceKind {
        self.x_kind[f]
    }

    pub fn y_kind(&self, f: usize) -> FaceKind {
        self.y_kind[f]
    }

    pub fn kind(&self, axis: Axis, f: usize) -> FaceKind {
        match axis {
            Axis::X => self.x_kind[f],
            Axis::Y => self.y_kind[f],
        }
    }

    pub fn boundary_faces(&self) -> &[BoundaryFace] {
        &self.boundary
    }

    pub(crate) fn boundary_faces_mut(&mut self) -> &mut [BoundaryFace] {
        &mut self.boundary
    }

    pub(crate) fn cell_nbr(&self) -> &[[u32; 4]] {
        &self.cell_nbr
    }

    pub(crate) fn cell_face(&self) -> &[[u32; 4]] {
        &self.cell_face
    }

    pub(crate) fn vel(&self, axis: Axis) -> &VelocityStencil {
        match axis {
            Axis::X => &self.vel_x,
            Axis::Y => &self.vel_y,
        }
    }

    pub fn open_faces(&self, axis: Axis) -> &[u32] {
        &self.vel(axis).open
    }

    /// True when no face blocks the flow, so constant velocities are in the
    /// kernel of the Stokes operator.
    pub fn is_unobstructed(&self) -> bool {
        self.topology == Topology::Periodic && self.fluid_cells.len() == self.cells()
    }

    /// Cells on either side of x-face (i, j).
    pub fn x_face_cells(&self, i: usize, j: usize) -> (Option<usize>, Option<usize>) {
        let nx = self.nx;
        match self.topology {
            Topology::Periodic => (Some(j * nx + (i + nx - 1) % nx), Some(j * nx + i)),
            Topology::Walled => (
                (i > 0).then(|| j * nx + i - 1),
                (i < nx).then(|| j * nx + i),
            ),
        }
    }

    /// Cells below and above y-face (i, j).
    pub fn y_face_cells(&self, i: usize, j: usize) -> (Option<usize>, Option<usize>) {
        let (nx, ny) = (self.nx, self.ny);
        match self.topology {
            Topology::Periodic => (Some(((j + ny - 1) % ny) * nx + i), Some(j * nx + i)),
            Topology::Walled => (
                (j > 0).then(|| (j - 1) * nx + i),
                (j < ny).then(|| j * nx + i),
            ),
        }
    }

    /// Centre of the given face in physical coordinates.
    pub fn face_center(&self, axis: Axis, f: usize) -> [f64; 2] {
        let h = self.h;
        match axis {
            Axis::X => {
                let (i, j) = (f % self.nfx(), f / self.nfx());
                [i as f64 * h, (j as f64 + 0.5) * h]
            }
            Axis::Y => {
                let (i, j) = (f % self.nx, f / self.nx);
                [(i as f64 + 0.5) * h, j as f64 * h]
            }
        }
    }

    pub fn cell_center(&self, c: usize) -> [f64; 2] {
        let (i, j) = (c % self.nx, c / self.nx);
        [(i as f64 + 0.5) * self.h, (j as f64 + 0.5) * self.h]
    }

    fn face_kind(&self, a: Option<usize>, b: Option<usize>) -> FaceKind {
        match (a.map(|c| self.fluid[c]), b.map(|c| self.fluid[c])) {
            (Some(true), Some(true)) => FaceKind::Open,
            (Some(true), Some(false)) | (Some(false), Some(true)) => FaceKind::Wall,
            (None, Some(true)) | (Some(true), None) => FaceKind::Boundary,
            _ => FaceKind::Solid,
        }
    }

    fn classify(&mut self) {
        let (nx, ny, nfx, nfy) = (self.nx, self.ny, self.nfx(), self.nfy());
        self.x_kind = vec![FaceKind::Solid; nfx * ny];
        self.y_kind = vec![FaceKind::Solid; nx * nfy];
        self.boundary.clear();
        for j in 0..ny {
            for i in 0..nfx {
                let (a, b) = self.x_face_cells(i, j);
                let k = self.face_kind(a, b);
                self.x_kind[j * nfx + i] = k;
                if k == FaceKind::Wall {
                    self.push_wall(Axis::X, j * nfx + i, a.unwrap(), b.unwrap());
                }
            }
        }
        for j in 0..nfy {
            for i in 0..nx {
                let (a, b) = self.y_face_cells(i, j);
                let k = self.face_kind(a, b);
                self.y_kind[j * nx + i] = k;
                if k == FaceKind::Wall {
                    self.push_wall(Axis::Y, j * nx + i, a.unwrap(), b.unwrap());
                }
            }
        }
        self.fluid_cells = (0..nx * ny)
            .filter(|&c| self.fluid[c])
            .map(|c| c as u32)
            .collect();

        self.cell_face = (0..nx * ny)
            .map(|c| {
                let (i, j) = (c % nx, c / nx);
                let right = match self.topology {
                    Topology::Periodic => j * nfx + (i + 1) % nx,
                    Topology::Walled => j * nfx + i + 1,
                };
                let top = match self.topology {
                    Topology::Periodic => ((j + 1) % ny) * nx + i,
                    Topology::Walled => (j + 1) * nx + i,
                };
                [
                    (j * nfx + i) as u32,
                    right as u32,
                    (j * nx + i) as u32,
                    top as u32,
                ]
            })
            .collect();
        self.cell_nbr = (0..nx * ny)
            .map(|c| {
                let f = self.cell_face[c];
                let (i, j) = (c % nx, c / nx);
                let mut out = [NONE; 4];
                if self.x_kind[f[0] as usize] == FaceKind::Open {
                    out[0] = (j * nx + (i + nx - 1) % nx) as u32;
                }
                if self.x_kind[f[1] as usize] == FaceKind::Open {
                    out[1] = (j * nx + (i + 1) % nx) as u32;
                }
                if self.y_kind[f[2] as usize] == FaceKind::Open {
                    out[2] = (((j + ny - 1) % ny) * nx + i) as u32;
                }
                if self.y_kind[f[3] as usize] == FaceKind::Open {
                    out[3] = (((j + 1) % ny) * nx + i) as u32;
                }
                out
            })
            .collect();
        self.vel_x = self.velocity_stencil(Axis::X);
        self.vel_y = self.velocity_stencil(Axis::Y);
    }

    fn push_wall(&mut self, axis: Axis, face: usize, a: usize, b: usize) {
        let (cell, solid) = if self.fluid[a] { (a, b) } else { (b, a) };
        let g = self.grain_of[solid];
        if g == NONE {
            return;
        }
        self.boundary.push(BoundaryFace {
            axis,
            face,
            cell,
            grain: g as usize,
            weight: self.h,
        });
    }

    fn velocity_stencil(&self, axis: Axis) -> VelocityStencil {
        let (nx, ny) = (self.nx, self.ny);
        let (nfi, nfj, kinds) = match axis {
            Axis::X => (self.nfx(), ny, &self.x_kind),
            Axis::Y => (nx, self.nfy(), &self.y_kind),
        };
        let periodic = self.topology == Topology::Periodic;
        let mut st = VelocityStencil {
            open: vec![],
            nbr: vec![],
            diag: vec![],
        };
        for j in 0..nfj {
            for i in 0..nfi {
                let f = j * nfi + i;
                if kinds[f] != FaceKind::Open {
                    continue;
                }
                // Neighbours along the face-normal direction stay on the same face
                // family; out-of-range indices only happen on walled grids.
                let candidates: [(isize, isize, bool); 4] = match axis {
                    // (di, dj, tangential-to-domain-wall)
                    Axis::X => [(-1, 0, false), (1, 0, false), (0, -1, true), (0, 1, true)],
                    Axis::Y => [(0, -1, false), (0, 1, false), (-1, 0, true), (1, 0, true)],
                };
                let mut nbr = [NONE; 4];
                let mut diag = 0.0;
                for (k, &(di, dj, tangential)) in candidates.iter().enumerate() {
                    let (ii, jj) = (i as isize + di, j as isize + dj);
                    let inside = ii >= 0 && jj >= 0 && (ii as usize) < nfi && (jj as usize) < nfj;
                    if periodic {
                        let ii = ii.rem_euclid(nfi as isize) as usize;
                        let jj = jj.rem_euclid(nfj as isize) as usize;
                        let g = jj * nfi + ii;
                        diag += 1.0;
                        if kinds[g] == FaceKind::Open {
                            nbr[k] = g as u32;
                        }
                    } else if inside {
                        let g = jj as usize * nfi + ii as usize;
                        diag += 1.0;
                        if kinds[g] == FaceKind::Open {
                            nbr[k] = g as u32;
                        }
                    } else {
                        // Ghost across the outer wall at distance h/2.
                        debug_assert!(tangential);
                        diag += 2.0;
                    }
                }
                st.open.push(f as u32);
                st.nbr.push(nbr);
                st.diag.push(diag);
            }
        }
        st
    }

    /// Whether the fluid cells form one edge-connected component.
    pub fn is_connected(&self) -> bool {
        let Some(&start) = self.fluid_cells.first() else {
            return false;
        };
        let mut seen = vec![false; self.cells()];
        let mut queue = VecDeque::from([start as usize]);
        seen[start as usize] = true;
        let mut count = 1;
        while let Some(c) = queue.pop_front() {
            for &nb in &self.cell_nbr[c] {
                if nb != NONE && !seen[nb as usize] {
                    seen[nb as usize] = true;
                    count += 1;
                    queue.push_back(nb as usize);
                }
            }
        }
        count == self.fluid_cells.len()
    }

    /// Per-grain sum of surface weights.
    pub fn perimeter_weights(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.n_grains];
        for b in &self.boundary {
            w[b.grain] += b.weight;
        }
        w
    }

    pub fn zero_scalar(&self) -> ScalarField {
        ScalarField::zeros(self.nx, self.ny)
    }

    pub fn zero_vector(&self) -> MacVectorField {
        MacVectorField::zeros(self.nx, self.ny, self.topology)
    }

    pub fn check_scalar(&self, s: &ScalarField) -> Result<(), GridError> {
        if s.nx != self.nx || s.ny != self.ny {
            return Err(GridError::GridMismatch(format!(
                "scalar {}x{} on grid {}x{}",
                s.nx, s.ny, self.nx, self.ny
            )));
        }
        Ok(())
    }

    pub fn check_vector(&self, v: &MacVectorField) -> Result<(), GridError> {
        if v.nx != self.nx || v.ny != self.ny || v.topology != self.topology {
            return Err(GridError::GridMismatch(format!(
                "vector field {}x{} ({:?}) on grid {}x{} ({:?})",
                v.nx, v.ny, v.topology, self.nx, self.ny, self.topology
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disk_grid(n: usize) -> FluidGrid {
        let h = 1.0 / n as f64;
        let mut fluid = vec![true; n * n];
        let mut grain = vec![NONE; n * n];
        for j in 0..n {
            for i in 0..n {
                let (x, y) = ((i as f64 + 0.5) * h - 0.5, (j as f64 + 0.5) * h - 0.5);
                if x * x + y * y < 0.0625 {
                    fluid[j * n + i] = false;
                    grain[j * n + i] = 0;
                }
            }
        }
        FluidGrid::from_mask(n, n, h, Topology::Periodic, fluid, grain)
    }

    #[test]
    fn face_classification_counts() {
        let g = disk_grid(32);
        assert!(g.is_connected());
        let walls = (0..g.x_faces())
            .filter(|&f| g.x_kind(f) == FaceKind::Wall)
            .count()
            + (0..g.y_faces())
                .filter(|&f| g.y_kind(f) == FaceKind::Wall)
                .count();
        assert_eq!(walls, g.boundary_faces().len());
        assert!(g.boundary_faces().iter().all(|b| g.is_fluid(b.cell)));
    }

    #[test]
    fn walled_grid_has_boundary_faces() {
        let g = FluidGrid::all_fluid(4, 3, 0.25, Topology::Walled);
        assert_eq!(g.x_faces(), 5 * 3);
        assert_eq!(g.y_faces(), 4 * 4);
        assert_eq!(g.x_kind(0), FaceKind::Boundary);
        assert_eq!(g.x_kind(4), FaceKind::Boundary);
        assert_eq!(g.x_kind(1), FaceKind::Open);
        assert_eq!(g.open_faces(Axis::X).len(), 3 * 3);
    }

    #[test]
    fn split_fluid_is_disconnected() {
        let n = 8;
        let mut fluid = vec![true; n * n];
        for j in 0..n {
            fluid[j * n] = false;
            fluid[j * n + 4] = false;
        }
        let g = FluidGrid::from_mask(n, n, 1.0, Topology::Periodic, fluid, vec![NONE; n * n]);
        assert!(!g.is_connected());
    }
}
