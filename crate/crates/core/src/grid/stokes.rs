//! Periodic Stokes problem with staircase no-slip grains:
//! `-mu lap u + grad p = f`, `div u = 0`.

use super::dense::solve_restricted;
use super::krylov::{minres_with, SolverOptions};
use super::multigrid::{velocity_operator, Scattered};
use super::ops::{div_into, grad_into, neg_vector_lap_into, remove_mean, zero_solid};
use super::sum::Accumulator;
use super::{Axis, FaceKind, FluidGrid, GridError, MacVectorField, ScalarField, SolveReport};

#[derive(Debug, Clone)]
pub struct StokesSolution {
    pub velocity: MacVectorField,
    pub pressure: ScalarField,
    pub report: SolveReport,
}

/// Offsets of the packed unknown vector `[u_x | u_y | p]`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct StokesLayout {
    pub nx_faces: usize,
    pub ny_faces: usize,
    pub cells: usize,
}

impl StokesLayout {
    pub fn new(g: &FluidGrid) -> Self {
        StokesLayout {
            nx_faces: g.x_faces(),
            ny_faces: g.y_faces(),
            cells: g.cells(),
        }
    }

    pub fn uy(&self) -> usize {
        self.nx_faces
    }

    pub fn p(&self) -> usize {
        self.nx_faces + self.ny_faces
    }

    pub fn len(&self) -> usize {
        self.p() + self.cells
    }

    /// Indices of active unknowns: open faces, then fluid cells.
    pub fn dofs(&self, g: &FluidGrid) -> Vec<usize> {
        let mut d: Vec<usize> = g.open_faces(Axis::X).iter().map(|&f| f as usize).collect();
        d.extend(
            g.open_faces(Axis::Y)
                .iter()
                .map(|&f| self.uy() + f as usize),
        );
        d.extend(g.fluid_cells().iter().map(|&c| self.p() + c as usize));
        d
    }
}

/// y = [mu (-lap u) + grad p ; -div u].
pub(crate) fn apply_stokes(g: &FluidGrid, lay: StokesLayout, mu: f64, x: &[f64], y: &mut [f64]) {
    let (ux, rest) = x.split_at(lay.uy());
    let (uy, p) = rest.split_at(lay.ny_faces);
    let (yx, rest) = y.split_at_mut(lay.uy());
    let (yy, yp) = rest.split_at_mut(lay.ny_faces);
    neg_vector_lap_into(g, ux, uy, yx, yy);
    if mu != 1.0 {
        yx.iter_mut().chain(yy.iter_mut()).for_each(|v| *v *= mu);
    }
    let mut gx = vec![0.0; lay.nx_faces];
    let mut gy = vec![0.0; lay.ny_faces];
    grad_into(g, p, &mut gx, &mut gy);
    for (a, b) in yx.iter_mut().zip(&gx) {
        *a += b;
    }
    for (a, b) in yy.iter_mut().zip(&gy) {
        *a += b;
    }
    div_into(g, ux, uy, yp);
    yp.iter_mut().for_each(|v| *v = -*v);
}

/// Removes the pressure constant and, on unobstructed grids, the mean velocity.
/// Inactive entries (non-open faces, solid cells) are zeroed as well.
pub(crate) fn project_stokes(g: &FluidGrid, lay: StokesLayout, x: &mut [f64]) {
    for f in 0..lay.nx_faces {
        if g.x_kind(f) != FaceKind::Open {
            x[f] = 0.0;
        }
    }
    for f in 0..lay.ny_faces {
        if g.y_kind(f) != FaceKind::Open {
            x[lay.uy() + f] = 0.0;
        }
    }
    zero_solid(g, &mut x[lay.p()..lay.len()]);
    remove_mean(g, &mut x[lay.p()..lay.len()]);
    if g.is_unobstructed() {
        for (lo, hi) in [(0, lay.uy()), (lay.uy(), lay.p())] {
            let mut acc = Accumulator::new();
            x[lo..hi].iter().for_each(|&v| acc.add(v));
            let mean = acc.value() / (hi - lo) as f64;
            x[lo..hi].iter_mut().for_each(|v| *v -= mean);
        }
    }
}

fn pack_force(g: &FluidGrid, lay: StokesLayout, force: &MacVectorField) -> Vec<f64> {
    let mut b = vec![0.0; lay.len()];
    for &f in g.open_faces(Axis::X) {
        b[f as usize] = force.x[f as usize];
    }
    for &f in g.open_faces(Axis::Y) {
        b[lay.uy() + f as usize] = force.y[f as usize];
    }
    b
}

fn unpack(g: &FluidGrid, lay: StokesLayout, x: &[f64], report: SolveReport) -> StokesSolution {
    let mut velocity = g.zero_vector();
    velocity.x.copy_from_slice(&x[..lay.uy()]);
    velocity.y.copy_from_slice(&x[lay.uy()..lay.p()]);
    let mut pressure = g.zero_scalar();
    pressure.data.copy_from_slice(&x[lay.p()..]);
    StokesSolution {
        velocity,
        pressure,
        report,
    }
}

/// Block preconditioner: a multigrid V-cycle per velocity component and
/// `mu` times the identity on pressure.
#[derive(Debug, Clone)]
pub(crate) struct StokesPrecond {
    vx: Scattered,
    vy: Scattered,
    mu: f64,
    lay: StokesLayout,
}

impl StokesPrecond {
    pub fn new(g: &FluidGrid, lay: StokesLayout, mu: f64) -> Self {
        let (ax, lx, dx) = velocity_operator(g, Axis::X, mu);
        let (ay, ly, dy) = velocity_operator(g, Axis::Y, mu);
        let dy = dy.into_iter().map(|f| f + lay.uy() as u32).collect();
        StokesPrecond {
            vx: Scattered::new(ax, lx, dx),
            vy: Scattered::new(ay, ly, dy),
            mu,
            lay,
        }
    }

    pub fn apply(&self, r: &[f64], z: &mut [f64]) {
        z.iter_mut().for_each(|v| *v = 0.0);
        self.vx.apply(r, z);
        self.vy.apply(r, z);
        let p = self.lay.p();
        for i in p..self.lay.len() {
            z[i] = self.mu * r[i];
        }
    }
}

/// MINRES on the packed system with viscosity `mu`, starting from `x`.
pub(crate) fn solve_stokes_packed(
    g: &FluidGrid,
    lay: StokesLayout,
    prec: &StokesPrecond,
    b: &[f64],
    x: &mut [f64],
    opts: SolverOptions,
) -> Result<SolveReport, GridError> {
    let mu = prec.mu;
    minres_with(
        |v, out| apply_stokes(g, lay, mu, v, out),
        |r, z| prec.apply(r, z),
        |v| project_stokes(g, lay, v),
        b,
        x,
        opts,
    )
}

/// Iterative saddle-point solve (preconditioned MINRES on the full system).
pub fn solve_stokes(
    g: &FluidGrid,
    force: &MacVectorField,
    opts: SolverOptions,
) -> Result<StokesSolution, GridError> {
    g.check_vector(force)?;
    let lay = StokesLayout::new(g);
    let b = pack_force(g, lay, force);
    let mut x = vec![0.0; lay.len()];
    let prec = StokesPrecond::new(g, lay, 1.0);
    let report = solve_stokes_packed(g, lay, &prec, &b, &mut x, opts)?;
    Ok(unpack(g, lay, &x, report))
}

/// Dense direct saddle-point solve; intended for small grids only.
pub fn solve_stokes_dense(
    g: &FluidGrid,
    force: &MacVectorField,
) -> Result<StokesSolution, GridError> {
    g.check_vector(force)?;
    let lay = StokesLayout::new(g);
    let b = pack_force(g, lay, force);
    let mut kernels = Vec::new();
    let mut kp = vec![0.0; lay.len()];
    g.fluid_cells()
        .iter()
        .for_each(|&c| kp[lay.p() + c as usize] = 1.0);
    kernels.push(kp);
    if g.is_unobstructed() {
        let mut kx = vec![0.0; lay.len()];
        kx[..lay.uy()].iter_mut().for_each(|v| *v = 1.0);
        let mut ky = vec![0.0; lay.len()];
        ky[lay.uy()..lay.p()].iter_mut().for_each(|v| *v = 1.0);
        kernels.push(kx);
        kernels.push(ky);
    }
    let mut rhs = b.clone();
    project_stokes(g, lay, &mut rhs);
    let x = solve_restricted(
        lay.len(),
        &lay.dofs(g),
        |v, o| apply_stokes(g, lay, 1.0, v, o),
        &rhs,
        &kernels,
    )?;
    Ok(unpack(g, lay, &x, SolveReport::trivial("dense-lu")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Topology, NONE};

    fn disk(n: usize, r: f64) -> FluidGrid {
        let h = 1.0 / n as f64;
        let mut fluid = vec![true; n * n];
        let mut grain = vec![NONE; n * n];
        for j in 0..n {
            for i in 0..n {
                let (x, y) = ((i as f64 + 0.5) * h - 0.5, (j as f64 + 0.5) * h - 0.5);
                if x * x + y * y < r * r {
                    fluid[j * n + i] = false;
                    grain[j * n + i] = 0;
                }
            }
        }
        FluidGrid::from_mask(n, n, h, Topology::Periodic, fluid, grain)
    }

    #[test]
    fn zero_force_gives_zero() {
        let g = disk(16, 0.25);
        let s = solve_stokes(&g, &g.zero_vector(), SolverOptions::default()).unwrap();
        assert_eq!(s.velocity.max_abs(), 0.0);
        assert_eq!(s.pressure.max_abs(), 0.0);
    }

    #[test]
    fn iterative_matches_dense_on_small_disk() {
        let g = disk(16, 0.3);
        let mut f = g.zero_vector();
        f.x.iter_mut().for_each(|v| *v = 1.0);
        let it = solve_stokes(&g, &f, SolverOptions::default()).unwrap();
        let de = solve_stokes_dense(&g, &f).unwrap();
        let scale = de.velocity.max_abs();
        let mut diff = it.velocity.clone();
        diff.axpy(-1.0, &de.velocity);
        assert!(diff.max_abs() < 1e-8 * scale);
    }
}
