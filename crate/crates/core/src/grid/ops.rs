//! Discrete gradient, divergence and Laplacians on the fluid phase.
//!
//! `grad` and `div` only see open faces, which makes them exact negative
//! adjoints in the h^2-weighted inner products. The `_bc` variants add the
//! outer faces of a walled grid with homogeneous Dirichlet ghosts; their
//! face inner product gives those faces half weight.

use super::sum::Accumulator;
use super::{Axis, FaceKind, FluidGrid, GridError, MacVectorField, ScalarField, Topology, NONE};

impl FluidGrid {
    /// Cells (left, right) of x-face `f`, with `None` outside a walled grid.
    pub fn x_face_lr(&self, f: usize) -> (Option<usize>, Option<usize>) {
        let nfx = self.nfx();
        self.x_face_cells(f % nfx, f / nfx)
    }

    /// Cells (below, above) of y-face `f`.
    pub fn y_face_ba(&self, f: usize) -> (Option<usize>, Option<usize>) {
        self.y_face_cells(f % self.nx, f / self.nx)
    }
}

/// Gradient on open faces; every other face is set to zero.
pub fn grad_into(g: &FluidGrid, s: &[f64], gx: &mut [f64], gy: &mut [f64]) {
    gx.iter_mut().for_each(|v| *v = 0.0);
    gy.iter_mut().for_each(|v| *v = 0.0);
    let inv_h = 1.0 / g.h;
    for &f in g.open_faces(Axis::X) {
        let (l, r) = g.x_face_lr(f as usize);
        gx[f as usize] = (s[r.unwrap()] - s[l.unwrap()]) * inv_h;
    }
    for &f in g.open_faces(Axis::Y) {
        let (b, a) = g.y_face_ba(f as usize);
        gy[f as usize] = (s[a.unwrap()] - s[b.unwrap()]) * inv_h;
    }
}

/// Gradient including Dirichlet-zero ghosts across the outer wall.
pub fn grad_bc_into(g: &FluidGrid, s: &[f64], gx: &mut [f64], gy: &mut [f64]) {
    grad_into(g, s, gx, gy);
    if g.topology == Topology::Periodic {
        return;
    }
    let k = 2.0 / g.h;
    for f in 0..g.x_faces() {
        if g.x_kind(f) == FaceKind::Boundary {
            match g.x_face_lr(f) {
                (None, Some(c)) => gx[f] = k * s[c],
                (Some(c), None) => gx[f] = -k * s[c],
                _ => unreachable!(),
            }
        }
    }
    for f in 0..g.y_faces() {
        if g.y_kind(f) == FaceKind::Boundary {
            match g.y_face_ba(f) {
                (None, Some(c)) => gy[f] = k * s[c],
                (Some(c), None) => gy[f] = -k * s[c],
                _ => unreachable!(),
            }
        }
    }
}

/// Divergence on fluid cells from the fluxes through open faces.
pub fn div_into(g: &FluidGrid, vx: &[f64], vy: &[f64], out: &mut [f64]) {
    div_impl(g, vx, vy, out, false)
}

/// Divergence that also counts fluxes through outer-wall faces.
pub fn div_bc_into(g: &FluidGrid, vx: &[f64], vy: &[f64], out: &mut [f64]) {
    div_impl(g, vx, vy, out, true)
}

fn div_impl(g: &FluidGrid, vx: &[f64], vy: &[f64], out: &mut [f64], outer: bool) {
    out.iter_mut().for_each(|v| *v = 0.0);
    let inv_h = 1.0 / g.h;
    let nbr = g.cell_nbr();
    let faces = g.cell_face();
    for &c in g.fluid_cells() {
        let c = c as usize;
        let (nb, f) = (nbr[c], faces[c]);
        let take = |k: usize, axis: Axis| {
            nb[k] != NONE || (outer && g.kind(axis, f[k] as usize) == FaceKind::Boundary)
        };
        let mut d = 0.0;
        if take(1, Axis::X) {
            d += vx[f[1] as usize];
        }
        if take(0, Axis::X) {
            d -= vx[f[0] as usize];
        }
        if take(3, Axis::Y) {
            d += vy[f[3] as usize];
        }
        if take(2, Axis::Y) {
            d -= vy[f[2] as usize];
        }
        out[c] = d * inv_h;
    }
}

/// out = -div(w grad s) with face weights `w`; with `dirichlet` the outer
/// wall carries homogeneous Dirichlet data, otherwise no flux.
pub fn neg_weighted_lap_into(
    g: &FluidGrid,
    wx: &[f64],
    wy: &[f64],
    s: &[f64],
    out: &mut [f64],
    dirichlet: bool,
) {
    out.iter_mut().for_each(|v| *v = 0.0);
    let inv_h2 = 1.0 / (g.h * g.h);
    let nbr = g.cell_nbr();
    let faces = g.cell_face();
    let outer = dirichlet && g.topology == Topology::Walled;
    for &c in g.fluid_cells() {
        let c = c as usize;
        let (nb, f) = (nbr[c], faces[c]);
        let sc = s[c];
        let mut acc = 0.0;
        for k in 0..4 {
            let w = if k < 2 {
                wx[f[k] as usize]
            } else {
                wy[f[k] as usize]
            };
            if nb[k] != NONE {
                acc += w * (sc - s[nb[k] as usize]);
            } else if outer {
                let axis = if k < 2 { Axis::X } else { Axis::Y };
                if g.kind(axis, f[k] as usize) == FaceKind::Boundary {
                    acc += 2.0 * w * sc;
                }
            }
        }
        out[c] = acc * inv_h2;
    }
}

/// Diagonal of [`neg_weighted_lap_into`].
pub fn neg_weighted_lap_diag(g: &FluidGrid, wx: &[f64], wy: &[f64], dirichlet: bool) -> Vec<f64> {
    let mut d = vec![0.0; g.cells()];
    let inv_h2 = 1.0 / (g.h * g.h);
    let outer = dirichlet && g.topology == Topology::Walled;
    for &c in g.fluid_cells() {
        let c = c as usize;
        let (nb, f) = (g.cell_nbr()[c], g.cell_face()[c]);
        let mut acc = 0.0;
        for k in 0..4 {
            let w = if k < 2 {
                wx[f[k] as usize]
            } else {
                wy[f[k] as usize]
            };
            if nb[k] != NONE {
                acc += w;
            } else if outer {
                let axis = if k < 2 { Axis::X } else { Axis::Y };
                if g.kind(axis, f[k] as usize) == FaceKind::Boundary {
                    acc += 2.0 * w;
                }
            }
        }
        d[c] = acc * inv_h2;
    }
    d
}

/// out = -lap u on open faces (no-slip on every non-open face).
pub fn neg_vector_lap_into(g: &FluidGrid, ux: &[f64], uy: &[f64], ox: &mut [f64], oy: &mut [f64]) {
    let inv_h2 = 1.0 / (g.h * g.h);
    for (axis, u, o) in [(Axis::X, ux, &mut *ox), (Axis::Y, uy, &mut *oy)] {
        o.iter_mut().for_each(|v| *v = 0.0);
        let st = g.vel(axis);
        for (k, &f) in st.open.iter().enumerate() {
            let mut acc = st.diag[k] * u[f as usize];
            for &nb in &st.nbr[k] {
                if nb != NONE {
                    acc -= u[nb as usize];
                }
            }
            o[f as usize] = acc * inv_h2;
        }
    }
}

/// Diagonal of [`neg_vector_lap_into`] on open faces (zero elsewhere).
pub fn neg_vector_lap_diag(g: &FluidGrid) -> (Vec<f64>, Vec<f64>) {
    let inv_h2 = 1.0 / (g.h * g.h);
    let mut dx = vec![0.0; g.x_faces()];
    let mut dy = vec![0.0; g.y_faces()];
    for (axis, d) in [(Axis::X, &mut dx), (Axis::Y, &mut dy)] {
        let st = g.vel(axis);
        for (k, &f) in st.open.iter().enumerate() {
            d[f as usize] = st.diag[k] * inv_h2;
        }
    }
    (dx, dy)
}

/// Harmonic average of a cell field onto faces. Open faces average both
/// sides, outer-wall faces take the interior value, other faces are zero.
pub fn harmonic_faces(g: &FluidGrid, n: &[f64]) -> MacVectorField {
    let mut out = g.zero_vector();
    let harm = |a: f64, b: f64| 2.0 * a * b / (a + b);
    for f in 0..g.x_faces() {
        out.x[f] = match (g.x_kind(f), g.x_face_lr(f)) {
            (FaceKind::Open, (Some(l), Some(r))) => harm(n[l], n[r]),
            (FaceKind::Boundary, (Some(c), None)) | (FaceKind::Boundary, (None, Some(c))) => n[c],
            _ => 0.0,
        };
    }
    for f in 0..g.y_faces() {
        out.y[f] = match (g.y_kind(f), g.y_face_ba(f)) {
            (FaceKind::Open, (Some(b), Some(a))) => harm(n[b], n[a]),
            (FaceKind::Boundary, (Some(c), None)) | (FaceKind::Boundary, (None, Some(c))) => n[c],
            _ => 0.0,
        };
    }
    out
}

/// h^2-weighted inner product over fluid cells.
pub fn cell_inner(g: &FluidGrid, a: &[f64], b: &[f64]) -> f64 {
    let mut acc = Accumulator::new();
    for &c in g.fluid_cells() {
        acc.add(a[c as usize] * b[c as usize]);
    }
    acc.value() * g.h * g.h
}

/// h^2-weighted inner product over faces; outer-wall faces count half.
pub fn face_inner(g: &FluidGrid, u: &MacVectorField, v: &MacVectorField) -> f64 {
    let mut acc = Accumulator::new();
    for f in 0..g.x_faces() {
        let w = if g.x_kind(f) == FaceKind::Boundary {
            0.5
        } else {
            1.0
        };
        acc.add(w * u.x[f] * v.x[f]);
    }
    for f in 0..g.y_faces() {
        let w = if g.y_kind(f) == FaceKind::Boundary {
            0.5
        } else {
            1.0
        };
        acc.add(w * u.y[f] * v.y[f]);
    }
    acc.value() * g.h * g.h
}

/// Zeroes the entries of solid cells.
pub fn zero_solid(g: &FluidGrid, s: &mut [f64]) {
    for (c, v) in s.iter_mut().enumerate() {
        if !g.is_fluid(c) {
            *v = 0.0;
        }
    }
}

/// Sets the mean over fluid cells to zero.
pub fn remove_mean(g: &FluidGrid, s: &mut [f64]) {
    let n = g.fluid_count();
    if n == 0 {
        return;
    }
    let mut acc = Accumulator::new();
    for &c in g.fluid_cells() {
        acc.add(s[c as usize]);
    }
    let mean = acc.value() / n as f64;
    for &c in g.fluid_cells() {
        s[c as usize] -= mean;
    }
}

pub fn grad(g: &FluidGrid, s: &ScalarField) -> Result<MacVectorField, GridError> {
    g.check_scalar(s)?;
    let mut out = g.zero_vector();
    grad_into(g, &s.data, &mut out.x, &mut out.y);
    Ok(out)
}

pub fn div(g: &FluidGrid, v: &MacVectorField) -> Result<ScalarField, GridError> {
    g.check_vector(v)?;
    let mut out = g.zero_scalar();
    div_into(g, &v.x, &v.y, &mut out.data);
    Ok(out)
}

/// lap = div grad with no flux through grain faces.
pub fn lap(g: &FluidGrid, s: &ScalarField) -> Result<ScalarField, GridError> {
    g.check_scalar(s)?;
    let ones = vec![1.0; g.x_faces().max(g.y_faces())];
    let mut out = g.zero_scalar();
    neg_weighted_lap_into(g, &ones, &ones, &s.data, &mut out.data, false);
    out.data.iter_mut().for_each(|v| *v = -*v);
    Ok(out)
}
