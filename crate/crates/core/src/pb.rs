//! Equilibrium Poisson-Boltzmann problem on the periodic cell.
//!
//! The potential minimizes
//! `J(psi) = 1/2 |grad psi|^2 + beta sum Gamma_N(psi) + N_sigma sum sigma w psi`
//! over fluid cells, where `Gamma_N` is the primitive of the cut-off
//! nonlinearity `n_HN`. The normal points out of the fluid, so the surface
//! datum `grad psi . nu = -N_sigma sigma` enters each wall-adjacent cell as
//! the source `-N_sigma sigma w / h^2`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::krylov::{cg, SolverOptions};
use crate::grid::ops::{grad_into, neg_weighted_lap_into};
use crate::grid::sum::Accumulator;
use crate::grid::{FluidGrid, GridError, ScalarField, SolveReport};
use crate::model::{
    bound_constants, hardy_derivative, hardy_nonlinearity, BoundConstants, ElectrolyteSpec,
    ModelError, SurfaceCharge,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PbError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("Newton iteration did not converge: {0}")]
    NoConvergence(SolveReport),
    #[error("cut-off active: max |psi| = {max_abs} >= N = {cutoff}")]
    CutoffActive { max_abs: f64, cutoff: f64 },
    #[error("fluid phase is not connected")]
    Disconnected,
}

#[derive(Debug, Clone)]
pub struct ScreenedLift {
    pub v: ScalarField,
    pub v_min: f64,
    pub v_max: f64,
    pub report: SolveReport,
}

#[derive(Debug, Clone)]
pub struct EquilibriumState {
    pub psi: ScalarField,
    pub n0: Vec<ScalarField>,
    pub bounds: BoundConstants,
    /// Cut-off level N of the nonlinearity.
    pub cutoff: f64,
    pub energy: f64,
    /// Energy after each accepted Newton step, starting from the initial guess.
    pub energy_history: Vec<f64>,
    pub lift: ScreenedLift,
    pub report: SolveReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonOptions {
    /// Nonlinear residual target relative to the initial residual.
    pub tol: f64,
    pub max_iter: usize,
    pub armijo: f64,
    pub max_halvings: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            tol: 1e-10,
            max_iter: 100,
            armijo: 1e-4,
            max_halvings: 40,
        }
    }
}

/// Per-cell source `-N_sigma sum sigma w / h^2` from the grain surfaces.
pub fn surface_source(grid: &FluidGrid, sc: &SurfaceCharge, n_sigma: f64) -> Vec<f64> {
    let mut s = vec![0.0; grid.cells()];
    let inv_h2 = 1.0 / (grid.h * grid.h);
    for b in grid.boundary_faces() {
        s[b.cell] -= n_sigma * sc.on_grain(b.grain) * b.weight * inv_h2;
    }
    s
}

fn unit_faces(grid: &FluidGrid) -> Vec<f64> {
    vec![1.0; grid.x_faces().max(grid.y_faces())]
}

/// Solves `-lap v + v = s` with the surface-charge Neumann datum.
pub fn solve_screened_lift(
    grid: &FluidGrid,
    sc: &SurfaceCharge,
    n_sigma: f64,
) -> Result<ScreenedLift, PbError> {
    let s = surface_source(grid, sc, n_sigma);
    let ones = unit_faces(grid);
    let mut diag = crate::grid::ops::neg_weighted_lap_diag(grid, &ones, &ones, false);
    let mut inv = vec![0.0; grid.cells()];
    for &c in grid.fluid_cells() {
        diag[c as usize] += 1.0;
        inv[c as usize] = 1.0 / diag[c as usize];
    }
    let mut v = vec![0.0; grid.cells()];
    let report = cg(
        |x, y| {
            neg_weighted_lap_into(grid, &ones, &ones, x, y, false);
            for &c in grid.fluid_cells() {
                y[c as usize] += x[c as usize];
            }
        },
        &inv,
        |_| {},
        &s,
        &mut v,
        SolverOptions::default(),
    )?;
    let (mut v_min, mut v_max) = (0.0f64, 0.0f64);
    if let Some(&c0) = grid.fluid_cells().first() {
        v_min = v[c0 as usize];
        v_max = v_min;
    }
    for &c in grid.fluid_cells() {
        v_min = v_min.min(v[c as usize]);
        v_max = v_max.max(v[c as usize]);
    }
    Ok(ScreenedLift {
        v: ScalarField {
            nx: grid.nx,
            ny: grid.ny,
            data: v,
        },
        v_min,
        v_max,
        report,
    })
}

/// Barrier constant C^ = C_0 max(k/2, 1/k + 1/r_min) with k = delta_min / 2,
/// from the profile h(t) = C_0 (k - t)^2 / (2k) of the distance to the grains.
pub fn barrier_constant(c0: f64, delta_min: f64, r_min: f64) -> f64 {
    let k = 0.5 * delta_min;
    c0 * (0.5 * k).max(1.0 / k + 1.0 / r_min)
}

/// The nonlinearity with quadratic extension beyond |psi| = N.
#[derive(Debug, Clone)]
pub struct CutoffNonlinearity<'a> {
    spec: &'a ElectrolyteSpec,
    n: f64,
    bulk: f64,
}

impl<'a> CutoffNonlinearity<'a> {
    pub fn new(spec: &'a ElectrolyteSpec, n: f64) -> Self {
        CutoffNonlinearity {
            spec,
            n,
            bulk: spec.n_c.iter().sum(),
        }
    }

    fn exp_sum(&self, z: f64) -> f64 {
        self.spec
            .z
            .iter()
            .zip(&self.spec.n_c)
            .map(|(&zj, &c)| c * (-(zj as f64) * z).exp())
            .sum()
    }

    pub fn value(&self, z: f64) -> f64 {
        let n = self.n;
        if z > n {
            hardy_nonlinearity(self.spec, n) + hardy_derivative(self.spec, n) * (z - n)
        } else if z < -n {
            hardy_nonlinearity(self.spec, -n) + hardy_derivative(self.spec, -n) * (z + n)
        } else {
            hardy_nonlinearity(self.spec, z)
        }
    }

    pub fn derivative(&self, z: f64) -> f64 {
        hardy_derivative(self.spec, z.clamp(-self.n, self.n))
    }

    /// Primitive Gamma_N with Gamma_N(0) = 0.
    pub fn primitive(&self, z: f64) -> f64 {
        let n = self.n;
        if z > n {
            let t = z - n;
            self.exp_sum(n) - self.bulk
                + hardy_nonlinearity(self.spec, n) * t
                + 0.5 * hardy_derivative(self.spec, n) * t * t
        } else if z < -n {
            let t = z + n;
            self.exp_sum(-n) - self.bulk
                + hardy_nonlinearity(self.spec, -n) * t
                + 0.5 * hardy_derivative(self.spec, -n) * t * t
        } else {
            self.exp_sum(z) - self.bulk
        }
    }
}

struct Problem<'a> {
    grid: &'a FluidGrid,
    beta: f64,
    nl: CutoffNonlinearity<'a>,
    source: Vec<f64>,
    ones: Vec<f64>,
}

impl Problem<'_> {
    /// r = -lap psi + beta n_HN(psi) - s on fluid cells.
    fn residual(&self, psi: &[f64], r: &mut [f64]) {
        neg_weighted_lap_into(self.grid, &self.ones, &self.ones, psi, r, false);
        for &c in self.grid.fluid_cells() {
            let c = c as usize;
            r[c] += self.beta * self.nl.value(psi[c]) - self.source[c];
        }
    }

    fn energy(&self, psi: &[f64]) -> f64 {
        let g = self.grid;
        let mut gx = vec![0.0; g.x_faces()];
        let mut gy = vec![0.0; g.y_faces()];
        grad_into(g, psi, &mut gx, &mut gy);
        let mut acc = Accumulator::new();
        gx.iter().chain(&gy).for_each(|v| acc.add(0.5 * v * v));
        for &c in g.fluid_cells() {
            let c = c as usize;
            acc.add(self.beta * self.nl.primitive(psi[c]) - self.source[c] * psi[c]);
        }
        acc.value() * g.h * g.h
    }
}

fn fluid_norm(grid: &FluidGrid, v: &[f64]) -> f64 {
    let mut acc = Accumulator::new();
    for &c in grid.fluid_cells() {
        acc.add(v[c as usize] * v[c as usize]);
    }
    acc.value().sqrt()
}

/// Damped Newton minimization of the discrete functional.
pub fn solve_equilibrium(
    grid: &FluidGrid,
    spec: &ElectrolyteSpec,
    sc: &SurfaceCharge,
) -> Result<EquilibriumState, PbError> {
    solve_equilibrium_with(grid, spec, sc, NewtonOptions::default())
}

pub fn solve_equilibrium_with(
    grid: &FluidGrid,
    spec: &ElectrolyteSpec,
    sc: &SurfaceCharge,
    opts: NewtonOptions,
) -> Result<EquilibriumState, PbError> {
    if !grid.is_connected() {
        return Err(PbError::Disconnected);
    }
    let lift = solve_screened_lift(grid, sc, spec.n_sigma)?;
    let bounds = bound_constants(spec, lift.v_min, lift.v_max);
    let cutoff = 2.0 * (bounds.psi_min.abs() + bounds.psi_max.abs() + 1.0);
    let prob = Problem {
        grid,
        beta: spec.beta,
        nl: CutoffNonlinearity::new(spec, cutoff),
        source: surface_source(grid, sc, spec.n_sigma),
        ones: unit_faces(grid),
    };
    let cells = grid.cells();
    let mut psi = vec![0.0; cells];
    let mut r = vec![0.0; cells];
    prob.residual(&psi, &mut r);
    let r0 = fluid_norm(grid, &r);
    let mut energy = prob.energy(&psi);
    let mut history = vec![energy];
    let mut res = r0;
    let mut it = 0;
    let mut inv = vec![0.0; cells];
    let mut delta = vec![0.0; cells];
    let mut trial = vec![0.0; cells];
    let mut r_trial = vec![0.0; cells];
    let base_diag = crate::grid::ops::neg_weighted_lap_diag(grid, &prob.ones, &prob.ones, false);
    while res > opts.tol * r0 && it < opts.max_iter {
        it += 1;
        let curv: Vec<f64> = (0..cells)
            .map(|c| {
                if grid.is_fluid(c) {
                    spec.beta * prob.nl.derivative(psi[c])
                } else {
                    0.0
                }
            })
            .collect();
        for &c in grid.fluid_cells() {
            inv[c as usize] = 1.0 / (base_diag[c as usize] + curv[c as usize]);
        }
        let rhs: Vec<f64> = r.iter().map(|v| -v).collect();
        let forcing = (res / r0).min(1e-2) * 1e-2;
        let inner = SolverOptions {
            tol: forcing.max(1e-14),
            max_iter: 50 * grid.nx.max(grid.ny) + 1000,
        };
        delta.iter_mut().for_each(|v| *v = 0.0);
        let hess = |x: &[f64], y: &mut [f64]| {
            neg_weighted_lap_into(grid, &prob.ones, &prob.ones, x, y, false);
            for &c in grid.fluid_cells() {
                y[c as usize] += curv[c as usize] * x[c as usize];
            }
        };
        match cg(hess, &inv, |_| {}, &rhs, &mut delta, inner) {
            Ok(_) => {}
            // A loose inner solve is still a descent direction.
            Err(GridError::NoConvergence(rep)) if rep.residual < 0.5 => {}
            Err(e) => return Err(e.into()),
        }
        // Directional derivative of J along delta: h^2 <r, delta>.
        let slope = {
            let mut acc = Accumulator::new();
            for &c in grid.fluid_cells() {
                acc.add(r[c as usize] * delta[c as usize]);
            }
            acc.value() * grid.h * grid.h
        };
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..=opts.max_halvings {
            for c in 0..cells {
                trial[c] = psi[c] + t * delta[c];
            }
            let e_new = prob.energy(&trial);
            let armijo = e_new <= energy + opts.armijo * t * slope;
            // Near the solution J is flat to rounding; accept on residual decrease.
            let flat = slope.abs() <= 1e-13 * energy.abs().max(1e-300);
            if armijo || flat {
                prob.residual(&trial, &mut r_trial);
                let new_res = fluid_norm(grid, &r_trial);
                if armijo || new_res < res {
                    psi.copy_from_slice(&trial);
                    r.copy_from_slice(&r_trial);
                    res = new_res;
                    energy = e_new.min(energy);
                    history.push(e_new);
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let rel = if r0 > 0.0 { res / r0 } else { 0.0 };
    let report = SolveReport {
        iterations: it,
        residual: rel,
        method: "damped-newton".into(),
    };
    if rel > opts.tol {
        return Err(PbError::NoConvergence(report));
    }
    let max_abs = grid
        .fluid_cells()
        .iter()
        .fold(0.0f64, |m, &c| m.max(psi[c as usize].abs()));
    if max_abs >= cutoff {
        return Err(PbError::CutoffActive { max_abs, cutoff });
    }
    let psi = ScalarField {
        nx: grid.nx,
        ny: grid.ny,
        data: psi,
    };
    let n0 = equilibrium_concentrations(grid, &psi, spec);
    Ok(EquilibriumState {
        psi,
        n0,
        bounds,
        cutoff,
        energy,
        energy_history: history,
        lift,
        report,
    })
}

/// n_j = n_j^c exp(-z_j psi) on fluid cells, zero on solid cells.
pub fn equilibrium_concentrations(
    grid: &FluidGrid,
    psi: &ScalarField,
    spec: &ElectrolyteSpec,
) -> Vec<ScalarField> {
    (0..spec.species())
        .map(|j| {
            let mut n = grid.zero_scalar();
            for &c in grid.fluid_cells() {
                let c = c as usize;
                n.data[c] = spec.n_c[j] * (-spec.zf(j) * psi.data[c]).exp();
            }
            n
        })
        .collect()
}

/// Discrete energy functional for an arbitrary field (used by gradient checks).
pub fn discrete_energy(
    grid: &FluidGrid,
    spec: &ElectrolyteSpec,
    sc: &SurfaceCharge,
    cutoff: f64,
    psi: &[f64],
) -> f64 {
    Problem {
        grid,
        beta: spec.beta,
        nl: CutoffNonlinearity::new(spec, cutoff),
        source: surface_source(grid, sc, spec.n_sigma),
        ones: unit_faces(grid),
    }
    .energy(psi)
}

/// Nonlinear residual `-lap psi + beta n_HN(psi) - s` (the energy gradient over h^2).
pub fn discrete_residual(
    grid: &FluidGrid,
    spec: &ElectrolyteSpec,
    sc: &SurfaceCharge,
    cutoff: f64,
    psi: &[f64],
) -> Vec<f64> {
    let prob = Problem {
        grid,
        beta: spec.beta,
        nl: CutoffNonlinearity::new(spec, cutoff),
        source: surface_source(grid, sc, spec.n_sigma),
        ones: unit_faces(grid),
    };
    let mut r = vec![0.0; grid.cells()];
    prob.residual(psi, &mut r);
    r
}

/// beta sum_cells sum_j z_j n_j h^2 and N_sigma sum_faces sigma w; equal at equilibrium.
pub fn charge_balance(
    grid: &FluidGrid,
    spec: &ElectrolyteSpec,
    sc: &SurfaceCharge,
    eq: &EquilibriumState,
) -> (f64, f64) {
    let mut fluid = Accumulator::new();
    for &c in grid.fluid_cells() {
        for j in 0..spec.species() {
            fluid.add(spec.zf(j) * eq.n0[j].data[c as usize]);
        }
    }
    let mut surface = Accumulator::new();
    for b in grid.boundary_faces() {
        surface.add(sc.on_grain(b.grain) * b.weight);
    }
    (
        spec.beta * fluid.value() * grid.h * grid.h,
        spec.n_sigma * surface.value(),
    )
}

/// Potential of a symmetric binary electrolyte between two charged walls.
#[derive(Debug, Clone)]
pub struct GouyChapmanProfile {
    /// Distance from the wall to the slab midplane.
    pub half_width: f64,
    /// Node values on [0, half_width], uniformly spaced.
    pub psi: Vec<f64>,
}

impl GouyChapmanProfile {
    /// Value at distance `x` from the nearest wall, for x in [0, 2 half_width].
    pub fn eval(&self, x: f64) -> f64 {
        let w = self.half_width;
        let x = if x > w { 2.0 * w - x } else { x }.clamp(0.0, w);
        let m = self.psi.len() - 1;
        let s = x / w * m as f64;
        let k = (s.floor() as usize).min(m - 1);
        let t = s - k as f64;
        (1.0 - t) * self.psi[k] + t * self.psi[k + 1]
    }
}

fn gouy_chapman_nodes(
    spec: &ElectrolyteSpec,
    flux: f64,
    half_width: f64,
    intervals: usize,
) -> Result<Vec<f64>, PbError> {
    let m = intervals;
    let h = half_width / m as f64;
    let inv_h2 = 1.0 / (h * h);
    let mut psi = vec![0.0; m + 1];
    let residual = |psi: &[f64], f: &mut [f64]| {
        for k in 0..=m {
            let left = if k == 0 {
                psi[1] - 2.0 * h * flux
            } else {
                psi[k - 1]
            };
            let right = if k == m { psi[m - 1] } else { psi[k + 1] };
            f[k] = -(left - 2.0 * psi[k] + right) * inv_h2
                + spec.beta * hardy_nonlinearity(spec, psi[k]);
        }
    };
    let mut f = vec![0.0; m + 1];
    residual(&psi, &mut f);
    let f0 = f.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if f0 == 0.0 {
        return Ok(psi);
    }
    let mut trial = vec![0.0; m + 1];
    let mut ft = vec![0.0; m + 1];
    for it in 0..200 {
        let fmax = f.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if fmax <= 1e-13 * f0 {
            return Ok(psi);
        }
        // Tridiagonal Jacobian, solved by the Thomas algorithm.
        let mut a = vec![-inv_h2; m + 1];
        let mut c = vec![-inv_h2; m + 1];
        let mut b: Vec<f64> = psi
            .iter()
            .map(|&p| 2.0 * inv_h2 + spec.beta * hardy_derivative(spec, p))
            .collect();
        c[0] = -2.0 * inv_h2;
        a[m] = -2.0 * inv_h2;
        let mut d: Vec<f64> = f.iter().map(|v| -v).collect();
        for k in 1..=m {
            let w = a[k] / b[k - 1];
            b[k] -= w * c[k - 1];
            d[k] -= w * d[k - 1];
        }
        let mut dx = vec![0.0; m + 1];
        dx[m] = d[m] / b[m];
        for k in (0..m).rev() {
            dx[k] = (d[k] - c[k] * dx[k + 1]) / b[k];
        }
        let mut t = 1.0;
        loop {
            for k in 0..=m {
                trial[k] = psi[k] + t * dx[k];
            }
            residual(&trial, &mut ft);
            let fnew = ft.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if fnew < fmax {
                break;
            }
            if t < 1e-3 {
                // rounding floor reached
                if fmax <= 1e-10 * f0 {
                    return Ok(psi);
                }
                break;
            }
            t *= 0.5;
        }
        psi.copy_from_slice(&trial);
        f.copy_from_slice(&ft);
        if it == 199 {
            break;
        }
    }
    Err(PbError::NoConvergence(SolveReport {
        iterations: 200,
        residual: f.iter().fold(0.0, |a: f64, v| a.max(v.abs())) / f0,
        method: "newton-1d".into(),
    }))
}

/// Independent 1D oracle: `psi'' = beta n_H(psi)` on [0, half_width] with
/// `psi'(0) = N_sigma sigma` at the wall and a symmetry condition at the
/// midplane. Node-centred second-order differences with `intervals` cells,
/// Richardson-extrapolated against a solve with twice the resolution.
pub fn gouy_chapman_oracle(
    spec: &ElectrolyteSpec,
    sigma: f64,
    half_width: f64,
    intervals: usize,
) -> Result<GouyChapmanProfile, PbError> {
    if spec.z != [-1, 1] || spec.n_c[0] != spec.n_c[1] {
        return Err(PbError::Model(ModelError::ValenceOrder(spec.z.clone())));
    }
    let flux = spec.n_sigma * sigma;
    let coarse = gouy_chapman_nodes(spec, flux, half_width, intervals)?;
    let fine = gouy_chapman_nodes(spec, flux, half_width, 2 * intervals)?;
    let psi = coarse
        .iter()
        .enumerate()
        .map(|(k, c)| (4.0 * fine[2 * k] - c) / 3.0)
        .collect();
    Ok(GouyChapmanProfile { half_width, psi })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Topology, NONE};

    pub(crate) fn slab(nx: usize, l: f64) -> FluidGrid {
        let ny = 4;
        let h = l / nx as f64;
        let mut fluid = vec![true; nx * ny];
        let mut owner = vec![NONE; nx * ny];
        for j in 0..ny {
            for i in 0..nx / 2 {
                fluid[j * nx + i] = false;
                owner[j * nx + i] = 0;
            }
        }
        FluidGrid::from_mask(nx, ny, h, Topology::Periodic, fluid, owner)
    }

    #[test]
    fn nonlinearity_primitive_is_consistent() {
        let spec = ElectrolyteSpec::binary(0.5, 1.0, 1.0, 1.0);
        let nl = CutoffNonlinearity::new(&spec, 2.0);
        for &z in &[-3.0, -2.0, -0.4, 0.0, 0.7, 2.0, 2.5] {
            let d = 1e-6;
            let fd = (nl.primitive(z + d) - nl.primitive(z - d)) / (2.0 * d);
            assert!(
                (fd - nl.value(z)).abs() < 1e-7 * (1.0 + nl.value(z).abs()),
                "z={z}"
            );
        }
        assert_eq!(nl.primitive(0.0), 0.0);
    }

    #[test]
    fn uncharged_gives_zero_potential() {
        let g = slab(64, 4.0);
        let spec = ElectrolyteSpec::binary(0.5, 1.0, 1.0, 1.0);
        let eq = solve_equilibrium(&g, &spec, &SurfaceCharge::constant(0.0)).unwrap();
        assert_eq!(eq.psi.max_abs(), 0.0);
        for &c in g.fluid_cells() {
            assert_eq!(eq.n0[0].data[c as usize], 0.5);
        }
    }

    #[test]
    fn oracle_sign_and_zero() {
        let spec = ElectrolyteSpec::binary(0.5, 1.0, 1.0, 1.0);
        let p = gouy_chapman_oracle(&spec, 0.0, 1.0, 64).unwrap();
        assert!(p.psi.iter().all(|&v| v == 0.0));
        let p = gouy_chapman_oracle(&spec, 0.5, 1.0, 64).unwrap();
        assert!(p.psi[0] < 0.0);
        let p = gouy_chapman_oracle(&spec, -0.5, 1.0, 64).unwrap();
        assert!(p.psi[0] > 0.0);
    }

    #[test]
    fn oracle_mesh_doubling() {
        let spec = ElectrolyteSpec::binary(0.5, 1.0, 1.0, 1.0);
        let a = gouy_chapman_oracle(&spec, 1.0, 1.0, 512).unwrap();
        let b = gouy_chapman_oracle(&spec, 1.0, 1.0, 1024).unwrap();
        let diff = a
            .psi
            .iter()
            .enumerate()
            .map(|(k, v)| (v - b.psi[2 * k]).abs())
            .fold(0.0, f64::max);
        assert!(diff <= 1e-8, "{diff}");
    }

    #[test]
    fn screened_lift_matches_dense_1d_and_cosh() {
        let nx = 256;
        let g = slab(nx, 4.0);
        let q = 0.5;
        let lift = solve_screened_lift(&g, &SurfaceCharge::constant(q), 1.0).unwrap();
        // Dense 1D assembly of the same finite-volume scheme on the fluid half.
        let m = nx / 2;
        let h = g.h;
        let mut a = nalgebra::DMatrix::<f64>::zeros(m, m);
        let mut b = nalgebra::DVector::<f64>::zeros(m);
        for k in 0..m {
            a[(k, k)] = 1.0;
            if k > 0 {
                a[(k, k)] += 1.0 / (h * h);
                a[(k, k - 1)] = -1.0 / (h * h);
            }
            if k + 1 < m {
                a[(k, k)] += 1.0 / (h * h);
                a[(k, k + 1)] = -1.0 / (h * h);
            }
        }
        b[0] = -q / h;
        b[m - 1] = -q / h;
        let dense = a.lu().solve(&b).unwrap();
        let half_width: f64 = 1.0;
        let amp = -q / half_width.sinh();
        for k in 0..m {
            let v = lift.v.data[nx / 2 + k];
            assert!((v - dense[k]).abs() <= 1e-6 * dense.amax(), "k={k}");
            let x = (k as f64 + 0.5) * h - half_width;
            assert!((v - amp * x.cosh()).abs() <= 1e-3 * amp.abs());
        }
        let bound = barrier_constant(q, 0.5, 1.0);
        assert!(lift.v_min.abs() <= 2.0 * bound && lift.v_max.abs() <= 2.0 * bound);
    }

    #[test]
    fn screened_lift_zero_charge() {
        let g = slab(64, 4.0);
        let lift = solve_screened_lift(&g, &SurfaceCharge::constant(0.0), 1.0).unwrap();
        assert_eq!(lift.v.max_abs(), 0.0);
    }

    #[test]
    fn slab_bounds_balance_and_monotone_energy() {
        let g = slab(128, 4.0);
        let spec = ElectrolyteSpec::binary(0.5, 1.0, 1.0, 1.0);
        let sc = SurfaceCharge::constant(1.5);
        let eq = solve_equilibrium(&g, &spec, &sc).unwrap();
        for &c in g.fluid_cells() {
            let p = eq.psi.data[c as usize];
            assert!(eq.bounds.psi_min <= p && p <= eq.bounds.psi_max);
            assert!(p.abs() < eq.cutoff);
        }
        for w in eq.energy_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-14 * w[0].abs());
        }
        let (fluid, surface) = charge_balance(&g, &spec, &sc, &eq);
        assert!((fluid - surface).abs() <= 1e-8 * surface.abs());
    }

    #[test]
    fn residual_is_energy_gradient() {
        use rand::{Rng, SeedableRng};
        let g = slab(32, 1.0);
        let spec = ElectrolyteSpec::binary(0.5, 1.0, 1.0, 1.0);
        let sc = SurfaceCharge::constant(0.7);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let mut psi = vec![0.0; g.cells()];
        for &c in g.fluid_cells() {
            psi[c as usize] = rng.gen_range(-0.5..0.5);
        }
        let r = discrete_residual(&g, &spec, &sc, 5.0, &psi);
        for _ in 0..10 {
            let mut d = vec![0.0; g.cells()];
            for &c in g.fluid_cells() {
                d[c as usize] = rng.gen_range(-1.0..1.0);
            }
            let e = 1e-5;
            let plus: Vec<f64> = psi.iter().zip(&d).map(|(p, d)| p + e * d).collect();
            let minus: Vec<f64> = psi.iter().zip(&d).map(|(p, d)| p - e * d).collect();
            let fd = (discrete_energy(&g, &spec, &sc, 5.0, &plus)
                - discrete_energy(&g, &spec, &sc, 5.0, &minus))
                / (2.0 * e);
            let an: f64 = r.iter().zip(&d).map(|(r, d)| r * d).sum::<f64>() * g.h * g.h;
            assert!((fd - an).abs() <= 1e-6 * an.abs().max(1e-12), "{fd} {an}");
        }
    }
}
