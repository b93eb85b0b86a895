//! Directly resolved epsilon-problem on the perforated unit square, the
//! two-scale reconstruction from cell and macroscopic solutions, and the
//! convergence metrics comparing the two.
//!
//! The perforated domain tiles one RVE realization with period eps L. Grains
//! whose scaled disk comes closer than eps to the outer boundary are dropped.
//! The outer boundary is a no-slip wall with Phi = 0.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cell::{CellSolution, CoupledSystem, EnergyBalance, Family};
use crate::geometry::{Grain, Microstructure};
use crate::grid::krylov::SolverOptions;
use crate::grid::ops::{grad_bc_into, grad_into, neg_vector_lap_into};
use crate::grid::sum::Accumulator;
use crate::grid::{
    Axis, FaceKind, FluidGrid, GridError, MacVectorField, ScalarField, SolveReport, Topology, NONE,
};
use crate::macrosolve::MacroSolution;
use crate::model::{ElectrolyteSpec, Forcing};
use crate::pb::EquilibriumState;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EpsilonError {
    #[error("{cells:.1} cells across the smallest grain, at least 16 needed")]
    ResolutionTooCoarse { cells: f64 },
    #[error("fluid phase of the perforated domain is not connected")]
    DisconnectedFluid,
    #[error("eps L = {0} does not divide the unit square")]
    TilingMismatch(f64),
    #[error("inputs do not belong together: {0}")]
    ConfigMismatch(String),
    #[error("solver did not converge: {0}")]
    NoConvergence(SolveReport),
    #[error(transparent)]
    Grid(GridError),
}

impl From<GridError> for EpsilonError {
    fn from(e: GridError) -> Self {
        match e {
            GridError::NoConvergence(r) => EpsilonError::NoConvergence(r),
            other => EpsilonError::Grid(other),
        }
    }
}

/// Maps points of G to the RVE grid through x -> (x / eps) mod L.
#[derive(Debug, Clone, Copy, PartialEq)]
struct RveMap {
    eps: f64,
    l: f64,
    n: usize,
}

impl RveMap {
    fn wrap(&self, x: f64) -> f64 {
        (x / self.eps).rem_euclid(self.l)
    }

    fn h(&self) -> f64 {
        self.l / self.n as f64
    }

    /// RVE cell index containing the wrapped point.
    fn cell(&self, x: f64, y: f64) -> usize {
        let h = self.h();
        let i = ((self.wrap(x) / h).floor() as usize).min(self.n - 1);
        let j = ((self.wrap(y) / h).floor() as usize).min(self.n - 1);
        j * self.n + i
    }

    /// Nearest RVE face of the given orientation.
    fn face(&self, axis: Axis, x: f64, y: f64) -> usize {
        let h = self.h();
        let n = self.n;
        let (along, across) = match axis {
            Axis::X => (self.wrap(x), self.wrap(y)),
            Axis::Y => (self.wrap(y), self.wrap(x)),
        };
        let a = ((along / h).round() as usize) % n;
        let b = ((across / h).floor() as usize).min(n - 1);
        match axis {
            Axis::X => b * n + a,
            Axis::Y => a * n + b,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PerforatedDomain {
    pub epsilon: f64,
    pub m: usize,
    /// RVE copies per side.
    pub tiles: usize,
    pub seed: u64,
    /// Walled m x m grid of the unit square.
    pub grid: FluidGrid,
    /// Sampled concentrations n_eps^j on the cells.
    pub n: Vec<ScalarField>,
    /// Placed grains in G coordinates.
    pub grains: Vec<Grain>,
    /// Grain copies removed by the clearance rule.
    pub dropped: usize,
    map: RveMap,
}

/// Tiles the RVE over G with period eps L and samples the equilibrium
/// concentrations at the wrapped RVE coordinate. Cells that are solid in the
/// RVE but fluid here (the clearance band) take the bulk value n^c.
pub fn build_perforated_domain(
    micro: &Microstructure,
    rve: &FluidGrid,
    eq: &EquilibriumState,
    spec: &ElectrolyteSpec,
    eps: f64,
    m: usize,
) -> Result<PerforatedDomain, EpsilonError> {
    let l = micro.l;
    let t = 1.0 / (eps * l);
    let tiles = t.round();
    if !(eps > 0.0) || tiles < 1.0 || (t - tiles).abs() > 1e-9 * t {
        return Err(EpsilonError::TilingMismatch(eps * l));
    }
    let tiles = tiles as usize;
    if rve.topology != Topology::Periodic || rve.nx != rve.ny || (rve.lx() - l).abs() > 1e-12 * l {
        return Err(EpsilonError::ConfigMismatch(
            "RVE grid does not match the microstructure".into(),
        ));
    }
    if eq.n0.len() != spec.species() {
        return Err(EpsilonError::ConfigMismatch(
            "equilibrium species count".into(),
        ));
    }
    let h = 1.0 / m as f64;
    if let Some(r) = micro.grains.iter().map(|g| g.radius).reduce(f64::min) {
        let cells = 2.0 * eps * r / h;
        if cells < 16.0 {
            return Err(EpsilonError::ResolutionTooCoarse { cells });
        }
    }

    let mut grains = Vec::new();
    let mut dropped = 0;
    // One ring of extra tiles catches the images of grains that straddle the RVE edge.
    for b in -1..=tiles as isize {
        for a in -1..=tiles as isize {
            for g in &micro.grains {
                let c = [
                    eps * (g.center[0] + a as f64 * l),
                    eps * (g.center[1] + b as f64 * l),
                ];
                let r = eps * g.radius;
                let inside = |v: f64| v - r > -1e-12 && v + r < 1.0 + 1e-12;
                if !(inside(c[0]) && inside(c[1])) {
                    // Not in G at all: belongs to a neighbouring copy.
                    if c[0] + r > 0.0 && c[0] - r < 1.0 && c[1] + r > 0.0 && c[1] - r < 1.0 {
                        dropped += 1;
                    }
                    continue;
                }
                let clear = c[0] - r >= eps
                    && c[0] + r <= 1.0 - eps
                    && c[1] - r >= eps
                    && c[1] + r <= 1.0 - eps;
                if clear {
                    grains.push(Grain {
                        center: c,
                        radius: r,
                    });
                } else {
                    dropped += 1;
                }
            }
        }
    }

    let mut fluid = vec![true; m * m];
    let mut owner = vec![NONE; m * m];
    for (k, g) in grains.iter().enumerate() {
        let lo = |v: f64| (((v - g.radius) / h - 0.5).floor().max(0.0)) as usize;
        let hi = |v: f64| ((((v + g.radius) / h - 0.5).ceil()) as usize).min(m - 1);
        for j in lo(g.center[1])..=hi(g.center[1]) {
            for i in lo(g.center[0])..=hi(g.center[0]) {
                let p = [(i as f64 + 0.5) * h, (j as f64 + 0.5) * h];
                let d2 = (p[0] - g.center[0]).powi(2) + (p[1] - g.center[1]).powi(2);
                if d2 < g.radius * g.radius && owner[j * m + i] == NONE {
                    fluid[j * m + i] = false;
                    owner[j * m + i] = k as u32;
                }
            }
        }
    }
    let grid = FluidGrid::from_mask(m, m, h, Topology::Walled, fluid, owner);
    if !grid.is_connected() {
        return Err(EpsilonError::DisconnectedFluid);
    }

    let map = RveMap { eps, l, n: rve.nx };
    let n = (0..spec.species())
        .map(|s| {
            let mut f = grid.zero_scalar();
            for &c in grid.fluid_cells() {
                let [x, y] = grid.cell_center(c as usize);
                let rc = map.cell(x, y);
                f.data[c as usize] = if rve.is_fluid(rc) {
                    eq.n0[s].data[rc]
                } else {
                    spec.n_c[s]
                };
            }
            f
        })
        .collect();
    Ok(PerforatedDomain {
        epsilon: eps,
        m,
        tiles,
        seed: micro.seed,
        grid,
        n,
        grains,
        dropped,
        map,
    })
}

#[derive(Debug, Clone)]
pub struct EpsilonSolution {
    pub epsilon: f64,
    pub u: MacVectorField,
    pub p: ScalarField,
    pub phi: Vec<ScalarField>,
    pub energy: EnergyBalance,
    /// L2 norm of u over the faces.
    pub u_norm: f64,
    /// Discrete H1 seminorm of u.
    pub grad_u_norm: f64,
    pub report: SolveReport,
}

impl EpsilonSolution {
    /// ||u|| / (eps ||grad u||); zero for the zero solution.
    pub fn poincare_ratio(&self) -> f64 {
        if self.grad_u_norm == 0.0 {
            0.0
        } else {
            self.u_norm / (self.epsilon * self.grad_u_norm)
        }
    }
}

fn face_values(g: &FluidGrid, f: impl Fn([f64; 2]) -> [f64; 2]) -> MacVectorField {
    let mut out = g.zero_vector();
    for k in 0..g.x_faces() {
        out.x[k] = f(g.face_center(Axis::X, k))[0];
    }
    for k in 0..g.y_faces() {
        out.y[k] = f(g.face_center(Axis::Y, k))[1];
    }
    out
}

fn plain_norm(g: &FluidGrid, v: &MacVectorField) -> f64 {
    let mut acc = Accumulator::new();
    v.x.iter().chain(&v.y).for_each(|a| acc.add(a * a));
    (acc.value() * g.h * g.h).sqrt()
}

/// eps^2-viscous Stokes with force `-f* + sum_j z_j n_j E` (plus the coupling
/// to the unknown potentials), and div(n_j(grad Phi_j + E + (Pe_j/z_j) u)) = 0
/// with Phi_j = 0 on the outer boundary, by block Gauss-Seidel.
pub fn solve_linearized(
    dom: &PerforatedDomain,
    spec: &ElectrolyteSpec,
    forcing: &Forcing,
    opts: SolverOptions,
) -> Result<EpsilonSolution, EpsilonError> {
    if dom.n.len() != spec.species() {
        return Err(EpsilonError::ConfigMismatch("species count".into()));
    }
    let g = &dom.grid;
    let eps = dom.epsilon;
    let sys = CoupledSystem::new(g, spec, &dom.n, eps * eps, true);
    let e = face_values(g, |p| forcing.e.eval(p[0], p[1]));
    let mut f = face_values(g, |p| forcing.f_star.eval(p[0], p[1]));
    f.scale(-1.0);
    for (s, nf) in sys.nface.iter().enumerate() {
        let z = sys.z[s];
        for ((o, a), n) in f.x.iter_mut().zip(&e.x).zip(&nf.x) {
            *o += z * n * a;
        }
        for ((o, a), n) in f.y.iter_mut().zip(&e.y).zip(&nf.y) {
            *o += z * n * a;
        }
    }
    let d = vec![Some(e); spec.species()];
    let b = sys.rhs(&f, &d);
    let mut x = vec![0.0; sys.len()];
    let report = sys.solve_block_gs(&b, &mut x, opts)?;
    let energy = sys.energy(&x, &b);
    let (u, p, phi) = sys.unpack(&x);
    let u_norm = plain_norm(g, &u);
    let grad_u_norm = (energy.viscous / (eps * eps)).max(0.0).sqrt();
    Ok(EpsilonSolution {
        epsilon: eps,
        u,
        p,
        phi,
        energy,
        u_norm,
        grad_u_norm,
        report,
    })
}

/// Cell solution for (family, k), checked against the RVE grid.
fn cell<'a>(
    cells: &'a [CellSolution],
    family: Family,
    k: usize,
    rve: &FluidGrid,
) -> Result<&'a CellSolution, EpsilonError> {
    let c = cells
        .iter()
        .find(|c| c.family == family && c.k == k)
        .ok_or_else(|| {
            EpsilonError::ConfigMismatch(format!("missing cell solution {family:?}, k = {k}"))
        })?;
    if c.v.nx != rve.nx || c.v.ny != rve.ny || c.v.topology != Topology::Periodic {
        return Err(EpsilonError::ConfigMismatch("cell solution grid".into()));
    }
    Ok(c)
}

#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub u: MacVectorField,
    /// grad Phi_j^0 + Theta_j^1 on the faces.
    pub grad_phi: Vec<MacVectorField>,
}

/// Coefficients multiplying cell family (f, k), ordered family-major:
/// `-(d_k p + f*_k)` for the pressure family, `E_k + d_k Phi_i` for species i.
fn coefficients(grads: &[[f64; 2]], f_star: [f64; 2], e: [f64; 2]) -> Vec<f64> {
    let mut c = vec![-(grads[0][0] + f_star[0]), -(grads[0][1] + f_star[1])];
    for gi in &grads[1..] {
        c.push(e[0] + gi[0]);
        c.push(e[1] + gi[1]);
    }
    c
}

/// Two-scale reconstruction on the faces of the perforated grid. RVE fields
/// are sampled with periodic wrap; macroscopic gradients are the recovered
/// nodal gradients, interpolated bilinearly.
pub fn reconstruct(
    macro_sol: &MacroSolution,
    cells: &[CellSolution],
    rve: &FluidGrid,
    forcing: &Forcing,
    dom: &PerforatedDomain,
) -> Result<Reconstruction, EpsilonError> {
    let nodal = macro_sol.nodal_gradients();
    let lerp = |v: &[[f64; 2]; 4], w: [f64; 4]| {
        let mut o = [0.0; 2];
        for q in 0..4 {
            o[0] += w[q] * v[q][0];
            o[1] += w[q] * v[q][1];
        }
        o
    };
    let grads = |x: f64, y: f64| -> Vec<[f64; 2]> {
        nodal
            .iter()
            .map(|nd| macro_sol.interpolate(nd, x, y, lerp))
            .collect()
    };
    reconstruct_with(grads, macro_sol.z.len(), cells, rve, forcing, dom)
}

/// Reconstruction from given macroscopic gradients `[grad p, grad Phi_1, ..]`
/// at a point of G.
pub fn reconstruct_with(
    macro_grads: impl Fn(f64, f64) -> Vec<[f64; 2]>,
    ns: usize,
    cells: &[CellSolution],
    rve: &FluidGrid,
    forcing: &Forcing,
    dom: &PerforatedDomain,
) -> Result<Reconstruction, EpsilonError> {
    if dom.n.len() != ns || rve.nx != dom.map.n {
        return Err(EpsilonError::ConfigMismatch(
            "macro, cell and domain data differ".into(),
        ));
    }
    let fams = Family::all(ns);
    let mut sols = Vec::new();
    for &fam in &fams {
        for k in 0..2 {
            let c = cell(cells, fam, k, rve)?;
            if c.theta.len() != ns {
                return Err(EpsilonError::ConfigMismatch("cell species count".into()));
            }
            sols.push(c);
        }
    }
    // RVE gradients of every theta on the RVE faces.
    let grads: Vec<Vec<MacVectorField>> = sols
        .iter()
        .map(|c| {
            c.theta
                .iter()
                .map(|t| {
                    let mut gv = rve.zero_vector();
                    grad_into(rve, &t.data, &mut gv.x, &mut gv.y);
                    gv
                })
                .collect()
        })
        .collect();
    let g = &dom.grid;
    let mut u = g.zero_vector();
    let mut grad_phi = vec![g.zero_vector(); ns];
    for axis in [Axis::X, Axis::Y] {
        let count = if axis == Axis::X {
            g.x_faces()
        } else {
            g.y_faces()
        };
        let comp = if axis == Axis::X { 0 } else { 1 };
        for f in 0..count {
            let [x, y] = g.face_center(axis, f);
            let gr = macro_grads(x, y);
            if gr.len() != ns + 1 {
                return Err(EpsilonError::ConfigMismatch("macro gradient count".into()));
            }
            let coef = coefficients(&gr, forcing.f_star.eval(x, y), forcing.e.eval(x, y));
            let rf = dom.map.face(axis, x, y);
            let mut acc = 0.0;
            let mut acc_phi: Vec<f64> = gr[1..].iter().map(|v| v[comp]).collect();
            for (a, c) in sols.iter().enumerate() {
                let v = if axis == Axis::X {
                    c.v.x[rf]
                } else {
                    c.v.y[rf]
                };
                acc += coef[a] * v;
                for s in 0..ns {
                    let gv = &grads[a][s];
                    acc_phi[s] += coef[a] * if axis == Axis::X { gv.x[rf] } else { gv.y[rf] };
                }
            }
            if axis == Axis::X {
                u.x[f] = acc;
                for s in 0..ns {
                    grad_phi[s].x[f] = acc_phi[s];
                }
            } else {
                u.y[f] = acc;
                for s in 0..ns {
                    grad_phi[s].y[f] = acc_phi[s];
                }
            }
        }
    }
    Ok(Reconstruction { u, grad_phi })
}

/// Quadratic form of the cell dissipation in the family coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DissipationForm {
    /// (1/|Y|) a(v^a, v^b).
    pub viscous: Vec<Vec<f64>>,
    pub species: Vec<SpeciesMoments>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeciesMoments {
    /// z_j^2 / Pe_j.
    pub coef: f64,
    /// Face means of N_j per direction.
    pub mean_n: [f64; 2],
    /// Face means of N_j grad theta_j^a per direction.
    pub first: Vec<[f64; 2]>,
    /// Face means of N_j grad theta_j^a . grad theta_j^b.
    pub second: Vec<Vec<f64>>,
}

pub fn dissipation_form(
    cells: &[CellSolution],
    eq: &EquilibriumState,
    rve: &FluidGrid,
    spec: &ElectrolyteSpec,
) -> Result<DissipationForm, EpsilonError> {
    let ns = spec.species();
    let sys = CoupledSystem::new(rve, spec, &eq.n0, 1.0, false);
    let mut sols = Vec::new();
    for fam in Family::all(ns) {
        for k in 0..2 {
            sols.push(cell(cells, fam, k, rve)?);
        }
    }
    let na = sols.len();
    let vol = rve.lx() * rve.ly();
    let h2 = rve.h * rve.h;
    let lap: Vec<MacVectorField> = sols
        .iter()
        .map(|c| {
            let mut o = rve.zero_vector();
            neg_vector_lap_into(rve, &c.v.x, &c.v.y, &mut o.x, &mut o.y);
            o
        })
        .collect();
    let dotf = |a: &MacVectorField, b: &MacVectorField| {
        let mut acc = Accumulator::new();
        a.x.iter()
            .zip(&b.x)
            .chain(a.y.iter().zip(&b.y))
            .for_each(|(p, q)| acc.add(p * q));
        acc.value() * h2 / vol
    };
    let viscous = (0..na)
        .map(|a| (0..na).map(|b| dotf(&lap[a], &sols[b].v)).collect())
        .collect();
    let species = (0..ns)
        .map(|s| {
            let nf = &sys.nface[s];
            let gr: Vec<MacVectorField> = sols
                .iter()
                .map(|c| {
                    let mut gv = rve.zero_vector();
                    grad_into(rve, &c.theta[s].data, &mut gv.x, &mut gv.y);
                    gv
                })
                .collect();
            let mean = |v: &[f64]| v.iter().sum::<f64>() * h2 / vol;
            let weighted = |a: &MacVectorField| {
                let mut w = a.clone();
                w.x.iter_mut().zip(&nf.x).for_each(|(p, n)| *p *= n);
                w.y.iter_mut().zip(&nf.y).for_each(|(p, n)| *p *= n);
                w
            };
            let wgr: Vec<MacVectorField> = gr.iter().map(weighted).collect();
            SpeciesMoments {
                coef: sys.coef[s],
                mean_n: [mean(&nf.x), mean(&nf.y)],
                first: wgr.iter().map(|w| [mean(&w.x), mean(&w.y)]).collect(),
                second: (0..na)
                    .map(|a| (0..na).map(|b| dotf(&wgr[a], &gr[b])).collect())
                    .collect(),
            }
        })
        .collect();
    Ok(DissipationForm { viscous, species })
}

/// Homogenized dissipation: the cell dissipation density at the local
/// macroscopic coefficients, integrated over the macroscopic triangles.
pub fn homogenized_dissipation(form: &DissipationForm, macro_sol: &MacroSolution) -> f64 {
    let m = macro_sol.m;
    let ns = macro_sol.z.len();
    let area = 0.5 / (m * m) as f64;
    let quad = |q: &[Vec<f64>], c: &[f64]| {
        let mut v = 0.0;
        for (a, row) in q.iter().enumerate() {
            for (b, val) in row.iter().enumerate() {
                v += c[a] * val * c[b];
            }
        }
        v
    };
    let mut acc = Accumulator::new();
    for tri in 0..2 * m * m {
        let grads = macro_sol.triangle_gradients(tri);
        let dr = &macro_sol.drive()[tri];
        let z0 = macro_sol.z[0] as f64;
        let coef = coefficients(&grads, [dr[0], dr[1]], [-dr[2] / z0, -dr[3] / z0]);
        let mut dens = quad(&form.viscous, &coef);
        for s in 0..ns {
            let sm = &form.species[s];
            let g = grads[s + 1];
            let mut v = sm.mean_n[0] * g[0] * g[0] + sm.mean_n[1] * g[1] * g[1];
            for (a, fm) in sm.first.iter().enumerate() {
                v += 2.0 * coef[a] * (fm[0] * g[0] + fm[1] * g[1]);
            }
            v += quad(&sm.second, &coef);
            dens += sm.coef * v;
        }
        acc.add(area * dens);
    }
    acc.value()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceMetrics {
    pub epsilon: f64,
    pub m: usize,
    pub velocity_error: f64,
    pub species_errors: Vec<f64>,
    pub energy_residual: f64,
    pub dissipation_eps: f64,
    pub dissipation_hom: f64,
    pub poincare_ratio: f64,
    /// (||u|| + eps ||grad u||) / (|E| + |f*|) with the forcing's L2 norms on G.
    pub apriori_constant: f64,
    pub u_norm: f64,
    pub grad_u_norm: f64,
}

fn relative(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        if num == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        num / den
    }
}

fn forcing_norm(forcing: &Forcing, samples: usize) -> f64 {
    let h = 1.0 / samples as f64;
    let (mut fe, mut ff) = (Accumulator::new(), Accumulator::new());
    for j in 0..samples {
        for i in 0..samples {
            let (x, y) = ((i as f64 + 0.5) * h, (j as f64 + 0.5) * h);
            let e = forcing.e.eval(x, y);
            let f = forcing.f_star.eval(x, y);
            fe.add((e[0] * e[0] + e[1] * e[1]) * h * h);
            ff.add((f[0] * f[0] + f[1] * f[1]) * h * h);
        }
    }
    fe.value().sqrt() + ff.value().sqrt()
}

pub fn convergence_metrics(
    sol: &EpsilonSolution,
    rec: &Reconstruction,
    dom: &PerforatedDomain,
    forcing: &Forcing,
    dissipation_hom: f64,
) -> ConvergenceMetrics {
    let g = &dom.grid;
    let mut diff = sol.u.clone();
    diff.axpy(-1.0, &rec.u);
    let velocity_error = relative(plain_norm(g, &diff), plain_norm(g, &rec.u));
    let species_errors = sol
        .phi
        .iter()
        .zip(&rec.grad_phi)
        .map(|(phi, rg)| {
            let mut gv = g.zero_vector();
            grad_bc_into(g, &phi.data, &mut gv.x, &mut gv.y);
            let (mut num, mut den) = (Accumulator::new(), Accumulator::new());
            for f in 0..g.x_faces() {
                if g.x_kind(f) == FaceKind::Open {
                    num.add((gv.x[f] - rg.x[f]).powi(2));
                    den.add(rg.x[f].powi(2));
                }
            }
            for f in 0..g.y_faces() {
                if g.y_kind(f) == FaceKind::Open {
                    num.add((gv.y[f] - rg.y[f]).powi(2));
                    den.add(rg.y[f].powi(2));
                }
            }
            relative(num.value().sqrt(), den.value().sqrt())
        })
        .collect();
    let fnorm = forcing_norm(forcing, 64);
    ConvergenceMetrics {
        epsilon: sol.epsilon,
        m: dom.m,
        velocity_error,
        species_errors,
        energy_residual: sol.energy.residual(),
        dissipation_eps: sol.energy.dissipation(),
        dissipation_hom,
        poincare_ratio: sol.poincare_ratio(),
        apriori_constant: relative(sol.u_norm + sol.epsilon * sol.grad_u_norm, fnorm),
        u_norm: sol.u_norm,
        grad_u_norm: sol.grad_u_norm,
    }
}

/// Metrics as CSV rows, one per eps. Runtimes in seconds add a last column.
pub fn metrics_csv(rows: &[ConvergenceMetrics], runtimes: Option<&[f64]>) -> String {
    let ns = rows.first().map_or(0, |r| r.species_errors.len());
    let mut out = String::from("epsilon,m,velocity_error");
    for s in 0..ns {
        out.push_str(&format!(",species_error_{}", s + 1));
    }
    out.push_str(",energy_residual,dissipation_eps,dissipation_hom,poincare_ratio,apriori_constant");
    out.push_str(if runtimes.is_some() { ",runtime_s\n" } else { "\n" });
    for (q, r) in rows.iter().enumerate() {
        out.push_str(&format!("{},{},{:.10e}", r.epsilon, r.m, r.velocity_error));
        for e in &r.species_errors {
            out.push_str(&format!(",{e:.10e}"));
        }
        out.push_str(&format!(
            ",{:.3e},{:.10e},{:.10e},{:.6},{:.6}",
            r.energy_residual, r.dissipation_eps, r.dissipation_hom, r.poincare_ratio, r.apriori_constant,
        ));
        match runtimes {
            Some(t) => out.push_str(&format!(",{:.2}\n", t[q])),
            None => out.push('\n'),
        }
    }
    out
}
