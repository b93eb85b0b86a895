//! Homogenized macroscopic system on the unit square.
//!
//! Unknowns are `Y = (p, w_1, .., w_N)` with `w_i = -z_i Phi_i`, so the driving
//! gradient is `F = grad Y + G`, `G = (f*, -z_i E)`, and the flux is `J = -B F`.
//! Conservation `div J = S` is discretized with P1 elements on the m x m grid,
//! each square cut along its (i, j)-(i+1, j+1) diagonal. Nodal unknowns live at
//! the (m+1)^2 grid vertices; gradients and fluxes are constant per triangle.
//! The pressure row carries natural no-flux conditions, the w rows vanish on
//! the boundary nodes unless `dirichlet` is off.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::krylov::{cg, SolverOptions};
use crate::grid::sum::{dot, Accumulator};
use crate::grid::SolveReport;
use crate::model::Forcing;
use crate::onsager::{check_matrix, OnsagerTensor};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MacroError {
    #[error("solver did not converge: {0}")]
    NoConvergence(SolveReport),
    #[error("Onsager tensor is not symmetric positive definite (asymmetry {asym:e}, lambda_min {lambda_min:e})")]
    NonSpdTensor { asym: f64, lambda_min: f64 },
    #[error("invalid macroscopic problem: {0}")]
    Invalid(String),
}

/// Source density per unknown component, in the Y ordering.
pub type Source = Arc<dyn Fn(f64, f64) -> Vec<f64> + Send + Sync>;

#[derive(Clone)]
pub struct MacroProblem {
    pub m: usize,
    pub tensor: OnsagerTensor,
    pub forcing: Forcing,
    /// Homogeneous Dirichlet data for the potentials; off gives pure no-flux.
    pub dirichlet: bool,
    pub source: Option<Source>,
}

impl std::fmt::Debug for MacroProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MacroProblem")
            .field("m", &self.m)
            .field("tensor", &self.tensor)
            .field("forcing", &self.forcing)
            .field("dirichlet", &self.dirichlet)
            .field("source", &self.source.as_ref().map(|_| "<source>"))
            .finish()
    }
}

impl MacroProblem {
    pub fn new(m: usize, tensor: OnsagerTensor, forcing: Forcing) -> Self {
        MacroProblem {
            m,
            tensor,
            forcing,
            dirichlet: true,
            source: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroEnergy {
    /// Sum over triangles of area * F.BF.
    pub dissipation: f64,
    /// Work of f*, E and the sources on the solution.
    pub work: f64,
}

impl MacroEnergy {
    pub fn residual(&self) -> f64 {
        let scale = self.dissipation.abs().max(self.work.abs());
        if scale == 0.0 {
            0.0
        } else {
            (self.dissipation - self.work).abs() / scale
        }
    }
}

#[derive(Debug, Clone)]
pub struct MacroSolution {
    pub m: usize,
    pub z: Vec<i32>,
    /// Nodal pressure, (m+1)^2 values, zero mean.
    pub p: Vec<f64>,
    /// Nodal potentials Phi_j.
    pub phi: Vec<Vec<f64>>,
    /// Nodal electrochemical potentials mu_j = -z_j (Phi_j + Psi^ext).
    pub mu: Vec<Vec<f64>>,
    /// Darcy velocity per triangle; triangle 2 (j m + i) + t, t = 0 below the diagonal.
    pub u: Vec<[f64; 2]>,
    /// Ionic fluxes per triangle.
    pub jj: Vec<Vec<[f64; 2]>>,
    pub energy: MacroEnergy,
    /// Largest nodal flux imbalance relative to the largest right-hand side entry.
    pub balance: f64,
    pub report: SolveReport,
    y: Vec<f64>,
    drive: Vec<Vec<f64>>,
}

/// Gradients of the three hat functions on each triangle type, in units of 1/h,
/// and the local vertex offsets.
const TRI: [([(usize, usize); 3], [[f64; 2]; 3]); 2] = [
    (
        [(0, 0), (1, 0), (1, 1)],
        [[-1.0, 0.0], [1.0, -1.0], [0.0, 1.0]],
    ),
    (
        [(0, 0), (1, 1), (0, 1)],
        [[0.0, -1.0], [1.0, 0.0], [-1.0, 1.0]],
    ),
];

/// Edge midpoints of a triangle in units of h relative to its square corner.
fn midpoints(t: usize) -> [[f64; 2]; 3] {
    let v = TRI[t].0;
    let mid = |a: usize, b: usize| {
        [
            0.5 * (v[a].0 + v[b].0) as f64,
            0.5 * (v[a].1 + v[b].1) as f64,
        ]
    };
    [mid(0, 1), mid(1, 2), mid(2, 0)]
}

struct Discretization {
    m: usize,
    nc: usize,
    h: f64,
    /// Symmetric part of B.
    bs: Vec<Vec<f64>>,
    /// Local stiffness per triangle type, (3 nc)^2, index (a nc + alpha, b nc + beta).
    local: [Vec<f64>; 2],
    fixed: Vec<bool>,
    free_kernel: Vec<usize>,
}

impl Discretization {
    fn new(m: usize, bs: Vec<Vec<f64>>, dirichlet: bool) -> Self {
        let nc = bs.len() / 2;
        let h = 1.0 / m as f64;
        let area = 0.5 * h * h;
        let local = [0, 1].map(|t| {
            let grads = TRI[t].1;
            let s = 3 * nc;
            let mut k = vec![0.0; s * s];
            for a in 0..3 {
                for b in 0..3 {
                    for al in 0..nc {
                        for be in 0..nc {
                            let mut v = 0.0;
                            for r in 0..2 {
                                for c in 0..2 {
                                    v += grads[a][r] * bs[2 * al + r][2 * be + c] * grads[b][c];
                                }
                            }
                            // grads carry 1/h each
                            k[(a * nc + al) * s + b * nc + be] = area * v / (h * h);
                        }
                    }
                }
            }
            k
        });
        let nn = (m + 1) * (m + 1);
        let mut fixed = vec![false; nn * nc];
        if dirichlet {
            for j in 0..=m {
                for i in 0..=m {
                    if i == 0 || j == 0 || i == m || j == m {
                        for al in 1..nc {
                            fixed[(j * (m + 1) + i) * nc + al] = true;
                        }
                    }
                }
            }
        }
        let free_kernel = if dirichlet {
            vec![0]
        } else {
            (0..nc).collect()
        };
        Discretization {
            m,
            nc,
            h,
            bs,
            local,
            fixed,
            free_kernel,
        }
    }

    fn node(&self, i: usize, j: usize) -> usize {
        j * (self.m + 1) + i
    }

    fn tri_nodes(&self, i: usize, j: usize, t: usize) -> [usize; 3] {
        TRI[t].0.map(|(di, dj)| self.node(i + di, j + dj))
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let nc = self.nc;
        let s = 3 * nc;
        y.iter_mut().for_each(|v| *v = 0.0);
        let mut loc = vec![0.0; s];
        for j in 0..self.m {
            for i in 0..self.m {
                for t in 0..2 {
                    let nodes = self.tri_nodes(i, j, t);
                    for (a, &n) in nodes.iter().enumerate() {
                        loc[a * nc..(a + 1) * nc].copy_from_slice(&x[n * nc..(n + 1) * nc]);
                    }
                    let k = &self.local[t];
                    for (a, &n) in nodes.iter().enumerate() {
                        for al in 0..nc {
                            let row = &k[(a * nc + al) * s..(a * nc + al + 1) * s];
                            y[n * nc + al] += row.iter().zip(&loc).map(|(p, q)| p * q).sum::<f64>();
                        }
                    }
                }
            }
        }
        for (v, &f) in y.iter_mut().zip(&self.fixed) {
            if f {
                *v = 0.0;
            }
        }
    }

    fn inv_diag(&self) -> Vec<f64> {
        let nc = self.nc;
        let s = 3 * nc;
        let mut d = vec![0.0; (self.m + 1) * (self.m + 1) * nc];
        for j in 0..self.m {
            for i in 0..self.m {
                for t in 0..2 {
                    for (a, &n) in self.tri_nodes(i, j, t).iter().enumerate() {
                        for al in 0..nc {
                            d[n * nc + al] += self.local[t][(a * nc + al) * s + a * nc + al];
                        }
                    }
                }
            }
        }
        d.iter()
            .zip(&self.fixed)
            .map(|(&v, &f)| if f || v == 0.0 { 0.0 } else { 1.0 / v })
            .collect()
    }

    fn project(&self, x: &mut [f64]) {
        let nc = self.nc;
        for (v, &f) in x.iter_mut().zip(&self.fixed) {
            if f {
                *v = 0.0;
            }
        }
        let nn = x.len() / nc;
        for &al in &self.free_kernel {
            let mut acc = Accumulator::new();
            (0..nn).for_each(|n| acc.add(x[n * nc + al]));
            let mean = acc.value() / nn as f64;
            (0..nn).for_each(|n| x[n * nc + al] -= mean);
        }
    }

    /// Gradient of the nodal field `y` on triangle (i, j, t), per component.
    fn gradient(&self, y: &[f64], i: usize, j: usize, t: usize) -> Vec<[f64; 2]> {
        let nc = self.nc;
        let nodes = self.tri_nodes(i, j, t);
        let grads = TRI[t].1;
        (0..nc)
            .map(|al| {
                let mut g = [0.0; 2];
                for (a, &n) in nodes.iter().enumerate() {
                    g[0] += y[n * nc + al] * grads[a][0] / self.h;
                    g[1] += y[n * nc + al] * grads[a][1] / self.h;
                }
                g
            })
            .collect()
    }
}

/// Triangle-averaged drive G = (f*, -z_i E), from the edge-midpoint rule.
fn drive_field(m: usize, z: &[i32], forcing: &Forcing) -> Vec<Vec<f64>> {
    let h = 1.0 / m as f64;
    let nc = z.len() + 1;
    let mut out = Vec::with_capacity(2 * m * m);
    for j in 0..m {
        for i in 0..m {
            for t in 0..2 {
                let mut g = vec![0.0; 2 * nc];
                for q in midpoints(t) {
                    let (x, y) = ((i as f64 + q[0]) * h, (j as f64 + q[1]) * h);
                    let f = forcing.f_star.eval(x, y);
                    let e = forcing.e.eval(x, y);
                    for r in 0..2 {
                        g[r] += f[r] / 3.0;
                        for (s, &zs) in z.iter().enumerate() {
                            g[2 * (s + 1) + r] -= zs as f64 * e[r] / 3.0;
                        }
                    }
                }
                out.push(g);
            }
        }
    }
    out
}

fn matvec(b: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    b.iter().map(|row| dot(row, x)).collect()
}

fn flat(g: &[[f64; 2]]) -> Vec<f64> {
    g.iter().flat_map(|v| v.iter().copied()).collect()
}

/// Assembled right-hand side: -sum area (B_s G).grad(eta) + int S eta.
fn rhs(d: &Discretization, drive: &[Vec<f64>], source: Option<&Source>) -> Vec<f64> {
    let (m, nc, h) = (d.m, d.nc, d.h);
    let area = 0.5 * h * h;
    let mut b = vec![0.0; (m + 1) * (m + 1) * nc];
    for j in 0..m {
        for i in 0..m {
            for t in 0..2 {
                let nodes = d.tri_nodes(i, j, t);
                let grads = TRI[t].1;
                let bg = matvec(&d.bs, &drive[2 * (j * m + i) + t]);
                for (a, &n) in nodes.iter().enumerate() {
                    for al in 0..nc {
                        let flux = bg[2 * al] * grads[a][0] + bg[2 * al + 1] * grads[a][1];
                        b[n * nc + al] -= area * flux / h;
                    }
                }
                if let Some(src) = source {
                    let mids = midpoints(t);
                    let vals: Vec<Vec<f64>> = mids
                        .iter()
                        .map(|q| src((i as f64 + q[0]) * h, (j as f64 + q[1]) * h))
                        .collect();
                    // Midpoint k joins local vertices k and k+1; the hat is 1/2 there.
                    for (a, &n) in nodes.iter().enumerate() {
                        let (k1, k2) = (a, (a + 2) % 3);
                        for al in 0..nc {
                            b[n * nc + al] += area / 3.0 * 0.5 * (vals[k1][al] + vals[k2][al]);
                        }
                    }
                }
            }
        }
    }
    for (v, &f) in b.iter_mut().zip(&d.fixed) {
        if f {
            *v = 0.0;
        }
    }
    b
}

/// Source work int S.Y by the same quadrature as the right-hand side.
fn source_work(d: &Discretization, y: &[f64], source: &Source) -> f64 {
    let zero_drive = vec![vec![0.0; 2 * d.nc]; 2 * d.m * d.m];
    let b = rhs(d, &zero_drive, Some(source));
    dot(&b, y)
}

fn validate(prob: &MacroProblem) -> Result<Vec<Vec<f64>>, MacroError> {
    if prob.m < 2 {
        return Err(MacroError::Invalid(format!("m = {} < 2", prob.m)));
    }
    let t = &prob.tensor;
    let nc = t.z.len() + 1;
    if t.b.len() != 2 * nc || t.b.iter().any(|r| r.len() != 2 * nc) {
        return Err(MacroError::Invalid(
            "tensor size does not match the species count".into(),
        ));
    }
    let (asym, lambda_min) = check_matrix(&t.b);
    if !(asym <= 1e-6) || !(lambda_min > 0.0) {
        return Err(MacroError::NonSpdTensor { asym, lambda_min });
    }
    let n = t.b.len();
    Ok((0..n)
        .map(|r| (0..n).map(|c| 0.5 * (t.b[r][c] + t.b[c][r])).collect())
        .collect())
}

pub fn solve_macro(prob: &MacroProblem, tol: f64) -> Result<MacroSolution, MacroError> {
    let bs = validate(prob)?;
    let m = prob.m;
    let z = prob.tensor.z.clone();
    let d = Discretization::new(m, bs, prob.dirichlet);
    let nc = d.nc;
    let drive = drive_field(m, &z, &prob.forcing);
    let b = rhs(&d, &drive, prob.source.as_ref());
    let mut y = vec![0.0; b.len()];
    let inv = d.inv_diag();
    let opts = SolverOptions {
        tol,
        max_iter: 50 * (m + 1) * nc + 1000,
    };
    let report = cg(
        |x, o| d.apply(x, o),
        &inv,
        |x| d.project(x),
        &b,
        &mut y,
        opts,
    )
    .map_err(|e| match e {
        crate::grid::GridError::NoConvergence(r) => MacroError::NoConvergence(r),
        other => MacroError::Invalid(other.to_string()),
    })?;
    gauge(&d, &mut y);

    let h = d.h;
    let area = 0.5 * h * h;
    let tensor_b = &prob.tensor.b;
    let mut u = Vec::with_capacity(2 * m * m);
    let mut jj = vec![Vec::with_capacity(2 * m * m); z.len()];
    let mut diss = Accumulator::new();
    let mut work = Accumulator::new();
    let mut imbalance = vec![0.0; b.len()];
    for j in 0..m {
        for i in 0..m {
            for t in 0..2 {
                let g = &drive[2 * (j * m + i) + t];
                let f: Vec<f64> = flat(&d.gradient(&y, i, j, t))
                    .iter()
                    .zip(g)
                    .map(|(a, c)| a + c)
                    .collect();
                let flux: Vec<f64> = matvec(tensor_b, &f).iter().map(|v| -v).collect();
                diss.add(-area * dot(&f, &flux));
                work.add(-area * dot(&flux, g));
                u.push([flux[0], flux[1]]);
                for (s, js) in jj.iter_mut().enumerate() {
                    js.push([flux[2 * (s + 1)], flux[2 * (s + 1) + 1]]);
                }
                for (a, &n) in d.tri_nodes(i, j, t).iter().enumerate() {
                    let gr = TRI[t].1[a];
                    for al in 0..nc {
                        imbalance[n * nc + al] +=
                            area * (flux[2 * al] * gr[0] + flux[2 * al + 1] * gr[1]) / h;
                    }
                }
            }
        }
    }
    if let Some(src) = &prob.source {
        work.add(source_work(&d, &y, src));
        let zero_drive = vec![vec![0.0; 2 * nc]; 2 * m * m];
        let s = rhs(&d, &zero_drive, Some(src));
        imbalance.iter_mut().zip(&s).for_each(|(v, q)| *v += q);
    }
    let bmax = b.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let worst = imbalance
        .iter()
        .zip(&d.fixed)
        .filter(|(_, &f)| !f)
        .fold(0.0f64, |a, (v, _)| a.max(v.abs()));
    let balance = if bmax == 0.0 { worst } else { worst / bmax };

    let nn = (m + 1) * (m + 1);
    let p: Vec<f64> = (0..nn).map(|n| y[n * nc]).collect();
    let phi: Vec<Vec<f64>> = (0..z.len())
        .map(|s| (0..nn).map(|n| -y[n * nc + s + 1] / z[s] as f64).collect())
        .collect();
    let mu = chemical_potentials(m, &z, &phi, &prob.forcing);
    Ok(MacroSolution {
        m,
        z,
        p,
        phi,
        mu,
        u,
        jj,
        energy: MacroEnergy {
            dissipation: diss.value(),
            work: work.value(),
        },
        balance,
        report,
        y,
        drive,
    })
}

/// Zero-mean pressure (trapezoidal weights); constant modes of pure no-flux
/// potentials are fixed the same way.
fn gauge(d: &Discretization, y: &mut [f64]) {
    let (m, nc) = (d.m, d.nc);
    let weight = |i: usize, j: usize| {
        let e = |k: usize| if k == 0 || k == m { 0.5 } else { 1.0 };
        e(i) * e(j)
    };
    for &al in &d.free_kernel {
        let mut acc = Accumulator::new();
        for j in 0..=m {
            for i in 0..=m {
                acc.add(weight(i, j) * y[d.node(i, j) * nc + al]);
            }
        }
        let mean = acc.value() / (m * m) as f64;
        for n in 0..(m + 1) * (m + 1) {
            y[n * nc + al] -= mean;
        }
    }
}

fn chemical_potentials(m: usize, z: &[i32], phi: &[Vec<f64>], forcing: &Forcing) -> Vec<Vec<f64>> {
    let h = 1.0 / m as f64;
    z.iter()
        .zip(phi)
        .map(|(&zs, ph)| {
            (0..(m + 1) * (m + 1))
                .map(|n| {
                    let (i, j) = (n % (m + 1), n / (m + 1));
                    let ext = forcing
                        .psi_ext_at(i as f64 * h, j as f64 * h, [0.5, 0.5])
                        .unwrap_or(0.0);
                    -(zs as f64) * (ph[n] + ext)
                })
                .collect()
        })
        .collect()
}

/// Fluxes by both formulas, per triangle.
#[derive(Debug, Clone)]
pub struct MacroFluxes {
    pub u: Vec<[f64; 2]>,
    pub jj: Vec<Vec<[f64; 2]>>,
    pub mu: Vec<Vec<f64>>,
    /// Largest difference between the B-form and the block form, relative to the largest flux.
    pub consistency: f64,
}

pub fn macro_fluxes(sol: &MacroSolution, prob: &MacroProblem) -> MacroFluxes {
    let t = &prob.tensor;
    let m = sol.m;
    let n = sol.z.len();
    let mut u = Vec::with_capacity(2 * m * m);
    let mut jj = vec![Vec::with_capacity(2 * m * m); n];
    let mut worst = 0.0f64;
    let mut scale = 0.0f64;
    let mv = |blk: &[[f64; 2]; 2], v: [f64; 2]| {
        [
            blk[0][0] * v[0] + blk[0][1] * v[1],
            blk[1][0] * v[0] + blk[1][1] * v[1],
        ]
    };
    for j in 0..m {
        for i in 0..m {
            for tt in 0..2 {
                // The same triangle averages of f* and E the solve used.
                let g = &sol.drive[2 * (j * m + i) + tt];
                let fs = [g[0], g[1]];
                let z0 = sol.z[0] as f64;
                let e = [-g[2] / z0, -g[3] / z0];
                let gp = tri_gradient(&sol.p, m, i, j, tt);
                let gphi: Vec<[f64; 2]> = sol
                    .phi
                    .iter()
                    .map(|ph| tri_gradient(ph, m, i, j, tt))
                    .collect();
                // B-form with grad mu_j = -z_j (grad Phi_j + E)
                let mut f = vec![gp[0] + fs[0], gp[1] + fs[1]];
                for s in 0..n {
                    let zs = sol.z[s] as f64;
                    f.push(-zs * (gphi[s][0] + e[0]));
                    f.push(-zs * (gphi[s][1] + e[1]));
                }
                let jb: Vec<f64> = matvec(&t.b, &f).iter().map(|v| -v).collect();
                // block form
                let dp = [gp[0] + fs[0], gp[1] + fs[1]];
                let mut uc = mv(&t.k, dp);
                uc = [-uc[0], -uc[1]];
                for s in 0..n {
                    let a = mv(&t.j[s], [gphi[s][0] + e[0], gphi[s][1] + e[1]]);
                    uc = [uc[0] + a[0], uc[1] + a[1]];
                }
                worst = worst.max((uc[0] - jb[0]).abs()).max((uc[1] - jb[1]).abs());
                for q in 0..n {
                    let l = mv(&t.l[q], dp);
                    let mut jc = [-l[0], -l[1]];
                    for s in 0..n {
                        let a = mv(&t.d[q][s], [gphi[s][0] + e[0], gphi[s][1] + e[1]]);
                        jc = [jc[0] + a[0], jc[1] + a[1]];
                    }
                    worst = worst
                        .max((jc[0] - jb[2 * (q + 1)]).abs())
                        .max((jc[1] - jb[2 * (q + 1) + 1]).abs());
                    jj[q].push([jb[2 * (q + 1)], jb[2 * (q + 1) + 1]]);
                }
                scale = jb.iter().fold(scale, |a, v| a.max(v.abs()));
                u.push([jb[0], jb[1]]);
            }
        }
    }
    let consistency = if scale == 0.0 { worst } else { worst / scale };
    MacroFluxes {
        u,
        jj,
        mu: sol.mu.clone(),
        consistency,
    }
}

fn tri_gradient(field: &[f64], m: usize, i: usize, j: usize, t: usize) -> [f64; 2] {
    let h = 1.0 / m as f64;
    let mut g = [0.0; 2];
    for (a, &(di, dj)) in TRI[t].0.iter().enumerate() {
        let v = field[(j + dj) * (m + 1) + i + di];
        g[0] += v * TRI[t].1[a][0] / h;
        g[1] += v * TRI[t].1[a][1] / h;
    }
    g
}

impl MacroSolution {
    /// Nodal unknowns in the (p, w_1, .., w_N) layout.
    pub fn unknowns(&self) -> &[f64] {
        &self.y
    }

    /// Triangle-averaged drive (f*, -z_i E) used by the discretization.
    pub fn drive(&self) -> &[Vec<f64>] {
        &self.drive
    }

    /// Gradients of p and each Phi_j on triangle `tri` = 2 (j m + i) + t.
    pub fn triangle_gradients(&self, tri: usize) -> Vec<[f64; 2]> {
        let m = self.m;
        let (sq, t) = (tri / 2, tri % 2);
        let (i, j) = (sq % m, sq / m);
        std::iter::once(&self.p)
            .chain(self.phi.iter())
            .map(|f| tri_gradient(f, m, i, j, t))
            .collect()
    }

    /// Recovered nodal gradients (area-weighted average over the adjacent
    /// triangles) of p and each Phi_j: entry 0 is grad p, entry j + 1 grad Phi_j.
    pub fn nodal_gradients(&self) -> Vec<Vec<[f64; 2]>> {
        let m = self.m;
        let nn = (m + 1) * (m + 1);
        let fields: Vec<&Vec<f64>> = std::iter::once(&self.p).chain(self.phi.iter()).collect();
        fields
            .iter()
            .map(|f| {
                let mut acc = vec![[0.0; 2]; nn];
                let mut cnt = vec![0.0; nn];
                for j in 0..m {
                    for i in 0..m {
                        for t in 0..2 {
                            let g = tri_gradient(f, m, i, j, t);
                            for &(di, dj) in &TRI[t].0 {
                                let n = (j + dj) * (m + 1) + i + di;
                                acc[n][0] += g[0];
                                acc[n][1] += g[1];
                                cnt[n] += 1.0;
                            }
                        }
                    }
                }
                acc.iter()
                    .zip(&cnt)
                    .map(|(a, &c)| [a[0] / c, a[1] / c])
                    .collect()
            })
            .collect()
    }

    /// Bilinear interpolation of nodal data at (x, y) in the unit square.
    pub fn interpolate<T: Copy>(
        &self,
        nodal: &[T],
        x: f64,
        y: f64,
        lerp: impl Fn(&[T; 4], [f64; 4]) -> T,
    ) -> T {
        let m = self.m;
        let sx = (x * m as f64).clamp(0.0, m as f64);
        let sy = (y * m as f64).clamp(0.0, m as f64);
        let i = (sx.floor() as usize).min(m - 1);
        let j = (sy.floor() as usize).min(m - 1);
        let (a, b) = (sx - i as f64, sy - j as f64);
        let idx = |di: usize, dj: usize| (j + dj) * (m + 1) + i + di;
        let vals = [
            nodal[idx(0, 0)],
            nodal[idx(1, 0)],
            nodal[idx(0, 1)],
            nodal[idx(1, 1)],
        ];
        lerp(
            &vals,
            [(1.0 - a) * (1.0 - b), a * (1.0 - b), (1.0 - a) * b, a * b],
        )
    }

    /// Line integrals of every flux across the mid-plane sections x = 1/2
    /// (normal component x) and y = 1/2 (normal component y), as CSV.
    pub fn section_csv(&self) -> String {
        let m = self.m;
        let h = 1.0 / m as f64;
        let mut out = String::from("section,field,flux\n");
        let fields: Vec<(String, &Vec<[f64; 2]>)> = std::iter::once(("u".to_string(), &self.u))
            .chain(
                self.jj
                    .iter()
                    .enumerate()
                    .map(|(s, f)| (format!("j{}", s + 1), f)),
            )
            .collect();
        let sq = |f: &Vec<[f64; 2]>, i: usize, j: usize, c: usize| {
            0.5 * (f[2 * (j * m + i)][c] + f[2 * (j * m + i) + 1][c])
        };
        for (name, f) in &fields {
            let (mut sx, mut sy) = (Accumulator::new(), Accumulator::new());
            let mid = m / 2;
            for k in 0..m {
                if m % 2 == 0 {
                    sx.add(0.5 * h * (sq(f, mid - 1, k, 0) + sq(f, mid, k, 0)));
                    sy.add(0.5 * h * (sq(f, k, mid - 1, 1) + sq(f, k, mid, 1)));
                } else {
                    sx.add(h * sq(f, mid, k, 0));
                    sy.add(h * sq(f, k, mid, 1));
                }
            }
            out.push_str(&format!("x=0.5,{name},{:.17e}\n", sx.value()));
            out.push_str(&format!("y=0.5,{name},{:.17e}\n", sy.value()));
        }
        out
    }
}
