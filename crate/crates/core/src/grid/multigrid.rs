//! Galerkin multigrid V-cycles for the masked scalar operators on the grid:
//! each velocity component of the Stokes block and the species blocks.
//! Unknowns carry structured (i, j) coordinates; coarse spaces use
//! cell-centred bilinear prolongation and `A_c = P^T A P`, so the masks need
//! no special treatment. The cycle is symmetric (forward Gauss-Seidel before,
//! backward after) and so usable as an SPD preconditioner.

use nalgebra::{DMatrix, SymmetricEigen};

use super::{Axis, FaceKind, FluidGrid, Topology, NONE};

/// Compressed sparse rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Csr {
    pub rows: usize,
    pub cols: usize,
    pub ptr: Vec<usize>,
    pub col: Vec<u32>,
    pub val: Vec<f64>,
}

impl Csr {
    /// From per-row (column, value) lists; duplicates are summed.
    pub fn from_rows(cols: usize, rows: Vec<Vec<(u32, f64)>>) -> Self {
        let mut ptr = Vec::with_capacity(rows.len() + 1);
        let mut col = Vec::new();
        let mut val = Vec::new();
        ptr.push(0);
        for mut r in rows.into_iter() {
            r.sort_by_key(|e| e.0);
            for (c, v) in r {
                if col.len() > *ptr.last().unwrap() && *col.last().unwrap() == c {
                    *val.last_mut().unwrap() += v;
                } else {
                    col.push(c);
                    val.push(v);
                }
            }
            ptr.push(col.len());
        }
        Csr {
            rows: ptr.len() - 1,
            cols,
            ptr,
            col,
            val,
        }
    }

    pub fn spmv(&self, x: &[f64], y: &mut [f64]) {
        for (r, out) in y.iter_mut().enumerate().take(self.rows) {
            let mut acc = 0.0;
            for k in self.ptr[r]..self.ptr[r + 1] {
                acc += self.val[k] * x[self.col[k] as usize];
            }
            *out = acc;
        }
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.rows)
            .map(|r| {
                (self.ptr[r]..self.ptr[r + 1])
                    .find(|&k| self.col[k] as usize == r)
                    .map_or(0.0, |k| self.val[k])
            })
            .collect()
    }

    pub fn transpose(&self) -> Csr {
        let mut rows = vec![Vec::new(); self.cols];
        for r in 0..self.rows {
            for k in self.ptr[r]..self.ptr[r + 1] {
                rows[self.col[k] as usize].push((r as u32, self.val[k]));
            }
        }
        Csr::from_rows(self.rows, rows)
    }

    /// self * other.
    pub fn mul(&self, other: &Csr) -> Csr {
        let mut acc = vec![0.0; other.cols];
        let mut mark = vec![usize::MAX; other.cols];
        let mut rows = Vec::with_capacity(self.rows);
        for r in 0..self.rows {
            let mut touched = Vec::new();
            for k in self.ptr[r]..self.ptr[r + 1] {
                let (c, v) = (self.col[k] as usize, self.val[k]);
                for q in other.ptr[c]..other.ptr[c + 1] {
                    let cc = other.col[q] as usize;
                    if mark[cc] != r {
                        mark[cc] = r;
                        acc[cc] = 0.0;
                        touched.push(cc);
                    }
                    acc[cc] += v * other.val[q];
                }
            }
            rows.push(touched.into_iter().map(|c| (c as u32, acc[c])).collect());
        }
        Csr::from_rows(other.cols, rows)
    }
}

/// Structured layout of the unknowns of one level.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub nx: usize,
    pub ny: usize,
    pub periodic: bool,
    /// (i, j) of every unknown.
    pub coords: Vec<(u32, u32)>,
}

#[derive(Debug, Clone)]
struct Level {
    a: Csr,
    inv_diag: Vec<f64>,
    /// Prolongation to this level from the next coarser one.
    p: Csr,
    pt: Csr,
}

#[derive(Debug, Clone)]
pub struct Multigrid {
    levels: Vec<Level>,
    /// Pseudo-inverse of the coarsest operator.
    coarse: DMatrix<f64>,
}

const COARSEST: usize = 400;

/// Cell-centred bilinear weights of fine index i: two coarse indices and weights.
fn weights_1d(i: usize, n_coarse: usize, periodic: bool) -> [(Option<usize>, f64); 2] {
    // Fine centre i + 1/2 sits at coarse coordinate (i - 1/2) / 2.
    let xi = (i as f64 - 0.5) / 2.0;
    let i0 = xi.floor() as isize;
    let t = xi - i0 as f64;
    let idx = |k: isize| -> Option<usize> {
        if periodic {
            Some(k.rem_euclid(n_coarse as isize) as usize)
        } else if k >= 0 && (k as usize) < n_coarse {
            Some(k as usize)
        } else {
            None
        }
    };
    [(idx(i0), 1.0 - t), (idx(i0 + 1), t)]
}

fn coarsen(lay: &Layout) -> (Csr, Layout) {
    let (cx, cy) = (lay.nx.div_ceil(2), lay.ny.div_ceil(2));
    let mut index = vec![u32::MAX; cx * cy];
    let mut coords = Vec::new();
    let mut rows = Vec::with_capacity(lay.coords.len());
    for &(i, j) in &lay.coords {
        let wx = weights_1d(i as usize, cx, lay.periodic);
        let wy = weights_1d(j as usize, cy, lay.periodic);
        let mut row = Vec::with_capacity(4);
        for &(ci, a) in &wx {
            for &(cj, b) in &wy {
                let (Some(ci), Some(cj)) = (ci, cj) else {
                    continue;
                };
                let k = cj * cx + ci;
                if index[k] == u32::MAX {
                    index[k] = coords.len() as u32;
                    coords.push((ci as u32, cj as u32));
                }
                row.push((index[k], a * b));
            }
        }
        rows.push(row);
    }
    let n = coords.len();
    (
        Csr::from_rows(n, rows),
        Layout {
            nx: cx,
            ny: cy,
            periodic: lay.periodic,
            coords,
        },
    )
}

fn inv_diag(a: &Csr) -> Vec<f64> {
    a.diag()
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 0.0 })
        .collect()
}

impl Multigrid {
    pub fn new(a: Csr, layout: Layout) -> Self {
        let mut levels = Vec::new();
        let mut a = a;
        let mut lay = layout;
        while a.rows > COARSEST && lay.nx > 2 && lay.ny > 2 {
            let (p, coarse_lay) = coarsen(&lay);
            let pt = p.transpose();
            let ac = pt.mul(&a.mul(&p));
            let inv = inv_diag(&a);
            levels.push(Level {
                a,
                inv_diag: inv,
                p,
                pt,
            });
            a = ac;
            lay = coarse_lay;
        }
        let coarse = pseudo_inverse(&a);
        levels.push(Level {
            inv_diag: inv_diag(&a),
            a,
            p: Csr::from_rows(0, vec![]),
            pt: Csr::from_rows(0, vec![]),
        });
        Multigrid { levels, coarse }
    }

    pub fn len(&self) -> usize {
        self.levels[0].a.rows
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    /// z = V(r), an SPD approximation of A^+ r.
    pub fn vcycle(&self, r: &[f64], z: &mut [f64]) {
        self.cycle(0, r, z);
    }

    fn cycle(&self, l: usize, r: &[f64], z: &mut [f64]) {
        let lev = &self.levels[l];
        if l + 1 == self.levels.len() {
            let rv = nalgebra::DVector::from_column_slice(r);
            let zv = &self.coarse * rv;
            z.copy_from_slice(zv.as_slice());
            return;
        }
        z.iter_mut().for_each(|v| *v = 0.0);
        gauss_seidel(&lev.a, &lev.inv_diag, r, z, false);
        let mut res = vec![0.0; r.len()];
        lev.a.spmv(z, &mut res);
        res.iter_mut().zip(r).for_each(|(q, b)| *q = b - *q);
        let nc = lev.p.cols;
        let mut rc = vec![0.0; nc];
        lev.pt.spmv(&res, &mut rc);
        let mut zc = vec![0.0; nc];
        self.cycle(l + 1, &rc, &mut zc);
        let mut corr = vec![0.0; r.len()];
        lev.p.spmv(&zc, &mut corr);
        z.iter_mut().zip(&corr).for_each(|(a, c)| *a += c);
        gauss_seidel(&lev.a, &lev.inv_diag, r, z, true);
    }
}

fn gauss_seidel(a: &Csr, inv: &[f64], b: &[f64], x: &mut [f64], backward: bool) {
    let n = a.rows;
    let mut step = |r: usize| {
        if inv[r] == 0.0 {
            return;
        }
        let mut acc = b[r];
        for k in a.ptr[r]..a.ptr[r + 1] {
            let c = a.col[k] as usize;
            if c != r {
                acc -= a.val[k] * x[c];
            }
        }
        x[r] = acc * inv[r];
    };
    if backward {
        (0..n).rev().for_each(&mut step);
    } else {
        (0..n).for_each(&mut step);
    }
}

/// Symmetric pseudo-inverse, dropping eigenvalues below 1e-12 of the largest.
fn pseudo_inverse(a: &Csr) -> DMatrix<f64> {
    let n = a.rows;
    let mut m = DMatrix::zeros(n, n);
    for r in 0..n {
        for k in a.ptr[r]..a.ptr[r + 1] {
            m[(r, a.col[k] as usize)] += 0.5 * a.val[k];
            m[(a.col[k] as usize, r)] += 0.5 * a.val[k];
        }
    }
    if n == 0 {
        return m;
    }
    let eig = SymmetricEigen::new(m);
    let top = eig.eigenvalues.iter().fold(0.0f64, |x, v| x.max(v.abs()));
    let inv = eig
        .eigenvalues
        .map(|v| if v > 1e-12 * top { 1.0 / v } else { 0.0 });
    &eig.eigenvectors * DMatrix::from_diagonal(&inv) * eig.eigenvectors.transpose()
}

/// -lap on the open faces of one velocity component, in units of 1/h^2
/// times `scale`, with the face indices it acts on.
pub(crate) fn velocity_operator(g: &FluidGrid, axis: Axis, scale: f64) -> (Csr, Layout, Vec<u32>) {
    let st = g.vel(axis);
    let (nfi, nfj) = match axis {
        Axis::X => (g.nfx(), g.ny),
        Axis::Y => (g.nx, g.nfy()),
    };
    let total = nfi * nfj;
    let mut index = vec![u32::MAX; total];
    for (k, &f) in st.open.iter().enumerate() {
        index[f as usize] = k as u32;
    }
    let s = scale / (g.h * g.h);
    let rows = st
        .open
        .iter()
        .enumerate()
        .map(|(k, _)| {
            let mut row = vec![(k as u32, st.diag[k] * s)];
            row.extend(
                st.nbr[k]
                    .iter()
                    .filter(|&&n| n != NONE)
                    .map(|&n| (index[n as usize], -s)),
            );
            row
        })
        .collect();
    let coords = st
        .open
        .iter()
        .map(|&f| ((f as usize % nfi) as u32, (f as usize / nfi) as u32))
        .collect();
    let lay = Layout {
        nx: nfi,
        ny: nfj,
        periodic: g.topology == Topology::Periodic,
        coords,
    };
    (Csr::from_rows(st.open.len(), rows), lay, st.open.clone())
}

/// -div(w grad .) on the fluid cells (see `neg_weighted_lap_into`), times `scale`.
pub(crate) fn scalar_operator(
    g: &FluidGrid,
    wx: &[f64],
    wy: &[f64],
    dirichlet: bool,
    scale: f64,
) -> (Csr, Layout) {
    let mut index = vec![u32::MAX; g.cells()];
    for (k, &c) in g.fluid_cells().iter().enumerate() {
        index[c as usize] = k as u32;
    }
    let s = scale / (g.h * g.h);
    let outer = dirichlet && g.topology == Topology::Walled;
    let rows = g
        .fluid_cells()
        .iter()
        .enumerate()
        .map(|(k, &c)| {
            let (nb, f) = (g.cell_nbr()[c as usize], g.cell_face()[c as usize]);
            let mut row = Vec::with_capacity(5);
            let mut d = 0.0;
            for q in 0..4 {
                let w = if q < 2 {
                    wx[f[q] as usize]
                } else {
                    wy[f[q] as usize]
                };
                if nb[q] != NONE {
                    d += w;
                    row.push((index[nb[q] as usize], -w * s));
                } else if outer {
                    let axis = if q < 2 { Axis::X } else { Axis::Y };
                    if g.kind(axis, f[q] as usize) == FaceKind::Boundary {
                        d += 2.0 * w;
                    }
                }
            }
            row.push((k as u32, d * s));
            row
        })
        .collect();
    let coords = g
        .fluid_cells()
        .iter()
        .map(|&c| ((c as usize % g.nx) as u32, (c as usize / g.nx) as u32))
        .collect();
    let lay = Layout {
        nx: g.nx,
        ny: g.ny,
        periodic: g.topology == Topology::Periodic,
        coords,
    };
    (Csr::from_rows(g.fluid_cells().len(), rows), lay)
}

/// V-cycle acting on a scattered vector through an index list.
#[derive(Debug, Clone)]
pub(crate) struct Scattered {
    pub mg: Multigrid,
    pub dofs: Vec<u32>,
}

impl Scattered {
    pub fn new(a: Csr, lay: Layout, dofs: Vec<u32>) -> Self {
        Scattered {
            mg: Multigrid::new(a, lay),
            dofs,
        }
    }

    /// z[dofs] = V(r[dofs]); other entries of z are left alone.
    pub fn apply(&self, r: &[f64], z: &mut [f64]) {
        let rc: Vec<f64> = self.dofs.iter().map(|&d| r[d as usize]).collect();
        let mut zc = vec![0.0; rc.len()];
        self.mg.vcycle(&rc, &mut zc);
        for (&d, v) in self.dofs.iter().zip(zc) {
            z[d as usize] = v;
        }
    }
}
