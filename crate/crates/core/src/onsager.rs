//! Effective tensor blocks from the cell solutions, the assembled Onsager
//! matrix, its structural checks, and ensemble statistics.
//!
//! Entries are averages over the whole cell, `(1 / |Y|) sum_faces (.) h^2`,
//! taken on the faces where the fields live. The species fluxes use the same
//! harmonic face concentrations as the cell operator.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cell::{unit_field, CellSolution, CoupledSystem, Family};
use crate::grid::sum::Accumulator;
use crate::grid::{FluidGrid, MacVectorField};
use crate::model::ElectrolyteSpec;
use crate::pb::EquilibriumState;

pub type Block = [[f64; 2]; 2];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OnsagerError {
    #[error("missing cell solution: family {family}, direction {k}")]
    MissingCellSolution { family: usize, k: usize },
    #[error("tensors from different configurations: {0}")]
    ConfigMismatch(String),
    #[error("ensemble needs at least two tensors, got {0}")]
    TooFew(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnsagerTensor {
    pub z: Vec<i32>,
    #[serde(rename = "K")]
    pub k: Block,
    #[serde(rename = "J")]
    pub j: Vec<Block>,
    #[serde(rename = "L")]
    pub l: Vec<Block>,
    /// `d[j][i]` is D_ji.
    #[serde(rename = "D")]
    pub d: Vec<Vec<Block>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    pub porosity: f64,
    pub seed: Option<u64>,
    pub grid_n: usize,
}

fn face_mean(g: &FluidGrid, v: &MacVectorField, l: usize) -> f64 {
    let mut acc = Accumulator::new();
    let comp = if l == 0 { &v.x } else { &v.y };
    comp.iter().for_each(|&a| acc.add(a));
    acc.value() * g.h * g.h / (g.lx() * g.ly())
}

/// Builds B from the blocks: row 0 = [K, J_i / z_i], row j = [L_j, D_ji / z_i].
pub fn assemble_b(
    z: &[i32],
    k: &Block,
    j: &[Block],
    l: &[Block],
    d: &[Vec<Block>],
) -> Vec<Vec<f64>> {
    let n = z.len();
    let size = 2 * (n + 1);
    let mut b = vec![vec![0.0; size]; size];
    let mut put = |bi: usize, bj: usize, blk: &Block, s: f64| {
        for r in 0..2 {
            for c in 0..2 {
                b[2 * bi + r][2 * bj + c] = s * blk[r][c];
            }
        }
    };
    put(0, 0, k, 1.0);
    for i in 0..n {
        put(0, i + 1, &j[i], 1.0 / z[i] as f64);
        put(i + 1, 0, &l[i], 1.0);
        for q in 0..n {
            put(i + 1, q + 1, &d[i][q], 1.0 / z[q] as f64);
        }
    }
    b
}

fn find<'a>(
    cells: &'a [CellSolution],
    family: Family,
    k: usize,
) -> Result<&'a CellSolution, OnsagerError> {
    cells
        .iter()
        .find(|c| c.family == family && c.k == k)
        .ok_or(OnsagerError::MissingCellSolution {
            family: family.index(),
            k,
        })
}

pub fn assemble_tensor(
    cells: &[CellSolution],
    eq: &EquilibriumState,
    grid: &FluidGrid,
    spec: &ElectrolyteSpec,
) -> Result<OnsagerTensor, OnsagerError> {
    let n = spec.species();
    let sys = CoupledSystem::new(grid, spec, &eq.n0, 1.0, false);
    let mut k = [[0.0; 2]; 2];
    let mut j = vec![[[0.0; 2]; 2]; n];
    let mut l = vec![[[0.0; 2]; 2]; n];
    let mut d = vec![vec![[[0.0; 2]; 2]; n]; n];
    for kk in 0..2 {
        let c0 = find(cells, Family::Pressure, kk)?;
        let x0 = sys.pack(&c0.v, &c0.pi, &c0.theta);
        for ll in 0..2 {
            k[ll][kk] = face_mean(grid, &c0.v, ll);
        }
        for s in 0..n {
            let flux = sys.species_flux(&x0, s, None, spec.pe[s]);
            for ll in 0..2 {
                l[s][ll][kk] = face_mean(grid, &flux, ll);
            }
        }
        let e = unit_field(grid, kk);
        for i in 0..n {
            let ci = find(cells, Family::Species(i), kk)?;
            let xi = sys.pack(&ci.v, &ci.pi, &ci.theta);
            for ll in 0..2 {
                j[i][ll][kk] = face_mean(grid, &ci.v, ll);
            }
            for s in 0..n {
                let drive = (s == i).then_some(&e);
                let flux = sys.species_flux(&xi, s, drive, spec.pe[s]);
                for ll in 0..2 {
                    d[s][i][ll][kk] = face_mean(grid, &flux, ll);
                }
            }
        }
    }
    let b = assemble_b(&spec.z, &k, &j, &l, &d);
    Ok(OnsagerTensor {
        z: spec.z.clone(),
        k,
        j,
        l,
        d,
        b,
        porosity: grid.porosity(),
        seed: None,
        grid_n: grid.nx,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OnsagerCheck {
    pub asym: f64,
    pub lambda_min: f64,
    pub lambda_min_k: f64,
    /// Largest deviation in L_i = (J_i / z_i)^T and D_ij / z_j = (D_ji / z_i)^T,
    /// relative to the Frobenius norm of B.
    pub reciprocity: f64,
    pub pass: bool,
}

fn frobenius(m: &[Vec<f64>]) -> f64 {
    m.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
pub fn symmetric_eigenvalues(m: &[Vec<f64>], tol: f64) -> Vec<f64> {
    let n = m.len();
    let mut a: Vec<Vec<f64>> = m.to_vec();
    let scale = frobenius(&a).max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|p| (0..n).filter(move |&q| q != p).map(move |q| (p, q)))
            .map(|(p, q)| a[p][q] * a[p][q])
            .sum::<f64>()
            .sqrt();
        if off <= tol * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q] == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for r in 0..n {
                    let (arp, arq) = (a[r][p], a[r][q]);
                    a[r][p] = c * arp - s * arq;
                    a[r][q] = s * arp + c * arq;
                }
                for r in 0..n {
                    let (apr, aqr) = (a[p][r], a[q][r]);
                    a[p][r] = c * apr - s * aqr;
                    a[q][r] = s * apr + c * aqr;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    ev.sort_by(f64::total_cmp);
    ev
}

fn sym_part(m: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = m.len();
    (0..n)
        .map(|r| (0..n).map(|c| 0.5 * (m[r][c] + m[c][r])).collect())
        .collect()
}

/// Asymmetry and smallest eigenvalue of the symmetric part of any square matrix.
pub fn check_matrix(b: &[Vec<f64>]) -> (f64, f64) {
    let n = b.len();
    let norm = frobenius(b);
    let diff: Vec<Vec<f64>> = (0..n)
        .map(|r| (0..n).map(|c| b[r][c] - b[c][r]).collect())
        .collect();
    let asym = if norm == 0.0 {
        0.0
    } else {
        frobenius(&diff) / norm
    };
    let lambda = symmetric_eigenvalues(&sym_part(b), 1e-12)
        .first()
        .copied()
        .unwrap_or(0.0);
    (asym, lambda)
}

pub fn check_onsager(t: &OnsagerTensor) -> OnsagerCheck {
    let (asym, lambda_min) = check_matrix(&t.b);
    let kmat: Vec<Vec<f64>> = t.k.iter().map(|r| r.to_vec()).collect();
    let lambda_min_k = symmetric_eigenvalues(&sym_part(&kmat), 1e-12)[0];
    let scale = frobenius(&t.b).max(f64::MIN_POSITIVE);
    let mut worst = 0.0f64;
    let n = t.z.len();
    for i in 0..n {
        let zi = t.z[i] as f64;
        for r in 0..2 {
            for c in 0..2 {
                worst = worst.max((t.l[i][r][c] - t.j[i][c][r] / zi).abs());
                for q in 0..n {
                    let zq = t.z[q] as f64;
                    // D_iq / z_q against (D_qi / z_i)^T
                    worst = worst.max((t.d[i][q][r][c] / zq - t.d[q][i][c][r] / zi).abs());
                }
            }
        }
    }
    let reciprocity = worst / scale;
    OnsagerCheck {
        asym,
        lambda_min,
        lambda_min_k,
        reciprocity,
        pass: asym <= 1e-6 && lambda_min > 0.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryStat {
    pub name: String,
    pub mean: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleEstimate {
    pub m: usize,
    pub entries: Vec<EntryStat>,
    pub mean_porosity: f64,
    pub tensors: Vec<OnsagerTensor>,
}

impl OnsagerTensor {
    /// Splits a full 2(N+1) square matrix into blocks; the inverse of `assemble_b`.
    pub fn from_matrix(z: &[i32], b: Vec<Vec<f64>>) -> Self {
        let n = z.len();
        let blk = |bi: usize, bj: usize, s: f64| -> Block {
            [
                [s * b[2 * bi][2 * bj], s * b[2 * bi][2 * bj + 1]],
                [s * b[2 * bi + 1][2 * bj], s * b[2 * bi + 1][2 * bj + 1]],
            ]
        };
        let k = blk(0, 0, 1.0);
        let j = (0..n).map(|i| blk(0, i + 1, z[i] as f64)).collect();
        let l = (0..n).map(|i| blk(i + 1, 0, 1.0)).collect();
        let d = (0..n)
            .map(|q| (0..n).map(|i| blk(q + 1, i + 1, z[i] as f64)).collect())
            .collect();
        OnsagerTensor {
            z: z.to_vec(),
            k,
            j,
            l,
            d,
            b,
            porosity: 1.0,
            seed: None,
            grid_n: 0,
        }
    }

    /// Every block entry with a stable name, e.g. `K[0][1]`, `J1[1][0]`, `D12[0][0]`.
    pub fn entries(&self) -> Vec<(String, f64)> {
        let mut out = Vec::new();
        let mut push = |name: String, blk: &Block| {
            for r in 0..2 {
                for c in 0..2 {
                    out.push((format!("{name}[{r}][{c}]"), blk[r][c]));
                }
            }
        };
        push("K".into(), &self.k);
        for (i, b) in self.j.iter().enumerate() {
            push(format!("J{}", i + 1), b);
        }
        for (i, b) in self.l.iter().enumerate() {
            push(format!("L{}", i + 1), b);
        }
        for (a, row) in self.d.iter().enumerate() {
            for (c, b) in row.iter().enumerate() {
                push(format!("D{}{}", a + 1, c + 1), b);
            }
        }
        out
    }
}

/// Mean and standard error (sample deviation / sqrt(M)) of a scalar statistic.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let m = values.len() as f64;
    if values.windows(2).all(|w| w[0] == w[1]) {
        return (values.first().copied().unwrap_or(0.0), 0.0);
    }
    let mut acc = Accumulator::new();
    values.iter().for_each(|&v| acc.add(v));
    let mean = acc.value() / m;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let mut var = Accumulator::new();
    values
        .iter()
        .for_each(|&v| var.add((v - mean) * (v - mean)));
    (mean, (var.value() / (m - 1.0)).sqrt() / m.sqrt())
}

pub fn ensemble_average(tensors: &[OnsagerTensor]) -> Result<EnsembleEstimate, OnsagerError> {
    if tensors.len() < 2 {
        return Err(OnsagerError::TooFew(tensors.len()));
    }
    let first = &tensors[0];
    for t in tensors {
        if t.z != first.z || t.grid_n != first.grid_n {
            return Err(OnsagerError::ConfigMismatch(format!(
                "z {:?} / n {} against z {:?} / n {}",
                t.z, t.grid_n, first.z, first.grid_n
            )));
        }
    }
    // Sorting each entry's samples makes the sums independent of input order.
    let names: Vec<String> = first.entries().into_iter().map(|(n, _)| n).collect();
    let all: Vec<Vec<f64>> = tensors
        .iter()
        .map(|t| t.entries().into_iter().map(|(_, v)| v).collect())
        .collect();
    let entries = names
        .into_iter()
        .enumerate()
        .map(|(q, name)| {
            let mut vals: Vec<f64> = all.iter().map(|row| row[q]).collect();
            vals.sort_by(f64::total_cmp);
            let (mean, stderr) = mean_stderr(&vals);
            EntryStat { name, mean, stderr }
        })
        .collect();
    let mut por: Vec<f64> = tensors.iter().map(|t| t.porosity).collect();
    por.sort_by(f64::total_cmp);
    let (mean_porosity, _) = mean_stderr(&por);
    Ok(EnsembleEstimate {
        m: tensors.len(),
        entries,
        mean_porosity,
        tensors: tensors.to_vec(),
    })
}

impl EnsembleEstimate {
    pub fn entry(&self, name: &str) -> Option<&EntryStat> {
        self.entries.iter().find(|e| e.name == name)
    }

    /// Mean and standard error of any scalar function of the tensors.
    pub fn statistic(&self, f: impl Fn(&OnsagerTensor) -> f64) -> (f64, f64) {
        let mut vals: Vec<f64> = self.tensors.iter().map(f).collect();
        vals.sort_by(f64::total_cmp);
        mean_stderr(&vals)
    }

    /// One row per entry: `entry,mean,stderr`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("entry,mean,stderr\n");
        for e in &self.entries {
            s.push_str(&format!("{},{:e},{:e}\n", e.name, e.mean, e.stderr));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_checks() {
        let id: Vec<Vec<f64>> = (0..6)
            .map(|r| (0..6).map(|c| if r == c { 1.0 } else { 0.0 }).collect())
            .collect();
        let (asym, lam) = check_matrix(&id);
        assert_eq!(asym, 0.0);
        assert!((lam - 1.0).abs() < 1e-14);
    }

    #[test]
    fn jacobi_matches_known_spectrum() {
        // [[2,1],[1,2]] has eigenvalues 1 and 3
        let ev = symmetric_eigenvalues(&[vec![2.0, 1.0], vec![1.0, 2.0]], 1e-14);
        assert!((ev[0] - 1.0).abs() < 1e-13 && (ev[1] - 3.0).abs() < 1e-13);
        let m = vec![
            vec![4.0, 1.0, -2.0],
            vec![1.0, 2.0, 0.0],
            vec![-2.0, 0.0, 3.0],
        ];
        let ev = symmetric_eigenvalues(&m, 1e-14);
        let na = nalgebra::DMatrix::from_fn(3, 3, |r, c| m[r][c]).symmetric_eigenvalues();
        let mut nv: Vec<f64> = na.iter().copied().collect();
        nv.sort_by(f64::total_cmp);
        for (a, b) in ev.iter().zip(&nv) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn mean_stderr_of_constant_is_zero() {
        let (m, s) = mean_stderr(&[2.5; 7]);
        assert_eq!(m, 2.5);
        assert_eq!(s, 0.0);
    }
}
