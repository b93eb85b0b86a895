//! Corrector (cell) problems on the periodic cell.
//!
//! Family 0 (pressure) with direction e^k:
//! `-lap v + grad pi = e^k + sum_j z_j n_j grad theta_j`,
//! `div(n_j((z_j/Pe_j) grad theta_j + v)) = 0`.
//! Species family i: the force is `z_i n_i e^k` and species i carries the
//! extra drive `(z_i/Pe_i) n_i e^k`. Both have `div v = 0` and no-slip on grains.

pub mod coupled;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use coupled::{BlockResiduals, CoupledSystem, EnergyBalance};

use crate::grid::krylov::SolverOptions;
use crate::grid::{FluidGrid, GridError, MacVectorField, ScalarField, SolveReport};
use crate::model::ElectrolyteSpec;
use crate::pb::EquilibriumState;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CellError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("invalid cell problem: {0}")]
    Invalid(String),
}

/// Which right-hand side drives the cell problem. Species are 0-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    Pressure,
    Species(usize),
}

impl Family {
    /// 0 for the pressure family, i for species i (1-based).
    pub fn index(self) -> usize {
        match self {
            Family::Pressure => 0,
            Family::Species(j) => j + 1,
        }
    }

    pub fn all(species: usize) -> Vec<Family> {
        std::iter::once(Family::Pressure)
            .chain((0..species).map(Family::Species))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Coupling {
    #[default]
    BlockGaussSeidel,
    Monolithic,
    Dense,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellOptions {
    pub solver: SolverOptions,
    pub coupling: Coupling,
    /// Multiplies the driving data; 0 gives the homogeneous problem.
    pub drive_scale: f64,
}

impl Default for CellOptions {
    fn default() -> Self {
        CellOptions {
            solver: SolverOptions::default(),
            coupling: Coupling::default(),
            drive_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResiduals {
    pub momentum: f64,
    pub divergence: f64,
    pub species: Vec<f64>,
    pub coupled: f64,
    /// Per grain: summed |flux| of all species through its surface.
    pub leakage: Vec<f64>,
    /// Relative mismatch between dissipation and work.
    pub energy: f64,
}

#[derive(Debug, Clone)]
pub struct CellSolution {
    pub family: Family,
    /// Driving direction, 0 (x) or 1 (y).
    pub k: usize,
    pub v: MacVectorField,
    pub pi: ScalarField,
    pub theta: Vec<ScalarField>,
    pub drive_scale: f64,
    pub residuals: CellResiduals,
    pub report: SolveReport,
}

/// Unit vector e^k sampled on all faces.
pub fn unit_field(grid: &FluidGrid, k: usize) -> MacVectorField {
    let mut e = grid.zero_vector();
    if k == 0 {
        e.x.iter_mut().for_each(|v| *v = 1.0);
    } else {
        e.y.iter_mut().for_each(|v| *v = 1.0);
    }
    e
}

/// Right-hand side of the given family and direction.
pub fn family_rhs(sys: &CoupledSystem, family: Family, k: usize, scale: f64) -> Vec<f64> {
    let g = sys.grid;
    let mut e = unit_field(g, k);
    e.scale(scale);
    match family {
        Family::Pressure => sys.rhs(&e, &vec![None; sys.species()]),
        Family::Species(i) => {
            let nf = &sys.nface[i];
            let mut f = g.zero_vector();
            for (o, (a, n)) in f.x.iter_mut().zip(e.x.iter().zip(&nf.x)) {
                *o = sys.z[i] * a * n;
            }
            for (o, (a, n)) in f.y.iter_mut().zip(e.y.iter().zip(&nf.y)) {
                *o = sys.z[i] * a * n;
            }
            let mut d = vec![None; sys.species()];
            d[i] = Some(e);
            sys.rhs(&f, &d)
        }
    }
}

fn check(
    grid: &FluidGrid,
    eq: &EquilibriumState,
    spec: &ElectrolyteSpec,
    family: Family,
    k: usize,
) -> Result<(), CellError> {
    grid.check_scalar(&eq.psi)?;
    if eq.n0.len() != spec.species() {
        return Err(CellError::Invalid(
            "equilibrium state has the wrong species count".into(),
        ));
    }
    if k > 1 {
        return Err(CellError::Invalid(format!("direction {k} not in {{0, 1}}")));
    }
    if let Family::Species(i) = family {
        if i >= spec.species() {
            return Err(CellError::Invalid(format!("species {i} out of range")));
        }
    }
    Ok(())
}

pub fn solve_family(
    eq: &EquilibriumState,
    grid: &FluidGrid,
    spec: &ElectrolyteSpec,
    family: Family,
    k: usize,
    opts: CellOptions,
) -> Result<CellSolution, CellError> {
    check(grid, eq, spec, family, k)?;
    let sys = CoupledSystem::new(grid, spec, &eq.n0, 1.0, false);
    let b = family_rhs(&sys, family, k, opts.drive_scale);
    let mut x = vec![0.0; sys.len()];
    let report = match opts.coupling {
        Coupling::BlockGaussSeidel => sys.solve_block_gs(&b, &mut x, opts.solver)?,
        Coupling::Monolithic => sys.solve_minres(&b, &mut x, opts.solver)?,
        Coupling::Dense => {
            x = sys.solve_dense(&b)?;
            SolveReport::trivial("dense-lu")
        }
    };
    let residuals = residuals_of(&sys, spec, family, k, opts.drive_scale, &x);
    let (v, pi, theta) = sys.unpack(&x);
    Ok(CellSolution {
        family,
        k,
        v,
        pi,
        theta,
        drive_scale: opts.drive_scale,
        residuals,
        report,
    })
}

pub fn solve_pressure_family(
    eq: &EquilibriumState,
    grid: &FluidGrid,
    spec: &ElectrolyteSpec,
    k: usize,
) -> Result<CellSolution, CellError> {
    solve_family(eq, grid, spec, Family::Pressure, k, CellOptions::default())
}

/// `i` is the 0-based species index.
pub fn solve_species_family(
    eq: &EquilibriumState,
    grid: &FluidGrid,
    spec: &ElectrolyteSpec,
    i: usize,
    k: usize,
) -> Result<CellSolution, CellError> {
    solve_family(
        eq,
        grid,
        spec,
        Family::Species(i),
        k,
        CellOptions::default(),
    )
}

/// All 2 (N + 1) cell problems, ordered by family then direction.
pub fn solve_all(
    eq: &EquilibriumState,
    grid: &FluidGrid,
    spec: &ElectrolyteSpec,
    opts: CellOptions,
) -> Result<Vec<CellSolution>, CellError> {
    let mut out = Vec::new();
    for fam in Family::all(spec.species()) {
        for k in 0..2 {
            out.push(solve_family(eq, grid, spec, fam, k, opts)?);
        }
    }
    Ok(out)
}

fn residuals_of(
    sys: &CoupledSystem,
    spec: &ElectrolyteSpec,
    family: Family,
    k: usize,
    scale: f64,
    x: &[f64],
) -> CellResiduals {
    let b = family_rhs(sys, family, k, scale);
    let BlockResiduals {
        momentum,
        divergence,
        species,
        coupled,
    } = sys.residuals(x, &b);
    let mut e = unit_field(sys.grid, k);
    e.scale(scale);
    let fluxes: Vec<MacVectorField> = (0..sys.species())
        .map(|j| {
            let d = (family == Family::Species(j)).then_some(&e);
            sys.species_flux(x, j, d, spec.pe[j])
        })
        .collect();
    CellResiduals {
        momentum,
        divergence,
        species,
        coupled,
        leakage: sys.wall_leakage(&fluxes),
        energy: sys.energy(x, &b).residual(),
    }
}

/// Recomputes every residual of a (possibly modified) solution.
pub fn cell_residuals(
    sol: &CellSolution,
    eq: &EquilibriumState,
    grid: &FluidGrid,
    spec: &ElectrolyteSpec,
) -> CellResiduals {
    let sys = CoupledSystem::new(grid, spec, &eq.n0, 1.0, false);
    let x = sys.pack(&sol.v, &sol.pi, &sol.theta);
    residuals_of(&sys, spec, sol.family, sol.k, sol.drive_scale, &x)
}
