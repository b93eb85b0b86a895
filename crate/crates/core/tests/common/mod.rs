#![allow(dead_code)]

use ekhom_core::grid::{FluidGrid, Topology, NONE};
use ekhom_core::model::{ElectrolyteSpec, SurfaceCharge};
use ekhom_core::pb::{solve_equilibrium, EquilibriumState};

/// Periodic unit cell with one centred disk (grain 0).
pub fn disk_grid(n: usize, r: f64) -> FluidGrid {
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

/// Unit cell with an off-centre, non-symmetric pair of rectangles.
pub fn skew_grid(n: usize) -> FluidGrid {
    let h = 1.0 / n as f64;
    let mut fluid = vec![true; n * n];
    let mut grain = vec![NONE; n * n];
    for j in 0..n {
        for i in 0..n {
            let (x, y) = ((i as f64 + 0.5) * h, (j as f64 + 0.5) * h);
            let a = (0.15..0.45).contains(&x) && (0.2..0.4).contains(&y);
            let b = (0.55..0.7).contains(&x) && (0.5..0.9).contains(&y);
            if a || b {
                fluid[j * n + i] = false;
                grain[j * n + i] = if a { 0 } else { 1 };
            }
        }
    }
    FluidGrid::from_mask(n, n, h, Topology::Periodic, fluid, grain)
}

pub fn binary() -> ElectrolyteSpec {
    ElectrolyteSpec::binary(0.5, 1.0, 1.0, 1.0)
}

pub fn equilibrium(g: &FluidGrid, spec: &ElectrolyteSpec, sigma: f64) -> EquilibriumState {
    solve_equilibrium(g, spec, &SurfaceCharge::constant(sigma)).unwrap()
}

pub fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}
