//! wasm-bindgen entry points for the static demo in `www/`.
//! Every function returns a JSON string so the page needs no glue beyond
//! `JSON.parse`.

use ekhom_core::cell::{solve_all, CellOptions};
use ekhom_core::geometry::{
    generate_bernoulli, generate_perturbed_lattice, generate_poisson_voronoi, voxelize, DisperseParams,
    Microstructure,
};
use ekhom_core::grid::FluidGrid;
use ekhom_core::model::{ElectrolyteSpec, SurfaceCharge};
use ekhom_core::onsager::assemble_tensor;
use ekhom_core::pb::solve_equilibrium;
use serde_json::json;
use wasm_bindgen::prelude::*;

const MIN_N: usize = 48;
const MAX_N: usize = 96;

/// The separation floor follows the grid: four cells across every gap.
fn micro(generator: &str, seed: u64, n: usize) -> Result<Microstructure, String> {
    if !(MIN_N..=MAX_N).contains(&n) {
        return Err(format!("grid size must lie in {MIN_N}..={MAX_N}"));
    }
    let delta = 8.0 / n as f64;
    let c = DisperseParams {
        delta_min: delta,
        ..Default::default()
    };
    match generator {
        "bernoulli" => generate_bernoulli(2, 0.5, delta, seed, &c),
        "perturbed_lattice" => generate_perturbed_lattice(2, 0.2, (0.2, 0.35), seed, &c),
        "poisson_voronoi" => generate_poisson_voronoi(2.0, 1.0, 0.3, seed, &c),
        other => return Err(format!("unknown generator {other:?}")),
    }
    .map_err(|e| e.to_string())
}

fn grid(m: &Microstructure, n: usize) -> Result<FluidGrid, String> {
    voxelize(m, n).map_err(|e| e.to_string())
}

fn mask(g: &FluidGrid) -> Vec<u8> {
    (0..g.nx * g.ny).map(|c| g.is_fluid(c) as u8).collect()
}

fn spec(n_sigma: f64) -> ElectrolyteSpec {
    ElectrolyteSpec::binary(0.5, 1.0, 1.0, n_sigma)
}

/// Grains and the voxel fluid mask (row-major, bottom row first).
pub fn microstructure_json(generator: &str, seed: u64, n: usize) -> Result<String, String> {
    let m = micro(generator, seed, n)?;
    let g = grid(&m, n)?;
    Ok(json!({
        "L": m.l,
        "grains": m.grains,
        "n": n,
        "porosity": g.porosity(),
        "fluid": mask(&g),
    })
    .to_string())
}

/// Equilibrium potential on the fluid cells, NaN inside grains.
pub fn equilibrium_json(generator: &str, seed: u64, n: usize, sigma: f64, n_sigma: f64) -> Result<String, String> {
    let g = grid(&micro(generator, seed, n)?, n)?;
    let eq = solve_equilibrium(&g, &spec(n_sigma), &SurfaceCharge::constant(sigma)).map_err(|e| e.to_string())?;
    let psi: Vec<Option<f64>> = (0..g.nx * g.ny)
        .map(|c| g.is_fluid(c).then(|| eq.psi.data[c]))
        .collect();
    Ok(json!({
        "n": n,
        "psi": psi,
        "psi_min": eq.bounds.psi_min,
        "psi_max": eq.bounds.psi_max,
    })
    .to_string())
}

/// Full effective tensor of one realization.
pub fn tensor_json(generator: &str, seed: u64, n: usize, sigma: f64, n_sigma: f64) -> Result<String, String> {
    let g = grid(&micro(generator, seed, n)?, n)?;
    let spec = spec(n_sigma);
    let eq = solve_equilibrium(&g, &spec, &SurfaceCharge::constant(sigma)).map_err(|e| e.to_string())?;
    let cells = solve_all(&eq, &g, &spec, CellOptions::default()).map_err(|e| e.to_string())?;
    let t = assemble_tensor(&cells, &eq, &g, &spec).map_err(|e| e.to_string())?;
    serde_json::to_string(&t).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn microstructure(generator: &str, seed: u32, n: u32) -> Result<String, JsValue> {
    microstructure_json(generator, seed as u64, n as usize).map_err(JsValue::from)
}

#[wasm_bindgen]
pub fn equilibrium(generator: &str, seed: u32, n: u32, sigma: f64, n_sigma: f64) -> Result<String, JsValue> {
    equilibrium_json(generator, seed as u64, n as usize, sigma, n_sigma).map_err(JsValue::from)
}

#[wasm_bindgen]
pub fn tensor(generator: &str, seed: u32, n: u32, sigma: f64, n_sigma: f64) -> Result<String, JsValue> {
    tensor_json(generator, seed as u64, n as usize, sigma, n_sigma).map_err(JsValue::from)
}
