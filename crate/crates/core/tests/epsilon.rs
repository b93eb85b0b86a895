mod common;

use common::{binary, equilibrium};
use ekhom_core::cell::{solve_all, CellOptions, CellSolution, Family};
use ekhom_core::epsilon::*;
use ekhom_core::geometry::{voxelize, DisperseParams, Generator, Grain, Microstructure};
use ekhom_core::grid::krylov::SolverOptions;
use ekhom_core::grid::{FluidGrid, MacVectorField};
use ekhom_core::macrosolve::{solve_macro, MacroProblem};
use ekhom_core::model::{Forcing, VectorField};
use ekhom_core::onsager::assemble_tensor;
use ekhom_core::pb::EquilibriumState;

fn micro(l: f64, grains: &[([f64; 2], f64)]) -> Microstructure {
    Microstructure {
        l,
        grains: grains.iter().map(|&(center, radius)| Grain { center, radius }).collect(),
        generator: Generator::Custom,
        seed: 7,
        constraints: DisperseParams { delta_min: 0.125, ..Default::default() },
    }
}

struct Rve {
    micro: Microstructure,
    grid: FluidGrid,
    eq: EquilibriumState,
}

fn rve(n: usize, grains: &[([f64; 2], f64)]) -> Rve {
    let micro = micro(1.0, grains);
    let grid = voxelize(&micro, n).unwrap();
    let eq = equilibrium(&grid, &binary(), 0.2);
    Rve { micro, grid, eq }
}

fn centred() -> Rve {
    rve(32, &[([0.5, 0.5], 0.25)])
}

#[test]
fn eps_one_keeps_no_grain() {
    let r = centred();
    let dom = build_perforated_domain(&r.micro, &r.grid, &r.eq, &binary(), 1.0, 64).unwrap();
    assert!(dom.grains.is_empty());
    assert_eq!(dom.dropped, 1);
    assert_eq!(dom.grid.fluid_cells().len(), 64 * 64);
}

#[test]
fn tiling_and_resolution_are_checked() {
    let r = centred();
    let spec = binary();
    assert!(matches!(
        build_perforated_domain(&r.micro, &r.grid, &r.eq, &spec, 0.3, 128),
        Err(EpsilonError::TilingMismatch(_))
    ));
    // 2 eps r m = 2 * 0.25 * 0.25 * 64 = 8 cells across the smallest grain
    assert!(matches!(
        build_perforated_domain(&r.micro, &r.grid, &r.eq, &spec, 0.25, 64),
        Err(EpsilonError::ResolutionTooCoarse { .. })
    ));
}

/// Copies of every grain over a wide range of tiles, kept when the scaled
/// disk lies at distance >= eps from the boundary of the unit square.
fn enumerate(m: &Microstructure, eps: f64) -> usize {
    let tiles = (1.0 / (eps * m.l)).round() as i64;
    let mut count = 0;
    for a in -3..tiles + 3 {
        for b in -3..tiles + 3 {
            for g in &m.grains {
                let x = eps * (g.center[0] + a as f64 * m.l);
                let y = eps * (g.center[1] + b as f64 * m.l);
                let r = eps * g.radius;
                if x - r >= eps && x + r <= 1.0 - eps && y - r >= eps && y + r <= 1.0 - eps {
                    count += 1;
                }
            }
        }
    }
    count
}

#[test]
fn grain_count_matches_enumeration() {
    // Grains straddling the RVE edge exercise the periodic images.
    let r = rve(32, &[([0.05, 0.5], 0.2), ([0.6, 0.95], 0.15), ([0.6, 0.4], 0.12)]);
    let spec = binary();
    let mut counts = Vec::new();
    for (eps, m) in [(0.25, 288), (0.125, 576)] {
        let dom = build_perforated_domain(&r.micro, &r.grid, &r.eq, &spec, eps, m).unwrap();
        assert_eq!(dom.grains.len(), enumerate(&r.micro, eps), "eps {eps}");
        counts.push(dom.grains.len());
    }
    assert!(counts[1] > 2 * counts[0], "{counts:?}");
}

#[test]
fn sampled_concentrations_are_eps_periodic() {
    let r = centred();
    let spec = binary();
    let m = 128;
    let dom = build_perforated_domain(&r.micro, &r.grid, &r.eq, &spec, 0.25, m).unwrap();
    let period = m / 4;
    let g = &dom.grid;
    let mut checked = 0;
    for j in period..3 * period {
        for i in period..2 * period {
            let (a, b) = (j * m + i, j * m + i + period);
            if g.is_fluid(a) && g.is_fluid(b) {
                for s in 0..2 {
                    assert_eq!(dom.n[s].data[a], dom.n[s].data[b]);
                }
                checked += 1;
            }
        }
    }
    assert!(checked > period * period);
    // Inside the clearance band there are no grains: bulk values where the RVE is solid.
    let c = (period / 2) * m + period / 2;
    assert!(g.is_fluid(c));
    assert_eq!(dom.n[0].data[c], spec.n_c[0]);
}

fn small_domain() -> (Rve, PerforatedDomain) {
    let r = centred();
    let dom = build_perforated_domain(&r.micro, &r.grid, &r.eq, &binary(), 0.25, 128).unwrap();
    assert_eq!(dom.grains.len(), 4);
    (r, dom)
}

#[test]
fn zero_forcing_gives_zero_solution_and_metrics() {
    let (r, dom) = small_domain();
    let spec = binary();
    let sol = solve_linearized(&dom, &spec, &Forcing::zero(), SolverOptions::default()).unwrap();
    assert_eq!(sol.u.max_abs(), 0.0);
    assert!(sol.phi.iter().all(|p| p.max_abs() == 0.0));
    let zero = |_: f64, _: f64| vec![[0.0; 2]; 3];
    let cells = solve_all(&r.eq, &r.grid, &spec, CellOptions::default()).unwrap();
    let rec = reconstruct_with(zero, 2, &cells, &r.grid, &Forcing::zero(), &dom).unwrap();
    assert_eq!(rec.u.max_abs(), 0.0);
    let met = convergence_metrics(&sol, &rec, &dom, &Forcing::zero(), 0.0);
    assert_eq!(met.velocity_error, 0.0);
    assert!(met.species_errors.iter().all(|&e| e == 0.0));
    assert_eq!(met.energy_residual, 0.0);
    assert_eq!(met.poincare_ratio, 0.0);
}

#[test]
fn energy_identity_holds_on_converged_solve() {
    let (_, dom) = small_domain();
    let forcing = Forcing {
        f_star: VectorField::Shear { amplitude: 1.0 },
        e: VectorField::Constant([0.5, 0.25]),
        psi_ext: None,
    };
    let sol = solve_linearized(&dom, &binary(), &forcing, SolverOptions::default()).unwrap();
    assert!(sol.energy.residual() <= 1e-8, "{:?}", sol.energy);
    assert!(sol.u_norm > 0.0 && sol.grad_u_norm > 0.0);
    // no-slip on the outer wall and at grain faces
    let g = &dom.grid;
    for f in 0..g.x_faces() {
        if g.x_kind(f) != ekhom_core::grid::FaceKind::Open {
            assert_eq!(sol.u.x[f], 0.0);
        }
    }
}

fn combination(cells: &[CellSolution], coef: &[f64]) -> MacVectorField {
    let mut out = cells[0].v.clone();
    out.scale(0.0);
    let fams = Family::all(2);
    for (a, fam) in fams.iter().flat_map(|f| [(*f, 0), (*f, 1)]).enumerate() {
        let c = cells.iter().find(|c| c.family == fam.0 && c.k == fam.1).unwrap();
        out.axpy(coef[a], &c.v);
    }
    out
}

#[test]
fn constant_gradients_on_unit_eps_reproduce_cell_combination() {
    let r = centred();
    let spec = binary();
    let n = r.grid.nx;
    let dom = build_perforated_domain(&r.micro, &r.grid, &r.eq, &spec, 1.0, n).unwrap();
    let cells = solve_all(&r.eq, &r.grid, &spec, CellOptions::default()).unwrap();
    let grads = vec![[0.3, -0.2], [0.1, 0.4], [-0.5, 0.2]];
    let (fs, e) = ([0.7, 0.1], [0.2, -0.6]);
    let forcing = Forcing::constant(fs, e);
    let g2 = grads.clone();
    let rec = reconstruct_with(move |_, _| g2.clone(), 2, &cells, &r.grid, &forcing, &dom).unwrap();
    let coef = [
        -(grads[0][0] + fs[0]),
        -(grads[0][1] + fs[1]),
        e[0] + grads[1][0],
        e[1] + grads[1][1],
        e[0] + grads[2][0],
        e[1] + grads[2][1],
    ];
    let expect = combination(&cells, &coef);
    // walled x-faces (i, j), i in 0..=n, sit on periodic RVE face (i mod n, j)
    for j in 0..n {
        for i in 0..=n {
            let (a, b) = (rec.u.x[j * (n + 1) + i], expect.x[j * n + i % n]);
            assert!((a - b).abs() <= 1e-14, "x face {i},{j}");
            let (a, b) = (rec.u.y[i * n + j], expect.y[(i % n) * n + j]);
            assert!((a - b).abs() <= 1e-14, "y face {j},{i}");
        }
    }
}

#[test]
fn eps_cell_average_of_reconstruction_is_the_darcy_flux() {
    let r = centred();
    let spec = binary();
    let n = r.grid.nx;
    let m = 2 * n;
    let dom = build_perforated_domain(&r.micro, &r.grid, &r.eq, &spec, 0.5, m).unwrap();
    let cells = solve_all(&r.eq, &r.grid, &spec, CellOptions::default()).unwrap();
    let t = assemble_tensor(&cells, &r.eq, &r.grid, &spec).unwrap();
    let grads = vec![[0.3, -0.2], [0.1, 0.4], [-0.5, 0.2]];
    let (fs, e) = ([0.7, 0.1], [0.2, -0.6]);
    let g2 = grads.clone();
    let rec = reconstruct_with(move |_, _| g2.clone(), 2, &cells, &r.grid, &Forcing::constant(fs, e), &dom).unwrap();
    // x-faces of the lower-left eps-cell [0, 1/2)^2
    let mut mean = 0.0;
    for j in 0..n {
        for i in 0..n {
            mean += rec.u.x[j * (m + 1) + i];
        }
    }
    mean /= (n * n) as f64;
    let cp = [-(grads[0][0] + fs[0]), -(grads[0][1] + fs[1])];
    let mut darcy = t.k[0][0] * cp[0] + t.k[0][1] * cp[1];
    for s in 0..2 {
        let c = [e[0] + grads[s + 1][0], e[1] + grads[s + 1][1]];
        darcy += t.j[s][0][0] * c[0] + t.j[s][0][1] * c[1];
    }
    assert!((mean - darcy).abs() <= 1e-12 * darcy.abs().max(1e-3), "{mean} vs {darcy}");
}

#[test]
fn macro_reconstruction_and_homogenized_dissipation_are_consistent() {
    let (r, dom) = small_domain();
    let spec = binary();
    let cells = solve_all(&r.eq, &r.grid, &spec, CellOptions::default()).unwrap();
    let t = assemble_tensor(&cells, &r.eq, &r.grid, &spec).unwrap();
    let forcing = Forcing {
        f_star: VectorField::Shear { amplitude: 1.0 },
        e: VectorField::zero(),
        psi_ext: None,
    };
    let prob = MacroProblem::new(32, t, forcing.clone());
    let msol = solve_macro(&prob, 1e-11).unwrap();
    let form = dissipation_form(&cells, &r.eq, &r.grid, &spec).unwrap();
    let dh = homogenized_dissipation(&form, &msol);
    // With no species drive the homogenized dissipation equals the macro work.
    assert!((dh - msol.energy.work).abs() <= 1e-6 * msol.energy.work.abs(), "{dh} vs {:?}", msol.energy);
    let rec = reconstruct(&msol, &cells, &r.grid, &forcing, &dom).unwrap();
    assert!(rec.u.max_abs().is_finite());
    let csv = metrics_csv(&[], None);
    assert!(csv.starts_with("epsilon,m,velocity_error"));
}
