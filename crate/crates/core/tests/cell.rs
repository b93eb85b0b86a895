mod common;

use common::*;
use ekhom_core::cell::{
    cell_residuals, family_rhs, solve_family, CellOptions, CoupledSystem, Coupling, Family,
};
use ekhom_core::grid::krylov::SolverOptions;
use ekhom_core::grid::stokes::solve_stokes_dense;
use ekhom_core::grid::FluidGrid;
use ekhom_core::model::ElectrolyteSpec;

fn opts(c: Coupling) -> CellOptions {
    CellOptions {
        coupling: c,
        ..Default::default()
    }
}

#[test]
fn zero_drive_gives_zero_fields() {
    let g = skew_grid(16);
    let spec = binary();
    let eq = equilibrium(&g, &spec, 0.4);
    let o = CellOptions {
        drive_scale: 0.0,
        ..Default::default()
    };
    let s = solve_family(&eq, &g, &spec, Family::Species(1), 0, o).unwrap();
    assert_eq!(s.v.max_abs(), 0.0);
    assert_eq!(s.pi.max_abs(), 0.0);
    assert!(s.theta.iter().all(|t| t.max_abs() == 0.0));
}

#[test]
fn gauss_seidel_and_minres_match_dense() {
    let g = skew_grid(16);
    let spec = binary();
    let eq = equilibrium(&g, &spec, 0.6);
    for fam in Family::all(2) {
        for k in 0..2 {
            let dense = solve_family(&eq, &g, &spec, fam, k, opts(Coupling::Dense)).unwrap();
            let scale = dense.v.max_abs().max(max_abs(&dense.theta[0].data));
            for c in [Coupling::BlockGaussSeidel, Coupling::Monolithic] {
                let it = solve_family(&eq, &g, &spec, fam, k, opts(c)).unwrap();
                assert!(
                    max_diff(&it.v.x, &dense.v.x) <= 1e-8 * scale,
                    "{fam:?} {k} {c:?}"
                );
                assert!(max_diff(&it.v.y, &dense.v.y) <= 1e-8 * scale);
                for j in 0..2 {
                    assert!(max_diff(&it.theta[j].data, &dense.theta[j].data) <= 1e-8 * scale);
                }
                assert!(it.residuals.coupled <= 1e-9);
                assert!(it.residuals.energy <= 1e-9, "{}", it.residuals.energy);
                assert!(it.residuals.leakage.iter().all(|&l| l <= 1e-10));
            }
        }
    }
}

fn stokes_velocity(g: &FluidGrid, k: usize) -> Vec<f64> {
    let mut f = g.zero_vector();
    if k == 0 {
        f.x.iter_mut().for_each(|v| *v = 1.0);
    } else {
        f.y.iter_mut().for_each(|v| *v = 1.0);
    }
    let s = solve_stokes_dense(g, &f).unwrap();
    s.velocity.x.iter().chain(&s.velocity.y).copied().collect()
}

#[test]
fn uncharged_velocity_is_pure_stokes() {
    let g = disk_grid(16, 0.3);
    let oracle = stokes_velocity(&g, 0);
    for n_c in [0.5, 1.0] {
        let spec = ElectrolyteSpec::binary(n_c, 1.0, 1.0, 1.0);
        let eq = equilibrium(&g, &spec, 0.0);
        let s = solve_family(&eq, &g, &spec, Family::Pressure, 0, CellOptions::default()).unwrap();
        let v: Vec<f64> = s.v.x.iter().chain(&s.v.y).copied().collect();
        assert!(max_diff(&v, &oracle) <= 1e-8 * max_abs(&oracle));
    }
}

#[test]
fn all_fluid_species_family_has_constant_flux() {
    for (n, c) in [(16, Coupling::Dense), (32, Coupling::BlockGaussSeidel)] {
        let g = FluidGrid::all_fluid(n, n, 1.0 / n as f64, ekhom_core::grid::Topology::Periodic);
        let spec = binary();
        let eq = equilibrium(&g, &spec, 0.0);
        let s = solve_family(&eq, &g, &spec, Family::Species(1), 0, opts(c)).unwrap();
        assert!(max_abs(&s.theta[1].data) <= 1e-12);
        let sys = CoupledSystem::new(&g, &spec, &eq.n0, 1.0, false);
        let x = sys.pack(&s.v, &s.pi, &s.theta);
        let e = ekhom_core::cell::unit_field(&g, 0);
        let flux = sys.species_flux(&x, 1, Some(&e), spec.pe[1]);
        // n_c z / Pe with z = 1
        let expect = 0.5;
        assert!(flux.x.iter().all(|&f| (f - expect).abs() <= 1e-12));
        assert!(max_abs(&flux.y) <= 1e-12);
    }
}

#[test]
fn linearity_in_the_drive() {
    let g = skew_grid(16);
    let spec = binary();
    let eq = equilibrium(&g, &spec, 0.5);
    let one = solve_family(&eq, &g, &spec, Family::Species(0), 1, opts(Coupling::Dense)).unwrap();
    let o2 = CellOptions {
        drive_scale: 2.0,
        coupling: Coupling::Dense,
        ..Default::default()
    };
    let two = solve_family(&eq, &g, &spec, Family::Species(0), 1, o2).unwrap();
    let doubled: Vec<f64> = one.v.y.iter().map(|v| 2.0 * v).collect();
    assert!(max_diff(&two.v.y, &doubled) <= 1e-12 * max_abs(&doubled));
}

#[test]
fn reciprocity_between_families() {
    let g = skew_grid(16);
    let spec = binary();
    let eq = equilibrium(&g, &spec, 0.5);
    let sys = CoupledSystem::new(&g, &spec, &eq.n0, 1.0, false);
    let sol = |fam, k| {
        let s = solve_family(&eq, &g, &spec, fam, k, CellOptions::default()).unwrap();
        sys.pack(&s.v, &s.pi, &s.theta)
    };
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    for (fa, fb) in [
        (Family::Pressure, Family::Species(0)),
        (Family::Species(0), Family::Species(1)),
    ] {
        for k in 0..2 {
            for l in 0..2 {
                let lhs = dot(&family_rhs(&sys, fa, k, 1.0), &sol(fb, l));
                let rhs = dot(&family_rhs(&sys, fb, l, 1.0), &sol(fa, k));
                assert!(
                    (lhs - rhs).abs() <= 1e-8 * lhs.abs().max(rhs.abs()),
                    "{lhs} {rhs}"
                );
            }
        }
    }
}

#[test]
fn residuals_detect_noise_and_initial_guess_does_not_matter() {
    let g = skew_grid(16);
    let spec = binary();
    let eq = equilibrium(&g, &spec, 0.5);
    let mut s = solve_family(&eq, &g, &spec, Family::Pressure, 0, CellOptions::default()).unwrap();
    assert!(cell_residuals(&s, &eq, &g, &spec).coupled <= 1e-9);
    let sys = CoupledSystem::new(&g, &spec, &eq.n0, 1.0, false);
    let b = family_rhs(&sys, Family::Pressure, 0, 1.0);
    let mut x = vec![0.0; sys.len()];
    for (k, v) in x.iter_mut().enumerate() {
        *v = ((k as f64) * 0.37).sin();
    }
    sys.solve_block_gs(&b, &mut x, SolverOptions::default())
        .unwrap();
    let (v2, _, _) = sys.unpack(&x);
    assert!(max_diff(&v2.x, &s.v.x) <= 1e-8 * s.v.max_abs());
    let scale = 1e-3 * s.v.max_abs();
    for (k, v) in s.v.x.iter_mut().enumerate() {
        if *v != 0.0 {
            *v += scale * ((k as f64) * 1.7).sin();
        }
    }
    assert!(cell_residuals(&s, &eq, &g, &spec).momentum > 1e-4);
}
