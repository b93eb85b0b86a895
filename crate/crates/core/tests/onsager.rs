mod common;

use common::*;
use ekhom_core::cell::{solve_all, CellOptions};
use ekhom_core::grid::krylov::SolverOptions;
use ekhom_core::grid::stokes::solve_stokes;
use ekhom_core::grid::FluidGrid;
use ekhom_core::onsager::{assemble_tensor, check_onsager, ensemble_average, OnsagerTensor};

fn tensor(g: &FluidGrid, sigma: f64) -> OnsagerTensor {
    let spec = binary();
    let eq = equilibrium(g, &spec, sigma);
    let cells = solve_all(&eq, g, &spec, CellOptions::default()).unwrap();
    assemble_tensor(&cells, &eq, g, &spec).unwrap()
}

#[test]
fn charged_tensor_is_symmetric_and_positive() {
    let t = tensor(&skew_grid(32), 0.8);
    let c = check_onsager(&t);
    assert!(c.asym <= 1e-8, "{c:?}");
    assert!(c.reciprocity <= 1e-8, "{c:?}");
    assert!(c.lambda_min > 0.0 && c.lambda_min_k > 0.0);
    assert!(c.pass);
}

#[test]
fn uncharged_k_is_stokes_permeability_and_isotropic() {
    let g = disk_grid(32, 0.3);
    let t = tensor(&g, 0.0);
    for k in 0..2 {
        let mut f = g.zero_vector();
        if k == 0 {
            f.x.iter_mut().for_each(|v| *v = 1.0);
        } else {
            f.y.iter_mut().for_each(|v| *v = 1.0);
        }
        let s = solve_stokes(&g, &f, SolverOptions::default()).unwrap();
        let comp = if k == 0 { &s.velocity.x } else { &s.velocity.y };
        let perm = comp.iter().sum::<f64>() * g.h * g.h;
        assert!((t.k[k][k] - perm).abs() <= 1e-8 * perm);
    }
    assert!((t.k[0][0] - t.k[1][1]).abs() <= 1e-6 * t.k[0][0]);
    assert!(t.k[0][1].abs() <= 1e-6 * t.k[0][0]);
}

#[test]
fn assembly_is_deterministic() {
    let g = skew_grid(16);
    assert_eq!(tensor(&g, 0.5), tensor(&g, 0.5));
}

#[test]
fn ensemble_of_copies_has_zero_stderr_and_is_order_free() {
    let a = tensor(&skew_grid(16), 0.5);
    let b = tensor(&disk_grid(16, 0.3), 0.5);
    let e = ensemble_average(&[a.clone(), a.clone(), a.clone()]).unwrap();
    assert!(e.entries.iter().all(|s| s.stderr == 0.0));
    let x = ensemble_average(&[a.clone(), b.clone(), a.clone()]).unwrap();
    let y = ensemble_average(&[b, a.clone(), a]).unwrap();
    assert_eq!(x.entries, y.entries);
}
