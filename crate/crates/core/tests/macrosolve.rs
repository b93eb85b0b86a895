use std::f64::consts::PI;
use std::sync::Arc;

use ekhom_core::macrosolve::{macro_fluxes, solve_macro, MacroError, MacroProblem};
use ekhom_core::model::{Forcing, VectorField};
use ekhom_core::onsager::OnsagerTensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Symmetric positive definite 6 x 6 tensor with a full off-diagonal structure.
fn tensor(seed: u64) -> OnsagerTensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m: Vec<Vec<f64>> = (0..6)
        .map(|_| (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let b: Vec<Vec<f64>> = (0..6)
        .map(|r| {
            (0..6)
                .map(|c| {
                    (0..6).map(|k| m[k][r] * m[k][c]).sum::<f64>() * 0.1
                        + if r == c { 0.05 } else { 0.0 }
                })
                .collect()
        })
        .collect();
    OnsagerTensor::from_matrix(&[-1, 1], b)
}

fn sin2(x: f64) -> f64 {
    (PI * x).sin().powi(2)
}

/// Exact Y = a_b s(x, y) with s = sin^2(pi x) sin^2(pi y); its gradient vanishes on
/// the boundary, so both the no-flux and the Dirichlet conditions hold.
fn manufactured(t: &OnsagerTensor, m: usize) -> (MacroProblem, Vec<f64>) {
    let amp = vec![1.0, 0.7, -0.4];
    let b = t.b.clone();
    let a2 = amp.clone();
    let source = Arc::new(move |x: f64, y: f64| {
        let hess = [
            [
                2.0 * PI * PI * (2.0 * PI * x).cos() * sin2(y),
                PI * PI * (2.0 * PI * x).sin() * (2.0 * PI * y).sin(),
            ],
            [
                PI * PI * (2.0 * PI * x).sin() * (2.0 * PI * y).sin(),
                2.0 * PI * PI * (2.0 * PI * y).cos() * sin2(x),
            ],
        ];
        (0..3)
            .map(|al| {
                let mut v = 0.0;
                for be in 0..3 {
                    for r in 0..2 {
                        for c in 0..2 {
                            v -= a2[be]
                                * 0.5
                                * (b[2 * al + r][2 * be + c] + b[2 * be + c][2 * al + r])
                                * hess[r][c];
                        }
                    }
                }
                v
            })
            .collect()
    });
    let mut prob = MacroProblem::new(m, t.clone(), Forcing::zero());
    prob.source = Some(source);
    (prob, amp)
}

fn l2_error(prob: &MacroProblem, amp: &[f64]) -> f64 {
    let sol = solve_macro(prob, 1e-11).unwrap();
    let m = prob.m;
    let h = 1.0 / m as f64;
    let mut acc = 0.0;
    for j in 0..=m {
        for i in 0..=m {
            let w = |k: usize| if k == 0 || k == m { 0.5 } else { 1.0 };
            let s = sin2(i as f64 * h) * sin2(j as f64 * h);
            let n = j * (m + 1) + i;
            let ep = sol.p[n] - amp[0] * (s - 0.25);
            let mut e2 = ep * ep;
            for k in 0..2 {
                // w = -z Phi
                let w_num = -(prob.tensor.z[k] as f64) * sol.phi[k][n];
                e2 += (w_num - amp[k + 1] * s).powi(2);
            }
            acc += w(i) * w(j) * e2 * h * h;
        }
    }
    acc.sqrt()
}

#[test]
fn manufactured_solution_is_second_order() {
    let t = tensor(3);
    let (p64, amp) = manufactured(&t, 64);
    let (p128, _) = manufactured(&t, 128);
    let e64 = l2_error(&p64, &amp);
    let e128 = l2_error(&p128, &amp);
    let rate = (e64 / e128).log2();
    assert!(rate >= 1.9, "errors {e64:e} {e128:e}, rate {rate}");
}

#[test]
fn zero_forcing_gives_zero() {
    let sol = solve_macro(&MacroProblem::new(16, tensor(1), Forcing::zero()), 1e-10).unwrap();
    assert!(sol
        .p
        .iter()
        .chain(sol.phi.iter().flatten())
        .all(|&v| v == 0.0));
    assert!(sol.u.iter().all(|v| v[0] == 0.0 && v[1] == 0.0));
    let f = macro_fluxes(&sol, &MacroProblem::new(16, tensor(1), Forcing::zero()));
    assert!(f.jj.iter().flatten().all(|v| v[0] == 0.0 && v[1] == 0.0));
}

#[test]
fn constant_body_force_without_dirichlet_is_balanced_by_pressure() {
    let f_star = [0.3, -0.8];
    let mut prob = MacroProblem::new(24, tensor(2), Forcing::constant(f_star, [0.0, 0.0]));
    prob.dirichlet = false;
    let sol = solve_macro(&prob, 1e-12).unwrap();
    let m = prob.m;
    let h = 1.0 / m as f64;
    for j in 0..=m {
        for i in 0..=m {
            let exact = -f_star[0] * (i as f64 * h - 0.5) - f_star[1] * (j as f64 * h - 0.5);
            assert!((sol.p[j * (m + 1) + i] - exact).abs() < 1e-9);
        }
    }
    let fl = macro_fluxes(&sol, &prob);
    let worst =
        fl.u.iter()
            .chain(fl.jj.iter().flatten())
            .fold(0.0f64, |a, v| a.max(v[0].abs()).max(v[1].abs()));
    assert!(worst < 1e-9, "flux {worst:e}");
}

fn driven(m: usize, seed: u64) -> MacroProblem {
    let forcing = Forcing {
        f_star: VectorField::Shear { amplitude: 0.5 },
        e: VectorField::Constant([0.2, 0.1]),
        psi_ext: None,
    };
    MacroProblem::new(m, tensor(seed), forcing)
}

#[test]
fn flux_formulas_agree_and_fluxes_are_conserved() {
    let prob = driven(32, 4);
    let sol = solve_macro(&prob, 1e-10).unwrap();
    let fl = macro_fluxes(&sol, &prob);
    assert!(fl.consistency <= 1e-12, "consistency {:e}", fl.consistency);
    assert!(sol.balance <= 1e-9, "balance {:e}", sol.balance);
    let umax = sol
        .u
        .iter()
        .fold(0.0f64, |a, v| a.max(v[0].abs()).max(v[1].abs()));
    assert!(umax > 1e-3);
    for (a, b) in fl.u.iter().zip(&sol.u) {
        assert!(
            (a[0] - b[0]).abs() <= 1e-14 * umax.max(1.0)
                && (a[1] - b[1]).abs() <= 1e-14 * umax.max(1.0)
        );
    }
}

#[test]
fn energy_identity_holds() {
    for seed in [5, 6] {
        let sol = solve_macro(&driven(48, seed), 1e-10).unwrap();
        assert!(sol.energy.dissipation > 0.0);
        assert!(
            sol.energy.residual() <= 1e-8,
            "residual {:e}",
            sol.energy.residual()
        );
    }
    let t = tensor(7);
    let (prob, _) = manufactured(&t, 32);
    let sol = solve_macro(&prob, 1e-10).unwrap();
    assert!(
        sol.energy.residual() <= 1e-8,
        "residual {:e}",
        sol.energy.residual()
    );
}

#[test]
fn scaling_the_tensor_scales_fluxes_at_fixed_gradients() {
    let prob = driven(16, 8);
    let sol = solve_macro(&prob, 1e-12).unwrap();
    let base = macro_fluxes(&sol, &prob);
    let mut scaled = prob.clone();
    let c = 2.5;
    let b: Vec<Vec<f64>> = prob
        .tensor
        .b
        .iter()
        .map(|r| r.iter().map(|v| c * v).collect())
        .collect();
    scaled.tensor = OnsagerTensor::from_matrix(&prob.tensor.z, b);
    let fl = macro_fluxes(&sol, &scaled);
    for (a, b) in fl.u.iter().zip(&base.u) {
        assert!((a[0] - c * b[0]).abs() < 1e-13 && (a[1] - c * b[1]).abs() < 1e-13);
    }
}

#[test]
fn rejects_indefinite_tensor() {
    let mut b = tensor(9).b;
    b[0][0] = -1.0;
    let prob = MacroProblem::new(8, OnsagerTensor::from_matrix(&[-1, 1], b), Forcing::zero());
    assert!(matches!(
        solve_macro(&prob, 1e-10),
        Err(MacroError::NonSpdTensor { .. })
    ));
}
