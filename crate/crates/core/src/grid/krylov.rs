//! Preconditioned conjugate gradients and MINRES, with diagonal or general
//! SPD preconditioners. Residuals are reported relative to the right-hand
//! side in the Euclidean norm.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::sum::{dot, norm};
use super::GridError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub residual: f64,
    pub method: String,
}

impl fmt::Display for SolveReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} after {} iterations, relative residual {:e}",
            self.method, self.iterations, self.residual
        )
    }
}

impl SolveReport {
    pub fn trivial(method: &str) -> Self {
        SolveReport {
            iterations: 0,
            residual: 0.0,
            method: method.to_string(),
        }
    }
}

/// Linear solver settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-10,
            max_iter: 20_000,
        }
    }
}

fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Preconditioned CG for a symmetric positive semi-definite operator.
///
/// `inv_diag` is the inverse Jacobi diagonal (zero on inactive entries), and
/// `project` removes kernel components; it is applied to the right-hand side,
/// the residuals and the final iterate. The initial guess is `x`.
pub fn cg(
    apply: impl Fn(&[f64], &mut [f64]),
    inv_diag: &[f64],
    project: impl Fn(&mut [f64]),
    b: &[f64],
    x: &mut [f64],
    opts: SolverOptions,
) -> Result<SolveReport, GridError> {
    let precond = |r: &[f64], z: &mut [f64]| {
        for i in 0..r.len() {
            z[i] = r[i] * inv_diag[i];
        }
    };
    cg_with(apply, precond, project, b, x, opts)
}

/// [`cg`] with a general SPD preconditioner `precond(r, z)`, z = M^-1 r.
pub fn cg_with(
    apply: impl Fn(&[f64], &mut [f64]),
    precond: impl Fn(&[f64], &mut [f64]),
    project: impl Fn(&mut [f64]),
    b: &[f64],
    x: &mut [f64],
    opts: SolverOptions,
) -> Result<SolveReport, GridError> {
    let n = b.len();
    let mut rhs = b.to_vec();
    project(&mut rhs);
    let defect = norm(&rhs.iter().zip(b).map(|(p, q)| p - q).collect::<Vec<_>>());
    let bnorm = norm(&rhs);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        if defect > 0.0 {
            return Err(GridError::InconsistentRhs(defect));
        }
        return Ok(SolveReport::trivial("pcg"));
    }
    if defect > 1e-8 * norm(b) {
        return Err(GridError::InconsistentRhs(defect / norm(b)));
    }
    project(x);
    let mut r = vec![0.0; n];
    apply(x, &mut r);
    for i in 0..n {
        r[i] = rhs[i] - r[i];
    }
    project(&mut r);
    let mut z = vec![0.0; n];
    precond(&r, &mut z);
    project(&mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut q = vec![0.0; n];
    let mut res = norm(&r) / bnorm;
    let mut it = 0;
    while res > opts.tol && it < opts.max_iter {
        apply(&p, &mut q);
        let pq = dot(&p, &q);
        if pq <= 0.0 {
            break;
        }
        let alpha = rz / pq;
        axpy(alpha, &p, x);
        axpy(-alpha, &q, &mut r);
        it += 1;
        // Refresh the recursive residual now and then to stop drift.
        if it % 200 == 0 {
            apply(x, &mut q);
            for i in 0..n {
                r[i] = rhs[i] - q[i];
            }
            project(&mut r);
        }
        res = norm(&r) / bnorm;
        precond(&r, &mut z);
        project(&mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    project(x);
    apply(x, &mut q);
    for i in 0..n {
        r[i] = rhs[i] - q[i];
    }
    project(&mut r);
    let report = SolveReport {
        iterations: it,
        residual: norm(&r) / bnorm,
        method: "pcg".into(),
    };
    if report.residual <= opts.tol {
        Ok(report)
    } else {
        Err(GridError::NoConvergence(report))
    }
}

/// Preconditioned MINRES for symmetric (possibly indefinite, possibly
/// singular but consistent) systems. `inv_prec` is the inverse of an SPD
/// diagonal preconditioner. The recursion is restarted from the true
/// residual until it meets `tol` or the iteration budget runs out.
pub fn minres(
    apply: impl Fn(&[f64], &mut [f64]),
    inv_prec: &[f64],
    project: impl Fn(&mut [f64]),
    b: &[f64],
    x: &mut [f64],
    opts: SolverOptions,
) -> Result<SolveReport, GridError> {
    let precond = |r: &[f64], z: &mut [f64]| {
        for i in 0..r.len() {
            z[i] = r[i] * inv_prec[i];
        }
    };
    minres_with(apply, precond, project, b, x, opts)
}

/// [`minres`] with a general SPD preconditioner `precond(r, z)`, z = M^-1 r.
pub fn minres_with(
    apply: impl Fn(&[f64], &mut [f64]),
    precond: impl Fn(&[f64], &mut [f64]),
    project: impl Fn(&mut [f64]),
    b: &[f64],
    x: &mut [f64],
    opts: SolverOptions,
) -> Result<SolveReport, GridError> {
    let n = b.len();
    let mut rhs = b.to_vec();
    project(&mut rhs);
    let bnorm = norm(&rhs);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(SolveReport::trivial("minres"));
    }
    project(x);
    let mut total = 0;
    let mut r = vec![0.0; n];
    let true_residual = |x: &[f64], r: &mut [f64]| {
        apply(x, r);
        for i in 0..n {
            r[i] = rhs[i] - r[i];
        }
        project(r);
        norm(r) / bnorm
    };
    let mut res = true_residual(x, &mut r);
    while res > opts.tol && total < opts.max_iter {
        let budget = opts.max_iter - total;
        // Aim a little below the target since the recursion tracks the
        // preconditioned residual.
        let its = minres_cycle(
            &apply,
            &precond,
            &project,
            &r,
            x,
            0.1 * opts.tol * bnorm / norm(&r),
            budget,
        );
        total += its;
        let new_res = true_residual(x, &mut r);
        let stalled = its == 0 || new_res >= res;
        res = new_res;
        if stalled {
            break;
        }
    }
    project(x);
    let report = SolveReport {
        iterations: total,
        residual: res,
        method: "minres".into(),
    };
    if res <= opts.tol {
        Ok(report)
    } else {
        Err(GridError::NoConvergence(report))
    }
}

/// One MINRES run on A dx = r0, adding dx into `x`. Returns the iteration count.
fn minres_cycle(
    apply: &impl Fn(&[f64], &mut [f64]),
    prec: &impl Fn(&[f64], &mut [f64]),
    project: &impl Fn(&mut [f64]),
    r0: &[f64],
    x: &mut [f64],
    rtol: f64,
    max_iter: usize,
) -> usize {
    let n = r0.len();
    let precond = |r: &[f64], y: &mut [f64]| {
        prec(r, y);
        project(y);
    };
    let mut r1 = r0.to_vec();
    let mut y = vec![0.0; n];
    precond(&r1, &mut y);
    let beta1 = dot(&r1, &y);
    if beta1 <= 0.0 {
        return 0;
    }
    let beta1 = beta1.sqrt();
    let mut r2 = r1.clone();
    let mut v = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut w1 = vec![0.0; n];
    let mut w2 = vec![0.0; n];
    let (mut oldb, mut beta, mut dbar, mut epsln, mut phibar) = (0.0, beta1, 0.0, 0.0, beta1);
    let (mut cs, mut sn) = (-1.0f64, 0.0f64);
    let mut it = 0;
    while it < max_iter {
        it += 1;
        let s = 1.0 / beta;
        for i in 0..n {
            v[i] = s * y[i];
        }
        apply(&v, &mut y);
        project(&mut y);
        if it >= 2 {
            axpy(-beta / oldb, &r1, &mut y);
        }
        let alfa = dot(&v, &y);
        axpy(-alfa / beta, &r2, &mut y);
        std::mem::swap(&mut r1, &mut r2);
        r2.copy_from_slice(&y);
        precond(&r2, &mut y);
        oldb = beta;
        let bb = dot(&r2, &y);
        beta = if bb > 0.0 { bb.sqrt() } else { 0.0 };

        let oldeps = epsln;
        let delta = cs * dbar + sn * alfa;
        let gbar = sn * dbar - cs * alfa;
        epsln = sn * beta;
        dbar = -cs * beta;
        let gamma = gbar.hypot(beta).max(f64::EPSILON);
        cs = gbar / gamma;
        sn = beta / gamma;
        let phi = cs * phibar;
        phibar *= sn;

        std::mem::swap(&mut w1, &mut w2);
        std::mem::swap(&mut w2, &mut w);
        for i in 0..n {
            w[i] = (v[i] - oldeps * w1[i] - delta * w2[i]) / gamma;
        }
        axpy(phi, &w, x);

        if phibar <= rtol * beta1 || beta == 0.0 {
            break;
        }
    }
    it
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lap1d(x: &[f64], y: &mut [f64]) {
        let n = x.len();
        for i in 0..n {
            let l = if i > 0 { x[i - 1] } else { 0.0 };
            let r = if i + 1 < n { x[i + 1] } else { 0.0 };
            y[i] = 2.0 * x[i] - l - r;
        }
    }

    #[test]
    fn cg_zero_rhs_gives_zero() {
        let b = vec![0.0; 10];
        let mut x = vec![1.0; 10];
        cg(
            lap1d,
            &vec![0.5; 10],
            |_| {},
            &b,
            &mut x,
            SolverOptions::default(),
        )
        .unwrap();
        assert!(x.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn minres_solves_indefinite() {
        // diag(1, -2, 3, -4, ...) plus a weak symmetric coupling
        let n = 40;
        let apply = |x: &[f64], y: &mut [f64]| {
            for i in 0..n {
                let d = if i % 2 == 0 {
                    (i + 1) as f64
                } else {
                    -((i + 1) as f64)
                };
                y[i] = d * x[i];
                if i > 0 {
                    y[i] += 0.3 * x[i - 1];
                }
                if i + 1 < n {
                    y[i] += 0.3 * x[i + 1];
                }
            }
        };
        let b: Vec<f64> = (0..n).map(|i| (i as f64).cos()).collect();
        let mut x = vec![0.0; n];
        let rep = minres(
            apply,
            &vec![1.0; n],
            |_| {},
            &b,
            &mut x,
            SolverOptions::default(),
        )
        .unwrap();
        let mut ax = vec![0.0; n];
        apply(&x, &mut ax);
        let err: f64 = ax
            .iter()
            .zip(&b)
            .map(|(a, c)| (a - c).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-9, "{rep}");
    }
}
