//! Dense direct solves used as oracles on small grids.

use nalgebra::{DMatrix, DVector};

use super::GridError;

/// Solves `A x = b` restricted to the unknowns `dofs` by assembling A column by
/// column from `apply` and bordering it with the kernel vectors (each given
/// on the full index space), which enforces orthogonality of x to the kernel.
/// Entries outside `dofs` are zero in the result.
pub fn solve_restricted(
    n_full: usize,
    dofs: &[usize],
    apply: impl Fn(&[f64], &mut [f64]),
    b: &[f64],
    kernels: &[Vec<f64>],
) -> Result<Vec<f64>, GridError> {
    let m = dofs.len();
    let k = kernels.len();
    let mut a = DMatrix::<f64>::zeros(m + k, m + k);
    let mut e = vec![0.0; n_full];
    let mut col = vec![0.0; n_full];
    for (jc, &dj) in dofs.iter().enumerate() {
        e[dj] = 1.0;
        apply(&e, &mut col);
        e[dj] = 0.0;
        for (ir, &di) in dofs.iter().enumerate() {
            a[(ir, jc)] = col[di];
        }
    }
    for (q, kv) in kernels.iter().enumerate() {
        for (ir, &di) in dofs.iter().enumerate() {
            a[(ir, m + q)] = kv[di];
            a[(m + q, ir)] = kv[di];
        }
    }
    let mut rhs = DVector::<f64>::zeros(m + k);
    for (ir, &di) in dofs.iter().enumerate() {
        rhs[ir] = b[di];
    }
    let sol = a.lu().solve(&rhs).ok_or(GridError::Singular)?;
    let mut x = vec![0.0; n_full];
    for (ir, &di) in dofs.iter().enumerate() {
        x[di] = sol[ir];
    }
    Ok(x)
}
