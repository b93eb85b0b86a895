//! Dimensionless physical parameters, their validation, and the a-priori
//! bound constants of the equilibrium potential.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Absolute tolerance on the bulk electroneutrality sum.
pub const NEUTRALITY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("valences must be strictly increasing with z_1 < 0 < z_N, got {0:?}")]
    ValenceOrder(Vec<i32>),
    #[error("bulk electrolyte is not neutral: sum z_j n_j = {0:e}")]
    NonNeutral(f64),
    #[error("{0} must be strictly positive")]
    NonPositive(&'static str),
    #[error("species lists disagree in length: {0}")]
    Length(String),
    #[error("surface charge {value} exceeds declared bound {bound}")]
    ChargeBound { value: f64, bound: f64 },
}

/// Nondimensional electrolyte description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElectrolyteSpec {
    pub z: Vec<i32>,
    pub n_c: Vec<f64>,
    #[serde(rename = "Pe")]
    pub pe: Vec<f64>,
    pub beta: f64,
    #[serde(rename = "N_sigma")]
    pub n_sigma: f64,
}

impl ElectrolyteSpec {
    /// Symmetric binary electrolyte z = (-1, 1).
    pub fn binary(n_c: f64, pe: f64, beta: f64, n_sigma: f64) -> Self {
        ElectrolyteSpec {
            z: vec![-1, 1],
            n_c: vec![n_c, n_c],
            pe: vec![pe, pe],
            beta,
            n_sigma,
        }
    }

    pub fn species(&self) -> usize {
        self.z.len()
    }

    pub fn zf(&self, j: usize) -> f64 {
        self.z[j] as f64
    }

    /// Coefficient z_j / Pe_j of the diffusive flux.
    pub fn mobility(&self, j: usize) -> f64 {
        self.zf(j) / self.pe[j]
    }
}

/// Checks every invariant and returns the spec unchanged.
pub fn validate_electrolyte(spec: ElectrolyteSpec) -> Result<ElectrolyteSpec, ModelError> {
    let n = spec.z.len();
    if n == 0 {
        return Err(ModelError::Length("no species".into()));
    }
    if spec.n_c.len() != n || spec.pe.len() != n {
        return Err(ModelError::Length(format!(
            "z has {n} entries, n_c {}, Pe {}",
            spec.n_c.len(),
            spec.pe.len()
        )));
    }
    let increasing = spec.z.windows(2).all(|w| w[0] < w[1]);
    if !increasing || spec.z[0] >= 0 || spec.z[n - 1] <= 0 {
        return Err(ModelError::ValenceOrder(spec.z.clone()));
    }
    if spec.n_c.iter().any(|&c| !(c > 0.0)) {
        return Err(ModelError::NonPositive("n_c"));
    }
    if spec.pe.iter().any(|&p| !(p > 0.0)) {
        return Err(ModelError::NonPositive("Pe"));
    }
    if !(spec.beta > 0.0) {
        return Err(ModelError::NonPositive("beta"));
    }
    if !(spec.n_sigma >= 0.0) {
        return Err(ModelError::NonPositive("N_sigma"));
    }
    let charge: f64 = spec
        .z
        .iter()
        .zip(&spec.n_c)
        .map(|(&z, &c)| z as f64 * c)
        .sum();
    if charge.abs() > NEUTRALITY_TOL {
        return Err(ModelError::NonNeutral(charge));
    }
    Ok(spec)
}

/// n_H(psi) = -sum_j z_j n_j^c exp(-z_j psi).
pub fn hardy_nonlinearity(spec: &ElectrolyteSpec, psi: f64) -> f64 {
    -spec
        .z
        .iter()
        .zip(&spec.n_c)
        .map(|(&z, &c)| z as f64 * c * (-(z as f64) * psi).exp())
        .sum::<f64>()
}

/// Derivative of [`hardy_nonlinearity`]: sum_j z_j^2 n_j^c exp(-z_j psi).
pub fn hardy_derivative(spec: &ElectrolyteSpec, psi: f64) -> f64 {
    spec.z
        .iter()
        .zip(&spec.n_c)
        .map(|(&z, &c)| {
            let z = z as f64;
            z * z * c * (-z * psi).exp()
        })
        .sum()
}

/// Surface charge density on the grain boundaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SurfaceCharge {
    Constant { value: f64 },
    PerGrain { values: Vec<f64> },
}

impl SurfaceCharge {
    pub fn constant(value: f64) -> Self {
        SurfaceCharge::Constant { value }
    }

    /// Charge density on grain `g`; per-grain tables repeat cyclically.
    pub fn on_grain(&self, g: usize) -> f64 {
        match self {
            SurfaceCharge::Constant { value } => *value,
            SurfaceCharge::PerGrain { values } if values.is_empty() => 0.0,
            SurfaceCharge::PerGrain { values } => values[g % values.len()],
        }
    }

    pub fn sup_abs(&self) -> f64 {
        match self {
            SurfaceCharge::Constant { value } => value.abs(),
            SurfaceCharge::PerGrain { values } => values.iter().fold(0.0, |m, v| m.max(v.abs())),
        }
    }

    /// C_0 = N_sigma sup |sigma|.
    pub fn bound(&self, n_sigma: f64) -> f64 {
        n_sigma * self.sup_abs()
    }

    pub fn is_zero(&self) -> bool {
        self.sup_abs() == 0.0
    }

    pub fn check_bound(&self, bound: f64) -> Result<(), ModelError> {
        let s = self.sup_abs();
        if s > bound {
            return Err(ModelError::ChargeBound { value: s, bound });
        }
        Ok(())
    }
}

/// A vector field on the macroscopic domain.
#[derive(Clone)]
pub enum VectorField {
    Constant([f64; 2]),
    /// (a sin(2 pi y), 0): a divergence-free shear forcing.
    Shear {
        amplitude: f64,
    },
    Custom(std::sync::Arc<dyn Fn(f64, f64) -> [f64; 2] + Send + Sync>),
}

impl std::fmt::Debug for VectorField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            VectorField::Constant(v) => write!(f, "Constant({v:?})"),
            VectorField::Shear { amplitude } => write!(f, "Shear {{ amplitude: {amplitude} }}"),
            VectorField::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

impl VectorField {
    pub fn zero() -> Self {
        VectorField::Constant([0.0, 0.0])
    }

    pub fn eval(&self, x: f64, y: f64) -> [f64; 2] {
        match self {
            VectorField::Constant(v) => *v,
            VectorField::Shear { amplitude } => {
                [amplitude * (2.0 * std::f64::consts::PI * y).sin(), 0.0]
            }
            VectorField::Custom(f) => f(x, y),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            VectorField::Constant(v) => v[0] == 0.0 && v[1] == 0.0,
            VectorField::Shear { amplitude } => *amplitude == 0.0,
            VectorField::Custom(_) => false,
        }
    }
}

/// Macroscopic driving: body force f*, exterior field E = grad Psi^ext.
#[derive(Clone)]
pub struct Forcing {
    pub f_star: VectorField,
    pub e: VectorField,
    pub psi_ext: Option<std::sync::Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>>,
}

impl std::fmt::Debug for Forcing {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Forcing")
            .field("f_star", &self.f_star)
            .field("e", &self.e)
            .field("psi_ext", &self.psi_ext.as_ref().map(|_| "<potential>"))
            .finish()
    }
}

impl Forcing {
    pub fn zero() -> Self {
        Forcing {
            f_star: VectorField::zero(),
            e: VectorField::zero(),
            psi_ext: None,
        }
    }

    pub fn constant(f_star: [f64; 2], e: [f64; 2]) -> Self {
        Forcing {
            f_star: VectorField::Constant(f_star),
            e: VectorField::Constant(e),
            psi_ext: None,
        }
    }

    /// Psi^ext at (x, y); for constant E without an explicit potential this is
    /// the linear potential anchored to zero at `center`.
    pub fn psi_ext_at(&self, x: f64, y: f64, center: [f64; 2]) -> Option<f64> {
        if let Some(p) = &self.psi_ext {
            return Some(p(x, y));
        }
        match self.e {
            VectorField::Constant(e) => Some(e[0] * (x - center[0]) + e[1] * (y - center[1])),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.f_star.is_zero() && self.e.is_zero()
    }

    /// Largest deviation between the central-difference gradient of psi_ext and E,
    /// sampled on an m x m grid of the unit square. Zero when no potential is set.
    pub fn psi_ext_mismatch(&self, m: usize) -> f64 {
        let Some(p) = &self.psi_ext else { return 0.0 };
        let h = 1.0 / m as f64;
        let mut worst: f64 = 0.0;
        for j in 0..m {
            for i in 0..m {
                let (x, y) = ((i as f64 + 0.5) * h, (j as f64 + 0.5) * h);
                let gx = (p(x + 0.5 * h, y) - p(x - 0.5 * h, y)) / h;
                let gy = (p(x, y + 0.5 * h) - p(x, y - 0.5 * h)) / h;
                let e = self.e.eval(x, y);
                worst = worst.max((gx - e[0]).abs()).max((gy - e[1]).abs());
            }
        }
        worst
    }
}

/// A-priori L-infinity bounds on the equilibrium potential.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundConstants {
    pub v_m: f64,
    pub v_max: f64,
    pub c_m: f64,
    pub psi_min: f64,
    pub psi_max: f64,
}

fn neg_part(a: f64) -> f64 {
    (-a).max(0.0)
}

/// Bounds from the truncation argument: testing with (V - C_m - Psi)_+ gives
/// Psi >= V_m - C_m, and the mirrored argument with z_1 gives the upper bound.
pub fn bound_constants(spec: &ElectrolyteSpec, v_m: f64, v_max: f64) -> BoundConstants {
    let n = spec.species();
    let z1 = spec.zf(0);
    let zn = spec.zf(n - 1);
    let neg_sum: f64 = (0..n).filter(|&j| spec.z[j] < 0).map(|j| spec.n_c[j]).sum();
    let pos_sum: f64 = (0..n).filter(|&j| spec.z[j] > 0).map(|j| spec.n_c[j]).sum();

    let lower_log = (neg_part(v_m / spec.beta + z1 * neg_sum) / (zn * spec.n_c[n - 1]) + 1.0).ln();
    let c_m = v_max + lower_log / zn;
    let psi_min = v_m - c_m;

    let upper_log =
        ((v_max / spec.beta + zn * pos_sum).max(0.0) / (z1.abs() * spec.n_c[0]) + 1.0).ln();
    let psi_max = v_max - v_m + upper_log / z1.abs();

    BoundConstants {
        v_m,
        v_max,
        c_m,
        psi_min,
        psi_max,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binary() -> ElectrolyteSpec {
        ElectrolyteSpec::binary(0.5, 1.0, 1.0, 1.0)
    }

    #[test]
    fn validation_examples() {
        assert!(validate_electrolyte(binary()).is_ok());
        let mut s = binary();
        s.z = vec![1, 2];
        assert!(matches!(
            validate_electrolyte(s),
            Err(ModelError::ValenceOrder(_))
        ));
        let mut s = binary();
        s.n_c = vec![0.3, 0.5];
        assert!(matches!(
            validate_electrolyte(s),
            Err(ModelError::NonNeutral(_))
        ));
        let mut s = binary();
        s.pe[1] = 0.0;
        assert!(matches!(
            validate_electrolyte(s),
            Err(ModelError::NonPositive("Pe"))
        ));
    }

    #[test]
    fn validation_is_idempotent() {
        let s = validate_electrolyte(binary()).unwrap();
        assert_eq!(validate_electrolyte(s.clone()).unwrap(), s);
    }

    #[test]
    fn hardy_values() {
        let s = binary();
        assert_eq!(hardy_nonlinearity(&s, 0.0), 0.0);
        let e = 1f64.exp();
        assert!((hardy_nonlinearity(&s, 1.0) - 0.5 * (e - 1.0 / e)).abs() < 1e-15);
        assert!(hardy_nonlinearity(&s, 0.1) > 0.0);
    }

    #[test]
    fn bound_example() {
        let b = bound_constants(&binary(), 0.0, 0.0);
        assert!((b.c_m - 2f64.ln()).abs() < 1e-15);
        assert!(b.psi_min <= 0.0 && b.psi_max >= 0.0);
    }

    #[test]
    fn linear_potential_anchor() {
        let f = Forcing::constant([0.0, 0.0], [1.0, -2.0]);
        assert_eq!(f.psi_ext_at(0.5, 0.5, [0.5, 0.5]), Some(0.0));
        assert!((f.psi_ext_at(1.0, 0.0, [0.5, 0.5]).unwrap() - 1.5).abs() < 1e-15);
    }
}
