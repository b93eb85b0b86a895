//! Random disperse microstructures on a periodic cell: generators, checks of
//! the disperse-medium conditions, voxelization, and the text file format.

mod generate;
mod voxel;

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use generate::{generate_bernoulli, generate_perturbed_lattice, generate_poisson_voronoi};
pub use voxel::voxelize;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("radius of grain {grain} clamped to {radius} below r_min")]
    InfeasibleConstraints { grain: usize, radius: f64 },
    #[error("fluid phase is not connected")]
    DisconnectedFluid,
    #[error("grid spacing {h} exceeds delta_min/4 = {limit}")]
    ResolutionTooCoarse { h: f64, limit: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("malformed microstructure file: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Generator {
    PerturbedLattice,
    Bernoulli,
    PoissonVoronoi,
    /// Hand-built or tiled geometry.
    Custom,
}

impl fmt::Display for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Generator::PerturbedLattice => "perturbed-lattice",
            Generator::Bernoulli => "bernoulli",
            Generator::PoissonVoronoi => "poisson-voronoi",
            Generator::Custom => "custom",
        })
    }
}

impl FromStr for Generator {
    type Err = GeometryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "perturbed-lattice" => Ok(Generator::PerturbedLattice),
            "bernoulli" => Ok(Generator::Bernoulli),
            "poisson-voronoi" => Ok(Generator::PoissonVoronoi),
            "custom" => Ok(Generator::Custom),
            _ => Err(GeometryError::Format(format!("unknown generator `{s}`"))),
        }
    }
}

/// Constants of the disperse-medium conditions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DisperseParams {
    pub delta_min: f64,
    pub r_min: f64,
    pub r_max: f64,
    pub r_0: f64,
    pub strict_r5: bool,
}

impl Default for DisperseParams {
    fn default() -> Self {
        DisperseParams {
            delta_min: 0.05,
            r_min: 0.05,
            r_max: 0.75,
            r_0: 1.0,
            strict_r5: false,
        }
    }
}

impl DisperseParams {
    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.delta_min > 0.0)
            || !(self.r_min > 0.0)
            || self.r_min > self.r_max
            || !(self.r_0 > 0.0)
        {
            return Err(GeometryError::InvalidParameter(format!("{self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grain {
    pub center: [f64; 2],
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Microstructure {
    pub l: f64,
    pub grains: Vec<Grain>,
    pub generator: Generator,
    pub seed: u64,
    pub constraints: DisperseParams,
}

/// Minimum-image offset b - a on the torus of period `l`.
pub fn periodic_delta(a: [f64; 2], b: [f64; 2], l: f64) -> [f64; 2] {
    let wrap = |d: f64| d - l * (d / l).round();
    [wrap(b[0] - a[0]), wrap(b[1] - a[1])]
}

/// Smallest centre distance between grain `a` and any periodic image of `b`
/// (excluding the identical copy when `same`).
pub(crate) fn image_distance(a: [f64; 2], b: [f64; 2], l: f64, same: bool) -> f64 {
    let d = periodic_delta(a, b, l);
    let mut best = f64::INFINITY;
    for sx in -1..=1 {
        for sy in -1..=1 {
            if same && sx == 0 && sy == 0 {
                continue;
            }
            let (dx, dy) = (d[0] + sx as f64 * l, d[1] + sy as f64 * l);
            best = best.min(dx.hypot(dy));
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Rule {
    R2,
    R3,
    R4,
    R5,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub rule: Rule,
    pub grains: Vec<usize>,
    pub location: Option<[f64; 2]>,
}

/// Distance from `p` to the solid phase (zero inside a grain).
pub fn distance_to_solid(micro: &Microstructure, p: [f64; 2]) -> f64 {
    micro
        .grains
        .iter()
        .map(|g| {
            let d = periodic_delta(p, g.center, micro.l);
            (d[0].hypot(d[1]) - g.radius).max(0.0)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Side of the sample grid used for the R5 covering check.
pub(crate) fn r5_samples(l: f64, r_0: f64) -> usize {
    ((4.0 * l / r_0).ceil() as usize).max(64)
}

/// Lists every violated condition among R2-R5 (R5 only in strict mode).
pub fn check_disperse(micro: &Microstructure, c: &DisperseParams) -> Vec<Violation> {
    let mut out = Vec::new();
    let l = micro.l;
    for (k, g) in micro.grains.iter().enumerate() {
        if g.radius < c.r_min {
            out.push(Violation {
                rule: Rule::R2,
                grains: vec![k],
                location: Some(g.center),
            });
        }
        if g.radius > c.r_max {
            out.push(Violation {
                rule: Rule::R4,
                grains: vec![k],
                location: Some(g.center),
            });
        }
    }
    // Gaps are compared with a relative slack of a few ulps so that exact
    // constructions (e.g. a lattice with gap exactly delta_min) pass.
    let slack = 1e-12 * l.max(1.0);
    for a in 0..micro.grains.len() {
        for b in a..micro.grains.len() {
            let (ga, gb) = (micro.grains[a], micro.grains[b]);
            let d = image_distance(ga.center, gb.center, l, a == b);
            if d - ga.radius - gb.radius < c.delta_min - slack {
                out.push(Violation {
                    rule: Rule::R3,
                    grains: vec![a, b],
                    location: Some(ga.center),
                });
            }
        }
    }
    if c.strict_r5 {
        let m = r5_samples(l, c.r_0);
        let s = l / m as f64;
        let mut worst: Option<([f64; 2], f64)> = None;
        for j in 0..m {
            for i in 0..m {
                let p = [(i as f64 + 0.5) * s, (j as f64 + 0.5) * s];
                let d = distance_to_solid(micro, p);
                if d >= c.r_0 && worst.map_or(true, |(_, w)| d > w) {
                    worst = Some((p, d));
                }
            }
        }
        if let Some((p, _)) = worst {
            out.push(Violation {
                rule: Rule::R5,
                grains: vec![],
                location: Some(p),
            });
        }
    }
    out
}

impl Microstructure {
    pub fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        self.write_tagged(w, None)
    }

    /// Like `write_to`, with an optional `config_hash=` header token.
    pub fn write_tagged(&self, w: &mut impl Write, hash: Option<&str>) -> std::io::Result<()> {
        write!(
            w,
            "EKMICRO1 L={:?} generator={} seed={}",
            self.l, self.generator, self.seed
        )?;
        match hash {
            Some(h) => writeln!(w, " config_hash={h}")?,
            None => writeln!(w)?,
        }
        for g in &self.grains {
            writeln!(w, "{:?} {:?} {:?}", g.center[0], g.center[1], g.radius)?;
        }
        Ok(())
    }

    pub fn read_from(r: impl BufRead, constraints: DisperseParams) -> Result<Self, GeometryError> {
        let bad = |m: String| GeometryError::Format(m);
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| bad("empty file".into()))?
            .map_err(|e| bad(e.to_string()))?;
        let mut toks = header.split_whitespace();
        if toks.next() != Some("EKMICRO1") {
            return Err(bad("missing EKMICRO1 magic".into()));
        }
        let (mut l, mut generator, mut seed) = (None, None, None);
        for tok in toks {
            match tok.split_once('=') {
                Some(("L", v)) => l = v.parse::<f64>().ok(),
                Some(("generator", v)) => generator = Some(v.parse::<Generator>()?),
                Some(("seed", v)) => seed = v.parse::<u64>().ok(),
                Some(("config_hash", _)) => {}
                _ => return Err(bad(format!("unexpected header token `{tok}`"))),
            }
        }
        let (Some(l), Some(generator), Some(seed)) = (l, generator, seed) else {
            return Err(bad("incomplete header".into()));
        };
        let mut grains = Vec::new();
        for (k, line) in lines.enumerate() {
            let line = line.map_err(|e| bad(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let v: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| bad(format!("line {}: {e}", k + 2)))?;
            if v.len() != 3 {
                return Err(bad(format!("line {}: expected `cx cy r`", k + 2)));
            }
            grains.push(Grain {
                center: [v[0], v[1]],
                radius: v[2],
            });
        }
        Ok(Microstructure {
            l,
            grains,
            generator,
            seed,
            constraints,
        })
    }

    /// Solid area fraction of the exact disks (no overlaps by R3).
    pub fn solid_fraction(&self) -> f64 {
        self.grains
            .iter()
            .map(|g| std::f64::consts::PI * g.radius * g.radius)
            .sum::<f64>()
            / (self.l * self.l)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn micro(grains: Vec<Grain>, l: f64) -> Microstructure {
        Microstructure {
            l,
            grains,
            generator: Generator::Custom,
            seed: 0,
            constraints: DisperseParams::default(),
        }
    }

    #[test]
    fn touching_disks_violate_r3() {
        let m = micro(
            vec![
                Grain {
                    center: [1.0, 1.0],
                    radius: 0.5,
                },
                Grain {
                    center: [2.0, 1.0],
                    radius: 0.5,
                },
            ],
            4.0,
        );
        let v = check_disperse(&m, &m.constraints);
        assert!(v
            .iter()
            .any(|v| v.rule == Rule::R3 && v.grains == vec![0, 1]));
    }

    #[test]
    fn oversized_disk_violates_r4() {
        let c = DisperseParams::default();
        let m = micro(
            vec![Grain {
                center: [2.0, 2.0],
                radius: c.r_max + 0.1,
            }],
            4.0,
        );
        let v = check_disperse(&m, &c);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].rule, Rule::R4);
    }

    #[test]
    fn gap_across_periodic_seam() {
        let m = micro(
            vec![
                Grain {
                    center: [0.2, 1.0],
                    radius: 0.3,
                },
                Grain {
                    center: [3.85, 1.0],
                    radius: 0.3,
                },
            ],
            4.0,
        );
        let v = check_disperse(&m, &m.constraints);
        assert!(v.iter().any(|v| v.rule == Rule::R3));
    }

    #[test]
    fn empty_square_violates_r5() {
        let c = DisperseParams {
            strict_r5: true,
            ..Default::default()
        };
        // grains only along two edges of a 6 x 6 cell leave a large empty square
        let grains = (0..6)
            .map(|k| Grain {
                center: [k as f64 + 0.5, 0.5],
                radius: 0.3,
            })
            .chain((1..6).map(|k| Grain {
                center: [0.5, k as f64 + 0.5],
                radius: 0.3,
            }))
            .collect();
        let m = micro(grains, 6.0);
        let v = check_disperse(&m, &c);
        let r5: Vec<_> = v.iter().filter(|v| v.rule == Rule::R5).collect();
        assert_eq!(r5.len(), 1);
        let p = r5[0].location.unwrap();
        assert!(distance_to_solid(&m, p) >= c.r_0);
    }

    #[test]
    fn file_round_trip_is_exact() {
        let m = micro(
            vec![Grain {
                center: [0.1 + 0.2, 1.0 / 3.0],
                radius: std::f64::consts::FRAC_1_PI,
            }],
            2.0,
        );
        let mut buf = Vec::new();
        m.write_to(&mut buf).unwrap();
        let back = Microstructure::read_from(buf.as_slice(), m.constraints).unwrap();
        assert_eq!(back, m);
    }
}
