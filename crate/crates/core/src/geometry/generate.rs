//! The three random generators. Each lattice site or Poisson point draws
//! from its own ChaCha8 stream so results do not depend on evaluation order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use super::{image_distance, DisperseParams, Generator, GeometryError, Grain, Microstructure};

const GLOBAL_STREAM: u64 = u64::MAX;
const COUNT_STREAM: u64 = u64::MAX - 1;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn wrap(x: f64, l: f64) -> f64 {
    let w = x.rem_euclid(l);
    // rem_euclid can round up to exactly l for tiny negative inputs
    if w >= l {
        0.0
    } else {
        w
    }
}

/// Shrinks grains whose surface gap to a neighbour is below `delta_min`.
/// Each grain is scaled by the smallest factor (d - delta_min) / (r_a + r_b)
/// over its close pairs, all at once, so the result does not depend on the
/// pair order and every gap ends up at least `delta_min`.
pub(crate) fn clamp_gaps(
    grains: &mut [Grain],
    l: f64,
    c: &DisperseParams,
) -> Result<(), GeometryError> {
    let mut scale = vec![1.0f64; grains.len()];
    for a in 0..grains.len() {
        for b in a..grains.len() {
            let d = image_distance(grains[a].center, grains[b].center, l, a == b);
            let sum = if a == b {
                2.0 * grains[a].radius
            } else {
                grains[a].radius + grains[b].radius
            };
            if d - sum < c.delta_min {
                let s = (d - c.delta_min) / sum;
                if s <= 0.0 {
                    return Err(GeometryError::InfeasibleConstraints {
                        grain: a,
                        radius: 0.0,
                    });
                }
                scale[a] = scale[a].min(s);
                scale[b] = scale[b].min(s);
            }
        }
    }
    for (g, s) in grains.iter_mut().zip(&scale) {
        g.radius *= s;
    }
    for (k, g) in grains.iter().enumerate() {
        if g.radius < c.r_min {
            return Err(GeometryError::InfeasibleConstraints {
                grain: k,
                radius: g.radius,
            });
        }
    }
    Ok(())
}

fn lattice_shift(seed: u64) -> [f64; 2] {
    let mut rng = stream(seed, GLOBAL_STREAM);
    [rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)]
}

/// Example 1: grains at j + zeta_j + eta with i.i.d. perturbations and radii.
pub fn generate_perturbed_lattice(
    l: usize,
    amplitude: f64,
    radius_range: (f64, f64),
    seed: u64,
    c: &DisperseParams,
) -> Result<Microstructure, GeometryError> {
    c.validate()?;
    if l == 0
        || !(0.0..=0.5).contains(&amplitude)
        || !(radius_range.0 > 0.0)
        || radius_range.0 > radius_range.1
    {
        return Err(GeometryError::InvalidParameter(format!(
            "L={l}, amplitude={amplitude}, radius_range={radius_range:?}"
        )));
    }
    let lf = l as f64;
    let eta = lattice_shift(seed);
    let mut grains = Vec::with_capacity(l * l);
    for j1 in 0..l {
        for j0 in 0..l {
            let mut rng = stream(seed, (j1 * l + j0) as u64);
            let zeta = if amplitude > 0.0 {
                [
                    rng.gen_range(-amplitude..=amplitude),
                    rng.gen_range(-amplitude..=amplitude),
                ]
            } else {
                [0.0, 0.0]
            };
            let radius = if radius_range.0 < radius_range.1 {
                rng.gen_range(radius_range.0..=radius_range.1)
            } else {
                radius_range.0
            };
            let center = [
                wrap(j0 as f64 + zeta[0] + eta[0], lf),
                wrap(j1 as f64 + zeta[1] + eta[1], lf),
            ];
            grains.push(Grain { center, radius });
        }
    }
    clamp_gaps(&mut grains, lf, c)?;
    Ok(Microstructure {
        l: lf,
        grains,
        generator: Generator::PerturbedLattice,
        seed,
        constraints: *c,
    })
}

/// Example 2: each lattice site carries a disk of radius 1/2 with probability
/// `p_open`, else 1/4, all shrunk by (1 - gap_fraction).
pub fn generate_bernoulli(
    l: usize,
    p_open: f64,
    gap_fraction: f64,
    seed: u64,
    c: &DisperseParams,
) -> Result<Microstructure, GeometryError> {
    c.validate()?;
    if l == 0 || !(0.0..=1.0).contains(&p_open) || !(0.0..1.0).contains(&gap_fraction) {
        return Err(GeometryError::InvalidParameter(format!(
            "L={l}, p_open={p_open}, gap_fraction={gap_fraction}"
        )));
    }
    let lf = l as f64;
    let eta = lattice_shift(seed);
    let shrink = 1.0 - gap_fraction;
    let mut grains = Vec::with_capacity(l * l);
    for j1 in 0..l {
        for j0 in 0..l {
            let mut rng = stream(seed, (j1 * l + j0) as u64);
            let open = rng.gen::<f64>() < p_open;
            let radius = if open { 0.5 } else { 0.25 } * shrink;
            let center = [wrap(j0 as f64 + eta[0], lf), wrap(j1 as f64 + eta[1], lf)];
            grains.push(Grain { center, radius });
        }
    }
    Ok(Microstructure {
        l: lf,
        grains,
        generator: Generator::Bernoulli,
        seed,
        constraints: *c,
    })
}

/// Example 3: Poisson points of the given intensity; a disk of radius `r` is
/// kept at a point iff it fits in that point's Voronoi cell. Kept disks closer
/// than delta_min are clamped like the lattice example. With strict R5 the
/// remaining large holes are filled from a regular grid of candidate sites.
pub fn generate_poisson_voronoi(
    l: f64,
    intensity: f64,
    r: f64,
    seed: u64,
    c: &DisperseParams,
) -> Result<Microstructure, GeometryError> {
    c.validate()?;
    if !(l > 0.0) || !(intensity > 0.0) || !(r > 0.0) {
        return Err(GeometryError::InvalidParameter(format!(
            "L={l}, intensity={intensity}, r={r}"
        )));
    }
    let mean = intensity * l * l;
    let count = Poisson::new(mean)
        .map_err(|e| GeometryError::InvalidParameter(e.to_string()))?
        .sample(&mut stream(seed, COUNT_STREAM)) as usize;
    let points: Vec<[f64; 2]> = (0..count)
        .map(|k| {
            let mut rng = stream(seed, k as u64);
            [rng.gen_range(0.0..l), rng.gen_range(0.0..l)]
        })
        .collect();
    let mut grains: Vec<Grain> = points
        .iter()
        .enumerate()
        .filter(|&(k, p)| {
            let nn = points
                .iter()
                .enumerate()
                .filter(|&(q, _)| q != k)
                .map(|(_, o)| image_distance(*p, *o, l, false))
                .fold(f64::INFINITY, f64::min);
            r <= 0.5 * nn
        })
        .map(|(_, p)| Grain {
            center: *p,
            radius: r,
        })
        .collect();
    clamp_gaps(&mut grains, l, c)?;
    if c.strict_r5 {
        fill_holes(&mut grains, l, r, c);
    }
    Ok(Microstructure {
        l,
        grains,
        generator: Generator::PoissonVoronoi,
        seed,
        constraints: *c,
    })
}

/// Repeatedly places a disk of radius `r` at the sample point farthest from
/// the solid while that distance is at least r_0. The sample grid is the one
/// used by the R5 check. A new disk keeps a gap of at least r_0 - r to the
/// existing solid.
fn fill_holes(grains: &mut Vec<Grain>, l: f64, r: f64, c: &DisperseParams) {
    if c.r_0 - r < c.delta_min || l - 2.0 * r < c.delta_min {
        return;
    }
    let m = super::r5_samples(l, c.r_0);
    let s = l / m as f64;
    let pts: Vec<[f64; 2]> = (0..m * m)
        .map(|k| [((k % m) as f64 + 0.5) * s, ((k / m) as f64 + 0.5) * s])
        .collect();
    let solid_dist = |p: [f64; 2], g: &Grain| {
        let d = super::periodic_delta(p, g.center, l);
        (d[0].hypot(d[1]) - g.radius).max(0.0)
    };
    let mut dist: Vec<f64> = pts
        .iter()
        .map(|&p| {
            grains
                .iter()
                .map(|g| solid_dist(p, g))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    loop {
        let (k, &d) = dist
            .iter()
            .enumerate()
            .fold((0, &f64::NEG_INFINITY), |best, cur| {
                if cur.1 > best.1 {
                    cur
                } else {
                    best
                }
            });
        if d < c.r_0 {
            break;
        }
        let g = Grain {
            center: pts[k],
            radius: r,
        };
        for (dv, &p) in dist.iter_mut().zip(&pts) {
            *dv = dv.min(solid_dist(p, &g));
        }
        grains.push(g);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{check_disperse, Rule};

    #[test]
    fn zero_perturbation_is_lattice() {
        let c = DisperseParams::default();
        let m = generate_perturbed_lattice(4, 0.0, (0.45, 0.45), 7, &c).unwrap();
        assert_eq!(m.grains.len(), 16);
        let base = m.grains[0].center;
        for (k, g) in m.grains.iter().enumerate() {
            assert_eq!(g.radius, 0.45);
            let expect = [
                (base[0] + (k % 4) as f64).rem_euclid(4.0),
                (base[1] + (k / 4) as f64).rem_euclid(4.0),
            ];
            assert!(
                (g.center[0] - expect[0]).abs() < 1e-12 && (g.center[1] - expect[1]).abs() < 1e-12
            );
        }
    }

    #[test]
    fn touching_lattice_is_clamped() {
        let c = DisperseParams::default();
        let m = generate_perturbed_lattice(4, 0.0, (0.5, 0.5), 3, &c).unwrap();
        for g in &m.grains {
            assert!((g.radius - 0.475).abs() < 1e-12);
        }
        assert!(check_disperse(&m, &c).is_empty());
    }

    #[test]
    fn bernoulli_extremes() {
        let c = DisperseParams::default();
        let all = generate_bernoulli(3, 1.0, 0.05, 1, &c).unwrap();
        assert!(all.grains.iter().all(|g| g.radius == 0.5 * 0.95));
        let none = generate_bernoulli(3, 0.0, 0.05, 1, &c).unwrap();
        assert!(none.grains.iter().all(|g| g.radius == 0.25 * 0.95));
        assert!(check_disperse(&none, &c).is_empty());
        assert!(check_disperse(&all, &c).is_empty());
    }

    #[test]
    fn poisson_rejects_large_radius() {
        let c = DisperseParams {
            r_max: 10.0,
            ..Default::default()
        };
        let m = generate_poisson_voronoi(4.0, 1.0, 5.0, 11, &c).unwrap();
        assert!(m.grains.is_empty());
    }

    #[test]
    fn strict_fill_satisfies_r5() {
        let c = DisperseParams {
            strict_r5: true,
            ..Default::default()
        };
        let m = generate_poisson_voronoi(8.0, 0.3, 0.3, 5, &c).unwrap();
        let v = check_disperse(&m, &c);
        assert!(!v.iter().any(|v| v.rule == Rule::R5), "{v:?}");
        assert!(v.is_empty(), "{v:?}");
    }
}
