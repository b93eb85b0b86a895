use super::{periodic_delta, GeometryError, Microstructure};
use crate::grid::{FluidGrid, Topology, NONE};

/// Cell-centre sampling of the grains on an n x n periodic grid. Surface
/// weights are rescaled per grain so that they sum to the exact perimeter.
pub fn voxelize(micro: &Microstructure, n: usize) -> Result<FluidGrid, GeometryError> {
    if n < 32 {
        return Err(GeometryError::InvalidParameter(format!("n = {n} < 32")));
    }
    let l = micro.l;
    let h = l / n as f64;
    let limit = micro.constraints.delta_min / 4.0;
    if h > limit {
        return Err(GeometryError::ResolutionTooCoarse { h, limit });
    }
    let mut fluid = vec![true; n * n];
    let mut owner = vec![NONE; n * n];
    for (k, g) in micro.grains.iter().enumerate() {
        let span = (g.radius / h).ceil() as isize + 1;
        let ci = (g.center[0] / h - 0.5).round() as isize;
        let cj = (g.center[1] / h - 0.5).round() as isize;
        for dj in -span..=span {
            for di in -span..=span {
                let i = (ci + di).rem_euclid(n as isize) as usize;
                let j = (cj + dj).rem_euclid(n as isize) as usize;
                let p = [(i as f64 + 0.5) * h, (j as f64 + 0.5) * h];
                let d = periodic_delta(p, g.center, l);
                if d[0] * d[0] + d[1] * d[1] < g.radius * g.radius && owner[j * n + i] == NONE {
                    fluid[j * n + i] = false;
                    owner[j * n + i] = k as u32;
                }
            }
        }
    }
    let mut grid = FluidGrid::from_mask(n, n, h, Topology::Periodic, fluid, owner);
    if !grid.is_connected() {
        return Err(GeometryError::DisconnectedFluid);
    }
    rescale_weights(&mut grid, |k| {
        2.0 * std::f64::consts::PI * micro.grains[k].radius
    });
    Ok(grid)
}

/// Gives every surface face of grain k the weight perimeter(k) / face count.
pub(crate) fn rescale_weights(grid: &mut FluidGrid, perimeter: impl Fn(usize) -> f64) {
    let mut count = vec![0usize; grid.n_grains()];
    for b in grid.boundary_faces() {
        count[b.grain] += 1;
    }
    for b in grid.boundary_faces_mut() {
        b.weight = perimeter(b.grain) / count[b.grain] as f64;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{DisperseParams, Generator, Grain};

    fn single(r: f64) -> Microstructure {
        Microstructure {
            l: 1.0,
            grains: vec![Grain {
                center: [0.5, 0.5],
                radius: r,
            }],
            generator: Generator::Custom,
            seed: 0,
            constraints: DisperseParams::default(),
        }
    }

    #[test]
    fn no_grains_all_fluid() {
        let mut m = single(0.1);
        m.grains.clear();
        let g = voxelize(&m, 128).unwrap();
        assert_eq!(g.fluid_count(), 128 * 128);
        assert!(g.boundary_faces().is_empty());
    }

    #[test]
    fn disk_area_and_perimeter() {
        let g = voxelize(&single(0.25), 256).unwrap();
        let solid = 1.0 - g.porosity();
        let exact = std::f64::consts::PI / 16.0;
        assert!((solid - exact).abs() < 0.01 * exact);
        let w = g.perimeter_weights();
        let p = 2.0 * std::f64::consts::PI * 0.25;
        assert!((w[0] - p).abs() < 1e-12 * p);
    }

    #[test]
    fn coarse_grid_rejected() {
        assert!(matches!(
            voxelize(&single(0.25), 32),
            Err(GeometryError::ResolutionTooCoarse { .. })
        ));
    }
}
