//! The entropy balance as a convergence probe. For the pair e(n) = n^m/m,
//! z' (a matched pressure-side potential), and weight eta(t) = t, the
//! continuous dynamics satisfies an exact space-time identity: the
//! weighted change of total entropy equals a dissipation integral plus a
//! growth term. The discrete residual of that identity is pure scheme
//! error, so halving (dx, dt) together should cut it roughly in half for
//! a first-order method.
//!
//! Two practical notes baked into this setup. The residual is assembled
//! from snapshots, so snapshots are taken densely (513) to keep the
//! time-quadrature error of the assembly itself below the scheme error
//! being measured. And the initial data is strictly positive: near vacuum
//! the entropy density loses smoothness and a fixed error floor from the
//! degenerate front would mask the refinement trend.

use std::f64::consts::PI;

use phenoflow::diagnostics::{energy_evolution_residual, TestFunction};
use phenoflow::dynamics::run;
use phenoflow::grid::{Field, SpatialGrid};
use phenoflow::model::{EntropyPair, GrowthLaw, MultiState, PhenotypeSet, SimParams};

fn main() -> phenoflow::Result<()> {
    let law = GrowthLaw::linear(1.0, 1.0, 1.0)?;
    let pair = EntropyPair::dissipation_default(10.0)?;
    let eta = TestFunction::time_ramp();

    println!("{:>8} {:>10} {:>14} {:>8}", "points", "max dt", "residual", "ratio");
    let mut previous = None;
    for (points, max_dt) in [(128usize, 4e-4), (256, 2e-4), (512, 1e-4)] {
        let grid = SpatialGrid::new(1, points, 10.0)?;
        let set = PhenotypeSet::new(4)?;
        let densities: Vec<Field> = set
            .traits()
            .iter()
            .map(|&a| {
                Field::from_fn(grid, |x| {
                    0.4 + 0.05 * (1.0 + 0.4 * (a - 0.625)) * (2.0 * PI * x[0] / 10.0).cos()
                })
            })
            .collect::<Result<_, _>>()?;
        let state = MultiState::new(set, densities, 0.0)?;
        let params = SimParams::new(10.0, 1e-2, 0.5, 0.4, max_dt)?;
        let times: Vec<f64> = (0..513).map(|j| 0.5 * j as f64 / 512.0).collect();

        let traj = run(&state, &params, &law, &times)?;
        let residual = energy_evolution_residual(&traj, &pair, &eta)?;
        match previous {
            None => println!("{points:>8} {max_dt:>10.0e} {residual:>14.6e} {:>8}", "-"),
            Some(prev) => {
                println!("{points:>8} {max_dt:>10.0e} {residual:>14.6e} {:>8.2}", prev / residual)
            }
        }
        previous = Some(residual);
    }
    println!("\nratios near 2 confirm the identity holds up to first-order scheme error.");
    Ok(())
}
