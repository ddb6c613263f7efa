//! Many independent BPS chains on a one-dimensional quadratic bowl, compared
//! bin by bin with the grid-normalized stationary density.

use psgd::bps::{Bps, BpsConfig};
use psgd::metrics::histogram_tv;
use psgd::objective::QuadraticBowl;
use psgd::sampler::trial_seed;
use psgd::stationary::{normalize_on_grid, StationaryDensity};
use rayon::prelude::*;

fn main() -> psgd::Result<()> {
    let obj = QuadraticBowl::centered(1, 10.0)?;
    let (beta, epsilon, chains) = (1.0, 0.1, 20_000u64);
    let density = StationaryDensity::new(&obj, beta, epsilon)?;
    let grid = normalize_on_grid(&density, 64)?;

    for k in [10u64, 100, 1000, 3000] {
        let ends: Vec<Vec<f64>> = (0..chains)
            .into_par_iter()
            .map(|c| {
                let cfg = BpsConfig::coupled(&obj, beta, epsilon, 0.0, k, vec![3.0], vec![1.0], trial_seed(4, c));
                let mut bps = Bps::new(&obj, &cfg)?;
                for _ in 0..k {
                    bps.step()?;
                }
                Ok(bps.into_state().theta.into_vec())
            })
            .collect::<psgd::Result<_>>()?;
        println!("K = {k:5}  TV to stationary density = {:.4}", histogram_tv(&ends, &grid)?);
    }

    println!("\nstationary density (every 4th bin):");
    let peak = grid.masses().iter().cloned().fold(0.0, f64::max);
    for (i, m) in grid.masses().iter().enumerate().step_by(4) {
        let x = grid.cell_center(i)[0];
        println!("{x:6.2} {}", "#".repeat((60.0 * m / peak).round() as usize));
    }
    Ok(())
}
