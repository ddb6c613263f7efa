//! Normalizes the stationary density of the one-dimensional double well on a
//! grid, writes it as CSV and draws exact samples from it by rejection.
//!
//! Usage: `cargo run --release --example stationary_oracle [out.csv]`

use psgd::metrics::MeanEstimate;
use psgd::objective::{empirical_risk, DoubleWell1d};
use psgd::sampler::RngStream;
use psgd::stationary::{mean_abs_coordinate, normalize_on_grid, sample_stationary_oracle, StationaryDensity};

fn main() -> psgd::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "density.csv".into());
    let obj = DoubleWell1d::with_default_domain();
    let (beta, epsilon) = (0.002, 1.0);

    let density = StationaryDensity::new(&obj, beta, epsilon)?;
    let grid = normalize_on_grid(&density, 128)?;
    grid.save_csv(out.as_ref())?;
    println!("log Z = {:.6} (oversampling {}), written to {out}", grid.log_normalizer(), grid.oversampling());

    let left: f64 = (0..128).filter(|&i| grid.cell_center(i)[0] < 1.5).map(|i| grid.masses()[i]).sum();
    println!("mass left of the barrier: {left:.4}");

    let samples = sample_stationary_oracle(&density, &grid, 50_000, &mut RngStream::new(3))?;
    let losses: Vec<f64> = samples.iter().map(|p| empirical_risk(&obj, p.coords())).collect::<psgd::Result<_>>()?;
    let est = MeanEstimate::from_samples(&losses)?;
    let exact = grid.expectation(|x| empirical_risk(&obj, x).unwrap());
    println!("mean loss: rejection sample {:.3} +/- {:.3}, grid {exact:.3}", est.mean, est.std_err);

    let halved = normalize_on_grid(&density.gradient_weight(0.5 * mean_abs_coordinate(1)?), 128)?;
    let tv: f64 = grid.masses().iter().zip(halved.masses()).map(|(a, b)| (a - b).abs()).sum::<f64>() / 2.0;
    println!("TV between gradient weights 1 and 1/2: {tv:.4}");
    Ok(())
}
