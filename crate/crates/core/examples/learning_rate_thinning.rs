//! Draws learning rates by Poisson thinning and by inverting the cumulative
//! hazard, and compares the two samples.

use psgd::metrics::{ks_two_sample, wasserstein1_1d};
use psgd::objective::{DoubleWell1d, Objective};
use psgd::sampler::{sample_ray_exponential, sample_ray_exponential_oracle, RayRate, RngStream};

fn main() -> psgd::Result<()> {
    let obj = DoubleWell1d::with_default_domain();
    let (beta, epsilon, n) = (0.01, 0.05, 20_000);
    let base = [-3.5];
    let dir = [1.0];
    let field = |x: &[f64], g: &mut [f64]| obj.sample_gradient(0, x, g);

    let mut rng = RngStream::new(1);
    let mut evaluations = 0;
    let thinned: Vec<f64> = (0..n)
        .map(|_| {
            let mut rate = RayRate::new(obj.domain(), &base, &dir, beta, 1.0 / epsilon, obj.grad_norm_bound(), field)?;
            let eta = sample_ray_exponential(&mut rate, &mut rng);
            evaluations += rate.evaluations();
            eta
        })
        .collect::<psgd::Result<_>>()?;

    let mut rng = RngStream::new(2);
    let inverted: Vec<f64> = (0..n)
        .map(|_| {
            let mut rate = RayRate::new(obj.domain(), &base, &dir, beta, 1.0 / epsilon, obj.grad_norm_bound(), field)?;
            sample_ray_exponential_oracle(&mut rate, &mut rng, 1e-10)
        })
        .collect::<psgd::Result<_>>()?;

    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    println!("thinning:   mean eta {:.5}, gradient evaluations per draw {:.2}", mean(&thinned), evaluations as f64 / n as f64);
    println!("inversion:  mean eta {:.5}", mean(&inverted));
    println!("epsilon (upper bound on the mean): {epsilon}");
    println!("W1 = {:.2e}, two-sample KS = {:.4}", wasserstein1_1d(&thinned, &inverted)?, ks_two_sample(&thinned, &inverted)?);
    Ok(())
}
