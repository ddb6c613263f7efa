//! Distance between the endpoint laws of Poisson SGD and BPS run with matched
//! constants, for shrinking epsilon.

use psgd::bps::{coupled_compare, CouplingSpec};
use psgd::objective::DoubleWell1d;

fn main() -> psgd::Result<()> {
    let obj = DoubleWell1d::with_default_domain();
    println!("{:>8} {:>6} {:>12} {:>10}", "epsilon", "K", "sliced W1", "bound");
    for epsilon in [0.1, 0.03, 0.01, 0.003] {
        let spec = CouplingSpec {
            beta: 0.01,
            epsilon,
            steps: 50,
            trials: 2000,
            batch_size: None,
            c_b: 0.0,
            initial_point: vec![-3.0],
            initial_velocity: vec![1.0],
            seed: 13,
            projections: 1,
        };
        let r = coupled_compare(&obj, &spec)?;
        println!("{epsilon:>8} {:>6} {:>12.5} {:>10.3}", spec.steps, r.distance, r.bound);
    }
    Ok(())
}
