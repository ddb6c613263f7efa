//! Poisson SGD against plain SGD on the two-dimensional double well,
//! started next to the local minimum at (-3, 0).

use psgd::baselines::{run_sgd, SgdConfig};
use psgd::objective::{empirical_risk, DoubleWell2d, Objective};
use psgd::sampler::trial_seed;
use psgd::poisson_sgd::run_poisson_sgd_with;
use psgd::PoissonSgdConfig;

fn main() -> psgd::Result<()> {
    let obj = DoubleWell2d::with_default_domain();
    let start = vec![-3.1, 0.2];
    let seeds = 20;

    let sgd_end = run_sgd(&obj, &SgdConfig::sgd(1e-3, 50_000, start.clone(), 0))?;
    println!(
        "sgd          ends at ({:.3}, {:.3}), loss {:.1}",
        sgd_end.coords()[0],
        sgd_end.coords()[1],
        empirical_risk(&obj, sgd_end.coords())?
    );

    let mut global = 0;
    for s in 0..seeds {
        let cfg = PoissonSgdConfig::new(0.05, 1.0, 50_000, start.clone(), vec![1.0, 0.0], trial_seed(7, s));
        let mut visits = 0u64;
        let end = run_poisson_sgd_with(&obj, &cfg, |state, _, _| {
            if state.theta.coords()[0] > 1.0 {
                visits += 1;
            }
            Ok(())
        })?;
        let x = end.theta.coords();
        let in_global = obj.domain().distance(x, &[6.0, 0.0])? < obj.domain().distance(x, &[-3.0, 0.0])?;
        global += in_global as usize;
        println!(
            "poisson_sgd  seed {s:2} ends at ({:7.3}, {:7.3})  global basin: {in_global:5}  steps right of x=1: {visits}",
            x[0], x[1]
        );
    }
    println!("poisson_sgd reached the global basin in {global}/{seeds} runs");
    Ok(())
}
