//! Plain SGD and SGLD on the two-dimensional double well.

use psgd::baselines::{run_sgd, SgdConfig};
use psgd::objective::{empirical_risk, DoubleWell2d};

fn main() -> psgd::Result<()> {
    let obj = DoubleWell2d::with_default_domain();
    for (label, cfg) in [
        ("sgd", SgdConfig::sgd(1e-3, 20_000, vec![-3.1, 0.2], 1)),
        ("sgd from x=2", SgdConfig::sgd(1e-3, 20_000, vec![2.0, 1.0], 1)),
        ("sgld T=5", SgdConfig::sgd(1e-3, 20_000, vec![-3.1, 0.2], 1).langevin(5.0)),
        ("sgld T=50", SgdConfig::sgd(1e-3, 20_000, vec![-3.1, 0.2], 1).langevin(50.0)),
    ] {
        let end = run_sgd(&obj, &cfg)?;
        let x = end.coords();
        println!("{label:<14} -> ({:7.3}, {:7.3})  loss {:8.2}", x[0], x[1], empirical_risk(&obj, x)?);
    }
    Ok(())
}
