//! Checks the bound on the W1 distance between two first-arrival laws with
//! piecewise-constant rates.

use psgd::metrics::{lemma_wasserstein_bound_check, LemmaConstants, PiecewiseRate};
use psgd::sampler::RngStream;

fn main() -> psgd::Result<()> {
    let mut rng = RngStream::new(5);
    let cases = [
        (PiecewiseRate::constant(1.0)?, PiecewiseRate::constant(2.0)?),
        (
            PiecewiseRate::new(vec![0.5, 1.0], vec![1.0, 3.0, 2.0])?,
            PiecewiseRate::new(vec![0.5, 1.0], vec![1.5, 2.0, 2.5])?,
        ),
        (
            PiecewiseRate::new(vec![0.25], vec![0.5, 4.0])?,
            PiecewiseRate::new(vec![0.25], vec![4.0, 0.5])?,
        ),
    ];
    for (f1, f2) in &cases {
        let constants = LemmaConstants::tightest(f1, f2)?;
        let check = lemma_wasserstein_bound_check(f1, f2, constants, 200_000, &mut rng)?;
        println!(
            "W1 = {:.4} +/- {:.4}   bound = {:.4}   {}",
            check.measured,
            check.std_err,
            check.bound,
            if check.passed { "ok" } else { "VIOLATED" }
        );
    }
    Ok(())
}
