//! Monte Carlo check of the f-tail bound for Bernoulli arrivals, next to the
//! exact walk probability.

use mwlab::arrivals::ArrivalSpec;
use mwlab::experiments::{bernoulli_walk_tail, ftail_experiment, FTailConfig};

fn main() -> mwlab::Result<()> {
    let cfg = FTailConfig {
        arrivals: ArrivalSpec::iid(vec![0.5], 1.0),
        delta: 0.3,
        beta: 1.0,
        f: None,
        r_grid: vec![20.0, 50.0, 100.0],
        replications: 5000,
        seed: 12,
    };
    let rep = ftail_experiment(&cfg)?;
    for row in &rep.rows {
        let exact = bernoulli_walk_tail(0.5, row.r as usize, cfg.delta * row.r);
        println!(
            "r = {:>3}: f {:.3e}, P_hat {:.4}, f P_hat {:.3e} (upper {:.3e}), exact f P {:.3e}",
            row.r, row.f, row.probability.estimate, row.product, row.product_upper, row.f * exact
        );
    }
    println!("non-increasing: {}", rep.non_increasing);
    Ok(())
}
