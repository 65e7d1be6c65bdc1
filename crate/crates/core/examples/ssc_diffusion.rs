//! State-space collapse under diffusion scaling g(r) = r^2 at heavy traffic.

use mwlab::arrivals::ArrivalSpec;
use mwlab::experiments::{ssc_experiment, NetworkRef, Q0Rule, ScalingSpec, SscConfig};
use mwlab::netmodel::instances;

fn main() -> mwlab::Result<()> {
    let net = instances::e1();
    let cfg = SscConfig {
        network: NetworkRef::from(&net),
        arrivals: ArrivalSpec::IidBounded {
            lambda: vec![0.5, 0.5],
            a: 1.0,
            approach: 1.0,
        },
        scaling: ScalingSpec::diffusion(vec![10.0, 20.0, 40.0], 1.0),
        delta: 0.5,
        q0: Q0Rule::ProjectedPerturbed { q0: vec![1.0, 1.0] },
        replications: 100,
        seed: 8,
        f: None,
    };
    let rep = ssc_experiment(&net, &cfg, false)?;
    for row in &rep.rows {
        let p = &row.probability;
        println!(
            "r = {:>3} ({} steps): P_hat {:.3} [{:.3}, {:.3}], mean sup distance {:.4}",
            row.r, row.steps, p.estimate, p.lower, p.upper, row.mean_sup_distance
        );
    }
    println!("{:?}", rep.trend);
    Ok(())
}
