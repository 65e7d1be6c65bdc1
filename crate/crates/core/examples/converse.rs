//! Rare large bursts along the collapse direction break state-space collapse.

use mwlab::arrivals::BurstSpec;
use mwlab::experiments::{burst_direction, converse_experiment, ConverseConfig, NetworkRef};
use mwlab::netmodel::instances;

fn main() -> mwlab::Result<()> {
    let net = instances::e1();
    let lambda = vec![0.5, 0.5];
    let geo = burst_direction(&net, &lambda)?;
    println!("v_hat {:?}, w {:?}", geo.v_hat, geo.w);

    for zero_burst in [false, true] {
        let cfg = ConverseConfig {
            network: NetworkRef::from(&net),
            lambda: lambda.clone(),
            burst: BurstSpec {
                zero_burst,
                ..BurstSpec::power_law_default()
            },
            delta: 0.5,
            horizon: 1.0,
            r_grid: vec![5.0, 10.0, 20.0],
            q0: None,
            replications: 100,
            seed: 10,
        };
        let rep = converse_experiment(&net, &cfg, false)?;
        println!("zero burst: {zero_burst}");
        for row in &rep.rows {
            let p = &row.probability;
            println!("  r = {:>3}: P_hat {:.3} [{:.3}, {:.3}]", row.r, p.estimate, p.lower, p.upper);
        }
    }
    Ok(())
}
