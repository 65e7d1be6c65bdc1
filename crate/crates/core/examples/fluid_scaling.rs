//! Scaled stochastic paths approach the fluid path as the scale grows.

use mwlab::arrivals::ArrivalSpec;
use mwlab::experiments::{fluid_convergence_experiment, FluidConvergenceConfig, NetworkRef};
use mwlab::netmodel::instances;

fn main() -> mwlab::Result<()> {
    let net = instances::e2();
    let cfg = FluidConvergenceConfig {
        network: NetworkRef::from(&net),
        arrivals: ArrivalSpec::iid(vec![0.3, 0.2], 1.0),
        q0: vec![2.0, 1.0],
        horizon: 5.0,
        r_grid: vec![10.0, 40.0, 160.0, 640.0],
        replications: 50,
        seed: 7,
    };
    let rep = fluid_convergence_experiment(&net, &cfg)?;
    for row in &rep.rows {
        println!(
            "r = {:>5}: mean sup distance {:.5}, max {:.5}",
            row.r, row.mean_sup_distance, row.max_sup_distance
        );
    }
    println!("log-log slope {:.3}", rep.slope);
    Ok(())
}
