//! Collapse on an exponential time scale, with the rate chosen from the
//! measured attraction rate and sensitivity constant.

use mwlab::arrivals::ArrivalSpec;
use mwlab::experiments::{
    exponential_rate, sensitivity_experiment, ssc_experiment, NetworkRef, Q0Rule, ScalingSpec,
    SensitivityConfig, SscConfig,
};
use mwlab::fluid::attraction_rate;
use mwlab::netmodel::instances;

fn main() -> mwlab::Result<()> {
    let net = instances::e1();
    let lambda = vec![0.5, 0.5];
    let starts = vec![vec![3.0, 1.0], vec![0.0, 2.0], vec![1.0, 4.0]];
    let alpha = attraction_rate(&net, &lambda, &starts, 20.0)?.alpha_hat;

    let sens = sensitivity_experiment(
        &net,
        &SensitivityConfig {
            network: NetworkRef::from(&net),
            arrivals: ArrivalSpec::iid(vec![0.45, 0.45], 1.0),
            q0: vec![3.0, 1.0],
            horizons: vec![1000, 10000],
            replications: 100,
            seed: 6,
        },
    )?;
    let gamma = exponential_rate(0.5, alpha, sens.c_hat(), 2, 1.0, 0.5);
    println!("alpha_hat {alpha:.4}, C_hat {:.4}, gamma {gamma:.4}", sens.c_hat());

    let cfg = SscConfig {
        network: NetworkRef::from(&net),
        arrivals: ArrivalSpec::iid(lambda, 1.0),
        scaling: ScalingSpec::exponential(gamma, vec![40.0, 80.0], 1.0),
        delta: 0.5,
        q0: Q0Rule::ProjectedPerturbed { q0: vec![1.0, 1.0] },
        replications: 100,
        seed: 9,
        f: None,
    };
    let rep = ssc_experiment(&net, &cfg, false)?;
    for row in &rep.rows {
        println!("r = {:>3} ({} steps): P_hat {:.3}", row.r, row.steps, row.probability.estimate);
    }
    Ok(())
}
