//! Max-Weight decisions and a short hand-checkable run on the two-queue
//! single-hop switch.

use mwlab::arrivals::{generate, ArrivalSpec};
use mwlab::netmodel::{instances, simulate};

fn main() -> mwlab::Result<()> {
    let net = instances::e1();
    println!("closed action set: {:?}", net.actions());

    for q in [[3.0, 1.0], [2.0, 2.0], [0.0, 4.0]] {
        let d = net.schedule(&q);
        println!(
            "q = {q:?}: serve {:?} (objective {}, tied {:?})",
            net.actions()[d.chosen],
            d.objective,
            d.tied
        );
    }

    let arrivals = generate(&ArrivalSpec::constant(vec![0.5, 0.5]), 1.0, 6, 0)?;
    let run = simulate(&net, &[3.0, 1.0], &arrivals);
    for (k, q) in run.states.iter().enumerate() {
        println!("Q({k}) = {q:?}");
    }

    // tandem pair: work served at queue 1 moves on to queue 2
    let tandem = instances::e2();
    println!("tandem step from (1,1): {:?}", tandem.step(&[1.0, 1.0], &[0.0, 0.0]));
    Ok(())
}
