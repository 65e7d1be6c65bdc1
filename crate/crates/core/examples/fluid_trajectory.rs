//! Exact piecewise-linear fluid paths, with the drift certificate at the start.

use mwlab::fluid::{fluid_drift, integrate_fluid, potential};
use mwlab::netmodel::instances;

fn main() -> mwlab::Result<()> {
    let net = instances::e2();
    let lambda = [0.3, 0.2];
    let q0 = [4.0, 1.0];

    let cert = fluid_drift(&net, &lambda, &q0)?;
    println!("drift at {q0:?}: {:?}", cert.drift);
    println!("  active actions {:?}, weights {:?}", cert.active, cert.coefficients);

    let traj = integrate_fluid(&net, &lambda, &q0, 50.0)?;
    for (t, q) in traj.times.iter().zip(&traj.states) {
        let phi = potential(&net, &lambda, q).lambda_value;
        println!("t = {t:>9.5}  q = [{:.5}, {:.5}]  potential {phi:.5}", q[0], q[1]);
    }
    match traj.absorption_time() {
        Some(t) => println!("absorbed at t = {t:.6}"),
        None => println!("still moving at t = {}", traj.end_time()),
    }
    print!("{}", traj.to_csv().render());
    Ok(())
}
