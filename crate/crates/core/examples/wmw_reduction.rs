//! Weighted Max-Weight runs coincide with plain Max-Weight on rescaled queues.

use mwlab::arrivals::ArrivalSpec;
use mwlab::experiments::{wmw_equivalence_check, NetworkRef, WmwConfig};
use mwlab::netmodel::instances;

fn main() -> mwlab::Result<()> {
    let net = instances::with_weights(&instances::e2(), vec![4.0, 1.0]);
    let (mw, tr) = net.wmw_to_mw();
    println!("transformed routing {:?}", mw.routing());
    println!("(3,1) maps to {:?}", tr.forward(&[3.0, 1.0]));

    let cfg = WmwConfig {
        network: NetworkRef::from(&net),
        arrivals: ArrivalSpec::iid(vec![0.3, 0.3], 1.0),
        q0: Some(vec![3.0, 1.0]),
        steps: 10_000,
        seed: 11,
    };
    let rep = wmw_equivalence_check(&net, &cfg)?;
    println!("{} steps, max discrepancy {:e}, ok {}", rep.steps, rep.max_discrepancy, rep.ok);
    Ok(())
}
