//! The set of fluid fixed points, projections onto it and the attraction
//! rate of nearby fluid paths.

use mwlab::fluid::{attraction_rate, invariant_set};
use mwlab::netmodel::instances;

fn main() -> mwlab::Result<()> {
    let net = instances::e1();
    let lambda = [0.5, 0.5];
    let iset = invariant_set(&net, &lambda)?;
    for h in &iset.poly.halfspaces {
        println!("{:?} . x <= {}", h.normal, h.offset);
    }

    for x in [[3.0, 1.0], [0.0, 2.0], [1.5, 1.5]] {
        let p = iset.project(&x)?;
        println!("{x:?} -> {p:?}, distance {:.6}", iset.distance(&x)?);
    }

    let starts: Vec<Vec<f64>> = (0..8)
        .map(|k| {
            let a = std::f64::consts::FRAC_PI_2 * k as f64 / 7.0;
            vec![4.0 * a.cos(), 4.0 * a.sin()]
        })
        .collect();
    let rep = attraction_rate(&net, &lambda, &starts, 20.0)?;
    println!("alpha_hat = {:.6}", rep.alpha_hat);
    for (q, t) in starts.iter().zip(&rep.absorption_times) {
        println!("  from [{:.3}, {:.3}] reaches the set at {t:?}", q[0], q[1]);
    }
    Ok(())
}
