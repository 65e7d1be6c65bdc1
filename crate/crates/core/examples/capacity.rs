//! Capacity classification and the collapse direction at boundary loads.

use mwlab::fluid::{capacity_check, collapse_direction};
use mwlab::netmodel::instances;
use mwlab::Error;

fn main() -> mwlab::Result<()> {
    for (name, net) in [("e1", instances::e1()), ("e2", instances::e2())] {
        for lambda in [[0.3, 0.3], [0.5, 0.5], [0.5, 0.0], [0.25, 0.25], [0.8, 0.1]] {
            let class = capacity_check(&net, &lambda)?;
            let collapse = match collapse_direction(&net, &lambda) {
                Ok(v) => format!("collapse {v:?}"),
                Err(Error::ExtremePoint(_)) => "extreme point".into(),
                Err(e) => format!("({e})"),
            };
            println!("{name} lambda = {lambda:?}: {class:?}, {collapse}");
        }
    }
    Ok(())
}
