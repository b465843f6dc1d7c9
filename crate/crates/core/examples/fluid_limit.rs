//! Fluid limit of Example 1: the last queue grows like (mu_1 - mu_K) t while
//! the arrivals last, then drains.

use tnet::fluid::{crossing_times, fluid_solve};
use tnet::scenarios;

fn main() -> tnet::Result<()> {
    let spec = scenarios::load("example1")?;
    let fluid = fluid_solve(&spec)?;
    let q = fluid.queue();
    let grid = *fluid.grid();
    for t in [0.25, 0.5, 1.0, 1.5, 2.0, 2.5] {
        let i = grid.nearest_index(t);
        println!("t = {t:.2}: Qbar = {:?}", q.column(i).iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>());
    }
    for c in crossing_times(&spec)? {
        println!("node {}: tau1' = {:?}, tau2' = {:?}, emptying = {:?}", c.node, c.tau1p, c.tau2p, c.emptying);
    }
    Ok(())
}
