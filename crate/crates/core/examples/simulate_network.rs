//! Simulates Example 1 at n = 10⁴ jobs, checks the conservation laws on the
//! event log and compares the fluid-scaled queue with the fluid limit.

use tnet::fluid::fluid_solve;
use tnet::scenarios;
use tnet::simulator::{fluid_scale, simulate};
use tnet::stochastic::RngStream;

fn main() -> tnet::Result<()> {
    let spec = scenarios::load("example1")?;
    let n = 10_000;
    let traj = simulate(&spec, n, &RngStream::new(7))?;
    traj.check_all()?;
    let fluid = fluid_solve(&spec)?;
    let dist = fluid_scale(&traj).sup_distance(fluid.queue())?;
    println!("n = {n}, exits = {:?}", traj.exits);
    for (k, d) in dist.iter().enumerate() {
        println!("node {}: sup |Q_n/n - Qbar| = {d:.4}", k + 1);
    }
    Ok(())
}
