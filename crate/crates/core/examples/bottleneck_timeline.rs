//! Monte Carlo bottleneck timeline for Example 2.

use tnet::bottleneck::{bottleneck_timeline, coarse_phases};
use tnet::scenarios;
use tnet::stochastic::RngStream;

fn main() -> tnet::Result<()> {
    let spec = scenarios::load("example2")?;
    let report = bottleneck_timeline(&spec, 200, &RngStream::new(11))?;
    println!("delta_b = {:.3e}", report.params.delta_b);
    for p in coarse_phases(&report.phases, 5.0 * spec.horizon.h()) {
        println!("[{:.3}, {:.3}): {:?}", p.start, p.end, p.nodes);
    }
    for e in &report.discontinuities {
        println!("node {} jumps at t = {:.3} ({:?}, predicted {:?})", e.node, e.t, e.kind, e.predicted);
    }
    Ok(())
}
