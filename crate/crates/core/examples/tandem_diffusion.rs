//! Closed-form diffusion limit of the two-node tandem in its three service
//! orderings, with the one-sided limits at each discontinuity.

use tnet::diffusion::TandemDiffusion;
use tnet::scenarios;
use tnet::stochastic::RngStream;

fn main() -> tnet::Result<()> {
    for name in ["tandem-slower-first", "tandem-faster-first", "tandem-equal"] {
        let td = TandemDiffusion::new(&scenarios::load(name)?)?;
        println!("{name}: {:?}", td.case());
        let path = td.sample(&RngStream::new(3));
        for d in &path.discontinuities {
            println!(
                "  node {} at t = {:.4}: Xhat = {:+.4}, left/value/right = {:.4}/{:.4}/{:.4} -> {:?}",
                d.node, d.t, d.netput, d.left, d.value, d.right, d.kind
            );
        }
    }
    Ok(())
}
