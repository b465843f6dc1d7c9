//! Functional limit theorem checks at desk scale.

use tnet::scenarios;
use tnet::stochastic::RngStream;
use tnet::verify::{check_fclt_queue, check_fslln_arrivals, check_service_routing};

fn main() -> tnet::Result<()> {
    let rng = RngStream::new(5);
    let single = scenarios::load("single-node")?;
    let fslln = check_fslln_arrivals(&single, &[100, 1000, 10_000], 50, &rng)?;
    println!("fslln: slope = {:?}, pass = {}", fslln.slope.map(|s| s.slope), fslln.pass);

    let sr = check_service_routing(&single, &[100, 1000, 10_000], 100, &rng)?;
    println!("service/routing: pass = {}", sr.pass);

    let tandem = scenarios::load("tandem-faster-first")?;
    let fclt = check_fclt_queue(&tandem, 0.3, 2000, 200, &rng)?;
    println!("fclt at t = 0.3: pass = {}\n{}", fclt.pass, fclt.details);
    Ok(())
}
