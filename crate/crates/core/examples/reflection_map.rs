//! Oblique reflection of a two-node tandem netput, checked against the
//! closed form, plus the set-based directional derivative against a finite
//! difference.

use tnet::paths::{Interpolation, TimeGrid, VectorPath};
use tnet::reflection::{
    directional_derivative_fd, directional_regulator, solve_oblique_reflection, tandem_closed_form, DEFAULT_N_FD,
};

fn main() -> tnet::Result<()> {
    let grid = TimeGrid::new(0.0, 2.0, 0.001)?;
    // Node 1 fills then drains; node 2 receives node 1's output.
    let x = VectorPath::from_fn(grid, 2, Interpolation::PiecewiseLinear, |k, t| match k {
        0 => 0.5 * t - (t - 1.0).max(0.0) * 1.5,
        _ => 1.0 * t.min(1.0) * 0.2 - 0.3 * t,
    });
    let routing = [0.0, 1.0, 0.0, 0.0];
    let iter = solve_oblique_reflection(&x, &routing)?;
    let exact = tandem_closed_form(&x)?;
    let gap = iter.z.sup_distance(&exact.z)?;
    println!("iterations = {}, sup gap to closed form = {gap:?}", iter.iterations);

    let chi = VectorPath::from_fn(grid, 2, Interpolation::PiecewiseLinear, |k, t| (k as f64 + 1.0) * (3.0 * t).sin());
    let dd = directional_regulator(&x, &chi, &routing)?;
    let fd = directional_derivative_fd(&x, &chi, &routing, DEFAULT_N_FD)?;
    let worst = dd.value.sup_distance(&fd)?;
    println!("directional derivative vs finite difference: {worst:?}");
    println!("regulator first increases at {:?}", (0..2).map(|i| dd.t_u_time(i)).collect::<Vec<_>>());
    Ok(())
}
