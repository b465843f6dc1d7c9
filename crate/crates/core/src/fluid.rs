//! Fluid limit: netput, reflected queue and regulator, busy time, workload,
//! and the crossing times that organize tandem phases.

use serde::Serialize;

use crate::error::{argument, Result};
use crate::linalg::solve;
use crate::model::{ArrivalLaw, NetworkSpec};
use crate::paths::{Interpolation, TimeGrid, VectorPath};
use crate::reflection::{solve_oblique_reflection, tol_c, ReflectionSolution};

/// Which busy-time formula to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BusyTimeForm {
    /// `B̄ = e − M Ψ(X̄)`: idle time is the regulator divided by the rate.
    #[default]
    RateScaled,
    /// `B̄ = e − (I − Pᵀ)⁻¹ Ψ(X̄)`, kept for comparison.
    InverseRouting,
}

#[derive(Debug, Clone)]
pub struct FluidSolution {
    pub netput: VectorPath,
    pub reflection: ReflectionSolution,
    pub busy: VectorPath,
    pub busy_form: BusyTimeForm,
    /// `M Q̄`; `None` when some service rate varies in time.
    pub workload: Option<VectorPath>,
    pub tol: f64,
}

impl FluidSolution {
    pub fn queue(&self) -> &VectorPath {
        &self.reflection.z
    }

    pub fn regulator(&self) -> &VectorPath {
        &self.reflection.y
    }

    pub fn grid(&self) -> &TimeGrid {
        self.netput.grid()
    }

    /// Cumulative fluid departures `D̄_k = ∫ μ_k − Ȳ_k`.
    pub fn departures(&self, spec: &NetworkSpec) -> VectorPath {
        let grid = *self.grid();
        VectorPath::from_fn(grid, spec.k, Interpolation::PiecewiseLinear, |k, t| {
            spec.services[k].cumulative_from(grid.t0(), t)
        })
        .add_scaled(self.regulator(), -1.0)
        .expect("same grid")
    }
}

/// `X̄_k(t) = F_k(t) − ∫μ_k + Σ_l p_{lk} ∫μ_l`, integrals from the grid start.
pub fn fluid_netput(spec: &NetworkSpec) -> VectorPath {
    let grid = spec.horizon;
    let k = spec.k;
    let t0 = grid.t0();
    VectorPath::from_fn(grid, k, Interpolation::PiecewiseLinear, |node, t| {
        let f = spec
            .entry_index(node)
            .map_or(0.0, |j| spec.arrivals[j].cdf(t));
        let inflow: f64 = (0..k)
            .filter(|&l| spec.p(l, node) > 0.0)
            .map(|l| spec.p(l, node) * spec.services[l].cumulative_from(t0, t))
            .sum();
        f - spec.services[node].cumulative_from(t0, t) + inflow
    })
}

pub fn fluid_solve(spec: &NetworkSpec) -> Result<FluidSolution> {
    fluid_solve_with(spec, BusyTimeForm::default())
}

pub fn fluid_solve_with(spec: &NetworkSpec, busy_form: BusyTimeForm) -> Result<FluidSolution> {
    let netput = fluid_netput(spec);
    let reflection = solve_oblique_reflection(&netput, &spec.routing_flat())?;
    let tol = tol_c(&netput);
    let grid = spec.horizon;
    let busy = match busy_form {
        BusyTimeForm::RateScaled => rate_scaled_busy(spec, &reflection, tol),
        BusyTimeForm::InverseRouting => inverse_routing_busy(spec, &reflection)?,
    };
    let workload = spec.constant_rates().map(|rates| {
        let mut z = reflection.z.clone();
        for (k, mu) in rates.iter().enumerate() {
            let inv = if *mu > 0.0 { 1.0 / mu } else { f64::INFINITY };
            for v in z.coord_mut(k) {
                *v = if *v == 0.0 { 0.0 } else { *v * inv };
            }
        }
        z
    });
    debug_assert!(busy.grid().same_as(&grid));
    Ok(FluidSolution {
        netput,
        reflection,
        busy,
        busy_form,
        workload,
        tol,
    })
}

/// Idle time grows by `ΔȲ / μ` per cell, using the exact mean rate of the
/// cell. When the rate vanishes the node counts as idle only if it is empty.
fn rate_scaled_busy(spec: &NetworkSpec, sol: &ReflectionSolution, tol: f64) -> VectorPath {
    let grid = spec.horizon;
    let mut busy = VectorPath::zeros(grid, spec.k, Interpolation::PiecewiseLinear);
    for k in 0..spec.k {
        let y = sol.y.coord(k);
        let z = sol.z.coord(k);
        let mut b = 0.0;
        for i in 1..grid.len() {
            let (a, c) = (grid.time(i - 1), grid.time(i));
            let dt = c - a;
            let work = spec.services[k].cumulative_from(a, c);
            let idle = if work > 0.0 {
                (y[i] - y[i - 1]) * dt / work
            } else if z[i - 1] <= tol && z[i] <= tol {
                dt
            } else {
                0.0
            };
            b += dt - idle.clamp(0.0, dt);
            busy.set(k, i, b);
        }
    }
    busy
}

fn inverse_routing_busy(spec: &NetworkSpec, sol: &ReflectionSolution) -> Result<VectorPath> {
    let k = spec.k;
    let g = spec.g_matrix();
    let v: Vec<f64> = (0..k * k)
        .map(|idx| if idx / k == idx % k { 1.0 } else { 0.0 } - g[idx])
        .collect();
    let grid = spec.horizon;
    let mut busy = VectorPath::zeros(grid, k, Interpolation::PiecewiseLinear);
    for (i, t) in grid.times().enumerate() {
        let inv_y = solve(&v, &sol.y.column(i), k)
            .ok_or_else(|| argument("I − Pᵀ is singular"))?;
        for (node, w) in inv_y.into_iter().enumerate() {
            busy.set(node, i, (t - grid.t0()) - w);
        }
    }
    Ok(busy)
}

/// Crossing and emptying times for one node. Times are `None` when the
/// crossing does not occur on the horizon.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossingTimes {
    /// 1-based node index.
    pub node: usize,
    /// First and second downcrossings of `F − M_k` (cumulative balance).
    pub tau1: Option<f64>,
    pub tau2: Option<f64>,
    /// First and second sign changes of `F′ − μ_k` (density balance).
    pub tau1p: Option<f64>,
    pub tau2p: Option<f64>,
    /// Grid times where the reflected fluid queue returns to zero.
    pub emptying: Vec<f64>,
}

fn bisect(mut lo: f64, mut hi: f64, positive_at: impl Fn(f64) -> bool) -> f64 {
    let lo_sign = positive_at(lo);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if positive_at(mid) == lo_sign {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Times where `positive_at` changes value along the grid, refined by
/// bisection. With `down_only`, only true → false changes count.
fn sign_changes(grid: &TimeGrid, positive_at: impl Fn(f64) -> bool, down_only: bool) -> Vec<f64> {
    let mut out = Vec::new();
    let mut prev = positive_at(grid.t0());
    for i in 1..grid.len() {
        let cur = positive_at(grid.time(i));
        if cur != prev && (!down_only || prev) {
            out.push(bisect(grid.time(i - 1), grid.time(i), &positive_at));
        }
        prev = cur;
    }
    out
}

/// Crossing times for every node against the single entry law.
pub fn crossing_times(spec: &NetworkSpec) -> Result<Vec<CrossingTimes>> {
    if spec.arrivals.len() != 1 {
        return Err(argument("crossing times need exactly one entry node"));
    }
    let law: &ArrivalLaw = &spec.arrivals[0];
    let fluid = fluid_solve(spec)?;
    let grid = spec.horizon;
    let t0 = grid.t0();
    let eps = 1e-12;
    Ok((0..spec.k)
        .map(|k| {
            let svc = &spec.services[k];
            let cum = sign_changes(&grid, |t| law.cdf(t) - svc.cumulative_from(t0, t) > eps, true);
            let dens = match law.density(t0) {
                Some(_) => sign_changes(
                    &grid,
                    |t| law.density(t).unwrap_or(0.0) - svc.rate.value(t) > 0.0,
                    false,
                ),
                None => Vec::new(),
            };
            CrossingTimes {
                node: k + 1,
                tau1: cum.first().copied(),
                tau2: cum.get(1).copied(),
                tau1p: dens.first().copied(),
                tau2p: dens.get(1).copied(),
                emptying: emptying_times(&fluid, k),
            }
        })
        .collect())
}

/// Grid times where node `k`'s fluid queue drops from positive to zero.
pub fn emptying_times(fluid: &FluidSolution, k: usize) -> Vec<f64> {
    let z = fluid.queue().coord(k);
    let grid = fluid.grid();
    (1..z.len())
        .filter(|&i| z[i - 1] > fluid.tol && z[i] <= fluid.tol)
        .map(|i| grid.time(i))
        .collect()
}
