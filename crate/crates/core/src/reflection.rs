//! Oblique reflection map `(Φ, Ψ)` with reflection matrix `V = I − Pᵀ`, and
//! its directional derivative.
//!
//! The regulator is the fixed point of
//! `y ↦ t ↦ sup_{s≤t} [−x(s) + G y(s)]⁺` with `G = Pᵀ`, iterated from
//! `y ≡ 0`. The directional derivative `Δ_χ(x)` is computed from the sets
//! `∇_t^i` of times where node `i` is empty and its regulator has not moved
//! since, following the same fixed-point scheme.

use std::collections::VecDeque;

use crate::error::{argument, Error, Result};
use crate::model::spectral_radius_nonnegative;
use crate::paths::{running_sup_plus_in_place, Interpolation, VectorPath};

/// Sup-norm change below which fixed-point iterations stop.
pub const FIXED_POINT_TOL: f64 = 1e-10;
pub const MAX_ITERATIONS: usize = 10_000;
/// Default population used by the finite-difference directional derivative.
pub const DEFAULT_N_FD: f64 = 1e8;

#[derive(Debug, Clone)]
pub struct ReflectionSolution {
    pub z: VectorPath,
    pub y: VectorPath,
    pub iterations: usize,
    pub residual: f64,
}

/// Zero-detection tolerance used for `∇` membership and regulator flatness.
pub fn tol_c(x: &VectorPath) -> f64 {
    1e-9 * (1.0 + x.sup_norm())
}

fn check_routing(routing: &[f64], k: usize) -> Result<Vec<f64>> {
    if routing.len() != k * k {
        return Err(argument(format!(
            "routing matrix has {} entries, path dimension is {k}",
            routing.len()
        )));
    }
    let rho = spectral_radius_nonnegative(routing, k);
    if !(rho < 1.0 - 1e-8) {
        return Err(Error::Precondition(format!(
            "spectral radius of P is {rho}; reflection needs < 1"
        )));
    }
    Ok(crate::model::routing_transpose(
        &routing.chunks(k).map(|r| r.to_vec()).collect::<Vec<_>>(),
    ))
}

/// Solves `z = x + (I − Pᵀ) y`, `z ≥ 0`, `y` non-decreasing and increasing
/// only when `z = 0`. `routing` is row-major `P`.
pub fn solve_oblique_reflection(x: &VectorPath, routing: &[f64]) -> Result<ReflectionSolution> {
    let g = check_routing(routing, x.dim())?;
    let tol = tol_c(x);
    for k in 0..x.dim() {
        if x.at(k, 0) < -tol {
            return Err(Error::Precondition(format!(
                "x_{}(t0) = {} is negative",
                k + 1,
                x.at(k, 0)
            )));
        }
    }
    reflect(x, &g)
}

/// Fixed-point iteration with `G` given row-major; no check on `x(t0)`.
pub(crate) fn reflect(x: &VectorPath, g: &[f64]) -> Result<ReflectionSolution> {
    let k = x.dim();
    let m = x.grid().len();
    let mut y = VectorPath::zeros(*x.grid(), k, Interpolation::PiecewiseLinear);
    let mut next = y.clone();
    let mut iterations = 0;
    let mut residual = f64::INFINITY;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        for i in 0..k {
            let row = &g[i * k..(i + 1) * k];
            let out = next.coord_mut(i);
            out.copy_from_slice(x.coord(i));
            out.iter_mut().for_each(|v| *v = -*v);
            for (j, &gij) in row.iter().enumerate() {
                if gij != 0.0 {
                    for (o, yj) in out.iter_mut().zip(y.coord(j)) {
                        *o += gij * yj;
                    }
                }
            }
            running_sup_plus_in_place(out);
        }
        residual = y
            .sup_distance(&next)
            .expect("same grid")
            .into_iter()
            .fold(0.0, f64::max);
        std::mem::swap(&mut y, &mut next);
        if residual < FIXED_POINT_TOL {
            break;
        }
    }
    if residual >= FIXED_POINT_TOL {
        return Err(Error::NonConvergence {
            iterations,
            residual,
        });
    }
    let mut z = x.clone().with_interpolation(Interpolation::PiecewiseLinear);
    for i in 0..k {
        for t in 0..m {
            let gy: f64 = (0..k).map(|j| g[i * k + j] * y.at(j, t)).sum();
            z.set(i, t, x.at(i, t) + y.at(i, t) - gy);
        }
    }
    Ok(ReflectionSolution {
        z,
        y,
        iterations,
        residual,
    })
}

/// Nested-sup solution for the two-node tandem `1 → 2`.
pub fn tandem_closed_form(x: &VectorPath) -> Result<ReflectionSolution> {
    if x.dim() != 2 {
        return Err(argument(format!(
            "tandem closed form needs a 2-dimensional netput, got {}",
            x.dim()
        )));
    }
    let mut y1: Vec<f64> = x.coord(0).iter().map(|v| -v).collect();
    running_sup_plus_in_place(&mut y1);
    let mut y2: Vec<f64> = x.coord(1).iter().zip(&y1).map(|(v, a)| -v + a).collect();
    running_sup_plus_in_place(&mut y2);
    let z1: Vec<f64> = x.coord(0).iter().zip(&y1).map(|(v, a)| v + a).collect();
    let z2: Vec<f64> = x
        .coord(1)
        .iter()
        .zip(y2.iter().zip(&y1))
        .map(|(v, (b, a))| v + b - a)
        .collect();
    let grid = *x.grid();
    Ok(ReflectionSolution {
        z: VectorPath::from_coords(grid, vec![z1, z2], Interpolation::PiecewiseLinear)?,
        y: VectorPath::from_coords(grid, vec![y1, y2], Interpolation::PiecewiseLinear)?,
        iterations: 1,
        residual: 0.0,
    })
}

/// `√n (Φ(x + χ/√n) − Φ(x))`.
pub fn directional_derivative_fd(
    x: &VectorPath,
    chi: &VectorPath,
    routing: &[f64],
    n_fd: f64,
) -> Result<VectorPath> {
    x.check_compatible(chi)?;
    if !(n_fd > 0.0) {
        return Err(argument("n_fd must be positive"));
    }
    let base = solve_oblique_reflection(x, routing)?;
    let g = check_routing(routing, x.dim())?;
    let root = n_fd.sqrt();
    let bumped = reflect(&x.add_scaled(chi, 1.0 / root)?, &g)?;
    let diff = bumped.z.add_scaled(&base.z, -1.0)?;
    Ok(diff.scaled(root))
}

/// The sets `∇_t^i` for one node, stored compactly: `∇_t = {s ∈
/// [level_start[t], t] : zero[s]}` since the regulator is non-decreasing.
#[derive(Debug, Clone)]
pub struct NablaSets {
    pub level_start: Vec<usize>,
    pub zero: Vec<bool>,
}

impl NablaSets {
    pub fn members(&self, t: usize) -> impl Iterator<Item = usize> + '_ {
        (self.level_start[t]..=t).filter(move |&s| self.zero[s])
    }

    pub fn is_empty_at(&self, t: usize) -> bool {
        self.members(t).next().is_none()
    }
}

#[derive(Debug, Clone)]
pub struct DirectionalDerivativeSolution {
    pub value: VectorPath,
    pub gamma: VectorPath,
    pub nabla_sets: Vec<NablaSets>,
    /// Grid index of the first regulator increase per node, if any.
    pub t_u: Vec<Option<usize>>,
    pub iterations: usize,
    pub residual: f64,
    pub tol: f64,
}

impl DirectionalDerivativeSolution {
    pub fn t_u_time(&self, node: usize) -> Option<f64> {
        self.t_u[node].map(|i| self.value.grid().time(i))
    }

    /// Jumps of `γ_i` into and out of grid index `t`.
    pub fn gamma_jumps(&self, node: usize, t: usize) -> (f64, f64) {
        let g = self.gamma.coord(node);
        let left = if t > 0 { g[t] - g[t - 1] } else { 0.0 };
        let right = if t + 1 < g.len() { g[t + 1] - g[t] } else { 0.0 };
        (left, right)
    }
}

/// Membership data for every node, computed from the fluid solution.
pub fn nabla_sets(sol: &ReflectionSolution, tol: f64) -> (Vec<NablaSets>, Vec<Option<usize>>) {
    let k = sol.z.dim();
    let m = sol.z.grid().len();
    let mut sets = Vec::with_capacity(k);
    let mut t_u = Vec::with_capacity(k);
    for i in 0..k {
        let z = sol.z.coord(i);
        let y = sol.y.coord(i);
        let zero: Vec<bool> = z.iter().map(|v| v.abs() <= tol).collect();
        let mut level_start = vec![0; m];
        let mut a = 0;
        for t in 0..m {
            while y[a] < y[t] - tol {
                a += 1;
            }
            level_start[t] = a;
        }
        sets.push(NablaSets { level_start, zero });
        t_u.push(y.iter().position(|&v| v > tol));
    }
    (sets, t_u)
}

/// Set-based directional derivative `Δ_χ(x) = χ + (I − Pᵀ) γ`.
pub fn directional_regulator(
    x: &VectorPath,
    chi: &VectorPath,
    routing: &[f64],
) -> Result<DirectionalDerivativeSolution> {
    let sol = solve_oblique_reflection(x, routing)?;
    directional_regulator_from(x, &sol, chi, routing)
}

/// As `directional_regulator`, reusing an already computed `Φ(x), Ψ(x)`.
pub fn directional_regulator_from(
    x: &VectorPath,
    sol: &ReflectionSolution,
    chi: &VectorPath,
    routing: &[f64],
) -> Result<DirectionalDerivativeSolution> {
    x.check_compatible(chi)?;
    let g = check_routing(routing, x.dim())?;
    let tol = tol_c(x);
    let (sets, t_u) = nabla_sets(sol, tol);
    let k = x.dim();
    let m = x.grid().len();

    let mut gamma = VectorPath::zeros(*x.grid(), k, Interpolation::PiecewiseLinear);
    let mut next = gamma.clone();
    let mut integrand = vec![0.0; m];
    let mut deque: VecDeque<usize> = VecDeque::new();
    let mut iterations = 0;
    let mut residual = f64::INFINITY;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        for i in 0..k {
            for (t, v) in integrand.iter_mut().enumerate() {
                let pg: f64 = (0..k).map(|j| g[i * k + j] * gamma.at(j, t)).sum();
                *v = -chi.at(i, t) + pg;
            }
            let set = &sets[i];
            // The positive-part branch applies while the regulator is still
            // zero, i.e. strictly before the first grid point where it is not.
            let plus_before = t_u[i].unwrap_or(usize::MAX);
            deque.clear();
            let out = next.coord_mut(i);
            for t in 0..m {
                if set.zero[t] {
                    while deque.back().is_some_and(|&b| integrand[b] <= integrand[t]) {
                        deque.pop_back();
                    }
                    deque.push_back(t);
                }
                while deque.front().is_some_and(|&f| f < set.level_start[t]) {
                    deque.pop_front();
                }
                let sup = deque.front().map(|&f| integrand[f]);
                out[t] = if t < plus_before {
                    sup.map_or(0.0, |s| s.max(0.0))
                } else {
                    match sup {
                        Some(s) => s,
                        None => {
                            return Err(Error::EmptyNabla {
                                node: i + 1,
                                t: x.grid().time(t),
                            })
                        }
                    }
                };
            }
        }
        residual = gamma
            .sup_distance(&next)
            .expect("same grid")
            .into_iter()
            .fold(0.0, f64::max);
        std::mem::swap(&mut gamma, &mut next);
        if residual < FIXED_POINT_TOL {
            break;
        }
    }
    if residual >= FIXED_POINT_TOL {
        return Err(Error::NonConvergence {
            iterations,
            residual,
        });
    }
    let mut value = chi.clone().with_interpolation(Interpolation::PiecewiseLinear);
    for i in 0..k {
        for t in 0..m {
            let pg: f64 = (0..k).map(|j| g[i * k + j] * gamma.at(j, t)).sum();
            value.set(i, t, chi.at(i, t) + gamma.at(i, t) - pg);
        }
    }
    Ok(DirectionalDerivativeSolution {
        value,
        gamma,
        nabla_sets: sets,
        t_u,
        iterations,
        residual,
        tol,
    })
}

/// Discrete regime of one node at one grid point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// Fluid queue positive.
    Positive,
    /// Empty with the regulator growing into this point.
    Draining,
    /// Empty with a flat regulator.
    Idle,
}

pub fn regime(sol: &ReflectionSolution, tol: f64, node: usize, t: usize) -> Regime {
    let z = sol.z.at(node, t);
    if z > tol {
        return Regime::Positive;
    }
    let y = sol.y.coord(node);
    if t > 0 && y[t] - y[t - 1] > tol {
        Regime::Draining
    } else {
        Regime::Idle
    }
}

/// Grid indices where some node changes regime. The directional derivative
/// can only jump at these points, so they are the candidate discontinuities
/// of the diffusion limit.
pub fn regime_changes(sol: &ReflectionSolution, tol: f64) -> Vec<usize> {
    let k = sol.z.dim();
    let m = sol.z.grid().len();
    let mut out: Vec<usize> = (1..m)
        .filter(|&t| (0..k).any(|i| regime(sol, tol, i, t) != regime(sol, tol, i, t - 1)))
        .collect();
    out.dedup();
    out
}
