//! Diffusion limit: the Gaussian netput `X̂`, the queue limit
//! `Q̂ = Δ_X̂(X̄)` (pointwise in general, full path for two-node tandems),
//! and the workload `Ẑ = M Q̂`.

use serde::Serialize;

use crate::error::{argument, Error, Result};
use crate::fluid::{emptying_times, fluid_solve, FluidSolution};
use crate::model::NetworkSpec;
use crate::parallel::par_try_map;
use crate::paths::{Interpolation, VectorPath};
use crate::reflection::{directional_regulator_from, DirectionalDerivativeSolution};
use crate::stochastic::{brownian_on_levels, tag, BridgeCovariance, BridgeSampler, RngStream};

#[derive(Debug, Clone)]
pub struct DiffusionSample {
    /// `X̂ = bridge − service + routing`.
    pub netput: VectorPath,
    /// `W⁰ ∘ F` at entry nodes, zero elsewhere.
    pub bridge: VectorPath,
    /// `σ_k W_k ∘ M_k − Σ_l p_{lk} σ_l W_l ∘ M_l`.
    pub service: VectorPath,
    /// `Σ_l R̂_l^k ∘ M_l`.
    pub routing: VectorPath,
    pub queue: Option<VectorPath>,
    pub gamma: Option<VectorPath>,
    pub workload: Option<VectorPath>,
}

/// Fluid solution and samplers for repeated diffusion draws on one spec.
#[derive(Debug, Clone)]
pub struct DiffusionModel {
    spec: NetworkSpec,
    fluid: FluidSolution,
    bridge: BridgeSampler,
    /// `M_k` on the grid.
    levels: Vec<Vec<f64>>,
    /// Destination probabilities with exit appended, for rows that are not
    /// deterministic.
    routing_rows: Vec<Option<Vec<f64>>>,
    routing_flat: Vec<f64>,
}

impl DiffusionModel {
    pub fn new(spec: &NetworkSpec) -> Result<Self> {
        let fluid = fluid_solve(spec)?;
        let grid = spec.horizon;
        let bridge = BridgeSampler::new(&BridgeCovariance::from_spec(spec), grid)?;
        let levels = spec
            .services
            .iter()
            .map(|s| grid.times().map(|t| s.cumulative_from(grid.t0(), t)).collect())
            .collect();
        let routing_rows = (0..spec.k)
            .map(|l| {
                let mut p = spec.routing[l].clone();
                p.push(spec.exit_probability(l).max(0.0));
                let random = p.iter().any(|&q| q > 0.0 && q < 1.0);
                random.then_some(p)
            })
            .collect();
        Ok(DiffusionModel {
            spec: spec.clone(),
            fluid,
            bridge,
            levels,
            routing_rows,
            routing_flat: spec.routing_flat(),
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn fluid(&self) -> &FluidSolution {
        &self.fluid
    }

    pub fn sample_netput(&self, rng: &RngStream) -> DiffusionSample {
        let grid = self.spec.horizon;
        let k = self.spec.k;
        let m = grid.len();
        let w0 = self.bridge.sample(&rng.child(tag::BRIDGE));
        let mut bridge = VectorPath::zeros(grid, k, Interpolation::PiecewiseLinear);
        for (j, &node) in self.spec.entry_nodes.iter().enumerate() {
            bridge.coord_mut(node).copy_from_slice(w0.coord(j));
        }

        let svc_root = rng.child(tag::SERVICE_BM);
        let own: Vec<Vec<f64>> = (0..k)
            .map(|i| {
                brownian_on_levels(
                    &self.levels[i],
                    self.spec.services[i].base.scv(),
                    &svc_root.child(i as u64),
                )
            })
            .collect();
        let mut service = VectorPath::zeros(grid, k, Interpolation::PiecewiseLinear);
        for node in 0..k {
            let col = service.coord_mut(node);
            col.copy_from_slice(&own[node]);
            for (l, w) in own.iter().enumerate() {
                let p = self.spec.p(l, node);
                if p > 0.0 {
                    for (c, wl) in col.iter_mut().zip(w) {
                        *c -= p * wl;
                    }
                }
            }
        }

        let mut routing = VectorPath::zeros(grid, k, Interpolation::PiecewiseLinear);
        let route_root = rng.child(tag::ROUTING_BM);
        for (l, row) in self.routing_rows.iter().enumerate() {
            let Some(p) = row else { continue };
            let sq: Vec<f64> = p.iter().map(|q| q.sqrt()).collect();
            let mut r = route_root.child(l as u64).rng();
            let mut acc = vec![0.0; k];
            let lv = &self.levels[l];
            for i in 1..m {
                let dm = lv[i] - lv[i - 1];
                if dm > 0.0 {
                    // Increment with covariance dm (diag(p) − p pᵀ), exit included.
                    let z: Vec<f64> = (0..p.len())
                        .map(|_| rand::Rng::sample(&mut r, rand_distr::StandardNormal))
                        .collect();
                    let s: f64 = sq.iter().zip(&z).map(|(a, b)| a * b).sum();
                    let scale = dm.sqrt();
                    for (j, a) in acc.iter_mut().enumerate() {
                        *a += scale * (sq[j] * z[j] - p[j] * s);
                    }
                }
                for (j, a) in acc.iter().enumerate() {
                    let v = routing.at(j, i) + a;
                    routing.set(j, i, v);
                }
            }
        }

        let netput = bridge
            .add_scaled(&service, -1.0)
            .and_then(|x| x.add_scaled(&routing, 1.0))
            .expect("same grid");
        DiffusionSample {
            netput,
            bridge,
            service,
            routing,
            queue: None,
            gamma: None,
            workload: None,
        }
    }

    /// `Δ_X̂(X̄)` for a sampled netput, via the generic directional regulator.
    pub fn regulate(&self, netput: &VectorPath) -> Result<DirectionalDerivativeSolution> {
        directional_regulator_from(
            &self.fluid.netput,
            &self.fluid.reflection,
            netput,
            &self.routing_flat,
        )
    }

    /// Netput plus queue, regulator and (for constant rates) workload.
    pub fn sample(&self, rng: &RngStream) -> Result<DiffusionSample> {
        let mut s = self.sample_netput(rng);
        let d = self.regulate(&s.netput)?;
        s.workload = workload_of(&d.value, &self.spec).ok();
        s.queue = Some(d.value);
        s.gamma = Some(d.gamma);
        Ok(s)
    }

    /// Grid index used for a pointwise query at time `t`.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let grid = self.spec.horizon;
        if !grid.contains(t) {
            return Err(Error::OutOfRange {
                t,
                t0: grid.t0(),
                t1: grid.t1(),
            });
        }
        Ok(grid.nearest_index(t))
    }

    /// `reps` independent draws of `Q̂(t)`, one vector per replication.
    pub fn queue_at(&self, t: f64, reps: usize, rng: &RngStream) -> Result<Vec<Vec<f64>>> {
        let idx = self.index_of(t)?;
        par_try_map(reps, |r| {
            let s = self.sample_netput(&rng.child(r as u64));
            Ok(self.regulate(&s.netput)?.value.column(idx))
        })
    }
}

pub fn sample_diffusion_netput(spec: &NetworkSpec, rng: &RngStream) -> Result<DiffusionSample> {
    Ok(DiffusionModel::new(spec)?.sample_netput(rng))
}

pub fn diffusion_queue_pointwise(
    spec: &NetworkSpec,
    t: f64,
    rng: &RngStream,
    reps: usize,
) -> Result<Vec<Vec<f64>>> {
    DiffusionModel::new(spec)?.queue_at(t, reps, rng)
}

fn workload_of(queue: &VectorPath, spec: &NetworkSpec) -> Result<VectorPath> {
    let rates = spec
        .constant_rates()
        .ok_or_else(|| Error::NotSupported("workload needs constant service rates".into()))?;
    let mut z = queue.clone();
    for (k, mu) in rates.iter().enumerate() {
        for v in z.coord_mut(k) {
            if *v != 0.0 {
                *v /= mu;
            }
        }
    }
    Ok(z)
}

/// `Ẑ = diag(1/μ) Q̂`.
pub fn diffusion_workload(sample: &DiffusionSample, spec: &NetworkSpec) -> Result<VectorPath> {
    let q = sample
        .queue
        .as_ref()
        .ok_or_else(|| argument("sample has no queue path"))?;
    workload_of(q, spec)
}

/// Service-rate ordering of a two-node tandem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TandemCase {
    /// μ₁ < μ₂: node 2 never builds a queue.
    SlowerFirst,
    /// μ₁ > μ₂: node 2 fills until it empties at τ₂.
    FasterFirst,
    /// μ₁ = μ₂: node 2 is critically loaded until τ₁.
    Equal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscontinuityKind {
    Continuous,
    /// `Q̂(τ−) ≠ Q̂(τ) = Q̂(τ+)`.
    Left,
    /// `Q̂(τ−) = Q̂(τ) ≠ Q̂(τ+)`.
    Right,
    TwoSided,
}

pub fn classify_jump(left: f64, value: f64, right: f64) -> DiscontinuityKind {
    let tol = 1e-12 * (1.0 + left.abs().max(value.abs()).max(right.abs()));
    match ((value - left).abs() > tol, (right - value).abs() > tol) {
        (false, false) => DiscontinuityKind::Continuous,
        (true, false) => DiscontinuityKind::Left,
        (false, true) => DiscontinuityKind::Right,
        (true, true) => DiscontinuityKind::TwoSided,
    }
}

/// One-sided limits of `Q̂_node` at a candidate discontinuity, computed from
/// the continuity of `X̂`.
#[derive(Debug, Clone, Serialize)]
pub struct DiscontinuityRecord {
    /// 1-based node.
    pub node: usize,
    pub index: usize,
    pub t: f64,
    /// `X̂_node(τ)`.
    pub netput: f64,
    pub left: f64,
    pub value: f64,
    pub right: f64,
    pub kind: DiscontinuityKind,
    /// False when the crossing falls strictly between grid points; `index`
    /// is then the first grid point after it.
    pub on_grid: bool,
}

impl DiscontinuityRecord {
    fn new(node: usize, index: usize, t: f64, netput: f64, lvr: (f64, f64, f64), on_grid: bool) -> Self {
        let (left, value, right) = lvr;
        DiscontinuityRecord {
            on_grid,
            node,
            index,
            t,
            netput,
            left,
            value,
            right,
            kind: classify_jump(left, value, right),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TandemPath {
    pub case: TandemCase,
    pub sample: DiffusionSample,
    pub discontinuities: Vec<DiscontinuityRecord>,
}

/// Closed-form queue paths for a two-node tandem with one overloaded phase
/// at node 1.
#[derive(Debug, Clone)]
pub struct TandemDiffusion {
    model: DiffusionModel,
    case: TandemCase,
    /// Last index with a flat fluid regulator at node 1.
    tau1: usize,
    tau2: Option<usize>,
    /// Last index before node 2's fluid regulator starts.
    node2_start: usize,
    /// Whether the fluid queue is already empty at `tau1` / `tau2`.
    on_grid: (bool, bool),
}

impl TandemDiffusion {
    pub fn new(spec: &NetworkSpec) -> Result<Self> {
        if spec.k != 2 || !spec.is_tandem() {
            return Err(argument("closed-form diffusion paths need a two-node tandem"));
        }
        if spec.arrivals[0].density(spec.horizon.t0()).is_none() {
            return Err(argument("closed-form diffusion paths need an arrival law with a density"));
        }
        let model = DiffusionModel::new(spec)?;
        let fluid = model.fluid();
        let grid = spec.horizon;
        let e1 = emptying_times(fluid, 0);
        if e1.len() != 1 || fluid.queue().at(0, 1) <= fluid.tol {
            return Err(argument(
                "node 1 must be overloaded from the start and empty exactly once",
            ));
        }
        let last_flat = |k: usize| {
            let y = fluid.regulator().coord(k);
            y.iter().position(|&v| v > fluid.tol).map_or(grid.len() - 1, |u| u.max(1) - 1)
        };
        let empty_at = |k: usize, i: usize| fluid.queue().at(k, i) <= fluid.tol;
        let tau1 = last_flat(0);
        let mu = |k: usize| *spec.services[k].rate.values().last().expect("rate piece");
        let case = match mu(0).partial_cmp(&mu(1)) {
            Some(std::cmp::Ordering::Less) => TandemCase::SlowerFirst,
            Some(std::cmp::Ordering::Greater) => TandemCase::FasterFirst,
            _ => TandemCase::Equal,
        };
        let tau2 = match case {
            TandemCase::FasterFirst => {
                let e2 = emptying_times(fluid, 1);
                if e2.len() != 1 {
                    return Err(argument("node 2 must empty exactly once on the horizon"));
                }
                Some(last_flat(1))
            }
            _ => None,
        };
        let node2_start = last_flat(1);
        let on_grid = (empty_at(0, tau1), tau2.is_none_or(|b| empty_at(1, b)));
        Ok(TandemDiffusion {
            model,
            case,
            tau1,
            tau2,
            node2_start,
            on_grid,
        })
    }

    pub fn case(&self) -> TandemCase {
        self.case
    }

    pub fn model(&self) -> &DiffusionModel {
        &self.model
    }

    pub fn tau1_index(&self) -> usize {
        self.tau1
    }

    pub fn tau2_index(&self) -> Option<usize> {
        self.tau2
    }

    pub fn sample(&self, rng: &RngStream) -> TandemPath {
        let mut s = self.model.sample_netput(rng);
        let grid = self.model.spec.horizon;
        let m = grid.len();
        let x1 = s.netput.coord(0).to_vec();
        let x2 = s.netput.coord(1).to_vec();
        let a = self.tau1;
        let (on1, on2) = self.on_grid;
        // Off-grid crossings: the regulator is still zero at `a` and the
        // jump shows up at the next grid point.
        let g1_at = if on1 { (-x1[a]).max(0.0) } else { 0.0 };
        let g1: Vec<f64> = (0..m)
            .map(|i| match i.cmp(&a) {
                std::cmp::Ordering::Less => 0.0,
                std::cmp::Ordering::Equal => g1_at,
                std::cmp::Ordering::Greater => -x1[i],
            })
            .collect();
        let free = |i: usize| -x2[i] + g1[i];
        let g2: Vec<f64> = match self.case {
            TandemCase::SlowerFirst => (0..m)
                .map(|i| {
                    if i > self.node2_start {
                        free(i)
                    } else {
                        free(i).max(0.0)
                    }
                })
                .collect(),
            TandemCase::FasterFirst => {
                let b = self.tau2.expect("τ₂ in this case");
                (0..m)
                    .map(|i| match i.cmp(&b) {
                        std::cmp::Ordering::Less => 0.0,
                        std::cmp::Ordering::Equal if on2 => free(b).max(0.0),
                        std::cmp::Ordering::Equal => 0.0,
                        std::cmp::Ordering::Greater => free(i),
                    })
                    .collect()
            }
            TandemCase::Equal => {
                let mut run: f64 = 0.0;
                (0..m)
                    .map(|i| {
                        if i <= a {
                            run = run.max(free(i));
                            run
                        } else {
                            free(i)
                        }
                    })
                    .collect()
            }
        };
        let mut q = VectorPath::zeros(grid, 2, Interpolation::PiecewiseConstantRight);
        let mut gamma = VectorPath::zeros(grid, 2, Interpolation::PiecewiseConstantRight);
        for i in 0..m {
            q.set(0, i, x1[i] + g1[i]);
            q.set(1, i, x2[i] - g1[i] + g2[i]);
            gamma.set(0, i, g1[i]);
            gamma.set(1, i, g2[i]);
        }

        // One-sided limits use the continuous-time formulas with X̂ read at
        // the first grid point where the jump is visible.
        let ia = if on1 { a } else { (a + 1).min(m - 1) };
        let ta = grid.time(ia);
        let lim1 = (-x1[ia]).max(0.0);
        let mut disc = vec![DiscontinuityRecord::new(
            1,
            ia,
            ta,
            x1[ia],
            (x1[ia], x1[ia] + lim1, 0.0),
            on1,
        )];
        match self.case {
            TandemCase::SlowerFirst => {}
            TandemCase::FasterFirst => {
                let b = self.tau2.expect("τ₂ in this case");
                disc.push(DiscontinuityRecord::new(
                    2,
                    ia,
                    ta,
                    x2[ia],
                    (x2[ia], x2[ia] - lim1, x2[ia] + x1[ia]),
                    on1,
                ));
                let ib = if on2 { b } else { (b + 1).min(m - 1) };
                let pre = x2[ib] + x1[ib];
                let at = pre + (-pre).max(0.0);
                disc.push(DiscontinuityRecord::new(2, ib, grid.time(ib), x2[ib], (pre, at, 0.0), on2));
            }
            TandemCase::Equal => {
                let before = (0..ia).map(|i| (-x2[i]).max(0.0)).fold(0.0, f64::max);
                let g2_at = before.max(-x2[ia] + lim1);
                disc.push(DiscontinuityRecord::new(
                    2,
                    ia,
                    ta,
                    x2[ia],
                    (x2[ia] + before, x2[ia] - lim1 + g2_at, 0.0),
                    on1,
                ));
            }
        }
        s.workload = workload_of(&q, &self.model.spec).ok();
        s.queue = Some(q);
        s.gamma = Some(gamma);
        TandemPath {
            case: self.case,
            sample: s,
            discontinuities: disc,
        }
    }
}

pub fn tandem_diffusion_path(spec: &NetworkSpec, rng: &RngStream) -> Result<TandemPath> {
    Ok(TandemDiffusion::new(spec)?.sample(rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ArrivalLaw, BaseRenewal, CorrelationModel, ServiceProfile};
    use crate::paths::{PiecewiseConstant, TimeGrid};

    fn single(law: ArrivalLaw, mu: f64, grid: TimeGrid) -> NetworkSpec {
        NetworkSpec {
            k: 1,
            routing: vec![vec![0.0]],
            entry_nodes: vec![0],
            arrivals: vec![law],
            correlation: CorrelationModel::Independent,
            services: vec![ServiceProfile::constant(mu, BaseRenewal::Exponential)],
            horizon: grid,
        }
    }

    /// Uniform arrivals on [−0.5, 1], service from time 0.
    fn tandem_case(mu1: f64, mu2: f64) -> NetworkSpec {
        let rate = |mu: f64| ServiceProfile {
            rate: PiecewiseConstant::new(vec![0.0], vec![0.0, mu]).unwrap(),
            base: BaseRenewal::Exponential,
        };
        NetworkSpec {
            k: 2,
            routing: vec![vec![0.0, 1.0], vec![0.0, 0.0]],
            entry_nodes: vec![0],
            arrivals: vec![ArrivalLaw::Uniform { a: -0.5, b: 1.0 }],
            correlation: CorrelationModel::Independent,
            services: vec![rate(mu1), rate(mu2)],
            horizon: TimeGrid::new(-0.5, 2.0, 0.0025).unwrap(),
        }
    }

    fn mean_var(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        (m, xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0))
    }

    #[test]
    fn single_node_netput_variance() {
        let grid = TimeGrid::new(0.0, 1.0, 0.05).unwrap();
        let spec = single(ArrivalLaw::Uniform { a: 0.0, b: 1.0 }, 2.0, grid);
        let model = DiffusionModel::new(&spec).unwrap();
        let root = RngStream::new(17);
        let reps = 10_000;
        let idx = grid.nearest_index(0.4);
        let xs: Vec<f64> = (0..reps)
            .map(|r| model.sample_netput(&root.child(r)).netput.at(0, idx))
            .collect();
        let (m, v) = mean_var(&xs);
        let target = 0.4 * 0.6 + 2.0 * 0.4;
        let se_v = target * (2.0 / reps as f64).sqrt();
        assert!(m.abs() < 5.0 * (target / reps as f64).sqrt(), "{m}");
        assert!((v - target).abs() < 5.0 * se_v, "{v} vs {target}");
    }

    #[test]
    fn tandem_netput_has_no_bridge_downstream() {
        let spec = tandem_case(1.2, 0.9);
        let s = sample_diffusion_netput(&spec, &RngStream::new(2)).unwrap();
        assert_eq!(s.bridge.coord_sup_norm(1), 0.0);
        assert_eq!(s.routing.sup_norm(), 0.0);
        let last = spec.horizon.len() - 1;
        assert_eq!(s.bridge.at(0, spec.horizon.nearest_index(1.0)), 0.0);
        assert_eq!(s.bridge.at(0, last), 0.0);
    }

    #[test]
    fn routing_term_covariance() {
        let grid = TimeGrid::new(0.0, 1.0, 0.1).unwrap();
        let mut spec = single(ArrivalLaw::Uniform { a: 0.0, b: 1.0 }, 1.0, grid);
        spec.k = 3;
        spec.routing = vec![vec![0.0, 0.3, 0.2], vec![0.0; 3], vec![0.0; 3]];
        spec.services = vec![ServiceProfile::constant(1.0, BaseRenewal::Deterministic); 3];
        let model = DiffusionModel::new(&spec).unwrap();
        let root = RngStream::new(5);
        let reps = 20_000;
        let last = grid.len() - 1;
        let (mut a, mut b) = (vec![], vec![]);
        for r in 0..reps {
            let s = model.sample_netput(&root.child(r));
            a.push(s.routing.at(1, last));
            b.push(s.routing.at(2, last));
        }
        let (_, va) = mean_var(&a);
        let (_, vb) = mean_var(&b);
        let cov = a.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>() / reps as f64;
        let se = |v: f64| v * (2.0 / reps as f64).sqrt();
        assert!((va - 0.21).abs() < 5.0 * se(0.21), "{va}");
        assert!((vb - 0.16).abs() < 5.0 * se(0.16), "{vb}");
        let se_c = ((0.21 * 0.16 + 0.06 * 0.06) / reps as f64).sqrt();
        assert!((cov + 0.06).abs() < 5.0 * se_c, "{cov}");
    }

    #[test]
    fn pointwise_before_regulation_equals_netput() {
        let grid = TimeGrid::new(0.0, 1.0, 0.01).unwrap();
        let spec = single(ArrivalLaw::Uniform { a: 0.0, b: 1.0 }, 0.5, grid);
        let model = DiffusionModel::new(&spec).unwrap();
        let root = RngStream::new(3);
        for r in 0..20 {
            let s = model.sample(&root.child(r)).unwrap();
            assert!(s.queue.unwrap().sup_distance(&s.netput).unwrap()[0] < 1e-12);
        }
    }

    #[test]
    fn underloaded_node_is_zero() {
        let grid = TimeGrid::new(0.0, 1.0, 0.01).unwrap();
        let spec = single(ArrivalLaw::Uniform { a: 0.0, b: 1.0 }, 2.0, grid);
        let q = diffusion_queue_pointwise(&spec, 0.5, &RngStream::new(1), 50).unwrap();
        assert!(q.iter().all(|v| v[0].abs() < 1e-12));
    }

    #[test]
    fn reflected_gaussian_at_emptying_time() {
        let spec = tandem_case(1.2, 1.6);
        let model = DiffusionModel::new(&spec).unwrap();
        let tau = spec.horizon.nearest_index(0.625);
        let root = RngStream::new(8);
        for r in 0..50 {
            let s = model.sample(&root.child(r)).unwrap();
            let x = s.netput.at(0, tau);
            assert!((s.queue.unwrap().at(0, tau) - (x + (-x).max(0.0))).abs() < 1e-12);
        }
    }

    #[test]
    fn workload_scaling() {
        let grid = TimeGrid::new(0.0, 1.0, 0.05).unwrap();
        let spec = single(ArrivalLaw::Uniform { a: 0.0, b: 1.0 }, 1.0, grid);
        let model = DiffusionModel::new(&spec).unwrap();
        let s = model.sample(&RngStream::new(0)).unwrap();
        assert_eq!(diffusion_workload(&s, &spec).unwrap(), s.queue.clone().unwrap());
        let spec2 = tandem_case(1.2, 1.6);
        let s2 = DiffusionModel::new(&spec2).unwrap().sample(&RngStream::new(0)).unwrap();
        assert!(matches!(diffusion_workload(&s2, &spec2), Err(Error::NotSupported(_))));
    }

    #[test]
    fn closed_form_matches_generic_regulator() {
        for (mu1, mu2, case) in [
            (1.2, 1.6, TandemCase::SlowerFirst),
            (1.2, 0.9, TandemCase::FasterFirst),
            (1.2, 1.2, TandemCase::Equal),
        ] {
            let spec = tandem_case(mu1, mu2);
            let td = TandemDiffusion::new(&spec).unwrap();
            assert_eq!(td.case(), case);
            assert_eq!(td.tau1_index(), spec.horizon.nearest_index(0.625));
            let root = RngStream::new(31);
            for r in 0..20 {
                let path = td.sample(&root.child(r));
                let generic = td.model().regulate(&path.sample.netput).unwrap();
                let closed = path.sample.queue.as_ref().unwrap();
                let d = closed.sup_distance(&generic.value).unwrap();
                assert!(d.iter().all(|&v| v < 1e-9), "{case:?}: {d:?}");
            }
        }
    }

    #[test]
    fn discontinuity_structure_per_case() {
        let root = RngStream::new(77);
        let slower = TandemDiffusion::new(&tandem_case(1.2, 1.6)).unwrap();
        let equal = TandemDiffusion::new(&tandem_case(1.2, 1.2)).unwrap();
        for r in 0..50 {
            let p = slower.sample(&root.child(r));
            assert_eq!(p.discontinuities.len(), 1);
            let d = &p.discontinuities[0];
            let expect = if d.netput >= 0.0 {
                DiscontinuityKind::Right
            } else {
                DiscontinuityKind::Left
            };
            assert_eq!(d.kind, expect);
            assert!(p.sample.queue.unwrap().coord(1)[slower.node2_start + 1..]
                .iter()
                .all(|v| v.abs() < 1e-12));

            let p = equal.sample(&root.child(r));
            let nodes: Vec<(usize, f64)> = p.discontinuities.iter().map(|d| (d.node, d.t)).collect();
            assert_eq!(nodes, vec![(1, 0.625), (2, 0.625)]);
            let q2 = p.sample.queue.unwrap();
            assert!(q2.coord(1)[equal.tau1_index() + 1..].iter().all(|v| v.abs() < 1e-12));
        }
    }
}
