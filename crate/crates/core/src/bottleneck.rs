//! Load classification, empty chains, discontinuity reporting and transitory
//! bottleneck timelines.
//!
//! Nodes are 0-based in the API and 1-based in serialized output.

use serde::Serialize;

use crate::diffusion::DiffusionModel;
use crate::error::{Error, Result};
use crate::fluid::{crossing_times, CrossingTimes, FluidSolution};
use crate::model::NetworkSpec;
use crate::parallel::par_try_map;
use crate::paths::{TimeGrid, VectorPath};
use crate::reflection::regime_changes;
use crate::stochastic::RngStream;

/// Grid windows for the one-sided tests.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LoadOptions {
    /// Regulator-increment window, in grid steps.
    pub window: usize,
    /// End-of-overloading look-back, in grid steps.
    pub eo_steps: usize,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions { window: 2, eo_steps: 5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LoadClass {
    Overloaded,
    Underloaded,
    Critical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct CriticalFlags {
    /// End of overloading.
    pub eo: bool,
    /// Start of underloading: empty, regulator flat before and growing after.
    pub su: bool,
    /// Start of overloading: empty now, positive just after.
    pub so: bool,
}

/// Per-node, per-grid-point load classes of a fluid solution.
#[derive(Debug, Clone)]
pub struct LoadClassification {
    grid: TimeGrid,
    k: usize,
    options: LoadOptions,
    /// `class[node][i]`.
    class: Vec<Vec<LoadClass>>,
    flags: Vec<Vec<CriticalFlags>>,
    /// `y_k(t) ≤ tol` (no idling yet).
    empty: Vec<Vec<bool>>,
}

impl LoadClassification {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn nodes(&self) -> usize {
        self.k
    }

    pub fn options(&self) -> LoadOptions {
        self.options
    }

    pub fn class(&self, node: usize, i: usize) -> LoadClass {
        self.class[node][i]
    }

    pub fn flags(&self, node: usize, i: usize) -> CriticalFlags {
        self.flags[node][i]
    }

    fn set(&self, keep: impl Fn(usize) -> bool) -> Vec<usize> {
        (0..self.k).filter(|&n| keep(n)).collect()
    }

    pub fn overloaded(&self, i: usize) -> Vec<usize> {
        self.set(|n| self.class[n][i] == LoadClass::Overloaded)
    }

    pub fn underloaded(&self, i: usize) -> Vec<usize> {
        self.set(|n| self.class[n][i] == LoadClass::Underloaded)
    }

    pub fn critical(&self, i: usize) -> Vec<usize> {
        self.set(|n| self.class[n][i] == LoadClass::Critical)
    }

    pub fn end_of_overloading(&self, i: usize) -> Vec<usize> {
        self.set(|n| self.flags[n][i].eo)
    }

    pub fn start_of_underloading(&self, i: usize) -> Vec<usize> {
        self.set(|n| self.flags[n][i].su)
    }

    pub fn start_of_overloading(&self, i: usize) -> Vec<usize> {
        self.set(|n| self.flags[n][i].so)
    }

    /// Regulator still at zero.
    pub fn regulator_empty(&self, node: usize, i: usize) -> bool {
        self.empty[node][i]
    }
}

pub fn classify_loads(fluid: &FluidSolution) -> LoadClassification {
    classify_loads_with(fluid, LoadOptions::default())
}

pub fn classify_loads_with(fluid: &FluidSolution, options: LoadOptions) -> LoadClassification {
    let grid = *fluid.grid();
    let m = grid.len();
    let k = fluid.queue().dim();
    let tol = fluid.tol;
    let w = options.window.max(1);
    let mut class = vec![vec![LoadClass::Critical; m]; k];
    let mut flags = vec![vec![CriticalFlags::default(); m]; k];
    let mut empty = vec![vec![false; m]; k];
    for n in 0..k {
        let z = fluid.queue().coord(n);
        let y = fluid.regulator().coord(n);
        let pos = |i: usize| z[i] > tol;
        for i in 0..m {
            empty[n][i] = y[i] <= tol;
            if pos(i) {
                class[n][i] = LoadClass::Overloaded;
                continue;
            }
            // A zero crossing inside (t_{i−1}, t_i] is attributed to t_i.
            let eo = i > 0 && (i.saturating_sub(options.eo_steps)..i).all(pos);
            let so = i + 1 < m && pos(i + 1);
            let left_up = i > 0 && y[i] - y[i.saturating_sub(w)] > tol;
            let right_up = i + 1 < m && y[(i + w).min(m - 1)] - y[i] > tol;
            if !eo && !so && left_up && right_up {
                class[n][i] = LoadClass::Underloaded;
                continue;
            }
            let su = !eo && i + 1 < m && (i == 0 || y[i] - y[i - 1] <= tol) && right_up;
            flags[n][i] = CriticalFlags { eo, su, so };
        }
    }
    LoadClassification {
        grid,
        k,
        options,
        class,
        flags,
        empty,
    }
}

/// An empty chain `j₀ = node, j₁, …` where each `j_k` routes into `j_{k−1}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Chain {
    /// 0-based node sequence.
    pub nodes: Vec<usize>,
    pub cyclic: bool,
    pub critical: bool,
    pub sub_critical: bool,
}

/// Empty chains preceding `node` at grid index `i`. Chains have at least one
/// link and stop at the first repeated node.
pub fn find_chains(spec: &NetworkSpec, classes: &LoadClassification, node: usize, i: usize) -> Vec<Chain> {
    let k = spec.k;
    let mut out = Vec::new();
    let mut stack = vec![node];
    fn dfs(
        spec: &NetworkSpec,
        classes: &LoadClassification,
        i: usize,
        stack: &mut Vec<usize>,
        out: &mut Vec<Chain>,
        depth: usize,
    ) {
        if depth > spec.k + 1 {
            return;
        }
        let last = *stack.last().expect("non-empty");
        for prev in 0..spec.k {
            if spec.p(prev, last) <= 0.0 || !classes.regulator_empty(prev, i) {
                continue;
            }
            let cyclic = stack.contains(&prev);
            stack.push(prev);
            let f = classes.flags(prev, i);
            out.push(Chain {
                nodes: stack.clone(),
                cyclic,
                critical: cyclic || f.eo,
                sub_critical: cyclic || f.so,
            });
            if !cyclic {
                dfs(spec, classes, i, stack, out, depth + 1);
            }
            stack.pop();
        }
    }
    if node < k {
        dfs(spec, classes, i, &mut stack, &mut out, 1);
    }
    out
}

/// All empty chains at grid index `i`, for every node.
pub fn chains_at(spec: &NetworkSpec, classes: &LoadClassification, i: usize) -> Vec<Chain> {
    (0..spec.k).flat_map(|n| find_chains(spec, classes, n, i)).collect()
}

/// Necessary conditions for a two-sided jump of `Δ_χ(x)^node`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct JumpConditions {
    /// End of overloading with a sub-critical chain.
    pub a: bool,
    /// Start of underloading with a critical chain.
    pub b: bool,
    /// Not underloaded, with both chain types.
    pub c: bool,
}

impl JumpConditions {
    pub fn any(&self) -> bool {
        self.a || self.b || self.c
    }

    pub fn labels(&self) -> Vec<&'static str> {
        [(self.a, "a"), (self.b, "b"), (self.c, "c")]
            .into_iter()
            .filter_map(|(on, l)| on.then_some(l))
            .collect()
    }

    /// Sign pattern of `(Δ(t−), Δ(t), Δ(t+))` implied by the conditions.
    pub fn predicted_pattern(&self, overloaded: bool) -> Option<&'static str> {
        if self.a {
            Some("left < value = 0 < right")
        } else if self.b {
            Some("left > value > right = 0")
        } else if self.c && overloaded {
            Some("value < min(left, right)")
        } else {
            None
        }
    }
}

pub fn jump_conditions(spec: &NetworkSpec, classes: &LoadClassification, node: usize, i: usize) -> JumpConditions {
    let chains = find_chains(spec, classes, node, i);
    let critical = chains.iter().any(|c| c.critical);
    let sub = chains.iter().any(|c| c.sub_critical);
    let f = classes.flags(node, i);
    JumpConditions {
        a: f.eo && sub,
        b: f.su && critical,
        c: classes.class(node, i) != LoadClass::Underloaded && critical && sub,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum JumpType {
    Left,
    Right,
    /// Jumps on both sides.
    Separated,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct JumpCounts {
    pub continuous: usize,
    pub left: usize,
    pub right: usize,
    pub separated: usize,
}

/// A candidate discontinuity of `Q̂_node` at a fluid regime change.
#[derive(Debug, Clone, Serialize)]
pub struct DiscontinuityEvent {
    pub t: f64,
    #[serde(skip)]
    pub index: usize,
    /// 1-based.
    pub node: usize,
    /// Most frequent jump type across samples.
    #[serde(rename = "type")]
    pub kind: JumpType,
    /// Labels of the necessary conditions that hold ("consistent with").
    pub conditions: Vec<&'static str>,
    pub predicted: Option<&'static str>,
    pub counts: JumpCounts,
    /// Two-sided jumps seen without any necessary condition holding.
    pub unexplained: bool,
}

/// Jump threshold in units of the typical one-step increment near the
/// candidate point.
const JUMP_FACTOR: f64 = 6.0;
/// Fraction of samples that must jump for an event to be reported.
const JUMP_FRACTION: f64 = 0.1;

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Evaluates the necessary conditions at every fluid regime change and
/// compares them with jumps seen in sampled queue paths `Q̂`.
pub fn discontinuity_report(
    spec: &NetworkSpec,
    fluid: &FluidSolution,
    queues: &[VectorPath],
) -> Vec<DiscontinuityEvent> {
    let classes = classify_loads(fluid);
    discontinuity_report_with(spec, fluid, &classes, queues)
}

pub fn discontinuity_report_with(
    spec: &NetworkSpec,
    fluid: &FluidSolution,
    classes: &LoadClassification,
    queues: &[VectorPath],
) -> Vec<DiscontinuityEvent> {
    let grid = *fluid.grid();
    let m = grid.len();
    let candidates = regime_changes(&fluid.reflection, fluid.tol);
    let near_candidate = |j: usize| candidates.iter().any(|&c| c.abs_diff(j) <= 1);
    let mut events = Vec::new();
    if queues.is_empty() {
        return events;
    }
    for &c in &candidates {
        if c == 0 || c + 1 >= m {
            continue;
        }
        for node in 0..spec.k {
            // Typical one-step increment on each side, away from candidates.
            let scale = queues.iter().map(|q| q.at(node, c).abs()).fold(0.0, f64::max);
            let floor = 1e-9 * (1.0 + scale);
            let typical = |range: std::ops::Range<usize>| {
                let incs: Vec<f64> = range
                    .filter(|&j| !near_candidate(j) && !near_candidate(j + 1))
                    .flat_map(|j| queues.iter().map(move |q| (q.at(node, j + 1) - q.at(node, j)).abs()))
                    .collect();
                median(incs)
            };
            // The larger side sets the scale: a side where Q̂ is identically
            // zero says nothing about the size of ordinary moves.
            let step = typical(c.saturating_sub(10)..c - 1).max(typical(c + 1..(c + 10).min(m - 1)));
            let left_thr = JUMP_FACTOR * step + floor;
            let right_thr = left_thr;
            let mut counts = JumpCounts::default();
            for q in queues {
                let (l, v, r) = (q.at(node, c - 1), q.at(node, c), q.at(node, c + 1));
                match ((v - l).abs() > left_thr, (r - v).abs() > right_thr) {
                    (false, false) => counts.continuous += 1,
                    (true, false) => counts.left += 1,
                    (false, true) => counts.right += 1,
                    (true, true) => counts.separated += 1,
                }
            }
            let jumped = counts.left + counts.right + counts.separated;
            if (jumped as f64) < JUMP_FRACTION * queues.len() as f64 {
                continue;
            }
            let kind = [
                (counts.left, JumpType::Left),
                (counts.right, JumpType::Right),
                (counts.separated, JumpType::Separated),
            ]
            .into_iter()
            .max_by_key(|&(n, _)| n)
            .map(|(_, t)| t)
            .expect("non-empty");
            let cond = jump_conditions(spec, classes, node, c);
            let overloaded = classes.class(node, c) == LoadClass::Overloaded;
            events.push(DiscontinuityEvent {
                t: grid.time(c),
                index: c,
                node: node + 1,
                kind,
                conditions: cond.labels(),
                predicted: cond.predicted_pattern(overloaded),
                counts,
                unexplained: kind == JumpType::Separated && !cond.any(),
            });
        }
    }
    events
}

/// Thresholds for the population bottleneck rule.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TimelineOptions {
    /// `δ_b` relative to the workload scale.
    pub delta_rel: f64,
    /// Exceedance fraction above which a node is flagged.
    pub theta: f64,
    pub load: LoadOptions,
}

impl Default for TimelineOptions {
    fn default() -> Self {
        TimelineOptions {
            delta_rel: 1e-6,
            theta: 0.5,
            load: LoadOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct NodeIntervals {
    /// 1-based.
    pub node: usize,
    /// Half-open `[a, b)`: `a` is the first flagged grid time, `b` the first
    /// unflagged one (or the horizon end).
    pub intervals: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct CountAt {
    pub t: f64,
    pub count: usize,
}

/// Maximal run of grid points with the same bottleneck set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Phase {
    pub start: f64,
    pub end: f64,
    /// 1-based.
    pub nodes: Vec<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TimelineParams {
    pub reps: usize,
    pub delta_b: f64,
    pub theta_b: f64,
    pub window_steps: usize,
    pub eo_steps: usize,
    pub h: f64,
}

/// Per node and grid point moments of `Ẑ` across replications.
#[derive(Debug, Clone)]
pub struct WorkloadMoments {
    pub mean_abs: Vec<Vec<f64>>,
    pub variance: Vec<Vec<f64>>,
    /// Standard error of the sample variance.
    pub variance_se: Vec<Vec<f64>>,
    pub exceedance: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BottleneckReport {
    pub nodes: Vec<NodeIntervals>,
    pub counts: Vec<CountAt>,
    pub discontinuities: Vec<DiscontinuityEvent>,
    pub phases: Vec<Phase>,
    /// Density and cumulative-balance crossing times per node, when there is
    /// a single entry node. Both are candidate phase endpoints.
    pub crossings: Option<Vec<CrossingTimes>>,
    pub params: TimelineParams,
    #[serde(skip)]
    pub flagged: Vec<Vec<bool>>,
    #[serde(skip)]
    pub moments: WorkloadMoments,
    #[serde(skip)]
    pub grid: Option<TimeGrid>,
}

impl BottleneckReport {
    /// Flagged nodes (1-based) at grid index `i`.
    pub fn set_at(&self, i: usize) -> Vec<usize> {
        (0..self.flagged.len()).filter(|&k| self.flagged[k][i]).map(|k| k + 1).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Grid points violating the variance consistency rule: flagged with
    /// variance within 5 SE of zero, or unflagged with mean `|Ẑ|` above
    /// `2 δ_b`. Returned as `(node, index)`, 0-based.
    pub fn variance_inconsistencies(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let d = self.params.delta_b;
        for (k, row) in self.flagged.iter().enumerate() {
            for (i, &f) in row.iter().enumerate() {
                let var = self.moments.variance[k][i];
                let se = self.moments.variance_se[k][i];
                let bad = if f {
                    var <= 5.0 * se
                } else {
                    // Only open unflagged stretches count.
                    let open = i > 0 && i + 1 < row.len() && !row[i - 1] && !row[i + 1];
                    open && self.moments.mean_abs[k][i] >= 2.0 * d
                };
                if bad {
                    out.push((k, i));
                }
            }
        }
        out
    }
}

fn moments(samples: &[VectorPath], k: usize, m: usize, delta: f64) -> WorkloadMoments {
    let r = samples.len() as f64;
    let mut mean_abs = vec![vec![0.0; m]; k];
    let mut variance = vec![vec![0.0; m]; k];
    let mut variance_se = vec![vec![0.0; m]; k];
    let mut exceedance = vec![vec![0.0; m]; k];
    for n in 0..k {
        for i in 0..m {
            let vals = samples.iter().map(|s| s.at(n, i));
            let mean = vals.clone().sum::<f64>() / r;
            let mut m2 = 0.0;
            let mut m4 = 0.0;
            let mut abs = 0.0;
            let mut over = 0usize;
            for v in vals {
                let d = v - mean;
                m2 += d * d;
                m4 += d * d * d * d;
                abs += v.abs();
                over += usize::from(v.abs() > delta);
            }
            m2 /= r;
            m4 /= r;
            mean_abs[n][i] = abs / r;
            variance[n][i] = m2 * r / (r - 1.0).max(1.0);
            variance_se[n][i] = ((m4 - m2 * m2).max(0.0) / r).sqrt();
            exceedance[n][i] = over as f64 / r;
        }
    }
    WorkloadMoments {
        mean_abs,
        variance,
        variance_se,
        exceedance,
    }
}

fn runs(grid: &TimeGrid, flags: &[bool]) -> Vec<[f64; 2]> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, &f) in flags.iter().enumerate() {
        match (f, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                out.push([grid.time(s), grid.time(i)]);
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push([grid.time(s), grid.t1()]);
    }
    out
}

/// Monte Carlo bottleneck timeline from `reps` diffusion workload samples.
pub fn bottleneck_timeline(spec: &NetworkSpec, reps: usize, rng: &RngStream) -> Result<BottleneckReport> {
    bottleneck_timeline_with(spec, reps, rng, TimelineOptions::default())
}

pub fn bottleneck_timeline_with(
    spec: &NetworkSpec,
    reps: usize,
    rng: &RngStream,
    options: TimelineOptions,
) -> Result<BottleneckReport> {
    if spec.constant_rates().is_none() {
        return Err(Error::NotSupported(
            "bottleneck timelines need constant service rates (workload)".into(),
        ));
    }
    if reps < 2 {
        return Err(crate::error::argument("bottleneck timelines need at least 2 replications"));
    }
    let model = DiffusionModel::new(spec)?;
    let samples = par_try_map(reps, |r| model.sample(&rng.child(r as u64)))?;
    let grid = spec.horizon;
    let (k, m) = (spec.k, grid.len());
    let mut workloads = Vec::with_capacity(reps);
    let mut queues = Vec::with_capacity(reps);
    for s in samples {
        let w = s.workload.ok_or_else(|| Error::NotSupported("workload unavailable".into()))?;
        workloads.push(w);
        queues.push(s.queue.expect("sample has a queue"));
    }
    let scale = median(workloads.iter().map(|w| w.sup_norm()).collect()).max(1.0);
    let delta = options.delta_rel * scale;
    let mom = moments(&workloads, k, m, delta);
    let flagged: Vec<Vec<bool>> = mom
        .exceedance
        .iter()
        .map(|row| row.iter().map(|&f| f > options.theta).collect())
        .collect();

    let nodes = flagged
        .iter()
        .enumerate()
        .map(|(n, f)| NodeIntervals {
            node: n + 1,
            intervals: runs(&grid, f),
        })
        .collect();
    let set = |i: usize| -> Vec<usize> { (0..k).filter(|&n| flagged[n][i]).map(|n| n + 1).collect() };
    let counts = (0..m)
        .map(|i| CountAt {
            t: grid.time(i),
            count: set(i).len(),
        })
        .collect();
    let mut phases: Vec<Phase> = Vec::new();
    for i in 0..m {
        let s = set(i);
        match phases.last_mut() {
            Some(p) if p.nodes == s => {}
            _ => {
                if let Some(p) = phases.last_mut() {
                    p.end = grid.time(i);
                }
                phases.push(Phase {
                    start: grid.time(i),
                    end: grid.t1(),
                    nodes: s,
                });
            }
        }
    }
    let fluid = model.fluid();
    let classes = classify_loads_with(fluid, options.load);
    let discontinuities = discontinuity_report_with(spec, fluid, &classes, &queues);
    let crossings = if spec.arrivals.len() == 1 {
        Some(crossing_times(spec)?)
    } else {
        None
    };
    Ok(BottleneckReport {
        nodes,
        counts,
        discontinuities,
        phases,
        crossings,
        params: TimelineParams {
            reps,
            delta_b: delta,
            theta_b: options.theta,
            window_steps: options.load.window,
            eo_steps: options.load.eo_steps,
            h: grid.h(),
        },
        flagged,
        moments: mom,
        grid: Some(grid),
    })
}

/// Collapses phases shorter than `min_len` into their predecessor, to read
/// off the coarse structure of a noisy timeline.
pub fn coarse_phases(phases: &[Phase], min_len: f64) -> Vec<Phase> {
    let mut out: Vec<Phase> = Vec::new();
    for p in phases {
        if p.end - p.start < min_len && !out.is_empty() {
            out.last_mut().expect("non-empty").end = p.end;
            continue;
        }
        match out.last_mut() {
            Some(last) if last.nodes == p.nodes => last.end = p.end,
            _ => out.push(p.clone()),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fluid::fluid_solve;
    use crate::model::{ArrivalLaw, BaseRenewal, CorrelationModel, ServiceProfile};
    use crate::paths::PiecewiseConstant;

    fn tandem(law: ArrivalLaw, rates: &[f64], grid: TimeGrid) -> NetworkSpec {
        let k = rates.len();
        let routing = (0..k)
            .map(|i| (0..k).map(|j| if j == i + 1 { 1.0 } else { 0.0 }).collect())
            .collect();
        NetworkSpec {
            k,
            routing,
            entry_nodes: vec![0],
            arrivals: vec![law],
            correlation: CorrelationModel::Independent,
            services: rates
                .iter()
                .map(|&mu| ServiceProfile::constant(mu, BaseRenewal::Exponential))
                .collect(),
            horizon: grid,
        }
    }

    fn uniform01() -> ArrivalLaw {
        ArrivalLaw::Uniform { a: 0.0, b: 1.0 }
    }

    /// Uniform on [−0.5, 1] with service starting at 0.
    fn tandem_uniform(mu1: f64, mu2: f64) -> NetworkSpec {
        let rate = |mu: f64| ServiceProfile {
            rate: PiecewiseConstant::new(vec![0.0], vec![0.0, mu]).unwrap(),
            base: BaseRenewal::Exponential,
        };
        NetworkSpec {
            services: vec![rate(mu1), rate(mu2)],
            ..tandem(
                ArrivalLaw::Uniform { a: -0.5, b: 1.0 },
                &[mu1, mu2],
                TimeGrid::new(-0.5, 2.0, 0.0025).unwrap(),
            )
        }
    }

    #[test]
    fn example1_last_node_overloaded_then_underloaded() {
        let spec = tandem(uniform01(), &[1.0, 1.0, 0.5], TimeGrid::new(0.0, 2.5, 0.0025).unwrap());
        let c = classify_loads(&fluid_solve(&spec).unwrap());
        let g = *c.grid();
        for i in 1..g.len() - 1 {
            let t = g.time(i);
            let o = c.overloaded(i);
            assert_eq!(c.overloaded(i).len() + c.underloaded(i).len() + c.critical(i).len(), 3);
            if t < 2.0 - 1e-9 {
                assert_eq!(o, vec![2], "t = {t}");
            } else if t > 2.0 + 1e-9 {
                assert_eq!(c.class(2, i), LoadClass::Underloaded, "t = {t}");
            } else {
                assert_eq!(c.class(2, i), LoadClass::Critical);
                assert!(c.flags(2, i).eo);
            }
        }
    }

    #[test]
    fn single_node_underloaded_and_emptying_point() {
        let grid = TimeGrid::new(0.0, 3.0, 0.01).unwrap();
        let fast = tandem(uniform01(), &[2.0], grid);
        let c = classify_loads(&fluid_solve(&fast).unwrap());
        assert!((1..grid.len() - 1).all(|i| c.class(0, i) == LoadClass::Underloaded));

        let slow = tandem(uniform01(), &[0.5], grid);
        let c = classify_loads(&fluid_solve(&slow).unwrap());
        let tau = grid.nearest_index(2.0);
        assert_eq!(c.class(0, tau), LoadClass::Critical);
        assert!(c.flags(0, tau).eo);
        assert_eq!(c.class(0, tau - 1), LoadClass::Overloaded);
        assert_eq!(c.class(0, tau + 1), LoadClass::Underloaded);
    }

    #[test]
    fn tandem_chain_is_critical_at_end_of_overloading() {
        // Equal rates: node 1 empties at 0.625 while node 2 is critical.
        let spec = tandem_uniform(1.2, 1.2);
        let fluid = fluid_solve(&spec).unwrap();
        let c = classify_loads(&fluid);
        let tau = spec.horizon.nearest_index(0.625);
        assert!(c.flags(0, tau).eo);
        let chains = find_chains(&spec, &c, 1, tau);
        assert_eq!(chains.len(), 1);
        assert_eq!(chains[0].nodes, vec![1, 0]);
        assert!(chains[0].critical && !chains[0].cyclic);
        // Node 2 starts underloading with a critical chain: condition (b).
        assert!(c.flags(1, tau).su);
        let cond = jump_conditions(&spec, &c, 1, tau);
        assert!(cond.b);
        assert_eq!(cond.predicted_pattern(false), Some("left > value > right = 0"));
    }

    #[test]
    fn no_empty_chains_when_regulators_positive() {
        let spec = tandem(uniform01(), &[2.0, 3.0], TimeGrid::new(0.0, 1.5, 0.005).unwrap());
        let c = classify_loads(&fluid_solve(&spec).unwrap());
        let i = spec.horizon.nearest_index(0.5);
        assert!(chains_at(&spec, &c, i).is_empty());
    }

    #[test]
    fn feedback_node_forms_cyclic_chain() {
        let mut spec = tandem(uniform01(), &[0.5], TimeGrid::new(0.0, 2.0, 0.01).unwrap());
        spec.routing = vec![vec![0.5]];
        let c = classify_loads(&fluid_solve(&spec).unwrap());
        let i = spec.horizon.nearest_index(0.5);
        assert!(c.regulator_empty(0, i));
        let chains = find_chains(&spec, &c, 0, i);
        assert_eq!(chains.len(), 1);
        assert_eq!(chains[0].nodes, vec![0, 0]);
        assert!(chains[0].cyclic && chains[0].critical && chains[0].sub_critical);
    }

    #[test]
    fn slower_first_jump_at_tau1_is_one_sided() {
        let spec = tandem_uniform(1.2, 1.6);
        let model = DiffusionModel::new(&spec).unwrap();
        let rng = RngStream::new(11);
        let queues: Vec<VectorPath> = (0..80)
            .map(|r| model.sample(&rng.child(r)).unwrap().queue.unwrap())
            .collect();
        let events = discontinuity_report(&spec, model.fluid(), &queues);
        let tau = spec.horizon.nearest_index(0.625);
        let at_tau: Vec<_> = events.iter().filter(|e| e.node == 1 && e.index.abs_diff(tau) <= 1).collect();
        assert!(!at_tau.is_empty(), "{events:?}");
        for e in &events {
            assert_ne!(e.kind, JumpType::Separated, "{e:?}");
            assert_eq!(e.counts.separated, 0);
        }
    }

    #[test]
    fn example1_fast_first_node_single_bottleneck() {
        let spec = tandem(uniform01(), &[1.5, 1.5, 0.5], TimeGrid::new(0.0, 2.5, 0.005).unwrap());
        let rep = bottleneck_timeline(&spec, 60, &RngStream::new(5)).unwrap();
        let g = spec.horizon;
        for i in 1..g.len() {
            let t = g.time(i);
            let s = rep.set_at(i);
            if t > 0.05 && t < 1.95 {
                assert_eq!(s, vec![3], "t = {t}");
            } else if t > 2.05 {
                assert!(s.is_empty(), "t = {t}");
            }
        }
        let total: usize = rep.counts.iter().map(|c| c.count).sum();
        let flagged: usize = rep.flagged.iter().flatten().filter(|&&f| f).count();
        assert_eq!(total, flagged);
        let json: serde_json::Value = serde_json::from_str(&rep.to_json()).unwrap();
        assert_eq!(json["nodes"][2]["node"], 3);
        assert!(json["counts"].as_array().unwrap().len() == g.len());
    }

    #[test]
    fn runs_are_maximal_and_disjoint() {
        let g = TimeGrid::new(0.0, 1.0, 0.25).unwrap();
        let r = runs(&g, &[true, true, false, true, true]);
        assert_eq!(r, vec![[0.0, 0.5], [0.75, 1.0]]);
        let p = vec![
            Phase { start: 0.0, end: 0.5, nodes: vec![] },
            Phase { start: 0.5, end: 0.51, nodes: vec![1] },
            Phase { start: 0.51, end: 1.0, nodes: vec![] },
        ];
        assert_eq!(coarse_phases(&p, 0.05), vec![Phase { start: 0.0, end: 1.0, nodes: vec![] }]);
    }
}
