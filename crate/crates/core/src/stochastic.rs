//! Samplers for the stochastic primitives: arrival epochs, Brownian bridges,
//! time-changed renewal and Brownian processes, and routing decisions.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{argument, Result};
use crate::linalg::{cholesky, Cholesky};
use crate::model::{ArrivalLaw, BaseRenewal, CorrelationModel, NetworkSpec, ServiceProfile};
use crate::paths::{Interpolation, TimeGrid, VectorPath};

/// Identifies an independent random stream: `(seed, stream)` always yields
/// the same sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream: u64,
}

/// Stream tags for the primitives drawn inside one replication.
pub mod tag {
    pub const ARRIVALS: u64 = 1;
    pub const SERVICE: u64 = 2;
    pub const ROUTING: u64 = 3;
    pub const BRIDGE: u64 = 4;
    pub const SERVICE_BM: u64 = 5;
    pub const ROUTING_BM: u64 = 6;
    pub const SIMULATION: u64 = 7;
    pub const LIMIT: u64 = 8;
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        RngStream { seed, stream: 0 }
    }

    /// Independent sub-stream, e.g. one per replication or per primitive.
    pub fn child(&self, index: u64) -> RngStream {
        RngStream {
            seed: self.seed,
            stream: splitmix64(self.stream ^ splitmix64(index.wrapping_add(1))),
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut r = ChaCha8Rng::seed_from_u64(self.seed);
        r.set_stream(self.stream);
        r
    }
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal")
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub(crate) fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, 0.0);
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
            }
            dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Bivariate standard normal CDF `P(X ≤ a, Y ≤ b)` with correlation `rho`.
///
/// Uses `Φ₂ = Φ(a)Φ(b) + (2π)⁻¹ ∫_0^{asin ρ} exp(−(a² − 2ab sin θ + b²) /
/// (2 cos² θ)) dθ`, a smooth integrand on which 64-point Gauss–Legendre is
/// accurate to rounding for |ρ| < 1.
pub fn bivariate_normal_cdf(a: f64, b: f64, rho: f64) -> f64 {
    let n = std_normal();
    if a == f64::NEG_INFINITY || b == f64::NEG_INFINITY {
        return 0.0;
    }
    if a == f64::INFINITY {
        return n.cdf(b);
    }
    if b == f64::INFINITY {
        return n.cdf(a);
    }
    if rho >= 1.0 {
        return n.cdf(a.min(b));
    }
    if rho <= -1.0 {
        return (n.cdf(a) + n.cdf(b) - 1.0).max(0.0);
    }
    thread_local! {
        static GL: (Vec<f64>, Vec<f64>) = gauss_legendre(64);
    }
    let upper = rho.asin();
    let integral = GL.with(|(x, w)| {
        let half = 0.5 * upper;
        x.iter()
            .zip(w)
            .map(|(xi, wi)| {
                let th = half * (xi + 1.0);
                let (s, c) = th.sin_cos();
                wi * (-(a * a - 2.0 * a * b * s + b * b) / (2.0 * c * c)).exp()
            })
            .sum::<f64>()
            * half
    });
    n.cdf(a) * n.cdf(b) + integral / (2.0 * std::f64::consts::PI)
}

/// Pairwise joint CDFs and covariance of the arrival bridge.
#[derive(Debug, Clone)]
pub struct BridgeCovariance {
    laws: Vec<ArrivalLaw>,
    correlation: CorrelationModel,
}

impl BridgeCovariance {
    pub fn new(laws: Vec<ArrivalLaw>, correlation: CorrelationModel) -> Self {
        BridgeCovariance { laws, correlation }
    }

    pub fn from_spec(spec: &NetworkSpec) -> Self {
        Self::new(spec.arrivals.clone(), spec.correlation.clone())
    }

    pub fn dim(&self) -> usize {
        self.laws.len()
    }

    pub fn laws(&self) -> &[ArrivalLaw] {
        &self.laws
    }

    /// Copula of entry nodes `i` and `j` at marginal levels `u`, `v`.
    fn copula(&self, i: usize, j: usize, u: f64, v: f64) -> f64 {
        if i == j {
            return u.min(v);
        }
        if u <= 0.0 || v <= 0.0 {
            return 0.0;
        }
        if u >= 1.0 {
            return v;
        }
        if v >= 1.0 {
            return u;
        }
        match &self.correlation {
            CorrelationModel::Independent => u * v,
            CorrelationModel::Comonotone => u.min(v),
            CorrelationModel::GaussianCopula { rho } => {
                let n = std_normal();
                bivariate_normal_cdf(n.inverse_cdf(u), n.inverse_cdf(v), rho[i][j])
            }
        }
    }

    /// `F_{ij}(t, s) = P(T_i ≤ t, T_j ≤ s)` for the epochs of one job.
    pub fn joint_cdf(&self, i: usize, j: usize, t: f64, s: f64) -> f64 {
        self.copula(i, j, self.laws[i].cdf(t), self.laws[j].cdf(s))
    }

    /// The matrix `R(t, s)` of joint CDFs (row-major `J×J`).
    pub fn raw(&self, t: f64, s: f64) -> Vec<f64> {
        let jn = self.dim();
        let mut r = vec![0.0; jn * jn];
        for i in 0..jn {
            for j in 0..jn {
                r[i * jn + j] = self.joint_cdf(i, j, t, s);
            }
        }
        r
    }

    /// `Cov(W⁰(t), W⁰(s)) = F_{ij}(t, s) − F_i(t) F_j(s)` (row-major `J×J`).
    pub fn covariance(&self, t: f64, s: f64) -> Vec<f64> {
        let jn = self.dim();
        let mut c = self.raw(t, s);
        for i in 0..jn {
            for j in 0..jn {
                c[i * jn + j] -= self.laws[i].cdf(t) * self.laws[j].cdf(s);
            }
        }
        c
    }
}

#[derive(Debug, Clone)]
enum BridgeKind {
    /// Independent coordinates, each a Markov bridge in its own `F` scale.
    Independent { levels: Vec<Vec<f64>> },
    /// One standard bridge evaluated at every coordinate's `F` level.
    Comonotone {
        union: Vec<f64>,
        positions: Vec<Vec<usize>>,
    },
    /// Full conditional-Gaussian recursion (Cholesky) over the active
    /// (coordinate, time) pairs, time-major.
    General {
        active: Vec<(usize, usize)>,
        factor: Cholesky,
    },
}

/// Pre-factored sampler for a `J`-dimensional bridge `W⁰ ∘ F` on a grid.
#[derive(Debug, Clone)]
pub struct BridgeSampler {
    grid: TimeGrid,
    dim: usize,
    kind: BridgeKind,
}

const CLAMP_TOL: f64 = 1e-12;

/// Sequential conditional mean and variance of a standard bridge at level
/// `u` given its value at `prev < u`.
fn bridge_step(prev_u: f64, prev_w: f64, u: f64, z: f64) -> f64 {
    if prev_u >= 1.0 || u >= 1.0 {
        return 0.0;
    }
    let rest = 1.0 - prev_u;
    let mean = prev_w * (1.0 - u) / rest;
    let var = ((u - prev_u) * (1.0 - u) / rest).max(0.0);
    mean + var.sqrt() * z
}

impl BridgeSampler {
    pub fn new(cov: &BridgeCovariance, grid: TimeGrid) -> Result<Self> {
        let jn = cov.dim();
        if jn == 0 {
            return Err(argument("bridge needs at least one coordinate"));
        }
        let levels: Vec<Vec<f64>> = cov
            .laws
            .iter()
            .map(|law| grid.times().map(|t| law.cdf(t)).collect())
            .collect();
        let kind = match (&cov.correlation, jn) {
            (_, 1) | (CorrelationModel::Independent, _) => BridgeKind::Independent { levels },
            (CorrelationModel::Comonotone, _) => {
                let mut union: Vec<f64> = levels.iter().flatten().copied().collect();
                union.sort_by(f64::total_cmp);
                union.dedup();
                let positions = levels
                    .iter()
                    .map(|lv| {
                        lv.iter()
                            .map(|u| union.partition_point(|x| x < u))
                            .collect()
                    })
                    .collect();
                BridgeKind::Comonotone { union, positions }
            }
            (CorrelationModel::GaussianCopula { .. }, _) => {
                let mut active = Vec::new();
                for t in 0..grid.len() {
                    for (j, lv) in levels.iter().enumerate() {
                        if lv[t] > 0.0 && lv[t] < 1.0 {
                            active.push((j, t));
                        }
                    }
                }
                let n = active.len();
                let times: Vec<f64> = grid.times().collect();
                let mut c = vec![0.0; n * n];
                for a in 0..n {
                    let (ja, ta) = active[a];
                    for b in 0..=a {
                        let (jb, tb) = active[b];
                        let v = cov.joint_cdf(ja, jb, times[ta], times[tb])
                            - levels[ja][ta] * levels[jb][tb];
                        c[a * n + b] = v;
                        c[b * n + a] = v;
                    }
                }
                let factor = cholesky(&c, n, CLAMP_TOL)?;
                BridgeKind::General { active, factor }
            }
        };
        Ok(BridgeSampler {
            grid,
            dim: jn,
            kind,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of conditional variances that were clamped from `[-1e-12, 0]`.
    pub fn clamped_pivots(&self) -> usize {
        match &self.kind {
            BridgeKind::General { factor, .. } => factor.clamped.len(),
            _ => 0,
        }
    }

    pub fn sample(&self, rng: &RngStream) -> VectorPath {
        let mut r = rng.rng();
        let m = self.grid.len();
        let mut out = VectorPath::zeros(self.grid, self.dim, Interpolation::PiecewiseLinear);
        match &self.kind {
            BridgeKind::Independent { levels } => {
                for (j, lv) in levels.iter().enumerate() {
                    let (mut pu, mut pw) = (0.0, 0.0);
                    let col = out.coord_mut(j);
                    for t in 0..m {
                        let u = lv[t];
                        if u > pu {
                            let z: f64 = r.sample(StandardNormal);
                            pw = bridge_step(pu, pw, u, z);
                            pu = u;
                        }
                        col[t] = if u <= 0.0 || u >= 1.0 { 0.0 } else { pw };
                    }
                }
            }
            BridgeKind::Comonotone { union, positions } => {
                let mut values = vec![0.0; union.len()];
                let (mut pu, mut pw) = (0.0, 0.0);
                for (v, &u) in values.iter_mut().zip(union) {
                    if u > pu {
                        let z: f64 = r.sample(StandardNormal);
                        pw = bridge_step(pu, pw, u, z);
                        pu = u;
                    }
                    *v = if u <= 0.0 || u >= 1.0 { 0.0 } else { pw };
                }
                for (j, pos) in positions.iter().enumerate() {
                    let col = out.coord_mut(j);
                    for t in 0..m {
                        col[t] = values[pos[t]];
                    }
                }
            }
            BridgeKind::General { active, factor } => {
                let z: Vec<f64> = (0..active.len()).map(|_| r.sample(StandardNormal)).collect();
                for (&(j, t), v) in active.iter().zip(factor.apply(&z)) {
                    out.set(j, t, v);
                }
            }
        }
        out
    }
}

/// One bridge draw; factor the covariance once with `BridgeSampler` when
/// drawing many.
pub fn sample_brownian_bridge(
    cov: &BridgeCovariance,
    grid: TimeGrid,
    rng: &RngStream,
) -> Result<VectorPath> {
    Ok(BridgeSampler::new(cov, grid)?.sample(rng))
}

/// Sorted arrival epochs per entry node.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrivalEpochs {
    pub per_entry: Vec<Vec<f64>>,
}

impl ArrivalEpochs {
    /// `A(t) = #{epochs ≤ t}` per entry node on `grid`.
    pub fn counting_path(&self, grid: TimeGrid) -> VectorPath {
        let coords = self
            .per_entry
            .iter()
            .map(|e| counting_on_grid(e, &grid))
            .collect();
        VectorPath::from_coords(grid, coords, Interpolation::PiecewiseConstantRight)
            .expect("counts match grid")
    }
}

/// Counts of sorted `epochs` at or before each grid time.
pub fn counting_on_grid(epochs: &[f64], grid: &TimeGrid) -> Vec<f64> {
    grid.times()
        .map(|t| epochs.partition_point(|&e| e <= t) as f64)
        .collect()
}

pub fn sample_arrival_epochs(spec: &NetworkSpec, n: usize, rng: &RngStream) -> Result<ArrivalEpochs> {
    if n == 0 {
        return Err(argument("population n must be at least 1"));
    }
    let jn = spec.entry_nodes.len();
    let mut r = rng.rng();
    let mut per_entry = vec![Vec::with_capacity(n); jn];
    let normal = std_normal();
    let copula = match &spec.correlation {
        CorrelationModel::GaussianCopula { rho } if jn > 1 => {
            let flat: Vec<f64> = rho.iter().flatten().copied().collect();
            Some(cholesky(&flat, jn, 0.0)?)
        }
        _ => None,
    };
    for _ in 0..n {
        match (&spec.correlation, &copula) {
            (_, Some(l)) => {
                let z: Vec<f64> = (0..jn).map(|_| r.sample(StandardNormal)).collect();
                for (j, x) in l.apply(&z).into_iter().enumerate() {
                    per_entry[j].push(spec.arrivals[j].quantile(normal.cdf(x)));
                }
            }
            (CorrelationModel::Comonotone, None) => {
                let u: f64 = r.gen();
                for j in 0..jn {
                    per_entry[j].push(spec.arrivals[j].quantile(u));
                }
            }
            _ => {
                for j in 0..jn {
                    let u: f64 = r.gen();
                    per_entry[j].push(spec.arrivals[j].quantile(u));
                }
            }
        }
    }
    for e in &mut per_entry {
        e.sort_by(f64::total_cmp);
    }
    Ok(ArrivalEpochs { per_entry })
}

/// Unit-mean i.i.d. increments of the base renewal process.
#[derive(Debug, Clone, Copy)]
pub struct UnitRenewal {
    base: BaseRenewal,
    gamma: Option<Gamma<f64>>,
}

impl UnitRenewal {
    pub fn new(base: BaseRenewal) -> Self {
        let gamma = match base {
            BaseRenewal::GammaScv { scv } => {
                Some(Gamma::new(1.0 / scv, scv).expect("validated positive scv"))
            }
            _ => None,
        };
        UnitRenewal { base, gamma }
    }

    pub fn draw<R: Rng + ?Sized>(&self, r: &mut R) -> f64 {
        match self.base {
            BaseRenewal::Deterministic => 1.0,
            BaseRenewal::Exponential => Exp1.sample(r),
            BaseRenewal::GammaScv { .. } => self.gamma.expect("gamma law").sample(r),
        }
    }
}

/// `S_n(t) = N(n M(t))` on the grid, with `M` integrated from the grid start.
pub fn sample_service_process(
    profile: &ServiceProfile,
    n: usize,
    grid: &TimeGrid,
    rng: &RngStream,
) -> Result<VectorPath> {
    let epochs = sample_service_epochs(profile, n, grid, rng)?;
    let t0 = grid.t0();
    let counts = grid
        .times()
        .map(|t| {
            let level = n as f64 * profile.cumulative_from(t0, t);
            epochs.partition_point(|&g| g <= level) as f64
        })
        .collect();
    VectorPath::from_coords(*grid, vec![counts], Interpolation::PiecewiseConstantRight)
}

/// Renewal epochs of the unit-rate process `N` up to `n M(t1)`.
pub fn sample_service_epochs(
    profile: &ServiceProfile,
    n: usize,
    grid: &TimeGrid,
    rng: &RngStream,
) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(argument("population n must be at least 1"));
    }
    let top = n as f64 * profile.cumulative_from(grid.t0(), grid.t1());
    let base = UnitRenewal::new(profile.base);
    let mut r = rng.rng();
    let mut epochs = Vec::new();
    let mut clock = 0.0;
    loop {
        clock += base.draw(&mut r);
        if clock > top {
            break;
        }
        epochs.push(clock);
    }
    Ok(epochs)
}

/// Brownian motion with variance rate `var_rate` evaluated at `M(t)` on the
/// grid, `M` integrated from the grid start.
pub fn sample_time_changed_bm(
    profile: &ServiceProfile,
    var_rate: f64,
    grid: &TimeGrid,
    rng: &RngStream,
) -> Vec<f64> {
    let t0 = grid.t0();
    let levels: Vec<f64> = grid.times().map(|t| profile.cumulative_from(t0, t)).collect();
    brownian_on_levels(&levels, var_rate, rng)
}

/// `W(levels[i])` for a Brownian motion with variance rate `var_rate`, given
/// non-decreasing levels starting at 0.
pub fn brownian_on_levels(levels: &[f64], var_rate: f64, rng: &RngStream) -> Vec<f64> {
    let mut r = rng.rng();
    let mut out = Vec::with_capacity(levels.len());
    let mut w = 0.0;
    let mut prev = 0.0;
    for &level in levels {
        let dv = level - prev;
        if dv > 0.0 && var_rate > 0.0 {
            let z: f64 = r.sample(StandardNormal);
            w += (var_rate * dv).sqrt() * z;
        }
        prev = level;
        out.push(w);
    }
    out
}

/// Independent categorical routing streams, one per node.
#[derive(Debug, Clone)]
pub struct RoutingSampler {
    cumulative: Vec<Vec<f64>>,
    degenerate: Vec<Option<Option<usize>>>,
    rngs: Vec<ChaCha8Rng>,
}

impl RoutingSampler {
    pub fn new(routing: &[Vec<f64>], rng: &RngStream) -> Self {
        let k = routing.len();
        let mut cumulative = Vec::with_capacity(k);
        let mut degenerate = Vec::with_capacity(k);
        for row in routing {
            let mut acc = 0.0;
            let cum: Vec<f64> = row
                .iter()
                .map(|p| {
                    acc += p;
                    acc
                })
                .collect();
            let positive: Vec<usize> = (0..k).filter(|&j| row[j] > 0.0).collect();
            degenerate.push(if positive.is_empty() {
                Some(None)
            } else if positive.len() == 1 && row[positive[0]] >= 1.0 {
                Some(Some(positive[0]))
            } else {
                None
            });
            cumulative.push(cum);
        }
        let rngs = (0..k).map(|i| rng.child(i as u64).rng()).collect();
        RoutingSampler {
            cumulative,
            degenerate,
            rngs,
        }
    }

    /// Next destination of a job leaving `node`; `None` means it exits.
    pub fn next(&mut self, node: usize) -> Option<usize> {
        if let Some(fixed) = self.degenerate[node] {
            return fixed;
        }
        let u: f64 = self.rngs[node].gen();
        let cum = &self.cumulative[node];
        let j = cum.partition_point(|&c| c <= u);
        (j < cum.len()).then_some(j)
    }

    /// `R_node^k(m)` for every destination `k` after `m` decisions.
    pub fn cumulative_counts(&mut self, node: usize, m: usize) -> Vec<usize> {
        let mut counts = vec![0; self.cumulative.len()];
        for _ in 0..m {
            if let Some(k) = self.next(node) {
                counts[k] += 1;
            }
        }
        counts
    }
}

pub fn sample_routing(routing: &[Vec<f64>], rng: &RngStream) -> RoutingSampler {
    RoutingSampler::new(routing, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paths::PiecewiseConstant;

    fn spec_with(arrivals: Vec<ArrivalLaw>, correlation: CorrelationModel) -> NetworkSpec {
        let k = arrivals.len();
        NetworkSpec {
            k,
            routing: vec![vec![0.0; k]; k],
            entry_nodes: (0..k).collect(),
            arrivals,
            correlation,
            services: vec![ServiceProfile::constant(1.0, BaseRenewal::Exponential); k],
            horizon: TimeGrid::new(0.0, 1.0, 0.01).unwrap(),
        }
    }

    fn uniform() -> ArrivalLaw {
        ArrivalLaw::Uniform { a: 0.0, b: 1.0 }
    }

    #[test]
    fn streams_are_deterministic_and_distinct() {
        let s = RngStream::new(7);
        let a: u64 = s.child(3).rng().gen();
        let b: u64 = s.child(3).rng().gen();
        let c: u64 = s.child(4).rng().gen();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn single_epoch_indicator() {
        let spec = spec_with(vec![uniform()], CorrelationModel::Independent);
        let ep = sample_arrival_epochs(&spec, 1, &RngStream::new(1)).unwrap();
        let t = ep.per_entry[0][0];
        assert!((0.0..=1.0).contains(&t));
        let a = ep.counting_path(spec.horizon);
        for (i, s) in spec.horizon.times().enumerate() {
            assert_eq!(a.at(0, i), if s >= t { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn empirical_cdf_close_at_ten_thousand() {
        let spec = spec_with(vec![uniform()], CorrelationModel::Independent);
        for seed in 0..5 {
            let ep = sample_arrival_epochs(&spec, 10_000, &RngStream::new(seed)).unwrap();
            let e = &ep.per_entry[0];
            let n = e.len() as f64;
            let d = e
                .iter()
                .enumerate()
                .map(|(i, &x)| (x - i as f64 / n).abs().max(((i + 1) as f64 / n - x).abs()))
                .fold(0.0, f64::max);
            assert!(d < 0.03, "{d}");
        }
    }

    #[test]
    fn comonotone_epochs_identical() {
        let spec = spec_with(vec![uniform(), uniform()], CorrelationModel::Comonotone);
        let ep = sample_arrival_epochs(&spec, 500, &RngStream::new(3)).unwrap();
        assert_eq!(ep.per_entry[0], ep.per_entry[1]);
    }

    /// Independent oracle: 2-D composite Simpson of the bivariate density on
    /// a box truncated at −9.
    fn phi2_oracle(a: f64, b: f64, rho: f64) -> f64 {
        let simpson = |lo: f64, hi: f64, n: usize, f: &dyn Fn(f64) -> f64| {
            let h = (hi - lo) / n as f64;
            let mut s = f(lo) + f(hi);
            for i in 1..n {
                s += f(lo + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
            }
            s * h / 3.0
        };
        let det = 1.0 - rho * rho;
        let dens = |x: f64, y: f64| {
            (-(x * x - 2.0 * rho * x * y + y * y) / (2.0 * det)).exp()
                / (2.0 * std::f64::consts::PI * det.sqrt())
        };
        simpson(-9.0, a, 800, &|x| simpson(-9.0, b, 800, &|y| dens(x, y)))
    }

    #[test]
    fn bivariate_normal_matches_quadrature_oracle() {
        for &(a, b, rho) in &[
            (0.0, 0.0, 0.5),
            (0.3, -1.2, -0.7),
            (1.5, 0.4, 0.9),
            (-0.8, -0.3, 0.2),
            (2.0, 2.0, 0.98),
        ] {
            let got = bivariate_normal_cdf(a, b, rho);
            let want = phi2_oracle(a, b, rho);
            assert!((got - want).abs() < 1e-6, "{a} {b} {rho}: {got} vs {want}");
        }
        // Closed form at the origin: 1/4 + asin(ρ)/(2π).
        let rho: f64 = 0.5;
        let exact = 0.25 + rho.asin() / (2.0 * std::f64::consts::PI);
        assert!((bivariate_normal_cdf(0.0, 0.0, rho) - exact).abs() < 1e-14);
    }

    #[test]
    fn bridge_pins_and_marginal_variance() {
        let grid = TimeGrid::new(-0.2, 1.2, 0.05).unwrap();
        let cov = BridgeCovariance::new(
            vec![uniform(), ArrivalLaw::TriangularSymmetric { a: 0.0, b: 1.0 }],
            CorrelationModel::Independent,
        );
        let sampler = BridgeSampler::new(&cov, grid).unwrap();
        let reps = 10_000;
        let probe = grid.nearest_index(0.5);
        let probe2 = grid.nearest_index(0.25);
        let root = RngStream::new(11);
        let (mut s1, mut s2) = (vec![], vec![]);
        for r in 0..reps {
            let w = sampler.sample(&root.child(r));
            for j in 0..2 {
                assert_eq!(w.at(j, 0), 0.0);
                assert_eq!(w.at(j, grid.nearest_index(1.0)), 0.0);
                assert_eq!(w.at(j, grid.len() - 1), 0.0);
            }
            s1.push(w.at(0, probe));
            s2.push(w.at(1, probe2));
        }
        let var = |s: &[f64]| {
            let m = s.iter().sum::<f64>() / s.len() as f64;
            s.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (s.len() - 1) as f64
        };
        let target1 = 0.25;
        let target2 = 0.125 * 0.875;
        for (v, t) in [(var(&s1), target1), (var(&s2), target2)] {
            let se = t * (2.0 / (reps as f64 - 1.0)).sqrt();
            assert!((v - t).abs() < 5.0 * se, "{v} vs {t}");
        }
    }

    #[test]
    fn comonotone_bridge_fully_correlated() {
        let grid = TimeGrid::new(0.0, 1.0, 0.02).unwrap();
        let cov = BridgeCovariance::new(vec![uniform(), uniform()], CorrelationModel::Comonotone);
        let w = sample_brownian_bridge(&cov, grid, &RngStream::new(5)).unwrap();
        assert_eq!(w.coord(0), w.coord(1));
        for i in 0..grid.len() {
            let c = cov.covariance(grid.time(i), grid.time(i));
            assert!((c[1] - c[0]).abs() < 1e-15);
        }
    }

    #[test]
    fn copula_bridge_cross_covariance() {
        let grid = TimeGrid::new(0.0, 1.0, 0.05).unwrap();
        let rho = 0.6;
        let laws = vec![uniform(), ArrivalLaw::TriangularSymmetric { a: 0.0, b: 1.0 }];
        let cov = BridgeCovariance::new(
            laws.clone(),
            CorrelationModel::GaussianCopula {
                rho: vec![vec![1.0, rho], vec![rho, 1.0]],
            },
        );
        let sampler = BridgeSampler::new(&cov, grid).unwrap();
        let reps = 10_000;
        let root = RngStream::new(21);
        let n = std_normal();
        for &t in &[0.3, 0.5, 0.8] {
            let i = grid.nearest_index(t);
            let t = grid.time(i);
            let (u, v) = (laws[0].cdf(t), laws[1].cdf(t));
            let f12 = phi2_oracle(n.inverse_cdf(u), n.inverse_cdf(v), rho);
            let target = f12 - u * v;
            let (mut sx, mut sy, mut sxy) = (0.0, 0.0, 0.0);
            for r in 0..reps {
                let w = sampler.sample(&root.child(r));
                let (x, y) = (w.at(0, i), w.at(1, i));
                sx += x;
                sy += y;
                sxy += x * y;
            }
            let nr = reps as f64;
            let c = (sxy - sx * sy / nr) / (nr - 1.0);
            let se = ((u * (1.0 - u) * v * (1.0 - v) + target * target) / nr).sqrt();
            assert!((c - target).abs() < 5.0 * se, "t={t}: {c} vs {target}");
        }
        assert_eq!(sampler.clamped_pivots(), 0);
    }

    #[test]
    fn service_examples() {
        let grid = TimeGrid::new(0.0, 3.0, 0.01).unwrap();
        let det = ServiceProfile::constant(1.0, BaseRenewal::Deterministic);
        let s = sample_service_process(&det, 1, &grid, &RngStream::new(0)).unwrap();
        for (i, t) in grid.times().enumerate() {
            assert_eq!(s.at(0, i), (t + 1e-12).floor());
        }
        assert_eq!(s.at(0, 0), 0.0);

        let exp = ServiceProfile::constant(2.0, BaseRenewal::Exponential);
        let g1 = TimeGrid::new(0.0, 1.0, 0.01).unwrap();
        for seed in 0..5 {
            let s = sample_service_process(&exp, 10_000, &g1, &RngStream::new(seed)).unwrap();
            assert_eq!(s.at(0, 0), 0.0);
            let last = s.at(0, g1.len() - 1) / 1e4;
            assert!((last - 2.0).abs() < 0.05, "{last}");
        }
    }

    #[test]
    fn gamma_increments_have_unit_mean_and_scv() {
        let base = UnitRenewal::new(BaseRenewal::GammaScv { scv: 0.5 });
        let mut r = RngStream::new(2).rng();
        let xs: Vec<f64> = (0..200_000).map(|_| base.draw(&mut r)).collect();
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64;
        assert!((m - 1.0).abs() < 0.01 && (v - 0.5).abs() < 0.01, "{m} {v}");
    }

    #[test]
    fn time_changed_bm_variance() {
        let grid = TimeGrid::new(0.0, 2.0, 0.1).unwrap();
        let prof = ServiceProfile {
            rate: PiecewiseConstant::new(vec![1.0], vec![0.5, 2.0]).unwrap(),
            base: BaseRenewal::Exponential,
        };
        let reps = 10_000;
        let root = RngStream::new(9);
        let end: Vec<f64> = (0..reps)
            .map(|r| *sample_time_changed_bm(&prof, 1.0, &grid, &root.child(r)).last().unwrap())
            .collect();
        let var = end.iter().map(|x| x * x).sum::<f64>() / reps as f64;
        let target = 2.5;
        assert!((var - target).abs() < 5.0 * target * (2.0 / reps as f64).sqrt(), "{var}");
    }

    #[test]
    fn routing_examples() {
        let tandem = vec![vec![0.0, 1.0], vec![0.0, 0.0]];
        let mut r = sample_routing(&tandem, &RngStream::new(1));
        assert!((0..100).all(|_| r.next(0) == Some(1)));
        assert!((0..100).all(|_| r.next(1).is_none()));

        let split = vec![vec![0.0, 0.3, 0.2], vec![0.0; 3], vec![0.0; 3]];
        let mut r = sample_routing(&split, &RngStream::new(2));
        let m = 100_000;
        let counts = r.cumulative_counts(0, m);
        assert_eq!(counts[0], 0);
        assert!((counts[1] as f64 / m as f64 - 0.3).abs() < 0.01);
        assert!((counts[2] as f64 / m as f64 - 0.2).abs() < 0.01);
    }
}
