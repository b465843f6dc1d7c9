//! Monte Carlo checks tying the simulator to its fluid and diffusion limits.
//!
//! Every check is deterministic given the spec, parameters and seed:
//! replications run in parallel but are reduced in index order.

use serde::Serialize;
use serde_json::{json, Value};

use crate::diffusion::DiffusionModel;
use crate::error::{argument, Error, Result};
use crate::model::{BaseRenewal, NetworkSpec};
use crate::parallel::par_try_map;
use crate::reflection::regime_changes;
use crate::simulator::simulate;
use crate::stochastic::{sample_arrival_epochs, sample_routing, sample_service_epochs, tag, RngStream};

/// Slope band for `n^{−1/2}` convergence.
pub const SLOPE_BAND: (f64, f64) = (-0.6, -0.4);
/// Band for the median of `√n · sup` at the largest `n`.
pub const SCALED_BAND: (f64, f64) = (0.5, 1.2);
pub const KS_LEVEL: f64 = 0.01;
/// Minimum distance from a fluid regime change, in grid steps.
pub const CONTINUITY_STEPS: usize = 5;
/// Variance checks pass within this many standard errors.
pub const VARIANCE_SE: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Kolmogorov tail `Q(λ) = 2 Σ_{j≥1} (−1)^{j−1} e^{−2 j² λ²}`.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let a = -2.0 * lambda * lambda;
    let mut sum = 0.0;
    let mut sign = 1.0;
    let mut prev = 0.0f64;
    for j in 1..=100 {
        let term = sign * 2.0 * (a * (j * j) as f64).exp();
        sum += term;
        if term.abs() <= 1e-3 * prev || term.abs() <= 1e-8 * sum.abs() {
            return sum.clamp(0.0, 1.0);
        }
        sign = -sign;
        prev = term.abs();
    }
    1.0
}

/// Two-sample Kolmogorov–Smirnov test with the asymptotic p-value and the
/// usual small-sample correction of `λ`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.is_empty() || b.is_empty() {
        return Err(argument("KS test needs two non-empty samples"));
    }
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n1, n2) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < x.len() && j < y.len() {
        let v = x[i].min(y[j]);
        while i < x.len() && x[i] <= v {
            i += 1;
        }
        while j < y.len() && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n1 - j as f64 / n2).abs());
    }
    let en = (n1 * n2 / (n1 + n2)).sqrt();
    Ok(KsResult {
        statistic: d,
        p_value: kolmogorov_q((en + 0.12 + 0.11 / en) * d),
    })
}

/// Linear-interpolated quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub se: f64,
    pub intercept: f64,
}

/// Least-squares fit of `log y = a + b log n` with the standard error of `b`.
pub fn fit_loglog_slope(ns: &[f64], ys: &[f64]) -> Result<SlopeFit> {
    if ns.len() != ys.len() || ns.len() < 3 {
        return Err(argument("slope fit needs at least 3 (n, value) pairs"));
    }
    if ns.iter().chain(ys).any(|&v| !(v > 0.0)) {
        return Err(argument("slope fit needs positive values"));
    }
    let lx: Vec<f64> = ns.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let k = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    Ok(SlopeFit {
        slope,
        se: (rss / (k - 2.0) / sxx).sqrt(),
        intercept,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct PerN {
    pub n: usize,
    pub reps: usize,
    pub statistic: &'static str,
    pub median: f64,
    pub p05: f64,
    pub p95: f64,
}

impl PerN {
    fn from_values(n: usize, statistic: &'static str, mut v: Vec<f64>) -> Self {
        v.sort_by(f64::total_cmp);
        PerN {
            n,
            reps: v.len(),
            statistic,
            median: quantile_sorted(&v, 0.5),
            p05: quantile_sorted(&v, 0.05),
            p95: quantile_sorted(&v, 0.95),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceResult {
    pub check: String,
    pub params: Value,
    pub per_n: Vec<PerN>,
    pub slope: Option<SlopeFit>,
    pub pass: bool,
    /// Check-specific diagnostics.
    pub details: Value,
}

impl ConvergenceResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("result serializes")
    }
}

fn check_n_list(n_list: &[usize]) -> Result<()> {
    if n_list.len() < 3 {
        return Err(argument("n_list needs at least 3 values"));
    }
    if n_list.windows(2).any(|w| w[1] <= w[0]) || n_list[0] == 0 {
        return Err(argument("n_list must be positive and strictly increasing"));
    }
    Ok(())
}

/// `sup_t |n⁻¹A(t) − F(t)|` from sorted epochs, exact over all `t`.
pub fn empirical_sup_distance(sorted: &[f64], cdf: impl Fn(f64) -> f64, cdf_left: impl Fn(f64) -> f64) -> f64 {
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let e = sorted[i];
        let before = i as f64 / n;
        while i < sorted.len() && sorted[i] == e {
            i += 1;
        }
        let after = i as f64 / n;
        d = d.max((cdf_left(e) - before).abs()).max((after - cdf(e)).abs());
    }
    d
}

pub fn check_fslln_arrivals(spec: &NetworkSpec, n_list: &[usize], reps: usize, rng: &RngStream) -> Result<ConvergenceResult> {
    check_n_list(n_list)?;
    let root = rng.child(tag::ARRIVALS);
    let mut per_n = Vec::new();
    for (ni, &n) in n_list.iter().enumerate() {
        let stream = root.child(ni as u64);
        let stats = par_try_map(reps, |r| {
            let epochs = sample_arrival_epochs(spec, n, &stream.child(r as u64))?;
            Ok(epochs
                .per_entry
                .iter()
                .zip(&spec.arrivals)
                .map(|(e, law)| empirical_sup_distance(e, |t| law.cdf(t), |t| law.cdf_left(t)))
                .fold(0.0, f64::max))
        })?;
        per_n.push(PerN::from_values(n, "sup_norm", stats));
    }
    let last = per_n.last().expect("n_list non-empty");
    let n_max = last.n as f64;
    let degenerate = per_n.iter().all(|p| p.median <= 1.0 / p.n as f64);
    let (slope, pass, scaled) = if degenerate {
        (None, true, last.median * n_max.sqrt())
    } else {
        let ns: Vec<f64> = per_n.iter().map(|p| p.n as f64).collect();
        let ys: Vec<f64> = per_n.iter().map(|p| p.median.max(f64::MIN_POSITIVE)).collect();
        let fit = fit_loglog_slope(&ns, &ys)?;
        let scaled = last.median * n_max.sqrt();
        let ok = (SLOPE_BAND.0..=SLOPE_BAND.1).contains(&fit.slope)
            && (SCALED_BAND.0..=SCALED_BAND.1).contains(&scaled);
        (Some(fit), ok, scaled)
    };
    Ok(ConvergenceResult {
        check: "fslln_arrivals".into(),
        params: json!({ "n_list": n_list, "reps": reps }),
        per_n,
        slope,
        pass,
        details: json!({
            "degenerate": degenerate,
            "scaled_median_at_max_n": scaled,
            "slope_band": [SLOPE_BAND.0, SLOPE_BAND.1],
            "scaled_band": [SCALED_BAND.0, SCALED_BAND.1],
        }),
    })
}

/// Pointwise FCLT check at `t`: simulator `√n(n⁻¹Q_n(t) − Q̄(t))` against
/// draws of `Q̂(t)`, node by node.
pub fn check_fclt_queue(spec: &NetworkSpec, t: f64, n: usize, reps: usize, rng: &RngStream) -> Result<ConvergenceResult> {
    check_fclt_queue_against(spec, spec, t, n, reps, rng)
}

/// As [`check_fclt_queue`], but the fluid centering and the limit law come
/// from `model_spec` while jobs are simulated from `sim_spec`. A mismatched
/// model is the negative control.
pub fn check_fclt_queue_against(
    sim_spec: &NetworkSpec,
    model_spec: &NetworkSpec,
    t: f64,
    n: usize,
    reps: usize,
    rng: &RngStream,
) -> Result<ConvergenceResult> {
    if sim_spec.k != model_spec.k || !sim_spec.horizon.same_as(&model_spec.horizon) {
        return Err(argument("simulated and model specs need the same nodes and grid"));
    }
    if reps == 0 || n == 0 {
        return Err(argument("n and reps must be positive"));
    }
    let model = DiffusionModel::new(model_spec)?;
    let idx = model.index_of(t)?;
    let grid = model_spec.horizon;
    let fluid = model.fluid();
    let changes = regime_changes(&fluid.reflection, fluid.tol);
    if let Some(&c) = changes.iter().find(|&&c| c.abs_diff(idx) < CONTINUITY_STEPS) {
        let safe: Vec<String> = changes.iter().map(|&c| format!("{:.6}", grid.time(c))).collect();
        return Err(Error::Refused(format!(
            "t = {t} is within {CONTINUITY_STEPS} grid steps of the fluid regime change at {:.6}; \
             the limit may jump there. Pick t at least {:.6} away from every change point: [{}]",
            grid.time(c),
            CONTINUITY_STEPS as f64 * grid.h(),
            safe.join(", ")
        )));
    }
    let qbar = fluid.queue().column(idx);
    let sqrt_n = (n as f64).sqrt();
    let sim_root = rng.child(tag::SIMULATION);
    let sim = par_try_map(reps, |r| {
        let traj = simulate(sim_spec, n, &sim_root.child(r as u64))?;
        Ok((0..sim_spec.k)
            .map(|k| sqrt_n * (traj.queue.at(k, idx) / n as f64 - qbar[k]))
            .collect::<Vec<f64>>())
    })?;
    let lim = model.queue_at(t, reps, &rng.child(tag::LIMIT))?;
    let mut nodes = Vec::new();
    let mut pass = true;
    for k in 0..sim_spec.k {
        let a: Vec<f64> = sim.iter().map(|v| v[k]).collect();
        let b: Vec<f64> = lim.iter().map(|v| v[k]).collect();
        let ks = ks_two_sample(&a, &b)?;
        let reject = ks.p_value < KS_LEVEL;
        pass &= !reject;
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        nodes.push(json!({
            "node": k + 1,
            "ks": ks.statistic,
            "p_value": ks.p_value,
            "reject": reject,
            "sim_mean": mean(&a),
            "limit_mean": mean(&b),
            "sim_mean_abs": a.iter().map(|v| v.abs()).sum::<f64>() / a.len() as f64,
            "limit_mean_abs": b.iter().map(|v| v.abs()).sum::<f64>() / b.len() as f64,
        }));
    }
    let ks_values: Vec<f64> = nodes.iter().map(|v| v["ks"].as_f64().unwrap_or(f64::NAN)).collect();
    Ok(ConvergenceResult {
        check: "fclt_queue".into(),
        params: json!({ "t": t, "grid_t": grid.time(idx), "n": n, "reps_per_side": reps, "level": KS_LEVEL }),
        per_n: vec![PerN::from_values(n, "ks", ks_values)],
        slope: None,
        pass,
        details: json!({ "nodes": nodes }),
    })
}

/// Exact `sup_{u ≤ top} |N(n u)/n − u|` from sorted unit-rate epochs.
fn renewal_sup_distance(epochs: &[f64], n: f64, top: f64) -> f64 {
    let mut d: f64 = 0.0;
    for (i, &g) in epochs.iter().enumerate() {
        let u = g / n;
        d = d.max((u - i as f64 / n).abs()).max(((i + 1) as f64 / n - u).abs());
    }
    d.max((top - epochs.len() as f64 / n).abs())
}

/// Variance estimate with the standard error of the estimator.
fn variance_with_se(v: &[f64]) -> (f64, f64) {
    let r = v.len() as f64;
    let mean = v.iter().sum::<f64>() / r;
    let sq: Vec<f64> = v.iter().map(|x| (x - mean).powi(2)).collect();
    let var = sq.iter().sum::<f64>() / (r - 1.0);
    let m = sq.iter().sum::<f64>() / r;
    let sd = (sq.iter().map(|s| (s - m).powi(2)).sum::<f64>() / (r - 1.0)).sqrt();
    (var, sd / r.sqrt())
}

/// Service FSLLN/FCLT per node and routing FCLT per random row.
pub fn check_service_routing(spec: &NetworkSpec, n_list: &[usize], reps: usize, rng: &RngStream) -> Result<ConvergenceResult> {
    check_n_list(n_list)?;
    if reps < 3 {
        return Err(argument("variance checks need at least 3 replications"));
    }
    let grid = spec.horizon;
    let t0 = grid.t0();
    let svc_root = rng.child(tag::SERVICE);
    let n_max = *n_list.last().expect("checked");
    let mut per_n = Vec::new();
    let mut slopes = Vec::new();
    let mut service = Vec::new();
    let mut pass = true;
    let mut first_fit = None;
    for (k, profile) in spec.services.iter().enumerate() {
        let top = profile.cumulative_from(t0, grid.t1());
        if top <= 0.0 {
            continue;
        }
        let mut medians = Vec::new();
        for (ni, &n) in n_list.iter().enumerate() {
            let stream = svc_root.child(k as u64).child(ni as u64);
            let stats = par_try_map(reps, |r| {
                let epochs = sample_service_epochs(profile, n, &grid, &stream.child(r as u64))?;
                Ok(renewal_sup_distance(&epochs, n as f64, top))
            })?;
            let p = PerN::from_values(n, "sup_norm", stats);
            medians.push(p.median);
            per_n.push(p);
        }
        let degenerate = matches!(profile.base, BaseRenewal::Deterministic);
        let fit = if medians.iter().all(|&m| m > 0.0) {
            let ns: Vec<f64> = n_list.iter().map(|&n| n as f64).collect();
            Some(fit_loglog_slope(&ns, &medians)?)
        } else {
            None
        };
        // FCLT: Var √n(n⁻¹S_n(t*) − M(t*)) = scv · M(t*), at t* = 1 when
        // capacity has accrued by then, else the first grid time with M ≥ 1.
        let t_star = if grid.contains(1.0) && profile.cumulative_from(t0, 1.0) > 0.0 {
            grid.time(grid.nearest_index(1.0))
        } else {
            grid.times().find(|&t| profile.cumulative_from(t0, t) >= 1.0).unwrap_or(grid.t1())
        };
        let level = profile.cumulative_from(t0, t_star);
        let stream = svc_root.child(k as u64).child(u64::MAX);
        let scaled = par_try_map(reps, |r| {
            let epochs = sample_service_epochs(profile, n_max, &grid, &stream.child(r as u64))?;
            let count = epochs.partition_point(|&g| g <= n_max as f64 * level) as f64;
            Ok((n_max as f64).sqrt() * (count / n_max as f64 - level))
        })?;
        let (var, se) = variance_with_se(&scaled);
        let target = profile.base.scv() * level;
        let var_ok = if degenerate {
            // Floor-function fluctuation only.
            var <= 1.0 / n_max as f64
        } else {
            (var - target).abs() <= VARIANCE_SE * se
        };
        let slope_ok = degenerate || fit.is_some_and(|f| (SLOPE_BAND.0..=SLOPE_BAND.1).contains(&f.slope));
        pass &= var_ok && slope_ok;
        if first_fit.is_none() {
            first_fit = fit;
        }
        slopes.push(json!({ "node": k + 1, "slope": fit.map(|f| f.slope), "se": fit.map(|f| f.se), "pass": slope_ok }));
        service.push(json!({
            "node": k + 1,
            "t": t_star,
            "level": level,
            "variance": var,
            "se": se,
            "target": target,
            "degenerate": degenerate,
            "pass": var_ok,
        }));
    }

    let route_root = rng.child(tag::ROUTING);
    let mut routing = Vec::new();
    for i in 0..spec.k {
        let row = &spec.routing[i];
        if !row.iter().any(|&p| p > 0.0 && p < 1.0) {
            continue;
        }
        let stream = route_root.child(i as u64);
        let draws = par_try_map(reps, |r| {
            let mut sampler = sample_routing(&spec.routing, &stream.child(r as u64));
            let counts = sampler.cumulative_counts(i, n_max);
            let sn = (n_max as f64).sqrt();
            Ok(counts
                .iter()
                .zip(row)
                .map(|(&c, &p)| sn * (c as f64 / n_max as f64 - p))
                .collect::<Vec<f64>>())
        })?;
        // Trace of the sample covariance, with SE from per-replication terms.
        let r = draws.len() as f64;
        let means: Vec<f64> = (0..spec.k).map(|k| draws.iter().map(|d| d[k]).sum::<f64>() / r).collect();
        let terms: Vec<f64> = draws
            .iter()
            .map(|d| d.iter().zip(&means).map(|(x, m)| (x - m).powi(2)).sum::<f64>() * r / (r - 1.0))
            .collect();
        let est = terms.iter().sum::<f64>() / r;
        let sd = (terms.iter().map(|v| (v - est).powi(2)).sum::<f64>() / (r - 1.0)).sqrt();
        let se = sd / r.sqrt();
        let target: f64 = row.iter().map(|p| p * (1.0 - p)).sum();
        let ok = (est - target).abs() <= VARIANCE_SE * se;
        pass &= ok;
        routing.push(json!({ "node": i + 1, "variance": est, "se": se, "target": target, "pass": ok }));
    }
    Ok(ConvergenceResult {
        check: "service_routing".into(),
        params: json!({ "n_list": n_list, "reps": reps }),
        per_n,
        slope: first_fit,
        pass,
        details: json!({ "service_slopes": slopes, "service_variance": service, "routing_variance": routing }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ArrivalLaw, CorrelationModel, ServiceProfile};
    use crate::paths::TimeGrid;

    fn single(law: ArrivalLaw, mu: f64, base: BaseRenewal, grid: TimeGrid) -> NetworkSpec {
        NetworkSpec {
            k: 1,
            routing: vec![vec![0.0]],
            entry_nodes: vec![0],
            arrivals: vec![law],
            correlation: CorrelationModel::Independent,
            services: vec![ServiceProfile::constant(mu, base)],
            horizon: grid,
        }
    }

    /// Kolmogorov CDF through the theta-function series, independent of the
    /// alternating tail series.
    fn kolmogorov_cdf_theta(x: f64) -> f64 {
        let c = (2.0 * std::f64::consts::PI).sqrt() / x;
        c * (1..200)
            .map(|j| {
                let k = (2 * j - 1) as f64;
                (-k * k * std::f64::consts::PI.powi(2) / (8.0 * x * x)).exp()
            })
            .sum::<f64>()
    }

    #[test]
    fn kolmogorov_tail_matches_theta_series() {
        for &l in &[0.3, 0.5, 0.83, 1.0, 1.36, 1.63, 2.5] {
            let q = kolmogorov_q(l);
            assert!((q - (1.0 - kolmogorov_cdf_theta(l))).abs() < 1e-6, "λ = {l}: {q}");
        }
        assert!((kolmogorov_q(1.358) - 0.05).abs() < 1e-3);
    }

    #[test]
    fn ks_statistic_by_brute_force() {
        let a = [0.1, 0.4, 0.4, 0.9, 1.3];
        let b = [0.2, 0.4, 0.5, 0.6];
        let ecdf = |s: &[f64], x: f64| s.iter().filter(|&&v| v <= x).count() as f64 / s.len() as f64;
        let brute = a
            .iter()
            .chain(&b)
            .map(|&x| (ecdf(&a, x) - ecdf(&b, x)).abs())
            .fold(0.0, f64::max);
        assert!((ks_two_sample(&a, &b).unwrap().statistic - brute).abs() < 1e-15);
        let same = ks_two_sample(&[0.0; 10], &[0.0; 7]).unwrap();
        assert_eq!(same.statistic, 0.0);
        assert_eq!(same.p_value, 1.0);
    }

    #[test]
    fn slope_fit_recovers_power_law() {
        let ns = [10.0, 100.0, 1000.0, 10000.0];
        let ys: Vec<f64> = ns.iter().map(|n: &f64| 3.0 * n.powf(-0.5)).collect();
        let f = fit_loglog_slope(&ns, &ys).unwrap();
        assert!((f.slope + 0.5).abs() < 1e-12 && f.se < 1e-12);
        assert!((f.intercept - 3f64.ln()).abs() < 1e-12);
        assert!(fit_loglog_slope(&ns[..2], &ys[..2]).is_err());
    }

    #[test]
    fn sup_distance_is_exact() {
        let cdf = |t: f64| t.clamp(0.0, 1.0);
        // Epochs 0.5, 0.5: jump from 0 to 1 at 0.5; sup is 0.5.
        assert!((empirical_sup_distance(&[0.5, 0.5], cdf, cdf) - 0.5).abs() < 1e-15);
        let e = [0.1, 0.2, 0.9];
        let brute = (0..=100000)
            .map(|i| {
                let t = i as f64 / 100000.0;
                (e.iter().filter(|&&v| v <= t).count() as f64 / 3.0 - t).abs()
            })
            .fold(0.0, f64::max);
        assert!((empirical_sup_distance(&e, cdf, cdf) - brute).abs() < 1e-4);
    }

    #[test]
    fn degenerate_arrivals_have_zero_distance() {
        let spec = single(ArrivalLaw::Degenerate { at: 0.5 }, 2.0, BaseRenewal::Exponential, TimeGrid::new(0.0, 1.0, 0.01).unwrap());
        let r = check_fslln_arrivals(&spec, &[10, 100, 1000], 5, &RngStream::new(1)).unwrap();
        assert!(r.per_n.iter().all(|p| p.median == 0.0));
        assert!(r.pass && r.slope.is_none());
    }

    #[test]
    fn fslln_uniform_slope() {
        let spec = single(ArrivalLaw::Uniform { a: 0.0, b: 1.0 }, 2.0, BaseRenewal::Exponential, TimeGrid::new(0.0, 1.0, 0.01).unwrap());
        let r = check_fslln_arrivals(&spec, &[100, 1000, 10000], 50, &RngStream::new(3)).unwrap();
        let s = r.slope.unwrap().slope;
        assert!((-0.6..=-0.4).contains(&s), "{s}");
        let again = check_fslln_arrivals(&spec, &[100, 1000, 10000], 50, &RngStream::new(3)).unwrap();
        assert_eq!(r.to_json(), again.to_json());
    }

    #[test]
    fn fclt_refuses_near_regime_change() {
        let spec = single(ArrivalLaw::Uniform { a: 0.0, b: 1.0 }, 0.5, BaseRenewal::Exponential, TimeGrid::new(0.0, 3.0, 0.01).unwrap());
        let err = check_fclt_queue(&spec, 2.01, 100, 10, &RngStream::new(1)).unwrap_err();
        assert!(matches!(err, Error::Refused(_)), "{err}");
    }

    #[test]
    fn service_and_routing_variances() {
        let mut spec = single(ArrivalLaw::Uniform { a: 0.0, b: 1.0 }, 2.0, BaseRenewal::Exponential, TimeGrid::new(0.0, 1.0, 0.01).unwrap());
        spec.k = 3;
        spec.routing = vec![vec![0.0, 0.3, 0.2], vec![0.0; 3], vec![0.0; 3]];
        spec.services = vec![ServiceProfile::constant(2.0, BaseRenewal::Exponential); 3];
        let r = check_service_routing(&spec, &[100, 1000, 10000], 400, &RngStream::new(9)).unwrap();
        let route = &r.details["routing_variance"][0];
        assert!((route["target"].as_f64().unwrap() - 0.37).abs() < 1e-12);
        assert!(r.pass, "{}", r.to_json());

        spec.services = vec![ServiceProfile::constant(2.0, BaseRenewal::Deterministic); 3];
        let d = check_service_routing(&spec, &[100, 1000, 10000], 20, &RngStream::new(9)).unwrap();
        assert_eq!(d.details["service_variance"][0]["degenerate"], true);
    }
}
