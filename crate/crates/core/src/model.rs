//! Network instances: routing, arrival laws, service profiles and horizon,
//! plus validation and the JSON spec format.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{argument, Error, Result};
use crate::paths::{PiecewiseConstant, TimeGrid};

/// Law of a single job's arrival epoch at one entry node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ArrivalLaw {
    Uniform { a: f64, b: f64 },
    /// Triangular density on `[a, b]` peaking at the midpoint.
    TriangularSymmetric { a: f64, b: f64 },
    /// CDF interpolating `(t, F(t))` knots; first F is 0, last is 1.
    PiecewiseLinearCdf { knots: Vec<[f64; 2]> },
    /// Every job arrives at the same instant.
    Degenerate { at: f64 },
}

impl ArrivalLaw {
    pub fn support(&self) -> (f64, f64) {
        match *self {
            ArrivalLaw::Uniform { a, b } | ArrivalLaw::TriangularSymmetric { a, b } => (a, b),
            ArrivalLaw::PiecewiseLinearCdf { ref knots } => {
                (knots[0][0], knots[knots.len() - 1][0])
            }
            ArrivalLaw::Degenerate { at } => (at, at),
        }
    }

    pub fn cdf(&self, t: f64) -> f64 {
        match *self {
            ArrivalLaw::Uniform { a, b } => ((t - a) / (b - a)).clamp(0.0, 1.0),
            ArrivalLaw::TriangularSymmetric { a, b } => {
                let w = b - a;
                if t <= a {
                    0.0
                } else if t >= b {
                    1.0
                } else if t <= a + 0.5 * w {
                    let u = (t - a) / w;
                    2.0 * u * u
                } else {
                    let u = (b - t) / w;
                    1.0 - 2.0 * u * u
                }
            }
            ArrivalLaw::PiecewiseLinearCdf { ref knots } => {
                if t <= knots[0][0] {
                    return 0.0;
                }
                let last = knots[knots.len() - 1];
                if t >= last[0] {
                    return 1.0;
                }
                let j = knots.partition_point(|k| k[0] <= t);
                let [s0, f0] = knots[j - 1];
                let [s1, f1] = knots[j];
                f0 + (f1 - f0) * (t - s0) / (s1 - s0)
            }
            ArrivalLaw::Degenerate { at } => {
                if t >= at {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Left limit `F(t-)`; differs from `cdf` only at atoms.
    pub fn cdf_left(&self, t: f64) -> f64 {
        match *self {
            ArrivalLaw::Degenerate { at } => {
                if t > at {
                    1.0
                } else {
                    0.0
                }
            }
            _ => self.cdf(t),
        }
    }

    /// Density `F'(t)` (right derivative at kinks). `None` for atoms.
    pub fn density(&self, t: f64) -> Option<f64> {
        match *self {
            ArrivalLaw::Uniform { a, b } => Some(if t >= a && t < b { 1.0 / (b - a) } else { 0.0 }),
            ArrivalLaw::TriangularSymmetric { a, b } => {
                let w = b - a;
                let c = a + 0.5 * w;
                Some(if t < a || t >= b {
                    0.0
                } else if t < c {
                    4.0 * (t - a) / (w * w)
                } else {
                    4.0 * (b - t) / (w * w)
                })
            }
            ArrivalLaw::PiecewiseLinearCdf { ref knots } => {
                if t < knots[0][0] || t >= knots[knots.len() - 1][0] {
                    return Some(0.0);
                }
                let j = knots.partition_point(|k| k[0] <= t);
                let [s0, f0] = knots[j - 1];
                let [s1, f1] = knots[j];
                Some((f1 - f0) / (s1 - s0))
            }
            ArrivalLaw::Degenerate { .. } => None,
        }
    }

    /// Inverse CDF for `u ∈ [0, 1]`.
    pub fn quantile(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        match *self {
            ArrivalLaw::Uniform { a, b } => a + u * (b - a),
            ArrivalLaw::TriangularSymmetric { a, b } => {
                let w = b - a;
                if u <= 0.5 {
                    a + w * (0.5 * u).sqrt()
                } else {
                    b - w * (0.5 * (1.0 - u)).sqrt()
                }
            }
            ArrivalLaw::PiecewiseLinearCdf { ref knots } => {
                let j = knots.partition_point(|k| k[1] < u).clamp(1, knots.len() - 1);
                let [s0, f0] = knots[j - 1];
                let [s1, f1] = knots[j];
                s0 + (s1 - s0) * (u - f0) / (f1 - f0)
            }
            ArrivalLaw::Degenerate { at } => at,
        }
    }

    fn check(&self) -> std::result::Result<(), String> {
        match *self {
            ArrivalLaw::Uniform { a, b } | ArrivalLaw::TriangularSymmetric { a, b } => {
                if !(a.is_finite() && b.is_finite() && a < b) {
                    return Err(format!("support [{a}, {b}] must be a finite interval with a < b"));
                }
            }
            ArrivalLaw::PiecewiseLinearCdf { ref knots } => {
                if knots.len() < 2 {
                    return Err("piecewise-linear CDF needs at least two knots".into());
                }
                if knots.iter().flatten().any(|x| !x.is_finite()) {
                    return Err("knots must be finite".into());
                }
                if knots.windows(2).any(|w| w[1][0] <= w[0][0] || w[1][1] <= w[0][1]) {
                    return Err("knots must be strictly increasing in both coordinates".into());
                }
                if knots[0][1] != 0.0 || knots[knots.len() - 1][1] != 1.0 {
                    return Err("CDF knots must start at 0 and end at 1".into());
                }
            }
            ArrivalLaw::Degenerate { at } => {
                if !at.is_finite() {
                    return Err("degenerate epoch must be finite".into());
                }
            }
        }
        Ok(())
    }
}

/// Dependence between the epochs of the same job index across entry nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CorrelationModel {
    Independent,
    /// One uniform drives every entry node's epoch.
    Comonotone,
    GaussianCopula { rho: Vec<Vec<f64>> },
}

/// Unit-rate renewal process that is time-changed by the cumulative rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BaseRenewal {
    Deterministic,
    Exponential,
    /// Gamma increments with mean 1 and squared coefficient of variation `scv`.
    GammaScv { scv: f64 },
}

impl BaseRenewal {
    /// Squared coefficient of variation of the unit-mean increments, which is
    /// also the variance rate of the renewal FCLT.
    pub fn scv(&self) -> f64 {
        match *self {
            BaseRenewal::Deterministic => 0.0,
            BaseRenewal::Exponential => 1.0,
            BaseRenewal::GammaScv { scv } => scv,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceProfile {
    pub rate: PiecewiseConstant,
    pub base: BaseRenewal,
}

impl ServiceProfile {
    pub fn constant(rate: f64, base: BaseRenewal) -> Self {
        ServiceProfile {
            rate: PiecewiseConstant::constant(rate),
            base,
        }
    }

    /// `∫_from^t μ`, with the rate extended beyond any horizon.
    pub fn cumulative_from(&self, from: f64, t: f64) -> f64 {
        if t <= from {
            return 0.0;
        }
        self.rate.integral(from, t).expect("ordered bounds")
    }
}

/// Returns `M(t) = ∫_{t0}^t μ` for a time inside the horizon.
pub fn rate_cumulative(profile: &ServiceProfile, t: f64, horizon: &TimeGrid) -> Result<f64> {
    if !horizon.contains(t) {
        return Err(Error::OutOfRange {
            t,
            t0: horizon.t0(),
            t1: horizon.t1(),
        });
    }
    Ok(profile.cumulative_from(horizon.t0(), t))
}

pub fn cdf_eval(law: &ArrivalLaw, t: f64) -> f64 {
    law.cdf(t)
}

/// A transitory network. Node indices are 0-based in code and 1-based in
/// spec files and reports.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub k: usize,
    /// `routing[i][j]`: probability that a job finishing at `i` joins `j`.
    pub routing: Vec<Vec<f64>>,
    pub entry_nodes: Vec<usize>,
    pub arrivals: Vec<ArrivalLaw>,
    pub correlation: CorrelationModel,
    pub services: Vec<ServiceProfile>,
    pub horizon: TimeGrid,
}

impl NetworkSpec {
    pub fn p(&self, i: usize, j: usize) -> f64 {
        self.routing[i][j]
    }

    /// Row-major `Pᵀ`, the matrix G of the reflection fixed point.
    pub fn g_matrix(&self) -> Vec<f64> {
        routing_transpose(&self.routing)
    }

    pub fn routing_flat(&self) -> Vec<f64> {
        self.routing.iter().flatten().copied().collect()
    }

    /// Position of `node` among the entry nodes.
    pub fn entry_index(&self, node: usize) -> Option<usize> {
        self.entry_nodes.iter().position(|&e| e == node)
    }

    pub fn exit_probability(&self, i: usize) -> f64 {
        (1.0 - self.routing[i].iter().sum::<f64>()).max(0.0)
    }

    /// Per-node rates when every rate is constant from `t0` on.
    pub fn constant_rates(&self) -> Option<Vec<f64>> {
        let t0 = self.horizon.t0();
        self.services
            .iter()
            .map(|s| s.rate.is_constant_from(t0).then(|| s.rate.value(t0)))
            .collect()
    }

    /// True for the series network 1 → 2 → … → K fed at node 1 only.
    pub fn is_tandem(&self) -> bool {
        if self.entry_nodes != [0] {
            return false;
        }
        (0..self.k).all(|i| {
            (0..self.k).all(|j| {
                let want = if j == i + 1 { 1.0 } else { 0.0 };
                self.routing[i][j] == want
            })
        })
    }

    pub fn with_grid_step(mut self, h: f64) -> Result<Self> {
        self.horizon = TimeGrid::new(self.horizon.t0(), self.horizon.t1(), h)?;
        Ok(self)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let file: SpecFile = serde_json::from_str(s)?;
        file.into_spec()
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&SpecFile::from_spec(self)).expect("spec serializes")
    }
}

pub(crate) fn routing_transpose(routing: &[Vec<f64>]) -> Vec<f64> {
    let k = routing.len();
    let mut g = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            g[i * k + j] = routing[j][i];
        }
    }
    g
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum MatrixFile {
    Rows(Vec<Vec<f64>>),
    Flat(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum RateFile {
    Constant { rate: f64 },
    Piecewise { breaks: Vec<f64>, rates: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ServiceFile {
    rate: RateFile,
    base: BaseRenewal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HorizonFile {
    t0: f64,
    t1: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    h: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    description: Option<String>,
    #[serde(rename = "K")]
    k: usize,
    #[serde(rename = "P")]
    p: MatrixFile,
    entry_nodes: Vec<usize>,
    arrivals: Vec<ArrivalLaw>,
    correlation: CorrelationModel,
    services: Vec<ServiceFile>,
    horizon: HorizonFile,
}

impl SpecFile {
    fn into_spec(self) -> Result<NetworkSpec> {
        let k = self.k;
        if k == 0 {
            return Err(argument("K must be at least 1"));
        }
        let routing = match self.p {
            MatrixFile::Rows(rows) => rows,
            MatrixFile::Flat(flat) => {
                if flat.len() != k * k {
                    return Err(argument(format!(
                        "P has {} entries, expected K² = {}",
                        flat.len(),
                        k * k
                    )));
                }
                flat.chunks(k).map(|r| r.to_vec()).collect()
            }
        };
        if routing.len() != k || routing.iter().any(|r| r.len() != k) {
            return Err(argument(format!("P must be {k}×{k}")));
        }
        if self.entry_nodes.iter().any(|&e| e == 0 || e > k) {
            return Err(argument(format!("entry nodes must lie in 1..={k}")));
        }
        let services = self
            .services
            .into_iter()
            .map(|s| {
                let rate = match s.rate {
                    RateFile::Constant { rate } => PiecewiseConstant::constant(rate),
                    RateFile::Piecewise { breaks, rates } => PiecewiseConstant::new(breaks, rates)?,
                };
                Ok(ServiceProfile { rate, base: s.base })
            })
            .collect::<Result<Vec<_>>>()?;
        let h = self.horizon;
        let horizon = match h.h {
            Some(step) => TimeGrid::new(h.t0, h.t1, step)?,
            None => TimeGrid::with_default_step(h.t0, h.t1)?,
        };
        Ok(NetworkSpec {
            k,
            routing,
            entry_nodes: self.entry_nodes.iter().map(|e| e - 1).collect(),
            arrivals: self.arrivals,
            correlation: self.correlation,
            services,
            horizon,
        })
    }

    fn from_spec(spec: &NetworkSpec) -> Self {
        SpecFile {
            description: None,
            k: spec.k,
            p: MatrixFile::Rows(spec.routing.clone()),
            entry_nodes: spec.entry_nodes.iter().map(|e| e + 1).collect(),
            arrivals: spec.arrivals.clone(),
            correlation: spec.correlation.clone(),
            services: spec
                .services
                .iter()
                .map(|s| ServiceFile {
                    rate: if s.rate.breaks().is_empty() {
                        RateFile::Constant {
                            rate: s.rate.values()[0],
                        }
                    } else {
                        RateFile::Piecewise {
                            breaks: s.rate.breaks().to_vec(),
                            rates: s.rate.values().to_vec(),
                        }
                    },
                    base: s.base,
                })
                .collect(),
            horizon: HorizonFile {
                t0: spec.horizon.t0(),
                t1: spec.horizon.t1(),
                h: Some(spec.horizon.h()),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationIssue {
    /// 1-based node or entry index the issue refers to, when there is one.
    pub node: Option<usize>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub spectral_radius: f64,
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_valid() {
            Ok(())
        } else {
            Err(Error::Validation(self.to_string()))
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.issues.is_empty() {
            return write!(f, "valid (spectral radius {:.6})", self.spectral_radius);
        }
        for issue in &self.issues {
            match issue.node {
                Some(n) => writeln!(f, "  node {n}: {}", issue.message)?,
                None => writeln!(f, "  {}", issue.message)?,
            }
        }
        Ok(())
    }
}

pub fn validate_spec(spec: &NetworkSpec) -> ValidationReport {
    let mut issues = Vec::new();
    let mut issue = |node: Option<usize>, message: String| {
        issues.push(ValidationIssue { node, message })
    };
    let k = spec.k;

    let square = spec.routing.len() == k && spec.routing.iter().all(|r| r.len() == k);
    if !square {
        issue(None, format!("routing matrix must be {k}×{k}"));
    }
    let mut spectral_radius = f64::NAN;
    if square {
        for i in 0..k {
            for j in 0..k {
                let p = spec.routing[i][j];
                if !(p >= 0.0 && p.is_finite()) {
                    issue(Some(i + 1), format!("routing probability to node {} is {p}", j + 1));
                }
            }
            let row: f64 = spec.routing[i].iter().sum();
            if row > 1.0 + 1e-12 {
                issue(Some(i + 1), format!("routing row sums to {row} > 1"));
            }
        }
        let flat: Vec<f64> = spec.routing.iter().flatten().map(|p| p.max(0.0)).collect();
        spectral_radius = spectral_radius_nonnegative(&flat, k);
        if !(spectral_radius < 1.0 - 1e-8) {
            issue(
                None,
                format!("spectral radius of P is {spectral_radius}, must be < 1"),
            );
        }
    }

    let mut seen = vec![false; k];
    for &e in &spec.entry_nodes {
        if e >= k {
            issue(None, format!("entry node {} outside 1..={k}", e + 1));
        } else if std::mem::replace(&mut seen[e], true) {
            issue(Some(e + 1), "listed twice as an entry node".into());
        }
    }
    if spec.entry_nodes.is_empty() {
        issue(None, "at least one entry node is required".into());
    }
    if spec.arrivals.len() != spec.entry_nodes.len() {
        issue(
            None,
            format!(
                "{} arrival laws for {} entry nodes",
                spec.arrivals.len(),
                spec.entry_nodes.len()
            ),
        );
    }
    let (t0, t1) = (spec.horizon.t0(), spec.horizon.t1());
    for (j, law) in spec.arrivals.iter().enumerate() {
        let node = spec.entry_nodes.get(j).map(|e| e + 1);
        if let Err(msg) = law.check() {
            issue(node, msg);
            continue;
        }
        let (a, b) = law.support();
        if a < t0 || b > t1 {
            issue(
                node,
                format!("arrival support [{a}, {b}] is not inside the horizon [{t0}, {t1}]"),
            );
        }
    }

    match &spec.correlation {
        CorrelationModel::GaussianCopula { rho } => {
            let jn = spec.entry_nodes.len();
            if rho.len() != jn || rho.iter().any(|r| r.len() != jn) {
                issue(None, format!("copula matrix must be {jn}×{jn}"));
            } else {
                let mut ok = true;
                for a in 0..jn {
                    if (rho[a][a] - 1.0).abs() > 1e-12 {
                        issue(Some(spec.entry_nodes[a] + 1), "copula diagonal must be 1".into());
                        ok = false;
                    }
                    for b in 0..a {
                        if (rho[a][b] - rho[b][a]).abs() > 1e-12 {
                            issue(None, "copula matrix must be symmetric".into());
                            ok = false;
                        }
                    }
                }
                let flat: Vec<f64> = rho.iter().flatten().copied().collect();
                if ok && crate::linalg::cholesky(&flat, jn, 0.0).is_err() {
                    issue(None, "copula matrix must be positive definite".into());
                }
            }
        }
        CorrelationModel::Independent | CorrelationModel::Comonotone => {}
    }

    if spec.services.len() != k {
        issue(None, format!("{} service profiles for {k} nodes", spec.services.len()));
    }
    for (i, s) in spec.services.iter().enumerate() {
        if s.rate.values().iter().any(|&r| r < 0.0) {
            issue(Some(i + 1), "service rate must be non-negative".into());
        }
        if let BaseRenewal::GammaScv { scv } = s.base {
            if !(scv > 0.0 && scv.is_finite()) {
                issue(Some(i + 1), format!("gamma SCV must be positive, got {scv}"));
            }
        }
    }

    ValidationReport {
        spectral_radius,
        issues,
    }
}

/// Perron root of a non-negative `k×k` matrix.
///
/// Power iteration on `A = P + I` with repeated squaring: the shift removes
/// periodicity (every other eigenvalue of `A` is strictly smaller in modulus)
/// and squaring makes Jordan blocks and close eigenvalues harmless. At most
/// 200 squarings, stopping once the estimate stops moving at machine
/// precision (well inside the 1e-10 needed for validation).
pub fn spectral_radius_nonnegative(p: &[f64], k: usize) -> f64 {
    // Acyclic routing (feed-forward networks) is nilpotent: exactly zero.
    let mut power = p.to_vec();
    for _ in 1..k {
        power = crate::linalg::matmul(&power, p, k);
    }
    if power.iter().all(|&v| v == 0.0) {
        return 0.0;
    }
    let mut a = p.to_vec();
    for i in 0..k {
        a[i * k + i] += 1.0;
    }
    let estimate = |b: &[f64]| -> f64 {
        // v = B·1 approximates the Perron vector; Rayleigh-type ratio on A.
        let v: Vec<f64> = (0..k).map(|i| b[i * k..(i + 1) * k].iter().sum()).collect();
        let av: Vec<f64> = (0..k)
            .map(|i| (0..k).map(|j| a[i * k + j] * v[j]).sum())
            .collect();
        let nv = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        let nav = av.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        nav / nv
    };
    let mut b = a.clone();
    let mut last = estimate(&b);
    for _ in 0..200 {
        let sq = crate::linalg::matmul(&b, &b, k);
        let scale = sq.iter().fold(0.0_f64, |m, x| m.max(*x));
        b = sq.iter().map(|x| x / scale).collect();
        let next = estimate(&b);
        let done = (next - last).abs() <= 4.0 * f64::EPSILON * next;
        last = next;
        if done {
            break;
        }
    }
    (last - 1.0).max(0.0)
}
