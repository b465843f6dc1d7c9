//! Uniform time grids and vector-valued sample paths on them.
//!
//! Every solver in the crate exchanges `VectorPath`s. Counting processes are
//! stored right-continuous piecewise-constant, deterministic limits
//! piecewise-linear. All suprema over time are taken over grid points.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{argument, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    t0: f64,
    t1: f64,
    h: f64,
    m: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, t1: f64, h: f64) -> Result<Self> {
        if !(t0.is_finite() && t1.is_finite() && h.is_finite()) {
            return Err(argument("grid bounds must be finite"));
        }
        if t1 <= t0 {
            return Err(argument(format!("grid needs t1 > t0, got [{t0}, {t1}]")));
        }
        if h <= 0.0 {
            return Err(argument(format!("grid step must be positive, got {h}")));
        }
        // The small slack keeps t1 on the grid when (t1 - t0)/h is an
        // integer up to rounding.
        let m = ((t1 - t0) / h + 1e-9).floor() as usize + 1;
        Ok(TimeGrid { t0, t1, h, m })
    }

    /// Grid with the default step of a thousandth of the horizon.
    pub fn with_default_step(t0: f64, t1: f64) -> Result<Self> {
        Self::new(t0, t1, 1e-3 * (t1 - t0))
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn t1(&self) -> f64 {
        self.t1
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        self.m == 0
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.h
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.m).map(move |i| self.time(i))
    }

    pub fn contains(&self, t: f64) -> bool {
        let slack = 1e-12 * (1.0 + self.t0.abs().max(self.t1.abs()));
        t >= self.t0 - slack && t <= self.t1 + slack
    }

    /// Largest grid index whose time is at or before `t` (clamped to the grid).
    pub fn index_at_or_before(&self, t: f64) -> usize {
        let r = (t - self.t0) / self.h;
        let near = r.round();
        if near >= 0.0 && self.time(near as usize) == t {
            return (near as usize).min(self.m - 1);
        }
        if r <= 0.0 {
            return 0;
        }
        let mut i = (r.floor() as usize).min(self.m - 1);
        while i > 0 && self.time(i) > t {
            i -= 1;
        }
        while i + 1 < self.m && self.time(i + 1) <= t {
            i += 1;
        }
        i
    }

    /// Grid index closest to `t` (clamped to the grid).
    pub fn nearest_index(&self, t: f64) -> usize {
        let r = ((t - self.t0) / self.h).round();
        if r <= 0.0 {
            0
        } else {
            (r as usize).min(self.m - 1)
        }
    }

    pub fn same_as(&self, other: &TimeGrid) -> bool {
        self.m == other.m
            && (self.t0 - other.t0).abs() <= 1e-12 * (1.0 + self.t0.abs())
            && (self.h - other.h).abs() <= 1e-12 * self.h
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Interpolation {
    PiecewiseConstantRight,
    PiecewiseLinear,
}

/// A `dim`-dimensional path sampled on a `TimeGrid`.
///
/// Values are stored coordinate-major, so `coord(k)` is a contiguous slice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorPath {
    grid: TimeGrid,
    dim: usize,
    values: Vec<f64>,
    interpolation: Interpolation,
}

impl VectorPath {
    pub fn zeros(grid: TimeGrid, dim: usize, interpolation: Interpolation) -> Self {
        VectorPath {
            grid,
            dim,
            values: vec![0.0; dim * grid.len()],
            interpolation,
        }
    }

    pub fn from_coords(
        grid: TimeGrid,
        coords: Vec<Vec<f64>>,
        interpolation: Interpolation,
    ) -> Result<Self> {
        if coords.is_empty() {
            return Err(argument("a path needs at least one coordinate"));
        }
        let m = grid.len();
        let dim = coords.len();
        let mut values = Vec::with_capacity(dim * m);
        for (k, c) in coords.into_iter().enumerate() {
            if c.len() != m {
                return Err(argument(format!(
                    "coordinate {k} has {} values, grid has {m}",
                    c.len()
                )));
            }
            values.extend(c);
        }
        Ok(VectorPath {
            grid,
            dim,
            values,
            interpolation,
        })
    }

    /// Builds a path by evaluating `f(k, t)` at every grid point.
    pub fn from_fn(
        grid: TimeGrid,
        dim: usize,
        interpolation: Interpolation,
        mut f: impl FnMut(usize, f64) -> f64,
    ) -> Self {
        let mut p = Self::zeros(grid, dim, interpolation);
        for k in 0..dim {
            for i in 0..grid.len() {
                p.values[k * grid.len() + i] = f(k, grid.time(i));
            }
        }
        p
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn interpolation(&self) -> Interpolation {
        self.interpolation
    }

    pub fn with_interpolation(mut self, interpolation: Interpolation) -> Self {
        self.interpolation = interpolation;
        self
    }

    pub fn coord(&self, k: usize) -> &[f64] {
        let m = self.grid.len();
        &self.values[k * m..(k + 1) * m]
    }

    pub fn coord_mut(&mut self, k: usize) -> &mut [f64] {
        let m = self.grid.len();
        &mut self.values[k * m..(k + 1) * m]
    }

    pub fn at(&self, k: usize, i: usize) -> f64 {
        self.values[k * self.grid.len() + i]
    }

    pub fn set(&mut self, k: usize, i: usize, v: f64) {
        let m = self.grid.len();
        self.values[k * m + i] = v;
    }

    /// All coordinates at grid index `i`.
    pub fn column(&self, i: usize) -> Vec<f64> {
        (0..self.dim).map(|k| self.at(k, i)).collect()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |a, v| a.max(v.abs()))
    }

    pub fn coord_sup_norm(&self, k: usize) -> f64 {
        self.coord(k).iter().fold(0.0_f64, |a, v| a.max(v.abs()))
    }

    /// Sup-norm distance per coordinate. Grids must match.
    pub fn sup_distance(&self, other: &VectorPath) -> Result<Vec<f64>> {
        self.check_compatible(other)?;
        Ok((0..self.dim)
            .map(|k| {
                self.coord(k)
                    .iter()
                    .zip(other.coord(k))
                    .fold(0.0_f64, |a, (x, y)| a.max((x - y).abs()))
            })
            .collect())
    }

    pub fn check_compatible(&self, other: &VectorPath) -> Result<()> {
        if !self.grid.same_as(&other.grid) {
            return Err(argument("paths live on different grids"));
        }
        if self.dim != other.dim {
            return Err(argument(format!(
                "dimension mismatch: {} vs {}",
                self.dim, other.dim
            )));
        }
        Ok(())
    }

    /// `self + c * other`, keeping this path's interpolation.
    pub fn add_scaled(&self, other: &VectorPath, c: f64) -> Result<VectorPath> {
        self.check_compatible(other)?;
        let mut out = self.clone();
        for (a, b) in out.values.iter_mut().zip(&other.values) {
            *a += c * b;
        }
        Ok(out)
    }

    pub fn scaled(&self, c: f64) -> VectorPath {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= c);
        out
    }

    pub fn eval(&self, t: f64) -> Result<Vec<f64>> {
        path_eval(self, t)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "t")?;
        for k in 1..=self.dim {
            write!(w, ",v_{k}")?;
        }
        writeln!(w)?;
        for i in 0..self.grid.len() {
            write!(w, "{}", fmt_sig12(self.grid.time(i)))?;
            for k in 0..self.dim {
                write!(w, ",{}", fmt_sig12(self.at(k, i)))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is ascii")
    }
}

/// Evaluates a path at `t` following its interpolation rule.
pub fn path_eval(p: &VectorPath, t: f64) -> Result<Vec<f64>> {
    let g = p.grid;
    if !g.contains(t) {
        return Err(Error::OutOfRange {
            t,
            t0: g.t0,
            t1: g.t1,
        });
    }
    let i = g.index_at_or_before(t);
    if g.time(i) == t || p.interpolation == Interpolation::PiecewiseConstantRight {
        return Ok(p.column(i));
    }
    if i + 1 >= g.len() {
        return Ok(p.column(i));
    }
    let w = (t - g.time(i)) / g.h;
    Ok((0..p.dim)
        .map(|k| {
            let a = p.at(k, i);
            let b = p.at(k, i + 1);
            a + w * (b - a)
        })
        .collect())
}

/// Coordinatewise `t ↦ sup_{s≤t} [p(s)]⁺` over grid points.
pub fn path_running_sup_plus(p: &VectorPath) -> VectorPath {
    let mut out = p.clone();
    for k in 0..p.dim {
        running_sup_plus_in_place(out.coord_mut(k));
    }
    out
}

pub(crate) fn running_sup_plus_in_place(v: &mut [f64]) {
    let mut run = 0.0_f64;
    for x in v.iter_mut() {
        run = run.max(*x);
        *x = run;
    }
}

/// Right-continuous piecewise-constant function of time.
///
/// `values[0]` holds before `breaks[0]`, `values[i]` on `[breaks[i-1], breaks[i])`
/// and the last value from the last break onwards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseConstant {
    breaks: Vec<f64>,
    values: Vec<f64>,
}

impl PiecewiseConstant {
    pub fn new(breaks: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if values.len() != breaks.len() + 1 {
            return Err(argument(format!(
                "piecewise-constant function needs {} values for {} breaks, got {}",
                breaks.len() + 1,
                breaks.len(),
                values.len()
            )));
        }
        if breaks.windows(2).any(|w| w[1] <= w[0]) {
            return Err(argument("breaks must be strictly increasing"));
        }
        if breaks.iter().chain(&values).any(|x| !x.is_finite()) {
            return Err(argument("breaks and values must be finite"));
        }
        Ok(PiecewiseConstant { breaks, values })
    }

    pub fn constant(v: f64) -> Self {
        PiecewiseConstant {
            breaks: Vec::new(),
            values: vec![v],
        }
    }

    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn piece(&self, t: f64) -> usize {
        self.breaks.partition_point(|&b| b <= t)
    }

    pub fn value(&self, t: f64) -> f64 {
        self.values[self.piece(t)]
    }

    /// Exact integral over `[a, b]`.
    pub fn integral(&self, a: f64, b: f64) -> Result<f64> {
        if a > b {
            return Err(argument(format!("integral bounds reversed: {a} > {b}")));
        }
        let mut total = 0.0;
        let mut left = a;
        let mut i = self.piece(a);
        while left < b {
            let right = if i < self.breaks.len() {
                self.breaks[i].min(b)
            } else {
                b
            };
            total += self.values[i] * (right - left);
            left = right;
            i += 1;
        }
        Ok(total)
    }

    /// Smallest `t ≥ start` with `∫_start^t f = amount`, or `None` when the
    /// function stays zero long enough that the amount is never reached.
    /// Requires a non-negative function.
    pub fn advance(&self, start: f64, amount: f64) -> Option<f64> {
        if amount <= 0.0 {
            return Some(start);
        }
        let mut left = start;
        let mut remaining = amount;
        let mut i = self.piece(start);
        loop {
            let rate = self.values[i];
            if i >= self.breaks.len() {
                return if rate > 0.0 {
                    Some(left + remaining / rate)
                } else {
                    None
                };
            }
            let right = self.breaks[i];
            let area = rate * (right - left);
            if rate > 0.0 && area >= remaining {
                return Some(left + remaining / rate);
            }
            remaining -= area;
            left = right;
            i += 1;
        }
    }

    /// True when the function takes a single value on `[from, ∞)`.
    pub fn is_constant_from(&self, from: f64) -> bool {
        let first = self.piece(from);
        self.values[first..].iter().all(|&v| v == self.values[first])
    }
}

/// Continuous piecewise-linear function through `knots`, held constant
/// outside the knot range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseLinear {
    knots: Vec<(f64, f64)>,
}

impl PiecewiseLinear {
    pub fn new(knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.is_empty() {
            return Err(argument("piecewise-linear function needs knots"));
        }
        if knots.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(argument("knot times must be strictly increasing"));
        }
        Ok(PiecewiseLinear { knots })
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    pub fn value(&self, t: f64) -> f64 {
        let k = &self.knots;
        if t <= k[0].0 {
            return k[0].1;
        }
        if t >= k[k.len() - 1].0 {
            return k[k.len() - 1].1;
        }
        let j = k.partition_point(|&(s, _)| s <= t);
        let (s0, v0) = k[j - 1];
        let (s1, v1) = k[j];
        v0 + (v1 - v0) * (t - s0) / (s1 - s0)
    }

    pub fn integral(&self, a: f64, b: f64) -> Result<f64> {
        if a > b {
            return Err(argument(format!("integral bounds reversed: {a} > {b}")));
        }
        // Breakpoints of the integrand inside (a, b), then trapezoids.
        let mut pts = vec![a];
        pts.extend(self.knots.iter().map(|&(s, _)| s).filter(|&s| s > a && s < b));
        pts.push(b);
        Ok(pts
            .windows(2)
            .map(|w| 0.5 * (self.value(w[0]) + self.value(w[1])) * (w[1] - w[0]))
            .sum())
    }
}

/// Rate function accepted by `path_integral`.
#[derive(Debug, Clone, PartialEq)]
pub enum RateFunction {
    Constant(PiecewiseConstant),
    Linear(PiecewiseLinear),
}

/// Exact `∫_a^b f`.
pub fn path_integral(f: &RateFunction, a: f64, b: f64) -> Result<f64> {
    match f {
        RateFunction::Constant(p) => p.integral(a, b),
        RateFunction::Linear(p) => p.integral(a, b),
    }
}

/// Formats like C's `%.12g`.
pub fn fmt_sig12(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{x:.11e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-5..12).contains(&exp) {
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{mantissa}e{sign}{:02}", exp.abs());
    }
    let decimals = (11 - exp) as usize;
    trim_zeros(&format!("{x:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit_grid(m: usize) -> TimeGrid {
        TimeGrid::new(0.0, 1.0, 1.0 / (m - 1) as f64).unwrap()
    }

    #[test]
    fn grid_point_count() {
        let g = TimeGrid::new(-0.5, 2.0, 0.0025).unwrap();
        assert_eq!(g.len(), 1001);
        assert!((g.time(1000) - 2.0).abs() < 1e-12);
        let d = TimeGrid::with_default_step(0.0, 3.0).unwrap();
        assert_eq!(d.len(), 1001);
        assert!(TimeGrid::new(1.0, 1.0, 0.1).is_err());
        assert!(TimeGrid::new(0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn eval_constant_linear_and_step() {
        let g = unit_grid(101);
        let c = VectorPath::from_fn(g, 1, Interpolation::PiecewiseLinear, |_, _| 1.0);
        assert_eq!(path_eval(&c, 0.37).unwrap(), vec![1.0]);

        let g2 = TimeGrid::new(0.0, 1.0, 1.0).unwrap();
        let lin =
            VectorPath::from_coords(g2, vec![vec![0.0, 1.0]], Interpolation::PiecewiseLinear)
                .unwrap();
        assert!((path_eval(&lin, 0.25).unwrap()[0] - 0.25).abs() < 1e-15);

        let g3 = TimeGrid::new(0.0, 1.0, 0.5).unwrap();
        let step = VectorPath::from_coords(
            g3,
            vec![vec![0.0, 1.0, 1.0]],
            Interpolation::PiecewiseConstantRight,
        )
        .unwrap();
        assert_eq!(path_eval(&step, 0.5).unwrap(), vec![1.0]);
        assert_eq!(path_eval(&step, 0.4999).unwrap(), vec![0.0]);
    }

    #[test]
    fn eval_out_of_range() {
        let g = unit_grid(11);
        let p = VectorPath::zeros(g, 2, Interpolation::PiecewiseLinear);
        assert!(matches!(path_eval(&p, 1.5), Err(Error::OutOfRange { .. })));
        assert!(path_eval(&p, -0.1).is_err());
    }

    #[test]
    fn running_sup_examples() {
        let g = unit_grid(101);
        let neg = VectorPath::from_fn(g, 1, Interpolation::PiecewiseLinear, |_, t| -t);
        assert!(path_running_sup_plus(&neg).coord(0).iter().all(|&v| v == 0.0));
        let pos = VectorPath::from_fn(g, 1, Interpolation::PiecewiseLinear, |_, t| t);
        assert_eq!(path_running_sup_plus(&pos), pos);
        let g3 = TimeGrid::new(0.0, 1.0, 0.5).unwrap();
        let bump =
            VectorPath::from_coords(g3, vec![vec![0.0, 1.0, 0.5]], Interpolation::PiecewiseLinear)
                .unwrap();
        assert_eq!(path_running_sup_plus(&bump).coord(0), &[0.0, 1.0, 1.0]);
    }

    #[test]
    fn integrals() {
        let two = RateFunction::Constant(PiecewiseConstant::constant(2.0));
        assert_eq!(path_integral(&two, 0.0, 3.0).unwrap(), 6.0);
        let ramp = RateFunction::Linear(PiecewiseLinear::new(vec![(0.0, 0.0), (0.5, 2.0)]).unwrap());
        assert!((path_integral(&ramp, 0.0, 0.5).unwrap() - 0.5).abs() < 1e-15);
        let zero = RateFunction::Constant(PiecewiseConstant::constant(0.0));
        assert_eq!(path_integral(&zero, -1.0, 4.0).unwrap(), 0.0);
        assert!(path_integral(&two, 1.0, 0.0).is_err());
    }

    #[test]
    fn advance_inverts_integral_and_skips_zero_rate() {
        let f = PiecewiseConstant::new(vec![0.0, 1.0, 2.0], vec![0.0, 1.0, 0.0, 3.0]).unwrap();
        assert_eq!(f.advance(-1.0, 0.5), Some(0.5));
        assert_eq!(f.advance(0.5, 0.5), Some(1.0));
        // 0.25 left at t=1 is only served once the rate returns at t=2.
        assert_eq!(f.advance(0.5, 0.75), Some(2.0 + 0.25 / 3.0));
        let dead = PiecewiseConstant::new(vec![1.0], vec![1.0, 0.0]).unwrap();
        assert_eq!(dead.advance(0.0, 2.0), None);
    }

    #[test]
    fn sig12_formatting() {
        assert_eq!(fmt_sig12(0.0), "0");
        assert_eq!(fmt_sig12(1.5), "1.5");
        assert_eq!(fmt_sig12(-0.0025), "-0.0025");
        assert_eq!(fmt_sig12(1.0 / 3.0), "0.333333333333");
        assert_eq!(fmt_sig12(1e-7), "1e-07");
        assert_eq!(fmt_sig12(123456789012345.0), "1.23456789012e+14");
    }

    #[test]
    fn csv_layout() {
        let g = TimeGrid::new(0.0, 1.0, 0.5).unwrap();
        let p = VectorPath::from_fn(g, 2, Interpolation::PiecewiseLinear, |k, t| k as f64 + t);
        let csv = p.to_csv_string();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], "t,v_1,v_2");
        assert_eq!(lines[2], "0.5,0.5,1.5");
        assert_eq!(lines.len(), 4);
    }

    fn path_strategy() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-5.0..5.0_f64, 50)
    }

    proptest! {
        #[test]
        fn running_sup_idempotent_and_monotone(a in path_strategy(), d in path_strategy()) {
            let g = unit_grid(50);
            let p = VectorPath::from_coords(g, vec![a.clone()], Interpolation::PiecewiseLinear).unwrap();
            let q_vals: Vec<f64> = a.iter().zip(&d).map(|(x, y)| x + y.abs()).collect();
            let q = VectorPath::from_coords(g, vec![q_vals], Interpolation::PiecewiseLinear).unwrap();
            let sp = path_running_sup_plus(&p);
            prop_assert_eq!(&path_running_sup_plus(&sp), &sp);
            let sq = path_running_sup_plus(&q);
            for i in 0..50 {
                prop_assert!(sp.at(0, i) <= sq.at(0, i));
                prop_assert!(sp.at(0, i) >= 0.0);
                if i > 0 { prop_assert!(sp.at(0, i) >= sp.at(0, i - 1)); }
            }
            prop_assert_eq!(sp.at(0, 0), a[0].max(0.0));
        }

        #[test]
        fn integral_additive(
            vals in proptest::collection::vec(0.0..4.0_f64, 4),
            a in -1.0..0.5_f64, b in 0.5..1.5_f64, c in 1.5..3.0_f64,
        ) {
            let f = PiecewiseConstant::new(vec![0.0, 1.0, 2.0], vals.clone()).unwrap();
            let whole = f.integral(a, c).unwrap();
            let split = f.integral(a, b).unwrap() + f.integral(b, c).unwrap();
            prop_assert!((whole - split).abs() <= 1e-12 * (1.0 + whole.abs()));
            let knots: Vec<(f64, f64)> = vals.iter().enumerate().map(|(i, v)| (i as f64 - 0.5, *v)).collect();
            let l = PiecewiseLinear::new(knots).unwrap();
            let whole = l.integral(a, c).unwrap();
            let split = l.integral(a, b).unwrap() + l.integral(b, c).unwrap();
            prop_assert!((whole - split).abs() <= 1e-12 * (1.0 + whole.abs()));
        }

        #[test]
        fn eval_exact_at_grid_points(a in path_strategy(), lo in -3.0..0.0_f64) {
            let g = TimeGrid::new(lo, lo + 1.7, 1.7 / 49.0).unwrap();
            for interp in [Interpolation::PiecewiseLinear, Interpolation::PiecewiseConstantRight] {
                let p = VectorPath::from_coords(g, vec![a.clone()], interp).unwrap();
                for i in 0..g.len() {
                    prop_assert_eq!(path_eval(&p, g.time(i)).unwrap()[0].to_bits(), a[i].to_bits());
                }
            }
        }
    }
}
