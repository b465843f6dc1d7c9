//! Event-driven simulation of the pre-limit network with `n` jobs per entry
//! node, plus fluid and diffusion scaling of the resulting paths.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};
use std::io::Write;

use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{argument, Error, Result};
use crate::model::{validate_spec, NetworkSpec};
use crate::paths::{fmt_sig12, Interpolation, TimeGrid, VectorPath};
use crate::stochastic::{sample_arrival_epochs, tag, RngStream, RoutingSampler, UnitRenewal};

/// A job entering a node. `from` is `None` for exogenous arrivals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ArrivalRecord {
    pub time: f64,
    pub job: usize,
    pub from: Option<usize>,
}

/// A service completion. `to` is `None` when the job leaves the network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DepartureRecord {
    pub time: f64,
    pub job: usize,
    pub to: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ServiceStart {
    pub time: f64,
    pub job: usize,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct NodeEvents {
    pub arrivals: Vec<ArrivalRecord>,
    pub starts: Vec<ServiceStart>,
    pub departures: Vec<DepartureRecord>,
    /// Maximal busy intervals; the last one may be open (`end = ∞`).
    pub busy_periods: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Truncation {
    pub cutoff: f64,
    pub jobs_in_system: usize,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub n: usize,
    pub k: usize,
    pub entry_nodes: Vec<usize>,
    pub events: Vec<NodeEvents>,
    pub exits: usize,
    pub truncation: Option<Truncation>,
    /// Exogenous arrival counts `A_{n,k}` (zero at non-entry nodes).
    pub exogenous: VectorPath,
    /// Total inflow `E_{n,k}`.
    pub inflow: VectorPath,
    pub departures: VectorPath,
    pub queue: VectorPath,
    pub busy: VectorPath,
    pub idle: VectorPath,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SimOptions {
    /// Absolute stop time; defaults to `t1 + 3 (t1 − t0)`.
    pub cutoff: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Kind {
    Departure,
    Arrival { from: Option<usize> },
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    kind: Kind,
    node: usize,
    job: usize,
}

impl Event {
    fn key(&self) -> (f64, u8, usize, usize) {
        let rank = match self.kind {
            Kind::Departure => 0,
            Kind::Arrival { .. } => 1,
        };
        (self.time, rank, self.node, self.job)
    }
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Event {}
impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Event {
    // Reversed so that `BinaryHeap` pops the earliest event.
    fn cmp(&self, other: &Self) -> Ordering {
        let (a, b) = (self.key(), other.key());
        b.0.total_cmp(&a.0)
            .then(b.1.cmp(&a.1))
            .then(b.2.cmp(&a.2))
            .then(b.3.cmp(&a.3))
    }
}

struct Server {
    queue: VecDeque<usize>,
    renewal: UnitRenewal,
    rng: ChaCha8Rng,
}

pub fn simulate(spec: &NetworkSpec, n: usize, rng: &RngStream) -> Result<Trajectory> {
    simulate_with(spec, n, rng, &SimOptions::default())
}

pub fn simulate_with(
    spec: &NetworkSpec,
    n: usize,
    rng: &RngStream,
    options: &SimOptions,
) -> Result<Trajectory> {
    validate_spec(spec).into_result()?;
    let grid = spec.horizon;
    let k = spec.k;
    let cutoff = options
        .cutoff
        .unwrap_or(grid.t1() + 3.0 * (grid.t1() - grid.t0()));
    let epochs = sample_arrival_epochs(spec, n, &rng.child(tag::ARRIVALS))?;
    let mut routing = RoutingSampler::new(&spec.routing, &rng.child(tag::ROUTING));
    let service_root = rng.child(tag::SERVICE);
    let mut servers: Vec<Server> = (0..k)
        .map(|i| Server {
            queue: VecDeque::new(),
            renewal: UnitRenewal::new(spec.services[i].base),
            rng: service_root.child(i as u64).rng(),
        })
        .collect();
    let mut events = vec![NodeEvents::default(); k];
    let mut heap = BinaryHeap::with_capacity(n * spec.entry_nodes.len() + k);
    for (j, e) in epochs.per_entry.iter().enumerate() {
        let node = spec.entry_nodes[j];
        for (i, &time) in e.iter().enumerate() {
            heap.push(Event {
                time,
                kind: Kind::Arrival { from: None },
                node,
                job: j * n + i,
            });
        }
    }
    let scale = n as f64;
    let mut exits = 0;
    let mut in_system = 0usize;

    let start_service = |srv: &mut Server, node: usize, time: f64, job: usize| -> Option<Event> {
        let work = srv.renewal.draw(&mut srv.rng) / scale;
        spec.services[node]
            .rate
            .advance(time, work)
            .map(|done| Event {
                time: done,
                kind: Kind::Departure,
                node,
                job,
            })
    };

    while let Some(ev) = heap.pop() {
        if ev.time > cutoff {
            heap.push(ev);
            break;
        }
        let node = ev.node;
        match ev.kind {
            Kind::Arrival { from } => {
                if from.is_none() {
                    in_system += 1;
                }
                let rec = &mut events[node];
                rec.arrivals.push(ArrivalRecord {
                    time: ev.time,
                    job: ev.job,
                    from,
                });
                let srv = &mut servers[node];
                srv.queue.push_back(ev.job);
                if srv.queue.len() == 1 {
                    rec.busy_periods.push((ev.time, f64::INFINITY));
                    rec.starts.push(ServiceStart {
                        time: ev.time,
                        job: ev.job,
                    });
                    if let Some(done) = start_service(srv, node, ev.time, ev.job) {
                        heap.push(done);
                    }
                }
            }
            Kind::Departure => {
                let to = routing.next(node);
                let srv = &mut servers[node];
                let job = srv.queue.pop_front().expect("departure from a busy server");
                debug_assert_eq!(job, ev.job);
                let rec = &mut events[node];
                rec.departures.push(DepartureRecord {
                    time: ev.time,
                    job,
                    to,
                });
                if let Some(&next) = srv.queue.front() {
                    rec.starts.push(ServiceStart {
                        time: ev.time,
                        job: next,
                    });
                    if let Some(done) = start_service(srv, node, ev.time, next) {
                        heap.push(done);
                    }
                } else if let Some(last) = rec.busy_periods.last_mut() {
                    last.1 = ev.time;
                }
                match to {
                    Some(dest) => heap.push(Event {
                        time: ev.time,
                        kind: Kind::Arrival { from: Some(node) },
                        node: dest,
                        job,
                    }),
                    None => {
                        exits += 1;
                        in_system -= 1;
                    }
                }
            }
        }
    }
    let pending_exogenous = heap
        .iter()
        .filter(|e| matches!(e.kind, Kind::Arrival { from: None }))
        .count();
    let truncation = (in_system + pending_exogenous > 0).then_some(Truncation {
        cutoff,
        jobs_in_system: in_system + pending_exogenous,
    });

    let mut traj = Trajectory {
        n,
        k,
        entry_nodes: spec.entry_nodes.clone(),
        exits,
        truncation,
        exogenous: VectorPath::zeros(grid, k, Interpolation::PiecewiseConstantRight),
        inflow: VectorPath::zeros(grid, k, Interpolation::PiecewiseConstantRight),
        departures: VectorPath::zeros(grid, k, Interpolation::PiecewiseConstantRight),
        queue: VectorPath::zeros(grid, k, Interpolation::PiecewiseConstantRight),
        busy: VectorPath::zeros(grid, k, Interpolation::PiecewiseLinear),
        idle: VectorPath::zeros(grid, k, Interpolation::PiecewiseLinear),
        events,
    };
    traj.grid_paths(&grid);
    Ok(traj)
}

fn count_through(times: impl Iterator<Item = f64>, grid: &TimeGrid) -> Vec<f64> {
    let times: Vec<f64> = times.collect();
    grid.times()
        .map(|t| times.partition_point(|&s| s <= t) as f64)
        .collect()
}

impl Trajectory {
    fn grid_paths(&mut self, grid: &TimeGrid) {
        for node in 0..self.k {
            let ev = &self.events[node];
            let exo = count_through(
                ev.arrivals.iter().filter(|a| a.from.is_none()).map(|a| a.time),
                grid,
            );
            let inflow = count_through(ev.arrivals.iter().map(|a| a.time), grid);
            let out = count_through(ev.departures.iter().map(|d| d.time), grid);
            let mut busy = Vec::with_capacity(grid.len());
            let mut p = 0;
            let mut closed = 0.0;
            for t in grid.times() {
                while p < ev.busy_periods.len() && ev.busy_periods[p].1 <= t {
                    let (a, b) = ev.busy_periods[p];
                    closed += b - a.max(grid.t0());
                    p += 1;
                }
                let open = ev
                    .busy_periods
                    .get(p)
                    .map_or(0.0, |&(a, _)| (t - a.max(grid.t0())).max(0.0));
                busy.push(closed + open);
            }
            for (i, t) in grid.times().enumerate() {
                self.exogenous.set(node, i, exo[i]);
                self.inflow.set(node, i, inflow[i]);
                self.departures.set(node, i, out[i]);
                self.queue.set(node, i, inflow[i] - out[i]);
                self.busy.set(node, i, busy[i]);
                self.idle.set(node, i, (t - grid.t0()) - busy[i]);
            }
        }
    }

    pub fn grid(&self) -> &TimeGrid {
        self.queue.grid()
    }

    /// Every arrival at a node that came from node `l` matches a departure at
    /// `l` of the same job, at the same instant, routed to this node.
    pub fn check_flow_conservation(&self) -> Result<()> {
        for (k, ev) in self.events.iter().enumerate() {
            let mut routed_in: Vec<(usize, f64, usize)> = ev
                .arrivals
                .iter()
                .filter_map(|a| a.from.map(|l| (l, a.time, a.job)))
                .collect();
            let mut sent: Vec<(usize, f64, usize)> = self
                .events
                .iter()
                .enumerate()
                .flat_map(|(l, e)| {
                    e.departures
                        .iter()
                        .filter(move |d| d.to == Some(k))
                        .map(move |d| (l, d.time, d.job))
                })
                .collect();
            let key = |a: &(usize, f64, usize), b: &(usize, f64, usize)| {
                a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.cmp(&b.2))
            };
            routed_in.sort_by(key);
            sent.sort_by(key);
            if routed_in != sent {
                return Err(Error::Validation(format!(
                    "flow conservation fails at node {}",
                    k + 1
                )));
            }
            let exo = ev.arrivals.iter().filter(|a| a.from.is_none()).count();
            let expected = if self.entry_nodes.contains(&k) { self.n } else { 0 };
            if self.truncation.is_none() && exo != expected {
                return Err(Error::Validation(format!(
                    "node {} received {exo} exogenous jobs, expected {expected}",
                    k + 1
                )));
            }
        }
        Ok(())
    }

    /// Each service starts exactly at `max(arrival, previous departure)`, so
    /// the server never idles with work waiting.
    pub fn check_work_conservation(&self) -> Result<()> {
        for (k, ev) in self.events.iter().enumerate() {
            let mut prev_departure = f64::NEG_INFINITY;
            for (i, s) in ev.starts.iter().enumerate() {
                let arrival = ev.arrivals[i].time;
                let expected = arrival.max(prev_departure);
                if s.time != expected || s.job != ev.arrivals[i].job {
                    return Err(Error::Validation(format!(
                        "node {}: job {} started at {} instead of {}",
                        k + 1,
                        s.job,
                        s.time,
                        expected
                    )));
                }
                if let Some(d) = ev.departures.get(i) {
                    prev_departure = d.time;
                }
            }
            if ev.starts.len() < ev.arrivals.len() && ev.starts.len() == ev.departures.len() {
                return Err(Error::Validation(format!(
                    "node {} idles with jobs waiting",
                    k + 1
                )));
            }
        }
        Ok(())
    }

    /// Exogenous arrivals = exits + jobs still in the network.
    pub fn check_job_conservation(&self) -> Result<()> {
        let total = self.n * self.entry_nodes.len();
        let left = self.truncation.as_ref().map_or(0, |t| t.jobs_in_system);
        if self.exits + left != total {
            return Err(Error::Validation(format!(
                "{total} jobs entered, {} exited, {left} remain",
                self.exits
            )));
        }
        Ok(())
    }

    /// Departure order equals arrival order at every node.
    pub fn check_fifo(&self) -> Result<()> {
        for (k, ev) in self.events.iter().enumerate() {
            let ok = ev
                .departures
                .iter()
                .zip(&ev.arrivals)
                .all(|(d, a)| d.job == a.job && d.time >= a.time);
            if !ok {
                return Err(Error::Validation(format!("FIFO violated at node {}", k + 1)));
            }
        }
        Ok(())
    }

    pub fn check_all(&self) -> Result<()> {
        self.check_flow_conservation()?;
        self.check_work_conservation()?;
        self.check_job_conservation()?;
        self.check_fifo()
    }

    /// Event log `time,node,event,job_id` in time order; nodes are 1-based.
    pub fn write_event_log<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let mut rows: Vec<(f64, u8, usize, usize, &str)> = Vec::new();
        for (k, ev) in self.events.iter().enumerate() {
            for d in &ev.departures {
                rows.push((d.time, 0, k, d.job, "depart"));
                if d.to.is_none() {
                    rows.push((d.time, 1, k, d.job, "exit"));
                }
            }
            for a in &ev.arrivals {
                rows.push((a.time, 2, k, a.job, "arrive"));
            }
        }
        rows.sort_by(|a, b| {
            a.0.total_cmp(&b.0)
                .then(a.1.cmp(&b.1))
                .then(a.2.cmp(&b.2))
                .then(a.3.cmp(&b.3))
        });
        writeln!(w, "time,node,event,job_id")?;
        for (t, _, k, job, kind) in rows {
            writeln!(w, "{},{},{},{}", fmt_sig12(t), k + 1, kind, job)?;
        }
        Ok(())
    }
}

/// Scaled companions of a trajectory. Counts are divided by `n`; busy and
/// idle times are already on the fluid scale.
#[derive(Debug, Clone)]
pub struct FluidScaled {
    pub queue: VectorPath,
    pub inflow: VectorPath,
    pub departures: VectorPath,
    pub busy: VectorPath,
    pub idle: VectorPath,
}

/// `n⁻¹ Q_n` on the grid.
pub fn fluid_scale(traj: &Trajectory) -> VectorPath {
    traj.queue.scaled(1.0 / traj.n as f64)
}

pub fn fluid_scale_all(traj: &Trajectory) -> FluidScaled {
    let c = 1.0 / traj.n as f64;
    FluidScaled {
        queue: traj.queue.scaled(c),
        inflow: traj.inflow.scaled(c),
        departures: traj.departures.scaled(c),
        busy: traj.busy.clone(),
        idle: traj.idle.clone(),
    }
}

/// `√n (n⁻¹ Q_n − Q̄)` on the grid.
pub fn diffusion_scale(traj: &Trajectory, fluid_ref: &VectorPath) -> Result<VectorPath> {
    if !traj.queue.grid().same_as(fluid_ref.grid()) || fluid_ref.dim() != traj.k {
        return Err(argument("fluid reference grid or dimension does not match trajectory"));
    }
    let n = traj.n as f64;
    Ok(fluid_scale(traj)
        .add_scaled(fluid_ref, -1.0)?
        .scaled(n.sqrt()))
}
