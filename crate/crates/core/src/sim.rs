//! Discrete-time fluid simulator for feedforward strict-priority networks.
//!
//! Each slot, every flow injects a sampled amount at its first hop. Nodes run in
//! topological order and serve up to their rate, highest priority class first;
//! served data reaches the next hop in the same slot.

use std::collections::{HashMap, VecDeque};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Poisson};
use thiserror::Error;

use crate::models::{ArrivalModel, ServiceModel};
use crate::netio::NetworkDocument;

pub const DEFAULT_DELAY_CAP: u64 = 10_000;
const TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, SimError> {
    Err(SimError::InvalidConfig(msg.into()))
}

/// Per-slot arrival amount.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sampler {
    Constant { rate: f64 },
    /// Exponentially distributed with mean `1/lambda`.
    Exponential { lambda: f64 },
    /// Poisson(`mu`) many jumps, each exponential with mean `1/nu`.
    CompoundPoisson { mu: f64, nu: f64 },
}

impl Sampler {
    fn validate(&self) -> Result<(), SimError> {
        let ok = match *self {
            Sampler::Constant { rate } => rate.is_finite() && rate >= 0.0,
            Sampler::Exponential { lambda } => lambda.is_finite() && lambda > 0.0,
            Sampler::CompoundPoisson { mu, nu } => mu.is_finite() && nu.is_finite() && mu > 0.0 && nu > 0.0,
        };
        if ok {
            Ok(())
        } else {
            invalid(format!("bad sampler parameters {self:?}"))
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            Sampler::Constant { rate } => rate,
            Sampler::Exponential { lambda } => Exp::new(lambda).expect("validated").sample(rng),
            Sampler::CompoundPoisson { mu, nu } => {
                let n = Poisson::new(mu).expect("validated").sample(rng) as u64;
                let jump = Exp::new(nu).expect("validated");
                (0..n).map(|_| jump.sample(rng)).sum()
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Sampler::Constant { rate } => rate,
            Sampler::Exponential { lambda } => 1.0 / lambda,
            Sampler::CompoundPoisson { mu, nu } => mu / nu,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimFlow {
    /// Node indices, in order.
    pub path: Vec<usize>,
    /// Priority per hop, 0 is highest.
    pub priorities: Vec<u32>,
    pub sampler: Sampler,
}

/// Hops `first..=last` of one flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PathSpan {
    pub flow: usize,
    pub first: usize,
    pub last: usize,
}

/// Virtual delay of the union of `members`: the smallest `s` with
/// `A(t) <= B(t + s)`, where `A` counts input to each span and `B` output from it.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayProbe {
    pub members: Vec<PathSpan>,
}

/// Joint backlog of `flows` at `node`.
#[derive(Debug, Clone, PartialEq)]
pub struct BacklogProbe {
    pub node: usize,
    pub flows: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub rates: Vec<f64>,
    pub flows: Vec<SimFlow>,
    pub horizon: u64,
    pub warmup: u64,
    pub seed: u64,
    pub delay_probes: Vec<DelayProbe>,
    pub backlog_probes: Vec<BacklogProbe>,
    pub delay_cap: u64,
}

impl SimConfig {
    pub fn new(rates: Vec<f64>, flows: Vec<SimFlow>, horizon: u64, warmup: u64, seed: u64) -> Self {
        Self {
            rates,
            flows,
            horizon,
            warmup,
            seed,
            delay_probes: Vec::new(),
            backlog_probes: Vec::new(),
            delay_cap: DEFAULT_DELAY_CAP,
        }
    }

    /// Nodes and flows of a parsed document; names map to indices in file order.
    pub fn from_document(doc: &NetworkDocument, horizon: u64, warmup: u64, seed: u64) -> Result<Self, SimError> {
        let index: HashMap<&str, usize> =
            doc.interfaces.iter().enumerate().map(|(i, r)| (r.name.as_str(), i)).collect();
        let rates = doc
            .interfaces
            .iter()
            .map(|r| match r.service {
                ServiceModel::ConstantRate { rate } | ServiceModel::ShiftedConstantRate { rate } => rate,
            })
            .collect();
        let mut flows = Vec::with_capacity(doc.flows.len());
        for rec in &doc.flows {
            let sampler = match rec.arrival {
                ArrivalModel::Constant { rate } => Sampler::Constant { rate },
                ArrivalModel::Exponential { mean } => Sampler::Exponential { lambda: 1.0 / mean },
                ArrivalModel::Poisson { mu, nu } => Sampler::CompoundPoisson { mu, nu },
                _ => return invalid(format!("arrival model of flow {} cannot be sampled", rec.name)),
            };
            let mut path = Vec::with_capacity(rec.hops.len());
            for (v, _) in &rec.hops {
                match index.get(v.as_str()) {
                    Some(&i) => path.push(i),
                    None => return invalid(format!("unknown vertex {v}")),
                }
            }
            let priorities = rec.hops.iter().map(|(_, p)| *p).collect();
            flows.push(SimFlow { path, priorities, sampler });
        }
        Ok(Self::new(rates, flows, horizon, warmup, seed))
    }

    fn validate(&self) -> Result<Vec<usize>, SimError> {
        if self.horizon <= self.warmup {
            return invalid("horizon must exceed warmup");
        }
        if self.delay_cap == 0 {
            return invalid("delay cap must be positive");
        }
        if let Some(r) = self.rates.iter().find(|r| !(r.is_finite() && **r > 0.0)) {
            return invalid(format!("node rate {r} is not positive"));
        }
        let n = self.rates.len();
        let mut edges = vec![Vec::new(); n];
        let mut indegree = vec![0usize; n];
        for (i, f) in self.flows.iter().enumerate() {
            f.sampler.validate()?;
            if f.path.is_empty() || f.path.len() != f.priorities.len() {
                return invalid(format!("flow {i} has an empty path or mismatched priorities"));
            }
            let mut seen = vec![false; n];
            for &v in &f.path {
                if v >= n || std::mem::replace(&mut seen[v], true) {
                    return invalid(format!("flow {i} has an unknown or repeated node"));
                }
            }
            for w in f.path.windows(2) {
                edges[w[0]].push(w[1]);
                indegree[w[1]] += 1;
            }
        }
        let mut queue: VecDeque<usize> = (0..n).filter(|&v| indegree[v] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for &w in &edges[v] {
                indegree[w] -= 1;
                if indegree[w] == 0 {
                    queue.push_back(w);
                }
            }
        }
        if order.len() != n {
            return invalid("topology is not feedforward");
        }
        for p in &self.delay_probes {
            if p.members.is_empty() {
                return invalid("delay probe has no members");
            }
            for m in &p.members {
                let ok = self.flows.get(m.flow).is_some_and(|f| m.first <= m.last && m.last < f.path.len());
                if !ok {
                    return invalid(format!("delay probe span {m:?} is out of range"));
                }
            }
        }
        for p in &self.backlog_probes {
            if p.node >= n || p.flows.is_empty() {
                return invalid("backlog probe references an unknown node or no flows");
            }
            for &f in &p.flows {
                if !self.flows.get(f).is_some_and(|x| x.path.contains(&p.node)) {
                    return invalid(format!("flow {f} does not traverse node {}", p.node));
                }
            }
        }
        Ok(order)
    }
}

/// Totals at one node during one slot.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NodeSlot {
    pub arrivals: f64,
    pub served: f64,
    /// Backlog after service.
    pub backlog: f64,
}

pub struct Simulator {
    cfg: SimConfig,
    order: Vec<usize>,
    /// `(flow, hop)` classes per node, highest priority first.
    classes: Vec<Vec<(usize, usize)>>,
    rngs: Vec<ChaCha8Rng>,
    backlog: Vec<Vec<f64>>,
    cum_in: Vec<Vec<f64>>,
    inflow: Vec<Vec<f64>>,
    slot: u64,
}

impl Simulator {
    pub fn new(cfg: SimConfig) -> Result<Self, SimError> {
        let order = cfg.validate()?;
        let mut classes = vec![Vec::new(); cfg.rates.len()];
        for (f, flow) in cfg.flows.iter().enumerate() {
            for (h, &v) in flow.path.iter().enumerate() {
                classes[v].push((flow.priorities[h], f, h));
            }
        }
        let classes = classes
            .into_iter()
            .map(|mut c| {
                c.sort();
                c.into_iter().map(|(_, f, h)| (f, h)).collect()
            })
            .collect();
        let rngs = (0..cfg.flows.len())
            .map(|f| {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                rng.set_stream(f as u64);
                rng
            })
            .collect();
        let zeros: Vec<Vec<f64>> = cfg.flows.iter().map(|f| vec![0.0; f.path.len()]).collect();
        Ok(Self {
            order,
            classes,
            rngs,
            backlog: zeros.clone(),
            cum_in: zeros.clone(),
            inflow: zeros,
            slot: 0,
            cfg,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    /// Backlog of `flow` at `hop` after the last slot.
    pub fn backlog(&self, flow: usize, hop: usize) -> f64 {
        self.backlog[flow][hop]
    }

    /// Cumulative input of `flow` at `hop`.
    pub fn cumulative_input(&self, flow: usize, hop: usize) -> f64 {
        self.cum_in[flow][hop]
    }

    /// Advances one slot and returns per-node totals.
    pub fn step(&mut self) -> Vec<NodeSlot> {
        for (f, flow) in self.cfg.flows.iter().enumerate() {
            self.inflow[f][0] = flow.sampler.sample(&mut self.rngs[f]);
        }
        let mut out = vec![NodeSlot::default(); self.cfg.rates.len()];
        for &v in &self.order {
            let mut capacity = self.cfg.rates[v];
            let slot = &mut out[v];
            for &(f, h) in &self.classes[v] {
                let a = self.inflow[f][h];
                self.cum_in[f][h] += a;
                let b = &mut self.backlog[f][h];
                *b += a;
                let served = capacity.min(*b);
                *b -= served;
                capacity -= served;
                slot.arrivals += a;
                slot.served += served;
                slot.backlog += *b;
                if h + 1 < self.cfg.flows[f].path.len() {
                    self.inflow[f][h + 1] = served;
                }
            }
        }
        self.slot += 1;
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Exceedance {
    pub count: u64,
    pub samples: u64,
}

impl Exceedance {
    pub fn probability(&self) -> f64 {
        if self.samples == 0 {
            0.0
        } else {
            self.count as f64 / self.samples as f64
        }
    }
}

/// Virtual delays in whole slots.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayStats {
    /// `histogram[d]` counts delay `d`, for `d <= cap`.
    pub histogram: Vec<u64>,
    /// Delays known to exceed the cap.
    pub overflow: u64,
    /// Samples dropped because the horizon ended before they resolved.
    pub censored: u64,
}

impl DelayStats {
    pub fn samples(&self) -> u64 {
        self.histogram.iter().sum::<u64>() + self.overflow
    }

    /// `P(d > t)`; exact for `t` below the cap.
    pub fn exceedance(&self, t: f64) -> Exceedance {
        let above: u64 = self
            .histogram
            .iter()
            .enumerate()
            .filter(|(d, _)| *d as f64 > t)
            .map(|(_, c)| c)
            .sum();
        Exceedance { count: above + self.overflow, samples: self.samples() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacklogStats {
    /// Per-slot backlog after warmup, ascending.
    pub sorted: Vec<f64>,
}

impl BacklogStats {
    /// `P(b > n)`.
    pub fn exceedance(&self, n: f64) -> Exceedance {
        let at_most = self.sorted.partition_point(|&b| b <= n);
        Exceedance {
            count: (self.sorted.len() - at_most) as u64,
            samples: self.sorted.len() as u64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimReport {
    pub seed: u64,
    pub horizon: u64,
    pub warmup: u64,
    pub delays: Vec<DelayStats>,
    pub backlogs: Vec<BacklogStats>,
}

pub fn simulate(cfg: SimConfig) -> Result<SimReport, SimError> {
    let mut sim = Simulator::new(cfg)?;
    let cfg = sim.config().clone();
    let span = (cfg.horizon - cfg.warmup) as usize;
    // per probe: cumulative input since warmup, and data still inside the span
    let mut arrived: Vec<Vec<f64>> = vec![Vec::with_capacity(span); cfg.delay_probes.len()];
    let mut inside: Vec<Vec<f64>> = vec![Vec::with_capacity(span); cfg.delay_probes.len()];
    let mut base = vec![0.0; cfg.delay_probes.len()];
    let mut backlogs: Vec<Vec<f64>> = vec![Vec::with_capacity(span); cfg.backlog_probes.len()];

    for t in 0..cfg.horizon {
        sim.step();
        if t + 1 == cfg.warmup {
            for (i, p) in cfg.delay_probes.iter().enumerate() {
                base[i] = p.members.iter().map(|m| sim.cumulative_input(m.flow, m.first)).sum();
            }
        }
        if t < cfg.warmup {
            continue;
        }
        for (i, p) in cfg.delay_probes.iter().enumerate() {
            let a: f64 = p.members.iter().map(|m| sim.cumulative_input(m.flow, m.first)).sum();
            let w: f64 = p
                .members
                .iter()
                .map(|m| (m.first..=m.last).map(|h| sim.backlog(m.flow, h)).sum::<f64>())
                .sum();
            arrived[i].push(a - base[i]);
            inside[i].push(w);
        }
        for (i, p) in cfg.backlog_probes.iter().enumerate() {
            let b = p
                .flows
                .iter()
                .map(|&f| {
                    let hop = cfg.flows[f].path.iter().position(|&v| v == p.node).expect("validated");
                    sim.backlog(f, hop)
                })
                .sum();
            backlogs[i].push(b);
        }
    }

    let delays = arrived
        .iter()
        .zip(&inside)
        .map(|(a, w)| virtual_delays(a, w, cfg.delay_cap))
        .collect();
    let backlogs = backlogs
        .into_iter()
        .map(|mut v| {
            v.sort_by(f64::total_cmp);
            BacklogStats { sorted: v }
        })
        .collect();
    Ok(SimReport { seed: cfg.seed, horizon: cfg.horizon, warmup: cfg.warmup, delays, backlogs })
}

/// `d(t)` is the smallest `s` with `A(t) <= B(t+s)`, where `B = A - W`.
fn virtual_delays(a: &[f64], w: &[f64], cap: u64) -> DelayStats {
    let n = a.len();
    let mut stats = DelayStats { histogram: vec![0; cap as usize + 1], overflow: 0, censored: 0 };
    let mut u = 0;
    for t in 0..n {
        u = u.max(t);
        while u < n && w[u] > a[u] - a[t] + TOLERANCE * a[u].abs().max(1.0) {
            u += 1;
        }
        if u == n {
            if (n - t) as u64 > cap {
                stats.overflow += 1;
            } else {
                stats.censored += 1;
            }
            continue;
        }
        let d = (u - t) as u64;
        if d > cap {
            stats.overflow += 1;
        } else {
            stats.histogram[d as usize] += 1;
        }
    }
    stats
}

/// Mean per-slot input rate of a sampler, estimated from `n` draws.
pub fn empirical_mean(sampler: Sampler, n: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| sampler.sample(&mut rng)).sum::<f64>() / n as f64
}
