//! Reduction engine and performance bounds.
//!
//! A [`PerformanceBound`] states `P(quantity > x) <= exp(θ·ρ_b(θ)·x + θ·σ_b(θ))`.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::models::{Arrival, Dependencies, FlowId, Service, VertexId};
use crate::network::{Network, NetworkError};
use crate::symbolic::{HoelderId, HoelderRole, SymbolicFunction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundKind {
    Backlog,
    Delay,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerformanceBound {
    pub kind: BoundKind,
    pub rho: SymbolicFunction,
    pub sigma: SymbolicFunction,
    pub deps: Dependencies,
}

impl PerformanceBound {
    pub fn hoelder_ids(&self) -> BTreeSet<HoelderId> {
        let mut ids = self.rho.parameter_ids();
        ids.extend(self.sigma.parameter_ids());
        ids
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("reduction cannot progress; network is not feedforward")]
    NotFeedforward,
    #[error("unknown flow {0}")]
    UnknownFlow(FlowId),
    #[error("unknown vertex {0}")]
    UnknownVertex(VertexId),
    #[error("{flow} does not traverse {vertex}")]
    FlowNotAtVertex { flow: FlowId, vertex: VertexId },
    #[error("path mismatch: {0}")]
    PathMismatch(String),
    #[error("path is empty")]
    EmptyPath,
}

/// What to analyze: a flow at one vertex, or along consecutive vertices of its route.
#[derive(Debug, Clone, PartialEq)]
pub enum AnalysisRequest {
    Local { flow: FlowId, vertex: VertexId, kind: BoundKind },
    EndToEnd { flow: FlowId, path: Vec<VertexId> },
    Ladder { flow: FlowId, crossflow: FlowId, path: Vec<VertexId> },
}

/// Runs `req` on a copy of `net`; the original stays untouched.
/// Returns the bound and the reduced copy.
pub fn analyze(net: &Network, req: &AnalysisRequest) -> Result<(PerformanceBound, Network), AnalysisError> {
    let mut work = net.clone();
    let bound = match req {
        AnalysisRequest::Local { flow, vertex, kind } => simple_analysis(&mut work, *flow, *vertex, *kind)?,
        AnalysisRequest::EndToEnd { flow, path } => end_to_end_analysis(&mut work, *flow, path)?,
        AnalysisRequest::Ladder { flow, crossflow, path } => {
            ladder_end_to_end(&mut work, *flow, *crossflow, path)?
        }
    };
    Ok((bound, work))
}

fn p(f: &SymbolicFunction, h: HoelderId) -> SymbolicFunction {
    f.scaled(h, HoelderRole::P)
}

fn q(f: &SymbolicFunction, h: HoelderId) -> SymbolicFunction {
    f.scaled(h, HoelderRole::Q)
}

/// Backlog or delay bound for arrival `a` at server `s`.
pub fn local_bound(net: &mut Network, a: &Arrival, s: &Service, kind: BoundKind) -> PerformanceBound {
    let deps = a.deps.union(&s.deps);
    let (rho_a, sigma_a, rho_u, sigma_u) = if a.deps.intersects(&s.deps) {
        let h = net.fresh_hoelder();
        (p(&a.rho, h), p(&a.sigma, h), q(&s.rho, h), q(&s.sigma, h))
    } else {
        (a.rho.clone(), a.sigma.clone(), s.rho.clone(), s.sigma.clone())
    };
    let sigma = SymbolicFunction::deconvolution_sigma(&sigma_a, &sigma_u, &rho_a, &rho_u);
    let rho = match kind {
        BoundKind::Backlog => SymbolicFunction::constant(-1.0),
        BoundKind::Delay => rho_u,
    };
    PerformanceBound { kind, rho, sigma, deps }
}

/// End-to-end delay bound of `a` through the tandem `services`.
///
/// Pairwise independent operands use the closed N-hop form; otherwise the
/// services are convolved left to right and bounded at the result.
pub fn end_to_end_delay(
    net: &mut Network,
    a: &Arrival,
    services: &[Service],
) -> Result<PerformanceBound, AnalysisError> {
    if services.is_empty() {
        return Err(AnalysisError::EmptyPath);
    }
    let mut all: Vec<&Dependencies> = vec![&a.deps];
    all.extend(services.iter().map(|s| &s.deps));
    let independent = all
        .iter()
        .enumerate()
        .all(|(i, x)| all[i + 1..].iter().all(|y| !x.intersects(y)));
    if !independent {
        return Ok(convolved_delay_bound(net, a, services));
    }
    let zero = SymbolicFunction::constant(0.0);
    let mut sigma = a.sigma.clone();
    let mut deps = a.deps.clone();
    for s in services {
        sigma = sigma.sum(&SymbolicFunction::deconvolution_sigma(&zero, &s.sigma, &a.rho, &s.rho));
        deps = deps.union(&s.deps);
    }
    Ok(PerformanceBound {
        kind: BoundKind::Delay,
        rho: a.rho.negate(),
        sigma,
        deps,
    })
}

fn convolved_delay_bound(net: &mut Network, a: &Arrival, services: &[Service]) -> PerformanceBound {
    let mut total = services[0].clone();
    for s in &services[1..] {
        total = net.convolve(&total, s);
    }
    local_bound(net, a, &total, BoundKind::Delay)
}

/// Demand-driven planner for `compute_leftover` calls.
struct Planner<'a> {
    net: &'a Network,
    needed: BTreeSet<(VertexId, FlowId)>,
    visiting: BTreeSet<(VertexId, FlowId)>,
}

impl<'a> Planner<'a> {
    fn new(net: &'a Network) -> Self {
        Self { net, needed: BTreeSet::new(), visiting: BTreeSet::new() }
    }

    fn serve(&mut self, v: VertexId, f: FlowId) -> Result<(), AnalysisError> {
        let vertex = self.net.vertex(v).ok_or(AnalysisError::UnknownVertex(v))?;
        if vertex.served.contains(&f) || self.needed.contains(&(v, f)) {
            return Ok(());
        }
        if !self.visiting.insert((v, f)) {
            return Err(AnalysisError::NotFeedforward);
        }
        self.ahead(v, f)?;
        self.arrival(f, v)?;
        self.visiting.remove(&(v, f));
        self.needed.insert((v, f));
        Ok(())
    }

    fn ahead(&mut self, v: VertexId, f: FlowId) -> Result<(), AnalysisError> {
        let vertex = self.net.vertex(v).ok_or(AnalysisError::UnknownVertex(v))?;
        let ahead: Vec<FlowId> = vertex
            .service_order()
            .into_iter()
            .filter(|&g| vertex.is_ahead(g, f))
            .collect();
        for g in ahead {
            self.serve(v, g)?;
        }
        Ok(())
    }

    fn arrival(&mut self, f: FlowId, v: VertexId) -> Result<(), AnalysisError> {
        let flow = self.net.flow(f).ok_or(AnalysisError::UnknownFlow(f))?;
        let hop = flow
            .hop_of(v)
            .ok_or(AnalysisError::FlowNotAtVertex { flow: f, vertex: v })?;
        if hop < flow.established_arrivals {
            return Ok(());
        }
        self.serve(flow.path[hop - 1], f)
    }
}

/// Executes planned events, always at the lowest eligible vertex id.
fn execute(net: &mut Network, mut needed: BTreeSet<(VertexId, FlowId)>) -> Result<(), AnalysisError> {
    while !needed.is_empty() {
        let pending: BTreeSet<VertexId> = needed.iter().map(|&(v, _)| v).collect();
        let next = pending.into_iter().find_map(|v| {
            let f = net.vertex(v)?.next_to_serve()?;
            let ready = needed.contains(&(v, f)) && net.flow(f)?.arrival_at(v).is_some();
            ready.then_some((v, f))
        });
        let Some((v, f)) = next else {
            return Err(AnalysisError::NotFeedforward);
        };
        net.compute_leftover(v)?;
        needed.remove(&(v, f));
    }
    Ok(())
}

fn check_membership(net: &Network, flow: FlowId, vertex: VertexId) -> Result<(), AnalysisError> {
    let f = net.flow(flow).ok_or(AnalysisError::UnknownFlow(flow))?;
    net.vertex(vertex).ok_or(AnalysisError::UnknownVertex(vertex))?;
    if f.hop_of(vertex).is_none() {
        return Err(AnalysisError::FlowNotAtVertex { flow, vertex });
    }
    Ok(())
}

/// Subtracts every flow ahead of `flow` at `vertex`; with `with_arrival`
/// also establishes `flow`'s arrival there.
pub fn reduce_for(
    net: &mut Network,
    flow: FlowId,
    vertex: VertexId,
    with_arrival: bool,
) -> Result<(), AnalysisError> {
    check_membership(net, flow, vertex)?;
    let mut planner = Planner::new(net);
    planner.ahead(vertex, flow)?;
    if with_arrival {
        planner.arrival(flow, vertex)?;
    }
    let needed = planner.needed;
    execute(net, needed)
}

/// Local bound for `flow` at `vertex` after the needed reductions.
pub fn simple_analysis(
    net: &mut Network,
    flow: FlowId,
    vertex: VertexId,
    kind: BoundKind,
) -> Result<PerformanceBound, AnalysisError> {
    reduce_for(net, flow, vertex, true)?;
    let arrival = net
        .flow(flow)
        .and_then(|f| f.arrival_at(vertex))
        .cloned()
        .expect("reduction establishes the arrival");
    let service = net.vertex(vertex).expect("checked").service.clone();
    Ok(local_bound(net, &arrival, &service, kind))
}

fn check_subpath(net: &Network, flow: FlowId, path: &[VertexId]) -> Result<usize, AnalysisError> {
    let f = net.flow(flow).ok_or(AnalysisError::UnknownFlow(flow))?;
    if path.is_empty() {
        return Err(AnalysisError::EmptyPath);
    }
    let start = f.hop_of(path[0]).ok_or_else(|| {
        AnalysisError::PathMismatch(format!("{} does not visit {}", f.name, path[0]))
    })?;
    if f.path.get(start..start + path.len()) != Some(path) {
        return Err(AnalysisError::PathMismatch(format!(
            "path is not a consecutive part of the route of {}",
            f.name
        )));
    }
    Ok(start)
}

/// Reduces the network and returns the flow's arrival at the head of `path`
/// together with the service left for it at each vertex.
fn path_operands(
    net: &mut Network,
    flow: FlowId,
    path: &[VertexId],
) -> Result<(Arrival, Vec<Service>), AnalysisError> {
    check_subpath(net, flow, path)?;
    reduce_for(net, flow, path[0], true)?;
    let arrival = net.flow(flow).and_then(|f| f.arrival_at(path[0])).cloned().expect("established");
    let mut services = Vec::with_capacity(path.len());
    for &v in path {
        reduce_for(net, flow, v, false)?;
        services.push(net.vertex(v).expect("checked").service.clone());
    }
    Ok((arrival, services))
}

/// End-to-end delay bound of `flow` along consecutive vertices of its route.
pub fn end_to_end_analysis(
    net: &mut Network,
    flow: FlowId,
    path: &[VertexId],
) -> Result<PerformanceBound, AnalysisError> {
    let (arrival, services) = path_operands(net, flow, path)?;
    end_to_end_delay(net, &arrival, &services)
}

/// End-to-end delay bound of `foi` along `path` with a higher-priority
/// crossflow sharing every hop.
pub fn ladder_end_to_end(
    net: &mut Network,
    foi: FlowId,
    crossflow: FlowId,
    path: &[VertexId],
) -> Result<PerformanceBound, AnalysisError> {
    check_subpath(net, foi, path)?;
    check_subpath(net, crossflow, path)?;
    for &v in path {
        let vertex = net.vertex(v).ok_or(AnalysisError::UnknownVertex(v))?;
        if !vertex.is_ahead(crossflow, foi) {
            return Err(AnalysisError::PathMismatch(format!(
                "crossflow is not served before the flow of interest at {}",
                vertex.name
            )));
        }
    }
    let (arrival, services) = path_operands(net, foi, path)?;
    Ok(convolved_delay_bound(net, &arrival, &services))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::*;
    use crate::symbolic::{EvalError, ParamAssignment};

    fn value(b: &PerformanceBound, a: &ParamAssignment, x: f64) -> f64 {
        let theta = a.theta;
        (theta * b.rho.evaluate(a).unwrap() * x + theta * b.sigma.evaluate(a).unwrap()).exp()
    }

    fn mm1() -> (Network, FlowId, VertexId) {
        let mut net = Network::new();
        let v = net.add_vertex_model("v", ServiceModel::ConstantRate { rate: 4.0 }).unwrap();
        let f = net
            .add_flow_model("f", &[v], &[0], ArrivalModel::Exponential { mean: 2.0 })
            .unwrap();
        (net, f, v)
    }

    #[test]
    fn local_bound_hand_values() {
        let (mut net, _, _) = mm1();
        let a = exponential_arrival(0.5).unwrap();
        let s = constant_rate_service(4.0).unwrap();
        let at = ParamAssignment::new(0.2);
        let rho_a = 5.0 * (5.0f64 / 3.0).ln();
        let sigma_b = -5.0 * (1.0 - (0.2 * (rho_a - 4.0)).exp()).ln();

        let backlog = local_bound(&mut net, &a, &s, BoundKind::Backlog);
        let oracle = (0.2 * -20.0 + 0.2 * sigma_b).exp();
        assert!((value(&backlog, &at, 20.0) - oracle).abs() < 1e-9);
        assert!((oracle - 0.0730).abs() < 1e-3);

        let delay = local_bound(&mut net, &a, &s, BoundKind::Delay);
        let oracle = (0.2 * -4.0 * 5.0 + 0.2 * sigma_b).exp();
        assert!((value(&delay, &at, 5.0) - oracle).abs() < 1e-9);
        assert!((oracle - 0.0730).abs() < 1e-3);
        assert_eq!(backlog.sigma, delay.sigma);
        assert_eq!(net.hoelder_count(), 0);
    }

    #[test]
    fn local_bound_zero_slack_is_unstable() {
        let mut net = Network::new();
        let b = local_bound(
            &mut net,
            &constant_rate_arrival(2.0).unwrap(),
            &constant_rate_service(2.0).unwrap(),
            BoundKind::Delay,
        );
        for theta in [0.01, 0.3, 5.0] {
            assert_eq!(
                b.sigma.evaluate(&ParamAssignment::new(theta)),
                Err(EvalError::StabilityViolated)
            );
        }
    }

    #[test]
    fn single_node_simple_analysis_matches_direct() {
        let (net, f, v) = mm1();
        let mut work = net.clone();
        let direct = local_bound(
            &mut work,
            &exponential_arrival(0.5).unwrap(),
            &constant_rate_service(4.0).unwrap(),
            BoundKind::Delay,
        );
        let (bound, _) = analyze(&net, &AnalysisRequest::Local { flow: f, vertex: v, kind: BoundKind::Delay }).unwrap();
        for theta in [0.05, 0.2, 0.3] {
            let a = ParamAssignment::new(theta);
            assert_eq!(value(&bound, &a, 7.0), value(&direct, &a, 7.0));
        }
    }

    fn fig5() -> (Network, [VertexId; 2], [FlowId; 2]) {
        let mut net = Network::new();
        let u = net.add_vertex_model("U", ServiceModel::ConstantRate { rate: 6.0 }).unwrap();
        let v = net.add_vertex_model("V", ServiceModel::ConstantRate { rate: 6.0 }).unwrap();
        let a1 = net
            .add_flow_model("A1", &[u, v], &[1, 1], ArrivalModel::Constant { rate: 1.0 })
            .unwrap();
        let a2 = net
            .add_flow_model("A2", &[u, v], &[0, 0], ArrivalModel::Constant { rate: 2.0 })
            .unwrap();
        (net, [u, v], [a1, a2])
    }

    #[test]
    fn fig5_a2_at_u_needs_no_reduction() {
        let (mut net, [u, _], [_, a2]) = fig5();
        let b = simple_analysis(&mut net, a2, u, BoundKind::Backlog).unwrap();
        let a = ParamAssignment::new(0.5);
        let sigma = -(1.0 / 0.5) * (1.0 - (0.5f64 * (2.0 - 6.0)).exp()).ln();
        assert!((b.sigma.evaluate(&a).unwrap() - sigma).abs() < 1e-12);
        assert!(net.vertex(u).unwrap().served.is_empty());
    }

    #[test]
    fn fig5_a1_at_u_subtracts_a2() {
        let (mut net, [u, _], [a1, a2]) = fig5();
        let b = simple_analysis(&mut net, a1, u, BoundKind::Delay).unwrap();
        assert_eq!(net.vertex(u).unwrap().served, BTreeSet::from([a2]));
        let a = ParamAssignment::new(0.5);
        // leftover rate 6 - 2 = 4, arrival rate 1
        assert_eq!(b.rho.evaluate(&a), Ok(-4.0));
        let sigma = -(1.0 / 0.5) * (1.0 - (0.5f64 * (1.0 - 4.0)).exp()).ln();
        assert!((b.sigma.evaluate(&a).unwrap() - sigma).abs() < 1e-12);
        assert_eq!(net.hoelder_count(), 0);
    }

    #[test]
    fn fig5_a1_at_v_is_dependent() {
        let (mut net, [u, v], [a1, a2]) = fig5();
        let b = simple_analysis(&mut net, a1, v, BoundKind::Delay).unwrap();
        assert_eq!(net.hoelder_count(), 1);
        assert_eq!(b.hoelder_ids().len(), 1);
        assert_eq!(net.vertex(u).unwrap().served, BTreeSet::from([a1, a2]));
        assert_eq!(net.vertex(v).unwrap().served, BTreeSet::from([a2]));
        net.check_invariants().unwrap();

        let h = *b.hoelder_ids().iter().next().unwrap();
        let a = ParamAssignment::new(0.3).with_hoelder(h, 1.5);
        let dec = |theta: f64, rho_a: f64, rho_u: f64| {
            -(1.0 / theta) * (1.0 - (theta * (rho_a + rho_u)).exp()).ln()
        };
        // A1 after U⊖A2 at pθ, V⊖(A2⊘U) at qθ
        let (tp, tq) = (0.3 * 1.5, 0.3 * 3.0);
        let oracle = dec(tp, 1.0, -4.0) + dec(tq, 2.0, -6.0) + dec(0.3, 1.0, -4.0);
        assert!((b.sigma.evaluate(&a).unwrap() - oracle).abs() < 1e-9);
        assert_eq!(b.rho.evaluate(&a), Ok(-4.0));
    }

    #[test]
    fn aggregate_strategy_matches_hand_composition() {
        let (net, [_, _], _) = fig5();
        let mut net = net;
        let x = constant_rate_arrival(1.0).unwrap();
        let mut y = constant_rate_arrival(2.0).unwrap();
        y.deps.flows.insert(FlowId(99));
        let agg = net.multiplex(&x, &y);
        let out = net.output_bound(&agg, &constant_rate_service(6.0).unwrap());
        let b = local_bound(&mut net, &out, &constant_rate_service(6.0).unwrap(), BoundKind::Backlog);
        let theta: f64 = 0.4;
        let dec = |rho_a: f64, rho_u: f64| -(1.0 / theta) * (1.0 - (theta * (rho_a + rho_u)).exp()).ln();
        let oracle = dec(3.0, -6.0) + dec(3.0, -6.0);
        let got = b.sigma.evaluate(&ParamAssignment::new(theta)).unwrap();
        assert!((got - oracle).abs() < 1e-9);
    }

    #[test]
    fn end_to_end_hand_values() {
        let mut net = Network::new();
        let a = exponential_arrival(0.5).unwrap();
        let services = vec![service(-4.0, 0.0, 1), service(-4.0, 0.0, 2)];
        let b = end_to_end_delay(&mut net, &a, &services).unwrap();
        assert_eq!(net.hoelder_count(), 0);
        let at = ParamAssignment::new(0.2);
        let rho_a = 5.0 * (5.0f64 / 3.0).ln();
        let oracle = |t: f64| (-0.2 * rho_a * t).exp() / (1.0 - (0.2 * (rho_a - 4.0)).exp()).powi(2);
        assert!((value(&b, &at, 5.0) - oracle(5.0)).abs() < 1e-9);
        assert!((oracle(5.0) - 1.233).abs() < 1e-3);
        assert!((value(&b, &at, 20.0) - oracle(20.0)).abs() < 1e-12);
        assert!((oracle(20.0) - 5.76e-4).abs() < 1e-5);

        let one = end_to_end_delay(&mut net, &a, &services[..1]).unwrap();
        assert_eq!(one.rho.evaluate(&at).unwrap(), -rho_a);
        assert_eq!(end_to_end_delay(&mut net, &a, &[]), Err(AnalysisError::EmptyPath));
    }

    fn service(rho: f64, sigma: f64, v: u32) -> Service {
        let mut s = Service {
            rho: SymbolicFunction::constant(rho),
            sigma: SymbolicFunction::constant(sigma),
            deps: Dependencies::default(),
        };
        s.deps.services.insert(VertexId(v));
        s
    }

    fn ladder(hops: usize) -> (Network, Vec<VertexId>, FlowId, FlowId) {
        let mut net = Network::new();
        let vs: Vec<_> = (0..hops)
            .map(|i| {
                net.add_vertex_model(&format!("v{i}"), ServiceModel::ShiftedConstantRate { rate: 8.0 })
                    .unwrap()
            })
            .collect();
        let foi = net
            .add_flow_model("foi", &vs, &vec![1; hops], ArrivalModel::Exponential { mean: 2.0 })
            .unwrap();
        let cross = net
            .add_flow_model("cross", &vs, &vec![0; hops], ArrivalModel::Exponential { mean: 4.0 })
            .unwrap();
        (net, vs, foi, cross)
    }

    #[test]
    fn ladder_hoelder_count() {
        for hops in 1..=4 {
            let (mut net, vs, foi, cross) = ladder(hops);
            let b = ladder_end_to_end(&mut net, foi, cross, &vs).unwrap();
            assert_eq!(net.hoelder_count(), hops - 1, "{hops} hops");
            assert_eq!(b.hoelder_ids().len(), hops - 1);
        }
    }

    #[test]
    fn one_hop_ladder_equals_simple_analysis() {
        let (net, vs, foi, cross) = ladder(1);
        let (l, _) = analyze(&net, &AnalysisRequest::Ladder { flow: foi, crossflow: cross, path: vs.clone() }).unwrap();
        let (s, _) = analyze(&net, &AnalysisRequest::Local { flow: foi, vertex: vs[0], kind: BoundKind::Delay }).unwrap();
        assert_eq!(l, s);
    }

    #[test]
    fn ladder_rejects_bad_paths() {
        let (mut net, vs, foi, _) = ladder(2);
        let partial = net
            .add_flow_model("partial", &vs[..1], &[0], ArrivalModel::Constant { rate: 1.0 })
            .unwrap();
        assert!(matches!(
            ladder_end_to_end(&mut net.clone(), foi, partial, &vs),
            Err(AnalysisError::PathMismatch(_))
        ));
        let low = net
            .add_flow_model("low", &vs, &[5, 5], ArrivalModel::Constant { rate: 1.0 })
            .unwrap();
        assert!(matches!(
            ladder_end_to_end(&mut net, foi, low, &vs),
            Err(AnalysisError::PathMismatch(_))
        ));
    }

    #[test]
    fn end_to_end_analysis_of_dependent_tandem() {
        let (mut net, vs, foi, _) = ladder(3);
        let b = end_to_end_analysis(&mut net, foi, &vs).unwrap();
        assert_eq!(b.hoelder_ids().len(), 2);
        let (mut net, vs, foi, _) = ladder(3);
        assert!(matches!(
            end_to_end_analysis(&mut net, foi, &[vs[0], vs[2]]),
            Err(AnalysisError::PathMismatch(_))
        ));
    }

    #[test]
    fn errors_for_unknown_objects() {
        let (mut net, f, v) = mm1();
        let w = net.add_vertex_model("w", ServiceModel::ConstantRate { rate: 1.0 }).unwrap();
        assert_eq!(
            simple_analysis(&mut net, f, w, BoundKind::Delay),
            Err(AnalysisError::FlowNotAtVertex { flow: f, vertex: w })
        );
        assert_eq!(
            simple_analysis(&mut net, FlowId(77), v, BoundKind::Delay),
            Err(AnalysisError::UnknownFlow(FlowId(77)))
        );
    }
}
