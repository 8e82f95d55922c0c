//! Network topology and the reduction operations.
//!
//! The four operations (multiplexing, convolution, leftover service and output
//! bound) check whether their operands' dependency sets overlap. If they do,
//! a fresh Hölder parameter is registered and the dependent variant is built:
//! the first operand is evaluated at `p·θ`, the second at `q·θ`.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use thiserror::Error;

use crate::models::{
    Arrival, ArrivalModel, Dependencies, FlowId, ModelError, Service, ServiceModel, VertexId,
};
use crate::symbolic::{HoelderId, HoelderParam, HoelderRole, SymbolicFunction};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetworkError {
    #[error("name '{0}' is already in use")]
    DuplicateName(String),
    #[error("unknown vertex {0}")]
    UnknownVertex(VertexId),
    #[error("unknown flow {0}")]
    UnknownFlow(FlowId),
    #[error("flow path is empty")]
    EmptyPath,
    #[error("path has {path} hops but {priorities} priorities")]
    LengthMismatch { path: usize, priorities: usize },
    #[error("flow visits {0} more than once")]
    RepeatedVertex(VertexId),
    #[error("no flow at {0} can be served yet")]
    NoEligibleFlow(VertexId),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Reference to an object that can carry stochastic dependencies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum DepRef {
    Flow(FlowId),
    Service(VertexId),
}

#[derive(Debug, Clone)]
pub struct Flow {
    pub id: FlowId,
    pub name: String,
    pub path: Vec<VertexId>,
    /// Priority per hop, 0 is highest.
    pub priorities: Vec<u32>,
    /// Bound at each hop; `Some` exactly for the first `established_arrivals` hops.
    pub arrivals: Vec<Option<Arrival>>,
    pub established_arrivals: usize,
    pub ingress_model: Option<ArrivalModel>,
}

impl Flow {
    pub fn hop_of(&self, vertex: VertexId) -> Option<usize> {
        self.path.iter().position(|&v| v == vertex)
    }

    pub fn priority_at(&self, vertex: VertexId) -> Option<u32> {
        self.hop_of(vertex).map(|h| self.priorities[h])
    }

    pub fn arrival_at(&self, vertex: VertexId) -> Option<&Arrival> {
        self.hop_of(vertex).and_then(|h| self.arrivals[h].as_ref())
    }
}

#[derive(Debug, Clone)]
pub struct Vertex {
    pub id: VertexId,
    pub name: String,
    pub service: Service,
    pub service_model: Option<ServiceModel>,
    /// Incoming flows and their priority at this vertex.
    pub incoming: BTreeMap<FlowId, u32>,
    /// Flows already subtracted from `service`.
    pub served: BTreeSet<FlowId>,
}

impl Vertex {
    /// Unserved incoming flows in strict-priority order; ties go to the lower flow id.
    pub fn service_order(&self) -> Vec<FlowId> {
        let mut order: Vec<(u32, FlowId)> = self
            .incoming
            .iter()
            .filter(|(f, _)| !self.served.contains(f))
            .map(|(&f, &p)| (p, f))
            .collect();
        order.sort();
        order.into_iter().map(|(_, f)| f).collect()
    }

    pub fn next_to_serve(&self) -> Option<FlowId> {
        self.service_order().into_iter().next()
    }

    /// Whether `other` is served before `flow` here.
    pub fn is_ahead(&self, other: FlowId, flow: FlowId) -> bool {
        match (self.incoming.get(&other), self.incoming.get(&flow)) {
            (Some(&po), Some(&pf)) => (po, other) < (pf, flow),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Network {
    flows: BTreeMap<FlowId, Flow>,
    vertices: BTreeMap<VertexId, Vertex>,
    hoelders: BTreeMap<HoelderId, HoelderParam>,
    flow_names: HashMap<String, FlowId>,
    vertex_names: HashMap<String, VertexId>,
    next_flow: u32,
    next_vertex: u32,
    next_hoelder: u32,
    declared_dependencies: bool,
}

impl Network {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_vertex(&mut self, name: &str, service: Service) -> Result<VertexId, NetworkError> {
        self.insert_vertex(name, service, None)
    }

    pub fn add_vertex_model(&mut self, name: &str, model: ServiceModel) -> Result<VertexId, NetworkError> {
        let service = model.build()?;
        self.insert_vertex(name, service, Some(model))
    }

    fn insert_vertex(
        &mut self,
        name: &str,
        mut service: Service,
        service_model: Option<ServiceModel>,
    ) -> Result<VertexId, NetworkError> {
        if self.vertex_names.contains_key(name) {
            return Err(NetworkError::DuplicateName(name.to_string()));
        }
        self.next_vertex += 1;
        let id = VertexId(self.next_vertex);
        service.deps.services.insert(id);
        self.vertices.insert(
            id,
            Vertex {
                id,
                name: name.to_string(),
                service,
                service_model,
                incoming: BTreeMap::new(),
                served: BTreeSet::new(),
            },
        );
        self.vertex_names.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn add_flow(
        &mut self,
        name: &str,
        path: &[VertexId],
        priorities: &[u32],
        ingress: Arrival,
    ) -> Result<FlowId, NetworkError> {
        self.insert_flow(name, path, priorities, ingress, None)
    }

    pub fn add_flow_model(
        &mut self,
        name: &str,
        path: &[VertexId],
        priorities: &[u32],
        model: ArrivalModel,
    ) -> Result<FlowId, NetworkError> {
        let ingress = model.build()?;
        self.insert_flow(name, path, priorities, ingress, Some(model))
    }

    fn insert_flow(
        &mut self,
        name: &str,
        path: &[VertexId],
        priorities: &[u32],
        mut ingress: Arrival,
        ingress_model: Option<ArrivalModel>,
    ) -> Result<FlowId, NetworkError> {
        if self.flow_names.contains_key(name) {
            return Err(NetworkError::DuplicateName(name.to_string()));
        }
        if path.is_empty() {
            return Err(NetworkError::EmptyPath);
        }
        if path.len() != priorities.len() {
            return Err(NetworkError::LengthMismatch {
                path: path.len(),
                priorities: priorities.len(),
            });
        }
        let mut seen = BTreeSet::new();
        for &v in path {
            if !self.vertices.contains_key(&v) {
                return Err(NetworkError::UnknownVertex(v));
            }
            if !seen.insert(v) {
                return Err(NetworkError::RepeatedVertex(v));
            }
        }
        self.next_flow += 1;
        let id = FlowId(self.next_flow);
        ingress.deps.flows.insert(id);
        for (&v, &prio) in path.iter().zip(priorities) {
            self.vertices.get_mut(&v).expect("checked").incoming.insert(id, prio);
        }
        let mut arrivals = vec![None; path.len()];
        arrivals[0] = Some(ingress);
        self.flows.insert(
            id,
            Flow {
                id,
                name: name.to_string(),
                path: path.to_vec(),
                priorities: priorities.to_vec(),
                arrivals,
                established_arrivals: 1,
                ingress_model,
            },
        );
        self.flow_names.insert(name.to_string(), id);
        Ok(id)
    }

    /// Marks the named flows and services as mutually dependent.
    pub fn declare_dependency(&mut self, refs: &[DepRef]) -> Result<(), NetworkError> {
        let mut joint = Dependencies::default();
        for r in refs {
            match *r {
                DepRef::Flow(f) => {
                    if !self.flows.contains_key(&f) {
                        return Err(NetworkError::UnknownFlow(f));
                    }
                    joint.flows.insert(f);
                }
                DepRef::Service(v) => {
                    if !self.vertices.contains_key(&v) {
                        return Err(NetworkError::UnknownVertex(v));
                    }
                    joint.services.insert(v);
                }
            }
        }
        if refs.len() < 2 {
            return Ok(());
        }
        for r in refs {
            match *r {
                DepRef::Flow(f) => {
                    let flow = self.flows.get_mut(&f).expect("checked");
                    for arrival in flow.arrivals.iter_mut().flatten() {
                        arrival.deps = arrival.deps.union(&joint);
                    }
                }
                DepRef::Service(v) => {
                    let vertex = self.vertices.get_mut(&v).expect("checked");
                    vertex.service.deps = vertex.service.deps.union(&joint);
                }
            }
        }
        self.declared_dependencies = true;
        Ok(())
    }

    pub fn has_declared_dependencies(&self) -> bool {
        self.declared_dependencies
    }

    /// Registers a new Hölder parameter.
    pub fn fresh_hoelder(&mut self) -> HoelderId {
        self.next_hoelder += 1;
        let id = HoelderId(self.next_hoelder);
        self.hoelders.insert(id, HoelderParam { id });
        id
    }

    fn hoelder_if(&mut self, a: &Dependencies, b: &Dependencies) -> Option<HoelderId> {
        a.intersects(b).then(|| self.fresh_hoelder())
    }

    pub fn hoelders(&self) -> &BTreeMap<HoelderId, HoelderParam> {
        &self.hoelders
    }

    pub fn hoelder_count(&self) -> usize {
        self.hoelders.len()
    }

    /// Aggregate of two flows sharing a server.
    pub fn multiplex(&mut self, a1: &Arrival, a2: &Arrival) -> Arrival {
        let deps = a1.deps.union(&a2.deps);
        match self.hoelder_if(&a1.deps, &a2.deps) {
            None => Arrival {
                rho: a1.rho.sum(&a2.rho),
                sigma: a1.sigma.sum(&a2.sigma),
                deps,
            },
            Some(h) => Arrival {
                rho: p(&a1.rho, h).sum(&q(&a2.rho, h)),
                sigma: p(&a1.sigma, h).sum(&q(&a2.sigma, h)),
                deps,
            },
        }
    }

    /// End-to-end service of the tandem `s1` then `s2`.
    pub fn convolve(&mut self, s1: &Service, s2: &Service) -> Service {
        let deps = s1.deps.union(&s2.deps);
        let (rho1, sigma1, rho2, sigma2) = match self.hoelder_if(&s1.deps, &s2.deps) {
            None => (s1.rho.clone(), s1.sigma.clone(), s2.rho.clone(), s2.sigma.clone()),
            Some(h) => (p(&s1.rho, h), p(&s1.sigma, h), q(&s2.rho, h), q(&s2.sigma, h)),
        };
        Service {
            rho: rho1.max(&rho2),
            sigma: SymbolicFunction::convolution_sigma(&sigma1, &sigma2, &rho1, &rho2),
            deps,
        }
    }

    /// Service left for lower-priority flows after serving `a` with strict priority.
    pub fn leftover(&mut self, s: &Service, a: &Arrival) -> Service {
        let deps = s.deps.union(&a.deps);
        match self.hoelder_if(&a.deps, &s.deps) {
            None => Service {
                rho: a.rho.sum(&s.rho),
                sigma: a.sigma.sum(&s.sigma),
                deps,
            },
            Some(h) => Service {
                rho: p(&a.rho, h).sum(&q(&s.rho, h)),
                sigma: p(&a.sigma, h).sum(&q(&s.sigma, h)),
                deps,
            },
        }
    }

    /// Bound on the departures of `a` from server `s`.
    pub fn output_bound(&mut self, a: &Arrival, s: &Service) -> Arrival {
        let deps = a.deps.union(&s.deps);
        let (rho_a, sigma_a, rho_u, sigma_u) = match self.hoelder_if(&a.deps, &s.deps) {
            None => (a.rho.clone(), a.sigma.clone(), s.rho.clone(), s.sigma.clone()),
            Some(h) => (p(&a.rho, h), p(&a.sigma, h), q(&s.rho, h), q(&s.sigma, h)),
        };
        Arrival {
            sigma: SymbolicFunction::deconvolution_sigma(&sigma_a, &sigma_u, &rho_a, &rho_u),
            rho: rho_a,
            deps,
        }
    }

    /// Serves the highest-priority unserved flow at `vertex`: the vertex keeps
    /// the leftover service and the flow's next hop receives its output bound.
    pub fn compute_leftover(&mut self, vertex: VertexId) -> Result<(FlowId, Arrival), NetworkError> {
        let v = self.vertices.get(&vertex).ok_or(NetworkError::UnknownVertex(vertex))?;
        let flow_id = v.next_to_serve().ok_or(NetworkError::NoEligibleFlow(vertex))?;
        let flow = &self.flows[&flow_id];
        let hop = flow.hop_of(vertex).expect("incoming flows traverse the vertex");
        let arrival = flow.arrivals[hop]
            .clone()
            .ok_or(NetworkError::NoEligibleFlow(vertex))?;
        let service = v.service.clone();

        let output = self.output_bound(&arrival, &service);
        let left = self.leftover(&service, &arrival);

        let v = self.vertices.get_mut(&vertex).expect("checked");
        v.service = left;
        v.served.insert(flow_id);
        let flow = self.flows.get_mut(&flow_id).expect("checked");
        if hop + 1 < flow.path.len() {
            flow.arrivals[hop + 1] = Some(output.clone());
            flow.established_arrivals = hop + 2;
        }
        Ok((flow_id, output))
    }

    pub fn flow(&self, id: FlowId) -> Option<&Flow> {
        self.flows.get(&id)
    }

    pub fn vertex(&self, id: VertexId) -> Option<&Vertex> {
        self.vertices.get(&id)
    }

    pub fn flow_by_name(&self, name: &str) -> Option<FlowId> {
        self.flow_names.get(name).copied()
    }

    pub fn vertex_by_name(&self, name: &str) -> Option<VertexId> {
        self.vertex_names.get(name).copied()
    }

    pub fn flows(&self) -> impl Iterator<Item = &Flow> {
        self.flows.values()
    }

    pub fn vertices(&self) -> impl Iterator<Item = &Vertex> {
        self.vertices.values()
    }

    /// Checks the structural invariants. Returns a description of the first violation.
    pub fn check_invariants(&self) -> Result<(), String> {
        for flow in self.flows.values() {
            let n = flow.path.len();
            if flow.established_arrivals < 1 || flow.established_arrivals > n {
                return Err(format!("{}: established_arrivals out of range", flow.name));
            }
            for (i, a) in flow.arrivals.iter().enumerate() {
                if a.is_some() != (i < flow.established_arrivals) {
                    return Err(format!("{}: arrival {i} presence mismatch", flow.name));
                }
            }
            for (v, prio) in flow.path.iter().zip(&flow.priorities) {
                match self.vertices.get(v) {
                    Some(vx) if vx.incoming.get(&flow.id) == Some(prio) => {}
                    _ => return Err(format!("{}: not registered at {v}", flow.name)),
                }
            }
        }
        for vertex in self.vertices.values() {
            for f in vertex.incoming.keys().chain(vertex.served.iter()) {
                if !self.flows.contains_key(f) {
                    return Err(format!("{}: references unknown {f}", vertex.name));
                }
            }
            if !vertex.served.is_subset(&vertex.incoming.keys().copied().collect()) {
                return Err(format!("{}: served flow not incoming", vertex.name));
            }
        }
        let mut reachable = BTreeSet::new();
        let mut collect = |f: &SymbolicFunction| reachable.extend(f.parameter_ids());
        for flow in self.flows.values() {
            for a in flow.arrivals.iter().flatten() {
                collect(&a.rho);
                collect(&a.sigma);
            }
        }
        for vertex in self.vertices.values() {
            collect(&vertex.service.rho);
            collect(&vertex.service.sigma);
        }
        if !reachable.iter().all(|h| self.hoelders.contains_key(h)) {
            return Err("unregistered Hölder parameter in use".into());
        }
        Ok(())
    }
}

fn p(f: &SymbolicFunction, h: HoelderId) -> SymbolicFunction {
    f.scaled(h, HoelderRole::P)
}

fn q(f: &SymbolicFunction, h: HoelderId) -> SymbolicFunction {
    f.scaled(h, HoelderRole::Q)
}
