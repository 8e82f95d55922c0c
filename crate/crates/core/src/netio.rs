//! Text network format.
//!
//! ```text
//! # comment
//! I v1, FIFO, CR, 1
//! EOI
//! F F1, 1, v1:0, EXPONENTIAL, 2
//! EOF
//! ```
//!
//! Interface service types are `CR <rate>` and `CRS <rate>` (a rate-`r` server
//! with one slot of latency, rejected in strict mode). Arrival types are
//! `CONSTANT <rate>`, `EXPONENTIAL <mean>`, `EBB <rate>, <decay>, <prefactor>`
//! and `STATIONARYTB <rate>, <bucket>[, <maxTheta>]`.

use std::collections::HashSet;
use std::fmt;

use thiserror::Error;

use crate::models::{ArrivalModel, ModelError, ServiceModel};
use crate::network::{Network, NetworkError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseErrorKind {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("unknown tag '{0}'")]
    UnknownTag(String),
    #[error("'{tag}' expects {expected} parameters, found {found}")]
    ArityMismatch { tag: String, expected: String, found: usize },
    #[error("duplicate name '{0}'")]
    DuplicateName(String),
    #[error("missing terminator '{0}'")]
    MissingTerminator(&'static str),
    #[error("bad number '{0}'")]
    BadNumber(String),
    #[error("priority '{0}' is not a natural number")]
    PriorityNotNatural(String),
    #[error("unknown vertex '{0}'")]
    UnknownVertex(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

/// A parse failure at a 1-based line number.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("line {line}: {kind}")]
pub struct ParseError {
    pub line: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SerializeError {
    #[error("network cannot be saved: {0}")]
    UnsupportedNetwork(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ParseOptions {
    /// Rejects format extensions (the `CRS` service type).
    pub strict: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterfaceRecord {
    pub name: String,
    pub scheduling: String,
    pub service: ServiceModel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowRecord {
    pub name: String,
    /// `(vertex name, priority)` per hop.
    pub hops: Vec<(String, u32)>,
    pub arrival: ArrivalModel,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct NetworkDocument {
    pub interfaces: Vec<InterfaceRecord>,
    pub flows: Vec<FlowRecord>,
    /// Source line of each interface and flow record; empty when built from a network.
    pub lines: Vec<usize>,
}

impl NetworkDocument {
    /// Structural equality ignoring source positions.
    pub fn same_structure(&self, other: &Self) -> bool {
        self.interfaces == other.interfaces && self.flows == other.flows
    }

    pub fn to_network(&self) -> Result<Network, ParseError> {
        let mut net = Network::new();
        let line = |i: usize| self.lines.get(i).copied().unwrap_or(0);
        for (i, rec) in self.interfaces.iter().enumerate() {
            net.add_vertex_model(&rec.name, rec.service)
                .map_err(|e| at(line(i), network_kind(e)))?;
        }
        let offset = self.interfaces.len();
        for (i, rec) in self.flows.iter().enumerate() {
            let l = line(offset + i);
            let mut path = Vec::with_capacity(rec.hops.len());
            let mut prios = Vec::with_capacity(rec.hops.len());
            for (name, prio) in &rec.hops {
                let v = net
                    .vertex_by_name(name)
                    .ok_or_else(|| at(l, ParseErrorKind::UnknownVertex(name.clone())))?;
                path.push(v);
                prios.push(*prio);
            }
            net.add_flow_model(&rec.name, &path, &prios, rec.arrival.clone())
                .map_err(|e| at(l, network_kind(e)))?;
        }
        Ok(net)
    }

    pub fn from_network(net: &Network) -> Result<Self, SerializeError> {
        let unsupported = |msg: String| Err(SerializeError::UnsupportedNetwork(msg));
        if net.hoelder_count() > 0 {
            return unsupported("Hölder parameters are registered".into());
        }
        if net.has_declared_dependencies() {
            return unsupported("dependencies were declared".into());
        }
        let mut doc = NetworkDocument::default();
        for v in net.vertices() {
            if !v.served.is_empty() {
                return unsupported(format!("vertex {} holds a leftover service", v.name));
            }
            let Some(service) = v.service_model else {
                return unsupported(format!("vertex {} has no file representation", v.name));
            };
            doc.interfaces.push(InterfaceRecord {
                name: v.name.clone(),
                scheduling: "FIFO".into(),
                service,
            });
        }
        for f in net.flows() {
            if f.established_arrivals > 1 {
                return unsupported(format!("flow {} has derived arrivals", f.name));
            }
            let arrival = match &f.ingress_model {
                Some(ArrivalModel::Poisson { .. }) | None => {
                    return unsupported(format!("flow {} has no file representation", f.name))
                }
                Some(ArrivalModel::StationaryTb { rates, .. }) if rates.len() != 1 => {
                    return unsupported(format!("flow {} aggregates several token buckets", f.name))
                }
                Some(m) => m.clone(),
            };
            let hops = f
                .path
                .iter()
                .zip(&f.priorities)
                .map(|(v, &p)| (net.vertex(*v).expect("path vertices exist").name.clone(), p))
                .collect();
            doc.flows.push(FlowRecord { name: f.name.clone(), hops, arrival });
        }
        Ok(doc)
    }
}

impl fmt::Display for NetworkDocument {
    /// Canonical form: one record per line, no comments.
    fn fmt(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        for rec in &self.interfaces {
            let (tag, rate) = match rec.service {
                ServiceModel::ConstantRate { rate } => ("CR", rate),
                ServiceModel::ShiftedConstantRate { rate } => ("CRS", rate),
            };
            writeln!(out, "I {}, {}, {}, {}", rec.name, rec.scheduling, tag, rate)?;
        }
        writeln!(out, "EOI")?;
        for rec in &self.flows {
            write!(out, "F {}, {}", rec.name, rec.hops.len())?;
            for (v, p) in &rec.hops {
                write!(out, ", {v}:{p}")?;
            }
            match &rec.arrival {
                ArrivalModel::Constant { rate } => write!(out, ", CONSTANT, {rate}")?,
                ArrivalModel::Exponential { mean } => write!(out, ", EXPONENTIAL, {mean}")?,
                ArrivalModel::Ebb { rate, decay, prefactor } => {
                    write!(out, ", EBB, {rate}, {decay}, {prefactor}")?
                }
                ArrivalModel::StationaryTb { rates, buckets, max_theta } => {
                    write!(out, ", STATIONARYTB, {}, {}", rates[0], buckets[0])?;
                    if let Some(m) = max_theta {
                        write!(out, ", {m}")?;
                    }
                }
                ArrivalModel::Poisson { mu, nu } => write!(out, ", POISSON, {mu}, {nu}")?,
            }
            writeln!(out)?;
        }
        writeln!(out, "EOF")
    }
}

fn at(line: usize, kind: ParseErrorKind) -> ParseError {
    ParseError { line, kind }
}

fn network_kind(e: NetworkError) -> ParseErrorKind {
    match e {
        NetworkError::DuplicateName(n) => ParseErrorKind::DuplicateName(n),
        NetworkError::Model(m) => ParseErrorKind::Model(m),
        other => ParseErrorKind::Network(other),
    }
}

fn number(s: &str) -> Result<f64, ParseErrorKind> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(ParseErrorKind::BadNumber(s.to_string())),
    }
}

fn numbers(tag: &str, params: &[&str], arity: std::ops::RangeInclusive<usize>) -> Result<Vec<f64>, ParseErrorKind> {
    if !arity.contains(&params.len()) {
        let expected = if arity.start() == arity.end() {
            arity.start().to_string()
        } else {
            format!("{} to {}", arity.start(), arity.end())
        };
        return Err(ParseErrorKind::ArityMismatch { tag: tag.to_string(), expected, found: params.len() });
    }
    params.iter().map(|p| number(p)).collect()
}

fn name(s: &str, what: &str) -> Result<String, ParseErrorKind> {
    if s.is_empty() || s.contains(char::is_whitespace) || s.contains(':') {
        return Err(ParseErrorKind::Syntax(format!("invalid {what} name '{s}'")));
    }
    Ok(s.to_string())
}

fn fields(rest: &str) -> Vec<&str> {
    rest.split(',').map(str::trim).collect()
}

fn interface(rest: &str, opts: ParseOptions) -> Result<InterfaceRecord, ParseErrorKind> {
    let f = fields(rest);
    if f.len() < 3 {
        return Err(ParseErrorKind::Syntax("interface needs name, scheduling and service type".into()));
    }
    let name = name(f[0], "interface")?;
    if f[1] != "FIFO" {
        return Err(ParseErrorKind::UnknownTag(f[1].to_string()));
    }
    let service = match f[2] {
        "CR" => ServiceModel::ConstantRate { rate: numbers("CR", &f[3..], 1..=1)?[0] },
        "CRS" if !opts.strict => ServiceModel::ShiftedConstantRate { rate: numbers("CRS", &f[3..], 1..=1)?[0] },
        other => return Err(ParseErrorKind::UnknownTag(other.to_string())),
    };
    service.build()?;
    Ok(InterfaceRecord { name, scheduling: f[1].to_string(), service })
}

fn flow(rest: &str) -> Result<FlowRecord, ParseErrorKind> {
    let f = fields(rest);
    if f.len() < 2 {
        return Err(ParseErrorKind::Syntax("flow needs name and hop count".into()));
    }
    let name = name(f[0], "flow")?;
    let n: usize = f[1]
        .parse()
        .map_err(|_| ParseErrorKind::BadNumber(f[1].to_string()))?;
    if n == 0 {
        return Err(ParseErrorKind::Syntax("hop count must be at least 1".into()));
    }
    let listed = f[2..].iter().take_while(|s| s.contains(':')).count();
    if listed != n {
        return Err(ParseErrorKind::ArityMismatch {
            tag: "hop list".into(),
            expected: n.to_string(),
            found: listed,
        });
    }
    let mut hops = Vec::with_capacity(n);
    for hop in &f[2..2 + n] {
        let (v, p) = hop.split_once(':').expect("counted above");
        let prio = p
            .trim()
            .parse::<u32>()
            .map_err(|_| ParseErrorKind::PriorityNotNatural(p.trim().to_string()))?;
        hops.push((name_of_hop(v.trim())?, prio));
    }
    let Some(tag) = f.get(2 + n) else {
        return Err(ParseErrorKind::Syntax("missing arrival type".into()));
    };
    let params = &f[3 + n..];
    let arrival = match *tag {
        "CONSTANT" => ArrivalModel::Constant { rate: numbers(tag, params, 1..=1)?[0] },
        "EXPONENTIAL" => ArrivalModel::Exponential { mean: numbers(tag, params, 1..=1)?[0] },
        "EBB" => {
            let v = numbers(tag, params, 3..=3)?;
            ArrivalModel::Ebb { rate: v[0], decay: v[1], prefactor: v[2] }
        }
        "STATIONARYTB" => {
            let v = numbers(tag, params, 2..=3)?;
            ArrivalModel::StationaryTb { rates: vec![v[0]], buckets: vec![v[1]], max_theta: v.get(2).copied() }
        }
        other => return Err(ParseErrorKind::UnknownTag(other.to_string())),
    };
    arrival.build()?;
    Ok(FlowRecord { name, hops, arrival })
}

fn name_of_hop(s: &str) -> Result<String, ParseErrorKind> {
    name(s, "vertex")
}

#[derive(PartialEq)]
enum Section {
    Interfaces,
    Flows,
    Done,
}

pub fn parse_document(text: &str, opts: ParseOptions) -> Result<NetworkDocument, ParseError> {
    let mut doc = NetworkDocument::default();
    let mut flow_lines = Vec::new();
    let mut interface_names = HashSet::new();
    let mut flow_names = HashSet::new();
    let mut section = Section::Interfaces;
    let mut last = 0;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        last = line;
        let s = raw.trim();
        if s.is_empty() || s.starts_with('#') {
            continue;
        }
        match section {
            Section::Interfaces if s == "EOI" => section = Section::Flows,
            Section::Interfaces => {
                let rest = s
                    .strip_prefix("I ")
                    .or_else(|| s.strip_prefix("I\t"))
                    .ok_or_else(|| at(line, ParseErrorKind::Syntax("expected an interface line or EOI".into())))?;
                let rec = interface(rest, opts).map_err(|k| at(line, k))?;
                if !interface_names.insert(rec.name.clone()) {
                    return Err(at(line, ParseErrorKind::DuplicateName(rec.name)));
                }
                doc.interfaces.push(rec);
                doc.lines.push(line);
            }
            Section::Flows if s == "EOF" => section = Section::Done,
            Section::Flows => {
                let rest = s
                    .strip_prefix("F ")
                    .or_else(|| s.strip_prefix("F\t"))
                    .ok_or_else(|| at(line, ParseErrorKind::Syntax("expected a flow line or EOF".into())))?;
                let rec = flow(rest).map_err(|k| at(line, k))?;
                for (v, _) in &rec.hops {
                    if !interface_names.contains(v) {
                        return Err(at(line, ParseErrorKind::UnknownVertex(v.clone())));
                    }
                }
                if !flow_names.insert(rec.name.clone()) {
                    return Err(at(line, ParseErrorKind::DuplicateName(rec.name)));
                }
                doc.flows.push(rec);
                flow_lines.push(line);
            }
            Section::Done => {
                return Err(at(line, ParseErrorKind::Syntax("content after EOF".into())));
            }
        }
    }
    match section {
        Section::Interfaces => Err(at(last.max(1), ParseErrorKind::MissingTerminator("EOI"))),
        Section::Flows => Err(at(last.max(1), ParseErrorKind::MissingTerminator("EOF"))),
        Section::Done => {
            doc.lines.extend(flow_lines);
            Ok(doc)
        }
    }
}

pub fn parse_network(text: &str) -> Result<Network, ParseError> {
    parse_network_with(text, ParseOptions::default())
}

pub fn parse_network_with(text: &str, opts: ParseOptions) -> Result<Network, ParseError> {
    parse_document(text, opts)?.to_network()
}

pub fn serialize_network(net: &Network) -> Result<String, SerializeError> {
    Ok(NetworkDocument::from_network(net)?.to_string())
}
