//! `snc` command-line driver.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::analysis::{analyze, AnalysisError, AnalysisRequest, BoundKind};
use crate::models::{FlowId, VertexId};
use crate::netio::{parse_document, NetworkDocument, ParseError, ParseOptions};
use crate::network::Network;
use crate::optimize::{grid_search_minimize, BoundQuery, GridConfig, OptimizationResult, OptimizeError};
use crate::sim::{simulate, BacklogProbe, DelayProbe, PathSpan, SimConfig, SimError};

#[derive(Debug, Parser)]
#[command(name = "snc", version, about = "Stochastic network calculus bounds and simulation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optimized backlog or delay bound for one flow.
    Analyze(AnalyzeArgs),
    /// Empirical backlog or delay exceedance by Monte-Carlo simulation.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AnalysisKind {
    Simple,
    End2end,
    Ladder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BoundArg {
    Backlog,
    Delay,
    InverseBacklog,
    InverseDelay,
}

impl BoundArg {
    fn kind(self) -> BoundKind {
        match self {
            BoundArg::Backlog | BoundArg::InverseBacklog => BoundKind::Backlog,
            BoundArg::Delay | BoundArg::InverseDelay => BoundKind::Delay,
        }
    }

    fn inverse(self) -> bool {
        matches!(self, BoundArg::InverseBacklog | BoundArg::InverseDelay)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SimBound {
    Backlog,
    Delay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Human,
    Csv,
}

/// `auto` or a positive number.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaMax(pub Option<f64>);

impl FromStr for ThetaMax {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "auto" {
            return Ok(ThetaMax(None));
        }
        s.parse::<f64>()
            .ok()
            .filter(|v| *v > 0.0 && v.is_finite())
            .map(|v| ThetaMax(Some(v)))
            .ok_or_else(|| format!("expected 'auto' or a positive number, got '{s}'"))
    }
}

/// `start:stop:step`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sweep {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl FromStr for Sweep {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        let nums: Option<Vec<f64>> = parts.iter().map(|p| p.trim().parse::<f64>().ok()).collect();
        match nums.as_deref() {
            Some(&[start, stop, step])
                if start.is_finite() && stop.is_finite() && step.is_finite() && step > 0.0 && start <= stop =>
            {
                Ok(Sweep { start, stop, step })
            }
            _ => Err(format!("expected start:stop:step with start <= stop and step > 0, got '{s}'")),
        }
    }
}

impl Sweep {
    pub fn points(&self) -> Vec<f64> {
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as u64;
        (0..=n).map(|k| self.start + k as f64 * self.step).collect()
    }
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Network file.
    #[arg(long)]
    pub file: PathBuf,
    /// Flow of interest.
    #[arg(long)]
    pub flow: String,
    /// Vertex of interest (simple analysis).
    #[arg(long)]
    pub vertex: Option<String>,
    /// Comma-separated consecutive vertices (end2end and ladder; default: full route).
    #[arg(long, value_delimiter = ',')]
    pub path: Option<Vec<String>>,
    /// Higher-priority flow sharing the path (ladder).
    #[arg(long)]
    pub crossflow: Option<String>,
    #[arg(long, value_enum, default_value = "simple")]
    pub analysis: AnalysisKind,
    #[arg(long, value_enum)]
    pub bound: BoundArg,
    /// Backlog N or delay T for forward bounds.
    #[arg(long)]
    pub value: Option<f64>,
    /// Violation probability for inverse bounds.
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long, default_value_t = 0.01)]
    pub granularity: f64,
    #[arg(long, default_value = "auto")]
    pub theta_max: ThetaMax,
    #[arg(long, default_value_t = 0.1)]
    pub hoelder_granularity: f64,
    #[arg(long, default_value_t = crate::optimize::DEFAULT_P_MAX)]
    pub p_max: f64,
    /// Sweeps the value (or epsilon) over start:stop:step.
    #[arg(long)]
    pub sweep: Option<Sweep>,
    #[arg(long, value_enum, default_value = "human")]
    pub format: Format,
    /// Rejects format extensions.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub file: PathBuf,
    /// Flow of interest (required for delay; backlog defaults to all flows at the vertex).
    #[arg(long)]
    pub flow: Option<String>,
    /// Vertex for backlog, or single-hop delay.
    #[arg(long)]
    pub vertex: Option<String>,
    /// Consecutive vertices for delay (default: full route).
    #[arg(long, value_delimiter = ',')]
    pub path: Option<Vec<String>>,
    #[arg(long, value_enum, default_value = "delay")]
    pub bound: SimBound,
    #[arg(long)]
    pub value: Option<f64>,
    #[arg(long)]
    pub sweep: Option<Sweep>,
    #[arg(long, default_value_t = 1_000_000)]
    pub horizon: u64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 10_000)]
    pub warmup: u64,
    #[arg(long, value_enum, default_value = "human")]
    pub format: Format,
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Optimize(#[from] OptimizeError),
    #[error(transparent)]
    Simulation(#[from] SimError),
}

impl CliError {
    pub fn class(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "UsageError",
            CliError::Io(_) => "IoError",
            CliError::Parse(_) => "ParseError",
            CliError::Analysis(_) => "AnalysisError",
            CliError::Optimize(_) => "OptimizeError",
            CliError::Simulation(_) => "SimulationError",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io(_) => 3,
            CliError::Parse(_) => 4,
            CliError::Analysis(_) => 5,
            CliError::Optimize(_) => 6,
            CliError::Simulation(_) => 7,
        }
    }
}

fn usage<T>(msg: impl Into<String>) -> Result<T, CliError> {
    Err(CliError::Usage(msg.into()))
}

fn load(file: &PathBuf, strict: bool) -> Result<NetworkDocument, CliError> {
    let text = std::fs::read_to_string(file).map_err(|e| CliError::Io(format!("{}: {e}", file.display())))?;
    Ok(parse_document(&text, ParseOptions { strict })?)
}

fn flow_id(net: &Network, name: &str) -> Result<FlowId, CliError> {
    net.flow_by_name(name)
        .ok_or_else(|| CliError::Usage(format!("no flow named '{name}'")))
}

fn vertex_id(net: &Network, name: &str) -> Result<VertexId, CliError> {
    net.vertex_by_name(name)
        .ok_or_else(|| CliError::Usage(format!("no vertex named '{name}'")))
}

fn route_names(net: &Network, flow: FlowId) -> Vec<String> {
    let f = net.flow(flow).expect("resolved");
    f.path.iter().map(|v| net.vertex(*v).expect("route vertex").name.clone()).collect()
}

/// Values to evaluate, from `--sweep` or a single given value.
fn values(single: Option<f64>, sweep: Option<Sweep>, what: &str) -> Result<Vec<f64>, CliError> {
    match (single, sweep) {
        (Some(_), Some(_)) => usage(format!("give either --{what} or --sweep, not both")),
        (Some(v), None) => Ok(vec![v]),
        (None, Some(s)) => Ok(s.points()),
        (None, None) => usage(format!("--{what} or --sweep is required")),
    }
}

/// Human-readable number: fixed notation in a moderate range, scientific otherwise.
fn num(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || (1e-3..1e7).contains(&a) {
        let s = format!("{x:.6}");
        let s = s.trim_end_matches('0').trim_end_matches('.');
        s.to_string()
    } else {
        format!("{x:.6e}")
    }
}

fn label(kind: BoundKind) -> &'static str {
    match kind {
        BoundKind::Backlog => "backlog",
        BoundKind::Delay => "delay",
    }
}

fn params(r: &OptimizationResult, human: bool) -> String {
    let mut s = String::new();
    if human {
        write!(s, "theta={}", num(r.argmin.theta)).unwrap();
        for (id, p) in &r.argmin.hoelder {
            write!(s, " {id}={}", num(*p)).unwrap();
        }
    } else {
        write!(s, "{}", r.argmin.theta).unwrap();
        for p in r.argmin.hoelder.values() {
            write!(s, ",{p}").unwrap();
        }
    }
    s
}

pub fn run_analyze(args: &AnalyzeArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let doc = load(&args.file, args.strict)?;
    let net = doc.to_network()?;
    let flow = flow_id(&net, &args.flow)?;
    let inverse = args.bound.inverse();
    let kind = args.bound.kind();
    let xs = if inverse {
        if args.value.is_some() {
            return usage("--value applies to forward bounds; use --epsilon");
        }
        values(args.epsilon, args.sweep, "epsilon")?
    } else {
        if args.epsilon.is_some() {
            return usage("--epsilon applies to inverse bounds; use --value");
        }
        values(args.value, args.sweep, "value")?
    };

    let path = |net: &Network| -> Result<Vec<VertexId>, CliError> {
        let names = args.path.clone().unwrap_or_else(|| route_names(net, flow));
        names.iter().map(|n| vertex_id(net, n)).collect()
    };
    let (req, target) = match args.analysis {
        AnalysisKind::Simple => {
            let Some(v) = &args.vertex else {
                return usage("simple analysis needs --vertex");
            };
            (AnalysisRequest::Local { flow, vertex: vertex_id(&net, v)?, kind }, v.clone())
        }
        AnalysisKind::End2end | AnalysisKind::Ladder if kind == BoundKind::Backlog => {
            return usage("end-to-end analyses bound the delay only");
        }
        AnalysisKind::End2end => {
            let p = path(&net)?;
            let target = path_label(&net, &p);
            (AnalysisRequest::EndToEnd { flow, path: p }, target)
        }
        AnalysisKind::Ladder => {
            let Some(c) = &args.crossflow else {
                return usage("ladder analysis needs --crossflow");
            };
            let crossflow = flow_id(&net, c)?;
            let p = path(&net)?;
            let target = path_label(&net, &p);
            (AnalysisRequest::Ladder { flow, crossflow, path: p }, target)
        }
    };
    let cfg = GridConfig {
        theta_granularity: args.granularity,
        theta_max: args.theta_max.0,
        hoelder_granularity: args.hoelder_granularity,
        p_max: args.p_max,
        ..GridConfig::default()
    };

    let mut rows = Vec::with_capacity(xs.len());
    for &x in &xs {
        // every point starts from the pristine network
        let (bound, _) = analyze(&net, &req)?;
        let q = if inverse {
            BoundQuery::inverse(bound, x)?
        } else {
            BoundQuery::forward(bound, x)?
        };
        rows.push((x, grid_search_minimize(&q, &cfg)?));
    }

    let io = |e: std::io::Error| CliError::Io(e.to_string());
    match args.format {
        Format::Csv => {
            let mut header = String::from("value,bound,theta");
            if let Some((_, r)) = rows.first() {
                for id in r.argmin.hoelder.keys() {
                    write!(header, ",{id}").unwrap();
                }
            }
            writeln!(out, "{header}").map_err(io)?;
            for (x, r) in &rows {
                writeln!(out, "{x},{},{}", r.value, params(r, false)).map_err(io)?;
            }
        }
        Format::Human => {
            let what = label(kind);
            for (x, r) in &rows {
                let result = if inverse {
                    format!("{what} of {} at {target} <= {} with probability >= 1 - {}", args.flow, num(r.value), num(*x))
                } else if r.value > 1.0 {
                    format!("P({what} of {} at {target} > {}) <= 1 (raw {})", args.flow, num(*x), num(r.value))
                } else {
                    format!("P({what} of {} at {target} > {}) <= {}", args.flow, num(*x), num(r.value))
                };
                writeln!(out, "{result}  [{}, feasible {}/{}]", params(r, true), r.feasible, r.evaluated)
                    .map_err(io)?;
            }
        }
    }
    Ok(())
}

fn path_label(net: &Network, path: &[VertexId]) -> String {
    path.iter()
        .map(|v| net.vertex(*v).expect("resolved").name.as_str())
        .collect::<Vec<_>>()
        .join("->")
}

pub fn run_simulate(args: &SimulateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let doc = load(&args.file, args.strict)?;
    let xs = values(args.value, args.sweep, "value")?;
    let mut cfg = SimConfig::from_document(&doc, args.horizon, args.warmup, args.seed)?;
    let vertex_index = |name: &str| {
        doc.interfaces
            .iter()
            .position(|r| r.name == name)
            .ok_or_else(|| CliError::Usage(format!("no vertex named '{name}'")))
    };
    let flow_index = |name: &str| {
        doc.flows
            .iter()
            .position(|r| r.name == name)
            .ok_or_else(|| CliError::Usage(format!("no flow named '{name}'")))
    };
    let what = match args.bound {
        SimBound::Delay => {
            let Some(name) = &args.flow else {
                return usage("delay simulation needs --flow");
            };
            let f = flow_index(name)?;
            let route = &cfg.flows[f].path;
            let nodes: Vec<usize> = match (&args.path, &args.vertex) {
                (Some(p), _) => p.iter().map(|n| vertex_index(n)).collect::<Result<_, _>>()?,
                (None, Some(v)) => vec![vertex_index(v)?],
                (None, None) => route.clone(),
            };
            let first = route
                .iter()
                .position(|&v| v == nodes[0])
                .ok_or_else(|| CliError::Usage(format!("flow '{name}' does not visit the given vertices")))?;
            if route.get(first..first + nodes.len()) != Some(&nodes[..]) {
                return usage(format!("path is not a consecutive part of the route of '{name}'"));
            }
            cfg.delay_probes.push(DelayProbe {
                members: vec![PathSpan { flow: f, first, last: first + nodes.len() - 1 }],
            });
            "delay"
        }
        SimBound::Backlog => {
            let Some(v) = &args.vertex else {
                return usage("backlog simulation needs --vertex");
            };
            let node = vertex_index(v)?;
            let flows = match &args.flow {
                Some(name) => vec![flow_index(name)?],
                None => (0..cfg.flows.len()).filter(|&f| cfg.flows[f].path.contains(&node)).collect(),
            };
            if flows.is_empty() {
                return usage(format!("no flow traverses '{v}'"));
            }
            cfg.backlog_probes.push(BacklogProbe { node, flows });
            "backlog"
        }
    };
    let report = simulate(cfg)?;
    let io = |e: std::io::Error| CliError::Io(e.to_string());
    if args.format == Format::Csv {
        writeln!(out, "value,probability,exceedances,samples").map_err(io)?;
    }
    for x in xs {
        let e = match args.bound {
            SimBound::Delay => report.delays[0].exceedance(x),
            SimBound::Backlog => report.backlogs[0].exceedance(x),
        };
        match args.format {
            Format::Csv => writeln!(out, "{x},{},{},{}", e.probability(), e.count, e.samples),
            Format::Human => writeln!(
                out,
                "P({what} > {}) ~ {}  [{} of {} samples, seed {}]",
                num(x),
                num(e.probability()),
                e.count,
                e.samples,
                report.seed
            ),
        }
        .map_err(io)?;
    }
    Ok(())
}

pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match &cli.command {
        Command::Analyze(a) => run_analyze(a, out),
        Command::Simulate(s) => run_simulate(s, out),
    }
}

/// Parses `args`, runs, and reports errors on stderr. Returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match run(&cli, &mut out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = out.flush();
            eprintln!("snc: {}: {e}", e.class());
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_points() {
        let s: Sweep = "1:20:1".parse().unwrap();
        assert_eq!(s.points().len(), 20);
        let s: Sweep = "0.1:0.3:0.1".parse().unwrap();
        assert_eq!(s.points().len(), 3);
        assert!("3:1:1".parse::<Sweep>().is_err());
        assert!("1:2:0".parse::<Sweep>().is_err());
        assert!("1:2".parse::<Sweep>().is_err());
    }

    #[test]
    fn theta_max_parsing() {
        assert_eq!("auto".parse::<ThetaMax>(), Ok(ThetaMax(None)));
        assert_eq!("0.4".parse::<ThetaMax>(), Ok(ThetaMax(Some(0.4))));
        assert!("-1".parse::<ThetaMax>().is_err());
    }

    #[test]
    fn number_formatting() {
        assert_eq!(num(10.362), "10.362");
        assert_eq!(num(1.0), "1");
        assert_eq!(num(0.0), "0");
        assert_eq!(num(5.76e-4), "5.760000e-4");
    }

    #[test]
    fn exit_codes_are_distinct() {
        let errors = [
            CliError::Usage(String::new()),
            CliError::Io(String::new()),
            CliError::Parse(ParseError { line: 1, kind: crate::netio::ParseErrorKind::BadNumber("x".into()) }),
            CliError::Analysis(AnalysisError::NotFeedforward),
            CliError::Optimize(OptimizeError::NoFeasiblePoint { evaluated: 0 }),
            CliError::Simulation(SimError::InvalidConfig(String::new())),
        ];
        let mut codes: Vec<i32> = errors.iter().map(CliError::exit_code).collect();
        codes.sort();
        codes.dedup();
        assert_eq!(codes.len(), errors.len());
        assert!(codes.iter().all(|&c| c != 0));
    }

    #[test]
    fn clap_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
