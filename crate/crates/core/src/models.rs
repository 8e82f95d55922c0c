//! MGF-bounded arrival and service descriptions and the factories for the
//! supported traffic and server models.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::symbolic::SymbolicFunction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FlowId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VertexId(pub u32);

impl fmt::Display for FlowId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "flow#{}", self.0)
    }
}

impl fmt::Display for VertexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "vertex#{}", self.0)
    }
}

/// Stochastic processes an MGF bound depends on.
///
/// Two bounds may be combined with the independent operations only when
/// their dependency sets are disjoint.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Dependencies {
    pub flows: BTreeSet<FlowId>,
    pub services: BTreeSet<VertexId>,
}

impl Dependencies {
    pub fn intersects(&self, other: &Dependencies) -> bool {
        !self.flows.is_disjoint(&other.flows) || !self.services.is_disjoint(&other.services)
    }

    pub fn union(&self, other: &Dependencies) -> Dependencies {
        Dependencies {
            flows: self.flows.union(&other.flows).copied().collect(),
            services: self.services.union(&other.services).copied().collect(),
        }
    }
}

/// MGF bound `φ_{A(s,t)}(θ) ≤ e^{θρ(θ)(t-s) + θσ(θ)}` on a flow.
#[derive(Debug, Clone, PartialEq)]
pub struct Arrival {
    pub rho: SymbolicFunction,
    pub sigma: SymbolicFunction,
    pub deps: Dependencies,
}

/// MGF bound `φ_{U(s,t)}(-θ) ≤ e^{θρ(θ)(t-s) + θσ(θ)}` on a dynamic server.
/// `rho` is non-positive for rate servers.
#[derive(Debug, Clone, PartialEq)]
pub struct Service {
    pub rho: SymbolicFunction,
    pub sigma: SymbolicFunction,
    pub deps: Dependencies,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("rate must be non-negative, got {0}")]
    NegativeRate(f64),
    #[error("{name} must be positive, got {value}")]
    NonPositiveParameter { name: &'static str, value: f64 },
    #[error("{name} must be non-negative, got {value}")]
    NegativeParameter { name: &'static str, value: f64 },
    #[error("token-bucket aggregate needs at least one sub-flow")]
    EmptyAggregate,
    #[error("{rates} rates but {buckets} buckets")]
    LengthMismatch { rates: usize, buckets: usize },
}

fn positive(name: &'static str, value: f64) -> Result<f64, ModelError> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(ModelError::NonPositiveParameter { name, value })
    }
}

impl Arrival {
    fn independent(rho: SymbolicFunction, sigma: SymbolicFunction) -> Self {
        Arrival {
            rho,
            sigma,
            deps: Dependencies::default(),
        }
    }
}

impl Service {
    fn independent(rho: SymbolicFunction, sigma: SymbolicFunction) -> Self {
        Service {
            rho,
            sigma,
            deps: Dependencies::default(),
        }
    }
}

/// A source sending `r` data-units per slot: `ρ = r`, `σ = 0`.
pub fn constant_rate_arrival(r: f64) -> Result<Arrival, ModelError> {
    if !(r >= 0.0) || !r.is_finite() {
        return Err(ModelError::NegativeRate(r));
    }
    Ok(Arrival::independent(
        SymbolicFunction::constant(r),
        SymbolicFunction::constant(0.0),
    ))
}

/// I.i.d. exponentially distributed increments with parameter `lambda`
/// (mean `1/lambda` per slot). Valid for `θ < lambda`.
pub fn exponential_arrival(lambda: f64) -> Result<Arrival, ModelError> {
    let lambda = positive("lambda", lambda)?;
    Ok(Arrival::independent(
        SymbolicFunction::exponential_arrival_rho(lambda),
        SymbolicFunction::constant(0.0),
    ))
}

/// Exponentially bounded burstiness: `P(A(s,t) > rate(t-s) + ε) ≤ M e^{-dε}`.
pub fn ebb_arrival(rate: f64, decay: f64, prefactor: f64) -> Result<Arrival, ModelError> {
    let decay = positive("decay", decay)?;
    let prefactor = positive("prefactor", prefactor)?;
    Ok(Arrival::independent(
        SymbolicFunction::constant(rate),
        SymbolicFunction::ebb_sigma(prefactor, decay),
    ))
}

/// Poisson jumps with intensity `mu` per slot, each carrying an
/// exponentially distributed amount of data with parameter `nu`.
pub fn poisson_arrival(mu: f64, nu: f64) -> Result<Arrival, ModelError> {
    let mu = positive("mu", mu)?;
    let nu = positive("nu", nu)?;
    Ok(Arrival::independent(
        SymbolicFunction::poisson_rho(mu, nu),
        SymbolicFunction::constant(0.0),
    ))
}

/// Stationary aggregate of token-bucket shaped sub-flows `(rate_i, bucket_i)`.
pub fn stationary_tb_arrival(
    rates: &[f64],
    buckets: &[f64],
    max_theta: Option<f64>,
) -> Result<Arrival, ModelError> {
    if rates.is_empty() {
        return Err(ModelError::EmptyAggregate);
    }
    if rates.len() != buckets.len() {
        return Err(ModelError::LengthMismatch {
            rates: rates.len(),
            buckets: buckets.len(),
        });
    }
    for &r in rates {
        positive("token rate", r)?;
    }
    for &b in buckets {
        if !(b >= 0.0) || !b.is_finite() {
            return Err(ModelError::NegativeParameter {
                name: "bucket",
                value: b,
            });
        }
    }
    if let Some(m) = max_theta {
        positive("maxTheta", m)?;
    }
    Ok(Arrival::independent(
        SymbolicFunction::constant(rates.iter().sum()),
        SymbolicFunction::token_bucket_sigma(buckets.iter().sum(), max_theta),
    ))
}

/// Constant rate server: `ρ = -r`, `σ = 0`.
pub fn constant_rate_service(r: f64) -> Result<Service, ModelError> {
    let r = positive("service rate", r)?;
    Ok(Service::independent(
        SymbolicFunction::constant(-r),
        SymbolicFunction::constant(0.0),
    ))
}

/// Constant rate server granting one extra slot of service up front:
/// `ρ = -r`, `σ = -r`.
pub fn shifted_constant_rate_service(r: f64) -> Result<Service, ModelError> {
    let r = positive("service rate", r)?;
    Ok(Service::independent(
        SymbolicFunction::constant(-r),
        SymbolicFunction::constant(-r),
    ))
}

/// Parameters an input flow was built from. Kept so networks can be written
/// back to the text format.
#[derive(Debug, Clone, PartialEq)]
pub enum ArrivalModel {
    Constant { rate: f64 },
    Exponential { mean: f64 },
    Ebb { rate: f64, decay: f64, prefactor: f64 },
    Poisson { mu: f64, nu: f64 },
    StationaryTb {
        rates: Vec<f64>,
        buckets: Vec<f64>,
        max_theta: Option<f64>,
    },
}

impl ArrivalModel {
    pub fn build(&self) -> Result<Arrival, ModelError> {
        match self {
            ArrivalModel::Constant { rate } => constant_rate_arrival(*rate),
            ArrivalModel::Exponential { mean } => exponential_arrival(1.0 / positive("mean", *mean)?),
            ArrivalModel::Ebb {
                rate,
                decay,
                prefactor,
            } => ebb_arrival(*rate, *decay, *prefactor),
            ArrivalModel::Poisson { mu, nu } => poisson_arrival(*mu, *nu),
            ArrivalModel::StationaryTb {
                rates,
                buckets,
                max_theta,
            } => stationary_tb_arrival(rates, buckets, *max_theta),
        }
    }

    /// Long-run mean rate in data-units per slot.
    pub fn mean_rate(&self) -> f64 {
        match self {
            ArrivalModel::Constant { rate } => *rate,
            ArrivalModel::Exponential { mean } => *mean,
            ArrivalModel::Ebb { rate, .. } => *rate,
            ArrivalModel::Poisson { mu, nu } => mu / nu,
            ArrivalModel::StationaryTb { rates, .. } => rates.iter().sum(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ServiceModel {
    ConstantRate { rate: f64 },
    ShiftedConstantRate { rate: f64 },
}

impl ServiceModel {
    pub fn build(&self) -> Result<Service, ModelError> {
        match *self {
            ServiceModel::ConstantRate { rate } => constant_rate_service(rate),
            ServiceModel::ShiftedConstantRate { rate } => shifted_constant_rate_service(rate),
        }
    }

    pub fn rate(&self) -> f64 {
        match *self {
            ServiceModel::ConstantRate { rate } | ServiceModel::ShiftedConstantRate { rate } => rate,
        }
    }
}
