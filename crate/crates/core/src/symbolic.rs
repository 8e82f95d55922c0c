//! Immutable symbolic bounding functions.
//!
//! Every `rho(θ)` and `sigma(θ)` of an MGF bound is represented as a tree of
//! [`SymbolicFunction`] nodes. Trees are cheap to clone (shared via `Arc`) and
//! are evaluated for a [`ParamAssignment`], i.e. a value of θ plus a `p` value
//! for each Hölder parameter occurring in the tree.
//!
//! A Hölder-scaled subtree `f(p·θ)` (role [`HoelderRole::P`]) or `f(q·θ)` with
//! `q = p/(p-1)` (role [`HoelderRole::Q`]) is evaluated by descending into `f`
//! with the scaled θ, so every atom below it sees the effective θ.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

/// Identifier of a Hölder parameter pair `(p, q)` registered in a network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct HoelderId(pub u32);

impl fmt::Display for HoelderId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "h{}", self.0)
    }
}

/// A conjugate pair `1/p + 1/q = 1`. Only `p` is ever stored.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HoelderParam {
    pub id: HoelderId,
}

impl HoelderParam {
    /// `q = p / (p - 1)`.
    pub fn conjugate(p: f64) -> f64 {
        p / (p - 1.0)
    }
}

/// Which side of the Hölder pair scales a subtree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HoelderRole {
    P,
    Q,
}

impl HoelderRole {
    fn scale(self, p: f64) -> f64 {
        match self {
            HoelderRole::P => p,
            HoelderRole::Q => HoelderParam::conjugate(p),
        }
    }
}

/// A point in parameter space: θ and one `p > 1` per Hölder id.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamAssignment {
    pub theta: f64,
    pub hoelder: BTreeMap<HoelderId, f64>,
}

impl ParamAssignment {
    pub fn new(theta: f64) -> Self {
        Self {
            theta,
            hoelder: BTreeMap::new(),
        }
    }

    pub fn with_hoelder(mut self, id: HoelderId, p: f64) -> Self {
        self.hoelder.insert(id, p);
        self
    }

    fn p_value(&self, id: HoelderId) -> Result<f64, EvalError> {
        let p = *self
            .hoelder
            .get(&id)
            .ok_or(EvalError::MissingHoelderAssignment(id))?;
        if !(p > 1.0) || !p.is_finite() {
            return Err(EvalError::InvalidHoelderValue { id, p });
        }
        Ok(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum EvalError {
    #[error("theta {theta} is outside the function's domain")]
    ThetaOutOfDomain { theta: f64 },
    #[error("no value assigned to Hölder parameter {0}")]
    MissingHoelderAssignment(HoelderId),
    #[error("Hölder parameter {id} has value {p}, must be > 1")]
    InvalidHoelderValue { id: HoelderId, p: f64 },
    #[error("convolution of services with equal rates at this point")]
    EqualRatesDegenerate,
    #[error("stability condition violated (rho_A + rho_U >= 0)")]
    StabilityViolated,
}

/// Node of a bounding-function expression tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Constant(f64),
    /// `(1/θ) ln(λ / (λ - θ))`, i.i.d. exponential increments per slot.
    ExponentialArrivalRho { lambda: f64 },
    /// `(1/d) ln M - (1/θ) ln(1 - θ/d)`, EBB tail bound converted to an MGF bound.
    EbbSigma { prefactor: f64, decay: f64 },
    /// `(μ/θ)(ν/(ν-θ) - 1)`, compound Poisson with exponential packet sizes.
    PoissonRho { mu: f64, nu: f64 },
    /// `(1/θ) ln cosh(θ B)`, aggregate of stationary token-bucket shaped flows.
    TokenBucketSigma { bucket: f64, max_theta: Option<f64> },
    Sum(SymbolicFunction, SymbolicFunction),
    Max(SymbolicFunction, SymbolicFunction),
    Negate(SymbolicFunction),
    HoelderScale {
        inner: SymbolicFunction,
        id: HoelderId,
        role: HoelderRole,
    },
    /// `σ1 + σ2 - (1/θ) ln(1 - e^{-θ|ρ1 - ρ2|})`.
    ConvolutionSigma {
        sigma1: SymbolicFunction,
        sigma2: SymbolicFunction,
        rho1: SymbolicFunction,
        rho2: SymbolicFunction,
    },
    /// `σA + σU - (1/θ) ln(1 - e^{θ(ρA + ρU)})`.
    DeconvolutionSigma {
        sigma_a: SymbolicFunction,
        sigma_u: SymbolicFunction,
        rho_a: SymbolicFunction,
        rho_u: SymbolicFunction,
    },
}

/// Shared handle to an immutable expression tree.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolicFunction(Arc<Node>);

impl SymbolicFunction {
    pub fn node(&self) -> &Node {
        &self.0
    }

    pub fn constant(c: f64) -> Self {
        Self::from(Node::Constant(c))
    }

    pub fn exponential_arrival_rho(lambda: f64) -> Self {
        Self::from(Node::ExponentialArrivalRho { lambda })
    }

    pub fn ebb_sigma(prefactor: f64, decay: f64) -> Self {
        Self::from(Node::EbbSigma { prefactor, decay })
    }

    pub fn poisson_rho(mu: f64, nu: f64) -> Self {
        Self::from(Node::PoissonRho { mu, nu })
    }

    pub fn token_bucket_sigma(bucket: f64, max_theta: Option<f64>) -> Self {
        Self::from(Node::TokenBucketSigma { bucket, max_theta })
    }

    pub fn sum(&self, other: &Self) -> Self {
        Self::from(Node::Sum(self.clone(), other.clone()))
    }

    pub fn max(&self, other: &Self) -> Self {
        Self::from(Node::Max(self.clone(), other.clone()))
    }

    pub fn negate(&self) -> Self {
        Self::from(Node::Negate(self.clone()))
    }

    pub fn scaled(&self, id: HoelderId, role: HoelderRole) -> Self {
        Self::from(Node::HoelderScale {
            inner: self.clone(),
            id,
            role,
        })
    }

    pub fn convolution_sigma(sigma1: &Self, sigma2: &Self, rho1: &Self, rho2: &Self) -> Self {
        Self::from(Node::ConvolutionSigma {
            sigma1: sigma1.clone(),
            sigma2: sigma2.clone(),
            rho1: rho1.clone(),
            rho2: rho2.clone(),
        })
    }

    pub fn deconvolution_sigma(sigma_a: &Self, sigma_u: &Self, rho_a: &Self, rho_u: &Self) -> Self {
        Self::from(Node::DeconvolutionSigma {
            sigma_a: sigma_a.clone(),
            sigma_u: sigma_u.clone(),
            rho_a: rho_a.clone(),
            rho_u: rho_u.clone(),
        })
    }

    /// Evaluates the tree at `a`.
    pub fn evaluate(&self, a: &ParamAssignment) -> Result<f64, EvalError> {
        if !(a.theta > 0.0) || !a.theta.is_finite() {
            return Err(EvalError::ThetaOutOfDomain { theta: a.theta });
        }
        let value = self.eval_at(a.theta, a)?;
        if value.is_finite() {
            Ok(value)
        } else {
            Err(EvalError::ThetaOutOfDomain { theta: a.theta })
        }
    }

    fn eval_at(&self, theta: f64, a: &ParamAssignment) -> Result<f64, EvalError> {
        let out_of_domain = || EvalError::ThetaOutOfDomain { theta };
        match self.node() {
            Node::Constant(c) => Ok(*c),
            Node::ExponentialArrivalRho { lambda } => {
                if theta >= *lambda {
                    return Err(out_of_domain());
                }
                // ln(λ/(λ-θ)) = -ln(1 - θ/λ)
                Ok(-(-theta / lambda).ln_1p() / theta)
            }
            Node::EbbSigma { prefactor, decay } => {
                if theta >= *decay {
                    return Err(out_of_domain());
                }
                Ok(prefactor.ln() / decay - (-theta / decay).ln_1p() / theta)
            }
            Node::PoissonRho { mu, nu } => {
                if theta >= *nu {
                    return Err(out_of_domain());
                }
                // (μ/θ)(ν/(ν-θ) - 1) simplifies to μ/(ν-θ)
                Ok(mu / (nu - theta))
            }
            Node::TokenBucketSigma { bucket, max_theta } => {
                if max_theta.is_some_and(|m| theta >= m) {
                    return Err(out_of_domain());
                }
                let x = (theta * bucket).abs();
                // ln cosh x = x + ln(1 + e^{-2x}) - ln 2
                Ok((x + (-2.0 * x).exp().ln_1p() - std::f64::consts::LN_2) / theta)
            }
            Node::Sum(f, g) => Ok(f.eval_at(theta, a)? + g.eval_at(theta, a)?),
            Node::Max(f, g) => Ok(f.eval_at(theta, a)?.max(g.eval_at(theta, a)?)),
            Node::Negate(f) => Ok(-f.eval_at(theta, a)?),
            Node::HoelderScale { inner, id, role } => {
                let p = a.p_value(*id)?;
                inner.eval_at(role.scale(p) * theta, a)
            }
            Node::ConvolutionSigma {
                sigma1,
                sigma2,
                rho1,
                rho2,
            } => {
                let gap = (rho1.eval_at(theta, a)? - rho2.eval_at(theta, a)?).abs();
                if !(gap > 0.0) {
                    return Err(EvalError::EqualRatesDegenerate);
                }
                let log_term = log_one_minus_exp(-theta * gap).ok_or(EvalError::EqualRatesDegenerate)?;
                Ok(sigma1.eval_at(theta, a)? + sigma2.eval_at(theta, a)? - log_term / theta)
            }
            Node::DeconvolutionSigma {
                sigma_a,
                sigma_u,
                rho_a,
                rho_u,
            } => {
                let slack = rho_a.eval_at(theta, a)? + rho_u.eval_at(theta, a)?;
                if !(slack < 0.0) {
                    return Err(EvalError::StabilityViolated);
                }
                let log_term = log_one_minus_exp(theta * slack).ok_or(EvalError::StabilityViolated)?;
                Ok(sigma_a.eval_at(theta, a)? + sigma_u.eval_at(theta, a)? - log_term / theta)
            }
        }
    }

    /// Every Hölder id occurring anywhere in the tree.
    pub fn parameter_ids(&self) -> BTreeSet<HoelderId> {
        let mut ids = BTreeSet::new();
        self.collect_ids(&mut ids);
        ids
    }

    fn collect_ids(&self, ids: &mut BTreeSet<HoelderId>) {
        for child in self.children() {
            child.collect_ids(ids);
        }
        if let Node::HoelderScale { id, .. } = self.node() {
            ids.insert(*id);
        }
    }

    fn children(&self) -> Vec<&SymbolicFunction> {
        match self.node() {
            Node::Constant(_)
            | Node::ExponentialArrivalRho { .. }
            | Node::EbbSigma { .. }
            | Node::PoissonRho { .. }
            | Node::TokenBucketSigma { .. } => Vec::new(),
            Node::Sum(f, g) | Node::Max(f, g) => vec![f, g],
            Node::Negate(f) => vec![f],
            Node::HoelderScale { inner, .. } => vec![inner],
            Node::ConvolutionSigma {
                sigma1,
                sigma2,
                rho1,
                rho2,
            } => vec![sigma1, sigma2, rho1, rho2],
            Node::DeconvolutionSigma {
                sigma_a,
                sigma_u,
                rho_a,
                rho_u,
            } => vec![sigma_a, sigma_u, rho_a, rho_u],
        }
    }

    /// Supremum of θ allowed by the atoms' domains under the Hölder values of `a`.
    ///
    /// Positivity of the composite log arguments is only checked by [`evaluate`](Self::evaluate).
    pub fn max_theta(&self, a: &ParamAssignment) -> Result<f64, EvalError> {
        self.limit_with(&|id, role| Ok(role.scale(a.p_value(id)?)))
    }

    /// Like [`max_theta`](Self::max_theta), but with each Hölder scale replaced by a
    /// caller-supplied value. Used to bound the θ search range without fixing `p`.
    pub fn theta_ceiling(&self, scale: &dyn Fn(HoelderRole) -> f64) -> f64 {
        self.limit_with(&|_, role| Ok(scale(role)))
            .unwrap_or(f64::INFINITY)
    }

    fn limit_with(
        &self,
        scale: &dyn Fn(HoelderId, HoelderRole) -> Result<f64, EvalError>,
    ) -> Result<f64, EvalError> {
        let own = match self.node() {
            Node::ExponentialArrivalRho { lambda } => *lambda,
            Node::EbbSigma { decay, .. } => *decay,
            Node::PoissonRho { nu, .. } => *nu,
            Node::TokenBucketSigma { max_theta, .. } => max_theta.unwrap_or(f64::INFINITY),
            Node::HoelderScale { inner, id, role } => {
                return Ok(inner.limit_with(scale)? / scale(*id, *role)?);
            }
            _ => f64::INFINITY,
        };
        let mut limit = own;
        for child in self.children() {
            limit = limit.min(child.limit_with(scale)?);
        }
        Ok(limit)
    }
}

impl From<Node> for SymbolicFunction {
    fn from(node: Node) -> Self {
        SymbolicFunction(Arc::new(node))
    }
}

/// `ln(1 - e^x)` for `x < 0`, accurate near both ends.
fn log_one_minus_exp(x: f64) -> Option<f64> {
    if !(x < 0.0) {
        return None;
    }
    let v = if x > -std::f64::consts::LN_2 {
        (-x.exp_m1()).ln()
    } else {
        (-x.exp()).ln_1p()
    };
    v.is_finite().then_some(v)
}

impl fmt::Display for SymbolicFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.node() {
            Node::Constant(c) => write!(f, "{c}"),
            Node::ExponentialArrivalRho { lambda } => write!(f, "exp_rho({lambda})"),
            Node::EbbSigma { prefactor, decay } => write!(f, "ebb_sigma({prefactor}, {decay})"),
            Node::PoissonRho { mu, nu } => write!(f, "poisson_rho({mu}, {nu})"),
            Node::TokenBucketSigma { bucket, .. } => write!(f, "tb_sigma({bucket})"),
            Node::Sum(a, b) => write!(f, "({a} + {b})"),
            Node::Max(a, b) => write!(f, "max({a}, {b})"),
            Node::Negate(a) => write!(f, "-{a}"),
            Node::HoelderScale { inner, id, role } => {
                let r = match role {
                    HoelderRole::P => "p",
                    HoelderRole::Q => "q",
                };
                write!(f, "{inner}[{r}{}]", id.0)
            }
            Node::ConvolutionSigma {
                sigma1,
                sigma2,
                rho1,
                rho2,
            } => write!(f, "conv_sigma({sigma1}, {sigma2}; {rho1}, {rho2})"),
            Node::DeconvolutionSigma {
                sigma_a,
                sigma_u,
                rho_a,
                rho_u,
            } => write!(f, "deconv_sigma({sigma_a}, {sigma_u}; {rho_a}, {rho_u})"),
        }
    }
}
