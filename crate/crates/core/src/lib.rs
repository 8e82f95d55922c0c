//! Stochastic network calculus with moment generating function bounds.
//!
//! Networks of flows and constant-rate servers are reduced symbolically to a
//! single flow at a single server, turned into backlog or delay bounds, and
//! optimized numerically over θ and any Hölder parameters introduced along the way.

// Negated comparisons reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cli;
pub mod models;
pub mod netio;
pub mod network;
pub mod optimize;
pub mod sim;
pub mod symbolic;

pub use analysis::{AnalysisError, AnalysisRequest, BoundKind, PerformanceBound};
pub use models::{Arrival, ArrivalModel, Dependencies, FlowId, ModelError, Service, ServiceModel, VertexId};
pub use network::{DepRef, Network, NetworkError};

pub use symbolic::{EvalError, HoelderId, ParamAssignment, SymbolicFunction};
pub use optimize::{BoundQuery, GridConfig, OptimizationResult, OptimizeError, Query};
