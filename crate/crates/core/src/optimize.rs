//! Grid search over θ and Hölder parameters.

use rayon::prelude::*;
use thiserror::Error;

use crate::analysis::PerformanceBound;
use crate::symbolic::{EvalError, HoelderId, HoelderRole, ParamAssignment};

/// θ search limit used when no atom restricts θ.
pub const DEFAULT_THETA_CAP: f64 = 10.0;
pub const DEFAULT_P_MAX: f64 = 32.0;
const MAX_GRID_POINTS: u128 = 1 << 32;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Query {
    /// `P(quantity > value)`.
    Forward { value: f64 },
    /// Smallest `x` with bound `epsilon`.
    Inverse { epsilon: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundQuery {
    pub bound: PerformanceBound,
    pub query: Query,
}

impl BoundQuery {
    pub fn forward(bound: PerformanceBound, value: f64) -> Result<Self, OptimizeError> {
        if !(value.is_finite() && value >= 0.0) {
            return Err(OptimizeError::InvalidQuery(format!("value must be finite and >= 0, got {value}")));
        }
        Ok(Self { bound, query: Query::Forward { value } })
    }

    pub fn inverse(bound: PerformanceBound, epsilon: f64) -> Result<Self, OptimizeError> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(OptimizeError::InvalidQuery(format!("epsilon must lie in (0, 1), got {epsilon}")));
        }
        Ok(Self { bound, query: Query::Inverse { epsilon } })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OptimizeError {
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("infeasible point: {0}")]
    InfeasiblePoint(#[from] EvalError),
    #[error("infeasible point: bound does not decay (rho_b = {rho_b})")]
    NonDecaying { rho_b: f64 },
    #[error("no feasible point among {evaluated} grid points")]
    NoFeasiblePoint { evaluated: u64 },
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    pub theta_granularity: f64,
    /// `None` derives the limit from the bound's atoms.
    pub theta_max: Option<f64>,
    pub hoelder_granularity: f64,
    pub p_max: f64,
    /// Used only when no atom restricts θ.
    pub theta_cap: f64,
    /// `None` uses the global rayon pool.
    pub threads: Option<usize>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            theta_granularity: 0.01,
            theta_max: None,
            hoelder_granularity: 0.1,
            p_max: DEFAULT_P_MAX,
            theta_cap: DEFAULT_THETA_CAP,
            threads: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationResult {
    pub value: f64,
    pub argmin: ParamAssignment,
    pub evaluated: u64,
    pub feasible: u64,
}

/// Value of the query at one parameter point.
pub fn evaluate_query(q: &BoundQuery, a: &ParamAssignment) -> Result<f64, OptimizeError> {
    let theta = a.theta;
    let rho = q.bound.rho.evaluate(a)?;
    let sigma = q.bound.sigma.evaluate(a)?;
    if !(rho < 0.0) {
        return Err(OptimizeError::NonDecaying { rho_b: rho });
    }
    let v = match q.query {
        Query::Forward { value } => (theta * rho * value + theta * sigma).exp(),
        Query::Inverse { epsilon } => (sigma + (1.0 / epsilon).ln() / theta) / -rho,
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(EvalError::ThetaOutOfDomain { theta }.into())
    }
}

/// Fully resolved search grid.
#[derive(Debug, Clone)]
pub struct Grid {
    pub thetas: Vec<f64>,
    pub hoelder_ids: Vec<HoelderId>,
    pub p_values: Vec<f64>,
}

impl Grid {
    pub fn new(bound: &PerformanceBound, cfg: &GridConfig) -> Result<Self, OptimizeError> {
        let g = cfg.theta_granularity;
        let gh = cfg.hoelder_granularity;
        if !(g > 0.0 && g.is_finite()) {
            return Err(OptimizeError::InvalidGrid(format!("theta granularity must be > 0, got {g}")));
        }
        if !(gh > 0.0 && gh.is_finite()) {
            return Err(OptimizeError::InvalidGrid(format!("Hölder granularity must be > 0, got {gh}")));
        }
        if !(cfg.p_max > 1.0 && cfg.p_max.is_finite()) {
            return Err(OptimizeError::InvalidGrid(format!("p_max must be > 1, got {}", cfg.p_max)));
        }
        let theta_max = match cfg.theta_max {
            Some(t) if t > 0.0 && t.is_finite() => t,
            Some(t) => return Err(OptimizeError::InvalidGrid(format!("theta_max must be > 0, got {t}"))),
            None => auto_theta_max(bound, cfg),
        };
        let thetas = steps(g, theta_max, 0.0);
        if thetas.is_empty() {
            return Err(OptimizeError::InvalidGrid(format!(
                "theta range (0, {theta_max}] holds no multiple of {g}"
            )));
        }
        let hoelder_ids: Vec<HoelderId> = bound.hoelder_ids().into_iter().collect();
        let p_values = if hoelder_ids.is_empty() {
            Vec::new()
        } else {
            steps(gh, cfg.p_max - 1.0, 1.0)
        };
        if !hoelder_ids.is_empty() && p_values.is_empty() {
            return Err(OptimizeError::InvalidGrid("Hölder range is empty".into()));
        }
        let grid = Self { thetas, hoelder_ids, p_values };
        if grid.size_u128() > MAX_GRID_POINTS {
            return Err(OptimizeError::InvalidGrid(format!("{} grid points exceed the limit", grid.size_u128())));
        }
        Ok(grid)
    }

    fn combos(&self) -> u128 {
        (self.p_values.len() as u128).pow(self.hoelder_ids.len() as u32)
    }

    fn size_u128(&self) -> u128 {
        self.thetas.len() as u128 * self.combos()
    }

    pub fn size(&self) -> u64 {
        self.size_u128() as u64
    }

    /// Writes point `index` into `a`. θ is the slowest coordinate, then the
    /// Hölder ids in ascending order.
    fn fill(&self, index: u64, a: &mut ParamAssignment) {
        let combos = self.combos() as u64;
        a.theta = self.thetas[(index / combos) as usize];
        let mut rest = index % combos;
        let n = self.p_values.len() as u64;
        for id in self.hoelder_ids.iter().rev() {
            a.hoelder.insert(*id, self.p_values[(rest % n) as usize]);
            rest /= n;
        }
    }

    pub fn point(&self, index: u64) -> ParamAssignment {
        let mut a = ParamAssignment::new(0.0);
        self.fill(index, &mut a);
        a
    }
}

/// `offset + k·step` for `k = 1..` while `k·step <= span`.
fn steps(step: f64, span: f64, offset: f64) -> Vec<f64> {
    let n = (span / step + 1e-9).floor();
    if !(n >= 1.0) {
        return Vec::new();
    }
    (1..=n as u64).map(|k| offset + k as f64 * step).collect()
}

/// Largest θ any atom allows under the most permissive Hölder scales on the
/// grid, minus one granularity step.
fn auto_theta_max(bound: &PerformanceBound, cfg: &GridConfig) -> f64 {
    let scale = |role: HoelderRole| match role {
        HoelderRole::P => 1.0 + cfg.hoelder_granularity,
        HoelderRole::Q => cfg.p_max / (cfg.p_max - 1.0),
    };
    let ceiling = bound.rho.theta_ceiling(&scale).min(bound.sigma.theta_ceiling(&scale));
    if ceiling.is_finite() {
        ceiling - cfg.theta_granularity
    } else {
        cfg.theta_cap
    }
}

#[derive(Clone, Copy)]
struct Best {
    value: f64,
    index: u64,
}

fn better(a: Option<Best>, b: Option<Best>) -> Option<Best> {
    match (a, b) {
        (Some(x), Some(y)) => {
            if y.value < x.value || (y.value == x.value && y.index < x.index) {
                Some(y)
            } else {
                Some(x)
            }
        }
        (x, None) => x,
        (None, y) => y,
    }
}

/// Minimizes the query over the grid. Ties go to the smallest θ, then the
/// lexicographically smallest Hölder vector.
pub fn grid_search_minimize(q: &BoundQuery, cfg: &GridConfig) -> Result<OptimizationResult, OptimizeError> {
    let grid = Grid::new(&q.bound, cfg)?;
    let search = || {
        (0..grid.size())
            .into_par_iter()
            .fold(
                || (ParamAssignment::new(0.0), None::<Best>, 0u64),
                |(mut a, best, feasible), index| {
                    grid.fill(index, &mut a);
                    match evaluate_query(q, &a) {
                        Ok(value) => (a, better(best, Some(Best { value, index })), feasible + 1),
                        Err(_) => (a, best, feasible),
                    }
                },
            )
            .map(|(_, best, feasible)| (best, feasible))
            .reduce(|| (None, 0), |(b1, f1), (b2, f2)| (better(b1, b2), f1 + f2))
    };
    let (best, feasible) = match cfg.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| OptimizeError::ThreadPool(e.to_string()))?
            .install(search),
        None => search(),
    };
    let evaluated = grid.size();
    let best = best.ok_or(OptimizeError::NoFeasiblePoint { evaluated })?;
    Ok(OptimizationResult {
        value: best.value,
        argmin: grid.point(best.index),
        evaluated,
        feasible,
    })
}
