//! Adaptation rules: covariance adaptation (plain and Rao-Blackwellised),
//! acceptance-rate scaling, weight and mixture schedules, burn-in strategies.

use crate::linalg::{rank1_update, LowerTriangular};
use crate::modelang::ast::Expr;

/// Per-block adaptation state: scaling, shape Cholesky factor, running mean
/// and the block's own step counter.
#[derive(Debug, Clone)]
pub struct AdaptState {
    pub theta: f64,
    pub shape: LowerTriangular,
    pub mean: Vec<f64>,
    pub step: u64,
    pub dim: usize,
    /// Initial parameters, kept for the mixture / traditional burn-in proposal.
    pub theta0: f64,
    pub shape0: LowerTriangular,
}

impl AdaptState {
    /// Defaults: theta0 = 2.38/sqrt(d), identity shape, mean at the start point.
    pub fn new(start: &[f64]) -> Self {
        let dim = start.len();
        let theta0 = 2.38 / (dim as f64).sqrt();
        Self {
            theta: theta0,
            shape: LowerTriangular::identity(dim),
            mean: start.to_vec(),
            step: 0,
            dim,
            theta0,
            shape0: LowerTriangular::identity(dim),
        }
    }

    pub fn with_theta0(mut self, theta0: f64) -> Self {
        assert!(theta0 > 0.0);
        self.theta = theta0;
        self.theta0 = theta0;
        self
    }
}

/// The weight sequence eta_n driving every recursion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightSchedule {
    /// 1/(n+1); running mean and covariance become the ordinary sample estimates.
    Reciprocal,
    Constant { eta0: f64 },
    /// (n+1)^(-gamma) with gamma in (1/2, 1].
    Power { gamma: f64 },
}

pub fn eta(schedule: WeightSchedule, n: u64) -> f64 {
    debug_assert!(n >= 1);
    match schedule {
        WeightSchedule::Reciprocal => 1.0 / (n as f64 + 1.0),
        WeightSchedule::Constant { eta0 } => eta0,
        WeightSchedule::Power { gamma } => (n as f64 + 1.0).powf(-gamma),
    }
}

/// Probability of proposing from the fixed initial parameters.
#[derive(Debug, Clone)]
pub enum MixSchedule {
    Constant { p0: f64 },
    /// Expression in `n`, clamped into [0,1].
    UserSequence { expr: Expr },
}

pub fn mix_probability(schedule: &MixSchedule, n: u64) -> f64 {
    match schedule {
        MixSchedule::Constant { p0 } => *p0,
        MixSchedule::UserSequence { expr } => {
            let env = crate::modelang::eval::SingleVarEnv::new("n", n as f64);
            let v = crate::modelang::eval::eval_scalar(expr, &env).unwrap_or(0.0);
            v.clamp(0.0, 1.0)
        }
    }
}

/// When adaptation updates run and when the initial proposal is forced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BurninStrategy {
    /// Adapt during the whole run.
    Greedy,
    /// Fixed proposal during burn-in, then continuous adaptation. Parameter
    /// estimates still accumulate during burn-in; only the proposal is fixed.
    Traditional { nburn: u64 },
    /// Adapt only during burn-in, then freeze the parameters.
    Freeze { nburn: u64 },
}

/// Returns (update_params, use_initial_proposal) for step n.
pub fn adaptation_active(strategy: BurninStrategy, n: u64) -> (bool, bool) {
    match strategy {
        BurninStrategy::Greedy => (true, false),
        BurninStrategy::Traditional { nburn } => (true, n <= nburn),
        BurninStrategy::Freeze { nburn } => (n <= nburn, false),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovarianceAdapt {
    None,
    Am,
    RbAm,
}

#[derive(Debug, Clone)]
pub enum ScalingAdapt {
    None,
    Ascm,
    AmcmcRule,
    /// Expression in (sc, alpha, dim, k).
    UserRule { expr: Expr },
}

#[derive(Debug, Clone)]
pub struct AlgorithmChoice {
    pub covariance_adapt: CovarianceAdapt,
    pub scaling_adapt: ScalingAdapt,
    /// Desired acceptance probability; `None` selects the dimension default.
    pub target_alpha: Option<f64>,
}

impl AlgorithmChoice {
    pub fn plain_metropolis() -> Self {
        Self {
            covariance_adapt: CovarianceAdapt::None,
            scaling_adapt: ScalingAdapt::None,
            target_alpha: None,
        }
    }
}

/// 0.44 in dimension one, 0.234 otherwise.
pub fn default_target_alpha(block_dim: usize) -> f64 {
    if block_dim == 1 {
        0.44
    } else {
        0.234
    }
}

/// Covariance/mean recursion: M' = (1-eta)M + eta*x and
/// C' = (1-eta)C + eta*(x-M)(x-M)^T with the pre-update mean M,
/// maintained directly on the Cholesky factor.
pub fn am_update(state: &mut AdaptState, x: &[f64], eta_n: f64) {
    debug_assert_eq!(x.len(), state.dim);
    let innov: Vec<f64> = x
        .iter()
        .zip(&state.mean)
        .map(|(xi, mi)| xi - mi)
        .collect();
    state.shape = rank1_update(&state.shape, 1.0 - eta_n, eta_n, &innov);
    for (m, xi) in state.mean.iter_mut().zip(x) {
        *m = (1.0 - eta_n) * *m + eta_n * xi;
    }
}

/// Rao-Blackwellised recursion: the accepted/rejected pair enters weighted by
/// the acceptance probability instead of the realized outcome.
pub fn rb_am_update(state: &mut AdaptState, x_prev: &[f64], y: &[f64], alpha: f64, eta_n: f64) {
    debug_assert_eq!(x_prev.len(), state.dim);
    debug_assert_eq!(y.len(), state.dim);
    let innov_y: Vec<f64> = y.iter().zip(&state.mean).map(|(a, m)| a - m).collect();
    let innov_x: Vec<f64> = x_prev.iter().zip(&state.mean).map(|(a, m)| a - m).collect();
    let mut shape = rank1_update(&state.shape, 1.0 - eta_n, eta_n * alpha, &innov_y);
    shape = rank1_update(&shape, 1.0, eta_n * (1.0 - alpha), &innov_x);
    state.shape = shape;
    for i in 0..state.dim {
        let blend = alpha * y[i] + (1.0 - alpha) * x_prev[i];
        state.mean[i] = (1.0 - eta_n) * state.mean[i] + eta_n * blend;
    }
}

/// Scaling recursion theta' = theta * [1 + eta*(alpha/alpha* - 1)].
/// eta < 1 keeps the result positive even at alpha = 0.
pub fn ascm_update(theta: f64, alpha: f64, eta_n: f64, target_alpha: f64) -> f64 {
    debug_assert!(eta_n < 1.0);
    theta * (1.0 + eta_n * (alpha / target_alpha - 1.0))
}

/// The alternative acceptance-rate rule: sc * exp(delta * min(0.01, 1/sqrt(k+1)))
/// with delta = +1 when alpha exceeds 0.44 (strictly), else -1.
pub fn amcmc_scaling(sc: f64, alpha: f64, k: u64) -> f64 {
    debug_assert!(sc > 0.0);
    let delta = if alpha > 0.44 { 1.0 } else { -1.0 };
    sc * (delta * 0.01_f64.min(1.0 / ((k as f64 + 1.0).sqrt()))).exp()
}
