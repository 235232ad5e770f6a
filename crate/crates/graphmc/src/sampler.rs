//! The sampling loop: random-walk Metropolis steps, two-stage delayed
//! rejection, mixture proposal selection, Metropolis-within-Gibbs sweeps over
//! blocks, and the full run driver.

use std::time::{Duration, Instant};

use crate::adapt::{
    adaptation_active, am_update, amcmc_scaling, ascm_update, default_target_alpha, eta,
    mix_probability, rb_am_update, AdaptState, AlgorithmChoice, BurninStrategy, CovarianceAdapt,
    MixSchedule, ScalingAdapt, WeightSchedule,
};
use crate::error::{Error, Result};
use crate::io::TraceSink;
use crate::linalg::{tri_matvec, tri_solve, LowerTriangular};
use crate::model::{
    block_dependents, block_logdensity_with_deps, total_logdensity, Block, ChainValues, Graph,
    GraphEnv, NodeId,
};
use crate::modelang::ast::Expr;
use crate::modelang::eval::{self, MapEnv};
use crate::proposals::{log_density_standard, sample_standard, ProposalKind, RngState};

/// Current position of one chain.
#[derive(Debug, Clone)]
pub struct ChainState {
    pub values: ChainValues,
    /// Completed sweeps.
    pub iter: u64,
    pub rng: RngState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    /// Accepted at the first stage.
    First,
    /// A second (delayed-rejection) stage ran.
    Delayed,
    /// Rejected outright, no second stage.
    None,
}

#[derive(Debug, Clone, Copy)]
pub struct StepOutcome {
    pub accepted: bool,
    pub alpha1: f64,
    pub stage: Stage,
    pub alpha2: Option<f64>,
}

/// One block update, with the quantities the adaptation rules need.
#[derive(Debug, Clone)]
pub struct StepResult {
    pub outcome: StepOutcome,
    /// Block value before the step.
    pub x_prev: Vec<f64>,
    /// First-stage proposal.
    pub y1: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub niter: u64,
    pub nburn: u64,
    pub algorithm: AlgorithmChoice,
    pub strategy: BurninStrategy,
    pub proposal: ProposalKind,
    /// Second-stage down-scaling gamma; delayed rejection off when `None`.
    pub dr_scale: Option<f64>,
    pub mix: MixSchedule,
    pub eta_schedule: WeightSchedule,
    pub thin: u64,
    pub seed: u64,
    /// Initial scaling override; the dimension default 2.38/sqrt(d) otherwise.
    pub theta0: Option<f64>,
}

impl RunConfig {
    pub fn new(niter: u64) -> Self {
        Self {
            niter,
            nburn: 0,
            algorithm: AlgorithmChoice::plain_metropolis(),
            strategy: BurninStrategy::Greedy,
            proposal: ProposalKind::Gaussian,
            dr_scale: None,
            mix: MixSchedule::Constant { p0: 0.0 },
            eta_schedule: WeightSchedule::Reciprocal,
            thin: 1,
            seed: 0,
            theta0: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.niter == 0 {
            return Err(Error::Model("niter must be positive".into()));
        }
        if self.nburn >= self.niter {
            return Err(Error::Model(format!(
                "nburn ({}) must be smaller than niter ({})",
                self.nburn, self.niter
            )));
        }
        if self.thin == 0 {
            return Err(Error::Model("thin must be positive".into()));
        }
        if let Some(g) = self.dr_scale {
            if !(g > 0.0 && g < 1.0) {
                return Err(Error::Model(format!(
                    "dr scale must lie strictly between 0 and 1, got {g}"
                )));
            }
        }
        Ok(())
    }
}

/// Running mean of the functional over post-burn-in sweeps.
#[derive(Debug, Clone)]
pub struct FunctionalAccumulator {
    pub expr: Expr,
    pub running_sum: Vec<f64>,
    pub count: u64,
}

impl FunctionalAccumulator {
    pub fn new(expr: Expr) -> Self {
        Self {
            expr,
            running_sum: Vec::new(),
            count: 0,
        }
    }

    pub fn accumulate(&mut self, graph: &Graph, values: &ChainValues) -> Result<()> {
        let env = GraphEnv { graph, values };
        let v = eval::eval(&self.expr, &env)?.flatten();
        if self.count == 0 {
            self.running_sum = vec![0.0; v.len()];
        } else if v.len() != self.running_sum.len() {
            return Err(Error::DimensionMismatch {
                expected: self.running_sum.len(),
                got: v.len(),
            });
        }
        for (s, x) in self.running_sum.iter_mut().zip(&v) {
            *s += x;
        }
        self.count += 1;
        Ok(())
    }

    pub fn average(&self) -> Option<Vec<f64>> {
        (self.count > 0).then(|| {
            self.running_sum
                .iter()
                .map(|s| s / self.count as f64)
                .collect()
        })
    }
}

#[derive(Debug, Clone)]
pub struct BlockReport {
    pub label: String,
    /// Accepted moves (either stage) per post-burn-in attempt.
    pub acceptance_rate: f64,
    /// (first-stage, delayed-stage) shares when delayed rejection ran.
    pub stage_rates: Option<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub functional_average: Option<Vec<f64>>,
    pub blocks: Vec<BlockReport>,
    /// Final theta per block.
    pub final_scales: Vec<f64>,
    pub elapsed: Duration,
}

/// log q1(a -> b) for the stage-1 proposal b = a + theta * L * W.
fn proposal_logdensity(
    kind: ProposalKind,
    shape: &LowerTriangular,
    theta: f64,
    from: &[f64],
    to: &[f64],
) -> Result<f64> {
    let d = from.len();
    let diff: Vec<f64> = to
        .iter()
        .zip(from)
        .map(|(b, a)| (b - a) / theta)
        .collect();
    let w = tri_solve(shape, &diff)?;
    Ok(log_density_standard(kind, d, &w) - d as f64 * theta.ln() - shape.log_det())
}

/// log(1 - exp(x)) for x <= 0.
fn ln_one_minus_exp(x: f64) -> f64 {
    debug_assert!(x <= 0.0);
    if x == 0.0 {
        f64::NEG_INFINITY
    } else {
        (-x.exp_m1()).ln()
    }
}

/// Log of the two-stage acceptance probability
///   alpha2 = min{1, [pi(y2) q1(y2->y1) (1 - a1(y2,y1))]
///                 / [pi(x)  q1(x->y1)  (1 - a1(x,y1))]}
/// from the block log-densities at x, y1, y2 and the stage-1 proposal
/// log-densities q1(y2->y1), q1(x->y1).
pub fn dr_log_alpha2(l_x: f64, l_y1: f64, l_y2: f64, lq_y2_y1: f64, lq_x_y1: f64) -> f64 {
    if l_y2 == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let la1_y2_y1 = (l_y1 - l_y2).min(0.0);
    let la1_x_y1 = (l_y1 - l_x).min(0.0);
    // the step only runs after a stage-1 rejection, so a1(x,y1) < 1
    let num = l_y2 + lq_y2_y1 + ln_one_minus_exp(la1_y2_y1);
    let den = l_x + lq_x_y1 + ln_one_minus_exp(la1_x_y1);
    (num - den).min(0.0)
}

/// One random-walk Metropolis step on a block. Draws exactly one W and one
/// uniform; on acceptance the proposal is written into `values`.
#[allow(clippy::too_many_arguments)]
pub fn rwm_step(
    graph: &Graph,
    values: &mut ChainValues,
    block: &Block,
    deps: &[NodeId],
    adapt: &AdaptState,
    kind: ProposalKind,
    use_initial: bool,
    rng: &mut RngState,
) -> Result<StepResult> {
    let d = block.dim();
    debug_assert_eq!(adapt.dim, d);
    let (theta, shape) = if use_initial {
        (adapt.theta0, &adapt.shape0)
    } else {
        (adapt.theta, &adapt.shape)
    };
    let x = block.gather(values);
    let w = sample_standard(kind, d, rng);
    let lw = tri_matvec(shape, &w)?;
    let y: Vec<f64> = x.iter().zip(&lw).map(|(xi, wi)| xi + theta * wi).collect();

    let l_x = block_logdensity_with_deps(graph, values, block, &x, deps)?;
    let l_y = block_logdensity_with_deps(graph, values, block, &y, deps)?;
    let alpha1 = (l_y - l_x).exp().min(1.0);
    let u = rng.uniform01();
    let accepted = u < alpha1;
    if accepted {
        block.scatter(values, &y);
    }
    Ok(StepResult {
        outcome: StepOutcome {
            accepted,
            alpha1,
            stage: if accepted { Stage::First } else { Stage::None },
            alpha2: None,
        },
        x_prev: x,
        y1: y,
    })
}

/// Second stage after a first-stage rejection: proposes
/// y2 = x + gamma * theta * L * W2 and accepts with the two-stage probability.
#[allow(clippy::too_many_arguments)]
pub fn dr_step(
    graph: &Graph,
    values: &mut ChainValues,
    block: &Block,
    deps: &[NodeId],
    adapt: &AdaptState,
    kind: ProposalKind,
    use_initial: bool,
    gamma: f64,
    first: &StepResult,
    rng: &mut RngState,
) -> Result<StepOutcome> {
    debug_assert!(!first.outcome.accepted);
    debug_assert!(gamma > 0.0 && gamma < 1.0);
    let d = block.dim();
    let (theta, shape) = if use_initial {
        (adapt.theta0, &adapt.shape0)
    } else {
        (adapt.theta, &adapt.shape)
    };
    let x = &first.x_prev;
    let y1 = &first.y1;
    let w2 = sample_standard(kind, d, rng);
    let lw2 = tri_matvec(shape, &w2)?;
    let y2: Vec<f64> = x
        .iter()
        .zip(&lw2)
        .map(|(xi, wi)| xi + gamma * theta * wi)
        .collect();

    let l_x = block_logdensity_with_deps(graph, values, block, x, deps)?;
    let l_y1 = block_logdensity_with_deps(graph, values, block, y1, deps)?;
    let l_y2 = block_logdensity_with_deps(graph, values, block, &y2, deps)?;
    let lq_y2_y1 = proposal_logdensity(kind, shape, theta, &y2, y1)?;
    let lq_x_y1 = proposal_logdensity(kind, shape, theta, x, y1)?;
    let la2 = dr_log_alpha2(l_x, l_y1, l_y2, lq_y2_y1, lq_x_y1);
    let alpha2 = la2.exp().min(1.0);
    let u = rng.uniform01();
    let accepted = u < alpha2;
    if accepted {
        block.scatter(values, &y2);
    }
    Ok(StepOutcome {
        accepted,
        alpha1: first.outcome.alpha1,
        stage: Stage::Delayed,
        alpha2: Some(alpha2),
    })
}

/// Per-block dependent-factor cache built once per run.
pub fn block_deps(graph: &Graph, blocks: &[Block]) -> Vec<Vec<NodeId>> {
    blocks.iter().map(|b| block_dependents(graph, b)).collect()
}

/// One Metropolis-within-Gibbs sweep: every block updated once, in order,
/// followed by the configured adaptation updates.
pub fn sweep(
    graph: &Graph,
    chain: &mut ChainState,
    blocks: &[Block],
    deps: &[Vec<NodeId>],
    states: &mut [AdaptState],
    cfg: &RunConfig,
) -> Result<Vec<StepOutcome>> {
    let mut outcomes = Vec::with_capacity(blocks.len());
    for (i, block) in blocks.iter().enumerate() {
        let state = &mut states[i];
        let n = state.step + 1;
        let (adapt_now, force_initial) = adaptation_active(cfg.strategy, n);
        let p_mix = mix_probability(&cfg.mix, n);
        let use_initial =
            force_initial || (p_mix > 0.0 && chain.rng.uniform01() < p_mix);

        let first = rwm_step(
            graph,
            &mut chain.values,
            block,
            &deps[i],
            state,
            cfg.proposal,
            use_initial,
            &mut chain.rng,
        )?;
        let outcome = match (first.outcome.accepted, cfg.dr_scale) {
            (false, Some(gamma)) => dr_step(
                graph,
                &mut chain.values,
                block,
                &deps[i],
                state,
                cfg.proposal,
                use_initial,
                gamma,
                &first,
                &mut chain.rng,
            )?,
            _ => first.outcome,
        };

        if adapt_now {
            let eta_n = eta(cfg.eta_schedule, n);
            match cfg.algorithm.covariance_adapt {
                CovarianceAdapt::None => {}
                CovarianceAdapt::Am => {
                    let x_now = block.gather(&chain.values);
                    am_update(state, &x_now, eta_n);
                }
                CovarianceAdapt::RbAm => {
                    // defined in terms of the stage-1 pair regardless of DR
                    rb_am_update(
                        state,
                        &first.x_prev,
                        &first.y1,
                        first.outcome.alpha1,
                        eta_n,
                    );
                }
            }
            // only the first-stage acceptance probability drives scaling
            let alpha1 = first.outcome.alpha1;
            match &cfg.algorithm.scaling_adapt {
                ScalingAdapt::None => {}
                ScalingAdapt::Ascm => {
                    let target = cfg
                        .algorithm
                        .target_alpha
                        .unwrap_or_else(|| default_target_alpha(block.dim()));
                    state.theta = ascm_update(state.theta, alpha1, eta_n, target);
                }
                ScalingAdapt::AmcmcRule => {
                    state.theta = amcmc_scaling(state.theta, alpha1, n - 1);
                }
                ScalingAdapt::UserRule { expr } => {
                    let mut env = MapEnv::new();
                    env.set("sc", state.theta)
                        .set("alpha", alpha1)
                        .set("dim", block.dim() as f64)
                        .set("k", (n - 1) as f64);
                    let sc = eval::eval_scalar(expr, &env)?;
                    if !(sc > 0.0) {
                        return Err(Error::Evaluation(format!(
                            "scaling rule produced a non-positive scale {sc}"
                        )));
                    }
                    state.theta = sc;
                }
            }
        }
        state.step = n;
        outcomes.push(outcome);
    }
    chain.iter += 1;
    Ok(outcomes)
}

/// Full run: nburn + niter sweeps; the functional and the trace see only the
/// post-burn-in sweeps.
pub fn run(
    graph: &Graph,
    blocks: &[Block],
    cfg: &RunConfig,
    mut functional: Option<FunctionalAccumulator>,
    sinks: &mut [&mut dyn TraceSink],
) -> Result<RunReport> {
    cfg.validate()?;
    let started = Instant::now();
    let values = graph.initial_values();
    if total_logdensity(graph, &values)? == f64::NEG_INFINITY {
        return Err(Error::Model(
            "initial state has zero target density".into(),
        ));
    }

    let mut chain = ChainState {
        values,
        iter: 0,
        rng: RngState::seed_from_u64(cfg.seed),
    };
    let deps = block_deps(graph, blocks);
    let mut states: Vec<AdaptState> = blocks
        .iter()
        .map(|b| {
            let s = AdaptState::new(&b.gather(&chain.values));
            match cfg.theta0 {
                Some(t0) => s.with_theta0(t0),
                None => s,
            }
        })
        .collect();

    let free = graph.free_components();
    let mut attempts = vec![0u64; blocks.len()];
    let mut first_accepts = vec![0u64; blocks.len()];
    let mut delayed_accepts = vec![0u64; blocks.len()];
    let dr_on = cfg.dr_scale.is_some();

    let total = cfg.nburn + cfg.niter;
    for j in 1..=total {
        let outcomes = sweep(graph, &mut chain, blocks, &deps, &mut states, cfg)?;
        if j <= cfg.nburn {
            continue;
        }
        for (i, o) in outcomes.iter().enumerate() {
            attempts[i] += 1;
            if o.accepted {
                match o.stage {
                    Stage::First => first_accepts[i] += 1,
                    Stage::Delayed => delayed_accepts[i] += 1,
                    Stage::None => unreachable!("accepted step has a stage"),
                }
            }
        }
        if let Some(acc) = functional.as_mut() {
            acc.accumulate(graph, &chain.values)?;
        }
        if (j - cfg.nburn - 1) % cfg.thin == 0 {
            let row: Vec<f64> = free
                .iter()
                .map(|&(id, c, _)| chain.values[id][c])
                .collect();
            for sink in sinks.iter_mut() {
                sink.write_row(&row)?;
            }
        }
    }
    for sink in sinks.iter_mut() {
        sink.finalize()?;
    }

    let block_reports = blocks
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let n = attempts[i].max(1) as f64;
            let first = first_accepts[i] as f64 / n;
            let delayed = delayed_accepts[i] as f64 / n;
            BlockReport {
                label: b.label.clone(),
                acceptance_rate: first + delayed,
                stage_rates: dr_on.then_some((first, delayed)),
            }
        })
        .collect();

    Ok(RunReport {
        functional_average: functional.and_then(|f| f.average()),
        blocks: block_reports,
        final_scales: states.iter().map(|s| s.theta).collect(),
        elapsed: started.elapsed(),
    })
}

/// Column names for the trace: every free scalar component in topological
/// order.
pub fn trace_columns(graph: &Graph) -> Vec<String> {
    graph
        .free_components()
        .into_iter()
        .map(|(_, _, name)| name)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_graph, default_blocks, BuiltinDensity, Density, NodeSpec};

    fn std_normal_graph() -> Graph {
        build_graph(&[
            NodeSpec::constant("m", 0.0),
            NodeSpec::constant("v", 1.0),
            NodeSpec::stochastic("x", &["m", "v"], Density::Builtin(BuiltinDensity::DNorm)),
        ])
        .unwrap()
    }

    fn run_plain(cfg: &RunConfig, graph: &Graph) -> (Vec<f64>, RunReport) {
        let blocks = default_blocks(graph);
        let mut chain = ChainState {
            values: graph.initial_values(),
            iter: 0,
            rng: RngState::seed_from_u64(cfg.seed),
        };
        let deps = block_deps(graph, &blocks);
        let mut states: Vec<AdaptState> = blocks
            .iter()
            .map(|b| AdaptState::new(&b.gather(&chain.values)))
            .collect();
        let mut draws = Vec::new();
        for _ in 0..(cfg.nburn + cfg.niter) {
            sweep(graph, &mut chain, &blocks, &deps, &mut states, cfg).unwrap();
            draws.push(chain.values[graph.id_of("x").unwrap()][0]);
        }
        let report = RunReport {
            functional_average: None,
            blocks: vec![],
            final_scales: states.iter().map(|s| s.theta).collect(),
            elapsed: Duration::ZERO,
        };
        (draws, report)
    }

    #[test]
    fn plain_rwm_matches_standard_gaussian() {
        let graph = std_normal_graph();
        let mut cfg = RunConfig::new(200_000);
        cfg.seed = 11;
        let (draws, _) = run_plain(&cfg, &graph);
        let n = draws.len() as f64;
        let mean: f64 = draws.iter().sum::<f64>() / n;
        let var: f64 = draws.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        assert!(mean.abs() <= 0.03, "mean {mean}");
        assert!((var - 1.0).abs() <= 0.08, "var {var}");
    }

    #[test]
    fn ascm_converges_to_target_rate() {
        let graph = std_normal_graph();
        let blocks = default_blocks(&graph);
        let deps = block_deps(&graph, &blocks);
        let mut cfg = RunConfig::new(50_000);
        cfg.seed = 5;
        cfg.algorithm = AlgorithmChoice {
            covariance_adapt: CovarianceAdapt::None,
            scaling_adapt: ScalingAdapt::Ascm,
            target_alpha: None,
        };
        let mut chain = ChainState {
            values: graph.initial_values(),
            iter: 0,
            rng: RngState::seed_from_u64(cfg.seed),
        };
        let mut states: Vec<AdaptState> = blocks
            .iter()
            .map(|b| AdaptState::new(&b.gather(&chain.values)))
            .collect();
        let mut accepted_tail = 0u64;
        let tail = 10_000;
        for j in 0..cfg.niter {
            let o = sweep(&graph, &mut chain, &blocks, &deps, &mut states, &cfg).unwrap();
            if j >= cfg.niter - tail && o[0].accepted {
                accepted_tail += 1;
            }
        }
        let rate = accepted_tail as f64 / tail as f64;
        assert!((rate - 0.44).abs() <= 0.03, "trailing acceptance {rate}");
    }

    #[test]
    fn am_recovers_correlated_gaussian_shape() {
        // x1 ~ N(0, 1), x2 | x1 ~ N(0.9 x1, 0.19): jointly Gaussian with
        // covariance [[1, 0.9], [0.9, 1]]. Updated as one two-dimensional
        // block, the adapted L L^T should align with that covariance.
        let graph = build_graph(&[
            NodeSpec::stochastic(
                "x1",
                &[],
                Density::Custom(crate::modelang::parser::parse_expr("dnorm(x1_, 0, 1)").unwrap()),
            ),
            NodeSpec::stochastic(
                "x2",
                &["x1"],
                Density::Custom(
                    crate::modelang::parser::parse_expr("dnorm(x2_, 0.9 * x1, 0.19)").unwrap(),
                ),
            ),
        ])
        .unwrap();
        let id1 = graph.id_of("x1").unwrap();
        let id2 = graph.id_of("x2").unwrap();
        let blocks = vec![Block::from_members(&graph, vec![(id1, 0), (id2, 0)]).unwrap()];
        let deps = block_deps(&graph, &blocks);

        let mut cfg = RunConfig::new(100_000);
        cfg.seed = 17;
        cfg.algorithm = AlgorithmChoice {
            covariance_adapt: CovarianceAdapt::Am,
            scaling_adapt: ScalingAdapt::Ascm,
            target_alpha: None,
        };
        let mut chain = ChainState {
            values: graph.initial_values(),
            iter: 0,
            rng: RngState::seed_from_u64(cfg.seed),
        };
        let mut states: Vec<AdaptState> = blocks
            .iter()
            .map(|b| AdaptState::new(&b.gather(&chain.values)))
            .collect();
        for _ in 0..cfg.niter {
            sweep(&graph, &mut chain, &blocks, &deps, &mut states, &cfg).unwrap();
        }

        let l = &states[0].shape;
        let mut s = [[0.0f64; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..=i.min(j) {
                    s[i][j] += l[(i, k)] * l[(j, k)];
                }
            }
        }
        let trace = s[0][0] + s[1][1];
        let target = [[0.5, 0.45], [0.45, 0.5]]; // [[1, .9], [.9, 1]] / trace 2
        for i in 0..2 {
            for j in 0..2 {
                let got = s[i][j] / trace;
                assert!(
                    (got - target[i][j]).abs() <= 0.1 * target[i][j],
                    "entry ({i},{j}): {got} vs {}",
                    target[i][j]
                );
            }
        }
    }

    #[test]
    fn dr_log_alpha2_edge_cases() {
        // pi(y2) = 0 -> alpha2 = 0
        assert_eq!(
            dr_log_alpha2(0.0, -1.0, f64::NEG_INFINITY, 0.0, 0.0),
            f64::NEG_INFINITY
        );
        // pi(y2) = pi(x), q1(y2->y1) = q1(x->y1):
        // alpha2 = min{1, (1 - a1(y2,y1)) / (1 - a1(x,y1))}
        let l_x = 0.0;
        let l_y1 = -1.0;
        let l_y2 = 0.0;
        let la2 = dr_log_alpha2(l_x, l_y1, l_y2, -2.0, -2.0);
        let a1_y2 = (l_y1 - l_y2).exp().min(1.0);
        let a1_x = (l_y1 - l_x).exp().min(1.0);
        let want = ((1.0 - a1_y2) / (1.0 - a1_x)).min(1.0).ln();
        assert!((la2 - want).abs() < 1e-12);
    }

    #[test]
    fn plain_sweep_leaves_adaptation_unchanged() {
        let graph = std_normal_graph();
        let blocks = default_blocks(&graph);
        let deps = block_deps(&graph, &blocks);
        let cfg = RunConfig::new(100);
        let mut chain = ChainState {
            values: graph.initial_values(),
            iter: 0,
            rng: RngState::seed_from_u64(3),
        };
        let mut states: Vec<AdaptState> = blocks
            .iter()
            .map(|b| AdaptState::new(&b.gather(&chain.values)))
            .collect();
        let theta_before = states[0].theta;
        let shape_before = states[0].shape.clone();
        for _ in 0..100 {
            sweep(&graph, &mut chain, &blocks, &deps, &mut states, &cfg).unwrap();
        }
        assert_eq!(states[0].theta, theta_before);
        for i in 0..1 {
            for j in 0..=i {
                assert_eq!(states[0].shape[(i, j)], shape_before[(i, j)]);
            }
        }
        assert_eq!(states[0].mean, vec![0.0]);
    }

    #[test]
    fn run_rejects_bad_configs() {
        let graph = std_normal_graph();
        let blocks = default_blocks(&graph);
        let mut sinks: Vec<&mut dyn TraceSink> = vec![];
        let cfg = RunConfig::new(0);
        assert!(run(&graph, &blocks, &cfg, None, &mut sinks).is_err());
        let mut cfg = RunConfig::new(10);
        cfg.nburn = 10;
        assert!(run(&graph, &blocks, &cfg, None, &mut sinks).is_err());
        let mut cfg = RunConfig::new(10);
        cfg.dr_scale = Some(1.5);
        assert!(run(&graph, &blocks, &cfg, None, &mut sinks).is_err());
    }

    #[test]
    fn single_post_burnin_sweep_gives_one_functional_sample() {
        let graph = std_normal_graph();
        let blocks = default_blocks(&graph);
        let mut cfg = RunConfig::new(1);
        cfg.nburn = 0;
        let functional = FunctionalAccumulator::new(
            crate::modelang::parser::parse_expr("x").unwrap(),
        );
        let mut sinks: Vec<&mut dyn TraceSink> = vec![];
        let report = run(&graph, &blocks, &cfg, Some(functional), &mut sinks).unwrap();
        assert_eq!(report.functional_average.unwrap().len(), 1);
    }

    #[test]
    fn reproducible_across_runs() {
        let graph = std_normal_graph();
        let blocks = default_blocks(&graph);
        let mut cfg = RunConfig::new(500);
        cfg.seed = 42;
        cfg.algorithm = AlgorithmChoice {
            covariance_adapt: CovarianceAdapt::Am,
            scaling_adapt: ScalingAdapt::Ascm,
            target_alpha: None,
        };
        let run_once = || {
            let mut chain = ChainState {
                values: graph.initial_values(),
                iter: 0,
                rng: RngState::seed_from_u64(cfg.seed),
            };
            let deps = block_deps(&graph, &blocks);
            let mut states: Vec<AdaptState> = blocks
                .iter()
                .map(|b| AdaptState::new(&b.gather(&chain.values)))
                .collect();
            let mut trail = Vec::new();
            for _ in 0..500 {
                sweep(&graph, &mut chain, &blocks, &deps, &mut states, &cfg).unwrap();
                trail.push(chain.values[graph.id_of("x").unwrap()][0]);
            }
            trail
        };
        assert_eq!(run_once(), run_once());
    }

    #[test]
    fn sinks_do_not_feed_back_into_sampling() {
        let graph = std_normal_graph();
        let blocks = default_blocks(&graph);
        let mut cfg = RunConfig::new(200);
        cfg.seed = 8;
        let dir = tempfile::tempdir().unwrap();
        let cols = trace_columns(&graph);

        let mut with_sink = crate::io::CsvSink::create(&dir.path().join("a.csv"), cols).unwrap();
        let mut sinks: Vec<&mut dyn TraceSink> = vec![&mut with_sink];
        let f1 = FunctionalAccumulator::new(crate::modelang::parser::parse_expr("x").unwrap());
        let r1 = run(&graph, &blocks, &cfg, Some(f1), &mut sinks).unwrap();

        let mut none: Vec<&mut dyn TraceSink> = vec![];
        let f2 = FunctionalAccumulator::new(crate::modelang::parser::parse_expr("x").unwrap());
        let r2 = run(&graph, &blocks, &cfg, Some(f2), &mut none).unwrap();

        assert_eq!(r1.functional_average, r2.functional_average);
    }
}
