//! Value iteration on the one-step operator
//! `(Tα)_s = val(r(s, ·, ·) + β Σ_t α_t p(t; s, ·, ·))`.
//!
//! `T` is a `β`-contraction in the sup norm, so iterating it from any start
//! converges to the value vector. Each stage game is a zero-sum polynomial
//! game on `[0, 1]²`, solved as the one-state, undiscounted instance of the
//! program in [`crate::sc_sdp`]. Transitions may depend on both actions.

use rayon::prelude::*;
use serde::Serialize;

use crate::conic::SolverOptions;
use crate::moments::MomentSequence;
use crate::poly::BivariatePolynomial;
use crate::sc_sdp::{solve_equilibrium, SpError, SpOptions};
use crate::stochgame::StochasticGame;

pub const DEFAULT_MAX_ITER: usize = 10_000;
/// Slack allowed in the contraction check on residuals.
pub const CONTRACTION_SLACK: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ShapleyError {
    #[error("stage game of state {state}: {source}")]
    Stage { state: usize, source: SpError },
    #[error("no convergence after {} iterations (last step {:e})", .0.residuals.len(), .0.residuals.last().copied().unwrap_or(f64::NAN))]
    MaxIterExceeded(Box<IterationTrace>),
}

/// Equilibrium of a single polynomial game: player 1 (maximizing, `x`)
/// plays `mu`, player 2 (minimizing, `y`) plays `nu`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageSolution {
    pub val: f64,
    pub mu: MomentSequence,
    pub nu: MomentSequence,
}

/// Solves the zero-sum game with payoff `p(x, y)` on `[0, 1]²`.
pub fn solve_polynomial_game(p: &BivariatePolynomial) -> Result<StageSolution, SpError> {
    solve_polynomial_game_with(p, &SolverOptions::default())
}

pub fn solve_polynomial_game_with(
    p: &BivariatePolynomial,
    opts: &SolverOptions,
) -> Result<StageSolution, SpError> {
    let g = StochasticGame::with_default_names(
        0.0,
        vec![p.clone()],
        vec![vec![BivariatePolynomial::constant(1.0)]],
    )
    .expect("one state");
    let sol = solve_equilibrium(
        &g,
        &SpOptions {
            solver: *opts,
            solve_dual_explicitly: false,
        },
    )?;
    Ok(StageSolution {
        val: sol.v_star[0],
        mu: sol.mu_bar[0].clone(),
        nu: sol.nu_bar[0].clone(),
    })
}

/// Stage-game solutions of every state at `alpha`, solved in parallel.
pub fn stage_solutions(
    g: &StochasticGame,
    alpha: &[f64],
    opts: &SolverOptions,
) -> Result<Vec<StageSolution>, ShapleyError> {
    (0..g.num_states())
        .into_par_iter()
        .map(|s| {
            solve_polynomial_game_with(&g.stage_game(s, alpha), opts)
                .map_err(|source| ShapleyError::Stage { state: s, source })
        })
        .collect()
}

/// One application of the operator.
pub fn apply_t(g: &StochasticGame, alpha: &[f64]) -> Result<Vec<f64>, ShapleyError> {
    Ok(stage_solutions(g, alpha, &SolverOptions::default())?
        .into_iter()
        .map(|s| s.val)
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationTrace {
    /// `α^0, α^1, ...`
    pub iterates: Vec<Vec<f64>>,
    /// `‖α^{k+1} - α^k‖∞`
    pub residuals: Vec<f64>,
    pub converged: bool,
    pub phi: Vec<f64>,
}

impl IterationTrace {
    /// Largest violation of `res[k+1] ≤ β res[k] + slack`; nonpositive when
    /// the trace contracts.
    pub fn contraction_excess(&self, beta: f64) -> f64 {
        self.residuals
            .windows(2)
            .map(|w| w[1] - beta * w[0] - CONTRACTION_SLACK)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValueIteration {
    pub phi: Vec<f64>,
    /// Stage-game equilibria at `phi`.
    pub strategies: Vec<StageSolution>,
    /// `‖T(phi) - phi‖∞`, a measure of how far `phi` is from the fixed point.
    pub fixed_point_residual: f64,
    pub trace: IterationTrace,
}

/// Iterates from `α^0 = 0` until `‖α^{k+1} - α^k‖∞ ≤ eps (1 - β) / (2β)`,
/// which puts the last iterate within `eps` of the fixed point.
pub fn value_iterate(g: &StochasticGame, eps: f64, max_iter: usize) -> Result<ValueIteration, ShapleyError> {
    value_iterate_from(g, &vec![0.0; g.num_states()], eps, max_iter, &SolverOptions::default())
}

pub fn value_iterate_from(
    g: &StochasticGame,
    alpha0: &[f64],
    eps: f64,
    max_iter: usize,
    opts: &SolverOptions,
) -> Result<ValueIteration, ShapleyError> {
    let beta = g.beta();
    let threshold = if beta > 0.0 {
        eps * (1.0 - beta) / (2.0 * beta)
    } else {
        f64::INFINITY
    };
    let mut alpha = alpha0.to_vec();
    let mut trace = IterationTrace {
        iterates: vec![alpha.clone()],
        residuals: Vec::new(),
        converged: false,
        phi: alpha.clone(),
    };
    for k in 0..max_iter {
        let next: Vec<f64> = stage_solutions(g, &alpha, opts)?.into_iter().map(|s| s.val).collect();
        let res = sup_dist(&next, &alpha);
        log::debug!("value iteration {k}: step {res:e}");
        trace.iterates.push(next.clone());
        trace.residuals.push(res);
        alpha = next;
        if res <= threshold {
            trace.converged = true;
            break;
        }
    }
    trace.phi = alpha.clone();
    if !trace.converged {
        return Err(ShapleyError::MaxIterExceeded(Box::new(trace)));
    }
    let strategies = stage_solutions(g, &alpha, opts)?;
    let fixed_point_residual = strategies
        .iter()
        .zip(&alpha)
        .map(|(s, a)| (s.val - a).abs())
        .fold(0.0, f64::max);
    Ok(ValueIteration {
        phi: alpha,
        strategies,
        fixed_point_residual,
        trace,
    })
}

fn sup_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
