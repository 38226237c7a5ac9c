//! Finite-action approximation of a single-controller game and its exact
//! linear-programming solution.

use nalgebra::DMatrix;

use super::{GameError, StochasticGame};
use crate::conic::{self, term, ConicProblem, SolveStatus, SolverOptions};

/// A single-controller game restricted to a common grid of actions.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteGame {
    pub grid: Vec<f64>,
    pub beta: f64,
    /// `payoff[s][(i, j)] = r(s, grid[i], grid[j])`
    pub payoff: Vec<DMatrix<f64>>,
    /// `transition[s][i][t] = p(t; s, grid[i])`
    pub transition: Vec<Vec<Vec<f64>>>,
}

impl FiniteGame {
    pub fn num_states(&self) -> usize {
        self.payoff.len()
    }

    /// Transition matrix induced by player 1 mixing with `f[s]` over the grid.
    pub fn induced_transition(&self, f: &[Vec<f64>]) -> DMatrix<f64> {
        let n = self.num_states();
        DMatrix::from_fn(n, n, |s, t| {
            f[s].iter()
                .zip(&self.transition[s])
                .map(|(w, row)| w * row[t])
                .sum()
        })
    }
}

/// Evaluates the game on the uniform grid `{k / (m - 1)}`, endpoints included.
pub fn discretize(g: &StochasticGame, m: usize) -> Result<FiniteGame, GameError> {
    if m < 2 {
        return Err(GameError::GridTooSmall(m));
    }
    if !g.single_controller() {
        return Err(GameError::NotSingleController);
    }
    let grid: Vec<f64> = (0..m).map(|k| k as f64 / (m - 1) as f64).collect();
    let n = g.num_states();
    let payoff = (0..n)
        .map(|s| {
            let p = g.payoff(s);
            DMatrix::from_fn(m, m, |i, j| p.evaluate(grid[i], grid[j]))
        })
        .collect();
    let transition = (0..n)
        .map(|s| {
            let polys: Vec<_> = (0..n).map(|t| g.transition_a1(s, t)).collect();
            grid.iter()
                .map(|&x| polys.iter().map(|p| p.evaluate(x)).collect())
                .collect()
        })
        .collect();
    Ok(FiniteGame {
        grid,
        beta: g.beta(),
        payoff,
        transition,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FiniteSolution {
    pub value: Vec<f64>,
    /// Player 1's stationary strategy, one distribution over the grid per state.
    pub f: Vec<Vec<f64>>,
    /// Player 2's stationary strategy.
    pub g: Vec<Vec<f64>>,
    pub primal_obj: f64,
    pub dual_obj: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FiniteLpError {
    #[error("linear program solver stopped with status {0:?}")]
    Solver(SolveStatus),
}

/// Solves the finite game by one linear program:
///
/// ```text
/// minimize   Σ_s v(s)
/// subject to v(s) ≥ Σ_j r(s,i,j) g(s,j) + β Σ_t p(t; s,i) v(t)   for all s, i
///            Σ_j g(s,j) = 1,  g ≥ 0
/// ```
///
/// Player 2's strategy is `g`; player 1's is read from the multipliers of
/// the first family of constraints, normalized per state.
pub fn finite_lp_solve(fg: &FiniteGame) -> Result<FiniteSolution, FiniteLpError> {
    let n = fg.num_states();
    let m = fg.grid.len();
    let mut p = ConicProblem::new();
    let v = p.add_free(n);
    let g = p.add_nonneg(n * m);
    let slack = p.add_nonneg(n * m);
    for s in 0..n {
        p.add_objective(v, s, 1.0);
    }
    let mut rows = Vec::with_capacity(n * m);
    for s in 0..n {
        for i in 0..m {
            let mut terms = Vec::with_capacity(n + m + 1);
            for t in 0..n {
                let c = if t == s { 1.0 } else { 0.0 } - fg.beta * fg.transition[s][i][t];
                if c != 0.0 {
                    terms.push(term(v, t, c));
                }
            }
            for j in 0..m {
                let r = fg.payoff[s][(i, j)];
                if r != 0.0 {
                    terms.push(term(g, s * m + j, -r));
                }
            }
            terms.push(term(slack, s * m + i, -1.0));
            rows.push(p.add_constraint(terms, 0.0));
        }
    }
    for s in 0..n {
        p.add_constraint((0..m).map(|j| term(g, s * m + j, 1.0)).collect(), 1.0);
    }

    let opts = SolverOptions {
        max_iters: 300,
        ..SolverOptions::default()
    };
    let sol = conic::solve(&p, &opts).expect("problem built with valid terms");
    if !sol.status.is_solved() {
        return Err(FiniteLpError::Solver(sol.status));
    }
    let gv = sol.vector(g);
    let normalize = |xs: Vec<f64>| {
        let xs: Vec<f64> = xs.into_iter().map(|x| x.max(0.0)).collect();
        let total: f64 = xs.iter().sum();
        xs.into_iter().map(|x| x / total).collect::<Vec<f64>>()
    };
    let f = (0..n)
        .map(|s| normalize((0..m).map(|i| sol.dual[rows[s * m + i]]).collect()))
        .collect();
    let gs = (0..n)
        .map(|s| normalize(gv[s * m..(s + 1) * m].to_vec()))
        .collect();
    Ok(FiniteSolution {
        value: sol.vector(v).to_vec(),
        f,
        g: gs,
        primal_obj: sol.primal_obj,
        dual_obj: sol.dual_obj,
    })
}
