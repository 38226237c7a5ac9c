//! Zero-sum stochastic games with polynomial payoffs and transitions on
//! `[0, 1]` action sets.
//!
//! Player 1 chooses `a1` and maximizes, player 2 chooses `a2` and minimizes.
//! In state `s` the stage payoff to player 1 is `r(s, a1, a2)` and the next
//! state is `s'` with probability `p(s'; s, a1, a2)`. Future payoffs are
//! discounted by `β ∈ [0, 1)`.

mod finite;
mod json;
pub mod random;

pub use finite::{discretize, finite_lp_solve, FiniteGame, FiniteLpError, FiniteSolution};
pub use json::{game_from_json, game_to_json, GameParseError};

use serde::Serialize;

use crate::moments::{certify_nonneg_01, Certification};
use crate::poly::{BivariatePolynomial, Polynomial};

/// Coefficient tolerance for the identity `Σ_s' p(s'; s, ·) = 1`.
pub const ROW_SUM_TOL: f64 = 1e-12;
/// Transitions may dip this far below zero on `[0, 1]²`.
pub const NONNEG_TOL: f64 = 1e-9;
/// Side of the uniform grid used to check transition nonnegativity.
pub const NONNEG_GRID: usize = 201;

#[derive(Debug, Clone, PartialEq)]
pub struct StochasticGame {
    beta: f64,
    states: Vec<String>,
    payoff: Vec<BivariatePolynomial>,
    transition: Vec<Vec<BivariatePolynomial>>,
    single_controller: bool,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GameError {
    #[error("game needs at least one state")]
    NoStates,
    #[error("expected {expected} {what}, found {found}")]
    Shape {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("transitions depend on the action of player 2")]
    NotSingleController,
    #[error("grid needs at least 2 points, got {0}")]
    GridTooSmall(usize),
}

impl StochasticGame {
    /// Assembles a game. `payoff[s]` is `r(s, ·, ·)`, `transition[s][t]` is
    /// `p(t; s, ·, ·)`. Only shapes are checked here; see [`validate`].
    pub fn new(
        beta: f64,
        states: Vec<String>,
        payoff: Vec<BivariatePolynomial>,
        transition: Vec<Vec<BivariatePolynomial>>,
    ) -> Result<Self, GameError> {
        let n = states.len();
        if n == 0 {
            return Err(GameError::NoStates);
        }
        if payoff.len() != n {
            return Err(GameError::Shape {
                what: "payoff polynomials",
                expected: n,
                found: payoff.len(),
            });
        }
        if transition.len() != n {
            return Err(GameError::Shape {
                what: "transition rows",
                expected: n,
                found: transition.len(),
            });
        }
        if let Some(row) = transition.iter().find(|r| r.len() != n) {
            return Err(GameError::Shape {
                what: "transition polynomials per row",
                expected: n,
                found: row.len(),
            });
        }
        let single_controller = transition.iter().flatten().all(|p| p.deg2() == 0);
        Ok(Self {
            beta,
            states,
            payoff,
            transition,
            single_controller,
        })
    }

    /// Game with states named `"1"`, `"2"`, ...
    pub fn with_default_names(
        beta: f64,
        payoff: Vec<BivariatePolynomial>,
        transition: Vec<Vec<BivariatePolynomial>>,
    ) -> Result<Self, GameError> {
        let names = (1..=payoff.len()).map(|i| i.to_string()).collect();
        Self::new(beta, names, payoff, transition)
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn payoff(&self, s: usize) -> &BivariatePolynomial {
        &self.payoff[s]
    }

    pub fn payoffs(&self) -> &[BivariatePolynomial] {
        &self.payoff
    }

    /// `p(next; s, ·, ·)`
    pub fn transition(&self, s: usize, next: usize) -> &BivariatePolynomial {
        &self.transition[s][next]
    }

    pub fn transitions(&self) -> &[Vec<BivariatePolynomial>] {
        &self.transition
    }

    /// True when no transition depends on `a2`.
    pub fn single_controller(&self) -> bool {
        self.single_controller
    }

    /// `p(next; s, ·)` as a polynomial in `a1`. Meaningful for
    /// single-controller games.
    pub fn transition_a1(&self, s: usize, next: usize) -> Polynomial {
        self.transition[s][next].a1_part()
    }

    /// Stage game `r(s, ·, ·) + β Σ_t α_t p(t; s, ·, ·)`.
    pub fn stage_game(&self, s: usize, alpha: &[f64]) -> BivariatePolynomial {
        let mut terms: Vec<(f64, &BivariatePolynomial)> = vec![(1.0, &self.payoff[s])];
        for (t, p) in self.transition[s].iter().enumerate() {
            terms.push((self.beta * alpha[t], p));
        }
        BivariatePolynomial::combine(&terms)
    }

    /// Bound on `max |r|` over all states and actions.
    pub fn payoff_bound(&self) -> f64 {
        self.payoff
            .iter()
            .map(|p| p.abs_bound_unit())
            .fold(0.0, f64::max)
    }
}

/// One failed check of [`validate`].
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Issue {
    DiscountOutOfRange { beta: f64 },
    NonFiniteCoefficient { location: String },
    RowSumNotOne { state: usize, max_deviation: f64 },
    NegativeTransition { state: usize, next: usize, a1: f64, a2: f64, value: f64 },
    CertificationFailed { state: usize, next: usize, reason: String },
}

impl std::fmt::Display for Issue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Issue::DiscountOutOfRange { beta } => write!(f, "discount {beta} outside [0, 1)"),
            Issue::NonFiniteCoefficient { location } => write!(f, "non-finite coefficient in {location}"),
            Issue::RowSumNotOne {
                state,
                max_deviation,
            } => write!(
                f,
                "transitions out of state {state} do not sum to 1 (max coefficient deviation {max_deviation:e})"
            ),
            Issue::NegativeTransition {
                state,
                next,
                a1,
                a2,
                value,
            } => write!(
                f,
                "transition {state} -> {next} is {value:e} at a1 = {a1}, a2 = {a2}"
            ),
            Issue::CertificationFailed {
                state,
                next,
                reason,
            } => write!(f, "could not certify transition {state} -> {next} nonnegative: {reason}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
    pub single_controller: bool,
}

impl ValidationReport {
    pub fn accepted(&self) -> bool {
        self.issues.is_empty()
    }
}

/// Checks the discount range, that transitions out of each state sum to
/// one identically, and that every transition is nonnegative on `[0, 1]²`.
///
/// Nonnegativity is checked on a grid; for single-controller games it is
/// additionally certified by a sum-of-squares certificate.
pub fn validate(g: &StochasticGame) -> ValidationReport {
    let mut issues = Vec::new();
    if !(0.0..1.0).contains(&g.beta) {
        issues.push(Issue::DiscountOutOfRange { beta: g.beta });
    }
    for (s, p) in g.payoff.iter().enumerate() {
        if !finite(p) {
            issues.push(Issue::NonFiniteCoefficient {
                location: format!("payoff of state {s}"),
            });
        }
    }
    for (s, row) in g.transition.iter().enumerate() {
        if let Some(t) = row.iter().position(|p| !finite(p)) {
            issues.push(Issue::NonFiniteCoefficient {
                location: format!("transition {s} -> {t}"),
            });
            continue;
        }
        let terms: Vec<(f64, &BivariatePolynomial)> = row.iter().map(|p| (1.0, p)).collect();
        let sum = BivariatePolynomial::combine(&terms);
        let rows = sum.to_rows();
        let mut dev = 0.0f64;
        for (i, r) in rows.iter().enumerate() {
            for (j, c) in r.iter().enumerate() {
                let target = if i == 0 && j == 0 { 1.0 } else { 0.0 };
                dev = dev.max((c - target).abs());
            }
        }
        if dev > ROW_SUM_TOL {
            issues.push(Issue::RowSumNotOne {
                state: s,
                max_deviation: dev,
            });
        }
        for (t, p) in row.iter().enumerate() {
            let (v, a1, a2) = p.grid_min(NONNEG_GRID);
            if v < -NONNEG_TOL {
                issues.push(Issue::NegativeTransition {
                    state: s,
                    next: t,
                    a1,
                    a2,
                    value: v,
                });
                continue;
            }
            if g.single_controller {
                match certify_nonneg_01(&p.a1_part()) {
                    Ok(Certification::Certificate(_)) => {}
                    Ok(Certification::Infeasible { witness }) => {
                        issues.push(Issue::NegativeTransition {
                            state: s,
                            next: t,
                            a1: witness,
                            a2: 0.0,
                            value: p.a1_part().evaluate(witness),
                        })
                    }
                    Err(e) => issues.push(Issue::CertificationFailed {
                        state: s,
                        next: t,
                        reason: e.to_string(),
                    }),
                }
            }
        }
    }
    ValidationReport {
        issues,
        single_controller: g.single_controller,
    }
}

fn finite(p: &BivariatePolynomial) -> bool {
    p.to_rows().iter().flatten().all(|c| c.is_finite())
}

/// The two-state guessing game used throughout the tests: in state 1 the
/// payoff is `(a1 - a2)²`, in state 2 it is `-(a1 - a2)²`; player 1's action
/// alone steers the transitions. Discount `0.5`.
pub fn guessing_game() -> StochasticGame {
    let sq = BivariatePolynomial::from_rows(&[vec![0.0, 0.0, 1.0], vec![0.0, -2.0, 0.0], vec![1.0]]);
    let neg = BivariatePolynomial::combine(&[(-1.0, &sq)]);
    let a1 = |c: &[f64]| BivariatePolynomial::from_a1(&Polynomial::new(c.to_vec()));
    StochasticGame::new(
        0.5,
        vec!["1".into(), "2".into()],
        vec![sq, neg],
        vec![
            vec![a1(&[0.0, 1.0]), a1(&[1.0, -1.0])],
            vec![a1(&[1.0, 0.0, -1.0]), a1(&[0.0, 0.0, 1.0])],
        ],
    )
    .expect("well-formed")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn a1(c: &[f64]) -> BivariatePolynomial {
        BivariatePolynomial::from_a1(&Polynomial::new(c.to_vec()))
    }

    #[test]
    fn guessing_game_is_accepted() {
        let g = guessing_game();
        let r = validate(&g);
        assert!(r.accepted(), "{:?}", r.issues);
        assert!(r.single_controller);
    }

    #[test]
    fn negative_transition_is_rejected() {
        let g = StochasticGame::with_default_names(
            0.5,
            vec![BivariatePolynomial::zero(), BivariatePolynomial::zero()],
            vec![
                vec![a1(&[0.0, 2.0]), a1(&[1.0, -2.0])],
                vec![a1(&[1.0]), a1(&[0.0])],
            ],
        )
        .unwrap();
        let r = validate(&g);
        assert!(!r.accepted());
        assert!(r.issues.iter().any(|i| matches!(
            i,
            Issue::NegativeTransition { state: 0, next: 1, a1, .. } if (*a1 - 1.0).abs() < 1e-12
        )));
    }

    #[test]
    fn discount_one_is_rejected() {
        let g = StochasticGame::with_default_names(1.0, vec![BivariatePolynomial::zero()], vec![vec![a1(&[1.0])]])
            .unwrap();
        assert_eq!(validate(&g).issues, vec![Issue::DiscountOutOfRange { beta: 1.0 }]);
    }

    #[test]
    fn row_sum_is_checked() {
        let g = StochasticGame::with_default_names(0.5, vec![BivariatePolynomial::zero()], vec![vec![a1(&[1.0, 0.1])]])
            .unwrap();
        assert!(matches!(validate(&g).issues[0], Issue::RowSumNotOne { state: 0, .. }));
    }

    #[test]
    fn two_controller_transitions_are_detected() {
        let p = BivariatePolynomial::from_rows(&[vec![0.0, 1.0]]);
        let q = BivariatePolynomial::from_rows(&[vec![1.0, -1.0]]);
        let g = StochasticGame::with_default_names(
            0.5,
            vec![BivariatePolynomial::zero(), BivariatePolynomial::zero()],
            vec![vec![p.clone(), q.clone()], vec![p, q]],
        )
        .unwrap();
        assert!(!g.single_controller());
        assert!(validate(&g).accepted());
    }

    #[test]
    fn shape_errors() {
        assert_eq!(
            StochasticGame::with_default_names(0.5, vec![], vec![]),
            Err(GameError::NoStates)
        );
        assert!(matches!(
            StochasticGame::with_default_names(0.5, vec![BivariatePolynomial::zero()], vec![vec![]]),
            Err(GameError::Shape { .. })
        ));
    }

    #[test]
    fn stage_game_adds_discounted_continuation() {
        let g = guessing_game();
        let st = g.stage_game(0, &[1.0, 3.0]);
        // (a1-a2)^2 + 0.5 (a1 + 3 (1 - a1)) at a1 = 0.2, a2 = 0.7
        let expect = 0.25 + 0.5 * (0.2 + 3.0 * 0.8);
        assert!((st.evaluate(0.2, 0.7) - expect).abs() < 1e-14);
    }
}
