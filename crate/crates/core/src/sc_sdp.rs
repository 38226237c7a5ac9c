//! Equilibria of single-controller polynomial stochastic games by a single
//! semidefinite program.
//!
//! Player 2's side is the program
//!
//! ```text
//! minimize   Σ_s v(s)
//! subject to v(s) - r(s, a1, ν(s)) - β Σ_t p(t; s, a1) v(t) ≥ 0   on [0, 1], every s
//!            ν̄(s) a probability moment sequence on [0, 1]
//! ```
//!
//! where the polynomial inequality in `a1` is imposed through an SOS
//! certificate `(Z_s, W_s)` and each `ν̄(s)` is constrained by its Hankel and
//! localizing matrices. The multipliers of the coefficient identities form
//! moment sequences `ξ̄(s)` of player 1's (unnormalized) strategy; the
//! multipliers of `ν_0(s) = 1` are the dual values `α(s)`.

use serde::Serialize;

use crate::conic::{
    self, term, BlockId, ConicProblem, ConicSolution, SolveStatus, SolverOptions, Term,
};
use crate::moments::{MomentBlocks, MomentSequence, SosBlocks, SosCertificate};
use crate::poly::{BivariatePolynomial, Polynomial};
use crate::stochgame::StochasticGame;

/// Smallest admissible `ξ_0(s)` for normalizing player 1's strategy.
pub const XI_MASS_MIN: f64 = 1e-9;
/// Threshold on both complementary-slackness residuals.
pub const SLACKNESS_TOL: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SpError {
    #[error("transitions depend on the action of player 2; the SDP needs single-controller games")]
    NotSingleController,
    #[error("conic solver stopped with status {status:?} (primal residual {primal_res:e}, dual residual {dual_res:e}, gap {gap:e})")]
    Solver {
        status: SolveStatus,
        primal_res: f64,
        dual_res: f64,
        gap: f64,
    },
    #[error("player 1's dual measure in state {state} has mass {mass:e}; cannot normalize")]
    XiZeroMass { state: usize, mass: f64 },
}

/// Where one state's pieces live inside the conic problem.
#[derive(Debug, Clone)]
pub struct StateLayout {
    /// Degree of the certified polynomial in `a1`, padded to even.
    pub degree: usize,
    pub sos: SosBlocks,
    pub nu: MomentBlocks,
    /// Meaningful length of `ν̄(s)`: `deg_{a2} r(s) + 1`.
    pub nu_len: usize,
    /// Constraint index of coefficient `k` of the state's identity.
    pub identity_rows: Vec<usize>,
    /// Constraint index of `ν_0(s) = 1`.
    pub mass_row: usize,
}

#[derive(Debug, Clone)]
pub struct SpProblemLayout {
    pub value: BlockId,
    pub states: Vec<StateLayout>,
}

/// Degree bookkeeping shared by the primal and dual builders:
/// `(n, k)` with `2n ≥ max(deg_{a1} r, deg p)` and `2k ≥ deg_{a2} r`.
fn half_degrees(g: &StochasticGame, s: usize) -> (usize, usize) {
    let r = g.payoff(s);
    let d = (0..g.num_states())
        .map(|t| g.transition_a1(s, t).degree())
        .fold(r.deg1(), usize::max);
    (d.div_ceil(2), r.deg2().div_ceil(2))
}

/// Builds the program for a single-controller game.
pub fn build_sp(g: &StochasticGame) -> Result<(ConicProblem, SpProblemLayout), SpError> {
    if !g.single_controller() {
        return Err(SpError::NotSingleController);
    }
    let ns = g.num_states();
    let beta = g.beta();
    let mut p = ConicProblem::new();
    let value = p.add_free(ns);
    for s in 0..ns {
        p.add_objective(value, s, 1.0);
    }
    let mut states = Vec::with_capacity(ns);
    for s in 0..ns {
        let (n, k) = half_degrees(g, s);
        let sos = SosBlocks::add(&mut p, n);
        let nu = MomentBlocks::add(&mut p, k);
        let r = g.payoff(s);
        let trans: Vec<Polynomial> = (0..ns).map(|t| g.transition_a1(s, t)).collect();
        let mut identity_rows = Vec::with_capacity(2 * n + 1);
        for c in 0..=2 * n {
            // H*(...)_c - [c = 0] v(s) + β Σ_t p_c(t) v(t) + Σ_j r_cj ν_j = 0
            let mut terms: Vec<Term> = sos.coefficient_terms(c);
            for (t, pt) in trans.iter().enumerate() {
                let mut coef = beta * pt.coeff(c);
                if c == 0 && t == s {
                    coef -= 1.0;
                }
                if coef != 0.0 {
                    terms.push(term(value, t, coef));
                }
            }
            for j in 0..nu.len {
                let rc = r.coeff(c, j);
                if rc != 0.0 {
                    terms.push(term(nu.values, j, rc));
                }
            }
            identity_rows.push(p.add_constraint(terms, 0.0));
        }
        let mass_row = p.add_constraint(vec![term(nu.values, 0, 1.0)], 1.0);
        states.push(StateLayout {
            degree: 2 * n,
            sos,
            nu,
            nu_len: r.deg2() + 1,
            identity_rows,
            mass_row,
        });
    }
    Ok((p, SpProblemLayout { value, states }))
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[derive(Default)]
pub struct SpOptions {
    pub solver: SolverOptions,
    /// Also build and solve the dual program directly and cross-check.
    pub solve_dual_explicitly: bool,
}


/// Result of the explicitly built dual program.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExplicitDual {
    pub alpha: Vec<f64>,
    pub xi_bar: Vec<MomentSequence>,
    pub d_star: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumSolution {
    pub v_star: Vec<f64>,
    /// Player 2's strategy per state, `ν_0 = 1`.
    pub nu_bar: Vec<MomentSequence>,
    /// Player 1's unnormalized dual measure per state.
    pub xi_bar: Vec<MomentSequence>,
    /// Player 1's strategy per state, `ξ̄ / ξ_0`.
    pub mu_bar: Vec<MomentSequence>,
    pub alpha_star: Vec<f64>,
    pub certificates: Vec<SosCertificate>,
    pub p_star: f64,
    pub d_star: f64,
    pub iterations: usize,
    /// `Σ_s ∫ (δ(s, t) - β p(t; s, a1)) dξ(s) - 1` for each `t`.
    pub flow_residual: Vec<f64>,
    pub explicit_dual: Option<ExplicitDual>,
}

impl EquilibriumSolution {
    /// `|p* - d*| / (1 + |p*|)`
    pub fn relative_gap(&self) -> f64 {
        (self.p_star - self.d_star).abs() / (1.0 + self.p_star.abs())
    }
}

fn solver_error(sol: &ConicSolution) -> SpError {
    SpError::Solver {
        status: sol.status,
        primal_res: sol.primal_res,
        dual_res: sol.dual_res,
        gap: sol.relative_gap(),
    }
}

/// Solves the program and reads off both players' strategies.
pub fn solve_equilibrium(g: &StochasticGame, opts: &SpOptions) -> Result<EquilibriumSolution, SpError> {
    let (problem, layout) = build_sp(g)?;
    let sol = conic::solve(&problem, &opts.solver).expect("problem built with valid terms");
    if !sol.status.is_solved() {
        return Err(solver_error(&sol));
    }
    let ns = g.num_states();
    let v_star = sol.vector(layout.value).to_vec();
    let mut nu_bar = Vec::with_capacity(ns);
    let mut xi_bar = Vec::with_capacity(ns);
    let mut mu_bar = Vec::with_capacity(ns);
    let mut alpha_star = Vec::with_capacity(ns);
    let mut certificates = Vec::with_capacity(ns);
    for (s, st) in layout.states.iter().enumerate() {
        nu_bar.push(MomentSequence::new(sol.vector(st.nu.values)[..st.nu_len].to_vec()));
        let xi: Vec<f64> = st.identity_rows.iter().map(|&r| -sol.dual[r]).collect();
        if !(xi[0] >= XI_MASS_MIN) {
            return Err(SpError::XiZeroMass { state: s, mass: xi[0] });
        }
        mu_bar.push(MomentSequence::new(xi.iter().map(|x| x / xi[0]).collect()));
        xi_bar.push(MomentSequence::new(xi));
        alpha_star.push(sol.dual[st.mass_row]);
        certificates.push(st.sos.extract(&sol));
    }
    let flow_residual = flow_residual(g, &xi_bar);
    let explicit_dual = if opts.solve_dual_explicitly {
        Some(solve_dual(g, &opts.solver)?)
    } else {
        None
    };
    Ok(EquilibriumSolution {
        v_star,
        nu_bar,
        xi_bar,
        mu_bar,
        alpha_star,
        certificates,
        p_star: sol.primal_obj,
        d_star: sol.dual_obj,
        iterations: sol.iterations,
        flow_residual,
        explicit_dual,
    })
}

/// `Σ_s ∫ (δ(s, t) - β p(t; s, a1)) dξ(s) - 1` for every target state `t`.
pub fn flow_residual(g: &StochasticGame, xi_bar: &[MomentSequence]) -> Vec<f64> {
    let ns = g.num_states();
    (0..ns)
        .map(|t| {
            let mut total = -1.0;
            for (s, xi) in xi_bar.iter().enumerate() {
                let x = xi.values();
                if s == t {
                    total += x[0];
                }
                total -= g.beta() * pair(&g.transition_a1(s, t), x);
            }
            total
        })
        .collect()
}

/// `∫ p dμ` from the moments of `μ`.
fn pair(p: &Polynomial, m: &[f64]) -> f64 {
    p.coeffs()
        .iter()
        .enumerate()
        .map(|(i, c)| c * m.get(i).copied().unwrap_or(0.0))
        .sum()
}

/// Builds the dual program directly:
///
/// ```text
/// maximize   Σ_s α(s)
/// subject to Σ_ij r_ij(s) ξ_i(s) a2^j - α(s) ≥ 0   on [0, 1], every s
///            ξ̄(s) in the moment cone of [0, 1]
///            Σ_s ∫ (δ(s, t) - β p(t; s, a1)) dξ(s) = 1   every t
/// ```
pub fn build_sd(g: &StochasticGame) -> Result<(ConicProblem, BlockId, Vec<MomentBlocks>), SpError> {
    if !g.single_controller() {
        return Err(SpError::NotSingleController);
    }
    let ns = g.num_states();
    let mut p = ConicProblem::new();
    let alpha = p.add_free(ns);
    for s in 0..ns {
        p.add_objective(alpha, s, -1.0);
    }
    let mut xis = Vec::with_capacity(ns);
    for s in 0..ns {
        let (n, k) = half_degrees(g, s);
        let xi = MomentBlocks::add(&mut p, n);
        let cert = SosBlocks::add(&mut p, k);
        let r = g.payoff(s);
        for j in 0..=2 * k {
            let mut terms = cert.coefficient_terms(j);
            for i in 0..xi.len {
                let c = r.coeff(i, j);
                if c != 0.0 {
                    terms.push(term(xi.values, i, -c));
                }
            }
            if j == 0 {
                terms.push(term(alpha, s, 1.0));
            }
            p.add_constraint(terms, 0.0);
        }
        xis.push(xi);
    }
    for t in 0..ns {
        let mut terms = Vec::new();
        for (s, xi) in xis.iter().enumerate() {
            let pt = g.transition_a1(s, t);
            for i in 0..xi.len {
                let mut c = -g.beta() * pt.coeff(i);
                if i == 0 && s == t {
                    c += 1.0;
                }
                if c != 0.0 {
                    terms.push(term(xi.values, i, c));
                }
            }
        }
        p.add_constraint(terms, 1.0);
    }
    Ok((p, alpha, xis))
}

/// Solves the explicitly built dual program.
pub fn solve_dual(g: &StochasticGame, opts: &SolverOptions) -> Result<ExplicitDual, SpError> {
    let (problem, alpha, xis) = build_sd(g)?;
    let sol = conic::solve(&problem, opts).expect("problem built with valid terms");
    if !sol.status.is_solved() {
        return Err(solver_error(&sol));
    }
    Ok(ExplicitDual {
        alpha: sol.vector(alpha).to_vec(),
        xi_bar: xis
            .iter()
            .map(|x| MomentSequence::new(sol.vector(x.values).to_vec()))
            .collect(),
        d_star: -sol.primal_obj,
        iterations: sol.iterations,
    })
}

/// Residuals of the two complementary-slackness identities per state:
///
/// ```text
/// res1[s] = | v(s) ξ_0(s) - ∫∫ r dξ dν - β Σ_t v(t) ∫ p(t; s, ·) dξ(s) |
/// res2[s] = | α(s) ν_0(s) - ∫∫ r dξ dν |
/// ```
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Slackness {
    pub res1: Vec<f64>,
    pub res2: Vec<f64>,
}

impl Slackness {
    pub fn passes(&self) -> bool {
        self.res1.iter().chain(&self.res2).all(|r| *r <= SLACKNESS_TOL)
    }
}

pub fn check_complementary_slackness(g: &StochasticGame, sol: &EquilibriumSolution) -> Slackness {
    let ns = g.num_states();
    let mut res1 = Vec::with_capacity(ns);
    let mut res2 = Vec::with_capacity(ns);
    for s in 0..ns {
        let xi = sol.xi_bar[s].values();
        let nu = sol.nu_bar[s].values();
        let rr = g.payoff(s).pair_both(xi, nu);
        let cont: f64 = (0..ns)
            .map(|t| sol.v_star[t] * pair(&g.transition_a1(s, t), xi))
            .sum();
        res1.push((sol.v_star[s] * xi[0] - rr - g.beta() * cont).abs());
        res2.push((sol.alpha_star[s] * nu[0] - rr).abs());
    }
    Slackness { res1, res2 }
}

/// `∫∫ r dμ dν` for a payoff given as a bivariate polynomial.
pub fn expected_payoff(r: &BivariatePolynomial, mu: &[f64], nu: &[f64]) -> f64 {
    r.pair_both(mu, nu)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments::moment_membership_01;
    use crate::stochgame::guessing_game;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    /// Exact relations satisfied by the guessing-game equilibrium: player 1
    /// in state 1 mixes the endpoints with weight `q` on 1, player 2 plays
    /// `q` there; in state 2 player 1 plays 1/2 and player 2 mixes the
    /// endpoints with weight `q` on 1.
    fn guessing_fixed_point() -> (f64, f64, f64) {
        let beta: f64 = 0.5;
        let (mut v1, mut v2) = (0.0, 0.0);
        for _ in 0..200 {
            let q = (1.0 + beta * (v1 - v2)) / 2.0;
            let q = q.clamp(0.0, 1.0);
            let n1 = q * (1.0 - q) + beta * (q * v1 + (1.0 - q) * v2);
            let n2 = -0.25 + beta * (0.75 * v1 + 0.25 * v2);
            v1 = n1;
            v2 = n2;
        }
        let q = (1.0 + beta * (v1 - v2)) / 2.0;
        (v1, v2, q)
    }

    #[test]
    fn guessing_game_layout() {
        let (_, layout) = build_sp(&guessing_game()).unwrap();
        for st in &layout.states {
            assert_eq!(st.degree, 2);
            assert_eq!(st.sos.n, 1);
            assert_eq!(st.nu.len, 3);
            assert_eq!(st.nu_len, 3);
            assert_eq!(st.identity_rows.len(), 3);
        }
    }

    #[test]
    fn guessing_game_equilibrium() {
        let g = guessing_game();
        let sol = solve_equilibrium(&g, &SpOptions::default()).unwrap();
        let (v1, v2, q) = guessing_fixed_point();
        assert!(close(&sol.v_star, &[v1, v2], 1e-6), "{:?} vs {:?}", sol.v_star, [v1, v2]);
        assert!(close(sol.mu_bar[0].values(), &[1.0, q, q], 1e-5), "{:?}", sol.mu_bar[0]);
        assert!(close(sol.mu_bar[1].values(), &[1.0, 0.5, 0.25], 1e-5), "{:?}", sol.mu_bar[1]);
        assert!(close(sol.nu_bar[0].values(), &[1.0, q, q * q], 1e-5), "{:?}", sol.nu_bar[0]);
        assert!(close(sol.nu_bar[1].values(), &[1.0, q, q], 1e-5), "{:?}", sol.nu_bar[1]);
        assert!(sol.relative_gap() <= 1e-6);
        for r in &sol.flow_residual {
            assert!(r.abs() <= 1e-6);
        }
        let cs = check_complementary_slackness(&g, &sol);
        assert!(cs.passes(), "{cs:?}");
        for m in sol.mu_bar.iter().chain(&sol.nu_bar) {
            assert!(moment_membership_01(m).is_member());
        }
    }

    #[test]
    fn explicit_dual_agrees() {
        let g = guessing_game();
        let opts = SpOptions {
            solve_dual_explicitly: true,
            ..SpOptions::default()
        };
        let sol = solve_equilibrium(&g, &opts).unwrap();
        let d = sol.explicit_dual.as_ref().unwrap();
        assert!((d.d_star - sol.p_star).abs() <= 1e-6 * (1.0 + sol.p_star.abs()));
        for s in 0..2 {
            let mu: Vec<f64> = d.xi_bar[s].values().iter().map(|x| x / d.xi_bar[s].values()[0]).collect();
            assert!(close(&mu, sol.mu_bar[s].values(), 1e-4), "{mu:?} vs {:?}", sol.mu_bar[s]);
        }
        for r in flow_residual(&g, &d.xi_bar) {
            assert!(r.abs() <= 1e-6);
        }
    }

    #[test]
    fn constant_payoff_geometric_value() {
        let g = StochasticGame::with_default_names(
            0.6,
            vec![BivariatePolynomial::constant(2.0)],
            vec![vec![BivariatePolynomial::constant(1.0)]],
        )
        .unwrap();
        let sol = solve_equilibrium(&g, &SpOptions::default()).unwrap();
        assert!((sol.v_star[0] - 5.0).abs() < 1e-6);
    }

    #[test]
    fn perturbed_value_breaks_slackness() {
        let g = guessing_game();
        let mut sol = solve_equilibrium(&g, &SpOptions::default()).unwrap();
        sol.v_star[0] += 0.1;
        let cs = check_complementary_slackness(&g, &sol);
        // v(1) also enters through the continuation term β v(1) ∫ a1 dξ(1)
        let xi = sol.xi_bar[0].values();
        assert!((cs.res1[0] - 0.1 * (xi[0] - 0.5 * xi[1])).abs() < 1e-5);
        assert!(cs.res1[0] > 1e-3);
    }

    #[test]
    fn static_game_slackness() {
        // β = 0, r = (a1 - a2)^2: α* = 1/4 with ν_0 = 1
        let r = BivariatePolynomial::from_rows(&[vec![0.0, 0.0, 1.0], vec![0.0, -2.0], vec![1.0]]);
        let g = StochasticGame::with_default_names(0.0, vec![r], vec![vec![BivariatePolynomial::constant(1.0)]])
            .unwrap();
        let sol = solve_equilibrium(&g, &SpOptions::default()).unwrap();
        assert!((sol.v_star[0] - 0.25).abs() < 1e-7);
        assert!((sol.alpha_star[0] - 0.25).abs() < 1e-7);
        let cs = check_complementary_slackness(&g, &sol);
        assert!(cs.res2[0] <= 1e-8, "{cs:?}");
    }

    #[test]
    fn rejects_two_controller_games() {
        let p = BivariatePolynomial::from_rows(&[vec![0.0, 1.0]]);
        let q = BivariatePolynomial::from_rows(&[vec![1.0, -1.0]]);
        let g = StochasticGame::with_default_names(
            0.5,
            vec![BivariatePolynomial::zero(), BivariatePolynomial::zero()],
            vec![vec![p.clone(), q.clone()], vec![p, q]],
        )
        .unwrap();
        assert!(matches!(build_sp(&g), Err(SpError::NotSingleController)));
    }
}
