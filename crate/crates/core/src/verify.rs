//! Independent checks of a claimed stationary equilibrium: the Bellman
//! identity, one-shot best-response gaps for both players, and a seeded
//! Monte Carlo estimate of the discounted payoff.
//!
//! Everything here works from the recovered atomic strategies and the game
//! polynomials alone, not from solver internals.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::moments::MomentSequence;
use crate::poly::{BivariatePolynomial, Polynomial, Sense};
use crate::recover::{recover_measure, DiscreteMeasure, RecoverError};
use crate::stochgame::StochasticGame;

pub const BELLMAN_TOL: f64 = 1e-4;
pub const GAP_TOL: f64 = 1e-4;
pub const DEFAULT_GRID: usize = 2001;
/// Target bound on the truncation bias of a rollout.
pub const DEFAULT_ROLLOUT_TOL: f64 = 1e-4;
pub const RNG_ALGORITHM: &str = "ChaCha8 (rand_chacha); stream = episode * states + start state";

/// Value vector and per-state atomic strategies for both players.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClaimedEquilibrium {
    pub value: Vec<f64>,
    pub player1: Vec<DiscreteMeasure>,
    pub player2: Vec<DiscreteMeasure>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("state {state}, player {player}: {source}")]
pub struct StrategyRecoveryError {
    pub state: usize,
    pub player: u8,
    pub source: RecoverError,
}

/// Clamps every entry into `[0, 1]` and recovers an atomic measure.
pub fn recover_clamped(m: &MomentSequence, rank_tol: f64) -> Result<DiscreteMeasure, RecoverError> {
    let v = m.values().iter().map(|x| x.clamp(0.0, 1.0)).collect();
    recover_measure(&MomentSequence::new(v), rank_tol)
}

impl ClaimedEquilibrium {
    /// Recovers both players' strategies from per-state moment sequences.
    pub fn from_moments(
        value: Vec<f64>,
        mu: &[MomentSequence],
        nu: &[MomentSequence],
        rank_tol: f64,
    ) -> Result<Self, StrategyRecoveryError> {
        let rec = |ms: &[MomentSequence], player: u8| -> Result<Vec<DiscreteMeasure>, StrategyRecoveryError> {
            ms.iter()
                .enumerate()
                .map(|(state, m)| {
                    recover_clamped(m, rank_tol).map_err(|source| StrategyRecoveryError {
                        state,
                        player,
                        source,
                    })
                })
                .collect()
        };
        Ok(Self {
            value,
            player1: rec(mu, 1)?,
            player2: rec(nu, 2)?,
        })
    }
}

/// `∫∫ p dμ dν` over two atomic measures.
pub fn integrate_both(p: &BivariatePolynomial, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> f64 {
    let mut total = 0.0;
    for (a, wa) in mu.atoms().iter().zip(mu.weights()) {
        for (b, wb) in nu.atoms().iter().zip(nu.weights()) {
            total += wa * wb * p.evaluate(*a, *b);
        }
    }
    total
}

/// `∫ p(·, a2) dν(a2)` as a polynomial in `a1`.
fn average_over_a2(p: &BivariatePolynomial, nu: &DiscreteMeasure) -> Polynomial {
    nu.atoms()
        .iter()
        .zip(nu.weights())
        .fold(Polynomial::zero(), |acc, (b, w)| acc.add(&p.at_a2(*b).scale(*w)))
}

/// `∫ p(a1, ·) dμ(a1)` as a polynomial in `a2`.
fn average_over_a1(p: &BivariatePolynomial, mu: &DiscreteMeasure) -> Polynomial {
    mu.atoms()
        .iter()
        .zip(mu.weights())
        .fold(Polynomial::zero(), |acc, (a, w)| acc.add(&p.at_a1(*a).scale(*w)))
}

/// `|v(s) - r(s, μ(s), ν(s)) - β Σ_t P_st v(t)|` per state, with
/// `P_st = ∫∫ p(t; s, ·, ·) dμ(s) dν(s)`.
pub fn bellman_residual(g: &StochasticGame, eq: &ClaimedEquilibrium) -> Vec<f64> {
    (0..g.num_states())
        .map(|s| {
            let (mu, nu) = (&eq.player1[s], &eq.player2[s]);
            let r = integrate_both(g.payoff(s), mu, nu);
            let cont: f64 = (0..g.num_states())
                .map(|t| integrate_both(g.transition(s, t), mu, nu) * eq.value[t])
                .sum();
            (eq.value[s] - r - g.beta() * cont).abs()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gaps {
    /// `max(0, max_a1 q(s, a1) - v(s))`
    pub p1_gap: Vec<f64>,
    /// `max(0, G(μ, ν) - min_a2 G(μ, a2))`
    pub p2_gap: Vec<f64>,
    /// Player 1's best pure deviation per state.
    pub p1_best: Vec<f64>,
    /// Player 2's best pure deviation per state.
    pub p2_best: Vec<f64>,
}

/// Best pure one-shot deviations against the stage game
/// `G(a1, a2) = r(s, a1, a2) + β Σ_t v(t) p(t; s, a1, a2)`.
///
/// Player 1's deviation payoff `q(a1) = ∫ G(a1, ·) dν(s)` is compared with
/// `v(s)`; player 2's `∫ G(·, a2) dμ(s)` with the realized `G(μ, ν)`. Both
/// are scanned on a uniform grid of `grid` points and refined by the exact
/// extremum of the polynomial.
pub fn best_response_gap(g: &StochasticGame, eq: &ClaimedEquilibrium, grid: usize) -> Gaps {
    let n = g.num_states();
    let mut out = Gaps {
        p1_gap: Vec::with_capacity(n),
        p2_gap: Vec::with_capacity(n),
        p1_best: Vec::with_capacity(n),
        p2_best: Vec::with_capacity(n),
    };
    for s in 0..n {
        let stage = g.stage_game(s, &eq.value);
        let (mu, nu) = (&eq.player1[s], &eq.player2[s]);

        let q = average_over_a2(&stage, nu);
        let (best, arg) = scan(&q, grid, Sense::Max);
        out.p1_gap.push((best - eq.value[s]).max(0.0));
        out.p1_best.push(arg);

        let h = average_over_a1(&stage, mu);
        let realized = integrate_both(&stage, mu, nu);
        let (worst, arg) = scan(&h, grid, Sense::Min);
        out.p2_gap.push((realized - worst).max(0.0));
        out.p2_best.push(arg);
    }
    out
}

fn scan(p: &Polynomial, grid: usize, sense: Sense) -> (f64, f64) {
    let mut best = p.extremum_on_unit_interval(sense);
    let m = grid.max(2);
    for k in 0..m {
        let x = k as f64 / (m - 1) as f64;
        let v = p.evaluate(x);
        let better = match sense {
            Sense::Max => v > best.0,
            Sense::Min => v < best.0,
        };
        if better {
            best = (v, x);
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RolloutStats {
    pub mean: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutReport {
    /// Indexed by start state.
    pub per_state: Vec<RolloutStats>,
    pub episodes: usize,
    pub horizon: usize,
    pub seed: u64,
    pub rng: String,
    /// Upper bound on `|E[truncated sum] - E[infinite sum]|`.
    pub truncation_bias: f64,
}

/// Smallest horizon `H` with `β^H max|r| / (1 - β) ≤ tol`.
pub fn default_horizon(beta: f64, max_r: f64, tol: f64) -> usize {
    if beta <= 0.0 || max_r <= 0.0 {
        return 1;
    }
    let h = ((tol * (1.0 - beta) / max_r).ln() / beta.ln()).ceil();
    if h.is_finite() && h >= 1.0 {
        h as usize
    } else {
        1
    }
}

fn sample(rng: &mut ChaCha8Rng, weights: impl Iterator<Item = f64> + Clone) -> usize {
    let total: f64 = weights.clone().map(|w| w.max(0.0)).sum();
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (i, w) in weights.enumerate() {
        let w = w.max(0.0);
        if w > 0.0 {
            last = i;
        }
        acc += w;
        if u < acc {
            return i;
        }
    }
    last
}

/// Simulates `episodes` truncated discounted payoff sums from every start
/// state. Episode `e` from state `s` draws from its own ChaCha8 stream, so
/// the result does not depend on how episodes are scheduled.
pub fn rollout(
    g: &StochasticGame,
    eq: &ClaimedEquilibrium,
    seed: u64,
    episodes: usize,
    horizon: usize,
) -> RolloutReport {
    let n = g.num_states();
    let beta = g.beta();
    let per_state = (0..n)
        .map(|s0| {
            let returns: Vec<f64> = (0..episodes)
                .into_par_iter()
                .map(|e| {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream((e as u64) * n as u64 + s0 as u64);
                    let mut s = s0;
                    let mut disc = 1.0;
                    let mut total = 0.0;
                    for _ in 0..horizon {
                        let (mu, nu) = (&eq.player1[s], &eq.player2[s]);
                        let a1 = mu.atoms()[sample(&mut rng, mu.weights().iter().copied())];
                        let a2 = nu.atoms()[sample(&mut rng, nu.weights().iter().copied())];
                        total += disc * g.payoff(s).evaluate(a1, a2);
                        disc *= beta;
                        s = sample(&mut rng, (0..n).map(|t| g.transition(s, t).evaluate(a1, a2)));
                    }
                    total
                })
                .collect();
            let k = returns.len().max(1) as f64;
            let mean = returns.iter().sum::<f64>() / k;
            let var = if returns.len() > 1 {
                returns.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0)
            } else {
                0.0
            };
            RolloutStats {
                mean,
                stderr: (var / k).sqrt(),
            }
        })
        .collect();
    let max_r = g.payoff_bound();
    RolloutReport {
        per_state,
        episodes,
        horizon,
        seed,
        rng: RNG_ALGORITHM.to_string(),
        truncation_bias: if beta < 1.0 {
            beta.powi(horizon as i32) * max_r / (1.0 - beta)
        } else {
            f64::INFINITY
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    pub grid: usize,
    pub seed: u64,
    /// Zero skips the rollout.
    pub episodes: usize,
    pub rollout_tol: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            grid: DEFAULT_GRID,
            seed: 0,
            episodes: 0,
            rollout_tol: DEFAULT_ROLLOUT_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub bellman_res: Vec<f64>,
    pub p1_gap: Vec<f64>,
    pub p2_gap: Vec<f64>,
    pub rollout: Option<RolloutReport>,
}

impl VerificationReport {
    pub fn passes(&self) -> bool {
        self.bellman_res.iter().all(|r| *r <= BELLMAN_TOL)
            && self.p1_gap.iter().chain(&self.p2_gap).all(|r| *r <= GAP_TOL)
    }
}

pub fn verify(g: &StochasticGame, eq: &ClaimedEquilibrium, opts: &VerifyOptions) -> VerificationReport {
    let gaps = best_response_gap(g, eq, opts.grid);
    let rollout = (opts.episodes > 0).then(|| {
        let h = default_horizon(g.beta(), g.payoff_bound(), opts.rollout_tol);
        rollout(g, eq, opts.seed, opts.episodes, h)
    });
    VerificationReport {
        bellman_res: bellman_residual(g, eq),
        p1_gap: gaps.p1_gap,
        p2_gap: gaps.p2_gap,
        rollout,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stochgame::guessing_game;

    fn measure(atoms: &[f64], weights: &[f64]) -> DiscreteMeasure {
        DiscreteMeasure::new(atoms.to_vec(), weights.to_vec()).unwrap()
    }

    /// Exact guessing-game equilibrium from its fixed-point relations.
    fn guessing_equilibrium() -> ClaimedEquilibrium {
        let beta = 0.5;
        let (mut v1, mut v2) = (0.0, 0.0);
        for _ in 0..200 {
            let q: f64 = (1.0 + beta * (v1 - v2)) / 2.0;
            let n1 = q * (1.0 - q) + beta * (q * v1 + (1.0 - q) * v2);
            let n2 = -0.25 + beta * (0.75 * v1 + 0.25 * v2);
            v1 = n1;
            v2 = n2;
        }
        let q = (1.0 + beta * (v1 - v2)) / 2.0;
        ClaimedEquilibrium {
            value: vec![v1, v2],
            player1: vec![measure(&[0.0, 1.0], &[1.0 - q, q]), DiscreteMeasure::dirac(0.5)],
            player2: vec![DiscreteMeasure::dirac(q), measure(&[0.0, 1.0], &[1.0 - q, q])],
        }
    }

    #[test]
    fn exact_equilibrium_passes() {
        let g = guessing_game();
        let eq = guessing_equilibrium();
        for r in bellman_residual(&g, &eq) {
            assert!(r < 1e-12);
        }
        let gaps = best_response_gap(&g, &eq, DEFAULT_GRID);
        for x in gaps.p1_gap.iter().chain(&gaps.p2_gap) {
            assert!(*x < 1e-12, "{gaps:?}");
        }
        // player 2's unique myopic best response in state 1 is the mixing weight
        let q = eq.player2[0].atoms()[0];
        assert!((gaps.p2_best[0] - q).abs() < 1e-9);
    }

    #[test]
    fn perturbed_strategies_are_caught() {
        let g = guessing_game();
        let mut eq = guessing_equilibrium();
        eq.player1[1] = DiscreteMeasure::dirac(0.9);
        assert!(bellman_residual(&g, &eq)[1] > 1e-2);

        let mut eq = guessing_equilibrium();
        eq.player2[0] = DiscreteMeasure::dirac(0.0);
        assert!(best_response_gap(&g, &eq, DEFAULT_GRID).p2_gap[0] > 0.1);
    }

    #[test]
    fn horizon_bounds_bias() {
        let h = default_horizon(0.5, 2.0, 1e-4);
        assert!(0.5f64.powi(h as i32) * 2.0 / 0.5 <= 1e-4);
        assert!(0.5f64.powi(h as i32 - 1) * 2.0 / 0.5 > 1e-4);
        assert_eq!(default_horizon(0.0, 2.0, 1e-4), 1);
    }

    #[test]
    fn deterministic_rollout_is_exact() {
        // two states swapping deterministically, payoffs 1 and -1
        let one = BivariatePolynomial::constant(1.0);
        let zero = BivariatePolynomial::zero();
        let g = StochasticGame::with_default_names(
            0.5,
            vec![one.clone(), BivariatePolynomial::constant(-1.0)],
            vec![vec![zero.clone(), one.clone()], vec![one, zero]],
        )
        .unwrap();
        let eq = ClaimedEquilibrium {
            value: vec![0.0, 0.0],
            player1: vec![DiscreteMeasure::dirac(0.3); 2],
            player2: vec![DiscreteMeasure::dirac(0.7); 2],
        };
        let r = rollout(&g, &eq, 1, 50, 10);
        let exact: f64 = (0..10).map(|k| if k % 2 == 0 { 1.0 } else { -1.0 } * 0.5f64.powi(k)).sum();
        assert!((r.per_state[0].mean - exact).abs() < 1e-14);
        assert_eq!(r.per_state[0].stderr, 0.0);
    }

    #[test]
    fn rollout_is_repeatable() {
        let g = guessing_game();
        let eq = guessing_equilibrium();
        let a = rollout(&g, &eq, 42, 2000, 20);
        let b = rollout(&g, &eq, 42, 2000, 20);
        assert_eq!(a, b);
        let c = rollout(&g, &eq, 43, 2000, 20);
        assert_ne!(a.per_state[0].mean, c.per_state[0].mean);
    }
}
