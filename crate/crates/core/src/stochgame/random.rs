//! Random single-controller games whose transitions are valid by
//! construction, for test corpora.
//!
//! Each transition row is a Bernstein mixture `Σ_k b_k(a1) w_k` of
//! probability vectors `w_k`, which is nonnegative on `[0, 1]` and sums to
//! one identically because the Bernstein basis does.

use rand::Rng;

use super::StochasticGame;
use crate::poly::{BivariatePolynomial, Polynomial};

/// Bounds for [`random_single_controller`].
#[derive(Debug, Clone, Copy)]
pub struct RandomGameSpec {
    pub max_states: usize,
    /// Largest degree of the payoff in each player's action and of the
    /// transitions in `a1`.
    pub max_degree: usize,
    pub beta_range: (f64, f64),
}

impl Default for RandomGameSpec {
    fn default() -> Self {
        Self {
            max_states: 3,
            max_degree: 4,
            beta_range: (0.3, 0.7),
        }
    }
}

/// Bernstein basis polynomial `C(d, k) x^k (1 - x)^{d - k}` in monomial form.
pub fn bernstein(d: usize, k: usize) -> Polynomial {
    let mut c = vec![0.0; d + 1];
    let choose = |n: usize, r: usize| -> f64 { (0..r).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64) };
    let lead = choose(d, k);
    for j in k..=d {
        let sign = if (j - k).is_multiple_of(2) { 1.0 } else { -1.0 };
        c[j] = lead * choose(d - k, j - k) * sign;
    }
    Polynomial::new(c)
}

/// Draws a game with payoff coefficients in `[-1, 1]`.
pub fn random_single_controller<R: Rng>(rng: &mut R, spec: &RandomGameSpec) -> StochasticGame {
    let n = rng.random_range(1..=spec.max_states);
    let beta = rng.random_range(spec.beta_range.0..=spec.beta_range.1);
    let payoff = (0..n)
        .map(|_| {
            let d1 = rng.random_range(0..=spec.max_degree);
            let d2 = rng.random_range(1..=spec.max_degree);
            let rows: Vec<Vec<f64>> = (0..=d1)
                .map(|i| (0..=d2).map(|j| if i + j == 0 || rng.random_bool(0.7) { rng.random_range(-1.0..=1.0) } else { 0.0 }).collect())
                .collect();
            BivariatePolynomial::from_rows(&rows)
        })
        .collect();
    let transition = (0..n)
        .map(|_| {
            let d = rng.random_range(0..=spec.max_degree);
            let mut coeffs = vec![vec![0.0; d + 1]; n];
            for k in 0..=d {
                let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0f64)).collect();
                let total: f64 = w.iter().sum();
                let b = bernstein(d, k);
                for (t, wt) in w.iter().enumerate() {
                    for (j, c) in b.coeffs().iter().enumerate() {
                        coeffs[t][j] += wt / total * c;
                    }
                }
            }
            // Absorb rounding so the row sums to one coefficient-wise.
            for j in 0..=d {
                let sum: f64 = coeffs.iter().map(|c| c[j]).sum();
                coeffs[n - 1][j] += if j == 0 { 1.0 } else { 0.0 } - sum;
            }
            coeffs
                .into_iter()
                .map(|c| BivariatePolynomial::from_a1(&Polynomial::new(c)))
                .collect()
        })
        .collect();
    StochasticGame::with_default_names(beta, payoff, transition).expect("shapes match")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stochgame::validate;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bernstein_partition_of_unity() {
        for d in 0..6 {
            for x in [0.0, 0.3, 0.77, 1.0] {
                let s: f64 = (0..=d).map(|k| bernstein(d, k).evaluate(x)).sum();
                assert!((s - 1.0).abs() < 1e-12);
            }
        }
        assert_eq!(bernstein(2, 1).coeffs(), &[0.0, 2.0, -2.0]);
    }

    #[test]
    fn random_games_validate() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let g = random_single_controller(&mut rng, &RandomGameSpec::default());
            let r = validate(&g);
            assert!(r.accepted(), "{:?}", r.issues);
            assert!(g.single_controller());
        }
    }
}
